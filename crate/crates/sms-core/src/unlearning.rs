//! Unlearning algorithms the verification layer is tested against, plus the
//! backdoor baseline.
//!
//! Exact methods: naive retraining and sharded retraining (disjoint shards,
//! only affected shards retrained). Approximate method: gradient ascent on
//! the erased samples' own training loss with small corrective descent steps
//! on retained data — a stand-in that reproduces the dynamics approximate
//! unlearners exhibit (erased-set accuracy collapses while test accuracy is
//! largely preserved); it is not a variational-Bayes unlearner.

use rand::seq::SliceRandom;

use crate::data::{Dataset, EraseRequest, UserPartition};
use crate::error::{Error, Result};
use crate::joint::{
    accuracy, gather_batch, train_joint_loop, Classifier, JointWeights, PrimaryModel, SeededModel,
    TrainReport,
};
use crate::nn::{argmax_row, softmax_rows, SgdConfig};
use crate::rng::{derive_seed, rng_from_seed};
use crate::seeding::{embed_seed, seeded_count, Seed, SeedMask};
use crate::tensor::Tensor;

/// One evaluation point along an unlearning run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub test_acc: f64,
    pub erased_acc: f64,
    pub verifiability: Option<f64>,
    pub unambiguity: Option<f64>,
    pub backdoor_asr: Option<f64>,
}

/// Step-indexed metrics recorded while an unlearning method runs.
#[derive(Debug, Clone, Default)]
pub struct UnlearnTrace {
    pub method: String,
    pub rows: Vec<TraceRow>,
}

impl UnlearnTrace {
    pub fn new(method: impl Into<String>) -> Self {
        UnlearnTrace { method: method.into(), rows: Vec::new() }
    }

    pub fn csv_header() -> &'static str {
        "method,step,test_acc,erased_acc,verifiability,unambiguity,backdoor_asr"
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: &Option<f64>| v.map(|x| format!("{:.6}", x)).unwrap_or_default();
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{},{},{}\n",
                self.method,
                row.step,
                row.test_acc,
                row.erased_acc,
                opt(&row.verifiability),
                opt(&row.unambiguity),
                opt(&row.backdoor_asr),
            ));
        }
        out
    }
}

/// Extra per-method metrics an evaluation hook can attach to trace rows.
#[derive(Debug, Clone, Copy, Default)]
pub struct TraceExtras {
    pub verifiability: Option<f64>,
    pub unambiguity: Option<f64>,
    pub backdoor_asr: Option<f64>,
}

fn complement(len: usize, erased: &[usize]) -> Result<Vec<usize>> {
    let mut keep = vec![true; len];
    for &i in erased {
        if i >= len {
            return Err(Error::Input(format!("erase index {} out of range for {} samples", i, len)));
        }
        keep[i] = false;
    }
    let remaining: Vec<usize> = (0..len).filter(|&i| keep[i]).collect();
    if remaining.is_empty() {
        return Err(Error::Input("cannot erase the entire training set".into()));
    }
    Ok(remaining)
}

/// Gold-standard unlearning: trains a fresh model from scratch on
/// `D \ D_e` under a freshly derived seed. The reduced dataset is built
/// before any training state exists, so erased pixels never influence the
/// result.
pub fn retrain_unlearn(
    train: &Dataset,
    erase: &EraseRequest,
    cfg: &SgdConfig,
    w: &JointWeights,
    test: Option<&Dataset>,
) -> Result<(SeededModel, TrainReport)> {
    let remaining = complement(train.len(), &erase.indices)?;
    let reduced = train.select(&remaining)?;
    let retrain_cfg = cfg.with_seed(derive_seed(cfg.rng_seed, "retrain", erase.user_id as u64));
    let mut model = SeededModel::init(
        reduced.dim(),
        reduced.class_count(),
        derive_seed(retrain_cfg.rng_seed, "init", 0),
    )?;
    let report = train_joint_loop(&mut model, &reduced, test, &retrain_cfg, w)?;
    Ok((model, report))
}

/// Sharded exact unlearning: `k` disjoint shards, each with its own
/// independently trained sub-model.
#[derive(Debug, Clone)]
pub struct ShardedModel {
    pub shards: Vec<SeededModel>,
    /// `assignment[i]` is the shard that owns training sample `i`.
    pub assignment: Vec<usize>,
}

impl ShardedModel {
    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    /// Indices owned by one shard, in ascending order.
    pub fn shard_indices(&self, shard: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == shard)
            .map(|(i, _)| i)
            .collect()
    }

    /// Integrity hash per shard checkpoint.
    pub fn shard_hashes(&self) -> Vec<String> {
        self.shards.iter().map(SeededModel::hash).collect()
    }
}

/// Near-equal random assignment of `n` samples to `k` shards.
pub(crate) fn shard_assignment(n: usize, k: usize, rng_seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(rng_seed);
    order.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut assignment = vec![0usize; n];
    let mut cursor = 0;
    for shard in 0..k {
        let size = base + usize::from(shard < extra);
        for &i in &order[cursor..cursor + size] {
            assignment[i] = shard;
        }
        cursor += size;
    }
    assignment
}

/// Trains `k` sub-models on disjoint random shards of the training set.
pub fn sisa_train(
    train: &Dataset,
    k: usize,
    cfg: &SgdConfig,
    w: &JointWeights,
) -> Result<ShardedModel> {
    if k < 2 {
        return Err(Error::Parameter(format!("shard count must be at least 2, got {}", k)));
    }
    if k > train.len() {
        return Err(Error::Parameter(format!(
            "cannot split {} samples into {} shards",
            train.len(),
            k
        )));
    }
    let assignment = shard_assignment(train.len(), k, derive_seed(cfg.rng_seed, "sisa-assign", 0));
    let mut shards = Vec::with_capacity(k);
    for shard in 0..k {
        let indices: Vec<usize> =
            (0..train.len()).filter(|&i| assignment[i] == shard).collect();
        let sub = train.select(&indices)?;
        let shard_cfg = cfg.with_seed(derive_seed(cfg.rng_seed, "sisa-shard", shard as u64));
        let mut model = SeededModel::init(
            sub.dim(),
            sub.class_count(),
            derive_seed(shard_cfg.rng_seed, "init", 0),
        )?;
        train_joint_loop(&mut model, &sub, None, &shard_cfg, w)?;
        shards.push(model);
    }
    Ok(ShardedModel { shards, assignment })
}

/// Retrains only the shards containing erased indices, from scratch and
/// without them. Untouched shards are carried over bit-identically.
/// Returns the new ensemble and the ids of the retrained shards.
pub fn sisa_unlearn(
    sm: &ShardedModel,
    train: &Dataset,
    erase: &EraseRequest,
    cfg: &SgdConfig,
    w: &JointWeights,
) -> Result<(ShardedModel, Vec<usize>)> {
    for &i in &erase.indices {
        if i >= sm.assignment.len() {
            return Err(Error::Input(format!("erase index {} outside the training set", i)));
        }
    }
    let mut affected: Vec<usize> = erase.indices.iter().map(|&i| sm.assignment[i]).collect();
    affected.sort_unstable();
    affected.dedup();

    let erased: std::collections::BTreeSet<usize> = erase.indices.iter().cloned().collect();
    let mut shards = sm.shards.clone();
    for &shard in &affected {
        let indices: Vec<usize> = sm
            .shard_indices(shard)
            .into_iter()
            .filter(|i| !erased.contains(i))
            .collect();
        if indices.is_empty() {
            return Err(Error::Input(format!(
                "erasing these samples would empty shard {}",
                shard
            )));
        }
        let sub = train.select(&indices)?;
        let shard_cfg = cfg.with_seed(derive_seed(cfg.rng_seed, "sisa-unlearn-shard", shard as u64));
        let mut model = SeededModel::init(
            sub.dim(),
            sub.class_count(),
            derive_seed(shard_cfg.rng_seed, "init", 0),
        )?;
        train_joint_loop(&mut model, &sub, None, &shard_cfg, w)?;
        shards[shard] = model;
    }
    Ok((ShardedModel { shards, assignment: sm.assignment.clone() }, affected))
}

/// Majority vote over per-shard argmax votes; ties go to the class with the
/// largest summed softmax probability among the tied classes.
pub(crate) fn aggregate_votes(
    votes: &[Vec<usize>],
    summed_probs: &Tensor,
    class_count: usize,
) -> Vec<usize> {
    let samples = votes[0].len();
    let mut out = Vec::with_capacity(samples);
    for s in 0..samples {
        let mut counts = vec![0usize; class_count];
        for shard_votes in votes {
            counts[shard_votes[s]] += 1;
        }
        let top = *counts.iter().max().expect("non-empty classes");
        let tied: Vec<usize> = (0..class_count).filter(|&c| counts[c] == top).collect();
        let winner = if tied.len() == 1 {
            tied[0]
        } else {
            let probs = summed_probs.row(s);
            *tied
                .iter()
                .max_by(|&&a, &&b| probs[a].partial_cmp(&probs[b]).unwrap())
                .expect("non-empty tie set")
        };
        out.push(winner);
    }
    out
}

/// Ensemble prediction for a batch.
pub fn sisa_predict(sm: &ShardedModel, batch: &Tensor) -> Result<Vec<usize>> {
    sm.predict_classes(batch)
}

impl Classifier for ShardedModel {
    /// Summed per-shard softmax; the ensemble's tie-break scores.
    fn class_logits(&self, batch: &Tensor) -> Result<Tensor> {
        let mut summed = Tensor::zeros(vec![batch.rows(), self.shards[0].class_count()]);
        for shard in &self.shards {
            let probs = softmax_rows(&shard.class_logits(batch)?);
            for (acc, &p) in summed.data_mut().iter_mut().zip(probs.data()) {
                *acc += p;
            }
        }
        Ok(summed)
    }

    fn predict_classes(&self, batch: &Tensor) -> Result<Vec<usize>> {
        let class_count = self.shards[0].class_count();
        let mut votes = Vec::with_capacity(self.shards.len());
        for shard in &self.shards {
            let logits = shard.class_logits(batch)?;
            votes.push((0..logits.rows()).map(|r| argmax_row(logits.row(r))).collect());
        }
        let summed = self.class_logits(batch)?;
        Ok(aggregate_votes(&votes, &summed, class_count))
    }
}

/// Why a gradient-ascent run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Erased-set accuracy fell to chance level.
    ErasedAtChance,
    /// The step budget ran out first.
    MaxSteps,
    /// Test accuracy fell below half its starting value; the run aborted
    /// and the trace records what happened.
    Diverged,
}

/// Result of a gradient-ascent unlearning run.
#[derive(Debug)]
pub struct AscentOutcome<M> {
    pub model: M,
    pub trace: UnlearnTrace,
    pub stopped: StopReason,
    pub steps_run: usize,
}

impl<M> AscentOutcome<M> {
    pub fn is_aborted(&self) -> bool {
        self.stopped == StopReason::Diverged
    }
}

/// Hyperparameters of the gradient-ascent unlearner.
#[derive(Debug, Clone, Copy)]
pub struct AscentConfig {
    /// Step budget `T`.
    pub max_steps: usize,
    /// Ascent learning rate on the erased samples.
    pub ascent_rate: f64,
    /// Descent learning rate for the corrective pass.
    pub correction_rate: f64,
    /// Fraction of the retained set resampled for correction each step.
    pub retain_fraction: f64,
    /// Minibatch size for both passes.
    pub batch_size: usize,
    /// Full metrics (test accuracy, hook extras) are computed every this
    /// many steps; erased-set accuracy is tracked every step.
    pub eval_every: usize,
    pub rng_seed: u64,
}

impl AscentConfig {
    /// Defaults derived from a training configuration: ascent at half the
    /// training rate, 200 steps, 10% corrective subsample.
    pub fn from_training(cfg: &SgdConfig) -> AscentConfig {
        AscentConfig {
            max_steps: 200,
            ascent_rate: cfg.learning_rate / 2.0,
            correction_rate: cfg.learning_rate,
            retain_fraction: 0.1,
            batch_size: cfg.batch_size,
            eval_every: 1,
            rng_seed: derive_seed(cfg.rng_seed, "ascent", 0),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Parameter("ascent step budget must be at least 1".into()));
        }
        if !(self.ascent_rate > 0.0 && self.correction_rate > 0.0) {
            return Err(Error::Parameter("ascent and correction rates must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.retain_fraction) {
            return Err(Error::Parameter("retain fraction must be in [0,1]".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Parameter("batch size and eval cadence must be positive".into()));
        }
        Ok(())
    }
}

fn batch_accuracy(model: &impl Classifier, images: &Tensor, labels: &[usize]) -> Result<f64> {
    let preds = model.predict_classes(images)?;
    Ok(preds.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64)
}

/// The shared ascent/correct loop. `step` applies one SGD step at the given
/// signed learning rate (negative ascends).
fn run_gradient_ascent<M: Classifier>(
    mut model: M,
    method: &str,
    erased_images: &Tensor,
    erased_labels: &[usize],
    retained: &Dataset,
    test: &Dataset,
    cfg: &AscentConfig,
    mut step: impl FnMut(&mut M, &Tensor, &[usize], f64) -> Result<()>,
    mut extras: impl FnMut(&M) -> Result<TraceExtras>,
) -> Result<AscentOutcome<M>> {
    cfg.validate()?;
    if erased_images.rows() == 0 {
        return Err(Error::Input("gradient-ascent unlearning needs a non-empty erased set".into()));
    }
    if erased_labels.len() != erased_images.rows() {
        return Err(Error::Input("erased labels must align with erased images".into()));
    }

    let chance = 1.0 / retained.class_count() as f64;
    let pre_test_acc = accuracy(&model, test)?;
    let mut rng = rng_from_seed(cfg.rng_seed);
    let retain_count = ((cfg.retain_fraction * retained.len() as f64).ceil() as usize)
        .clamp(1, retained.len());
    let erased_rows: Vec<usize> = (0..erased_images.rows()).collect();

    let mut trace = UnlearnTrace::new(method);
    let mut record = |model: &M, step_idx: usize, erased_acc: f64, trace: &mut UnlearnTrace| -> Result<f64> {
        let test_acc = accuracy(model, test)?;
        let extra = extras(model)?;
        trace.rows.push(TraceRow {
            step: step_idx,
            test_acc,
            erased_acc,
            verifiability: extra.verifiability,
            unambiguity: extra.unambiguity,
            backdoor_asr: extra.backdoor_asr,
        });
        Ok(test_acc)
    };

    let mut stopped = StopReason::MaxSteps;
    let mut steps_run = 0;
    for step_idx in 1..=cfg.max_steps {
        steps_run = step_idx;
        // Ascend on the erased samples.
        for chunk in erased_rows.chunks(cfg.batch_size) {
            let mut data = Vec::with_capacity(chunk.len() * erased_images.cols());
            let mut labels = Vec::with_capacity(chunk.len());
            for &r in chunk {
                data.extend_from_slice(erased_images.row(r));
                labels.push(erased_labels[r]);
            }
            let images = Tensor::new(vec![chunk.len(), erased_images.cols()], data)?;
            step(&mut model, &images, &labels, -cfg.ascent_rate)?;
        }
        // Corrective descent on a fresh retained subsample.
        let mut pool: Vec<usize> = (0..retained.len()).collect();
        pool.shuffle(&mut rng);
        pool.truncate(retain_count);
        for chunk in pool.chunks(cfg.batch_size) {
            let (images, labels) = gather_batch(retained, chunk);
            step(&mut model, &images, &labels, cfg.correction_rate)?;
        }

        let erased_acc = batch_accuracy(&model, erased_images, erased_labels)?;
        let at_eval_point = step_idx % cfg.eval_every == 0;
        let converged = erased_acc <= chance;
        if at_eval_point || converged || step_idx == cfg.max_steps {
            let test_acc = record(&model, step_idx, erased_acc, &mut trace)?;
            if test_acc < 0.5 * pre_test_acc {
                stopped = StopReason::Diverged;
                break;
            }
        }
        if converged {
            stopped = StopReason::ErasedAtChance;
            break;
        }
    }

    Ok(AscentOutcome { model, trace, stopped, steps_run })
}

/// Gradient-ascent unlearning of a jointly trained model: ascends the joint
/// objective on the erased seeded samples with corrective descent on
/// retained data.
pub fn approx_unlearn(
    model: SeededModel,
    w: &JointWeights,
    erased_images: &Tensor,
    erased_labels: &[usize],
    retained: &Dataset,
    test: &Dataset,
    cfg: &AscentConfig,
    extras: impl FnMut(&SeededModel) -> Result<TraceExtras>,
) -> Result<AscentOutcome<SeededModel>> {
    let weights = *w;
    run_gradient_ascent(
        model,
        "approx",
        erased_images,
        erased_labels,
        retained,
        test,
        cfg,
        move |m, images, labels, lr| m.sgd_batch(images, labels, &weights, lr).map(|_| ()),
        extras,
    )
}

/// Gradient-ascent unlearning of a primary-only model (the backdoor
/// baseline's model): ascends the classification loss alone.
pub fn approx_unlearn_primary(
    model: PrimaryModel,
    erased_images: &Tensor,
    erased_labels: &[usize],
    retained: &Dataset,
    test: &Dataset,
    cfg: &AscentConfig,
    extras: impl FnMut(&PrimaryModel) -> Result<TraceExtras>,
) -> Result<AscentOutcome<PrimaryModel>> {
    run_gradient_ascent(
        model,
        "approx",
        erased_images,
        erased_labels,
        retained,
        test,
        cfg,
        |m, images, labels, lr| m.sgd_batch(images, labels, lr).map(|_| ()),
        extras,
    )
}

/// Backdoor baseline specification: a trigger blended like a seed, a target
/// label, and the rate of poisoned copies.
#[derive(Debug, Clone)]
pub struct BackdoorSpec {
    pub trigger: Seed,
    pub mask: SeedMask,
    pub target_label: usize,
    /// Fraction of the user's samples copied, triggered, and appended.
    pub rate: f64,
}

/// Appends backdoored copies of a user's samples: each copy carries the
/// trigger and the flipped target label. Unlike seeding, this grows the
/// dataset. Returns the augmented dataset and the new rows' indices.
pub fn mib_prepare(
    train: &Dataset,
    part: &UserPartition,
    spec: &BackdoorSpec,
    rng_seed: u64,
) -> Result<(Dataset, Vec<usize>)> {
    if spec.rate <= 0.0 {
        return Err(Error::Parameter("backdoor rate must be positive".into()));
    }
    if spec.target_label >= train.class_count() {
        return Err(Error::Input(format!(
            "target label {} out of range for {} classes",
            spec.target_label,
            train.class_count()
        )));
    }
    let count = seeded_count(spec.rate, part.len());
    let mut order = part.indices.clone();
    let mut rng = rng_from_seed(rng_seed);
    order.shuffle(&mut rng);
    let mut chosen: Vec<usize> = order.into_iter().take(count).collect();
    chosen.sort_unstable();

    let mut rows = Vec::with_capacity(count);
    for &i in &chosen {
        let triggered = embed_seed(&train.images().row_tensor(i), &spec.trigger, &spec.mask)?;
        rows.push((triggered.data().to_vec(), spec.target_label));
    }
    let augmented = train.with_appended(&rows)?;
    let backdoor_indices: Vec<usize> = (train.len()..train.len() + count).collect();
    Ok((augmented, backdoor_indices))
}

/// Applies a trigger to every row of a batch; used to build triggered
/// query sets.
pub fn apply_trigger(images: &Tensor, trigger: &Seed, mask: &SeedMask) -> Result<Tensor> {
    let d = images.cols();
    let mut out = Vec::with_capacity(images.rows() * d);
    for r in 0..images.rows() {
        out.extend_from_slice(embed_seed(&images.row_tensor(r), trigger, mask)?.data());
    }
    Tensor::new(vec![images.rows(), d], out)
}

/// Fraction of triggered inputs the model classifies as the target label.
pub fn backdoor_asr(
    model: &impl Classifier,
    triggered: &Tensor,
    target_label: usize,
) -> Result<f64> {
    if triggered.rows() == 0 {
        return Err(Error::Input("attack success rate over zero inputs".into()));
    }
    let preds = model.predict_classes(triggered)?;
    Ok(preds.iter().filter(|&&p| p == target_label).count() as f64 / preds.len() as f64)
}

#[cfg(test)]
mod tests;
