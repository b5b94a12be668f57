//! User-side verification: the paired verification dataset, the verifier
//! network, and the verification metrics.
//!
//! The verifier is trained on raw (clean, seeded) sample pairs and applied
//! to the seeded model's reconstructions. It never sees the served model
//! during training; `train_verifier` deliberately takes no model argument.

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::joint::{Classifier, SeededModel};
use crate::nn::{argmax_row, cross_entropy_loss, softmax_rows, Activation, Mlp, SgdConfig};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::Tensor;

/// Balanced set of (clean, 0) and (seeded, 1) rows, interleaved so any
/// even-length suffix is stratified.
#[derive(Debug, Clone)]
pub struct VerificationDataset {
    inputs: Tensor,
    labels: Vec<usize>,
    side: usize,
}

impl VerificationDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Builds the verification dataset from aligned clean/seeded counterparts.
pub fn build_verification_set(
    clean: &Tensor,
    seeded: &Tensor,
    side: usize,
) -> Result<VerificationDataset> {
    if clean.rows() == 0 {
        return Err(Error::Input("verification set needs at least one pair".into()));
    }
    if clean.rows() != seeded.rows() || clean.cols() != seeded.cols() {
        return Err(Error::Input(format!(
            "clean {}x{} and seeded {}x{} rows must align",
            clean.rows(),
            clean.cols(),
            seeded.rows(),
            seeded.cols()
        )));
    }
    if clean.cols() != side * side {
        return Err(Error::dimension(
            "build_verification_set",
            format!("{} pixels per row, expected {}²", clean.cols(), side),
        ));
    }
    let k = clean.rows();
    let d = clean.cols();
    let mut data = Vec::with_capacity(2 * k * d);
    let mut labels = Vec::with_capacity(2 * k);
    for i in 0..k {
        data.extend_from_slice(clean.row(i));
        labels.push(0);
        data.extend_from_slice(seeded.row(i));
        labels.push(1);
    }
    Ok(VerificationDataset {
        inputs: Tensor::new(vec![2 * k, d], data)?,
        labels,
        side,
    })
}

/// Options for verifier training.
#[derive(Debug, Clone, Copy)]
pub struct VerifierOptions {
    /// Decision threshold τ on P(seed).
    pub threshold: f64,
    /// Held-out accuracy the verifier must reach.
    pub accuracy_floor: f64,
    /// Augment training positives with Gaussian-blurred copies (σ = 0.5 px)
    /// to narrow the gap between raw training pairs and the blurrier
    /// reconstructions queried later. Off by default.
    pub blur_positives: bool,
}

impl Default for VerifierOptions {
    fn default() -> Self {
        VerifierOptions { threshold: 0.5, accuracy_floor: 0.95, blur_positives: false }
    }
}

/// A user's binary seed detector: 5 dense layers ending in 2 logits, plus a
/// decision threshold τ.
#[derive(Debug, Clone)]
pub struct VerifierModel {
    net: Mlp,
    pub user_id: usize,
    pub threshold: f64,
}

impl VerifierModel {
    pub fn net(&self) -> &Mlp {
        &self.net
    }

    /// P(seed) per input row. Inputs are whatever the caller wants checked;
    /// unlearning verification feeds reconstructions here.
    pub fn seed_probabilities(&self, inputs: &Tensor) -> Result<Vec<f64>> {
        let logits = self.net.predict(inputs)?;
        let probs = softmax_rows(&logits);
        Ok((0..probs.rows()).map(|r| probs.row(r)[1]).collect())
    }
}

/// Hyperparameters the verifier trains with unless the caller overrides
/// them: 50 epochs of minibatch-16 SGD at η = 0.01.
pub fn default_verifier_config(rng_seed: u64) -> SgdConfig {
    SgdConfig::new(0.01, 16, 50, rng_seed).expect("static values are valid")
}

/// Trains the verifier on the paired dataset and checks it reaches the
/// accuracy floor on a held-out quarter. Fails with a calibration error
/// otherwise.
pub fn train_verifier(
    dv: &VerificationDataset,
    cfg: &SgdConfig,
    user_id: usize,
) -> Result<VerifierModel> {
    train_verifier_with(dv, cfg, user_id, VerifierOptions::default())
}

pub fn train_verifier_with(
    dv: &VerificationDataset,
    cfg: &SgdConfig,
    user_id: usize,
    options: VerifierOptions,
) -> Result<VerifierModel> {
    let n = dv.len();
    if n < 2 {
        return Err(Error::Input("verifier needs at least one clean/seeded pair".into()));
    }
    let positives = dv.labels.iter().filter(|&&l| l == 1).count();
    if positives * 2 != n {
        return Err(Error::Input(format!(
            "verification set unbalanced: {} positives of {} rows",
            positives, n
        )));
    }
    if !(0.0..1.0).contains(&options.threshold) || options.threshold == 0.0 {
        return Err(Error::Parameter(format!(
            "threshold must be in (0,1), got {}",
            options.threshold
        )));
    }

    // Held-out quarter: taken from the end (the interleaving stratifies it).
    // Tiny sets train and evaluate on everything.
    let holdout_len = if n >= 8 { (n / 4) & !1 } else { 0 };
    let train_len = n - holdout_len;
    let d = dv.inputs.cols();

    let mut train_rows: Vec<usize> = (0..train_len).collect();
    let mut train_inputs = Vec::new();
    let mut train_labels = Vec::new();
    for &i in &train_rows {
        train_inputs.extend_from_slice(dv.inputs.row(i));
        train_labels.push(dv.labels[i]);
    }
    if options.blur_positives {
        for &i in &train_rows {
            if dv.labels[i] == 1 {
                train_inputs.extend_from_slice(&gaussian_blur(dv.inputs.row(i), dv.side));
                train_labels.push(1);
            }
        }
    }
    let train_count = train_labels.len();
    let train_inputs = Tensor::new(vec![train_count, d], train_inputs)?;
    train_rows = (0..train_count).collect();

    let mut rng = rng_from_seed(derive_seed(cfg.rng_seed, "verifier", user_id as u64));
    let mut net = Mlp::new(
        &[d, 256, 128, 64, 32, 2],
        &[
            Activation::Relu,
            Activation::Relu,
            Activation::Relu,
            Activation::Relu,
            Activation::Identity,
        ],
        &mut rng,
    )?;

    for _ in 0..cfg.epochs {
        train_rows.shuffle(&mut rng);
        for chunk in train_rows.chunks(cfg.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len() * d);
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                batch.extend_from_slice(train_inputs.row(i));
                labels.push(train_labels[i]);
            }
            let batch = Tensor::new(vec![chunk.len(), d], batch)?;
            let logits = net.forward(&batch)?;
            let (_, grad) = cross_entropy_loss(&logits, &labels)?;
            net.backward(&grad)?;
            net.sgd_step(cfg.learning_rate)?;
        }
    }

    // Floor check on the held-out quarter (or everything, for tiny sets).
    let (eval_from, eval_to) = if holdout_len > 0 { (train_len, n) } else { (0, n) };
    let mut correct = 0;
    let mut total = 0;
    for i in eval_from..eval_to {
        let row = Tensor::new(vec![1, d], dv.inputs.row(i).to_vec())?;
        let logits = net.predict(&row)?;
        if argmax_row(logits.row(0)) == dv.labels[i] {
            correct += 1;
        }
        total += 1;
    }
    let held_out_acc = correct as f64 / total as f64;
    if held_out_acc < options.accuracy_floor {
        return Err(Error::Calibration(format!(
            "verifier reached {:.3} held-out accuracy, below the {:.2} floor; \
             seeded and clean samples may be indistinguishable — consider a larger \
             seed embedding rate or more active seed elements",
            held_out_acc, options.accuracy_floor
        )));
    }

    Ok(VerifierModel { net, user_id, threshold: options.threshold })
}

/// 3×3 Gaussian blur with σ = 0.5 px over the image grid.
fn gaussian_blur(pixels: &[f64], side: usize) -> Vec<f64> {
    let sigma2 = 0.25;
    let mut kernel = [[0.0; 3]; 3];
    let mut sum = 0.0;
    for (dy, row) in kernel.iter_mut().enumerate() {
        for (dx, k) in row.iter_mut().enumerate() {
            let (fx, fy) = (dx as f64 - 1.0, dy as f64 - 1.0);
            *k = (-(fx * fx + fy * fy) / (2.0 * sigma2)).exp();
            sum += *k;
        }
    }
    let mut out = vec![0.0; pixels.len()];
    for y in 0..side {
        for x in 0..side {
            let mut acc = 0.0;
            for dy in 0..3usize {
                for dx in 0..3usize {
                    let sy = y as i64 + dy as i64 - 1;
                    let sx = x as i64 + dx as i64 - 1;
                    let v = if sy >= 0 && sy < side as i64 && sx >= 0 && sx < side as i64 {
                        pixels[sy as usize * side + sx as usize]
                    } else {
                        0.0
                    };
                    acc += kernel[dy][dx] * v;
                }
            }
            out[y * side + x] = acc / sum;
        }
    }
    out
}

/// Verifies one query: feeds the sample through the served model, applies
/// the verifier to the reconstruction, and thresholds P(seed) at τ.
pub fn verify_one(v: &VerifierModel, model: &SeededModel, query: &Tensor) -> Result<bool> {
    let row = Tensor::new(vec![1, query.len()], query.data().to_vec())?;
    let recon = model.reconstruct(&row)?;
    Ok(v.seed_probabilities(&recon)?[0] > v.threshold)
}

/// Batched verification verdicts over query rows.
pub fn verify_batch(v: &VerifierModel, model: &SeededModel, queries: &Tensor) -> Result<Vec<bool>> {
    let recon = model.reconstruct(queries)?;
    Ok(v.seed_probabilities(&recon)?
        .into_iter()
        .map(|p| p > v.threshold)
        .collect())
}

/// Fraction of seeded queries the verifier asserts are present in the model.
pub fn verifiability(v: &VerifierModel, model: &SeededModel, queries: &Tensor) -> Result<f64> {
    if queries.rows() == 0 {
        return Err(Error::Input("verifiability over zero queries".into()));
    }
    let bits = verify_batch(v, model, queries)?;
    Ok(bits.iter().filter(|&&b| b).count() as f64 / bits.len() as f64)
}

/// Fraction of queries carrying *other* seeds that the verifier correctly
/// rejects.
pub fn unambiguity(v: &VerifierModel, model: &SeededModel, alt_queries: &Tensor) -> Result<f64> {
    if alt_queries.rows() == 0 {
        return Err(Error::Input("unambiguity over zero queries".into()));
    }
    let bits = verify_batch(v, model, alt_queries)?;
    Ok(bits.iter().filter(|&&b| !b).count() as f64 / bits.len() as f64)
}

/// Max-softmax confidence per sample.
fn confidences(model: &impl Classifier, ds: &Dataset) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ds.len());
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(256) {
        let (batch, _) = crate::joint::gather_batch(ds, chunk);
        let probs = softmax_rows(&model.class_logits(&batch)?);
        for r in 0..probs.rows() {
            out.push(probs.row(r).iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
    }
    Ok(out)
}

/// Confidence-threshold membership inference: picks the threshold on a
/// calibration half and reports balanced accuracy on the held-out half.
/// Chance level is 0.5.
pub fn mia_score(model: &impl Classifier, members: &Dataset, non_members: &Dataset) -> Result<f64> {
    if members.is_empty() || non_members.is_empty() {
        return Err(Error::Input("membership inference needs non-empty sets".into()));
    }
    let member_conf = confidences(model, members)?;
    let non_member_conf = confidences(model, non_members)?;
    Ok(mia_score_from_confidences(&member_conf, &non_member_conf))
}

/// Threshold attack on raw confidence values; exposed for direct testing.
pub fn mia_score_from_confidences(members: &[f64], non_members: &[f64]) -> f64 {
    let split = |v: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mid = v.len().div_ceil(2);
        (v[..mid].to_vec(), v[mid..].to_vec())
    };
    let (cal_m, eval_m) = split(members);
    let (cal_n, eval_n) = split(non_members);
    // Degenerate halves fall back to scoring on the calibration side.
    let (eval_m, eval_n) = if eval_m.is_empty() || eval_n.is_empty() {
        (cal_m.clone(), cal_n.clone())
    } else {
        (eval_m, eval_n)
    };

    let balanced = |threshold: f64, m: &[f64], n: &[f64]| -> f64 {
        let tpr = m.iter().filter(|&&c| c >= threshold).count() as f64 / m.len() as f64;
        let tnr = n.iter().filter(|&&c| c < threshold).count() as f64 / n.len() as f64;
        (tpr + tnr) / 2.0
    };

    let mut candidates: Vec<f64> = cal_m.iter().chain(&cal_n).cloned().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let mut best_threshold = 0.0;
    let mut best = f64::NEG_INFINITY;
    for &t in &candidates {
        let score = balanced(t, &cal_m, &cal_n);
        if score > best {
            best = score;
            best_threshold = t;
        }
    }
    balanced(best_threshold, &eval_m, &eval_n)
}

/// Pipeline phase a metric row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    PreUnlearn,
    PostUnlearn,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phase::PreUnlearn => write!(f, "pre_unlearn"),
            Phase::PostUnlearn => write!(f, "post_unlearn"),
        }
    }
}

/// One verification metrics row.
#[derive(Debug, Clone)]
pub struct VerificationOutcome {
    pub phase: Phase,
    pub method: String,
    pub verifiability: Option<f64>,
    pub unambiguity: Option<f64>,
    pub mia: Option<f64>,
    pub accuracy: f64,
}

impl VerificationOutcome {
    pub fn csv_header() -> &'static str {
        "phase,method,verifiability,unambiguity,mia,accuracy"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: &Option<f64>| v.map(|x| format!("{:.6}", x)).unwrap_or_default();
        format!(
            "{},{},{},{},{},{:.6}",
            self.phase,
            self.method,
            opt(&self.verifiability),
            opt(&self.unambiguity),
            opt(&self.mia),
            self.accuracy
        )
    }
}
