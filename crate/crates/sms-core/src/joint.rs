//! Joint training of the seeded model: one shared encoder feeding a
//! classifier head (the primary task) and a decoder head (the
//! self-supervised seeding task), optimized together as
//! `α_p · L_primary + α_s · L_self`.
//!
//! The reconstruction target is the possibly-seeded input itself, which is
//! what lets seed patterns survive into the decoder's outputs where a
//! verifier can find them.

use std::time::Instant;

use byteorder::{LittleEndian, WriteBytesExt};

use crate::checkpoint::{mlp_from_bytes, mlp_to_bytes};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy_loss, mse_loss, Activation, Mlp, SgdConfig};
use crate::rng::{derive_seed, rng_from_seed, sha256_hex};
use crate::tensor::Tensor;

/// Weights of the two objectives. Both must be nonnegative and not both
/// zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointWeights {
    pub alpha_p: f64,
    pub alpha_s: f64,
}

impl JointWeights {
    pub fn new(alpha_p: f64, alpha_s: f64) -> Result<Self> {
        if alpha_p < 0.0 || alpha_s < 0.0 || !(alpha_p + alpha_s).is_finite() {
            return Err(Error::Parameter(format!(
                "objective weights must be nonnegative, got ({}, {})",
                alpha_p, alpha_s
            )));
        }
        if alpha_p + alpha_s == 0.0 {
            return Err(Error::Parameter("objective weights cannot both be zero".into()));
        }
        Ok(JointWeights { alpha_p, alpha_s })
    }
}

impl Default for JointWeights {
    fn default() -> Self {
        JointWeights { alpha_p: 1.0, alpha_s: 1.0 }
    }
}

/// Anything that classifies image batches. Gives the evaluation helpers one
/// surface over single models and sharded ensembles.
pub trait Classifier {
    /// Raw class scores, one row per sample.
    fn class_logits(&self, batch: &Tensor) -> Result<Tensor>;

    /// Predicted class per sample; ensembles override this with their own
    /// aggregation rule.
    fn predict_classes(&self, batch: &Tensor) -> Result<Vec<usize>> {
        let logits = self.class_logits(batch)?;
        Ok((0..logits.rows())
            .map(|r| crate::nn::argmax_row(logits.row(r)))
            .collect())
    }
}

/// Shared encoder plus classifier and decoder heads.
#[derive(Debug, Clone)]
pub struct SeededModel {
    encoder: Mlp,
    classifier: Mlp,
    decoder: Mlp,
}

impl SeededModel {
    /// Default desk-scale topology: encoder `d → 128 → 64` (relu), classifier
    /// `64 → 32 → C`, decoder `64 → 128 → d` with a sigmoid output so
    /// reconstructions stay in `(0,1)`.
    pub fn init(input_dim: usize, class_count: usize, rng_seed: u64) -> Result<SeededModel> {
        let mut rng = rng_from_seed(rng_seed);
        let encoder = Mlp::new(&[input_dim, 128, 64], &[Activation::Relu, Activation::Relu], &mut rng)?;
        let classifier = Mlp::new(
            &[64, 32, class_count],
            &[Activation::Relu, Activation::Identity],
            &mut rng,
        )?;
        let decoder = Mlp::new(
            &[64, 128, input_dim],
            &[Activation::Relu, Activation::Sigmoid],
            &mut rng,
        )?;
        SeededModel::from_parts(encoder, classifier, decoder)
    }

    /// Assembles a model from explicit networks, checking that the heads
    /// chain onto the encoder and the decoder maps back to the input space.
    pub fn from_parts(encoder: Mlp, classifier: Mlp, decoder: Mlp) -> Result<SeededModel> {
        let latent = encoder.output_dim();
        if classifier.input_dim() != latent || decoder.input_dim() != latent {
            return Err(Error::dimension(
                "SeededModel",
                format!(
                    "encoder latent {} vs classifier input {} / decoder input {}",
                    latent,
                    classifier.input_dim(),
                    decoder.input_dim()
                ),
            ));
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(Error::dimension(
                "SeededModel",
                format!(
                    "decoder output {} must equal encoder input {}",
                    decoder.output_dim(),
                    encoder.input_dim()
                ),
            ));
        }
        Ok(SeededModel { encoder, classifier, decoder })
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn classifier(&self) -> &Mlp {
        &self.classifier
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn encoder_mut(&mut self) -> &mut Mlp {
        &mut self.encoder
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn class_count(&self) -> usize {
        self.classifier.output_dim()
    }

    /// Evaluates both heads from one shared encoder pass, caching state for
    /// a following backward.
    pub fn forward(&mut self, batch: &Tensor) -> Result<(Tensor, Tensor)> {
        let latent = self.encoder.forward(batch)?;
        let logits = self.classifier.forward(&latent)?;
        let recon = self.decoder.forward(&latent)?;
        Ok((logits, recon))
    }

    /// Both heads without touching training caches.
    pub fn predict(&self, batch: &Tensor) -> Result<(Tensor, Tensor)> {
        let latent = self.encoder.predict(batch)?;
        Ok((self.classifier.predict(&latent)?, self.decoder.predict(&latent)?))
    }

    /// The self-supervised head's reconstruction of a batch; this is the
    /// surface verifiers inspect.
    pub fn reconstruct(&self, batch: &Tensor) -> Result<Tensor> {
        let latent = self.encoder.predict(batch)?;
        self.decoder.predict(&latent)
    }

    /// Forward, joint loss, and backward; gradients are left in the layers
    /// for inspection or a following `apply_step`. Returns
    /// `(primary, self)` loss components.
    pub fn compute_grads(
        &mut self,
        images: &Tensor,
        labels: &[usize],
        w: &JointWeights,
    ) -> Result<(f64, f64)> {
        let (logits, recon) = self.forward(images)?;
        let (primary, mut grad_logits) = cross_entropy_loss(&logits, labels)?;
        let (self_loss, mut grad_recon) = mse_loss(&recon, images)?;
        for g in grad_logits.data_mut() {
            *g *= w.alpha_p;
        }
        for g in grad_recon.data_mut() {
            *g *= w.alpha_s;
        }
        let from_classifier = self.classifier.backward(&grad_logits)?;
        let from_decoder = self.decoder.backward(&grad_recon)?;
        let mut combined = from_classifier;
        for (c, d) in combined.data_mut().iter_mut().zip(from_decoder.data()) {
            *c += d;
        }
        self.encoder.backward(&combined)?;
        Ok((primary, self_loss))
    }

    /// SGD update over all three networks. A negative learning rate ascends
    /// instead of descending, which is how the approximate unlearner drives
    /// forgetting.
    pub fn apply_step(&mut self, learning_rate: f64) -> Result<()> {
        self.encoder.sgd_step(learning_rate)?;
        self.classifier.sgd_step(learning_rate)?;
        self.decoder.sgd_step(learning_rate)?;
        Ok(())
    }

    /// One joint SGD step on a minibatch; returns the loss components.
    pub fn sgd_batch(
        &mut self,
        images: &Tensor,
        labels: &[usize],
        w: &JointWeights,
        learning_rate: f64,
    ) -> Result<(f64, f64)> {
        let losses = self.compute_grads(images, labels, w)?;
        self.apply_step(learning_rate)?;
        Ok(losses)
    }

    /// Length-prefixed concatenation of the three network checkpoints.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for part in [&self.encoder, &self.classifier, &self.decoder] {
            let bytes = mlp_to_bytes(part);
            out.write_u32::<LittleEndian>(bytes.len() as u32).expect("vec write");
            out.extend_from_slice(&bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SeededModel> {
        let mut parts = Vec::with_capacity(3);
        let mut cursor = 0usize;
        for _ in 0..3 {
            if bytes.len() < cursor + 4 {
                return Err(Error::format(cursor as u64, "truncated model bundle"));
            }
            let len = u32::from_le_bytes(bytes[cursor..cursor + 4].try_into().unwrap()) as usize;
            cursor += 4;
            if bytes.len() < cursor + len {
                return Err(Error::format(cursor as u64, "truncated model bundle part"));
            }
            parts.push(mlp_from_bytes(&bytes[cursor..cursor + len])?);
            cursor += len;
        }
        if cursor != bytes.len() {
            return Err(Error::format(cursor as u64, "trailing bytes in model bundle"));
        }
        let mut it = parts.into_iter();
        SeededModel::from_parts(it.next().unwrap(), it.next().unwrap(), it.next().unwrap())
    }

    /// Integrity hash of the serialized model.
    pub fn hash(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

impl Classifier for SeededModel {
    fn class_logits(&self, batch: &Tensor) -> Result<Tensor> {
        let latent = self.encoder.predict(batch)?;
        self.classifier.predict(&latent)
    }
}

/// Encoder plus classifier only: the baseline trained solely for the
/// primary task.
#[derive(Debug, Clone)]
pub struct PrimaryModel {
    encoder: Mlp,
    classifier: Mlp,
}

impl PrimaryModel {
    pub fn init(input_dim: usize, class_count: usize, rng_seed: u64) -> Result<PrimaryModel> {
        let mut rng = rng_from_seed(rng_seed);
        let encoder = Mlp::new(&[input_dim, 128, 64], &[Activation::Relu, Activation::Relu], &mut rng)?;
        let classifier = Mlp::new(
            &[64, 32, class_count],
            &[Activation::Relu, Activation::Identity],
            &mut rng,
        )?;
        Ok(PrimaryModel { encoder, classifier })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn sgd_batch(&mut self, images: &Tensor, labels: &[usize], learning_rate: f64) -> Result<f64> {
        let latent = self.encoder.forward(images)?;
        let logits = self.classifier.forward(&latent)?;
        let (loss, grad_logits) = cross_entropy_loss(&logits, labels)?;
        let from_classifier = self.classifier.backward(&grad_logits)?;
        self.encoder.backward(&from_classifier)?;
        self.encoder.sgd_step(learning_rate)?;
        self.classifier.sgd_step(learning_rate)?;
        Ok(loss)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for part in [&self.encoder, &self.classifier] {
            let bytes = mlp_to_bytes(part);
            out.write_u32::<LittleEndian>(bytes.len() as u32).expect("vec write");
            out.extend_from_slice(&bytes);
        }
        out
    }

    pub fn hash(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

impl Classifier for PrimaryModel {
    fn class_logits(&self, batch: &Tensor) -> Result<Tensor> {
        let latent = self.encoder.predict(batch)?;
        self.classifier.predict(&latent)
    }
}

/// Per-epoch loss traces and timing of one training run.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Mean primary-task loss per epoch.
    pub primary_loss: Vec<f64>,
    /// Mean self-supervised loss per epoch; empty for primary-only runs.
    pub self_loss: Vec<f64>,
    /// Wall-clock seconds per epoch.
    pub epoch_seconds: Vec<f64>,
    /// Accuracy on the held-out set, when one was supplied.
    pub test_accuracy: Option<f64>,
    /// Mean warm per-batch seconds times total batch count; the
    /// noise-resistant runtime figure used in comparisons.
    pub runtime_estimate_secs: f64,
}

impl TrainReport {
    /// CSV with columns `epoch,primary_loss,self_loss,seconds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,primary_loss,self_loss,seconds\n");
        for e in 0..self.primary_loss.len() {
            let self_loss = self
                .self_loss
                .get(e)
                .map(|v| format!("{:.6}", v))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{:.6},{},{:.6}\n",
                e + 1,
                self.primary_loss[e],
                self_loss,
                self.epoch_seconds[e]
            ));
        }
        out
    }
}

/// The combined objective `α_p · L_primary + α_s · L_self` and its parts.
pub fn joint_loss(
    logits: &Tensor,
    labels: &[usize],
    recon: &Tensor,
    inputs: &Tensor,
    w: &JointWeights,
) -> Result<(f64, f64, f64)> {
    let (primary, _) = cross_entropy_loss(logits, labels)?;
    let (self_loss, _) = mse_loss(recon, inputs)?;
    Ok((w.alpha_p * primary + w.alpha_s * self_loss, primary, self_loss))
}

/// Copies the given rows of a dataset into a batch tensor plus labels.
pub(crate) fn gather_batch(ds: &Dataset, indices: &[usize]) -> (Tensor, Vec<usize>) {
    let d = ds.dim();
    let mut data = Vec::with_capacity(indices.len() * d);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        data.extend_from_slice(ds.image(i));
        labels.push(ds.label(i));
    }
    (
        Tensor::new(vec![indices.len(), d], data).expect("consistent dims"),
        labels,
    )
}

/// Shuffled minibatch schedule for one epoch; the final short batch is used
/// as-is.
pub(crate) fn epoch_batches(
    order: &mut Vec<usize>,
    rng: &mut crate::rng::Rng,
    batch_size: usize,
) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Fraction of a dataset the classifier labels correctly.
pub fn accuracy(model: &impl Classifier, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Input("accuracy over an empty dataset".into()));
    }
    let mut correct = 0usize;
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(256) {
        let (batch, labels) = gather_batch(ds, chunk);
        let preds = model.predict_classes(&batch)?;
        correct += preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Number of warm batches whose mean duration feeds the runtime estimate.
const WARM_BATCHES: usize = 20;
/// Cold batches skipped before the warm window starts.
const WARMUP_SKIP: usize = 3;

fn runtime_estimate(batch_seconds: &[f64], total_batches: usize) -> f64 {
    if batch_seconds.is_empty() {
        return 0.0;
    }
    let skip = WARMUP_SKIP.min(batch_seconds.len() - 1);
    let warm = &batch_seconds[skip..(skip + WARM_BATCHES).min(batch_seconds.len())];
    let mean = warm.iter().sum::<f64>() / warm.len() as f64;
    mean * total_batches as f64
}

/// Trains a seeded model with shuffled minibatch SGD on the joint objective.
/// The self-supervised target of every sample is the sample itself.
pub fn train_joint(
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &SgdConfig,
    w: &JointWeights,
) -> Result<(SeededModel, TrainReport)> {
    if train.is_empty() {
        return Err(Error::Input("training dataset is empty".into()));
    }
    let mut model = SeededModel::init(
        train.dim(),
        train.class_count(),
        derive_seed(cfg.rng_seed, "init", 0),
    )?;
    let report = train_joint_loop(&mut model, train, test, cfg, w)?;
    Ok((model, report))
}

/// The joint loop on a caller-supplied model; retraining benchmarks reuse it.
pub(crate) fn train_joint_loop(
    model: &mut SeededModel,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &SgdConfig,
    w: &JointWeights,
) -> Result<TrainReport> {
    let mut rng = rng_from_seed(derive_seed(cfg.rng_seed, "shuffle", 0));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport::default();
    let mut batch_seconds = Vec::new();
    let batches_per_epoch = train.len().div_ceil(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        let epoch_start = Instant::now();
        let mut primary_sum = 0.0;
        let mut self_sum = 0.0;
        for batch_indices in epoch_batches(&mut order, &mut rng, cfg.batch_size) {
            let (images, labels) = gather_batch(train, &batch_indices);
            let start = Instant::now();
            let (primary, self_loss) = model
                .sgd_batch(&images, &labels, w, cfg.learning_rate)
                .map_err(|e| Error::Training { epoch, detail: e.to_string() })?;
            if batch_seconds.len() < WARMUP_SKIP + WARM_BATCHES {
                batch_seconds.push(start.elapsed().as_secs_f64());
            }
            primary_sum += primary * batch_indices.len() as f64;
            self_sum += self_loss * batch_indices.len() as f64;
        }
        let n = train.len() as f64;
        report.primary_loss.push(primary_sum / n);
        report.self_loss.push(self_sum / n);
        report.epoch_seconds.push(epoch_start.elapsed().as_secs_f64());
    }

    report.runtime_estimate_secs = runtime_estimate(&batch_seconds, batches_per_epoch * cfg.epochs);
    if let Some(test) = test {
        report.test_accuracy = Some(accuracy(model, test)?);
    }
    Ok(report)
}

/// Baseline: trains only the primary task on the same data, no decoder head.
pub fn train_primary_only(
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &SgdConfig,
) -> Result<(PrimaryModel, TrainReport)> {
    if train.is_empty() {
        return Err(Error::Input("training dataset is empty".into()));
    }
    let mut model = PrimaryModel::init(
        train.dim(),
        train.class_count(),
        derive_seed(cfg.rng_seed, "init", 0),
    )?;
    let mut rng = rng_from_seed(derive_seed(cfg.rng_seed, "shuffle", 0));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport::default();
    let mut batch_seconds = Vec::new();
    let batches_per_epoch = train.len().div_ceil(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        let epoch_start = Instant::now();
        let mut primary_sum = 0.0;
        for batch_indices in epoch_batches(&mut order, &mut rng, cfg.batch_size) {
            let (images, labels) = gather_batch(train, &batch_indices);
            let start = Instant::now();
            let loss = model
                .sgd_batch(&images, &labels, cfg.learning_rate)
                .map_err(|e| Error::Training { epoch, detail: e.to_string() })?;
            if batch_seconds.len() < WARMUP_SKIP + WARM_BATCHES {
                batch_seconds.push(start.elapsed().as_secs_f64());
            }
            primary_sum += loss * batch_indices.len() as f64;
        }
        report.primary_loss.push(primary_sum / train.len() as f64);
        report.epoch_seconds.push(epoch_start.elapsed().as_secs_f64());
    }

    report.runtime_estimate_secs = runtime_estimate(&batch_seconds, batches_per_epoch * cfg.epochs);
    if let Some(test) = test {
        report.test_accuracy = Some(accuracy(&model, test)?);
    }
    Ok((model, report))
}
