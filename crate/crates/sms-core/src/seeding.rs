//! User-secret seed patterns and their embedding into genuine samples.
//!
//! A seed is a sparse pattern in pixel space: a small digit glyph plus noise
//! rendered into a corner, thinned to exactly `n_active` elements. Embedding
//! blends the seed into a sample element-wise,
//! `x_s = (1 − v) ⊗ x + v ⊗ s`, which never leaves `[0,1]` for inputs in
//! `[0,1]`. Labels are never touched: the seed rides along as an ordinary
//! feature of the data.

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::data::{synth::draw_glyph, Dataset, UserPartition};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::Tensor;

/// Corner that receives the seed glyph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    BottomRight,
    BottomLeft,
    TopRight,
    TopLeft,
}

impl Default for Placement {
    fn default() -> Self {
        Placement::BottomRight
    }
}

/// A user's secret pattern. Exactly `n_active` elements are nonzero, all
/// values lie in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pattern: Tensor,
    pub seed_id: u64,
    pub user_id: usize,
    pub n_active: usize,
    pub side: usize,
}

/// Everything needed to re-derive a seed pattern. The raw pattern itself
/// never needs to leave the user's side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub user_id: usize,
    pub seed_id: u64,
    pub n: usize,
    pub side: usize,
    pub rng_seed: u64,
    pub placement: Placement,
}

impl SeedRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("seed record: {}", e)))
    }
}

/// Base intensity of glyph pixels before noise.
const GLYPH_BASE: f64 = 0.7;
/// Noise added to every pixel; strictly positive so any element can survive
/// top-N selection as a nonzero value.
const NOISE_LO: f64 = 0.02;
const NOISE_HI: f64 = 0.30;

/// Generates a user's seed: a digit glyph (derived from the user id) in the
/// chosen corner quadrant plus seeded noise, keeping exactly the `n_active`
/// largest elements. Deterministic per `(user_id, rng_seed, placement)`.
pub fn generate_seed(
    user_id: usize,
    n_active: usize,
    side: usize,
    rng_seed: u64,
    placement: Placement,
) -> Result<Seed> {
    let d = side * side;
    if n_active == 0 || n_active > d {
        return Err(Error::Parameter(format!(
            "seed security parameter must be in 1..={}, got {}",
            d, n_active
        )));
    }

    let mut canvas = vec![0.0; d];
    let quad = side / 2;
    let (x0, y0) = match placement {
        Placement::BottomRight => (side - quad, side - quad),
        Placement::BottomLeft => (0, side - quad),
        Placement::TopRight => (side - quad, 0),
        Placement::TopLeft => (0, 0),
    };
    draw_glyph(&mut canvas, side, user_id % 10, x0, y0, quad, quad, GLYPH_BASE);

    let mut rng = rng_from_seed(derive_seed(rng_seed, "seed-pattern", user_id as u64));
    for p in canvas.iter_mut() {
        *p += rng.random_range(NOISE_LO..=NOISE_HI);
    }

    // Keep the n_active largest elements; ties break on index for
    // determinism (values are continuous, so ties are theoretical).
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| canvas[b].partial_cmp(&canvas[a]).unwrap().then(a.cmp(&b)));
    let mut pattern = vec![0.0; d];
    for &i in order.iter().take(n_active) {
        pattern[i] = canvas[i].min(1.0);
    }

    Ok(Seed {
        pattern: Tensor::new(vec![d], pattern)?,
        seed_id: derive_seed(rng_seed, "seed-id", user_id as u64),
        user_id,
        n_active,
        side,
    })
}

impl Seed {
    pub fn pattern(&self) -> &Tensor {
        &self.pattern
    }

    /// Indices where the pattern is nonzero.
    pub fn support(&self) -> Vec<usize> {
        self.pattern
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Re-derives the seed from its persisted record.
    pub fn regenerate(record: &SeedRecord) -> Result<Seed> {
        let seed = generate_seed(
            record.user_id,
            record.n,
            record.side,
            record.rng_seed,
            record.placement,
        )?;
        if seed.seed_id != record.seed_id {
            return Err(Error::Input(format!(
                "seed record for user {} does not match its id",
                record.user_id
            )));
        }
        Ok(seed)
    }

    pub fn record(&self, rng_seed: u64, placement: Placement) -> SeedRecord {
        SeedRecord {
            user_id: self.user_id,
            seed_id: self.seed_id,
            n: self.n_active,
            side: self.side,
            rng_seed,
            placement,
        }
    }
}

/// The element-wise blend strengths `v`, one per pixel, each in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedMask {
    values: Tensor,
}

impl SeedMask {
    /// The same blend strength everywhere.
    pub fn uniform(dim: usize, v: f64) -> Result<SeedMask> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Parameter(format!("embedding rate must be in [0,1], got {}", v)));
        }
        Ok(SeedMask { values: Tensor::new(vec![dim], vec![v; dim])? })
    }

    /// Blend strength `v` on the seed's support and 0 elsewhere, so pixels
    /// outside the pattern are untouched. This is the default embedding.
    pub fn on_support(seed: &Seed, v: f64) -> Result<SeedMask> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Parameter(format!("embedding rate must be in [0,1], got {}", v)));
        }
        let values = seed
            .pattern
            .data()
            .iter()
            .map(|&p| if p != 0.0 { v } else { 0.0 })
            .collect();
        Ok(SeedMask { values: Tensor::new(vec![seed.pattern.len()], values)? })
    }

    /// A full per-element mask.
    pub fn from_tensor(values: Tensor) -> Result<SeedMask> {
        if let Some(bad) = values.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!("mask element {} outside [0,1]", bad)));
        }
        Ok(SeedMask { values })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }
}

/// One seeded sample and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SeededSample {
    pub original_index: usize,
    pub pixels: Tensor,
    pub seed_id: u64,
}

/// Blends a seed into one sample: `(1 − v) ⊗ x + v ⊗ s`.
pub fn embed_seed(x: &Tensor, seed: &Seed, mask: &SeedMask) -> Result<Tensor> {
    if x.len() != seed.pattern.len() || x.len() != mask.values.len() {
        return Err(Error::dimension(
            "embed_seed",
            format!(
                "sample {} / pattern {} / mask {} elements",
                x.len(),
                seed.pattern.len(),
                mask.values.len()
            ),
        ));
    }
    let blended = x
        .data()
        .iter()
        .zip(seed.pattern.data())
        .zip(mask.values.data())
        .map(|((&xi, &si), &vi)| (1.0 - vi) * xi + vi * si)
        .collect();
    Tensor::new(vec![x.len()], blended)
}

/// A dataset with some of one user's samples replaced by their seeded
/// versions. Labels are identical to the parent's.
#[derive(Debug, Clone)]
pub struct SeededView {
    pub dataset: Dataset,
    pub samples: Vec<SeededSample>,
}

impl SeededView {
    pub fn seeded_indices(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.original_index).collect()
    }
}

/// Number of samples to seed: `⌈ssr · n⌉`, with a tiny guard so exact
/// products like 0.006 · 500 = 3 are not distorted by representation error.
pub fn seeded_count(ssr: f64, n: usize) -> usize {
    let t = ssr * n as f64;
    let nearest = t.round();
    let count = if (t - nearest).abs() < 1e-9 { nearest } else { t.ceil() };
    (count as usize).min(n)
}

/// Embeds `seed` into `⌈ssr · |part|⌉` of the user's samples, chosen
/// uniformly at random (deterministic per `rng_seed`). Labels are unchanged.
pub fn seed_dataset(
    ds: &Dataset,
    part: &UserPartition,
    seed: &Seed,
    mask: &SeedMask,
    ssr: f64,
    rng_seed: u64,
) -> Result<SeededView> {
    if !(0.0..=1.0).contains(&ssr) {
        return Err(Error::Parameter(format!("ssr must be in [0,1], got {}", ssr)));
    }
    let count = seeded_count(ssr, part.len());
    let mut order = part.indices.clone();
    let mut rng = rng_from_seed(rng_seed);
    order.shuffle(&mut rng);
    let mut chosen: Vec<usize> = order.into_iter().take(count).collect();
    chosen.sort_unstable();

    let mut dataset = ds.clone();
    let mut samples = Vec::with_capacity(count);
    for &i in &chosen {
        let pixels = embed_seed(&ds.images().row_tensor(i), seed, mask)?;
        dataset.replace_image(i, pixels.data());
        samples.push(SeededSample { original_index: i, pixels, seed_id: seed.seed_id });
    }
    Ok(SeededView { dataset, samples })
}

/// Per-sample variant: every chosen sample gets its own freshly derived
/// seed. Returns the seed used for each sample alongside the view.
pub fn seed_dataset_per_sample(
    ds: &Dataset,
    part: &UserPartition,
    n_active: usize,
    mask_v: f64,
    placement: Placement,
    ssr: f64,
    rng_seed: u64,
) -> Result<(SeededView, Vec<Seed>)> {
    if !(0.0..=1.0).contains(&ssr) {
        return Err(Error::Parameter(format!("ssr must be in [0,1], got {}", ssr)));
    }
    let count = seeded_count(ssr, part.len());
    let mut order = part.indices.clone();
    let mut rng = rng_from_seed(rng_seed);
    order.shuffle(&mut rng);
    let mut chosen: Vec<usize> = order.into_iter().take(count).collect();
    chosen.sort_unstable();

    let mut dataset = ds.clone();
    let mut samples = Vec::with_capacity(count);
    let mut seeds = Vec::with_capacity(count);
    for &i in &chosen {
        let seed = generate_seed(
            part.user_id,
            n_active,
            ds.side(),
            derive_seed(rng_seed, "per-sample-seed", i as u64),
            placement,
        )?;
        let mask = SeedMask::on_support(&seed, mask_v)?;
        let pixels = embed_seed(&ds.images().row_tensor(i), &seed, &mask)?;
        dataset.replace_image(i, pixels.data());
        samples.push(SeededSample { original_index: i, pixels, seed_id: seed.seed_id });
        seeds.push(seed);
    }
    Ok((SeededView { dataset, samples }, seeds))
}
