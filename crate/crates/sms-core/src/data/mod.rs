//! Desk-scale image datasets: loading, synthesis, partitioning, caching.
//!
//! Images are square, grayscale, and normalized to `[0,1]`; labels are class
//! indices. Datasets are immutable after construction and freely shareable.

mod cache;
mod idx;
pub(crate) mod synth;

pub use cache::{dataset_from_bytes, dataset_to_bytes, load_dataset, save_dataset};
pub use idx::load_idx;
pub use synth::synth_digits;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::tensor::Tensor;

/// A labelled image set. `images` is `[N, side²]` with pixels in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    class_count: usize,
    side: usize,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, class_count: usize, side: usize) -> Result<Self> {
        let n = images.rows();
        if n != labels.len() {
            return Err(Error::Input(format!(
                "{} images but {} labels",
                n,
                labels.len()
            )));
        }
        if images.cols() != side * side {
            return Err(Error::dimension(
                "Dataset::new",
                format!("{} pixels per image, expected {}²={}", images.cols(), side, side * side),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Input(format!(
                "label {} out of range for {} classes",
                bad, class_count
            )));
        }
        if let Some(bad) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("pixel {} outside [0,1]", bad)));
        }
        Ok(Dataset { images, labels, class_count, side })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Pixels per image.
    pub fn dim(&self) -> usize {
        self.side * self.side
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row(i)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// A new dataset containing the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Input(format!("index {} out of range for {} samples", i, self.len())));
            }
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(
            Tensor::new(vec![indices.len(), d], data)?,
            labels,
            self.class_count,
            self.side,
        )
    }

    /// Replaces the pixels of one sample; the label is untouched. Used by
    /// the seeding layer, which owns the range guarantees.
    pub(crate) fn replace_image(&mut self, i: usize, pixels: &[f64]) {
        let d = self.dim();
        self.images.data_mut()[i * d..(i + 1) * d].copy_from_slice(pixels);
    }

    /// A new dataset with extra rows appended (backdoor baselines grow the
    /// dataset; seeding never does).
    pub fn with_appended(&self, rows: &[(Vec<f64>, usize)]) -> Result<Dataset> {
        let d = self.dim();
        let mut data = Vec::with_capacity((self.len() + rows.len()) * d);
        data.extend_from_slice(self.images.data());
        let mut labels = self.labels.clone();
        for (pixels, label) in rows {
            if pixels.len() != d {
                return Err(Error::dimension(
                    "Dataset::with_appended",
                    format!("{} pixels, expected {}", pixels.len(), d),
                ));
            }
            data.extend_from_slice(pixels);
            labels.push(*label);
        }
        Dataset::new(
            Tensor::new(vec![self.len() + rows.len(), d], data)?,
            labels,
            self.class_count,
            self.side,
        )
    }
}

/// One user's slice of a parent dataset, by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserPartition {
    pub user_id: usize,
    pub indices: Vec<usize>,
}

impl UserPartition {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Which of a user's samples an unlearning request erases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EraseGranularity {
    /// A specific subset of the user's samples.
    Samples,
    /// The user's entire partition.
    WholeUser,
}

/// An unlearning request: the indices (into the parent dataset) to erase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EraseRequest {
    pub user_id: usize,
    pub indices: Vec<usize>,
    pub granularity: EraseGranularity,
}

impl EraseRequest {
    /// Erase specific samples; they must belong to the user's partition.
    pub fn samples(part: &UserPartition, indices: Vec<usize>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &i in &indices {
            if !part.indices.contains(&i) {
                return Err(Error::Input(format!(
                    "index {} is not in user {}'s partition",
                    i, part.user_id
                )));
            }
            if !seen.insert(i) {
                return Err(Error::Input(format!("duplicate erase index {}", i)));
            }
        }
        Ok(EraseRequest {
            user_id: part.user_id,
            indices,
            granularity: EraseGranularity::Samples,
        })
    }

    /// Erase the user's whole partition.
    pub fn whole_user(part: &UserPartition) -> Self {
        EraseRequest {
            user_id: part.user_id,
            indices: part.indices.clone(),
            granularity: EraseGranularity::WholeUser,
        }
    }
}

/// Splits `0..N` into `n_users` near-equal disjoint random parts.
pub fn partition_users(ds: &Dataset, n_users: usize, rng_seed: u64) -> Vec<UserPartition> {
    assert!(n_users >= 1 && n_users <= ds.len(), "n_users must be in 1..=N");
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut rng: Rng = rng_from_seed(rng_seed);
    order.shuffle(&mut rng);

    let base = ds.len() / n_users;
    let extra = ds.len() % n_users;
    let mut partitions = Vec::with_capacity(n_users);
    let mut cursor = 0;
    for user_id in 0..n_users {
        let size = base + usize::from(user_id < extra);
        let mut indices: Vec<usize> = order[cursor..cursor + size].to_vec();
        indices.sort_unstable();
        partitions.push(UserPartition { user_id, indices });
        cursor += size;
    }
    partitions
}

/// Reproducible disjoint train/test split.
pub fn split(ds: &Dataset, train_frac: f64, rng_seed: u64) -> Result<(Dataset, Dataset)> {
    assert!(
        train_frac > 0.0 && train_frac < 1.0,
        "train_frac must be in (0,1)"
    );
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut rng: Rng = rng_from_seed(rng_seed);
    order.shuffle(&mut rng);
    let cut = (train_frac * ds.len() as f64).floor() as usize;
    let train = ds.select(&order[..cut])?;
    let test = ds.select(&order[cut..])?;
    Ok((train, test))
}
