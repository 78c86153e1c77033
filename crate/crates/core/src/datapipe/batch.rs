use crate::datapipe::augment::{augment, AugmentConfig};
use crate::datapipe::image::preprocess;
use crate::datapipe::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng::{streams, Prng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A split decoded into memory: normalized `[H, W]` images plus labels, in
/// dataset order.
#[derive(Debug, Clone)]
pub struct ImageSet<T> {
    images: Vec<Tensor<T>>,
    labels: Vec<Label>,
    height: usize,
    width: usize,
}

impl<T: Scalar> ImageSet<T> {
    pub fn new(images: Vec<Tensor<T>>, labels: Vec<Label>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::input("image set is empty"));
        }
        if images.len() != labels.len() {
            return Err(Error::input(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        let [height, width] = *images[0].dims() else {
            return Err(Error::shape(format!(
                "images must be [H, W], got {}",
                images[0].shape()
            )));
        };
        for (i, img) in images.iter().enumerate() {
            if img.dims() != [height, width] {
                return Err(Error::shape(format!(
                    "image {i} is {}, expected [{height}, {width}]",
                    img.shape()
                )));
            }
            if img.data().iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
                return Err(Error::input(format!("image {i} has pixels outside [0, 1]")));
            }
        }
        Ok(ImageSet {
            images,
            labels,
            height,
            width,
        })
    }

    /// Decodes and preprocesses every file of `ds` to `size x size`.
    pub fn load(ds: &LabeledDataset, size: usize) -> Result<Self> {
        let images = ds
            .items
            .iter()
            .map(|item| preprocess(&item.path, size))
            .collect::<Result<Vec<_>>>()?;
        ImageSet::new(images, ds.items.iter().map(|i| i.label).collect())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn images(&self) -> &[Tensor<T>] {
        &self.images
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// The items at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let pick = |i: usize| {
            self.images
                .get(i)
                .map(|img| (img.clone(), self.labels[i]))
                .ok_or_else(|| Error::input(format!("index {i} out of range")))
        };
        let (images, labels) = indices
            .iter()
            .map(|&i| pick(i))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        ImageSet::new(images, labels)
    }
}

/// How one pass over an [`ImageSet`] is cut into batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub shuffle: bool,
    /// `None` for validation and test passes, which are never augmented.
    pub augment: Option<AugmentConfig>,
}

impl BatchPlan {
    pub fn training(batch_size: usize, augment: AugmentConfig) -> Self {
        BatchPlan {
            batch_size,
            shuffle: true,
            augment: Some(augment),
        }
    }

    pub fn inference(batch_size: usize) -> Self {
        BatchPlan {
            batch_size,
            shuffle: false,
            augment: None,
        }
    }

    pub fn is_augmented(&self) -> bool {
        self.augment.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct Batch<T> {
    /// `[B, 1, H, W]` in `[0, 1]`.
    pub images: Tensor<T>,
    /// `[B, 1]` of 0 (Normal) / 1 (Pneumonia).
    pub labels: Tensor<T>,
    /// Positions of the batch items in the source set.
    pub indices: Vec<usize>,
}

/// Iterator over one epoch of batches. Randomness is derived from
/// `(seed, epoch)` for the order and `(seed, epoch, item)` for augmentation,
/// so results do not depend on how batches are consumed.
pub struct Batches<'a, T> {
    set: &'a ImageSet<T>,
    plan: BatchPlan,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl<T> Batches<'_, T> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

pub fn batches<T: Scalar>(set: &ImageSet<T>, plan: BatchPlan, seed: u64, epoch: u64) -> Result<Batches<'_, T>> {
    if plan.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if set.is_empty() {
        return Err(Error::input("cannot batch an empty dataset"));
    }
    if let Some(cfg) = &plan.augment {
        cfg.validate()?;
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    if plan.shuffle {
        Prng::derive(seed, &[streams::SHUFFLE, epoch]).shuffle(&mut order);
    }
    Ok(Batches {
        set,
        plan,
        seed,
        epoch,
        order,
        cursor: 0,
    })
}

impl<T: Scalar> Batches<'_, T> {
    fn assemble(&self, indices: Vec<usize>) -> Result<Batch<T>> {
        let (h, w) = self.set.dims();
        let mut pixels = Vec::with_capacity(indices.len() * h * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in &indices {
            let img = &self.set.images[i];
            match &self.plan.augment {
                Some(cfg) => {
                    let mut rng = Prng::derive(self.seed, &[streams::AUGMENT, self.epoch, i as u64]);
                    pixels.extend_from_slice(augment(img, cfg, &mut rng)?.data());
                }
                None => pixels.extend_from_slice(img.data()),
            }
            labels.push(T::lit(self.set.labels[i].as_u8() as f64));
        }
        let b = indices.len();
        Ok(Batch {
            images: Tensor::from_vec(&[b, 1, h, w], pixels)?,
            labels: Tensor::from_vec(&[b, 1], labels)?,
            indices,
        })
    }
}

impl<T: Scalar> Iterator for Batches<'_, T> {
    type Item = Result<Batch<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.plan.batch_size).min(self.order.len());
        let indices = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        Some(self.assemble(indices))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.cursor).div_ceil(self.plan.batch_size);
        (left, Some(left))
    }
}
