//! Dataset discovery, image preprocessing, augmentation and minibatching.
//!
//! Expected layout:
//!
//! ```text
//! root/
//!   train/{NORMAL,PNEUMONIA}/*.{png,jpg,jpeg}
//!   val/{NORMAL,PNEUMONIA}/...
//!   test/{NORMAL,PNEUMONIA}/...
//! ```

mod augment;
mod batch;
mod image;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::augment::{augment, flip_horizontal, warp, AffineParams, AugmentConfig};
pub use self::batch::{batches, Batch, BatchPlan, ImageSet};
pub use self::image::{load_grayscale, luminance, normalize, preprocess, resize_bilinear};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Normal = 0,
    Pneumonia = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Normal, Label::Pneumonia];

    pub fn dir_name(self) -> &'static str {
        match self {
            Label::Normal => "NORMAL",
            Label::Pneumonia => "PNEUMONIA",
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Normal),
            1 => Some(Label::Pneumonia),
            _ => None,
        }
    }

    /// Decision rule shared by every consumer: positive iff `p >= threshold`.
    pub fn from_probability(p: f64, threshold: f64) -> Label {
        if p >= threshold {
            Label::Pneumonia
        } else {
            Label::Normal
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.dir_name() == s)
            .ok_or_else(|| Error::input(format!("unknown split {s:?} (expected train, val or test)")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledItem {
    pub path: PathBuf,
    pub label: Label,
}

/// Image paths of one split with labels taken from their class directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub split: Split,
    pub items: Vec<LabeledItem>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.items.iter().filter(|i| i.label == label).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplits {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

impl DatasetSplits {
    pub fn get(&self, split: Split) -> &LabeledDataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

fn is_image(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

/// Lists one split directory; items sorted by path.
pub fn scan_split(root: &Path, split: Split) -> Result<LabeledDataset> {
    let split_dir = root.join(split.dir_name());
    if !split_dir.is_dir() {
        return Err(Error::Layout(format!(
            "missing split directory \"{}\" under {} (expected {{train,val,test}}/{{NORMAL,PNEUMONIA}})",
            split.dir_name(),
            root.display()
        )));
    }
    let mut items = Vec::new();
    for label in Label::ALL {
        let class_dir = split_dir.join(label.dir_name());
        if !class_dir.is_dir() {
            return Err(Error::Layout(format!(
                "missing class directory \"{}/{}\" under {}",
                split.dir_name(),
                label.dir_name(),
                root.display()
            )));
        }
        let before = items.len();
        for entry in fs::read_dir(&class_dir)? {
            let path = entry?.path();
            if is_image(&path) {
                items.push(LabeledItem { path, label });
            }
        }
        if items.len() == before {
            return Err(Error::Layout(format!(
                "no .png/.jpg/.jpeg images in \"{}/{}\"",
                split.dir_name(),
                label.dir_name()
            )));
        }
    }
    items.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(LabeledDataset { split, items })
}

pub fn scan_dataset(root: &Path) -> Result<DatasetSplits> {
    if !root.is_dir() {
        return Err(Error::Layout(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    Ok(DatasetSplits {
        train: scan_split(root, Split::Train)?,
        val: scan_split(root, Split::Val)?,
        test: scan_split(root, Split::Test)?,
    })
}
