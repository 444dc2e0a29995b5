use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, stream};
use crate::synthgen::Dataset;

pub const SPLIT_FILE: &str = "split.json";

/// Share of the non-test groups held out for validation (rounded down).
pub const VAL_FRACTION: f64 = 0.1;

/// Sample indices of a dataset partitioned by background identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub ratio: f64,
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Val,
    Test,
    All,
}

impl SplitPart {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            "all" => Ok(Self::All),
            _ => Err(Error::Config(format!("unknown split '{name}' (train, val, test or all)"))),
        }
    }
}

impl DatasetSplit {
    pub fn part(&self, part: SplitPart) -> Vec<usize> {
        match part {
            SplitPart::Train => self.train.clone(),
            SplitPart::Val => self.val.clone(),
            SplitPart::Test => self.test.clone(),
            SplitPart::All => {
                let mut all: Vec<usize> = self.train.iter().chain(&self.val).chain(&self.test).copied().collect();
                all.sort_unstable();
                all
            }
        }
    }
}

/// Groups samples by identity, shuffles the groups with `seed` and assigns
/// `round(ratio * groups)` of them to train+val, the rest to test.
pub fn split_groups(ids: &[String], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        groups.entry(id.as_str()).or_default().push(i);
    }
    let mut keys: Vec<&str> = groups.keys().copied().collect();
    if keys.len() < 2 {
        return Err(Error::Dataset(format!(
            "need at least 2 distinct backgrounds to split, found {}",
            keys.len()
        )));
    }
    keys.shuffle(&mut stream(seed, domain::SPLIT, 0));
    let n_fit = ((ratio * keys.len() as f64).round() as usize).clamp(1, keys.len() - 1);
    let n_val = (n_fit as f64 * VAL_FRACTION).floor() as usize;
    let collect = |ks: &[&str]| {
        let mut v: Vec<usize> = ks.iter().flat_map(|k| groups[k].iter().copied()).collect();
        v.sort_unstable();
        v
    };
    Ok(DatasetSplit {
        ratio,
        seed,
        val: collect(&keys[..n_val]),
        train: collect(&keys[n_val..n_fit]),
        test: collect(&keys[n_fit..]),
    })
}

/// Splits a dataset on disk. Samples without a background (text-only sets) form their own group.
pub fn split_dataset(root: impl AsRef<Path>, ratio: f64, seed: u64) -> Result<DatasetSplit> {
    let ds = Dataset::open(root)?;
    let ids: Vec<String> = ds
        .background_ids()?
        .into_iter()
        .enumerate()
        .map(|(i, id)| if id.is_empty() { format!("#sample{i}") } else { id })
        .collect();
    split_groups(&ids, ratio, seed)
}

pub fn write_split(root: impl AsRef<Path>, split: &DatasetSplit) -> Result<()> {
    let path = root.as_ref().join(SPLIT_FILE);
    let text = serde_json::to_string_pretty(split).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Reads the split file of a dataset, `None` when the dataset has none.
pub fn read_split(root: impl AsRef<Path>) -> Result<Option<DatasetSplit>> {
    let path = root.as_ref().join(SPLIT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let split: DatasetSplit =
        serde_json::from_str(&text).map_err(|e| Error::Dataset(format!("corrupt {}: {e}", path.display())))?;
    Ok(Some(split))
}

/// Indices of `part` for a dataset of `len` samples; `All` needs no split file.
pub fn resolve_part(root: impl AsRef<Path>, len: usize, part: SplitPart) -> Result<Vec<usize>> {
    if part == SplitPart::All {
        return Ok((0..len).collect());
    }
    let root = root.as_ref();
    let split = read_split(root)?
        .ok_or_else(|| Error::Dataset(format!("{} has no {SPLIT_FILE}", root.display())))?;
    let idx = split.part(part);
    if let Some(&bad) = idx.iter().find(|&&i| i >= len) {
        return Err(Error::Dataset(format!("split index {bad} out of range for {len} samples")));
    }
    let unique: BTreeSet<usize> = idx.iter().copied().collect();
    if unique.len() != idx.len() {
        return Err(Error::Dataset("split lists a sample twice".into()));
    }
    Ok(idx)
}
