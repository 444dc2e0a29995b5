use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Removable candidate words plus the distractor words that must always be kept.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    candidates: Vec<String>,
    distractors: Vec<String>,
}

pub const DEFAULT_CANDIDATES: [&str; 5] = ["France", "China", "Germany", "Japan", "India"];

pub const DEFAULT_DISTRACTORS: [&str; 40] = [
    "store", "open", "river", "garden", "coffee", "market", "street", "bridge", "hotel", "sale", "paper",
    "window", "cavity", "summer", "yellow", "orange", "silver", "planet", "forest", "winter", "studio",
    "bakery", "closed", "north", "table", "music", "doctor", "school", "travel", "harbor", "pizza",
    "garage", "museum", "castle", "office", "letter", "animal", "family", "button", "mirror",
];

impl Vocabulary {
    pub fn new(candidates: Vec<String>, distractors: Vec<String>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Config("vocabulary needs at least one candidate word".into()));
        }
        for (i, w) in candidates.iter().enumerate() {
            if w.trim().is_empty() {
                return Err(Error::Config("empty candidate word".into()));
            }
            if candidates[..i].contains(w) {
                return Err(Error::Config(format!("duplicate candidate word {w:?}")));
            }
            if distractors.contains(w) {
                return Err(Error::Config(format!("{w:?} is both candidate and distractor")));
            }
        }
        if distractors.iter().any(|w| w.trim().is_empty()) {
            return Err(Error::Config("empty distractor word".into()));
        }
        Ok(Self {
            candidates,
            distractors,
        })
    }

    pub fn from_strs(candidates: &[&str], distractors: &[&str]) -> Result<Self> {
        Self::new(
            candidates.iter().map(|s| s.to_string()).collect(),
            distractors.iter().map(|s| s.to_string()).collect(),
        )
    }

    /// Five country-name candidates and the bundled distractor list.
    pub fn default_countries() -> Self {
        Self::from_strs(&DEFAULT_CANDIDATES, &DEFAULT_DISTRACTORS).expect("default vocabulary is valid")
    }

    pub fn k(&self) -> usize {
        self.candidates.len()
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    pub fn distractors(&self) -> &[String] {
        &self.distractors
    }

    pub fn candidate_index(&self, word: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c == word)
    }

    pub fn condition_for(&self, word: &str) -> Result<ConditionVector> {
        let idx = self.candidate_index(word).ok_or_else(|| {
            Error::Input(format!(
                "unknown target word {word:?}; valid words: {}",
                self.candidates.join(", ")
            ))
        })?;
        ConditionVector::one_hot(idx, self.k())
    }
}

/// K-dimensional one-hot selector of the target word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionVector {
    onehot: Vec<f32>,
}

impl ConditionVector {
    pub fn one_hot(index: usize, k: usize) -> Result<Self> {
        if index >= k {
            return Err(Error::Config(format!("condition index {index} out of range for K={k}")));
        }
        let mut onehot = vec![0.0; k];
        onehot[index] = 1.0;
        Ok(Self { onehot })
    }

    pub fn from_values(values: Vec<f32>) -> Result<Self> {
        let ones = values.iter().filter(|&&v| v == 1.0).count();
        let zeros = values.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != values.len() {
            return Err(Error::Config(format!("{values:?} is not a one-hot vector")));
        }
        Ok(Self { onehot: values })
    }

    pub fn k(&self) -> usize {
        self.onehot.len()
    }

    pub fn index(&self) -> usize {
        self.onehot.iter().position(|&v| v == 1.0).expect("one-hot invariant")
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.onehot
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_invariants() {
        assert!(Vocabulary::from_strs(&[], &["a"]).is_err());
        assert!(Vocabulary::from_strs(&["a", "a"], &[]).is_err());
        assert!(Vocabulary::from_strs(&["a"], &["a"]).is_err());
        let v = Vocabulary::default_countries();
        assert_eq!(v.k(), 5);
        assert_eq!(v.condition_for("Japan").unwrap().index(), 3);
        let err = v.condition_for("Spain").unwrap_err().to_string();
        assert!(err.contains("France") && err.contains("India"));
    }

    #[test]
    fn one_hot() {
        let c = ConditionVector::one_hot(2, 5).unwrap();
        assert_eq!(c.as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(ConditionVector::one_hot(5, 5).is_err());
        assert!(ConditionVector::from_values(vec![1.0, 1.0]).is_err());
        assert!(ConditionVector::from_values(vec![0.5, 0.5]).is_err());
        assert_eq!(ConditionVector::from_values(vec![0.0, 1.0]).unwrap().index(), 1);
    }
}
