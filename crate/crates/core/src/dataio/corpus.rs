use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::labels::{majority_label, scale_max, LabelBin};
use super::norm::NormStats;
use crate::error::{Error, Result};

/// One annotated utterance with both feature kinds.
///
/// `framed_features` is an `n_mel × frame_count` matrix stored row-major
/// (one row per mel coefficient).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub speaker_id: String,
    pub attrs: BTreeMap<String, String>,
    pub annotations: Vec<u32>,
    pub scale_mid: u32,
    pub summary_features: Vec<f64>,
    pub framed_features: Vec<f64>,
    pub n_mel: usize,
    pub frame_count: usize,
}

impl Utterance {
    pub fn validate(&self, d_s: usize) -> Result<()> {
        if self.annotations.is_empty() {
            return Err(Error::domain(format!("utterance {} has no annotations", self.id)));
        }
        let top = scale_max(self.scale_mid);
        if let Some(r) = self.annotations.iter().find(|&&r| r < 1 || r > top) {
            return Err(Error::domain(format!(
                "utterance {}: rating {r} outside 1..={top}",
                self.id
            )));
        }
        if self.summary_features.len() != d_s {
            return Err(Error::dims(
                format!("summary features of {}", self.id),
                d_s,
                self.summary_features.len(),
            ));
        }
        if self.frame_count == 0 {
            return Err(Error::domain(format!("utterance {} has no frames", self.id)));
        }
        if self.framed_features.len() != self.n_mel * self.frame_count {
            return Err(Error::dims(
                format!("framed features of {}", self.id),
                self.n_mel * self.frame_count,
                self.framed_features.len(),
            ));
        }
        if self.summary_features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("summary features of {}", self.id)));
        }
        if self.framed_features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("framed features of {}", self.id)));
        }
        Ok(())
    }

    /// Majority valence bin, `None` when annotators tie.
    pub fn label(&self) -> Result<Option<LabelBin>> {
        majority_label(&self.annotations, self.scale_mid)
    }

    #[inline]
    pub fn frame_value(&self, coef: usize, t: usize) -> f64 {
        self.framed_features[coef * self.frame_count + t]
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).map(String::as_str)
    }
}

/// A named collection of labeled utterances sharing feature dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub scale_mid: u32,
    pub d_s: usize,
    pub n_mel: usize,
    pub utterances: Vec<Utterance>,
    pub norm_stats: Option<NormStats>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Corpus {
    pub fn new(
        name: impl Into<String>,
        scale_mid: u32,
        d_s: usize,
        n_mel: usize,
        utterances: Vec<Utterance>,
    ) -> Result<Self> {
        let corpus = Corpus {
            name: name.into(),
            scale_mid,
            d_s,
            n_mel,
            utterances,
            norm_stats: None,
            metadata: BTreeMap::new(),
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.utterances.len());
        for u in &self.utterances {
            if !seen.insert(u.id.as_str()) {
                return Err(Error::domain(format!("duplicate utterance id {}", u.id)));
            }
            if u.n_mel != self.n_mel {
                return Err(Error::dims(format!("mel coefficients of {}", u.id), self.n_mel, u.n_mel));
            }
            u.validate(self.d_s)?;
        }
        if let Some(stats) = &self.norm_stats {
            stats.validate(self.n_mel)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Sorted, de-duplicated speaker ids.
    pub fn speakers(&self) -> Vec<String> {
        self.utterances
            .iter()
            .map(|u| u.speaker_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Class labels of every utterance; errors if any utterance lacks a majority.
    pub fn labels(&self) -> Result<Vec<LabelBin>> {
        self.utterances
            .iter()
            .map(|u| {
                u.label()?
                    .ok_or_else(|| Error::domain(format!("utterance {} has no majority label", u.id)))
            })
            .collect()
    }

    /// Drops utterances without a majority bin, returning how many were removed.
    pub fn drop_unlabeled(&mut self) -> Result<usize> {
        let before = self.utterances.len();
        let mut kept = Vec::with_capacity(before);
        for u in self.utterances.drain(..) {
            if u.label()?.is_some() {
                kept.push(u);
            }
        }
        self.utterances = kept;
        Ok(before - self.utterances.len())
    }

    /// A corpus holding the utterances at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            name: self.name.clone(),
            scale_mid: self.scale_mid,
            d_s: self.d_s,
            n_mel: self.n_mel,
            utterances: indices.iter().map(|&i| self.utterances[i].clone()).collect(),
            norm_stats: self.norm_stats.clone(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn summary_matrix(&self) -> Vec<Vec<f64>> {
        self.utterances.iter().map(|u| u.summary_features.clone()).collect()
    }
}
