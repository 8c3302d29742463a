use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::metrics::{uar, ConfusionMatrix};
use crate::dataio::Corpus;
use crate::error::{Error, Result};

/// One evaluated utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub utterance_id: String,
    pub speaker_id: String,
    pub attrs: BTreeMap<String, String>,
    pub truth: usize,
    pub predicted: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub n: usize,
    pub uar: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBreakdown {
    pub attr: String,
    pub groups: BTreeMap<String, GroupScore>,
}

impl GroupBreakdown {
    /// Per-group UAR difference `self − reference` for groups present in
    /// both.
    pub fn deltas(&self, reference: &GroupBreakdown) -> BTreeMap<String, f64> {
        self.groups
            .iter()
            .filter_map(|(g, s)| reference.groups.get(g).map(|r| (g.clone(), s.uar - r.uar)))
            .collect()
    }
}

/// Confusion matrix and UAR for each value of `attr`.
pub fn group_breakdown(results: &[Prediction], attr: &str, n_class: usize) -> Result<GroupBreakdown> {
    let mut matrices: BTreeMap<String, (usize, ConfusionMatrix)> = BTreeMap::new();
    for p in results {
        let value = p
            .attrs
            .get(attr)
            .ok_or_else(|| Error::domain(format!("utterance {} has no attribute {attr}", p.utterance_id)))?;
        let entry = matrices
            .entry(value.clone())
            .or_insert_with(|| (0, ConfusionMatrix::new(n_class)));
        entry.0 += 1;
        entry.1.add(p.truth, p.predicted)?;
    }
    let groups = matrices
        .into_iter()
        .map(|(g, (n, confusion))| Ok((g, GroupScore { n, uar: uar(&confusion)?, confusion })))
        .collect::<Result<_>>()?;
    Ok(GroupBreakdown {
        attr: attr.to_string(),
        groups,
    })
}

/// A count ratio that stays printable when the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Finite(f64),
    /// Nonzero numerator over zero.
    Infinite,
    /// Zero over zero.
    Undefined,
}

impl Ratio {
    pub fn of(num: usize, den: usize) -> Ratio {
        match (num, den) {
            (0, 0) => Ratio::Undefined,
            (_, 0) => Ratio::Infinite,
            _ => Ratio::Finite(num as f64 / den as f64),
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Finite(v) => Some(v),
            _ => None,
        }
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ratio::Finite(v) => write!(f, "{v:.2}"),
            Ratio::Infinite => f.write_str("inf"),
            Ratio::Undefined => f.write_str("n/a"),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<Se: Serializer>(&self, s: Se) -> std::result::Result<Se::Ok, Se::Error> {
        match self {
            Ratio::Finite(v) => s.serialize_f64(*v),
            Ratio::Infinite => s.serialize_str("inf"),
            Ratio::Undefined => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Option::<Raw>::deserialize(d)? {
            None => Ok(Ratio::Undefined),
            Some(Raw::Num(v)) => Ok(Ratio::Finite(v)),
            Some(Raw::Text(t)) if t == "inf" => Ok(Ratio::Infinite),
            Some(Raw::Text(t)) => Err(serde::de::Error::custom(format!("bad ratio {t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRatios {
    /// `None` for the whole corpus.
    pub cluster: Option<usize>,
    pub n: usize,
    pub count_a: usize,
    pub count_b: usize,
    /// `count_a / count_b`.
    pub ratio: Ratio,
    pub subjects: usize,
    pub subject_min: usize,
    pub subject_max: usize,
    /// Largest over smallest per-subject segment count.
    pub dispersion: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRatioReport {
    pub attr: String,
    pub value_a: String,
    pub value_b: String,
    pub clusters: Vec<ClusterRatios>,
    pub overall: ClusterRatios,
}

fn ratios_for(corpus: &Corpus, members: &[usize], cluster: Option<usize>, attr: &str, a: &str, b: &str) -> ClusterRatios {
    let mut per_subject: BTreeMap<&str, usize> = BTreeMap::new();
    let (mut count_a, mut count_b) = (0, 0);
    for &i in members {
        let u = &corpus.utterances[i];
        *per_subject.entry(u.speaker_id.as_str()).or_default() += 1;
        match u.attr(attr) {
            Some(v) if v == a => count_a += 1,
            Some(v) if v == b => count_b += 1,
            _ => {}
        }
    }
    let subject_min = per_subject.values().copied().min().unwrap_or(0);
    let subject_max = per_subject.values().copied().max().unwrap_or(0);
    ClusterRatios {
        cluster,
        n: members.len(),
        count_a,
        count_b,
        ratio: Ratio::of(count_a, count_b),
        subjects: per_subject.len(),
        subject_min,
        subject_max,
        dispersion: Ratio::of(subject_max, subject_min),
    }
}

/// Per-cluster and overall `attr` ratios (`value_a` count over `value_b`
/// count) and subject dispersion.
pub fn cluster_attribute_ratios(
    corpus: &Corpus,
    assignments: &[usize],
    attr: &str,
    value_a: &str,
    value_b: &str,
) -> Result<ClusterRatioReport> {
    if assignments.len() != corpus.len() {
        return Err(Error::dims("cluster assignments", corpus.len(), assignments.len()));
    }
    let k = assignments.iter().max().map_or(0, |&m| m + 1);
    let mut members = vec![Vec::new(); k];
    for (i, &a) in assignments.iter().enumerate() {
        members[a].push(i);
    }
    let all: Vec<usize> = (0..corpus.len()).collect();
    Ok(ClusterRatioReport {
        attr: attr.to_string(),
        value_a: value_a.to_string(),
        value_b: value_b.to_string(),
        clusters: members
            .iter()
            .enumerate()
            .map(|(c, m)| ratios_for(corpus, m, Some(c), attr, value_a, value_b))
            .collect(),
        overall: ratios_for(corpus, &all, None, attr, value_a, value_b),
    })
}
