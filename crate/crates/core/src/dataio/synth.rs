//! Synthetic corpora with planted group structure.
//!
//! Summary features are drawn from one unit-variance Gaussian per group, with
//! consecutive group centers `group_separation` apart along the first axis.
//! Framed features are standard normal noise plus two planted effects:
//!
//! * a *label band* (the first quarter of the mel coefficients) shifted by
//!   `label_effect · (s − 1)`, where `s ∈ {0, 1, 2}` is the label-bearing
//!   statistic;
//! * an *auxiliary band* (the last quarter) shifted by `±aux_effect`
//!   according to the speaker's `gender` attribute.
//!
//! With [`LabelMapMode::Shared`] the label equals `s`. With
//! [`LabelMapMode::GroupFlipped`] group `g` uses `label = (s + g) mod 3`, so
//! the same frame statistic maps to a different class in each group. The
//! framed features carry no information about the group, which caps any flat
//! classifier at UAR 0.5 on a two-group corpus while a group-aware one can
//! reach 1.0.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::corpus::{Corpus, Utterance};
use super::labels::{scale_max, LabelBin};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMapMode {
    Shared,
    GroupFlipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub name: String,
    pub n_groups: usize,
    pub n_speakers_per_group: usize,
    pub utterances_per_speaker: usize,
    pub d_s: usize,
    pub n_mel: usize,
    /// Inclusive frame-count range.
    pub t_range: (usize, usize),
    pub group_separation: f64,
    pub label_map_mode: LabelMapMode,
    pub label_effect: f64,
    pub aux_effect: f64,
    pub scale_mid: u32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            name: "synthetic".into(),
            n_groups: 2,
            n_speakers_per_group: 5,
            utterances_per_speaker: 40,
            d_s: 88,
            n_mel: 40,
            t_range: (50, 100),
            group_separation: 8.0,
            label_map_mode: LabelMapMode::GroupFlipped,
            label_effect: 1.0,
            aux_effect: 1.0,
            scale_mid: 3,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::domain(format!("synthetic spec: {m}")));
        if self.n_groups < 1 {
            return bad("n_groups must be at least 1");
        }
        if self.n_speakers_per_group < 1 || self.utterances_per_speaker < 1 {
            return bad("need at least one speaker per group and one utterance per speaker");
        }
        if self.d_s < 1 || self.n_mel < 1 {
            return bad("feature dimensions must be positive");
        }
        if self.t_range.0 < 1 || self.t_range.0 > self.t_range.1 {
            return bad("t_range must satisfy 1 <= min <= max");
        }
        if !(self.group_separation >= 0.0) || !self.group_separation.is_finite() {
            return bad("group_separation must be finite and non-negative");
        }
        if !self.label_effect.is_finite() || !self.aux_effect.is_finite() {
            return bad("effects must be finite");
        }
        if self.scale_mid < 2 {
            return bad("scale_mid must be at least 2");
        }
        Ok(())
    }

    /// Class shift applied to the frame statistic in group `g`.
    pub fn group_shift(&self, g: usize) -> usize {
        match self.label_map_mode {
            LabelMapMode::Shared => 0,
            LabelMapMode::GroupFlipped => g % 3,
        }
    }

    pub fn speaker_id(g: usize, s: usize) -> String {
        format!("g{g}s{s:03}")
    }
}

fn rating_for(label: LabelBin, scale_mid: u32, rng: &mut impl Rng) -> u32 {
    match label {
        LabelBin::Low => rng.random_range(1..scale_mid),
        LabelBin::Medium => scale_mid,
        LabelBin::High => rng.random_range(scale_mid + 1..=scale_max(scale_mid)),
    }
}

/// Generates a corpus deterministically from `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let band = (spec.n_mel / 4).max(1);
    let label_band = 0..band;
    let aux_band = spec.n_mel - band..spec.n_mel;

    let mut utterances = Vec::new();
    let mut speaker_groups = BTreeMap::new();
    for g in 0..spec.n_groups {
        let shift = spec.group_shift(g);
        for s in 0..spec.n_speakers_per_group {
            let speaker = SyntheticSpec::speaker_id(g, s);
            let gender = if s % 2 == 0 { "F" } else { "M" };
            let aux_sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            speaker_groups.insert(speaker.clone(), g);

            let mut labels: Vec<usize> = (0..spec.utterances_per_speaker).map(|u| (u + s + g) % 3).collect();
            labels.shuffle(&mut rng);
            for (u, &label) in labels.iter().enumerate() {
                let stat = (label + 3 - shift) % 3;
                let summary_features = (0..spec.d_s)
                    .map(|d| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        if d == 0 {
                            z + g as f64 * spec.group_separation
                        } else {
                            z
                        }
                    })
                    .collect();
                let t = rng.random_range(spec.t_range.0..=spec.t_range.1);
                let mut frames = Vec::with_capacity(spec.n_mel * t);
                for c in 0..spec.n_mel {
                    let mut offset = 0.0;
                    if label_band.contains(&c) {
                        offset += spec.label_effect * (stat as f64 - 1.0);
                    }
                    if aux_band.contains(&c) {
                        offset += spec.aux_effect * aux_sign;
                    }
                    for _ in 0..t {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        frames.push(z + offset);
                    }
                }
                let bin = LabelBin::from_index(label).expect("label in 0..3");
                utterances.push(Utterance {
                    id: format!("{speaker}_u{u:04}"),
                    speaker_id: speaker.clone(),
                    attrs: [
                        ("group".to_string(), format!("g{g}")),
                        ("gender".to_string(), gender.to_string()),
                    ]
                    .into(),
                    annotations: vec![rating_for(bin, spec.scale_mid, &mut rng)],
                    scale_mid: spec.scale_mid,
                    summary_features,
                    framed_features: frames,
                    n_mel: spec.n_mel,
                    frame_count: t,
                });
            }
        }
    }

    let mut corpus = Corpus::new(spec.name.clone(), spec.scale_mid, spec.d_s, spec.n_mel, utterances)?;
    corpus.metadata.insert(
        "planted".into(),
        json!({
            "label_map_mode": spec.label_map_mode,
            "group_label_shift": (0..spec.n_groups).map(|g| spec.group_shift(g)).collect::<Vec<_>>(),
            "speaker_groups": speaker_groups,
            "label_band": [0, band],
            "aux_band": [spec.n_mel - band, spec.n_mel],
        }),
    );
    corpus.metadata.insert("spec".into(), serde_json::to_value(spec)?);
    Ok(corpus)
}
