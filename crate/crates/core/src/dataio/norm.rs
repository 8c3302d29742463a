use serde::{Deserialize, Serialize};

use super::corpus::Utterance;
use crate::error::{Error, Result};
use crate::neural::Tensor;
use crate::VARIANCE_FLOOR;

/// Per-feature mean and (population, floored) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Column statistics of a set of equal-length rows.
    pub fn fit_rows<'a, I>(rows: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]> + Clone,
    {
        let mut count = 0usize;
        let mut sum = vec![0.0; dim];
        for row in rows.clone() {
            if row.len() != dim {
                return Err(Error::dims("feature row", dim, row.len()));
            }
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            count += 1;
        }
        if count < 2 {
            return Err(Error::domain("need at least two rows to fit normalization statistics"));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
        let mut ss = vec![0.0; dim];
        for row in rows {
            for ((acc, v), m) in ss.iter_mut().zip(row).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = ss.into_iter().map(|s| (s / n).sqrt().max(VARIANCE_FLOOR)).collect();
        Ok(NormStats { mean, std })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.mean.len() != dim || self.std.len() != dim {
            return Err(Error::dims("normalization statistics", dim, self.mean.len().min(self.std.len())));
        }
        if self.std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::domain("normalization statistics must be finite with positive std"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn invert_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }
}

/// Per-mel-coefficient statistics over every frame of every training utterance.
pub fn fit_norm_stats(train: &[&Utterance]) -> Result<NormStats> {
    let first = train.first().ok_or_else(|| Error::domain("empty training set"))?;
    let n_mel = first.n_mel;
    let mut frames = 0usize;
    let mut sum = vec![0.0; n_mel];
    for u in train {
        if u.n_mel != n_mel {
            return Err(Error::dims(format!("mel coefficients of {}", u.id), n_mel, u.n_mel));
        }
        for (c, s) in sum.iter_mut().enumerate() {
            *s += u.framed_features[c * u.frame_count..(c + 1) * u.frame_count].iter().sum::<f64>();
        }
        frames += u.frame_count;
    }
    if frames < 2 {
        return Err(Error::domain("need at least two training frames per mel coefficient"));
    }
    let n = frames as f64;
    let mean: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
    let mut ss = vec![0.0; n_mel];
    for u in train {
        for (c, acc) in ss.iter_mut().enumerate() {
            let m = mean[c];
            *acc += u.framed_features[c * u.frame_count..(c + 1) * u.frame_count]
                .iter()
                .map(|v| (v - m) * (v - m))
                .sum::<f64>();
        }
    }
    let std = ss.into_iter().map(|s| (s / n).sqrt().max(VARIANCE_FLOOR)).collect();
    Ok(NormStats { mean, std })
}

/// Z-normalized copy of an utterance's framed features (`n_mel × T`).
pub fn apply_znorm(utt: &Utterance, stats: &NormStats) -> Result<Vec<f64>> {
    if stats.dim() != utt.n_mel {
        return Err(Error::dims("normalization statistics", utt.n_mel, stats.dim()));
    }
    let t = utt.frame_count;
    let mut out = Vec::with_capacity(utt.framed_features.len());
    for c in 0..utt.n_mel {
        let (m, s) = (stats.mean[c], stats.std[c]);
        out.extend(utt.framed_features[c * t..(c + 1) * t].iter().map(|v| (v - m) / s));
    }
    Ok(out)
}

/// Zero-padded `n × n_mel × max_T` batch with the true frame counts alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub data: Tensor<f64>,
    pub lengths: Vec<usize>,
}

impl PaddedBatch {
    /// The unpadded `n_mel × len` matrix of sample `i`.
    pub fn sample(&self, i: usize) -> Vec<f64> {
        let (n_mel, max_t) = (self.data.shape()[1], self.data.shape()[2]);
        let len = self.lengths[i];
        let base = i * n_mel * max_t;
        let mut out = Vec::with_capacity(n_mel * len);
        for c in 0..n_mel {
            let row = base + c * max_t;
            out.extend_from_slice(&self.data.data()[row..row + len]);
        }
        out
    }
}

/// Pads `(frames, length)` pairs to a common length. `max_t` defaults to the
/// longest input; a smaller `max_t` truncates longer inputs.
pub fn pad_batch(utts: &[(&[f64], usize)], n_mel: usize, max_t: Option<usize>) -> Result<PaddedBatch> {
    let longest = utts.iter().map(|(_, t)| *t).max().unwrap_or(0);
    let width = max_t.unwrap_or(longest);
    let mut data = vec![0.0; utts.len() * n_mel * width];
    let mut lengths = Vec::with_capacity(utts.len());
    for (i, (frames, t)) in utts.iter().enumerate() {
        if frames.len() != n_mel * t {
            return Err(Error::dims("framed features", n_mel * t, frames.len()));
        }
        let len = (*t).min(width);
        for c in 0..n_mel {
            let dst = i * n_mel * width + c * width;
            data[dst..dst + len].copy_from_slice(&frames[c * t..c * t + len]);
        }
        lengths.push(len);
    }
    Ok(PaddedBatch {
        data: Tensor::from_vec(vec![utts.len(), n_mel, width], data)?,
        lengths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn utt_frames(id: &str, n_mel: usize, frames: Vec<f64>) -> Utterance {
        let t = frames.len() / n_mel;
        Utterance {
            id: id.into(),
            speaker_id: "s".into(),
            attrs: BTreeMap::new(),
            annotations: vec![3],
            scale_mid: 3,
            summary_features: vec![],
            framed_features: frames,
            n_mel,
            frame_count: t,
        }
    }

    #[test]
    fn population_std_convention() {
        let u = utt_frames("a", 1, vec![0.0, 2.0]);
        let stats = fit_norm_stats(&[&u]).unwrap();
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.std, vec![1.0]);
        let v = utt_frames("b", 1, vec![2.0]);
        assert_eq!(apply_znorm(&v, &stats).unwrap(), vec![1.0]);
    }

    #[test]
    fn constant_coefficient_normalizes_to_zero() {
        let u = utt_frames("a", 2, vec![7.0, 7.0, 7.0, 1.0, 2.0, 3.0]);
        let stats = fit_norm_stats(&[&u]).unwrap();
        assert_eq!(stats.std[0], VARIANCE_FLOOR);
        let z = apply_znorm(&u, &stats).unwrap();
        assert!(z[..3].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn training_set_is_centered_after_normalization() {
        let a = utt_frames("a", 2, vec![1.0, 4.0, 9.0, -3.0, 0.5, 2.0]);
        let b = utt_frames("b", 2, vec![2.0, 8.0, 11.0, 5.0]);
        let stats = fit_norm_stats(&[&a, &b]).unwrap();
        let za = apply_znorm(&a, &stats).unwrap();
        let zb = apply_znorm(&b, &stats).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = za[c * 3..c * 3 + 3].iter().chain(&zb[c * 2..c * 2 + 2]).copied().collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn errors_on_empty_or_single_frame() {
        assert!(fit_norm_stats(&[]).is_err());
        let u = utt_frames("a", 1, vec![1.0]);
        assert!(fit_norm_stats(&[&u]).is_err());
    }

    #[test]
    fn pad_batch_shapes_and_zero_padding() {
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2 x 3
        let b = vec![1.0; 10]; // 2 x 5
        let batch = pad_batch(&[(&a, 3), (&b, 5)], 2, None).unwrap();
        assert_eq!(batch.data.shape(), &[2, 2, 5]);
        assert_eq!(batch.lengths, vec![3, 5]);
        let d = batch.data.data();
        assert_eq!(&d[3..5], &[0.0, 0.0]);
        assert_eq!(&d[8..10], &[0.0, 0.0]);
        assert_eq!(batch.sample(0), a);

        let single = pad_batch(&[(&b, 5)], 2, None).unwrap();
        assert_eq!(single.data.shape(), &[1, 2, 5]);
        assert_eq!(single.lengths, vec![5]);
    }

    proptest! {
        #[test]
        fn znorm_round_trips(values in proptest::collection::vec(-50.0f64..50.0, 6..40)) {
            let n = values.len() / 2 * 2;
            let u = utt_frames("a", 2, values[..n].to_vec());
            let stats = fit_norm_stats(&[&u]).unwrap();
            let z = apply_znorm(&u, &stats).unwrap();
            let t = u.frame_count;
            for c in 0..2 {
                if stats.std[c] > VARIANCE_FLOOR {
                    for i in 0..t {
                        let back = z[c * t + i] * stats.std[c] + stats.mean[c];
                        prop_assert!((back - u.framed_features[c * t + i]).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
