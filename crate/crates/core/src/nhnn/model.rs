use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::{DcnnArch, DcnnModel, Head};
use super::cluster::{fit_clusters, ClusterConfig, ClusterModel};
use super::train::{corpus_labels, fit, pick, split_validation, TrainLog, Trainable, TrainingConfig};
use crate::dataio::{Corpus, LabelBin, NormStats, Utterance};
use crate::dpgmm::{responsibilities, DpGmmModel, PruneReport};
use crate::error::{Error, Result};
use crate::neural::{cross_entropy, Checkpoint, Tensor};
use crate::scalar::argmax;

/// Which encoder layers the per-cluster heads share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Both convolutions shared and frozen; heads own the classifier.
    Fc,
    /// First convolution shared and frozen; heads own the second
    /// convolution and the classifier.
    FcConv,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Fc => "fc",
            Variant::FcConv => "fc_conv",
        }
    }
}

/// Shared encoder, one head per surviving mixture component, and the
/// mixture that weights the heads.
#[derive(Debug, Clone, PartialEq)]
pub struct NhnnModel {
    pub variant: Variant,
    pub base: DcnnModel<f64>,
    pub heads: Vec<Head<f64>>,
    /// Whether each head was fine-tuned or kept the base classifier.
    pub head_trained: Vec<bool>,
    pub clusters: ClusterModel,
}

/// Clones the base model's trainable part once per active component.
pub fn build_nhnn(base: &DcnnModel<f64>, clusters: ClusterModel, variant: Variant) -> Result<NhnnModel> {
    let k = clusters.n_clusters();
    if k == 0 {
        return Err(Error::domain("mixture has no active components"));
    }
    if clusters.dpgmm.dim() == 0 {
        return Err(Error::domain("mixture has zero-dimensional components"));
    }
    let head = Head {
        conv2: (variant == Variant::FcConv).then(|| base.encoder.conv2.clone()),
        classifier: base.classifier.clone(),
    };
    Ok(NhnnModel {
        variant,
        base: base.clone(),
        heads: vec![head; k],
        head_trained: vec![false; k],
        clusters,
    })
}

/// `P(z = j | x) = Σ_i r_i π_j(φ_i)`.
pub fn mix(resp: &[f64], head_probs: &[Vec<f64>]) -> Vec<f64> {
    let n_class = head_probs.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n_class];
    for (&r, p) in resp.iter().zip(head_probs) {
        for (o, &v) in out.iter_mut().zip(p) {
            *o += r * v;
        }
    }
    out
}

impl NhnnModel {
    pub fn n_clusters(&self) -> usize {
        self.heads.len()
    }

    /// What the heads consume: the pooled embedding (FC) or the first-layer
    /// activations (FC+Conv).
    pub fn head_input(&self, x: &[f64], len: usize) -> Result<Vec<f64>> {
        match self.variant {
            Variant::Fc => self.base.encoder.embed(x, len),
            Variant::FcConv => self.base.encoder.first_layer(x, len),
        }
    }

    /// Every head's class distribution for a normalized `n_mel × len` input.
    pub fn head_probs(&self, x: &[f64], len: usize) -> Result<Vec<Vec<f64>>> {
        let input = self.head_input(x, len)?;
        self.heads.iter().map(|h| h.forward(&input, len)).collect()
    }

    /// Responsibilities of the heads for raw summary features.
    pub fn responsibilities(&self, summary: &[f64]) -> Result<Vec<f64>> {
        let z = self.clusters.transform(summary)?;
        Ok(responsibilities(&self.clusters.dpgmm, &[z])?.rows.remove(0))
    }

    /// Weighted class distribution from raw summary features and a
    /// normalized frame input.
    pub fn predict_features(&self, summary: &[f64], x: &[f64], len: usize) -> Result<Vec<f64>> {
        let r = self.responsibilities(summary)?;
        Ok(mix(&r, &self.head_probs(x, len)?))
    }

    pub fn predict(&self, utt: &Utterance) -> Result<Vec<f64>> {
        let (x, len) = self.base.prepare(utt)?;
        self.predict_features(&utt.summary_features, &x, len)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let meta = BundleMeta {
            format_version: BUNDLE_VERSION,
            variant: self.variant,
            arch: self.base.arch.clone(),
            cluster_ids: self.clusters.dpgmm.active_indices(),
            head_trained: self.head_trained.clone(),
            frame_norm: self.base.frame_norm.clone(),
            summary_norm: self.clusters.summary_norm.clone(),
        };
        fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
        self.clusters.dpgmm.save_json(dir.join("dpgmm.json"))?;
        Checkpoint::capture(&self.base).save(dir.join("base.json"))?;
        for (i, h) in self.heads.iter().enumerate() {
            Checkpoint::capture(h).save(dir.join(format!("head_{i:03}.json")))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join("metadata.json");
        if !meta_path.is_file() {
            return Err(Error::MissingFile(meta_path));
        }
        let meta: BundleMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
        if meta.format_version != BUNDLE_VERSION {
            return Err(Error::Checkpoint(format!("unsupported bundle version {}", meta.format_version)));
        }
        let dpgmm = DpGmmModel::load_json(dir.join("dpgmm.json"))?;
        if dpgmm.active_indices() != meta.cluster_ids {
            return Err(Error::Checkpoint("cluster ids disagree with the saved mixture".into()));
        }
        let mut base = DcnnModel::new(&meta.arch, &mut ChaCha8Rng::seed_from_u64(0))?;
        Checkpoint::load(dir.join("base.json"))?.restore(&mut base)?;
        base.frame_norm = meta.frame_norm;
        let clusters = ClusterModel {
            summary_norm: meta.summary_norm,
            dpgmm,
        };
        let mut model = build_nhnn(&base, clusters, meta.variant)?;
        if meta.head_trained.len() != model.heads.len() {
            return Err(Error::Checkpoint("head count disagrees with the saved mixture".into()));
        }
        for (i, h) in model.heads.iter_mut().enumerate() {
            Checkpoint::load(dir.join(format!("head_{i:03}.json")))?.restore(h)?;
        }
        model.head_trained = meta.head_trained;
        Ok(model)
    }
}

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleMeta {
    format_version: u32,
    variant: Variant,
    arch: DcnnArch,
    cluster_ids: Vec<usize>,
    head_trained: Vec<bool>,
    frame_norm: Option<NormStats>,
    summary_norm: Option<NormStats>,
}

pub fn predict_weighted(model: &NhnnModel, utt: &Utterance) -> Result<Vec<f64>> {
    model.predict(utt)
}

/// Most probable class; ties go to the lowest index.
pub fn predict_label(model: &NhnnModel, utt: &Utterance) -> Result<LabelBin> {
    label_of(&model.predict(utt)?)
}

pub fn label_of(probs: &[f64]) -> Result<LabelBin> {
    LabelBin::from_index(argmax(probs)).ok_or_else(|| Error::domain("class index outside the valence bins"))
}

#[derive(Debug, Clone)]
pub(crate) struct HeadSample {
    pub x: Vec<f64>,
    pub len: usize,
    pub label: usize,
}

impl Trainable for Head<f64> {
    type Sample = HeadSample;

    fn accumulate(&self, s: &HeadSample, scale: f64, grads: &mut [Tensor<f64>]) -> Result<f64> {
        self.accumulate_grads(&s.x, s.len, s.label, scale, grads)
    }

    fn validate_one(&self, s: &HeadSample) -> Result<(f64, Vec<f64>)> {
        let p = self.forward(&s.x, s.len)?;
        Ok((cross_entropy(&p, s.label)?, p))
    }

    fn label(s: &HeadSample) -> usize {
        s.label
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub cluster_sizes: Vec<usize>,
    pub trained: Vec<bool>,
    pub logs: Vec<Option<TrainLog>>,
}

const HEAD_STREAM_BASE: u64 = 16;

/// Fine-tunes each head on the training utterances hard-assigned to its
/// cluster. Heads with fewer than `2 · batch_size` utterances keep the base
/// classifier.
pub fn finetune_heads(model: &NhnnModel, corpus: &Corpus, cfg: &TrainingConfig) -> Result<(NhnnModel, FinetuneReport)> {
    cfg.validate()?;
    let labels = corpus_labels(corpus, model.base.arch.n_class)?;
    let assign = model.clusters.assign(corpus)?;
    let k = model.n_clusters();
    let mut members = vec![Vec::new(); k];
    for (i, &a) in assign.iter().enumerate() {
        members[a].push(i);
    }
    let min_size = 2 * cfg.batch_size;
    let needed: Vec<bool> = members.iter().map(|m| m.len() >= min_size).collect();
    // frozen layers are fixed, so head inputs are computed once
    let inputs: Vec<Option<HeadSample>> = corpus
        .utterances
        .par_iter()
        .zip(&assign)
        .zip(&labels)
        .map(|((u, &a), &label)| {
            if !needed[a] {
                return Ok(None);
            }
            let (x, len) = model.base.prepare(u)?;
            Ok(Some(HeadSample {
                x: model.head_input(&x, len)?,
                len,
                label,
            }))
        })
        .collect::<Result<_>>()?;

    let results: Vec<(Head<f64>, Option<TrainLog>)> = (0..k)
        .into_par_iter()
        .map(|i| {
            if !needed[i] {
                log::info!("cluster {i}: {} utterances, keeping the base classifier", members[i].len());
                return Ok((model.heads[i].clone(), None));
            }
            let samples: Vec<HeadSample> = members[i].iter().map(|&j| inputs[j].clone().expect("prepared")).collect();
            let stream = HEAD_STREAM_BASE + 2 * i as u64;
            let (tr, va) = split_validation(samples.len(), cfg.validation_fraction, cfg.seed, stream)?;
            let (head, log) = fit(model.heads[i].clone(), &pick(&samples, &tr), &pick(&samples, &va), cfg, stream + 1)?;
            Ok((head, Some(log)))
        })
        .collect::<Result<_>>()?;

    let mut out = model.clone();
    let mut logs = Vec::with_capacity(k);
    for (i, (head, log)) in results.into_iter().enumerate() {
        out.heads[i] = head;
        out.head_trained[i] = log.is_some();
        logs.push(log);
    }
    let report = FinetuneReport {
        cluster_sizes: members.iter().map(Vec::len).collect(),
        trained: out.head_trained.clone(),
        logs,
    };
    Ok((out, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NhnnTrainReport {
    pub prune: PruneReport,
    pub finetune: FinetuneReport,
}

/// Clusters the corpus' summary features, builds the heads from `base` and
/// fine-tunes them.
pub fn train_nhnn(
    corpus: &Corpus,
    base: &DcnnModel<f64>,
    variant: Variant,
    cluster_cfg: &ClusterConfig,
    cfg: &TrainingConfig,
) -> Result<(NhnnModel, NhnnTrainReport)> {
    let fit_result = fit_clusters(corpus, cluster_cfg)?;
    let model = build_nhnn(base, fit_result.model, variant)?;
    let (model, finetune) = finetune_heads(&model, corpus, cfg)?;
    Ok((
        model,
        NhnnTrainReport {
            prune: fit_result.prune,
            finetune,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic, SyntheticSpec};
    use crate::neural::Parameterized;
    use crate::nhnn::train::{stream_rng, STREAM_INIT};
    use crate::nhnn::train_base_dcnn;
    use proptest::prelude::*;
    use rand::Rng;

    fn arch(n_mel: usize) -> DcnnArch {
        DcnnArch {
            n_mel,
            channels: 6,
            kernel_size: 3,
            dilations: [1, 2],
            hidden: 6,
            n_class: 3,
        }
    }

    fn mixture(k: usize, d: usize, rng: &mut ChaCha8Rng) -> ClusterModel {
        let weights = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let means = (0..k).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let vars = (0..k).map(|_| (0..d).map(|_| rng.random_range(0.5..2.0)).collect()).collect();
        ClusterModel {
            summary_norm: None,
            dpgmm: DpGmmModel::from_components(weights, means, vars).unwrap(),
        }
    }

    fn perturb_heads(m: &mut NhnnModel, rng: &mut ChaCha8Rng) {
        for h in &mut m.heads {
            for t in h.params_mut() {
                t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
            }
        }
    }

    #[test]
    fn single_cluster_reduces_to_base() {
        let mut rng = stream_rng(1, STREAM_INIT);
        let base = DcnnModel::<f64>::new(&arch(3), &mut rng).unwrap();
        for variant in [Variant::Fc, Variant::FcConv] {
            let m = build_nhnn(&base, mixture(1, 2, &mut rng), variant).unwrap();
            for _ in 0..50 {
                let len = rng.random_range(1..10);
                let x: Vec<f64> = (0..3 * len).map(|_| rng.random_range(-2.0..2.0)).collect();
                let s = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
                let got = m.predict_features(&s, &x, len).unwrap();
                let want = base.forward(&x, len).unwrap();
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn hand_mixture() {
        assert_eq!(mix(&[0.5, 0.5], &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]), vec![0.5, 0.5, 0.0]);
        assert_eq!(label_of(&[0.5, 0.5, 0.0]).unwrap(), LabelBin::Low);
        assert_eq!(label_of(&[0.1, 0.2, 0.7]).unwrap(), LabelBin::High);
    }

    /// Eq. 9 evaluated with explicit densities.
    fn brute_force(m: &NhnnModel, s: &[f64], x: &[f64], len: usize) -> Vec<f64> {
        let g = &m.clusters.dpgmm;
        let dens: Vec<f64> = (0..g.weights.len())
            .map(|k| {
                let mut p = g.weights[k];
                for d in 0..s.len() {
                    let v = g.variances[k][d];
                    p *= (-(s[d] - g.means[k][d]).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
                }
                p
            })
            .collect();
        let total: f64 = dens.iter().sum();
        let emb = m.base.encoder.embed(x, len).unwrap();
        let mut out = vec![0.0; 3];
        for (k, h) in m.heads.iter().enumerate() {
            let p = h.classifier.predict(&emb).unwrap();
            for j in 0..3 {
                out[j] += dens[k] / total * p[j];
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_mixture() {
        let mut rng = stream_rng(2, STREAM_INIT);
        let base = DcnnModel::<f64>::new(&arch(3), &mut rng).unwrap();
        for k in [2, 3, 5] {
            let mut m = build_nhnn(&base, mixture(k, 2, &mut rng), Variant::Fc).unwrap();
            perturb_heads(&mut m, &mut rng);
            for _ in 0..20 {
                let x: Vec<f64> = (0..3 * 6).map(|_| rng.random_range(-2.0..2.0)).collect();
                let s = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let got = m.predict_features(&s, &x, 6).unwrap();
                let want = brute_force(&m, &s, &x, 6);
                assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn variants_share_the_right_layers() {
        let mut rng = stream_rng(3, STREAM_INIT);
        let base = DcnnModel::<f64>::new(&arch(3), &mut rng).unwrap();
        let fc = build_nhnn(&base, mixture(2, 1, &mut rng), Variant::Fc).unwrap();
        assert!(fc.heads.iter().all(|h| h.conv2.is_none()));
        let fcc = build_nhnn(&base, mixture(2, 1, &mut rng), Variant::FcConv).unwrap();
        assert!(fcc.heads.iter().all(|h| h.conv2.as_ref() == Some(&base.encoder.conv2)));
    }

    fn flipped_corpus(seed: u64) -> Corpus {
        generate_synthetic(&SyntheticSpec {
            n_speakers_per_group: 3,
            utterances_per_speaker: 60,
            d_s: 4,
            n_mel: 4,
            t_range: (6, 10),
            label_effect: 4.0,
            seed,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn accuracy(pred: impl Fn(&Utterance) -> Vec<f64>, corpus: &Corpus, idx: &[usize]) -> f64 {
        let labels = corpus.labels().unwrap();
        let hits = idx
            .iter()
            .filter(|&&i| argmax(&pred(&corpus.utterances[i])) == labels[i].index())
            .count();
        hits as f64 / idx.len() as f64
    }

    #[test]
    fn heads_learn_group_specific_mappings() {
        let corpus = flipped_corpus(4);
        let cfg = TrainingConfig {
            learning_rate: 1e-2,
            batch_size: 16,
            ..TrainingConfig::default()
        };
        let wide = DcnnArch {
            channels: 12,
            hidden: 12,
            ..arch(4)
        };
        let (base, _) = train_base_dcnn(&corpus, &wide, &cfg).unwrap();
        let (m, report) = train_nhnn(&corpus, &base, Variant::Fc, &ClusterConfig::default(), &cfg).unwrap();
        assert_eq!(m.n_clusters(), 2);
        assert!(report.finetune.trained.iter().all(|&t| t));
        assert_eq!(m.base.encoder, base.encoder);
        let assign = m.clusters.assign(&corpus).unwrap();
        for c in 0..2 {
            let idx: Vec<usize> = (0..corpus.len()).filter(|&i| assign[i] == c).collect();
            let head_acc = accuracy(|u| m.predict(u).unwrap(), &corpus, &idx);
            assert!(head_acc >= 0.9, "cluster {c}: head accuracy {head_acc}");
        }
        // a flat rule's per-cluster accuracies sum to about 1, so the bound
        // applies to the corpus as a whole
        let all: Vec<usize> = (0..corpus.len()).collect();
        let base_acc = accuracy(|u| base.predict(u).unwrap(), &corpus, &all);
        assert!(base_acc <= 0.6, "base accuracy {base_acc}");
    }

    #[test]
    fn fc_conv_keeps_first_layer_and_small_clusters() {
        let corpus = flipped_corpus(5);
        let cfg = TrainingConfig {
            max_epochs: 2,
            batch_size: 32,
            ..TrainingConfig::default()
        };
        let (base, _) = train_base_dcnn(&corpus, &arch(4), &cfg).unwrap();
        let (m, _) = train_nhnn(&corpus, &base, Variant::FcConv, &ClusterConfig::default(), &cfg).unwrap();
        assert_eq!(m.base.encoder.conv1, base.encoder.conv1);
        assert!(m.heads.iter().any(|h| h.conv2.as_ref() != Some(&base.encoder.conv2)));

        // a guard larger than any cluster leaves every head untouched
        let big = TrainingConfig {
            batch_size: corpus.len(),
            ..cfg
        };
        let fresh = build_nhnn(&base, m.clusters.clone(), Variant::FcConv).unwrap();
        let (same, report) = finetune_heads(&fresh, &corpus, &big).unwrap();
        assert_eq!(same, fresh);
        assert!(report.trained.iter().all(|&t| !t));
    }

    #[test]
    fn bundle_round_trip() {
        let mut rng = stream_rng(6, STREAM_INIT);
        let base = DcnnModel::<f64>::new(&arch(3), &mut rng).unwrap();
        for variant in [Variant::Fc, Variant::FcConv] {
            let mut m = build_nhnn(&base, mixture(3, 2, &mut rng), variant).unwrap();
            perturb_heads(&mut m, &mut rng);
            let dir = tempfile::tempdir().unwrap();
            m.save(dir.path()).unwrap();
            assert_eq!(NhnnModel::load(dir.path()).unwrap(), m);
        }
        assert!(matches!(NhnnModel::load("/nonexistent/bundle"), Err(Error::MissingFile(_))));
    }

    proptest! {
        #[test]
        fn weighted_output_is_convex_and_scale_invariant(seed in 0u64..500, c in 0.01f64..100.0) {
            let mut rng = stream_rng(seed, STREAM_INIT);
            let base = DcnnModel::<f64>::new(&arch(2), &mut rng).unwrap();
            let mut m = build_nhnn(&base, mixture(3, 2, &mut rng), Variant::Fc).unwrap();
            perturb_heads(&mut m, &mut rng);
            let x: Vec<f64> = (0..2 * 5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let p = m.predict_features(&s, &x, 5).unwrap();
            let heads = m.head_probs(&x, 5).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..3 {
                let lo = heads.iter().map(|h| h[j]).fold(f64::INFINITY, f64::min);
                let hi = heads.iter().map(|h| h[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(p[j] >= lo - 1e-12 && p[j] <= hi + 1e-12);
            }
            let mut scaled = m.clone();
            scaled.clusters.dpgmm.weights.iter_mut().for_each(|w| *w *= c);
            prop_assert_eq!(argmax(&scaled.predict_features(&s, &x, 5).unwrap()), argmax(&p));
        }
    }
}
