use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::{group_breakdown, GroupBreakdown, Prediction};
use super::loso::loso_split;
use super::metrics::{uar, ConfusionMatrix};
use super::stats::{paired_t_test, TTestResult};
use crate::dataio::{Corpus, Utterance};
use crate::error::{Error, Result};
use crate::nhnn::{
    train_base_dcnn, train_mtl_cnn, train_nhnn, ClusterConfig, DcnnArch, DcnnModel, MtlCnn, NhnnModel,
    TrainingConfig, Variant,
};
use crate::scalar::argmax;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dcnn,
    Mtl,
    NhnnFc,
    NhnnFcConv,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Dcnn, ModelKind::Mtl, ModelKind::NhnnFc, ModelKind::NhnnFcConv];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dcnn => "dcnn",
            ModelKind::Mtl => "mtl",
            ModelKind::NhnnFc => "nhnn_fc",
            ModelKind::NhnnFcConv => "nhnn_fc_conv",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            ModelKind::NhnnFc => Some(Variant::Fc),
            ModelKind::NhnnFcConv => Some(Variant::FcConv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub models: Vec<ModelKind>,
    /// Each seed drives weight init, validation split, shuffling and the
    /// mixture fit; it replaces the seeds in the training and cluster
    /// sections.
    pub seeds: Vec<u64>,
    /// Baseline for paired tests and group deltas.
    pub reference: ModelKind,
    pub mtl_aux_attr: String,
    pub mtl_lambda: f64,
    /// Attributes to break UAR down by.
    pub breakdown_attrs: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            models: ModelKind::ALL.to_vec(),
            seeds: (0..5).collect(),
            reference: ModelKind::Dcnn,
            mtl_aux_attr: "gender".into(),
            mtl_lambda: 1.0,
            breakdown_attrs: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        let mut sorted = self.models.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.models.len() {
            return Err(Error::Config("models are listed more than once".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.mtl_lambda >= 0.0 && self.mtl_lambda.is_finite()) {
            return Err(Error::Config("mtl_lambda must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Everything needed to train and evaluate the requested models.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentSetup {
    pub arch: DcnnArch,
    pub training: TrainingConfig,
    pub cluster: ClusterConfig,
    pub experiment: ExperimentConfig,
}

impl ExperimentSetup {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.training.validate()?;
        self.cluster.validate()?;
        self.experiment.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Dcnn(DcnnModel<f64>),
    Mtl(MtlCnn<f64>),
    Nhnn(NhnnModel),
}

impl TrainedModel {
    pub fn predict(&self, utt: &Utterance) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Dcnn(m) => m.predict(utt),
            TrainedModel::Mtl(m) => m.predict(utt),
            TrainedModel::Nhnn(m) => m.predict(utt),
        }
    }

    pub fn n_clusters(&self) -> Option<usize> {
        match self {
            TrainedModel::Nhnn(m) => Some(m.n_clusters()),
            _ => None,
        }
    }
}

/// Trains every requested model on `corpus` with one seed. The NHNN variants
/// share the plain DCNN as their base.
pub fn train_models(corpus: &Corpus, setup: &ExperimentSetup, seed: u64) -> Result<Vec<(ModelKind, TrainedModel)>> {
    let exp = &setup.experiment;
    let training = TrainingConfig {
        seed,
        ..setup.training.clone()
    };
    let cluster = ClusterConfig {
        seed,
        ..setup.cluster.clone()
    };
    let needs_base = exp.models.iter().any(|m| *m != ModelKind::Mtl);
    let base = if needs_base {
        Some(train_base_dcnn(corpus, &setup.arch, &training)?.0)
    } else {
        None
    };
    exp.models
        .iter()
        .map(|&kind| {
            let model = match kind {
                ModelKind::Dcnn => TrainedModel::Dcnn(base.clone().expect("base trained")),
                ModelKind::Mtl => TrainedModel::Mtl(
                    train_mtl_cnn(corpus, &exp.mtl_aux_attr, &setup.arch, &training, exp.mtl_lambda)?.0,
                ),
                ModelKind::NhnnFc | ModelKind::NhnnFcConv => {
                    let variant = kind.variant().expect("nhnn kind");
                    let base = base.as_ref().expect("base trained");
                    TrainedModel::Nhnn(train_nhnn(corpus, base, variant, &cluster, &training)?.0)
                }
            };
            Ok((kind, model))
        })
        .collect()
}

fn predict_all(model: &TrainedModel, corpus: &Corpus) -> Result<Vec<Prediction>> {
    let labels = corpus.labels()?;
    corpus
        .utterances
        .iter()
        .zip(labels)
        .map(|(u, l)| {
            let probs = model.predict(u)?;
            Ok(Prediction {
                utterance_id: u.id.clone(),
                speaker_id: u.speaker_id.clone(),
                attrs: u.attrs.clone(),
                truth: l.index(),
                predicted: argmax(&probs),
                probs,
            })
        })
        .collect()
}

fn confusion(preds: &[Prediction], n_class: usize) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(n_class);
    for p in preds {
        cm.add(p.truth, p.predicted)?;
    }
    Ok(cm)
}

/// Runs `f` over `items` on a pool of `jobs` threads; output order follows
/// input order regardless of the thread count.
fn run_jobs<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    if jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScore {
    pub speaker: String,
    pub n: usize,
    pub uar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScores {
    pub seed: u64,
    pub subjects: Vec<SubjectScore>,
    /// Mean of the per-subject UARs.
    pub mean_uar: f64,
    /// Mean number of clusters over folds (hierarchical models only).
    pub mean_clusters: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithinModelSummary {
    pub model: ModelKind,
    pub seeds: Vec<SeedScores>,
    /// Average over seeds of the per-seed mean UAR.
    pub mean_uar: f64,
    /// Per-subject UAR averaged over seeds, in speaker order.
    pub subject_uar: Vec<f64>,
    pub pooled_confusion: ConfusionMatrix,
    pub breakdowns: Vec<GroupBreakdown>,
    /// Per attribute, group UAR minus the reference model's.
    pub breakdown_deltas: BTreeMap<String, BTreeMap<String, f64>>,
    /// Paired over subjects against the reference model.
    pub t_test: Option<TTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithinCorpusReport {
    pub schema_version: u32,
    pub kind: String,
    pub corpus: String,
    pub n_utterances: usize,
    pub speakers: Vec<String>,
    pub seeds: Vec<u64>,
    pub reference: ModelKind,
    pub models: Vec<WithinModelSummary>,
}

impl WithinCorpusReport {
    pub fn model(&self, kind: ModelKind) -> Option<&WithinModelSummary> {
        self.models.iter().find(|m| m.model == kind)
    }
}

struct FoldOutcome {
    predictions: Vec<Vec<Prediction>>,
    clusters: Vec<Option<usize>>,
}

fn breakdowns(preds: &[Prediction], attrs: &[String], n_class: usize) -> Result<Vec<GroupBreakdown>> {
    attrs.iter().map(|a| group_breakdown(preds, a, n_class)).collect()
}

fn deltas(own: &[GroupBreakdown], reference: &[GroupBreakdown]) -> BTreeMap<String, BTreeMap<String, f64>> {
    own.iter().zip(reference).map(|(o, r)| (o.attr.clone(), o.deltas(r))).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Leave-one-speaker-out evaluation of every requested model, repeated for
/// each seed. Each (seed, fold) job trains from scratch on the other
/// speakers; `jobs` caps the number of concurrent jobs.
pub fn run_within_corpus(corpus: &Corpus, setup: &ExperimentSetup, jobs: usize) -> Result<WithinCorpusReport> {
    setup.validate()?;
    let exp = &setup.experiment;
    let n_class = setup.arch.n_class;
    let plan = loso_split(corpus)?;
    let tasks: Vec<(u64, usize)> = exp
        .seeds
        .iter()
        .flat_map(|&s| (0..plan.folds.len()).map(move |f| (s, f)))
        .collect();
    let outcomes = run_jobs(jobs, &tasks, |&(seed, f)| {
        let fold = &plan.folds[f];
        log::info!("seed {seed}: holding out {}", fold.speaker);
        let train = corpus.subset(&fold.train);
        let test = corpus.subset(&fold.test);
        let models = train_models(&train, setup, seed)?;
        let mut out = FoldOutcome {
            predictions: Vec::new(),
            clusters: Vec::new(),
        };
        for (_, m) in &models {
            out.predictions.push(predict_all(m, &test)?);
            out.clusters.push(m.n_clusters());
        }
        Ok(out)
    })?;

    let n_folds = plan.folds.len();
    let mut summaries = Vec::with_capacity(exp.models.len());
    for (mi, &kind) in exp.models.iter().enumerate() {
        let mut seeds = Vec::new();
        let mut pooled = Vec::new();
        for (si, &seed) in exp.seeds.iter().enumerate() {
            let mut subjects = Vec::with_capacity(n_folds);
            let mut clusters = Vec::new();
            for (f, fold) in plan.folds.iter().enumerate() {
                let out = &outcomes[si * n_folds + f];
                let preds = &out.predictions[mi];
                subjects.push(SubjectScore {
                    speaker: fold.speaker.clone(),
                    n: preds.len(),
                    uar: uar(&confusion(preds, n_class)?)?,
                });
                clusters.extend(out.clusters[mi].map(|k| k as f64));
                pooled.extend(preds.iter().cloned());
            }
            let mean_uar = mean(&subjects.iter().map(|s| s.uar).collect::<Vec<_>>());
            seeds.push(SeedScores {
                seed,
                subjects,
                mean_uar,
                mean_clusters: (!clusters.is_empty()).then(|| mean(&clusters)),
            });
        }
        let subject_uar = (0..n_folds)
            .map(|f| mean(&seeds.iter().map(|s| s.subjects[f].uar).collect::<Vec<_>>()))
            .collect();
        summaries.push(WithinModelSummary {
            model: kind,
            mean_uar: mean(&seeds.iter().map(|s| s.mean_uar).collect::<Vec<_>>()),
            seeds,
            subject_uar,
            pooled_confusion: confusion(&pooled, n_class)?,
            breakdowns: breakdowns(&pooled, &exp.breakdown_attrs, n_class)?,
            breakdown_deltas: BTreeMap::new(),
            t_test: None,
        });
    }
    attach_reference(&mut summaries, exp.reference, |s| &s.subject_uar, |s| &s.breakdowns, |s, t, d| {
        s.t_test = t;
        s.breakdown_deltas = d;
    })?;

    Ok(WithinCorpusReport {
        schema_version: REPORT_SCHEMA_VERSION,
        kind: "within_corpus".into(),
        corpus: corpus.name.clone(),
        n_utterances: corpus.len(),
        speakers: plan.folds.iter().map(|f| f.speaker.clone()).collect(),
        seeds: exp.seeds.clone(),
        reference: exp.reference,
        models: summaries,
    })
}

type Deltas = BTreeMap<String, BTreeMap<String, f64>>;

/// Fills paired tests and group deltas against the reference model, when it
/// was evaluated.
fn attach_reference<S, P, B, W>(summaries: &mut [S], reference: ModelKind, paired: P, groups: B, write: W) -> Result<()>
where
    S: HasKind,
    P: Fn(&S) -> &Vec<f64>,
    B: Fn(&S) -> &Vec<GroupBreakdown>,
    W: Fn(&mut S, Option<TTestResult>, Deltas),
{
    let Some(r) = summaries.iter().position(|s| s.kind() == reference) else {
        log::warn!("reference model {} was not evaluated; skipping paired tests", reference.name());
        return Ok(());
    };
    let ref_scores = paired(&summaries[r]).clone();
    let ref_groups = groups(&summaries[r]).clone();
    for (i, s) in summaries.iter_mut().enumerate() {
        if i == r {
            continue;
        }
        let t = if ref_scores.len() >= 2 {
            Some(paired_t_test(paired(s), &ref_scores)?)
        } else {
            None
        };
        let d = deltas(groups(s), &ref_groups);
        write(s, t, d);
    }
    Ok(())
}

trait HasKind {
    fn kind(&self) -> ModelKind;
}

impl HasKind for WithinModelSummary {
    fn kind(&self) -> ModelKind {
        self.model
    }
}

impl HasKind for CrossModelSummary {
    fn kind(&self) -> ModelKind {
        self.model
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedUar {
    pub seed: u64,
    pub uar: f64,
    pub n_clusters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossModelSummary {
    pub model: ModelKind,
    pub per_seed: Vec<SeedUar>,
    pub seed_uar: Vec<f64>,
    pub mean_uar: f64,
    pub pooled_confusion: ConfusionMatrix,
    pub breakdowns: Vec<GroupBreakdown>,
    pub breakdown_deltas: Deltas,
    /// Paired over seeds against the reference model.
    pub t_test: Option<TTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCorpusReport {
    pub schema_version: u32,
    pub kind: String,
    pub train_corpus: String,
    pub test_corpus: String,
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub reference: ModelKind,
    pub models: Vec<CrossModelSummary>,
}

impl CrossCorpusReport {
    pub fn model(&self, kind: ModelKind) -> Option<&CrossModelSummary> {
        self.models.iter().find(|m| m.model == kind)
    }
}

/// Trains on all of `train` and evaluates once on all of `test` for each
/// seed. Test utterances are scored under the mixture fitted on `train`.
pub fn run_cross_corpus(train: &Corpus, test: &Corpus, setup: &ExperimentSetup, jobs: usize) -> Result<CrossCorpusReport> {
    setup.validate()?;
    if train.d_s != test.d_s {
        return Err(Error::dims("summary features", train.d_s, test.d_s));
    }
    if train.n_mel != test.n_mel {
        return Err(Error::dims("mel coefficients", train.n_mel, test.n_mel));
    }
    if test.is_empty() {
        return Err(Error::domain("empty test corpus"));
    }
    let exp = &setup.experiment;
    let n_class = setup.arch.n_class;
    let outcomes = run_jobs(jobs, &exp.seeds, |&seed| {
        log::info!("seed {seed}: training on {}", train.name);
        let models = train_models(train, setup, seed)?;
        models
            .iter()
            .map(|(_, m)| Ok((predict_all(m, test)?, m.n_clusters())))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut summaries = Vec::with_capacity(exp.models.len());
    for (mi, &kind) in exp.models.iter().enumerate() {
        let mut per_seed = Vec::new();
        let mut pooled = Vec::new();
        for (si, &seed) in exp.seeds.iter().enumerate() {
            let (preds, k) = &outcomes[si][mi];
            per_seed.push(SeedUar {
                seed,
                uar: uar(&confusion(preds, n_class)?)?,
                n_clusters: *k,
            });
            pooled.extend(preds.iter().cloned());
        }
        let seed_uar: Vec<f64> = per_seed.iter().map(|s| s.uar).collect();
        summaries.push(CrossModelSummary {
            model: kind,
            mean_uar: mean(&seed_uar),
            per_seed,
            seed_uar,
            pooled_confusion: confusion(&pooled, n_class)?,
            breakdowns: breakdowns(&pooled, &exp.breakdown_attrs, n_class)?,
            breakdown_deltas: BTreeMap::new(),
            t_test: None,
        });
    }
    attach_reference(&mut summaries, exp.reference, |s| &s.seed_uar, |s| &s.breakdowns, |s, t, d| {
        s.t_test = t;
        s.breakdown_deltas = d;
    })?;

    Ok(CrossCorpusReport {
        schema_version: REPORT_SCHEMA_VERSION,
        kind: "cross_corpus".into(),
        train_corpus: train.name.clone(),
        test_corpus: test.name.clone(),
        n_train: train.len(),
        n_test: test.len(),
        seeds: exp.seeds.clone(),
        reference: exp.reference,
        models: summaries,
    })
}
