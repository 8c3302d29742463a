//! Config-driven entry points behind the `nhnn` binary.
//!
//! Every command reads one JSON [`RunConfig`], validates it and its inputs
//! before touching the output directory, and writes under
//!
//! ```text
//! <out>/model/    trained artifacts
//! <out>/reports/  JSON reports and aligned text tables
//! <out>/logs/     the effective configuration of the run
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{generate_synthetic, load_corpus, save_corpus, Corpus, LabelBin, SyntheticSpec};
use crate::dpgmm::PruneReport;
use crate::error::{Error, Result};
use crate::evaluation::{
    cluster_attribute_ratios, render_cluster_ratios, render_cross, render_within, run_cross_corpus,
    run_within_corpus, ClusterRatioReport, CrossCorpusReport, ExperimentConfig, ExperimentSetup, WithinCorpusReport,
    REPORT_SCHEMA_VERSION,
};
use crate::nhnn::{
    fit_clusters, label_of, train_base_dcnn, train_nhnn, ClusterConfig, ClusterModel, DcnnArch, NhnnModel,
    NhnnTrainReport, TrainLog, TrainingConfig, Variant,
};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Training (or only) corpus.
    pub manifest: Option<PathBuf>,
    /// Test corpus for cross-corpus evaluation.
    pub test_manifest: Option<PathBuf>,
    /// Saved cluster model; `cluster` assigns with it instead of refitting.
    pub cluster_model: Option<PathBuf>,
    /// Model bundle for `predict`; defaults to `<out>/model/nhnn`.
    pub model_dir: Option<PathBuf>,
    /// Utterances to score in `predict`; empty means all.
    pub utterances: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub arch: DcnnArch,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Fc,
            arch: DcnnArch::default(),
        }
    }
}

/// Binary attribute whose per-cluster ratio is reported by `cluster`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub ratio_attr: String,
    pub ratio_values: [String; 2],
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            ratio_attr: "gender".into(),
            ratio_values: ["F".into(), "M".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub synth: SyntheticSpec,
    pub dpgmm: ClusterConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub experiment: ExperimentConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Reads a JSON config. Relative paths are taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut cfg: RunConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        resolve(base, &mut cfg.data.manifest);
        resolve(base, &mut cfg.data.test_manifest);
        resolve(base, &mut cfg.data.cluster_model);
        resolve(base, &mut cfg.data.model_dir);
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    /// Replaces every seed in the config.
    pub fn override_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.dpgmm.seed = seed;
        self.training.seed = seed;
        self.experiment.seeds = vec![seed];
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.dpgmm.validate()?;
        self.model.arch.validate()?;
        self.training.validate()?;
        self.experiment.validate()?;
        if self.analysis.ratio_attr.is_empty() {
            return Err(Error::Config("analysis.ratio_attr must not be empty".into()));
        }
        Ok(())
    }

    pub fn setup(&self) -> ExperimentSetup {
        ExperimentSetup {
            arch: self.model.arch.clone(),
            training: self.training.clone(),
            cluster: self.dpgmm.clone(),
            experiment: self.experiment.clone(),
        }
    }

    fn model_dir(&self) -> PathBuf {
        self.data
            .model_dir
            .clone()
            .unwrap_or_else(|| self.output.dir.join("model").join("nhnn"))
    }
}

/// A command failure, split by whether anything was computed yet.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or inputs; nothing was written.
    Invalid(Error),
    /// Failure while computing or writing results.
    Runtime(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn error(&self) -> &Error {
        match self {
            Failure::Invalid(e) | Failure::Runtime(e) => e,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error().fmt(f)
    }
}

impl std::error::Error for Failure {}

pub type CmdResult<T> = std::result::Result<T, Failure>;

fn invalid<T>(r: Result<T>) -> CmdResult<T> {
    r.map_err(Failure::Invalid)
}

fn runtime<T>(r: Result<T>) -> CmdResult<T> {
    r.map_err(Failure::Runtime)
}

fn require(p: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    let p = p.clone().ok_or_else(|| Error::Config(format!("data.{what} is required")))?;
    if !p.is_file() {
        return Err(Error::MissingFile(p));
    }
    Ok(p)
}

fn load_labeled(path: &Path) -> Result<Corpus> {
    let (corpus, _) = load_corpus(path)?;
    if corpus.is_empty() {
        return Err(Error::domain(format!("{} has no labeled utterances", path.display())));
    }
    Ok(corpus)
}

fn check_arch(cfg: &RunConfig, corpus: &Corpus) -> Result<()> {
    if cfg.model.arch.n_mel != corpus.n_mel {
        return Err(Error::dims("model.arch.n_mel vs corpus", corpus.n_mel, cfg.model.arch.n_mel));
    }
    Ok(())
}

struct Layout {
    model: PathBuf,
    reports: PathBuf,
    logs: PathBuf,
}

fn layout(cfg: &RunConfig, command: &str) -> Result<Layout> {
    let root = &cfg.output.dir;
    let l = Layout {
        model: root.join("model"),
        reports: root.join("reports"),
        logs: root.join("logs"),
    };
    for d in [&l.model, &l.reports, &l.logs] {
        fs::create_dir_all(d)?;
    }
    #[derive(Serialize)]
    struct RunLog<'a> {
        schema_version: u32,
        command: &'a str,
        config: &'a RunConfig,
    }
    write_json(
        &l.logs.join(format!("{command}.json")),
        &RunLog {
            schema_version: REPORT_SCHEMA_VERSION,
            command,
            config: cfg,
        },
    )?;
    Ok(l)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub manifest: PathBuf,
    pub n_utterances: usize,
    pub n_speakers: usize,
    pub label_counts: [usize; 3],
}

/// Generates the configured synthetic corpus under `<out>/data`.
pub fn cmd_synth(cfg: &RunConfig) -> CmdResult<SynthSummary> {
    invalid(cfg.validate())?;
    let corpus = runtime(generate_synthetic(&cfg.synth))?;
    runtime(layout(cfg, "synth"))?;
    let manifest = runtime(save_corpus(&corpus, cfg.output.dir.join("data")))?;
    let mut label_counts = [0; 3];
    for l in runtime(corpus.labels())? {
        label_counts[l.index()] += 1;
    }
    Ok(SynthSummary {
        manifest,
        n_utterances: corpus.len(),
        n_speakers: corpus.speakers().len(),
        label_counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub schema_version: u32,
    pub corpus: String,
    pub refit: bool,
    pub n_clusters: usize,
    pub cluster_ids: Vec<usize>,
    pub weights: Vec<f64>,
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub prune: Option<PruneReport>,
    pub cluster_sizes: Vec<usize>,
    pub ratios: ClusterRatioReport,
}

/// Fits (or reloads) the summary-feature mixture and writes
/// `model/clusters.json`, `reports/assignments.csv` and the cluster report.
pub fn cmd_cluster(cfg: &RunConfig) -> CmdResult<ClusterReport> {
    invalid(cfg.validate())?;
    let corpus = invalid(require(&cfg.data.manifest, "manifest").and_then(|p| load_labeled(&p)))?;
    let saved: Option<ClusterModel> = match &cfg.data.cluster_model {
        Some(p) => Some(invalid(
            require(&Some(p.clone()), "cluster_model")
                .and_then(|p| Ok(serde_json::from_str(&fs::read_to_string(p)?)?)),
        )?),
        None => None,
    };
    let l = runtime(layout(cfg, "cluster"))?;
    let (model, assignments, prune) = match saved {
        Some(m) => {
            let a = runtime(m.assign(&corpus))?;
            (m, a, None)
        }
        None => {
            let fit = runtime(fit_clusters(&corpus, &cfg.dpgmm))?;
            (fit.model, fit.assignments, Some(fit.prune))
        }
    };
    let k = model.n_clusters();
    let mut sizes = vec![0; k];
    for &a in &assignments {
        sizes[a] += 1;
    }
    let [va, vb] = &cfg.analysis.ratio_values;
    let ratios = runtime(cluster_attribute_ratios(&corpus, &assignments, &cfg.analysis.ratio_attr, va, vb))?;
    let dp = &model.dpgmm;
    let active = dp.active_indices();
    let report = ClusterReport {
        schema_version: REPORT_SCHEMA_VERSION,
        corpus: corpus.name.clone(),
        refit: prune.is_some(),
        n_clusters: k,
        weights: active.iter().map(|&i| dp.weights[i]).collect(),
        cluster_ids: active,
        elbo_trace: dp.elbo_trace.clone(),
        iterations: dp.iterations,
        converged: dp.converged,
        prune,
        cluster_sizes: sizes,
        ratios,
    };
    runtime(write_json(&l.model.join("clusters.json"), &model))?;
    runtime((|| -> Result<()> {
        let mut w = csv::Writer::from_path(l.reports.join("assignments.csv"))?;
        w.write_record(["id", "speaker_id", "cluster"])?;
        for (u, a) in corpus.utterances.iter().zip(&assignments) {
            w.write_record([u.id.as_str(), u.speaker_id.as_str(), &a.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })())?;
    runtime(write_json(&l.reports.join("cluster.json"), &report))?;
    runtime(fs::write(l.reports.join("cluster.txt"), render_cluster_ratios(&report.ratios)).map_err(Error::from))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema_version: u32,
    pub corpus: String,
    pub variant: Variant,
    pub seed: u64,
    pub base: TrainLog,
    pub nhnn: NhnnTrainReport,
    pub model_dir: PathBuf,
}

/// Trains the base DCNN and the configured hierarchical variant on the whole
/// corpus and saves the bundle to `model/nhnn`.
pub fn cmd_train(cfg: &RunConfig) -> CmdResult<TrainReport> {
    invalid(cfg.validate())?;
    let corpus = invalid(require(&cfg.data.manifest, "manifest").and_then(|p| load_labeled(&p)))?;
    invalid(check_arch(cfg, &corpus))?;
    let l = runtime(layout(cfg, "train"))?;
    let (base, base_log) = runtime(train_base_dcnn(&corpus, &cfg.model.arch, &cfg.training))?;
    let (model, nhnn) = runtime(train_nhnn(&corpus, &base, cfg.model.variant, &cfg.dpgmm, &cfg.training))?;
    let dir = l.model.join("nhnn");
    runtime(model.save(&dir))?;
    let report = TrainReport {
        schema_version: REPORT_SCHEMA_VERSION,
        corpus: corpus.name.clone(),
        variant: cfg.model.variant,
        seed: cfg.training.seed,
        base: base_log,
        nhnn,
        model_dir: dir,
    };
    runtime(write_json(&l.reports.join("train.json"), &report))?;
    Ok(report)
}

/// Leave-one-speaker-out evaluation; writes `reports/loso.json` and
/// `reports/loso.txt`.
pub fn cmd_eval_loso(cfg: &RunConfig, jobs: usize) -> CmdResult<WithinCorpusReport> {
    invalid(cfg.validate())?;
    if jobs == 0 {
        return Err(Failure::Invalid(Error::Config("--jobs must be at least 1".into())));
    }
    let corpus = invalid(require(&cfg.data.manifest, "manifest").and_then(|p| load_labeled(&p)))?;
    invalid(check_arch(cfg, &corpus))?;
    let l = runtime(layout(cfg, "eval_loso"))?;
    let report = runtime(run_within_corpus(&corpus, &cfg.setup(), jobs))?;
    runtime(write_json(&l.reports.join("loso.json"), &report))?;
    runtime(fs::write(l.reports.join("loso.txt"), render_within(&report)).map_err(Error::from))?;
    Ok(report)
}

/// Trains on `data.manifest`, tests on `data.test_manifest`; writes
/// `reports/cross.json` and `reports/cross.txt`.
pub fn cmd_eval_cross(cfg: &RunConfig, jobs: usize) -> CmdResult<CrossCorpusReport> {
    invalid(cfg.validate())?;
    if jobs == 0 {
        return Err(Failure::Invalid(Error::Config("--jobs must be at least 1".into())));
    }
    let train = invalid(require(&cfg.data.manifest, "manifest").and_then(|p| load_labeled(&p)))?;
    let test = invalid(require(&cfg.data.test_manifest, "test_manifest").and_then(|p| load_labeled(&p)))?;
    invalid(check_arch(cfg, &train))?;
    if train.d_s != test.d_s || train.n_mel != test.n_mel {
        return Err(Failure::Invalid(Error::domain(format!(
            "feature shapes differ: train ({}, {}), test ({}, {})",
            train.d_s, train.n_mel, test.d_s, test.n_mel
        ))));
    }
    let l = runtime(layout(cfg, "eval_cross"))?;
    let report = runtime(run_cross_corpus(&train, &test, &cfg.setup(), jobs))?;
    runtime(write_json(&l.reports.join("cross.json"), &report))?;
    runtime(fs::write(l.reports.join("cross.txt"), render_cross(&report)).map_err(Error::from))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtterancePrediction {
    pub id: String,
    pub probs: Vec<f64>,
    pub label: LabelBin,
    pub responsibilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReport {
    pub schema_version: u32,
    pub model_dir: PathBuf,
    pub predictions: Vec<UtterancePrediction>,
}

/// Scores utterances of `data.manifest` with a saved bundle; writes
/// `reports/predictions.json`.
pub fn cmd_predict(cfg: &RunConfig) -> CmdResult<PredictReport> {
    invalid(cfg.validate())?;
    let manifest = invalid(require(&cfg.data.manifest, "manifest"))?;
    let corpus = invalid(load_labeled(&manifest))?;
    let dir = cfg.model_dir();
    let model = invalid(NhnnModel::load(&dir))?;
    let selected: Vec<usize> = if cfg.data.utterances.is_empty() {
        (0..corpus.len()).collect()
    } else {
        invalid(
            cfg.data
                .utterances
                .iter()
                .map(|id| {
                    corpus
                        .utterances
                        .iter()
                        .position(|u| &u.id == id)
                        .ok_or_else(|| Error::domain(format!("utterance {id} not in {}", manifest.display())))
                })
                .collect(),
        )?
    };
    let l = runtime(layout(cfg, "predict"))?;
    let predictions = runtime(
        selected
            .iter()
            .map(|&i| {
                let u = &corpus.utterances[i];
                let probs = model.predict(u)?;
                Ok(UtterancePrediction {
                    id: u.id.clone(),
                    label: label_of(&probs)?,
                    responsibilities: model.responsibilities(&u.summary_features)?,
                    probs,
                })
            })
            .collect::<Result<Vec<_>>>(),
    )?;
    let report = PredictReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model_dir: dir,
        predictions,
    };
    runtime(write_json(&l.reports.join("predictions.json"), &report))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::LabelMapMode;

    fn small(dir: &Path) -> RunConfig {
        RunConfig {
            synth: SyntheticSpec {
                n_speakers_per_group: 2,
                utterances_per_speaker: 20,
                d_s: 3,
                n_mel: 4,
                t_range: (4, 6),
                label_effect: 3.0,
                ..SyntheticSpec::default()
            },
            model: ModelConfig {
                variant: Variant::Fc,
                arch: DcnnArch {
                    n_mel: 4,
                    channels: 4,
                    kernel_size: 3,
                    dilations: [1, 2],
                    hidden: 4,
                    n_class: 3,
                },
            },
            training: TrainingConfig {
                batch_size: 8,
                max_epochs: 2,
                learning_rate: 1e-2,
                ..TrainingConfig::default()
            },
            output: OutputConfig { dir: dir.to_path_buf() },
            ..RunConfig::default()
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("c.json");
        fs::write(&p, r#"{"training": {"batch_sise": 3}}"#).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(Error::Json(_))));
        fs::write(&p, r#"{"output": {"dir": "o"}, "data": {"manifest": "d/m.json"}}"#).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.output.dir, tmp.path().join("o"));
        assert_eq!(cfg.data.manifest, Some(tmp.path().join("d/m.json")));
    }

    #[test]
    fn invalid_config_writes_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("out");
        let mut cfg = small(&out);
        cfg.training.batch_size = 0;
        let err = cmd_synth(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let mut cfg = small(&out);
        cfg.data.manifest = Some(tmp.path().join("missing.json"));
        assert_eq!(cmd_train(&cfg).unwrap_err().exit_code(), 1);
        assert_eq!(cmd_eval_loso(&small(&out), 0).unwrap_err().exit_code(), 1);
        assert!(!out.exists());
    }

    #[test]
    fn synth_cluster_train_predict() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small(&tmp.path().join("out"));
        cfg.synth.label_map_mode = LabelMapMode::GroupFlipped;
        let s = cmd_synth(&cfg).unwrap();
        assert_eq!(s.n_utterances, 80);
        let again = small(&tmp.path().join("again"));
        let s2 = cmd_synth(&RunConfig {
            synth: cfg.synth.clone(),
            ..again
        })
        .unwrap();
        assert_eq!(fs::read(&s.manifest).unwrap(), fs::read(&s2.manifest).unwrap());

        cfg.data.manifest = Some(s.manifest.clone());
        let c = cmd_cluster(&cfg).unwrap();
        assert_eq!(c.n_clusters, 2);
        assert!(c.refit);
        let first = fs::read(tmp.path().join("out/reports/assignments.csv")).unwrap();
        cfg.data.cluster_model = Some(tmp.path().join("out/model/clusters.json"));
        let c2 = cmd_cluster(&cfg).unwrap();
        assert!(!c2.refit);
        assert_eq!(fs::read(tmp.path().join("out/reports/assignments.csv")).unwrap(), first);
        cfg.data.cluster_model = None;

        let t = cmd_train(&cfg).unwrap();
        assert!(t.model_dir.join("metadata.json").is_file());
        cfg.data.utterances = vec![fs::read_to_string(tmp.path().join("out/reports/assignments.csv"))
            .unwrap()
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .next()
            .unwrap()
            .to_string()];
        let p = cmd_predict(&cfg).unwrap();
        assert_eq!(p.predictions.len(), 1);
        let probs = &p.predictions[0].probs;
        assert_eq!(probs.len(), 3);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for d in ["model", "reports", "logs"] {
            assert!(tmp.path().join("out").join(d).is_dir());
        }
    }
}
