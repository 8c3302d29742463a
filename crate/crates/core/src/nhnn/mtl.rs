use serde::{Deserialize, Serialize};

use super::arch::{ce_grad, prepare_frames, Classifier, DcnnArch, DcnnModel, Encoder};
use super::train::{corpus_labels, fit, frame_samples, pick, split_validation, stream_rng, FrameSample, TrainLog,
    Trainable, TrainingConfig, STREAM_INIT, STREAM_SHUFFLE, STREAM_SPLIT};
use crate::dataio::{fit_norm_stats, Corpus, NormStats, Utterance};
use crate::error::{Error, Result};
use crate::neural::{cross_entropy, Parameterized, Tensor};
use crate::scalar::Scalar;

/// Shared encoder with a valence classifier and an auxiliary classifier.
/// Training minimizes `CE_valence + λ·CE_aux`; predictions use the valence
/// classifier only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MtlCnn<S> {
    pub arch: DcnnArch,
    pub encoder: Encoder<S>,
    pub valence: Classifier<S>,
    pub aux: Classifier<S>,
    pub lambda: f64,
    pub aux_attr: String,
    /// Sorted attribute values; the auxiliary class of a value is its index.
    pub aux_values: Vec<String>,
    pub frame_norm: Option<NormStats>,
}

impl<S: Scalar> MtlCnn<S> {
    pub fn forward(&self, x: &[S], len: usize) -> Result<Vec<S>> {
        self.valence.predict(&self.encoder.embed(x, len)?)
    }

    pub fn forward_aux(&self, x: &[S], len: usize) -> Result<Vec<S>> {
        self.aux.predict(&self.encoder.embed(x, len)?)
    }

    pub fn prepare(&self, utt: &Utterance) -> Result<(Vec<S>, usize)> {
        prepare_frames(utt, self.arch.n_mel, self.frame_norm.as_ref())
    }

    pub fn predict(&self, utt: &Utterance) -> Result<Vec<S>> {
        let (x, len) = self.prepare(utt)?;
        self.forward(&x, len)
    }

    /// Dense auxiliary class of an utterance.
    pub fn aux_class(&self, utt: &Utterance) -> Result<usize> {
        aux_class(utt, &self.aux_attr, &self.aux_values)
    }
}

fn aux_class(utt: &Utterance, attr: &str, values: &[String]) -> Result<usize> {
    let v = utt
        .attr(attr)
        .ok_or_else(|| Error::domain(format!("utterance {} lacks attribute {attr}", utt.id)))?;
    values
        .binary_search_by(|probe| probe.as_str().cmp(v))
        .map_err(|_| Error::domain(format!("unknown {attr} value {v}")))
}

impl<S: Scalar> Parameterized<S> for MtlCnn<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let groups = [
            ("encoder", self.encoder.named_params()),
            ("classifier", self.valence.named_params()),
            ("aux", self.aux.named_params()),
        ];
        groups
            .into_iter()
            .flat_map(|(p, v)| v.into_iter().map(move |(n, t)| (format!("{p}.{n}"), t)))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut v = self.encoder.params_mut();
        v.extend(self.valence.params_mut());
        v.extend(self.aux.params_mut());
        v
    }
}

impl Trainable for MtlCnn<f64> {
    type Sample = FrameSample;

    fn accumulate(&self, s: &FrameSample, scale: f64, grads: &mut [Tensor<f64>]) -> Result<f64> {
        let enc = self.encoder.trace(&s.x, s.len)?;
        let emb = enc.embedding();
        let (genc, rest) = grads.split_at_mut(4);
        let (gval, gaux) = rest.split_at_mut(4);
        let val = self.valence.trace(emb)?;
        let mut loss = cross_entropy(&val.probs, s.label)?;
        let mut gemb = self.valence.backward(&val, emb, &ce_grad(&val.probs, s.label, scale), gval);
        if self.lambda != 0.0 {
            let aux = self.aux.trace(emb)?;
            loss += self.lambda * cross_entropy(&aux.probs, s.aux)?;
            let g = self.aux.backward(&aux, emb, &ce_grad(&aux.probs, s.aux, scale * self.lambda), gaux);
            gemb.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        self.encoder.backward(&enc, &s.x, s.len, &gemb, genc, [false, false]);
        Ok(loss)
    }

    fn validate_one(&self, s: &FrameSample) -> Result<(f64, Vec<f64>)> {
        let p = self.forward(&s.x, s.len)?;
        Ok((cross_entropy(&p, s.label)?, p))
    }

    fn label(s: &FrameSample) -> usize {
        s.label
    }
}

/// Trains the multi-task CNN with `aux_attr` as the auxiliary target and
/// early stopping on the valence validation loss. With `lambda = 0` the
/// valence path follows [`super::train_base_dcnn`] exactly.
pub fn train_mtl_cnn(
    corpus: &Corpus,
    aux_attr: &str,
    arch: &DcnnArch,
    cfg: &TrainingConfig,
    lambda: f64,
) -> Result<(MtlCnn<f64>, TrainLog)> {
    cfg.validate()?;
    arch.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config("auxiliary loss weight must be finite and non-negative".into()));
    }
    let labels = corpus_labels(corpus, arch.n_class)?;
    let mut values: Vec<String> = corpus
        .utterances
        .iter()
        .map(|u| {
            u.attr(aux_attr)
                .map(str::to_string)
                .ok_or_else(|| Error::domain(format!("utterance {} lacks attribute {aux_attr}", u.id)))
        })
        .collect::<Result<_>>()?;
    values.sort();
    values.dedup();
    let aux: Vec<usize> = corpus
        .utterances
        .iter()
        .map(|u| aux_class(u, aux_attr, &values))
        .collect::<Result<_>>()?;

    // valence parameters are drawn first so they match the plain DCNN
    let mut rng = stream_rng(cfg.seed, STREAM_INIT);
    let mut base = DcnnModel::new(arch, &mut rng)?;
    let utts: Vec<_> = corpus.utterances.iter().collect();
    base.frame_norm = Some(fit_norm_stats(&utts)?);
    let model = MtlCnn {
        arch: arch.clone(),
        aux: Classifier::new(arch.channels, arch.hidden, values.len(), &mut rng)?,
        encoder: base.encoder.clone(),
        valence: base.classifier.clone(),
        lambda,
        aux_attr: aux_attr.to_string(),
        aux_values: values,
        frame_norm: base.frame_norm.clone(),
    };
    let samples = frame_samples(&base, corpus, &labels, &aux)?;
    let (tr, va) = split_validation(samples.len(), cfg.validation_fraction, cfg.seed, STREAM_SPLIT)?;
    fit(model, &pick(&samples, &tr), &pick(&samples, &va), cfg, STREAM_SHUFFLE)
}
