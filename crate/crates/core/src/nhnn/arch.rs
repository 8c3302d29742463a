use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{apply_znorm, NormStats, Utterance};
use crate::error::{Error, Result};
use crate::neural::{
    global_max_pool, global_max_pool_backward, relu, relu_backward, softmax, DilatedConv1d, Dense, MaxPool,
    Parameterized, Tensor,
};
use crate::scalar::Scalar;

/// Layer sizes of the dilated CNN. The defaults give 189,187 parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DcnnArch {
    pub n_mel: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub dilations: [usize; 2],
    pub hidden: usize,
    pub n_class: usize,
}

impl Default for DcnnArch {
    fn default() -> Self {
        DcnnArch {
            n_mel: 40,
            channels: 128,
            kernel_size: 8,
            dilations: [2, 4],
            hidden: 128,
            n_class: 3,
        }
    }
}

impl DcnnArch {
    pub fn validate(&self) -> Result<()> {
        let sizes = [self.n_mel, self.channels, self.kernel_size, self.hidden, self.n_class];
        if sizes.contains(&0) || self.dilations.contains(&0) {
            return Err(Error::Config("architecture sizes and dilations must be positive".into()));
        }
        if self.n_class < 2 {
            return Err(Error::Config("n_class must be at least 2".into()));
        }
        Ok(())
    }
}

fn prefixed<'a, S: Scalar>(prefix: &str, inner: Vec<(String, &'a Tensor<S>)>) -> Vec<(String, &'a Tensor<S>)> {
    inner.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}

fn conv_params<'a, S: Scalar>(name: &str, c: &'a DilatedConv1d<S>) -> Vec<(String, &'a Tensor<S>)> {
    vec![(format!("{name}.weight"), &c.weight), (format!("{name}.bias"), &c.bias)]
}

fn dense_params<'a, S: Scalar>(name: &str, d: &'a Dense<S>) -> Vec<(String, &'a Tensor<S>)> {
    vec![(format!("{name}.weight"), &d.weight), (format!("{name}.bias"), &d.bias)]
}

/// Zeroed gradient buffers matching a model's parameters.
pub(crate) fn zero_grads<S: Scalar, M: Parameterized<S> + ?Sized>(m: &M) -> Vec<Tensor<S>> {
    m.named_params().into_iter().map(|(_, t)| Tensor::zeros(t.shape())).collect()
}

/// `relu(conv(x))` followed by the length-masked global max pool.
pub(crate) struct ConvPoolTrace<S> {
    pub act: Vec<S>,
    pub pool: MaxPool<S>,
}

pub(crate) fn conv_pool<S: Scalar>(conv: &DilatedConv1d<S>, x: &[S], len: usize) -> Result<ConvPoolTrace<S>> {
    let mut act = conv.forward(x, len)?;
    relu(&mut act);
    let pool = global_max_pool(&act, conv.out_channels, len, len)?;
    Ok(ConvPoolTrace { act, pool })
}

/// Backward through pool, relu and `conv`; returns the input gradient if requested.
pub(crate) fn conv_pool_backward<S: Scalar>(
    conv: &DilatedConv1d<S>,
    trace: &ConvPoolTrace<S>,
    x: &[S],
    len: usize,
    grad_emb: &[S],
    grads: &mut [Tensor<S>],
    want_input_grad: bool,
) -> Option<Vec<S>> {
    let mut g = global_max_pool_backward(&trace.pool, grad_emb, len);
    relu_backward(&trace.act, &mut g);
    let (gw, gb) = grads.split_at_mut(1);
    conv.backward(x, len, &g, &mut gw[0], &mut gb[0], want_input_grad)
}

/// Two dilated convolutions with ReLU, then masked global max pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Encoder<S> {
    pub conv1: DilatedConv1d<S>,
    pub conv2: DilatedConv1d<S>,
}

pub(crate) struct EncoderTrace<S> {
    pub h1: Vec<S>,
    pub second: ConvPoolTrace<S>,
}

impl<S: Scalar> EncoderTrace<S> {
    pub fn embedding(&self) -> &[S] {
        &self.second.pool.values
    }
}

impl<S: Scalar> Encoder<S> {
    pub fn new(arch: &DcnnArch, rng: &mut impl Rng) -> Result<Self> {
        Ok(Encoder {
            conv1: DilatedConv1d::new(arch.n_mel, arch.channels, arch.kernel_size, arch.dilations[0], rng)?,
            conv2: DilatedConv1d::new(arch.channels, arch.channels, arch.kernel_size, arch.dilations[1], rng)?,
        })
    }

    /// `relu(conv1(x))`, the input of the second layer.
    pub fn first_layer(&self, x: &[S], len: usize) -> Result<Vec<S>> {
        let mut h1 = self.conv1.forward(x, len)?;
        relu(&mut h1);
        Ok(h1)
    }

    pub(crate) fn trace(&self, x: &[S], len: usize) -> Result<EncoderTrace<S>> {
        let h1 = self.first_layer(x, len)?;
        let second = conv_pool(&self.conv2, &h1, len)?;
        Ok(EncoderTrace { h1, second })
    }

    /// Pooled embedding of an `n_mel × len` input.
    pub fn embed(&self, x: &[S], len: usize) -> Result<Vec<S>> {
        Ok(self.trace(x, len)?.second.pool.values)
    }

    /// Accumulates gradients into `grads` (conv1 w/b, conv2 w/b). Frozen
    /// layers receive nothing.
    pub(crate) fn backward(
        &self,
        trace: &EncoderTrace<S>,
        x: &[S],
        len: usize,
        grad_emb: &[S],
        grads: &mut [Tensor<S>],
        frozen: [bool; 2],
    ) {
        if frozen[0] && frozen[1] {
            return;
        }
        let (g1, g2) = grads.split_at_mut(2);
        let mut scratch;
        let target: &mut [Tensor<S>] = if frozen[1] {
            scratch = vec![Tensor::zeros(self.conv2.weight.shape()), Tensor::zeros(self.conv2.bias.shape())];
            &mut scratch[..]
        } else {
            g2
        };
        let gh1 = conv_pool_backward(&self.conv2, &trace.second, &trace.h1, len, grad_emb, target, !frozen[0]);
        if let Some(mut gh1) = gh1 {
            relu_backward(&trace.h1, &mut gh1);
            let (gw, gb) = g1.split_at_mut(1);
            self.conv1.backward(x, len, &gh1, &mut gw[0], &mut gb[0], false);
        }
    }
}

impl<S: Scalar> Parameterized<S> for Encoder<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut v = conv_params("conv1", &self.conv1);
        v.extend(conv_params("conv2", &self.conv2));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
        ]
    }
}

/// `Dense → ReLU → Dense → softmax`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Classifier<S> {
    pub fc1: Dense<S>,
    pub fc2: Dense<S>,
}

pub(crate) struct ClassifierTrace<S> {
    pub hidden: Vec<S>,
    pub probs: Vec<S>,
}

impl<S: Scalar> Classifier<S> {
    pub fn new(in_dim: usize, hidden: usize, n_class: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Classifier {
            fc1: Dense::new(in_dim, hidden, rng)?,
            fc2: Dense::new(hidden, n_class, rng)?,
        })
    }

    pub fn n_class(&self) -> usize {
        self.fc2.out_dim
    }

    pub(crate) fn trace(&self, emb: &[S]) -> Result<ClassifierTrace<S>> {
        let mut hidden = self.fc1.forward(emb)?;
        relu(&mut hidden);
        let probs = softmax(&self.fc2.forward(&hidden)?);
        Ok(ClassifierTrace { hidden, probs })
    }

    pub fn predict(&self, emb: &[S]) -> Result<Vec<S>> {
        Ok(self.trace(emb)?.probs)
    }

    /// Accumulates gradients (fc1 w/b, fc2 w/b) given the logit gradient and
    /// returns the embedding gradient.
    pub(crate) fn backward(&self, trace: &ClassifierTrace<S>, emb: &[S], grad_logits: &[S], grads: &mut [Tensor<S>]) -> Vec<S> {
        let (g1, g2) = grads.split_at_mut(2);
        let (w2, b2) = g2.split_at_mut(1);
        let mut gh = self.fc2.backward(&trace.hidden, grad_logits, &mut w2[0], &mut b2[0]);
        relu_backward(&trace.hidden, &mut gh);
        let (w1, b1) = g1.split_at_mut(1);
        self.fc1.backward(emb, &gh, &mut w1[0], &mut b1[0])
    }
}

impl<S: Scalar> Parameterized<S> for Classifier<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut v = dense_params("fc1", &self.fc1);
        v.extend(dense_params("fc2", &self.fc2));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![&mut self.fc1.weight, &mut self.fc1.bias, &mut self.fc2.weight, &mut self.fc2.bias]
    }
}

/// Loss-scaled softmax cross-entropy gradient `scale · (p − onehot)`.
pub(crate) fn ce_grad<S: Scalar>(probs: &[S], label: usize, scale: S) -> Vec<S> {
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| scale * if j == label { p - S::one() } else { p })
        .collect()
}

/// Converts an utterance's framed features into a model input, applying the
/// frame normalization when one is set.
pub(crate) fn prepare_frames<S: Scalar>(utt: &Utterance, n_mel: usize, norm: Option<&NormStats>) -> Result<(Vec<S>, usize)> {
    if utt.n_mel != n_mel {
        return Err(Error::dims(format!("mel coefficients of {}", utt.id), n_mel, utt.n_mel));
    }
    let x = match norm {
        Some(stats) => apply_znorm(utt, stats)?,
        None => utt.framed_features.clone(),
    };
    Ok((x.into_iter().map(S::c).collect(), utt.frame_count))
}

/// The dilated CNN baseline: encoder plus one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DcnnModel<S> {
    pub arch: DcnnArch,
    pub encoder: Encoder<S>,
    pub classifier: Classifier<S>,
    /// Per-coefficient frame statistics of the training data.
    pub frame_norm: Option<NormStats>,
}

impl<S: Scalar> DcnnModel<S> {
    pub fn new(arch: &DcnnArch, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let encoder = Encoder::new(arch, rng)?;
        let classifier = Classifier::new(arch.channels, arch.hidden, arch.n_class, rng)?;
        Ok(DcnnModel {
            arch: arch.clone(),
            encoder,
            classifier,
            frame_norm: None,
        })
    }

    /// Class probabilities for an `n_mel × len` input.
    pub fn forward(&self, x: &[S], len: usize) -> Result<Vec<S>> {
        self.classifier.predict(&self.encoder.embed(x, len)?)
    }

    pub fn prepare(&self, utt: &Utterance) -> Result<(Vec<S>, usize)> {
        prepare_frames(utt, self.arch.n_mel, self.frame_norm.as_ref())
    }

    pub fn predict(&self, utt: &Utterance) -> Result<Vec<S>> {
        let (x, len) = self.prepare(utt)?;
        self.forward(&x, len)
    }

    /// Adds `scale ·` the cross-entropy gradient of one example into `grads`
    /// (encoder tensors first, then classifier) and returns its loss. Frozen
    /// convolutions get no gradient.
    pub fn accumulate_grads(
        &self,
        x: &[S],
        len: usize,
        label: usize,
        scale: S,
        grads: &mut [Tensor<S>],
        frozen: [bool; 2],
    ) -> Result<S> {
        let enc = self.encoder.trace(x, len)?;
        let cls = self.classifier.trace(enc.embedding())?;
        let loss = crate::neural::cross_entropy(&cls.probs, label)?;
        let gl = ce_grad(&cls.probs, label, scale);
        let (ge, gc) = grads.split_at_mut(4);
        let gemb = self.classifier.backward(&cls, enc.embedding(), &gl, gc);
        self.encoder.backward(&enc, x, len, &gemb, ge, frozen);
        Ok(loss)
    }
}

impl<S: Scalar> Parameterized<S> for DcnnModel<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut v = prefixed("encoder", self.encoder.named_params());
        v.extend(prefixed("classifier", self.classifier.named_params()));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut v = self.encoder.params_mut();
        v.extend(self.classifier.params_mut());
        v
    }
}

/// The trainable part of one cluster's network. With `conv2` set the head
/// consumes first-layer activations; otherwise it consumes the shared
/// pooled embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Head<S> {
    pub conv2: Option<DilatedConv1d<S>>,
    pub classifier: Classifier<S>,
}

impl<S: Scalar> Head<S> {
    pub fn forward(&self, input: &[S], len: usize) -> Result<Vec<S>> {
        match &self.conv2 {
            Some(conv) => self.classifier.predict(&conv_pool(conv, input, len)?.pool.values),
            None => self.classifier.predict(input),
        }
    }

    pub fn accumulate_grads(&self, input: &[S], len: usize, label: usize, scale: S, grads: &mut [Tensor<S>]) -> Result<S> {
        match &self.conv2 {
            Some(conv) => {
                let cp = conv_pool(conv, input, len)?;
                let cls = self.classifier.trace(&cp.pool.values)?;
                let loss = crate::neural::cross_entropy(&cls.probs, label)?;
                let (gconv, gcls) = grads.split_at_mut(2);
                let gemb = self.classifier.backward(&cls, &cp.pool.values, &ce_grad(&cls.probs, label, scale), gcls);
                conv_pool_backward(conv, &cp, input, len, &gemb, gconv, false);
                Ok(loss)
            }
            None => {
                let cls = self.classifier.trace(input)?;
                let loss = crate::neural::cross_entropy(&cls.probs, label)?;
                self.classifier.backward(&cls, input, &ce_grad(&cls.probs, label, scale), grads);
                Ok(loss)
            }
        }
    }
}

impl<S: Scalar> Parameterized<S> for Head<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut v = match &self.conv2 {
            Some(c) => conv_params("conv2", c),
            None => Vec::new(),
        };
        v.extend(prefixed("classifier", self.classifier.named_params()));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut v = match &mut self.conv2 {
            Some(c) => vec![&mut c.weight, &mut c.bias],
            None => Vec::new(),
        };
        v.extend(self.classifier.params_mut());
        v
    }
}
