use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::FEATURE_COUNT;

/// Initial temperature 1/0.07.
pub const INITIAL_LOG_TAU: f64 = 2.659_260_036_932_778_4;
/// tau = exp(log_tau) is kept at or below 100.
pub const MAX_LOG_TAU: f64 = 4.605_170_185_988_091;
/// Scale of the second projection layer's weights at initialization. Its
/// bias is drawn from U(-1, 1) and dominates at first, so each branch's
/// embeddings start out close together and the initial loss sits near ln N.
pub const SHRINK_INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Shared embedding space dimensionality.
    pub d: usize,
    pub text_embed_dim: usize,
    pub text_hidden: usize,
    pub audio_embed_dim: usize,
    pub audio_hidden: usize,
    /// Projection heads map in -> expansion * d -> d.
    pub expansion: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 64,
            text_embed_dim: 32,
            text_hidden: 64,
            audio_embed_dim: 32,
            audio_hidden: 64,
            expansion: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    /// Token embeddings and both encoder MLPs.
    Encoder,
    /// Projection heads and the temperature.
    Head,
}

/// `weight` is out x in.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform in +-1/sqrt(fan_in).
    fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self::init_with(input, output, bound, bound, rng)
    }

    fn init_with<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        weight_bound: f64,
        bias_bound: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: Array2::from_shape_simple_fn((output, input), || {
                rng.random_range(-weight_bound..weight_bound)
            }),
            bias: Array1::from_shape_simple_fn(output, || rng.random_range(-bias_bound..bias_bound)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// in -> hidden (GELU) -> out
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

/// in -> expansion*d (GELU) -> d -> layer norm
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub expand: Linear,
    pub shrink: Linear,
    pub ln_gain: Array1<f64>,
    pub ln_bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub text_embedding: Array2<f64>,
    pub text_mlp: Mlp,
    pub audio_mlp: Mlp,
    pub proj_text: ProjectionHead,
    pub proj_audio: ProjectionHead,
    pub log_tau: f64,
}

pub struct TensorRef<'a> {
    pub name: &'static str,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: &'static str,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

macro_rules! tensor_list {
    ($self:ident, $slice:ident, $ctor:ident, $scalar:expr) => {{
        use ParamGroup::{Encoder, Head};
        vec![
            $ctor("text_embedding", Encoder, $self.text_embedding.shape().to_vec(), $self.text_embedding.$slice().unwrap()),
            $ctor("text_mlp.hidden.weight", Encoder, $self.text_mlp.hidden.weight.shape().to_vec(), $self.text_mlp.hidden.weight.$slice().unwrap()),
            $ctor("text_mlp.hidden.bias", Encoder, $self.text_mlp.hidden.bias.shape().to_vec(), $self.text_mlp.hidden.bias.$slice().unwrap()),
            $ctor("text_mlp.out.weight", Encoder, $self.text_mlp.out.weight.shape().to_vec(), $self.text_mlp.out.weight.$slice().unwrap()),
            $ctor("text_mlp.out.bias", Encoder, $self.text_mlp.out.bias.shape().to_vec(), $self.text_mlp.out.bias.$slice().unwrap()),
            $ctor("audio_mlp.hidden.weight", Encoder, $self.audio_mlp.hidden.weight.shape().to_vec(), $self.audio_mlp.hidden.weight.$slice().unwrap()),
            $ctor("audio_mlp.hidden.bias", Encoder, $self.audio_mlp.hidden.bias.shape().to_vec(), $self.audio_mlp.hidden.bias.$slice().unwrap()),
            $ctor("audio_mlp.out.weight", Encoder, $self.audio_mlp.out.weight.shape().to_vec(), $self.audio_mlp.out.weight.$slice().unwrap()),
            $ctor("audio_mlp.out.bias", Encoder, $self.audio_mlp.out.bias.shape().to_vec(), $self.audio_mlp.out.bias.$slice().unwrap()),
            $ctor("proj_text.expand.weight", Head, $self.proj_text.expand.weight.shape().to_vec(), $self.proj_text.expand.weight.$slice().unwrap()),
            $ctor("proj_text.expand.bias", Head, $self.proj_text.expand.bias.shape().to_vec(), $self.proj_text.expand.bias.$slice().unwrap()),
            $ctor("proj_text.shrink.weight", Head, $self.proj_text.shrink.weight.shape().to_vec(), $self.proj_text.shrink.weight.$slice().unwrap()),
            $ctor("proj_text.shrink.bias", Head, $self.proj_text.shrink.bias.shape().to_vec(), $self.proj_text.shrink.bias.$slice().unwrap()),
            $ctor("proj_text.ln_gain", Head, $self.proj_text.ln_gain.shape().to_vec(), $self.proj_text.ln_gain.$slice().unwrap()),
            $ctor("proj_text.ln_bias", Head, $self.proj_text.ln_bias.shape().to_vec(), $self.proj_text.ln_bias.$slice().unwrap()),
            $ctor("proj_audio.expand.weight", Head, $self.proj_audio.expand.weight.shape().to_vec(), $self.proj_audio.expand.weight.$slice().unwrap()),
            $ctor("proj_audio.expand.bias", Head, $self.proj_audio.expand.bias.shape().to_vec(), $self.proj_audio.expand.bias.$slice().unwrap()),
            $ctor("proj_audio.shrink.weight", Head, $self.proj_audio.shrink.weight.shape().to_vec(), $self.proj_audio.shrink.weight.$slice().unwrap()),
            $ctor("proj_audio.shrink.bias", Head, $self.proj_audio.shrink.bias.shape().to_vec(), $self.proj_audio.shrink.bias.$slice().unwrap()),
            $ctor("proj_audio.ln_gain", Head, $self.proj_audio.ln_gain.shape().to_vec(), $self.proj_audio.ln_gain.$slice().unwrap()),
            $ctor("proj_audio.ln_bias", Head, $self.proj_audio.ln_bias.shape().to_vec(), $self.proj_audio.ln_bias.$slice().unwrap()),
            $ctor("log_tau", Head, vec![], $scalar),
        ]
    }};
}

fn tensor_ref<'a>(name: &'static str, group: ParamGroup, shape: Vec<usize>, data: &'a [f64]) -> TensorRef<'a> {
    TensorRef { name, group, shape, data }
}

fn tensor_mut<'a>(name: &'static str, group: ParamGroup, shape: Vec<usize>, data: &'a mut [f64]) -> TensorMut<'a> {
    TensorMut { name, group, shape, data }
}

impl ProjectionHead {
    fn zeros(input: usize, d: usize, expansion: usize) -> Self {
        Self {
            expand: Linear::zeros(input, expansion * d),
            shrink: Linear::zeros(expansion * d, d),
            ln_gain: Array1::zeros(d),
            ln_bias: Array1::zeros(d),
        }
    }

    fn init<R: Rng + ?Sized>(input: usize, d: usize, expansion: usize, rng: &mut R) -> Self {
        Self {
            expand: Linear::init(input, expansion * d, rng),
            shrink: Linear::init_with(
                expansion * d,
                d,
                SHRINK_INIT_SCALE / ((expansion * d) as f64).sqrt(),
                1.0,
                rng,
            ),
            ln_gain: Array1::ones(d),
            ln_bias: Array1::zeros(d),
        }
    }
}

impl ModelParams {
    /// All-zero tensors with the shapes implied by `config` and `vocab_size`.
    pub fn zeros(config: &ModelConfig, vocab_size: usize) -> Self {
        let c = config;
        Self {
            text_embedding: Array2::zeros((vocab_size, c.text_embed_dim)),
            text_mlp: Mlp {
                hidden: Linear::zeros(c.text_embed_dim, c.text_hidden),
                out: Linear::zeros(c.text_hidden, c.text_embed_dim),
            },
            audio_mlp: Mlp {
                hidden: Linear::zeros(FEATURE_COUNT, c.audio_hidden),
                out: Linear::zeros(c.audio_hidden, c.audio_embed_dim),
            },
            proj_text: ProjectionHead::zeros(c.text_embed_dim, c.d, c.expansion),
            proj_audio: ProjectionHead::zeros(c.audio_embed_dim, c.d, c.expansion),
            log_tau: 0.0,
        }
    }

    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, vocab_size: usize, rng: &mut R) -> Self {
        let c = config;
        Self {
            text_embedding: Array2::from_shape_simple_fn((vocab_size, c.text_embed_dim), || {
                rng.random_range(-1.0..1.0)
            }),
            text_mlp: Mlp {
                hidden: Linear::init(c.text_embed_dim, c.text_hidden, rng),
                out: Linear::init(c.text_hidden, c.text_embed_dim, rng),
            },
            audio_mlp: Mlp {
                hidden: Linear::init(FEATURE_COUNT, c.audio_hidden, rng),
                out: Linear::init(c.audio_hidden, c.audio_embed_dim, rng),
            },
            proj_text: ProjectionHead::init(c.text_embed_dim, c.d, c.expansion, rng),
            proj_audio: ProjectionHead::init(c.audio_embed_dim, c.d, c.expansion, rng),
            log_tau: INITIAL_LOG_TAU,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.fill(0.0);
        }
        z
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn vocab_size(&self) -> usize {
        self.text_embedding.nrows()
    }

    /// Every tensor in a fixed order, with its name and optimizer group.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        tensor_list!(self, as_slice, tensor_ref, std::slice::from_ref(&self.log_tau))
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        tensor_list!(self, as_slice_mut, tensor_mut, std::slice::from_mut(&mut self.log_tau))
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}
