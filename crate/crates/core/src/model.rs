//! A trained set of view encoders and the sentence representations it
//! produces.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::graph::{encode_f, encode_g, BiGruVars};
use crate::encoders::{
    bigru_forward, final_state_of, project_g, BiGruParams, FinalState, GruDirectionParams,
    LinearParams, Phase, ViewKind, ViewState,
};
use crate::error::{Error, Result};
use crate::evalkit::{SentenceEncoder, ViewDirections};
use crate::numerics::{Dtype, Graph, Tensor, Var};
use crate::objective::Temperature;
use crate::postprocess::{ensemble_supervised, PcConfig};
use crate::wordvec::WordTable;

/// Which encoders are trained against each other.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewConfig {
    /// Recurrent `f` with linear `g`.
    #[default]
    Fg,
    /// Two independently initialised recurrent encoders.
    Ff,
    /// Two independently initialised linear encoders.
    Gg,
    F,
    G,
}

impl ViewConfig {
    pub const ALL: [ViewConfig; 5] = [ViewConfig::Fg, ViewConfig::Ff, ViewConfig::Gg, ViewConfig::F, ViewConfig::G];

    pub fn name(self) -> &'static str {
        match self {
            ViewConfig::Fg => "fg",
            ViewConfig::Ff => "ff",
            ViewConfig::Gg => "gg",
            ViewConfig::F => "f",
            ViewConfig::G => "g",
        }
    }

    pub fn kinds(self) -> &'static [ViewKind] {
        match self {
            ViewConfig::Fg => &[ViewKind::F, ViewKind::G],
            ViewConfig::Ff => &[ViewKind::F, ViewKind::F],
            ViewConfig::Gg => &[ViewKind::G, ViewKind::G],
            ViewConfig::F => &[ViewKind::F],
            ViewConfig::G => &[ViewKind::G],
        }
    }

    pub fn view_count(self) -> usize {
        self.kinds().len()
    }
}

impl fmt::Display for ViewConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ViewConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fg" | "f+g" => Ok(ViewConfig::Fg),
            "ff" | "f1+f2" => Ok(ViewConfig::Ff),
            "gg" | "g1+g2" => Ok(ViewConfig::Gg),
            "f" | "f-only" => Ok(ViewConfig::F),
            "g" | "g-only" => Ok(ViewConfig::G),
            other => Err(Error::Usage(format!(
                "unknown view configuration {other:?} (expected fg, ff, gg, f or g)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    Recurrent(BiGruParams),
    Linear(LinearParams),
}

impl Encoder {
    pub fn kind(&self) -> ViewKind {
        match self {
            Encoder::Recurrent(_) => ViewKind::F,
            Encoder::Linear(_) => ViewKind::G,
        }
    }

    /// Parameter names (without the view prefix) and tensors, in
    /// registration order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        match self {
            Encoder::Recurrent(p) => {
                let mut out = Vec::with_capacity(18);
                for (dir, params) in [("fwd", &p.forward), ("bwd", &p.backward)] {
                    for (name, t) in GruDirectionParams::FIELD_NAMES.iter().zip(params.tensors()) {
                        out.push((format!("{dir}.{name}"), t));
                    }
                }
                out
            }
            Encoder::Linear(p) => vec![("w_g".to_string(), &p.w_g)],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Encoder::Recurrent(p) => {
                let mut out: Vec<&mut Tensor> = p.forward.tensors_mut().into_iter().collect();
                out.extend(p.backward.tensors_mut());
                out
            }
            Encoder::Linear(p) => vec![&mut p.w_g],
        }
    }

    /// Plain forward pass over a `D x M` word matrix.
    pub fn view_state(&self, x: &Tensor, which: FinalState) -> Result<ViewState> {
        match self {
            Encoder::Recurrent(p) => {
                let hidden = bigru_forward(x, p)?;
                let last = final_state_of(&hidden, p.hidden(), which);
                Ok(ViewState::Recurrent { hidden, last })
            }
            Encoder::Linear(p) => Ok(ViewState::Linear {
                projected: project_g(x, &p.w_g)?,
            }),
        }
    }
}

/// Registered encoder of one view on a [`Graph`].
#[derive(Clone, Copy, Debug)]
pub enum EncoderVars {
    Recurrent(BiGruVars),
    Linear(Var),
}

impl EncoderVars {
    /// Training representation of one sentence as a `2d x 1` node.
    pub fn encode(&self, g: &mut Graph, x: Var, which: FinalState) -> Result<Var> {
        match self {
            EncoderVars::Recurrent(p) => encode_f(g, x, p, which),
            EncoderVars::Linear(w) => encode_g(g, x, *w),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub views: ViewConfig,
    pub d: usize,
    pub dim: usize,
    pub final_state: FinalState,
    pub encoders: Vec<Encoder>,
    pub tau: Temperature,
}

impl Model {
    /// Fresh encoders, initialised in view order from `rng`, rounded to
    /// `dtype`.
    pub fn init<R: Rng + ?Sized>(
        views: ViewConfig,
        d: usize,
        dim: usize,
        tau0: f64,
        dtype: Dtype,
        rng: &mut R,
    ) -> Result<Model> {
        if d == 0 || dim == 0 {
            return Err(Error::Usage("hidden size and word dimension must be positive".into()));
        }
        let mut encoders = Vec::with_capacity(views.view_count());
        for kind in views.kinds() {
            encoders.push(match kind {
                ViewKind::F => Encoder::Recurrent(BiGruParams::init(d, dim, rng)?),
                ViewKind::G => Encoder::Linear(LinearParams::init(d, dim, rng)?),
            });
        }
        let mut model = Model {
            views,
            d,
            dim,
            final_state: FinalState::default(),
            encoders,
            tau: Temperature {
                value: dtype.round(tau0),
                trainable: true,
            },
        };
        for t in model.tensors_mut() {
            t.round_to(dtype);
        }
        Ok(model)
    }

    /// Zero weights with the layout `views`, `d` and `dim` imply.
    pub fn zeros(views: ViewConfig, d: usize, dim: usize) -> Model {
        let encoders = views
            .kinds()
            .iter()
            .map(|k| match k {
                ViewKind::F => Encoder::Recurrent(BiGruParams {
                    forward: GruDirectionParams::zeros(d, dim),
                    backward: GruDirectionParams::zeros(d, dim),
                }),
                ViewKind::G => Encoder::Linear(LinearParams {
                    w_g: Tensor::zeros(&[2 * d, dim]),
                }),
            })
            .collect();
        Model {
            views,
            d,
            dim,
            final_state: FinalState::default(),
            encoders,
            tau: Temperature::default(),
        }
    }

    /// Fully qualified names such as `v0.fwd.w_r` or `v1.w_g`.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.encoders
            .iter()
            .enumerate()
            .flat_map(|(k, e)| {
                e.named_tensors()
                    .into_iter()
                    .map(move |(n, t)| (format!("v{k}.{n}"), t))
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoders.iter_mut().flat_map(Encoder::tensors_mut).collect()
    }

    /// Number of encoder weights (τ excluded).
    pub fn parameter_count(&self) -> u64 {
        self.named_tensors().iter().map(|(_, t)| t.len() as u64).sum()
    }

    /// Registers every encoder weight on `g`, in [`Model::named_tensors`]
    /// order.
    pub fn register(&self, g: &mut Graph) -> Vec<EncoderVars> {
        self.encoders
            .iter()
            .map(|e| match e {
                Encoder::Recurrent(p) => EncoderVars::Recurrent(BiGruVars::register(g, p)),
                Encoder::Linear(p) => EncoderVars::Linear(g.param(p.w_g.clone())),
            })
            .collect()
    }

    /// Plain forward pass of every view.
    pub fn view_states(&self, x: &Tensor) -> Result<Vec<ViewState>> {
        self.encoders
            .iter()
            .map(|e| e.view_state(x, self.final_state))
            .collect()
    }

    /// Representation of every view for `phase`.
    pub fn represent(&self, x: &Tensor, phase: Phase) -> Result<Vec<Vec<f64>>> {
        self.view_states(x)?
            .iter()
            .map(|s| s.represent(phase))
            .collect()
    }

    /// Ensembles need two views.
    pub fn require_two_views(&self) -> Result<()> {
        match self.views {
            ViewConfig::F => Err(Error::MissingView("g".into())),
            ViewConfig::G => Err(Error::MissingView("f".into())),
            _ => Ok(()),
        }
    }
}

/// `true` when some column of `x` is nonzero.
pub fn has_known_word(x: &Tensor) -> bool {
    x.data().iter().any(|&v| v != 0.0)
}

/// Pairs a model with its word table for evaluation.
pub struct ModelEncoder<'a> {
    pub model: &'a Model,
    pub table: &'a WordTable,
}

impl SentenceEncoder for ModelEncoder<'_> {
    fn encode_views(&self, tokens: &[String]) -> Result<Option<Vec<Vec<f64>>>> {
        if tokens.is_empty() {
            return Ok(None);
        }
        let x = self.table.embed_sentence(tokens)?;
        if !has_known_word(&x) {
            return Ok(None);
        }
        self.model.represent(&x, Phase::Unsupervised).map(Some)
    }
}

/// Output mode of [`encode_sentences`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodeMode {
    Supervised,
    Unsupervised,
}

impl FromStr for EncodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "supervised" => Ok(EncodeMode::Supervised),
            "unsupervised" => Ok(EncodeMode::Unsupervised),
            other => Err(Error::Usage(format!("unknown mode {other:?}"))),
        }
    }
}

/// Encodes a file's worth of sentences with one direction per view fitted on
/// all of them. Unsupervised rows are the `2d` normalized sum; supervised rows
/// concatenate the pooled features of both views (`14d` for `f`+`g`).
/// Sentences without a known word yield zero rows of the right length.
pub fn encode_sentences(
    model: &Model,
    table: &WordTable,
    sentences: &[Vec<String>],
    mode: EncodeMode,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    model.require_two_views()?;
    if sentences.len() < 2 {
        return Err(Error::InsufficientData(
            "principal component removal needs at least two sentences".into(),
        ));
    }
    let phase = match mode {
        EncodeMode::Supervised => Phase::Supervised,
        EncodeMode::Unsupervised => Phase::Unsupervised,
    };
    let encoded: Vec<Option<Vec<Vec<f64>>>> = sentences
        .iter()
        .map(|tokens| {
            if tokens.is_empty() {
                return Ok(None);
            }
            let x = table.embed_sentence(tokens)?;
            if !has_known_word(&x) {
                return Ok(None);
            }
            model.represent(&x, phase).map(Some)
        })
        .collect::<Result<_>>()?;
    let population: Vec<&Vec<Vec<f64>>> = encoded.iter().flatten().collect();
    let dirs = ViewDirections::fit(&population, seed, PcConfig::default())?;
    let lens: Vec<usize> = population[0].iter().map(Vec::len).collect();
    encoded
        .iter()
        .map(|e| match (e, mode) {
            (None, EncodeMode::Unsupervised) => Ok(vec![0.0; lens[0]]),
            (None, EncodeMode::Supervised) => Ok(vec![0.0; lens.iter().sum()]),
            (Some(views), EncodeMode::Unsupervised) => dirs.ensemble(views),
            (Some(views), EncodeMode::Supervised) => {
                let cleaned: Vec<Vec<f64>> = views
                    .iter()
                    .zip(&dirs.u)
                    .map(|(z, u)| crate::postprocess::remove_from_vector(z, u))
                    .collect::<Result<_>>()?;
                if model.views == ViewConfig::Fg {
                    ensemble_supervised(&cleaned[0], &cleaned[1], model.d)
                } else {
                    Ok(cleaned.concat())
                }
            }
        })
        .collect()
}
