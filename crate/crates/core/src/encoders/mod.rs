//! The two views of a sentence.
//!
//! `f` is a bidirectional GRU over the word vectors; `g` projects each word
//! vector linearly and averages. This module holds the plain forward passes
//! used at inference time, pooling, and the composition of sentence
//! representations for training, supervised and unsupervised use. The
//! differentiable versions used during training live in [`graph`].

pub mod graph;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{he_init, sigmoid, Tensor};

/// Weights of one GRU direction.
#[derive(Clone, Debug, PartialEq)]
pub struct GruDirectionParams {
    /// `d x D` input weights.
    pub w_r: Tensor,
    pub w_z: Tensor,
    pub w_h: Tensor,
    /// `d x d` recurrent weights.
    pub u_r: Tensor,
    pub u_z: Tensor,
    pub u_h: Tensor,
    /// `d x 1` biases.
    pub b_r: Tensor,
    pub b_z: Tensor,
    pub b_h: Tensor,
}

impl GruDirectionParams {
    /// He-normal weights, gate biases at one, candidate bias at zero.
    pub fn init<R: Rng + ?Sized>(d: usize, dim: usize, rng: &mut R) -> Result<Self> {
        Ok(GruDirectionParams {
            w_r: he_init(&[d, dim], dim, rng)?,
            w_z: he_init(&[d, dim], dim, rng)?,
            w_h: he_init(&[d, dim], dim, rng)?,
            u_r: he_init(&[d, d], d, rng)?,
            u_z: he_init(&[d, d], d, rng)?,
            u_h: he_init(&[d, d], d, rng)?,
            b_r: Tensor::filled(&[d, 1], 1.0),
            b_z: Tensor::filled(&[d, 1], 1.0),
            b_h: Tensor::zeros(&[d, 1]),
        })
    }

    pub fn zeros(d: usize, dim: usize) -> Self {
        GruDirectionParams {
            w_r: Tensor::zeros(&[d, dim]),
            w_z: Tensor::zeros(&[d, dim]),
            w_h: Tensor::zeros(&[d, dim]),
            u_r: Tensor::zeros(&[d, d]),
            u_z: Tensor::zeros(&[d, d]),
            u_h: Tensor::zeros(&[d, d]),
            b_r: Tensor::zeros(&[d, 1]),
            b_z: Tensor::zeros(&[d, 1]),
            b_h: Tensor::zeros(&[d, 1]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_r.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_r.cols()
    }

    pub const FIELD_NAMES: [&'static str; 9] =
        ["w_r", "w_z", "w_h", "u_r", "u_z", "u_h", "b_r", "b_z", "b_h"];

    pub fn tensors(&self) -> [&Tensor; 9] {
        [
            &self.w_r, &self.w_z, &self.w_h, &self.u_r, &self.u_z, &self.u_h, &self.b_r,
            &self.b_z, &self.b_h,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 9] {
        [
            &mut self.w_r,
            &mut self.w_z,
            &mut self.w_h,
            &mut self.u_r,
            &mut self.u_z,
            &mut self.u_h,
            &mut self.b_r,
            &mut self.b_z,
            &mut self.b_h,
        ]
    }

    fn check(&self) -> Result<()> {
        let (d, dim) = (self.hidden(), self.input_dim());
        let ok = [&self.w_z, &self.w_h].iter().all(|t| t.shape() == [d, dim])
            && [&self.u_r, &self.u_z, &self.u_h].iter().all(|t| t.shape() == [d, d])
            && [&self.b_r, &self.b_z, &self.b_h].iter().all(|t| t.shape() == [d, 1]);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "inconsistent GRU direction shapes for d={d}, D={dim}"
            )))
        }
    }
}

/// Both directions of the `f` encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct BiGruParams {
    pub forward: GruDirectionParams,
    pub backward: GruDirectionParams,
}

impl BiGruParams {
    pub fn init<R: Rng + ?Sized>(d: usize, dim: usize, rng: &mut R) -> Result<Self> {
        Ok(BiGruParams {
            forward: GruDirectionParams::init(d, dim, rng)?,
            backward: GruDirectionParams::init(d, dim, rng)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn check(&self) -> Result<()> {
        self.forward.check()?;
        self.backward.check()?;
        if self.forward.hidden() != self.backward.hidden()
            || self.forward.input_dim() != self.backward.input_dim()
        {
            return Err(Error::Dimension("GRU directions disagree on shape".into()));
        }
        Ok(())
    }
}

/// The `g` encoder: a bias-free `2d x D` projection.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    pub w_g: Tensor,
}

impl LinearParams {
    pub fn init<R: Rng + ?Sized>(d: usize, dim: usize, rng: &mut R) -> Result<Self> {
        Ok(LinearParams {
            w_g: he_init(&[2 * d, dim], dim, rng)?,
        })
    }
}

/// Which recurrent state stands for the whole sentence during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FinalState {
    /// `[h→_M ; h←_1]`: each direction after reading the whole sentence.
    #[default]
    PerDirection,
    /// Column `M` of `H`: the backward half has read only the last word.
    LastColumn,
}

impl std::str::FromStr for FinalState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-direction" => Ok(FinalState::PerDirection),
            "last-column" => Ok(FinalState::LastColumn),
            other => Err(Error::Usage(format!("unknown final state {other:?}"))),
        }
    }
}

impl FinalState {
    pub fn name(self) -> &'static str {
        match self {
            FinalState::PerDirection => "per-direction",
            FinalState::LastColumn => "last-column",
        }
    }
}

fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let cols = w.cols();
    (0..w.rows())
        .map(|i| {
            w.data()[i * cols..(i + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// One GRU step:
/// `r = σ(W_r x + U_r h + b_r)`, `z = σ(W_z x + U_z h + b_z)`,
/// `h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)`, `h' = (1 − z) ⊙ h + z ⊙ h̃`.
pub fn gru_cell(x: &[f64], h_prev: &[f64], p: &GruDirectionParams) -> Result<Vec<f64>> {
    let (d, dim) = (p.hidden(), p.input_dim());
    if x.len() != dim || h_prev.len() != d {
        return Err(Error::Dimension(format!(
            "gru_cell expects x of {dim} and h of {d}, got {} and {}",
            x.len(),
            h_prev.len()
        )));
    }
    let gate = |w: &Tensor, u: &Tensor, b: &Tensor, h: &[f64]| -> Vec<f64> {
        let wx = matvec(w, x);
        let uh = matvec(u, h);
        (0..d).map(|i| wx[i] + uh[i] + b.data()[i]).collect()
    };
    let r: Vec<f64> = gate(&p.w_r, &p.u_r, &p.b_r, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let z: Vec<f64> = gate(&p.w_z, &p.u_z, &p.b_z, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let cand: Vec<f64> = gate(&p.w_h, &p.u_h, &p.b_h, &rh)
        .into_iter()
        .map(f64::tanh)
        .collect();
    Ok((0..d)
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * cand[i])
        .collect())
}

/// Runs one direction over the columns of `x` in the given order, returning
/// the state after each step indexed by time position.
fn run_direction(
    x: &Tensor,
    p: &GruDirectionParams,
    order: impl Iterator<Item = usize>,
) -> Result<Vec<Vec<f64>>> {
    let m = x.cols();
    let mut states = vec![Vec::new(); m];
    let mut h = vec![0.0; p.hidden()];
    for t in order {
        h = gru_cell(&x.column(t), &h, p)?;
        states[t] = h.clone();
    }
    Ok(states)
}

/// Hidden states `H` (`2d x M`): column `t` is `[h→_t ; h←_t]`.
pub fn bigru_forward(x: &Tensor, p: &BiGruParams) -> Result<Tensor> {
    if !x.is_matrix() || x.cols() == 0 {
        return Err(Error::EmptySentence);
    }
    if x.rows() != p.input_dim() {
        return Err(Error::Dimension(format!(
            "word dimension {} does not match encoder input {}",
            x.rows(),
            p.input_dim()
        )));
    }
    let m = x.cols();
    let fwd = run_direction(x, &p.forward, 0..m)?;
    let bwd = run_direction(x, &p.backward, (0..m).rev())?;
    let columns: Vec<Vec<f64>> = fwd
        .into_iter()
        .zip(bwd)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect();
    Tensor::from_columns(&columns)
}

/// Training-time `f` representation read off the hidden states.
pub fn final_state_of(h: &Tensor, d: usize, which: FinalState) -> Vec<f64> {
    let m = h.cols();
    match which {
        FinalState::LastColumn => h.column(m - 1),
        FinalState::PerDirection => {
            let last = h.column(m - 1);
            let first = h.column(0);
            last[..d].iter().chain(&first[d..]).copied().collect()
        }
    }
}

pub fn encode_f_train(x: &Tensor, p: &BiGruParams, which: FinalState) -> Result<Vec<f64>> {
    let h = bigru_forward(x, p)?;
    Ok(final_state_of(&h, p.hidden(), which))
}

/// `W_g X`, one projected column per word.
pub fn project_g(x: &Tensor, w_g: &Tensor) -> Result<Tensor> {
    if !x.is_matrix() || x.cols() == 0 {
        return Err(Error::EmptySentence);
    }
    w_g.matmul(x)
}

/// `(1/M) Σ_j W_g x_j`.
pub fn encode_g(x: &Tensor, w_g: &Tensor) -> Result<Vec<f64>> {
    pool(&project_g(x, w_g)?, PoolKind::Mean)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Mean,
    Min,
    Last,
}

impl std::str::FromStr for PoolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(PoolKind::Max),
            "mean" => Ok(PoolKind::Mean),
            "min" => Ok(PoolKind::Min),
            "last" => Ok(PoolKind::Last),
            other => Err(Error::Usage(format!("unknown pooling {other:?}"))),
        }
    }
}

/// Coordinate-wise reduction over the columns of `m`.
pub fn pool(m: &Tensor, kind: PoolKind) -> Result<Vec<f64>> {
    if !m.is_matrix() || m.cols() == 0 {
        return Err(Error::EmptySentence);
    }
    let (r, c) = (m.rows(), m.cols());
    let row = |i: usize| &m.data()[i * c..(i + 1) * c];
    Ok((0..r)
        .map(|i| match kind {
            PoolKind::Max => row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            PoolKind::Min => row(i).iter().cloned().fold(f64::INFINITY, f64::min),
            PoolKind::Mean => row(i).iter().sum::<f64>() / c as f64,
            PoolKind::Last => row(i)[c - 1],
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Supervised,
    Unsupervised,
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Phase::Train),
            "supervised" => Ok(Phase::Supervised),
            "unsupervised" => Ok(Phase::Unsupervised),
            other => Err(Error::Usage(format!("unknown phase {other:?}"))),
        }
    }
}

/// Encoder family of a view.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewKind {
    F,
    G,
}

/// Everything one view computes for a sentence.
#[derive(Clone, Debug, PartialEq)]
pub enum ViewState {
    /// Bi-GRU hidden states and the training representation.
    Recurrent { hidden: Tensor, last: Vec<f64> },
    /// Projected word vectors `W_g X`.
    Linear { projected: Tensor },
}

impl ViewState {
    pub fn kind(&self) -> ViewKind {
        match self {
            ViewState::Recurrent { .. } => ViewKind::F,
            ViewState::Linear { .. } => ViewKind::G,
        }
    }

    /// Sentence representation for `phase`:
    ///
    /// | view | train | supervised | unsupervised |
    /// |------|-------|------------|--------------|
    /// | f | final state | `[max; mean; min; final](H)` | `mean(H)` |
    /// | g | `mean(W_g X)` | `[max; mean; min](W_g X)` | `mean(W_g X)` |
    pub fn represent(&self, phase: Phase) -> Result<Vec<f64>> {
        match (self, phase) {
            (ViewState::Recurrent { last, .. }, Phase::Train) => Ok(last.clone()),
            (ViewState::Recurrent { hidden, last }, Phase::Supervised) => {
                let mut v = pool(hidden, PoolKind::Max)?;
                v.extend(pool(hidden, PoolKind::Mean)?);
                v.extend(pool(hidden, PoolKind::Min)?);
                v.extend_from_slice(last);
                Ok(v)
            }
            (ViewState::Recurrent { hidden, .. }, Phase::Unsupervised) => {
                pool(hidden, PoolKind::Mean)
            }
            (ViewState::Linear { projected }, Phase::Supervised) => {
                let mut v = pool(projected, PoolKind::Max)?;
                v.extend(pool(projected, PoolKind::Mean)?);
                v.extend(pool(projected, PoolKind::Min)?);
                Ok(v)
            }
            (ViewState::Linear { projected }, Phase::Train | Phase::Unsupervised) => {
                pool(projected, PoolKind::Mean)
            }
        }
    }
}

pub fn encode_view_f(x: &Tensor, p: &BiGruParams, which: FinalState) -> Result<ViewState> {
    let hidden = bigru_forward(x, p)?;
    let last = final_state_of(&hidden, p.hidden(), which);
    Ok(ViewState::Recurrent { hidden, last })
}

pub fn encode_view_g(x: &Tensor, p: &LinearParams) -> Result<ViewState> {
    Ok(ViewState::Linear {
        projected: project_g(x, &p.w_g)?,
    })
}

/// Both views of one sentence from an `f`+`g` model.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedViews {
    /// `2d x M` hidden states.
    pub h: Tensor,
    pub z_f: Vec<f64>,
    pub z_g: Vec<f64>,
    /// `2d x M` projected words.
    pub p: Tensor,
}

impl EncodedViews {
    pub fn encode(x: &Tensor, f: &BiGruParams, g: &LinearParams, which: FinalState) -> Result<Self> {
        let h = bigru_forward(x, f)?;
        let z_f = final_state_of(&h, f.hidden(), which);
        let p = project_g(x, &g.w_g)?;
        let z_g = pool(&p, PoolKind::Mean)?;
        Ok(EncodedViews { h, z_f, z_g, p })
    }
}

pub fn compose_representation(views: &EncodedViews, phase: Phase, which: ViewKind) -> Result<Vec<f64>> {
    match which {
        ViewKind::F => ViewState::Recurrent {
            hidden: views.h.clone(),
            last: views.z_f.clone(),
        }
        .represent(phase),
        ViewKind::G => ViewState::Linear {
            projected: views.p.clone(),
        }
        .represent(phase),
    }
}

/// Parameter accounting quoted for the model: `6·d·d·2 + 300·2d`.
pub fn parameter_count(d: u64) -> u64 {
    12 * d * d + 600 * d
}

/// Exact number of weights in a built `f`+`g` pair with word dimension `dim`.
pub fn exact_parameter_count(d: u64, dim: u64) -> u64 {
    2 * (3 * d * dim + 3 * d * d + 3 * d) + 2 * d * dim
}
