//! Training-time encoders recorded on a [`Graph`].

use super::{BiGruParams, FinalState, GruDirectionParams, LinearParams};
use crate::error::Result;
use crate::numerics::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug)]
pub struct GruDirectionVars {
    pub w_r: Var,
    pub w_z: Var,
    pub w_h: Var,
    pub u_r: Var,
    pub u_z: Var,
    pub u_h: Var,
    pub b_r: Var,
    pub b_z: Var,
    pub b_h: Var,
    hidden: usize,
}

impl GruDirectionVars {
    /// Registers the nine tensors as parameters, in
    /// [`GruDirectionParams::FIELD_NAMES`] order.
    pub fn register(g: &mut Graph, p: &GruDirectionParams) -> Self {
        let [w_r, w_z, w_h, u_r, u_z, u_h, b_r, b_z, b_h] =
            p.tensors().map(|t| g.param(t.clone()));
        GruDirectionVars {
            w_r,
            w_z,
            w_h,
            u_r,
            u_z,
            u_h,
            b_r,
            b_z,
            b_h,
            hidden: p.hidden(),
        }
    }

    /// Same weights recorded as constants.
    pub fn constant(g: &mut Graph, p: &GruDirectionParams) -> Self {
        let [w_r, w_z, w_h, u_r, u_z, u_h, b_r, b_z, b_h] =
            p.tensors().map(|t| g.constant(t.clone()));
        GruDirectionVars {
            w_r,
            w_z,
            w_h,
            u_r,
            u_z,
            u_h,
            b_r,
            b_z,
            b_h,
            hidden: p.hidden(),
        }
    }

    /// States after each step, indexed by time position.
    fn run(&self, g: &mut Graph, x: Var, order: &[usize]) -> Result<Vec<Option<Var>>> {
        let m = g.value(x).cols();
        let wr = g.matmul(self.w_r, x)?;
        let wz = g.matmul(self.w_z, x)?;
        let wh = g.matmul(self.w_h, x)?;
        let mut h = g.constant(Tensor::zeros(&[self.hidden, 1]));
        let mut states = vec![None; m];
        for &t in order {
            let xr = g.column(wr, t)?;
            let ur = g.matmul(self.u_r, h)?;
            let r = g.add(xr, ur)?;
            let r = g.add(r, self.b_r)?;
            let r = g.sigmoid(r);

            let xz = g.column(wz, t)?;
            let uz = g.matmul(self.u_z, h)?;
            let z = g.add(xz, uz)?;
            let z = g.add(z, self.b_z)?;
            let z = g.sigmoid(z);

            let rh = g.mul(r, h)?;
            let xh = g.column(wh, t)?;
            let uh = g.matmul(self.u_h, rh)?;
            let cand = g.add(xh, uh)?;
            let cand = g.add(cand, self.b_h)?;
            let cand = g.tanh(cand);

            let keep = g.one_minus(z);
            let keep = g.mul(keep, h)?;
            let write = g.mul(z, cand)?;
            h = g.add(keep, write)?;
            states[t] = Some(h);
        }
        Ok(states)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BiGruVars {
    pub forward: GruDirectionVars,
    pub backward: GruDirectionVars,
}

impl BiGruVars {
    pub fn register(g: &mut Graph, p: &BiGruParams) -> Self {
        BiGruVars {
            forward: GruDirectionVars::register(g, &p.forward),
            backward: GruDirectionVars::register(g, &p.backward),
        }
    }

    pub fn constant(g: &mut Graph, p: &BiGruParams) -> Self {
        BiGruVars {
            forward: GruDirectionVars::constant(g, &p.forward),
            backward: GruDirectionVars::constant(g, &p.backward),
        }
    }
}

/// Training representation of the `f` view for word matrix `x` (`D x M`),
/// as a `2d x 1` node.
pub fn encode_f(g: &mut Graph, x: Var, p: &BiGruVars, which: FinalState) -> Result<Var> {
    let m = g.value(x).cols();
    let forward: Vec<usize> = (0..m).collect();
    let backward: Vec<usize> = (0..m).rev().collect();
    let fwd = p.forward.run(g, x, &forward)?;
    let bwd = p.backward.run(g, x, &backward)?;
    let last = m - 1;
    let (f, b) = match which {
        FinalState::PerDirection => (fwd[last], bwd[0]),
        FinalState::LastColumn => (fwd[last], bwd[last]),
    };
    // every position is visited by both directions
    g.vcat(&[f.expect("visited"), b.expect("visited")])
}

/// All hidden states `H` (`2d x M`).
pub fn bigru_hidden(g: &mut Graph, x: Var, p: &BiGruVars) -> Result<Var> {
    let m = g.value(x).cols();
    let forward: Vec<usize> = (0..m).collect();
    let backward: Vec<usize> = (0..m).rev().collect();
    let fwd = p.forward.run(g, x, &forward)?;
    let bwd = p.backward.run(g, x, &backward)?;
    let mut cols = Vec::with_capacity(m);
    for t in 0..m {
        let (a, b) = (fwd[t].expect("visited"), bwd[t].expect("visited"));
        cols.push(g.vcat(&[a, b])?);
    }
    g.hcat(&cols)
}

pub fn encode_g(g: &mut Graph, x: Var, w_g: Var) -> Result<Var> {
    let p = g.matmul(w_g, x)?;
    g.mean_cols(p)
}

pub fn register_linear(g: &mut Graph, p: &LinearParams) -> Var {
    g.param(p.w_g.clone())
}
