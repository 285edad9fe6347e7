//! First-principal-component removal.
//!
//! The top principal direction `u` of a set of representations
//! `Z = [z_1 … z_N]` (no mean-centering) is estimated by power iteration on
//! `ZZᵀ`, or on the smaller `ZᵀZ` when `N < 2d`, and removed from every
//! column: `z ← z − u uᵀ z`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{dot, l2_normalize, norm, Tensor};

/// Power-iteration budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcConfig {
    pub max_iters: usize,
    /// Stop early once successive iterates differ by less than this in norm.
    pub tol: Option<f64>,
}

impl Default for PcConfig {
    fn default() -> Self {
        PcConfig {
            max_iters: 20,
            tol: Some(1e-10),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcEstimate {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub via_gram: bool,
    pub fitted_on: usize,
}

fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        if let Ok(u) = l2_normalize(&v) {
            return u;
        }
    }
}

fn matvec(c: &Tensor, u: &[f64]) -> Vec<f64> {
    let n = c.cols();
    (0..c.rows())
        .map(|i| dot(&c.data()[i * n..(i + 1) * n], u))
        .collect()
}

fn check_symmetric(c: &Tensor) -> Result<()> {
    if !c.is_matrix() || c.rows() != c.cols() {
        return Err(Error::Dimension(format!(
            "power iteration needs a square matrix, got {:?}",
            c.shape()
        )));
    }
    let n = c.rows();
    for i in 0..n {
        for j in 0..i {
            if (c.at(i, j) - c.at(j, i)).abs() > 1e-10 {
                return Err(Error::Usage(format!("matrix not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// Power iteration from a random unit vector: repeat `u ← Cu; u ← u/‖u‖`.
///
/// Returns the final iterate and the number of multiplications performed.
pub fn power_iteration_with<R: Rng + ?Sized>(
    c: &Tensor,
    cfg: PcConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    check_symmetric(c)?;
    if cfg.max_iters == 0 {
        return Err(Error::Usage("power iteration needs at least one step".into()));
    }
    let mut u = random_unit(c.rows(), rng);
    for k in 1..=cfg.max_iters {
        let next = l2_normalize(&matvec(c, &u))
            .map_err(|_| Error::DegenerateMatrix("C u vanished during power iteration".into()))?;
        let delta = norm(
            &next
                .iter()
                .zip(&u)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        u = next;
        if cfg.tol.is_some_and(|tol| delta < tol) {
            return Ok((u, k));
        }
    }
    Ok((u, cfg.max_iters))
}

/// Exactly `iters` power-iteration steps on the symmetric PSD matrix `c`.
pub fn power_iteration<R: Rng + ?Sized>(c: &Tensor, iters: usize, rng: &mut R) -> Result<Vec<f64>> {
    power_iteration_with(
        c,
        PcConfig {
            max_iters: iters,
            tol: None,
        },
        rng,
    )
    .map(|(u, _)| u)
}

/// Top principal direction from the `N x N` Gram matrix `ZᵀZ`:
/// `v` = its top eigenvector, `u = Zv / ‖Zv‖`.
pub fn top_pc_via_gram_with<R: Rng + ?Sized>(
    z: &Tensor,
    cfg: PcConfig,
    rng: &mut R,
) -> Result<PcEstimate> {
    if !z.is_matrix() || z.cols() < 2 {
        return Err(Error::InsufficientData("need at least two vectors".into()));
    }
    let gram = z.t_matmul(z)?;
    let (v, iterations) = power_iteration_with(&gram, cfg, rng)?;
    let u = l2_normalize(&matvec(z, &v))
        .map_err(|_| Error::DegenerateMatrix("Z v vanished".into()))?;
    Ok(PcEstimate {
        u,
        iterations,
        via_gram: true,
        fitted_on: z.cols(),
    })
}

pub fn top_pc_via_gram<R: Rng + ?Sized>(z: &Tensor, iters: usize, rng: &mut R) -> Result<PcEstimate> {
    top_pc_via_gram_with(
        z,
        PcConfig {
            max_iters: iters,
            tol: None,
        },
        rng,
    )
}

/// Top principal direction from the `2d x 2d` matrix `ZZᵀ`.
pub fn top_pc_direct_with<R: Rng + ?Sized>(
    z: &Tensor,
    cfg: PcConfig,
    rng: &mut R,
) -> Result<PcEstimate> {
    if !z.is_matrix() || z.cols() < 2 {
        return Err(Error::InsufficientData("need at least two vectors".into()));
    }
    let cov = z.matmul_t(z)?;
    let (u, iterations) = power_iteration_with(&cov, cfg, rng)?;
    Ok(PcEstimate {
        u,
        iterations,
        via_gram: false,
        fitted_on: z.cols(),
    })
}

/// Picks the Gram route when there are fewer vectors than dimensions.
pub fn fit_pc<R: Rng + ?Sized>(z: &Tensor, cfg: PcConfig, rng: &mut R) -> Result<PcEstimate> {
    if z.cols() < z.rows() {
        top_pc_via_gram_with(z, cfg, rng)
    } else {
        top_pc_direct_with(z, cfg, rng)
    }
}

fn check_unit(u: &[f64]) -> Result<()> {
    let n = norm(u);
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!("direction has norm {n}, expected 1")));
    }
    Ok(())
}

/// Relative size of `uᵀz` below which `z` already counts as orthogonal.
const ORTHO_TOL: f64 = 1e-13;

/// `z − u uᵀ z`, repeated until `|uᵀz| ≤ 1e-13 ‖z‖`. A vector that passes the
/// test is returned untouched, so a second removal with the same `u` is the
/// identity.
pub fn remove_from_vector(z: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_unit(u)?;
    if z.len() != u.len() {
        return Err(Error::Dimension(format!(
            "vector of {} against direction of {}",
            z.len(),
            u.len()
        )));
    }
    let mut cur = z.to_vec();
    for _ in 0..16 {
        let k = dot(u, &cur);
        if k.abs() <= ORTHO_TOL * norm(&cur) {
            break;
        }
        cur = cur.iter().zip(u).map(|(x, ui)| x - k * ui).collect();
    }
    Ok(cur)
}

/// Removes `u` from every column of `z` (`2d x N`).
pub fn remove_pc(z: &Tensor, u: &[f64]) -> Result<Tensor> {
    if z.rows() != u.len() {
        return Err(Error::Dimension(format!(
            "{} rows against direction of {}",
            z.rows(),
            u.len()
        )));
    }
    check_unit(u)?;
    let cols = z
        .columns()
        .iter()
        .map(|c| remove_from_vector(c, u))
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_columns(&cols)
}

/// `I − u uᵀ`.
pub fn projector(u: &[f64]) -> Tensor {
    let n = u.len();
    let mut p = Tensor::identity(n);
    for i in 0..n {
        for j in 0..n {
            p.set(i, j, p.at(i, j) - u[i] * u[j]);
        }
    }
    p
}

/// Fits the top direction on this set of columns and removes it.
pub fn postprocess_batch<R: Rng + ?Sized>(
    z: &Tensor,
    cfg: PcConfig,
    rng: &mut R,
) -> Result<(Tensor, PcEstimate)> {
    if !z.is_matrix() || z.cols() < 2 {
        return Err(Error::InsufficientData(
            "principal component needs at least two vectors".into(),
        ));
    }
    let est = fit_pc(z, cfg, rng)?;
    let out = remove_pc(z, &est.u)?;
    Ok((out, est))
}

/// `ẑ^f + ẑ^g`.
pub fn ensemble_unsupervised(z_f: &[f64], z_g: &[f64]) -> Result<Vec<f64>> {
    if z_f.len() != z_g.len() {
        return Err(Error::Dimension(format!(
            "views of length {} and {}",
            z_f.len(),
            z_g.len()
        )));
    }
    let a = l2_normalize(z_f)?;
    let b = l2_normalize(z_g)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

/// `[feat_f ; feat_g]` for the `8d`-long `f` features and `6d`-long `g`
/// features.
pub fn ensemble_supervised(feat_f: &[f64], feat_g: &[f64], d: usize) -> Result<Vec<f64>> {
    if feat_f.len() != 8 * d || feat_g.len() != 6 * d {
        return Err(Error::Dimension(format!(
            "supervised parts of length {} and {}, expected {} and {}",
            feat_f.len(),
            feat_g.len(),
            8 * d,
            6 * d
        )));
    }
    Ok(feat_f.iter().chain(feat_g).copied().collect())
}
