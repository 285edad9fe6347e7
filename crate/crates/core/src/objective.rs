//! Agreement between views, context pairs, and the in-batch softmax loss.
//!
//! For a batch of `N` sentences with representations `z_i^f`, `z_i^g`, the
//! loss is `−Σ_{(i,j)} log p_ij` with
//! `p_ij = exp(a_ij/τ) / Σ_n exp(a_in/τ)` over all batch rows `n`, where the
//! sum runs over the context pairs `|i − j| ≤ c` inside one document.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cosine, l2_normalize, Graph, Tensor, Var};

pub const TAU_MIN: f64 = 1e-2;
pub const TAU_MAX: f64 = 1e2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgreementKind {
    /// `cos(z_i^f, z_j^g) + cos(z_i^g, z_j^f)`
    #[default]
    Cross,
    /// cross plus both within-view terms
    Full,
    /// `cos(z_i^f, z_j^f) + cos(z_i^g, z_j^g)`
    Within,
}

impl AgreementKind {
    pub const ALL: [AgreementKind; 3] = [AgreementKind::Cross, AgreementKind::Full, AgreementKind::Within];

    pub fn name(self) -> &'static str {
        match self {
            AgreementKind::Cross => "cross",
            AgreementKind::Full => "full",
            AgreementKind::Within => "within",
        }
    }
}

impl std::str::FromStr for AgreementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross" => Ok(AgreementKind::Cross),
            "full" => Ok(AgreementKind::Full),
            "within" => Ok(AgreementKind::Within),
            other => Err(Error::Usage(format!("unknown agreement {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            other => Err(Error::Usage(format!("unknown reduction {other:?}"))),
        }
    }
}

impl Reduction {
    pub fn name(self) -> &'static str {
        match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        }
    }

    fn scale(self, pairs: usize) -> f64 {
        match self {
            Reduction::Sum => 1.0,
            Reduction::Mean => 1.0 / pairs as f64,
        }
    }
}

/// Softmax temperature, kept inside `[TAU_MIN, TAU_MAX]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Temperature {
    pub value: f64,
    pub trainable: bool,
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature {
            value: 1.0,
            trainable: true,
        }
    }
}

impl Temperature {
    pub fn clamp(&mut self) {
        self.value = self.value.clamp(TAU_MIN, TAU_MAX);
    }
}

/// Ordered positive pairs of a batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSet {
    pub pairs: Vec<(usize, usize)>,
    pub window: usize,
    pub include_self: bool,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Segment index of every position; `breaks[k]` starts a new segment at `k`.
fn segments(n: usize, breaks: &[bool]) -> Vec<usize> {
    let mut seg = 0;
    (0..n)
        .map(|k| {
            if k > 0 && breaks.get(k).copied().unwrap_or(false) {
                seg += 1;
            }
            seg
        })
        .collect()
}

/// All ordered `(i, j)` with `|i − j| ≤ c` that stay within one segment.
pub fn context_pairs(n: usize, c: usize, include_self: bool, breaks: &[bool]) -> Result<PairSet> {
    if n < 2 {
        return Err(Error::InsufficientData(format!("batch of {n} sentences")));
    }
    if c < 1 {
        return Err(Error::Usage("context window must be at least 1".into()));
    }
    let seg = segments(n, breaks);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i.saturating_sub(c)..(i + c + 1).min(n) {
            if (i != j || include_self) && seg[i] == seg[j] {
                pairs.push((i, j));
            }
        }
    }
    Ok(PairSet {
        pairs,
        window: c,
        include_self,
    })
}

pub fn agreement(
    zi_f: &[f64],
    zi_g: &[f64],
    zj_f: &[f64],
    zj_g: &[f64],
    kind: AgreementKind,
) -> Result<f64> {
    let cross = || -> Result<f64> { Ok(cosine(zi_f, zj_g)? + cosine(zi_g, zj_f)?) };
    let within = || -> Result<f64> { Ok(cosine(zi_f, zj_f)? + cosine(zi_g, zj_g)?) };
    match kind {
        AgreementKind::Cross => cross(),
        AgreementKind::Within => within(),
        AgreementKind::Full => Ok(cross()? + within()?),
    }
}

/// Cosine matrix `S[i][j] = cos(a_i, b_j)` between two lists of vectors.
pub fn cosine_matrix(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Tensor> {
    let an = a.iter().map(|v| l2_normalize(v)).collect::<Result<Vec<_>>>()?;
    let bn = b.iter().map(|v| l2_normalize(v)).collect::<Result<Vec<_>>>()?;
    let mut s = Tensor::zeros(&[a.len().max(1), b.len().max(1)]);
    for (i, x) in an.iter().enumerate() {
        for (j, y) in bn.iter().enumerate() {
            s.set(i, j, crate::numerics::dot(x, y));
        }
    }
    Ok(s)
}

/// Agreement matrix `A[i][j] = a_ij` for one or two views.
///
/// With a single view the agreement is `cos(z_i, z_j)` and `kind` is ignored.
pub fn agreement_matrix(views: &[&[Vec<f64>]], kind: AgreementKind) -> Result<Tensor> {
    match views {
        [only] => cosine_matrix(only, only),
        [f, g] => {
            let within = || -> Result<Tensor> { cosine_matrix(f, f)?.add(&cosine_matrix(g, g)?) };
            let cross = || -> Result<Tensor> {
                let s = cosine_matrix(f, g)?;
                s.add(&s.transpose()?)
            };
            match kind {
                AgreementKind::Cross => cross(),
                AgreementKind::Within => within(),
                AgreementKind::Full => cross()?.add(&within()?),
            }
        }
        _ => Err(Error::Usage(format!("{} views; expected 1 or 2", views.len()))),
    }
}

/// Row-wise softmax of `a / τ`, with max subtraction.
pub fn pair_probabilities(a: &Tensor, tau: f64) -> Tensor {
    let (r, c) = (a.rows(), a.cols());
    let mut p = Tensor::zeros(a.shape());
    for i in 0..r {
        let row: Vec<f64> = (0..c).map(|n| a.at(i, n) / tau).collect();
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        for (n, v) in e.iter().enumerate() {
            p.set(i, n, v / s);
        }
    }
    p
}

/// Loss over a precomputed agreement matrix.
pub fn loss_from_agreement(a: &Tensor, pairs: &PairSet, tau: f64, reduction: Reduction) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no context pairs".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Usage(format!("temperature {tau} must be positive")));
    }
    let c = a.cols();
    let lse: Vec<f64> = (0..a.rows())
        .map(|i| {
            let row: Vec<f64> = (0..c).map(|n| a.at(i, n) / tau).collect();
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        })
        .collect();
    let total: f64 = pairs
        .pairs
        .iter()
        .map(|&(i, j)| lse[i] - a.at(i, j) / tau)
        .sum();
    Ok(total * reduction.scale(pairs.len()))
}

/// The contrastive loss for rows `z_f[i]`, `z_g[i]` of an `N`-sentence batch.
pub fn contrastive_loss(
    z_f: &[Vec<f64>],
    z_g: &[Vec<f64>],
    pairs: &PairSet,
    tau: f64,
    kind: AgreementKind,
    reduction: Reduction,
) -> Result<f64> {
    if z_f.len() != z_g.len() {
        return Err(Error::Dimension(format!(
            "{} f rows and {} g rows",
            z_f.len(),
            z_g.len()
        )));
    }
    let a = agreement_matrix(&[z_f, z_g], kind)?;
    loss_from_agreement(&a, pairs, tau, reduction)
}

/// Differentiable agreement matrix from `2d x N` view nodes.
pub fn agreement_graph(g: &mut Graph, views: &[Var], kind: AgreementKind) -> Result<Var> {
    let mut normalized = Vec::with_capacity(views.len());
    for &v in views {
        normalized.push(g.normalize_cols(v)?);
    }
    let gram = |g: &mut Graph, a: Var, b: Var| -> Result<Var> {
        let at = g.transpose(a)?;
        g.matmul(at, b)
    };
    match normalized[..] {
        [only] => gram(g, only, only),
        [f, gv] => {
            let cross = |g: &mut Graph| -> Result<Var> {
                let s = gram(g, f, gv)?;
                let st = g.transpose(s)?;
                g.add(s, st)
            };
            match kind {
                AgreementKind::Cross => cross(g),
                AgreementKind::Within => {
                    let ff = gram(g, f, f)?;
                    let gg = gram(g, gv, gv)?;
                    g.add(ff, gg)
                }
                AgreementKind::Full => {
                    let c = cross(g)?;
                    let ff = gram(g, f, f)?;
                    let gg = gram(g, gv, gv)?;
                    let w = g.add(ff, gg)?;
                    g.add(c, w)
                }
            }
        }
        _ => Err(Error::Usage(format!("{} views; expected 1 or 2", views.len()))),
    }
}

/// Differentiable loss from an agreement node and a `1`-element τ node.
pub fn loss_graph(
    g: &mut Graph,
    agreement: Var,
    tau: Var,
    pairs: &PairSet,
    reduction: Reduction,
) -> Result<Var> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no context pairs".into()));
    }
    let logits = g.div_scalar(agreement, tau)?;
    g.pair_softmax_xent(logits, &pairs.pairs, reduction.scale(pairs.len()))
}

/// Mean adjacent-pair cosines divided by τ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub ff: f64,
    pub gg: f64,
    pub fg: f64,
}

/// Averages over in-document pairs `(i, i+1)` of `cos(z_i^f, z_j^f)/τ`,
/// `cos(z_i^g, z_j^g)/τ`, and `(cos(z_i^f, z_j^g) + cos(z_i^g, z_j^f))/(2τ)`.
pub fn component_diagnostics(
    z_f: &[Vec<f64>],
    z_g: &[Vec<f64>],
    tau: f64,
    breaks: &[bool],
) -> Result<Diagnostics> {
    let n = z_f.len();
    if n < 2 || z_g.len() != n {
        return Err(Error::InsufficientData(format!("batch of {n} sentences")));
    }
    let seg = segments(n, breaks);
    let (mut ff, mut gg, mut fg, mut count) = (0.0, 0.0, 0.0, 0usize);
    for i in 0..n - 1 {
        let j = i + 1;
        if seg[i] != seg[j] {
            continue;
        }
        ff += cosine(&z_f[i], &z_f[j])?;
        gg += cosine(&z_g[i], &z_g[j])?;
        fg += 0.5 * (cosine(&z_f[i], &z_g[j])? + cosine(&z_g[i], &z_f[j])?);
        count += 1;
    }
    if count == 0 {
        return Err(Error::InsufficientData("no adjacent in-document pair".into()));
    }
    let k = count as f64 * tau;
    Ok(Diagnostics {
        ff: ff / k,
        gg: gg / k,
        fg: fg / k,
    })
}

/// Single-view form: mean adjacent `cos(z_i, z_j)/τ`.
pub fn single_view_diagnostic(z: &[Vec<f64>], tau: f64, breaks: &[bool]) -> Result<f64> {
    Ok(component_diagnostics(z, z, tau, breaks)?.ff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, Dtype};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_pairs(n: usize, c: usize, include_self: bool, breaks: &[bool]) -> Vec<(usize, usize)> {
        let doc = |k: usize| (1..=k).filter(|&t| breaks[t]).count();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let dist = (i as i64 - j as i64).unsigned_abs() as usize;
                if dist <= c && (include_self || i != j) && doc(i) == doc(j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn pair_counts() {
        let none = [false; 5];
        assert_eq!(context_pairs(5, 2, false, &none).unwrap().len(), 14);
        assert_eq!(context_pairs(5, 2, true, &none).unwrap().len(), 19);
        assert_eq!(brute_pairs(5, 2, false, &none).len(), 14);
        assert_eq!(brute_pairs(5, 2, true, &none).len(), 19);
    }

    #[test]
    fn breaks_block_pairs() {
        let breaks = [false, false, false, true, false];
        let ps = context_pairs(5, 2, true, &breaks).unwrap();
        for &(i, j) in &ps.pairs {
            assert_eq!(i < 3, j < 3, "pair ({i},{j}) crosses the break");
        }
        let mut expected = brute_pairs(5, 2, true, &breaks);
        let mut got = ps.pairs.clone();
        expected.sort();
        got.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn pairs_need_two_sentences() {
        assert!(matches!(context_pairs(1, 1, true, &[false]), Err(Error::InsufficientData(_))));
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn agreement_cases() {
        let a = [1.0, 2.0, 0.5];
        let b = [-0.3, 0.4, 2.0];
        assert!((agreement(&a, &b, &b, &a, AgreementKind::Cross).unwrap() - 2.0).abs() < 1e-15);

        let e = |k: usize| {
            let mut v = vec![0.0; 4];
            v[k] = 1.0;
            v
        };
        for kind in AgreementKind::ALL {
            assert_eq!(agreement(&e(0), &e(1), &e(2), &e(3), kind).unwrap(), 0.0);
        }
        assert!(matches!(
            agreement(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], AgreementKind::Cross),
            Err(Error::DegenerateVector(_))
        ));
    }

    #[test]
    fn full_is_cross_plus_within() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..50 {
            let v: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(&mut rng, 6)).collect();
            let full = agreement(&v[0], &v[1], &v[2], &v[3], AgreementKind::Full).unwrap();
            let cross = agreement(&v[0], &v[1], &v[2], &v[3], AgreementKind::Cross).unwrap();
            let within = agreement(&v[0], &v[1], &v[2], &v[3], AgreementKind::Within).unwrap();
            assert!((full - cross - within).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_representations_give_ln_n() {
        let z = vec![vec![0.3, -1.0, 2.0]; 6];
        let pairs = context_pairs(6, 2, true, &[false; 6]).unwrap();
        let loss = contrastive_loss(&z, &z, &pairs, 0.7, AgreementKind::Cross, Reduction::Sum).unwrap();
        assert!((loss - pairs.len() as f64 * 6f64.ln()).abs() < 1e-12);
        let mean = contrastive_loss(&z, &z, &pairs, 0.7, AgreementKind::Cross, Reduction::Mean).unwrap();
        assert!((mean - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_sentence_hand_value() {
        // f_1 = g_2 = e_0 and g_1 = f_2 = e_1: a_12 = a_21 = 2, a_11 = a_22 = 0
        let z_f = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let z_g = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let pairs = context_pairs(2, 1, false, &[false, false]).unwrap();
        let tau = 0.8;
        let loss = contrastive_loss(&z_f, &z_g, &pairs, tau, AgreementKind::Cross, Reduction::Sum).unwrap();
        let p = (2.0 / tau).exp() / ((0.0f64 / tau).exp() + (2.0 / tau).exp());
        assert!((loss - (-2.0 * p.ln())).abs() < 1e-12);
    }

    #[test]
    fn empty_pairs_rejected() {
        let a = Tensor::zeros(&[2, 2]);
        let empty = PairSet {
            pairs: vec![],
            window: 1,
            include_self: false,
        };
        assert!(matches!(
            loss_from_agreement(&a, &empty, 1.0, Reduction::Sum),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn collapsed_solution_is_not_a_minimizer() {
        let pairs = context_pairs(4, 1, false, &[false; 4]).unwrap();
        let e = |k: usize| {
            let mut v = vec![0.0; 4];
            v[k] = 1.0;
            v
        };
        // each sentence agrees across views only with itself
        let collapsed: Vec<Vec<f64>> = (0..4).map(e).collect();
        let l_collapsed =
            contrastive_loss(&collapsed, &collapsed, &pairs, 1.0, AgreementKind::Cross, Reduction::Sum)
                .unwrap();
        // alternating parity: each view matches the other view of its neighbours
        let f: Vec<Vec<f64>> = (0..4).map(|i| e(i % 2)).collect();
        let g: Vec<Vec<f64>> = (0..4).map(|i| e(1 - i % 2)).collect();
        let l_aligned = contrastive_loss(&f, &g, &pairs, 1.0, AgreementKind::Cross, Reduction::Sum).unwrap();
        assert!(l_aligned < l_collapsed, "{l_aligned} vs {l_collapsed}");
    }

    #[test]
    fn diagnostics_cases() {
        let z = vec![vec![1.0, 2.0]; 4];
        let d = component_diagnostics(&z, &z, 1.0, &[false; 4]).unwrap();
        assert!((d.ff - 1.0).abs() < 1e-15 && (d.gg - 1.0).abs() < 1e-15 && (d.fg - 1.0).abs() < 1e-15);
        let h = component_diagnostics(&z, &z, 0.5, &[false; 4]).unwrap();
        assert!((h.ff - 2.0 * d.ff).abs() < 1e-15);
        assert!(matches!(
            component_diagnostics(&z[..2], &z[..2], 1.0, &[false, true]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn diagnostics_match_pairwise_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let f: Vec<Vec<f64>> = (0..7).map(|_| rand_vec(&mut rng, 5)).collect();
        let g: Vec<Vec<f64>> = (0..7).map(|_| rand_vec(&mut rng, 5)).collect();
        let breaks = [false, false, false, true, false, false, false];
        let tau = 0.37;
        let d = component_diagnostics(&f, &g, tau, &breaks).unwrap();
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let adjacent = [(0, 1), (1, 2), (3, 4), (4, 5), (5, 6)];
        let k = adjacent.len() as f64;
        let ff: f64 = adjacent.iter().map(|&(i, j)| cos(&f[i], &f[j])).sum::<f64>() / k / tau;
        let gg: f64 = adjacent.iter().map(|&(i, j)| cos(&g[i], &g[j])).sum::<f64>() / k / tau;
        let fg: f64 = adjacent
            .iter()
            .map(|&(i, j)| 0.5 * (cos(&f[i], &g[j]) + cos(&g[i], &f[j])))
            .sum::<f64>()
            / k
            / tau;
        assert!((d.ff - ff).abs() < 1e-12);
        assert!((d.gg - gg).abs() < 1e-12);
        assert!((d.fg - fg).abs() < 1e-12);
    }

    fn graph_loss(zf: &Tensor, zg: &Tensor, tau: &Tensor, kind: AgreementKind, pairs: &PairSet) -> (f64, Vec<Tensor>) {
        let mut g = Graph::new(Dtype::F64);
        let f = g.param(zf.clone());
        let gv = g.param(zg.clone());
        let t = g.param(tau.clone());
        let a = agreement_graph(&mut g, &[f, gv], kind).unwrap();
        let l = loss_graph(&mut g, a, t, pairs, Reduction::Sum).unwrap();
        (g.scalar(l), g.backward(l).unwrap())
    }

    #[test]
    fn graph_loss_matches_plain_and_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 5;
        let pairs = context_pairs(n, 2, true, &[false; 5]).unwrap();
        for kind in AgreementKind::ALL {
            let rows_f: Vec<Vec<f64>> = (0..n).map(|_| rand_vec(&mut rng, 4)).collect();
            let rows_g: Vec<Vec<f64>> = (0..n).map(|_| rand_vec(&mut rng, 4)).collect();
            let zf = Tensor::from_columns(&rows_f).unwrap();
            let zg = Tensor::from_columns(&rows_g).unwrap();
            let tau = Tensor::scalar(0.6);
            let (l, grads) = graph_loss(&zf, &zg, &tau, kind, &pairs);
            let plain = contrastive_loss(&rows_f, &rows_g, &pairs, 0.6, kind, Reduction::Sum).unwrap();
            assert!((l - plain).abs() < 1e-12);
            let nf = finite_diff_grad(|t| Ok(graph_loss(t, &zg, &tau, kind, &pairs).0), &zf, 1e-6).unwrap();
            let nt = finite_diff_grad(|t| Ok(graph_loss(&zf, &zg, t, kind, &pairs).0), &tau, 1e-6).unwrap();
            let rel = |a: &Tensor, b: &Tensor| {
                a.sub(b).unwrap().sum_squares().sqrt() / b.sum_squares().sqrt().max(1e-12)
            };
            assert!(rel(&grads[0], &nf) < 1e-5);
            assert!(rel(&grads[2], &nt) < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn agreement_is_symmetric(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(&mut rng, 3)).collect();
            for kind in AgreementKind::ALL {
                let ij = agreement(&v[0], &v[1], &v[2], &v[3], kind).unwrap();
                let ji = agreement(&v[2], &v[3], &v[0], &v[1], kind).unwrap();
                prop_assert!((ij - ji).abs() < 1e-12);
            }
        }

        #[test]
        fn probability_rows_sum_to_one(seed in 0u64..1000, tau in 0.01f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f: Vec<Vec<f64>> = (0..6).map(|_| rand_vec(&mut rng, 4)).collect();
            let g: Vec<Vec<f64>> = (0..6).map(|_| rand_vec(&mut rng, 4)).collect();
            let a = agreement_matrix(&[&f, &g], AgreementKind::Cross).unwrap();
            let p = pair_probabilities(&a, tau);
            for i in 0..6 {
                let s: f64 = (0..6).map(|n| p.at(i, n)).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn loss_is_scale_invariant(seed in 0u64..1000, s in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f: Vec<Vec<f64>> = (0..5).map(|_| rand_vec(&mut rng, 4)).collect();
            let g: Vec<Vec<f64>> = (0..5).map(|_| rand_vec(&mut rng, 4)).collect();
            let pairs = context_pairs(5, 1, true, &[false; 5]).unwrap();
            let base = contrastive_loss(&f, &g, &pairs, 0.5, AgreementKind::Full, Reduction::Sum).unwrap();
            let fs: Vec<Vec<f64>> = f.iter().map(|v| v.iter().map(|x| x * s).collect()).collect();
            let gs: Vec<Vec<f64>> = g.iter().map(|v| v.iter().map(|x| x * s).collect()).collect();
            let scaled = contrastive_loss(&fs, &gs, &pairs, 0.5, AgreementKind::Full, Reduction::Sum).unwrap();
            prop_assert!((base - scaled).abs() < 1e-12 * base.abs().max(1.0));
            prop_assert!(base >= 0.0);
        }
    }
}
