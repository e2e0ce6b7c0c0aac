//! Linear feature maps, the stationary weighting `D`, the `D`-weighted
//! projection onto the feature span, and the truncation operator.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mdp::{bellman_opt, sup_distance, sup_norm, Mdp, Policy, QVector, Rng};

const RANK_TOL: f64 = 1e-10;
const LAMBDA_FLOOR: f64 = 1e-12;
/// Proposals allowed per accepted sample in [`approx_error_estimate`].
pub const REJECTION_BUDGET: usize = 1_000_000;

/// The `|S||A| x d` feature matrix `Phi`, one row `phi(s, a)` per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    phi: DMatrix<f64>,
    /// Row-major copy of `phi` for the sampling loops.
    rows: Vec<f64>,
    normalized: bool,
}

impl FeatureMap {
    /// Checks full column rank (smallest singular value above 1e-10).
    pub fn new(phi: DMatrix<f64>) -> Result<Self> {
        let (n, d) = phi.shape();
        if d == 0 || n < d {
            return Err(Error::Rank(format!(
                "a {n}x{d} feature matrix cannot have full column rank"
            )));
        }
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("feature matrix has non-finite entries".into()));
        }
        let sv = phi.clone().svd(false, false).singular_values;
        let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if smallest <= RANK_TOL {
            return Err(Error::Rank(format!(
                "feature columns are linearly dependent (smallest singular value {smallest:e})"
            )));
        }
        let rows: Vec<f64> = phi.transpose().as_slice().to_vec();
        let normalized = max_row_l1(&phi) <= 1.0 + 1e-12;
        Ok(Self {
            phi,
            rows,
            normalized,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidModel("feature rows have unequal lengths".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
    }

    /// Tabular features.
    pub fn identity(n_pairs: usize) -> Self {
        Self::new(DMatrix::identity(n_pairs, n_pairs)).expect("identity has full rank")
    }

    /// Rescales by `1 / max ||phi(s,a)||_1` so that every row has unit
    /// l1-norm at most.
    pub fn normalized(&self) -> Self {
        let scale = max_row_l1(&self.phi);
        let mut out = Self::new(&self.phi / scale).expect("scaling keeps rank");
        out.normalized = true;
        out
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn n_pairs(&self) -> usize {
        self.phi.nrows()
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.rows[i * d..(i + 1) * d]
    }

    /// `phi(i)^T theta`. Every algorithm evaluates features through this one
    /// routine, so equal inputs give bitwise-equal values.
    #[inline]
    pub fn value(&self, i: usize, theta: &[f64]) -> f64 {
        dot(self.row(i), theta)
    }

    /// `Phi theta`.
    pub fn q_values(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.n_pairs()).map(|i| self.value(i, theta)).collect()
    }

    pub(crate) fn check_pairs(&self, n_pairs: usize) -> Result<()> {
        check_len("feature rows", n_pairs, self.n_pairs())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_row_l1(phi: &DMatrix<f64>) -> f64 {
    phi.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// On-disk feature layout: `phi` is a list of rows ordered by pair index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureFile {
    pub d: usize,
    pub phi: Vec<Vec<f64>>,
}

impl From<&FeatureMap> for FeatureFile {
    fn from(fm: &FeatureMap) -> Self {
        Self {
            d: fm.dim(),
            phi: (0..fm.n_pairs()).map(|i| fm.row(i).to_vec()).collect(),
        }
    }
}

impl TryFrom<FeatureFile> for FeatureMap {
    type Error = Error;

    fn try_from(file: FeatureFile) -> Result<Self> {
        if let Some(bad) = file.phi.iter().find(|r| r.len() != file.d) {
            return Err(Error::Dimension {
                what: "feature row",
                expected: file.d,
                found: bad.len(),
            });
        }
        FeatureMap::from_rows(&file.phi)
    }
}

/// Diagonal of `D`: `w(s, a) = mu(s) pi_b(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionWeights(DVector<f64>);

impl StateActionWeights {
    pub fn new(w: DVector<f64>) -> Result<Self> {
        if let Some(i) = w.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::Assumption(format!(
                "state-action pair {i} has zero stationary weight"
            )));
        }
        let total = w.sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}")));
        }
        Ok(Self(w))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `||x||_D = (x^T D x)^{1/2}`.
    pub fn norm(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.0.iter())
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }
}

pub fn weights_from(mu: &DVector<f64>, pi_b: &Policy) -> Result<StateActionWeights> {
    check_len("stationary distribution", pi_b.n_states(), mu.len())?;
    let na = pi_b.n_actions();
    let w = DVector::from_fn(mu.len() * na, |i, _| mu[i / na] * pi_b.prob(i / na, i % na));
    StateActionWeights::new(w)
}

/// `Phi^T D Phi` and its smallest eigenvalue.
pub fn gram_and_lambda_min(
    fm: &FeatureMap,
    w: &StateActionWeights,
) -> Result<(DMatrix<f64>, f64)> {
    let gram = gram(fm, w)?;
    let lambda_min = SymmetricEigen::new(gram.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if lambda_min <= LAMBDA_FLOOR {
        return Err(Error::Rank(format!(
            "Phi^T D Phi is not positive definite (lambda_min = {lambda_min:e})"
        )));
    }
    Ok((gram, lambda_min))
}

fn gram(fm: &FeatureMap, w: &StateActionWeights) -> Result<DMatrix<f64>> {
    fm.check_pairs(w.len())?;
    let weighted = DMatrix::from_fn(fm.n_pairs(), fm.dim(), |i, j| w.0[i] * fm.phi[(i, j)]);
    Ok(fm.phi.transpose() * weighted)
}

/// Cached factorization of `Phi^T D Phi` for repeated projections.
#[derive(Debug, Clone)]
pub struct Projector<'a> {
    fm: &'a FeatureMap,
    weights: &'a StateActionWeights,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> Projector<'a> {
    pub fn new(fm: &'a FeatureMap, weights: &'a StateActionWeights) -> Result<Self> {
        let gram = gram(fm, weights)?;
        let chol = Cholesky::new(gram)
            .ok_or_else(|| Error::Rank("Phi^T D Phi is not positive definite".into()))?;
        Ok(Self { fm, weights, chol })
    }

    /// `(Phi^T D Phi)^{-1} Phi^T D q`.
    pub fn coefficients(&self, q: &[f64]) -> DVector<f64> {
        let dq = DVector::from_fn(q.len(), |i, _| self.weights.0[i] * q[i]);
        self.chol.solve(&(self.fm.phi.transpose() * dq))
    }

    /// `Proj_W(q) = Phi (Phi^T D Phi)^{-1} Phi^T D q`.
    pub fn project(&self, q: &[f64]) -> Vec<f64> {
        self.fm.q_values(self.coefficients(q).as_slice())
    }

    /// Solves `(Phi^T D Phi) x = b`.
    pub fn solve_gram(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn features(&self) -> &FeatureMap {
        self.fm
    }

    pub fn weights(&self) -> &StateActionWeights {
        self.weights
    }
}

pub fn project_w(q: &QVector, fm: &FeatureMap, w: &StateActionWeights) -> Result<QVector> {
    fm.check_pairs(q.len())?;
    let proj = Projector::new(fm, w)?;
    QVector::new(proj.project(q.as_slice()))
}

/// Componentwise clamp to `[-r, r]`.
#[inline]
pub fn truncate_scalar(x: f64, r: f64) -> f64 {
    x.clamp(-r, r)
}

pub fn truncate(x: &[f64], r: f64) -> Vec<f64> {
    x.iter().map(|&v| truncate_scalar(v, r)).collect()
}

/// Weighted `l_p` norm exponents accepted by the projection check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpNorm {
    One,
    Two,
    Inf,
}

impl LpNorm {
    pub const ALL: [LpNorm; 3] = [LpNorm::One, LpNorm::Two, LpNorm::Inf];

    pub fn weighted(self, x: &[f64], nu: &[f64]) -> f64 {
        let terms = x.iter().zip(nu);
        match self {
            LpNorm::One => terms.map(|(v, w)| w * v.abs()).sum(),
            LpNorm::Two => terms.map(|(v, w)| w * v * v).sum::<f64>().sqrt(),
            LpNorm::Inf => terms.fold(0.0, |m, (v, w)| m.max(w * v.abs())),
        }
    }
}

/// Smallest `||x - y|| - ||x - trunc(x)||` over `n_random` uniform draws of
/// `y` in the sup-norm ball `B_r` and over boundary candidates (the sign
/// corner of `x` and `trunc(x)` with one coordinate pushed to each face).
/// A negative value means some `y` beats truncation.
pub fn truncation_projection_margin(
    x: &[f64],
    r: f64,
    weights: &[f64],
    p: LpNorm,
    n_random: usize,
    rng: &mut Rng,
) -> f64 {
    let clipped = truncate(x, r);
    let dist = |y: &[f64]| {
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        p.weighted(&diff, weights)
    };
    let base = dist(&clipped);
    let mut margin = f64::INFINITY;
    let mut consider = |y: &[f64]| margin = margin.min(dist(y) - base);

    let corner: Vec<f64> = x.iter().map(|v| if *v >= 0.0 { r } else { -r }).collect();
    consider(&corner);
    for i in 0..x.len() {
        for face in [-r, r] {
            let mut y = clipped.clone();
            y[i] = face;
            consider(&y);
        }
    }
    let mut y = vec![0.0; x.len()];
    for _ in 0..n_random {
        y.iter_mut().for_each(|v| *v = rng.gen_range(-r..=r));
        consider(&y);
    }
    margin
}

/// True when truncation is at least as close to `x` as every sampled point
/// of `B_r`, up to 1e-12.
pub fn truncation_is_projection_check(
    x: &[f64],
    r: f64,
    weights: &[f64],
    p: LpNorm,
    n_random: usize,
    rng: &mut Rng,
) -> bool {
    truncation_projection_margin(x, r, weights, p, n_random, rng) >= -1e-12
}

/// Sampled lower bound on
/// `sup { ||trunc(Proj_W H(Q)) - H(Q)||_inf : Q in W, ||Q||_inf <= r }`.
///
/// Parameters are drawn uniformly from a box containing
/// `{theta : ||Phi theta||_inf <= r}` (half-widths `r * ||row_j(Phi^+)||_1`)
/// and rejected when outside. `theta = 0` and every admissible entry of
/// `candidates` are always evaluated.
pub fn approx_error_estimate(
    fm: &FeatureMap,
    w: &StateActionWeights,
    mdp: &Mdp,
    r: f64,
    n_samples: usize,
    rng: &mut Rng,
    candidates: &[DVector<f64>],
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    fm.check_pairs(mdp.n_pairs())?;
    let proj = Projector::new(fm, w)?;
    let error_at = |theta: &[f64]| -> Result<f64> {
        let q = QVector::new(fm.q_values(theta))?;
        let h = bellman_opt(mdp, &q)?;
        let projected = truncate(&proj.project(h.as_slice()), r);
        Ok(sup_distance(&projected, h.as_slice()))
    };

    let d = fm.dim();
    let mut best = error_at(&vec![0.0; d])?;
    for c in candidates {
        check_len("candidate parameter", d, c.len())?;
        if sup_norm(&fm.q_values(c.as_slice())) <= r * (1.0 + 1e-12) {
            best = best.max(error_at(c.as_slice())?);
        }
    }

    let pinv = fm
        .phi
        .clone()
        .pseudo_inverse(RANK_TOL)
        .map_err(|e| Error::Rank(e.to_string()))?;
    let half: Vec<f64> = pinv
        .row_iter()
        .map(|row| r * row.iter().map(|x| x.abs()).sum::<f64>())
        .collect();
    let mut theta = vec![0.0; d];
    for _ in 0..n_samples {
        let mut accepted = false;
        for _ in 0..REJECTION_BUDGET {
            for (t, h) in theta.iter_mut().zip(&half) {
                *t = if *h > 0.0 { rng.gen_range(-h..=*h) } else { 0.0 };
            }
            if sup_norm(&fm.q_values(&theta)) <= r {
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::Sampling(REJECTION_BUDGET));
        }
        best = best.max(error_at(&theta)?);
    }
    Ok(best)
}
