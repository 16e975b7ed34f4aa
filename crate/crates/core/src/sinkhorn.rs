//! Log-domain Sinkhorn solver for the entropic dual with cost `½‖x − y‖²`.
//!
//! Potentials satisfy, at optimality,
//!
//! ```text
//! f_i = −ε log Σ_j b_j exp((g_j − c_ij)/ε)
//! g_j = −ε log Σ_i a_i exp((f_i − c_ij)/ε)
//! ```
//!
//! and the coupling is `π_ij = a_i b_j exp((f_i + g_j − c_ij)/ε)`.

use crate::error::{Error, Result, Unconverged};
use crate::measures::DiscreteMeasure;

/// Pointwise ground cost `½‖x − y‖²`.
#[inline]
pub fn ground_cost(x: &[f64], y: &[f64]) -> f64 {
    0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub eps: f64,
    /// Target for the sup-norm of the log marginal ratio.
    pub tol: f64,
    pub max_iter: usize,
    /// Above this many `n·m` entries the cost matrix is recomputed on the fly.
    pub dense_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { eps: 1.0, tol: 1e-9, max_iter: 100_000, dense_limit: 1 << 24 }
    }
}

impl SolverConfig {
    pub fn new(eps: f64) -> Self {
        Self { eps, ..Self::default() }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::NonPositiveEps(self.eps));
        }
        if !(self.tol > 0.0) {
            return Err(Error::OutOfRange { name: "tol", value: self.tol });
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Constant-shift convention pinning a potential pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `⟨f, a⟩ = ⟨g, b⟩`.
    Equal,
    /// `⟨g, b⟩ = 0`.
    GZero,
    Raw,
}

/// Dual potentials on the supports of `P` (`f`) and `Q` (`g`).
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialPair {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub eps: f64,
    pub normalization: Normalization,
}

impl PotentialPair {
    /// `(f + c, g − c)`; tagged [`Normalization::Raw`].
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            f: self.f.iter().map(|v| v + c).collect(),
            g: self.g.iter().map(|v| v - c).collect(),
            eps: self.eps,
            normalization: Normalization::Raw,
        }
    }

    /// Potentials of the transposed problem `(Q, P)`.
    pub fn swapped(&self) -> Self {
        Self { f: self.g.clone(), g: self.f.clone(), eps: self.eps, normalization: self.normalization }
    }

    fn check_dims(&self, p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<()> {
        check_measures(p, q)?;
        if self.f.len() != p.len() {
            return Err(Error::DimensionMismatch { expected: p.len(), found: self.f.len() });
        }
        if self.g.len() != q.len() {
            return Err(Error::DimensionMismatch { expected: q.len(), found: self.g.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl TransportPlan {
    pub fn from_entries(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: entries.len() });
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.entries.chunks_exact(self.cols) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut entries = vec![0.0; self.entries.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                entries[j * self.rows + i] = self.entries[i * self.cols + j];
            }
        }
        Self { rows: self.cols, cols: self.rows, entries }
    }

    /// Sup-norm deviation of row and column sums from the marginals.
    pub fn marginal_error(&self, p: &DiscreteMeasure, q: &DiscreteMeasure) -> f64 {
        let r = self.row_sums().iter().zip(p.weights()).map(|(s, a)| (s - a).abs()).fold(0.0, f64::max);
        let c = self.col_sums().iter().zip(q.weights()).map(|(s, b)| (s - b).abs()).fold(0.0, f64::max);
        r.max(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub dual_value: f64,
    pub converged: bool,
}

fn check_measures(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: q.dim() });
    }
    Ok(())
}

/// Cost entries, either materialized or recomputed per access.
enum CostMatrix<'a> {
    Dense { cols: usize, data: Vec<f64> },
    Lazy { p: &'a DiscreteMeasure, q: &'a DiscreteMeasure },
}

impl<'a> CostMatrix<'a> {
    fn new(p: &'a DiscreteMeasure, q: &'a DiscreteMeasure, dense_limit: usize) -> Self {
        let (n, m) = (p.len(), q.len());
        if n.saturating_mul(m) <= dense_limit {
            let mut data = Vec::with_capacity(n * m);
            for i in 0..n {
                let x = p.point(i);
                data.extend((0..m).map(|j| ground_cost(x, q.point(j))));
            }
            CostMatrix::Dense { cols: m, data }
        } else {
            CostMatrix::Lazy { p, q }
        }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            CostMatrix::Dense { cols, data } => data[i * cols + j],
            CostMatrix::Lazy { p, q } => ground_cost(p.point(i), q.point(j)),
        }
    }
}

/// `out_i = −ε log Σ_j exp(log_w_j + (pot_j − c_ij)/ε)`, row-wise.
fn update_rows(cost: &CostMatrix, pot: &[f64], log_w: &[f64], eps: f64, out: &mut [f64]) {
    let shifted: Vec<f64> = pot.iter().zip(log_w).map(|(p, lw)| p / eps + lw).collect();
    for (i, o) in out.iter_mut().enumerate() {
        let mut max = f64::NEG_INFINITY;
        for (j, s) in shifted.iter().enumerate() {
            max = max.max(s - cost.get(i, j) / eps);
        }
        let mut sum = 0.0;
        for (j, s) in shifted.iter().enumerate() {
            sum += (s - cost.get(i, j) / eps - max).exp();
        }
        *o = -eps * (max + sum.ln());
    }
}

/// Column-wise counterpart of [`update_rows`], traversing the matrix in row order.
fn update_cols(cost: &CostMatrix, pot: &[f64], log_w: &[f64], eps: f64, out: &mut [f64]) {
    let shifted: Vec<f64> = pot.iter().zip(log_w).map(|(p, lw)| p / eps + lw).collect();
    let m = out.len();
    let mut max = vec![f64::NEG_INFINITY; m];
    for (i, s) in shifted.iter().enumerate() {
        for (j, mx) in max.iter_mut().enumerate() {
            *mx = mx.max(s - cost.get(i, j) / eps);
        }
    }
    let mut sum = vec![0.0; m];
    for (i, s) in shifted.iter().enumerate() {
        for j in 0..m {
            sum[j] += (s - cost.get(i, j) / eps - max[j]).exp();
        }
    }
    for j in 0..m {
        out[j] = -eps * (max[j] + sum[j].ln());
    }
}

fn log_weights(m: &DiscreteMeasure) -> Vec<f64> {
    m.weights().iter().map(|w| w.ln()).collect()
}

/// Solves the entropic dual between `p` and `q`.
///
/// Starting from `g = 0`, each sweep updates `f` then `g`. The residual of a
/// sweep is the sup-norm of the log column-marginal ratio just before the `g`
/// update, i.e. `max_j |g_new_j − g_j| / ε`. The returned pair is shifted to
/// [`Normalization::Equal`].
pub fn solve(p: &DiscreteMeasure, q: &DiscreteMeasure, cfg: &SolverConfig) -> Result<(PotentialPair, SolveReport)> {
    cfg.validate()?;
    check_measures(p, q)?;
    let eps = cfg.eps;
    let cost = CostMatrix::new(p, q, cfg.dense_limit);
    let (log_a, log_b) = (log_weights(p), log_weights(q));

    let mut f = vec![0.0; p.len()];
    let mut g = vec![0.0; q.len()];
    let mut g_next = vec![0.0; q.len()];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        update_rows(&cost, &g, &log_b, eps, &mut f);
        update_cols(&cost, &f, &log_a, eps, &mut g_next);
        residual = g.iter().zip(&g_next).map(|(o, n)| (o - n).abs()).fold(0.0, f64::max) / eps;
        std::mem::swap(&mut g, &mut g_next);
        if residual <= cfg.tol {
            break;
        }
    }

    let raw = PotentialPair { f, g, eps, normalization: Normalization::Raw };
    let pair = normalize(&raw, p, q, Normalization::Equal);
    let dual_value = dual_with(&cost, p, q, &pair);
    let converged = residual <= cfg.tol;
    let report = SolveReport { iterations, final_residual: residual, dual_value, converged };
    if converged {
        Ok((pair, report))
    } else {
        Err(Error::NotConverged(Box::new(Unconverged { pair, report })))
    }
}

fn dual_with(cost: &CostMatrix, p: &DiscreteMeasure, q: &DiscreteMeasure, pair: &PotentialPair) -> f64 {
    let eps = pair.eps;
    let (a, b) = (p.weights(), q.weights());
    let mut mass = 0.0;
    for (i, (fi, ai)) in pair.f.iter().zip(a).enumerate() {
        let row: f64 =
            pair.g.iter().zip(b).enumerate().map(|(j, (gj, bj))| bj * ((fi + gj - cost.get(i, j)) / eps).exp()).sum();
        mass += ai * row;
    }
    p.integrate(&pair.f) + q.integrate(&pair.g) - eps * mass + eps
}

/// `⟨f,a⟩ + ⟨g,b⟩ − ε Σ_ij a_i b_j exp((f_i + g_j − c_ij)/ε) + ε`.
pub fn dual_objective(p: &DiscreteMeasure, q: &DiscreteMeasure, pair: &PotentialPair) -> Result<f64> {
    pair.check_dims(p, q)?;
    let cost = CostMatrix::Lazy { p, q };
    Ok(dual_with(&cost, p, q, pair))
}

/// Sup-norm over both marginals of `|log(marginal of π / target)|`.
pub fn marginal_residual(p: &DiscreteMeasure, q: &DiscreteMeasure, pair: &PotentialPair) -> Result<f64> {
    pair.check_dims(p, q)?;
    let cost = CostMatrix::Lazy { p, q };
    let eps = pair.eps;
    let mut f_star = vec![0.0; p.len()];
    let mut g_star = vec![0.0; q.len()];
    update_rows(&cost, &pair.g, &log_weights(q), eps, &mut f_star);
    update_cols(&cost, &pair.f, &log_weights(p), eps, &mut g_star);
    let rows = pair.f.iter().zip(&f_star).map(|(f, s)| (f - s).abs()).fold(0.0, f64::max);
    let cols = pair.g.iter().zip(&g_star).map(|(g, s)| (g - s).abs()).fold(0.0, f64::max);
    Ok(rows.max(cols) / eps)
}

/// `S_ε(P, Q) = ⟨f, a⟩ + ⟨g, b⟩` for an optimal pair.
///
/// Fails with [`Error::NotOptimal`] when the marginal residual exceeds `10·tol`.
pub fn cost(p: &DiscreteMeasure, q: &DiscreteMeasure, pair: &PotentialPair, tol: f64) -> Result<f64> {
    let residual = marginal_residual(p, q, pair)?;
    let limit = 10.0 * tol;
    if !(residual <= limit) {
        return Err(Error::NotOptimal { residual, limit });
    }
    Ok(p.integrate(&pair.f) + q.integrate(&pair.g))
}

/// Solves and returns `S_ε(P, Q)` together with the pair.
pub fn entropic_cost(p: &DiscreteMeasure, q: &DiscreteMeasure, cfg: &SolverConfig) -> Result<(f64, PotentialPair)> {
    let (pair, _) = solve(p, q, cfg)?;
    let value = p.integrate(&pair.f) + q.integrate(&pair.g);
    Ok((value, pair))
}

pub fn plan(p: &DiscreteMeasure, q: &DiscreteMeasure, pair: &PotentialPair) -> Result<TransportPlan> {
    pair.check_dims(p, q)?;
    let eps = pair.eps;
    let mut entries = Vec::with_capacity(p.len() * q.len());
    for (i, (fi, ai)) in pair.f.iter().zip(p.weights()).enumerate() {
        let x = p.point(i);
        for (j, (gj, bj)) in pair.g.iter().zip(q.weights()).enumerate() {
            entries.push(ai * bj * ((fi + gj - ground_cost(x, q.point(j))) / eps).exp());
        }
    }
    TransportPlan::from_entries(p.len(), q.len(), entries)
}

/// `Σ π_ij c_ij + ε Σ π_ij log(π_ij / (a_i b_j))`, with `0 log 0 = 0`.
pub fn primal_cost(p: &DiscreteMeasure, q: &DiscreteMeasure, plan: &TransportPlan, eps: f64) -> Result<f64> {
    check_measures(p, q)?;
    if plan.rows != p.len() || plan.cols != q.len() {
        return Err(Error::DimensionMismatch { expected: p.len() * q.len(), found: plan.entries.len() });
    }
    if !(eps > 0.0) {
        return Err(Error::NonPositiveEps(eps));
    }
    let mut transport = 0.0;
    let mut entropy = 0.0;
    for i in 0..plan.rows {
        let (x, ai) = (p.point(i), p.weights()[i]);
        for j in 0..plan.cols {
            let pij = plan.get(i, j);
            if pij < 0.0 {
                return Err(Error::NegativeEntry { row: i, col: j });
            }
            if pij == 0.0 {
                continue;
            }
            transport += pij * ground_cost(x, q.point(j));
            entropy += pij * (pij / (ai * q.weights()[j])).ln();
        }
    }
    Ok(transport + eps * entropy)
}

/// Shifts `(f + c, g − c)` so that `convention` holds.
pub fn normalize(
    pair: &PotentialPair,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    convention: Normalization,
) -> PotentialPair {
    let mean_f = p.integrate(&pair.f);
    let mean_g = q.integrate(&pair.g);
    let c = match convention {
        Normalization::Equal => 0.5 * (mean_g - mean_f),
        Normalization::GZero => mean_g,
        Normalization::Raw => 0.0,
    };
    let mut out = pair.shifted(c);
    out.normalization = convention;
    out
}
