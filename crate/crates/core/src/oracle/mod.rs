//! Reference computations that share no code path with the solver or the
//! derivative machinery: the Gaussian closed form, a compensated brute-force
//! fixed point for tiny supports, and finite-difference derivatives.

pub mod dd;

use crate::error::{Error, Result, Unconverged};
use crate::measures::{rescale_measure, sample_gaussian, DiscreteMeasure, SeedSpec};
use crate::potentials::MultiIndex;
use crate::sinkhorn::{Normalization, PotentialPair, SolveReport};
use dd::DoubleDouble;

/// `P = N(0, I_d/2)`, `Q = N(𝟙, I_d/2)` at regularization `eps`.
///
/// The closed form is stated for the squared Euclidean cost `‖x − y‖²`.
/// Samples from [`GaussianPairSpec::sample`] are returned pushed forward by
/// `x ↦ √2·x`, under which the solver's `½‖x − y‖²` equals that cost, so
/// [`gaussian_cost`] is the exact population value for them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPairSpec {
    pub d: usize,
    pub eps: f64,
}

impl GaussianPairSpec {
    pub fn new(d: usize, eps: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !(eps > 0.0) {
            return Err(Error::NonPositiveEps(eps));
        }
        Ok(Self { d, eps })
    }

    /// Independent `n`- and `m`-samples of `P` and `Q`, in solver coordinates.
    pub fn sample(&self, n: usize, m: usize, seed: SeedSpec) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
        let p = sample_gaussian(&vec![0.0; self.d], 0.5, n, seed.lane(0))?;
        let q = sample_gaussian(&vec![1.0; self.d], 0.5, m, seed.lane(1))?;
        Ok((rescale_measure(&p, 0.5)?, rescale_measure(&q, 0.5)?))
    }
}

/// `2d − (ε/2)(d√(1+4/ε²) − d·log(1+√(1+4/ε²)) + d·log 2 − d)`.
pub fn gaussian_cost(spec: &GaussianPairSpec) -> f64 {
    let d = spec.d as f64;
    let eps = spec.eps;
    let root = (1.0 + 4.0 / (eps * eps)).sqrt();
    2.0 * d - 0.5 * eps * (d * root - d * (1.0 + root).ln() + d * std::f64::consts::LN_2 - d)
}

/// Largest `n·m` accepted by [`brute_force_potentials`].
pub const BRUTE_FORCE_MAX_ENTRIES: usize = 100;
pub const BRUTE_FORCE_TOL: f64 = 1e-14;
pub const BRUTE_FORCE_MAX_ITER: usize = 1_000_000;

/// Streaming log-sum-exp with a running maximum and Neumaier-compensated sum.
fn online_logsumexp(values: impl Iterator<Item = f64>) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let add = |sum: &mut f64, comp: &mut f64, t: f64| {
        let s = *sum + t;
        *comp += if sum.abs() >= t.abs() { (*sum - s) + t } else { (t - s) + *sum };
        *sum = s;
    };
    for v in values {
        if v == f64::NEG_INFINITY {
            continue;
        }
        if v > max {
            let scale = (max - v).exp();
            sum *= scale;
            comp *= scale;
            max = v;
            add(&mut sum, &mut comp, 1.0);
        } else {
            add(&mut sum, &mut comp, (v - max).exp());
        }
    }
    max + (sum + comp).ln()
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |acc, (a, b)| acc + (a - b).powi(2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceSolution {
    pub pair: PotentialPair,
    /// Largest potential change of the last sweep, divided by `ε`.
    pub residual: f64,
    pub iterations: usize,
}

/// Fixed-point iteration of the optimality conditions to near machine
/// precision, for tiny supports. Returns the `Equal`-normalized pair.
pub fn brute_force_solve(p: &DiscreteMeasure, q: &DiscreteMeasure, eps: f64) -> Result<BruteForceSolution> {
    if p.len() * q.len() > BRUTE_FORCE_MAX_ENTRIES {
        return Err(Error::invalid(format!("brute force needs n·m ≤ {BRUTE_FORCE_MAX_ENTRIES}")));
    }
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: q.dim() });
    }
    if !(eps > 0.0) {
        return Err(Error::NonPositiveEps(eps));
    }
    let (n, m) = (p.len(), q.len());
    let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|j| 0.5 * sq_dist(p.point(i), q.point(j))).collect()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < BRUTE_FORCE_MAX_ITER && residual > BRUTE_FORCE_TOL {
        iterations += 1;
        let mut change: f64 = 0.0;
        for i in 0..n {
            let lse = online_logsumexp((0..m).map(|j| q.weights()[j].ln() + (g[j] - cost[i][j]) / eps));
            let next = -eps * lse;
            change = change.max((next - f[i]).abs());
            f[i] = next;
        }
        for j in 0..m {
            let lse = online_logsumexp((0..n).map(|i| p.weights()[i].ln() + (f[i] - cost[i][j]) / eps));
            let next = -eps * lse;
            change = change.max((next - g[j]).abs());
            g[j] = next;
        }
        // the first sweep's f change is measured against the zero start, not a fixed point
        residual = if iterations == 1 { f64::INFINITY } else { change / eps };
    }
    let mean_f: f64 = f.iter().zip(p.weights()).map(|(v, w)| v * w).sum();
    let mean_g: f64 = g.iter().zip(q.weights()).map(|(v, w)| v * w).sum();
    let shift = 0.5 * (mean_g - mean_f);
    let pair = PotentialPair {
        f: f.iter().map(|v| v + shift).collect(),
        g: g.iter().map(|v| v - shift).collect(),
        eps,
        normalization: Normalization::Equal,
    };
    if residual > BRUTE_FORCE_TOL {
        let report = SolveReport { iterations, final_residual: residual, dual_value: f64::NAN, converged: false };
        return Err(Error::NotConverged(Box::new(Unconverged { pair, report })));
    }
    Ok(BruteForceSolution { pair, residual, iterations })
}

pub fn brute_force_potentials(p: &DiscreteMeasure, q: &DiscreteMeasure, eps: f64) -> Result<PotentialPair> {
    brute_force_solve(p, q, eps).map(|s| s.pair)
}

/// Central-difference stencil for `∂^e/∂t^e` as `(offset in steps, weight)`,
/// weights already including the `1/2` factors; divide by `h^e`.
fn stencil_1d(e: usize) -> &'static [(i32, f64)] {
    match e {
        0 => &[(0, 1.0)],
        1 => &[(1, 0.5), (-1, -0.5)],
        2 => &[(1, 1.0), (0, -2.0), (-1, 1.0)],
        3 => &[(2, 0.5), (1, -1.0), (-1, 1.0), (-2, -0.5)],
        _ => unreachable!("orders above 3 are rejected earlier"),
    }
}

/// Tensor-product stencil for `D^α`: list of (per-axis step offsets, weight).
fn stencil(alpha: &MultiIndex) -> Result<Vec<(Vec<i32>, f64)>> {
    let order = alpha.order();
    if order > 3 {
        return Err(Error::UnsupportedOrder { order, max: 3 });
    }
    let mut nodes: Vec<(Vec<i32>, f64)> = vec![(Vec::new(), 1.0)];
    for &e in alpha.exponents() {
        nodes = nodes
            .into_iter()
            .flat_map(|(offs, w)| {
                stencil_1d(e).iter().map(move |&(o, c)| {
                    let mut next = offs.clone();
                    next.push(o);
                    (next, w * c)
                })
            })
            .collect();
    }
    Ok(nodes)
}

/// Nested central differences for `D^α field(x)` at step `h`, in `f64`.
pub fn finite_difference(field: impl Fn(&[f64]) -> f64, x: &[f64], alpha: &MultiIndex, h: f64) -> Result<f64> {
    if alpha.dim() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: alpha.dim() });
    }
    if !(h > 0.0) {
        return Err(Error::OutOfRange { name: "h", value: h });
    }
    let mut acc = 0.0;
    let mut point = x.to_vec();
    for (offs, w) in stencil(alpha)? {
        for (k, o) in offs.iter().enumerate() {
            point[k] = x[k] + *o as f64 * h;
        }
        acc += w * field(&point);
    }
    Ok(acc / h.powi(alpha.order() as i32))
}

/// As [`finite_difference`], but stencil points and the field live in
/// double-double arithmetic, so cancellation in high-order differences
/// stays far below the `O(h²)` truncation error.
pub fn finite_difference_dd(
    field: impl Fn(&[DoubleDouble]) -> DoubleDouble,
    x: &[f64],
    alpha: &MultiIndex,
    h: f64,
) -> Result<f64> {
    if alpha.dim() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: alpha.dim() });
    }
    if !(h > 0.0) {
        return Err(Error::OutOfRange { name: "h", value: h });
    }
    let mut acc = DoubleDouble::ZERO;
    let mut point = vec![DoubleDouble::ZERO; x.len()];
    for (offs, w) in stencil(alpha)? {
        for (k, o) in offs.iter().enumerate() {
            // o·h is exact for |o| ≤ 2, and the sum is exact in double-double
            point[k] = DoubleDouble::sum_of(x[k], *o as f64 * h);
        }
        acc = acc + DoubleDouble::from(w) * field(&point);
    }
    let hd = DoubleDouble::from(h);
    let mut denom = DoubleDouble::ONE;
    for _ in 0..alpha.order() {
        denom = denom * hd;
    }
    Ok((acc / denom).to_f64())
}

/// Extension `−ε log Σ_j w_j exp((h_j − ½‖x − y_j‖²)/ε)` by direct summation
/// in `f64`, without max shifting.
pub fn naive_extension(values: &[f64], opposite: &DiscreteMeasure, eps: f64, x: &[f64]) -> f64 {
    let s: f64 = opposite.iter().zip(values).map(|((y, w), h)| w * ((h - 0.5 * sq_dist(x, y)) / eps).exp()).sum();
    -eps * s.ln()
}

/// [`naive_extension`] in double-double arithmetic.
pub fn naive_extension_dd(values: &[f64], opposite: &DiscreteMeasure, eps: f64, x: &[DoubleDouble]) -> DoubleDouble {
    let half = DoubleDouble::from(0.5);
    let eps_dd = DoubleDouble::from(eps);
    let mut s = DoubleDouble::ZERO;
    for ((y, w), h) in opposite.iter().zip(values) {
        let mut sq = DoubleDouble::ZERO;
        for (xk, yk) in x.iter().zip(y) {
            let diff = *xk - DoubleDouble::from(*yk);
            sq = sq + diff * diff;
        }
        s = s + DoubleDouble::from(w) * ((DoubleDouble::from(*h) - half * sq) / eps_dd).exp();
    }
    -(eps_dd * s.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_closed_form_values() {
        // √2 = 1.4142136, log(1+√2) = 0.8813736:
        // 4 − (2·1.4142136 − 2·0.8813736 + 2·0.6931472 − 2) = 3.548026
        let two = gaussian_cost(&GaussianPairSpec::new(2, 2.0).unwrap());
        assert!((two - 3.548026).abs() < 1e-6, "{two}");
        let one = gaussian_cost(&GaussianPairSpec::new(1, 2.0).unwrap());
        assert!((one - 1.774013).abs() < 1e-6);
        for eps in [0.5, 1.0, 5.0] {
            let a = gaussian_cost(&GaussianPairSpec::new(3, eps).unwrap());
            let b = gaussian_cost(&GaussianPairSpec::new(6, eps).unwrap());
            assert!((b - 2.0 * a).abs() <= 1e-14 * b.abs());
        }
    }

    #[test]
    fn gaussian_cost_increases_in_eps_on_grid() {
        let grid = [0.5, 1.0, 2.0, 5.0, 10.0];
        for d in [1, 2, 10] {
            for w in grid.windows(2) {
                let a = gaussian_cost(&GaussianPairSpec::new(d, w[0]).unwrap());
                let b = gaussian_cost(&GaussianPairSpec::new(d, w[1]).unwrap());
                assert!(a < b, "d={d}: S({}) = {a} >= S({}) = {b}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn gaussian_samples_are_scaled() {
        let spec = GaussianPairSpec::new(2, 2.0).unwrap();
        let (p, q) = spec.sample(4000, 4000, SeedSpec::new(3, 0)).unwrap();
        let mean_q: f64 = q.points().iter().sum::<f64>() / 8000.0;
        assert!((mean_q - 2f64.sqrt()).abs() < 0.05, "{mean_q}");
        let var_p: f64 = p.points().iter().map(|x| x * x).sum::<f64>() / 8000.0;
        assert!((var_p - 1.0).abs() < 0.05, "{var_p}");
    }

    #[test]
    fn brute_force_single_atoms() {
        let (p, q) = (DiscreteMeasure::dirac(&[0.0]).unwrap(), DiscreteMeasure::dirac(&[3.0]).unwrap());
        let pair = brute_force_potentials(&p, &q, 1.0).unwrap();
        assert_eq!((pair.f[0], pair.g[0]), (2.25, 2.25));
    }

    #[test]
    fn brute_force_reaches_machine_precision() {
        let u = DiscreteMeasure::uniform(vec![0.0, 1.0], 1).unwrap();
        let sol = brute_force_solve(&u, &u, 1.0).unwrap();
        assert!(sol.residual <= 1e-14);
        let big = DiscreteMeasure::uniform(vec![0.0; 11], 1).unwrap();
        assert!(brute_force_solve(&big, &big, 1.0).is_err());
    }

    #[test]
    fn finite_difference_on_polynomials() {
        let half_sq = |x: &[f64]| 0.5 * x[0] * x[0];
        for x in [-3.0, 0.0, 0.7, 12.0] {
            let v = finite_difference(half_sq, &[x], &MultiIndex::new(vec![2]), 1e-4).unwrap();
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
        let c = finite_difference(|_| 4.2, &[0.3, 0.1], &MultiIndex::new(vec![1, 1]), 1e-4).unwrap();
        assert!(c.abs() < 1e-8);
        let quad = |x: &[f64]| 3.0 * x[0] * x[1] - x[1] * x[1] + 2.0 * x[0];
        let mixed = finite_difference(quad, &[0.4, -1.1], &MultiIndex::new(vec![1, 1]), 1e-4).unwrap();
        assert!((mixed - 3.0).abs() < 1e-6);
        let grad = finite_difference(quad, &[0.4, -1.1], &MultiIndex::new(vec![1, 0]), 1e-4).unwrap();
        assert!((grad - (3.0 * -1.1 + 2.0)).abs() < 1e-6);
        assert!(matches!(
            finite_difference(half_sq, &[0.0], &MultiIndex::new(vec![4]), 1e-4),
            Err(Error::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn dd_difference_of_cubic_is_exact() {
        let cubic = |x: &[DoubleDouble]| x[0] * x[0] * x[0] * DoubleDouble::from(1.0 / 6.0);
        let v = finite_difference_dd(cubic, &[0.37], &MultiIndex::new(vec![3]), 1e-4).unwrap();
        assert!((v - 1.0 / 6.0 * 6.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn naive_extensions_agree() {
        let q = DiscreteMeasure::new(vec![0.1, 0.5, 0.9], 1, vec![0.2, 0.5, 0.3]).unwrap();
        let g = [0.3, -0.1, 0.2];
        let a = naive_extension(&g, &q, 1.0, &[0.4]);
        let b = naive_extension_dd(&g, &q, 1.0, &[DoubleDouble::from(0.4)]).to_f64();
        assert!((a - b).abs() < 1e-15);
    }
}
