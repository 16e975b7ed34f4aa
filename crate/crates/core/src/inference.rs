//! Plug-in variance estimates, normal quantiles, confidence intervals for
//! `S_ε`, and the Sinkhorn divergence.

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::sinkhorn::{entropic_cost, PotentialPair, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceKind {
    OneSample,
    TwoSample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub value: f64,
    pub kind: VarianceKind,
    pub n: usize,
    /// Zero for [`VarianceKind::OneSample`].
    pub m: usize,
}

impl VarianceEstimate {
    /// Standard error of the centre: `√(σ²/n)` or `√(σ²(n+m)/(nm))`.
    pub fn standard_error(&self) -> f64 {
        match self.kind {
            VarianceKind::OneSample => (self.value / self.n as f64).sqrt(),
            VarianceKind::TwoSample => {
                let (n, m) = (self.n as f64, self.m as f64);
                (self.value * (n + m) / (n * m)).sqrt()
            }
        }
    }
}

/// Weighted variance of per-atom values, computed about the weighted mean.
fn weighted_variance(values: &[f64], weights: &[f64]) -> f64 {
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    let var: f64 = values.iter().zip(weights).map(|(v, w)| w * (v - mean) * (v - mean)).sum();
    var.max(0.0)
}

/// `Var_{P_n}(f)` for the potential of the empirical problem.
pub fn variance_one_sample(p_n: &DiscreteMeasure, pair: &PotentialPair) -> Result<VarianceEstimate> {
    if pair.f.len() != p_n.len() {
        return Err(Error::DimensionMismatch { expected: p_n.len(), found: pair.f.len() });
    }
    Ok(VarianceEstimate {
        value: weighted_variance(&pair.f, p_n.weights()),
        kind: VarianceKind::OneSample,
        n: p_n.len(),
        m: 0,
    })
}

/// `m/(n+m)·Var_{P_n}(f) + n/(n+m)·Var_{Q_m}(g)`.
pub fn variance_two_sample(
    p_n: &DiscreteMeasure,
    q_m: &DiscreteMeasure,
    pair: &PotentialPair,
) -> Result<VarianceEstimate> {
    if pair.f.len() != p_n.len() {
        return Err(Error::DimensionMismatch { expected: p_n.len(), found: pair.f.len() });
    }
    if pair.g.len() != q_m.len() {
        return Err(Error::DimensionMismatch { expected: q_m.len(), found: pair.g.len() });
    }
    let (n, m) = (p_n.len(), q_m.len());
    let total = (n + m) as f64;
    let value = m as f64 / total * weighted_variance(&pair.f, p_n.weights())
        + n as f64 / total * weighted_variance(&pair.g, q_m.weights());
    Ok(VarianceEstimate { value, kind: VarianceKind::TwoSample, n, m })
}

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// `erfc(x)` for `x ≥ 0`: positive-term series below 3, continued fraction above.
fn erfc_nonneg(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 3.0 {
        // erf(x) = (2/√π) x e^{−x²} Σ_k (2x²)^k / (1·3·…·(2k+1))
        let two_x2 = 2.0 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 0.0;
        while term > 1e-17 * sum {
            k += 1.0;
            term *= two_x2 / (2.0 * k + 1.0);
            sum += term;
        }
        1.0 - FRAC_2_SQRT_PI * x * (-x * x).exp() * sum
    } else {
        // erfc(x) = e^{−x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))), modified Lentz
        let tiny = 1e-300;
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for k in 1..500 {
            let a = 0.5 * k as f64;
            d = x + a * d;
            d = if d.abs() < tiny { tiny } else { d };
            c = x + a / c;
            c = if c.abs() < tiny { tiny } else { c };
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        0.5 * FRAC_2_SQRT_PI * (-x * x).exp() / f
    }
}

/// Standard normal CDF `Φ(z)`, accurate in relative terms in the lower tail.
pub fn normal_cdf(z: f64) -> f64 {
    let x = z.abs() * std::f64::consts::FRAC_1_SQRT_2;
    let tail = 0.5 * erfc_nonneg(x);
    if z < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// `z_β = Φ^{-1}(β)` by bisection on [`normal_cdf`].
pub fn normal_quantile(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::OutOfRange { name: "beta", value: beta });
    }
    if beta == 0.5 {
        return Ok(0.0);
    }
    if beta > 0.5 {
        return Ok(-lower_quantile(1.0 - beta));
    }
    Ok(lower_quantile(beta))
}

fn lower_quantile(beta: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0_f64, 0.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-13 {
            break;
        }
        if normal_cdf(mid) < beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub center: f64,
    pub half_width: f64,
    /// Nominal coverage `1 − α`.
    pub level: f64,
    pub variance: VarianceEstimate,
}

impl ConfidenceInterval {
    /// `center ± z_{1−α/2} · standard_error(variance)`.
    pub fn new(center: f64, variance: VarianceEstimate, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::OutOfRange { name: "alpha", value: alpha });
        }
        let z = normal_quantile(1.0 - alpha / 2.0)?;
        Ok(Self { center, half_width: z * variance.standard_error(), level: 1.0 - alpha, variance })
    }

    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower() <= value && value <= self.upper()
    }
}

/// Interval for `S_ε(P, Q)` from a sample of `P` and the population `Q`.
pub fn ci_one_sample(
    p_n: &DiscreteMeasure,
    q: &DiscreteMeasure,
    cfg: &SolverConfig,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    let (center, pair) = entropic_cost(p_n, q, cfg)?;
    ConfidenceInterval::new(center, variance_one_sample(p_n, &pair)?, alpha)
}

/// Interval for `S_ε(P, Q)` from independent samples of both measures.
pub fn ci_two_sample(
    p_n: &DiscreteMeasure,
    q_m: &DiscreteMeasure,
    cfg: &SolverConfig,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    let (center, pair) = entropic_cost(p_n, q_m, cfg)?;
    ConfidenceInterval::new(center, variance_two_sample(p_n, q_m, &pair)?, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceValue {
    pub value: f64,
    pub eps: f64,
    /// `(S(P,Q), S(P,P), S(Q,Q))`.
    pub parts: (f64, f64, f64),
}

/// `D_ε(P, Q) = S_ε(P,Q) − ½(S_ε(P,P) + S_ε(Q,Q))`, all three with `cfg`.
pub fn sinkhorn_divergence(p: &DiscreteMeasure, q: &DiscreteMeasure, cfg: &SolverConfig) -> Result<DivergenceValue> {
    let (pq, (pp, qq)) = rayon::join(
        || entropic_cost(p, q, cfg),
        || rayon::join(|| entropic_cost(p, p, cfg), || entropic_cost(q, q, cfg)),
    );
    let (s_pq, s_pp, s_qq) = (pq?.0, pp?.0, qq?.0);
    Ok(DivergenceValue { value: s_pq - 0.5 * (s_pp + s_qq), eps: cfg.eps, parts: (s_pq, s_pp, s_qq) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sinkhorn::{solve, Normalization};

    fn pair(f: Vec<f64>, g: Vec<f64>) -> PotentialPair {
        PotentialPair { f, g, eps: 1.0, normalization: Normalization::Raw }
    }

    #[test]
    fn one_sample_variance_examples() {
        let m = DiscreteMeasure::uniform(vec![0.0, 1.0], 1).unwrap();
        let v = variance_one_sample(&m, &pair(vec![3.0, 3.0], vec![0.0])).unwrap();
        assert_eq!(v.value, 0.0);
        let v = variance_one_sample(&m, &pair(vec![0.0, 1.0], vec![0.0])).unwrap();
        assert_eq!(v.value, 0.25);
        assert_eq!((v.n, v.m, v.kind), (2, 0, VarianceKind::OneSample));
        assert!(variance_one_sample(&m, &pair(vec![0.0], vec![0.0])).is_err());
    }

    #[test]
    fn two_sample_variance_examples() {
        let m = DiscreteMeasure::uniform(vec![0.0, 1.0], 1).unwrap();
        let v = variance_two_sample(&m, &m, &pair(vec![0.0, 1.0], vec![0.0, 3.0])).unwrap();
        assert_eq!(v.value, 1.25);
        let v = variance_two_sample(&m, &m, &pair(vec![2.0, 2.0], vec![-1.0, -1.0])).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn exact_potential_variance() {
        let p = DiscreteMeasure::new(vec![0.0, 0.5, 1.0], 1, vec![0.2, 0.5, 0.3]).unwrap();
        let q = DiscreteMeasure::uniform(vec![0.2, 0.9], 1).unwrap();
        let (pr, _) = solve(&p, &q, &SolverConfig::new(1.0).with_tol(1e-13)).unwrap();
        let mean = 0.2 * pr.f[0] + 0.5 * pr.f[1] + 0.3 * pr.f[2];
        let direct = 0.2 * pr.f[0].powi(2) + 0.5 * pr.f[1].powi(2) + 0.3 * pr.f[2].powi(2) - mean * mean;
        let v = variance_one_sample(&p, &pr).unwrap();
        assert!((v.value - direct).abs() < 1e-10);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.975).unwrap() - 1.959964).abs() < 1e-6);
        for b in [1e-12, 1e-6, 0.01, 0.1, 0.3, 0.49] {
            // both b and 1 − b exactly representable
            let b = 1.0 - (1.0 - b);
            assert_eq!(normal_quantile(b).unwrap(), -normal_quantile(1.0 - b).unwrap());
        }
        assert!(matches!(normal_quantile(0.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(normal_quantile(1.0), Err(Error::OutOfRange { .. })));
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_matches_independent_reference() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let reference = Normal::new(0.0, 1.0).unwrap();
        for k in 1..1000 {
            let b = k as f64 / 1000.0;
            let z = normal_quantile(b).unwrap();
            // invert the reference CDF near z with Newton steps for a precise target
            let mut r = reference.inverse_cdf(b);
            for _ in 0..3 {
                let pdf = (-0.5 * r * r).exp() / (2.0 * std::f64::consts::PI).sqrt();
                r -= (reference.cdf(r) - b) / pdf;
            }
            assert!((z - r).abs() < 1e-9, "b={b}: {z} vs {r}");
        }
    }

    #[test]
    fn cdf_tails_are_relative_accurate() {
        // Φ(−8) = 6.22096057427178e-16 (tabulated)
        let v = normal_cdf(-8.0);
        assert!((v / 6.22096057427178e-16 - 1.0).abs() < 1e-12, "{v:e}");
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.0) - 0.841344746068543).abs() < 1e-15);
    }

    #[test]
    fn degenerate_intervals() {
        let d = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let cfg = SolverConfig::new(1.0);
        let ci = ci_one_sample(&d, &d, &cfg, 0.05).unwrap();
        assert_eq!((ci.center, ci.half_width), (0.0, 0.0));
        let ci = ci_two_sample(&d, &d, &cfg, 0.05).unwrap();
        assert_eq!((ci.lower(), ci.upper()), (0.0, 0.0));
        assert!(ci.contains(0.0));
        assert!(ci_two_sample(&d, &d, &cfg, 1.0).is_err());
    }

    #[test]
    fn width_vanishes_as_alpha_approaches_one() {
        let v = VarianceEstimate { value: 2.0, kind: VarianceKind::OneSample, n: 10, m: 0 };
        let ci = ConfidenceInterval::new(1.0, v, 1.0 - 1e-12).unwrap();
        assert!(ci.half_width < 1e-11);
    }

    #[test]
    fn width_scales_as_inverse_root_n() {
        for kind in [VarianceKind::OneSample, VarianceKind::TwoSample] {
            let v1 = VarianceEstimate { value: 0.7, kind, n: 100, m: 100 };
            let v2 = VarianceEstimate { value: 0.7, kind, n: 200, m: 200 };
            let a = ConfidenceInterval::new(0.0, v1, 0.05).unwrap().half_width;
            let b = ConfidenceInterval::new(0.0, v2, 0.05).unwrap().half_width;
            assert!((a / b - 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_of_single_atoms() {
        let (p, q) = (DiscreteMeasure::dirac(&[0.0]).unwrap(), DiscreteMeasure::dirac(&[3.0]).unwrap());
        for eps in [0.5, 1.0, 4.0] {
            let d = sinkhorn_divergence(&p, &q, &SolverConfig::new(eps)).unwrap();
            assert!((d.value - 4.5).abs() < 1e-12);
            assert_eq!(d.parts.1, 0.0);
            assert_eq!(d.eps, eps);
        }
    }

    mod props {
        use super::super::*;
        use crate::sinkhorn::solve;
        use proptest::prelude::*;

        fn measure(d: usize) -> impl Strategy<Value = DiscreteMeasure> {
            (1usize..6).prop_flat_map(move |n| {
                (prop::collection::vec(0.0f64..1.0, n * d), prop::collection::vec(0.05f64..1.0, n)).prop_map(
                    move |(pts, w)| {
                        let s: f64 = w.iter().sum();
                        DiscreteMeasure::new(pts, d, w.iter().map(|x| x / s).collect()).unwrap()
                    },
                )
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn divergence_symmetric_and_nonnegative(p in measure(2), q in measure(2), eps in prop::sample::select(vec![0.5, 1.0, 2.0])) {
                let cfg = SolverConfig::new(eps).with_tol(1e-10);
                let a = sinkhorn_divergence(&p, &q, &cfg).unwrap();
                let b = sinkhorn_divergence(&q, &p, &cfg).unwrap();
                prop_assert!((a.value - b.value).abs() <= 100.0 * cfg.tol);
                prop_assert!(a.value >= -100.0 * cfg.tol);
                prop_assert_eq!(a.value, a.parts.0 - 0.5 * (a.parts.1 + a.parts.2));
                let z = sinkhorn_divergence(&p, &p, &cfg).unwrap();
                prop_assert!(z.value.abs() <= 100.0 * cfg.tol);
            }

            #[test]
            fn variance_shift_invariant(p in measure(1), q in measure(1), c in -50.0f64..50.0) {
                let (pair, _) = solve(&p, &q, &SolverConfig::new(1.0)).unwrap();
                let shifted = pair.shifted(c);
                let v0 = variance_two_sample(&p, &q, &pair).unwrap().value;
                let v1 = variance_two_sample(&p, &q, &shifted).unwrap().value;
                prop_assert!((v0 - v1).abs() <= 1e-12 * (1.0 + v0.abs()) + 1e-13 * c.abs());
                let w0 = variance_one_sample(&p, &pair).unwrap().value;
                let w1 = variance_one_sample(&p, &shifted).unwrap().value;
                prop_assert!((w0 - w1).abs() <= 1e-12 * (1.0 + w0.abs()) + 1e-13 * c.abs());
            }
        }
    }
}
