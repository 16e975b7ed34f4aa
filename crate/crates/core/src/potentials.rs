//! Off-support extension of dual potentials, their derivatives, and
//! discretized `C^s(Ω)` norms.
//!
//! At `ε = 1` the F-side extension is
//! `f(x) = ½‖x‖² − log Σ_j b_j exp(g_j − ½‖y_j‖² + ⟨x, y_j⟩)`, so
//! `D^α f(x) = D^α(½‖x‖²) − κ_α(x)` where `κ_α(x)` is the joint cumulant of
//! the conditional law with atom weights `∝ b_j exp(g_j − ½‖x − y_j‖²)`.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{CompactDomain, DiscreteMeasure};
use crate::sinkhorn::{ground_cost, Normalization, PotentialPair};

/// Largest derivative order served by the cumulant recursion.
pub const MAX_DERIVATIVE_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `f`, defined on the first measure's space, built from `g` and `Q`.
    F,
    /// `g`, built from `f` and `P`.
    G,
}

/// Exponent vector `α ∈ ℕ^d` of a partial derivative.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(exponents: Vec<usize>) -> Self {
        Self(exponents)
    }

    /// `α = e_axis` in dimension `dim`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut e = vec![0; dim];
        e[axis] = 1;
        Self(e)
    }

    pub fn exponents(&self) -> &[usize] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    /// Coordinate axes with multiplicity, e.g. `(2, 1) → [0, 0, 1]`.
    pub fn axes(&self) -> Vec<usize> {
        self.0.iter().enumerate().flat_map(|(k, &e)| std::iter::repeat_n(k, e)).collect()
    }

    /// All multi-indices of exactly `order` in dimension `dim`, lexicographically
    /// descending: `(2,0), (1,1), (0,2)`.
    pub fn of_order(dim: usize, order: usize) -> Vec<MultiIndex> {
        fn fill(prefix: &mut Vec<usize>, dim: usize, left: usize, out: &mut Vec<MultiIndex>) {
            if prefix.len() + 1 == dim {
                prefix.push(left);
                out.push(MultiIndex(prefix.clone()));
                prefix.pop();
                return;
            }
            for e in (0..=left).rev() {
                prefix.push(e);
                fill(prefix, dim, left - e, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        if dim > 0 {
            fill(&mut Vec::with_capacity(dim), dim, order, &mut out);
        }
        out
    }

    /// Graded enumeration of `1 ≤ |α| ≤ max_order`.
    pub fn up_to(dim: usize, max_order: usize) -> Vec<MultiIndex> {
        (1..=max_order).flat_map(|k| Self::of_order(dim, k)).collect()
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "α{:?}", self.0)
    }
}

/// Order `s` of the `C^s` norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HolderOrder(usize);

impl HolderOrder {
    pub fn new(s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::OutOfRange { name: "holder order", value: 0.0 });
        }
        Ok(Self(s))
    }

    /// `⌊d/2⌋ + 1`.
    pub fn default_for_dim(d: usize) -> Self {
        Self(d / 2 + 1)
    }

    pub fn get(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    domain: CompactDomain,
    points_per_axis: usize,
}

impl GridSpec {
    pub fn new(domain: CompactDomain, points_per_axis: usize) -> Result<Self> {
        if points_per_axis < 2 {
            return Err(Error::OutOfRange { name: "points_per_axis", value: points_per_axis as f64 });
        }
        Ok(Self { domain, points_per_axis })
    }

    /// 41 points per axis for `d ≤ 2`, 21 for `d = 3`, 5 beyond.
    pub fn default_for(domain: CompactDomain) -> Self {
        let points_per_axis = match domain.dim() {
            0..=2 => 41,
            3 => 21,
            _ => 5,
        };
        Self { domain, points_per_axis }
    }

    pub fn domain(&self) -> &CompactDomain {
        &self.domain
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.domain.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid node `index` in row-major order, endpoints included.
    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let d = self.domain.dim();
        let k = self.points_per_axis;
        let mut x = vec![0.0; d];
        for axis in (0..d).rev() {
            let t = (index % k) as f64 / (k - 1) as f64;
            index /= k;
            let (l, u) = (self.domain.lower()[axis], self.domain.upper()[axis]);
            x[axis] = if t == 1.0 { u } else { l + (u - l) * t };
        }
        x
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

/// A scalar field on `ℝ^d` with partial derivatives.
pub trait SmoothField: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn derivative(&self, x: &[f64], alpha: &MultiIndex) -> Result<f64>;

    /// Value followed by `D^α` for each `alpha`, at one point.
    fn jet(&self, x: &[f64], alphas: &[MultiIndex]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(alphas.len() + 1);
        out.push(self.value(x));
        for a in alphas {
            out.push(self.derivative(x, a)?);
        }
        Ok(out)
    }
}

/// A potential extended to all of `ℝ^d` through the optimality conditions.
#[derive(Debug, Clone, Copy)]
pub struct ExtendedPotential<'a> {
    side: Side,
    pair: &'a PotentialPair,
    opposite: &'a DiscreteMeasure,
}

impl<'a> ExtendedPotential<'a> {
    /// `opposite` is `Q` for [`Side::F`] and `P` for [`Side::G`].
    pub fn new(side: Side, pair: &'a PotentialPair, opposite: &'a DiscreteMeasure) -> Result<Self> {
        let expected = match side {
            Side::F => pair.g.len(),
            Side::G => pair.f.len(),
        };
        if expected != opposite.len() {
            return Err(Error::DimensionMismatch { expected, found: opposite.len() });
        }
        Ok(Self { side, pair, opposite })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn eps(&self) -> f64 {
        self.pair.eps
    }

    fn opposite_potential(&self) -> &[f64] {
        match self.side {
            Side::F => &self.pair.g,
            Side::G => &self.pair.f,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.opposite.dim() {
            return Err(Error::DimensionMismatch { expected: self.opposite.dim(), found: x.len() });
        }
        Ok(())
    }

    fn require_unit_eps(&self) -> Result<()> {
        if self.pair.eps != 1.0 {
            return Err(Error::OutOfRange { name: "eps (derivatives need eps = 1)", value: self.pair.eps });
        }
        Ok(())
    }

    /// Log-domain exponents `log w_j + (h_j − c(x, y_j))/ε` and their maximum.
    fn exponents(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let eps = self.pair.eps;
        let h = self.opposite_potential();
        let mut max = f64::NEG_INFINITY;
        let e: Vec<f64> = self
            .opposite
            .iter()
            .zip(h)
            .map(|((y, w), hj)| {
                let v = w.ln() + (hj - ground_cost(x, y)) / eps;
                max = max.max(v);
                v
            })
            .collect();
        (e, max)
    }

    fn local_law(&self, x: &[f64]) -> LocalLaw<'a> {
        let (e, max) = self.exponents(x);
        let mut weights: Vec<f64> = e.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        LocalLaw::new(self.opposite, weights)
    }
}

/// Evaluates the extension at `x` with a max-shifted log-sum-exp.
pub fn extend(pot: &ExtendedPotential, x: &[f64]) -> Result<f64> {
    pot.check_point(x)?;
    Ok(pot.value(x))
}

impl SmoothField for ExtendedPotential<'_> {
    fn dim(&self) -> usize {
        self.opposite.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (e, max) = self.exponents(x);
        let sum: f64 = e.iter().map(|v| (v - max).exp()).sum();
        -self.pair.eps * (max + sum.ln())
    }

    fn derivative(&self, x: &[f64], alpha: &MultiIndex) -> Result<f64> {
        derivative(self, x, alpha)
    }

    fn jet(&self, x: &[f64], alphas: &[MultiIndex]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = Vec::with_capacity(alphas.len() + 1);
        out.push(self.value(x));
        if alphas.is_empty() {
            return Ok(out);
        }
        self.require_unit_eps()?;
        let mut law = self.local_law(x);
        for a in alphas {
            check_order(a, x.len())?;
            out.push(quadratic_derivative(x, a) - law.cumulant(a));
        }
        Ok(out)
    }
}

/// Conditional law of the opposite variable given `x`, with memoized
/// central product moments.
struct LocalLaw<'a> {
    atoms: &'a DiscreteMeasure,
    weights: Vec<f64>,
    mean: Vec<f64>,
    central: HashMap<Vec<usize>, f64>,
}

impl<'a> LocalLaw<'a> {
    fn new(atoms: &'a DiscreteMeasure, weights: Vec<f64>) -> Self {
        let d = atoms.dim();
        let mut mean = vec![0.0; d];
        for (j, w) in weights.iter().enumerate() {
            for (m, y) in mean.iter_mut().zip(atoms.point(j)) {
                *m += w * y;
            }
        }
        Self { atoms, weights, mean, central: HashMap::new() }
    }

    fn raw_moment(&self, alpha: &MultiIndex) -> f64 {
        let e = alpha.exponents();
        self.weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * self.atoms.point(j).iter().zip(e).map(|(y, &k)| y.powi(k as i32)).product::<f64>())
            .sum()
    }

    /// `E Π_{k ∈ axes} (Y_k − EY_k)` for a sorted axis list.
    fn central_moment(&mut self, axes: Vec<usize>) -> f64 {
        if let Some(&v) = self.central.get(&axes) {
            return v;
        }
        let v = self
            .weights
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let y = self.atoms.point(j);
                w * axes.iter().map(|&k| y[k] - self.mean[k]).product::<f64>()
            })
            .sum();
        self.central.insert(axes, v);
        v
    }

    /// Joint cumulant `κ_α` by the set-partition recursion
    /// `κ(S) = μ(S) − Σ_{B ∋ min S, B ⊊ S} κ(B) μ(S∖B)` on centered moments.
    fn cumulant(&mut self, alpha: &MultiIndex) -> f64 {
        let axes = alpha.axes();
        let k = axes.len();
        if k == 1 {
            return self.mean[axes[0]];
        }
        let full = (1usize << k) - 1;
        let mut mu = vec![0.0; full + 1];
        for (s, slot) in mu.iter_mut().enumerate().skip(1) {
            let sel: Vec<usize> = (0..k).filter(|b| s >> b & 1 == 1).map(|b| axes[b]).collect();
            *slot = self.central_moment(sel);
        }
        let mut kappa = vec![0.0; full + 1];
        for s in 1..=full {
            let low = s & s.wrapping_neg();
            let rest = s ^ low;
            let mut acc = mu[s];
            // proper subsets B of s containing `low`: B = low | t, t ⊊ rest
            let mut t = rest;
            while t != 0 {
                t = (t - 1) & rest;
                let b = low | t;
                acc -= kappa[b] * mu[s ^ b];
            }
            kappa[s] = acc;
        }
        kappa[full]
    }
}

/// `D^α (½‖x‖²)`.
fn quadratic_derivative(x: &[f64], alpha: &MultiIndex) -> f64 {
    match alpha.order() {
        1 => x[alpha.axes()[0]],
        2 if alpha.exponents().contains(&2) => 1.0,
        _ => 0.0,
    }
}

fn check_order(alpha: &MultiIndex, dim: usize) -> Result<()> {
    if alpha.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: alpha.dim() });
    }
    let order = alpha.order();
    if order == 0 || order > MAX_DERIVATIVE_ORDER {
        return Err(Error::UnsupportedOrder { order, max: MAX_DERIVATIVE_ORDER });
    }
    Ok(())
}

/// Raw conditional moments `E[y^β]` for every `|β| ≤ max_order`, order 0 included.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    entries: Vec<(MultiIndex, f64)>,
}

impl MomentTable {
    pub fn get(&self, beta: &MultiIndex) -> Option<f64> {
        self.entries.iter().find(|(b, _)| b == beta).map(|(_, v)| *v)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(MultiIndex, f64)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn conditional_moments(pot: &ExtendedPotential, x: &[f64], max_order: usize) -> Result<MomentTable> {
    pot.check_point(x)?;
    pot.require_unit_eps()?;
    if max_order == 0 {
        return Err(Error::UnsupportedOrder { order: 0, max: MAX_DERIVATIVE_ORDER });
    }
    let law = pot.local_law(x);
    let d = x.len();
    let entries = (0..=max_order)
        .flat_map(|k| MultiIndex::of_order(d, k))
        .map(|beta| {
            let v = law.raw_moment(&beta);
            (beta, v)
        })
        .collect();
    Ok(MomentTable { entries })
}

/// `D^α f(x) = D^α(½‖x‖²) − κ_α(x)`, exact for discrete measures.
pub fn derivative(pot: &ExtendedPotential, x: &[f64], alpha: &MultiIndex) -> Result<f64> {
    pot.check_point(x)?;
    pot.require_unit_eps()?;
    check_order(alpha, x.len())?;
    let mut law = pot.local_law(x);
    Ok(quadratic_derivative(x, alpha) - law.cumulant(alpha))
}

/// `a − b`.
pub struct Difference<A, B>(pub A, pub B);

impl<A: SmoothField, B: SmoothField> SmoothField for Difference<A, B> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(x) - self.1.value(x)
    }

    fn derivative(&self, x: &[f64], alpha: &MultiIndex) -> Result<f64> {
        Ok(self.0.derivative(x, alpha)? - self.1.derivative(x, alpha)?)
    }

    fn jet(&self, x: &[f64], alphas: &[MultiIndex]) -> Result<Vec<f64>> {
        let a = self.0.jet(x, alphas)?;
        let b = self.1.jet(x, alphas)?;
        Ok(a.iter().zip(&b).map(|(u, v)| u - v).collect())
    }
}

/// `c · a`.
pub struct Scaled<A>(pub f64, pub A);

impl<A: SmoothField> SmoothField for Scaled<A> {
    fn dim(&self) -> usize {
        self.1.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.0 * self.1.value(x)
    }

    fn derivative(&self, x: &[f64], alpha: &MultiIndex) -> Result<f64> {
        Ok(self.0 * self.1.derivative(x, alpha)?)
    }

    fn jet(&self, x: &[f64], alphas: &[MultiIndex]) -> Result<Vec<f64>> {
        Ok(self.1.jet(x, alphas)?.into_iter().map(|v| self.0 * v).collect())
    }
}

impl<T: SmoothField + ?Sized> SmoothField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }

    fn derivative(&self, x: &[f64], alpha: &MultiIndex) -> Result<f64> {
        (**self).derivative(x, alpha)
    }

    fn jet(&self, x: &[f64], alphas: &[MultiIndex]) -> Result<Vec<f64>> {
        (**self).jet(x, alphas)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderNormEstimate {
    pub value: f64,
    pub order: HolderOrder,
    pub grid: GridSpec,
    /// Grid sup of `|D^α δ|`, zeroth order first, then graded order.
    pub terms: Vec<f64>,
}

impl HolderNormEstimate {
    /// Grid sup-norm of the function itself.
    pub fn sup_norm(&self) -> f64 {
        self.terms[0]
    }
}

/// `Σ_{|α| ≤ s} max_grid |D^α δ|`.
///
/// Grid points are processed in parallel; maxima are exact, and the final sum
/// runs over a fixed multi-index order, so the result does not depend on the
/// thread count.
pub fn holder_norm<F: SmoothField>(delta: &F, order: HolderOrder, grid: &GridSpec) -> Result<HolderNormEstimate> {
    let d = grid.domain().dim();
    if delta.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: delta.dim() });
    }
    if order.get() > MAX_DERIVATIVE_ORDER {
        return Err(Error::UnsupportedOrder { order: order.get(), max: MAX_DERIVATIVE_ORDER });
    }
    let alphas = MultiIndex::up_to(d, order.get());
    let width = alphas.len() + 1;
    let terms = (0..grid.len())
        .into_par_iter()
        .map(|i| delta.jet(&grid.point(i), &alphas).map(|v| v.into_iter().map(f64::abs).collect::<Vec<_>>()))
        .try_reduce(|| vec![0.0; width], |a, b| Ok(a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect()))?;
    let value = terms.iter().sum();
    Ok(HolderNormEstimate { value, order, grid: grid.clone(), terms })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub max_abs_f: f64,
    pub max_abs_g: f64,
    /// `½ D_Ω²`.
    pub sup_bound: f64,
    pub lipschitz_f: f64,
    pub lipschitz_g: f64,
    /// `D_Ω`.
    pub lipschitz_bound: f64,
    pub sup_violated: bool,
    pub lipschitz_violated: bool,
}

impl BoundsReport {
    pub fn holds(&self) -> bool {
        !self.sup_violated && !self.lipschitz_violated
    }
}

/// Grid nodes per axis for the all-pairs Lipschitz scan.
fn lipschitz_points_per_axis(dim: usize) -> usize {
    match dim {
        1 => 201,
        2 => 21,
        3 => 9,
        _ => 4,
    }
}

/// Checks `‖f‖_∞, ‖g‖_∞ ≤ ½D_Ω²` and `D_Ω`-Lipschitz continuity for a
/// `GZero`-normalized pair at `ε = 1`, on supports and grid nodes of `domain`.
pub fn check_potential_bounds(
    pair: &PotentialPair,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    domain: &CompactDomain,
) -> Result<BoundsReport> {
    if pair.normalization != Normalization::GZero {
        return Err(Error::WrongNormalization { expected: Normalization::GZero, found: pair.normalization });
    }
    if pair.eps != 1.0 {
        return Err(Error::OutOfRange { name: "eps", value: pair.eps });
    }
    if !domain.contains_support(p) || !domain.contains_support(q) {
        return Err(Error::invalid("supports must lie inside the domain"));
    }
    let f = ExtendedPotential::new(Side::F, pair, q)?;
    let g = ExtendedPotential::new(Side::G, pair, p)?;

    let sup_grid = GridSpec::default_for(domain.clone());
    let sup_over = |field: &ExtendedPotential, stored: &[f64]| -> f64 {
        let on_grid =
            (0..sup_grid.len()).into_par_iter().map(|i| field.value(&sup_grid.point(i)).abs()).reduce(|| 0.0, f64::max);
        stored.iter().fold(on_grid, |m, v| m.max(v.abs()))
    };
    let max_abs_f = sup_over(&f, &pair.f);
    let max_abs_g = sup_over(&g, &pair.g);

    let lip_grid = GridSpec::new(domain.clone(), lipschitz_points_per_axis(domain.dim()))?;
    let nodes: Vec<Vec<f64>> = lip_grid.points().collect();
    let lipschitz_f = lipschitz_ratio(&f, &nodes);
    let lipschitz_g = lipschitz_ratio(&g, &nodes);

    let sup_bound = 0.5 * domain.diameter().powi(2);
    let lipschitz_bound = domain.diameter();
    Ok(BoundsReport {
        max_abs_f,
        max_abs_g,
        sup_bound,
        lipschitz_f,
        lipschitz_g,
        lipschitz_bound,
        sup_violated: max_abs_f.max(max_abs_g) > sup_bound + 1e-6,
        lipschitz_violated: lipschitz_f.max(lipschitz_g) > lipschitz_bound * (1.0 + 1e-6),
    })
}

/// Largest `|φ(x) − φ(x')| / ‖x − x'‖` over all node pairs.
fn lipschitz_ratio(field: &ExtendedPotential, nodes: &[Vec<f64>]) -> f64 {
    let values: Vec<f64> = nodes.par_iter().map(|x| field.value(x)).collect();
    (0..nodes.len())
        .into_par_iter()
        .map(|i| {
            let mut best: f64 = 0.0;
            for j in i + 1..nodes.len() {
                let dist = (2.0 * ground_cost(&nodes[i], &nodes[j])).sqrt();
                best = best.max((values[i] - values[j]).abs() / dist);
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}
