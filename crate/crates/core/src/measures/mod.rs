//! Finitely supported probability measures, seeded sampling, and the
//! measure file format.

mod io;
pub mod rng;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub use io::{load_measure, parse_measure, write_measure};
use rng::{combine, SplitMix64};

/// Total-weight deviation absorbed by renormalization.
pub const RENORMALIZE_BAND: f64 = 1e-9;

/// A probability measure on finitely many points of `ℝ^d`.
///
/// Points are stored row-major: atom `i` occupies `points[i*d..(i+1)*d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<f64>,
    dim: usize,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure, renormalizing weights whose total is within
    /// [`RENORMALIZE_BAND`] of one.
    pub fn new(points: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptySupport);
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if points.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch { expected: weights.len() * dim, found: points.len() });
        }
        if let Some(bad) = points.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate {bad}")));
        }
        let weights = normalize_weights(weights)?;
        Ok(Self { points, dim, weights })
    }

    /// Uniform weights `1/n` on the given rows.
    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::EmptySupport);
        }
        let n = points.len() / dim;
        Self::new(points, dim, vec![1.0 / n as f64; n])
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(point.to_vec(), point.len(), vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// `∫ h dμ` for values `h` given per atom.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Merges atoms with bit-identical coordinates.
    ///
    /// Returns the merged measure and, for every original atom, the index of
    /// the merged atom that absorbed it. The merged measure is the same
    /// probability measure, so any functional of it is unchanged.
    pub fn consolidate(&self) -> (DiscreteMeasure, Vec<usize>) {
        let mut slot: HashMap<Vec<u64>, usize> = HashMap::with_capacity(self.len());
        let mut points = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut map = Vec::with_capacity(self.len());
        for (x, w) in self.iter() {
            let key: Vec<u64> = x.iter().map(|c| c.to_bits()).collect();
            let k = *slot.entry(key).or_insert_with(|| {
                points.extend_from_slice(x);
                weights.push(0.0);
                weights.len() - 1
            });
            weights[k] += w;
            map.push(k);
        }
        let merged = DiscreteMeasure { points, dim: self.dim, weights };
        (merged, map)
    }

    /// Smallest axis-aligned box containing the support.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for x in self.points.chunks_exact(self.dim) {
            for k in 0..self.dim {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        (lo, hi)
    }
}

fn normalize_weights(mut weights: Vec<f64>) -> Result<Vec<f64>> {
    let sum: f64 = weights.iter().sum();
    let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min >= 0.0) || !sum.is_finite() || (sum - 1.0).abs() > RENORMALIZE_BAND {
        return Err(Error::NonSimplexWeights { sum, min });
    }
    if sum != 1.0 {
        weights.iter_mut().for_each(|w| *w /= sum);
    }
    Ok(weights)
}

/// Axis-aligned compact set `Ω` with its Euclidean diameter `D_Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    diameter: f64,
}

impl CompactDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        if lower.is_empty() {
            return Err(Error::invalid("domain must have dimension at least 1"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::invalid("domain bounds must be finite with lower <= upper"));
        }
        let diameter = lower.iter().zip(&upper).map(|(l, u)| (u - l) * (u - l)).sum::<f64>().sqrt();
        if diameter <= 0.0 {
            return Err(Error::invalid("domain has zero diameter"));
        }
        Ok(Self { lower, upper, diameter })
    }

    /// `[0, 1]^d`.
    pub fn unit_cube(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn contains_support(&self, m: &DiscreteMeasure) -> bool {
        m.points.chunks_exact(m.dim).all(|x| self.contains(x))
    }
}

/// Identifies one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replicate_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replicate_index: u64) -> Self {
        Self { master_seed, replicate_index }
    }

    /// Seed for replicate `replicate` of experiment cell `cell`.
    pub fn for_cell(master_seed: u64, cell: u64, replicate: u64) -> Self {
        Self { master_seed: combine(master_seed, cell), replicate_index: replicate }
    }

    /// An independent stream tied to this one, for drawing several samples
    /// inside a single replicate.
    pub fn lane(&self, lane: u64) -> Self {
        Self { master_seed: combine(combine(self.master_seed, self.replicate_index), lane), replicate_index: 0 }
    }

    pub fn stream(&self) -> SplitMix64 {
        SplitMix64::new(combine(self.master_seed, self.replicate_index))
    }
}

/// Atom indices of `n` i.i.d. draws from `source`, by inverse-CDF lookup
/// with one uniform per draw.
pub fn sample_indices(source: &DiscreteMeasure, n: usize, seed: SeedSpec) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let mut cumulative = Vec::with_capacity(source.len());
    let mut acc = 0.0;
    for &w in source.weights() {
        acc += w;
        cumulative.push(acc);
    }
    let total = acc;
    let last = source.len() - 1;
    let mut rng = seed.stream();
    Ok((0..n)
        .map(|_| {
            let u = rng.next_f64() * total;
            cumulative.partition_point(|&c| c <= u).min(last)
        })
        .collect())
}

/// `n` i.i.d. draws from `source`, weights `1/n`.
pub fn sample_empirical(source: &DiscreteMeasure, n: usize, seed: SeedSpec) -> Result<DiscreteMeasure> {
    let idx = sample_indices(source, n, seed)?;
    let mut points = Vec::with_capacity(n * source.dim());
    for i in idx {
        points.extend_from_slice(source.point(i));
    }
    Ok(DiscreteMeasure { points, dim: source.dim(), weights: vec![1.0 / n as f64; n] })
}

/// The empirical measure of draws `indices` from `source`, with repeated
/// atoms merged. Returns the measure and the source atom behind each of its
/// atoms, in order of first appearance.
pub fn empirical_from_indices(source: &DiscreteMeasure, indices: &[usize]) -> Result<(DiscreteMeasure, Vec<usize>)> {
    if indices.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut slot = vec![usize::MAX; source.len()];
    let mut atoms = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for &i in indices {
        if slot[i] == usize::MAX {
            slot[i] = atoms.len();
            atoms.push(i);
            counts.push(0);
        }
        counts[slot[i]] += 1;
    }
    let n = indices.len() as f64;
    let mut points = Vec::with_capacity(atoms.len() * source.dim());
    for &i in &atoms {
        points.extend_from_slice(source.point(i));
    }
    let weights = counts.iter().map(|&c| c as f64 / n).collect();
    Ok((DiscreteMeasure::new(points, source.dim(), weights)?, atoms))
}

/// `n` i.i.d. draws from `N(mean, variance_scale·I_d)` via Box–Muller, weights `1/n`.
pub fn sample_gaussian(mean: &[f64], variance_scale: f64, n: usize, seed: SeedSpec) -> Result<DiscreteMeasure> {
    if !(variance_scale > 0.0) {
        return Err(Error::OutOfRange { name: "variance_scale", value: variance_scale });
    }
    if n == 0 || mean.is_empty() {
        return Err(Error::invalid("gaussian sample needs n >= 1 and d >= 1"));
    }
    let d = mean.len();
    let sd = variance_scale.sqrt();
    let mut rng = seed.stream();
    let mut points = Vec::with_capacity(n * d);
    while points.len() < n * d {
        let (z1, z2) = rng.next_normal_pair();
        for z in [z1, z2] {
            let k = points.len();
            if k < n * d {
                points.push(mean[k % d] + sd * z);
            }
        }
    }
    Ok(DiscreteMeasure { points, dim: d, weights: vec![1.0 / n as f64; n] })
}

/// `n` i.i.d. uniform draws on the domain's box, weights `1/n`.
pub fn sample_uniform_box(domain: &CompactDomain, n: usize, seed: SeedSpec) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let d = domain.dim();
    let mut rng = seed.stream();
    let mut points = Vec::with_capacity(n * d);
    for _ in 0..n {
        for k in 0..d {
            let (l, u) = (domain.lower[k], domain.upper[k]);
            points.push(l + (u - l) * rng.next_f64());
        }
    }
    Ok(DiscreteMeasure { points, dim: d, weights: vec![1.0 / n as f64; n] })
}

/// Pushforward under `x ↦ eps^{-1/2}·x`.
pub fn rescale_measure(m: &DiscreteMeasure, eps: f64) -> Result<DiscreteMeasure> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::NonPositiveEps(eps));
    }
    if eps == 1.0 {
        return Ok(m.clone());
    }
    let factor = eps.sqrt().recip();
    Ok(DiscreteMeasure {
        points: m.points.iter().map(|x| x * factor).collect(),
        dim: m.dim,
        weights: m.weights.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atoms() -> DiscreteMeasure {
        DiscreteMeasure::new(vec![0.0, 1.0], 1, vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(matches!(
            DiscreteMeasure::new(vec![0.0, 1.0], 1, vec![0.3, 0.3]),
            Err(Error::NonSimplexWeights { .. })
        ));
        assert!(matches!(
            DiscreteMeasure::new(vec![0.0, 1.0], 1, vec![1.5, -0.5]),
            Err(Error::NonSimplexWeights { .. })
        ));
        assert!(matches!(DiscreteMeasure::new(vec![], 1, vec![]), Err(Error::EmptySupport)));
    }

    #[test]
    fn renormalizes_inside_band() {
        let m = DiscreteMeasure::new(vec![0.0, 1.0], 1, vec![0.5 + 4e-10, 0.5]).unwrap();
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empirical_from_dirac_repeats_the_atom() {
        let src = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let s = sample_empirical(&src, 5, SeedSpec::new(1, 0)).unwrap();
        assert_eq!(s.points(), &[0.0; 5]);
        assert!(s.weights().iter().all(|&w| w == 0.2));
    }

    #[test]
    fn empirical_is_deterministic() {
        let src = two_atoms();
        let a = sample_empirical(&src, 100, SeedSpec::new(9, 3)).unwrap();
        let b = sample_empirical(&src, 100, SeedSpec::new(9, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_fraction_concentrates() {
        // Binomial(10⁴, ½): 4σ = 4·0.005 = 0.02.
        let s = sample_empirical(&two_atoms(), 10_000, SeedSpec::new(2024, 0)).unwrap();
        let ones = s.points().iter().filter(|&&x| x == 1.0).count() as f64 / 1e4;
        assert!((ones - 0.5).abs() <= 0.02, "fraction {ones}");
    }

    #[test]
    fn gaussian_sample_mean_is_close() {
        // 4σ/√n with σ² = 0.5, n = 10⁴ is 0.028.
        let s = sample_gaussian(&[0.0], 0.5, 10_000, SeedSpec::new(5, 0)).unwrap();
        let mean = s.points().iter().sum::<f64>() / 1e4;
        assert!(mean.abs() <= 0.03, "mean {mean}");
        let single = sample_gaussian(&[0.0, 0.0], 0.5, 1, SeedSpec::new(5, 0)).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.weights(), &[1.0]);
    }

    #[test]
    fn replicate_streams_differ() {
        let a = sample_gaussian(&[0.0], 1.0, 10, SeedSpec::new(5, 0)).unwrap();
        let b = sample_gaussian(&[0.0], 1.0, 10, SeedSpec::new(5, 1)).unwrap();
        assert_ne!(a.points(), b.points());
        let s = SeedSpec::new(5, 0);
        assert_ne!(s.lane(0).stream().next_u64(), s.lane(1).stream().next_u64());
    }

    #[test]
    fn rescale_examples() {
        let m = two_atoms();
        assert_eq!(rescale_measure(&m, 1.0).unwrap(), m);
        let d2 = DiscreteMeasure::dirac(&[2.0]).unwrap();
        assert_eq!(rescale_measure(&d2, 4.0).unwrap().points(), &[1.0]);
        assert_eq!(rescale_measure(&m, 0.25).unwrap().points(), &[0.0, 2.0]);
        assert!(matches!(rescale_measure(&m, 0.0), Err(Error::NonPositiveEps(_))));
        assert!(matches!(rescale_measure(&m, -1.0), Err(Error::NonPositiveEps(_))));
    }

    #[test]
    fn merged_empirical_matches_consolidated_sample() {
        let src = DiscreteMeasure::new(vec![0.0, 1.0, 2.0], 1, vec![0.2, 0.3, 0.5]).unwrap();
        let seed = SeedSpec::new(11, 4);
        let idx = sample_indices(&src, 50, seed).unwrap();
        let (merged, atoms) = empirical_from_indices(&src, &idx).unwrap();
        let (consolidated, _) = sample_empirical(&src, 50, seed).unwrap().consolidate();
        assert_eq!(merged.points(), consolidated.points());
        for (a, b) in merged.weights().iter().zip(consolidated.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(atoms.len(), merged.len());
    }

    #[test]
    fn consolidate_merges_duplicates() {
        let s = DiscreteMeasure::uniform(vec![1.0, 0.0, 1.0, 1.0], 1).unwrap();
        let (merged, map) = s.consolidate();
        assert_eq!(merged.points(), &[1.0, 0.0]);
        assert_eq!(merged.weights(), &[0.75, 0.25]);
        assert_eq!(map, vec![0, 1, 0, 0]);
    }

    #[test]
    fn domain_diameter() {
        let d = CompactDomain::unit_cube(2).unwrap();
        assert!((d.diameter() - 2f64.sqrt()).abs() < 1e-15);
        assert!(CompactDomain::new(vec![1.0], vec![0.0]).is_err());
        assert!(d.contains(&[0.0, 1.0]));
        assert!(!d.contains(&[0.0, 1.1]));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rescale_round_trip(xs in prop::collection::vec(-10.0f64..10.0, 1..20), eps in 0.01f64..100.0) {
                let m = DiscreteMeasure::uniform(xs.clone(), 1).unwrap();
                let back = rescale_measure(&rescale_measure(&m, eps).unwrap(), eps.recip()).unwrap();
                for (a, b) in back.points().iter().zip(&xs) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }

            #[test]
            fn empirical_counts_sum_to_n(n in 1usize..300, seed in any::<u64>()) {
                let src = DiscreteMeasure::new(vec![0.0, 1.0, 2.0], 1, vec![0.2, 0.3, 0.5]).unwrap();
                let s = sample_empirical(&src, n, SeedSpec::new(seed, 0)).unwrap();
                prop_assert_eq!(s.len(), n);
                let w = 1.0 / n as f64;
                prop_assert!(s.weights().iter().all(|&x| x == w));
                let (merged, _) = s.consolidate();
                let counts: f64 = merged.weights().iter().map(|x| x * n as f64).sum();
                prop_assert!((counts - n as f64).abs() < 1e-9);
            }
        }
    }
}
