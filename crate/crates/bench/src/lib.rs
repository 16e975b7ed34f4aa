//! Fixtures shared by the criterion benches.

use eot_core::measures::{sample_uniform_box, CompactDomain, SeedSpec};
use eot_core::DiscreteMeasure;

/// Two uniform point clouds of `n` atoms on `[0,1]^d`.
pub fn uniform_pair(n: usize, d: usize, seed: u64) -> (DiscreteMeasure, DiscreteMeasure) {
    let cube = CompactDomain::unit_cube(d).expect("d >= 1");
    let base = SeedSpec::new(seed, 0);
    let p = sample_uniform_box(&cube, n, base.lane(0)).expect("n >= 1");
    let q = sample_uniform_box(&cube, n, base.lane(1)).expect("n >= 1");
    (p, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_seeded() {
        let (p, q) = uniform_pair(16, 2, 1);
        assert_eq!((p.len(), q.dim()), (16, 2));
        assert_eq!(uniform_pair(16, 2, 1).0, p);
        assert_ne!(p, q);
    }
}
