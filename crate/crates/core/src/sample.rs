//! Seeded sampling helpers shared by the test batteries.
//!
//! Item `i` of a battery with seed `s` always draws from `ChaCha8Rng` seeded
//! with `s + i`, so batteries give the same samples in any execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn item_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64))
}

pub fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Uniform direction on the unit sphere.
pub fn unit_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let g = gaussian(rng, n);
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return g.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Uniform point in the Euclidean ball of the given radius.
pub fn ball_point(rng: &mut impl Rng, n: usize, radius: f64) -> Vec<f64> {
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / n.max(1) as f64);
    unit_vector(rng, n).into_iter().map(|x| x * r).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_points_stay_inside_and_are_reproducible() {
        for i in 0..200 {
            let p = ball_point(&mut item_rng(7, i), 3, 5.0);
            assert!(norm(&p) <= 5.0);
            assert_eq!(p, ball_point(&mut item_rng(7, i), 3, 5.0));
        }
        let u = unit_vector(&mut item_rng(1, 0), 4);
        assert!((norm(&u) - 1.0).abs() < 1e-14);
    }

    proptest::proptest! {
        #[test]
        fn ball_point_bounds_hold_for_any_seed(seed: u64, i in 0usize..1000, n in 1usize..9, r in 1e-3f64..1e3) {
            let p = ball_point(&mut item_rng(seed, i), n, r);
            proptest::prop_assert_eq!(p.len(), n);
            proptest::prop_assert!(norm(&p) <= r * (1.0 + 1e-12));
        }
    }
}
