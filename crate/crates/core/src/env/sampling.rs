//! Latin hypercube sampling of box parameters.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::BoxSpec;

/// Sampling ranges: mass (kg), then width, depth, height (m).
pub const MASS_RANGE: (f64, f64) = (0.5, 10.0);
pub const SIZE_RANGES: [(f64, f64); 3] = [(0.2, 0.6), (0.2, 0.6), (0.5, 1.25)];

/// `count` points in `[0,1)^dims`, one per stratum in every dimension.
pub fn latin_hypercube(count: usize, dims: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dims]; count];
    let mut perm: Vec<usize> = (0..count).collect();
    for d in 0..dims {
        perm.shuffle(rng);
        for (i, p) in pts.iter_mut().enumerate() {
            let u: f64 = rng.random();
            p[d] = (perm[i] as f64 + u) / count as f64;
        }
    }
    pts
}

fn scale(u: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + u * (hi - lo)
}

pub fn sample_boxes(count: usize, seed: u64, friction: f64) -> Vec<BoxSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    latin_hypercube(count, 4, &mut rng)
        .into_iter()
        .map(|u| BoxSpec {
            mass: scale(u[0], MASS_RANGE),
            size: [
                scale(u[1], SIZE_RANGES[0]),
                scale(u[2], SIZE_RANGES[1]),
                scale(u[3], SIZE_RANGES[2]),
            ],
            friction,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_sample_per_stratum() {
        let boxes = sample_boxes(40, 3, 0.5);
        let strata = |f: &dyn Fn(&BoxSpec) -> f64, (lo, hi): (f64, f64)| {
            let mut seen = vec![0; 40];
            for b in &boxes {
                let u = (f(b) - lo) / (hi - lo);
                seen[((u * 40.0).floor() as usize).min(39)] += 1;
            }
            seen.iter().all(|c| *c == 1)
        };
        assert!(strata(&|b| b.mass, MASS_RANGE));
        for d in 0..3 {
            assert!(strata(&|b| b.size[d], SIZE_RANGES[d]));
        }
        assert_eq!(boxes, sample_boxes(40, 3, 0.5));
        assert_ne!(boxes, sample_boxes(40, 4, 0.5));
    }
}
