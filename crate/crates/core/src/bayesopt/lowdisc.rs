//! Halton points with an optional Cranley–Patterson shift.

use rand::Rng;

use crate::rng::StreamRng;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

pub const MAX_DIM: usize = PRIMES.len();

fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut value = 0.0;
    while index > 0 {
        value += (index % b) as f64 * scale;
        index /= b;
        scale *= inv;
    }
    value
}

/// The `index`-th Halton point (index 0 is the origin, so callers start at 1).
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= MAX_DIM, "Halton points are limited to {MAX_DIM} dimensions");
    PRIMES[..dim].iter().map(|&p| radical_inverse(index, p)).collect()
}

/// `count` Halton points starting at index 1, each shifted by `shift` modulo one.
pub fn shifted_halton(count: usize, dim: usize, shift: &[f64]) -> Vec<Vec<f64>> {
    (1..=count as u64)
        .map(|i| {
            halton(i, dim)
                .into_iter()
                .zip(shift)
                .map(|(x, s)| (x + s).fract())
                .collect()
        })
        .collect()
}

pub fn random_shift(dim: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_points_in_base_two_and_three() {
        assert_eq!(halton(1, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(2, 2), vec![0.25, 2.0 / 3.0]);
        assert_eq!(halton(3, 1), vec![0.75]);
    }

    #[test]
    fn shifted_points_stay_in_unit_box() {
        let pts = shifted_halton(200, 4, &[0.9, 0.5, 0.1, 0.99]);
        assert!(pts.iter().flatten().all(|&x| (0.0..1.0).contains(&x)));
    }
}
