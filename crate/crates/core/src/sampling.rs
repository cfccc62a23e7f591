//! Deterministic quasi-random sampling (Halton sequences).
//!
//! Certification sweeps need reproducible sample clouds whose membership does
//! not depend on worker count, so they draw from a fixed low-discrepancy
//! sequence indexed by position.

const PRIMES: [u32; 6] = [2, 3, 5, 7, 11, 13];

/// Radical-inverse (van der Corput) value of `index` in the given base.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut x = 0.0;
    while index > 0 {
        x += (index % base as u64) as f64 * inv;
        index /= base as u64;
        inv /= b;
    }
    x
}

/// `dim`-dimensional Halton point in the unit cube, 1-based index.
pub fn halton(index: u64, dim: usize) -> [f64; 3] {
    let mut p = [0.0; 3];
    for (a, slot) in p.iter_mut().take(dim).enumerate() {
        *slot = radical_inverse(index, PRIMES[a]);
    }
    p
}

/// Deterministic stream of quasi-random points in the unit ball of the given
/// dimension (rejection from the cube, fixed scan order).
pub struct BallSampler {
    dim: usize,
    next_index: u64,
}

impl BallSampler {
    pub fn new(dim: usize) -> Self {
        BallSampler { dim, next_index: 1 }
    }

    /// Start at a fixed offset, useful for decorrelated secondary streams.
    pub fn with_offset(dim: usize, offset: u64) -> Self {
        BallSampler { dim, next_index: 1 + offset }
    }
}

impl Iterator for BallSampler {
    type Item = [f64; 3];

    fn next(&mut self) -> Option<[f64; 3]> {
        loop {
            let u = halton(self.next_index, self.dim);
            self.next_index += 1;
            let mut p = [0.0; 3];
            let mut norm2 = 0.0;
            for a in 0..self.dim {
                p[a] = 2.0 * u[a] - 1.0;
                norm2 += p[a] * p[a];
            }
            if norm2 < 1.0 {
                return Some(p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base2_prefix() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn ball_sampler_stays_in_ball_and_is_deterministic() {
        let pts: Vec<_> = BallSampler::new(3).take(500).collect();
        for p in &pts {
            assert!(p[0] * p[0] + p[1] * p[1] + p[2] * p[2] < 1.0);
        }
        let again: Vec<_> = BallSampler::new(3).take(500).collect();
        assert_eq!(pts, again);
    }

    #[test]
    fn ball_sampler_fills_the_ball() {
        // crude equidistribution check: both half-balls get samples
        let pts: Vec<_> = BallSampler::new(2).take(1000).collect();
        let pos = pts.iter().filter(|p| p[0] > 0.0).count();
        assert!(pos > 350 && pos < 650, "{pos}");
    }
}
