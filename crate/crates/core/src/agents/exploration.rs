use rand::Rng;
use serde::{Deserialize, Serialize};

/// `ε(k) = max(decay^k, floor)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorationSchedule {
    pub decay: f64,
    pub floor: f64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        Self { decay: 0.99, floor: 0.01 }
    }
}

impl ExplorationSchedule {
    pub fn epsilon(&self, k: u64) -> f64 {
        let k = k.min(i32::MAX as u64) as i32;
        self.decay.powi(k).max(self.floor)
    }
}

/// Overwrite each softmax group of `probs` with a uniform draw from the simplex.
pub fn randomize_groups<R: Rng + ?Sized>(rng: &mut R, probs: &mut [f64], groups: &[usize]) {
    let mut start = 0;
    for &g in groups {
        let chunk = &mut probs[start..start + g];
        // Normalized unit exponentials are Dirichlet(1, ..., 1).
        for v in chunk.iter_mut() {
            let u: f64 = rng.random();
            *v = -(1.0 - u).ln();
        }
        let sum: f64 = chunk.iter().sum();
        if sum > 0.0 {
            chunk.iter_mut().for_each(|v| *v /= sum);
        } else {
            chunk.fill(1.0 / g as f64);
        }
        start += g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_values() {
        let s = ExplorationSchedule::default();
        assert_eq!(s.epsilon(0), 1.0);
        assert!(s.epsilon(458) > 0.01);
        assert_eq!(s.epsilon(459), 0.01);
        assert_eq!(s.epsilon(10_000), 0.01);
        assert!((1..2000).all(|k| s.epsilon(k) <= s.epsilon(k - 1)));
    }

    #[test]
    fn simplex_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = vec![0.0; 5];
        let mut mean_first = 0.0;
        for _ in 0..20_000 {
            randomize_groups(&mut rng, &mut p, &[2, 3]);
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
            assert!((p[2] + p[3] + p[4] - 1.0).abs() < 1e-12);
            mean_first += p[2];
        }
        // Dirichlet(1,1,1) marginal mean is 1/3
        assert!((mean_first / 20_000.0 - 1.0 / 3.0).abs() < 0.01);
    }
}
