//! Per-iteration hyperparameters and view sampling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyper {
    pub weight_decay: f64,
    pub pose_enabled: bool,
}

/// `visits` are per-image counts including the current step's visit.
pub fn schedule(iteration: u64, visits: &[u32], config: &TrainConfig) -> Hyper {
    Hyper {
        weight_decay: if iteration < config.weight_decay_until { config.weight_decay } else { 0.0 },
        pose_enabled: visits.iter().all(|&v| v >= config.min_cycles),
    }
}

/// Draws images as a sequence of seeded random permutations, so every image
/// is visited once per cycle.
#[derive(Clone, Debug)]
pub struct ViewSampler {
    rng: ChaCha8Rng,
    count: usize,
    pending: Vec<usize>,
}

impl ViewSampler {
    pub fn new(count: usize, seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), count, pending: Vec::new() }
    }

    pub fn next_view(&mut self) -> usize {
        if self.pending.is_empty() {
            self.pending = (0..self.count).collect();
            self.pending.shuffle(&mut self.rng);
        }
        self.pending.pop().expect("sampler needs at least one view")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_decay_boundary() {
        let c = TrainConfig::default();
        assert_eq!(schedule(0, &[0], &c).weight_decay, 1e-2);
        assert_eq!(schedule(14_999, &[0], &c).weight_decay, 1e-2);
        assert_eq!(schedule(15_000, &[0], &c).weight_decay, 0.0);
    }

    #[test]
    fn gate_closed_at_start() {
        assert!(!schedule(0, &[1, 0, 0], &TrainConfig::default()).pose_enabled);
    }

    #[test]
    fn every_cycle_visits_each_view_once() {
        let mut s = ViewSampler::new(7, 3);
        for _ in 0..4 {
            let mut seen: Vec<usize> = (0..7).map(|_| s.next_view()).collect();
            seen.sort();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn gate_opens_after_sixty_visits_of_twelve_images() {
        let c = TrainConfig::default();
        let mut s = ViewSampler::new(12, 11);
        let mut visits = vec![0u32; 12];
        let mut opened = None;
        for it in 0..200u64 {
            visits[s.next_view()] += 1;
            if opened.is_none() && schedule(it, &visits, &c).pose_enabled {
                opened = Some(it);
            }
        }
        assert_eq!(opened, Some(59));
    }
}
