//! Replay buffer with FIFO eviction, seeded uniform sampling, and selection
//! of low-reward candidates for advisor-based refinement.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Transition;
use crate::error::CoreError;

/// One stored experience. The frame stacks are precomputed at collection time
/// because they depend on episode history that a lone transition cannot
/// reconstruct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub transition: Transition,
    pub s_stack: Vec<f64>,
    pub s_next_stack: Vec<f64>,
    /// a refinement attempt has already been made for this entry; the
    /// transition itself is left untouched either way
    pub advised: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    /// reward threshold below which a transition qualifies for refinement
    pub r_thr: f64,
    /// training steps between advisor invocations
    pub invoke_every: usize,
    /// max advisor retries per candidate
    pub k_max: usize,
    /// max candidates handed to the advisor per invocation
    pub n_llm: usize,
    /// overloaded lines reported in a prompt
    pub top_k: usize,
    /// loading percentage above which a line is reported
    pub overload_threshold: f64,
    pub v_low: f64,
    pub v_high: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            r_thr: 0.3,
            invoke_every: 200,
            k_max: 3,
            n_llm: 512,
            top_k: 5,
            overload_threshold: 100.0,
            v_low: 0.95,
            v_high: 1.05,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.invoke_every < 1 {
            return Err(CoreError::Usage("invoke_every must be >= 1".into()));
        }
        if self.k_max < 1 {
            return Err(CoreError::Usage("k_max must be >= 1".into()));
        }
        if self.n_llm < 1 {
            return Err(CoreError::Usage("n_llm must be >= 1".into()));
        }
        if !(self.v_low.is_finite() && self.v_high.is_finite() && self.v_low < self.v_high) {
            return Err(CoreError::Usage("voltage thresholds must satisfy v_low < v_high".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<BufferEntry>,
    /// total pushes ever, including evicted ones
    appended: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            entries: VecDeque::with_capacity(capacity),
            appended: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn appended(&self) -> u64 {
        self.appended
    }

    pub fn get(&self, idx: usize) -> &BufferEntry {
        &self.entries[idx]
    }

    /// Appends an entry, evicting the oldest when full. Refined entries go
    /// through the same path; originals are never modified in place.
    pub fn push(&mut self, entry: BufferEntry) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
        self.appended += 1;
    }

    /// Uniform sample of `b` distinct entries. Seed the RNG for
    /// reproducibility.
    pub fn sample<'a>(
        &'a self,
        b: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<&'a BufferEntry>, CoreError> {
        if b > self.entries.len() {
            return Err(CoreError::Usage(format!(
                "cannot sample {b} from a buffer of {}",
                self.entries.len()
            )));
        }
        // partial Fisher-Yates over an index vector
        let mut idx: Vec<usize> = (0..self.entries.len()).collect();
        for i in 0..b {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
        }
        Ok(idx[..b].iter().map(|&i| &self.entries[i]).collect())
    }

    /// Indices of refinement candidates: reward strictly below the threshold,
    /// not already refined or advised, newest first, at most `n_llm`.
    pub fn select_candidates(&self, config: &RefinementConfig) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, e)| e.transition.r < config.r_thr && !e.transition.refined && !e.advised)
            .map(|(i, _)| i)
            .take(config.n_llm)
            .collect()
    }

    /// Records that a refinement attempt happened for this entry.
    pub fn mark_advised(&mut self, idx: usize) {
        self.entries[idx].advised = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::load_case;
    use crate::chronics;
    use crate::env::{Env, EnvConfig};
    use crate::fixtures;
    use crate::topology::Action;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn entry_with_reward(r: f64) -> BufferEntry {
        let case = load_case(fixtures::FIVE_BUS_CASE).unwrap();
        let chron = fixtures::five_bus_mild_chronics(10);
        chronics::load_chronics(&chron.to_csv()).unwrap();
        let env = Env::new(Arc::new(case), Arc::new(chron), EnvConfig::default()).unwrap();
        let s = env.reset(0).unwrap();
        let t = env.step(&s, &Action::DoNothing).unwrap();
        let mut t = t;
        t.r = r;
        BufferEntry {
            transition: t,
            s_stack: vec![0.0; 4],
            s_next_stack: vec![0.0; 4],
            advised: false,
        }
    }

    #[test]
    fn push_grows_until_capacity_then_evicts_fifo() {
        let mut buf = ReplayBuffer::new(3);
        buf.push(entry_with_reward(0.0));
        assert_eq!(buf.len(), 1);
        for i in 1..5 {
            buf.push(entry_with_reward(i as f64));
        }
        assert_eq!(buf.len(), 3);
        // entries 0 and 1 evicted
        assert_eq!(buf.get(0).transition.r, 2.0);
        assert_eq!(buf.appended(), 5);
    }

    #[test]
    fn sample_is_distinct_and_seed_reproducible() {
        let mut buf = ReplayBuffer::new(100);
        for i in 0..50 {
            buf.push(entry_with_reward(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = buf.sample(32, &mut rng).unwrap().iter().map(|e| e.transition.r).collect();
        let mut distinct = a.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert_eq!(distinct.len(), 32);

        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        let b: Vec<f64> = buf.sample(32, &mut rng2).unwrap().iter().map(|e| e.transition.r).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_whole_buffer_is_a_permutation() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..10 {
            buf.push(entry_with_reward(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut rs: Vec<f64> = buf.sample(10, &mut rng).unwrap().iter().map(|e| e.transition.r).collect();
        rs.sort_by(f64::total_cmp);
        assert_eq!(rs, (0..10).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn sample_underfull_is_usage_error() {
        let mut buf = ReplayBuffer::new(10);
        buf.push(entry_with_reward(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(buf.sample(2, &mut rng), Err(CoreError::Usage(_))));
    }

    #[test]
    fn candidate_selection_threshold() {
        let mut buf = ReplayBuffer::new(10);
        for r in [0.1, 0.5, 0.25] {
            buf.push(entry_with_reward(r));
        }
        let cfg = RefinementConfig::default();
        let mut sel = buf.select_candidates(&cfg);
        // newest first
        assert_eq!(sel, vec![2, 0]);
        sel.sort_unstable();
        assert_eq!(sel, vec![0, 2]);
    }

    #[test]
    fn candidate_selection_skips_refined_and_caps_at_n_llm() {
        let mut buf = ReplayBuffer::new(1000);
        for i in 0..600 {
            let mut e = entry_with_reward(0.0);
            e.transition.refined = i % 2 == 0;
            buf.push(e);
        }
        let cfg = RefinementConfig {
            n_llm: 200,
            ..RefinementConfig::default()
        };
        let sel = buf.select_candidates(&cfg);
        assert_eq!(sel.len(), 200);
        // newest unrefined entry has index 599 (odd indices are unrefined)
        assert_eq!(sel[0], 599);
        assert!(sel.iter().all(|&i| !buf.get(i).transition.refined));
        assert!(sel.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn advised_entries_are_not_reselected() {
        let mut buf = ReplayBuffer::new(10);
        for _ in 0..3 {
            buf.push(entry_with_reward(0.0));
        }
        let cfg = RefinementConfig::default();
        assert_eq!(buf.select_candidates(&cfg).len(), 3);
        buf.mark_advised(1);
        assert_eq!(buf.select_candidates(&cfg), vec![2, 0]);
        // the stored transition itself is untouched
        assert!(!buf.get(1).transition.refined);
    }

    #[test]
    fn no_candidates_above_threshold() {
        let mut buf = ReplayBuffer::new(10);
        for r in [0.3, 0.9, 1.0] {
            buf.push(entry_with_reward(r));
        }
        // r == r_thr does not qualify: strict inequality
        assert!(buf.select_candidates(&RefinementConfig::default()).is_empty());
    }

    #[test]
    fn config_validation_rejects_zeroes() {
        let bad = RefinementConfig {
            k_max: 0,
            ..RefinementConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(RefinementConfig::default().validate().is_ok());
    }
}
