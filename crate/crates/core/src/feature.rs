//! State featurization: fixed-size per-step frames and frame stacking.

use crate::case::GridCase;
use crate::env::GridState;

/// Width of one frame: bus voltages, line loading ratios, element busbars,
/// element cooldown flags, normalized time, terminal flag.
pub fn frame_dim(case: &GridCase) -> usize {
    case.n_buses() + case.n_lines() + 2 * case.n_elements() + 2
}

/// Deterministic, bounded per-step features. Terminal states map to a zeroed
/// frame with the terminal flag set.
pub fn frame(case: &GridCase, state: &GridState, t_max: usize) -> Vec<f64> {
    let dim = frame_dim(case);
    let mut out = vec![0.0; dim];
    let failed = state.terminal && state.solution.is_none();
    if failed {
        *out.last_mut().unwrap() = 1.0;
        return out;
    }

    let mut k = 0;
    let sol = state.solution.as_ref().expect("non-failed state has a solution");
    for bus in &case.buses {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (ni, node) in sol.nodes.iter().enumerate() {
            if node.sub == bus.id {
                sum += sol.voltage_magnitude[ni];
                n += 1;
            }
        }
        out[k] = if n > 0 { sum / n as f64 } else { 1.0 };
        k += 1;
    }
    for (li, line) in case.lines.iter().enumerate() {
        out[k] = sol.line_current[li] / line.i_max;
        k += 1;
    }
    for b in &state.topo.element_busbar {
        out[k] = b.index() as f64;
        k += 1;
    }
    for c in &state.topo.cooldowns {
        out[k] = if *c > 0 { 1.0 } else { 0.0 };
        k += 1;
    }
    out[k] = state.t as f64 / t_max.max(1) as f64;
    out[k + 1] = if state.terminal { 1.0 } else { 0.0 };
    out
}

/// Stacks the most recent frames (oldest first) into one vector of
/// `n_hist * dim` entries, zero-padding missing history at the front.
pub fn stack(frames: &[Vec<f64>], n_hist: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_hist * dim];
    let take = frames.len().min(n_hist);
    let start = n_hist - take;
    for (slot, f) in frames[frames.len() - take..].iter().enumerate() {
        debug_assert_eq!(f.len(), dim);
        out[(start + slot) * dim..(start + slot + 1) * dim].copy_from_slice(f);
    }
    out
}

/// Rolling frame history for one episode.
#[derive(Debug, Clone)]
pub struct FrameStacker {
    n_hist: usize,
    dim: usize,
    frames: Vec<Vec<f64>>,
}

impl FrameStacker {
    pub fn new(case: &GridCase, n_hist: usize) -> FrameStacker {
        FrameStacker {
            n_hist,
            dim: frame_dim(case),
            frames: Vec::new(),
        }
    }

    /// Appends a state's frame and returns the current stacked vector.
    pub fn push(&mut self, case: &GridCase, state: &GridState, t_max: usize) -> Vec<f64> {
        self.frames.push(frame(case, state, t_max));
        if self.frames.len() > self.n_hist {
            self.frames.remove(0);
        }
        self.stacked()
    }

    pub fn stacked(&self) -> Vec<f64> {
        stack(&self.frames, self.n_hist, self.dim)
    }

    /// Stacked vector as it would look after appending `state`, without
    /// mutating the history. Used to featurize hypothetical next states.
    pub fn peek(&self, case: &GridCase, state: &GridState, t_max: usize) -> Vec<f64> {
        let mut frames = self.frames.clone();
        frames.push(frame(case, state, t_max));
        stack(&frames, self.n_hist, self.dim)
    }

    pub fn stacked_dim(&self) -> usize {
        self.n_hist * self.dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::load_case;
    use crate::chronics;
    use crate::env::{Env, EnvConfig};
    use crate::fixtures;
    use std::sync::Arc;

    fn solved_state() -> (crate::case::GridCase, GridState) {
        let case = load_case(fixtures::FIVE_BUS_CASE).unwrap();
        let chron = fixtures::five_bus_mild_chronics(10);
        chronics::load_chronics(&chron.to_csv()).unwrap();
        let env = Env::new(Arc::new(case.clone()), Arc::new(chron), EnvConfig::default()).unwrap();
        (case, env.reset(0).unwrap())
    }

    #[test]
    fn base_state_features_are_bounded() {
        let (case, s) = solved_state();
        let f = frame(&case, &s, 288);
        assert_eq!(f.len(), frame_dim(&case));
        // loading features below 1 on the feasible base point
        for li in 0..case.n_lines() {
            let rho = f[case.n_buses() + li];
            assert!((0.0..1.0).contains(&rho), "line {li} loading {rho}");
        }
        // busbar one-hots all on the 0 side
        for e in 0..case.n_elements() {
            assert_eq!(f[case.n_buses() + case.n_lines() + e], 0.0);
        }
    }

    #[test]
    fn featurization_is_deterministic() {
        let (case, s) = solved_state();
        assert_eq!(frame(&case, &s, 288), frame(&case, &s, 288));
    }

    #[test]
    fn terminal_failure_maps_to_zero_frame_with_flag() {
        let (case, mut s) = solved_state();
        s.terminal = true;
        s.solution = None;
        let f = frame(&case, &s, 288);
        assert_eq!(*f.last().unwrap(), 1.0);
        assert!(f[..f.len() - 1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stacking_zero_pads_missing_history() {
        let dim = 3;
        let frames = vec![vec![1.0, 2.0, 3.0]];
        let s = stack(&frames, 3, dim);
        assert_eq!(s, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
    }
}
