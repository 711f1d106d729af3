//! Episodic topology-control environment.
//!
//! The environment is pure with respect to episode state: `step` takes a
//! [`GridState`] and returns a [`Transition`] without hidden mutability, so
//! stored snapshots can be re-simulated exactly by the refinement machinery.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::case::{ElementId, GridCase};
use crate::chronics::Chronics;
use crate::error::CoreError;
use crate::graph::{build_effective_graph, EffectiveGraph};
use crate::limits::{evaluate_limits, LimitReport};
use crate::powerflow::{solve_power_flow, NodeInjections, PfOptions, PowerFlowSolution};
use crate::topology::{Action, RejectReason, TopologyState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// survivability penalty coefficient; also the reward assigned to a
    /// failed (diverged/islanded) step
    pub penalty: f64,
    /// safety-cost weight on voltage violations
    pub alpha_v: f64,
    /// safety-cost weight on line overloads
    pub alpha_l: f64,
    /// scalarization weight on the safety objective
    pub kappa: f64,
    pub max_episode_length: usize,
    pub cooldown_steps: u32,
    pub pf: PfOptions,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            penalty: 10.0,
            alpha_v: 0.9,
            alpha_l: 0.1,
            kappa: 1.0,
            max_episode_length: 288,
            cooldown_steps: 3,
            pf: PfOptions::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.penalty < 0.0 || self.alpha_v < 0.0 || self.alpha_l < 0.0 || self.kappa < 0.0 {
            return Err(CoreError::invariant("env config", "weights must be nonnegative"));
        }
        if self.max_episode_length == 0 {
            return Err(CoreError::invariant("env config", "max_episode_length must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalReason {
    Divergence,
    Islanded,
    Horizon,
}

/// Full episode state snapshot. Serializable so the environment can be
/// reseated exactly; the chronics row index is part of the snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    /// steps taken within the episode
    pub t: usize,
    /// absolute chronics row backing this state
    pub row: usize,
    pub episode_offset: usize,
    pub topo: TopologyState,
    pub solution: Option<PowerFlowSolution>,
    pub limits: Option<LimitReport>,
    /// actual generator dispatch, MW, per generator in case order
    pub dispatch_p: Vec<f64>,
    pub terminal: bool,
    pub terminal_reason: Option<TerminalReason>,
}

/// The replay record: (s, a, r, C_v, C_l, s') plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: GridState,
    pub a: Action,
    pub r: f64,
    pub c_v: f64,
    pub c_l: f64,
    pub s_next: GridState,
    pub refined: bool,
    pub rejected: Option<RejectReason>,
}

#[derive(Debug, Clone)]
pub struct Env {
    pub case: Arc<GridCase>,
    pub chronics: Arc<Chronics>,
    pub config: EnvConfig,
}

impl Env {
    pub fn new(case: Arc<GridCase>, chronics: Arc<Chronics>, config: EnvConfig) -> Result<Env, CoreError> {
        case.validate()?;
        chronics.validate()?;
        config.validate()?;
        Ok(Env {
            case,
            chronics,
            config,
        })
    }

    /// Resets to the base topology at the given chronics offset and solves
    /// the initial power flow.
    pub fn reset(&self, episode_offset: usize) -> Result<GridState, CoreError> {
        let horizon = self.episode_horizon();
        if episode_offset + horizon > self.chronics.n_rows() {
            return Err(CoreError::ChronicsRange(format!(
                "offset {} + horizon {} exceeds {} chronics rows",
                episode_offset,
                horizon,
                self.chronics.n_rows()
            )));
        }
        let topo = TopologyState::base(&self.case);
        let graph = build_effective_graph(&self.case, &topo);
        self.solved_state(0, episode_offset, episode_offset, topo, &graph)
            .map_err(|e| CoreError::UnusableEpisode(format!("initial power flow failed: {e}")))
    }

    /// Episode step budget: bounded by both T_max and the chronics horizon.
    pub fn episode_horizon(&self) -> usize {
        self.config.max_episode_length.min(self.chronics.horizon)
    }

    /// Checks an action against cooldowns and the single-substation rule.
    /// Rejection downgrades to do-nothing and reports the reason.
    pub fn validate_action(&self, state: &GridState, action: &Action) -> (Action, Option<RejectReason>) {
        match action {
            Action::DoNothing => (Action::DoNothing, None),
            Action::SetBusbars {
                substation,
                assignments,
            } => {
                for (e, _) in assignments {
                    match self.case.element_sub(*e) {
                        None => {
                            return (Action::DoNothing, Some(RejectReason::UnknownElement(e.to_string())))
                        }
                        Some(sub) if sub != *substation => {
                            return (Action::DoNothing, Some(RejectReason::CrossSubstation))
                        }
                        Some(_) => {}
                    }
                    let idx = self.case.element_index(*e).expect("checked above");
                    if state.topo.cooldowns[idx] > 0 {
                        return (Action::DoNothing, Some(RejectReason::Cooldown(*e)));
                    }
                }
                (action.clone(), None)
            }
        }
    }

    /// Applies a validated action, advances one chronics row, and solves the
    /// resulting power flow.
    pub fn step(&self, state: &GridState, action: &Action) -> Result<Transition, CoreError> {
        if state.terminal {
            return Err(CoreError::Usage("cannot step a terminal state".into()));
        }

        let (applied, rejected) = self.validate_action(state, action);

        let mut topo = state.topo.clone();
        topo.tick_cooldowns();
        for (e, b) in applied.touched() {
            let idx = self.case.element_index(*e).expect("validated");
            topo.element_busbar[idx] = *b;
            topo.cooldowns[idx] = self.config.cooldown_steps;
        }

        let t_next = state.t + 1;
        let row_next = state.row + 1;
        let graph = build_effective_graph(&self.case, &topo);

        // Any load or generator stranded outside the slack island ends the game.
        if self.has_stranded_injection(&graph) {
            let s_next = self.failed_state(t_next, row_next, state.episode_offset, topo, TerminalReason::Islanded);
            return Ok(self.failure_transition(state, applied, rejected, s_next));
        }

        match self.solved_state(t_next, row_next, state.episode_offset, topo.clone(), &graph) {
            Ok(s_next) => {
                let limits = s_next.limits.as_ref().expect("solved state has limits");
                let (c_v, c_l) = (limits.c_v, limits.c_l);
                let r = self.reward_for(&s_next);
                Ok(Transition {
                    s: state.clone(),
                    a: applied,
                    r,
                    c_v,
                    c_l,
                    s_next,
                    refined: false,
                    rejected,
                })
            }
            Err(CoreError::Divergence { .. }) | Err(CoreError::SingularJacobian { .. }) => {
                let s_next =
                    self.failed_state(t_next, row_next, state.episode_offset, topo, TerminalReason::Divergence);
                Ok(self.failure_transition(state, applied, rejected, s_next))
            }
            Err(e) => Err(e),
        }
    }

    /// Reward of a solved state, computed on per-unit quantities.
    fn reward_for(&self, s: &GridState) -> f64 {
        let base = self.case.mva_base;
        let loads: Vec<f64> = self.chronics.load_p[s.row].iter().map(|p| p / base).collect();
        let dispatch: Vec<f64> = s.dispatch_p.iter().map(|p| p / base).collect();
        let p_ref: Vec<f64> = self.chronics.gen_p_ref[s.row].iter().map(|p| p / base).collect();
        compute_reward(
            &self.case,
            &dispatch,
            &p_ref,
            &loads,
            self.chronics.step_minutes,
            self.config.penalty,
        )
    }

    fn failure_transition(
        &self,
        state: &GridState,
        applied: Action,
        rejected: Option<RejectReason>,
        s_next: GridState,
    ) -> Transition {
        // A failed step loses the whole system: every bus and line counts as
        // violated and the survivability penalty is charged as the reward.
        Transition {
            s: state.clone(),
            a: applied,
            r: -self.config.penalty,
            c_v: 1.0,
            c_l: 1.0,
            s_next,
            refined: false,
            rejected,
        }
    }

    fn failed_state(
        &self,
        t: usize,
        row: usize,
        episode_offset: usize,
        topo: TopologyState,
        reason: TerminalReason,
    ) -> GridState {
        GridState {
            t,
            row,
            episode_offset,
            topo,
            solution: None,
            limits: None,
            dispatch_p: vec![0.0; self.case.generators.len()],
            terminal: true,
            terminal_reason: Some(reason),
        }
    }

    fn has_stranded_injection(&self, graph: &EffectiveGraph) -> bool {
        let Some(slack_island) = graph.slack_island() else {
            return true;
        };
        let elements = self.case.elements();
        for (i, e) in elements.iter().enumerate() {
            if matches!(e, ElementId::Gen(_) | ElementId::Load(_))
                && graph.island[graph.node_of_element[i]] != slack_island
            {
                return true;
            }
        }
        false
    }

    fn solved_state(
        &self,
        t: usize,
        row: usize,
        episode_offset: usize,
        topo: TopologyState,
        graph: &EffectiveGraph,
    ) -> Result<GridState, CoreError> {
        let (injections, slack_gen_idx) = self.assemble_injections(graph, row);
        let sol = solve_power_flow(&self.case, graph, &injections, &self.config.pf)?;

        // Dispatch: generators follow their chronics reference except the
        // slack generator, which absorbs the balance residual.
        let base = self.case.mva_base;
        let mut dispatch_p: Vec<f64> = self.chronics.gen_p_ref[row].clone();
        let slack_node = graph.slack_node.expect("validated case has slack generator");
        let mut other_p_at_slack_node = 0.0;
        for (gi, g) in self.case.generators.iter().enumerate() {
            if gi == slack_gen_idx {
                continue;
            }
            let el = self.case.element_index(ElementId::Gen(g.id)).unwrap();
            if graph.node_of_element[el] == slack_node {
                other_p_at_slack_node += self.chronics.gen_p_ref[row][gi];
            }
        }
        let mut load_at_slack_node = 0.0;
        for (li, l) in self.case.loads.iter().enumerate() {
            let el = self.case.element_index(ElementId::Load(l.id)).unwrap();
            if graph.node_of_element[el] == slack_node {
                load_at_slack_node += self.chronics.load_p[row][li];
            }
        }
        dispatch_p[slack_gen_idx] = sol.slack_p * base + load_at_slack_node - other_p_at_slack_node;

        let limits = evaluate_limits(&self.case, &sol);
        let horizon_done = t >= self.episode_horizon();
        Ok(GridState {
            t,
            row,
            episode_offset,
            topo,
            solution: Some(sol),
            limits: Some(limits),
            dispatch_p,
            terminal: horizon_done,
            terminal_reason: horizon_done.then_some(TerminalReason::Horizon),
        })
    }

    /// Per-node net injections in p.u.; the slack generator contributes
    /// nothing (its output is the solver's residual).
    fn assemble_injections(&self, graph: &EffectiveGraph, row: usize) -> (NodeInjections, usize) {
        let base = self.case.mva_base;
        let n = graph.nodes.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        let slack_gen_idx = self
            .case
            .generators
            .iter()
            .position(|g| g.sub == self.case.slack)
            .expect("validated case has slack generator");
        for (gi, g) in self.case.generators.iter().enumerate() {
            if gi == slack_gen_idx {
                continue;
            }
            let el = self.case.element_index(ElementId::Gen(g.id)).unwrap();
            let node = graph.node_of_element[el];
            p[node] += self.chronics.gen_p_ref[row][gi] / base;
            q[node] += self.chronics.gen_q[row][gi] / base;
        }
        for (li, l) in self.case.loads.iter().enumerate() {
            let el = self.case.element_index(ElementId::Load(l.id)).unwrap();
            let node = graph.node_of_element[el];
            p[node] -= self.chronics.load_p[row][li] / base;
        }
        (NodeInjections { p, q }, slack_gen_idx)
    }
}

/// Reward of a solved step on per-unit quantities:
/// the negated load/generation ratio term minus the reference-tracking
/// penalty. Generator buses contribute local load over local generation;
/// demand at pure-load buses enters once through a system-wide ratio.
pub fn compute_reward(
    case: &GridCase,
    dispatch_p: &[f64],
    p_ref: &[f64],
    load_p: &[f64],
    dt: f64,
    penalty: f64,
) -> f64 {
    let n_subs = case.substations.len();
    let mut gen_by_sub = vec![0.0; n_subs];
    let mut load_by_sub = vec![0.0; n_subs];
    for (gi, g) in case.generators.iter().enumerate() {
        let si = case.sub_index(g.sub).unwrap();
        gen_by_sub[si] += dispatch_p[gi];
    }
    for (li, l) in case.loads.iter().enumerate() {
        let si = case.sub_index(l.sub).unwrap();
        load_by_sub[si] += load_p[li];
    }

    let total_gen: f64 = gen_by_sub.iter().sum();
    let mut ratio = 0.0;
    let mut unserved = 0.0;
    for si in 0..n_subs {
        if gen_by_sub[si] > 0.0 {
            ratio += load_by_sub[si] / gen_by_sub[si];
        } else {
            unserved += load_by_sub[si];
        }
    }
    if total_gen > 0.0 {
        ratio += unserved / total_gen;
    }

    let tracking: f64 = dispatch_p
        .iter()
        .zip(p_ref)
        .map(|(p, r)| (p - r) * (p - r))
        .sum();

    -ratio - penalty * dt * tracking
}

/// Per-step safety cost: alpha_v * C_v + alpha_l * C_l.
pub fn compute_safety_cost(c_v: f64, c_l: f64, config: &EnvConfig) -> f64 {
    config.alpha_v * c_v + config.alpha_l * c_l
}

/// Trajectory objectives (J_op, J_safe, J).
pub fn trajectory_objectives(
    transitions: &[Transition],
    config: &EnvConfig,
) -> Result<(f64, f64, f64), CoreError> {
    if transitions.is_empty() {
        return Err(CoreError::Usage("trajectory_objectives on empty trajectory".into()));
    }
    let n = transitions.len() as f64;
    let j_op: f64 = -transitions.iter().map(|t| t.r).sum::<f64>();
    let j_safe: f64 = transitions
        .iter()
        .map(|t| compute_safety_cost(t.c_v, t.c_l, config))
        .sum::<f64>()
        / n;
    Ok((j_op, j_safe, j_op + config.kappa * j_safe))
}
