//! Simulate-validate-append refinement of low-reward replay transitions.
//!
//! A candidate transition is turned into a prompt, handed to an advisor, and
//! the parsed proposal is re-simulated from the stored state snapshot. The
//! refined tuple is accepted only when the simulated reward strictly improves
//! (or ties with a strictly lower safety cost); otherwise the round is
//! retried up to the configured limit and the original stands.

use std::collections::BTreeMap;

use crate::advisor::{Advisor, AdvisorContext};
use crate::case::{ElementId, GridCase, SubId};
use crate::env::{compute_safety_cost, Env, Transition};
use crate::error::CoreError;
use crate::prompt::{build_prompt, parse_proposal};
use crate::replay::RefinementConfig;
use crate::topology::{Action, Busbar, TopologyState};

/// Converts parsed `line_id -> busbar` changes into a single-substation
/// action against the given topology.
///
/// The target substation is the one shared by the most proposed lines
/// (lowest id on ties); each proposed line's end at that substation is
/// reassigned. Lines without an end there make the proposal inconsistent.
pub fn proposal_to_action(
    case: &GridCase,
    _topo: &TopologyState,
    changes: &BTreeMap<usize, Busbar>,
) -> Result<Action, String> {
    if changes.is_empty() {
        return Err("empty proposal".to_string());
    }
    let mut counts: BTreeMap<SubId, usize> = BTreeMap::new();
    for (&li, _) in changes {
        let line = case.lines.get(li).ok_or_else(|| format!("unknown line {li}"))?;
        *counts.entry(line.from).or_insert(0) += 1;
        if line.to != line.from {
            *counts.entry(line.to).or_insert(0) += 1;
        }
    }
    // max count, lowest id on ties (BTreeMap iterates in id order)
    let (&target, _) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0 .0.cmp(&a.0 .0)))
        .expect("non-empty");

    let mut assignments: Vec<(ElementId, Busbar)> = Vec::with_capacity(changes.len());
    for (&li, &bb) in changes {
        let line = &case.lines[li];
        let end = if line.from == target {
            ElementId::LineFrom(line.id)
        } else if line.to == target {
            ElementId::LineTo(line.id)
        } else {
            return Err(format!(
                "line {li} has no end at substation {}; proposal spans substations",
                target.0
            ));
        };
        assignments.push((end, bb));
    }
    assignments.sort_by_key(|(e, _)| case.element_index(*e));
    Ok(Action::SetBusbars {
        substation: target,
        assignments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundOutcome {
    Accepted,
    AdvisorFailure,
    ParseFailure,
    InconsistentProposal,
    NotAnImprovement,
    SimulationFailure,
}

use serde::{Deserialize, Serialize};

/// Per-candidate refinement log, one entry per advisor round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RefineLog {
    pub rounds: Vec<RoundOutcome>,
}

/// Runs up to `k_max` advisor rounds for one candidate. Returns the refined
/// transition on acceptance, `None` when every round fails. Advisor transport
/// failures consume a round and never abort.
pub fn refine(
    env: &Env,
    transition: &Transition,
    advisor: &mut dyn Advisor,
    config: &RefinementConfig,
) -> Result<(Option<Transition>, RefineLog), CoreError> {
    let prompt = build_prompt(&env.case, transition, config)?;
    let c_orig = compute_safety_cost(transition.c_v, transition.c_l, &env.config);
    let mut log = RefineLog::default();

    for _ in 0..config.k_max {
        let ctx = AdvisorContext {
            env,
            transition,
            prompt: &prompt,
            config,
        };
        let response = match advisor.advise(&ctx) {
            Ok(r) => r,
            Err(_) => {
                log.rounds.push(RoundOutcome::AdvisorFailure);
                continue;
            }
        };
        let proposal = parse_proposal(&response, env.case.n_lines());
        if !proposal.is_ok() {
            log.rounds.push(RoundOutcome::ParseFailure);
            continue;
        }
        let action = match proposal_to_action(&env.case, &transition.s.topo, &proposal.changes) {
            Ok(a) => a,
            Err(_) => {
                log.rounds.push(RoundOutcome::InconsistentProposal);
                continue;
            }
        };
        let mut refined = match env.step(&transition.s, &action) {
            Ok(t) => t,
            Err(CoreError::Usage(_)) => {
                log.rounds.push(RoundOutcome::SimulationFailure);
                continue;
            }
            Err(e) => return Err(e),
        };
        let c_hat = compute_safety_cost(refined.c_v, refined.c_l, &env.config);
        let improves = refined.r > transition.r || (refined.r == transition.r && c_hat < c_orig);
        if improves {
            refined.refined = true;
            log.rounds.push(RoundOutcome::Accepted);
            return Ok((Some(refined), log));
        }
        log.rounds.push(RoundOutcome::NotAnImprovement);
    }
    Ok((None, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advisor::MockAdvisor;
    use crate::case::{load_case, LineId};
    use crate::env::EnvConfig;
    use crate::fixtures;
    use std::sync::Arc;

    fn five_bus_env() -> Env {
        let case = Arc::new(load_case(fixtures::FIVE_BUS_CASE).unwrap());
        let chron = Arc::new(fixtures::five_bus_mild_chronics(40));
        Env::new(case, chron, EnvConfig::default()).unwrap()
    }

    fn candidate(env: &Env) -> Transition {
        let s = env.reset(0).unwrap();
        env.step(&s, &Action::DoNothing).unwrap()
    }

    #[test]
    fn conversion_picks_shared_substation() {
        let env = five_bus_env();
        let topo = TopologyState::base(&env.case);
        // lines 1 (0-3) and 3 (1-3) share substation 3
        let mut changes = BTreeMap::new();
        changes.insert(1, Busbar::B1);
        changes.insert(3, Busbar::B1);
        let a = proposal_to_action(&env.case, &topo, &changes).unwrap();
        match a {
            Action::SetBusbars {
                substation,
                assignments,
            } => {
                assert_eq!(substation, SubId(3));
                assert_eq!(assignments.len(), 2);
                assert!(assignments.contains(&(ElementId::LineTo(LineId(1)), Busbar::B1)));
                assert!(assignments.contains(&(ElementId::LineTo(LineId(3)), Busbar::B1)));
            }
            _ => panic!("expected SetBusbars"),
        }
    }

    #[test]
    fn conversion_single_line_prefers_lower_substation() {
        let env = five_bus_env();
        let topo = TopologyState::base(&env.case);
        let mut changes = BTreeMap::new();
        changes.insert(4, Busbar::B1); // line 4 is 2-4
        let a = proposal_to_action(&env.case, &topo, &changes).unwrap();
        assert!(matches!(a, Action::SetBusbars { substation, .. } if substation == SubId(2)));
    }

    #[test]
    fn conversion_rejects_disjoint_lines() {
        let env = five_bus_env();
        let topo = TopologyState::base(&env.case);
        // lines 0 (0-1) and 5 (3-4): max shared count is 1, target becomes
        // substation 0, and line 5 has no end there
        let mut changes = BTreeMap::new();
        changes.insert(0, Busbar::B1);
        changes.insert(5, Busbar::B1);
        assert!(proposal_to_action(&env.case, &topo, &changes).is_err());
    }

    #[test]
    fn unparseable_responses_exhaust_rounds_and_keep_original() {
        let env = five_bus_env();
        let t = candidate(&env);
        let original = t.clone();
        let mut advisor = MockAdvisor::from_responses(vec![
            "no marker at all".into(),
            "still nothing".into(),
            "nope".into(),
        ]);
        let cfg = RefinementConfig::default();
        let (refined, log) = refine(&env, &t, &mut advisor, &cfg).unwrap();
        assert!(refined.is_none());
        assert_eq!(log.rounds, vec![RoundOutcome::ParseFailure; 3]);
        assert_eq!(t, original);
    }

    #[test]
    fn transport_failures_count_as_rounds() {
        let env = five_bus_env();
        let t = candidate(&env);
        // exhausted mock: every advise call errors
        let mut advisor = MockAdvisor::from_responses(vec![]);
        let cfg = RefinementConfig::default();
        let (refined, log) = refine(&env, &t, &mut advisor, &cfg).unwrap();
        assert!(refined.is_none());
        assert_eq!(log.rounds, vec![RoundOutcome::AdvisorFailure; 3]);
    }

    #[test]
    fn reproposing_the_original_action_is_not_an_improvement() {
        let env = five_bus_env();
        let t = candidate(&env);
        // do-nothing re-simulation lands on the exact same reward and cost
        let mut advisor = MockAdvisor::from_responses(vec![
            // same topology restated: line 0's end at substation 0 stays on busbar 0
            "proposed LINE changes: {0: 0}".into(),
        ]);
        let cfg = RefinementConfig {
            k_max: 1,
            ..RefinementConfig::default()
        };
        let (refined, log) = refine(&env, &t, &mut advisor, &cfg).unwrap();
        assert!(refined.is_none());
        assert_eq!(log.rounds, vec![RoundOutcome::NotAnImprovement]);
    }

    #[test]
    fn accepted_refinement_is_resimulated_and_flagged() {
        let env = five_bus_env();
        let s = env.reset(0).unwrap();
        // manufacture a poor original: an islanding action that fails the episode
        let bad = Action::SetBusbars {
            substation: SubId(4),
            assignments: vec![(ElementId::Load(crate::case::LoadId(2)), Busbar::B1)],
        };
        let t = env.step(&s, &bad).unwrap();
        assert_eq!(t.r, -env.config.penalty);

        let mut advisor = MockAdvisor::from_responses(vec!["proposed LINE changes: {1: 1}".into()]);
        let cfg = RefinementConfig::default();
        let (refined, log) = refine(&env, &t, &mut advisor, &cfg).unwrap();
        let refined = refined.expect("improving proposal accepted");
        assert_eq!(log.rounds, vec![RoundOutcome::Accepted]);
        assert!(refined.refined);
        assert!(refined.r > t.r);
        assert_eq!(refined.s, t.s);

        // physical consistency: the tuple equals an independent re-simulation
        let check = env.step(&t.s, &refined.a).unwrap();
        assert_eq!(check.r, refined.r);
        assert_eq!(check.c_v, refined.c_v);
        assert_eq!(check.c_l, refined.c_l);
        assert_eq!(check.s_next, refined.s_next);
    }
}
