//! Advisor backends: the trait, a physics-based one-step lookahead advisor,
//! a canned-response mock for offline tests, and a null advisor.
//!
//! Every advisor speaks the same wire format: it receives the rendered
//! prompt and answers with free text that ends in a `proposed LINE changes:`
//! block. Remote (HTTP) advisors live in the CLI crate; the core only
//! defines the contract.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use crate::case::ElementId;
use crate::env::{Env, Transition};
use crate::error::CoreError;
use crate::prompt::{AdvisorProposal, ProposalStatus, PROPOSAL_MARKER};
use crate::refine::proposal_to_action;
use crate::replay::RefinementConfig;
use crate::topology::Busbar;

/// Everything an advisor may look at for one candidate.
pub struct AdvisorContext<'a> {
    pub env: &'a Env,
    pub transition: &'a Transition,
    pub prompt: &'a str,
    pub config: &'a RefinementConfig,
}

pub trait Advisor {
    fn name(&self) -> &str;
    /// Produces a response to one prompt. Errors are transport failures and
    /// count as a failed refinement round.
    fn advise(&mut self, ctx: &AdvisorContext<'_>) -> Result<String, CoreError>;
}

/// Sum of per-line overload excess in a transition's next state, or `None`
/// when the step failed.
fn overload_excess(env: &Env, t: &Transition) -> Option<f64> {
    let sol = t.s_next.solution.as_ref()?;
    let mut excess = 0.0;
    for (li, line) in env.case.lines.iter().enumerate() {
        excess += (sol.line_current[li] / line.i_max - 1.0).max(0.0);
    }
    Some(excess)
}

/// One-step lookahead over busbar patterns of the line ends at the endpoint
/// substations of the most-loaded lines. Returns the pattern with the
/// greatest overload reduction that survives the step, or a do-nothing
/// proposal when nothing improves.
pub fn advise_rule_based(
    env: &Env,
    transition: &Transition,
    top_lines: usize,
) -> Result<AdvisorProposal, CoreError> {
    let sol = transition
        .s
        .solution
        .as_ref()
        .ok_or_else(|| CoreError::Usage("rule-based advisor needs a solved state".into()))?;

    let do_nothing = AdvisorProposal {
        raw_text: format!("{PROPOSAL_MARKER} none"),
        changes: BTreeMap::new(),
        status: ProposalStatus::DoNothing,
        rejections: Vec::new(),
    };

    let mut ranked: Vec<(usize, f64)> = env
        .case
        .lines
        .iter()
        .enumerate()
        .map(|(li, line)| (li, sol.line_current[li] / line.i_max))
        .filter(|(_, rho)| *rho > 1.0)
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked.truncate(top_lines);
    if ranked.is_empty() {
        return Ok(do_nothing);
    }

    let mut subs = Vec::new();
    for (li, _) in &ranked {
        for s in [env.case.lines[*li].from, env.case.lines[*li].to] {
            if !subs.contains(&s) {
                subs.push(s);
            }
        }
    }

    let baseline = env.step(&transition.s, &crate::topology::Action::DoNothing)?;
    let base_excess = match overload_excess(env, &baseline) {
        Some(e) => e,
        None => f64::INFINITY,
    };

    let mut best: Option<(f64, BTreeMap<usize, Busbar>)> = None;
    for sub in subs {
        let line_ends: Vec<(usize, ElementId)> = env
            .case
            .elements_at(sub)
            .iter()
            .filter_map(|e| match e {
                ElementId::LineFrom(l) | ElementId::LineTo(l)
                    if transition.s.topo.line_status[l.0] =>
                {
                    Some((l.0, *e))
                }
                _ => None,
            })
            .collect();
        let m = line_ends.len();
        if m == 0 || m > 8 {
            continue;
        }
        for pattern in 0u32..(1 << m) {
            let mut changes = BTreeMap::new();
            for (bit, (li, _)) in line_ends.iter().enumerate() {
                let bb = if pattern >> bit & 1 == 1 { Busbar::B1 } else { Busbar::B0 };
                changes.insert(*li, bb);
            }
            // only patterns that survive the proposal round trip are usable
            let Ok(action) = proposal_to_action(&env.case, &transition.s.topo, &changes) else {
                continue;
            };
            match &action {
                crate::topology::Action::SetBusbars { substation, .. } if *substation == sub => {}
                _ => continue,
            }
            let t = env.step(&transition.s, &action)?;
            if t.rejected.is_some() {
                continue;
            }
            let Some(excess) = overload_excess(env, &t) else {
                continue;
            };
            if excess < base_excess && best.as_ref().map_or(true, |(b, _)| excess < *b) {
                best = Some((excess, changes));
            }
        }
    }

    match best {
        Some((_, changes)) => {
            let mut raw = String::from(PROPOSAL_MARKER);
            let pairs: Vec<String> = changes.iter().map(|(li, bb)| format!("{li} : {bb}")).collect();
            write!(raw, " {{{}}}", pairs.join(", ")).ok();
            Ok(AdvisorProposal {
                raw_text: raw,
                changes,
                status: ProposalStatus::Ok,
                rejections: Vec::new(),
            })
        }
        None => Ok(do_nothing),
    }
}

/// Physics-based advisor usable wherever a remote model would be.
#[derive(Debug, Clone)]
pub struct RuleBasedAdvisor {
    pub top_lines: usize,
}

impl Default for RuleBasedAdvisor {
    fn default() -> Self {
        RuleBasedAdvisor { top_lines: 3 }
    }
}

impl Advisor for RuleBasedAdvisor {
    fn name(&self) -> &str {
        "rule-based"
    }

    fn advise(&mut self, ctx: &AdvisorContext<'_>) -> Result<String, CoreError> {
        let proposal = advise_rule_based(ctx.env, ctx.transition, self.top_lines)?;
        Ok(proposal.raw_text)
    }
}

/// Replays canned responses in order; errors once exhausted.
#[derive(Debug, Clone)]
pub struct MockAdvisor {
    responses: VecDeque<String>,
    served: usize,
}

impl MockAdvisor {
    pub fn from_responses(responses: Vec<String>) -> MockAdvisor {
        MockAdvisor {
            responses: responses.into(),
            served: 0,
        }
    }

    /// Loads every regular file in the directory, sorted by file name.
    pub fn from_dir(dir: &Path) -> Result<MockAdvisor, CoreError> {
        let io = |e: std::io::Error| CoreError::Io {
            path: dir.display().to_string(),
            source: e,
        };
        let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|r| r.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let mut responses = VecDeque::new();
        for f in files {
            let text = std::fs::read_to_string(&f).map_err(|e| CoreError::Io {
                path: f.display().to_string(),
                source: e,
            })?;
            responses.push_back(text);
        }
        Ok(MockAdvisor {
            responses,
            served: 0,
        })
    }

    pub fn remaining(&self) -> usize {
        self.responses.len()
    }

    pub fn served(&self) -> usize {
        self.served
    }
}

impl Advisor for MockAdvisor {
    fn name(&self) -> &str {
        "mock"
    }

    fn advise(&mut self, _ctx: &AdvisorContext<'_>) -> Result<String, CoreError> {
        match self.responses.pop_front() {
            Some(r) => {
                self.served += 1;
                Ok(r)
            }
            None => Err(CoreError::Usage("mock advisor has no responses left".into())),
        }
    }
}

/// Always fails; stands in when refinement is configured off but the
/// machinery still wants an advisor handle.
#[derive(Debug, Clone, Default)]
pub struct NullAdvisor;

impl Advisor for NullAdvisor {
    fn name(&self) -> &str {
        "null"
    }

    fn advise(&mut self, _ctx: &AdvisorContext<'_>) -> Result<String, CoreError> {
        Err(CoreError::Usage("no advisor configured".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::load_case;
    use crate::env::EnvConfig;
    use crate::fixtures;
    use crate::prompt::parse_proposal;
    use crate::topology::Action;
    use std::sync::Arc;

    fn env_with(chron: crate::chronics::Chronics) -> Env {
        let case = Arc::new(load_case(fixtures::FIVE_BUS_CASE).unwrap());
        // short episodes so late chronics offsets remain valid reset points
        let config = EnvConfig {
            max_episode_length: 8,
            ..EnvConfig::default()
        };
        Env::new(case, Arc::new(chron), config).unwrap()
    }

    #[test]
    fn no_overloads_yields_do_nothing() {
        let env = env_with(fixtures::five_bus_mild_chronics(40));
        let s = env.reset(0).unwrap();
        let t = env.step(&s, &Action::DoNothing).unwrap();
        let p = advise_rule_based(&env, &t, 3).unwrap();
        assert_eq!(p.status, ProposalStatus::DoNothing);
        assert!(p.changes.is_empty());
    }

    #[test]
    fn proposal_matches_exhaustive_one_step_oracle() {
        // stressed chronics overload the grid; the advisor's pick must reach
        // the same overload excess as a brute-force search over the full
        // enumerated action set
        let env = env_with(fixtures::five_bus_stressed_chronics(40));
        let Ok(s) = env.reset(30) else {
            panic!("stressed fixture must still converge at the base point");
        };
        let t = env.step(&s, &Action::DoNothing).unwrap();

        let p = advise_rule_based(&env, &t, 3).unwrap();
        if p.status != ProposalStatus::Ok {
            // nothing improving found; the oracle must agree
            let best = oracle_best_excess(&env, &t);
            let base = baseline_excess(&env, &t);
            assert!(best >= base - 1e-12, "oracle found {best} < baseline {base}");
            return;
        }
        let action = proposal_to_action(&env.case, &t.s.topo, &p.changes).unwrap();
        let advised = env.step(&t.s, &action).unwrap();
        let advised_excess = overload_excess(&env, &advised).unwrap();
        let best = oracle_best_excess(&env, &t);
        assert!(
            advised_excess <= best + 1e-9,
            "advisor {advised_excess} vs oracle {best}"
        );
    }

    fn baseline_excess(env: &Env, t: &Transition) -> f64 {
        let b = env.step(&t.s, &Action::DoNothing).unwrap();
        overload_excess(env, &b).unwrap_or(f64::INFINITY)
    }

    /// Brute force over every enumerated single-substation action.
    fn oracle_best_excess(env: &Env, t: &Transition) -> f64 {
        let set = crate::actions::ActionSet::enumerate(&env.case);
        let mut best = f64::INFINITY;
        for a in set.actions() {
            // restrict to line-only reassignments, the advisor's vocabulary
            if let Action::SetBusbars { assignments, .. } = a {
                if assignments
                    .iter()
                    .any(|(e, _)| matches!(e, ElementId::Gen(_) | ElementId::Load(_)))
                {
                    continue;
                }
            }
            let tr = env.step(&t.s, a).unwrap();
            if tr.rejected.is_some() {
                continue;
            }
            if let Some(e) = overload_excess(env, &tr) {
                best = best.min(e);
            }
        }
        best
    }

    #[test]
    fn rule_based_text_round_trips_through_parser() {
        let env = env_with(fixtures::five_bus_stressed_chronics(40));
        let s = env.reset(30).unwrap();
        let t = env.step(&s, &Action::DoNothing).unwrap();
        let p = advise_rule_based(&env, &t, 3).unwrap();
        if p.status == ProposalStatus::Ok {
            let parsed = parse_proposal(&p.raw_text, env.case.n_lines());
            assert!(parsed.is_ok());
            assert_eq!(parsed.changes, p.changes);
        }
    }

    #[test]
    fn mock_advisor_serves_in_order_then_fails() {
        let env = env_with(fixtures::five_bus_mild_chronics(40));
        let s = env.reset(0).unwrap();
        let t = env.step(&s, &Action::DoNothing).unwrap();
        let cfg = RefinementConfig::default();
        let ctx = AdvisorContext {
            env: &env,
            transition: &t,
            prompt: "p",
            config: &cfg,
        };
        let mut mock = MockAdvisor::from_responses(vec!["a".into(), "b".into()]);
        assert_eq!(mock.advise(&ctx).unwrap(), "a");
        assert_eq!(mock.advise(&ctx).unwrap(), "b");
        assert!(mock.advise(&ctx).is_err());
        assert_eq!(mock.served(), 2);
    }

    #[test]
    fn mock_advisor_reads_directory_sorted() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("02.txt"), "second").unwrap();
        std::fs::write(dir.path().join("01.txt"), "first").unwrap();
        let mut mock = MockAdvisor::from_dir(dir.path()).unwrap();
        assert_eq!(mock.remaining(), 2);
        let env = env_with(fixtures::five_bus_mild_chronics(40));
        let s = env.reset(0).unwrap();
        let t = env.step(&s, &Action::DoNothing).unwrap();
        let cfg = RefinementConfig::default();
        let ctx = AdvisorContext {
            env: &env,
            transition: &t,
            prompt: "p",
            config: &cfg,
        };
        assert_eq!(mock.advise(&ctx).unwrap(), "first");
        assert_eq!(mock.advise(&ctx).unwrap(), "second");
    }

    #[test]
    fn null_advisor_always_fails() {
        let env = env_with(fixtures::five_bus_mild_chronics(40));
        let s = env.reset(0).unwrap();
        let t = env.step(&s, &Action::DoNothing).unwrap();
        let cfg = RefinementConfig::default();
        let ctx = AdvisorContext {
            env: &env,
            transition: &t,
            prompt: "p",
            config: &cfg,
        };
        assert!(NullAdvisor.advise(&ctx).is_err());
    }

    #[test]
    fn islanding_candidates_are_never_proposed() {
        // every accepted proposal must survive its own one-step simulation
        let env = env_with(fixtures::five_bus_stressed_chronics(40));
        for offset in [0, 10, 20, 30] {
            let Ok(s) = env.reset(offset) else { continue };
            let t = env.step(&s, &Action::DoNothing).unwrap();
            let p = advise_rule_based(&env, &t, 3).unwrap();
            if p.status == ProposalStatus::Ok {
                let a = proposal_to_action(&env.case, &t.s.topo, &p.changes).unwrap();
                let tr = env.step(&t.s, &a).unwrap();
                assert!(tr.s_next.solution.is_some(), "offset {offset} proposed a failing action");
            }
        }
    }
}
