//! Advisor prompt construction and proposal parsing.
//!
//! The prompt is a fixed-layout textual snapshot of one stored transition:
//! grid overview, overloaded lines, voltage abnormalities, crucial
//! substations, the bad action being refined, and cooldown constraints,
//! followed by response-format instructions. The parser extracts
//! `line_id : busbar` pairs after the final `proposed LINE changes:` marker
//! and never panics on arbitrary input.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::case::{ElementId, GridCase, SubId};
use crate::env::Transition;
use crate::error::CoreError;
use crate::replay::RefinementConfig;
use crate::topology::{Action, Busbar};

pub const PROPOSAL_MARKER: &str = "proposed LINE changes:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProposalStatus {
    Ok,
    /// the advisor explicitly declined to change anything
    DoNothing,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisorProposal {
    pub raw_text: String,
    /// line id -> proposed busbar for that line's end at the target substation
    pub changes: BTreeMap<usize, Busbar>,
    pub status: ProposalStatus,
    /// human-readable reasons for pairs that were dropped
    pub rejections: Vec<String>,
}

impl AdvisorProposal {
    pub fn is_ok(&self) -> bool {
        self.status == ProposalStatus::Ok
    }

    pub fn error(raw_text: String, msg: &str) -> AdvisorProposal {
        AdvisorProposal {
            raw_text,
            changes: BTreeMap::new(),
            status: ProposalStatus::Error(msg.to_string()),
            rejections: Vec::new(),
        }
    }
}

fn severity_label(usage_pct: f64) -> &'static str {
    if usage_pct > 120.0 {
        "severe"
    } else {
        "moderate"
    }
}

/// Renders one stored transition into the structured advisor prompt.
/// Requires a converged solution on the transition's source state.
pub fn build_prompt(
    case: &GridCase,
    transition: &Transition,
    config: &RefinementConfig,
) -> Result<String, CoreError> {
    let state = &transition.s;
    let sol = state
        .solution
        .as_ref()
        .ok_or_else(|| CoreError::Usage("cannot build a prompt from an unsolved state".into()))?;
    let limits = state
        .limits
        .as_ref()
        .ok_or_else(|| CoreError::Usage("cannot build a prompt without a limit report".into()))?;

    let mut overloaded: Vec<(usize, f64)> = case
        .lines
        .iter()
        .enumerate()
        .map(|(li, line)| (li, sol.line_current[li] / line.i_max * 100.0))
        .filter(|(_, pct)| *pct > config.overload_threshold)
        .collect();
    overloaded.sort_by(|a, b| b.1.total_cmp(&a.1));
    overloaded.truncate(config.top_k);

    let mut under: Vec<(String, f64)> = Vec::new();
    let mut over: Vec<(String, f64)> = Vec::new();
    for (ni, node) in sol.nodes.iter().enumerate() {
        let v = sol.voltage_magnitude[ni];
        let label = format!("{}{}", node.sub.0, if node.busbar == Busbar::B1 { "b" } else { "" });
        if v < config.v_low {
            under.push((label, v));
        } else if v > config.v_high {
            over.push((label, v));
        }
    }

    // crucial substations: endpoints of reported overloads plus any
    // substation with a voltage-violating node
    let mut crucial: Vec<SubId> = Vec::new();
    for (li, _) in &overloaded {
        for sub in [case.lines[*li].from, case.lines[*li].to] {
            if !crucial.contains(&sub) {
                crucial.push(sub);
            }
        }
    }
    for (sub, _) in &limits.violating_buses {
        if !crucial.contains(sub) {
            crucial.push(*sub);
        }
    }
    crucial.sort_by_key(|s| s.0);

    let mut p = String::new();
    let w = &mut p;
    writeln!(
        w,
        "You are an expert power grid operator with deep knowledge of \
         transmission line overloads and voltage regulation."
    )
    .ok();
    writeln!(w).ok();
    writeln!(w, "NOW, let's analyze the current situation at step {} step by step.", state.t).ok();
    writeln!(w).ok();

    writeln!(w, "1. Grid overview").ok();
    writeln!(w, "  - Total elements: {}", case.n_elements()).ok();
    writeln!(w, "  - Operable substations: {}", case.substations.len()).ok();
    writeln!(w, "  - Total lines: {}", case.n_lines()).ok();
    writeln!(w, "  - Voltage normal range: {:.2}-{:.2} pu", config.v_low, config.v_high).ok();
    writeln!(w).ok();

    writeln!(w, "2. Top-{} overloaded lines (threshold: {}%)", config.top_k, config.overload_threshold).ok();
    if overloaded.is_empty() {
        writeln!(w, "  none").ok();
    }
    for (li, pct) in &overloaded {
        let line = &case.lines[*li];
        writeln!(w, "  - Line {} ({:.1}%, {})", li, pct, severity_label(*pct)).ok();
        writeln!(w, "    Connection: Sub {} <-> Sub {}", line.from.0, line.to.0).ok();
        writeln!(w, "    Active power flow: {:.1} MW", sol.line_flow_p[*li]).ok();
    }
    writeln!(w).ok();

    writeln!(w, "3. Voltage abnormalities").ok();
    if under.is_empty() {
        writeln!(w, "  Under-voltage nodes (<{:.2} pu): none", config.v_low).ok();
    } else {
        writeln!(w, "  Under-voltage nodes (<{:.2} pu):", config.v_low).ok();
        for (n, v) in &under {
            writeln!(w, "    Node {n}: {v:.4} pu").ok();
        }
    }
    if over.is_empty() {
        writeln!(w, "  Over-voltage nodes (>{:.2} pu): none", config.v_high).ok();
    } else {
        writeln!(w, "  Over-voltage nodes (>{:.2} pu):", config.v_high).ok();
        for (n, v) in &over {
            writeln!(w, "    Node {n}: {v:.4} pu").ok();
        }
    }
    writeln!(w).ok();

    writeln!(w, "4. Crucial substations (overload / voltage-related)").ok();
    if crucial.is_empty() {
        writeln!(w, "  none").ok();
    }
    for sub in &crucial {
        writeln!(w, "  Substation {}:", sub.0).ok();
        for bb in [Busbar::B0, Busbar::B1] {
            let lines: Vec<String> = case
                .elements_at(*sub)
                .iter()
                .filter_map(|e| match e {
                    ElementId::LineFrom(l) | ElementId::LineTo(l)
                        if state.topo.line_status[l.0]
                            && state.topo.busbar_of(case, *e) == Some(bb) =>
                    {
                        Some(l.0.to_string())
                    }
                    _ => None,
                })
                .collect();
            let rendered = if lines.is_empty() { "none".to_string() } else { lines.join(", ") };
            writeln!(w, "  - Bus {} lines: {}", bb.index(), rendered).ok();
        }
        let disc: Vec<String> = case
            .lines
            .iter()
            .enumerate()
            .filter(|(li, l)| (l.from == *sub || l.to == *sub) && !state.topo.line_status[*li])
            .map(|(li, _)| li.to_string())
            .collect();
        let rendered = if disc.is_empty() { "none".to_string() } else { disc.join(", ") };
        writeln!(w, "  - Disconnected lines: {}", rendered).ok();
        for (ni, node) in sol.nodes.iter().enumerate() {
            if node.sub == *sub {
                let suffix = if node.busbar == Busbar::B1 { "b" } else { "" };
                writeln!(w, "  - Voltage node {}{}: {:.4} pu", node.sub.0, suffix, sol.voltage_magnitude[ni]).ok();
            }
        }
    }
    writeln!(w).ok();

    writeln!(w, "5. Bad action examples (RL-derived)").ok();
    match &transition.a {
        Action::DoNothing => {
            writeln!(w, "  - Avoid: do-nothing").ok();
        }
        Action::SetBusbars { assignments, .. } => {
            let pairs: Vec<String> = assignments
                .iter()
                .filter_map(|(e, b)| match e {
                    ElementId::LineFrom(l) | ElementId::LineTo(l) => {
                        Some(format!("{} : {}", l.0, b.index()))
                    }
                    _ => None,
                })
                .collect();
            let rendered = if pairs.is_empty() {
                "non-line reassignment".to_string()
            } else {
                pairs.join(", ")
            };
            writeln!(w, "  - Avoid: {{{rendered}}}").ok();
        }
    }
    writeln!(w, "  - Reward: {}", transition.r).ok();
    let impact = match &transition.s_next.solution {
        Some(next) => {
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
            format!(
                "mean voltage {:.4} -> {:.4} pu",
                mean(&sol.voltage_magnitude),
                mean(&next.voltage_magnitude)
            )
        }
        None => "episode failed after this action".to_string(),
    };
    writeln!(w, "  - Voltage impact: {impact}").ok();
    writeln!(w).ok();

    writeln!(w, "6. Operational constraints").ok();
    let mut cool: Vec<(usize, u32)> = Vec::new();
    for (ei, e) in case.elements().iter().enumerate() {
        if let ElementId::LineFrom(l) | ElementId::LineTo(l) = e {
            let c = state.topo.cooldowns[ei];
            if c > 0 && !cool.iter().any(|(li, _)| *li == l.0) {
                cool.push((l.0, c));
            }
        }
    }
    if cool.is_empty() {
        writeln!(w, "  - Lines in cooldown: none").ok();
    } else {
        let ids: Vec<String> = cool.iter().map(|(li, _)| li.to_string()).collect();
        writeln!(w, "  - Lines in cooldown: {}", ids.join(", ")).ok();
        for (li, c) in &cool {
            writeln!(w, "  - Remaining steps: line {li}: {c}").ok();
        }
    }
    writeln!(w).ok();

    writeln!(w, "Please provide your response in the following format:").ok();
    writeln!(w, "1. [Analysis of critical issues]").ok();
    writeln!(w, "2. [Analysis of current topology]").ok();
    writeln!(w, "3. [Deep reasoning of bad line change examples]").ok();
    writeln!(w, "4. Proposed line changes (bus_id must be 0 or 1)").ok();
    writeln!(w).ok();
    write!(w, "{PROPOSAL_MARKER}").ok();
    Ok(p)
}

/// Parses an advisor response. Finds the final `proposed LINE changes:`
/// marker, then reads `line_id : busbar` pairs from the remainder (brace and
/// comma decorations are optional). Invalid pairs are recorded and skipped;
/// the result is `Ok` only when at least one valid pair survives. Never
/// panics, whatever the input.
pub fn parse_proposal(text: &str, n_lines: usize) -> AdvisorProposal {
    let Some(pos) = text.rfind(PROPOSAL_MARKER) else {
        return AdvisorProposal::error(text.to_string(), "marker absent");
    };
    let tail = &text[pos + PROPOSAL_MARKER.len()..];

    let mut changes = BTreeMap::new();
    let mut rejections = Vec::new();
    for segment in tail.split(|c: char| matches!(c, ',' | ';' | '\n' | '{' | '}')) {
        let segment = segment.trim();
        if segment.is_empty() {
            continue;
        }
        let Some((lhs, rhs)) = segment.split_once(':') else {
            rejections.push(format!("not a pair: {segment:?}"));
            continue;
        };
        let Ok(line_id) = lhs.trim().parse::<usize>() else {
            rejections.push(format!("invalid line id: {:?}", lhs.trim()));
            continue;
        };
        let busbar = match rhs.trim().parse::<u64>() {
            Ok(0) => Busbar::B0,
            Ok(1) => Busbar::B1,
            _ => {
                rejections.push(format!("invalid busbar for line {line_id}: {:?}", rhs.trim()));
                continue;
            }
        };
        if line_id >= n_lines {
            rejections.push(format!("unknown line id {line_id}"));
            continue;
        }
        changes.insert(line_id, busbar);
    }

    if changes.is_empty() {
        let mut p = AdvisorProposal::error(text.to_string(), "no valid line changes");
        p.rejections = rejections;
        return p;
    }
    AdvisorProposal {
        raw_text: text.to_string(),
        changes,
        status: ProposalStatus::Ok,
        rejections,
    }
}
