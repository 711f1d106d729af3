//! Busbar assignments, line connectivity, cooldowns, and topology actions.

use serde::{Deserialize, Serialize};

use crate::case::{ElementId, GridCase, SubId};
use crate::error::CoreError;

/// One of the two busbars in a substation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Busbar {
    B0,
    B1,
}

impl Busbar {
    pub fn index(self) -> usize {
        match self {
            Busbar::B0 => 0,
            Busbar::B1 => 1,
        }
    }

    pub fn from_index(i: u64) -> Option<Busbar> {
        match i {
            0 => Some(Busbar::B0),
            1 => Some(Busbar::B1),
            _ => None,
        }
    }
}

impl std::fmt::Display for Busbar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Per-element busbar assignments, line connectivity, and cooldown counters.
/// Vectors are indexed in the case's canonical element / line order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyState {
    pub element_busbar: Vec<Busbar>,
    pub line_status: Vec<bool>,
    pub cooldowns: Vec<u32>,
}

impl TopologyState {
    /// Base topology: everything on busbar 0, all lines connected, no cooldowns.
    pub fn base(case: &GridCase) -> TopologyState {
        TopologyState {
            element_busbar: vec![Busbar::B0; case.n_elements()],
            line_status: vec![true; case.n_lines()],
            cooldowns: vec![0; case.n_elements()],
        }
    }

    pub fn busbar_of(&self, case: &GridCase, e: ElementId) -> Option<Busbar> {
        case.element_index(e).map(|i| self.element_busbar[i])
    }

    pub fn cooldown_of(&self, case: &GridCase, e: ElementId) -> Option<u32> {
        case.element_index(e).map(|i| self.cooldowns[i])
    }

    pub fn validate(&self, case: &GridCase) -> Result<(), CoreError> {
        if self.element_busbar.len() != case.n_elements()
            || self.cooldowns.len() != case.n_elements()
            || self.line_status.len() != case.n_lines()
        {
            return Err(CoreError::invariant("topology", "vector lengths do not match case"));
        }
        Ok(())
    }

    /// Decrements every positive cooldown by one step.
    pub fn tick_cooldowns(&mut self) {
        for c in &mut self.cooldowns {
            *c = c.saturating_sub(1);
        }
    }
}

/// A topology action: do-nothing, or busbar reassignments confined to a
/// single substation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    DoNothing,
    SetBusbars {
        substation: SubId,
        assignments: Vec<(ElementId, Busbar)>,
    },
}

impl Action {
    pub fn is_noop(&self) -> bool {
        matches!(self, Action::DoNothing)
            || matches!(self, Action::SetBusbars { assignments, .. } if assignments.is_empty())
    }

    /// Elements this action touches.
    pub fn touched(&self) -> &[(ElementId, Busbar)] {
        match self {
            Action::DoNothing => &[],
            Action::SetBusbars { assignments, .. } => assignments,
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::DoNothing => write!(f, "do-nothing"),
            Action::SetBusbars {
                substation,
                assignments,
            } => {
                write!(f, "sub {}:", substation.0)?;
                for (e, b) in assignments {
                    write!(f, " {e}->{b}")?;
                }
                Ok(())
            }
        }
    }
}

/// Why an action was rejected and downgraded to do-nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    Cooldown(ElementId),
    UnknownElement(String),
    CrossSubstation,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::Cooldown(e) => write!(f, "cooldown on {e}"),
            RejectReason::UnknownElement(s) => write!(f, "unknown element {s}"),
            RejectReason::CrossSubstation => write!(f, "action spans multiple substations"),
        }
    }
}
