//! Enumerated discrete action set: do-nothing plus every single-substation
//! busbar assignment pattern.
//!
//! Patterns are canonicalized by pinning the substation's first element to
//! busbar 0 (the two busbars are interchangeable), giving 2^(k-1) actions per
//! substation with k switchable elements.

use serde::{Deserialize, Serialize};

use crate::case::{ElementId, GridCase, SubId};
use crate::topology::{Action, Busbar};

/// Substations with more elements than this are left uncontrollable to keep
/// the enumeration bounded.
pub const MAX_SUB_ELEMENTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSet {
    actions: Vec<Action>,
}

impl ActionSet {
    pub fn enumerate(case: &GridCase) -> ActionSet {
        let mut actions = vec![Action::DoNothing];
        for sub in &case.substations {
            let elems = case.elements_at(sub.id);
            let k = elems.len();
            if !(2..=MAX_SUB_ELEMENTS).contains(&k) {
                continue;
            }
            // first element pinned to busbar 0
            for pattern in 0u32..(1 << (k - 1)) {
                let assignments: Vec<(ElementId, Busbar)> = elems
                    .iter()
                    .enumerate()
                    .map(|(i, &e)| {
                        let bb = if i == 0 {
                            Busbar::B0
                        } else if pattern >> (i - 1) & 1 == 1 {
                            Busbar::B1
                        } else {
                            Busbar::B0
                        };
                        (e, bb)
                    })
                    .collect();
                actions.push(Action::SetBusbars {
                    substation: sub.id,
                    assignments,
                });
            }
        }
        ActionSet { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Action {
        &self.actions[idx]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// Index of the canonical form of a full busbar pattern over one
    /// substation's elements (element order as in `case.elements_at`).
    pub fn index_of_pattern(&self, case: &GridCase, sub: SubId, pattern: &[Busbar]) -> Option<usize> {
        let elems = case.elements_at(sub);
        if elems.len() != pattern.len() || pattern.is_empty() {
            return None;
        }
        // complement-flip so the first element sits on busbar 0
        let flip = pattern[0] == Busbar::B1;
        let canon: Vec<(ElementId, Busbar)> = elems
            .iter()
            .zip(pattern)
            .map(|(&e, &b)| {
                let b = if flip {
                    if b == Busbar::B0 {
                        Busbar::B1
                    } else {
                        Busbar::B0
                    }
                } else {
                    b
                };
                (e, b)
            })
            .collect();
        self.actions.iter().position(|a| match a {
            Action::SetBusbars {
                substation,
                assignments,
            } => *substation == sub && *assignments == canon,
            Action::DoNothing => false,
        })
    }

    pub fn index_of(&self, action: &Action) -> Option<usize> {
        self.actions.iter().position(|a| a == action)
    }
}
