//! Static network description and the case-file parser.
//!
//! The case file is a sectioned plain-text document (see `docs/case-format.md`).
//! All electrical quantities are per-unit on the MVA base declared in the
//! `[slack]` section.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GenId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LoadId(pub usize);

/// A switchable element attached to a substation busbar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ElementId {
    LineFrom(LineId),
    LineTo(LineId),
    Gen(GenId),
    Load(LoadId),
}

impl std::fmt::Display for ElementId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ElementId::LineFrom(l) => write!(f, "line_{}_from", l.0),
            ElementId::LineTo(l) => write!(f, "line_{}_to", l.0),
            ElementId::Gen(g) => write!(f, "gen_{}", g.0),
            ElementId::Load(l) => write!(f, "load_{}", l.0),
        }
    }
}

/// Voltage-limited bus record; bus ids coincide with substation ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: SubId,
    pub v_min: f64,
    pub v_max: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substation {
    pub id: SubId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: LineId,
    pub from: SubId,
    pub to: SubId,
    /// series resistance, p.u.
    pub r: f64,
    /// series reactance, p.u.
    pub x: f64,
    /// total shunt charging susceptance, p.u. (split half per end)
    pub b: f64,
    /// thermal rating, p.u. current
    pub i_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: GenId,
    pub sub: SubId,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: LoadId,
    pub sub: SubId,
}

/// Static network description: buses, substations with two busbars each,
/// lines, generators, loads, and the slack bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub mva_base: f64,
    pub buses: Vec<Bus>,
    pub substations: Vec<Substation>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    pub slack: SubId,
}

impl GridCase {
    /// Number of buses (the N of the violation fractions).
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Number of lines (the M of the violation fractions).
    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    /// All switchable elements in canonical order: line-from ends, line-to
    /// ends, generators, loads, each in file order.
    pub fn elements(&self) -> Vec<ElementId> {
        let mut out = Vec::with_capacity(2 * self.lines.len() + self.generators.len() + self.loads.len());
        out.extend(self.lines.iter().map(|l| ElementId::LineFrom(l.id)));
        out.extend(self.lines.iter().map(|l| ElementId::LineTo(l.id)));
        out.extend(self.generators.iter().map(|g| ElementId::Gen(g.id)));
        out.extend(self.loads.iter().map(|l| ElementId::Load(l.id)));
        out
    }

    /// Index of an element in the canonical order.
    pub fn element_index(&self, e: ElementId) -> Option<usize> {
        let ml = self.lines.len();
        match e {
            ElementId::LineFrom(id) => self.line_index(id),
            ElementId::LineTo(id) => self.line_index(id).map(|i| ml + i),
            ElementId::Gen(id) => self.generators.iter().position(|g| g.id == id).map(|i| 2 * ml + i),
            ElementId::Load(id) => self
                .loads
                .iter()
                .position(|l| l.id == id)
                .map(|i| 2 * ml + self.generators.len() + i),
        }
    }

    pub fn n_elements(&self) -> usize {
        2 * self.lines.len() + self.generators.len() + self.loads.len()
    }

    pub fn line_index(&self, id: LineId) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    pub fn sub_index(&self, id: SubId) -> Option<usize> {
        self.substations.iter().position(|s| s.id == id)
    }

    pub fn line(&self, id: LineId) -> Option<&Line> {
        self.lines.iter().find(|l| l.id == id)
    }

    /// Substation an element is attached to.
    pub fn element_sub(&self, e: ElementId) -> Option<SubId> {
        match e {
            ElementId::LineFrom(id) => self.line(id).map(|l| l.from),
            ElementId::LineTo(id) => self.line(id).map(|l| l.to),
            ElementId::Gen(id) => self.generators.iter().find(|g| g.id == id).map(|g| g.sub),
            ElementId::Load(id) => self.loads.iter().find(|l| l.id == id).map(|l| l.sub),
        }
    }

    /// Elements attached to a substation, canonical order.
    pub fn elements_at(&self, sub: SubId) -> Vec<ElementId> {
        self.elements()
            .into_iter()
            .filter(|&e| self.element_sub(e) == Some(sub))
            .collect()
    }

    pub fn bus(&self, id: SubId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// Validates the type invariants; returns the offending element on failure.
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.buses.is_empty() {
            return Err(CoreError::invariant("buses", "bus list is empty"));
        }
        if !(self.mva_base > 0.0) {
            return Err(CoreError::invariant("mva_base", "must be positive"));
        }
        let sub_ids: BTreeSet<SubId> = self.substations.iter().map(|s| s.id).collect();
        if sub_ids.len() != self.substations.len() {
            return Err(CoreError::invariant("substations", "duplicate substation id"));
        }
        let bus_ids: BTreeSet<SubId> = self.buses.iter().map(|b| b.id).collect();
        if bus_ids != sub_ids {
            return Err(CoreError::invariant(
                "buses",
                "bus ids must coincide with substation ids",
            ));
        }
        for b in &self.buses {
            if !(0.0 < b.v_min && b.v_min < b.v_max) {
                return Err(CoreError::invariant(
                    format!("bus {}", b.id.0),
                    "requires 0 < v_min < v_max",
                ));
            }
        }
        let mut line_ids = BTreeSet::new();
        for l in &self.lines {
            if !line_ids.insert(l.id) {
                return Err(CoreError::invariant(format!("line {}", l.id.0), "duplicate id"));
            }
            for end in [l.from, l.to] {
                if !sub_ids.contains(&end) {
                    return Err(CoreError::invariant(
                        format!("line {}", l.id.0),
                        format!("references unknown substation {}", end.0),
                    ));
                }
            }
            if l.r < 0.0 {
                return Err(CoreError::invariant(format!("line {}", l.id.0), "r must be >= 0"));
            }
            if l.x == 0.0 {
                return Err(CoreError::invariant(format!("line {}", l.id.0), "x must be nonzero"));
            }
            if !(l.i_max > 0.0) {
                return Err(CoreError::invariant(format!("line {}", l.id.0), "i_max must be > 0"));
            }
        }
        let mut gen_ids = BTreeSet::new();
        for g in &self.generators {
            if !gen_ids.insert(g.id) {
                return Err(CoreError::invariant(format!("gen {}", g.id.0), "duplicate id"));
            }
            if !sub_ids.contains(&g.sub) {
                return Err(CoreError::invariant(
                    format!("gen {}", g.id.0),
                    format!("references unknown substation {}", g.sub.0),
                ));
            }
            if g.p_min > g.p_max {
                return Err(CoreError::invariant(format!("gen {}", g.id.0), "p_min > p_max"));
            }
        }
        let mut load_ids = BTreeSet::new();
        for l in &self.loads {
            if !load_ids.insert(l.id) {
                return Err(CoreError::invariant(format!("load {}", l.id.0), "duplicate id"));
            }
            if !sub_ids.contains(&l.sub) {
                return Err(CoreError::invariant(
                    format!("load {}", l.id.0),
                    format!("references unknown substation {}", l.sub.0),
                ));
            }
        }
        if !sub_ids.contains(&self.slack) {
            return Err(CoreError::invariant(
                "slack",
                format!("slack substation {} not in case", self.slack.0),
            ));
        }
        if !self.generators.iter().any(|g| g.sub == self.slack) {
            return Err(CoreError::invariant(
                "slack",
                "slack substation carries no generator",
            ));
        }
        Ok(())
    }
}

/// Parses case-file text into a validated [`GridCase`].
pub fn load_case(text: &str) -> Result<GridCase, CoreError> {
    let mut section = String::new();
    let mut buses = Vec::new();
    let mut substations = Vec::new();
    let mut lines = Vec::new();
    let mut generators = Vec::new();
    let mut loads = Vec::new();
    let mut slack: Option<SubId> = None;
    let mut mva_base: Option<f64> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            let name = line
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| CoreError::parse(lineno, "malformed section header"))?;
            match name {
                "buses" | "substations" | "lines" | "generators" | "loads" | "slack" => {
                    section = name.to_string();
                }
                other => {
                    return Err(CoreError::parse(lineno, format!("unknown section '{other}'")));
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match section.as_str() {
            "buses" => {
                let f = expect_fields(lineno, &fields, 4, "bus: id v_min v_max base_kv")?;
                buses.push(Bus {
                    id: SubId(parse_usize(lineno, f[0], "bus id")?),
                    v_min: parse_f64(lineno, f[1], "v_min")?,
                    v_max: parse_f64(lineno, f[2], "v_max")?,
                    base_kv: parse_f64(lineno, f[3], "base_kv")?,
                });
            }
            "substations" => {
                let f = expect_fields(lineno, &fields, 1, "substation: id")?;
                substations.push(Substation {
                    id: SubId(parse_usize(lineno, f[0], "substation id")?),
                });
            }
            "lines" => {
                let f = expect_fields(lineno, &fields, 7, "line: id from to r x b i_max")?;
                lines.push(Line {
                    id: LineId(parse_usize(lineno, f[0], "line id")?),
                    from: SubId(parse_usize(lineno, f[1], "from")?),
                    to: SubId(parse_usize(lineno, f[2], "to")?),
                    r: parse_f64(lineno, f[3], "r")?,
                    x: parse_f64(lineno, f[4], "x")?,
                    b: parse_f64(lineno, f[5], "b")?,
                    i_max: parse_f64(lineno, f[6], "i_max")?,
                });
            }
            "generators" => {
                let f = expect_fields(lineno, &fields, 4, "generator: id sub p_min p_max")?;
                generators.push(Generator {
                    id: GenId(parse_usize(lineno, f[0], "gen id")?),
                    sub: SubId(parse_usize(lineno, f[1], "sub")?),
                    p_min: parse_f64(lineno, f[2], "p_min")?,
                    p_max: parse_f64(lineno, f[3], "p_max")?,
                });
            }
            "loads" => {
                let f = expect_fields(lineno, &fields, 2, "load: id sub")?;
                loads.push(Load {
                    id: LoadId(parse_usize(lineno, f[0], "load id")?),
                    sub: SubId(parse_usize(lineno, f[1], "sub")?),
                });
            }
            "slack" => {
                let f = expect_fields(lineno, &fields, 2, "slack: key value")?;
                match f[0] {
                    "bus" => slack = Some(SubId(parse_usize(lineno, f[1], "slack bus")?)),
                    "mva_base" => mva_base = Some(parse_f64(lineno, f[1], "mva_base")?),
                    other => {
                        return Err(CoreError::parse(lineno, format!("unknown slack key '{other}'")));
                    }
                }
            }
            _ => return Err(CoreError::parse(lineno, "data before any section header")),
        }
    }

    let case = GridCase {
        mva_base: mva_base.ok_or_else(|| CoreError::parse(0, "missing mva_base in [slack]"))?,
        buses,
        substations,
        lines,
        generators,
        loads,
        slack: slack.ok_or_else(|| CoreError::parse(0, "missing bus in [slack]"))?,
    };
    case.validate()?;
    Ok(case)
}

/// Per-substation total demand/generation groupings used by the reward.
pub fn subs_by_id(case: &GridCase) -> BTreeMap<SubId, &Substation> {
    case.substations.iter().map(|s| (s.id, s)).collect()
}

fn expect_fields<'a>(
    lineno: usize,
    fields: &'a [&'a str],
    n: usize,
    shape: &str,
) -> Result<&'a [&'a str], CoreError> {
    if fields.len() != n {
        return Err(CoreError::parse(
            lineno,
            format!("expected {n} fields ({shape}), got {}", fields.len()),
        ));
    }
    Ok(fields)
}

fn parse_usize(lineno: usize, s: &str, field: &str) -> Result<usize, CoreError> {
    s.parse()
        .map_err(|_| CoreError::parse(lineno, format!("invalid {field} '{s}'")))
}

fn parse_f64(lineno: usize, s: &str, field: &str) -> Result<f64, CoreError> {
    s.parse()
        .map_err(|_| CoreError::parse(lineno, format!("invalid {field} '{s}'")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn five_bus_fixture_counts() {
        let case = load_case(fixtures::FIVE_BUS_CASE).unwrap();
        assert_eq!(case.n_buses(), 5);
        assert_eq!(case.n_lines(), 6);
        assert_eq!(case.slack, SubId(0));
    }

    #[test]
    fn empty_bus_list_rejected() {
        let text = "[slack]\nbus 0\nmva_base 100\n";
        let err = load_case(text).unwrap_err();
        assert!(matches!(err, CoreError::Invariant { .. }), "{err}");
    }

    #[test]
    fn dangling_substation_reference_rejected() {
        let text = "\
[buses]
0 0.95 1.05 138
1 0.95 1.05 138
[substations]
0
1
[lines]
0 0 99 0.01 0.1 0.0 1.0
[generators]
0 0 0 100
[loads]
0 1
[slack]
bus 0
mva_base 100
";
        let err = load_case(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("99"), "{msg}");
    }

    #[test]
    fn element_index_round_trip() {
        let case = load_case(fixtures::FIVE_BUS_CASE).unwrap();
        let elems = case.elements();
        assert_eq!(elems.len(), case.n_elements());
        for (i, e) in elems.iter().enumerate() {
            assert_eq!(case.element_index(*e), Some(i));
            assert!(case.element_sub(*e).is_some());
        }
    }
}
