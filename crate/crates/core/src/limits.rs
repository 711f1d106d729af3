//! Violation-fraction evaluation against voltage and thermal limits.
//!
//! A bus counts as violating iff any of its effective nodes sits strictly
//! outside [v_min, v_max]; a line counts as overloaded iff its current
//! strictly exceeds i_max. Boundary values are feasible.

use serde::{Deserialize, Serialize};

use crate::case::{GridCase, LineId, SubId};
use crate::powerflow::PowerFlowSolution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    /// fraction of buses outside voltage limits, |violating| / N
    pub c_v: f64,
    /// fraction of lines above thermal rating, |overloaded| / M
    pub c_l: f64,
    pub violating_buses: Vec<(SubId, f64)>,
    /// overloaded lines with usage percentage (current / i_max * 100)
    pub overloaded_lines: Vec<(LineId, f64)>,
}

/// Evaluates the per-bus and per-line violation indicators on a converged
/// solution.
pub fn evaluate_limits(case: &GridCase, sol: &PowerFlowSolution) -> LimitReport {
    debug_assert!(sol.converged);
    let mut violating_buses = Vec::new();
    for bus in &case.buses {
        let mut worst: Option<f64> = None;
        for (ni, node) in sol.nodes.iter().enumerate() {
            if node.sub != bus.id {
                continue;
            }
            let v = sol.voltage_magnitude[ni];
            if v < bus.v_min || v > bus.v_max {
                // keep the most deviated node voltage for reporting
                let dev = (v - bus.v_min).abs().min((v - bus.v_max).abs());
                worst = match worst {
                    Some(w) => {
                        let wd = (w - bus.v_min).abs().min((w - bus.v_max).abs());
                        if dev > wd {
                            Some(v)
                        } else {
                            Some(w)
                        }
                    }
                    None => Some(v),
                };
            }
        }
        if let Some(v) = worst {
            violating_buses.push((bus.id, v));
        }
    }

    let mut overloaded_lines = Vec::new();
    for (li, line) in case.lines.iter().enumerate() {
        let current = sol.line_current[li];
        if current > line.i_max {
            overloaded_lines.push((line.id, current / line.i_max * 100.0));
        }
    }

    LimitReport {
        c_v: violating_buses.len() as f64 / case.n_buses() as f64,
        c_l: overloaded_lines.len() as f64 / case.n_lines() as f64,
        violating_buses,
        overloaded_lines,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::load_case;
    use crate::fixtures;
    use crate::graph::Node;
    use crate::topology::Busbar;

    fn synthetic_solution(case: &GridCase, vm: Vec<f64>, current: Vec<f64>) -> PowerFlowSolution {
        let nodes: Vec<Node> = case
            .substations
            .iter()
            .map(|s| Node {
                sub: s.id,
                busbar: Busbar::B0,
            })
            .collect();
        let m = case.n_lines();
        PowerFlowSolution {
            voltage_angle: vec![0.0; vm.len()],
            voltage_magnitude: vm,
            line_flow_p: vec![0.0; m],
            line_current: current,
            slack_p: 0.0,
            slack_q: 0.0,
            mismatch_norm: 0.0,
            converged: true,
            iterations: 1,
            nodes,
        }
    }

    #[test]
    fn counts_voltage_violations_exactly() {
        // 4-bus synthetic case with limits [0.95, 1.05]
        let text = "\
[buses]
0 0.95 1.05 138
1 0.95 1.05 138
2 0.95 1.05 138
3 0.95 1.05 138
[substations]
0
1
2
3
[lines]
0 0 1 0.01 0.1 0 1
[generators]
0 0 0 100
[loads]
0 1
[slack]
bus 0
mva_base 100
";
        let case = load_case(text).unwrap();
        let sol = synthetic_solution(&case, vec![1.0, 1.08, 0.92, 1.12], vec![0.0]);
        let rep = evaluate_limits(&case, &sol);
        assert_eq!(rep.c_v, 0.75);
        assert_eq!(rep.violating_buses.len(), 3);
    }

    #[test]
    fn feasible_point_reports_zero() {
        let case = load_case(fixtures::FIVE_BUS_CASE).unwrap();
        let sol = synthetic_solution(&case, vec![1.0; 5], vec![0.5; 6]);
        let rep = evaluate_limits(&case, &sol);
        assert_eq!(rep.c_v, 0.0);
        assert_eq!(rep.c_l, 0.0);
    }

    #[test]
    fn one_of_six_lines_overloaded() {
        let case = load_case(fixtures::FIVE_BUS_CASE).unwrap();
        let mut current = vec![0.1; 6];
        current[3] = case.lines[3].i_max * 1.10;
        let sol = synthetic_solution(&case, vec![1.0; 5], current);
        let rep = evaluate_limits(&case, &sol);
        assert!((rep.c_l - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(rep.overloaded_lines.len(), 1);
        assert!((rep.overloaded_lines[0].1 - 110.0).abs() < 1e-9);
    }

    #[test]
    fn boundary_values_are_feasible() {
        let case = load_case(fixtures::FIVE_BUS_CASE).unwrap();
        let vm = vec![0.95, 1.05, 1.0, 1.0, 1.0];
        let current: Vec<f64> = case.lines.iter().map(|l| l.i_max).collect();
        let sol = synthetic_solution(&case, vm, current);
        let rep = evaluate_limits(&case, &sol);
        assert_eq!(rep.c_v, 0.0);
        assert_eq!(rep.c_l, 0.0);
    }
}
