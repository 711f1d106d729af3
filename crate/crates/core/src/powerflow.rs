//! Polar Newton-Raphson AC power flow on the effective graph.
//!
//! All non-slack nodes are constant-PQ; the slack node holds V = 1.0 p.u.,
//! theta = 0 and absorbs the balance residual. Only the slack island is
//! solved; isolated islands must carry no injection and are reported at
//! nominal voltage with zero flow.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::graph::{EffectiveGraph, Node};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfOptions {
    /// max |mismatch| convergence threshold, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub mva_base: f64,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            tolerance: 1e-8,
            max_iterations: 20,
            mva_base: 100.0,
        }
    }
}

/// Net nodal injections in p.u. (generation positive), indexed by graph node.
/// The slack node's entry is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInjections {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    /// voltage magnitude per effective node, p.u.
    pub voltage_magnitude: Vec<f64>,
    /// voltage angle per effective node, radians
    pub voltage_angle: Vec<f64>,
    /// current per line (case line order), p.u.; larger of the two ends
    pub line_current: Vec<f64>,
    /// active power at the from end per line, MW
    pub line_flow_p: Vec<f64>,
    /// slack node net injection, p.u.
    pub slack_p: f64,
    pub slack_q: f64,
    pub mismatch_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// copy of the node list so the solution is self-describing
    pub nodes: Vec<Node>,
}

/// Solves the AC power flow. Divergence and singular Jacobians are errors;
/// the caller treats them as an infeasible operating point.
pub fn solve_power_flow(
    case: &crate::case::GridCase,
    graph: &EffectiveGraph,
    injections: &NodeInjections,
    options: &PfOptions,
) -> Result<PowerFlowSolution, CoreError> {
    let n_case_lines = case.n_lines();
    let n = graph.nodes.len();
    assert_eq!(injections.p.len(), n, "injection vector length");
    assert_eq!(injections.q.len(), n, "injection vector length");
    let slack = graph
        .slack_node
        .ok_or_else(|| CoreError::Usage("graph has no slack node".into()))?;
    let slack_island = graph.island[slack];

    // Island membership and local indexing for the solved island.
    let island_nodes: Vec<usize> = (0..n).filter(|&i| graph.island[i] == slack_island).collect();
    let mut local = vec![usize::MAX; n];
    for (li, &gi) in island_nodes.iter().enumerate() {
        local[gi] = li;
    }
    for i in 0..n {
        if graph.island[i] != slack_island && (injections.p[i].abs() > 1e-12 || injections.q[i].abs() > 1e-12) {
            return Err(CoreError::InjectionOffSlackIsland {
                node: format!("sub {} busbar {}", graph.nodes[i].sub.0, graph.nodes[i].busbar),
            });
        }
    }

    let ni = island_nodes.len();
    // Dense admittance matrix of the slack island.
    let mut ybus = vec![Complex::new(0.0, 0.0); ni * ni];
    for e in &graph.edges {
        if graph.island[e.from_node] != slack_island {
            continue;
        }
        let f = local[e.from_node];
        let t = local[e.to_node];
        let ys = Complex::new(e.r, e.x).inv();
        let ysh = Complex::new(0.0, e.b / 2.0);
        ybus[f * ni + f] += ys + ysh;
        ybus[t * ni + t] += ys + ysh;
        ybus[f * ni + t] -= ys;
        ybus[t * ni + f] -= ys;
    }

    let slack_local = local[slack];
    // Unknown ordering: (theta, v) per non-slack island node.
    let unknowns: Vec<usize> = (0..ni).filter(|&i| i != slack_local).collect();
    let nu = unknowns.len();
    let mut pos = vec![usize::MAX; ni];
    for (k, &i) in unknowns.iter().enumerate() {
        pos[i] = k;
    }

    let mut vm = vec![1.0f64; ni];
    let mut va = vec![0.0f64; ni];

    let calc = |vm: &[f64], va: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; ni];
        let mut q = vec![0.0; ni];
        for i in 0..ni {
            let mut pi = 0.0;
            let mut qi = 0.0;
            for k in 0..ni {
                let y = ybus[i * ni + k];
                if y.re == 0.0 && y.im == 0.0 {
                    continue;
                }
                let th = va[i] - va[k];
                let (s, c) = th.sin_cos();
                pi += vm[i] * vm[k] * (y.re * c + y.im * s);
                qi += vm[i] * vm[k] * (y.re * s - y.im * c);
            }
            p[i] = pi;
            q[i] = qi;
        }
        (p, q)
    };

    let mut iterations = 0usize;
    let mut mismatch_norm;
    loop {
        iterations += 1;
        let (p_calc, q_calc) = calc(&vm, &va);
        let mut f = DVector::zeros(2 * nu);
        for (k, &i) in unknowns.iter().enumerate() {
            let gi = island_nodes[i];
            f[k] = injections.p[gi] - p_calc[i];
            f[nu + k] = injections.q[gi] - q_calc[i];
        }
        mismatch_norm = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !mismatch_norm.is_finite() {
            return Err(CoreError::Divergence {
                iterations,
                mismatch: mismatch_norm,
            });
        }
        if mismatch_norm < options.tolerance {
            break;
        }
        if iterations > options.max_iterations {
            return Err(CoreError::Divergence {
                iterations: iterations - 1,
                mismatch: mismatch_norm,
            });
        }

        // Jacobian in polar form.
        let mut jac = DMatrix::zeros(2 * nu, 2 * nu);
        for (row, &i) in unknowns.iter().enumerate() {
            for (col, &j) in unknowns.iter().enumerate() {
                let y = ybus[i * ni + j];
                if i == j {
                    let gii = y.re;
                    let bii = y.im;
                    jac[(row, col)] = -q_calc[i] - bii * vm[i] * vm[i];
                    jac[(row, nu + col)] = p_calc[i] / vm[i] + gii * vm[i];
                    jac[(nu + row, col)] = p_calc[i] - gii * vm[i] * vm[i];
                    jac[(nu + row, nu + col)] = q_calc[i] / vm[i] - bii * vm[i];
                } else {
                    if y.re == 0.0 && y.im == 0.0 {
                        continue;
                    }
                    let th = va[i] - va[j];
                    let (s, c) = th.sin_cos();
                    let dp_dth = vm[i] * vm[j] * (y.re * s - y.im * c);
                    let dp_dv = vm[i] * (y.re * c + y.im * s);
                    let dq_dth = -vm[i] * vm[j] * (y.re * c + y.im * s);
                    let dq_dv = vm[i] * (y.re * s - y.im * c);
                    jac[(row, col)] = dp_dth;
                    jac[(row, nu + col)] = dp_dv;
                    jac[(nu + row, col)] = dq_dth;
                    jac[(nu + row, nu + col)] = dq_dv;
                }
            }
        }

        let lu = jac.lu();
        let dx = lu
            .solve(&f)
            .ok_or(CoreError::SingularJacobian { nodes: ni })?;
        for (k, &i) in unknowns.iter().enumerate() {
            va[i] += dx[k];
            vm[i] += dx[nu + k];
            if !(vm[i].is_finite() && vm[i] > 1e-3) {
                return Err(CoreError::Divergence {
                    iterations,
                    mismatch: mismatch_norm,
                });
            }
        }
    }

    // Expand to the full node set; off-island nodes sit at nominal voltage.
    let mut full_vm = vec![1.0; n];
    let mut full_va = vec![0.0; n];
    for (li, &gi) in island_nodes.iter().enumerate() {
        full_vm[gi] = vm[li];
        full_va[gi] = va[li];
    }

    // Branch currents and from-end flows.
    let mut line_current = vec![0.0; n_case_lines];
    let mut line_flow_p = vec![0.0; n_case_lines];
    for e in &graph.edges {
        if graph.island[e.from_node] != slack_island {
            continue;
        }
        let vf = Complex::from_polar(full_vm[e.from_node], full_va[e.from_node]);
        let vt = Complex::from_polar(full_vm[e.to_node], full_va[e.to_node]);
        let ys = Complex::new(e.r, e.x).inv();
        let ysh = Complex::new(0.0, e.b / 2.0);
        let i_from = ys * (vf - vt) + ysh * vf;
        let i_to = ys * (vt - vf) + ysh * vt;
        let idx = case.line_index(e.line).expect("edge line exists in case");
        line_current[idx] = i_from.norm().max(i_to.norm());
        line_flow_p[idx] = (vf * i_from.conj()).re * options.mva_base;
    }

    let (p_calc, q_calc) = calc(&vm, &va);

    Ok(PowerFlowSolution {
        voltage_magnitude: full_vm,
        voltage_angle: full_va,
        line_current,
        line_flow_p,
        slack_p: p_calc[slack_local],
        slack_q: q_calc[slack_local],
        mismatch_norm,
        converged: true,
        iterations,
        nodes: graph.nodes.clone(),
    })
}
