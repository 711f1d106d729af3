//! Bundled desk-scale cases and chronics builders.
//!
//! These are small hand-authored networks used by the test suite, the
//! `gen-fixtures` CLI subcommand, and the desk experiment.

/// Two-bus analytic case: slack at substation 0, a lossless line (r=0,
/// x=0.1 p.u.) to a single load bus. Matches the closed-form two-bus solution.
pub const TWO_BUS_CASE: &str = "\
# two-bus analytic case
[buses]
0 0.90 1.10 138.0
1 0.70 1.10 138.0
[substations]
0
1
[lines]
0 0 1 0.0 0.1 0.0 10.0
[generators]
0 0 0.0 1000.0
[loads]
0 1
[slack]
bus 0
mva_base 100.0
";

/// Five-bus desk case: slack plus one remote generator, three loads, and a
/// meshed six-line network. Substation 3 hosts a four-element junction whose
/// busbar split relieves the 0-1/1-3 corridor under stress.
pub const FIVE_BUS_CASE: &str = "\
# five-bus desk case
[buses]
0 0.92 1.05 138.0
1 0.92 1.05 138.0
2 0.92 1.05 138.0
3 0.92 1.05 138.0
4 0.92 1.05 138.0
[substations]
0
1
2
3
4
[lines]
# id from to r     x     b     i_max
0    0    1  0.010 0.060 0.020 1.20
1    0    3  0.020 0.120 0.020 1.00
2    1    2  0.020 0.100 0.020 1.00
3    1    3  0.030 0.180 0.020 0.60
4    2    4  0.020 0.100 0.020 1.00
5    3    4  0.020 0.120 0.020 0.80
[generators]
# id sub p_min p_max
0    0   0.0   500.0
1    2   0.0   200.0
[loads]
# id sub
0    1
1    3
2    4
[slack]
bus 0
mva_base 100.0
";

/// Fourteen-bus-style case: topology and impedance magnitudes in the style of
/// the classic 14-bus test network, with uniform voltage limits and generous
/// thermal ratings. Used for solver convergence checks only.
pub const FOURTEEN_BUS_CASE: &str = "\
# fourteen-bus-style case
[buses]
0 0.94 1.06 138.0
1 0.94 1.06 138.0
2 0.94 1.06 138.0
3 0.94 1.06 138.0
4 0.94 1.06 138.0
5 0.94 1.06 69.0
6 0.94 1.06 69.0
7 0.94 1.06 69.0
8 0.94 1.06 69.0
9 0.94 1.06 69.0
10 0.94 1.06 69.0
11 0.94 1.06 69.0
12 0.94 1.06 69.0
13 0.94 1.06 69.0
[substations]
0
1
2
3
4
5
6
7
8
9
10
11
12
13
[lines]
# id from to r       x       b      i_max
0    0    1  0.01938 0.05917 0.0528 3.0
1    0    4  0.05403 0.22304 0.0492 3.0
2    1    2  0.04699 0.19797 0.0438 3.0
3    1    3  0.05811 0.17632 0.0340 3.0
4    1    4  0.05695 0.17388 0.0346 3.0
5    2    3  0.06701 0.17103 0.0128 3.0
6    3    4  0.01335 0.04211 0.0000 3.0
7    3    6  0.00000 0.20912 0.0000 3.0
8    3    8  0.00000 0.55618 0.0000 3.0
9    4    5  0.00000 0.25202 0.0000 3.0
10   5    10 0.09498 0.19890 0.0000 3.0
11   5    11 0.12291 0.25581 0.0000 3.0
12   5    12 0.06615 0.13027 0.0000 3.0
13   6    7  0.00000 0.17615 0.0000 3.0
14   6    8  0.00000 0.11001 0.0000 3.0
15   8    9  0.03181 0.08450 0.0000 3.0
16   8    13 0.12711 0.27038 0.0000 3.0
17   9    10 0.08205 0.19207 0.0000 3.0
18   11   12 0.22092 0.19988 0.0000 3.0
19   12   13 0.17093 0.34802 0.0000 3.0
[generators]
# id sub p_min p_max
0    0   0.0   600.0
1    1   0.0   100.0
2    2   0.0   100.0
3    5   0.0   100.0
4    7   0.0   100.0
[loads]
# id sub
0    1
1    2
2    3
3    4
4    5
5    8
6    9
7    10
8    11
9    12
10   13
[slack]
bus 0
mva_base 100.0
";

use crate::chronics::Chronics;

/// Mild chronics for the five-bus case: low, flat demand served mostly by the
/// slack. Feasible at every row under the base topology.
pub fn five_bus_mild_chronics(horizon: usize) -> Chronics {
    let mut rows_load = Vec::with_capacity(horizon);
    let mut rows_gen_p = Vec::with_capacity(horizon);
    let mut rows_gen_q = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let wobble = 1.0 + 0.05 * ((t as f64) * 0.13).sin();
        rows_load.push(vec![20.0 * wobble, 25.0 * wobble, 15.0 * wobble]);
        rows_gen_p.push(vec![30.5 * wobble, 30.0 * wobble]);
        rows_gen_q.push(vec![0.0, 5.0]);
    }
    Chronics {
        step_minutes: 5.0,
        horizon,
        load_ids: vec![0, 1, 2],
        gen_ids: vec![0, 1],
        load_p: rows_load,
        gen_p_ref: rows_gen_p,
        gen_q: rows_gen_q,
    }
}

/// Stressed chronics for the five-bus case: a sustained demand plateau that
/// overloads the 0-3 corridor under the base topology while remaining
/// solvable. Moving the line-5 end at substation 3 onto the spare busbar
/// reroutes the flow and clears the overload, so the episode rewards
/// topologies that reconfigure the bus-3 junction.
pub fn five_bus_stressed_chronics(horizon: usize) -> Chronics {
    let mut rows_load = Vec::with_capacity(horizon);
    let mut rows_gen_p = Vec::with_capacity(horizon);
    let mut rows_gen_q = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let ramp = (t as f64 / 24.0).min(1.0);
        let wobble = 1.0 + 0.03 * ((t as f64) * 0.21).sin();
        let scale = (0.55 + 0.45 * ramp) * wobble;
        rows_load.push(vec![10.0 * scale, 120.0 * scale, 90.0 * scale]);
        rows_gen_p.push(vec![202.0 * scale, 20.0 * scale]);
        rows_gen_q.push(vec![0.0, 5.0]);
    }
    Chronics {
        step_minutes: 5.0,
        horizon,
        load_ids: vec![0, 1, 2],
        gen_ids: vec![0, 1],
        load_p: rows_load,
        gen_p_ref: rows_gen_p,
        gen_q: rows_gen_q,
    }
}

/// Light chronics for the fourteen-bus-style case.
pub fn fourteen_bus_light_chronics(horizon: usize) -> Chronics {
    let load_mw = [21.7, 94.2, 47.8, 7.6, 11.2, 29.5, 9.0, 3.5, 6.1, 13.5, 14.9];
    let mut rows_load = Vec::with_capacity(horizon);
    let mut rows_gen_p = Vec::with_capacity(horizon);
    let mut rows_gen_q = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let wobble = 1.0 + 0.03 * ((t as f64) * 0.17).sin();
        rows_load.push(load_mw.iter().map(|p| p * 0.6 * wobble).collect());
        rows_gen_p.push(vec![0.0, 30.0, 30.0, 20.0, 20.0]);
        rows_gen_q.push(vec![0.0, 10.0, 10.0, 5.0, 5.0]);
    }
    Chronics {
        step_minutes: 5.0,
        horizon,
        load_ids: (0..11).collect(),
        gen_ids: (0..5).collect(),
        load_p: rows_load,
        gen_p_ref: rows_gen_p,
        gen_q: rows_gen_q,
    }
}
