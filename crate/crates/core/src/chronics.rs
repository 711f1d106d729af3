//! Time-series of load demands and generator references driving an episode.
//!
//! Chronics files are headered CSV with one row per step and columns
//! `load_<id>_p`, `gen_<id>_p`, `gen_<id>_q` (MW / MVAr). Optional leading
//! directive lines `# dt_minutes=<v>` and `# horizon=<n>` carry the step
//! duration and horizon; the horizon defaults to the row count.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chronics {
    pub step_minutes: f64,
    pub horizon: usize,
    pub load_ids: Vec<usize>,
    pub gen_ids: Vec<usize>,
    /// rows x loads, MW
    pub load_p: Vec<Vec<f64>>,
    /// rows x generators, MW
    pub gen_p_ref: Vec<Vec<f64>>,
    /// rows x generators, MVAr
    pub gen_q: Vec<Vec<f64>>,
}

impl Chronics {
    pub fn n_rows(&self) -> usize {
        self.load_p.len()
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.n_rows() < self.horizon {
            return Err(CoreError::invariant(
                "chronics",
                format!("row count {} < horizon {}", self.n_rows(), self.horizon),
            ));
        }
        for (i, row) in self.load_p.iter().enumerate() {
            if row.len() != self.load_ids.len() {
                return Err(CoreError::invariant("chronics", format!("ragged load row {i}")));
            }
            if row.iter().any(|&p| p < 0.0) {
                return Err(CoreError::invariant("chronics", format!("negative demand in row {i}")));
            }
        }
        for rows in [&self.gen_p_ref, &self.gen_q] {
            if rows.len() != self.n_rows() {
                return Err(CoreError::invariant("chronics", "generator row count mismatch"));
            }
            for (i, row) in rows.iter().enumerate() {
                if row.len() != self.gen_ids.len() {
                    return Err(CoreError::invariant("chronics", format!("ragged generator row {i}")));
                }
            }
        }
        Ok(())
    }

    /// Renders the CSV form, including the directive lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# dt_minutes={}\n", self.step_minutes));
        out.push_str(&format!("# horizon={}\n", self.horizon));
        let mut header: Vec<String> = Vec::new();
        header.extend(self.load_ids.iter().map(|id| format!("load_{id}_p")));
        header.extend(self.gen_ids.iter().map(|id| format!("gen_{id}_p")));
        header.extend(self.gen_ids.iter().map(|id| format!("gen_{id}_q")));
        out.push_str(&header.join(","));
        out.push('\n');
        for t in 0..self.n_rows() {
            let mut row: Vec<String> = Vec::new();
            row.extend(self.load_p[t].iter().map(|v| format!("{v}")));
            row.extend(self.gen_p_ref[t].iter().map(|v| format!("{v}")));
            row.extend(self.gen_q[t].iter().map(|v| format!("{v}")));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Parses chronics CSV text.
pub fn load_chronics(text: &str) -> Result<Chronics, CoreError> {
    let mut step_minutes = 5.0;
    let mut horizon: Option<usize> = None;
    let mut header: Option<Vec<String>> = None;
    let mut data: Vec<Vec<f64>> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("dt_minutes=") {
                step_minutes = v
                    .trim()
                    .parse()
                    .map_err(|_| CoreError::parse(lineno, "invalid dt_minutes"))?;
            } else if let Some(v) = rest.strip_prefix("horizon=") {
                horizon = Some(
                    v.trim()
                        .parse()
                        .map_err(|_| CoreError::parse(lineno, "invalid horizon"))?,
                );
            }
            continue;
        }
        if header.is_none() {
            header = Some(line.split(',').map(|s| s.trim().to_string()).collect());
            continue;
        }
        let cols = header.as_ref().unwrap().len();
        let row: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|_| CoreError::parse(lineno, "invalid numeric field"))?;
        if row.len() != cols {
            return Err(CoreError::parse(
                lineno,
                format!("expected {cols} columns, got {}", row.len()),
            ));
        }
        data.push(row);
    }

    let header = header.ok_or_else(|| CoreError::parse(0, "missing header row"))?;
    let mut load_cols: Vec<(usize, usize)> = Vec::new(); // (load id, column)
    let mut gen_p_cols: Vec<(usize, usize)> = Vec::new();
    let mut gen_q_cols: Vec<(usize, usize)> = Vec::new();
    for (c, name) in header.iter().enumerate() {
        if let Some(id) = name.strip_prefix("load_").and_then(|s| s.strip_suffix("_p")) {
            let id = id.parse().map_err(|_| CoreError::parse(1, format!("bad column '{name}'")))?;
            load_cols.push((id, c));
        } else if let Some(id) = name.strip_prefix("gen_").and_then(|s| s.strip_suffix("_p")) {
            let id = id.parse().map_err(|_| CoreError::parse(1, format!("bad column '{name}'")))?;
            gen_p_cols.push((id, c));
        } else if let Some(id) = name.strip_prefix("gen_").and_then(|s| s.strip_suffix("_q")) {
            let id = id.parse().map_err(|_| CoreError::parse(1, format!("bad column '{name}'")))?;
            gen_q_cols.push((id, c));
        } else {
            return Err(CoreError::parse(1, format!("unrecognized column '{name}'")));
        }
    }
    let gen_ids_p: Vec<usize> = gen_p_cols.iter().map(|(id, _)| *id).collect();
    let gen_ids_q: Vec<usize> = gen_q_cols.iter().map(|(id, _)| *id).collect();
    if gen_ids_p != gen_ids_q {
        return Err(CoreError::parse(1, "gen_*_p and gen_*_q column ids differ"));
    }

    let chron = Chronics {
        step_minutes,
        horizon: horizon.unwrap_or(data.len()),
        load_ids: load_cols.iter().map(|(id, _)| *id).collect(),
        gen_ids: gen_ids_p,
        load_p: data
            .iter()
            .map(|row| load_cols.iter().map(|&(_, c)| row[c]).collect())
            .collect(),
        gen_p_ref: data
            .iter()
            .map(|row| gen_p_cols.iter().map(|&(_, c)| row[c]).collect())
            .collect(),
        gen_q: data
            .iter()
            .map(|row| gen_q_cols.iter().map(|&(_, c)| row[c]).collect())
            .collect(),
    };
    chron.validate()?;
    Ok(chron)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn csv_round_trip() {
        let c = fixtures::five_bus_mild_chronics(12);
        let parsed = load_chronics(&c.to_csv()).unwrap();
        assert_eq!(parsed, c);
    }

    #[test]
    fn negative_demand_rejected() {
        let text = "# horizon=1\nload_0_p,gen_0_p,gen_0_q\n-1.0,0.0,0.0\n";
        assert!(load_chronics(text).is_err());
    }

    #[test]
    fn unknown_column_rejected() {
        let text = "bogus\n1.0\n";
        assert!(load_chronics(text).is_err());
    }
}
