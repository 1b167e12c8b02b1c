//! CSV inputs: multi-class traces (`tick,class_id,offered_load`) and recorded
//! trajectories (`t,x1..xn,u1..um`). Malformed rows abort with their line.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::statespace::{Trajectory, Vector};

/// Parse `tick,class_id,offered_load` rows. Per class, ticks must run
/// contiguously from 0. Blank lines and `#` comments are skipped.
pub fn parse_trace(src: &str) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut per_class: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (idx, raw_line) in src.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                line_no,
                format!("expected `tick,class_id,offered_load`, got {} fields", fields.len()),
            ));
        }
        let tick: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad tick `{}`", fields[0])))?;
        let class = fields[1].to_string();
        if class.is_empty() {
            return Err(Error::parse(line_no, "empty class id"));
        }
        let load: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad load `{}`", fields[2])))?;
        if !load.is_finite() || load < 0.0 {
            return Err(Error::parse(
                line_no,
                format!("load {load} must be finite and >= 0"),
            ));
        }
        let samples = per_class.entry(class.clone()).or_default();
        if tick as usize != samples.len() {
            return Err(Error::parse(
                line_no,
                format!(
                    "class `{class}`: tick {tick} out of order, expected {}",
                    samples.len()
                ),
            ));
        }
        samples.push(load);
    }
    if per_class.is_empty() {
        return Err(Error::Empty("trace file"));
    }
    Ok(per_class)
}

/// Parse a trajectory CSV. The header names the columns (`t,x1..xn,u1..um`);
/// the input columns of the final row are present but unused.
pub fn parse_trajectory(src: &str) -> Result<Trajectory> {
    let mut lines = src
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (header_line, header) = lines
        .next()
        .ok_or(Error::Empty("trajectory file"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.first() != Some(&"t") {
        return Err(Error::parse(header_line, "header must start with `t`"));
    }
    let n = columns.iter().filter(|c| c.starts_with('x')).count();
    let m = columns.iter().filter(|c| c.starts_with('u')).count();
    if n == 0 || m == 0 {
        return Err(Error::parse(
            header_line,
            "header needs at least one state column `x…` and one input column `u…`",
        ));
    }
    if columns.len() != 1 + n + m {
        return Err(Error::parse(header_line, "unrecognized columns in header"));
    }

    let mut states: Vec<Vector> = Vec::new();
    let mut inputs: Vec<Vector> = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 1 + n + m {
            return Err(Error::parse(
                line_no,
                format!("expected {} fields, got {}", 1 + n + m, fields.len()),
            ));
        }
        let tick: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad tick `{}`", fields[0])))?;
        if tick as usize != states.len() {
            return Err(Error::parse(
                line_no,
                format!("tick {tick} out of order, expected {}", states.len()),
            ));
        }
        let parse_f64 = |field: &str| -> Result<f64> {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad number `{field}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite value `{field}`")));
            }
            Ok(v)
        };
        let state: Vec<f64> = fields[1..1 + n]
            .iter()
            .map(|f| parse_f64(f))
            .collect::<Result<_>>()?;
        let input: Vec<f64> = fields[1 + n..]
            .iter()
            .map(|f| parse_f64(f))
            .collect::<Result<_>>()?;
        states.push(Vector::from_vec(state));
        inputs.push(Vector::from_vec(input));
    }
    if states.is_empty() {
        return Err(Error::Empty("trajectory file"));
    }
    // The last row's input never drives a transition.
    inputs.pop();
    Trajectory::new(states, inputs)
}

/// Render a trajectory as CSV; the inverse of [`parse_trajectory`].
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.state_dim();
    let m = traj.input_dim().max(1);
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    for j in 1..=m {
        out.push_str(&format!(",u{j}"));
    }
    out.push('\n');
    for (t, state) in traj.states().iter().enumerate() {
        out.push_str(&t.to_string());
        for v in state.iter() {
            out.push_str(&format!(",{v}"));
        }
        match traj.inputs().get(t) {
            Some(input) => {
                for v in input.iter() {
                    out.push_str(&format!(",{v}"));
                }
            }
            // Placeholder inputs on the final row keep the column count fixed.
            None => {
                for _ in 0..m {
                    out.push_str(",0");
                }
            }
        }
        out.push('\n');
    }
    out
}
