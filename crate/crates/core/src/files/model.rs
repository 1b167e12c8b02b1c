//! Model files: dimensions `n`, `m`, `p`, row-major matrices `a`, `b`,
//! optional `c` (identity when absent), optional bounds arrays, and an
//! optional `residual` recorded by identification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statespace::{Matrix, StateSpaceModel, Vector};

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    n: usize,
    m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    a: Vec<f64>,
    b: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    state_lo: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    state_hi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_lo: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_hi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
}

fn expect_len(what: &str, values: &[f64], expected: usize) -> Result<()> {
    if values.len() != expected {
        return Err(Error::invalid(format!(
            "`{what}` has {} entries, expected {expected}",
            values.len()
        )));
    }
    Ok(())
}

pub fn parse_model(src: &str) -> Result<StateSpaceModel> {
    let raw: RawModel = toml::from_str(src).map_err(|e| {
        let line = e
            .span()
            .map(|s| super::line_of(src, s.start))
            .unwrap_or(1);
        Error::parse(line, e.message().to_string())
    })?;
    let n = raw.n;
    let m = raw.m;
    if n == 0 || m == 0 {
        return Err(Error::invalid("model dimensions n and m must be at least 1"));
    }
    expect_len("a", &raw.a, n * n)?;
    expect_len("b", &raw.b, n * m)?;
    let mut model = StateSpaceModel::new(
        Matrix::from_row_slice(n, n, &raw.a),
        Matrix::from_row_slice(n, m, &raw.b),
    )?;
    if let Some(c) = &raw.c {
        let p = raw.p.unwrap_or(n);
        if p == 0 {
            return Err(Error::invalid("model dimension p must be at least 1"));
        }
        expect_len("c", c, p * n)?;
        model = model.with_output(Matrix::from_row_slice(p, n, c))?;
    } else if let Some(p) = raw.p {
        if p != n {
            return Err(Error::invalid(format!(
                "p = {p} without `c`: the default output map is the {n}x{n} identity"
            )));
        }
    }
    match (&raw.state_lo, &raw.state_hi) {
        (None, None) => {}
        (Some(lo), Some(hi)) => {
            expect_len("state_lo", lo, n)?;
            expect_len("state_hi", hi, n)?;
            model = model.with_state_bounds(
                Vector::from_vec(lo.clone()),
                Vector::from_vec(hi.clone()),
            )?;
        }
        _ => {
            return Err(Error::invalid(
                "state bounds need both `state_lo` and `state_hi`",
            ))
        }
    }
    match (&raw.input_lo, &raw.input_hi) {
        (None, None) => {}
        (Some(lo), Some(hi)) => {
            expect_len("input_lo", lo, m)?;
            expect_len("input_hi", hi, m)?;
            model = model.with_input_bounds(
                Vector::from_vec(lo.clone()),
                Vector::from_vec(hi.clone()),
            )?;
        }
        _ => {
            return Err(Error::invalid(
                "input bounds need both `input_lo` and `input_hi`",
            ))
        }
    }
    Ok(model)
}

fn row_major(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn bounds_arrays(lo: &Vector, hi: &Vector) -> Option<(Vec<f64>, Vec<f64>)> {
    let all_unbounded = lo.iter().all(|v| *v == f64::NEG_INFINITY)
        && hi.iter().all(|v| *v == f64::INFINITY);
    if all_unbounded {
        None
    } else {
        Some((
            lo.iter().copied().collect(),
            hi.iter().copied().collect(),
        ))
    }
}

/// Render a model to TOML. `parse_model(emit_model(m, _))` equals `m`.
pub fn emit_model(model: &StateSpaceModel, residual: Option<f64>) -> String {
    let n = model.state_dim();
    let identity_c = model.c() == &Matrix::identity(n, n);
    let state = bounds_arrays(model.state_bounds().lo(), model.state_bounds().hi());
    let input = bounds_arrays(model.input_bounds().lo(), model.input_bounds().hi());
    let raw = RawModel {
        n,
        m: model.input_dim(),
        p: if identity_c {
            None
        } else {
            Some(model.output_dim())
        },
        a: row_major(model.a()),
        b: row_major(model.b()),
        c: if identity_c {
            None
        } else {
            Some(row_major(model.c()))
        },
        state_lo: state.as_ref().map(|(lo, _)| lo.clone()),
        state_hi: state.map(|(_, hi)| hi),
        input_lo: input.as_ref().map(|(lo, _)| lo.clone()),
        input_hi: input.map(|(_, hi)| hi),
        residual,
    };
    toml::to_string(&raw).expect("model serialization cannot fail")
}
