//! Discrete-time linear state-space models.
//!
//! The model is `x(t+1) = A x(t) + B u(t)` with componentwise box constraints
//! on states and inputs, plus an output map `y = C x` (identity by default).
//! On top of the plain step dynamics this module provides spectral-radius
//! stability checks, Kalman rank tests for controllability and observability,
//! and least-squares identification of `(A, B)` from recorded trajectories.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff for numerical rank: `dim * sigma_max * RANK_RTOL`.
pub const RANK_RTOL: f64 = 1e-12;

fn check_finite_mat(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_finite_vec(v: &Vector, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Axis-aligned box, one closed interval per dimension. Components may be
/// infinite, which disables clamping for that component.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    lo: Vector,
    hi: Vector,
}

impl Bounds {
    pub fn new(lo: Vector, hi: Vector) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension {
                context: "bounds",
                expected: lo.len().to_string(),
                got: hi.len().to_string(),
            });
        }
        for i in 0..lo.len() {
            if lo[i].is_nan() || hi[i].is_nan() {
                return Err(Error::NonFinite("bounds"));
            }
            if lo[i] > hi[i] {
                return Err(Error::InvalidBounds { component: i });
            }
        }
        Ok(Bounds { lo, hi })
    }

    /// `(-inf, +inf)` in every component.
    pub fn unbounded(dim: usize) -> Self {
        Bounds {
            lo: Vector::from_element(dim, f64::NEG_INFINITY),
            hi: Vector::from_element(dim, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &Vector {
        &self.lo
    }

    pub fn hi(&self) -> &Vector {
        &self.hi
    }

    pub fn contains(&self, v: &Vector) -> bool {
        (0..v.len()).all(|i| v[i] >= self.lo[i] && v[i] <= self.hi[i])
    }

    /// Clamp `v` into the box componentwise. Returns true if anything moved.
    pub fn clamp(&self, v: &mut Vector) -> bool {
        let mut clamped = false;
        for i in 0..v.len() {
            if v[i] < self.lo[i] {
                v[i] = self.lo[i];
                clamped = true;
            } else if v[i] > self.hi[i] {
                v[i] = self.hi[i];
                clamped = true;
            }
        }
        clamped
    }
}

/// Result of one constrained step: the successor state and whether the state
/// box was hit.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Vector,
    pub clamped: bool,
}

/// `x(t+1) = A x(t) + B u(t)`, `y = C x`, with state box X and input box U.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceModel {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    state_bounds: Bounds,
    input_bounds: Bounds,
}

impl StateSpaceModel {
    /// Build a model with identity output map and unbounded X, U.
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension {
                context: "state matrix A",
                expected: format!("{0}x{0}", a.nrows()),
                got: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        if a.nrows() == 0 {
            return Err(Error::invalid("state dimension must be at least 1"));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::Dimension {
                context: "input matrix B",
                expected: format!("{} rows", a.nrows()),
                got: format!("{} rows", b.nrows()),
            });
        }
        if b.ncols() == 0 {
            return Err(Error::invalid("input dimension must be at least 1"));
        }
        check_finite_mat(&a, "state matrix A")?;
        check_finite_mat(&b, "input matrix B")?;
        let n = a.nrows();
        Ok(StateSpaceModel {
            a,
            b,
            c: Matrix::identity(n, n),
            state_bounds: Bounds::unbounded(n),
            input_bounds: Bounds::unbounded(0),
        }
        .fix_input_bounds())
    }

    fn fix_input_bounds(mut self) -> Self {
        self.input_bounds = Bounds::unbounded(self.b.ncols());
        self
    }

    pub fn with_output(mut self, c: Matrix) -> Result<Self> {
        if c.ncols() != self.a.nrows() {
            return Err(Error::Dimension {
                context: "output matrix C",
                expected: format!("{} columns", self.a.nrows()),
                got: format!("{} columns", c.ncols()),
            });
        }
        if c.nrows() == 0 {
            return Err(Error::invalid("output dimension must be at least 1"));
        }
        check_finite_mat(&c, "output matrix C")?;
        self.c = c;
        Ok(self)
    }

    pub fn with_state_bounds(mut self, lo: Vector, hi: Vector) -> Result<Self> {
        let bounds = Bounds::new(lo, hi)?;
        if bounds.dim() != self.state_dim() {
            return Err(Error::Dimension {
                context: "state bounds",
                expected: self.state_dim().to_string(),
                got: bounds.dim().to_string(),
            });
        }
        self.state_bounds = bounds;
        Ok(self)
    }

    pub fn with_input_bounds(mut self, lo: Vector, hi: Vector) -> Result<Self> {
        let bounds = Bounds::new(lo, hi)?;
        if bounds.dim() != self.input_dim() {
            return Err(Error::Dimension {
                context: "input bounds",
                expected: self.input_dim().to_string(),
                got: bounds.dim().to_string(),
            });
        }
        self.input_bounds = bounds;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn state_bounds(&self) -> &Bounds {
        &self.state_bounds
    }

    pub fn input_bounds(&self) -> &Bounds {
        &self.input_bounds
    }

    /// One step of the difference equation. The successor is clamped into the
    /// state box; the input must already lie inside the input box.
    pub fn step(&self, x: &Vector, u: &Vector) -> Result<Step> {
        if x.len() != self.state_dim() {
            return Err(Error::Dimension {
                context: "state vector",
                expected: self.state_dim().to_string(),
                got: x.len().to_string(),
            });
        }
        if u.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "control vector",
                expected: self.input_dim().to_string(),
                got: u.len().to_string(),
            });
        }
        check_finite_vec(x, "state vector")?;
        check_finite_vec(u, "control vector")?;
        for i in 0..u.len() {
            if u[i] < self.input_bounds.lo[i] || u[i] > self.input_bounds.hi[i] {
                return Err(Error::InputOutOfBounds { component: i });
            }
        }
        let mut next = &self.a * x + &self.b * u;
        let clamped = self.state_bounds.clamp(&mut next);
        Ok(Step {
            state: next,
            clamped,
        })
    }

    /// Drive the model with a fixed input sequence, collecting the visited
    /// states into a [`Trajectory`].
    pub fn simulate(&self, x0: &Vector, inputs: &[Vector]) -> Result<Trajectory> {
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(x0.clone());
        let mut x = x0.clone();
        for u in inputs {
            x = self.step(&x, u)?.state;
            states.push(x.clone());
        }
        Trajectory::new(states, inputs.to_vec())
    }

    /// `[B | AB | ... | A^(n-1) B]`, size n x (n*m).
    pub fn controllability_matrix(&self) -> Matrix {
        let n = self.state_dim();
        let m = self.input_dim();
        let mut result = Matrix::zeros(n, n * m);
        let mut term = self.b.clone();
        for k in 0..n {
            result.view_mut((0, k * m), (n, m)).copy_from(&term);
            if k + 1 < n {
                term = &self.a * term;
            }
        }
        result
    }

    pub fn is_controllable(&self) -> bool {
        numerical_rank(&self.controllability_matrix(), self.state_dim()) == self.state_dim()
    }

    /// `[C; CA; ...; CA^(n-1)]`, size (p*n) x n.
    pub fn observability_matrix(&self) -> Matrix {
        let n = self.state_dim();
        let p = self.output_dim();
        let mut result = Matrix::zeros(p * n, n);
        let mut term = self.c.clone();
        for k in 0..n {
            result.view_mut((k * p, 0), (p, n)).copy_from(&term);
            if k + 1 < n {
                term *= &self.a;
            }
        }
        result
    }

    pub fn is_observable(&self) -> bool {
        numerical_rank(&self.observability_matrix(), self.state_dim()) == self.state_dim()
    }
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension {
            context: "spectral radius",
            expected: format!("{0}x{0}", a.nrows()),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    check_finite_mat(a, "spectral radius input")?;
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let eigs = a.clone().complex_eigenvalues();
    Ok(eigs.iter().map(|e| e.norm()).fold(0.0, f64::max))
}

/// Discrete-time stability: spectral radius strictly below one.
pub fn is_stable(a: &Matrix) -> Result<bool> {
    Ok(spectral_radius(a)? < 1.0)
}

/// Numerical rank from singular values, cutoff `scale_dim * sigma_max * RANK_RTOL`.
pub fn numerical_rank(m: &Matrix, scale_dim: usize) -> usize {
    let svd = SVD::new(m.clone(), false, false);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let threshold = scale_dim as f64 * sigma_max * RANK_RTOL;
    svd.singular_values.iter().filter(|s| **s > threshold).count()
}

/// A recorded run: `inputs[t]` drives the transition `states[t] -> states[t+1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    states: Vec<Vector>,
    inputs: Vec<Vector>,
}

impl Trajectory {
    pub fn new(states: Vec<Vector>, inputs: Vec<Vector>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Empty("trajectory states"));
        }
        if inputs.len() + 1 != states.len() {
            return Err(Error::Dimension {
                context: "trajectory",
                expected: format!("{} inputs", states.len() - 1),
                got: format!("{} inputs", inputs.len()),
            });
        }
        let n = states[0].len();
        if states.iter().any(|x| x.len() != n) {
            return Err(Error::Dimension {
                context: "trajectory states",
                expected: n.to_string(),
                got: "mixed lengths".to_string(),
            });
        }
        if let Some(first) = inputs.first() {
            let m = first.len();
            if inputs.iter().any(|u| u.len() != m) {
                return Err(Error::Dimension {
                    context: "trajectory inputs",
                    expected: m.to_string(),
                    got: "mixed lengths".to_string(),
                });
            }
        }
        for x in &states {
            check_finite_vec(x, "trajectory state")?;
        }
        for u in &inputs {
            check_finite_vec(u, "trajectory input")?;
        }
        Ok(Trajectory { states, inputs })
    }

    pub fn states(&self) -> &[Vector] {
        &self.states
    }

    pub fn inputs(&self) -> &[Vector] {
        &self.inputs
    }

    /// Number of recorded transitions.
    pub fn transitions(&self) -> usize {
        self.inputs.len()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, |u| u.len())
    }
}

/// Output of [`identify`]: the fitted matrices and the root-mean-square
/// one-step residual over all state components.
#[derive(Clone, Debug)]
pub struct Identified {
    pub a: Matrix,
    pub b: Matrix,
    pub residual: f64,
}

/// Least-squares fit of `(A, B)` minimizing `sum ||x(t+1) - A x(t) - B u(t)||^2`
/// via a rank-revealing SVD of the stacked regressors.
pub fn identify(traj: &Trajectory) -> Result<Identified> {
    let n = traj.state_dim();
    let m = traj.input_dim();
    if m == 0 {
        return Err(Error::Empty("trajectory inputs"));
    }
    let needed = n + m + 1;
    if traj.states.len() < needed {
        return Err(Error::InsufficientSamples {
            context: "identification",
            needed,
            got: traj.states.len(),
        });
    }
    let t = traj.transitions();

    // Row t of Z is [x(t)^T  u(t)^T]; row t of Y is x(t+1)^T.
    let mut z = Matrix::zeros(t, n + m);
    let mut y = Matrix::zeros(t, n);
    for k in 0..t {
        for i in 0..n {
            z[(k, i)] = traj.states[k][i];
            y[(k, i)] = traj.states[k + 1][i];
        }
        for j in 0..m {
            z[(k, n + j)] = traj.inputs[k][j];
        }
    }

    let svd = SVD::new(z.clone(), true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let threshold = (n + m) as f64 * sigma_max * RANK_RTOL;
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > threshold)
        .count();
    if rank < n + m {
        return Err(Error::Unidentifiable(format!(
            "regressor rank {rank} below required {}",
            n + m
        )));
    }

    // Y ~ Z W with W = [A^T; B^T].
    let w = svd
        .solve(&y, threshold)
        .map_err(|e| Error::Unidentifiable(e.to_string()))?;
    let a = w.rows(0, n).transpose();
    let b = w.rows(n, m).transpose();

    let r = &z * &w - &y;
    let residual = (r.norm_squared() / (t * n) as f64).sqrt();
    Ok(Identified { a, b, residual })
}
