//! Uniform 1-D mesh over (0, L) with homogeneous Dirichlet boundary,
//! the discrete W^{1,p} seminorm and nodal quadrature.
//!
//! Interior nodes are x_i = i h for i = 1..n with h = L/(n+1); the boundary
//! values u(0) = u(L) = 0 are implicit. The discrete energy is built from
//! edge differences, so the seminorm sums over the n+1 edges including the
//! two boundary edges.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform mesh over (0, L) with `n` interior nodes and spacing `h = L/(n+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    length: f64,
    n: usize,
    h: f64,
}

impl Grid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::invalid(format!("domain length must be positive, got {length}")));
        }
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 interior nodes, got {n}")));
        }
        let h = length / (n as f64 + 1.0);
        Ok(Grid { length, n, h })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Interior node count.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Coordinate of interior node `i` (0-based index into a `Field`).
    pub fn node_x(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.h
    }
}

/// Nodal values at the interior nodes of a grid; boundary values are
/// implicitly zero. Also carries the weight samples f, g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("field contains non-finite entries"));
        }
        Ok(Field { values })
    }

    pub fn zeros(n: usize) -> Self {
        Field { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, v: f64) -> Self {
        Field { values: vec![v; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scaled(&self, t: f64) -> Field {
        Field { values: self.values.iter().map(|v| t * v).collect() }
    }

    /// Nodal absolute value.
    pub fn abs(&self) -> Field {
        Field { values: self.values.iter().map(|v| v.abs()).collect() }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn axpy(&self, alpha: f64, other: &Field) -> Field {
        Field {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(u, v)| u + alpha * v)
                .collect(),
        }
    }

    /// Discrete L^2 norm (with quadrature weight h).
    pub fn l2_norm(&self, grid: &Grid) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * grid.h()).sqrt()
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.values.len() != grid.n() {
            return Err(Error::GridMismatch { field: self.values.len(), grid: grid.n() });
        }
        Ok(())
    }
}

/// Edge differences (u_{i+1} - u_i)/h over all n+1 edges, with the implicit
/// zero boundary values.
pub(crate) fn edge_slopes(grid: &Grid, u: &Field) -> Vec<f64> {
    let n = grid.n();
    let h = grid.h();
    let v = u.values();
    let mut d = Vec::with_capacity(n + 1);
    d.push(v[0] / h);
    for i in 0..n - 1 {
        d.push((v[i + 1] - v[i]) / h);
    }
    d.push(-v[n - 1] / h);
    d
}

/// p-th power of the discrete W^{1,p} seminorm: sum over edges of |du/h|^p h.
pub fn seminorm_w1p_pow(grid: &Grid, u: &Field, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::invalid(format!("exponent p must exceed 1, got {p}")));
    }
    u.check_grid(grid)?;
    let h = grid.h();
    Ok(edge_slopes(grid, u).iter().map(|d| d.abs().powf(p) * h).sum())
}

/// Discrete W^{1,p} seminorm: (sum over edges of |du/h|^p h)^{1/p}.
pub fn seminorm_w1p(grid: &Grid, u: &Field, p: f64) -> Result<f64> {
    Ok(seminorm_w1p_pow(grid, u, p)?.powf(1.0 / p))
}

/// Nodal rectangle-rule quadrature of w |u|^s over the interior nodes.
/// May be negative when w changes sign.
pub fn integrate_weighted_power(grid: &Grid, w: &Field, u: &Field, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::invalid(format!("power s must be positive, got {s}")));
    }
    w.check_grid(grid)?;
    u.check_grid(grid)?;
    let h = grid.h();
    Ok(w
        .values()
        .iter()
        .zip(u.values())
        .map(|(wi, ui)| wi * ui.abs().powf(s) * h)
        .sum())
}

/// |u|^{s-2} u with the continuous extension 0 at u = 0 (needed for s < 2).
pub(crate) fn signed_power(u: f64, s: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.abs().powf(s - 2.0) * u
    }
}

/// Serialize a field as CSV rows (x, value) including the boundary zeros.
pub fn field_to_csv(grid: &Grid, u: &Field) -> String {
    let mut out = String::from("x,value\n");
    out.push_str("0,0\n");
    for (i, v) in u.values().iter().enumerate() {
        out.push_str(&format!("{},{}\n", grid.node_x(i), v));
    }
    out.push_str(&format!("{},0\n", grid.length()));
    out
}

/// Parse a field from CSV rows (x, value); boundary rows are dropped.
pub fn field_from_csv(grid: &Grid, text: &str) -> Result<Field> {
    let mut vals = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('x') {
            continue;
        }
        let mut parts = line.split(',');
        let x: f64 = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Config(format!("bad CSV field row {}", lineno + 1)))?;
        let v: f64 = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Config(format!("bad CSV field row {}", lineno + 1)))?;
        if x <= 0.0 || x >= grid.length() {
            continue; // boundary rows
        }
        vals.push(v);
    }
    if vals.len() != grid.n() {
        return Err(Error::GridMismatch { field: vals.len(), grid: grid.n() });
    }
    Field::new(vals)
}
