//! The Kirchhoff coefficient M in its three variants, its antiderivative,
//! the energy functional J and its exact discrete gradient.
//!
//! The plain coefficient is M(s) = a s^{p-1} + b. The truncated variant
//! freezes M above a cut, the modified variant replaces M below a cut by a
//! power law that joins continuously. All antiderivatives are closed form.

use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid};
use serde::{Deserialize, Serialize};

/// Problem data for Eq.-type runs: exponents 1 < q < p < r, Kirchhoff
/// coefficients a >= 0 and b > 0, load lambda >= 0, nodal weights f and g.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemParams {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub f: Field,
    pub g: Field,
}

impl ProblemParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p: f64,
        q: f64,
        r: f64,
        a: f64,
        b: f64,
        lambda: f64,
        f: Field,
        g: Field,
    ) -> Result<Self> {
        if !(1.0 < q && q < p && p < r) {
            return Err(Error::invalid(format!(
                "exponents must satisfy 1 < q < p < r, got q={q}, p={p}, r={r}"
            )));
        }
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("coefficient a must be nonnegative, got {a}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::invalid(format!("coefficient b must be positive, got {b}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be nonnegative, got {lambda}")));
        }
        if f.len() != g.len() {
            return Err(Error::invalid("weight fields f and g must share a grid"));
        }
        Ok(ProblemParams { p, q, r, a, b, lambda, f, g })
    }

    /// The plain Kirchhoff model with this problem's coefficients.
    pub fn plain_model(&self) -> KirchhoffModel {
        KirchhoffModel::plain(self.a, self.b)
    }

    /// max over nodes of the positive part of f.
    pub fn f_plus_max(&self) -> f64 {
        self.f.max().max(0.0)
    }

    /// max over nodes of the positive part of g.
    pub fn g_plus_max(&self) -> f64 {
        self.g.max().max(0.0)
    }
}

/// Which branch of the Kirchhoff coefficient is in force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelVariant {
    Plain,
    /// M frozen at its value at `k_cut` for s > k_cut.
    Truncated { k_cut: f64 },
    /// Power-law lower piece a k̂^{(p²-q)/p} s^{(q-p)/p} + b below `k_hat`;
    /// the exponent q is fixed at construction.
    Modified { k_hat: f64, q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KirchhoffModel {
    pub variant: ModelVariant,
    pub a: f64,
    pub b: f64,
}

impl KirchhoffModel {
    pub fn plain(a: f64, b: f64) -> Self {
        KirchhoffModel { variant: ModelVariant::Plain, a, b }
    }

    pub fn truncated(a: f64, b: f64, k_cut: f64) -> Self {
        KirchhoffModel { variant: ModelVariant::Truncated { k_cut }, a, b }
    }

    pub fn modified(a: f64, b: f64, k_hat: f64, q: f64) -> Self {
        KirchhoffModel { variant: ModelVariant::Modified { k_hat, q }, a, b }
    }

    fn plain_m(&self, p: f64, s: f64) -> f64 {
        self.a * s.powf(p - 1.0) + self.b
    }

    /// M(s) for the given variant.
    pub fn m_value(&self, p: f64, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::invalid(format!("M argument must be nonnegative, got {s}")));
        }
        match self.variant {
            ModelVariant::Plain => Ok(self.plain_m(p, s)),
            ModelVariant::Truncated { k_cut } => {
                Ok(self.plain_m(p, s.min(k_cut)))
            }
            ModelVariant::Modified { k_hat, q } => {
                if s > k_hat {
                    Ok(self.plain_m(p, s))
                } else if s == 0.0 {
                    // exponent (q-p)/p < 0
                    Err(Error::RangeError("modified M(s) diverges at s = 0".into()))
                } else {
                    Ok(self.a * k_hat.powf((p * p - q) / p) * s.powf((q - p) / p) + self.b)
                }
            }
        }
    }

    /// Antiderivative of M with M̂(0) = 0, in closed form per variant.
    pub fn m_hat(&self, p: f64, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::invalid(format!("M̂ argument must be nonnegative, got {s}")));
        }
        let plain_hat = |s: f64| self.a * s.powf(p) / p + self.b * s;
        match self.variant {
            ModelVariant::Plain => Ok(plain_hat(s)),
            ModelVariant::Truncated { k_cut } => {
                if s <= k_cut {
                    Ok(plain_hat(s))
                } else {
                    Ok(plain_hat(k_cut) + self.plain_m(p, k_cut) * (s - k_cut))
                }
            }
            ModelVariant::Modified { k_hat, q } => {
                // Lower piece integrates exactly:
                // ∫ a k̂^{(p²-q)/p} t^{(q-p)/p} dt = a k̂^{(p²-q)/p} (p/q) t^{q/p}.
                let lower_hat =
                    |s: f64| self.a * k_hat.powf((p * p - q) / p) * (p / q) * s.powf(q / p) + self.b * s;
                if s <= k_hat {
                    Ok(lower_hat(s))
                } else {
                    Ok(lower_hat(k_hat) + plain_hat(s) - plain_hat(k_hat))
                }
            }
        }
    }

    /// M'(s) for s > 0, using the one-sided (outer) derivative at a cut.
    pub fn m_deriv(&self, p: f64, s: f64) -> Result<f64> {
        if s <= 0.0 {
            return Err(Error::invalid(format!("M' argument must be positive, got {s}")));
        }
        let plain_d = |s: f64| self.a * (p - 1.0) * s.powf(p - 2.0);
        match self.variant {
            ModelVariant::Plain => Ok(plain_d(s)),
            ModelVariant::Truncated { k_cut } => {
                if s < k_cut {
                    Ok(plain_d(s))
                } else {
                    Ok(0.0)
                }
            }
            ModelVariant::Modified { k_hat, q } => {
                if s > k_hat {
                    Ok(plain_d(s))
                } else {
                    Ok(self.a
                        * k_hat.powf((p * p - q) / p)
                        * ((q - p) / p)
                        * s.powf((q - p) / p - 1.0))
                }
            }
        }
    }

    /// Cut point where the variant switches branch, if any.
    pub fn cut(&self) -> Option<f64> {
        match self.variant {
            ModelVariant::Plain => None,
            ModelVariant::Truncated { k_cut } => Some(k_cut),
            ModelVariant::Modified { k_hat, .. } => Some(k_hat),
        }
    }
}

/// The scalar energy J(u) = (1/p) M̂(‖u‖^p) - (λ/q)∫f|u|^q - (1/r)∫g|u|^r.
pub fn energy(grid: &Grid, params: &ProblemParams, model: &KirchhoffModel, u: &Field) -> Result<f64> {
    let p = params.p;
    let s = grid::seminorm_w1p_pow(grid, u, p)?;
    let mhat = model.m_hat(p, s)?;
    let fint = grid::integrate_weighted_power(grid, &params.f, u, params.q)?;
    let gint = grid::integrate_weighted_power(grid, &params.g, u, params.r)?;
    Ok(mhat / p - params.lambda / params.q * fint - gint / params.r)
}

/// |d|^{p-2} d on an edge slope, regularized for p < 2 and using the
/// convention 0^{p-2}·0 = 0 for p >= 2.
fn phi_p(d: f64, p: f64) -> f64 {
    if p < 2.0 {
        const EPS: f64 = 1e-12;
        (d * d + EPS * EPS).powf((p - 2.0) / 2.0) * d
    } else if d == 0.0 {
        0.0
    } else {
        d.abs().powf(p - 2.0) * d
    }
}

/// Gradient of ‖u‖^p (the seminorm p-th power) with respect to the nodal
/// values: ∂S/∂u_i = p(φ_p(d_{i-1}) - φ_p(d_i)).
pub(crate) fn seminorm_pow_gradient(grid: &Grid, u: &Field, p: f64) -> Vec<f64> {
    let slopes = grid::edge_slopes(grid, u);
    (0..grid.n())
        .map(|i| p * (phi_p(slopes[i], p) - phi_p(slopes[i + 1], p)))
        .collect()
}

/// Exact gradient of the discrete energy: G_i = ∂J/∂u_i.
pub fn energy_gradient(
    grid: &Grid,
    params: &ProblemParams,
    model: &KirchhoffModel,
    u: &Field,
) -> Result<Field> {
    let p = params.p;
    let h = grid.h();
    let s = grid::seminorm_w1p_pow(grid, u, p)?;
    let m = model.m_value(p, s).unwrap_or(f64::INFINITY);
    let m = if m.is_finite() { m } else { model.b }; // modified M at u = 0: every term vanishes anyway
    let slopes = grid::edge_slopes(grid, u);
    let n = grid.n();
    let mut g = vec![0.0; n];
    for (i, gi) in g.iter_mut().enumerate() {
        let ui = u.values()[i];
        // d/du_i of ‖u‖^p / p: edge i-1 enters with +, edge i with -.
        let diff = phi_p(slopes[i], p) - phi_p(slopes[i + 1], p);
        *gi = m * diff
            - params.lambda * h * params.f.values()[i] * grid::signed_power(ui, params.q)
            - h * params.g.values()[i] * grid::signed_power(ui, params.r);
    }
    Field::new(g)
}

/// Magnitude scale of the nodal residual: the largest sum of absolute term
/// contributions over the nodes. Cancellation in the residual cannot be
/// resolved below roughly machine epsilon times this number, so convergence
/// tolerances should be read relative to max(scale, 1).
pub fn weak_residual_scale(
    grid: &Grid,
    params: &ProblemParams,
    model: &KirchhoffModel,
    u: &Field,
) -> Result<f64> {
    let p = params.p;
    let h = grid.h();
    let s = grid::seminorm_w1p_pow(grid, u, p)?;
    let m = model.m_value(p, s).unwrap_or(f64::INFINITY);
    let m = if m.is_finite() { m } else { model.b };
    let slopes = grid::edge_slopes(grid, u);
    let mut scale: f64 = 0.0;
    for i in 0..grid.n() {
        let ui = u.values()[i];
        let diff = phi_p(slopes[i], p).abs() + phi_p(slopes[i + 1], p).abs();
        let total = m * diff
            + (params.lambda * h * params.f.values()[i] * grid::signed_power(ui, params.q)).abs()
            + (h * params.g.values()[i] * grid::signed_power(ui, params.r)).abs();
        scale = scale.max(total);
    }
    Ok(scale)
}

/// Nodal residual of the weak form. Defined as the exact energy gradient, so
/// residual = gradient holds by construction.
pub fn weak_residual(
    grid: &Grid,
    params: &ProblemParams,
    model: &KirchhoffModel,
    u: &Field,
) -> Result<Field> {
    energy_gradient(grid, params, model, u)
}
