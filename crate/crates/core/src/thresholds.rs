//! Variational constant estimation (S_z, Λ, 𝕊) and every closed-form
//! threshold of the analysis, plus the hypothesis gates that decide which
//! theorem pipeline a parameter set may run.
//!
//! Estimators use projected gradient descent on the relevant Rayleigh
//! quotients with a private ChaCha8 stream per call; all other quantities
//! are deterministic formula evaluations.

use crate::error::{Error, Result};
use crate::fiber::{auxiliary_map, AuxiliaryKind, FiberProfile};
use crate::grid::{self, Field, Grid};
use crate::kirchhoff::{self, ProblemParams};
use serde::{Deserialize, Serialize};

const DESCENT_ITERS: usize = 20_000;
const STALL_LIMIT: usize = 10_000;

/// r versus p² decides the analysis regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Super,
    Critical,
    Sub,
}

impl Regime {
    pub fn of(p: f64, r: f64) -> Regime {
        let p2 = p * p;
        if (r - p2).abs() <= 1e-12 {
            Regime::Critical
        } else if r > p2 {
            Regime::Super
        } else {
            Regime::Sub
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Super => write!(f, "SUPER"),
            Regime::Critical => write!(f, "CRITICAL"),
            Regime::Sub => write!(f, "SUB"),
        }
    }
}

/// Estimated variational constants feeding the closed-form thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Estimates {
    pub s_q: f64,
    pub s_r: f64,
    pub lambda_capital: f64,
    pub s_big: Option<f64>,
}

/// Every closed-form constant of the analysis. Regime-specific entries are
/// `None` where their defining formula leaves the real line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdBundle {
    pub s_q: f64,
    pub s_r: f64,
    pub lambda_capital: f64,
    pub s_big: Option<f64>,
    pub lambda_1_a: Option<f64>,
    pub lambda_2: f64,
    pub lambda_0_a: Option<f64>,
    pub lambda_hat_0_a: Option<f64>,
    pub a_hat_0: Option<f64>,
    pub a_0: f64,
    pub c_star: f64,
    pub theta: f64,
    /// L(λ) at the configured λ.
    pub l_lambda: f64,
    /// L(θ), entering the Theorem 2.3(ii)/2.4 bound on a.
    pub l_theta: f64,
    /// b(r-p)/(r·A₀·L(θ)).
    pub a_bound_truncated: Option<f64>,
    pub k_cut: Option<f64>,
    pub c_tilde_1: Option<f64>,
    pub c_tilde_2: Option<f64>,
    pub c_tilde_3: Option<f64>,
    pub c_tilde_4: Option<f64>,
    pub lambda_tilde_0: Option<f64>,
    pub k_hat: Option<f64>,
    pub a_star: Option<f64>,
    pub lambda_hat_cap: Option<f64>,
    /// Refined by the Lemma 7.2 feasibility bisection once v₀ is available.
    pub lambda_tilde_star: Option<f64>,
}

/// One named hypothesis with its required and measured values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub required: f64,
    pub actual: f64,
    pub pass: bool,
}

impl Gate {
    fn below(name: &str, actual: f64, required: f64) -> Gate {
        Gate { name: name.into(), required, actual, pass: actual < required }
    }

    fn at_least(name: &str, actual: f64, required: f64) -> Gate {
        Gate { name: name.into(), required, actual, pass: actual >= required }
    }

    fn above(name: &str, actual: f64, required: f64) -> Gate {
        Gate { name: name.into(), required, actual, pass: actual > required }
    }
}

/// The full gate evaluation for a parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateReport {
    pub regime: Regime,
    pub applicable_theorem: String,
    pub gates: Vec<Gate>,
}

impl GateReport {
    pub fn all_pass(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }

    pub fn summary(&self) -> String {
        let failing: Vec<String> = self
            .gates
            .iter()
            .filter(|g| !g.pass)
            .map(|g| format!("{} (required {:.6e}, actual {:.6e})", g.name, g.required, g.actual))
            .collect();
        if failing.is_empty() {
            format!("regime {}, theorem {}: all gates pass", self.regime, self.applicable_theorem)
        } else {
            format!(
                "regime {}, theorem {}: failing gates: {}",
                self.regime,
                self.applicable_theorem,
                failing.join("; ")
            )
        }
    }
}

use rand::Rng;

fn random_positive_field(rng: &mut impl Rng, grid: &Grid) -> Field {
    Field::new((0..grid.n()).map(|_| rng.gen_range(0.1..1.0)).collect()).unwrap()
}

/// Best constant S_z = inf ‖u‖_W^p / ‖u‖_{L^z}^p over nonzero fields,
/// by projected gradient descent on the Rayleigh quotient from `n_starts`
/// random starts. Deterministic under a fixed seed.
pub fn estimate_sobolev_constant(grid: &Grid, p: f64, z: f64, seed: u64) -> Result<f64> {
    if !(p > 1.0) || !(z > 1.0) {
        return Err(Error::invalid(format!("need p > 1 and z > 1, got p={p}, z={z}")));
    }
    let h = grid.h();
    let quotient = |u: &Field| -> (f64, f64, f64) {
        let num = grid::seminorm_w1p_pow(grid, u, p).unwrap();
        let dz: f64 = u.values().iter().map(|v| v.abs().powf(z) * h).sum();
        (num / dz.powf(p / z), num, dz)
    };
    let mut best = f64::INFINITY;
    for start in 0..5u64 {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(start));
        let mut u = random_positive_field(&mut rng, grid);
        let (mut val, _, _) = quotient(&u);
        let mut step = 0.1;
        let mut stall = 0usize;
        for _ in 0..DESCENT_ITERS {
            let (_, num, dz) = quotient(&u);
            let den = dz.powf(p / z);
            let gn = kirchhoff::seminorm_pow_gradient(grid, &u, p);
            let mut grad = Vec::with_capacity(u.len());
            for (i, v) in u.values().iter().enumerate() {
                let gd = p * dz.powf(p / z - 1.0) * grid::signed_power(*v, z) * h;
                grad.push((gn[i] - val * gd) / den);
            }
            let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
            if gmax * step < 1e-15 * val.max(1.0) {
                break;
            }
            let trial = Field::new(
                u.values().iter().zip(&grad).map(|(v, g)| (v - step * g).abs()).collect(),
            )?;
            if trial.is_zero() {
                step *= 0.5;
                continue;
            }
            let (tval, _, _) = quotient(&trial);
            if tval < val {
                u = trial;
                val = tval;
                step *= 1.2;
                stall = 0;
            } else {
                step *= 0.5;
                stall += 1;
                if stall > STALL_LIMIT {
                    break;
                }
            }
            let _ = num;
        }
        if !val.is_finite() {
            return Err(Error::EstimationFailure(format!(
                "Sobolev quotient descent diverged (start {start})"
            )));
        }
        best = best.min(val);
    }
    if !best.is_finite() || best <= 0.0 {
        return Err(Error::EstimationFailure("Sobolev quotient descent failed to converge".into()));
    }
    Ok(best)
}

/// Λ = inf ‖u‖^{p²} subject to ∫g|u|^{p²} = 1, with the positive minimizer
/// φ_Λ. Inequality Λ∫g|u|^{p²} ≤ ‖u‖^{p²} then holds for every field.
pub fn estimate_lambda_capital(grid: &Grid, p: f64, g: &Field, seed: u64) -> Result<(f64, Field)> {
    if g.max() <= 0.0 {
        return Err(Error::invalid("Λ estimation requires max(g) > 0"));
    }
    let p2 = p * p;
    let h = grid.h();
    let weighted = |u: &Field| -> f64 {
        g.values().iter().zip(u.values()).map(|(gi, ui)| gi * ui.abs().powf(p2) * h).sum()
    };
    let quotient = |u: &Field| -> (f64, f64, f64) {
        let b = grid::seminorm_w1p_pow(grid, u, p).unwrap();
        let num = b.powf(p);
        let den = weighted(u);
        (num / den, num, den)
    };
    let mut best = f64::INFINITY;
    let mut best_u: Option<Field> = None;
    for start in 0..5u64 {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(start));
        // positive bumps concentrated where g is positive keep the
        // constraint integral positive
        let mut u = Field::new(
            (0..grid.n())
                .map(|i| {
                    let amp = rng.gen_range(0.1..1.0);
                    if g.values()[i] > 0.0 {
                        amp
                    } else {
                        0.05 * amp
                    }
                })
                .collect(),
        )?;
        if weighted(&u) <= 0.0 {
            continue;
        }
        let (mut val, _, _) = quotient(&u);
        let mut step = 0.1;
        let mut stall = 0usize;
        for _ in 0..DESCENT_ITERS {
            let (_, _, den) = quotient(&u);
            let b = grid::seminorm_w1p_pow(grid, &u, p)?;
            let gn = kirchhoff::seminorm_pow_gradient(grid, &u, p);
            let mut grad = Vec::with_capacity(u.len());
            for (i, v) in u.values().iter().enumerate() {
                let gnum = p * b.powf(p - 1.0) * gn[i];
                let gden = p2 * g.values()[i] * grid::signed_power(*v, p2) * h;
                grad.push((gnum - val * gden) / den);
            }
            let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
            if gmax * step < 1e-15 * val.max(1.0) {
                break;
            }
            let trial = Field::new(
                u.values().iter().zip(&grad).map(|(v, g)| (v - step * g).abs()).collect(),
            )?;
            if trial.is_zero() || weighted(&trial) <= 0.0 {
                step *= 0.5;
                continue;
            }
            let (tval, _, _) = quotient(&trial);
            if tval < val {
                u = trial;
                val = tval;
                step *= 1.2;
                stall = 0;
            } else {
                step *= 0.5;
                stall += 1;
                if stall > STALL_LIMIT {
                    break;
                }
            }
        }
        if val < best {
            best = val;
            best_u = Some(u);
        }
    }
    let u = best_u
        .ok_or_else(|| Error::EstimationFailure("no start achieved ∫g|u|^{p²} > 0".into()))?;
    // normalize the minimizer: ∫g|φ|^{p²} = 1
    let den = weighted(&u);
    let phi = u.scaled(den.powf(-1.0 / p2)).abs();
    Ok((best, phi))
}

/// 𝕊 = inf K(u) over the natural constraint M = {‖u‖^p = ∫g|u|^r}, with
/// K(u) = (1/p)‖u‖^p - (1/r)∫g|u|^r; each iterate is scaled onto M in
/// closed form. Returns the value and the positive minimizer u₀ ∈ M.
pub fn estimate_s_big(grid: &Grid, p: f64, r: f64, g: &Field, seed: u64) -> Result<(f64, Field)> {
    if g.max() <= 0.0 {
        return Err(Error::invalid("𝕊 estimation requires max(g) > 0"));
    }
    if !(r > p) {
        return Err(Error::invalid(format!("𝕊 estimation requires r > p, got p={p}, r={r}")));
    }
    let h = grid.h();
    let g_int = |u: &Field| -> f64 {
        g.values().iter().zip(u.values()).map(|(gi, ui)| gi * ui.abs().powf(r) * h).sum()
    };
    // scale onto M: t^p S = t^r G gives t = (S/G)^{1/(r-p)}
    let onto_m = |u: &Field| -> Option<Field> {
        let s = grid::seminorm_w1p_pow(grid, u, p).ok()?;
        let gi = g_int(u);
        if gi <= 0.0 || s <= 0.0 {
            return None;
        }
        Some(u.scaled((s / gi).powf(1.0 / (r - p))))
    };
    let k_of = |u: &Field| -> f64 {
        let s = grid::seminorm_w1p_pow(grid, u, p).unwrap();
        s / p - g_int(u) / r
    };
    let mut best = f64::INFINITY;
    let mut best_u: Option<Field> = None;
    for start in 0..5u64 {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(start));
        let mut u = match (0..1000)
            .find_map(|_| onto_m(&random_positive_field(&mut rng, grid)))
        {
            Some(u) => u,
            None => {
                return Err(Error::EstimationFailure(
                    "no field with ∫g|u|^r > 0 found in 10^3 trials".into(),
                ))
            }
        };
        let mut val = k_of(&u);
        let mut step = 0.1;
        let mut stall = 0usize;
        for _ in 0..DESCENT_ITERS {
            let gn = kirchhoff::seminorm_pow_gradient(grid, &u, p);
            let grad: Vec<f64> = u
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| gn[i] / p - g.values()[i] * grid::signed_power(*v, r) * h)
                .collect();
            let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
            if gmax * step < 1e-15 * val.abs().max(1.0) {
                break;
            }
            let raw = Field::new(
                u.values().iter().zip(&grad).map(|(v, g)| (v - step * g).abs()).collect(),
            )?;
            let trial = match onto_m(&raw) {
                Some(t) => t,
                None => {
                    step *= 0.5;
                    continue;
                }
            };
            let tval = k_of(&trial);
            if tval < val {
                u = trial;
                val = tval;
                step *= 1.2;
                stall = 0;
            } else {
                step *= 0.5;
                stall += 1;
                if stall > STALL_LIMIT {
                    break;
                }
            }
        }
        if val < best {
            best = val;
            best_u = Some(u);
        }
    }
    match best_u {
        Some(u) if best.is_finite() && best > 0.0 => Ok((best, u.abs())),
        _ => Err(Error::EstimationFailure("constrained minimization of K failed".into())),
    }
}

/// λ₁(a) — zero for a = 0, `None` where its radicands leave the real line
/// (requires r > p² and r > 2p - 1).
fn lambda_1(params: &ProblemParams, s_q: f64, s_r: f64) -> Option<f64> {
    let ProblemParams { p, q, r, a, b, .. } = *params;
    if a == 0.0 {
        return Some(0.0);
    }
    if r <= p * p || r <= 2.0 * p - 1.0 {
        return None;
    }
    let f_norm = params.f_plus_max();
    let g_norm = params.g_plus_max();
    if f_norm <= 0.0 || g_norm <= 0.0 {
        return None;
    }
    let root1 = (a * b.powf(p - 1.0) * (r - p * p) * (r - p).powf(p - 1.0)).powf(1.0 / p);
    let root2 = (a * b.powf(p - 1.0) * (p * p - q) * (p - q).powf(p - 1.0)).powf(1.0 / p);
    let first = p * s_q.powf(q / p) * root1 / ((r - q) * f_norm);
    let second = (p * s_r.powf(r / p) * root2 / ((r - q) * g_norm))
        .powf((2.0 * p - 1.0 - q) / (r - 2.0 * p + 1.0));
    Some(first * second)
}

/// λ₂.
fn lambda_2(params: &ProblemParams, s_q: f64, s_r: f64) -> Result<f64> {
    let ProblemParams { p, q, r, b, .. } = *params;
    let f_norm = params.f_plus_max();
    let g_norm = params.g_plus_max();
    if f_norm <= 0.0 || g_norm <= 0.0 {
        return Err(Error::invalid("λ₂ requires f⁺ ≠ 0 and g⁺ ≠ 0 (conditions (i)-(ii))"));
    }
    Ok(b * s_q.powf(q / p) * (r - p) / ((r - q) * f_norm)
        * (b * s_r.powf(r / p) * (p - q) / ((r - q) * g_norm)).powf((p - q) / (r - p)))
}

/// The admissible truncation interval (b(r-p)/(ra), b(r-p)/(pa)) for k^{p-1}.
pub fn k_cut_interval(p: f64, r: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    if a <= 0.0 {
        return Err(Error::invalid("truncation interval requires a > 0"));
    }
    Ok((b * (r - p) / (r * a), b * (r - p) / (p * a)))
}

/// k̂ = b(r-p)/(a(2p-r)); requires r < 2p.
pub fn k_hat(p: f64, r: f64, a: f64, b: f64) -> Result<f64> {
    if a <= 0.0 || !(2.0 * p - r > 0.0) {
        return Err(Error::invalid(format!(
            "k̂ requires a > 0 and r < 2p, got a={a}, p={p}, r={r}"
        )));
    }
    Ok(b * (r - p) / (a * (2.0 * p - r)))
}

/// MINUS-branch seminorm floor in the super regime (Theorem 5.1 Case (A)):
/// ‖u‖ > (b(p-q) S_r^{r/p} / ((r-q)‖g⁺‖))^{1/(r-p)}.
pub fn super_minus_floor(params: &ProblemParams, s_r: f64) -> f64 {
    let ProblemParams { p, q, r, b, .. } = *params;
    (b * (p - q) * s_r.powf(r / p) / ((r - q) * params.g_plus_max())).powf(1.0 / (r - p))
}

/// MINUS-branch seminorm floor in the critical regime (Eq. 17):
/// ‖u‖ > (bΛ(p-q)/((1-aΛ)(p²-q)))^{1/(p²-p)}.
pub fn critical_minus_floor(params: &ProblemParams, lambda_capital: f64) -> Result<f64> {
    let ProblemParams { p, q, a, b, .. } = *params;
    let denom = (1.0 - a * lambda_capital) * (p * p - q);
    if denom <= 0.0 {
        return Err(Error::RangeError("floor (17) requires a < 1/Λ".into()));
    }
    Ok((b * lambda_capital * (p - q) / denom).powf(1.0 / (p * p - p)))
}

/// N⁰ seminorm floor for the truncated model (the Eq. 32 form):
/// ‖u‖ ≥ (S_r^{r/p} C̃₁ / ((r-q)‖g⁺‖))^{1/(r-p)}.
pub fn truncated_minus_floor(params: &ProblemParams, s_r: f64, c_tilde_1: f64) -> f64 {
    let ProblemParams { p, q: _, r, .. } = *params;
    (s_r.powf(r / p) * c_tilde_1 / ((r - params.q) * params.g_plus_max())).powf(1.0 / (r - p))
}

/// Evaluate every closed-form threshold from the estimates. `c_star` and
/// `theta` are configuration inputs (the constant of inequality (11) comes
/// from an external lemma; θ parameterizes the Theorem 2.3(ii)/2.4 bound).
pub fn compute_thresholds(
    grid: &Grid,
    params: &ProblemParams,
    estimates: &Estimates,
    c_star: f64,
    theta: f64,
) -> Result<ThresholdBundle> {
    let ProblemParams { p, q, r, a, b, lambda, .. } = *params;
    if !(c_star > 0.0) || !(theta > 0.0) {
        return Err(Error::invalid("C* and θ must be positive"));
    }
    let Estimates { s_q, s_r, lambda_capital, s_big } = *estimates;
    if !(s_q > 0.0 && s_r > 0.0 && lambda_capital > 0.0) {
        return Err(Error::invalid("estimated constants must be positive"));
    }
    let f_norm = params.f_plus_max();
    let g_norm = params.g_plus_max();
    if f_norm <= 0.0 {
        return Err(Error::invalid("‖f⁺‖ = 0: conditions (i)-(ii) violated"));
    }
    let p2 = p * p;

    let l1 = lambda_1(params, s_q, s_r);
    let l2 = lambda_2(params, s_q, s_r)?;
    let lambda_0_a = l1.map(|l1| (q * l1 / p.powf((2.0 * p - 1.0) / p)).max(q * l2 / p));

    let lambda_hat_0_a = {
        let denom = (1.0 - a * lambda_capital) * (p2 - q);
        if denom > 0.0 {
            Some(
                p * b * s_q.powf(q / p) / ((p2 - q) * f_norm)
                    * (b * lambda_capital * (p - q) / denom).powf((p - q) / p),
            )
        } else {
            None
        }
    };

    let a_hat_0 = if p2 > r && g_norm > 0.0 {
        Some(
            b * (p - q) * (r - p) / (p * (p2 - q))
                * (p * s_r.powf(r / p) / (b * (p - q) * (r - q) * (p2 - r) * g_norm))
                    .powf((p2 - r) / (r - p)),
        )
    } else {
        None
    };

    let a_0 = {
        let e1 = (p - r + q) / (r - p);
        (b * (2.0 * r - p) / r)
            .powf(e1)
            .max((b * r / p).powf(e1))
            .max((b * r / p).powf(p / (r - p)))
    };

    let l_of = |lam: f64| (lam * c_star.powf(q) * f_norm + c_star.powf(r) * g_norm) * grid.length();
    let l_lambda = l_of(lambda);
    let l_theta = l_of(theta);
    let a_bound_truncated =
        if r < p2 { Some(b * (r - p) / (r * a_0 * l_theta)) } else { None };

    // §6 truncation constants at the midpoint of the admissible interval
    let (k_cut, c_tilde) = if r < p2 && a > 0.0 {
        let (lo, hi) = k_cut_interval(p, r, a, b)?;
        let k = 0.5 * (lo + hi);
        let m_k = a * k.powf(p - 1.0) + b;
        let c1 = (p - q) * b.min(m_k);
        let c2 = (m_k * (r - p)).min(b * (r - p) - a * (p2 - p) * k);
        let c3 = (s_r.powf(r / p) * c1 / ((r - q) * g_norm)).powf((p - q) / (r - p)) * s_q.powf(q / p)
            / ((r - q) * f_norm);
        let c4 = q * (r * b - p * m_k) / p;
        (Some(k), Some((c1, c2, c3, c4)))
    } else {
        (None, None)
    };
    let lambda_tilde_0 = c_tilde.map(|(_, c2, c3, c4)| theta.min(c3 * c2.min(c4)));

    // §7 constants; require r < 2p for k̂ and r < p² for the exponents
    let k_hat_v = if r < p2 && r < 2.0 * p && a > 0.0 { Some(k_hat(p, r, a, b)?) } else { None };
    let a_star = match (s_big, k_hat_v) {
        (Some(s), Some(_)) => Some(
            p.powf(r / (p - r)) * (r - p).powf(p) / (r * s)
                * ((2.0 * p - r) / b).powf((p2 - r) / (r - p)),
        ),
        _ => None,
    };
    let lambda_hat_cap = if r < p2 && a > 0.0 {
        Some(a * (b * (r - p) / (a * (p2 - r))).powf((p2 - q) / p) * s_q.powf(q / p) / f_norm)
    } else {
        None
    };

    Ok(ThresholdBundle {
        s_q,
        s_r,
        lambda_capital,
        s_big,
        lambda_1_a: l1,
        lambda_2: l2,
        lambda_0_a,
        lambda_hat_0_a,
        a_hat_0,
        a_0,
        c_star,
        theta,
        l_lambda,
        l_theta,
        a_bound_truncated,
        k_cut,
        c_tilde_1: c_tilde.map(|c| c.0),
        c_tilde_2: c_tilde.map(|c| c.1),
        c_tilde_3: c_tilde.map(|c| c.2),
        c_tilde_4: c_tilde.map(|c| c.3),
        lambda_tilde_0,
        k_hat: k_hat_v,
        a_star,
        lambda_hat_cap,
        lambda_tilde_star: None,
    })
}

/// The Lemma 7.2 scaling root: the largest t with m̄(λ,t) = ∫g|v₀|^r on the
/// increasing side of m̄. Used both for the λ̃* feasibility test and as the
/// third-solution start t̄_λ·v₀.
pub fn mbar_root(profile: &FiberProfile, a: f64, b: f64, g_int_v0: f64) -> Result<f64> {
    let mbar = |t: f64| auxiliary_map(AuxiliaryKind::MBar, profile, a, b, t).unwrap();
    // m̄ → ∞ as t → ∞ (exponent 2p - r > 0 in this regime)
    let mut hi = 1.0;
    let mut k = 0;
    while mbar(hi) <= g_int_v0 {
        hi *= 2.0;
        k += 1;
        if k > 200 {
            return Err(Error::NoRoot("m̄ never exceeds ∫g|v₀|^r".into()));
        }
    }
    let mut lo = hi;
    let mut k = 0;
    while mbar(lo) >= g_int_v0 {
        lo *= 0.5;
        k += 1;
        if k > 200 {
            return Err(Error::NoRoot("failed to bracket the m̄ root from below".into()));
        }
    }
    let mut a_t = lo;
    let mut b_t = hi;
    for _ in 0..200 {
        let mid = 0.5 * (a_t + b_t);
        if (b_t - a_t) <= 1e-13 * mid {
            break;
        }
        if mbar(mid) < g_int_v0 {
            a_t = mid;
        } else {
            b_t = mid;
        }
    }
    Ok(0.5 * (a_t + b_t))
}

/// λ̃* refinement (Lemma 7.2): the largest λ in (0, min{θ, Λ̂}] for which
/// the m̄-root exceeds 1, by feasibility bisection to 1e-6 relative.
/// `v0_profile` carries the moments of v₀ at λ = 1 (its F entry is ∫f|v₀|^q).
pub fn refine_lambda_tilde_star(
    v0_profile: &FiberProfile,
    a: f64,
    b: f64,
    g_int_v0: f64,
    theta: f64,
    lambda_hat_cap: f64,
) -> Result<f64> {
    let cap = theta.min(lambda_hat_cap);
    let feasible = |lam: f64| -> bool {
        let mut pr = *v0_profile;
        pr.f_moment = lam * v0_profile.f_moment;
        match mbar_root(&pr, a, b, g_int_v0) {
            Ok(t) => t > 1.0,
            Err(_) => false,
        }
    };
    if feasible(cap) {
        return Ok(cap);
    }
    if !feasible(cap * 1e-9) {
        return Err(Error::NoRoot("Lemma 7.2 root infeasible even for tiny λ".into()));
    }
    let mut lo = cap * 1e-9;
    let mut hi = cap;
    while (hi - lo) > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Evaluate every theorem hypothesis as a named gate. Failures are data.
pub fn check_gates(params: &ProblemParams, bundle: &ThresholdBundle) -> GateReport {
    let ProblemParams { p, q: _, r, a, lambda, .. } = *params;
    let regime = Regime::of(p, r);
    let mut gates = Vec::new();
    let theorem;
    match regime {
        Regime::Super => {
            theorem = "2.1".to_string();
            gates.push(Gate::above("a > 0", a, 0.0));
            match bundle.lambda_0_a {
                Some(l0) => gates.push(Gate::below("lambda < lambda_0(a)", lambda, l0)),
                None => gates.push(Gate {
                    name: "lambda_0(a) defined (needs r > 2p-1)".into(),
                    required: 2.0 * p - 1.0,
                    actual: r,
                    pass: false,
                }),
            }
            // Lemma 3.3(i) emptiness of N⁰
            let l33 = bundle.lambda_1_a.unwrap_or(0.0).max(bundle.lambda_2);
            gates.push(Gate::below("lambda < max{lambda_1(a), lambda_2} (N0 empty)", lambda, l33));
        }
        Regime::Critical => {
            let inv_cap = 1.0 / bundle.lambda_capital;
            if a >= inv_cap {
                theorem = "2.2(i)".to_string();
                gates.push(Gate::at_least("a >= 1/Lambda", a, inv_cap));
                gates.push(Gate::above("lambda > 0", lambda, 0.0));
            } else {
                theorem = "2.2(ii)".to_string();
                gates.push(Gate::below("a < 1/Lambda", a, inv_cap));
                match bundle.lambda_hat_0_a {
                    Some(lh) => {
                        gates.push(Gate::below("lambda < lambda_hat_0(a)/p", lambda, lh / p))
                    }
                    None => gates.push(Gate {
                        name: "lambda_hat_0(a) defined".into(),
                        required: inv_cap,
                        actual: a,
                        pass: false,
                    }),
                }
            }
        }
        Regime::Sub => {
            // prefer the three-solution pipeline when its gates pass
            let f_pos = params.f.values().iter().all(|&v| v > 0.0);
            let g_pos = params.g.values().iter().all(|&v| v > 0.0);
            let a_cap_24 = match (bundle.a_bound_truncated, bundle.a_star) {
                (Some(x), Some(y)) => Some(x.min(y)),
                _ => None,
            };
            let cap_star = match (bundle.lambda_tilde_star, bundle.lambda_hat_cap) {
                (Some(ls), _) => Some(ls),
                (None, Some(lh)) => Some(bundle.theta.min(lh)),
                _ => None,
            };
            let gates_24: Vec<Gate> = {
                let mut g24 = Vec::new();
                g24.push(Gate {
                    name: "f > 0 nodally".into(),
                    required: 1.0,
                    actual: if f_pos { 1.0 } else { 0.0 },
                    pass: f_pos,
                });
                g24.push(Gate {
                    name: "g > 0 nodally".into(),
                    required: 1.0,
                    actual: if g_pos { 1.0 } else { 0.0 },
                    pass: g_pos,
                });
                g24.push(Gate::below("r < 2p", r, 2.0 * p));
                match a_cap_24 {
                    Some(cap) => {
                        g24.push(Gate::below("a < min{b(r-p)/(r A0 L(theta)), A*}", a, cap))
                    }
                    None => g24.push(Gate {
                        name: "A* available (needs S_big estimate)".into(),
                        required: 1.0,
                        actual: 0.0,
                        pass: false,
                    }),
                }
                match cap_star {
                    Some(cap) => g24.push(Gate::below("lambda < lambda_tilde_*", lambda, cap)),
                    None => g24.push(Gate {
                        name: "lambda_tilde_* available".into(),
                        required: 1.0,
                        actual: 0.0,
                        pass: false,
                    }),
                }
                g24
            };
            if gates_24.iter().all(|g| g.pass) {
                theorem = "2.4".to_string();
                gates = gates_24;
            } else {
                // Theorem 2.3(ii) two-solution route
                let g_nonneg = params.g.values().iter().all(|&v| v >= 0.0);
                let mut gates_23 = Vec::new();
                gates_23.push(Gate {
                    name: "g >= 0 nodally".into(),
                    required: 1.0,
                    actual: if g_nonneg { 1.0 } else { 0.0 },
                    pass: g_nonneg,
                });
                match bundle.a_bound_truncated {
                    Some(cap) => {
                        gates_23.push(Gate::below("a < b(r-p)/(r A0 L(theta))", a, cap))
                    }
                    None => gates_23.push(Gate {
                        name: "a bound defined".into(),
                        required: 1.0,
                        actual: 0.0,
                        pass: false,
                    }),
                }
                match bundle.lambda_tilde_0 {
                    Some(l0) => gates_23.push(Gate::below("lambda < lambda_tilde_0", lambda, l0)),
                    None => gates_23.push(Gate {
                        name: "lambda_tilde_0 defined".into(),
                        required: 1.0,
                        actual: 0.0,
                        pass: false,
                    }),
                }
                gates_23.push(Gate::above("a > 0", a, 0.0));
                if gates_23.iter().all(|g| g.pass) {
                    theorem = "2.3(ii)".to_string();
                    gates = gates_23;
                } else {
                    // route (i) holds for every a, λ > 0
                    theorem = "2.3(i)".to_string();
                    gates.push(Gate::above("a > 0", a, 0.0));
                    gates.push(Gate::above("lambda > 0", lambda, 0.0));
                }
            }
        }
    }
    GateReport { regime, applicable_theorem: theorem, gates }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_params(p: f64, q: f64, r: f64, a: f64, b: f64, lambda: f64, n: usize) -> ProblemParams {
        ProblemParams::new(p, q, r, a, b, lambda, Field::constant(n, 1.0), Field::constant(n, 1.0))
            .unwrap()
    }

    fn unit_estimates() -> Estimates {
        Estimates { s_q: 1.0, s_r: 1.0, lambda_capital: 1.0, s_big: None }
    }

    #[test]
    fn lambda_2_hand_value() {
        let params = unit_params(2.0, 1.5, 5.0, 1.0, 1.0, 0.1, 4);
        let l2 = lambda_2(&params, 1.0, 1.0).unwrap();
        let expect = (6.0 / 7.0) * (1.0_f64 / 7.0).powf(1.0 / 6.0);
        assert!((l2 - expect).abs() < 1e-14, "λ₂ = {l2}, expect {expect}");
    }

    #[test]
    fn lambda_2_scaling_in_f() {
        let p1 = unit_params(2.0, 1.5, 5.0, 1.0, 1.0, 0.1, 4);
        let mut p2v = p1.clone();
        p2v.f = Field::constant(4, 2.0);
        let l_one = lambda_2(&p1, 1.0, 1.0).unwrap();
        let l_two = lambda_2(&p2v, 1.0, 1.0).unwrap();
        assert!((l_two - 0.5 * l_one).abs() < 1e-14);
    }

    #[test]
    fn lambda_2_decreasing_in_g() {
        let mut prev = f64::INFINITY;
        for gmax in [0.5, 1.0, 2.0] {
            let mut params = unit_params(2.0, 1.5, 5.0, 1.0, 1.0, 0.1, 4);
            params.g = Field::constant(4, gmax);
            let l = lambda_2(&params, 1.0, 1.0).unwrap();
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn lambda_0_is_max_of_components() {
        let grid = Grid::new(1.0, 4).unwrap();
        let params = unit_params(2.0, 1.5, 5.0, 1.0, 1.0, 0.1, 4);
        let bundle = compute_thresholds(&grid, &params, &unit_estimates(), 1.0, 1.0).unwrap();
        let l1 = bundle.lambda_1_a.unwrap();
        let l2 = bundle.lambda_2;
        let p = 2.0_f64;
        let q = 1.5;
        let expect = (q * l1 / p.powf((2.0 * p - 1.0) / p)).max(q * l2 / p);
        assert_eq!(bundle.lambda_0_a.unwrap(), expect);
    }

    #[test]
    fn lambda_1_zero_for_a_zero() {
        let params = unit_params(2.0, 1.5, 5.0, 0.0, 1.0, 0.1, 4);
        assert_eq!(lambda_1(&params, 1.0, 1.0), Some(0.0));
    }

    #[test]
    fn lambda_hat_0_monotone_in_a() {
        // (1 - aΛ) sits in the denominator with a positive exponent, so
        // λ̂₀ grows as a approaches 1/Λ from below, and is undefined past it.
        let grid = Grid::new(1.0, 4).unwrap();
        let mut prev = 0.0;
        for a in [0.2, 0.5, 0.8] {
            let params = unit_params(2.0, 1.5, 4.0, a, 1.0, 0.1, 4);
            let bundle = compute_thresholds(&grid, &params, &unit_estimates(), 1.0, 1.0).unwrap();
            let lh = bundle.lambda_hat_0_a.unwrap();
            assert!(lh > prev, "λ̂₀({a}) = {lh} not increasing");
            prev = lh;
        }
        let params = unit_params(2.0, 1.5, 4.0, 2.0, 1.0, 0.1, 4);
        let bundle = compute_thresholds(&grid, &params, &unit_estimates(), 1.0, 1.0).unwrap();
        assert!(bundle.lambda_hat_0_a.is_none());
    }

    #[test]
    fn bundle_deterministic() {
        let grid = Grid::new(1.0, 4).unwrap();
        let params = unit_params(2.0, 1.5, 3.0, 0.1, 1.0, 0.01, 4);
        let est = Estimates { s_q: 2.0, s_r: 3.0, lambda_capital: 9.0, s_big: Some(1.3) };
        let b1 = compute_thresholds(&grid, &params, &est, 1.0, 1.0).unwrap();
        let b2 = compute_thresholds(&grid, &params, &est, 1.0, 1.0).unwrap();
        assert_eq!(serde_json::to_string(&b1).unwrap(), serde_json::to_string(&b2).unwrap());
    }

    #[test]
    fn rejects_zero_f_plus() {
        let grid = Grid::new(1.0, 4).unwrap();
        let params = ProblemParams::new(
            2.0,
            1.5,
            5.0,
            1.0,
            1.0,
            0.1,
            Field::constant(4, -1.0),
            Field::constant(4, 1.0),
        )
        .unwrap();
        assert!(compute_thresholds(&grid, &params, &unit_estimates(), 1.0, 1.0).is_err());
    }

    /// Smallest eigenvalue of the Dirichlet tridiagonal (1/h²)[-1, 2, -1]
    /// via inverse power iteration with a Thomas solve.
    fn tridiag_min_eigenvalue(n: usize, h: f64) -> f64 {
        let mut v = vec![1.0; n];
        let mut lam = 0.0;
        for _ in 0..500 {
            // solve A x = v with A = (1/h²) tridiag(-1, 2, -1)
            let a = -1.0 / (h * h);
            let b = 2.0 / (h * h);
            let mut c_prime = vec![0.0; n];
            let mut d_prime = vec![0.0; n];
            c_prime[0] = a / b;
            d_prime[0] = v[0] / b;
            for i in 1..n {
                let m = b - a * c_prime[i - 1];
                c_prime[i] = a / m;
                d_prime[i] = (v[i] - a * d_prime[i - 1]) / m;
            }
            let mut x = vec![0.0; n];
            x[n - 1] = d_prime[n - 1];
            for i in (0..n - 1).rev() {
                x[i] = d_prime[i] - c_prime[i] * x[i + 1];
            }
            let norm = x.iter().map(|t| t * t).sum::<f64>().sqrt();
            for xi in x.iter_mut() {
                *xi /= norm;
            }
            // Rayleigh quotient of the normalized iterate
            let mut num = 0.0;
            for i in 0..n {
                let left = if i == 0 { 0.0 } else { x[i - 1] };
                let right = if i == n - 1 { 0.0 } else { x[i + 1] };
                num += x[i] * (2.0 * x[i] - left - right) / (h * h);
            }
            lam = num;
            v = x;
        }
        lam
    }

    #[test]
    fn sobolev_s2_matches_eigenvalue_oracle() {
        let n = 128;
        let grid = Grid::new(1.0, n).unwrap();
        let s2 = estimate_sobolev_constant(&grid, 2.0, 2.0, 42).unwrap();
        let oracle = tridiag_min_eigenvalue(n, grid.h());
        assert!(
            (s2 - oracle).abs() <= 0.02 * oracle,
            "S₂ = {s2}, oracle = {oracle}"
        );
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        assert!((s2 - pi2).abs() <= 0.02 * pi2, "S₂ = {s2} vs π² = {pi2}");
    }

    #[test]
    fn sobolev_refinement_consistency() {
        let g64 = Grid::new(1.0, 64).unwrap();
        let g128 = Grid::new(1.0, 128).unwrap();
        let s64 = estimate_sobolev_constant(&g64, 2.0, 4.0, 7).unwrap();
        let s128 = estimate_sobolev_constant(&g128, 2.0, 4.0, 7).unwrap();
        assert!((s64 - s128).abs() / s128 <= 0.05, "S(64)={s64} S(128)={s128}");
    }

    #[test]
    fn lambda_capital_inequality_nine() {
        let n = 64;
        let grid = Grid::new(1.0, n).unwrap();
        let g = Field::constant(n, 1.0);
        let p = 2.0;
        let (cap, phi) = estimate_lambda_capital(&grid, p, &g, 99).unwrap();
        // normalization of the minimizer
        let p2 = p * p;
        let d = grid::integrate_weighted_power(&grid, &g, &phi, p2).unwrap();
        assert!((d - 1.0).abs() <= 1e-10, "∫g|φ|^4 = {d}");
        assert!(phi.values().iter().all(|&v| v >= 0.0));
        // inequality (9) on fresh random fields
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..100 {
            let u =
                Field::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap();
            let lhs = cap * grid::integrate_weighted_power(&grid, &g, &u, p2).unwrap();
            let rhs = grid::seminorm_w1p_pow(&grid, &u, p).unwrap().powf(p);
            assert!(lhs <= rhs + 1e-8 * rhs.abs().max(1.0), "Λ·∫={lhs} > ‖u‖⁴={rhs}");
        }
    }

    #[test]
    fn lambda_capital_cross_check_with_sobolev() {
        // For g ≡ 1, Λ = inf ‖u‖^{p²}/∫|u|^{p²} = (S_{p²})^p exactly.
        let n = 64;
        let grid = Grid::new(1.0, n).unwrap();
        let g = Field::constant(n, 1.0);
        let (cap, _) = estimate_lambda_capital(&grid, 2.0, &g, 5).unwrap();
        let s4 = estimate_sobolev_constant(&grid, 2.0, 4.0, 5).unwrap();
        assert!(
            (cap - s4 * s4).abs() <= 0.05 * cap,
            "Λ = {cap} vs S₄² = {}",
            s4 * s4
        );
    }

    #[test]
    fn s_big_constraint_and_identity() {
        let n = 48;
        let grid = Grid::new(1.0, n).unwrap();
        let g = Field::constant(n, 1.0);
        let (p, r) = (2.0, 3.0);
        let (s_big, u0) = estimate_s_big(&grid, p, r, &g, 17).unwrap();
        let s = grid::seminorm_w1p_pow(&grid, &u0, p).unwrap();
        let gi = grid::integrate_weighted_power(&grid, &g, &u0, r).unwrap();
        assert!((s - gi).abs() <= 1e-8 * s, "constraint residual: ‖u₀‖²={s} ∫g|u₀|³={gi}");
        // K(u₀) = (1/p - 1/r)‖u₀‖^p on the constraint
        let k_expect = (1.0 / p - 1.0 / r) * s;
        assert!((s_big - k_expect).abs() <= 1e-10 * k_expect);
        assert!(u0.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn s_big_multi_start_stability() {
        let n = 32;
        let grid = Grid::new(1.0, n).unwrap();
        let g = Field::constant(n, 1.0);
        let vals: Vec<f64> = (0..5u64)
            .map(|s| estimate_s_big(&grid, 2.0, 3.0, &g, 1000 + 31 * s).unwrap().0)
            .collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(0.0, f64::max);
        assert!((hi - lo) / lo <= 0.02, "𝕊 spread: {vals:?}");
    }

    #[test]
    fn estimators_deterministic_under_seed() {
        let grid = Grid::new(1.0, 32).unwrap();
        let a = estimate_sobolev_constant(&grid, 2.0, 3.0, 11).unwrap();
        let b = estimate_sobolev_constant(&grid, 2.0, 3.0, 11).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn regime_decisions() {
        assert_eq!(Regime::of(2.0, 5.0), Regime::Super);
        assert_eq!(Regime::of(2.0, 4.0), Regime::Critical);
        assert_eq!(Regime::of(2.0, 3.0), Regime::Sub);
    }

    #[test]
    fn gates_super_regime() {
        let grid = Grid::new(1.0, 4).unwrap();
        let params = unit_params(2.0, 1.5, 5.0, 1.0, 1.0, 1e-4, 4);
        let bundle = compute_thresholds(&grid, &params, &unit_estimates(), 1.0, 1.0).unwrap();
        let report = check_gates(&params, &bundle);
        assert_eq!(report.regime, Regime::Super);
        assert_eq!(report.applicable_theorem, "2.1");
        assert!(report.all_pass(), "{}", report.summary());
        // λ too large → gate fails
        let mut big = params.clone();
        big.lambda = 2.0 * bundle.lambda_0_a.unwrap();
        let report = check_gates(&big, &bundle);
        assert!(!report.all_pass());
    }

    #[test]
    fn gates_critical_routes() {
        let grid = Grid::new(1.0, 4).unwrap();
        let est = Estimates { s_q: 1.0, s_r: 1.0, lambda_capital: 2.0, s_big: None };
        // a ≥ 1/Λ → route (i)
        let params = unit_params(2.0, 1.5, 4.0, 1.0, 1.0, 0.5, 4);
        let bundle = compute_thresholds(&grid, &params, &est, 1.0, 1.0).unwrap();
        let report = check_gates(&params, &bundle);
        assert_eq!(report.applicable_theorem, "2.2(i)");
        assert!(report.all_pass());
        // a < 1/Λ with small λ → route (ii)
        let params = unit_params(2.0, 1.5, 4.0, 0.25, 1.0, 1e-4, 4);
        let bundle = compute_thresholds(&grid, &params, &est, 1.0, 1.0).unwrap();
        let report = check_gates(&params, &bundle);
        assert_eq!(report.applicable_theorem, "2.2(ii)");
        assert!(report.all_pass(), "{}", report.summary());
    }

    #[test]
    fn gates_sub_regime_fallback() {
        let grid = Grid::new(1.0, 4).unwrap();
        // no S_big estimate → Theorem 2.4 unavailable; large a fails 2.3(ii)
        let params = unit_params(2.0, 1.5, 3.0, 50.0, 1.0, 0.5, 4);
        let bundle = compute_thresholds(&grid, &params, &unit_estimates(), 1.0, 1.0).unwrap();
        let report = check_gates(&params, &bundle);
        assert_eq!(report.regime, Regime::Sub);
        assert_eq!(report.applicable_theorem, "2.3(i)");
        assert!(report.all_pass());
    }

    #[test]
    fn k_cut_interval_and_k_hat() {
        let (lo, hi) = k_cut_interval(2.0, 3.0, 1.0, 1.0).unwrap();
        assert!((lo - 1.0 / 3.0).abs() < 1e-15);
        assert!((hi - 0.5).abs() < 1e-15);
        let kh = k_hat(2.0, 3.0, 1.0, 1.0).unwrap();
        assert!((kh - 1.0).abs() < 1e-15);
        assert!(k_hat(2.0, 4.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn c_tilde_positive_at_midpoint() {
        let grid = Grid::new(1.0, 4).unwrap();
        let params = unit_params(2.0, 1.5, 3.0, 1.0, 1.0, 0.01, 4);
        let bundle = compute_thresholds(&grid, &params, &unit_estimates(), 1.0, 1.0).unwrap();
        assert!(bundle.c_tilde_1.unwrap() > 0.0);
        assert!(bundle.c_tilde_2.unwrap() > 0.0);
        assert!(bundle.c_tilde_3.unwrap() > 0.0);
        assert!(bundle.c_tilde_4.unwrap() > 0.0);
        assert!(bundle.lambda_tilde_0.unwrap() > 0.0);
    }

    #[test]
    fn mbar_root_at_lambda_zero() {
        // λ = 0: minimum of m̄ sits at t = 1 with value pb²(r-p)/(a(2p-r)²);
        // any larger target has its increasing-side root beyond 1.
        let (p, q, r, a, b) = (2.0, 1.5, 3.0, 1.0, 1.0);
        let kh = k_hat(p, r, a, b).unwrap();
        let profile = FiberProfile {
            a_moment: kh * kh,
            b_moment: kh,
            g_moment: 0.0,
            f_moment: 0.0,
            p,
            q,
            r,
        };
        let min_val = p * b * b * (r - p) / (a * (2.0 * p - r) * (2.0 * p - r));
        let root = mbar_root(&profile, a, b, 2.0 * min_val).unwrap();
        assert!(root > 1.0, "root {root}");
        let at_root = auxiliary_map(AuxiliaryKind::MBar, &profile, a, b, root).unwrap();
        assert!((at_root - 2.0 * min_val).abs() <= 1e-9 * min_val);
    }
}
