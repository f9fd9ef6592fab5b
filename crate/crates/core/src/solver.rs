//! Projected-descent minimization on the Nehari branches and the
//! per-theorem pipelines with post-hoc verification.
//!
//! Each iterate is pulled back onto the requested branch by the fiber
//! projection; positivity is enforced by a nodal absolute value; descent is
//! guarded by backtracking. The stopping test uses the full energy gradient,
//! which vanishes at constrained minimizers away from N⁰.

use crate::error::{Error, Result};
use crate::fiber::{self, Branch, FiberProfile};
use crate::grid::{self, Field, Grid};
use crate::kirchhoff::{self, KirchhoffModel, ModelVariant, ProblemParams};
use crate::thresholds::{self, Estimates, GateReport, Regime, ThresholdBundle};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub step_init: f64,
    pub residual_tol: f64,
    pub seed: u64,
    pub n_starts: usize,
    /// The constant of inequality (11); from an external lemma, configured.
    pub c_star: f64,
    /// Parameterizes the a-bound of the two- and three-solution routes.
    pub theta: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 50_000,
            step_init: 1e-2,
            residual_tol: 1e-8,
            seed: 0,
            n_starts: 5,
            c_star: 1.0,
            theta: 1.0,
        }
    }
}

/// One named verification with its outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Check {
        Check { name: name.into(), pass, detail }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub branch: Branch,
    pub u: Field,
    pub energy: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub fiber: FiberProfile,
    pub checks: Vec<Check>,
}

impl SolveReport {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn random_bumps(rng: &mut ChaCha8Rng, n: usize, amplitude: f64) -> Field {
    Field::new((0..n).map(|_| rng.gen_range(0.2..1.0) * amplitude).collect()).unwrap()
}

/// Residual tolerance at the iterate's own scale: below ~eps_mach times the
/// term magnitudes the residual is pure roundoff, so large-amplitude solutions
/// are judged relative to that scale (small ones keep the absolute tolerance).
fn scaled_tol(
    grid: &Grid,
    params: &ProblemParams,
    model: &KirchhoffModel,
    u: &Field,
    tol: f64,
) -> f64 {
    let scale = kirchhoff::weak_residual_scale(grid, params, model, u).unwrap_or(1.0);
    tol * scale.max(1.0)
}

struct DescentOutcome {
    u: Field,
    energy: f64,
    residual: f64,
    iterations: usize,
    converged: bool,
    /// Lemma 7.1 separation held on every accepted iterate (MODIFIED model).
    separation_ok: bool,
}

/// Core descent loop from a fixed start already on the branch.
///
/// Two phases: projected energy descent carries the iterate into the basin of
/// a constrained minimizer; a damped Newton polish on the weak residual then
/// drives the gradient to tolerance. (The polish is needed because energy
/// differences near the minimizer fall below machine precision long before the
/// gradient reaches 1e-8, and on N⁻ the target is a saddle of the free
/// energy, so unconstrained descent cannot finish the job either.)
fn descend(
    grid: &Grid,
    params: &ProblemParams,
    model: &KirchhoffModel,
    branch: Branch,
    opts: &SolveOptions,
    start: Field,
) -> Result<DescentOutcome> {
    let mut u = fiber::project_to_nehari(grid, params, model, &start.abs(), branch)?;
    let mut energy = kirchhoff::energy(grid, params, model, &u)?;
    let mut step = opts.step_init;
    let mut separation_ok = check_separation(grid, params, model, branch, &u);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        let gradient = kirchhoff::energy_gradient(grid, params, model, &u)?;
        residual = gradient.max_abs();
        if residual <= scaled_tol(grid, params, model, &u, opts.residual_tol) {
            break;
        }
        if step < 1e-18 {
            break;
        }
        let raw = u.axpy(-step, &gradient).abs();
        let trial = match fiber::project_to_nehari(grid, params, model, &raw, branch) {
            Ok(t) => t,
            Err(_) => {
                step *= 0.5;
                continue;
            }
        };
        let trial_class = fiber::classify(grid, params, model, &trial)?;
        if trial_class.branch != branch {
            // branch flip: reject the step rather than silently wander
            step *= 0.5;
            continue;
        }
        let trial_energy = kirchhoff::energy(grid, params, model, &trial)?;
        if trial_energy <= energy + 1e-14 * energy.abs() {
            u = trial;
            energy = trial_energy;
            step *= 1.2;
            separation_ok &= check_separation(grid, params, model, branch, &u);
        } else {
            step *= 0.5;
        }
    }
    if residual > scaled_tol(grid, params, model, &u, opts.residual_tol) {
        let (polished, polished_res, newton_iters) =
            newton_polish(grid, params, model, u.clone(), opts.residual_tol)?;
        iterations += newton_iters;
        // accept the polish only if it lands on the right branch, stays
        // nonnegative, and actually met the tolerance
        if polished_res <= scaled_tol(grid, params, model, &polished, opts.residual_tol)
            && polished.values().iter().all(|&v| v >= 0.0)
            && fiber::classify(grid, params, model, &polished)?.branch == branch
        {
            separation_ok &= check_separation(grid, params, model, branch, &polished);
            energy = kirchhoff::energy(grid, params, model, &polished)?;
            u = polished;
            residual = polished_res;
            converged = true;
        }
    } else {
        converged = true;
    }
    Ok(DescentOutcome { u, energy, residual, iterations, converged, separation_ok })
}

/// Damped Newton iteration on the nodal weak residual, finite-difference
/// Jacobian, dense Gaussian elimination. Returns (iterate, residual, iters).
fn newton_polish(
    grid: &Grid,
    params: &ProblemParams,
    model: &KirchhoffModel,
    mut u: Field,
    tol: f64,
) -> Result<(Field, f64, usize)> {
    const NEWTON_ITERS: usize = 60;
    let n = grid.n();
    let mut res = kirchhoff::weak_residual(grid, params, model, &u)?;
    let mut rnorm = res.max_abs();
    let mut iters = 0;
    while rnorm > scaled_tol(grid, params, model, &u, tol) && iters < NEWTON_ITERS {
        iters += 1;
        let mut jac = vec![vec![0.0_f64; n]; n];
        let amp = u.max_abs().max(1e-12);
        for j in 0..n {
            let eps = 6e-6 * amp;
            let mut up = u.clone();
            up.values_mut()[j] += eps;
            let mut um = u.clone();
            um.values_mut()[j] -= eps;
            let rp = kirchhoff::weak_residual(grid, params, model, &up)?;
            let rm = kirchhoff::weak_residual(grid, params, model, &um)?;
            for i in 0..n {
                jac[i][j] = (rp.values()[i] - rm.values()[i]) / (2.0 * eps);
            }
        }
        let delta = match solve_dense(jac, res.values().to_vec()) {
            Some(d) => Field::new(d)?,
            None => break,
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= 1e-8 {
            let trial = u.axpy(-alpha, &delta);
            let tres = kirchhoff::weak_residual(grid, params, model, &trial)?;
            let tnorm = tres.max_abs();
            if tnorm < rnorm {
                u = trial;
                res = tres;
                rnorm = tnorm;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((u, rnorm, iters))
}

/// Gaussian elimination with partial pivoting; None on a (near-)singular pivot.
fn solve_dense(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                rhs[row] -= factor * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Lemma 7.1 norm/branch separation for the MODIFIED model: MINUS iterates
/// stay below k̂ in ‖·‖^p, PLUS iterates above. Vacuously true otherwise.
fn check_separation(
    grid: &Grid,
    params: &ProblemParams,
    model: &KirchhoffModel,
    branch: Branch,
    u: &Field,
) -> bool {
    if let ModelVariant::Modified { k_hat, .. } = model.variant {
        let s = grid::seminorm_w1p_pow(grid, u, params.p).unwrap_or(f64::NAN);
        match branch {
            Branch::Plus => s > k_hat,
            Branch::Minus => s < k_hat,
            Branch::Zero => false,
        }
    } else {
        true
    }
}

fn report_from_outcome(
    grid: &Grid,
    params: &ProblemParams,
    model: &KirchhoffModel,
    branch: Branch,
    outcome: DescentOutcome,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let fiber_profile = FiberProfile::of_field(grid, params, &outcome.u)?;
    let mut report = SolveReport {
        branch,
        u: outcome.u,
        energy: outcome.energy,
        residual_norm: outcome.residual,
        iterations: outcome.iterations,
        fiber: fiber_profile,
        checks: Vec::new(),
    };
    report.checks = verify_solution(grid, params, model, &report, opts.residual_tol)?;
    if matches!(model.variant, ModelVariant::Modified { .. }) {
        report.checks.push(Check::new(
            "lemma 7.1 separation on iterates",
            outcome.separation_ok,
            format!("branch {branch} stayed on its side of k̂"),
        ));
    }
    Ok(report)
}

/// Minimize J on the requested branch: best of `n_starts` random positive
/// starts, each run by projected descent with backtracking.
pub fn minimize_on_branch(
    grid: &Grid,
    params: &ProblemParams,
    model: &KirchhoffModel,
    branch: Branch,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let amplitude = match branch {
        Branch::Plus => 0.1,
        Branch::Minus => 1.0,
        Branch::Zero => return Err(Error::invalid("cannot minimize on the ZERO set")),
    };
    let mut best: Option<DescentOutcome> = None;
    let mut last_err: Option<Error> = None;
    for start_idx in 0..opts.n_starts as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(start_idx));
        let start = random_bumps(&mut rng, grid.n(), amplitude);
        match descend(grid, params, model, branch, opts, start) {
            Ok(out) if out.converged => {
                if best.as_ref().map_or(true, |b| out.energy < b.energy) {
                    best = Some(out);
                }
            }
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(out) => report_from_outcome(grid, params, model, branch, out, opts),
        None => Err(Error::SolverFailure(format!(
            "no start converged on branch {branch}{}",
            last_err.map(|e| format!(" (last projection error: {e})")).unwrap_or_default()
        ))),
    }
}

/// Minimize J on the branch from one supplied start (Theorem 2.4's third
/// solution starts from t̄_λ·v₀).
fn minimize_from_start(
    grid: &Grid,
    params: &ProblemParams,
    model: &KirchhoffModel,
    branch: Branch,
    opts: &SolveOptions,
    start: Field,
) -> Result<SolveReport> {
    let out = descend(grid, params, model, branch, opts, start)?;
    if !out.converged {
        return Err(Error::SolverFailure(format!(
            "descent from the supplied start stalled at residual {:.3e} on branch {branch}",
            out.residual
        )));
    }
    report_from_outcome(grid, params, model, branch, out, opts)
}

/// Unconstrained minimization of the coercive energy (Theorem 2.3 route (i)):
/// plain gradient descent with backtracking from fiber-optimal positive starts.
fn minimize_global(
    grid: &Grid,
    params: &ProblemParams,
    model: &KirchhoffModel,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let mut best: Option<(Field, f64, f64, usize)> = None;
    for start_idx in 0..opts.n_starts as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(start_idx));
        let shape = random_bumps(&mut rng, grid.n(), 1.0);
        // pick the best fiber scaling of the shape so the start already has
        // negative energy (J(tu) < 0 for small t since q < p)
        let mut u = shape.scaled(1e-3);
        let mut energy = kirchhoff::energy(grid, params, model, &u)?;
        for i in -30..30 {
            let t = 10.0_f64.powf(i as f64 / 10.0);
            let cand = shape.scaled(t);
            let e = kirchhoff::energy(grid, params, model, &cand)?;
            if e < energy {
                energy = e;
                u = cand;
            }
        }
        let mut step = opts.step_init;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < opts.max_iters {
            iterations += 1;
            let gradient = kirchhoff::energy_gradient(grid, params, model, &u)?;
            residual = gradient.max_abs();
            if residual <= scaled_tol(grid, params, model, &u, opts.residual_tol) {
                break;
            }
            if step < 1e-18 {
                break;
            }
            let trial = u.axpy(-step, &gradient).abs();
            let trial_energy = kirchhoff::energy(grid, params, model, &trial)?;
            if trial_energy <= energy + 1e-14 * energy.abs() {
                u = trial;
                energy = trial_energy;
                step *= 1.2;
            } else {
                step *= 0.5;
            }
        }
        if residual > scaled_tol(grid, params, model, &u, opts.residual_tol) {
            let (polished, polished_res, newton_iters) =
                newton_polish(grid, params, model, u.clone(), opts.residual_tol)?;
            iterations += newton_iters;
            if polished_res <= scaled_tol(grid, params, model, &polished, opts.residual_tol)
                && polished.values().iter().all(|&v| v >= 0.0)
            {
                energy = kirchhoff::energy(grid, params, model, &polished)?;
                u = polished;
                residual = polished_res;
                converged = true;
            }
        } else {
            converged = true;
        }
        if converged && best.as_ref().map_or(true, |b| energy < b.1) {
            best = Some((u, energy, residual, iterations));
        }
    }
    let (u, energy, residual, iterations) =
        best.ok_or_else(|| Error::SolverFailure("global minimization did not converge".into()))?;
    let class = fiber::classify(grid, params, model, &u)?;
    let fiber_profile = FiberProfile::of_field(grid, params, &u)?;
    let mut report = SolveReport {
        branch: class.branch,
        u,
        energy,
        residual_norm: residual,
        iterations,
        fiber: fiber_profile,
        checks: Vec::new(),
    };
    report.checks = verify_solution(grid, params, model, &report, opts.residual_tol)?;
    Ok(report)
}

/// Estimate the constants a pipeline needs, deterministically from the seed.
pub fn estimate_constants(
    grid: &Grid,
    params: &ProblemParams,
    opts: &SolveOptions,
    with_s_big: bool,
) -> Result<Estimates> {
    let s_q = thresholds::estimate_sobolev_constant(grid, params.p, params.q, opts.seed)?;
    let s_r = thresholds::estimate_sobolev_constant(grid, params.p, params.r, opts.seed)?;
    let (lambda_capital, _) =
        thresholds::estimate_lambda_capital(grid, params.p, &params.g, opts.seed)?;
    let s_big = if with_s_big {
        Some(thresholds::estimate_s_big(grid, params.p, params.r, &params.g, opts.seed)?.0)
    } else {
        None
    };
    Ok(Estimates { s_q, s_r, lambda_capital, s_big })
}

fn refuse_if_failing(report: &GateReport) -> Result<()> {
    if report.all_pass() {
        Ok(())
    } else {
        Err(Error::GateRefused(report.summary()))
    }
}

fn l2_distinct(grid: &Grid, a: &Field, b: &Field) -> bool {
    let diff = a.axpy(-1.0, b);
    diff.l2_norm(grid) > 1e-6 * (a.l2_norm(grid) + b.l2_norm(grid))
}

/// Theorem 2.1: super regime, two solutions of opposite branch.
pub fn solve_theorem_2_1(
    grid: &Grid,
    params: &ProblemParams,
    opts: &SolveOptions,
) -> Result<(SolveReport, SolveReport, ThresholdBundle)> {
    let estimates = estimate_constants(grid, params, opts, false)?;
    let bundle = thresholds::compute_thresholds(grid, params, &estimates, opts.c_star, opts.theta)?;
    let gates = thresholds::check_gates(params, &bundle);
    if gates.regime != Regime::Super {
        return Err(Error::GateRefused(format!("Theorem 2.1 requires r > p²; {}", gates.summary())));
    }
    refuse_if_failing(&gates)?;
    let model = params.plain_model();
    let mut plus = minimize_on_branch(grid, params, &model, Branch::Plus, opts)?;
    let mut minus = minimize_on_branch(grid, params, &model, Branch::Minus, opts)?;
    let distinct = l2_distinct(grid, &plus.u, &minus.u);
    let d = Check::new(
        "u+ and u- distinct in L2",
        distinct,
        format!("relative distance gate 1e-6"),
    );
    plus.checks.push(d.clone());
    minus.checks.push(d);
    // Theorem 5.1 Case (A) norm floor on the MINUS solution
    let floor = thresholds::super_minus_floor(params, estimates.s_r);
    let norm = grid::seminorm_w1p(grid, &minus.u, params.p)?;
    minus.checks.push(Check::new(
        "minus-branch norm floor (Theorem 5.1 Case A)",
        norm > floor,
        format!("‖u-‖ = {norm:.6e} vs floor {floor:.6e}"),
    ));
    Ok((plus, minus, bundle))
}

/// Theorem 2.2: critical regime; one solution for a ≥ 1/Λ, two below.
pub fn solve_theorem_2_2(
    grid: &Grid,
    params: &ProblemParams,
    opts: &SolveOptions,
) -> Result<(Vec<SolveReport>, ThresholdBundle)> {
    let estimates = estimate_constants(grid, params, opts, false)?;
    let bundle = thresholds::compute_thresholds(grid, params, &estimates, opts.c_star, opts.theta)?;
    let gates = thresholds::check_gates(params, &bundle);
    if gates.regime != Regime::Critical {
        return Err(Error::GateRefused(format!("Theorem 2.2 requires r = p²; {}", gates.summary())));
    }
    refuse_if_failing(&gates)?;
    let model = params.plain_model();
    if params.a >= 1.0 / estimates.lambda_capital {
        // route (i): N⁺ = N, one solution
        let plus = minimize_on_branch(grid, params, &model, Branch::Plus, opts)?;
        return Ok((vec![plus], bundle));
    }
    // route (ii). At r = p² the MINUS branch only exists on fields with
    // G(u) > a·A(u), i.e. near-optimizers of the Λ quotient, so random bumps
    // rarely admit a MINUS projection: start from the estimated optimizer.
    let mut plus = minimize_on_branch(grid, params, &model, Branch::Plus, opts)?;
    let (_, phi) = thresholds::estimate_lambda_capital(grid, params.p, &params.g, opts.seed)?;
    let mut minus = minimize_from_start(grid, params, &model, Branch::Minus, opts, phi)
        .or_else(|_| minimize_on_branch(grid, params, &model, Branch::Minus, opts))?;
    let distinct = l2_distinct(grid, &plus.u, &minus.u);
    let d = Check::new("u+ and u- distinct in L2", distinct, String::new());
    plus.checks.push(d.clone());
    minus.checks.push(d);
    let floor = thresholds::critical_minus_floor(params, estimates.lambda_capital)?;
    let norm = grid::seminorm_w1p(grid, &minus.u, params.p)?;
    minus.checks.push(Check::new(
        "minus-branch norm floor (Eq. 17)",
        norm > floor,
        format!("‖u-‖ = {norm:.6e} vs floor {floor:.6e}"),
    ));
    Ok((vec![plus, minus], bundle))
}

/// Theorem 2.3: sub regime. Route (ii) (truncated model, two solutions)
/// when its gates pass, otherwise route (i) (one global minimizer).
pub fn solve_theorem_2_3(
    grid: &Grid,
    params: &ProblemParams,
    opts: &SolveOptions,
) -> Result<(Vec<SolveReport>, ThresholdBundle)> {
    let estimates = estimate_constants(grid, params, opts, false)?;
    let bundle = thresholds::compute_thresholds(grid, params, &estimates, opts.c_star, opts.theta)?;
    let gates = thresholds::check_gates(params, &bundle);
    if gates.regime != Regime::Sub {
        return Err(Error::GateRefused(format!("Theorem 2.3 requires r < p²; {}", gates.summary())));
    }
    let route_ii = gates.applicable_theorem != "2.3(i)";
    if !route_ii {
        refuse_if_failing(&gates)?;
        let report = minimize_global(grid, params, &params.plain_model(), opts)?;
        return Ok((vec![report], bundle));
    }
    let reports = solve_truncated_pair(grid, params, opts, &bundle)?;
    Ok((reports, bundle))
}

/// The Theorem 2.3(ii) machinery: truncated model at the interval midpoint,
/// both branches, un-truncation norm cap and residual agreement checks.
fn solve_truncated_pair(
    grid: &Grid,
    params: &ProblemParams,
    opts: &SolveOptions,
    bundle: &ThresholdBundle,
) -> Result<Vec<SolveReport>> {
    let k_cut = bundle
        .k_cut
        .ok_or_else(|| Error::GateRefused("truncation constants unavailable (need a > 0, r < p²)".into()))?;
    let model = KirchhoffModel::truncated(params.a, params.b, k_cut);
    let mut plus = minimize_on_branch(grid, params, &model, Branch::Plus, opts)?;
    let mut minus = minimize_on_branch(grid, params, &model, Branch::Minus, opts)?;
    let cap = params.b * (params.r - params.p) / (params.p * params.a);
    let plain = params.plain_model();
    for report in [&mut plus, &mut minus] {
        let s = grid::seminorm_w1p_pow(grid, &report.u, params.p)?;
        report.checks.push(Check::new(
            "un-truncation norm cap ‖u‖^p < b(r-p)/(pa)",
            s < cap,
            format!("‖u‖^p = {s:.6e} vs cap {cap:.6e}"),
        ));
        // below the cut the truncated and plain residuals coincide
        let res_trunc = kirchhoff::weak_residual(grid, params, &model, &report.u)?;
        let res_plain = kirchhoff::weak_residual(grid, params, &plain, &report.u)?;
        let diff = res_trunc.axpy(-1.0, &res_plain).max_abs();
        let scale = res_trunc.max_abs().max(1.0);
        report.checks.push(Check::new(
            "plain/truncated residual agreement",
            diff <= 1e-12 * scale,
            format!("max difference {diff:.3e}"),
        ));
    }
    let distinct = l2_distinct(grid, &plus.u, &minus.u);
    let d = Check::new("u+ and u- distinct in L2", distinct, String::new());
    plus.checks.push(d.clone());
    minus.checks.push(d);
    Ok(vec![plus, minus])
}

/// v₀ = k̂^{1/p} u₀ / ‖u₀‖ from the 𝕊 minimizer, with the §7 display
/// inequality ∫g|v₀|^r > pb²(r-p)/(a(2p-r)²) verified.
pub fn construct_v0(
    grid: &Grid,
    p: f64,
    r: f64,
    g: &Field,
    a: f64,
    b: f64,
    seed: u64,
) -> Result<Field> {
    let (s_big, u0) = thresholds::estimate_s_big(grid, p, r, g, seed)?;
    let k_hat = thresholds::k_hat(p, r, a, b)?;
    let a_star = p.powf(r / (p - r)) * (r - p).powf(p) / (r * s_big)
        * ((2.0 * p - r) / b).powf((p * p - r) / (r - p));
    if a >= a_star {
        return Err(Error::ConstructionFailure(format!(
            "v₀ requires a < A* = {a_star:.6e}, got a = {a:.6e}"
        )));
    }
    let norm = grid::seminorm_w1p(grid, &u0, p)?;
    let v0 = u0.scaled(k_hat.powf(1.0 / p) / norm);
    let g_int = grid::integrate_weighted_power(grid, g, &v0, r)?;
    let required = p * b * b * (r - p) / (a * (2.0 * p - r) * (2.0 * p - r));
    if g_int <= required {
        return Err(Error::ConstructionFailure(format!(
            "∫g|v₀|^r = {g_int:.6e} does not exceed pb²(r-p)/(a(2p-r)²) = {required:.6e}"
        )));
    }
    Ok(v0)
}

/// Theorem 2.4: three solutions in the sub regime — the truncated pair plus
/// the modified-model solution started from t̄_λ·v₀.
pub fn solve_theorem_2_4(
    grid: &Grid,
    params: &ProblemParams,
    opts: &SolveOptions,
) -> Result<(SolveReport, SolveReport, SolveReport, ThresholdBundle)> {
    let estimates = estimate_constants(grid, params, opts, true)?;
    let mut bundle =
        thresholds::compute_thresholds(grid, params, &estimates, opts.c_star, opts.theta)?;
    // Lemma 7.2 feasibility refinement of λ̃* needs v₀
    let v0 = construct_v0(grid, params.p, params.r, &params.g, params.a, params.b, opts.seed)?;
    let v0_profile = FiberProfile::of_field(
        grid,
        &ProblemParams::new(
            params.p,
            params.q,
            params.r,
            params.a,
            params.b,
            1.0,
            params.f.clone(),
            params.g.clone(),
        )?,
        &v0,
    )?;
    let g_int_v0 = v0_profile.g_moment;
    if let Some(lh) = bundle.lambda_hat_cap {
        bundle.lambda_tilde_star = Some(thresholds::refine_lambda_tilde_star(
            &v0_profile,
            params.a,
            params.b,
            g_int_v0,
            opts.theta,
            lh,
        )?);
    }
    let gates = thresholds::check_gates(params, &bundle);
    if gates.applicable_theorem != "2.4" {
        return Err(Error::GateRefused(gates.summary()));
    }
    refuse_if_failing(&gates)?;

    // (1) truncated pair
    let pair = solve_truncated_pair(grid, params, opts, &bundle)?;
    let (mut plus1, mut minus) = {
        let mut it = pair.into_iter();
        (it.next().unwrap(), it.next().unwrap())
    };

    // (2) modified-model solution from the Lemma 7.2 start
    let k_hat = bundle.k_hat.ok_or_else(|| Error::GateRefused("k̂ unavailable".into()))?;
    let modified = KirchhoffModel::modified(params.a, params.b, k_hat, params.q);
    let mut lam_profile = v0_profile;
    lam_profile.f_moment *= params.lambda;
    let t_bar = thresholds::mbar_root(&lam_profile, params.a, params.b, g_int_v0)?;
    let mut hat =
        minimize_from_start(grid, params, &modified, Branch::Plus, opts, v0.scaled(t_bar))?;
    let s_hat = grid::seminorm_w1p_pow(grid, &hat.u, params.p)?;
    hat.checks.push(Check::new(
        "‖û‖^p > k̂ (Theorem 7.3)",
        s_hat > k_hat,
        format!("‖û‖^p = {s_hat:.6e} vs k̂ = {k_hat:.6e}"),
    ));

    // (3) norm sandwich and three-way distinctness
    let cap = params.b * (params.r - params.p) / (params.p * params.a);
    let floor = thresholds::truncated_minus_floor(
        params,
        estimates.s_r,
        bundle.c_tilde_1.unwrap_or(0.0),
    );
    let s_minus = grid::seminorm_w1p_pow(grid, &minus.u, params.p)?;
    let norm_minus = s_minus.powf(1.0 / params.p);
    minus.checks.push(Check::new(
        "sandwich: floor < ‖u-‖^p < b(r-p)/(pa)",
        norm_minus > floor && s_minus < cap,
        format!("floor {floor:.6e} < ‖u-‖ {norm_minus:.6e}, ‖u-‖^p {s_minus:.6e} < cap {cap:.6e}"),
    ));
    hat.checks.push(Check::new(
        "sandwich: b(r-p)/(pa) < ‖u^(p),+‖^p",
        s_hat > cap,
        format!("cap {cap:.6e} < ‖û‖^p {s_hat:.6e}"),
    ));
    let pairwise = l2_distinct(grid, &plus1.u, &minus.u)
        && l2_distinct(grid, &plus1.u, &hat.u)
        && l2_distinct(grid, &minus.u, &hat.u);
    let d = Check::new("three solutions pairwise distinct in L2", pairwise, String::new());
    plus1.checks.push(d.clone());
    minus.checks.push(d.clone());
    hat.checks.push(d);
    Ok((plus1, minus, hat, bundle))
}

/// Every conclusion checkable on a single report: positivity, residual,
/// branch classification, Nehari membership, and the energy sign asserted
/// by Theorems 5.1/5.2/6.3 (skipped for the modified model, whose PLUS
/// minimizer carries no sign assertion).
pub fn verify_solution(
    grid: &Grid,
    params: &ProblemParams,
    model: &KirchhoffModel,
    report: &SolveReport,
    residual_tol: f64,
) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let nonneg = report.u.values().iter().all(|&v| v >= 0.0);
    checks.push(Check::new("positivity", nonneg, "all nodal values >= 0".into()));
    let residual = kirchhoff::weak_residual(grid, params, model, &report.u)?.max_abs();
    let res_tol = scaled_tol(grid, params, model, &report.u, residual_tol);
    checks.push(Check::new(
        "residual",
        residual <= res_tol,
        format!("max |R_i| = {residual:.3e} vs scaled tol {res_tol:.1e}"),
    ));
    let class = fiber::classify(grid, params, model, &report.u)?;
    checks.push(Check::new(
        "branch classification",
        class.branch == report.branch,
        format!("classified {} expected {}", class.branch, report.branch),
    ));
    // compare I'(1) against the size of its constituent terms, not against
    // the norm: small-amplitude solutions have all terms far below 1
    let s = grid::seminorm_w1p_pow(grid, &report.u, params.p)?;
    let f_int = grid::integrate_weighted_power(grid, &params.f, &report.u, params.q)?;
    let g_int = grid::integrate_weighted_power(grid, &params.g, &report.u, params.r)?;
    let scale = model.m_value(params.p, s)? * s
        + (params.lambda * f_int).abs()
        + g_int.abs();
    checks.push(Check::new(
        "Nehari membership",
        class.membership_residual.abs() <= 1e-8 * scale.max(f64::MIN_POSITIVE),
        format!("I'(1) = {:.3e} vs term scale {scale:.3e}", class.membership_residual),
    ));
    if !matches!(model.variant, ModelVariant::Modified { .. }) {
        let sign_ok = match report.branch {
            Branch::Plus => report.energy < 0.0,
            Branch::Minus => report.energy > 0.0,
            Branch::Zero => false,
        };
        checks.push(Check::new(
            "energy sign",
            sign_ok,
            format!("J = {:.6e} on branch {}", report.energy, report.branch),
        ));
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn super_setup(n: usize, lambda: f64) -> (Grid, ProblemParams) {
        let grid = Grid::new(1.0, n).unwrap();
        let params = ProblemParams::new(
            2.0,
            1.5,
            5.0,
            1.0,
            1.0,
            lambda,
            Field::constant(n, 1.0),
            Field::constant(n, 1.0),
        )
        .unwrap();
        (grid, params)
    }

    fn fast_opts(seed: u64) -> SolveOptions {
        SolveOptions { seed, n_starts: 3, max_iters: 30_000, ..SolveOptions::default() }
    }

    #[test]
    fn minimize_both_branches_super() {
        let (grid, params) = super_setup(24, 0.05);
        let model = params.plain_model();
        let opts = fast_opts(3);
        let plus = minimize_on_branch(&grid, &params, &model, Branch::Plus, &opts).unwrap();
        let minus = minimize_on_branch(&grid, &params, &model, Branch::Minus, &opts).unwrap();
        assert!(plus.energy < 0.0, "J(u+) = {}", plus.energy);
        assert!(minus.energy > 0.0, "J(u-) = {}", minus.energy);
        assert!(
            plus.residual_norm <= scaled_tol(&grid, &params, &model, &plus.u, opts.residual_tol)
        );
        assert!(
            minus.residual_norm <= scaled_tol(&grid, &params, &model, &minus.u, opts.residual_tol)
        );
        assert!(plus.all_checks_pass(), "{:?}", plus.checks);
        assert!(minus.all_checks_pass(), "{:?}", minus.checks);
    }

    #[test]
    fn theorem_2_1_pipeline() {
        let (grid, mut params) = super_setup(24, 0.0);
        let opts = fast_opts(5);
        // pick λ safely under the gate: compute the bundle once
        let estimates = estimate_constants(&grid, &params, &opts, false).unwrap();
        let bundle =
            thresholds::compute_thresholds(&grid, &params, &estimates, 1.0, 1.0).unwrap();
        params.lambda = 0.5 * bundle.lambda_0_a.unwrap();
        let (plus, minus, _) = solve_theorem_2_1(&grid, &params, &opts).unwrap();
        assert!(plus.energy < 0.0 && minus.energy > 0.0);
        assert!(plus.all_checks_pass(), "{:?}", plus.checks);
        assert!(minus.all_checks_pass(), "{:?}", minus.checks);
        // refusal above the gate
        params.lambda = 2.0 * bundle.lambda_0_a.unwrap();
        assert!(matches!(
            solve_theorem_2_1(&grid, &params, &opts),
            Err(Error::GateRefused(_))
        ));
    }

    #[test]
    fn determinism_bit_identical() {
        let (grid, params) = super_setup(16, 0.02);
        let model = params.plain_model();
        let opts = fast_opts(11);
        let a = minimize_on_branch(&grid, &params, &model, Branch::Plus, &opts).unwrap();
        let b = minimize_on_branch(&grid, &params, &model, Branch::Plus, &opts).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn verify_catches_corruption() {
        let (grid, params) = super_setup(16, 0.02);
        let model = params.plain_model();
        let opts = fast_opts(13);
        let report = minimize_on_branch(&grid, &params, &model, Branch::Plus, &opts).unwrap();
        // negative node → positivity fails
        let mut bad = report.clone();
        bad.u.values_mut()[3] = -0.1;
        let checks = verify_solution(&grid, &params, &model, &bad, opts.residual_tol).unwrap();
        assert!(!checks.iter().find(|c| c.name == "positivity").unwrap().pass);
        // scaling off the manifold → membership fails
        let mut scaled = report.clone();
        scaled.u = scaled.u.scaled(1.1);
        let checks = verify_solution(&grid, &params, &model, &scaled, opts.residual_tol).unwrap();
        assert!(!checks.iter().find(|c| c.name == "Nehari membership").unwrap().pass);
    }

    #[test]
    fn theorem_2_3_route_i_global_min() {
        let n = 24;
        let grid = Grid::new(1.0, n).unwrap();
        // large a → Theorem 2.4/2.3(ii) gates fail → coercive route (i)
        let params = ProblemParams::new(
            2.0,
            1.5,
            3.0,
            50.0,
            1.0,
            0.5,
            Field::constant(n, 1.0),
            Field::constant(n, 1.0),
        )
        .unwrap();
        let opts = fast_opts(7);
        let (reports, _) = solve_theorem_2_3(&grid, &params, &opts).unwrap();
        assert_eq!(reports.len(), 1);
        assert!(reports[0].energy < 0.0, "β_λ = {}", reports[0].energy);
        assert!(reports[0].residual_norm <= opts.residual_tol);
    }

    #[test]
    fn construct_v0_conditions() {
        let n = 24;
        let grid = Grid::new(1.0, n).unwrap();
        let g = Field::constant(n, 1.0);
        let (p, r, b) = (2.0, 3.0, 1.0);
        // a = A*/2 → succeeds with the norm condition exact
        let (s_big, _) = thresholds::estimate_s_big(&grid, p, r, &g, 21).unwrap();
        let a_star = p.powf(r / (p - r)) * (r - p).powf(p) / (r * s_big)
            * ((2.0 * p - r) / b).powf((p * p - r) / (r - p));
        let a = 0.5 * a_star;
        let v0 = construct_v0(&grid, p, r, &g, a, b, 21).unwrap();
        let k_hat = thresholds::k_hat(p, r, a, b).unwrap();
        let s = grid::seminorm_w1p_pow(&grid, &v0, p).unwrap();
        assert!((s - k_hat).abs() <= 1e-8 * k_hat, "‖v₀‖² = {s} vs k̂ = {k_hat}");
        // a = 2A* → refused
        assert!(matches!(
            construct_v0(&grid, p, r, &g, 2.0 * a_star, b, 21),
            Err(Error::ConstructionFailure(_))
        ));
    }
}
