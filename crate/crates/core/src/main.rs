use clap::{Parser, Subcommand};
use nehari::config::RunConfig;
use nehari::error::Error;
use nehari::fiber::{self, FiberProfile};
use nehari::grid::{self, Field, Grid};
use nehari::kirchhoff::ProblemParams;
use nehari::solver::{self, SolveOptions, SolveReport};
use nehari::thresholds::{self, Regime};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nehari", version, about = "Nehari-manifold solver for a 1-D p-Kirchhoff problem")]
struct Cli {
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured RNG seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the configured residual tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate embedding constants and print the threshold bundle as JSON
    Constants,
    /// Tabulate the fibering map of a field over a log grid of t (CSV)
    Fiber {
        /// CSV field to analyze (default: a sine bump)
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Run the theorem pipeline selected by the gates; one report per solution
    Solve,
    /// Sweep one parameter; one CSV row of gates/energies/norms per value
    Sweep {
        /// Parameter to vary: lambda, a, or n
        #[arg(long)]
        axis: String,
        /// Comma-separated values (may be empty)
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: verification checks failed");
                ExitCode::from(1)
            }
        }
        Err(Error::GateRefused(msg)) => {
            eprintln!("gate refused: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.options.seed = seed;
    }
    if let Some(tol) = cli.tol {
        if !(tol > 0.0) {
            return Err(Error::Config(format!("--tol must be positive, got {tol}")));
        }
        cfg.options.residual_tol = tol;
    }
    Ok(cfg)
}

fn emit(out: &Option<PathBuf>, name: &str, content: &str) -> Result<(), Error> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), content)?;
        }
        None => println!("--- {name} ---\n{content}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, Error> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Constants => cmd_constants(&cfg, &cli.out),
        Command::Fiber { field } => cmd_fiber(&cfg, field.as_deref(), &cli.out),
        Command::Solve => cmd_solve(&cfg, &cli.out),
        Command::Sweep { axis, values } => cmd_sweep(&cfg, axis, values, &cli.out),
    }
}

/// Whether the 𝕊 estimator is needed (and well-posed) for these parameters.
fn wants_s_big(params: &ProblemParams) -> bool {
    params.r < params.p * params.p - 1e-12
        && params.a > 0.0
        && 2.0 * params.p - params.r > 0.0
        && params.g.max() > 0.0
}

fn bundle_and_gates(
    grid: &Grid,
    params: &ProblemParams,
    opts: &SolveOptions,
) -> Result<(thresholds::ThresholdBundle, thresholds::GateReport), Error> {
    let estimates = solver::estimate_constants(grid, params, opts, wants_s_big(params))?;
    let bundle = thresholds::compute_thresholds(grid, params, &estimates, opts.c_star, opts.theta)?;
    let gates = thresholds::check_gates(params, &bundle);
    Ok((bundle, gates))
}

fn cmd_constants(cfg: &RunConfig, out: &Option<PathBuf>) -> Result<bool, Error> {
    let (grid, params, _, opts) = cfg.build()?;
    let (bundle, gates) = bundle_and_gates(&grid, &params, &opts)?;
    let doc = json!({
        "seed": opts.seed,
        "n": grid.n(),
        "C_star": opts.c_star,
        "theta": opts.theta,
        "bundle": bundle,
        "gates": gates,
    });
    emit(out, "constants.json", &serde_json::to_string_pretty(&doc)?)?;
    Ok(true)
}

fn sine_bump(grid: &Grid) -> Field {
    let vals = (0..grid.n())
        .map(|i| {
            let x = (i as f64 + 1.0) * grid.h();
            (std::f64::consts::PI * x / grid.length()).sin()
        })
        .collect();
    Field::new(vals).expect("sine values are finite")
}

fn cmd_fiber(cfg: &RunConfig, field: Option<&Path>, out: &Option<PathBuf>) -> Result<bool, Error> {
    let (grid, params, _, _) = cfg.build()?;
    let u = match field {
        Some(path) => grid::field_from_csv(&grid, &std::fs::read_to_string(path)?)?,
        None => sine_bump(&grid),
    };
    if u.is_zero() {
        return Err(Error::invalid("nonzero field required"));
    }
    let profile = FiberProfile::of_field(&grid, &params, &u)?;
    let (a, b) = (params.a, params.b);
    let mut csv = String::from("t,h_a,I,I1,I2\n");
    for i in 0..=200 {
        let t = 10.0_f64.powf(-2.0 + 4.0 * i as f64 / 200.0);
        csv.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            t,
            fiber::h_map(&profile, a, b, t),
            fiber::fiber_value(&profile, a, b, t)?,
            fiber::fiber_deriv1(&profile, a, b, t)?,
            fiber::fiber_deriv2(&profile, a, b, t)?,
        ));
    }
    match fiber::nehari_roots(&profile, a, b) {
        Ok(roots) => {
            csv.push_str(&format!("# roots,{}\n", roots.len()));
            for (t, class) in roots {
                csv.push_str(&format!("# root,{:.12e},{}\n", t, class.branch));
            }
        }
        Err(e) => csv.push_str(&format!("# roots,0,{e}\n")),
    }
    emit(out, "fiber.csv", &csv)?;
    Ok(true)
}

fn write_reports(
    out: &Option<PathBuf>,
    grid: &Grid,
    reports: &[SolveReport],
) -> Result<bool, Error> {
    let mut all_pass = true;
    for (k, report) in reports.iter().enumerate() {
        all_pass &= report.all_checks_pass();
        emit(out, &format!("solution_{}.json", k + 1), &serde_json::to_string_pretty(report)?)?;
        emit(out, &format!("solution_{}.csv", k + 1), &grid::field_to_csv(grid, &report.u))?;
    }
    Ok(all_pass)
}

fn cmd_solve(cfg: &RunConfig, out: &Option<PathBuf>) -> Result<bool, Error> {
    let (grid, params, _, opts) = cfg.build()?;
    let (_, gates) = bundle_and_gates(&grid, &params, &opts)?;
    let (reports, bundle) = match gates.regime {
        Regime::Super => {
            let (plus, minus, bundle) = solver::solve_theorem_2_1(&grid, &params, &opts)?;
            (vec![plus, minus], bundle)
        }
        Regime::Critical => {
            let (reports, bundle) = solver::solve_theorem_2_2(&grid, &params, &opts)?;
            (reports, bundle)
        }
        Regime::Sub => {
            if gates.applicable_theorem == "2.4" {
                let (plus, minus, hat, bundle) = solver::solve_theorem_2_4(&grid, &params, &opts)?;
                (vec![plus, minus, hat], bundle)
            } else {
                let (reports, bundle) = solver::solve_theorem_2_3(&grid, &params, &opts)?;
                (reports, bundle)
            }
        }
    };
    let run_doc = json!({
        "seed": opts.seed,
        "residual_tol": opts.residual_tol,
        "solutions": reports.len(),
        "gates": thresholds::check_gates(&params, &bundle),
        "bundle": bundle,
    });
    emit(out, "run.json", &serde_json::to_string_pretty(&run_doc)?)?;
    write_reports(out, &grid, &reports)
}

struct SweepRow {
    value: f64,
    fields: Result<Vec<String>, Error>,
}

const SWEEP_HEADER: &str = "axis,value,regime,theorem,gates_pass,s_r,minus_floor,\
energy_plus,norm_plus,energy_minus,norm_minus,roots,error";

fn sweep_config(cfg: &RunConfig, axis: &str, value: f64) -> Result<RunConfig, Error> {
    let mut c = cfg.clone();
    match axis {
        "lambda" => c.params.lambda = value,
        "a" => c.params.a = value,
        "n" => {
            if value <= 0.0 || value.fract() != 0.0 {
                return Err(Error::invalid(format!("n must be a positive integer, got {value}")));
            }
            c.grid.n = value as usize;
        }
        other => return Err(Error::invalid(format!("unknown sweep axis {other:?}"))),
    }
    Ok(c)
}

fn sweep_row(cfg: &RunConfig, axis: &str, value: f64) -> Result<Vec<String>, Error> {
    let row_cfg = sweep_config(cfg, axis, value)?;
    let (grid, params, model, opts) = row_cfg.build()?;
    let (bundle, gates) = bundle_and_gates(&grid, &params, &opts)?;
    let regime = format!("{:?}", gates.regime).to_uppercase();
    let minus_floor = match gates.regime {
        Regime::Super => Some(thresholds::super_minus_floor(&params, bundle.s_r)),
        Regime::Critical => thresholds::critical_minus_floor(&params, bundle.lambda_capital).ok(),
        Regime::Sub => None,
    };
    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.9e}")).unwrap_or_default();
    let branch_cols = |r: Result<SolveReport, Error>| match r {
        Ok(rep) => {
            let norm = grid::seminorm_w1p(&grid, &rep.u, params.p).unwrap_or(f64::NAN);
            (format!("{:.9e}", rep.energy), format!("{norm:.9e}"))
        }
        Err(_) => (String::new(), String::new()),
    };
    let (energy_plus, norm_plus) = branch_cols(solver::minimize_on_branch(
        &grid,
        &params,
        &model,
        fiber::Branch::Plus,
        &opts,
    ));
    let (energy_minus, norm_minus) = branch_cols(solver::minimize_on_branch(
        &grid,
        &params,
        &model,
        fiber::Branch::Minus,
        &opts,
    ));
    let profile = FiberProfile::of_field(&grid, &params, &sine_bump(&grid))?;
    let roots = fiber::nehari_roots(&profile, params.a, params.b)
        .map(|r| r.len().to_string())
        .unwrap_or_else(|_| "0".into());
    Ok(vec![
        regime,
        gates.applicable_theorem.clone(),
        gates.all_pass().to_string(),
        format!("{:.9e}", bundle.s_r),
        fmt_opt(minus_floor),
        energy_plus,
        norm_plus,
        energy_minus,
        norm_minus,
        roots,
        String::new(),
    ])
}

fn cmd_sweep(
    cfg: &RunConfig,
    axis: &str,
    values: &[f64],
    out: &Option<PathBuf>,
) -> Result<bool, Error> {
    if !matches!(axis, "lambda" | "a" | "n") {
        return Err(Error::invalid(format!(
            "sweep axis must be one of lambda, a, n; got {axis:?}"
        )));
    }
    // rows run in parallel, the collector writes them in input order
    let rows: Vec<SweepRow> = std::thread::scope(|scope| {
        let handles: Vec<_> = values
            .iter()
            .map(|&value| {
                scope.spawn(move || SweepRow { value, fields: sweep_row(cfg, axis, value) })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep row panicked")).collect()
    });
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for row in rows {
        let cols = match row.fields {
            Ok(cols) => cols,
            // per-row failures are data: blank metrics, message in the error column
            Err(e) => {
                let mut blank = vec![String::new(); 10];
                blank.push(e.to_string().replace(',', ";"));
                blank
            }
        };
        csv.push_str(&format!("{axis},{:.9e},{}\n", row.value, cols.join(",")));
    }
    emit(out, "sweep.csv", &csv)?;
    Ok(true)
}
