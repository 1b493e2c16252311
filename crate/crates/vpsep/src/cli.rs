//! Command-line orchestration: single runs, twin runs, sweeps, the oracle
//! check suite, and assumption validation. All file output lives here.

use crate::coeffs::validate_assumptions;
use crate::config::{self, RunConfig};
use crate::dynamics::{self, ModelParams};
use crate::energetics;
use crate::error::VpsError;
use crate::grid::{self, Grid, ScalarField, SymTensorField, VectorField};
use crate::relenergy;
use crate::state::{make_initial, PerturbMask, Perturbation, State};
use crate::timestep::{self, SchemeConfig};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "vpsep", version, about = "Viscoelastic phase separation simulator with a relative-energy verification harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// Path to a TOML run configuration (defaults apply when omitted).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override scheme.dt.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Override experiment.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override output.dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate a single trajectory and write the energy CSV.
    Run(CommonArgs),
    /// Advance a perturbed/reference pair and write the relative-energy CSV.
    Twin {
        #[command(flatten)]
        common: CommonArgs,
        /// Override experiment.eps.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Perturbation-amplitude sweep with a scaling summary CSV.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Worker pool size (default: hardware threads).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the built-in oracle check suite.
    Check,
    /// Validate the model assumptions for a config.
    Validate(CommonArgs),
}

fn load_config(common: &CommonArgs) -> crate::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => config::parse_config(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(dt) = common.dt {
        cfg.scheme.dt = dt;
    }
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_manifest(dir: &Path, cfg: &RunConfig, wall: f64) -> crate::Result<()> {
    let body = format!(
        "version = {:?}\nwall_seconds = {}\n\n{}",
        env!("CARGO_PKG_VERSION"),
        energetics::fmt_f64(wall),
        config::normalize(cfg)
    );
    std::fs::write(dir.join("manifest.toml"), body)?;
    Ok(())
}

fn write_diagnostic(dir: &Path, err: &VpsError) {
    let (kind, time) = match err {
        VpsError::Numerical { time, .. } => ("numerical", Some(*time)),
        VpsError::Config(_) => ("config", None),
        _ => ("error", None),
    };
    let body = serde_json::json!({
        "error": format!("{err}"),
        "kind": kind,
        "time": time,
    });
    let _ = std::fs::create_dir_all(dir);
    let _ = std::fs::write(
        dir.join("diagnostic.json"),
        serde_json::to_string_pretty(&body).expect("diagnostic serializes"),
    );
}

fn cmd_run(cfg: &RunConfig) -> crate::Result<()> {
    let started = Instant::now();
    let (grid, params, scheme) = cfg.build()?;
    let dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&dir)?;
    let initial = make_initial(&grid, cfg.initial_kind()?, cfg.experiment.seed)?;
    let traj = timestep::run(&initial, cfg.n_steps(), &scheme, &params, |_, _| {})?;
    let series = energetics::energy_series(&traj, &params);
    let residual = energetics::energy_residual_from_series(&series)?;
    energetics::write_energy_csv(&dir.join("energy.csv"), &series, &residual)?;
    if cfg.output.snapshots {
        traj.final_state().save(&dir.join("final"))?;
    }
    write_manifest(&dir, cfg, started.elapsed().as_secs_f64())?;
    println!(
        "run: {} steps, final t = {}, energy.csv written to {}",
        traj.reports.len(),
        energetics::fmt_f64(traj.final_state().time),
        dir.display()
    );
    Ok(())
}

fn cmd_twin(cfg: &RunConfig, eps: Option<f64>) -> crate::Result<()> {
    let started = Instant::now();
    let (grid, params, scheme) = cfg.build()?;
    let dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&dir)?;
    let zbar0 = make_initial(&grid, cfg.initial_kind()?, cfg.experiment.seed)?;
    let pert = Perturbation {
        eps: eps.unwrap_or(cfg.experiment.eps),
        seed: cfg.experiment.perturbation_seed,
        mask: PerturbMask::default(),
    };
    let a = cfg.penalty()?;
    let twin = relenergy::twin_run(&zbar0, &pert, cfg.n_steps(), &scheme, &params, a)?;
    relenergy::write_twin_csv(&dir.join("twin.csv"), &twin)?;
    write_manifest(&dir, cfg, started.elapsed().as_secs_f64())?;
    let e_final = twin.rel_energy.last().map(|r| r.total).unwrap_or(f64::NAN);
    println!(
        "twin: eps = {}, E_rel(0) = {}, E_rel(T) = {}, twin.csv written to {}",
        energetics::fmt_f64(pert.eps),
        energetics::fmt_f64(twin.e0()),
        energetics::fmt_f64(e_final),
        dir.display()
    );
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig) -> crate::Result<()> {
    let started = Instant::now();
    let (grid, params, scheme) = cfg.build()?;
    let dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&dir)?;
    let zbar0 = make_initial(&grid, cfg.initial_kind()?, cfg.experiment.seed)?;
    let a = cfg.penalty()?;
    let report = relenergy::perturbation_sweep(
        &zbar0,
        &cfg.experiment.amplitudes,
        cfg.experiment.perturbation_seed,
        cfg.n_steps(),
        &scheme,
        &params,
        a,
    )?;
    relenergy::write_sweep_csv(&dir.join("sweep.csv"), &report)?;
    write_manifest(&dir, cfg, started.elapsed().as_secs_f64())?;
    println!(
        "sweep: {} amplitudes, slope = {}, chat = {}, sweep.csv written to {}",
        report.entries.len(),
        energetics::fmt_f64(report.slope),
        energetics::fmt_f64(report.chat),
        dir.display()
    );
    Ok(())
}

fn cmd_validate(cfg: &RunConfig) -> crate::Result<()> {
    let coeffs = cfg.model.coefficients.build()?;
    let potential = cfg.model.potential.build()?;
    let report = validate_assumptions(&coeffs, &potential);
    for c in &report.clauses {
        println!("{} {} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if report.all_pass() {
        println!("validate: all {} clauses pass", report.clauses.len());
        Ok(())
    } else {
        Err(VpsError::Config("assumption validation failed".into()))
    }
}

// ---------------------------------------------------------------------------
// Check suite: fast self-contained oracles.

struct CheckOutcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check_trace_identity() -> CheckOutcome {
    let g = Grid::unit(64).expect("valid grid");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let psi = ScalarField::from_vec(
            &g,
            (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .expect("length matches");
        let psi = grid::band_limit(&psi, 0.25);
        let gp = grid::gradient(&psi);
        let u = grid::leray_project(&VectorField { x: gp.y, y: gp.x.scaled(-1.0) });
        let sup = u.magnitude().max_abs().max(1e-300);
        let u = VectorField { x: u.x.scaled(1.0 / sup), y: u.y.scaled(1.0 / sup) };
        let c = SymTensorField {
            xx: ScalarField::constant(&g, rng.gen_range(-1.0..1.0)),
            xy: ScalarField::constant(&g, rng.gen_range(-1.0..1.0)),
            yy: ScalarField::constant(&g, rng.gen_range(-1.0..1.0)),
        };
        let r = dynamics::hana_identity_residual(&c, &u).expect("solenoidal u");
        worst = worst.max(r);
    }
    CheckOutcome {
        name: "trace identity",
        pass: worst <= 1e-12,
        detail: format!("max residual {worst:.3e}"),
    }
}

fn check_spectral_operators() -> CheckOutcome {
    let g = Grid::unit(64).expect("valid grid");
    let k = 2.0 * std::f64::consts::PI;
    let f = ScalarField::from_fn(&g, |x, y| (3.0 * k * x).sin() * (2.0 * k * y).cos());
    let lap = grid::laplacian(&f);
    let expect = f.scaled(-(9.0 + 4.0) * k * k);
    let e1 = lap.sub(&expect).max_abs() / (13.0 * k * k);
    let gf = grid::gradient(&f);
    let gx_expect = ScalarField::from_fn(&g, |x, y| 3.0 * k * (3.0 * k * x).cos() * (2.0 * k * y).cos());
    let e2 = gf.x.sub(&gx_expect).max_abs() / (3.0 * k);
    let div_grad = grid::divergence(&grid::gradient(&f));
    let e3 = div_grad.sub(&lap).max_abs() / (13.0 * k * k);
    // Leray idempotence
    let v = VectorField { x: f.clone(), y: gx_expect.clone() };
    let p1 = grid::leray_project(&v);
    let p2 = grid::leray_project(&p1);
    let e4 = p2.sub(&p1).max_abs() / p1.max_abs().max(1e-300);
    let worst = e1.max(e2).max(e3).max(e4);
    CheckOutcome {
        name: "spectral operators",
        pass: e1 <= 1e-12 && e2 <= 1e-12 && e3 <= 1e-12 && e4 <= 1e-13,
        detail: format!("max relative error {worst:.3e}"),
    }
}

fn check_q_relaxation() -> CheckOutcome {
    let g = Grid::unit(16).expect("valid grid");
    let q0 = 0.6;
    let mut s = State::uniform_rest(&g, 0.5);
    s.q = ScalarField::constant(&g, q0);
    let cfg = SchemeConfig { dt: 1e-4, ..SchemeConfig::default() };
    let params = ModelParams {
        coeffs: crate::coeffs::CoefficientSet::relaxation_test_mode(1.0),
        ..ModelParams::default()
    };
    match timestep::run(&s, 10_000, &cfg, &params, |_, _| {}) {
        Ok(traj) => {
            let qf = traj.final_state().q.data()[0];
            let expect = q0 * (-1.0f64).exp();
            let rel = ((qf - expect) / expect).abs();
            CheckOutcome {
                name: "q relaxation oracle",
                pass: rel <= 1e-6,
                detail: format!("relative error {rel:.3e} at t = 1"),
            }
        }
        Err(e) => CheckOutcome {
            name: "q relaxation oracle",
            pass: false,
            detail: format!("{e}"),
        },
    }
}

/// Reference integration of c' = -2 h c (2c^2 - 1) with classical RK4.
pub fn peterlin_ode_reference(c0: f64, h: f64, t_end: f64, dt: f64) -> f64 {
    let f = |c: f64| -2.0 * h * c * (2.0 * c * c - 1.0);
    let mut c = c0;
    let n = (t_end / dt).round() as usize;
    for _ in 0..n {
        let k1 = f(c);
        let k2 = f(c + 0.5 * dt * k1);
        let k3 = f(c + 0.5 * dt * k2);
        let k4 = f(c + dt * k3);
        c += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    c
}

fn check_peterlin_relaxation() -> CheckOutcome {
    // uniform isotropic C = c(t) I at rest follows c' = -2 h c (2c^2 - 1)
    let g = Grid::unit(16).expect("valid grid");
    let s = State::uniform_rest(&g, 0.5); // C = I, so c(0) = 1
    let dt = 1e-3;
    let cfg = SchemeConfig { dt, ..SchemeConfig::default() };
    let params = ModelParams::default();
    match timestep::run(&s, (10.0 / dt) as usize, &cfg, &params, |_, _| {}) {
        Ok(traj) => {
            let c_num = traj.final_state().c.xx.data()[0];
            let c_ref = peterlin_ode_reference(1.0, 1.0, 10.0, 1e-4);
            let c_star = 1.0 / 2.0f64.sqrt();
            let err_ode = (c_num - c_ref).abs();
            let err_star = (c_num - c_star).abs();
            CheckOutcome {
                name: "Peterlin relaxation oracle",
                pass: err_ode <= 1e-6 && err_star <= 1e-6,
                detail: format!("|c - c_ref| = {err_ode:.3e}, |c - 1/sqrt(2)| = {err_star:.3e} at t = 10"),
            }
        }
        Err(e) => CheckOutcome {
            name: "Peterlin relaxation oracle",
            pass: false,
            detail: format!("{e}"),
        },
    }
}

fn cmd_check() -> crate::Result<()> {
    let outcomes = [
        check_trace_identity(),
        check_spectral_operators(),
        check_q_relaxation(),
        check_peterlin_relaxation(),
    ];
    let mut ok = true;
    for o in &outcomes {
        println!("{} {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        ok &= o.pass;
    }
    if ok {
        println!("check: all {} suites pass", outcomes.len());
        Ok(())
    } else {
        Err(VpsError::InvalidArgument("check suite failed".into()))
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let result: crate::Result<()> = match &cli.command {
        Command::Run(common) => load_config(common).and_then(|cfg| {
            cmd_run(&cfg).inspect_err(|e| write_diagnostic(Path::new(&cfg.output.dir), e))
        }),
        Command::Twin { common, eps } => load_config(common).and_then(|cfg| {
            cmd_twin(&cfg, *eps).inspect_err(|e| write_diagnostic(Path::new(&cfg.output.dir), e))
        }),
        Command::Sweep { common, jobs } => {
            #[cfg(feature = "parallel")]
            if let Some(j) = jobs {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(*j).build_global();
            }
            #[cfg(not(feature = "parallel"))]
            let _ = jobs;
            load_config(common).and_then(|cfg| {
                cmd_sweep(&cfg).inspect_err(|e| write_diagnostic(Path::new(&cfg.output.dir), e))
            })
        }
        Command::Check => cmd_check(),
        Command::Validate(common) => load_config(common).and_then(|cfg| cmd_validate(&cfg)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                VpsError::Numerical { .. } => EXIT_NUMERICAL,
                VpsError::Config(_) | VpsError::Grid(_) | VpsError::Io(_) => EXIT_CONFIG,
                VpsError::InvalidArgument(_) => EXIT_CHECK_FAILED,
            }
        }
    }
}
