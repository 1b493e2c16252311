//! First-order IMEX time integration. The stiff constant-coefficient parts
//! are solved implicitly in Fourier space (including a 2x2 phi-q
//! cross-diffusion block per wavenumber); everything else is explicit. The
//! q-relaxation is integrated exactly with an exponential factor.

use crate::dynamics::{self, ModelParams, Tendency};
use crate::error::{Result, VpsError};
use crate::grid::{self, ScalarField, VectorField};
use crate::state::State;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Blow-up guard threshold on |phi|.
pub const PHI_GUARD: f64 = 10.0;

/// Scheme knobs: step size, stabilization, frozen-coefficient values for the
/// implicit operators, and run bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub dt: f64,
    /// Extra implicit Laplacian damping on phi / q (default 0: the frozen
    /// split already damps).
    pub s_phi: f64,
    pub s_q: f64,
    /// Frozen coefficients; must dominate the true maxima.
    pub m0: f64,
    pub a0: f64,
    pub eta0: f64,
    pub max_steps: usize,
    /// Sampling stride for monitors and trajectory output.
    pub cadence: usize,
    /// Advective CFL constant.
    pub cfl: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            dt: 1e-3,
            s_phi: 0.0,
            s_q: 0.0,
            m0: 1.0,
            a0: 1.0,
            eta0: 1.0,
            max_steps: 1_000_000,
            cadence: 10,
            cfl: 0.25,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self, coeffs: &crate::coeffs::CoefficientSet) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(VpsError::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.s_phi < 0.0 || self.s_q < 0.0 {
            return Err(VpsError::Config("stabilization constants must be >= 0".into()));
        }
        if self.cadence == 0 {
            return Err(VpsError::Config("cadence must be >= 1".into()));
        }
        if !(self.cfl > 0.0) {
            return Err(VpsError::Config("cfl must be > 0".into()));
        }
        for (name, frozen, need) in [
            ("m0", self.m0, coeffs.max_m()),
            ("a0", self.a0, coeffs.max_a()),
            ("eta0", self.eta0, coeffs.max_eta()),
        ] {
            if frozen + 1e-12 < need {
                return Err(VpsError::Config(format!(
                    "frozen coefficient {name} = {frozen} is below the true maximum {need}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StepReport {
    pub time: f64,
    pub dt_used: f64,
    pub max_div_u: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub q_max: f64,
    pub u_max: f64,
    pub c_max: f64,
    pub cfl: f64,
}

/// Advective CFL bound, capped by the configured step.
pub fn stable_dt(s: &State, cfg: &SchemeConfig, _params: &ModelParams) -> f64 {
    let g = s.grid();
    let umax = s.u.magnitude().max_abs().max(1e-12);
    cfg.dt.min(cfg.cfl * g.hx().min(g.hy()) / umax)
}

fn guard(s: &State) -> Result<()> {
    let finite = s.phi.is_finite()
        && s.q.is_finite()
        && s.u.is_finite()
        && s.c.is_finite();
    if !finite {
        return Err(VpsError::Numerical {
            time: s.time,
            reason: "non-finite value after step".into(),
        });
    }
    let pmax = s.phi.max_abs();
    if pmax > PHI_GUARD {
        return Err(VpsError::Numerical {
            time: s.time,
            reason: format!("|phi| = {pmax:.3e} exceeded blow-up guard {PHI_GUARD}"),
        });
    }
    Ok(())
}

/// Solve (I - dt L) x = s + dt (r - L s) per wavenumber for a scalar field
/// whose implicit symbol is L(lambda) = -nu * lambda (nu >= 0).
fn implicit_scalar(s: &ScalarField, r: &ScalarField, dt: f64, nu: f64) -> ScalarField {
    let g = s.grid().clone();
    let mut sh = grid::fft2(s);
    let rh = grid::fft2(r);
    let (kx, ky, nx) = (g.kx().to_vec(), g.ky().to_vec(), g.nx());
    let rdata = rh.data();
    crate::par::for_each_chunk_mut(sh.data_mut(), nx, |j, row| {
        let ky2 = ky[j] * ky[j];
        for (i, v) in row.iter_mut().enumerate() {
            let lam = kx[i] * kx[i] + ky2;
            let l = -nu * lam;
            let rhs = *v + Complex64::new(dt, 0.0) * (rdata[j * nx + i] - Complex64::new(l, 0.0) * *v);
            *v = rhs / Complex64::new(1.0 - dt * l, 0.0);
        }
    });
    grid::ifft2(&sh)
}

/// One IMEX step. Time advances by the (possibly CFL-reduced) step.
pub fn step(s: &State, cfg: &SchemeConfig, params: &ModelParams) -> Result<(State, StepReport)> {
    let g = s.grid().clone();
    let dt = stable_dt(s, cfg, params);

    // explicit tendency, with the q-relaxation taken out (handled exactly below)
    let mut rhs: Tendency = dynamics::rhs(s, params)?;
    rhs.d_q = rhs.d_q.add(&dynamics::q_relaxation_term(s, params));

    // phi-q block: per wavenumber lambda = |k|^2, with n0 = sqrt(m0),
    //   L = [ -(m0 c0 lam^2 + s_phi lam)    n0 a0 lam                  ]
    //       [  n0 a0 c0 lam^2              -((a0^2 + eps1) lam + s_q lam) ]
    let n0 = cfg.m0.sqrt();
    let (c0, eps1, eps2) = (params.c0, params.eps1, params.eps2);
    let mut ph = grid::fft2(&s.phi);
    let mut qh = grid::fft2(&s.q);
    let rph = grid::fft2(&rhs.d_phi);
    let rqh = grid::fft2(&rhs.d_q);
    {
        let (kx, ky, nx) = (g.kx().to_vec(), g.ky().to_vec(), g.nx());
        let (pd, qd) = (ph.data(), qh.data());
        let (rpd, rqd) = (rph.data(), rqh.data());
        let solved: Vec<(Complex64, Complex64)> = crate::par::map_collect(g.len(), |idx| {
            let (i, j) = (idx % nx, idx / nx);
            let lam = kx[i] * kx[i] + ky[j] * ky[j];
            let (pv, qv) = (pd[idx], qd[idx]);
            let lpp = -(cfg.m0 * c0 * lam * lam + cfg.s_phi * lam);
            let lpq = n0 * cfg.a0 * lam;
            let lqp = n0 * cfg.a0 * c0 * lam * lam;
            let lqq = -((cfg.a0 * cfg.a0 + eps1) * lam + cfg.s_q * lam);
            // rhs of (I - dt L) x = s + dt (r - L s)
            let bp = pv + (rpd[idx] - (pv * lpp + qv * lpq)).scale(dt);
            let bq = qv + (rqd[idx] - (pv * lqp + qv * lqq)).scale(dt);
            let a11 = 1.0 - dt * lpp;
            let a12 = -dt * lpq;
            let a21 = -dt * lqp;
            let a22 = 1.0 - dt * lqq;
            let det = a11 * a22 - a12 * a21;
            (
                (bp.scale(a22) - bq.scale(a12)).unscale(det),
                (bq.scale(a11) - bp.scale(a21)).unscale(det),
            )
        });
        for (idx, (pv, qv)) in solved.iter().enumerate() {
            ph.data_mut()[idx] = *pv;
            qh.data_mut()[idx] = *qv;
        }
    }
    let phi_new = grid::ifft2(&ph);
    let q_star = grid::ifft2(&qh);

    // exact exponential relaxation factor, frozen at phi^n
    let factor = s.phi.map(|x| (-dt / params.coeffs.tau_b(x)).exp());
    let q_new = q_star.mul_pointwise(&factor);

    // velocity: implicit (eta0/2) lap, then re-projection
    let u_new = grid::leray_project(&VectorField {
        x: implicit_scalar(&s.u.x, &rhs.d_u.x, dt, cfg.eta0 / 2.0),
        y: implicit_scalar(&s.u.y, &rhs.d_u.y, dt, cfg.eta0 / 2.0),
    });

    // conformation tensor: implicit eps2 lap, componentwise
    let c_new = crate::grid::SymTensorField {
        xx: implicit_scalar(&s.c.xx, &rhs.d_c.xx, dt, eps2),
        xy: implicit_scalar(&s.c.xy, &rhs.d_c.xy, dt, eps2),
        yy: implicit_scalar(&s.c.yy, &rhs.d_c.yy, dt, eps2),
    };

    let new = State {
        phi: phi_new,
        q: q_new,
        u: u_new,
        c: c_new,
        time: s.time + dt,
    };
    guard(&new)?;

    let report = StepReport {
        time: new.time,
        dt_used: dt,
        max_div_u: grid::divergence(&new.u).max_abs(),
        phi_min: new.phi.min(),
        phi_max: new.phi.max(),
        q_max: new.q.max_abs(),
        u_max: new.u.magnitude().max_abs(),
        c_max: new.c.max_abs(),
        cfl: dt * new.u.magnitude().max_abs() / g.hx().min(g.hy()),
    };
    Ok((new, report))
}

/// A sampled trajectory: states at the output cadence plus per-step reports.
pub struct Trajectory {
    pub samples: Vec<State>,
    pub reports: Vec<StepReport>,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.samples.last().expect("trajectory holds at least the initial state")
    }
}

/// Advance `n_steps` steps, invoking the monitor on the initial state and then
/// at the output cadence (and always on the final state).
pub fn run(
    initial: &State,
    n_steps: usize,
    cfg: &SchemeConfig,
    params: &ModelParams,
    mut monitor: impl FnMut(&State, Option<&StepReport>),
) -> Result<Trajectory> {
    if n_steps > cfg.max_steps {
        return Err(VpsError::Config(format!(
            "requested {n_steps} steps exceeds max_steps = {}",
            cfg.max_steps
        )));
    }
    let mut samples = Vec::new();
    let mut reports = Vec::with_capacity(n_steps);
    monitor(initial, None);
    samples.push(initial.clone());
    let mut current = initial.clone();
    for k in 1..=n_steps {
        let (next, report) = step(&current, cfg, params)?;
        current = next;
        if k % cfg.cadence == 0 || k == n_steps {
            monitor(&current, Some(&report));
            samples.push(current.clone());
        }
        reports.push(report);
    }
    Ok(Trajectory { samples, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CoefficientSet;
    use crate::grid::Grid;
    use crate::state::{make_initial, InitialKind};
    use std::sync::Arc;

    fn grid64() -> Arc<Grid> {
        Grid::unit(64).unwrap()
    }

    #[test]
    fn stable_dt_examples() {
        let g = grid64();
        let cfg = SchemeConfig { dt: 1e-2, ..SchemeConfig::default() };
        let p = ModelParams::default();
        let rest = State::uniform_rest(&g, 0.5);
        assert_eq!(stable_dt(&rest, &cfg, &p), 1e-2);
        let mut s = make_initial(&g, InitialKind::TaylorGreenMix, 0).unwrap();
        let umax = s.u.magnitude().max_abs();
        let bound = 0.25 / 64.0 / umax;
        assert!((stable_dt(&s, &cfg, &p) - bound).abs() < 1e-15);
        // doubling |u| halves the bound
        s.u = VectorField { x: s.u.x.scaled(2.0), y: s.u.y.scaled(2.0) };
        assert!((stable_dt(&s, &cfg, &p) - bound / 2.0).abs() < 1e-15);
    }

    #[test]
    fn peterlin_equilibrium_is_fixed_point() {
        let g = grid64();
        let s = make_initial(&g, InitialKind::UniformRest, 0).unwrap();
        let cfg = SchemeConfig { dt: 1e-3, ..SchemeConfig::default() };
        let p = ModelParams::default();
        let (t, _) = step(&s, &cfg, &p).unwrap();
        assert!(t.phi.sub(&s.phi).max_abs() < 1e-12);
        assert!(t.q.sub(&s.q).max_abs() < 1e-12);
        assert!(t.u.sub(&s.u).max_abs() < 1e-12);
        assert!(t.c.sub(&s.c).max_abs() < 1e-12);
    }

    #[test]
    fn q_relaxation_oracle() {
        // n = 0 test mode: q decays as q0 exp(-t / tau_b) exactly
        let g = Grid::unit(16).unwrap();
        let q0 = 0.8;
        let mut s = State::uniform_rest(&g, 0.5);
        s.q = ScalarField::constant(&g, q0);
        let cfg = SchemeConfig { dt: 1e-4, ..SchemeConfig::default() };
        let p = ModelParams {
            coeffs: CoefficientSet::relaxation_test_mode(1.0),
            ..ModelParams::default()
        };
        let traj = run(&s, 10_000, &cfg, &p, |_, _| {}).unwrap();
        let qf = traj.final_state().q.data()[0];
        let expect = q0 * (-1.0f64).exp();
        assert!(
            ((qf - expect) / expect).abs() < 1e-6,
            "q(1) = {qf}, expected {expect}"
        );
    }

    #[test]
    fn mass_is_conserved() {
        let g = grid64();
        let s = make_initial(&g, InitialKind::Spinodal, 42).unwrap();
        let cfg = SchemeConfig { dt: 1e-3, ..SchemeConfig::default() };
        let p = ModelParams::default();
        let m0 = grid::integrate(&s.phi);
        let traj = run(&s, 1000, &cfg, &p, |_, _| {}).unwrap();
        let m1 = grid::integrate(&traj.final_state().phi);
        assert!(((m1 - m0) / m0).abs() < 1e-10, "mass drift {:e}", (m1 - m0) / m0);
        for r in &traj.reports {
            assert!(r.max_div_u <= 1e-10);
        }
    }

    #[test]
    fn zero_steps_returns_initial() {
        let g = grid64();
        let s = make_initial(&g, InitialKind::Spinodal, 1).unwrap();
        let traj = run(&s, 0, &SchemeConfig::default(), &ModelParams::default(), |_, _| {}).unwrap();
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(traj.final_state().phi.data(), s.phi.data());
    }

    #[test]
    fn runs_are_deterministic() {
        let g = Grid::unit(32).unwrap();
        let s = make_initial(&g, InitialKind::Manufactured, 0).unwrap();
        let cfg = SchemeConfig { dt: 5e-4, ..SchemeConfig::default() };
        let p = ModelParams::default();
        let a = run(&s, 50, &cfg, &p, |_, _| {}).unwrap();
        let b = run(&s, 50, &cfg, &p, |_, _| {}).unwrap();
        assert_eq!(a.final_state().phi.data(), b.final_state().phi.data());
        assert_eq!(a.final_state().u.x.data(), b.final_state().u.x.data());
    }

    #[test]
    fn temporal_self_convergence_first_order() {
        let g = Grid::unit(32).unwrap();
        let s = make_initial(&g, InitialKind::Manufactured, 0).unwrap();
        let p = ModelParams::default();
        // disable the CFL cap so the three levels land on the same final time
        let mk = |dt: f64| SchemeConfig { dt, cfl: 1e9, ..SchemeConfig::default() };
        let run_to = |dt: f64, n: usize| {
            run(&s, n, &mk(dt), &p, |_, _| {}).unwrap().final_state().clone()
        };
        let f1 = run_to(4e-4, 125);
        let f2 = run_to(2e-4, 250);
        let f3 = run_to(1e-4, 500);
        let e12 = f1.phi.sub(&f2.phi).max_abs()
            + f1.u.sub(&f2.u).max_abs()
            + f1.q.sub(&f2.q).max_abs();
        let e23 = f2.phi.sub(&f3.phi).max_abs()
            + f2.u.sub(&f3.u).max_abs()
            + f2.q.sub(&f3.q).max_abs();
        let order = (e12 / e23).log2();
        assert!(
            (0.9..=1.5).contains(&order),
            "observed order {order} (e12 = {e12:e}, e23 = {e23:e})"
        );
    }

    #[test]
    fn blow_up_guard_triggers() {
        let g = Grid::unit(16).unwrap();
        let mut s = State::uniform_rest(&g, 0.5);
        s.phi = ScalarField::constant(&g, 50.0);
        let err = step(&s, &SchemeConfig::default(), &ModelParams::default());
        assert!(matches!(err, Err(VpsError::Numerical { .. })));
    }

    #[test]
    fn config_validation() {
        let coeffs = CoefficientSet::default();
        assert!(SchemeConfig::default().validate(&coeffs).is_ok());
        assert!(SchemeConfig { dt: 0.0, ..SchemeConfig::default() }.validate(&coeffs).is_err());
        assert!(SchemeConfig { m0: 0.5, ..SchemeConfig::default() }.validate(&coeffs).is_err());
        assert!(SchemeConfig { cadence: 0, ..SchemeConfig::default() }.validate(&coeffs).is_err());
    }
}
