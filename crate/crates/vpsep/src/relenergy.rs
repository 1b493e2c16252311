//! Relative energy between two solutions, its dissipation, the Gronwall
//! factor, and the twin-run / perturbation-sweep studies that probe the
//! weak-strong stability estimate numerically.

use crate::dynamics::{self, ModelParams};
use crate::error::{Result, VpsError};
use crate::grid::{self, ScalarField, SymTensorField, VectorField};
use crate::state::{perturb, Perturbation, State};
use crate::timestep::{self, SchemeConfig};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

pub const TWIN_CSV_HEADER: &str =
    "t,e_mix_rel,e_bulk_rel,e_kin_rel,e_el_rel,e_rel_total,d_rel_total,g_raw,B";
pub const SWEEP_CSV_HEADER: &str = "eps,E0,Esup,ratio,chat,slope";

/// Relative energy components between z = (phi, q, u, C) and the reference
/// zbar = (psi, Q, U, H), with penalty weight a on (phi - psi)^2.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RelEnergyReport {
    pub time: f64,
    pub a: f64,
    pub e_mix_rel: f64,
    pub e_bulk_rel: f64,
    pub e_kin_rel: f64,
    pub e_el_rel: f64,
    pub total: f64,
}

/// Relative dissipation; the reduced form zeroes the Peterlin and
/// conformation-diffusion entries.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RelDissipationReport {
    pub time: f64,
    pub reduced: bool,
    pub d_cross_rel: f64,
    pub d_relax_rel: f64,
    pub d_qdiff_rel: f64,
    pub d_visc_rel: f64,
    pub d_peterlin_rel: f64,
    pub d_cdiff_rel: f64,
}

impl RelDissipationReport {
    pub fn total(&self) -> f64 {
        self.d_cross_rel
            + self.d_relax_rel
            + self.d_qdiff_rel
            + self.d_visc_rel
            + self.d_peterlin_rel
            + self.d_cdiff_rel
    }
}

/// Named components of the Gronwall factor g; g_raw is their plain sum (the
/// unknown multiplicative constant is treated as 1 and fitted separately).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GronwallReport {
    pub time: f64,
    pub one: f64,
    pub du3_sq: f64,
    pub u6_4: f64,
    pub hinf_trc4: f64,
    pub h4_4: f64,
    pub trh4_sq: f64,
    pub trsum_h4: f64,
    pub grad_psi3_sq: f64,
    pub uinf_sq: f64,
    pub grad_pi3_sq: f64,
    pub gradphi3_qinf: f64,
    pub grad_q6_4: f64,
    pub qinf_sq: f64,
    pub qinf_gradpsi3: f64,
    pub gradphi3_uinf: f64,
    pub crossflux4: f64,
    pub divcross_sq: f64,
    pub divtransport_h3: f64,
    pub g_raw: f64,
}

impl GronwallReport {
    pub fn components(&self) -> [f64; 18] {
        [
            self.one,
            self.du3_sq,
            self.u6_4,
            self.hinf_trc4,
            self.h4_4,
            self.trh4_sq,
            self.trsum_h4,
            self.grad_psi3_sq,
            self.uinf_sq,
            self.grad_pi3_sq,
            self.gradphi3_qinf,
            self.grad_q6_4,
            self.qinf_sq,
            self.qinf_gradpsi3,
            self.gradphi3_uinf,
            self.crossflux4,
            self.divcross_sq,
            self.divtransport_h3,
        ]
    }
}

fn l2_sq(f: &ScalarField) -> f64 {
    grid::integrate(&f.mul_pointwise(f))
}

fn l2_sq_vec(v: &VectorField) -> f64 {
    l2_sq(&v.x) + l2_sq(&v.y)
}

pub fn relative_energy(
    z: &State,
    zbar: &State,
    a: f64,
    c0: f64,
    spec: &crate::coeffs::PotentialSpec,
) -> Result<RelEnergyReport> {
    grid::check_same_grid(z.grid(), zbar.grid())?;
    if !(a >= 0.0) {
        return Err(VpsError::InvalidArgument(format!("penalty a must be >= 0, got {a}")));
    }
    let dphi = z.phi.sub(&zbar.phi);
    let gd = grid::gradient(&dphi);
    // F(phi) - F(psi) - F'(psi)(phi - psi) + a (phi - psi)^2, pointwise
    let n = z.grid().len();
    let (pd, sd, dd) = (z.phi.data(), zbar.phi.data(), dphi.data());
    let density = crate::par::map_collect(n, |i| {
        let f_phi = spec.eval(pd[i], 0).expect("order 0 valid");
        let f_psi = spec.eval(sd[i], 0).expect("order 0 valid");
        let fp_psi = spec.eval(sd[i], 1).expect("order 1 valid");
        f_phi - f_psi - fp_psi * dd[i] + a * dd[i] * dd[i]
    });
    let density = ScalarField::from_vec(z.grid(), density).expect("length matches");
    let e_mix_rel = 0.5 * c0 * l2_sq_vec(&gd) + grid::integrate(&density);

    let e_bulk_rel = 0.5 * l2_sq(&z.q.sub(&zbar.q));
    let du = z.u.sub(&zbar.u);
    let e_kin_rel = 0.5 * l2_sq_vec(&du);
    let dc = z.c.sub(&zbar.c);
    let e_el_rel = 0.25 * (l2_sq(&dc.xx) + 2.0 * l2_sq(&dc.xy) + l2_sq(&dc.yy));

    Ok(RelEnergyReport {
        time: z.time,
        a,
        e_mix_rel,
        e_bulk_rel,
        e_kin_rel,
        e_el_rel,
        total: e_mix_rel + e_bulk_rel + e_kin_rel + e_el_rel,
    })
}

pub fn relative_dissipation(
    z: &State,
    zbar: &State,
    p: &ModelParams,
    reduced: bool,
) -> Result<RelDissipationReport> {
    grid::check_same_grid(z.grid(), zbar.grid())?;
    let co = &p.coeffs;
    let phi = &z.phi;
    let mu = dynamics::chemical_potential(phi, p.c0, &p.potential);
    let pi = dynamics::chemical_potential(&zbar.phi, p.c0, &p.potential);

    let n_f = phi.map(|x| co.n(x));
    let a_f = phi.map(|x| co.a(x));
    let dq = z.q.sub(&zbar.q);
    let gdmu = grid::gradient(&mu.sub(&pi));
    let gadq = grid::gradient(&a_f.mul_pointwise(&dq));
    let cross = VectorField {
        x: n_f.mul_pointwise(&gdmu.x).sub(&gadq.x),
        y: n_f.mul_pointwise(&gdmu.y).sub(&gadq.y),
    };
    let d_cross_rel = l2_sq_vec(&cross);

    let inv_tau = phi.map(|x| 1.0 / co.tau_b(x));
    let d_relax_rel = grid::integrate(&dq.mul_pointwise(&dq).mul_pointwise(&inv_tau));

    let d_qdiff_rel = p.eps1 * l2_sq_vec(&grid::gradient(&dq));

    let duv = z.u.sub(&zbar.u);
    let gx = grid::gradient(&duv.x);
    let gy = grid::gradient(&duv.y);
    let sym = SymTensorField {
        xx: gx.x.clone(),
        xy: gx.y.add(&gy.x).scaled(0.5),
        yy: gy.y.clone(),
    };
    let eta_f = phi.map(|x| co.eta(x));
    let sym_sq = sym
        .xx
        .mul_pointwise(&sym.xx)
        .add(&sym.xy.mul_pointwise(&sym.xy).scaled(2.0))
        .add(&sym.yy.mul_pointwise(&sym.yy));
    let d_visc_rel = grid::integrate(&eta_f.mul_pointwise(&sym_sq));

    let (d_peterlin_rel, d_cdiff_rel) = if reduced {
        (0.0, 0.0)
    } else {
        let h_f = phi.map(|x| co.h(x));
        let tr = z.c.trace();
        let dc = z.c.sub(&zbar.c);
        let dc_sq = dc
            .xx
            .mul_pointwise(&dc.xx)
            .add(&dc.xy.mul_pointwise(&dc.xy).scaled(2.0))
            .add(&dc.yy.mul_pointwise(&dc.yy));
        let pet = 0.5
            * grid::integrate(
                &h_f.mul_pointwise(&tr.mul_pointwise(&tr)).mul_pointwise(&dc_sq),
            );
        let gdxx = grid::gradient(&dc.xx);
        let gdxy = grid::gradient(&dc.xy);
        let gdyy = grid::gradient(&dc.yy);
        let cd = 0.5
            * p.eps2
            * (l2_sq_vec(&gdxx) + 2.0 * l2_sq_vec(&gdxy) + l2_sq_vec(&gdyy));
        (pet, cd)
    };

    Ok(RelDissipationReport {
        time: z.time,
        reduced,
        d_cross_rel,
        d_relax_rel,
        d_qdiff_rel,
        d_visc_rel,
        d_peterlin_rel,
        d_cdiff_rel,
    })
}

pub fn gronwall_components(z: &State, zbar: &State, p: &ModelParams) -> Result<GronwallReport> {
    grid::check_same_grid(z.grid(), zbar.grid())?;
    let co = &p.coeffs;
    let (psi, bq, bu, bh) = (&zbar.phi, &zbar.q, &zbar.u, &zbar.c);
    let pi = dynamics::chemical_potential(psi, p.c0, &p.potential);

    // symmetric gradient of the reference velocity
    let gx = grid::gradient(&bu.x);
    let gy = grid::gradient(&bu.y);
    let du = SymTensorField {
        xx: gx.x.clone(),
        xy: gx.y.add(&gy.x).scaled(0.5),
        yy: gy.y.clone(),
    };

    let lp = |f: &ScalarField, q: f64| grid::lp_norm(f, q).expect("p >= 1");
    let lpv = |v: &VectorField, q: f64| grid::lp_norm_vec(v, q).expect("p >= 1");
    let lpt = |t: &SymTensorField, q: f64| grid::lp_norm_tensor(t, q).expect("p >= 1");
    let inf = f64::INFINITY;

    let du3_sq = lpt(&du, 3.0).powi(2);
    let u6_4 = lpv(bu, 6.0).powi(4);
    let trc = z.c.trace();
    let trh = bh.trace();
    let hinf_trc4 = lpt(bh, inf).powi(2) * lp(&trc, 4.0).powi(2);
    let h4_4 = lpt(bh, 4.0).powi(4);
    let trh4_sq = lp(&trh, 4.0).powi(2);
    let trsum_h4 = lp(&trc.add(&trh), 4.0).powi(2) * lpt(bh, 4.0).powi(2);
    let grad_psi3_sq = lpv(&grid::gradient(psi), 3.0).powi(2);
    let uinf_sq = lpv(bu, inf).powi(2);
    let grad_pi = grid::gradient(&pi);
    let grad_pi3_sq = lpv(&grad_pi, 3.0).powi(2);
    let grad_phi = grid::gradient(&z.phi);
    let gradphi3_qinf = lpv(&grad_phi, 3.0).powi(2) * lp(bq, inf).powi(2);
    let grad_q6_4 = lpv(&grid::gradient(bq), 6.0).powi(4);
    let qinf_sq = lp(bq, inf).powi(2);
    let qinf_gradpsi3 = qinf_sq * grad_psi3_sq;
    let gradphi3_uinf = lpv(&grad_phi, 3.0).powi(2) * uinf_sq;

    // cross flux of the reference solution: n(psi) grad pi - grad(A(psi) Q)
    let n_psi = psi.map(|x| co.n(x));
    let a_psi = psi.map(|x| co.a(x));
    let m_psi = psi.map(|x| co.m(x));
    let gaq = grid::gradient(&a_psi.mul_pointwise(bq));
    let flux = VectorField {
        x: n_psi.mul_pointwise(&grad_pi.x).sub(&gaq.x),
        y: n_psi.mul_pointwise(&grad_pi.y).sub(&gaq.y),
    };
    let crossflux4 = lpv(&flux, 4.0).powi(2) * (1.0 + lpv(&grad_phi, 4.0).powi(2));
    let divcross_sq = lp(&grid::divergence(&flux), 2.0).powi(2);

    // transport flux: U psi - m(psi) grad pi + n(psi) grad(A(psi) Q)
    let transport = VectorField {
        x: bu
            .x
            .mul_pointwise(psi)
            .sub(&m_psi.mul_pointwise(&grad_pi.x))
            .add(&n_psi.mul_pointwise(&gaq.x)),
        y: bu
            .y
            .mul_pointwise(psi)
            .sub(&m_psi.mul_pointwise(&grad_pi.y))
            .add(&n_psi.mul_pointwise(&gaq.y)),
    };
    let divtransport_h3 =
        lp(&grid::divergence(&transport), 2.0) * (lp(&z.phi, 3.0) + lp(psi, 3.0));

    let mut report = GronwallReport {
        time: z.time,
        one: 1.0,
        du3_sq,
        u6_4,
        hinf_trc4,
        h4_4,
        trh4_sq,
        trsum_h4,
        grad_psi3_sq,
        uinf_sq,
        grad_pi3_sq,
        gradphi3_qinf,
        grad_q6_4,
        qinf_sq,
        qinf_gradpsi3,
        gradphi3_uinf,
        crossflux4,
        divcross_sq,
        divtransport_h3,
        g_raw: 0.0,
    };
    report.g_raw = report.components().iter().sum();
    Ok(report)
}

/// Time series produced by a twin run: diagnostics sampled at cadence and the
/// Gronwall check series B(t) = ln E(t) - ln E(0) - int_0^t g_raw.
pub struct TwinTrajectory {
    pub rel_energy: Vec<RelEnergyReport>,
    pub rel_diss: Vec<RelDissipationReport>,
    pub gronwall: Vec<GronwallReport>,
    pub g_integral: Vec<f64>,
    pub b_series: Vec<f64>,
    /// Final states of the perturbed (z) and reference (zbar) members.
    pub final_z: State,
    pub final_zbar: State,
}

impl TwinTrajectory {
    pub fn e0(&self) -> f64 {
        self.rel_energy.first().map(|r| r.total).unwrap_or(f64::NAN)
    }

    pub fn e_sup(&self) -> f64 {
        self.rel_energy.iter().map(|r| r.total).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest c with E(t) <= E(0) exp(c * int g) for every sample.
    pub fn fitted_c(&self) -> f64 {
        let e0 = self.e0();
        let mut c = 0.0f64;
        for (r, gi) in self.rel_energy.iter().zip(&self.g_integral) {
            if *gi > 0.0 && r.total > 0.0 && e0 > 0.0 {
                c = c.max((r.total / e0).ln() / gi);
            }
        }
        c
    }
}

/// Advance the perturbed state z = perturb(zbar, p) and the reference zbar in
/// lockstep with identical scheme settings, recording relative diagnostics at
/// the output cadence. Either member's blow-up aborts both.
pub fn twin_run(
    zbar0: &State,
    pert: &Perturbation,
    n_steps: usize,
    cfg: &SchemeConfig,
    params: &ModelParams,
    a: f64,
) -> Result<TwinTrajectory> {
    let z0 = perturb(zbar0, pert)?;
    let reduced = matches!(params.model, dynamics::ModelKind::Reduced);

    let mut rel_energy = Vec::new();
    let mut rel_diss = Vec::new();
    let mut gronwall = Vec::new();
    let mut g_integral = Vec::new();
    let mut b_series = Vec::new();

    let mut z = z0;
    let mut zbar = zbar0.clone();
    let mut acc_g = 0.0;
    let mut last: Option<(f64, f64)> = None; // (time, g_raw) at previous sample
    let mut e0_ln: Option<f64> = None;

    let mut sample = |z: &State,
                      zbar: &State,
                      acc_g: &mut f64,
                      last: &mut Option<(f64, f64)>,
                      e0_ln: &mut Option<f64>|
     -> Result<()> {
        let e = relative_energy(z, zbar, a, params.c0, &params.potential)?;
        let d = relative_dissipation(z, zbar, params, reduced)?;
        let gr = gronwall_components(z, zbar, params)?;
        if let Some((t_prev, g_prev)) = *last {
            *acc_g += 0.5 * (z.time - t_prev) * (g_prev + gr.g_raw);
        }
        *last = Some((z.time, gr.g_raw));
        if e0_ln.is_none() {
            *e0_ln = Some(if e.total > 0.0 { e.total.ln() } else { f64::NAN });
        }
        let b = if e.total > 0.0 {
            e.total.ln() - e0_ln.expect("set above") - *acc_g
        } else {
            f64::NAN
        };
        g_integral.push(*acc_g);
        b_series.push(b);
        rel_energy.push(e);
        rel_diss.push(d);
        gronwall.push(gr);
        Ok(())
    };

    sample(&z, &zbar, &mut acc_g, &mut last, &mut e0_ln)?;
    for k in 1..=n_steps {
        let (rz, rbar) = crate::par::join(
            || timestep::step(&z, cfg, params),
            || timestep::step(&zbar, cfg, params),
        );
        z = rz?.0;
        zbar = rbar?.0;
        if k % cfg.cadence == 0 || k == n_steps {
            sample(&z, &zbar, &mut acc_g, &mut last, &mut e0_ln)?;
        }
    }

    Ok(TwinTrajectory {
        rel_energy,
        rel_diss,
        gronwall,
        g_integral,
        b_series,
        final_z: z,
        final_zbar: zbar,
    })
}

/// One row of the perturbation-scaling study.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SweepEntry {
    pub eps: f64,
    pub e0: f64,
    pub e_sup: f64,
    pub ratio: f64,
    pub chat: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub entries: Vec<SweepEntry>,
    /// Log-log slope of E(0) against eps (expected 2 for linear noise).
    pub slope: f64,
    /// Single fitted constant valid across every run of the sweep.
    pub chat: f64,
}

/// Run a twin for each amplitude and summarize the scaling of the relative
/// energy. Amplitudes must be positive.
pub fn perturbation_sweep(
    zbar0: &State,
    amplitudes: &[f64],
    seed: u64,
    n_steps: usize,
    cfg: &SchemeConfig,
    params: &ModelParams,
    a: f64,
) -> Result<ScalingReport> {
    if amplitudes.is_empty() {
        return Err(VpsError::InvalidArgument("amplitude list is empty".into()));
    }
    if let Some(bad) = amplitudes.iter().find(|e| !(**e > 0.0)) {
        return Err(VpsError::InvalidArgument(format!(
            "amplitudes must be > 0, got {bad}"
        )));
    }
    let runs: Vec<Result<TwinTrajectory>> = crate::par::map_collect(amplitudes.len(), |i| {
        let pert = Perturbation {
            eps: amplitudes[i],
            seed,
            mask: Default::default(),
        };
        twin_run(zbar0, &pert, n_steps, cfg, params, a)
    });

    let mut entries = Vec::with_capacity(amplitudes.len());
    for (eps, run) in amplitudes.iter().zip(runs) {
        let t = run?;
        let e0 = t.e0();
        let e_sup = t.e_sup();
        entries.push(SweepEntry {
            eps: *eps,
            e0,
            e_sup,
            ratio: e_sup / e0,
            chat: t.fitted_c(),
        });
    }

    // least-squares slope of ln E0 on ln eps
    let slope = if entries.len() >= 2 {
        let xs: Vec<f64> = entries.iter().map(|e| e.eps.ln()).collect();
        let ys: Vec<f64> = entries.iter().map(|e| e.e0.ln()).collect();
        let n = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxx = xs.iter().map(|x| x * x).sum::<f64>();
        let sxy = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::NAN
    };
    let chat = entries.iter().map(|e| e.chat).fold(0.0, f64::max);
    Ok(ScalingReport { entries, slope, chat })
}

pub fn write_twin_csv(path: &Path, twin: &TwinTrajectory) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{TWIN_CSV_HEADER}")?;
    for i in 0..twin.rel_energy.len() {
        let e = &twin.rel_energy[i];
        let cols = [
            e.time,
            e.e_mix_rel,
            e.e_bulk_rel,
            e.e_kin_rel,
            e.e_el_rel,
            e.total,
            twin.rel_diss[i].total(),
            twin.gronwall[i].g_raw,
            twin.b_series[i],
        ];
        let row: Vec<String> = cols.iter().map(|v| crate::energetics::fmt_f64(*v)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_sweep_csv(path: &Path, report: &ScalingReport) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for e in &report.entries {
        let cols = [e.eps, e.e0, e.e_sup, e.ratio, e.chat, report.slope];
        let row: Vec<String> = cols.iter().map(|v| crate::energetics::fmt_f64(*v)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
