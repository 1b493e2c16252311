//! Energy functionals, dissipation components, and the trajectory
//! energy-inequality residual.

use crate::coeffs::PotentialSpec;
use crate::dynamics::{self, ModelParams};
use crate::error::{Result, VpsError};
use crate::grid::{self, ScalarField, SymTensorField, VectorField};
use crate::state::State;
use crate::timestep::Trajectory;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Eigenvalue threshold below which C is not treated as SPD.
pub const SPD_THRESHOLD: f64 = 1e-12;

pub const ENERGY_CSV_HEADER: &str =
    "t,e_mix,e_bulk,e_kin,e_el,e_lyap,e_tot,d_cross,d_relax,d_qdiff,d_visc,d_cdiff,d_peterlin,r_remainder,residual";

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyReport {
    pub time: f64,
    /// Interfacial + potential energy: c0/2 |grad phi|^2 + F(phi).
    pub e_mix: f64,
    /// Bulk stress energy: |q|^2 / 2.
    pub e_bulk: f64,
    /// Kinetic energy: |u|^2 / 2.
    pub e_kin: f64,
    /// Elastic energy in the Lyapunov form: |C|^2 / 4.
    pub e_el: f64,
    /// Sum of the four components above.
    pub e_lyap: f64,
    /// Total energy with the logarithmic elastic term tr(T - 2 ln C - I) / 4;
    /// absent when C is not SPD everywhere.
    pub e_tot: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DissipationReport {
    pub time: f64,
    /// |n(phi) grad mu - grad(A(phi) q)|_2^2.
    pub d_cross: f64,
    /// Integral of q^2 / tau_b(phi).
    pub d_relax: f64,
    /// eps1 |grad q|_2^2.
    pub d_qdiff: f64,
    /// Integral of eta(phi) |Du|^2.
    pub d_visc: f64,
    /// (eps2/2) |grad C|_2^2.
    pub d_cdiff: f64,
    /// (1/2) integral of h(phi) |tr(C) C|^2.
    pub d_peterlin: f64,
    /// Non-dissipative remainder (1/2) integral of h(phi) tr(C)^2.
    pub r_remainder: f64,
}

impl DissipationReport {
    /// Total dissipation entering the energy inequality.
    pub fn total(&self) -> f64 {
        self.d_cross + self.d_relax + self.d_qdiff + self.d_visc + self.d_cdiff + self.d_peterlin
    }
}

fn l2_sq(f: &ScalarField) -> f64 {
    grid::integrate(&f.mul_pointwise(f))
}

fn l2_sq_vec(v: &VectorField) -> f64 {
    l2_sq(&v.x) + l2_sq(&v.y)
}

fn l2_sq_tensor(t: &SymTensorField) -> f64 {
    l2_sq(&t.xx) + 2.0 * l2_sq(&t.xy) + l2_sq(&t.yy)
}

/// Eigenvalues of a symmetric 2x2 matrix [[xx, xy], [xy, yy]].
fn sym_eigenvalues(xx: f64, xy: f64, yy: f64) -> (f64, f64) {
    let mean = 0.5 * (xx + yy);
    let d = (0.25 * (xx - yy) * (xx - yy) + xy * xy).sqrt();
    (mean - d, mean + d)
}

/// Lyapunov energy components plus the logarithmic total when C is SPD.
pub fn lyapunov_energy(s: &State, c0: f64, spec: &PotentialSpec) -> EnergyReport {
    let gphi = grid::gradient(&s.phi);
    let f_phi = s.phi.map(|x| spec.eval(x, 0).expect("order 0 valid"));
    let e_mix = 0.5 * c0 * l2_sq_vec(&gphi) + grid::integrate(&f_phi);
    let e_bulk = 0.5 * l2_sq(&s.q);
    let e_kin = 0.5 * l2_sq_vec(&s.u);
    let e_el = 0.25 * l2_sq_tensor(&s.c);

    // logarithmic elastic density tr(T - 2 ln C - I) = (tr C)^2 - 2 ln det C - 2
    let n = s.grid().len();
    let (cxx, cxy, cyy) = (s.c.xx.data(), s.c.xy.data(), s.c.yy.data());
    let mut spd = true;
    let mut density = vec![0.0; n];
    for i in 0..n {
        let (l1, l2) = sym_eigenvalues(cxx[i], cxy[i], cyy[i]);
        if l1 <= SPD_THRESHOLD || l2 <= SPD_THRESHOLD {
            spd = false;
            break;
        }
        let tr = cxx[i] + cyy[i];
        density[i] = tr * tr - 2.0 * (l1.ln() + l2.ln()) - 2.0;
    }
    let e_tot = if spd {
        let log_el = ScalarField::from_vec(s.grid(), density).expect("length matches");
        Some(e_mix + e_bulk + e_kin + 0.25 * grid::integrate(&log_el))
    } else {
        None
    };

    EnergyReport {
        time: s.time,
        e_mix,
        e_bulk,
        e_kin,
        e_el,
        e_lyap: e_mix + e_bulk + e_kin + e_el,
        e_tot,
    }
}

/// Dissipation components of the energy inequality, plus the non-dissipative
/// remainder.
pub fn dissipation(s: &State, p: &ModelParams) -> DissipationReport {
    let co = &p.coeffs;
    let phi = &s.phi;
    let mu = dynamics::chemical_potential(phi, p.c0, &p.potential);
    let n_f = phi.map(|x| co.n(x));
    let a_f = phi.map(|x| co.a(x));
    let aq = a_f.mul_pointwise(&s.q);
    let gmu = grid::gradient(&mu);
    let gaq = grid::gradient(&aq);
    let cross = VectorField {
        x: n_f.mul_pointwise(&gmu.x).sub(&gaq.x),
        y: n_f.mul_pointwise(&gmu.y).sub(&gaq.y),
    };
    let d_cross = l2_sq_vec(&cross);

    let inv_tau = phi.map(|x| 1.0 / co.tau_b(x));
    let d_relax = grid::integrate(&s.q.mul_pointwise(&s.q).mul_pointwise(&inv_tau));

    let d_qdiff = p.eps1 * l2_sq_vec(&grid::gradient(&s.q));

    let gux = grid::gradient(&s.u.x);
    let guy = grid::gradient(&s.u.y);
    let du = SymTensorField {
        xx: gux.x.clone(),
        xy: gux.y.add(&guy.x).scaled(0.5),
        yy: guy.y.clone(),
    };
    let eta_f = phi.map(|x| co.eta(x));
    let du_sq = du
        .xx
        .mul_pointwise(&du.xx)
        .add(&du.xy.mul_pointwise(&du.xy).scaled(2.0))
        .add(&du.yy.mul_pointwise(&du.yy));
    let d_visc = grid::integrate(&eta_f.mul_pointwise(&du_sq));

    let gcxx = grid::gradient(&s.c.xx);
    let gcxy = grid::gradient(&s.c.xy);
    let gcyy = grid::gradient(&s.c.yy);
    let d_cdiff =
        0.5 * p.eps2 * (l2_sq_vec(&gcxx) + 2.0 * l2_sq_vec(&gcxy) + l2_sq_vec(&gcyy));

    let h_f = phi.map(|x| co.h(x));
    let t = dynamics::peterlin_stress(&s.c);
    let t_sq = t
        .xx
        .mul_pointwise(&t.xx)
        .add(&t.xy.mul_pointwise(&t.xy).scaled(2.0))
        .add(&t.yy.mul_pointwise(&t.yy));
    let d_peterlin = 0.5 * grid::integrate(&h_f.mul_pointwise(&t_sq));

    let tr = s.c.trace();
    let r_remainder = 0.5 * grid::integrate(&h_f.mul_pointwise(&tr.mul_pointwise(&tr)));

    DissipationReport {
        time: s.time,
        d_cross,
        d_relax,
        d_qdiff,
        d_visc,
        d_cdiff,
        d_peterlin,
        r_remainder,
    }
}

/// Energy-inequality residual at each trajectory sample:
/// residual(t) = Lyap(t) + int_0^t (dissipation - remainder) - Lyap(0),
/// time integrals by the trapezoidal rule. Exact solutions satisfy <= 0.
pub fn energy_residual(traj: &Trajectory, p: &ModelParams) -> Result<Vec<f64>> {
    energy_residual_from_series(&energy_series(traj, p))
}

/// Per-sample energy and dissipation reports for a trajectory.
pub fn energy_series(traj: &Trajectory, p: &ModelParams) -> Vec<(EnergyReport, DissipationReport)> {
    crate::par::map_collect(traj.samples.len(), |i| {
        let s = &traj.samples[i];
        (lyapunov_energy(s, p.c0, &p.potential), dissipation(s, p))
    })
}

pub fn energy_residual_from_series(
    series: &[(EnergyReport, DissipationReport)],
) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(VpsError::InvalidArgument(format!(
            "energy residual needs at least 2 samples, got {}",
            series.len()
        )));
    }
    let e0 = series[0].0.e_lyap;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(series.len());
    out.push(series[0].0.e_lyap - e0);
    for w in series.windows(2) {
        let (ea, da) = &w[0];
        let (eb, db) = &w[1];
        let dt = eb.time - ea.time;
        let fa = da.total() - da.r_remainder;
        let fb = db.total() - db.r_remainder;
        acc += 0.5 * dt * (fa + fb);
        out.push(eb.e_lyap + acc - e0);
    }
    Ok(out)
}

/// Shortest round-tripping decimal form, with NaN spelled "nan".
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

/// Write the energy CSV: one row per sample, fixed header.
pub fn write_energy_csv(
    path: &Path,
    series: &[(EnergyReport, DissipationReport)],
    residual: &[f64],
) -> Result<()> {
    if series.len() != residual.len() {
        return Err(VpsError::InvalidArgument(format!(
            "series length {} != residual length {}",
            series.len(),
            residual.len()
        )));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{ENERGY_CSV_HEADER}")?;
    for ((e, d), r) in series.iter().zip(residual) {
        let cols = [
            e.time,
            e.e_mix,
            e.e_bulk,
            e.e_kin,
            e.e_el,
            e.e_lyap,
            e.e_tot.unwrap_or(f64::NAN),
            d.d_cross,
            d.d_relax,
            d.d_qdiff,
            d.d_visc,
            d.d_cdiff,
            d.d_peterlin,
            d.r_remainder,
            *r,
        ];
        let row: Vec<String> = cols.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
