//! Right-hand sides of the full and reduced systems, the chemical potential,
//! the Peterlin stress, and the trace identity checker.

use crate::coeffs::{CoefficientSet, PotentialSpec};
use crate::error::{Result, VpsError};
use crate::grid::{self, ScalarField, SymTensorField, VectorField};
use crate::state::State;
use serde::{Deserialize, Serialize};

/// Sup-norm divergence threshold above which the identity checker rejects u.
const SOLENOIDAL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Full,
    Reduced,
}

/// Physical parameters of the model.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub c0: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub coeffs: CoefficientSet,
    pub potential: PotentialSpec,
    /// Apply the 2/3 rule to nonlinear products.
    pub dealias: bool,
    pub model: ModelKind,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            c0: 1e-3,
            eps1: 1e-3,
            eps2: 1e-3,
            coeffs: CoefficientSet::default(),
            potential: PotentialSpec::default(),
            dealias: true,
            model: ModelKind::Full,
        }
    }
}

/// Time-derivative of every prognostic field. d_u is Leray-projected.
#[derive(Clone, Debug)]
pub struct Tendency {
    pub d_phi: ScalarField,
    pub d_q: ScalarField,
    pub d_u: VectorField,
    pub d_c: SymTensorField,
}

/// mu = -c0 laplacian(phi) + F'(phi).
pub fn chemical_potential(phi: &ScalarField, c0: f64, spec: &PotentialSpec) -> ScalarField {
    let lap = grid::laplacian(phi);
    let fp = phi.map(|x| spec.eval(x, 1).expect("order 1 always valid"));
    fp.axpy(-c0, &lap)
}

/// T = tr(C) C.
pub fn peterlin_stress(c: &SymTensorField) -> SymTensorField {
    let tr = c.trace();
    SymTensorField {
        xx: tr.mul_pointwise(&c.xx),
        xy: tr.mul_pointwise(&c.xy),
        yy: tr.mul_pointwise(&c.yy),
    }
}

/// De-aliased product: both factors are truncated before multiplying and the
/// product is truncated after, so quadratic aliases never reach retained
/// modes (in particular the mean is alias-free).
fn prod(a: &ScalarField, b: &ScalarField, dealias: bool) -> ScalarField {
    if dealias {
        grid::dealias(&grid::dealias(a).mul_pointwise(&grid::dealias(b)))
    } else {
        a.mul_pointwise(b)
    }
}

/// u . grad(f) with de-aliased products.
fn advect(u: &VectorField, f: &ScalarField, dealias: bool) -> ScalarField {
    let gf = grid::gradient(f);
    prod(&u.x, &gf.x, dealias).add(&prod(&u.y, &gf.y, dealias))
}

/// div(coef * grad(f)) with de-aliased products.
fn div_coef_grad(coef: &ScalarField, f: &ScalarField, dealias: bool) -> ScalarField {
    let gf = grid::gradient(f);
    let flux = VectorField {
        x: prod(coef, &gf.x, dealias),
        y: prod(coef, &gf.y, dealias),
    };
    grid::divergence(&flux)
}

/// Full velocity gradient G_ij = d_j u_i as four scalar fields.
struct VelGrad {
    xx: ScalarField,
    xy: ScalarField,
    yx: ScalarField,
    yy: ScalarField,
}

fn velocity_gradient(u: &VectorField) -> VelGrad {
    let gx = grid::gradient(&u.x);
    let gy = grid::gradient(&u.y);
    VelGrad {
        xx: gx.x,
        xy: gx.y,
        yx: gy.x,
        yy: gy.y,
    }
}

fn coefficient_field(phi: &ScalarField, f: impl Fn(f64) -> f64 + Sync + Send) -> ScalarField {
    phi.map(f)
}

/// Shared phi / q / u tendencies of the full and reduced systems. `stress`
/// optionally adds div(T) to the momentum balance.
fn rhs_flow(
    s: &State,
    p: &ModelParams,
    stress: Option<&SymTensorField>,
) -> (ScalarField, ScalarField, VectorField, ScalarField) {
    let dealias = p.dealias;
    let phi = &s.phi;
    let co = &p.coeffs;

    let mu = chemical_potential(phi, p.c0, &p.potential);
    let m_f = coefficient_field(phi, |x| co.m(x));
    let n_f = coefficient_field(phi, |x| co.n(x));
    let a_f = coefficient_field(phi, |x| co.a(x));
    let eta_f = coefficient_field(phi, |x| co.eta(x));

    // phi: -u.grad(phi) + div(m grad mu) - div(n grad(A q))
    let aq = prod(&a_f, &s.q, dealias);
    let d_phi = div_coef_grad(&m_f, &mu, dealias)
        .sub(&div_coef_grad(&n_f, &aq, dealias))
        .sub(&advect(&s.u, phi, dealias));

    // q: -u.grad(q) - q/tau_b + A lap(A q) - A div(n grad mu) + eps1 lap(q)
    let d_q = prod(&a_f, &grid::laplacian(&aq), dealias)
        .sub(&prod(&a_f, &div_coef_grad(&n_f, &mu, dealias), dealias))
        .sub(&q_relaxation_term(s, p))
        .sub(&advect(&s.u, &s.q, dealias))
        .axpy(p.eps1, &grid::laplacian(&s.q));

    // u: P[ -(u.grad)u + div(eta Du) + div(T) + mu grad phi ]
    let g = velocity_gradient(&s.u);
    let du = SymTensorField {
        xx: prod(&eta_f, &g.xx, dealias),
        xy: prod(&eta_f, &g.xy.add(&g.yx).scaled(0.5), dealias),
        yy: prod(&eta_f, &g.yy, dealias),
    };
    let gphi = grid::gradient(phi);
    let visc = grid::divergence_tensor(&du);
    let mut fx = visc
        .x
        .add(&prod(&mu, &gphi.x, dealias))
        .sub(&advect(&s.u, &s.u.x, dealias));
    let mut fy = visc
        .y
        .add(&prod(&mu, &gphi.y, dealias))
        .sub(&advect(&s.u, &s.u.y, dealias));
    if let Some(t) = stress {
        let divt = grid::divergence_tensor(t);
        fx = fx.add(&divt.x);
        fy = fy.add(&divt.y);
    }
    let d_u = grid::leray_project(&VectorField { x: fx, y: fy });

    (d_phi, d_q, d_u, mu)
}

/// RHS of the full system.
pub fn rhs_full(s: &State, p: &ModelParams) -> Result<Tendency> {
    s.phi.grid().same_as(s.q.grid()).then_some(()).ok_or_else(|| {
        VpsError::Grid("state fields on mismatched grids".into())
    })?;
    let dealias = p.dealias;
    let t = peterlin_stress(&s.c);
    let (d_phi, d_q, d_u, _mu) = rhs_flow(s, p, Some(&t));

    // C: -(u.grad)C + (grad u)C + C(grad u)^T - h trC [trC C - I] + eps2 lap C
    let g = velocity_gradient(&s.u);
    let h_f = coefficient_field(&s.phi, |x| p.coeffs.h(x));
    let tr = s.c.trace();
    let htr = prod(&h_f, &tr, dealias);
    // relaxation: h trC (trC C - I) = h trC T - h trC I with T = trC C
    let relax = SymTensorField {
        xx: prod(&htr, &t.xx, dealias).sub(&htr),
        xy: prod(&htr, &t.xy, dealias),
        yy: prod(&htr, &t.yy, dealias).sub(&htr),
    };
    let stretch_xx = prod(&g.xx, &s.c.xx, dealias)
        .add(&prod(&g.xy, &s.c.xy, dealias))
        .scaled(2.0);
    let stretch_xy = prod(&g.xx, &s.c.xy, dealias)
        .add(&prod(&g.xy, &s.c.yy, dealias))
        .add(&prod(&g.yx, &s.c.xx, dealias))
        .add(&prod(&g.yy, &s.c.xy, dealias));
    let stretch_yy = prod(&g.yx, &s.c.xy, dealias)
        .add(&prod(&g.yy, &s.c.yy, dealias))
        .scaled(2.0);
    let lap_c = grid::laplacian_tensor(&s.c);
    let d_c = SymTensorField {
        xx: stretch_xx
            .sub(&advect(&s.u, &s.c.xx, dealias))
            .sub(&relax.xx)
            .axpy(p.eps2, &lap_c.xx),
        xy: stretch_xy
            .sub(&advect(&s.u, &s.c.xy, dealias))
            .sub(&relax.xy)
            .axpy(p.eps2, &lap_c.xy),
        yy: stretch_yy
            .sub(&advect(&s.u, &s.c.yy, dealias))
            .sub(&relax.yy)
            .axpy(p.eps2, &lap_c.yy),
    };

    Ok(Tendency { d_phi, d_q, d_u, d_c })
}

/// RHS of the reduced system: the conformation tensor is frozen and its
/// stress does not feed back into the momentum balance.
pub fn rhs_reduced(s: &State, p: &ModelParams) -> Result<Tendency> {
    let (d_phi, d_q, d_u, _mu) = rhs_flow(s, p, None);
    Ok(Tendency {
        d_phi,
        d_q,
        d_u,
        d_c: SymTensorField::zeros(s.grid()),
    })
}

pub fn rhs(s: &State, p: &ModelParams) -> Result<Tendency> {
    match p.model {
        ModelKind::Full => rhs_full(s, p),
        ModelKind::Reduced => rhs_reduced(s, p),
    }
}

/// The q-relaxation term q / tau_b(phi), exactly as it enters the q tendency.
/// The time stepper removes it from the explicit RHS and integrates it with an
/// exact exponential factor instead.
pub fn q_relaxation_term(s: &State, p: &ModelParams) -> ScalarField {
    let inv_tau = s.phi.map(|x| 1.0 / p.coeffs.tau_b(x));
    prod(&inv_tau, &s.q, p.dealias)
}

/// Sup-norm of tr(C) C : grad(u) - 1/2 [(grad u)C + C(grad u)^T] : C,
/// which vanishes identically in 2D for solenoidal u and symmetric C.
pub fn hana_identity_residual(c: &SymTensorField, u: &VectorField) -> Result<f64> {
    grid::check_same_grid(c.grid(), u.grid())?;
    let div = grid::divergence(u).max_abs();
    if div > SOLENOIDAL_TOL {
        return Err(VpsError::InvalidArgument(format!(
            "identity requires solenoidal u: sup |div u| = {div:.3e}"
        )));
    }
    let g = velocity_gradient(u);
    let n = c.grid().len();
    let (cxx, cxy, cyy) = (c.xx.data(), c.xy.data(), c.yy.data());
    let (gxx, gxy, gyx, gyy) = (g.xx.data(), g.xy.data(), g.yx.data(), g.yy.data());
    let mut sup = 0.0f64;
    for i in 0..n {
        let tr = cxx[i] + cyy[i];
        let lhs = tr * (cxx[i] * gxx[i] + cxy[i] * (gxy[i] + gyx[i]) + cyy[i] * gyy[i]);
        let sxx = 2.0 * (gxx[i] * cxx[i] + gxy[i] * cxy[i]);
        let sxy = gxx[i] * cxy[i] + gxy[i] * cyy[i] + gyx[i] * cxx[i] + gyy[i] * cxy[i];
        let syy = 2.0 * (gyx[i] * cxy[i] + gyy[i] * cyy[i]);
        let rhs = 0.5 * (sxx * cxx[i] + 2.0 * sxy * cxy[i] + syy * cyy[i]);
        sup = sup.max((lhs - rhs).abs());
    }
    Ok(sup)
}
