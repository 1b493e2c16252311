//! Parametric coefficient functions (mobility, cross-diffusion, relaxation,
//! viscosity), the mixing potential, and validators for the positivity /
//! growth assumptions the model relies on.

use crate::error::{Result, VpsError};
use serde::{Deserialize, Serialize};

/// Half-width of the C1 smoothing applied at the clamp edges.
pub const CLAMP_SMOOTH_WIDTH: f64 = 0.05;

/// Number of samples used by the dense-sampling validators.
const VALIDATION_SAMPLES: usize = 4001;

/// A coefficient function: either a constant or a cubic polynomial. The
/// argument is clamped (with a C1-smoothed transition) to a declared interval
/// so the function stays globally bounded with bounded derivative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuncSpec {
    Constant(f64),
    Cubic([f64; 4]),
}

impl FuncSpec {
    fn eval_raw(&self, s: f64) -> f64 {
        match self {
            FuncSpec::Constant(c) => *c,
            FuncSpec::Cubic(c) => c[0] + s * (c[1] + s * (c[2] + s * c[3])),
        }
    }

    fn deriv_raw(&self, s: f64) -> f64 {
        match self {
            FuncSpec::Constant(_) => 0.0,
            FuncSpec::Cubic(c) => c[1] + s * (2.0 * c[2] + s * 3.0 * c[3]),
        }
    }
}

/// C1 saturation of `s` to [lo, hi] with quadratic easing of half-width `w`.
/// Output stays in [lo, hi]; the derivative stays in [0, 1].
fn smooth_clamp(s: f64, lo: f64, hi: f64, w: f64) -> f64 {
    if s >= lo + w && s <= hi - w {
        s
    } else if s <= lo - w {
        lo
    } else if s >= hi + w {
        hi
    } else if s < lo + w {
        lo + (s - (lo - w)).powi(2) / (4.0 * w)
    } else {
        hi - ((hi + w) - s).powi(2) / (4.0 * w)
    }
}

fn smooth_clamp_deriv(s: f64, lo: f64, hi: f64, w: f64) -> f64 {
    if s >= lo + w && s <= hi - w {
        1.0
    } else if s <= lo - w || s >= hi + w {
        0.0
    } else if s < lo + w {
        (s - (lo - w)) / (2.0 * w)
    } else {
        ((hi + w) - s) / (2.0 * w)
    }
}

/// A coefficient function with its clamp interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClampedFunc {
    pub spec: FuncSpec,
    pub lo: f64,
    pub hi: f64,
}

impl ClampedFunc {
    pub fn constant(c: f64) -> Self {
        ClampedFunc {
            spec: FuncSpec::Constant(c),
            lo: -0.5,
            hi: 1.5,
        }
    }

    pub fn new(spec: FuncSpec, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(VpsError::InvalidArgument(format!(
                "clamp interval must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(ClampedFunc { spec, lo, hi })
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.spec
            .eval_raw(smooth_clamp(s, self.lo, self.hi, CLAMP_SMOOTH_WIDTH))
    }

    pub fn deriv(&self, s: f64) -> f64 {
        let z = smooth_clamp(s, self.lo, self.hi, CLAMP_SMOOTH_WIDTH);
        self.spec.deriv_raw(z) * smooth_clamp_deriv(s, self.lo, self.hi, CLAMP_SMOOTH_WIDTH)
    }

    /// (min, max) of the function over its effective range, by dense sampling.
    pub fn range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let a = self.lo - 2.0 * CLAMP_SMOOTH_WIDTH;
        let b = self.hi + 2.0 * CLAMP_SMOOTH_WIDTH;
        for i in 0..VALIDATION_SAMPLES {
            let s = a + (b - a) * i as f64 / (VALIDATION_SAMPLES - 1) as f64;
            let v = self.eval(s);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn sup_deriv(&self) -> f64 {
        let a = self.lo - 2.0 * CLAMP_SMOOTH_WIDTH;
        let b = self.hi + 2.0 * CLAMP_SMOOTH_WIDTH;
        (0..VALIDATION_SAMPLES)
            .map(|i| {
                let s = a + (b - a) * i as f64 / (VALIDATION_SAMPLES - 1) as f64;
                self.deriv(s).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// The six parametric functions of the model. `m` is derived from `n` via
/// m = n^2; a test-mode override may break that tie (flagged non-physical).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub n: ClampedFunc,
    pub a: ClampedFunc,
    pub h: ClampedFunc,
    pub eta: ClampedFunc,
    pub tau_b: ClampedFunc,
    /// Test mode only: decouples m from n (e.g. n = 0 with m > 0) to unlock
    /// analytic relaxation oracles. Runs using it are non-physical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_override: Option<ClampedFunc>,
}

impl Default for CoefficientSet {
    fn default() -> Self {
        CoefficientSet {
            n: ClampedFunc::constant(1.0),
            a: ClampedFunc::constant(1.0),
            h: ClampedFunc::constant(1.0),
            eta: ClampedFunc::constant(1.0),
            tau_b: ClampedFunc::constant(1.0),
            m_override: None,
        }
    }
}

impl CoefficientSet {
    /// n = 0 with m kept positive; breaks m = n^2 on purpose.
    pub fn relaxation_test_mode(m: f64) -> Self {
        CoefficientSet {
            n: ClampedFunc::constant(0.0),
            m_override: Some(ClampedFunc::constant(m)),
            ..CoefficientSet::default()
        }
    }

    pub fn m(&self, s: f64) -> f64 {
        match &self.m_override {
            Some(f) => f.eval(s),
            None => {
                let n = self.n.eval(s);
                n * n
            }
        }
    }

    pub fn n(&self, s: f64) -> f64 {
        self.n.eval(s)
    }
    pub fn a(&self, s: f64) -> f64 {
        self.a.eval(s)
    }
    pub fn h(&self, s: f64) -> f64 {
        self.h.eval(s)
    }
    pub fn eta(&self, s: f64) -> f64 {
        self.eta.eval(s)
    }
    pub fn tau_b(&self, s: f64) -> f64 {
        self.tau_b.eval(s)
    }

    /// Sampled (lower, upper) bounds across all six functions.
    pub fn bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let funcs = [&self.n, &self.a, &self.h, &self.eta, &self.tau_b];
        for f in funcs {
            let (a, b) = f.range();
            lo = lo.min(a);
            hi = hi.max(b);
        }
        // m tracked separately (it is n^2 or the override)
        let m_range = match &self.m_override {
            Some(f) => f.range(),
            None => {
                let (a, b) = self.n.range();
                let lo2 = if a <= 0.0 && b >= 0.0 { 0.0 } else { (a * a).min(b * b) };
                (lo2, (a * a).max(b * b))
            }
        };
        lo = lo.min(m_range.0);
        hi = hi.max(m_range.1);
        (lo, hi)
    }

    /// Upper bound per coefficient, used for frozen-coefficient splitting.
    pub fn max_m(&self) -> f64 {
        match &self.m_override {
            Some(f) => f.range().1,
            None => {
                let (a, b) = self.n.range();
                (a * a).max(b * b)
            }
        }
    }
    pub fn max_a(&self) -> f64 {
        self.a.range().1
    }
    pub fn max_eta(&self) -> f64 {
        self.eta.range().1
    }
}

// ---------------------------------------------------------------------------
// Potential

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialFamily {
    GinzburgLandau,
    Custom,
}

/// Polynomial mixing potential of degree <= 4 (the double-well
/// Ginzburg-Landau potential phi^2 (1-phi)^2 by default).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub family: PotentialFamily,
    /// Coefficients c[i] of x^i, i = 0..4.
    pub coeffs: [f64; 5],
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::ginzburg_landau()
    }
}

impl PotentialSpec {
    /// F(x) = x^2 (1 - x)^2 = x^2 - 2 x^3 + x^4.
    pub fn ginzburg_landau() -> Self {
        PotentialSpec {
            family: PotentialFamily::GinzburgLandau,
            coeffs: [0.0, 0.0, 1.0, -2.0, 1.0],
        }
    }

    pub fn custom(coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() > 5 {
            return Err(VpsError::InvalidArgument(format!(
                "potential degree must be <= 4, got degree {}",
                coeffs.len() - 1
            )));
        }
        let mut c = [0.0; 5];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Ok(PotentialSpec {
            family: PotentialFamily::Custom,
            coeffs: c,
        })
    }

    pub fn degree(&self) -> usize {
        (0..5).rev().find(|&i| self.coeffs[i] != 0.0).unwrap_or(0)
    }

    /// Growth exponent p (at least 2 by convention).
    pub fn growth_exponent(&self) -> usize {
        self.degree().max(2)
    }

    /// F, F', F'' or F''' at x.
    pub fn eval(&self, x: f64, order: u32) -> Result<f64> {
        let c = &self.coeffs;
        Ok(match order {
            0 => c[0] + x * (c[1] + x * (c[2] + x * (c[3] + x * c[4]))),
            1 => c[1] + x * (2.0 * c[2] + x * (3.0 * c[3] + x * 4.0 * c[4])),
            2 => 2.0 * c[2] + x * (6.0 * c[3] + x * 12.0 * c[4]),
            3 => 6.0 * c[3] + x * 24.0 * c[4],
            _ => {
                return Err(VpsError::InvalidArgument(format!(
                    "potential derivative order must be 0..=3, got {order}"
                )))
            }
        })
    }

    /// Global infimum of F'' (a quadratic), when it exists.
    fn second_derivative_infimum(&self) -> Result<f64> {
        let a = 12.0 * self.coeffs[4];
        let b = 6.0 * self.coeffs[3];
        let c = 2.0 * self.coeffs[2];
        if a > 0.0 {
            Ok(c - b * b / (4.0 * a))
        } else if a == 0.0 && b == 0.0 {
            Ok(c)
        } else {
            Err(VpsError::InvalidArgument(
                "second derivative of the potential is unbounded below".into(),
            ))
        }
    }

    /// Global lower bound -c3 of F, when F is bounded below.
    fn infimum(&self) -> Result<f64> {
        let deg = self.degree();
        let c = &self.coeffs;
        if deg == 4 && c[4] > 0.0 || deg == 2 && c[2] > 0.0 || deg == 0 {
            // minimum at a critical point: scan plus Newton polish on F'
            let scale = 1.0
                + c.iter()
                    .take(4)
                    .map(|v| (v / c[deg]).abs())
                    .fold(0.0, f64::max);
            let mut best = f64::INFINITY;
            let steps = 4000;
            for i in 0..=steps {
                let x = -scale + 2.0 * scale * i as f64 / steps as f64;
                let mut xr = x;
                for _ in 0..30 {
                    let f1 = self.eval(xr, 1).unwrap();
                    let f2 = self.eval(xr, 2).unwrap();
                    if f2.abs() < 1e-300 {
                        break;
                    }
                    let step = f1 / f2;
                    xr -= step;
                    if step.abs() < 1e-14 * (1.0 + xr.abs()) {
                        break;
                    }
                }
                for cand in [x, xr] {
                    let v = self.eval(cand, 0).unwrap();
                    if v < best {
                        best = v;
                    }
                }
            }
            Ok(best)
        } else {
            Err(VpsError::InvalidArgument(
                "potential is unbounded below".into(),
            ))
        }
    }
}

/// Smallest c4 >= 0 with F'' >= -c4 everywhere.
pub fn compute_c4(spec: &PotentialSpec) -> Result<f64> {
    Ok((-spec.second_derivative_infimum()?).max(0.0))
}

/// Penalty weight a = c4/2 + margin; any margin > 0 makes the relative energy
/// strictly definite.
pub fn min_penalty(c4: f64, margin: f64) -> Result<f64> {
    if !(c4 >= 0.0) {
        return Err(VpsError::InvalidArgument(format!("c4 must be >= 0, got {c4}")));
    }
    if !(margin >= 0.0) {
        return Err(VpsError::InvalidArgument(format!(
            "penalty margin must be >= 0, got {margin}"
        )));
    }
    Ok(c4 / 2.0 + margin)
}

// ---------------------------------------------------------------------------
// Assumption validation

#[derive(Clone, Debug, Serialize)]
pub struct Clause {
    pub name: String,
    pub pass: bool,
    /// Witnessing extremum or bound for the clause.
    pub witness: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub clauses: Vec<Clause>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.clauses.iter().all(|c| c.pass)
    }

    fn push(&mut self, name: &str, pass: bool, witness: f64, detail: String) {
        self.clauses.push(Clause {
            name: name.to_string(),
            pass,
            witness,
            detail,
        });
    }
}

/// Check the positivity, smoothness and growth clauses the model assumes.
/// Failures are report entries, never errors.
pub fn validate_assumptions(coeffs: &CoefficientSet, spec: &PotentialSpec) -> ValidationReport {
    let mut report = ValidationReport::default();

    let named: [(&str, &ClampedFunc); 5] = [
        ("n", &coeffs.n),
        ("A", &coeffs.a),
        ("h", &coeffs.h),
        ("eta", &coeffs.eta),
        ("tau_b", &coeffs.tau_b),
    ];
    for (name, f) in named {
        let (lo, hi) = f.range();
        report.push(
            &format!("{name} positively bounded"),
            lo > 0.0 && hi.is_finite(),
            lo,
            format!("range [{lo:.6e}, {hi:.6e}]"),
        );
    }
    // m: positivity plus the n^2 = m tie
    {
        let a = coeffs.n.lo - 2.0 * CLAMP_SMOOTH_WIDTH;
        let b = coeffs.n.hi + 2.0 * CLAMP_SMOOTH_WIDTH;
        let mut m_min = f64::INFINITY;
        let mut tie_err = 0.0f64;
        for i in 0..VALIDATION_SAMPLES {
            let s = a + (b - a) * i as f64 / (VALIDATION_SAMPLES - 1) as f64;
            let m = coeffs.m(s);
            let n = coeffs.n(s);
            m_min = m_min.min(m);
            tie_err = tie_err.max((n * n - m).abs());
        }
        report.push(
            "m positively bounded",
            m_min > 0.0,
            m_min,
            format!("min m = {m_min:.6e}"),
        );
        report.push(
            "n^2 = m",
            tie_err <= 1e-12,
            tie_err,
            format!("max |n^2 - m| = {tie_err:.3e}"),
        );
    }

    let a_sup = coeffs.a.sup_deriv();
    report.push(
        "A' bounded",
        a_sup.is_finite(),
        a_sup,
        format!("sup |A'| = {a_sup:.6e}"),
    );
    // A'': second derivative of the clamped cubic, sampled by differencing A'
    {
        let lo = coeffs.a.lo - 2.0 * CLAMP_SMOOTH_WIDTH;
        let hi = coeffs.a.hi + 2.0 * CLAMP_SMOOTH_WIDTH;
        let dh = (hi - lo) / (VALIDATION_SAMPLES - 1) as f64;
        let mut sup2 = 0.0f64;
        for i in 1..VALIDATION_SAMPLES - 1 {
            let s = lo + dh * i as f64;
            let d2 = (coeffs.a.deriv(s + dh) - coeffs.a.deriv(s - dh)) / (2.0 * dh);
            sup2 = sup2.max(d2.abs());
        }
        report.push(
            "A'' bounded",
            sup2.is_finite(),
            sup2,
            format!("sup |A''| ~ {sup2:.6e}"),
        );
    }

    let deg = spec.degree();
    report.push(
        "potential growth p <= 4",
        deg <= 4,
        deg as f64,
        format!("degree {deg}"),
    );
    match spec.infimum() {
        Ok(inf) => report.push(
            "F bounded below",
            true,
            inf,
            format!("inf F = {inf:.6e} (c3 = {:.6e})", (-inf).max(0.0)),
        ),
        Err(_) => report.push(
            "F bounded below",
            false,
            f64::NEG_INFINITY,
            "potential unbounded below".into(),
        ),
    }
    match compute_c4(spec) {
        Ok(c4) => report.push("F'' >= -c4", true, c4, format!("c4 = {c4:.6e}")),
        Err(_) => report.push(
            "F'' >= -c4",
            false,
            f64::INFINITY,
            "F'' unbounded below".into(),
        ),
    }
    // F''' linear growth: automatic for degree <= 4 (F''' is affine)
    let c13 = 24.0 * spec.coeffs[4].abs();
    let c23 = 6.0 * spec.coeffs[3].abs();
    report.push(
        "F''' linear growth",
        deg <= 4,
        c13,
        format!("|F'''(x)| <= {c13:.3e} |x| + {c23:.3e}"),
    );

    report
}
