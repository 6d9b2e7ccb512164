//! Misclassification risk of a positive marker: the printed closed form and an
//! independent nested-quadrature oracle for its defining double integral.

use std::cell::Cell;

use serde::Serialize;

use crate::error::{Result, SmellError};

/// Default absolute tolerance of [`risk_numerical`].
pub const DEFAULT_TOL: f64 = 1e-8;
/// Recursion limit of the adaptive Simpson rule.
pub const MAX_DEPTH: usize = 40;
pub const MISMATCH_FLAG: &str = "PRINTED-FORM MISMATCH";

/// Distances of a pair to the positive (`d_plus`) and negative (`d_minus`) marker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskInput {
    pub d_plus: f64,
    pub d_minus: f64,
}

impl RiskInput {
    pub fn new(d_plus: f64, d_minus: f64) -> Result<Self> {
        for (name, v) in [("d_plus", d_plus), ("d_minus", d_minus)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SmellError::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self { d_plus, d_minus })
    }
}

/// Positive score at distance `y` for a fixed negative distance.
pub fn q_plus_of(y: f64, d_minus: f64) -> f64 {
    let m2 = d_minus * d_minus;
    (1.0 + m2) / (2.0 + y * y + m2)
}

/// Printed antiderivative of `q_plus_of` over `[0, x]`.
pub fn phi_plus(x: f64, d_minus: f64) -> f64 {
    let a = d_minus * d_minus + 1.0;
    let rb = (d_minus * d_minus + 2.0).sqrt();
    a * (x / rb).atan() / rb
}

/// The printed closed-form risk, evaluated term by term as written.
pub fn risk_closed_form(input: RiskInput) -> f64 {
    let (p, m) = (input.d_plus, input.d_minus);
    let a = m * m + 1.0;
    let b = m * m + 2.0;
    let rb = b.sqrt();
    let log_term = rb * (1.0 / (p * p / b + 1.0).sqrt()).ln();
    let atan_sq = a * (p / rb).atan().powi(2) / rb;
    let last = p * (p * p / rb).atan();
    a / rb * (log_term - atan_sq + last)
}

/// Integral estimate with a bound on its absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

struct Simpson<'a, F> {
    f: &'a F,
    max_depth: usize,
    tol: f64,
    error: f64,
    failed: bool,
}

impl<F: Fn(f64) -> f64> Simpson<'_, F> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(&mut self, a: f64, fa: f64, m: f64, fm: f64, b: f64, fb: f64, whole: f64, tol: f64, depth: usize) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = (self.f)(lm);
        let frm = (self.f)(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            self.error += delta.abs() / 15.0;
            return left + right + delta / 15.0;
        }
        if depth >= self.max_depth {
            self.failed = true;
            self.error += delta.abs() / 15.0;
            return left + right + delta / 15.0;
        }
        self.recurse(a, fa, lm, flm, m, fm, left, tol / 2.0, depth + 1)
            + self.recurse(m, fm, rm, frm, b, fb, right, tol / 2.0, depth + 1)
    }
}

/// Adaptive Simpson rule on `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: usize) -> Result<Quadrature> {
    if !(tol > 0.0) {
        return Err(SmellError::InvalidConfig(format!("quadrature tolerance must be > 0, got {tol}")));
    }
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut state = Simpson {
        f,
        max_depth,
        tol,
        error: 0.0,
        failed: false,
    };
    let value = state.recurse(a, fa, m, fm, b, fb, whole, state.tol, 0);
    if state.failed || !value.is_finite() {
        return Err(SmellError::Quadrature { tol, max_depth });
    }
    Ok(Quadrature {
        value,
        error: state.error,
    })
}

/// Numerical CDF of the positive score on `[0, x]`.
pub fn phi_numerical(x: f64, d_minus: f64, tol: f64) -> Result<Quadrature> {
    adaptive_simpson(&|y| q_plus_of(y, d_minus), 0.0, x, tol, MAX_DEPTH)
}

/// Nested quadrature of `int_0^D+ (1 - q+(t)) Phi(t) dt` where `Phi` is itself
/// integrated numerically. The returned error bounds both levels.
pub fn risk_numerical(input: RiskInput, tol: f64) -> Result<Quadrature> {
    if !(tol > 0.0) {
        return Err(SmellError::InvalidConfig(format!("quadrature tolerance must be > 0, got {tol}")));
    }
    let span = input.d_plus;
    if span == 0.0 {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    let inner_tol = tol / (2.0 * span.max(1.0));
    let inner_error = Cell::new(0.0_f64);
    let failed = Cell::new(false);
    let integrand = |t: f64| {
        let phi = match phi_numerical(t, input.d_minus, inner_tol) {
            Ok(q) => q,
            Err(_) => {
                failed.set(true);
                return f64::NAN;
            }
        };
        inner_error.set(inner_error.get().max(phi.error));
        (1.0 - q_plus_of(t, input.d_minus)) * phi.value
    };
    let outer = adaptive_simpson(&integrand, 0.0, span, tol / 2.0, MAX_DEPTH);
    if failed.get() {
        return Err(SmellError::Quadrature { tol: inner_tol, max_depth: MAX_DEPTH });
    }
    let outer = outer?;
    // 1 - q+ lies in [0, 1]: an inner error e moves the outer integral by at most span * e
    Ok(Quadrature {
        value: outer.value,
        error: outer.error + span * inner_error.get(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskRow {
    pub d_plus: f64,
    pub d_minus: f64,
    pub closed_form: f64,
    pub numerical: f64,
    pub error_estimate: f64,
    pub abs_diff: f64,
    pub mismatch: bool,
}

impl RiskRow {
    pub fn flag(&self) -> &'static str {
        if self.mismatch {
            MISMATCH_FLAG
        } else {
            ""
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub tol: f64,
    pub rows: Vec<RiskRow>,
    pub max_abs_deviation: f64,
    pub mismatches: usize,
    /// Closed form non-decreasing in `d_plus` along every `d_minus` of the grid.
    pub closed_form_monotone: bool,
    pub numerical_monotone: bool,
}

/// The 5 × 5 grid `{0, 0.5, 1, 2, 5}²`, `d_plus` varying fastest.
pub fn default_grid() -> Vec<RiskInput> {
    const POINTS: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 5.0];
    POINTS
        .iter()
        .flat_map(|&m| POINTS.iter().map(move |&p| RiskInput { d_plus: p, d_minus: m }))
        .collect()
}

/// Compares the closed form against the oracle; rows deviating by more than `10 * tol`
/// are flagged.
pub fn risk_consistency_report(grid: &[RiskInput], tol: f64) -> Result<RiskReport> {
    let mut rows = Vec::with_capacity(grid.len());
    for &input in grid {
        let closed_form = risk_closed_form(input);
        let numerical = risk_numerical(input, tol)?;
        let abs_diff = (closed_form - numerical.value).abs();
        rows.push(RiskRow {
            d_plus: input.d_plus,
            d_minus: input.d_minus,
            closed_form,
            numerical: numerical.value,
            error_estimate: numerical.error,
            abs_diff,
            mismatch: !(abs_diff <= 10.0 * tol),
        });
    }
    let monotone = |pick: fn(&RiskRow) -> f64| {
        let mut by_minus: Vec<&RiskRow> = rows.iter().collect();
        by_minus.sort_by(|a, b| a.d_minus.total_cmp(&b.d_minus).then(a.d_plus.total_cmp(&b.d_plus)));
        by_minus
            .windows(2)
            .all(|w| w[0].d_minus != w[1].d_minus || pick(w[1]) >= pick(w[0]))
    };
    Ok(RiskReport {
        tol,
        max_abs_deviation: rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max),
        mismatches: rows.iter().filter(|r| r.mismatch).count(),
        closed_form_monotone: monotone(|r| r.closed_form),
        numerical_monotone: monotone(|r| r.numerical),
        rows,
    })
}
