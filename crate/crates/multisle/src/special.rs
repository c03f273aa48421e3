//! Scalar special functions: gamma-family helpers and the Gauss
//! hypergeometric combination that prices a two-chord configuration.
//!
//! The central object is `F(x) = ₂F₁(4/κ, 1−4/κ; 8/κ; x)` on `x ∈ [0, 1]`
//! together with the factor `G(r) = r^{2/κ} F(r)`. Power series, the
//! connection formula at the `x → 1` end, and the logarithmic degenerate
//! cases are selected automatically from `κ`.

use crate::{Error, Result};

/// Boundary scaling exponent `b = (6 − κ) / (2κ)`.
pub fn boundary_exponent(kappa: f64) -> f64 {
    (6.0 - kappa) / (2.0 * kappa)
}

/// Central charge `c = (6 − κ)(3κ − 8) / (2κ)`.
pub fn central_charge(kappa: f64) -> f64 {
    (6.0 - kappa) * (3.0 * kappa - 8.0) / (2.0 * kappa)
}

/// Diffusivity κ with its derived constants, validated on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaParams {
    pub kappa: f64,
    /// Boundary scaling exponent.
    pub b: f64,
    /// Central charge.
    pub c: f64,
}

impl KappaParams {
    pub fn new(kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(Self { kappa, b: boundary_exponent(kappa), c: central_charge(kappa) })
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa < 8.0) {
        return Err(Error::OutOfRange(format!(
            "kappa must lie in (0, 8), got {kappa}"
        )));
    }
    Ok(())
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Digamma function on the real line, poles excluded. Uses the ascending
/// recurrence up to a large argument, then the asymptotic expansion;
/// negative arguments go through the reflection formula.
pub fn digamma(x: f64) -> f64 {
    if x <= 0.0 {
        if x == x.floor() {
            return f64::NAN;
        }
        // psi(x) = psi(1 - x) - pi / tan(pi x)
        return digamma(1.0 - x) - std::f64::consts::PI / libm::tan(std::f64::consts::PI * x);
    }
    let mut psi = 0.0;
    let mut t = x;
    while t < 16.0 {
        psi -= 1.0 / t;
        t += 1.0;
    }
    // Asymptotic series in 1/t^2 with Bernoulli-number coefficients.
    let inv = 1.0 / t;
    let inv2 = inv * inv;
    psi += t.ln() - 0.5 * inv
        - inv2
            * (1.0 / 12.0
                - inv2
                    * (1.0 / 120.0
                        - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    psi
}

const SERIES_MAX_TERMS: usize = 200_000;

/// Raw power series for `₂F₁(a, b; c; x)`, valid for `|x| < 1` and `c`
/// off the nonpositive integers. Terminates exactly when `a` or `b` is a
/// nonpositive integer.
fn hyp2f1_series(a: f64, b: f64, c: f64, x: f64) -> Result<f64> {
    let mut sum = 1.0;
    let mut term = 1.0;
    for n in 0..SERIES_MAX_TERMS {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * x;
        if term == 0.0 {
            return Ok(sum);
        }
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::OutOfRange(format!(
        "hypergeometric series failed to converge at x = {x}"
    )))
}

/// Connection formula at the `x → 1` end for non-integer `c − a − b`:
/// two series in `1 − x`, both converging fast once `x > 0.75`.
fn hyp2f1_near_one_generic(a: f64, b: f64, c: f64, x: f64) -> Result<f64> {
    let s = c - a - b;
    let y = 1.0 - x;
    let coeff_a = gamma(c) * gamma(s) / (gamma(c - a) * gamma(c - b));
    let coeff_b = gamma(c) * gamma(-s) / (gamma(a) * gamma(b));
    let f1 = hyp2f1_series(a, b, 1.0 - s, y)?;
    let f2 = hyp2f1_series(c - a, c - b, 1.0 + s, y)?;
    Ok(coeff_a * f1 + coeff_b * y.powf(s) * f2)
}

/// Connection formula when `c = a + b + m` for an integer `m >= 1` and
/// the series does not terminate: the second branch picks up a logarithm.
fn hyp2f1_near_one_log(a: f64, b: f64, m: usize, x: f64) -> Result<f64> {
    let c = a + b + m as f64;
    let y = 1.0 - x;
    let mf = m as f64;

    // Finite part: sum_{n=0}^{m-1} (a)_n (b)_n / (n! (1-m)_n) y^n.
    let mut finite = 0.0;
    let mut term = 1.0;
    for n in 0..m {
        finite += term;
        let nf = n as f64;
        if n + 1 < m {
            term *= (a + nf) * (b + nf) / ((nf + 1.0) * (1.0 - mf + nf)) * y;
        }
    }
    finite *= gamma(mf) * gamma(c) / (gamma(a + mf) * gamma(b + mf));

    // Logarithmic part: y^m sum_{n>=0} (a+m)_n (b+m)_n / (n! (n+m)!) y^n
    //   * [ln y - psi(n+1) - psi(n+m+1) + psi(a+m+n) + psi(b+m+n)].
    let log_y = y.ln();
    let mut term = 1.0 / gamma(mf + 1.0);
    let mut bracket = log_y - digamma(1.0) - digamma(mf + 1.0) + digamma(a + mf) + digamma(b + mf);
    let mut log_sum = term * bracket;
    for n in 0..SERIES_MAX_TERMS {
        let nf = n as f64;
        term *= (a + mf + nf) * (b + mf + nf) / ((nf + 1.0) * (nf + mf + 1.0)) * y;
        bracket += -1.0 / (nf + 1.0) - 1.0 / (nf + mf + 1.0)
            + 1.0 / (a + mf + nf)
            + 1.0 / (b + mf + nf);
        let t = term * bracket;
        log_sum += t;
        if t.abs() <= 1e-17 * log_sum.abs().max(1e-300) {
            break;
        }
    }
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    log_sum *= -sign * gamma(c) / (gamma(a) * gamma(b)) * y.powi(m as i32);

    Ok(finite + log_sum)
}

fn is_near_integer(x: f64, tol: f64) -> Option<i64> {
    let r = x.round();
    if (x - r).abs() <= tol {
        Some(r as i64)
    } else {
        None
    }
}

const SERIES_SWITCH: f64 = 0.75;

/// `₂F₁(4/κ, 1−4/κ; 8/κ; x)` on `x ∈ [0, 1]`. At `x = 1` the Gauss
/// summation value is returned; it is finite for every `κ ∈ (0, 8)`.
pub fn hyp_f(kappa: f64, x: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfRange(format!(
            "hypergeometric argument must lie in [0, 1], got {x}"
        )));
    }
    if x == 1.0 {
        return hyp_f_at_one(kappa);
    }
    let a = 4.0 / kappa;
    let b = 1.0 - 4.0 / kappa;
    let c = 8.0 / kappa;

    // Terminating series: b a nonpositive integer, i.e. kappa = 4/m.
    // The polynomial is exact for every x, so no switchover is needed.
    if let Some(bi) = is_near_integer(b, 1e-12) {
        if bi <= 0 {
            return hyp2f1_series(a, bi as f64, c, x);
        }
    }
    if x <= SERIES_SWITCH {
        return hyp2f1_series(a, b, c, x);
    }
    let s = c - a - b;
    match is_near_integer(s, 1e-10) {
        Some(m) if m >= 1 => hyp2f1_near_one_log(a, b, m as usize, x),
        Some(_) => Err(Error::OutOfRange(format!(
            "kappa = {kappa} puts the hypergeometric parameters outside the supported range"
        ))),
        None => {
            if is_near_integer(s, 1e-4).is_some() {
                // Close to a degenerate case the two connection branches
                // nearly cancel; the plain series is slower but stable.
                hyp2f1_series(a, b, c, x)
            } else {
                hyp2f1_near_one_generic(a, b, c, x)
            }
        }
    }
}

/// Gauss summation value `F(1) = Γ(8/κ) Γ(8/κ − 1) / (Γ(4/κ) Γ(12/κ − 1))`.
pub fn hyp_f_at_one(kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    let a = 4.0 / kappa;
    let c = 8.0 / kappa;
    Ok(gamma(c) * gamma(c - 1.0) / (gamma(a) * gamma(c + a - 1.0)))
}

/// Raw two-chord factor `G(r) = r^{2/κ} F(r)` on `r ∈ [0, 1]`.
pub fn g_factor(kappa: f64, r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::OutOfRange(format!(
            "cross-ratio must lie in [0, 1], got {r}"
        )));
    }
    if r == 0.0 {
        check_kappa(kappa)?;
        return Ok(0.0);
    }
    Ok(r.powf(2.0 / kappa) * hyp_f(kappa, r)?)
}

/// `G(r) / G(1)`: the two-chord factor normalized to one at `r = 1`,
/// which is the weight a pair of links contributes relative to two
/// independent single links.
pub fn g_factor_normalized(kappa: f64, r: f64) -> Result<f64> {
    Ok(g_factor(kappa, r)? / hyp_f_at_one(kappa)?)
}
