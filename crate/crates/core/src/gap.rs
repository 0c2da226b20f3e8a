//! Supremum AR/AP revenue gap and related closed-form bounds.
//!
//! The gap is `Re(k) = 1 + k ∫_0^∞ h(x) dx` with
//! `h = A·B / (x·A + k·B)^2`, `A = Q(k, x)` and `B = P(k+1, x)`. Both `A` and
//! `B` are regularized incomplete gammas, so the common `e^{-x}` factor of the
//! raw Poisson-sum form never has to be evaluated.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::roots::bisect;
use crate::special::{ln_choose, reg_gamma_lower, reg_gamma_pair, reg_gamma_upper, CompensatedSum};

/// Default absolute tolerance on the gap.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
const LB_LOG_SPACE_ABOVE: usize = 500;

/// `(Re(k), c_k)` for `k = 1..=24` reference values to 4 decimals (`Re(1) = π²/6`).
pub const REFERENCE_TABLE: [(f64, f64); 24] = [
    (PI * PI / 6.0, 0.6449),
    (1.4445, 0.6287),
    (1.3575, 0.6192),
    (1.3065, 0.6130),
    (1.2721, 0.6085),
    (1.2470, 0.6050),
    (1.2276, 0.6023),
    (1.2121, 0.6000),
    (1.1994, 0.5982),
    (1.1886, 0.5965),
    (1.1794, 0.5951),
    (1.1714, 0.5939),
    (1.1644, 0.5928),
    (1.1581, 0.5918),
    (1.1525, 0.5909),
    (1.1475, 0.5901),
    (1.1429, 0.5894),
    (1.1387, 0.5887),
    (1.1349, 0.5881),
    (1.1313, 0.5875),
    (1.1281, 0.5878),
    (1.1250, 0.5865),
    (1.1221, 0.5860),
    (1.1195, 0.5855),
];

/// Gap value, bracketing data and quadrature diagnostics for one `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub k: usize,
    pub gap: f64,
    /// `(gap - 1)·√k`.
    pub c_k: f64,
    pub quad_error: f64,
    pub lb: f64,
    pub bounds_ok: bool,
    pub runtime_ms: f64,
}

/// `T_i(x) = e^{-x} Σ_{t<i} x^t/t! = Q(i, x)`.
pub fn t_func(i: u32, x: f64) -> f64 {
    reg_gamma_upper(i, x)
}

/// Stable gap integrand `h(x) = A·B / (x·A + k·B)^2`.
pub fn gap_integrand(k: usize, x: f64) -> f64 {
    if x <= 0.0 {
        // h ~ x^{k-1}/(k+1)! near 0
        return if k == 1 { 0.5 } else { 0.0 };
    }
    let kk = k as f64;
    let a = reg_gamma_upper(k as u32, x);
    let b = reg_gamma_lower(k as u32 + 1, x);
    let d = x * a + kk * b;
    if d == 0.0 {
        return 0.0;
    }
    a * b / (d * d)
}

/// Tail cutoff with `k ∫_X^∞ h <= 2 Q(k, X) <= budget`.
///
/// For `X >= k + 1` the median bound gives `B >= 1/2`, hence
/// `h <= A/(k^2 B) <= 2A/k^2`, and `∫_X^∞ Q(k, x) dx <= k Q(k, X)`.
fn tail_cutoff(k: usize, budget: f64) -> (f64, f64) {
    let kk = k as f64;
    let step = 10.0 + 10.0 * kk.sqrt();
    let mut x = kk + 40.0_f64.max(20.0 * kk.sqrt());
    let mut bound = 2.0 * reg_gamma_upper(k as u32, x);
    while bound > budget && x < 1e7 {
        x += step;
        bound = 2.0 * reg_gamma_upper(k as u32, x);
    }
    (x, bound)
}

/// `Re_{AR/AP}(k)` by adaptive Gauss–Kronrod on `[0, k-√(6k)]`, `[k-√(6k), k]`, `[k, X_cut]`.
pub fn ar_ap_gap(k: usize, quad_tol: f64) -> Result<GapReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if !(quad_tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "quad_tol must be positive, got {quad_tol}"
        )));
    }
    let start = Instant::now();
    let kk = k as f64;
    let (x_cut, tail) = tail_cutoff(k, 0.1 * quad_tol);
    let split = (kk - (6.0 * kk).sqrt()).max(0.0);
    let mut pts = vec![0.0, split, kk, x_cut];
    pts.dedup();
    let panel_tol = 0.9 * quad_tol / (3.0 * kk);
    let mut integral = 0.0;
    let mut err = 0.0;
    for w in pts.windows(2) {
        let r = integrate(|x| gap_integrand(k, x), w[0], w[1], panel_tol)?;
        integral += r.value;
        err += r.abs_error;
    }
    let gap = 1.0 + kk * integral;
    let quad_error = kk * err + tail;
    let lb = ar_ap_gap_lower(k);
    let sk = kk.sqrt();
    let bounds_ok = 1.0 + 0.1 / sk - quad_error <= gap && gap <= 1.0 + 2.0 / sk + quad_error;
    Ok(GapReport {
        k,
        gap,
        c_k: (gap - 1.0) * sk,
        quad_error,
        lb,
        bounds_ok,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// `1 + 0.1/√k <= Re(k) <= 1 + 2/√k` up to the quadrature error.
pub fn check_sqrt_bounds(k: usize, quad_tol: f64) -> Result<bool> {
    Ok(ar_ap_gap(k, quad_tol)?.bounds_ok)
}

/// Closed-form lower bound `lb(k) = 1 + (1/k)∫_0^∞ T_k (1 - T_{k+1}) dx`.
///
/// Evaluated as `1 + (1/k)(Σ_{m=k}^{2k} Pr[Bin(m, 1/2) <= m-k] - 1)`.
pub fn ar_ap_gap_lower(k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let mut sum = CompensatedSum::default();
    for m in k..=2 * k {
        let top = m - k;
        if k <= LB_LOG_SPACE_ABOVE {
            // pmf recurrence from Pr[Bin(m, 1/2) = 0] = 2^{-m}
            let mut term = 0.5_f64.powi(m as i32);
            let mut cdf = CompensatedSum::default();
            cdf.add(term);
            for i in 1..=top {
                term *= (m - i + 1) as f64 / i as f64;
                cdf.add(term);
            }
            sum.add(cdf.value());
        } else {
            let ln2m = m as f64 * std::f64::consts::LN_2;
            for i in 0..=top {
                sum.add((ln_choose(m as u64, i as u64) - ln2m).exp());
            }
        }
    }
    sum.add(-1.0);
    1.0 + sum.value() / k as f64
}

/// `Li_2(z) = Σ_{t>=1} z^t / t^2` for `z ∈ [0, 1]`.
///
/// The series is summed directly for `z <= 1/2`, until terms drop below 1e-15;
/// larger arguments use the reflection `Li_2(z) = π²/6 - ln z·ln(1-z) - Li_2(1-z)`.
fn dilog(z: f64) -> f64 {
    if z >= 1.0 {
        return PI * PI / 6.0;
    }
    if z > 0.5 {
        return PI * PI / 6.0 - z.ln() * (-z).ln_1p() - dilog(1.0 - z);
    }
    let mut sum = 0.0;
    let mut pow = z;
    let mut t = 1.0;
    while pow / (t * t) >= 1e-17 {
        sum += pow / (t * t);
        pow *= z;
        t += 1.0;
    }
    sum
}

/// `V(p) = p·ln(p²/(p²-1))`.
pub fn v_func(p: f64) -> f64 {
    let z = 1.0 / (p * p);
    -p * (-z).ln_1p()
}

/// `Q(p) = ln(p²/(p²-1)) - ½ Σ_{t>=1} t^{-2} p^{-2t}`.
pub fn q_func(p: f64) -> f64 {
    let z = 1.0 / (p * p);
    -(-z).ln_1p() - 0.5 * dilog(z)
}

/// `1 + V(Q^{-1}(k))`, the EAR/AP upper bound for `k ∈ {1, 2, 3}`.
pub fn ear_ap_upper_small_k(k: usize) -> Result<f64> {
    if !(1..=3).contains(&k) {
        return Err(Error::KOutOfRange { k, range: "{1, 2, 3}" });
    }
    let target = k as f64;
    let lo = 1.0 + 1e-9;
    let mut hi = 2.0;
    while q_func(hi) >= target {
        hi *= 2.0;
    }
    let p = bisect(|p| q_func(p) - target, lo, hi, 1e-15, 200)?;
    Ok(1.0 + v_func(p))
}

/// Poisson parameter `z = -ln D̂_1` solving `Σ_{i<=k} P(i, z) = 1/x`.
fn limit_z(k: usize, x: f64) -> Result<f64> {
    let target = 1.0 / x;
    let f = |z: f64| (1..=k as u32).map(|i| reg_gamma_pair(i as f64, z).0).sum::<f64>() - target;
    let mut hi = 1.0_f64;
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::BracketFailure { lo: 0.0, hi });
        }
    }
    // bisect on ln z so tiny z (large x) keeps relative precision
    let u = bisect(|u: f64| f(u.exp()), -745.0, hi.ln(), 1e-14, 400)?;
    Ok(u.exp())
}

/// Limits `D̂_1, ..., D̂_{k+1}` of the worst-case order-statistic CDFs as `n → ∞`.
///
/// `D̂_1` solves `x·(k - Σ_{i<=k} D̂_i) = 1`; with `z = -ln D̂_1` every
/// `D̂_i = T_i(z)`.
pub fn limit_order_stats(k: usize, x: f64) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let threshold = 1.0 / k as f64;
    if !(x > threshold) {
        return Err(Error::BelowThreshold { x, threshold });
    }
    let z = limit_z(k, x)?;
    Ok((1..=k as u32 + 1).map(|i| t_func(i, z)).collect())
}

/// `D̂_i` through the recursion `D̂_i = Σ_{t<i} D̂_1 (-ln D̂_1)^t / t!`.
pub fn limit_order_stats_recursive(d1: f64, count: usize) -> Vec<f64> {
    let z = -d1.ln();
    let mut term = d1;
    let mut acc = 0.0;
    (0..count)
        .map(|t| {
            if t > 0 {
                term *= z / t as f64;
            }
            acc += term;
            acc
        })
        .collect()
}

/// Alternate gap evaluation `1 + k ∫_{1/k}^∞ (1 - D̂_{k+1}(x)) dx`, mapped to
/// `u ∈ [0, 1)` by `x = 1/k + u/(1-u)`. Returns `(value, error estimate)`.
pub fn ar_ap_gap_limit(k: usize, quad_tol: f64) -> Result<(f64, f64)> {
    let kk = k as f64;
    let integrand = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let x = 1.0 / kk + u / (1.0 - u);
        match limit_z(k, x) {
            Ok(z) => reg_gamma_pair(kk + 1.0, z).0 / ((1.0 - u) * (1.0 - u)),
            Err(_) => f64::NAN,
        }
    };
    let r = integrate(integrand, 0.0, 1.0, quad_tol / kk)?;
    if !r.value.is_finite() {
        return Err(Error::ToleranceNotAchieved {
            requested: quad_tol,
            achieved: f64::INFINITY,
        });
    }
    Ok((1.0 + kk * r.value, kk * r.abs_error))
}
