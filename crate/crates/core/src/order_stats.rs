//! Poisson-binomial count distributions and order-statistic CDFs.
//!
//! For a price `x`, buyer `j` "succeeds" with probability `s_j = 1 - F_j(x)`.
//! The number of successes `N` determines every order statistic:
//! `D_i(x) = Pr[N < i]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::revenue::Instance;
use crate::special::ln_choose;

/// Slack allowed in the log-concavity inequality.
pub const LOG_CONCAVITY_TOL: f64 = 1e-12;

/// Per-buyer exceedance probabilities `s_j = Pr[b_j >= x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessVector(Vec<f64>);

impl SuccessVector {
    pub fn new(s: Vec<f64>) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::InvalidParameter("success vector must be nonempty".into()));
        }
        if let Some(bad) = s.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidParameter(format!(
                "success probability {bad} outside [0, 1]"
            )));
        }
        Ok(Self(s))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Probability mass function over `{0, ..., n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    pub p: Vec<f64>,
}

impl Pmf {
    /// Largest count in the support.
    pub fn n(&self) -> usize {
        self.p.len() - 1
    }

    /// `Pr[N = t]`, zero outside the support.
    pub fn at(&self, t: usize) -> f64 {
        self.p.get(t).copied().unwrap_or(0.0)
    }

    /// `Pr[N <= t]`.
    pub fn cdf(&self, t: usize) -> f64 {
        let end = (t + 1).min(self.p.len());
        self.p[..end].iter().sum::<f64>().min(1.0)
    }

    /// Point mass at zero (the sum of no variables).
    pub fn zero() -> Self {
        Self { p: vec![1.0] }
    }
}

/// Exact PMF of the number of successes, folding buyers in input order.
pub fn pbd_pmf(s: &SuccessVector) -> Pmf {
    pmf_of(s.as_slice())
}

pub(crate) fn pmf_of(s: &[f64]) -> Pmf {
    let mut p = Vec::with_capacity(s.len() + 1);
    p.push(1.0);
    for &sj in s {
        p.push(0.0);
        for t in (1..p.len()).rev() {
            p[t] = p[t] * (1.0 - sj) + p[t - 1] * sj;
        }
        p[0] *= 1.0 - sj;
    }
    Pmf { p }
}

/// Fold `m` i.i.d. Bernoulli(`s`) variables into a truncated count vector.
///
/// `acc` has `cap + 1` entries; entries `0..cap` are exact and entry `cap`
/// collects `Pr[N >= cap]`.
pub(crate) fn fold_group(acc: &mut [f64], s: f64, m: usize) {
    let cap = acc.len() - 1;
    if m == 0 || s == 0.0 {
        return;
    }
    if s >= 1.0 {
        // every buyer succeeds: shift by m
        let mut out = vec![0.0; cap + 1];
        for (t, &a) in acc.iter().enumerate() {
            out[(t + m).min(cap)] += a;
        }
        acc.copy_from_slice(&out);
        return;
    }
    if m <= 16 || cap == 0 {
        for _ in 0..m {
            fold_one(acc, s);
        }
        return;
    }
    let binom = binomial_truncated(m, s, cap);
    let mut out = vec![0.0; cap + 1];
    for (t, &a) in acc.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        if t == cap {
            out[cap] += a;
            continue;
        }
        for (u, &b) in binom.iter().enumerate() {
            out[(t + u).min(cap)] += a * b;
        }
    }
    acc.copy_from_slice(&out);
}

fn fold_one(acc: &mut [f64], s: f64) {
    let cap = acc.len() - 1;
    if cap == 0 {
        return;
    }
    let top = acc[cap] + acc[cap - 1] * s;
    for t in (1..cap).rev() {
        acc[t] = acc[t] * (1.0 - s) + acc[t - 1] * s;
    }
    acc[0] *= 1.0 - s;
    acc[cap] = top;
}

/// Binomial(m, s) masses at `0..cap` plus the remaining tail mass in slot `cap`.
fn binomial_truncated(m: usize, s: f64, cap: usize) -> Vec<f64> {
    let ls = s.ln();
    let lf = (-s).ln_1p();
    let mut out = vec![0.0; cap + 1];
    let mut head = 0.0;
    for (t, slot) in out.iter_mut().enumerate().take(cap.min(m + 1)) {
        let v = (ln_choose(m as u64, t as u64) + t as f64 * ls + (m - t) as f64 * lf).exp();
        *slot = v;
        head += v;
    }
    if cap <= m {
        out[cap] = if head < 0.5 {
            1.0 - head
        } else {
            // sum the tail directly so small upper tails keep relative accuracy
            let mode = ((m + 1) as f64 * s).floor() as usize;
            let mut tail = 0.0;
            for t in cap..=m {
                let v = (ln_choose(m as u64, t as u64) + t as f64 * ls + (m - t) as f64 * lf).exp();
                tail += v;
                if t > mode && v < 1e-18 * tail {
                    break;
                }
            }
            tail.min(1.0 - head)
        };
    }
    out
}

/// Truncated count distribution for a grouped product: `groups` are
/// `(success probability, multiplicity)` pairs.
pub fn truncated_counts(groups: &[(f64, usize)], cap: usize) -> Vec<f64> {
    let mut acc = vec![0.0; cap + 1];
    acc[0] = 1.0;
    for &(s, m) in groups {
        fold_group(&mut acc, s, m);
    }
    acc
}

/// `D_i(x) = Pr[fewer than i buyers bid >= x]` for `1 <= i <= n + 1`.
pub fn order_stat_cdf(inst: &Instance, x: f64, i: usize) -> Result<f64> {
    let n = inst.n();
    if i == 0 || i > n + 1 {
        return Err(Error::IndexOutOfRange { i, max: n + 1 });
    }
    let counts = inst.truncated_counts(x, i);
    Ok(counts[..i].iter().sum::<f64>().min(1.0))
}

/// Log-concavity test: `p_t^2 >= p_{t-1} p_{t+1} - tol` for every interior `t`.
pub fn check_log_concavity(p: &Pmf) -> bool {
    p.p.windows(3).all(|w| w[1] * w[1] >= w[0] * w[2] - LOG_CONCAVITY_TOL)
}
