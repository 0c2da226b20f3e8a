//! I.i.d. projections of Bernoulli sums.
//!
//! `Y = Σ Y_j` with `Pr[Y_j = 0] = q_j`. The projection finds the common failure
//! probability `q*` such that `X ~ Bin(n, 1 - q*)` satisfies `Pr[X <= s] = Pr[Y <= s]`.
//! The CDFs of `X` and `Y` then cross exactly once, at `s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::order_stats::{pmf_of, Pmf};
use crate::roots::bisect;

/// Cap on pair-averaging steps in [`iid_projection_iterative`].
pub const DEFAULT_MAX_APPLICATIONS: usize = 1_000_000;
/// Slack used by [`verify_single_crossing`].
pub const CROSSING_TOL: f64 = 1e-9;
const BRACKET_SLACK: f64 = 1e-12;

/// Which root of the averaging quadratic to return.
///
/// `Flipped` deliberately takes the wrong branch; it exists so verification
/// runs can confirm that the crossing checks catch a broken solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootSign {
    #[default]
    Inside,
    Flipped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    pub max_applications: usize,
    pub root_sign: RootSign,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            max_applications: DEFAULT_MAX_APPLICATIONS,
            root_sign: RootSign::Inside,
        }
    }
}

/// Failure probabilities `q_j = Pr[Y_j = 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureVector(Vec<f64>);

impl FailureVector {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidParameter("failure vector must be nonempty".into()));
        }
        if let Some(bad) = q.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidParameter(format!(
                "failure probability {bad} outside [0, 1]"
            )));
        }
        Ok(Self(q))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// PMF of the success count for failure probabilities `q`.
pub fn sum_pmf(q: &[f64]) -> Pmf {
    let s: Vec<f64> = q.iter().map(|x| 1.0 - x).collect();
    pmf_of(&s)
}

/// Replace the pair `(q1, q2)` by a common `q̄` that keeps `Pr[Y <= s]` fixed,
/// where `a` is the PMF of the other variables.
pub fn average_pair(a: &Pmf, q1: f64, q2: f64, s: usize) -> Result<f64> {
    average_pair_with(a, q1, q2, s, RootSign::Inside)
}

pub fn average_pair_with(a: &Pmf, q1: f64, q2: f64, s: usize, sign: RootSign) -> Result<f64> {
    let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
    let c = if s == 0 { 0.0 } else { a.at(s - 1) };
    let d = a.at(s) - c;
    if d == 0.0 || q1 == q2 {
        return Ok(0.5 * (q1 + q2));
    }
    // d x^2 + 2c x = R
    let r = d * q1 * q2 + c * (q1 + q2);
    let root = (c * c + d * r).max(0.0).sqrt();
    let denom = c + root;
    let plus = if denom == 0.0 { 0.0 } else { r / denom };
    let minus = (-c - root) / d;
    if sign == RootSign::Flipped {
        return Ok(minus);
    }
    for x in [plus, minus] {
        if x >= lo - BRACKET_SLACK && x <= hi + BRACKET_SLACK {
            return Ok(x.clamp(lo, hi));
        }
    }
    Err(Error::NoRootInBracket {
        lo,
        hi,
        s,
        roots: (plus, minus),
    })
}

fn spread(q: &[f64]) -> f64 {
    let (mn, mx) = q
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    mx - mn
}

/// Iterative projection: sort ascending, average the smallest entry with each
/// other entry in turn, and repeat until the spread is below `tol`.
pub fn iid_projection_iterative(q: &FailureVector, s: usize, tol: f64) -> Result<f64> {
    iid_projection_iterative_with(q, s, tol, ProjectionOptions::default())
}

pub fn iid_projection_iterative_with(q: &FailureVector, s: usize, tol: f64, opts: ProjectionOptions) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut q = q.as_slice().to_vec();
    let n = q.len();
    let mut applications = 0usize;
    let mut others = Vec::with_capacity(n);
    loop {
        let ell = spread(&q);
        if ell < tol {
            break;
        }
        if !ell.is_finite() {
            return Err(Error::MaxIterationsExceeded {
                iterations: applications,
                spread: ell,
            });
        }
        q.sort_by(f64::total_cmp);
        for j in 1..n {
            if applications >= opts.max_applications {
                return Err(Error::MaxIterationsExceeded {
                    iterations: applications,
                    spread: spread(&q),
                });
            }
            others.clear();
            others.extend((1..n).filter(|&i| i != j).map(|i| 1.0 - q[i]));
            let a = pmf_of(&others);
            let qbar = average_pair_with(&a, q[0], q[j], s, opts.root_sign)?;
            q[0] = qbar;
            q[j] = qbar;
            applications += 1;
        }
    }
    let (mn, mx) = (
        q.iter().copied().fold(f64::INFINITY, f64::min),
        q.iter().copied().fold(0.0, f64::max),
    );
    Ok((q.iter().sum::<f64>() / n as f64).clamp(mn, mx))
}

/// Direct projection by bisection on `q*`.
///
/// Compares lower tails when `Pr[Y <= s] <= 1/2` and upper tails otherwise so
/// the bisection sees relative rather than absolute differences.
pub fn iid_projection_direct(q: &FailureVector, s: usize) -> Result<f64> {
    let q = q.as_slice();
    let n = q.len();
    if s >= n {
        // Pr[Y <= s] = 1 for every q*; return the mean as the canonical choice
        return Ok(q.iter().sum::<f64>() / n as f64);
    }
    let target = sum_pmf(q);
    let lower: f64 = target.p[..=s].iter().sum();
    let use_lower = lower <= 0.5;
    let tail = |p: &Pmf| -> f64 {
        if use_lower {
            p.p[..=s].iter().sum()
        } else {
            -p.p[s + 1..].iter().sum::<f64>()
        }
    };
    let goal = tail(&target);
    bisect(|x| tail(&pmf_of(&vec![1.0 - x; n])) - goal, 0.0, 1.0, 1e-15, 200)
}

/// Outcome of a single-crossing check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub ok: bool,
    /// First `t` at which `Pr[X <= t]` is no longer above `Pr[Y <= t]`.
    pub crossing: usize,
    /// First lattice point violating the expected ordering, if any.
    pub violation: Option<usize>,
    /// Largest violation magnitude (0 when `ok`).
    pub worst: f64,
}

/// Check `Pr[X <= t] >= Pr[Y <= t]` for `t < s` and `<=` for `t >= s`,
/// where `X ~ Bin(n, 1 - q_star)`.
pub fn verify_single_crossing(q_y: &FailureVector, q_star: f64, s: usize) -> CrossingReport {
    let n = q_y.len();
    let py = sum_pmf(q_y.as_slice());
    let px = pmf_of(&vec![1.0 - q_star; n]);
    let mut cy = 0.0;
    let mut cx = 0.0;
    let mut crossing = None;
    let mut violation = None;
    let mut worst: f64 = 0.0;
    for t in 0..=n {
        cy += py.p[t];
        cx += px.p[t];
        let diff = cx - cy;
        if crossing.is_none() && diff <= CROSSING_TOL {
            crossing = Some(t);
        }
        let bad = if t < s { -diff } else { diff };
        if bad > CROSSING_TOL {
            worst = worst.max(bad);
            violation.get_or_insert(t);
        }
    }
    CrossingReport {
        ok: violation.is_none(),
        crossing: crossing.unwrap_or(n),
        violation,
        worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(q: &[f64]) -> FailureVector {
        FailureVector::new(q.to_vec()).unwrap()
    }

    #[test]
    fn two_variable_example() {
        let q = average_pair(&Pmf::zero(), 0.2, 0.8, 1).unwrap();
        assert!((q - 0.6).abs() < 1e-15);
        // Pr[X <= 1] = 1 - (1 - q)^2
        assert!((1.0 - (1.0 - q) * (1.0 - q) - 0.84).abs() < 1e-15);
    }

    #[test]
    fn identical_pair_is_fixed() {
        let a = sum_pmf(&[0.3, 0.7, 0.1]);
        for s in 0..5 {
            assert_eq!(average_pair(&a, 0.4, 0.4, s).unwrap(), 0.4);
        }
    }

    #[test]
    fn flat_pmf_takes_midpoint() {
        let a = Pmf { p: vec![0.5, 0.5] };
        assert!((average_pair(&a, 0.1, 0.5, 1).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn projections_on_examples() {
        assert!((iid_projection_iterative(&fv(&[0.2, 0.8]), 1, 1e-12).unwrap() - 0.6).abs() < 1e-12);
        assert!((iid_projection_direct(&fv(&[0.2, 0.8]), 1).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(iid_projection_iterative(&fv(&[0.35; 6]), 2, 1e-12).unwrap(), 0.35);
        assert!(iid_projection_direct(&fv(&[0.0, 1.0]), 0).unwrap().abs() < 1e-12);
        assert!((iid_projection_direct(&fv(&[0.3; 5]), 2).unwrap() - 0.3).abs() < 1e-12);
        let it = iid_projection_iterative(&fv(&[0.1, 0.5, 0.9]), 1, 1e-12).unwrap();
        let di = iid_projection_direct(&fv(&[0.1, 0.5, 0.9]), 1).unwrap();
        assert!((it - di).abs() < 1e-10);
    }

    #[test]
    fn crossing_examples() {
        let r = verify_single_crossing(&fv(&[0.2, 0.8]), 0.6, 1);
        assert!(r.ok);
        let r = verify_single_crossing(&fv(&[0.4; 7]), 0.4, 3);
        assert!(r.ok && r.worst == 0.0);
    }

    #[test]
    fn ten_variable_crossing_at_five() {
        let q = fv(&[0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95]);
        let star = iid_projection_direct(&q, 5).unwrap();
        let r = verify_single_crossing(&q, star, 5);
        assert!(r.ok, "{r:?}");
        assert_eq!(r.crossing, 5);
    }

    #[test]
    fn flipped_root_breaks_projection() {
        let q = fv(&[0.1, 0.4, 0.7, 0.9]);
        let opts = ProjectionOptions {
            max_applications: 10_000,
            root_sign: RootSign::Flipped,
        };
        match iid_projection_iterative_with(&q, 2, 1e-10, opts) {
            Err(_) => {}
            Ok(star) => assert!(!verify_single_crossing(&q, star, 2).ok),
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let q = fv(&[0.1, 0.9, 0.3]);
        let opts = ProjectionOptions {
            max_applications: 2,
            ..Default::default()
        };
        assert!(matches!(
            iid_projection_iterative_with(&q, 1, 1e-14, opts),
            Err(Error::MaxIterationsExceeded { .. })
        ));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<f64>, usize)> {
        (2usize..=12).prop_flat_map(|n| (proptest::collection::vec(0.0..=1.0f64, n), 0..n))
    }

    proptest! {
        #[test]
        fn averaging_conserves_and_brackets(
            rest in proptest::collection::vec(0.0..=1.0f64, 0..10),
            q1 in 0.0..=1.0f64,
            q2 in 0.0..=1.0f64,
            s_raw in 0usize..12,
        ) {
            let n = rest.len() + 2;
            let s = s_raw % (n + 1);
            let a = sum_pmf(&rest);
            let qbar = average_pair(&a, q1, q2, s).unwrap();
            prop_assert!(qbar >= q1.min(q2) && qbar <= q1.max(q2));
            let mut before = rest.clone();
            before.extend([q1, q2]);
            let mut after = rest.clone();
            after.extend([qbar, qbar]);
            let diff = sum_pmf(&before).cdf(s) - sum_pmf(&after).cdf(s);
            prop_assert!(diff.abs() <= 10.0 * f64::EPSILON * n as f64 + 1e-15, "diff {diff}");
        }

        #[test]
        fn projections_agree_and_cross_once((q, s) in arb_case()) {
            let f = fv(&q);
            let it = iid_projection_iterative(&f, s, 1e-11).unwrap();
            let di = iid_projection_direct(&f, s).unwrap();
            prop_assert!((it - di).abs() < 1e-8, "iterative {it} direct {di}");
            prop_assert!(verify_single_crossing(&f, di, s).ok);
        }
    }
}
