//! Extremal instances: the worst-case i.i.d. CDF, the asymmetric triangle
//! lower-bound family and the pair-matroid separation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::Cdf;
use crate::error::{Error, Result};
use crate::order_stats::{fold_group, truncated_counts};
use crate::revenue::{ap_revenue, expected_sales, Instance};
use crate::roots::bisect;

/// Default number of grid points for the worst-case CDF.
pub const DEFAULT_GRID_POINTS: usize = 2048;
/// Default bound on `1 - F*(X_max)` and on the AR tail beyond `X_max`.
pub const DEFAULT_TAIL_MASS: f64 = 1e-6;
const ROOT_XTOL: f64 = 1e-16;

/// Grid layout for [`build_worst_case_iid`]: `x = 1/k + δ` with `δ` geometric
/// from `delta_min` to `X_max - 1/k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    /// Smallest offset above `1/k`; defaults to `1e-6/k`.
    pub delta_min: Option<f64>,
    /// Right end; found by doubling when absent.
    pub x_max: Option<f64>,
    pub tail_mass: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: DEFAULT_GRID_POINTS,
            delta_min: None,
            x_max: None,
            tail_mass: DEFAULT_TAIL_MASS,
        }
    }
}

/// Tabulated worst-case i.i.d. CDF `F*_(n)`: `AP(x, {F*}^n) = 1` for all `x > 1/k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseIid {
    pub k: usize,
    pub n: usize,
    pub grid: Vec<f64>,
    /// `F*(x)` at each grid point.
    pub fvals: Vec<f64>,
    /// `1 - F*(x)`, kept separately for accuracy in the upper tail.
    pub survival: Vec<f64>,
}

/// Survival `s = 1 - F*(x)` solving `x·E[min(k, Bin(n, s))] = 1`.
fn worst_case_survival(k: usize, n: usize, x: f64) -> Result<f64> {
    bisect(
        |s| x * expected_sales(&truncated_counts(&[(s, n)], k), k) - 1.0,
        0.0,
        1.0,
        ROOT_XTOL,
        200,
    )
}

/// Bound on `k ∫_X^∞ (1 - D_{k+1})` for `X >= 2`: there `n s <= 2/x`, so
/// `Pr[N >= k+1] <= (2/x)^{k+1}/(k+1)!`.
fn worst_case_tail_bound(k: usize, x: f64) -> f64 {
    if x < 2.0 {
        return f64::INFINITY;
    }
    let kk = k as f64;
    let ln = (kk + 1.0) * 2f64.ln() - kk * x.ln() - crate::special::ln_factorial(k as u64 + 1);
    ln.exp()
}

fn validate_kn(k: usize, n: usize) -> Result<()> {
    if k == 0 || n < k {
        return Err(Error::InvalidParameter(format!(
            "need n >= k >= 1, got k = {k}, n = {n}"
        )));
    }
    Ok(())
}

/// Solve `F*` on the geometric grid of `spec`.
pub fn build_worst_case_iid(k: usize, n: usize, spec: GridSpec) -> Result<WorstCaseIid> {
    validate_kn(k, n)?;
    if spec.points < 2 {
        return Err(Error::InvalidParameter("grid needs at least two points".into()));
    }
    let base = 1.0 / k as f64;
    let x_max = match spec.x_max {
        Some(x) => x,
        None => {
            let mut x = 2.0 * base + 2.0;
            while worst_case_survival(k, n, x)? >= spec.tail_mass || worst_case_tail_bound(k, x) >= spec.tail_mass {
                x *= 2.0;
            }
            x
        }
    };
    let dmin = spec.delta_min.unwrap_or(1e-6 * base);
    let span = x_max - base;
    if !(dmin > 0.0 && span > dmin) {
        return Err(Error::InvalidParameter(format!("grid range ({dmin}, {span}] is empty")));
    }
    let ratio = (span / dmin).ln() / (spec.points - 1) as f64;
    let grid: Vec<f64> = (0..spec.points)
        .map(|i| base + dmin * (ratio * i as f64).exp())
        .collect();
    build_worst_case_iid_on(k, n, &grid)
}

/// Solve `F*` at caller-supplied points, all strictly above `1/k`.
pub fn build_worst_case_iid_on(k: usize, n: usize, grid: &[f64]) -> Result<WorstCaseIid> {
    validate_kn(k, n)?;
    let threshold = 1.0 / k as f64;
    if let Some(&x) = grid.iter().find(|&&x| !(x > threshold)) {
        return Err(Error::BelowThreshold { x, threshold });
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
    }
    let survival: Vec<f64> = grid
        .par_iter()
        .map(|&x| worst_case_survival(k, n, x))
        .collect::<Result<_>>()?;
    let fvals = survival.iter().map(|s| 1.0 - s).collect();
    Ok(WorstCaseIid {
        k,
        n,
        grid: grid.to_vec(),
        fvals,
        survival,
    })
}

impl WorstCaseIid {
    /// Tabulated CDF with an extra zero knot at `1/k`, so `F = 0` on `[0, 1/k]`.
    pub fn cdf(&self) -> Result<Cdf> {
        let mut xs = Vec::with_capacity(self.grid.len() + 1);
        let mut ps = Vec::with_capacity(self.grid.len() + 1);
        xs.push(1.0 / self.k as f64);
        ps.push(0.0);
        xs.extend_from_slice(&self.grid);
        // running max guards against last-ulp noise in the bisection
        let mut run = 0.0_f64;
        ps.extend(self.fvals.iter().map(|&f| {
            run = run.max(f);
            run
        }));
        Cdf::tabulated(xs, ps)
    }

    pub fn instance(&self) -> Result<Instance> {
        Instance::iid(self.cdf()?, self.n, self.k)
    }

    /// `1 - D_{k+1}(x) = Pr[Bin(n, s(x)) >= k+1]` at each grid point.
    fn tail_values(&self) -> Vec<f64> {
        let k = self.k;
        self.survival
            .iter()
            .map(|&s| truncated_counts(&[(s, self.n)], k + 1)[k + 1])
            .collect()
    }
}

/// Trapezoid value and Richardson error estimate over `xs`.
fn trapezoid_with_error(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let fine: f64 = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum();
    let xs2: Vec<f64> = xs.iter().step_by(2).copied().collect();
    let ys2: Vec<f64> = ys.iter().step_by(2).copied().collect();
    let mut coarse: f64 = xs2
        .windows(2)
        .zip(ys2.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum();
    if xs.len().is_multiple_of(2) {
        // odd number of panels: reuse the last fine panel
        let m = xs.len();
        coarse += 0.5 * (xs[m - 1] - xs[m - 2]) * (ys[m - 1] + ys[m - 2]);
    }
    (fine, (fine - coarse).abs() / 3.0)
}

/// `AR(F*_(n)) = 1 + k ∫_{1/k}^∞ (1 - D_{k+1}(x)) dx` on the tabulated grid.
///
/// Returns `(value, error)` where the error combines a Richardson estimate of
/// the trapezoid error with a rigorous bound on the tail beyond the grid.
pub fn ar_of_worst_case_with_error(w: &WorstCaseIid, quad_tol: f64) -> Result<(f64, f64)> {
    let k = w.k;
    let base = 1.0 / k as f64;
    let mut xs = Vec::with_capacity(w.grid.len() + 1);
    let mut ys = Vec::with_capacity(w.grid.len() + 1);
    // at x -> 1/k every buyer bids above x
    xs.push(base);
    ys.push(if w.n > k { 1.0 } else { 0.0 });
    xs.extend_from_slice(&w.grid);
    ys.extend(w.tail_values());
    let (integral, trap_err) = trapezoid_with_error(&xs, &ys);
    let x_end = *xs.last().expect("grid is nonempty");
    let tail = if w.n > k { worst_case_tail_bound(k, x_end) } else { 0.0 };
    let err = k as f64 * trap_err + tail;
    if !(err <= quad_tol) {
        return Err(Error::ToleranceNotAchieved {
            requested: quad_tol,
            achieved: err,
        });
    }
    Ok((1.0 + k as f64 * integral, err))
}

pub fn ar_of_worst_case(w: &WorstCaseIid, quad_tol: f64) -> Result<f64> {
    ar_of_worst_case_with_error(w, quad_tol).map(|x| x.0)
}

/// One price level of the triangle lower-bound instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleGroup {
    pub v: f64,
    pub q: f64,
    pub multiplicity: usize,
}

/// Asymmetric triangle instance with `AP(v_j) = 1` at every group price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleLowerBound {
    pub k: usize,
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub groups: Vec<TriangleGroup>,
}

fn triangle_survival(v: f64, q: f64, p: f64) -> f64 {
    if p > v {
        0.0
    } else {
        let vq = v * q;
        if vq == 0.0 {
            0.0
        } else {
            vq / ((1.0 - q) * p + vq)
        }
    }
}

/// Build groups `(b, q_0)×n` and `(b - jδ, q_j)×k` for `j = 1..=n`, `δ = (b-a)/n`,
/// solving each `q_j` by bisection so that `AP(v_j) = 1` given the earlier groups.
pub fn build_triangle_lower_bound(k: usize, n: usize, a: f64, b: f64) -> Result<TriangleLowerBound> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!("need k, n >= 1, got k = {k}, n = {n}")));
    }
    let threshold = 1.0 / k as f64;
    if !(a > threshold) {
        return Err(Error::BracketFailure { lo: a, hi: b });
    }
    if !(b >= a && b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need a <= b < inf, got a = {a}, b = {b}"
        )));
    }
    let delta = (b - a) / n as f64;
    let mut groups: Vec<TriangleGroup> = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let (v, mult) = if j == 0 { (b, n) } else { (b - j as f64 * delta, k) };
        // sale-count distribution of the earlier groups at price v
        let mut prior = vec![0.0; k + 1];
        prior[0] = 1.0;
        for g in &groups {
            fold_group(&mut prior, triangle_survival(g.v, g.q, v), g.multiplicity);
        }
        let ap = |q: f64| {
            let mut c = prior.clone();
            fold_group(&mut c, q, mult);
            v * expected_sales(&c, k) - 1.0
        };
        let q = if ap(0.0) >= 0.0 {
            0.0
        } else {
            match bisect(ap, 0.0, 1.0, ROOT_XTOL, 200) {
                Ok(q) => q,
                Err(_) => return Err(Error::BracketFailure { lo: a, hi: b }),
            }
        };
        groups.push(TriangleGroup {
            v,
            q,
            multiplicity: mult,
        });
    }
    Ok(TriangleLowerBound {
        k,
        n,
        a,
        b,
        delta,
        groups,
    })
}

impl TriangleLowerBound {
    pub fn instance(&self) -> Result<Instance> {
        let groups = self
            .groups
            .iter()
            .map(|g| Ok((Cdf::triangle(g.v, g.q)?, g.multiplicity)))
            .collect::<Result<Vec<_>>>()?;
        Instance::from_groups(groups, self.k)
    }

    /// `max_p AP(p) - 1` and the dip `1 - min AP(p)` over `p ∈ [a, b]`, on a uniform grid of `points` prices in `(0, b]`.
    pub fn ap_profile(&self, points: usize) -> Result<(f64, f64)> {
        let inst = self.instance()?;
        let grid: Vec<f64> = (1..=points).map(|i| self.b * i as f64 / points as f64).collect();
        let vals: Vec<(f64, f64)> = grid.par_iter().map(|&p| (p, ap_revenue(&inst, p))).collect();
        let excess = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max) - 1.0;
        let dip = vals
            .iter()
            .filter(|v| v.0 >= self.a)
            .map(|v| 1.0 - v.1)
            .fold(0.0_f64, f64::max);
        Ok((excess, dip))
    }
}

/// Revenues of the pair-matroid instance separating AR from AP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatroidDemo {
    pub m: usize,
    pub k: usize,
    pub ap_best: f64,
    pub best_price: f64,
    pub vcg_rev: f64,
    pub ratio: f64,
}

/// `m` pairs of buyers; both buyers of pair `i` bid `max(1/i, 1/(k+1))`.
///
/// A set of winners is feasible when it has at most one buyer per pair and
/// at most `k` buyers overall.
pub fn matroid_demo(m: usize, k: usize) -> Result<MatroidDemo> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > m {
        return Err(Error::RankExceedsPairs { k, m });
    }
    // bid of pair i is 1/d_i with d_i = min(i, k+1); bids are nonincreasing in i
    let denom: Vec<usize> = (1..=m).map(|i| i.min(k + 1)).collect();
    let mut ap_best = 0.0;
    let mut best_price = 0.0;
    let mut distinct = denom.clone();
    distinct.dedup();
    for &d in &distinct {
        let willing = denom.iter().filter(|&&di| di <= d).count();
        let rev = willing.min(k) as f64 / d as f64;
        if rev > ap_best {
            ap_best = rev;
            best_price = 1.0 / d as f64;
        }
    }
    // winners: one buyer from each of the k highest pairs; each pays the larger
    // of its mate's bid and the best bid among unchosen pairs
    let outside = denom.get(k).map_or(0.0, |&d| 1.0 / d as f64);
    let vcg_rev: f64 = denom[..k].iter().map(|&d| (1.0 / d as f64).max(outside)).sum();
    Ok(MatroidDemo {
        m,
        k,
        ap_best,
        best_price,
        vcg_rev,
        ratio: vcg_rev / ap_best,
    })
}

/// `H_k = Σ_{i<=k} 1/i`, summed in increasing `i`.
pub fn harmonic(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}
