//! Anonymous Pricing, Anonymous Reserve and Ex-Ante Relaxation revenues.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{Cdf, TriangleParams};
use crate::error::{Error, Result};
use crate::order_stats::truncated_counts;
use crate::quadrature::integrate_panels;

/// Slack on the unit-revenue constraint `AP(p) <= 1`.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Slack on `Σ q'_j <= k`.
pub const CAPACITY_TOL: f64 = 1e-9;
/// Quantile resolution of the general-case EAR optimiser.
pub const EAR_QUANTILE_POINTS: usize = 10_000;
const RELAXED_GRID_POINTS: usize = 2_000;

/// Independent buyers plus a unit count `k`.
///
/// Buyers are stored as runs of identical distributions so that large i.i.d.
/// blocks cost one binomial fold rather than one fold per buyer.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    groups: Vec<(Cdf, usize)>,
    k: usize,
    n: usize,
}

impl Instance {
    pub fn new(cdfs: Vec<Cdf>, k: usize) -> Result<Self> {
        let mut groups: Vec<(Cdf, usize)> = Vec::new();
        for c in cdfs {
            match groups.last_mut() {
                Some((last, m)) if *last == c => *m += 1,
                _ => groups.push((c, 1)),
            }
        }
        Self::from_groups(groups, k)
    }

    pub fn from_groups(groups: Vec<(Cdf, usize)>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let groups: Vec<(Cdf, usize)> = groups.into_iter().filter(|g| g.1 > 0).collect();
        let n = groups.iter().map(|g| g.1).sum();
        if n == 0 {
            return Err(Error::InvalidParameter("an instance needs at least one buyer".into()));
        }
        Ok(Self { groups, k, n })
    }

    pub fn iid(cdf: Cdf, n: usize, k: usize) -> Result<Self> {
        Self::from_groups(vec![(cdf, n)], k)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn groups(&self) -> &[(Cdf, usize)] {
        &self.groups
    }

    /// Buyers in order, with groups expanded.
    pub fn buyers(&self) -> impl Iterator<Item = &Cdf> + '_ {
        self.groups.iter().flat_map(|(c, m)| std::iter::repeat_n(c, *m))
    }

    /// Distribution of `N = #{j : b_j >= x}`, truncated at `cap` (last slot is `Pr[N >= cap]`).
    pub fn truncated_counts(&self, x: f64, cap: usize) -> Vec<f64> {
        let s: Vec<(f64, usize)> = self.groups.iter().map(|(c, m)| (c.survival(x), *m)).collect();
        truncated_counts(&s, cap)
    }

    /// `D_1(x), ..., D_{k+1}(x)`.
    pub fn order_stat_cdfs(&self, x: f64) -> Vec<f64> {
        let counts = self.truncated_counts(x, self.k + 1);
        let mut acc = 0.0;
        counts[..=self.k]
            .iter()
            .map(|c| {
                acc += c;
                acc.min(1.0)
            })
            .collect()
    }

    /// Largest finite support point, or `None` if some buyer is unbounded.
    pub fn support_max(&self) -> Option<f64> {
        let m = self.groups.iter().map(|(c, _)| c.support_max()).fold(0.0_f64, f64::max);
        m.is_finite().then_some(m)
    }

    /// All breakpoints of the buyer CDFs, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.groups.iter().flat_map(|(c, _)| c.breakpoints()).collect();
        sort_dedup(&mut pts);
        pts
    }

    /// Triangle parameters of every buyer, if the instance is all-triangle.
    pub fn triangles(&self) -> Option<Vec<TriangleParams>> {
        self.buyers()
            .map(|c| match c {
                Cdf::Triangle(t) => Some(*t),
                _ => None,
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceRepr {
    k: usize,
    cdfs: Vec<BuyerEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BuyerEntry {
    Grouped { cdf: Cdf, count: usize },
    Single(Cdf),
}

impl Serialize for Instance {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let cdfs = self
            .groups
            .iter()
            .map(|(c, m)| {
                if *m == 1 {
                    BuyerEntry::Single(c.clone())
                } else {
                    BuyerEntry::Grouped {
                        cdf: c.clone(),
                        count: *m,
                    }
                }
            })
            .collect();
        InstanceRepr { k: self.k, cdfs }.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = InstanceRepr::deserialize(de)?;
        let groups = repr
            .cdfs
            .into_iter()
            .map(|e| match e {
                BuyerEntry::Grouped { cdf, count } => (cdf, count),
                BuyerEntry::Single(cdf) => (cdf, 1),
            })
            .collect();
        Instance::from_groups(groups, repr.k).map_err(serde::de::Error::custom)
    }
}

/// Ex-ante allocation `q'_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub qprime: Vec<f64>,
}

impl Allocation {
    pub fn new(qprime: Vec<f64>) -> Result<Self> {
        if let Some(bad) = qprime.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(Error::InvalidParameter(format!(
                "allocation entry {bad} outside [0, 1]"
            )));
        }
        Ok(Self { qprime })
    }

    pub fn total(&self) -> f64 {
        self.qprime.iter().sum()
    }
}

pub(crate) fn sort_dedup(v: &mut Vec<f64>) {
    v.retain(|x| x.is_finite());
    v.sort_by(f64::total_cmp);
    v.dedup();
}

/// `E[min(k, N)]` from a count vector truncated at `k`.
pub(crate) fn expected_sales(counts: &[f64], k: usize) -> f64 {
    counts[..k].iter().enumerate().map(|(t, c)| t as f64 * c).sum::<f64>() + k as f64 * counts[k]
}

/// `AP(p) = p · E[min(k, #{b_j >= p})]`.
pub fn ap_revenue(inst: &Instance, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    p * expected_sales(&inst.truncated_counts(p, inst.k), inst.k)
}

fn price_candidates(inst: &Instance, grid: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = grid
        .iter()
        .copied()
        .chain(inst.breakpoints())
        .filter(|p| *p > 0.0)
        .collect();
    sort_dedup(&mut c);
    c
}

/// First strict maximum in ascending candidate order, so ties go to the smallest price.
fn argmax(cands: &[f64], vals: &[f64]) -> (f64, f64) {
    let mut best = (0.0, 0.0);
    for (&p, &v) in cands.iter().zip(vals) {
        if v > best.1 {
            best = (p, v);
        }
    }
    best
}

/// Best anonymous price over the grid plus every buyer breakpoint (monopoly prices, atoms, knots).
pub fn ap_optimal(inst: &Instance, price_grid: &[f64]) -> (f64, f64) {
    let cands = price_candidates(inst, price_grid);
    let vals: Vec<f64> = cands.par_iter().map(|&p| ap_revenue(inst, p)).collect();
    argmax(&cands, &vals)
}

fn ar_upper(inst: &Instance, cutoff: Option<f64>) -> Result<f64> {
    match (cutoff, inst.support_max()) {
        (Some(c), _) => {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidParameter(format!("cutoff must be finite, got {c}")));
            }
            Ok(c)
        }
        (None, Some(m)) => Ok(m),
        (None, None) => Err(Error::UnboundedSupportWithoutCutoff),
    }
}

/// `Pr[N >= k+1] = 1 - D_{k+1}(x)`.
fn tail_above_k(inst: &Instance, x: f64) -> f64 {
    inst.truncated_counts(x, inst.k + 1)[inst.k + 1]
}

/// `k ∫_lo^hi (1 - D_{k+1})` split at every breakpoint; returns `(value, error estimate)`.
fn ar_integral(inst: &Instance, lo: f64, hi: f64, extra: &[f64], tol: f64) -> Result<(f64, f64)> {
    if hi <= lo {
        return Ok((0.0, 0.0));
    }
    let mut pts: Vec<f64> = inst
        .breakpoints()
        .into_iter()
        .chain(extra.iter().copied())
        .filter(|x| *x > lo && *x < hi)
        .collect();
    pts.push(lo);
    pts.push(hi);
    sort_dedup(&mut pts);
    let k = inst.k as f64;
    let r = integrate_panels(|x| tail_above_k(inst, x), &pts, tol / k)?;
    Ok((k * r.value, k * r.abs_error))
}

/// `AR(r) = AP(r) + k ∫_r^cutoff (1 - D_{k+1}(x)) dx`, with its quadrature error estimate.
///
/// `cutoff` defaults to the largest support point; unbounded instances must supply one.
pub fn ar_revenue_with_error(inst: &Instance, r: f64, cutoff: Option<f64>, quad_tol: f64) -> Result<(f64, f64)> {
    let upper = ar_upper(inst, cutoff)?;
    let r = r.max(0.0);
    let (integral, err) = ar_integral(inst, r, upper, &[], quad_tol)?;
    Ok((ap_revenue(inst, r) + integral, err))
}

pub fn ar_revenue(inst: &Instance, r: f64, cutoff: Option<f64>, quad_tol: f64) -> Result<f64> {
    ar_revenue_with_error(inst, r, cutoff, quad_tol).map(|x| x.0)
}

/// Best anonymous reserve over the grid, zero, and every buyer breakpoint.
pub fn ar_optimal(inst: &Instance, reserve_grid: &[f64], cutoff: Option<f64>, quad_tol: f64) -> Result<(f64, f64)> {
    let upper = ar_upper(inst, cutoff)?;
    let mut cands: Vec<f64> = reserve_grid
        .iter()
        .copied()
        .chain(inst.breakpoints())
        .chain(std::iter::once(0.0))
        .filter(|r| *r >= 0.0)
        .collect();
    sort_dedup(&mut cands);
    let below: Vec<f64> = cands.iter().copied().filter(|c| *c < upper).collect();
    // integrate once between consecutive candidates and accumulate suffix sums
    let mut suffix = vec![0.0; below.len()];
    if !below.is_empty() {
        let bounds: Vec<f64> = below.iter().copied().chain(std::iter::once(upper)).collect();
        let total_width = upper - below[0];
        let pieces: Vec<Result<(f64, f64)>> = bounds
            .par_windows(2)
            .map(|w| {
                let share = if total_width > 0.0 {
                    quad_tol * (w[1] - w[0]) / total_width
                } else {
                    quad_tol
                };
                ar_integral(inst, w[0], w[1], &[], share)
            })
            .collect();
        let mut acc = 0.0;
        for i in (0..below.len()).rev() {
            acc += pieces[i].clone()?.0;
            suffix[i] = acc;
        }
    }
    let vals: Vec<f64> = cands
        .par_iter()
        .enumerate()
        .map(|(i, &r)| ap_revenue(inst, r) + suffix.get(i).copied().unwrap_or(0.0))
        .collect();
    Ok(argmax(&cands, &vals))
}

/// Whether buyer `cdf` is regular; tabulated CDFs are checked on their own knots.
fn buyer_is_regular(cdf: &Cdf) -> bool {
    match cdf {
        Cdf::Tabulated { xs, .. } => xs.len() < 3 || matches!(cdf.is_regular(xs), Ok(true)),
        _ => true,
    }
}

fn check_regular(inst: &Instance) -> Result<()> {
    let mut j = 0;
    for (c, m) in inst.groups() {
        if !buyer_is_regular(c) {
            return Err(Error::IrregularInstance { buyer: j });
        }
        j += m;
    }
    Ok(())
}

/// `EAR(q') = Σ_j q'_j F_j^{-1}(1 - q'_j)`.
pub fn ear_revenue(inst: &Instance, alloc: &Allocation) -> Result<f64> {
    if alloc.qprime.len() != inst.n() {
        return Err(Error::InvalidParameter(format!(
            "allocation has {} entries for {} buyers",
            alloc.qprime.len(),
            inst.n()
        )));
    }
    let total = alloc.total();
    if total > inst.k() as f64 + CAPACITY_TOL {
        return Err(Error::CapacityViolation { total, k: inst.k() });
    }
    check_regular(inst)?;
    Ok(inst
        .buyers()
        .zip(&alloc.qprime)
        .map(|(c, &q)| c.revenue_at_quantile(q))
        .sum())
}

/// Maximise EAR subject to `Σ q'_j <= k`.
///
/// Triangle and point-mass instances have two-piece revenue curves with slope
/// `v_j` up to the monopoly quantile, so filling by descending `v_j` is exact.
/// Other regular instances are discretised at [`EAR_QUANTILE_POINTS`] quantiles
/// and filled by descending marginal revenue along each curve's concave hull,
/// which is the Lagrangian solution of the discretised concave program.
pub fn ear_optimal(inst: &Instance) -> Result<(Allocation, f64)> {
    check_regular(inst)?;
    let buyers: Vec<&Cdf> = inst.buyers().collect();
    let n = buyers.len();
    let mut cap = inst.k() as f64;
    let mut q = vec![0.0; n];
    let apex: Option<Vec<(f64, f64)>> = buyers
        .iter()
        .map(|c| match c {
            Cdf::Triangle(t) => Some((t.v, t.q)),
            Cdf::PointMass { b } => Some((*b, 1.0)),
            _ => None,
        })
        .collect();
    if let Some(apex) = apex {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| apex[b].0.total_cmp(&apex[a].0));
        for j in order {
            if cap <= 0.0 || apex[j].0 <= 0.0 {
                break;
            }
            let take = apex[j].1.min(cap);
            q[j] = take;
            cap -= take;
        }
    } else {
        let m = EAR_QUANTILE_POINTS;
        let dq = 1.0 / m as f64;
        // (slope, buyer, width) of each upper-hull piece with positive slope
        let mut segs: Vec<(f64, usize, f64)> = Vec::new();
        for (j, c) in buyers.iter().enumerate() {
            let pts: Vec<(f64, f64)> = (0..=m)
                .map(|i| {
                    let x = i as f64 * dq;
                    (x, c.revenue_at_quantile(x))
                })
                .collect();
            for w in upper_hull(&pts).windows(2) {
                let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                if slope > 0.0 {
                    segs.push((slope, j, w[1].0 - w[0].0));
                }
            }
        }
        // hull slopes decrease within a buyer, so a stable sort keeps each buyer's pieces in order
        segs.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (_, j, width) in segs {
            if cap <= 0.0 {
                break;
            }
            let take = width.min(cap);
            q[j] = (q[j] + take).min(1.0);
            cap -= take;
        }
    }
    let alloc = Allocation { qprime: q };
    let rev = ear_revenue(inst, &alloc)?;
    Ok((alloc, rev))
}

/// Least concave majorant of points sorted by abscissa.
fn upper_hull(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for &p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // drop b if it lies on or below the chord a-p
            if (b.1 - a.1) * (p.0 - a.0) <= (p.1 - a.1) * (b.0 - a.0) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Result of checking `AP(p) <= 1` over candidate prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub ok: bool,
    pub worst_p: f64,
    pub worst_rev: f64,
}

/// Verify the unit-revenue constraint on the grid plus all buyer breakpoints.
pub fn check_feasibility(inst: &Instance, price_grid: &[f64]) -> Feasibility {
    let (worst_p, worst_rev) = ap_optimal(inst, price_grid);
    Feasibility {
        ok: worst_rev <= 1.0 + FEASIBILITY_TOL,
        worst_p,
        worst_rev,
    }
}

/// Necessary condition for feasibility: `Σ_j (1 - F_j(p)) <= 4/p` for `p ∈ [1/m, 1/2]`, `m = ⌊k/2⌋`.
pub fn relaxed_constraint_check(inst: &Instance) -> Result<bool> {
    let k = inst.k();
    if k < 4 {
        return Err(Error::KTooSmall { k, min: 4 });
    }
    let lo = 1.0 / (k / 2) as f64;
    let hi = 0.5;
    let mut grid: Vec<f64> = (0..RELAXED_GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (RELAXED_GRID_POINTS - 1) as f64)
        .chain(inst.breakpoints().into_iter().filter(|x| *x >= lo && *x <= hi))
        .collect();
    sort_dedup(&mut grid);
    Ok(grid.iter().all(|&p| {
        let lhs: f64 = inst.groups().iter().map(|(c, m)| *m as f64 * c.survival(p)).sum();
        lhs <= 4.0 / p * (1.0 + 1e-12)
    }))
}

/// Revenue split of a triangle instance into the groups A, B, C, plus `|A_t|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub m: usize,
    pub sum_a: f64,
    pub sum_b: f64,
    pub sum_c: f64,
    /// `a_t[i] = |A_{i+2}|` for `t = 2..=m`.
    pub a_t: Vec<usize>,
}

fn odds_revenue(t: &TriangleParams) -> f64 {
    if t.q >= 1.0 {
        f64::INFINITY
    } else {
        t.v * t.q / (1.0 - t.q)
    }
}

/// Partition buyers by `v_j >= 1/m` and `v_j q_j / (1 - q_j) >= 1/m` with `m = ⌊k/2⌋`.
pub fn group_partition(triangles: &[TriangleParams], k: usize) -> Result<GroupPartition> {
    if k < 4 {
        return Err(Error::KTooSmall { k, min: 4 });
    }
    let m = k / 2;
    let thr = 1.0 / m as f64;
    let mut out = GroupPartition {
        m,
        sum_a: 0.0,
        sum_b: 0.0,
        sum_c: 0.0,
        a_t: vec![0; m - 1],
    };
    for t in triangles {
        let rev = t.revenue();
        let odds = odds_revenue(t);
        if t.v < thr {
            out.sum_c += rev;
        } else if odds >= thr {
            out.sum_a += rev;
        } else {
            out.sum_b += rev;
        }
        for (i, slot) in out.a_t.iter_mut().enumerate() {
            let tt = 1.0 / (i + 2) as f64;
            if t.v >= tt && odds >= tt {
                *slot += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tri(v: f64, q: f64) -> Cdf {
        Cdf::triangle(v, q).unwrap()
    }

    fn pm(b: f64) -> Cdf {
        Cdf::point_mass(b).unwrap()
    }

    #[test]
    fn ap_examples() {
        let one = Instance::new(vec![tri(2.0, 0.5)], 1).unwrap();
        assert!((ap_revenue(&one, 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(ap_revenue(&one, 0.0), 0.0);
        let two = Instance::new(vec![pm(1.0), pm(1.0)], 2).unwrap();
        assert_eq!(ap_revenue(&two, 1.0), 2.0);
    }

    #[test]
    fn ap_optimal_examples() {
        let one = Instance::new(vec![tri(2.0, 0.5)], 1).unwrap();
        let (p, r) = ap_optimal(&one, &[0.5, 1.0]);
        assert_eq!(p, 2.0);
        assert!((r - 1.0).abs() < 1e-15);
        let many = Instance::iid(pm(1.0), 5, 1).unwrap();
        assert_eq!(ap_optimal(&many, &[]), (1.0, 1.0));
    }

    #[test]
    fn ar_examples() {
        let two = Instance::new(vec![pm(1.0), pm(1.0)], 1).unwrap();
        assert!((ar_revenue(&two, 1.0, None, 1e-12).unwrap() - 1.0).abs() < 1e-12);
        assert!((ar_revenue(&two, 0.5, None, 1e-12).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ar_revenue(&two, 3.0, None, 1e-12).unwrap(), 0.0);
        let er = Instance::new(vec![Cdf::equal_revenue(1.0).unwrap()], 1).unwrap();
        assert_eq!(
            ar_revenue(&er, 1.0, None, 1e-9),
            Err(Error::UnboundedSupportWithoutCutoff)
        );
        assert!(ar_revenue(&er, 1.0, Some(100.0), 1e-9).is_ok());
    }

    #[test]
    fn single_buyer_ar_equals_ap() {
        let inst = Instance::new(vec![tri(3.0, 0.3)], 1).unwrap();
        let (_, ap) = ap_optimal(&inst, &[]);
        let (_, ar) = ar_optimal(&inst, &[0.5, 1.0, 2.0], None, 1e-10).unwrap();
        assert!((ap - ar).abs() < 1e-9);
    }

    #[test]
    fn ear_examples() {
        let inst = Instance::new(vec![tri(2.0, 0.5)], 1).unwrap();
        // q' = 0.25 <= q, so the price stays at the apex: F^{-1}(0.75) = 2
        let r = ear_revenue(&inst, &Allocation::new(vec![0.25]).unwrap()).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        let r = ear_revenue(&inst, &Allocation::new(vec![0.75]).unwrap()).unwrap();
        assert!((r - 0.25 * 2.0 * 0.5 / (0.5 * 0.75) * 0.75).abs() < 1e-15);
        assert_eq!(ear_revenue(&inst, &Allocation::new(vec![0.0]).unwrap()).unwrap(), 0.0);
        let two = Instance::new(vec![tri(2.0, 0.5), tri(2.0, 0.5)], 1).unwrap();
        let (a, r) = ear_optimal(&two).unwrap();
        assert_eq!(a.qprime, vec![0.5, 0.5]);
        assert!((r - 2.0).abs() < 1e-15);
        let slack = Instance::new(vec![tri(2.0, 0.5), tri(1.0, 0.3)], 5).unwrap();
        let (a, r) = ear_optimal(&slack).unwrap();
        assert_eq!(a.qprime, vec![0.5, 0.3]);
        assert!((r - 1.3).abs() < 1e-15);
        let over = Instance::new(vec![tri(2.0, 0.5), tri(1.0, 0.9)], 1).unwrap();
        assert!(matches!(
            ear_revenue(&over, &Allocation::new(vec![0.5, 0.9]).unwrap()),
            Err(Error::CapacityViolation { .. })
        ));
    }

    #[test]
    fn ear_general_regular_matches_triangle_answer() {
        // tabulated triangle clone goes through the discretised path
        let t = tri(2.0, 0.4);
        let xs: Vec<f64> = (1..=2000).map(|i| 2.0 * i as f64 / 2000.0).collect();
        let ps: Vec<f64> = xs.iter().map(|&x| t.eval(x)).collect();
        let tab = Cdf::tabulated(xs, ps).unwrap();
        let inst = Instance::new(vec![tab, Cdf::equal_revenue(0.5).unwrap()], 1).unwrap();
        let (a, r) = ear_optimal(&inst).unwrap();
        assert!(a.total() <= 1.0 + 1e-9);
        assert!((r - (0.8 + 0.5)).abs() < 1e-3, "r = {r}");
    }

    #[test]
    fn irregular_tabulated_is_rejected() {
        let xs: Vec<f64> = (0..400)
            .map(|i| 1.001 * (1000.0f64 / 1.001).powf(i as f64 / 399.0))
            .collect();
        let ps: Vec<f64> = xs.iter().map(|x| (1.0 - 1.0 / x).sqrt()).collect();
        let inst = Instance::new(vec![Cdf::tabulated(xs, ps).unwrap()], 1).unwrap();
        assert!(matches!(ear_optimal(&inst), Err(Error::IrregularInstance { buyer: 0 })));
    }

    #[test]
    fn feasibility_examples() {
        let two = Instance::new(vec![pm(1.0), pm(1.0)], 2).unwrap();
        let f = check_feasibility(&two, &[]);
        assert!(!f.ok && f.worst_rev == 2.0 && f.worst_p == 1.0);
        let one = Instance::new(vec![tri(2.0, 0.5)], 1).unwrap();
        assert!(check_feasibility(&one, &[]).ok);
    }

    #[test]
    fn relaxed_constraint_examples() {
        let k = 8;
        let m = 4;
        let crowded = Instance::iid(pm(1.0 / m as f64), 5 * k, k).unwrap();
        assert!(!relaxed_constraint_check(&crowded).unwrap());
        let empty = Instance::iid(pm(0.0), 10, k).unwrap();
        assert!(relaxed_constraint_check(&empty).unwrap());
        assert_eq!(
            relaxed_constraint_check(&Instance::iid(pm(0.0), 3, 3).unwrap()),
            Err(Error::KTooSmall { k: 3, min: 4 })
        );
    }

    #[test]
    fn grouping_examples() {
        let g = group_partition(&[TriangleParams::new(1.0, 0.5).unwrap()], 8).unwrap();
        assert_eq!(g.m, 4);
        assert!((g.sum_a - 0.5).abs() < 1e-15 && g.sum_b == 0.0 && g.sum_c == 0.0);
        assert_eq!(g.a_t, vec![1, 1, 1]);
        let e = group_partition(&[], 8).unwrap();
        assert_eq!((e.sum_a, e.sum_b, e.sum_c), (0.0, 0.0, 0.0));
        assert_eq!(e.a_t, vec![0, 0, 0]);
        let small = group_partition(&[TriangleParams::new(0.1, 0.5).unwrap(); 4], 8).unwrap();
        assert!((small.sum_c - 0.2).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let inst = Instance::from_groups(vec![(tri(2.0, 0.5), 3), (pm(1.0), 1)], 2).unwrap();
        let s = serde_json::to_string(&inst).unwrap();
        assert_eq!(
            s,
            r#"{"k":2,"cdfs":[{"cdf":{"kind":"triangle","v":2.0,"q":0.5},"count":3},{"kind":"point_mass","b":1.0}]}"#
        );
        let back: Instance = serde_json::from_str(&s).unwrap();
        assert_eq!(back, inst);
        assert!(serde_json::from_str::<Instance>(r#"{"k":0,"cdfs":[{"kind":"point_mass","b":1.0}]}"#).is_err());
    }

    /// Brute-force AP over all 2^n exceed/not-exceed outcomes of two-point buyers.
    fn ap_brute(buyers: &[(f64, f64, f64)], k: usize, p: f64) -> f64 {
        let n = buyers.len();
        let mut total = 0.0;
        for mask in 0u32..(1 << n) {
            let mut pr = 1.0;
            let mut count = 0;
            for (j, &(lo, hi, w)) in buyers.iter().enumerate() {
                let (b, prob) = if mask >> j & 1 == 1 { (hi, w) } else { (lo, 1.0 - w) };
                pr *= prob;
                if b >= p {
                    count += 1;
                }
            }
            total += pr * p * count.min(k) as f64;
        }
        total
    }

    fn arb_tri() -> impl Strategy<Value = (f64, f64)> {
        (0.05..3.0f64, 0.02..1.0f64)
    }

    proptest! {
        #[test]
        fn ap_matches_brute_force(
            buyers in proptest::collection::vec((0.0..1.0f64, 1.0..2.0f64, 0.0..=1.0f64), 1..=8),
            k in 1usize..4,
            p in 0.0..2.5f64,
        ) {
            let cdfs = buyers
                .iter()
                .map(|&(lo, hi, w)| Cdf::tabulated(vec![lo.max(1e-9), hi], vec![0.0, 1.0 - w]).unwrap())
                .collect();
            // two-point law: b = lo w.p. 1-w, hi w.p. w
            let inst = Instance::new(cdfs, k).unwrap();
            let shifted: Vec<(f64, f64, f64)> = buyers.iter().map(|&(lo, hi, w)| (lo.max(1e-9), hi, w)).collect();
            prop_assert!((ap_revenue(&inst, p) - ap_brute(&shifted, k, p)).abs() < 1e-12);
        }

        #[test]
        fn ar_dominates_ap(ts in proptest::collection::vec(arb_tri(), 1..6), k in 1usize..4, r in 0.0..3.0f64) {
            let inst = Instance::new(ts.iter().map(|&(v, q)| tri(v, q)).collect(), k).unwrap();
            prop_assert!(ar_revenue(&inst, r, None, 1e-10).unwrap() >= ap_revenue(&inst, r) - 1e-12);
        }

        #[test]
        fn revenue_monotonicity(
            ts in proptest::collection::vec((arb_tri(), 0.0..1.0f64, 0.0..1.0f64), 1..6),
            k in 1usize..4,
            p in 0.01..3.0f64,
        ) {
            // raising v and q of a triangle gives a dominating distribution
            let lo: Vec<Cdf> = ts.iter().map(|&((v, q), _, _)| tri(v, q)).collect();
            let hi: Vec<Cdf> = ts
                .iter()
                .map(|&((v, q), dv, dq)| tri(v * (1.0 + dv), q + (1.0 - q) * dq))
                .collect();
            let grid: Vec<f64> = (0..200).map(|i| i as f64 * 0.03).collect();
            for (a, b) in hi.iter().zip(&lo) {
                prop_assert!(a.dominates(b, &grid));
            }
            let ilo = Instance::new(lo, k).unwrap();
            let ihi = Instance::new(hi, k).unwrap();
            prop_assert!(ap_revenue(&ihi, p) >= ap_revenue(&ilo, p) - 1e-12);
            let cut = Some(10.0);
            prop_assert!(
                ar_revenue(&ihi, p, cut, 1e-10).unwrap() >= ar_revenue(&ilo, p, cut, 1e-10).unwrap() - 1e-9
            );
            let alloc = Allocation::new(vec![(k as f64 / ts.len() as f64).min(1.0); ts.len()]).unwrap();
            prop_assert!(ear_revenue(&ihi, &alloc).unwrap() >= ear_revenue(&ilo, &alloc).unwrap() - 1e-12);
        }

        #[test]
        fn ear_optimal_beats_random_allocations(
            ts in proptest::collection::vec(arb_tri(), 1..8),
            k in 1usize..4,
            raw in proptest::collection::vec(0.0..1.0f64, 8),
        ) {
            let inst = Instance::new(ts.iter().map(|&(v, q)| tri(v, q)).collect(), k).unwrap();
            let (_, best) = ear_optimal(&inst).unwrap();
            let mut a: Vec<f64> = raw[..ts.len()].to_vec();
            let total: f64 = a.iter().sum();
            if total > k as f64 {
                for x in &mut a {
                    *x *= k as f64 / total;
                }
            }
            let r = ear_revenue(&inst, &Allocation::new(a).unwrap()).unwrap();
            prop_assert!(best >= r - 1e-12);
        }
    }
}
