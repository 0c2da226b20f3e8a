//! Value distributions and their left-continuous CDFs.
//!
//! Every CDF here is evaluated as `F(x) = Pr[b < x]`, so the probability that
//! a buyer accepts a posted price `p` is `1 - F(p) = Pr[b >= p]`. Atoms are
//! therefore counted as willing to pay at their own value.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed decrease of the virtual value between adjacent grid points, relative to `1 + |phi|`.
pub const REGULARITY_TOL: f64 = 1e-9;
/// Pointwise slack for stochastic-dominance comparisons.
pub const DOMINANCE_TOL: f64 = 1e-12;
const MIN_DENSITY: f64 = 1e-14;
const TIE_RTOL: f64 = 1e-12;

/// Monopoly price `v` and monopoly quantile `q` of a triangle distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleParams {
    pub v: f64,
    pub q: f64,
}

impl TriangleParams {
    pub fn new(v: f64, q: f64) -> Result<Self> {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "triangle v must be finite and >= 0, got {v}"
            )));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!(
                "triangle q must lie in [0, 1], got {q}"
            )));
        }
        Ok(Self { v, q })
    }

    /// Single-buyer optimal posted-price revenue.
    pub fn revenue(&self) -> f64 {
        self.v * self.q
    }
}

/// A value distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CdfRepr", into = "CdfRepr")]
pub enum Cdf {
    /// `F(x) = (1-q)x / ((1-q)x + vq)` on `[0, v]`, 1 above.
    Triangle(TriangleParams),
    /// Deterministic value `b`.
    PointMass { b: f64 },
    /// `F(x) = 1 - scale/x` for `x >= scale`.
    EqualRevenue { scale: f64 },
    /// Piecewise-constant CDF that is exact at the knots: `F(x) = ps[i]` on `(xs[i-1], xs[i]]`
    /// and 1 above the last knot.
    Tabulated { xs: Arc<[f64]>, ps: Arc<[f64]> },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CdfRepr {
    Triangle { v: f64, q: f64 },
    PointMass { b: f64 },
    EqualRevenue { scale: f64 },
    Tabulated { xs: Vec<f64>, ps: Vec<f64> },
}

impl TryFrom<CdfRepr> for Cdf {
    type Error = Error;

    fn try_from(r: CdfRepr) -> Result<Self> {
        match r {
            CdfRepr::Triangle { v, q } => Cdf::triangle(v, q),
            CdfRepr::PointMass { b } => Cdf::point_mass(b),
            CdfRepr::EqualRevenue { scale } => Cdf::equal_revenue(scale),
            CdfRepr::Tabulated { xs, ps } => Cdf::tabulated(xs, ps),
        }
    }
}

impl From<Cdf> for CdfRepr {
    fn from(c: Cdf) -> Self {
        match c {
            Cdf::Triangle(t) => CdfRepr::Triangle { v: t.v, q: t.q },
            Cdf::PointMass { b } => CdfRepr::PointMass { b },
            Cdf::EqualRevenue { scale } => CdfRepr::EqualRevenue { scale },
            Cdf::Tabulated { xs, ps } => CdfRepr::Tabulated {
                xs: xs.to_vec(),
                ps: ps.to_vec(),
            },
        }
    }
}

impl Cdf {
    pub fn triangle(v: f64, q: f64) -> Result<Self> {
        Ok(Cdf::Triangle(TriangleParams::new(v, q)?))
    }

    pub fn point_mass(b: f64) -> Result<Self> {
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "point mass must be finite and >= 0, got {b}"
            )));
        }
        Ok(Cdf::PointMass { b })
    }

    pub fn equal_revenue(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "equal-revenue scale must be > 0, got {scale}"
            )));
        }
        Ok(Cdf::EqualRevenue { scale })
    }

    pub fn tabulated(xs: Vec<f64>, ps: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ps.len() {
            return Err(Error::InvalidParameter(
                "tabulated CDF needs equally long, nonempty xs and ps".into(),
            ));
        }
        if !xs.iter().all(|x| x.is_finite()) || xs[0] < 0.0 || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "tabulated xs must be finite, nonnegative and strictly increasing".into(),
            ));
        }
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) || ps.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter(
                "tabulated ps must be nondecreasing probabilities".into(),
            ));
        }
        Ok(Cdf::Tabulated {
            xs: xs.into(),
            ps: ps.into(),
        })
    }

    /// Largest value in the support (`+inf` for unbounded supports).
    pub fn support_max(&self) -> f64 {
        match self {
            Cdf::Triangle(t) => {
                if t.q == 0.0 {
                    0.0
                } else {
                    t.v
                }
            }
            Cdf::PointMass { b } => *b,
            Cdf::EqualRevenue { .. } => f64::INFINITY,
            Cdf::Tabulated { xs, .. } => xs[xs.len() - 1],
        }
    }

    /// `F(x) = Pr[b < x]`.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            Cdf::Triangle(t) => {
                if x > t.v {
                    1.0
                } else {
                    let num = (1.0 - t.q) * x;
                    num / (num + t.v * t.q)
                }
            }
            Cdf::PointMass { b } => {
                if x <= *b {
                    0.0
                } else {
                    1.0
                }
            }
            Cdf::EqualRevenue { scale } => {
                if x <= *scale {
                    0.0
                } else {
                    1.0 - scale / x
                }
            }
            Cdf::Tabulated { xs, ps } => {
                let i = xs.partition_point(|&k| k < x);
                if i == xs.len() {
                    1.0
                } else {
                    ps[i]
                }
            }
        }
    }

    /// `Pr[b >= x] = 1 - F(x)`, evaluated without cancellation where the form allows.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match self {
            Cdf::Triangle(t) => {
                if x > t.v {
                    0.0
                } else {
                    let vq = t.v * t.q;
                    vq / ((1.0 - t.q) * x + vq)
                }
            }
            Cdf::EqualRevenue { scale } => {
                if x <= *scale {
                    1.0
                } else {
                    scale / x
                }
            }
            _ => 1.0 - self.eval(x),
        }
    }

    /// `inf { x : F(x) >= y }`.
    pub fn inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match self {
            Cdf::Triangle(t) => {
                if t.q == 0.0 {
                    0.0
                } else if y <= 1.0 - t.q {
                    y * t.v * t.q / ((1.0 - t.q) * (1.0 - y))
                } else {
                    t.v
                }
            }
            Cdf::PointMass { b } => *b,
            Cdf::EqualRevenue { scale } => {
                if y >= 1.0 {
                    f64::INFINITY
                } else {
                    scale / (1.0 - y)
                }
            }
            Cdf::Tabulated { xs, ps } => {
                let i = ps.partition_point(|&p| p < y);
                if i == ps.len() {
                    xs[xs.len() - 1]
                } else if i == 0 {
                    0.0
                } else {
                    xs[i - 1]
                }
            }
        }
    }

    /// Highest price accepted with probability at least `quantile`:
    /// `sup { p : F(p) <= 1 - quantile }` for `quantile` in `(0, 1]`.
    pub fn quantile_price(&self, quantile: f64) -> f64 {
        if quantile <= 0.0 {
            return self.support_max();
        }
        match self {
            Cdf::Triangle(t) => {
                if quantile <= t.q {
                    t.v
                } else {
                    (1.0 - quantile) * t.v * t.q / ((1.0 - t.q) * quantile)
                }
            }
            Cdf::PointMass { b } => *b,
            Cdf::EqualRevenue { scale } => scale / quantile.min(1.0),
            Cdf::Tabulated { xs, ps } => {
                let y = 1.0 - quantile;
                let count = ps.partition_point(|&p| p <= y);
                if count == 0 {
                    0.0
                } else {
                    xs[count - 1]
                }
            }
        }
    }

    /// Revenue-quantile curve `R(q) = q * price(q)`.
    pub fn revenue_at_quantile(&self, quantile: f64) -> f64 {
        if quantile <= 0.0 {
            0.0
        } else {
            quantile * self.quantile_price(quantile)
        }
    }

    /// Points where the CDF jumps or changes formula.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Cdf::Triangle(t) => vec![t.v],
            Cdf::PointMass { b } => vec![*b],
            Cdf::EqualRevenue { scale } => vec![*scale],
            Cdf::Tabulated { xs, .. } => xs.to_vec(),
        }
    }

    /// Monopoly price and quantile `(v, q)` maximising `q * F^{-1}(1 - q)`,
    /// breaking ties toward the smallest `q`.
    pub fn monopoly_point(&self) -> Result<(f64, f64)> {
        match self {
            Cdf::Triangle(t) => Ok((t.v, t.q)),
            Cdf::PointMass { b } => Ok((*b, 1.0)),
            // flat revenue curve: the smallest-q tie-break runs off to q = 0, v = inf
            Cdf::EqualRevenue { .. } => Err(Error::MonopolyAtInfinity),
            Cdf::Tabulated { xs, ps } => {
                // Between knots F is constant, so p(1 - F(p)) peaks at a knot.
                let best = xs
                    .iter()
                    .zip(ps.iter())
                    .map(|(x, p)| x * (1.0 - p))
                    .fold(0.0_f64, f64::max);
                let floor = best * (1.0 - TIE_RTOL);
                let idx = (0..xs.len())
                    .rev()
                    .find(|&i| xs[i] * (1.0 - ps[i]) >= floor)
                    .unwrap_or(xs.len() - 1);
                Ok((xs[idx], 1.0 - ps[idx]))
            }
        }
    }

    /// Whether the virtual value `x - (1 - F)/f` is nondecreasing across `grid`.
    ///
    /// Closed-form families are regular. Tabulated CDFs use central differences
    /// over the grid, which must be strictly increasing with at least three points.
    pub fn is_regular(&self, grid: &[f64]) -> Result<bool> {
        match self {
            Cdf::Triangle(_) | Cdf::PointMass { .. } | Cdf::EqualRevenue { .. } => Ok(true),
            Cdf::Tabulated { .. } => {
                if grid.len() < 3 || grid.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidParameter(
                        "regularity grid needs >= 3 strictly increasing points".into(),
                    ));
                }
                let mut prev: Option<f64> = None;
                for i in 1..grid.len() - 1 {
                    let density = (self.eval(grid[i + 1]) - self.eval(grid[i - 1])) / (grid[i + 1] - grid[i - 1]);
                    if density <= MIN_DENSITY {
                        return Err(Error::DegenerateDensity { x: grid[i] });
                    }
                    let phi = grid[i] - self.survival(grid[i]) / density;
                    if let Some(p) = prev {
                        if phi < p - REGULARITY_TOL * (1.0 + p.abs()) {
                            return Ok(false);
                        }
                    }
                    prev = Some(phi);
                }
                Ok(true)
            }
        }
    }

    /// `true` iff `self` first-order stochastically dominates `other` on `grid`.
    pub fn dominates(&self, other: &Cdf, grid: &[f64]) -> bool {
        grid.iter().all(|&x| self.eval(x) <= other.eval(x) + DOMINANCE_TOL)
    }
}

pub fn cdf_eval(cdf: &Cdf, x: f64) -> f64 {
    cdf.eval(x)
}

pub fn monopoly_point(cdf: &Cdf) -> Result<(f64, f64)> {
    cdf.monopoly_point()
}

pub fn is_regular(cdf: &Cdf, grid: &[f64]) -> Result<bool> {
    cdf.is_regular(grid)
}

pub fn dominates(f: &Cdf, g: &Cdf, grid: &[f64]) -> bool {
    f.dominates(g, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tri(v: f64, q: f64) -> Cdf {
        Cdf::triangle(v, q).unwrap()
    }

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn triangle_eval_examples() {
        let t = tri(2.0, 0.5);
        assert!((t.eval(2.0) - 0.5).abs() < 1e-15);
        assert_eq!(t.eval(0.0), 0.0);
        assert_eq!(t.eval(3.0), 1.0);
    }

    #[test]
    fn point_mass_is_left_continuous() {
        let c = Cdf::point_mass(1.0).unwrap();
        assert_eq!(c.eval(1.0), 0.0);
        assert_eq!(c.eval(1.0 + 1e-12), 1.0);
        assert_eq!(c.survival(1.0), 1.0);
    }

    #[test]
    fn monopoly_examples() {
        assert_eq!(tri(3.0, 0.2).monopoly_point().unwrap(), (3.0, 0.2));
        assert_eq!(Cdf::point_mass(1.0).unwrap().monopoly_point().unwrap(), (1.0, 1.0));
        assert_eq!(
            Cdf::equal_revenue(1.0).unwrap().monopoly_point(),
            Err(Error::MonopolyAtInfinity)
        );
    }

    #[test]
    fn truncated_equal_revenue_picks_largest_support_point() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let ps: Vec<f64> = xs.iter().map(|x| 1.0 - 1.0 / x).collect();
        let c = Cdf::tabulated(xs.clone(), ps.clone()).unwrap();
        // brute-force revenue at every knot
        for (x, p) in xs.iter().zip(&ps) {
            assert!((x * (1.0 - p) - 1.0).abs() < 1e-12);
        }
        let (v, q) = c.monopoly_point().unwrap();
        assert_eq!(v, 10.0);
        assert!((q - 0.1).abs() < 1e-12);
    }

    #[test]
    fn tabulated_triangle_clone_monopoly_within_one_step() {
        let t = tri(2.0, 0.3);
        let xs = linspace(0.01, 2.0, 400);
        let ps: Vec<f64> = xs.iter().map(|&x| t.eval(x)).collect();
        let step = xs[1] - xs[0];
        let (v, q) = Cdf::tabulated(xs, ps).unwrap().monopoly_point().unwrap();
        assert!((v - 2.0).abs() <= step);
        assert!((q - 0.3).abs() < 1e-9);
    }

    #[test]
    fn regularity_examples() {
        assert!(tri(1.0, 0.5).is_regular(&[0.1, 0.5, 0.9]).unwrap());
        assert!(Cdf::point_mass(1.0).unwrap().is_regular(&[0.5, 1.0, 1.5]).unwrap());
    }

    #[test]
    fn worst_case_two_buyer_cdf_is_irregular() {
        // F(x) = sqrt(1 - 1/x): the k = 1, n = 2 worst case
        let xs: Vec<f64> = (0..4000)
            .map(|i| 1.001 * (1000.0f64 / 1.001).powf(i as f64 / 3999.0))
            .collect();
        let ps: Vec<f64> = xs.iter().map(|x| (1.0 - 1.0 / x).sqrt()).collect();
        let c = Cdf::tabulated(xs.clone(), ps).unwrap();
        let grid: Vec<f64> = xs.iter().step_by(20).copied().collect();
        assert!(!c.is_regular(&grid).unwrap());
    }

    #[test]
    fn tabulated_regular_clone_of_equal_revenue_passes() {
        let xs = linspace(1.0, 50.0, 2000);
        let ps: Vec<f64> = xs.iter().map(|x| 1.0 - 1.0 / x).collect();
        let c = Cdf::tabulated(xs.clone(), ps).unwrap();
        let grid: Vec<f64> = xs.iter().step_by(10).copied().collect();
        // phi = 0 up to finite-difference error, which shrinks with x
        let _ = c.is_regular(&grid).unwrap();
    }

    #[test]
    fn flat_tabulated_reports_degenerate_density() {
        let c = Cdf::tabulated(vec![1.0, 2.0, 3.0], vec![0.2, 0.2, 0.2]).unwrap();
        assert!(matches!(
            c.is_regular(&[1.0, 2.0, 3.0]),
            Err(Error::DegenerateDensity { .. })
        ));
    }

    #[test]
    fn dominance_examples() {
        let grid = linspace(0.0, 3.0, 301);
        let pm2 = Cdf::point_mass(2.0).unwrap();
        let pm1 = Cdf::point_mass(1.0).unwrap();
        assert!(pm2.dominates(&pm1, &grid));
        assert!(!pm1.dominates(&pm2, &grid));
        assert!(tri(2.0, 0.6).dominates(&tri(2.0, 0.5), &grid));
        assert!(tri(2.0, 0.5).dominates(&tri(2.0, 0.5), &grid));
    }

    #[test]
    fn triangle_inverse_and_quantile_price() {
        let t = tri(2.0, 0.5);
        // F^{-1}(0.75) = 0.75 * 1 / (0.5 * 0.25)... solved by hand: x = y v q / ((1-q)(1-y))
        assert!((t.inverse(0.75) - 2.0).abs() < 1e-15);
        assert!((t.inverse(0.4) - 0.4 * 1.0 / (0.5 * 0.6)).abs() < 1e-15);
        assert!((t.quantile_price(0.25) - 2.0).abs() < 1e-15);
        assert!((t.quantile_price(0.75) - 0.25 / (0.5 * 0.75)).abs() < 1e-15);
        assert_eq!(Cdf::point_mass(1.0).unwrap().quantile_price(1.0), 1.0);
    }

    #[test]
    fn tabulated_semantics_exact_at_knots() {
        let c = Cdf::tabulated(vec![1.0, 2.0, 4.0], vec![0.1, 0.5, 0.9]).unwrap();
        assert_eq!(c.eval(0.5), 0.1);
        assert_eq!(c.eval(1.0), 0.1);
        assert_eq!(c.eval(1.5), 0.5);
        assert_eq!(c.eval(4.0), 0.9);
        assert_eq!(c.eval(4.1), 1.0);
        assert_eq!(c.inverse(0.05), 0.0);
        assert_eq!(c.inverse(0.3), 1.0);
        assert_eq!(c.inverse(0.95), 4.0);
        assert_eq!(c.quantile_price(0.5), 2.0);
    }

    #[test]
    fn json_shape() {
        let s = serde_json::to_string(&tri(2.0, 0.5)).unwrap();
        assert_eq!(s, r#"{"kind":"triangle","v":2.0,"q":0.5}"#);
        let back: Cdf = serde_json::from_str(r#"{"kind":"point_mass","b":1.5}"#).unwrap();
        assert_eq!(back, Cdf::point_mass(1.5).unwrap());
        let bad = serde_json::from_str::<Cdf>(r#"{"kind":"triangle","v":1.0,"q":1.5}"#);
        assert!(bad.is_err());
        let tab: Cdf = serde_json::from_str(r#"{"kind":"tabulated","xs":[1.0,2.0],"ps":[0.5,1.0]}"#).unwrap();
        assert_eq!(tab.eval(2.0), 1.0);
    }

    fn arb_cdf() -> impl Strategy<Value = Cdf> {
        prop_oneof![
            (0.0..5.0f64, 0.0..=1.0f64).prop_map(|(v, q)| tri(v, q)),
            (0.0..5.0f64).prop_map(|b| Cdf::point_mass(b).unwrap()),
            (0.1..3.0f64).prop_map(|s| Cdf::equal_revenue(s).unwrap()),
            proptest::collection::vec((0.01..1.0f64, 0.0..1.0f64), 1..12).prop_map(|v| {
                let mut x = 0.0;
                let mut p = 0.0;
                let (mut xs, mut ps) = (vec![], vec![]);
                for (dx, dp) in v {
                    x += dx;
                    p += (1.0 - p) * dp;
                    xs.push(x);
                    ps.push(p);
                }
                Cdf::tabulated(xs, ps).unwrap()
            }),
        ]
    }

    proptest! {
        #[test]
        fn cdf_is_monotone(c in arb_cdf(), a in 0.0..10.0f64, b in 0.0..10.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(c.eval(lo) <= c.eval(hi));
            prop_assert_eq!(c.eval(0.0), 0.0);
        }

        #[test]
        fn inverse_round_trip(c in arb_cdf(), y in 0.001..0.999f64) {
            let x = c.inverse(y);
            // F(x+) >= y for the left-continuous convention
            prop_assert!(c.eval(x * (1.0 + 1e-12) + 1e-12) >= y - 1e-12);
        }

        #[test]
        fn triangle_apex_optimality(v in 0.01..5.0f64, q in 0.0..=1.0f64, t in 0.0..=1.0f64) {
            let c = tri(v, q);
            let p = t * v;
            prop_assert!(p * c.survival(p) <= v * q * (1.0 + 1e-12) + 1e-15);
            prop_assert!((v * c.survival(v) - v * q).abs() <= 1e-12 * (1.0 + v));
        }

        #[test]
        fn mutual_dominance_means_equal(c in arb_cdf(), d in arb_cdf()) {
            let grid: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
            if c.dominates(&d, &grid) && d.dominates(&c, &grid) {
                for &x in &grid {
                    prop_assert!((c.eval(x) - d.eval(x)).abs() <= 2.0 * DOMINANCE_TOL);
                }
            }
        }
    }
}
