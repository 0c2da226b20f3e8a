//! Verification suite: runs every numeric property check and collects a
//! machine-readable pass/fail report.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bernoulli_sum::{
    iid_projection_direct, iid_projection_iterative_with, sum_pmf, verify_single_crossing, FailureVector,
    ProjectionOptions, RootSign,
};
use crate::distributions::Cdf;
use crate::error::{Error, Result};
use crate::gap::{ar_ap_gap, ar_ap_gap_lower, ear_ap_upper_small_k, GapReport, REFERENCE_TABLE};
use crate::instances::{
    ar_of_worst_case_with_error, build_triangle_lower_bound, build_worst_case_iid, harmonic, matroid_demo, GridSpec,
};
use crate::order_stats::{check_log_concavity, pbd_pmf, Pmf, SuccessVector};
use crate::quadrature::integrate_panels;
use crate::revenue::{
    ap_optimal, ap_revenue, ar_revenue, ar_revenue_with_error, check_feasibility, group_partition,
    relaxed_constraint_check, Instance,
};
use crate::sim::{simulate_ap, simulate_ar};
use crate::special::{reg_gamma_lower, reg_gamma_upper};

/// Number of criteria in the suite.
pub const CRITERIA: u32 = 11;
const MAX_REPORTED_FAILURES: usize = 10;

/// EAR/AP bounds for `k = 1, 2, 3` to four decimals.
pub const EAR_AP_REFERENCE: [f64; 3] = [2.7184, 3.7897, 4.8111];

/// Tolerances, sizes and fault switches for [`run_verification_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Absolute tolerance for the gap quadrature.
    pub quad_tol: f64,
    /// Criteria to run; empty means all.
    pub criteria: Vec<u32>,

    pub gap_k_max: usize,
    pub gap_table_tol: f64,
    pub gap_k1_tol: f64,
    pub gap_time_limit_s: f64,

    pub bounds_k_max: usize,
    pub bounds_time_limit_s: f64,

    pub lb_k_max: usize,
    pub lb_integral_k_max: usize,
    pub lb_integral_tol: f64,

    pub ear_tol: f64,

    pub bernoulli_trials: usize,
    pub bernoulli_n_max: usize,
    pub projection_tol: f64,
    pub enumeration_tol: f64,
    /// Root branch used by the iterative projection; `flipped` injects a fault.
    pub root_sign: RootSign,

    pub logconcave_trials: usize,
    pub logconcave_n_max: usize,

    pub worst_case_ks: Vec<usize>,
    pub worst_case_points: usize,
    pub worst_case_prices: usize,
    pub worst_case_ap_tol: f64,
    pub worst_case_closed_form_tol: f64,
    pub worst_case_quad_tol: f64,
    pub worst_case_gap_tol: f64,

    pub lower_bound_ks: Vec<usize>,
    /// `a = 1/k + 1/N`, `b = 1/k + N`.
    pub lower_bound_big_n: f64,
    pub lower_bound_n_cap: usize,
    pub lower_bound_margin: f64,
    pub lower_bound_feasibility_tol: f64,
    pub lower_bound_grid: usize,

    pub matroid_k_max: usize,

    pub grouping_instances: usize,

    pub mc_instances: usize,
    pub mc_trials: usize,
    pub mc_sigmas: f64,
    pub mc_time_limit_s: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            quad_tol: 1e-10,
            criteria: Vec::new(),
            gap_k_max: 24,
            gap_table_tol: 1e-3,
            gap_k1_tol: 1e-6,
            gap_time_limit_s: 10.0,
            bounds_k_max: 1000,
            bounds_time_limit_s: 120.0,
            lb_k_max: 200,
            lb_integral_k_max: 20,
            lb_integral_tol: 1e-8,
            ear_tol: 1e-3,
            bernoulli_trials: 1000,
            bernoulli_n_max: 12,
            projection_tol: 1e-8,
            enumeration_tol: 1e-12,
            root_sign: RootSign::Inside,
            logconcave_trials: 1000,
            logconcave_n_max: 20,
            worst_case_ks: vec![1, 2, 3],
            worst_case_points: crate::instances::DEFAULT_GRID_POINTS,
            worst_case_prices: 200,
            worst_case_ap_tol: 1e-6,
            worst_case_closed_form_tol: 1e-8,
            worst_case_quad_tol: 1e-4,
            worst_case_gap_tol: 0.03,
            lower_bound_ks: vec![1, 2],
            lower_bound_big_n: 20.0,
            lower_bound_n_cap: 4096,
            lower_bound_margin: 0.1,
            lower_bound_feasibility_tol: 1e-6,
            lower_bound_grid: 2000,
            matroid_k_max: 64,
            grouping_instances: 100,
            mc_instances: 50,
            mc_trials: crate::sim::DEFAULT_TRIALS,
            mc_sigmas: 4.0,
            mc_time_limit_s: 60.0,
        }
    }
}

/// Outcome of one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub checks: usize,
    pub failed_checks: usize,
    /// First few failure messages.
    pub failures: Vec<String>,
    pub detail: String,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub seed: u64,
    pub criteria: Vec<CriterionReport>,
}

impl VerificationReport {
    pub fn failed(&self) -> impl Iterator<Item = &CriterionReport> {
        self.criteria.iter().filter(|c| !c.passed)
    }
}

#[derive(Default)]
struct Checks {
    total: usize,
    failed: usize,
    messages: Vec<String>,
    detail: String,
}

impl Checks {
    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.total += 1;
        if !ok {
            self.failed += 1;
            if self.messages.len() < MAX_REPORTED_FAILURES {
                self.messages.push(msg());
            }
        }
    }

    fn fail(&mut self, msg: String) {
        self.check(false, || msg);
    }
}

/// Name of criterion `id`.
pub fn criterion_name(id: u32) -> &'static str {
    match id {
        1 => "gap table",
        2 => "sqrt(k) bounds",
        3 => "closed-form lower bound",
        4 => "EAR/AP small-k bound",
        5 => "Bernoulli sum projection",
        6 => "log-concavity",
        7 => "worst-case i.i.d. instance",
        8 => "triangle lower bound",
        9 => "matroid separation",
        10 => "grouping diagnostic",
        11 => "Monte Carlo agreement",
        _ => "unknown",
    }
}

fn rng_for(cfg: &VerifyConfig, id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(id as u64);
    rng
}

/// Run criterion `id`.
pub fn run_criterion(cfg: &VerifyConfig, id: u32) -> Result<CriterionReport> {
    let mut c = Checks::default();
    let start = Instant::now();
    let outcome = match id {
        1 => gap_table(cfg, &mut c),
        2 => sqrt_bounds(cfg, &mut c),
        3 => lower_bound_sandwich(cfg, &mut c),
        4 => ear_small_k(cfg, &mut c),
        5 => bernoulli(cfg, &mut c),
        6 => log_concavity(cfg, &mut c),
        7 => worst_case(cfg, &mut c),
        8 => triangle_lower_bound(cfg, &mut c),
        9 => matroid(cfg, &mut c),
        10 => grouping(cfg, &mut c),
        11 => monte_carlo(cfg, &mut c, start),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "no criterion {id}; valid ids are 1..={CRITERIA}"
            )))
        }
    };
    if let Err(e) = outcome {
        c.fail(format!("error: {e}"));
    }
    Ok(CriterionReport {
        id,
        name: criterion_name(id).to_string(),
        passed: c.failed == 0 && c.total > 0,
        checks: c.total,
        failed_checks: c.failed,
        failures: c.messages,
        detail: c.detail,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Run the selected criteria (all when `cfg.criteria` is empty) in order.
pub fn run_verification_suite(cfg: &VerifyConfig) -> Result<VerificationReport> {
    let ids: Vec<u32> = if cfg.criteria.is_empty() {
        (1..=CRITERIA).collect()
    } else {
        cfg.criteria.clone()
    };
    let criteria = ids
        .into_iter()
        .map(|id| run_criterion(cfg, id))
        .collect::<Result<Vec<_>>>()?;
    Ok(VerificationReport {
        passed: criteria.iter().all(|c| c.passed),
        seed: cfg.seed,
        criteria,
    })
}

/// Gap reports for `k = 1..=k_max`, computed in parallel.
pub fn gap_reports(k_max: usize, quad_tol: f64) -> Result<Vec<GapReport>> {
    (1..=k_max).into_par_iter().map(|k| ar_ap_gap(k, quad_tol)).collect()
}

fn gap_table(cfg: &VerifyConfig, c: &mut Checks) -> Result<()> {
    let start = Instant::now();
    let reports = gap_reports(cfg.gap_k_max, cfg.quad_tol)?;
    let secs = start.elapsed().as_secs_f64();
    for r in &reports {
        if let Some(&(gap, ck)) = REFERENCE_TABLE.get(r.k - 1) {
            c.check((r.gap - gap).abs() <= cfg.gap_table_tol, || {
                format!("k={}: gap {:.6} vs table {gap:.4}", r.k, r.gap)
            });
            c.check((r.c_k - ck).abs() <= cfg.gap_table_tol, || {
                format!("k={}: c_k {:.6} vs table {ck:.4}", r.k, r.c_k)
            });
        }
    }
    let g1 = reports[0].gap;
    c.check((g1 - PI * PI / 6.0).abs() <= cfg.gap_k1_tol, || {
        format!("k=1: {g1:.12} vs pi^2/6")
    });
    c.check(secs < cfg.gap_time_limit_s, || {
        format!("runtime {secs:.2}s over {}s", cfg.gap_time_limit_s)
    });
    let c21 = reports.get(20).map(|r| r.c_k);
    c.detail = format!(
        "k<= {} in {secs:.2}s; gap(1)-pi^2/6 = {:.2e}; c_21 = {} (table 0.5878 breaks the monotone trend)",
        cfg.gap_k_max,
        g1 - PI * PI / 6.0,
        c21.map_or("n/a".into(), |v| format!("{v:.5}")),
    );
    Ok(())
}

fn sqrt_bounds(cfg: &VerifyConfig, c: &mut Checks) -> Result<()> {
    let start = Instant::now();
    let reports = gap_reports(cfg.bounds_k_max, cfg.quad_tol)?;
    let secs = start.elapsed().as_secs_f64();
    let mut min_margin = f64::INFINITY;
    for r in &reports {
        let sk = (r.k as f64).sqrt();
        min_margin = min_margin.min((r.gap - 1.0 - 0.1 / sk).min(1.0 + 2.0 / sk - r.gap));
        c.check(r.bounds_ok, || {
            format!("k={}: gap {:.8} outside [1+0.1/sqrt k, 1+2/sqrt k]", r.k, r.gap)
        });
    }
    c.check(secs < cfg.bounds_time_limit_s, || {
        format!("runtime {secs:.1}s over {}s", cfg.bounds_time_limit_s)
    });
    c.detail = format!(
        "k<= {} in {secs:.2}s; smallest margin {min_margin:.3e}",
        cfg.bounds_k_max
    );
    Ok(())
}

/// `1 + (1/k)∫_0^∞ T_k (1 - T_{k+1}) dx` by adaptive quadrature.
pub fn lower_bound_integral(k: usize, tol: f64) -> Result<f64> {
    let kk = k as f64;
    let x_end = kk + 40.0 + 20.0 * kk.sqrt();
    let f = |x: f64| reg_gamma_upper(k as u32, x) * reg_gamma_lower(k as u32 + 1, x);
    let r = integrate_panels(f, &[0.0, kk, x_end], tol)?;
    Ok(1.0 + r.value / kk)
}

fn lower_bound_sandwich(cfg: &VerifyConfig, c: &mut Checks) -> Result<()> {
    let reports = gap_reports(cfg.lb_k_max, cfg.quad_tol)?;
    for r in &reports {
        let lb = ar_ap_gap_lower(r.k);
        c.check(lb <= r.gap + r.quad_error, || {
            format!("k={}: lb {lb:.10} > gap {:.10}", r.k, r.gap)
        });
        c.check(lb >= 1.0 + 0.1 / (r.k as f64).sqrt(), || {
            format!("k={}: lb {lb:.10} below 1+1/(10 sqrt k)", r.k)
        });
    }
    let mut worst = 0.0_f64;
    for k in 1..=cfg.lb_integral_k_max {
        let lb = ar_ap_gap_lower(k);
        let direct = lower_bound_integral(k, 1e-12)?;
        worst = worst.max((lb - direct).abs());
        c.check((lb - direct).abs() <= cfg.lb_integral_tol, || {
            format!("k={k}: series {lb:.12} vs integral {direct:.12}")
        });
    }
    c.detail = format!(
        "k<= {}; series vs integral max diff {worst:.2e} for k<= {}",
        cfg.lb_k_max, cfg.lb_integral_k_max
    );
    Ok(())
}

fn ear_small_k(cfg: &VerifyConfig, c: &mut Checks) -> Result<()> {
    let mut vals = Vec::new();
    for (i, &expect) in EAR_AP_REFERENCE.iter().enumerate() {
        let v = ear_ap_upper_small_k(i + 1)?;
        vals.push(format!("{v:.5}"));
        c.check((v - expect).abs() <= cfg.ear_tol, || {
            format!("k={}: {v:.6} vs {expect}", i + 1)
        });
    }
    c.detail = format!("k=1,2,3 -> {}", vals.join(", "));
    Ok(())
}

/// Exact Poisson-binomial CDF by enumerating all `2^n` outcomes.
pub fn enumerate_sum_cdf(q: &[f64]) -> Vec<f64> {
    let n = q.len();
    let mut pmf = vec![0.0; n + 1];
    for mask in 0u32..(1u32 << n) {
        let mut p = 1.0;
        for (j, &qj) in q.iter().enumerate() {
            p *= if mask >> j & 1 == 1 { 1.0 - qj } else { qj };
        }
        pmf[mask.count_ones() as usize] += p;
    }
    pmf.iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

fn bernoulli(cfg: &VerifyConfig, c: &mut Checks) -> Result<()> {
    let mut rng = rng_for(cfg, 5);
    let opts = ProjectionOptions {
        root_sign: cfg.root_sign,
        ..ProjectionOptions::default()
    };
    let mut worst_agree = 0.0_f64;
    for trial in 0..cfg.bernoulli_trials {
        let n = rng.random_range(1..=cfg.bernoulli_n_max);
        let s = rng.random_range(0..n);
        let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let fv = FailureVector::new(q.clone())?;

        let exact = enumerate_sum_cdf(&q);
        let pmf = sum_pmf(&q);
        let mut acc = 0.0;
        let mut err = 0.0_f64;
        for (t, e) in exact.iter().enumerate() {
            acc += pmf.at(t);
            err = err.max((acc - e).abs());
        }
        c.check(err <= cfg.enumeration_tol, || {
            format!("trial {trial}: pmf vs enumeration off by {err:.2e}")
        });

        let direct = iid_projection_direct(&fv, s)?;
        let rep = verify_single_crossing(&fv, direct, s);
        c.check(rep.ok, || {
            format!(
                "trial {trial}: direct projection crossing violated at t={:?}",
                rep.violation
            )
        });

        match iid_projection_iterative_with(&fv, s, 1e-12, opts) {
            Ok(iter) => {
                worst_agree = worst_agree.max((iter - direct).abs());
                c.check((iter - direct).abs() <= cfg.projection_tol, || {
                    format!("trial {trial} (n={n}, s={s}): iterative {iter:.12} vs direct {direct:.12}")
                });
                let rep = verify_single_crossing(&fv, iter, s);
                c.check(rep.ok, || {
                    format!(
                        "trial {trial}: single crossing violated at t={:?} by {:.2e}",
                        rep.violation, rep.worst
                    )
                });
            }
            Err(e) => c.fail(format!(
                "trial {trial} (n={n}, s={s}): iterative projection failed: {e}"
            )),
        }
    }
    c.detail = format!(
        "{} triples; max |iterative - direct| = {worst_agree:.2e}; root branch {:?}",
        cfg.bernoulli_trials, cfg.root_sign
    );
    Ok(())
}

fn log_concavity(cfg: &VerifyConfig, c: &mut Checks) -> Result<()> {
    let mut rng = rng_for(cfg, 6);
    for trial in 0..cfg.logconcave_trials {
        let n = rng.random_range(1..=cfg.logconcave_n_max);
        let s = SuccessVector::new((0..n).map(|_| rng.random::<f64>()).collect())?;
        let p = pbd_pmf(&s);
        c.check(check_log_concavity(&p), || {
            format!("trial {trial}: pmf not log-concave: {:?}", p.p)
        });
    }
    let planted = Pmf { p: vec![0.4, 0.1, 0.5] };
    c.check(!check_log_concavity(&planted), || "planted convex pmf passed".into());
    c.detail = format!(
        "{} random pmfs with n <= {}; planted counterexample rejected",
        cfg.logconcave_trials, cfg.logconcave_n_max
    );
    Ok(())
}

fn worst_case(cfg: &VerifyConfig, c: &mut Checks) -> Result<()> {
    let spec = GridSpec {
        points: cfg.worst_case_points,
        ..GridSpec::default()
    };
    let mut summary = Vec::new();
    for &k in &cfg.worst_case_ks {
        let gap = ar_ap_gap(k, cfg.quad_tol)?.gap;
        let mut prev_ar = f64::NEG_INFINITY;
        for mult in [1usize, 4, 16, 256] {
            let n = mult * k;
            let w = build_worst_case_iid(k, n, spec)?;
            if mult <= 16 {
                let inst = w.instance()?;
                let m = cfg.worst_case_prices.min(w.grid.len());
                let mut worst = 0.0_f64;
                for i in 0..m {
                    let x = w.grid[i * (w.grid.len() - 1) / (m - 1).max(1)];
                    worst = worst.max((ap_revenue(&inst, x) - 1.0).abs());
                }
                c.check(worst <= cfg.worst_case_ap_tol, || {
                    format!("k={k} n={n}: |AP - 1| up to {worst:.2e}")
                });
                c.check(w.fvals.windows(2).all(|p| p[1] >= p[0]), || {
                    format!("k={k} n={n}: F* not monotone")
                });
                if k == 1 {
                    let off = w
                        .grid
                        .iter()
                        .zip(&w.fvals)
                        .map(|(x, f)| (f - (1.0 - 1.0 / x).powf(1.0 / n as f64)).abs())
                        .fold(0.0, f64::max);
                    c.check(off <= cfg.worst_case_closed_form_tol, || {
                        format!("k=1 n={n}: closed form off by {off:.2e}")
                    });
                }
            }
            let (ar, err) = ar_of_worst_case_with_error(&w, cfg.worst_case_quad_tol)?;
            c.check(ar > prev_ar, || {
                format!("k={k} n={n}: AR {ar:.6} not above {prev_ar:.6}")
            });
            prev_ar = ar;
            if mult == 256 {
                c.check((gap - ar).abs() <= cfg.worst_case_gap_tol, || {
                    format!("k={k} n={n}: AR {ar:.6} vs gap {gap:.6}")
                });
                summary.push(format!("k={k}: AR(n={n})={ar:.5} (+-{err:.0e}) gap={gap:.5}"));
            }
        }
    }
    c.detail = summary.join("; ");
    Ok(())
}

fn triangle_lower_bound(cfg: &VerifyConfig, c: &mut Checks) -> Result<()> {
    let mut summary = Vec::new();
    for &k in &cfg.lower_bound_ks {
        let target = ar_ap_gap(k, cfg.quad_tol)?.gap - cfg.lower_bound_margin;
        let a = 1.0 / k as f64 + 1.0 / cfg.lower_bound_big_n;
        let b = 1.0 / k as f64 + cfg.lower_bound_big_n;
        let mut n = 1;
        let mut prev = f64::NEG_INFINITY;
        let mut reached = None;
        let mut last = (0, 0.0, 0.0);
        while n <= cfg.lower_bound_n_cap {
            let t = build_triangle_lower_bound(k, n, a, b)?;
            let inst = t.instance()?;
            let (excess, dip) = t.ap_profile(cfg.lower_bound_grid)?;
            c.check(excess <= cfg.lower_bound_feasibility_tol, || {
                format!("k={k} n={n}: max AP exceeds 1 by {excess:.2e}")
            });
            let ar = ar_revenue(&inst, a, None, 1e-9)?;
            c.check(ar >= prev - 1e-9, || {
                format!("k={k} n={n}: AR(a) {ar:.6} dropped below {prev:.6}")
            });
            prev = ar;
            last = (n, ar, dip);
            if ar >= target {
                reached = Some(n);
                break;
            }
            n *= 2;
        }
        c.check(reached.is_some(), || {
            format!(
                "k={k}: AR(a) {:.5} below target {target:.5} at n cap {}",
                last.1, cfg.lower_bound_n_cap
            )
        });
        summary.push(format!(
            "k={k}: n={} AR(a)={:.5} target={target:.5} dip={:.3}",
            last.0, last.1, last.2
        ));
    }
    c.detail = summary.join("; ");
    Ok(())
}

fn matroid(cfg: &VerifyConfig, c: &mut Checks) -> Result<()> {
    for k in 1..=cfg.matroid_k_max {
        for m in [k, 2 * k] {
            let d = matroid_demo(m, k)?;
            let hk = harmonic(k);
            c.check(d.ap_best <= 1.0, || format!("k={k} m={m}: AP {} above 1", d.ap_best));
            c.check(d.ratio >= hk, || {
                format!("k={k} m={m}: ratio {} below H_k {hk}", d.ratio)
            });
        }
    }
    let d4 = matroid_demo(8, 4)?;
    c.check((d4.vcg_rev - 25.0 / 12.0).abs() <= 1e-15, || {
        format!("H_4 = {} not 25/12", d4.vcg_rev)
    });
    let top = matroid_demo(cfg.matroid_k_max, cfg.matroid_k_max)?;
    c.detail = format!("k<= {}; ratio at k={} is {:.4}", cfg.matroid_k_max, top.k, top.ratio);
    Ok(())
}

/// Random triangle instance with `Σq <= k`, rescaled so its best posted-price revenue is 1.
pub fn random_feasible_triangles(rng: &mut impl Rng, k: usize, n: usize) -> Result<Instance> {
    let mut v: Vec<f64> = (0..n).map(|_| (rng.random_range(-3.0..1.6f64)).exp()).collect();
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.95)).collect();
    let total: f64 = q.iter().sum();
    if total > k as f64 {
        q.iter_mut().for_each(|x| *x *= k as f64 / total);
    }
    let build = |v: &[f64]| -> Result<Instance> {
        let cdfs = v
            .iter()
            .zip(&q)
            .map(|(&v, &q)| Cdf::triangle(v, q))
            .collect::<Result<Vec<_>>>()?;
        Instance::new(cdfs, k)
    };
    let vmax = v.iter().copied().fold(0.0, f64::max);
    let grid: Vec<f64> = (0..2000)
        .map(|i| vmax * (1e-4f64).powf(1.0 - i as f64 / 1999.0))
        .collect();
    let (_, best) = ap_optimal(&build(&v)?, &grid);
    v.iter_mut().for_each(|x| *x /= best);
    build(&v)
}

fn grouping(cfg: &VerifyConfig, c: &mut Checks) -> Result<()> {
    let mut rng = rng_for(cfg, 10);
    let mut feasible = 0;
    let mut worst = [0.0_f64; 3];
    for trial in 0..cfg.grouping_instances {
        let k = rng.random_range(4..=16usize);
        let n = rng.random_range(k..=4 * k);
        let inst = random_feasible_triangles(&mut rng, k, n)?;
        if !check_feasibility(&inst, &[]).ok {
            continue;
        }
        feasible += 1;
        let tri = inst.triangles().expect("triangle instance");
        let g = group_partition(&tri, k)?;
        let bound_a = 16.0 + 8.0 * harmonic(g.m - 1);
        worst[0] = worst[0].max(g.sum_a / bound_a);
        worst[1] = worst[1].max(g.sum_b / 8.0);
        worst[2] = worst[2].max(g.sum_c / 3.0);
        c.check(g.sum_c <= 3.0 + 1e-9, || {
            format!("trial {trial} (k={k}): sumC {:.4} > 3", g.sum_c)
        });
        c.check(g.sum_b <= 8.0 + 1e-9, || {
            format!("trial {trial} (k={k}): sumB {:.4} > 8", g.sum_b)
        });
        c.check(g.sum_a <= bound_a + 1e-9, || {
            format!("trial {trial} (k={k}): sumA {:.4} > {bound_a:.4}", g.sum_a)
        });
        for (i, &card) in g.a_t.iter().enumerate() {
            let t = i + 2;
            c.check(card <= 8 * t, || {
                format!("trial {trial} (k={k}): |A_{t}| = {card} > {}", 8 * t)
            });
        }
        c.check(relaxed_constraint_check(&inst)?, || {
            format!("trial {trial} (k={k}): relaxed constraint fails")
        });
    }
    c.check(feasible > 0, || "no feasible instance generated".into());
    c.detail = format!(
        "{feasible}/{} feasible; max fraction of bound used: A {:.3}, B {:.3}, C {:.3}",
        cfg.grouping_instances, worst[0], worst[1], worst[2]
    );
    Ok(())
}

/// Random mixed triangle / point-mass instance with `n <= 10`, `k <= 4`.
pub fn random_mixed_instance(rng: &mut impl Rng) -> Result<Instance> {
    let n = rng.random_range(1..=10usize);
    let k = rng.random_range(1..=4usize);
    let cdfs = (0..n)
        .map(|_| {
            if rng.random_bool(0.7) {
                Cdf::triangle(rng.random_range(0.1..3.0), rng.random_range(0.05..1.0))
            } else {
                Cdf::point_mass(rng.random_range(0.1..3.0))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Instance::new(cdfs, k)
}

fn monte_carlo(cfg: &VerifyConfig, c: &mut Checks, start: Instant) -> Result<()> {
    let mut rng = rng_for(cfg, 11);
    let mut worst_z = 0.0_f64;
    for i in 0..cfg.mc_instances {
        let inst = random_mixed_instance(&mut rng)?;
        let top = inst.support_max().unwrap_or(3.0);
        // A sample with zero spread says nothing about events rarer than
        // ~3/trials; bound their effect on the mean by the revenue range.
        let unseen = 3.0 * inst.k() as f64 * top / cfg.mc_trials as f64;
        let gate = |a: f64, s: f64, extra: f64| {
            let band = if s > 0.0 { cfg.mc_sigmas * s } else { unseen };
            a.abs() <= band + extra + 1e-9
        };
        for j in 0..3 {
            let p = rng.random_range(0.0..1.1 * top);
            let seed = rng.random::<u64>();
            let sim = simulate_ap(&inst, p, cfg.mc_trials, seed)?;
            let exact = ap_revenue(&inst, p);
            let d = sim.mean - exact;
            if sim.stderr > 0.0 {
                worst_z = worst_z.max(d.abs() / sim.stderr);
            }
            c.check(gate(d, sim.stderr, 0.0), || {
                format!(
                    "instance {i} price {j}: AP sim {:.6}+-{:.1e} vs {exact:.6}",
                    sim.mean, sim.stderr
                )
            });

            let r = rng.random_range(0.0..1.1 * top);
            let seed = rng.random::<u64>();
            let sim = simulate_ar(&inst, r, cfg.mc_trials, seed)?;
            let (exact, err) = ar_revenue_with_error(&inst, r, None, 1e-10)?;
            let d = sim.mean - exact;
            if sim.stderr > 0.0 {
                worst_z = worst_z.max(d.abs() / sim.stderr);
            }
            c.check(gate(d, sim.stderr, err), || {
                format!(
                    "instance {i} reserve {j}: AR sim {:.6}+-{:.1e} vs {exact:.6}",
                    sim.mean, sim.stderr
                )
            });
        }
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < cfg.mc_time_limit_s, || {
        format!("runtime {secs:.1}s over {}s", cfg.mc_time_limit_s)
    });
    c.detail = format!(
        "{} instances x 6 checks at {} trials in {secs:.1}s; max |z| = {worst_z:.2}",
        cfg.mc_instances, cfg.mc_trials
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_matches_dp() {
        let q = [0.1, 0.5, 0.7, 0.3];
        let e = enumerate_sum_cdf(&q);
        assert!((e[4] - 1.0).abs() < 1e-15);
        let p = sum_pmf(&q);
        assert!((e[0] - p.at(0)).abs() < 1e-15);
    }

    #[test]
    fn lower_bound_integral_matches_series() {
        for k in [1usize, 2, 7] {
            assert!((lower_bound_integral(k, 1e-12).unwrap() - ar_ap_gap_lower(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn random_feasible_instances_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let inst = random_feasible_triangles(&mut rng, 6, 12).unwrap();
            let f = check_feasibility(&inst, &[]);
            assert!(f.ok && f.worst_rev > 0.99, "{f:?}");
        }
    }

    #[test]
    fn unknown_criterion_is_an_error() {
        assert!(run_criterion(&VerifyConfig::default(), 12).is_err());
    }

    #[test]
    fn quick_criteria_pass() {
        let cfg = VerifyConfig {
            bernoulli_trials: 50,
            logconcave_trials: 50,
            ..VerifyConfig::default()
        };
        for id in [4, 5, 6, 9] {
            let r = run_criterion(&cfg, id).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn flipped_root_is_caught() {
        let cfg = VerifyConfig {
            bernoulli_trials: 50,
            root_sign: RootSign::Flipped,
            ..VerifyConfig::default()
        };
        assert!(!run_criterion(&cfg, 5).unwrap().passed);
    }

    #[test]
    fn impossible_tolerance_is_reported() {
        let cfg = VerifyConfig {
            quad_tol: 1e-300,
            gap_k_max: 2,
            ..VerifyConfig::default()
        };
        let r = run_criterion(&cfg, 1).unwrap();
        assert!(!r.passed);
        assert!(r.failures[0].contains("tolerance"), "{:?}", r.failures);
    }

    #[test]
    fn config_round_trips_through_defaults() {
        let cfg: VerifyConfig = serde_json::from_str(r#"{"seed": 5, "root_sign": "flipped"}"#).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.root_sign, RootSign::Flipped);
        assert_eq!(cfg.gap_k_max, 24);
    }
}
