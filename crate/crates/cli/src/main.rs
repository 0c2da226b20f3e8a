//! `revgap`: revenue-gap tables, extremal instances, simulation and verification.
//!
//! Exit status is 0 when every check requested by the subcommand passes,
//! 1 when a check fails and 2 on usage or runtime errors.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use revgap::bernoulli_sum::{
    iid_projection_direct, iid_projection_iterative, verify_single_crossing, FailureVector, RootSign,
};
use revgap::gap::{ar_ap_gap, ear_ap_upper_small_k, REFERENCE_TABLE};
use revgap::instances::{
    ar_of_worst_case_with_error, build_triangle_lower_bound, build_worst_case_iid, harmonic, matroid_demo, GridSpec,
};
use revgap::revenue::{ap_optimal, ap_revenue, ar_optimal, ar_revenue_with_error, check_feasibility, ear_optimal};
use revgap::sim::{simulate_ap, simulate_ar, simulate_spm};
use revgap::verify::{run_verification_suite, VerifyConfig, EAR_AP_REFERENCE};
use revgap::Instance;

use config::FileConfig;
use output::{render, Format};

const DEFAULT_TOL: f64 = 1e-10;
const TABLE_TOL: f64 = 1e-3;
const UNIT_TOL: f64 = 1e-6;
const AGREE_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "revgap",
    version,
    about = "Revenue gaps of anonymous pricing, anonymous reserve and ex-ante relaxation"
)]
struct Cli {
    /// RNG seed for simulation and randomized checks
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Absolute quadrature tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output format
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mechanism {
    Ap,
    Ar,
    Spm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    /// Take the wrong root of the pair-averaging quadratic
    FlippedRoot,
}

#[derive(Subcommand)]
enum Command {
    /// Supremum AR/AP gap for k = k-min..=k-max
    GapTable {
        #[arg(long, default_value_t = 24)]
        k_max: usize,
        #[arg(long, default_value_t = 1)]
        k_min: usize,
    },
    /// EAR/AP upper bound for k in {1, 2, 3}
    EarBound {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Solve the worst-case i.i.d. CDF and its AR revenue
    WorstCase {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = revgap::instances::DEFAULT_GRID_POINTS)]
        points: usize,
        #[arg(long)]
        x_max: Option<f64>,
        /// Tolerance on the tabulated AR integral
        #[arg(long, default_value_t = 1e-4)]
        ar_tol: f64,
        /// Write the solved CDF table as JSON
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write an instance file usable by `revenue` and `simulate`
        #[arg(long)]
        instance_out: Option<PathBuf>,
    },
    /// Build the asymmetric triangle lower-bound instance
    LowerBound {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        /// Lowest group price (default 1/k + 1/N)
        #[arg(long)]
        a: Option<f64>,
        /// Highest group price (default 1/k + N)
        #[arg(long)]
        b: Option<f64>,
        #[arg(long = "big-n", default_value_t = 20.0)]
        big_n: f64,
        /// Prices used for the feasibility scan
        #[arg(long, default_value_t = 2000)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        instance_out: Option<PathBuf>,
    },
    /// Pair-matroid instance separating AR from AP
    MatroidDemo {
        #[arg(long)]
        k: usize,
        /// Number of pairs (default k)
        #[arg(long)]
        m: Option<usize>,
    },
    /// Evaluate AP, AR and EAR revenues of an instance file
    Revenue {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_delimiter = ',')]
        price: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        reserve: Vec<f64>,
        /// Also search the best posted price and reserve
        #[arg(long)]
        optimize: bool,
        /// Also compute the optimal ex-ante relaxation
        #[arg(long)]
        ear: bool,
        /// Upper integration limit for unbounded supports
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        grid_points: usize,
        /// Fail unless AP(p) <= 1 everywhere on the grid
        #[arg(long)]
        check_feasible: bool,
    },
    /// Monte Carlo estimate of a mechanism's revenue
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "ap")]
        mechanism: Mechanism,
        /// Posted price (ap) or reserve (ar)
        #[arg(long)]
        price: Option<f64>,
        /// Per-arrival prices (spm)
        #[arg(long, value_delimiter = ',')]
        prices: Vec<f64>,
        /// Arrival order as buyer indices (spm; default 0..n)
        #[arg(long, value_delimiter = ',')]
        order: Vec<usize>,
        #[arg(long, default_value_t = revgap::sim::DEFAULT_TRIALS)]
        trials: usize,
        /// Width of the agreement band in standard errors
        #[arg(long, default_value_t = 4.0)]
        sigmas: f64,
    },
    /// Run the full verification suite
    Verify {
        /// Criteria to run (default all)
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u32>,
        #[arg(long, value_enum)]
        inject_fault: Option<Fault>,
        /// Write the JSON report here as well
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project a Bernoulli sum onto a binomial and check single crossing
    VerifyBernoulli {
        /// Failure probabilities Pr[Y_j = 0]
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<f64>,
        #[arg(long)]
        s: usize,
        /// Spread at which the iterative projection stops
        #[arg(long, default_value_t = 1e-12)]
        spread_tol: f64,
    },
}

struct Settings {
    seed: u64,
    tol: f64,
    format: Format,
    verify: VerifyConfig,
}

fn emit<T: Serialize>(value: &T, format: Format) -> anyhow::Result<()> {
    print!("{}", render(value, format)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn load_instance(path: &Path) -> anyhow::Result<Instance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing instance {}", path.display()))
}

fn report(ok: bool, what: &str) -> bool {
    if !ok {
        eprintln!("check failed: {what}");
    }
    ok
}

fn gap_table(s: &Settings, k_min: usize, k_max: usize) -> anyhow::Result<bool> {
    if k_min == 0 || k_min > k_max {
        bail!("need 1 <= k-min <= k-max");
    }
    let rows = revgap::verify::gap_reports(k_max, s.tol)?;
    let mut ok = true;
    let mut out = Vec::new();
    for r in rows.into_iter().filter(|r| r.k >= k_min) {
        ok &= report(r.bounds_ok, &format!("k={}: gap outside sqrt(k) bounds", r.k));
        if let Some(&(gap, _)) = REFERENCE_TABLE.get(r.k - 1) {
            ok &= report(
                (r.gap - gap).abs() <= TABLE_TOL,
                &format!("k={}: {:.6} vs reference {gap:.4}", r.k, r.gap),
            );
        }
        out.push(json!({
            "k": r.k, "gap": r.gap, "c_k": r.c_k, "lb": r.lb, "bounds_ok": r.bounds_ok, "quad_error": r.quad_error,
        }));
    }
    emit(&out, s.format)?;
    Ok(ok)
}

fn ear_bound(s: &Settings, k: Option<usize>) -> anyhow::Result<bool> {
    let ks: Vec<usize> = k.map_or(vec![1, 2, 3], |k| vec![k]);
    let mut ok = true;
    let mut out = Vec::new();
    for k in ks {
        let v = ear_ap_upper_small_k(k)?;
        let reference = EAR_AP_REFERENCE[k - 1];
        ok &= report(
            (v - reference).abs() <= TABLE_TOL,
            &format!("k={k}: {v:.6} vs {reference}"),
        );
        out.push(json!({"k": k, "bound": v, "reference": reference}));
    }
    emit(&out, s.format)?;
    Ok(ok)
}

#[allow(clippy::too_many_arguments)]
fn worst_case(
    s: &Settings,
    k: usize,
    n: usize,
    points: usize,
    x_max: Option<f64>,
    ar_tol: f64,
    out: Option<&Path>,
    instance_out: Option<&Path>,
) -> anyhow::Result<bool> {
    let w = build_worst_case_iid(
        k,
        n,
        GridSpec {
            points,
            x_max,
            ..GridSpec::default()
        },
    )?;
    let inst = w.instance()?;
    let ap_error = w
        .grid
        .iter()
        .map(|&x| (ap_revenue(&inst, x) - 1.0).abs())
        .fold(0.0, f64::max);
    let (ar, ar_error) = ar_of_worst_case_with_error(&w, ar_tol)?;
    let gap = ar_ap_gap(k, s.tol)?.gap;
    if let Some(p) = out {
        write_json(p, &w)?;
    }
    if let Some(p) = instance_out {
        write_json(p, &inst)?;
    }
    emit(
        &json!({
            "k": k, "n": n, "points": w.grid.len(), "x_max": w.grid.last(), "max_ap_error": ap_error,
            "ar": ar, "ar_error": ar_error, "gap": gap,
        }),
        s.format,
    )?;
    Ok(report(
        ap_error <= UNIT_TOL,
        &format!("|AP - 1| reaches {ap_error:.2e}"),
    ))
}

#[allow(clippy::too_many_arguments)]
fn lower_bound(
    s: &Settings,
    k: usize,
    n: usize,
    a: Option<f64>,
    b: Option<f64>,
    big_n: f64,
    grid: usize,
    out: Option<&Path>,
    instance_out: Option<&Path>,
) -> anyhow::Result<bool> {
    let base = 1.0 / k.max(1) as f64;
    let a = a.unwrap_or(base + 1.0 / big_n);
    let b = b.unwrap_or(base + big_n);
    let t = build_triangle_lower_bound(k, n, a, b)?;
    let inst = t.instance()?;
    let (excess, dip) = t.ap_profile(grid)?;
    let (ar, ar_error) = ar_revenue_with_error(&inst, a, None, s.tol)?;
    if let Some(p) = out {
        write_json(p, &t)?;
    }
    if let Some(p) = instance_out {
        write_json(p, &inst)?;
    }
    emit(
        &json!({
            "k": k, "n": n, "a": a, "b": b, "delta": t.delta, "ar_at_a": ar, "ar_error": ar_error,
            "max_ap_excess": excess, "max_dip": dip,
        }),
        s.format,
    )?;
    Ok(report(excess <= UNIT_TOL, &format!("AP exceeds 1 by {excess:.2e}")))
}

fn matroid(s: &Settings, k: usize, m: Option<usize>) -> anyhow::Result<bool> {
    let d = matroid_demo(m.unwrap_or(k), k)?;
    let hk = harmonic(k);
    let mut v = serde_json::to_value(d)?;
    v["harmonic"] = json!(hk);
    emit(&v, s.format)?;
    Ok(report(d.ap_best <= 1.0, "AP revenue above 1") & report(d.ratio >= hk, "ratio below H_k"))
}

#[allow(clippy::too_many_arguments)]
fn revenue(
    s: &Settings,
    path: &Path,
    prices: &[f64],
    reserves: &[f64],
    optimize: bool,
    ear: bool,
    cutoff: Option<f64>,
    grid_points: usize,
    check_feasible: bool,
) -> anyhow::Result<bool> {
    let inst = load_instance(path)?;
    let top = cutoff.or(inst.support_max());
    let grid: Vec<f64> = match top {
        Some(t) => (1..=grid_points).map(|i| t * i as f64 / grid_points as f64).collect(),
        None => Vec::new(),
    };
    let mut out = serde_json::Map::new();
    out.insert("k".into(), json!(inst.k()));
    out.insert("n".into(), json!(inst.n()));
    out.insert(
        "ap".into(),
        Value::Array(
            prices
                .iter()
                .map(|&p| json!({"price": p, "revenue": ap_revenue(&inst, p)}))
                .collect(),
        ),
    );
    let mut ar = Vec::new();
    for &r in reserves {
        let (v, e) = ar_revenue_with_error(&inst, r, cutoff, s.tol)?;
        ar.push(json!({"reserve": r, "revenue": v, "error": e}));
    }
    out.insert("ar".into(), Value::Array(ar));
    if optimize {
        let (p, v) = ap_optimal(&inst, &grid);
        out.insert("ap_optimal".into(), json!({"price": p, "revenue": v}));
        let (r, v) = ar_optimal(&inst, &grid, cutoff, s.tol)?;
        out.insert("ar_optimal".into(), json!({"reserve": r, "revenue": v}));
    }
    if ear {
        let (alloc, v) = ear_optimal(&inst)?;
        out.insert("ear".into(), json!({"revenue": v, "qprime": alloc.qprime}));
    }
    let mut ok = true;
    if check_feasible {
        let f = check_feasibility(&inst, &grid);
        ok = report(f.ok, &format!("AP({}) = {} exceeds 1", f.worst_p, f.worst_rev));
        out.insert("feasibility".into(), serde_json::to_value(f)?);
    }
    emit(&Value::Object(out), s.format)?;
    Ok(ok)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    s: &Settings,
    path: &Path,
    mechanism: Mechanism,
    price: Option<f64>,
    prices: &[f64],
    order: &[usize],
    trials: usize,
    sigmas: f64,
) -> anyhow::Result<bool> {
    let inst = load_instance(path)?;
    let (sim, exact) = match mechanism {
        Mechanism::Ap | Mechanism::Ar => {
            let p = price.context("--price is required for ap and ar")?;
            if matches!(mechanism, Mechanism::Ap) {
                (
                    simulate_ap(&inst, p, trials, s.seed)?,
                    Some((ap_revenue(&inst, p), 0.0)),
                )
            } else {
                (
                    simulate_ar(&inst, p, trials, s.seed)?,
                    Some(ar_revenue_with_error(&inst, p, None, s.tol)?),
                )
            }
        }
        Mechanism::Spm => {
            let order: Vec<usize> = if order.is_empty() {
                (0..inst.n()).collect()
            } else {
                order.to_vec()
            };
            (simulate_spm(&inst, prices, &order, trials, s.seed)?, None)
        }
    };
    let mut v = serde_json::to_value(sim)?;
    let mut ok = true;
    if let Some((exact, err)) = exact {
        let diff = sim.mean - exact;
        // with zero sample spread, events rarer than ~3/trials went unseen
        let unseen = inst
            .support_max()
            .map_or(0.0, |t| 3.0 * inst.k() as f64 * t / trials as f64);
        let band = if sim.stderr > 0.0 { sigmas * sim.stderr } else { unseen } + err + 1e-9;
        ok = report(
            diff.abs() <= band,
            &format!("simulated {:.6} vs exact {exact:.6}", sim.mean),
        );
        v["exact"] = json!(exact);
        v["difference"] = json!(diff);
        v["agrees"] = json!(ok);
    }
    emit(&v, s.format)?;
    Ok(ok)
}

fn verify(s: &Settings, criteria: Vec<u32>, fault: Option<Fault>, out: Option<&Path>) -> anyhow::Result<bool> {
    let mut cfg = s.verify.clone();
    if !criteria.is_empty() {
        cfg.criteria = criteria;
    }
    if let Some(Fault::FlippedRoot) = fault {
        cfg.root_sign = RootSign::Flipped;
    }
    let rep = run_verification_suite(&cfg)?;
    for c in &rep.criteria {
        eprintln!(
            "criterion {:>2} {} {}",
            c.id,
            if c.passed { "PASS" } else { "FAIL" },
            c.name
        );
        for f in &c.failures {
            eprintln!("    {f}");
        }
    }
    if let Some(p) = out {
        write_json(p, &rep)?;
    }
    match s.format {
        Format::Json => emit(&rep, s.format)?,
        Format::Csv => emit(&rep.criteria, s.format)?,
    }
    Ok(rep.passed)
}

fn verify_bernoulli(s: &Settings, q: Vec<f64>, level: usize, spread_tol: f64) -> anyhow::Result<bool> {
    let fv = FailureVector::new(q)?;
    let direct = iid_projection_direct(&fv, level)?;
    let iterative = iid_projection_iterative(&fv, level, spread_tol)?;
    let crossing = verify_single_crossing(&fv, direct, level);
    let agree = (iterative - direct).abs() <= AGREE_TOL;
    emit(
        &json!({
            "n": fv.len(), "s": level, "q_direct": direct, "q_iterative": iterative,
            "difference": iterative - direct, "single_crossing": crossing.ok, "crossing": crossing.crossing,
            "violation": crossing.violation, "worst": crossing.worst,
        }),
        s.format,
    )?;
    Ok(report(agree, "iterative and direct projections disagree") & report(crossing.ok, "single crossing violated"))
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(t) = cli.threads.or(file.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut verify_cfg = file.verify;
    let seed = cli.seed.or(file.seed).unwrap_or(verify_cfg.seed);
    let tol = cli.tol.or(file.tol).unwrap_or(DEFAULT_TOL);
    verify_cfg.seed = seed;
    if let Some(t) = cli.tol.or(file.tol) {
        verify_cfg.quad_tol = t;
    }
    let s = Settings {
        seed,
        tol,
        format: cli.format.or(file.format).unwrap_or_default(),
        verify: verify_cfg,
    };
    match cli.command {
        Command::GapTable { k_max, k_min } => gap_table(&s, k_min, k_max),
        Command::EarBound { k } => ear_bound(&s, k),
        Command::WorstCase {
            k,
            n,
            points,
            x_max,
            ar_tol,
            out,
            instance_out,
        } => worst_case(&s, k, n, points, x_max, ar_tol, out.as_deref(), instance_out.as_deref()),
        Command::LowerBound {
            k,
            n,
            a,
            b,
            big_n,
            grid,
            out,
            instance_out,
        } => lower_bound(&s, k, n, a, b, big_n, grid, out.as_deref(), instance_out.as_deref()),
        Command::MatroidDemo { k, m } => matroid(&s, k, m),
        Command::Revenue {
            instance,
            price,
            reserve,
            optimize,
            ear,
            cutoff,
            grid_points,
            check_feasible,
        } => revenue(
            &s,
            &instance,
            &price,
            &reserve,
            optimize,
            ear,
            cutoff,
            grid_points,
            check_feasible,
        ),
        Command::Simulate {
            instance,
            mechanism,
            price,
            prices,
            order,
            trials,
            sigmas,
        } => simulate(&s, &instance, mechanism, price, &prices, &order, trials, sigmas),
        Command::Verify {
            criteria,
            inject_fault,
            out,
        } => verify(&s, criteria, inject_fault, out.as_deref()),
        Command::VerifyBernoulli {
            q,
            s: level,
            spread_tol,
        } => verify_bernoulli(&s, q, level, spread_tol),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
