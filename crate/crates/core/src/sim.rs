//! Monte Carlo simulation of AP, AR and sequential posted pricing.
//!
//! Trials are split into fixed-size blocks; block `b` draws from a ChaCha8
//! stream `b` of the given seed, and block statistics are merged in block
//! order, so results are bit-identical for any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::revenue::Instance;

/// Default number of trials.
pub const DEFAULT_TRIALS: usize = 100_000;
const BLOCK: usize = 4096;

/// Sample mean and standard error of simulated revenue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean: f64,
    /// Sample standard deviation over `√trials`.
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }
}

/// Draw `trials` bid profiles and average `revenue(bids)`.
fn simulate<F>(inst: &Instance, trials: usize, seed: u64, revenue: F) -> Result<SimResult>
where
    F: Fn(&mut [f64]) -> f64 + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let cdfs: Vec<_> = inst.buyers().cloned().collect();
    let blocks = trials.div_ceil(BLOCK);
    let parts: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let len = BLOCK.min(trials - b * BLOCK);
            let mut bids = vec![0.0; cdfs.len()];
            let mut m = Moments::default();
            for _ in 0..len {
                for (slot, c) in bids.iter_mut().zip(&cdfs) {
                    *slot = c.inverse(rng.random::<f64>());
                }
                m.push(revenue(&mut bids));
            }
            m
        })
        .collect();
    let m = parts.into_iter().fold(Moments::default(), Moments::merge);
    let stderr = if trials > 1 {
        (m.m2 / (m.n - 1.0)).sqrt() / m.n.sqrt()
    } else {
        0.0
    };
    Ok(SimResult {
        mean: m.mean,
        stderr,
        trials,
        seed,
    })
}

/// Anonymous pricing at `p`: revenue `p · min(k, #{b_j >= p})`.
pub fn simulate_ap(inst: &Instance, p: f64, trials: usize, seed: u64) -> Result<SimResult> {
    let k = inst.k();
    simulate(inst, trials, seed, |bids| {
        let willing = bids.iter().filter(|&&b| b >= p).count();
        p * willing.min(k) as f64
    })
}

/// `(k+1)`-th price auction with reserve `r`:
/// `Σ_{i<=k} r·1{b_(i) >= r} + k·max(b_(k+1) - r, 0)`.
pub fn simulate_ar(inst: &Instance, r: f64, trials: usize, seed: u64) -> Result<SimResult> {
    let k = inst.k();
    simulate(inst, trials, seed, |bids| {
        bids.sort_unstable_by(|a, b| b.total_cmp(a));
        let above = bids.iter().take(k).filter(|&&b| b >= r).count();
        let next = bids.get(k).copied().unwrap_or(0.0);
        r * above as f64 + k as f64 * (next - r).max(0.0)
    })
}

/// Sequential posted pricing: the `j`-th arrival is buyer `order[j]`, offered `prices[j]`.
pub fn simulate_spm(inst: &Instance, prices: &[f64], order: &[usize], trials: usize, seed: u64) -> Result<SimResult> {
    let n = inst.n();
    if prices.len() != n {
        return Err(Error::InvalidParameter(format!(
            "expected {n} prices, got {}",
            prices.len()
        )));
    }
    let mut seen = vec![false; n];
    if order.len() != n || !order.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true)) {
        return Err(Error::InvalidPermutation { n });
    }
    let k = inst.k();
    simulate(inst, trials, seed, |bids| {
        let mut stock = k;
        let mut rev = 0.0;
        for (&who, &p) in order.iter().zip(prices) {
            if stock == 0 {
                break;
            }
            if bids[who] >= p {
                rev += p;
                stock -= 1;
            }
        }
        rev
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Cdf;
    use crate::instances::{build_worst_case_iid, GridSpec};

    fn pm(n: usize, k: usize) -> Instance {
        Instance::iid(Cdf::point_mass(1.0).unwrap(), n, k).unwrap()
    }

    #[test]
    fn deterministic_point_masses() {
        let r = simulate_ap(&pm(2, 2), 1.0, 1000, 7).unwrap();
        assert_eq!((r.mean, r.stderr), (2.0, 0.0));
        let r = simulate_ar(&pm(2, 1), 0.5, 1000, 7).unwrap();
        assert_eq!(r.mean, 1.0);
        assert_eq!(simulate_ar(&pm(3, 1), 2.0, 100, 7).unwrap().mean, 0.0);
        let r = simulate_spm(&pm(5, 3), &[1.0; 5], &[4, 3, 2, 1, 0], 100, 1).unwrap();
        assert_eq!(r.mean, 3.0);
        assert_eq!(
            simulate_spm(&pm(3, 2), &[0.0; 3], &[0, 1, 2], 100, 1).unwrap().mean,
            0.0
        );
    }

    #[test]
    fn triangle_single_buyer() {
        let inst = Instance::new(vec![Cdf::triangle(2.0, 0.5).unwrap()], 1).unwrap();
        let r = simulate_ap(&inst, 2.0, 1_000_000, 11).unwrap();
        assert!((r.mean - 1.0).abs() <= 3.0 * r.stderr, "{r:?}");
        let s = simulate_spm(&inst, &[2.0], &[0], 1_000_000, 11).unwrap();
        assert_eq!(s.mean, r.mean);
    }

    #[test]
    fn worst_case_unit_revenue() {
        let w = build_worst_case_iid(2, 16, GridSpec::default()).unwrap();
        let inst = w.instance().unwrap();
        let r = simulate_ap(&inst, 0.75, 200_000, 3).unwrap();
        assert!((r.mean - 1.0).abs() <= 3.0 * r.stderr, "{r:?}");
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let inst = Instance::new(
            vec![
                Cdf::triangle(2.0, 0.3).unwrap(),
                Cdf::equal_revenue(1.0).unwrap(),
                Cdf::triangle(1.0, 0.6).unwrap(),
            ],
            2,
        )
        .unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_ar(&inst, 0.7, 50_000, 99).unwrap())
        };
        assert_eq!(run(1), run(4));
        assert_ne!(run(1).mean, simulate_ar(&inst, 0.7, 50_000, 100).unwrap().mean);
    }

    #[test]
    fn rejects_bad_order() {
        assert_eq!(
            simulate_spm(&pm(3, 1), &[1.0; 3], &[0, 0, 2], 10, 1),
            Err(Error::InvalidPermutation { n: 3 })
        );
        assert!(simulate_ap(&pm(1, 1), 1.0, 0, 1).is_err());
    }
}
