use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mdp::PolicyTable;
use crate::rift::{evaluate_policy, prior_from_demos};
use crate::table::argmax;

use super::{mean_final_success_at, thread_pool, Environment, ExperimentConfig};

/// Success bands of the unregularized baseline: low `[0, 0.3)`, mid
/// `[0.3, 0.7)` and high `[0.7, 1]`.
pub const SUCCESS_BANDS: [f64; 2] = [0.3, 0.7];

/// Q-gap thresholds named by the baseline success they produce. Smaller
/// thresholds stop more actions, so `high < med < low` numerically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub b_low: f64,
    pub b_med: f64,
    pub b_high: f64,
    /// Mean baseline success at `(b_low, b_med, b_high)`.
    pub success: (f64, f64, f64),
}

/// Thresholds that separate every distinct stop table: midpoints between
/// consecutive distinct expert Q-gaps (starting from zero), plus one value
/// above the largest gap.
pub fn qgap_candidates(env: &Environment) -> Vec<f64> {
    let mut gaps: Vec<f64> = Vec::new();
    for s in 0..env.mdp.num_states() {
        if env.mdp.is_absorbing(s) {
            continue;
        }
        let row = env.expert_q.q.row(s);
        let best = row[argmax(row)];
        gaps.extend(row.iter().map(|q| best - q).filter(|g| *g > 1e-9));
    }
    gaps.push(0.0);
    gaps.sort_by(f64::total_cmp);
    gaps.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    let mut out: Vec<f64> = gaps.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    out.push(gaps.last().copied().unwrap_or(0.0) + 1.0);
    out
}

/// Bisection over the candidate thresholds for the three success bands,
/// assuming baseline success does not increase with the threshold.
pub fn calibrate_thresholds(
    env: &Environment,
    prior: &PolicyTable,
    config: &ExperimentConfig,
    jobs: Option<usize>,
) -> Result<Thresholds> {
    let candidates = qgap_candidates(env);
    let pool = thread_pool(jobs)?;
    let mut memo: HashMap<usize, f64> = HashMap::new();
    let mut success = |i: usize| -> Result<f64> {
        if let Some(&v) = memo.get(&i) {
            return Ok(v);
        }
        let v = pool.install(|| mean_final_success_at(env, prior, config, 0.0, candidates[i]))?;
        log::info!("threshold {:.6} -> baseline success {v:.3}", candidates[i]);
        memo.insert(i, v);
        Ok(v)
    };
    let mut first_below = |level: f64| -> Result<usize> {
        let (mut lo, mut hi) = (0, candidates.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if success(mid)? < level {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(lo)
    };
    let end_high = first_below(SUCCESS_BANDS[1])?;
    let start_low = first_below(SUCCESS_BANDS[0])?;
    if end_high == 0 {
        return Err(Error::Calibration {
            band: "high".into(),
            message: "no threshold reaches baseline success 0.7".into(),
        });
    }
    if start_low == candidates.len() {
        return Err(Error::Calibration {
            band: "low".into(),
            message: "baseline success stays at or above 0.3 for every threshold".into(),
        });
    }
    if start_low <= end_high {
        return Err(Error::Calibration {
            band: "mid".into(),
            message: "baseline success jumps across [0.3, 0.7)".into(),
        });
    }
    let mid = (end_high + start_low - 1) / 2;
    let mut s = |i| success(i);
    let (s_low, s_med, s_high) = (s(start_low)?, s(mid)?, s(end_high - 1)?);
    if !(SUCCESS_BANDS[0]..SUCCESS_BANDS[1]).contains(&s_med) {
        return Err(Error::Calibration {
            band: "mid".into(),
            message: format!("midpoint threshold gives success {s_med}, outside [0.3, 0.7)"),
        });
    }
    Ok(Thresholds {
        b_low: candidates[start_low],
        b_med: candidates[mid],
        b_high: candidates[end_high - 1],
        success: (s_low, s_med, s_high),
    })
}

/// Smallest demonstration count whose cloned prior scores inside `band`.
pub fn calibrate_prior_demos(
    env: &Environment,
    config: &ExperimentConfig,
    smoothing: f64,
    seed: u64,
    band: (f64, f64),
    max_demos: usize,
) -> Result<(usize, f64)> {
    let settings = config.eval_settings();
    for n in 0..=max_demos {
        let prior = prior_from_demos(&env.mdp, &env.expert, n, smoothing, config.max_horizon, seed)?;
        let s = evaluate_policy(&env.mdp, &prior, env.mdp.reward(), &settings, seed)?.success_rate;
        if (band.0..=band.1).contains(&s) {
            return Ok((n, s));
        }
    }
    Err(Error::Calibration {
        band: format!("prior [{}, {}]", band.0, band.1),
        message: format!("no demonstration count up to {max_demos} lands in the band"),
    })
}
