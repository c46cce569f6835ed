//! Counts-only branching simulation and the Monte Carlo experiments built on it.
//!
//! Explicit trees become infeasible once `z^{2h}` passes a few million, so
//! the experiments here only track level sizes: given `X_j` vertices, the
//! next level holds `alpha_min * X_j` unmarked children plus a
//! `Binomial(X_j (alpha_max - alpha_min), p)` number of retained marked ones.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::bits::{derive_seed, BitSource};
use crate::error::{HoroError, Result};
use crate::iso::folner_ratio;
use crate::tree::{mean_offspring, LevelCounts, TreeParams};
use crate::Exact;

/// Default cap on a single level count.
pub const DEFAULT_COUNT_CAP: u64 = 1_000_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimulatedCounts {
    pub counts: LevelCounts,
    /// First level whose count would have exceeded the cap; the counts stop
    /// just below it.
    pub truncated_at: Option<i64>,
}

/// Level counts of a window rooted at `root_level`, `height` levels deep.
pub fn simulate_window_counts(
    params: &TreeParams,
    root_level: i64,
    height: u32,
    seed: u64,
    cap: u64,
) -> Result<SimulatedCounts> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let marked = u64::from(params.alpha_max - params.alpha_min);
    let mut counts = vec![1u64];
    let mut truncated_at = None;
    for d in 1..=height {
        let x = *counts.last().unwrap();
        if x == 0 {
            counts.push(0);
            continue;
        }
        let next = x
            .checked_mul(marked)
            .zip(x.checked_mul(u64::from(params.alpha_min)))
            .filter(|&(m, u)| m <= cap && u <= cap)
            .map(|(m, u)| {
                let kept = if marked == 0 || params.retention == 0.0 {
                    0
                } else {
                    Binomial::new(m, params.retention)
                        .expect("retention validated")
                        .sample(&mut rng)
                };
                u + kept
            })
            .filter(|&n| n <= cap);
        match next {
            Some(n) => counts.push(n),
            None => {
                truncated_at = Some(root_level + i64::from(d));
                break;
            }
        }
    }
    Ok(SimulatedCounts {
        counts: LevelCounts {
            base_level: root_level,
            counts,
        },
        truncated_at,
    })
}

/// Level counts from level 0 to `height`; errors if a count passes the
/// default cap.
pub fn simulate_level_counts(params: &TreeParams, height: u32, seed: u64) -> Result<LevelCounts> {
    let sim = simulate_window_counts(params, 0, height, seed, DEFAULT_COUNT_CAP)?;
    match sim.truncated_at {
        Some(level) => Err(HoroError::Overflow { level }),
        None => Ok(sim.counts),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
}

impl MeanEstimate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Self { mean, se: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }

    /// `|mean - target| <= k * se`
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleTrack {
    pub params: TreeParams,
    pub z: f64,
    pub root_level: i64,
    pub height: u32,
    pub seed: u64,
    pub trials: usize,
    pub discarded: usize,
    /// `Y_j` estimates, one per level starting at the root.
    pub y: Vec<MeanEstimate>,
    /// `Y_{j+1} - Y_j` estimates, one per step.
    pub increments: Vec<MeanEstimate>,
    /// Per kept trial, `sup_j 1 / Y_j`, sorted ascending.
    pub sup_inverse: Vec<f64>,
}

impl MartingaleTrack {
    pub fn increments_centered(&self, k: f64) -> bool {
        self.increments.iter().all(|e| e.within(0.0, k))
    }

    pub fn sup_inverse_quantile(&self, q: f64) -> f64 {
        self.sup_inverse[quantile_index(self.sup_inverse.len(), q)]
    }
}

/// Tracks `Y_j = X_j / z^{j - root_level}` over `trials` independent
/// windows rooted at level 0. With `alpha_min = 0` extinction is possible and
/// `condition_on_survival` must be set; extinct trials are then discarded.
pub fn martingale_track(
    params: &TreeParams,
    height: u32,
    trials: usize,
    seed: u64,
    condition_on_survival: bool,
) -> Result<MartingaleTrack> {
    if params.alpha_min == 0 && !condition_on_survival {
        return Err(HoroError::InvalidParams(
            "alpha_min = 0 needs conditioning on survival".into(),
        ));
    }
    if trials == 0 {
        return Err(HoroError::InvalidParams("trials must be at least 1".into()));
    }
    let z = mean_offspring(params);
    let runs: Vec<Option<Vec<f64>>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let sim = simulate_window_counts(
                params,
                0,
                height,
                derive_seed(seed, &[t]),
                DEFAULT_COUNT_CAP,
            )?;
            if sim.truncated_at.is_some() {
                return Err(HoroError::ResourceCap {
                    what: "level count",
                    cap: DEFAULT_COUNT_CAP,
                });
            }
            let counts = sim.counts.counts;
            if counts.last() == Some(&0) {
                return Ok(None);
            }
            Ok(Some(
                counts
                    .iter()
                    .enumerate()
                    .map(|(d, &x)| x as f64 / z.powi(d as i32))
                    .collect(),
            ))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<Vec<f64>> = runs.iter().flatten().cloned().collect();
    let discarded = trials - kept.len();
    if kept.is_empty() {
        return Err(HoroError::InvalidParams("every trial went extinct".into()));
    }
    let levels = height as usize + 1;
    let column = |f: &dyn Fn(&Vec<f64>) -> f64| -> MeanEstimate {
        MeanEstimate::of(&kept.iter().map(f).collect::<Vec<_>>())
    };
    let y = (0..levels).map(|d| column(&|r| r[d])).collect();
    let increments = (0..levels - 1)
        .map(|d| column(&|r| r[d + 1] - r[d]))
        .collect();
    let mut sup_inverse: Vec<f64> = kept
        .iter()
        .map(|r| r.iter().map(|y| 1.0 / y).fold(0.0, f64::max))
        .collect();
    sup_inverse.sort_by(f64::total_cmp);
    Ok(MartingaleTrack {
        params: *params,
        z,
        root_level: 0,
        height,
        seed,
        trials,
        discarded,
        y,
        increments,
        sup_inverse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub z_left: f64,
    pub z_right: f64,
    pub tolerance: f64,
    pub satisfied: bool,
}

impl std::fmt::Display for GrowthReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.satisfied {
            "satisfied"
        } else {
            "violated"
        };
        write!(f, "{verdict}: {} vs {}", self.z_left, self.z_right)
    }
}

/// Equal mean offspring of the two factors, up to `tolerance`.
pub fn growth_condition_check(
    left: &TreeParams,
    right: &TreeParams,
    tolerance: f64,
) -> GrowthReport {
    let z_left = mean_offspring(left);
    let z_right = mean_offspring(right);
    GrowthReport {
        z_left,
        z_right,
        tolerance,
        satisfied: (z_left - z_right).abs() <= tolerance,
    }
}

/// `M_N = alpha_max * (1 + alpha_min + ... + alpha_min^N)`.
pub fn m_n(params: &TreeParams, n: u32) -> Result<u128> {
    let a = u128::from(params.alpha_min);
    let mut sum = 0u128;
    let mut power = 1u128;
    for k in 0..=n {
        sum = sum
            .checked_add(power)
            .ok_or(HoroError::Overflow { level: k.into() })?;
        if k < n {
            power = power
                .checked_mul(a)
                .ok_or(HoroError::Overflow { level: k.into() })?;
        }
    }
    sum.checked_mul(u128::from(params.alpha_max))
        .ok_or(HoroError::Overflow { level: n.into() })
}

/// `(1 - p')^{2 M'_N} (1 - p)^{2 M_N}` in floating point.
pub fn all_closed_probability(left: &TreeParams, right: &TreeParams, n: u32) -> Result<f64> {
    let term = |t: &TreeParams| -> Result<f64> {
        let m = m_n(t, n)?;
        let e = (2 * m) as f64;
        Ok((1.0 - t.retention).powf(e))
    };
    Ok(term(left)? * term(right)?)
}

/// Exact version of [`all_closed_probability`]; each retention is read as
/// the exact rational value of its binary float.
pub fn all_closed_probability_exact(
    left: &TreeParams,
    right: &TreeParams,
    n: u32,
) -> Result<BigRational> {
    let term = |t: &TreeParams| -> Result<BigRational> {
        let m = m_n(t, n)?;
        let exponent = m
            .checked_mul(2)
            .and_then(|e| i32::try_from(e).ok())
            .ok_or(HoroError::Overflow { level: n.into() })?;
        let p = BigRational::from_float(t.retention)
            .ok_or_else(|| HoroError::InvalidParams("retention is not finite".into()))?;
        Ok(num_traits::Pow::pow(BigRational::one() - p, exponent))
    };
    Ok(term(left)? * term(right)?)
}

/// Lower quantile index `floor(q (n - 1))`.
pub fn quantile_index(n: usize, q: f64) -> usize {
    assert!(n > 0 && (0.0..=1.0).contains(&q));
    ((q * (n - 1) as f64).floor() as usize).min(n - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FolnerStats {
    pub h: i64,
    pub trials: usize,
    pub discarded: usize,
    /// Trials cut short by the count cap; included in `discarded`.
    pub truncated: usize,
    #[serde(serialize_with = "ser_exact")]
    pub median: Exact,
    pub mean: f64,
    pub q10: f64,
    pub q90: f64,
    /// `median * (2h + 1)`
    pub median_scaled: f64,
}

fn ser_exact<S: serde::Serializer>(r: &Exact, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FolnerSeries {
    pub left: TreeParams,
    pub right: TreeParams,
    pub seed: u64,
    pub trials: usize,
    /// The factors violate the equal-growth condition.
    pub exploratory: bool,
    pub rows: Vec<FolnerStats>,
}

impl FolnerSeries {
    pub fn medians_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].median < w[0].median)
    }

    /// Largest over smallest `median_scaled`.
    pub fn scaled_spread(&self) -> f64 {
        let (lo, hi) = self
            .rows
            .iter()
            .map(|r| r.median_scaled)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        hi / lo
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "h,trials,discarded,median_ratio_num,median_ratio_den,mean,q10,q90,median_scaled\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.h,
                r.trials,
                r.discarded,
                r.median.numer(),
                r.median.denom(),
                r.mean,
                r.q10,
                r.q90,
                r.median_scaled
            ));
        }
        out
    }
}

/// Window ratio `I_h` for each `h` in `h_range` over independent left/right
/// count draws. Trial `t` at size `h` uses seeds derived from
/// `(seed, h, t)`, so results do not depend on the thread count.
pub fn run_folner_experiment(
    left: &TreeParams,
    right: &TreeParams,
    h_range: std::ops::RangeInclusive<i64>,
    trials: usize,
    seed: u64,
) -> Result<FolnerSeries> {
    if trials == 0 {
        return Err(HoroError::InvalidParams("trials must be at least 1".into()));
    }
    if *h_range.start() < 0 {
        return Err(HoroError::InvalidParams("h must be non-negative".into()));
    }
    let exploratory = !growth_condition_check(left, right, 1e-12).satisfied;
    let mut rows = Vec::new();
    for h in h_range {
        let outcomes: Vec<Outcome> = (0..trials as u64)
            .into_par_iter()
            .map(|t| folner_trial(left, right, h, derive_seed(seed, &[h as u64, t])))
            .collect::<Result<_>>()?;
        let truncated = outcomes
            .iter()
            .filter(|o| matches!(o, Outcome::Truncated))
            .count();
        let mut ratios: Vec<Exact> = outcomes
            .iter()
            .filter_map(|o| match o {
                Outcome::Ratio(r) => Some(*r),
                _ => None,
            })
            .collect();
        if ratios.is_empty() {
            return Err(HoroError::InvalidParams(format!(
                "no surviving trial at h = {h}"
            )));
        }
        ratios.sort();
        let as_f64 = |r: &Exact| r.to_f64().unwrap_or(f64::NAN);
        let median = ratios[quantile_index(ratios.len(), 0.5)];
        rows.push(FolnerStats {
            h,
            trials,
            discarded: trials - ratios.len(),
            truncated,
            median,
            mean: ratios.iter().map(as_f64).sum::<f64>() / ratios.len() as f64,
            q10: as_f64(&ratios[quantile_index(ratios.len(), 0.1)]),
            q90: as_f64(&ratios[quantile_index(ratios.len(), 0.9)]),
            median_scaled: as_f64(&median) * (2 * h + 1) as f64,
        });
    }
    Ok(FolnerSeries {
        left: *left,
        right: *right,
        seed,
        trials,
        exploratory,
        rows,
    })
}

enum Outcome {
    Ratio(Exact),
    Extinct,
    Truncated,
}

fn folner_trial(left: &TreeParams, right: &TreeParams, h: i64, seed: u64) -> Result<Outcome> {
    let draw = |t: &TreeParams, tag: u64| {
        simulate_window_counts(
            t,
            -h,
            (2 * h) as u32,
            derive_seed(seed, &[tag]),
            DEFAULT_COUNT_CAP,
        )
    };
    let l = draw(left, BitSource::LEFT_TAG)?;
    let r = draw(right, BitSource::RIGHT_TAG)?;
    if l.truncated_at.is_some() || r.truncated_at.is_some() {
        return Ok(Outcome::Truncated);
    }
    match folner_ratio(&l.counts, &r.counts, h) {
        Ok(ratio) => Ok(Outcome::Ratio(ratio)),
        Err(HoroError::ZeroVolume { .. }) => Ok(Outcome::Extinct),
        Err(e) => Err(e),
    }
}

/// `BigRational` from a machine ratio, for callers mixing both.
pub fn exact_to_big(r: &Exact) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}
