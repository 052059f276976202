//! Bootstrap standard errors and accelerated bias-corrected intervals.
//!
//! The resampling unit is the verified subset: each replicate redraws the
//! verified records with replacement and keeps the unverified block fixed,
//! because the estimators refit their models on verified subjects and only
//! score the rest. A whole-dataset mode exists for sensitivity checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::accuracy::{AccuracyResult, Ci, CiKind, Measure};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::quantile::{normal_cdf, normal_quantile};
use crate::scalar::{s, to_f64, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BootCiType {
    Bca,
    Percentile,
}

#[derive(Debug, Clone)]
pub struct BootConfig<S> {
    pub replicates: usize,
    pub seed: u64,
    pub ci_type: BootCiType,
    pub alpha: S,
    /// Replicates may fail (separation, empty margins); they are dropped
    /// and counted, and the run errors past this fraction.
    pub max_failed_fraction: f64,
    /// Resample the whole cohort instead of the verified block only.
    pub resample_all: bool,
}

impl<S: Scalar> Default for BootConfig<S> {
    fn default() -> Self {
        BootConfig {
            replicates: 999,
            seed: 0,
            ci_type: BootCiType::Bca,
            alpha: s(0.05),
            max_failed_fraction: 0.05,
            resample_all: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BootResult<S> {
    /// Point estimates from the original data with bootstrap SE and CI
    /// attached to every measure.
    pub accuracy: AccuracyResult<S>,
    /// Surviving replicate estimates in replicate order, one vector per
    /// entry of `Measure::ALL`.
    pub replicates: [Vec<S>; 4],
    pub failed: usize,
}

/// Reruns `estimator` over bootstrap resamples of `data` and attaches
/// standard errors and intervals to its point estimates.
pub fn bootstrap_accuracy<S, F>(
    data: &Dataset<S>,
    estimator: F,
    config: &BootConfig<S>,
) -> Result<BootResult<S>>
where
    S: Scalar,
    F: Fn(&Dataset<S>) -> Result<AccuracyResult<S>> + Sync,
{
    if config.replicates < 2 {
        return Err(Error::InvalidConfig("bootstrap needs at least 2 replicates"));
    }
    if !(config.alpha > S::zero() && config.alpha < S::one()) {
        return Err(Error::InvalidConfig("alpha must lie in (0, 1)"));
    }

    let mut accuracy = estimator(data)?;
    let points: Vec<S> = Measure::ALL.iter().map(|&m| accuracy.point(m)).collect();

    let verified_idx: Vec<usize> = (0..data.n())
        .filter(|&i| data.records[i].verified())
        .collect();
    if !config.resample_all && verified_idx.is_empty() {
        return Err(Error::DegenerateMargin("no verified subjects"));
    }

    // Replicates are independent; collecting by index and folding
    // sequentially keeps every floating-point sum schedule-free.
    let raw: Vec<Option<[S; 4]>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let resample = resample(data, &verified_idx, config, r as u64);
            match estimator(&resample) {
                Ok(a) => {
                    let vals = Measure::ALL.map(|m| a.point(m));
                    if vals.iter().all(|v| v.is_finite()) {
                        Some(vals)
                    } else {
                        None
                    }
                }
                Err(_) => None,
            }
        })
        .collect();

    let mut replicates: [Vec<S>; 4] = Default::default();
    let mut failed = 0usize;
    for entry in raw {
        match entry {
            Some(vals) => {
                for (k, v) in vals.into_iter().enumerate() {
                    replicates[k].push(v);
                }
            }
            None => failed += 1,
        }
    }
    if failed as f64 > config.max_failed_fraction * config.replicates as f64 {
        return Err(Error::TooManyFailedReplicates {
            failed,
            total: config.replicates,
            max_failed_fraction: config.max_failed_fraction,
        });
    }
    if failed > 0 {
        accuracy
            .warnings
            .push(format!("{failed} bootstrap replicates failed and were dropped"));
    }

    let jackknife: Option<Vec<[S; 4]>> = match config.ci_type {
        BootCiType::Bca => Some(jackknife_estimates(
            data,
            &estimator,
            &verified_idx,
            &mut accuracy.warnings,
        )),
        BootCiType::Percentile => None,
    };

    for (k, &m) in Measure::ALL.iter().enumerate() {
        let (ci, note) = match &jackknife {
            Some(jk) => {
                let loo: Vec<S> = jk.iter().map(|v| v[k]).collect();
                bca_interval(&replicates[k], points[k], &loo, config.alpha)?
            }
            None => (
                percentile_interval(&replicates[k], config.alpha)?,
                None,
            ),
        };
        if let Some(note) = note {
            accuracy.warnings.push(format!("{m}: {note}"));
        }
        let est = accuracy.measure_mut(m);
        est.se = Some(sample_sd(&replicates[k]));
        est.ci = Some(ci);
    }

    Ok(BootResult {
        accuracy,
        replicates,
        failed,
    })
}

fn resample<S: Scalar>(
    data: &Dataset<S>,
    verified_idx: &[usize],
    config: &BootConfig<S>,
    replicate: u64,
) -> Dataset<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1 + replicate);
    let mut records = Vec::with_capacity(data.n());
    if config.resample_all {
        for _ in 0..data.n() {
            records.push(data.records[rng.random_range(0..data.n())].clone());
        }
    } else {
        let nv = verified_idx.len();
        for _ in 0..nv {
            records.push(data.records[verified_idx[rng.random_range(0..nv)]].clone());
        }
        records.extend(
            data.records
                .iter()
                .filter(|r| !r.verified())
                .cloned(),
        );
    }
    Dataset {
        records,
        covariate_names: data.covariate_names.clone(),
    }
}

fn jackknife_estimates<S, F>(
    data: &Dataset<S>,
    estimator: &F,
    verified_idx: &[usize],
    warnings: &mut Vec<String>,
) -> Vec<[S; 4]>
where
    S: Scalar,
    F: Fn(&Dataset<S>) -> Result<AccuracyResult<S>> + Sync,
{
    let raw: Vec<Option<[S; 4]>> = verified_idx
        .par_iter()
        .map(|&drop| {
            let mut records = Vec::with_capacity(data.n() - 1);
            for (i, r) in data.records.iter().enumerate() {
                if i != drop {
                    records.push(r.clone());
                }
            }
            let reduced = Dataset {
                records,
                covariate_names: data.covariate_names.clone(),
            };
            estimator(&reduced)
                .ok()
                .map(|a| Measure::ALL.map(|m| a.point(m)))
        })
        .collect();
    let mut out = Vec::with_capacity(raw.len());
    let mut failed = 0usize;
    for entry in raw {
        match entry {
            Some(v) => out.push(v),
            None => failed += 1,
        }
    }
    if failed > 0 {
        warnings.push(format!(
            "{failed} jackknife refits failed; acceleration uses the rest"
        ));
    }
    out
}

/// Accelerated bias-corrected interval. Falls back to the plain percentile
/// interval (with an explanatory note) when the replicate distribution is
/// degenerate: all mass on one value, the point estimate outside the
/// replicate range, or an acceleration denominator of zero paired with an
/// unusable correction.
pub fn bca_interval<S: Scalar>(
    replicates: &[S],
    point: S,
    jackknife: &[S],
    alpha: S,
) -> Result<(Ci<S>, Option<&'static str>)> {
    let sorted = sorted_copy(replicates)?;
    let r = sorted.len();

    if sorted[0] == sorted[r - 1] {
        let v = sorted[0];
        return Ok((
            Ci::new(v, v, CiKind::Percentile),
            Some("all bootstrap replicates identical, degenerate interval"),
        ));
    }

    let below = replicates.iter().filter(|&&v| v < point).count();
    let at = replicates.iter().filter(|&&v| v == point).count();
    let frac = (below as f64 + 0.5 * at as f64) / r as f64;
    if frac <= 0.0 || frac >= 1.0 {
        let ci = percentile_of_sorted(&sorted, alpha);
        return Ok((
            ci,
            Some("point estimate outside the replicate range, percentile interval used"),
        ));
    }
    let z0 = s::<S>(crate::quantile::normal_quantile_f64(frac));

    let accel = acceleration(jackknife);

    let one = S::one();
    let half = alpha * s(0.5);
    let mut adjusted = [S::zero(); 2];
    for (slot, q) in [half, one - half].into_iter().enumerate() {
        let zq = normal_quantile(q)?;
        let num = z0 + zq;
        let denom = one - accel * num;
        if denom <= S::zero() {
            let ci = percentile_of_sorted(&sorted, alpha);
            return Ok((
                ci,
                Some("acceleration correction degenerate, percentile interval used"),
            ));
        }
        adjusted[slot] = normal_cdf(z0 + num / denom);
    }

    let lo = hazen(&sorted, adjusted[0]);
    let hi = hazen(&sorted, adjusted[1]);
    Ok((Ci::new(lo, hi, CiKind::Bca), None))
}

/// Plain percentile interval at level `1 - alpha`.
pub fn percentile_interval<S: Scalar>(replicates: &[S], alpha: S) -> Result<Ci<S>> {
    let sorted = sorted_copy(replicates)?;
    Ok(percentile_of_sorted(&sorted, alpha))
}

fn percentile_of_sorted<S: Scalar>(sorted: &[S], alpha: S) -> Ci<S> {
    let half = alpha * s(0.5);
    Ci::new(
        hazen(sorted, half),
        hazen(sorted, S::one() - half),
        CiKind::Percentile,
    )
}

fn acceleration<S: Scalar>(jackknife: &[S]) -> S {
    if jackknife.is_empty() {
        return S::zero();
    }
    let n = s::<S>(jackknife.len() as f64);
    let mean = jackknife.iter().copied().sum::<S>() / n;
    let mut sq = S::zero();
    let mut cube = S::zero();
    for &v in jackknife {
        let d = mean - v;
        sq = sq + d * d;
        cube = cube + d * d * d;
    }
    if sq == S::zero() {
        return S::zero();
    }
    cube / (s::<S>(6.0) * sq.powf(s(1.5)))
}

/// Quantile of a sorted sample at plotting position q·n + 1/2 with linear
/// interpolation, clamped to the observed range.
fn hazen<S: Scalar>(sorted: &[S], q: S) -> S {
    let n = sorted.len();
    let pos = to_f64(q) * n as f64 + 0.5;
    if pos <= 1.0 {
        return sorted[0];
    }
    if pos >= n as f64 {
        return sorted[n - 1];
    }
    let idx = pos.floor();
    let frac = s::<S>(pos - idx);
    let i = idx as usize - 1;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

fn sorted_copy<S: Scalar>(values: &[S]) -> Result<Vec<S>> {
    if values.len() < 2 {
        return Err(Error::InvalidConfig(
            "interval needs at least 2 replicate values",
        ));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("replicates must not be NaN"));
    Ok(v)
}

fn sample_sd<S: Scalar>(values: &[S]) -> S {
    let n = values.len();
    if values.iter().all(|&v| v == values[0]) {
        return S::zero();
    }
    let nf = s::<S>(n as f64);
    let mean = values.iter().copied().sum::<S>() / nf;
    let ss = values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<S>();
    (ss / (nf - S::one())).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accuracy::Method;
    use crate::closed::{ebg, EbgConfig};
    use crate::data::Record;

    fn toy_data(diseased: usize, clean: usize, unverified: usize) -> Dataset<f64> {
        let mut records = Vec::new();
        for i in 0..diseased {
            records.push(Record {
                test: i % 4 != 0,
                disease: Some(true),
                covariates: vec![],
            });
        }
        for i in 0..clean {
            records.push(Record {
                test: i % 3 == 0,
                disease: Some(false),
                covariates: vec![],
            });
        }
        for i in 0..unverified {
            records.push(Record {
                test: i % 2 == 0,
                disease: None,
                covariates: vec![],
            });
        }
        Dataset::new(records, vec![]).unwrap()
    }

    fn constant_estimator(_: &Dataset<f64>) -> Result<AccuracyResult<f64>> {
        Ok(AccuracyResult::points(
            Method::Ebg,
            [0.7, 0.6, 0.5, 0.4],
            0.05,
        ))
    }

    #[test]
    fn constant_estimator_gives_zero_se_and_point_interval() {
        let data = toy_data(20, 20, 10);
        let config = BootConfig {
            replicates: 50,
            seed: 7,
            ..BootConfig::default()
        };
        let r = bootstrap_accuracy(&data, constant_estimator, &config).unwrap();
        let se = r.accuracy.sensitivity;
        assert_eq!(se.se, Some(0.0));
        let ci = se.ci.unwrap();
        assert_eq!((ci.lower, ci.upper), (0.7, 0.7));
        assert_eq!(ci.kind, CiKind::Percentile);
        assert!(!r.accuracy.warnings.is_empty());
    }

    #[test]
    fn order_statistic_positions_match_the_convention() {
        // 1..=1000 with a symmetric point and flat jackknife: both BCa
        // corrections vanish and the endpoints sit at positions 25.5 and
        // 975.5 exactly.
        let reps: Vec<f64> = (1..=1000).map(|v| v as f64).collect();
        let jk = vec![1.0; 30];
        let (ci, note) = bca_interval(&reps, 500.5, &jk, 0.05).unwrap();
        assert!(note.is_none());
        assert!((ci.lower - 25.5).abs() < 1e-9, "lower {}", ci.lower);
        assert!((ci.upper - 975.5).abs() < 1e-9, "upper {}", ci.upper);
        assert_eq!(ci.kind, CiKind::Bca);
    }

    #[test]
    fn symmetric_replicates_make_bca_equal_percentile() {
        let mut reps = Vec::new();
        for i in 1..=400 {
            reps.push(10.0 + i as f64 * 0.01);
            reps.push(10.0 - i as f64 * 0.01);
        }
        let jk = vec![2.5; 40];
        let (bca, _) = bca_interval(&reps, 10.0, &jk, 0.1).unwrap();
        let pct = percentile_interval(&reps, 0.1).unwrap();
        assert!((bca.lower - pct.lower).abs() < 1e-12);
        assert!((bca.upper - pct.upper).abs() < 1e-12);
    }

    #[test]
    fn point_outside_replicate_range_falls_back_flagged() {
        let reps: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let jk = vec![1.0, 2.0, 3.0];
        let (ci, note) = bca_interval(&reps, 500.0, &jk, 0.05).unwrap();
        assert_eq!(ci.kind, CiKind::Percentile);
        assert!(note.unwrap().contains("outside"));
    }

    #[test]
    fn flat_jackknife_means_zero_acceleration() {
        assert_eq!(acceleration(&[3.0f64; 25]), 0.0);
        assert_eq!(acceleration::<f64>(&[]), 0.0);
        let skewed = [1.0f64, 1.0, 1.0, 10.0];
        assert!(acceleration(&skewed) != 0.0);
    }

    #[test]
    fn intervals_widen_as_alpha_shrinks() {
        let reps: Vec<f64> = (0..500).map(|v| (v as f64 * 0.37).sin()).collect();
        let wide = percentile_interval(&reps, 0.01).unwrap();
        let narrow = percentile_interval(&reps, 0.2).unwrap();
        assert!(wide.lower <= narrow.lower);
        assert!(wide.upper >= narrow.upper);
    }

    #[test]
    fn failure_ceiling_is_enforced() {
        // A single diseased verified record: resamples frequently lose the
        // disease margin entirely and the estimator errors.
        let data = toy_data(1, 8, 4);
        let flaky = |d: &Dataset<f64>| crate::closed::cca(&d.cross_table(), 0.05);
        let config = BootConfig {
            replicates: 200,
            seed: 11,
            ..BootConfig::default()
        };
        match bootstrap_accuracy(&data, flaky, &config) {
            Err(Error::TooManyFailedReplicates { failed, total, .. }) => {
                assert_eq!(total, 200);
                assert!(failed > 10, "expected many failures, saw {failed}");
            }
            other => panic!("expected failure ceiling, got {other:?}"),
        }
        let lax = BootConfig {
            replicates: 200,
            seed: 11,
            max_failed_fraction: 0.9,
            ..BootConfig::default()
        };
        let r = bootstrap_accuracy(&data, flaky, &lax).unwrap();
        assert!(r.failed > 10);
        assert_eq!(r.replicates[0].len(), 200 - r.failed);
    }

    #[test]
    fn identical_seed_is_identical_across_thread_counts() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/spect_cad.csv");
        let data: Dataset<f64> = Dataset::load_csv(path).unwrap();
        let config = BootConfig {
            replicates: 25,
            seed: 42,
            ..BootConfig::default()
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                bootstrap_accuracy(
                    &data,
                    |d| ebg(d, &EbgConfig::default(), 0.05),
                    &config,
                )
                .unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        for m in Measure::ALL {
            let (ea, eb) = (a.accuracy.measure(m), b.accuracy.measure(m));
            assert_eq!(ea.se, eb.se, "{m} se differs across thread counts");
            assert_eq!(
                ea.ci.unwrap().lower,
                eb.ci.unwrap().lower,
                "{m} ci differs"
            );
        }
        assert_eq!(a.replicates, b.replicates);
    }

    #[test]
    fn whole_dataset_mode_resamples_everything() {
        let data = toy_data(30, 30, 40);
        let config = BootConfig {
            replicates: 30,
            seed: 3,
            resample_all: true,
            ci_type: BootCiType::Percentile,
            ..BootConfig::default()
        };
        let r = bootstrap_accuracy(
            &data,
            |d| crate::closed::cca(&d.cross_table(), 0.05),
            &config,
        )
        .unwrap();
        let ci = r.accuracy.sensitivity.ci.unwrap();
        assert!(ci.lower <= ci.upper);
        assert!(r.accuracy.sensitivity.se.unwrap() > 0.0);
    }

    #[test]
    fn config_invariants_are_checked() {
        let data = toy_data(10, 10, 5);
        let bad_r = BootConfig::<f64> {
            replicates: 1,
            ..BootConfig::default()
        };
        assert!(matches!(
            bootstrap_accuracy(&data, constant_estimator, &bad_r),
            Err(Error::InvalidConfig(_))
        ));
        let bad_alpha = BootConfig {
            alpha: 1.5,
            ..BootConfig::default()
        };
        assert!(matches!(
            bootstrap_accuracy(&data, constant_estimator, &bad_alpha),
            Err(Error::InvalidConfig(_))
        ));
    }
}
