//! Multiple imputation of missing disease status with Rubin pooling.
//!
//! Each imputation fits the disease model on verified records, perturbs the
//! fitted coefficients by a draw from their asymptotic posterior, and fills
//! every missing status with an independent Bernoulli draw. Completed
//! datasets are summarized by complete case accuracy, and the imputation
//! copies are combined into one estimate with within plus between variance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::accuracy::{AccuracyResult, Ci, CiKind, Estimate, Measure, Method};
use crate::closed::{cca, design_width, fill_disease_row};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::logit::{fit_logit, DesignMatrix};
use crate::quantile::{normal_quantile, t_quantile};
use crate::scalar::{s, to_f64, Scalar};

const REDRAW_CAP: usize = 100;

#[derive(Debug, Clone)]
pub struct MiConfig<S> {
    /// Number of imputations; `None` derives it from the missing share via
    /// [`default_m`].
    pub m: Option<usize>,
    pub seed: u64,
    pub covariates: Vec<String>,
    pub alpha: S,
}

impl<S: Scalar> Default for MiConfig<S> {
    fn default() -> Self {
        MiConfig {
            m: None,
            seed: 0,
            covariates: Vec::new(),
            alpha: crate::accuracy::default_alpha(),
        }
    }
}

/// Pooled components for one accuracy measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiMeasure<S> {
    /// Mean of the per-imputation estimates.
    pub qbar: S,
    /// Mean of the per-imputation sampling variances.
    pub ubar: S,
    /// Between-imputation variance of the estimates.
    pub b: S,
    /// `ubar + (1 + 1/m) * b`, stored exactly as computed.
    pub t_total: S,
    /// Reference t degrees of freedom; `None` stands for infinity, used
    /// whenever the between component is zero.
    pub df: Option<S>,
    pub ci: Ci<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiPooled<S> {
    pub m: usize,
    /// One entry per element of `Measure::ALL`.
    pub measures: [MiMeasure<S>; 4],
    /// Per-imputation estimate trace, one vector per element of
    /// `Measure::ALL`.
    pub estimates: [Vec<S>; 4],
}

/// Number of imputations matching the percentage of incomplete records,
/// never below the minimum of two that pooling needs.
pub fn default_m<S: Scalar>(data: &Dataset<S>) -> usize {
    (data.missing_percentage().ceil() as usize).max(2)
}

/// Fills every missing disease status from a logistic model of disease
/// given test result and covariates fitted on the verified records. The
/// fitted coefficients are perturbed by one draw from their asymptotic
/// normal posterior so that repeated calls propagate estimation
/// uncertainty. Verified records pass through untouched, and a dataset
/// with nothing missing is returned as is without consuming randomness.
pub fn impute_once<S: Scalar, R: Rng>(
    data: &Dataset<S>,
    covariates: &[String],
    rng: &mut R,
) -> Result<Dataset<S>> {
    if data.records.iter().all(|r| r.verified()) {
        return Ok(data.clone());
    }
    let cols = data.covariate_indices(covariates)?;
    let width = design_width(cols.len(), false);

    let mut design = DesignMatrix::with_capacity(width, data.verified_count());
    let mut y = Vec::with_capacity(data.verified_count());
    let mut row = vec![S::zero(); width];
    for rec in &data.records {
        if let Some(d) = rec.disease {
            fill_disease_row(&mut row, rec.test, &rec.covariates, &cols, false);
            design.push_row(&row);
            y.push(if d { S::one() } else { S::zero() });
        }
    }
    let fit = fit_logit(&design, &y, None, None)?;

    let l = cholesky(&fit.fisher)?;
    let z: Vec<S> = (0..width)
        .map(|_| crate::quantile::standard_normal(rng))
        .collect();
    let shift = l.solve_transpose(&z);
    let beta: Vec<S> = fit
        .coefficients
        .iter()
        .zip(&shift)
        .map(|(&b, &d)| b + d)
        .collect();

    let mut records = data.records.clone();
    for rec in &mut records {
        if rec.disease.is_none() {
            fill_disease_row(&mut row, rec.test, &rec.covariates, &cols, false);
            let p = crate::logit::sigmoid_clamped(crate::logit::dot(&row, &beta));
            let u: f64 = rng.random();
            rec.disease = Some(u < to_f64(p));
        }
    }
    Ok(Dataset {
        records,
        covariate_names: data.covariate_names.clone(),
    })
}

/// Multiple-imputation accuracy: `m` completed datasets, complete case
/// estimates on each, and Rubin pooling of points and variances. A
/// completed dataset that loses a margin needed by the complete case
/// formulas is redrawn from the same stream up to a retry cap.
pub fn acc_mi<S: Scalar>(
    data: &Dataset<S>,
    config: &MiConfig<S>,
) -> Result<(AccuracyResult<S>, MiPooled<S>)> {
    let m = config.m.unwrap_or_else(|| default_m(data));
    if m < 2 {
        return Err(Error::InvalidConfig("at least 2 imputations are required"));
    }
    if !(config.alpha > S::zero() && config.alpha < S::one()) {
        return Err(Error::InvalidConfig("alpha must lie in (0, 1)"));
    }

    let per_slot: Vec<Result<([S; 4], [S; 4])>> = (0..m)
        .into_par_iter()
        .map(|slot| impute_and_summarize(data, config, slot))
        .collect();

    let mut estimates: [Vec<S>; 4] = Default::default();
    let mut variances: [Vec<S>; 4] = Default::default();
    for entry in per_slot {
        let (points, vars) = entry?;
        for k in 0..4 {
            estimates[k].push(points[k]);
            variances[k].push(vars[k]);
        }
    }

    let mf = s::<S>(m as f64);
    let inflate = S::one() + S::one() / mf;
    let mut measures = Vec::with_capacity(4);
    for k in 0..4 {
        let qbar = mean(&estimates[k]);
        let ubar = mean(&variances[k]);
        let b = sample_variance(&estimates[k], qbar);
        let t_total = ubar + inflate * b;
        let (df, q) = if b == S::zero() {
            (None, normal_quantile(S::one() - config.alpha * s(0.5))?)
        } else {
            let ratio = S::one() + ubar / (inflate * b);
            let df = (mf - S::one()) * ratio * ratio;
            // Past this point the reference t distribution is numerically
            // indistinguishable from normal.
            let q = if df > s(1e8) {
                normal_quantile(S::one() - config.alpha * s(0.5))?
            } else {
                t_quantile(S::one() - config.alpha * s(0.5), df)?
            };
            (Some(df), q)
        };
        let half = q * t_total.sqrt();
        measures.push(MiMeasure {
            qbar,
            ubar,
            b,
            t_total,
            df,
            ci: Ci::new(qbar - half, qbar + half, CiKind::Rubin),
        });
    }
    let measures: [MiMeasure<S>; 4] = measures.try_into().expect("four measures");

    let mut accuracy = AccuracyResult::points(
        Method::Mi,
        [measures[0].qbar, measures[1].qbar, measures[2].qbar, measures[3].qbar],
        config.alpha,
    );
    for (k, &meas) in Measure::ALL.iter().enumerate() {
        let est: &mut Estimate<S> = accuracy.measure_mut(meas);
        est.se = Some(measures[k].t_total.sqrt());
        est.ci = Some(measures[k].ci);
    }

    Ok((
        accuracy,
        MiPooled {
            m,
            measures,
            estimates,
        },
    ))
}

fn impute_and_summarize<S: Scalar>(
    data: &Dataset<S>,
    config: &MiConfig<S>,
    slot: usize,
) -> Result<([S; 4], [S; 4])> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1 + slot as u64);
    for _ in 0..REDRAW_CAP {
        let completed = impute_once(data, &config.covariates, &mut rng)?;
        match cca(&completed.cross_table(), config.alpha) {
            Ok(acc) => {
                let points = Measure::ALL.map(|meas| acc.point(meas));
                let vars = Measure::ALL.map(|meas| {
                    let se = acc.measure(meas).se.expect("complete case carries se");
                    se * se
                });
                return Ok((points, vars));
            }
            Err(Error::DegenerateMargin(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateImputation {
        slot,
        retries: REDRAW_CAP,
        reason: "every completed dataset lost a margin the accuracy formulas need",
    })
}

fn mean<S: Scalar>(values: &[S]) -> S {
    if values.iter().all(|&v| v == values[0]) {
        return values[0];
    }
    values.iter().copied().sum::<S>() / s(values.len() as f64)
}

fn sample_variance<S: Scalar>(values: &[S], mean: S) -> S {
    if values.iter().all(|&v| v == values[0]) {
        return S::zero();
    }
    let ss = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>();
    ss / s(values.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;
    use proptest::prelude::*;

    fn spect() -> Dataset<f64> {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/spect_cad.csv");
        Dataset::load_csv(path).unwrap()
    }

    fn rec(test: bool, disease: Option<bool>) -> Record<f64> {
        Record {
            test,
            disease,
            covariates: vec![],
        }
    }

    #[test]
    fn complete_data_passes_through_unchanged() {
        let records = vec![
            rec(true, Some(true)),
            rec(true, Some(false)),
            rec(false, Some(true)),
            rec(false, Some(false)),
        ];
        let data = Dataset::new(records, vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let out = impute_once(&data, &[], &mut rng).unwrap();
        assert_eq!(out, data);
        let mut rng2 = ChaCha8Rng::seed_from_u64(1234);
        assert_eq!(impute_once(&data, &[], &mut rng2).unwrap(), data);
    }

    #[test]
    fn one_class_verified_subset_is_rejected() {
        let records = vec![
            rec(true, Some(true)),
            rec(false, Some(true)),
            rec(true, Some(true)),
            rec(true, None),
            rec(false, None),
        ];
        let data = Dataset::new(records, vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(
            impute_once(&data, &[], &mut rng),
            Err(Error::SeparationDetected)
        ));
    }

    #[test]
    fn long_run_imputed_prevalence_matches_the_verified_model() {
        // Among verified positives the disease share is 195/427; the
        // imputation model reproduces it on unverified positives on
        // average. Oracle: Monte Carlo mean of the model itself.
        let data = spect();
        let reps = 200u64;
        let mut total = 0.0f64;
        for r in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            rng.set_stream(r);
            let completed = impute_once(&data, &[], &mut rng).unwrap();
            let mut imputed_pos = 0u64;
            let mut diseased = 0u64;
            for (orig, filled) in data.records.iter().zip(&completed.records) {
                if orig.disease.is_none() && orig.test {
                    imputed_pos += 1;
                    if filled.disease == Some(true) {
                        diseased += 1;
                    }
                }
            }
            assert_eq!(imputed_pos, 996);
            total += diseased as f64 / imputed_pos as f64;
        }
        let mean = total / reps as f64;
        assert!(
            (mean - 195.0 / 427.0).abs() < 0.02,
            "long-run imputed prevalence {mean}"
        );
    }

    #[test]
    fn pooled_estimates_match_reference_analysis_window() {
        let data = spect();
        let config = MiConfig {
            m: Some(85),
            seed: 20260822,
            ..MiConfig::default()
        };
        let (acc, pooled) = acc_mi(&data, &config).unwrap();
        let expected = [0.8026, 0.5867, 0.4574, 0.8685];
        for (k, &m) in Measure::ALL.iter().enumerate() {
            assert!(
                (acc.point(m) - expected[k]).abs() < 0.02,
                "{m}: {} vs {}",
                acc.point(m),
                expected[k]
            );
            let meas = pooled.measures[k];
            assert_eq!(meas.t_total, meas.ubar + (1.0 + 1.0 / 85.0) * meas.b);
            assert!(meas.df.unwrap() > 0.0);
            assert!(meas.ci.lower < acc.point(m) && acc.point(m) < meas.ci.upper);
        }
        assert_eq!(pooled.estimates[0].len(), 85);
    }

    #[test]
    fn covariate_model_shifts_the_pooled_points() {
        let data = spect();
        let config = MiConfig {
            m: Some(85),
            seed: 4,
            covariates: vec!["X3".into()],
            ..MiConfig::default()
        };
        let (acc, _) = acc_mi(&data, &config).unwrap();
        let expected = [0.8176, 0.5864, 0.4456, 0.8853];
        for (k, &m) in Measure::ALL.iter().enumerate() {
            assert!(
                (acc.point(m) - expected[k]).abs() < 0.02,
                "{m}: {} vs {}",
                acc.point(m),
                expected[k]
            );
        }
    }

    #[test]
    fn fully_verified_data_collapses_to_complete_case() {
        let mut records = Vec::new();
        for _ in 0..12 {
            records.push(rec(true, Some(true)));
        }
        for _ in 0..4 {
            records.push(rec(false, Some(true)));
        }
        for _ in 0..6 {
            records.push(rec(true, Some(false)));
        }
        for _ in 0..9 {
            records.push(rec(false, Some(false)));
        }
        let data = Dataset::new(records, vec![]).unwrap();
        let config = MiConfig {
            m: Some(5),
            seed: 1,
            ..MiConfig::default()
        };
        let (acc, pooled) = acc_mi(&data, &config).unwrap();
        let reference = cca(&data.cross_table(), 0.05).unwrap();
        for (k, &m) in Measure::ALL.iter().enumerate() {
            assert_eq!(acc.point(m), reference.point(m), "{m} point drifted");
            let meas = pooled.measures[k];
            assert_eq!(meas.b, 0.0);
            assert!(meas.df.is_none());
            let want = reference.measure(m);
            approx::assert_relative_eq!(
                acc.measure(m).se.unwrap(),
                want.se.unwrap(),
                max_relative = 1e-14
            );
            approx::assert_relative_eq!(
                meas.ci.lower,
                want.ci.unwrap().lower,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn imputation_counts_track_the_missing_share() {
        assert_eq!(default_m(&spect()), 83);
        let full = Dataset::new(
            vec![rec(true, Some(true)), rec(false, Some(false))],
            vec![],
        )
        .unwrap();
        assert_eq!(default_m(&full), 2);
        let half = Dataset::new(
            vec![
                rec(true, Some(true)),
                rec(false, Some(false)),
                rec(true, None),
                rec(false, None),
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(default_m(&half), 50);
    }

    #[test]
    fn identical_seed_is_identical_across_thread_counts() {
        let data = spect();
        let config = MiConfig {
            m: Some(12),
            seed: 31,
            ..MiConfig::default()
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| acc_mi(&data, &config).unwrap())
        };
        let (acc_a, pooled_a) = run(1);
        let (acc_b, pooled_b) = run(4);
        assert_eq!(pooled_a, pooled_b);
        for m in Measure::ALL {
            assert_eq!(acc_a.point(m), acc_b.point(m));
        }
    }

    #[test]
    fn pooled_sensitivity_stabilizes_as_m_grows() {
        let data = spect();
        let run = |m: usize| {
            let config = MiConfig {
                m: Some(m),
                seed: 17,
                ..MiConfig::default()
            };
            acc_mi(&data, &config).unwrap().0.point(Measure::Sensitivity)
        };
        let half = run(100);
        let full = run(200);
        assert!(
            (half - full).abs() < 0.01,
            "m=100 gave {half}, m=200 gave {full}"
        );
    }

    #[test]
    fn impossible_margins_exhaust_the_retry_cap() {
        // No negative test results anywhere, so every completion misses
        // the margin behind the negative predictive value no matter what
        // is drawn. With unverified records present the constant test
        // column would already fail the imputation fit, so the fixture is
        // fully verified and passes through imputation untouched.
        let records = vec![
            rec(true, Some(true)),
            rec(true, Some(true)),
            rec(true, Some(false)),
            rec(true, Some(false)),
        ];
        let data = Dataset::new(records, vec![]).unwrap();
        let config = MiConfig {
            m: Some(3),
            seed: 2,
            ..MiConfig::default()
        };
        match acc_mi(&data, &config) {
            Err(Error::DegenerateImputation { slot, retries, .. }) => {
                assert_eq!(slot, 0);
                assert_eq!(retries, REDRAW_CAP);
            }
            other => panic!("expected exhausted retries, got {other:?}"),
        }
    }

    #[test]
    fn too_few_imputations_are_rejected() {
        let data = spect();
        let config = MiConfig {
            m: Some(1),
            seed: 0,
            ..MiConfig::default()
        };
        assert!(matches!(
            acc_mi(&data, &config),
            Err(Error::InvalidConfig(_))
        ));
    }

    proptest! {
        #[test]
        fn completion_preserves_everything_except_missing_status(
            tests in proptest::collection::vec(any::<bool>(), 6..30),
            missing_mask in proptest::collection::vec(any::<bool>(), 6..30),
            seed in any::<u64>(),
        ) {
            let n = tests.len().min(missing_mask.len());
            let mut records = vec![
                rec(true, Some(true)),
                rec(false, Some(true)),
                rec(true, Some(false)),
                rec(false, Some(false)),
            ];
            for i in 0..n {
                let disease = if missing_mask[i] {
                    None
                } else {
                    Some(i % 3 == 0)
                };
                records.push(rec(tests[i], disease));
            }
            let data = Dataset::new(records, vec![]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match impute_once(&data, &[], &mut rng) {
                Ok(completed) => {
                    prop_assert_eq!(completed.n(), data.n());
                    for (orig, comp) in data.records.iter().zip(&completed.records) {
                        prop_assert_eq!(orig.test, comp.test);
                        prop_assert!(comp.disease.is_some());
                        if orig.disease.is_some() {
                            prop_assert_eq!(orig.disease, comp.disease);
                        }
                    }
                }
                Err(Error::SeparationDetected) => {}
                Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e:?}"))),
            }
        }
    }
}
