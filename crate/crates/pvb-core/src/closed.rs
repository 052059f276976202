//! Closed-form accuracy estimators: complete case analysis, the Bayes
//! count correction for verification under MAR, and its regression
//! extension for covariates.

use crate::accuracy::{AccuracyResult, Ci, CiKind, Estimate, Measure, Method};
use crate::data::{Dataset, VerificationTable};
use crate::error::{Error, Result};
use crate::logit::{fit_logit, DesignMatrix};
use crate::quantile::normal_quantile;
use crate::scalar::{s, Scalar};

/// Complete case analysis: accuracy measures from verified subjects only,
/// with binomial Wald intervals.
pub fn cca<S: Scalar>(table: &VerificationTable, alpha: S) -> Result<AccuracyResult<S>> {
    check_margins(table)?;
    let z = normal_quantile(S::one() - alpha * s(0.5))?;
    let (s1, s0) = (s::<S>(table.s1 as f64), s::<S>(table.s0 as f64));
    let (r1, r0) = (s::<S>(table.r1 as f64), s::<S>(table.r0 as f64));

    let mut out = AccuracyResult::points(Method::Cca, [S::zero(); 4], alpha);
    for (m, num, den) in [
        (Measure::Sensitivity, s1, s1 + s0),
        (Measure::Specificity, r0, r1 + r0),
        (Measure::Ppv, s1, s1 + r1),
        (Measure::Npv, r0, s0 + r0),
    ] {
        *out.measure_mut(m) = binomial_estimate(num, den, z);
    }
    Ok(out)
}

/// Bayes-corrected sensitivity and specificity using the test margin of
/// the whole cohort, assuming verification depends on the test result
/// only. Predictive values and their intervals coincide with complete
/// case analysis under that assumption and are reported identically.
pub fn bg<S: Scalar>(table: &VerificationTable, alpha: S) -> Result<AccuracyResult<S>> {
    check_margins(table)?;
    let z = normal_quantile(S::one() - alpha * s(0.5))?;
    let one = S::one();
    let (s1, s0) = (s::<S>(table.s1 as f64), s::<S>(table.s0 as f64));
    let (r1, r0) = (s::<S>(table.r1 as f64), s::<S>(table.r0 as f64));
    let n1 = s::<S>(table.n1() as f64);
    let n0 = s::<S>(table.n0() as f64);
    let n = n1 + n0;

    let p1 = s1 / (s1 + r1);
    let p0 = s0 / (s0 + r0);
    let se = n1 * p1 / (n1 * p1 + n0 * p0);
    let sp = n0 * (one - p0) / (n1 * (one - p1) + n0 * (one - p0));

    let mut out = AccuracyResult::points(Method::Bg, [S::zero(); 4], alpha);
    let shared = n / (n0 * n1);

    out.sensitivity = Estimate::point_only(se);
    if table.s1 > 0 && table.s0 > 0 {
        let var = (se * (one - se)).powi(2)
            * (shared + r1 / (s1 * (s1 + r1)) + r0 / (s0 * (s0 + r0)));
        attach_wald(&mut out.sensitivity, var.sqrt(), z);
    } else {
        out.warnings.push(
            "sensitivity interval omitted: a verified disease cell is empty".into(),
        );
    }

    out.specificity = Estimate::point_only(sp);
    if table.r1 > 0 && table.r0 > 0 {
        let var = (sp * (one - sp)).powi(2)
            * (shared + s1 / (r1 * (s1 + r1)) + s0 / (r0 * (s0 + r0)));
        attach_wald(&mut out.specificity, var.sqrt(), z);
    } else {
        out.warnings.push(
            "specificity interval omitted: a verified disease-free cell is empty".into(),
        );
    }

    out.ppv = binomial_estimate(s1, s1 + r1, z);
    out.npv = binomial_estimate(r0, s0 + r0, z);
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct EbgConfig {
    /// Covariate column names entering the disease model.
    pub covariates: Vec<String>,
    /// Include test-by-covariate interaction terms.
    pub saturated: bool,
}

/// Regression extension of the Bayes correction: fit a disease model on
/// verified subjects, score every subject, and average the predictions.
/// Interval estimation for this method is by bootstrap (see the
/// uncertainty module); the returned estimates carry points only.
pub fn ebg<S: Scalar>(
    data: &Dataset<S>,
    config: &EbgConfig,
    alpha: S,
) -> Result<AccuracyResult<S>> {
    let probs = ebg_probabilities(data, config)?;
    Ok(accuracy_from_probabilities(
        Method::Ebg,
        data,
        &probs,
        alpha,
    ))
}

/// Fitted disease probabilities for every record, from the verified-only
/// disease model. Shared by the point estimator and the bootstrap.
pub(crate) fn ebg_probabilities<S: Scalar>(
    data: &Dataset<S>,
    config: &EbgConfig,
) -> Result<Vec<S>> {
    let cols = data.covariate_indices(&config.covariates)?;
    let width = design_width(cols.len(), config.saturated);

    let mut design = DesignMatrix::new(width);
    let mut y = Vec::new();
    let mut row = vec![S::zero(); width];
    for r in &data.records {
        if let Some(d) = r.disease {
            fill_disease_row(&mut row, r.test, &r.covariates, &cols, config.saturated);
            design.push_row(&row);
            y.push(if d { S::one() } else { S::zero() });
        }
    }
    if y.is_empty() {
        return Err(Error::DegenerateMargin("no verified subjects"));
    }

    let fit = fit_logit(&design, &y, None, None)?;
    Ok(data
        .records
        .iter()
        .map(|r| {
            fill_disease_row(&mut row, r.test, &r.covariates, &cols, config.saturated);
            fit.predict_prob(&row)
        })
        .collect())
}

/// Cohort-level accuracy from per-record disease probabilities, averaging
/// over the whole cohort and applying Bayes' rule at the estimated
/// prevalence for the predictive values.
pub(crate) fn accuracy_from_probabilities<S: Scalar>(
    method: Method,
    data: &Dataset<S>,
    probs: &[S],
    alpha: S,
) -> AccuracyResult<S> {
    let one = S::one();
    let mut sum_p = S::zero();
    let mut sum_p_pos = S::zero();
    let mut sum_q = S::zero();
    let mut sum_q_neg = S::zero();
    for (r, &p) in data.records.iter().zip(probs) {
        sum_p = sum_p + p;
        sum_q = sum_q + (one - p);
        if r.test {
            sum_p_pos = sum_p_pos + p;
        } else {
            sum_q_neg = sum_q_neg + (one - p);
        }
    }
    let se = sum_p_pos / sum_p;
    let sp = sum_q_neg / sum_q;
    let prev = sum_p / (sum_p + sum_q);
    let ppv = prev * se / (prev * se + (one - prev) * (one - sp));
    let npv = (one - prev) * sp / ((one - prev) * sp + prev * (one - se));
    AccuracyResult::points(method, [se, sp, ppv, npv], alpha)
}

pub(crate) fn design_width(n_covariates: usize, saturated: bool) -> usize {
    2 + n_covariates * if saturated { 2 } else { 1 }
}

/// Writes one row of the disease design: intercept, test, covariates and,
/// when saturated, test-by-covariate products.
pub(crate) fn fill_disease_row<S: Scalar>(
    row: &mut [S],
    test: bool,
    covariates: &[S],
    cols: &[usize],
    saturated: bool,
) {
    let t = if test { S::one() } else { S::zero() };
    row[0] = S::one();
    row[1] = t;
    for (k, &c) in cols.iter().enumerate() {
        row[2 + k] = covariates[c];
        if saturated {
            row[2 + cols.len() + k] = t * covariates[c];
        }
    }
}

fn binomial_estimate<S: Scalar>(num: S, den: S, z: S) -> Estimate<S> {
    let p = num / den;
    let se = (p * (S::one() - p) / den).sqrt();
    let mut e = Estimate::point_only(p);
    attach_wald(&mut e, se, z);
    e
}

fn attach_wald<S: Scalar>(e: &mut Estimate<S>, se: S, z: S) {
    e.se = Some(se);
    e.ci = Some(Ci::new(e.point - z * se, e.point + z * se, CiKind::Wald));
}

fn check_margins(t: &VerificationTable) -> Result<()> {
    if t.s1 + t.s0 == 0 {
        return Err(Error::DegenerateMargin("no verified diseased subjects"));
    }
    if t.r1 + t.r0 == 0 {
        return Err(Error::DegenerateMargin("no verified disease-free subjects"));
    }
    if t.s1 + t.r1 == 0 {
        return Err(Error::DegenerateMargin("no verified test-positive subjects"));
    }
    if t.s0 + t.r0 == 0 {
        return Err(Error::DegenerateMargin("no verified test-negative subjects"));
    }
    Ok(())
}
