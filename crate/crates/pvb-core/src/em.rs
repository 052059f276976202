//! Likelihood estimation by expectation maximization for verification
//! that may depend on the unobserved disease status.
//!
//! Unverified records are double stacked, once with disease forced to
//! absent and once to present, and carry fractional weights. Each cycle
//! re-weights the stacks from the current model (expectation) and refits
//! three weighted logistic models (maximization): disease given
//! covariates, test given disease and covariates, and verification given
//! test, covariates, and, in the selective missingness variant, disease.

use serde::Serialize;

use crate::accuracy::{AccuracyResult, Method};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::logit::{fit_logit_with, DesignMatrix, SeparationPolicy};
use crate::scalar::{s, Scalar};
use crate::uncertainty::{bootstrap_accuracy, BootConfig};

#[derive(Debug, Clone)]
pub struct EmConfig<S> {
    /// Covariates entering the disease and test models.
    pub covariates: Vec<String>,
    /// Covariates entering the verification model; `None` reuses
    /// `covariates`. An empty list is how an exclusion restriction is
    /// expressed.
    pub verification_covariates: Option<Vec<String>>,
    /// When true the verification model includes disease status, allowing
    /// selection on the unobserved outcome.
    pub mnar: bool,
    /// Adds a test by disease product to the verification model; only
    /// meaningful together with `mnar`.
    pub verification_interaction: bool,
    /// Maximum EM cycles; `None` picks 5000, or 50000 when covariates are
    /// present.
    pub t_max: Option<usize>,
    /// Convergence threshold on the largest absolute coefficient change.
    pub cutoff: S,
    /// Bootstrap settings for interval estimation; `None` returns point
    /// estimates only.
    pub boot: Option<BootConfig<S>>,
}

impl<S: Scalar> Default for EmConfig<S> {
    fn default() -> Self {
        EmConfig {
            covariates: Vec::new(),
            verification_covariates: None,
            mnar: true,
            verification_interaction: false,
            t_max: None,
            cutoff: s(2e-4),
            boot: None,
        }
    }
}

impl<S: Scalar> EmConfig<S> {
    pub fn resolved_t_max(&self) -> usize {
        self.t_max
            .unwrap_or(if self.covariates.is_empty() { 5000 } else { 50000 })
    }
}

/// One row of the stacked working data.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoRow<S> {
    pub test: bool,
    pub disease: bool,
    pub verification: bool,
    pub covariates: Vec<S>,
}

/// Working data for the EM cycle: verified rows first, then every
/// unverified record twice, the disease-absent block before the
/// disease-present block. Row `n_verified + k` pairs with row
/// `n_verified + n_unverified + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoData<S> {
    pub rows: Vec<PseudoRow<S>>,
    pub weights: Vec<S>,
    /// Source record index of every row.
    pub origin_index: Vec<usize>,
    pub n_verified: usize,
    pub n_unverified: usize,
}

/// Stacks the unverified records with both disease values. Verified rows
/// keep weight one; each stacked pair starts at one half and one half.
pub fn build_pseudo_data<S: Scalar>(data: &Dataset<S>) -> PseudoData<S> {
    let n_verified = data.verified_count();
    let n_unverified = data.n() - n_verified;
    let total = n_verified + 2 * n_unverified;
    let mut rows = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut origin_index = Vec::with_capacity(total);

    for (i, rec) in data.records.iter().enumerate() {
        if let Some(d) = rec.disease {
            rows.push(PseudoRow {
                test: rec.test,
                disease: d,
                verification: true,
                covariates: rec.covariates.clone(),
            });
            weights.push(S::one());
            origin_index.push(i);
        }
    }
    for disease in [false, true] {
        for (i, rec) in data.records.iter().enumerate() {
            if rec.disease.is_none() {
                rows.push(PseudoRow {
                    test: rec.test,
                    disease,
                    verification: false,
                    covariates: rec.covariates.clone(),
                });
                weights.push(s(0.5));
                origin_index.push(i);
            }
        }
    }
    PseudoData {
        rows,
        weights,
        origin_index,
        n_verified,
        n_unverified,
    }
}

/// Coefficients and progress of one EM run. `alpha` parameterizes the
/// disease model (intercept, covariates), `beta` the test model
/// (intercept, disease, covariates), `gamma` the verification model
/// (intercept, test, then disease when selective, then its covariates,
/// then the test by disease product when enabled).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmState<S> {
    pub alpha: Vec<S>,
    pub beta: Vec<S>,
    pub gamma: Vec<S>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute coefficient change per cycle.
    pub delta_trace: Vec<S>,
    /// Observed-data log likelihood after each cycle.
    pub loglik_trace: Vec<S>,
}

pub(crate) struct EmPlan {
    pub disease_cols: Vec<usize>,
    pub verif_cols: Vec<usize>,
    pub mnar: bool,
    pub interaction: bool,
}

impl EmPlan {
    fn resolve<S: Scalar>(data: &Dataset<S>, config: &EmConfig<S>) -> Result<EmPlan> {
        let disease_cols = data.covariate_indices(&config.covariates)?;
        let verif_cols = match &config.verification_covariates {
            Some(names) => data.covariate_indices(names)?,
            None => disease_cols.clone(),
        };
        Ok(EmPlan {
            disease_cols,
            verif_cols,
            mnar: config.mnar,
            interaction: config.mnar && config.verification_interaction,
        })
    }

    fn alpha_len(&self) -> usize {
        1 + self.disease_cols.len()
    }

    fn beta_len(&self) -> usize {
        2 + self.disease_cols.len()
    }

    fn gamma_len(&self) -> usize {
        2 + usize::from(self.mnar) + self.verif_cols.len() + usize::from(self.interaction)
    }

    fn disease_eta<S: Scalar>(&self, alpha: &[S], covs: &[S]) -> S {
        let mut eta = alpha[0];
        for (j, &c) in self.disease_cols.iter().enumerate() {
            eta = eta + alpha[1 + j] * covs[c];
        }
        eta
    }

    fn test_eta<S: Scalar>(&self, beta: &[S], disease: bool, covs: &[S]) -> S {
        let mut eta = beta[0];
        if disease {
            eta = eta + beta[1];
        }
        for (j, &c) in self.disease_cols.iter().enumerate() {
            eta = eta + beta[2 + j] * covs[c];
        }
        eta
    }

    fn verif_eta<S: Scalar>(&self, gamma: &[S], test: bool, disease: bool, covs: &[S]) -> S {
        let mut eta = gamma[0];
        if test {
            eta = eta + gamma[1];
        }
        let mut next = 2;
        if self.mnar {
            if disease {
                eta = eta + gamma[next];
            }
            next += 1;
        }
        for &c in &self.verif_cols {
            eta = eta + gamma[next] * covs[c];
            next += 1;
        }
        if self.interaction && test && disease {
            eta = eta + gamma[next];
        }
        eta
    }
}

/// Complete-data log likelihood contribution of one pseudo row at the
/// current coefficients, with the row's own verification indicator as the
/// verification outcome.
fn row_loglik<S: Scalar>(row: &PseudoRow<S>, state: &EmState<S>, plan: &EmPlan) -> S {
    bernoulli_ln(row.disease, plan.disease_eta(&state.alpha, &row.covariates))
        + bernoulli_ln(
            row.test,
            plan.test_eta(&state.beta, row.disease, &row.covariates),
        )
        + bernoulli_ln(
            row.verification,
            plan.verif_eta(&state.gamma, row.test, row.disease, &row.covariates),
        )
}

/// Reweights every stacked pair from the current coefficients. The pair
/// ratio is formed in log space so extreme fitted probabilities cannot
/// underflow, and the two weights sum to one by construction.
pub(crate) fn e_step<S: Scalar>(pd: &mut PseudoData<S>, state: &EmState<S>, plan: &EmPlan) {
    let (nv, u) = (pd.n_verified, pd.n_unverified);
    for k in 0..u {
        let lp0 = row_loglik(&pd.rows[nv + k], state, plan);
        let lp1 = row_loglik(&pd.rows[nv + u + k], state, plan);
        let w0 = crate::logit::sigmoid_clamped(lp0 - lp1);
        pd.weights[nv + k] = w0;
        pd.weights[nv + u + k] = S::one() - w0;
    }
}

struct EmDesigns<S> {
    disease: DesignMatrix<S>,
    test: DesignMatrix<S>,
    verif: DesignMatrix<S>,
    y_disease: Vec<S>,
    y_test: Vec<S>,
    y_verif: Vec<S>,
    /// With nothing unverified the verification outcome is constant and
    /// the model is irrelevant to both weights and accuracy, so its fit
    /// is skipped and the coefficients stay put.
    fit_verification: bool,
}

fn build_designs<S: Scalar>(pd: &PseudoData<S>, plan: &EmPlan) -> EmDesigns<S> {
    let n = pd.rows.len();
    let mut designs = EmDesigns {
        disease: DesignMatrix::with_capacity(plan.alpha_len(), n),
        test: DesignMatrix::with_capacity(plan.beta_len(), n),
        verif: DesignMatrix::with_capacity(plan.gamma_len(), n),
        y_disease: Vec::with_capacity(n),
        y_test: Vec::with_capacity(n),
        y_verif: Vec::with_capacity(n),
        fit_verification: pd.n_unverified > 0,
    };
    let mut row_a = vec![S::zero(); plan.alpha_len()];
    let mut row_b = vec![S::zero(); plan.beta_len()];
    let mut row_g = vec![S::zero(); plan.gamma_len()];
    for row in &pd.rows {
        row_a[0] = S::one();
        for (j, &c) in plan.disease_cols.iter().enumerate() {
            row_a[1 + j] = row.covariates[c];
        }
        designs.disease.push_row(&row_a);

        row_b[0] = S::one();
        row_b[1] = indicator(row.disease);
        for (j, &c) in plan.disease_cols.iter().enumerate() {
            row_b[2 + j] = row.covariates[c];
        }
        designs.test.push_row(&row_b);

        row_g[0] = S::one();
        row_g[1] = indicator(row.test);
        let mut next = 2;
        if plan.mnar {
            row_g[next] = indicator(row.disease);
            next += 1;
        }
        for &c in &plan.verif_cols {
            row_g[next] = row.covariates[c];
            next += 1;
        }
        if plan.interaction {
            row_g[next] = indicator(row.test && row.disease);
        }
        designs.verif.push_row(&row_g);

        designs.y_disease.push(indicator(row.disease));
        designs.y_test.push(indicator(row.test));
        designs.y_verif.push(indicator(row.verification));
    }
    designs
}

/// Refits the three weighted models at the current weights, warm started
/// from the previous coefficients. Boundary drift is tolerated rather
/// than reported as separation: the fractional weights keep every fit
/// finite, and flat stretches of the likelihood are the outer loop's
/// business.
fn m_step<S: Scalar>(
    designs: &EmDesigns<S>,
    weights: &[S],
    state: &EmState<S>,
) -> Result<(Vec<S>, Vec<S>, Vec<S>)> {
    let tolerate = SeparationPolicy::Tolerate;
    let alpha = fit_logit_with(
        &designs.disease,
        &designs.y_disease,
        Some(weights),
        Some(&state.alpha),
        tolerate,
    )?
    .coefficients;
    let beta = fit_logit_with(
        &designs.test,
        &designs.y_test,
        Some(weights),
        Some(&state.beta),
        tolerate,
    )?
    .coefficients;
    let gamma = if designs.fit_verification {
        fit_logit_with(
            &designs.verif,
            &designs.y_verif,
            Some(weights),
            Some(&state.gamma),
            tolerate,
        )?
        .coefficients
    } else {
        state.gamma.clone()
    };
    Ok((alpha, beta, gamma))
}

/// Observed-data log likelihood: verified rows contribute directly, each
/// stacked pair contributes the log of the summed pair likelihoods.
fn observed_loglik<S: Scalar>(pd: &PseudoData<S>, state: &EmState<S>, plan: &EmPlan) -> S {
    let (nv, u) = (pd.n_verified, pd.n_unverified);
    let mut ll = S::zero();
    for row in &pd.rows[..nv] {
        ll = ll + row_loglik(row, state, plan);
    }
    for k in 0..u {
        let lp0 = row_loglik(&pd.rows[nv + k], state, plan);
        let lp1 = row_loglik(&pd.rows[nv + u + k], state, plan);
        ll = ll + logaddexp(lp0, lp1);
    }
    ll
}

/// EM accuracy estimation. Alternates expectation and maximization until
/// the largest coefficient change drops below the cutoff or the cycle
/// budget runs out; hitting the budget is reported as a warning on the
/// result, not an error, because weakly identified likelihoods move
/// slowly. Intervals come from the bootstrap when configured.
pub fn acc_em<S: Scalar>(
    data: &Dataset<S>,
    config: &EmConfig<S>,
) -> Result<(AccuracyResult<S>, EmState<S>)> {
    let (accuracy, state) = em_point(data, config)?;
    match &config.boot {
        None => Ok((accuracy, state)),
        Some(bc) => {
            let inner = EmConfig {
                boot: None,
                ..config.clone()
            };
            let boot = bootstrap_accuracy(data, |d| Ok(em_point(d, &inner)?.0), bc)?;
            Ok((boot.accuracy, state))
        }
    }
}

fn em_point<S: Scalar>(
    data: &Dataset<S>,
    config: &EmConfig<S>,
) -> Result<(AccuracyResult<S>, EmState<S>)> {
    if !(config.cutoff > S::zero()) {
        return Err(Error::InvalidConfig("cutoff must be positive"));
    }
    let t_max = config.resolved_t_max();
    if t_max == 0 {
        return Err(Error::InvalidConfig("at least one EM cycle is required"));
    }
    let verified_diseased = data
        .records
        .iter()
        .filter(|r| r.disease == Some(true))
        .count();
    let verified_clean = data.verified_count() - verified_diseased;
    if verified_diseased == 0 {
        return Err(Error::DegenerateMargin("no verified diseased subjects"));
    }
    if verified_clean == 0 {
        return Err(Error::DegenerateMargin("no verified disease-free subjects"));
    }

    let plan = EmPlan::resolve(data, config)?;
    let mut pd = build_pseudo_data(data);
    let designs = build_designs(&pd, &plan);

    let mut state = EmState {
        alpha: vec![S::zero(); plan.alpha_len()],
        beta: vec![S::zero(); plan.beta_len()],
        gamma: vec![S::zero(); plan.gamma_len()],
        iterations: 0,
        converged: false,
        delta_trace: Vec::new(),
        loglik_trace: Vec::new(),
    };

    for t in 1..=t_max {
        e_step(&mut pd, &state, &plan);
        let (alpha, beta, gamma) = m_step(&designs, &pd.weights, &state)?;
        let delta = max_abs_change(&state.alpha, &alpha)
            .max(max_abs_change(&state.beta, &beta))
            .max(max_abs_change(&state.gamma, &gamma));
        state.alpha = alpha;
        state.beta = beta;
        state.gamma = gamma;
        state.iterations = t;
        state.delta_trace.push(delta);
        state.loglik_trace.push(observed_loglik(&pd, &state, &plan));
        if delta < config.cutoff {
            state.converged = true;
            break;
        }
    }

    let mut accuracy = accuracy_from_state(data, &state, &plan);
    if !state.converged {
        accuracy.warnings.push(format!(
            "EM stopped at the cycle budget {t_max} with last coefficient change {} above the cutoff {}",
            state.delta_trace.last().copied().unwrap_or_else(S::zero),
            config.cutoff
        ));
    }
    Ok((accuracy, state))
}

/// Marginal accuracy from the fitted models: the disease model scores
/// every record, the test model scores every record with disease forced
/// present and forced absent, and the four measures are the
/// prevalence-weighted combinations of those per-record predictions.
fn accuracy_from_state<S: Scalar>(
    data: &Dataset<S>,
    state: &EmState<S>,
    plan: &EmPlan,
) -> AccuracyResult<S> {
    let one = S::one();
    let mut tp = S::zero();
    let mut fal_neg = S::zero();
    let mut fal_pos = S::zero();
    let mut tn = S::zero();
    for rec in &data.records {
        let p1 = crate::logit::sigmoid_clamped(plan.disease_eta(&state.alpha, &rec.covariates));
        let p2_present =
            crate::logit::sigmoid_clamped(plan.test_eta(&state.beta, true, &rec.covariates));
        let p2_absent =
            crate::logit::sigmoid_clamped(plan.test_eta(&state.beta, false, &rec.covariates));
        tp = tp + p1 * p2_present;
        fal_neg = fal_neg + p1 * (one - p2_present);
        fal_pos = fal_pos + (one - p1) * p2_absent;
        tn = tn + (one - p1) * (one - p2_absent);
    }
    AccuracyResult::points(
        Method::Em,
        [
            tp / (tp + fal_neg),
            tn / (tn + fal_pos),
            tp / (tp + fal_pos),
            tn / (tn + fal_neg),
        ],
        crate::accuracy::default_alpha(),
    )
}

fn max_abs_change<S: Scalar>(old: &[S], new: &[S]) -> S {
    old.iter()
        .zip(new)
        .map(|(&a, &b)| (a - b).abs())
        .fold(S::zero(), S::max)
}

fn indicator<S: Scalar>(flag: bool) -> S {
    if flag {
        S::one()
    } else {
        S::zero()
    }
}

fn softplus<S: Scalar>(x: S) -> S {
    x.max(S::zero()) + (-x.abs()).exp().ln_1p()
}

fn bernoulli_ln<S: Scalar>(y: bool, eta: S) -> S {
    -softplus(if y { -eta } else { eta })
}

fn logaddexp<S: Scalar>(a: S, b: S) -> S {
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accuracy::Measure;
    use crate::closed::{bg, cca, ebg, EbgConfig};
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

    fn tiny() -> Dataset<f64> {
        let mut records = Vec::new();
        let verified: [(u8, u8, f64); 8] = [
            (1, 1, 1.0),
            (1, 1, 1.0),
            (1, 1, 0.0),
            (0, 1, 0.0),
            (1, 0, 0.0),
            (0, 0, 1.0),
            (0, 0, 1.0),
            (0, 0, 0.0),
        ];
        for (t, d, x) in verified {
            records.push(Record {
                test: t == 1,
                disease: Some(d == 1),
                covariates: vec![x],
            });
        }
        for (t, x) in [(1u8, 1.0), (1, 0.0), (0, 0.0), (0, 0.0)] {
            records.push(Record {
                test: t == 1,
                disease: None,
                covariates: vec![x],
            });
        }
        Dataset::new(records, vec!["X".into()]).unwrap()
    }

    fn zero_state(plan: &EmPlan) -> EmState<f64> {
        EmState {
            alpha: vec![0.0; plan.alpha_len()],
            beta: vec![0.0; plan.beta_len()],
            gamma: vec![0.0; plan.gamma_len()],
            iterations: 0,
            converged: false,
            delta_trace: vec![],
            loglik_trace: vec![],
        }
    }

    #[test]
    fn stacking_doubles_the_unverified_records() {
        let data = spect();
        let pd = build_pseudo_data(&data);
        assert_eq!(pd.rows.len(), 4905);
        assert_eq!(pd.n_verified, 471);
        assert_eq!(pd.n_unverified, 2217);
        for w in &pd.weights[..471] {
            assert_eq!(*w, 1.0);
        }
        for k in 0..2217 {
            let (i0, i1) = (471 + k, 471 + 2217 + k);
            assert_eq!(pd.weights[i0] + pd.weights[i1], 1.0);
            assert!(!pd.rows[i0].disease);
            assert!(pd.rows[i1].disease);
            assert_eq!(pd.origin_index[i0], pd.origin_index[i1]);
            let source = &data.records[pd.origin_index[i0]];
            assert!(source.disease.is_none());
            assert_eq!(pd.rows[i0].test, source.test);
        }
    }

    #[test]
    fn fully_verified_data_stacks_nothing() {
        let data = Dataset::new(
            vec![rec(true, Some(true)), rec(false, Some(false))],
            vec![],
        )
        .unwrap();
        let pd = build_pseudo_data(&data);
        assert_eq!(pd.rows.len(), 2);
        assert_eq!(pd.weights, vec![1.0, 1.0]);
        assert_eq!(pd.n_unverified, 0);

        let single = Dataset::new(
            vec![rec(true, Some(true)), rec(false, Some(false)), rec(true, None)],
            vec![],
        )
        .unwrap();
        let pd = build_pseudo_data(&single);
        assert_eq!(pd.rows.len(), 4);
        assert_eq!(pd.weights[2..], [0.5, 0.5]);
    }

    #[test]
    fn zero_coefficients_weight_every_pair_evenly() {
        let data = spect();
        let plan = EmPlan::resolve(&data, &EmConfig::default()).unwrap();
        let mut pd = build_pseudo_data(&data);
        let state = zero_state(&plan);
        e_step(&mut pd, &state, &plan);
        for k in 0..pd.n_unverified {
            assert_eq!(pd.weights[pd.n_verified + k], 0.5);
        }
    }

    #[test]
    fn likelihood_ratio_of_three_splits_one_to_three() {
        let data = Dataset::new(
            vec![rec(true, Some(true)), rec(false, Some(false)), rec(true, None)],
            vec![],
        )
        .unwrap();
        let plan = EmPlan::resolve(&data, &EmConfig::default()).unwrap();
        let mut pd = build_pseudo_data(&data);
        let mut state = zero_state(&plan);
        // Disease model odds of 3 with flat test and verification models:
        // the disease-present copy is three times as likely.
        state.alpha = vec![3.0f64.ln()];
        e_step(&mut pd, &state, &plan);
        assert!((pd.weights[2] - 0.25).abs() < 1e-12);
        assert!((pd.weights[3] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn mar_fixed_point_matches_the_count_correction() {
        let data = spect();
        let config = EmConfig {
            mnar: false,
            ..EmConfig::default()
        };
        let (acc, state) = acc_em(&data, &config).unwrap();
        assert!(state.converged);
        let reference = bg(&data.cross_table(), 0.05).unwrap();
        for m in Measure::ALL {
            assert!(
                (acc.point(m) - reference.point(m)).abs() < 0.01,
                "{m}: em {} vs count correction {}",
                acc.point(m),
                reference.point(m)
            );
        }
        // No disease term in the verification model under ignorable
        // missingness.
        assert_eq!(state.gamma.len(), 2);
    }

    #[test]
    fn mar_with_covariate_tracks_the_regression_extension() {
        let data = spect();
        let config = EmConfig {
            covariates: vec!["X3".into()],
            mnar: false,
            ..EmConfig::default()
        };
        let (acc, state) = acc_em(&data, &config).unwrap();
        assert!(state.converged);
        assert_eq!(state.gamma.len(), 3);
        let reference = ebg(
            &data,
            &EbgConfig {
                covariates: vec!["X3".into()],
                saturated: false,
            },
            0.05,
        )
        .unwrap();
        for m in Measure::ALL {
            assert!(
                (acc.point(m) - reference.point(m)).abs() < 0.01,
                "{m}: em {} vs regression extension {}",
                acc.point(m),
                reference.point(m)
            );
        }
    }

    #[test]
    fn disease_mass_is_self_consistent_at_the_fixed_point() {
        let data = spect();
        let config = EmConfig {
            mnar: false,
            ..EmConfig::default()
        };
        let (_, state) = acc_em(&data, &config).unwrap();
        let plan = EmPlan::resolve(&data, &config).unwrap();
        let mut pd = build_pseudo_data(&data);
        e_step(&mut pd, &state, &plan);
        let weighted_disease: f64 = pd
            .rows
            .iter()
            .zip(&pd.weights)
            .filter(|(r, _)| r.disease)
            .map(|(_, &w)| w)
            .sum();
        let model_mass: f64 = data
            .records
            .iter()
            .map(|r| crate::logit::sigmoid_clamped(plan.disease_eta(&state.alpha, &r.covariates)))
            .sum();
        assert!(
            (weighted_disease / model_mass - 1.0).abs() < 1e-3,
            "weighted disease mass {weighted_disease} vs model mass {model_mass}"
        );
    }

    #[test]
    fn selective_verification_terms_extend_gamma() {
        let data = tiny();
        let base = EmConfig::<f64> {
            covariates: vec!["X".into()],
            t_max: Some(200),
            ..EmConfig::default()
        };
        let (_, state) = acc_em(&data, &base).unwrap();
        // Intercept, test, disease, covariate.
        assert_eq!(state.gamma.len(), 4);

        let with_product = EmConfig {
            verification_interaction: true,
            ..base.clone()
        };
        let (_, state) = acc_em(&data, &with_product).unwrap();
        assert_eq!(state.gamma.len(), 5);

        let excluded = EmConfig {
            verification_covariates: Some(vec![]),
            ..base
        };
        let (_, state) = acc_em(&data, &excluded).unwrap();
        assert_eq!(state.gamma.len(), 3);
    }

    #[test]
    fn complete_data_reduces_to_the_complete_case_analysis() {
        let mut records = Vec::new();
        for _ in 0..14 {
            records.push(rec(true, Some(true)));
        }
        for _ in 0..5 {
            records.push(rec(false, Some(true)));
        }
        for _ in 0..7 {
            records.push(rec(true, Some(false)));
        }
        for _ in 0..11 {
            records.push(rec(false, Some(false)));
        }
        let data = Dataset::new(records, vec![]).unwrap();
        let (acc, state) = acc_em(&data, &EmConfig::default()).unwrap();
        assert!(state.converged);
        assert!(state.iterations <= 2, "took {} cycles", state.iterations);
        let reference = cca(&data.cross_table(), 0.05).unwrap();
        for m in Measure::ALL {
            assert!(
                (acc.point(m) - reference.point(m)).abs() < 1e-6,
                "{m}: {} vs {}",
                acc.point(m),
                reference.point(m)
            );
        }
    }

    #[test]
    fn exhausted_cycle_budget_warns_and_still_reports() {
        let data = spect();
        let config = EmConfig {
            t_max: Some(3),
            ..EmConfig::default()
        };
        let (acc, state) = acc_em(&data, &config).unwrap();
        assert!(!state.converged);
        assert_eq!(state.iterations, 3);
        assert_eq!(state.delta_trace.len(), 3);
        assert!(acc.warnings.iter().any(|w| w.contains("cycle budget")));
        for m in Measure::ALL {
            assert!(acc.point(m).is_finite());
        }
    }

    #[test]
    fn log_likelihood_never_decreases_under_ignorable_missingness() {
        let data = spect();
        let config = EmConfig {
            mnar: false,
            covariates: vec!["X3".into()],
            ..EmConfig::default()
        };
        let (_, state) = acc_em(&data, &config).unwrap();
        for pair in state.loglik_trace.windows(2) {
            assert!(
                pair[1] >= pair[0] - 1e-10,
                "log likelihood dropped from {} to {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn bootstrap_smoke_on_the_tiny_fixture_is_deterministic() {
        let data = tiny();
        let config = EmConfig {
            covariates: vec!["X".into()],
            t_max: Some(500),
            boot: Some(BootConfig {
                replicates: 9,
                seed: 13,
                max_failed_fraction: 0.5,
                ..BootConfig::default()
            }),
            ..EmConfig::default()
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| acc_em(&data, &config).unwrap())
        };
        let (acc_a, state_a) = run(1);
        let (acc_b, state_b) = run(3);
        assert_eq!(state_a, state_b);
        for m in Measure::ALL {
            let (ea, eb) = (acc_a.measure(m), acc_b.measure(m));
            assert_eq!(ea.point, eb.point);
            assert_eq!(ea.se, eb.se);
            let ci = ea.ci.unwrap();
            assert!(ci.lower.is_finite() && ci.upper.is_finite());
            assert!(ci.lower <= ci.upper);
            assert_eq!(ci.lower, eb.ci.unwrap().lower);
        }
    }

    #[test]
    fn one_class_verified_subsets_are_rejected() {
        let all_diseased = Dataset::new(
            vec![rec(true, Some(true)), rec(false, Some(true)), rec(true, None)],
            vec![],
        )
        .unwrap();
        assert!(matches!(
            acc_em(&all_diseased, &EmConfig::default()),
            Err(Error::DegenerateMargin(_))
        ));
        let bad_cutoff = EmConfig::<f64> {
            cutoff: 0.0,
            ..EmConfig::default()
        };
        assert!(matches!(
            acc_em(&tiny(), &bad_cutoff),
            Err(Error::InvalidConfig(_))
        ));
        let bad_budget = EmConfig::<f64> {
            t_max: Some(0),
            ..EmConfig::default()
        };
        assert!(matches!(
            acc_em(&tiny(), &bad_budget),
            Err(Error::InvalidConfig(_))
        ));
    }

    proptest! {
        #[test]
        fn reweighting_keeps_pairs_on_the_simplex(
            tests in proptest::collection::vec(any::<bool>(), 4..20),
            missing_mask in proptest::collection::vec(any::<bool>(), 4..20),
            alpha in -4.0f64..4.0,
            beta in proptest::collection::vec(-4.0f64..4.0, 2),
            gamma in proptest::collection::vec(-4.0f64..4.0, 3),
        ) {
            let n = tests.len().min(missing_mask.len());
            let mut records = vec![rec(true, Some(true)), rec(false, Some(false))];
            for i in 0..n {
                let disease = if missing_mask[i] { None } else { Some(i % 2 == 0) };
                records.push(rec(tests[i], disease));
            }
            let data = Dataset::new(records, vec![]).unwrap();
            let plan = EmPlan::resolve(&data, &EmConfig::default()).unwrap();
            let mut pd = build_pseudo_data(&data);
            let mut state = zero_state(&plan);
            state.alpha = vec![alpha];
            state.beta = beta;
            state.gamma = gamma;
            e_step(&mut pd, &state, &plan);
            for w in &pd.weights[..pd.n_verified] {
                prop_assert_eq!(*w, 1.0);
            }
            for k in 0..pd.n_unverified {
                let w0 = pd.weights[pd.n_verified + k];
                let w1 = pd.weights[pd.n_verified + pd.n_unverified + k];
                prop_assert!(w0 > 0.0 && w1 > 0.0);
                prop_assert_eq!(w0 + w1, 1.0);
            }
        }
    }
}
