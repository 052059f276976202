//! Synthetic cohort generator with known truth.
//!
//! A generated subject gets covariates, a disease label, a test result, and a
//! verification indicator, each drawn from a logistic model whose baseline is
//! set by the requested prevalence, sensitivity, and specificity. The
//! verification model decides which disease labels survive into the returned
//! dataset; its shape encodes the missingness mechanism. Alongside the data
//! the generator reports the analytic cohort-level truth, computed from the
//! drawn covariates rather than the realized labels, so calibration tests can
//! measure estimator bias without Monte-Carlo noise from the label draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};
use crate::logit::sigmoid_clamped;
use crate::scalar::{s, to_f64, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateKind<S> {
    /// 0/1 covariate with the given class-1 probability.
    Binary { p: S },
    Continuous { mean: S, sd: S },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSpec<S> {
    pub name: String,
    pub kind: CovariateKind<S>,
    /// Additive shift on the disease logit per unit of the covariate.
    pub disease_effect: S,
    /// Additive shift on both test logits per unit of the covariate.
    pub test_effect: S,
    /// Additive shift on the verification logit per unit of the covariate.
    pub verification_effect: S,
}

/// Verification-model coefficients on (1, T, D).
///
/// The variants make the missingness hierarchy structural: completely random
/// selection has no slopes at all, random-given-observables sees only the
/// test result, and the non-ignorable variant also sees the disease label it
/// is about to hide. Covariate slopes ride along through
/// [`CovariateSpec::verification_effect`] and must be zero in the `Mcar`
/// case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mechanism<S> {
    Mcar { intercept: S },
    Mar { intercept: S, coef_t: S },
    Mnar { intercept: S, coef_t: S, coef_d: S },
}

impl<S: Scalar> Mechanism<S> {
    pub fn label(&self) -> &'static str {
        match self {
            Mechanism::Mcar { .. } => "mcar",
            Mechanism::Mar { .. } => "mar",
            Mechanism::Mnar { .. } => "mnar",
        }
    }

    /// (intercept, test slope, disease slope) with absent slopes as zero.
    fn coefficients(&self) -> (S, S, S) {
        match *self {
            Mechanism::Mcar { intercept } => (intercept, S::zero(), S::zero()),
            Mechanism::Mar { intercept, coef_t } => (intercept, coef_t, S::zero()),
            Mechanism::Mnar {
                intercept,
                coef_t,
                coef_d,
            } => (intercept, coef_t, coef_d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec<S> {
    pub n: usize,
    pub prevalence: S,
    pub se_true: S,
    pub sp_true: S,
    pub covariates: Vec<CovariateSpec<S>>,
    pub mechanism: Mechanism<S>,
    pub seed: u64,
}

/// Cohort-level operating characteristics implied by a spec, averaged over
/// the covariates actually drawn. With covariate effects on the test these
/// differ from the baseline `se_true`/`sp_true`, and they are the right
/// comparison point for estimators that report cohort-marginal accuracy.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SimTruth<S> {
    pub marginal_se: S,
    pub marginal_sp: S,
    pub expected_verified_fraction: S,
}

/// Draw a full cohort and blank the disease labels the verification model
/// leaves unverified. Deterministic given the spec: every record has its own
/// counter-mode substream, so thread scheduling cannot reorder draws.
pub fn generate<S: Scalar>(spec: &SimSpec<S>) -> Result<(Dataset<S>, SimTruth<S>)> {
    validate(spec)?;
    let (g0, gt, gd) = spec.mechanism.coefficients();
    let base_d = logit(spec.prevalence);
    let base_t1 = logit(spec.se_true);
    let base_t0 = logit(S::one() - spec.sp_true);
    let one = S::one();

    let rows: Vec<(Record<S>, [S; 4])> = (0..spec.n)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(index as u64);

            let mut covariates = Vec::with_capacity(spec.covariates.len());
            let mut lp_d = base_d;
            let mut lp_t = S::zero();
            let mut lp_v = S::zero();
            for c in &spec.covariates {
                let value = match c.kind {
                    CovariateKind::Binary { p } => {
                        if bernoulli(&mut rng, p) {
                            one
                        } else {
                            S::zero()
                        }
                    }
                    CovariateKind::Continuous { mean, sd } => {
                        mean + sd * crate::quantile::standard_normal(&mut rng)
                    }
                };
                lp_d = lp_d + c.disease_effect * value;
                lp_t = lp_t + c.test_effect * value;
                lp_v = lp_v + c.verification_effect * value;
                covariates.push(value);
            }

            let p_disease = sigmoid_clamped(lp_d);
            let disease = bernoulli(&mut rng, p_disease);
            let p_test_pos = |diseased: bool| {
                sigmoid_clamped(if diseased { base_t1 } else { base_t0 } + lp_t)
            };
            let test = bernoulli(&mut rng, p_test_pos(disease));
            let p_verified = |test: bool, diseased: bool| {
                let mut lp = g0 + lp_v;
                if test {
                    lp = lp + gt;
                }
                if diseased {
                    lp = lp + gd;
                }
                sigmoid_clamped(lp)
            };
            let verified = bernoulli(&mut rng, p_verified(test, disease));

            let p2_1 = p_test_pos(true);
            let p2_0 = p_test_pos(false);
            let expected_verified = p_disease
                * (p2_1 * p_verified(true, true) + (one - p2_1) * p_verified(false, true))
                + (one - p_disease)
                    * (p2_0 * p_verified(true, false)
                        + (one - p2_0) * p_verified(false, false));

            let record = Record {
                test,
                disease: if verified { Some(disease) } else { None },
                covariates,
            };
            let contribution = [
                p_disease,
                p_disease * p2_1,
                (one - p_disease) * (one - p2_0),
                expected_verified,
            ];
            (record, contribution)
        })
        .collect();

    // Summed sequentially in record order so the truth is bit-identical no
    // matter how the parallel map was scheduled.
    let mut sum_p1 = S::zero();
    let mut sum_q1 = S::zero();
    let mut sum_se = S::zero();
    let mut sum_sp = S::zero();
    let mut sum_v = S::zero();
    for (_, c) in &rows {
        sum_p1 = sum_p1 + c[0];
        sum_q1 = sum_q1 + (one - c[0]);
        sum_se = sum_se + c[1];
        sum_sp = sum_sp + c[2];
        sum_v = sum_v + c[3];
    }
    let truth = SimTruth {
        marginal_se: sum_se / sum_p1,
        marginal_sp: sum_sp / sum_q1,
        expected_verified_fraction: sum_v / s(spec.n as f64),
    };

    let records = rows.into_iter().map(|(r, _)| r).collect();
    let names = spec.covariates.iter().map(|c| c.name.clone()).collect();
    Ok((Dataset::new(records, names)?, truth))
}

fn bernoulli<S: Scalar, R: Rng>(rng: &mut R, p: S) -> bool {
    let u: f64 = rng.random();
    u < to_f64(p)
}

fn logit<S: Scalar>(p: S) -> S {
    (p / (S::one() - p)).ln()
}

fn validate<S: Scalar>(spec: &SimSpec<S>) -> Result<()> {
    if spec.n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    check_open_unit("prevalence", spec.prevalence)?;
    check_open_unit("se_true", spec.se_true)?;
    check_open_unit("sp_true", spec.sp_true)?;
    let (g0, gt, gd) = spec.mechanism.coefficients();
    for (name, v) in [
        ("verification.intercept", g0),
        ("verification.t", gt),
        ("verification.d", gd),
    ] {
        check_finite(name, v)?;
    }
    let mcar = matches!(spec.mechanism, Mechanism::Mcar { .. });
    for (i, c) in spec.covariates.iter().enumerate() {
        if c.name.is_empty() {
            return Err(invalid("covariate names must be non-empty"));
        }
        if c.name == "T" || c.name == "D" {
            return Err(Error::InvalidSpec(format!(
                "covariate name `{}` collides with a reserved column",
                c.name
            )));
        }
        if spec.covariates[..i].iter().any(|prev| prev.name == c.name) {
            return Err(Error::InvalidSpec(format!(
                "duplicate covariate name `{}`",
                c.name
            )));
        }
        match c.kind {
            CovariateKind::Binary { p } => {
                check_open_unit(&format!("covariate.{}.p", c.name), p)?
            }
            CovariateKind::Continuous { mean, sd } => {
                check_finite(&format!("covariate.{}.mean", c.name), mean)?;
                if !sd.is_finite() || sd <= S::zero() {
                    return Err(Error::InvalidSpec(format!(
                        "covariate.{}.sd must be a positive finite number",
                        c.name
                    )));
                }
            }
        }
        check_finite(&format!("covariate.{}.disease", c.name), c.disease_effect)?;
        check_finite(&format!("covariate.{}.test", c.name), c.test_effect)?;
        check_finite(
            &format!("covariate.{}.verification", c.name),
            c.verification_effect,
        )?;
        if mcar && c.verification_effect != S::zero() {
            return Err(Error::InvalidSpec(format!(
                "covariate `{}` has a verification effect, which contradicts the mcar mechanism",
                c.name
            )));
        }
    }
    Ok(())
}

fn check_open_unit<S: Scalar>(name: &str, v: S) -> Result<()> {
    if !v.is_finite() || v <= S::zero() || v >= S::one() {
        return Err(Error::InvalidSpec(format!(
            "{name} must lie strictly between 0 and 1"
        )));
    }
    Ok(())
}

fn check_finite<S: Scalar>(name: &str, v: S) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidSpec(format!("{name} must be finite")));
    }
    Ok(())
}

fn invalid(msg: &str) -> Error {
    Error::InvalidSpec(msg.to_string())
}

/// Parse a spec from the plain-text `key = value` format.
///
/// Lines are `key = value` pairs; `#` starts a comment and blank lines are
/// skipped. Keys: `n`, `prevalence`, `se_true`, `sp_true`, `mechanism`
/// (mcar|mar|mnar), `seed`, `verification.intercept`, `verification.t`
/// (mar and mnar only), `verification.d` (mnar only), and per covariate
/// `covariate.NAME.kind` (binary|continuous) plus `covariate.NAME.p` or
/// `covariate.NAME.mean`/`covariate.NAME.sd` and the effect keys
/// `covariate.NAME.disease`, `covariate.NAME.test`,
/// `covariate.NAME.verification`. Unstated coefficients default to zero,
/// `p` to 0.5, `mean`/`sd` to 0/1, and `seed` to 0. Covariates keep the
/// order in which their names first appear.
pub fn parse_sim_spec<S: Scalar>(text: &str) -> Result<SimSpec<S>> {
    let mut fields = RawFields::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidSpec(format!(
                "line {}: expected `key = value`, found `{line}`",
                lineno + 1
            ))
        })?;
        fields.set(key.trim(), value.trim())?;
    }
    let spec = fields.build()?;
    validate(&spec)?;
    Ok(spec)
}

/// [`parse_sim_spec`] applied to the contents of a file.
pub fn load_sim_spec<S: Scalar>(path: impl AsRef<std::path::Path>) -> Result<SimSpec<S>> {
    parse_sim_spec(&std::fs::read_to_string(path)?)
}

#[derive(Default)]
struct RawCovariate {
    name: String,
    kind: Option<String>,
    p: Option<f64>,
    mean: Option<f64>,
    sd: Option<f64>,
    disease: Option<f64>,
    test: Option<f64>,
    verification: Option<f64>,
}

#[derive(Default)]
struct RawFields {
    n: Option<usize>,
    prevalence: Option<f64>,
    se_true: Option<f64>,
    sp_true: Option<f64>,
    seed: Option<u64>,
    mechanism: Option<String>,
    v_intercept: Option<f64>,
    v_t: Option<f64>,
    v_d: Option<f64>,
    covariates: Vec<RawCovariate>,
}

impl RawFields {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => set_once(key, &mut self.n, parse_int(key, value)?),
            "prevalence" => set_once(key, &mut self.prevalence, parse_num(key, value)?),
            "se_true" => set_once(key, &mut self.se_true, parse_num(key, value)?),
            "sp_true" => set_once(key, &mut self.sp_true, parse_num(key, value)?),
            "seed" => set_once(key, &mut self.seed, parse_seed(value)?),
            "mechanism" => set_once(key, &mut self.mechanism, value.to_string()),
            "verification.intercept" => {
                set_once(key, &mut self.v_intercept, parse_num(key, value)?)
            }
            "verification.t" => set_once(key, &mut self.v_t, parse_num(key, value)?),
            "verification.d" => set_once(key, &mut self.v_d, parse_num(key, value)?),
            _ => {
                let rest = key.strip_prefix("covariate.").ok_or_else(|| {
                    Error::InvalidSpec(format!("unknown key `{key}`"))
                })?;
                let (name, field) = rest.split_once('.').ok_or_else(|| {
                    Error::InvalidSpec(format!("unknown key `{key}`"))
                })?;
                if name.is_empty() {
                    return Err(Error::InvalidSpec(format!("unknown key `{key}`")));
                }
                let cov = match self.covariates.iter_mut().find(|c| c.name == name) {
                    Some(c) => c,
                    None => {
                        self.covariates.push(RawCovariate {
                            name: name.to_string(),
                            ..RawCovariate::default()
                        });
                        self.covariates.last_mut().unwrap()
                    }
                };
                match field {
                    "kind" => set_once(key, &mut cov.kind, value.to_string()),
                    "p" => set_once(key, &mut cov.p, parse_num(key, value)?),
                    "mean" => set_once(key, &mut cov.mean, parse_num(key, value)?),
                    "sd" => set_once(key, &mut cov.sd, parse_num(key, value)?),
                    "disease" => set_once(key, &mut cov.disease, parse_num(key, value)?),
                    "test" => set_once(key, &mut cov.test, parse_num(key, value)?),
                    "verification" => {
                        set_once(key, &mut cov.verification, parse_num(key, value)?)
                    }
                    _ => Err(Error::InvalidSpec(format!("unknown key `{key}`"))),
                }
            }
        }
    }

    fn build<S: Scalar>(self) -> Result<SimSpec<S>> {
        let n = self.n.ok_or_else(|| invalid("missing required key `n`"))?;
        let prevalence = require("prevalence", self.prevalence)?;
        let se_true = require("se_true", self.se_true)?;
        let sp_true = require("sp_true", self.sp_true)?;
        let mech_name = self
            .mechanism
            .ok_or_else(|| invalid("missing required key `mechanism`"))?;
        let intercept = s(self.v_intercept.unwrap_or(0.0));
        let mechanism = match mech_name.as_str() {
            "mcar" => {
                reject_for_mechanism("verification.t", self.v_t, "mcar")?;
                reject_for_mechanism("verification.d", self.v_d, "mcar")?;
                Mechanism::Mcar { intercept }
            }
            "mar" => {
                reject_for_mechanism("verification.d", self.v_d, "mar")?;
                Mechanism::Mar {
                    intercept,
                    coef_t: s(self.v_t.unwrap_or(0.0)),
                }
            }
            "mnar" => Mechanism::Mnar {
                intercept,
                coef_t: s(self.v_t.unwrap_or(0.0)),
                coef_d: s(self.v_d.unwrap_or(0.0)),
            },
            other => {
                return Err(Error::InvalidSpec(format!(
                    "mechanism must be mcar, mar, or mnar, found `{other}`"
                )))
            }
        };
        let covariates = self
            .covariates
            .into_iter()
            .map(RawCovariate::build)
            .collect::<Result<Vec<_>>>()?;
        Ok(SimSpec {
            n,
            prevalence: s(prevalence),
            se_true: s(se_true),
            sp_true: s(sp_true),
            covariates,
            mechanism,
            seed: self.seed.unwrap_or(0),
        })
    }
}

impl RawCovariate {
    fn build<S: Scalar>(self) -> Result<CovariateSpec<S>> {
        let name = self.name;
        let kind_name = self.kind.ok_or_else(|| {
            Error::InvalidSpec(format!("covariate `{name}` is missing `kind`"))
        })?;
        let kind = match kind_name.as_str() {
            "binary" => {
                reject_for_kind(&name, "mean", self.mean, "binary")?;
                reject_for_kind(&name, "sd", self.sd, "binary")?;
                CovariateKind::Binary {
                    p: s(self.p.unwrap_or(0.5)),
                }
            }
            "continuous" => {
                reject_for_kind(&name, "p", self.p, "continuous")?;
                CovariateKind::Continuous {
                    mean: s(self.mean.unwrap_or(0.0)),
                    sd: s(self.sd.unwrap_or(1.0)),
                }
            }
            other => {
                return Err(Error::InvalidSpec(format!(
                    "covariate `{name}` kind must be binary or continuous, found `{other}`"
                )))
            }
        };
        Ok(CovariateSpec {
            name,
            kind,
            disease_effect: s(self.disease.unwrap_or(0.0)),
            test_effect: s(self.test.unwrap_or(0.0)),
            verification_effect: s(self.verification.unwrap_or(0.0)),
        })
    }
}

fn set_once<T>(key: &str, slot: &mut Option<T>, value: T) -> Result<()> {
    if slot.is_some() {
        return Err(Error::InvalidSpec(format!("duplicate key `{key}`")));
    }
    *slot = Some(value);
    Ok(())
}

fn require(key: &str, slot: Option<f64>) -> Result<f64> {
    slot.ok_or_else(|| Error::InvalidSpec(format!("missing required key `{key}`")))
}

fn reject_for_mechanism(key: &str, slot: Option<f64>, mechanism: &str) -> Result<()> {
    if slot.is_some() {
        return Err(Error::InvalidSpec(format!(
            "`{key}` is not a parameter of the {mechanism} mechanism"
        )));
    }
    Ok(())
}

fn reject_for_kind(name: &str, field: &str, slot: Option<f64>, kind: &str) -> Result<()> {
    if slot.is_some() {
        return Err(Error::InvalidSpec(format!(
            "covariate `{name}` is {kind}, `{field}` does not apply"
        )));
    }
    Ok(())
}

fn parse_num(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value.parse().map_err(|_| {
        Error::InvalidSpec(format!("key `{key}`: cannot parse `{value}` as a number"))
    })?;
    if !v.is_finite() {
        return Err(Error::InvalidSpec(format!("{key} must be finite")));
    }
    Ok(v)
}

fn parse_int(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| {
        Error::InvalidSpec(format!(
            "key `{key}`: cannot parse `{value}` as a non-negative integer"
        ))
    })
}

fn parse_seed(value: &str) -> Result<u64> {
    value.parse().map_err(|_| {
        Error::InvalidSpec(format!(
            "key `seed`: cannot parse `{value}` as a non-negative integer"
        ))
    })
}
