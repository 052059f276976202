//! Weighted logistic regression by iteratively reweighted least squares.
//!
//! The solver is deliberately plain: dense normal equations through the
//! pivoted Cholesky in `linalg`, no penalty, no automatic column dropping.
//! Each Newton step is checked against the weighted deviance and halved
//! toward the previous iterate until it stops increasing it; without that
//! safeguard the plain update can oscillate and blow up from warm starts
//! even on well-behaved data.

use crate::error::{Error, Result};
use crate::linalg::{solve_spd_pivoted, SymMatrix};
use crate::scalar::{s, Scalar};

/// Row-major design matrix with a fixed column count.
#[derive(Debug, Clone)]
pub struct DesignMatrix<S> {
    n_cols: usize,
    values: Vec<S>,
}

impl<S: Scalar> DesignMatrix<S> {
    pub fn new(n_cols: usize) -> Self {
        assert!(n_cols > 0, "design matrix needs at least one column");
        DesignMatrix {
            n_cols,
            values: Vec::new(),
        }
    }

    pub fn with_capacity(n_cols: usize, n_rows: usize) -> Self {
        let mut m = Self::new(n_cols);
        m.values.reserve(n_rows * n_cols);
        m
    }

    pub fn push_row(&mut self, row: &[S]) {
        assert_eq!(row.len(), self.n_cols, "row width mismatch");
        self.values.extend_from_slice(row);
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

#[derive(Debug, Clone)]
pub struct LogitFit<S> {
    pub coefficients: Vec<S>,
    pub converged: bool,
    pub iterations: usize,
    /// Observed information X'WX at the returned coefficients.
    pub(crate) fisher: SymMatrix<S>,
}

impl<S: Scalar> LogitFit<S> {
    pub fn linear_predictor(&self, row: &[S]) -> S {
        dot(&self.coefficients, row)
    }

    /// Fitted probability, clamped away from exact 0 and 1.
    pub fn predict_prob(&self, row: &[S]) -> S {
        sigmoid_clamped(self.linear_predictor(row))
    }
}

const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;

/// What to do when the likelihood has no interior maximum. Direct fits
/// treat separation as an error; fits inside an EM cycle return the last
/// iterate instead, the way reference GLM fitters cap and continue,
/// because fractional stack weights make boundary drift routine there.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum SeparationPolicy {
    Error,
    Tolerate,
}

/// Fit a weighted logistic regression of `y` (values in [0, 1]) on the
/// design. `weights` defaults to all ones; `start` to all zeros.
pub fn fit_logit<S: Scalar>(
    design: &DesignMatrix<S>,
    y: &[S],
    weights: Option<&[S]>,
    start: Option<&[S]>,
) -> Result<LogitFit<S>> {
    fit_logit_with(design, y, weights, start, SeparationPolicy::Error)
}

pub(crate) fn fit_logit_with<S: Scalar>(
    design: &DesignMatrix<S>,
    y: &[S],
    weights: Option<&[S]>,
    start: Option<&[S]>,
    policy: SeparationPolicy,
) -> Result<LogitFit<S>> {
    let n = design.n_rows();
    let p = design.n_cols();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: w.len(),
            });
        }
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }

    let coef_tol = s::<S>(1e-8).max(S::epsilon() * s(100.0));
    let dev_slack = s::<S>(1e-10).max(S::epsilon() * s(10.0));
    let dev_rel_tol = s::<S>(1e-8).max(S::epsilon() * s(100.0));
    let one = S::one();
    let weight_at = |i: usize| weights.map_or(one, |w| w[i]);

    let mut beta: Vec<S> = match start {
        Some(b) => {
            if b.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: b.len(),
                });
            }
            b.to_vec()
        }
        None => vec![S::zero(); p],
    };
    let mut dev = deviance(design, y, &weight_at, &beta);

    let mut converged = false;
    let mut iterations = 0;
    let mut xtwx = SymMatrix::zeros(p);
    let mut xtwz = vec![S::zero(); p];

    for iter in 1..=MAX_ITER {
        iterations = iter;
        xtwx.fill_zero();
        xtwz.iter_mut().for_each(|v| *v = S::zero());
        for i in 0..n {
            let row = design.row(i);
            let eta = clip_eta(dot(&beta, row));
            let mu = sigmoid_clamped(eta);
            let var = mu * (one - mu);
            let wt = weight_at(i) * var;
            let z = eta + (y[i] - mu) / var;
            for a in 0..p {
                xtwz[a] = xtwz[a] + wt * row[a] * z;
                for b in a..p {
                    xtwx.add_sym(a, b, wt * row[a] * row[b]);
                }
            }
        }
        let proposal_or = solve_spd_pivoted(&xtwx, &xtwz);
        let mut proposal = match proposal_or {
            Ok(p) => p,
            // Under the tolerant policy a collapsed direction of the
            // weighted information means the iterate sits on a flat
            // stretch: stop there. At an all-zero iterate the working
            // weights are uniform, so a collapse can only come from the
            // design itself and is always reported.
            Err(Error::RankDeficientDesign { .. })
                if policy == SeparationPolicy::Tolerate
                    && beta.iter().any(|b| *b != S::zero()) =>
            {
                converged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let mut new_dev = deviance(design, y, &weight_at, &proposal);
        let mut halvings = 0;
        while !(new_dev <= dev + dev_slack) && halvings < MAX_HALVINGS {
            for (pj, bj) in proposal.iter_mut().zip(&beta) {
                *pj = (*pj + *bj) * s(0.5);
            }
            new_dev = deviance(design, y, &weight_at, &proposal);
            halvings += 1;
        }

        let step: S = proposal
            .iter()
            .zip(&beta)
            .map(|(a, b)| (*a - *b).abs())
            .fold(S::zero(), S::max);
        let dev_drop = (dev - new_dev).abs();
        beta = proposal;
        dev = new_dev;
        if !step.is_finite() {
            return Err(Error::SeparationDetected);
        }
        if step < coef_tol {
            converged = true;
            break;
        }
        // Deviance-stationary stop, as reference GLM fitters use. Under
        // quasi-complete separation a part of the fit drifts off to a
        // boundary while the likelihood still flattens out; the fitted
        // probabilities and any averages of them are stable even though
        // the coefficient step never gets small. A perfectly fit model
        // (deviance at zero) is complete separation instead.
        if dev_drop < dev_rel_tol * (dev.abs() + s(0.1)) {
            if dev < s(1e-6) && policy == SeparationPolicy::Error {
                return Err(Error::SeparationDetected);
            }
            converged = true;
            break;
        }
    }

    let max_coef = beta.iter().map(|b| b.abs()).fold(S::zero(), S::max);
    if !max_coef.is_finite() {
        return Err(Error::SeparationDetected);
    }
    if !converged && max_coef > s(30.0) && policy == SeparationPolicy::Error {
        return Err(Error::SeparationDetected);
    }

    // Rebuild the information matrix at the returned coefficients; the
    // loop's last copy belongs to the previous iterate.
    xtwx.fill_zero();
    for i in 0..n {
        let row = design.row(i);
        let mu = sigmoid_clamped(clip_eta(dot(&beta, row)));
        let wt = weight_at(i) * mu * (one - mu);
        for a in 0..p {
            for b in a..p {
                xtwx.add_sym(a, b, wt * row[a] * row[b]);
            }
        }
    }

    Ok(LogitFit {
        coefficients: beta,
        converged,
        iterations,
        fisher: xtwx,
    })
}

fn deviance<S: Scalar>(
    design: &DesignMatrix<S>,
    y: &[S],
    weight_at: &impl Fn(usize) -> S,
    beta: &[S],
) -> S {
    let one = S::one();
    let mut dev = S::zero();
    for i in 0..design.n_rows() {
        let mu = sigmoid_clamped(clip_eta(dot(beta, design.row(i))));
        let ll = y[i] * mu.ln() + (one - y[i]) * (one - mu).ln();
        dev = dev - s::<S>(2.0) * weight_at(i) * ll;
    }
    dev
}

#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

#[inline]
fn clip_eta<S: Scalar>(eta: S) -> S {
    let lim = s::<S>(700.0);
    eta.min(lim).max(-lim)
}

/// Numerically stable logistic function clamped to (0, 1) open bounds.
#[inline]
pub(crate) fn sigmoid_clamped<S: Scalar>(eta: S) -> S {
    let one = S::one();
    let p = if eta >= S::zero() {
        one / (one + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (one + e)
    };
    let lo = s::<S>(1e-12);
    p.min(one - lo).max(lo)
}
