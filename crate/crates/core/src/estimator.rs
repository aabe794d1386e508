//! Within-block fixed-effects least squares with household-clustered
//! variance, plus a dense design-matrix oracle for cross-checking.
//!
//! The point estimate is the within estimator
//! `θ̂ = Σ_b Σ_i (T_i - T̄_b)(y_i - ȳ_b) / Σ_b Σ_i (T_i - T̄_b)²`,
//! numerically equal to OLS on block indicator dummies. The variance is the
//! CR1 cluster-robust sandwich over households on the within-transformed
//! regressor, with small-sample factor `(G/(G-1)) * ((N-1)/(N-K))` where
//! `K = n_blocks + 1`. Blocks without treatment variation contribute
//! nothing and are excluded from all counts.
//!
//! Accumulations run in block-sorted order with compensated summation, so
//! estimates do not depend on thread count.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::blocks::BlockId;
use crate::designs::{DesignDataset, DesignRow};
use crate::numeric::CompensatedSum;

/// Normal 97.5% quantile used for the 95% confidence interval.
pub const CI_Z: f64 = 1.959964;

/// Which voting outcome to estimate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    InPerson,
    Substitution,
    Any,
}

impl Outcome {
    pub fn value(self, row: &DesignRow) -> f64 {
        let v = match self {
            Outcome::InPerson => row.outcome_in_person,
            Outcome::Substitution => row.outcome_substitution,
            Outcome::Any => row.outcome_any,
        };
        v as f64
    }

    pub fn all() -> [Outcome; 3] {
        [Outcome::InPerson, Outcome::Substitution, Outcome::Any]
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::InPerson => "in_person",
            Outcome::Substitution => "substitution",
            Outcome::Any => "any",
        }
    }
}

/// What slice of the data an estimate covers.
#[derive(Debug, Clone, PartialEq)]
pub enum Scope {
    Pooled,
    State(String),
    /// Window threshold in miles; `NEG_INFINITY` means the full sample.
    Window(f64),
}

impl Scope {
    pub fn label(&self) -> String {
        match self {
            Scope::Pooled => "pooled".to_string(),
            Scope::State(s) => format!("state:{s}"),
            Scope::Window(t) if *t == f64::NEG_INFINITY => "window:all".to_string(),
            Scope::Window(t) => format!("window:>{t}"),
        }
    }
}

impl Serialize for Scope {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

/// A treatment-effect estimate with its clustered uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectEstimate {
    pub outcome: Outcome,
    pub theta_hat: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_units: u64,
    pub n_blocks: u64,
    pub n_households: u64,
    pub scope: Scope,
}

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("NO_VARIATION: no block has within-block treatment variation")]
    NoVariation,
    #[error("TOO_FEW_CLUSTERS: need at least 2 households, found {0}")]
    TooFewClusters(u64),
    #[error("insufficient degrees of freedom: N={n} K={k}")]
    InsufficientDof { n: u64, k: u64 },
    #[error("SINGULAR: design matrix is rank-deficient beyond block collinearity")]
    Singular,
    #[error("dense oracle limited to 10000 units, got {0}")]
    TooLargeForDense(usize),
}

struct BlockGroup<'a> {
    rows: Vec<&'a DesignRow>,
}

/// Group rows by block and keep only blocks with treatment variation.
fn variation_blocks<'a>(rows: &'a [DesignRow]) -> Vec<BlockGroup<'a>> {
    let mut by_block: BTreeMap<&'a BlockId, Vec<&'a DesignRow>> = BTreeMap::new();
    for row in rows {
        by_block.entry(&row.block_id).or_default().push(row);
    }
    by_block
        .into_values()
        .filter(|rows| {
            let treated = rows.iter().filter(|r| r.treatment).count();
            treated > 0 && treated < rows.len()
        })
        .map(|rows| BlockGroup { rows })
        .collect()
}

struct WithinRow<'a> {
    row: &'a DesignRow,
    x_tilde: f64,
    y_tilde: f64,
}

struct BlockPartial<'a> {
    within: Vec<WithinRow<'a>>,
    num: f64,
    den: f64,
}

fn block_partial<'a>(group: &BlockGroup<'a>, outcome: Outcome) -> BlockPartial<'a> {
    let n = group.rows.len() as f64;
    let mut t_sum = CompensatedSum::new();
    let mut y_sum = CompensatedSum::new();
    for r in &group.rows {
        t_sum.add(r.treatment as u8 as f64);
        y_sum.add(outcome.value(r));
    }
    let t_bar = t_sum.total() / n;
    let y_bar = y_sum.total() / n;

    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    let mut within = Vec::with_capacity(group.rows.len());
    for r in &group.rows {
        let x = r.treatment as u8 as f64 - t_bar;
        let y = outcome.value(r) - y_bar;
        num.add(x * y);
        den.add(x * x);
        within.push(WithinRow { row: r, x_tilde: x, y_tilde: y });
    }
    BlockPartial { within, num: num.total(), den: den.total() }
}

fn counts(blocks: &[BlockGroup<'_>]) -> (u64, u64, u64) {
    let n_units: u64 = blocks.iter().map(|b| b.rows.len() as u64).sum();
    let n_blocks = blocks.len() as u64;
    let mut households = std::collections::BTreeSet::new();
    for b in blocks {
        for r in &b.rows {
            households.insert(r.household_key.as_str());
        }
    }
    (n_units, n_blocks, households.len() as u64)
}

fn cr1_correction(n: u64, k: u64, g: u64) -> f64 {
    let (n, k, g) = (n as f64, k as f64, g as f64);
    (g / (g - 1.0)) * ((n - 1.0) / (n - k))
}

/// Estimate the treatment effect by the within transformation.
pub fn estimate_fe(rows: &[DesignRow], outcome: Outcome) -> Result<EffectEstimate, EstimatorError> {
    estimate_fe_scoped(rows, outcome, Scope::Pooled)
}

/// As [`estimate_fe`], carrying a scope label for reporting.
pub fn estimate_fe_scoped(
    rows: &[DesignRow],
    outcome: Outcome,
    scope: Scope,
) -> Result<EffectEstimate, EstimatorError> {
    let blocks = variation_blocks(rows);
    estimate_grouped(&blocks, outcome, scope)
}

/// All three outcomes over a single block-grouping pass.
pub fn estimate_fe_outcomes(
    rows: &[DesignRow],
    scope: Scope,
) -> Result<[EffectEstimate; 3], EstimatorError> {
    let blocks = variation_blocks(rows);
    Ok([
        estimate_grouped(&blocks, Outcome::InPerson, scope.clone())?,
        estimate_grouped(&blocks, Outcome::Substitution, scope.clone())?,
        estimate_grouped(&blocks, Outcome::Any, scope)?,
    ])
}

fn estimate_grouped(
    blocks: &[BlockGroup<'_>],
    outcome: Outcome,
    scope: Scope,
) -> Result<EffectEstimate, EstimatorError> {
    if blocks.is_empty() {
        return Err(EstimatorError::NoVariation);
    }
    let (n_units, n_blocks, n_households) = counts(blocks);
    let k = n_blocks + 1;
    if n_households < 2 {
        return Err(EstimatorError::TooFewClusters(n_households));
    }
    if n_units <= k {
        return Err(EstimatorError::InsufficientDof { n: n_units, k });
    }

    // Parallel per-block partials, reduced sequentially in block-sorted order.
    let partials: Vec<BlockPartial> =
        blocks.par_iter().map(|b| block_partial(b, outcome)).collect();
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for p in &partials {
        num.add(p.num);
        den.add(p.den);
    }
    let den = den.total();
    if den <= 0.0 {
        return Err(EstimatorError::NoVariation);
    }
    let theta_hat = num.total() / den;

    // Household scores of the within-transformed regression.
    let mut scores: BTreeMap<&str, CompensatedSum> = BTreeMap::new();
    for p in &partials {
        for w in &p.within {
            let residual = w.y_tilde - theta_hat * w.x_tilde;
            scores
                .entry(w.row.household_key.as_str())
                .or_insert_with(CompensatedSum::new)
                .add(w.x_tilde * residual);
        }
    }
    let mut meat = CompensatedSum::new();
    for s in scores.values() {
        let v = s.total();
        meat.add(v * v);
    }

    let variance = cr1_correction(n_units, k, n_households) * meat.total() / (den * den);
    let se = variance.max(0.0).sqrt();
    Ok(EffectEstimate {
        outcome,
        theta_hat,
        se,
        ci_low: theta_hat - CI_Z * se,
        ci_high: theta_hat + CI_Z * se,
        n_units,
        n_blocks,
        n_households,
        scope,
    })
}

/// Dense verification oracle: OLS on `[block dummies | T]` solved by a
/// rank-revealing decomposition, with the identical CR1 sandwich.
pub fn estimate_dense_oracle(
    rows: &[DesignRow],
    outcome: Outcome,
) -> Result<EffectEstimate, EstimatorError> {
    let blocks = variation_blocks(rows);
    if blocks.is_empty() {
        return Err(EstimatorError::NoVariation);
    }
    let (n_units, n_blocks, n_households) = counts(&blocks);
    if n_units as usize > 10_000 {
        return Err(EstimatorError::TooLargeForDense(n_units as usize));
    }
    let k = n_blocks + 1;
    if n_households < 2 {
        return Err(EstimatorError::TooFewClusters(n_households));
    }
    if n_units <= k {
        return Err(EstimatorError::InsufficientDof { n: n_units, k });
    }

    let n = n_units as usize;
    let p = k as usize;
    let theta_col = p - 1;
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut y = DVector::<f64>::zeros(n);
    let mut households = Vec::with_capacity(n);
    let mut i = 0usize;
    for (b, group) in blocks.iter().enumerate() {
        for r in &group.rows {
            x[(i, b)] = 1.0;
            x[(i, theta_col)] = r.treatment as u8 as f64;
            y[i] = outcome.value(r);
            households.push(r.household_key.as_str());
            i += 1;
        }
    }

    // Normal equations, decomposed with column-pivoted QR so rank
    // deficiency beyond block collinearity is detected rather than folded
    // into garbage coefficients.
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let qr = xtx.col_piv_qr();
    let r_diag = qr.r();
    let max_pivot = (0..p).map(|j| r_diag[(j, j)].abs()).fold(0.0_f64, f64::max);
    let tol = max_pivot * f64::EPSILON * (p as f64);
    if (0..p).any(|j| r_diag[(j, j)].abs() <= tol) {
        return Err(EstimatorError::Singular);
    }
    let beta = qr.solve(&xty).ok_or(EstimatorError::Singular)?;
    let theta_hat = beta[theta_col];
    let residuals = &y - &x * &beta;
    let xtx_inv = qr.solve(&DMatrix::identity(p, p)).ok_or(EstimatorError::Singular)?;

    // Meat: sum of score outer products by household.
    let mut cluster_rows: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, h) in households.iter().enumerate() {
        cluster_rows.entry(h).or_default().push(i);
    }
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for rows_in_cluster in cluster_rows.values() {
        let mut s = DVector::<f64>::zeros(p);
        for &i in rows_in_cluster {
            for j in 0..p {
                s[j] += x[(i, j)] * residuals[i];
            }
        }
        meat += &s * s.transpose();
    }

    let vcov = &xtx_inv * meat * &xtx_inv * cr1_correction(n_units, k, n_households);
    let se = vcov[(theta_col, theta_col)].max(0.0).sqrt();
    Ok(EffectEstimate {
        outcome,
        theta_hat,
        se,
        ci_low: theta_hat - CI_Z * se,
        ci_high: theta_hat + CI_Z * se,
        n_units,
        n_blocks,
        n_households,
        scope: Scope::Pooled,
    })
}

/// Estimates plus scopes that could not be estimated.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateSet {
    pub estimates: Vec<EffectEstimate>,
    pub skipped: Vec<(String, String)>,
}

/// Run the three outcomes pooled, per state, and per window threshold.
pub fn estimate_all(dataset: &DesignDataset, window_grid: &[f64]) -> EstimateSet {
    let mut estimates = Vec::new();
    let mut skipped = Vec::new();
    let mut run = |rows: &[DesignRow], scope: Scope| {
        // Estimability is outcome-independent, so a scope fails as a whole.
        match estimate_fe_outcomes(rows, scope.clone()) {
            Ok(batch) => estimates.extend(batch),
            Err(e) => skipped.push((scope.label(), e.to_string())),
        }
    };

    run(&dataset.rows, Scope::Pooled);

    let mut states: Vec<&str> = dataset.rows.iter().map(|r| r.state.as_str()).collect();
    states.sort();
    states.dedup();
    for state in states {
        let rows: Vec<DesignRow> =
            dataset.rows.iter().filter(|r| r.state == state).cloned().collect();
        run(&rows, Scope::State(state.to_string()));
    }

    for &threshold in window_grid {
        let subset = crate::designs::window_subset(dataset, threshold);
        run(&subset.rows, Scope::Window(threshold));
    }

    EstimateSet { estimates, skipped }
}

/// Flat delimited export for plotting: scope, outcome, theta, ci, n.
pub fn write_estimates_csv<W: std::io::Write>(
    estimates: &[EffectEstimate],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "scope,outcome,theta_hat,ci_low,ci_high,n_units")?;
    for e in estimates {
        writeln!(
            out,
            "{},{},{:.8},{:.8},{:.8},{}",
            e.scope.label(),
            e.outcome.label(),
            e.theta_hat,
            e.ci_low,
            e.ci_high,
            e.n_units
        )?;
    }
    Ok(())
}
