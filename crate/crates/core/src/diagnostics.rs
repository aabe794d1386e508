//! Balance statistics and descriptive summaries over design rows.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::designs::{DesignDataset, DesignKind, DesignRow};
use crate::estimator::{EffectEstimate, Outcome, Scope};
use crate::ingest::{VoteMethod, VoterRecord};
use crate::numeric::mean;

/// Treatment/control comparison for one categorical characteristic value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceEntry {
    pub characteristic: String,
    pub category: String,
    /// `(p_T - p_C) / p_C`; undefined when the control proportion is zero.
    pub pct_diff: Option<f64>,
    /// `p_T - p_C`, always in [-1, 1].
    pub abs_diff: f64,
    /// Control registrants in this category.
    pub n_control: u64,
}

/// Treatment/control mean comparison for a numeric covariate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericBalanceEntry {
    pub name: String,
    pub mean_treated: f64,
    pub mean_control: f64,
    pub pct_diff: Option<f64>,
    pub n_treated: u64,
    pub n_control: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub categories: Vec<BalanceEntry>,
    pub numerics: Vec<NumericBalanceEntry>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("WRONG_DESIGN: operation requires the shock design")]
    WrongDesign,
    #[error("EMPTY: no rows to summarize")]
    Empty,
}

fn group_sizes(rows: &[DesignRow]) -> (u64, u64) {
    let treated = rows.iter().filter(|r| r.treatment).count() as u64;
    (treated, rows.len() as u64 - treated)
}

fn balance_entry(
    characteristic: &str,
    category: &str,
    count_treated: u64,
    count_control: u64,
    n_treated: u64,
    n_control: u64,
) -> BalanceEntry {
    let p_t = if n_treated == 0 { 0.0 } else { count_treated as f64 / n_treated as f64 };
    let p_c = if n_control == 0 { 0.0 } else { count_control as f64 / n_control as f64 };
    BalanceEntry {
        characteristic: characteristic.to_string(),
        category: category.to_string(),
        pct_diff: if p_c > 0.0 { Some((p_t - p_c) / p_c) } else { None },
        abs_diff: p_t - p_c,
        n_control: count_control,
    }
}

/// Compare the composition of treatment and control groups.
///
/// One entry per `(characteristic, category)` pair observed anywhere in the
/// rows, plus mean comparisons for numeric covariates (home sale price).
pub fn balance_table(
    rows: &[DesignRow],
    voters: &BTreeMap<String, VoterRecord>,
) -> BalanceReport {
    let (n_treated, n_control) = group_sizes(rows);

    let mut counts: BTreeMap<(String, String), (u64, u64)> = BTreeMap::new();
    let mut prices: (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for row in rows {
        let Some(voter) = voters.get(&row.voter_id) else { continue };
        for (characteristic, category) in &voter.demographics {
            let slot = counts.entry((characteristic.clone(), category.clone())).or_default();
            if row.treatment {
                slot.0 += 1;
            } else {
                slot.1 += 1;
            }
        }
        if let Some(price) = voter.home_sale_price {
            if row.treatment {
                prices.0.push(price);
            } else {
                prices.1.push(price);
            }
        }
    }

    let categories = counts
        .into_iter()
        .map(|((characteristic, category), (ct, cc))| {
            balance_entry(&characteristic, &category, ct, cc, n_treated, n_control)
        })
        .collect();

    let mut numerics = Vec::new();
    if !prices.0.is_empty() || !prices.1.is_empty() {
        let mean_treated = mean(&prices.0);
        let mean_control = mean(&prices.1);
        numerics.push(NumericBalanceEntry {
            name: "home_sale_price".into(),
            mean_treated,
            mean_control,
            pct_diff: if mean_control != 0.0 {
                Some((mean_treated - mean_control) / mean_control)
            } else {
                None
            },
            n_treated: prices.0.len() as u64,
            n_control: prices.1.len() as u64,
        });
    }
    BalanceReport { categories, numerics }
}

/// Balance over 2012 voting outcomes, valid only for the shock design: its
/// pre-period is untreated, whereas the distance design treats in both years.
pub fn historical_balance(
    dataset: &DesignDataset,
    voters: &BTreeMap<String, VoterRecord>,
) -> Result<Vec<BalanceEntry>, DiagnosticsError> {
    if dataset.kind != DesignKind::Shock {
        return Err(DiagnosticsError::WrongDesign);
    }
    let rows = &dataset.rows;
    let (n_treated, n_control) = group_sizes(rows);

    // (in_person, substitution, any) counts per group.
    let mut treated = (0u64, 0u64, 0u64);
    let mut control = (0u64, 0u64, 0u64);
    for row in rows {
        let Some(voter) = voters.get(&row.voter_id) else { continue };
        let (ip, sub, any) = match voter.vote_2012 {
            VoteMethod::InPerson => (1, 0, 1),
            VoteMethod::Mail | VoteMethod::Early => (0, 1, 1),
            VoteMethod::None => (0, 0, 0),
        };
        let slot = if row.treatment { &mut treated } else { &mut control };
        slot.0 += ip;
        slot.1 += sub;
        slot.2 += any;
    }

    Ok(vec![
        balance_entry("vote_2012", "in_person", treated.0, control.0, n_treated, n_control),
        balance_entry("vote_2012", "substitution", treated.1, control.1, n_treated, n_control),
        balance_entry("vote_2012", "any", treated.2, control.2, n_treated, n_control),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    /// Inclusive lower edge; bins are 0.1 miles wide.
    pub lo: f64,
    pub count: u64,
}

/// Distance-gap summary over a seeded sample of blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSummary {
    /// Per sampled block: (control-face mean distance, distance gap).
    pub pairs: Vec<(f64, f64)>,
    pub histogram: Vec<HistogramBin>,
    pub share_below_one_mile: f64,
    pub sample_size: usize,
}

/// Sample up to `sample_size` blocks uniformly without replacement and
/// summarize their gaps; deterministic for a given seed.
pub fn gap_summary(
    dataset: &DesignDataset,
    sample_size: usize,
    seed: u64,
) -> Result<GapSummary, DiagnosticsError> {
    if dataset.rows.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    // Block-level view, sorted by block id.
    let mut blocks: BTreeMap<&crate::blocks::BlockId, (Option<f64>, f64)> = BTreeMap::new();
    for row in &dataset.rows {
        let entry = blocks.entry(&row.block_id).or_insert((None, row.distance_gap));
        if !row.treatment {
            entry.0 = Some(row.face_avg_distance_2016);
        }
    }
    let all: Vec<(f64, f64)> =
        blocks.values().map(|(control_mean, gap)| (control_mean.unwrap_or(0.0), *gap)).collect();

    let pairs: Vec<(f64, f64)> = if all.len() <= sample_size {
        all
    } else {
        // Partial Fisher-Yates over indices, then restore block order.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices: Vec<usize> = (0..all.len()).collect();
        for i in 0..sample_size {
            let j = rng.gen_range(i..indices.len());
            indices.swap(i, j);
        }
        let mut chosen = indices[..sample_size].to_vec();
        chosen.sort_unstable();
        chosen.into_iter().map(|i| all[i]).collect()
    };

    let mut bins: BTreeMap<i64, u64> = BTreeMap::new();
    let mut below = 0u64;
    for &(_, gap) in &pairs {
        *bins.entry((gap / 0.1).floor() as i64).or_default() += 1;
        if gap < 1.0 {
            below += 1;
        }
    }
    let histogram =
        bins.into_iter().map(|(k, count)| HistogramBin { lo: k as f64 * 0.1, count }).collect();
    Ok(GapSummary {
        share_below_one_mile: below as f64 / pairs.len() as f64,
        sample_size: pairs.len(),
        pairs,
        histogram,
    })
}

/// Read a `state,<covariate>` table, e.g. 2012 substitution shares.
pub fn read_state_covariates<R: std::io::Read>(source: R) -> std::io::Result<BTreeMap<String, f64>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(source);
    let headers = reader.headers().map_err(std::io::Error::other)?.clone();
    let state_idx = headers
        .iter()
        .position(|h| h.trim() == "state")
        .ok_or_else(|| std::io::Error::other("state-covariate file needs a state column"))?;
    let value_idx = if state_idx == 0 { 1 } else { 0 };
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(std::io::Error::other)?;
        let state = record.get(state_idx).unwrap_or("").trim();
        let raw = record.get(value_idx).unwrap_or("").trim();
        if state.is_empty() || raw.is_empty() {
            continue;
        }
        let value: f64 = raw.parse().map_err(std::io::Error::other)?;
        out.insert(state.to_string(), value);
    }
    Ok(out)
}

/// A per-state substitution estimate joined with its adoption covariate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSubstitutionRow {
    pub state: String,
    pub covariate: Option<f64>,
    pub theta_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// True when the state had no covariate supplied.
    pub flagged: bool,
}

/// Join per-state substitution estimates with a state covariate and sort by
/// covariate ascending; states missing the covariate are flagged, not
/// dropped, and sort last.
pub fn substitution_by_state(
    estimates: &[EffectEstimate],
    covariate: &BTreeMap<String, f64>,
) -> Vec<StateSubstitutionRow> {
    let mut rows: Vec<StateSubstitutionRow> = estimates
        .iter()
        .filter(|e| e.outcome == Outcome::Substitution)
        .filter_map(|e| match &e.scope {
            Scope::State(state) => {
                let cov = covariate.get(state).copied();
                Some(StateSubstitutionRow {
                    state: state.clone(),
                    covariate: cov,
                    theta_hat: e.theta_hat,
                    ci_low: e.ci_low,
                    ci_high: e.ci_high,
                    flagged: cov.is_none(),
                })
            }
            _ => None,
        })
        .collect();
    rows.sort_by(|a, b| match (a.covariate, b.covariate) {
        (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.state.cmp(&b.state)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.state.cmp(&b.state),
    });
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlockId;

    fn design_row(voter: &str, block: &str, treatment: bool) -> DesignRow {
        DesignRow {
            voter_id: voter.into(),
            block_id: BlockId {
                truncated_number: "1".into(),
                street_name: block.into(),
                street_type: "street".into(),
                city: "milwaukee".into(),
                state: "WI".into(),
            },
            household_key: format!("hh-{voter}"),
            state: "WI".into(),
            treatment,
            outcome_in_person: 0,
            outcome_substitution: 0,
            outcome_any: 0,
            face_avg_distance_2016: if treatment { 0.5 } else { 0.2 },
            face_avg_distance_2012: 0.2,
            distance_gap: 0.3,
        }
    }

    fn voter_with(id: &str, demo: &[(&str, &str)], vote_2012: VoteMethod) -> VoterRecord {
        let mut v = crate::assignment::tests::test_voter(id, "P", 43.0, -87.9);
        v.vote_2012 = vote_2012;
        v.demographics =
            demo.iter().map(|(k, c)| (k.to_string(), c.to_string())).collect();
        v
    }

    #[test]
    fn identical_groups_have_zero_differences() {
        let mut voters = BTreeMap::new();
        let mut rows = Vec::new();
        for i in 0..10 {
            let t = i % 2 == 0;
            let id = format!("v{i}");
            rows.push(design_row(&id, "main", t));
            voters.insert(id.clone(), voter_with(&id, &[("gender", "f")], VoteMethod::None));
        }
        let report = balance_table(&rows, &voters);
        assert_eq!(report.categories.len(), 1);
        assert_eq!(report.categories[0].abs_diff, 0.0);
        assert_eq!(report.categories[0].pct_diff, Some(0.0));
        assert_eq!(report.categories[0].n_control, 5);
    }

    #[test]
    fn hand_computed_proportions() {
        // Treated: 3 of 4 are "dem". Control: 1 of 4 is "dem".
        let mut voters = BTreeMap::new();
        let mut rows = Vec::new();
        for (i, (t, party)) in [
            (true, "dem"),
            (true, "dem"),
            (true, "dem"),
            (true, "rep"),
            (false, "dem"),
            (false, "rep"),
            (false, "rep"),
            (false, "rep"),
        ]
        .iter()
        .enumerate()
        {
            let id = format!("v{i}");
            rows.push(design_row(&id, "main", *t));
            voters.insert(id.clone(), voter_with(&id, &[("partisanship", party)], VoteMethod::None));
        }
        let report = balance_table(&rows, &voters);
        let dem = report
            .categories
            .iter()
            .find(|e| e.category == "dem")
            .unwrap();
        assert!((dem.abs_diff - 0.5).abs() < 1e-12);
        assert!((dem.pct_diff.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(dem.n_control, 1);
    }

    #[test]
    fn zero_control_proportion_leaves_pct_undefined() {
        let mut voters = BTreeMap::new();
        let rows = vec![design_row("v0", "main", true), design_row("v1", "main", false)];
        voters.insert("v0".into(), voter_with("v0", &[("race", "o")], VoteMethod::None));
        voters.insert("v1".into(), voter_with("v1", &[("race", "w")], VoteMethod::None));
        let report = balance_table(&rows, &voters);
        let rare = report.categories.iter().find(|e| e.category == "o").unwrap();
        assert_eq!(rare.pct_diff, None);
        assert!((rare.abs_diff - 1.0).abs() < 1e-12);
    }

    #[test]
    fn numeric_covariate_balance() {
        let mut voters = BTreeMap::new();
        let rows = vec![design_row("v0", "main", true), design_row("v1", "main", false)];
        let mut a = voter_with("v0", &[], VoteMethod::None);
        a.home_sale_price = Some(210_000.0);
        let mut b = voter_with("v1", &[], VoteMethod::None);
        b.home_sale_price = Some(200_000.0);
        voters.insert("v0".into(), a);
        voters.insert("v1".into(), b);
        let report = balance_table(&rows, &voters);
        let price = &report.numerics[0];
        assert_eq!(price.name, "home_sale_price");
        assert!((price.pct_diff.unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn historical_balance_matches_direct_arithmetic() {
        // 1000 treated with 131 substitution votes in 2012; 1000 control
        // with 138: pct_diff = (0.131 - 0.138) / 0.138.
        let mut voters = BTreeMap::new();
        let mut rows = Vec::new();
        for i in 0..2000 {
            let treated = i < 1000;
            let substituted = if treated { i < 131 } else { i - 1000 < 138 };
            let id = format!("v{i}");
            rows.push(design_row(&id, "main", treated));
            let vote = if substituted { VoteMethod::Mail } else { VoteMethod::None };
            voters.insert(id.clone(), voter_with(&id, &[], vote));
        }
        let dataset = DesignDataset { kind: DesignKind::Shock, rows, dropped: vec![] };
        let entries = historical_balance(&dataset, &voters).unwrap();
        let sub = entries.iter().find(|e| e.category == "substitution").unwrap();
        assert!((sub.pct_diff.unwrap() - (0.131 - 0.138) / 0.138).abs() < 1e-12);
        assert!((sub.pct_diff.unwrap() + 0.0507).abs() < 1e-4);
    }

    #[test]
    fn historical_balance_rejects_distance_design() {
        let dataset = DesignDataset { kind: DesignKind::Distance, rows: vec![], dropped: vec![] };
        assert_eq!(historical_balance(&dataset, &BTreeMap::new()), Err(DiagnosticsError::WrongDesign));
    }

    #[test]
    fn historical_balance_zero_when_identical() {
        let mut voters = BTreeMap::new();
        let mut rows = Vec::new();
        for i in 0..8 {
            let id = format!("v{i}");
            rows.push(design_row(&id, "main", i % 2 == 0));
            let vote = if i % 4 < 2 { VoteMethod::InPerson } else { VoteMethod::None };
            voters.insert(id.clone(), voter_with(&id, &[], vote));
        }
        let dataset = DesignDataset { kind: DesignKind::Shock, rows, dropped: vec![] };
        let entries = historical_balance(&dataset, &voters).unwrap();
        for e in entries {
            assert_eq!(e.abs_diff, 0.0, "{}", e.category);
        }
    }

    #[test]
    fn gap_summary_single_block() {
        let rows = vec![
            design_row("t1", "main", true),
            design_row("t2", "main", true),
            design_row("c1", "main", false),
            design_row("c2", "main", false),
        ];
        let dataset = DesignDataset { kind: DesignKind::Distance, rows, dropped: vec![] };
        let summary = gap_summary(&dataset, 1000, 7).unwrap();
        assert_eq!(summary.pairs, vec![(0.2, 0.3)]);
        assert_eq!(summary.sample_size, 1);
        assert_eq!(summary.share_below_one_mile, 1.0);
        let total: u64 = summary.histogram.iter().map(|b| b.count).sum();
        assert_eq!(total, 1);
    }

    #[test]
    fn gap_summary_is_seed_deterministic_and_counts_sum() {
        let mut rows = Vec::new();
        for b in 0..50 {
            let mut t = design_row(&format!("t{b}"), &format!("block{b}"), true);
            let mut c = design_row(&format!("c{b}"), &format!("block{b}"), false);
            t.distance_gap = b as f64 * 0.05;
            c.distance_gap = b as f64 * 0.05;
            rows.push(t);
            rows.push(c);
        }
        let dataset = DesignDataset { kind: DesignKind::Distance, rows, dropped: vec![] };
        let a = gap_summary(&dataset, 20, 99).unwrap();
        let b = gap_summary(&dataset, 20, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sample_size, 20);
        let total: u64 = a.histogram.iter().map(|x| x.count).sum();
        assert_eq!(total, 20);
        let c = gap_summary(&dataset, 20, 100).unwrap();
        assert_ne!(a.pairs, c.pairs, "different seeds should pick different blocks");
    }

    #[test]
    fn gap_summary_empty_errors() {
        let dataset = DesignDataset { kind: DesignKind::Distance, rows: vec![], dropped: vec![] };
        assert_eq!(gap_summary(&dataset, 10, 1), Err(DiagnosticsError::Empty));
    }

    #[test]
    fn substitution_join_sorts_and_flags() {
        let mk = |state: &str, theta: f64| EffectEstimate {
            outcome: Outcome::Substitution,
            theta_hat: theta,
            se: 0.01,
            ci_low: theta - 0.02,
            ci_high: theta + 0.02,
            n_units: 100,
            n_blocks: 10,
            n_households: 90,
            scope: Scope::State(state.into()),
        };
        let estimates = vec![mk("WI", 0.01), mk("IA", 0.02), mk("NC", 0.03)];
        let mut covariate = BTreeMap::new();
        covariate.insert("WI".to_string(), 0.25);
        covariate.insert("NC".to_string(), 0.10);
        let rows = substitution_by_state(&estimates, &covariate);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].state, "NC");
        assert_eq!(rows[1].state, "WI");
        assert_eq!(rows[2].state, "IA");
        assert!(rows[2].flagged);
        assert!(!rows[0].flagged);
    }

    #[test]
    fn single_state_single_row() {
        let estimates = vec![EffectEstimate {
            outcome: Outcome::Substitution,
            theta_hat: 0.01,
            se: 0.01,
            ci_low: -0.01,
            ci_high: 0.03,
            n_units: 10,
            n_blocks: 2,
            n_households: 9,
            scope: Scope::State("WI".into()),
        }];
        let mut covariate = BTreeMap::new();
        covariate.insert("WI".to_string(), 0.2);
        let rows = substitution_by_state(&estimates, &covariate);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].covariate, Some(0.2));
    }
}
