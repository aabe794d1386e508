//! Analysis-block selection and treatment assignment for the two designs.
//!
//! The relative-distance design keeps blocks whose face-to-place assignments
//! are identical in both years and treats the face with the greater mean
//! distance. The shock design keeps blocks where exactly one face's polling
//! place changed between the years, subject to a baseline similarity
//! condition on the 2012 distances.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{Block, BlockId, Registrant, Year};
use crate::ingest::VoteMethod;
use crate::numeric::mean;

/// Which design produced a set of rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Distance,
    Shock,
}

/// One analysis-ready registrant row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub voter_id: String,
    pub block_id: BlockId,
    pub household_key: String,
    pub state: String,
    pub treatment: bool,
    pub outcome_in_person: u8,
    pub outcome_substitution: u8,
    pub outcome_any: u8,
    pub face_avg_distance_2016: f64,
    pub face_avg_distance_2012: f64,
    /// Distance design: treated-face minus control-face 2016 mean (always
    /// positive). Shock design: treated-face mean distance to the new place
    /// minus to the old place (sign-carrying).
    pub distance_gap: f64,
}

/// Rows plus the design that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDataset {
    pub kind: DesignKind,
    pub rows: Vec<DesignRow>,
    pub dropped: Vec<(BlockId, DropReason)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    /// Distance design: face assignments differ between the years.
    AssignmentChanged,
    /// Distance design: face means equal within tolerance.
    TiedDistance,
    /// Shock design: both faces changed places.
    BothChanged,
    /// Shock design: neither face changed places.
    NeitherChanged,
    /// Shock design: 2012 baseline distances too dissimilar.
    BaselineImbalance,
    /// Shock design: a face has more than one 2012 place.
    MixedBaseline,
    /// Registrant data missing for a block member (caller error).
    MissingMember,
}

impl DropReason {
    pub fn code(self) -> &'static str {
        match self {
            DropReason::AssignmentChanged => "ASSIGNMENT_CHANGED",
            DropReason::TiedDistance => "TIED_DISTANCE",
            DropReason::BothChanged => "BOTH_CHANGED",
            DropReason::NeitherChanged => "NEITHER_CHANGED",
            DropReason::BaselineImbalance => "BASELINE_IMBALANCE",
            DropReason::MixedBaseline => "MIXED_BASELINE",
            DropReason::MissingMember => "MISSING_MEMBER",
        }
    }
}

/// Face means closer than this count as tied and drop the block.
pub const TIE_EPSILON_MILES: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct ShockConfig {
    /// Baseline condition bound on the 2012 face-mean distance difference.
    pub baseline_gap_miles: f64,
    /// Strict `<` comparison when true (default); `<=` when false.
    pub baseline_strict: bool,
}

impl Default for ShockConfig {
    fn default() -> Self {
        Self { baseline_gap_miles: 0.25, baseline_strict: true }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("design rows come from the {0:?} design, not the one required")]
    WrongDesign(DesignKind),
}

fn outcomes(method: VoteMethod) -> (u8, u8, u8) {
    match method {
        VoteMethod::InPerson => (1, 0, 1),
        VoteMethod::Mail | VoteMethod::Early => (0, 1, 1),
        VoteMethod::None => (0, 0, 0),
    }
}

struct FaceView<'a> {
    place_2016: &'a str,
    members: Vec<&'a Registrant>,
    mean_2016: f64,
    mean_2012: f64,
}

fn face_views<'a>(
    block: &'a Block,
    registrants: &BTreeMap<&str, &'a Registrant>,
) -> Option<[FaceView<'a>; 2]> {
    let mut views = Vec::with_capacity(2);
    for face in &block.faces {
        let mut members = Vec::with_capacity(face.members.len());
        for id in &face.members {
            members.push(*registrants.get(id.as_str())?);
        }
        let d2016: Vec<f64> = members.iter().map(|r| r.assignment_2016.distance_miles).collect();
        let d2012: Vec<f64> = members.iter().map(|r| r.assignment_2012.distance_miles).collect();
        views.push(FaceView {
            place_2016: &face.place_id,
            members,
            mean_2016: mean(&d2016),
            mean_2012: mean(&d2012),
        });
    }
    let second = views.pop()?;
    let first = views.pop()?;
    Some([first, second])
}

fn rows_for_block(
    faces: &[FaceView<'_>; 2],
    treated_index: usize,
    gap: f64,
    rows: &mut Vec<DesignRow>,
) {
    for (i, face) in faces.iter().enumerate() {
        for r in &face.members {
            let (ip, sub, any) = outcomes(r.record_2016.vote_2016);
            rows.push(DesignRow {
                voter_id: r.voter_id.clone(),
                block_id: r.block.clone(),
                household_key: r.record_2016.household_key.clone(),
                state: r.record_2016.state.clone(),
                treatment: i == treated_index,
                outcome_in_person: ip,
                outcome_substitution: sub,
                outcome_any: any,
                face_avg_distance_2016: face.mean_2016,
                face_avg_distance_2012: face.mean_2012,
                distance_gap: gap,
            });
        }
    }
}

/// Select relative-distance blocks and assign treatment to the farther face.
///
/// A block qualifies when it appears with the same two faces and places in
/// both years; members of the face with the greater 2016 mean distance are
/// treated, the other face is control. Blocks whose face means tie within
/// [`TIE_EPSILON_MILES`] are dropped.
pub fn select_distance_design(
    blocks_2012: &[Block],
    blocks_2016: &[Block],
    registrants: &[Registrant],
) -> DesignDataset {
    let by_id: BTreeMap<&str, &Registrant> =
        registrants.iter().map(|r| (r.voter_id.as_str(), r)).collect();
    let blocks_2012: BTreeMap<&BlockId, &Block> = blocks_2012.iter().map(|b| (&b.id, b)).collect();

    let mut results: Vec<(&Block, Result<(usize, f64, [FaceView; 2]), DropReason>)> = blocks_2016
        .par_iter()
        .map(|block| {
            let outcome = (|| {
                let earlier = blocks_2012.get(&block.id).ok_or(DropReason::AssignmentChanged)?;
                if earlier.faces != block.faces {
                    return Err(DropReason::AssignmentChanged);
                }
                let faces = face_views(block, &by_id).ok_or(DropReason::MissingMember)?;
                let diff = faces[0].mean_2016 - faces[1].mean_2016;
                if diff.abs() < TIE_EPSILON_MILES {
                    return Err(DropReason::TiedDistance);
                }
                let treated = if diff > 0.0 { 0 } else { 1 };
                let gap = diff.abs();
                Ok((treated, gap, faces))
            })();
            (block, outcome)
        })
        .collect();
    results.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for (block, outcome) in results {
        match outcome {
            Ok((treated, gap, faces)) => rows_for_block(&faces, treated, gap, &mut rows),
            Err(reason) => dropped.push((block.id.clone(), reason)),
        }
    }
    DesignDataset { kind: DesignKind::Distance, rows, dropped }
}

/// Select shock blocks and assign treatment to the face whose place changed.
///
/// Faces are the 2016 assignment groups. Each face must map to a single
/// 2012 place; exactly one face's place may differ from its 2016 place. The
/// baseline condition requires either a shared 2012 place or 2012 face-mean
/// distances within the configured bound. The gap is the treated face's
/// mean distance to the new place minus its mean distance to the old one.
pub fn select_shock_design(
    blocks_2016: &[Block],
    registrants: &[Registrant],
    config: &ShockConfig,
) -> DesignDataset {
    let by_id: BTreeMap<&str, &Registrant> =
        registrants.iter().map(|r| (r.voter_id.as_str(), r)).collect();

    let mut results: Vec<(&Block, Result<(usize, f64, [FaceView; 2]), DropReason>)> = blocks_2016
        .par_iter()
        .map(|block| {
            let outcome = (|| {
                let faces = face_views(block, &by_id).ok_or(DropReason::MissingMember)?;
                let mut old_places = [None::<&str>; 2];
                for (i, face) in faces.iter().enumerate() {
                    let mut it = face.members.iter().map(|r| r.assignment_2012.place_id.as_str());
                    let first = it.next().ok_or(DropReason::MissingMember)?;
                    if it.any(|p| p != first) {
                        return Err(DropReason::MixedBaseline);
                    }
                    old_places[i] = Some(first);
                }
                let old = [old_places[0].unwrap(), old_places[1].unwrap()];
                let changed = [old[0] != faces[0].place_2016, old[1] != faces[1].place_2016];
                let treated = match changed {
                    [true, true] => return Err(DropReason::BothChanged),
                    [false, false] => return Err(DropReason::NeitherChanged),
                    [true, false] => 0,
                    [false, true] => 1,
                };

                let shared_2012 = old[0] == old[1];
                if !shared_2012 {
                    let baseline_diff = (faces[0].mean_2012 - faces[1].mean_2012).abs();
                    let ok = if config.baseline_strict {
                        baseline_diff < config.baseline_gap_miles
                    } else {
                        baseline_diff <= config.baseline_gap_miles
                    };
                    if !ok {
                        return Err(DropReason::BaselineImbalance);
                    }
                }

                // New-place distances are the 2016 assignment distances; the
                // old-place distances are the 2012 ones (same residences).
                let gap = faces[treated].mean_2016 - faces[treated].mean_2012;
                Ok((treated, gap, faces))
            })();
            (block, outcome)
        })
        .collect();
    results.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for (block, outcome) in results {
        match outcome {
            Ok((treated, gap, faces)) => rows_for_block(&faces, treated, gap, &mut rows),
            Err(reason) => dropped.push((block.id.clone(), reason)),
        }
    }
    DesignDataset { kind: DesignKind::Shock, rows, dropped }
}

/// Retain whole blocks whose `distance_gap` strictly exceeds `threshold`.
/// `f64::NEG_INFINITY` keeps everything.
pub fn window_subset(dataset: &DesignDataset, threshold: f64) -> DesignDataset {
    let rows = dataset.rows.iter().filter(|r| r.distance_gap > threshold).cloned().collect();
    DesignDataset { kind: dataset.kind, rows, dropped: Vec::new() }
}

/// Default window threshold grid, in miles. The first entry keeps all rows.
pub fn default_window_grid() -> Vec<f64> {
    vec![f64::NEG_INFINITY, 0.0, 0.1, 0.25, 0.5, 1.0]
}

/// County classification by 2012 -> 2016 change in distinct precinct names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockClass {
    Removed,
    Added,
    Same,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyShock {
    pub state: String,
    pub county: String,
    pub precincts_2012: usize,
    pub precincts_2016: usize,
    pub class: ShockClass,
    /// Set when the county appears in only one year's place file.
    pub flagged: bool,
    pub registrants: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassShares {
    pub removed: f64,
    pub added: f64,
    pub same: f64,
}

/// Per-county shock classification with county and registrant shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockTypeSummary {
    pub counties: Vec<CountyShock>,
    pub pct_counties: ClassShares,
    pub pct_registrants: ClassShares,
}

/// Classify each county as having removed, added, or kept its number of
/// polling places, counting distinct precinct names per year as places.
/// `county_registrants` supplies the weights for the registrant shares,
/// keyed by normalized `(state, county)`.
pub fn classify_shock_types(
    places_2012: &[crate::ingest::PollingPlace],
    places_2016: &[crate::ingest::PollingPlace],
    county_registrants: &BTreeMap<(String, String), u64>,
) -> ShockTypeSummary {
    use crate::blocks::county_key;

    let mut precincts: BTreeMap<(String, String), (std::collections::BTreeSet<String>, std::collections::BTreeSet<String>)> =
        BTreeMap::new();
    for p in places_2012 {
        let key = county_key(&p.state, &p.county);
        precincts.entry(key).or_default().0.insert(p.precinct.trim().to_lowercase());
    }
    for p in places_2016 {
        let key = county_key(&p.state, &p.county);
        precincts.entry(key).or_default().1.insert(p.precinct.trim().to_lowercase());
    }

    let mut counties = Vec::new();
    let mut county_totals = (0u64, 0u64, 0u64);
    let mut registrant_totals = (0u64, 0u64, 0u64);
    for ((state, county), (p2012, p2016)) in precincts {
        let class = match p2016.len().cmp(&p2012.len()) {
            std::cmp::Ordering::Less => ShockClass::Removed,
            std::cmp::Ordering::Greater => ShockClass::Added,
            std::cmp::Ordering::Equal => ShockClass::Same,
        };
        let flagged = p2012.is_empty() || p2016.is_empty();
        let registrants = county_registrants.get(&(state.clone(), county.clone())).copied().unwrap_or(0);
        match class {
            ShockClass::Removed => {
                county_totals.0 += 1;
                registrant_totals.0 += registrants;
            }
            ShockClass::Added => {
                county_totals.1 += 1;
                registrant_totals.1 += registrants;
            }
            ShockClass::Same => {
                county_totals.2 += 1;
                registrant_totals.2 += registrants;
            }
        }
        counties.push(CountyShock {
            state,
            county,
            precincts_2012: p2012.len(),
            precincts_2016: p2016.len(),
            class,
            flagged,
            registrants,
        });
    }

    let shares = |t: (u64, u64, u64)| {
        let total = (t.0 + t.1 + t.2) as f64;
        if total == 0.0 {
            ClassShares { removed: 0.0, added: 0.0, same: 0.0 }
        } else {
            ClassShares {
                removed: 100.0 * t.0 as f64 / total,
                added: 100.0 * t.1 as f64 / total,
                same: 100.0 * t.2 as f64 / total,
            }
        }
    };
    ShockTypeSummary {
        counties,
        pct_counties: shares(county_totals),
        pct_registrants: shares(registrant_totals),
    }
}

/// Require that a dataset came from the expected design.
pub fn require_kind(dataset: &DesignDataset, kind: DesignKind) -> Result<(), DesignError> {
    if dataset.kind == kind {
        Ok(())
    } else {
        Err(DesignError::WrongDesign(dataset.kind))
    }
}

/// Design export: delimited text with the full row field list.
pub fn write_design_csv<W: std::io::Write>(dataset: &DesignDataset, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "voter_id,block_id,household_key,state,treatment,outcome_in_person,outcome_substitution,outcome_any,face_avg_distance_2016,face_avg_distance_2012,distance_gap"
    )?;
    for r in &dataset.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6}",
            r.voter_id,
            r.block_id.render(),
            r.household_key,
            r.state,
            r.treatment as u8,
            r.outcome_in_person,
            r.outcome_substitution,
            r.outcome_any,
            r.face_avg_distance_2016,
            r.face_avg_distance_2012,
            r.distance_gap,
        )?;
    }
    Ok(())
}

/// Year helper for callers iterating both snapshots.
pub fn both_years() -> [Year; 2] {
    [Year::Y2012, Year::Y2016]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::Assignment;
    use crate::blocks::{block_id, build_blocks};
    use crate::ingest::parse_address;

    /// A block with two faces at controlled mean distances per year.
    /// `spec` is (voter ids, place_2012, place_2016, d2012, d2016) per face.
    fn make_block(
        street: &str,
        faces: [(&[&str], &str, &str, f64, f64); 2],
        vote: VoteMethod,
    ) -> Vec<Registrant> {
        let mut out = Vec::new();
        for (ids, p12, p16, d12, d16) in faces {
            for (i, id) in ids.iter().enumerate() {
                let mut v = crate::assignment::tests::test_voter(id, "P", 43.0, -87.9);
                v.address =
                    parse_address(&format!("{} {street}, Milwaukee, WI", 100 + i * 2)).unwrap();
                v.household_key = format!("hh-{id}");
                v.vote_2016 = vote;
                let block = block_id(&v.address).unwrap();
                out.push(Registrant {
                    voter_id: id.to_string(),
                    block,
                    record_2012: v.clone(),
                    record_2016: v,
                    assignment_2012: Assignment {
                        voter_id: id.to_string(),
                        election_year: 2012,
                        place_id: p12.to_string(),
                        distance_miles: d12,
                    },
                    assignment_2016: Assignment {
                        voter_id: id.to_string(),
                        election_year: 2016,
                        place_id: p16.to_string(),
                        distance_miles: d16,
                    },
                });
            }
        }
        out
    }

    fn blocks_for(registrants: &[Registrant], year: Year) -> Vec<Block> {
        build_blocks(registrants, year).0
    }

    #[test]
    fn distance_design_treats_farther_face() {
        let rs = make_block(
            "Oak St",
            [
                (&["A1", "A2"], "PP-1", "PP-1", 0.4, 0.40),
                (&["B1", "B2"], "PP-2", "PP-2", 0.25, 0.25),
            ],
            VoteMethod::InPerson,
        );
        let ds = select_distance_design(&blocks_for(&rs, Year::Y2012), &blocks_for(&rs, Year::Y2016), &rs);
        assert_eq!(ds.rows.len(), 4);
        for row in &ds.rows {
            let expected = row.voter_id.starts_with('A');
            assert_eq!(row.treatment, expected, "row {}", row.voter_id);
            assert!((row.distance_gap - 0.15).abs() < 1e-12);
        }
        assert!(ds.dropped.is_empty());
    }

    #[test]
    fn distance_design_excludes_changed_assignments() {
        let rs = make_block(
            "Oak St",
            [
                (&["A1", "A2"], "PP-1", "PP-1", 0.4, 0.4),
                (&["B1", "B2"], "PP-9", "PP-2", 0.25, 0.25),
            ],
            VoteMethod::None,
        );
        let ds = select_distance_design(&blocks_for(&rs, Year::Y2012), &blocks_for(&rs, Year::Y2016), &rs);
        assert!(ds.rows.is_empty());
        assert_eq!(ds.dropped[0].1, DropReason::AssignmentChanged);
    }

    #[test]
    fn distance_design_drops_ties() {
        let rs = make_block(
            "Oak St",
            [
                (&["A1", "A2"], "PP-1", "PP-1", 0.3, 0.3),
                (&["B1", "B2"], "PP-2", "PP-2", 0.3, 0.3),
            ],
            VoteMethod::None,
        );
        let ds = select_distance_design(&blocks_for(&rs, Year::Y2012), &blocks_for(&rs, Year::Y2016), &rs);
        assert!(ds.rows.is_empty());
        assert_eq!(ds.dropped[0].1, DropReason::TiedDistance);
    }

    #[test]
    fn distance_design_multi_block_hand_enumeration() {
        let mut rs = make_block(
            "Ash St",
            [
                (&["A1", "A2"], "PP-1", "PP-1", 0.1, 0.10),
                (&["A3", "A4"], "PP-2", "PP-2", 0.5, 0.50),
            ],
            VoteMethod::None,
        );
        rs.extend(make_block(
            "Beech St",
            [
                (&["B1", "B2"], "PP-3", "PP-3", 0.9, 0.90),
                (&["B3", "B4"], "PP-4", "PP-4", 0.2, 0.20),
            ],
            VoteMethod::None,
        ));
        rs.extend(make_block(
            "Cedar St",
            [
                (&["C1", "C2"], "PP-5", "PP-5", 0.33, 0.33),
                (&["C3", "C4"], "PP-6", "PP-6", 0.34, 0.34),
            ],
            VoteMethod::None,
        ));
        let ds = select_distance_design(&blocks_for(&rs, Year::Y2012), &blocks_for(&rs, Year::Y2016), &rs);
        let treated: Vec<&str> = ds
            .rows
            .iter()
            .filter(|r| r.treatment)
            .map(|r| r.voter_id.as_str())
            .collect();
        assert_eq!(treated, vec!["A3", "A4", "B1", "B2", "C3", "C4"]);
    }

    #[test]
    fn shock_design_treats_changed_face() {
        // Both faces shared PP-1 in 2012; face B moves to PP-2.
        let rs = make_block(
            "Oak St",
            [
                (&["A1", "A2"], "PP-1", "PP-1", 0.30, 0.30),
                (&["B1", "B2"], "PP-1", "PP-2", 0.30, 0.55),
            ],
            VoteMethod::InPerson,
        );
        let ds = select_shock_design(&blocks_for(&rs, Year::Y2016), &rs, &ShockConfig::default());
        assert_eq!(ds.rows.len(), 4);
        for row in &ds.rows {
            assert_eq!(row.treatment, row.voter_id.starts_with('B'));
        }
        let gap = ds.rows.iter().find(|r| r.treatment).unwrap().distance_gap;
        assert!((gap - 0.25).abs() < 1e-12);
    }

    #[test]
    fn shock_design_drop_reasons() {
        let both = make_block(
            "Oak St",
            [
                (&["A1", "A2"], "PP-7", "PP-1", 0.3, 0.3),
                (&["B1", "B2"], "PP-8", "PP-2", 0.3, 0.3),
            ],
            VoteMethod::None,
        );
        let ds = select_shock_design(&blocks_for(&both, Year::Y2016), &both, &ShockConfig::default());
        assert_eq!(ds.dropped[0].1, DropReason::BothChanged);

        let neither = make_block(
            "Elm St",
            [
                (&["A1", "A2"], "PP-1", "PP-1", 0.3, 0.3),
                (&["B1", "B2"], "PP-2", "PP-2", 0.3, 0.3),
            ],
            VoteMethod::None,
        );
        let ds = select_shock_design(&blocks_for(&neither, Year::Y2016), &neither, &ShockConfig::default());
        assert_eq!(ds.dropped[0].1, DropReason::NeitherChanged);

        // Different 2012 places 0.4 miles apart in mean distance.
        let imbalance = make_block(
            "Pine St",
            [
                (&["A1", "A2"], "PP-1", "PP-1", 0.10, 0.10),
                (&["B1", "B2"], "PP-2", "PP-3", 0.50, 0.60),
            ],
            VoteMethod::None,
        );
        let ds = select_shock_design(&blocks_for(&imbalance, Year::Y2016), &imbalance, &ShockConfig::default());
        assert_eq!(ds.dropped[0].1, DropReason::BaselineImbalance);
    }

    #[test]
    fn shock_baseline_strictness_switch() {
        // 2012 means differ by exactly the bound (0.375 - 0.125 is exact
        // in binary floating point).
        let rs = make_block(
            "Pine St",
            [
                (&["A1", "A2"], "PP-1", "PP-1", 0.125, 0.125),
                (&["B1", "B2"], "PP-2", "PP-3", 0.375, 0.60),
            ],
            VoteMethod::None,
        );
        let blocks = blocks_for(&rs, Year::Y2016);
        let strict = select_shock_design(&blocks, &rs, &ShockConfig::default());
        assert_eq!(strict.dropped[0].1, DropReason::BaselineImbalance);
        let lenient = select_shock_design(
            &blocks,
            &rs,
            &ShockConfig { baseline_gap_miles: 0.25, baseline_strict: false },
        );
        assert_eq!(lenient.rows.len(), 4);
    }

    #[test]
    fn outcome_coding() {
        for (vote, expected) in [
            (VoteMethod::InPerson, (1, 0, 1)),
            (VoteMethod::Mail, (0, 1, 1)),
            (VoteMethod::Early, (0, 1, 1)),
            (VoteMethod::None, (0, 0, 0)),
        ] {
            assert_eq!(outcomes(vote), expected);
        }
    }

    #[test]
    fn window_subset_filters_whole_blocks() {
        let streets = ["Ash St", "Beech St", "Cedar St", "Dogwood St", "Elm St"];
        let gaps = [-0.2, 0.05, 0.3, 0.6, 1.2];
        let mut rs = Vec::new();
        for (street, gap) in streets.iter().zip(gaps) {
            rs.extend(make_block(
                street,
                [
                    (
                        &[&format!("{street}-a1")[..], &format!("{street}-a2")[..]],
                        "PP-1",
                        "PP-1",
                        0.30,
                        0.30,
                    ),
                    (
                        &[&format!("{street}-b1")[..], &format!("{street}-b2")[..]],
                        "PP-1",
                        "PP-2",
                        0.30,
                        0.30 + gap,
                    ),
                ],
                VoteMethod::None,
            ));
        }
        let ds = select_shock_design(&blocks_for(&rs, Year::Y2016), &rs, &ShockConfig::default());
        assert_eq!(ds.rows.len(), 20);

        let subset = window_subset(&ds, 0.25);
        let mut kept: Vec<f64> = subset.rows.iter().map(|r| r.distance_gap).collect();
        kept.sort_by(f64::total_cmp);
        kept.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(kept.len(), 3);
        assert!(kept.iter().zip([0.3, 0.6, 1.2]).all(|(a, b)| (a - b).abs() < 1e-9));

        // Identity at negative infinity; nesting across thresholds.
        assert_eq!(window_subset(&ds, f64::NEG_INFINITY).rows.len(), ds.rows.len());
        let wider = window_subset(&ds, 0.1);
        assert!(subset.rows.iter().all(|r| wider.rows.contains(r)));
    }

    #[test]
    fn classify_counts_precinct_names() {
        use crate::assignment::tests::test_place;
        let mut p2012 = Vec::new();
        let mut p2016 = Vec::new();
        // County milwaukee: 10 -> 8 precinct names.
        for i in 0..10 {
            p2012.push(test_place(&format!("P{i}"), &format!("prec {i}"), 2012, 43.0, -87.9));
        }
        for i in 0..8 {
            p2016.push(test_place(&format!("P{i}"), &format!("prec {i}"), 2016, 43.0, -87.9));
        }
        // County dane: unchanged.
        for year in [2012, 2016] {
            let mut p = test_place("D1", "dane prec", year, 43.1, -89.4);
            p.county = "dane".into();
            if year == 2012 {
                p2012.push(p);
            } else {
                p2016.push(p);
            }
        }
        let mut registrants = BTreeMap::new();
        registrants.insert(("wi".to_string(), "milwaukee".to_string()), 300u64);
        registrants.insert(("wi".to_string(), "dane".to_string()), 100u64);

        let summary = classify_shock_types(&p2012, &p2016, &registrants);
        assert_eq!(summary.counties.len(), 2);
        let mke = summary.counties.iter().find(|c| c.county == "milwaukee").unwrap();
        assert_eq!(mke.class, ShockClass::Removed);
        assert!(!mke.flagged);
        assert!((summary.pct_counties.removed - 50.0).abs() < 1e-9);
        assert!((summary.pct_counties.same - 50.0).abs() < 1e-9);
        assert!((summary.pct_registrants.removed - 75.0).abs() < 1e-9);
        let total = summary.pct_counties.removed + summary.pct_counties.added + summary.pct_counties.same;
        assert!((total - 100.0).abs() < 0.1);
    }

    #[test]
    fn classify_flags_single_year_counties() {
        use crate::assignment::tests::test_place;
        let p2012 = vec![test_place("P1", "prec 1", 2012, 43.0, -87.9)];
        let summary = classify_shock_types(&p2012, &[], &BTreeMap::new());
        assert_eq!(summary.counties[0].class, ShockClass::Removed);
        assert!(summary.counties[0].flagged);
    }

    #[test]
    fn all_same_is_all_same() {
        use crate::assignment::tests::test_place;
        let p2012 = vec![test_place("P1", "prec 1", 2012, 43.0, -87.9)];
        let p2016 = vec![test_place("P1", "prec 1", 2016, 43.0, -87.9)];
        let summary = classify_shock_types(&p2012, &p2016, &BTreeMap::new());
        assert!((summary.pct_counties.same - 100.0).abs() < 1e-9);
    }

    #[test]
    fn wrong_design_detection() {
        let empty = DesignDataset { kind: DesignKind::Distance, rows: vec![], dropped: vec![] };
        assert_eq!(require_kind(&empty, DesignKind::Shock), Err(DesignError::WrongDesign(DesignKind::Distance)));
        assert!(require_kind(&empty, DesignKind::Distance).is_ok());
    }
}
