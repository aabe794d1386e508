//! Block construction, staged eligibility filtering, and the filter ledger.
//!
//! A block groups registrants whose street number matches after the final
//! two digits are removed and who share street name, street type, city and
//! state. The filter pipeline applies the eligibility stages in a fixed
//! order and records the registrant count remaining after each stage, per
//! election year, in a [`FilterLedger`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::Assignment;
use crate::ingest::{Address, GeoPrecision, UspsCode, VoterRecord};
use crate::spatial::distance_miles;

/// Election year handled by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Year {
    Y2012,
    Y2016,
}

impl Year {
    pub fn as_u16(self) -> u16 {
        match self {
            Year::Y2012 => 2012,
            Year::Y2016 => 2016,
        }
    }
}

/// Identifier of a residential block.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockId {
    /// Street number with its final two digits removed ("123" -> "1").
    pub truncated_number: String,
    pub street_name: String,
    pub street_type: String,
    pub city: String,
    pub state: String,
}

impl BlockId {
    /// Canonical rendering: lowercase hyphen-joined components with the
    /// state code uppercased; internal spaces become hyphens.
    pub fn render(&self) -> String {
        let dash = |s: &str| s.replace(' ', "-");
        format!(
            "{}-{}-{}-{}-{}",
            self.truncated_number,
            dash(&self.street_name),
            dash(&self.street_type),
            dash(&self.city),
            self.state
        )
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BlockIdError {
    #[error("SHORT_NUMBER: street number {0:?} is missing, non-numeric, or shorter than 3 digits")]
    ShortNumber(String),
}

/// Borrowed view of a block identifier, used during pipeline stages so
/// grouping does not allocate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct BlockKey<'a> {
    truncated_number: &'a str,
    street_name: &'a str,
    street_type: &'a str,
    city: &'a str,
    state: &'a str,
}

impl BlockKey<'_> {
    fn to_owned_id(self) -> BlockId {
        BlockId {
            truncated_number: self.truncated_number.to_string(),
            street_name: self.street_name.to_string(),
            street_type: self.street_type.to_string(),
            city: self.city.to_string(),
            state: self.state.to_string(),
        }
    }
}

fn block_key(address: &Address) -> Result<BlockKey<'_>, BlockIdError> {
    let number = address
        .street_number
        .as_deref()
        .ok_or_else(|| BlockIdError::ShortNumber(String::new()))?;
    if number.len() < 3 || !number.chars().all(|c| c.is_ascii_digit()) {
        return Err(BlockIdError::ShortNumber(number.to_string()));
    }
    Ok(BlockKey {
        truncated_number: &number[..number.len() - 2],
        street_name: &address.street_name,
        street_type: &address.street_type,
        city: &address.city,
        state: &address.state,
    })
}

/// Derive the block identifier for an address.
///
/// The street number must be all-numeric and at least three digits; short
/// numbers are ambiguous across blocks and are refused.
pub fn block_id(address: &Address) -> Result<BlockId, BlockIdError> {
    block_key(address).map(BlockKey::to_owned_id)
}

/// One assignment group within a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub place_id: String,
    /// Sorted voter ids.
    pub members: Vec<String>,
}

/// A block partitioned into its two faces for one election year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    /// Exactly two faces, sorted by place id.
    pub faces: [Face; 2],
}

impl Block {
    pub fn members(&self) -> impl Iterator<Item = &str> {
        self.faces.iter().flat_map(|f| f.members.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockRejectReason {
    OnePlace,
    ThreePlusPlaces,
    SmallFace,
}

impl BlockRejectReason {
    pub fn code(self) -> &'static str {
        match self {
            BlockRejectReason::OnePlace => "ONE_PLACE",
            BlockRejectReason::ThreePlusPlaces => "THREE_PLUS_PLACES",
            BlockRejectReason::SmallFace => "SMALL_FACE",
        }
    }
}

/// One row of the filter ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub stage: String,
    pub n2012: u64,
    pub n2016: u64,
}

/// Ordered counts of registrants remaining after each pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterLedger {
    pub rows: Vec<LedgerRow>,
}

/// Name of the pre-filter row.
pub const STAGE_INITIAL: &str = "All potential voters";

/// Stage names, in pipeline order.
pub const STAGE_NAMES: [&str; 7] = [
    "Potential voters in valid voting jurisdictions (counties and polling places)",
    "Filter potential voters with valid address",
    "Filter potential voters with potential polling place assignment",
    "Filter to registered and plausible voters",
    "Filter to registrants who live on a block where all pairs of registrants live within .3 miles from one another",
    "Filter to registrants who live on the same block in 2012 as in 2016",
    "Filter to registrants in analysis",
];

impl FilterLedger {
    /// Counts must be weakly decreasing down each column.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].n2012 <= w[0].n2012 && w[1].n2016 <= w[0].n2016)
    }

    /// Machine export: JSON array of `{stage, n2012, n2016}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("ledger serializes")
    }

    /// Human-readable aligned table.
    pub fn render_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.stage.len()).max().unwrap_or(5).max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}", "Stage", "2012", "2016");
        for row in &self.rows {
            let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}", row.stage, row.n2012, row.n2016);
        }
        out
    }
}

/// A registrant that survived every filter stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registrant {
    pub voter_id: String,
    pub block: BlockId,
    pub record_2012: VoterRecord,
    pub record_2016: VoterRecord,
    pub assignment_2012: Assignment,
    pub assignment_2016: Assignment,
}

impl Registrant {
    pub fn assignment(&self, year: Year) -> &Assignment {
        match year {
            Year::Y2012 => &self.assignment_2012,
            Year::Y2016 => &self.assignment_2016,
        }
    }

    pub fn record(&self, year: Year) -> &VoterRecord {
        match year {
            Year::Y2012 => &self.record_2012,
            Year::Y2016 => &self.record_2016,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("voter id spaces differ between the 2012 and 2016 snapshots ({0})")]
    InconsistentSnapshots(String),
    #[error("duplicate voter id {0:?} within one snapshot")]
    DuplicateVoterId(String),
    #[error("assignment year mismatch for voter {0:?}")]
    AssignmentYearMismatch(String),
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineConfig {
    /// Maximum pairwise distance between same-block registrants, in miles.
    /// Pairs farther apart than this drop the whole block; exactly at the
    /// threshold is kept.
    pub block_pair_miles: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { block_pair_miles: 0.3 }
    }
}

/// Vote-center counties, keyed by normalized `(state, county)`.
pub type VoteCenterCounties = BTreeSet<(String, String)>;

pub fn county_key(state: &str, county: &str) -> (String, String) {
    let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    (norm(state), norm(county))
}

/// Read a `state,county` table of counties that hosted vote centers.
pub fn read_vote_centers<R: std::io::Read>(source: R) -> std::io::Result<VoteCenterCounties> {
    let mut reader = csv::ReaderBuilder::new().from_reader(source);
    let headers = reader.headers().map_err(std::io::Error::other)?.clone();
    let state_idx = headers.iter().position(|h| h.trim() == "state");
    let county_idx = headers.iter().position(|h| h.trim() == "county");
    let (Some(state_idx), Some(county_idx)) = (state_idx, county_idx) else {
        return Err(std::io::Error::other("vote-center file needs state and county columns"));
    };
    let mut out = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(std::io::Error::other)?;
        let state = record.get(state_idx).unwrap_or("").trim();
        let county = record.get(county_idx).unwrap_or("").trim();
        if !state.is_empty() && !county.is_empty() {
            out.insert(county_key(state, county));
        }
    }
    Ok(out)
}

struct YearData<'a> {
    records: &'a [VoterRecord],
    assignment_rows: &'a [Assignment],
    /// record index -> assignment index.
    assignment_of: Vec<Option<u32>>,
    alive: Vec<bool>,
    /// record index -> block key, filled at the block-eligibility stage.
    blocks: Vec<Option<BlockKey<'a>>>,
}

impl YearData<'_> {
    fn survivors(&self) -> u64 {
        self.alive.iter().filter(|a| **a).count() as u64
    }

    fn retain_records(&mut self, keep: impl Fn(&VoterRecord) -> bool) {
        for (i, alive) in self.alive.iter_mut().enumerate() {
            if *alive && !keep(&self.records[i]) {
                *alive = false;
            }
        }
    }
}

/// Run the staged eligibility filters over both snapshots.
///
/// Takes its inputs by value so surviving records move into the output
/// rather than being copied. Returns the survivors (sorted by voter id) and
/// the ledger of per-stage counts. Both snapshots must cover the same voter
/// ids.
pub fn run_filter_pipeline(
    voters_2012: Vec<VoterRecord>,
    voters_2016: Vec<VoterRecord>,
    assignments_2012: Vec<Assignment>,
    assignments_2016: Vec<Assignment>,
    vote_center_counties: &VoteCenterCounties,
    config: &PipelineConfig,
) -> Result<(Vec<Registrant>, FilterLedger), PipelineError> {
    struct Chosen {
        block: BlockId,
        record_idx: (usize, usize),
        assignment_idx: (usize, usize),
    }

    let (ledger, chosen) = {
        let mut y12 = index_year(&voters_2012, &assignments_2012, 2012)?;
        let mut y16 = index_year(&voters_2016, &assignments_2016, 2016)?;

        // Pair up the two snapshots by voter id; the id spaces must agree.
        fn sorted_ids(voters: &[VoterRecord]) -> Vec<(usize, &str)> {
            let mut ids: Vec<(usize, &str)> =
                voters.iter().enumerate().map(|(i, v)| (i, v.voter_id.as_str())).collect();
            ids.sort_unstable_by_key(|(_, id)| *id);
            ids
        }
        let ids12 = sorted_ids(&voters_2012);
        let ids16 = sorted_ids(&voters_2016);
        if let Some(((_, a), (_, b))) = ids12.iter().zip(&ids16).find(|((_, a), (_, b))| a != b) {
            let example = if a < b { a } else { b };
            return Err(PipelineError::InconsistentSnapshots(format!(
                "example voter id present in only one snapshot: {example:?}"
            )));
        }
        if ids12.len() != ids16.len() {
            return Err(PipelineError::InconsistentSnapshots(
                "snapshot sizes differ".to_string(),
            ));
        }
        // pairs[k] = (record index in 2012, record index in 2016), sorted by id.
        let pairs: Vec<(usize, usize)> =
            ids12.iter().zip(&ids16).map(|((i12, _), (i16, _))| (*i12, *i16)).collect();

        let mut ledger = FilterLedger { rows: Vec::with_capacity(8) };
        let push = |ledger: &mut FilterLedger, stage: &str, a: &YearData, b: &YearData| {
            ledger.rows.push(LedgerRow {
                stage: stage.to_string(),
                n2012: a.survivors(),
                n2016: b.survivors(),
            });
        };
        push(&mut ledger, STAGE_INITIAL, &y12, &y16);

        // Stage 1: valid voting jurisdictions. A county with a vote center
        // in either year is excluded from both.
        if !vote_center_counties.is_empty() {
            for year in [&mut y12, &mut y16] {
                year.retain_records(|r| {
                    !vote_center_counties.contains(&county_key(&r.state, &r.county))
                });
            }
        }
        push(&mut ledger, STAGE_NAMES[0], &y12, &y16);

        // Stage 2: valid address.
        for year in [&mut y12, &mut y16] {
            year.retain_records(|r| {
                let addr = &r.address;
                let has_address =
                    !addr.street_name.is_empty() && !addr.city.is_empty() && !addr.state.is_empty();
                has_address
                    && r.geocode.is_some()
                    && r.current_address_matches_registration
                    && r.geo_precision == GeoPrecision::Street
                    && matches!(
                        r.usps_code,
                        UspsCode::HighRise
                            | UspsCode::Building
                            | UspsCode::Apartment
                            | UspsCode::StreetAddress
                    )
            });
        }
        push(&mut ledger, STAGE_NAMES[1], &y12, &y16);

        // Stage 3: has a polling place assignment.
        for year in [&mut y12, &mut y16] {
            for i in 0..year.alive.len() {
                if year.alive[i] && year.assignment_of[i].is_none() {
                    year.alive[i] = false;
                }
            }
        }
        push(&mut ledger, STAGE_NAMES[2], &y12, &y16);

        // Stage 4: registered and not deceased.
        for year in [&mut y12, &mut y16] {
            year.retain_records(|r| r.registered && !r.deceased);
        }
        push(&mut ledger, STAGE_NAMES[3], &y12, &y16);

        // Stage 5: block eligibility. Registrants without a valid block id
        // go; then any same-block pair farther apart than the threshold
        // drops the whole block.
        for year in [&mut y12, &mut y16] {
            apply_block_stage(year, config.block_pair_miles);
        }
        push(&mut ledger, STAGE_NAMES[4], &y12, &y16);

        // Stage 6: same block in both years.
        for &(i12, i16) in &pairs {
            let keep = y12.alive[i12] && y16.alive[i16] && y12.blocks[i12] == y16.blocks[i16];
            y12.alive[i12] = keep;
            y16.alive[i16] = keep;
        }
        push(&mut ledger, STAGE_NAMES[5], &y12, &y16);

        // Stage 7: administrative consistency. Drop blocks where one
        // address or one geocode maps to more than one polling place in
        // either year.
        let mut bad_blocks: BTreeSet<BlockKey> = BTreeSet::new();
        for year in [&y12, &y16] {
            let mut members: Vec<(BlockKey, usize)> = year
                .alive
                .iter()
                .enumerate()
                .filter(|(_, alive)| **alive)
                .map(|(i, _)| (year.blocks[i].expect("alive implies block"), i))
                .collect();
            members.sort_unstable();
            let mut group_start = 0;
            while group_start < members.len() {
                let key = members[group_start].0;
                let mut group_end = group_start + 1;
                while group_end < members.len() && members[group_end].0 == key {
                    group_end += 1;
                }
                let group = &members[group_start..group_end];
                let mut rows: Vec<(&Address, u64, u64, &str)> = group
                    .iter()
                    .map(|&(_, i)| {
                        let r = &year.records[i];
                        let g = r.geocode.expect("stage 2 kept geocodes");
                        let a = &year.assignment_rows
                            [year.assignment_of[i].expect("stage 3 kept assigned") as usize];
                        (&r.address, g.lat.to_bits(), g.lon.to_bits(), a.place_id.as_str())
                    })
                    .collect();
                let mut conflict = false;
                rows.sort_unstable_by(|a, b| a.0.cmp(b.0));
                conflict |= rows.windows(2).any(|w| w[0].0 == w[1].0 && w[0].3 != w[1].3);
                rows.sort_unstable_by(|a, b| (a.1, a.2).cmp(&(b.1, b.2)));
                conflict |= rows
                    .windows(2)
                    .any(|w| (w[0].1, w[0].2) == (w[1].1, w[1].2) && w[0].3 != w[1].3);
                if conflict {
                    bad_blocks.insert(key);
                }
                group_start = group_end;
            }
        }
        if !bad_blocks.is_empty() {
            for year in [&mut y12, &mut y16] {
                for i in 0..year.alive.len() {
                    if year.alive[i] && bad_blocks.contains(&year.blocks[i].expect("alive")) {
                        year.alive[i] = false;
                    }
                }
            }
        }
        push(&mut ledger, STAGE_NAMES[6], &y12, &y16);

        debug_assert!(ledger.is_monotone());

        // pairs is sorted by voter id, so the output is too.
        let chosen: Vec<Chosen> = pairs
            .iter()
            .filter(|&&(_, i16)| y16.alive[i16])
            .map(|&(i12, i16)| Chosen {
                block: y16.blocks[i16].expect("alive implies block").to_owned_id(),
                record_idx: (i12, i16),
                assignment_idx: (
                    y12.assignment_of[i12].expect("stage 3") as usize,
                    y16.assignment_of[i16].expect("stage 3") as usize,
                ),
            })
            .collect();
        (ledger, chosen)
    };

    let mut v12: Vec<Option<VoterRecord>> = voters_2012.into_iter().map(Some).collect();
    let mut v16: Vec<Option<VoterRecord>> = voters_2016.into_iter().map(Some).collect();
    let mut a12: Vec<Option<Assignment>> = assignments_2012.into_iter().map(Some).collect();
    let mut a16: Vec<Option<Assignment>> = assignments_2016.into_iter().map(Some).collect();
    let registrants = chosen
        .into_iter()
        .map(|c| {
            let record_2016 = v16[c.record_idx.1].take().expect("unique record");
            Registrant {
                voter_id: record_2016.voter_id.clone(),
                block: c.block,
                record_2012: v12[c.record_idx.0].take().expect("unique record"),
                record_2016,
                assignment_2012: a12[c.assignment_idx.0].take().expect("unique assignment"),
                assignment_2016: a16[c.assignment_idx.1].take().expect("unique assignment"),
            }
        })
        .collect();
    Ok((registrants, ledger))
}

fn index_year<'a>(
    voters: &'a [VoterRecord],
    assignments: &'a [Assignment],
    year: u16,
) -> Result<YearData<'a>, PipelineError> {
    let mut by_id: std::collections::HashMap<&str, u32> =
        std::collections::HashMap::with_capacity(voters.len());
    for (i, v) in voters.iter().enumerate() {
        if by_id.insert(v.voter_id.as_str(), i as u32).is_some() {
            return Err(PipelineError::DuplicateVoterId(v.voter_id.clone()));
        }
    }
    let mut assignment_of = vec![None; voters.len()];
    for (i, a) in assignments.iter().enumerate() {
        if a.election_year != year {
            return Err(PipelineError::AssignmentYearMismatch(a.voter_id.clone()));
        }
        if let Some(&record) = by_id.get(a.voter_id.as_str()) {
            assignment_of[record as usize] = Some(i as u32);
        }
    }
    Ok(YearData {
        records: voters,
        assignment_rows: assignments,
        assignment_of,
        alive: vec![true; voters.len()],
        blocks: vec![None; voters.len()],
    })
}

fn apply_block_stage<'a>(year: &mut YearData<'a>, pair_miles: f64) {
    let records = year.records;
    let mut members: Vec<(BlockKey<'a>, u32)> = Vec::new();
    for (i, alive) in year.alive.iter_mut().enumerate() {
        if !*alive {
            continue;
        }
        match block_key(&records[i].address) {
            Ok(key) => members.push((key, i as u32)),
            Err(_) => *alive = false,
        }
    }
    members.sort_unstable();

    // Group boundaries over the sorted members.
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    while start < members.len() {
        let mut end = start + 1;
        while end < members.len() && members[end].0 == members[start].0 {
            end += 1;
        }
        groups.push((start, end));
        start = end;
    }

    let dropped: Vec<bool> = groups
        .par_iter()
        .map(|&(start, end)| {
            let group = &members[start..end];
            group.iter().enumerate().any(|(i, (_, a))| {
                let ga = records[*a as usize].geocode.expect("stage 2 kept geocodes");
                group[i + 1..].iter().any(|(_, b)| {
                    let gb = records[*b as usize].geocode.expect("stage 2 kept geocodes");
                    distance_miles(ga, gb).expect("validated coordinates") > pair_miles
                })
            })
        })
        .collect();

    for (&(start, end), dropped) in groups.iter().zip(dropped) {
        for &(key, i) in &members[start..end] {
            if dropped {
                year.alive[i as usize] = false;
            } else {
                year.blocks[i as usize] = Some(key);
            }
        }
    }
}

/// Group surviving registrants into two-face blocks for one year.
///
/// Blocks with one polling place, three or more places, or a face smaller
/// than two members are rejected with the corresponding reason.
pub fn build_blocks(
    registrants: &[Registrant],
    year: Year,
) -> (Vec<Block>, Vec<(BlockId, BlockRejectReason)>) {
    let mut groups: BTreeMap<&BlockId, Vec<&Registrant>> = BTreeMap::new();
    for r in registrants {
        groups.entry(&r.block).or_default().push(r);
    }

    let mut blocks = Vec::new();
    let mut rejects = Vec::new();
    for (id, members) in groups {
        let mut faces: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for r in &members {
            faces.entry(r.assignment(year).place_id.as_str()).or_default().push(r.voter_id.clone());
        }
        match faces.len() {
            1 => rejects.push((id.clone(), BlockRejectReason::OnePlace)),
            2 => {
                if faces.values().any(|m| m.len() < 2) {
                    rejects.push((id.clone(), BlockRejectReason::SmallFace));
                } else {
                    let mut it = faces.into_iter();
                    let (p1, mut m1) = it.next().expect("two faces");
                    let (p2, mut m2) = it.next().expect("two faces");
                    m1.sort();
                    m2.sort();
                    blocks.push(Block {
                        id: id.clone(),
                        faces: [
                            Face { place_id: p1.to_string(), members: m1 },
                            Face { place_id: p2.to_string(), members: m2 },
                        ],
                    });
                }
            }
            _ => rejects.push((id.clone(), BlockRejectReason::ThreePlusPlaces)),
        }
    }
    (blocks, rejects)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_address;
    use crate::spatial::GeoPoint;

    #[test]
    fn block_id_truncation() {
        let a = parse_address("123 Main St, Milwaukee, WI").unwrap();
        assert_eq!(block_id(&a).unwrap().render(), "1-main-street-milwaukee-WI");

        let b = parse_address("2000 Third St, Milwaukee, WI").unwrap();
        assert_eq!(block_id(&b).unwrap().render(), "20-third-street-milwaukee-WI");
    }

    #[test]
    fn short_numbers_are_refused() {
        let a = parse_address("80 Park Rd, Doeville, TX").unwrap();
        assert_eq!(block_id(&a), Err(BlockIdError::ShortNumber("80".into())));
        let b = parse_address("Park Rd, Doeville, TX").unwrap();
        assert!(matches!(block_id(&b), Err(BlockIdError::ShortNumber(_))));
    }

    fn voter(id: &str, street: &str, lat: f64, lon: f64) -> VoterRecord {
        let mut v = crate::assignment::tests::test_voter(id, "P1", lat, lon);
        v.address = parse_address(&format!("{street}, Milwaukee, WI")).unwrap();
        v.household_key = format!("hh-{id}");
        v
    }

    fn assignment(id: &str, year: u16, place: &str) -> Assignment {
        Assignment {
            voter_id: id.into(),
            election_year: year,
            place_id: place.into(),
            distance_miles: 0.2,
        }
    }

    /// Six voters on one block split across two places, plus engineered
    /// losses at every stage.
    fn small_population() -> (Vec<VoterRecord>, Vec<VoterRecord>, Vec<Assignment>, Vec<Assignment>) {
        let mut v2016 = Vec::new();
        // Survivors: one block, faces of 3 (PP-A) and 3 (PP-B).
        for (i, id) in ["S1", "S2", "S3", "S4", "S5", "S6"].iter().enumerate() {
            v2016.push(voter(id, &format!("{} Oak St", 500 + i), 43.04 + i as f64 * 1e-4, -87.91));
        }
        // Vote-center county.
        let mut vc = voter("L1", "700 Elm St", 43.1, -87.9);
        vc.county = "waukesha".into();
        v2016.push(vc);
        // Bad address metadata.
        let mut precision = voter("L2", "701 Elm St", 43.1, -87.9);
        precision.geo_precision = GeoPrecision::ZipCode;
        v2016.push(precision);
        // No assignment.
        v2016.push(voter("L3", "702 Elm St", 43.1, -87.9));
        // Deceased.
        let mut dead = voter("L4", "703 Elm St", 43.1, -87.9);
        dead.deceased = true;
        v2016.push(dead);
        // Short street number.
        v2016.push(voter("L5", "80 Park Rd", 43.1, -87.9));
        // Block with a far pair: two voters 0.5 miles apart.
        v2016.push(voter("L6", "900 Pine St", 43.2, -87.9));
        v2016.push(voter("L7", "901 Pine St", 43.2 + 0.00724, -87.9));
        // Mover: 2016 address differs from 2012.
        v2016.push(voter("L8", "300 Cedar St", 43.3, -87.9));
        // Admin conflict: same address, two places.
        v2016.push(voter("L9", "600 Birch St", 43.4, -87.9));
        v2016.push(voter("L10", "600 Birch St", 43.4, -87.9));

        let mut v2012 = v2016.clone();
        let idx = v2012.iter().position(|v| v.voter_id == "L8").unwrap();
        v2012[idx].address = parse_address("300 Walnut St, Milwaukee, WI").unwrap();

        let mut a2016 = Vec::new();
        let mut a2012 = Vec::new();
        for id in ["S1", "S2", "S3"] {
            a2016.push(assignment(id, 2016, "PP-A"));
            a2012.push(assignment(id, 2012, "PP-A"));
        }
        for id in ["S4", "S5", "S6"] {
            a2016.push(assignment(id, 2016, "PP-B"));
            a2012.push(assignment(id, 2012, "PP-B"));
        }
        for id in ["L1", "L2", "L4", "L5", "L6", "L7", "L8"] {
            a2016.push(assignment(id, 2016, "PP-X"));
            a2012.push(assignment(id, 2012, "PP-X"));
        }
        a2016.push(assignment("L9", 2016, "PP-A"));
        a2012.push(assignment("L9", 2012, "PP-A"));
        a2016.push(assignment("L10", 2016, "PP-B"));
        a2012.push(assignment("L10", 2012, "PP-B"));
        (v2012, v2016, a2012, a2016)
    }

    fn vote_centers() -> VoteCenterCounties {
        let mut set = BTreeSet::new();
        set.insert(county_key("WI", "waukesha"));
        set
    }

    #[test]
    fn pipeline_counts_each_stage() {
        let (v2012, v2016, a2012, a2016) = small_population();
        let (registrants, ledger) = run_filter_pipeline(
            v2012,
            v2016,
            a2012,
            a2016,
            &vote_centers(),
            &PipelineConfig::default(),
        )
        .unwrap();

        let counts: Vec<u64> = ledger.rows.iter().map(|r| r.n2016).collect();
        // 16 in; lose L1, L2, L3, L4, L5, {L6,L7}, L8, {L9,L10}.
        assert_eq!(counts, vec![16, 15, 14, 13, 12, 9, 8, 6]);
        assert!(ledger.is_monotone());
        assert_eq!(ledger.rows[0].stage, STAGE_INITIAL);
        for (row, name) in ledger.rows[1..].iter().zip(STAGE_NAMES) {
            assert_eq!(row.stage, name);
        }
        assert_eq!(
            registrants.iter().map(|r| r.voter_id.as_str()).collect::<Vec<_>>(),
            vec!["S1", "S2", "S3", "S4", "S5", "S6"]
        );
    }

    #[test]
    fn clean_population_has_constant_ledger() {
        let (mut v2012, mut v2016, mut a2012, mut a2016) = small_population();
        let keep = ["S1", "S2", "S3", "S4", "S5", "S6"];
        v2012.retain(|v| keep.contains(&v.voter_id.as_str()));
        v2016.retain(|v| keep.contains(&v.voter_id.as_str()));
        a2012.retain(|a| keep.contains(&a.voter_id.as_str()));
        a2016.retain(|a| keep.contains(&a.voter_id.as_str()));

        let (_, ledger) = run_filter_pipeline(
            v2012,
            v2016,
            a2012,
            a2016,
            &vote_centers(),
            &PipelineConfig::default(),
        )
        .unwrap();
        assert!(ledger.rows.iter().all(|r| r.n2012 == 6 && r.n2016 == 6));
    }

    #[test]
    fn pipeline_is_idempotent() {
        let (v2012, v2016, a2012, a2016) = small_population();
        let config = PipelineConfig::default();
        let (registrants, _) =
            run_filter_pipeline(v2012, v2016, a2012, a2016, &vote_centers(), &config).unwrap();

        let r2012: Vec<VoterRecord> = registrants.iter().map(|r| r.record_2012.clone()).collect();
        let r2016: Vec<VoterRecord> = registrants.iter().map(|r| r.record_2016.clone()).collect();
        let ra2012: Vec<Assignment> = registrants.iter().map(|r| r.assignment_2012.clone()).collect();
        let ra2016: Vec<Assignment> = registrants.iter().map(|r| r.assignment_2016.clone()).collect();
        let (again, ledger) =
            run_filter_pipeline(r2012, r2016, ra2012, ra2016, &vote_centers(), &config).unwrap();
        assert_eq!(registrants, again);
        assert!(ledger.rows.iter().all(|r| r.n2012 == registrants.len() as u64));
    }

    #[test]
    fn inconsistent_snapshots_are_fatal() {
        let (v2012, v2016, a2012, a2016) = small_population();
        let shorter = v2012[..v2012.len() - 1].to_vec();
        let err = run_filter_pipeline(
            shorter,
            v2016,
            a2012,
            a2016,
            &vote_centers(),
            &PipelineConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PipelineError::InconsistentSnapshots(_)));
    }

    #[test]
    fn exactly_threshold_distance_is_kept() {
        // Two voters exactly 0.3 miles apart stay; just over goes.
        let dlat_at_threshold = 0.3 / 69.09341843;
        let make = |id: &str, offset: f64| {
            let mut v = voter(id, if id == "A1" { "100 Ash St" } else { "101 Ash St" }, 43.0, -87.9);
            v.geocode = Some(GeoPoint { lat: 43.0 + offset, lon: -87.9 });
            v
        };
        let voters = vec![make("A1", 0.0), make("A2", dlat_at_threshold * 0.9999)];
        let assignments: Vec<Assignment> = voters
            .iter()
            .map(|v| assignment(&v.voter_id, 2016, "PP-A"))
            .collect();
        let assignments_2012: Vec<Assignment> = voters
            .iter()
            .map(|v| assignment(&v.voter_id, 2012, "PP-A"))
            .collect();
        let (kept, _) = run_filter_pipeline(
            voters.clone(),
            voters,
            assignments_2012.clone(),
            assignments.clone(),
            &BTreeSet::new(),
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(kept.len(), 2);

        let voters_far = vec![make("A1", 0.0), make("A2", dlat_at_threshold * 1.01)];
        let (kept, _) = run_filter_pipeline(
            voters_far.clone(),
            voters_far,
            assignments_2012,
            assignments,
            &BTreeSet::new(),
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(kept.len(), 0);
    }

    fn registrant(id: &str, street: &str, place12: &str, place16: &str) -> Registrant {
        let v = voter(id, street, 43.0, -87.9);
        let block = block_id(&v.address).unwrap();
        Registrant {
            voter_id: id.into(),
            block,
            record_2012: v.clone(),
            record_2016: v,
            assignment_2012: assignment(id, 2012, place12),
            assignment_2016: assignment(id, 2016, place16),
        }
    }

    #[test]
    fn build_blocks_keeps_balanced_two_place_blocks() {
        let rs = vec![
            registrant("V1", "100 Oak St", "PP-1", "PP-1"),
            registrant("V2", "102 Oak St", "PP-1", "PP-1"),
            registrant("V3", "104 Oak St", "PP-1", "PP-1"),
            registrant("V4", "101 Oak St", "PP-2", "PP-2"),
            registrant("V5", "103 Oak St", "PP-2", "PP-2"),
        ];
        let (blocks, rejects) = build_blocks(&rs, Year::Y2016);
        assert!(rejects.is_empty());
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].faces[0].place_id, "PP-1");
        assert_eq!(blocks[0].faces[0].members, vec!["V1", "V2", "V3"]);
        assert_eq!(blocks[0].faces[1].members, vec!["V4", "V5"]);
    }

    #[test]
    fn build_blocks_reject_reasons() {
        let one_place = vec![
            registrant("V1", "100 Oak St", "PP-1", "PP-1"),
            registrant("V2", "102 Oak St", "PP-1", "PP-1"),
        ];
        let (blocks, rejects) = build_blocks(&one_place, Year::Y2016);
        assert!(blocks.is_empty());
        assert_eq!(rejects[0].1, BlockRejectReason::OnePlace);

        let three = vec![
            registrant("V1", "100 Oak St", "PP-1", "PP-1"),
            registrant("V2", "102 Oak St", "PP-2", "PP-2"),
            registrant("V3", "104 Oak St", "PP-3", "PP-3"),
            registrant("V4", "106 Oak St", "PP-1", "PP-1"),
        ];
        let (_, rejects) = build_blocks(&three, Year::Y2016);
        assert_eq!(rejects[0].1, BlockRejectReason::ThreePlusPlaces);

        let small = vec![
            registrant("V1", "100 Oak St", "PP-1", "PP-1"),
            registrant("V2", "102 Oak St", "PP-1", "PP-1"),
            registrant("V3", "104 Oak St", "PP-1", "PP-1"),
            registrant("V4", "106 Oak St", "PP-2", "PP-2"),
        ];
        let (_, rejects) = build_blocks(&small, Year::Y2016);
        assert_eq!(rejects[0].1, BlockRejectReason::SmallFace);
    }

    #[test]
    fn ledger_json_shape() {
        let ledger = FilterLedger {
            rows: vec![LedgerRow { stage: "All potential voters".into(), n2012: 2, n2016: 3 }],
        };
        assert_eq!(
            ledger.to_json(),
            "[\n  {\n    \"stage\": \"All potential voters\",\n    \"n2012\": 2,\n    \"n2016\": 3\n  }\n]"
        );
        assert!(ledger.render_table().contains("All potential voters"));
    }
}
