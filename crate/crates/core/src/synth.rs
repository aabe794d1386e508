//! Synthetic populations with known ground truth that survive the whole
//! pipeline, for estimator-recovery and golden-ledger testing.
//!
//! Geometry is jittered points around a block centroid with polling places
//! at controlled distances due north, which satisfies every pipeline
//! constraint: same-block pairs sit well inside the pairwise limit, both
//! faces have at least two members, and assignments stay under the distance
//! cap. Treatment effects shift outcome probabilities additively, matching
//! the linear probability model of the estimator.

use std::collections::BTreeMap;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::designs::DesignKind;
use crate::geocode::{GeocodeMetadata, LocationType, ReplayGeocoder};
use crate::ingest::{parse_address, Address};
use crate::spatial::{distance_miles, EARTH_RADIUS_MILES, GeoPoint};

/// Inclusive integer range for face and household sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeRange {
    pub min: usize,
    pub max: usize,
}

/// Uniform range of distance gaps in miles. Sign-carrying for the shock
/// design; must be positive for the distance design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRange {
    pub min: f64,
    pub max: f64,
}

/// Engineered losses at the block stages of the filter pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossInjection {
    /// Voters with two-digit street numbers (lost at the block stage).
    pub short_number_voters: usize,
    /// Three-member blocks with one member past the pair limit (each loses
    /// three voters at the block stage).
    pub far_pair_blocks: usize,
    /// Voters whose 2016 address is on a different block (lost at the
    /// same-block stage).
    pub movers: usize,
    /// Two-voter blocks whose shared address maps to two polling places
    /// (each loses two voters at the consistency stage).
    pub admin_conflict_blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    pub n_blocks: usize,
    pub face_size: SizeRange,
    pub household_size: SizeRange,
    pub p_in_person: f64,
    pub p_substitution: f64,
    pub theta_in_person: f64,
    pub theta_substitution: f64,
    pub design: DesignKind,
    pub gap_miles: GapRange,
    /// State labels with population shares summing to one.
    pub states: Vec<(String, f64)>,
    /// Within-household outcome correlation in [0, 1).
    pub rho_household: f64,
    /// 2012 baseline propensities (no treatment effect in the pre-period).
    pub p12_in_person: f64,
    pub p12_substitution: f64,
    pub loss_injection: Option<LossInjection>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 1,
            n_blocks: 1000,
            face_size: SizeRange { min: 2, max: 6 },
            household_size: SizeRange { min: 1, max: 3 },
            p_in_person: 0.45,
            p_substitution: 0.15,
            theta_in_person: -0.016,
            theta_substitution: 0.017,
            design: DesignKind::Distance,
            gap_miles: GapRange { min: 0.02, max: 1.0 },
            states: vec![
                ("WI".to_string(), 0.4),
                ("IA".to_string(), 0.3),
                ("NC".to_string(), 0.3),
            ],
            rho_household: 0.3,
            p12_in_person: 0.45,
            p12_substitution: 0.15,
            loss_injection: None,
        }
    }
}

/// What the generator knows that the pipeline must recover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Treatment flag per analysis voter id.
    pub treatment: BTreeMap<String, bool>,
    pub theta_in_person: f64,
    pub theta_substitution: f64,
    pub theta_any: f64,
    pub n_units: usize,
    /// SHA-256 over all emitted file bytes; stable for equal seeds.
    pub checksum: String,
}

/// Generated file bytes in the ingest formats, plus ground truth.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub voters_2012: Vec<u8>,
    pub voters_2016: Vec<u8>,
    /// Single polling-place file carrying both years via the year column.
    pub places: Vec<u8>,
    /// JSON-lines replay fixture for the geocoder client.
    pub geocoder_fixture: Vec<u8>,
    /// `state,substitution_2012` covariate table (empirical 2012 shares).
    pub state_covariates: Vec<u8>,
    pub truth: GroundTruth,
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("BAD_PARAMS: {0}")]
    BadParams(String),
}

pub const VOTER_HEADER: [&str; 22] = [
    "voter_id",
    "address",
    "city",
    "state",
    "zip",
    "lat",
    "lon",
    "geo_precision",
    "usps_code",
    "current_address_matches",
    "registered",
    "deceased",
    "precinct",
    "county",
    "household_id",
    "vote_2012",
    "vote_2016",
    "age_bracket",
    "gender",
    "partisanship",
    "race",
    "home_sale_price",
];

pub const PLACE_HEADER: [&str; 11] = [
    "place_id",
    "election_year",
    "address",
    "city",
    "state",
    "zip",
    "place_description",
    "precinct",
    "county",
    "lat",
    "lon",
];

fn validate(params: &SynthParams) -> Result<(), SynthError> {
    let bad = |msg: &str| Err(SynthError::BadParams(msg.to_string()));
    if params.n_blocks == 0 {
        return bad("n_blocks must be positive");
    }
    if params.face_size.min < 2 || params.face_size.min > params.face_size.max {
        return bad("face_size needs 2 <= min <= max");
    }
    if params.face_size.max > 40 {
        return bad("face_size.max above 40 exceeds the house-number budget");
    }
    if params.household_size.min < 1 || params.household_size.min > params.household_size.max {
        return bad("household_size needs 1 <= min <= max");
    }
    if !(0.0..1.0).contains(&params.rho_household) {
        return bad("rho_household must be in [0, 1)");
    }
    for (label, p, theta) in [
        ("in_person", params.p_in_person, params.theta_in_person),
        ("substitution", params.p_substitution, params.theta_substitution),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(SynthError::BadParams(format!("p_{label} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&(p + theta)) {
            return Err(SynthError::BadParams(format!(
                "p_{label} + theta_{label} leaves [0, 1]; inputs are rejected, not clamped"
            )));
        }
    }
    for (label, p) in [("p12_in_person", params.p12_in_person), ("p12_substitution", params.p12_substitution)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(SynthError::BadParams(format!("{label} outside [0, 1]")));
        }
    }
    if params.p_in_person + params.p_substitution > 1.0 {
        return bad("p_in_person + p_substitution exceeds 1");
    }
    let shifted = params.p_in_person + params.theta_in_person + params.p_substitution + params.theta_substitution;
    if shifted > 1.0 {
        return bad("treated-arm probabilities exceed 1");
    }
    if params.p12_in_person + params.p12_substitution > 1.0 {
        return bad("2012 propensities exceed 1");
    }
    if params.gap_miles.min > params.gap_miles.max {
        return bad("gap_miles range is inverted");
    }
    if params.design == DesignKind::Distance && params.gap_miles.min <= 0.0 {
        return bad("distance design needs strictly positive gaps");
    }
    if params.states.is_empty() {
        return bad("at least one state required");
    }
    let share_sum: f64 = params.states.iter().map(|(_, s)| s).sum();
    if params.states.iter().any(|(_, s)| *s <= 0.0) || (share_sum - 1.0).abs() > 1e-9 {
        return bad("state shares must be positive and sum to 1");
    }
    Ok(())
}

const DEG_PER_MILE_LAT: f64 = 180.0 / (std::f64::consts::PI * EARTH_RADIUS_MILES);

struct VoterRow {
    voter_id: String,
    street_2012: Rc<str>,
    street_2016: Rc<str>,
    city: Rc<str>,
    state: Rc<str>,
    geocode_2012: GeoPoint,
    geocode_2016: GeoPoint,
    precinct_2012: Rc<str>,
    precinct_2016: Rc<str>,
    county: Rc<str>,
    household: Rc<str>,
    vote_2012: &'static str,
    vote_2016: &'static str,
    demographics: [&'static str; 4],
    home_sale_price: Option<f64>,
}

struct PlaceRow {
    place_id: String,
    year: u16,
    street: String,
    city: Rc<str>,
    state: Rc<str>,
    description: String,
    precinct: String,
    county: Rc<str>,
    point: GeoPoint,
}

fn pick(rng: &mut ChaCha8Rng, choices: &[(&'static str, f64)]) -> &'static str {
    let mut u: f64 = rng.gen();
    for (label, p) in choices {
        if u < *p {
            return label;
        }
        u -= p;
    }
    choices.last().expect("non-empty choices").0
}

fn demographics(rng: &mut ChaCha8Rng) -> [&'static str; 4] {
    let age = pick(rng, &[("18-30", 0.2), ("31-45", 0.25), ("46-60", 0.25), ("61+", 0.3)]);
    let gender = pick(rng, &[("f", 0.48), ("m", 0.48), ("x", 0.04)]);
    let party = pick(rng, &[("dem", 0.35), ("rep", 0.35), ("ind", 0.3)]);
    let race = pick(rng, &[("w", 0.6), ("b", 0.15), ("h", 0.15), ("a", 0.07), ("o", 0.03)]);
    [age, gender, party, race]
}

fn vote_2016(rng: &mut ChaCha8Rng, params: &SynthParams, treated: bool, u_house: f64) -> &'static str {
    let u_own: f64 = rng.gen();
    let mix: f64 = rng.gen();
    let u = if mix < params.rho_household { u_house } else { u_own };
    let t = treated as u8 as f64;
    let p1 = params.p_in_person + params.theta_in_person * t;
    let p2 = params.p_substitution + params.theta_substitution * t;
    if u < p1 {
        "in_person"
    } else if u < p1 + p2 {
        if rng.gen::<bool>() {
            "mail"
        } else {
            "early"
        }
    } else {
        ""
    }
}

fn vote_2012(rng: &mut ChaCha8Rng, params: &SynthParams) -> &'static str {
    let u: f64 = rng.gen();
    if u < params.p12_in_person {
        "in_person"
    } else if u < params.p12_in_person + params.p12_substitution {
        if rng.gen::<bool>() {
            "mail"
        } else {
            "early"
        }
    } else {
        ""
    }
}

/// Generate voter and polling-place files with known ground truth.
pub fn generate(params: &SynthParams) -> Result<SynthOutput, SynthError> {
    validate(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut voters: Vec<VoterRow> = Vec::new();
    let mut places: Vec<PlaceRow> = Vec::new();
    let mut treatment: BTreeMap<String, bool> = BTreeMap::new();
    // Per-state (substitution 2012 count, total).
    let mut state_sub: BTreeMap<String, (u64, u64)> = BTreeMap::new();

    let cumulative: Vec<(String, f64)> = {
        let mut acc = 0.0;
        params
            .states
            .iter()
            .map(|(label, share)| {
                acc += share;
                (label.clone(), acc)
            })
            .collect()
    };
    let mut per_state_counter: BTreeMap<String, usize> = BTreeMap::new();

    for block_idx in 0..params.n_blocks {
        let quota = (block_idx as f64 + 0.5) / params.n_blocks as f64;
        let state: String = cumulative
            .iter()
            .find(|(_, edge)| quota <= *edge)
            .map(|(label, _)| label.clone())
            .unwrap_or_else(|| cumulative.last().expect("states non-empty").0.clone());
        let in_state = per_state_counter.entry(state.clone()).or_insert(0);
        let county: Rc<str> = format!("c{}{:03}", state.to_lowercase(), *in_state / 50).into();
        *in_state += 1;
        let city: Rc<str> = format!("{county}ville").into();
        let state: Rc<str> = state.as_str().into();

        let centroid = GeoPoint {
            lat: 36.0 + 0.002 * (block_idx % 3000) as f64,
            lon: -110.0 + 0.3 * (block_idx / 3000) as f64,
        };
        let street = format!("synth{block_idx} street");

        // Face geometry and places.
        let gap: f64 = rng.gen_range(params.gap_miles.min..=params.gap_miles.max);
        let (precincts, place_rows) = match params.design {
            DesignKind::Distance => {
                let d_a: f64 = rng.gen_range(0.1..0.5);
                let d_b = d_a + gap;
                let prec_a = format!("prec{block_idx:06}a");
                let prec_b = format!("prec{block_idx:06}b");
                let mut rows = Vec::new();
                for (suffix, d, prec) in [("a", d_a, &prec_a), ("b", d_b, &prec_b)] {
                    let point = GeoPoint { lat: centroid.lat + d * DEG_PER_MILE_LAT, lon: centroid.lon };
                    for year in [2012u16, 2016] {
                        rows.push(PlaceRow {
                            place_id: format!("p{block_idx:06}{suffix}"),
                            year,
                            street: format!("500 loc{block_idx}{suffix} drive"),
                            city: city.clone(),
                            state: state.clone(),
                            description: format!("community center {block_idx}{suffix}"),
                            precinct: prec.clone(),
                            county: county.clone(),
                            point,
                        });
                    }
                }
                (((prec_a.clone(), prec_a), (prec_b.clone(), prec_b)), rows)
            }
            DesignKind::Shock => {
                let d_old: f64 = rng.gen_range(0.1..0.5) + (-gap).max(0.0);
                let d_new = d_old + gap;
                let prec_a = format!("prec{block_idx:06}a");
                let prec_b = format!("prec{block_idx:06}b");
                let old_point =
                    GeoPoint { lat: centroid.lat + d_old * DEG_PER_MILE_LAT, lon: centroid.lon };
                let new_point =
                    GeoPoint { lat: centroid.lat + d_new * DEG_PER_MILE_LAT, lon: centroid.lon };
                let mut rows = Vec::new();
                for year in [2012u16, 2016] {
                    rows.push(PlaceRow {
                        place_id: format!("p{block_idx:06}o"),
                        year,
                        street: format!("500 loc{block_idx}o drive"),
                        city: city.clone(),
                        state: state.clone(),
                        description: format!("community center {block_idx}o"),
                        precinct: prec_a.clone(),
                        county: county.clone(),
                        point: old_point,
                    });
                }
                rows.push(PlaceRow {
                    place_id: format!("p{block_idx:06}n"),
                    year: 2016,
                    street: format!("500 loc{block_idx}n drive"),
                    city: city.clone(),
                    state: state.clone(),
                    description: format!("community center {block_idx}n"),
                    precinct: prec_b.clone(),
                    county: county.clone(),
                    point: new_point,
                });
                // Face A keeps precinct A both years; face B migrates.
                (((prec_a.clone(), prec_a), (prec_b.clone(), prec_b)), rows)
            }
        };
        let place_a_2016 = place_rows
            .iter()
            .find(|p| p.year == 2016 && p.precinct == precincts.0 .1)
            .expect("face A 2016 place")
            .point;
        let place_b_2016 = place_rows
            .iter()
            .find(|p| p.year == 2016 && p.precinct == precincts.1 .1)
            .expect("face B 2016 place")
            .point;
        places.extend(place_rows);

        // Households per face, with one address and geocode per household.
        let size_a = rng.gen_range(params.face_size.min..=params.face_size.max);
        let size_b = rng.gen_range(params.face_size.min..=params.face_size.max);
        let mut house_number = 300usize;
        let mut household_counter = 0usize;
        let mut face_units: [Vec<(String, Rc<str>, GeoPoint, Rc<str>)>; 2] = [Vec::new(), Vec::new()];
        let mut unit_counter = 0usize;
        for (face_idx, face_size) in [size_a, size_b].into_iter().enumerate() {
            let mut remaining = face_size;
            while remaining > 0 {
                let size = rng
                    .gen_range(params.household_size.min..=params.household_size.max)
                    .min(remaining);
                let jitter_lat: f64 = rng.gen_range(-0.0005..0.0005);
                let jitter_lon: f64 = rng.gen_range(-0.0005..0.0005);
                let home = GeoPoint {
                    lat: centroid.lat + jitter_lat,
                    lon: centroid.lon + jitter_lon,
                };
                let household: Rc<str> = format!("b{block_idx:06}h{household_counter:02}").into();
                let address: Rc<str> = format!("{house_number} {street}").into();
                for _ in 0..size {
                    face_units[face_idx].push((
                        format!("b{block_idx:06}u{unit_counter:02}"),
                        address.clone(),
                        home,
                        household.clone(),
                    ));
                    unit_counter += 1;
                }
                house_number += 1;
                household_counter += 1;
                remaining -= size;
            }
        }

        // Realized treatment: the design modules compare computed means, so
        // the generator must agree with the same arithmetic.
        let treated_face = match params.design {
            DesignKind::Shock => 1,
            DesignKind::Distance => {
                let mean_for = |units: &[(String, Rc<str>, GeoPoint, Rc<str>)], place: GeoPoint| {
                    let d: Vec<f64> = units
                        .iter()
                        .map(|(_, _, home, _)| distance_miles(*home, place).expect("valid geometry"))
                        .collect();
                    crate::numeric::mean(&d)
                };
                let mean_a = mean_for(&face_units[0], place_a_2016);
                let mean_b = mean_for(&face_units[1], place_b_2016);
                if mean_b > mean_a {
                    1
                } else {
                    0
                }
            }
        };

        for (face_idx, units) in face_units.iter().enumerate() {
            let treated = face_idx == treated_face;
            let (prec12, prec16): (Rc<str>, Rc<str>) = if face_idx == 0 {
                (precincts.0 .0.as_str().into(), precincts.0 .1.as_str().into())
            } else {
                match params.design {
                    // Shock: face B shares precinct A in 2012.
                    DesignKind::Shock => (precincts.0 .0.as_str().into(), precincts.1 .1.as_str().into()),
                    DesignKind::Distance => (precincts.1 .0.as_str().into(), precincts.1 .1.as_str().into()),
                }
            };
            let mut last_household: Option<&Rc<str>> = None;
            let mut u_house = 0.0f64;
            for (voter_id, address, home, household) in units {
                if last_household.map(|h| !Rc::ptr_eq(h, household)).unwrap_or(true) {
                    u_house = rng.gen();
                    last_household = Some(household);
                }
                let v12 = vote_2012(&mut rng, params);
                let v16 = vote_2016(&mut rng, params, treated, u_house);
                let demo = demographics(&mut rng);
                let price = if rng.gen::<f64>() < 0.14 {
                    Some(100_000.0 + rng.gen::<f64>() * 400_000.0)
                } else {
                    None
                };
                let entry = state_sub.entry(state.to_string()).or_default();
                entry.1 += 1;
                if v12 == "mail" || v12 == "early" {
                    entry.0 += 1;
                }
                treatment.insert(voter_id.clone(), treated);
                voters.push(VoterRow {
                    voter_id: voter_id.clone(),
                    street_2012: address.clone(),
                    street_2016: address.clone(),
                    city: city.clone(),
                    state: state.clone(),
                    geocode_2012: *home,
                    geocode_2016: *home,
                    precinct_2012: prec12.clone(),
                    precinct_2016: prec16.clone(),
                    county: county.clone(),
                    household: household.clone(),
                    vote_2012: v12,
                    vote_2016: v16,
                    demographics: demo,
                    home_sale_price: price,
                });
            }
        }
    }

    let n_units = voters.len();
    if let Some(injection) = params.loss_injection {
        inject_losses(params, injection, &mut voters, &mut places);
    }

    let voters_2012 = render_voters(&voters, crate::blocks::Year::Y2012);
    let voters_2016 = render_voters(&voters, crate::blocks::Year::Y2016);
    let places_csv = render_places(&places);
    let fixture = render_fixture(&places);
    let covariates = render_covariates(&state_sub);

    let mut hasher = Sha256::new();
    for bytes in [&voters_2012, &voters_2016, &places_csv, &fixture, &covariates] {
        hasher.update(bytes);
    }
    let checksum = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<String>();

    Ok(SynthOutput {
        voters_2012,
        voters_2016,
        places: places_csv,
        geocoder_fixture: fixture,
        state_covariates: covariates,
        truth: GroundTruth {
            treatment,
            theta_in_person: params.theta_in_person,
            theta_substitution: params.theta_substitution,
            theta_any: params.theta_in_person + params.theta_substitution,
            n_units,
            checksum,
        },
    })
}

fn inject_losses(
    params: &SynthParams,
    injection: LossInjection,
    voters: &mut Vec<VoterRow>,
    places: &mut Vec<PlaceRow>,
) {
    let state: Rc<str> = params.states[0].0.as_str().into();
    let county: Rc<str> = "injcounty".into();
    let city: Rc<str> = "injville".into();
    let base = GeoPoint { lat: 35.0, lon: -100.0 };

    let mut add_place = |id: &str, precinct: &str, point: GeoPoint| {
        for year in [2012u16, 2016] {
            places.push(PlaceRow {
                place_id: id.to_string(),
                year,
                street: format!("500 {id} drive"),
                city: city.clone(),
                state: state.clone(),
                description: format!("injection site {id}"),
                precinct: precinct.to_string(),
                county: county.clone(),
                point,
            });
        }
    };
    add_place("pinj1", "injprec1", base);
    add_place("pinj2", "injprec2", GeoPoint { lat: 35.0, lon: -99.9 });

    let plain = |id: String, street12: String, street16: String, g12: GeoPoint, g16: GeoPoint, prec: &str| VoterRow {
        household: format!("hh-{id}").into(),
        voter_id: id,
        street_2012: street12.into(),
        street_2016: street16.into(),
        city: city.clone(),
        state: state.clone(),
        geocode_2012: g12,
        geocode_2016: g16,
        precinct_2012: prec.into(),
        precinct_2016: prec.into(),
        county: county.clone(),
        vote_2012: "",
        vote_2016: "",
        demographics: ["31-45", "f", "ind", "w"],
        home_sale_price: None,
    };
    for k in 0..injection.short_number_voters {
        let g = GeoPoint { lat: base.lat + 0.0001 * k as f64, lon: base.lon };
        voters.push(plain(
            format!("zinj-short{k:04}"),
            format!("80 short{k} street"),
            format!("80 short{k} street"),
            g,
            g,
            "injprec1",
        ));
    }
    for k in 0..injection.far_pair_blocks {
        let lat = base.lat + 0.02 + 0.0002 * k as f64;
        for (m, dlat) in [(0usize, 0.0), (1, 0.0001), (2, 0.0073)] {
            let g = GeoPoint { lat: lat + dlat, lon: base.lon };
            voters.push(plain(
                format!("zinj-far{k:04}{m}"),
                format!("{} far{k} street", 500 + m),
                format!("{} far{k} street", 500 + m),
                g,
                g,
                "injprec1",
            ));
        }
    }
    for k in 0..injection.movers {
        let g12 = GeoPoint { lat: base.lat + 0.05 + 0.0002 * k as f64, lon: base.lon };
        let g16 = GeoPoint { lat: g12.lat + 0.0001, lon: base.lon };
        voters.push(plain(
            format!("zinj-move{k:04}"),
            format!("300 mova{k} street"),
            format!("300 movb{k} street"),
            g12,
            g16,
            "injprec1",
        ));
    }
    for k in 0..injection.admin_conflict_blocks {
        let g = GeoPoint { lat: base.lat + 0.08 + 0.0002 * k as f64, lon: base.lon };
        for (m, prec) in [("a", "injprec1"), ("b", "injprec2")] {
            let mut row = plain(
                format!("zinj-adm{k:04}{m}"),
                format!("600 admin{k} street"),
                format!("600 admin{k} street"),
                g,
                g,
                prec,
            );
            row.household = format!("hh-adm{k}{m}").into();
            voters.push(row);
        }
    }
}

/// Synthesized fields never contain delimiters or quotes (the parse-back
/// unit test keeps that honest), so rows are built directly.
fn push_fields(out: &mut String, fields: &[&str]) {
    for (i, field) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(field);
    }
    out.push('\n');
}

fn render_voters(voters: &[VoterRow], year: crate::blocks::Year) -> Vec<u8> {
    let mut out = String::with_capacity(voters.len() * 160 + 256);
    push_fields(&mut out, &VOTER_HEADER);
    let mut lat = String::new();
    let mut lon = String::new();
    let mut price = String::new();
    for v in voters {
        let (street, geocode, precinct) = match year {
            crate::blocks::Year::Y2012 => (&v.street_2012, v.geocode_2012, &v.precinct_2012),
            crate::blocks::Year::Y2016 => (&v.street_2016, v.geocode_2016, &v.precinct_2016),
        };
        use std::fmt::Write as _;
        lat.clear();
        lon.clear();
        price.clear();
        let _ = write!(lat, "{}", geocode.lat);
        let _ = write!(lon, "{}", geocode.lon);
        if let Some(p) = v.home_sale_price {
            let _ = write!(price, "{p:.2}");
        }
        push_fields(
            &mut out,
            &[
                v.voter_id.as_str(),
                street,
                &v.city,
                &v.state,
                "",
                &lat,
                &lon,
                "street",
                "street_address",
                "true",
                "true",
                "false",
                precinct,
                &v.county,
                &v.household,
                v.vote_2012,
                v.vote_2016,
                v.demographics[0],
                v.demographics[1],
                v.demographics[2],
                v.demographics[3],
                &price,
            ],
        );
    }
    out.into_bytes()
}

fn render_places(places: &[PlaceRow]) -> Vec<u8> {
    let mut out = String::with_capacity(places.len() * 120 + 128);
    push_fields(&mut out, &PLACE_HEADER);
    for p in places {
        // Coordinates are delivered through the geocoder fixture, not the
        // file, so the pipeline exercises the validation path.
        push_fields(
            &mut out,
            &[
                p.place_id.as_str(),
                &p.year.to_string(),
                p.street.as_str(),
                &p.city,
                &p.state,
                "",
                p.description.as_str(),
                p.precinct.as_str(),
                &p.county,
                "",
                "",
            ],
        );
    }
    out.into_bytes()
}

fn place_address(p: &PlaceRow) -> Address {
    parse_address(&format!("{}, {}, {}", p.street, p.city, p.state)).expect("synthetic address parses")
}

fn render_fixture(places: &[PlaceRow]) -> Vec<u8> {
    let mut replay = ReplayGeocoder::default();
    for p in places {
        let address = place_address(p);
        replay.insert(
            crate::geocode::street_query(&address),
            GeocodeMetadata {
                location_type: LocationType::Rooftop,
                tags: vec!["establishment".to_string()],
                formatted_address: address.clone(),
                coordinates: p.point,
            },
        );
    }
    let mut buf = Vec::new();
    replay.to_jsonl(&mut buf).expect("fixture serializes");
    buf
}

fn render_covariates(state_sub: &BTreeMap<String, (u64, u64)>) -> Vec<u8> {
    let mut out = String::from("state,substitution_2012\n");
    for (state, (sub, total)) in state_sub {
        let share = if *total == 0 { 0.0 } else { *sub as f64 / *total as f64 };
        out.push_str(&format!("{state},{share:.6}\n"));
    }
    out.into_bytes()
}
