//! Parse voter and polling-place files into validated domain records.
//!
//! Input files are UTF-8 delimited text with a header row; the delimiter
//! (comma or tab) is auto-detected from the header line. Records are
//! line-oriented: each data line yields exactly one record or one reject, so
//! `input rows == records + rejects` always holds. Column meanings come from
//! a caller-supplied mapping, since source files have no fixed schema.

mod address;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use address::{
    canonical_street_type, parse_address, parse_address_parts, standardize_name_token, Address,
    AddressError,
};

use crate::geocode::GeocodeMetadata;
use crate::spatial::GeoPoint;

/// Precision class attached to a registration geocode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoPrecision {
    Street,
    Extrapolate,
    ZipCode,
    Other,
}

/// USPS dwelling code of a registration address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UspsCode {
    HighRise,
    Building,
    Apartment,
    StreetAddress,
    Firm,
    GeneralDelivery,
    PoBox,
    RuralRoute,
}

/// How a vote was cast, or that none was.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMethod {
    None,
    InPerson,
    Mail,
    Early,
}

/// One registrant row from a voter-file snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoterRecord {
    pub voter_id: String,
    pub address: Address,
    pub geocode: Option<GeoPoint>,
    pub geo_precision: GeoPrecision,
    pub usps_code: UspsCode,
    pub current_address_matches_registration: bool,
    pub registered: bool,
    pub deceased: bool,
    pub precinct: String,
    pub county: String,
    pub state: String,
    pub household_key: String,
    pub vote_2012: VoteMethod,
    pub vote_2016: VoteMethod,
    pub demographics: BTreeMap<String, String>,
    pub home_sale_price: Option<f64>,
}

/// One polling location for one election year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollingPlace {
    pub place_id: String,
    pub election_year: u16,
    pub address: Address,
    pub place_description: Option<String>,
    pub precinct: String,
    pub county: String,
    pub state: String,
    pub geocode: Option<GeoPoint>,
    pub geocode_meta: Option<GeocodeMetadata>,
}

/// Machine-readable reason a row was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    MissingField,
    AddressNonnumeric,
    UnparseableAddress,
    BadEnum,
    BadNumber,
    BadGeocode,
    DuplicateKey,
    MalformedRow,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::MissingField => "MISSING_FIELD",
            RejectReason::AddressNonnumeric => "ADDRESS_NONNUMERIC",
            RejectReason::UnparseableAddress => "UNPARSEABLE_ADDRESS",
            RejectReason::BadEnum => "BAD_ENUM",
            RejectReason::BadNumber => "BAD_NUMBER",
            RejectReason::BadGeocode => "BAD_GEOCODE",
            RejectReason::DuplicateKey => "DUPLICATE_KEY",
            RejectReason::MalformedRow => "MALFORMED_ROW",
        }
    }
}

/// A rejected input row. Row numbers are 1-based over data rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub row_number: usize,
    pub reason: RejectReason,
    pub raw_line: String,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error reading input: {0}")]
    Io(#[from] std::io::Error),
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("missing mapped column {0:?} in header")]
    Schema(String),
    #[error("input has no header row")]
    EmptyInput,
    #[error("place column mapping needs either a year column or a fixed year")]
    NoYearSource,
}

/// Column mapping for voter files. Field values are header names.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VoterColumns {
    pub voter_id: String,
    pub address: String,
    pub city: String,
    pub state: String,
    pub zip: Option<String>,
    pub lat: Option<String>,
    pub lon: Option<String>,
    pub geo_precision: Option<String>,
    pub usps_code: Option<String>,
    pub current_address_matches: Option<String>,
    pub registered: Option<String>,
    pub deceased: Option<String>,
    pub precinct: String,
    pub county: String,
    pub household: Option<String>,
    pub vote_2012: Option<String>,
    pub vote_2016: Option<String>,
    pub demographics: Vec<String>,
    pub home_sale_price: Option<String>,
    /// Vote-history code table (lowercased code -> method). States encode
    /// method codes differently, so the table is part of the mapping.
    pub vote_codes: BTreeMap<String, VoteMethod>,
}

impl Default for VoterColumns {
    fn default() -> Self {
        Self {
            voter_id: "voter_id".into(),
            address: "address".into(),
            city: "city".into(),
            state: "state".into(),
            zip: Some("zip".into()),
            lat: Some("lat".into()),
            lon: Some("lon".into()),
            geo_precision: Some("geo_precision".into()),
            usps_code: Some("usps_code".into()),
            current_address_matches: Some("current_address_matches".into()),
            registered: Some("registered".into()),
            deceased: Some("deceased".into()),
            precinct: "precinct".into(),
            county: "county".into(),
            household: Some("household_id".into()),
            vote_2012: Some("vote_2012".into()),
            vote_2016: Some("vote_2016".into()),
            demographics: vec![
                "age_bracket".into(),
                "gender".into(),
                "partisanship".into(),
                "race".into(),
            ],
            home_sale_price: Some("home_sale_price".into()),
            vote_codes: default_vote_codes(),
        }
    }
}

pub fn default_vote_codes() -> BTreeMap<String, VoteMethod> {
    let mut m = BTreeMap::new();
    for (code, method) in [
        ("none", VoteMethod::None),
        ("n", VoteMethod::None),
        ("in_person", VoteMethod::InPerson),
        ("polling_place", VoteMethod::InPerson),
        ("p", VoteMethod::InPerson),
        ("mail", VoteMethod::Mail),
        ("absentee", VoteMethod::Mail),
        ("m", VoteMethod::Mail),
        ("early", VoteMethod::Early),
        ("early_in_person", VoteMethod::Early),
        ("e", VoteMethod::Early),
    ] {
        m.insert(code.to_string(), method);
    }
    m
}

/// Column mapping for polling-place files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaceColumns {
    pub place_id: String,
    /// Header name of the election-year column, if the file has one.
    pub election_year: Option<String>,
    /// Year applied to every row when there is no year column.
    pub fixed_year: Option<u16>,
    pub address: String,
    pub city: String,
    pub state: String,
    pub zip: Option<String>,
    pub place_description: Option<String>,
    pub precinct: String,
    pub county: String,
    pub lat: Option<String>,
    pub lon: Option<String>,
}

impl Default for PlaceColumns {
    fn default() -> Self {
        Self {
            place_id: "place_id".into(),
            election_year: Some("election_year".into()),
            fixed_year: None,
            address: "address".into(),
            city: "city".into(),
            state: "state".into(),
            zip: Some("zip".into()),
            place_description: Some("place_description".into()),
            precinct: "precinct".into(),
            county: "county".into(),
            lat: Some("lat".into()),
            lon: Some("lon".into()),
        }
    }
}

struct Table {
    delimiter: u8,
    header: Vec<String>,
    /// (1-based data row number, raw line)
    rows: Vec<(usize, String)>,
}

/// Fields of one data row. Unquoted rows (the common case) borrow straight
/// from the line; quoted rows fall back to the csv crate.
enum RowFields<'a> {
    Borrowed(Vec<&'a str>),
    Owned(Vec<String>),
    Malformed,
}

impl RowFields<'_> {
    fn split(line: &str, delimiter: u8) -> RowFields<'_> {
        if !line.contains('"') {
            RowFields::Borrowed(line.split(delimiter as char).collect())
        } else {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .delimiter(delimiter)
                .flexible(true)
                .from_reader(line.as_bytes());
            let mut record = csv::StringRecord::new();
            match rdr.read_record(&mut record) {
                Ok(true) => RowFields::Owned(record.iter().map(str::to_string).collect()),
                _ => RowFields::Malformed,
            }
        }
    }

    fn get(&self, idx: usize) -> Option<&str> {
        match self {
            RowFields::Borrowed(fields) => fields.get(idx).map(|s| s.trim()),
            RowFields::Owned(fields) => fields.get(idx).map(|s| s.trim()),
            RowFields::Malformed => None,
        }
    }
}

/// Delimiter sniffing: tab when the header line contains one, else comma.
pub fn detect_delimiter(header_line: &str) -> u8 {
    if header_line.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

fn read_table<R: Read>(source: R) -> Result<Table, IngestError> {
    let mut reader = BufReader::new(source);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let text = String::from_utf8(bytes).map_err(|_| IngestError::NotUtf8)?;

    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
    let header_line = loop {
        match lines.next() {
            Some(l) if l.trim().is_empty() => continue,
            Some(l) => break l,
            None => return Err(IngestError::EmptyInput),
        }
    };
    let delimiter = detect_delimiter(header_line);
    let header = match RowFields::split(header_line, delimiter) {
        RowFields::Borrowed(fields) => fields.iter().map(|f| f.trim().to_string()).collect(),
        RowFields::Owned(fields) => fields.iter().map(|f| f.trim().to_string()).collect(),
        RowFields::Malformed => return Err(IngestError::EmptyInput),
    };

    let mut rows = Vec::new();
    let mut row_number = 0usize;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        row_number += 1;
        rows.push((row_number, line.to_string()));
    }
    Ok(Table { delimiter, header, rows })
}

fn column_index(header: &[String], name: &str) -> Result<usize, IngestError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| IngestError::Schema(name.to_string()))
}

fn opt_column_index(header: &[String], name: &Option<String>) -> Result<Option<usize>, IngestError> {
    match name {
        Some(n) => column_index(header, n).map(Some),
        None => Ok(None),
    }
}

fn opt_field<'a>(fields: &'a RowFields<'a>, idx: Option<usize>) -> &'a str {
    idx.and_then(|i| fields.get(i)).unwrap_or("")
}

fn parse_bool(raw: &str, default: bool) -> Result<bool, RejectReason> {
    if raw.is_empty() {
        return Ok(default);
    }
    for truthy in ["true", "t", "1", "yes", "y"] {
        if raw.eq_ignore_ascii_case(truthy) {
            return Ok(true);
        }
    }
    for falsy in ["false", "f", "0", "no", "n"] {
        if raw.eq_ignore_ascii_case(falsy) {
            return Ok(false);
        }
    }
    Err(RejectReason::BadEnum)
}

/// Case-insensitive alias match, treating spaces and hyphens as
/// underscores, without allocating for already-normalized input.
fn matches_alias(raw: &str, alias: &str) -> bool {
    if raw.len() != alias.len() {
        return false;
    }
    raw.chars().zip(alias.chars()).all(|(a, b)| {
        let a = match a {
            ' ' | '-' => '_',
            other => other.to_ascii_lowercase(),
        };
        a == b
    })
}

fn parse_precision(raw: &str) -> GeoPrecision {
    // Absent or unrecognized precision metadata is treated as not
    // street-level.
    if matches_alias(raw, "street") {
        GeoPrecision::Street
    } else if matches_alias(raw, "extrapolate") {
        GeoPrecision::Extrapolate
    } else if ["zip", "zipcode", "zip_code"].iter().any(|a| matches_alias(raw, a)) {
        GeoPrecision::ZipCode
    } else {
        GeoPrecision::Other
    }
}

const USPS_ALIASES: [(&str, UspsCode); 17] = [
    ("high_rise", UspsCode::HighRise),
    ("highrise", UspsCode::HighRise),
    ("h", UspsCode::HighRise),
    ("building", UspsCode::Building),
    ("b", UspsCode::Building),
    ("apartment", UspsCode::Apartment),
    ("a", UspsCode::Apartment),
    ("street_address", UspsCode::StreetAddress),
    ("s", UspsCode::StreetAddress),
    ("firm", UspsCode::Firm),
    ("f", UspsCode::Firm),
    ("general_delivery", UspsCode::GeneralDelivery),
    ("g", UspsCode::GeneralDelivery),
    ("po_box", UspsCode::PoBox),
    ("pobox", UspsCode::PoBox),
    ("p", UspsCode::PoBox),
    ("rural_route", UspsCode::RuralRoute),
];

fn parse_usps(raw: &str) -> Result<UspsCode, RejectReason> {
    if raw.is_empty() {
        return Ok(UspsCode::StreetAddress);
    }
    for (alias, code) in USPS_ALIASES {
        if matches_alias(raw, alias) {
            return Ok(code);
        }
    }
    if matches_alias(raw, "rural_route_or_highway") || matches_alias(raw, "r") {
        return Ok(UspsCode::RuralRoute);
    }
    Err(RejectReason::BadEnum)
}

fn parse_vote(raw: &str, codes: &BTreeMap<String, VoteMethod>) -> Result<VoteMethod, RejectReason> {
    if raw.is_empty() {
        return Ok(VoteMethod::None);
    }
    if raw.chars().all(|c| !c.is_ascii_uppercase()) {
        return codes.get(raw).copied().ok_or(RejectReason::BadEnum);
    }
    codes.get(&raw.to_lowercase()).copied().ok_or(RejectReason::BadEnum)
}

fn parse_geocode(lat_raw: &str, lon_raw: &str) -> Result<Option<GeoPoint>, RejectReason> {
    match (lat_raw.is_empty(), lon_raw.is_empty()) {
        (true, true) => Ok(None),
        (false, false) => {
            let lat: f64 = lat_raw.parse().map_err(|_| RejectReason::BadNumber)?;
            let lon: f64 = lon_raw.parse().map_err(|_| RejectReason::BadNumber)?;
            GeoPoint::new(lat, lon).map(Some).map_err(|_| RejectReason::BadGeocode)
        }
        _ => Err(RejectReason::BadGeocode),
    }
}

/// Parse a voter-file snapshot. Well-formed rows become [`VoterRecord`]s in
/// input order; malformed rows are emitted as [`Reject`]s, never dropped.
pub fn parse_voter_file<R: Read>(
    source: R,
    columns: &VoterColumns,
) -> Result<(Vec<VoterRecord>, Vec<Reject>), IngestError> {
    let table = read_table(source)?;
    let h = &table.header;

    let idx_voter_id = column_index(h, &columns.voter_id)?;
    let idx_address = column_index(h, &columns.address)?;
    let idx_city = column_index(h, &columns.city)?;
    let idx_state = column_index(h, &columns.state)?;
    let idx_precinct = column_index(h, &columns.precinct)?;
    let idx_county = column_index(h, &columns.county)?;
    let idx_zip = opt_column_index(h, &columns.zip)?;
    let idx_lat = opt_column_index(h, &columns.lat)?;
    let idx_lon = opt_column_index(h, &columns.lon)?;
    let idx_precision = opt_column_index(h, &columns.geo_precision)?;
    let idx_usps = opt_column_index(h, &columns.usps_code)?;
    let idx_current = opt_column_index(h, &columns.current_address_matches)?;
    let idx_registered = opt_column_index(h, &columns.registered)?;
    let idx_deceased = opt_column_index(h, &columns.deceased)?;
    let idx_household = opt_column_index(h, &columns.household)?;
    let idx_vote_2012 = opt_column_index(h, &columns.vote_2012)?;
    let idx_vote_2016 = opt_column_index(h, &columns.vote_2016)?;
    let idx_price = opt_column_index(h, &columns.home_sale_price)?;
    let idx_demo: Vec<(String, usize)> = columns
        .demographics
        .iter()
        .map(|name| column_index(h, name).map(|i| (name.clone(), i)))
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut seen_ids = BTreeSet::new();

    for (row_number, raw_line) in &table.rows {
        let reject = |reason| Reject { row_number: *row_number, reason, raw_line: raw_line.clone() };
        let fields = RowFields::split(raw_line, table.delimiter);
        if matches!(fields, RowFields::Malformed) {
            rejects.push(reject(RejectReason::MalformedRow));
            continue;
        }
        let fields = &fields;

        let parsed = (|| -> Result<VoterRecord, RejectReason> {
            let require = |idx: usize| -> Result<&str, RejectReason> {
                match fields.get(idx) {
                    Some(v) if !v.is_empty() => Ok(v),
                    _ => Err(RejectReason::MissingField),
                }
            };
            let voter_id = require(idx_voter_id)?.to_string();
            let street = require(idx_address)?;
            let city = require(idx_city)?;
            let state = require(idx_state)?;
            let precinct = require(idx_precinct)?.to_string();
            let county = require(idx_county)?.to_string();
            let zip = opt_field(fields, idx_zip);

            let address = parse_address_parts(
                street,
                city,
                state,
                if zip.is_empty() { None } else { Some(zip) },
            )
            .map_err(|e| match e {
                AddressError::NonNumericNumber(_) => RejectReason::AddressNonnumeric,
                AddressError::Unparseable => RejectReason::UnparseableAddress,
            })?;

            let geocode = parse_geocode(opt_field(fields, idx_lat), opt_field(fields, idx_lon))?;
            let geo_precision = match idx_precision {
                Some(i) => parse_precision(opt_field(fields, Some(i))),
                None => GeoPrecision::Street,
            };
            let usps_code = parse_usps(opt_field(fields, idx_usps))?;
            let current = parse_bool(opt_field(fields, idx_current), true)?;
            let registered = parse_bool(opt_field(fields, idx_registered), true)?;
            let deceased = parse_bool(opt_field(fields, idx_deceased), false)?;
            let vote_2012 = parse_vote(opt_field(fields, idx_vote_2012), &columns.vote_codes)?;
            let vote_2016 = parse_vote(opt_field(fields, idx_vote_2016), &columns.vote_codes)?;

            let household_key = {
                let raw = opt_field(fields, idx_household);
                if raw.is_empty() {
                    format!("addr:{}", address.render())
                } else {
                    raw.to_string()
                }
            };

            let home_sale_price = {
                let raw = opt_field(fields, idx_price);
                if raw.is_empty() {
                    None
                } else {
                    let v: f64 = raw.parse().map_err(|_| RejectReason::BadNumber)?;
                    if v < 0.0 || !v.is_finite() {
                        return Err(RejectReason::BadNumber);
                    }
                    Some(v)
                }
            };

            let mut demographics = BTreeMap::new();
            for (name, i) in &idx_demo {
                let v = opt_field(fields, Some(*i));
                if !v.is_empty() {
                    demographics.insert(name.clone(), v.to_string());
                }
            }

            Ok(VoterRecord {
                voter_id,
                address,
                geocode,
                geo_precision,
                usps_code,
                current_address_matches_registration: current,
                registered,
                deceased,
                precinct,
                county,
                state: state.to_uppercase(),
                household_key,
                vote_2012,
                vote_2016,
                demographics,
                home_sale_price,
            })
        })();

        match parsed {
            Ok(record) => {
                if !seen_ids.insert(record.voter_id.clone()) {
                    rejects.push(reject(RejectReason::DuplicateKey));
                } else {
                    records.push(record);
                }
            }
            Err(reason) => rejects.push(reject(reason)),
        }
    }
    Ok((records, rejects))
}

/// Parse a polling-place file, keyed by `(place_id, election_year)`.
pub fn parse_polling_place_file<R: Read>(
    source: R,
    columns: &PlaceColumns,
) -> Result<(Vec<PollingPlace>, Vec<Reject>), IngestError> {
    let table = read_table(source)?;
    let h = &table.header;

    let idx_place_id = column_index(h, &columns.place_id)?;
    let idx_year = opt_column_index(h, &columns.election_year)?;
    if idx_year.is_none() && columns.fixed_year.is_none() {
        return Err(IngestError::NoYearSource);
    }
    let idx_address = column_index(h, &columns.address)?;
    let idx_city = column_index(h, &columns.city)?;
    let idx_state = column_index(h, &columns.state)?;
    let idx_precinct = column_index(h, &columns.precinct)?;
    let idx_county = column_index(h, &columns.county)?;
    let idx_zip = opt_column_index(h, &columns.zip)?;
    let idx_desc = opt_column_index(h, &columns.place_description)?;
    let idx_lat = opt_column_index(h, &columns.lat)?;
    let idx_lon = opt_column_index(h, &columns.lon)?;

    let mut places = Vec::new();
    let mut rejects = Vec::new();
    let mut seen_keys = BTreeSet::new();

    for (row_number, raw_line) in &table.rows {
        let reject = |reason| Reject { row_number: *row_number, reason, raw_line: raw_line.clone() };
        let fields = RowFields::split(raw_line, table.delimiter);
        if matches!(fields, RowFields::Malformed) {
            rejects.push(reject(RejectReason::MalformedRow));
            continue;
        }
        let fields = &fields;

        let parsed = (|| -> Result<PollingPlace, RejectReason> {
            let require = |idx: usize| -> Result<&str, RejectReason> {
                match fields.get(idx) {
                    Some(v) if !v.is_empty() => Ok(v),
                    _ => Err(RejectReason::MissingField),
                }
            };
            let place_id = require(idx_place_id)?.to_string();
            let election_year = match idx_year {
                Some(i) => {
                    let raw = opt_field(fields, Some(i));
                    if raw.is_empty() {
                        columns.fixed_year.ok_or(RejectReason::MissingField)?
                    } else {
                        raw.parse::<u16>().map_err(|_| RejectReason::BadNumber)?
                    }
                }
                None => columns.fixed_year.expect("checked above"),
            };
            if election_year != 2012 && election_year != 2016 {
                return Err(RejectReason::BadEnum);
            }
            let street = require(idx_address)?;
            let city = require(idx_city)?;
            let state = require(idx_state)?;
            let precinct = require(idx_precinct)?.to_string();
            let county = require(idx_county)?.to_string();
            let zip = opt_field(fields, idx_zip);

            let address = parse_address_parts(
                street,
                city,
                state,
                if zip.is_empty() { None } else { Some(zip) },
            )
            .map_err(|e| match e {
                AddressError::NonNumericNumber(_) => RejectReason::AddressNonnumeric,
                AddressError::Unparseable => RejectReason::UnparseableAddress,
            })?;
            let geocode = parse_geocode(opt_field(fields, idx_lat), opt_field(fields, idx_lon))?;
            let place_description = {
                let d = opt_field(fields, idx_desc);
                if d.is_empty() {
                    None
                } else {
                    Some(d.to_string())
                }
            };

            Ok(PollingPlace {
                place_id,
                election_year,
                address,
                place_description,
                precinct,
                county,
                state: state.to_uppercase(),
                geocode,
                geocode_meta: None,
            })
        })();

        match parsed {
            Ok(place) => {
                if !seen_keys.insert((place.place_id.clone(), place.election_year)) {
                    rejects.push(reject(RejectReason::DuplicateKey));
                } else {
                    places.push(place);
                }
            }
            Err(reason) => rejects.push(reject(reason)),
        }
    }
    Ok((places, rejects))
}

/// Write the reject sidecar: `(row_number, reason_code, raw_line)`, using
/// the same delimiter as the source file.
pub fn write_rejects_csv<W: std::io::Write>(
    rejects: &[Reject],
    delimiter: u8,
    out: W,
) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
    w.write_record(["row_number", "reason_code", "raw_line"]).map_err(csv_io)?;
    for r in rejects {
        w.write_record([r.row_number.to_string().as_str(), r.reason.code(), &r.raw_line])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> IngestError {
    IngestError::Io(std::io::Error::other(e))
}

/// Serialize parsed records as JSON lines (the inter-stage artifact format).
pub fn write_jsonl<T: Serialize, W: std::io::Write>(items: &[T], mut out: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Read JSON-lines records written by [`write_jsonl`].
pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: Read>(source: R) -> std::io::Result<Vec<T>> {
    let reader = BufReader::new(source);
    let mut items = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line)?);
    }
    Ok(items)
}
