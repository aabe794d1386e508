//! Stage implementations shared by `run` and the per-stage subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use blockdisc_core::assignment::{assign, write_assignments_csv, AssignConfig, Assignment};
use blockdisc_core::blocks::{
    build_blocks, read_vote_centers, run_filter_pipeline, Block, FilterLedger, PipelineConfig,
    Registrant, VoteCenterCounties, Year,
};
use blockdisc_core::designs::{
    select_distance_design, select_shock_design, write_design_csv, DesignDataset, DesignKind,
    ShockConfig,
};
use blockdisc_core::diagnostics::{
    balance_table, gap_summary, historical_balance, read_state_covariates, substitution_by_state,
    BalanceReport, GapSummary,
};
use blockdisc_core::estimator::{estimate_all, EstimateSet};
use blockdisc_core::geocode::{geocode_places, GeocoderClient, ReplayGeocoder, StubGeocoder};
use blockdisc_core::ingest::{
    parse_polling_place_file, parse_voter_file, read_jsonl, write_jsonl, write_rejects_csv,
    detect_delimiter, PollingPlace, Reject, VoterRecord,
};

use crate::config::{LoadedConfig, Provenance};

pub struct Stage<'a> {
    pub loaded: &'a LoadedConfig,
    pub out: &'a Path,
}

impl Stage<'_> {
    fn provenance(&self) -> Provenance {
        Provenance::new(&self.loaded.sha256, self.loaded.config.seed)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<()> {
        let value = json!({
            "provenance": self.provenance(),
            "data": body,
        });
        let path = self.out.join(name);
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write_sidecar(out: &Path, name: &str, rejects: &[Reject], delimiter: u8) -> Result<()> {
    let path = out.join(name);
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_rejects_csv(rejects, delimiter, file)?;
    Ok(())
}

pub struct Parsed {
    pub voters_2012: Vec<VoterRecord>,
    pub voters_2016: Vec<VoterRecord>,
    pub places: Vec<PollingPlace>,
}

/// Parse the voter and place inputs, writing reject sidecars.
pub fn run_ingest(stage: &Stage) -> Result<Parsed> {
    let config = &stage.loaded.config;
    let mut parse_voters = |path: &Path, name: &str| -> Result<Vec<VoterRecord>> {
        let bytes = read_input(path)?;
        let delimiter = bytes
            .split(|b| *b == b'\n')
            .next()
            .map(|line| detect_delimiter(&String::from_utf8_lossy(line)))
            .unwrap_or(b',');
        let (records, rejects) = parse_voter_file(bytes.as_slice(), &config.voter_columns)
            .with_context(|| format!("parsing {}", path.display()))?;
        write_sidecar(stage.out, &format!("rejects_{name}.csv"), &rejects, delimiter)?;
        Ok(records)
    };
    let voters_2012 = parse_voters(&config.inputs.voters_2012, "voters_2012")?;
    let voters_2016 = parse_voters(&config.inputs.voters_2016, "voters_2016")?;

    let mut places = Vec::new();
    let mut place_rejects = Vec::new();
    let same_file = config.inputs.places_2012 == config.inputs.places_2016;
    let mut delimiter = b',';
    for path in [&config.inputs.places_2012, &config.inputs.places_2016] {
        let bytes = read_input(path)?;
        delimiter = bytes
            .split(|b| *b == b'\n')
            .next()
            .map(|line| detect_delimiter(&String::from_utf8_lossy(line)))
            .unwrap_or(b',');
        let (parsed, rejects) = parse_polling_place_file(bytes.as_slice(), &config.place_columns)
            .with_context(|| format!("parsing {}", path.display()))?;
        places.extend(parsed);
        place_rejects.extend(rejects);
        if same_file {
            break;
        }
    }
    if !same_file {
        // Two files may legitimately repeat (place_id, year) keys between
        // them only if they carry disjoint years; duplicates collapse here.
        let mut seen = std::collections::BTreeSet::new();
        places.retain(|p| seen.insert((p.place_id.clone(), p.election_year)));
    }
    write_sidecar(stage.out, "rejects_places.csv", &place_rejects, delimiter)?;

    Ok(Parsed { voters_2012, voters_2016, places })
}

pub fn write_ingest_artifacts(stage: &Stage, parsed: &Parsed) -> Result<()> {
    for (name, records) in
        [("voters_2012.jsonl", &parsed.voters_2012), ("voters_2016.jsonl", &parsed.voters_2016)]
    {
        let file = fs::File::create(stage.out.join(name))?;
        write_jsonl(records, std::io::BufWriter::new(file))?;
    }
    let file = fs::File::create(stage.out.join("places.jsonl"))?;
    write_jsonl(&parsed.places, std::io::BufWriter::new(file))?;
    Ok(())
}

pub fn load_ingest_artifacts(stage: &Stage) -> Result<Parsed> {
    let read = |name: &str| -> Result<Vec<u8>> { read_input(&stage.out.join(name)) };
    Ok(Parsed {
        voters_2012: read_jsonl(read("voters_2012.jsonl")?.as_slice())?,
        voters_2016: read_jsonl(read("voters_2016.jsonl")?.as_slice())?,
        places: read_jsonl(read("places.jsonl")?.as_slice())?,
    })
}

/// Build the geocoder client named by the config: replay when a fixture is
/// supplied, otherwise the seeded deterministic stub.
pub fn geocoder(stage: &Stage) -> Result<Box<dyn GeocoderClient>> {
    match &stage.loaded.config.inputs.geocoder_fixture {
        Some(path) => {
            let bytes = read_input(path)?;
            Ok(Box::new(ReplayGeocoder::from_jsonl(bytes.as_slice())?))
        }
        None => Ok(Box::new(StubGeocoder::new(stage.loaded.config.seed))),
    }
}

/// Validate and fill place geocodes; write the decision log.
pub fn run_geocode(stage: &Stage, places: &mut [PollingPlace]) -> Result<()> {
    let client = geocoder(stage)?;
    let decisions = geocode_places(places, client.as_ref())?;
    let mut out = String::from("place_id,election_year,verdict,basis,reason\n");
    for ((place_id, year), decision) in &decisions {
        out.push_str(&format!(
            "{place_id},{year},{:?},{:?},{}\n",
            decision.verdict, decision.basis, decision.reason
        ));
    }
    fs::write(stage.out.join("geocode_decisions.csv"), out)?;
    Ok(())
}

pub fn vote_centers(stage: &Stage) -> Result<VoteCenterCounties> {
    match &stage.loaded.config.inputs.vote_center_counties {
        Some(path) => Ok(read_vote_centers(read_input(path)?.as_slice())?),
        None => Ok(VoteCenterCounties::new()),
    }
}

pub struct BlockStage {
    pub registrants: Vec<Registrant>,
    pub ledger: FilterLedger,
    pub blocks_2012: Vec<Block>,
    pub blocks_2016: Vec<Block>,
}

/// Assignments, the filter pipeline, and per-year block construction.
pub fn run_blocks(stage: &Stage, parsed: Parsed) -> Result<BlockStage> {
    let config = &stage.loaded.config;
    let assign_config = AssignConfig { max_miles: config.thresholds.assignment_max_miles };
    let (a2012, r2012) = assign(&parsed.voters_2012, &parsed.places, 2012, &assign_config);
    let (a2016, r2016) = assign(&parsed.voters_2016, &parsed.places, 2016, &assign_config);

    for (name, assignments) in [("assignments_2012.csv", &a2012), ("assignments_2016.csv", &a2016)] {
        let file = fs::File::create(stage.out.join(name))?;
        write_assignments_csv(assignments, std::io::BufWriter::new(file))?;
    }
    let mut reject_log = String::from("voter_id,election_year,reason\n");
    for (year, rejects) in [(2012, &r2012), (2016, &r2016)] {
        for r in rejects {
            reject_log.push_str(&format!("{},{year},{}\n", r.voter_id, r.reason.code()));
        }
    }
    fs::write(stage.out.join("assignment_rejects.csv"), reject_log)?;

    let (registrants, ledger) = run_filter_pipeline(
        parsed.voters_2012,
        parsed.voters_2016,
        a2012,
        a2016,
        &vote_centers(stage)?,
        &PipelineConfig { block_pair_miles: config.thresholds.block_pair_miles },
    )?;

    fs::write(stage.out.join("ledger.txt"), ledger.render_table())?;
    stage.write_json("ledger.json", &ledger.rows)?;

    let (blocks_2012, rejects_2012) = build_blocks(&registrants, Year::Y2012);
    let (blocks_2016, rejects_2016) = build_blocks(&registrants, Year::Y2016);
    let mut block_log = String::from("election_year,block_id,reason\n");
    for (year, rejects) in [(2012, &rejects_2012), (2016, &rejects_2016)] {
        for (id, reason) in rejects {
            block_log.push_str(&format!("{year},{},{}\n", id.render(), reason.code()));
        }
    }
    fs::write(stage.out.join("block_rejects.csv"), block_log)?;

    let file = fs::File::create(stage.out.join("registrants.jsonl"))?;
    write_jsonl(&registrants, std::io::BufWriter::new(file))?;

    Ok(BlockStage { registrants, ledger, blocks_2012, blocks_2016 })
}

pub fn load_block_artifacts(stage: &Stage) -> Result<BlockStage> {
    let registrants: Vec<Registrant> =
        read_jsonl(read_input(&stage.out.join("registrants.jsonl"))?.as_slice())?;
    let ledger_rows: Vec<blockdisc_core::blocks::LedgerRow> = {
        let value: serde_json::Value =
            serde_json::from_slice(&read_input(&stage.out.join("ledger.json"))?)?;
        serde_json::from_value(value["data"].clone())?
    };
    let (blocks_2012, _) = build_blocks(&registrants, Year::Y2012);
    let (blocks_2016, _) = build_blocks(&registrants, Year::Y2016);
    Ok(BlockStage {
        registrants,
        ledger: FilterLedger { rows: ledger_rows },
        blocks_2012,
        blocks_2016,
    })
}

pub fn run_design(stage: &Stage, blocks: &BlockStage, kind: DesignKind) -> Result<DesignDataset> {
    let config = &stage.loaded.config;
    let dataset = match kind {
        DesignKind::Distance => {
            select_distance_design(&blocks.blocks_2012, &blocks.blocks_2016, &blocks.registrants)
        }
        DesignKind::Shock => select_shock_design(
            &blocks.blocks_2016,
            &blocks.registrants,
            &ShockConfig {
                baseline_gap_miles: config.thresholds.baseline_gap_miles,
                baseline_strict: config.thresholds.baseline_strict,
            },
        ),
    };
    let name = match kind {
        DesignKind::Distance => "design_distance",
        DesignKind::Shock => "design_shock",
    };
    if dataset.rows.is_empty() {
        eprintln!("warning: {name} selected no blocks");
    }
    let file = fs::File::create(stage.out.join(format!("{name}.csv")))?;
    write_design_csv(&dataset, std::io::BufWriter::new(file))?;
    let file = fs::File::create(stage.out.join(format!("{name}.jsonl")))?;
    write_jsonl(&dataset.rows, std::io::BufWriter::new(file))?;
    let mut drops = String::from("block_id,reason\n");
    for (id, reason) in &dataset.dropped {
        drops.push_str(&format!("{},{}\n", id.render(), reason.code()));
    }
    fs::write(stage.out.join(format!("{name}_drops.csv")), drops)?;
    Ok(dataset)
}

pub fn load_design(stage: &Stage, kind: DesignKind) -> Result<DesignDataset> {
    let name = match kind {
        DesignKind::Distance => "design_distance.jsonl",
        DesignKind::Shock => "design_shock.jsonl",
    };
    let rows = read_jsonl(read_input(&stage.out.join(name))?.as_slice())?;
    Ok(DesignDataset { kind, rows, dropped: Vec::new() })
}

/// Window grid with the always-included full sample first.
pub fn window_grid(stage: &Stage) -> Vec<f64> {
    let mut grid = vec![f64::NEG_INFINITY];
    grid.extend(stage.loaded.config.window_grid.iter().copied());
    grid
}

#[derive(Serialize)]
pub struct EstimatesArtifact {
    pub distance: Option<EstimateSet>,
    pub shock: Option<EstimateSet>,
    pub substitution_by_state: Vec<blockdisc_core::diagnostics::StateSubstitutionRow>,
}

pub fn run_estimates(
    stage: &Stage,
    distance: Option<&DesignDataset>,
    shock: Option<&DesignDataset>,
) -> Result<EstimatesArtifact> {
    let grid = window_grid(stage);
    let distance_set = distance.map(|d| estimate_all(d, &grid));
    let shock_set = shock.map(|d| estimate_all(d, &grid));

    let substitution = match (&stage.loaded.config.inputs.state_covariates, &distance_set) {
        (Some(path), Some(set)) => {
            let covariates = read_state_covariates(read_input(path)?.as_slice())?;
            substitution_by_state(&set.estimates, &covariates)
        }
        _ => Vec::new(),
    };

    let artifact = EstimatesArtifact {
        distance: distance_set,
        shock: shock_set,
        substitution_by_state: substitution,
    };
    stage.write_json("estimates.json", &artifact)?;

    let mut flat = Vec::new();
    for set in [&artifact.distance, &artifact.shock].into_iter().flatten() {
        flat.extend(set.estimates.iter().cloned());
    }
    let file = fs::File::create(stage.out.join("estimates.csv"))?;
    blockdisc_core::estimator::write_estimates_csv(&flat, std::io::BufWriter::new(file))?;
    Ok(artifact)
}

#[derive(Serialize)]
pub struct BalanceArtifact {
    pub distance: Option<BalanceReport>,
    pub shock: Option<BalanceReport>,
    pub shock_historical: Option<Vec<blockdisc_core::diagnostics::BalanceEntry>>,
}

#[derive(Serialize)]
pub struct GapsArtifact {
    pub distance: Option<GapSummary>,
    pub shock: Option<GapSummary>,
}

pub fn run_diagnostics(
    stage: &Stage,
    registrants: &[Registrant],
    distance: Option<&DesignDataset>,
    shock: Option<&DesignDataset>,
) -> Result<()> {
    let config = &stage.loaded.config;
    let voters: BTreeMap<String, VoterRecord> =
        registrants.iter().map(|r| (r.voter_id.clone(), r.record_2016.clone())).collect();

    let balance = BalanceArtifact {
        distance: distance.map(|d| balance_table(&d.rows, &voters)),
        shock: shock.map(|d| balance_table(&d.rows, &voters)),
        shock_historical: match shock {
            Some(d) if !d.rows.is_empty() => Some(historical_balance(d, &voters)?),
            _ => None,
        },
    };
    stage.write_json("balance.json", &balance)?;

    let summarize = |d: Option<&DesignDataset>| -> Option<GapSummary> {
        d.and_then(|d| gap_summary(d, config.gap_sample_size, config.seed).ok())
    };
    let gaps = GapsArtifact { distance: summarize(distance), shock: summarize(shock) };
    stage.write_json("gaps.json", &gaps)?;
    Ok(())
}

pub fn run_shock_types(stage: &Stage, parsed: &Parsed) -> Result<()> {
    let mut county_registrants: BTreeMap<(String, String), u64> = BTreeMap::new();
    for v in &parsed.voters_2016 {
        *county_registrants
            .entry(blockdisc_core::blocks::county_key(&v.state, &v.county))
            .or_default() += 1;
    }
    let places_2012: Vec<PollingPlace> =
        parsed.places.iter().filter(|p| p.election_year == 2012).cloned().collect();
    let places_2016: Vec<PollingPlace> =
        parsed.places.iter().filter(|p| p.election_year == 2016).cloned().collect();
    let summary = blockdisc_core::designs::classify_shock_types(
        &places_2012,
        &places_2016,
        &county_registrants,
    );
    stage.write_json("shock_types.json", &summary)?;
    Ok(())
}

/// The whole pipeline: ingest through diagnostics, producing every artifact.
pub fn run_all(stage: &Stage) -> Result<()> {
    let mut parsed = run_ingest(stage)?;
    run_geocode(stage, &mut parsed.places)?;
    run_shock_types(stage, &parsed)?;
    write_ingest_artifacts(stage, &parsed)?;
    let blocks = run_blocks(stage, parsed)?;
    let distance = run_design(stage, &blocks, DesignKind::Distance)?;
    let shock = run_design(stage, &blocks, DesignKind::Shock)?;
    run_estimates(stage, Some(&distance), Some(&shock))?;
    run_diagnostics(stage, &blocks.registrants, Some(&distance), Some(&shock))?;
    Ok(())
}
