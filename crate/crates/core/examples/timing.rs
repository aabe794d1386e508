use std::time::Instant;

use blockdisc_core::designs::DesignKind;
use blockdisc_core::synth::{generate, GapRange, SizeRange, SynthParams};

fn main() {
    let t0 = Instant::now();
    let params = SynthParams {
        seed: 0,
        n_blocks: 5000,
        face_size: SizeRange { min: 2, max: 6 },
        theta_in_person: -0.016,
        theta_substitution: 0.017,
        design: DesignKind::Distance,
        gap_miles: GapRange { min: 0.02, max: 1.0 },
        ..SynthParams::default()
    };
    let out = generate(&params).expect("gen");
    eprintln!("generate: {:?} ({} units)", t0.elapsed(), out.truth.n_units);

    use blockdisc_core::ingest::*;
    let t = Instant::now();
    let (v2012, _) = parse_voter_file(out.voters_2012.as_slice(), &VoterColumns::default()).unwrap();
    let (v2016, _) = parse_voter_file(out.voters_2016.as_slice(), &VoterColumns::default()).unwrap();
    eprintln!("parse voters: {:?}", t.elapsed());
    let t = Instant::now();
    let (mut places, _) =
        parse_polling_place_file(out.places.as_slice(), &PlaceColumns::default()).unwrap();
    eprintln!("parse places: {:?} ({})", t.elapsed(), places.len());
    let t = Instant::now();
    let client =
        blockdisc_core::geocode::ReplayGeocoder::from_jsonl(out.geocoder_fixture.as_slice()).unwrap();
    blockdisc_core::geocode::geocode_places(&mut places, &client).unwrap();
    eprintln!("geocode: {:?}", t.elapsed());
    let t = Instant::now();
    let cfg = blockdisc_core::assignment::AssignConfig::default();
    let (a2012, _) = blockdisc_core::assignment::assign(&v2012, &places, 2012, &cfg);
    let (a2016, _) = blockdisc_core::assignment::assign(&v2016, &places, 2016, &cfg);
    eprintln!("assign: {:?} ({} + {})", t.elapsed(), a2012.len(), a2016.len());
    let t = Instant::now();
    let centers = std::collections::BTreeSet::new();
    let (regs, _ledger) = blockdisc_core::blocks::run_filter_pipeline(
        v2012,
        v2016,
        a2012,
        a2016,
        &centers,
        &blockdisc_core::blocks::PipelineConfig::default(),
    )
    .unwrap();
    eprintln!("pipeline: {:?} ({} survivors)", t.elapsed(), regs.len());
    let t = Instant::now();
    let (b12, _) = blockdisc_core::blocks::build_blocks(&regs, blockdisc_core::blocks::Year::Y2012);
    let (b16, _) = blockdisc_core::blocks::build_blocks(&regs, blockdisc_core::blocks::Year::Y2016);
    eprintln!("build blocks: {:?} ({} {})", t.elapsed(), b12.len(), b16.len());
    let t = Instant::now();
    let ds = blockdisc_core::designs::select_distance_design(&b12, &b16, &regs);
    eprintln!("design: {:?} ({} rows)", t.elapsed(), ds.rows.len());
    let t = Instant::now();
    for outcome in blockdisc_core::estimator::Outcome::all() {
        let e = blockdisc_core::estimator::estimate_fe(&ds.rows, outcome).unwrap();
        eprintln!("  estimate {:?}: theta={:.5} se={:.5}", outcome, e.theta_hat, e.se);
    }
    eprintln!("estimates: {:?}", t.elapsed());
    eprintln!("TOTAL: {:?}", t0.elapsed());
}
