//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rayon::prelude::*;

use refcrdt::harness::campaign::{execution_seed, run_campaign, CampaignResult};
use refcrdt::harness::catalog;
use refcrdt::harness::explore::{Limits, EXPLORED_INVARIANTS};
use refcrdt::harness::replay::replay;
use refcrdt::harness::{convergence_check, random_execution, Config, Invariant};
use refcrdt::stability::{oracle_stable, stably_subset};
use refcrdt::{scenario, tracefile, CompositionMode, LastRefs, Op, Outcome, ReplicaId, World};

const CAMPAIGN: usize = 50_000;
const TRACES: usize = 10_000;
const MODES: [CompositionMode; 2] = [CompositionMode::PureCausal, CompositionMode::Atomic];

struct Suite {
    failed: usize,
}

impl Suite {
    fn report(&mut self, id: &str, name: &str, passed: bool, detail: String) {
        let mark = if passed { "PASS" } else { "FAIL" };
        println!("{mark}  [{id}] {name}: {detail}");
        if !passed {
            self.failed += 1;
        }
    }
}

fn counts(result: &CampaignResult, invariants: &[Invariant]) -> String {
    invariants
        .iter()
        .map(|&i| format!("{}={}", i.name(), result.report.count(i)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn zero(result: &CampaignResult, invariants: &[Invariant]) -> bool {
    invariants.iter().all(|&i| result.report.count(i) == 0)
}

fn campaigns(suite: &mut Suite) -> Vec<(CompositionMode, CampaignResult)> {
    let mut out = Vec::new();
    for mode in MODES {
        let start = Instant::now();
        let config = Config::default().with_mode(mode);
        match run_campaign(0, CAMPAIGN, &config, true) {
            Ok(result) => {
                println!(
                    "      {mode}: {CAMPAIGN} executions in {:.1?}, {} with multi-valued outrefs, {} deletes, {} stable queries, {} liveness deletes",
                    start.elapsed(),
                    result.report.coverage.multi_valued_traces,
                    result.report.coverage.deletes,
                    result.report.coverage.stable_queries,
                    result.report.coverage.liveness_deletes,
                );
                out.push((mode, result));
            }
            Err(e) => suite.report("1", &format!("campaign {mode}"), false, e.to_string()),
        }
    }
    out
}

fn criterion_1_2(suite: &mut Suite, results: &[(CompositionMode, CampaignResult)]) {
    let primary = [Invariant::I1, Invariant::I3];
    let rest = [
        Invariant::I2,
        Invariant::I4,
        Invariant::I5,
        Invariant::I6,
        Invariant::I7,
    ];
    for (mode, r) in results {
        suite.report(
            "1",
            &format!("{CAMPAIGN} random executions, {mode}, no I1/I3 violation"),
            zero(r, &primary) && r.report.coverage.traces == CAMPAIGN,
            counts(r, &primary),
        );
    }
    for (mode, r) in results {
        suite.report(
            "2",
            &format!("same campaign, {mode}, no I2/I4/I5/I6/I7 violation"),
            zero(r, &rest),
            counts(r, &rest),
        );
    }
}

fn criterion_3(suite: &mut Suite) {
    let run = scenario::fig2();
    let failed: Vec<String> = run
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} ({})", c.name, c.detail))
        .collect();
    suite.report(
        "3",
        "concurrent assignments (fig2): state shape on every replica",
        run.passed(),
        if failed.is_empty() {
            format!("{} checks", run.checks.len())
        } else {
            failed.join("; ")
        },
    );
}

fn criterion_4(suite: &mut Suite) {
    let start = Instant::now();
    let run = scenario::fig1();
    let summary: Vec<String> = run
        .checks
        .iter()
        .filter(|c| !c.passed || c.name.contains("every interleaving with"))
        .map(|c| format!("{} [{}]", c.name, c.detail))
        .collect();
    suite.report(
        "4",
        "copy/delete race (fig1): delete refused, no dangling reference, exhaustive",
        run.passed(),
        format!("{} in {:.1?}", summary.join("; "), start.elapsed()),
    );
}

fn criterion_5(suite: &mut Suite, results: &[(CompositionMode, CampaignResult)]) {
    for (mode, r) in results {
        let traces = r.report.coverage.traces;
        suite.report(
            "5",
            &format!("stable => oracle at every step of {traces} random traces, {mode}"),
            traces >= TRACES && r.report.count(Invariant::StableRefinement) == 0,
            format!(
                "{} violations over {} stable queries",
                r.report.count(Invariant::StableRefinement),
                r.report.coverage.stable_queries
            ),
        );
    }
    let start = Instant::now();
    match catalog::explore_all(4, Limits::new(4)) {
        Ok(s) => {
            let bad: Vec<String> = EXPLORED_INVARIANTS
                .iter()
                .filter(|&&i| s.report.count(i) > 0)
                .map(|&i| format!("{}={}", i.name(), s.report.count(i)))
                .collect();
            suite.report(
                "5",
                "stable => oracle in every state of every catalog program of <= 4 events",
                s.report.count(Invariant::StableRefinement) == 0 && s.programs == catalog::program_count(4),
                format!(
                    "{} programs, {} pure-causal and {} atomic states in {:.1?}; other explored invariants: {}",
                    s.programs,
                    s.causal_states,
                    s.atomic_states,
                    start.elapsed(),
                    if bad.is_empty() {
                        "clean".to_owned()
                    } else {
                        bad.join(" ")
                    }
                ),
            );
        }
        Err(e) => suite.report("5", "catalog exploration", false, e.to_string()),
    }
}

fn announce_round(world: &mut World) {
    for r in world.replica_ids().collect::<Vec<_>>() {
        world.generate(r, Op::Announce).unwrap();
    }
    world.quiesce().unwrap();
}

/// A quiet world with one unreferenced non-root object per replica count.
fn liveness_direct() -> Result<usize, String> {
    let mut worlds = 0;
    for replicas in 1..=5 {
        for mode in MODES {
            let mut w = World::new(replicas, mode);
            let creator = ReplicaId((replicas - 1) as u16);
            let root = w.fresh_key(ReplicaId(0));
            w.generate(ReplicaId(0), Op::create(root, true, &["a"])).unwrap();
            let x = w.fresh_key(creator);
            w.generate(creator, Op::create(x, false, &["a"])).unwrap();
            w.quiesce().unwrap();
            w.generate(creator, Op::init(root, "a", x)).unwrap();
            w.quiesce().unwrap();
            w.generate(ReplicaId(0), Op::assign_null(root, "a")).unwrap();
            w.generate(ReplicaId(0), Op::may_delete(x)).unwrap();
            w.quiesce().unwrap();
            // Leave the query confirming a snapshot that later activity outdates.
            announce_round(&mut w);
            let other = w.fresh_key(ReplicaId(0));
            w.generate(ReplicaId(0), Op::create(other, true, &[])).unwrap();
            w.quiesce().unwrap();
            let last = LastRefs::empty();
            for round in 1..=2 {
                announce_round(&mut w);
                let stable = w.replica_ids().all(|r| stably_subset(&w, r, x, &last));
                if round == 2 && !stable {
                    return Err(format!("{replicas} replicas, {mode}: not stable after 2 rounds"));
                }
                if stable && !oracle_stable(&w, x, &last) {
                    return Err(format!("{replicas} replicas, {mode}: stable without the oracle"));
                }
            }
            if !matches!(w.generate(ReplicaId(0), Op::delete(x)), Ok(Outcome::Event { .. })) {
                return Err(format!("{replicas} replicas, {mode}: delete refused"));
            }
            worlds += 1;
        }
    }
    Ok(worlds)
}

fn criterion_6(suite: &mut Suite, results: &[(CompositionMode, CampaignResult)]) {
    match liveness_direct() {
        Ok(n) => suite.report(
            "6",
            "unreferenced object stable within 2 announce rounds",
            true,
            format!("{n} worlds of 1 to 5 replicas"),
        ),
        Err(e) => suite.report("6", "unreferenced object stable within 2 announce rounds", false, e),
    }
    for (mode, r) in results {
        suite.report(
            "6",
            &format!("every unreferenced object after each campaign trace, {mode}"),
            r.report.count(Invariant::I7) == 0 && r.report.coverage.liveness_deletes > 0,
            format!(
                "{} objects found deletable and deleted, {} violations",
                r.report.coverage.liveness_deletes,
                r.report.count(Invariant::I7)
            ),
        );
    }
}

fn criterion_7(suite: &mut Suite) {
    for mode in MODES {
        let config = Config::default().with_mode(mode);
        let diverged: Vec<usize> = (0..TRACES)
            .into_par_iter()
            .filter(|&i| {
                let trace = random_execution(execution_seed(7, i), &config).unwrap();
                !convergence_check(&trace)
            })
            .collect();
        suite.report(
            "7",
            &format!("{TRACES} quiesced random traces converge, {mode}"),
            diverged.is_empty(),
            format!(
                "{} divergences{}",
                diverged.len(),
                diverged
                    .first()
                    .map(|i| format!(", first at index {i}"))
                    .unwrap_or_default()
            ),
        );
    }
}

fn criterion_8(suite: &mut Suite) {
    let mut checked = 0;
    let mut differing = Vec::new();
    for mode in MODES {
        let config = Config::default().with_mode(mode);
        for i in 0..1000 {
            let trace = random_execution(execution_seed(8, i), &config).unwrap();
            let reparsed = tracefile::parse(&tracefile::serialize(&trace)).unwrap();
            let a = replay(&trace).unwrap().serialize_state();
            let b = replay(&reparsed).unwrap().serialize_state();
            if a != b {
                differing.push(format!("{mode} #{i}"));
            }
            checked += 1;
        }
    }
    suite.report(
        "8",
        "replaying a trace twice gives byte-identical states",
        differing.is_empty(),
        format!("{checked} traces, {} differ", differing.len()),
    );
}

fn multi_valued(suite: &mut Suite) {
    let config = Config::default();
    let multi = (0..1000)
        .into_par_iter()
        .filter(|&i| {
            let trace = random_execution(execution_seed(9, i), &config).unwrap();
            refcrdt::check_invariants(&trace).unwrap().coverage.multi_valued_traces > 0
        })
        .count();
    suite.report(
        "cov",
        "more than half of 1000 default traces reach a multi-valued outref",
        multi > 500,
        format!("{multi} of 1000"),
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut suite = Suite { failed: 0 };
    let results = campaigns(&mut suite);
    criterion_1_2(&mut suite, &results);
    criterion_3(&mut suite);
    criterion_4(&mut suite);
    criterion_5(&mut suite, &results);
    criterion_6(&mut suite, &results);
    criterion_7(&mut suite);
    criterion_8(&mut suite);
    multi_valued(&mut suite);
    println!("acceptance: {} failed, {:.1?}", suite.failed, start.elapsed());
    if suite.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
