use super::*;
use crate::catalog;
use crate::corpus::{gen_corpus, CorpusSpec};
use crate::geometry::Region;
use crate::planner::HumanAnswer;
use crate::simulator::{
    hintless_scenarios, real_world_scenarios, reasoner_miss_scenarios, removal_scenarios,
    scripted_scenarios,
};
use crate::testutil::default_space;
use proptest::prelude::*;
use std::io::Cursor;

fn flags(tool: bool, operational: bool, functional: bool) -> SuccessFlags {
    SuccessFlags {
        tool,
        operational,
        functional,
        whole: tool && operational && functional,
        exploration: None,
    }
}

fn row(f: SuccessFlags, ticks: usize, wall_ms: f64) -> EpisodeRow {
    EpisodeRow {
        world_id: "w".into(),
        category: None,
        tags: Vec::new(),
        task: "t".into(),
        repeat: 0,
        perception_seed: 0,
        status: "Completed".into(),
        ticks,
        msi_runs: 0,
        flags: Some(f),
        esr_hits: 3,
        esr_frames: 4,
        wall_ms,
        skipped: None,
    }
}

#[test]
fn report_arithmetic() {
    let rows = vec![
        row(flags(true, true, true), 10, 100.0),
        row(flags(true, false, true), 20, 100.0),
        row(flags(false, false, false), 5, 50.0),
        row(flags(true, true, false), 8, 80.0),
    ];
    let r = aggregate(rows, &EvalOptions::default());
    assert_eq!((r.tsr, r.osr, r.fsr, r.wsr), (75.0, 50.0, 50.0, 25.0));
    assert_eq!(r.asr, None);
    assert_eq!(r.esr, Some(75.0));
    // (100 + 200 + 100 + 100) / 4 ticks per second
    assert!((r.fps - 125.0).abs() < 1e-9);
}

proptest! {
    #[test]
    fn whole_success_never_exceeds_its_parts(bits in prop::collection::vec(0u8..8, 1..40)) {
        let rows = bits
            .iter()
            .map(|b| row(flags(b & 1 != 0, b & 2 != 0, b & 4 != 0), 1, 1.0))
            .collect();
        let r = aggregate(rows, &EvalOptions::default());
        prop_assert!(r.wsr <= r.tsr.min(r.osr).min(r.fsr));
        for v in [r.tsr, r.osr, r.fsr, r.wsr] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
        prop_assert!(r.fps > 0.0);
    }
}

#[test]
fn unloadable_scenarios_become_skipped_rows() {
    let dir = tempfile::tempdir().unwrap();
    let world = scripted_scenarios().remove(0);
    world.save(&dir.path().join("a.json")).unwrap();
    std::fs::write(dir.path().join("b.json"), "{ not a world").unwrap();
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let entries = load_scenarios(dir.path()).unwrap();
    assert_eq!(entries.len(), 2);
    assert!(matches!(&entries[1], ScenarioEntry::Skipped { name, .. } if name.ends_with("b.json")));

    let (params, space) = default_space(7);
    let opts = EvalOptions { params, ..EvalOptions::default() };
    let out = run_eval(&space, &entries, &opts);
    assert_eq!((out.report.episodes, out.report.skipped), (1, 1));
    assert_eq!(out.report.wsr, 100.0);
    assert!(out.report.to_table().contains("skipped:"));
}

#[test]
fn noiseless_real_world_suite_scores_perfectly_and_writes_logs() {
    let (params, space) = default_space(7);
    let opts = EvalOptions { params, workers: 2, ..EvalOptions::default() };
    let out = run_eval(&space, &entries(real_world_scenarios()), &opts);
    let r = &out.report;
    assert_eq!(r.episodes, 6);
    assert_eq!((r.tsr, r.osr, r.fsr, r.wsr), (100.0, 100.0, 100.0, 100.0));
    assert!(r.esr.unwrap() >= 95.0);
    assert!(r.fps > 0.0);

    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("out/report");
    write_report(&stem, &out).unwrap();
    let back: EvalReport =
        serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json")).unwrap()).unwrap();
    assert_eq!(&back, r);
    let logs = std::fs::read_dir(stem.with_extension("episodes")).unwrap().count();
    assert_eq!(logs, 6);
}

#[test]
fn parallel_evaluation_matches_serial() {
    let (params, space) = default_space(7);
    let worlds = entries(scripted_scenarios().into_iter().take(6).collect());
    let serial = EvalOptions { params: params.clone(), noise: 0.5, seed: 3, repeats: 2, ..EvalOptions::default() };
    let parallel = EvalOptions { workers: 4, ..serial.clone() };
    let strip = |o: EvalOutput| o.traces.iter().map(|t| t.without_timing()).collect::<Vec<_>>();
    assert_eq!(strip(run_eval(&space, &worlds, &serial)), strip(run_eval(&space, &worlds, &parallel)));
}

fn ablation_fixture() -> (RelationshipSpace, Vec<AblationQuery>, std::collections::HashMap<String, usize>) {
    let (params, _) = default_space(7);
    let spec = CorpusSpec::new(432, params.dims, catalog::CORPUS_CLASS_COUNT, params.subclusters, 7);
    let labeled = gen_corpus(&spec).unwrap();
    let space = RelationshipSpace::build(crate::corpus::drafts(&labeled), &params, 7).unwrap();
    let held_out = gen_corpus(&CorpusSpec { size: 200, seed: 99, ..spec }).unwrap();
    (space, AblationQuery::from_drafts(&held_out), class_index(&labeled))
}

#[test]
fn affordance_ablation_shape() {
    let (space, queries, classes) = ablation_fixture();
    let t = ablate_retrieval(&space, &queries, &classes, RetrievalMethod::Affordance, &[0.0, 10.0, 40.0, f64::INFINITY]);
    assert_eq!(t.rows.len(), 5);
    let es = t.exhaustive();
    assert_eq!((es.accuracy, es.found_rate), (100.0, 100.0));
    assert_eq!(es.mean_visited, t.records as f64);
    // c = 0 only finds exact duplicates and exhausts the space otherwise
    let zero = t.row(0.0).unwrap();
    assert_eq!(zero.found_rate, 0.0);
    assert_eq!(zero.mean_visited, t.records as f64);
    // an unbounded radius accepts the first record visited
    let inf = t.row(f64::INFINITY).unwrap();
    assert_eq!((inf.found_rate, inf.mean_visited), (100.0, 1.0));
    let c10 = t.row(10.0).unwrap();
    let c40 = t.row(40.0).unwrap();
    assert!(c10.accuracy >= c40.accuracy);
    assert!(c10.mean_visited < t.records as f64);
    assert!(c40.mean_visited <= c10.mean_visited);
    assert!(t.to_table().contains("| ES |"));
}

#[test]
fn ablation_is_deterministic_apart_from_timing() {
    let (space, queries, classes) = ablation_fixture();
    let strip = |mut t: AblationTable| {
        for r in &mut t.rows {
            r.mean_time_ms = 0.0;
        }
        t
    };
    for method in [RetrievalMethod::Affordance, RetrievalMethod::Textsim] {
        let a = strip(ablate_retrieval(&space, &queries, &classes, method, &[0.3, 10.0]));
        let b = strip(ablate_retrieval(&space, &queries, &classes, method, &[0.3, 10.0]));
        assert_eq!(a, b);
        assert_eq!(a.exhaustive().threshold, None);
    }
}

#[test]
fn textsim_rows_follow_the_threshold() {
    let (space, queries, classes) = ablation_fixture();
    let t = ablate_retrieval(&space, &queries, &classes, RetrievalMethod::Textsim, &[0.0, 0.5, 1.01]);
    assert_eq!(t.row(0.0).unwrap().found_rate, 100.0);
    assert_eq!(t.row(1.01).unwrap().found_rate, 0.0);
    assert!(t.row(0.5).unwrap().found_rate <= 100.0);
}

#[test]
fn text_cosine_examples() {
    assert!((text_cosine("Hand me the cup", "the CUP, hand me") - 1.0).abs() < 1e-12);
    assert_eq!(text_cosine("alpha beta", "gamma"), 0.0);
    assert_eq!(text_cosine("", "gamma"), 0.0);
    // {a:1, b:1} vs {a:1}: 1 / sqrt(2)
    assert!((text_cosine("a b", "a") - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn error_analysis_is_perfect_without_noise() {
    let (params, space) = default_space(7);
    let opts = EvalOptions { params, workers: 2, ..EvalOptions::default() };
    let r = run_error_analysis(&space, &removal_scenarios(), &reasoner_miss_scenarios(), &opts);
    assert_eq!(r.edr, Some(100.0));
    assert_eq!(r.err, Some(100.0));
    assert_eq!(r.cases.len(), removal_scenarios().len() + reasoner_miss_scenarios().len());
    let hintless = run_error_analysis(&space, &[], &hintless_scenarios(), &opts);
    assert_eq!((hintless.edr, hintless.err), (None, Some(0.0)));
}

#[test]
fn console_answers_parse() {
    assert_eq!(parse_answer("  \n"), HumanAnswer::Abort);
    assert_eq!(parse_answer("10 20 110, 220"), HumanAnswer::Region(Region::new(10, 20, 110, 220)));
    assert_eq!(parse_answer("kettle\n"), HumanAnswer::Label("kettle".into()));
    assert_eq!(parse_answer("1 2 3"), HumanAnswer::Label("1 2 3".into()));
    assert_eq!(parse_answer("1 2 3 4 5"), HumanAnswer::Label("1 2 3 4 5".into()));
}

#[test]
fn interactive_label_completes_and_empty_line_aborts() {
    let (params, space) = default_space(7);
    let perception = crate::perception::MockPerception::noiseless(params.dims);
    let miss = reasoner_miss_scenarios().remove(0);
    let label = miss.human_hints[&miss.task].clone();

    let mut w = miss.clone();
    let mut shown = Vec::new();
    let trace = interactive_episode(&mut w, &space, &params, &perception, 100, Cursor::new(format!("{label}\n")), &mut shown);
    assert!(trace.completed());
    assert_eq!(trace.human_answers, 1);
    assert!(String::from_utf8(shown).unwrap().contains(&miss.task));

    let mut w = miss.clone();
    let trace = interactive_episode(&mut w, &space, &params, &perception, 100, Cursor::new("\n"), Vec::new());
    assert_eq!(
        trace.status,
        crate::planner::PlannerStatus::Failed(crate::planner::FailureReason::HumanAbort)
    );
    // closed input behaves like an empty line
    let mut w = miss;
    let trace = interactive_episode(&mut w, &space, &params, &perception, 100, Cursor::new(""), Vec::new());
    assert!(!trace.completed());
}
