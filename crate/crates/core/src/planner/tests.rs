use super::*;
use crate::catalog;
use crate::corpus::{self, CorpusSpec};
use crate::exploration::ExplorationOutcome;
use crate::media::ImageRef;
use crate::perception::{MockPerception, SIMILARITY_EPSILON};
use crate::simulator::{
    hintless_scenarios, novel_scenarios, reasoner_miss_scenarios, removal_scenarios,
    scripted_scenarios, unreachable_world, World,
};
use crate::testutil::{default_space, frame, object, tables};
use proptest::prelude::{prop_assert_eq, proptest};

fn det(rank: usize, confidence: f64) -> Detection {
    Detection {
        label: "x".into(),
        bbox: Region::new(0, 0, 10, 10),
        confidence,
        rank,
    }
}

fn world(id: &str) -> World {
    let mut all = scripted_scenarios();
    all.extend(removal_scenarios());
    all.extend(reasoner_miss_scenarios());
    all.extend(hintless_scenarios());
    all.push(unreachable_world());
    all.into_iter().find(|w| w.id == id).expect("known world")
}

fn run(id: &str, max_steps: usize, responder: &mut dyn HumanResponder) -> (EpisodeTrace, World) {
    let (params, space) = default_space(7);
    let mut w = world(id);
    let m = MockPerception::noiseless(params.dims);
    let trace = run_closed_loop(&mut w, &space, &params, &m, max_steps, responder);
    (trace, w)
}

#[test]
fn validity_examples() {
    let p = ConfigParams::default();
    let v = validity_score(&[det(1, 1.0)], &[1.0 - SIMILARITY_EPSILON], &p);
    assert!(v.valid && (v.score - (2.0 - SIMILARITY_EPSILON)).abs() < 1e-12);
    let v = validity_score(&[det(1, 0.2)], &[0.25], &p);
    assert!(!v.valid && (v.score - 0.45).abs() < 1e-12);
    assert!(validity_score(&[det(1, 0.25)], &[0.25], &p).valid);
    let v = validity_score(&[], &[], &p);
    assert_eq!((v.score, v.valid), (0.0, false));
}

#[test]
fn validity_uses_the_best_matching_detection_of_the_top_2n() {
    let p = ConfigParams::default();
    let dets: Vec<_> = (1..=12).map(|r| det(r, 0.5 / r as f64)).collect();
    let mut sims = vec![0.1; 12];
    sims[6] = 0.9;
    let v = validity_score(&dets, &sims, &p);
    assert!((v.score - (0.5 / 7.0 + 0.9)).abs() < 1e-12);
    // rank 11 lies outside the top 2N
    sims[6] = 0.1;
    sims[10] = 0.95;
    let v = validity_score(&dets, &sims, &p);
    assert!((v.score - 0.6).abs() < 1e-12);
}

#[test]
fn standalone_validity_agrees_with_matching_evidence() {
    let (params, space) = default_space(7);
    let m = MockPerception::new(3, 0.5, params.dims);
    for id in ["clear-cup", "amb-mug", "unr-mallet", "abs-soda", "rw-walnuts"] {
        let w = world(id);
        let f = w.observe();
        let vector = m.score_affordance(&Media::Text(&w.task)).unwrap();
        let Retrieval::Pool(pool) = retrieve_candidates(&space, &vector, &params).unwrap() else {
            panic!("{id} should retrieve a pool");
        };
        let pool = Arc::new(pool);
        let (_, evidence) = match_tool_with_evidence(&f, &pool, &params, &m);
        assert_eq!(
            validity_check(&f, &evidence.detections, &pool, &m, &params),
            evidence_validity(&evidence, &params),
            "{id}"
        );
    }
}

#[test]
fn msi_switch_rules() {
    let p = ConfigParams::default();
    let valid = Some(Validity::from_score(0.7, &p));
    let invalid = Some(Validity::from_score(0.3, &p));
    let mut s = PlannerState::default();
    assert!(needs_msi(&s, true, None));
    assert!(!needs_msi(&s, false, valid));
    assert!(needs_msi(&s, false, invalid));
    s.msi_latched = true;
    assert!(!needs_msi(&s, false, invalid));
    assert!(!needs_msi(&s, true, None));
    s.pending_answer = Some(HumanAnswer::Label("cup".into()));
    assert!(needs_msi(&s, false, valid));
}

proptest! {
    #[test]
    fn msi_trigger_is_novel_or_invalid(conf in 0.0f64..1.0, sim in 0.0f64..1.0, novel: bool) {
        let p = ConfigParams::default();
        let v = validity_score(&[det(1, conf)], &[sim], &p);
        prop_assert_eq!(msi_trigger(novel, Some(v)), novel || conf + sim < 0.5);
    }
}

fn grounding(tool: Region) -> GroundingResult {
    let (op, func) = tool.split_halves();
    GroundingResult {
        tool_label: "coke".into(),
        tool_image: ImageRef::catalog("coke"),
        tool_region: tool,
        operational_region: op,
        functional_region: func,
        operational_label: None,
        functional_label: None,
        unseen_region_label: None,
        unseen_region_image: None,
    }
}

#[test]
fn motion_rules() {
    let p = ConfigParams::default();
    let tool = Region::new(100, 100, 140, 180);
    let g = grounding(tool);
    let mut s = PlannerState::default();
    assert_eq!(
        decide_motion(Decision::Grounded(&g), false, &mut s, &p),
        MotionCommand::Approach { region: tool }
    );
    assert_eq!(s.status, PlannerStatus::Running);
    let cmd = decide_motion(Decision::Grounded(&g), true, &mut s, &p);
    assert_eq!(
        cmd,
        MotionCommand::Manipulate {
            operational: g.operational_region,
            functional: g.functional_region
        }
    );
    assert_eq!(s.status, PlannerStatus::Completed);
    assert_eq!(s.final_grounding, Some(g));

    let mut s = PlannerState::default();
    let visible = ExplorationOutcome::Visible { region: tool };
    for near in [false, true] {
        assert_eq!(
            decide_motion(Decision::Explore(&visible), near, &mut s, &p),
            MotionCommand::Approach { region: tool }
        );
    }
    let fridge = ExplorationOutcome::Invisible {
        region: tool,
        label: "fridge".into(),
    };
    assert_eq!(
        decide_motion(Decision::Explore(&fridge), false, &mut s, &p),
        MotionCommand::Approach { region: tool }
    );
    assert_eq!(
        decide_motion(Decision::Explore(&fridge), true, &mut s, &p),
        MotionCommand::Reformulate {
            subgoal: "open the fridge".into(),
            key_region: tool
        }
    );
    assert_eq!(s.subgoal_stack.len(), 1);
    assert_eq!(s.subgoal_stack[0].text, "open the fridge");
}

#[test]
fn repeated_reformulation_fails() {
    let p = ConfigParams::default();
    let mut s = PlannerState::default();
    let drawer = ExplorationOutcome::Invisible {
        region: Region::new(0, 0, 50, 50),
        label: "drawer".into(),
    };
    for _ in 0..p.max_subgoal_depth {
        assert!(matches!(
            decide_motion(Decision::Explore(&drawer), true, &mut s, &p),
            MotionCommand::Reformulate { .. }
        ));
        s.subgoal_stack.pop();
    }
    assert!(matches!(
        decide_motion(Decision::Explore(&drawer), true, &mut s, &p),
        MotionCommand::RequestHuman { .. }
    ));
    assert_eq!(s.status, PlannerStatus::Failed(FailureReason::ReformulationLoop));
}

#[test]
fn world_distance_uses_the_viewpoint() {
    let f = frame(vec![], tables(&[], &[]), 0);
    let r = Region::new(640 + 90 - 10, 480 - 10, 640 + 90 + 10, 480 + 10);
    assert!((world_distance(&f, &r).unwrap() - 3.0).abs() < 1e-12);
    let bare = SceneFrame::new(ImageRef::new("x"), 10, 10, 0);
    assert_eq!(world_distance(&bare, &r), None);
}

/// A space built without the drinking class, so drinking tasks are novel.
fn space_without_drinking() -> (ConfigParams, RelationshipSpace) {
    let params = ConfigParams::default();
    let drafts: Vec<_> = corpus::gen_corpus(&CorpusSpec::new(
        432,
        params.dims,
        catalog::CORPUS_CLASS_COUNT,
        params.subclusters,
        11,
    ))
    .unwrap()
    .into_iter()
    .filter(|d| d.class != 0)
    .collect();
    let space = RelationshipSpace::build(corpus::drafts(&drafts), &params, 11).unwrap();
    (params, space)
}

fn cup_scene(task: &str) -> SceneFrame {
    frame(
        vec![
            object("c", "cup", Region::new(700, 450, 730, 498), 2.0, false),
            object("b", "book", Region::new(500, 300, 530, 330), 5.0, false),
        ],
        tables(&[(task, "cup")], &[(task, "cabinet")]),
        0,
    )
}

#[test]
fn msi_learns_a_novel_task() {
    let (params, space) = space_without_drinking();
    let m = MockPerception::noiseless(params.dims);
    let task = "I am thirsty";
    let vector = m.score_affordance(&Media::Text(task)).unwrap();
    assert!(space.dfs_retrieve(&vector, params.retrieval_radius).unwrap().hit.is_none());

    let before = space.record_count();
    let mut planner = Planner::new(task, space, params.clone(), &m);
    let f = cup_scene(task);
    let report = planner.step(&f);
    assert_eq!(report.stream, Stream::Msi);
    let g = report.grounding.expect("cup grounded");
    assert_eq!(g.tool_label, "cup");
    assert_eq!(g.tool_region, Region::new(700, 450, 730, 498));
    assert_eq!(report.command, MotionCommand::Approach { region: g.tool_region });
    assert_eq!(planner.space().record_count(), before + 1);
    let hit = planner
        .space()
        .dfs_retrieve(&vector, params.retrieval_radius)
        .unwrap()
        .hit
        .expect("the new record is retrievable");
    assert_eq!(hit.results[0].tool_label, "cup");
    planner.space().check_invariants().unwrap();

    // the next tick retrieves the learned record and grounds in ADM
    let report = planner.step(&f);
    assert_eq!(report.stream, Stream::Adm);
    assert!(report.validity.unwrap().valid);
    assert_eq!(report.grounding.unwrap().tool_region, g.tool_region);
}

#[test]
fn mm_cot_selects_the_only_object() {
    let p = ConfigParams::default();
    let m = MockPerception::noiseless(p.dims);
    let task = "I am thirsty";
    let f = frame(
        vec![object("c", "cup", Region::new(700, 450, 730, 498), 2.0, false)],
        tables(&[(task, "cup")], &[]),
        0,
    );
    let out = mm_cot(&f, task, None, None, &p, &m).unwrap();
    assert_eq!(out.hypothesis.label, "cup");
    let MmCotResult::Grounded(g) = out.result else {
        panic!("expected grounding");
    };
    assert_eq!(g.tool_region, Region::new(700, 450, 730, 498));
    g.validate().unwrap();
}

#[test]
fn mm_cot_explores_when_nothing_matches() {
    let p = ConfigParams::default();
    let m = MockPerception::noiseless(p.dims);
    let task = "I want something cold to drink";
    let f = frame(
        vec![object("f", "fridge", Region::new(800, 300, 900, 500), 3.0, false)],
        tables(&[(task, "coke")], &[(task, "fridge")]),
        0,
    );
    let out = mm_cot(&f, task, None, None, &p, &m).unwrap();
    assert_eq!(
        out.result,
        MmCotResult::Explore(ExplorationOutcome::Invisible {
            region: Region::new(800, 300, 900, 500),
            label: "fridge".into()
        })
    );
    let empty = frame(vec![], tables(&[(task, "coke")], &[]), 0);
    assert!(matches!(
        mm_cot(&empty, task, None, None, &p, &m).unwrap().result,
        MmCotResult::Unresolved(_)
    ));
}

#[test]
fn reasoner_miss_asks_a_human() {
    let (params, space) = space_without_drinking();
    let m = MockPerception::noiseless(params.dims);
    let task = "I am thirsty";
    let f = frame(
        vec![object("c", "cup", Region::new(700, 450, 730, 498), 2.0, false)],
        tables(&[], &[]),
        0,
    );
    let mut planner = Planner::new(task, space, params, &m);
    let report = planner.step(&f);
    assert!(matches!(report.command, MotionCommand::RequestHuman { .. }));
    assert!(matches!(
        planner.state().status,
        PlannerStatus::Failed(FailureReason::PlanningError(_))
    ));
    // failures are sticky
    assert_eq!(planner.step(&f).command, MotionCommand::Idle);

    planner.provide_human_answer(HumanAnswer::Label("cup".into()));
    let report = planner.step(&f);
    assert_eq!(report.stream, Stream::Msi);
    assert_eq!(report.grounding.unwrap().tool_label, "cup");

    planner.provide_human_answer(HumanAnswer::Abort);
    assert_eq!(planner.state().status, PlannerStatus::Failed(FailureReason::HumanAbort));
}

#[test]
fn human_region_answer_grounds_directly() {
    let (params, space) = space_without_drinking();
    let m = MockPerception::noiseless(params.dims);
    let f = frame(
        vec![object("c", "cup", Region::new(700, 450, 730, 498), 2.0, false)],
        tables(&[], &[]),
        0,
    );
    let mut planner = Planner::new("I am thirsty", space, params, &m);
    planner.step(&f);
    planner.provide_human_answer(HumanAnswer::Region(Region::new(700, 450, 730, 498)));
    let g = planner.step(&f).grounding.unwrap();
    assert_eq!(g.tool_region, Region::new(700, 450, 730, 498));
    assert_eq!((g.operational_region, g.functional_region), Region::new(700, 450, 730, 498).split_halves());
}

#[test]
fn novel_hidden_tool_records_an_unseen_hint() {
    let (params, space) = default_space(7);
    let m = MockPerception::noiseless(params.dims);
    let w = novel_scenarios().into_iter().find(|w| w.id == "novel-mark").unwrap();
    let mut planner = Planner::new(&w.task, space, params, &m);
    let report = planner.step(&w.observe());
    assert_eq!(report.stream, Stream::Msi);
    assert!(matches!(report.exploration, ExplorationOutcome::Invisible { ref label, .. } if label == "drawer"));
    let learned = planner
        .space()
        .records()
        .find(|r| r.id.starts_with("msi-"))
        .expect("record inserted");
    let (label, image) = learned.results[0].unseen_hint().expect("hint attached");
    assert_eq!(label, "drawer");
    assert!(image.as_str().starts_with("snapshot/drawer/"));
}

#[test]
fn cup_episode_completes_quickly() {
    let (trace, w) = run("clear-cup", 60, &mut NoHuman);
    assert!(trace.completed(), "{:?}", trace.status);
    assert!(trace.ticks() <= 60);
    assert!(w.success);
    let flags = crate::simulator::check_success(&trace, &w);
    assert!(flags.whole);
}

#[test]
fn hidden_tool_episode_reformulates_then_manipulates() {
    let (trace, w) = run("rw-cold", 60, &mut NoHuman);
    assert!(trace.completed(), "{:?}", trace.status);
    let kinds: Vec<_> = trace.events.iter().map(|e| e.command.kind()).collect();
    let re = kinds.iter().position(|k| *k == "reformulate").expect("reformulated");
    assert!(matches!(
        &trace.events[re].command,
        MotionCommand::Reformulate { subgoal, .. } if subgoal == "open the fridge"
    ));
    assert!(trace.events[re + 1].note.as_deref().unwrap().contains("grounded"));
    assert_eq!(kinds.last(), Some(&"manipulate"));
    assert!(w.success && w.object("holder").unwrap().open);
    assert_eq!(crate::simulator::check_success(&trace, &w).exploration, Some(true));
}

#[test]
fn unreachable_tool_times_out() {
    let (trace, w) = run("unreachable", 50, &mut NoHuman);
    assert_eq!(trace.status, PlannerStatus::Failed(FailureReason::Timeout));
    assert_eq!(trace.ticks(), 50);
    assert!(!w.success);
}

#[test]
fn tool_removal_triggers_msi_on_the_next_tick() {
    let (trace, _) = run("rm-cup", 60, &mut NoHuman);
    let after = trace.events.iter().find(|e| e.step == 3).unwrap();
    assert!(!after.validity.unwrap().valid);
    assert_eq!(after.stream, Stream::Msi);
    assert!(trace.events.iter().filter(|e| e.step < 3).all(|e| e.validity.unwrap().valid));
    assert!(matches!(trace.status, PlannerStatus::Failed(_)));
}

#[test]
fn hint_answers_recover_reasoner_misses() {
    let (trace, w) = run("miss-sign", 60, &mut HintResponder);
    assert!(trace.completed(), "{:?}", trace.status);
    assert_eq!(trace.human_answers, 1);
    assert!(w.success);

    let (trace, _) = run("hintless-sign", 60, &mut HintResponder);
    assert!(matches!(
        trace.status,
        PlannerStatus::Failed(FailureReason::PlanningError(_))
    ));
    assert_eq!(trace.human_answers, 0);
}

#[test]
fn completed_episodes_manipulate_once_inside_the_tool() {
    for w in scripted_scenarios() {
        let (trace, _) = run(&w.id, 120, &mut NoHuman);
        assert!(trace.completed(), "{}: {:?}", w.id, trace.status);
        let manipulations: Vec<_> = trace
            .events
            .iter()
            .filter_map(|e| match &e.command {
                MotionCommand::Manipulate { operational, functional } => Some((*operational, *functional)),
                _ => None,
            })
            .collect();
        assert_eq!(manipulations.len(), 1, "{}", w.id);
        let tool = trace.final_grounding.as_ref().unwrap().tool_region;
        assert!(tool.contains(&manipulations[0].0) && tool.contains(&manipulations[0].1));
        // MSI never runs twice in a row without a human answer in between
        for pair in trace.events.windows(2) {
            assert!(!(pair[0].stream == Stream::Msi && pair[1].stream == Stream::Msi), "{}", w.id);
        }
    }
}

#[test]
fn ticks_after_the_end_are_idle() {
    let (params, space) = default_space(7);
    let m = MockPerception::noiseless(params.dims);
    let mut w = world("clear-cup");
    let mut planner = Planner::new(&w.task.clone(), space, params, &m);
    while planner.state().status == PlannerStatus::Running {
        let cmd = planner.step(&w.observe()).command;
        w.apply(&cmd);
    }
    assert_eq!(planner.step(&w.observe()).command, MotionCommand::Idle);
}

#[test]
fn episodes_are_deterministic_and_log_as_jsonl() {
    let (params, space) = default_space(7);
    let m = MockPerception::new(5, 0.5, params.dims);
    let traces: Vec<_> = (0..2)
        .map(|_| {
            let mut w = world("abs-soda");
            run_closed_loop(&mut w, &space, &params, &m, 100, &mut NoHuman)
        })
        .collect();
    assert_eq!(traces[0].without_timing(), traces[1].without_timing());
    let lines: Vec<_> = traces[0].to_jsonl().lines().map(str::to_string).collect();
    assert_eq!(lines.len(), traces[0].ticks());
    let back: EpisodeEvent = serde_json::from_str(&lines[0]).unwrap();
    assert_eq!(back.command, traces[0].events[0].command);
    assert!(lines[0].contains("\"kind\":\"approach\""));
}
