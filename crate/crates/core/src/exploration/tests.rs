use super::*;
use crate::corpus::catalog_result;
use crate::perception::{MockPerception, SceneFrame};
use crate::space::InstructionRecord;
use crate::affordance::AffordanceVector;
use crate::testutil::{frame, object, tables};
use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
use super::Strategy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn det(rank: usize, bbox: Region) -> Detection {
    Detection {
        label: "x".into(),
        bbox,
        confidence: 1.0 / rank as f64,
        rank,
    }
}

fn blank() -> SceneFrame {
    SceneFrame::new(ImageRef::new("frame/blank"), 1280, 960, 0)
}

/// (negated weight, rank, x_min, square, contributors)
type Scored = (i64, usize, u32, [i64; 4], Vec<usize>);

/// Exhaustive enumerator written independently of `visible_explore`: signed
/// arithmetic, explicit interval tests, argmax by sorting.
fn oracle(dets: &[Detection], w: i64, h: i64, n: usize, n_prime: usize, limit: usize, px: i64) -> Option<Region> {
    let clamp = |v: i64, hi: i64| v.max(0).min(hi);
    let mut scored: Vec<Scored> = Vec::new();
    for c in dets {
        if c.rank <= n || c.rank > limit {
            continue;
        }
        let cx = i64::from(c.bbox.x_min) + i64::from(c.bbox.x_max - c.bbox.x_min) / 2;
        let cy = i64::from(c.bbox.y_min) + i64::from(c.bbox.y_max - c.bbox.y_min) / 2;
        let sq = [clamp(cx - px, w), clamp(cy - px, h), clamp(cx + px, w), clamp(cy + px, h)];
        let mut weight = 0i64;
        let mut members = Vec::new();
        for (j, d) in dets.iter().enumerate() {
            let b = [d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max].map(i64::from);
            let overlap_x = b[0] <= sq[2] && sq[0] <= b[2];
            let overlap_y = b[1] <= sq[3] && sq[1] <= b[3];
            if overlap_x && overlap_y && d.rank > n && d.rank <= n_prime {
                weight += (n_prime - d.rank) as i64;
                members.push(j);
            }
        }
        scored.push((-weight, c.rank, c.bbox.x_min, sq, members));
    }
    scored.sort_by_key(|s| (s.0, s.1, s.2));
    let (_, _, _, sq, members) = scored.into_iter().next()?;
    let mut r = sq;
    for j in members {
        let b = &dets[j].bbox;
        r = [
            r[0].min(i64::from(b.x_min)),
            r[1].min(i64::from(b.y_min)),
            r[2].max(i64::from(b.x_max)),
            r[3].max(i64::from(b.y_max)),
        ];
    }
    Some(Region::new(
        clamp(r[0], w) as u32,
        clamp(r[1], h) as u32,
        clamp(r[2], w) as u32,
        clamp(r[3], h) as u32,
    ))
}

fn random_detections(rng: &mut ChaCha8Rng) -> Vec<Detection> {
    let count = rng.random_range(0..=50);
    (1..=count)
        .map(|rank| {
            let x = rng.random_range(0..1280u32);
            let y = rng.random_range(0..960u32);
            let bw = rng.random_range(1..200u32);
            let bh = rng.random_range(1..200u32);
            det(rank, Region::new(x, y, (x + bw).min(1280), (y + bh).min(960)))
        })
        .collect()
}

#[test]
fn strategy_thresholds() {
    let p = ConfigParams::default();
    assert_eq!(choose_strategy(0.90, 0.95, &p), Strategy::None);
    assert_eq!(choose_strategy(0.5, 0.80, &p), Strategy::Visible);
    assert_eq!(choose_strategy(0.5, 0.75, &p), Strategy::Invisible);
    assert_eq!(choose_strategy(0.85, 0.90, &p), Strategy::Visible);
}

#[test]
fn lone_candidate_takes_its_own_weight() {
    let p = ConfigParams::default();
    let bbox = Region::new(600, 400, 640, 440);
    let dets: Vec<_> = (1..=5)
        .map(|r| det(r, Region::new(0, 0, 10, 10)))
        .chain([det(6, bbox)])
        .collect();
    let region = visible_explore(&dets, &blank(), &p).unwrap();
    // square of half-side 250 around (620, 420), clipped; own box inside it
    assert_eq!(region, Region::new(370, 170, 870, 670));
    assert_eq!(detection_weight(6, &p), Some(34));
}

#[test]
fn zero_weight_contributor_still_expands_the_region() {
    let p = ConfigParams::default();
    let mut dets: Vec<_> = (1..=5).map(|r| det(r, Region::new(0, 0, 5, 5))).collect();
    dets.push(det(6, Region::new(600, 400, 640, 440)));
    for r in 7..40 {
        dets.push(det(r, Region::new(600, 400, 640, 440)));
    }
    dets.push(det(40, Region::new(860, 660, 1000, 800)));
    assert_eq!(detection_weight(40, &p), Some(0));
    let region = visible_explore(&dets, &blank(), &p).unwrap();
    assert_eq!(region, Region::new(370, 170, 1000, 800));
}

#[test]
fn no_low_ranked_candidates_is_impossible() {
    let p = ConfigParams::default();
    let dets: Vec<_> = (1..=5).map(|r| det(r, Region::new(0, 0, 5, 5))).collect();
    assert!(matches!(
        visible_explore(&dets, &blank(), &p),
        Err(ExplorationError::Impossible(_))
    ));
    assert!(visible_explore(&[], &blank(), &p).is_err());
}

#[test]
fn visible_exploration_matches_the_exhaustive_oracle() {
    let p = ConfigParams::default();
    let f = blank();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..2_000 {
        let dets = random_detections(&mut rng);
        let got = visible_explore(&dets, &f, &p).ok();
        let want = oracle(&dets, 1280, 960, 5, 40, 10, 250);
        assert_eq!(got, want, "{dets:?}");
    }
}

proptest! {
    #[test]
    fn output_covers_square_and_contributors(seed in any::<u64>()) {
        let p = ConfigParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dets = random_detections(&mut rng);
        if let Ok(region) = visible_explore(&dets, &blank(), &p) {
            prop_assert!(blank().bounds().contains(&region));
            let covered_candidate = dets
                .iter()
                .filter(|d| d.rank > 5 && d.rank <= 10)
                .any(|d| {
                    let (cx, cy) = d.bbox.center();
                    let sq = Region::square_around(cx, cy, 250, 1280, 960);
                    region.contains(&sq)
                        && dets
                            .iter()
                            .filter(|o| o.rank > 5 && o.rank <= 40 && o.bbox.intersects(&sq))
                            .all(|o| region.contains(&o.bbox))
                });
            prop_assert!(covered_candidate);
        }
    }

    #[test]
    fn weights_stay_in_range(rank in 1usize..100) {
        let p = ConfigParams::default();
        match detection_weight(rank, &p) {
            Some(w) => prop_assert!(rank > 5 && rank <= 40 && w < 40 - 5),
            None => prop_assert!(rank <= 5 || rank > 40),
        }
    }

    #[test]
    fn strategy_is_total(s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let p = ConfigParams::default();
        let k = choose_strategy(s, t, &p);
        prop_assert_eq!(k, choose_strategy(s, t, &p));
        prop_assert_eq!(k == Strategy::None, s > 0.85);
    }
}

fn pool_with(labels: &[&str]) -> CandidatePool {
    let v = AffordanceVector::uniform(19, 5.0);
    let anchor = InstructionRecord {
        id: "a".into(),
        text: "t".into(),
        instruction_affordance: v.clone(),
        tool_affordance: v,
        cluster_id: 0,
        subcluster_id: 0,
        results: labels.iter().map(|l| catalog_result(l)).collect(),
    };
    CandidatePool::new(anchor, Vec::new())
}

const COLD: &str = "I want something cold to drink";

fn kitchen() -> SceneFrame {
    frame(
        vec![
            object("f", "fridge", Region::new(800, 200, 1000, 600), 3.0, false),
            object("c", "cabinet", Region::new(100, 300, 300, 600), 3.0, false),
            object("b", "book", Region::new(500, 500, 560, 540), 1.0, false),
        ],
        tables(&[], &[("cold to drink", "fridge")]),
        0,
    )
}

#[test]
fn invisible_exploration_uses_pool_hints() {
    let p = ConfigParams::default();
    let m = MockPerception::noiseless(19);
    // coke results carry a fridge hint, cup results a cabinet hint
    let pool = pool_with(&["cup", "coke"]);
    let (region, label) = invisible_explore(&kitchen(), COLD, Some(&pool), &p, &m).unwrap();
    assert_eq!(label, "fridge");
    assert_eq!(region, Region::new(800, 200, 1000, 600));
}

#[test]
fn invisible_exploration_falls_back_to_the_reasoner() {
    let p = ConfigParams::default();
    let m = MockPerception::noiseless(19);
    let (region, label) = invisible_explore(&kitchen(), COLD, None, &p, &m).unwrap();
    assert_eq!(label, "fridge");
    assert_eq!(region, Region::new(800, 200, 1000, 600));
}

#[test]
fn invisible_exploration_without_a_container_is_impossible() {
    let p = ConfigParams::default();
    let m = MockPerception::noiseless(19);
    let f = frame(
        vec![object("b", "book", Region::new(500, 500, 560, 540), 1.0, false)],
        tables(&[], &[("cold to drink", "fridge")]),
        0,
    );
    assert!(matches!(
        invisible_explore(&f, COLD, Some(&pool_with(&["coke"])), &p, &m),
        Err(ExplorationError::Impossible(_))
    ));
    assert!(matches!(
        invisible_explore(&f, COLD, None, &p, &m),
        Err(ExplorationError::Impossible(_))
    ));
    let empty = frame(vec![], tables(&[], &[]), 0);
    assert!(matches!(
        invisible_explore(&empty, COLD, None, &p, &m),
        Err(ExplorationError::Perception(PerceptionError::Reasoner(_)))
    ));
}
