use proptest::prelude::*;

use gnp_core::eval::{ade, best_of_k, fde, rmse};
use gnp_core::geom::{self, Vec2};
use gnp_core::nsf::{repulsion_force, NeighborPoint, EPS_LINE};
use gnp_core::trajdata::{LaneGeometry, LaneLine};

fn path(len: usize) -> impl Strategy<Value = Vec<Vec2>> {
    prop::collection::vec((-100.0..100.0f64, -10.0..10.0f64).prop_map(|(x, y)| [x, y]), len)
}

fn pair() -> impl Strategy<Value = (Vec<Vec2>, Vec<Vec2>)> {
    (1usize..40).prop_flat_map(|n| (path(n), path(n)))
}

proptest! {
    #[test]
    fn ade_is_bounded_by_rmse_and_the_worst_step((truth, pred) in pair()) {
        let a = ade(&truth, &pred).unwrap();
        let r = rmse(&truth, &pred).unwrap();
        let worst = truth.iter().zip(&pred).map(|(t, p)| geom::dist(*t, *p)).fold(0.0, f64::max);
        prop_assert!(a <= r + 1e-9);
        prop_assert!(r <= worst + 1e-9);
        prop_assert!(fde(&truth, &pred).unwrap() <= worst);
    }

    #[test]
    fn metrics_ignore_a_common_shift((truth, pred) in pair(), dx in -1e3..1e3f64, dy in -1e3..1e3f64) {
        let shift = |v: &[Vec2]| v.iter().map(|p| [p[0] + dx, p[1] + dy]).collect::<Vec<_>>();
        let (t2, p2) = (shift(&truth), shift(&pred));
        prop_assert!((ade(&truth, &pred).unwrap() - ade(&t2, &p2).unwrap()).abs() < 1e-9);
        prop_assert!((rmse(&truth, &pred).unwrap() - rmse(&t2, &p2).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn best_of_k_never_loses_to_any_hypothesis(truth in path(20), hyps in prop::collection::vec(path(20), 1..6)) {
        let weights = vec![1.0; hyps.len()];
        let r = best_of_k(&truth, &hyps, &weights, 0.1).unwrap();
        for h in &hyps {
            prop_assert!(r.best_scores.ade <= ade(&truth, h).unwrap());
        }
        prop_assert!(r.best_scores.ade <= r.weighted.ade + 1e-9);
    }

    #[test]
    fn mirrored_scene_mirrors_repulsion(
        y in 0.3..10.8f64,
        offsets in prop::collection::vec((-40.0..40.0f64, -8.0..8.0f64, 0.1..4.0f64), 0..6),
    ) {
        let lanes = LaneGeometry::uniform(3, 3.7).unwrap();
        let mirrored = LaneGeometry::new(
            lanes.lines().iter().rev().map(|l| LaneLine { offset: -l.offset, kind: l.kind }).collect(),
            1,
        )
        .unwrap();
        let p = [0.0, y];
        let neighbors: Vec<NeighborPoint> =
            offsets.iter().enumerate().map(|(i, o)| NeighborPoint { id: i as u64, position: [o.0, y + o.1] }).collect();
        let flipped: Vec<NeighborPoint> =
            neighbors.iter().map(|n| NeighborPoint { id: n.id, position: [-n.position[0], -n.position[1]] }).collect();
        let kv: Vec<f64> = offsets.iter().map(|o| o.2).collect();
        let kl = [1.0, 0.5, 0.7, 1.3];
        let kl_rev = [1.3, 0.7, 0.5, 1.0];
        let a = repulsion_force(p, &neighbors, &kv, &lanes, &kl, 5.0, EPS_LINE).unwrap();
        let b = repulsion_force([-p[0], -p[1]], &flipped, &kv, &mirrored, &kl_rev, 5.0, EPS_LINE).unwrap();
        prop_assert!(geom::dist(a.total, [-b.total[0], -b.total[1]]) < 1e-9 * (1.0 + geom::norm(a.total)));
    }
}
