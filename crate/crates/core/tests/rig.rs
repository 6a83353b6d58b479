mod common;

use std::collections::BTreeSet;

use common::*;
use facerig::rig::{
    apply_offsets, drive_secondary, load_rig, offsets_between, save_rig, synthesize_expression, OffsetSet,
    WeightVector,
};
use facerig::solver::solve_weights;
use facerig::{BlendshapeRig, Error};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn zero_weights_reproduce_neutral() {
    let rig = random_rig(10, 10, 5, 1);
    let m = synthesize_expression(&rig, &WeightVector::zeros(5)).unwrap();
    assert_eq!(m.vertices(), rig.neutral().vertices());
    assert_eq!(m.faces(), rig.neutral().faces());
    assert_eq!(m.uvs(), rig.neutral().uvs());
}

#[test]
fn one_hot_adds_exactly_one_shape() {
    let rig = random_rig(10, 10, 5, 2);
    let m = synthesize_expression(&rig, &WeightVector::one_hot(5, 3)).unwrap();
    for (x, p) in m.vertices().iter().enumerate() {
        let n = rig.neutral().vertices()[x];
        let s = rig.shape(3)[x];
        assert_eq!(*p, [n[0] + s[0], n[1] + s[1], n[2] + s[2]]);
    }
}

#[test]
fn wrong_weight_length_is_a_dimension_error() {
    let rig = random_rig(4, 4, 3, 3);
    let err = synthesize_expression(&rig, &WeightVector::zeros(4)).unwrap_err();
    assert!(matches!(err, Error::Dimension { .. }), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn synthesis_matches_naive_loop(seed in 0u64..10_000) {
        let rig = random_rig(10, 10, 5, seed);
        let mut r = rng(seed ^ 0xabc);
        let alpha: Vec<f64> = (0..5).map(|_| r.random_range(0.0..=1.0)).collect();
        let m = synthesize_expression(&rig, &WeightVector::new(alpha.clone()).unwrap()).unwrap();
        let expect = naive_blend(&rig, &alpha);
        prop_assert_eq!(m.vertices(), expect.as_slice());
    }

    #[test]
    fn synthesis_is_linear(seed in 0u64..10_000) {
        let rig = random_rig(6, 6, 4, seed);
        let mut r = rng(seed);
        let a: Vec<f64> = (0..4).map(|_| r.random_range(0.0..0.5)).collect();
        let b: Vec<f64> = (0..4).map(|_| r.random_range(0.0..0.5)).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let syn = |w: &[f64]| synthesize_expression(&rig, &WeightVector::new(w.to_vec()).unwrap()).unwrap();
        let (pa, pb, pab) = (syn(&a), syn(&b), syn(&ab));
        for x in 0..rig.vertex_count() {
            for c in 0..3 {
                let lhs = pa.vertices()[x][c] + pb.vertices()[x][c] - rig.neutral().vertices()[x][c];
                prop_assert!((lhs - pab.vertices()[x][c]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn one_hot_trajectory_is_a_segment(t in 0.0f64..=1.0, i in 0usize..4) {
        let rig = random_rig(5, 5, 4, 11);
        let mut w = vec![0.0; 4];
        w[i] = t;
        let m = synthesize_expression(&rig, &WeightVector::new(w).unwrap()).unwrap();
        for x in 0..rig.vertex_count() {
            for c in 0..3 {
                let expect = rig.neutral().vertices()[x][c] + t * rig.shape(i)[x][c];
                prop_assert!((m.vertices()[x][c] - expect).abs() <= 1e-15);
            }
        }
    }
}

#[test]
fn zero_offsets_keep_shapes_bitwise() {
    let rig = random_rig(6, 6, 4, 5);
    let p = apply_offsets(&rig, &OffsetSet::zeros(4, rig.vertex_count())).unwrap();
    assert_eq!(p.shapes(), rig.shapes());
    assert!(p.validate().is_empty());
}

#[test]
fn negated_offsets_zero_every_shape() {
    let rig = random_rig(6, 6, 3, 6);
    let neg = OffsetSet {
        deltas: rig.shapes().iter().map(|s| s.iter().map(|d| d.map(|x| -x)).collect()).collect(),
    };
    let p = apply_offsets(&rig, &neg).unwrap();
    for s in p.shapes() {
        assert!(s.iter().all(|d| *d == [0.0; 3]));
    }
}

#[test]
fn dyadic_offsets_round_trip_exactly() {
    // values on a 2^-12 grid add and subtract without rounding
    let base = random_rig(6, 6, 3, 7);
    let q = |x: f64| (x * 4096.0).round() / 4096.0;
    let shapes = base.shapes().iter().map(|s| s.iter().map(|d| d.map(q)).collect()).collect();
    let rig = BlendshapeRig::new(base.neutral().clone(), shapes, base.names().to_vec(), BTreeSet::new()).unwrap();
    let mut r = rng(8);
    let offsets = OffsetSet {
        deltas: (0..3)
            .map(|_| {
                (0..rig.vertex_count())
                    .map(|_| [0; 3].map(|_: i32| r.random_range(-200i32..200) as f64 / 4096.0))
                    .collect()
            })
            .collect(),
    };
    let p = apply_offsets(&rig, &offsets).unwrap();
    assert_eq!(offsets_between(&rig, &p).unwrap(), offsets);
}

#[test]
fn random_offsets_round_trip_to_rounding() {
    let rig = random_rig(6, 6, 3, 9);
    let mut r = rng(10);
    let offsets = OffsetSet {
        deltas: (0..3)
            .map(|_| smooth_shape(rig.neutral(), &mut r, 0.01))
            .collect(),
    };
    let back = offsets_between(&rig, &apply_offsets(&rig, &offsets).unwrap()).unwrap();
    for (a, b) in back.deltas.iter().flatten().zip(offsets.deltas.iter().flatten()) {
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() <= 1e-16);
        }
    }
}

#[test]
fn offsets_with_wrong_vertex_count_rejected() {
    let rig = random_rig(5, 5, 2, 1);
    let err = apply_offsets(&rig, &OffsetSet::zeros(2, 7)).unwrap_err();
    assert!(matches!(err, Error::Dimension { .. }), "{err}");
}

#[test]
fn validation_names_the_bad_shape() {
    let rig = random_rig(5, 5, 3, 2);
    let mut shapes = rig.shapes().to_vec();
    shapes[1].pop();
    let bad = BlendshapeRig::new_unchecked(rig.neutral().clone(), shapes, rig.names().to_vec(), BTreeSet::new());
    let report = bad.validate();
    assert_eq!(report.len(), 1, "{report:?}");
    assert!(report[0].contains("shape1"), "{report:?}");
}

#[test]
fn validation_lists_duplicate_names() {
    let rig = random_rig(5, 5, 3, 2);
    let names = vec!["a".to_string(), "b".into(), "a".into()];
    let bad = BlendshapeRig::new_unchecked(rig.neutral().clone(), rig.shapes().to_vec(), names, BTreeSet::new());
    let report = bad.validate();
    assert_eq!(report.len(), 1, "{report:?}");
    assert!(report[0].contains("\"a\"") || report[0].contains('a'), "{report:?}");
    assert!(matches!(
        BlendshapeRig::new(rig.neutral().clone(), rig.shapes().to_vec(), vec!["a".into(), "b".into(), "a".into()], BTreeSet::new()),
        Err(Error::InvalidRig(_))
    ));
}

#[test]
fn extreme_index_out_of_range_is_invalid() {
    let rig = random_rig(5, 5, 2, 2);
    let bad = BlendshapeRig::new_unchecked(
        rig.neutral().clone(),
        rig.shapes().to_vec(),
        rig.names().to_vec(),
        [5].into_iter().collect(),
    );
    assert_eq!(bad.validate().len(), 1);
}

fn secondary_for(face: &BlendshapeRig) -> BlendshapeRig {
    let lashes = curved_grid(4, 3);
    let mut r = rng(42);
    let shapes = (0..face.shape_count()).map(|_| smooth_shape(&lashes, &mut r, 0.02)).collect();
    BlendshapeRig::new(lashes, shapes, face.names().to_vec(), BTreeSet::new()).unwrap()
}

#[test]
fn secondary_follows_primary_weights() {
    let face = random_rig(8, 8, 4, 12);
    let lashes = secondary_for(&face);
    let zero = drive_secondary(&face, &WeightVector::zeros(4), &lashes).unwrap();
    assert_eq!(zero.vertices(), lashes.neutral().vertices());
    let one = drive_secondary(&face, &WeightVector::one_hot(4, 2), &lashes).unwrap();
    let expect = naive_blend(&lashes, &[0.0, 0.0, 1.0, 0.0]);
    assert_eq!(one.vertices(), expect.as_slice());
}

#[test]
fn secondary_driven_by_solved_weights_matches_truth() {
    let face = random_rig(8, 8, 4, 13);
    let lashes = secondary_for(&face);
    let truth = [0.3, 0.0, 0.7, 1.0];
    let target = naive_mesh(&face, &truth);
    let fit = solve_weights(&face, &target, None).unwrap();
    let driven = drive_secondary(&face, &fit.weights, &lashes).unwrap();
    let expect = naive_blend(&lashes, &truth);
    for (a, b) in driven.vertices().iter().zip(&expect) {
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() < 1e-6);
        }
    }
}

#[test]
fn secondary_with_other_names_is_a_pairing_error() {
    let face = random_rig(5, 5, 2, 1);
    let mut other = random_rig(4, 4, 2, 2);
    other = BlendshapeRig::new(
        other.neutral().clone(),
        other.shapes().to_vec(),
        vec!["x".into(), "y".into()],
        BTreeSet::new(),
    )
    .unwrap();
    let err = drive_secondary(&face, &WeightVector::zeros(2), &other).unwrap_err();
    assert!(matches!(err, Error::RigPairing(_)), "{err}");
}

#[test]
fn manifest_round_trip_is_exact() {
    let rig = random_rig(7, 5, 3, 14);
    let rig = BlendshapeRig::new(
        rig.neutral().clone(),
        rig.shapes().to_vec(),
        rig.names().to_vec(),
        [1].into_iter().collect(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_rig(&rig, dir.path().join("rig.json")).unwrap();
    let back = load_rig(dir.path().join("rig.json")).unwrap();
    assert_eq!(back.shapes(), rig.shapes());
    assert_eq!(back.names(), rig.names());
    assert_eq!(back.extreme_set(), rig.extreme_set());
    assert_eq!(back.neutral().vertices(), rig.neutral().vertices());
    assert_eq!(back.neutral().uvs(), rig.neutral().uvs());
}
