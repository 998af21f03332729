mod common;

use mags_core::liegroup::{Sim3, Sim3Tangent};
use mags_core::registration::{
    extent_ratio, icp_refine, match_summaries, ransac_umeyama, register_pair, umeyama, verify,
    Correspondence, GateInputs, IcpParams, MatchParams, PatchNccMatcher, RansacParams,
    RegistrationParams, VerificationThresholds,
};
use mags_core::simworld::{generate_scenario, OverlapPlan, ScenarioConfig};
use mags_core::summary::{Aabb, SubmapId, SubmapSummary};
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

proptest! {
    #[test]
    fn umeyama_recovers_noiseless_transforms(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let truth = common::sim3(&mut rng);
        let src = common::points(&mut rng, 30, 2.0);
        let tgt: Vec<_> = src.iter().map(|p| truth.act(p)).collect();
        let est = umeyama(&src, &tgt).unwrap();
        prop_assert!(est.max_abs_diff(&truth) <= 1e-9);
        prop_assert!((est.rotation_matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn umeyama_is_equivariant(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let src = common::points(&mut rng, 25, 2.0);
        let tgt: Vec<_> = src.iter().map(|_| common::uniform3(&mut rng, 2.0)).collect();
        let (a, b) = (common::sim3(&mut rng), common::sim3(&mut rng));
        let t = umeyama(&src, &tgt).unwrap();
        let sa: Vec<_> = src.iter().map(|p| a.act(p)).collect();
        let tb: Vec<_> = tgt.iter().map(|p| b.act(p)).collect();
        let moved = umeyama(&sa, &tb).unwrap();
        prop_assert!(moved.max_abs_diff(&b.compose(&t).compose(&a.inverse())) <= 1e-9);
    }

    #[test]
    fn ransac_without_outliers_equals_umeyama(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let truth = common::sim3(&mut rng);
        let m: Vec<Correspondence> = (0..40)
            .map(|i| {
                let p = common::uniform3(&mut rng, 2.0);
                Correspondence::new(i, p, truth.act(&p) + 0.01 * common::gaussian3(&mut rng), 1.0)
            })
            .collect();
        let r = ransac_umeyama(&m, &RansacParams::default(), seed).unwrap();
        prop_assert_eq!(r.inliers, (0..40).collect::<Vec<_>>());
        let src: Vec<_> = m.iter().map(|c| c.source).collect();
        let tgt: Vec<_> = m.iter().map(|c| c.target).collect();
        prop_assert_eq!(r.transform, umeyama(&src, &tgt).unwrap());
    }

    #[test]
    fn extent_ratio_matches_direct_computation(seed in any::<u64>(), take in 1usize..50) {
        let mut rng = common::rng(seed);
        let src = common::points(&mut rng, 50, 3.0);
        let tgt = common::points(&mut rng, 50, 1.5);
        let mut idx: Vec<usize> = (0..50).collect();
        idx.shuffle(&mut rng);
        idx.truncate(take);
        let si: Vec<_> = idx.iter().map(|&i| src[i]).collect();
        let ti: Vec<_> = idx.iter().map(|&i| tgt[i]).collect();
        let diag = |p: &[Vector3<f64>]| {
            let lo = p.iter().fold(Vector3::repeat(f64::MAX), |a, b| a.inf(b));
            let hi = p.iter().fold(Vector3::repeat(f64::MIN), |a, b| a.sup(b));
            (hi - lo).norm()
        };
        let (sb, tb) = (Aabb::from_points(&src).unwrap(), Aabb::from_points(&tgt).unwrap());
        let expected = (diag(&si) / diag(&src)).min(diag(&ti) / diag(&tgt)).clamp(0.0, 1.0);
        let got = extent_ratio(&si, &ti, &sb, &tb).unwrap();
        prop_assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn icp_rmse_never_increases(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let src = common::points(&mut rng, 400, 1.0);
        let truth = common::sim3(&mut rng).with_scale(1.0);
        let tgt: Vec<_> = src.iter().map(|p| truth.act(p) + 0.02 * common::gaussian3(&mut rng)).collect();
        let start = truth.compose(&Sim3::exp(&Sim3Tangent::new(
            common::uniform3(&mut rng, 0.05),
            common::uniform3(&mut rng, 0.03),
            rng.random_range(-0.02..0.02),
        )));
        let mut last = f64::INFINITY;
        for iterations in 0..8 {
            let r = icp_refine(&start, &src, &tgt, &IcpParams { iterations, ..Default::default() });
            prop_assert!(r.rmse <= last + 1e-15);
            last = r.rmse;
        }
    }
}

fn lattice(rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    for i in 0..7 {
        for j in 0..7 {
            for k in 0..7 {
                let base = Vector3::new(i as f64, j as f64, k as f64).add_scalar(-3.0) * 0.3;
                out.push(base + common::uniform3(rng, 0.03));
            }
        }
    }
    out
}

#[test]
fn icp_recovers_truth_from_perturbed_start() {
    let mut rng = common::rng(31);
    for _ in 0..20 {
        let src = lattice(&mut rng);
        let truth = Sim3::new(rng.random_range(0.8..1.5), common::rotation(&mut rng), common::uniform3(&mut rng, 2.0));
        let tgt: Vec<_> = src.iter().map(|p| truth.act(p)).collect();
        let shift = common::unit3(&mut rng) * 0.05;
        let turn = UnitQuaternion::from_scaled_axis(common::unit3(&mut rng) * 2f64.to_radians());
        let start = Sim3::new(1.0, turn, shift).compose(&truth);
        let r = icp_refine(&start, &src, &tgt, &IcpParams::default());
        assert!(r.transform.max_abs_diff(&truth) < 1e-6, "{:?}", r);
        assert!((r.fitness - 1.0).abs() < 1e-12 && r.rmse < 1e-9);
    }
}

#[test]
fn icp_reports_zero_fitness_for_distant_clouds() {
    let mut rng = common::rng(32);
    let src = common::points(&mut rng, 100, 1.0);
    let tgt: Vec<_> = src.iter().map(|p| p + Vector3::new(10.0, 0.0, 0.0)).collect();
    let r = icp_refine(&Sim3::identity(), &src, &tgt, &IcpParams::default());
    assert_eq!(r.fitness, 0.0);
    assert_eq!(r.transform, Sim3::identity());
}

fn naive_matches(src: &SubmapSummary, tgt: &SubmapSummary, p: &MatchParams) -> Vec<(usize, usize)> {
    let zero = |d: &[f32]| d.iter().all(|x| *x == 0.0);
    let cos = |a: &[f32], b: &[f32]| -> f64 { a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum() };
    let sim = |i: usize, j: usize| {
        let (a, b) = (&src.salient[i].descriptor, &tgt.salient[j].descriptor);
        if zero(a) || zero(b) {
            None
        } else {
            Some(cos(a, b))
        }
    };
    let argmax = |vals: Vec<(usize, f64)>| {
        vals.into_iter()
            .fold(None, |best: Option<(usize, f64)>, (k, v)| match best {
                Some((_, bv)) if v <= bv => best,
                _ => Some((k, v)),
            })
    };
    let (ns, nt) = (src.salient.len(), tgt.salient.len());
    let mut out = Vec::new();
    for i in 0..ns {
        let row: Vec<(usize, f64)> = (0..nt).filter_map(|j| sim(i, j).map(|v| (j, v))).collect();
        let Some((j, best)) = argmax(row.clone()) else { continue };
        let col: Vec<(usize, f64)> = (0..ns).filter_map(|k| sim(k, j).map(|v| (k, v))).collect();
        if argmax(col).map(|c| c.0) != Some(i) || best < p.min_similarity {
            continue;
        }
        let second = row.iter().enumerate().filter(|(k, _)| row[*k].0 != j).map(|(_, v)| v.1).fold(f64::NEG_INFINITY, f64::max);
        if second.is_finite() {
            let dist = |c: f64| (2.0 - 2.0 * c).max(0.0).sqrt();
            let ratio_ok = dist(second) > 0.0 && dist(best) / dist(second) <= p.max_ratio;
            if !ratio_ok || best - second < p.min_margin {
                continue;
            }
        }
        out.push((i, j));
    }
    out
}

#[test]
fn matching_equals_mutual_nearest_neighbor_oracle() {
    let mut rng = common::rng(33);
    let params = MatchParams::default();
    for _ in 0..50 {
        let src = common::summary(&mut rng, SubmapId::new(0, 0));
        let mut tgt = common::summary(&mut rng, SubmapId::new(1, 0));
        tgt.salient = src.salient.clone();
        tgt.salient.shuffle(&mut rng);
        let noise = rng.random_range(0.0..0.6f32);
        for s in &mut tgt.salient {
            for x in s.descriptor.iter_mut() {
                *x += noise * rng.random_range(-1.0..1.0f32);
            }
            let n = s.descriptor.iter().map(|x| x * x).sum::<f32>().sqrt();
            s.descriptor.iter_mut().for_each(|x| *x /= n);
        }
        let got: Vec<(usize, usize)> = match_summaries(&src, &tgt, &params)
            .iter()
            .map(|c| {
                let j = tgt.salient.iter().position(|s| s.position == c.target).unwrap();
                (c.index, j)
            })
            .collect();
        assert_eq!(got, naive_matches(&src, &tgt, &params));
    }
}

#[test]
fn scale_outside_band_is_named() {
    let mut e = GateInputs {
        scale: 5.0,
        inliers: 100,
        overlap_ratio: 1.0,
        inlier_rmse: 0.0,
        fitness: 1.0,
        icp_rmse: 0.0,
        extent_ratio: 1.0,
    };
    let th = VerificationThresholds::default();
    let r = verify(&e, &th);
    assert!(!r.accepted);
    assert_eq!(r.failed_gates(), ["scale_band"]);
    e.scale = 1.0;
    e.extent_ratio = 0.05;
    assert_eq!(verify(&e, &th).failed_gates(), ["extent_ratio"]);
}

#[test]
fn scenario_pairs_verify_as_scripted() {
    let params = RegistrationParams::default();
    let dense = PatchNccMatcher::default();
    let pair = generate_scenario(&ScenarioConfig {
        n_agents: 2,
        plan: OverlapPlan::Pair,
        submaps_per_agent: 2,
        scale_errors: vec![1.0, 1.3],
        seed: 7,
        ..Default::default()
    });
    let summary = |sc: &mags_core::simworld::Scenario, a: u32, i: u32| {
        sc.submap(SubmapId::new(a, i)).unwrap().summary.clone()
    };
    let out = register_pair(&summary(&pair, 1, 1), &summary(&pair, 0, 0), &params, &dense);
    assert!(out.report.accepted, "{:?}", out.report);
    let truth = pair
        .ground_truth
        .local_to_world(SubmapId::new(0, 0))
        .unwrap()
        .inverse()
        .compose(&pair.ground_truth.local_to_world(SubmapId::new(1, 1)).unwrap());
    let est = out.accepted_transform().unwrap();
    assert!((est.scale() / truth.scale() - 1.0).abs() < 0.02, "{} vs {}", est.scale(), truth.scale());

    let disjoint = generate_scenario(&ScenarioConfig {
        n_agents: 2,
        plan: OverlapPlan::Disjoint,
        submaps_per_agent: 4,
        scale_errors: vec![1.0, 0.8],
        seed: 11,
        ..Default::default()
    });
    for i in 0..4 {
        for j in 0..4 {
            let out = register_pair(&summary(&disjoint, 1, i), &summary(&disjoint, 0, j), &params, &dense);
            assert!(!out.report.accepted, "{:?}", out.report);
        }
    }
}
