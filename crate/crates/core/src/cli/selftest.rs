use rayon::prelude::*;

use super::CliError;
use crate::benchgen::{generate, GenParams, TaskKind};
use crate::grpo::{clipped_term, group_advantages, grpo_objective, GrpoConfig, RolloutGroup};
use crate::metrics::{collision_score, iou3d, iou_reward, DEFAULT_COLLISION_EPS};
use crate::rewards::{canonical_trace, format_score, parse_trace};
use crate::rng::Rng;
use crate::scene_graph::{Aabb, Node, SceneGraph, Vec3};
use crate::solvers::{solve_instance, verify};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub module: &'static str,
    pub property: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(module: &'static str, property: &'static str, failures: Vec<String>) -> SuiteOutcome {
    SuiteOutcome {
        module,
        property,
        passed: failures.is_empty(),
        detail: failures.into_iter().take(5).collect::<Vec<_>>().join("; "),
    }
}

/// Random pair from one of five overlap regimes.
fn box_pair(rng: &mut Rng, regime: usize) -> (Aabb, Aabb) {
    let mut dim = || Vec3::new(rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0));
    let a_dim = dim();
    let b_dim = dim();
    let a = Aabb::from_center(Vec3::ZERO, a_dim);
    let offset = match regime {
        0 => Vec3::new(5.0, 0.0, 0.0),
        1 => Vec3::new(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)),
        2 => Vec3::ZERO,
        3 => Vec3::new((a_dim.x + b_dim.x) / 2.0, 0.0, 0.0),
        _ => Vec3::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0),
    };
    let b_dim = if regime == 2 {
        a_dim.scale(rng.uniform(0.3, 0.9))
    } else {
        b_dim
    };
    (a, Aabb::from_center(offset, b_dim))
}

/// Monte-Carlo IoU over the joint bounding box.
fn monte_carlo_iou(rng: &mut Rng, a: &Aabb, b: &Aabb, samples: usize) -> f64 {
    let lo = a.min.min(b.min);
    let hi = a.max.max(b.max);
    let inside = |bx: &Aabb, p: Vec3| (0..3).all(|k| p.get(k) >= bx.min.get(k) && p.get(k) <= bx.max.get(k));
    let (mut both, mut either) = (0usize, 0usize);
    for _ in 0..samples {
        let p = Vec3::new(
            rng.uniform(lo.x, hi.x),
            rng.uniform(lo.y, hi.y),
            rng.uniform(lo.z, hi.z),
        );
        let (ia, ib) = (inside(a, p), inside(b, p));
        both += usize::from(ia && ib);
        either += usize::from(ia || ib);
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

type IouFn = dyn Fn(&Aabb, &Aabb) -> f64 + Sync;

fn iou_suites(iou: &IouFn, seed: u64) -> Vec<SuiteOutcome> {
    let failures: Vec<String> = (0..200u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = Rng::seed_from_u64(crate::rng::derive_seed(seed, i));
            let (a, b) = box_pair(&mut rng, (i % 5) as usize);
            let got = iou(&a, &b);
            let want = monte_carlo_iou(&mut rng, &a, &b, 100_000);
            ((got - want).abs() > 0.01).then(|| format!("pair {i}: {got:.4} vs sampled {want:.4}"))
        })
        .collect();
    let mut identity = Vec::new();
    let mut rng = Rng::seed_from_u64(seed);
    for i in 0..200 {
        let (a, b) = box_pair(&mut rng, i % 5);
        if iou(&a, &b) != iou(&b, &a) {
            identity.push(format!("pair {i} is not symmetric"));
        }
        if iou(&a, &a) != 1.0 {
            identity.push(format!("box {i} has self IoU {}", iou(&a, &a)));
        }
    }
    vec![
        outcome("metrics", "iou_matches_monte_carlo", failures),
        outcome("metrics", "iou_symmetry_and_identity", identity),
    ]
}

fn collision_suite() -> SuiteOutcome {
    let cube = |id, x: f64| Node::object(id, Vec3::new(x, 0.0, 0.5), Vec3::new(1.0, 1.0, 1.0));
    let cases = [
        (vec![cube(0, 0.0), cube(1, 2.0), cube(2, 4.0)], 1.0),
        (vec![cube(0, 0.0), cube(1, 0.5), cube(2, 4.0)], 1.0 - 1.0 / 3.0),
        (vec![cube(0, 0.0), cube(1, 0.3), cube(2, 0.6)], 0.0),
    ];
    let mut failures = Vec::new();
    for (nodes, want) in cases {
        let g = SceneGraph::from_nodes(nodes).expect("distinct ids");
        let got = collision_score(&g, DEFAULT_COLLISION_EPS);
        if (got - want).abs() > 1e-9 {
            failures.push(format!("expected {want}, got {got}"));
        }
    }
    outcome("metrics", "collision_score_examples", failures)
}

fn format_suite() -> SuiteOutcome {
    let g = SceneGraph::from_nodes([Node::object(0, Vec3::new(0.0, 0.0, 0.5), Vec3::new(1.0, 1.0, 1.0))])
        .expect("one node");
    let canonical = canonical_trace(&g);
    let untagged = canonical.replace("<think>", "").replace("</think>", "");
    let mut failures = Vec::new();
    for (name, text, want) in [
        ("canonical", canonical.as_str(), 1.0),
        ("untagged", untagged.as_str(), 0.3),
        ("empty", "", 0.0),
    ] {
        let got = format_score(&parse_trace(text));
        if (got - want).abs() > 1e-12 {
            failures.push(format!("{name}: expected {want}, got {got}"));
        }
    }
    outcome("rewards", "format_rubric", failures)
}

fn grpo_suites(seed: u64) -> Vec<SuiteOutcome> {
    let mut out = Vec::new();
    let adv = group_advantages(&[1.0, 2.0, 3.0], 1e-8);
    let want = [-1.224745, 0.0, 1.224745];
    let bad: Vec<String> = adv
        .iter()
        .zip(want)
        .filter(|(a, w)| (*a - w).abs() > 1e-6)
        .map(|(a, w)| format!("{a} vs {w}"))
        .collect();
    out.push(outcome("grpo", "advantages_of_1_2_3", bad));
    let zeros = group_advantages(&[0.7; 5], 1e-8);
    out.push(outcome(
        "grpo",
        "equal_rewards_give_zero",
        if zeros.iter().all(|&a| a == 0.0) {
            vec![]
        } else {
            vec![format!("{zeros:?}")]
        },
    ));
    let t = clipped_term(2.0, 1.0, 0.2);
    out.push(outcome(
        "grpo",
        "clip_binds_at_upper_bound",
        if (t - 1.2).abs() < 1e-12 {
            vec![]
        } else {
            vec![format!("term {t}")]
        },
    ));

    let mut rng = Rng::seed_from_u64(seed ^ 0x9e37);
    let mut shift = Vec::new();
    for trial in 0..200 {
        let g = 2 + rng.index(7);
        let rewards: Vec<f64> = (0..g).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let mut lp = || -> Vec<Vec<f64>> {
            (0..g)
                .map(|i| (0..1 + i % 4).map(|_| rng.uniform(-3.0, -0.1)).collect())
                .collect()
        };
        let (new, old, reference) = (lp(), lp(), lp());
        let group = RolloutGroup::new(rewards.clone(), new, old, reference).expect("well-formed group");
        let c = rng.uniform(-5.0, 5.0);
        let shifted = group
            .with_rewards(rewards.iter().map(|r| r + c).collect())
            .expect("same shape");
        let cfg = GrpoConfig::default();
        let (a, b) = (
            grpo_objective(&group, &cfg).objective,
            grpo_objective(&shifted, &cfg).objective,
        );
        if (a - b).abs() > 1e-12 {
            shift.push(format!("trial {trial}: {a} vs {b}"));
        }
    }
    out.push(outcome("grpo", "reward_shift_invariance", shift));
    out
}

fn closure_suite(task: TaskKind, seed: u64, count: usize) -> SuiteOutcome {
    let property = match task {
        TaskKind::Sorting => "closure_sorting",
        TaskKind::Alignment => "closure_alignment",
        TaskKind::Roomedit => "closure_roomedit",
    };
    let instances = match generate(task, count, seed, &GenParams::default()) {
        Ok(v) => v,
        Err(e) => return outcome("solvers", property, vec![format!("generation failed: {e}")]),
    };
    let failures: Vec<String> = instances
        .par_iter()
        .filter_map(|inst| {
            let r = match solve_instance(inst, false) {
                Ok(r) => r,
                Err(e) => return Some(format!("{}: {e}", inst.id)),
            };
            let g = r.graph.canonicalized();
            let iou = iou_reward(&g, &inst.target_graph);
            let coll = collision_score(&g, DEFAULT_COLLISION_EPS);
            let report = verify(inst, &g);
            if iou < 0.999 || coll != 1.0 || !report.passed() {
                let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
                Some(format!(
                    "{}: iou {iou:.4}, coll {coll}, failed checks {failed:?}",
                    inst.id
                ))
            } else {
                None
            }
        })
        .collect();
    outcome("solvers", property, failures)
}

/// Runs every suite, scoring boxes with `iou`.
pub fn run_suites(iou: &IouFn, seed: u64, instances: usize) -> Vec<SuiteOutcome> {
    let mut out = iou_suites(iou, seed);
    out.push(collision_suite());
    out.push(format_suite());
    out.extend(grpo_suites(seed));
    for task in TaskKind::ALL {
        out.push(closure_suite(task, seed, instances));
    }
    out
}

pub fn cmd_selftest(seed: u64, instances: usize) -> Result<(), CliError> {
    let iou = |a: &Aabb, b: &Aabb| iou3d(a, b).unwrap_or(0.0);
    let results = run_suites(&iou, seed, instances);
    for r in &results {
        if r.passed {
            println!("PASS {}/{}", r.module, r.property);
        } else {
            println!("FAIL {}/{}: {}", r.module, r.property, r.detail);
        }
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Internal(format!(
            "{failed} of {} suites failed",
            results.len()
        )));
    }
    println!("all {} suites passed", results.len());
    Ok(())
}
