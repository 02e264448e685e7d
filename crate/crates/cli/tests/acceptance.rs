//! Acceptance suite. Runs the six criteria in order and prints one pass/fail
//! line for each; exits nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::{box_vertices, escapes, in_projection, min_slack, random_spec, scalar_spec, toy_spec};
use delayinv::invariance::is_invariant;
use delayinv::lane_keeping::LaneKeepingParams;
use delayinv::{
    augment, augmented_safe_set, compute, deepest_start, max_invariant_set, simulate, Controller, DelaySystemSpec,
    DisturbanceSignal, FixedPointOptions, HPolytope, MappedSet, ReducedInvariantResult, ReductionOptions,
    ResultBundle, SimulationConfig,
};
use delayinv_cli::{cmd_compute, cmd_direct, ComputeArgs, DirectArgs, DirectBundle};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NONEMPTY_ROWS: [(usize, usize); 5] = [(1, 0), (5, 1), (10, 6), (15, 11), (20, 16)];
const EMPTY_ROWS: [(usize, usize); 4] = [(5, 0), (10, 5), (15, 10), (20, 15)];

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn workdir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Reduced and direct sets agree through the command functions.
fn equivalence() -> Outcome {
    let dir = workdir("equivalence");
    let mut specs = vec![("toy".to_string(), toy_spec(1, 0))];
    for seed in 0..20u64 {
        specs.push((format!("random {seed}"), random_spec(seed, 1 + seed as usize % 2, 0)));
    }
    let unstable = specs.iter().filter(|(_, s)| spectral_radius(&s.base.a) > 1.0).count();
    let (mut compared, mut skipped, mut mismatched) = (0, 0, Vec::new());
    for (name, spec) in &specs {
        let spec_path = dir.join("spec.json");
        let (bundle_path, direct_path) = (dir.join("reduced.json"), dir.join("direct.json"));
        spec.save(&spec_path).unwrap();
        cmd_compute(&ComputeArgs {
            spec: spec_path.clone(),
            out: Some(bundle_path.clone()),
            max_iter: 500,
            tol: 1e-6,
            no_canonical: false,
        })
        .unwrap();
        cmd_direct(&DirectArgs {
            spec: spec_path,
            out: Some(direct_path.clone()),
        })
        .unwrap();
        let reduced = read::<ResultBundle>(&bundle_path).into_result(spec).unwrap();
        let direct: DirectBundle = read(&direct_path);
        if reduced.converged && direct.converged {
            compared += 1;
            if !reduced.c_ext.equal(&direct.set, 1e-5).unwrap() {
                mismatched.push(name.clone());
            }
        } else {
            skipped += 1;
        }
    }
    outcome(
        mismatched.is_empty() && compared > 0,
        format!(
            "{compared} of {} systems compared ({unstable} open-loop unstable), {skipped} not converged, mismatches {mismatched:?}",
            specs.len()
        ),
    )
}

/// Emptiness of the toy system over the benchmark delays.
fn emptiness_pattern() -> Outcome {
    let mut wrong = Vec::new();
    let expected = NONEMPTY_ROWS.iter().map(|&r| (r, false)).chain(EMPTY_ROWS.iter().map(|&r| (r, true)));
    for ((tau, p), want_empty) in expected {
        let r = compute(&toy_spec(tau, p), &ReductionOptions::default()).unwrap();
        if !r.converged || r.is_empty().unwrap() != want_empty {
            wrong.push((tau, p));
        }
    }
    outcome(
        wrong.is_empty(),
        format!("nonempty at {NONEMPTY_ROWS:?}, empty at {EMPTY_ROWS:?}; mismatched rows {wrong:?}"),
    )
}

/// Minimum over `reps` runs of the total time and of the canonicalization phase.
fn reduced_time(spec: &DelaySystemSpec, canonicalize: Option<bool>, reps: usize) -> (f64, f64) {
    let opts = ReductionOptions {
        canonicalize,
        ..Default::default()
    };
    (0..reps)
        .map(|_| {
            let t = compute(spec, &opts).unwrap().timings;
            (t.total(), t.canonicalization_s)
        })
        .fold((f64::INFINITY, f64::INFINITY), |a, b| (a.0.min(b.0), a.1.min(b.1)))
}

fn direct_time(spec: &DelaySystemSpec, reps: usize) -> f64 {
    (0..reps)
        .map(|_| {
            let start = Instant::now();
            let r = max_invariant_set(&augment(spec), &augmented_safe_set(spec), &FixedPointOptions::default()).unwrap();
            assert!(r.converged);
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Growth of the reduced method with the delay, and its lead over the direct one.
fn scaling() -> Outcome {
    let small = toy_spec(1, 0);
    let large = toy_spec(20, 16);
    let mid = toy_spec(10, 6);
    let (t_small, _) = reduced_time(&small, Some(false), 25);
    let (t_large, _) = reduced_time(&large, Some(false), 25);
    let (t_large_canon, canon_large) = reduced_time(&large, None, 5);
    let (t_mid_canon, _) = reduced_time(&mid, None, 10);
    let t_direct = direct_time(&mid, 3);
    let growth = t_large / t_small;
    let lead = t_direct / t_mid_canon;
    outcome(
        growth < 20.0 && lead > 10.0,
        format!(
            "reduced (20,16)/(1,0) = {growth:.1} (< 20; {:.0}us / {:.0}us without canonicalization); \
             canonicalizing (20,16) adds {:.1} ms (total {:.1} ms); \
             direct/reduced at (10,6) = {lead:.0} (> 10; {:.1} ms vs {:.2} ms, reduced including canonicalization)",
            t_large * 1e6,
            t_small * 1e6,
            canon_large * 1e3,
            t_large_canon * 1e3,
            t_direct * 1e3,
            t_mid_canon * 1e3,
        ),
    )
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rows: Vec<Vec<f64>> = (0..extra).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut offsets: Vec<f64> = (0..extra).map(|_| rng.gen_range(0.2..2.0)).collect();
    let r = rng.gen_range(1.0..3.0);
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            rows.push(e);
            offsets.push(r);
        }
    }
    (rows, offsets)
}

fn sample_points(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..n).map(|_| rng.gen_range(-3.5..3.5)).collect()).collect()
}

/// Pontryagin difference against the vertex-sum oracle; returns failures.
fn pontryagin_oracle(instances: u64) -> usize {
    (0..instances)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=2);
            let (rows, offsets) = random_rows(&mut rng, n, 3);
            let x = HPolytope::from_rows(n, rows.clone(), offsets.clone()).unwrap();
            let w = rng.gen_range(0.01..0.4);
            let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let diff = x
                .pontryagin_diff_mapped(&[MappedSet::new(m.clone(), HPolytope::symmetric_box(&vec![w; n]).unwrap())])
                .unwrap();
            let shifts: Vec<DVector<f64>> = box_vertices(&vec![-w; n], &vec![w; n])
                .iter()
                .map(|v| &m * DVector::from_column_slice(v))
                .collect();
            sample_points(&mut rng, n, 60).iter().any(|pt| {
                let worst = shifts
                    .iter()
                    .map(|s| {
                        let y: Vec<f64> = pt.iter().zip(s.iter()).map(|(a, b)| a + b).collect();
                        min_slack(&rows, &offsets, &y)
                    })
                    .fold(f64::INFINITY, f64::min);
                worst.abs() >= 1e-7 && diff.contains_point(pt, 0.0) != (worst > 0.0)
            })
        })
        .count()
}

/// Fourier–Motzkin elimination against the exact projection oracle; returns failures.
fn elimination_oracle(instances: u64) -> usize {
    (0..instances)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let d = rng.gen_range(2..=4);
            let k = rng.gen_range(1..=2).min(d - 1);
            let n = d - k;
            let (rows, offsets) = random_rows(&mut rng, d, 5);
            let drop: Vec<usize> = (n..d).collect();
            let proj = HPolytope::from_rows(d, rows.clone(), offsets.clone())
                .unwrap()
                .eliminate(&drop)
                .unwrap();
            sample_points(&mut rng, n, 60).iter().any(|x| {
                let near = in_projection(&rows, &offsets, x, 1e-5) != in_projection(&rows, &offsets, x, -1e-5)
                    || proj.contains_point(x, 1e-6) != proj.contains_point(x, -1e-6);
                !near && proj.contains_point(x, 0.0) != in_projection(&rows, &offsets, x, 1e-9)
            })
        })
        .count()
}

/// Invariance of every converged set, monotone descent, and the polytope oracles.
fn invariance_suite() -> Outcome {
    let (mut checked, mut failures) = (0, Vec::new());
    let opts = FixedPointOptions {
        max_iter: 200,
        keep_iterates: true,
        ..Default::default()
    };
    let mut cases: Vec<(String, DelaySystemSpec)> = Vec::new();
    for seed in 0..30u64 {
        let tau = seed as usize % 3;
        let p = (seed as usize / 3) % (tau + 1);
        cases.push((format!("random {seed} ({tau},{p})"), random_spec(seed, tau, p)));
    }
    for (tau, p) in [(0, 0), (1, 0), (5, 1), (10, 6)] {
        cases.push((format!("toy ({tau},{p})"), toy_spec(tau, p)));
    }
    for (name, spec) in &cases {
        let aug = augment(spec);
        let safe = augmented_safe_set(spec);
        let direct = max_invariant_set(&aug, &safe, &opts).unwrap();
        if direct.iterates.windows(2).any(|w| !w[0].contains_set(&w[1], 1e-7).unwrap()) {
            failures.push(format!("{name}: direct iterates not descending"));
        }
        if direct.converged {
            checked += 1;
            if !is_invariant(&aug, &direct.set, &safe).unwrap() {
                failures.push(format!("{name}: direct set not invariant"));
            }
        }
        let r = compute(spec, &ReductionOptions::default()).unwrap();
        if r.converged {
            checked += 2;
            if !is_invariant(&r.aux_system, &r.c_hat, &r.shrunk_safe_set).unwrap() {
                failures.push(format!("{name}: core not invariant"));
            }
            if !is_invariant(&aug, &r.c_ext, &safe).unwrap() {
                failures.push(format!("{name}: assembled set not invariant"));
            }
        }
        // Descent of the auxiliary iteration.
        let aux_opts = FixedPointOptions {
            max_iter: 200,
            keep_iterates: true,
            ..Default::default()
        };
        let aux = max_invariant_set(&r.aux_system, &r.shrunk_safe_set, &aux_opts).unwrap();
        if aux.iterates.windows(2).any(|w| !w[0].contains_set(&w[1], 1e-7).unwrap()) {
            failures.push(format!("{name}: auxiliary iterates not descending"));
        }
    }
    let pontryagin = pontryagin_oracle(200);
    let elimination = elimination_oracle(200);
    outcome(
        failures.is_empty() && pontryagin == 0 && elimination == 0,
        format!(
            "{checked} converged sets invariant over {} systems, descent held; \
             Pontryagin oracle {}/200, elimination oracle {}/200; failures {failures:?}",
            cases.len(),
            200 - pontryagin,
            200 - elimination,
        ),
    )
}

/// Gridded points of `X \ C_max` for a scalar delay-free system, and how many
/// of them the game tree drives out within `iterations + 1` steps.
fn outside_points_escape(a: f64, b: f64, f: f64, u: f64, d: f64, x: f64) -> (usize, usize, usize) {
    let spec = scalar_spec(a, b, f, u, d, x, 0, 0);
    let r = max_invariant_set(&spec.base, &spec.safe_set, &FixedPointOptions::default()).unwrap();
    assert!(r.converged);
    let depth = r.iterations + 1;
    let steps = (2.0 * x / 0.01).round() as usize;
    let outside: Vec<f64> = (0..=steps)
        .map(|i| -x + 0.01 * i as f64)
        .filter(|s| !r.set.contains_point(&[*s], 1e-9))
        .collect();
    let escaped = outside.iter().filter(|&&s| escapes(a, b, f, u, d, x, s, depth, 11)).count();
    (outside.len(), escaped, r.iterations)
}

fn game_tree_maximality() -> Outcome {
    let (toy_out, toy_esc, toy_iter) = outside_points_escape(1.5, 1.0, 1.0, 20.0, 2.0, 32.0);
    // A system whose maximal set is empty, so every grid point must escape.
    let (sup_out, sup_esc, sup_iter) = outside_points_escape(2.0, 1.0, 1.0, 1.0, 1.5, 4.0);
    outcome(
        toy_out == toy_esc && sup_out == sup_esc && sup_out > 0,
        format!(
            "toy: {toy_esc}/{toy_out} grid points outside escape within {} steps (the maximal set is all of X); \
             supplementary system: {sup_esc}/{sup_out} escape within {} steps",
            toy_iter + 1,
            sup_iter + 1,
        ),
    )
}

fn supervised_run(
    spec: &DelaySystemSpec,
    r: &ReducedInvariantResult,
    seed: u64,
    controller: Controller,
) -> Option<delayinv::SimTrace> {
    let signals = vec![DisturbanceSignal::UniformRandom { seed }; spec.base.channels.len()];
    let z0 = deepest_start(spec, r, &signals).unwrap()?;
    let cfg = SimulationConfig {
        controller,
        signals,
        z0,
        steps: 200,
        supervised: true,
    };
    Some(simulate(spec, r, &cfg).unwrap())
}

fn supervised_safety() -> Outcome {
    let mut traces = Vec::new();
    for (tau, p) in NONEMPTY_ROWS {
        let spec = toy_spec(tau, p);
        let r = compute(&spec, &ReductionOptions::default()).unwrap();
        for seed in 0..3 {
            traces.push(supervised_run(&spec, &r, seed, Controller::Zero).expect("nonempty row has a start state"));
        }
    }
    let table_runs = traces.len();
    // Lane-keeping demo: a nonempty set at the given parameters must yield safe runs.
    let mut demo_nonempty = 0;
    for (speed, tau, p) in [(15.0, 1, 1), (20.0, 2, 1), (30.0, 2, 2)] {
        let spec = LaneKeepingParams {
            speed,
            tau,
            preview: p,
            ..Default::default()
        }
        .to_spec()
        .unwrap();
        let r = compute(&spec, &ReductionOptions::default()).unwrap();
        if !r.maximal || r.is_empty().unwrap() {
            continue;
        }
        demo_nonempty += 1;
        let k = DMatrix::from_fn(1, spec.augmented_dim(), |_, j| if j < 4 { -2.0 } else { 0.0 });
        traces.extend(supervised_run(&spec, &r, 11, Controller::Gain(k)));
    }
    let runs = traces.len();
    let unsafe_runs = traces.iter().filter(|t| !t.start_inside || !t.all_safe()).count();
    let empty_sets = traces.iter().filter(|t| t.any_admissible_empty()).count();
    outcome(
        unsafe_runs == 0 && empty_sets == 0 && table_runs == 3 * NONEMPTY_ROWS.len(),
        format!(
            "{runs} runs of 200 steps ({table_runs} on benchmark rows, {} lane-keeping with {demo_nonempty} nonempty sets): \
             {unsafe_runs} with safety violations, {empty_sets} with an empty admissible set",
            runs - table_runs,
        ),
    )
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("reduced and direct sets coincide", equivalence),
        ("emptiness pattern over delay and preview", emptiness_pattern),
        ("computation time scaling", scaling),
        ("invariance, descent and polytope oracles", invariance_suite),
        ("states outside the maximal set are driven out", game_tree_maximality),
        ("supervised simulation stays safe", supervised_safety),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!result.pass);
        println!(
            "criterion {}: {} - {name} [{:.1}s]: {}",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("acceptance: all {} criteria passed", criteria.len());
}
