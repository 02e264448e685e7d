//! The six subcommands. Each returns a JSON summary for stdout.

use std::path::Path;
use std::time::Instant;

use delayinv::export::{csv_num, write_trace_csv};
use delayinv::invariance::is_invariant;
use delayinv::polytope::CONTAINMENT_TOL;
use delayinv::reduction::PhaseTimings;
use delayinv::{
    augment, augmented_safe_set, compute, deepest_start, make_gain, max_invariant_set, simulate, AugmentedState,
    Controller, DelaySystemSpec, DisturbanceSignal, FixedPointOptions, HPolytope, ReducedInvariantResult,
    ReductionOptions, ResultBundle, SimulationConfig,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::io::{inline_or_file, parse_fix, parse_list, read_json, read_spec, write_bytes, write_json};
use crate::{BenchArgs, CheckArgs, CliError, CliResult, ComputeArgs, DirectArgs, Method, SimulateArgs, SliceArgs};

/// Sets with augmented dimension up to this are re-derived directly by `check`.
pub const DIRECT_CHECK_DIM: usize = 6;
/// Tolerance of the set-equality spot check.
pub const EQUALITY_TOL: f64 = 1e-5;
/// Boundary samples per slice for one, two and more free coordinates.
const CLOUD_2D: usize = 720;
const CLOUD_ND: usize = 4000;

/// Output of `direct`: the fixed point of the full augmented system.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirectBundle {
    pub spec_hash: String,
    pub tau: usize,
    pub preview: usize,
    pub augmented_dim: usize,
    pub converged: bool,
    pub iterations: usize,
    pub empty: bool,
    pub set: HPolytope,
}

fn timings_json(t: &PhaseTimings) -> Value {
    json!({
        "aux_fixed_point": t.aux_fixed_point_s,
        "constraint_assembly": t.constraint_assembly_s,
        "canonicalization": t.canonicalization_s,
        "total": t.total(),
    })
}

fn status(empty: bool) -> &'static str {
    if empty {
        "empty"
    } else {
        "nonempty"
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish_csv(w: csv::Writer<Vec<u8>>, path: &Path) -> CliResult<()> {
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    write_bytes(path, &bytes)
}

fn csv_row(w: &mut csv::Writer<Vec<u8>>, fields: &[String]) -> CliResult<()> {
    w.write_record(fields).map_err(|e| CliError::Internal(e.to_string()))
}

pub fn cmd_compute(args: &ComputeArgs) -> CliResult<Value> {
    if !(args.tol.is_finite() && args.tol > 0.0) {
        return Err(CliError::Input(format!("--tol must be positive, got {}", args.tol)));
    }
    let spec = read_spec(&args.spec)?;
    let opts = ReductionOptions {
        fixed_point: FixedPointOptions {
            max_iter: args.max_iter,
            tol: args.tol,
            keep_iterates: false,
        },
        canonicalize: args.no_canonical.then_some(false),
    };
    let r = compute(&spec, &opts)?;
    let mut bundle = ResultBundle::from_result(&spec, &r)?;
    // Timings go to stdout only, so bundles are reproducible byte for byte.
    bundle.timings = None;
    if let Some(out) = &args.out {
        write_json(out, &bundle)?;
    }
    Ok(json!({
        "command": "compute",
        "tau": spec.tau,
        "preview": spec.preview,
        "augmented_dim": spec.augmented_dim(),
        "status": status(bundle.flags.empty),
        "empty": bundle.flags.empty,
        "converged": r.converged,
        "maximal": r.maximal,
        "canonical": r.canonical,
        "iterations": r.iterations,
        "constraints": r.c_ext.len(),
        "timings_s": timings_json(&r.timings),
    }))
}

pub fn cmd_direct(args: &DirectArgs) -> CliResult<Value> {
    let spec = read_spec(&args.spec)?;
    let start = Instant::now();
    let r = max_invariant_set(&augment(&spec), &augmented_safe_set(&spec), &FixedPointOptions::default())?;
    let elapsed = start.elapsed().as_secs_f64();
    let bundle = DirectBundle {
        spec_hash: spec.hash()?,
        tau: spec.tau,
        preview: spec.preview,
        augmented_dim: spec.augmented_dim(),
        converged: r.converged,
        iterations: r.iterations,
        empty: r.set.is_empty()?,
        set: r.set,
    };
    if let Some(out) = &args.out {
        write_json(out, &bundle)?;
    }
    Ok(json!({
        "command": "direct",
        "tau": spec.tau,
        "preview": spec.preview,
        "augmented_dim": spec.augmented_dim(),
        "status": status(bundle.empty),
        "empty": bundle.empty,
        "converged": bundle.converged,
        "iterations": bundle.iterations,
        "constraints": bundle.set.len(),
        "time_s": elapsed,
    }))
}

fn load_result(bundle_path: &Path, spec: &DelaySystemSpec) -> CliResult<ReducedInvariantResult> {
    let bundle: ResultBundle = read_json(bundle_path)?;
    bundle
        .into_result(spec)
        .map_err(|e| CliError::Input(format!("{}: {e}", bundle_path.display())))
}

pub fn cmd_check(args: &CheckArgs) -> CliResult<Value> {
    let spec = read_spec(&args.spec)?;
    let r = load_result(&args.bundle, &spec)?;
    let aug = augment(&spec);
    let safe = augmented_safe_set(&spec);
    let mut checks: Vec<(&str, bool)> = vec![
        ("inside_safe_set", safe.contains_set(&r.c_ext, CONTAINMENT_TOL)?),
        ("core_inside_shrunk_safe_set", r.shrunk_safe_set.contains_set(&r.c_hat, CONTAINMENT_TOL)?),
    ];
    if r.converged {
        checks.push(("core_invariant", is_invariant(&r.aux_system, &r.c_hat, &r.shrunk_safe_set)?));
        checks.push(("invariant", is_invariant(&aug, &r.c_ext, &safe)?));
    }
    let mut direct_compared = false;
    if r.maximal && spec.augmented_dim() <= DIRECT_CHECK_DIM {
        let direct = max_invariant_set(&aug, &safe, &FixedPointOptions::default())?;
        if direct.converged {
            direct_compared = true;
            checks.push(("equals_direct", r.c_ext.equal(&direct.set, EQUALITY_TOL)?));
        }
    }
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(name, _)| *name).collect();
    if !failed.is_empty() {
        return Err(CliError::Verification(format!("checks failed: {}", failed.join(", "))));
    }
    Ok(json!({
        "command": "check",
        "passed": true,
        "converged": r.converged,
        "maximal": r.maximal,
        "empty": r.c_ext.is_empty()?,
        "direct_compared": direct_compared,
        "checks": checks.iter().map(|(name, _)| *name).collect::<Vec<_>>(),
    }))
}

/// Deterministic unit directions in `k` dimensions.
fn directions(k: usize) -> Vec<Vec<f64>> {
    match k {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..CLOUD_2D)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / CLOUD_2D as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut out = Vec::with_capacity(CLOUD_ND);
            while out.len() < CLOUD_ND {
                let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-3 && norm <= 1.0 {
                    out.push(v.iter().map(|x| x / norm).collect());
                }
            }
            out
        }
    }
}

/// Boundary points hit by rays from `center`.
fn boundary_cloud(p: &HPolytope, center: &[f64]) -> Vec<Vec<f64>> {
    let sys = p.system();
    directions(p.dim())
        .into_iter()
        .filter_map(|v| {
            let t = sys
                .rows()
                .filter_map(|(a, b)| {
                    let av: f64 = a.iter().zip(&v).map(|(x, y)| x * y).sum();
                    let ac: f64 = a.iter().zip(center).map(|(x, y)| x * y).sum();
                    (av > 1e-12).then(|| ((b - ac) / av).max(0.0))
                })
                .fold(f64::INFINITY, f64::min);
            t.is_finite()
                .then(|| center.iter().zip(&v).map(|(c, d)| c + t * d).collect())
        })
        .collect()
}

pub fn cmd_slice(args: &SliceArgs) -> CliResult<Value> {
    let bundle: ResultBundle = read_json(&args.bundle)?;
    let dim = bundle.augmented_dim;
    if bundle.constraint_family.iter().any(|c| c.dim() != dim) {
        return Err(CliError::Input("bundle constraint dimension mismatch".into()));
    }
    let fixed = parse_fix(&args.fix)?;
    if let Some(&bad) = fixed.keys().find(|&&i| i >= dim) {
        return Err(CliError::Input(format!(
            "--fix: coordinate {bad} out of range for augmented dimension {dim}"
        )));
    }
    let c_ext = match bundle.c_ext {
        Some(c) => c,
        None => HPolytope::intersect_all(dim, &bundle.constraint_family)?,
    };
    let sliced = c_ext.slice(&fixed)?.remove_redundancy()?;
    let free: Vec<usize> = (0..dim).filter(|i| !fixed.contains_key(i)).collect();
    let (center, radius) = sliced.chebyshev_center()?;
    let empty = radius < 0.0;
    let cloud = if empty { Vec::new() } else { boundary_cloud(&sliced, &center) };

    let mut w = csv_writer();
    let mut header = vec!["kind".to_string()];
    header.extend(free.iter().map(|i| format!("z{i}")));
    header.push("b".into());
    csv_row(&mut w, &header)?;
    if !empty {
        for (a, b) in sliced.system().rows() {
            let mut row = vec!["halfspace".to_string()];
            row.extend(a.iter().map(|&v| csv_num(v)));
            row.push(csv_num(b));
            csv_row(&mut w, &row)?;
        }
        for pt in &cloud {
            let mut row = vec!["boundary".to_string()];
            row.extend(pt.iter().map(|&v| csv_num(v)));
            row.push(String::new());
            csv_row(&mut w, &row)?;
        }
    }
    finish_csv(w, &args.out)?;
    Ok(json!({
        "command": "slice",
        "status": status(empty),
        "empty": empty,
        "free_coordinates": free,
        "halfspaces": if empty { 0 } else { sliced.len() },
        "boundary_points": cloud.len(),
    }))
}

fn parse_signals(arg: Option<&str>, channels: usize) -> CliResult<Vec<DisturbanceSignal>> {
    let Some(arg) = arg else {
        return Ok(vec![DisturbanceSignal::UniformRandom { seed: 0 }; channels]);
    };
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum SignalArg {
        One(DisturbanceSignal),
        PerChannel(Vec<DisturbanceSignal>),
    }
    match inline_or_file::<SignalArg>(arg)? {
        SignalArg::One(s) => Ok(vec![s; channels]),
        SignalArg::PerChannel(v) if v.len() == channels => Ok(v),
        SignalArg::PerChannel(v) => Err(CliError::Input(format!(
            "--signal: {} signals for {channels} disturbance channels",
            v.len()
        ))),
    }
}

fn nominal_controller(args: &SimulateArgs, spec: &DelaySystemSpec) -> CliResult<Controller> {
    let (n, m, dim) = (spec.state_dim(), spec.input_dim(), spec.augmented_dim());
    if let Some(path) = &args.gain_file {
        let rows: Vec<Vec<f64>> = read_json(path)?;
        let cols = rows.first().map_or(0, Vec::len);
        if rows.len() != m || rows.iter().any(|r| r.len() != cols) || (cols != n && cols != dim) {
            return Err(CliError::Input(format!(
                "{}: gain must be {m}x{dim} or {m}x{n}",
                path.display()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CliError::Input(format!("{}: gain must be finite", path.display())));
        }
        return Ok(Controller::Gain(DMatrix::from_fn(m, dim, |i, j| {
            if j < cols {
                rows[i][j]
            } else {
                0.0
            }
        })));
    }
    if args.lqr {
        let qw = DMatrix::from_fn(dim, dim, |i, j| if i == j && i < n { 1.0 } else { 0.0 });
        let rw = DMatrix::identity(m, m);
        return Ok(Controller::Gain(make_gain(&augment(spec), &qw, &rw, 100_000)?));
    }
    Ok(Controller::Zero)
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<Value> {
    let spec = read_spec(&args.spec)?;
    let r = load_result(&args.bundle, &spec)?;
    let signals = parse_signals(args.signal.as_deref(), spec.base.channels.len())?;
    let controller = nominal_controller(args, &spec)?;
    let supervised = !args.raw;
    let (z0, start) = match deepest_start(&spec, &r, &signals)? {
        Some(z) => (z, "deepest"),
        None => (AugmentedState::zeros(&spec), "origin"),
    };
    let cfg = SimulationConfig {
        controller,
        signals,
        z0,
        steps: args.steps,
        supervised,
    };
    let trace = simulate(&spec, &r, &cfg)?;
    let mut bytes = Vec::new();
    write_trace_csv(&trace, &mut bytes)?;
    write_bytes(&args.out, &bytes)?;

    let violations = trace.records.iter().filter(|rec| !rec.safe).count() + usize::from(!trace.final_safe);
    let empty_steps = trace.records.iter().filter(|rec| rec.admissible_empty).count();
    if supervised && r.converged && trace.start_inside && (violations > 0 || empty_steps > 0) {
        return Err(CliError::Verification(format!(
            "supervised run left the safe set: {violations} unsafe states, {empty_steps} empty admissible sets"
        )));
    }
    Ok(json!({
        "command": "simulate",
        "steps": args.steps,
        "supervised": supervised,
        "start": start,
        "start_inside": trace.start_inside,
        "unsafe_states": violations,
        "first_violation": trace.first_violation(),
        "admissible_empty_steps": empty_steps,
        "supervised_steps": trace.records.iter().filter(|rec| rec.supervised).count(),
        "disturbance_clamped_steps": trace.records.iter().filter(|rec| rec.disturbance_clamped).count(),
    }))
}

/// `(τ, p)` pairs: the lists are zipped, and a single preview applies to every delay.
fn bench_pairs(args: &BenchArgs) -> CliResult<Vec<(usize, usize)>> {
    let taus = parse_list("--tau-list", &args.tau_list)?;
    let ps = parse_list("--p-list", &args.p_list)?;
    if taus.is_empty() {
        return Err(CliError::Input("--tau-list is empty".into()));
    }
    match ps.len() {
        1 => Ok(taus.iter().map(|&t| (t, ps[0])).collect()),
        l if l == taus.len() => Ok(taus.into_iter().zip(ps).collect()),
        l => Err(CliError::Input(format!(
            "--p-list has {l} entries, expected 1 or {}",
            taus.len()
        ))),
    }
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<Value> {
    let base = read_spec(&args.spec)?;
    let pairs = bench_pairs(args)?;
    let specs = pairs
        .iter()
        .map(|&(t, p)| base.with_delay(t, p).map_err(CliError::from))
        .collect::<CliResult<Vec<_>>>()?;

    let mut w = csv_writer();
    let header = [
        "tau",
        "p",
        "method",
        "augmented_dim",
        "converged",
        "empty",
        "iterations",
        "constraints",
        "total_s",
        "aux_fixed_point_s",
        "constraint_assembly_s",
        "canonicalization_s",
    ];
    csv_row(&mut w, &header.map(String::from))?;
    let mut rows = Vec::new();
    let methods: &[Method] = match args.method {
        Method::Both => &[Method::Reduced, Method::Direct],
        Method::Reduced => &[Method::Reduced],
        Method::Direct => &[Method::Direct],
    };
    for spec in &specs {
        for &method in methods {
            let (name, converged, empty, iterations, constraints, phases) = match method {
                Method::Reduced => {
                    let r = compute(spec, &ReductionOptions::default())?;
                    let t = r.timings;
                    let phases = [t.total(), t.aux_fixed_point_s, t.constraint_assembly_s, t.canonicalization_s];
                    ("reduced", r.converged, r.is_empty()?, r.iterations, r.c_ext.len(), phases.map(Some))
                }
                _ => {
                    let start = Instant::now();
                    let r = max_invariant_set(&augment(spec), &augmented_safe_set(spec), &FixedPointOptions::default())?;
                    let total = start.elapsed().as_secs_f64();
                    ("direct", r.converged, r.set.is_empty()?, r.iterations, r.set.len(), [Some(total), None, None, None])
                }
            };
            let mut fields = vec![
                spec.tau.to_string(),
                spec.preview.to_string(),
                name.to_string(),
                spec.augmented_dim().to_string(),
                converged.to_string(),
                empty.to_string(),
                iterations.to_string(),
                constraints.to_string(),
            ];
            fields.extend(phases.iter().map(|t| t.map(csv_num).unwrap_or_default()));
            csv_row(&mut w, &fields)?;
            rows.push(json!({
                "tau": spec.tau,
                "p": spec.preview,
                "method": name,
                "status": status(empty),
                "converged": converged,
                "time_s": phases[0],
            }));
        }
    }
    finish_csv(w, &args.out)?;
    Ok(json!({ "command": "bench", "rows": rows }))
}
