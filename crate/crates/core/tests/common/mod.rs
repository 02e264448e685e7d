//! Shared fixtures and brute-force oracles. Nothing here calls the LP
//! solver or the polytope algorithms under test, except to build inputs.
#![allow(dead_code)]

use delayinv::polytope::HPolytope;
use delayinv::system::{DelaySystemSpec, DisturbanceChannel, LinearSystem};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn toy_spec(tau: usize, p: usize) -> DelaySystemSpec {
    scalar_spec(1.5, 1.0, 1.0, 20.0, 2.0, 32.0, tau, p)
}

/// `x⁺ = a x + b u(t−τ) + f d` with symmetric interval bounds.
#[allow(clippy::too_many_arguments)]
pub fn scalar_spec(a: f64, b: f64, f: f64, u: f64, d: f64, x: f64, tau: usize, p: usize) -> DelaySystemSpec {
    let s = |v| DMatrix::from_element(1, 1, v);
    let base = LinearSystem::new(
        s(a),
        s(b),
        vec![DisturbanceChannel {
            gain: s(f),
            set: HPolytope::symmetric_box(&[d]).unwrap(),
        }],
        HPolytope::universe(1),
        HPolytope::symmetric_box(&[u]).unwrap(),
    )
    .unwrap();
    let previewed = (p > 0).then_some(0);
    DelaySystemSpec::new(base, tau, p, HPolytope::symmetric_box(&[x]).unwrap(), previewed).unwrap()
}

/// Random spec with `n ∈ {1, 2}`, one input, one disturbance channel and
/// entries of `A` in `[−1.3, 1.3]`, so both stable and unstable dynamics occur.
pub fn random_spec(seed: u64, tau: usize, p: usize) -> DelaySystemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=2usize);
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.3..1.3));
    let b = DMatrix::from_fn(n, 1, |_, _| {
        let v: f64 = rng.gen_range(0.3..1.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    });
    let f = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
    let w = rng.gen_range(0.05..0.4);
    let base = LinearSystem::new(
        a,
        b,
        vec![DisturbanceChannel {
            gain: f,
            set: HPolytope::symmetric_box(&[w]).unwrap(),
        }],
        HPolytope::universe(n),
        HPolytope::symmetric_box(&[rng.gen_range(0.2..0.8)]).unwrap(),
    )
    .unwrap();
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..2.0)).collect();
    let previewed = (p > 0).then_some(0);
    DelaySystemSpec::new(base, tau, p, HPolytope::symmetric_box(&x).unwrap(), previewed).unwrap()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smallest slack `b − a·x` over raw rows (negative when violated).
pub fn min_slack(rows: &[Vec<f64>], offsets: &[f64], x: &[f64]) -> f64 {
    rows.iter()
        .zip(offsets)
        .map(|(a, b)| (b - dot(a, x)) / dot(a, a).sqrt().max(1e-300))
        .fold(f64::INFINITY, f64::min)
}

/// All vertices of the box `[lo, hi]`.
pub fn box_vertices(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let n = lo.len();
    (0..1usize << n)
        .map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect())
        .collect()
}

/// Solve a small dense square system by Gaussian elimination with partial
/// pivoting; `None` when (numerically) singular.
pub fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        let pivot = m[col].clone();
        for r in col + 1..n {
            let f = m[r][col] / pivot[col];
            for (v, p) in m[r].iter_mut().zip(&pivot).skip(col) {
                *v -= f * p;
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

fn combinations(q: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, q: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..q {
            cur.push(i);
            rec(i + 1, q, k, cur, out);
            cur.pop();
        }
    }
    rec(0, q, k, &mut cur, &mut out);
    out
}

/// Vertices of a bounded polytope `{x : rows·x ≤ offsets}` by trying every
/// `n`-subset of rows.
pub fn enumerate_vertices(rows: &[Vec<f64>], offsets: &[f64], tol: f64) -> Vec<Vec<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    combinations(rows.len(), n)
        .into_iter()
        .filter_map(|idx| {
            let m = idx.iter().map(|&i| rows[i].clone()).collect();
            let r = idx.iter().map(|&i| offsets[i]).collect();
            solve_dense(m, r)
        })
        .filter(|v| min_slack(rows, offsets, v) >= -tol)
        .collect()
}

/// `max c·x` over a bounded polytope by vertex enumeration; `None` if empty.
pub fn lp_by_vertices(c: &[f64], rows: &[Vec<f64>], offsets: &[f64]) -> Option<f64> {
    enumerate_vertices(rows, offsets, 1e-9)
        .iter()
        .map(|v| dot(c, v))
        .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

/// Is `x` in `{y : ∃w, rows·(y, w) ≤ offsets}` where `w` has one or two
/// coordinates? Decided exactly: one coordinate by interval intersection,
/// two by enumerating vertices of the 2-D fibre.
pub fn in_projection(rows: &[Vec<f64>], offsets: &[f64], x: &[f64], tol: f64) -> bool {
    let n = x.len();
    let k = rows[0].len() - n;
    // Fibre constraints g·w ≤ h.
    let fibre: Vec<(Vec<f64>, f64)> = rows
        .iter()
        .zip(offsets)
        .map(|(a, b)| (a[n..].to_vec(), b - dot(&a[..n], x)))
        .collect();
    match k {
        1 => {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for (g, h) in &fibre {
                if g[0] > 1e-12 {
                    hi = hi.min(h / g[0]);
                } else if g[0] < -1e-12 {
                    lo = lo.max(h / g[0]);
                } else if *h < -tol {
                    return false;
                }
            }
            lo <= hi + tol
        }
        2 => {
            let g: Vec<Vec<f64>> = fibre.iter().map(|f| f.0.clone()).collect();
            let h: Vec<f64> = fibre.iter().map(|f| f.1).collect();
            !enumerate_vertices(&g, &h, tol).is_empty()
        }
        _ => panic!("oracle handles one or two eliminated coordinates"),
    }
}

/// Escape oracle for a scalar delay-free system: true if
/// for every input on an evenly spaced grid of `U` some extreme disturbance
/// drives the state out of `X = [−xmax, xmax]` within `depth` steps.
#[allow(clippy::too_many_arguments)]
pub fn escapes(a: f64, b: f64, f: f64, umax: f64, dmax: f64, xmax: f64, x: f64, depth: usize, grid: usize) -> bool {
    if x.abs() > xmax + 1e-12 {
        return true;
    }
    if depth == 0 {
        return false;
    }
    (0..grid).all(|i| {
        let u = -umax + 2.0 * umax * i as f64 / (grid - 1) as f64;
        [dmax, -dmax]
            .iter()
            .any(|d| escapes(a, b, f, umax, dmax, xmax, a * x + b * u + f * d, depth - 1, grid))
    })
}
