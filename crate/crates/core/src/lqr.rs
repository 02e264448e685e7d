//! Discrete-time LQR gain by Riccati fixed-point iteration.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::system::LinearSystem;

const CONVERGENCE_TOL: f64 = 1e-9;
const DIVERGENCE_LIMIT: f64 = 1e12;

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

fn check_weight(m: &DMatrix<f64>, dim: usize, name: &str, strict: bool) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::dim(format!(
            "{name} is {}x{}, expected {dim}x{dim}",
            m.nrows(),
            m.ncols()
        )));
    }
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::Domain(format!("{name} is not symmetric")));
    }
    let scale = m.amax().max(1.0);
    let lo = min_eigenvalue(m);
    let ok = if strict { lo > 1e-12 * scale } else { lo >= -1e-12 * scale };
    if !ok {
        let kind = if strict { "positive definite" } else { "positive semidefinite" };
        return Err(Error::Domain(format!("{name} is not {kind}")));
    }
    Ok(())
}

/// Gain `K` such that `u = −K x`, from at most `iters` Riccati steps
/// `P ← Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA`.
pub fn make_gain(sys: &LinearSystem, qw: &DMatrix<f64>, rw: &DMatrix<f64>, iters: usize) -> Result<DMatrix<f64>> {
    let (n, m) = (sys.state_dim(), sys.input_dim());
    check_weight(qw, n, "Qw", false)?;
    check_weight(rw, m, "Rw", true)?;
    let (a, b) = (&sys.a, &sys.b);
    if b.amax() == 0.0 {
        return Err(Error::Riccati("input matrix is zero, the system is uncontrollable".into()));
    }
    let gain_for = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let bt_p = b.transpose() * p;
        let s = rw + &bt_p * b;
        let rhs = &bt_p * a;
        s.lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Riccati("singular R + BᵀPB".into()))
    };
    let mut p = qw.clone();
    for _ in 0..iters {
        let k = gain_for(&p)?;
        let closed = a - b * &k;
        // Joseph-like form keeps P symmetric: Q + KᵀRK + (A−BK)ᵀP(A−BK).
        let next = qw + k.transpose() * rw * &k + closed.transpose() * &p * &closed;
        let next = (&next + next.transpose()) * 0.5;
        if !next.iter().all(|v| v.is_finite()) || next.amax() > DIVERGENCE_LIMIT {
            return Err(Error::Riccati("Riccati iterate diverged".into()));
        }
        let diff = (&next - &p).amax();
        p = next;
        if diff < CONVERGENCE_TOL * p.amax().max(1.0) {
            break;
        }
    }
    gain_for(&p)
}
