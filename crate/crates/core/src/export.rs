//! Text output: significant-digit number formatting and CSV traces.

use std::io::Write;

use crate::error::{Error, Result};
use crate::supervisor::SimTrace;

/// Significant digits used for CSV output.
pub const CSV_DIGITS: usize = 9;

/// `%g`-style formatting with `sig` significant digits.
pub fn fmt_sig(v: f64, sig: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= sig as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_num(v: f64) -> String {
    fmt_sig(v, CSV_DIGITS)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// One row per step plus a final row holding the last state.
///
/// Columns: `t`, `x{i}`, `x_hat{i}`, `u_nominal{j}`, `u_applied{j}`,
/// `d{c}_{k}` (channel `c`, component `k`), `safe`, `admissible_empty`,
/// `supervised`, `disturbance_clamped`.
pub fn write_trace_csv(trace: &SimTrace, out: impl Write) -> Result<()> {
    let n = trace.final_x.len();
    let first = trace.records.first();
    let m = first.map_or(0, |r| r.u_applied.len());
    let dims: Vec<usize> = first.map_or(Vec::new(), |r| r.disturbances.iter().map(Vec::len).collect());

    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..n).map(|i| format!("x_hat{i}")));
    header.extend((0..m).map(|j| format!("u_nominal{j}")));
    header.extend((0..m).map(|j| format!("u_applied{j}")));
    for (c, &l) in dims.iter().enumerate() {
        header.extend((0..l).map(|k| format!("d{c}_{k}")));
    }
    header.extend(["safe", "admissible_empty", "supervised", "disturbance_clamped"].map(String::from));

    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header).map_err(csv_err)?;
    let nums = |v: &[f64]| v.iter().map(|&x| csv_num(x)).collect::<Vec<_>>();
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    for r in &trace.records {
        let mut row = vec![r.t.to_string()];
        row.extend(nums(&r.x));
        row.extend(nums(&r.x_hat));
        row.extend(nums(&r.u_nominal));
        row.extend(nums(&r.u_applied));
        for d in &r.disturbances {
            row.extend(nums(d));
        }
        row.extend([r.safe, r.admissible_empty, r.supervised, r.disturbance_clamped].map(flag));
        w.write_record(&row).map_err(csv_err)?;
    }
    let mut last = vec![trace.records.len().to_string()];
    last.extend(nums(&trace.final_x));
    last.resize(header.len() - 4, String::new());
    last.push(flag(trace.final_safe));
    last.extend(std::iter::repeat_n(String::new(), 3));
    w.write_record(&last).map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(1.5, 9), "1.5");
        assert_eq!(fmt_sig(-32.0, 9), "-32");
        assert_eq!(fmt_sig(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(fmt_sig(100.0 / 3.0, 9), "33.3333333");
        assert_eq!(fmt_sig(123456789012.0, 9), "1.23456789e11");
        assert_eq!(fmt_sig(1.25e-7, 9), "1.25e-7");
        assert_eq!(fmt_sig(0.0, 9), "0");
        assert_eq!(fmt_sig(999999999.6, 9), "1e9");
        assert_eq!(fmt_sig(f64::INFINITY, 9), "inf");
    }
}
