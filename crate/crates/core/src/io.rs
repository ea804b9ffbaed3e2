//! File formats: Matrix Market ingestion/emission, shift-set JSON, the run
//! report, and the per-iteration history CSV.
//!
//! The report is deterministic: identical inputs and seed produce
//! byte-identical JSON. Wall-clock timings therefore never enter the report;
//! they are returned separately for the caller to print or drop. Every number
//! is emitted either as a finite JSON number (shortest round-trip form) or as
//! one of the explicit tokens "inf", "-inf", "nan".

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::diagnostics::BackwardCertificate;
use crate::error::{Error, Result};
use crate::irka::{
    AlphaSchedule, IrkaConfig, IterationRecord, RunOutcome, RunStatus, StopRule, UpdateMode,
};
use crate::linalg::{RMat, RVec};
use crate::lti::LtiSystem;
use crate::shifts::ShiftSet;

/// Read a Matrix Market file into a dense real matrix.
///
/// Supported headers: `matrix coordinate real general`,
/// `matrix coordinate real symmetric`, `matrix array real general`.
pub fn read_matrix_market(path: &Path) -> Result<RMat> {
    let text = fs::read_to_string(path)?;
    parse_matrix_market(&text)
}

pub fn parse_matrix_market(text: &str) -> Result<RMat> {
    let mut lines = text.lines().enumerate();

    let (first_no, first) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))?;
    let head: Vec<&str> = first.split_whitespace().collect();
    if head.len() < 5 || !head[0].eq_ignore_ascii_case("%%MatrixMarket") {
        return Err(parse_err(first_no + 1, "missing %%MatrixMarket header"));
    }
    if !head[1].eq_ignore_ascii_case("matrix") {
        return Err(Error::UnsupportedField {
            found: head[1].to_string(),
        });
    }
    let format = head[2].to_ascii_lowercase();
    let field = head[3].to_ascii_lowercase();
    let symmetry = head[4].to_ascii_lowercase();
    if field != "real" {
        return Err(Error::UnsupportedField { found: field });
    }
    let coordinate = match format.as_str() {
        "coordinate" => true,
        "array" => false,
        other => {
            return Err(Error::UnsupportedField {
                found: other.to_string(),
            })
        }
    };
    let symmetric = match symmetry.as_str() {
        "general" => false,
        "symmetric" if coordinate => true,
        other => {
            return Err(Error::UnsupportedField {
                found: other.to_string(),
            })
        }
    };

    // size line: first non-comment, non-blank line
    let mut size_line = None;
    for (no, line) in lines.by_ref() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        size_line = Some((no, t));
        break;
    }
    let (size_no, size) = size_line.ok_or_else(|| parse_err(0, "missing size line"))?;
    let dims: Vec<&str> = size.split_whitespace().collect();
    let want = if coordinate { 3 } else { 2 };
    if dims.len() != want {
        return Err(parse_err(
            size_no + 1,
            &format!("size line needs {want} fields"),
        ));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| parse_err(size_no + 1, "bad row count"))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| parse_err(size_no + 1, "bad column count"))?;
    let mut m = RMat::zeros((rows, cols));

    if coordinate {
        let nnz: usize = dims[2]
            .parse()
            .map_err(|_| parse_err(size_no + 1, "bad entry count"))?;
        let mut seen = 0usize;
        for (no, line) in lines {
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(parse_err(no + 1, "coordinate entry needs i j value"));
            }
            let i: usize = parts[0]
                .parse()
                .map_err(|_| parse_err(no + 1, "bad row index"))?;
            let j: usize = parts[1]
                .parse()
                .map_err(|_| parse_err(no + 1, "bad column index"))?;
            let v: f64 = parts[2]
                .parse()
                .map_err(|_| parse_err(no + 1, "bad value"))?;
            if i == 0 || j == 0 || i > rows || j > cols {
                return Err(parse_err(no + 1, "index out of range"));
            }
            m[[i - 1, j - 1]] = v;
            if symmetric {
                m[[j - 1, i - 1]] = v;
            }
            seen += 1;
        }
        if seen != nnz {
            return Err(parse_err(
                size_no + 1,
                &format!("expected {nnz} entries, found {seen}"),
            ));
        }
    } else {
        // array format: column-major dense values
        let mut vals = Vec::with_capacity(rows * cols);
        for (no, line) in lines {
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            for tok in t.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(no + 1, "bad value"))?;
                vals.push(v);
            }
        }
        if vals.len() != rows * cols {
            return Err(parse_err(
                size_no + 1,
                &format!("expected {} values, found {}", rows * cols, vals.len()),
            ));
        }
        for j in 0..cols {
            for i in 0..rows {
                m[[i, j]] = vals[j * rows + i];
            }
        }
    }
    Ok(m)
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::ParseError {
        line,
        message: message.to_string(),
    }
}

/// Write a dense real matrix in `array real general` format, full round-trip
/// precision.
pub fn write_matrix_market(path: &Path, m: &RMat) -> Result<()> {
    let mut out = String::new();
    out.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let _ = writeln!(out, "{}", fmt_f64(m[[i, j]]));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Assemble a system from Matrix Market files for A (n x n), b and c
/// (n-vectors, column or row shaped).
pub fn load_system(a_path: &Path, b_path: &Path, c_path: &Path) -> Result<LtiSystem> {
    let a = read_matrix_market(a_path)?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: format!("A is {}x{}, not square", a.nrows(), a.ncols()),
        });
    }
    let b = as_vector(read_matrix_market(b_path)?, n, "b")?;
    let c = as_vector(read_matrix_market(c_path)?, n, "c")?;
    LtiSystem::new(a, b, c)
}

fn as_vector(m: RMat, n: usize, name: &str) -> Result<RVec> {
    let (r, c) = m.dim();
    if (r == n && c == 1) || (r == 1 && c == n) {
        Ok(RVec::from_iter(m.iter().copied()))
    } else {
        Err(Error::DimensionMismatch {
            context: format!("{name} is {r}x{c}, expected {n}x1"),
        })
    }
}

/// Read a shift set from a JSON array of [re, im] pairs; conjugation closure
/// is validated with the pairing tolerance and then snapped exactly.
pub fn read_shift_json(path: &Path) -> Result<ShiftSet> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::BadSpec {
        reason: format!("shift file: {e}"),
    })
}

pub fn write_shift_json(path: &Path, s: &ShiftSet) -> Result<()> {
    let v = serde_json::to_string_pretty(s).expect("shift serialization is infallible");
    fs::write(path, v)?;
    Ok(())
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x}")
    }
}

/// A float as a JSON number, or the explicit token for non-finite values.
fn jnum(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::String(fmt_f64(x))
    }
}

/// Parse a number emitted by [`jnum`].
pub fn parse_jnum(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => match s.as_str() {
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            "nan" => Some(f64::NAN),
            _ => None,
        },
        _ => None,
    }
}

fn shift_set_json(s: &ShiftSet) -> Value {
    Value::Array(
        s.values()
            .iter()
            .map(|z| Value::Array(vec![jnum(z.re), jnum(z.im)]))
            .collect(),
    )
}

fn cvec_json(v: &crate::linalg::CVec) -> Value {
    Value::Array(
        v.iter()
            .map(|z| Value::Array(vec![jnum(z.re), jnum(z.im)]))
            .collect(),
    )
}

fn rmat_json(m: &RMat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| jnum(m[[i, j]])).collect()))
            .collect(),
    )
}

fn rvec_json(v: &RVec) -> Value {
    Value::Array(v.iter().map(|&x| jnum(x)).collect())
}

fn config_json(c: &IrkaConfig) -> Value {
    let mode = match c.update_mode {
        UpdateMode::Vanilla => json!("vanilla"),
        UpdateMode::Blended(AlphaSchedule::Fixed(a)) => json!({"blended": {"alpha": a}}),
        UpdateMode::Blended(AlphaSchedule::Backoff) => json!({"blended": "backoff"}),
    };
    let stop = match c.stop_rule {
        StopRule::Matching => "matching",
        StopRule::HausdorffThenMatching => "hausdorff",
        StopRule::Certificate => "certificate",
    };
    json!({
        "r": c.r,
        "tol": jnum(c.tol),
        "max_iter": c.max_iter,
        "update_mode": mode,
        "stop_rule": stop,
        "cycle_max_period": c.cycle_max_period,
        "seed": c.seed,
    })
}

fn status_json(s: &RunStatus) -> Value {
    match s {
        RunStatus::Converged => json!("converged"),
        RunStatus::MaxIter => json!("max_iter"),
        RunStatus::Cycle(p) => json!({"cycle": p}),
        RunStatus::Failed(r) => json!({"failed": r}),
    }
}

fn record_json(rec: &IterationRecord) -> Value {
    let mut m = Map::new();
    m.insert("k".into(), json!(rec.k));
    m.insert("d".into(), jnum(rec.d));
    m.insert("h".into(), jnum(rec.h));
    m.insert("q_norm".into(), jnum(rec.q_norm));
    m.insert("kappa_C".into(), jnum(rec.kappa_c));
    m.insert("kappa_V".into(), jnum(rec.kappa_v));
    m.insert("cos_angle".into(), jnum(rec.cos_angle));
    m.insert("eps".into(), jnum(rec.eps));
    m.insert("eps_bullet".into(), jnum(rec.eps_bullet));
    m.insert("flipped".into(), json!(rec.flipped));
    m.insert("alpha_used".into(), jnum(rec.alpha_used));
    m.insert("cond_L".into(), jnum(rec.cond_loewner));
    m.insert("degenerate_q".into(), json!(rec.degenerate_q));
    m.insert("sigma_in".into(), shift_set_json(&rec.sigma_in));
    m.insert("mu_out".into(), shift_set_json(&rec.mu_out));
    if let Some(kv) = rec.kv_residual {
        m.insert("kv_residual".into(), jnum(kv));
    }
    Value::Object(m)
}

fn certificate_json(c: &BackwardCertificate, rec: Option<&IterationRecord>) -> Value {
    let mut m = Map::new();
    m.insert("eps".into(), jnum(c.eps));
    m.insert("eps_bullet".into(), jnum(c.eps_bullet));
    m.insert("db_bound".into(), jnum(c.db_bound));
    m.insert("dA_bound".into(), jnum(c.da_bound));
    if let Some(r) = rec {
        m.insert("kappa_C".into(), jnum(r.kappa_c));
        m.insert("kappa_V".into(), jnum(r.kappa_v));
        m.insert("cos_angle".into(), jnum(r.cos_angle));
        m.insert("q_norm".into(), jnum(r.q_norm));
    }
    m.insert("valid".into(), json!(c.valid));
    m.insert(
        "eta".into(),
        Value::Array(c.eta.iter().map(|&x| jnum(x)).collect()),
    );
    m.insert("dq_bound_q".into(), jnum(c.dq_norm_bound_q));
    m.insert("dq_bound_qbullet".into(), jnum(c.dq_norm_bound_qbullet));
    m.insert("dAr_bound".into(), jnum(c.dar_bound));
    Value::Object(m)
}

/// Build the deterministic run report.
pub fn run_report(config: &IrkaConfig, outcome: &RunOutcome) -> Value {
    let last = outcome.history.last();
    let mut root = Map::new();
    root.insert("config".into(), config_json(config));
    root.insert("status".into(), status_json(&outcome.status));
    root.insert(
        "iterations".into(),
        Value::Array(outcome.history.iter().map(record_json).collect()),
    );

    let mut fin = Map::new();
    if let Some(s) = &outcome.final_shifts {
        fin.insert("shifts".into(), shift_set_json(s));
    }
    if let Some(m) = &outcome.model {
        fin.insert(
            "model".into(),
            json!({
                "sigma": shift_set_json(m.sigma()),
                "q": cvec_json(m.q()),
                "c_r": cvec_json(m.c_r()),
                "mu": shift_set_json(m.mu()),
                "residues": cvec_json(m.residues()),
                "companion_residual": jnum(m.companion_residual()),
            }),
        );
    }
    if let Some(c) = &outcome.certificate {
        fin.insert("certificate".into(), certificate_json(c, last));
    }
    if let Some(r) = &outcome.realified {
        fin.insert(
            "realified".into(),
            json!({
                "a": rmat_json(r.a()),
                "b": rvec_json(r.b()),
                "c": rvec_json(r.c()),
            }),
        );
    }
    root.insert("final".into(), Value::Object(fin));
    Value::Object(root)
}

/// Load the realified system back out of a report.
pub fn realified_from_report(report: &Value) -> Result<LtiSystem> {
    let r = report
        .pointer("/final/realified")
        .ok_or_else(|| Error::BadSpec {
            reason: "report has no realified system".into(),
        })?;
    let a_rows = r["a"].as_array().ok_or_else(|| Error::BadSpec {
        reason: "realified.a is not an array".into(),
    })?;
    let n = a_rows.len();
    let mut a = RMat::zeros((n, n));
    for (i, row) in a_rows.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| Error::BadSpec {
            reason: "realified.a row is not an array".into(),
        })?;
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                context: "realified.a is not square".into(),
            });
        }
        for (j, v) in row.iter().enumerate() {
            a[[i, j]] = parse_jnum(v).ok_or_else(|| Error::BadSpec {
                reason: "bad number in realified.a".into(),
            })?;
        }
    }
    let vec_of = |key: &str| -> Result<RVec> {
        let arr = r[key].as_array().ok_or_else(|| Error::BadSpec {
            reason: format!("realified.{key} is not an array"),
        })?;
        let mut v = RVec::zeros(arr.len());
        for (i, x) in arr.iter().enumerate() {
            v[i] = parse_jnum(x).ok_or_else(|| Error::BadSpec {
                reason: format!("bad number in realified.{key}"),
            })?;
        }
        Ok(v)
    };
    LtiSystem::new(a, vec_of("b")?, vec_of("c")?)
}

/// Fixed history CSV header.
pub const HISTORY_CSV_HEADER: &str =
    "k,d,h,q_norm,kappa_C,kappa_V,cos_angle,eps,eps_bullet,flipped,alpha_used";

/// Serialize the per-iteration history; one row per iteration, floats in full
/// round-trip precision, non-finite values as inf/-inf/nan tokens.
pub fn history_csv(history: &[IterationRecord]) -> String {
    let mut out = String::new();
    out.push_str(HISTORY_CSV_HEADER);
    out.push('\n');
    for rec in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            rec.k,
            fmt_f64(rec.d),
            fmt_f64(rec.h),
            fmt_f64(rec.q_norm),
            fmt_f64(rec.kappa_c),
            fmt_f64(rec.kappa_v),
            fmt_f64(rec.cos_angle),
            fmt_f64(rec.eps),
            fmt_f64(rec.eps_bullet),
            rec.flipped,
            fmt_f64(rec.alpha_used),
        );
    }
    out
}

pub fn write_history_csv(history: &[IterationRecord], path: &Path) -> Result<()> {
    fs::write(path, history_csv(history))?;
    Ok(())
}

/// Parse a history CSV back into rows of numbers (header checked).
pub fn parse_history_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| parse_err(1, "empty csv"))?;
    if head != HISTORY_CSV_HEADER {
        return Err(parse_err(1, "unexpected csv header"));
    }
    let mut rows = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split(',') {
            let x = match tok {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                "nan" => f64::NAN,
                t => t
                    .parse()
                    .map_err(|_| parse_err(no + 2, "bad csv number"))?,
            };
            row.push(x);
        }
        if row.len() != 11 {
            return Err(parse_err(no + 2, "csv row needs 11 fields"));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn coordinate_general_fixture() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 -1.0\n2 2 -2.0\n";
        let m = parse_matrix_market(text).unwrap();
        assert_eq!(m[[0, 0]], -1.0);
        assert_eq!(m[[1, 1]], -2.0);
        assert_eq!(m[[0, 1]], 0.0);
    }

    #[test]
    fn coordinate_symmetric_mirrors() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n2 1 0.5\n";
        let m = parse_matrix_market(text).unwrap();
        assert_eq!(m[[1, 0]], 0.5);
        assert_eq!(m[[0, 1]], 0.5);
    }

    #[test]
    fn array_vector_fixture() {
        let text = "%%MatrixMarket matrix array real general\n2 1\n1\n1\n";
        let m = parse_matrix_market(text).unwrap();
        assert_eq!(m.dim(), (2, 1));
        assert_eq!(m[[0, 0]], 1.0);
        assert_eq!(m[[1, 0]], 1.0);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 oops 3.0\n";
        match parse_matrix_market(text) {
            Err(Error::ParseError { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n";
        assert!(matches!(
            parse_matrix_market(text),
            Err(Error::UnsupportedField { .. })
        ));
        let text = "%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n";
        assert!(matches!(
            parse_matrix_market(text),
            Err(Error::UnsupportedField { .. })
        ));
    }

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let m = RMat::from_shape_fn((7, 5), |_| (rng.random::<f64>() - 0.5) * 1e3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.mtx");
        write_matrix_market(&p, &m).unwrap();
        let back = read_matrix_market(&p).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn load_system_checks_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let a = RMat::from_shape_fn((2, 2), |(i, j)| if i == j { -(1.0 + i as f64) } else { 0.0 });
        let b = RMat::ones((2, 1));
        let bad = RMat::ones((3, 1));
        let (pa, pb, pc, pbad) = (
            dir.path().join("a.mtx"),
            dir.path().join("b.mtx"),
            dir.path().join("c.mtx"),
            dir.path().join("bad.mtx"),
        );
        write_matrix_market(&pa, &a).unwrap();
        write_matrix_market(&pb, &b).unwrap();
        write_matrix_market(&pc, &b).unwrap();
        write_matrix_market(&pbad, &bad).unwrap();
        let sys = load_system(&pa, &pb, &pc).unwrap();
        assert_eq!(sys.order(), 2);
        assert!(matches!(
            load_system(&pa, &pbad, &pc),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn jnum_tokens_and_parse() {
        assert_eq!(jnum(f64::INFINITY), Value::String("inf".into()));
        assert_eq!(jnum(f64::NEG_INFINITY), Value::String("-inf".into()));
        assert_eq!(jnum(f64::NAN), Value::String("nan".into()));
        assert_eq!(parse_jnum(&jnum(1.25)).unwrap(), 1.25);
        assert!(parse_jnum(&jnum(f64::INFINITY)).unwrap().is_infinite());
        assert!(parse_jnum(&jnum(f64::NAN)).unwrap().is_nan());
        // shortest repr round-trips exactly
        let x = 0.1 + 0.2;
        assert_eq!(parse_jnum(&jnum(x)).unwrap(), x);
    }

    #[test]
    fn history_csv_round_trip() {
        use crate::irka::IterationRecord;
        let rec = IterationRecord {
            k: 0,
            sigma_in: ShiftSet::from_reals(&[1.0]),
            mu_out: ShiftSet::from_reals(&[-1.0]),
            q_norm: 2.0,
            d: 0.125,
            h: 0.0625,
            kappa_c: f64::INFINITY,
            kappa_v: 1.5,
            cos_angle: 1.0,
            eps: 1e-3,
            eps_bullet: f64::NAN,
            flipped: 1,
            alpha_used: 1.0,
            cond_loewner: 10.0,
            degenerate_q: false,
            kv_residual: None,
        };
        let csv = history_csv(&[rec]);
        let rows = parse_history_csv(&csv).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0][1], 0.125);
        assert!(rows[0][4].is_infinite());
        assert!(rows[0][8].is_nan());
        assert_relative_eq!(rows[0][10], 1.0);
    }
}
