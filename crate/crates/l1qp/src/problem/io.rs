//! Instance bundles and solution files.
//!
//! An instance is a directory holding a plain-text manifest plus Matrix
//! Market files for Q and A and whitespace-separated ASCII arrays for the
//! vectors. Manifest keys: `n, m, Q_file, A_file, c, b, d, l, u, name`;
//! vector values are either inline (whitespace separated) or `@file`
//! references resolved against the manifest directory. Infinite bounds
//! are the literal tokens `inf` / `-inf`.
//!
//! All floating-point values are written in shortest round-trip form, so
//! a save/load cycle reproduces every finite entry bit-exactly.

use super::{Problem, ProblemError, Solution, SolveReport, Status};
use crate::sparse::CscMatrix;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.txt";

fn io_err(path: &Path, source: std::io::Error) -> ProblemError {
    ProblemError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> ProblemError {
    ProblemError::Parse {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

fn parse_float(tok: &str, path: &Path) -> Result<f64, ProblemError> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(path, format!("invalid number {tok:?}")))
}

// ---------------------------------------------------------------------------
// Matrix Market
// ---------------------------------------------------------------------------

fn read_matrix_market(path: &Path) -> Result<CscMatrix, ProblemError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, "empty file"))?
        .to_ascii_lowercase();
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(path, "missing MatrixMarket header"));
    }
    if fields[2] != "coordinate" || fields[3] != "real" {
        return Err(parse_err(path, "only `coordinate real` matrices supported"));
    }
    let symmetric = match fields[4] {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(path, format!("unsupported symmetry {other:?}"))),
    };

    let mut data_lines = lines.filter(|l| !l.trim_start().starts_with('%') && !l.trim().is_empty());
    let dims = data_lines
        .next()
        .ok_or_else(|| parse_err(path, "missing dimensions line"))?;
    let mut it = dims.split_whitespace();
    let nrows: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, "bad dimensions line"))?;
    let ncols: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, "bad dimensions line"))?;
    let nnz: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, "bad dimensions line"))?;

    let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    let mut seen = 0usize;
    for line in data_lines {
        let mut it = line.split_whitespace();
        let r: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(path, format!("bad entry line {line:?}")))?;
        let c: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(path, format!("bad entry line {line:?}")))?;
        let v = parse_float(
            it.next()
                .ok_or_else(|| parse_err(path, format!("bad entry line {line:?}")))?,
            path,
        )?;
        if r == 0 || c == 0 || r > nrows || c > ncols {
            return Err(parse_err(path, format!("entry ({r},{c}) out of bounds")));
        }
        triplets.push((r - 1, c - 1, v));
        if symmetric && r != c {
            triplets.push((c - 1, r - 1, v));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(parse_err(
            path,
            format!("expected {nnz} entries, found {seen}"),
        ));
    }
    Ok(CscMatrix::from_triplets(nrows, ncols, &triplets))
}

fn write_matrix_market(path: &Path, m: &CscMatrix, symmetric: bool) -> Result<(), ProblemError> {
    let mut out = String::new();
    let kind = if symmetric { "symmetric" } else { "general" };
    let entries: Vec<(usize, usize, f64)> = m
        .iter()
        .filter(|&(r, c, _)| !symmetric || r >= c)
        .collect();
    let _ = writeln!(out, "%%MatrixMarket matrix coordinate real {kind}");
    let _ = writeln!(out, "{} {} {}", m.nrows(), m.ncols(), entries.len());
    for (r, c, v) in entries {
        let _ = writeln!(out, "{} {} {:e}", r + 1, c + 1, v);
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Vectors
// ---------------------------------------------------------------------------

fn parse_vector_tokens(text: &str, path: &Path) -> Result<Vec<f64>, ProblemError> {
    text.split_whitespace()
        .map(|tok| parse_float(tok, path))
        .collect()
}

fn format_vector(v: &[f64]) -> String {
    let mut s = String::new();
    for x in v {
        let _ = writeln!(s, "{x:e}");
    }
    s
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// Loads a problem bundle. `path` may point at the manifest file itself or
/// at the bundle directory (in which case `manifest.txt` is assumed).
pub fn load_problem(path: &Path) -> Result<Problem, ProblemError> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    };
    let dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;

    let mut kv: HashMap<String, String> = HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(&manifest_path, format!("expected `key = value`: {line:?}")))?;
        kv.insert(key.trim().to_string(), value.trim().to_string());
    }

    let get = |key: &str| -> Result<&String, ProblemError> {
        kv.get(key)
            .ok_or_else(|| parse_err(&manifest_path, format!("missing key {key:?}")))
    };

    let n: usize = get("n")?
        .parse()
        .map_err(|_| parse_err(&manifest_path, "n must be an integer"))?;
    let m: usize = get("m")?
        .parse()
        .map_err(|_| parse_err(&manifest_path, "m must be an integer"))?;
    let name = kv.get("name").cloned().unwrap_or_default();

    let q = read_matrix_market(&dir.join(get("Q_file")?))?;
    let a = read_matrix_market(&dir.join(get("A_file")?))?;

    let load_vec = |key: &str, len: usize| -> Result<Vec<f64>, ProblemError> {
        let value = get(key)?;
        let v = if let Some(rel) = value.strip_prefix('@') {
            let vpath = dir.join(rel.trim());
            let text = fs::read_to_string(&vpath).map_err(|e| io_err(&vpath, e))?;
            parse_vector_tokens(&text, &vpath)?
        } else {
            parse_vector_tokens(value, &manifest_path)?
        };
        if v.len() != len {
            return Err(ProblemError::DimensionMismatch(format!(
                "vector {key} has length {}, expected {len}",
                v.len()
            )));
        }
        Ok(v)
    };

    let c = load_vec("c", n)?;
    let b = load_vec("b", m)?;
    let d = load_vec("d", n)?;
    let l = load_vec("l", n)?;
    let u = load_vec("u", n)?;

    Problem::new(q, a, c, b, d, l, u, name)
}

/// Writes a problem bundle into `dir` (created if missing).
pub fn save_problem(p: &Problem, dir: &Path) -> Result<(), ProblemError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_matrix_market(&dir.join("Q.mtx"), p.q(), true)?;
    write_matrix_market(&dir.join("A.mtx"), p.a(), false)?;
    for (name, v) in [
        ("c.txt", p.c()),
        ("b.txt", p.b()),
        ("d.txt", p.d()),
        ("l.txt", &p.bounds().lower),
        ("u.txt", &p.bounds().upper),
    ] {
        let path = dir.join(name);
        fs::write(&path, format_vector(v)).map_err(|e| io_err(&path, e))?;
    }
    let mut manifest = String::new();
    let _ = writeln!(manifest, "name = {}", p.name());
    let _ = writeln!(manifest, "n = {}", p.n());
    let _ = writeln!(manifest, "m = {}", p.m());
    let _ = writeln!(manifest, "Q_file = Q.mtx");
    let _ = writeln!(manifest, "A_file = A.mtx");
    let _ = writeln!(manifest, "c = @c.txt");
    let _ = writeln!(manifest, "b = @b.txt");
    let _ = writeln!(manifest, "d = @d.txt");
    let _ = writeln!(manifest, "l = @l.txt");
    let _ = writeln!(manifest, "u = @u.txt");
    let mpath = dir.join(MANIFEST_NAME);
    fs::write(&mpath, manifest).map_err(|e| io_err(&mpath, e))
}

// ---------------------------------------------------------------------------
// Solutions
// ---------------------------------------------------------------------------

pub fn save_solution(s: &Solution, path: &Path) -> Result<(), ProblemError> {
    let mut out = String::new();
    let r = &s.report;
    let _ = writeln!(out, "status = {}", s.status.as_str());
    let _ = writeln!(out, "pmm_iters = {}", r.pmm_iters);
    let _ = writeln!(out, "ssn_iters = {}", r.ssn_iters);
    let _ = writeln!(out, "minres_iters_total = {}", r.minres_iters_total);
    let _ = writeln!(out, "minres_calls = {}", r.minres_calls);
    let _ = writeln!(out, "factorizations = {}", r.factorizations);
    let _ = writeln!(out, "wall_time_seconds = {:e}", r.wall_time_seconds);
    let _ = writeln!(out, "residual_dual = {:e}", r.final_residuals.0);
    let _ = writeln!(out, "residual_primal = {:e}", r.final_residuals.1);
    let _ = writeln!(out, "residual_complementarity = {:e}", r.final_residuals.2);
    let _ = writeln!(out, "x = {}", inline_vector(&s.x));
    let _ = writeln!(out, "y = {}", inline_vector(&s.y));
    let _ = writeln!(out, "z = {}", inline_vector(&s.z));
    fs::write(path, out).map_err(|e| io_err(path, e))
}

fn inline_vector(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn load_solution(path: &Path) -> Result<Solution, ProblemError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut kv: HashMap<String, String> = HashMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let get = |key: &str| -> Result<&String, ProblemError> {
        kv.get(key)
            .ok_or_else(|| parse_err(path, format!("missing key {key:?}")))
    };
    let status = Status::parse(get("status")?)
        .ok_or_else(|| parse_err(path, "unknown status value"))?;
    let parse_usize = |key: &str| -> Result<usize, ProblemError> {
        get(key)?
            .parse()
            .map_err(|_| parse_err(path, format!("{key} must be an integer")))
    };
    let mut report = SolveReport {
        pmm_iters: parse_usize("pmm_iters")?,
        ssn_iters: parse_usize("ssn_iters")?,
        minres_iters_total: parse_usize("minres_iters_total")?,
        minres_calls: parse_usize("minres_calls")?,
        factorizations: parse_usize("factorizations")?,
        ..SolveReport::default()
    };
    report.wall_time_seconds = parse_float(get("wall_time_seconds")?, path)?;
    report.final_residuals = (
        parse_float(get("residual_dual")?, path)?,
        parse_float(get("residual_primal")?, path)?,
        parse_float(get("residual_complementarity")?, path)?,
    );
    let x = parse_vector_tokens(get("x")?, path)?;
    let y = parse_vector_tokens(get("y")?, path)?;
    let z = parse_vector_tokens(get("z")?, path)?;
    Ok(Solution {
        x,
        y,
        z,
        status,
        report,
    })
}
