//! Plain-text container for tensor trains.
//!
//! Layout (whitespace separated, one logical item per line):
//!
//! ```text
//! tt vector|matrix
//! d <d>
//! rows <n_1> … <n_d>
//! cols <m_1> … <m_d>        (matrices only)
//! ranks <r_0> … <r_d>
//! core <ℓ>
//! <values of core ℓ in row-major (r_{ℓ-1}, n_ℓ[, m_ℓ], r_ℓ) order>
//! …
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is lossless.

use super::{Core, TensorTrain, TtError, TtMatrix, TtVector};
use std::fmt::Write as _;

/// Either kind of train, as read back from text.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredTrain {
    Vector(TtVector),
    Matrix(TtMatrix),
}

fn write_header(out: &mut String, kind: &str, rows: &[usize], cols: Option<&[usize]>, ranks: &[usize]) {
    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let _ = writeln!(out, "tt {kind}");
    let _ = writeln!(out, "d {}", rows.len());
    let _ = writeln!(out, "rows {}", join(rows));
    if let Some(c) = cols {
        let _ = writeln!(out, "cols {}", join(c));
    }
    let _ = writeln!(out, "ranks {}", join(ranks));
}

/// Serialize a train.
pub fn write_text(t: &StoredTrain) -> String {
    let mut out = String::new();
    match t {
        StoredTrain::Vector(v) => {
            write_header(&mut out, "vector", &v.mode_sizes(), None, &v.ranks());
            for (l, c) in v.cores().iter().enumerate() {
                let _ = writeln!(out, "core {l}");
                let mut vals = Vec::with_capacity(c.data.len());
                for a in 0..c.r0 {
                    for k in 0..c.n {
                        for b in 0..c.r1 {
                            vals.push(format!("{:?}", c.at(a, k, b)));
                        }
                    }
                }
                let _ = writeln!(out, "{}", vals.join(" "));
            }
        }
        StoredTrain::Matrix(m) => {
            write_header(&mut out, "matrix", m.row_modes(), Some(m.col_modes()), &m.ranks());
            for (l, c) in m.cores().iter().enumerate() {
                let _ = writeln!(out, "core {l}");
                let (n, mm) = (m.row_modes()[l], m.col_modes()[l]);
                let mut vals = Vec::with_capacity(c.data.len());
                for a in 0..c.r0 {
                    for i in 0..n {
                        for j in 0..mm {
                            for b in 0..c.r1 {
                                vals.push(format!("{:?}", c.at(a, i + n * j, b)));
                            }
                        }
                    }
                }
                let _ = writeln!(out, "{}", vals.join(" "));
            }
        }
    }
    out
}

fn parse_list(line: Option<&str>, key: &str) -> Result<Vec<usize>, TtError> {
    let line = line.ok_or_else(|| TtError::Parse(format!("missing '{key}' line")))?;
    let mut it = line.split_whitespace();
    if it.next() != Some(key) {
        return Err(TtError::Parse(format!("expected '{key}', got '{line}'")));
    }
    it.map(|s| s.parse::<usize>().map_err(|e| TtError::Parse(format!("{key}: {e}")))).collect()
}

/// Parse the container written by [`write_text`].
pub fn read_text(text: &str) -> Result<StoredTrain, TtError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let kind = match lines.next() {
        Some("tt vector") => false,
        Some("tt matrix") => true,
        other => return Err(TtError::Parse(format!("unknown header {other:?}"))),
    };
    let d = parse_list(lines.next(), "d")?;
    let d = *d.first().ok_or_else(|| TtError::Parse("empty d".into()))?;
    let rows = parse_list(lines.next(), "rows")?;
    let cols = if kind { parse_list(lines.next(), "cols")? } else { vec![1; d] };
    let ranks = parse_list(lines.next(), "ranks")?;
    if rows.len() != d || cols.len() != d || ranks.len() != d + 1 {
        return Err(TtError::Parse("header lengths inconsistent with d".into()));
    }
    let mut cores = Vec::with_capacity(d);
    for l in 0..d {
        let tag = lines.next().ok_or_else(|| TtError::Parse(format!("missing core {l}")))?;
        if tag != format!("core {l}") {
            return Err(TtError::Parse(format!("expected 'core {l}', got '{tag}'")));
        }
        let vals: Vec<f64> = lines
            .next()
            .ok_or_else(|| TtError::Parse(format!("missing values of core {l}")))?
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| TtError::Parse(e.to_string())))
            .collect::<Result<_, _>>()?;
        let (r0, n, m, r1) = (ranks[l], rows[l], cols[l], ranks[l + 1]);
        if vals.len() != r0 * n * m * r1 {
            return Err(TtError::Parse(format!("core {l} has {} values, expected {}", vals.len(), r0 * n * m * r1)));
        }
        let mut c = Core::zeros(r0, n * m, r1);
        let mut p = 0;
        for a in 0..r0 {
            for i in 0..n {
                for j in 0..m {
                    for b in 0..r1 {
                        *c.at_mut(a, i + n * j, b) = vals[p];
                        p += 1;
                    }
                }
            }
        }
        cores.push(c);
    }
    if kind {
        Ok(StoredTrain::Matrix(TtMatrix::from_cores(cores, rows, cols)?))
    } else {
        Ok(StoredTrain::Vector(TtVector::from_cores(cores)?))
    }
}
