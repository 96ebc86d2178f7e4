//! CSV reports.
//!
//! Rows use the columns of [`HEADER`]. Fitted laws follow the rows as
//! comment lines starting with `#`, which [`read_csv`] skips.

use crate::pipeline::SolveReport;
use crate::sweep::SweepFit;
use crate::BenchError;
use std::io::{Read, Write};

pub const HEADER: &str =
    "case,d,eps,dofs,energy_error,l2_error,Rd,Nd,erank_K,erank_f,erank_u,storage_K,storage_f,wall_ms,converged,drift";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6}"))
}

/// One `#` line per fit.
pub fn fit_line(f: &SweepFit) -> String {
    format!(
        "# fit case={} eps={:e} alpha={} C_alpha={} theta={} c_theta={} kappa={} C_kappa={} points={}",
        f.case,
        f.eps,
        opt(f.alpha),
        opt(f.c_alpha),
        opt(f.theta),
        opt(f.c_theta),
        opt(f.kappa),
        opt(f.c_kappa),
        f.points
    )
}

/// Write the header, the rows and then the fits.
pub fn write_csv<W: Write>(mut out: W, rows: &[SolveReport], fits: &[SweepFit]) -> Result<(), BenchError> {
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
        w.write_record(HEADER.split(','))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    for f in fits {
        writeln!(out, "{}", fit_line(f))?;
    }
    Ok(())
}

/// Write to `path` through a temporary file, so a reader never sees a
/// partial report.
pub fn write_csv_file(path: &std::path::Path, rows: &[SolveReport], fits: &[SweepFit]) -> Result<(), BenchError> {
    let tmp = path.with_extension("csv.partial");
    let mut buf = Vec::new();
    write_csv(&mut buf, rows, fits)?;
    std::fs::write(&tmp, buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Parse rows, skipping fit comments. The header must match [`HEADER`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<SolveReport>, BenchError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != HEADER {
        return Err(BenchError::Argument(format!("unexpected CSV header {:?}", header.join(","))));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Fixed-width table for the terminal.
pub fn format_table(rows: &[SolveReport]) -> String {
    let mut s = format!(
        "{:<11} {:>2} {:>8} {:>9} {:>10} {:>10} {:>4} {:>7} {:>8} {:>9} {:>5}\n",
        "case", "d", "eps", "dofs", "E", "E_L2", "Rd", "Nd", "erank_K", "wall_ms", "flags"
    );
    for r in rows {
        let flags = format!("{}{}", if r.converged { "" } else { "N" }, if r.drift { "D" } else { "" });
        s += &format!(
            "{:<11} {:>2} {:>8.0e} {:>9} {:>10.4e} {:>10.4e} {:>4} {:>7} {:>8.2} {:>9.0} {:>5}\n",
            r.case, r.d, r.eps, r.dofs, r.energy_error, r.l2_error, r.rd, r.nd, r.erank_k, r.wall_ms, flags
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn any_report() -> impl Strategy<Value = SolveReport> {
        (
            ("[a-z]{1,8}", 1usize..12, 1e-9f64..1.0, 1usize..1 << 30),
            (0.0f64..10.0, 0.0f64..10.0, 1usize..200, 1usize..1 << 20),
            (0.0f64..300.0, 0.0f64..300.0, 0.0f64..300.0, 1usize..1 << 24, 1usize..1 << 20),
            (0.0f64..1e7, any::<bool>(), any::<bool>()),
        )
            .prop_map(|((case, d, eps, dofs), (e, l2, rd, nd), (ek, ef, eu, sk, sf), (wall, conv, drift))| {
                SolveReport {
                    case,
                    d,
                    eps,
                    dofs,
                    energy_error: e,
                    l2_error: l2,
                    rd,
                    nd,
                    erank_k: ek,
                    erank_f: ef,
                    erank_u: eu,
                    storage_k: sk,
                    storage_f: sf,
                    wall_ms: wall,
                    converged: conv,
                    drift,
                }
            })
    }

    proptest! {
        #[test]
        fn csv_round_trips(rows in proptest::collection::vec(any_report(), 0..6)) {
            let fits = crate::sweep::fit_rows(&rows);
            let mut buf = Vec::new();
            write_csv(&mut buf, &rows, &fits).unwrap();
            let back = read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, rows);
        }
    }

    #[test]
    fn header_is_exact() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[], &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), HEADER);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "case,d\nx,2\n";
        assert!(read_csv(text.as_bytes()).is_err());
    }
}
