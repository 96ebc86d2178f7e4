//! Level sweeps and the fitted growth laws.
//!
//! The energy error is fitted to `E = C_α 2^{-α d}`, the maximum rank to
//! `R_d = c_θ d^θ` and the parameter count to `N_d = C_κ d^κ`, by least
//! squares in log space. Rows past the level with the smallest error of
//! their tolerance are marked as drift and left out of the fits.

use crate::cases::BenchmarkCase;
use crate::pipeline::{run_case, Reference, RunOptions, RunOutput, SolveReport};
use crate::BenchError;
use std::ops::RangeInclusive;

/// Least-squares line `y = slope · x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// `None` for fewer than two points or a degenerate abscissa.
pub fn least_squares(x: &[f64], y: &[f64]) -> Option<Fit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some(Fit { slope, intercept: my - slope * mx, points: n })
}

/// Fitted laws for one case and tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepFit {
    pub case: String,
    pub eps: f64,
    pub alpha: Option<f64>,
    pub c_alpha: Option<f64>,
    pub theta: Option<f64>,
    pub c_theta: Option<f64>,
    pub kappa: Option<f64>,
    pub c_kappa: Option<f64>,
    /// Rows used (converged and not drifting).
    pub points: usize,
}

fn same_group(a: &SolveReport, b: &SolveReport) -> bool {
    a.case == b.case && a.eps == b.eps
}

/// Mark rows whose level lies past the smallest error of their group.
pub fn mark_drift(rows: &mut [SolveReport]) {
    for i in 0..rows.len() {
        let best = rows
            .iter()
            .filter(|r| same_group(r, &rows[i]) && r.energy_error.is_finite())
            .min_by(|a, b| a.energy_error.total_cmp(&b.energy_error))
            .map(|r| r.d);
        rows[i].drift = best.is_some_and(|b| rows[i].d > b);
    }
}

/// Fits per `(case, eps)` group, in order of first appearance.
pub fn fit_rows(rows: &[SolveReport]) -> Vec<SweepFit> {
    let mut out: Vec<SweepFit> = Vec::new();
    for r in rows {
        if out.iter().any(|f| f.case == r.case && f.eps == r.eps) {
            continue;
        }
        let used: Vec<&SolveReport> =
            rows.iter().filter(|s| same_group(s, r) && s.converged && !s.drift).collect();
        let d: Vec<f64> = used.iter().map(|s| s.d as f64).collect();
        let ln_d: Vec<f64> = d.iter().map(|v| v.ln()).collect();
        let e: Vec<f64> = used.iter().map(|s| s.energy_error.log2()).collect();
        let rd: Vec<f64> = used.iter().map(|s| (s.rd as f64).ln()).collect();
        let nd: Vec<f64> = used.iter().map(|s| (s.nd as f64).ln()).collect();
        let a = least_squares(&d, &e);
        let t = least_squares(&ln_d, &rd);
        let k = least_squares(&ln_d, &nd);
        out.push(SweepFit {
            case: r.case.clone(),
            eps: r.eps,
            alpha: a.map(|f| -f.slope),
            c_alpha: a.map(|f| f.intercept.exp2()),
            theta: t.map(|f| f.slope),
            c_theta: t.map(|f| f.intercept.exp()),
            kappa: k.map(|f| f.slope),
            c_kappa: k.map(|f| f.intercept.exp()),
            points: used.len(),
        });
    }
    out
}

/// Rows, fits and the full run outputs of a sweep.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SolveReport>,
    pub fits: Vec<SweepFit>,
    pub outputs: Vec<RunOutput>,
}

/// Run every `(d, eps)` pair against one reference. `progress` sees each
/// row as soon as it is computed.
pub fn sweep(
    case: &BenchmarkCase,
    levels: RangeInclusive<usize>,
    eps_list: &[f64],
    opts: &RunOptions,
    reference: &Reference,
    mut progress: impl FnMut(&RunOutput),
) -> Result<SweepResult, BenchError> {
    if eps_list.is_empty() || levels.is_empty() {
        return Err(BenchError::Argument("empty sweep".into()));
    }
    let mut outputs = Vec::new();
    for &eps in eps_list {
        for d in levels.clone() {
            let o = RunOptions { eps, ..*opts };
            let out = run_case(case, d, &o, reference)?;
            progress(&out);
            outputs.push(out);
        }
    }
    let mut rows: Vec<SolveReport> = outputs.iter().map(|o| o.report.clone()).collect();
    mark_drift(&mut rows);
    for (o, r) in outputs.iter_mut().zip(&rows) {
        o.report.drift = r.drift;
    }
    let fits = fit_rows(&rows);
    Ok(SweepResult { rows, fits, outputs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(d: usize, e: f64, rd: usize, nd: usize) -> SolveReport {
        SolveReport {
            case: "x".into(),
            d,
            eps: 1e-3,
            dofs: 0,
            energy_error: e,
            l2_error: e,
            rd,
            nd,
            erank_k: 1.0,
            erank_f: 1.0,
            erank_u: 1.0,
            storage_k: 1,
            storage_f: 1,
            wall_ms: 0.0,
            converged: true,
            drift: false,
        }
    }

    #[test]
    fn exact_power_laws_are_recovered() {
        let rows: Vec<SolveReport> = (2..=7)
            .map(|d| {
                let df = d as f64;
                row(d, 3.0 * (-0.7 * df).exp2(), (5.0 * df.powf(0.9)).round() as usize, (2.0 * df.powi(4)) as usize)
            })
            .collect();
        let f = &fit_rows(&rows)[0];
        assert!((f.alpha.unwrap() - 0.7).abs() < 1e-12);
        assert!((f.c_alpha.unwrap() - 3.0).abs() < 1e-10);
        assert!((f.kappa.unwrap() - 4.0).abs() < 1e-2);
        assert!((f.theta.unwrap() - 0.9).abs() < 0.1);
        assert_eq!(f.points, 6);
    }

    #[test]
    fn rows_past_the_best_error_drift() {
        let mut rows = vec![row(2, 0.2, 4, 10), row(3, 0.1, 5, 20), row(4, 0.05, 6, 30), row(5, 0.08, 7, 40)];
        mark_drift(&mut rows);
        let flags: Vec<bool> = rows.iter().map(|r| r.drift).collect();
        assert_eq!(flags, [false, false, false, true]);
        let f = &fit_rows(&rows)[0];
        assert_eq!(f.points, 3);
        assert!((f.alpha.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn groups_are_fitted_separately() {
        let mut rows = vec![row(2, 0.4, 4, 10), row(3, 0.2, 5, 20)];
        let mut other = vec![row(2, 0.4, 4, 10), row(3, 0.1, 5, 20)];
        other.iter_mut().for_each(|r| r.eps = 1e-5);
        rows.extend(other);
        let fits = fit_rows(&rows);
        assert_eq!(fits.len(), 2);
        assert!((fits[0].alpha.unwrap() - 1.0).abs() < 1e-12);
        assert!((fits[1].alpha.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_point_has_no_fit() {
        let f = &fit_rows(&[row(2, 0.4, 4, 10)])[0];
        assert_eq!((f.alpha, f.theta, f.points), (None, None, 1));
    }

    proptest! {
        #[test]
        fn least_squares_recovers_lines(a in -5.0f64..5.0, b in -5.0f64..5.0, n in 2usize..10) {
            let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 + 1.0).collect();
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let f = least_squares(&x, &y).unwrap();
            prop_assert!((f.slope - a).abs() < 1e-9 && (f.intercept - b).abs() < 1e-9);
        }
    }
}
