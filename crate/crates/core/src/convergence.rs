//! Time-step sweeps, error-vs-dt tables, least-squares slope fits, and CSV
//! emission.
//!
//! Errors are measured in the max norm at the final time against the problem's
//! exact solution, or against a cached reference solution (classical RK4 at a
//! fine fixed step) for problems without one. Slope fits mask rows whose error
//! has stagnated at the spatial discretization floor.

use crate::integrator::{integrate, IvpProblem, SolveStats};
use crate::problems::Problem;
use crate::scalar::Scalar;
use crate::tableau::Tableau;
use rayon::prelude::*;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// One sweep row.
#[derive(Clone, Debug)]
pub struct Row {
    pub dt: f64,
    pub n_steps: usize,
    /// NaN when the integration failed or no baseline exists.
    pub err_u: f64,
    pub err_ux: Option<f64>,
    pub stats: SolveStats,
    pub failure: Option<String>,
}

/// A fitted log-log slope over a dt window.
#[derive(Clone, Copy, Debug)]
pub struct FitWindow {
    pub dt_lo: f64,
    pub dt_hi: f64,
    pub slope_u: f64,
    pub slope_ux: Option<f64>,
}

/// Error-vs-dt table for one (scheme, problem) pair; rows sorted by dt
/// descending, errors in the max norm.
#[derive(Clone, Debug)]
pub struct ConvergenceTable {
    pub scheme: String,
    pub problem: String,
    pub rows: Vec<Row>,
    pub fit_windows: Vec<FitWindow>,
    pub spatial_error_floor: f64,
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("fewer than {needed} usable rows in window [{lo:e}, {hi:e}] ({found} found)")]
    InsufficientRows { lo: f64, hi: f64, needed: usize, found: usize },
}

fn sweep_ivp<S: Scalar>(
    scheme: &Tableau,
    p: &IvpProblem<S>,
    dts: &[f64],
    reference: Option<&[S]>,
) -> ConvergenceTable {
    let mut rows: Vec<Row> = dts
        .par_iter()
        .map(|&dt| {
            let n_steps = (p.t_end / dt).round() as usize;
            if n_steps == 0 || ((n_steps as f64 * dt) - p.t_end).abs() > 1e-12 * p.t_end.abs() {
                return Row {
                    dt,
                    n_steps,
                    err_u: f64::NAN,
                    err_ux: None,
                    stats: SolveStats::default(),
                    failure: Some(format!("dt does not divide t_end = {}", p.t_end)),
                };
            }
            match integrate(scheme, p, dt, n_steps) {
                Ok(res) => {
                    let err_u = match (&res.err_u, reference) {
                        (Some(e), _) => *e,
                        (None, Some(rf)) => res
                            .state
                            .u_n
                            .iter()
                            .zip(rf)
                            .fold(0.0f64, |m, (a, b)| m.max((*a - *b).modulus())),
                        (None, None) => f64::NAN,
                    };
                    Row {
                        dt,
                        n_steps,
                        err_u,
                        err_ux: res.err_ux,
                        stats: res.state.stats,
                        failure: None,
                    }
                }
                Err(e) => Row {
                    dt,
                    n_steps,
                    err_u: f64::NAN,
                    err_ux: None,
                    stats: SolveStats::default(),
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    rows.sort_by(|a, b| b.dt.total_cmp(&a.dt));
    ConvergenceTable {
        scheme: scheme.label().to_string(),
        problem: p.label.clone(),
        rows,
        fit_windows: Vec::new(),
        spatial_error_floor: p.spatial_error_floor,
    }
}

/// Run one integration per dt; failures are recorded per row, not fatal.
pub fn sweep(scheme: &Tableau, p: &Problem, dts: &[f64]) -> ConvergenceTable {
    match p {
        Problem::Real(p) => sweep_ivp(scheme, p, dts, None),
        Problem::Complex(p) => sweep_ivp(scheme, p, dts, None),
    }
}

/// Sweep a real problem against a precomputed reference solution at the final
/// time (for problems without an exact solution).
pub fn sweep_vs_reference(
    scheme: &Tableau,
    p: &IvpProblem<f64>,
    dts: &[f64],
    reference: &[f64],
) -> ConvergenceTable {
    sweep_ivp(scheme, p, dts, Some(reference))
}

fn log_fit(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Least-squares slope of `log err` vs `log dt` over rows with
/// `dt_lo <= dt <= dt_hi`, masking rows at or below ten times the spatial
/// error floor. Requires at least 3 usable rows for the solution error; the
/// derivative slope is reported when it has at least 3 usable rows of its own.
pub fn fit_slope(
    table: &ConvergenceTable,
    dt_lo: f64,
    dt_hi: f64,
) -> Result<FitWindow, FitError> {
    let floor = 10.0 * table.spatial_error_floor;
    let mut pts_u = Vec::new();
    let mut pts_ux = Vec::new();
    for r in &table.rows {
        if r.dt < dt_lo || r.dt > dt_hi || r.failure.is_some() {
            continue;
        }
        if r.err_u.is_finite() && r.err_u > floor {
            pts_u.push((r.dt, r.err_u));
        }
        if let Some(eux) = r.err_ux {
            if eux.is_finite() && eux > floor {
                pts_ux.push((r.dt, eux));
            }
        }
    }
    if pts_u.len() < 3 {
        return Err(FitError::InsufficientRows {
            lo: dt_lo,
            hi: dt_hi,
            needed: 3,
            found: pts_u.len(),
        });
    }
    Ok(FitWindow {
        dt_lo,
        dt_hi,
        slope_u: log_fit(&pts_u),
        slope_ux: if pts_ux.len() >= 3 { Some(log_fit(&pts_ux)) } else { None },
    })
}

/// Fit a window and record it in the table.
pub fn fit_and_record(
    table: &mut ConvergenceTable,
    dt_lo: f64,
    dt_hi: f64,
) -> Result<FitWindow, FitError> {
    let w = fit_slope(table, dt_lo, dt_hi)?;
    table.fit_windows.push(w);
    Ok(w)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

/// Serialize the table: header `dt,err_u,err_ux,slope_window`, one row per
/// successful integration (the slope column carries the fitted slope of the
/// first window containing the row), then comment lines with fit windows,
/// failures, and solver statistics.
pub fn to_csv(table: &ConvergenceTable) -> String {
    let mut out = String::new();
    out.push_str(&format!("# scheme {}\n", table.scheme));
    out.push_str(&format!("# problem {}\n", table.problem));
    out.push_str("# norm max\n");
    out.push_str(&format!("# spatial_error_floor {:.17e}\n", table.spatial_error_floor));
    out.push_str("dt,err_u,err_ux,slope_window\n");
    for r in &table.rows {
        if r.failure.is_some() {
            continue;
        }
        let slope = table
            .fit_windows
            .iter()
            .find(|w| r.dt >= w.dt_lo && r.dt <= w.dt_hi)
            .map(|w| w.slope_u);
        out.push_str(&format!(
            "{:.17e},{:.17e},{},{}\n",
            r.dt,
            r.err_u,
            fmt_opt(r.err_ux),
            fmt_opt(slope)
        ));
    }
    for w in &table.fit_windows {
        out.push_str(&format!(
            "# fit_window lo={:.17e} hi={:.17e} slope_u={:.17e} slope_ux={}\n",
            w.dt_lo,
            w.dt_hi,
            w.slope_u,
            fmt_opt(w.slope_ux)
        ));
    }
    for r in &table.rows {
        if let Some(f) = &r.failure {
            out.push_str(&format!("# failed dt={:.17e} {}\n", r.dt, f));
        }
    }
    for r in &table.rows {
        if r.failure.is_none() {
            out.push_str(&format!(
                "# stats dt={:.17e} newton_iters={} linear_solves={} rejected={}\n",
                r.dt, r.stats.newton_iters, r.stats.linear_solves, r.stats.rejected
            ));
        }
    }
    out
}

/// Log10-transformed columns for external plotting.
pub fn to_plotdata(table: &ConvergenceTable) -> String {
    let mut out = String::from("log10_dt,log10_err_u,log10_err_ux\n");
    for r in &table.rows {
        if r.failure.is_some() || !r.err_u.is_finite() || r.err_u <= 0.0 {
            continue;
        }
        let lux = r
            .err_ux
            .filter(|e| e.is_finite() && *e > 0.0)
            .map(|e| format!("{:.17e}", e.log10()))
            .unwrap_or_default();
        out.push_str(&format!(
            "{:.17e},{:.17e},{}\n",
            r.dt.log10(),
            r.err_u.log10(),
            lux
        ));
    }
    out
}

/// Parse the data rows of [`to_csv`] output back into `(dt, err_u, err_ux)`.
pub fn parse_csv(text: &str) -> Vec<(f64, f64, Option<f64>)> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("dt,"))
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let dt = f[0].parse().unwrap_or(f64::NAN);
            let eu = f[1].parse().unwrap_or(f64::NAN);
            let eux = f.get(2).and_then(|s| s.parse().ok());
            (dt, eu, eux)
        })
        .collect()
}

/// Write the table to a file.
pub fn emit(table: &ConvergenceTable, path: &Path) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(to_csv(table).as_bytes())
}

// ---------------------------------------------------------------------------
// Reference solutions
// ---------------------------------------------------------------------------

/// Classical explicit RK4 fixed-step march; used for reference solutions.
pub fn rk4_final_state(p: &IvpProblem<f64>, dt: f64) -> Vec<f64> {
    let n_steps = (p.t_end / dt).round() as usize;
    let m = p.dim;
    let mut u = p.u0.clone();
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut tmp = vec![0.0; m];
    for k in 0..n_steps {
        let t = k as f64 * dt;
        (p.rhs)(t, &u, &mut k1);
        for i in 0..m {
            tmp[i] = u[i] + 0.5 * dt * k1[i];
        }
        (p.rhs)(t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..m {
            tmp[i] = u[i] + 0.5 * dt * k2[i];
        }
        (p.rhs)(t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..m {
            tmp[i] = u[i] + dt * k3[i];
        }
        (p.rhs)(t + dt, &tmp, &mut k4);
        for i in 0..m {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    u
}

/// File-backed cache of reference final states keyed by problem label,
/// method, and step size.
pub struct ReferenceCache {
    dir: PathBuf,
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(ReferenceCache { dir })
    }

    fn key_path(&self, label: &str, dt: f64) -> PathBuf {
        let sanitized: String = label
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        self.dir.join(format!("{sanitized}_rk4_dt{dt:e}.txt"))
    }

    /// Fetch or compute the RK4 reference final state at step `dt`.
    pub fn reference(&self, p: &IvpProblem<f64>, dt: f64) -> std::io::Result<Vec<f64>> {
        let path = self.key_path(&p.label, dt);
        if let Ok(text) = std::fs::read_to_string(&path) {
            let vals: Result<Vec<f64>, _> = text
                .lines()
                .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
                .map(str::parse::<f64>)
                .collect();
            if let Ok(v) = vals {
                if v.len() == p.dim {
                    return Ok(v);
                }
            }
        }
        let u = rk4_final_state(p, dt);
        let mut text = format!("# reference {} method=rk4 dt={:e}\n", p.label, dt);
        for v in &u {
            text.push_str(&format!("{v:.17e}\n"));
        }
        std::fs::write(&path, text)?;
        Ok(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{self, PrProfile};
    use crate::tableau::builtin;

    fn synthetic_table(rows: Vec<(f64, f64)>) -> ConvergenceTable {
        ConvergenceTable {
            scheme: "synthetic".into(),
            problem: "synthetic".into(),
            rows: rows
                .into_iter()
                .map(|(dt, e)| Row {
                    dt,
                    n_steps: 1,
                    err_u: e,
                    err_ux: None,
                    stats: SolveStats::default(),
                    failure: None,
                })
                .collect(),
            fit_windows: Vec::new(),
            spatial_error_floor: 0.0,
        }
    }

    #[test]
    fn slope_of_exact_quadratic_data() {
        let rows: Vec<(f64, f64)> = (0..6)
            .map(|k| {
                let dt = 0.5f64.powi(k);
                (dt, dt * dt)
            })
            .collect();
        let t = synthetic_table(rows);
        let w = fit_slope(&t, 0.0, 1.0).unwrap();
        assert!((w.slope_u - 2.0).abs() < 1e-12, "slope {}", w.slope_u);
    }

    #[test]
    fn slope_of_fractional_power_data() {
        let rows: Vec<(f64, f64)> = (0..8)
            .map(|k| {
                let dt = 0.5f64.powi(k);
                (dt, 3.0 * dt.powf(4.5))
            })
            .collect();
        let t = synthetic_table(rows);
        let w = fit_slope(&t, 0.0, 1.0).unwrap();
        assert!((w.slope_u - 4.5).abs() < 1e-10, "slope {}", w.slope_u);
    }

    #[test]
    fn insufficient_rows_rejected() {
        let t = synthetic_table(vec![(0.5, 0.25), (0.25, 0.0625)]);
        assert!(fit_slope(&t, 0.0, 1.0).is_err());
    }

    #[test]
    fn floor_masking_drops_stagnated_rows() {
        let mut rows: Vec<(f64, f64)> = (0..6)
            .map(|k| {
                let dt = 0.5f64.powi(k);
                (dt, dt * dt)
            })
            .collect();
        rows.push((0.5f64.powi(9), 1e-4)); // stagnated far off the dt^2 line
        let mut t = synthetic_table(rows);
        t.spatial_error_floor = 1e-5; // masks err <= 1e-4
        let w = fit_slope(&t, 0.0, 1.0).unwrap();
        assert!((w.slope_u - 2.0).abs() < 1e-10, "slope {}", w.slope_u);
    }

    #[test]
    fn empty_dts_empty_table() {
        let p = problems::build("prothero_robinson", None).unwrap();
        let t = builtin("backward_euler").unwrap();
        let table = sweep(&t, &p, &[]);
        assert!(table.rows.is_empty());
        let csv = to_csv(&table);
        assert!(csv.contains("dt,err_u,err_ux,slope_window\n"));
    }

    #[test]
    fn prothero_robinson_errors_decrease_in_asymptotic_range() {
        let p = problems::Problem::Real(problems::prothero_robinson(-1e4, PrProfile::Paper, 10.0));
        let t = builtin("dirk744").unwrap();
        let dts: Vec<f64> = (6..=11).map(|k| 10.0 * 0.5f64.powi(k)).collect();
        let table = sweep(&t, &p, &dts);
        for pair in table.rows.windows(2) {
            assert!(
                pair[0].err_u > pair[1].err_u,
                "errors not monotone: {} then {}",
                pair[0].err_u,
                pair[1].err_u
            );
        }
    }

    #[test]
    fn integration_with_exact_polynomial_is_flat() {
        // u' = 4 t^3 integrated by an order-4 scheme is exact for every dt
        use crate::integrator::{IvpProblem, LinOp};
        let p = problems::Problem::Real(IvpProblem {
            label: "quartic".into(),
            dim: 1,
            u0: vec![0.0],
            t_end: 1.0,
            rhs: Box::new(|t, _u, out| out[0] = 4.0 * t * t * t),
            jacobian: Some(Box::new(|_t, _u| LinOp::Diagonal(vec![0.0]))),
            affine: None,
            exact: Some(Box::new(|t| vec![t * t * t * t])),
            exact_dx: None,
            discrete_dx: None,
            spatial_error_floor: 0.0,
        });
        let t = builtin("dirk744").unwrap();
        let dts = [0.5, 0.25, 0.125];
        let table = sweep(&t, &p, &dts);
        for r in &table.rows {
            assert!(r.err_u <= 1e-12, "dt {}: err {}", r.dt, r.err_u);
        }
    }

    #[test]
    fn csv_roundtrip_and_determinism() {
        let p = problems::Problem::Real(problems::prothero_robinson(-10.0, PrProfile::Paper, 1.0));
        let t = builtin("dirk541").unwrap();
        let dts: Vec<f64> = (2..=6).map(|k| 0.5f64.powi(k)).collect();
        let mut table = sweep(&t, &p, &dts);
        fit_and_record(&mut table, 0.0, 1.0).unwrap();
        let csv1 = to_csv(&table);
        let mut table2 = sweep(&t, &p, &dts);
        fit_and_record(&mut table2, 0.0, 1.0).unwrap();
        let csv2 = to_csv(&table2);
        assert_eq!(csv1, csv2, "sweeps are not deterministic");
        let parsed = parse_csv(&csv1);
        assert_eq!(parsed.len(), table.rows.len());
        for (row, (dt, eu, _)) in table.rows.iter().zip(&parsed) {
            assert_eq!(row.dt, *dt);
            assert_eq!(row.err_u, *eu);
        }
    }

    #[test]
    fn plotdata_has_log_columns() {
        let p = problems::Problem::Real(problems::prothero_robinson(-10.0, PrProfile::Paper, 1.0));
        let t = builtin("dirk541").unwrap();
        let table = sweep(&t, &p, &[0.25, 0.125, 0.0625]);
        let pd = to_plotdata(&table);
        assert!(pd.starts_with("log10_dt,log10_err_u,log10_err_ux\n"));
        assert_eq!(pd.lines().count(), 4);
    }

    #[test]
    fn reference_cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ReferenceCache::new(dir.path()).unwrap();
        let p = problems::van_der_pol(5.0);
        let r1 = cache.reference(&p, 1e-3).unwrap();
        let r2 = cache.reference(&p, 1e-3).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.len(), 2);
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
    }

    #[test]
    fn rk4_reference_accuracy_on_linear_problem() {
        let p = problems::prothero_robinson(-5.0, PrProfile::Paper, 1.0);
        let u = rk4_final_state(&p, 1e-4);
        let exact = p.exact.as_ref().unwrap()(1.0);
        assert!((u[0] - exact[0]).abs() < 1e-11, "err {}", (u[0] - exact[0]).abs());
    }
}
