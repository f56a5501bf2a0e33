//! Calibration driver: runs the acceptance-scale convergence sweeps and
//! prints errors and fitted slopes, to pin dt windows.

use dirk_wso::convergence::{self, ReferenceCache};
use dirk_wso::problems::{self, Pde1d, Problem, PrProfile};
use dirk_wso::tableau::builtin;

fn dts(base: f64, k1: i32, k2: i32) -> Vec<f64> {
    (k1..=k2).map(|k| base * 2.0f64.powi(-k)).collect()
}

fn show(label: &str, table: &convergence::ConvergenceTable) {
    println!("--- {label} (floor {:.2e}) ---", table.spatial_error_floor);
    for r in &table.rows {
        match &r.failure {
            Some(f) => println!("  dt {:10.4e}  FAILED: {f}", r.dt),
            None => println!(
                "  dt {:10.4e}  err_u {:10.4e}  err_ux {}",
                r.dt,
                r.err_u,
                r.err_ux.map(|e| format!("{e:10.4e}")).unwrap_or_default()
            ),
        }
    }
}

fn fit(table: &convergence::ConvergenceTable, lo: f64, hi: f64) {
    match convergence::fit_slope(table, lo, hi) {
        Ok(w) => println!(
            "  fit [{lo:.2e},{hi:.2e}]: slope_u {:.3} slope_ux {}",
            w.slope_u,
            w.slope_ux.map(|s| format!("{s:.3}")).unwrap_or("-".into())
        ),
        Err(e) => println!("  fit [{lo:.2e},{hi:.2e}]: {e}"),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let what = args.get(1).map(|s| s.as_str()).unwrap_or("all");

    if what == "pr" || what == "all" {
        let p = Problem::Real(problems::prothero_robinson(-1e4, PrProfile::Paper, 10.0));
        for name in ["dirk744", "dirk1255", "dirk541", "dirk551"] {
            let t = builtin(name).unwrap();
            let table = convergence::sweep(&t, &p, &dts(10.0, 4, 14));
            show(&format!("PR {name}"), &table);
            fit(&table, 0.0, 1.0);
            fit(&table, 5e-3, 1e-1); // the stiff window
        }
    }

    if what == "heat" || what == "all" {
        let p = problems::mol_1d(Pde1d::Heat, 2000, 4).unwrap();
        for name in ["dirk744", "dirk1254", "dirk1255", "dirk541", "dirk551"] {
            let t = builtin(name).unwrap();
            let table = convergence::sweep(&t, &p, &dts(1.0, 2, 10));
            show(&format!("heat {name}"), &table);
            fit(&table, 0.0, 1.0);
        }
    }

    if what == "advection" || what == "all" {
        let p = problems::mol_1d(Pde1d::Advection, 2000, 4).unwrap();
        for name in ["dirk744", "dirk1254", "dirk1255"] {
            let t = builtin(name).unwrap();
            let table = convergence::sweep(&t, &p, &dts(1.0, 2, 10));
            show(&format!("advection {name}"), &table);
            fit(&table, 0.0, 1.0);
        }
    }

    if what == "biharmonic" || what == "all" {
        let p = problems::mol_1d(Pde1d::Biharmonic, 2000, 2).unwrap();
        for name in ["dirk744", "dirk1254", "dirk1255"] {
            let t = builtin(name).unwrap();
            let table = convergence::sweep(&t, &p, &dts(1.0, 2, 10));
            show(&format!("biharmonic {name}"), &table);
            fit(&table, 0.0, 1.0);
        }
    }

    if what == "burgers" || what == "all" {
        let p = problems::mol_1d(Pde1d::Burgers, 500, 6).unwrap();
        for name in ["dirk744", "dirk1255", "dirk541"] {
            let t = builtin(name).unwrap();
            let table = convergence::sweep(&t, &p, &dts(1.0, 2, 10));
            show(&format!("burgers {name}"), &table);
            fit(&table, 0.0, 1.0);
        }
    }

    if what == "vdp" || what == "all" {
        let p = problems::van_der_pol(500.0);
        let cache = ReferenceCache::new("/tmp/dirk-cache").unwrap();
        let t0 = std::time::Instant::now();
        let reference = cache.reference(&p, 1e-6).unwrap();
        println!("vdp reference: {:?} in {:.1?}", reference, t0.elapsed());
        for name in ["dirk744", "dirk1255"] {
            let t = builtin(name).unwrap();
            let table = convergence::sweep_vs_reference(&t, &p, &dts(0.5, 0, 11), &reference);
            show(&format!("vdp {name}"), &table);
            fit(&table, 1e-2, 1e-1);
            fit(&table, 0.0, 1.0);
        }
    }

    if what == "schrodinger" || what == "all" {
        let p = problems::mol_1d(Pde1d::Schrodinger, 1000, 4).unwrap();
        for name in ["dirk744", "dirk1255"] {
            let t = builtin(name).unwrap();
            let table = convergence::sweep(&t, &p, &dts(1.2, 2, 9));
            show(&format!("schrodinger {name}"), &table);
            fit(&table, 0.0, 1.0);
        }
    }

    if what == "varheat" || what == "all" {
        let p = problems::mol_1d(Pde1d::VarHeatX, 1000, 6).unwrap();
        for name in ["dirk744", "dirk1255"] {
            let t = builtin(name).unwrap();
            let table = convergence::sweep(&t, &p, &dts(1.0, 2, 9));
            show(&format!("var_heat_x {name}"), &table);
            fit(&table, 0.0, 1.0);
        }
    }

    if what == "2d" || what == "all" {
        let p = Problem::Real(problems::mol_2d_advdiff(30));
        for name in ["dirk744", "dirk1254"] {
            let t = builtin(name).unwrap();
            let table = convergence::sweep(&t, &p, &dts(1.0, 1, 7));
            show(&format!("advdiff_2d {name}"), &table);
            fit(&table, 0.0, 1.0);
        }
    }
}
