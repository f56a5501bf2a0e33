//! Command-line front end: scheme verification, stability-region export,
//! convergence studies, and scheme search.
//!
//! Exit codes: 0 success, 1 verification mismatch against `--expect`, 2 usage
//! error. Numeric output is machine-readable at 17 significant digits;
//! `--pretty` switches to a human summary. Thread count for the parallel
//! commands follows `RAYON_NUM_THREADS`.

use clap::{Parser, Subcommand};
use dirk_wso::{convergence, problems, report, search, stability, tableau, wso};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dirk-wso", version, about = "DIRK methods with high weak stage order")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in schemes.
    List,
    /// Verify order, weak stage order, stiff accuracy, and stability.
    Verify {
        /// Built-in name or path to a tableau text file.
        scheme: String,
        /// Expected `order,wso`; mismatch exits with code 1.
        #[arg(long)]
        expect: Option<String>,
        /// Dense a-posteriori imaginary-axis scan (1e5 points).
        #[arg(long)]
        fine: bool,
        /// Human-readable summary instead of key: value lines.
        #[arg(long)]
        pretty: bool,
    },
    /// Trace the stability-region boundary |R(z)| = 1 and export CSV/SVG.
    Stability {
        scheme: String,
        /// Window `re_min,re_max,im_min,im_max`.
        #[arg(long, default_value = "-15,15,-15,15")]
        window: String,
        /// Grid cells per axis.
        #[arg(long, default_value_t = 400)]
        resolution: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Optional SVG path.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Time-step sweep on a test problem; writes the error table as CSV.
    Converge {
        #[arg(long)]
        scheme: String,
        /// Problem id (see `list`-style ids in the library docs).
        #[arg(long)]
        problem: String,
        /// Comma list (`0.5,0.25,...`) or pattern `B*2^-(K1..K2)`.
        #[arg(long)]
        dts: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write log10-transformed columns next to the CSV.
        #[arg(long)]
        plotdata: bool,
        /// Override the problem's grid resolution.
        #[arg(long)]
        n: Option<usize>,
        /// Fit window `lo,hi`; may repeat.
        #[arg(long)]
        fit: Vec<String>,
        /// Reference-solution cache directory (problems without exact solutions).
        #[arg(long, default_value = ".dirk-cache")]
        cache: PathBuf,
        /// Reference step size for the cached explicit-RK4 run.
        #[arg(long, default_value_t = 1e-6)]
        ref_dt: f64,
    },
    /// Search for feasible DIRK schemes with prescribed (stages, order, WSO).
    Search {
        #[arg(long)]
        s: usize,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        q: usize,
        #[arg(long, default_value_t = 100)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for the candidate pool.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a tableau in the text or CSV format.
    Export {
        scheme: String,
        #[arg(long, default_value = "text")]
        format: String,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve_scheme(name: &str) -> Result<tableau::Tableau, String> {
    match tableau::builtin(name) {
        Ok(t) => Ok(t),
        Err(_) => {
            let text = std::fs::read_to_string(name)
                .map_err(|e| format!("`{name}` is not a built-in scheme and not a readable file: {e}"))?;
            tableau::from_text(&text).map_err(|e| format!("failed to parse `{name}`: {e}"))
        }
    }
}

fn parse_dts(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    // pattern B*2^-(K1..K2)
    if let Some(star) = spec.find("*2^-(") {
        let base: f64 = spec[..star]
            .trim()
            .parse()
            .map_err(|e| format!("bad dt base: {e}"))?;
        let rest = &spec[star + 5..];
        let close = rest.find(')').ok_or("missing `)` in dt pattern")?;
        let range = &rest[..close];
        let (k1, k2) = range
            .split_once("..")
            .ok_or("dt pattern range must be K1..K2")?;
        let k1: i32 = k1.trim().parse().map_err(|e| format!("bad K1: {e}"))?;
        let k2: i32 = k2.trim().parse().map_err(|e| format!("bad K2: {e}"))?;
        if k2 < k1 {
            return Err("K2 must be >= K1".into());
        }
        return Ok((k1..=k2).map(|k| base * 2.0f64.powi(-k)).collect());
    }
    spec.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad dt `{v}`: {e}")))
        .collect()
}

fn parse_window(spec: &str) -> Result<stability::Window, String> {
    let parts: Vec<f64> = spec
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("bad window: {e}"))?;
    if parts.len() != 4 {
        return Err("window must be re_min,re_max,im_min,im_max".into());
    }
    Ok(stability::Window::new(
        (parts[0], parts[1]),
        (parts[2], parts[3]),
        1,
        1,
    ))
}

fn run() -> Result<ExitCode, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for name in tableau::BUILTIN_NAMES {
                let t = tableau::builtin(name).expect("catalog");
                println!("{name}: {} ({} stages)", t.label(), t.s());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { scheme, expect, fine, pretty } => {
            let t = resolve_scheme(&scheme)?;
            let rep = report::verify_scheme(&t, fine);
            if pretty {
                print!("{}", rep.to_pretty());
            } else {
                print!("{}", rep.to_text());
            }
            if let Some(expect) = expect {
                let (p, q) = expect
                    .split_once(',')
                    .ok_or("--expect must be `order,wso`")?;
                let p: usize = p.trim().parse().map_err(|e| format!("bad order: {e}"))?;
                let q: usize = q.trim().parse().map_err(|e| format!("bad wso: {e}"))?;
                let got_q = match rep.krylov.q {
                    wso::Wso::Finite(v) => v,
                    wso::Wso::Unbounded => usize::MAX,
                };
                if rep.order.order != p || got_q != q {
                    eprintln!(
                        "mismatch: expected order {p} wso {q}, verified order {} wso {}",
                        rep.order.order, rep.krylov.q
                    );
                    return Ok(ExitCode::FAILURE);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Stability { scheme, window, resolution, out, svg } => {
            let t = resolve_scheme(&scheme)?;
            let mut win = parse_window(&window)?;
            win.nx = resolution;
            win.ny = resolution;
            let lines = stability::region_boundary(&t, &win);
            if lines.is_empty() {
                eprintln!("note: no |R(z)| = 1 boundary inside the window");
            }
            std::fs::write(&out, stability::boundary_csv(&lines))
                .map_err(|e| format!("write {}: {e}", out.display()))?;
            if let Some(svg_path) = svg {
                std::fs::write(&svg_path, stability::boundary_svg(&lines, &win))
                    .map_err(|e| format!("write {}: {e}", svg_path.display()))?;
            }
            let rep = stability::check_a_stability(&t, stability::ScanMode::Coarse);
            println!(
                "a_stable: {}\nl_stable: {}\nmax_imag_axis_modulus: {:.17e}\npolylines: {}",
                rep.a_stable,
                rep.l_stable,
                rep.max_imag_axis_modulus,
                lines.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Converge { scheme, problem, dts, out, plotdata, n, fit, cache, ref_dt } => {
            let t = resolve_scheme(&scheme)?;
            let dts = parse_dts(&dts)?;
            let prob = problems::build(&problem, n).map_err(|e| e.to_string())?;
            let mut table = if prob.has_exact() {
                convergence::sweep(&t, &prob, &dts)
            } else {
                match &prob {
                    problems::Problem::Real(p) => {
                        let cache = convergence::ReferenceCache::new(&cache)
                            .map_err(|e| format!("cache dir: {e}"))?;
                        let reference = cache
                            .reference(p, ref_dt)
                            .map_err(|e| format!("reference solve: {e}"))?;
                        convergence::sweep_vs_reference(&t, p, &dts, &reference)
                    }
                    problems::Problem::Complex(_) => {
                        return Err("no reference path for complex problems".into())
                    }
                }
            };
            for w in &fit {
                let (lo, hi) = w.split_once(',').ok_or("--fit must be `lo,hi`")?;
                let lo: f64 = lo.trim().parse().map_err(|e| format!("bad fit lo: {e}"))?;
                let hi: f64 = hi.trim().parse().map_err(|e| format!("bad fit hi: {e}"))?;
                match convergence::fit_and_record(&mut table, lo, hi) {
                    Ok(w) => println!(
                        "fit [{lo:e}, {hi:e}]: slope_u {:.6}{}",
                        w.slope_u,
                        w.slope_ux
                            .map(|s| format!(", slope_ux {s:.6}"))
                            .unwrap_or_default()
                    ),
                    Err(e) => eprintln!("fit [{lo:e}, {hi:e}] skipped: {e}"),
                }
            }
            convergence::emit(&table, &out).map_err(|e| format!("write {}: {e}", out.display()))?;
            if plotdata {
                let pd_path = out.with_extension("plot.csv");
                std::fs::write(&pd_path, convergence::to_plotdata(&table))
                    .map_err(|e| format!("write {}: {e}", pd_path.display()))?;
            }
            println!("rows: {}", table.rows.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Search { s, p, q, restarts, seed, out } => {
            let mut config = search::SearchConfig::new(s, p, q).map_err(|e| e.to_string())?;
            config.restarts = restarts;
            config.rng_seed = seed;
            let result = search::run_search(&config).map_err(|e| e.to_string())?;
            search::save_pool(&out, &result).map_err(|e| format!("write pool: {e}"))?;
            println!(
                "restarts: {}\nequality_feasible: {}\nfully_feasible: {}\npareto: {}",
                result.restarts_attempted,
                result.equality_feasible,
                result.candidates.len(),
                result.pareto.len()
            );
            for (i, c) in result.candidates.iter().enumerate() {
                println!(
                    "candidate {i}: restart {} F {:.17e} max|a| {:.6} fine_a_stable {}{}",
                    c.restart,
                    c.f_value,
                    c.tableau.max_coeff(),
                    c.fine_a_stable,
                    if result.pareto.contains(&i) { " [pareto]" } else { "" }
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Export { scheme, format, out } => {
            let t = resolve_scheme(&scheme)?;
            let text = match format.as_str() {
                "text" => tableau::to_text(&t),
                "csv" => tableau::to_csv(&t),
                other => return Err(format!("unknown format `{other}` (text|csv)")),
            };
            match out {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|e| format!("write {}: {e}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
