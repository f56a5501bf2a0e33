//! Stability function evaluation, A-/L-stability scans, and stability-region
//! boundary tracing.
//!
//! `R(z) = 1 + z b^T (I - zA)^{-1} e` is evaluated by forward substitution on
//! the lower-triangular resolvent (O(s^2)); a determinant-ratio form of the
//! same function is provided as an independent cross-check.

use crate::tableau::Tableau;
use nalgebra::{Complex, DMatrix};
use thiserror::Error;

pub type Complex64 = Complex<f64>;

#[derive(Debug, Error)]
#[error("resolvent pole: z * a_{{{i},{i}}} = 1")]
pub struct ResolventPole {
    pub i: usize,
}

/// Stability function via forward substitution.
pub fn r_at(t: &Tableau, z: Complex64) -> Result<Complex64, ResolventPole> {
    let s = t.s();
    let one = Complex64::new(1.0, 0.0);
    let mut x = vec![Complex64::new(0.0, 0.0); s];
    for i in 0..s {
        let denom = one - z * t.a(i, i);
        if denom.norm() < 1e-300 {
            return Err(ResolventPole { i });
        }
        let mut rhs = one;
        for j in 0..i {
            rhs += z * t.a(i, j) * x[j];
        }
        x[i] = rhs / denom;
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..s {
        acc += t.b()[i] * x[i];
    }
    Ok(one + z * acc)
}

/// Stability function via the determinant ratio
/// `det(I - zA + z e b^T) / det(I - zA)`.
pub fn r_at_det(t: &Tableau, z: Complex64) -> Result<Complex64, ResolventPole> {
    let s = t.s();
    let one = Complex64::new(1.0, 0.0);
    let mut denom = one;
    for i in 0..s {
        let f = one - z * t.a(i, i);
        if f.norm() < 1e-300 {
            return Err(ResolventPole { i });
        }
        denom *= f;
    }
    let mut m = DMatrix::<Complex64>::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            let mut v = -z * t.a(i, j) + z * t.b()[j];
            if i == j {
                v += one;
            }
            m[(i, j)] = v;
        }
    }
    let numer = m.lu().determinant();
    Ok(numer / denom)
}

/// Sampled A-/L-stability verdict.
#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub a_stable: bool,
    pub l_stable: bool,
    /// Largest sampled `|R(iy)|`.
    pub max_imag_axis_modulus: f64,
    /// `|R(z)|` at `z = -1e12`.
    pub r_at_minus_inf: f64,
    /// All diagonal entries nonnegative.
    pub diag_nonneg: bool,
    pub sample_count: usize,
}

/// Grid density of the sampled A-stability checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanMode {
    /// 128 points: y = 0 and 127 log-spaced in `[1e-3, 1e3]`; cheap enough
    /// for optimization inner loops.
    Coarse,
    /// 1e5 points `y = tan(theta)`, `theta` uniform in `(-pi/2, pi/2)`, plus
    /// `y = 0`: covers the whole imaginary axis uniformly in angle.
    Fine,
}

/// Imaginary-axis sample values for a scan mode.
pub fn scan_samples(mode: ScanMode) -> Vec<f64> {
    match mode {
        ScanMode::Coarse => {
            let mut ys = vec![0.0];
            let (lo, hi, m) = (1e-3f64, 1e3f64, 127usize);
            for i in 0..m {
                let f = i as f64 / (m - 1) as f64;
                ys.push(lo * (hi / lo).powf(f));
            }
            ys
        }
        ScanMode::Fine => {
            let m = 100_000usize;
            let mut ys = Vec::with_capacity(m + 1);
            ys.push(0.0);
            for i in 0..m {
                let theta = -std::f64::consts::FRAC_PI_2
                    + std::f64::consts::PI * (i as f64 + 0.5) / m as f64;
                ys.push(theta.tan());
            }
            ys
        }
    }
}

/// A-stability by sampling `|R(iy)|` plus the diagonal sign condition;
/// L-stability adds a numerical probe at `z = -1e12`.
pub fn check_a_stability(t: &Tableau, mode: ScanMode) -> StabilityReport {
    let ys = scan_samples(mode);
    let mut max_mod = 0.0f64;
    for &y in &ys {
        if let Ok(r) = r_at(t, Complex64::new(0.0, y)) {
            max_mod = max_mod.max(r.norm());
        } else {
            max_mod = f64::INFINITY;
        }
    }
    let r_inf = r_at(t, Complex64::new(-1e12, 0.0))
        .map(|r| r.norm())
        .unwrap_or(f64::INFINITY);
    let diag_nonneg = (0..t.s()).all(|i| t.a(i, i) >= 0.0);
    let a_stable = diag_nonneg && max_mod <= 1.0 + 1e-8;
    let l_stable = a_stable && r_inf <= 1e-8;
    StabilityReport {
        a_stable,
        l_stable,
        max_imag_axis_modulus: max_mod,
        r_at_minus_inf: r_inf,
        diag_nonneg,
        sample_count: ys.len(),
    }
}

/// Rectangular window and resolution for boundary tracing.
#[derive(Clone, Copy, Debug)]
pub struct Window {
    pub re: (f64, f64),
    pub im: (f64, f64),
    /// Grid cells per axis.
    pub nx: usize,
    pub ny: usize,
}

impl Window {
    pub fn new(re: (f64, f64), im: (f64, f64), nx: usize, ny: usize) -> Self {
        assert!(re.1 > re.0 && im.1 > im.0 && nx >= 2 && ny >= 2);
        Window { re, im, nx, ny }
    }
}

/// Trace the level set `|R(z)| = 1` over the window with marching squares.
///
/// Returns stitched polylines; an empty result means no boundary crosses the
/// window. Cells containing a resolvent pole are skipped.
pub fn region_boundary(t: &Tableau, window: &Window) -> Vec<Vec<Complex64>> {
    let (nx, ny) = (window.nx, window.ny);
    let dx = (window.re.1 - window.re.0) / nx as f64;
    let dy = (window.im.1 - window.im.0) / ny as f64;
    // f = |R| - 1 on grid nodes
    let mut f = vec![f64::NAN; (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            let z = Complex64::new(window.re.0 + i as f64 * dx, window.im.0 + j as f64 * dy);
            if let Ok(r) = r_at(t, z) {
                f[j * (nx + 1) + i] = r.norm() - 1.0;
            }
        }
    }

    // collect crossing segments per cell
    let mut segments: Vec<(Complex64, Complex64)> = Vec::new();
    let interp = |pa: Complex64, pb: Complex64, fa: f64, fb: f64| -> Complex64 {
        let w = fa / (fa - fb);
        pa + (pb - pa) * w.clamp(0.0, 1.0)
    };
    for j in 0..ny {
        for i in 0..nx {
            let idx = [j * (nx + 1) + i, j * (nx + 1) + i + 1, (j + 1) * (nx + 1) + i + 1, (j + 1) * (nx + 1) + i];
            let fv = [f[idx[0]], f[idx[1]], f[idx[2]], f[idx[3]]];
            if fv.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let x0 = window.re.0 + i as f64 * dx;
            let y0 = window.im.0 + j as f64 * dy;
            let corner = [
                Complex64::new(x0, y0),
                Complex64::new(x0 + dx, y0),
                Complex64::new(x0 + dx, y0 + dy),
                Complex64::new(x0, y0 + dy),
            ];
            let mut pts = Vec::new();
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if (fv[a] < 0.0) != (fv[b] < 0.0) {
                    pts.push(interp(corner[a], corner[b], fv[a], fv[b]));
                }
            }
            if pts.len() == 2 {
                segments.push((pts[0], pts[1]));
            } else if pts.len() == 4 {
                // ambiguous saddle: split by pairing consecutive crossings
                segments.push((pts[0], pts[1]));
                segments.push((pts[2], pts[3]));
            }
        }
    }

    stitch(segments, dx.min(dy) * 1e-6)
}

/// Join segments sharing endpoints into polylines (deterministic order).
fn stitch(segments: Vec<(Complex64, Complex64)>, tol: f64) -> Vec<Vec<Complex64>> {
    let n = segments.len();
    let mut used = vec![false; n];
    let close = |a: Complex64, b: Complex64| (a - b).norm() <= tol;
    let mut out = Vec::new();
    for start in 0..n {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut chain = vec![segments[start].0, segments[start].1];
        loop {
            let tail = *chain.last().unwrap();
            let mut extended = false;
            for k in 0..n {
                if used[k] {
                    continue;
                }
                let (a, b) = segments[k];
                if close(a, tail) {
                    chain.push(b);
                    used[k] = true;
                    extended = true;
                    break;
                } else if close(b, tail) {
                    chain.push(a);
                    used[k] = true;
                    extended = true;
                    break;
                }
            }
            if !extended {
                break;
            }
        }
        // try extending backwards from the head
        loop {
            let head = chain[0];
            let mut extended = false;
            for k in 0..n {
                if used[k] {
                    continue;
                }
                let (a, b) = segments[k];
                if close(a, head) {
                    chain.insert(0, b);
                    used[k] = true;
                    extended = true;
                    break;
                } else if close(b, head) {
                    chain.insert(0, a);
                    used[k] = true;
                    extended = true;
                    break;
                }
            }
            if !extended {
                break;
            }
        }
        out.push(chain);
    }
    out
}

/// CSV export of boundary polylines: header `re,im`, one blank line between
/// polylines.
pub fn boundary_csv(polylines: &[Vec<Complex64>]) -> String {
    let mut out = String::from("re,im\n");
    for (k, line) in polylines.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        for p in line {
            out.push_str(&format!("{:.17e},{:.17e}\n", p.re, p.im));
        }
    }
    out
}

/// Minimal SVG with one polyline per chain; the viewBox matches the window at
/// unit scale (imaginary axis flipped to screen coordinates).
pub fn boundary_svg(polylines: &[Vec<Complex64>], window: &Window) -> String {
    let w = window.re.1 - window.re.0;
    let h = window.im.1 - window.im.0;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\">\n",
        window.re.0, -window.im.1, w, h
    );
    for line in polylines {
        let pts: Vec<String> = line.iter().map(|p| format!("{},{}", p.re, -p.im)).collect();
        out.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"black\" stroke-width=\"{}\" points=\"{}\"/>\n",
            0.01 * w.min(h),
            pts.join(" ")
        ));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::{builtin, validate};

    #[test]
    fn r_backward_euler() {
        let t = builtin("backward_euler").unwrap();
        let r = r_at(&t, Complex64::new(-1.0, 0.0)).unwrap();
        assert!((r - Complex64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn r_at_zero_is_one() {
        for name in crate::tableau::BUILTIN_NAMES {
            let t = builtin(name).unwrap();
            let r = r_at(&t, Complex64::new(0.0, 0.0)).unwrap();
            assert!((r - Complex64::new(1.0, 0.0)).norm() < 1e-15, "{name}");
        }
    }

    #[test]
    fn midpoint_unimodular_on_imaginary_axis() {
        let t = validate(&[vec![0.5]], &[1.0], "midpoint").unwrap();
        for y in [0.5, 1.0, 2.0] {
            let r = r_at(&t, Complex64::new(0.0, y)).unwrap();
            assert!((r.norm() - 1.0).abs() < 1e-14, "y={y}");
        }
    }

    #[test]
    fn forward_and_determinant_forms_agree() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for name in crate::tableau::BUILTIN_NAMES {
            let t = builtin(name).unwrap();
            for _ in 0..50 {
                let z = Complex64::new(rng.gen_range(-30.0..5.0), rng.gen_range(-30.0..30.0));
                let r1 = r_at(&t, z).unwrap();
                let r2 = r_at_det(&t, z).unwrap();
                let scale = r1.norm().max(1.0);
                assert!((r1 - r2).norm() <= 1e-10 * scale, "{name} at {z}");
            }
        }
    }

    #[test]
    fn pole_detected() {
        let t = builtin("backward_euler").unwrap();
        assert!(r_at(&t, Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn dirk744_l_stable() {
        let rep = check_a_stability(&builtin("dirk744").unwrap(), ScanMode::Coarse);
        assert!(rep.a_stable);
        assert!(rep.l_stable);
        assert!(rep.r_at_minus_inf <= 1e-10);
    }

    #[test]
    fn midpoint_a_stable_not_l_stable() {
        let t = validate(&[vec![0.5]], &[1.0], "midpoint").unwrap();
        let rep = check_a_stability(&t, ScanMode::Coarse);
        assert!(rep.a_stable);
        assert!(!rep.l_stable);
        assert!((rep.r_at_minus_inf - 1.0).abs() < 1e-6);
    }

    #[test]
    fn explicit_euler_not_a_stable() {
        let t = validate(&[vec![0.0]], &[1.0], "euler").unwrap();
        let rep = check_a_stability(&t, ScanMode::Coarse);
        assert!(!rep.a_stable);
        assert!(rep.max_imag_axis_modulus > 2.0); // |R(2i)| = sqrt(5)
    }

    #[test]
    fn stiffly_accurate_r_decays_to_zero() {
        // needs invertible A; Crank-Nicolson (a11 = 0) tends to -1 instead
        for name in ["backward_euler", "dirk541", "dirk744", "dirk1254", "dirk1255"] {
            let t = builtin(name).unwrap();
            let r6 = r_at(&t, Complex64::new(-1e6, 0.0)).unwrap().norm();
            let r12 = r_at(&t, Complex64::new(-1e12, 0.0)).unwrap().norm();
            assert!(r6 >= r12, "{name}");
            assert!(r12 <= 1e-5, "{name}: {r12}");
        }
    }

    #[test]
    fn imaginary_axis_symmetry() {
        let t = builtin("dirk1255").unwrap();
        for y in [0.3, 2.0, 17.0] {
            let rp = r_at(&t, Complex64::new(0.0, y)).unwrap().norm();
            let rm = r_at(&t, Complex64::new(0.0, -y)).unwrap().norm();
            assert!((rp - rm).abs() < 1e-13);
        }
    }

    #[test]
    fn boundary_backward_euler_is_unit_circle_at_one() {
        let t = builtin("backward_euler").unwrap();
        let win = Window::new((-1.0, 3.0), (-2.0, 2.0), 160, 160);
        let lines = region_boundary(&t, &win);
        assert!(!lines.is_empty());
        let mut count = 0;
        for line in &lines {
            for p in line {
                let dist = ((p - Complex64::new(1.0, 0.0)).norm() - 1.0).abs();
                assert!(dist < 0.05, "point {p} off circle by {dist}");
                count += 1;
            }
        }
        assert!(count > 50);
    }

    #[test]
    fn boundary_empty_window() {
        // |R| = |1/(1-z)| = 1 never holds for Re z < -5 in this window
        let t = builtin("backward_euler").unwrap();
        let win = Window::new((-10.0, -5.0), (-1.0, 1.0), 40, 40);
        assert!(region_boundary(&t, &win).is_empty());
    }

    #[test]
    fn csv_and_svg_forms() {
        let t = builtin("backward_euler").unwrap();
        let win = Window::new((-1.0, 3.0), (-2.0, 2.0), 40, 40);
        let lines = region_boundary(&t, &win);
        let csv = boundary_csv(&lines);
        assert!(csv.starts_with("re,im\n"));
        let svg = boundary_svg(&lines, &win);
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("viewBox=\"-1 -2 4 4\""));
    }
}
