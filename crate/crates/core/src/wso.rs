//! Weak stage order: stage-order residuals, the Krylov space they generate,
//! WSO detection, minimal-polynomial structure checks, and the resolvent
//! transfer function.
//!
//! The `k`-th stage order residual is `tau^(k) = A c^{k-1} - c^k / k`. The
//! weak stage order of `(A, b)` is the largest `q` such that `b` is orthogonal
//! to the `A`-invariant space spanned by `A^j tau^(k)` for `j <= s-1`,
//! `k <= q`. Because `c` is stored as the exact row sums of `A`, `tau^(1)` is
//! identically zero and every valid tableau has WSO at least 1.

use crate::stability;
use crate::tableau::Tableau;
use nalgebra::{Complex, DMatrix};
use thiserror::Error;

pub type Complex64 = Complex<f64>;

/// Relative orthogonality tolerance for WSO detection.
pub const WSO_TOL: f64 = 1e-8;

/// Relative singular-value cutoff for the Krylov-space rank.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Stage order residuals `tau^(k)`, `k = 1..=K`.
#[derive(Clone, Debug)]
pub struct StageResiduals {
    /// `tau[k-1]` holds the length-`s` vector `tau^(k)`.
    pub tau: Vec<Vec<f64>>,
}

/// Componentwise evaluation of `tau^(k) = A c^{k-1} - c^k / k` for `k = 1..=k_max`.
pub fn stage_residuals(t: &Tableau, k_max: usize) -> StageResiduals {
    let s = t.s();
    let c = t.c();
    let mut cpow = vec![1.0; s]; // c^0
    let mut tau = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut ac = vec![0.0; s];
        t.apply_a(&cpow, &mut ac);
        let mut cnext = vec![0.0; s];
        for i in 0..s {
            cnext[i] = cpow[i] * c[i];
        }
        let v: Vec<f64> = (0..s).map(|i| ac[i] - cnext[i] / k as f64).collect();
        tau.push(v);
        cpow = cnext;
    }
    StageResiduals { tau }
}

/// Achieved weak stage order: a finite value, or unbounded when every probe up
/// to the cap `s + 6` passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wso {
    Finite(usize),
    Unbounded,
}

impl Wso {
    /// The numeric value used in formulas (the cap for unbounded).
    pub fn value_or(&self, cap: usize) -> usize {
        match self {
            Wso::Finite(q) => *q,
            Wso::Unbounded => cap,
        }
    }
}

impl std::fmt::Display for Wso {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Wso::Finite(q) => write!(f, "{q}"),
            Wso::Unbounded => write!(f, "inf"),
        }
    }
}

/// Structure report for the Krylov space `K_q`.
#[derive(Clone, Debug)]
pub struct KrylovReport {
    pub q: Wso,
    /// `q` clamped to the probe cap; generators below use `k <= q_effective`.
    pub q_effective: usize,
    /// Numerical rank of the generator collection.
    pub dim_kq: usize,
    /// Degree of the minimal polynomial of `A` restricted to the computed basis.
    pub min_poly_degree: usize,
    pub min_poly_roots: Vec<Complex64>,
    /// `max_{j<=s-1, k<=q_effective} |b^T A^j tau^(k)|` (unscaled).
    pub orthogonality_residual: f64,
    /// `||A W - W B||_inf` for the fitted basis relation (invariance check).
    pub invariance_residual: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn a_inf_norm(t: &Tableau) -> f64 {
    (0..t.s())
        .map(|i| t.a_row(i)[..=i].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Weak stage order with probes up to `k_max`.
///
/// For each `k` the orthogonality `|b^T A^j tau^(k)|` is tested against
/// `WSO_TOL * max(1, ||b||_inf ||A||_inf^j ||tau^(k)||_inf)`; the scaled form
/// keeps the test meaningful for schemes with large coefficients.
pub fn wso_of(t: &Tableau, k_max: usize) -> KrylovReport {
    let s = t.s();
    let res = stage_residuals(t, k_max);
    let bn = inf_norm(t.b());
    let an = a_inf_norm(t);
    let mut q = 0usize;
    let mut worst = 0.0f64;
    'outer: for k in 1..=k_max {
        let tk = &res.tau[k - 1];
        let tn = inf_norm(tk);
        let mut v = tk.clone();
        let mut apow = 1.0f64;
        for _j in 0..s {
            let dot: f64 = t.b().iter().zip(&v).map(|(b, x)| b * x).sum();
            let scale = (bn * apow * tn).max(1.0);
            if dot.abs() > WSO_TOL * scale {
                break 'outer;
            }
            worst = worst.max(dot.abs());
            let mut next = vec![0.0; s];
            t.apply_a(&v, &mut next);
            v = next;
            apow *= an;
        }
        q = k;
    }
    let q_effective = q;
    let wso = if q == k_max && k_max >= s + 6 {
        Wso::Unbounded
    } else {
        Wso::Finite(q)
    };

    // Krylov generator collection for k <= q_effective.
    let cols = s * q_effective.max(0);
    let mut gen = DMatrix::<f64>::zeros(s, cols.max(1));
    let mut col = 0;
    for k in 1..=q_effective {
        let mut v = res.tau[k - 1].clone();
        for _j in 0..s {
            for i in 0..s {
                gen[(i, col)] = v[i];
            }
            col += 1;
            let mut next = vec![0.0; s];
            t.apply_a(&v, &mut next);
            v = next;
        }
    }
    let svd = nalgebra::SVD::new(gen.clone(), true, false);
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0f64, |m, x| m.max(*x));
    let dim_kq = if smax == 0.0 {
        0
    } else {
        sv.iter().filter(|x| **x > RANK_CUTOFF * smax).count()
    };

    let (min_poly_degree, min_poly_roots, invariance_residual) = if dim_kq == 0 {
        (0, Vec::new(), 0.0)
    } else {
        let u = svd.u.as_ref().expect("svd with u");
        let w = u.columns(0, dim_kq).into_owned();
        // restriction B = W^T A W of the A-action to the basis
        let amat = {
            let mut m = DMatrix::<f64>::zeros(s, s);
            for i in 0..s {
                for j in 0..=i {
                    m[(i, j)] = t.a(i, j);
                }
            }
            m
        };
        let aw = &amat * &w;
        let bmat = w.transpose() * &aw;
        let inv_res = (&aw - &w * &bmat).abs().max();
        let (deg, roots) = minimal_polynomial(&bmat);
        (deg, roots, inv_res)
    };

    KrylovReport {
        q: wso,
        q_effective,
        dim_kq,
        min_poly_degree,
        min_poly_roots,
        orthogonality_residual: worst,
        invariance_residual,
    }
}

/// Default probe cap `s + 6`.
pub fn wso_of_default(t: &Tableau) -> KrylovReport {
    wso_of(t, t.s() + 6)
}

/// Smallest-degree monic polynomial annihilating `B`, found by testing
/// successive powers for linear dependence; roots come from the companion
/// matrix.
fn minimal_polynomial(b: &DMatrix<f64>) -> (usize, Vec<Complex64>) {
    let d = b.nrows();
    let mut powers: Vec<DMatrix<f64>> = vec![DMatrix::identity(d, d)];
    for _ in 0..d {
        let last = powers.last().unwrap();
        powers.push(b * last);
    }
    for deg in 1..=d {
        // solve min || sum_{i<deg} x_i vec(B^i) + vec(B^deg) ||
        let mut m = DMatrix::<f64>::zeros(d * d, deg);
        for (i, p) in powers.iter().take(deg).enumerate() {
            for (r, v) in p.iter().enumerate() {
                m[(r, i)] = *v;
            }
        }
        let rhs = nalgebra::DVector::<f64>::from_iterator(d * d, powers[deg].iter().copied());
        let svd = nalgebra::SVD::new(m.clone(), true, true);
        if let Ok(x) = svd.solve(&(-&rhs), 1e-13) {
            let residual = (&m * &x + &rhs).abs().max();
            let scale = powers[deg].abs().max().max(1.0);
            if residual <= 1e-8 * scale {
                let roots = monic_roots(x.as_slice());
                return (deg, roots);
            }
        }
    }
    // minimal polynomial = characteristic polynomial
    let eig = b.clone().complex_eigenvalues();
    (d, eig.iter().copied().collect())
}

/// Roots of the monic polynomial with ascending low-order coefficients `coeffs`.
fn monic_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let deg = coeffs.len();
    match deg {
        0 => Vec::new(),
        1 => vec![Complex64::new(-coeffs[0], 0.0)],
        2 => {
            let (c0, c1) = (coeffs[0], coeffs[1]);
            let disc = Complex64::new(c1 * c1 - 4.0 * c0, 0.0).sqrt();
            let c1c = Complex64::new(c1, 0.0);
            vec![(-c1c + disc) * 0.5, (-c1c - disc) * 0.5]
        }
        _ => {
            let mut comp = DMatrix::<f64>::zeros(deg, deg);
            for i in 1..deg {
                comp[(i, i - 1)] = 1.0;
            }
            for i in 0..deg {
                comp[(i, deg - 1)] = -coeffs[i];
            }
            comp.complex_eigenvalues().iter().copied().collect()
        }
    }
}

/// Result of the explicit minimal-polynomial residual check.
#[derive(Clone, Debug)]
pub struct MinPolyCheck {
    pub pass: bool,
    pub residual: f64,
    /// Degree of the annihilator actually tested (2 for schemes with WSO >= 4).
    pub degree_checked: usize,
}

/// Check that the expected annihilator kills the stage residuals.
///
/// For `q >= 4` the annihilator must be `(A - a11 I)(A - a22 I)`; the check
/// reports `max_k ||(A - a11 I)(A - a22 I) tau^(k)||_inf` over `k = 2..=q`.
/// For `q <= 3` a degree-1 annihilator `(A - a_ii I)` is tried over every
/// diagonal entry and the best residual is reported.
pub fn verify_min_poly(t: &Tableau, q: usize) -> MinPolyCheck {
    let s = t.s();
    if q < 2 {
        return MinPolyCheck { pass: true, residual: 0.0, degree_checked: 0 };
    }
    let res = stage_residuals(t, q);
    let apply_shifted = |v: &[f64], shift: f64| -> Vec<f64> {
        let mut av = vec![0.0; s];
        t.apply_a(v, &mut av);
        (0..s).map(|i| av[i] - shift * v[i]).collect()
    };
    if q >= 4 {
        let (a11, a22) = (t.a(0, 0), t.a(1, 1));
        let mut worst = 0.0f64;
        for k in 2..=q {
            let w = apply_shifted(&apply_shifted(&res.tau[k - 1], a22), a11);
            worst = worst.max(inf_norm(&w));
        }
        MinPolyCheck { pass: worst <= WSO_TOL, residual: worst, degree_checked: 2 }
    } else {
        let mut best = f64::INFINITY;
        for i in 0..s {
            let shift = t.a(i, i);
            let mut worst = 0.0f64;
            for k in 2..=q {
                worst = worst.max(inf_norm(&apply_shifted(&res.tau[k - 1], shift)));
            }
            best = best.min(worst);
        }
        MinPolyCheck { pass: best <= WSO_TOL, residual: best, degree_checked: 1 }
    }
}

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("resolvent is singular: z * a_{{{i},{i}}} = 1")]
    SingularResolvent { i: usize },
    #[error("R(z) = 1: transfer function W_k is undefined at this z")]
    AtFixedPoint,
}

/// The problematic stiff error functional `b^T (I - z A)^{-1} tau^(k)`,
/// evaluated by forward substitution on the lower-triangular resolvent.
pub fn transfer(t: &Tableau, k: usize, z: Complex64) -> Result<Complex64, TransferError> {
    let s = t.s();
    let res = stage_residuals(t, k);
    let tk = &res.tau[k - 1];
    let mut x = vec![Complex64::new(0.0, 0.0); s];
    for i in 0..s {
        let denom = Complex64::new(1.0, 0.0) - z * t.a(i, i);
        if denom.norm() < 1e-300 {
            return Err(TransferError::SingularResolvent { i });
        }
        let mut rhs = Complex64::new(tk[i], 0.0);
        for j in 0..i {
            rhs += z * t.a(i, j) * x[j];
        }
        x[i] = rhs / denom;
    }
    let mut out = Complex64::new(0.0, 0.0);
    for i in 0..s {
        out += t.b()[i] * x[i];
    }
    Ok(out)
}

/// Normalized transfer function `W_k(z) = k b^T (I - zA)^{-1} tau^(k) / (R(z) - 1)`.
pub fn transfer_w(t: &Tableau, k: usize, z: Complex64) -> Result<Complex64, TransferError> {
    let raw = transfer(t, k, z)?;
    let r = stability::r_at(t, z).map_err(|_| TransferError::SingularResolvent { i: 0 })?;
    let denom = r - Complex64::new(1.0, 0.0);
    if denom.norm() < 1e-14 {
        return Err(TransferError::AtFixedPoint);
    }
    Ok(raw * k as f64 / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::builtin;

    #[test]
    fn tau1_identically_zero() {
        for name in crate::tableau::BUILTIN_NAMES {
            let t = builtin(name).unwrap();
            let r = stage_residuals(&t, 1);
            assert!(r.tau[0].iter().all(|v| *v == 0.0), "{name}");
        }
    }

    #[test]
    fn backward_euler_tau2() {
        let t = builtin("backward_euler").unwrap();
        let r = stage_residuals(&t, 2);
        assert_eq!(r.tau[1], vec![0.5]);
    }

    #[test]
    fn implicit_midpoint_tau2() {
        let t = crate::tableau::validate(&[vec![0.5]], &[1.0], "midpoint").unwrap();
        let r = stage_residuals(&t, 2);
        assert!((r.tau[1][0] - 0.125).abs() < 1e-16);
    }

    #[test]
    fn crank_nicolson_tau3() {
        let t = builtin("crank_nicolson_dirk").unwrap();
        let r = stage_residuals(&t, 3);
        assert_eq!(r.tau[1], vec![0.0, 0.0]);
        assert!((r.tau[2][0]).abs() < 1e-16);
        assert!((r.tau[2][1] - 1.0 / 6.0).abs() < 1e-16);
    }

    #[test]
    fn wso_of_backward_euler() {
        let t = builtin("backward_euler").unwrap();
        let rep = wso_of_default(&t);
        assert_eq!(rep.q, Wso::Finite(1));
        assert_eq!(rep.dim_kq, 0);
        assert_eq!(rep.min_poly_degree, 0);
    }

    #[test]
    fn wso_of_crank_nicolson() {
        // b^T tau^(3) = 1/12 != 0
        let t = builtin("crank_nicolson_dirk").unwrap();
        let rep = wso_of_default(&t);
        assert_eq!(rep.q, Wso::Finite(2));
    }

    #[test]
    fn wso_of_dirk744() {
        let t = builtin("dirk744").unwrap();
        let rep = wso_of_default(&t);
        assert_eq!(rep.q, Wso::Finite(4));
        assert_eq!(rep.dim_kq, 2);
        assert_eq!(rep.min_poly_degree, 2);
        // roots are the first two diagonal entries
        let mut diag = [t.a(0, 0), t.a(1, 1)];
        diag.sort_by(f64::total_cmp);
        let mut roots: Vec<f64> = rep.min_poly_roots.iter().map(|z| z.re).collect();
        roots.sort_by(f64::total_cmp);
        for (r, d) in roots.iter().zip(diag.iter()) {
            assert!((r - d).abs() < 1e-6, "root {r} vs diagonal {d}");
        }
        assert!(rep.min_poly_roots.iter().all(|z| z.im.abs() < 1e-8));
        assert!(rep.invariance_residual < 1e-8);
    }

    #[test]
    fn wso_of_high_order_schemes() {
        let t = builtin("dirk1254").unwrap();
        assert_eq!(wso_of_default(&t).q, Wso::Finite(4));
        let t = builtin("dirk1255").unwrap();
        let rep = wso_of_default(&t);
        assert_eq!(rep.q, Wso::Finite(5));
        assert_eq!(rep.dim_kq, 2);
    }

    #[test]
    fn explicit_euler_unbounded_wso() {
        // A = [[0]]: every tau^(k) vanishes, so the probe cap is reached
        let t = crate::tableau::validate(&[vec![0.0]], &[1.0], "euler").unwrap();
        assert_eq!(wso_of_default(&t).q, Wso::Unbounded);
    }

    #[test]
    fn verify_min_poly_dirk744() {
        let t = builtin("dirk744").unwrap();
        let chk = verify_min_poly(&t, 4);
        assert!(chk.pass, "residual {}", chk.residual);
        assert!(chk.residual <= 1e-8);
        assert_eq!(chk.degree_checked, 2);
    }

    #[test]
    fn verify_min_poly_dirk1255() {
        let t = builtin("dirk1255").unwrap();
        let chk = verify_min_poly(&t, 5);
        assert!(chk.pass, "residual {}", chk.residual);
    }

    #[test]
    fn verify_min_poly_trivial_for_q1() {
        let t = builtin("backward_euler").unwrap();
        let chk = verify_min_poly(&t, 1);
        assert!(chk.pass);
        assert_eq!(chk.residual, 0.0);
    }

    #[test]
    fn transfer_backward_euler() {
        let t = builtin("backward_euler").unwrap();
        let v = transfer(&t, 2, Complex64::new(-1.0, 0.0)).unwrap();
        assert!((v - Complex64::new(0.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn transfer_zero_residual_is_zero() {
        let t = builtin("crank_nicolson_dirk").unwrap();
        // tau^(2) = 0 for Crank-Nicolson
        for z in [Complex64::new(-3.0, 1.0), Complex64::new(0.5, -2.0)] {
            let v = transfer(&t, 2, z).unwrap();
            assert!(v.norm() < 1e-14);
        }
    }

    #[test]
    fn transfer_pole_detected() {
        let t = builtin("backward_euler").unwrap();
        assert!(transfer(&t, 2, Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn transfer_w_vanishes_for_wso5() {
        let t = builtin("dirk1255").unwrap();
        // WSO 5 forces the rational function to vanish identically in the left half-plane
        let mut worst = 0.0f64;
        for i in 0..20 {
            let y = -3.0 + 0.31 * i as f64;
            let z = Complex64::new(-0.2 - 0.45 * i as f64, y);
            let v = transfer(&t, 5, z).unwrap();
            worst = worst.max(v.norm());
        }
        assert!(worst <= 1e-8, "worst {worst}");
    }
}
