//! Closed-form construction of the leading 3x3 block of a high-WSO DIRK
//! scheme on the distinct-eigenvalue branch.
//!
//! Eliminating the eigenvector components turns the row-3 collinearity
//! conditions `tau^(k)_3 = beta1 w1_3 + beta2 w2_3` (k = 2..q) into moment
//! conditions `Lam[g_k] = 0` for the functional
//! `Lam[f] = mu1 f(d1) + mu2 f(c2) + f(c3)` with `g_k(t) = d3 t^{k-1} - t^k/k`,
//! where `d_i` are the diagonal entries and `c_i` the abscissae. Eliminating
//! `mu1` gives `mu2 h_k(c2) + h_k(c3) = 0` with
//! `h_k(t) = g_k(t) + (t - d3) g_k(d1)/(d3 - d1)`; every `h_k` has a root at
//! `t = d1` (the confluent branch, deflated away), and the deflated cross
//! ratios reduce to symmetric polynomials `J_k(sigma, pi)` in
//! `sigma = c2 + c3`, `pi = c2 c3`:
//!
//! * `J_3 = 0` is linear in `(sigma, pi)`,
//! * substituting it into `J_4 = 0` cancels the quadratic term exactly,
//!   leaving a single linear equation for `sigma`,
//! * for weak stage order 5, `J_5(sigma(d1,d3), pi(d1,d3)) = 0` is one extra
//!   scalar equation linking `d1` and `d3`, solved numerically for `d3`.

/// Ascending coefficients of `g_k(t) = d3 t^{k-1} - t^k / k`.
fn g_poly(k: usize, d3: f64) -> Vec<f64> {
    let mut co = vec![0.0; k + 1];
    co[k - 1] += d3;
    co[k] -= 1.0 / k as f64;
    co
}

fn polyval(co: &[f64], t: f64) -> f64 {
    co.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// `h_k(t) = g_k(t) + e_k (t - d3)` with `e_k = g_k(d1)/(d3 - d1)`.
fn h_poly(k: usize, d1: f64, d3: f64) -> Vec<f64> {
    let g = g_poly(k, d3);
    let e = polyval(&g, d1) / (d3 - d1);
    let mut co = g;
    co[0] -= e * d3;
    co[1] += e;
    co
}

/// Synthetic division of `h_k` by its root at `t = d1`.
fn hhat_poly(k: usize, d1: f64, d3: f64) -> Vec<f64> {
    let h = h_poly(k, d1, d3);
    let n = h.len();
    let mut q = vec![0.0; n - 1];
    let mut carry = h[n - 1];
    for i in (0..n - 1).rev() {
        q[i] = carry;
        carry = h[i] + carry * d1;
    }
    q
}

/// Deflated symmetric cross-ratio residual `J_k(sigma, pi)`.
pub fn j_k(k: usize, d1: f64, d3: f64, sigma: f64, pi: f64) -> f64 {
    let a = hhat_poly(k, d1, d3);
    let r2 = d3 * (2.0 * d3 - d1) / (d3 - d1);
    // complete homogeneous symmetric polynomials S_j(c2, c3)
    let mut s = vec![1.0, sigma];
    while s.len() <= a.len() {
        let last = s[s.len() - 1];
        let prev = s[s.len() - 2];
        s.push(sigma * last - pi * prev);
    }
    let mut val = a[0];
    for m in 2..a.len() {
        val -= pi * a[m] * s[m - 2];
    }
    for m in 1..a.len() {
        val += r2 * a[m] * s[m - 1];
    }
    val
}

/// Unique `(sigma, pi)` solving `J_3 = J_4 = 0` for the given diagonals.
pub fn sigma_pi_q4(d1: f64, d3: f64) -> Option<(f64, f64)> {
    if !d1.is_finite() || !d3.is_finite() || (d3 - d1).abs() < 1e-9 {
        return None;
    }
    let r2 = d3 * (2.0 * d3 - d1) / (d3 - d1);
    let a3 = hhat_poly(3, d1, d3);
    let a4 = hhat_poly(4, d1, d3);
    if a3[2].abs() < 1e-14 {
        return None;
    }
    // J_3 = a3[0] + r2 a3[1] + r2 a3[2] sigma - a3[2] pi  =>  pi = pi0 + r2 sigma
    let pi0 = (a3[0] + r2 * a3[1]) / a3[2];
    // substituting into J_4 cancels the sigma^2 term, leaving c0 + c1 sigma = 0
    let c0 = a4[0] + r2 * a4[1] - pi0 * a4[2] - r2 * a4[3] * pi0;
    let c1 = -a4[3] * (pi0 + r2 * r2);
    if c1.abs() < 1e-13 {
        return None;
    }
    let sigma = -c0 / c1;
    let pi = pi0 + r2 * sigma;
    if sigma.is_finite() && pi.is_finite() {
        Some((sigma, pi))
    } else {
        None
    }
}

/// Residual of the fifth-order collinearity condition on the `q = 4` branch;
/// roots in `d3` (for fixed `d1`) mark weak-stage-order-5 blocks.
pub fn q5_mismatch(d1: f64, d3: f64) -> f64 {
    match sigma_pi_q4(d1, d3) {
        Some((sigma, pi)) => j_k(5, d1, d3, sigma, pi),
        None => f64::NAN,
    }
}

/// Scan `d3` over `(lo, hi)` and refine each sign change by bisection. Sign
/// changes across poles of the rational mismatch are discarded by a residual
/// check at the refined point.
pub fn find_d3_roots_q5(d1: f64, lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=samples {
        let d3 = lo + (hi - lo) * i as f64 / samples as f64;
        let v = q5_mismatch(d1, d3);
        if !v.is_finite() {
            prev = None;
            continue;
        }
        if let Some((pd3, pv)) = prev {
            if pv * v < 0.0 {
                let (mut a, mut b) = (pd3, d3);
                let mut fa = pv;
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    let fm = q5_mismatch(d1, mid);
                    if !fm.is_finite() {
                        break;
                    }
                    if fa * fm <= 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                        fa = fm;
                    }
                }
                let root = 0.5 * (a + b);
                if q5_mismatch(d1, root).abs() <= 1e-7 {
                    roots.push(root);
                }
            }
        }
        prev = Some((d3, v));
    }
    roots
}

/// A constructed leading block: strictly lower entries, abscissae, and the
/// eigenvector/expansion seeds.
#[derive(Clone, Copy, Debug)]
pub struct Row3Block {
    pub a21: f64,
    pub a31: f64,
    pub a32: f64,
    pub c2: f64,
    pub c3: f64,
}

/// Residual of the original row-3 collinearity conditions for a candidate
/// block, `k = 2..=q` (the ultimate arbiter: the symmetric reduction can pick
/// up spurious roots of the cleared denominators).
pub fn block_residual(d1: f64, d2: f64, d3: f64, b: &Row3Block, q: usize) -> f64 {
    let a = [
        [d1, 0.0, 0.0],
        [b.a21, d2, 0.0],
        [b.a31, b.a32, d3],
    ];
    let c = [d1, b.a21 + d2, b.a31 + b.a32 + d3];
    let w12 = b.a21 / (d1 - d2);
    let w13 = (b.a31 + b.a32 * w12) / (d1 - d3);
    let w23 = b.a32 / (d2 - d3);
    let tau = |k: usize, i: usize| -> f64 {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += a[i][j] * c[j].powi(k as i32 - 1);
        }
        acc - c[i].powi(k as i32) / k as f64
    };
    let mut worst = 0.0f64;
    for k in 2..=q {
        let b1 = tau(k, 0);
        let b2 = tau(k, 1) - b1 * w12;
        let r = tau(k, 2) - b1 * w13 - b2 * w23;
        worst = worst.max(r.abs());
    }
    worst
}

/// Recover `(a21, a31, a32)` from the symmetric solution. `swap` selects the
/// ordering of the two abscissa roots (both are valid blocks). The recovered
/// block is validated against the original conditions before being returned.
pub fn build_block(d1: f64, d2: f64, d3: f64, swap: bool) -> Option<Row3Block> {
    let (sigma, pi) = sigma_pi_q4(d1, d3)?;
    let disc = sigma * sigma - 4.0 * pi;
    if disc < 0.0 {
        return None;
    }
    let rt = disc.sqrt();
    let (mut c2, mut c3) = ((sigma + rt) / 2.0, (sigma - rt) / 2.0);
    if swap {
        std::mem::swap(&mut c2, &mut c3);
    }
    // degenerate branches: coinciding stages or the deflated confluent root
    if (c2 - c3).abs() < 1e-8 || (c2 - d1).abs() < 1e-8 || (c3 - d1).abs() < 1e-8 {
        return None;
    }
    let h2 = h_poly(2, d1, d3);
    let den = polyval(&h2, c2);
    let num = -polyval(&h2, c3);
    if den.abs() < 1e-10 * (1.0 + num.abs()) {
        return None;
    }
    let mu2 = num / den;
    let a21 = c2 - d2;
    let a32 = mu2 * (d3 - d2);
    let a31 = c3 - d3 - a32;
    let out = Row3Block { a21, a31, a32, c2, c3 };
    if ![out.a21, out.a31, out.a32].iter().all(|v| v.is_finite()) {
        return None;
    }
    let scale = 1.0 + [a21, a31, a32].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if block_residual(d1, d2, d3, &out, 4) > 1e-10 * scale {
        return None;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::builtin;

    #[test]
    fn published_blocks_satisfy_the_reduction() {
        for (name, q) in [("dirk744", 4usize), ("dirk1254", 4), ("dirk1255", 5)] {
            let t = builtin(name).unwrap();
            let (d1, d3) = (t.a(0, 0), t.a(2, 2));
            let sigma = t.c()[1] + t.c()[2];
            let pi = t.c()[1] * t.c()[2];
            for k in 3..=q {
                let v = j_k(k, d1, d3, sigma, pi);
                assert!(v.abs() < 1e-12, "{name} J_{k} = {v:e}");
            }
            // the q=4 closed form must reproduce the published (sigma, pi)
            let (s, p) = sigma_pi_q4(d1, d3).unwrap();
            assert!((s - sigma).abs() < 1e-9, "{name}: sigma {s} vs {sigma}");
            assert!((p - pi).abs() < 1e-9, "{name}: pi {p} vs {pi}");
        }
    }

    #[test]
    fn random_diagonals_give_valid_blocks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut built = 0;
        for _ in 0..200 {
            let d1: f64 = rng.gen_range(0.01..1.5);
            let d2: f64 = rng.gen_range(0.01..1.5);
            let d3: f64 = rng.gen_range(0.01..1.5);
            if (d1 - d2).abs() < 1e-3 || (d1 - d3).abs() < 1e-3 || (d2 - d3).abs() < 1e-3 {
                continue;
            }
            for swap in [false, true] {
                if let Some(b) = build_block(d1, d2, d3, swap) {
                    let r = block_residual(d1, d2, d3, &b, 4);
                    let scale = 1.0 + [b.a21, b.a31, b.a32].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    assert!(r < 1e-9 * scale, "residual {r:e} for ({d1},{d2},{d3})");
                    built += 1;
                }
            }
        }
        assert!(built > 40, "only {built} blocks built");
    }

    #[test]
    fn q5_roots_give_wso5_blocks() {
        let d1 = 0.0411;
        let roots = find_d3_roots_q5(d1, 0.02, 1.2, 400);
        assert!(!roots.is_empty(), "no d3 roots found");
        let mut verified = 0;
        for d3 in roots {
            for swap in [false, true] {
                if let Some(b) = build_block(d1, 0.35, d3, swap) {
                    let r = block_residual(d1, 0.35, d3, &b, 5);
                    if r < 1e-8 {
                        verified += 1;
                    }
                }
            }
        }
        assert!(verified >= 1, "no root produced a fifth-order-compatible block");
    }
}
