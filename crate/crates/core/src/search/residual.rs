//! The equality system defining a stiffly accurate DIRK scheme of order `p`
//! with weak stage order `q` on the two-dimensional distinct-eigenvalue
//! branch, plus the inequality set and the error-constant objective.
//!
//! Unknown vector layout: the packed lower triangle of `A` (the last row is
//! the weight vector), the free eigenvector components `w1[1..s-1]` and
//! `w2[2..s-1]` (normalizations `w1[0] = 1`, `w2[1] = 1` and the
//! orthogonality-forced `w1[s-1] = w2[s-1] = 0` are hard-coded), and the
//! expansion coefficients `beta1^(k), beta2^(k)` for `k = 2..=q`.
//!
//! The residual blocks, in order:
//! 1. eigenvector relations `(A w1)_i = a11 w1_i` (rows 2..s) and
//!    `(A w2)_i = a22 w2_i` (rows 3..s); the last rows encode `b^T w = 0`,
//! 2. expansion relations `tau^(k)_i = beta1 w1_i + beta2 w2_i` for every row
//!    and `k = 2..=q` (rows 1-2 define the betas, the last row gives the
//!    subquadrature conditions),
//! 3. the retained order conditions that are not implied by the above.
//!
//! These evaluators are intentionally separate from the `conditions` / `wso`
//! modules so the verification path shares no code with the construction.

use super::dual::AdScalar;
use crate::tableau::{Source, Tableau};

#[derive(Clone, Copy, Debug)]
pub struct EqSystem {
    pub s: usize,
    pub p: usize,
    pub q: usize,
}

impl EqSystem {
    pub fn new(s: usize, p: usize, q: usize) -> Self {
        assert!(s >= 4 && q >= 4 && q <= 5 && p >= 4 && p <= 5 && q <= p + 1);
        EqSystem { s, p, q }
    }

    pub fn n_unknowns(&self) -> usize {
        self.s * (self.s + 1) / 2 + (self.s - 2) + (self.s - 3) + 2 * (self.q - 1)
    }

    #[inline]
    pub fn idx_a(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i < self.s);
        i * (i + 1) / 2 + j
    }

    /// Free eigenvector component `w1[i]`, `i = 1..=s-2`.
    pub fn idx_w1(&self, i: usize) -> usize {
        debug_assert!(i >= 1 && i <= self.s - 2);
        self.s * (self.s + 1) / 2 + (i - 1)
    }

    /// Free eigenvector component `w2[i]`, `i = 2..=s-2`.
    pub fn idx_w2(&self, i: usize) -> usize {
        debug_assert!(i >= 2 && i <= self.s - 2);
        self.s * (self.s + 1) / 2 + (self.s - 2) + (i - 2)
    }

    /// `beta1^(k)`, `k = 2..=q`.
    pub fn idx_b1(&self, k: usize) -> usize {
        debug_assert!(k >= 2 && k <= self.q);
        self.s * (self.s + 1) / 2 + (self.s - 2) + (self.s - 3) + (k - 2)
    }

    /// `beta2^(k)`, `k = 2..=q`.
    pub fn idx_b2(&self, k: usize) -> usize {
        self.idx_b1(k) + (self.q - 1)
    }

    /// Full eigenvectors with the fixed components filled in.
    fn w_vectors<T: AdScalar>(&self, th: &[T]) -> (Vec<T>, Vec<T>) {
        let s = self.s;
        let mut w1 = vec![T::zero(); s];
        let mut w2 = vec![T::zero(); s];
        w1[0] = T::one();
        for i in 1..=s - 2 {
            w1[i] = th[self.idx_w1(i)].clone();
        }
        w2[1] = T::one();
        for i in 2..=s - 2 {
            w2[i] = th[self.idx_w2(i)].clone();
        }
        (w1, w2)
    }

    fn abscissae<T: AdScalar>(&self, th: &[T]) -> Vec<T> {
        (0..self.s)
            .map(|i| {
                let mut acc = T::zero();
                for j in 0..=i {
                    acc = acc.add(&th[self.idx_a(i, j)]);
                }
                acc
            })
            .collect()
    }

    /// `(A v)_i` for the lower-triangular coefficient array in `th`.
    fn apply_a<T: AdScalar>(&self, th: &[T], v: &[T]) -> Vec<T> {
        (0..self.s)
            .map(|i| {
                let mut acc = T::zero();
                for j in 0..=i {
                    acc = acc.add(&th[self.idx_a(i, j)].mul(&v[j]));
                }
                acc
            })
            .collect()
    }

    /// Count and order of residuals returned by [`Self::residuals`].
    pub fn n_residuals(&self) -> usize {
        let eig = (self.s - 1) + (self.s - 2);
        let span = self.s * (self.q - 1);
        eig + span + self.n_order_residuals()
    }

    fn n_order_residuals(&self) -> usize {
        match (self.p, self.q) {
            (4, _) => 2,                   // b^T e, b^T C A c
            (5, 5) => 7,                   // + the five additional order-5 trees
            (5, 4) => 8,                   // + b^T c^4 (not covered by the span rows)
            _ => unreachable!(),
        }
    }

    /// Residual index of the eigenvector relation for `w1` at row `i` (1-based
    /// stage `i+1`), `i = 1..=s-1`.
    pub fn eq_eig1(&self, i: usize) -> usize {
        i - 1
    }

    /// `w2` eigenvector relation at row `i = 2..=s-1`.
    pub fn eq_eig2(&self, i: usize) -> usize {
        (self.s - 1) + (i - 2)
    }

    /// Expansion relation for `tau^(k)` at row `i = 0..s`.
    pub fn eq_span(&self, k: usize, i: usize) -> usize {
        (self.s - 1) + (self.s - 2) + (k - 2) * self.s + i
    }

    /// Indices of the retained-order-condition block.
    pub fn eq_order(&self) -> Vec<usize> {
        let base = (self.s - 1) + (self.s - 2) + self.s * (self.q - 1);
        (base..base + self.n_order_residuals()).collect()
    }

    /// The full equality residual vector.
    pub fn residuals<T: AdScalar>(&self, th: &[T]) -> Vec<T> {
        let s = self.s;
        let (w1, w2) = self.w_vectors(th);
        let c = self.abscissae(th);
        let a11 = th[self.idx_a(0, 0)].clone();
        let a22 = th[self.idx_a(1, 1)].clone();
        let mut out = Vec::with_capacity(self.n_residuals());

        // eigenvector relations (row 1 for w1 and rows 1-2 for w2 hold by
        // construction of the normalization)
        let aw1 = self.apply_a(th, &w1);
        for i in 1..s {
            out.push(aw1[i].sub(&a11.mul(&w1[i])));
        }
        let aw2 = self.apply_a(th, &w2);
        for i in 2..s {
            out.push(aw2[i].sub(&a22.mul(&w2[i])));
        }

        // expansion relations tau^(k) = beta1 w1 + beta2 w2
        let mut cpow: Vec<T> = vec![T::one(); s]; // c^0
        for k in 2..=self.q {
            // cpow should hold c^{k-1}: advance once per k
            for i in 0..s {
                cpow[i] = cpow[i].mul(&c[i]);
            }
            if k == 2 {
                // after one advance cpow = c^1; for k = 2 we need c^{k-1} = c ✓
            }
            let acp = self.apply_a(th, &cpow);
            let b1 = th[self.idx_b1(k)].clone();
            let b2 = th[self.idx_b2(k)].clone();
            for i in 0..s {
                // tau_i = (A c^{k-1})_i - c_i^k / k
                let cik = cpow[i].mul(&c[i]); // c^{k}... careful: cpow = c^{k-1}
                let tau = acp[i].sub(&cik.mul_f(1.0 / k as f64));
                out.push(tau.sub(&b1.mul(&w1[i])).sub(&b2.mul(&w2[i])));
            }
        }

        // retained order conditions on b = last row
        let b_row: Vec<T> = (0..s).map(|j| th[self.idx_a(s - 1, j)].clone()).collect();
        let dot_b = |v: &[T]| -> T {
            let mut acc = T::zero();
            for (bj, vj) in b_row.iter().zip(v) {
                acc = acc.add(&bj.mul(vj));
            }
            acc
        };
        // b^T e = 1
        {
            let mut acc = T::zero();
            for bj in &b_row {
                acc = acc.add(bj);
            }
            out.push(acc.add_f(-1.0));
        }
        let ac = self.apply_a(th, &c);
        let cac: Vec<T> = (0..s).map(|i| c[i].mul(&ac[i])).collect();
        // b^T (c .* A c) = 1/8
        out.push(dot_b(&cac).add_f(-0.125));
        if self.p == 5 {
            let c2: Vec<T> = (0..s).map(|i| c[i].mul(&c[i])).collect();
            let ac2 = self.apply_a(th, &c2);
            // b^T (c^2 .* A c) = 1/10
            let v: Vec<T> = (0..s).map(|i| c2[i].mul(&ac[i])).collect();
            out.push(dot_b(&v).add_f(-0.1));
            // b^T (c .* A c^2) = 1/15
            let v: Vec<T> = (0..s).map(|i| c[i].mul(&ac2[i])).collect();
            out.push(dot_b(&v).add_f(-1.0 / 15.0));
            // b^T (A c .* A c) = 1/20
            let v: Vec<T> = (0..s).map(|i| ac[i].mul(&ac[i])).collect();
            out.push(dot_b(&v).add_f(-0.05));
            // b^T (c .* A^2 c) = 1/30
            let a2c = self.apply_a(th, &ac);
            let v: Vec<T> = (0..s).map(|i| c[i].mul(&a2c[i])).collect();
            out.push(dot_b(&v).add_f(-1.0 / 30.0));
            // b^T A (c .* A c) = 1/40
            let acac = self.apply_a(th, &cac);
            out.push(dot_b(&acac).add_f(-0.025));
            if self.q == 4 {
                // b^T c^4 = 1/5 (covered by the span rows only when q = 5)
                let v: Vec<T> = (0..s).map(|i| c2[i].mul(&c2[i])).collect();
                out.push(dot_b(&v).add_f(-0.2));
            }
        }
        debug_assert_eq!(out.len(), self.n_residuals());
        out
    }

    /// Inequality functions, all feasible when `>= 0`: the abscissae, the
    /// diagonal entries, and the sampled A-stability margins
    /// `1 + 2e-8 - |R(i y)|^2`.
    pub fn inequalities<T: AdScalar>(&self, th: &[T], cr6_grid: &[f64]) -> Vec<T> {
        let s = self.s;
        let mut out = Vec::with_capacity(2 * s + cr6_grid.len());
        for ci in self.abscissae(th) {
            out.push(ci);
        }
        for i in 0..s {
            out.push(th[self.idx_a(i, i)].clone());
        }
        for &y in cr6_grid {
            let m2 = self.r_modulus_sq(th, y);
            out.push(m2.neg().add_f(1.0 + 2e-8));
        }
        out
    }

    /// `|R(i y)|^2` by forward substitution in split real/imaginary parts.
    pub fn r_modulus_sq<T: AdScalar>(&self, th: &[T], y: f64) -> T {
        let s = self.s;
        let mut xr: Vec<T> = Vec::with_capacity(s);
        let mut xi: Vec<T> = Vec::with_capacity(s);
        for i in 0..s {
            // numerator: 1 + i y * sum_{j<i} a_ij x_j
            let mut nr = T::one();
            let mut ni = T::zero();
            for j in 0..i {
                let a = &th[self.idx_a(i, j)];
                nr = nr.sub(&a.mul(&xi[j]).mul_f(y));
                ni = ni.add(&a.mul(&xr[j]).mul_f(y));
            }
            // denominator: 1 - i y a_ii
            let dr = T::one();
            let di = th[self.idx_a(i, i)].mul_f(-y);
            let m2 = dr.mul(&dr).add(&di.mul(&di));
            let xr_i = nr.mul(&dr).add(&ni.mul(&di)).div(&m2);
            let xi_i = ni.mul(&dr).sub(&nr.mul(&di)).div(&m2);
            xr.push(xr_i);
            xi.push(xi_i);
        }
        let mut br = T::zero();
        let mut bi = T::zero();
        for j in 0..s {
            let b = &th[self.idx_a(s - 1, j)];
            br = br.add(&b.mul(&xr[j]));
            bi = bi.add(&b.mul(&xi[j]));
        }
        // R = 1 + i y (br + i bi) = (1 - y bi) + i (y br)
        let rr = bi.mul_f(-y).add_f(1.0);
        let ri = br.mul_f(y);
        rr.mul(&rr).add(&ri.mul(&ri))
    }

    /// Residuals of the order-(p+1) conditions: the objective is their sum of
    /// squares.
    pub fn objective_residuals<T: AdScalar>(&self, th: &[T]) -> Vec<T> {
        let s = self.s;
        let c = self.abscissae(th);
        let b_row: Vec<T> = (0..s).map(|j| th[self.idx_a(s - 1, j)].clone()).collect();
        let dot_b = |v: &[T]| -> T {
            let mut acc = T::zero();
            for (bj, vj) in b_row.iter().zip(v) {
                acc = acc.add(&bj.mul(vj));
            }
            acc
        };
        let had = |u: &[T], v: &[T]| -> Vec<T> {
            u.iter().zip(v).map(|(a, b)| a.mul(b)).collect()
        };
        let ac = self.apply_a(th, &c);
        let c2 = had(&c, &c);
        let c3 = had(&c2, &c);
        let mut out = Vec::new();
        if self.p == 4 {
            // the nine order-5 rooted trees
            let c4 = had(&c3, &c);
            let a2c = self.apply_a(th, &ac);
            let a3c = self.apply_a(th, &a2c);
            let ac2 = self.apply_a(th, &c2);
            let ac3 = self.apply_a(th, &c3);
            out.push(dot_b(&a3c).add_f(-1.0 / 120.0));
            out.push(dot_b(&c4).add_f(-0.2));
            out.push(dot_b(&self.apply_a(th, &ac2)).add_f(-1.0 / 60.0));
            out.push(dot_b(&ac3).add_f(-0.05));
            out.push(dot_b(&had(&c2, &ac)).add_f(-0.1));
            out.push(dot_b(&had(&c, &ac2)).add_f(-1.0 / 15.0));
            out.push(dot_b(&had(&c, &a2c)).add_f(-1.0 / 30.0));
            out.push(dot_b(&self.apply_a(th, &had(&c, &ac))).add_f(-0.025));
            out.push(dot_b(&had(&ac, &ac)).add_f(-0.05));
        } else {
            // the twenty order-6 rooted trees
            let c4 = had(&c3, &c);
            let c5 = had(&c4, &c);
            let a2c = self.apply_a(th, &ac);
            let a3c = self.apply_a(th, &a2c);
            let a4c = self.apply_a(th, &a3c);
            let ac2 = self.apply_a(th, &c2);
            let ac3 = self.apply_a(th, &c3);
            let ac4 = self.apply_a(th, &c4);
            let cac = had(&c, &ac);
            out.push(dot_b(&a4c).add_f(-1.0 / 720.0));
            out.push(dot_b(&c5).add_f(-1.0 / 6.0));
            out.push(dot_b(&self.apply_a(th, &self.apply_a(th, &ac2))).add_f(-1.0 / 360.0));
            out.push(dot_b(&self.apply_a(th, &ac3)).add_f(-1.0 / 120.0));
            out.push(dot_b(&ac4).add_f(-1.0 / 30.0));
            out.push(dot_b(&had(&c3, &ac)).add_f(-1.0 / 12.0));
            out.push(dot_b(&had(&c2, &ac2)).add_f(-1.0 / 18.0));
            out.push(dot_b(&had(&c2, &a2c)).add_f(-1.0 / 36.0));
            out.push(dot_b(&had(&c, &had(&ac, &ac))).add_f(-1.0 / 24.0));
            out.push(dot_b(&had(&c, &ac3)).add_f(-1.0 / 24.0));
            out.push(dot_b(&had(&c, &self.apply_a(th, &cac))).add_f(-1.0 / 48.0));
            out.push(dot_b(&had(&c, &self.apply_a(th, &ac2))).add_f(-1.0 / 72.0));
            out.push(dot_b(&had(&c, &a3c)).add_f(-1.0 / 144.0));
            out.push(dot_b(&had(&ac, &ac2)).add_f(-1.0 / 36.0));
            out.push(dot_b(&had(&ac, &a2c)).add_f(-1.0 / 72.0));
            out.push(dot_b(&self.apply_a(th, &had(&c2, &ac))).add_f(-1.0 / 60.0));
            out.push(dot_b(&self.apply_a(th, &had(&c, &ac2))).add_f(-1.0 / 90.0));
            out.push(dot_b(&self.apply_a(th, &had(&c, &a2c))).add_f(-1.0 / 180.0));
            out.push(dot_b(&self.apply_a(th, &had(&ac, &ac))).add_f(-1.0 / 120.0));
            out.push(dot_b(&self.apply_a(th, &self.apply_a(th, &cac))).add_f(-1.0 / 240.0));
        }
        out
    }

    /// Objective value `F = sum of squared order-(p+1) residuals`.
    pub fn objective_value(&self, th: &[f64]) -> f64 {
        self.objective_residuals(th).iter().map(|r| r * r).sum()
    }

    /// Assemble the coefficient part of the unknown vector into a [`Tableau`].
    pub fn theta_to_tableau(&self, th: &[f64], label: &str) -> Tableau {
        let s = self.s;
        let rows: Vec<Vec<f64>> = (0..s)
            .map(|i| {
                let mut row = vec![0.0; s];
                for j in 0..=i {
                    row[j] = th[self.idx_a(i, j)];
                }
                row
            })
            .collect();
        let b: Vec<f64> = (0..s).map(|j| th[self.idx_a(s - 1, j)]).collect();
        let mut t = crate::tableau::validate(&rows, &b, label).expect("constructed tableau is valid");
        t.set_source(Source::Search);
        t
    }

    /// Pack an existing scheme (plus its eigenvectors and expansion
    /// coefficients) into the unknown layout.
    pub fn pack(&self, t: &Tableau, w1: &[f64], w2: &[f64], b1: &[f64], b2: &[f64]) -> Vec<f64> {
        let s = self.s;
        let mut th = vec![0.0; self.n_unknowns()];
        for i in 0..s {
            for j in 0..=i {
                th[self.idx_a(i, j)] = t.a(i, j);
            }
        }
        for i in 1..=s - 2 {
            th[self.idx_w1(i)] = w1[i];
        }
        for i in 2..=s - 2 {
            th[self.idx_w2(i)] = w2[i];
        }
        for k in 2..=self.q {
            th[self.idx_b1(k)] = b1[k - 2];
            th[self.idx_b2(k)] = b2[k - 2];
        }
        th
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::builtin;

    /// eigenvectors of the published schemes via the triangular recurrences
    fn eigvecs(t: &Tableau) -> (Vec<f64>, Vec<f64>) {
        let s = t.s();
        let (d1, d2) = (t.a(0, 0), t.a(1, 1));
        let mut w1 = vec![0.0; s];
        let mut w2 = vec![0.0; s];
        w1[0] = 1.0;
        for i in 1..s {
            let acc: f64 = (0..i).map(|j| t.a(i, j) * w1[j]).sum();
            w1[i] = acc / (d1 - t.a(i, i));
        }
        w2[1] = 1.0;
        for i in 2..s {
            let acc: f64 = (0..i).map(|j| t.a(i, j) * w2[j]).sum();
            w2[i] = acc / (d2 - t.a(i, i));
        }
        (w1, w2)
    }

    fn betas(t: &Tableau, w1: &[f64], q: usize) -> (Vec<f64>, Vec<f64>) {
        let d1 = t.a(0, 0);
        let c2 = t.c()[1];
        let a21 = t.a(1, 0);
        let mut b1 = Vec::new();
        let mut b2 = Vec::new();
        for k in 2..=q {
            let t1 = d1.powi(k as i32) * (k as f64 - 1.0) / k as f64;
            let t2 = a21 * d1.powi(k as i32 - 1) + t.a(1, 1) * c2.powi(k as i32 - 1)
                - c2.powi(k as i32) / k as f64;
            b1.push(t1);
            b2.push(t2 - t1 * w1[1]);
        }
        (b1, b2)
    }

    #[test]
    fn published_schemes_satisfy_the_equality_system() {
        for (name, p, q) in [("dirk744", 4, 4), ("dirk1254", 5, 4), ("dirk1255", 5, 5)] {
            let t = builtin(name).unwrap();
            let sys = EqSystem::new(t.s(), p, q);
            let (w1, w2) = eigvecs(&t);
            // the forced components must indeed vanish for these schemes
            assert!(w1[t.s() - 1].abs() < 1e-7, "{name}: w1_s = {}", w1[t.s() - 1]);
            assert!(w2[t.s() - 1].abs() < 1e-7, "{name}: w2_s = {}", w2[t.s() - 1]);
            let (b1, b2) = betas(&t, &w1, q);
            let th = sys.pack(&t, &w1, &w2, &b1, &b2);
            let res = sys.residuals(&th);
            assert_eq!(res.len(), sys.n_residuals());
            let worst = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            assert!(worst < 1e-9, "{name}: worst equality residual {worst:e}");
            // objective at the published coefficients is small but nonzero
            let f = sys.objective_value(&th);
            assert!(f > 0.0 && f < 1.0, "{name}: F = {f}");
        }
    }

    #[test]
    fn r_modulus_matches_stability_module() {
        let t = builtin("dirk744").unwrap();
        let sys = EqSystem::new(7, 4, 4);
        let (w1, w2) = eigvecs(&t);
        let (b1, b2) = betas(&t, &w1, 4);
        let th = sys.pack(&t, &w1, &w2, &b1, &b2);
        for y in [0.0, 0.3, 2.0, 50.0] {
            let m2 = sys.r_modulus_sq(&th, y);
            let r = crate::stability::r_at(&t, crate::stability::Complex64::new(0.0, y)).unwrap();
            assert!((m2 - r.norm_sqr()).abs() < 1e-12 * (1.0 + r.norm_sqr()), "y = {y}");
        }
    }

    #[test]
    fn inequalities_evaluate() {
        let t = builtin("dirk744").unwrap();
        let sys = EqSystem::new(7, 4, 4);
        let (w1, w2) = eigvecs(&t);
        let (b1, b2) = betas(&t, &w1, 4);
        let th = sys.pack(&t, &w1, &w2, &b1, &b2);
        let grid: Vec<f64> = crate::stability::scan_samples(crate::stability::ScanMode::Coarse);
        let g = sys.inequalities(&th, &grid);
        assert_eq!(g.len(), 14 + grid.len());
        // the published scheme is feasible
        for (i, gi) in g.iter().enumerate() {
            assert!(*gi >= -1e-9, "inequality {i} violated: {gi}");
        }
    }

    #[test]
    fn objective_matches_conditions_module() {
        // independent cross-check of the two implementations of F
        for (name, p) in [("dirk744", 4usize), ("dirk1254", 5), ("dirk1255", 5)] {
            let t = builtin(name).unwrap();
            let q = if name == "dirk1255" { 5 } else { 4 };
            let sys = EqSystem::new(t.s(), p, q);
            let (w1, w2) = eigvecs(&t);
            let (b1, b2) = betas(&t, &w1, q);
            let th = sys.pack(&t, &w1, &w2, &b1, &b2);
            let f1 = sys.objective_value(&th);
            let f2 = crate::conditions::objective_f(&t, p);
            assert!(
                (f1 - f2).abs() <= 1e-12 * (1.0 + f2),
                "{name}: {f1} vs {f2}"
            );
        }
    }

    #[test]
    fn roundtrip_theta_tableau() {
        let t = builtin("dirk744").unwrap();
        let sys = EqSystem::new(7, 4, 4);
        let (w1, w2) = eigvecs(&t);
        let (b1, b2) = betas(&t, &w1, 4);
        let th = sys.pack(&t, &w1, &w2, &b1, &b2);
        let t2 = sys.theta_to_tableau(&th, "roundtrip");
        for i in 0..7 {
            for j in 0..=i {
                assert_eq!(t.a(i, j), t2.a(i, j));
            }
        }
        assert_eq!(t.b(), t2.b());
    }
}
