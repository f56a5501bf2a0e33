//! Finite-difference machinery for 1D method-of-lines discretizations:
//! stencil weights from Taylor systems, interior/boundary operator assembly
//! with Dirichlet (and derivative) condition elimination, and Chebyshev
//! spectral differentiation for the 2D problem.

use crate::linalg::Banded;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StencilError {
    #[error("unsupported (order, derivative) pair ({order}, {derivative})")]
    Unsupported { order: usize, derivative: usize },
    #[error("grid too small: n = {n} cannot host the order-{order} closure")]
    GridTooSmall { n: usize, order: usize },
}

/// Finite-difference weights at evaluation point 0 for the `deriv`-th
/// derivative on nodes at `offsets` (unit spacing), via the Taylor-moment
/// (Vandermonde) system `sum_j w_j z_j^k = d! delta_{k,d}`.
pub fn fd_weights(offsets: &[f64], deriv: usize) -> Vec<f64> {
    let m = offsets.len();
    assert!(deriv < m, "need more nodes than the derivative order");
    let mut vand = DMatrix::<f64>::zeros(m, m);
    for (j, &z) in offsets.iter().enumerate() {
        let mut p = 1.0;
        for k in 0..m {
            vand[(k, j)] = p;
            p *= z;
        }
    }
    let mut rhs = DVector::<f64>::zeros(m);
    rhs[deriv] = (1..=deriv).map(|x| x as f64).product::<f64>().max(1.0);
    let sol = vand.lu().solve(&rhs).expect("Vandermonde system is nonsingular for distinct nodes");
    sol.iter().copied().collect()
}

fn centered_halfwidth(order: usize, deriv: usize) -> Option<usize> {
    match (order, deriv) {
        (4, 1) | (4, 2) | (2, 4) => Some(2),
        (6, 1) | (6, 2) => Some(3),
        _ => None,
    }
}

/// Centered interior weights (unit spacing) for the supported
/// (order, derivative) pairs: (4,1), (4,2), (6,1), (6,2), (2,4).
pub fn stencil(order: usize, derivative: usize) -> Result<Vec<f64>, StencilError> {
    let w = centered_halfwidth(order, derivative)
        .ok_or(StencilError::Unsupported { order, derivative })?;
    let offsets: Vec<f64> = (-(w as i64)..=w as i64).map(|z| z as f64).collect();
    Ok(fd_weights(&offsets, derivative))
}

/// Uniform interior grid on (0, 1): `n` interior nodes at `x_i = (i+1) h`,
/// `h = 1/(n+1)`.
#[derive(Clone, Debug)]
pub struct Grid1D {
    pub n: usize,
    pub h: f64,
    pub x: Vec<f64>,
}

impl Grid1D {
    pub fn new(n: usize) -> Self {
        let h = 1.0 / (n as f64 + 1.0);
        let x = (0..n).map(|i| (i as f64 + 1.0) * h).collect();
        Grid1D { n, h, x }
    }

    /// Grid that also carries the right endpoint as an unknown (inflow
    /// problems): `n + 1` state nodes, the last at `x = 1`.
    pub fn new_with_right_endpoint(n: usize) -> Self {
        let h = 1.0 / (n as f64 + 1.0);
        let x = (0..=n).map(|i| (i as f64 + 1.0) * h).collect();
        Grid1D { n: n + 1, h, x }
    }
}

/// Boundary data entering a discrete derivative: function values and (for the
/// fourth-derivative operator) first-derivative values at the two ends.
#[derive(Clone, Copy, Debug, Default)]
pub struct BcVals {
    pub left_value: f64,
    pub right_value: f64,
    pub left_deriv: f64,
    pub right_deriv: f64,
}

/// A discrete derivative on interior unknowns plus its affine boundary part:
/// `(d^k u / dx^k)_i ~ (mat u)_i + r_i(bc)`.
#[derive(Clone, Debug)]
pub struct DiffOp1D {
    pub mat: Banded<f64>,
    pub left_value: Vec<(usize, f64)>,
    pub right_value: Vec<(usize, f64)>,
    pub left_deriv: Vec<(usize, f64)>,
    pub right_deriv: Vec<(usize, f64)>,
}

impl DiffOp1D {
    pub fn dim(&self) -> usize {
        self.mat.n()
    }

    /// Accumulate the boundary contribution `r(bc)` into `out`.
    pub fn add_boundary(&self, bc: &BcVals, out: &mut [f64]) {
        for &(i, w) in &self.left_value {
            out[i] += w * bc.left_value;
        }
        for &(i, w) in &self.right_value {
            out[i] += w * bc.right_value;
        }
        for &(i, w) in &self.left_deriv {
            out[i] += w * bc.left_deriv;
        }
        for &(i, w) in &self.right_deriv {
            out[i] += w * bc.right_deriv;
        }
    }

    /// `out = mat u + r(bc)`.
    pub fn apply_with_bc(&self, u: &[f64], bc: &BcVals, out: &mut [f64]) {
        self.mat.apply(u, out);
        self.add_boundary(bc, out);
    }

    /// Scale row `i` of the operator (matrix and boundary parts) by `f(i)`.
    pub fn scale_rows(&mut self, f: impl Fn(usize) -> f64) {
        for i in 0..self.mat.n() {
            self.mat.scale_row(i, f(i));
        }
        for list in [
            &mut self.left_value,
            &mut self.right_value,
            &mut self.left_deriv,
            &mut self.right_deriv,
        ] {
            for (i, w) in list.iter_mut() {
                *w *= f(*i);
            }
        }
    }

    /// `self + alpha * other`, widening bands as needed.
    pub fn add_scaled(&self, alpha: f64, other: &DiffOp1D) -> DiffOp1D {
        let kl = self.mat.kl().max(other.mat.kl());
        let ku = self.mat.ku().max(other.mat.ku());
        let mut mat = self.mat.widened(kl, ku);
        mat.add_scaled(alpha, &other.mat);
        let merge = |a: &Vec<(usize, f64)>, b: &Vec<(usize, f64)>| -> Vec<(usize, f64)> {
            let mut out = a.clone();
            for &(i, w) in b {
                out.push((i, alpha * w));
            }
            out
        };
        DiffOp1D {
            mat,
            left_value: merge(&self.left_value, &other.left_value),
            right_value: merge(&self.right_value, &other.right_value),
            left_deriv: merge(&self.left_deriv, &other.left_deriv),
            right_deriv: merge(&self.right_deriv, &other.right_deriv),
        }
    }
}

struct Triplets {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    fn new(n: usize) -> Self {
        Triplets { n, entries: Vec::new() }
    }

    fn push(&mut self, i: usize, j: usize, v: f64) {
        self.entries.push((i, j, v));
    }

    fn into_banded(self) -> Banded<f64> {
        let mut kl = 0;
        let mut ku = 0;
        for &(i, j, _) in &self.entries {
            if i >= j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let mut b = Banded::zeros(self.n, kl, ku);
        for (i, j, v) in self.entries {
            b.add_to(i, j, v);
        }
        b
    }
}

/// Assemble the `deriv`-th derivative of the stated `order` on `n` interior
/// nodes with Dirichlet data at both ends. Interior rows use the centered
/// stencil; near-boundary rows use biased closures on `order + deriv` nodes,
/// which keeps the formal order.
pub fn assemble_dirichlet(
    grid: &Grid1D,
    deriv: usize,
    order: usize,
) -> Result<DiffOp1D, StencilError> {
    let w = centered_halfwidth(order, deriv)
        .ok_or(StencilError::Unsupported { order, derivative: deriv })?;
    let n = grid.n;
    let m = order + deriv; // biased closure width
    if n + 2 < 2 * m {
        return Err(StencilError::GridTooSmall { n, order });
    }
    let scale = grid.h.powi(-(deriv as i32));
    let centered: Vec<f64> = stencil(order, deriv)?;
    let mut trips = Triplets::new(n);
    let mut left_value = Vec::new();
    let mut right_value = Vec::new();

    let mut place = |row: usize, node: i64, weight: f64| {
        if node == 0 {
            left_value.push((row, weight));
        } else if node == (n as i64) + 1 {
            right_value.push((row, weight));
        } else {
            trips.push(row, (node - 1) as usize, weight);
        }
    };

    for i in 1..=n {
        // full-node index of the row
        if i >= w && i + w <= n + 1 {
            for (k, &cw) in centered.iter().enumerate() {
                place(i - 1, i as i64 - w as i64 + k as i64, cw * scale);
            }
        } else if i < w {
            let offsets: Vec<f64> = (0..m).map(|k| k as f64 - i as f64).collect();
            for (k, &cw) in fd_weights(&offsets, deriv).iter().enumerate() {
                place(i - 1, k as i64, cw * scale);
            }
        } else {
            let base = (n + 2 - m) as i64;
            let offsets: Vec<f64> = (0..m).map(|k| base as f64 + k as f64 - i as f64).collect();
            for (k, &cw) in fd_weights(&offsets, deriv).iter().enumerate() {
                place(i - 1, base + k as i64, cw * scale);
            }
        }
    }

    Ok(DiffOp1D {
        mat: trips.into_banded(),
        left_value,
        right_value,
        left_deriv: Vec::new(),
        right_deriv: Vec::new(),
    })
}

/// First-derivative operator when only the left (inflow) boundary carries
/// data: the state includes the right endpoint, and rows near the right end
/// switch to fully left-biased closures of the same order.
pub fn assemble_d1_inflow(grid: &Grid1D, order: usize) -> Result<DiffOp1D, StencilError> {
    let w = centered_halfwidth(order, 1)
        .ok_or(StencilError::Unsupported { order, derivative: 1 })?;
    let nstate = grid.n; // nodes 1..=nstate, node nstate is x = 1
    let m = order + 1;
    if nstate + 1 < 2 * m {
        return Err(StencilError::GridTooSmall { n: nstate, order });
    }
    let scale = 1.0 / grid.h;
    let centered = stencil(order, 1)?;
    let mut trips = Triplets::new(nstate);
    let mut left_value = Vec::new();

    let mut place = |row: usize, node: i64, weight: f64| {
        if node == 0 {
            left_value.push((row, weight));
        } else {
            trips.push(row, (node - 1) as usize, weight);
        }
    };

    for i in 1..=nstate {
        if i >= w && i + w <= nstate {
            for (k, &cw) in centered.iter().enumerate() {
                place(i - 1, i as i64 - w as i64 + k as i64, cw * scale);
            }
        } else if i < w {
            let offsets: Vec<f64> = (0..m).map(|k| k as f64 - i as f64).collect();
            for (k, &cw) in fd_weights(&offsets, 1).iter().enumerate() {
                place(i - 1, k as i64, cw * scale);
            }
        } else {
            let base = (nstate + 1 - m) as i64;
            let offsets: Vec<f64> = (0..m).map(|k| base as f64 + k as f64 - i as f64).collect();
            for (k, &cw) in fd_weights(&offsets, 1).iter().enumerate() {
                place(i - 1, base + k as i64, cw * scale);
            }
        }
    }

    Ok(DiffOp1D {
        mat: trips.into_banded(),
        left_value,
        right_value: Vec::new(),
        left_deriv: Vec::new(),
        right_deriv: Vec::new(),
    })
}

/// Fourth derivative at second order with both value and first-derivative
/// boundary conditions, eliminating the ghost nodes through the centered
/// first-derivative relation `u_{-1} = u_1 - 2 h u_x(0)` (and its mirror).
pub fn assemble_d4_clamped(grid: &Grid1D) -> Result<DiffOp1D, StencilError> {
    let n = grid.n;
    if n < 6 {
        return Err(StencilError::GridTooSmall { n, order: 2 });
    }
    let scale = grid.h.powi(-4);
    let st = stencil(2, 4)?; // (1, -4, 6, -4, 1)
    let mut trips = Triplets::new(n);
    let mut left_value = Vec::new();
    let mut right_value = Vec::new();
    let mut left_deriv = Vec::new();
    let mut right_deriv = Vec::new();

    for i in 1..=n {
        for (k, &cw) in st.iter().enumerate() {
            let node = i as i64 - 2 + k as i64;
            let wgt = cw * scale;
            if node == -1 {
                // ghost: u_{-1} = u_1 - 2 h u_x(0)
                trips.push(i - 1, 0, wgt);
                left_deriv.push((i - 1, -2.0 * grid.h * wgt));
            } else if node == 0 {
                left_value.push((i - 1, wgt));
            } else if node == (n as i64) + 1 {
                right_value.push((i - 1, wgt));
            } else if node == (n as i64) + 2 {
                // ghost: u_{n+2} = u_n + 2 h u_x(1)
                trips.push(i - 1, n - 1, wgt);
                right_deriv.push((i - 1, 2.0 * grid.h * wgt));
            } else {
                trips.push(i - 1, (node - 1) as usize, wgt);
            }
        }
    }

    Ok(DiffOp1D {
        mat: trips.into_banded(),
        left_value,
        right_value,
        left_deriv,
        right_deriv,
    })
}

/// Chebyshev-Gauss-Lobatto points `x_j = cos(pi j / (n-1))`, descending from
/// 1 to -1.
pub fn cheb_points(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let nn = (n - 1) as f64;
    (0..n)
        .map(|j| (std::f64::consts::PI * j as f64 / nn).cos())
        .collect()
}

/// Chebyshev differentiation matrix on the Gauss-Lobatto points, with the
/// diagonal from the negative row-sum identity for accuracy.
pub fn cheb_diff(n: usize) -> DMatrix<f64> {
    let x = cheb_points(n);
    let c = |i: usize| -> f64 {
        let base = if i == 0 || i == n - 1 { 2.0 } else { 1.0 };
        base * if i % 2 == 0 { 1.0 } else { -1.0 }
    };
    let mut d = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[(i, j)] = c(i) / c(j) / (x[i] - x[j]);
            }
        }
    }
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            if i != j {
                sum += d[(i, j)];
            }
        }
        d[(i, i)] = -sum;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_examples() {
        let s42 = stencil(4, 2).unwrap();
        let expect = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for (a, b) in s42.iter().zip(expect) {
            assert!((a - b).abs() < 1e-13);
        }
        let s24 = stencil(2, 4).unwrap();
        let expect4 = [1.0, -4.0, 6.0, -4.0, 1.0];
        for (a, b) in s24.iter().zip(expect4) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn stencil_annihilates_constants() {
        for (o, d) in [(4, 1), (4, 2), (6, 1), (6, 2), (2, 4)] {
            let s = stencil(o, d).unwrap();
            let sum: f64 = s.iter().sum();
            assert!(sum.abs() < 1e-10, "({o},{d}): {sum}");
        }
    }

    #[test]
    fn stencil_rejects_unsupported() {
        assert!(stencil(8, 1).is_err());
        assert!(stencil(4, 3).is_err());
    }

    #[test]
    fn interior_rows_exact_on_monomials() {
        // stencil applied to x^k reproduces the exact derivative for k <= order
        let grid = Grid1D::new(40);
        for (deriv, order) in [(1usize, 4usize), (2, 4), (1, 6), (2, 6)] {
            let op = assemble_dirichlet(&grid, deriv, order).unwrap();
            for k in 0..=order {
                let u: Vec<f64> = grid.x.iter().map(|x| x.powi(k as i32)).collect();
                let bc = BcVals {
                    left_value: 0.0f64.powi(k as i32),
                    right_value: 1.0,
                    ..Default::default()
                };
                let mut out = vec![0.0; grid.n];
                op.apply_with_bc(&u, &bc, &mut out);
                let falling: f64 = (0..deriv).map(|j| (k as f64) - j as f64).product();
                for (i, &x) in grid.x.iter().enumerate() {
                    let exact = if k >= deriv { falling * x.powi((k - deriv) as i32) } else { 0.0 };
                    let scale = grid.h.powi(-(deriv as i32));
                    assert!(
                        (out[i] - exact).abs() < 1e-8 * scale.max(1.0) * 1e-4,
                        "deriv {deriv} order {order} k {k} i {i}: {} vs {exact}",
                        out[i]
                    );
                }
            }
        }
    }

    #[test]
    fn spatial_convergence_rates() {
        // halving h reduces the truncation error by about 2^order; the test
        // function needs large high derivatives to stay above roundoff
        let f = |x: f64| (20.0 * x - 0.3).sin();
        let df = [
            |x: f64| 20.0 * (20.0 * x - 0.3).cos(),
            |x: f64| -400.0 * (20.0 * x - 0.3).sin(),
        ];
        for (deriv, order) in [(1usize, 4usize), (2, 4), (1, 6), (2, 6)] {
            let err_at = |n: usize| -> f64 {
                let grid = Grid1D::new(n);
                let op = assemble_dirichlet(&grid, deriv, order).unwrap();
                let u: Vec<f64> = grid.x.iter().map(|&x| f(x)).collect();
                let bc = BcVals { left_value: f(0.0), right_value: f(1.0), ..Default::default() };
                let mut out = vec![0.0; grid.n];
                op.apply_with_bc(&u, &bc, &mut out);
                grid.x
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| (out[i] - df[deriv - 1](x)).abs())
                    .fold(0.0, f64::max)
            };
            let e1 = err_at(199);
            let e2 = err_at(399);
            let ratio = e1 / e2;
            let expect = 2.0f64.powi(order as i32);
            assert!(
                ratio > expect / 1.45 && ratio < expect * 1.45,
                "({deriv},{order}): ratio {ratio} vs {expect}"
            );
        }
    }

    #[test]
    fn biharmonic_exact_on_quadratics() {
        // the ghost elimination is exact when u''' = 0
        let grid = Grid1D::new(50);
        let op = assemble_d4_clamped(&grid).unwrap();
        let u: Vec<f64> = grid.x.iter().map(|x| 2.0 * x * x - 0.5 * x + 1.0).collect();
        let bc = BcVals { left_value: 1.0, right_value: 2.5, left_deriv: -0.5, right_deriv: 3.5 };
        let mut out = vec![0.0; grid.n];
        op.apply_with_bc(&u, &bc, &mut out);
        for v in &out {
            assert!(v.abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn biharmonic_interior_second_order() {
        // away from the ghost rows the truncation is O(h^2)
        let f = |x: f64| (6.0 * x).sin();
        let d4 = |x: f64| 1296.0 * (6.0 * x).sin();
        let d1 = |x: f64| 6.0 * (6.0 * x).cos();
        let err_at = |n: usize| -> f64 {
            let grid = Grid1D::new(n);
            let op = assemble_d4_clamped(&grid).unwrap();
            let u: Vec<f64> = grid.x.iter().map(|&x| f(x)).collect();
            let bc = BcVals {
                left_value: f(0.0),
                right_value: f(1.0),
                left_deriv: d1(0.0),
                right_deriv: d1(1.0),
            };
            let mut out = vec![0.0; grid.n];
            op.apply_with_bc(&u, &bc, &mut out);
            (1..grid.n - 1)
                .map(|i| (out[i] - d4(grid.x[i])).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err_at(100) / err_at(200);
        assert!(ratio > 2.9 && ratio < 5.5, "ratio {ratio}");
    }

    #[test]
    fn inflow_operator_differentiates_smooth_function() {
        let grid = Grid1D::new_with_right_endpoint(300);
        let op = assemble_d1_inflow(&grid, 4).unwrap();
        let f = |x: f64| (2.0 * x - 0.3).cos();
        let df = |x: f64| -2.0 * (2.0 * x - 0.3).sin();
        let u: Vec<f64> = grid.x.iter().map(|&x| f(x)).collect();
        let bc = BcVals { left_value: f(0.0), ..Default::default() };
        let mut out = vec![0.0; grid.n];
        op.apply_with_bc(&u, &bc, &mut out);
        for (i, &x) in grid.x.iter().enumerate() {
            assert!((out[i] - df(x)).abs() < 1e-7, "i {i}");
        }
    }

    #[test]
    fn cheb_differentiates_polynomials_exactly() {
        let n = 30;
        let x = cheb_points(n);
        let d = cheb_diff(n);
        for k in 0..n {
            let u = DVector::from_iterator(n, x.iter().map(|v| v.powi(k as i32)));
            let du = &d * &u;
            for (i, &xi) in x.iter().enumerate() {
                let exact = if k == 0 { 0.0 } else { k as f64 * xi.powi(k as i32 - 1) };
                assert!(
                    (du[i] - exact).abs() <= 1e-10 * (n * n) as f64,
                    "k {k} i {i}: {} vs {exact}",
                    du[i]
                );
            }
        }
    }

    #[test]
    fn cheb_annihilates_constants() {
        let n = 30;
        let d = cheb_diff(n);
        let ones = DVector::from_element(n, 1.0);
        let z = &d * ones;
        for v in z.iter() {
            assert!(v.abs() <= 1e-8 * (n * n) as f64);
        }
    }
}
