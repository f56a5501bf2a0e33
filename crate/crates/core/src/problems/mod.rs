//! The test-problem portfolio: the Prothero-Robinson stiff ODE, nine 1D
//! method-of-lines PDEs (heat, Schroedinger, advection-diffusion, advection,
//! three variable-coefficient heat variants, a fourth-derivative equation,
//! viscous Burgers), a 2D Chebyshev-spectral advection-diffusion problem, and
//! the Van der Pol oscillator.
//!
//! All PDE problems use manufactured solutions: the forcing is the closed-form
//! residual of the exact solution in the PDE, and Dirichlet (and derivative)
//! boundary values are injected from the exact solution. Linear problems carry
//! the affine fast path `f = L u + g(t)`; Burgers supplies an analytic banded
//! Jacobian.

pub mod grid;

use crate::integrator::{AffineOp, AffinePart, IvpProblem, LinOp};
use crate::linalg::Banded;
use grid::{assemble_d1_inflow, assemble_d4_clamped, assemble_dirichlet, BcVals, DiffOp1D, Grid1D};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::sync::Arc;
use thiserror::Error;

pub use grid::{cheb_diff, cheb_points, fd_weights, stencil, StencilError};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem id `{0}`")]
    UnknownId(String),
    #[error(transparent)]
    Stencil(#[from] StencilError),
}

/// A built problem over either scalar field.
pub enum Problem {
    Real(IvpProblem<f64>),
    Complex(IvpProblem<Complex64>),
}

impl Problem {
    pub fn label(&self) -> &str {
        match self {
            Problem::Real(p) => &p.label,
            Problem::Complex(p) => &p.label,
        }
    }

    pub fn t_end(&self) -> f64 {
        match self {
            Problem::Real(p) => p.t_end,
            Problem::Complex(p) => p.t_end,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Problem::Real(p) => p.dim,
            Problem::Complex(p) => p.dim,
        }
    }

    pub fn spatial_error_floor(&self) -> f64 {
        match self {
            Problem::Real(p) => p.spatial_error_floor,
            Problem::Complex(p) => p.spatial_error_floor,
        }
    }

    pub fn has_exact(&self) -> bool {
        match self {
            Problem::Real(p) => p.exact.is_some(),
            Problem::Complex(p) => p.exact.is_some(),
        }
    }
}

// ---------------------------------------------------------------------------
// Prothero-Robinson
// ---------------------------------------------------------------------------

/// Reference profile for the Prothero-Robinson problem: `t -> (phi, phi')`.
#[derive(Clone)]
pub enum PrProfile {
    /// `phi(t) = e^{-t} sin(10 t) + cos(20 t)`.
    Paper,
    Custom(Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>),
}

impl PrProfile {
    fn eval(&self, t: f64) -> (f64, f64) {
        match self {
            PrProfile::Paper => {
                let phi = (-t).exp() * (10.0 * t).sin() + (20.0 * t).cos();
                let dphi = -(-t).exp() * (10.0 * t).sin() + 10.0 * (-t).exp() * (10.0 * t).cos()
                    - 20.0 * (20.0 * t).sin();
                (phi, dphi)
            }
            PrProfile::Custom(f) => f(t),
        }
    }
}

/// `u' = lambda (u - phi(t)) + phi'(t)` on `[0, t_end]` with `u(0) = phi(0)`,
/// so the exact solution is `phi`.
pub fn prothero_robinson(lambda: f64, profile: PrProfile, t_end: f64) -> IvpProblem<f64> {
    let pr = profile.clone();
    let pr2 = profile.clone();
    let pr3 = profile;
    IvpProblem {
        label: format!("prothero_robinson(lambda={lambda:e})"),
        dim: 1,
        u0: vec![pr3.eval(0.0).0],
        t_end,
        rhs: Box::new(move |t, u, out| {
            let (phi, dphi) = pr.eval(t);
            out[0] = lambda * (u[0] - phi) + dphi;
        }),
        jacobian: Some(Box::new(move |_t, _u| LinOp::Diagonal(vec![lambda]))),
        affine: Some(AffinePart {
            op: AffineOp::Constant(LinOp::Diagonal(vec![lambda])),
            forcing: Box::new(move |t, out| {
                let (phi, dphi) = pr2.eval(t);
                out[0] = -lambda * phi + dphi;
            }),
        }),
        exact: Some(Box::new(move |t| vec![pr3.eval(t).0])),
        exact_dx: None,
        discrete_dx: None,
        spatial_error_floor: 1e-13,
    }
}

/// Complex-stiffness variant of the Prothero-Robinson problem.
pub fn prothero_robinson_complex(
    lambda: Complex64,
    profile: PrProfile,
    t_end: f64,
) -> IvpProblem<Complex64> {
    let pr = profile.clone();
    let pr2 = profile.clone();
    let pr3 = profile;
    IvpProblem {
        label: format!("prothero_robinson(lambda={lambda})"),
        dim: 1,
        u0: vec![Complex64::new(pr3.eval(0.0).0, 0.0)],
        t_end,
        rhs: Box::new(move |t, u, out| {
            let (phi, dphi) = pr.eval(t);
            out[0] = lambda * (u[0] - phi) + dphi;
        }),
        jacobian: Some(Box::new(move |_t, _u| LinOp::Diagonal(vec![lambda]))),
        affine: Some(AffinePart {
            op: AffineOp::Constant(LinOp::Diagonal(vec![lambda])),
            forcing: Box::new(move |t, out| {
                let (phi, dphi) = pr2.eval(t);
                out[0] = -lambda * phi + dphi;
            }),
        }),
        exact: Some(Box::new(move |t| vec![Complex64::new(pr3.eval(t).0, 0.0)])),
        exact_dx: None,
        discrete_dx: None,
        spatial_error_floor: 1e-13,
    }
}

// ---------------------------------------------------------------------------
// 1D linear method-of-lines problems
// ---------------------------------------------------------------------------

type Field2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type BcFn = Arc<dyn Fn(f64) -> BcVals + Send + Sync>;

/// Everything needed to wire a real linear PDE into an [`IvpProblem`]:
/// `u_t = op u + r_op(bc(t)) + f(x, t)`.
struct LinearPde {
    label: String,
    grid: Grid1D,
    op: DiffOp1D,
    exact: Field2,    // u(x, t)
    exact_dx: Field2, // u_x(x, t)
    forcing: Field2,  // f(x, t)
    /// Same-order discrete first derivative for the error functional.
    d1: DiffOp1D,
    /// Boundary data at time `t` (from the exact solution).
    bc: BcFn,
    t_end: f64,
    floor: f64,
}

fn finish_linear(pde: LinearPde) -> IvpProblem<f64> {
    let LinearPde { label, grid, op, exact, exact_dx, forcing, d1, bc, t_end, floor } = pde;
    let n = grid.n;
    let op = Arc::new(op);
    let d1 = Arc::new(d1);
    let x = Arc::new(grid.x);
    let u0: Vec<f64> = x.iter().map(|&xi| exact(xi, 0.0)).collect();

    let forcing_total = {
        let op = op.clone();
        let bc = bc.clone();
        let x = x.clone();
        let forcing = forcing.clone();
        Arc::new(move |t: f64, out: &mut [f64]| {
            for (o, &xi) in out.iter_mut().zip(x.iter()) {
                *o = forcing(xi, t);
            }
            op.add_boundary(&bc(t), out);
        })
    };

    let rhs = {
        let op = op.clone();
        let ft = forcing_total.clone();
        move |t: f64, u: &[f64], out: &mut [f64]| {
            op.mat.apply(u, out);
            let mut g = vec![0.0; u.len()];
            ft(t, &mut g);
            for (o, gi) in out.iter_mut().zip(&g) {
                *o += gi;
            }
        }
    };

    let jac_mat = op.mat.clone();
    let exact_vec = {
        let x = x.clone();
        let exact = exact.clone();
        move |t: f64| -> Vec<f64> { x.iter().map(|&xi| exact(xi, t)).collect() }
    };
    let exact_dx_vec = {
        let x = x.clone();
        move |t: f64| -> Vec<f64> { x.iter().map(|&xi| exact_dx(xi, t)).collect() }
    };
    let discrete_dx = {
        let d1 = d1.clone();
        let bc = bc.clone();
        move |t: f64, u: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; u.len()];
            d1.apply_with_bc(u, &bc(t), &mut out);
            out
        }
    };

    let forcing_box = {
        let ft = forcing_total.clone();
        move |t: f64, out: &mut [f64]| ft(t, out)
    };

    IvpProblem {
        label,
        dim: n,
        u0,
        t_end,
        rhs: Box::new(rhs),
        jacobian: Some(Box::new(move |_t, _u| LinOp::Banded(jac_mat.clone()))),
        affine: Some(AffinePart {
            op: AffineOp::Constant(LinOp::Banded(op.mat.clone())),
            forcing: Box::new(forcing_box),
        }),
        exact: Some(Box::new(exact_vec)),
        exact_dx: Some(Box::new(exact_dx_vec)),
        discrete_dx: Some(Box::new(discrete_dx)),
        spatial_error_floor: floor,
    }
}

fn dirichlet_bc(exact: Field2) -> BcFn {
    Arc::new(move |t| BcVals {
        left_value: exact(0.0, t),
        right_value: exact(1.0, t),
        ..Default::default()
    })
}

/// Scale a real band matrix into a complex one.
fn banded_complex_scaled(b: &Banded<f64>, z: Complex64) -> Banded<Complex64> {
    let mut out = Banded::<Complex64>::zeros(b.n(), b.kl(), b.ku());
    for i in 0..b.n() {
        for j in i.saturating_sub(b.kl())..=(i + b.ku()).min(b.n() - 1) {
            out.set(i, j, z * b.get(i, j));
        }
    }
    out
}

fn banded_scaled(b: &Banded<f64>, f: f64) -> Banded<f64> {
    let mut out = Banded::<f64>::zeros(b.n(), b.kl(), b.ku());
    out.add_scaled(f, b);
    out
}

/// 1D PDE identifiers for [`mol_1d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pde1d {
    /// `u_t = u_xx + f`, solution `cos(20t) sin(10x+10)`.
    Heat,
    /// `u_t = (i omega / k^2) u_xx + f`, dispersive, complex state.
    Schrodinger,
    /// `u_t + u_x = nu u_xx + f`, `nu = 1e-3`, physical boundary layer.
    AdvDiff,
    /// `u_t + u_x = 0`, traveling wave, inflow boundary only.
    Advection,
    /// `u_t = (kappa(x) u_x)_x + f`, `kappa = cos(x + 0.1)`.
    VarHeatX,
    /// `kappa(x, t) = cos(0.1 t + 0.2)`.
    VarHeatTSlow,
    /// `kappa(x, t) = 1 + 0.5 cos(30 t + 0.1)`.
    VarHeatTFast,
    /// `kappa(x, t) = 1 + 0.5 cos(20 t)` (the alternate rapid coefficient).
    VarHeatTFastAlt,
    /// `u_t = -u_xxxx + f` with value and derivative conditions at each end.
    Biharmonic,
    /// `u_t + u u_x = nu u_xx + f`, `nu = 0.1`, nonlinear.
    Burgers,
}

impl Pde1d {
    /// Paper-default grid resolution and stencil order.
    pub fn defaults(self) -> (usize, usize) {
        match self {
            Pde1d::Heat | Pde1d::Schrodinger | Pde1d::AdvDiff | Pde1d::Advection => (10_000, 4),
            Pde1d::VarHeatX
            | Pde1d::VarHeatTSlow
            | Pde1d::VarHeatTFast
            | Pde1d::VarHeatTFastAlt
            | Pde1d::Burgers => (1_000, 6),
            Pde1d::Biharmonic => (10_000, 2),
        }
    }
}

/// Build a 1D method-of-lines problem on `n` interior points with the given
/// stencil order.
pub fn mol_1d(pde: Pde1d, n: usize, order: usize) -> Result<Problem, ProblemError> {
    let g = Grid1D::new(n);
    let h = g.h;
    match pde {
        Pde1d::Heat => {
            let exact: Field2 = Arc::new(|x, t| (20.0 * t).cos() * (10.0 * x + 10.0).sin());
            let exact_dx: Field2 =
                Arc::new(|x, t| 10.0 * (20.0 * t).cos() * (10.0 * x + 10.0).cos());
            let forcing: Field2 = Arc::new(|x, t| {
                -20.0 * (20.0 * t).sin() * (10.0 * x + 10.0).sin()
                    + 100.0 * (20.0 * t).cos() * (10.0 * x + 10.0).sin()
            });
            let op = assemble_dirichlet(&g, 2, order)?;
            let d1 = assemble_dirichlet(&g, 1, order)?;
            Ok(Problem::Real(finish_linear(LinearPde {
                label: format!("heat(n={n},order={order})"),
                bc: dirichlet_bc(exact.clone()),
                grid: g,
                op,
                exact,
                exact_dx,
                forcing,
                d1,
                t_end: 1.0,
                floor: 2.6e6 * h.powi(4),
            })))
        }
        Pde1d::AdvDiff => {
            let nu = 1e-3;
            let exact: Field2 = Arc::new(|x, t| (5.0 * t).cos() * (10.0 * x + 10.0).sin());
            let exact_dx: Field2 =
                Arc::new(|x, t| 10.0 * (5.0 * t).cos() * (10.0 * x + 10.0).cos());
            let forcing: Field2 = Arc::new(move |x, t| {
                -5.0 * (5.0 * t).sin() * (10.0 * x + 10.0).sin()
                    + 10.0 * (5.0 * t).cos() * (10.0 * x + 10.0).cos()
                    + 100.0 * nu * (5.0 * t).cos() * (10.0 * x + 10.0).sin()
            });
            let d1op = assemble_dirichlet(&g, 1, order)?;
            let d2op = assemble_dirichlet(&g, 2, order)?;
            // L = nu D2 - D1
            let mut op = d2op;
            op.scale_rows(|_| nu);
            let op = op.add_scaled(-1.0, &d1op);
            Ok(Problem::Real(finish_linear(LinearPde {
                label: format!("adv_diff(n={n},order={order})"),
                bc: dirichlet_bc(exact.clone()),
                grid: g,
                op,
                exact,
                exact_dx,
                forcing,
                d1: d1op,
                t_end: 1.0,
                floor: 2.6e6 * h.powi(4),
            })))
        }
        Pde1d::VarHeatX => {
            let exact: Field2 = Arc::new(|x, t| (20.0 * t).cos() * (10.0 * x + 10.0).sin());
            let exact_dx: Field2 =
                Arc::new(|x, t| 10.0 * (20.0 * t).cos() * (10.0 * x + 10.0).cos());
            // f = u_t - kappa' u_x - kappa u_xx with kappa = cos(x + 0.1)
            let forcing: Field2 = Arc::new(|x, t| {
                let s = (10.0 * x + 10.0).sin();
                let c = (10.0 * x + 10.0).cos();
                -20.0 * (20.0 * t).sin() * s
                    + (x + 0.1).sin() * 10.0 * (20.0 * t).cos() * c
                    + (x + 0.1).cos() * 100.0 * (20.0 * t).cos() * s
            });
            let d1op = assemble_dirichlet(&g, 1, order)?;
            let d2op = assemble_dirichlet(&g, 2, order)?;
            let xs = g.x.clone();
            // L = diag(kappa') D1 + diag(kappa) D2
            let mut term1 = d1op.clone();
            term1.scale_rows(|i| -(xs[i] + 0.1).sin());
            let mut term2 = d2op;
            term2.scale_rows(|i| (xs[i] + 0.1).cos());
            let op = term2.add_scaled(1.0, &term1);
            Ok(Problem::Real(finish_linear(LinearPde {
                label: format!("var_heat_x(n={n},order={order})"),
                bc: dirichlet_bc(exact.clone()),
                grid: g,
                op,
                exact,
                exact_dx,
                forcing,
                d1: d1op,
                t_end: 1.0,
                floor: 1e9 * h.powi(6),
            })))
        }
        Pde1d::VarHeatTSlow | Pde1d::VarHeatTFast | Pde1d::VarHeatTFastAlt => {
            let kappa: Arc<dyn Fn(f64) -> f64 + Send + Sync> = match pde {
                Pde1d::VarHeatTSlow => Arc::new(|t: f64| (0.1 * t + 0.2).cos()),
                Pde1d::VarHeatTFast => Arc::new(|t: f64| 1.0 + 0.5 * (30.0 * t + 0.1).cos()),
                _ => Arc::new(|t: f64| 1.0 + 0.5 * (20.0 * t).cos()),
            };
            Ok(Problem::Real(var_heat_t(pde, g, order, kappa)?))
        }
        Pde1d::Advection => Ok(Problem::Real(advection(n, order)?)),
        Pde1d::Biharmonic => Ok(Problem::Real(biharmonic(g)?)),
        Pde1d::Schrodinger => Ok(Problem::Complex(schrodinger(g, order)?)),
        Pde1d::Burgers => Ok(Problem::Real(burgers(g, order)?)),
    }
}

/// Heat equation with a time-only diffusion coefficient: a non-autonomous
/// affine problem, `L(t)` assembled per stage time.
fn var_heat_t(
    pde: Pde1d,
    g: Grid1D,
    order: usize,
    kappa: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
) -> Result<IvpProblem<f64>, ProblemError> {
    let n = g.n;
    let h = g.h;
    let exact: Field2 = Arc::new(|x, t| (20.0 * t).cos() * (10.0 * x + 10.0).sin());
    let exact_dx: Field2 = Arc::new(|x, t| 10.0 * (20.0 * t).cos() * (10.0 * x + 10.0).cos());
    let kap_f = kappa.clone();
    let forcing: Field2 = Arc::new(move |x, t| {
        -20.0 * (20.0 * t).sin() * (10.0 * x + 10.0).sin()
            + kap_f(t) * 100.0 * (20.0 * t).cos() * (10.0 * x + 10.0).sin()
    });
    let d2 = Arc::new(assemble_dirichlet(&g, 2, order)?);
    let d1 = Arc::new(assemble_dirichlet(&g, 1, order)?);
    let bc = dirichlet_bc(exact.clone());
    let x = Arc::new(g.x);
    let u0: Vec<f64> = x.iter().map(|&xi| exact(xi, 0.0)).collect();

    let forcing_total = {
        let d2 = d2.clone();
        let bc = bc.clone();
        let x = x.clone();
        let kappa = kappa.clone();
        let forcing = forcing.clone();
        Arc::new(move |t: f64, out: &mut [f64]| {
            for (o, &xi) in out.iter_mut().zip(x.iter()) {
                *o = forcing(xi, t);
            }
            let mut bvec = vec![0.0; out.len()];
            d2.add_boundary(&bc(t), &mut bvec);
            let k = kappa(t);
            for (o, bi) in out.iter_mut().zip(&bvec) {
                *o += k * bi;
            }
        })
    };
    let rhs = {
        let d2 = d2.clone();
        let kappa = kappa.clone();
        let ft = forcing_total.clone();
        move |t: f64, u: &[f64], out: &mut [f64]| {
            d2.mat.apply(u, out);
            let k = kappa(t);
            let mut gvec = vec![0.0; u.len()];
            ft(t, &mut gvec);
            for (o, gi) in out.iter_mut().zip(&gvec) {
                *o = *o * k + gi;
            }
        }
    };
    let op_t = {
        let d2 = d2.clone();
        let kappa = kappa.clone();
        move |t: f64| LinOp::Banded(banded_scaled(&d2.mat, kappa(t)))
    };
    let jac = {
        let d2 = d2.clone();
        let kappa = kappa.clone();
        move |t: f64, _u: &[f64]| LinOp::Banded(banded_scaled(&d2.mat, kappa(t)))
    };
    let exact_vec = {
        let x = x.clone();
        let exact = exact.clone();
        move |t: f64| -> Vec<f64> { x.iter().map(|&xi| exact(xi, t)).collect() }
    };
    let exact_dx_vec = {
        let x = x.clone();
        move |t: f64| -> Vec<f64> { x.iter().map(|&xi| exact_dx(xi, t)).collect() }
    };
    let discrete_dx = {
        let d1 = d1.clone();
        let bc = bc.clone();
        move |t: f64, u: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; u.len()];
            d1.apply_with_bc(u, &bc(t), &mut out);
            out
        }
    };
    let forcing_box = {
        let ft = forcing_total.clone();
        move |t: f64, out: &mut [f64]| ft(t, out)
    };
    let name = match pde {
        Pde1d::VarHeatTSlow => "var_heat_t_slow",
        Pde1d::VarHeatTFast => "var_heat_t_fast",
        _ => "var_heat_t_fast_alt",
    };
    Ok(IvpProblem {
        label: format!("{name}(n={n},order={order})"),
        dim: n,
        u0,
        t_end: 1.0,
        rhs: Box::new(rhs),
        jacobian: Some(Box::new(jac)),
        affine: Some(AffinePart {
            op: AffineOp::TimeDependent(Box::new(op_t)),
            forcing: Box::new(forcing_box),
        }),
        exact: Some(Box::new(exact_vec)),
        exact_dx: Some(Box::new(exact_dx_vec)),
        discrete_dx: Some(Box::new(discrete_dx)),
        spatial_error_floor: 1e9 * h.powi(6),
    })
}

/// `u_t + u_x = 0` with inflow data at `x = 0`; the state carries the right
/// endpoint.
fn advection(n: usize, order: usize) -> Result<IvpProblem<f64>, ProblemError> {
    let g = Grid1D::new_with_right_endpoint(n);
    let h = g.h;
    let nstate = g.n;
    let exact: Field2 = Arc::new(|x, t| (2.0 * std::f64::consts::PI * (x - t)).sin());
    let exact_dx: Field2 = Arc::new(|x, t| {
        2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * (x - t)).cos()
    });
    let d1 = Arc::new(assemble_d1_inflow(&g, order)?);
    let bc: BcFn = {
        let exact = exact.clone();
        Arc::new(move |t: f64| BcVals { left_value: exact(0.0, t), ..Default::default() })
    };
    let x = Arc::new(g.x);
    let u0: Vec<f64> = x.iter().map(|&xi| exact(xi, 0.0)).collect();

    // L = -D1; the time-dependent part is purely the boundary contribution
    let forcing_total = {
        let d1 = d1.clone();
        let bc = bc.clone();
        Arc::new(move |t: f64, out: &mut [f64]| {
            out.fill(0.0);
            let mut bvec = vec![0.0; out.len()];
            d1.add_boundary(&bc(t), &mut bvec);
            for (o, bi) in out.iter_mut().zip(&bvec) {
                *o -= bi;
            }
        })
    };
    let rhs = {
        let d1 = d1.clone();
        let bc = bc.clone();
        move |t: f64, u: &[f64], out: &mut [f64]| {
            d1.apply_with_bc(u, &bc(t), out);
            for o in out.iter_mut() {
                *o = -*o;
            }
        }
    };
    let neg_mat = banded_scaled(&d1.mat, -1.0);
    let jac_mat = neg_mat.clone();
    let exact_vec = {
        let x = x.clone();
        let exact = exact.clone();
        move |t: f64| -> Vec<f64> { x.iter().map(|&xi| exact(xi, t)).collect() }
    };
    let exact_dx_vec = {
        let x = x.clone();
        move |t: f64| -> Vec<f64> { x.iter().map(|&xi| exact_dx(xi, t)).collect() }
    };
    let discrete_dx = {
        let d1 = d1.clone();
        let bc = bc.clone();
        move |t: f64, u: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; u.len()];
            d1.apply_with_bc(u, &bc(t), &mut out);
            out
        }
    };
    let forcing_box = {
        let ft = forcing_total.clone();
        move |t: f64, out: &mut [f64]| ft(t, out)
    };
    Ok(IvpProblem {
        label: format!("advection(n={n},order={order})"),
        dim: nstate,
        u0,
        t_end: 1.0,
        rhs: Box::new(rhs),
        jacobian: Some(Box::new(move |_t, _u| LinOp::Banded(jac_mat.clone()))),
        affine: Some(AffinePart {
            op: AffineOp::Constant(LinOp::Banded(neg_mat)),
            forcing: Box::new(forcing_box),
        }),
        exact: Some(Box::new(exact_vec)),
        exact_dx: Some(Box::new(exact_dx_vec)),
        discrete_dx: Some(Box::new(discrete_dx)),
        spatial_error_floor: 1e5 * h.powi(4),
    })
}

/// `u_t = -u_xxxx + f` with clamped (value + slope) data; the manufactured
/// solution `cos(15 t)` is constant in space.
fn biharmonic(g: Grid1D) -> Result<IvpProblem<f64>, ProblemError> {
    let n = g.n;
    let exact: Field2 = Arc::new(|_x, t| (15.0 * t).cos());
    let exact_dx: Field2 = Arc::new(|_x, _t| 0.0);
    let forcing: Field2 = Arc::new(|_x, t| -15.0 * (15.0 * t).sin());
    let mut op = assemble_d4_clamped(&g)?;
    op.scale_rows(|_| -1.0);
    let d1 = second_order_d1(&g);
    let bc: BcFn = {
        let exact = exact.clone();
        Arc::new(move |t: f64| BcVals {
            left_value: exact(0.0, t),
            right_value: exact(1.0, t),
            left_deriv: 0.0,
            right_deriv: 0.0,
        })
    };
    Ok(finish_linear(LinearPde {
        label: format!("biharmonic(n={n},order=2)"),
        bc,
        grid: g,
        op,
        exact,
        exact_dx,
        forcing,
        d1,
        t_end: 1.0,
        floor: 1e-12,
    }))
}

/// Plain centered 2nd-order first derivative (used as the same-order error
/// derivative for the 2nd-order fourth-derivative problem).
fn second_order_d1(g: &Grid1D) -> DiffOp1D {
    let n = g.n;
    let scale = 1.0 / (2.0 * g.h);
    let mut mat = Banded::<f64>::zeros(n, 1, 1);
    let mut left_value = Vec::new();
    let mut right_value = Vec::new();
    for i in 1..=n {
        for (node, w) in [(i as i64 - 1, -scale), (i as i64 + 1, scale)] {
            if node == 0 {
                left_value.push((i - 1, w));
            } else if node == n as i64 + 1 {
                right_value.push((i - 1, w));
            } else {
                mat.add_to(i - 1, (node - 1) as usize, w);
            }
        }
    }
    DiffOp1D { mat, left_value, right_value, left_deriv: Vec::new(), right_deriv: Vec::new() }
}

/// Dispersive problem with complex operator `(i omega / k^2) u_xx`.
fn schrodinger(g: Grid1D, order: usize) -> Result<IvpProblem<Complex64>, ProblemError> {
    let n = g.n;
    let h = g.h;
    let omega = 2.0 * std::f64::consts::PI;
    let kk = 20.0f64;
    let coeff = Complex64::new(0.0, omega / (kk * kk));
    let exact_re: Field2 =
        Arc::new(|x: f64, t: f64| (-(x - t) * (x - t)).exp() * (10.0 * x).cos() * t.sin());
    let uxx = move |x: f64, t: f64| -> f64 {
        let e = (-(x - t) * (x - t)).exp();
        let c = (10.0 * x).cos();
        let s10 = (10.0 * x).sin();
        e * t.sin() * ((4.0 * (x - t) * (x - t) - 102.0) * c + 40.0 * (x - t) * s10)
    };
    let ut = move |x: f64, t: f64| -> f64 {
        let e = (-(x - t) * (x - t)).exp();
        e * (10.0 * x).cos() * (t.cos() + 2.0 * (x - t) * t.sin())
    };
    let ux = move |x: f64, t: f64| -> f64 {
        let e = (-(x - t) * (x - t)).exp();
        e * t.sin() * (-2.0 * (x - t) * (10.0 * x).cos() - 10.0 * (10.0 * x).sin())
    };
    let d2 = Arc::new(assemble_dirichlet(&g, 2, order)?);
    let d1 = Arc::new(assemble_dirichlet(&g, 1, order)?);
    let lmat = Arc::new(banded_complex_scaled(&d2.mat, coeff));
    let d1c = Arc::new(banded_complex_scaled(&d1.mat, Complex64::new(1.0, 0.0)));
    let x = Arc::new(g.x);
    let u0: Vec<Complex64> =
        x.iter().map(|&xi| Complex64::new(exact_re(xi, 0.0), 0.0)).collect();

    // boundary contribution of coeff*D2 with real boundary values
    let bnd = {
        let d2 = d2.clone();
        let exact_re = exact_re.clone();
        Arc::new(move |t: f64, out: &mut [Complex64]| {
            let g0 = exact_re(0.0, t);
            let g1 = exact_re(1.0, t);
            for &(i, w) in &d2.left_value {
                out[i] += coeff * (w * g0);
            }
            for &(i, w) in &d2.right_value {
                out[i] += coeff * (w * g1);
            }
        })
    };
    let forcing_total = {
        let x = x.clone();
        let bnd = bnd.clone();
        Arc::new(move |t: f64, out: &mut [Complex64]| {
            for (o, &xi) in out.iter_mut().zip(x.iter()) {
                // f = u_t - coeff u_xx (complex because coeff is imaginary)
                *o = Complex64::new(ut(xi, t), 0.0) - coeff * uxx(xi, t);
            }
            bnd(t, out);
        })
    };
    let rhs = {
        let lmat = lmat.clone();
        let ft = forcing_total.clone();
        move |t: f64, u: &[Complex64], out: &mut [Complex64]| {
            lmat.apply(u, out);
            let mut gv = vec![Complex64::new(0.0, 0.0); u.len()];
            ft(t, &mut gv);
            for (o, gi) in out.iter_mut().zip(&gv) {
                *o += gi;
            }
        }
    };
    let jac_mat = lmat.as_ref().clone();
    let exact_vec = {
        let x = x.clone();
        let exact_re = exact_re.clone();
        move |t: f64| -> Vec<Complex64> {
            x.iter().map(|&xi| Complex64::new(exact_re(xi, t), 0.0)).collect()
        }
    };
    let exact_dx_vec = {
        let x = x.clone();
        move |t: f64| -> Vec<Complex64> {
            x.iter().map(|&xi| Complex64::new(ux(xi, t), 0.0)).collect()
        }
    };
    let discrete_dx = {
        let d1c = d1c.clone();
        let d1 = d1.clone();
        let exact_re = exact_re.clone();
        move |t: f64, u: &[Complex64]| -> Vec<Complex64> {
            let mut out = vec![Complex64::new(0.0, 0.0); u.len()];
            d1c.apply(u, &mut out);
            let g0 = exact_re(0.0, t);
            let g1 = exact_re(1.0, t);
            for &(i, w) in &d1.left_value {
                out[i] += Complex64::new(w * g0, 0.0);
            }
            for &(i, w) in &d1.right_value {
                out[i] += Complex64::new(w * g1, 0.0);
            }
            out
        }
    };
    let forcing_box = {
        let ft = forcing_total.clone();
        move |t: f64, out: &mut [Complex64]| ft(t, out)
    };
    Ok(IvpProblem {
        label: format!("schrodinger(n={n},order={order})"),
        dim: n,
        u0,
        t_end: 1.2,
        rhs: Box::new(rhs),
        jacobian: Some(Box::new(move |_t, _u| LinOp::Banded(jac_mat.clone()))),
        affine: Some(AffinePart {
            op: AffineOp::Constant(LinOp::Banded(lmat.as_ref().clone())),
            forcing: Box::new(forcing_box),
        }),
        exact: Some(Box::new(exact_vec)),
        exact_dx: Some(Box::new(exact_dx_vec)),
        discrete_dx: Some(Box::new(discrete_dx)),
        spatial_error_floor: 2.6e6 * h.powi(4),
    })
}

/// Viscous Burgers with the spatially constant manufactured solution
/// `u = cos(t)`; nonlinear, analytic banded Jacobian.
fn burgers(g: Grid1D, order: usize) -> Result<IvpProblem<f64>, ProblemError> {
    let n = g.n;
    let nu = 0.1;
    let d1 = Arc::new(assemble_dirichlet(&g, 1, order)?);
    let d2 = Arc::new(assemble_dirichlet(&g, 2, order)?);
    let bc: BcFn = Arc::new(move |t: f64| BcVals {
        left_value: t.cos(),
        right_value: t.cos(),
        ..Default::default()
    });
    let u0 = vec![1.0; n];

    let rhs = {
        let d1 = d1.clone();
        let d2 = d2.clone();
        let bc = bc.clone();
        move |t: f64, u: &[f64], out: &mut [f64]| {
            let b = bc(t);
            let mut ux = vec![0.0; u.len()];
            d1.apply_with_bc(u, &b, &mut ux);
            d2.apply_with_bc(u, &b, out);
            let f = -t.sin();
            for i in 0..u.len() {
                out[i] = nu * out[i] - u[i] * ux[i] + f;
            }
        }
    };
    // J(u) = nu D2 - diag(u) D1 - diag(D1 u + r1)
    let jac = {
        let d1 = d1.clone();
        let d2 = d2.clone();
        let bc = bc.clone();
        move |t: f64, u: &[f64]| -> LinOp<f64> {
            let b = bc(t);
            let mut ux = vec![0.0; u.len()];
            d1.apply_with_bc(u, &b, &mut ux);
            let kl = d1.mat.kl().max(d2.mat.kl());
            let ku = d1.mat.ku().max(d2.mat.ku());
            let nn = u.len();
            let mut j = Banded::<f64>::zeros(nn, kl, ku);
            j.add_scaled(nu, &d2.mat);
            for i in 0..nn {
                let lo = i.saturating_sub(d1.mat.kl());
                let hi = (i + d1.mat.ku()).min(nn - 1);
                for k in lo..=hi {
                    let w = d1.mat.get(i, k);
                    if w != 0.0 {
                        j.add_to(i, k, -u[i] * w);
                    }
                }
                j.add_to(i, i, -ux[i]);
            }
            LinOp::Banded(j)
        }
    };
    let exact_vec = move |t: f64| -> Vec<f64> { vec![t.cos(); n] };
    let exact_dx_vec = move |_t: f64| -> Vec<f64> { vec![0.0; n] };
    let discrete_dx = {
        let d1 = d1.clone();
        let bc = bc.clone();
        move |t: f64, u: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; u.len()];
            d1.apply_with_bc(u, &bc(t), &mut out);
            out
        }
    };
    Ok(IvpProblem {
        label: format!("burgers(n={n},order={order})"),
        dim: n,
        u0,
        t_end: 1.0,
        rhs: Box::new(rhs),
        jacobian: Some(Box::new(jac)),
        affine: None,
        exact: Some(Box::new(exact_vec)),
        exact_dx: Some(Box::new(exact_dx_vec)),
        discrete_dx: Some(Box::new(discrete_dx)),
        spatial_error_floor: 1e-11,
    })
}

// ---------------------------------------------------------------------------
// 2D Chebyshev advection-diffusion
// ---------------------------------------------------------------------------

/// `u_t + u_x + u_y = nu (u_xx + u_yy) + f` on `[-1,1]^2` with `nu = 0.1`,
/// discretized on an `n x n` Chebyshev tensor grid with Dirichlet boundary
/// eliminated (interior dimension `(n-2)^2`). The derivative error functional
/// is the gradient magnitude `|grad u|`.
pub fn mol_2d_advdiff(n: usize) -> IvpProblem<f64> {
    assert!(n >= 8);
    let nu = 0.1;
    let pi = std::f64::consts::PI;
    let decay = pi * pi / 8.0;
    let exact = move |x: f64, y: f64, t: f64| -> f64 {
        (-decay * t).exp() * (pi * x + pi / 4.0).sin() * (pi * y + pi / 4.0).sin()
    };
    let grad = move |x: f64, y: f64, t: f64| -> (f64, f64) {
        let e = (-decay * t).exp();
        (
            pi * e * (pi * x + pi / 4.0).cos() * (pi * y + pi / 4.0).sin(),
            pi * e * (pi * x + pi / 4.0).sin() * (pi * y + pi / 4.0).cos(),
        )
    };
    let forcing = move |x: f64, y: f64, t: f64| -> f64 {
        let (gx, gy) = grad(x, y, t);
        (-decay + 2.0 * nu * pi * pi) * exact(x, y, t) + gx + gy
    };

    let pts = cheb_points(n);
    let d = cheb_diff(n);
    let d2 = &d * &d;
    let eye = DMatrix::<f64>::identity(n, n);
    let dx = d.kronecker(&eye);
    let dy = eye.kronecker(&d);
    let dx2 = d2.kronecker(&eye);
    let dy2 = eye.kronecker(&d2);
    let nn = n * n;
    let mut lfull = DMatrix::<f64>::zeros(nn, nn);
    for r in 0..nn {
        for cidx in 0..nn {
            lfull[(r, cidx)] =
                -(dx[(r, cidx)] + dy[(r, cidx)]) + nu * (dx2[(r, cidx)] + dy2[(r, cidx)]);
        }
    }

    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let idx = i * n + j;
            if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                boundary.push(idx);
            } else {
                interior.push(idx);
            }
        }
    }
    let m = interior.len();
    let mut l_int = DMatrix::<f64>::zeros(m, m);
    let mut l_bnd = DMatrix::<f64>::zeros(m, boundary.len());
    for (r, &fi) in interior.iter().enumerate() {
        for (cidx, &fj) in interior.iter().enumerate() {
            l_int[(r, cidx)] = lfull[(fi, fj)];
        }
        for (cidx, &fj) in boundary.iter().enumerate() {
            l_bnd[(r, cidx)] = lfull[(fi, fj)];
        }
    }

    let coords: Vec<(f64, f64)> = (0..nn).map(|idx| (pts[idx / n], pts[idx % n])).collect();
    let interior = Arc::new(interior);
    let boundary = Arc::new(boundary);
    let coords = Arc::new(coords);
    let l_bnd = Arc::new(l_bnd);
    let l_int = Arc::new(l_int);
    let dx = Arc::new(dx);
    let dy = Arc::new(dy);

    let u0: Vec<f64> = interior
        .iter()
        .map(|&idx| {
            let (x, y) = coords[idx];
            exact(x, y, 0.0)
        })
        .collect();

    let forcing_total = {
        let interior = interior.clone();
        let boundary = boundary.clone();
        let coords = coords.clone();
        let l_bnd = l_bnd.clone();
        Arc::new(move |t: f64, out: &mut [f64]| {
            let ub: Vec<f64> = boundary
                .iter()
                .map(|&idx| {
                    let (x, y) = coords[idx];
                    exact(x, y, t)
                })
                .collect();
            for (r, o) in out.iter_mut().enumerate() {
                let (x, y) = coords[interior[r]];
                let mut acc = forcing(x, y, t);
                for (cidx, &ubv) in ub.iter().enumerate() {
                    acc += l_bnd[(r, cidx)] * ubv;
                }
                *o = acc;
            }
        })
    };
    let rhs = {
        let l_int = l_int.clone();
        let ft = forcing_total.clone();
        move |t: f64, u: &[f64], out: &mut [f64]| {
            let uv = nalgebra::DVector::from_column_slice(u);
            let r = l_int.as_ref() * uv;
            out.copy_from_slice(r.as_slice());
            let mut gv = vec![0.0; u.len()];
            ft(t, &mut gv);
            for (o, gi) in out.iter_mut().zip(&gv) {
                *o += gi;
            }
        }
    };
    let jac_mat = l_int.as_ref().clone();
    let exact_vec = {
        let interior = interior.clone();
        let coords = coords.clone();
        move |t: f64| -> Vec<f64> {
            interior
                .iter()
                .map(|&idx| {
                    let (x, y) = coords[idx];
                    exact(x, y, t)
                })
                .collect()
        }
    };
    let exact_dx_vec = {
        let interior = interior.clone();
        let coords = coords.clone();
        move |t: f64| -> Vec<f64> {
            interior
                .iter()
                .map(|&idx| {
                    let (x, y) = coords[idx];
                    let (gx, gy) = grad(x, y, t);
                    (gx * gx + gy * gy).sqrt()
                })
                .collect()
        }
    };
    let discrete_dx = {
        let interior = interior.clone();
        let boundary = boundary.clone();
        let coords = coords.clone();
        let dx = dx.clone();
        let dy = dy.clone();
        move |t: f64, u: &[f64]| -> Vec<f64> {
            let mut full = nalgebra::DVector::<f64>::zeros(nn);
            for (r, &idx) in interior.iter().enumerate() {
                full[idx] = u[r];
            }
            for &idx in boundary.iter() {
                let (x, y) = coords[idx];
                full[idx] = exact(x, y, t);
            }
            let gx = dx.as_ref() * &full;
            let gy = dy.as_ref() * &full;
            interior
                .iter()
                .map(|&idx| (gx[idx] * gx[idx] + gy[idx] * gy[idx]).sqrt())
                .collect()
        }
    };
    let forcing_box = {
        let ft = forcing_total.clone();
        move |t: f64, out: &mut [f64]| ft(t, out)
    };
    IvpProblem {
        label: format!("advdiff_2d(n={n})"),
        dim: m,
        u0,
        t_end: 1.0,
        rhs: Box::new(rhs),
        jacobian: Some(Box::new(move |_t, _u| LinOp::Dense(jac_mat.clone()))),
        affine: Some(AffinePart {
            op: AffineOp::Constant(LinOp::Dense(l_int.as_ref().clone())),
            forcing: Box::new(forcing_box),
        }),
        exact: Some(Box::new(exact_vec)),
        exact_dx: Some(Box::new(exact_dx_vec)),
        discrete_dx: Some(Box::new(discrete_dx)),
        spatial_error_floor: 1e-10,
    }
}

// ---------------------------------------------------------------------------
// Van der Pol
// ---------------------------------------------------------------------------

/// Van der Pol oscillator `x' = y`, `y' = mu (1 - x^2) y - x`, `u0 = (2, 0)`,
/// `T = 10`. No closed-form solution; reference values come from the
/// convergence module's cached explicit-RK4 run.
pub fn van_der_pol(mu: f64) -> IvpProblem<f64> {
    IvpProblem {
        label: format!("van_der_pol(mu={mu})"),
        dim: 2,
        u0: vec![2.0, 0.0],
        t_end: 10.0,
        rhs: Box::new(move |_t, u, out| {
            out[0] = u[1];
            out[1] = mu * (1.0 - u[0] * u[0]) * u[1] - u[0];
        }),
        jacobian: Some(Box::new(move |_t, u| {
            let mut j = DMatrix::<f64>::zeros(2, 2);
            j[(0, 1)] = 1.0;
            j[(1, 0)] = -2.0 * mu * u[0] * u[1] - 1.0;
            j[(1, 1)] = mu * (1.0 - u[0] * u[0]);
            LinOp::Dense(j)
        })),
        affine: None,
        exact: None,
        exact_dx: None,
        discrete_dx: None,
        spatial_error_floor: 1e-9,
    }
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// Problem ids accepted by [`build`].
pub const REGISTRY_IDS: [&str; 13] = [
    "prothero_robinson",
    "heat",
    "schrodinger",
    "adv_diff",
    "advection",
    "var_heat_x",
    "var_heat_t_slow",
    "var_heat_t_fast",
    "var_heat_t_fast_alt",
    "biharmonic",
    "burgers",
    "advdiff_2d",
    "van_der_pol",
];

/// Build a registry problem, optionally overriding the grid resolution.
pub fn build(id: &str, n_override: Option<usize>) -> Result<Problem, ProblemError> {
    let pde = |p: Pde1d| -> Result<Problem, ProblemError> {
        let (n_def, order) = p.defaults();
        mol_1d(p, n_override.unwrap_or(n_def), order)
    };
    match id {
        "prothero_robinson" => {
            Ok(Problem::Real(prothero_robinson(-1e4, PrProfile::Paper, 10.0)))
        }
        "heat" => pde(Pde1d::Heat),
        "schrodinger" => pde(Pde1d::Schrodinger),
        "adv_diff" => pde(Pde1d::AdvDiff),
        "advection" => pde(Pde1d::Advection),
        "var_heat_x" => pde(Pde1d::VarHeatX),
        "var_heat_t_slow" => pde(Pde1d::VarHeatTSlow),
        "var_heat_t_fast" => pde(Pde1d::VarHeatTFast),
        "var_heat_t_fast_alt" => pde(Pde1d::VarHeatTFastAlt),
        "biharmonic" => pde(Pde1d::Biharmonic),
        "burgers" => pde(Pde1d::Burgers),
        "advdiff_2d" => Ok(Problem::Real(mol_2d_advdiff(n_override.unwrap_or(30)))),
        "van_der_pol" => Ok(Problem::Real(van_der_pol(500.0))),
        other => Err(ProblemError::UnknownId(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate, Stepper, StepperState};
    use crate::tableau::builtin;

    #[test]
    fn prothero_robinson_exact_values() {
        let p = prothero_robinson(-1e4, PrProfile::Paper, 10.0);
        let exact = p.exact.as_ref().unwrap();
        let u10 = exact(10.0)[0];
        let expect = (-10.0f64).exp() * 100.0f64.sin() + 200.0f64.cos();
        assert!((u10 - expect).abs() < 1e-15);
        assert_eq!(p.u0, vec![1.0]);
        assert!(p.affine_consistency(16).unwrap() < 1e-9);
    }

    #[test]
    fn prothero_robinson_lambda_zero_is_quadrature() {
        let p = prothero_robinson(0.0, PrProfile::Paper, 1.0);
        let t = builtin("dirk744").unwrap();
        let res = integrate(&t, &p, 1.0 / 256.0, 256).unwrap();
        assert!(res.err_u.unwrap() < 1e-8);
    }

    #[test]
    fn prothero_robinson_transient_decays() {
        let mut p = prothero_robinson(-1e4, PrProfile::Paper, 1.0);
        p.u0[0] += 1.0;
        let t = builtin("dirk744").unwrap();
        let res = integrate(&t, &p, 1.0 / 512.0, 512).unwrap();
        // the transient e^{lambda t} is annihilated; only integration error remains
        assert!(res.err_u.unwrap() < 1e-4, "err {}", res.err_u.unwrap());
    }

    #[test]
    fn heat_manufactured_solution_consistency() {
        // residual rhs(t, exact(t)) - d/dt exact(t) is pure spatial truncation
        let p = match mol_1d(Pde1d::Heat, 400, 4).unwrap() {
            Problem::Real(p) => p,
            _ => unreachable!(),
        };
        let t = 0.37;
        let exact = p.exact.as_ref().unwrap();
        let u = exact(t);
        let mut f = vec![0.0; p.dim];
        (p.rhs)(t, &u, &mut f);
        let g = Grid1D::new(400);
        let mut worst = 0.0f64;
        for (i, &x) in g.x.iter().enumerate() {
            let ut = -20.0 * (20.0 * t).sin() * (10.0 * x + 10.0).sin();
            worst = worst.max((f[i] - ut).abs());
        }
        assert!(worst < 2e-4, "spatial residual {worst}");
        assert!(p.affine_consistency(8).unwrap() < 1e-7);
    }

    #[test]
    fn heat_exact_at_t0() {
        let p = match mol_1d(Pde1d::Heat, 50, 4).unwrap() {
            Problem::Real(p) => p,
            _ => unreachable!(),
        };
        let g = Grid1D::new(50);
        for (i, &x) in g.x.iter().enumerate() {
            assert!((p.u0[i] - (10.0 * x + 10.0).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn heat_forcing_formula() {
        // g(t) = rhs(t, 0); away from the boundary it equals the forcing
        let p = match mol_1d(Pde1d::Heat, 300, 4).unwrap() {
            Problem::Real(p) => p,
            _ => unreachable!(),
        };
        let t = 0.77;
        let zero = vec![0.0; p.dim];
        let mut g = vec![0.0; p.dim];
        (p.rhs)(t, &zero, &mut g);
        let grid = Grid1D::new(300);
        let mid = 150;
        let x = grid.x[mid];
        let expect = -20.0 * (20.0 * t).sin() * (10.0 * x + 10.0).sin()
            + 100.0 * (20.0 * t).cos() * (10.0 * x + 10.0).sin();
        assert!((g[mid] - expect).abs() < 1e-10);
    }

    #[test]
    fn advection_forcing_is_boundary_only() {
        let p = match mol_1d(Pde1d::Advection, 200, 4).unwrap() {
            Problem::Real(p) => p,
            _ => unreachable!(),
        };
        let t = 0.3;
        let zero = vec![0.0; p.dim];
        let mut g = vec![0.0; p.dim];
        (p.rhs)(t, &zero, &mut g);
        // interior rows away from the left boundary see zero forcing
        for i in 10..p.dim {
            assert!(g[i].abs() < 1e-12, "row {i}: {}", g[i]);
        }
        assert!(p.affine_consistency(8).unwrap() < 1e-9);
    }

    #[test]
    fn schrodinger_manufactured_consistency() {
        let p = match mol_1d(Pde1d::Schrodinger, 400, 4).unwrap() {
            Problem::Complex(p) => p,
            _ => unreachable!(),
        };
        let t = 0.6;
        let exact = p.exact.as_ref().unwrap();
        let u = exact(t);
        let mut f = vec![Complex64::new(0.0, 0.0); p.dim];
        (p.rhs)(t, &u, &mut f);
        let g = Grid1D::new(400);
        let mut worst = 0.0f64;
        for (i, &x) in g.x.iter().enumerate() {
            let e = (-(x - t) * (x - t)).exp();
            let ut = e * (10.0 * x).cos() * (t.cos() + 2.0 * (x - t) * t.sin());
            worst = worst.max((f[i] - Complex64::new(ut, 0.0)).norm());
        }
        assert!(worst < 1e-5, "spatial residual {worst}");
    }

    #[test]
    fn var_heat_consistency() {
        for pde in [Pde1d::VarHeatX, Pde1d::VarHeatTSlow, Pde1d::VarHeatTFast, Pde1d::VarHeatTFastAlt] {
            let p = match mol_1d(pde, 300, 6).unwrap() {
                Problem::Real(p) => p,
                _ => unreachable!(),
            };
            let t = 0.41;
            let exact = p.exact.as_ref().unwrap();
            let u = exact(t);
            let mut f = vec![0.0; p.dim];
            (p.rhs)(t, &u, &mut f);
            let g = Grid1D::new(300);
            let mut worst = 0.0f64;
            for (i, &x) in g.x.iter().enumerate() {
                let ut = -20.0 * (20.0 * t).sin() * (10.0 * x + 10.0).sin();
                worst = worst.max((f[i] - ut).abs());
            }
            assert!(worst < 1e-4, "{pde:?}: spatial residual {worst}");
            assert!(p.affine_consistency(8).unwrap() < 1e-8, "{pde:?}");
        }
    }

    #[test]
    fn biharmonic_consistency() {
        let p = match mol_1d(Pde1d::Biharmonic, 200, 2).unwrap() {
            Problem::Real(p) => p,
            _ => unreachable!(),
        };
        let t = 0.52;
        let exact = p.exact.as_ref().unwrap();
        let u = exact(t);
        let mut f = vec![0.0; p.dim];
        (p.rhs)(t, &u, &mut f);
        // u is constant in space: rhs must equal u_t = -15 sin(15 t) to roundoff
        let ut = -15.0 * (15.0 * t).sin();
        for (i, fi) in f.iter().enumerate() {
            assert!((fi - ut).abs() < 1e-6, "row {i}: {fi} vs {ut}");
        }
    }

    #[test]
    fn burgers_rhs_and_jacobian_consistent() {
        let p = match mol_1d(Pde1d::Burgers, 120, 6).unwrap() {
            Problem::Real(p) => p,
            _ => unreachable!(),
        };
        let t = 0.4;
        let n = p.dim;
        let mut u = vec![0.0; n];
        let mut sx = 0.77f64;
        for v in u.iter_mut() {
            sx = (sx * 997.0 + 1.3) % 1.0;
            *v = 0.5 + 0.3 * sx;
        }
        let jac = p.jacobian.as_ref().unwrap()(t, &u);
        let mut f0 = vec![0.0; n];
        (p.rhs)(t, &u, &mut f0);
        let h = 1e-6;
        for probe in [3usize, n / 2, n - 2] {
            let mut up = u.clone();
            up[probe] += h;
            let mut f1 = vec![0.0; n];
            (p.rhs)(t, &up, &mut f1);
            for i in 0..n {
                let fd = (f1[i] - f0[i]) / h;
                let an = match &jac {
                    LinOp::Banded(b) => b.get(i, probe),
                    _ => unreachable!(),
                };
                assert!(
                    (fd - an).abs() <= 1e-4 * (1.0 + an.abs()),
                    "J[{i}][{probe}]: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn burgers_integrates_exactly_in_space() {
        // u = cos(t) is constant in space: only temporal error remains
        let p = match mol_1d(Pde1d::Burgers, 60, 6).unwrap() {
            Problem::Real(p) => p,
            _ => unreachable!(),
        };
        let t = builtin("dirk744").unwrap();
        let res = integrate(&t, &p, 0.05, 20).unwrap();
        assert!(res.err_u.unwrap() < 1e-6, "err {}", res.err_u.unwrap());
    }

    #[test]
    fn van_der_pol_examples() {
        let p = van_der_pol(500.0);
        let mut f = vec![0.0; 2];
        (p.rhs)(0.0, &[2.0, 0.0], &mut f);
        assert_eq!(f, vec![0.0, -2.0]);
        let j = p.jacobian.as_ref().unwrap()(0.0, &[2.0, 0.0]);
        match j {
            LinOp::Dense(m) => {
                assert_eq!(m[(0, 0)], 0.0);
                assert_eq!(m[(0, 1)], 1.0);
                assert_eq!(m[(1, 0)], -1.0);
                assert_eq!(m[(1, 1)], -1500.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn van_der_pol_mu_zero_conserves_energy() {
        let p = van_der_pol(0.0);
        let t = builtin("dirk1255").unwrap();
        let mut stepper = Stepper::new(&t, &p);
        let mut state = StepperState::initial(&p);
        for _ in 0..200 {
            stepper.step(&mut state, 0.01).unwrap();
        }
        let e = state.u_n[0].powi(2) + state.u_n[1].powi(2);
        assert!((e - 4.0).abs() < 1e-6, "energy drifted to {e}");
    }

    #[test]
    fn advdiff_2d_dimensions_and_consistency() {
        let p = mol_2d_advdiff(30);
        assert_eq!(p.dim, 784);
        let t = 0.25;
        let exact = p.exact.as_ref().unwrap();
        let u = exact(t);
        let mut f = vec![0.0; p.dim];
        (p.rhs)(t, &u, &mut f);
        let decay = std::f64::consts::PI.powi(2) / 8.0;
        let mut worst = 0.0f64;
        for (i, fi) in f.iter().enumerate() {
            worst = worst.max((fi - (-decay) * u[i]).abs());
        }
        assert!(worst < 1e-7, "residual {worst}");
        assert!(p.affine_consistency(6).unwrap() < 1e-9);
    }

    #[test]
    fn advdiff_2d_exact_at_t0_is_symmetric_product() {
        let n = 12;
        let p = mol_2d_advdiff(n);
        let pts = cheb_points(n);
        let pi = std::f64::consts::PI;
        // first interior node is (pts[1], pts[1])
        let expect = (pi * pts[1] + pi / 4.0).sin() * (pi * pts[1] + pi / 4.0).sin();
        assert!((p.u0[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn registry_ids_build() {
        for id in REGISTRY_IDS {
            let n = Some(match id {
                "advdiff_2d" => 10,
                _ => 64,
            });
            let p = build(id, n).unwrap();
            assert!(p.dim() >= 1, "{id}");
        }
        assert!(build("nope", None).is_err());
    }

    #[test]
    fn grid_too_small_rejected() {
        assert!(mol_1d(Pde1d::Heat, 3, 4).is_err());
    }
}
