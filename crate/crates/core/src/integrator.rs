//! Fixed-step DIRK time stepping for initial value problems `u' = f(t, u)`.
//!
//! Stages are solved in sequence. Each implicit stage solves
//! `g = u_n + dt * sum_{j<i} a_ij F_j + dt * a_ii f(t_n + c_i dt, g)`
//! by Newton iteration with the Jacobian refreshed every iteration; affine
//! problems (`f = L u + g(t)`) instead take a direct linear solve, with the
//! factorization of `I - dt a_ii L` cached per distinct diagonal entry while
//! the step size is unchanged. For stiffly accurate schemes the update is the
//! last stage value verbatim, bit-identical.

use crate::linalg::{Banded, BandedLu, SingularMatrix};
use crate::scalar::{axpy, norm_inf, Scalar};
use crate::tableau::Tableau;
use nalgebra::{DMatrix, DVector, Dyn};
use thiserror::Error;

pub type RhsFn<S> = Box<dyn Fn(f64, &[S], &mut [S]) + Send + Sync>;
pub type JacFn<S> = Box<dyn Fn(f64, &[S]) -> LinOp<S> + Send + Sync>;
pub type SolFn<S> = Box<dyn Fn(f64) -> Vec<S> + Send + Sync>;
pub type ForcingFn<S> = Box<dyn Fn(f64, &mut [S]) + Send + Sync>;
pub type DxFn<S> = Box<dyn Fn(f64, &[S]) -> Vec<S> + Send + Sync>;

/// Linear operator with a solve-capable representation.
pub enum LinOp<S: Scalar> {
    Dense(DMatrix<S>),
    Banded(Banded<S>),
    Diagonal(Vec<S>),
}

impl<S: Scalar> LinOp<S> {
    pub fn dim(&self) -> usize {
        match self {
            LinOp::Dense(m) => m.nrows(),
            LinOp::Banded(b) => b.n(),
            LinOp::Diagonal(d) => d.len(),
        }
    }

    /// `out = L v`.
    pub fn apply(&self, v: &[S], out: &mut [S]) {
        match self {
            LinOp::Dense(m) => {
                let vv = DVector::from_column_slice(v);
                let r = m * vv;
                out.copy_from_slice(r.as_slice());
            }
            LinOp::Banded(b) => b.apply(v, out),
            LinOp::Diagonal(d) => {
                for ((o, di), vi) in out.iter_mut().zip(d).zip(v) {
                    *o = *di * *vi;
                }
            }
        }
    }

    /// Factor `I - gamma L`.
    pub fn shifted_factor(&self, gamma: f64) -> Result<ShiftedFactor<S>, SingularMatrix> {
        let g = S::from_re(gamma);
        match self {
            LinOp::Dense(m) => {
                let n = m.nrows();
                let mut sys = -m * g;
                for i in 0..n {
                    sys[(i, i)] += S::one();
                }
                let lu = sys.lu();
                // nalgebra's LU does not expose singularity; probe the diagonal of U
                let u = lu.u();
                for i in 0..n {
                    if u[(i, i)] == S::zero() {
                        return Err(SingularMatrix { column: i });
                    }
                }
                Ok(ShiftedFactor::Dense(Box::new(lu)))
            }
            LinOp::Banded(b) => {
                let mut sys = Banded::zeros(b.n(), b.kl(), b.ku());
                sys.add_scaled(-g, b);
                for i in 0..b.n() {
                    sys.add_to(i, i, S::one());
                }
                Ok(ShiftedFactor::Banded(sys.lu()?))
            }
            LinOp::Diagonal(d) => {
                let mut inv = Vec::with_capacity(d.len());
                for (i, di) in d.iter().enumerate() {
                    let denom = S::one() - g * *di;
                    if denom.modulus() < 1e-300 {
                        return Err(SingularMatrix { column: i });
                    }
                    inv.push(S::one() / denom);
                }
                Ok(ShiftedFactor::Diagonal(inv))
            }
        }
    }
}

/// Factorized `I - gamma L`.
pub enum ShiftedFactor<S: Scalar> {
    Dense(Box<nalgebra::LU<S, Dyn, Dyn>>),
    Banded(BandedLu<S>),
    Diagonal(Vec<S>), // reciprocals
}

impl<S: Scalar> ShiftedFactor<S> {
    pub fn solve_in_place(&self, x: &mut [S]) {
        match self {
            ShiftedFactor::Dense(lu) => {
                let mut v = DVector::from_column_slice(x);
                assert!(lu.solve_mut(&mut v), "dense solve failed");
                x.copy_from_slice(v.as_slice());
            }
            ShiftedFactor::Banded(lu) => lu.solve_in_place(x),
            ShiftedFactor::Diagonal(inv) => {
                for (xi, ri) in x.iter_mut().zip(inv) {
                    *xi *= *ri;
                }
            }
        }
    }
}

/// Affine right-hand side `f(t, u) = L(t) u + g(t)`.
pub struct AffinePart<S: Scalar> {
    pub op: AffineOp<S>,
    /// Writes `g(t)` into the output slice.
    pub forcing: ForcingFn<S>,
}

pub enum AffineOp<S: Scalar> {
    Constant(LinOp<S>),
    /// Assembled per stage time; no factorization reuse.
    TimeDependent(Box<dyn Fn(f64) -> LinOp<S> + Send + Sync>),
}

/// An initial value problem on `[0, t_end]`.
pub struct IvpProblem<S: Scalar> {
    pub label: String,
    pub dim: usize,
    pub u0: Vec<S>,
    pub t_end: f64,
    pub rhs: RhsFn<S>,
    /// Analytic Jacobian; when absent a dense finite-difference fallback is used.
    pub jacobian: Option<JacFn<S>>,
    /// Fast path for affine problems.
    pub affine: Option<AffinePart<S>>,
    pub exact: Option<SolFn<S>>,
    /// Exact spatial-derivative field (PDE problems).
    pub exact_dx: Option<SolFn<S>>,
    /// Same-order discrete spatial derivative of a numerical solution.
    pub discrete_dx: Option<DxFn<S>>,
    /// Error level where spatial discretization error dominates (0 for ODEs).
    pub spatial_error_floor: f64,
}

impl<S: Scalar> IvpProblem<S> {
    /// Max deviation `|rhs(t,u) - (L(t) u + g(t))|` on pseudo-random probes.
    pub fn affine_consistency(&self, samples: usize) -> Option<f64> {
        let aff = self.affine.as_ref()?;
        let mut worst = 0.0f64;
        let mut x = 0.42f64;
        for k in 0..samples {
            let t = self.t_end * (k as f64 + 0.3) / samples as f64;
            let u: Vec<S> = (0..self.dim)
                .map(|_| {
                    x = (x * 9301.0 + 49297.0) % 233280.0;
                    S::from_re(x / 233280.0 - 0.5)
                })
                .collect();
            let mut fu = vec![S::zero(); self.dim];
            (self.rhs)(t, &u, &mut fu);
            let mut lu = vec![S::zero(); self.dim];
            match &aff.op {
                AffineOp::Constant(op) => op.apply(&u, &mut lu),
                AffineOp::TimeDependent(make) => make(t).apply(&u, &mut lu),
            }
            let mut g = vec![S::zero(); self.dim];
            (aff.forcing)(t, &mut g);
            for i in 0..self.dim {
                worst = worst.max((fu[i] - lu[i] - g[i]).modulus());
            }
        }
        Some(worst)
    }
}

/// Newton iteration controls.
#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-12, max_iter: 25 }
    }
}

/// Solver work counters (monotone nondecreasing).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub newton_iters: u64,
    pub linear_solves: u64,
    pub rejected: u64,
}

/// Time-march state.
#[derive(Clone, Debug)]
pub struct StepperState<S> {
    pub t_n: f64,
    pub u_n: Vec<S>,
    pub stats: SolveStats,
}

impl<S: Scalar> StepperState<S> {
    pub fn initial(p: &IvpProblem<S>) -> Self {
        StepperState { t_n: 0.0, u_n: p.u0.clone(), stats: SolveStats::default() }
    }
}

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("Newton did not converge at stage {stage}: residual {residual:e} after {iterations} iterations")]
    NewtonNonConvergence { stage: usize, iterations: usize, residual: f64 },
    #[error("singular stage system at stage {stage}: {source}")]
    SingularStage {
        stage: usize,
        #[source]
        source: SingularMatrix,
    },
}

/// Cached factorizations of `I - dt a_ii L`, keyed by the diagonal entry while
/// `dt` is unchanged. Local to one integration.
pub struct FactorCache<S: Scalar> {
    dt_bits: u64,
    entries: Vec<(u64, ShiftedFactor<S>)>,
}

impl<S: Scalar> FactorCache<S> {
    pub fn new() -> Self {
        FactorCache { dt_bits: 0, entries: Vec::new() }
    }

    fn get_or_factor(
        &mut self,
        op: &LinOp<S>,
        dt: f64,
        aii: f64,
    ) -> Result<&ShiftedFactor<S>, SingularMatrix> {
        if self.dt_bits != dt.to_bits() {
            self.entries.clear();
            self.dt_bits = dt.to_bits();
        }
        let key = aii.to_bits();
        if let Some(pos) = self.entries.iter().position(|(k, _)| *k == key) {
            return Ok(&self.entries[pos].1);
        }
        let f = op.shifted_factor(dt * aii)?;
        self.entries.push((key, f));
        Ok(&self.entries.last().unwrap().1)
    }
}

impl<S: Scalar> Default for FactorCache<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Owns the per-integration caches for repeated stepping.
pub struct Stepper<'a, S: Scalar> {
    pub tableau: &'a Tableau,
    pub problem: &'a IvpProblem<S>,
    pub opts: NewtonOptions,
    cache: FactorCache<S>,
}

impl<'a, S: Scalar> Stepper<'a, S> {
    pub fn new(tableau: &'a Tableau, problem: &'a IvpProblem<S>) -> Self {
        Stepper { tableau, problem, opts: NewtonOptions::default(), cache: FactorCache::new() }
    }

    /// Advance one step of size `dt`.
    pub fn step(&mut self, state: &mut StepperState<S>, dt: f64) -> Result<(), IntegrateError> {
        let t = self.tableau;
        let p = self.problem;
        let s = t.s();
        let m = p.dim;
        let mut f_stages: Vec<Vec<S>> = Vec::with_capacity(s);
        let mut g_last: Vec<S> = Vec::new();

        for i in 0..s {
            let ts = state.t_n + t.c()[i] * dt;
            let aii = t.a(i, i);
            // known part: u_n + dt sum_{j<i} a_ij F_j
            let mut known = state.u_n.clone();
            for (j, fj) in f_stages.iter().enumerate() {
                axpy(dt * t.a(i, j), fj, &mut known);
            }

            let g = if aii == 0.0 {
                known
            } else if let Some(aff) = &p.affine {
                // (I - dt a_ii L) g = known + dt a_ii g(t_s)
                let mut rhs_vec = vec![S::zero(); m];
                (aff.forcing)(ts, &mut rhs_vec);
                let mut x = known;
                axpy(dt * aii, &rhs_vec, &mut x);
                match &aff.op {
                    AffineOp::Constant(op) => {
                        let f = self
                            .cache
                            .get_or_factor(op, dt, aii)
                            .map_err(|e| IntegrateError::SingularStage { stage: i + 1, source: e })?;
                        f.solve_in_place(&mut x);
                    }
                    AffineOp::TimeDependent(make) => {
                        let op = make(ts);
                        let f = op
                            .shifted_factor(dt * aii)
                            .map_err(|e| IntegrateError::SingularStage { stage: i + 1, source: e })?;
                        f.solve_in_place(&mut x);
                    }
                }
                state.stats.linear_solves += 1;
                x
            } else {
                let guess: &[S] = if g_last.is_empty() { &state.u_n } else { &g_last };
                newton_solve(p, ts, dt * aii, &known, guess, &self.opts, &mut state.stats)
                    .map_err(|e| e.at_stage(i + 1))?
            };

            let mut fi = vec![S::zero(); m];
            (p.rhs)(ts, &g, &mut fi);
            f_stages.push(fi);
            g_last = g;
        }

        if t.stiffly_accurate() {
            state.u_n = g_last;
        } else {
            let mut u = state.u_n.clone();
            for (j, fj) in f_stages.iter().enumerate() {
                axpy(dt * t.b()[j], fj, &mut u);
            }
            state.u_n = u;
        }
        state.t_n += dt;
        Ok(())
    }
}

/// One step with a transient cache (convenience wrapper).
pub fn step<S: Scalar>(
    t: &Tableau,
    p: &IvpProblem<S>,
    state: &mut StepperState<S>,
    dt: f64,
) -> Result<(), IntegrateError> {
    Stepper::new(t, p).step(state, dt)
}

#[derive(Debug, Error)]
pub enum NewtonFailure {
    #[error("no convergence: residual {residual:e} after {iterations} iterations")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular iteration matrix: {0}")]
    Singular(#[from] SingularMatrix),
}

impl NewtonFailure {
    fn at_stage(self, stage: usize) -> IntegrateError {
        match self {
            NewtonFailure::NonConvergence { iterations, residual } => {
                IntegrateError::NewtonNonConvergence { stage, iterations, residual }
            }
            NewtonFailure::Singular(e) => IntegrateError::SingularStage { stage, source: e },
        }
    }
}

/// Solve the stage equation `g = known + coeff f(t_s, g)` by Newton iteration.
///
/// Convergence: `||g - known - coeff f(g)||_inf <= tol (1 + ||g||_inf)`. The
/// Jacobian is re-evaluated at every iterate; on affine problems a single
/// iteration suffices.
pub fn newton_solve<S: Scalar>(
    p: &IvpProblem<S>,
    ts: f64,
    coeff: f64,
    known: &[S],
    guess: &[S],
    opts: &NewtonOptions,
    stats: &mut SolveStats,
) -> Result<Vec<S>, NewtonFailure> {
    let m = p.dim;
    let mut g = guess.to_vec();
    let mut fval = vec![S::zero(); m];
    for iter in 0..=opts.max_iter {
        (p.rhs)(ts, &g, &mut fval);
        let mut r = vec![S::zero(); m];
        for i in 0..m {
            r[i] = g[i] - known[i] - fval[i].re_mul(coeff);
        }
        let rn = norm_inf(&r);
        if rn <= opts.tol * (1.0 + norm_inf(&g)) {
            return Ok(g);
        }
        if iter == opts.max_iter {
            stats.rejected += 1;
            return Err(NewtonFailure::NonConvergence { iterations: iter, residual: rn });
        }
        let jac = match &p.jacobian {
            Some(j) => j(ts, &g),
            None => fd_jacobian(p, ts, &g),
        };
        let factor = jac.shifted_factor(coeff)?;
        for ri in r.iter_mut() {
            *ri = -*ri;
        }
        factor.solve_in_place(&mut r);
        for i in 0..m {
            g[i] += r[i];
        }
        stats.newton_iters += 1;
        stats.linear_solves += 1;
    }
    unreachable!()
}

/// Dense one-sided finite-difference Jacobian (fallback for small systems).
fn fd_jacobian<S: Scalar>(p: &IvpProblem<S>, ts: f64, u: &[S]) -> LinOp<S> {
    let m = p.dim;
    let mut f0 = vec![S::zero(); m];
    (p.rhs)(ts, u, &mut f0);
    let mut jac = DMatrix::<S>::zeros(m, m);
    let mut up = u.to_vec();
    for j in 0..m {
        let h = 1e-7 * (1.0 + u[j].modulus());
        up[j] = u[j] + S::from_re(h);
        let mut fj = vec![S::zero(); m];
        (p.rhs)(ts, &up, &mut fj);
        up[j] = u[j];
        for i in 0..m {
            jac[(i, j)] = (fj[i] - f0[i]).re_mul(1.0 / h);
        }
    }
    LinOp::Dense(jac)
}

/// Outcome of a fixed-step march.
#[derive(Debug)]
pub struct IntegrationResult<S> {
    pub state: StepperState<S>,
    /// Max-norm solution error at the final time, when an exact solution exists.
    pub err_u: Option<f64>,
    /// Max-norm error of the discrete spatial derivative, when available.
    pub err_ux: Option<f64>,
}

/// March `n_steps` fixed steps of size `dt` from `t = 0` and measure errors
/// at the final time in the max norm.
pub fn integrate<S: Scalar>(
    t: &Tableau,
    p: &IvpProblem<S>,
    dt: f64,
    n_steps: usize,
) -> Result<IntegrationResult<S>, IntegrateError> {
    assert!(dt > 0.0, "dt must be positive");
    debug_assert!(
        n_steps as f64 * dt <= p.t_end * (1.0 + 1e-9) + 1e-300,
        "march overruns t_end"
    );
    let mut stepper = Stepper::new(t, p);
    let mut state = StepperState::initial(p);
    for k in 0..n_steps {
        stepper.step(&mut state, dt)?;
        // pin the clock to k*dt to avoid accumulation drift
        state.t_n = (k + 1) as f64 * dt;
    }
    let t_final = state.t_n;
    let err_u = p.exact.as_ref().map(|ex| {
        let ue = ex(t_final);
        state
            .u_n
            .iter()
            .zip(&ue)
            .fold(0.0f64, |m, (a, b)| m.max((*a - *b).modulus()))
    });
    let err_ux = match (&p.discrete_dx, &p.exact_dx) {
        (Some(ddx), Some(ex)) => {
            let num = ddx(t_final, &state.u_n);
            let exact = ex(t_final);
            Some(
                num.iter()
                    .zip(&exact)
                    .fold(0.0f64, |m, (a, b)| m.max((*a - *b).modulus())),
            )
        }
        _ => None,
    };
    Ok(IntegrationResult { state, err_u, err_ux })
}
