//! Forward-mode dual numbers with a dynamic partial vector: every residual in
//! the construction pipeline is a polynomial (or rational) expression in the
//! unknowns, so evaluating it on duals yields the exact Jacobian row-by-row.

/// Scalar usable in the generic residual evaluators: plain `f64` for values,
/// [`Dual`] for value-plus-gradient.
pub trait AdScalar: Clone {
    fn from_f64(x: f64) -> Self;
    fn val(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn add_f(&self, x: f64) -> Self;
    fn mul_f(&self, x: f64) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

impl AdScalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn val(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn add_f(&self, x: f64) -> Self {
        self + x
    }
    fn mul_f(&self, x: f64) -> Self {
        self * x
    }
}

/// Value plus gradient with respect to `n` seed variables.
#[derive(Clone, Debug)]
pub struct Dual {
    pub v: f64,
    pub d: Vec<f64>,
}

impl Dual {
    pub fn constant(v: f64, n: usize) -> Self {
        Dual { v, d: vec![0.0; n] }
    }

    /// The `i`-th independent variable among `n`.
    pub fn variable(v: f64, i: usize, n: usize) -> Self {
        let mut d = vec![0.0; n];
        d[i] = 1.0;
        Dual { v, d }
    }
}

impl AdScalar for Dual {
    fn from_f64(x: f64) -> Self {
        // gradient length is fixed by context; constants carry an empty
        // gradient and broadcast on combination
        Dual { v: x, d: Vec::new() }
    }

    fn val(&self) -> f64 {
        self.v
    }

    fn add(&self, o: &Self) -> Self {
        let mut d = if self.d.len() >= o.d.len() { self.d.clone() } else { o.d.clone() };
        let other = if self.d.len() >= o.d.len() { &o.d } else { &self.d };
        for (di, oi) in d.iter_mut().zip(other.iter()) {
            *di += oi;
        }
        Dual { v: self.v + o.v, d }
    }

    fn sub(&self, o: &Self) -> Self {
        if self.d.len() >= o.d.len() {
            let mut d = self.d.clone();
            for (di, oi) in d.iter_mut().zip(o.d.iter()) {
                *di -= oi;
            }
            Dual { v: self.v - o.v, d }
        } else {
            let mut d: Vec<f64> = o.d.iter().map(|x| -x).collect();
            for (di, si) in d.iter_mut().zip(self.d.iter()) {
                *di += si;
            }
            Dual { v: self.v - o.v, d }
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let n = self.d.len().max(o.d.len());
        let mut d = vec![0.0; n];
        for (i, di) in d.iter_mut().enumerate() {
            let a = self.d.get(i).copied().unwrap_or(0.0);
            let b = o.d.get(i).copied().unwrap_or(0.0);
            *di = a * o.v + self.v * b;
        }
        Dual { v: self.v * o.v, d }
    }

    fn div(&self, o: &Self) -> Self {
        let n = self.d.len().max(o.d.len());
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        let mut d = vec![0.0; n];
        for (i, di) in d.iter_mut().enumerate() {
            let a = self.d.get(i).copied().unwrap_or(0.0);
            let b = o.d.get(i).copied().unwrap_or(0.0);
            *di = (a - q * b) * inv;
        }
        Dual { v: q, d }
    }

    fn neg(&self) -> Self {
        Dual { v: -self.v, d: self.d.iter().map(|x| -x).collect() }
    }

    fn add_f(&self, x: f64) -> Self {
        Dual { v: self.v + x, d: self.d.clone() }
    }

    fn mul_f(&self, x: f64) -> Self {
        Dual { v: self.v * x, d: self.d.iter().map(|di| di * x).collect() }
    }
}

/// Evaluate a generic residual map and assemble its Jacobian.
pub fn jacobian(
    f: impl Fn(&[Dual]) -> Vec<Dual>,
    x: &[f64],
) -> (Vec<f64>, nalgebra::DMatrix<f64>) {
    let n = x.len();
    let seeds: Vec<Dual> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| Dual::variable(v, i, n))
        .collect();
    let out = f(&seeds);
    let m = out.len();
    let mut jac = nalgebra::DMatrix::<f64>::zeros(m, n);
    let mut vals = Vec::with_capacity(m);
    for (r, o) in out.iter().enumerate() {
        vals.push(o.v);
        for (c, d) in o.d.iter().enumerate() {
            jac[(r, c)] = *d;
        }
    }
    (vals, jac)
}
