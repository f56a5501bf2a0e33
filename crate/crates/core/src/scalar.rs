//! Scalar field abstraction: problems and integrators work over `f64` or
//! `Complex<f64>` states through a single trait bound.

use num_complex::Complex64;

/// Field of the state vector: real (`f64`) or complex (`Complex64`).
///
/// The associated real type is fixed to `f64`; norms are taken in modulus.
pub trait Scalar: nalgebra::ComplexField<RealField = f64> + Copy + Send + Sync + 'static {
    /// Lift a real number into the field.
    fn from_re(x: f64) -> Self {
        Self::from_real(x)
    }

    /// Multiply by a real scalar.
    fn re_mul(self, x: f64) -> Self {
        self * Self::from_real(x)
    }
}

impl Scalar for f64 {}
impl Scalar for Complex64 {}

/// Max-norm (modulus) of a slice.
pub fn norm_inf<S: Scalar>(v: &[S]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.modulus()))
}

/// `out = a` (copy).
pub fn copy_into<S: Scalar>(a: &[S], out: &mut [S]) {
    out.copy_from_slice(a);
}

/// `y += alpha * x` with real `alpha`.
pub fn axpy<S: Scalar>(alpha: f64, x: &[S], y: &mut [S]) {
    if alpha == 0.0 {
        return;
    }
    let a = S::from_re(alpha);
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_use_modulus() {
        let v = [Complex64::new(3.0, 4.0), Complex64::new(0.0, -1.0)];
        assert_eq!(norm_inf(&v), 5.0);
        let w = [1.0, -7.0, 2.0];
        assert_eq!(norm_inf(&w), 7.0);
    }

    #[test]
    fn axpy_accumulates() {
        let x = [1.0, 2.0];
        let mut y = [10.0, 20.0];
        axpy(0.5, &x, &mut y);
        assert_eq!(y, [10.5, 21.0]);
    }
}
