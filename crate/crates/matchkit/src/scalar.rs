use num_traits::Float;
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar bound for the numeric kernels (similarities, kernel pooling,
/// metric arithmetic). Blanket-implemented for `f32` and `f64`; the
/// pipeline instantiates everything at [`crate::Real`].
pub trait Scalar: Float + Sum + Debug + Display + Send + Sync + 'static {
    fn of(x: f64) -> Self;
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
}

/// Dot product of equal-length slices.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

/// Cosine similarity with the zero-vector convention: if either vector is
/// zero the result is 0.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
    let na = norm(a);
    let nb = norm(b);
    if na == S::zero() || nb == S::zero() {
        S::zero()
    } else {
        dot(a, b) / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_self_is_one() {
        let v = [3.0f64, -4.0, 1.0];
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_zero_vector_is_zero() {
        let z = [0.0f64, 0.0];
        let v = [1.0f64, 2.0];
        assert_eq!(cosine(&z, &v), 0.0);
        assert_eq!(cosine(&v, &z), 0.0);
    }

    #[test]
    fn generic_over_f32() {
        let a = [1.0f32, 0.0];
        let b = [0.0f32, 1.0];
        assert_eq!(cosine(&a, &b), 0.0);
        assert_eq!(dot(&a, &b), 0.0);
    }
}
