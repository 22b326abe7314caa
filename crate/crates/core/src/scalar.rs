//! Scalar abstraction: the numeric core is generic over the floating-point
//! type through [`Real`], with `f64` as the working precision of all shipped
//! presets and tests.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by every solver in this crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lift an `f64` literal into the scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }

    /// Lossy view as `f64`, for reporting and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Chart point or tangent vector in chart coordinates.
pub type V2<S> = [S; 2];

/// 2x2 matrix in chart coordinates, row major.
pub type M2<S> = [[S; 2]; 2];

#[inline]
pub fn add<S: Real>(a: V2<S>, b: V2<S>) -> V2<S> {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub<S: Real>(a: V2<S>, b: V2<S>) -> V2<S> {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale<S: Real>(a: V2<S>, t: S) -> V2<S> {
    [a[0] * t, a[1] * t]
}

#[inline]
pub fn dot<S: Real>(a: V2<S>, b: V2<S>) -> S {
    a[0] * b[0] + a[1] * b[1]
}

/// Euclidean chart norm.
#[inline]
pub fn norm<S: Real>(a: V2<S>) -> S {
    dot(a, a).sqrt()
}

/// Quadratic form `a^T m b`.
#[inline]
pub fn quad<S: Real>(m: M2<S>, a: V2<S>, b: V2<S>) -> S {
    a[0] * (m[0][0] * b[0] + m[0][1] * b[1]) + a[1] * (m[1][0] * b[0] + m[1][1] * b[1])
}

/// Matrix-vector product.
#[inline]
pub fn matvec<S: Real>(m: M2<S>, a: V2<S>) -> V2<S> {
    [
        m[0][0] * a[0] + m[0][1] * a[1],
        m[1][0] * a[0] + m[1][1] * a[1],
    ]
}

#[inline]
pub fn det<S: Real>(m: M2<S>) -> S {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

#[inline]
pub fn inverse<S: Real>(m: M2<S>) -> M2<S> {
    let d = det(m);
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

/// Eigenvalues of a (not necessarily symmetric) 2x2 matrix with real spectrum;
/// returns the pair sorted by absolute value, largest first.
pub fn real_eigenvalues<S: Real>(m: M2<S>) -> (S, S) {
    let half = S::of(0.5);
    let tr = m[0][0] + m[1][1];
    let disc = (tr * tr - S::of(4.0) * det(m)).max(S::zero()).sqrt();
    let a = half * (tr + disc);
    let b = half * (tr - disc);
    if a.abs() >= b.abs() {
        (a, b)
    } else {
        (b, a)
    }
}
