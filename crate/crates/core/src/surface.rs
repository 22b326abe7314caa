//! Chart models of the flat two-torus and the round two-sphere.
//!
//! The torus chart is `(x, y)` with unit periods and the identity metric.
//! The sphere uses the cylindrical chart `(phi, z)` on which the round
//! metric pulls back to `diag(1 - z^2, 1/(1 - z^2))`; the chart degenerates
//! at the poles, so points with `|z| > 1 - pole_snap` are rejected. Both
//! charts are positively oriented and have unit area density, so the
//! Riemannian area form is the coordinate area form.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::OneFormField;
use crate::scalar::{inverse, quad, Real, M2, V2};

pub const DEFAULT_POLE_SNAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SurfaceKind {
    FlatTorus,
    RoundSphere,
}

/// A chart model of a closed oriented surface of genus 0 or 1.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceModel<S> {
    pub kind: SurfaceKind,
    /// Admissibility margin at the sphere poles; unused on the torus.
    pub pole_snap: S,
}

impl<S: Real> SurfaceModel<S> {
    pub fn flat_torus() -> Self {
        SurfaceModel {
            kind: SurfaceKind::FlatTorus,
            pole_snap: S::of(DEFAULT_POLE_SNAP),
        }
    }

    pub fn round_sphere() -> Self {
        SurfaceModel {
            kind: SurfaceKind::RoundSphere,
            pole_snap: S::of(DEFAULT_POLE_SNAP),
        }
    }

    pub fn genus(&self) -> usize {
        match self.kind {
            SurfaceKind::FlatTorus => 1,
            SurfaceKind::RoundSphere => 0,
        }
    }

    pub fn homology_rank(&self) -> usize {
        2 * self.genus()
    }

    /// Chart periods: `Some(p)` in a periodic direction, `None` otherwise.
    pub fn periods(&self) -> [Option<S>; 2] {
        match self.kind {
            SurfaceKind::FlatTorus => [Some(S::one()), Some(S::one())],
            SurfaceKind::RoundSphere => [Some(S::of(2.0) * S::PI()), None],
        }
    }

    pub fn admissible(&self, q: V2<S>) -> Result<()> {
        match self.kind {
            SurfaceKind::FlatTorus => {
                if q[0].is_finite() && q[1].is_finite() {
                    Ok(())
                } else {
                    Err(Error::ChartDomain("non-finite torus coordinates".into()))
                }
            }
            SurfaceKind::RoundSphere => {
                let zmax = S::one() - self.pole_snap;
                if !q[0].is_finite() || !q[1].is_finite() {
                    Err(Error::ChartDomain("non-finite sphere coordinates".into()))
                } else if q[1].abs() > zmax {
                    Err(Error::ChartDomain(format!(
                        "|z| = {} exceeds 1 - pole_snap = {}",
                        q[1].abs(),
                        zmax
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Reduce a chart point into the fundamental domain.
    pub fn reduce(&self, q: V2<S>) -> V2<S> {
        let mut out = q;
        for (i, p) in self.periods().iter().enumerate() {
            if let Some(p) = p {
                out[i] = out[i] - (out[i] / *p).floor() * *p;
            }
        }
        out
    }

    /// Minimal chart displacement from `a` to `b` (accounting for periodicity).
    pub fn displacement(&self, a: V2<S>, b: V2<S>) -> V2<S> {
        let mut d = [b[0] - a[0], b[1] - a[1]];
        for (i, p) in self.periods().iter().enumerate() {
            if let Some(p) = p {
                d[i] = d[i] - (d[i] / *p).round() * *p;
            }
        }
        d
    }

    /// Chart distance with periodic reduction.
    pub fn chart_distance(&self, a: V2<S>, b: V2<S>) -> S {
        let d = self.displacement(a, b);
        (d[0] * d[0] + d[1] * d[1]).sqrt()
    }

    fn metric_unchecked(&self, q: V2<S>) -> M2<S> {
        match self.kind {
            SurfaceKind::FlatTorus => [[S::one(), S::zero()], [S::zero(), S::one()]],
            SurfaceKind::RoundSphere => {
                let z = q[1];
                let w = S::one() - z * z;
                [[w, S::zero()], [S::zero(), S::one() / w]]
            }
        }
    }

    /// Metric tensor at an admissible chart point.
    pub fn metric(&self, q: V2<S>) -> Result<M2<S>> {
        self.admissible(q)?;
        Ok(self.metric_unchecked(q))
    }

    pub fn metric_inverse(&self, q: V2<S>) -> Result<M2<S>> {
        Ok(inverse(self.metric(q)?))
    }

    /// Partial derivatives of the metric: `[d g / d q0, d g / d q1]`.
    pub fn metric_derivatives(&self, q: V2<S>) -> Result<[M2<S>; 2]> {
        self.admissible(q)?;
        let zero = [[S::zero(); 2]; 2];
        match self.kind {
            SurfaceKind::FlatTorus => Ok([zero, zero]),
            SurfaceKind::RoundSphere => {
                let z = q[1];
                let w = S::one() - z * z;
                let two_z = S::of(2.0) * z;
                // d/dz diag(1 - z^2, 1/(1 - z^2)) = diag(-2z, 2z/(1-z^2)^2)
                Ok([zero, [[-two_z, S::zero()], [S::zero(), two_z / (w * w)]]])
            }
        }
    }

    /// Density of the Riemannian area form against the chart area form
    /// (`sqrt(det g)`); equal to one on both supported charts.
    pub fn area_density(&self, _q: V2<S>) -> S {
        S::one()
    }

    /// Riemannian norm of a tangent vector.
    pub fn tangent_norm(&self, q: V2<S>, v: V2<S>) -> Result<S> {
        Ok(quad(self.metric(q)?, v, v).sqrt())
    }
}

/// Metric tensor at `q`, checked and stored symmetrically.
pub fn metric_eval<S: Real>(surface: &SurfaceModel<S>, q: V2<S>) -> Result<M2<S>> {
    surface.metric(q)
}

/// Pointwise norm `|theta_q| = sqrt(g^{-1}(theta, theta))`.
pub fn oneform_norm<S: Real>(
    surface: &SurfaceModel<S>,
    theta: &dyn OneFormField<S>,
    q: V2<S>,
) -> Result<S> {
    let g_inv = surface.metric_inverse(q)?;
    let th = theta.eval(surface.reduce(q));
    Ok(quad(g_inv, th, th).max(S::zero()).sqrt())
}

/// Density `f(q)` of the exterior derivative against the Riemannian area
/// form: `d theta = f mu`, with the chart orientation `(q0, q1)` positive.
pub fn two_form_density<S: Real>(
    surface: &SurfaceModel<S>,
    theta: &dyn OneFormField<S>,
    q: V2<S>,
) -> Result<S> {
    surface.admissible(q)?;
    let jac = theta.jacobian(surface.reduce(q));
    // curl in chart coordinates: d(theta_0 dq0 + theta_1 dq1) = (d0 theta_1 - d1 theta_0) dq0 ^ dq1
    let curl = jac[1][0] - jac[0][1];
    Ok(curl / surface.area_density(q))
}

/// Sup norm of `|theta_q|` over the surface: coarse grid scan plus local
/// zoom refinement to 1e-8 in position.
pub fn oneform_sup_norm<S: Real>(surface: &SurfaceModel<S>, theta: &dyn OneFormField<S>) -> S {
    let eval = |q: V2<S>| oneform_norm(surface, theta, q).unwrap_or(S::zero());
    grid_maximize(surface, &eval).1
}

/// Maximize a scalar field over the surface: 512x512 scan of the admissible
/// chart followed by zooming 9x9 refinements down to cell size 1e-8.
/// Returns `(argmax, max)`.
pub fn grid_maximize<S: Real>(surface: &SurfaceModel<S>, f: &dyn Fn(V2<S>) -> S) -> (V2<S>, S) {
    let (lo, hi) = chart_bounds(surface);
    let n = 512usize;
    let mut best_q = lo;
    let mut best = S::neg_infinity();
    for i in 0..n {
        for j in 0..n {
            let t0 = S::of(i as f64 / n as f64);
            let t1 = S::of(j as f64 / n as f64);
            let q = [lo[0] + (hi[0] - lo[0]) * t0, lo[1] + (hi[1] - lo[1]) * t1];
            let v = f(q);
            if v > best {
                best = v;
                best_q = q;
            }
        }
    }
    // local zoom: shrink a 9x9 window around the maximizer
    let mut half = [
        (hi[0] - lo[0]) / S::of(n as f64),
        (hi[1] - lo[1]) / S::of(n as f64),
    ];
    for _ in 0..40 {
        if half[0].as_f64() < 1e-8 && half[1].as_f64() < 1e-8 {
            break;
        }
        let c = best_q;
        for i in -4i32..=4 {
            for j in -4i32..=4 {
                let q = [
                    c[0] + half[0] * S::of(i as f64 / 4.0),
                    c[1] + half[1] * S::of(j as f64 / 4.0),
                ];
                let q = clamp_to_chart(surface, q);
                let v = f(q);
                if v > best {
                    best = v;
                    best_q = q;
                }
            }
        }
        half = [half[0] * S::of(0.5), half[1] * S::of(0.5)];
    }
    (best_q, best)
}

/// Bounds of the admissible chart rectangle.
pub fn chart_bounds<S: Real>(surface: &SurfaceModel<S>) -> (V2<S>, V2<S>) {
    match surface.kind {
        SurfaceKind::FlatTorus => ([S::zero(), S::zero()], [S::one(), S::one()]),
        SurfaceKind::RoundSphere => {
            let zmax = S::one() - surface.pole_snap;
            (
                [S::zero(), -zmax],
                [S::of(2.0) * S::PI(), zmax],
            )
        }
    }
}

fn clamp_to_chart<S: Real>(surface: &SurfaceModel<S>, q: V2<S>) -> V2<S> {
    match surface.kind {
        SurfaceKind::FlatTorus => q,
        SurfaceKind::RoundSphere => {
            let zmax = S::one() - surface.pole_snap;
            [q[0], q[1].max(-zmax).min(zmax)]
        }
    }
}
