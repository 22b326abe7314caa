//! The magnetic Tonelli family `L(q,v) = g_q(v,v)/2 + theta_q(v) - V(q)`,
//! its energy `E(q,v) = g_q(v,v)/2 + V(q)`, the dual Hamiltonian
//! `H(q,p) = g_q^{-1}(p - theta_q, p - theta_q)/2 + V(q)`, and the Randers
//! metric `F(q,v) = |v|_g + theta_q(v)/r` built from the same data.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::fields::{SharedOneForm, SharedPotential};
use crate::scalar::{matvec, quad, sub, Real, V2};
use crate::surface::{grid_maximize, oneform_sup_norm, SurfaceModel};

/// Problem data: surface, magnetic one-form and potential.
#[derive(Clone)]
pub struct MagneticTonelliData<S: Real> {
    pub surface: SurfaceModel<S>,
    pub theta: SharedOneForm<S>,
    pub potential: SharedPotential<S>,
    theta_sup: Arc<OnceLock<S>>,
    potential_abs_max: Arc<OnceLock<S>>,
}

impl<S: Real> MagneticTonelliData<S> {
    pub fn new(
        surface: SurfaceModel<S>,
        theta: SharedOneForm<S>,
        potential: SharedPotential<S>,
    ) -> Self {
        MagneticTonelliData {
            surface,
            theta,
            potential,
            theta_sup: Arc::new(OnceLock::new()),
            potential_abs_max: Arc::new(OnceLock::new()),
        }
    }

    /// Same surface and potential, with the one-form replaced.
    pub fn with_theta(&self, theta: SharedOneForm<S>) -> Self {
        MagneticTonelliData::new(self.surface, theta, self.potential.clone())
    }

    #[inline]
    fn fields_at(&self, q: V2<S>) -> V2<S> {
        self.theta.eval(self.surface.reduce(q))
    }

    #[inline]
    fn potential_at(&self, q: V2<S>) -> S {
        self.potential.value(self.surface.reduce(q))
    }

    /// Sup norm of the one-form over the surface (cached).
    pub fn theta_sup_norm(&self) -> S {
        *self
            .theta_sup
            .get_or_init(|| oneform_sup_norm(&self.surface, self.theta.as_ref()))
    }

    /// Max of `|V|` over the surface (cached); zero detector for the
    /// Randers correspondence.
    pub fn potential_sup(&self) -> S {
        *self.potential_abs_max.get_or_init(|| {
            if self.potential.is_zero() {
                S::zero()
            } else {
                grid_maximize(&self.surface, &|q| self.potential.value(q).abs()).1
            }
        })
    }

    /// Fiber derivative `d_v L = g v + theta` as a cotangent vector.
    pub fn dv_lagrangian(&self, q: V2<S>, v: V2<S>) -> Result<V2<S>> {
        let g = self.surface.metric(q)?;
        let th = self.fields_at(q);
        let gv = matvec(g, v);
        Ok([gv[0] + th[0], gv[1] + th[1]])
    }

    /// Base derivative `d_q L` as a cotangent vector.
    pub fn dq_lagrangian(&self, q: V2<S>, v: V2<S>) -> Result<V2<S>> {
        let dg = self.surface.metric_derivatives(q)?;
        let qr = self.surface.reduce(q);
        let jac = self.theta.jacobian(qr);
        let dv = self.potential.gradient(qr);
        let half = S::of(0.5);
        let mut out = [S::zero(); 2];
        for i in 0..2 {
            // d_i [ g(v,v)/2 ] + d_i [ theta_j v_j ] - d_i V
            out[i] = half * quad(dg[i], v, v) + jac[0][i] * v[0] + jac[1][i] * v[1] - dv[i];
        }
        Ok(out)
    }

    /// Chart acceleration of the Euler-Lagrange flow: solves
    /// `g qdd = dq L - (Dg . v) v - (D theta) v` for `qdd`.
    pub fn acceleration(&self, q: V2<S>, v: V2<S>) -> Result<V2<S>> {
        let g_inv = self.surface.metric_inverse(q)?;
        let dg = self.surface.metric_derivatives(q)?;
        let qr = self.surface.reduce(q);
        let jac = self.theta.jacobian(qr);
        let dq_l = self.dq_lagrangian(q, v)?;
        let mut rhs = [S::zero(); 2];
        for i in 0..2 {
            // d/dt (g v + theta)_i carries sum_k d_k g_{ij} v_k v_j + d_k theta_i v_k
            let mut transport = S::zero();
            for k in 0..2 {
                for j in 0..2 {
                    transport = transport + dg[k][i][j] * v[k] * v[j];
                }
                transport = transport + jac[i][k] * v[k];
            }
            rhs[i] = dq_l[i] - transport;
        }
        Ok(matvec(g_inv, rhs))
    }
}

/// `L(q,v) = g_q(v,v)/2 + theta_q(v) - V(q)`.
pub fn lagrangian_eval<S: Real>(
    data: &MagneticTonelliData<S>,
    q: V2<S>,
    v: V2<S>,
) -> Result<S> {
    let g = data.surface.metric(q)?;
    let th = data.fields_at(q);
    Ok(S::of(0.5) * quad(g, v, v) + th[0] * v[0] + th[1] * v[1] - data.potential_at(q))
}

/// `E(q,v) = g_q(v,v)/2 + V(q)`; the Legendre identity for this family.
pub fn energy_eval<S: Real>(data: &MagneticTonelliData<S>, q: V2<S>, v: V2<S>) -> Result<S> {
    let g = data.surface.metric(q)?;
    Ok(S::of(0.5) * quad(g, v, v) + data.potential_at(q))
}

/// Dual Hamiltonian `H(q,p) = g_q^{-1}(p - theta, p - theta)/2 + V(q)`.
pub fn hamiltonian_eval<S: Real>(
    data: &MagneticTonelliData<S>,
    q: V2<S>,
    p: V2<S>,
) -> Result<S> {
    let g_inv = data.surface.metric_inverse(q)?;
    let th = data.fields_at(q);
    let d = sub(p, th);
    Ok(S::of(0.5) * quad(g_inv, d, d) + data.potential_at(q))
}

/// Randers metric `F(q,v) = |v|_g + theta_q(v)/r`; requires `r > |theta|_inf`
/// and an identically vanishing potential.
pub fn randers_eval<S: Real>(
    data: &MagneticTonelliData<S>,
    r: S,
    q: V2<S>,
    v: V2<S>,
) -> Result<S> {
    check_randers_domain(data, r)?;
    let g = data.surface.metric(q)?;
    let th = data.fields_at(q);
    Ok(quad(g, v, v).sqrt() + (th[0] * v[0] + th[1] * v[1]) / r)
}

pub fn check_randers_domain<S: Real>(data: &MagneticTonelliData<S>, r: S) -> Result<()> {
    let sup = data.theta_sup_norm();
    if r <= sup {
        return Err(Error::RandersDomain {
            r: r.as_f64(),
            theta_sup: sup.as_f64(),
        });
    }
    let vmax = data.potential_sup();
    if vmax > S::of(1e-12) {
        return Err(Error::NonMagnetic(vmax.as_f64()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preset::preset;

    fn torus_example() -> MagneticTonelliData<f64> {
        preset("torus-example").unwrap()
    }

    fn sphere_magnetic() -> MagneticTonelliData<f64> {
        preset("sphere-magnetic").unwrap()
    }

    #[test]
    fn lagrangian_golden_values() {
        let d = torus_example();
        assert!(lagrangian_eval(&d, [0.0, 0.0], [0.0, 0.0]).unwrap().abs() < 1e-15);
        let v = lagrangian_eval(&d, [0.0, 0.0], [1.0, 0.0]).unwrap();
        assert!((v + 0.5).abs() < 1e-15);
        let s = sphere_magnetic();
        let v = lagrangian_eval(&s, [0.0, 0.0], [1.0, 0.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn energy_golden_values() {
        let d = torus_example();
        let e = energy_eval(&d, [0.0, 0.0], [1.0, 0.0]).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
        let p = preset::<f64>("pendulum-torus").unwrap();
        let e = energy_eval(&p, [0.0, 0.0], [0.0, 0.0]).unwrap();
        assert!((e - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hamiltonian_golden_values() {
        let d = torus_example();
        let h = hamiltonian_eval(&d, [0.0, 0.0], [0.0, 0.0]).unwrap();
        assert!((h - 0.5).abs() < 1e-15);
        let h = hamiltonian_eval(&d, [0.0, 0.25], [0.0, 0.0]).unwrap();
        assert!(h.abs() < 1e-15);
        let s = sphere_magnetic();
        let th = s.theta.eval([0.0, 0.0]);
        let h = hamiltonian_eval(&s, [0.0, 0.0], th).unwrap();
        assert!(h.abs() < 1e-15);
    }

    #[test]
    fn randers_golden_values() {
        let s = sphere_magnetic();
        let f = randers_eval(&s, 0.6, [0.0, 0.0], [1.0, 0.0]).unwrap();
        assert!((f - (1.0 + 0.5 / 0.6)).abs() < 1e-12);
        let f = randers_eval(&s, 0.6, [0.0, 0.0], [-1.0, 0.0]).unwrap();
        assert!((f - (1.0 - 0.5 / 0.6)).abs() < 1e-12);
        let f = randers_eval(&s, 0.6, [0.3, 0.1], [0.0, 0.0]).unwrap();
        assert!(f.abs() < 1e-15);
    }

    #[test]
    fn randers_domain_errors() {
        let s = sphere_magnetic();
        assert!(matches!(
            randers_eval(&s, 0.4, [0.0, 0.0], [1.0, 0.0]),
            Err(Error::RandersDomain { .. })
        ));
        let p = preset::<f64>("pendulum-torus").unwrap();
        assert!(matches!(
            randers_eval(&p, 10.0, [0.0, 0.0], [1.0, 0.0]),
            Err(Error::NonMagnetic(_))
        ));
    }

    #[test]
    fn randers_positive_homogeneity() {
        let s = sphere_magnetic();
        let q = [1.3, 0.4];
        let v = [0.7, -0.2];
        let f1 = randers_eval(&s, 0.6, q, v).unwrap();
        for lam in [0.5, 2.0, 7.25] {
            let f = randers_eval(&s, 0.6, q, [v[0] * lam, v[1] * lam]).unwrap();
            assert!((f - lam * f1).abs() <= 1e-12 * f1.abs().max(1.0));
        }
    }

    #[test]
    fn legendre_consistency_by_finite_differences() {
        // E(q,v) = d_v L(q,v) . v - L(q,v) with d_v L from centered differences.
        let cases: Vec<MagneticTonelliData<f64>> = vec![torus_example(), sphere_magnetic()];
        let mut state = 3u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for d in &cases {
            for _ in 0..500 {
                let q = match d.surface.kind {
                    crate::surface::SurfaceKind::FlatTorus => [next(), next()],
                    crate::surface::SurfaceKind::RoundSphere => {
                        [next() * 6.0, (2.0 * next() - 1.0) * 0.9]
                    }
                };
                let v = [2.0 * next() - 1.0, 2.0 * next() - 1.0];
                let h = 1e-6;
                let mut dv = [0.0; 2];
                for j in 0..2 {
                    let mut vp = v;
                    let mut vm = v;
                    vp[j] += h;
                    vm[j] -= h;
                    dv[j] = (lagrangian_eval(d, q, vp).unwrap()
                        - lagrangian_eval(d, q, vm).unwrap())
                        / (2.0 * h);
                }
                let e_fd = dv[0] * v[0] + dv[1] * v[1] - lagrangian_eval(d, q, v).unwrap();
                let e = energy_eval(d, q, v).unwrap();
                let rel = (e - e_fd).abs() / e.abs().max(1.0);
                assert!(rel < 1e-6, "rel = {rel} at q={q:?} v={v:?}");
            }
        }
    }

    #[test]
    fn hamiltonian_of_fiber_derivative_is_energy() {
        let cases: Vec<MagneticTonelliData<f64>> = vec![torus_example(), sphere_magnetic()];
        let mut state = 17u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for d in &cases {
            for _ in 0..200 {
                let q = match d.surface.kind {
                    crate::surface::SurfaceKind::FlatTorus => [next(), next()],
                    crate::surface::SurfaceKind::RoundSphere => {
                        [next() * 6.0, (2.0 * next() - 1.0) * 0.9]
                    }
                };
                let v = [2.0 * next() - 1.0, 2.0 * next() - 1.0];
                let p = d.dv_lagrangian(q, v).unwrap();
                let h = hamiltonian_eval(d, q, p).unwrap();
                let e = energy_eval(d, q, v).unwrap();
                assert!((h - e).abs() < 1e-10, "H = {h}, E = {e}");
            }
        }
    }
}
