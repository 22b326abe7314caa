//! One-form and potential fields on the chart.
//!
//! Preset fields carry closed-form derivatives; fields built from
//! configuration expressions fall back to finite differences with step 1e-5.

use std::sync::Arc;

use crate::expr::Expr;
use crate::scalar::{Real, M2, V2};

/// A one-form given by its chart components `theta = theta_0 dq0 + theta_1 dq1`.
pub trait OneFormField<S>: Send + Sync {
    fn eval(&self, q: V2<S>) -> V2<S>;
    /// `jacobian[i][j] = d theta_i / d q_j`.
    fn jacobian(&self, q: V2<S>) -> M2<S>;
}

/// A scalar potential with gradient and Hessian.
pub trait PotentialField<S>: Send + Sync {
    fn value(&self, q: V2<S>) -> S;
    fn gradient(&self, q: V2<S>) -> V2<S>;
    fn hessian(&self, q: V2<S>) -> M2<S>;
    /// True when the field is the literal zero function, known a priori.
    fn is_zero(&self) -> bool {
        false
    }
}

pub type SharedOneForm<S> = Arc<dyn OneFormField<S>>;
pub type SharedPotential<S> = Arc<dyn PotentialField<S>>;

/// Closed-form preset one-forms.
#[derive(Debug, Clone, Copy)]
pub enum PresetOneForm<S> {
    /// Identically zero.
    Zero,
    /// `theta = -cos(2 pi y) dx` on the flat torus.
    TorusExample,
    /// `theta = kappa (1 - z^2) dphi` on the sphere chart.
    SphereMagnetic { kappa: S },
}

impl<S: Real> PresetOneForm<S> {
    pub fn torus_example() -> Self {
        PresetOneForm::TorusExample
    }

    pub fn sphere_magnetic(kappa: f64) -> Self {
        PresetOneForm::SphereMagnetic { kappa: S::of(kappa) }
    }
}

impl<S: Real> OneFormField<S> for PresetOneForm<S> {
    fn eval(&self, q: V2<S>) -> V2<S> {
        match self {
            PresetOneForm::Zero => [S::zero(), S::zero()],
            PresetOneForm::TorusExample => {
                let two_pi = S::of(2.0) * S::PI();
                [-(two_pi * q[1]).cos(), S::zero()]
            }
            PresetOneForm::SphereMagnetic { kappa } => {
                let z = q[1];
                [*kappa * (S::one() - z * z), S::zero()]
            }
        }
    }

    fn jacobian(&self, q: V2<S>) -> M2<S> {
        let zero = S::zero();
        match self {
            PresetOneForm::Zero => [[zero; 2]; 2],
            PresetOneForm::TorusExample => {
                let two_pi = S::of(2.0) * S::PI();
                [[zero, two_pi * (two_pi * q[1]).sin()], [zero, zero]]
            }
            PresetOneForm::SphereMagnetic { kappa } => {
                [[zero, -S::of(2.0) * *kappa * q[1]], [zero, zero]]
            }
        }
    }
}

/// Closed-form preset potentials.
#[derive(Debug, Clone, Copy)]
pub enum PresetPotential {
    Zero,
    /// `V = cos(2 pi y)` on the flat torus.
    CosLatitude,
}

impl<S: Real> PotentialField<S> for PresetPotential {
    fn value(&self, q: V2<S>) -> S {
        match self {
            PresetPotential::Zero => S::zero(),
            PresetPotential::CosLatitude => (S::of(2.0) * S::PI() * q[1]).cos(),
        }
    }

    fn gradient(&self, q: V2<S>) -> V2<S> {
        match self {
            PresetPotential::Zero => [S::zero(), S::zero()],
            PresetPotential::CosLatitude => {
                let two_pi = S::of(2.0) * S::PI();
                [S::zero(), -two_pi * (two_pi * q[1]).sin()]
            }
        }
    }

    fn hessian(&self, q: V2<S>) -> M2<S> {
        let zero = S::zero();
        match self {
            PresetPotential::Zero => [[zero; 2]; 2],
            PresetPotential::CosLatitude => {
                let two_pi = S::of(2.0) * S::PI();
                [[zero, zero], [zero, -two_pi * two_pi * (two_pi * q[1]).cos()]]
            }
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, PresetPotential::Zero)
    }
}

const FD_STEP: f64 = 1e-5;

/// One-form whose components come from configuration expressions; the
/// Jacobian uses centered differences with step 1e-5.
pub struct ExprOneForm {
    pub comp0: Expr,
    pub comp1: Expr,
}

impl<S: Real> OneFormField<S> for ExprOneForm {
    fn eval(&self, q: V2<S>) -> V2<S> {
        [self.comp0.eval(q), self.comp1.eval(q)]
    }

    fn jacobian(&self, q: V2<S>) -> M2<S> {
        let h = S::of(FD_STEP);
        let two_h = S::of(2.0) * h;
        let mut jac = [[S::zero(); 2]; 2];
        for j in 0..2 {
            let mut qp = q;
            let mut qm = q;
            qp[j] = qp[j] + h;
            qm[j] = qm[j] - h;
            let p: V2<S> = [self.comp0.eval(qp), self.comp1.eval(qp)];
            let m: V2<S> = [self.comp0.eval(qm), self.comp1.eval(qm)];
            for i in 0..2 {
                jac[i][j] = (p[i] - m[i]) / two_h;
            }
        }
        jac
    }
}

/// Potential from a configuration expression, with finite-difference
/// gradient (step 1e-5) and Hessian (step 1e-4).
pub struct ExprPotential {
    pub expr: Expr,
    pub known_zero: bool,
}

impl<S: Real> PotentialField<S> for ExprPotential {
    fn value(&self, q: V2<S>) -> S {
        self.expr.eval(q)
    }

    fn gradient(&self, q: V2<S>) -> V2<S> {
        let h = S::of(FD_STEP);
        let two_h = S::of(2.0) * h;
        let mut g = [S::zero(); 2];
        for j in 0..2 {
            let mut qp = q;
            let mut qm = q;
            qp[j] = qp[j] + h;
            qm[j] = qm[j] - h;
            g[j] = (self.expr.eval(qp) - self.expr.eval(qm)) / two_h;
        }
        g
    }

    fn hessian(&self, q: V2<S>) -> M2<S> {
        let h = S::of(1e-4);
        let mut hess = [[S::zero(); 2]; 2];
        let f0: S = self.expr.eval(q);
        for i in 0..2 {
            for j in 0..2 {
                if i == j {
                    let mut qp = q;
                    let mut qm = q;
                    qp[i] = qp[i] + h;
                    qm[i] = qm[i] - h;
                    hess[i][i] =
                        (self.expr.eval(qp) - S::of(2.0) * f0 + self.expr.eval(qm)) / (h * h);
                } else if i < j {
                    let mut qpp = q;
                    let mut qpm = q;
                    let mut qmp = q;
                    let mut qmm = q;
                    qpp[i] = qpp[i] + h;
                    qpp[j] = qpp[j] + h;
                    qpm[i] = qpm[i] + h;
                    qpm[j] = qpm[j] - h;
                    qmp[i] = qmp[i] - h;
                    qmp[j] = qmp[j] + h;
                    qmm[i] = qmm[i] - h;
                    qmm[j] = qmm[j] - h;
                    let v = (self.expr.eval(qpp) - self.expr.eval(qpm) - self.expr.eval(qmp)
                        + self.expr.eval(qmm))
                        / (S::of(4.0) * h * h);
                    hess[i][j] = v;
                    hess[j][i] = v;
                }
            }
        }
        hess
    }

    fn is_zero(&self) -> bool {
        self.known_zero
    }
}

/// `theta - eta` for a constant (harmonic, on the flat torus) one-form
/// `eta = eta_0 dx + eta_1 dy`; used when scanning Mather's alpha function.
pub struct ShiftedOneForm<S> {
    pub inner: SharedOneForm<S>,
    pub eta: V2<S>,
}

impl<S: Real> OneFormField<S> for ShiftedOneForm<S> {
    fn eval(&self, q: V2<S>) -> V2<S> {
        let t = self.inner.eval(q);
        [t[0] - self.eta[0], t[1] - self.eta[1]]
    }

    fn jacobian(&self, q: V2<S>) -> M2<S> {
        self.inner.jacobian(q)
    }
}
