//! The discrete free-period action, its exact gradient, anti-gradient
//! descent, Euler-Lagrange integration, and local free-time connecting arcs.
//!
//! Discretization: uniform parameter samples, centered-difference
//! velocities, trapezoid (= periodic rectangle) quadrature:
//!
//! ```text
//! S_e(Gamma, p) = (p/N) sum_k L(Gamma_k, V_k) + p e,
//! V_k = N (Gamma_{k+1} - Gamma_{k-1}) / (2 p).
//! ```
//!
//! The gradient below is the exact derivative of this discrete functional,
//! so descent trajectories are genuine anti-gradient flows of the computed
//! value. The free period is optimized in log-space with a hard floor;
//! hitting the floor is the first-class "collapse to a point curve"
//! outcome.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lagrangian::{energy_eval, lagrangian_eval, MagneticTonelliData};
use crate::loops::{LoopPath, PERIOD_FLOOR};
use crate::scalar::{add, dot, norm, scale, sub, Real, V2};

/// Action value with its differential and the energy defect of the loop.
#[derive(Debug, Clone, Serialize)]
pub struct ActionEvaluation<S> {
    pub value: S,
    /// One cotangent vector per sample: d S / d Gamma_k.
    pub gradient_samples: Vec<V2<S>>,
    /// d S / d p = e - (mean discrete energy).
    pub gradient_period: S,
    /// max_k |E(Gamma_k, V_k) - e|.
    pub energy_residual: S,
}

/// Discrete free-period action of a single loop.
pub fn action_free_period<S: Real>(
    data: &MagneticTonelliData<S>,
    lp: &LoopPath<S>,
    e: S,
) -> Result<S> {
    let n = lp.samples.len();
    let vels = lp.velocities();
    let mut acc = S::zero();
    for k in 0..n {
        acc = acc + lagrangian_eval(data, lp.samples[k], vels[k])?;
    }
    Ok(lp.period * acc / S::of(n as f64) + lp.period * e)
}

/// Action of a multicurve: the sum over components.
pub fn multicurve_action<S: Real>(
    data: &MagneticTonelliData<S>,
    mc: &crate::loops::Multicurve<S>,
    e: S,
) -> Result<S> {
    let mut total = S::zero();
    for lp in &mc.components {
        total = total + action_free_period(data, lp, e)?;
    }
    Ok(total)
}

/// Lagrangian integral alone, `S_e - p e = integral of L dt`.
pub fn lagrangian_integral<S: Real>(
    data: &MagneticTonelliData<S>,
    lp: &LoopPath<S>,
) -> Result<S> {
    Ok(action_free_period(data, lp, S::zero())?)
}

/// Exact gradient of the discrete action with respect to every sample and
/// the period.
pub fn action_gradient<S: Real>(
    data: &MagneticTonelliData<S>,
    lp: &LoopPath<S>,
    e: S,
) -> Result<ActionEvaluation<S>> {
    let n = lp.samples.len();
    let n_s = S::of(n as f64);
    let p = lp.period;
    let vels = lp.velocities();

    let mut l_sum = S::zero();
    let mut energy_mean = S::zero();
    let mut energy_residual = S::zero();
    let mut dq = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    for k in 0..n {
        let q = lp.samples[k];
        let v = vels[k];
        l_sum = l_sum + lagrangian_eval(data, q, v)?;
        let en = energy_eval(data, q, v)?;
        energy_mean = energy_mean + en;
        let res = (en - e).abs();
        if res > energy_residual {
            energy_residual = res;
        }
        dq.push(data.dq_lagrangian(q, v)?);
        dv.push(data.dv_lagrangian(q, v)?);
    }
    energy_mean = energy_mean / n_s;
    let value = p * l_sum / n_s + p * e;

    // dS/dGamma_j = (p/N) dqL_j + (dvL_{j-1} - dvL_{j+1}) / 2
    let half = S::of(0.5);
    let mut gradient_samples = Vec::with_capacity(n);
    for j in 0..n {
        let prev = dv[(j + n - 1) % n];
        let next = dv[(j + 1) % n];
        let g = [
            p / n_s * dq[j][0] + half * (prev[0] - next[0]),
            p / n_s * dq[j][1] + half * (prev[1] - next[1]),
        ];
        gradient_samples.push(g);
    }
    let gradient_period = e - energy_mean;

    Ok(ActionEvaluation {
        value,
        gradient_samples,
        gradient_period,
        energy_residual,
    })
}

/// Options for the anti-gradient descent.
#[derive(Debug, Clone, Copy)]
pub struct DescentOpts<S> {
    pub max_iters: usize,
    pub grad_tol: S,
    pub p_floor: S,
    /// Initial line-search step.
    pub step0: S,
    /// Record one trace point per iteration.
    pub record_trace: bool,
}

impl<S: Real> Default for DescentOpts<S> {
    fn default() -> Self {
        DescentOpts {
            max_iters: 20_000,
            grad_tol: S::of(1e-6),
            p_floor: S::of(PERIOD_FLOOR),
            step0: S::of(1e-2),
            record_trace: false,
        }
    }
}

/// One descent iteration record.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TracePoint<S> {
    pub iteration: usize,
    pub value: S,
    pub gradient_norm: S,
    /// Total free period over all components.
    pub period: S,
}

/// CSV dump of a descent trace: `iteration,value,gradient_norm,period`.
pub fn descent_trace_csv<S: Real>(trace: &[TracePoint<S>]) -> String {
    let mut out = String::from("iteration,value,gradient_norm,period\n");
    for t in trace {
        out.push_str(&format!(
            "{},{:.12e},{:.6e},{:.12e}\n",
            t.iteration,
            t.value.as_f64(),
            t.gradient_norm.as_f64(),
            t.period.as_f64()
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DescentOutcome<S> {
    pub components: Vec<LoopPath<S>>,
    pub value: S,
    pub converged: bool,
    /// Component indices whose period hit the floor (collapse).
    pub collapsed: Vec<usize>,
    pub hit_period_floor: bool,
    pub iterations: usize,
    pub gradient_norm: S,
    /// Per-iteration log, when requested.
    pub trace: Vec<TracePoint<S>>,
}

/// Outcome of `descend_to_waist` for a single loop.
#[derive(Debug, Clone, Serialize)]
pub struct WaistOutcome<S> {
    pub loop_path: LoopPath<S>,
    pub value: S,
    pub converged: bool,
    pub hit_period_floor: bool,
    pub iterations: usize,
}

/// Solve the constant-coefficient cyclic tridiagonal system
/// `diag x_i + off (x_{i-1} + x_{i+1}) = r_i` by the Sherman-Morrison
/// correction of the open-chain solve.
fn solve_cyclic_tridiagonal<S: Real>(diag: S, off: S, rhs: &[S]) -> Vec<S> {
    let n = rhs.len();
    if n == 1 {
        return vec![rhs[0] / (diag + S::of(2.0) * off)];
    }
    if n == 2 {
        // ring of two: each neighbor appears twice
        let d = diag;
        let o = S::of(2.0) * off;
        let det = d * d - o * o;
        return vec![
            (d * rhs[0] - o * rhs[1]) / det,
            (d * rhs[1] - o * rhs[0]) / det,
        ];
    }
    let gamma = -diag;
    let solve_open = |b_first: S, b_last: S, r: &[S]| -> Vec<S> {
        // Thomas algorithm with modified first/last diagonal entries
        let mut c_prime = vec![S::zero(); n];
        let mut d_prime = vec![S::zero(); n];
        let mut b0 = b_first;
        c_prime[0] = off / b0;
        d_prime[0] = r[0] / b0;
        for i in 1..n {
            b0 = if i == n - 1 { b_last } else { diag };
            let m = b0 - off * c_prime[i - 1];
            c_prime[i] = off / m;
            d_prime[i] = (r[i] - off * d_prime[i - 1]) / m;
        }
        let mut x = vec![S::zero(); n];
        x[n - 1] = d_prime[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d_prime[i] - c_prime[i] * x[i + 1];
        }
        x
    };
    let b_first = diag - gamma;
    let b_last = diag - off * off / gamma;
    let y = solve_open(b_first, b_last, rhs);
    let mut u = vec![S::zero(); n];
    u[0] = gamma;
    u[n - 1] = off;
    let z = solve_open(b_first, b_last, &u);
    let vy = y[0] + off / gamma * y[n - 1];
    let vz = z[0] + off / gamma * z[n - 1];
    let factor = vy / (S::one() + vz);
    (0..n).map(|i| y[i] - factor * z[i]).collect()
}

/// Apply the inverse discrete W^{1,2} metric to a per-sample gradient:
/// solve `(I + D^T D / p) s = g` coordinate-wise, where `D` is the
/// centered-difference operator. This is the Sobolev gradient that the
/// continuum anti-gradient flow of the free-period action uses; it removes
/// the mesh-induced stiffness of the raw pointwise gradient.
fn sobolev_smooth<S: Real>(gradient: &[V2<S>], period: S) -> Vec<V2<S>> {
    let n = gradient.len();
    let n_s = S::of(n as f64);
    // D^T D couples samples two apart: eigenvalues N^2 sin^2(2 pi m / N) / p
    let coupling = n_s * n_s / (S::of(4.0) * period);
    let diag = S::one() + S::of(2.0) * coupling;
    let off = -coupling;
    let mut out = vec![[S::zero(); 2]; n];
    let mut visited = vec![false; n];
    let mut start = 0usize;
    while start < n {
        if visited[start] {
            start += 1;
            continue;
        }
        // stride-2 cycle through the indices (two cycles when N is even)
        let mut cycle = Vec::new();
        let mut k = start;
        loop {
            visited[k] = true;
            cycle.push(k);
            k = (k + 2) % n;
            if k == start {
                break;
            }
        }
        for c in 0..2 {
            let rhs: Vec<S> = cycle.iter().map(|&i| gradient[i][c]).collect();
            let x = solve_cyclic_tridiagonal(diag, off, &rhs);
            for (slot, &i) in cycle.iter().enumerate() {
                out[i][c] = x[slot];
            }
        }
    }
    out
}

struct JointState<S> {
    comps: Vec<LoopPath<S>>,
}

impl<S: Real> JointState<S> {
    fn total_action(&self, data: &MagneticTonelliData<S>, e: S) -> Result<S> {
        let mut acc = S::zero();
        for lp in &self.comps {
            acc = acc + action_free_period(data, lp, e)?;
        }
        Ok(acc)
    }

    /// Gradient vector: per component samples then log-period, concatenated.
    fn gradient(&self, data: &MagneticTonelliData<S>, e: S) -> Result<(S, Vec<Vec<V2<S>>>, Vec<S>)> {
        let mut value = S::zero();
        let mut gs = Vec::with_capacity(self.comps.len());
        let mut gps = Vec::with_capacity(self.comps.len());
        for lp in &self.comps {
            let ev = action_gradient(data, lp, e)?;
            value = value + ev.value;
            gps.push(ev.gradient_period * lp.period); // d/d(log p)
            gs.push(ev.gradient_samples);
        }
        Ok((value, gs, gps))
    }

    fn step(&self, gs: &[Vec<V2<S>>], gps: &[S], alpha: S, p_floor: S) -> JointState<S> {
        let comps = self
            .comps
            .iter()
            .zip(gs.iter().zip(gps.iter()))
            .map(|(lp, (g, gp))| {
                let samples = lp
                    .samples
                    .iter()
                    .zip(g.iter())
                    .map(|(s, gk)| sub(*s, scale(*gk, alpha)))
                    .collect::<Vec<_>>();
                let log_p = lp.period.ln() - alpha * *gp;
                let period = log_p.exp().max(p_floor);
                LoopPath {
                    samples,
                    period,
                    closure: lp.closure,
                }
            })
            .collect();
        JointState { comps }
    }
}

fn grad_norm<S: Real>(gs: &[Vec<V2<S>>], gps: &[S]) -> S {
    let mut acc = S::zero();
    for g in gs {
        for v in g {
            acc = acc + dot(*v, *v);
        }
    }
    for gp in gps {
        acc = acc + *gp * *gp;
    }
    acc.sqrt()
}

/// Joint anti-gradient descent of several loops with backtracking Armijo
/// line search (c = 1e-4, halving, 40 trials) on all samples and
/// log-periods. The descent direction is the W^{1,2} (Sobolev) gradient;
/// the convergence test uses the raw gradient norm.
pub fn descend_multicurve<S: Real>(
    data: &MagneticTonelliData<S>,
    components: Vec<LoopPath<S>>,
    e: S,
    opts: &DescentOpts<S>,
) -> Result<DescentOutcome<S>> {
    let armijo_c = S::of(1e-4);
    let mut state = JointState { comps: components };
    let mut alpha = opts.step0;
    let mut iterations = 0usize;
    let mut converged = false;
    let (mut value, mut gs, mut gps) = state.gradient(data, e)?;
    let mut gnorm = grad_norm(&gs, &gps);
    let mut trace: Vec<TracePoint<S>> = Vec::new();

    while iterations < opts.max_iters {
        if opts.record_trace {
            trace.push(TracePoint {
                iteration: iterations,
                value,
                gradient_norm: gnorm,
                period: state.comps.iter().fold(S::zero(), |a, c| a + c.period),
            });
        }
        if gnorm < opts.grad_tol {
            converged = true;
            break;
        }
        if state
            .comps
            .iter()
            .any(|c| c.period <= opts.p_floor * S::of(1.0 + 1e-9))
        {
            break;
        }
        let smooth: Vec<Vec<V2<S>>> = gs
            .iter()
            .zip(state.comps.iter())
            .map(|(g, lp)| sobolev_smooth(g, lp.period))
            .collect();
        // directional derivative along the smoothed direction
        let mut slope = S::zero();
        for (g, sm) in gs.iter().zip(smooth.iter()) {
            for (gv, sv) in g.iter().zip(sm.iter()) {
                slope = slope + dot(*gv, *sv);
            }
        }
        for gp in &gps {
            slope = slope + *gp * *gp;
        }
        let mut accepted = false;
        for _trial in 0..40 {
            let cand = state.step(&smooth, &gps, alpha, opts.p_floor);
            match cand.total_action(data, e) {
                Ok(v) if v <= value - armijo_c * alpha * slope => {
                    state = cand;
                    value = v;
                    accepted = true;
                    break;
                }
                _ => {
                    alpha = alpha * S::of(0.5);
                }
            }
        }
        iterations += 1;
        if !accepted {
            // stuck: no decrease along the smoothed direction at the smallest step
            break;
        }
        alpha = (alpha * S::of(1.5)).min(S::of(4.0));
        let (v, g, gp) = state.gradient(data, e)?;
        value = v;
        gs = g;
        gps = gp;
        gnorm = grad_norm(&gs, &gps);
    }

    let collapsed: Vec<usize> = state
        .comps
        .iter()
        .enumerate()
        .filter(|(_, c)| c.period <= opts.p_floor * S::of(1.0 + 1e-9))
        .map(|(i, _)| i)
        .collect();
    Ok(DescentOutcome {
        hit_period_floor: !collapsed.is_empty(),
        value,
        converged,
        collapsed,
        iterations,
        gradient_norm: gnorm,
        components: state.comps,
        trace,
    })
}

/// Anti-gradient descent of a single loop toward a Tonelli waist.
pub fn descend_to_waist<S: Real>(
    data: &MagneticTonelliData<S>,
    lp: &LoopPath<S>,
    e: S,
    opts: &DescentOpts<S>,
) -> Result<WaistOutcome<S>> {
    let out = descend_multicurve(data, vec![lp.clone()], e, opts)?;
    let loop_path = out.components.into_iter().next().unwrap();
    Ok(WaistOutcome {
        loop_path,
        value: out.value,
        converged: out.converged,
        hit_period_floor: out.hit_period_floor,
        iterations: out.iterations,
    })
}

/// Trajectory of the Euler-Lagrange flow.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub states: Vec<(V2<S>, V2<S>)>,
    pub step: S,
    pub energy_drift: S,
}

impl<S: Real> Trajectory<S> {
    pub fn end(&self) -> (V2<S>, V2<S>) {
        *self.states.last().unwrap()
    }
}

/// Classical fourth-order Runge-Kutta integration of the second-order
/// Euler-Lagrange system; reports the energy drift over the run.
pub fn el_flow<S: Real>(
    data: &MagneticTonelliData<S>,
    q: V2<S>,
    v: V2<S>,
    t_end: S,
    h: S,
) -> Result<Trajectory<S>> {
    if h <= S::zero() || t_end <= S::zero() {
        return Err(Error::Invalid("el_flow needs positive t_end and step".into()));
    }
    let steps = (t_end / h).round().as_f64().max(1.0) as usize;
    let h = t_end / S::of(steps as f64);
    let mut states = Vec::with_capacity(steps + 1);
    states.push((q, v));
    let e0 = energy_eval(data, q, v)?;
    let mut cur = (q, v);
    let deriv = |q: V2<S>, v: V2<S>| -> Result<(V2<S>, V2<S>)> {
        Ok((v, data.acceleration(q, v)?))
    };
    let half = S::of(0.5);
    let sixth = S::one() / S::of(6.0);
    for _ in 0..steps {
        let (q0, v0) = cur;
        let (k1q, k1v) = deriv(q0, v0)?;
        let (k2q, k2v) = deriv(add(q0, scale(k1q, half * h)), add(v0, scale(k1v, half * h)))?;
        let (k3q, k3v) = deriv(add(q0, scale(k2q, half * h)), add(v0, scale(k2v, half * h)))?;
        let (k4q, k4v) = deriv(add(q0, scale(k3q, h)), add(v0, scale(k3v, h)))?;
        let qn = add(
            q0,
            scale(
                add(add(k1q, scale(k2q, S::of(2.0))), add(scale(k3q, S::of(2.0)), k4q)),
                sixth * h,
            ),
        );
        let vn = add(
            v0,
            scale(
                add(add(k1v, scale(k2v, S::of(2.0))), add(scale(k3v, S::of(2.0)), k4v)),
                sixth * h,
            ),
        );
        data.surface.admissible(qn)?;
        cur = (qn, vn);
        states.push(cur);
    }
    let e1 = energy_eval(data, cur.0, cur.1)?;
    Ok(Trajectory {
        states,
        step: h,
        energy_drift: (e1 - e0).abs(),
    })
}

/// A short Euler-Lagrange arc from shooting: endpoint-to-endpoint states,
/// duration, and its fixed-endpoint free-time action at the shot energy.
#[derive(Debug, Clone)]
pub struct LoopSegment<S> {
    pub samples: Vec<V2<S>>,
    pub duration: S,
    pub action: S,
}

#[derive(Debug, Clone, Copy)]
pub struct ConnectOpts<S> {
    /// Maximum endpoint chart distance.
    pub rho_inj: S,
    /// Maximum arc duration.
    pub tau_inj: S,
}

impl<S: Real> Default for ConnectOpts<S> {
    fn default() -> Self {
        ConnectOpts {
            rho_inj: S::of(0.05),
            tau_inj: S::of(0.5),
        }
    }
}

/// Free-time action (with energy `e`) of a chart polyline between fixed
/// endpoints, minimized in closed form over the total duration:
/// `A(tau) = a/tau + b + c tau` with the minimum `2 sqrt(a c) + b`.
pub fn polyline_free_time_action<S: Real>(
    data: &MagneticTonelliData<S>,
    points: &[V2<S>],
    e: S,
) -> Result<S> {
    if points.len() < 2 {
        return Err(Error::Invalid("polyline needs at least 2 points".into()));
    }
    let k = points.len() - 1;
    let k_s = S::of(k as f64);
    let half = S::of(0.5);
    let mut a = S::zero();
    let mut b = S::zero();
    let mut c = S::zero();
    for i in 0..k {
        let p0 = points[i];
        let p1 = points[i + 1];
        let mid = scale(add(p0, p1), half);
        let g = data.surface.metric(mid)?;
        let d = sub(p1, p0);
        a = a + half * crate::scalar::quad(g, d, d);
        let th = data.theta.eval(data.surface.reduce(mid));
        b = b + th[0] * d[0] + th[1] * d[1];
        c = c + (e - data.potential.value(data.surface.reduce(mid)));
    }
    a = a * k_s;
    c = c / k_s;
    if c <= S::zero() {
        return Err(Error::EnergyRange {
            e: e.as_f64(),
            lo: Some(data.potential_sup().as_f64()),
            hi: None,
        });
    }
    Ok(S::of(2.0) * (a * c).sqrt() + b)
}

/// Unique local free-time action minimizer between nearby points: shooting
/// over the initial velocity direction on the energy shell and the arc
/// duration, Newton-refined until the endpoint is hit within 1e-8.
pub fn el_connect<S: Real>(
    data: &MagneticTonelliData<S>,
    q0: V2<S>,
    q1: V2<S>,
    e: S,
    opts: &ConnectOpts<S>,
) -> Result<LoopSegment<S>> {
    let dist = data.surface.chart_distance(q0, q1);
    if dist > opts.rho_inj {
        return Err(Error::TooFarApart {
            dist: dist.as_f64(),
            rho_inj: opts.rho_inj.as_f64(),
        });
    }
    if dist.as_f64() < 1e-12 {
        return Err(Error::NoLocalMinimizer);
    }
    let v_pot = data.potential.value(data.surface.reduce(q0));
    let kinetic = e - v_pot;
    if kinetic <= S::zero() {
        return Err(Error::EnergyRange {
            e: e.as_f64(),
            lo: Some(v_pot.as_f64()),
            hi: None,
        });
    }
    let speed = (S::of(2.0) * kinetic).sqrt();

    // g-orthonormal frame at q0 (diagonal metrics on both charts)
    let g = data.surface.metric(q0)?;
    let e1 = [S::one() / g[0][0].sqrt(), S::zero()];
    let e2 = [S::zero(), S::one() / g[1][1].sqrt()];
    let velocity = |alpha: S| -> V2<S> {
        add(
            scale(e1, speed * alpha.cos()),
            scale(e2, speed * alpha.sin()),
        )
    };

    let target = add(q0, data.surface.displacement(q0, q1));
    let substeps = 24usize;
    let flow_to = |alpha: S, tau: S| -> Result<Trajectory<S>> {
        el_flow(data, q0, velocity(alpha), tau, tau / S::of(substeps as f64))
    };
    let miss = |alpha: S, tau: S| -> Result<V2<S>> {
        let tr = flow_to(alpha, tau)?;
        Ok(sub(tr.end().0, target))
    };

    // initial guess: straight chart shot
    let d = sub(target, q0);
    let dir = scale(d, S::one() / norm(d));
    // direction angle in the orthonormal frame
    let comp1 = dot(dir, [e1[0] * g[0][0], e1[1] * g[1][1]]);
    let comp2 = dot(dir, [e2[0] * g[0][0], e2[1] * g[1][1]]);
    let mut alpha = S::of(comp2.as_f64().atan2(comp1.as_f64()));
    let mut tau = data.surface.tangent_norm(q0, d)? / speed;
    if tau > opts.tau_inj {
        return Err(Error::NoLocalMinimizer);
    }

    let tol = S::of(1e-8);
    let mut ok = false;
    for _iter in 0..40 {
        let f = match miss(alpha, tau) {
            Ok(f) => f,
            Err(_) => return Err(Error::NoLocalMinimizer),
        };
        if norm(f) < tol {
            ok = true;
            break;
        }
        // finite-difference Jacobian in (alpha, tau)
        let ha = S::of(1e-7);
        let ht = (tau * S::of(1e-7)).max(S::of(1e-10));
        let fa = miss(alpha + ha, tau).map_err(|_| Error::NoLocalMinimizer)?;
        let ft = miss(alpha, tau + ht).map_err(|_| Error::NoLocalMinimizer)?;
        let jac = [
            [(fa[0] - f[0]) / ha, (ft[0] - f[0]) / ht],
            [(fa[1] - f[1]) / ha, (ft[1] - f[1]) / ht],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < S::of(1e-18) {
            return Err(Error::NoLocalMinimizer);
        }
        let da = (f[0] * jac[1][1] - f[1] * jac[0][1]) / det;
        let dt = (jac[0][0] * f[1] - jac[1][0] * f[0]) / det;
        alpha = alpha - da;
        tau = tau - dt;
        if !(tau > S::zero()) || tau > opts.tau_inj {
            return Err(Error::NoLocalMinimizer);
        }
    }
    if !ok {
        return Err(Error::NoLocalMinimizer);
    }

    let tr = flow_to(alpha, tau)?;
    let samples: Vec<V2<S>> = tr.states.iter().map(|(q, _)| *q).collect();
    // free-time action of the arc itself
    let mut action = S::zero();
    let h = tr.step;
    for w in 0..tr.states.len() - 1 {
        let (qa, va) = tr.states[w];
        let (qb, vb) = tr.states[w + 1];
        action = action
            + S::of(0.5) * h * (lagrangian_eval(data, qa, va)? + lagrangian_eval(data, qb, vb)?);
    }
    action = action + tau * e;

    // a local minimizer must not exceed the straight-chart comparison arc
    let straight: Vec<V2<S>> = (0..=16)
        .map(|i| add(q0, scale(d, S::of(i as f64 / 16.0))))
        .collect();
    let straight_action = polyline_free_time_action(data, &straight, e)?;
    if action > straight_action + S::of(1e-9) {
        return Err(Error::NoLocalMinimizer);
    }

    Ok(LoopSegment {
        samples,
        duration: tau,
        action,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loops::latitude_circle;
    use crate::preset::preset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn torus_example() -> MagneticTonelliData<f64> {
        preset("torus-example").unwrap()
    }

    #[test]
    fn golden_latitude_actions() {
        let data = torus_example();
        let surface = data.surface;
        // unit-speed +x circle at y = 0 has zero action at e = 1/2
        let c = latitude_circle(&surface, 0.0, true, 1.0, 256).unwrap();
        let s = action_free_period(&data, &c, 0.5).unwrap();
        assert!(s.abs() < 1e-10, "S = {s}");
        // closed form sqrt(2e) - cos(2 pi y) at e = 0.3
        let speed = 0.6f64.sqrt();
        let c = latitude_circle(&surface, 0.0, true, speed, 256).unwrap();
        let s = action_free_period(&data, &c, 0.3).unwrap();
        let want = speed - 1.0;
        assert!((s - want).abs() < 1e-12, "S = {s} vs {want}");
    }

    #[test]
    fn affine_dependence_on_energy() {
        let data = torus_example();
        let surface = data.surface;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let y0: f64 = rng.gen();
            let amp: f64 = 0.2 * rng.gen::<f64>();
            let lp = LoopPath::from_fn(
                &surface,
                |t| {
                    let a = 2.0 * std::f64::consts::PI * t;
                    [t + amp * a.sin(), y0 + amp * (2.0 * a).cos()]
                },
                64,
                0.5 + rng.gen::<f64>(),
            )
            .unwrap();
            let (e1, e2) = (rng.gen::<f64>(), 2.0 * rng.gen::<f64>());
            let s1 = action_free_period(&data, &lp, e1).unwrap();
            let s2 = action_free_period(&data, &lp, e2).unwrap();
            let lhs = s1 - s2;
            let rhs = (e1 - e2) * lp.period;
            let rel = (lhs - rhs).abs() / rhs.abs().max(1e-30);
            assert!(rel < 1e-12, "rel = {rel}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let presets = ["torus-example", "sphere-magnetic", "pendulum-torus"];
        for name in presets {
            let data: MagneticTonelliData<f64> = preset(name).unwrap();
            let surface = data.surface;
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..10 {
                let n = 24usize;
                let base_y = match surface.kind {
                    crate::surface::SurfaceKind::FlatTorus => rng.gen::<f64>(),
                    crate::surface::SurfaceKind::RoundSphere => 0.4 * (2.0 * rng.gen::<f64>() - 1.0),
                };
                let amp = 0.05;
                let lp = LoopPath::from_fn(
                    &surface,
                    |t| {
                        let a = 2.0 * std::f64::consts::PI * t;
                        let px = surface.periods()[0].unwrap();
                        [
                            px * t + amp * a.sin(),
                            base_y + amp * (2.0 * a).cos(),
                        ]
                    },
                    n,
                    0.8 + rng.gen::<f64>(),
                )
                .unwrap();
                let e = 0.4;
                let ev = action_gradient(&data, &lp, e).unwrap();
                let h = 1e-6;
                let mut max_rel = 0.0f64;
                for k in (0..n).step_by(5) {
                    for c in 0..2 {
                        let mut lp_p = lp.clone();
                        let mut lp_m = lp.clone();
                        lp_p.samples[k][c] += h;
                        lp_m.samples[k][c] -= h;
                        let fd = (action_free_period(&data, &lp_p, e).unwrap()
                            - action_free_period(&data, &lp_m, e).unwrap())
                            / (2.0 * h);
                        let rel = (ev.gradient_samples[k][c] - fd).abs() / fd.abs().max(1.0);
                        max_rel = max_rel.max(rel);
                    }
                }
                let mut lp_p = lp.clone();
                let mut lp_m = lp.clone();
                lp_p.period += h;
                lp_m.period -= h;
                let fd = (action_free_period(&data, &lp_p, e).unwrap()
                    - action_free_period(&data, &lp_m, e).unwrap())
                    / (2.0 * h);
                let rel = (ev.gradient_period - fd).abs() / fd.abs().max(1.0);
                max_rel = max_rel.max(rel);
                assert!(max_rel < 1e-6, "{name}: rel = {max_rel}");
            }
        }
    }

    #[test]
    fn gradient_vanishes_on_critical_circle() {
        let data = torus_example();
        let c = latitude_circle(&data.surface, 0.0, true, 1.0, 128).unwrap();
        let ev = action_gradient(&data, &c, 0.5).unwrap();
        let gn = ev
            .gradient_samples
            .iter()
            .map(|g| g[0] * g[0] + g[1] * g[1])
            .sum::<f64>()
            .sqrt()
            + ev.gradient_period.abs();
        assert!(gn < 1e-8, "gradient norm {gn}");
        assert!(ev.energy_residual < 1e-12);
    }

    #[test]
    fn constant_loop_at_potential_max_has_zero_period_gradient() {
        let data: MagneticTonelliData<f64> = preset("pendulum-torus").unwrap();
        // V = cos(2 pi y) has its max at y = 0; constant loop there, e = e0 = 1
        let lp = LoopPath::from_fn(&data.surface, |t| [1e-9 * (6.28 * t).sin(), 0.0], 16, 2.0)
            .unwrap();
        let ev = action_gradient(&data, &lp, 1.0).unwrap();
        assert!(ev.gradient_period.abs() < 1e-10);
    }

    #[test]
    fn descend_perturbed_circle_reaches_golden_value() {
        let data = torus_example();
        let surface = data.surface;
        let lp = LoopPath::from_fn(
            &surface,
            |t| {
                let a = 2.0 * std::f64::consts::PI * t;
                [t + 0.05 * (2.0 * a).sin(), 0.05 * a.cos() - 0.02 * (3.0 * a).sin()]
            },
            64,
            1.1,
        )
        .unwrap();
        let opts = DescentOpts {
            max_iters: 60_000,
            grad_tol: 1e-7,
            ..Default::default()
        };
        let out = descend_to_waist(&data, &lp, 0.3, &opts).unwrap();
        let want = 0.6f64.sqrt() - 1.0;
        assert!(out.converged, "iters = {}", out.iterations);
        assert!(
            (out.value - want).abs() < 1e-4,
            "value {} vs {want}",
            out.value
        );
        // converged waists have constant energy e after arclength reparametrization
        let relaxed =
            crate::loops::reparametrize_arclength(&surface, &out.loop_path).unwrap();
        let ev = action_gradient(&data, &relaxed, 0.3).unwrap();
        assert!(ev.energy_residual < 1e-4, "residual {}", ev.energy_residual);
    }

    #[test]
    fn free_sphere_loop_collapses_to_period_floor() {
        let data: MagneticTonelliData<f64> = preset("round-sphere-free").unwrap();
        let lp = LoopPath::from_fn(
            &data.surface,
            |t| {
                let a = 2.0 * std::f64::consts::PI * t;
                [1.0 + 0.4 * a.cos(), 0.4 * a.sin()]
            },
            48,
            1.0,
        )
        .unwrap();
        let opts = DescentOpts {
            max_iters: 40_000,
            ..Default::default()
        };
        let out = descend_to_waist(&data, &lp, 0.5, &opts).unwrap();
        assert!(out.hit_period_floor, "value {} conv {}", out.value, out.converged);
    }

    #[test]
    fn descend_free_torus_class_one_zero() {
        let data: MagneticTonelliData<f64> = preset("flat-torus-free").unwrap();
        let lp = LoopPath::from_fn(
            &data.surface,
            |t| {
                let a = 2.0 * std::f64::consts::PI * t;
                [t + 0.1 * a.sin(), 0.3 + 0.15 * a.cos()]
            },
            64,
            2.0,
        )
        .unwrap();
        let opts = DescentOpts {
            max_iters: 60_000,
            grad_tol: 1e-8,
            ..Default::default()
        };
        let out = descend_to_waist(&data, &lp, 0.5, &opts).unwrap();
        assert!(out.converged);
        assert!((out.value - 1.0).abs() < 1e-6, "value {}", out.value);
    }

    #[test]
    fn descent_trace_records_monotone_values() {
        let data = torus_example();
        let lp = LoopPath::from_fn(
            &data.surface,
            |t| {
                let a = 2.0 * std::f64::consts::PI * t;
                [t + 0.03 * a.sin(), 0.04 * a.cos()]
            },
            32,
            1.2,
        )
        .unwrap();
        let out = descend_multicurve(
            &data,
            vec![lp],
            0.3,
            &DescentOpts {
                max_iters: 200,
                record_trace: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!out.trace.is_empty());
        for w in out.trace.windows(2) {
            assert!(w[1].value <= w[0].value + 1e-15, "descent must not increase");
        }
        let csv = descent_trace_csv(&out.trace);
        assert!(csv.starts_with("iteration,value,gradient_norm,period\n"));
        assert_eq!(csv.lines().count(), out.trace.len() + 1);
    }

    #[test]
    fn el_flow_straight_line_on_free_torus() {
        let data: MagneticTonelliData<f64> = preset("flat-torus-free").unwrap();
        let tr = el_flow(&data, [0.0, 0.0], [1.0, 0.0], 1.0, 1e-3).unwrap();
        let (q, v) = tr.end();
        assert!((q[0] - 1.0).abs() < 1e-12 && q[1].abs() < 1e-12);
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert!(tr.energy_drift < 1e-12);
    }

    #[test]
    fn el_flow_invariant_line_of_torus_example() {
        let data = torus_example();
        let tr = el_flow(&data, [0.0, 0.0], [1.0, 0.0], 1.0, 1e-3).unwrap();
        let (q, _) = tr.end();
        assert!((q[0] - 1.0).abs() < 1e-8, "q = {q:?}");
        for (qq, _) in &tr.states {
            assert!(qq[1].abs() < 1e-8);
        }
    }

    #[test]
    fn el_flow_sphere_equator_orbit_closes() {
        let data: MagneticTonelliData<f64> = preset("sphere-magnetic").unwrap();
        let t_end = 2.0 * std::f64::consts::PI / 0.6;
        let tr = el_flow(&data, [0.0, 0.0], [-0.6, 0.0], t_end, 1e-3).unwrap();
        let (q, _) = tr.end();
        let d = data.surface.chart_distance(q, [0.0, 0.0]);
        assert!(d < 1e-6, "closure miss {d}");
        assert!(tr.energy_drift < 1e-8);
    }

    #[test]
    fn el_flow_energy_drift_on_curved_orbit() {
        let data = torus_example();
        // generic starting point, curved dynamics
        let tr = el_flow(&data, [0.1, 0.17], [0.6, 0.3], 1.0, 1e-3).unwrap();
        assert!(tr.energy_drift < 1e-8, "drift {}", tr.energy_drift);
    }

    #[test]
    fn el_connect_straight_cases() {
        let free: MagneticTonelliData<f64> = preset("flat-torus-free").unwrap();
        let seg = el_connect(&free, [0.0, 0.0], [0.03, 0.0], 0.5, &ConnectOpts::default())
            .unwrap();
        assert!((seg.duration - 0.03).abs() < 1e-6, "tau {}", seg.duration);

        let data = torus_example();
        let seg = el_connect(&data, [0.0, 0.0], [0.03, 0.0], 0.5, &ConnectOpts::default())
            .unwrap();
        assert!((seg.duration - 0.03).abs() < 1e-6);
        for s in &seg.samples {
            assert!(s[1].abs() < 1e-8);
        }
    }

    #[test]
    fn el_connect_rejects_bad_inputs() {
        let data = torus_example();
        assert!(matches!(
            el_connect(&data, [0.0, 0.0], [0.3, 0.0], 0.5, &ConnectOpts::default()),
            Err(Error::TooFarApart { .. })
        ));
        assert!(matches!(
            el_connect(&data, [0.2, 0.2], [0.2, 0.2], 0.5, &ConnectOpts::default()),
            Err(Error::NoLocalMinimizer)
        ));
    }

    #[test]
    fn el_connect_beats_random_comparison_polylines() {
        let data = torus_example();
        let q0 = [0.1, 0.12];
        let q1 = [0.13, 0.14];
        let e = 0.4;
        let arc = el_connect(&data, q0, q1, e, &ConnectOpts::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            // random polyline inside the rho_inj ball around q0
            let mut pts = vec![q0];
            for i in 1..6 {
                let t = i as f64 / 6.0;
                let base = [q0[0] + t * (q1[0] - q0[0]), q0[1] + t * (q1[1] - q0[1])];
                pts.push([
                    base[0] + 0.01 * (rng.gen::<f64>() - 0.5),
                    base[1] + 0.01 * (rng.gen::<f64>() - 0.5),
                ]);
            }
            pts.push(q1);
            let comparison = polyline_free_time_action(&data, &pts, e).unwrap();
            assert!(
                arc.action < comparison,
                "arc {} vs polyline {comparison}",
                arc.action
            );
        }
    }
}
