//! Energy thresholds of the Lagrangian system: the maximal rest energy
//! `e0 = max_q E(q, 0)`, the Mane critical value `c` through the inf-sup
//! `c = inf_u max_q H(q, du)` over grid functions, the abelian-cover value
//! `c0` by minimizing Mather's alpha function `alpha(eta) = c(L - eta)`
//! over harmonic one-forms, the universal-cover value `cu` through the
//! cover identifications of the two supported surfaces, the pointwise
//! criterion `lambda(q) = 2 |d^2 V(q)|^{1/2} - |d theta_q|` on the maximum
//! level set of the potential, and its small-loop action probe.

use serde::Serialize;

use crate::action::action_free_period;
use crate::error::{Error, Result};
use crate::fields::ShiftedOneForm;
use crate::lagrangian::MagneticTonelliData;
use crate::loops::LoopPath;
use crate::scalar::{inverse, matvec, quad, real_eigenvalues, Real, V2};
use crate::surface::{chart_bounds, grid_maximize, two_form_density, SurfaceKind};

/// One critical-value estimate: `value` is the inf-sup upper bound, the
/// tolerance is `upper - lower` (one-sided when no loop-derived lower bound
/// is wired in).
#[derive(Debug, Clone, Serialize)]
pub struct CriticalEstimate<S> {
    pub value: S,
    pub lower: S,
    pub upper: S,
    pub tolerance: S,
    pub method: String,
    pub warning: Option<String>,
}

/// Computed spectrum of energy thresholds with per-value method notes.
#[derive(Debug, Clone, Serialize)]
pub struct EnergySpectrum<S> {
    pub e0: S,
    pub c: CriticalEstimate<S>,
    pub c0: CriticalEstimate<S>,
    pub cu: CriticalEstimate<S>,
    pub cw_estimate: Option<S>,
}

/// Options for the inf-sup solvers.
#[derive(Debug, Clone, Copy)]
pub struct CriticalOpts {
    /// Final grid resolution of the ladder (nodes per side).
    pub grid_k: usize,
    /// Subgradient iterations per ladder level.
    pub iters: usize,
    /// Fine evaluation grid for the hard upper bound.
    pub eval_grid: usize,
}

impl Default for CriticalOpts {
    fn default() -> Self {
        CriticalOpts {
            grid_k: 64,
            iters: 320,
            eval_grid: 384,
        }
    }
}

/// `e0 = max_q E(q, 0) = max_q V(q)`: 512x512 grid scan with local zoom
/// refinement.
pub fn compute_e0<S: Real>(data: &MagneticTonelliData<S>) -> S {
    if data.potential.is_zero() {
        return S::zero();
    }
    grid_maximize(&data.surface, &|q| data.potential.value(data.surface.reduce(q))).1
}

/// Location of the potential maximum.
pub fn argmax_potential<S: Real>(data: &MagneticTonelliData<S>) -> V2<S> {
    grid_maximize(&data.surface, &|q| data.potential.value(data.surface.reduce(q))).0
}

/// Grid of nodes for the inf-sup solve, with chart coordinates and
/// precomputed field data.
struct InfSupGrid<S> {
    k: usize,
    /// Node spacing per axis.
    h: [S; 2],
    /// Wraps in the second axis (torus) or clamps (sphere).
    wrap_y: bool,
    points: Vec<V2<S>>,
    theta: Vec<V2<S>>,
    g_inv: Vec<[[S; 2]; 2]>,
    potential: Vec<S>,
}

impl<S: Real> InfSupGrid<S> {
    fn build(data: &MagneticTonelliData<S>, k: usize) -> Self {
        let surface = &data.surface;
        let (lo, hi) = chart_bounds(surface);
        let wrap_y = surface.kind == SurfaceKind::FlatTorus;
        // torus nodes hit the lattice exactly; sphere nodes stay off the caps
        let h = match surface.kind {
            SurfaceKind::FlatTorus => [S::one() / S::of(k as f64), S::one() / S::of(k as f64)],
            SurfaceKind::RoundSphere => [
                (hi[0] - lo[0]) / S::of(k as f64),
                (hi[1] - lo[1]) / S::of(k as f64),
            ],
        };
        let mut points = Vec::with_capacity(k * k);
        for j in 0..k {
            for i in 0..k {
                let q = match surface.kind {
                    SurfaceKind::FlatTorus => {
                        [S::of(i as f64) * h[0], S::of(j as f64) * h[1]]
                    }
                    SurfaceKind::RoundSphere => [
                        lo[0] + S::of(i as f64) * h[0],
                        lo[1] + (S::of(j as f64) + S::of(0.5)) * h[1],
                    ],
                };
                points.push(q);
            }
        }
        let theta: Vec<V2<S>> = points
            .iter()
            .map(|&q| data.theta.eval(surface.reduce(q)))
            .collect();
        let g_inv: Vec<[[S; 2]; 2]> = points
            .iter()
            .map(|&q| inverse(surface.metric(q).expect("interior node")))
            .collect();
        let potential: Vec<S> = points
            .iter()
            .map(|&q| data.potential.value(surface.reduce(q)))
            .collect();
        InfSupGrid {
            k,
            h,
            wrap_y,
            points,
            theta,
            g_inv,
            potential,
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.k + i
    }

    /// Centered-difference gradient of `u` at every node (one-sided at the
    /// sphere's z-extremes).
    fn gradient_field(&self, u: &[S]) -> Vec<V2<S>> {
        let k = self.k;
        let two = S::of(2.0);
        let mut out = vec![[S::zero(); 2]; k * k];
        for j in 0..k {
            for i in 0..k {
                let ip = (i + 1) % k;
                let im = (i + k - 1) % k;
                let dx = (u[self.idx(ip, j)] - u[self.idx(im, j)]) / (two * self.h[0]);
                let dy = if self.wrap_y {
                    let jp = (j + 1) % k;
                    let jm = (j + k - 1) % k;
                    (u[self.idx(i, jp)] - u[self.idx(i, jm)]) / (two * self.h[1])
                } else if j == 0 {
                    (u[self.idx(i, 1)] - u[self.idx(i, 0)]) / self.h[1]
                } else if j == k - 1 {
                    (u[self.idx(i, k - 1)] - u[self.idx(i, k - 2)]) / self.h[1]
                } else {
                    (u[self.idx(i, j + 1)] - u[self.idx(i, j - 1)]) / (two * self.h[1])
                };
                out[self.idx(i, j)] = [dx, dy];
            }
        }
        out
    }

    /// `H(q, du - theta)` at every node.
    fn hamiltonian_values(&self, du: &[V2<S>]) -> Vec<S> {
        let half = S::of(0.5);
        du.iter()
            .enumerate()
            .map(|(n, d)| {
                let m = [d[0] - self.theta[n][0], d[1] - self.theta[n][1]];
                half * quad(self.g_inv[n], m, m) + self.potential[n]
            })
            .collect()
    }

    /// Soft-max objective and its gradient with respect to `u`.
    fn softmax_objective(&self, u: &[S], temp: S) -> (S, Vec<S>) {
        let k = self.k;
        let du = self.gradient_field(u);
        let hvals = self.hamiltonian_values(&du);
        let hmax = hvals.iter().fold(S::neg_infinity(), |a, &b| a.max(b));
        let mut weights: Vec<S> = hvals.iter().map(|&h| ((h - hmax) / temp).exp()).collect();
        let wsum: S = weights.iter().fold(S::zero(), |a, &b| a + b);
        for w in &mut weights {
            *w = *w / wsum;
        }
        let objective = hmax + temp * (wsum / S::of((k * k) as f64)).ln();
        // dH/d(du) = g^{-1} (du - theta); scatter through the stencil
        let two = S::of(2.0);
        let mut grad = vec![S::zero(); k * k];
        for j in 0..k {
            for i in 0..k {
                let n = self.idx(i, j);
                let d = du[n];
                let m = matvec(self.g_inv[n], [
                    d[0] - self.theta[n][0],
                    d[1] - self.theta[n][1],
                ]);
                let w = weights[n];
                let ip = (i + 1) % k;
                let im = (i + k - 1) % k;
                grad[self.idx(ip, j)] = grad[self.idx(ip, j)] + w * m[0] / (two * self.h[0]);
                grad[self.idx(im, j)] = grad[self.idx(im, j)] - w * m[0] / (two * self.h[0]);
                if self.wrap_y {
                    let jp = (j + 1) % k;
                    let jm = (j + k - 1) % k;
                    grad[self.idx(i, jp)] = grad[self.idx(i, jp)] + w * m[1] / (two * self.h[1]);
                    grad[self.idx(i, jm)] = grad[self.idx(i, jm)] - w * m[1] / (two * self.h[1]);
                } else if j == 0 {
                    grad[self.idx(i, 1)] = grad[self.idx(i, 1)] + w * m[1] / self.h[1];
                    grad[self.idx(i, 0)] = grad[self.idx(i, 0)] - w * m[1] / self.h[1];
                } else if j == k - 1 {
                    grad[self.idx(i, k - 1)] = grad[self.idx(i, k - 1)] + w * m[1] / self.h[1];
                    grad[self.idx(i, k - 2)] = grad[self.idx(i, k - 2)] - w * m[1] / self.h[1];
                } else {
                    grad[self.idx(i, j + 1)] = grad[self.idx(i, j + 1)] + w * m[1] / (two * self.h[1]);
                    grad[self.idx(i, j - 1)] = grad[self.idx(i, j - 1)] - w * m[1] / (two * self.h[1]);
                }
            }
        }
        (objective, grad)
    }

    /// Bilinear interpolation of the node gradient field at a chart point.
    fn interpolate_gradient(&self, du: &[V2<S>], q: V2<S>) -> V2<S> {
        let k = self.k;
        let (lo, _hi) = (self.points[0], ());
        let _ = lo;
        // fractional node coordinates
        let (fx, fy) = {
            let base = self.points[0];
            (
                ((q[0] - base[0]) / self.h[0]).as_f64(),
                ((q[1] - base[1]) / self.h[1]).as_f64(),
            )
        };
        let kf = k as f64;
        let (fx, fy) = if self.wrap_y {
            (fx.rem_euclid(kf), fy.rem_euclid(kf))
        } else {
            (fx.rem_euclid(kf), fy.clamp(0.0, kf - 1.0 - 1e-9))
        };
        let i0 = fx.floor() as usize % k;
        let j0 = fy.floor() as usize;
        let tx = S::of(fx - fx.floor());
        let ty = S::of(fy - fy.floor());
        let i1 = (i0 + 1) % k;
        let j1 = if self.wrap_y { (j0 + 1) % k } else { (j0 + 1).min(k - 1) };
        let mut out = [S::zero(); 2];
        let one = S::one();
        for c in 0..2 {
            let v00 = du[self.idx(i0, j0)][c];
            let v10 = du[self.idx(i1, j0)][c];
            let v01 = du[self.idx(i0, j1)][c];
            let v11 = du[self.idx(i1, j1)][c];
            out[c] = v00 * (one - tx) * (one - ty)
                + v10 * tx * (one - ty)
                + v01 * (one - tx) * ty
                + v11 * tx * ty;
        }
        out
    }
}

/// Hard upper bound for a grid function `u`: sample `H(q, du~(q))` on a fine
/// grid with zoom refinement (`du~` bilinear from the node gradients).
fn hard_upper_bound<S: Real>(
    data: &MagneticTonelliData<S>,
    grid: &InfSupGrid<S>,
    u: &[S],
    eval_grid: usize,
) -> S {
    let du = grid.gradient_field(u);
    let surface = &data.surface;
    let half = S::of(0.5);
    let eval = |q: V2<S>| -> S {
        let th = data.theta.eval(surface.reduce(q));
        let gi = match surface.metric(q) {
            Ok(g) => inverse(g),
            Err(_) => return S::neg_infinity(),
        };
        let d = grid.interpolate_gradient(&du, q);
        let m = [d[0] - th[0], d[1] - th[1]];
        half * quad(gi, m, m) + data.potential.value(surface.reduce(q))
    };
    let (lo, hi) = chart_bounds(surface);
    let n = eval_grid;
    let mut best = S::neg_infinity();
    let mut best_q = lo;
    for j in 0..n {
        for i in 0..n {
            let q = [
                lo[0] + (hi[0] - lo[0]) * S::of(i as f64 / n as f64),
                lo[1] + (hi[1] - lo[1]) * S::of((j as f64 + 0.5) / n as f64),
            ];
            let v = eval(q);
            if v > best {
                best = v;
                best_q = q;
            }
        }
    }
    // zoom refinement around the arg max
    let mut half_win = [
        (hi[0] - lo[0]) / S::of(n as f64),
        (hi[1] - lo[1]) / S::of(n as f64),
    ];
    for _ in 0..20 {
        let c = best_q;
        for dj in -3i32..=3 {
            for di in -3i32..=3 {
                let q = [
                    c[0] + half_win[0] * S::of(di as f64 / 3.0),
                    c[1] + half_win[1] * S::of(dj as f64 / 3.0),
                ];
                let v = eval(q);
                if v > best {
                    best = v;
                    best_q = q;
                }
            }
        }
        half_win = [half_win[0] * half, half_win[1] * half];
    }
    best
}

/// Bilinear prolongation of `u` from a k-grid to a 2k-grid.
fn prolong<S: Real>(u: &[S], k: usize, wrap_y: bool) -> Vec<S> {
    let k2 = 2 * k;
    let mut out = vec![S::zero(); k2 * k2];
    let half = S::of(0.5);
    let quarter = S::of(0.25);
    let at = |i: usize, j: usize| u[(j % k) * k + (i % k)];
    let at_clamped = |i: usize, j: usize| {
        let jj = if wrap_y { j % k } else { j.min(k - 1) };
        u[jj * k + (i % k)]
    };
    for j in 0..k2 {
        for i in 0..k2 {
            let (i0, j0) = (i / 2, j / 2);
            let v = match (i % 2, j % 2) {
                (0, 0) => at_clamped(i0, j0),
                (1, 0) => half * (at_clamped(i0, j0) + at_clamped(i0 + 1, j0)),
                (0, 1) => {
                    if wrap_y {
                        half * (at(i0, j0) + at(i0, j0 + 1))
                    } else {
                        half * (at_clamped(i0, j0) + at_clamped(i0, j0 + 1))
                    }
                }
                _ => {
                    quarter
                        * (at_clamped(i0, j0)
                            + at_clamped(i0 + 1, j0)
                            + at_clamped(i0, j0 + 1)
                            + at_clamped(i0 + 1, j0 + 1))
                }
            };
            out[j * k2 + i] = v;
        }
    }
    out
}

/// Inf-sup estimate of the Mane critical value: annealed soft-max descent
/// over grid functions `u` on a coarse-to-fine ladder (8 -> grid_k) with
/// warm starts, reporting the best hard upper bound seen across the ladder.
/// The lower bound is `max(e0, lower_hint)`; without a loop-derived hint
/// the tolerance is one-sided.
pub fn compute_mane_c<S: Real>(
    data: &MagneticTonelliData<S>,
    opts: &CriticalOpts,
    lower_hint: Option<S>,
) -> CriticalEstimate<S> {
    let e0 = compute_e0(data);
    let mut upper = S::infinity();

    // temperature anneal ladder, 1e-1 -> 1e-4
    let temps: [f64; 7] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

    let mut k = 8usize;
    let mut u: Vec<S> = vec![S::zero(); k * k];
    loop {
        let grid = InfSupGrid::build(data, k);
        // hard bound of the warm start (u = 0 at the first level)
        upper = upper.min(hard_upper_bound(data, &grid, &u, opts.eval_grid));
        let per_stage = (opts.iters / temps.len()).max(4);
        let mut alpha = S::of(1.0);
        for &t in &temps {
            let temp = S::of(t);
            let (mut fval, mut grad) = grid.softmax_objective(&u, temp);
            for _ in 0..per_stage {
                let gnorm2: S = grad.iter().fold(S::zero(), |a, &g| a + g * g);
                if gnorm2 < S::of(1e-24) {
                    break;
                }
                let mut accepted = false;
                for _ in 0..30 {
                    let cand: Vec<S> = u
                        .iter()
                        .zip(grad.iter())
                        .map(|(&x, &g)| x - alpha * g)
                        .collect();
                    let (fc, gc) = grid.softmax_objective(&cand, temp);
                    if fc <= fval - S::of(1e-4) * alpha * gnorm2 {
                        u = cand;
                        fval = fc;
                        grad = gc;
                        accepted = true;
                        break;
                    }
                    alpha = alpha * S::of(0.5);
                }
                if !accepted {
                    break;
                }
                alpha = (alpha * S::of(1.4)).min(S::of(1e3));
            }
        }
        upper = upper.min(hard_upper_bound(data, &grid, &u, opts.eval_grid));
        if k >= opts.grid_k {
            break;
        }
        u = prolong(&u, k, grid.wrap_y);
        k *= 2;
    }

    let lower = match lower_hint {
        Some(h) => e0.max(h),
        None => e0,
    };
    let lower = lower.min(upper);
    let tolerance = (upper - lower).max(S::zero());
    let warning = if tolerance > S::of(0.05) * upper.abs().max(S::of(1e-12)) {
        Some(format!(
            "non-convergence: tolerance {} exceeds 5% of the upper bound {}",
            tolerance, upper
        ))
    } else {
        None
    };
    CriticalEstimate {
        value: upper,
        lower,
        upper,
        tolerance,
        method: format!(
            "inf-sup over {0}x{0} grid potentials, annealed soft-max descent, ladder from 8",
            opts.grid_k
        ),
        warning,
    }
}

/// Mane critical value of the shifted Lagrangian `L - eta` for a constant
/// harmonic form `eta = eta_0 dx + eta_1 dy`.
fn alpha_of_eta<S: Real>(
    data: &MagneticTonelliData<S>,
    eta: V2<S>,
    opts: &CriticalOpts,
) -> CriticalEstimate<S> {
    let shifted = data.with_theta(std::sync::Arc::new(ShiftedOneForm {
        inner: data.theta.clone(),
        eta,
    }));
    compute_mane_c(&shifted, opts, None)
}

/// `c0` via Mather's alpha function: on the sphere `c0 = c`; on the torus,
/// minimize `alpha(eta) = c(L - eta)` over harmonic one-forms with a
/// coarse-to-fine scan and Nelder-Mead refinement.
pub fn compute_c0<S: Real>(
    data: &MagneticTonelliData<S>,
    opts: &CriticalOpts,
    lower_hint: Option<S>,
) -> CriticalEstimate<S> {
    if data.surface.kind == SurfaceKind::RoundSphere {
        let mut est = compute_mane_c(data, opts, lower_hint);
        est.method = format!("c0 = c on the sphere (trivial H^1); {}", est.method);
        return est;
    }
    let scan_opts = CriticalOpts {
        grid_k: 32,
        iters: 160,
        eval_grid: 192,
    };
    let bound = S::of(2.0) * data.theta_sup_norm().max(S::of(0.25));
    let mut best_upper = S::infinity();
    let mut best_eta = [S::zero(); 2];
    let coarse = 5i32;
    for j in -(coarse / 2)..=(coarse / 2) {
        for i in -(coarse / 2)..=(coarse / 2) {
            let eta = [
                bound * S::of(i as f64 / (coarse / 2) as f64),
                bound * S::of(j as f64 / (coarse / 2) as f64),
            ];
            let est = alpha_of_eta(data, eta, &scan_opts);
            if est.upper < best_upper {
                best_upper = est.upper;
                best_eta = eta;
            }
        }
    }
    // Nelder-Mead refinement around the best coarse node
    let f = |eta: V2<S>| alpha_of_eta(data, eta, &scan_opts).upper;
    let step = bound * S::of(0.25);
    let mut simplex = vec![
        (best_eta, f(best_eta)),
        ([best_eta[0] + step, best_eta[1]], f([best_eta[0] + step, best_eta[1]])),
        ([best_eta[0], best_eta[1] + step], f([best_eta[0], best_eta[1] + step])),
    ];
    for _ in 0..25 {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let (best, mid, worst) = (simplex[0], simplex[1], simplex[2]);
        let centroid = [
            (best.0[0] + mid.0[0]) * S::of(0.5),
            (best.0[1] + mid.0[1]) * S::of(0.5),
        ];
        let reflect = [
            centroid[0] + (centroid[0] - worst.0[0]),
            centroid[1] + (centroid[1] - worst.0[1]),
        ];
        let fr = f(reflect);
        if fr < best.1 {
            let expand = [
                centroid[0] + S::of(2.0) * (centroid[0] - worst.0[0]),
                centroid[1] + S::of(2.0) * (centroid[1] - worst.0[1]),
            ];
            let fe = f(expand);
            simplex[2] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < mid.1 {
            simplex[2] = (reflect, fr);
        } else {
            let contract = [
                centroid[0] + S::of(0.5) * (worst.0[0] - centroid[0]),
                centroid[1] + S::of(0.5) * (worst.0[1] - centroid[1]),
            ];
            let fc = f(contract);
            if fc < worst.1 {
                simplex[2] = (contract, fc);
            } else {
                // shrink toward the best vertex
                for v in simplex.iter_mut().skip(1) {
                    v.0 = [
                        best.0[0] + S::of(0.5) * (v.0[0] - best.0[0]),
                        best.0[1] + S::of(0.5) * (v.0[1] - best.0[1]),
                    ];
                    v.1 = f(v.0);
                }
            }
        }
        let spread = (simplex[0].1 - simplex[2].1).abs();
        if spread < S::of(1e-4) {
            break;
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    if simplex[0].1 < best_upper {
        best_upper = simplex[0].1;
        best_eta = simplex[0].0;
    }
    // full-budget evaluation at the best shift
    let final_est = alpha_of_eta(data, best_eta, opts);
    let upper = best_upper.min(final_est.upper);

    let e0 = compute_e0(data);
    let lower = match lower_hint {
        Some(h) => e0.max(h),
        None => e0,
    };
    let lower = lower.min(upper);
    let tolerance = (upper - lower).max(S::zero());
    let warning = if tolerance > S::of(0.05) * upper.abs().max(S::of(1e-12)) {
        Some(format!(
            "non-convergence: tolerance {} exceeds 5% of the upper bound {}",
            tolerance, upper
        ))
    } else {
        None
    };
    CriticalEstimate {
        value: upper,
        lower,
        upper,
        tolerance,
        method: format!(
            "min over harmonic shifts eta in [-{b:.3},{b:.3}]^2 of c(L - eta); coarse scan + Nelder-Mead; {inner}",
            b = bound.as_f64(),
            inner = final_est.method
        ),
        warning,
    }
}

/// `cu` via the cover identifications: on the sphere every cover is trivial
/// so `cu = c`; on the torus the fundamental group is abelian so `cu = c0`.
pub fn compute_cu<S: Real>(
    data: &MagneticTonelliData<S>,
    opts: &CriticalOpts,
    lower_hint: Option<S>,
) -> CriticalEstimate<S> {
    match data.surface.kind {
        SurfaceKind::RoundSphere => {
            let mut est = compute_mane_c(data, opts, lower_hint);
            est.method = format!("cu = c on the simply connected sphere; {}", est.method);
            est
        }
        SurfaceKind::FlatTorus => {
            let mut est = compute_c0(data, opts, lower_hint);
            est.method = format!(
                "cu = c0 on the torus (abelian fundamental group); {}",
                est.method
            );
            est
        }
    }
}

/// `lambda(q) = 2 |d^2 V(q)|^{1/2} - |d theta_q|` with `|d^2 V|` the
/// g-operator norm of the Hessian; defined on the maximum level set of V.
pub fn lambda_eval<S: Real>(data: &MagneticTonelliData<S>, q: V2<S>) -> Result<S> {
    let e0 = compute_e0(data);
    let v = data.potential.value(data.surface.reduce(q));
    if v < e0 - S::of(1e-6) {
        return Err(Error::Invalid(format!(
            "point is not on the maximum level set of V: V(q) = {v}, e0 = {e0}"
        )));
    }
    lambda_eval_at(data, q)
}

fn lambda_eval_at<S: Real>(data: &MagneticTonelliData<S>, q: V2<S>) -> Result<S> {
    let g_inv = data.surface.metric_inverse(q)?;
    let hess = data.potential.hessian(data.surface.reduce(q));
    let mut m = [[S::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = g_inv[i][0] * hess[0][j] + g_inv[i][1] * hess[1][j];
        }
    }
    let (big, _) = real_eigenvalues(m);
    let dtheta = two_form_density(&data.surface, data.theta.as_ref(), q)?;
    Ok(S::of(2.0) * big.abs().sqrt() - dtheta.abs())
}

/// Scan verdict of the lambda criterion.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaScan<S> {
    pub negative_found: bool,
    pub witness: V2<S>,
    pub value: S,
}

/// Scan the maximum level set of V for a point with `lambda < 0`; a
/// negative value certifies `e0 < cu`.
pub fn lambda_somewhere_negative<S: Real>(data: &MagneticTonelliData<S>) -> Result<LambdaScan<S>> {
    let e0 = compute_e0(data);
    let (lo, hi) = chart_bounds(&data.surface);
    let n = 256usize;
    let mut best = S::infinity();
    let mut witness = lo;
    for j in 0..n {
        for i in 0..n {
            let q = [
                lo[0] + (hi[0] - lo[0]) * S::of(i as f64 / n as f64),
                lo[1] + (hi[1] - lo[1]) * S::of((j as f64 + 0.5) / n as f64),
            ];
            let v = data.potential.value(data.surface.reduce(q));
            if v < e0 - S::of(1e-6) {
                continue;
            }
            let lam = lambda_eval_at(data, q)?;
            if lam < best {
                best = lam;
                witness = q;
            }
        }
    }
    Ok(LambdaScan {
        negative_found: best < S::zero(),
        witness,
        value: best,
    })
}

/// Result of the small-loop action probe.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeFit<S> {
    /// Fitted limit of `S_{e_r}(gamma_r) / (pi r^2)` as `r -> 0`;
    /// approximately `2 sqrt(a + b) + f(q)`.
    pub intercept: S,
    pub slope: S,
    /// Orientation was flipped to make the circulation term negative.
    pub flipped: bool,
    pub radii: Vec<S>,
    pub normalized_actions: Vec<S>,
}

/// Probe the action of small metric circles around `q` at energies
/// `e_r = e0 + a r^2 / 2` and speed `r sqrt(a + b)`; the normalized action
/// `S / (pi r^2)` is regressed linearly in `r` and its intercept estimates
/// `2 sqrt(a + b) + f(q)`.
pub fn small_loop_probe<S: Real>(
    data: &MagneticTonelliData<S>,
    q: V2<S>,
    a: S,
    radii: &[S],
    n_samples: usize,
) -> Result<ProbeFit<S>> {
    let e0 = compute_e0(data);
    let v = data.potential.value(data.surface.reduce(q));
    if v < e0 - S::of(1e-6) {
        return Err(Error::Invalid(format!(
            "probe point is not on the maximum level set of V: V(q) = {v}, e0 = {e0}"
        )));
    }
    if radii.len() < 2 {
        return Err(Error::Invalid("probe needs at least two radii".into()));
    }
    let g_inv = data.surface.metric_inverse(q)?;
    let hess = data.potential.hessian(data.surface.reduce(q));
    let mut m = [[S::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = g_inv[i][0] * hess[0][j] + g_inv[i][1] * hess[1][j];
        }
    }
    let b = real_eigenvalues(m).0.abs();
    let f = two_form_density(&data.surface, data.theta.as_ref(), q)?;
    let guard = S::of(2.0) * (a + b).sqrt() - f.abs();
    if guard >= S::zero() {
        return Err(Error::SignGuard(guard.as_f64()));
    }
    // counterclockwise circulation integrates f over the disk; flip when f > 0
    let flipped = f > S::zero();
    let orient = if flipped { -S::one() } else { S::one() };

    let g = data.surface.metric(q)?;
    let ax0 = S::one() / g[0][0].sqrt();
    let ax1 = S::one() / g[1][1].sqrt();
    let speed_coef = (a + b).sqrt();
    let mut normalized = Vec::with_capacity(radii.len());
    for &r in radii {
        let circle = LoopPath::from_fn(
            &data.surface,
            |t| {
                let ang = orient * S::of(2.0) * S::PI() * t;
                [q[0] + r * ax0 * ang.cos(), q[1] + r * ax1 * ang.sin()]
            },
            n_samples,
            S::one(), // placeholder, replaced below
        )?;
        let len = circle.metric_length(&data.surface)?;
        let speed = r * speed_coef;
        let period = len / speed;
        let circle = LoopPath {
            period,
            ..circle
        };
        let e_r = e0 + S::of(0.5) * a * r * r;
        let s = action_free_period(data, &circle, e_r)?;
        normalized.push(s / (S::PI() * r * r));
    }
    // least-squares line y = intercept + slope * r
    let n = S::of(radii.len() as f64);
    let sum_r: S = radii.iter().fold(S::zero(), |acc, &r| acc + r);
    let sum_y: S = normalized.iter().fold(S::zero(), |acc, &y| acc + y);
    let sum_rr: S = radii.iter().fold(S::zero(), |acc, &r| acc + r * r);
    let sum_ry: S = radii
        .iter()
        .zip(normalized.iter())
        .fold(S::zero(), |acc, (&r, &y)| acc + r * y);
    let denom = n * sum_rr - sum_r * sum_r;
    let slope = (n * sum_ry - sum_r * sum_y) / denom;
    let intercept = (sum_y - slope * sum_r) / n;
    Ok(ProbeFit {
        intercept,
        slope,
        flipped,
        radii: radii.to_vec(),
        normalized_actions: normalized,
    })
}

/// Assemble the full spectrum. The optional `lower_hint` is a loop-derived
/// lower bound for `c0` (and hence for `c`), typically from zero-action
/// null-homologous boundaries.
pub fn energy_spectrum<S: Real>(
    data: &MagneticTonelliData<S>,
    opts: &CriticalOpts,
    lower_hint: Option<S>,
) -> EnergySpectrum<S> {
    let e0 = compute_e0(data);
    let c0 = compute_c0(data, opts, lower_hint);
    let c = match data.surface.kind {
        // on the sphere all three agree; reuse the c0 estimate
        SurfaceKind::RoundSphere => c0.clone(),
        SurfaceKind::FlatTorus => compute_mane_c(data, opts, lower_hint),
    };
    let cu = match data.surface.kind {
        SurfaceKind::RoundSphere => {
            let mut est = c.clone();
            est.method = format!("cu = c on the simply connected sphere; {}", est.method);
            est
        }
        SurfaceKind::FlatTorus => {
            let mut est = c0.clone();
            est.method = format!(
                "cu = c0 on the torus (abelian fundamental group); {}",
                est.method
            );
            est
        }
    };
    EnergySpectrum {
        e0,
        c,
        c0,
        cu,
        cw_estimate: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preset::preset;

    #[test]
    fn e0_golden_values() {
        let d: MagneticTonelliData<f64> = preset("torus-example").unwrap();
        assert_eq!(compute_e0(&d), 0.0);
        let p: MagneticTonelliData<f64> = preset("pendulum-torus").unwrap();
        assert!((compute_e0(&p) - 1.0).abs() < 1e-8);
        let s: MagneticTonelliData<f64> = preset("sphere-magnetic").unwrap();
        assert_eq!(compute_e0(&s), 0.0);
    }

    #[test]
    fn mane_c_torus_example_brackets_half() {
        let d: MagneticTonelliData<f64> = preset("torus-example").unwrap();
        let est = compute_mane_c(&d, &CriticalOpts::default(), Some(0.5));
        assert!(
            est.value >= 0.49 && est.value <= 0.51,
            "c = {} ({})",
            est.value,
            est.method
        );
        assert!(est.tolerance < 0.01, "tolerance {}", est.tolerance);
        assert!(est.warning.is_none());
    }

    #[test]
    fn mane_c_upper_bound_is_monotone_under_refinement() {
        let d: MagneticTonelliData<f64> = preset("torus-example").unwrap();
        let mut prev = f64::INFINITY;
        for k in [32usize, 64, 128] {
            let est = compute_mane_c(
                &d,
                &CriticalOpts {
                    grid_k: k,
                    iters: 160,
                    eval_grid: 256,
                },
                None,
            );
            assert!(
                est.upper <= prev + 1e-12,
                "upper bound increased at K = {k}: {} > {prev}",
                est.upper
            );
            prev = est.upper;
        }
    }

    #[test]
    fn mane_c_pendulum_equals_max_potential() {
        let p: MagneticTonelliData<f64> = preset("pendulum-torus").unwrap();
        let est = compute_mane_c(&p, &CriticalOpts::default(), None);
        assert!((est.value - 1.0).abs() < 0.01, "c = {}", est.value);
        // with theta = 0 the lower bound e0 already matches
        assert!(est.tolerance < 0.01);
    }

    #[test]
    fn mane_c_sphere_magnetic() {
        let s: MagneticTonelliData<f64> = preset("sphere-magnetic").unwrap();
        let est = compute_mane_c(&s, &CriticalOpts::default(), Some(0.125));
        assert!((est.value - 0.125).abs() < 0.005, "c = {}", est.value);
    }

    #[test]
    fn mane_c_free_sphere_is_zero() {
        let s: MagneticTonelliData<f64> = preset("round-sphere-free").unwrap();
        let est = compute_mane_c(&s, &CriticalOpts::default(), None);
        assert!(est.value.abs() < 1e-9, "c = {}", est.value);
        assert!(est.tolerance < 1e-9);
    }

    #[test]
    fn free_torus_spectrum_is_zero() {
        let d: MagneticTonelliData<f64> = preset("flat-torus-free").unwrap();
        let est = compute_mane_c(&d, &CriticalOpts::default(), None);
        assert!(est.value.abs() < 1e-3, "c = {}", est.value);
    }

    #[test]
    fn lambda_golden_values() {
        let d: MagneticTonelliData<f64> = preset("torus-example").unwrap();
        let lam = lambda_eval(&d, [0.0, 0.25]).unwrap();
        assert!(
            (lam + 2.0 * std::f64::consts::PI).abs() < 1e-6,
            "lambda = {lam}"
        );
        let lam = lambda_eval(&d, [0.0, 0.0]).unwrap();
        assert!(lam.abs() < 1e-9);
        let scan = lambda_somewhere_negative(&d).unwrap();
        assert!(scan.negative_found);

        let free: MagneticTonelliData<f64> = preset("round-sphere-free").unwrap();
        let scan = lambda_somewhere_negative(&free).unwrap();
        assert!(!scan.negative_found);
        assert!(scan.value.abs() < 1e-12);
    }

    #[test]
    fn lambda_off_level_set_rejected() {
        let p: MagneticTonelliData<f64> = preset("pendulum-torus").unwrap();
        // V = cos(2 pi y) has max at y = 0; y = 0.3 is off the level set
        assert!(lambda_eval(&p, [0.0, 0.3]).is_err());
        // at the max itself: V'' < 0, |d theta| = 0, lambda >= 0
        let lam = lambda_eval(&p, [0.2, 0.0]).unwrap();
        assert!(lam > 0.0);
    }

    #[test]
    fn probe_intercept_matches_closed_form() {
        let d: MagneticTonelliData<f64> = preset("torus-example").unwrap();
        let radii = [0.04, 0.02, 0.01];
        let fit = small_loop_probe(&d, [0.0, 0.25], 1.0, &radii, 256).unwrap();
        let want = 2.0 - 2.0 * std::f64::consts::PI;
        assert!(
            (fit.intercept - want).abs() < 0.1 * want.abs(),
            "intercept {} vs {want}",
            fit.intercept
        );
        assert!(!fit.flipped);
        assert!(fit.intercept < 0.0, "negative intercept certifies e0 < cu");
    }

    #[test]
    fn probe_intercept_converges_in_radius() {
        let d: MagneticTonelliData<f64> = preset("torus-example").unwrap();
        let fit_a =
            small_loop_probe(&d, [0.0, 0.25], 1.0, &[0.02, 0.01, 0.005], 256).unwrap();
        let fit_b =
            small_loop_probe(&d, [0.0, 0.25], 1.0, &[0.01, 0.005, 0.0025], 256).unwrap();
        let diff = (fit_a.intercept - fit_b.intercept).abs();
        assert!(
            diff < 0.05 * fit_a.intercept.abs(),
            "{} vs {}",
            fit_a.intercept,
            fit_b.intercept
        );
    }

    #[test]
    fn probe_flips_orientation_on_positive_density() {
        let d: MagneticTonelliData<f64> = preset("torus-example").unwrap();
        // at y = 0.75 the two-form density is +2 pi, so the probe must flip
        let fit = small_loop_probe(&d, [0.0, 0.75], 1.0, &[0.04, 0.02, 0.01], 256).unwrap();
        assert!(fit.flipped);
        assert!((fit.intercept - (2.0 - 2.0 * std::f64::consts::PI)).abs() < 0.5);
    }

    #[test]
    fn probe_sign_guard() {
        let free: MagneticTonelliData<f64> = preset("round-sphere-free").unwrap();
        assert!(matches!(
            small_loop_probe(&free, [0.0, 0.0], 1.0, &[0.04, 0.02], 128),
            Err(Error::SignGuard(_))
        ));
    }
}
