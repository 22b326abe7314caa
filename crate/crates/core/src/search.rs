//! Minimal-boundary search and the experiments built on it: the
//! graph-theorem consistency check, waist continuation above the critical
//! level, minimax multiplicity via string relaxation, orbit-measure
//! statistics, the zero-action criterion for rotationally symmetric
//! magnetic forms, and the Randers closed-geodesic census.
//!
//! The search pipeline mirrors the constructive existence proof: sample
//! null-homologous candidates (structured circle pairs, random blobs,
//! rearranged and chamfered random loops), descend them jointly under the
//! free-period action, re-enforce embeddedness by surgery every 50
//! iterations, certify the result as a homological boundary on the grid,
//! decompose it into topological boundaries, and keep the piece of least
//! action over all seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::action::{
    action_free_period, action_gradient, descend_multicurve, multicurve_action, DescentOpts,
};
use crate::critical::{self, CriticalOpts, EnergySpectrum};
use crate::error::{Error, Result};
use crate::homology::{
    solve_with_refinement, BoundaryCertificate, BoundingChain, DEFAULT_GRID_K,
};
use crate::lagrangian::{check_randers_domain, energy_eval, MagneticTonelliData};
use crate::loops::{
    self, aligned_pointwise_distance, chamfer, hausdorff_distance, homology_class,
    latitude_circle, longitude_circle, min_support_distance, rearrange_double_points,
    reparametrize_arclength, resample_uniform, CrossingKind, LoopPath, Multicurve,
};
use crate::scalar::{add, norm, scale, sub, Real, V2};
use crate::surface::{chart_bounds, grid_maximize, oneform_norm, two_form_density, SurfaceKind};

/// Search options; defaults match the batch front end.
#[derive(Debug, Clone, Copy)]
pub struct SearchOpts<S> {
    pub seeds: usize,
    pub n_samples: usize,
    pub grad_tol: S,
    pub max_iters: usize,
    /// Re-enforce embeddedness by surgery every this many iterations.
    pub embed_every: usize,
    pub grid_k: usize,
    pub rng_seed: u64,
    /// Known critical value; enables the upper range check and the
    /// negative-action failure verdict.
    pub c0_hint: Option<S>,
}

impl<S: Real> Default for SearchOpts<S> {
    fn default() -> Self {
        SearchOpts {
            seeds: 16,
            n_samples: 256,
            grad_tol: S::of(1e-6),
            max_iters: 4000,
            embed_every: 50,
            grid_k: DEFAULT_GRID_K,
            rng_seed: 0,
            c0_hint: None,
        }
    }
}

/// Outcome of one seed of the search.
#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary<S> {
    pub seed_index: usize,
    pub kind: String,
    /// Action of the best decomposition piece, when one survived.
    pub action: Option<S>,
    pub converged: bool,
    pub components_surviving: usize,
}

/// Result of a minimal-boundary search.
#[derive(Debug, Clone, Serialize)]
pub struct SearchReport<S> {
    pub energy: S,
    pub action: S,
    pub multicurve: Multicurve<S>,
    pub component_energy_residuals: Vec<S>,
    pub certificate: BoundaryCertificate,
    pub grid_k_used: usize,
    pub seeds_used: usize,
    /// Pairwise minimum support distances between the stored components.
    pub disjointness: Vec<Vec<S>>,
    pub flags: Vec<String>,
    pub seed_summaries: Vec<SeedSummary<S>>,
}

fn speed_for_energy<S: Real>(data: &MagneticTonelliData<S>, e: S, q: V2<S>) -> Option<S> {
    let v = data.potential.value(data.surface.reduce(q));
    let kinetic = e - v;
    if kinetic <= S::zero() {
        None
    } else {
        Some((S::of(2.0) * kinetic).sqrt())
    }
}

enum SeedKind<S> {
    Multicurve(Vec<LoopPath<S>>, &'static str),
    /// A possibly self-crossing loop that goes through surgery first.
    RawLoop(LoopPath<S>, &'static str),
}

/// Deterministic seed family: structured circle pairs, wobbly blobs, and
/// random Fourier loops (4 modes, amplitude 0.2).
fn build_seed<S: Real>(
    data: &MagneticTonelliData<S>,
    e: S,
    index: usize,
    n: usize,
    master_seed: u64,
) -> Option<SeedKind<S>> {
    let surface = &data.surface;
    let mut rng =
        ChaCha8Rng::seed_from_u64(master_seed ^ (index as u64).wrapping_mul(0x9e3779b97f4a7c15));
    let mut uniform = move || S::of(rng.gen::<f64>());
    match surface.kind {
        SurfaceKind::FlatTorus => {
            let speed = speed_for_energy(data, e, [S::zero(), S::zero()])?;
            match index % 6 {
                0 => {
                    // canonical opposing latitude pair
                    let a = latitude_circle(surface, S::zero(), true, speed, n).ok()?;
                    let b = latitude_circle(surface, S::of(0.5), false, speed, n).ok()?;
                    Some(SeedKind::Multicurve(vec![a, b], "latitude-pair-0-half"))
                }
                1 => {
                    let a = longitude_circle(surface, S::zero(), true, speed, n).ok()?;
                    let b = longitude_circle(surface, S::of(0.5), false, speed, n).ok()?;
                    Some(SeedKind::Multicurve(vec![a, b], "longitude-pair"))
                }
                2 => {
                    // random opposing latitude pair
                    let la = uniform();
                    let mut lb = uniform();
                    if (la - lb).abs().as_f64() < 0.1 {
                        lb = la + S::of(0.37);
                    }
                    let a = latitude_circle(surface, la, true, speed, n).ok()?;
                    let b = latitude_circle(surface, lb, false, speed, n).ok()?;
                    Some(SeedKind::Multicurve(vec![a, b], "latitude-pair-random"))
                }
                3 => {
                    // contractible blob
                    let c = [uniform(), uniform()];
                    let r = S::of(0.12) + S::of(0.1) * uniform();
                    let lp = LoopPath::from_fn(
                        surface,
                        |t| {
                            let a = S::of(2.0) * S::PI() * t;
                            [c[0] + r * a.cos(), c[1] + r * a.sin()]
                        },
                        n,
                        S::one(),
                    )
                    .ok()?;
                    Some(SeedKind::Multicurve(vec![lp], "blob"))
                }
                4 => {
                    // perturbed canonical pair
                    let amp = S::of(0.05);
                    let ph = uniform() * S::of(std::f64::consts::TAU);
                    let a = LoopPath::from_fn(
                        surface,
                        |t| {
                            let ang = S::of(2.0) * S::PI() * t;
                            [t, amp * (S::of(2.0) * ang + ph).sin()]
                        },
                        n,
                        S::one() / speed,
                    )
                    .ok()?;
                    let b = LoopPath::from_fn(
                        surface,
                        |t| {
                            let ang = S::of(2.0) * S::PI() * t;
                            [-t, S::of(0.5) + amp * (S::of(3.0) * ang + ph).cos()]
                        },
                        n,
                        S::one() / speed,
                    )
                    .ok()?;
                    Some(SeedKind::Multicurve(vec![a, b], "perturbed-pair"))
                }
                _ => {
                    // random Fourier loop: 4 modes, amplitude 0.2; may self-cross
                    let c = [uniform(), uniform()];
                    let mut coeff = Vec::new();
                    for _ in 0..4 {
                        coeff.push((
                            (uniform() - S::of(0.5)) * S::of(0.4),
                            (uniform() - S::of(0.5)) * S::of(0.4),
                            uniform() * S::of(std::f64::consts::TAU),
                            uniform() * S::of(std::f64::consts::TAU),
                        ));
                    }
                    let lp = LoopPath::from_fn(
                        surface,
                        |t| {
                            let ang = S::of(2.0) * S::PI() * t;
                            let mut q = [
                                c[0] + S::of(0.18) * ang.cos(),
                                c[1] + S::of(0.18) * ang.sin(),
                            ];
                            for (m, &(ax, ay, px, py)) in coeff.iter().enumerate() {
                                let k = S::of((m + 1) as f64);
                                q[0] = q[0] + ax * (k * ang + px).sin() * S::of(0.5);
                                q[1] = q[1] + ay * (k * ang + py).cos() * S::of(0.5);
                            }
                            q
                        },
                        n,
                        S::one(),
                    )
                    .ok()?;
                    Some(SeedKind::RawLoop(lp, "fourier-loop"))
                }
            }
        }
        SurfaceKind::RoundSphere => {
            let speed = speed_for_energy(data, e, [S::zero(), S::zero()])?;
            match index % 5 {
                0 => {
                    let lp = latitude_circle(surface, S::zero(), false, speed, n).ok()?;
                    Some(SeedKind::Multicurve(vec![lp], "equator-negative"))
                }
                1 => {
                    let lp = latitude_circle(surface, S::zero(), true, speed, n).ok()?;
                    Some(SeedKind::Multicurve(vec![lp], "equator-positive"))
                }
                2 | 3 => {
                    let z = (uniform() - S::of(0.5)) * S::of(1.0);
                    let lp = latitude_circle(surface, z, index % 2 == 1, speed, n).ok()?;
                    Some(SeedKind::Multicurve(vec![lp], "latitude-random"))
                }
                _ => {
                    let phi0 = uniform() * S::of(std::f64::consts::TAU);
                    let z0 = (uniform() - S::of(0.5)) * S::of(0.8);
                    let r = S::of(0.3) + S::of(0.3) * uniform();
                    let lp = LoopPath::from_fn(
                        surface,
                        |t| {
                            let a = S::of(2.0) * S::PI() * t;
                            [phi0 + r * a.cos(), z0 + S::of(0.4) * r * a.sin()]
                        },
                        n,
                        S::one(),
                    )
                    .ok()?;
                    Some(SeedKind::Multicurve(vec![lp], "sphere-blob"))
                }
            }
        }
    }
}

/// Deterministic vertex jitter used when the surgery hits a triple point.
fn jitter_loop<S: Real>(lp: &LoopPath<S>, magnitude: S, salt: u64) -> LoopPath<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(salt);
    let samples = lp
        .samples
        .iter()
        .map(|s| {
            [
                s[0] + magnitude * S::of(rng.gen::<f64>() - 0.5),
                s[1] + magnitude * S::of(rng.gen::<f64>() - 0.5),
            ]
        })
        .collect();
    LoopPath {
        samples,
        period: lp.period,
        closure: lp.closure,
    }
}

/// Smallest chart segment length over all components.
fn min_segment_length<S: Real>(mc: &Multicurve<S>) -> S {
    mc.components
        .iter()
        .flat_map(|lp| {
            let n = lp.samples.len();
            (0..n).map(move |k| norm(sub(lp.sample_ext(k as isize + 1), lp.samples[k])))
        })
        .fold(S::infinity(), |a, b| a.min(b))
}

/// Re-enforce embeddedness: rearrange transverse double points, chamfer
/// tangencies, resample back to `n` samples. Jitters once on triple points.
fn enforce_embedded<S: Real>(
    data: &MagneticTonelliData<S>,
    mc: &Multicurve<S>,
    n: usize,
    chamfer_eps: S,
) -> Result<Multicurve<S>> {
    let surface = &data.surface;
    let snap = S::of(loops::SNAP_DEFAULT);
    let crossings = loops::self_intersections(surface, mc, snap)?;
    if crossings.is_empty() {
        let mut out = mc.clone();
        out.embedded = true;
        return Ok(out);
    }
    let surgery = |input: &Multicurve<S>| -> Result<Multicurve<S>> {
        let contacts = loops::self_intersections(surface, input, snap)?;
        let work = if contacts.iter().any(|c| c.kind == CrossingKind::Transverse) {
            rearrange_double_points(surface, input)?
        } else {
            input.clone()
        };
        // surgery can leave short split segments; the chamfer offset must fit
        let eps = chamfer_eps.min(min_segment_length(&work) * S::of(0.4));
        if eps < S::of(1e-7) {
            return Err(Error::EpsTooLarge {
                eps: eps.as_f64(),
                min_segment: min_segment_length(&work).as_f64(),
            });
        }
        chamfer(surface, &work, eps)
    };
    let out = match surgery(mc) {
        Ok(out) => out,
        Err(Error::TriplePoint(..)) | Err(Error::EpsTooLarge { .. }) => {
            // deterministic vertex jitter of 10 snap and one retry
            let jittered = Multicurve::new(
                surface,
                mc.components
                    .iter()
                    .enumerate()
                    .map(|(i, c)| jitter_loop(c, snap * S::of(10.0), 77 + i as u64))
                    .collect(),
            )?;
            surgery(&jittered)?
        }
        Err(e) => return Err(e),
    };
    let comps = out
        .components
        .iter()
        .map(|c| resample_uniform(c, n))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Multicurve::new(surface, comps)?;
    out.check_embedded(surface, snap)?;
    Ok(out)
}

struct Candidate<S> {
    piece: Multicurve<S>,
    action: S,
    converged: bool,
    kind: &'static str,
    components_surviving: usize,
}

/// Descend one seed through the full pipeline.
fn run_seed<S: Real>(
    data: &MagneticTonelliData<S>,
    e: S,
    seed_index: usize,
    opts: &SearchOpts<S>,
) -> Result<Option<Candidate<S>>> {
    let surface = &data.surface;
    let seed = match build_seed(data, e, seed_index, opts.n_samples, opts.rng_seed) {
        Some(s) => s,
        None => return Ok(None),
    };
    let chamfer_eps = S::of(1e-3);
    let (mut comps, kind) = match seed {
        SeedKind::Multicurve(c, kind) => (c, kind),
        SeedKind::RawLoop(lp, kind) => {
            // random loops can have near-stationary parametrizations; put
            // them on a uniform arclength grid before the surgery
            let lp = reparametrize_arclength(surface, &lp)?;
            let mc = Multicurve::single(surface, lp.clone())?;
            match enforce_embedded(data, &mc, opts.n_samples, chamfer_eps) {
                Ok(embedded) => (embedded.components, kind),
                // descend the tangled loop as-is; surgery is retried each phase
                Err(
                    Error::TriplePoint(..)
                    | Error::EpsTooLarge { .. }
                    | Error::DegenerateSegment { .. }
                    | Error::EmbeddedRequired(_),
                ) => (vec![lp], kind),
                Err(other) => return Err(other),
            }
        }
    };

    let mut converged = false;
    let mut iterations_left = opts.max_iters;
    while iterations_left > 0 {
        let chunk = opts.embed_every.min(iterations_left);
        let out = descend_multicurve(
            data,
            comps,
            e,
            &DescentOpts {
                max_iters: chunk,
                grad_tol: opts.grad_tol,
                ..Default::default()
            },
        )?;
        iterations_left -= chunk;
        // drop collapsed components; the remainder is still a boundary
        comps = out
            .components
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !out.collapsed.contains(i))
            .map(|(_, c)| c)
            .collect();
        // descent drifts samples tangentially; re-grid a component when its
        // spacing degenerates, and drop components shrunk below the floor
        let mut regridded = Vec::with_capacity(comps.len());
        for c in comps {
            let n = c.samples.len();
            let mut min_seg = S::infinity();
            let mut max_seg = S::zero();
            for k in 0..n {
                let len = norm(sub(c.sample_ext(k as isize + 1), c.samples[k]));
                min_seg = min_seg.min(len);
                max_seg = max_seg.max(len);
            }
            if max_seg * S::of(n as f64) < S::of(1e-3) {
                continue; // point-like remnant
            }
            if min_seg < S::of(1e-4) || max_seg > S::of(4.0) * min_seg {
                regridded.push(reparametrize_arclength(surface, &c)?);
            } else {
                regridded.push(c);
            }
        }
        comps = regridded;
        if comps.is_empty() {
            return Ok(None);
        }
        let mc = Multicurve::new(surface, comps.clone())?;
        // surgery on a badly tangled intermediate state can fail at this
        // scale; skip the phase and let the descent untangle it first
        match enforce_embedded(data, &mc, opts.n_samples, chamfer_eps) {
            Ok(embedded) => {
                comps = embedded.components;
                if out.converged && embedded.embedded {
                    converged = true;
                    break;
                }
            }
            Err(
                Error::TriplePoint(..)
                | Error::EpsTooLarge { .. }
                | Error::DegenerateSegment { .. }
                | Error::EmbeddedRequired(_),
            ) => {}
            Err(other) => return Err(other),
        }
    }

    let mc = Multicurve::new(surface, comps)?;
    // null-homology is preserved by descent and surgery; discard the seed
    // if it drifted off a boundary class anyway
    if mc.homology.iter().any(|&w| w != 0) {
        return Ok(None);
    }
    let (chain, _k_used) = solve_with_refinement(surface, &mc, opts.grid_k)?;
    let cert = match chain {
        BoundingChain::Bounds(c) => c,
        BoundingChain::NotNullHomologous => return Ok(None),
    };
    // keep the decomposition piece of smallest action
    let mut best: Option<(Multicurve<S>, S)> = None;
    for piece in &cert.decomposition {
        let sub = Multicurve::new(
            surface,
            piece
                .component_indices
                .iter()
                .map(|&i| mc.components[i].clone())
                .collect(),
        )?;
        let action = multicurve_action(data, &sub, e)?;
        if best.as_ref().map_or(true, |(_, a)| action < *a) {
            best = Some((sub, action));
        }
    }
    let (piece, action) = match best {
        Some(b) => b,
        None => return Ok(None),
    };
    let surviving = piece.components.len();
    Ok(Some(Candidate {
        piece,
        action,
        converged,
        kind,
        components_surviving: surviving,
    }))
}

/// Multi-start search for a minimal boundary with energy `e`.
///
/// Requires `e0 < e`; when a critical-value hint is supplied, also
/// `e <= c0 + 0.05`, and a subcritical search that finds no negative-action
/// boundary fails loudly instead of returning a spurious optimum.
pub fn minimal_boundary_search<S: Real>(
    data: &MagneticTonelliData<S>,
    e: S,
    opts: &SearchOpts<S>,
) -> Result<SearchReport<S>> {
    let e0 = critical::compute_e0(data);
    if e <= e0 {
        return Err(Error::EnergyRange {
            e: e.as_f64(),
            lo: Some(e0.as_f64()),
            hi: opts.c0_hint.map(|c| c.as_f64()),
        });
    }
    if let Some(c0) = opts.c0_hint {
        if e > c0 + S::of(0.05) {
            return Err(Error::EnergyRange {
                e: e.as_f64(),
                lo: Some(e0.as_f64()),
                hi: Some(c0.as_f64()),
            });
        }
    }

    let outcomes: Vec<(usize, Result<Option<Candidate<S>>>)> = (0..opts.seeds)
        .into_par_iter()
        .map(|i| (i, run_seed(data, e, i, opts)))
        .collect();

    let mut summaries = Vec::with_capacity(opts.seeds);
    let mut best: Option<(usize, Candidate<S>)> = None;
    for (i, outcome) in outcomes {
        match outcome {
            Ok(Some(cand)) => {
                summaries.push(SeedSummary {
                    seed_index: i,
                    kind: cand.kind.to_string(),
                    action: Some(cand.action),
                    converged: cand.converged,
                    components_surviving: cand.components_surviving,
                });
                let better = match &best {
                    None => true,
                    Some((bi, b)) => {
                        cand.action < b.action || (cand.action == b.action && i < *bi)
                    }
                };
                if better {
                    best = Some((i, cand));
                }
            }
            Ok(None) => summaries.push(SeedSummary {
                seed_index: i,
                kind: "degenerate".to_string(),
                action: None,
                converged: false,
                components_surviving: 0,
            }),
            Err(err) => summaries.push(SeedSummary {
                seed_index: i,
                kind: format!("error: {err}"),
                action: None,
                converged: false,
                components_surviving: 0,
            }),
        }
    }

    let (_, winner) = best.ok_or_else(|| Error::NoNegativeCandidate {
        e: e.as_f64(),
        least_action: f64::INFINITY,
    })?;
    if let Some(c0) = opts.c0_hint {
        if e < c0 - S::of(1e-6) && winner.action >= S::zero() {
            return Err(Error::NoNegativeCandidate {
                e: e.as_f64(),
                least_action: winner.action.as_f64(),
            });
        }
    }

    build_report(data, e, winner.piece, opts, summaries)
}

fn build_report<S: Real>(
    data: &MagneticTonelliData<S>,
    e: S,
    piece: Multicurve<S>,
    opts: &SearchOpts<S>,
    seed_summaries: Vec<SeedSummary<S>>,
) -> Result<SearchReport<S>> {
    let surface = &data.surface;
    let action = multicurve_action(data, &piece, e)?;
    let (chain, grid_k_used) = solve_with_refinement(surface, &piece, opts.grid_k)?;
    let certificate = match chain {
        BoundingChain::Bounds(c) => c,
        BoundingChain::NotNullHomologous => {
            return Err(Error::NotABoundary("winning piece lost its certificate".into()))
        }
    };
    let mut residuals = Vec::with_capacity(piece.components.len());
    for c in &piece.components {
        let relaxed = reparametrize_arclength(surface, c)?;
        residuals.push(action_gradient(data, &relaxed, e)?.energy_residual);
    }
    let m = piece.components.len();
    let mut disjointness = vec![vec![S::zero(); m]; m];
    for i in 0..m {
        for j in 0..m {
            if i != j {
                disjointness[i][j] =
                    min_support_distance(surface, &piece.components[i], &piece.components[j]);
            }
        }
    }
    let mut flags = Vec::new();
    if action < -S::of(1e-9) {
        flags.push("negative_action".to_string());
    } else if action.abs() <= S::of(1e-3) {
        flags.push("zero_action_within_tolerance".to_string());
    }
    if certificate.verified {
        flags.push("certificate_verified".to_string());
    }
    Ok(SearchReport {
        energy: e,
        action,
        multicurve: piece,
        component_energy_residuals: residuals,
        certificate,
        grid_k_used,
        seeds_used: opts.seeds,
        disjointness,
        flags,
        seed_summaries,
    })
}

/// Verdict for one component pair of the graph-theorem check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum PairVerdict {
    Identical,
    Disjoint,
    Violation,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairCheck<S> {
    pub report_a: usize,
    pub component_a: usize,
    pub report_b: usize,
    pub component_b: usize,
    pub verdict: PairVerdict,
    pub hausdorff: S,
    pub min_distance: S,
    pub aligned_distance: S,
    /// Nearest-approach witness for violations.
    pub witness: Option<V2<S>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphCheck<S> {
    pub pairs: Vec<PairCheck<S>>,
    pub violations: usize,
}

/// Check the graph-theorem consistency of a family of search reports at a
/// common energy: every pair of components must be identical (up to a time
/// shift) or have disjoint supports at the 1e-3 threshold.
pub fn graph_theorem_check<S: Real>(
    data: &MagneticTonelliData<S>,
    reports: &[SearchReport<S>],
) -> Result<GraphCheck<S>> {
    let surface = &data.surface;
    if reports.len() >= 2 {
        for r in &reports[1..] {
            if (r.energy - reports[0].energy).abs() > S::of(1e-12) {
                return Err(Error::MixedEnergy(
                    reports[0].energy.as_f64(),
                    r.energy.as_f64(),
                ));
            }
        }
    }
    let threshold = S::of(1e-3);
    let mut pairs = Vec::new();
    let mut violations = 0usize;
    for ra in 0..reports.len() {
        for rb in ra..reports.len() {
            let comps_a = &reports[ra].multicurve.components;
            let comps_b = &reports[rb].multicurve.components;
            for ca in 0..comps_a.len() {
                let cb_start = if ra == rb { ca } else { 0 };
                for cb in cb_start..comps_b.len() {
                    if ra == rb && ca == cb {
                        continue;
                    }
                    let a = &comps_a[ca];
                    let b = &comps_b[cb];
                    let hd = hausdorff_distance(surface, a, b);
                    let md = min_support_distance(surface, a, b);
                    let (verdict, aligned, witness) = if hd < threshold {
                        let al = aligned_pointwise_distance(surface, a, b);
                        if al < threshold {
                            (PairVerdict::Identical, al, None)
                        } else {
                            (PairVerdict::Violation, al, Some(surface.reduce(a.samples[0])))
                        }
                    } else if md > threshold {
                        (PairVerdict::Disjoint, S::infinity(), None)
                    } else {
                        // nearest-approach witness
                        let mut best = (S::infinity(), a.samples[0]);
                        for p in &a.samples {
                            for q in &b.samples {
                                let d = surface.chart_distance(*p, *q);
                                if d < best.0 {
                                    best = (d, *p);
                                }
                            }
                        }
                        (PairVerdict::Violation, S::infinity(), Some(surface.reduce(best.1)))
                    };
                    if verdict == PairVerdict::Violation {
                        violations += 1;
                    }
                    pairs.push(PairCheck {
                        report_a: ra,
                        component_a: ca,
                        report_b: rb,
                        component_b: cb,
                        verdict,
                        hausdorff: hd,
                        min_distance: md,
                        aligned_distance: aligned,
                        witness,
                    });
                }
            }
        }
    }
    Ok(GraphCheck { pairs, violations })
}

/// Local-minimality probe: random smooth perturbations must not decrease
/// the action. Returns false when a descent direction is detected.
pub fn local_minimality_probe<S: Real>(
    data: &MagneticTonelliData<S>,
    lp: &LoopPath<S>,
    e: S,
    trials: usize,
    rng_seed: u64,
) -> Result<bool> {
    let base = action_free_period(data, lp, e)?;
    let n = lp.samples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let amplitude = 5e-3;
    for trial in 0..trials {
        // one direction per trial: Fourier modes 0..4 at fixed period (mode
        // 0 is a constant shift, without which rotationally symmetric
        // descent directions stay invisible), then the period direction
        let probe_period = trial % 6 == 5;
        let m = (trial % 6) as f64;
        let ax = amplitude * (rng.gen::<f64>() - 0.5);
        let ay = amplitude * (rng.gen::<f64>() - 0.5);
        let ph = rng.gen::<f64>() * std::f64::consts::TAU;
        let dp = if probe_period {
            1.0 + 0.01 * (rng.gen::<f64>() - 0.5)
        } else {
            1.0
        };
        let samples: Vec<V2<S>> = lp
            .samples
            .iter()
            .enumerate()
            .map(|(k, s)| {
                if probe_period {
                    return *s;
                }
                let t = k as f64 / n as f64;
                let ang = 2.0 * std::f64::consts::PI * m * t + ph;
                [
                    s[0] + S::of(ax * ang.sin()),
                    s[1] + S::of(ay * ang.cos()),
                ]
            })
            .collect();
        let perturbed = LoopPath {
            samples,
            period: lp.period * S::of(dp),
            closure: lp.closure,
        };
        match action_free_period(data, &perturbed, e) {
            Ok(v) if v < base - S::of(1e-9) => return Ok(false),
            Ok(_) => {}
            Err(_) => {} // inadmissible perturbation: ignore
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationStep<S> {
    pub energy: S,
    pub per_component_action: Vec<S>,
    pub total_action: S,
    pub max_center_distance: S,
    pub success: bool,
    pub decomposes: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationReport<S> {
    pub steps: Vec<ContinuationStep<S>>,
    /// Largest grid energy up to which every component stayed an interior
    /// local minimizer of its tube.
    pub cw_estimate: Option<S>,
}

/// Continue the critical minimal boundary to energies above the critical
/// value: re-minimize each component inside a tube of chart radius 0.1
/// around it; success requires the minimizer to stay within 0.08 of the
/// tube center.
pub fn waist_continuation_above_c0<S: Real>(
    data: &MagneticTonelliData<S>,
    report_at_c0: &SearchReport<S>,
    e_grid: &[S],
    opts: &SearchOpts<S>,
) -> Result<ContinuationReport<S>> {
    let surface = &data.surface;
    // input validation: verified certificate, near-zero action, and each
    // component passes the local-minimality probe at its own energy
    if !report_at_c0.certificate.verified {
        return Err(Error::NotAMinimalBoundary("certificate not verified".into()));
    }
    if report_at_c0.action.abs() > S::of(1e-2) {
        return Err(Error::NotAMinimalBoundary(format!(
            "action {} is not critical (expected ~0)",
            report_at_c0.action
        )));
    }
    let e_c0 = report_at_c0.energy;
    for (ci, c) in report_at_c0.multicurve.components.iter().enumerate() {
        if !local_minimality_probe(data, c, e_c0, 20, 1000 + ci as u64)? {
            return Err(Error::NotAMinimalBoundary(format!(
                "component {ci} fails the local-minimality probe"
            )));
        }
    }

    let tube_radius = S::of(0.1);
    let success_radius = S::of(0.08);
    let mut steps = Vec::new();
    let mut cw_estimate = None;
    let mut prefix_ok = true;
    for &e in e_grid {
        if e <= e_c0 {
            return Err(Error::EnergyRange {
                e: e.as_f64(),
                lo: Some(e_c0.as_f64()),
                hi: None,
            });
        }
        let mut per_component_action = Vec::new();
        let mut max_center_distance = S::zero();
        let mut all_ok = true;
        let mut minimized = Vec::new();
        for center in &report_at_c0.multicurve.components {
            // re-speed the seed to the new energy
            let mean_v = {
                let n = center.samples.len();
                let mut acc = S::zero();
                for s in &center.samples {
                    acc = acc + data.potential.value(surface.reduce(*s));
                }
                acc / S::of(n as f64)
            };
            let kinetic = e - mean_v;
            if kinetic <= S::zero() {
                all_ok = false;
                break;
            }
            let speed = (S::of(2.0) * kinetic).sqrt();
            let len = center.metric_length(surface)?;
            let seed = LoopPath {
                samples: center.samples.clone(),
                period: len / speed,
                closure: center.closure,
            };
            // descend in chunks, abandoning the tube on escape
            let mut cur = seed;
            let mut escaped = false;
            let mut converged = false;
            let mut budget = opts.max_iters;
            while budget > 0 {
                let chunk = 200.min(budget);
                let out = descend_multicurve(
                    data,
                    vec![cur],
                    e,
                    &DescentOpts {
                        max_iters: chunk,
                        grad_tol: opts.grad_tol,
                        ..Default::default()
                    },
                )?;
                budget -= chunk;
                cur = out.components.into_iter().next().unwrap();
                let dist = hausdorff_distance(surface, &cur, center);
                if dist > tube_radius {
                    escaped = true;
                    break;
                }
                if out.hit_period_floor {
                    escaped = true;
                    break;
                }
                if out.converged {
                    converged = true;
                    break;
                }
            }
            let dist = hausdorff_distance(surface, &cur, center);
            max_center_distance = max_center_distance.max(dist);
            if escaped || !converged || dist >= success_radius {
                all_ok = false;
            }
            per_component_action.push(action_free_period(data, &cur, e)?);
            minimized.push(cur);
        }
        let total_action = per_component_action
            .iter()
            .fold(S::zero(), |a, &b| a + b);
        // the continued boundary must still decompose into topological boundaries
        let decomposes = if minimized.len() == report_at_c0.multicurve.components.len() {
            let mc = Multicurve::new(surface, minimized)?;
            matches!(
                solve_with_refinement(surface, &mc, opts.grid_k),
                Ok((BoundingChain::Bounds(_), _))
            )
        } else {
            false
        };
        let success = all_ok && decomposes;
        if success && prefix_ok {
            cw_estimate = Some(e);
        } else {
            prefix_ok = false;
        }
        steps.push(ContinuationStep {
            energy: e,
            per_component_action,
            total_action,
            max_center_distance,
            success,
            decomposes,
        });
    }
    Ok(ContinuationReport { steps, cw_estimate })
}

/// Minimax values over paths from a waist to its iterates, by string
/// relaxation with max-node descent.
#[derive(Debug, Clone, Serialize)]
pub struct MinimaxReport<S> {
    /// `s_m` for m = 1..=m_max.
    pub s_values: Vec<S>,
    /// Candidate critical loop at each level (the max node of the best path).
    pub critical_loops: Vec<LoopPath<S>>,
}

/// Unit-sphere embedding used for path interpolation: loops on the chart
/// cannot change their winding around the poles, so the string lives in
/// ambient space and is projected back.
fn chart_to_r3<S: Real>(q: V2<S>) -> [S; 3] {
    let rho = (S::one() - q[1] * q[1]).max(S::zero()).sqrt();
    [rho * q[0].cos(), rho * q[0].sin(), q[1]]
}

fn r3_loop_to_chart<S: Real>(
    surface: &crate::surface::SurfaceModel<S>,
    xyz: &[[S; 3]],
    period: S,
) -> Result<LoopPath<S>> {
    let zmax = S::one() - surface.pole_snap - S::of(1e-9);
    let mut samples = Vec::with_capacity(xyz.len());
    let mut prev_phi = S::zero();
    for (k, p) in xyz.iter().enumerate() {
        let norm3 = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt().max(S::of(1e-12));
        let x = [p[0] / norm3, p[1] / norm3, p[2] / norm3];
        let z = x[2].max(-zmax).min(zmax);
        let raw_phi = S::of(x[1].as_f64().atan2(x[0].as_f64()));
        let phi = if k == 0 {
            raw_phi
        } else {
            // unwrap continuously
            let tau = S::of(2.0) * S::PI();
            let mut d = raw_phi - prev_phi;
            d = d - (d / tau).round() * tau;
            prev_phi + d
        };
        prev_phi = phi;
        samples.push([phi, z]);
    }
    LoopPath::new(surface, samples, period)
}

fn loop_to_r3<S: Real>(lp: &LoopPath<S>) -> Vec<[S; 3]> {
    lp.samples.iter().map(|&q| chart_to_r3(q)).collect()
}

/// `s_m := inf over paths P from the waist to its m-th iterate of
/// max_s S_e(P(s))`, relaxed over a 21-node string by iterated max-node
/// descent with re-interpolation. Requires a supercritical energy with a
/// verified waist (the functional is positive there).
pub fn minimax_orbits<S: Real>(
    data: &MagneticTonelliData<S>,
    e: S,
    waist: &LoopPath<S>,
    m_max: usize,
    opts: &SearchOpts<S>,
) -> Result<MinimaxReport<S>> {
    let surface = &data.surface;
    if surface.kind != SurfaceKind::RoundSphere {
        return Err(Error::Invalid(
            "minimax paths between iterates require the sphere model".into(),
        ));
    }
    if !local_minimality_probe(data, waist, e, 20, 4242)? {
        return Err(Error::NotAWaist(
            "20-perturbation probe found a descent direction".into(),
        ));
    }
    let path_nodes = 21usize;
    let sweeps = 500usize;
    let n = opts.n_samples.min(128);
    let base = resample_uniform(waist, n)?;
    let s1 = action_free_period(data, &base, e)?;
    let mut s_values = vec![s1];
    let mut critical_loops = vec![base.clone()];

    for m in 2..=m_max {
        let target = resample_uniform(&base.iterate(m), n)?;
        let a3 = loop_to_r3(&base);
        let b3 = loop_to_r3(&target);
        // initial string: ambient interpolation with a symmetry-breaking lift
        let mut nodes: Vec<(Vec<[S; 3]>, S)> = Vec::with_capacity(path_nodes);
        for w in 0..path_nodes {
            let t = S::of(w as f64 / (path_nodes - 1) as f64);
            let lift = S::of(0.8) * t * (S::one() - t);
            let xyz: Vec<[S; 3]> = (0..n)
                .map(|k| {
                    let ang = S::of(2.0) * S::PI() * S::of(k as f64 / n as f64) + S::of(0.7);
                    [
                        (S::one() - t) * a3[k][0] + t * b3[k][0],
                        (S::one() - t) * a3[k][1] + t * b3[k][1],
                        (S::one() - t) * a3[k][2] + t * b3[k][2] + lift * ang.cos(),
                    ]
                })
                .collect();
            let period = (S::one() - t) * base.period + t * target.period;
            nodes.push((xyz, period));
        }

        let node_action = |node: &(Vec<[S; 3]>, S)| -> S {
            match r3_loop_to_chart(surface, &node.0, node.1) {
                Ok(lp) => action_free_period(data, &lp, e).unwrap_or(S::infinity()),
                Err(_) => S::infinity(),
            }
        };

        let mut best_max = S::infinity();
        let mut best_loop = resample_uniform(&base, n)?;
        for _sweep in 0..sweeps {
            // locate the interior max node
            let mut values: Vec<S> = nodes.iter().map(node_action).collect();
            let mut jmax = 1usize;
            for j in 1..path_nodes - 1 {
                if values[j] > values[jmax] {
                    jmax = j;
                }
            }
            let path_max = values
                .iter()
                .fold(S::neg_infinity(), |a, &b| a.max(b));
            if path_max < best_max {
                best_max = path_max;
                let arg = values
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                    .map(|(i, _)| i)
                    .unwrap_or(jmax);
                if let Ok(lp) = r3_loop_to_chart(surface, &nodes[arg].0, nodes[arg].1) {
                    best_loop = lp;
                }
            }
            // descend the max node a few steps
            if let Ok(lp) = r3_loop_to_chart(surface, &nodes[jmax].0, nodes[jmax].1) {
                if let Ok(out) = descend_multicurve(
                    data,
                    vec![lp],
                    e,
                    &DescentOpts {
                        max_iters: 5,
                        grad_tol: S::of(1e-12),
                        ..Default::default()
                    },
                ) {
                    if !out.hit_period_floor {
                        let relaxed = out.components.into_iter().next().unwrap();
                        nodes[jmax] = (loop_to_r3(&relaxed), relaxed.period);
                        values[jmax] = out.value;
                    }
                }
            }
            // re-interpolate the string to uniform spacing
            let mut cumulative = vec![S::zero()];
            for w in 1..path_nodes {
                let mut d = S::zero();
                for k in 0..n {
                    let a = nodes[w - 1].0[k];
                    let b = nodes[w].0[k];
                    d = d + (b[0] - a[0]) * (b[0] - a[0])
                        + (b[1] - a[1]) * (b[1] - a[1])
                        + (b[2] - a[2]) * (b[2] - a[2]);
                }
                let d = (d / S::of(n as f64)).sqrt() + (nodes[w].1 - nodes[w - 1].1).abs();
                let prev = *cumulative.last().unwrap();
                cumulative.push(prev + d);
            }
            let total = *cumulative.last().unwrap();
            if total > S::zero() {
                let mut renodes = Vec::with_capacity(path_nodes);
                renodes.push(nodes[0].clone());
                for w in 1..path_nodes - 1 {
                    let tgt = total * S::of(w as f64 / (path_nodes - 1) as f64);
                    let mut seg = 0usize;
                    while seg + 1 < path_nodes - 1 && cumulative[seg + 1] < tgt {
                        seg += 1;
                    }
                    let span = cumulative[seg + 1] - cumulative[seg];
                    let t = if span > S::zero() {
                        (tgt - cumulative[seg]) / span
                    } else {
                        S::zero()
                    };
                    let xyz: Vec<[S; 3]> = (0..n)
                        .map(|k| {
                            let a = nodes[seg].0[k];
                            let b = nodes[seg + 1].0[k];
                            [
                                a[0] + (b[0] - a[0]) * t,
                                a[1] + (b[1] - a[1]) * t,
                                a[2] + (b[2] - a[2]) * t,
                            ]
                        })
                        .collect();
                    let period = nodes[seg].1 + (nodes[seg + 1].1 - nodes[seg].1) * t;
                    renodes.push((xyz, period));
                }
                renodes.push(nodes[path_nodes - 1].clone());
                nodes = renodes;
            }
        }
        s_values.push(best_max);
        critical_loops.push(best_loop);
    }
    Ok(MinimaxReport {
        s_values,
        critical_loops,
    })
}

/// Rotation vector and average action of the invariant measure carried by
/// a collection of closed orbits.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitMeasureStats<S> {
    /// `(sum of homology classes) / (total period)`, a real homology vector.
    pub rotation_vector: Vec<S>,
    /// `(sum of integral of L) / (total period)`.
    pub measure_action: S,
}

/// Statistics of the orbit measure of a multicurve of closed orbits.
pub fn orbit_measure_stats<S: Real>(
    data: &MagneticTonelliData<S>,
    mc: &Multicurve<S>,
) -> Result<OrbitMeasureStats<S>> {
    let surface = &data.surface;
    let mut total_period = S::zero();
    let mut total_lagrangian = S::zero();
    let rank = surface.homology_rank();
    let mut class_sum = vec![0i64; rank];
    for (ci, c) in mc.components.iter().enumerate() {
        let relaxed = reparametrize_arclength(surface, c)?;
        let ev = action_gradient(data, &relaxed, S::zero())?;
        // energy residual against the component's own mean energy
        let vels = relaxed.velocities();
        let mut mean_e = S::zero();
        for (q, v) in relaxed.samples.iter().zip(vels.iter()) {
            mean_e = mean_e + energy_eval(data, *q, *v)?;
        }
        mean_e = mean_e / S::of(relaxed.samples.len() as f64);
        let mut residual = S::zero();
        for (q, v) in relaxed.samples.iter().zip(vels.iter()) {
            residual = residual.max((energy_eval(data, *q, *v)? - mean_e).abs());
        }
        if residual >= S::of(1e-4) {
            return Err(Error::NotAnOrbit {
                component: ci,
                residual: residual.as_f64(),
            });
        }
        total_period = total_period + c.period;
        total_lagrangian = total_lagrangian + ev.value; // S_0 = integral of L
        let class = homology_class(surface, c)?;
        for (acc, v) in class_sum.iter_mut().zip(class) {
            *acc += v;
        }
    }
    let rotation_vector = class_sum
        .iter()
        .map(|&w| S::of(w as f64) / total_period)
        .collect();
    Ok(OrbitMeasureStats {
        rotation_vector,
        measure_action: total_lagrangian / total_period,
    })
}

/// Verdict of the zero-action criterion for non-closed one-forms.
#[derive(Debug, Clone, Serialize)]
pub struct ZeroActionReport<S> {
    pub satisfied: bool,
    /// Sup norm of the one-form; equals `sqrt(2 c)` when satisfied.
    pub r0: S,
    pub n_set_description: String,
    /// Boundary assembled from closed orbits of the dual field inside the
    /// maximizing set, when found.
    pub boundary: Option<Multicurve<S>>,
    /// Free-period action of each orbit at `e = r0^2 / 2` (should vanish).
    pub orbit_actions: Vec<S>,
}

/// Zero-action criterion: let `Z` be the vector field with `g(Z, .) = -theta`
/// and `N` the set where `|theta|` attains its sup. If closed orbits of `Z`
/// inside `N` assemble into a topological boundary, that boundary has zero
/// action at `e = |theta|_inf^2 / 2`, which pins `r0 = |theta|_inf`.
pub fn zero_action_criterion<S: Real>(data: &MagneticTonelliData<S>) -> Result<ZeroActionReport<S>> {
    let surface = &data.surface;
    // the criterion needs d theta != 0
    let (_, f_max) = grid_maximize(surface, &|q| {
        two_form_density(surface, data.theta.as_ref(), q)
            .map(|f| f.abs())
            .unwrap_or(S::zero())
    });
    if f_max < S::of(1e-8) {
        return Err(Error::ClosedForm(f_max.as_f64()));
    }
    let sup = data.theta_sup_norm();
    // grid capture uses a collar (the sup is attained between grid nodes of
    // a quadratic maximum); representatives are refined to 1e-6 membership
    let capture = S::of(3e-4);
    let member_tol = S::of(1e-6);

    // collect grid points of the maximizing set N and cluster them
    let (lo, hi) = chart_bounds(surface);
    let n_grid = 256usize;
    let mut mask = vec![false; n_grid * n_grid];
    for j in 0..n_grid {
        for i in 0..n_grid {
            let q = [
                lo[0] + (hi[0] - lo[0]) * S::of(i as f64 / n_grid as f64),
                lo[1] + (hi[1] - lo[1]) * S::of((j as f64 + 0.5) / n_grid as f64),
            ];
            if let Ok(v) = oneform_norm(surface, data.theta.as_ref(), q) {
                if v >= sup - capture {
                    mask[j * n_grid + i] = true;
                }
            }
        }
    }
    // connected components of the mask (4-adjacency, periodic in x; y wraps
    // on the torus)
    let wrap_y = surface.kind == SurfaceKind::FlatTorus;
    let mut comp_of = vec![usize::MAX; n_grid * n_grid];
    let mut rep_points: Vec<V2<S>> = Vec::new();
    let mut comp_sizes: Vec<usize> = Vec::new();
    for start in 0..n_grid * n_grid {
        if !mask[start] || comp_of[start] != usize::MAX {
            continue;
        }
        let id = rep_points.len();
        let mut queue = std::collections::VecDeque::new();
        comp_of[start] = id;
        queue.push_back(start);
        let mut size = 0usize;
        let mut best = (S::neg_infinity(), [S::zero(); 2]);
        while let Some(cell) = queue.pop_front() {
            size += 1;
            let (i, j) = (cell % n_grid, cell / n_grid);
            let q = [
                lo[0] + (hi[0] - lo[0]) * S::of(i as f64 / n_grid as f64),
                lo[1] + (hi[1] - lo[1]) * S::of((j as f64 + 0.5) / n_grid as f64),
            ];
            if let Ok(v) = oneform_norm(surface, data.theta.as_ref(), q) {
                if v > best.0 {
                    best = (v, q);
                }
            }
            let mut neighbors = vec![
                ((i + 1) % n_grid, j),
                ((i + n_grid - 1) % n_grid, j),
            ];
            if wrap_y {
                neighbors.push((i, (j + 1) % n_grid));
                neighbors.push((i, (j + n_grid - 1) % n_grid));
            } else {
                if j + 1 < n_grid {
                    neighbors.push((i, j + 1));
                }
                if j > 0 {
                    neighbors.push((i, j - 1));
                }
            }
            for (ni, nj) in neighbors {
                let idx = nj * n_grid + ni;
                if mask[idx] && comp_of[idx] == usize::MAX {
                    comp_of[idx] = id;
                    queue.push_back(idx);
                }
            }
        }
        // zoom refinement of the representative onto the true maximizing set
        let cell = [
            (hi[0] - lo[0]) / S::of(n_grid as f64),
            (hi[1] - lo[1]) / S::of(n_grid as f64),
        ];
        let mut rep = best.1;
        let mut rep_val = best.0;
        let mut half = cell;
        for _ in 0..30 {
            for dj in -3i32..=3 {
                for di in -3i32..=3 {
                    let q = [
                        rep[0] + half[0] * S::of(di as f64 / 3.0),
                        rep[1] + half[1] * S::of(dj as f64 / 3.0),
                    ];
                    if let Ok(v) = oneform_norm(surface, data.theta.as_ref(), q) {
                        if v > rep_val {
                            rep_val = v;
                            rep = q;
                        }
                    }
                }
            }
            half = [half[0] * S::of(0.5), half[1] * S::of(0.5)];
        }
        if rep_val >= sup - member_tol {
            rep_points.push(rep);
            comp_sizes.push(size);
        }
    }

    // integrate the dual field Z = -g^{-1} theta from each representative
    let z_field = |q: V2<S>| -> Result<V2<S>> {
        let gi = surface.metric_inverse(q)?;
        let th = data.theta.eval(surface.reduce(q));
        Ok([-(gi[0][0] * th[0] + gi[0][1] * th[1]), -(gi[1][0] * th[0] + gi[1][1] * th[1])])
    };
    let mut orbits: Vec<LoopPath<S>> = Vec::new();
    for &q0 in &rep_points {
        let z0 = z_field(q0)?;
        let speed = norm(z0);
        if speed < S::of(1e-9) {
            continue;
        }
        // RK4 flow of Z; closure by crossing the section through q0
        // perpendicular to Z(q0), once the orbit has left a small ball
        let h = S::of(5e-3) / speed;
        let mut q = q0;
        let mut points = vec![q0];
        let mut closed_at: Option<S> = None;
        let max_steps = 80_000usize;
        let ball = speed * h * S::of(5.0);
        let section_proj = |p: V2<S>| -> S {
            let d = surface.displacement(q0, p);
            d[0] * z0[0] + d[1] * z0[1]
        };
        let mut left_ball = false;
        let mut prev_proj = S::zero();
        for step in 1..=max_steps {
            let k1 = z_field(q)?;
            let k2 = z_field(add(q, scale(k1, h * S::of(0.5))))?;
            let k3 = z_field(add(q, scale(k2, h * S::of(0.5))))?;
            let k4 = z_field(add(q, scale(k3, h)))?;
            let incr = add(add(k1, scale(k2, S::of(2.0))), add(scale(k3, S::of(2.0)), k4));
            let q_next = add(q, scale(incr, h / S::of(6.0)));
            let back = surface.chart_distance(q_next, q0);
            if !left_ball && back > ball {
                left_ball = true;
                prev_proj = section_proj(q_next);
            } else if left_ball && back < ball {
                let proj = section_proj(q_next);
                if prev_proj < S::zero() && proj >= S::zero() {
                    // fractional step to the section crossing
                    let frac = prev_proj / (prev_proj - proj);
                    closed_at = Some(S::of((step - 1) as f64) * h + frac * h);
                    break;
                }
                prev_proj = proj;
            } else if left_ball {
                prev_proj = section_proj(q_next);
            }
            q = q_next;
            points.push(q);
            let _ = step;
        }
        let period = match closed_at {
            Some(p) if p.as_f64() > 1e-2 => p,
            _ => continue,
        };
        // orbit must stay inside N
        let mut inside = true;
        for p in points.iter().step_by(8) {
            let v = oneform_norm(surface, data.theta.as_ref(), *p)?;
            if v < sup - S::of(1e-4) {
                inside = false;
                break;
            }
        }
        if !inside {
            continue;
        }
        // the stored points are uniform in time except the final partial
        // step, which was dropped; arclength reparametrization restores a
        // clean constant-speed sampling
        let lp = LoopPath::new(surface, points, period)?;
        let lp = reparametrize_arclength(surface, &resample_uniform(&lp, 256)?)?;
        orbits.push(lp);
    }

    let n_desc = format!(
        "{} component(s) of the maximizing set, grid sizes {:?}; {} closed orbit(s)",
        rep_points.len(),
        comp_sizes,
        orbits.len()
    );
    if orbits.is_empty() {
        return Ok(ZeroActionReport {
            satisfied: false,
            r0: sup,
            n_set_description: n_desc,
            boundary: None,
            orbit_actions: Vec::new(),
        });
    }

    let e = S::of(0.5) * sup * sup;
    let mut orbit_actions = Vec::new();
    for o in &orbits {
        orbit_actions.push(action_free_period(data, o, e)?);
    }

    // try the union first, then null-homologous subsets
    let try_boundary = |subset: &[usize]| -> Option<Multicurve<S>> {
        let comps: Vec<LoopPath<S>> = subset.iter().map(|&i| orbits[i].clone()).collect();
        let mc = Multicurve::new(surface, comps).ok()?;
        if mc.homology.iter().any(|&w| w != 0) {
            return None;
        }
        match solve_with_refinement(surface, &mc, DEFAULT_GRID_K) {
            Ok((BoundingChain::Bounds(_), _)) => Some(mc),
            _ => None,
        }
    };
    let all: Vec<usize> = (0..orbits.len()).collect();
    let mut boundary = try_boundary(&all);
    if boundary.is_none() && orbits.len() <= 8 {
        'subsets: for mask_bits in 1..(1usize << orbits.len()) {
            let subset: Vec<usize> = all
                .iter()
                .copied()
                .filter(|i| mask_bits & (1 << i) != 0)
                .collect();
            if subset.len() == orbits.len() {
                continue;
            }
            if let Some(mc) = try_boundary(&subset) {
                boundary = Some(mc);
                break 'subsets;
            }
        }
    }

    let zero_action = orbit_actions.iter().all(|a| a.abs() < S::of(1e-5));
    Ok(ZeroActionReport {
        satisfied: boundary.is_some() && zero_action,
        r0: sup,
        n_set_description: n_desc,
        boundary,
        orbit_actions,
    })
}

/// One closed geodesic of the census.
#[derive(Debug, Clone, Serialize)]
pub struct CensusGeodesic<S> {
    pub loop_path: LoopPath<S>,
    /// Action-normalized length: `S_{r^2/2}` of the energy-shell
    /// parametrization, equal to `r` times the Randers length.
    pub f_length: S,
    /// Plain Randers polyline length of the support.
    pub randers_length: S,
    /// Minimax level that located it (0 for the waist itself).
    pub s_value: S,
}

#[derive(Debug, Clone, Serialize)]
pub struct CensusReport<S> {
    pub waist: LoopPath<S>,
    pub waist_f_length: S,
    pub geodesics: Vec<CensusGeodesic<S>>,
    /// Number of pairwise-distinct geodesics at Hausdorff separation 1e-2.
    pub distinct_count: usize,
}

/// F-length of a loop under the Randers metric `F = |v| + theta(v)/r`
/// (parametrization-free polyline integral).
fn randers_length<S: Real>(data: &MagneticTonelliData<S>, lp: &LoopPath<S>, r: S) -> Result<S> {
    let surface = &data.surface;
    let n = lp.samples.len();
    let half = S::of(0.5);
    let mut total = S::zero();
    for k in 0..n {
        let a = lp.samples[k];
        let b = lp.sample_ext(k as isize + 1);
        let mid = scale(add(a, b), half);
        let g = surface.metric(mid)?;
        let d = sub(b, a);
        let th = data.theta.eval(surface.reduce(mid));
        total = total + crate::scalar::quad(g, d, d).max(S::zero()).sqrt()
            + (th[0] * d[0] + th[1] * d[1]) / r;
    }
    Ok(total)
}

/// Reparametrize a loop to constant Randers speed (the geodesic
/// parametrization up to scale).
fn constant_f_speed<S: Real>(
    data: &MagneticTonelliData<S>,
    lp: &LoopPath<S>,
    r: S,
) -> Result<LoopPath<S>> {
    let surface = &data.surface;
    let n = lp.samples.len();
    let half = S::of(0.5);
    let mut cumulative = vec![S::zero()];
    for k in 0..n {
        let a = lp.samples[k];
        let b = lp.sample_ext(k as isize + 1);
        let mid = scale(add(a, b), half);
        let g = surface.metric(mid)?;
        let d = sub(b, a);
        let th = data.theta.eval(surface.reduce(mid));
        let seg = crate::scalar::quad(g, d, d).max(S::zero()).sqrt()
            + (th[0] * d[0] + th[1] * d[1]) / r;
        let prev = *cumulative.last().unwrap();
        cumulative.push(prev + seg.max(S::of(1e-12)));
    }
    let total = *cumulative.last().unwrap();
    let mut samples = Vec::with_capacity(n);
    let mut seg = 0usize;
    for j in 0..n {
        let tgt = total * S::of(j as f64 / n as f64);
        while seg + 1 < n && cumulative[seg + 1] < tgt {
            seg += 1;
        }
        let span = cumulative[seg + 1] - cumulative[seg];
        let t = if span > S::zero() {
            (tgt - cumulative[seg]) / span
        } else {
            S::zero()
        };
        let a = lp.samples[seg];
        let b = lp.sample_ext(seg as isize + 1);
        samples.push(add(a, scale(sub(b, a), t)));
    }
    LoopPath::new(surface, samples, lp.period)
}

/// Locate a waist of `S_e` on the sphere by descending latitude seeds of
/// both orientations; the winner must pass the local-minimality probe.
pub fn find_sphere_waist<S: Real>(
    data: &MagneticTonelliData<S>,
    e: S,
    opts: &SearchOpts<S>,
) -> Result<(LoopPath<S>, S)> {
    let surface = &data.surface;
    if surface.kind != SurfaceKind::RoundSphere {
        return Err(Error::Invalid("waist seeding here targets the sphere".into()));
    }
    let speed = match speed_for_energy(data, e, [S::zero(), S::zero()]) {
        Some(s) => s,
        None => {
            return Err(Error::EnergyRange {
                e: e.as_f64(),
                lo: Some(critical::compute_e0(data).as_f64()),
                hi: None,
            })
        }
    };
    let mut best: Option<(LoopPath<S>, S)> = None;
    for &z in &[S::zero(), S::of(0.25), S::of(-0.25), S::of(0.5), S::of(-0.5)] {
        for positive in [false, true] {
            let seed = match latitude_circle(surface, z, positive, speed, opts.n_samples) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let out = descend_multicurve(
                data,
                vec![seed],
                e,
                &DescentOpts {
                    max_iters: opts.max_iters,
                    grad_tol: opts.grad_tol,
                    ..Default::default()
                },
            )?;
            if out.hit_period_floor || !out.converged {
                continue;
            }
            let lp = out.components.into_iter().next().unwrap();
            if !local_minimality_probe(data, &lp, e, 20, 99 + z.as_f64().to_bits())? {
                continue;
            }
            if best.as_ref().map_or(true, |(_, a)| out.value < *a) {
                best = Some((lp, out.value));
            }
        }
    }
    best.ok_or_else(|| {
        Error::NoWaistFound("no latitude seed converged to a local minimizer".into())
    })
}

/// Census of closed Randers geodesics: locate a waist of the free-period
/// action at `e = r^2/2` from latitude seeds, then map the minimax critical
/// loops (m <= 3) through the orbit equivalence to closed F-geodesics.
pub fn randers_geodesic_census<S: Real>(
    data: &MagneticTonelliData<S>,
    r: S,
    opts: &SearchOpts<S>,
) -> Result<CensusReport<S>> {
    let surface = &data.surface;
    if surface.kind != SurfaceKind::RoundSphere {
        return Err(Error::Invalid("the census runs on the sphere".into()));
    }
    check_randers_domain(data, r)?;
    let e = S::of(0.5) * r * r;
    let (waist, waist_action) = find_sphere_waist(data, e, opts)?;
    let waist_f_length = waist_action; // S_{r^2/2} equals the F-length on the energy shell

    // minimax multiplicity and the orbit equivalence; the action of an
    // energy-shell curve is r times its Randers length
    let minimax = minimax_orbits(data, e, &waist, 3, opts)?;
    let waist_randers = randers_length(data, &waist, r)?;
    let mut geodesics = vec![CensusGeodesic {
        loop_path: constant_f_speed(data, &waist, r)?,
        f_length: r * waist_randers,
        randers_length: waist_randers,
        s_value: minimax.s_values[0],
    }];
    for (idx, lp) in minimax.critical_loops.iter().enumerate().skip(1) {
        let geo = constant_f_speed(data, lp, r)?;
        let rl = randers_length(data, &geo, r)?;
        geodesics.push(CensusGeodesic {
            loop_path: geo,
            f_length: r * rl,
            randers_length: rl,
            s_value: minimax.s_values[idx],
        });
    }
    // pairwise distinctness at Hausdorff separation 1e-2
    let sep = S::of(1e-2);
    let mut distinct: Vec<usize> = Vec::new();
    for (i, g) in geodesics.iter().enumerate() {
        let is_new = distinct.iter().all(|&j| {
            hausdorff_distance(surface, &g.loop_path, &geodesics[j].loop_path) > sep
        });
        if is_new {
            distinct.push(i);
        }
    }
    Ok(CensusReport {
        waist,
        waist_f_length,
        geodesics,
        distinct_count: distinct.len(),
    })
}

/// Full spectrum with the loop-derived lower bound wired in: when the
/// one-form is non-closed and the potential vanishes, the zero-action
/// boundary of the criterion gives `c0 >= |theta|_inf^2 / 2`.
pub fn full_spectrum<S: Real>(
    data: &MagneticTonelliData<S>,
    opts: &CriticalOpts,
) -> EnergySpectrum<S> {
    let hint = match zero_action_criterion(data) {
        Ok(rep) if rep.satisfied => Some(S::of(0.5) * rep.r0 * rep.r0),
        _ => None,
    };
    critical::energy_spectrum(data, opts, hint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homology::solve_bounding_chain;
    use crate::preset::preset;

    fn torus_example() -> MagneticTonelliData<f64> {
        preset("torus-example").unwrap()
    }

    fn fast_opts() -> SearchOpts<f64> {
        SearchOpts {
            seeds: 8,
            n_samples: 128,
            max_iters: 2000,
            grid_k: 128,
            ..Default::default()
        }
    }

    #[test]
    fn search_finds_latitude_pair_below_critical() {
        let data = torus_example();
        let report = minimal_boundary_search(&data, 0.3, &fast_opts()).unwrap();
        let want = 2.0 * (0.6f64.sqrt() - 1.0);
        assert!(
            (report.action - want).abs() < 1e-3,
            "action {} vs {want}",
            report.action
        );
        assert_eq!(report.multicurve.components.len(), 2);
        assert!(report.certificate.verified);
        assert!(report.flags.iter().any(|f| f == "negative_action"));
        // components are the latitude circles at y = 0 and y = 1/2
        let surface = data.surface;
        let lat0 = latitude_circle(&surface, 0.0, true, 0.6f64.sqrt(), 128).unwrap();
        let lat5 = latitude_circle(&surface, 0.5, false, 0.6f64.sqrt(), 128).unwrap();
        let mut matched = 0;
        for c in &report.multicurve.components {
            if hausdorff_distance(&surface, c, &lat0) < 1e-2
                || hausdorff_distance(&surface, c, &lat5) < 1e-2
            {
                matched += 1;
            }
        }
        assert_eq!(matched, 2);
        // energy residuals of converged waists
        for r in &report.component_energy_residuals {
            assert!(*r < 1e-4, "residual {r}");
        }
    }

    #[test]
    fn search_zero_action_at_critical_level() {
        let data = torus_example();
        let report = minimal_boundary_search(&data, 0.5, &fast_opts()).unwrap();
        assert!(report.action.abs() < 1e-3, "action {}", report.action);
        assert_eq!(report.multicurve.components.len(), 2);
    }

    #[test]
    fn search_energy_range_errors() {
        let data = torus_example();
        assert!(matches!(
            minimal_boundary_search(&data, 0.0, &fast_opts()),
            Err(Error::EnergyRange { .. })
        ));
        let opts = SearchOpts {
            c0_hint: Some(0.5),
            ..fast_opts()
        };
        assert!(matches!(
            minimal_boundary_search(&data, 0.7, &opts),
            Err(Error::EnergyRange { .. })
        ));
    }

    #[test]
    fn search_reports_no_negative_candidate_with_inflated_hint() {
        // with an (artificially) inflated critical hint the search at e=0.6
        // finds only nonnegative actions and must fail loudly
        let data = torus_example();
        let opts = SearchOpts {
            c0_hint: Some(0.63),
            seeds: 4,
            ..fast_opts()
        };
        assert!(matches!(
            minimal_boundary_search(&data, 0.6, &opts),
            Err(Error::NoNegativeCandidate { .. })
        ));
    }

    #[test]
    fn graph_check_on_independent_searches() {
        let data = torus_example();
        let mut reports = Vec::new();
        for seed in 0..3u64 {
            let opts = SearchOpts {
                rng_seed: seed,
                seeds: 6,
                ..fast_opts()
            };
            reports.push(minimal_boundary_search(&data, 0.3, &opts).unwrap());
        }
        let check = graph_theorem_check(&data, &reports).unwrap();
        assert_eq!(check.violations, 0, "{:#?}", check.pairs);
        assert!(check
            .pairs
            .iter()
            .any(|p| p.verdict == PairVerdict::Identical));
        assert!(check
            .pairs
            .iter()
            .any(|p| p.verdict == PairVerdict::Disjoint));
    }

    #[test]
    fn graph_check_flags_fabricated_crossing() {
        let data = torus_example();
        let surface = data.surface;
        let report = minimal_boundary_search(&data, 0.3, &fast_opts()).unwrap();
        // fabricate a second report whose component crosses the first
        let mut fake = report.clone();
        fake.multicurve = Multicurve::new(
            &surface,
            vec![longitude_circle(&surface, 0.25, true, 1.0, 128).unwrap()],
        )
        .unwrap();
        let check = graph_theorem_check(&data, &[report, fake]).unwrap();
        assert!(check.violations > 0);
    }

    #[test]
    fn graph_check_mixed_energy_rejected() {
        let data = torus_example();
        let r1 = minimal_boundary_search(&data, 0.3, &fast_opts()).unwrap();
        let mut r2 = r1.clone();
        r2.energy = 0.4;
        assert!(matches!(
            graph_theorem_check(&data, &[r1, r2]),
            Err(Error::MixedEnergy(..))
        ));
    }

    #[test]
    fn continuation_above_critical() {
        let data = torus_example();
        let report = minimal_boundary_search(&data, 0.5, &fast_opts()).unwrap();
        let cont =
            waist_continuation_above_c0(&data, &report, &[0.52, 0.6, 0.72], &fast_opts())
                .unwrap();
        assert_eq!(cont.steps.len(), 3);
        for step in &cont.steps {
            assert!(step.success, "failed at e = {}", step.energy);
        }
        let want = 1.2f64.sqrt() - 1.0;
        for a in &cont.steps[1].per_component_action {
            assert!((a - want).abs() < 1e-3, "per-circle action {a} vs {want}");
        }
        assert_eq!(cont.cw_estimate, Some(0.72));
    }

    #[test]
    fn continuation_rejects_fabricated_input() {
        let free: MagneticTonelliData<f64> = preset("round-sphere-free").unwrap();
        let surface = free.surface;
        let circle = latitude_circle(&surface, 0.3, true, 1.0, 64).unwrap();
        let mc = Multicurve::single(&surface, circle).unwrap();
        let cert = match solve_bounding_chain(&surface, &mc, 64).unwrap() {
            BoundingChain::Bounds(c) => c,
            _ => unreachable!(),
        };
        let fake = SearchReport {
            energy: 0.5,
            action: 0.0,
            multicurve: mc,
            component_energy_residuals: vec![0.0],
            certificate: cert,
            grid_k_used: 64,
            seeds_used: 0,
            disjointness: vec![vec![0.0]],
            flags: vec![],
            seed_summaries: vec![],
        };
        assert!(matches!(
            waist_continuation_above_c0(&free, &fake, &[0.6], &fast_opts()),
            Err(Error::NotAMinimalBoundary(_))
        ));
    }

    #[test]
    fn orbit_measure_golden_values() {
        let data = torus_example();
        let surface = data.surface;
        // single (1,0) circle at unit speed: rotation (1,0), action -1/2
        let c = latitude_circle(&surface, 0.0, true, 1.0, 128).unwrap();
        let mc = Multicurve::single(&surface, c).unwrap();
        let stats = orbit_measure_stats(&data, &mc).unwrap();
        assert!((stats.rotation_vector[0] - 1.0).abs() < 1e-9);
        assert!(stats.rotation_vector[1].abs() < 1e-9);
        assert!((stats.measure_action + 0.5).abs() < 1e-9);

        // the critical minimal pair: rotation 0, measure action -c0
        let pair = Multicurve::new(
            &surface,
            vec![
                latitude_circle(&surface, 0.0, true, 1.0, 128).unwrap(),
                latitude_circle(&surface, 0.5, false, 1.0, 128).unwrap(),
            ],
        )
        .unwrap();
        let stats = orbit_measure_stats(&data, &pair).unwrap();
        assert!(stats.rotation_vector.iter().all(|v| v.abs() < 1e-9));
        assert!((stats.measure_action + 0.5).abs() < 1e-3);
    }

    #[test]
    fn orbit_measure_rejects_non_orbit() {
        let data = torus_example();
        let surface = data.surface;
        // wildly non-constant speed: not an orbit
        let lp = LoopPath::from_fn(
            &surface,
            |t: f64| [t + 0.2 * (2.0 * std::f64::consts::PI * t).sin(), 0.2],
            64,
            1.0,
        )
        .unwrap();
        let mc = Multicurve::single(&surface, lp).unwrap();
        assert!(matches!(
            orbit_measure_stats(&data, &mc),
            Err(Error::NotAnOrbit { .. })
        ));
    }

    #[test]
    fn zero_action_criterion_on_both_magnetic_presets() {
        let sphere: MagneticTonelliData<f64> = preset("sphere-magnetic").unwrap();
        let rep = zero_action_criterion(&sphere).unwrap();
        assert!(rep.satisfied, "{}", rep.n_set_description);
        assert!((rep.r0 - 0.5).abs() < 1e-3, "r0 = {}", rep.r0);
        for a in &rep.orbit_actions {
            assert!(a.abs() < 1e-5, "orbit action {a}");
        }

        let torus = torus_example();
        let rep = zero_action_criterion(&torus).unwrap();
        assert!(rep.satisfied, "{}", rep.n_set_description);
        assert!((rep.r0 - 1.0).abs() < 1e-6);
        let boundary = rep.boundary.unwrap();
        assert_eq!(boundary.components.len(), 2);
    }

    #[test]
    fn zero_action_criterion_rejects_closed_forms() {
        let free: MagneticTonelliData<f64> = preset("round-sphere-free").unwrap();
        assert!(matches!(
            zero_action_criterion(&free),
            Err(Error::ClosedForm(_))
        ));
        let pendulum: MagneticTonelliData<f64> = preset("pendulum-torus").unwrap();
        assert!(matches!(
            zero_action_criterion(&pendulum),
            Err(Error::ClosedForm(_))
        ));
    }

    #[test]
    fn census_waist_f_length() {
        let sphere: MagneticTonelliData<f64> = preset("sphere-magnetic").unwrap();
        let opts = SearchOpts {
            n_samples: 128,
            max_iters: 2000,
            ..Default::default()
        };
        let census = randers_geodesic_census(&sphere, 0.6, &opts).unwrap();
        let want = 0.2 * std::f64::consts::PI;
        assert!(
            (census.waist_f_length - want).abs() < 1e-3,
            "F-length {} vs {want}",
            census.waist_f_length
        );
        assert!(census.distinct_count >= 3, "distinct {}", census.distinct_count);
        // waist is the negatively oriented equator
        for s in &census.waist.samples {
            assert!(s[1].abs() < 1e-4, "z = {}", s[1]);
        }
        let class_dir = census.waist.closure[0];
        assert!(class_dir < 0.0, "negative orientation expected");
        // minimax ordering
        let s = &census.geodesics;
        assert!(s.len() >= 3);
    }

    #[test]
    fn census_domain_error() {
        let sphere: MagneticTonelliData<f64> = preset("sphere-magnetic").unwrap();
        assert!(matches!(
            randers_geodesic_census(&sphere, 0.4, &SearchOpts::default()),
            Err(Error::RandersDomain { .. })
        ));
    }

    #[test]
    fn minimax_ordering_on_sphere() {
        let sphere: MagneticTonelliData<f64> = preset("sphere-magnetic").unwrap();
        let surface = sphere.surface;
        let waist = {
            let seed = latitude_circle(&surface, 0.0, false, 0.6, 128).unwrap();
            let out = descend_multicurve(
                &sphere,
                vec![seed],
                0.18,
                &DescentOpts {
                    max_iters: 2000,
                    grad_tol: 1e-8,
                    ..Default::default()
                },
            )
            .unwrap();
            out.components.into_iter().next().unwrap()
        };
        let report = minimax_orbits(&sphere, 0.18, &waist, 3, &fast_opts()).unwrap();
        let s = &report.s_values;
        assert!((s[0] - 0.2 * std::f64::consts::PI).abs() < 1e-3, "s1 = {}", s[0]);
        assert!(s[1] > 2.0 * s[0], "s2 = {} vs 2 s1 = {}", s[1], 2.0 * s[0]);
        assert!(s[2] > 3.0 * s[0], "s3 = {} vs 3 s1 = {}", s[2], 3.0 * s[0]);
        assert!(s[0] < s[1] && s[1] < s[2], "not increasing: {s:?}");
    }

    #[test]
    fn minimax_rejects_non_waist() {
        let sphere: MagneticTonelliData<f64> = preset("round-sphere-free").unwrap();
        let surface = sphere.surface;
        // the equator of the free sphere is critical but not a minimizer
        let eq = latitude_circle(&surface, 0.0, true, 1.0, 96).unwrap();
        assert!(matches!(
            minimax_orbits(&sphere, 0.5, &eq, 2, &SearchOpts::default()),
            Err(Error::NotAWaist(_))
        ));
    }

    #[test]
    fn full_spectrum_golden_values() {
        let data = torus_example();
        let spec = full_spectrum(&data, &CriticalOpts::default());
        assert_eq!(spec.e0, 0.0);
        for (name, est) in [("c", &spec.c), ("c0", &spec.c0), ("cu", &spec.cu)] {
            assert!(
                est.value >= 0.49 && est.value <= 0.51,
                "{name} = {} ({})",
                est.value,
                est.method
            );
            assert!(est.tolerance < 0.02, "{name} tolerance {}", est.tolerance);
        }
        // ordering e0 <= cu <= c0 <= c within combined tolerances
        assert!(spec.e0 <= spec.cu.value + spec.cu.tolerance);
        assert!(spec.cu.value <= spec.c0.value + spec.c0.tolerance + spec.cu.tolerance);
        assert!(spec.c0.value <= spec.c.value + spec.c.tolerance + spec.c0.tolerance);
    }
}
