//! Discrete periodic curves and multicurves.
//!
//! A loop is stored as `N` chart samples at uniform parameter spacing
//! together with a free period `p`; torus coordinates are kept unreduced so
//! the winding accumulates in the samples and the homology class is an
//! endpoint difference. Multicurve surgery (double-point rearrangement and
//! corner chamfering) follows the cut-and-paste construction used to turn a
//! negative-action test loop into an embedded homological boundary.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{add, dot, norm, scale, sub, Real, V2};
use crate::surface::SurfaceModel;

/// Hard floor for free periods. Hitting it during descent is the
/// "collapse toward a point curve" outcome, not an error.
pub const PERIOD_FLOOR: f64 = 1e-3;

/// Default snap tolerance for intersection tests, in chart units.
pub const SNAP_DEFAULT: f64 = 1e-6;

/// Tangency classification threshold: lines within 5 degrees.
pub const TANGENCY_ANGLE_DEG: f64 = 5.0;

const MIN_SAMPLES: usize = 8;

/// A discretized periodic curve `(Gamma, p)`: `samples[k] = Gamma(k/N)` in
/// unreduced chart coordinates, and `Gamma(1) = Gamma(0) + closure`.
#[derive(Debug, Clone, Serialize)]
pub struct LoopPath<S> {
    pub samples: Vec<V2<S>>,
    pub period: S,
    /// Chart displacement over one parameter period; integer-valued (in
    /// units of the chart periods) on closed charts.
    pub closure: V2<S>,
}

impl<S: Real> LoopPath<S> {
    /// Build from unreduced samples; the closure displacement is inferred by
    /// closing the last sample to the first through the minimal chart
    /// displacement.
    pub fn new(surface: &SurfaceModel<S>, samples: Vec<V2<S>>, period: S) -> Result<Self> {
        if samples.len() < MIN_SAMPLES {
            return Err(Error::Invalid(format!(
                "loop needs at least {MIN_SAMPLES} samples, got {}",
                samples.len()
            )));
        }
        if !(period >= S::of(PERIOD_FLOOR)) {
            return Err(Error::Invalid(format!(
                "period {period} below floor {PERIOD_FLOOR}"
            )));
        }
        for s in &samples {
            if !s[0].is_finite() || !s[1].is_finite() {
                return Err(Error::Invalid("non-finite sample".into()));
            }
        }
        let closure = infer_closure(surface, &samples);
        Ok(LoopPath {
            samples,
            period,
            closure,
        })
    }

    /// Sample a continuous unreduced chart curve `f: [0,1) -> R^2`.
    pub fn from_fn(
        surface: &SurfaceModel<S>,
        f: impl Fn(S) -> V2<S>,
        n: usize,
        period: S,
    ) -> Result<Self> {
        let samples = (0..n)
            .map(|k| f(S::of(k as f64 / n as f64)))
            .collect::<Vec<_>>();
        LoopPath::new(surface, samples, period)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample with index extended by the closure: valid for `-N <= k <= 2N`.
    pub fn sample_ext(&self, k: isize) -> V2<S> {
        let n = self.samples.len() as isize;
        if k < 0 {
            sub(self.sample_ext(k + n), self.closure)
        } else if k >= n {
            add(self.sample_ext(k - n), self.closure)
        } else {
            self.samples[k as usize]
        }
    }

    /// Centered-difference velocity `Gamma'(k/N)/p` at each sample.
    pub fn velocities(&self) -> Vec<V2<S>> {
        let n = self.samples.len();
        let scale_fac = S::of(n as f64) / (S::of(2.0) * self.period);
        (0..n)
            .map(|k| {
                let d = sub(self.sample_ext(k as isize + 1), self.sample_ext(k as isize - 1));
                scale(d, scale_fac)
            })
            .collect()
    }

    /// Chart length of the polyline over one period.
    pub fn chart_length(&self) -> S {
        let n = self.samples.len();
        let mut total = S::zero();
        for k in 0..n {
            total = total + norm(sub(self.sample_ext(k as isize + 1), self.samples[k]));
        }
        total
    }

    /// Riemannian length (midpoint-rule metric per segment).
    pub fn metric_length(&self, surface: &SurfaceModel<S>) -> Result<S> {
        let n = self.samples.len();
        let half = S::of(0.5);
        let mut total = S::zero();
        for k in 0..n {
            let a = self.samples[k];
            let b = self.sample_ext(k as isize + 1);
            let mid = scale(add(a, b), half);
            let g = surface.metric(mid)?;
            let d = sub(b, a);
            total = total + crate::scalar::quad(g, d, d).max(S::zero()).sqrt();
        }
        Ok(total)
    }

    /// Reverse orientation: `Gamma~(t) = Gamma(-t)` in unreduced coordinates.
    pub fn reversed(&self) -> Self {
        let n = self.samples.len();
        let mut samples = Vec::with_capacity(n);
        samples.push(self.samples[0]);
        for k in 1..n {
            samples.push(sub(self.samples[n - k], self.closure));
        }
        LoopPath {
            samples,
            period: self.period,
            closure: [-self.closure[0], -self.closure[1]],
        }
    }

    /// The m-fold iterate: same support traversed m times, period `m p`.
    pub fn iterate(&self, m: usize) -> Self {
        let n = self.samples.len();
        let mut samples = Vec::with_capacity(n * m);
        for rep in 0..m {
            let offset = scale(self.closure, S::of(rep as f64));
            samples.extend(self.samples.iter().map(|s| add(*s, offset)));
        }
        LoopPath {
            samples,
            period: self.period * S::of(m as f64),
            closure: scale(self.closure, S::of(m as f64)),
        }
    }
}

/// Winding inference: extrapolate the unreduced endpoint displacement over
/// the missing closing step and snap each periodic coordinate to the nearest
/// integer multiple of its chart period. The non-periodic sphere coordinate
/// closes exactly.
fn infer_closure<S: Real>(surface: &SurfaceModel<S>, samples: &[V2<S>]) -> V2<S> {
    let n = samples.len();
    let last = samples[n - 1];
    let first = samples[0];
    let factor = S::of(n as f64 / (n - 1) as f64);
    let est = [(last[0] - first[0]) * factor, (last[1] - first[1]) * factor];
    let periods = surface.periods();
    let mut closure = [S::zero(); 2];
    for i in 0..2 {
        closure[i] = match periods[i] {
            Some(p) => (est[i] / p).round() * p,
            None => S::zero(),
        };
    }
    closure
}

/// Piecewise-linear resampling to `n_new` samples at uniform parameter;
/// period and homology class are unchanged. Resampling to the same count
/// reproduces the samples exactly.
pub fn resample_uniform<S: Real>(lp: &LoopPath<S>, n_new: usize) -> Result<LoopPath<S>> {
    if n_new < MIN_SAMPLES {
        return Err(Error::Invalid(format!("resample target {n_new} < {MIN_SAMPLES}")));
    }
    let n = lp.samples.len();
    if n_new == n {
        return Ok(lp.clone());
    }
    let mut samples = Vec::with_capacity(n_new);
    for j in 0..n_new {
        let s = S::of(j as f64 / n_new as f64) * S::of(n as f64);
        let k = s.floor();
        let frac = s - k;
        let k = k.as_f64() as isize;
        let a = lp.sample_ext(k);
        let b = lp.sample_ext(k + 1);
        samples.push(add(a, scale(sub(b, a), frac)));
    }
    Ok(LoopPath {
        samples,
        period: lp.period,
        closure: lp.closure,
    })
}

/// Resample so consecutive samples are equally spaced in Riemannian
/// arclength; sample count and period are kept.
pub fn reparametrize_arclength<S: Real>(
    surface: &SurfaceModel<S>,
    lp: &LoopPath<S>,
) -> Result<LoopPath<S>> {
    let n = lp.samples.len();
    let half = S::of(0.5);
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(S::zero());
    for k in 0..n {
        let a = lp.samples[k];
        let b = lp.sample_ext(k as isize + 1);
        let mid = scale(add(a, b), half);
        let g = surface.metric(mid)?;
        let d = sub(b, a);
        let len = crate::scalar::quad(g, d, d).max(S::zero()).sqrt();
        let prev = *cumulative.last().unwrap();
        cumulative.push(prev + len);
    }
    let total = *cumulative.last().unwrap();
    if total <= S::zero() {
        return Err(Error::Invalid("zero-length loop".into()));
    }
    let mut samples = Vec::with_capacity(n);
    let mut seg = 0usize;
    for j in 0..n {
        let target = total * S::of(j as f64 / n as f64);
        while seg + 1 < n && cumulative[seg + 1] < target {
            seg += 1;
        }
        let seg_len = cumulative[seg + 1] - cumulative[seg];
        let frac = if seg_len > S::zero() {
            (target - cumulative[seg]) / seg_len
        } else {
            S::zero()
        };
        let a = lp.samples[seg];
        let b = lp.sample_ext(seg as isize + 1);
        samples.push(add(a, scale(sub(b, a), frac)));
    }
    Ok(LoopPath {
        samples,
        period: lp.period,
        closure: lp.closure,
    })
}

/// Homology class of a loop: on the torus the winding vector stored in the
/// closure, after checking that the unreduced endpoint displacement is
/// consistent with it (residual below 0.1 chart periods); on the sphere the
/// empty vector.
pub fn homology_class<S: Real>(surface: &SurfaceModel<S>, lp: &LoopPath<S>) -> Result<Vec<i64>> {
    let periods = surface.periods();
    let mut class = Vec::new();
    if surface.homology_rank() == 0 {
        return Ok(class);
    }
    let n = lp.samples.len();
    let last = lp.samples[n - 1];
    let first = lp.samples[0];
    let factor = S::of(n as f64 / (n - 1) as f64);
    for i in 0..2 {
        let p = periods[i].expect("torus has two periodic directions");
        let est = (last[i] - first[i]) * factor / p;
        let w = lp.closure[i] / p;
        let residual = (est - w).abs().as_f64();
        if residual > 0.1 {
            return Err(Error::WindingResidual(residual));
        }
        class.push(w.round().as_f64() as i64);
    }
    Ok(class)
}

/// A finite collection of loops with its total homology class.
#[derive(Debug, Clone, Serialize)]
pub struct Multicurve<S> {
    pub components: Vec<LoopPath<S>>,
    pub homology: Vec<i64>,
    /// Certified by an empty `self_intersections` run.
    pub embedded: bool,
}

impl<S: Real> Multicurve<S> {
    pub fn new(surface: &SurfaceModel<S>, components: Vec<LoopPath<S>>) -> Result<Self> {
        let mut homology = vec![0i64; surface.homology_rank()];
        for lp in &components {
            let c = homology_class(surface, lp)?;
            for (acc, v) in homology.iter_mut().zip(c) {
                *acc += v;
            }
        }
        Ok(Multicurve {
            components,
            homology,
            embedded: false,
        })
    }

    pub fn single(surface: &SurfaceModel<S>, lp: LoopPath<S>) -> Result<Self> {
        Multicurve::new(surface, vec![lp])
    }

    pub fn total_period(&self) -> S {
        self.components
            .iter()
            .fold(S::zero(), |acc, c| acc + c.period)
    }

    /// Run the intersection check and set the embedded flag accordingly.
    pub fn check_embedded(&mut self, surface: &SurfaceModel<S>, snap: S) -> Result<bool> {
        let crossings = self_intersections(surface, self, snap)?;
        self.embedded = crossings.is_empty();
        Ok(self.embedded)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CrossingKind {
    Transverse,
    Tangency,
}

/// One pairwise intersection record between two local passages.
#[derive(Debug, Clone, Serialize)]
pub struct Crossing<S> {
    pub component_a: usize,
    pub segment_a: usize,
    pub component_b: usize,
    pub segment_b: usize,
    pub kind: CrossingKind,
    /// Contact location, reduced chart coordinates.
    pub point: V2<S>,
}

/// One local passage of a component through a contact cluster.
#[derive(Debug, Clone)]
pub(crate) struct Passage<S> {
    pub comp: usize,
    pub seg: usize,
    /// Parameter along the segment of the contact.
    pub t: S,
    pub point: V2<S>,
    pub dir_in: V2<S>,
    pub dir_out: V2<S>,
    /// Set when the contact coincides with sample `seg+1` (t ~ 1) or `seg` (t ~ 0).
    pub at_vertex: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct ContactCluster<S> {
    pub point: V2<S>,
    pub passages: Vec<Passage<S>>,
    /// Pairs of passage indices classified as transverse crossings.
    pub transverse_pairs: Vec<(usize, usize)>,
    /// Pairs classified as tangencies.
    pub tangent_pairs: Vec<(usize, usize)>,
}

struct SegGeom<S> {
    comp: usize,
    seg: usize,
    /// Reduced start point.
    a: V2<S>,
    /// Displacement to the end point.
    d: V2<S>,
    len: S,
}

fn segment_geometry<S: Real>(
    surface: &SurfaceModel<S>,
    mc: &Multicurve<S>,
    snap: S,
) -> Result<Vec<SegGeom<S>>> {
    let mut segs = Vec::new();
    for (ci, lp) in mc.components.iter().enumerate() {
        let n = lp.samples.len();
        for k in 0..n {
            let a_raw = lp.samples[k];
            let b_raw = lp.sample_ext(k as isize + 1);
            let d = sub(b_raw, a_raw);
            let len = norm(d);
            if len <= S::of(2.0) * snap {
                return Err(Error::DegenerateSegment {
                    component: ci,
                    segment: k,
                });
            }
            segs.push(SegGeom {
                comp: ci,
                seg: k,
                a: surface.reduce(a_raw),
                d,
                len,
            });
        }
    }
    Ok(segs)
}

/// Closest approach between segments `a0 + s da` and `b0 + t db`,
/// `s, t in [0,1]`. Returns `(s, t, distance)`.
fn segment_closest<S: Real>(a0: V2<S>, da: V2<S>, b0: V2<S>, db: V2<S>) -> (S, S, S) {
    // proper crossing test first
    let denom = da[0] * db[1] - da[1] * db[0];
    let r = sub(b0, a0);
    if denom.abs() > S::of(1e-30) {
        let s = (r[0] * db[1] - r[1] * db[0]) / denom;
        let t = (r[0] * da[1] - r[1] * da[0]) / denom;
        if s >= S::zero() && s <= S::one() && t >= S::zero() && t <= S::one() {
            return (s, t, S::zero());
        }
    }
    // otherwise min over endpoint-to-segment distances
    let clamp01 = |x: S| x.max(S::zero()).min(S::one());
    let point_param = |p: V2<S>, q0: V2<S>, dq: V2<S>| -> S {
        let dd = dot(dq, dq);
        if dd <= S::zero() {
            S::zero()
        } else {
            clamp01(dot(sub(p, q0), dq) / dd)
        }
    };
    let mut best = (S::zero(), S::zero(), S::infinity());
    // endpoints of a against b
    for (s, pa) in [(S::zero(), a0), (S::one(), add(a0, da))] {
        let t = point_param(pa, b0, db);
        let pb = add(b0, scale(db, t));
        let dist = norm(sub(pa, pb));
        if dist < best.2 {
            best = (s, t, dist);
        }
    }
    for (t, pb) in [(S::zero(), b0), (S::one(), add(b0, db))] {
        let s = point_param(pb, a0, da);
        let pa = add(a0, scale(da, s));
        let dist = norm(sub(pa, pb));
        if dist < best.2 {
            best = (s, t, dist);
        }
    }
    best
}

struct ContactEvent<S> {
    comp_a: usize,
    seg_a: usize,
    ta: S,
    comp_b: usize,
    seg_b: usize,
    tb: S,
    point: V2<S>,
    dist: S,
}

/// Lattice offsets to test for the second segment on periodic charts.
fn lattice_offsets<S: Real>(surface: &SurfaceModel<S>) -> Vec<V2<S>> {
    let periods = surface.periods();
    let opts = |p: Option<S>| -> Vec<S> {
        match p {
            Some(p) => vec![-p, S::zero(), p],
            None => vec![S::zero()],
        }
    };
    let mut out = Vec::new();
    for &ox in &opts(periods[0]) {
        for &oy in &opts(periods[1]) {
            out.push([ox, oy]);
        }
    }
    out
}

pub(crate) fn contact_analysis<S: Real>(
    surface: &SurfaceModel<S>,
    mc: &Multicurve<S>,
    snap: S,
) -> Result<Vec<ContactCluster<S>>> {
    let segs = segment_geometry(surface, mc, snap)?;
    let offsets = lattice_offsets(surface);
    let comp_len: Vec<usize> = mc.components.iter().map(|c| c.samples.len()).collect();
    let touch_tol = snap * S::of(1e-3);
    let mut events: Vec<ContactEvent<S>> = Vec::new();

    for i in 0..segs.len() {
        for j in (i + 1)..segs.len() {
            let (si, sj) = (&segs[i], &segs[j]);
            if si.comp == sj.comp {
                let n = comp_len[si.comp];
                let gap = (sj.seg + n - si.seg) % n;
                if gap <= 1 || gap == n - 1 {
                    continue; // adjacent segments share a vertex by construction
                }
            }
            let reach = (si.len + sj.len) * S::of(0.5) + snap;
            for off in &offsets {
                let b0 = add(sj.a, *off);
                // cheap midpoint reject
                let mid_a = add(si.a, scale(si.d, S::of(0.5)));
                let mid_b = add(b0, scale(sj.d, S::of(0.5)));
                let md = sub(mid_b, mid_a);
                if md[0].abs() > reach || md[1].abs() > reach {
                    continue;
                }
                let (s, t, dist) = segment_closest(si.a, si.d, b0, sj.d);
                if dist < snap {
                    let pa = add(si.a, scale(si.d, s));
                    let pb = add(b0, scale(sj.d, t));
                    let point = surface.reduce(scale(add(pa, pb), S::of(0.5)));
                    events.push(ContactEvent {
                        comp_a: si.comp,
                        seg_a: si.seg,
                        ta: s,
                        comp_b: sj.comp,
                        seg_b: sj.seg,
                        tb: t,
                        point,
                        dist,
                    });
                }
            }
        }
    }

    // cluster events by contact location (union-find)
    let ne = events.len();
    let mut parent: Vec<usize> = (0..ne).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    let cluster_radius = snap * S::of(4.0);
    for i in 0..ne {
        for j in (i + 1)..ne {
            if surface.chart_distance(events[i].point, events[j].point) < cluster_radius {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for i in 0..ne {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }

    let mut clusters = Vec::new();
    for (_, group) in groups {
        // incidences: (comp, global param = seg + t, dist)
        let mut incidences: Vec<(usize, S, S)> = Vec::new();
        let mut point_acc = [S::zero(); 2];
        for &gi in &group {
            let ev = &events[gi];
            incidences.push((ev.comp_a, S::of(ev.seg_a as f64) + ev.ta, ev.dist));
            incidences.push((ev.comp_b, S::of(ev.seg_b as f64) + ev.tb, ev.dist));
            point_acc = add(point_acc, events[gi].point);
        }
        let center = surface.reduce(scale(point_acc, S::one() / S::of(group.len() as f64)));

        // group incidences into passages: same component, params within 2.5 segments (cyclic)
        incidences.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        });
        let mut passages: Vec<Passage<S>> = Vec::new();
        let mut used = vec![false; incidences.len()];
        for start in 0..incidences.len() {
            if used[start] {
                continue;
            }
            let comp = incidences[start].0;
            let n = comp_len[comp] as f64;
            let mut members = vec![start];
            used[start] = true;
            for other in (start + 1)..incidences.len() {
                if used[other] || incidences[other].0 != comp {
                    continue;
                }
                let near_any = members.iter().any(|&m| {
                    let d = (incidences[other].1 - incidences[m].1).abs().as_f64();
                    let d = d.min(n - d);
                    d <= 2.5
                });
                if near_any {
                    members.push(other);
                    used[other] = true;
                }
            }
            // representative: incidence with the smallest distance to contact
            let rep = *members
                .iter()
                .min_by(|&&a, &&b| {
                    incidences[a]
                        .2
                        .partial_cmp(&incidences[b].2)
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap();
            let param = incidences[rep].1;
            let seg = (param.floor().as_f64() as usize).min(comp_len[comp] - 1);
            let t = param - param.floor();
            let lp = &mc.components[comp];
            let nseg = comp_len[comp];
            let curve_at = |p: f64| -> V2<S> {
                let p = p.rem_euclid(nseg as f64);
                let k = p.floor() as isize;
                let frac = S::of(p - p.floor());
                let a = lp.sample_ext(k);
                let b = lp.sample_ext(k + 1);
                add(a, scale(sub(b, a), frac))
            };
            let p0 = param.as_f64();
            let here = curve_at(p0);
            let before = curve_at(p0 - 1.2);
            let after = curve_at(p0 + 1.2);
            let at_vertex = if t.as_f64() < 1e-6 {
                Some(seg)
            } else if t.as_f64() > 1.0 - 1e-6 {
                Some((seg + 1) % nseg)
            } else {
                None
            };
            passages.push(Passage {
                comp,
                seg,
                t,
                point: surface.reduce(here),
                dir_in: sub(here, before),
                dir_out: sub(after, here),
                at_vertex,
            });
        }

        // classify passage pairs
        let min_dist = group
            .iter()
            .map(|&gi| events[gi].dist)
            .fold(S::infinity(), |a, b| a.min(b));
        let mut transverse_pairs = Vec::new();
        let mut tangent_pairs = Vec::new();
        for a in 0..passages.len() {
            for b in (a + 1)..passages.len() {
                let touching = min_dist <= touch_tol;
                if touching {
                    if branches_cross(&passages[a], &passages[b]) {
                        transverse_pairs.push((a, b));
                    } else {
                        tangent_pairs.push((a, b));
                    }
                } else {
                    // near miss: report as tangency only when nearly parallel
                    let ang = line_angle(passages[a].dir_out, passages[b].dir_out);
                    if ang.as_f64().to_degrees() < TANGENCY_ANGLE_DEG {
                        tangent_pairs.push((a, b));
                    }
                }
            }
        }
        if transverse_pairs.is_empty() && tangent_pairs.is_empty() {
            continue;
        }
        clusters.push(ContactCluster {
            point: center,
            passages,
            transverse_pairs,
            tangent_pairs,
        });
    }
    Ok(clusters)
}

/// Angle between the lines spanned by two direction vectors, in radians.
fn line_angle<S: Real>(u: V2<S>, v: V2<S>) -> S {
    let nu = norm(u);
    let nv = norm(v);
    if nu <= S::zero() || nv <= S::zero() {
        return S::zero();
    }
    let c = (dot(u, v) / (nu * nv)).abs().min(S::one());
    c.acos()
}

/// Do two branch passages through a common point cross each other?
/// Test whether the rays of B separate the rays of A in cyclic order.
fn branches_cross<S: Real>(a: &Passage<S>, b: &Passage<S>) -> bool {
    let ang = |v: V2<S>| v[1].as_f64().atan2(v[0].as_f64());
    let a_minus = ang([-a.dir_in[0], -a.dir_in[1]]);
    let a_plus = ang(a.dir_out);
    let b_minus = ang([-b.dir_in[0], -b.dir_in[1]]);
    let b_plus = ang(b.dir_out);
    let in_arc = |x: f64| {
        // is x in the ccw arc from a_minus to a_plus?
        let span = (a_plus - a_minus).rem_euclid(std::f64::consts::TAU);
        let off = (x - a_minus).rem_euclid(std::f64::consts::TAU);
        off < span
    };
    in_arc(b_minus) != in_arc(b_plus)
}

/// All transverse crossings and near-tangencies of a multicurve, clustered
/// into pairwise records. An empty result certifies embeddedness at the
/// given snap tolerance.
pub fn self_intersections<S: Real>(
    surface: &SurfaceModel<S>,
    mc: &Multicurve<S>,
    snap: S,
) -> Result<Vec<Crossing<S>>> {
    let clusters = contact_analysis(surface, mc, snap)?;
    let mut out = Vec::new();
    for cl in &clusters {
        for &(a, b) in &cl.transverse_pairs {
            out.push(Crossing {
                component_a: cl.passages[a].comp,
                segment_a: cl.passages[a].seg,
                component_b: cl.passages[b].comp,
                segment_b: cl.passages[b].seg,
                kind: CrossingKind::Transverse,
                point: cl.point,
            });
        }
        for &(a, b) in &cl.tangent_pairs {
            out.push(Crossing {
                component_a: cl.passages[a].comp,
                segment_a: cl.passages[a].seg,
                component_b: cl.passages[b].comp,
                segment_b: cl.passages[b].seg,
                kind: CrossingKind::Tangency,
                point: cl.point,
            });
        }
    }
    Ok(out)
}

/// Node of the rewiring graph used by `rearrange_double_points`.
#[derive(Clone)]
struct Node<S> {
    /// Unreduced position in the frame of its original component.
    pos: V2<S>,
    /// Duration of the gap from this node to its successor.
    dt: S,
    succ: usize,
    /// Crossing id when this node is a crossing copy.
    crossing: Option<usize>,
}

/// Rearrange every transverse double point into a tangency in the unique
/// way compatible with the orientations: incoming branch A continues along
/// outgoing branch B and vice versa. The segment multiset is preserved
/// exactly; each former crossing becomes a shared sample owned by both
/// branches.
pub fn rearrange_double_points<S: Real>(
    surface: &SurfaceModel<S>,
    mc: &Multicurve<S>,
) -> Result<Multicurve<S>> {
    let snap = S::of(SNAP_DEFAULT);
    let clusters = contact_analysis(surface, mc, snap)?;
    let crossing_clusters: Vec<&ContactCluster<S>> = clusters
        .iter()
        .filter(|c| !c.transverse_pairs.is_empty())
        .collect();
    if crossing_clusters.is_empty() {
        return Ok(mc.clone());
    }
    for cl in &crossing_clusters {
        if cl.passages.len() > 2 {
            return Err(Error::TriplePoint(
                cl.point[0].as_f64(),
                cl.point[1].as_f64(),
            ));
        }
    }

    // splits[comp] = sorted (param in [0,N), crossing id); crossings that
    // would split off a sliver shorter than 3 snap are snapped to the
    // nearest sample so no degenerate segment is created
    let ncomp = mc.components.len();
    let mut splits: Vec<Vec<(f64, usize)>> = vec![Vec::new(); ncomp];
    for (cid, cl) in crossing_clusters.iter().enumerate() {
        for pass in &cl.passages {
            let lp = &mc.components[pass.comp];
            let n = lp.samples.len();
            let seg_len = norm(sub(
                lp.sample_ext(pass.seg as isize + 1),
                lp.samples[pass.seg],
            ))
            .as_f64();
            let mut t = pass.t.as_f64();
            let sliver = (3.0 * snap.as_f64() / seg_len.max(1e-300)).min(0.5);
            if t < sliver {
                t = 0.0;
            } else if t > 1.0 - sliver {
                t = 0.0;
            }
            let param = if pass.t.as_f64() > 1.0 - sliver {
                ((pass.seg + 1) % n) as f64
            } else {
                pass.seg as f64 + t
            };
            splits[pass.comp].push((param, cid));
        }
    }
    for list in &mut splits {
        list.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    }

    // build node lists per component, inserting crossing copies
    let mut nodes: Vec<Node<S>> = Vec::new();
    let mut crossing_nodes: Vec<Vec<usize>> = vec![Vec::new(); crossing_clusters.len()];
    let mut comp_start: Vec<usize> = Vec::new();
    for (ci, lp) in mc.components.iter().enumerate() {
        let n = lp.samples.len();
        let gap_dt = lp.period / S::of(n as f64);
        let start = nodes.len();
        comp_start.push(start);
        let mut split_iter = splits[ci].iter().peekable();
        for k in 0..n {
            nodes.push(Node {
                pos: lp.samples[k],
                dt: gap_dt,
                succ: 0,
                crossing: None,
            });
            let base = nodes.len() - 1;
            // inserted crossing copies inside segment k
            let mut local: Vec<(f64, usize)> = Vec::new();
            while let Some(&&(p, cid)) = split_iter.peek() {
                if p < (k + 1) as f64 {
                    local.push((p, cid));
                    split_iter.next();
                } else {
                    break;
                }
            }
            let a = lp.samples[k];
            let b = lp.sample_ext(k as isize + 1);
            let mut prev_t = 0.0f64;
            let mut prev_idx = base;
            for (p, cid) in local {
                let t = (p - k as f64).clamp(0.0, 1.0);
                if t < 1e-9 {
                    // crossing at the sample itself
                    nodes[prev_idx].crossing = Some(cid);
                    crossing_nodes[cid].push(prev_idx);
                    continue;
                }
                let pos = add(a, scale(sub(b, a), S::of(t)));
                nodes[prev_idx].dt = gap_dt * S::of(t - prev_t);
                nodes.push(Node {
                    pos,
                    dt: gap_dt * S::of(1.0 - t),
                    succ: 0,
                    crossing: Some(cid),
                });
                let idx = nodes.len() - 1;
                crossing_nodes[cid].push(idx);
                prev_t = t;
                prev_idx = idx;
            }
        }
        let end = nodes.len();
        for i in start..end {
            nodes[i].succ = if i + 1 < end { i + 1 } else { start };
        }
    }

    // swap successors at each crossing
    for (cid, owners) in crossing_nodes.iter().enumerate() {
        if owners.len() != 2 {
            let p = crossing_clusters[cid].point;
            return Err(Error::TriplePoint(p[0].as_f64(), p[1].as_f64()));
        }
        let (na, nb) = (owners[0], owners[1]);
        let sa = nodes[na].succ;
        let sb = nodes[nb].succ;
        nodes[na].succ = sb;
        nodes[nb].succ = sa;
    }

    // read off the cycles
    let mut visited = vec![false; nodes.len()];
    let mut components = Vec::new();
    for start in 0..nodes.len() {
        if visited[start] {
            continue;
        }
        let mut order = Vec::new();
        let mut cur = start;
        loop {
            visited[cur] = true;
            order.push(cur);
            cur = nodes[cur].succ;
            if cur == start {
                break;
            }
        }
        // rebuild unreduced samples by accumulating minimal displacements
        let mut samples: Vec<V2<S>> = Vec::with_capacity(order.len());
        let mut period = S::zero();
        let first = surface.reduce(nodes[order[0]].pos);
        samples.push(first);
        for w in 0..order.len() {
            let cur_node = order[w];
            period = period + nodes[cur_node].dt;
            if w + 1 < order.len() {
                let here = surface.reduce(nodes[cur_node].pos);
                let next = surface.reduce(nodes[order[w + 1]].pos);
                let step = surface.displacement(here, next);
                let prev = samples[w];
                samples.push(add(prev, step));
            }
        }
        // pad to the minimum sample count by splitting the longest segments
        while samples.len() < MIN_SAMPLES {
            let m = samples.len();
            let mut longest = 0usize;
            let mut best = S::neg_infinity();
            for k in 0..m {
                let b = if k + 1 < m { samples[k + 1] } else { samples[0] };
                let len = norm(sub(b, samples[k]));
                if len > best {
                    best = len;
                    longest = k;
                }
            }
            let b = if longest + 1 < m {
                samples[longest + 1]
            } else {
                // closing segment: endpoint is first sample shifted by the cycle closure
                let here = surface.reduce(samples[m - 1]);
                let next = surface.reduce(samples[0]);
                add(samples[m - 1], surface.displacement(here, next))
            };
            let mid = scale(add(samples[longest], b), S::of(0.5));
            samples.insert(longest + 1, mid);
        }
        let period = period.max(S::of(PERIOD_FLOOR));
        components.push(LoopPath::new(surface, samples, period)?);
    }
    Multicurve::new(surface, components)
}

/// Chamfer tangency corners: every shared-point contact is separated by
/// cutting each branch corner with a chord at offset `eps/2`, leaving an
/// embedded multicurve within Hausdorff distance `eps` of the input.
pub fn chamfer<S: Real>(
    surface: &SurfaceModel<S>,
    mc: &Multicurve<S>,
    eps: S,
) -> Result<Multicurve<S>> {
    let snap = S::of(SNAP_DEFAULT);
    let clusters = contact_analysis(surface, mc, snap)?;
    if clusters.iter().any(|c| !c.transverse_pairs.is_empty()) {
        return Err(Error::Invalid(
            "chamfer requires tangency-only contacts; rearrange double points first".into(),
        ));
    }
    if clusters.is_empty() {
        return Ok(mc.clone());
    }

    let min_seg = mc
        .components
        .iter()
        .flat_map(|lp| {
            let n = lp.samples.len();
            (0..n).map(move |k| norm(sub(lp.sample_ext(k as isize + 1), lp.samples[k])))
        })
        .fold(S::infinity(), |a, b| a.min(b));
    if eps >= min_seg * S::of(0.5) {
        return Err(Error::EpsTooLarge {
            eps: eps.as_f64(),
            min_segment: min_seg.as_f64(),
        });
    }

    // a cut replaces the samples in (start..=end) with the chord (p1, p2);
    // a nudge moves one vertex
    struct Cut<S> {
        start: usize,
        end: usize,
        p1: V2<S>,
        p2: V2<S>,
    }

    // walk `target` arclength along the polyline from vertex v (sign = -1
    // backward, +1 forward), at most `max_steps` samples; returns the cut
    // point and the last removed sample offset
    let walk = |lp: &LoopPath<S>, v: usize, sign: isize, target: S| -> (V2<S>, usize) {
        let mut acc = S::zero();
        let mut removed = 0usize;
        for step in 1..=3usize {
            let a = lp.sample_ext(v as isize + sign * (step as isize - 1));
            let b = lp.sample_ext(v as isize + sign * step as isize);
            let len = norm(sub(b, a));
            if acc + len >= target || step == 3 {
                let need = (target - acc).max(S::zero()).min(len);
                let frac = if len > S::zero() { need / len } else { S::zero() };
                return (add(a, scale(sub(b, a), frac)), removed);
            }
            acc = acc + len;
            removed = step;
        }
        (lp.sample_ext(v as isize + sign * 3), 2)
    };

    let mut delta = eps * S::of(0.5);
    for _attempt in 0..3 {
        let mut cuts: Vec<Vec<Cut<S>>> = (0..mc.components.len()).map(|_| Vec::new()).collect();
        let mut nudges: Vec<Vec<(usize, V2<S>)>> =
            (0..mc.components.len()).map(|_| Vec::new()).collect();
        for cl in &clusters {
            for (pi, pass) in cl.passages.iter().enumerate() {
                let comp = pass.comp;
                let lp = &mc.components[comp];
                let n = lp.samples.len();
                match pass.at_vertex {
                    Some(v) => {
                        // corner cut at arclength delta along the polyline,
                        // spanning several samples when the local sampling
                        // is finer than the offset
                        let (p1, back) = walk(lp, v, -1, delta);
                        let (p2, fwd) = walk(lp, v, 1, delta);
                        // removed sample range (no cyclic wrap: clamp)
                        let start = v.saturating_sub(back);
                        let end = (v + fwd).min(n - 1);
                        cuts[comp].push(Cut { start, end, p1, p2 });
                    }
                    None => {
                        // near-miss passage: nudge the nearest vertex away from
                        // the other passage of the cluster
                        let other = cl
                            .passages
                            .iter()
                            .enumerate()
                            .find(|(qi, _)| *qi != pi)
                            .map(|(_, p)| p)
                            .unwrap_or(pass);
                        let away = surface.displacement(other.point, pass.point);
                        let na = norm(away);
                        let dir = if na > S::zero() {
                            scale(away, S::one() / na)
                        } else {
                            let d = pass.dir_out;
                            let nd = norm(d).max(S::of(1e-30));
                            [-d[1] / nd, d[0] / nd]
                        };
                        let v = (pass.seg + if pass.t.as_f64() > 0.5 { 1 } else { 0 }) % n;
                        let x = lp.samples[v];
                        nudges[comp].push((v, add(x, scale(dir, delta * S::of(0.5)))));
                    }
                }
            }
        }

        let mut comps = Vec::with_capacity(mc.components.len());
        for (ci, orig) in mc.components.iter().enumerate() {
            let mut samples = orig.samples.clone();
            for (v, p) in &nudges[ci] {
                samples[*v] = *p;
            }
            // apply cuts from the back; skip any cut overlapping an
            // already-applied one (the retry loop handles leftovers)
            cuts[ci].sort_by(|a, b| b.start.cmp(&a.start));
            let mut claimed_low = usize::MAX;
            for cut in &cuts[ci] {
                if cut.end >= claimed_low {
                    continue;
                }
                samples.splice(cut.start..=cut.end, [cut.p1, cut.p2]);
                claimed_low = cut.start;
            }
            if samples.len() < 8 {
                continue;
            }
            comps.push(LoopPath::new(surface, samples, orig.period)?);
        }
        if comps.is_empty() {
            return Err(Error::EpsTooLarge {
                eps: eps.as_f64(),
                min_segment: min_seg.as_f64(),
            });
        }
        let mut candidate = Multicurve::new(surface, comps)?;
        let check_snap = eps * S::of(0.25);
        match self_intersections(surface, &candidate, check_snap) {
            Ok(list) if list.is_empty() => {
                candidate.embedded = true;
                return Ok(candidate);
            }
            Ok(_) | Err(Error::DegenerateSegment { .. }) => {}
            Err(other) => return Err(other),
        }
        delta = (delta * S::of(1.5)).min(eps * S::of(0.95));
    }
    Err(Error::EpsTooLarge {
        eps: eps.as_f64(),
        min_segment: min_seg.as_f64(),
    })
}

/// Chart distance from a point to a segment, with the segment translated to
/// the lattice copy nearest the point.
fn point_segment_distance<S: Real>(
    surface: &SurfaceModel<S>,
    p: V2<S>,
    seg_a: V2<S>,
    seg_d: V2<S>,
) -> S {
    let half = S::of(0.5);
    let mid = add(seg_a, scale(seg_d, half));
    // translate so the segment midpoint is the nearest lattice copy to p
    let to_mid = surface.displacement(p, mid);
    let a = sub(add(p, to_mid), scale(seg_d, half));
    let dd = dot(seg_d, seg_d);
    let t = if dd > S::zero() {
        (dot(sub(p, a), seg_d) / dd).max(S::zero()).min(S::one())
    } else {
        S::zero()
    };
    norm(sub(p, add(a, scale(seg_d, t))))
}

fn one_sided_support_distance<S: Real>(
    surface: &SurfaceModel<S>,
    from: &LoopPath<S>,
    to: &LoopPath<S>,
) -> S {
    let n_to = to.samples.len();
    let mut worst = S::zero();
    for p in &from.samples {
        let mut best = S::infinity();
        for k in 0..n_to {
            let a = to.samples[k];
            let d = sub(to.sample_ext(k as isize + 1), a);
            let dist = point_segment_distance(surface, *p, a, d);
            if dist < best {
                best = dist;
            }
        }
        if best > worst {
            worst = best;
        }
    }
    worst
}

/// Discrete Hausdorff distance between the supports of two loops: max over
/// dense samples of the point-to-polyline chart distance, both ways.
pub fn hausdorff_distance<S: Real>(
    surface: &SurfaceModel<S>,
    a: &LoopPath<S>,
    b: &LoopPath<S>,
) -> S {
    let m = 256usize;
    let ra = resample_uniform(a, m.max(a.len())).unwrap_or_else(|_| a.clone());
    let rb = resample_uniform(b, m.max(b.len())).unwrap_or_else(|_| b.clone());
    one_sided_support_distance(surface, &ra, &rb)
        .max(one_sided_support_distance(surface, &rb, &ra))
}

/// Minimum chart distance between the supports of two loops.
pub fn min_support_distance<S: Real>(
    surface: &SurfaceModel<S>,
    a: &LoopPath<S>,
    b: &LoopPath<S>,
) -> S {
    let m = 256usize;
    let ra = resample_uniform(a, m.max(a.len())).unwrap_or_else(|_| a.clone());
    let rb = resample_uniform(b, m.max(b.len())).unwrap_or_else(|_| b.clone());
    let mut best = S::infinity();
    for p in &ra.samples {
        let n_to = rb.samples.len();
        for k in 0..n_to {
            let a2 = rb.samples[k];
            let d = sub(rb.sample_ext(k as isize + 1), a2);
            let dist = point_segment_distance(surface, *p, a2, d);
            if dist < best {
                best = dist;
            }
        }
    }
    best
}

/// Best max-pointwise distance between two loops over time shifts
/// (sub-sample alignment by local search around the best integer shift).
pub fn aligned_pointwise_distance<S: Real>(
    surface: &SurfaceModel<S>,
    a: &LoopPath<S>,
    b: &LoopPath<S>,
) -> S {
    let m = 256usize;
    let ra = match resample_uniform(a, m) {
        Ok(r) => r,
        Err(_) => return S::infinity(),
    };
    let rb = match resample_uniform(b, m) {
        Ok(r) => r,
        Err(_) => return S::infinity(),
    };
    let eval = |shift: f64| -> S {
        // max_k d(a((k + shift)/m), b(k/m))
        let mut worst = S::zero();
        for k in 0..m {
            let s = (k as f64 + shift).rem_euclid(m as f64);
            let idx = s.floor() as isize;
            let frac = S::of(s - s.floor());
            let pa = add(
                ra.sample_ext(idx),
                scale(sub(ra.sample_ext(idx + 1), ra.sample_ext(idx)), frac),
            );
            let d = surface.chart_distance(pa, rb.samples[k]);
            if d > worst {
                worst = d;
            }
        }
        worst
    };
    let mut best_shift = 0.0f64;
    let mut best = S::infinity();
    for shift in 0..m {
        let v = eval(shift as f64);
        if v < best {
            best = v;
            best_shift = shift as f64;
        }
    }
    // golden-section refine on [best_shift - 1, best_shift + 1]
    let (mut lo, mut hi) = (best_shift - 1.0, best_shift + 1.0);
    let phi = 0.618_033_988_749_895f64;
    for _ in 0..40 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if eval(m1) < eval(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let refined = eval(0.5 * (lo + hi));
    best.min(refined)
}

/// Uniform-speed latitude circle on the torus (`y` fixed, winding `+-1` in x)
/// or on the sphere chart (`z` fixed, winding `+-1` in phi).
pub fn latitude_circle<S: Real>(
    surface: &SurfaceModel<S>,
    level: S,
    positive: bool,
    speed: S,
    n: usize,
) -> Result<LoopPath<S>> {
    let periods = surface.periods();
    let px = periods[0].expect("chart periodic in the first coordinate");
    let sign = if positive { S::one() } else { -S::one() };
    let samples: Vec<V2<S>> = (0..n)
        .map(|k| {
            let t = S::of(k as f64 / n as f64);
            [sign * px * t, level]
        })
        .collect();
    // Riemannian circumference at this level
    let g = surface.metric([S::zero(), level])?;
    let circumference = px * g[0][0].sqrt();
    let period = circumference / speed;
    LoopPath::new(surface, samples, period)
}

/// Longitude circle on the torus (`x` fixed, winding `+-1` in y).
pub fn longitude_circle<S: Real>(
    surface: &SurfaceModel<S>,
    level: S,
    positive: bool,
    speed: S,
    n: usize,
) -> Result<LoopPath<S>> {
    let sign = if positive { S::one() } else { -S::one() };
    let samples: Vec<V2<S>> = (0..n)
        .map(|k| {
            let t = S::of(k as f64 / n as f64);
            [level, sign * t]
        })
        .collect();
    let period = S::one() / speed;
    LoopPath::new(surface, samples, period)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus() -> SurfaceModel<f64> {
        SurfaceModel::flat_torus()
    }

    fn figure_eight(n: usize) -> LoopPath<f64> {
        // lemniscate-style curve around (0.5, 0.5) with one transverse double point
        let surface = torus();
        LoopPath::from_fn(
            &surface,
            |t| {
                let a = 2.0 * std::f64::consts::PI * t;
                [0.5 + 0.22 * a.sin(), 0.5 + 0.15 * a.sin() * a.cos()]
            },
            n,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn resample_identity_and_refinement() {
        let surface = torus();
        let circle = latitude_circle(&surface, 0.25, true, 1.0, 16).unwrap();
        let same = resample_uniform(&circle, 16).unwrap();
        assert_eq!(circle.samples, same.samples);
        let fine = resample_uniform(&circle, 64).unwrap();
        for (k, s) in fine.samples.iter().enumerate() {
            let exact = [k as f64 / 64.0, 0.25];
            assert!((s[0] - exact[0]).abs() < 1e-2 && (s[1] - exact[1]).abs() < 1e-2);
        }
        assert_eq!(homology_class(&surface, &fine).unwrap(), vec![1, 0]);
    }

    #[test]
    fn figure_eight_resample_preserves_class() {
        let surface = torus();
        let f8 = figure_eight(100);
        assert_eq!(homology_class(&surface, &f8).unwrap(), vec![0, 0]);
        let coarse = resample_uniform(&f8, 50).unwrap();
        assert_eq!(homology_class(&surface, &coarse).unwrap(), vec![0, 0]);
    }

    #[test]
    fn homology_class_examples() {
        let surface = torus();
        let lat = latitude_circle(&surface, 0.0, true, 1.0, 32).unwrap();
        assert_eq!(homology_class(&surface, &lat).unwrap(), vec![1, 0]);
        let pair = Multicurve::new(
            &surface,
            vec![
                latitude_circle(&surface, 0.0, true, 1.0, 32).unwrap(),
                latitude_circle(&surface, 0.5, false, 1.0, 32).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(pair.homology, vec![0, 0]);

        let sphere = SurfaceModel::<f64>::round_sphere();
        let eq = latitude_circle(&sphere, 0.0, true, 0.5, 32).unwrap();
        assert_eq!(homology_class(&sphere, &eq).unwrap(), Vec::<i64>::new());
    }

    #[test]
    fn winding_residual_error_on_corrupt_loop() {
        let surface = torus();
        let mut samples: Vec<[f64; 2]> = (0..16).map(|k| [k as f64 / 16.0, 0.0]).collect();
        // corrupt the tail so the closure lands mid-way between integers
        for (k, s) in samples.iter_mut().enumerate() {
            s[0] += 0.4 * k as f64 / 16.0;
        }
        let lp = LoopPath::new(&surface, samples, 1.0).unwrap();
        assert!(matches!(
            homology_class(&surface, &lp),
            Err(Error::WindingResidual(_))
        ));
    }

    #[test]
    fn disjoint_circles_have_no_intersections() {
        let surface = torus();
        let mc = Multicurve::new(
            &surface,
            vec![
                latitude_circle(&surface, 0.2, true, 1.0, 64).unwrap(),
                latitude_circle(&surface, 0.7, false, 1.0, 64).unwrap(),
            ],
        )
        .unwrap();
        let list = self_intersections(&surface, &mc, 1e-6).unwrap();
        assert!(list.is_empty());
    }

    #[test]
    fn figure_eight_has_one_transverse_crossing() {
        let surface = torus();
        let mc = Multicurve::single(&surface, figure_eight(160)).unwrap();
        let list = self_intersections(&surface, &mc, 1e-6).unwrap();
        let transverse: Vec<_> = list
            .iter()
            .filter(|c| c.kind == CrossingKind::Transverse)
            .collect();
        assert_eq!(transverse.len(), 1, "records: {list:?}");
    }

    #[test]
    fn osculating_circles_report_one_tangency() {
        let surface = torus();
        let snap = 1e-4;
        let r = 0.1;
        let gap = snap * 0.5;
        let c1 = LoopPath::from_fn(
            &surface,
            |t| {
                let a = 2.0 * std::f64::consts::PI * t;
                [0.3 - r + r * a.cos(), 0.5 + r * a.sin()]
            },
            96,
            1.0,
        )
        .unwrap();
        let c2 = LoopPath::from_fn(
            &surface,
            |t| {
                let a = 2.0 * std::f64::consts::PI * t;
                [0.3 + r + gap + r * a.cos(), 0.5 + r * a.sin()]
            },
            96,
            1.0,
        )
        .unwrap();
        let mc = Multicurve::new(&surface, vec![c1, c2]).unwrap();
        let list = self_intersections(&surface, &mc, snap).unwrap();
        assert_eq!(list.len(), 1, "{list:?}");
        assert_eq!(list[0].kind, CrossingKind::Tangency);
    }

    #[test]
    fn degenerate_segment_is_rejected() {
        let surface = torus();
        let mut samples: Vec<[f64; 2]> = (0..16).map(|k| [k as f64 / 16.0, 0.3]).collect();
        samples[5] = samples[4]; // zero-length segment
        let lp = LoopPath::new(&surface, samples, 1.0).unwrap();
        let mc = Multicurve::single(&surface, lp).unwrap();
        assert!(matches!(
            self_intersections(&surface, &mc, 1e-6),
            Err(Error::DegenerateSegment { .. })
        ));
    }

    #[test]
    fn rearrange_figure_eight_yields_two_tangent_loops() {
        let surface = torus();
        let mc = Multicurve::single(&surface, figure_eight(160)).unwrap();
        let out = rearrange_double_points(&surface, &mc).unwrap();
        assert_eq!(out.components.len(), 2);
        assert_eq!(out.homology, vec![0, 0]);
        let list = self_intersections(&surface, &out, 1e-6).unwrap();
        assert!(list.iter().all(|c| c.kind == CrossingKind::Tangency), "{list:?}");
        assert!(!list.is_empty());
    }

    #[test]
    fn rearrange_preserves_segment_support() {
        let surface = torus();
        let mc = Multicurve::single(&surface, figure_eight(160)).unwrap();
        let out = rearrange_double_points(&surface, &mc).unwrap();
        // every original sample must appear among the output samples
        let outputs: Vec<[f64; 2]> = out
            .components
            .iter()
            .flat_map(|c| c.samples.iter().map(|s| surface.reduce(*s)))
            .collect();
        for s in &mc.components[0].samples {
            let s = surface.reduce(*s);
            let found = outputs
                .iter()
                .any(|o| surface.chart_distance(*o, s) < 1e-12);
            assert!(found, "lost sample {s:?}");
        }
    }

    #[test]
    fn rearrange_embedded_curve_is_identity() {
        let surface = torus();
        let mc = Multicurve::single(
            &surface,
            latitude_circle(&surface, 0.1, true, 1.0, 64).unwrap(),
        )
        .unwrap();
        let out = rearrange_double_points(&surface, &mc).unwrap();
        assert_eq!(out.components.len(), 1);
        assert_eq!(out.components[0].samples, mc.components[0].samples);
    }

    #[test]
    fn three_double_points_curve_rearranges_to_two_components() {
        // trefoil projection: three transverse double points; the
        // orientation-compatible rearrangement yields two components
        let surface = torus();
        let lp = LoopPath::from_fn(
            &surface,
            |t: f64| {
                let a = 2.0 * std::f64::consts::PI * t;
                [
                    0.5 + 0.08 * (a.sin() + 2.0 * (2.0 * a).sin()),
                    0.5 + 0.08 * (a.cos() - 2.0 * (2.0 * a).cos()),
                ]
            },
            240,
            1.0,
        )
        .unwrap();
        let mc = Multicurve::single(&surface, lp).unwrap();
        let crossings = self_intersections(&surface, &mc, 1e-6).unwrap();
        let n_trans = crossings
            .iter()
            .filter(|c| c.kind == CrossingKind::Transverse)
            .count();
        assert_eq!(n_trans, 3, "fixture should have 3 double points, got {crossings:?}");
        let out = rearrange_double_points(&surface, &mc).unwrap();
        assert_eq!(out.components.len(), 2);
        let after = self_intersections(&surface, &out, 1e-6).unwrap();
        assert!(after.iter().all(|c| c.kind == CrossingKind::Tangency));
    }

    #[test]
    fn chamfer_separates_tangent_pair() {
        let surface = torus();
        let mc = Multicurve::single(&surface, figure_eight(160)).unwrap();
        let tangent = rearrange_double_points(&surface, &mc).unwrap();
        let eps = 1e-3;
        let out = chamfer(&surface, &tangent, eps).unwrap();
        assert!(out.embedded);
        assert_eq!(out.homology, vec![0, 0]);
        // Hausdorff distance from the tangent multicurve is below eps
        for (a, b) in tangent.components.iter().zip(out.components.iter()) {
            assert!(hausdorff_distance(&surface, a, b) < eps);
        }
        let list = self_intersections(&surface, &out, eps / 4.0).unwrap();
        assert!(list.is_empty());
    }

    #[test]
    fn chamfer_of_embedded_multicurve_is_identity() {
        let surface = torus();
        let mc = Multicurve::new(
            &surface,
            vec![
                latitude_circle(&surface, 0.2, true, 1.0, 64).unwrap(),
                latitude_circle(&surface, 0.7, false, 1.0, 64).unwrap(),
            ],
        )
        .unwrap();
        let out = chamfer(&surface, &mc, 1e-3).unwrap();
        assert_eq!(out.components[0].samples, mc.components[0].samples);
        assert_eq!(out.components[1].samples, mc.components[1].samples);
    }

    #[test]
    fn chamfer_eps_too_large() {
        let surface = torus();
        let mc = Multicurve::single(&surface, figure_eight(160)).unwrap();
        let tangent = rearrange_double_points(&surface, &mc).unwrap();
        assert!(matches!(
            chamfer(&surface, &tangent, 0.4),
            Err(Error::EpsTooLarge { .. })
        ));
    }

    #[test]
    fn aligned_distance_detects_phase_shifted_identity() {
        let surface = torus();
        let a = latitude_circle(&surface, 0.0, true, 1.0, 64).unwrap();
        let b = LoopPath::from_fn(&surface, |t| [t + 0.37, 0.0], 96, 1.0).unwrap();
        let d = aligned_pointwise_distance(&surface, &a, &b);
        assert!(d < 1e-6, "aligned distance {d}");
        assert!(hausdorff_distance(&surface, &a, &b) < 1e-6);
    }

    #[test]
    fn iterate_and_reverse() {
        let surface = torus();
        let a = latitude_circle(&surface, 0.0, true, 1.0, 32).unwrap();
        let a3 = a.iterate(3);
        assert_eq!(homology_class(&surface, &a3).unwrap(), vec![3, 0]);
        assert!((a3.period - 3.0).abs() < 1e-15);
        let rev = a.reversed();
        assert_eq!(homology_class(&surface, &rev).unwrap(), vec![-1, 0]);
    }
}
