//! Bounding-chain certificates on a grid CW-structure.
//!
//! A multicurve is rasterized onto a K x K grid of faces (the torus wraps
//! both directions; the sphere chart wraps in phi and carries two extra cap
//! faces at the poles, making the complex a genuine sphere). Null-homology
//! is decided constructively: the connected components of the complement
//! get integer coefficients `n_i` propagated across the curve with the
//! increment rule `n_left = n_right + 1`, and a consistent assignment is a
//! 2-chain `Pi = sum n_i Sigma_i` with `d Pi` equal to the rasterized curve
//! exactly. The decomposition into topological boundaries follows the
//! region iteration `J_{h+1} = union of left-regions over curves whose
//! right-region lies in J_h`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::loops::{self, Multicurve};
use crate::scalar::Real;
use crate::surface::{SurfaceKind, SurfaceModel};

/// Default rasterization grid (faces per side).
pub const DEFAULT_GRID_K: usize = 256;

/// Oriented grid edge: `H(i, j)` runs from vertex `(i, j)` to `(i+1, j)`,
/// `V(i, j)` from `(i, j)` to `(i, j+1)`; indices reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum EdgeId {
    H(u32, u32),
    V(u32, u32),
}

#[derive(Debug, Clone, Copy)]
struct Grid {
    k: usize,
    kind: SurfaceKind,
}

impl Grid {
    fn face_count(&self) -> usize {
        match self.kind {
            SurfaceKind::FlatTorus => self.k * self.k,
            SurfaceKind::RoundSphere => self.k * self.k + 2,
        }
    }

    fn south(&self) -> usize {
        self.k * self.k
    }

    fn north(&self) -> usize {
        self.k * self.k + 1
    }

    fn face(&self, i: i64, j: i64) -> usize {
        let k = self.k as i64;
        match self.kind {
            SurfaceKind::FlatTorus => {
                let i = i.rem_euclid(k);
                let j = j.rem_euclid(k);
                (j * k + i) as usize
            }
            SurfaceKind::RoundSphere => {
                let i = i.rem_euclid(k);
                if j < 0 {
                    self.south()
                } else if j >= k {
                    self.north()
                } else {
                    (j * k + i) as usize
                }
            }
        }
    }

    /// Faces to the left and right of an edge traversed in its positive
    /// direction.
    fn sides(&self, e: EdgeId) -> (usize, usize) {
        match e {
            EdgeId::H(i, j) => (
                self.face(i as i64, j as i64),
                self.face(i as i64, j as i64 - 1),
            ),
            EdgeId::V(i, j) => (
                self.face(i as i64 - 1, j as i64),
                self.face(i as i64, j as i64),
            ),
        }
    }

    /// Canonical edge for a unit step from vertex `(x, y)`; `sign` is +1
    /// when the step agrees with the canonical orientation.
    fn step_edge(&self, x: i64, y: i64, dx: i64, dy: i64) -> (EdgeId, i8) {
        let k = self.k as i64;
        let red_x = |v: i64| v.rem_euclid(k) as u32;
        let red_y = |v: i64| match self.kind {
            SurfaceKind::FlatTorus => v.rem_euclid(k) as u32,
            SurfaceKind::RoundSphere => v.clamp(0, k) as u32,
        };
        match (dx, dy) {
            (1, 0) => (EdgeId::H(red_x(x), red_y(y)), 1),
            (-1, 0) => (EdgeId::H(red_x(x - 1), red_y(y)), -1),
            (0, 1) => (EdgeId::V(red_x(x), red_y(y)), 1),
            (0, -1) => (EdgeId::V(red_x(x), red_y(y - 1)), -1),
            _ => unreachable!("unit steps only"),
        }
    }

    /// Neighbors of a face as `(edge, other_face)` pairs.
    fn neighbors(&self, f: usize) -> Vec<(EdgeId, usize)> {
        let k = self.k;
        if f >= k * k {
            // cap faces of the sphere
            let j = if f == self.south() { 0u32 } else { k as u32 };
            return (0..k)
                .map(|i| {
                    let e = EdgeId::H(i as u32, j);
                    let (l, r) = self.sides(e);
                    let other = if f == l { r } else { l };
                    (e, other)
                })
                .collect();
        }
        let i = (f % k) as i64;
        let j = (f / k) as i64;
        let edges = [
            EdgeId::H(i as u32, j as u32),            // bottom
            EdgeId::H(i as u32, self.red_row(j + 1)), // top
            EdgeId::V(i as u32, j as u32),            // left
            EdgeId::V(self.red_col(i + 1), j as u32), // right
        ];
        edges
            .iter()
            .map(|&e| {
                let (l, r) = self.sides(e);
                let other = if f == l { r } else { l };
                (e, other)
            })
            .collect()
    }

    fn red_col(&self, i: i64) -> u32 {
        i.rem_euclid(self.k as i64) as u32
    }

    fn red_row(&self, j: i64) -> u32 {
        match self.kind {
            SurfaceKind::FlatTorus => j.rem_euclid(self.k as i64) as u32,
            SurfaceKind::RoundSphere => j.clamp(0, self.k as i64) as u32,
        }
    }
}

/// One piece of the decomposition into topological boundaries.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionPiece {
    pub component_indices: Vec<usize>,
    pub irreducible: bool,
    /// The piece's own bounding chain reproduces exactly its edge set.
    pub sub_certificate_verified: bool,
}

/// Integer 2-chain witnessing that a multicurve bounds.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryCertificate {
    pub grid_k: usize,
    /// Region index (0-based) per face, row-major; sphere caps at the end.
    /// Serialized as a run-length encoding.
    #[serde(
        serialize_with = "serialize_rle",
        rename = "region_labels_rle"
    )]
    pub region_of_face: Vec<u32>,
    pub region_count: usize,
    /// Chain coefficient per region, normalized to minimum 0.
    pub chain_coeffs: Vec<i64>,
    /// Region to the left of each component.
    pub left_region: Vec<u32>,
    /// Region to the right of each component.
    pub right_region: Vec<u32>,
    /// `d Pi` reproduces the rasterized multicurve exactly.
    pub verified: bool,
    pub decomposition: Vec<DecompositionPiece>,
}

impl BoundaryCertificate {
    /// Run-length encoding of the face labels (count, label).
    pub fn region_labels_rle(&self) -> Vec<(u32, u32)> {
        rle_encode(&self.region_of_face)
    }
}

fn rle_encode(labels: &[u32]) -> Vec<(u32, u32)> {
    let mut out: Vec<(u32, u32)> = Vec::new();
    for &label in labels {
        match out.last_mut() {
            Some((count, last)) if *last == label => *count += 1,
            _ => out.push((1u32, label)),
        }
    }
    out
}

fn serialize_rle<Ser>(labels: &[u32], serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error>
where
    Ser: serde::Serializer,
{
    serde::Serialize::serialize(&rle_encode(labels), serializer)
}

/// Outcome of the bounding-chain solve.
#[derive(Debug, Clone)]
pub enum BoundingChain {
    Bounds(BoundaryCertificate),
    NotNullHomologous,
}

struct Raster {
    grid: Grid,
    /// Signed edge chain per component.
    component_edges: Vec<Vec<(EdgeId, i8)>>,
    /// Net multiplicity of the full multicurve per edge.
    chain: BTreeMap<EdgeId, i64>,
}

fn rasterize<S: Real>(surface: &SurfaceModel<S>, mc: &Multicurve<S>, k: usize) -> Result<Raster> {
    let grid = Grid {
        k,
        kind: surface.kind,
    };
    let k_i = k as i64;
    let err = |reason: String| Error::Rasterization { k, reason };

    // chart coordinates -> continuous grid coordinates
    let to_grid = |q: [S; 2]| -> (f64, f64) {
        match surface.kind {
            SurfaceKind::FlatTorus => (q[0].as_f64() * k as f64, q[1].as_f64() * k as f64),
            SurfaceKind::RoundSphere => (
                q[0].as_f64() / std::f64::consts::TAU * k as f64,
                (q[1].as_f64() + 1.0) * 0.5 * k as f64,
            ),
        }
    };

    let mut component_edges = Vec::with_capacity(mc.components.len());
    let mut chain: BTreeMap<EdgeId, i64> = BTreeMap::new();
    let mut passes: BTreeMap<EdgeId, u32> = BTreeMap::new();

    for (ci, lp) in mc.components.iter().enumerate() {
        let n = lp.samples.len();
        let mut edges: Vec<(EdgeId, i8)> = Vec::new();
        let vertex = |idx: isize| -> (i64, i64) {
            let q = lp.sample_ext(idx);
            let (gx, gy) = to_grid(q);
            (gx.round() as i64, gy.round() as i64)
        };
        let mut cur = vertex(0);
        let start = cur;
        for idx in 1..=n {
            let target = vertex(idx as isize);
            while cur != target {
                let dx = target.0 - cur.0;
                let dy = target.1 - cur.1;
                // step the axis with the larger remaining offset (x on ties)
                let step = if dy == 0 || (dx != 0 && dx.abs() >= dy.abs()) {
                    (dx.signum(), 0)
                } else {
                    (0, dy.signum())
                };
                if grid.kind == SurfaceKind::RoundSphere {
                    let nj = cur.1 + step.1;
                    if !(0..=k_i).contains(&nj) {
                        return Err(err("curve leaves the admissible sphere band".into()));
                    }
                }
                let (e, s) = grid.step_edge(cur.0, cur.1, step.0, step.1);
                // cancel immediate backtracks: rounding flicker at curve
                // extremes produces +e -e pairs that are not real features
                match edges.last() {
                    Some(&(last_e, last_s)) if last_e == e && last_s == -s => {
                        edges.pop();
                    }
                    _ => edges.push((e, s)),
                }
                cur = (cur.0 + step.0, cur.1 + step.1);
            }
        }
        // cancellation across the cyclic seam
        while edges.len() >= 2 {
            let first = edges[0];
            let last = *edges.last().unwrap();
            if first.0 == last.0 && first.1 == -last.1 {
                edges.pop();
                edges.remove(0);
            } else {
                break;
            }
        }
        for &(e, s) in &edges {
            *chain.entry(e).or_insert(0) += s as i64;
            *passes.entry(e).or_insert(0) += 1;
        }
        // the walk must close up to the winding (exact by closure construction)
        let closure_steps = match surface.kind {
            SurfaceKind::FlatTorus => (
                (lp.closure[0].as_f64() * k as f64).round() as i64,
                (lp.closure[1].as_f64() * k as f64).round() as i64,
            ),
            SurfaceKind::RoundSphere => (
                (lp.closure[0].as_f64() / std::f64::consts::TAU * k as f64).round() as i64,
                0,
            ),
        };
        if (cur.0 - start.0, cur.1 - start.1) != closure_steps {
            return Err(err(format!("component {ci} does not close on the grid")));
        }
        if edges.len() < 4 {
            return Err(err(format!("component {ci} is below the grid resolution")));
        }
        component_edges.push(edges);
    }

    // embedded curves must traverse each edge at most once
    for (e, &count) in &passes {
        let net = chain.get(e).copied().unwrap_or(0);
        if count > 1 || net.unsigned_abs() as u32 != count {
            return Err(Error::Rasterization {
                k,
                reason: "curve features below two grid cells (edge reused)".into(),
            });
        }
    }
    chain.retain(|_, v| *v != 0);

    Ok(Raster {
        grid,
        component_edges,
        chain,
    })
}

struct RegionSolve {
    region_of_face: Vec<u32>,
    region_count: usize,
    /// Consistent coefficients per region, or None when the constraints clash.
    coeffs: Option<Vec<i64>>,
    left_region: Vec<u32>,
    right_region: Vec<u32>,
}

fn solve_regions(raster: &Raster) -> Result<RegionSolve> {
    let grid = raster.grid;
    let nf = grid.face_count();
    let blocked = &raster.chain;

    // region labeling: BFS over faces through unblocked edges
    let mut region_of_face = vec![u32::MAX; nf];
    let mut region_count = 0usize;
    for f0 in 0..nf {
        if region_of_face[f0] != u32::MAX {
            continue;
        }
        let label = region_count as u32;
        region_count += 1;
        let mut queue = std::collections::VecDeque::new();
        region_of_face[f0] = label;
        queue.push_back(f0);
        while let Some(f) = queue.pop_front() {
            for (e, other) in grid.neighbors(f) {
                if blocked.contains_key(&e) {
                    continue;
                }
                if region_of_face[other] == u32::MAX {
                    region_of_face[other] = label;
                    queue.push_back(other);
                }
            }
        }
    }

    // per-component left/right regions, consistent along the component
    let ncomp = raster.component_edges.len();
    let mut left_region = vec![0u32; ncomp];
    let mut right_region = vec![0u32; ncomp];
    for (ci, edges) in raster.component_edges.iter().enumerate() {
        let mut lr: Option<(u32, u32)> = None;
        for &(e, s) in edges {
            let (l, r) = grid.sides(e);
            let (l, r) = if s > 0 { (l, r) } else { (r, l) };
            let pair = (region_of_face[l], region_of_face[r]);
            match lr {
                None => lr = Some(pair),
                Some(prev) if prev == pair => {}
                Some(_) => {
                    return Err(Error::Rasterization {
                        k: grid.k,
                        reason: format!("component {ci} has inconsistent side regions"),
                    })
                }
            }
        }
        let (l, r) = lr.expect("component has edges");
        left_region[ci] = l;
        right_region[ci] = r;
    }

    // propagate the increment rule n_left = n_right + multiplicity
    let mut coeffs: Vec<Option<i64>> = vec![None; region_count];
    let mut consistent = true;
    let mut constraints: Vec<Vec<(u32, i64)>> = vec![Vec::new(); region_count];
    for (e, &net) in &raster.chain {
        let (l, r) = grid.sides(*e);
        let (rl, rr) = (region_of_face[l], region_of_face[r]);
        constraints[rl as usize].push((rr, net));
        constraints[rr as usize].push((rl, -net));
    }
    let mut queue = std::collections::VecDeque::new();
    coeffs[region_of_face[0] as usize] = Some(0);
    queue.push_back(region_of_face[0]);
    'bfs: while let Some(region) = queue.pop_front() {
        let base = coeffs[region as usize].unwrap();
        for &(other, delta) in &constraints[region as usize] {
            let want = base - delta; // n_region = n_other + delta
            match coeffs[other as usize] {
                None => {
                    coeffs[other as usize] = Some(want);
                    queue.push_back(other);
                }
                Some(have) if have == want => {}
                Some(_) => {
                    consistent = false;
                    break 'bfs;
                }
            }
        }
    }
    let solved = if consistent && coeffs.iter().all(|c| c.is_some()) {
        let mut values: Vec<i64> = coeffs.into_iter().map(|c| c.unwrap()).collect();
        let min = values.iter().copied().min().unwrap_or(0);
        for v in &mut values {
            *v -= min;
        }
        Some(values)
    } else {
        None
    };

    Ok(RegionSolve {
        region_of_face,
        region_count,
        coeffs: solved,
        left_region,
        right_region,
    })
}

/// Verify that the 2-chain boundary reproduces the rasterized multicurve:
/// `n_left - n_right` must equal the signed multiplicity on curve edges
/// (off-curve edges vanish by region constancy).
fn verify_boundary(raster: &Raster, solve: &RegionSolve) -> bool {
    let coeffs = match &solve.coeffs {
        Some(c) => c,
        None => return false,
    };
    for (e, &net) in &raster.chain {
        let (l, r) = raster.grid.sides(*e);
        let nl = coeffs[solve.region_of_face[l] as usize];
        let nr = coeffs[solve.region_of_face[r] as usize];
        if nl - nr != net {
            return false;
        }
    }
    true
}

/// One pass of the region iteration, restricted to `remaining` component
/// indices (into the left/right arrays). Returns the extracted boundary.
fn extract_piece(left: &[u32], right: &[u32], remaining: &[usize]) -> Vec<usize> {
    let first = remaining[0];
    let mut in_union: std::collections::BTreeSet<u32> = std::collections::BTreeSet::new();
    in_union.insert(left[first]);
    let mut frontier: Vec<u32> = vec![left[first]];
    while !frontier.is_empty() {
        let mut next: Vec<u32> = Vec::new();
        for &j in &frontier {
            for &i in remaining {
                if right[i] == j && !in_union.contains(&left[i]) {
                    next.push(left[i]);
                }
            }
        }
        next.sort_unstable();
        next.dedup();
        for &j in &next {
            in_union.insert(j);
        }
        frontier = next;
    }
    remaining
        .iter()
        .copied()
        .filter(|&i| in_union.contains(&left[i]) && !in_union.contains(&right[i]))
        .collect()
}

/// Is any proper nonempty sub-collection of the component classes
/// null-homologous? (Subset-sum over the integer homology classes.)
fn has_null_proper_subset(classes: &[Vec<i64>]) -> bool {
    let m = classes.len();
    if m <= 1 {
        return false;
    }
    if m > 20 {
        return true;
    }
    let rank = classes[0].len();
    for mask in 1..((1usize << m) - 1) {
        let mut sum = vec![0i64; rank];
        for (i, class) in classes.iter().enumerate() {
            if mask & (1 << i) != 0 {
                for (acc, v) in sum.iter_mut().zip(class) {
                    *acc += v;
                }
            }
        }
        if sum.iter().all(|&v| v == 0) {
            return true;
        }
    }
    false
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Solve for a bounding chain of an embedded multicurve at grid resolution
/// `k`. Returns the certificate (with its decomposition into topological
/// boundaries) or the `NotNullHomologous` verdict.
pub fn solve_bounding_chain<S: Real>(
    surface: &SurfaceModel<S>,
    mc: &Multicurve<S>,
    k: usize,
) -> Result<BoundingChain> {
    let snap = S::of(loops::SNAP_DEFAULT);
    let crossings = loops::self_intersections(surface, mc, snap)?;
    if !crossings.is_empty() {
        return Err(Error::EmbeddedRequired(format!(
            "{} contact(s) at snap {:.1e}",
            crossings.len(),
            loops::SNAP_DEFAULT
        )));
    }
    if mc.components.is_empty() {
        return Err(Error::Invalid("empty multicurve".into()));
    }

    let raster = rasterize(surface, mc, k)?;
    let solve = solve_regions(&raster)?;
    if solve.coeffs.is_none() {
        return Ok(BoundingChain::NotNullHomologous);
    }
    let verified = verify_boundary(&raster, &solve);
    let coeffs = solve.coeffs.clone().unwrap();

    // decomposition into topological boundaries; regions of the complement
    // merge as pieces are removed, so each pass re-solves the remainder
    let ncomp = mc.components.len();
    let mut remaining: Vec<usize> = (0..ncomp).collect();
    let mut pieces: Vec<Vec<usize>> = Vec::new();
    while !remaining.is_empty() {
        let sub = Multicurve::new(
            surface,
            remaining
                .iter()
                .map(|&i| mc.components[i].clone())
                .collect(),
        )?;
        let sub_raster = rasterize(surface, &sub, k)?;
        let sub_solve = solve_regions(&sub_raster)?;
        if sub_solve.coeffs.is_none() {
            return Err(Error::NotABoundary(
                "remainder of decomposition lost null-homology".into(),
            ));
        }
        let piece_local = extract_piece(
            &sub_solve.left_region,
            &sub_solve.right_region,
            &(0..remaining.len()).collect::<Vec<_>>(),
        );
        let piece: Vec<usize> = piece_local.iter().map(|&li| remaining[li]).collect();
        remaining.retain(|i| !piece.contains(i));
        pieces.push(piece);
    }
    // order by smallest participating region index of the full certificate
    pieces.sort_by_key(|piece| {
        piece
            .iter()
            .map(|&i| solve.left_region[i].min(solve.right_region[i]))
            .min()
            .unwrap_or(u32::MAX)
    });

    let mut decomposition = Vec::with_capacity(pieces.len());
    for piece in pieces {
        let sub = Multicurve::new(
            surface,
            piece.iter().map(|&i| mc.components[i].clone()).collect(),
        )?;
        let sub_raster = rasterize(surface, &sub, k)?;
        let sub_solve = solve_regions(&sub_raster)?;
        let sub_verified = sub_solve.coeffs.is_some() && verify_boundary(&sub_raster, &sub_solve);
        let classes: Vec<Vec<i64>> = piece
            .iter()
            .map(|&i| loops::homology_class(surface, &mc.components[i]))
            .collect::<Result<_>>()?;
        let irreducible = !has_null_proper_subset(&classes);
        decomposition.push(DecompositionPiece {
            component_indices: piece,
            irreducible,
            sub_certificate_verified: sub_verified,
        });
    }

    Ok(BoundingChain::Bounds(BoundaryCertificate {
        grid_k: k,
        region_of_face: solve.region_of_face,
        region_count: solve.region_count,
        chain_coeffs: coeffs,
        left_region: solve.left_region,
        right_region: solve.right_region,
        verified,
        decomposition,
    }))
}

/// Materialize the certificate's decomposition as sub-multicurves, in the
/// certificate's order.
pub fn decompose_topological_boundaries<S: Real>(
    surface: &SurfaceModel<S>,
    mc: &Multicurve<S>,
    cert: &BoundaryCertificate,
) -> Result<Vec<Multicurve<S>>> {
    cert.decomposition
        .iter()
        .map(|piece| {
            Multicurve::new(
                surface,
                piece
                    .component_indices
                    .iter()
                    .map(|&i| mc.components[i].clone())
                    .collect(),
            )
        })
        .collect()
}

/// Irreducibility record for a topological boundary.
#[derive(Debug, Clone, Serialize)]
pub struct IrreducibilityReport {
    pub irreducible: bool,
    pub component_classes: Vec<Vec<i64>>,
    /// `m <= genus + 1`.
    pub bound_ok: bool,
    /// For irreducible pieces with more than one component: classes are
    /// non-zero, primitive, and pairwise distinct.
    pub classes_nonzero: bool,
    pub classes_primitive: bool,
    pub classes_distinct: bool,
}

/// Check irreducibility of a topological boundary: no proper nonempty
/// sub-collection may be null-homologous.
pub fn check_irreducible<S: Real>(
    surface: &SurfaceModel<S>,
    mc: &Multicurve<S>,
    k: usize,
) -> Result<IrreducibilityReport> {
    match solve_bounding_chain(surface, mc, k)? {
        BoundingChain::NotNullHomologous => Err(Error::NotABoundary(
            "multicurve is not null-homologous".into(),
        )),
        BoundingChain::Bounds(_) => {
            let classes: Vec<Vec<i64>> = mc
                .components
                .iter()
                .map(|c| loops::homology_class(surface, c))
                .collect::<Result<_>>()?;
            let m = classes.len();
            let irreducible = !has_null_proper_subset(&classes);
            let bound_ok = m <= surface.genus() + 1;
            let (mut nonzero, mut primitive, mut distinct) = (true, true, true);
            if irreducible && m > 1 {
                for c in &classes {
                    if c.iter().all(|&v| v == 0) {
                        nonzero = false;
                    }
                    let g = c.iter().fold(0i64, |acc, &v| gcd(acc, v));
                    if g != 1 {
                        primitive = false;
                    }
                }
                for i in 0..m {
                    for j in (i + 1)..m {
                        if classes[i] == classes[j] {
                            distinct = false;
                        }
                    }
                }
            }
            Ok(IrreducibilityReport {
                irreducible,
                component_classes: classes,
                bound_ok,
                classes_nonzero: nonzero,
                classes_primitive: primitive,
                classes_distinct: distinct,
            })
        }
    }
}

/// Solve with grid refinement on rasterization failure (K, 2K, 4K), for
/// curves whose chamfered corners fall below one cell.
pub fn solve_with_refinement<S: Real>(
    surface: &SurfaceModel<S>,
    mc: &Multicurve<S>,
    k: usize,
) -> Result<(BoundingChain, usize)> {
    let mut last_err = None;
    for factor in [1usize, 2, 4] {
        match solve_bounding_chain(surface, mc, k * factor) {
            Ok(out) => return Ok((out, k * factor)),
            Err(e @ Error::Rasterization { .. }) => last_err = Some(e),
            Err(other) => return Err(other),
        }
    }
    Err(last_err.unwrap())
}
