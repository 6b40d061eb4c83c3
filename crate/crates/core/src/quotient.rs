use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continua::{FiniteContinuum, TorusGrid};
use crate::error::{Error, Result};
use crate::geometry::{antipodal_canon, cloud_diameter, Coord, Space};
use crate::maps::{anosov_apply, anosov_inverse, MapHandle};
use crate::pnm::GrayImage;

/// Invariance tolerance for grid classes, in pitches.
pub const INVARIANCE_PITCHES: f64 = 8.0;

/// A partition of a torus or sphere grid into grid-connected classes.
#[derive(Clone, Debug)]
pub struct QuotientPartition {
    grid: TorusGrid,
    map: String,
    alpha: f64,
    window: usize,
    class_of: Vec<u32>,
    offsets: Vec<u32>,
    members: Vec<u32>,
    reps: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionMeta {
    pub map: String,
    pub space: Space,
    pub n: usize,
    pub h: f64,
    pub alpha: f64,
    pub window: usize,
    pub classes: usize,
    pub nontrivial_classes: usize,
    pub largest_class: usize,
    pub mesh: f64,
}

impl QuotientPartition {
    /// Canonical partition from per-node root labels: classes are numbered
    /// by their lowest node, representatives are lexicographically least.
    fn from_roots(grid: TorusGrid, map: String, alpha: f64, window: usize, root: &[u32]) -> Self {
        let mut id_of: HashMap<u32, u32> = HashMap::new();
        let mut class_of = Vec::with_capacity(root.len());
        for &r in root {
            let next = id_of.len() as u32;
            class_of.push(*id_of.entry(r).or_insert(next));
        }
        let count = id_of.len();
        let mut offsets = vec![0u32; count + 1];
        for &c in &class_of {
            offsets[c as usize + 1] += 1;
        }
        for c in 0..count {
            offsets[c + 1] += offsets[c];
        }
        let mut fill = offsets.clone();
        let mut members = vec![0u32; class_of.len()];
        for (k, &c) in class_of.iter().enumerate() {
            members[fill[c as usize] as usize] = k as u32;
            fill[c as usize] += 1;
        }
        let reps = (0..count)
            .map(|c| {
                let m = &members[offsets[c] as usize..offsets[c + 1] as usize];
                *m.iter()
                    .min_by(|&&a, &&b| {
                        let (pa, pb) = (grid.node(a as usize), grid.node(b as usize));
                        pa.partial_cmp(&pb).expect("finite grid nodes")
                    })
                    .expect("classes are non-empty")
            })
            .collect();
        Self {
            grid,
            map,
            alpha,
            window,
            class_of,
            offsets,
            members,
            reps,
        }
    }

    /// The all-singleton partition of a grid.
    pub fn singletons(grid: TorusGrid) -> Self {
        let root: Vec<u32> = (0..grid.len() as u32).collect();
        Self::from_roots(grid, "singletons".into(), 0.0, 0, &root)
    }

    /// Partition from arbitrary per-node labels; classes are the
    /// 8-connected components of equal label.
    pub fn from_labels(grid: TorusGrid, labels: &[u64]) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::InvalidParameter("label count does not match grid".into()));
        }
        let mut root = vec![u32::MAX; grid.len()];
        for s in 0..grid.len() {
            if root[s] != u32::MAX {
                continue;
            }
            root[s] = s as u32;
            let mut stack = vec![s];
            while let Some(k) = stack.pop() {
                for nb in grid.neighbors(k) {
                    if root[nb] == u32::MAX && labels[nb] == labels[s] {
                        root[nb] = s as u32;
                        stack.push(nb);
                    }
                }
            }
        }
        Ok(Self::from_roots(grid, "labels".into(), 0.0, 0, &root))
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn class_count(&self) -> usize {
        self.reps.len()
    }

    pub fn class_of(&self, idx: usize) -> usize {
        self.class_of[idx] as usize
    }

    pub fn class_of_point(&self, p: Coord) -> usize {
        self.class_of(self.grid.snap(p))
    }

    pub fn members(&self, class: usize) -> &[u32] {
        &self.members[self.offsets[class] as usize..self.offsets[class + 1] as usize]
    }

    pub fn class(&self, class: usize) -> FiniteContinuum {
        FiniteContinuum::from_grid_nodes(&self.grid, self.members(class).iter().map(|&k| k as usize))
    }

    pub fn classes(&self) -> Vec<FiniteContinuum> {
        (0..self.class_count()).map(|c| self.class(c)).collect()
    }

    pub fn rep_node(&self, class: usize) -> usize {
        self.reps[class] as usize
    }

    pub fn rep(&self, class: usize) -> Coord {
        self.grid.node(self.rep_node(class))
    }

    /// `π(x)`: the representative of the class of the node nearest `x`.
    pub fn project(&self, p: Coord) -> Coord {
        self.rep(self.class_of_point(p))
    }

    pub fn class_diameter(&self, class: usize) -> f64 {
        let m = self.members(class);
        if m.len() < 2 {
            return 0.0;
        }
        let pts: Vec<Coord> = m.iter().map(|&k| self.grid.node(k as usize)).collect();
        cloud_diameter(self.grid.space(), &pts)
    }

    pub fn mesh(&self) -> f64 {
        mesh(self)
    }

    /// Resolution of the quotient: the largest distance between the
    /// representatives of two grid-adjacent classes.
    pub fn quotient_pitch(&self) -> f64 {
        let space = self.grid.space();
        (0..self.grid.len())
            .into_par_iter()
            .map(|k| {
                let c = self.class_of(k);
                self.grid
                    .forward_neighbors(k)
                    .filter(|&nb| self.class_of(nb) != c)
                    .map(|nb| space.dist(self.rep(c), self.rep(self.class_of(nb))))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Union of the classes meeting `set`.
    pub fn saturate(&self, set: &[bool]) -> Vec<bool> {
        let hit: HashSet<u32> = set
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(k, _)| self.class_of[k])
            .collect();
        self.class_of.iter().map(|c| hit.contains(c)).collect()
    }

    pub fn is_saturated(&self, set: &[bool]) -> bool {
        self.saturate(set) == set
    }

    pub fn meta(&self) -> PartitionMeta {
        PartitionMeta {
            map: self.map.clone(),
            space: self.grid.space(),
            n: self.grid.n(),
            h: self.grid.h(),
            alpha: self.alpha,
            window: self.window,
            classes: self.class_count(),
            nontrivial_classes: (0..self.class_count()).filter(|&c| self.members(c).len() > 1).count(),
            largest_class: (0..self.class_count()).map(|c| self.members(c).len()).max().unwrap_or(0),
            mesh: self.mesh(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.meta())?)
    }

    /// Label grid: pixel value = class id + 1.
    pub fn to_pgm(&self) -> Vec<u8> {
        let n = self.grid.n();
        let maxval = self.class_count() as u32;
        GrayImage::from_grid(n, n, maxval.max(1), |i, j| self.class_of[self.grid.index(i, j)] + 1).to_p2()
    }
}

/// `mesh(π) = max` class diameter.
pub fn mesh(p: &QuotientPartition) -> f64 {
    (0..p.class_count())
        .into_par_iter()
        .map(|c| p.class_diameter(c))
        .reduce(|| 0.0, f64::max)
}

/// Largest distance between the orbit of `q` and a precomputed reference
/// orbit over the window, or `None` once it exceeds `bound`. Iterates are
/// visited outward from 0 so hyperbolic separation exits early.
fn orbit_gap(reference: &[Coord], q: Coord, f: &MapHandle, bound: f64) -> Result<Option<f64>> {
    let window = reference.len() / 2;
    let space = f.space();
    let mut gap = space.dist(reference[window], q);
    if gap > bound {
        return Ok(None);
    }
    if f.is_identity() {
        return Ok(Some(gap));
    }
    let (mut fwd, mut bwd) = (q, q);
    for i in 1..=window {
        fwd = f.apply(fwd)?;
        bwd = f.apply_inverse(bwd)?;
        gap = gap
            .max(space.dist(reference[window + i], fwd))
            .max(space.dist(reference[window - i], bwd));
        if gap > bound {
            return Ok(None);
        }
    }
    Ok(Some(gap))
}

/// `(s, t)` with `s·p + t` the lift of `p` nearest `r`: integer shifts on
/// the torus, shifts and the sign flip on the sphere.
fn lift_near(space: Space, p: Coord, r: Coord) -> (f64, Coord) {
    let shift = |s: f64| [(r[0] - s * p[0]).round(), (r[1] - s * p[1]).round()];
    let gap = |s: f64, t: Coord| (s * p[0] + t[0] - r[0]).hypot(s * p[1] + t[1] - r[1]);
    let plus = shift(1.0);
    if space == Space::Sphere {
        let minus = shift(-1.0);
        if gap(-1.0, minus) < gap(1.0, plus) {
            return (-1.0, minus);
        }
    }
    (1.0, plus)
}

/// Per-iterate bounding boxes `[x0, y0, x1, y1]` of a cluster's images,
/// each drawn in the lift of the ambient space nearest the image of the
/// cluster's root. The box diagonal bounds the iterate's diameter.
struct Tube {
    refs: Vec<Coord>,
    boxes: Vec<[f64; 4]>,
    version: u32,
}

impl Tube {
    fn point(orbit: Vec<Coord>) -> Self {
        Self {
            boxes: orbit.iter().map(|p| [p[0], p[1], p[0], p[1]]).collect(),
            refs: orbit,
            version: 0,
        }
    }

    fn union_box(&self, other: &Tube, i: usize, space: Space) -> [f64; 4] {
        let (s, t) = lift_near(space, other.refs[i], self.refs[i]);
        let b = other.boxes[i];
        let moved = if s > 0.0 {
            [b[0] + t[0], b[1] + t[1], b[2] + t[0], b[3] + t[1]]
        } else {
            [t[0] - b[2], t[1] - b[3], t[0] - b[0], t[1] - b[1]]
        };
        let a = self.boxes[i];
        [a[0].min(moved[0]), a[1].min(moved[1]), a[2].max(moved[2]), a[3].max(moved[3])]
    }

    /// Window-wide box diagonal of the union, or `None` above `bound`.
    fn merge_cost(&self, other: &Tube, space: Space, bound: f64) -> Option<f64> {
        let mut cost = 0.0f64;
        for i in 0..self.boxes.len() {
            let b = self.union_box(other, i, space);
            cost = cost.max((b[2] - b[0]).hypot(b[3] - b[1]));
            if cost > bound {
                return None;
            }
        }
        Some(cost)
    }

    fn absorb(&mut self, other: &Tube, space: Space) {
        for i in 0..self.boxes.len() {
            self.boxes[i] = self.union_box(other, i, space);
        }
        self.version += 1;
    }
}

/// Classes of the α-small-continuum relation at resolution.
///
/// Grid-adjacent clusters are merged greedily in order of merge cost, the
/// window-wide bounding-box diagonal of the union, until the cheapest
/// candidate exceeds `α`. The cost bounds `diam f^i(class)` for every
/// iterate in the window, and the merge order does not depend on `α`, so
/// the run at `α₁ ≤ α₂` stops at an intermediate state of the run at `α₂`:
/// partitions refine as `α` decreases.
pub fn alpha_classes(f: &MapHandle, alpha: f64, window: usize, grid: &TorusGrid) -> Result<QuotientPartition> {
    if !(alpha > 4.0 * grid.h()) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} must exceed four grid pitches ({})",
            4.0 * grid.h()
        )));
    }
    if grid.space() != f.space() {
        return Err(Error::SpaceMismatch(grid.space(), f.space()));
    }
    let space = f.space();
    // Identity orbits are constant; one iterate carries all the information.
    let tube_window = if f.is_identity() { 0 } else { window };
    let edges: Vec<Vec<(f64, u32, u32)>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let orbit = f.orbit(grid.node(k), window)?;
            let mut out = Vec::new();
            for nb in grid.forward_neighbors(k) {
                if let Some(c) = orbit_gap(&orbit, grid.node(nb), f, alpha)? {
                    out.push((c, k.min(nb) as u32, k.max(nb) as u32));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut nbrs: Vec<Vec<u32>> = vec![Vec::new(); grid.len()];
    let mut heap = BinaryHeap::new();
    for (c, a, b) in edges.into_iter().flatten() {
        nbrs[a as usize].push(b);
        nbrs[b as usize].push(a);
        heap.push(Reverse((c.to_bits(), a, b, 0u32, 0u32)));
    }

    let mut parent: Vec<u32> = (0..grid.len() as u32).collect();
    let mut tubes: HashMap<u32, Tube> = HashMap::new();
    fn find(parent: &mut [u32], mut k: u32) -> u32 {
        while parent[k as usize] != k {
            let up = parent[parent[k as usize] as usize];
            parent[k as usize] = up;
            k = up;
        }
        k
    }
    let tube_of = |tubes: &mut HashMap<u32, Tube>, k: u32| -> Result<()> {
        if !tubes.contains_key(&k) {
            tubes.insert(k, Tube::point(f.orbit(grid.node(k as usize), tube_window)?));
        }
        Ok(())
    };
    let version = |tubes: &HashMap<u32, Tube>, k: u32| tubes.get(&k).map_or(0, |t| t.version);

    while let Some(Reverse((_, a, b, va, vb))) = heap.pop() {
        if parent[a as usize] != a || parent[b as usize] != b {
            continue;
        }
        if version(&tubes, a) != va || version(&tubes, b) != vb {
            continue;
        }
        tube_of(&mut tubes, a)?;
        tube_of(&mut tubes, b)?;
        let absorbed = tubes.remove(&b).expect("tube present");
        tubes.get_mut(&a).expect("tube present").absorb(&absorbed, space);
        parent[b as usize] = a;

        let mut around = std::mem::take(&mut nbrs[a as usize]);
        around.extend(std::mem::take(&mut nbrs[b as usize]));
        for n in &mut around {
            *n = find(&mut parent, *n);
        }
        around.sort_unstable();
        around.dedup();
        around.retain(|&n| n != a);
        for &c in &around {
            tube_of(&mut tubes, c)?;
            let cost = tubes[&a].merge_cost(&tubes[&c], space, alpha);
            if let Some(cost) = cost {
                let (lo, hi) = (a.min(c), a.max(c));
                heap.push(Reverse((cost.to_bits(), lo, hi, version(&tubes, lo), version(&tubes, hi))));
            }
        }
        nbrs[a as usize] = around;
    }
    let root: Vec<u32> = (0..grid.len() as u32).map(|k| find(&mut parent, k)).collect();
    Ok(QuotientPartition::from_roots(*grid, f.name(), alpha, window, &root))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiconjugacyReport {
    /// `max_x dist(π f(x), g π(x))` over the sampled nodes.
    pub residual: f64,
    pub mesh: f64,
    pub samples: usize,
    /// Largest distance of a class image from the class it is sent to.
    pub max_straddle: f64,
    pub tolerance: f64,
}

/// `g` on class indices: `g(c)` = class containing `f(rep(c))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InducedMap {
    pub image: Vec<u32>,
}

impl InducedMap {
    pub fn apply(&self, class: usize) -> usize {
        self.image[class] as usize
    }
}

/// Quotient dynamics through representatives, checked for invariance:
/// each class must map to within `8h` of a single class.
pub fn induced_map(p: &QuotientPartition, f: &MapHandle) -> Result<(InducedMap, SemiconjugacyReport)> {
    let grid = p.grid();
    if grid.space() != f.space() {
        return Err(Error::SpaceMismatch(grid.space(), f.space()));
    }
    let space = grid.space();
    let tolerance = INVARIANCE_PITCHES * grid.h();
    let image: Vec<u32> = (0..p.class_count())
        .into_par_iter()
        .map(|c| Ok(p.class_of_point(f.apply(p.rep(c))?) as u32))
        .collect::<Result<_>>()?;
    let straddles: Vec<f64> = (0..p.class_count())
        .into_par_iter()
        .map(|c| {
            let m = p.members(c);
            if m.len() < 2 {
                return Ok(0.0);
            }
            let target = image[c] as usize;
            let mut worst = 0.0f64;
            for &k in m {
                let y = f.apply(grid.node(k as usize))?;
                if p.class_of_point(y) == target {
                    continue;
                }
                let d = p
                    .members(target)
                    .iter()
                    .map(|&t| space.dist(y, grid.node(t as usize)))
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(d);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    if let Some((class, &straddle)) = straddles
        .iter()
        .enumerate()
        .find(|(_, &s)| s > tolerance)
    {
        return Err(Error::InvarianceViolation { class, straddle, tolerance });
    }
    let residual = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.node(k);
            let pf = p.project(f.apply(x)?);
            let gp = p.rep(image[p.class_of(k)] as usize);
            Ok(space.dist(pf, gp))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let report = SemiconjugacyReport {
        residual,
        mesh: p.mesh(),
        samples: grid.len(),
        max_straddle: straddles.iter().copied().fold(0.0, f64::max),
        tolerance,
    };
    Ok((InducedMap { image }, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationReport {
    pub sampled: usize,
    pub confined: usize,
    /// Confined nodes found outside the set.
    pub violations: Vec<usize>,
}

/// Sample nodes of `neighbourhood`; any whose orbit stays in it for all
/// `|i| ≤ N` must lie in `set`.
pub fn isolation_probe(
    f: &MapHandle,
    grid: &TorusGrid,
    set: &[bool],
    neighbourhood: &[bool],
    window: usize,
    samples: usize,
    seed: u64,
) -> Result<IsolationReport> {
    if set.len() != grid.len() || neighbourhood.len() != grid.len() {
        return Err(Error::InvalidParameter("mask size does not match grid".into()));
    }
    let pool: Vec<usize> = (0..grid.len()).filter(|&k| neighbourhood[k]).collect();
    if pool.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = (0..samples).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
    let confined: Vec<Option<usize>> = picks
        .par_iter()
        .map(|&k| {
            let orbit = f.orbit(grid.node(k), window)?;
            let inside = orbit.iter().all(|&q| neighbourhood[grid.snap(q)]);
            Ok(inside.then_some(k))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<usize> = confined.into_iter().flatten().collect();
    Ok(IsolationReport {
        sampled: samples,
        confined: kept.len(),
        violations: kept.into_iter().filter(|&k| !set[k]).collect(),
    })
}

/// The wedge `X = ∪ S_m` of round spheres `S_m` of radius `1/m`
/// centred at `(1/m, 0, 0)`, all tangent at the origin, with the collapse
/// `π_n` of every `S_m`, `m > n`, to the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BouquetModel {
    pub n_max: usize,
    pub collapse_level: usize,
}

/// A point of the bouquet: sphere index `m ≥ 1` and a pillowcase chart
/// coordinate (canonical point of the torus modulo `±`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BouquetPoint {
    pub sphere: usize,
    pub chart: Coord,
}

/// Chart point that lands on the tangency point of every sphere.
pub const BOUQUET_ORIGIN_CHART: Coord = [0.0, 0.0];

/// Pillowcase homeomorphism `T²/± → S²`: the two squares `[0,½]×[0,½]`
/// and `[0,½]×[½,1]` go to the two hemispheres, square norm to colatitude;
/// the corner `(0,0)` goes to `(-1, 0, 0)`.
pub fn pillow_to_sphere(p: Coord) -> [f64; 3] {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
    let c = antipodal_canon(p);
    let (x, back) = if c[1] <= 0.5 { (c, false) } else { ([c[0], 1.0 - c[1]], true) };
    let s = [4.0 * (x[0] - 0.25), 4.0 * (x[1] - 0.25)];
    let rho = s[0].abs().max(s[1].abs()).min(1.0);
    let lon = s[1].atan2(s[0]) + FRAC_PI_4 * 7.0;
    let colat = if back { PI - rho * FRAC_PI_2 } else { rho * FRAC_PI_2 };
    let lon = if rho == 0.0 { 0.0 } else { lon };
    [colat.sin() * lon.cos(), colat.sin() * lon.sin(), colat.cos()]
}

/// Per-sphere dynamics: the linear Anosov map pushed to the pillowcase.
pub fn pillow_anosov() -> MapHandle {
    MapHandle::custom(
        "pillow_anosov",
        Space::Sphere,
        |p| Ok(antipodal_canon(anosov_apply(p))),
        |p| Ok(antipodal_canon(anosov_inverse(p))),
    )
}

impl BouquetModel {
    pub fn new(n_max: usize, collapse_level: usize) -> Result<Self> {
        if collapse_level < 1 || n_max < collapse_level {
            return Err(Error::InvalidParameter(format!(
                "need 1 ≤ collapse level ({collapse_level}) ≤ modeled spheres ({n_max})"
            )));
        }
        Ok(Self { n_max, collapse_level })
    }

    /// Smallest level whose mesh `2/(n+1)` is below `epsilon`.
    pub fn level_for(epsilon: f64) -> Result<usize> {
        if !(epsilon > 0.0 && epsilon <= 2.0) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} outside (0, 2]")));
        }
        let mut n = (2.0 / epsilon).floor().max(1.0) as usize;
        while n > 1 && 2.0 / (n as f64) < epsilon {
            n -= 1;
        }
        while 2.0 / (n as f64 + 1.0) >= epsilon {
            n += 1;
        }
        Ok(n)
    }

    pub fn embed(&self, p: BouquetPoint) -> [f64; 3] {
        let m = p.sphere as f64;
        let u = pillow_to_sphere(p.chart);
        [1.0 / m + u[0] / m, u[1] / m, u[2] / m]
    }

    /// `f(m, p) = (m, F(p))`; every sphere is invariant and the origin fixed.
    pub fn apply(&self, p: BouquetPoint) -> Result<BouquetPoint> {
        Ok(BouquetPoint {
            sphere: p.sphere,
            chart: pillow_anosov().apply(p.chart)?,
        })
    }

    /// `π_n`, with `Y_n = S_1 ∪ … ∪ S_n` and collapsed points sent to the
    /// origin of `S_1`.
    pub fn collapse(&self, p: BouquetPoint) -> BouquetPoint {
        if p.sphere > self.collapse_level {
            BouquetPoint {
                sphere: 1,
                chart: BOUQUET_ORIGIN_CHART,
            }
        } else {
            p
        }
    }

    /// `g_n = f|Y_n`.
    pub fn quotient_apply(&self, p: BouquetPoint) -> Result<BouquetPoint> {
        if p.sphere > self.collapse_level {
            return Err(Error::InvalidParameter(format!("sphere {} not in Y_n", p.sphere)));
        }
        self.apply(p)
    }

    /// `max |π_n f(x) − g_n π_n(x)|` over seeded samples on every sphere.
    pub fn semiconjugacy_residual(&self, samples: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let p = BouquetPoint {
                sphere: rng.gen_range(1..=self.n_max),
                chart: [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
            };
            let a = self.embed(self.collapse(self.apply(p)?));
            let b = self.embed(self.quotient_apply(self.collapse(p))?);
            worst = worst.max(dist3(a, b));
        }
        Ok(worst)
    }

    /// Geometric mesh of `π_n`: the largest distance between any two of the
    /// collapsed spheres `S_a`, `S_b` (`n < a ≤ b ≤ n_max`), namely
    /// `|c_a − c_b| + 1/a + 1/b`.
    pub fn geometric_mesh(&self) -> f64 {
        let n = self.collapse_level;
        if n >= self.n_max {
            return 0.0;
        }
        // Every sphere lies inside the ball of S_{n+1}; the outermost pair suffices
        // for the maximum but all pairs with the first collapsed sphere are scanned.
        let a = (n + 1) as f64;
        ((n + 1)..=self.n_max)
            .map(|b| {
                let b = b as f64;
                (1.0 / a - 1.0 / b).abs() + 1.0 / a + 1.0 / b
            })
            .fold(0.0, f64::max)
    }
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn bouquet_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    dist3(a, b)
}

/// `mesh(π_n) = diam(∪_{m>n} S_m ∪ {0}) = 2/(n+1)`.
pub fn bouquet_mesh(n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidParameter("collapse level must be at least 1".into()));
    }
    Ok(2.0 / (n as f64 + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TORUS_DIAMETER;
    use crate::maps::BumpSpec;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n, Space::Torus).unwrap()
    }

    fn assert_partition(p: &QuotientPartition) {
        let mut seen = vec![false; p.grid().len()];
        for c in 0..p.class_count() {
            for &k in p.members(c) {
                assert!(!seen[k as usize], "classes overlap");
                seen[k as usize] = true;
                assert_eq!(p.class_of(k as usize), c);
            }
            assert!(p.members(c).contains(&(p.rep_node(c) as u32)));
            // Connectivity is validated by the continuum constructor.
            let pts = p.class(c).points().to_vec();
            FiniteContinuum::new(p.grid().space(), p.grid().h(), pts).unwrap();
        }
        assert!(seen.into_iter().all(|b| b));
    }

    #[test]
    fn mesh_examples() {
        let g = grid(32);
        assert_eq!(QuotientPartition::singletons(g).mesh(), 0.0);
        let whole = QuotientPartition::from_labels(g, &vec![0; g.len()]).unwrap();
        assert_eq!(whole.class_count(), 1);
        assert!((whole.mesh() - TORUS_DIAMETER).abs() < 1e-12);
        assert_eq!(whole.rep(0), [0.0, 0.0]);
    }

    #[test]
    fn identity_classes_are_ball_tiles() {
        let g = grid(128);
        let alpha = 0.1;
        let p = alpha_classes(&MapHandle::identity(Space::Torus), alpha, 30, &g).unwrap();
        assert_partition(&p);
        let m = p.mesh();
        assert!(m >= alpha / 2.0 - 2.0 * g.h() && m <= alpha, "mesh {m}");
        assert!(p.class_count() > 1);
        let (g_map, rep) = induced_map(&p, &MapHandle::identity(Space::Torus)).unwrap();
        assert_eq!(rep.residual, 0.0);
        assert!((0..p.class_count()).all(|c| g_map.apply(c) == c));
    }

    #[test]
    fn anosov_classes_are_singletons() {
        let g = grid(1024);
        let f = MapHandle::anosov();
        let p = alpha_classes(&f, 0.05, 30, &g).unwrap();
        assert_eq!(p.class_count(), g.len());
        assert_eq!(p.mesh(), 0.0);
        let (_, rep) = induced_map(&p, &f).unwrap();
        assert_eq!(rep.residual, 0.0);
        assert_eq!(rep.max_straddle, 0.0);
    }

    #[test]
    fn singleton_partition_induces_snapped_map() {
        let g = grid(64);
        let f = MapHandle::anosov();
        let p = QuotientPartition::singletons(g);
        let (gm, rep) = induced_map(&p, &f).unwrap();
        assert_eq!(rep.residual, 0.0);
        for c in [0, 5, 700, 4000] {
            assert_eq!(gm.apply(c), g.snap(f.apply(g.node(c)).unwrap()));
        }
    }

    #[test]
    fn da_classes_respect_alpha_and_refine() {
        let g = grid(96);
        let f = MapHandle::da(BumpSpec::tuned().unwrap());
        let coarse = alpha_classes(&f, 0.2, 4, &g).unwrap();
        let fine = alpha_classes(&f, 0.1, 4, &g).unwrap();
        for p in [&coarse, &fine] {
            assert_partition(p);
            assert!(p.mesh() <= p.alpha());
        }
        // Orbit diameters stay below alpha.
        for c in (0..coarse.class_count()).filter(|&c| coarse.members(c).len() > 1).take(20) {
            let rep = crate::continua::orbit_diam_sup(&coarse.class(c), &f, 4).unwrap();
            assert!(rep.sup_diam <= 0.2 + 1e-12);
        }
        // Refinement: every fine class sits inside one coarse class.
        let refines = (0..fine.class_count()).all(|c| {
            let m = fine.members(c);
            m.iter().all(|&k| coarse.class_of(k as usize) == coarse.class_of(m[0] as usize))
        });
        assert!(refines);
    }

    #[test]
    fn invariance_violation_is_reported() {
        let g = grid(32);
        // A vertical-stripe partition is not invariant under the Anosov map.
        let labels: Vec<u64> = (0..g.len()).map(|k| g.cell(k).0 as u64).collect();
        let p = QuotientPartition::from_labels(g, &labels).unwrap();
        match induced_map(&p, &MapHandle::anosov()) {
            Err(Error::InvarianceViolation { straddle, tolerance, .. }) => assert!(straddle > tolerance),
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn alpha_must_exceed_four_pitches() {
        let g = grid(64);
        assert!(alpha_classes(&MapHandle::anosov(), 4.0 / 64.0, 10, &g).is_err());
        let s = TorusGrid::new(64, Space::Sphere).unwrap();
        assert!(alpha_classes(&MapHandle::anosov(), 0.2, 10, &s).is_err());
    }

    #[test]
    fn saturation_and_labels() {
        let g = grid(64);
        let p = alpha_classes(&MapHandle::identity(Space::Torus), 0.2, 1, &g).unwrap();
        let mut set = vec![false; g.len()];
        set[g.index(10, 10)] = true;
        let sat = p.saturate(&set);
        assert!(p.is_saturated(&sat) && !p.is_saturated(&set));
        assert_eq!(sat.iter().filter(|&&b| b).count(), p.members(p.class_of(g.index(10, 10))).len());
        let pgm = GrayImage::parse(&p.to_pgm()).unwrap();
        assert_eq!(pgm.maxval as usize, p.class_count());
        let meta: PartitionMeta = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        assert_eq!(meta.classes, p.class_count());
        assert_eq!(meta.alpha, 0.2);
    }

    #[test]
    fn bouquet_mesh_closed_form_matches_geometry() {
        assert_eq!(bouquet_mesh(1).unwrap(), 1.0);
        assert!((bouquet_mesh(9).unwrap() - 0.2).abs() < 1e-15);
        assert!(bouquet_mesh(0).is_err());
        let mut prev = f64::INFINITY;
        for n in 1..=1000 {
            let closed = bouquet_mesh(n).unwrap();
            let model = BouquetModel::new(n + 50, n).unwrap().geometric_mesh();
            assert!((closed - model).abs() < 1e-12, "n={n}");
            assert!(closed < prev);
            prev = closed;
        }
        assert!(prev < 2.1e-3);
    }

    #[test]
    fn bouquet_collapse_is_a_semiconjugacy() {
        let model = BouquetModel::new(40, 6).unwrap();
        assert_eq!(model.semiconjugacy_residual(2000, 3).unwrap(), 0.0);
        // The tangency point is fixed and embeds at the origin of every sphere.
        for m in [1, 5, 40] {
            let o = BouquetPoint { sphere: m, chart: BOUQUET_ORIGIN_CHART };
            assert!(dist3(model.embed(o), [0.0; 3]) < 1e-15);
            assert_eq!(model.apply(o).unwrap().chart, BOUQUET_ORIGIN_CHART);
            let far = BouquetPoint { sphere: m, chart: [0.5, 0.5] };
            assert!((dist3(model.embed(far), [0.0; 3]) - 2.0 / m as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn bouquet_level_for_epsilon() {
        assert_eq!(BouquetModel::level_for(0.3).unwrap(), 6);
        assert_eq!(BouquetModel::level_for(0.5).unwrap(), 4);
        assert_eq!(BouquetModel::level_for(1.0).unwrap(), 2);
        for eps in [0.05, 0.13, 0.3, 0.7, 1.5] {
            let n = BouquetModel::level_for(eps).unwrap();
            assert!(bouquet_mesh(n).unwrap() < eps);
            assert!(n == 1 || bouquet_mesh(n - 1).unwrap() >= eps);
        }
    }

    #[test]
    fn pillow_chart_is_injective_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Coord> = (0..400).map(|_| antipodal_canon([rng.gen(), rng.gen()])).collect();
        for i in 0..pts.len() {
            let u = pillow_to_sphere(pts[i]);
            assert!((dist3(u, [0.0; 3]) - 1.0).abs() < 1e-12);
            // Antipodal lifts agree.
            let v = pillow_to_sphere([1.0 - pts[i][0], 1.0 - pts[i][1]]);
            assert!(dist3(u, v) < 1e-9);
            for j in 0..i {
                if crate::geometry::sphere_dist(pts[i], pts[j]) > 1e-6 {
                    assert!(dist3(u, pillow_to_sphere(pts[j])) > 1e-9);
                }
            }
        }
        assert!(dist3(pillow_to_sphere([0.0, 0.0]), [-1.0, 0.0, 0.0]) < 1e-12);
    }

    #[test]
    fn isolation_of_a_trapping_set() {
        let g = grid(64);
        let f = MapHandle::da(BumpSpec::tuned().unwrap());
        let hole = f.bump().unwrap().trapping_radius();
        let outside: Vec<bool> = (0..g.len())
            .map(|k| crate::geometry::torus_dist(g.node(k), [0.0, 0.0]) >= hole)
            .collect();
        // Nodes whose backward orbit avoids the hole for the window.
        let window = 6;
        let set: Vec<bool> = (0..g.len())
            .map(|k| {
                let o = f.orbit(g.node(k), window).unwrap();
                o[..=window].iter().all(|&q| outside[g.snap(q)])
            })
            .collect();
        let rep = isolation_probe(&f, &g, &set, &outside, window, 500, 4).unwrap();
        assert!(rep.confined > 0);
        assert!(rep.violations.is_empty(), "{rep:?}");
    }
}
