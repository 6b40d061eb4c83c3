//! Finite-resolution continua on the torus grid, orbit-diameter
//! functionals, and the dynamical-ball flood fill.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cloud_diameter, cloud_diameter_exceeds, wrap_unit, Coord, PointSet, Space};
use crate::maps::MapHandle;

/// Default torus grid: 1024 nodes per side.
pub const DEFAULT_GRID_N: usize = 1024;
/// Default orbit window half-width.
pub const DEFAULT_WINDOW: usize = 30;

const OFFSETS8: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// The `n × n` grid of nodes `(i/n, j/n)` on the torus. With
/// `space == Sphere` the same nodes are read as (not necessarily
/// canonical) representatives of antipodal classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
    space: Space,
}

impl TorusGrid {
    pub fn new(n: usize, space: Space) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("grid needs at least 2 nodes per side, got {n}")));
        }
        if !matches!(space, Space::Torus | Space::Sphere) {
            return Err(Error::InvalidParameter(format!("torus grid cannot carry {space:?}")));
        }
        Ok(Self { n, space })
    }

    /// Grid whose pitch is `h`; `1/h` must be an integer.
    pub fn with_pitch(h: f64, space: Space) -> Result<Self> {
        let n = (1.0 / h).round();
        if !(n >= 2.0) || ((1.0 / h) - n).abs() > 1e-9 * n {
            return Err(Error::InvalidParameter(format!("grid pitch {h} is not 1/n")));
        }
        Self::new(n as usize, space)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn cell(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    #[inline]
    pub fn node(&self, idx: usize) -> Coord {
        let (i, j) = self.cell(idx);
        [i as f64 / self.n as f64, j as f64 / self.n as f64]
    }

    /// Index of the node nearest to `p`.
    #[inline]
    pub fn snap(&self, p: Coord) -> usize {
        let n = self.n as f64;
        let i = (wrap_unit(p[0]) * n).round() as usize % self.n;
        let j = (wrap_unit(p[1]) * n).round() as usize % self.n;
        self.index(i, j)
    }

    #[inline]
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.cell(idx);
        let n = self.n as i64;
        OFFSETS8.iter().map(move |&(di, dj)| {
            let a = (i as i64 + di).rem_euclid(n) as usize;
            let b = (j as i64 + dj).rem_euclid(n) as usize;
            self.index(a, b)
        })
    }

    /// Forward half of the 8-neighbourhood, so every undirected edge is
    /// visited once.
    #[inline]
    pub fn forward_neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.cell(idx);
        let n = self.n as i64;
        [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)].into_iter().map(move |(di, dj)| {
            let a = (i as i64 + di).rem_euclid(n) as usize;
            let b = (j as i64 + dj).rem_euclid(n) as usize;
            self.index(a, b)
        })
    }

    pub fn dist(&self, a: Coord, b: Coord) -> f64 {
        self.space.dist(a, b)
    }
}

/// A grid-connected finite point set standing in for a continuum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PointSet", into = "PointSet")]
pub struct FiniteContinuum {
    pts: PointSet,
}

impl FiniteContinuum {
    /// Validate 8-connectivity of `pts` on the grid of pitch `h`.
    pub fn new(space: Space, h: f64, pts: Vec<Coord>) -> Result<Self> {
        let set = PointSet::new(space, h, pts)?;
        Self::try_from(set)
    }

    pub fn singleton(space: Space, h: f64, p: Coord) -> Self {
        Self {
            pts: PointSet::new(space, h, vec![p]).expect("non-empty"),
        }
    }

    /// Points already known to be grid-connected.
    pub(crate) fn from_connected(space: Space, h: f64, pts: Vec<Coord>) -> Self {
        Self {
            pts: PointSet::new(space, h, pts).expect("non-empty component"),
        }
    }

    /// Built from grid nodes that are connected by construction.
    pub(crate) fn from_grid_nodes(grid: &TorusGrid, nodes: impl IntoIterator<Item = usize>) -> Self {
        let pts: Vec<Coord> = nodes.into_iter().map(|k| grid.node(k)).collect();
        Self {
            pts: PointSet::new(grid.space(), grid.h(), pts).expect("non-empty component"),
        }
    }

    pub fn space(&self) -> Space {
        self.pts.space()
    }

    pub fn h(&self) -> f64 {
        self.pts.h()
    }

    pub fn points(&self) -> &[Coord] {
        self.pts.points()
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_point_set(&self) -> &PointSet {
        &self.pts
    }

    pub fn diameter(&self) -> f64 {
        diameter(self)
    }

    /// Grid segment from `start` along `dir` of length `len`, sampled at
    /// pitch `h` and snapped to grid nodes.
    pub fn segment(grid: &TorusGrid, start: Coord, dir: Coord, len: f64) -> Self {
        let norm = dir[0].hypot(dir[1]);
        let d = [dir[0] / norm, dir[1] / norm];
        let h = grid.h();
        let steps = (len / h).ceil().max(0.0) as usize;
        let mut nodes: Vec<usize> = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = (k as f64 * h).min(len);
            let idx = grid.snap([start[0] + t * d[0], start[1] + t * d[1]]);
            if nodes.last() != Some(&idx) && !nodes.contains(&idx) {
                nodes.push(idx);
            }
        }
        Self::from_grid_nodes(grid, nodes)
    }

    /// Random connected blob grown from `center` by Eden growth inside the
    /// ball of radius `radius`, with at most `max_nodes` nodes.
    pub fn blob<R: Rng>(grid: &TorusGrid, rng: &mut R, center: Coord, radius: f64, max_nodes: usize) -> Self {
        let seed = grid.snap(center);
        let c = grid.node(seed);
        let mut members = vec![seed];
        let mut inside: HashSet<usize> = HashSet::from([seed]);
        let mut frontier: Vec<usize> = Vec::new();
        let mut queued: HashSet<usize> = HashSet::new();
        let push = |k: usize, frontier: &mut Vec<usize>, queued: &mut HashSet<usize>| {
            for nb in grid.neighbors(k) {
                if grid.dist(grid.node(nb), c) <= radius && queued.insert(nb) {
                    frontier.push(nb);
                }
            }
        };
        queued.insert(seed);
        push(seed, &mut frontier, &mut queued);
        while members.len() < max_nodes && !frontier.is_empty() {
            let pick = rng.gen_range(0..frontier.len());
            let k = frontier.swap_remove(pick);
            if inside.insert(k) {
                members.push(k);
                push(k, &mut frontier, &mut queued);
            }
        }
        Self::from_grid_nodes(grid, members)
    }
}

fn lattice_key(space: Space, h: f64, p: Coord) -> (i64, i64) {
    let q = match space {
        Space::Disk => {
            let (s, c) = p[1].sin_cos();
            [p[0] * c, p[0] * s]
        }
        _ => p,
    };
    ((q[0] / h).round() as i64, (q[1] / h).round() as i64)
}

impl TryFrom<PointSet> for FiniteContinuum {
    type Error = Error;

    fn try_from(set: PointSet) -> Result<Self> {
        let h = set.h();
        let space = set.space();
        let wrap = match space {
            Space::Torus | Space::Sphere => Some((1.0 / h).round() as i64),
            _ => None,
        };
        let key = |p: Coord| {
            let (a, b) = lattice_key(space, h, p);
            match wrap {
                Some(n) => (a.rem_euclid(n), b.rem_euclid(n)),
                None => (a, b),
            }
        };
        let keys: HashMap<(i64, i64), usize> =
            set.points().iter().enumerate().map(|(k, &p)| (key(p), k)).collect();
        let start = key(set.points()[0]);
        let mut seen: HashSet<(i64, i64)> = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some((a, b)) = queue.pop_front() {
            for (di, dj) in OFFSETS8 {
                let mut nb = (a + di, b + dj);
                if let Some(n) = wrap {
                    nb = (nb.0.rem_euclid(n), nb.1.rem_euclid(n));
                }
                if keys.contains_key(&nb) && seen.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
        if seen.len() != keys.len() {
            return Err(Error::InvalidParameter(format!(
                "point set is not 8-connected at pitch {h}: {} of {} nodes reachable",
                seen.len(),
                keys.len()
            )));
        }
        Ok(Self { pts: set })
    }
}

impl From<FiniteContinuum> for PointSet {
    fn from(c: FiniteContinuum) -> Self {
        c.pts
    }
}

/// Maximum pairwise distance in the ambient metric.
pub fn diameter(c: &FiniteContinuum) -> f64 {
    cloud_diameter(c.space(), c.points())
}

/// Diameters of `f^i(C)` for `|i| <= N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitDiamReport {
    pub sup_diam: f64,
    pub argmax_iterate: i64,
    pub per_iterate: Vec<f64>,
}

impl OrbitDiamReport {
    pub fn window(&self) -> usize {
        self.per_iterate.len() / 2
    }

    pub fn to_csv(&self) -> String {
        let n = self.window() as i64;
        let mut out = String::from("iterate,diameter\n");
        for (k, d) in self.per_iterate.iter().enumerate() {
            out.push_str(&format!("{},{:.17e}\n", k as i64 - n, d));
        }
        out
    }
}

/// Images `f^i(pts)` for `i = -N..=N`, indexed by `i + N`.
pub fn orbit_images(pts: &[Coord], f: &MapHandle, window: usize) -> Result<Vec<Vec<Coord>>> {
    let mut images = vec![pts.to_vec(); 2 * window + 1];
    if f.is_identity() {
        return Ok(images);
    }
    for i in 1..=window {
        images[window + i] = images[window + i - 1]
            .par_iter()
            .map(|&p| f.apply(p))
            .collect::<Result<_>>()?;
        images[window - i] = images[window - i + 1]
            .par_iter()
            .map(|&p| f.apply_inverse(p))
            .collect::<Result<_>>()?;
    }
    Ok(images)
}

/// Window-truncated `sup_i diam f^i(C)`. Images are point clouds; no
/// connectivity is re-imposed.
pub fn orbit_diam_sup(c: &FiniteContinuum, f: &MapHandle, window: usize) -> Result<OrbitDiamReport> {
    let space = f.space();
    let per_iterate: Vec<f64> = if f.is_identity() {
        vec![cloud_diameter(space, c.points()); 2 * window + 1]
    } else {
        orbit_images(c.points(), f, window)?
            .par_iter()
            .map(|img| cloud_diameter(space, img))
            .collect()
    };
    let (mut arg, mut sup) = (0usize, f64::NEG_INFINITY);
    for (k, &d) in per_iterate.iter().enumerate() {
        if d > sup {
            sup = d;
            arg = k;
        }
    }
    Ok(OrbitDiamReport {
        sup_diam: sup,
        argmax_iterate: arg as i64 - window as i64,
        per_iterate,
    })
}

/// Whether some iterate `|i| <= N` of `C` has diameter above `bound`,
/// visiting iterates in the order `0, 1, -1, 2, -2, …` and stopping at the
/// first witness.
pub fn orbit_diam_exceeds(pts: &[Coord], f: &MapHandle, window: usize, bound: f64) -> Result<bool> {
    let space = f.space();
    if cloud_diameter_exceeds(space, pts, bound) {
        return Ok(true);
    }
    if f.is_identity() {
        return Ok(false);
    }
    let mut fwd = pts.to_vec();
    let mut bwd = pts.to_vec();
    for _ in 0..window {
        for p in fwd.iter_mut() {
            *p = f.apply(*p)?;
        }
        if cloud_diameter_exceeds(space, &fwd, bound) {
            return Ok(true);
        }
        for p in bwd.iter_mut() {
            *p = f.apply_inverse(*p)?;
        }
        if cloud_diameter_exceeds(space, &bwd, bound) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Whether the orbit of `q` stays within `radius` of a precomputed
/// reference orbit over the whole window. Iterates are visited outward
/// from 0 so hyperbolic separation exits early.
pub fn shadows(reference: &[Coord], q: Coord, f: &MapHandle, radius: f64) -> Result<bool> {
    let window = reference.len() / 2;
    let space = f.space();
    if space.dist(reference[window], q) > radius {
        return Ok(false);
    }
    if f.is_identity() {
        return Ok(true);
    }
    let (mut fwd, mut bwd) = (q, q);
    for i in 1..=window {
        fwd = f.apply(fwd)?;
        if space.dist(reference[window + i], fwd) > radius {
            return Ok(false);
        }
        bwd = f.apply_inverse(bwd)?;
        if space.dist(reference[window - i], bwd) > radius {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Flood fill from the grid node nearest `x` over 8-neighbours, admitting
/// `q` iff its orbit stays within `α/2` of the seed's orbit for `|i| <= N`.
///
/// The result is an inner approximation of the class of `x` under the
/// α-small-continuum relation: any two members are joined inside the set
/// and, by the triangle inequality, every iterate has diameter `<= α`.
pub fn dynamical_ball_component(
    x: Coord,
    f: &MapHandle,
    alpha: f64,
    window: usize,
    grid: &TorusGrid,
) -> Result<FiniteContinuum> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must be positive")));
    }
    if grid.h() > alpha / 4.0 + 1e-15 {
        return Err(Error::InvalidParameter(format!(
            "grid pitch {} exceeds alpha/4 = {}",
            grid.h(),
            alpha / 4.0
        )));
    }
    if grid.space() != f.space() {
        return Err(Error::SpaceMismatch(grid.space(), f.space()));
    }
    let seed = grid.snap(x);
    let reference = f.orbit(grid.node(seed), window)?;
    let radius = alpha / 2.0;
    let mut members = vec![seed];
    let mut visited: HashSet<usize> = HashSet::from([seed]);
    let mut queue = VecDeque::from([seed]);
    while let Some(k) = queue.pop_front() {
        for nb in grid.neighbors(k) {
            if visited.insert(nb) && shadows(&reference, grid.node(nb), f, radius)? {
                members.push(nb);
                queue.push_back(nb);
            }
        }
    }
    members.sort_unstable();
    Ok(FiniteContinuum::from_grid_nodes(grid, members))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TORUS_DIAMETER;
    use crate::maps::{unstable_dir, BumpSpec, LAMBDA_U};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n, Space::Torus).unwrap()
    }

    #[test]
    fn diameter_examples() {
        let g = grid(1024);
        let s = FiniteContinuum::singleton(Space::Torus, g.h(), [0.3, 0.4]);
        assert_eq!(s.diameter(), 0.0);
        let seg = FiniteContinuum::segment(&g, [0.95, 0.5], [1.0, 0.0], 99.0 * g.h());
        assert_eq!(seg.len(), 100);
        assert!((seg.diameter() - 99.0 * g.h()).abs() < 1e-12);
        let small = grid(32);
        let all = FiniteContinuum::from_grid_nodes(&small, 0..small.len());
        assert!((all.diameter() - TORUS_DIAMETER).abs() < 1e-12);
    }

    #[test]
    fn connectivity_is_validated() {
        let h = 1.0 / 64.0;
        assert!(FiniteContinuum::new(Space::Torus, h, vec![[0.0, 0.0], [h, h]]).is_ok());
        // Wraps across the seam.
        assert!(FiniteContinuum::new(Space::Torus, h, vec![[0.0, 0.0], [1.0 - h, 0.0]]).is_ok());
        assert!(FiniteContinuum::new(Space::Torus, h, vec![[0.0, 0.0], [2.0 * h, 0.0]]).is_err());
        assert!(FiniteContinuum::new(Space::Plane, 0.1, vec![[0.0, 0.0], [0.1, 0.1], [0.2, 0.1]]).is_ok());
        let json = serde_json::to_string(&FiniteContinuum::singleton(Space::Torus, h, [0.5, 0.25])).unwrap();
        assert!(json.contains("\"space\":\"torus\"") && json.contains("\"h\""));
        let back: FiniteContinuum = serde_json::from_str(&json).unwrap();
        assert_eq!(back.points(), &[[0.5, 0.25]]);
    }

    #[test]
    fn orbit_diam_identity_and_singletons() {
        let g = grid(256);
        let seg = FiniteContinuum::segment(&g, [0.1, 0.2], [0.3, 1.0], 0.05);
        let id = MapHandle::identity(Space::Torus);
        let rep = orbit_diam_sup(&seg, &id, 7).unwrap();
        assert_eq!(rep.per_iterate.len(), 15);
        assert_eq!(rep.sup_diam, seg.diameter());
        let single = FiniteContinuum::singleton(Space::Torus, g.h(), [0.37, 0.11]);
        let rep = orbit_diam_sup(&single, &MapHandle::anosov(), 10).unwrap();
        assert_eq!(rep.sup_diam, 0.0);
    }

    #[test]
    fn unstable_segment_grows_until_saturation() {
        // Off-grid two-point segment along the unstable eigendirection.
        let u = unstable_dir();
        let d = 1e-4;
        let p = [0.3, 0.6];
        let q = [p[0] + d * u[0], p[1] + d * u[1]];
        let c = FiniteContinuum { pts: PointSet::new(Space::Torus, 1e-4, vec![p, q]).unwrap() };
        for n in [0usize, 3, 6, 9] {
            let rep = orbit_diam_sup(&c, &MapHandle::anosov(), n).unwrap();
            let expect = (d * LAMBDA_U.powi(n as i32)).min(TORUS_DIAMETER);
            assert!((rep.sup_diam - expect).abs() < 1e-6 * expect.max(1e-4), "n={n}");
            assert_eq!(rep.argmax_iterate, n as i64);
        }
    }

    #[test]
    fn ball_component_identity_is_metric_ball() {
        let g = grid(128);
        let alpha = 0.1;
        let comp = dynamical_ball_component([0.5, 0.5], &MapHandle::identity(Space::Torus), alpha, 5, &g).unwrap();
        let mut expect = 0;
        for k in 0..g.len() {
            if g.dist(g.node(k), [0.5, 0.5]) <= alpha / 2.0 {
                expect += 1;
            }
        }
        assert_eq!(comp.len(), expect);
    }

    #[test]
    fn ball_component_anosov_is_singleton() {
        let g = grid(1024);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let comp = dynamical_ball_component(x, &MapHandle::anosov(), 0.05, 30, &g).unwrap();
            assert_eq!(comp.len(), 1);
            assert_eq!(comp.points()[0], g.node(g.snap(x)));
        }
    }

    #[test]
    fn ball_component_rejects_coarse_grid() {
        let g = grid(16);
        assert!(dynamical_ball_component([0.0, 0.0], &MapHandle::anosov(), 0.05, 3, &g).is_err());
    }

    #[test]
    fn ball_component_monotone_and_bounded() {
        let g = grid(256);
        let spec = BumpSpec::tuned().unwrap();
        let f = MapHandle::da(spec);
        for x in [[0.01, 0.02], [0.5, 0.3], [0.97, 0.05]] {
            let small = dynamical_ball_component(x, &f, 0.03, 6, &g).unwrap();
            let large = dynamical_ball_component(x, &f, 0.06, 6, &g).unwrap();
            let longer = dynamical_ball_component(x, &f, 0.06, 12, &g).unwrap();
            for p in small.points() {
                assert!(large.points().contains(p));
            }
            for p in longer.points() {
                assert!(large.points().contains(p));
            }
            let rep = orbit_diam_sup(&large, &f, 6).unwrap();
            assert!(rep.sup_diam <= 0.06 + 1e-12);
        }
    }

    #[test]
    fn blobs_are_connected_and_bounded() {
        let g = grid(512);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let b = FiniteContinuum::blob(&g, &mut rng, [0.99, 0.01], 0.02, 300);
            assert!(FiniteContinuum::new(Space::Torus, g.h(), b.points().to_vec()).is_ok());
            assert!(b.diameter() <= 0.04 + 1e-12);
        }
    }

    #[test]
    fn report_csv_has_one_row_per_iterate() {
        let rep = OrbitDiamReport { sup_diam: 1.0, argmax_iterate: 0, per_iterate: vec![0.5, 1.0, 0.5] };
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().starts_with("-1,"));
    }
}
