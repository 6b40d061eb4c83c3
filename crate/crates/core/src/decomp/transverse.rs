use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::twist::chart_projection_diam;
use super::{arc_transversality, decomposition_diam, Decomposition, ParamArc, PlaneMap, TwistSpec};
use crate::error::{Error, Result};
use crate::geometry::{euclid, Coord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransversalizeConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    /// Lipschitz constant of the input map; estimated by sampling if absent.
    pub lipschitz: Option<f64>,
    /// Cell orientations tried in order, in radians.
    pub orientations: Vec<f64>,
    /// Normalized radii of the twist knots.
    pub knot_radii: Vec<f64>,
    /// Twist variants tried on a failing cell before giving up on it.
    pub max_attempts: usize,
    pub displacement_samples: usize,
    /// Longest run, in arclength pitches, a cell edge may spend in one plaque.
    pub edge_run_pitches: f64,
}

impl TransversalizeConfig {
    pub fn new(epsilon: f64, delta: f64, seed: u64) -> Self {
        use std::f64::consts::PI;
        Self {
            epsilon,
            delta,
            seed,
            lipschitz: None,
            orientations: vec![PI / 4.0, PI / 3.0, PI / 6.0, PI / 8.0, 3.0 * PI / 8.0],
            knot_radii: vec![0.4, 0.6, 0.75, 0.85, 0.92],
            max_attempts: 4,
            displacement_samples: 10_000,
            edge_run_pitches: 4.0,
        }
    }
}

/// Twist variants: (direction, amplitude factor).
const VARIANTS: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, 1.0), (1.0, 0.5), (-1.0, 2.0)];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub max: f64,
}

impl Histogram {
    fn of(values: &[f64], bins: usize, top: f64) -> Self {
        let top = top.max(values.iter().copied().fold(0.0, f64::max)).max(f64::MIN_POSITIVE);
        let edges: Vec<f64> = (0..=bins).map(|k| top * k as f64 / bins as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v / top) * bins as f64).floor() as usize;
            counts[b.min(bins - 1)] += 1;
        }
        Self {
            edges,
            counts,
            max: values.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransversalizeReport {
    pub unchanged: bool,
    pub orientation: f64,
    pub cell_side: f64,
    pub gamma: f64,
    pub lipschitz: f64,
    pub cells: usize,
    pub twisted_cells: usize,
    pub retwisted_cells: usize,
    pub diam_before: f64,
    pub diam_after: f64,
    pub histogram_before: Histogram,
    pub histogram_after: Histogram,
    pub sup_displacement: f64,
    pub grid_displacement: f64,
    pub rejected_orientations: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Cell {
    center: Coord,
    spec: TwistSpec,
    sign: f64,
}

/// Square cells of side `side` in a frame rotated by `orientation`,
/// clipped to the unit disk; each clipped cell is convex, hence star-shaped
/// about its centre, and carries a twist in normalized polar coordinates.
#[derive(Clone, Debug)]
pub struct CellChart {
    orientation: f64,
    side: f64,
    offset: Coord,
    cells: HashMap<(i64, i64), Cell>,
}

impl CellChart {
    fn frame(&self, p: Coord) -> Coord {
        let (s, c) = self.orientation.sin_cos();
        [c * p[0] + s * p[1] + self.offset[0], -s * p[0] + c * p[1] + self.offset[1]]
    }

    fn unframe(&self, u: Coord) -> Coord {
        let (s, c) = self.orientation.sin_cos();
        let (a, b) = (u[0] - self.offset[0], u[1] - self.offset[1]);
        [c * a - s * b, s * a + c * b]
    }

    pub fn key(&self, p: Coord) -> (i64, i64) {
        let u = self.frame(p);
        ((u[0] / self.side).floor() as i64, (u[1] / self.side).floor() as i64)
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Distance from `c` to the boundary of (cell ∩ disk) along angle `phi`.
    fn radial(&self, key: (i64, i64), c: Coord, phi: f64) -> f64 {
        let d = [phi.cos(), phi.sin()];
        let (s, co) = self.orientation.sin_cos();
        let cu = self.frame(c);
        let du = [co * d[0] + s * d[1], -s * d[0] + co * d[1]];
        let lo = [key.0 as f64 * self.side, key.1 as f64 * self.side];
        let mut t = f64::INFINITY;
        for i in 0..2 {
            if du[i] > 1e-15 {
                t = t.min((lo[i] + self.side - cu[i]) / du[i]);
            } else if du[i] < -1e-15 {
                t = t.min((lo[i] - cu[i]) / du[i]);
            }
        }
        let cd = c[0] * d[0] + c[1] * d[1];
        let disk = -cd + (cd * cd - (c[0] * c[0] + c[1] * c[1] - 1.0)).max(0.0).sqrt();
        t.min(disk).max(0.0)
    }

    /// Normalized polar coordinates `(ρ, φ, R(φ))` of `p` in its cell.
    fn polar(&self, key: (i64, i64), cell: &Cell, p: Coord) -> Option<(f64, f64, f64)> {
        let v = [p[0] - cell.center[0], p[1] - cell.center[1]];
        let r = v[0].hypot(v[1]);
        if r == 0.0 {
            return None;
        }
        let phi = v[1].atan2(v[0]);
        let big = self.radial(key, cell.center, phi);
        if big <= 0.0 {
            return None;
        }
        Some(((r / big).min(1.0), phi, big))
    }

    /// `g_j` (sign = 1) or `g_j⁻¹` (sign = -1) on the cell containing `p`.
    fn twist(&self, p: Coord, sign: f64) -> Coord {
        let key = self.key(p);
        let Some(cell) = self.cells.get(&key) else { return p };
        let Some((rho, phi, _)) = self.polar(key, cell, p) else { return p };
        let s = sign * cell.sign * cell.spec.profile(rho);
        if s == 0.0 {
            return p;
        }
        let phi2 = phi + s;
        let big = self.radial(key, cell.center, phi2);
        [cell.center[0] + rho * big * phi2.cos(), cell.center[1] + rho * big * phi2.sin()]
    }

    /// Boundary polygon of the unclipped square of `key`.
    fn square(&self, key: (i64, i64)) -> [Coord; 4] {
        let (a, b) = (key.0 as f64 * self.side, key.1 as f64 * self.side);
        let s = self.side;
        [
            self.unframe([a, b]),
            self.unframe([a + s, b]),
            self.unframe([a + s, b + s]),
            self.unframe([a, b + s]),
        ]
    }
}

/// `h' = h ∘ g_j` on cell `j`.
pub struct CellTwistMap<'a> {
    base: &'a dyn PlaneMap,
    chart: Option<CellChart>,
}

impl<'a> CellTwistMap<'a> {
    pub fn unchanged(base: &'a dyn PlaneMap) -> Self {
        Self { base, chart: None }
    }

    pub fn chart(&self) -> Option<&CellChart> {
        self.chart.as_ref()
    }
}

impl PlaneMap for CellTwistMap<'_> {
    fn forward(&self, p: Coord) -> Coord {
        match &self.chart {
            Some(c) => self.base.forward(c.twist(p, 1.0)),
            None => self.base.forward(p),
        }
    }
    fn inverse(&self, p: Coord) -> Coord {
        match &self.chart {
            Some(c) => c.twist(self.base.inverse(p), -1.0),
            None => self.base.inverse(p),
        }
    }
}

fn random_disk_point(rng: &mut ChaCha8Rng, radius: f64) -> Coord {
    loop {
        let p = [rng.gen_range(-radius..radius), rng.gen_range(-radius..radius)];
        if p[0].hypot(p[1]) <= radius {
            return p;
        }
    }
}

fn estimate_lipschitz(hmap: &dyn PlaneMap, rng: &mut ChaCha8Rng) -> f64 {
    let step = 1e-2;
    let mut best = 0.0f64;
    for _ in 0..4000 {
        let x = random_disk_point(rng, 1.0 - step);
        let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let y = [x[0] + step * t.cos(), x[1] + step * t.sin()];
        best = best.max(euclid(hmap.forward(x), hmap.forward(y)) / step);
    }
    1.1 * best.max(1e-9)
}

/// Run lengths (arclength) of a cell edge inside single plaques, in pitches.
fn edge_run(chart: &CellChart, key: (i64, i64), q: &Decomposition) -> Result<f64> {
    let arc = ParamArc::polyline(&chart.square(key), q.h() / 2.0, true)?;
    let perimeter = 4.0 * chart.side;
    Ok(arc_transversality(&arc, q)? * perimeter / q.h())
}

/// Build `h'` with `sup|h' − h| < δ` and every component of
/// `h'*P ∩ Q` of diameter `< ε`, by twisting `h` on small cells.
///
/// The cells have diameter below `γ = 0.9·min(ε, δ/L)`, so the displacement
/// bound holds by construction. Per cell, the twist knots follow the
/// measured radial-projection diameters `ε_n` of both decompositions in the
/// cell's normalized chart, with `s_n = 2ε_n + margin`. Cells still
/// carrying a component of diameter `≥ ε` are retried with reversed,
/// halved and doubled twists; orientations whose cell edges run along
/// plaques are skipped.
pub fn transversalize<'a>(
    hmap: &'a dyn PlaneMap,
    p: &Decomposition,
    q: &Decomposition,
    cfg: &TransversalizeConfig,
) -> Result<(CellTwistMap<'a>, TransversalizeReport)> {
    if !(cfg.epsilon > 0.0 && cfg.delta > 0.0) {
        return Err(Error::InvalidParameter("epsilon and delta must be positive".into()));
    }
    super::is_meagre(p)?;
    super::is_meagre(q)?;
    let lat = *q.lattice();
    let hp = p.pullback(hmap)?;
    let before = hp.intersect(q)?;
    let before_d = before.plaque_diameters();
    let diam_before = before_d.iter().copied().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lipschitz = match cfg.lipschitz {
        Some(l) => l,
        None => estimate_lipschitz(hmap, &mut rng),
    };
    let gamma = 0.9 * cfg.epsilon.min(cfg.delta / lipschitz);
    let side = gamma / std::f64::consts::SQRT_2;
    let histogram_top = cfg.epsilon.max(diam_before);

    let displacement = |map: &dyn PlaneMap, rng: &mut ChaCha8Rng| {
        let samples: Vec<Coord> = (0..cfg.displacement_samples).map(|_| random_disk_point(rng, 1.0)).collect();
        samples
            .par_iter()
            .map(|&x| euclid(map.forward(x), hmap.forward(x)))
            .reduce(|| 0.0, f64::max)
    };

    if diam_before < cfg.epsilon {
        let out = CellTwistMap::unchanged(hmap);
        let hist = Histogram::of(&before_d, 20, histogram_top);
        let report = TransversalizeReport {
            unchanged: true,
            orientation: 0.0,
            cell_side: 0.0,
            gamma,
            lipschitz,
            cells: 0,
            twisted_cells: 0,
            retwisted_cells: 0,
            diam_before,
            diam_after: diam_before,
            histogram_before: hist.clone(),
            histogram_after: hist,
            sup_displacement: 0.0,
            grid_displacement: 0.0,
            rejected_orientations: Vec::new(),
        };
        return Ok((out, report));
    }

    let offset = [rng.gen_range(0.0..side), rng.gen_range(0.0..side)];
    let mut rejected = Vec::new();
    let mut last_failure: Vec<(i64, i64)> = Vec::new();
    for &orientation in &cfg.orientations {
        let mut chart = CellChart {
            orientation,
            side,
            offset,
            cells: HashMap::new(),
        };
        // Group domain nodes by cell.
        let keys: Vec<(i64, i64)> = (0..lat.len()).into_par_iter().map(|k| chart.key(lat.node(k))).collect();
        let mut groups: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for k in 0..lat.len() {
            if q.mask()[k] {
                groups.entry(keys[k]).or_default().push(k);
            }
        }
        // Edges of interior cells must cross both families transversally.
        let interior: Vec<(i64, i64)> = groups
            .keys()
            .copied()
            .filter(|&key| chart.square(key).iter().all(|c| c[0].hypot(c[1]) < 1.0 - 2.0 * lat.h))
            .collect();
        let edge_ok = interior
            .par_iter()
            .map(|&key| Ok(edge_run(&chart, key, q)?.max(edge_run(&chart, key, &hp)?) <= cfg.edge_run_pitches))
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .all(|b| b);
        if !edge_ok {
            rejected.push(orientation);
            continue;
        }
        let margin_for = |big: f64| lat.h / big.max(lat.h);
        let cells: Vec<((i64, i64), Cell)> = groups
            .par_iter()
            .map(|(&key, nodes)| {
                let [c0, _, c2, _] = chart.square(key);
                let square_centre = [(c0[0] + c2[0]) / 2.0, (c0[1] + c2[1]) / 2.0];
                let inside = square_centre[0].hypot(square_centre[1]) + side * std::f64::consts::FRAC_1_SQRT_2 <= 1.0;
                let centre = if inside {
                    square_centre
                } else {
                    let pts: Vec<Coord> = nodes.iter().map(|&k| lat.node(k)).collect();
                    let n = pts.len() as f64;
                    [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n]
                };
                let mut cell = Cell {
                    center: centre,
                    spec: TwistSpec::zero(),
                    sign: 1.0,
                };
                if nodes.len() < 5 {
                    return (key, cell);
                }
                let polar: Vec<(usize, f64, f64)> = nodes
                    .iter()
                    .map(|&k| match chart.polar(key, &cell, lat.node(k)) {
                        Some((rho, phi, _)) => (k, rho, phi),
                        None => (k, 0.0, 0.0),
                    })
                    .collect();
                let tagged = |d: &Decomposition| -> Vec<(usize, f64, f64, u32)> {
                    polar.iter().map(|&(k, r, f)| (k, r, f, d.plaque_ids()[k])).collect()
                };
                let (tq, tp) = (tagged(q), tagged(&hp));
                let big = 0.5 * side;
                let margin = margin_for(big);
                let eps: Vec<f64> = cfg
                    .knot_radii
                    .iter()
                    .map(|&r| chart_projection_diam(&lat, &tq, r).max(chart_projection_diam(&lat, &tp, r)) + margin)
                    .collect();
                cell.spec = TwistSpec::separating(&cfg.knot_radii, &eps, margin).expect("valid knots");
                (key, cell)
            })
            .collect();
        chart.cells = cells.into_iter().collect();
        let base_specs: HashMap<(i64, i64), TwistSpec> =
            chart.cells.iter().map(|(k, c)| (*k, c.spec.clone())).collect();

        let mut attempt: HashMap<(i64, i64), usize> = HashMap::new();
        let mut retwisted = BTreeSet::new();
        loop {
            let candidate = CellTwistMap {
                base: hmap,
                chart: Some(chart.clone()),
            };
            let after = p.pullback(&candidate)?.intersect(q)?;
            let diams = after.plaque_diameters();
            let failing: BTreeSet<(i64, i64)> = diams
                .iter()
                .enumerate()
                .filter(|(_, &d)| d >= cfg.epsilon)
                .flat_map(|(id, _)| after.plaque_nodes(id).iter().map(|&k| keys[k as usize]).collect::<Vec<_>>())
                .collect();
            if failing.is_empty() {
                let grid_displacement = (0..lat.len())
                    .into_par_iter()
                    .filter(|&k| q.mask()[k])
                    .map(|k| {
                        let x = lat.node(k);
                        euclid(candidate.forward(x), hmap.forward(x))
                    })
                    .reduce(|| 0.0, f64::max);
                let sup_displacement = displacement(&candidate, &mut rng);
                let report = TransversalizeReport {
                    unchanged: false,
                    orientation,
                    cell_side: side,
                    gamma,
                    lipschitz,
                    cells: chart.cells.len(),
                    twisted_cells: chart.cells.values().filter(|c| c.spec.amplitude() > 0.0).count(),
                    retwisted_cells: retwisted.len(),
                    diam_before,
                    diam_after: decomposition_diam(&after),
                    histogram_before: Histogram::of(&before_d, 20, histogram_top),
                    histogram_after: Histogram::of(&diams, 20, histogram_top),
                    sup_displacement,
                    grid_displacement,
                    rejected_orientations: rejected,
                };
                return Ok((candidate, report));
            }
            let mut exhausted = Vec::new();
            for key in &failing {
                let a = attempt.entry(*key).or_insert(0);
                *a += 1;
                if *a >= cfg.max_attempts.min(VARIANTS.len()) {
                    exhausted.push(*key);
                    continue;
                }
                retwisted.insert(*key);
                let (sign, factor) = VARIANTS[*a];
                if let Some(cell) = chart.cells.get_mut(key) {
                    cell.sign = sign;
                    cell.spec = base_specs[key].scaled(factor);
                }
            }
            if !exhausted.is_empty() {
                last_failure = exhausted;
                rejected.push(orientation);
                break;
            }
        }
    }
    Err(Error::CellBudgetExhausted { cells: last_failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{Domain, IdentityMap};

    #[test]
    fn transverse_pair_returns_map_unchanged() {
        let dom = Domain::Disk { n: 64 };
        let v = Decomposition::builtin("vertical", dom).unwrap();
        let h = Decomposition::builtin("horizontal", dom).unwrap();
        let (map, rep) = transversalize(&IdentityMap, &v, &h, &TransversalizeConfig::new(0.1, 0.05, 1)).unwrap();
        assert!(rep.unchanged);
        assert_eq!(map.forward([0.3, 0.2]), [0.3, 0.2]);
    }

    #[test]
    fn cell_twist_is_a_boundary_fixing_homeomorphism() {
        let mut chart = CellChart {
            orientation: std::f64::consts::FRAC_PI_4,
            side: 0.2,
            offset: [0.03, 0.07],
            cells: HashMap::new(),
        };
        let spec = TwistSpec::new(vec![(0.4, 3.0), (0.92, 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Coord> = (0..2000).map(|_| random_disk_point(&mut rng, 1.0)).collect();
        let mut cells = HashMap::new();
        for p in &pts {
            let key = chart.key(*p);
            if cells.contains_key(&key) {
                continue;
            }
            let [c0, _, c2, _] = chart.square(key);
            let c = [(c0[0] + c2[0]) / 2.0, (c0[1] + c2[1]) / 2.0];
            if chart.key(c) == key && c[0].hypot(c[1]) < 1.0 {
                cells.insert(key, Cell { center: c, spec: spec.clone(), sign: 1.0 });
            }
        }
        chart.cells = cells;
        let pts: Vec<Coord> = pts.into_iter().filter(|p| chart.cells.contains_key(&chart.key(*p))).collect();
        for p in pts {
            let q = chart.twist(p, 1.0);
            assert_eq!(chart.key(q), chart.key(p), "cell preserved");
            assert!(q[0].hypot(q[1]) <= 1.0 + 1e-12);
            let back = chart.twist(q, -1.0);
            assert!(euclid(back, p) < 1e-9, "{p:?} -> {q:?} -> {back:?}");
        }
        // Points on a square edge are fixed.
        let key = chart.key([0.1, 0.1]);
        if chart.cells.contains_key(&key) {
            let [c0, c1, _, _] = chart.square(key);
            let e = [(c0[0] + c1[0]) / 2.0, (c0[1] + c1[1]) / 2.0];
            assert!(euclid(chart.twist(e, 1.0), e) < 1e-9);
        }
    }

    #[test]
    fn vertical_self_pair_is_broken_up() {
        let dom = Domain::Disk { n: 128 };
        let v = Decomposition::builtin("vertical", dom).unwrap();
        let cfg = TransversalizeConfig::new(0.1, 0.05, 7);
        let (map, rep) = transversalize(&IdentityMap, &v, &v, &cfg).unwrap();
        assert!(!rep.unchanged);
        assert!(rep.diam_after < 0.1, "{rep:?}");
        assert!(rep.sup_displacement < 0.05 && rep.grid_displacement < 0.05);
        let after = v.pullback(&map).unwrap().intersect(&v).unwrap();
        assert!(decomposition_diam(&after) < 0.1);
    }
}
