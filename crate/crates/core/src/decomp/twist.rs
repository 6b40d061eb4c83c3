use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Decomposition, Lattice, PlaneMap};
use crate::error::{Error, Result};
use crate::geometry::{arc_diameter, Coord, DiskPoint};

/// Radial twist profile `s: [0,1] → [0, ε*]`, piecewise linear through
/// `(0,0)`, the knots `(r_n, s_n)` and `(1,0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistSpec {
    knots: Vec<(f64, f64)>,
}

impl TwistSpec {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        let mut prev = 0.0;
        for &(r, s) in &knots {
            if !(r > prev && r < 1.0) {
                return Err(Error::InvalidParameter(format!("twist knot radius {r} out of order or outside (0,1)")));
            }
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("twist amplitude {s} must be finite and non-negative")));
            }
            prev = r;
        }
        Ok(Self { knots })
    }

    pub fn zero() -> Self {
        Self { knots: Vec::new() }
    }

    /// Knots with `s_n = 2 ε_n + margin`, so `s(r_n) > 2 ε_n` whenever
    /// `margin > 0`.
    pub fn separating(radii: &[f64], eps: &[f64], margin: f64) -> Result<Self> {
        if radii.len() != eps.len() {
            return Err(Error::InvalidParameter("radii and epsilons differ in length".into()));
        }
        Self::new(radii.iter().zip(eps).map(|(&r, &e)| (r, 2.0 * e + margin)).collect())
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Whether `s(r_n) > 2 ε_n` at every knot.
    pub fn separates(&self, eps: &[f64]) -> bool {
        self.knots.len() == eps.len() && self.knots.iter().zip(eps).all(|(&(r, _), &e)| self.profile(r) > 2.0 * e)
    }

    /// `ε* = max s`.
    pub fn amplitude(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(0.0, f64::max)
    }

    pub fn profile(&self, r: f64) -> f64 {
        if !(r > 0.0 && r < 1.0) || self.knots.is_empty() {
            return 0.0;
        }
        let mut lo = (0.0, 0.0);
        for &k in self.knots.iter().chain(std::iter::once(&(1.0, 0.0))) {
            if r <= k.0 {
                let t = (r - lo.0) / (k.0 - lo.0);
                return lo.1 + t * (k.1 - lo.1);
            }
            lo = k;
        }
        0.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            knots: self.knots.iter().map(|&(r, s)| (r, s * factor)).collect(),
        }
    }
}

/// `h(r, θ) = (r, θ + s(r))`.
pub fn twist_apply(spec: &TwistSpec, p: DiskPoint) -> DiskPoint {
    DiskPoint::new(p.r(), p.theta() + spec.profile(p.r())).expect("radius preserved")
}

/// `h⁻¹(r, θ) = (r, θ − s(r))`.
pub fn twist_inverse(spec: &TwistSpec, p: DiskPoint) -> DiskPoint {
    DiskPoint::new(p.r(), p.theta() - spec.profile(p.r())).expect("radius preserved")
}

/// The twist as a map of the closed unit disk in Cartesian coordinates.
#[derive(Clone, Debug)]
pub struct TwistMap(pub TwistSpec);

impl TwistMap {
    fn turn(&self, p: Coord, sign: f64) -> Coord {
        let r = p[0].hypot(p[1]);
        let s = sign * self.0.profile(r.min(1.0));
        if s == 0.0 {
            return p;
        }
        let (sn, c) = s.sin_cos();
        [c * p[0] - sn * p[1], sn * p[0] + c * p[1]]
    }
}

impl PlaneMap for TwistMap {
    fn forward(&self, p: Coord) -> Coord {
        self.turn(p, 1.0)
    }
    fn inverse(&self, p: Coord) -> Coord {
        self.turn(p, -1.0)
    }
}

/// `sup_x diam π(Q|_{A_r}(x))`, where `A_r = {r ≤ |x| ≤ 1}` and `π` is the
/// radial projection to the unit circle with its arclength metric.
pub fn radial_projection_diam(q: &Decomposition, r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter(format!("annulus radius {r} outside (0,1)")));
    }
    let lat = q.lattice();
    let region: Vec<bool> = (0..lat.len())
        .map(|k| {
            let p = lat.node(k);
            q.mask()[k] && p[0].hypot(p[1]) >= r
        })
        .collect();
    if !region.iter().any(|&b| b) {
        return Ok(0.0);
    }
    let restricted = q.restrict(&region)?;
    Ok((0..restricted.plaque_count())
        .into_par_iter()
        .map(|id| {
            let angles: Vec<f64> = restricted
                .plaque_nodes(id)
                .iter()
                .map(|&k| {
                    let p = lat.node(k as usize);
                    p[1].atan2(p[0])
                })
                .collect();
            arc_diameter(&angles)
        })
        .reduce(|| 0.0, f64::max))
}

/// Radial-projection diameter inside a star-shaped chart: `nodes` carry
/// their lattice index, normalized radius and angle, and plaque id; pieces
/// are the 8-connected components of equal plaque among nodes with
/// normalized radius at least `rho_min`.
pub(crate) fn chart_projection_diam(lat: &Lattice, nodes: &[(usize, f64, f64, u32)], rho_min: f64) -> f64 {
    let kept: HashMap<usize, (f64, u32)> = nodes
        .iter()
        .filter(|n| n.1 >= rho_min)
        .map(|&(k, _, phi, id)| (k, (phi, id)))
        .collect();
    let mut seen: HashMap<usize, bool> = HashMap::with_capacity(kept.len());
    let mut best = 0.0f64;
    let mut order: Vec<usize> = kept.keys().copied().collect();
    order.sort_unstable();
    for start in order {
        if seen.contains_key(&start) {
            continue;
        }
        let id = kept[&start].1;
        let mut angles = Vec::new();
        let mut stack = vec![start];
        seen.insert(start, true);
        while let Some(k) = stack.pop() {
            angles.push(kept[&k].0);
            for nb in lat.neighbors8(k) {
                if let Some(&(_, nid)) = kept.get(&nb) {
                    if nid == id && !seen.contains_key(&nb) {
                        seen.insert(nb, true);
                        stack.push(nb);
                    }
                }
            }
        }
        best = best.max(arc_diameter(&angles));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::Domain;

    fn spec() -> TwistSpec {
        TwistSpec::new(vec![(0.25, 1.0), (0.5, 0.3), (0.9, 0.8)]).unwrap()
    }

    #[test]
    fn profile_shape() {
        let s = spec();
        assert_eq!(s.profile(0.0), 0.0);
        assert_eq!(s.profile(1.0), 0.0);
        assert!((s.profile(0.5) - 0.3).abs() < 1e-15);
        assert!((s.profile(0.125) - 0.5).abs() < 1e-15);
        assert!((s.profile(0.95) - 0.4).abs() < 1e-12);
        assert_eq!(s.amplitude(), 1.0);
        assert!(TwistSpec::new(vec![(0.5, 0.1), (0.4, 0.1)]).is_err());
        assert!(TwistSpec::new(vec![(1.0, 0.1)]).is_err());
        assert!(TwistSpec::new(vec![(0.5, -0.1)]).is_err());
    }

    #[test]
    fn twist_examples() {
        let p = DiskPoint::new(0.7, 2.0).unwrap();
        assert_eq!(twist_apply(&TwistSpec::zero(), p), p);
        let edge = DiskPoint::new(1.0, 0.3).unwrap();
        assert_eq!(twist_apply(&spec(), edge), edge);
        let centre = DiskPoint::new(0.0, 0.3).unwrap();
        assert_eq!(twist_apply(&spec(), centre), centre);
        let eps = [0.2, 0.05];
        let sep = TwistSpec::separating(&[0.3, 0.8], &eps, 0.01).unwrap();
        assert!(sep.separates(&eps));
        let at = twist_apply(&sep, DiskPoint::new(0.3, 0.0).unwrap());
        assert!((at.theta() - 0.41).abs() < 1e-12 && at.theta() > 2.0 * eps[0]);
    }

    #[test]
    fn twist_round_trip_preserves_radius() {
        let s = spec();
        for k in 0..200 {
            let r = k as f64 / 199.0;
            let p = DiskPoint::new(r, 0.37 * k as f64).unwrap();
            let q = twist_apply(&s, p);
            assert_eq!(q.r(), r);
            assert!(twist_inverse(&s, q).dist(&p) < 1e-12);
            let c = TwistMap(s.clone()).forward(p.to_cartesian());
            assert!((c[0].hypot(c[1]) - r).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_projection_of_chords() {
        let q = Decomposition::builtin("vertical", Domain::Disk { n: 128 }).unwrap();
        let d: Vec<f64> = [0.9, 0.99, 0.999].iter().map(|&r| radial_projection_diam(&q, r).unwrap()).collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
        // Widest piece: the whole chord in the first column with x ≥ r.
        let x = 116.0f64 / 128.0;
        let y = ((1.0 - x * x).sqrt() * 128.0).floor() / 128.0;
        assert!((d[0] - 2.0 * y.atan2(x)).abs() < 1e-12);
        let s = Decomposition::builtin("singletons", Domain::Disk { n: 64 }).unwrap();
        assert_eq!(radial_projection_diam(&s, 0.5).unwrap(), 0.0);
        assert!(radial_projection_diam(&s, 1.0).is_err());
    }

    #[test]
    fn boundary_arc_plaque_bounds_projection_below() {
        let dom = Domain::Disk { n: 128 };
        let lat = dom.lattice();
        let labels: Vec<u64> = (0..lat.len())
            .map(|k| {
                let p = lat.node(k);
                let t = p[1].atan2(p[0]);
                if p[0].hypot(p[1]) >= 1.0 - 3.0 * lat.h && (0.0..=0.5).contains(&t) {
                    0
                } else {
                    1 + k as u64
                }
            })
            .collect();
        let q = Decomposition::from_labels("arc", lat, dom.mask(), &labels).unwrap();
        for r in [0.5, 0.9, 0.99] {
            assert!(radial_projection_diam(&q, r).unwrap() >= 0.5 - 2.0 * lat.h, "r={r}");
        }
    }
}
