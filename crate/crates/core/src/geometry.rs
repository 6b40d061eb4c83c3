//! Points and metrics on the three ambient surfaces: the flat torus
//! `R²/Z²`, its antipodal quotient sphere, and the closed unit disk.
//!
//! Everything downstream works on raw coordinate pairs tagged with a
//! [`Space`]; the typed wrappers ([`TorusPoint`], [`SpherePoint`],
//! [`DiskPoint`]) enforce the reduction invariants at construction.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Coord = [f64; 2];

/// Diameter of the flat unit torus: the distance to the half-period point.
pub const TORUS_DIAMETER: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Reduce a real number to `[0, 1)`. Exact `1.0` (and anything rounding to
/// it) maps to `0.0`, which keeps reduction idempotent.
#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let r = v - v.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance between two reduced coordinates on the unit circle `R/Z`.
#[inline]
fn circle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(1.0 - d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct TorusPoint {
    x: f64,
    y: f64,
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x: wrap_unit(x),
            y: wrap_unit(y),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn coords(&self) -> Coord {
        [self.x, self.y]
    }

    /// The antipode `-p mod 1`.
    pub fn negate(&self) -> Self {
        Self::new(-self.x, -self.y)
    }

    pub fn dist(&self, other: &Self) -> f64 {
        torus_dist(self.coords(), other.coords())
    }
}

impl From<[f64; 2]> for TorusPoint {
    fn from(c: [f64; 2]) -> Self {
        Self::new(c[0], c[1])
    }
}

impl From<TorusPoint> for [f64; 2] {
    fn from(p: TorusPoint) -> Self {
        p.coords()
    }
}

/// Flat torus distance: the minimum over the nine integer lifts of `b`
/// around `a`. The minimisation separates per axis, so it is evaluated as
/// a per-axis wrap.
#[inline]
pub fn torus_dist(a: Coord, b: Coord) -> f64 {
    let dx = circle_gap(wrap_unit(a[0]), wrap_unit(b[0]));
    let dy = circle_gap(wrap_unit(a[1]), wrap_unit(b[1]));
    dx.hypot(dy)
}

/// Antipode of a torus coordinate pair, reduced.
#[inline]
pub fn torus_negate(p: Coord) -> Coord {
    [wrap_unit(-p[0]), wrap_unit(-p[1])]
}

/// A point of the quotient `T²/±`, stored as the canonical torus
/// representative of its class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct SpherePoint {
    rep: TorusPoint,
}

impl SpherePoint {
    /// The quotient projection.
    pub fn canon(p: TorusPoint) -> Self {
        Self {
            rep: TorusPoint::from(antipodal_canon(p.coords())),
        }
    }

    pub fn rep(&self) -> TorusPoint {
        self.rep
    }

    pub fn dist(&self, other: &Self) -> f64 {
        sphere_dist(self.rep.coords(), other.rep.coords())
    }
}

impl From<[f64; 2]> for SpherePoint {
    fn from(c: [f64; 2]) -> Self {
        Self::canon(TorusPoint::from(c))
    }
}

impl From<SpherePoint> for [f64; 2] {
    fn from(p: SpherePoint) -> Self {
        p.rep.coords()
    }
}

/// Canonical representative of `{p, -p}`: the lexicographic minimum of the
/// two reduced coordinate pairs.
#[inline]
pub fn antipodal_canon(p: Coord) -> Coord {
    let a = [wrap_unit(p[0]), wrap_unit(p[1])];
    let b = torus_negate(a);
    if (b[0], b[1]) < (a[0], a[1]) {
        b
    } else {
        a
    }
}

/// Quotient metric on `T²/±`: the torus distance minimised over
/// representative pairs.
#[inline]
pub fn sphere_dist(a: Coord, b: Coord) -> f64 {
    torus_dist(a, b).min(torus_dist(a, torus_negate(b)))
}

/// A point of the closed unit disk in polar form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct DiskPoint {
    r: f64,
    theta: f64,
}

impl DiskPoint {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidParameter(format!(
                "disk radius {r} outside [0, 1]"
            )));
        }
        Ok(Self {
            r,
            theta: wrap_angle(theta),
        })
    }

    pub fn from_cartesian(p: Coord) -> Result<Self> {
        let r = p[0].hypot(p[1]);
        // Accept boundary points a rounding error outside the circle.
        let r = if r > 1.0 && r < 1.0 + 1e-12 { 1.0 } else { r };
        Self::new(r, p[1].atan2(p[0]))
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn to_cartesian(&self) -> Coord {
        let (s, c) = self.theta.sin_cos();
        [self.r * c, self.r * s]
    }

    pub fn dist(&self, other: &Self) -> f64 {
        euclid(self.to_cartesian(), other.to_cartesian())
    }
}

impl TryFrom<[f64; 2]> for DiskPoint {
    type Error = Error;

    fn try_from(c: [f64; 2]) -> Result<Self> {
        Self::new(c[0], c[1])
    }
}

impl From<DiskPoint> for [f64; 2] {
    fn from(p: DiskPoint) -> Self {
        [p.r, p.theta]
    }
}

/// Reduce an angle to `[0, 2π)`.
#[inline]
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Arclength distance between two angles on the circle of circumference 2π.
#[inline]
pub fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (wrap_angle(a) - wrap_angle(b)).abs();
    d.min(TAU - d)
}

/// Arclength diameter of a finite set of angles.
pub fn arc_diameter(angles: &[f64]) -> f64 {
    if angles.len() < 2 {
        return 0.0;
    }
    let mut a: Vec<f64> = angles.iter().map(|&t| wrap_angle(t)).collect();
    a.sort_by(f64::total_cmp);
    // For each angle, the farthest partner is the one closest to its antipode.
    let mut best = 0.0f64;
    for &t in &a {
        let target = wrap_angle(t + PI);
        let idx = a.partition_point(|&u| u < target);
        for j in [idx, idx + a.len() - 1] {
            let u = a[j % a.len()];
            best = best.max(angle_gap(t, u));
        }
    }
    best
}

#[inline]
pub fn euclid(a: Coord, b: Coord) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// The ambient surface a coordinate pair lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    /// `R²/Z²`, coordinates in `[0,1)²`.
    Torus,
    /// `T²/±`, coordinates are canonical torus representatives.
    Sphere,
    /// Unit disk, coordinates are polar `[r, θ]`.
    Disk,
    /// Euclidean plane, Cartesian coordinates. Used for disk and square
    /// charts of decompositions.
    Plane,
}

impl Space {
    #[inline]
    pub fn dist(self, a: Coord, b: Coord) -> f64 {
        match self {
            Space::Torus => torus_dist(a, b),
            Space::Sphere => sphere_dist(a, b),
            Space::Disk => euclid(polar_to_cartesian(a), polar_to_cartesian(b)),
            Space::Plane => euclid(a, b),
        }
    }

    /// Normalise a coordinate pair into this space's canonical form.
    pub fn normalize(self, p: Coord) -> Coord {
        match self {
            Space::Torus => [wrap_unit(p[0]), wrap_unit(p[1])],
            Space::Sphere => antipodal_canon(p),
            Space::Disk => [p[0], wrap_angle(p[1])],
            Space::Plane => p,
        }
    }

    /// Diameter of the whole space, when bounded.
    pub fn total_diameter(self) -> Option<f64> {
        match self {
            // Any pair p, q has min(|p - q|, |p + q|) <= the torus diameter,
            // and the bound is attained by (0,0) and (1/2,1/2).
            Space::Torus | Space::Sphere => Some(TORUS_DIAMETER),
            Space::Disk => Some(2.0),
            Space::Plane => None,
        }
    }
}

#[inline]
fn polar_to_cartesian(p: Coord) -> Coord {
    let (s, c) = p[1].sin_cos();
    [p[0] * c, p[0] * s]
}

/// A finite, non-empty point sample of one ambient space at grid pitch `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    space: Space,
    h: f64,
    pts: Vec<Coord>,
}

impl PointSet {
    pub fn new(space: Space, h: f64, pts: Vec<Coord>) -> Result<Self> {
        if pts.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("grid pitch {h} must be positive")));
        }
        Ok(Self { space, h, pts })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn points(&self) -> &[Coord] {
        &self.pts
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn diameter(&self) -> f64 {
        cloud_diameter(self.space, &self.pts)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: PointSet = serde_json::from_str(s)?;
        Self::new(raw.space, raw.h, raw.pts)
    }
}

fn directed_hausdorff(space: Space, a: &[Coord], b: &[Coord]) -> f64 {
    a.par_iter()
        .map(|&p| {
            b.iter()
                .map(|&q| space.dist(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
}

/// Hausdorff distance between two finite samples of the same space.
pub fn hausdorff_dist(a: &PointSet, b: &PointSet) -> Result<f64> {
    if a.space != b.space {
        return Err(Error::SpaceMismatch(a.space, b.space));
    }
    let ab = directed_hausdorff(a.space, &a.pts, &b.pts);
    let ba = directed_hausdorff(a.space, &b.pts, &a.pts);
    Ok(ab.max(ba))
}

/// Maximum pairwise distance of a finite cloud.
///
/// Planar clouds go through their convex hull. Torus clouds that fit in a
/// quarter-period box around their first point are unwrapped onto the
/// plane first, where the torus metric agrees with the Euclidean one.
pub fn cloud_diameter(space: Space, pts: &[Coord]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    match space {
        Space::Plane => planar_diameter(pts),
        Space::Disk => {
            let cart: Vec<Coord> = pts.iter().map(|&p| polar_to_cartesian(p)).collect();
            planar_diameter(&cart)
        }
        Space::Torus => match unwrap_local(pts) {
            Some(lifted) => planar_diameter(&lifted),
            None => brute_diameter(space, pts),
        },
        Space::Sphere => brute_diameter(space, pts),
    }
}

/// Decide `diam(pts) > bound` without a full pairwise scan when the
/// anchor radius already settles it.
pub fn cloud_diameter_exceeds(space: Space, pts: &[Coord], bound: f64) -> bool {
    if pts.len() < 2 {
        return 0.0 > bound;
    }
    let anchor = pts[0];
    let radius = pts
        .iter()
        .map(|&p| space.dist(anchor, p))
        .fold(0.0f64, f64::max);
    if radius > bound {
        return true;
    }
    if 2.0 * radius <= bound {
        return false;
    }
    cloud_diameter(space, pts) > bound
}

fn brute_diameter(space: Space, pts: &[Coord]) -> f64 {
    (0..pts.len())
        .into_par_iter()
        .map(|i| {
            pts[i + 1..]
                .iter()
                .map(|&q| space.dist(pts[i], q))
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Lift a torus cloud next to its first point when every point lies within
/// a quarter period of it on both axes; pairwise offsets then stay below
/// half a period and the Euclidean distance of the lifts is the torus one.
pub(crate) fn unwrap_local(pts: &[Coord]) -> Option<Vec<Coord>> {
    let a = pts[0];
    let mut out = Vec::with_capacity(pts.len());
    for &p in pts {
        let mut q = [0.0; 2];
        for k in 0..2 {
            let mut d = p[k] - a[k];
            d -= d.round();
            if d.abs() >= 0.25 {
                return None;
            }
            q[k] = a[k] + d;
        }
        out.push(q);
    }
    Some(out)
}

fn cross(o: Coord, a: Coord, b: Coord) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull by Andrew's monotone chain, counter-clockwise, collinear
/// points dropped.
pub fn convex_hull(pts: &[Coord]) -> Vec<Coord> {
    let mut p: Vec<Coord> = pts.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<Coord> = Vec::with_capacity(2 * p.len());
    for &q in &p {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
            hull.pop();
        }
        hull.push(q);
    }
    let lower = hull.len() + 1;
    for &q in p.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
            hull.pop();
        }
        hull.push(q);
    }
    hull.pop();
    hull
}

pub fn planar_diameter(pts: &[Coord]) -> f64 {
    let hull = convex_hull(pts);
    let mut best = 0.0f64;
    for i in 0..hull.len() {
        for j in i + 1..hull.len() {
            best = best.max(euclid(hull[i], hull[j]));
        }
    }
    best
}
