//! Decompositions of planar domains into continua ("plaques"), realized
//! eagerly as component labels on a node lattice.
//!
//! A decomposition is built from any per-node label; plaques are the
//! 8-connected components of equal labels. Every construction (restriction,
//! singleton extension, pullback, intersection) produces a new label field
//! and re-runs the component pass, so plaques are connected by construction.

mod arc;
mod transverse;
mod twist;

pub use arc::{arc_transversality, perturb_arc, offending_intervals, ParamArc, PerturbReport, DEFAULT_ARC_BUDGET};
pub use transverse::{transversalize, CellChart, CellTwistMap, Histogram, TransversalizeConfig, TransversalizeReport};
pub use twist::{radial_projection_diam, twist_apply, twist_inverse, TwistMap, TwistSpec};

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continua::FiniteContinuum;
use crate::error::{Error, Result};
use crate::geometry::{planar_diameter, Coord, Space};
use crate::maps::{stable_dir, unstable_dir};
use crate::pnm::GrayImage;

/// Semicontinuity modulus in units of the lattice pitch.
pub const SEMICONTINUITY_PITCHES: f64 = 8.0;

const NONE: u32 = u32::MAX;

/// Nodes `origin + (i, j)·h` for `i < nx`, `j < ny`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: Coord,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Lattice {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn cell(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn node(&self, idx: usize) -> Coord {
        let (i, j) = self.cell(idx);
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    /// Nearest node, if `p` lies within half a pitch of the lattice box.
    pub fn snap(&self, p: Coord) -> Option<usize> {
        let fi = ((p[0] - self.origin[0]) / self.h).round();
        let fj = ((p[1] - self.origin[1]) / self.h).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 || !fi.is_finite() || !fj.is_finite() {
            return None;
        }
        Some(self.index(fi as usize, fj as usize))
    }

    /// Node at integer offset `(di, dj)` from `idx`, if inside the lattice.
    #[inline]
    pub fn offset(&self, idx: usize, di: i64, dj: i64) -> Option<usize> {
        let (i, j) = self.cell(idx);
        let a = i as i64 + di;
        let b = j as i64 + dj;
        if a < 0 || b < 0 || a >= self.nx as i64 || b >= self.ny as i64 {
            None
        } else {
            Some(self.index(a as usize, b as usize))
        }
    }

    #[inline]
    pub fn neighbors8(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        [(-1i64, -1i64), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
            .into_iter()
            .filter_map(move |(di, dj)| self.offset(idx, di, dj))
    }
}

/// The two planar domains used by the decomposition machinery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Domain {
    /// `[0,1]²` with nodes `k/n`, `k = 0..=n`.
    Square { n: usize },
    /// Closed unit disk, nodes `-1 + k/n`, `k = 0..=2n`.
    Disk { n: usize },
}

impl Domain {
    pub fn lattice(&self) -> Lattice {
        match *self {
            Domain::Square { n } => Lattice {
                origin: [0.0, 0.0],
                h: 1.0 / n as f64,
                nx: n + 1,
                ny: n + 1,
            },
            Domain::Disk { n } => Lattice {
                origin: [-1.0, -1.0],
                h: 1.0 / n as f64,
                nx: 2 * n + 1,
                ny: 2 * n + 1,
            },
        }
    }

    pub fn mask(&self) -> Vec<bool> {
        let lat = self.lattice();
        match self {
            Domain::Square { .. } => vec![true; lat.len()],
            Domain::Disk { .. } => (0..lat.len())
                .map(|k| {
                    let p = lat.node(k);
                    p[0] * p[0] + p[1] * p[1] <= 1.0 + 1e-12
                })
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = match *self {
            Domain::Square { n } | Domain::Disk { n } => n,
        };
        if n < 2 {
            return Err(Error::InvalidParameter(format!("domain resolution {n} too small")));
        }
        Ok(())
    }
}

/// Where a decomposition comes from, as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DecompositionSource {
    Builtin { builtin: String, domain: Domain },
    Pgm { pgm: PathBuf },
}

impl DecompositionSource {
    pub fn load(&self) -> Result<Decomposition> {
        match self {
            DecompositionSource::Builtin { builtin, domain } => Decomposition::builtin(builtin, *domain),
            DecompositionSource::Pgm { pgm } => {
                let q = Decomposition::from_pgm(&std::fs::read(pgm)?)?;
                q.check_semicontinuity(q.default_modulus(), None)?;
                Ok(q)
            }
        }
    }
}

/// An at-resolution decomposition: every domain node carries the id of its
/// plaque; plaques are numbered in order of their lowest node index, so two
/// decompositions describe the same partition iff their id fields agree.
#[derive(Clone, Debug)]
pub struct Decomposition {
    name: String,
    lattice: Lattice,
    mask: Vec<bool>,
    comp: Vec<u32>,
    offsets: Vec<usize>,
    members: Vec<u32>,
}

impl PartialEq for Decomposition {
    fn eq(&self, other: &Self) -> bool {
        self.lattice == other.lattice && self.mask == other.mask && self.comp == other.comp
    }
}

impl Decomposition {
    /// Plaques = 8-connected components of equal `labels` inside `mask`.
    pub fn from_labels(name: &str, lattice: Lattice, mask: Vec<bool>, labels: &[u64]) -> Result<Self> {
        if mask.len() != lattice.len() || labels.len() != lattice.len() {
            return Err(Error::InvalidParameter("label field does not match lattice".into()));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyPointSet);
        }
        let mut comp = vec![NONE; lattice.len()];
        let mut count = 0u32;
        let mut stack = Vec::new();
        for start in 0..lattice.len() {
            if !mask[start] || comp[start] != NONE {
                continue;
            }
            comp[start] = count;
            stack.push(start);
            while let Some(k) = stack.pop() {
                for nb in lattice.neighbors8(k) {
                    if mask[nb] && comp[nb] == NONE && labels[nb] == labels[start] {
                        comp[nb] = count;
                        stack.push(nb);
                    }
                }
            }
            count += 1;
        }
        let mut offsets = vec![0usize; count as usize + 1];
        for &c in &comp {
            if c != NONE {
                offsets[c as usize + 1] += 1;
            }
        }
        for k in 0..count as usize {
            offsets[k + 1] += offsets[k];
        }
        let mut fill = offsets.clone();
        let mut members = vec![0u32; offsets[count as usize]];
        for (idx, &c) in comp.iter().enumerate() {
            if c != NONE {
                members[fill[c as usize]] = idx as u32;
                fill[c as usize] += 1;
            }
        }
        Ok(Self {
            name: name.to_string(),
            lattice,
            mask,
            comp,
            offsets,
            members,
        })
    }

    /// Named builtin: `vertical`, `horizontal`, `singletons`, `stable_da`
    /// (digital lines along the stable eigendirection of the linear Anosov
    /// map, whose stable foliation the DA map preserves off the bump ball),
    /// `unstable_da`, or `whole` (one plaque).
    pub fn builtin(name: &str, domain: Domain) -> Result<Self> {
        domain.validate()?;
        let lat = domain.lattice();
        let digital_line = |normal: Coord| {
            let m = normal[0].abs().max(normal[1].abs());
            move |i: usize, j: usize| ((i as f64 * normal[0] + j as f64 * normal[1]) / m).floor() as i64 as u64
        };
        let stable = digital_line(unstable_dir());
        let unstable = digital_line(stable_dir());
        let labels: Vec<u64> = (0..lat.len())
            .into_par_iter()
            .map(|k| {
                let (i, j) = lat.cell(k);
                match name {
                    "vertical" => Ok(i as u64),
                    "horizontal" => Ok(j as u64),
                    "singletons" => Ok(k as u64),
                    "whole" => Ok(0),
                    "stable_da" => Ok(stable(i, j)),
                    "unstable_da" => Ok(unstable(i, j)),
                    other => Err(Error::InvalidParameter(format!("unknown decomposition {other:?}"))),
                }
            })
            .collect::<Result<_>>()?;
        Self::from_labels(name, lat, domain.mask(), &labels)
    }

    /// Label grid on `[0,1]²`: one node per pixel, pixel value = label.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let img = GrayImage::parse(bytes)?;
        if img.width < 2 || img.height < 2 {
            return Err(Error::Format("label image must be at least 2×2".into()));
        }
        let lat = Lattice {
            origin: [0.0, 0.0],
            h: 1.0 / (img.width.max(img.height) - 1) as f64,
            nx: img.width,
            ny: img.height,
        };
        let labels: Vec<u64> = (0..lat.len())
            .map(|k| {
                let (i, j) = lat.cell(k);
                img.at(i, j) as u64
            })
            .collect();
        Self::from_labels("pgm", lat, vec![true; lat.len()], &labels)
    }

    /// Plaque ids as a plain PGM (id + 1; 0 outside the domain).
    pub fn to_pgm(&self) -> Vec<u8> {
        let lat = &self.lattice;
        let img = GrayImage::from_grid(lat.nx, lat.ny, self.plaque_count() as u32 + 1, |i, j| {
            let c = self.comp[lat.index(i, j)];
            if c == NONE {
                0
            } else {
                c + 1
            }
        });
        img.to_p2()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn h(&self) -> f64 {
        self.lattice.h
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn default_modulus(&self) -> f64 {
        SEMICONTINUITY_PITCHES * self.lattice.h
    }

    pub fn plaque_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Plaque id of node `idx`, or `None` outside the domain.
    #[inline]
    pub fn plaque_id(&self, idx: usize) -> Option<usize> {
        let c = self.comp[idx];
        (c != NONE).then_some(c as usize)
    }

    pub fn plaque_ids(&self) -> &[u32] {
        &self.comp
    }

    /// Node of the domain nearest to `p`.
    pub fn locate(&self, p: Coord) -> Result<usize> {
        match self.lattice.snap(p) {
            Some(k) if self.mask[k] => Ok(k),
            _ => Err(Error::NotInDomain(p)),
        }
    }

    pub fn plaque_nodes(&self, id: usize) -> &[u32] {
        &self.members[self.offsets[id]..self.offsets[id + 1]]
    }

    pub fn plaque_points(&self, id: usize) -> Vec<Coord> {
        self.plaque_nodes(id).iter().map(|&k| self.lattice.node(k as usize)).collect()
    }

    /// The plaque through the domain node nearest to `p`.
    pub fn plaque(&self, p: Coord) -> Result<FiniteContinuum> {
        let k = self.locate(p)?;
        let id = self.comp[k] as usize;
        Ok(FiniteContinuum::from_connected(Space::Plane, self.lattice.h, self.plaque_points(id)))
    }

    pub fn plaque_diameters(&self) -> Vec<f64> {
        (0..self.plaque_count())
            .into_par_iter()
            .map(|id| {
                let nodes = self.plaque_nodes(id);
                if nodes.len() < 2 {
                    0.0
                } else {
                    planar_diameter(&self.plaque_points(id))
                }
            })
            .collect()
    }

    /// Plaque diameters restricted to plaques with a node satisfying `keep`.
    pub fn plaque_diameters_where(&self, keep: impl Fn(usize) -> bool + Sync) -> Vec<f64> {
        (0..self.plaque_count())
            .into_par_iter()
            .filter(|&id| self.plaque_nodes(id).iter().any(|&k| keep(k as usize)))
            .map(|id| planar_diameter(&self.plaque_points(id)))
            .collect()
    }

    /// Domain nodes as a point set.
    pub fn domain_points(&self) -> Vec<Coord> {
        (0..self.lattice.len()).filter(|&k| self.mask[k]).map(|k| self.lattice.node(k)).collect()
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.lattice != other.lattice || self.mask != other.mask {
            return Err(Error::InvalidParameter(format!(
                "decompositions {} and {} live on different domains",
                self.name, other.name
            )));
        }
        Ok(())
    }

    /// Whether no plaque contains a full grid disk of radius `2h`.
    pub fn meagre_witness(&self) -> Option<(usize, Coord)> {
        const DISK: [(i64, i64); 13] = [
            (0, 0),
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
            (2, 0),
            (-2, 0),
            (0, 2),
            (0, -2),
        ];
        let lat = &self.lattice;
        (0..lat.len())
            .into_par_iter()
            .find_first(|&k| {
                self.mask[k]
                    && DISK.iter().all(|&(di, dj)| {
                        lat.offset(k, di, dj)
                            .is_some_and(|q| self.mask[q] && self.comp[q] == self.comp[k])
                    })
            })
            .map(|k| (self.comp[k] as usize, lat.node(k)))
    }

    /// Upper semicontinuity at resolution: for grid-adjacent `x`, `x'`,
    /// every node of `Q(x')` lies within `modulus` of `Q(x)`.
    ///
    /// Pairs whose limit point `x` lies in `open_region` while `x'` does not
    /// are skipped: for an open set `U`, no sequence outside `U` converges
    /// into it, and grid adjacency across `∂U` is a resolution artifact.
    pub fn check_semicontinuity(&self, modulus: f64, open_region: Option<&[bool]>) -> Result<()> {
        let lat = &self.lattice;
        let count = self.plaque_count();
        let exempt = |x: usize, xp: usize| open_region.is_some_and(|u| u[x] && !u[xp]);
        // required[B] = plaques A with some x ∈ A adjacent to some x' ∈ B.
        let required: Vec<Vec<u32>> = (0..count)
            .into_par_iter()
            .map(|b| {
                let mut req: Vec<u32> = Vec::new();
                for &xp in self.plaque_nodes(b) {
                    for x in lat.neighbors8(xp as usize) {
                        let a = self.comp[x];
                        if a != NONE && a as usize != b && !exempt(x, xp as usize) {
                            req.push(a);
                        }
                    }
                }
                req.sort_unstable();
                req.dedup();
                req
            })
            .collect();
        let r = (modulus / lat.h).floor() as i64;
        let r2 = modulus * modulus / (lat.h * lat.h) + 1e-9;
        let window: Vec<(i64, i64)> = (-r..=r)
            .flat_map(|di| (-r..=r).map(move |dj| (di, dj)))
            .filter(|&(di, dj)| (di * di + dj * dj) as f64 <= r2)
            .collect();
        let violation = (0..lat.len()).into_par_iter().find_first(|&k| {
            let b = self.comp[k];
            if b == NONE || required[b as usize].is_empty() {
                return false;
            }
            let mut near: Vec<u32> = window
                .iter()
                .filter_map(|&(di, dj)| lat.offset(k, di, dj))
                .map(|q| self.comp[q])
                .filter(|&c| c != NONE)
                .collect();
            near.sort_unstable();
            near.dedup();
            required[b as usize].iter().any(|a| near.binary_search(a).is_err())
        });
        if let Some(k) = violation {
            let b = self.comp[k] as usize;
            let neighbour = required[b]
                .iter()
                .copied()
                .find(|&a| {
                    !window.iter().any(|&(di, dj)| {
                        lat.offset(k, di, dj).is_some_and(|q| self.comp[q] == a)
                    })
                })
                .unwrap_or(NONE) as usize;
            return Err(Error::NotSemicontinuous {
                plaque: b,
                neighbour,
                point: lat.node(k),
                modulus,
            });
        }
        Ok(())
    }

    /// `Q|_Y(y)` = component of `Q(y) ∩ Y` containing `y`.
    pub fn restrict(&self, region: &[bool]) -> Result<Self> {
        if region.len() != self.lattice.len() {
            return Err(Error::InvalidParameter("region does not match lattice".into()));
        }
        let outside = region.iter().zip(&self.mask).filter(|(&r, &m)| r && !m).count();
        if outside > 0 {
            return Err(Error::NotSubset { outside });
        }
        let labels: Vec<u64> = self.comp.iter().map(|&c| c as u64).collect();
        Self::from_labels(&format!("{}|Y", self.name), self.lattice, region.to_vec(), &labels)
    }

    /// Restriction to the domain nodes nearest to the points of `y`.
    pub fn restrict_points(&self, y: &[Coord]) -> Result<Self> {
        let mut region = vec![false; self.lattice.len()];
        for &p in y {
            region[self.locate(p)?] = true;
        }
        self.restrict(&region)
    }

    /// `P_se`: plaques of `self` on its domain `Y`, singletons on the rest
    /// of `ambient`. `Y` must be closed at resolution (no ambient node whose
    /// four axis neighbours all lie in `Y` may be missing from `Y`).
    pub fn singleton_extend(&self, ambient: &[bool]) -> Result<Self> {
        let lat = &self.lattice;
        if ambient.len() != lat.len() {
            return Err(Error::InvalidParameter("ambient mask does not match lattice".into()));
        }
        let outside = self.mask.iter().zip(ambient).filter(|(&y, &a)| y && !a).count();
        if outside > 0 {
            return Err(Error::NotSubset { outside });
        }
        let missing = (0..lat.len())
            .filter(|&k| {
                ambient[k]
                    && !self.mask[k]
                    && [(1, 0), (-1, 0), (0, 1), (0, -1)]
                        .iter()
                        .all(|&(di, dj)| lat.offset(k, di, dj).is_some_and(|q| self.mask[q]))
            })
            .count();
        if missing > 0 {
            return Err(Error::NotClosed { missing });
        }
        let base = self.plaque_count() as u64;
        let labels: Vec<u64> = (0..lat.len())
            .map(|k| if self.mask[k] { self.comp[k] as u64 } else { base + k as u64 })
            .collect();
        // New pairs are singleton-to-plaque or cross the open complement, so
        // the extension inherits semicontinuity from `self` once Y is closed.
        Self::from_labels(&format!("{}_se", self.name), *lat, ambient.to_vec(), &labels)
    }

    /// `h*Q(y)` = component of `h⁻¹(Q(h(y)))` containing `y`.
    pub fn pullback(&self, hmap: &dyn PlaneMap) -> Result<Self> {
        let lat = &self.lattice;
        let tol = 0.5 * lat.h;
        let labels: Vec<u64> = (0..lat.len())
            .into_par_iter()
            .map(|k| {
                if !self.mask[k] {
                    return Ok(u64::MAX);
                }
                let y = lat.node(k);
                let z = hmap.forward(y);
                let back = hmap.inverse(z);
                if (back[0] - y[0]).hypot(back[1] - y[1]) > tol {
                    return Err(Error::NotInvertible(format!(
                        "round trip of {y:?} lands at {back:?}"
                    )));
                }
                let q = self.locate_nearby(z)?;
                Ok(self.comp[q] as u64)
            })
            .collect::<Result<_>>()?;
        Self::from_labels(&format!("h*{}", self.name), *lat, self.mask.clone(), &labels)
    }

    /// Nearest domain node, tolerating points that fall within one pitch
    /// outside the domain (round-off at the disk boundary).
    fn locate_nearby(&self, p: Coord) -> Result<usize> {
        if let Ok(k) = self.locate(p) {
            return Ok(k);
        }
        let lat = &self.lattice;
        let fi = ((p[0] - lat.origin[0]) / lat.h).round() as i64;
        let fj = ((p[1] - lat.origin[1]) / lat.h).round() as i64;
        let mut best: Option<(f64, usize)> = None;
        for di in -1..=1 {
            for dj in -1..=1 {
                let (a, b) = (fi + di, fj + dj);
                if a < 0 || b < 0 || a >= lat.nx as i64 || b >= lat.ny as i64 {
                    continue;
                }
                let k = lat.index(a as usize, b as usize);
                if !self.mask[k] {
                    continue;
                }
                let q = lat.node(k);
                let d = (q[0] - p[0]).hypot(q[1] - p[1]);
                if d <= lat.h * std::f64::consts::SQRT_2 && best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, k));
                }
            }
        }
        best.map(|(_, k)| k).ok_or(Error::NotInDomain(p))
    }

    /// `[P∩Q](x)` = component of `P(x) ∩ Q(x)` containing `x`.
    pub fn intersect(&self, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let labels: Vec<u64> = self
            .comp
            .iter()
            .zip(&other.comp)
            .map(|(&a, &b)| ((a as u64) << 32) | b as u64)
            .collect();
        Self::from_labels(&format!("{}∩{}", self.name, other.name), self.lattice, self.mask.clone(), &labels)
    }
}

/// `diam(Q) = sup_x diam Q(x)` over the domain sample.
pub fn decomposition_diam(q: &Decomposition) -> f64 {
    q.plaque_diameters().into_iter().fold(0.0, f64::max)
}

/// Meagreness with witness: `Err(NotMeagre)` names a plaque and the centre
/// of a full grid disk of radius `2h` inside it.
pub fn is_meagre(q: &Decomposition) -> Result<()> {
    match q.meagre_witness() {
        None => Ok(()),
        Some((plaque, center)) => Err(Error::NotMeagre { plaque, center }),
    }
}

/// Homeomorphism of a planar domain, given with its inverse.
pub trait PlaneMap: Sync {
    fn forward(&self, p: Coord) -> Coord;
    fn inverse(&self, p: Coord) -> Coord;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityMap;

impl PlaneMap for IdentityMap {
    fn forward(&self, p: Coord) -> Coord {
        p
    }
    fn inverse(&self, p: Coord) -> Coord {
        p
    }
}

/// Rotation by `angle` about `center`. Quarter turns are evaluated exactly.
#[derive(Clone, Copy, Debug)]
pub struct Rotation {
    pub center: Coord,
    pub angle: f64,
}

impl Rotation {
    fn turn(&self, p: Coord, angle: f64) -> Coord {
        let (x, y) = (p[0] - self.center[0], p[1] - self.center[1]);
        let quarter = angle / std::f64::consts::FRAC_PI_2;
        let (rx, ry) = if (quarter - quarter.round()).abs() < 1e-15 {
            match (quarter.round() as i64).rem_euclid(4) {
                0 => (x, y),
                1 => (-y, x),
                2 => (-x, -y),
                _ => (y, -x),
            }
        } else {
            let (s, c) = angle.sin_cos();
            (c * x - s * y, s * x + c * y)
        };
        [self.center[0] + rx, self.center[1] + ry]
    }
}

impl PlaneMap for Rotation {
    fn forward(&self, p: Coord) -> Coord {
        self.turn(p, self.angle)
    }
    fn inverse(&self, p: Coord) -> Coord {
        self.turn(p, -self.angle)
    }
}

/// `outer ∘ inner`.
pub struct Compose<'a> {
    pub outer: &'a dyn PlaneMap,
    pub inner: &'a dyn PlaneMap,
}

impl PlaneMap for Compose<'_> {
    fn forward(&self, p: Coord) -> Coord {
        self.outer.forward(self.inner.forward(p))
    }
    fn inverse(&self, p: Coord) -> Coord {
        self.inner.inverse(self.outer.inverse(p))
    }
}

/// A map given by a pair of closures.
pub struct FnMap<F, G> {
    pub forward: F,
    pub inverse: G,
}

impl<F, G> PlaneMap for FnMap<F, G>
where
    F: Fn(Coord) -> Coord + Sync,
    G: Fn(Coord) -> Coord + Sync,
{
    fn forward(&self, p: Coord) -> Coord {
        (self.forward)(p)
    }
    fn inverse(&self, p: Coord) -> Coord {
        (self.inverse)(p)
    }
}
