//! Forward images of the trapping region of the DA / pseudo-DA map.
//!
//! The hole `B(0, r0/2)` satisfies `f⁻¹(hole) ⊂ hole`, so a grid point lies
//! in `I_k = f^k(T² \ hole)` iff its first `k` backward iterates avoid the
//! hole. One backward pass per node therefore yields every `I_k` at once.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{torus_dist, Coord, Space};
use crate::maps::{MapHandle, MapKind};
use crate::pnm::GrayImage;

pub const DEFAULT_MAX_ITER: usize = 40;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttractorRun {
    pub map: String,
    pub n: usize,
    pub hole_radius: f64,
    pub max_iter: usize,
    /// First backward entry time into the hole; nodes that never entered
    /// carry one more than the number of backward steps taken.
    #[serde(skip)]
    pub entry: Vec<u8>,
    /// `hausdorff[k]` = Hausdorff distance between `I_k` and `I_{k+1}`.
    pub hausdorff: Vec<f64>,
    /// Grid nodes whose membership differs from that of their negation.
    pub symmetry_defects: usize,
}

impl AttractorRun {
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn member(&self, k: usize, idx: usize) -> bool {
        self.entry[idx] as usize > k
    }

    pub fn count(&self, k: usize) -> usize {
        self.entry.iter().filter(|&&e| e as usize > k).count()
    }

    pub fn converged(&self) -> bool {
        self.hausdorff.last().is_some_and(|&d| d < 2.0 * self.h())
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.hausdorff.windows(2).all(|w| w[1] < w[0])
    }

    fn is_sphere(&self) -> bool {
        self.map.starts_with("pda")
    }

    /// Membership image of `I_k` (255 = member). On the sphere only the
    /// fundamental half `x ∈ [0, 1/2]` is drawn.
    pub fn image(&self, k: usize) -> GrayImage {
        let w = if self.is_sphere() { self.n / 2 + 1 } else { self.n };
        GrayImage::from_grid(w, self.n, 255, |i, j| {
            if self.member(k, j * self.n + i) {
                255
            } else {
                0
            }
        })
    }

    /// Entry-depth image: brighter pixels survive more backward steps.
    pub fn depth_image(&self) -> GrayImage {
        let w = if self.is_sphere() { self.n / 2 + 1 } else { self.n };
        let cap = self.entry.iter().copied().max().unwrap_or(1).max(1) as u32;
        GrayImage::from_grid(w, self.n, cap, |i, j| self.entry[j * self.n + i] as u32)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,hausdorff,points_k,points_k1\n");
        for (k, d) in self.hausdorff.iter().enumerate() {
            out.push_str(&format!("{k},{d:.17e},{},{}\n", self.count(k), self.count(k + 1)));
        }
        out
    }
}

/// Incremental backward pass: each call to [`EntryTimes::advance`] moves
/// every surviving node one more step back.
struct EntryTimes<'a> {
    f: &'a MapHandle,
    radius: f64,
    pos: Vec<Coord>,
    entry: Vec<u8>,
    steps: u8,
}

const ALIVE: u8 = u8::MAX;

impl<'a> EntryTimes<'a> {
    fn new(f: &'a MapHandle, n: usize) -> Result<Self> {
        let spec = f
            .bump()
            .ok_or_else(|| Error::InvalidParameter(format!("map {} has no trapping region", f.name())))?;
        if !matches!(f.kind(), MapKind::Da(_) | MapKind::Pda(_)) {
            return Err(Error::InvalidParameter(format!("attractor needs da or pda, got {}", f.name())));
        }
        let radius = spec.trapping_radius();
        let pos: Vec<Coord> = (0..n * n)
            .map(|idx| [(idx % n) as f64 / n as f64, (idx / n) as f64 / n as f64])
            .collect();
        let entry = pos
            .iter()
            .map(|&p| if torus_dist(p, [0.0, 0.0]) < radius { 0 } else { ALIVE })
            .collect();
        Ok(Self { f, radius, pos, entry, steps: 0 })
    }

    fn advance(&mut self) -> Result<()> {
        if self.steps >= ALIVE - 2 {
            return Err(Error::InvalidParameter("too many backward steps".into()));
        }
        let step = self.steps + 1;
        let (f, radius) = (self.f, self.radius);
        self.pos
            .par_iter_mut()
            .zip(self.entry.par_iter_mut())
            .filter(|(_, e)| **e == ALIVE)
            .try_for_each(|(p, e)| {
                *p = f.apply_inverse(*p)?;
                if torus_dist(*p, [0.0, 0.0]) < radius {
                    *e = step;
                }
                Ok::<_, Error>(())
            })?;
        self.steps = step;
        Ok(())
    }

    /// Entry times with survivors capped at `steps + 1`.
    fn finish(self) -> Vec<u8> {
        let cap = self.steps + 1;
        self.entry.into_iter().map(|e| e.min(cap)).collect()
    }
}

/// Backward entry times of every node of the `n × n` grid after `steps`
/// backward steps; survivors get `steps + 1`.
pub fn trapping_entry_times(f: &MapHandle, n: usize, steps: usize) -> Result<Vec<u8>> {
    let mut et = EntryTimes::new(f, n)?;
    for _ in 0..steps {
        et.advance()?;
    }
    Ok(et.finish())
}

/// Distance, in grid units squared, from node `idx` to the nearest member.
fn nearest_member_sq(member: &dyn Fn(usize) -> bool, n: usize, idx: usize) -> Option<i64> {
    let (i0, j0) = ((idx % n) as i64, (idx / n) as i64);
    let ni = n as i64;
    let mut best: Option<i64> = None;
    for r in 0..=(ni / 2) {
        if let Some(b) = best {
            if r * r > b {
                break;
            }
        }
        let mut visit = |di: i64, dj: i64| {
            let a = (i0 + di).rem_euclid(ni) as usize;
            let b = (j0 + dj).rem_euclid(ni) as usize;
            if member(b * n + a) {
                let d = di * di + dj * dj;
                if best.map_or(true, |x| d < x) {
                    best = Some(d);
                }
            }
        };
        if r == 0 {
            visit(0, 0);
            continue;
        }
        for t in -r..=r {
            visit(t, -r);
            visit(t, r);
        }
        for t in (-r + 1)..r {
            visit(-r, t);
            visit(r, t);
        }
    }
    best
}

/// Hausdorff distance between `I_k` and `I_{k+1}` (nested, so only points
/// of `I_k \ I_{k+1}` contribute).
fn nested_hausdorff(entry: &[u8], n: usize, k: usize) -> f64 {
    let member = |idx: usize| entry[idx] as usize > k + 1;
    let worst = (0..n * n)
        .into_par_iter()
        .filter(|&idx| entry[idx] as usize == k + 1)
        .map(|idx| nearest_member_sq(&member, n, idx).unwrap_or(i64::MAX))
        .max()
        .unwrap_or(0);
    if worst == i64::MAX {
        f64::INFINITY
    } else {
        (worst as f64).sqrt() / n as f64
    }
}

/// Iterate the trapping region until successive images are within `2h`
/// in Hausdorff distance, or `max_iter` images have been compared.
pub fn render_attractor(f: &MapHandle, n: usize, max_iter: usize) -> Result<AttractorRun> {
    let mut et = EntryTimes::new(f, n)?;
    let h = 1.0 / n as f64;
    let mut hausdorff = Vec::new();
    et.advance()?;
    for k in 0..max_iter {
        // I_{k+1} needs k + 1 backward steps.
        while (et.steps as usize) < k + 1 {
            et.advance()?;
        }
        let d = nested_hausdorff(&et.entry, n, k);
        hausdorff.push(d);
        if d < 2.0 * h {
            break;
        }
    }
    let entry = et.finish();
    let last = hausdorff.len();
    let symmetry_defects = (0..n * n)
        .into_par_iter()
        .filter(|&idx| {
            let (i, j) = (idx % n, idx / n);
            let neg = ((n - j) % n) * n + (n - i) % n;
            (entry[idx] as usize > last) != (entry[neg] as usize > last)
        })
        .count();
    Ok(AttractorRun {
        map: f.name(),
        n,
        hole_radius: f.bump().map(|b| b.trapping_radius()).unwrap_or(0.0),
        max_iter,
        entry,
        hausdorff,
        symmetry_defects,
    })
}

/// Grid nodes of the fundamental half that are already canonical
/// representatives, for checking that pda images need no re-canonicalization.
pub fn half_domain_is_canonical(n: usize, space: Space) -> bool {
    if space != Space::Sphere {
        return true;
    }
    (0..n).all(|j| {
        (1..n.div_ceil(2)).all(|i| {
            let p = [i as f64 / n as f64, j as f64 / n as f64];
            crate::geometry::antipodal_canon(p) == p
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::BumpSpec;

    #[test]
    fn ring_search_matches_brute_force() {
        let n = 24;
        let members: Vec<bool> = (0..n * n).map(|k| (k * 7919) % 37 == 0).collect();
        let member = |k: usize| members[k];
        for idx in 0..n * n {
            let brute = (0..n * n)
                .filter(|&k| members[k])
                .map(|k| {
                    let di = ((k % n) as i64 - (idx % n) as i64).rem_euclid(n as i64);
                    let dj = ((k / n) as i64 - (idx / n) as i64).rem_euclid(n as i64);
                    let di = di.min(n as i64 - di);
                    let dj = dj.min(n as i64 - dj);
                    di * di + dj * dj
                })
                .min();
            assert_eq!(nearest_member_sq(&member, n, idx), brute);
        }
    }

    #[test]
    fn zeroth_image_is_trapping_region() {
        let f = MapHandle::da(BumpSpec::tuned().unwrap());
        let run = render_attractor(&f, 128, 6).unwrap();
        let r = run.hole_radius;
        for idx in 0..128 * 128 {
            let p = [(idx % 128) as f64 / 128.0, (idx / 128) as f64 / 128.0];
            assert_eq!(run.member(0, idx), torus_dist(p, [0.0, 0.0]) >= r);
        }
        // Nested images.
        for k in 0..5 {
            assert!(run.count(k + 1) <= run.count(k));
        }
    }

    #[test]
    fn rejects_maps_without_trapping_region() {
        assert!(trapping_entry_times(&MapHandle::anosov(), 16, 3).is_err());
        let inv = MapHandle::da(BumpSpec::tuned().unwrap()).inverse();
        assert!(trapping_entry_times(&inv, 16, 3).is_err());
    }

    #[test]
    fn pda_half_images_are_canonical() {
        assert!(half_domain_is_canonical(64, Space::Sphere));
        let f = MapHandle::pda(BumpSpec::tuned().unwrap());
        let run = render_attractor(&f, 64, 4).unwrap();
        assert_eq!(run.image(0).width, 33);
        assert_eq!(run.symmetry_defects, 0);
    }
}
