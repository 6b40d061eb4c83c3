use serde::{Deserialize, Serialize};

use super::{is_meagre, Decomposition};
use crate::error::{Error, Result};
use crate::geometry::{euclid, Coord};

pub const DEFAULT_ARC_BUDGET: usize = 64;

/// Recursion guard for a single pass.
const MAX_DEPTH: usize = 64;
/// Off-plaque search radius, in lattice pitches.
const SEARCH_PITCHES: i64 = 64;

/// A sampled curve `φ: [0,1] → B`. Closed arcs repeat their anchor as the
/// last sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamArc {
    samples: Vec<Coord>,
    params: Vec<f64>,
    closed: bool,
}

impl ParamArc {
    pub fn new(samples: Vec<Coord>, params: Vec<f64>, closed: bool) -> Result<Self> {
        if samples.len() < 2 || samples.len() != params.len() {
            return Err(Error::InvalidParameter("arc needs at least two samples with matching parameters".into()));
        }
        if params[0] != 0.0 || *params.last().unwrap() != 1.0 || params.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("arc parameters must increase from 0 to 1".into()));
        }
        if closed && samples[0] != *samples.last().unwrap() {
            return Err(Error::InvalidParameter("closed arc must end at its anchor".into()));
        }
        Ok(Self { samples, params, closed })
    }

    /// Polyline through `vertices`, parametrized by arclength and sampled
    /// with steps of at most `pitch`.
    pub fn polyline(vertices: &[Coord], pitch: f64, closed: bool) -> Result<Self> {
        let mut verts = vertices.to_vec();
        if closed && verts.first() != verts.last() {
            verts.push(verts[0]);
        }
        let mut samples = vec![verts[0]];
        for w in verts.windows(2) {
            let len = euclid(w[0], w[1]);
            let steps = (len / pitch).ceil().max(1.0) as usize;
            for k in 1..=steps {
                let t = k as f64 / steps as f64;
                samples.push([w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]);
            }
        }
        if closed {
            *samples.last_mut().unwrap() = samples[0];
        }
        let mut acc = vec![0.0];
        for w in samples.windows(2) {
            acc.push(acc.last().unwrap() + euclid(w[0], w[1]));
        }
        let total = *acc.last().unwrap();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("degenerate arc".into()));
        }
        let mut params: Vec<f64> = acc.iter().map(|a| a / total).collect();
        *params.last_mut().unwrap() = 1.0;
        Self::new(samples, params, closed)
    }

    pub fn segment(a: Coord, b: Coord, pitch: f64) -> Result<Self> {
        Self::polyline(&[a, b], pitch, false)
    }

    /// Circle of radius `r` about `center`, anchored at angle 0.
    pub fn circle(center: Coord, r: f64, pitch: f64) -> Result<Self> {
        let m = ((std::f64::consts::TAU * r / pitch).ceil() as usize).max(8);
        let mut samples: Vec<Coord> = (0..m)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / m as f64;
                [center[0] + r * t.cos(), center[1] + r * t.sin()]
            })
            .collect();
        samples.push(samples[0]);
        let params = (0..=m).map(|k| k as f64 / m as f64).collect();
        Self::new(samples, params, true)
    }

    pub fn samples(&self) -> &[Coord] {
        &self.samples
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn max_step(&self) -> f64 {
        self.samples.windows(2).map(|w| euclid(w[0], w[1])).fold(0.0, f64::max)
    }

    /// Number of distinct sample positions (the anchor of a closed arc counts once).
    fn cycle_len(&self) -> usize {
        if self.closed {
            self.samples.len() - 1
        } else {
            self.samples.len()
        }
    }

    /// Parameter of unrolled index `k` (closed arcs wrap, adding 1 per turn).
    fn unrolled_param(&self, k: usize) -> f64 {
        let m = self.cycle_len();
        if self.closed {
            self.params[k % m] + (k / m) as f64
        } else {
            self.params[k]
        }
    }

    fn at(&self, k: usize) -> Coord {
        self.samples[k % self.cycle_len()]
    }

    fn set(&mut self, k: usize, p: Coord) {
        let m = self.cycle_len();
        let k = k % m;
        self.samples[k] = p;
        if self.closed && k == 0 {
            self.samples[m] = p;
        }
    }
}

/// A maximal run of consecutive samples in one plaque, as unrolled indices.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Run {
    start: usize,
    end: usize,
    plaque: usize,
}

fn plaque_ids(arc: &ParamArc, q: &Decomposition) -> Result<Vec<usize>> {
    arc.samples[..arc.cycle_len()]
        .iter()
        .map(|&p| Ok(q.plaque_id(q.locate(p)?).expect("located nodes are in the domain")))
        .collect()
}

/// Maximal runs over unrolled indices `lo..=hi`.
fn runs_in(arc: &ParamArc, ids: &[usize], lo: usize, hi: usize) -> Vec<Run> {
    let m = arc.cycle_len();
    let mut out = Vec::new();
    let mut start = lo;
    for k in lo + 1..=hi + 1 {
        if k > hi || ids[k % m] != ids[start % m] {
            out.push(Run {
                start,
                end: k - 1,
                plaque: ids[start % m],
            });
            start = k;
        }
    }
    out
}

/// Runs over the whole arc; on a closed arc the run through the anchor is
/// merged across it.
fn all_runs(arc: &ParamArc, ids: &[usize]) -> Vec<Run> {
    let m = arc.cycle_len();
    let mut runs = runs_in(arc, ids, 0, m - 1);
    if arc.closed && runs.len() > 1 && runs[0].plaque == runs.last().unwrap().plaque {
        let first = runs.remove(0);
        let last = runs.last_mut().unwrap();
        last.end = first.end + m;
    } else if arc.closed && runs.len() == 1 {
        runs[0].end = m;
    }
    if !arc.closed {
        return runs;
    }
    runs
}

fn span(arc: &ParamArc, r: &Run) -> f64 {
    arc.unrolled_param(r.end) - arc.unrolled_param(r.start)
}

/// `diam(φ̃*Q)`: the longest parameter interval whose samples stay in one
/// plaque. A value of at most one sample step means cw-transverse at
/// resolution.
pub fn arc_transversality(arc: &ParamArc, q: &Decomposition) -> Result<f64> {
    let ids = plaque_ids(arc, q)?;
    Ok(all_runs(arc, &ids).iter().map(|r| span(arc, r)).fold(0.0, f64::max))
}

/// Parameter intervals of length `≥ eps` mapped into a single plaque.
pub fn offending_intervals(arc: &ParamArc, q: &Decomposition, eps: f64) -> Result<Vec<(f64, f64)>> {
    let ids = plaque_ids(arc, q)?;
    Ok(all_runs(arc, &ids)
        .iter()
        .filter(|r| span(arc, r) >= eps)
        .map(|r| (arc.unrolled_param(r.start), arc.unrolled_param(r.end)))
        .collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbReport {
    pub arc: ParamArc,
    pub passes: usize,
    /// Offending-interval count before each pass, then after the last one.
    pub counts: Vec<usize>,
    pub moves: usize,
    pub max_displacement: f64,
    pub transversality: f64,
}

struct Pusher<'a> {
    q: &'a Decomposition,
    eps: f64,
    moves: usize,
    max_moves: usize,
}

impl Pusher<'_> {
    /// Nearest domain node to `p` whose plaque is not excluded; rings are
    /// scanned outward and the search stops once no closer node can appear.
    fn off_plaque(&self, p: Coord, excluded: &[usize]) -> Result<Coord> {
        let lat = self.q.lattice();
        let centre = self.q.locate(p)?;
        let mut best: Option<(f64, usize)> = None;
        for r in 1..=SEARCH_PITCHES {
            if let Some((d, _)) = best {
                if (r - 1) as f64 * lat.h > d {
                    break;
                }
            }
            for di in -r..=r {
                for dj in -r..=r {
                    if di.abs().max(dj.abs()) != r {
                        continue;
                    }
                    let Some(k) = lat.offset(centre, di, dj) else { continue };
                    let Some(id) = self.q.plaque_id(k) else { continue };
                    if excluded.contains(&id) {
                        continue;
                    }
                    let d = euclid(lat.node(k), p);
                    if best.map_or(true, |(bd, bk)| d < bd || (d == bd && k < bk)) {
                        best = Some((d, k));
                    }
                }
            }
        }
        best.map(|(_, k)| lat.node(k))
            .ok_or_else(|| Error::InvalidParameter(format!("no off-plaque node within {SEARCH_PITCHES} pitches of {p:?}")))
    }

    /// Resolve every run of span `≥ eps` inside `lo..=hi`, keeping samples
    /// `lo` and `hi` fixed.
    fn resolve(&mut self, arc: &mut ParamArc, lo: usize, hi: usize, excluded: &mut Vec<usize>, depth: usize) -> Result<()> {
        loop {
            let ids = plaque_ids(arc, self.q)?;
            let Some(run) = runs_in(arc, &ids, lo, hi).into_iter().find(|r| span(arc, r) >= self.eps) else {
                return Ok(());
            };
            if depth >= MAX_DEPTH || self.moves >= self.max_moves || run.end - run.start < 2 {
                return Err(Error::BudgetExhausted {
                    remaining: vec![(arc.unrolled_param(run.start), arc.unrolled_param(run.end))],
                });
            }
            let mid = (run.start + run.end) / 2;
            excluded.push(run.plaque);
            let p = self.off_plaque(arc.at(mid), excluded)?;
            self.moves += 1;
            let (a, b) = (arc.at(run.start), arc.at(run.end));
            let (ta, tm, tb) = (
                arc.unrolled_param(run.start),
                arc.unrolled_param(mid),
                arc.unrolled_param(run.end),
            );
            for k in run.start + 1..run.end {
                let t = arc.unrolled_param(k);
                let (from, to, s) = if k <= mid {
                    (a, p, (t - ta) / (tm - ta))
                } else {
                    (p, b, (t - tm) / (tb - tm))
                };
                arc.set(k, [from[0] + s * (to[0] - from[0]), from[1] + s * (to[1] - from[1])]);
            }
            self.resolve(arc, run.start, run.end, excluded, depth + 1)?;
            excluded.pop();
        }
    }
}

/// Push an arc off the plaques it runs along: each pass takes the first
/// parameter interval of length `≥ eps` inside one plaque, moves its
/// midpoint sample to the nearest node of another plaque, re-interpolates
/// linearly, and recurses on whatever offending pieces remain inside that
/// interval. The interval's end samples never move, so the samples outside
/// it are untouched and each pass removes exactly one offending interval.
pub fn perturb_arc(arc: &ParamArc, q: &Decomposition, eps: f64, budget: usize) -> Result<PerturbReport> {
    is_meagre(q)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {eps} must be positive")));
    }
    let mut out = arc.clone();
    let mut pusher = Pusher {
        q,
        eps,
        moves: 0,
        max_moves: 100_000,
    };
    let mut counts = Vec::new();
    let mut passes = 0;
    loop {
        let ids = plaque_ids(&out, q)?;
        let offending: Vec<Run> = all_runs(&out, &ids).into_iter().filter(|r| span(&out, r) >= eps).collect();
        counts.push(offending.len());
        if offending.is_empty() {
            break;
        }
        if passes == budget {
            return Err(Error::BudgetExhausted {
                remaining: offending
                    .iter()
                    .map(|r| (out.unrolled_param(r.start), out.unrolled_param(r.end)))
                    .collect(),
            });
        }
        let run = offending[0];
        pusher.resolve(&mut out, run.start, run.end, &mut Vec::new(), 0)?;
        passes += 1;
    }
    let max_displacement = arc
        .samples
        .iter()
        .zip(&out.samples)
        .map(|(a, b)| euclid(*a, *b))
        .fold(0.0, f64::max);
    let transversality = arc_transversality(&out, q)?;
    Ok(PerturbReport {
        arc: out,
        passes,
        counts,
        moves: pusher.moves,
        max_displacement,
        transversality,
    })
}
