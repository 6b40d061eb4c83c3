use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continua::{dynamical_ball_component, orbit_diam_exceeds, orbit_diam_sup, FiniteContinuum, TorusGrid};
use crate::error::{Error, Result};
use crate::geometry::{cloud_diameter, cloud_diameter_exceeds, Coord, Space};
use crate::maps::{stable_dir, unstable_dir, MapHandle};
use crate::quotient::{
    alpha_classes, bouquet_dist, bouquet_mesh, induced_map, pillow_anosov, BouquetModel, BouquetPoint,
    QuotientPartition, SemiconjugacyReport,
};

/// Number of levels in the α sweep.
pub const SWEEP_LEVELS: usize = 12;

pub const EVIDENCE_NOTE: &str = "sampled probe: a fail carries a re-checked witness; a pass is evidence, not proof";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Process exit code: 0 pass, 1 fail, 2 inconclusive.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Tube,
    Segment,
    Blob,
}

/// Which continuum generators a probe draws from, and at what scale.
/// Segment lengths and blob radii are log-uniform between two pitches and
/// `max_scale`, independently of α, so families are nested across α.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFamily {
    pub tubes: bool,
    pub segments: bool,
    pub blobs: bool,
    pub max_scale: f64,
    pub blob_nodes: usize,
}

impl Default for SampleFamily {
    fn default() -> Self {
        Self {
            tubes: true,
            segments: true,
            blobs: true,
            max_scale: 0.25,
            blob_nodes: 400,
        }
    }
}

impl SampleFamily {
    fn kinds(&self) -> Vec<SampleKind> {
        let mut k = Vec::new();
        if self.tubes {
            k.push(SampleKind::Tube);
        }
        if self.segments {
            k.push(SampleKind::Segment);
        }
        if self.blobs {
            k.push(SampleKind::Blob);
        }
        k
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub samples: usize,
    pub seed: u64,
    pub family: SampleFamily,
    /// Cap on point-iterates evaluated; samples past it are skipped and an
    /// otherwise clean probe becomes inconclusive.
    pub budget: Option<u64>,
}

impl ProbeConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            family: SampleFamily::default(),
            budget: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probe: String,
    pub map: String,
    pub verdict: Verdict,
    pub alpha: f64,
    pub window: usize,
    pub h: f64,
    pub samples: usize,
    pub evaluated: usize,
    pub seed: u64,
    pub family: SampleFamily,
    pub witness: Option<FiniteContinuum>,
    pub witness_kind: Option<SampleKind>,
    pub witness_sample: Option<usize>,
    pub witness_diam: Option<f64>,
    pub witness_sup: Option<f64>,
    /// Independent re-evaluation of the witness confirmed the violation.
    pub witness_rechecked: bool,
    pub note: String,
}

impl ProbeReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub const CSV_HEADER: &'static str = "alpha,verdict,witness_diam,sup_diam";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        format!(
            "{},{},{},{}",
            self.alpha,
            self.verdict.as_str(),
            opt(self.witness_diam),
            opt(self.witness_sup)
        )
    }
}

pub fn reports_to_csv(reports: &[ProbeReport]) -> String {
    let mut out = String::from(ProbeReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Sample `index` of the family: its own counter-based stream makes the
/// draw independent of evaluation order.
fn draw(
    index: usize,
    kinds: &[SampleKind],
    family: &SampleFamily,
    f: &MapHandle,
    tube_alpha: f64,
    window: usize,
    grid: &TorusGrid,
    seed: u64,
) -> Result<(SampleKind, FiniteContinuum)> {
    let mut rng = sample_rng(seed, index);
    let kind = kinds[index % kinds.len()];
    let centre = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
    let h = grid.h();
    let c = match kind {
        SampleKind::Tube => dynamical_ball_component(centre, f, tube_alpha, window, grid)?,
        SampleKind::Segment => {
            let len = log_uniform(&mut rng, 2.0 * h, family.max_scale);
            let dir = match (index / kinds.len()) % 3 {
                0 => unstable_dir(),
                1 => stable_dir(),
                _ => {
                    let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    [t.cos(), t.sin()]
                }
            };
            FiniteContinuum::segment(grid, centre, dir, len)
        }
        SampleKind::Blob => {
            let radius = log_uniform(&mut rng, 2.0 * h, family.max_scale / 2.0);
            FiniteContinuum::blob(grid, &mut rng, centre, radius, family.blob_nodes)
        }
    };
    Ok((kind, c))
}

fn draw_family(
    f: &MapHandle,
    tube_alpha: f64,
    window: usize,
    grid: &TorusGrid,
    cfg: &ProbeConfig,
) -> Result<Vec<(SampleKind, FiniteContinuum)>> {
    let kinds = cfg.family.kinds();
    if kinds.is_empty() {
        return Err(Error::InvalidParameter("sample family has no generators".into()));
    }
    (0..cfg.samples)
        .into_par_iter()
        .map(|i| draw(i, &kinds, &cfg.family, f, tube_alpha, window, grid, cfg.seed))
        .collect()
}

/// Samples that fit in the point-iterate budget, in order.
fn within_budget(family: &[(SampleKind, FiniteContinuum)], window: usize, budget: Option<u64>) -> usize {
    let Some(budget) = budget else { return family.len() };
    let mut spent = 0u64;
    for (i, (_, c)) in family.iter().enumerate() {
        spent += c.len() as u64 * (2 * window as u64 + 1);
        if spent > budget {
            return i;
        }
    }
    family.len()
}

/// Window-truncated sup recomputed point by point from full orbits; the
/// independent check behind every fail verdict.
pub fn recheck_sup(c: &FiniteContinuum, f: &MapHandle, window: usize) -> Result<f64> {
    let orbits: Vec<Vec<Coord>> = c.points().iter().map(|&p| f.orbit(p, window)).collect::<Result<_>>()?;
    let mut sup = 0.0f64;
    for i in 0..=2 * window {
        let img: Vec<Coord> = orbits.iter().map(|o| o[i]).collect();
        sup = sup.max(cloud_diameter(f.space(), &img));
    }
    Ok(sup)
}

/// Probe of half cw-expansivity at scale α: look for a continuum with
/// `α/2 < sup_{|i|≤N} diam f^i(C) ≤ α`.
pub fn e_alpha_probe(
    f: &MapHandle,
    alpha: f64,
    window: usize,
    grid: &TorusGrid,
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    if !(alpha > 4.0 * grid.h()) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} must exceed four grid pitches ({})",
            4.0 * grid.h()
        )));
    }
    if grid.space() != f.space() {
        return Err(Error::SpaceMismatch(grid.space(), f.space()));
    }
    let family = draw_family(f, alpha, window, grid, cfg)?;
    let evaluated = within_budget(&family, window, cfg.budget);
    let sups: Vec<Option<f64>> = family[..evaluated]
        .par_iter()
        .map(|(_, c)| {
            if orbit_diam_exceeds(c.points(), f, window, alpha)? {
                return Ok(None);
            }
            let sup = orbit_diam_sup(c, f, window)?.sup_diam;
            Ok((sup > alpha / 2.0).then_some(sup))
        })
        .collect::<Result<_>>()?;
    let mut report = ProbeReport {
        probe: "e_alpha".into(),
        map: f.name(),
        verdict: Verdict::Pass,
        alpha,
        window,
        h: grid.h(),
        samples: cfg.samples,
        evaluated,
        seed: cfg.seed,
        family: cfg.family.clone(),
        witness: None,
        witness_kind: None,
        witness_sample: None,
        witness_diam: None,
        witness_sup: None,
        witness_rechecked: false,
        note: EVIDENCE_NOTE.into(),
    };
    if let Some(i) = sups.iter().position(|s| s.is_some()) {
        let (kind, c) = &family[i];
        let sup = recheck_sup(c, f, window)?;
        let confirmed = sup > alpha / 2.0 && sup <= alpha;
        report.verdict = if confirmed { Verdict::Fail } else { Verdict::Inconclusive };
        report.witness_kind = Some(*kind);
        report.witness_sample = Some(i);
        report.witness_diam = Some(c.diameter());
        report.witness_sup = Some(sup);
        report.witness_rechecked = confirmed;
        report.witness = Some(c.clone());
    } else if evaluated < cfg.samples {
        report.verdict = Verdict::Inconclusive;
    }
    Ok(report)
}

/// `12` log-spaced levels from `4h` to `diam(M)/2`.
pub fn sweep_levels(h: f64, diameter: f64) -> Vec<f64> {
    let (lo, hi) = (4.0 * h, diameter / 2.0);
    (0..SWEEP_LEVELS)
        .map(|k| lo * (hi / lo).powf(k as f64 / (SWEEP_LEVELS - 1) as f64))
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpansivityReport {
    pub map: String,
    /// Largest level every sampled nontrivial continuum exceeds within the
    /// window; 0 when even the smallest level fails.
    pub estimate: f64,
    pub levels: Vec<f64>,
    /// Smallest observed window sup, capped at the top level.
    pub min_sup: f64,
    pub window: usize,
    pub samples: usize,
    pub nontrivial: usize,
    pub seed: u64,
    pub weakest: Option<FiniteContinuum>,
    pub weakest_kind: Option<SampleKind>,
    pub note: String,
}

impl ExpansivityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Diameter functional used by the sweep: `None` once the cloud's
/// diameter exceeds `bound`, else the diameter.
type Measure<'a> = dyn Fn(&[Coord], f64) -> Option<f64> + Sync + 'a;

/// Window sup of `measure` over iterates, visited `0, 1, -1, …`, capped:
/// returns `None` as soon as some iterate exceeds `cap`.
fn capped_sup(pts: &[Coord], f: &MapHandle, window: usize, cap: f64, measure: &Measure) -> Result<Option<f64>> {
    let Some(mut sup) = measure(pts, cap) else { return Ok(None) };
    if f.is_identity() {
        return Ok(Some(sup));
    }
    let (mut fwd, mut bwd) = (pts.to_vec(), pts.to_vec());
    for _ in 0..window {
        for p in fwd.iter_mut() {
            *p = f.apply(*p)?;
        }
        match measure(&fwd, cap) {
            None => return Ok(None),
            Some(d) => sup = sup.max(d),
        }
        for p in bwd.iter_mut() {
            *p = f.apply_inverse(*p)?;
        }
        match measure(&bwd, cap) {
            None => return Ok(None),
            Some(d) => sup = sup.max(d),
        }
    }
    Ok(Some(sup))
}

fn sweep(
    f: &MapHandle,
    window: usize,
    family: &[(SampleKind, FiniteContinuum)],
    levels: &[f64],
    measure: &Measure,
    seed: u64,
) -> Result<ExpansivityReport> {
    let top = levels.last().copied().unwrap_or(0.0);
    // Continua that are points for the measure are trivial and skipped.
    let sups: Vec<Option<f64>> = family
        .par_iter()
        .map(|(_, c)| {
            if c.len() < 2 || measure(c.points(), f64::INFINITY) == Some(0.0) {
                return Ok(None);
            }
            Ok(Some(capped_sup(c.points(), f, window, top, measure)?.unwrap_or(f64::INFINITY)))
        })
        .collect::<Result<_>>()?;
    let mut weakest: Option<usize> = None;
    let mut min_sup = f64::INFINITY;
    for (i, s) in sups.iter().enumerate() {
        if let Some(s) = *s {
            if s < min_sup {
                min_sup = s;
                weakest = Some(i);
            }
        }
    }
    let estimate = levels.iter().copied().filter(|&l| l < min_sup).fold(0.0, f64::max);
    Ok(ExpansivityReport {
        map: f.name(),
        estimate,
        levels: levels.to_vec(),
        min_sup: min_sup.min(top),
        window,
        samples: family.len(),
        nontrivial: sups.iter().filter(|s| s.is_some()).count(),
        seed,
        weakest: weakest.map(|i| family[i].1.clone()),
        weakest_kind: weakest.map(|i| family[i].0),
        note: EVIDENCE_NOTE.into(),
    })
}

fn space_measure(space: Space) -> impl Fn(&[Coord], f64) -> Option<f64> + Sync {
    move |pts: &[Coord], bound: f64| {
        if bound.is_finite() && cloud_diameter_exceeds(space, pts, bound) {
            None
        } else {
            Some(cloud_diameter(space, pts))
        }
    }
}

fn estimate_family(
    f: &MapHandle,
    window: usize,
    grid: &TorusGrid,
    cfg: &ProbeConfig,
    region: Option<&[bool]>,
) -> Result<Vec<(SampleKind, FiniteContinuum)>> {
    let tube_alpha = 4.0 * grid.h() * (1.0 + 1e-9);
    let family = draw_family(f, tube_alpha, window, grid, cfg)?;
    let Some(region) = region else { return Ok(family) };
    if region.len() != grid.len() {
        return Err(Error::InvalidParameter("region mask does not match grid".into()));
    }
    // Keep only continua lying in the region.
    Ok(family
        .into_iter()
        .filter(|(_, c)| c.points().iter().all(|&p| region[grid.snap(p)]))
        .collect())
}

/// Lower estimate of the cw-expansivity constant at resolution: the
/// largest sweep level below every sampled nontrivial continuum's window
/// sup.
pub fn expansivity_estimate(f: &MapHandle, window: usize, grid: &TorusGrid, cfg: &ProbeConfig) -> Result<ExpansivityReport> {
    expansivity_estimate_in(f, window, grid, cfg, None)
}

/// As [`expansivity_estimate`], restricted to continua inside `region`.
pub fn expansivity_estimate_in(
    f: &MapHandle,
    window: usize,
    grid: &TorusGrid,
    cfg: &ProbeConfig,
    region: Option<&[bool]>,
) -> Result<ExpansivityReport> {
    if grid.space() != f.space() {
        return Err(Error::SpaceMismatch(grid.space(), f.space()));
    }
    let diameter = f.space().total_diameter().expect("compact space");
    let levels = sweep_levels(grid.h(), diameter);
    let family = estimate_family(f, window, grid, cfg, region)?;
    sweep(f, window, &family, &levels, &space_measure(f.space()), cfg.seed)
}

/// Whether every nontrivial continuum of the report's family exceeds `level`
/// within the window; re-runs the defining condition.
pub fn sweep_condition_holds(f: &MapHandle, window: usize, family: &[FiniteContinuum], level: f64) -> Result<bool> {
    for c in family {
        if c.len() > 1 && c.diameter() > 0.0 && !orbit_diam_exceeds(c.points(), f, window, level)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The sample family an estimate with this configuration draws.
pub fn estimate_sample_family(f: &MapHandle, window: usize, grid: &TorusGrid, cfg: &ProbeConfig) -> Result<Vec<FiniteContinuum>> {
    Ok(estimate_family(f, window, grid, cfg, None)?.into_iter().map(|(_, c)| c).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlmostCwExpReport {
    pub probe: ProbeReport,
    pub semiconjugacy: SemiconjugacyReport,
    pub quotient_expansivity: ExpansivityReport,
    pub epsilon: f64,
    pub alphas_tried: Vec<f64>,
    pub quotient_pitch: f64,
}

/// Almost cw-expansivity at scale ε: find α-classes of mesh `< ε`, then
/// estimate cw-expansivity of the quotient dynamics by measuring sampled
/// continua through `π`.
pub fn almost_cwexp_probe(
    f: &MapHandle,
    epsilon: f64,
    window: usize,
    grid: &TorusGrid,
    cfg: &ProbeConfig,
) -> Result<AlmostCwExpReport> {
    if !(epsilon > 4.0 * grid.h()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must exceed four grid pitches ({})",
            4.0 * grid.h()
        )));
    }
    let mut alphas_tried = Vec::new();
    let mut alpha = 0.9 * epsilon;
    let mut chosen: Option<QuotientPartition> = None;
    while alpha > 4.0 * grid.h() {
        alphas_tried.push(alpha);
        let p = alpha_classes(f, alpha, window, grid)?;
        if p.mesh() < epsilon {
            chosen = Some(p);
            break;
        }
        alpha /= 2.0;
    }
    let Some(partition) = chosen else { return Err(Error::MeshNotAchieved { epsilon }) };
    let (_, semiconjugacy) = induced_map(&partition, f)?;
    let space = f.space();
    let measure = |pts: &[Coord], bound: f64| {
        let projected: Vec<Coord> = pts.iter().map(|&p| partition.project(p)).collect();
        space_measure(space)(&projected, bound)
    };
    // Quotient continua are only resolved above the quotient's own pitch.
    let quotient_pitch = partition.quotient_pitch().max(grid.h());
    let diameter = space.total_diameter().expect("compact space");
    let levels = if 4.0 * quotient_pitch < diameter / 2.0 {
        sweep_levels(quotient_pitch, diameter)
    } else {
        Vec::new()
    };
    let floor = 4.0 * quotient_pitch;
    let family = estimate_family(f, window, grid, cfg, None)?;
    let mut quotient_expansivity = sweep(f, window, &family, &levels, &measure, cfg.seed)?;
    let pass = semiconjugacy.mesh < epsilon && quotient_expansivity.estimate > 0.0;
    let mut probe = ProbeReport {
        probe: "almost_cwexp".into(),
        map: f.name(),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        alpha: partition.alpha(),
        window,
        h: grid.h(),
        samples: cfg.samples,
        evaluated: family.len(),
        seed: cfg.seed,
        family: cfg.family.clone(),
        witness: None,
        witness_kind: None,
        witness_sample: None,
        witness_diam: None,
        witness_sup: None,
        witness_rechecked: false,
        note: EVIDENCE_NOTE.into(),
    };
    if !pass {
        if quotient_expansivity.weakest.is_none() {
            // Nothing was measured below the top level: find the weakest
            // nontrivial sample without a cap.
            let sups: Vec<Option<f64>> = family
                .par_iter()
                .map(|(_, c)| {
                    if c.len() < 2 || measure(c.points(), f64::INFINITY) == Some(0.0) {
                        return Ok(None);
                    }
                    capped_sup(c.points(), f, window, f64::INFINITY, &measure)
                })
                .collect::<Result<_>>()?;
            let weakest = sups
                .iter()
                .enumerate()
                .filter_map(|(i, s)| s.map(|s| (i, s)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((i, s)) = weakest {
                quotient_expansivity.weakest = Some(family[i].1.clone());
                quotient_expansivity.weakest_kind = Some(family[i].0);
                quotient_expansivity.min_sup = s;
            }
        }
        if let Some(w) = &quotient_expansivity.weakest {
            // Re-check: the witness's projected orbit never exceeds the
            // smallest resolvable level.
            let sup = capped_sup(w.points(), f, window, f64::INFINITY, &measure)?.unwrap_or(f64::INFINITY);
            probe.witness_rechecked = sup <= levels.first().copied().unwrap_or(floor).max(floor);
            probe.witness_diam = Some(w.diameter());
            probe.witness_sup = Some(sup);
            probe.witness_kind = quotient_expansivity.weakest_kind;
            probe.witness = Some(w.clone());
        }
    }
    Ok(AlmostCwExpReport {
        probe,
        semiconjugacy,
        quotient_expansivity,
        epsilon,
        alphas_tried,
        quotient_pitch,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BouquetReport {
    pub verdict: Verdict,
    pub epsilon: f64,
    pub model: BouquetModel,
    pub mesh: f64,
    pub geometric_mesh: f64,
    pub residual: f64,
    /// cw-expansivity estimate of `g_n` on its smallest sphere, measured in
    /// the embedding.
    pub estimate: f64,
    pub levels: Vec<f64>,
    pub window: usize,
    pub samples: usize,
    pub seed: u64,
    pub note: String,
}

impl BouquetReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Almost cw-expansivity of the bouquet: collapse every sphere of mesh
/// contribution `≥ ε`, check the semiconjugacy, and estimate cw-expansivity
/// of the per-sphere dynamics on the smallest kept sphere, where it is
/// weakest.
pub fn bouquet_almost_cwexp_probe(epsilon: f64, window: usize, grid_n: usize, cfg: &ProbeConfig) -> Result<BouquetReport> {
    let level = BouquetModel::level_for(epsilon)?;
    let model = BouquetModel::new(level + 50, level)?;
    let mesh = bouquet_mesh(level)?;
    let geometric_mesh = model.geometric_mesh();
    let residual = model.semiconjugacy_residual(cfg.samples.max(1), cfg.seed)?;
    let f = pillow_anosov();
    let grid = TorusGrid::new(grid_n, Space::Sphere)?;
    let measure = |pts: &[Coord], bound: f64| {
        let emb: Vec<[f64; 3]> = pts
            .iter()
            .map(|&p| model.embed(BouquetPoint { sphere: level, chart: p }))
            .collect();
        let mut d = 0.0f64;
        for i in 0..emb.len() {
            for j in i + 1..emb.len() {
                d = d.max(bouquet_dist(emb[i], emb[j]));
                if d > bound {
                    return None;
                }
            }
        }
        Some(d)
    };
    let sphere_diam = 2.0 / level as f64;
    // Chart pitch in the embedding, bounded by the sphere's circumference
    // over the chart's nodes per side.
    let pitch = std::f64::consts::PI * sphere_diam / grid_n as f64;
    let levels = sweep_levels(pitch, sphere_diam);
    let mut family_cfg = cfg.clone();
    family_cfg.family.tubes = false;
    family_cfg.family.blob_nodes = family_cfg.family.blob_nodes.min(64);
    let family = draw_family(&f, 0.0, window, &grid, &family_cfg)?;
    let rep = sweep(&f, window, &family, &levels, &measure, cfg.seed)?;
    let pass = mesh < epsilon && residual == 0.0 && rep.estimate > 0.0;
    Ok(BouquetReport {
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        epsilon,
        model,
        mesh,
        geometric_mesh,
        residual,
        estimate: rep.estimate,
        levels,
        window,
        samples: rep.samples,
        seed: cfg.seed,
        note: EVIDENCE_NOTE.into(),
    })
}

/// Evidence for `F_n = ∪_{0<α<1/n} E_α`, aggregated from E_α probe reports;
/// this is a summary over the sampled sweep, not set membership.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnLevel {
    pub n: usize,
    pub passing_alphas: Vec<f64>,
    pub evidence: bool,
}

pub fn f_n_aggregate(reports: &[ProbeReport], n_max: usize) -> Vec<FnLevel> {
    (1..=n_max)
        .map(|n| {
            let passing_alphas: Vec<f64> = reports
                .iter()
                .filter(|r| r.alpha < 1.0 / n as f64 && r.verdict == Verdict::Pass)
                .map(|r| r.alpha)
                .collect();
            FnLevel {
                n,
                evidence: !passing_alphas.is_empty(),
                passing_alphas,
            }
        })
        .collect()
}

/// Evidence for the residual set `G = ∩ F_n` up to `n_max`.
pub fn g_evidence(levels: &[FnLevel]) -> bool {
    !levels.is_empty() && levels.iter().all(|l| l.evidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::BumpSpec;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n, Space::Torus).unwrap()
    }

    #[test]
    fn identity_fails_with_rechecked_witness() {
        let g = grid(256);
        let f = MapHandle::identity(Space::Torus);
        for alpha in [0.05, 0.1, 0.3] {
            let rep = e_alpha_probe(&f, alpha, 5, &g, &ProbeConfig::new(60, 1)).unwrap();
            assert_eq!(rep.verdict, Verdict::Fail, "alpha {alpha}");
            assert!(rep.witness_rechecked);
            let w = rep.witness.as_ref().unwrap();
            let sup = recheck_sup(w, &f, 5).unwrap();
            assert!(sup > alpha / 2.0 && sup <= alpha);
        }
    }

    #[test]
    fn anosov_passes_and_is_monotone_in_alpha() {
        let g = grid(256);
        let f = MapHandle::anosov();
        for alpha in [0.1, 0.05, 0.025] {
            let rep = e_alpha_probe(&f, alpha, 30, &g, &ProbeConfig::new(150, 7)).unwrap();
            assert_eq!(rep.verdict, Verdict::Pass, "alpha {alpha}");
            assert!(rep.witness.is_none());
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let g = grid(128);
        let f = MapHandle::anosov();
        let a = e_alpha_probe(&f, 0.1, 10, &g, &ProbeConfig::new(50, 3)).unwrap().to_json().unwrap();
        let b = e_alpha_probe(&f, 0.1, 10, &g, &ProbeConfig::new(50, 3)).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let c = e_alpha_probe(&f, 0.1, 10, &g, &ProbeConfig::new(50, 4)).unwrap().to_json().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn budget_exhaustion_is_inconclusive() {
        let g = grid(128);
        let mut cfg = ProbeConfig::new(30, 1);
        cfg.budget = Some(500);
        let rep = e_alpha_probe(&MapHandle::anosov(), 0.1, 10, &g, &cfg).unwrap();
        assert_eq!(rep.verdict, Verdict::Inconclusive);
        assert!(rep.evaluated < 30);
    }

    #[test]
    fn expansivity_estimates() {
        let g = grid(256);
        let cfg = ProbeConfig::new(60, 2);
        let id = expansivity_estimate(&MapHandle::identity(Space::Torus), 10, &g, &cfg).unwrap();
        assert_eq!(id.estimate, 0.0);
        let f = MapHandle::anosov();
        let an = expansivity_estimate(&f, 30, &g, &cfg).unwrap();
        assert!(an.estimate >= 0.05, "{}", an.estimate);
        let family = estimate_sample_family(&f, 30, &g, &cfg).unwrap();
        assert!(sweep_condition_holds(&f, 30, &family, an.estimate).unwrap());
        let levels = sweep_levels(g.h(), crate::geometry::TORUS_DIAMETER);
        assert_eq!(levels.len(), 12);
        assert!((levels[0] - 4.0 * g.h()).abs() < 1e-15);
        assert!((levels[11] - crate::geometry::TORUS_DIAMETER / 2.0).abs() < 1e-12);
    }

    #[test]
    fn pda_attractor_piece_is_expansive() {
        let n = 128;
        let f = MapHandle::pda(BumpSpec::tuned().unwrap());
        let g = TorusGrid::new(n, Space::Sphere).unwrap();
        let run = crate::attractor::render_attractor(&f, n, 12).unwrap();
        let k = run.hausdorff.len() - 1;
        let region: Vec<bool> = (0..n * n).map(|idx| run.member(k, idx)).collect();
        let mut cfg = ProbeConfig::new(120, 5);
        cfg.family.max_scale = 0.05;
        let rep = expansivity_estimate_in(&f, 8, &g, &cfg, Some(&region)).unwrap();
        assert!(rep.nontrivial > 0);
        assert!(rep.estimate > 0.0, "{rep:?}");
    }

    #[test]
    fn almost_cwexp_examples() {
        let g = grid(64);
        let cfg = ProbeConfig::new(40, 1);
        let an = almost_cwexp_probe(&MapHandle::anosov(), 0.2, 10, &g, &cfg).unwrap();
        assert_eq!(an.probe.verdict, Verdict::Pass);
        assert_eq!(an.semiconjugacy.mesh, 0.0);
        assert_eq!(an.semiconjugacy.residual, 0.0);
        let id = almost_cwexp_probe(&MapHandle::identity(Space::Torus), 0.2, 3, &g, &cfg).unwrap();
        assert_eq!(id.probe.verdict, Verdict::Fail);
        assert!(id.probe.witness_rechecked);
        assert!(id.semiconjugacy.mesh < 0.2);
    }

    #[test]
    fn bouquet_is_almost_cw_expansive() {
        let rep = bouquet_almost_cwexp_probe(0.3, 10, 64, &ProbeConfig::new(40, 1)).unwrap();
        assert_eq!(rep.model.collapse_level, 6);
        assert_eq!(rep.verdict, Verdict::Pass, "{rep:?}");
        assert!((rep.mesh - 2.0 / 7.0).abs() < 1e-15);
        assert!((rep.geometric_mesh - rep.mesh).abs() < 1e-12);
        assert_eq!(rep.residual, 0.0);
    }

    #[test]
    fn f_n_aggregation() {
        let g = grid(128);
        let f = MapHandle::anosov();
        let reports: Vec<ProbeReport> = [0.4, 0.2, 0.1]
            .iter()
            .map(|&a| e_alpha_probe(&f, a, 10, &g, &ProbeConfig::new(20, 1)).unwrap())
            .collect();
        let levels = f_n_aggregate(&reports, 5);
        assert!(!levels[0].passing_alphas.is_empty() || reports[0].verdict != Verdict::Pass);
        assert_eq!(levels.len(), 5);
        let csv = reports_to_csv(&reports);
        assert!(csv.starts_with("alpha,verdict,witness_diam,sup_diam\n"));
        assert_eq!(csv.lines().count(), 4);
        let _ = g_evidence(&levels);
    }
}
