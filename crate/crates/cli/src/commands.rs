use anyhow::{anyhow, Context};
use serde::Serialize;

use cwexp_core::analysis::{
    almost_cwexp_probe, bouquet_almost_cwexp_probe, e_alpha_probe, expansivity_estimate, reports_to_csv,
    ProbeConfig, Verdict,
};
use cwexp_core::attractor::{half_domain_is_canonical, render_attractor};
use cwexp_core::continua::TorusGrid;
use cwexp_core::decomp::{
    perturb_arc, transversalize, Decomposition, Domain, Histogram, IdentityMap, ParamArc, PlaneMap,
    TransversalizeConfig, TransversalizeReport, DEFAULT_ARC_BUDGET,
};
use cwexp_core::geometry::euclid;
use cwexp_core::maps::MapKind;
use cwexp_core::pnm::GrayImage;
use cwexp_core::quotient::{alpha_classes, bouquet_mesh, induced_map};

use crate::config::{ConfigError, Defaults, RunConfig};
use crate::output::Outputs;

/// Why a command did not produce outputs.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Run(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

impl From<cwexp_core::Error> for Failure {
    fn from(e: cwexp_core::Error) -> Self {
        Failure::Run(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Run(e.into())
    }
}

/// Outputs plus the verdict that becomes the exit code.
pub struct Outcome {
    pub outputs: Outputs,
    pub verdict: Verdict,
    pub summary: String,
}

const H_FINE: f64 = 1.0 / 1024.0;

pub fn defaults(command: &str) -> Defaults {
    let base = Defaults {
        map: "anosov",
        h: H_FINE,
        window: 30,
        alpha: None,
        epsilon: None,
        delta: 0.05,
        samples: 1000,
        max_iter: cwexp_core::attractor::DEFAULT_MAX_ITER,
        p: "vertical",
        q: "vertical",
    };
    match command {
        "render-attractor" => Defaults { map: "da", ..base },
        "transversality" => Defaults {
            map: "identity",
            h: 1.0 / 512.0,
            epsilon: Some(0.1),
            ..base
        },
        "quotient" => Defaults {
            alpha: Some(0.05),
            ..base
        },
        "bouquet" => Defaults {
            map: "identity",
            h: 1.0 / 64.0,
            window: 10,
            epsilon: Some(0.3),
            samples: 200,
            ..base
        },
        _ => base,
    }
}

fn worst(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    verdicts.into_iter().fold(Verdict::Pass, |acc, v| match (acc, v) {
        (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
        (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
        _ => Verdict::Pass,
    })
}

fn pass_if(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

pub fn cmd_render_attractor(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let f = cfg.map_handle()?;
    if !matches!(f.kind(), MapKind::Da(_) | MapKind::Pda(_)) {
        return Err(ConfigError(format!("field `map`: render-attractor needs da or pda, got {}", cfg.map)).into());
    }
    let n = cfg.grid_n();
    let run = render_attractor(&f, n, cfg.max_iter)?;
    let mut out = Outputs::default();
    for k in 0..=run.hausdorff.len() {
        out.add(format!("attractor_k{k:02}.pgm"), run.image(k).to_p5()?);
    }
    out.add("attractor_depth.pgm", run.depth_image().to_p5()?);
    out.add("convergence.csv", run.to_csv());

    let decreasing = run.strictly_decreasing();
    let converged = run.converged();
    let canonical = half_domain_is_canonical(n, f.space());
    if !decreasing {
        out.flags.push("hausdorff_not_strictly_decreasing".into());
    }
    if !converged {
        out.flags.push("hausdorff_not_below_2h".into());
    }
    if run.symmetry_defects > 0 || !canonical {
        out.flags.push("image_not_symmetric".into());
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        run: &'a cwexp_core::attractor::AttractorRun,
        strictly_decreasing: bool,
        below_2h: bool,
        half_domain_canonical: bool,
    }
    out.add_json(
        "attractor.json",
        &Summary {
            run: &run,
            strictly_decreasing: decreasing,
            below_2h: converged,
            half_domain_canonical: canonical,
        },
    )?;
    let verdict = pass_if(decreasing && converged && run.symmetry_defects == 0 && canonical);
    let last = run.hausdorff.last().copied().unwrap_or(f64::NAN) / run.h();
    let summary = format!(
        "{} images, last Hausdorff distance {last:.3}h, strictly decreasing: {decreasing}",
        run.hausdorff.len() + 1
    );
    Ok(Outcome {
        outputs: out,
        verdict,
        summary,
    })
}

pub fn cmd_probe(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let f = cfg.map_handle()?;
    let e_alpha = cfg.e_alpha.or(if cfg.expansivity || cfg.almost_cwexp.is_some() {
        None
    } else {
        cfg.alpha
    });
    if e_alpha.is_none() && !cfg.expansivity && cfg.almost_cwexp.is_none() {
        return Err(ConfigError("no probe selected: give --e-alpha, --alpha, --expansivity or --almost-cwexp".into()).into());
    }
    let grid = TorusGrid::new(cfg.grid_n(), f.space())?;
    let mut pcfg = ProbeConfig::new(cfg.samples, cfg.seed);
    pcfg.budget = cfg.budget;
    let mut out = Outputs::default();
    let mut verdicts = Vec::new();
    let mut lines = Vec::new();

    if let Some(alpha) = e_alpha {
        let rep = e_alpha_probe(&f, alpha, cfg.window, &grid, &pcfg)?;
        out.add("e_alpha.json", rep.to_json()? + "\n");
        out.add("e_alpha.csv", reports_to_csv(std::slice::from_ref(&rep)));
        if let Some(w) = &rep.witness {
            #[derive(Serialize)]
            struct Witness<'a> {
                kind: Option<cwexp_core::analysis::SampleKind>,
                sample: Option<usize>,
                diam: Option<f64>,
                sup: Option<f64>,
                rechecked: bool,
                points: &'a [[f64; 2]],
            }
            out.add_json(
                "witness.json",
                &Witness {
                    kind: rep.witness_kind,
                    sample: rep.witness_sample,
                    diam: rep.witness_diam,
                    sup: rep.witness_sup,
                    rechecked: rep.witness_rechecked,
                    points: w.points(),
                },
            )?;
        }
        lines.push(format!("e_alpha({alpha}) {}", rep.verdict.as_str()));
        verdicts.push(rep.verdict);
    }
    if cfg.expansivity {
        let rep = expansivity_estimate(&f, cfg.window, &grid, &pcfg)?;
        out.add("expansivity.json", rep.to_json()? + "\n");
        let v = pass_if(rep.estimate > 0.0);
        lines.push(format!("expansivity estimate {} {}", rep.estimate, v.as_str()));
        verdicts.push(v);
    }
    if let Some(eps) = cfg.almost_cwexp {
        let rep = almost_cwexp_probe(&f, eps, cfg.window, &grid, &pcfg)?;
        out.add_json("almost_cwexp.json", &rep)?;
        lines.push(format!("almost_cwexp({eps}) {}", rep.probe.verdict.as_str()));
        verdicts.push(rep.probe.verdict);
    }
    Ok(Outcome {
        outputs: out,
        verdict: worst(verdicts),
        summary: lines.join("; "),
    })
}

pub fn cmd_quotient(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let f = cfg.map_handle()?;
    let alpha = cfg.alpha.ok_or_else(|| ConfigError("field `alpha`: required by quotient".into()))?;
    let grid = TorusGrid::new(cfg.grid_n(), f.space())?;
    let part = alpha_classes(&f, alpha, cfg.window, &grid)?;
    let (_, semi) = induced_map(&part, &f)?;
    let mut out = Outputs::default();
    out.add("labels.pgm", part.to_pgm());
    out.add("partition.json", part.to_json()? + "\n");
    out.add_json("semiconjugacy.json", &semi)?;
    let meta = part.meta();
    let summary = format!(
        "{} classes ({} nontrivial), mesh {} (alpha {alpha}), residual {}",
        meta.classes, meta.nontrivial_classes, meta.mesh, semi.residual
    );
    Ok(Outcome {
        outputs: out,
        verdict: pass_if(meta.mesh <= alpha),
        summary,
    })
}

pub fn cmd_bouquet(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let eps = cfg.epsilon.ok_or_else(|| ConfigError("field `epsilon`: required by bouquet".into()))?;
    let rep = bouquet_almost_cwexp_probe(eps, cfg.window, cfg.grid_n(), &ProbeConfig::new(cfg.samples, cfg.seed))?;
    let mut out = Outputs::default();
    out.add("bouquet.json", rep.to_json()? + "\n");
    let mut csv = String::from("n,mesh\n");
    for n in 1..=rep.model.n_max {
        csv.push_str(&format!("{n},{:.17e}\n", bouquet_mesh(n)?));
    }
    out.add("mesh.csv", csv);
    let summary = format!(
        "collapse level {}, mesh {:.6}, residual {}, estimate {:.4}",
        rep.model.collapse_level, rep.mesh, rep.residual, rep.estimate
    );
    Ok(Outcome {
        outputs: out,
        verdict: rep.verdict,
        summary,
    })
}

#[derive(Serialize)]
struct BoundaryPass {
    against: String,
    passes: usize,
    counts: Vec<usize>,
    moves: usize,
    max_displacement: f64,
    transversality: f64,
}

/// Heat image on the disk lattice: `value(idx) / top` mapped to 0..=255.
fn heat(d: &Decomposition, top: f64, value: impl Fn(usize) -> f64) -> GrayImage {
    let lat = d.lattice();
    let mask = d.mask();
    GrayImage::from_grid(lat.nx, lat.ny, 255, |i, j| {
        let k = lat.index(i, j);
        if mask[k] {
            (255.0 * (value(k) / top).clamp(0.0, 1.0)).round() as u32
        } else {
            0
        }
    })
}

fn histogram_csv(before: &Histogram, after: &Histogram) -> String {
    let mut s = String::from("which,bin_lo,bin_hi,count\n");
    for (name, h) in [("before", before), ("after", after)] {
        for (b, c) in h.counts.iter().enumerate() {
            s.push_str(&format!("{name},{},{},{c}\n", h.edges[b], h.edges[b + 1]));
        }
    }
    s
}

pub fn cmd_transversality(cfg: &RunConfig) -> Result<Outcome, Failure> {
    if cfg.map != "identity" {
        return Err(ConfigError(format!(
            "field `map`: transversality perturbs the identity of the disk, got {}",
            cfg.map
        ))
        .into());
    }
    let eps = cfg.epsilon.ok_or_else(|| ConfigError("field `epsilon`: required by transversality".into()))?;
    let domain = Domain::Disk { n: cfg.grid_n() };
    let p = Decomposition::builtin(&cfg.p, domain).map_err(|e| ConfigError(format!("field `p`: {e}")))?;
    let q = Decomposition::builtin(&cfg.q, domain).map_err(|e| ConfigError(format!("field `q`: {e}")))?;

    // Boundary preprocessing: push the circle off long plaque runs of both.
    let h = cfg.h;
    let circle = ParamArc::circle([0.0, 0.0], 1.0 - h, h)?;
    let mut boundary = Vec::new();
    for (name, d) in [(&cfg.p, &p), (&cfg.q, &q)] {
        let rep = perturb_arc(&circle, d, eps, DEFAULT_ARC_BUDGET)
            .with_context(|| format!("boundary preprocessing against {name}"))?;
        boundary.push(BoundaryPass {
            against: name.clone(),
            passes: rep.passes,
            counts: rep.counts,
            moves: rep.moves,
            max_displacement: rep.max_displacement,
            transversality: rep.transversality,
        });
    }

    if let Some(b) = boundary.iter().find(|b| b.transversality >= eps) {
        return Err(anyhow!("boundary preprocessing against {} left a run of length {}", b.against, b.transversality).into());
    }

    let base = IdentityMap;
    let tcfg = TransversalizeConfig::new(eps, cfg.delta, cfg.seed);
    let (map, report) = transversalize(&base, &p, &q, &tcfg)?;

    let before = p.pullback(&base)?.intersect(&q)?;
    let after = p.pullback(&map)?.intersect(&q)?;
    fn diam_of(d: &Decomposition) -> impl Fn(usize) -> f64 + '_ {
        let diams = d.plaque_diameters();
        move |k| d.plaque_id(k).map_or(0.0, |id| diams[id])
    }
    let lat = *q.lattice();
    let disp = |k: usize| {
        let x = lat.node(k);
        euclid(map.forward(x), base.forward(x))
    };

    let mut out = Outputs::default();
    out.add("before.pgm", heat(&before, eps, diam_of(&before)).to_p5()?);
    out.add("after.pgm", heat(&after, eps, diam_of(&after)).to_p5()?);
    out.add("displacement.pgm", heat(&q, cfg.delta, disp).to_p5()?);
    out.add("histogram.csv", histogram_csv(&report.histogram_before, &report.histogram_after));
    let ok = report.diam_after < eps && report.sup_displacement < cfg.delta && report.grid_displacement < cfg.delta;
    #[derive(Serialize)]
    struct Full<'a> {
        boundary: &'a [BoundaryPass],
        transversalize: &'a TransversalizeReport,
        components_below_epsilon: bool,
        displacement_below_delta: bool,
    }
    out.add_json(
        "transversality.json",
        &Full {
            boundary: &boundary,
            transversalize: &report,
            components_below_epsilon: report.diam_after < eps,
            displacement_below_delta: report.sup_displacement < cfg.delta && report.grid_displacement < cfg.delta,
        },
    )?;
    let summary = format!(
        "max component {:.4} -> {:.4} (epsilon {eps}), sup displacement {:.4} (delta {}), {} cells",
        report.diam_before, report.diam_after, report.sup_displacement, cfg.delta, report.cells
    );
    Ok(Outcome {
        outputs: out,
        verdict: pass_if(ok),
        summary,
    })
}
