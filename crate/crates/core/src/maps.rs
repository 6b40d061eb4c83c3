//! The concrete surface homeomorphisms: the linear Anosov automorphism
//! `g(x, y) = (2x + y, x + y)`, the bump-field flow supported in a ball
//! around the origin, the derived-from-Anosov map `φ_τ ∘ g`, and its
//! antipodal quotient on the sphere.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{antipodal_canon, torus_dist, wrap_unit, Coord, Space};

/// Golden ratio conjugate pieces of the eigen-data of `[[2,1],[1,1]]`.
const SQRT5: f64 = 2.236_067_977_499_79;

/// Unstable eigenvalue `(3 + √5) / 2`.
pub const LAMBDA_U: f64 = (3.0 + SQRT5) / 2.0;
/// Stable eigenvalue `(3 - √5) / 2 = 1 / λ_u`.
pub const LAMBDA_S: f64 = (3.0 - SQRT5) / 2.0;

/// Unit unstable eigenvector, `(1, (√5 - 1)/2)` normalised.
pub fn unstable_dir() -> Coord {
    let y = (SQRT5 - 1.0) / 2.0;
    let n = (1.0 + y * y).sqrt();
    [1.0 / n, y / n]
}

/// Unit stable eigenvector, `(1, -(1 + √5)/2)` normalised.
pub fn stable_dir() -> Coord {
    let y = -(1.0 + SQRT5) / 2.0;
    let n = (1.0 + y * y).sqrt();
    [1.0 / n, y / n]
}

/// RK4 steps per flow evaluation.
pub const FLOW_STEPS: usize = 256;
/// Largest RK4 step the flow accepts.
pub const MAX_FLOW_STEP: f64 = 1.0 / 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BumpProfile {
    /// Quintic smoothstep ramp between `r0/2` and `r0`.
    #[default]
    Smoothstep5,
}

/// Support radius, flow time and bump profile of the DA perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub r0: f64,
    pub tau: f64,
    #[serde(default)]
    pub profile: BumpProfile,
}

impl BumpSpec {
    pub const DEFAULT_R0: f64 = 0.15;

    pub fn new(r0: f64, tau: f64) -> Result<Self> {
        let spec = Self {
            r0,
            tau,
            profile: BumpProfile::Smoothstep5,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        // The ball must not reach the other three branching points.
        if !(self.r0 > 0.0 && self.r0 < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "bump radius r0 = {} must lie in (0, 0.5)",
                self.r0
            )));
        }
        if !self.tau.is_finite() || self.tau < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "flow time tau = {} must be finite and non-negative",
                self.tau
            )));
        }
        Ok(())
    }

    /// Default radius with `τ` found by doubling from 1 until the origin is
    /// a source.
    pub fn tuned() -> Result<Self> {
        Self::tuned_with_radius(Self::DEFAULT_R0)
    }

    pub fn tuned_with_radius(r0: f64) -> Result<Self> {
        let mut tau = 1.0;
        for _ in 0..8 {
            let spec = Self::new(r0, tau)?;
            if source_check(&spec)? {
                return Ok(spec);
            }
            tau *= 2.0;
        }
        Err(Error::InvalidParameter(format!(
            "no tau up to {tau} makes the origin a source for r0 = {r0}"
        )))
    }

    /// The bump `δ`: 1 on `[0, r0/2]`, 0 on `[r0, ∞)`.
    #[inline]
    pub fn bump(&self, x: f64) -> f64 {
        let half = 0.5 * self.r0;
        if x <= half {
            1.0
        } else if x >= self.r0 {
            0.0
        } else {
            let s = (x - half) / half;
            1.0 - s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
        }
    }

    /// Radius of the trapping hole around the source. Inside `r0/2` the
    /// flow is linear, so the ball of that radius is strictly swallowed by
    /// its image once `e^τ > λ_u`.
    pub fn trapping_radius(&self) -> f64 {
        0.5 * self.r0
    }
}

/// `g(x, y) = (2x + y, x + y) mod 1`.
#[inline]
pub fn anosov_apply(p: Coord) -> Coord {
    [wrap_unit(2.0 * p[0] + p[1]), wrap_unit(p[0] + p[1])]
}

/// `g⁻¹(x, y) = (x - y, 2y - x) mod 1`.
#[inline]
pub fn anosov_inverse(p: Coord) -> Coord {
    [wrap_unit(p[0] - p[1]), wrap_unit(2.0 * p[1] - p[0])]
}

/// Lift of a torus point to the square `(-1/2, 1/2]²` around the origin.
#[inline]
fn lift_to_origin(p: Coord) -> Coord {
    let mut l = [wrap_unit(p[0]), wrap_unit(p[1])];
    for c in &mut l {
        if *c > 0.5 {
            *c -= 1.0;
        }
    }
    l
}

#[inline]
fn dot(a: Coord, b: Coord) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Time-`t` map of the bump field `v(u1, u2) = (0, u2 δ(|u|))` written in
/// unstable/stable coordinates around the origin. The flow preserves `u1`,
/// so the integration is a scalar ODE in `u2`.
pub fn bump_flow(p: Coord, t: f64, spec: &BumpSpec) -> Result<Coord> {
    let l = lift_to_origin(p);
    if l[0].hypot(l[1]) >= spec.r0 || t == 0.0 {
        return Ok([wrap_unit(p[0]), wrap_unit(p[1])]);
    }
    let step = t / FLOW_STEPS as f64;
    if !step.is_finite() || step.abs() > MAX_FLOW_STEP {
        return Err(Error::Integrator(format!(
            "flow time {t} needs step {step}, above the limit {MAX_FLOW_STEP}"
        )));
    }
    let (eu, es) = (unstable_dir(), stable_dir());
    let u1 = dot(l, eu);
    let mut u2 = dot(l, es);
    let rhs = |u2: f64| u2 * spec.bump(u1.hypot(u2));
    for _ in 0..FLOW_STEPS {
        let k1 = rhs(u2);
        let k2 = rhs(u2 + 0.5 * step * k1);
        let k3 = rhs(u2 + 0.5 * step * k2);
        let k4 = rhs(u2 + step * k3);
        u2 += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if !u2.is_finite() || u1.hypot(u2) > spec.r0 * (1.0 + 1e-9) {
        return Err(Error::Integrator(format!(
            "trajectory from {p:?} left the support ball (|u| = {})",
            u1.hypot(u2)
        )));
    }
    let q = [u1 * eu[0] + u2 * es[0], u1 * eu[1] + u2 * es[1]];
    Ok([wrap_unit(q[0]), wrap_unit(q[1])])
}

/// `f_DA = φ_τ ∘ g`.
pub fn da_apply(p: Coord, spec: &BumpSpec) -> Result<Coord> {
    bump_flow(anosov_apply(p), spec.tau, spec)
}

/// `f_DA⁻¹ = g⁻¹ ∘ φ_{-τ}`.
pub fn da_inverse(p: Coord, spec: &BumpSpec) -> Result<Coord> {
    Ok(anosov_inverse(bump_flow(p, -spec.tau, spec)?))
}

/// The pseudo-DA map on `T²/±`, evaluated on canonical representatives.
pub fn pda_apply(p: Coord, spec: &BumpSpec) -> Result<Coord> {
    Ok(antipodal_canon(da_apply(p, spec)?))
}

pub fn pda_inverse(p: Coord, spec: &BumpSpec) -> Result<Coord> {
    Ok(antipodal_canon(da_inverse(p, spec)?))
}

/// Whether the six probe points at distance `1e-5` from the origin
/// (angles `kπ/3`) all move strictly away from it under one DA step.
pub fn source_check(spec: &BumpSpec) -> Result<bool> {
    let rho = 1e-5;
    for k in 0..6 {
        let a = k as f64 * std::f64::consts::PI / 3.0;
        let p = [wrap_unit(rho * a.cos()), wrap_unit(rho * a.sin())];
        let q = da_apply(p, spec)?;
        if torus_dist(q, [0.0, 0.0]) <= torus_dist(p, [0.0, 0.0]) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Residual `|d × e_s| / |d|` of the image of a stable segment `[p, p + len e_s]`
/// against the stable direction.
pub fn stable_collinearity_residual(p: Coord, len: f64, spec: &BumpSpec) -> Result<f64> {
    let es = stable_dir();
    let q = [wrap_unit(p[0] + len * es[0]), wrap_unit(p[1] + len * es[1])];
    let (fp, fq) = (da_apply(p, spec)?, da_apply(q, spec)?);
    let mut d = [fq[0] - fp[0], fq[1] - fp[1]];
    for c in &mut d {
        *c -= c.round();
    }
    let n = d[0].hypot(d[1]);
    Ok((d[0] * es[1] - d[1] * es[0]).abs() / n)
}

type PointFn = dyn Fn(Coord) -> Result<Coord> + Send + Sync;

/// A user-supplied invertible map.
#[derive(Clone)]
pub struct CustomMap {
    pub name: String,
    pub space: Space,
    pub forward: Arc<PointFn>,
    pub inverse: Arc<PointFn>,
}

#[derive(Clone)]
pub enum MapKind {
    Identity(Space),
    Anosov,
    AnosovInverse,
    Da(BumpSpec),
    DaInverse(BumpSpec),
    Pda(BumpSpec),
    PdaInverse(BumpSpec),
    Custom(CustomMap),
}

/// A named, immutable homeomorphism together with its inverse.
#[derive(Clone)]
pub struct MapHandle {
    kind: MapKind,
}

impl fmt::Debug for MapHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MapHandle({})", self.name())
    }
}

impl MapHandle {
    pub fn identity(space: Space) -> Self {
        Self {
            kind: MapKind::Identity(space),
        }
    }

    pub fn anosov() -> Self {
        Self {
            kind: MapKind::Anosov,
        }
    }

    pub fn da(spec: BumpSpec) -> Self {
        Self {
            kind: MapKind::Da(spec),
        }
    }

    pub fn pda(spec: BumpSpec) -> Self {
        Self {
            kind: MapKind::Pda(spec),
        }
    }

    pub fn custom<F, G>(name: &str, space: Space, forward: F, inverse: G) -> Self
    where
        F: Fn(Coord) -> Result<Coord> + Send + Sync + 'static,
        G: Fn(Coord) -> Result<Coord> + Send + Sync + 'static,
    {
        Self {
            kind: MapKind::Custom(CustomMap {
                name: name.to_string(),
                space,
                forward: Arc::new(forward),
                inverse: Arc::new(inverse),
            }),
        }
    }

    /// Look a map up by its CLI name. Bump-dependent maps require `bump`.
    pub fn from_name(name: &str, bump: Option<BumpSpec>) -> Result<Self> {
        let need = || {
            bump.ok_or_else(|| Error::InvalidParameter(format!("map '{name}' needs a bump spec")))
        };
        let kind = match name {
            "identity" => MapKind::Identity(Space::Torus),
            "identity_sphere" => MapKind::Identity(Space::Sphere),
            "anosov" => MapKind::Anosov,
            "anosov_inverse" => MapKind::AnosovInverse,
            "da" => MapKind::Da(need()?),
            "da_inverse" => MapKind::DaInverse(need()?),
            "pda" => MapKind::Pda(need()?),
            "pda_inverse" => MapKind::PdaInverse(need()?),
            other => {
                return Err(Error::InvalidParameter(format!("unknown map '{other}'")));
            }
        };
        Ok(Self { kind })
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn name(&self) -> String {
        match &self.kind {
            MapKind::Identity(Space::Torus) => "identity".into(),
            MapKind::Identity(s) => format!("identity_{s:?}").to_lowercase(),
            MapKind::Anosov => "anosov".into(),
            MapKind::AnosovInverse => "anosov_inverse".into(),
            MapKind::Da(_) => "da".into(),
            MapKind::DaInverse(_) => "da_inverse".into(),
            MapKind::Pda(_) => "pda".into(),
            MapKind::PdaInverse(_) => "pda_inverse".into(),
            MapKind::Custom(c) => c.name.clone(),
        }
    }

    pub fn bump(&self) -> Option<BumpSpec> {
        match &self.kind {
            MapKind::Da(s) | MapKind::DaInverse(s) | MapKind::Pda(s) | MapKind::PdaInverse(s) => {
                Some(*s)
            }
            _ => None,
        }
    }

    pub fn space(&self) -> Space {
        match &self.kind {
            MapKind::Identity(s) => *s,
            MapKind::Pda(_) | MapKind::PdaInverse(_) => Space::Sphere,
            MapKind::Custom(c) => c.space,
            _ => Space::Torus,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, MapKind::Identity(_))
    }

    pub fn inverse(&self) -> Self {
        let kind = match &self.kind {
            MapKind::Identity(s) => MapKind::Identity(*s),
            MapKind::Anosov => MapKind::AnosovInverse,
            MapKind::AnosovInverse => MapKind::Anosov,
            MapKind::Da(s) => MapKind::DaInverse(*s),
            MapKind::DaInverse(s) => MapKind::Da(*s),
            MapKind::Pda(s) => MapKind::PdaInverse(*s),
            MapKind::PdaInverse(s) => MapKind::Pda(*s),
            MapKind::Custom(c) => MapKind::Custom(CustomMap {
                name: format!("{}_inverse", c.name),
                space: c.space,
                forward: c.inverse.clone(),
                inverse: c.forward.clone(),
            }),
        };
        Self { kind }
    }

    #[inline]
    pub fn apply(&self, p: Coord) -> Result<Coord> {
        match &self.kind {
            MapKind::Identity(s) => Ok(s.normalize(p)),
            MapKind::Anosov => Ok(anosov_apply(p)),
            MapKind::AnosovInverse => Ok(anosov_inverse(p)),
            MapKind::Da(s) => da_apply(p, s),
            MapKind::DaInverse(s) => da_inverse(p, s),
            MapKind::Pda(s) => pda_apply(p, s),
            MapKind::PdaInverse(s) => pda_inverse(p, s),
            MapKind::Custom(c) => (c.forward)(p),
        }
    }

    #[inline]
    pub fn apply_inverse(&self, p: Coord) -> Result<Coord> {
        match &self.kind {
            MapKind::Identity(s) => Ok(s.normalize(p)),
            MapKind::Anosov => Ok(anosov_inverse(p)),
            MapKind::AnosovInverse => Ok(anosov_apply(p)),
            MapKind::Da(s) => da_inverse(p, s),
            MapKind::DaInverse(s) => da_apply(p, s),
            MapKind::Pda(s) => pda_inverse(p, s),
            MapKind::PdaInverse(s) => pda_apply(p, s),
            MapKind::Custom(c) => (c.inverse)(p),
        }
    }

    /// `f^i(p)` for any integer `i`.
    pub fn iterate(&self, p: Coord, i: i64) -> Result<Coord> {
        let mut q = p;
        for _ in 0..i.unsigned_abs() {
            q = if i > 0 {
                self.apply(q)?
            } else {
                self.apply_inverse(q)?
            };
        }
        Ok(q)
    }

    /// Orbit window `[f^{-n}(p), …, f^n(p)]`, indexed by `i + n`.
    pub fn orbit(&self, p: Coord, n: usize) -> Result<Vec<Coord>> {
        let mut out = vec![p; 2 * n + 1];
        if self.is_identity() {
            return Ok(out);
        }
        for i in 1..=n {
            out[n + i] = self.apply(out[n + i - 1])?;
            out[n - i] = self.apply_inverse(out[n - i + 1])?;
        }
        Ok(out)
    }
}
