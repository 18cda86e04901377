//! Analytic toy energy landscapes and a coarse-grained bead chain.
//!
//! Every potential exposes an energy and the matching force `-grad E`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, V3};
use crate::types::Conformation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoubleWellParams {
    pub a: f64,
    pub b: f64,
}

impl Default for DoubleWellParams {
    fn default() -> Self {
        DoubleWellParams { a: 1.0, b: 2.0 }
    }
}

/// Standard four-Gaussian Mueller-Brown surface, multiplied by `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MuellerBrownParams {
    pub scale: f64,
}

impl Default for MuellerBrownParams {
    fn default() -> Self {
        MuellerBrownParams { scale: 1.0 }
    }
}

/// Harmonic bonds and angles, cosine dihedrals and an `r^-12` wall between
/// beads at least three apart along the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainParams {
    pub n_beads: usize,
    pub k_bond: f64,
    /// Equilibrium bond length in Angstrom.
    pub r0: f64,
    pub k_angle: f64,
    /// Equilibrium bond angle in radians.
    pub theta0: f64,
    pub k_dihedral: f64,
    /// Preferred torsion in radians.
    pub phi0: f64,
    pub epsilon: f64,
    pub sigma: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            n_beads: 10,
            k_bond: 100.0,
            r0: 3.8,
            k_angle: 20.0,
            theta0: 1.92,
            k_dihedral: 1.0,
            phi0: 0.85,
            epsilon: 1.0,
            sigma: 4.0,
        }
    }
}

/// Chain beads closer than this along the sequence are excluded from the
/// repulsive wall.
pub const EXCLUSION_SEPARATION: usize = 3;

/// A bond stretched beyond this multiple of `r0` marks the chain as broken.
pub const BROKEN_BOND_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    DoubleWell2d(DoubleWellParams),
    MuellerBrown2d(MuellerBrownParams),
    CgChain3d(ChainParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PotentialKind {
    #[serde(rename = "DOUBLE_WELL_2D")]
    DoubleWell2d,
    #[serde(rename = "MUELLER_BROWN_2D")]
    MuellerBrown2d,
    #[serde(rename = "CG_CHAIN_3D")]
    CgChain3d,
}

/// Energy landscape plus the thermal energy it is sampled at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPotentialSpec", into = "RawPotentialSpec")]
pub struct PotentialSpec {
    pub potential: Potential,
    /// kT in reduced units.
    pub temperature: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotentialSpec {
    kind: PotentialKind,
    #[serde(default)]
    params: Option<serde_json::Value>,
    temperature: f64,
}

impl TryFrom<RawPotentialSpec> for PotentialSpec {
    type Error = String;

    fn try_from(raw: RawPotentialSpec) -> std::result::Result<Self, String> {
        fn params<T: Default + serde::de::DeserializeOwned>(
            v: Option<serde_json::Value>,
        ) -> std::result::Result<T, String> {
            match v {
                None => Ok(T::default()),
                Some(v) => serde_json::from_value(v).map_err(|e| format!("params: {e}")),
            }
        }
        let potential = match raw.kind {
            PotentialKind::DoubleWell2d => Potential::DoubleWell2d(params(raw.params)?),
            PotentialKind::MuellerBrown2d => Potential::MuellerBrown2d(params(raw.params)?),
            PotentialKind::CgChain3d => Potential::CgChain3d(params(raw.params)?),
        };
        let spec = PotentialSpec {
            potential,
            temperature: raw.temperature,
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

impl From<PotentialSpec> for RawPotentialSpec {
    fn from(spec: PotentialSpec) -> Self {
        let params = match spec.potential {
            Potential::DoubleWell2d(p) => serde_json::to_value(p),
            Potential::MuellerBrown2d(p) => serde_json::to_value(p),
            Potential::CgChain3d(p) => serde_json::to_value(p),
        }
        .expect("parameter records always serialize");
        RawPotentialSpec {
            kind: spec.kind(),
            params: Some(params),
            temperature: spec.temperature,
        }
    }
}

// Mueller-Brown coefficients: A, a, b, c, x0, y0 per Gaussian.
const MB_A: [f64; 4] = [-200.0, -100.0, -170.0, 15.0];
const MB_LA: [f64; 4] = [-1.0, -1.0, -6.5, 0.7];
const MB_LB: [f64; 4] = [0.0, 0.0, 11.0, 0.6];
const MB_LC: [f64; 4] = [-10.0, -10.0, -6.5, 0.7];
const MB_X0: [f64; 4] = [1.0, 0.0, -0.5, -1.0];
const MB_Y0: [f64; 4] = [0.0, 0.5, 1.5, 1.0];

impl PotentialSpec {
    pub fn new(potential: Potential, temperature: f64) -> Result<Self> {
        let spec = PotentialSpec { potential, temperature };
        spec.validate()?;
        Ok(spec)
    }

    pub fn double_well(temperature: f64) -> Self {
        PotentialSpec {
            potential: Potential::DoubleWell2d(DoubleWellParams::default()),
            temperature,
        }
    }

    pub fn mueller_brown(temperature: f64) -> Self {
        PotentialSpec {
            potential: Potential::MuellerBrown2d(MuellerBrownParams::default()),
            temperature,
        }
    }

    pub fn cg_chain(temperature: f64) -> Self {
        PotentialSpec {
            potential: Potential::CgChain3d(ChainParams::default()),
            temperature,
        }
    }

    pub fn kind(&self) -> PotentialKind {
        match self.potential {
            Potential::DoubleWell2d(_) => PotentialKind::DoubleWell2d,
            Potential::MuellerBrown2d(_) => PotentialKind::MuellerBrown2d,
            Potential::CgChain3d(_) => PotentialKind::CgChain3d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return bad(format!("temperature must be >= 0, got {}", self.temperature));
        }
        match self.potential {
            Potential::DoubleWell2d(p) => {
                if !(p.a > 0.0 && p.b > 0.0) {
                    return bad("double-well constants a and b must be > 0".into());
                }
            }
            Potential::MuellerBrown2d(p) => {
                if !(p.scale > 0.0) {
                    return bad("Mueller-Brown scale must be > 0".into());
                }
            }
            Potential::CgChain3d(p) => {
                if p.n_beads < 2 {
                    return bad(format!("chain needs at least 2 beads, got {}", p.n_beads));
                }
                let constants = [p.k_bond, p.k_angle, p.k_dihedral, p.epsilon, p.sigma];
                if constants.iter().any(|k| !(*k > 0.0)) {
                    return bad("chain force constants must all be > 0".into());
                }
                if !(p.r0 > 3.5 && p.r0 < 4.5) {
                    return bad(format!("chain r0 must lie in (3.5, 4.5) A, got {}", p.r0));
                }
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        match self.potential {
            Potential::CgChain3d(_) => 3,
            _ => 2,
        }
    }

    pub fn n_particles(&self) -> usize {
        match self.potential {
            Potential::CgChain3d(p) => p.n_beads,
            _ => 1,
        }
    }

    pub fn check_shape(&self, x: &Conformation) -> Result<()> {
        if x.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: x.dims(),
            });
        }
        if x.n_particles() != self.n_particles() {
            return Err(Error::DimensionMismatch {
                expected: self.n_particles(),
                found: x.n_particles(),
            });
        }
        Ok(())
    }

    pub fn energy(&self, x: &Conformation) -> Result<f64> {
        self.check_shape(x)?;
        Ok(self.energy_flat(x.positions()))
    }

    /// Returns `-grad E`, laid out like the conformation's positions.
    pub fn force(&self, x: &Conformation) -> Result<Vec<f64>> {
        self.check_shape(x)?;
        let mut out = vec![0.0; x.positions().len()];
        self.force_into(x.positions(), &mut out);
        Ok(out)
    }

    /// Energy of an already shape-checked flat coordinate array.
    pub fn energy_flat(&self, x: &[f64]) -> f64 {
        match self.potential {
            Potential::DoubleWell2d(p) => {
                let (u, v) = (x[0], x[1]);
                p.a * (u * u - 1.0).powi(2) + p.b * v * v
            }
            Potential::MuellerBrown2d(p) => {
                let (u, v) = (x[0], x[1]);
                let mut e = 0.0;
                for k in 0..4 {
                    let dx = u - MB_X0[k];
                    let dy = v - MB_Y0[k];
                    e += MB_A[k] * (MB_LA[k] * dx * dx + MB_LB[k] * dx * dy + MB_LC[k] * dy * dy).exp();
                }
                p.scale * e
            }
            Potential::CgChain3d(p) => chain_energy(&p, x),
        }
    }

    /// Writes `-grad E` of a shape-checked flat coordinate array into `out`.
    pub fn force_into(&self, x: &[f64], out: &mut [f64]) {
        match self.potential {
            Potential::DoubleWell2d(p) => {
                let (u, v) = (x[0], x[1]);
                out[0] = -4.0 * p.a * u * (u * u - 1.0);
                out[1] = -2.0 * p.b * v;
            }
            Potential::MuellerBrown2d(p) => {
                let (u, v) = (x[0], x[1]);
                let (mut gx, mut gy) = (0.0, 0.0);
                for k in 0..4 {
                    let dx = u - MB_X0[k];
                    let dy = v - MB_Y0[k];
                    let e = MB_A[k] * (MB_LA[k] * dx * dx + MB_LB[k] * dx * dy + MB_LC[k] * dy * dy).exp();
                    gx += e * (2.0 * MB_LA[k] * dx + MB_LB[k] * dy);
                    gy += e * (MB_LB[k] * dx + 2.0 * MB_LC[k] * dy);
                }
                out[0] = -p.scale * gx;
                out[1] = -p.scale * gy;
            }
            Potential::CgChain3d(p) => chain_force(&p, x, out),
        }
    }

    /// Non-finite coordinates, or (for the chain) a bond stretched past
    /// [`BROKEN_BOND_FACTOR`] times its rest length.
    pub fn is_broken(&self, x: &[f64]) -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return true;
        }
        if let Potential::CgChain3d(p) = self.potential {
            let limit = BROKEN_BOND_FACTOR * p.r0;
            return (0..p.n_beads - 1).any(|i| geom::norm(geom::sub(bead(x, i + 1), bead(x, i))) > limit);
        }
        false
    }

    /// A sensible starting conformation: the left well, the deepest
    /// Mueller-Brown minimum, or an ideal chain built at the rest geometry.
    pub fn default_start(&self) -> Conformation {
        match self.potential {
            Potential::DoubleWell2d(_) => Conformation::new(vec![-1.0, 0.0], 2),
            Potential::MuellerBrown2d(_) => Conformation::new(vec![-0.558, 1.442], 2),
            Potential::CgChain3d(p) => Conformation::new(ideal_chain(p.n_beads, p.r0, p.theta0, p.phi0), 3),
        }
        .expect("default starts are well formed")
    }
}

#[inline]
fn bead(x: &[f64], i: usize) -> V3 {
    [x[3 * i], x[3 * i + 1], x[3 * i + 2]]
}

#[inline]
fn add_to(out: &mut [f64], i: usize, f: V3) {
    out[3 * i] += f[0];
    out[3 * i + 1] += f[1];
    out[3 * i + 2] += f[2];
}

fn chain_energy(p: &ChainParams, x: &[f64]) -> f64 {
    let n = p.n_beads;
    let mut e = 0.0;
    for i in 0..n - 1 {
        let r = geom::norm(geom::sub(bead(x, i + 1), bead(x, i)));
        e += 0.5 * p.k_bond * (r - p.r0).powi(2);
    }
    for i in 0..n.saturating_sub(2) {
        let th = geom::angle(bead(x, i), bead(x, i + 1), bead(x, i + 2));
        e += 0.5 * p.k_angle * (th - p.theta0).powi(2);
    }
    for i in 0..n.saturating_sub(3) {
        let phi = geom::dihedral(bead(x, i), bead(x, i + 1), bead(x, i + 2), bead(x, i + 3));
        e += p.k_dihedral * (1.0 - (phi - p.phi0).cos());
    }
    let s2 = p.sigma * p.sigma;
    for i in 0..n {
        for j in i + EXCLUSION_SEPARATION..n {
            let d = geom::sub(bead(x, j), bead(x, i));
            let q = s2 / geom::dot(d, d);
            e += p.epsilon * q.powi(6);
        }
    }
    e
}

fn chain_force(p: &ChainParams, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let n = p.n_beads;
    for i in 0..n - 1 {
        let d = geom::sub(bead(x, i + 1), bead(x, i));
        let r = geom::norm(d);
        // dE/dr along the unit bond vector.
        let f = geom::scale(d, -p.k_bond * (r - p.r0) / r);
        add_to(out, i + 1, f);
        add_to(out, i, geom::scale(f, -1.0));
    }
    for i in 0..n.saturating_sub(2) {
        let (a, b, c) = (bead(x, i), bead(x, i + 1), bead(x, i + 2));
        let u = geom::sub(a, b);
        let v = geom::sub(c, b);
        let (lu, lv) = (geom::norm(u), geom::norm(v));
        let cos = geom::dot(u, v) / (lu * lv);
        let th = geom::angle(a, b, c);
        let sin = th.sin().max(1e-12);
        let de = p.k_angle * (th - p.theta0);
        // dtheta/da = -(v/(|u||v|) - cos u/|u|^2) / sin
        let mut ga = [0.0; 3];
        let mut gc = [0.0; 3];
        for k in 0..3 {
            ga[k] = -(v[k] / (lu * lv) - cos * u[k] / (lu * lu)) / sin;
            gc[k] = -(u[k] / (lu * lv) - cos * v[k] / (lv * lv)) / sin;
        }
        let gb = [-(ga[0] + gc[0]), -(ga[1] + gc[1]), -(ga[2] + gc[2])];
        add_to(out, i, geom::scale(ga, -de));
        add_to(out, i + 1, geom::scale(gb, -de));
        add_to(out, i + 2, geom::scale(gc, -de));
    }
    for i in 0..n.saturating_sub(3) {
        let (p0, p1, p2, p3) = (bead(x, i), bead(x, i + 1), bead(x, i + 2), bead(x, i + 3));
        let b1 = geom::sub(p1, p0);
        let b2 = geom::sub(p2, p1);
        let b3 = geom::sub(p3, p2);
        let n1 = geom::cross(b1, b2);
        let n2 = geom::cross(b2, b3);
        let lb2 = geom::norm(b2);
        let n1sq = geom::dot(n1, n1).max(1e-300);
        let n2sq = geom::dot(n2, n2).max(1e-300);
        let phi = geom::dihedral(p0, p1, p2, p3);
        let de = p.k_dihedral * (phi - p.phi0).sin();
        let g0 = geom::scale(n1, -lb2 / n1sq);
        let g3 = geom::scale(n2, lb2 / n2sq);
        let s1 = geom::dot(b1, b2) / (lb2 * lb2);
        let s3 = geom::dot(b3, b2) / (lb2 * lb2);
        let mut g1 = [0.0; 3];
        let mut g2 = [0.0; 3];
        for k in 0..3 {
            g1[k] = -(1.0 + s1) * g0[k] + s3 * g3[k];
            g2[k] = s1 * g0[k] - (1.0 + s3) * g3[k];
        }
        add_to(out, i, geom::scale(g0, -de));
        add_to(out, i + 1, geom::scale(g1, -de));
        add_to(out, i + 2, geom::scale(g2, -de));
        add_to(out, i + 3, geom::scale(g3, -de));
    }
    let s2 = p.sigma * p.sigma;
    for i in 0..n {
        for j in i + EXCLUSION_SEPARATION..n {
            let d = geom::sub(bead(x, j), bead(x, i));
            let r2 = geom::dot(d, d);
            let q6 = (s2 / r2).powi(6);
            // E = eps q^6 with q = sigma^2/r^2; -dE/dd = 12 eps q^6 d / r^2
            let f = geom::scale(d, 12.0 * p.epsilon * q6 / r2);
            add_to(out, j, f);
            add_to(out, i, geom::scale(f, -1.0));
        }
    }
}

/// Places `n` beads with every bond at `r0`, every angle at `theta0` and
/// every torsion at `phi0`.
pub fn ideal_chain(n: usize, r0: f64, theta0: f64, phi0: f64) -> Vec<f64> {
    let mut pts: Vec<V3> = Vec::with_capacity(n);
    pts.push([0.0, 0.0, 0.0]);
    if n > 1 {
        pts.push([r0, 0.0, 0.0]);
    }
    if n > 2 {
        let dir = [-theta0.cos(), theta0.sin(), 0.0];
        pts.push([r0 + r0 * dir[0], r0 * dir[1], 0.0]);
    }
    while pts.len() < n {
        let m = pts.len();
        let (a, b, c) = (pts[m - 3], pts[m - 2], pts[m - 1]);
        let bc = geom::sub(c, b);
        let bc = geom::scale(bc, 1.0 / geom::norm(bc));
        let nrm = geom::cross(geom::sub(b, a), bc);
        let nrm = geom::scale(nrm, 1.0 / geom::norm(nrm));
        let m2 = geom::cross(nrm, bc);
        let d = [
            -r0 * theta0.cos(),
            r0 * theta0.sin() * phi0.cos(),
            r0 * theta0.sin() * phi0.sin(),
        ];
        let mut next = c;
        for k in 0..3 {
            next[k] += bc[k] * d[0] + m2[k] * d[1] + nrm[k] * d[2];
        }
        pts.push(next);
    }
    pts.into_iter().flatten().collect()
}
