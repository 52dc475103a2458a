//! Correlation functions `E(a, b)` and local averages `A(u; a)` for every
//! supported (state, measurement) pairing.
//!
//! Party A uses `|alpha>` as its reference ket and party B uses `|-alpha>`.
//! For `ECS+` with pseudo-spin measurements, party B's analyzer frame is
//! turned by pi about the x axis; in that frame the correlation tensor is
//! `diag(-tK, -tK, -1)` with `t = tanh(2 alpha^2)`, the `ECS-` form.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::coherent::{
    gram_expectation, kappa_k, operator_elements, pseudospin_bloch, rotation_map, EcsSign, EcsSpec,
    OperatorElements, OperatorFamily, ALPHA_FLOOR,
};
use crate::error::{Error, Result};
use crate::sphere::{dot, reflect_about, Direction, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StateKind {
    Pes,
    Ecs(EcsSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasurementFamily {
    QubitProjective,
    PseudoSpin,
    OnOff,
    Parity,
}

impl MeasurementFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeasurementFamily::QubitProjective => "qubit",
            MeasurementFamily::PseudoSpin => "pseudospin",
            MeasurementFamily::OnOff => "onoff",
            MeasurementFamily::Parity => "parity",
        }
    }
}

impl fmt::Display for MeasurementFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasurementFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qubit" | "qubit_projective" | "malus" => Ok(MeasurementFamily::QubitProjective),
            "pseudospin" | "pseudo_spin" | "pseudo-spin" | "spin" => Ok(MeasurementFamily::PseudoSpin),
            "onoff" | "on_off" | "on-off" => Ok(MeasurementFamily::OnOff),
            "parity" => Ok(MeasurementFamily::Parity),
            other => Err(Error::UnsupportedModel(other.to_string())),
        }
    }
}

/// How map-based expectations treat the norm of the mapped state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Normalization {
    #[default]
    Gram,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Site {
    A,
    B,
}

pub fn pes_correlation(a: &Direction, b: &Direction) -> f64 {
    -a.dot(b)
}

pub fn malus_local_avg(u: &Direction, a: &Direction) -> f64 {
    u.dot(a)
}

/// `tanh(2 alpha^2) K(alpha)` for `ECS+`, `K(alpha)` for `ECS-`.
pub fn transverse_contrast(spec: &EcsSpec) -> f64 {
    let k = kappa_k(spec.alpha);
    match spec.sign {
        EcsSign::Minus => k,
        EcsSign::Plus => (2.0 * spec.alpha * spec.alpha).tanh() * k,
    }
}

/// `<ECS| (a.s) (x) (b.s) |ECS>` in the laboratory frame of both parties.
///
/// `ECS-`: `-cos tA cos tB - K sin tA sin tB cos(pA - pB)`.
/// `ECS+`: `cos tA cos tB - tK sin tA sin tB cos(pA + pB)`.
pub fn ecs_pseudospin_correlation(spec: &EcsSpec, a: &Direction, b: &Direction) -> f64 {
    pseudospin_tensor_contract(spec.sign, transverse_contrast(spec), a, b)
}

fn pseudospin_tensor_contract(sign: EcsSign, t: f64, a: &Direction, b: &Direction) -> f64 {
    let va = a.to_cartesian();
    let vb = b.to_cartesian();
    match sign {
        EcsSign::Minus => -t * (va[0] * vb[0] + va[1] * vb[1]) - va[2] * vb[2],
        EcsSign::Plus => -t * va[0] * vb[0] + t * va[1] * vb[1] + va[2] * vb[2],
    }
}

/// Pseudo-spin Bloch vector of the reference ket of `site`.
pub fn site_bloch(alpha: f64, site: Site) -> Vec3 {
    let m = pseudospin_bloch(alpha);
    match site {
        Site::A => m,
        Site::B => [-m[0], m[1], m[2]],
    }
}

/// `<ref| (u.s) (a.s) (u.s) |ref> = (2 (u.a) u - a) . m`.
pub fn ecs_pseudospin_local_avg(spec: &EcsSpec, site: Site, u: &Direction, a: &Direction) -> f64 {
    let m = site_bloch(spec.alpha, site);
    dot(&reflect_about(&a.to_cartesian(), &u.to_cartesian()), &m)
}

type Coeffs2 = [[C64; 2]; 2];

fn map_state(spec: &EcsSpec, a: &Direction, b: &Direction) -> Coeffs2 {
    let ma = rotation_map(a.theta, a.phi).0;
    let mb = rotation_map(b.theta, b.phi).0;
    let c0 = spec.coefficients();
    let mut out = [[C64::new(0.0, 0.0); 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            let mut acc = C64::new(0.0, 0.0);
            for xp in 0..2 {
                for yp in 0..2 {
                    acc += ma[x][xp] * mb[y][yp] * c0[xp][yp];
                }
            }
            out[x][y] = acc;
        }
    }
    out
}

fn contract_two_mode(c: &Coeffs2, oa: &OperatorElements, ob: &OperatorElements) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for x in 0..2 {
        for y in 0..2 {
            let cc = c[x][y].conj();
            for xp in 0..2 {
                for yp in 0..2 {
                    acc += cc * oa.0[x][xp] * ob.0[y][yp] * c[xp][yp];
                }
            }
        }
    }
    acc.re
}

/// Precomputed data for the map-based families (on/off, parity).
#[derive(Debug, Clone, Copy, PartialEq)]
struct MapElements {
    op: OperatorElements,
    gram: OperatorElements,
}

impl MapElements {
    fn new(family: OperatorFamily, alpha: f64) -> Result<Self> {
        if alpha < ALPHA_FLOOR {
            return Err(Error::AlphaTooSmall(alpha));
        }
        Ok(Self {
            op: operator_elements(family, alpha)?,
            gram: OperatorElements::identity(alpha),
        })
    }

    fn correlation(&self, spec: &EcsSpec, a: &Direction, b: &Direction, norm: Normalization) -> f64 {
        let c = map_state(spec, a, b);
        let num = contract_two_mode(&c, &self.op, &self.op);
        match norm {
            Normalization::Raw => num,
            Normalization::Gram => num / contract_two_mode(&c, &self.gram, &self.gram),
        }
    }

    fn local_avg(&self, alpha: f64, site: Site, u: &Direction, a: &Direction, norm: Normalization) -> f64 {
        let map = rotation_map(a.theta, a.phi).compose(&rotation_map(u.theta, u.phi));
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let e = match site {
            Site::A => [one, zero],
            Site::B => [zero, one],
        };
        let c = map.apply(&e);
        // the map is unitary up to rounding, so the norm never vanishes
        let num = gram_expectation(&c, &self.op, &c, alpha).map(|z| z.re).unwrap_or(0.0);
        match norm {
            Normalization::Raw => num,
            Normalization::Gram => num / crate::coherent::gram_norm_sqr(&c, alpha),
        }
    }
}

/// Map-based correlation `<ECS| Pi(a) (x) Pi(b) |ECS>` with
/// `Pi(a) = R(a)^dagger O R(a)` realized by the asymptotic rotation map.
pub fn ecs_map_correlation(
    spec: &EcsSpec,
    family: OperatorFamily,
    a: &Direction,
    b: &Direction,
    norm: Normalization,
) -> Result<f64> {
    Ok(MapElements::new(family, spec.alpha)?.correlation(spec, a, b, norm))
}

/// Map-based local average `<ref| R(u)^dagger Pi(a) R(u) |ref>`.
pub fn ecs_map_local_avg(
    alpha: f64,
    family: OperatorFamily,
    site: Site,
    u: &Direction,
    a: &Direction,
    norm: Normalization,
) -> Result<f64> {
    Ok(MapElements::new(family, alpha)?.local_avg(alpha, site, u, a, norm))
}

pub fn ecs_onoff_correlation(spec: &EcsSpec, a: &Direction, b: &Direction) -> Result<f64> {
    ecs_map_correlation(spec, OperatorFamily::OnOff, a, b, Normalization::Gram)
}

pub fn ecs_parity_correlation(spec: &EcsSpec, a: &Direction, b: &Direction) -> Result<f64> {
    ecs_map_correlation(spec, OperatorFamily::Parity, a, b, Normalization::Gram)
}

pub fn ecs_onoff_local_avg(spec: &EcsSpec, site: Site, u: &Direction, a: &Direction) -> Result<f64> {
    ecs_map_local_avg(spec.alpha, OperatorFamily::OnOff, site, u, a, Normalization::Gram)
}

pub fn ecs_parity_local_avg(spec: &EcsSpec, site: Site, u: &Direction, a: &Direction) -> Result<f64> {
    ecs_map_local_avg(spec.alpha, OperatorFamily::Parity, site, u, a, Normalization::Gram)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kernel {
    Malus,
    PseudoSpin { t: f64, m_a: Vec3, m_b: Vec3 },
    Map(MapElements),
}

/// A (state, measurement family) pairing with its per-state data cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationModel {
    pub state: StateKind,
    pub family: MeasurementFamily,
    pub normalization: Normalization,
    kernel: Kernel,
}

impl CorrelationModel {
    pub fn new(state: StateKind, family: MeasurementFamily) -> Result<Self> {
        Self::with_normalization(state, family, Normalization::Gram)
    }

    pub fn pes() -> Self {
        Self {
            state: StateKind::Pes,
            family: MeasurementFamily::QubitProjective,
            normalization: Normalization::Gram,
            kernel: Kernel::Malus,
        }
    }

    pub fn ecs(alpha: f64, sign: EcsSign, family: MeasurementFamily) -> Result<Self> {
        Self::new(StateKind::Ecs(EcsSpec::new(alpha, sign)?), family)
    }

    pub fn with_normalization(
        state: StateKind,
        family: MeasurementFamily,
        normalization: Normalization,
    ) -> Result<Self> {
        let kernel = match (state, family) {
            (StateKind::Pes, MeasurementFamily::QubitProjective) => Kernel::Malus,
            (StateKind::Ecs(spec), MeasurementFamily::PseudoSpin) => Kernel::PseudoSpin {
                t: transverse_contrast(&spec),
                m_a: site_bloch(spec.alpha, Site::A),
                m_b: site_bloch(spec.alpha, Site::B),
            },
            (StateKind::Ecs(spec), MeasurementFamily::OnOff) => {
                Kernel::Map(MapElements::new(OperatorFamily::OnOff, spec.alpha)?)
            }
            (StateKind::Ecs(spec), MeasurementFamily::Parity) => {
                Kernel::Map(MapElements::new(OperatorFamily::Parity, spec.alpha)?)
            }
            (s, f) => {
                let state = match s {
                    StateKind::Pes => "pes".to_string(),
                    StateKind::Ecs(spec) => format!("ecs{}", spec.sign),
                };
                return Err(Error::UnsupportedModel(format!("{state}/{f}")));
            }
        };
        Ok(Self {
            state,
            family,
            normalization,
            kernel,
        })
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.state {
            StateKind::Pes => None,
            StateKind::Ecs(spec) => Some(spec.alpha),
        }
    }

    /// Party B's setting as seen by the kernel (the ECS+ pseudo-spin frame
    /// turn; identity otherwise).
    pub fn b_frame(&self, b: &Direction) -> Direction {
        match (self.state, self.kernel) {
            (StateKind::Ecs(spec), Kernel::PseudoSpin { .. }) if spec.sign == EcsSign::Plus => {
                b.flipped_about_x()
            }
            _ => *b,
        }
    }

    pub fn correlation(&self, a: &Direction, b: &Direction) -> f64 {
        match (&self.kernel, &self.state) {
            (Kernel::Malus, _) => pes_correlation(a, b),
            (Kernel::PseudoSpin { t, .. }, StateKind::Ecs(spec)) => {
                pseudospin_tensor_contract(spec.sign, *t, a, &self.b_frame(b))
            }
            (Kernel::Map(el), StateKind::Ecs(spec)) => el.correlation(spec, a, b, self.normalization),
            _ => unreachable!("kernel and state are paired at construction"),
        }
    }

    pub fn local_average(&self, site: Site, u: &Direction, a: &Direction) -> f64 {
        let a = match site {
            Site::A => *a,
            Site::B => self.b_frame(a),
        };
        match (&self.kernel, &self.state) {
            (Kernel::Malus, _) => malus_local_avg(u, &a),
            (Kernel::PseudoSpin { m_a, m_b, .. }, _) => {
                let m = if site == Site::A { m_a } else { m_b };
                dot(&reflect_about(&a.to_cartesian(), &u.to_cartesian()), m)
            }
            (Kernel::Map(el), StateKind::Ecs(spec)) => {
                el.local_avg(spec.alpha, site, u, &a, self.normalization)
            }
            _ => unreachable!("kernel and state are paired at construction"),
        }
    }

    pub fn label(&self) -> String {
        match self.state {
            StateKind::Pes => "pes".to_string(),
            StateKind::Ecs(spec) => format!("ecs{}/{}/alpha={}", spec.sign, self.family, spec.alpha),
        }
    }
}
