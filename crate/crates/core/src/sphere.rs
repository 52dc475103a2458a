//! Directions on the unit sphere, rigid rotations, and the measurement-setting
//! layouts of the Leggett and CHSH tests.
//!
//! Spherical convention: `theta` is the polar angle from +z, `phi` the azimuth
//! from +x toward +y. At the poles the azimuth is canonicalized to zero.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

const POLE_EPS: f64 = 1e-14;

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Reflection of `a` about the axis `u`: `2 (u.a) u - a`.
pub fn reflect_about(a: &Vec3, u: &Vec3) -> Vec3 {
    let k = 2.0 * dot(u, a);
    [k * u[0] - a[0], k * u[1] - a[1], k * u[2] - a[2]]
}

/// Angle between two (not necessarily unit) vectors, robust near 0 and pi.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    norm(&cross).atan2(dot(a, b))
}

/// A point on the unit sphere in spherical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

impl Direction {
    /// Builds a direction, folding `theta` into `[0, pi]` and `phi` into
    /// `[-pi, pi]`. Values already in range are kept bit-exact.
    pub fn new(theta: f64, phi: f64) -> Self {
        let mut theta = theta;
        let mut phi = phi;
        if !(0.0..=PI).contains(&theta) {
            theta = theta.rem_euclid(2.0 * PI);
            if theta > PI {
                theta = 2.0 * PI - theta;
                phi += PI;
            }
        }
        if !(-PI..=PI).contains(&phi) {
            phi = (phi + PI).rem_euclid(2.0 * PI) - PI;
        }
        if theta.sin().abs() < POLE_EPS {
            phi = 0.0;
        }
        Self { theta, phi }
    }

    pub fn from_cartesian(v: &Vec3) -> Self {
        let r = norm(v);
        let z = (v[2] / r).clamp(-1.0, 1.0);
        let rho = (v[0] * v[0] + v[1] * v[1]).sqrt() / r;
        let theta = rho.atan2(z);
        let phi = if rho < POLE_EPS { 0.0 } else { v[1].atan2(v[0]) };
        Self { theta, phi }
    }

    pub fn to_cartesian(&self) -> Vec3 {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        dot(&self.to_cartesian(), &other.to_cartesian())
    }

    pub fn angle_to(&self, other: &Direction) -> f64 {
        angle_between(&self.to_cartesian(), &other.to_cartesian())
    }

    /// Image under a rotation by pi about the x axis: `(pi - theta, -phi)`.
    pub fn flipped_about_x(&self) -> Self {
        Self::new(PI - self.theta, -self.phi)
    }
}

/// A proper rotation in z-y-z Euler angles: `Rz(z1) Ry(y) Rz(z2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidRotation {
    pub euler_z1: f64,
    pub euler_y: f64,
    pub euler_z2: f64,
}

impl RigidRotation {
    pub const IDENTITY: RigidRotation = RigidRotation {
        euler_z1: 0.0,
        euler_y: 0.0,
        euler_z2: 0.0,
    };

    pub fn new(euler_z1: f64, euler_y: f64, euler_z2: f64) -> Self {
        Self {
            euler_z1,
            euler_y,
            euler_z2,
        }
    }

    pub fn from_slice(angles: &[f64]) -> Self {
        Self::new(angles[0], angles[1], angles[2])
    }

    pub fn as_matrix(&self) -> [[f64; 3]; 3] {
        let (s1, c1) = self.euler_z1.sin_cos();
        let (s2, c2) = self.euler_y.sin_cos();
        let (s3, c3) = self.euler_z2.sin_cos();
        [
            [c1 * c2 * c3 - s1 * s3, -c1 * c2 * s3 - s1 * c3, c1 * s2],
            [s1 * c2 * c3 + c1 * s3, -s1 * c2 * s3 + c1 * c3, s1 * s2],
            [-s2 * c3, s2 * s3, c2],
        ]
    }

    pub fn apply_vec(&self, v: &Vec3) -> Vec3 {
        let m = self.as_matrix();
        [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
    }

    pub fn apply(&self, d: &Direction) -> Direction {
        if *self == Self::IDENTITY {
            return *d;
        }
        Direction::from_cartesian(&self.apply_vec(&d.to_cartesian()))
    }
}

/// One rotation per party. `shared` layouts use the same rotation for both.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PartyRotations {
    pub a: RigidRotation,
    pub b: RigidRotation,
}

impl PartyRotations {
    pub const IDENTITY: PartyRotations = PartyRotations {
        a: RigidRotation::IDENTITY,
        b: RigidRotation::IDENTITY,
    };

    pub fn shared(r: RigidRotation) -> Self {
        Self { a: r, b: r }
    }

    pub fn independent(a: RigidRotation, b: RigidRotation) -> Self {
        Self { a, b }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayoutName {
    Original,
    ThreePlusSeven,
    ThreePlusSix,
    Chsh,
}

impl LayoutName {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayoutName::Original => "original",
            LayoutName::ThreePlusSeven => "3p7",
            LayoutName::ThreePlusSix => "3p6",
            LayoutName::Chsh => "chsh",
        }
    }
}

impl fmt::Display for LayoutName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayoutName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" => Ok(LayoutName::Original),
            "3p7" | "3+7" | "threeplus7" => Ok(LayoutName::ThreePlusSeven),
            "3p6" | "3+6" | "threeplus6" => Ok(LayoutName::ThreePlusSix),
            "chsh" => Ok(LayoutName::Chsh),
            other => Err(Error::UnknownLayout(other.to_string())),
        }
    }
}

/// Weighted group of correlation terms; the group contributes
/// `weight * |sum E(a_i, b_j)|`. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermGroup {
    pub weight: f64,
    pub terms: Vec<(usize, usize)>,
}

/// Pair of b-settings that share an a-setting within one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub first: usize,
    pub second: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingsLayout {
    pub name: LayoutName,
    pub phi: f64,
    pub a_list: Vec<Direction>,
    pub b_list: Vec<Direction>,
    pub groups: Vec<TermGroup>,
    pub bound_pairs: Vec<BoundPair>,
}

fn group(weight: f64, terms: &[(usize, usize)]) -> TermGroup {
    TermGroup {
        weight,
        terms: terms.to_vec(),
    }
}

fn bound_pairs_of(groups: &[TermGroup]) -> Vec<BoundPair> {
    let mut pairs = Vec::new();
    for g in groups {
        for (k, &(ai, bj)) in g.terms.iter().enumerate() {
            for &(ai2, bj2) in &g.terms[k + 1..] {
                if ai == ai2 && bj != bj2 {
                    pairs.push(BoundPair {
                        first: bj,
                        second: bj2,
                        weight: g.weight,
                    });
                }
            }
        }
    }
    pairs
}

/// Builds the named layout at parameter `phi` in `[-pi, pi]`.
///
/// The 3+7 layout pairs `b3` with `a2` and `b4` with `a3`: both are obtained
/// from their partner by the same rotation by `phi` about the x axis, so
/// `E23(phi)` and `E34(phi)` are evaluated at relative angle `phi` like the
/// first group. The CHSH layout uses `a = (pi/2, 0)`, `a' = (pi/2, 2 phi)`,
/// `b = (pi/2, phi)`, `b' = (pi/2, -phi)`; it carries no term groups.
pub fn build_layout(name: LayoutName, phi: f64) -> Result<SettingsLayout> {
    if !(-PI..=PI).contains(&phi) || !phi.is_finite() {
        return Err(Error::PhiOutOfRange(phi));
    }
    let d = Direction::new;
    let x = d(FRAC_PI_2, 0.0);
    let y = d(FRAC_PI_2, FRAC_PI_2);
    let z = d(0.0, 0.0);
    let (a_list, b_list, groups) = match name {
        LayoutName::Original => (
            vec![x, z],
            vec![d(FRAC_PI_2 + phi, 0.0), d(phi, FRAC_PI_2), z],
            vec![group(1.0, &[(0, 0), (1, 2)]), group(1.0, &[(1, 1), (1, 2)])],
        ),
        LayoutName::ThreePlusSeven => (
            vec![x, y, z],
            vec![
                d(FRAC_PI_2, phi),
                d(FRAC_PI_2, FRAC_PI_2 + phi),
                d(FRAC_PI_2 + phi, FRAC_PI_2),
                d(phi, FRAC_PI_2),
                x,
                y,
                z,
            ],
            vec![
                group(0.5, &[(0, 0), (1, 1), (0, 4), (1, 5)]),
                group(0.5, &[(1, 2), (2, 3), (1, 5), (2, 6)]),
            ],
        ),
        LayoutName::ThreePlusSix => {
            let h = 0.5 * phi;
            (
                vec![x, y, z],
                vec![
                    d(FRAC_PI_2, h),
                    d(FRAC_PI_2, -h),
                    d(FRAC_PI_2 - h, FRAC_PI_2),
                    d(FRAC_PI_2 + h, FRAC_PI_2),
                    d(h, 0.0),
                    d(h, PI),
                ],
                vec![
                    group(2.0 / 3.0, &[(0, 0), (0, 1)]),
                    group(2.0 / 3.0, &[(1, 2), (1, 3)]),
                    group(2.0 / 3.0, &[(2, 4), (2, 5)]),
                ],
            )
        }
        LayoutName::Chsh => (
            vec![x, d(FRAC_PI_2, 2.0 * phi)],
            vec![d(FRAC_PI_2, phi), d(FRAC_PI_2, -phi)],
            Vec::new(),
        ),
    };
    let bound_pairs = bound_pairs_of(&groups);
    Ok(SettingsLayout {
        name,
        phi,
        a_list,
        b_list,
        groups,
        bound_pairs,
    })
}

/// Rotates every a-setting by `r.a` and every b-setting by `r.b`.
pub fn rotate_settings(r: &PartyRotations, layout: &SettingsLayout) -> SettingsLayout {
    SettingsLayout {
        a_list: layout.a_list.iter().map(|d| r.a.apply(d)).collect(),
        b_list: layout.b_list.iter().map(|d| r.b.apply(d)).collect(),
        ..layout.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        norm(&sub(a, b)) < tol
    }

    #[test]
    fn cartesian_examples() {
        assert!(close(&Direction::new(0.0, 1.3).to_cartesian(), &[0.0, 0.0, 1.0], 1e-15));
        assert!(close(
            &Direction::new(FRAC_PI_2, FRAC_PI_2).to_cartesian(),
            &[0.0, 1.0, 0.0],
            1e-15
        ));
        assert!(close(
            &Direction::new(FRAC_PI_2, 0.25).to_cartesian(),
            &[0.25f64.cos(), 0.25f64.sin(), 0.0],
            1e-15
        ));
    }

    #[test]
    fn poles_have_zero_azimuth() {
        assert_eq!(Direction::new(0.0, 1.0).phi, 0.0);
        assert_eq!(Direction::from_cartesian(&[0.0, 0.0, -2.0]).phi, 0.0);
        assert!((Direction::from_cartesian(&[0.0, 0.0, -2.0]).theta - PI).abs() < 1e-15);
    }

    #[test]
    fn theta_beyond_pi_is_folded() {
        let d = Direction::new(FRAC_PI_2 + 2.0, 0.0);
        assert!(d.theta <= PI);
        let raw = [(FRAC_PI_2 + 2.0f64).sin(), 0.0, (FRAC_PI_2 + 2.0f64).cos()];
        assert!(close(&d.to_cartesian(), &raw, 1e-12));
    }

    #[test]
    fn identity_rotation_leaves_layout_unchanged() {
        let l = build_layout(LayoutName::ThreePlusSix, 0.65).unwrap();
        assert_eq!(rotate_settings(&PartyRotations::IDENTITY, &l), l);
    }

    #[test]
    fn z_rotation_by_pi() {
        let l = build_layout(LayoutName::ThreePlusSeven, 0.3).unwrap();
        let r = PartyRotations::shared(RigidRotation::new(PI, 0.0, 0.0));
        let rl = rotate_settings(&r, &l);
        assert!((rl.a_list[0].theta - FRAC_PI_2).abs() < 1e-12);
        assert!((rl.a_list[0].phi.abs() - PI).abs() < 1e-12);
    }

    #[test]
    fn three_plus_seven_vectors() {
        let l = build_layout(LayoutName::ThreePlusSeven, 0.25).unwrap();
        assert_eq!(l.a_list.len(), 3);
        assert_eq!(l.b_list.len(), 7);
        assert_eq!(l.b_list[0], Direction::new(FRAC_PI_2, 0.25));
        assert_eq!(l.b_list[4], l.a_list[0]);
        assert_eq!(l.b_list[5], l.a_list[1]);
        assert_eq!(l.b_list[6], l.a_list[2]);
        // every phi-dependent term sits at relative angle phi
        for g in &l.groups {
            for &(i, j) in &g.terms {
                let ang = l.a_list[i].angle_to(&l.b_list[j]);
                assert!(ang.abs() < 1e-12 || (ang - 0.25).abs() < 1e-12, "{i} {j} {ang}");
            }
        }
        assert_eq!(l.bound_pairs.len(), 4);
    }

    #[test]
    fn three_plus_six_vectors() {
        let phi = 0.9;
        let l = build_layout(LayoutName::ThreePlusSix, phi).unwrap();
        assert_eq!(l.b_list[0], Direction::new(FRAC_PI_2, phi / 2.0));
        assert_eq!(l.b_list[1], Direction::new(FRAC_PI_2, -phi / 2.0));
        assert_eq!(l.bound_pairs.len(), 3);
        for bp in &l.bound_pairs {
            assert!((bp.weight - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_zero_collapses_onto_references() {
        let l7 = build_layout(LayoutName::ThreePlusSeven, 0.0).unwrap();
        assert!(close(&l7.b_list[0].to_cartesian(), &l7.a_list[0].to_cartesian(), 1e-12));
        for g in &l7.groups {
            for &(i, j) in &g.terms {
                assert!(l7.a_list[i].angle_to(&l7.b_list[j]) < 1e-12);
            }
        }
        let l6 = build_layout(LayoutName::ThreePlusSix, 0.0).unwrap();
        for g in &l6.groups {
            for &(i, j) in &g.terms {
                assert!(l6.a_list[i].angle_to(&l6.b_list[j]) < 1e-12);
            }
        }
    }

    #[test]
    fn original_layout_keeps_duplicate() {
        let l = build_layout(LayoutName::Original, 0.4).unwrap();
        assert_eq!(l.b_list[2], l.a_list[1]);
        assert_eq!(l.groups.len(), 2);
        assert_eq!(l.groups[0].terms, vec![(0, 0), (1, 2)]);
    }

    #[test]
    fn layout_errors() {
        assert!(matches!("bogus".parse::<LayoutName>(), Err(Error::UnknownLayout(_))));
        assert!(matches!(
            build_layout(LayoutName::ThreePlusSix, -3.2),
            Err(Error::PhiOutOfRange(_))
        ));
    }

    proptest! {
        #[test]
        fn unit_norm_and_round_trip(theta in 0.0..PI, phi in -PI..PI) {
            let v = Direction::new(theta, phi).to_cartesian();
            prop_assert!((norm(&v) - 1.0).abs() < 1e-12);
            let back = Direction::from_cartesian(&v).to_cartesian();
            prop_assert!(close(&v, &back, 1e-12));
        }

        #[test]
        fn rotation_is_proper_orthogonal(z1 in -PI..PI, y in 0.0..PI, z2 in -PI..PI) {
            let m = RigidRotation::new(z1, y, z2).as_matrix();
            for i in 0..3 {
                for j in 0..3 {
                    let g: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((g - want).abs() < 1e-12);
                }
            }
            let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            prop_assert!((det - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rotation_preserves_angles(
            z1 in -PI..PI, y in 0.0..PI, z2 in -PI..PI,
            t1 in 0.0..PI, p1 in -PI..PI, t2 in 0.0..PI, p2 in -PI..PI,
        ) {
            let r = RigidRotation::new(z1, y, z2);
            let a = Direction::new(t1, p1);
            let b = Direction::new(t2, p2);
            prop_assert!((r.apply(&a).angle_to(&r.apply(&b)) - a.angle_to(&b)).abs() < 1e-10);
        }

        #[test]
        fn three_plus_six_geometry(phi in 1e-3..(PI - 1e-3)) {
            let l = build_layout(LayoutName::ThreePlusSix, phi).unwrap();
            let diffs: Vec<Vec3> = (0..3)
                .map(|i| sub(&l.b_list[2 * i].to_cartesian(), &l.b_list[2 * i + 1].to_cartesian()))
                .collect();
            for i in 0..3 {
                for j in (i + 1)..3 {
                    prop_assert!(dot(&diffs[i], &diffs[j]).abs() < 1e-9);
                }
                let a = &l.a_list[i];
                prop_assert!((a.angle_to(&l.b_list[2 * i]) - phi / 2.0).abs() < 1e-10);
                prop_assert!((a.angle_to(&l.b_list[2 * i + 1]) - phi / 2.0).abs() < 1e-10);
            }
        }

        #[test]
        fn shared_rotation_keeps_intra_party_angles(
            z1 in -PI..PI, y in 0.0..PI, z2 in -PI..PI, phi in 0.0..1.5,
        ) {
            let l = build_layout(LayoutName::ThreePlusSeven, phi).unwrap();
            let r = PartyRotations::shared(RigidRotation::new(z1, y, z2));
            let rl = rotate_settings(&r, &l);
            let before = l.a_list[0].angle_to(&l.a_list[1]);
            let after = rl.a_list[0].angle_to(&rl.a_list[1]);
            prop_assert!((before - after).abs() < 1e-10);
        }
    }
}
