//! Closed forms in the nonorthogonal two-ket basis `{|alpha>, |-alpha>}` for
//! real amplitude `alpha`.
//!
//! Coefficient vectors are ordered `(c_plus, c_minus)`: `c[0]` multiplies
//! `|alpha>` and `c[1]` multiplies `|-alpha>`. Pseudo-spin conventions follow
//! the Fock oracle: `s_z` is +1 on odd and -1 on even photon number,
//! `s_x = s_+ + s_-`, `s_y = i (s_- - s_+)`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock;
use crate::logdomain::{ln_sinh, sum_positive_log_series};
use crate::sphere::Vec3;

/// Smallest amplitude accepted by the coefficient-algebra paths.
pub const ALPHA_FLOOR: f64 = 0.05;

/// Series truncation depth in nats below the largest term.
const SERIES_CUTOFF_NATS: f64 = 60.0;

/// Above this amplitude closed forms are not cross-checked against the oracle.
const CERTIFY_MAX_ALPHA: f64 = 3.0;
const CERTIFY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EcsSign {
    Plus,
    Minus,
}

impl EcsSign {
    pub fn as_f64(self) -> f64 {
        match self {
            EcsSign::Plus => 1.0,
            EcsSign::Minus => -1.0,
        }
    }
}

impl fmt::Display for EcsSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EcsSign::Plus => "+",
            EcsSign::Minus => "-",
        })
    }
}

/// Entangled coherent state `N (|alpha>|-alpha> +/- |-alpha>|alpha>)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcsSpec {
    pub alpha: f64,
    pub sign: EcsSign,
}

impl EcsSpec {
    pub fn new(alpha: f64, sign: EcsSign) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::AlphaTooSmall(alpha));
        }
        Ok(Self { alpha, sign })
    }

    /// Overlap `<alpha|-alpha> = exp(-2 alpha^2)`.
    pub fn kappa(&self) -> f64 {
        overlap(self.alpha)
    }

    pub fn norm_factor(&self) -> f64 {
        let x = -4.0 * self.alpha * self.alpha;
        let bracket = match self.sign {
            EcsSign::Plus => 1.0 + x.exp(),
            EcsSign::Minus => -x.exp_m1(),
        };
        (2.0 * bracket).sqrt().recip()
    }

    /// Two-mode coefficients `C[x][y]` of `|x alpha>_A |y alpha>_B`.
    pub fn coefficients(&self) -> [[C64; 2]; 2] {
        let n = self.norm_factor();
        [
            [C64::new(0.0, 0.0), C64::new(n, 0.0)],
            [C64::new(self.sign.as_f64() * n, 0.0), C64::new(0.0, 0.0)],
        ]
    }

    /// Norm of the state recomputed from its coefficients and the Gram matrix.
    pub fn gram_norm_sqr(&self) -> f64 {
        let g = gram(self.alpha);
        let c = self.coefficients();
        let mut acc = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                for xp in 0..2 {
                    for yp in 0..2 {
                        acc += (c[x][y].conj() * c[xp][yp]).re * g[x][xp] * g[y][yp];
                    }
                }
            }
        }
        acc
    }
}

pub fn overlap(alpha: f64) -> f64 {
    (-2.0 * alpha * alpha).exp()
}

pub fn gram(alpha: f64) -> [[f64; 2]; 2] {
    let k = overlap(alpha);
    [[1.0, k], [k, 1.0]]
}

/// `ln sum_n alpha^(4n) / ((2n)! sqrt(2n+1))`.
fn ln_odd_even_series(alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    let ln_a4 = 4.0 * alpha.ln();
    // running ln (2n)!
    let mut ln_fact = 0.0;
    let mut last_n = 0usize;
    sum_positive_log_series(
        |n| {
            while last_n < n {
                last_n += 1;
                let k = 2 * last_n;
                ln_fact += ((k - 1) as f64).ln() + (k as f64).ln();
            }
            n as f64 * ln_a4 - ln_fact - 0.5 * ((2 * n + 1) as f64).ln()
        },
        SERIES_CUTOFF_NATS,
    )
}

/// Squared overlap of the normalized even and odd parts of `|alpha>`:
/// `K = (2 a^2 / sinh 2 a^2) [sum a^(4n) / ((2n)! sqrt(2n+1))]^2`.
pub fn kappa_k(alpha: f64) -> f64 {
    let alpha = alpha.abs();
    if alpha == 0.0 {
        return 1.0;
    }
    let x = 2.0 * alpha * alpha;
    (x.ln() - ln_sinh(x) + 2.0 * ln_odd_even_series(alpha)).exp()
}

/// Pseudo-spin Bloch vector `<alpha| s |alpha>` for real `alpha >= 0`.
/// The vector of `|-alpha>` is the same with `m_x` negated.
pub fn pseudospin_bloch(alpha: f64) -> Vec3 {
    let a = alpha.abs();
    let mz = -(-2.0 * a * a).exp();
    if a == 0.0 {
        return [0.0, 0.0, mz];
    }
    let ln_mx = std::f64::consts::LN_2 - a * a + a.ln() + ln_odd_even_series(a);
    [ln_mx.exp() * alpha.signum(), 0.0, mz]
}

/// 2x2 complex map on coefficient pairs; `apply` computes `M c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitCoeffMap(pub [[C64; 2]; 2]);

impl QubitCoeffMap {
    pub fn identity() -> Self {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        Self([[one, zero], [zero, one]])
    }

    pub fn apply(&self, c: &[C64; 2]) -> [C64; 2] {
        let m = &self.0;
        [m[0][0] * c[0] + m[0][1] * c[1], m[1][0] * c[0] + m[1][1] * c[1]]
    }

    /// `self * rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &QubitCoeffMap) -> QubitCoeffMap {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        QubitCoeffMap(out)
    }

    pub fn adjoint(&self) -> QubitCoeffMap {
        let m = &self.0;
        QubitCoeffMap([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn max_abs_diff(&self, other: &QubitCoeffMap) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        d
    }

    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint().compose(self).max_abs_diff(&Self::identity())
    }
}

/// Asymptotic action of the Kerr/displacement rotation:
/// `|alpha>  -> sin(t/2)|alpha> + e^{-i p} cos(t/2)|-alpha>`,
/// `|-alpha> -> e^{i p} cos(t/2)|alpha> - sin(t/2)|-alpha>`.
pub fn rotation_map(theta: f64, phi: f64) -> QubitCoeffMap {
    let (s, c) = (0.5 * theta).sin_cos();
    let e = C64::from_polar(1.0, phi);
    QubitCoeffMap([
        [C64::new(s, 0.0), e * c],
        [e.conj() * c, C64::new(-s, 0.0)],
    ])
}

/// Asymptotic action of `u.s` with `u = (theta, phi)`:
/// `|alpha>  -> sin t cos p |alpha> - (cos t - i sin t sin p)|-alpha>`,
/// `|-alpha> -> -(cos t + i sin t sin p)|alpha> - sin t cos p |-alpha>`.
pub fn pseudospin_map(theta: f64, phi: f64) -> QubitCoeffMap {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let diag = st * cp;
    QubitCoeffMap([
        [C64::new(diag, 0.0), C64::new(-ct, -st * sp)],
        [C64::new(-ct, st * sp), C64::new(-diag, 0.0)],
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorFamily {
    OnOff,
    Parity,
    Sx,
    Sy,
    Sz,
}

impl OperatorFamily {
    pub const ALL: [OperatorFamily; 5] = [
        OperatorFamily::OnOff,
        OperatorFamily::Parity,
        OperatorFamily::Sx,
        OperatorFamily::Sy,
        OperatorFamily::Sz,
    ];
}

impl fmt::Display for OperatorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorFamily::OnOff => "on-off",
            OperatorFamily::Parity => "parity",
            OperatorFamily::Sx => "sx",
            OperatorFamily::Sy => "sy",
            OperatorFamily::Sz => "sz",
        })
    }
}

impl FromStr for OperatorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on-off" | "onoff" => Ok(OperatorFamily::OnOff),
            "parity" => Ok(OperatorFamily::Parity),
            "sx" => Ok(OperatorFamily::Sx),
            "sy" => Ok(OperatorFamily::Sy),
            "sz" => Ok(OperatorFamily::Sz),
            other => Err(Error::UnsupportedModel(other.to_string())),
        }
    }
}

/// Matrix elements `M[x][y] = <x alpha| O |y alpha>`, index 0 for `+alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorElements(pub [[C64; 2]; 2]);

impl OperatorElements {
    /// Elements of the identity, i.e. the Gram matrix.
    pub fn identity(alpha: f64) -> Self {
        let g = gram(alpha);
        Self([
            [C64::new(g[0][0], 0.0), C64::new(g[0][1], 0.0)],
            [C64::new(g[1][0], 0.0), C64::new(g[1][1], 0.0)],
        ])
    }

    pub fn is_hermitian(&self) -> bool {
        let m = &self.0;
        m[0][0].im == 0.0 && m[1][1].im == 0.0 && m[0][1] == m[1][0].conj()
    }

    pub fn max_abs_diff(&self, other: &OperatorElements) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        d
    }
}

/// Closed-form elements without oracle certification.
pub fn closed_form_elements(family: OperatorFamily, alpha: f64) -> OperatorElements {
    let r = |x: f64| C64::new(x, 0.0);
    let k = overlap(alpha);
    match family {
        OperatorFamily::OnOff => {
            let vac = 2.0 * (-alpha * alpha).exp();
            let d = r(1.0 - vac);
            let o = r(k - vac);
            OperatorElements([[d, o], [o, d]])
        }
        OperatorFamily::Parity | OperatorFamily::Sz => {
            OperatorElements([[r(-k), r(-1.0)], [r(-1.0), r(-k)]])
        }
        OperatorFamily::Sx => {
            let mx = pseudospin_bloch(alpha)[0];
            OperatorElements([[r(mx), r(0.0)], [r(0.0), r(-mx)]])
        }
        OperatorFamily::Sy => {
            let mx = pseudospin_bloch(alpha)[0];
            OperatorElements([
                [r(0.0), C64::new(0.0, -mx)],
                [C64::new(0.0, mx), r(0.0)],
            ])
        }
    }
}

/// Closed-form elements, certified against the Fock oracle for `alpha <= 3`.
pub fn operator_elements(family: OperatorFamily, alpha: f64) -> Result<OperatorElements> {
    if alpha < ALPHA_FLOOR {
        return Err(Error::AlphaTooSmall(alpha));
    }
    let m = closed_form_elements(family, alpha);
    if alpha <= CERTIFY_MAX_ALPHA {
        let oracle = fock::coherent_matrix_elements(family, alpha)?;
        let diff = m.max_abs_diff(&oracle);
        if diff > CERTIFY_TOL {
            return Err(Error::Certification {
                what: format!("{family} elements at alpha = {alpha}"),
                diff,
            });
        }
    }
    Ok(m)
}

/// `<c|c>` in the nonorthogonal basis.
pub fn gram_norm_sqr(c: &[C64; 2], alpha: f64) -> f64 {
    let k = overlap(alpha);
    c[0].norm_sqr() + c[1].norm_sqr() + 2.0 * k * (c[0].conj() * c[1]).re
}

/// Sesquilinear contraction `sum_ij conj(bra_i) M_ij ket_j`.
pub fn gram_expectation(
    bra: &[C64; 2],
    op: &OperatorElements,
    ket: &[C64; 2],
    alpha: f64,
) -> Result<C64> {
    for c in [bra, ket] {
        let n = gram_norm_sqr(c, alpha);
        if n < 1e-12 {
            return Err(Error::ZeroNorm(n));
        }
    }
    let m = &op.0;
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            acc += bra[i].conj() * m[i][j] * ket[j];
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_real, oracle_pseudospin_image, pseudo_spin_ops, FockVector};
    use crate::sphere::Direction;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn k_limits() {
        assert_eq!(kappa_k(0.0), 1.0);
        assert!(kappa_k(0.01) > 0.9999);
        assert!(kappa_k(50.0) > 0.999);
        assert!(kappa_k(100.0).is_finite());
    }

    #[test]
    fn k_matches_direct_sum_at_moderate_alpha() {
        // direct f64 summation is safe for alpha = 1.3
        let a: f64 = 1.3;
        let mut s = 0.0;
        let mut fact = 1.0;
        for n in 0..40 {
            if n > 0 {
                fact *= ((2 * n - 1) * (2 * n)) as f64;
            }
            s += a.powi(4 * n as i32) / (fact * ((2 * n + 1) as f64).sqrt());
        }
        let x = 2.0 * a * a;
        let k = x / x.sinh() * s * s;
        assert!((kappa_k(a) - k).abs() < 1e-13);
    }

    #[test]
    fn bloch_examples() {
        assert_eq!(pseudospin_bloch(0.0), [0.0, 0.0, -1.0]);
        assert_eq!(pseudospin_bloch(1.7)[1], 0.0);
    }

    #[test]
    fn bloch_length_closed_form() {
        // |m|^2 = K (1 - e^{-4a^2}) + e^{-4a^2}
        for a in [0.2, 0.9, 1.5, 4.0, 20.0] {
            let m = pseudospin_bloch(a);
            let e = (-4.0 * a * a).exp();
            let want = kappa_k(a) * (1.0 - e) + e;
            assert!((m[0] * m[0] + m[2] * m[2] - want).abs() < 1e-13, "{a}");
        }
    }

    #[test]
    fn rotation_map_examples() {
        let m = rotation_map(PI, 0.0);
        let want = QubitCoeffMap([
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)],
        ]);
        assert!(m.max_abs_diff(&want) < 1e-15);

        let p = 0.8;
        let m = rotation_map(0.0, p);
        assert!(m.0[0][0].norm() < 1e-15 && m.0[1][1].norm() < 1e-15);
        assert!((m.0[1][0] - C64::from_polar(1.0, -p)).norm() < 1e-15);
        assert!((m.0[0][1] - C64::from_polar(1.0, p)).norm() < 1e-15);

        assert!(rotation_map(0.3, 2.1).unitarity_defect() < 1e-12);
    }

    #[test]
    fn pseudospin_map_examples() {
        let m = pseudospin_map(FRAC_PI_2, 0.0);
        let want = QubitCoeffMap([
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)],
        ]);
        assert!(m.max_abs_diff(&want) < 1e-15);
        for (t, p) in [(0.3, 2.1), (1.2, -0.4), (2.9, 1.0)] {
            let m = pseudospin_map(t, p);
            assert!(m.compose(&m).max_abs_diff(&QubitCoeffMap::identity()) < 1e-12);
            assert!(m.unitarity_defect() < 1e-12);
        }
    }

    #[test]
    fn onoff_and_parity_elements() {
        let m = closed_form_elements(OperatorFamily::OnOff, 5.0);
        assert!((m.0[0][0].re - (1.0 - 2.0 * (-25.0f64).exp())).abs() < 1e-15);
        // distance from 1 is 2e^{-25} = 2.78e-11
        assert!((m.0[0][0].re - 1.0).abs() < 3e-11);
        let p = closed_form_elements(OperatorFamily::Parity, 1.0);
        assert!((p.0[0][0].re + (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn elements_are_hermitian_as_built() {
        for f in OperatorFamily::ALL {
            for a in [0.05, 0.7, 2.0, 6.0] {
                assert!(closed_form_elements(f, a).is_hermitian(), "{f} {a}");
            }
        }
    }

    #[test]
    fn certified_elements_at_1_5() {
        for f in OperatorFamily::ALL {
            operator_elements(f, 1.5).unwrap();
        }
        assert!(matches!(
            operator_elements(OperatorFamily::OnOff, 0.01),
            Err(Error::AlphaTooSmall(_))
        ));
    }

    #[test]
    fn gram_expectation_examples() {
        let a = 0.8;
        let c = [C64::new(0.6, 0.0), C64::new(0.6, 0.0)];
        let v = gram_expectation(&c, &OperatorElements::identity(a), &c, a).unwrap();
        assert!((v.re - gram_norm_sqr(&c, a)).abs() < 1e-15);

        let e0 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let m = closed_form_elements(OperatorFamily::OnOff, 5.0);
        let v = gram_expectation(&e0, &m, &e0, 5.0).unwrap();
        assert!((v.re - (1.0 - 2.0 * (-25.0f64).exp())).abs() < 1e-15);

        let z = [C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        assert!(matches!(gram_expectation(&z, &m, &e0, 5.0), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn ecs_normalization() {
        for sign in [EcsSign::Plus, EcsSign::Minus] {
            for a in [0.05, 0.3, 1.0, 4.0] {
                let s = EcsSpec::new(a, sign).unwrap();
                assert!((s.gram_norm_sqr() - 1.0).abs() < 1e-12, "{sign} {a}");
            }
        }
    }

    #[test]
    fn k_minimum_on_grid() {
        let (mut kmin, mut amin) = (f64::INFINITY, 0.0);
        for i in 0..=990 {
            let a = 0.1 + 0.01 * i as f64;
            let k = kappa_k(a);
            if k < kmin {
                kmin = k;
                amin = a;
            }
        }
        assert!((0.905..=0.910).contains(&kmin), "{kmin}");
        assert!((amin - 1.46).abs() < 0.02, "{amin}");
    }

    #[test]
    fn bloch_matches_oracle() {
        for a in [0.3, 1.0, 2.2] {
            let ket = coherent_real(a).unwrap();
            let ops = pseudo_spin_ops(ket.dim()).unwrap();
            let m = pseudospin_bloch(a);
            let want = [
                crate::fock::expectation(&ket, &ops.s_x()).unwrap().re,
                crate::fock::expectation(&ket, &ops.s_y()).unwrap().re,
                crate::fock::expectation(&ket, &ops.s_z).unwrap().re,
            ];
            for k in 0..3 {
                assert!((m[k] - want[k]).abs() < 1e-8, "{a} {k}");
            }
        }
    }

    #[test]
    fn pseudospin_map_matches_oracle_at_three() {
        let alpha = 3.0;
        let plus = coherent_real(alpha).unwrap();
        let minus = coherent_real(-alpha).unwrap();
        for (t, p) in [(0.4, 0.3), (1.3, -2.0), (FRAC_PI_2, 1.0), (2.7, 2.9)] {
            let u = Direction::new(t, p);
            let (coeffs, captured) = oracle_pseudospin_image(alpha, &u).unwrap();
            assert!(captured > 0.95, "{captured}");
            let c = pseudospin_map(t, p).apply(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
            let predicted = FockVector::combine(&[(c[0], &plus), (c[1], &minus)]).unwrap();
            let projected = FockVector::combine(&[(coeffs[0], &plus), (coeffs[1], &minus)]).unwrap();
            assert!(predicted.fidelity(&projected) >= 0.99, "({t}, {p})");
        }
    }

    #[test]
    fn gram_expectation_matches_oracle() {
        let alpha = 1.0;
        let plus = coherent_real(alpha).unwrap();
        let minus = coherent_real(-alpha).unwrap();
        let coeffs = [
            [C64::new(0.3, -0.2), C64::new(-0.7, 0.5)],
            [C64::new(1.1, 0.0), C64::new(0.2, 0.9)],
            [C64::new(-0.4, 0.6), C64::new(0.05, -0.3)],
        ];
        for f in OperatorFamily::ALL {
            let el = operator_elements(f, alpha).unwrap();
            for bra in &coeffs {
                for ket in &coeffs {
                    let got = gram_expectation(bra, &el, ket, alpha).unwrap();
                    let vb = FockVector::combine(&[(bra[0], &plus), (bra[1], &minus)]).unwrap();
                    let vk = FockVector::combine(&[(ket[0], &plus), (ket[1], &minus)]).unwrap();
                    let dim = plus.dim();
                    let op = match f {
                        OperatorFamily::OnOff => crate::fock::FockOperator::on_off(dim),
                        OperatorFamily::Parity | OperatorFamily::Sz => crate::fock::FockOperator::parity(dim),
                        OperatorFamily::Sx => pseudo_spin_ops(dim).unwrap().s_x(),
                        OperatorFamily::Sy => pseudo_spin_ops(dim).unwrap().s_y(),
                    };
                    let want = vb.inner(&op.apply(&vk).unwrap());
                    assert!((got - want).norm() < 1e-8, "{f}");
                }
            }
        }
    }

    #[test]
    fn k_is_fast_at_large_alpha() {
        let start = std::time::Instant::now();
        let k = kappa_k(100.0);
        assert!(k.is_finite() && k <= 1.0);
        assert!(start.elapsed().as_millis() < 10);
    }

    proptest! {
        #[test]
        fn bloch_inside_unit_ball(a in 0.0f64..50.0) {
            let m = pseudospin_bloch(a);
            prop_assert!(m[0] * m[0] + m[1] * m[1] + m[2] * m[2] <= 1.0 + 1e-12);
        }

        #[test]
        fn k_and_bloch_are_continuous(a in 0.0f64..50.0) {
            prop_assert!((kappa_k(a + 1e-3) - kappa_k(a)).abs() < 1e-2);
            let (m0, m1) = (pseudospin_bloch(a), pseudospin_bloch(a + 1e-3));
            prop_assert!((m0[0] - m1[0]).abs() < 1e-2 && (m0[2] - m1[2]).abs() < 1e-2);
        }

        #[test]
        fn k_stays_in_range(a in 0.0f64..100.0) {
            let k = kappa_k(a);
            prop_assert!((0.905..=1.0 + 1e-12).contains(&k));
        }
    }
}
