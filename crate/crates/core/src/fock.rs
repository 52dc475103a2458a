//! Truncated number-basis simulator for one bosonic mode and two-mode
//! products. Every closed form elsewhere in the crate is checked against the
//! brute-force expectations computed here.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::coherent::{rotation_map, EcsSpec, OperatorElements, OperatorFamily, QubitCoeffMap};
use crate::error::{Error, Result};
use crate::logdomain::LogValue;
use crate::sphere::Direction;

const TAIL_LIMIT: f64 = 1e-8;
const EXPM_TAIL: f64 = 1e-14;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `ceil(a^2 + 10 a + 20)` rounded up to an even number, so that pseudo-spin
/// pairs `(2n, 2n+1)` are complete.
pub fn truncation_dim(alpha_abs: f64) -> usize {
    let a = alpha_abs.abs();
    let d = (a * a + 10.0 * a + 20.0).ceil() as usize;
    d + d % 2
}

/// Poisson mass beyond the truncation: `sum_{n >= dim} e^{-l} l^n / n!`.
fn poisson_tail(mean: f64, dim: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let ln_mean = mean.ln();
    let mut ln_fact: f64 = (2..=dim).map(|k| (k as f64).ln()).sum();
    let mut acc = LogValue::ZERO;
    let mut n = dim;
    let mut prev = f64::INFINITY;
    loop {
        let t = -mean + n as f64 * ln_mean - ln_fact;
        acc = acc + LogValue::from_log(t);
        if (t < prev && t < acc.log_magnitude - 60.0) || t < -745.0 && t < prev {
            break;
        }
        prev = t;
        n += 1;
        ln_fact += (n as f64).ln();
    }
    acc.to_f64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    amplitudes: DVector<C64>,
    tail_mass: f64,
}

impl FockVector {
    pub fn from_amplitudes(amplitudes: DVector<C64>) -> Self {
        Self {
            amplitudes,
            tail_mass: 0.0,
        }
    }

    pub fn basis(n: usize, dim: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[n] = c(1.0);
        Self::from_amplitudes(v)
    }

    pub fn vacuum(dim: usize) -> Self {
        Self::basis(0, dim)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    /// Probability mass the truncation dropped (exact for coherent states).
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &FockVector) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// `sum_k w_k |v_k>`; all vectors must share one dimension.
    pub fn combine(terms: &[(C64, &FockVector)]) -> Result<FockVector> {
        let dim = terms.first().map(|t| t.1.dim()).unwrap_or(0);
        let mut out = DVector::zeros(dim);
        for (w, v) in terms {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch(dim, v.dim()));
            }
            out += &v.amplitudes * *w;
        }
        Ok(Self::from_amplitudes(out))
    }

    /// `|<self|other>|^2 / (<self|self> <other|other>)`.
    pub fn fidelity(&self, other: &FockVector) -> f64 {
        self.inner(other).norm_sqr() / (self.norm_sqr() * other.norm_sqr())
    }
}

/// Coherent state amplitudes `e^{-|a|^2/2} a^n / sqrt(n!)`, evaluated in the
/// log domain.
pub fn coherent(alpha: C64, dim: usize) -> Result<FockVector> {
    if dim < 4 {
        return Err(Error::DimensionMismatch(dim, 4));
    }
    let mean = alpha.norm_sqr();
    let mut amps = DVector::zeros(dim);
    if mean == 0.0 {
        amps[0] = c(1.0);
        return Ok(FockVector::from_amplitudes(amps));
    }
    let ln_r = alpha.norm().ln();
    let arg = alpha.arg();
    let mut ln_fact = 0.0;
    for n in 0..dim {
        if n > 1 {
            ln_fact += (n as f64).ln();
        }
        let ln_mag = -0.5 * mean + n as f64 * ln_r - 0.5 * ln_fact;
        amps[n] = C64::from_polar(ln_mag.exp(), n as f64 * arg);
    }
    let tail = poisson_tail(mean, dim);
    if tail > TAIL_LIMIT {
        return Err(Error::Truncation { dim, tail });
    }
    Ok(FockVector {
        amplitudes: amps,
        tail_mass: tail,
    })
}

pub fn coherent_real(alpha: f64) -> Result<FockVector> {
    coherent(c(alpha), truncation_dim(alpha))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    matrix: DMatrix<C64>,
}

impl FockOperator {
    pub fn from_matrix(matrix: DMatrix<C64>) -> Self {
        Self { matrix }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: impl IntoIterator<Item = C64>) -> Self {
        let d: Vec<C64> = diag.into_iter().collect();
        Self::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(d)))
    }

    pub fn annihilation(dim: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        for n in 1..dim {
            m[(n - 1, n)] = c((n as f64).sqrt());
        }
        Self::from_matrix(m)
    }

    pub fn number(dim: usize) -> Self {
        Self::from_diagonal((0..dim).map(|n| c(n as f64)))
    }

    /// `1 - 2|0><0|`: -1 on vacuum, +1 on any excitation.
    pub fn on_off(dim: usize) -> Self {
        Self::from_diagonal((0..dim).map(|n| c(if n == 0 { -1.0 } else { 1.0 })))
    }

    /// +1 on odd, -1 on even photon number.
    pub fn parity(dim: usize) -> Self {
        Self::from_diagonal((0..dim).map(|n| c(if n % 2 == 1 { 1.0 } else { -1.0 })))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self::from_matrix(self.matrix.adjoint())
    }

    /// `self * rhs`.
    pub fn compose(&self, rhs: &FockOperator) -> Self {
        Self::from_matrix(&self.matrix * &rhs.matrix)
    }

    pub fn apply(&self, v: &FockVector) -> Result<FockVector> {
        if v.dim() != self.dim() {
            return Err(Error::DimensionMismatch(self.dim(), v.dim()));
        }
        Ok(FockVector::from_amplitudes(&self.matrix * &v.amplitudes))
    }

    pub fn max_abs_diff(&self, other: &FockOperator) -> f64 {
        (&self.matrix - &other.matrix)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// Largest entry of `(U^dagger U - 1)` restricted to indices `< low`.
    pub fn unitarity_defect_below(&self, low: usize) -> f64 {
        let g = self.matrix.adjoint() * &self.matrix;
        let mut d: f64 = 0.0;
        for i in 0..low.min(self.dim()) {
            for j in 0..low.min(self.dim()) {
                let want = if i == j { 1.0 } else { 0.0 };
                d = d.max((g[(i, j)] - c(want)).norm());
            }
        }
        d
    }
}

fn norm1(m: &DMatrix<C64>) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a Taylor series whose
/// tail is cut at 1e-14 relative to the running sum.
pub fn expm(x: &DMatrix<C64>) -> DMatrix<C64> {
    let n = x.nrows();
    let nrm = norm1(x);
    let squarings = if nrm > 0.5 {
        (nrm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let y = x / c(2f64.powi(squarings));
    let mut sum = DMatrix::<C64>::identity(n, n);
    let mut term = DMatrix::<C64>::identity(n, n);
    for k in 1..64 {
        term = &term * &y / c(k as f64);
        sum += &term;
        if norm1(&term) <= EXPM_TAIL * norm1(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `exp(beta a^dagger - beta^* a)` on the truncated space.
pub fn displace(beta: C64, dim: usize) -> FockOperator {
    let a = FockOperator::annihilation(dim).matrix;
    let gen = a.adjoint() * beta - a * beta.conj();
    FockOperator::from_matrix(expm(&gen))
}

/// `exp(-i pi n^2 / 2)`: 1 on even and -i on odd photon number.
pub fn kerr_half_pi(dim: usize) -> FockOperator {
    FockOperator::from_diagonal((0..dim).map(|n| {
        if n % 2 == 0 {
            c(1.0)
        } else {
            C64::new(0.0, -1.0)
        }
    }))
}

/// Kerr/displacement sequence `D(i p/4a) U D(i t/4a) U D(-i p/4a)`.
///
/// For `a >> 1` it maps `|a>` to `sin(t/2)|a> + e^{-i p} cos(t/2)|-a>`, the
/// action reproduced by [`rotation_map`]. The outer displacements carry the
/// azimuth with the sign that yields `e^{-i p}` on `|-a>`.
pub fn composite_rotation(theta: f64, phi: f64, alpha: f64, dim: usize) -> FockOperator {
    let u = kerr_half_pi(dim);
    let outer_in = displace(C64::new(0.0, -phi / (4.0 * alpha)), dim);
    let middle = displace(C64::new(0.0, theta / (4.0 * alpha)), dim);
    let outer_out = displace(C64::new(0.0, phi / (4.0 * alpha)), dim);
    outer_out
        .compose(&u)
        .compose(&middle)
        .compose(&u)
        .compose(&outer_in)
}

/// Fidelity between `R(t, p)|alpha>` from [`composite_rotation`] and the
/// asymptotic image predicted by [`rotation_map`].
pub fn rotation_fidelity(theta: f64, phi: f64, alpha: f64) -> Result<f64> {
    let dim = truncation_dim(alpha);
    let plus = coherent(c(alpha), dim)?;
    let minus = coherent(c(-alpha), dim)?;
    let actual = composite_rotation(theta, phi, alpha, dim).apply(&plus)?;
    let img = rotation_map(theta, phi).apply(&[c(1.0), c(0.0)]);
    let predicted = FockVector::combine(&[(img[0], &plus), (img[1], &minus)])?;
    Ok(predicted.fidelity(&actual))
}

/// Pseudo-spin operators on the truncated mode.
#[derive(Debug, Clone)]
pub struct PseudoSpinOps {
    pub s_z: FockOperator,
    pub s_plus: FockOperator,
    pub s_minus: FockOperator,
}

/// `s_z = sum |2n+1><2n+1| - |2n><2n|`, `s_- = sum |2n><2n+1|`,
/// `s_+ = s_-^dagger`. `dim` must be even.
pub fn pseudo_spin_ops(dim: usize) -> Result<PseudoSpinOps> {
    if dim % 2 != 0 {
        return Err(Error::DimensionMismatch(dim, dim + 1));
    }
    let s_z = FockOperator::parity(dim);
    let mut m = DMatrix::zeros(dim, dim);
    for n in (0..dim).step_by(2) {
        m[(n, n + 1)] = c(1.0);
    }
    let s_minus = FockOperator::from_matrix(m);
    let s_plus = s_minus.adjoint();
    Ok(PseudoSpinOps {
        s_z,
        s_plus,
        s_minus,
    })
}

impl PseudoSpinOps {
    pub fn s_x(&self) -> FockOperator {
        FockOperator::from_matrix(&self.s_plus.matrix + &self.s_minus.matrix)
    }

    pub fn s_y(&self) -> FockOperator {
        FockOperator::from_matrix((&self.s_minus.matrix - &self.s_plus.matrix) * C64::new(0.0, 1.0))
    }

    /// `a.s = sin t (e^{i p} s_- + e^{-i p} s_+) + cos t s_z`.
    pub fn along(&self, d: &Direction) -> FockOperator {
        let (st, ct) = d.theta.sin_cos();
        let e = C64::from_polar(st, d.phi);
        FockOperator::from_matrix(
            &self.s_minus.matrix * e + &self.s_plus.matrix * e.conj() + &self.s_z.matrix * c(ct),
        )
    }
}

/// `<psi|O|psi> / <psi|psi>`.
pub fn expectation(state: &FockVector, op: &FockOperator) -> Result<C64> {
    let n = state.norm_sqr();
    if n < 1e-300 {
        return Err(Error::ZeroNorm(n));
    }
    let ov = op.apply(state)?;
    Ok(state.inner(&ov) / c(n))
}

/// Two-mode pure state stored as the coefficient matrix `psi[(m, n)]` of
/// `|m>_A |n>_B`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeState {
    psi: DMatrix<C64>,
}

impl TwoModeState {
    pub fn product(a: &FockVector, b: &FockVector) -> Self {
        Self {
            psi: &a.amplitudes * b.amplitudes.transpose(),
        }
    }

    pub fn combine(terms: &[(C64, TwoModeState)]) -> Self {
        let mut it = terms.iter();
        let (w0, s0) = it.next().expect("at least one term");
        let mut psi = &s0.psi * *w0;
        for (w, s) in it {
            psi += &s.psi * *w;
        }
        Self { psi }
    }

    /// Two-mode state from coefficients over `{|a>, |-a>}` on each mode.
    pub fn from_coherent_coefficients(coeffs: &[[C64; 2]; 2], alpha: f64) -> Result<Self> {
        let plus = coherent_real(alpha)?;
        let minus = coherent_real(-alpha)?;
        let kets = [&plus, &minus];
        let mut terms = Vec::with_capacity(4);
        for x in 0..2 {
            for y in 0..2 {
                if coeffs[x][y] != c(0.0) {
                    terms.push((coeffs[x][y], Self::product(kets[x], kets[y])));
                }
            }
        }
        if terms.is_empty() {
            return Err(Error::ZeroNorm(0.0));
        }
        Ok(Self::combine(&terms))
    }

    /// `N (|a>|-a> +/- |-a>|a>)` built directly in the number basis.
    pub fn ecs(spec: &EcsSpec) -> Result<Self> {
        Self::from_coherent_coefficients(&spec.coefficients(), spec.alpha)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.psi.nrows(), self.psi.ncols())
    }
}

/// `<psi| A (x) B |psi> / <psi|psi>`.
pub fn expectation_two_mode(state: &TwoModeState, op_a: &FockOperator, op_b: &FockOperator) -> Result<C64> {
    let (da, db) = state.dims();
    if op_a.dim() != da {
        return Err(Error::DimensionMismatch(op_a.dim(), da));
    }
    if op_b.dim() != db {
        return Err(Error::DimensionMismatch(op_b.dim(), db));
    }
    let n = state.norm_sqr();
    if n < 1e-300 {
        return Err(Error::ZeroNorm(n));
    }
    let transformed = &op_a.matrix * &state.psi * op_b.matrix.transpose();
    let num: C64 = state
        .psi
        .iter()
        .zip(transformed.iter())
        .map(|(p, t)| p.conj() * t)
        .sum();
    Ok(num / c(n))
}

fn family_operator(family: OperatorFamily, dim: usize) -> Result<FockOperator> {
    Ok(match family {
        OperatorFamily::OnOff => FockOperator::on_off(dim),
        OperatorFamily::Parity | OperatorFamily::Sz => FockOperator::parity(dim),
        OperatorFamily::Sx => pseudo_spin_ops(dim)?.s_x(),
        OperatorFamily::Sy => pseudo_spin_ops(dim)?.s_y(),
    })
}

/// Brute-force `<x a| O |y a>` for `x, y in {+1, -1}`.
pub fn coherent_matrix_elements(family: OperatorFamily, alpha: f64) -> Result<OperatorElements> {
    let dim = truncation_dim(alpha);
    let kets = [coherent(c(alpha), dim)?, coherent(c(-alpha), dim)?];
    let op = family_operator(family, dim)?;
    let mut m = [[c(0.0); 2]; 2];
    for y in 0..2 {
        let oy = op.apply(&kets[y])?;
        for x in 0..2 {
            m[x][y] = kets[x].inner(&oy);
        }
    }
    Ok(OperatorElements(m))
}

/// Oracle for the ECS pseudo-spin correlation `<(a.s) (x) (b.s)>`.
pub fn oracle_pseudospin_correlation(spec: &EcsSpec, a: &Direction, b: &Direction) -> Result<f64> {
    let state = TwoModeState::ecs(spec)?;
    let dim = state.dims().0;
    let ops = pseudo_spin_ops(dim)?;
    Ok(expectation_two_mode(&state, &ops.along(a), &ops.along(b))?.re)
}

/// Oracle for `<ref| (u.s) (a.s) (u.s) |ref>` with `|ref> = |reference_alpha>`.
pub fn oracle_pseudospin_local_avg(reference_alpha: f64, u: &Direction, a: &Direction) -> Result<f64> {
    let ket = coherent_real(reference_alpha)?;
    let ops = pseudo_spin_ops(ket.dim())?;
    let us = ops.along(u);
    let op = us.compose(&ops.along(a)).compose(&us);
    Ok(expectation(&ket, &op)?.re)
}

/// Oracle projection of `(u.s)|alpha>` onto coefficients over
/// `{|alpha>, |-alpha>}` (solves the 2x2 Gram system) plus the captured
/// fraction of the norm.
pub fn oracle_pseudospin_image(alpha: f64, u: &Direction) -> Result<([C64; 2], f64)> {
    let plus = coherent_real(alpha)?;
    let minus = coherent_real(-alpha)?;
    let ops = pseudo_spin_ops(plus.dim())?;
    let image = ops.along(u).apply(&plus)?;
    let coeffs = project_onto_pair(&plus, &minus, &image);
    let proj = FockVector::combine(&[(coeffs[0], &plus), (coeffs[1], &minus)])?;
    let captured = proj.inner(&image).re / image.norm_sqr();
    Ok((coeffs, captured))
}

fn project_onto_pair(p: &FockVector, m: &FockVector, v: &FockVector) -> [C64; 2] {
    let g00 = p.inner(p);
    let g01 = p.inner(m);
    let g10 = m.inner(p);
    let g11 = m.inner(m);
    let b0 = p.inner(v);
    let b1 = m.inner(v);
    let det = g00 * g11 - g01 * g10;
    [(g11 * b0 - g01 * b1) / det, (g00 * b1 - g10 * b0) / det]
}

/// Oracle for the map-based correlation: both modes are transformed with the
/// asymptotic rotation map, the state is rebuilt in the number basis, and
/// `O (x) O` is evaluated there.
pub fn oracle_map_correlation(
    spec: &EcsSpec,
    family: OperatorFamily,
    a: &Direction,
    b: &Direction,
    normalize: bool,
) -> Result<f64> {
    let ma = rotation_map(a.theta, a.phi);
    let mb = rotation_map(b.theta, b.phi);
    let c0 = spec.coefficients();
    let mut rotated = [[c(0.0); 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            for xp in 0..2 {
                for yp in 0..2 {
                    rotated[x][y] += ma.0[x][xp] * mb.0[y][yp] * c0[xp][yp];
                }
            }
        }
    }
    let state = TwoModeState::from_coherent_coefficients(&rotated, spec.alpha)?;
    let dim = state.dims().0;
    let op = family_operator(family, dim)?;
    let raw = expectation_two_mode(&state, &op, &op)?.re;
    Ok(if normalize { raw } else { raw * state.norm_sqr() })
}

/// Oracle for the map-based local average at reference ket `|reference_alpha>`:
/// the state `M(a) M(u) |ref>` rebuilt in the number basis.
pub fn oracle_map_local_avg(
    alpha: f64,
    reference: usize,
    family: OperatorFamily,
    u: &Direction,
    a: &Direction,
    normalize: bool,
) -> Result<f64> {
    let map: QubitCoeffMap = rotation_map(a.theta, a.phi).compose(&rotation_map(u.theta, u.phi));
    let mut e = [c(0.0); 2];
    e[reference] = c(1.0);
    let coeffs = map.apply(&e);
    let plus = coherent_real(alpha)?;
    let minus = coherent_real(-alpha)?;
    let ket = FockVector::combine(&[(coeffs[0], &plus), (coeffs[1], &minus)])?;
    let op = family_operator(family, ket.dim())?;
    let raw = expectation(&ket, &op)?.re;
    Ok(if normalize { raw } else { raw * ket.norm_sqr() })
}

/// Phase `exp(-i pi n^2 / 2)` evaluated from the exponent, for cross-checks.
pub fn kerr_phase_direct(n: usize) -> C64 {
    let x = (n * n) as f64;
    C64::from_polar(1.0, -PI * x / 2.0)
}
