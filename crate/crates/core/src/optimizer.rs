//! Multi-start Nelder-Mead search and the sweeps built on it: rigid-rotation
//! maximization of Leggett functions, amplitude thresholds and grid scans.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherent::{EcsSign, EcsSpec};
use crate::correlation::{CorrelationModel, MeasurementFamily, Normalization, StateKind};
use crate::error::{Error, Result};
use crate::inequality::{
    analytic_fmin, chsh_for_layout, evaluate_leggett, leggett_value, numeric_fmin, optimized_chsh, BoundMode,
    LeggettEvaluation, VIOLATION_TOL,
};
use crate::sphere::{build_layout, rotate_settings, LayoutName, PartyRotations, RigidRotation, SettingsLayout};

pub const DEFAULT_BOUND_STARTS: usize = 32;
pub const DEFAULT_RIGID_STARTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Convergence threshold on the spread of simplex values.
    pub tolerance: f64,
    pub initial_step: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            starts: DEFAULT_BOUND_STARTS,
            seed: 0,
            max_iterations: 4000,
            tolerance: 1e-10,
            initial_step: 0.3,
        }
    }
}

impl SearchConfig {
    pub fn with_starts(starts: usize, seed: u64) -> Self {
        Self {
            starts,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(Error::InvalidConfig("starts must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) || !(self.initial_step > 0.0) {
            return Err(Error::InvalidConfig("tolerance and initial_step must be positive".into()));
        }
        Ok(())
    }
}

/// Box from which starting points are drawn; the search itself is
/// unconstrained (every parameter here is an angle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub ranges: Vec<(f64, f64)>,
}

impl ParamSpace {
    pub fn new(ranges: Vec<(f64, f64)>) -> Self {
        Self { ranges }
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    /// Polar/azimuth pairs for `n` sphere points.
    pub fn spheres(n: usize) -> Self {
        use std::f64::consts::PI;
        Self::new((0..n).flat_map(|_| [(0.0, PI), (-PI, PI)]).collect())
    }

    /// Euler z-y-z triples for `n` rotations.
    pub fn rotations(n: usize) -> Self {
        use std::f64::consts::PI;
        Self::new((0..n).flat_map(|_| [(-PI, PI), (0.0, PI), (-PI, PI)]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub point: Vec<f64>,
    pub value: f64,
    /// Every start met the tolerance before `max_iterations`.
    pub converged: bool,
    pub evaluations: usize,
    pub best_start: usize,
    /// Final value reached from each start, in start order.
    pub start_values: Vec<f64>,
}

impl SearchResult {
    /// Gap between the best value and the runner-up among the best tenth of
    /// starts (at least two); small gaps mean the optimum was reproduced.
    pub fn top_decile_spread(&self) -> f64 {
        let mut v = self.start_values.clone();
        v.sort_by(f64::total_cmp);
        if v.len() < 2 {
            return 0.0;
        }
        v[1] - v[0]
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

/// Halton points shifted by a seed-dependent offset (Cranley-Patterson),
/// scaled into `space`.
pub fn start_points(space: &ParamSpace, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(space.dim() <= PRIMES.len(), "at most {} parameters", PRIMES.len());
    let mut s = seed;
    let shifts: Vec<f64> = (0..space.dim())
        .map(|_| (splitmix64(&mut s) >> 11) as f64 / (1u64 << 53) as f64)
        .collect();
    (0..count)
        .map(|i| {
            space
                .ranges
                .iter()
                .zip(&shifts)
                .zip(PRIMES)
                .map(|(((lo, hi), shift), p)| {
                    let u = (radical_inverse(i as u64 + 1, p) + shift).fract();
                    lo + (hi - lo) * u
                })
                .collect()
        })
        .collect()
}

struct Descent {
    point: Vec<f64>,
    value: f64,
    evaluations: usize,
    converged: bool,
}

fn nelder_mead(f: &(impl Fn(&[f64]) -> f64 + ?Sized), x0: &[f64], cfg: &SearchConfig) -> Descent {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for k in 0..n {
        let mut x = x0.to_vec();
        x[k] += cfg.initial_step;
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
    let mut evaluations = n + 1;
    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();

    while iterations < cfg.max_iterations {
        iterations += 1;
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];
        if values[worst] - values[best] <= cfg.tolerance {
            let size = simplex
                .iter()
                .flat_map(|x| x.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if size <= 1e-9 || values[worst] == values[best] {
                converged = true;
                break;
            }
        }
        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        evaluations += 1;
        if fr < values[best] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evaluations += 1;
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = xr;
            values[worst] = fr;
        } else {
            let (xc, fc) = if fr < values[worst] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            evaluations += 1;
            if fc < values[worst].min(fr) {
                simplex[worst] = xc;
                values[worst] = fc;
            } else {
                let xb = simplex[best].clone();
                for &i in &order[1..] {
                    for (x, b) in simplex[i].iter_mut().zip(&xb) {
                        *x = b + 0.5 * (*x - b);
                    }
                    values[i] = f(&simplex[i]);
                }
                evaluations += n;
            }
        }
    }
    let best = (0..=n)
        .min_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)))
        .unwrap_or(0);
    Descent {
        point: simplex[best].clone(),
        value: values[best],
        evaluations,
        converged,
    }
}

/// Nelder-Mead restarted from its own optimum until a restart stops
/// improving; restarts undo premature simplex collapse on kinked objectives.
fn restarted_descent(f: &(impl Fn(&[f64]) -> f64 + ?Sized), x0: &[f64], cfg: &SearchConfig) -> Descent {
    let mut d = nelder_mead(f, x0, cfg);
    for _ in 0..4 {
        let again = nelder_mead(f, &d.point, cfg);
        let improved = again.value < d.value - cfg.tolerance;
        let evaluations = d.evaluations + again.evaluations;
        let converged = again.converged;
        if again.value <= d.value {
            d = again;
        }
        d.evaluations = evaluations;
        d.converged = converged;
        if !improved {
            break;
        }
    }
    d
}

/// Multi-start minimization. `seeded` points are used first (start #0 is
/// typically the identity), then seeded Halton points fill the remaining
/// starts. Results are reduced by (value, start index), so the outcome does
/// not depend on thread scheduling.
pub fn simplex_minimize<F>(f: &F, space: &ParamSpace, cfg: &SearchConfig, seeded: &[Vec<f64>]) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    cfg.validate()?;
    if space.dim() == 0 {
        return Err(Error::InvalidConfig("empty parameter space".into()));
    }
    let mut starts: Vec<Vec<f64>> = seeded.iter().take(cfg.starts).cloned().collect();
    for s in &starts {
        if s.len() != space.dim() {
            return Err(Error::DimensionMismatch(s.len(), space.dim()));
        }
    }
    let fill = cfg.starts - starts.len();
    starts.extend(start_points(space, fill, cfg.seed));
    let runs: Vec<Descent> = starts.par_iter().map(|x0| restarted_descent(f, x0, cfg)).collect();
    let best_start = (0..runs.len())
        .min_by(|&i, &j| runs[i].value.total_cmp(&runs[j].value).then(i.cmp(&j)))
        .unwrap_or(0);
    Ok(SearchResult {
        point: runs[best_start].point.clone(),
        value: runs[best_start].value,
        converged: runs.iter().all(|r| r.converged),
        evaluations: runs.iter().map(|r| r.evaluations).sum(),
        best_start,
        start_values: runs.iter().map(|r| r.value).collect(),
    })
}

/// Maximization counterpart of [`simplex_minimize`]; values are reported
/// with their original sign.
pub fn simplex_maximize<F>(f: &F, space: &ParamSpace, cfg: &SearchConfig, seeded: &[Vec<f64>]) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    let neg = |x: &[f64]| -f(x);
    let mut r = simplex_minimize(&neg, space, cfg, seeded)?;
    r.value = -r.value;
    for v in &mut r.start_values {
        *v = -*v;
    }
    Ok(r)
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum RotationMode {
    #[default]
    None,
    /// One rotation applied to both parties; keeps every relative angle.
    Shared,
    /// An independent rotation per party.
    Independent,
}

impl RotationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RotationMode::None => "none",
            RotationMode::Shared => "shared",
            RotationMode::Independent => "independent",
        }
    }

    fn rotations(&self, x: &[f64]) -> PartyRotations {
        match self {
            RotationMode::None => PartyRotations::IDENTITY,
            RotationMode::Shared => PartyRotations::shared(RigidRotation::from_slice(&x[..3])),
            RotationMode::Independent => {
                PartyRotations::independent(RigidRotation::from_slice(&x[..3]), RigidRotation::from_slice(&x[3..6]))
            }
        }
    }
}

impl fmt::Display for RotationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RotationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "off" | "false" => Ok(RotationMode::None),
            "shared" | "true" | "on" => Ok(RotationMode::Shared),
            "independent" => Ok(RotationMode::Independent),
            other => Err(Error::InvalidConfig(format!("unknown rotation mode `{other}`"))),
        }
    }
}

/// Maximizes the Leggett function over rigid rotations of the settings,
/// then recomputes the bound at the rotated settings. The identity rotation
/// is always start #0, so the result never falls below the unrotated value.
pub fn optimize_rigid(
    model: &CorrelationModel,
    layout: &SettingsLayout,
    mode: RotationMode,
    rigid_cfg: &SearchConfig,
    bound_mode: BoundMode,
    bound_cfg: &SearchConfig,
) -> Result<LeggettEvaluation> {
    let rotations = match mode {
        RotationMode::None => PartyRotations::IDENTITY,
        _ => {
            let n = if mode == RotationMode::Shared { 1 } else { 2 };
            let objective = |x: &[f64]| leggett_value(model, &rotate_settings(&mode.rotations(x), layout));
            let identity = vec![0.0; 3 * n];
            let r = simplex_maximize(&objective, &ParamSpace::rotations(n), rigid_cfg, &[identity])?;
            mode.rotations(&r.point)
        }
    };
    let rotated = rotate_settings(&rotations, layout);
    evaluate_leggett(model, &rotated, rotations, bound_mode, bound_cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateChoice {
    Pes,
    EcsPlus,
    EcsMinus,
}

impl StateChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            StateChoice::Pes => "pes",
            StateChoice::EcsPlus => "ecs+",
            StateChoice::EcsMinus => "ecs-",
        }
    }
}

impl fmt::Display for StateChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StateChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pes" => Ok(StateChoice::Pes),
            "ecs+" | "ecsplus" | "ecs_plus" | "plus" => Ok(StateChoice::EcsPlus),
            "ecs-" | "ecs\u{2212}" | "ecsminus" | "ecs_minus" | "minus" => Ok(StateChoice::EcsMinus),
            other => Err(Error::InvalidConfig(format!("unknown state `{other}`"))),
        }
    }
}

/// Everything needed to evaluate one grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub state: StateChoice,
    pub family: MeasurementFamily,
    pub layout: LayoutName,
    pub bound: BoundMode,
    pub rotation: RotationMode,
    pub with_chsh: bool,
    pub normalization: Normalization,
    pub bound_cfg: SearchConfig,
    pub rigid_cfg: SearchConfig,
    pub chsh_cfg: SearchConfig,
}

impl Task {
    pub fn new(state: StateChoice, family: MeasurementFamily, layout: LayoutName) -> Self {
        Self {
            state,
            family,
            layout,
            bound: BoundMode::StateCorrected,
            rotation: RotationMode::None,
            with_chsh: false,
            normalization: Normalization::Gram,
            bound_cfg: SearchConfig::with_starts(DEFAULT_BOUND_STARTS, 0),
            rigid_cfg: SearchConfig::with_starts(DEFAULT_RIGID_STARTS, 0),
            chsh_cfg: SearchConfig::with_starts(16, 0),
        }
    }

    /// Sets the seed of every inner search.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.bound_cfg.seed = seed;
        self.rigid_cfg.seed = seed;
        self.chsh_cfg.seed = seed;
        self
    }

    pub fn model(&self, alpha: f64) -> Result<CorrelationModel> {
        match self.state {
            StateChoice::Pes => match self.family {
                MeasurementFamily::QubitProjective => Ok(CorrelationModel::pes()),
                f => Err(Error::UnsupportedModel(format!("pes/{f}"))),
            },
            StateChoice::EcsPlus | StateChoice::EcsMinus => {
                let sign = if self.state == StateChoice::EcsPlus { EcsSign::Plus } else { EcsSign::Minus };
                let state = StateKind::Ecs(EcsSpec::new(alpha, sign)?);
                CorrelationModel::with_normalization(state, self.family, self.normalization)
            }
        }
    }

    pub fn evaluate(&self, index: usize, alpha: f64, phi: f64) -> Result<SweepRecord> {
        let model = self.model(alpha)?;
        let layout = build_layout(self.layout, phi)?;
        let mut rec = SweepRecord {
            index,
            alpha,
            phi,
            l_value: 0.0,
            f_min_corrected: None,
            f_min_analytic: None,
            bound_used: 2.0,
            chsh_b: None,
            margin: 0.0,
            violated: false,
            starts: self.bound_cfg.starts,
            seed: self.bound_cfg.seed,
        };
        if self.with_chsh {
            rec.chsh_b = Some(optimized_chsh(&model, &self.chsh_cfg)?.b_value.abs());
        }
        if self.layout == LayoutName::Chsh {
            let b = chsh_for_layout(&model, &layout)?.b_value.abs();
            rec.l_value = b;
            rec.margin = b - 2.0;
            rec.violated = rec.margin > VIOLATION_TOL;
            return Ok(rec);
        }
        let bound_mode = match (self.bound, self.layout) {
            (BoundMode::StateCorrected, LayoutName::Original) => BoundMode::Analytic2d,
            (m, _) => m,
        };
        let ev = optimize_rigid(&model, &layout, self.rotation, &self.rigid_cfg, bound_mode, &self.bound_cfg)?;
        rec.l_value = ev.l_value;
        rec.f_min_analytic = Some(analytic_fmin(self.layout, phi)?);
        rec.f_min_corrected = match bound_mode {
            BoundMode::StateCorrected => Some(ev.bound.f_min),
            BoundMode::Analytic2d if self.layout != LayoutName::Original => {
                Some(numeric_fmin(&model, &ev.layout, &self.bound_cfg)?.f_min)
            }
            BoundMode::Analytic2d => None,
        };
        rec.bound_used = ev.bound.bound;
        rec.margin = ev.margin;
        rec.violated = ev.violated;
        Ok(rec)
    }

    /// `L - bound` at one point, without the optional CHSH column.
    pub fn margin(&self, alpha: f64, phi: f64) -> Result<f64> {
        let task = Task {
            with_chsh: false,
            ..*self
        };
        let model = task.model(alpha)?;
        let layout = build_layout(task.layout, phi)?;
        if task.layout == LayoutName::Chsh {
            return Ok(chsh_for_layout(&model, &layout)?.b_value.abs() - 2.0);
        }
        let mode = if task.layout == LayoutName::Original {
            BoundMode::Analytic2d
        } else {
            task.bound
        };
        Ok(optimize_rigid(&model, &layout, task.rotation, &task.rigid_cfg, mode, &task.bound_cfg)?.margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub index: usize,
    pub alpha: f64,
    pub phi: f64,
    pub l_value: f64,
    pub f_min_corrected: Option<f64>,
    pub f_min_analytic: Option<f64>,
    pub bound_used: f64,
    pub chsh_b: Option<f64>,
    pub margin: f64,
    pub violated: bool,
    pub starts: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScanVariable {
    Phi,
    Alpha,
}

/// One record per grid value of `variable`, the other coordinate held at
/// `fixed`. Points are evaluated in parallel and returned in grid order.
pub fn scan(task: &Task, variable: ScanVariable, grid: &[f64], fixed: f64) -> Result<Vec<SweepRecord>> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig("scan grid must be strictly increasing".into()));
    }
    grid.par_iter()
        .enumerate()
        .map(|(i, &x)| match variable {
            ScanVariable::Phi => task.evaluate(i, fixed, x),
            ScanVariable::Alpha => task.evaluate(i, x, fixed),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdVerdict {
    /// Margin turns from non-positive to positive at `alpha_star`.
    Crossing,
    /// Margin turns from positive to non-positive; no upward crossing exists.
    FallingCrossing,
    AlwaysViolated,
    NeverViolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub verdict: ThresholdVerdict,
    pub alpha_star: Option<f64>,
    /// Final bisection bracket, ordered so that the margin is non-positive
    /// at `.0` and positive at `.1` for an upward crossing.
    pub bracket: Option<(f64, f64)>,
    pub margin_at_star: Option<f64>,
    pub evaluations: usize,
    /// Coarse scan used to locate the crossing.
    pub coarse: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub phi: f64,
    pub lo: f64,
    pub hi: f64,
    pub coarse_step: f64,
    pub tolerance: f64,
}

impl ThresholdConfig {
    pub fn new(phi: f64) -> Self {
        Self {
            phi,
            lo: 0.5,
            hi: 10.0,
            coarse_step: 0.25,
            tolerance: 1e-3,
        }
    }
}

/// Amplitude at which the violation sets in. A coarse scan over
/// `[lo, hi]` finds the last non-positive to positive sign change of the
/// margin, which is then bisected to `tolerance`.
pub fn threshold_alpha(task: &Task, cfg: &ThresholdConfig) -> Result<ThresholdResult> {
    if !(cfg.hi > cfg.lo && cfg.coarse_step > 0.0 && cfg.tolerance > 0.0) {
        return Err(Error::InvalidConfig("threshold bracket must satisfy lo < hi".into()));
    }
    let n = ((cfg.hi - cfg.lo) / cfg.coarse_step).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| cfg.lo + (cfg.hi - cfg.lo) * i as f64 / n as f64).collect();
    let margins: Vec<f64> = grid
        .par_iter()
        .map(|&a| task.margin(a, cfg.phi))
        .collect::<Result<_>>()?;
    let coarse: Vec<(f64, f64)> = grid.iter().copied().zip(margins.iter().copied()).collect();
    let mut evaluations = grid.len();
    let positive = |m: f64| m > VIOLATION_TOL;

    let rising = (0..n).rev().find(|&i| !positive(margins[i]) && positive(margins[i + 1]));
    let falling = (0..n).rev().find(|&i| positive(margins[i]) && !positive(margins[i + 1]));
    let (verdict, i) = match (rising, falling) {
        (Some(i), _) => (ThresholdVerdict::Crossing, i),
        (None, Some(i)) => (ThresholdVerdict::FallingCrossing, i),
        (None, None) => {
            let verdict = if positive(margins[0]) {
                ThresholdVerdict::AlwaysViolated
            } else {
                ThresholdVerdict::NeverViolated
            };
            return Ok(ThresholdResult {
                verdict,
                alpha_star: None,
                bracket: None,
                margin_at_star: None,
                evaluations,
                coarse,
            });
        }
    };
    // `neg` keeps the non-positive end, `pos` the positive one
    let (mut neg, mut pos, mut m_neg, mut m_pos) = if verdict == ThresholdVerdict::Crossing {
        (grid[i], grid[i + 1], margins[i], margins[i + 1])
    } else {
        (grid[i + 1], grid[i], margins[i + 1], margins[i])
    };
    while (pos - neg).abs() > cfg.tolerance {
        let mid = 0.5 * (neg + pos);
        let m = task.margin(mid, cfg.phi)?;
        evaluations += 1;
        if positive(m) {
            pos = mid;
            m_pos = m;
        } else {
            neg = mid;
            m_neg = m;
        }
    }
    let (alpha_star, margin_at_star) = if m_pos.abs() < m_neg.abs() { (pos, m_pos) } else { (neg, m_neg) };
    Ok(ThresholdResult {
        verdict,
        alpha_star: Some(alpha_star),
        bracket: Some((neg, pos)),
        margin_at_star: Some(margin_at_star),
        evaluations,
        coarse,
    })
}
