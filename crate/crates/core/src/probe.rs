//! Sampling probes for ISS and its constituents (ULS, LIM, ULIM, asymptotic
//! gain, forward completeness).
//!
//! Every probe is a falsification tool. `NoCounterexample` means that the
//! sampled trajectories on `[0, T]` satisfied the inequality; it is not a
//! proof. A `Falsified` verdict carries a [`Witness`] that [`replay`]
//! re-checks through a fresh integration.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparison::{ComparisonFn, KLFn};
use crate::dynamics::{
    integrate, DynamicsError, InputSignal, IntegrationOptions, SystemModel, Trajectory,
    TrajectoryStatus,
};
use crate::sampling;

/// Uniform points added to the step grid when scanning a trajectory.
pub const DENSE_GRID: usize = 400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbeError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid probe request: {0}")]
    InvalidRequest(String),
    /// A precondition (such as "no escape on the sampled set") failed; the
    /// report carries the witness.
    #[error("probe falsified: {}", .0.summary)]
    Falsified(Box<ProbeReport>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Iss,
    Uls,
    Lim,
    Ulim,
    Ag,
    Fc,
    Sandwich,
    Dissipation,
    Implication,
    TriggerRule,
    EtcDecay,
    NetworkDecay,
    DecayPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoCounterexample,
    Falsified,
    /// A trajectory escaped before the property could be decided.
    InconclusiveEscape,
    /// A hypothesis of the check failed; the conclusion was not tested.
    HypothesisViolation,
}

/// Concrete violation: state, input, time and the two sides of the
/// violated inequality. `margin = observed − bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x0: Vec<f64>,
    pub input: InputSignal,
    pub t: f64,
    /// Second time involved in the violation (integration horizon for
    /// escapes, earlier time for decay checks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ref: Option<f64>,
    pub observed: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub property: Property,
    pub verdict: Verdict,
    pub samples_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// Fraction of samples on which an implication premise held.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub premise_fraction: Option<f64>,
    #[serde(default)]
    pub vacuous: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub summary: String,
}

impl ProbeReport {
    pub fn passed(property: Property, samples_used: usize) -> Self {
        Self {
            property,
            verdict: Verdict::NoCounterexample,
            samples_used,
            witness: None,
            premise_fraction: None,
            vacuous: false,
            warnings: Vec::new(),
            summary: format!(
                "no counterexample in {samples_used} samples (sampling evidence, not a proof)"
            ),
        }
    }

    pub fn falsified(property: Property, samples_used: usize, witness: Witness) -> Self {
        let summary = format!(
            "falsified at t = {:e}: observed {:e} exceeds bound {:e} by {:e}",
            witness.t, witness.observed, witness.bound, witness.margin
        );
        Self {
            property,
            verdict: Verdict::Falsified,
            samples_used,
            witness: Some(witness),
            premise_fraction: None,
            vacuous: false,
            warnings: Vec::new(),
            summary,
        }
    }

    pub fn hypothesis_violation(property: Property, reason: impl Into<String>) -> Self {
        Self {
            property,
            verdict: Verdict::HypothesisViolation,
            samples_used: 0,
            witness: None,
            premise_fraction: None,
            vacuous: false,
            warnings: Vec::new(),
            summary: reason.into(),
        }
    }

    pub fn passes(&self) -> bool {
        self.verdict == Verdict::NoCounterexample
    }
}

/// Sampling configuration shared by the probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingBudget {
    pub samples: usize,
    /// Finite horizon `T` standing in for `t → ∞`.
    pub horizon: f64,
    pub max_pieces: usize,
    /// Radii of the initial-state spheres and balls.
    pub radii: Vec<f64>,
    /// Input sup-norms.
    pub magnitudes: Vec<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub seed: u64,
    pub integration: IntegrationOptions,
}

impl Default for SamplingBudget {
    fn default() -> Self {
        Self {
            samples: 1000,
            horizon: 50.0,
            max_pieces: 8,
            radii: vec![0.1, 1.0, 10.0],
            magnitudes: vec![0.0, 0.1, 1.0, 10.0],
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            seed: 0,
            integration: IntegrationOptions::default(),
        }
    }
}

impl SamplingBudget {
    pub fn tol(&self, bound: f64) -> f64 {
        self.abs_tol + self.rel_tol * bound.abs()
    }

    fn validate(&self) -> Result<(), ProbeError> {
        if self.samples == 0 {
            return Err(ProbeError::InvalidRequest("samples must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ProbeError::InvalidRequest(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(ProbeError::InvalidRequest("radii must be positive".into()));
        }
        if self.magnitudes.is_empty() || self.magnitudes.iter().any(|m| !(*m >= 0.0)) {
            return Err(ProbeError::InvalidRequest("magnitudes must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Claimed ISS estimate `|φ(t,x,u)| ≤ β(|x|,t) + γ(‖u‖∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssEstimate {
    pub beta: KLFn,
    pub gamma: ComparisonFn,
}

/// Inequality re-checked on replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum TrajectoryCheck {
    /// `|φ(t)| ≤ β(|x₀|,t) + γ(‖u‖∞)`
    Iss { beta: KLFn, gamma: ComparisonFn },
    /// `|φ(t)| ≤ σ(|x₀|) + γ(‖u‖∞)`
    Uls { sigma: ComparisonFn, gamma: ComparisonFn },
    /// `min_{[0,t]} |φ| ≤ γ(‖u‖∞)`
    Lim { gamma: ComparisonFn },
    /// The solution exists on `[0, t_ref]`.
    Fc,
}

impl TrajectoryCheck {
    fn property(&self) -> Property {
        match self {
            TrajectoryCheck::Iss { .. } => Property::Iss,
            TrajectoryCheck::Uls { .. } => Property::Uls,
            TrajectoryCheck::Lim { .. } => Property::Lim,
            TrajectoryCheck::Fc => Property::Fc,
        }
    }

    fn bound(&self, x0: f64, unorm: f64, t: f64) -> f64 {
        match self {
            TrajectoryCheck::Iss { beta, gamma } => beta.value(x0, t) + gamma.value(unorm),
            TrajectoryCheck::Uls { sigma, gamma } => sigma.value(x0) + gamma.value(unorm),
            TrajectoryCheck::Lim { gamma } => gamma.value(unorm),
            TrajectoryCheck::Fc => f64::INFINITY,
        }
    }
}

/// `‖u‖∞` over all time in the system's input norm.
pub fn input_sup(sys: &SystemModel, u: &InputSignal) -> f64 {
    u.sup_norm_with(sys.input_norm(), 0.0, f64::INFINITY)
}

/// Step times plus a uniform grid on `[0, t_end]`, with dense-output norms.
pub(crate) fn scan_points(sys: &SystemModel, tr: &Trajectory) -> Vec<(f64, f64)> {
    let norm = sys.state_norm();
    let t_end = tr.t_end();
    let mut pts: Vec<(f64, f64)> = tr.samples().map(|(t, x)| (t, norm.of(x))).collect();
    let mut buf = vec![0.0; tr.dim()];
    for k in 1..DENSE_GRID {
        let t = t_end * k as f64 / DENSE_GRID as f64;
        tr.interpolate_into(t, &mut buf);
        pts.push((t, norm.of(&buf)));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

/// One sampled initial state and input.
#[derive(Debug, Clone)]
pub(crate) struct Case {
    pub(crate) x0: Vec<f64>,
    pub(crate) u: InputSignal,
}

/// Sample `i`: radius and magnitude cycle through the budget's lists, every
/// third combination uses a constant input (the worst case for many
/// systems), the rest random piecewise-constant inputs.
pub(crate) fn iss_case(sys: &SystemModel, b: &SamplingBudget, radii: &[f64], mags: &[f64], i: usize) -> Case {
    let mut rng = sampling::stream(b.seed, i as u64);
    let r = radii[i % radii.len()];
    let m = mags[(i / radii.len()) % mags.len()];
    let x0 = if rng.random::<bool>() {
        sampling::on_sphere(&mut rng, sys.state_dim(), r)
    } else {
        sampling::in_ball(&mut rng, sys.state_dim(), r)
    };
    let u = if (i / (radii.len() * mags.len())) % 3 == 0 {
        InputSignal::constant(sampling::on_sphere(&mut rng, sys.input_dim(), m))
    } else {
        sampling::piecewise_constant_input(&mut rng, sys.input_dim(), m, b.horizon, b.max_pieces)
    };
    Case { x0, u }
}

fn escape_witness(sys: &SystemModel, case: &Case, tr: &Trajectory, t_escape: f64, horizon: f64, threshold: f64) -> Witness {
    let observed = sys.state_norm().of(tr.final_state());
    Witness {
        x0: case.x0.clone(),
        input: case.u.clone(),
        t: t_escape,
        t_ref: Some(horizon),
        observed,
        bound: threshold,
        margin: observed - threshold,
    }
}

enum Finding {
    Violation(Witness),
    Escape(Witness),
}

/// Evaluate `check` on one trajectory. Returns the largest violation.
fn evaluate_case(
    sys: &SystemModel,
    check: &TrajectoryCheck,
    case: &Case,
    b: &SamplingBudget,
) -> Result<Option<Finding>, ProbeError> {
    let tr = integrate(sys, &case.x0, &case.u, b.horizon, &b.integration)?;
    match tr.status() {
        TrajectoryStatus::StepFailure { t } => return Err(DynamicsError::StepFailure { t }.into()),
        TrajectoryStatus::Escaped { t_escape } => {
            let w = escape_witness(sys, case, &tr, t_escape, b.horizon, b.integration.blowup_threshold);
            if let TrajectoryCheck::Lim { gamma } = check {
                // escape falsifies LIM only if the infimum over the existence
                // interval already exceeds the gain
                let unorm = input_sup(sys, &case.u);
                let inf = scan_points(sys, &tr).iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let bound = gamma.value(unorm);
                if inf - bound > b.tol(bound) {
                    return Ok(Some(Finding::Violation(Witness {
                        x0: case.x0.clone(),
                        input: case.u.clone(),
                        t: t_escape,
                        t_ref: None,
                        observed: inf,
                        bound,
                        margin: inf - bound,
                    })));
                }
            }
            return Ok(Some(Finding::Escape(w)));
        }
        TrajectoryStatus::Complete => {}
    }
    let x0n = sys.state_norm().of(&case.x0);
    let unorm = input_sup(sys, &case.u);
    let pts = scan_points(sys, &tr);
    match check {
        TrajectoryCheck::Fc => Ok(None),
        TrajectoryCheck::Lim { gamma } => {
            let inf = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let bound = gamma.value(unorm);
            Ok((inf - bound > b.tol(bound)).then(|| {
                Finding::Violation(Witness {
                    x0: case.x0.clone(),
                    input: case.u.clone(),
                    t: b.horizon,
                    t_ref: None,
                    observed: inf,
                    bound,
                    margin: inf - bound,
                })
            }))
        }
        _ => {
            let mut worst: Option<(f64, f64, f64, f64)> = None;
            for &(t, n) in &pts {
                let bound = check.bound(x0n, unorm, t);
                let margin = n - bound;
                if margin > b.tol(bound) && worst.is_none_or(|w| margin > w.3) {
                    worst = Some((t, n, bound, margin));
                }
            }
            Ok(worst.map(|(t, observed, bound, margin)| {
                Finding::Violation(Witness {
                    x0: case.x0.clone(),
                    input: case.u.clone(),
                    t,
                    t_ref: None,
                    observed,
                    bound,
                    margin,
                })
            }))
        }
    }
}

/// Run `check` over `n` cases; the first finding in sample order wins.
fn run_cases<F>(sys: &SystemModel, check: &TrajectoryCheck, b: &SamplingBudget, n: usize, case: F) -> Result<ProbeReport, ProbeError>
where
    F: Fn(usize) -> Case + Sync,
{
    let findings: Vec<Result<Option<Finding>, ProbeError>> = (0..n)
        .into_par_iter()
        .map(|i| evaluate_case(sys, check, &case(i), b))
        .collect();
    // an escape anywhere outranks an ordinary violation
    let mut first_escape = None;
    let mut first_violation = None;
    for (i, f) in findings.into_iter().enumerate() {
        match f? {
            Some(Finding::Escape(w)) if first_escape.is_none() => first_escape = Some((i, Finding::Escape(w))),
            Some(Finding::Violation(w)) if first_violation.is_none() => {
                first_violation = Some((i, Finding::Violation(w)))
            }
            _ => {}
        }
    }
    let found = first_escape.or(first_violation).map(Ok::<_, ProbeError>);
    let report = match found {
        None => ProbeReport::passed(check.property(), n),
        Some(Err(e)) => return Err(e),
        Some(Ok((_, Finding::Violation(w)))) => ProbeReport::falsified(check.property(), n, w),
        Some(Ok((_, Finding::Escape(w)))) => {
            let mut rep = ProbeReport::falsified(Property::Fc, n, w);
            rep.summary = format!(
                "escape at t = {:e}: forward completeness falsified, hence {:?} falsified",
                rep.witness.as_ref().map_or(0.0, |w| w.t),
                check.property()
            );
            if matches!(check, TrajectoryCheck::Lim { .. }) {
                rep.property = Property::Lim;
                rep.verdict = Verdict::InconclusiveEscape;
                rep.summary = "escape before the infimum fell below the gain: LIM undecided".into();
            }
            rep
        }
    };
    Ok(report)
}

/// Falsify `|φ(t,x,u)| ≤ β(|x|,t) + γ(‖u‖∞)` on `budget.samples`
/// trajectories. An escape is reported as an FC falsification.
pub fn check_iss_estimate(sys: &SystemModel, est: &IssEstimate, budget: &SamplingBudget) -> Result<ProbeReport, ProbeError> {
    budget.validate()?;
    let check = TrajectoryCheck::Iss {
        beta: est.beta.clone(),
        gamma: est.gamma.clone(),
    };
    run_cases(sys, &check, budget, budget.samples, |i| {
        iss_case(sys, budget, &budget.radii, &budget.magnitudes, i)
    })
}

/// Magnitudes of the budget not exceeding `r`, plus `r` itself.
fn capped(values: &[f64], r: f64) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|m| *m < r).collect();
    v.push(r);
    v
}

/// Falsify `|φ(t,x,u)| ≤ σ(|x|) + γ(‖u‖∞)` over `|x| ≤ r`, `‖u‖∞ ≤ r`.
pub fn check_uls(
    sys: &SystemModel,
    sigma: &ComparisonFn,
    gamma: &ComparisonFn,
    r: f64,
    budget: &SamplingBudget,
) -> Result<ProbeReport, ProbeError> {
    budget.validate()?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(ProbeError::InvalidRequest(format!("radius must be positive, got {r}")));
    }
    let check = TrajectoryCheck::Uls {
        sigma: sigma.clone(),
        gamma: gamma.clone(),
    };
    let radii = capped(&budget.radii, r);
    let mags = capped(&budget.magnitudes, r);
    run_cases(sys, &check, budget, budget.samples, |i| iss_case(sys, budget, &radii, &mags, i))
}

/// Falsify `inf_{t≥0} |φ(t,x,u)| ≤ γ(‖u‖∞)`, the infimum taken over the
/// grid on `[0, T]`.
pub fn check_lim(sys: &SystemModel, gamma: &ComparisonFn, budget: &SamplingBudget) -> Result<ProbeReport, ProbeError> {
    budget.validate()?;
    let check = TrajectoryCheck::Lim { gamma: gamma.clone() };
    run_cases(sys, &check, budget, budget.samples, |i| {
        iss_case(sys, budget, &budget.radii, &budget.magnitudes, i)
    })
}

/// Sampled forward completeness on `[0, T]`: "no escape observed up to the
/// blow-up threshold".
pub fn check_forward_completeness(sys: &SystemModel, budget: &SamplingBudget) -> Result<ProbeReport, ProbeError> {
    budget.validate()?;
    run_cases(sys, &TrajectoryCheck::Fc, budget, budget.samples, |i| {
        iss_case(sys, budget, &budget.radii, &budget.magnitudes, i)
    })
}

/// Asymptotic-gain estimate: for every input magnitude `r`, the largest
/// `|φ|` over the tail window `[0.8T, T]`, maximised over sampled initial
/// states and inputs with `‖u‖∞ = r`. Returns the monotone upper envelope.
///
/// Errors with an FC falsification if a sample escapes.
pub fn estimate_asymptotic_gain(sys: &SystemModel, radii: &[f64], budget: &SamplingBudget) -> Result<ComparisonFn, ProbeError> {
    Ok(asymptotic_gain_samples(sys, radii, budget)?.0)
}

/// As [`estimate_asymptotic_gain`], also returning the raw `(r, tail max)`
/// pairs.
pub fn asymptotic_gain_samples(
    sys: &SystemModel,
    radii: &[f64],
    budget: &SamplingBudget,
) -> Result<(ComparisonFn, Vec<(f64, f64)>), ProbeError> {
    budget.validate()?;
    if radii.iter().any(|r| !(*r >= 0.0)) {
        return Err(ProbeError::InvalidRequest("input radii must be nonnegative".into()));
    }
    let per = (budget.samples / radii.len().max(1)).max(1);
    let t0 = 0.8 * budget.horizon;
    let mut pairs = Vec::with_capacity(radii.len());
    for (k, &r) in radii.iter().enumerate() {
        let results: Vec<Result<Result<f64, Witness>, ProbeError>> = (0..per)
            .into_par_iter()
            .map(|i| {
                let idx = k * per + i;
                let case = iss_case(sys, budget, &budget.radii, &[r], idx);
                let tr = integrate(sys, &case.x0, &case.u, budget.horizon, &budget.integration)?;
                match tr.status() {
                    TrajectoryStatus::StepFailure { t } => Err(DynamicsError::StepFailure { t }.into()),
                    TrajectoryStatus::Escaped { t_escape } => Ok(Err(escape_witness(
                        sys,
                        &case,
                        &tr,
                        t_escape,
                        budget.horizon,
                        budget.integration.blowup_threshold,
                    ))),
                    TrajectoryStatus::Complete => Ok(Ok(scan_points(sys, &tr)
                        .into_iter()
                        .filter(|p| p.0 >= t0)
                        .map(|p| p.1)
                        .fold(0.0, f64::max))),
                }
            })
            .collect();
        let mut best: f64 = 0.0;
        for (i, res) in results.into_iter().enumerate() {
            match res? {
                Ok(v) => best = best.max(v),
                Err(w) => {
                    let mut rep = ProbeReport::falsified(Property::Fc, k * per + i + 1, w);
                    rep.summary = format!("escape while estimating the asymptotic gain: {}", rep.summary);
                    return Err(ProbeError::Falsified(Box::new(rep)));
                }
            }
        }
        pairs.push((r, best));
    }
    let gamma = ComparisonFn::monotone_envelope(&pairs)
        .map_err(|e| ProbeError::InvalidRequest(format!("gain envelope: {e}")))?;
    Ok((gamma, pairs))
}

/// One entry of the uniform-limit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlimEntry {
    pub eps: f64,
    pub r: f64,
    /// Worst first time at which `|φ| ≤ ε + γ(‖u‖∞)`; `None` if some sample
    /// never got there within `T`.
    pub tau: Option<f64>,
    pub samples: usize,
}

/// Default ULIM grids: ε ∈ {0.05, 0.1, 0.5}, r ∈ {0.1, 1, 10}.
pub fn default_ulim_grid() -> (Vec<f64>, Vec<f64>) {
    (vec![0.05, 0.1, 0.5], vec![0.1, 1.0, 10.0])
}

/// Empirical `τ(ε, r)` for every pair of the grids, over `|x| ≤ r` and
/// `‖u‖∞ ≤ r`. Each entry uses `samples_per_entry` trajectories; hitting
/// times are located by bisection on the dense output.
pub fn ulim_table(
    sys: &SystemModel,
    gamma: &ComparisonFn,
    eps_grid: &[f64],
    r_grid: &[f64],
    samples_per_entry: usize,
    budget: &SamplingBudget,
) -> Result<Vec<UlimEntry>, ProbeError> {
    budget.validate()?;
    let norm = sys.state_norm();
    let mut out = Vec::new();
    for (a, &eps) in eps_grid.iter().enumerate() {
        for (c, &r) in r_grid.iter().enumerate() {
            let radii = [r];
            let mags = capped(&budget.magnitudes, r);
            let base = (a * r_grid.len() + c) * samples_per_entry;
            let taus: Vec<Result<Option<f64>, ProbeError>> = (0..samples_per_entry)
                .into_par_iter()
                .map(|i| {
                    let case = iss_case(sys, budget, &radii, &mags, base + i);
                    let tr = integrate(sys, &case.x0, &case.u, budget.horizon, &budget.integration)?;
                    if let TrajectoryStatus::StepFailure { t } = tr.status() {
                        return Err(DynamicsError::StepFailure { t }.into());
                    }
                    let level = eps + gamma.value(input_sup(sys, &case.u));
                    Ok(first_hit(&tr, |x| norm.of(x) - level))
                })
                .collect();
            let mut tau = Some(0.0f64);
            for t in taus {
                tau = match (tau, t?) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    _ => None,
                };
            }
            out.push(UlimEntry {
                eps,
                r,
                tau,
                samples: samples_per_entry,
            });
        }
    }
    Ok(out)
}

/// First time at which `g(x(t)) ≤ 0`, by bisection on the dense output.
pub(crate) fn first_hit<G: Fn(&[f64]) -> f64>(tr: &Trajectory, g: G) -> Option<f64> {
    if g(tr.state(0)) <= 0.0 {
        return Some(tr.time(0));
    }
    let mut buf = vec![0.0; tr.dim()];
    // refine each step interval so that dips between samples are seen
    const SUB: usize = 8;
    let mut prev = tr.time(0);
    for k in 1..tr.len() {
        let (t0, t1) = (tr.time(k - 1), tr.time(k));
        for j in 1..=SUB {
            let t = t0 + (t1 - t0) * j as f64 / SUB as f64;
            tr.interpolate_into(t, &mut buf);
            if g(&buf) <= 0.0 {
                let (mut lo, mut hi) = (prev, t);
                while hi - lo > 1e-10 * hi.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    tr.interpolate_into(mid, &mut buf);
                    if g(&buf) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(hi);
            }
            prev = t;
        }
    }
    None
}

/// Verdicts of the three constituents and of ISS itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Superposition {
    pub iss: ProbeReport,
    pub fc: ProbeReport,
    pub uls: ProbeReport,
    pub lim: ProbeReport,
}

impl Superposition {
    /// ISS passes exactly when FC, ULS and LIM all pass.
    pub fn coherent(&self) -> bool {
        self.iss.passes() == (self.fc.passes() && self.uls.passes() && self.lim.passes())
    }
}

/// Reference gains for a superposition check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionGains {
    pub estimate: IssEstimate,
    pub uls_sigma: ComparisonFn,
    pub uls_gamma: ComparisonFn,
    pub uls_radius: f64,
    pub lim_gamma: ComparisonFn,
}

pub fn superposition(sys: &SystemModel, gains: &SuperpositionGains, budget: &SamplingBudget) -> Result<Superposition, ProbeError> {
    Ok(Superposition {
        iss: check_iss_estimate(sys, &gains.estimate, budget)?,
        fc: check_forward_completeness(sys, budget)?,
        uls: check_uls(sys, &gains.uls_sigma, &gains.uls_gamma, gains.uls_radius, budget)?,
        lim: check_lim(sys, &gains.lim_gamma, budget)?,
    })
}

/// Result of re-running a witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub confirmed: bool,
    pub observed: f64,
    pub bound: f64,
    pub margin: f64,
    pub detail: String,
}

/// Re-integrate the witnessed `(x₀, u)` and re-evaluate the violated
/// inequality. Confirmed when the violation exceeds the tolerance and the
/// recomputed observation matches the recorded one within twice the
/// tolerance.
pub fn replay(
    sys: &SystemModel,
    check: &TrajectoryCheck,
    w: &Witness,
    abs_tol: f64,
    rel_tol: f64,
    opts: &IntegrationOptions,
) -> Result<Replay, ProbeError> {
    let tol = |b: f64| abs_tol + rel_tol * b.abs();
    if let TrajectoryCheck::Fc = check {
        let horizon = w.t_ref.unwrap_or(2.0 * w.t + 1.0);
        let tr = integrate(sys, &w.x0, &w.input, horizon, opts)?;
        let observed = sys.state_norm().of(tr.final_state());
        let bound = opts.blowup_threshold;
        return Ok(match tr.escaped() {
            Some(te) => {
                let same_time = (te - w.t).abs() <= 1e-6 * w.t.max(1.0);
                let consistent = (w.margin - (w.observed - w.bound)).abs() <= 1e-9 * w.observed.abs().max(1.0);
                Replay {
                    confirmed: same_time && consistent && w.bound == bound,
                    observed,
                    bound,
                    margin: observed - bound,
                    detail: format!("escape at t = {te:e} (recorded {:e})", w.t),
                }
            }
            None => Replay {
                confirmed: false,
                observed,
                bound,
                margin: observed - bound,
                detail: "no escape on replay".into(),
            },
        });
    }
    if !(w.t > 0.0) {
        return Err(ProbeError::InvalidRequest("witness time must be positive".into()));
    }
    let tr = integrate(sys, &w.x0, &w.input, w.t, opts)?;
    let x0n = sys.state_norm().of(&w.x0);
    let unorm = input_sup(sys, &w.input);
    let observed = match check {
        TrajectoryCheck::Lim { .. } => scan_points(sys, &tr).iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        _ => sys.state_norm().of(tr.final_state()),
    };
    let bound = check.bound(x0n, unorm, w.t);
    let margin = observed - bound;
    let t2 = 2.0 * tol(bound);
    let reproduced = margin > tol(bound);
    let matches = (observed - w.observed).abs() <= t2 && (margin - w.margin).abs() <= t2 && (bound - w.bound).abs() <= t2;
    let detail = if !reproduced {
        "violation not reproduced".to_string()
    } else if !matches {
        format!("recorded margin {:e} differs from recomputed {margin:e}", w.margin)
    } else {
        "violation reproduced".to_string()
    };
    Ok(Replay {
        confirmed: reproduced && matches,
        observed,
        bound,
        margin,
        detail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> SystemModel {
        SystemModel::new("decay", 1, 1, |x, u, dx| dx[0] = -x[0] + u[0])
    }

    fn small_budget() -> SamplingBudget {
        SamplingBudget {
            samples: 120,
            horizon: 20.0,
            ..SamplingBudget::default()
        }
    }

    fn est(gain: f64) -> IssEstimate {
        IssEstimate {
            beta: KLFn::exponential(1.0, 1.0).unwrap(),
            gamma: ComparisonFn::linear(gain).unwrap(),
        }
    }

    #[test]
    fn variation_of_constants_estimate_passes() {
        let rep = check_iss_estimate(&decay(), &est(1.0), &small_budget()).unwrap();
        assert_eq!(rep.verdict, Verdict::NoCounterexample, "{}", rep.summary);
        assert_eq!(rep.samples_used, 120);
    }

    #[test]
    fn half_gain_is_falsified_and_replays() {
        let b = small_budget();
        let rep = check_iss_estimate(&decay(), &est(0.5), &b).unwrap();
        assert_eq!(rep.verdict, Verdict::Falsified);
        let w = rep.witness.unwrap();
        assert!(w.margin > b.tol(w.bound));
        let check = TrajectoryCheck::Iss {
            beta: est(0.5).beta,
            gamma: est(0.5).gamma,
        };
        let r = replay(&decay(), &check, &w, b.abs_tol, b.rel_tol, &b.integration).unwrap();
        assert!(r.confirmed, "{}", r.detail);
        let mut tampered = w.clone();
        tampered.margin *= 10.0;
        tampered.observed = tampered.bound + tampered.margin;
        let r = replay(&decay(), &check, &tampered, b.abs_tol, b.rel_tol, &b.integration).unwrap();
        assert!(!r.confirmed);
    }

    #[test]
    fn unstable_system_fails_uls_and_lim() {
        let sys = SystemModel::new("unstable", 1, 1, |x, u, dx| dx[0] = x[0] + u[0]);
        let id = ComparisonFn::identity();
        let b = small_budget();
        assert_eq!(check_uls(&sys, &id, &id, 1.0, &b).unwrap().verdict, Verdict::Falsified);
        assert_eq!(check_lim(&sys, &id, &b).unwrap().verdict, Verdict::Falsified);
        assert!(check_uls(&decay(), &id, &id, 1.0, &b).unwrap().passes());
        assert!(check_lim(&decay(), &id, &b).unwrap().passes());
    }

    #[test]
    fn asymptotic_gain_of_linear_decay() {
        let b = SamplingBudget {
            samples: 60,
            ..SamplingBudget::default()
        };
        let (g, pairs) = asymptotic_gain_samples(&decay(), &[0.0, 0.1, 1.0, 10.0], &b).unwrap();
        assert!(pairs[0].1 < 1e-6);
        for &(r, v) in &pairs[1..] {
            assert!((v - r).abs() <= 0.05 * r, "{r}: {v}");
            assert!((g.value(r) - r).abs() <= 0.05 * r);
        }
    }

    #[test]
    fn ulim_hitting_time_matches_log() {
        let b = small_budget();
        let t = ulim_table(&decay(), &ComparisonFn::identity(), &[0.1], &[1.0], 40, &b).unwrap();
        let tau = t[0].tau.unwrap();
        assert!((tau - 10f64.ln()).abs() < 0.2, "{tau}");
    }

    #[test]
    fn escape_reported_as_fc() {
        let sys = SystemModel::new("bern", 2, 1, |x, _u, dx| {
            dx[0] = -x[0] + x[1] * x[0] * x[0];
            dx[1] = -x[1];
        });
        let b = small_budget();
        let rep = check_iss_estimate(&sys, &est(1.0), &b).unwrap();
        assert_eq!(rep.property, Property::Fc);
        assert_eq!(rep.verdict, Verdict::Falsified);
        let w = rep.witness.unwrap();
        let r = replay(&sys, &TrajectoryCheck::Fc, &w, b.abs_tol, b.rel_tol, &b.integration).unwrap();
        assert!(r.confirmed, "{}", r.detail);
    }

    #[test]
    fn reports_are_deterministic() {
        let b = small_budget();
        let a = serde_json::to_string(&check_iss_estimate(&decay(), &est(0.5), &b).unwrap()).unwrap();
        let c = serde_json::to_string(&check_iss_estimate(&decay(), &est(0.5), &b).unwrap()).unwrap();
        assert_eq!(a, c);
    }
}
