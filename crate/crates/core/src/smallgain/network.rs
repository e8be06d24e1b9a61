//! Truncated networks `ẋᵢ = fᵢ(xᵢ, x̄ᵢ, uᵢ)` and their certification from
//! implication-form component certificates and a path of strict decay.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonFn, KLFn, Kind, DEFAULT_INVERT_TOL};
use crate::dynamics::{integrate, DynamicsError, InputSignal, IntegrationOptions, Norm, SystemModel, Trajectory, TrajectoryStatus};
use crate::lyapunov::{check_implication, ImplicationCertificate, LyapunovFn, Subsystem};
use crate::probe::{self, check_iss_estimate, IssEstimate, ProbeReport, Property, SamplingBudget, Verdict, Witness, DENSE_GRID};
use crate::sampling;

use super::{
    composite_lyapunov, default_path_grid, stencil_slots, synthesize_decay_path, verify_decay_path, Boundary, DecayPath,
    GainOperator, PathVerification, SmallGainError, SynthesisFailure, SynthesisOptions,
};

/// `fᵢ(xᵢ, x̄ᵢ, uᵢ, ẋᵢ)`; `x̄ᵢ` holds the neighbor states in slot order,
/// zeros for slots outside the truncation.
pub type LocalRhs = Arc<dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Neighbor structure of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Neighbors {
    /// Same offsets for every component, e.g. `[-1, 1]` for a line.
    Stencil { offsets: Vec<isize>, boundary: Boundary },
    /// Explicit lists, all of the same length.
    Explicit { lists: Vec<Vec<usize>> },
}

#[derive(Clone)]
pub struct Network {
    name: String,
    components: usize,
    component_dim: usize,
    external_dim: usize,
    neighbors: Neighbors,
    slots: Vec<Vec<Option<usize>>>,
    local: LocalRhs,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("name", &self.name)
            .field("components", &self.components)
            .field("component_dim", &self.component_dim)
            .field("external_dim", &self.external_dim)
            .field("neighbors", &self.neighbors)
            .finish_non_exhaustive()
    }
}

impl Network {
    pub fn new<F>(
        name: impl Into<String>,
        components: usize,
        component_dim: usize,
        external_dim: usize,
        neighbors: Neighbors,
        local: F,
    ) -> Result<Self, SmallGainError>
    where
        F: Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if components == 0 || component_dim == 0 {
            return Err(SmallGainError::Dimension("network needs components of positive dimension".into()));
        }
        let slots = slots_for(components, &neighbors)?;
        Ok(Self {
            name: name.into(),
            components,
            component_dim,
            external_dim,
            neighbors,
            slots,
            local: Arc::new(local),
        })
    }

    /// The same network truncated to `n` components (stencils only).
    pub fn with_components(&self, n: usize) -> Result<Self, SmallGainError> {
        if matches!(self.neighbors, Neighbors::Explicit { .. }) {
            return Err(SmallGainError::Invalid("explicit neighbor lists cannot be resized".into()));
        }
        if n == 0 {
            return Err(SmallGainError::Dimension("network needs at least one component".into()));
        }
        Ok(Self {
            components: n,
            slots: slots_for(n, &self.neighbors)?,
            ..self.clone()
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn component_dim(&self) -> usize {
        self.component_dim
    }

    pub fn external_dim(&self) -> usize {
        self.external_dim
    }

    pub fn neighbors(&self) -> &Neighbors {
        &self.neighbors
    }

    /// Neighbor slots per component.
    pub fn slot_count(&self) -> usize {
        self.slots[0].len()
    }

    /// The whole truncated network as one system, with block-max norms.
    pub fn system(&self) -> SystemModel {
        let (n, d, m) = (self.components, self.component_dim, self.external_dim);
        let slots = self.slots.clone();
        let local = self.local.clone();
        let k = self.slot_count();
        SystemModel::new(self.name.clone(), n * d, n * m, move |x, u, dx| {
            let mut bar = vec![0.0; k * d];
            for (i, sl) in slots.iter().enumerate() {
                for (s, j) in sl.iter().enumerate() {
                    let dst = &mut bar[s * d..(s + 1) * d];
                    match j {
                        Some(j) => dst.copy_from_slice(&x[j * d..(j + 1) * d]),
                        None => dst.fill(0.0),
                    }
                }
                local(&x[i * d..(i + 1) * d], &bar, &u[i * m..(i + 1) * m], &mut dx[i * d..(i + 1) * d]);
            }
        })
        .with_norms(Norm::BlockMax { block: d }, Norm::BlockMax { block: m.max(1) })
    }

    /// A generic component: its input is the neighbor states followed by
    /// `uᵢ`.
    pub fn subsystem(&self) -> Result<Subsystem, SmallGainError> {
        let (d, m, k) = (self.component_dim, self.external_dim, self.slot_count());
        let local = self.local.clone();
        let model = SystemModel::new(format!("{} component", self.name), d, k * d + m, move |x, rest, dx| {
            local(x, &rest[..k * d], &rest[k * d..], dx)
        });
        Ok(Subsystem::new(model, k, m)?)
    }

    /// `Γ` built from the certificate's per-slot gains.
    pub fn gain_operator(&self, cert: &ImplicationCertificate) -> Result<GainOperator, SmallGainError> {
        if cert.gains.len() != self.slot_count() {
            return Err(SmallGainError::Dimension(format!(
                "{} gains for {} neighbor slots",
                cert.gains.len(),
                self.slot_count()
            )));
        }
        GainOperator::from_slots(
            self.slots.clone(),
            vec![cert.gains.clone(); self.components],
            cert.gamma_u.clone(),
        )
    }
}

fn slots_for(n: usize, neighbors: &Neighbors) -> Result<Vec<Vec<Option<usize>>>, SmallGainError> {
    match neighbors {
        Neighbors::Stencil { offsets, boundary } => Ok(stencil_slots(n, offsets, *boundary)),
        Neighbors::Explicit { lists } => {
            if lists.len() != n {
                return Err(SmallGainError::Dimension(format!("{} neighbor lists for {n} components", lists.len())));
            }
            let k = lists[0].len();
            if lists.iter().any(|l| l.len() != k) {
                return Err(SmallGainError::Dimension("neighbor lists must have equal length".into()));
            }
            if let Some(j) = lists.iter().flatten().find(|&&j| j >= n) {
                return Err(SmallGainError::Dimension(format!("neighbor index {j} outside 0..{n}")));
            }
            Ok(lists.iter().map(|l| l.iter().map(|&j| Some(j)).collect()).collect())
        }
    }
}

/// `t ↦ V(φ(t))` on the step times plus a uniform grid.
pub fn composite_trace(
    v: &LyapunovFn,
    path: &DecayPath,
    tr: &Trajectory,
    component_dim: usize,
) -> Result<Vec<(f64, f64)>, SmallGainError> {
    let mut ts: Vec<f64> = tr.times().to_vec();
    let t_end = tr.t_end();
    ts.extend((1..DENSE_GRID).map(|k| t_end * k as f64 / DENSE_GRID as f64));
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut buf = vec![0.0; tr.dim()];
    ts.into_iter()
        .map(|t| {
            tr.interpolate_into(t, &mut buf);
            Ok((t, composite_lyapunov(v, path, &buf, component_dim)?))
        })
        .collect()
}

/// Sampled `σ_max⁻¹∘ψ₁(‖x‖∞) ≤ V(x) ≤ σ_min⁻¹∘ψ₂(‖x‖∞)` on random
/// truncated states.
pub fn check_composite_sandwich(
    cert: &ImplicationCertificate,
    path: &DecayPath,
    component_dim: usize,
    budget: &SamplingBudget,
) -> Result<ProbeReport, SmallGainError> {
    let n = path.sigma.len();
    let norm = Norm::BlockMax { block: component_dim };
    let found: Vec<Result<Option<Witness>, SmallGainError>> = (0..budget.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::stream(budget.seed, i as u64);
            let r = budget.radii[i % budget.radii.len()];
            // spread component sizes over several orders of magnitude
            let mut x = Vec::with_capacity(n * component_dim);
            for _ in 0..n {
                let w = r * 10f64.powf(-3.0 * rng.random::<f64>());
                x.extend(sampling::in_ball(&mut rng, component_dim, w));
            }
            let v = composite_lyapunov(&cert.v, path, &x, component_dim)?;
            let s = norm.of(&x);
            let lo = path.sigma_max.invert(cert.psi1.value(s), DEFAULT_INVERT_TOL * 1e-3)?;
            let hi = path.sigma_min.invert(cert.psi2.value(s), DEFAULT_INVERT_TOL * 1e-3)?;
            let w = |observed: f64, bound: f64| Witness {
                x0: x.clone(),
                input: InputSignal::zero(1),
                t: 0.0,
                t_ref: None,
                observed,
                bound,
                margin: observed - bound,
            };
            Ok(if lo - v > budget.tol(v) {
                Some(w(lo, v))
            } else if v - hi > budget.tol(hi) {
                Some(w(v, hi))
            } else {
                None
            })
        })
        .collect();
    for f in found {
        if let Some(w) = f? {
            return Ok(ProbeReport::falsified(Property::Sandwich, budget.samples, w));
        }
    }
    Ok(ProbeReport::passed(Property::Sandwich, budget.samples))
}

/// One precondition of the network theorem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precondition {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    /// Overall verdict: a failed precondition gives `hypothesis_violation`,
    /// a failed conclusion `falsified`.
    pub report: ProbeReport,
    pub preconditions: Vec<Precondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_verification: Option<PathVerification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implication: Option<ProbeReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<ProbeReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iss: Option<ProbeReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<IssEstimate>,
    /// Exponential rate `λ` with `V(t) ≤ e^{−λt}V(0)` above the input level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<DecayPath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis_failure: Option<SynthesisFailure>,
}

impl NetworkReport {
    fn violation(preconditions: Vec<Precondition>, reason: String) -> Self {
        Self {
            report: ProbeReport::hypothesis_violation(Property::Iss, reason),
            preconditions,
            path_verification: None,
            implication: None,
            decay: None,
            iss: None,
            estimate: None,
            decay_rate: None,
            path: None,
            synthesis_failure: None,
        }
    }
}

/// Sampled Lipschitz constant of `V` on `ball(R)` of one component.
pub fn sampled_lipschitz(v: &LyapunovFn, dim: usize, radius: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = sampling::rng(seed);
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let x = sampling::in_ball(&mut rng, dim, radius);
        let y = sampling::in_ball(&mut rng, dim, radius);
        let d = Norm::Euclidean.of(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        if d > 0.0 {
            best = best.max((v.value(&x) - v.value(&y)).abs() / d);
        }
    }
    best
}

/// `λ = min (σᵢ⁻¹)'(w)·α̃(w)/σᵢ⁻¹(w)` over a log grid of `w`.
pub fn composite_decay_rate(path: &DecayPath, alpha_tilde: &ComparisonFn) -> Result<f64, SmallGainError> {
    let mut lambda = f64::INFINITY;
    for s in &path.sigma {
        for w in sampling::log_grid(1e-3, 1e3, 61) {
            let h = 1e-6 * w;
            let a = s.invert(w - h, 1e-13)?;
            let b = s.invert(w + h, 1e-13)?;
            let c = s.invert(w, 1e-13)?;
            lambda = lambda.min((b - a) / (2.0 * h) * alpha_tilde.value(w) / c);
        }
    }
    Ok(lambda)
}

/// ISS estimate implied by the composite function:
/// `β(r,t) = ψ₁⁻¹∘σ_max(e^{−λt}·σ_min⁻¹∘ψ₂(r))`,
/// `γ = ψ₁⁻¹∘σ_max∘σ_min⁻¹∘γ_u`.
pub fn composite_estimate(cert: &ImplicationCertificate, path: &DecayPath, lambda: f64) -> Result<IssEstimate, SmallGainError> {
    let outer = cert.psi1.inverse()?.compose(&path.sigma_max)?;
    let inner = path.sigma_min.inverse()?.compose(&cert.psi2)?;
    let beta = KLFn::warped(outer.clone(), inner, ComparisonFn::exp_decay(1.0, lambda)?)?;
    let gamma = if cert.gamma_u.is_zero() {
        ComparisonFn::zero()
    } else {
        outer.compose(&path.sigma_min.inverse()?.compose(&cert.gamma_u)?)?
    };
    Ok(IssEstimate { beta, gamma })
}

/// Input level `χ = σ_min⁻¹∘γ_u(‖u‖∞)` above which `V` must decay.
fn input_level(cert: &ImplicationCertificate, path: &DecayPath, unorm: f64) -> Result<f64, SmallGainError> {
    Ok(path.sigma_min.invert(cert.gamma_u.value(unorm), DEFAULT_INVERT_TOL * 1e-3)?)
}

/// First `(t_a, t_b)` with `V(t_a) > χ` and `V(t_b) > V(t_a) + tol`.
fn decay_violation(trace: &[(f64, f64)], chi: f64, b: &SamplingBudget) -> Option<(f64, f64, f64, f64)> {
    let mut worst: Option<(f64, f64, f64, f64)> = None;
    // running maximum of V over points already above χ
    let mut peak: Option<(f64, f64)> = None;
    for &(t, v) in trace {
        if let Some((ta, va)) = peak {
            let margin = v - va;
            if margin > b.tol(va) && worst.is_none_or(|w| margin > w.2 - w.3) {
                worst = Some((ta, t, v, va));
            }
        }
        if v > chi + b.tol(chi) && peak.is_none_or(|p| v > p.1) {
            peak = Some((t, v));
        }
    }
    worst
}

/// Integrate the truncated network under the budget's sampled inputs and
/// falsify "V decays while above the input level".
pub fn check_composite_decay(
    net: &Network,
    cert: &ImplicationCertificate,
    path: &DecayPath,
    budget: &SamplingBudget,
) -> Result<ProbeReport, SmallGainError> {
    let sys = net.system();
    let rows: Vec<Result<Option<Witness>, SmallGainError>> = (0..budget.samples)
        .into_par_iter()
        .map(|i| {
            let case = probe::iss_case(&sys, budget, &budget.radii, &budget.magnitudes, i);
            let tr = integrate(&sys, &case.x0, &case.u, budget.horizon, &budget.integration)?;
            match tr.status() {
                TrajectoryStatus::StepFailure { t } => return Err(DynamicsError::StepFailure { t }.into()),
                TrajectoryStatus::Escaped { t_escape } => {
                    let observed = sys.state_norm().of(tr.final_state());
                    let bound = budget.integration.blowup_threshold;
                    return Ok(Some(Witness {
                        x0: case.x0,
                        input: case.u,
                        t: t_escape,
                        t_ref: Some(budget.horizon),
                        observed,
                        bound,
                        margin: observed - bound,
                    }));
                }
                TrajectoryStatus::Complete => {}
            }
            let chi = input_level(cert, path, probe::input_sup(&sys, &case.u))?;
            let trace = composite_trace(&cert.v, path, &tr, net.component_dim())?;
            Ok(decay_violation(&trace, chi, budget).map(|(ta, tb, observed, bound)| Witness {
                x0: case.x0,
                input: case.u,
                t: tb,
                t_ref: Some(ta),
                observed,
                bound,
                margin: observed - bound,
            }))
        })
        .collect();
    for r in rows {
        if let Some(w) = r? {
            let mut rep = ProbeReport::falsified(Property::NetworkDecay, budget.samples, w);
            if rep.witness.as_ref().is_some_and(|w| w.t_ref == Some(budget.horizon)) {
                rep.property = Property::Fc;
                rep.summary = "escape: the truncated network is not forward complete".into();
            }
            return Ok(rep);
        }
    }
    Ok(ProbeReport::passed(Property::NetworkDecay, budget.samples))
}

/// Re-integrate a decay witness and recompute `V(t_a)`, `V(t_b)` and the
/// input level. Confirmed when `V(t_b) − V(t_a)` exceeds `tol` and
/// `V(t_a)` is above the level.
pub fn replay_composite_decay(
    net: &Network,
    cert: &ImplicationCertificate,
    path: &DecayPath,
    w: &Witness,
    budget: &SamplingBudget,
    opts: &IntegrationOptions,
) -> Result<probe::Replay, SmallGainError> {
    let sys = net.system();
    let ta = w
        .t_ref
        .ok_or_else(|| SmallGainError::Invalid("decay witness without reference time".into()))?;
    let tr = integrate(&sys, &w.x0, &w.input, w.t.max(ta), opts)?;
    if tr.escaped().is_some() {
        return Err(SmallGainError::Invalid("replayed trajectory escaped before the witness time".into()));
    }
    let d = net.component_dim();
    let va = composite_lyapunov(&cert.v, path, &tr.interpolate(ta), d)?;
    let vb = composite_lyapunov(&cert.v, path, &tr.interpolate(w.t), d)?;
    let chi = input_level(cert, path, probe::input_sup(&sys, &w.input))?;
    let margin = vb - va;
    let confirmed = va > chi && margin > budget.tol(va);
    let tampered = (vb - w.observed).abs() > 2.0 * budget.tol(w.observed) || (va - w.bound).abs() > 2.0 * budget.tol(w.bound);
    Ok(probe::Replay {
        confirmed: confirmed && !tampered,
        observed: vb,
        bound: va,
        margin,
        detail: if tampered {
            format!("recorded values ({}, {}) differ from the replay ({vb}, {va})", w.observed, w.bound)
        } else {
            format!("V({}) = {vb} against V({ta}) = {va}, input level {chi}", w.t)
        },
    })
}

/// Check the network theorem's hypotheses and then its conclusion on the
/// truncated network. `path` is verified, not trusted.
pub fn check_network_iss(
    net: &Network,
    cert: &ImplicationCertificate,
    path: &DecayPath,
    budget: &SamplingBudget,
) -> Result<NetworkReport, SmallGainError> {
    let mut pre = Vec::new();
    let op = net.gain_operator(cert)?;
    if cert.gamma_u.kind() == Kind::L {
        return Err(SmallGainError::Invalid("γᵤ must be class K or zero".into()));
    }

    let pv = verify_decay_path(&op, path, &default_path_grid())?;
    pre.push(Precondition {
        name: "decay_path".into(),
        holds: pv.holds,
        detail: match &pv.violation {
            None => format!("verified on {} grid points and {} intervals", pv.grid_points, pv.intervals.len()),
            Some(v) => format!("{:?} violated at component {} r = {:e}: {} > {}", v.condition, v.index, v.r, v.lhs, v.rhs),
        },
    });

    let imp = check_implication(&net.subsystem()?, cert, budget)?;
    let imp_ok = imp.passes() && !imp.vacuous;
    pre.push(Precondition {
        name: "implication".into(),
        holds: imp_ok,
        detail: imp.summary.clone(),
    });

    let r_max = budget.radii.iter().copied().fold(0.0, f64::max);
    let lip = sampled_lipschitz(&cert.v, net.component_dim(), r_max, 1000, budget.seed);
    let lip_ok = lip.is_finite();
    pre.push(Precondition {
        name: "lipschitz".into(),
        holds: lip_ok,
        detail: format!("sampled L({r_max}) = {lip}"),
    });

    if !(pv.holds && imp_ok && lip_ok) {
        let failed: Vec<&str> = pre.iter().filter(|p| !p.holds).map(|p| p.name.as_str()).collect();
        let mut rep = NetworkReport::violation(pre.clone(), format!("precondition failed: {}", failed.join(", ")));
        rep.path_verification = Some(pv);
        rep.implication = Some(imp);
        return Ok(rep);
    }

    let decay = check_composite_decay(net, cert, path, budget)?;
    let lambda = composite_decay_rate(path, &cert.alpha_tilde)?;
    let estimate = composite_estimate(cert, path, lambda)?;
    let iss = check_iss_estimate(&net.system(), &estimate, budget)?;

    let mut report = if !decay.passes() {
        decay.clone()
    } else if !iss.passes() {
        iss.clone()
    } else {
        let mut r = ProbeReport::passed(Property::Iss, budget.samples);
        r.summary = format!(
            "no counterexample: composite V decays above the input level on {} samples, fitted λ = {lambda}",
            budget.samples
        );
        r
    };
    if lambda <= 0.0 {
        report.warnings.push("fitted decay rate is not positive".into());
    }
    Ok(NetworkReport {
        report,
        preconditions: pre,
        path_verification: Some(pv),
        implication: Some(imp),
        decay: Some(decay),
        iss: Some(iss),
        estimate: Some(estimate),
        decay_rate: Some(lambda),
        path: Some(path.clone()),
        synthesis_failure: None,
    })
}

/// Synthesize a decay path from `rho_guess` and run [`check_network_iss`].
/// A synthesis failure is a hypothesis violation carrying the failing
/// `(i, r)`.
pub fn certify_network(
    net: &Network,
    cert: &ImplicationCertificate,
    rho_guess: &ComparisonFn,
    opts: &SynthesisOptions,
    budget: &SamplingBudget,
) -> Result<NetworkReport, SmallGainError> {
    let op = net.gain_operator(cert)?;
    match synthesize_decay_path(&op, rho_guess, opts)? {
        Ok(path) => check_network_iss(net, cert, &path, budget),
        Err(fail) => {
            let v = &fail.violation;
            let pre = vec![Precondition {
                name: "decay_path".into(),
                holds: false,
                detail: format!(
                    "synthesis failed: {}; component {} at r = {:e}: {} > {}",
                    fail.reason, v.index, v.r, v.lhs, v.rhs
                ),
            }];
            let mut rep = NetworkReport::violation(pre, format!("no decay path found: {}", fail.reason));
            rep.synthesis_failure = Some(fail);
            Ok(rep)
        }
    }
}

impl NetworkReport {
    pub fn verdict(&self) -> Verdict {
        self.report.verdict
    }
}
