//! Event-triggered sample-and-hold control.
//!
//! The control `u = k(x(t_k))` is held between events; an event fires when
//! `ξ(|x(t_k) − x(t)|) ≥ σ·α(|x(t)|)`. Crossings are located by bisection
//! on the dense output.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparison::ComparisonFn;
use crate::dynamics::{
    hermite, DynamicsError, InputSignal, IntegrationOptions, Norm, StepOutcome, Stepper, SystemModel,
    Trajectory, TrajectoryStatus,
};
use crate::lyapunov::LyapunovFn;
use crate::probe::{ProbeReport, Property, Witness, DENSE_GRID};
use crate::sampling;

/// Time accuracy of event location.
pub const EVENT_TIME_TOL: f64 = 1e-10;
/// More events than this sets the Zeno flag.
pub const ZENO_MAX_EVENTS: usize = 100_000;
/// Inter-event times below this set the Zeno flag.
pub const ZENO_MIN_GAP: f64 = 1e-9;
/// Below this `|x(t_k)|` the control is held at `k(0)` and events are
/// suppressed until `|x|` grows past it again.
pub const EQUILIBRIUM_RADIUS: f64 = 1e-12;

/// Trigger-function checks per accepted step, in addition to the step end.
const SUBSTEPS: usize = 16;

pub type Feedback = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EtcError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid setup: {0}")]
    InvalidSetup(String),
}

/// Plant, feedback law, closed-loop certificate in `(x, e)` and trigger
/// parameter. The certificate asserts
/// `∇V(x)·f(x, k(x+e)) ≤ −α(|x|) + ξ(|e|)`.
#[derive(Clone)]
pub struct EtcSetup {
    pub plant: SystemModel,
    pub feedback: Feedback,
    pub v: LyapunovFn,
    pub alpha: ComparisonFn,
    pub xi: ComparisonFn,
    pub sigma: f64,
    /// Hypothesis checks that did not pass (reported, not fatal).
    pub warnings: Vec<String>,
}

impl fmt::Debug for EtcSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EtcSetup")
            .field("plant", &self.plant)
            .field("v", &self.v)
            .field("alpha", &self.alpha)
            .field("xi", &self.xi)
            .field("sigma", &self.sigma)
            .finish_non_exhaustive()
    }
}

impl EtcSetup {
    /// Validates `0 < σ < 1` and that `α` is K∞. Local Lipschitz
    /// continuity of `α⁻¹` and `ξ` is checked on `[0, 10]` from the
    /// parametric forms; failures become warnings.
    pub fn new<K>(
        plant: SystemModel,
        feedback: K,
        v: LyapunovFn,
        alpha: ComparisonFn,
        xi: ComparisonFn,
        sigma: f64,
    ) -> Result<Self, EtcError>
    where
        K: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(EtcError::InvalidSetup(format!("sigma must lie in (0, 1), got {sigma}")));
        }
        let mut warnings = Vec::new();
        match alpha.inverse() {
            Ok(inv) if inv.lipschitz_on(10.0).is_some() => {}
            Ok(_) => warnings.push("α⁻¹ is not Lipschitz near 0 for this parametric form".into()),
            Err(e) => return Err(EtcError::InvalidSetup(format!("α must be class K∞: {e}"))),
        }
        if xi.lipschitz_on(10.0).is_none() {
            warnings.push("ξ is not Lipschitz near 0 for this parametric form".into());
        }
        Ok(Self {
            plant,
            feedback: Arc::new(feedback),
            v,
            alpha,
            xi,
            sigma,
            warnings,
        })
    }

    fn control(&self, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.plant.input_dim()];
        (self.feedback)(x, &mut u);
        u
    }

    /// `ξ(|x_k − x|) − σ·α(|x|)`.
    pub fn trigger(&self, xk: &[f64], x: &[f64]) -> f64 {
        let e: Vec<f64> = xk.iter().zip(x).map(|(a, b)| a - b).collect();
        self.xi.value(Norm::Euclidean.of(&e)) - self.sigma * self.alpha.value(Norm::Euclidean.of(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtcTrace {
    /// Event times `t₀ = 0 < t₁ < …`.
    pub events: Vec<f64>,
    /// Control held from each event.
    pub controls: Vec<Vec<f64>>,
    pub trajectory: Trajectory,
    /// Smallest gap between consecutive events; the horizon when no event
    /// followed `t₀`.
    pub inter_event_min: f64,
    pub zeno_flag: bool,
}

impl EtcTrace {
    pub fn inter_event_times(&self) -> Vec<f64> {
        self.events.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn status(&self) -> TrajectoryStatus {
        self.trajectory.status()
    }

    /// Write the event times as a one-column CSV (`t_k`).
    pub fn write_events_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t_k"])?;
        for t in &self.events {
            wtr.write_record([crate::dynamics::fmt17(*t)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Simulate the event-triggered loop from `x0` on `[0, horizon]`.
pub fn simulate_etc(setup: &EtcSetup, x0: &[f64], horizon: f64, opts: &IntegrationOptions) -> Result<EtcTrace, EtcError> {
    run(setup, x0, horizon, opts, None)
}

/// Re-simulate with a prescribed event schedule instead of the trigger.
pub fn simulate_schedule(
    setup: &EtcSetup,
    x0: &[f64],
    events: &[f64],
    horizon: f64,
    opts: &IntegrationOptions,
) -> Result<EtcTrace, EtcError> {
    if events.first() != Some(&0.0) || events.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(EtcError::InvalidSetup("event times must start at 0 and increase".into()));
    }
    run(setup, x0, horizon, opts, Some(events))
}

fn run(
    setup: &EtcSetup,
    x0: &[f64],
    horizon: f64,
    opts: &IntegrationOptions,
    schedule: Option<&[f64]>,
) -> Result<EtcTrace, EtcError> {
    let plant = &setup.plant;
    let n = plant.state_dim();
    if x0.len() != n {
        return Err(DynamicsError::Dimension(format!("initial state has length {}, plant has {n}", x0.len())).into());
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(DynamicsError::InvalidRequest(format!("horizon must be positive, got {horizon}")).into());
    }
    let norm = Norm::Euclidean;
    let origin = vec![0.0; n];
    let mut xk = x0.to_vec();
    let mut suppressed = norm.of(&xk) < EQUILIBRIUM_RADIUS;
    let mut u = setup.control(if suppressed { &origin } else { &xk });
    let mut events = vec![0.0];
    let mut controls = vec![u.clone()];
    let mut traj: Option<Trajectory> = None;
    let mut y = x0.to_vec();
    let mut t = 0.0;
    let mut h_next = None;
    let mut zeno_flag = false;
    let mut next_fixed = 1;
    let mut buf = vec![0.0; n];
    // positive when an event is due
    let due = |xk: &[f64], suppressed: bool, x: &[f64]| {
        if suppressed {
            norm.of(x) - EQUILIBRIUM_RADIUS
        } else {
            setup.trigger(xk, x)
        }
    };

    'segments: loop {
        let held = u.clone();
        let f = |_t: f64, x: &[f64], dx: &mut [f64]| plant.eval(x, &held, dx);
        let mut st = Stepper::new(&f, t, &y, h_next, *opts);
        match traj.as_mut() {
            None => traj = Some(Trajectory::new(t, &y, &st.dy)),
            Some(tr) => tr.set_last_deriv_out(&st.dy),
        }
        let tr = traj.as_mut().expect("initialised");
        let seg_end = match schedule {
            Some(ev) => ev.get(next_fixed).copied().unwrap_or(horizon).min(horizon),
            None => horizon,
        };
        let mut fired: Option<(f64, Vec<f64>)> = None;
        while st.t < seg_end {
            match st.step(seg_end) {
                StepOutcome::Accepted => {}
                StepOutcome::Underflow | StepOutcome::Exhausted => {
                    let status = if plant.state_norm().of(tr.final_state()) > opts.blowup_threshold {
                        TrajectoryStatus::Escaped { t_escape: st.t }
                    } else {
                        TrajectoryStatus::StepFailure { t: st.t }
                    };
                    tr.set_status(status);
                    break 'segments;
                }
            }
            if schedule.is_none() {
                let interp = |s: f64, out: &mut [f64]| {
                    hermite(st.t_prev, &st.y_prev, &st.dy_prev, st.t, &st.y, &st.dy, s, out)
                };
                let mut lo = st.t_prev;
                for j in 1..=SUBSTEPS {
                    let s = if j == SUBSTEPS {
                        st.t
                    } else {
                        st.t_prev + (st.t - st.t_prev) * j as f64 / SUBSTEPS as f64
                    };
                    interp(s, &mut buf);
                    if due(&xk, suppressed, &buf) >= 0.0 {
                        let mut hi = s;
                        while hi - lo > EVENT_TIME_TOL {
                            let mid = 0.5 * (lo + hi);
                            interp(mid, &mut buf);
                            if due(&xk, suppressed, &buf) >= 0.0 {
                                hi = mid;
                            } else {
                                lo = mid;
                            }
                        }
                        if hi == st.t {
                            fired = Some((hi, st.y.clone()));
                        } else {
                            interp(hi, &mut buf);
                            fired = Some((hi, buf.clone()));
                        }
                        break;
                    }
                    lo = s;
                }
                if fired.is_some() {
                    break;
                }
            }
            tr.push(st.t, &st.y, &st.dy);
        }
        if schedule.is_some() && fired.is_none() && st.t >= seg_end && seg_end < horizon {
            fired = Some((seg_end, st.y.clone()));
            next_fixed += 1;
        }
        let Some((te, xe)) = fired else { break };
        if schedule.is_none() {
            let fe = plant.eval_vec(&xe, &held);
            tr.push(te, &xe, &fe);
        }
        let gap = te - events.last().copied().unwrap_or(0.0);
        xk = xe.clone();
        suppressed = norm.of(&xk) < EQUILIBRIUM_RADIUS;
        u = setup.control(if suppressed { &origin } else { &xk });
        events.push(te);
        controls.push(u.clone());
        if schedule.is_none() && (events.len() > ZENO_MAX_EVENTS || gap < ZENO_MIN_GAP) {
            zeno_flag = true;
            break;
        }
        y = xe;
        t = te;
        h_next = Some(st.h);
    }
    let trajectory = traj.expect("at least one segment");
    let inter_event_min = events
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Ok(EtcTrace {
        inter_event_min: if inter_event_min.is_finite() { inter_event_min } else { horizon },
        events,
        controls,
        trajectory,
        zeno_flag,
    })
}

/// Tolerances for the decay and trigger checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtcTolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for EtcTolerance {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-6,
        }
    }
}

impl EtcTolerance {
    fn of(&self, bound: f64) -> f64 {
        self.abs_tol + self.rel_tol * bound.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtcVerification {
    /// `V̇ ≤ −(1−σ)α(|x|)` along the trace.
    pub decay: ProbeReport,
    /// `ξ(|e|) ≤ σα(|x|)` between events.
    pub trigger: ProbeReport,
}

impl EtcVerification {
    pub fn passes(&self) -> bool {
        self.decay.passes() && self.trigger.passes()
    }
}

/// `(V̇, −(1−σ)α(|x|), ξ(|e|), σα(|x|))` at time `t` of a replayed trace.
fn inequalities_at(setup: &EtcSetup, replay: &EtcTrace, t: f64, x: &[f64]) -> Option<(f64, f64, f64, f64, f64)> {
    let k = replay.events.partition_point(|&s| s <= t).max(1) - 1;
    let tk = replay.events[k];
    let xk = replay.trajectory.interpolate(tk);
    let u = &replay.controls[k];
    let vdot = setup.v.lie_derivative(&setup.plant, x, u)?;
    let ax = setup.alpha.value(Norm::Euclidean.of(x));
    let e: Vec<f64> = xk.iter().zip(x).map(|(a, b)| a - b).collect();
    Some((vdot, -(1.0 - setup.sigma) * ax, setup.xi.value(Norm::Euclidean.of(&e)), setup.sigma * ax, tk))
}

/// Replay the trace's event schedule from its initial state and check the
/// decay inequality and the trigger rule on the step grid plus a uniform
/// grid. Deleting events from a valid trace makes these fail.
pub fn verify_decay(
    trace: &EtcTrace,
    setup: &EtcSetup,
    tol: EtcTolerance,
    opts: &IntegrationOptions,
) -> Result<EtcVerification, EtcError> {
    let x0 = trace.trajectory.state(0).to_vec();
    let horizon = trace.trajectory.t_end();
    let replay = simulate_schedule(setup, &x0, &trace.events, horizon, opts)?;
    let tr = &replay.trajectory;
    let mut times: Vec<f64> = tr.times().to_vec();
    times.extend((1..DENSE_GRID).map(|j| horizon * j as f64 / DENSE_GRID as f64));
    times.sort_by(f64::total_cmp);
    let m = setup.plant.input_dim();
    let witness = |t: f64, tk: f64, observed: f64, bound: f64| Witness {
        x0: x0.clone(),
        input: InputSignal::zero(m),
        t,
        t_ref: Some(tk),
        observed,
        bound,
        margin: observed - bound,
    };
    let mut decay = None;
    let mut trigger = None;
    for &t in &times {
        let x = tr.interpolate(t);
        let Some((vdot, vb, xi_e, sa, tk)) = inequalities_at(setup, &replay, t, &x) else {
            continue;
        };
        if decay.is_none() && vdot - vb > tol.of(vb) {
            decay = Some(witness(t, tk, vdot, vb));
        }
        if trigger.is_none() && xi_e - sa > tol.of(sa) {
            trigger = Some(witness(t, tk, xi_e, sa));
        }
    }
    let n = times.len();
    let report = |p, w: Option<Witness>| match w {
        Some(w) => ProbeReport::falsified(p, n, w),
        None => ProbeReport::passed(p, n),
    };
    Ok(EtcVerification {
        decay: report(Property::EtcDecay, decay),
        trigger: report(Property::TriggerRule, trigger),
    })
}

/// Re-evaluate `(V̇, −(1−σ)α(|x|))` at `t` for the schedule `events`.
pub fn decay_at(
    setup: &EtcSetup,
    x0: &[f64],
    events: &[f64],
    t: f64,
    opts: &IntegrationOptions,
) -> Result<Option<(f64, f64)>, EtcError> {
    let replay = simulate_schedule(setup, x0, events, t.max(f64::MIN_POSITIVE), opts)?;
    let x = replay.trajectory.interpolate(t);
    Ok(inequalities_at(setup, &replay, t, &x).map(|q| (q.0, q.1)))
}

/// `(ξ(|e(t)|), σ·α(|x(t)|))` at time `t` of a given event schedule.
pub fn trigger_at(
    setup: &EtcSetup,
    x0: &[f64],
    events: &[f64],
    t: f64,
    opts: &IntegrationOptions,
) -> Result<Option<(f64, f64)>, EtcError> {
    let replay = simulate_schedule(setup, x0, events, t.max(f64::MIN_POSITIVE), opts)?;
    let x = replay.trajectory.interpolate(t);
    Ok(inequalities_at(setup, &replay, t, &x).map(|q| (q.2, q.3)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterEventSummary {
    /// Minimum inter-event time over the samples (0 if any sample was
    /// flagged Zeno).
    pub tau_hat: f64,
    pub samples: usize,
    pub total_events: usize,
    /// Initial state of the sample attaining `tau_hat`.
    pub argmin_x0: Vec<f64>,
    pub zeno_flag: bool,
}

/// Empirical uniform lower bound of the inter-event times over `x₀` in the
/// ball of radius `radius` (the origin included as sample 0).
pub fn min_interevent_over_set(
    setup: &EtcSetup,
    radius: f64,
    samples: usize,
    horizon: f64,
    seed: u64,
    opts: &IntegrationOptions,
) -> Result<InterEventSummary, EtcError> {
    if !(radius > 0.0) || samples == 0 {
        return Err(EtcError::InvalidSetup("radius and sample count must be positive".into()));
    }
    let n = setup.plant.state_dim();
    let runs: Vec<Result<(Vec<f64>, EtcTrace), EtcError>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::stream(seed, i as u64);
            let x0 = if i == 0 {
                vec![0.0; n]
            } else if rng.random::<bool>() {
                let r = radius * rng.random::<f64>().max(1e-3);
                sampling::on_sphere(&mut rng, n, r)
            } else {
                sampling::in_ball(&mut rng, n, radius)
            };
            let trace = simulate_etc(setup, &x0, horizon, opts)?;
            Ok((x0, trace))
        })
        .collect();
    let mut best = (horizon, vec![0.0; n]);
    let mut total = 0;
    let mut zeno = false;
    for r in runs {
        let (x0, trace) = r?;
        total += trace.events.len() - 1;
        let tau = if trace.zeno_flag { 0.0 } else { trace.inter_event_min };
        if trace.zeno_flag && !zeno {
            zeno = true;
            best = (0.0, x0);
        } else if !zeno && tau < best.0 {
            best = (tau, x0);
        }
    }
    Ok(InterEventSummary {
        tau_hat: best.0,
        samples,
        total_events: total,
        argmin_x0: best.1,
        zeno_flag: zeno,
    })
}

/// `√σ/(1+√σ)`: the inter-event time of the integrator plant `ẋ = u` with
/// `k(x) = −x` and `α = ξ = r²/2`.
pub fn integrator_interevent_time(sigma: f64) -> f64 {
    sigma.sqrt() / (1.0 + sigma.sqrt())
}
