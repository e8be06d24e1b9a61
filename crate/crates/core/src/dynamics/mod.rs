//! ODE systems with external inputs: models, input signals, adaptive
//! integration on the maximal interval and reachability probes.

mod integrator;
mod model;
mod signal;
mod trajectory;

use std::cell::RefCell;

use rayon::prelude::*;
use thiserror::Error;

pub(crate) use integrator::{StepOutcome, Stepper};
pub use integrator::{IntegrationOptions, UNDERFLOW_FACTOR};
pub use model::{LipschitzHint, Norm, Rhs, SystemModel};
pub use signal::{InputSignal, Piece};
pub(crate) use trajectory::hermite;
pub use trajectory::{fmt17, Trajectory, TrajectoryStatus};

use crate::sampling;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid input signal: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid integration request: {0}")]
    InvalidRequest(String),
    #[error("step-size underflow without blow-up at t = {t} (stiff or discontinuous right-hand side)")]
    StepFailure { t: f64 },
}

/// Integrate `ẋ = f(x, u(t))` from `x0` on `[0, horizon]`.
///
/// Integration is restarted at every input breakpoint so that no step
/// straddles a discontinuity of `u`. The returned trajectory is complete,
/// escaped (norm above `blowup_threshold` together with a collapsed step
/// size or overflow), or a step failure.
pub fn integrate(
    sys: &SystemModel,
    x0: &[f64],
    u: &InputSignal,
    horizon: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory, DynamicsError> {
    if x0.len() != sys.state_dim() {
        return Err(DynamicsError::Dimension(format!(
            "initial state has length {}, system state dimension is {}",
            x0.len(),
            sys.state_dim()
        )));
    }
    if u.dim() != sys.input_dim() {
        return Err(DynamicsError::Dimension(format!(
            "input has dimension {}, system input dimension is {}",
            u.dim(),
            sys.input_dim()
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(DynamicsError::InvalidRequest(format!("horizon must be positive, got {horizon}")));
    }
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return Err(DynamicsError::InvalidRequest("tolerances must be positive".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::InvalidRequest("initial state is not finite".into()));
    }

    let m = sys.input_dim();
    let norm = sys.state_norm();
    let mut traj: Option<Trajectory> = None;
    let mut y = x0.to_vec();
    let mut h_next = None;
    let mut steps_used = 0usize;
    let mut k = 0;
    loop {
        let piece = u.piece(k);
        let a = piece.start.max(0.0);
        let b = u
            .pieces()
            .get(k + 1)
            .map_or(horizon, |p| p.start.min(horizon));
        let ubuf = RefCell::new(vec![0.0; m]);
        let f = |t: f64, x: &[f64], dx: &mut [f64]| {
            let mut ub = ubuf.borrow_mut();
            ub.copy_from_slice(&piece.value);
            if let Some(rate) = &piece.rate {
                for (o, r) in ub.iter_mut().zip(rate) {
                    *o += r * (t - piece.start);
                }
            }
            sys.eval(x, &ub, dx);
        };
        let mut seg_opts = *opts;
        seg_opts.max_steps = opts.max_steps.saturating_sub(steps_used);
        let mut st = Stepper::new(&f, a, &y, h_next, seg_opts);
        match traj.as_mut() {
            None => traj = Some(Trajectory::new(a, &y, &st.dy)),
            Some(tr) => tr.set_last_deriv_out(&st.dy),
        }
        let tr = traj.as_mut().expect("initialised");
        while st.t < b {
            match st.step(b) {
                StepOutcome::Accepted => tr.push(st.t, &st.y, &st.dy),
                StepOutcome::Underflow | StepOutcome::Exhausted => {
                    let size = norm.of(tr.final_state());
                    // a collapse short of the threshold still counts as escape
                    // when the state is large and ‖x‖/‖ẋ‖, the time left
                    // to a blow-up, is below what the step size can resolve
                    let near_blowup = size > opts.blowup_threshold.sqrt()
                        && size / norm.of(&st.dy) < 1e-9 * st.t.abs().max(1.0);
                    let status = if size > opts.blowup_threshold || near_blowup {
                        TrajectoryStatus::Escaped { t_escape: st.t }
                    } else {
                        TrajectoryStatus::StepFailure { t: st.t }
                    };
                    tr.set_status(status);
                    return Ok(traj.expect("initialised"));
                }
            }
        }
        steps_used += st.steps;
        h_next = Some(st.h);
        y.copy_from_slice(&st.y);
        if b >= horizon {
            break;
        }
        k += 1;
    }
    Ok(traj.expect("at least one segment"))
}

/// Empirical reachability bound: the largest `|φ(t, x, u)|` over sampled
/// `|x| ≤ r`, piecewise-constant `‖u‖∞ ≤ r` with at most 8 pieces and
/// `t ∈ [0, r]`. Returns `f64::INFINITY` when any sample escapes.
///
/// This under-approximates the true supremum; it is a falsification tool
/// for bounded reachability, not a bound.
pub fn reachability_bound(
    sys: &SystemModel,
    r: f64,
    samples: usize,
    seed: u64,
    opts: &IntegrationOptions,
) -> Result<f64, DynamicsError> {
    if !(r > 0.0) {
        return Err(DynamicsError::InvalidRequest(format!("radius must be positive, got {r}")));
    }
    let results: Vec<Result<f64, DynamicsError>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::stream(seed, i as u64);
            let x0 = if i % 2 == 0 {
                sampling::on_sphere(&mut rng, sys.state_dim(), r)
            } else {
                sampling::in_ball(&mut rng, sys.state_dim(), r)
            };
            let mag = if i % 4 < 2 { r } else { r * rand::Rng::random::<f64>(&mut rng) };
            let u = sampling::piecewise_constant_input(&mut rng, sys.input_dim(), mag, r, 8);
            let tr = integrate(sys, &x0, &u, r, opts)?;
            match tr.status() {
                TrajectoryStatus::Escaped { .. } => Ok(f64::INFINITY),
                TrajectoryStatus::StepFailure { t } => Err(DynamicsError::StepFailure { t }),
                TrajectoryStatus::Complete => {
                    Ok(tr.norms(sys.state_norm()).into_iter().fold(0.0, f64::max))
                }
            }
        })
        .collect();
    let mut best: f64 = 0.0;
    for r in results {
        best = best.max(r?);
    }
    Ok(best)
}
