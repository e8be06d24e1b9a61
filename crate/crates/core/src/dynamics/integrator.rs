//! Dormand–Prince 5(4) stepping with step-size control and escape detection.

use serde::{Deserialize, Serialize};

/// Step size below `UNDERFLOW_FACTOR · t` counts as a collapse.
pub const UNDERFLOW_FACTOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub blowup_threshold: f64,
    pub max_steps: usize,
    /// Largest step; unbounded when absent.
    #[serde(skip_serializing_if = "is_unbounded")]
    pub max_step: f64,
}

fn is_unbounded(v: &f64) -> bool {
    v.is_infinite()
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            blowup_threshold: 1e12,
            max_steps: 2_000_000,
            max_step: f64::INFINITY,
        }
    }
}

impl IntegrationOptions {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum StepOutcome {
    Accepted,
    /// Proposed step fell below `UNDERFLOW_FACTOR · t`.
    Underflow,
    /// Step budget exhausted.
    Exhausted,
}

/// Single-segment stepper over a right-hand side that is smooth on the
/// segment. The caller restarts it at discontinuities.
pub(crate) struct Stepper<'a> {
    f: &'a dyn Fn(f64, &[f64], &mut [f64]),
    opts: IntegrationOptions,
    pub t: f64,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    pub t_prev: f64,
    pub y_prev: Vec<f64>,
    pub dy_prev: Vec<f64>,
    /// Step proposed by the controller for the next attempt.
    pub h: f64,
    pub steps: usize,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        f: &'a dyn Fn(f64, &[f64], &mut [f64]),
        t0: f64,
        y0: &[f64],
        h0: Option<f64>,
        opts: IntegrationOptions,
    ) -> Self {
        let n = y0.len();
        let mut dy = vec![0.0; n];
        f(t0, y0, &mut dy);
        let mut s = Self {
            f,
            opts,
            t: t0,
            y: y0.to_vec(),
            dy,
            t_prev: t0,
            y_prev: y0.to_vec(),
            dy_prev: vec![0.0; n],
            h: 0.0,
            steps: 0,
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
        };
        s.dy_prev.copy_from_slice(&s.dy);
        s.h = match h0 {
            Some(h) if h > 0.0 && h.is_finite() => h,
            _ => s.initial_step(),
        }
        .min(opts.max_step);
        s
    }

    /// Starting step from the size of the solution and its derivative;
    /// independent of the integration horizon.
    fn initial_step(&mut self) -> f64 {
        let o = self.opts;
        let sc = |y: f64| o.abs_tol + o.rel_tol * y.abs();
        let d0 = self.y.iter().map(|&y| y.abs() / sc(y)).fold(0.0, f64::max);
        let d1 = self
            .y
            .iter()
            .zip(&self.dy)
            .map(|(&y, &f)| f.abs() / sc(y))
            .fold(0.0, f64::max);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        for i in 0..self.y.len() {
            self.ytmp[i] = self.y[i] + h0 * self.dy[i];
        }
        (self.f)(self.t + h0, &self.ytmp, &mut self.k[1]);
        let d2 = self
            .y
            .iter()
            .zip(self.k[1].iter().zip(&self.dy))
            .map(|(&y, (&f1, &f0))| (f1 - f0).abs() / sc(y))
            .fold(0.0, f64::max)
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        let h = (100.0 * h0).min(h1);
        if h.is_finite() && h > 0.0 {
            h
        } else {
            1e-6
        }
    }

    /// Attempt steps until one is accepted, never passing `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> StepOutcome {
        let n = self.y.len();
        let o = self.opts;
        loop {
            if self.steps >= o.max_steps {
                return StepOutcome::Exhausted;
            }
            let remaining = t_limit - self.t;
            let mut h = self.h.min(o.max_step);
            let mut hits_limit = false;
            if h >= remaining * 0.999_999 {
                h = remaining;
                hits_limit = true;
            }
            if h < UNDERFLOW_FACTOR * self.t.abs().max(1e-2) {
                return StepOutcome::Underflow;
            }
            self.steps += 1;
            self.k[0].copy_from_slice(&self.dy);
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..s {
                        acc += A[s][j] * self.k[j][i];
                    }
                    self.ytmp[i] = self.y[i] + h * acc;
                }
                let (head, tail) = self.k.split_at_mut(s);
                let _ = head;
                (self.f)(self.t + C[s] * h, &self.ytmp, &mut tail[0]);
            }
            // stage 7 was evaluated at the fifth-order solution (FSAL)
            self.ynew.copy_from_slice(&self.ytmp);
            let mut err: f64 = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for j in 0..7 {
                    e += E[j] * self.k[j][i];
                }
                let sc = o.abs_tol + o.rel_tol * self.y[i].abs().max(self.ynew[i].abs());
                err = err.max((h * e).abs() / sc);
            }
            let finite = err.is_finite() && self.ynew.iter().all(|v| v.is_finite());
            if finite && err <= 1.0 {
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                let proposed = h * fac;
                std::mem::swap(&mut self.y_prev, &mut self.y);
                std::mem::swap(&mut self.dy_prev, &mut self.dy);
                self.t_prev = self.t;
                self.y.copy_from_slice(&self.ynew);
                self.dy.copy_from_slice(&self.k[6]);
                self.t = if hits_limit { t_limit } else { self.t + h };
                // a clipped final step keeps the controller's own proposal
                self.h = if hits_limit { self.h.max(proposed) } else { proposed };
                return StepOutcome::Accepted;
            }
            let fac = if finite {
                (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
            } else {
                0.2
            };
            self.h = h * fac;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifth_order_weights_are_consistent() {
        let b: f64 = A[6].iter().sum();
        assert!((b - 1.0).abs() < 1e-15);
        let e: f64 = E.iter().sum();
        assert!(e.abs() < 1e-15);
        for (s, row) in A.iter().enumerate() {
            let c: f64 = row.iter().sum();
            assert!((c - C[s]).abs() < 1e-14);
        }
    }

    #[test]
    fn stepper_reaches_limit_exactly() {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        let mut s = Stepper::new(&f, 0.0, &[1.0], None, IntegrationOptions::default());
        while s.t < 1.0 {
            assert_eq!(s.step(1.0), StepOutcome::Accepted);
        }
        assert_eq!(s.t, 1.0);
        assert!((s.y[0] - (-1.0f64).exp()).abs() < 1e-8);
    }
}
