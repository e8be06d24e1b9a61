use std::io;

use serde::{Deserialize, Serialize};

use super::Norm;

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrajectoryStatus {
    /// The requested horizon was reached.
    Complete,
    /// `|x|` exceeded the blow-up threshold and the step size collapsed.
    Escaped { t_escape: f64 },
    /// The step size collapsed without blow-up (stiffness signal) or the
    /// step budget ran out.
    StepFailure { t: f64 },
}

/// Sampled solution with cubic Hermite dense output between samples.
///
/// Each sample stores the derivative entering it and the derivative
/// leaving it; they differ where the right-hand side jumps (input
/// breakpoints, control updates).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    deriv_in: Vec<f64>,
    deriv_out: Vec<f64>,
    status: TrajectoryStatus,
}

impl Trajectory {
    pub fn new(t0: f64, x0: &[f64], f0: &[f64]) -> Self {
        Self {
            dim: x0.len(),
            times: vec![t0],
            states: x0.to_vec(),
            deriv_in: f0.to_vec(),
            deriv_out: f0.to_vec(),
            status: TrajectoryStatus::Complete,
        }
    }

    /// Append a sample; `t` must exceed the last sample time.
    pub fn push(&mut self, t: f64, x: &[f64], f: &[f64]) {
        debug_assert!(t > self.t_end(), "samples must be strictly increasing");
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.deriv_in.extend_from_slice(f);
        self.deriv_out.extend_from_slice(f);
    }

    /// Replace the derivative leaving the last sample (after a jump of the
    /// right-hand side).
    pub fn set_last_deriv_out(&mut self, f: &[f64]) {
        let n = self.dim;
        let start = self.deriv_out.len() - n;
        self.deriv_out[start..].copy_from_slice(f);
    }

    pub(crate) fn set_status(&mut self, status: TrajectoryStatus) {
        self.status = status;
    }

    pub fn status(&self) -> TrajectoryStatus {
        self.status
    }

    pub fn is_complete(&self) -> bool {
        self.status == TrajectoryStatus::Complete
    }

    pub fn escaped(&self) -> Option<f64> {
        match self.status {
            TrajectoryStatus::Escaped { t_escape } => Some(t_escape),
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.times.iter().copied().zip(self.states.chunks(self.dim))
    }

    /// Norms of all samples.
    pub fn norms(&self, norm: Norm) -> Vec<f64> {
        self.states.chunks(self.dim).map(|x| norm.of(x)).collect()
    }

    /// Dense output at `t`, clamped to the sampled interval.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.interpolate_into(t, &mut out);
        out
    }

    pub fn interpolate_into(&self, t: f64, out: &mut [f64]) {
        let n = self.dim;
        if t <= self.times[0] || self.len() == 1 {
            out.copy_from_slice(self.state(0));
            return;
        }
        if t >= self.t_end() {
            out.copy_from_slice(self.final_state());
            return;
        }
        let j = self.times.partition_point(|&s| s <= t);
        let i = j - 1;
        if self.times[i] == t {
            out.copy_from_slice(self.state(i));
            return;
        }
        hermite(
            self.times[i],
            self.state(i),
            &self.deriv_out[i * n..(i + 1) * n],
            self.times[j],
            self.state(j),
            &self.deriv_in[j * n..(j + 1) * n],
            t,
            out,
        );
    }

    /// Derivative entering and leaving sample `i`.
    pub fn derivs(&self, i: usize) -> (&[f64], &[f64]) {
        let n = self.dim;
        (&self.deriv_in[i * n..(i + 1) * n], &self.deriv_out[i * n..(i + 1) * n])
    }

    /// Write `t, x_1, …, x_n` as RFC-4180 CSV with 17 significant digits.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x_{i}")));
        wtr.write_record(&header)?;
        for (t, x) in self.samples() {
            let mut row = vec![fmt17(t)];
            row.extend(x.iter().map(|v| fmt17(*v)));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Float formatted with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn hermite(
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    t1: f64,
    y1: &[f64],
    f1: &[f64],
    t: f64,
    out: &mut [f64],
) {
    let h = t1 - t0;
    let th = (t - t0) / h;
    let th2 = th * th;
    let th3 = th2 * th;
    let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
    let h10 = th3 - 2.0 * th2 + th;
    let h01 = -2.0 * th3 + 3.0 * th2;
    let h11 = th3 - th2;
    for k in 0..out.len() {
        out[k] = h00 * y0[k] + h10 * h * f0[k] + h01 * y1[k] + h11 * h * f1[k];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_cubics() {
        // x(t) = t³ - t, x' = 3t² - 1
        let x = |t: f64| t * t * t - t;
        let dx = |t: f64| 3.0 * t * t - 1.0;
        let mut tr = Trajectory::new(0.0, &[x(0.0)], &[dx(0.0)]);
        tr.push(2.0, &[x(2.0)], &[dx(2.0)]);
        for k in 0..=20 {
            let t = k as f64 * 0.1;
            assert!((tr.interpolate(t)[0] - x(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_has_header() {
        let mut tr = Trajectory::new(0.0, &[1.0, 2.0], &[0.0, 0.0]);
        tr.push(1.0, &[1.5, 2.5], &[0.0, 0.0]);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("t,x_1,x_2"));
        assert_eq!(lines.count(), 2);
    }
}
