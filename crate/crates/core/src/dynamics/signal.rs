use serde::{Deserialize, Serialize};

use super::{DynamicsError, Norm};

/// One piece of an input signal: `value + rate·(t − start)` on
/// `[start, next start)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub start: f64,
    pub value: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<Vec<f64>>,
}

impl Piece {
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.value);
        if let Some(rate) = &self.rate {
            let dt = t - self.start;
            for (o, r) in out.iter_mut().zip(rate) {
                *o += r * dt;
            }
        }
    }
}

#[derive(Deserialize)]
struct RawSignal {
    dim: usize,
    pieces: Vec<Piece>,
}

/// Piecewise right-continuous, bounded input `u: ℝ₊ → ℝᵐ`.
///
/// Each piece is affine in time, so the supremum norm over any interval is
/// attained at piece endpoints and is computed exactly. The final piece
/// must be constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSignal")]
pub struct InputSignal {
    dim: usize,
    pieces: Vec<Piece>,
    #[serde(skip)]
    bound: f64,
}

impl TryFrom<RawSignal> for InputSignal {
    type Error = DynamicsError;

    fn try_from(raw: RawSignal) -> Result<Self, DynamicsError> {
        InputSignal::from_pieces(raw.dim, raw.pieces)
    }
}

impl InputSignal {
    pub fn from_pieces(dim: usize, pieces: Vec<Piece>) -> Result<Self, DynamicsError> {
        let bad = |msg: String| Err(DynamicsError::InvalidInput(msg));
        if dim == 0 {
            return bad("input dimension must be positive".into());
        }
        if pieces.is_empty() || pieces[0].start != 0.0 {
            return bad("first piece must start at t = 0".into());
        }
        for (k, p) in pieces.iter().enumerate() {
            if p.value.len() != dim || p.rate.as_ref().is_some_and(|r| r.len() != dim) {
                return bad(format!("piece {k} has wrong dimension"));
            }
            if p.value.iter().chain(p.rate.iter().flatten()).any(|v| !v.is_finite()) {
                return bad(format!("piece {k} has a non-finite entry"));
            }
            if k > 0 && p.start <= pieces[k - 1].start {
                return bad(format!("breakpoints not strictly increasing at piece {k}"));
            }
        }
        let last = pieces.last().expect("non-empty");
        if last.rate.as_ref().is_some_and(|r| r.iter().any(|v| *v != 0.0)) {
            return bad("final piece must be constant".into());
        }
        let mut sig = Self {
            dim,
            pieces,
            bound: 0.0,
        };
        sig.bound = sig.sup_norm_with(Norm::Euclidean, 0.0, f64::INFINITY);
        Ok(sig)
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(vec![0.0; dim])
    }

    pub fn constant(value: Vec<f64>) -> Self {
        let dim = value.len();
        Self::from_pieces(
            dim,
            vec![Piece {
                start: 0.0,
                value,
                rate: None,
            }],
        )
        .expect("constant signal is valid")
    }

    /// Piecewise-constant signal taking `values[k]` on `[starts[k], starts[k+1])`.
    pub fn piecewise_constant(starts: &[f64], values: Vec<Vec<f64>>) -> Result<Self, DynamicsError> {
        if starts.len() != values.len() || values.is_empty() {
            return Err(DynamicsError::InvalidInput(
                "starts and values must have equal, non-zero length".into(),
            ));
        }
        let dim = values[0].len();
        let pieces = starts
            .iter()
            .zip(values)
            .map(|(&start, value)| Piece {
                start,
                value,
                rate: None,
            })
            .collect();
        Self::from_pieces(dim, pieces)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Breakpoints `τ₀ = 0 < τ₁ < …`.
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.pieces.iter().map(|p| p.start)
    }

    /// Euclidean `‖u‖∞`, cached at construction.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub(crate) fn piece_index(&self, t: f64) -> usize {
        self.pieces.partition_point(|p| p.start <= t).max(1) - 1
    }

    pub(crate) fn piece(&self, k: usize) -> &Piece {
        &self.pieces[k]
    }

    /// Right-continuous value `u(t)`.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        self.pieces[self.piece_index(t)].eval_into(t, out);
    }

    /// Euclidean `‖u‖_[a,b]`.
    pub fn sup_norm(&self, a: f64, b: f64) -> f64 {
        self.sup_norm_with(Norm::Euclidean, a, b)
    }

    /// `ess sup_{t∈[a,b]} ‖u(t)‖` in the given norm. For `a == b` this is
    /// the norm of `u(a)`.
    pub fn sup_norm_with(&self, norm: Norm, a: f64, b: f64) -> f64 {
        let mut buf = vec![0.0; self.dim];
        if b <= a {
            self.eval_into(a, &mut buf);
            return norm.of(&buf);
        }
        let mut best: f64 = 0.0;
        for (k, p) in self.pieces.iter().enumerate() {
            let end = self.pieces.get(k + 1).map_or(f64::INFINITY, |q| q.start);
            let lo = p.start.max(a);
            let hi = end.min(b);
            if hi <= lo {
                continue;
            }
            p.eval_into(lo, &mut buf);
            best = best.max(norm.of(&buf));
            if p.rate.is_some() && hi.is_finite() {
                p.eval_into(hi, &mut buf);
                best = best.max(norm.of(&buf));
            }
        }
        best
    }

    /// The same signal shifted so that time `t0` becomes time 0.
    pub fn shifted(&self, t0: f64) -> Self {
        let k0 = self.piece_index(t0);
        let mut pieces = Vec::with_capacity(self.pieces.len() - k0);
        for p in &self.pieces[k0..] {
            let mut value = vec![0.0; self.dim];
            let start = p.start.max(t0);
            p.eval_into(start, &mut value);
            pieces.push(Piece {
                start: start - t0,
                value,
                rate: p.rate.clone(),
            });
        }
        Self::from_pieces(self.dim, pieces).expect("shift preserves validity")
    }
}
