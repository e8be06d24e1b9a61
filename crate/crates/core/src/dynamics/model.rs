use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sampling;

/// Vector norm used for states or input values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Norm {
    Euclidean,
    /// Maximum over consecutive blocks of the Euclidean norm of each block:
    /// the ℓ∞-type norm of a network state with `block`-dimensional
    /// components.
    BlockMax { block: usize },
}

impl Norm {
    pub fn of(&self, v: &[f64]) -> f64 {
        match *self {
            Norm::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::BlockMax { block } => v
                .chunks(block.max(1))
                .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
        }
    }
}

pub type Rhs = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type LipschitzHint = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Right-hand side `f(x, u)` of `ẋ = f(x, u)` with dimensions and norms.
#[derive(Clone)]
pub struct SystemModel {
    name: String,
    state_dim: usize,
    input_dim: usize,
    rhs: Rhs,
    lipschitz_hint: Option<LipschitzHint>,
    state_norm: Norm,
    input_norm: Norm,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("state_norm", &self.state_norm)
            .finish_non_exhaustive()
    }
}

impl SystemModel {
    pub fn new<F>(name: impl Into<String>, state_dim: usize, input_dim: usize, rhs: F) -> Self
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        assert!(state_dim > 0 && input_dim > 0, "dimensions must be positive");
        Self {
            name: name.into(),
            state_dim,
            input_dim,
            rhs: Arc::new(rhs),
            lipschitz_hint: None,
            state_norm: Norm::Euclidean,
            input_norm: Norm::Euclidean,
        }
    }

    /// Attach `C ↦ L(C)`, a Lipschitz bound of `f` in `x` on the ball of
    /// radius `C` (inputs also bounded by `C`).
    pub fn with_lipschitz_hint<L>(mut self, hint: L) -> Self
    where
        L: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.lipschitz_hint = Some(Arc::new(hint));
        self
    }

    pub fn with_norms(mut self, state_norm: Norm, input_norm: Norm) -> Self {
        self.state_norm = state_norm;
        self.input_norm = input_norm;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn state_norm(&self) -> Norm {
        self.state_norm
    }

    pub fn input_norm(&self) -> Norm {
        self.input_norm
    }

    #[inline]
    pub fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        (self.rhs)(x, u, dx)
    }

    pub fn eval_vec(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.state_dim];
        self.eval(x, u, &mut dx);
        dx
    }

    /// Sample pairs in the ball of radius `c` and return the largest ratio
    /// `|f(y,v) − f(x,v)| / (L(c)|y − x|)`; values above 1 refute the hint.
    /// `None` when no hint is attached.
    pub fn lipschitz_hint_ratio<R: Rng>(&self, c: f64, samples: usize, rng: &mut R) -> Option<f64> {
        let hint = self.lipschitz_hint.as_ref()?;
        let l = hint(c);
        let mut worst: f64 = 0.0;
        let mut fx = vec![0.0; self.state_dim];
        let mut fy = vec![0.0; self.state_dim];
        for _ in 0..samples {
            let x = sampling::in_ball(rng, self.state_dim, c);
            let y = sampling::in_ball(rng, self.state_dim, c);
            let v = sampling::in_ball(rng, self.input_dim, c);
            self.eval(&x, &v, &mut fx);
            self.eval(&y, &v, &mut fy);
            let diff: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
            let dxy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let den = l * self.state_norm.of(&dxy);
            if den > 0.0 {
                worst = worst.max(self.state_norm.of(&diff) / den);
            }
        }
        Some(worst)
    }

    /// Finite-perturbation continuity spot check: the largest
    /// `|f(x+δ, u) − f(x, u)|` over samples with `|δ| ≤ delta`.
    pub fn continuity_defect<R: Rng>(&self, radius: f64, delta: f64, samples: usize, rng: &mut R) -> f64 {
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x = sampling::in_ball(rng, self.state_dim, radius);
            let u = sampling::in_ball(rng, self.input_dim, radius);
            let d = sampling::in_ball(rng, self.state_dim, delta);
            let xp: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
            let f0 = self.eval_vec(&x, &u);
            let f1 = self.eval_vec(&xp, &u);
            let diff: Vec<f64> = f0.iter().zip(&f1).map(|(a, b)| a - b).collect();
            worst = worst.max(self.state_norm.of(&diff));
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn norms() {
        assert_eq!(Norm::Euclidean.of(&[3.0, 4.0]), 5.0);
        assert_eq!(Norm::BlockMax { block: 1 }.of(&[3.0, -4.0, 1.0]), 4.0);
        assert_eq!(Norm::BlockMax { block: 2 }.of(&[3.0, 4.0, 1.0, 0.0]), 5.0);
    }

    #[test]
    fn lipschitz_hint_is_checked() {
        let cubic = SystemModel::new("cubic", 1, 1, |x, u, dx| dx[0] = -x[0].powi(3) + u[0]);
        let good = cubic.clone().with_lipschitz_hint(|c| 3.0 * c * c);
        let bad = cubic.with_lipschitz_hint(|_| 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(good.lipschitz_hint_ratio(2.0, 500, &mut rng).unwrap() <= 1.0);
        assert!(bad.lipschitz_hint_ratio(2.0, 500, &mut rng).unwrap() > 1.0);
        assert!(good.continuity_defect(2.0, 1e-6, 100, &mut rng) < 1e-4);
    }
}
