//! Small-gain condition for two interconnected systems, in cyclic and in
//! operator form.

use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonFn, Kind};
use crate::sampling;

use super::SmallGainError;

/// Internal gains `γ₁₂`, `γ₂₁` and external gains `γ₁`, `γ₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix2 {
    pub g12: ComparisonFn,
    pub g21: ComparisonFn,
    pub g1: ComparisonFn,
    pub g2: ComparisonFn,
}

impl GainMatrix2 {
    pub fn new(g12: ComparisonFn, g21: ComparisonFn, g1: ComparisonFn, g2: ComparisonFn) -> Result<Self, SmallGainError> {
        for g in [&g12, &g21, &g1, &g2] {
            if g.kind() == Kind::L {
                return Err(SmallGainError::Invalid("gains must be class K or zero".into()));
            }
        }
        Ok(Self { g12, g21, g1, g2 })
    }

    /// `(id+ρ)∘γ₁₂∘(id+ρ)∘γ₂₁(r)`.
    pub fn cycle(&self, rho: &ComparisonFn, r: f64) -> f64 {
        let a = self.g21.value(r);
        let a = a + rho.value(a);
        let b = self.g12.value(a);
        b + rho.value(b)
    }
}

/// Grid of the cyclic check: 200 log-spaced points on `[1e-6, 1e6]`.
pub fn default_r_grid() -> Vec<f64> {
    sampling::log_grid(1e-6, 1e6, 200)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgc2Verdict {
    pub holds_on_grid: bool,
    /// Smallest grid point with `cycle(r) ≥ r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation_r: Option<f64>,
    /// Exact decision `(1+c_ρ)²·c₁₂·c₂₁ < 1` when all three are linear
    /// (or a gain is zero).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<bool>,
}

impl Sgc2Verdict {
    /// The exact decision when available, else the grid decision.
    pub fn holds(&self) -> bool {
        self.exact.unwrap_or(self.holds_on_grid)
    }
}

fn slope(g: &ComparisonFn) -> Option<f64> {
    if g.is_zero() {
        Some(0.0)
    } else {
        g.linear_slope()
    }
}

/// Check `(id+ρ)∘γ₁₂∘(id+ρ)∘γ₂₁(r) < r` on `r_grid`.
pub fn check_sgc_2(g: &GainMatrix2, rho: &ComparisonFn, r_grid: &[f64]) -> Result<Sgc2Verdict, SmallGainError> {
    if rho.kind() != Kind::Kinf {
        return Err(SmallGainError::Invalid("ρ must be class K∞".into()));
    }
    let violation_r = r_grid.iter().copied().find(|&r| r > 0.0 && g.cycle(rho, r) >= r);
    let exact = match (slope(&g.g12), slope(&g.g21), rho.linear_slope()) {
        (Some(a), Some(b), Some(c)) => Some((1.0 + c) * (1.0 + c) * a * b < 1.0),
        _ => None,
    };
    Ok(Sgc2Verdict {
        holds_on_grid: violation_r.is_none(),
        violation_r,
        exact,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorFormVerdict {
    /// For every sampled `s ≠ 0` some component of `(id+ρ)∘Γ(s)` is
    /// below the matching component of `s`.
    pub holds: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<[f64; 2]>,
    pub samples: usize,
}

/// Sample points of `ℝ²₊ \ {0}`: the quarter circle scaled by log-spaced
/// magnitudes, plus the graph rays `s₂ = (id+ρ)γ₂₁(s₁)` and
/// `s₁ = (id+ρ)γ₁₂(s₂)` on which linear violations sit.
pub fn operator_form_samples(g: &GainMatrix2, rho: &ComparisonFn) -> Vec<[f64; 2]> {
    let mags = sampling::log_grid(1e-6, 1e6, 25);
    let mut out = Vec::new();
    for k in 0..=90 {
        let th = std::f64::consts::FRAC_PI_2 * k as f64 / 90.0;
        for &m in &mags {
            out.push([m * th.cos(), m * th.sin()]);
        }
    }
    let idp = |v: f64| v + rho.value(v);
    for t in default_r_grid() {
        out.push([t, idp(g.g21.value(t))]);
        out.push([idp(g.g12.value(t)), t]);
    }
    out.retain(|s| s[0] > 0.0 || s[1] > 0.0);
    out
}

/// Check `(id+ρ)∘Γ(s) ≱ s` with `Γ(s) = (γ₁₂(s₂), γ₂₁(s₁))`.
pub fn sgc_operator_form(g: &GainMatrix2, rho: &ComparisonFn, samples: &[[f64; 2]]) -> OperatorFormVerdict {
    let idp = |v: f64| v + rho.value(v);
    let violation = samples.iter().copied().find(|s| {
        if s[0] <= 0.0 && s[1] <= 0.0 {
            return false;
        }
        let a = idp(g.g12.value(s[1]));
        let b = idp(g.g21.value(s[0]));
        a >= s[0] && b >= s[1]
    });
    OperatorFormVerdict {
        holds: violation.is_none(),
        violation,
        samples: samples.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn lin(c: f64) -> ComparisonFn {
        if c == 0.0 {
            ComparisonFn::zero()
        } else {
            ComparisonFn::linear(c).unwrap()
        }
    }

    fn pair(a: f64, b: f64) -> GainMatrix2 {
        GainMatrix2::new(lin(a), lin(b), lin(1.0), lin(1.0)).unwrap()
    }

    #[test]
    fn linear_examples() {
        let v = check_sgc_2(&pair(0.5, 0.5), &lin(0.5), &default_r_grid()).unwrap();
        assert!(v.holds_on_grid && v.exact == Some(true));
        let v = check_sgc_2(&pair(2.0, 1.0), &lin(0.01), &default_r_grid()).unwrap();
        assert!(!v.holds_on_grid && v.exact == Some(false));
        assert_eq!(v.violation_r, default_r_grid().first().copied());
    }

    #[test]
    fn saturating_gain_decided_on_grid() {
        // cycle(r) = 1.5·2·(1.5r)/(1 + 1.5r): violated below r = 7/3 only
        let g = GainMatrix2::new(ComparisonFn::saturation(2.0).unwrap(), lin(1.0), lin(1.0), lin(1.0)).unwrap();
        let rho = lin(0.5);
        let grid = default_r_grid();
        let v = check_sgc_2(&g, &rho, &grid).unwrap();
        assert_eq!(v.exact, None);
        let brute = grid.iter().find(|&&r| 1.5 * 2.0 * 1.5 * r / (1.0 + 1.5 * r) >= r).copied();
        assert_eq!(v.violation_r, brute);
        assert!(!v.holds());
    }

    #[test]
    fn operator_form_finds_eigen_ray() {
        let g = pair(2.0, 1.0);
        let rho = lin(0.25);
        let v = sgc_operator_form(&g, &rho, &operator_form_samples(&g, &rho));
        assert!(!v.holds);
        let s = v.violation.unwrap();
        assert!(1.25 * 2.0 * s[1] >= s[0] && 1.25 * s[0] >= s[1]);
        let g = pair(0.5, 0.5);
        assert!(sgc_operator_form(&g, &lin(0.5), &operator_form_samples(&g, &lin(0.5))).holds);
    }

    #[test]
    fn forms_agree_on_random_linear_instances() {
        let mut rng = sampling::rng(11);
        for _ in 0..50 {
            let g = pair(rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0);
            let rho = lin(0.01 + rng.random::<f64>());
            let c = check_sgc_2(&g, &rho, &default_r_grid()).unwrap();
            let o = sgc_operator_form(&g, &rho, &operator_form_samples(&g, &rho));
            assert_eq!(c.exact, Some(c.holds_on_grid));
            assert_eq!(o.holds, c.holds_on_grid);
        }
    }
}
