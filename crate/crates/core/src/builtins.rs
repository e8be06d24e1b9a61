//! Named example systems with parameters, polynomial right-hand sides,
//! and the reference gains and certificates shipped with each example.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparison::{ComparisonError, ComparisonFn, KLFn};
use crate::dynamics::SystemModel;
use crate::etc::{EtcError, EtcSetup};
use crate::lyapunov::{DissipativeCertificate, ImplicationCertificate, LyapunovFn};
use crate::probe::{IssEstimate, SuperpositionGains};
use crate::smallgain::{Boundary, GainMatrix2, Neighbors, Network, SmallGainError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuiltinError {
    #[error("unknown built-in `{0}` (see `list-builtins`)")]
    Unknown(String),
    #[error("built-in `{name}`: {msg}")]
    Param { name: String, msg: String },
    #[error("polynomial right-hand side: {0}")]
    Polynomial(String),
    #[error(transparent)]
    Comparison(#[from] ComparisonError),
    #[error(transparent)]
    SmallGain(#[from] SmallGainError),
    #[error(transparent)]
    Etc(#[from] EtcError),
}

/// What a built-in name resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    System,
    Etc,
    Network,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuiltinInfo {
    pub name: &'static str,
    pub family: Family,
    pub summary: &'static str,
    /// Parameter names with defaults.
    pub params: &'static [(&'static str, f64)],
    /// Whether the system is ISS (for systems).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iss: Option<bool>,
}

const CATALOG: &[BuiltinInfo] = &[
    BuiltinInfo {
        name: "linear_decay",
        family: Family::System,
        summary: "ẋ = −a·x + u",
        params: &[("a", 1.0)],
        iss: Some(true),
    },
    BuiltinInfo {
        name: "cubic_decay",
        family: Family::System,
        summary: "ẋ = −x³ + u",
        params: &[],
        iss: Some(true),
    },
    BuiltinInfo {
        name: "two_system_pair",
        family: Family::System,
        summary: "ẋ₁ = −x₁ + c12·x₂ + u₁, ẋ₂ = −x₂ + c21·x₁ + u₂",
        params: &[("c12", 0.5), ("c21", 0.5)],
        iss: Some(true),
    },
    BuiltinInfo {
        name: "unstable_linear",
        family: Family::System,
        summary: "ẋ = a·x + u",
        params: &[("a", 1.0)],
        iss: Some(false),
    },
    BuiltinInfo {
        name: "integrator",
        family: Family::System,
        summary: "ẋ = u",
        params: &[],
        iss: Some(false),
    },
    BuiltinInfo {
        name: "bernoulli_counterexample",
        family: Family::System,
        summary: "ẋ₁ = −x₁ + x₂·x₁², ẋ₂ = −x₂ + u (not forward complete)",
        params: &[],
        iss: Some(false),
    },
    BuiltinInfo {
        name: "etc_integrator_plant",
        family: Family::Etc,
        summary: "ẋ = u, k(x) = −x, V = x²/2, α = ξ = r²/2",
        params: &[("sigma", 0.25)],
        iss: None,
    },
    BuiltinInfo {
        name: "line_network",
        family: Family::Network,
        summary: "ẋᵢ = −xᵢ + c·max(|xᵢ₋₁|, |xᵢ₊₁|) + uᵢ, truncated to n components",
        params: &[("c", 0.4), ("n", 50.0), ("periodic", 0.0)],
        iss: None,
    },
];

pub fn list() -> &'static [BuiltinInfo] {
    CATALOG
}

pub fn info(name: &str) -> Result<&'static BuiltinInfo, BuiltinError> {
    CATALOG
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| BuiltinError::Unknown(name.into()))
}

/// Parameters merged over the defaults; unknown keys are rejected.
pub fn resolve_params(name: &str, given: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>, BuiltinError> {
    let b = info(name)?;
    let mut out: BTreeMap<String, f64> = b.params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in given {
        if !out.contains_key(k) {
            return Err(BuiltinError::Param {
                name: name.into(),
                msg: format!("unknown parameter `{k}`"),
            });
        }
        if !v.is_finite() {
            return Err(BuiltinError::Param {
                name: name.into(),
                msg: format!("parameter `{k}` must be finite"),
            });
        }
        out.insert(k.clone(), *v);
    }
    Ok(out)
}

/// `c·Π xᵢ^{x[i]}·Π uⱼ^{u[j]}`; missing exponents are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub c: f64,
    #[serde(default)]
    pub x: Vec<u32>,
    #[serde(default)]
    pub u: Vec<u32>,
}

/// One list of monomials per state component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialSpec {
    pub state_dim: usize,
    pub input_dim: usize,
    pub rhs: Vec<Vec<Monomial>>,
}

/// A system given by built-in name or by polynomial coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Builtin {
        name: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    Polynomial(PolynomialSpec),
}

impl SystemSpec {
    pub fn builtin(name: &str) -> Self {
        SystemSpec::Builtin {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }
}

pub fn polynomial(spec: &PolynomialSpec) -> Result<SystemModel, BuiltinError> {
    let (n, m) = (spec.state_dim, spec.input_dim);
    if n == 0 || m == 0 {
        return Err(BuiltinError::Polynomial("state and input dimensions must be positive".into()));
    }
    if spec.rhs.len() != n {
        return Err(BuiltinError::Polynomial(format!("{} rows for state dimension {n}", spec.rhs.len())));
    }
    for (i, row) in spec.rhs.iter().enumerate() {
        for (k, mono) in row.iter().enumerate() {
            if mono.x.len() > n || mono.u.len() > m || !mono.c.is_finite() {
                return Err(BuiltinError::Polynomial(format!("row {i}, term {k}: bad exponents or coefficient")));
            }
        }
    }
    let rhs = spec.rhs.clone();
    Ok(SystemModel::new("polynomial", n, m, move |x, u, dx| {
        for (d, row) in dx.iter_mut().zip(&rhs) {
            *d = row
                .iter()
                .map(|t| {
                    let px: f64 = t.x.iter().zip(x).map(|(&e, v)| v.powi(e as i32)).product();
                    let pu: f64 = t.u.iter().zip(u).map(|(&e, v)| v.powi(e as i32)).product();
                    t.c * px * pu
                })
                .sum();
        }
    }))
}

fn param(p: &BTreeMap<String, f64>, k: &str) -> f64 {
    p[k]
}

fn positive(name: &str, k: &str, v: f64) -> Result<f64, BuiltinError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(BuiltinError::Param {
            name: name.into(),
            msg: format!("`{k}` must be positive"),
        })
    }
}

pub fn linear_decay(a: f64) -> SystemModel {
    SystemModel::new("linear_decay", 1, 1, move |x, u, dx| dx[0] = -a * x[0] + u[0])
}

pub fn cubic_decay() -> SystemModel {
    SystemModel::new("cubic_decay", 1, 1, |x, u, dx| dx[0] = -x[0] * x[0] * x[0] + u[0])
}

pub fn unstable_linear(a: f64) -> SystemModel {
    SystemModel::new("unstable_linear", 1, 1, move |x, u, dx| dx[0] = a * x[0] + u[0])
}

pub fn integrator() -> SystemModel {
    SystemModel::new("integrator", 1, 1, |_, u, dx| dx[0] = u[0])
}

/// Two ISS subsystems coupled by a loop whose escape time is finite when
/// `x₁(0)·x₂(0) > 2` and `u ≡ 0`.
pub fn bernoulli_counterexample() -> SystemModel {
    SystemModel::new("bernoulli_counterexample", 2, 1, |x, u, dx| {
        dx[0] = -x[0] + x[1] * x[0] * x[0];
        dx[1] = -x[1] + u[0];
    })
}

/// Escape time of [`bernoulli_counterexample`] under `u ≡ 0`: with
/// `z = 1/x₁`, `ż = z − x₂(0)e^{−t}` and `z` vanishes at
/// `t = −½·ln(1 − 2/(x₁(0)x₂(0)))`. `None` when the solution exists for
/// all time.
pub fn bernoulli_escape_time(x1: f64, x2: f64) -> Option<f64> {
    let p = x1 * x2;
    (x1 > 0.0 && p > 2.0).then(|| -0.5 * (1.0 - 2.0 / p).ln())
}

pub fn two_system_pair(c12: f64, c21: f64) -> SystemModel {
    SystemModel::new("two_system_pair", 2, 2, move |x, u, dx| {
        dx[0] = -x[0] + c12 * x[1] + u[0];
        dx[1] = -x[1] + c21 * x[0] + u[1];
    })
}

/// Gains of the two subsystems of [`two_system_pair`]: each is
/// `|xᵢ(t)| ≤ e^{−t}|xᵢ(0)| + cᵢⱼ‖xⱼ‖ + ‖uᵢ‖`.
pub fn two_system_gains(c12: f64, c21: f64) -> Result<GainMatrix2, BuiltinError> {
    let g = |c: f64| if c == 0.0 { Ok(ComparisonFn::zero()) } else { ComparisonFn::linear(c) };
    Ok(GainMatrix2::new(
        g(c12.abs())?,
        g(c21.abs())?,
        ComparisonFn::identity(),
        ComparisonFn::identity(),
    )?)
}

/// Resolve a system spec into a model.
pub fn system(spec: &SystemSpec) -> Result<SystemModel, BuiltinError> {
    let (name, params) = match spec {
        SystemSpec::Polynomial(p) => return polynomial(p),
        SystemSpec::Builtin { name, params } => (name.as_str(), resolve_params(name, params)?),
    };
    let b = info(name)?;
    if b.family != Family::System {
        return Err(BuiltinError::Param {
            name: name.into(),
            msg: format!("is a {:?} built-in, not a plain system", b.family),
        });
    }
    Ok(match name {
        "linear_decay" => linear_decay(positive(name, "a", param(&params, "a"))?),
        "cubic_decay" => cubic_decay(),
        "unstable_linear" => unstable_linear(positive(name, "a", param(&params, "a"))?),
        "integrator" => integrator(),
        "bernoulli_counterexample" => bernoulli_counterexample(),
        "two_system_pair" => two_system_pair(param(&params, "c12"), param(&params, "c21")),
        _ => unreachable!("catalog and constructors agree"),
    })
}

/// Reference gains for the probe suite of a built-in system. For ISS
/// systems they are valid; for the others they are the natural candidates
/// that the probes must falsify.
pub fn reference_gains(spec: &SystemSpec) -> Result<SuperpositionGains, BuiltinError> {
    let id = ComparisonFn::identity;
    let lin = ComparisonFn::linear;
    let SystemSpec::Builtin { name, params } = spec else {
        return Ok(SuperpositionGains {
            estimate: IssEstimate {
                beta: KLFn::exponential(1.0, 1.0)?,
                gamma: id(),
            },
            uls_sigma: id(),
            uls_gamma: id(),
            uls_radius: 1.0,
            lim_gamma: id(),
        });
    };
    let p = resolve_params(name, params)?;
    Ok(match name.as_str() {
        "linear_decay" => {
            let a = positive(name, "a", p["a"])?;
            SuperpositionGains {
                estimate: IssEstimate {
                    beta: KLFn::exponential(1.0, a)?,
                    gamma: lin(1.0 / a)?,
                },
                uls_sigma: id(),
                uls_gamma: lin(1.0 / a)?,
                uls_radius: 1.0,
                lim_gamma: lin(1.0 / a)?,
            }
        }
        "cubic_decay" => {
            // |x₀|/√(1+2x₀²t) ≤ q(|x₀|/√(1+t)) with q(s) = s + √s, and the
            // input part stays below (2‖u‖)^{1/3}
            let q = ComparisonFn::power(1.0, 0.5)?.id_plus()?;
            let gamma = ComparisonFn::power(2f64.powf(1.0 / 3.0), 1.0 / 3.0)?;
            SuperpositionGains {
                estimate: IssEstimate {
                    beta: KLFn::nested(q, ComparisonFn::reciprocal(1.0, 0.5)?)?,
                    gamma: gamma.clone(),
                },
                uls_sigma: id(),
                uls_gamma: gamma.clone(),
                uls_radius: 1.0,
                lim_gamma: gamma,
            }
        }
        "two_system_pair" => {
            // W = max|xᵢ| obeys D⁺W ≤ −λW + ‖u‖ with λ = 1 − max cᵢⱼ
            let lambda = 1.0 - p["c12"].abs().max(p["c21"].abs());
            if !(lambda > 0.0) {
                return Err(BuiltinError::Param {
                    name: name.clone(),
                    msg: "reference gains need max(|c12|, |c21|) < 1".into(),
                });
            }
            let s2 = 2f64.sqrt();
            SuperpositionGains {
                estimate: IssEstimate {
                    beta: KLFn::exponential(s2, lambda)?,
                    gamma: lin(s2 / lambda)?,
                },
                uls_sigma: lin(s2)?,
                uls_gamma: lin(s2 / lambda)?,
                uls_radius: 1.0,
                lim_gamma: lin(s2 / lambda)?,
            }
        }
        "unstable_linear" | "integrator" | "bernoulli_counterexample" => SuperpositionGains {
            estimate: IssEstimate {
                beta: KLFn::exponential(1.0, 1.0)?,
                gamma: id(),
            },
            uls_sigma: id(),
            uls_gamma: id(),
            uls_radius: 1.0,
            lim_gamma: id(),
        },
        other => {
            return Err(BuiltinError::Param {
                name: other.into(),
                msg: "no reference gains (not a plain system)".into(),
            })
        }
    })
}

/// `V = x²/2`, `α(v) = v`, `ξ(r) = r²/2` for [`linear_decay`] with
/// `a = 1`.
pub fn linear_decay_certificate() -> Result<DissipativeCertificate, BuiltinError> {
    let half_sq = ComparisonFn::power(0.5, 2.0)?;
    Ok(DissipativeCertificate {
        v: LyapunovFn::Quadratic { c: 0.5 },
        psi1: half_sq.clone(),
        psi2: half_sq.clone(),
        alpha: ComparisonFn::identity(),
        xi: half_sq,
    })
}

/// The event-triggered integrator: `ẋ = u`, `u = −x(t_k)`,
/// `V = x²/2`, `α(r) = ξ(r) = r²/2`.
pub fn etc_integrator_plant(sigma: f64) -> Result<EtcSetup, BuiltinError> {
    let half_sq = ComparisonFn::power(0.5, 2.0)?;
    Ok(EtcSetup::new(
        integrator(),
        |x, u| u[0] = -x[0],
        LyapunovFn::Quadratic { c: 0.5 },
        half_sq.clone(),
        half_sq,
        sigma,
    )?)
}

pub fn line_network(n: usize, c: f64, boundary: Boundary) -> Result<Network, BuiltinError> {
    Ok(Network::new(
        "line_network",
        n,
        1,
        1,
        Neighbors::Stencil {
            offsets: vec![-1, 1],
            boundary,
        },
        move |x, bar, u, dx| dx[0] = -x[0] + c * bar[0].abs().max(bar[1].abs()) + u[0],
    )?)
}

/// `Vᵢ = |xᵢ|`, `γᵢⱼ = (c/0.8)·s`, `γᵢᵤ = 10s`, `α̃ = 0.1s`. Under the
/// premise `|xⱼ| < 0.8|xᵢ|/c` and `|uᵢ| < |xᵢ|/10`,
/// `V̇ᵢ ≤ −|xᵢ| + 0.8|xᵢ| + 0.1|xᵢ| = −0.1|xᵢ|`.
pub fn line_network_certificate(c: f64) -> Result<ImplicationCertificate, BuiltinError> {
    let g = if c == 0.0 {
        ComparisonFn::zero()
    } else {
        ComparisonFn::linear(c.abs() / 0.8)?
    };
    Ok(ImplicationCertificate {
        v: LyapunovFn::Abs { c: 1.0 },
        psi1: ComparisonFn::identity(),
        psi2: ComparisonFn::identity(),
        gains: vec![g.clone(), g],
        gamma_u: ComparisonFn::linear(10.0)?,
        alpha_tilde: ComparisonFn::linear(0.1)?,
    })
}

/// Resolve `line_network` parameters.
pub fn line_network_from(params: &BTreeMap<String, f64>) -> Result<(Network, ImplicationCertificate), BuiltinError> {
    let p = resolve_params("line_network", params)?;
    let n = p["n"];
    if !(n >= 1.0 && n.fract() == 0.0) {
        return Err(BuiltinError::Param {
            name: "line_network".into(),
            msg: "`n` must be a positive integer".into(),
        });
    }
    let boundary = if p["periodic"] != 0.0 { Boundary::Periodic } else { Boundary::Zero };
    Ok((line_network(n as usize, p["c"], boundary)?, line_network_certificate(p["c"])?))
}
