//! ISS Lyapunov certificates in dissipative and implication form, Dini
//! derivatives along solutions, and sampled checks of the defining
//! inequalities.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparison::{ComparisonError, ComparisonFn, KLFn};
use crate::dynamics::{integrate, DynamicsError, InputSignal, IntegrationOptions, Norm, SystemModel};
use crate::probe::{IssEstimate, ProbeReport, Property, SamplingBudget, Witness};
use crate::sampling;

/// Slack by which an implication premise must hold before the conclusion
/// is demanded.
pub const PREMISE_MARGIN: f64 = 1e-6;

/// Relative agreement required between the Dini estimate and `∇V·f`.
pub const GRADIENT_AGREEMENT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Comparison(#[from] ComparisonError),
    #[error("V is not finite along the probe at h = {h}")]
    NonFinite { h: f64 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Candidate Lyapunov function, radial in the Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LyapunovFn {
    /// `c·|x|²`
    Quadratic { c: f64 },
    /// `c·|x|`, differentiable away from 0
    Abs { c: f64 },
    /// `Σ_k coeffs[k]·|x|^(k+1)`
    RadialPolynomial { coeffs: Vec<f64> },
}

impl LyapunovFn {
    pub fn value(&self, x: &[f64]) -> f64 {
        let r = Norm::Euclidean.of(x);
        match self {
            LyapunovFn::Quadratic { c } => c * r * r,
            LyapunovFn::Abs { c } => c * r,
            LyapunovFn::RadialPolynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| a * r.powi(k as i32 + 1))
                .sum(),
        }
    }

    /// `∇V(x)`, `None` where V is not differentiable.
    pub fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let r = Norm::Euclidean.of(x);
        let scale = match self {
            LyapunovFn::Quadratic { c } => 2.0 * c,
            LyapunovFn::Abs { c } => {
                if r == 0.0 {
                    return None;
                }
                c / r
            }
            LyapunovFn::RadialPolynomial { coeffs } => {
                if r == 0.0 {
                    // smooth at 0 only without the linear term
                    if coeffs.first().copied().unwrap_or(0.0) != 0.0 {
                        return None;
                    }
                    return Some(vec![0.0; x.len()]);
                }
                // dV/dr / r
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, a)| (k + 1) as f64 * a * r.powi(k as i32 - 1))
                    .sum()
            }
        };
        Some(x.iter().map(|v| scale * v).collect())
    }

    /// `∇V(x)·f(x, u)`.
    pub fn lie_derivative(&self, sys: &SystemModel, x: &[f64], u: &[f64]) -> Option<f64> {
        let g = self.gradient(x)?;
        let f = sys.eval_vec(x, u);
        Some(g.iter().zip(&f).map(|(a, b)| a * b).sum())
    }
}

/// Numerical upper-right Dini derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiniEstimate {
    /// Largest extrapolated value on the tail.
    pub value: f64,
    /// Difference quotients `(V(φ(h)) − V(x))/h` for the supplied `h`.
    pub quotients: Vec<f64>,
    /// `∇V(x)·f(x, u(0))` when the gradient exists.
    pub gradient_value: Option<f64>,
    /// Whether the two agree within [`GRADIENT_AGREEMENT`].
    pub gradient_agrees: Option<bool>,
}

/// Default step sequence `10⁻², …, 10⁻⁶`.
pub fn default_h_seq() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
}

fn probe_options() -> IntegrationOptions {
    IntegrationOptions::with_tolerances(1e-13, 1e-15)
}

/// Upper-right Dini derivative of V along `φ(·, x, u)` at `t = 0`.
///
/// Difference quotients on `h_seq` are extrapolated to `h → 0` (linear
/// extrapolation on the last two pairs, quadratic on the last three) and
/// the largest extrapolated value is returned.
pub fn dini_derivative(
    sys: &SystemModel,
    v: &LyapunovFn,
    x: &[f64],
    u: &InputSignal,
    h_seq: &[f64],
) -> Result<DiniEstimate, LyapunovError> {
    if h_seq.len() < 3 || h_seq.windows(2).any(|w| !(w[1] < w[0])) || !(h_seq[h_seq.len() - 1] > 0.0) {
        return Err(LyapunovError::InvalidRequest(
            "h_seq needs at least three decreasing positive steps".into(),
        ));
    }
    if *h_seq.last().expect("non-empty") > 1e-6 {
        return Err(LyapunovError::InvalidRequest("h_seq must reach 1e-6".into()));
    }
    let v0 = v.value(x);
    if !v0.is_finite() {
        return Err(LyapunovError::NonFinite { h: 0.0 });
    }
    let opts = probe_options();
    let mut quotients = Vec::with_capacity(h_seq.len());
    for &h in h_seq {
        let tr = integrate(sys, x, u, h, &opts)?;
        if !tr.is_complete() {
            return Err(LyapunovError::NonFinite { h });
        }
        let vh = v.value(tr.final_state());
        if !vh.is_finite() {
            return Err(LyapunovError::NonFinite { h });
        }
        quotients.push((vh - v0) / h);
    }
    let n = h_seq.len();
    let (h1, h2, h3) = (h_seq[n - 3], h_seq[n - 2], h_seq[n - 1]);
    let (q1, q2, q3) = (quotients[n - 3], quotients[n - 2], quotients[n - 1]);
    // Neville's scheme evaluated at h = 0
    let r12 = (h1 * q2 - h2 * q1) / (h1 - h2);
    let r23 = (h2 * q3 - h3 * q2) / (h2 - h3);
    let r123 = (h1 * r23 - h3 * r12) / (h1 - h3);
    let value = r12.max(r23).max(r123);
    let gradient_value = v.lie_derivative(sys, x, &u.at(0.0));
    let gradient_agrees =
        gradient_value.map(|g| (value - g).abs() <= GRADIENT_AGREEMENT * g.abs().max(1.0));
    Ok(DiniEstimate {
        value,
        quotients,
        gradient_value,
        gradient_agrees,
    })
}

/// Dissipative-form ISS Lyapunov function:
/// `ψ₁(|x|) ≤ V(x) ≤ ψ₂(|x|)` and `V̇ ≤ −α(V(x)) + ξ(‖u‖)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipativeCertificate {
    pub v: LyapunovFn,
    pub psi1: ComparisonFn,
    pub psi2: ComparisonFn,
    pub alpha: ComparisonFn,
    pub xi: ComparisonFn,
}

/// Sandwich and decay verdicts, reported separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipativeReport {
    pub sandwich: ProbeReport,
    pub decay: ProbeReport,
}

impl DissipativeReport {
    pub fn passes(&self) -> bool {
        self.sandwich.passes() && self.decay.passes()
    }
}

fn state_sample(rng: &mut sampling::SampleRng, n: usize, radius: f64) -> Vec<f64> {
    if rng.random::<bool>() {
        sampling::on_sphere(rng, n, radius)
    } else {
        sampling::in_ball(rng, n, radius)
    }
}

/// Re-evaluate the decay inequality at a dissipative witness `(x, u)`.
/// Returns `(observed, bound)`.
pub fn dissipative_decay_at(
    sys: &SystemModel,
    cert: &DissipativeCertificate,
    x: &[f64],
    u: &InputSignal,
) -> Result<(f64, f64), LyapunovError> {
    let d = dini_derivative(sys, &cert.v, x, u, &default_h_seq())?;
    let bound = -cert.alpha.value(cert.v.value(x)) + cert.xi.value(u.sup_norm_with(sys.input_norm(), 0.0, 0.0));
    Ok((d.value, bound))
}

/// Sample states on the budget's balls and constant inputs of the budget's
/// magnitudes; check the sandwich and the decay inequality with the Dini
/// derivative. Only `u(0)` enters the derivative, so constant inputs cover
/// the inequality.
pub fn check_dissipative(
    sys: &SystemModel,
    cert: &DissipativeCertificate,
    budget: &SamplingBudget,
) -> Result<DissipativeReport, LyapunovError> {
    let n = budget.samples;
    let radii = &budget.radii;
    let mags = &budget.magnitudes;
    let rows: Vec<Result<(Option<Witness>, Option<Witness>), LyapunovError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::stream(budget.seed, i as u64);
            let x = state_sample(&mut rng, sys.state_dim(), radii[i % radii.len()]);
            let m = mags[(i / radii.len()) % mags.len()];
            let u = InputSignal::constant(sampling::on_sphere(&mut rng, sys.input_dim(), m));
            let r = Norm::Euclidean.of(&x);
            let vx = cert.v.value(&x);
            let lo = cert.psi1.value(r);
            let hi = cert.psi2.value(r);
            let sandwich = if lo - vx > budget.tol(vx) {
                Some((lo, vx))
            } else if vx - hi > budget.tol(hi) {
                Some((vx, hi))
            } else {
                None
            }
            .map(|(observed, bound)| Witness {
                x0: x.clone(),
                input: u.clone(),
                t: 0.0,
                t_ref: None,
                observed,
                bound,
                margin: observed - bound,
            });
            let (observed, bound) = dissipative_decay_at(sys, cert, &x, &u)?;
            let decay = (observed - bound > budget.tol(bound)).then(|| Witness {
                x0: x,
                input: u,
                t: 0.0,
                t_ref: None,
                observed,
                bound,
                margin: observed - bound,
            });
            Ok((sandwich, decay))
        })
        .collect();
    let mut sandwich = None;
    let mut decay = None;
    for row in rows {
        let (s, d) = row?;
        sandwich = sandwich.or(s);
        decay = decay.or(d);
    }
    let report = |p, w: Option<Witness>| match w {
        Some(w) => ProbeReport::falsified(p, n, w),
        None => ProbeReport::passed(p, n),
    };
    Ok(DissipativeReport {
        sandwich: report(Property::Sandwich, sandwich),
        decay: report(Property::Dissipation, decay),
    })
}

/// Whether `t ↦ V(φ(t, x, 0))` is nonincreasing on the step grid. Returns
/// the largest increase between consecutive samples.
pub fn max_increase_along(
    sys: &SystemModel,
    v: &LyapunovFn,
    x0: &[f64],
    horizon: f64,
    opts: &IntegrationOptions,
) -> Result<f64, LyapunovError> {
    let tr = integrate(sys, x0, &InputSignal::zero(sys.input_dim()), horizon, opts)?;
    let vals: Vec<f64> = tr.samples().map(|(_, x)| v.value(x)).collect();
    Ok(vals.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max))
}

/// ISS estimate from a dissipative certificate.
///
/// With `λ = min_v α(v)/(2v)` over a log grid, `ξ(|u|) ≤ α(V)/2` gives
/// `V̇ ≤ −λV`, hence `V(t) ≤ max(e^{−λt}ψ₂(|x|), α⁻¹(2ξ(‖u‖)))` and
/// `β(r,t) = ψ₁⁻¹(e^{−λt}ψ₂(r))`, `γ = ψ₁⁻¹∘α⁻¹∘(2ξ)`.
pub fn fit_iss_estimate(cert: &DissipativeCertificate) -> Result<IssEstimate, LyapunovError> {
    let lambda = sampling::log_grid(1e-6, 1e6, 241)
        .into_iter()
        .map(|v| cert.alpha.value(v) / (2.0 * v))
        .fold(f64::INFINITY, f64::min);
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(LyapunovError::InvalidRequest(
            "α is not bounded below by a linear function; no exponential envelope".into(),
        ));
    }
    let psi1_inv = cert.psi1.inverse()?;
    let beta = KLFn::warped(psi1_inv.clone(), cert.psi2.clone(), ComparisonFn::exp_decay(1.0, lambda)?)?;
    let gamma = if cert.xi.is_zero() {
        ComparisonFn::zero()
    } else {
        let two_xi = ComparisonFn::linear(2.0)?.compose(&cert.xi)?;
        psi1_inv.compose(&cert.alpha.inverse()?.compose(&two_xi)?)?
    };
    Ok(IssEstimate { beta, gamma })
}

/// Component `i` of a network: `ẋᵢ = fᵢ(xᵢ, x̄ᵢ, uᵢ)` packaged as a system
/// whose input is the concatenation of the neighbor states and `uᵢ`.
#[derive(Debug, Clone)]
pub struct Subsystem {
    pub model: SystemModel,
    pub neighbors: usize,
    pub component_dim: usize,
    pub external_dim: usize,
}

impl Subsystem {
    pub fn new(model: SystemModel, neighbors: usize, external_dim: usize) -> Result<Self, LyapunovError> {
        let n = model.state_dim();
        if model.input_dim() != neighbors * n + external_dim {
            return Err(LyapunovError::InvalidRequest(format!(
                "input dimension {} is not {neighbors}·{n} + {external_dim}",
                model.input_dim()
            )));
        }
        Ok(Self {
            model,
            neighbors,
            component_dim: n,
            external_dim,
        })
    }
}

/// Implication-form ISS Lyapunov function:
/// `Vᵢ(xᵢ) > max{maxⱼ γᵢⱼ(Vⱼ(xⱼ)), γᵢᵤ(|uᵢ|)} ⇒ ∇Vᵢ·fᵢ ≤ −α̃(Vᵢ(xᵢ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicationCertificate {
    pub v: LyapunovFn,
    pub psi1: ComparisonFn,
    pub psi2: ComparisonFn,
    /// One gain per neighbor slot.
    pub gains: Vec<ComparisonFn>,
    pub gamma_u: ComparisonFn,
    pub alpha_tilde: ComparisonFn,
}

/// Premise level and conclusion at one sample: `None` if V is not
/// differentiable there or the premise fails.
pub fn implication_at(
    sub: &Subsystem,
    cert: &ImplicationCertificate,
    xi: &[f64],
    rest: &[f64],
) -> Option<(f64, f64)> {
    let n = sub.component_dim;
    let vi = cert.v.value(xi);
    let mut level = cert.gamma_u.value(Norm::Euclidean.of(&rest[sub.neighbors * n..]));
    for (j, g) in cert.gains.iter().enumerate() {
        level = level.max(g.value(cert.v.value(&rest[j * n..(j + 1) * n])));
    }
    if vi <= level + PREMISE_MARGIN {
        return None;
    }
    let d = cert.v.lie_derivative(&sub.model, xi, rest)?;
    Some((d, -cert.alpha_tilde.value(vi)))
}

/// Sample `(xᵢ, x̄ᵢ, uᵢ)` with neighbor and input sizes drawn relative to
/// `|xᵢ|` and check the decay conclusion wherever the premise holds.
pub fn check_implication(
    sub: &Subsystem,
    cert: &ImplicationCertificate,
    budget: &SamplingBudget,
) -> Result<ProbeReport, LyapunovError> {
    if cert.gains.len() != sub.neighbors {
        return Err(LyapunovError::InvalidRequest(format!(
            "{} gains for {} neighbors",
            cert.gains.len(),
            sub.neighbors
        )));
    }
    let n = sub.component_dim;
    let samples = budget.samples;
    let rows: Vec<(bool, Option<Witness>)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::stream(budget.seed, i as u64);
            let xi = state_sample(&mut rng, n, budget.radii[i % budget.radii.len()]);
            let r = Norm::Euclidean.of(&xi);
            let mut rest = Vec::with_capacity(sub.neighbors * n + sub.external_dim);
            for _ in 0..sub.neighbors {
                let w = 2.5 * rng.random::<f64>();
                rest.extend(sampling::on_sphere(&mut rng, n, w * r));
            }
            let w = 0.5 * rng.random::<f64>();
            rest.extend(sampling::on_sphere(&mut rng, sub.external_dim, w * r));
            match implication_at(sub, cert, &xi, &rest) {
                None => (false, None),
                Some((observed, bound)) => {
                    let margin = observed - bound;
                    let w = (margin > budget.tol(bound)).then(|| {
                        let mut x0 = xi.clone();
                        x0.extend_from_slice(&rest[..sub.neighbors * n]);
                        Witness {
                            x0,
                            input: InputSignal::constant(rest[sub.neighbors * n..].to_vec()),
                            t: 0.0,
                            t_ref: None,
                            observed,
                            bound,
                            margin,
                        }
                    });
                    (true, w)
                }
            }
        })
        .collect();
    let hits = rows.iter().filter(|r| r.0).count();
    let witness = rows.into_iter().find_map(|r| r.1);
    let mut report = match witness {
        Some(w) => ProbeReport::falsified(Property::Implication, samples, w),
        None => ProbeReport::passed(Property::Implication, samples),
    };
    let fraction = hits as f64 / samples as f64;
    report.premise_fraction = Some(fraction);
    if hits == 0 {
        report.vacuous = true;
        report.summary = "premise never held on the samples: vacuous".into();
        report.warnings.push("implication premise never satisfied".into());
    } else if fraction < 0.01 {
        report
            .warnings
            .push(format!("premise held on only {:.3}% of samples", 100.0 * fraction));
    }
    Ok(report)
}

/// Split an implication witness back into `(xᵢ, x̄ᵢ ++ uᵢ)`.
pub fn implication_witness_point(sub: &Subsystem, w: &Witness) -> (Vec<f64>, Vec<f64>) {
    let n = sub.component_dim;
    let xi = w.x0[..n].to_vec();
    let mut rest = w.x0[n..].to_vec();
    rest.extend(w.input.at(0.0));
    (xi, rest)
}
