//! Paths of strict decay for a gain operator, their synthesis, and the
//! composite Lyapunov function `V(x) = maxᵢ σᵢ⁻¹(Vᵢ(xᵢ))`.

use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonFn, Kind, DEFAULT_INVERT_TOL};
use crate::lyapunov::LyapunovFn;
use crate::sampling;

use super::{GainOperator, SmallGainError};

/// Relative slack of the decay inequality on the grid.
pub const PATH_TOL: f64 = 1e-9;

/// `σ = (σᵢ)` with `Γ(σ(r)) ≤ (id+ρ)⁻¹∘σ(r)` and envelopes
/// `σ_min ≤ σᵢ ≤ σ_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPath {
    pub rho: ComparisonFn,
    pub sigma: Vec<ComparisonFn>,
    pub sigma_min: ComparisonFn,
    pub sigma_max: ComparisonFn,
}

impl DecayPath {
    /// `σᵢ = id` for all `n` components.
    pub fn identity(n: usize, rho: ComparisonFn) -> Self {
        Self {
            rho,
            sigma: vec![ComparisonFn::identity(); n],
            sigma_min: ComparisonFn::identity(),
            sigma_max: ComparisonFn::identity(),
        }
    }

    fn at(&self, r: f64) -> Vec<f64> {
        self.sigma.iter().map(|s| s.value(r)).collect()
    }
}

/// Which condition of the path definition failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathCondition {
    /// `Γ(σ(r))ᵢ ≤ (id+ρ)⁻¹(σᵢ(r))`
    Decay,
    /// `σ_min ≤ σᵢ ≤ σ_max`
    Envelope,
    /// `σᵢ`, `σ_min`, `σ_max`, `ρ` of class K∞
    Class,
    /// `σᵢ⁻¹` bi-Lipschitz on a sampled compact interval
    BiLipschitz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathViolation {
    pub condition: PathCondition,
    pub index: usize,
    pub r: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Uniform bi-Lipschitz constants of `σᵢ⁻¹` on one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBounds {
    pub interval: [f64; 2],
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathVerification {
    pub holds: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<PathViolation>,
    /// Intervals on which bi-Lipschitz bounds were sampled.
    pub intervals: Vec<IntervalBounds>,
    pub grid_points: usize,
}

/// Log grid used by default for verification and synthesis:
/// 49 points on `[1e-3, 1e3]`.
pub fn default_path_grid() -> Vec<f64> {
    sampling::log_grid(1e-3, 1e3, 49)
}

/// Sampled bi-Lipschitz intervals `[10ᵏ, 10ᵏ⁺¹]`, `k = −3, …, 2`.
pub fn default_intervals() -> Vec<[f64; 2]> {
    (-3..3).map(|k| [10f64.powi(k), 10f64.powi(k + 1)]).collect()
}

fn tol(v: f64) -> f64 {
    1e-12 + PATH_TOL * v.abs()
}

/// Check the path conditions on `r_grid` and on the default intervals.
pub fn verify_decay_path(op: &GainOperator, path: &DecayPath, r_grid: &[f64]) -> Result<PathVerification, SmallGainError> {
    if path.sigma.len() != op.len() {
        return Err(SmallGainError::Dimension(format!(
            "path has {} components, operator {}",
            path.sigma.len(),
            op.len()
        )));
    }
    let done = |violation: PathViolation, intervals| PathVerification {
        holds: false,
        violation: Some(violation),
        intervals,
        grid_points: r_grid.len(),
    };
    // (iii) classes
    let class_ok = |f: &ComparisonFn| f.kind() == Kind::Kinf;
    if !class_ok(&path.rho) || !class_ok(&path.sigma_min) || !class_ok(&path.sigma_max) {
        return Ok(done(
            PathViolation {
                condition: PathCondition::Class,
                index: usize::MAX,
                r: 0.0,
                lhs: 0.0,
                rhs: 0.0,
            },
            vec![],
        ));
    }
    if let Some(i) = path.sigma.iter().position(|s| !class_ok(s)) {
        return Ok(done(
            PathViolation {
                condition: PathCondition::Class,
                index: i,
                r: 0.0,
                lhs: 0.0,
                rhs: 0.0,
            },
            vec![],
        ));
    }
    let idp = path.rho.id_plus()?;
    for &r in r_grid {
        let s = path.at(r);
        let g = op.apply(&s)?;
        let lo = path.sigma_min.value(r);
        let hi = path.sigma_max.value(r);
        for i in 0..s.len() {
            // (i)
            let rhs = idp.invert(s[i], DEFAULT_INVERT_TOL * 1e-3)?;
            if g[i] > rhs + tol(rhs) {
                return Ok(done(
                    PathViolation {
                        condition: PathCondition::Decay,
                        index: i,
                        r,
                        lhs: g[i],
                        rhs,
                    },
                    vec![],
                ));
            }
            // (ii)
            if s[i] < lo - tol(lo) || s[i] > hi + tol(hi) {
                let (lhs, rhs) = if s[i] < lo { (lo, s[i]) } else { (s[i], hi) };
                return Ok(done(
                    PathViolation {
                        condition: PathCondition::Envelope,
                        index: i,
                        r,
                        lhs,
                        rhs,
                    },
                    vec![],
                ));
            }
        }
    }
    // (iv) sampled bi-Lipschitz bounds of σᵢ⁻¹
    let mut intervals = Vec::new();
    for [a, b] in default_intervals() {
        let pts = sampling::log_grid(a, b, 17);
        let mut lower = f64::INFINITY;
        let mut upper: f64 = 0.0;
        for (i, s) in path.sigma.iter().enumerate() {
            let inv: Result<Vec<f64>, _> = pts.iter().map(|&v| s.invert(v, 1e-12)).collect();
            let inv = inv?;
            for k in 1..pts.len() {
                let q = (inv[k] - inv[k - 1]) / (pts[k] - pts[k - 1]);
                if !(q > 0.0 && q.is_finite()) {
                    return Ok(done(
                        PathViolation {
                            condition: PathCondition::BiLipschitz,
                            index: i,
                            r: pts[k],
                            lhs: q,
                            rhs: 0.0,
                        },
                        intervals,
                    ));
                }
                lower = lower.min(q);
                upper = upper.max(q);
            }
        }
        intervals.push(IntervalBounds {
            interval: [a, b],
            lower,
            upper,
        });
    }
    Ok(PathVerification {
        holds: true,
        violation: None,
        intervals,
        grid_points: r_grid.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisOptions {
    pub r_grid: Vec<f64>,
    pub max_iter: usize,
    /// Attempts with `ρ` halved after a failure.
    pub retries: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            r_grid: default_path_grid(),
            max_iter: 500,
            retries: 4,
        }
    }
}

/// Synthesis gave up; `violation` is the failing `(i, r)` of the last
/// candidate (or of the identity path when the iteration diverged).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisFailure {
    pub reason: String,
    pub rho: ComparisonFn,
    pub violation: PathViolation,
}

/// Fixed point of `s ← max(s, (id+ρ)∘Γ(s))` from `r·1`, if reached.
fn iterate(op: &GainOperator, rho: &ComparisonFn, r: f64, max_iter: usize) -> Result<Option<Vec<f64>>, SmallGainError> {
    let mut s = vec![r; op.len()];
    for _ in 0..max_iter {
        let g = op.apply(&s)?;
        let mut changed = false;
        for (si, gi) in s.iter_mut().zip(g) {
            let next = gi + rho.value(gi);
            if next > *si * (1.0 + 1e-12) {
                *si = next;
                changed = true;
            }
        }
        if !changed {
            return Ok(Some(s));
        }
    }
    Ok(None)
}

/// Per-index fit: linear when `sᵢ(r)/r` is constant on the grid, else a
/// monotone table through the grid values.
fn fit(values: &[(f64, f64)]) -> Result<ComparisonFn, SmallGainError> {
    let c0 = values[0].1 / values[0].0;
    if values.iter().all(|(r, v)| (v / r - c0).abs() <= 1e-9 * c0) {
        return Ok(if c0 == 1.0 {
            ComparisonFn::identity()
        } else {
            ComparisonFn::linear(c0)?
        });
    }
    Ok(ComparisonFn::monotone_envelope(values)?)
}

fn envelope(sigma: &[ComparisonFn], grid: &[f64], pick: fn(f64, f64) -> f64) -> Result<ComparisonFn, SmallGainError> {
    let slopes: Option<Vec<f64>> = sigma.iter().map(|s| s.linear_slope()).collect();
    if let Some(sl) = slopes {
        let c = sl.into_iter().reduce(pick).expect("non-empty path");
        return Ok(if c == 1.0 {
            ComparisonFn::identity()
        } else {
            ComparisonFn::linear(c)?
        });
    }
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .map(|&r| (r, sigma.iter().map(|s| s.value(r)).reduce(pick).expect("non-empty path")))
        .collect();
    Ok(ComparisonFn::monotone_envelope(&pts)?)
}

/// Best-effort construction of a decay path from the iterates
/// `s ← max(s, (id+ρ)∘Γ(s))` started at `r·1`. Every returned path has
/// passed [`verify_decay_path`]; otherwise a failure with the violating
/// `(i, r)` is returned.
pub fn synthesize_decay_path(
    op: &GainOperator,
    rho_guess: &ComparisonFn,
    opts: &SynthesisOptions,
) -> Result<Result<DecayPath, SynthesisFailure>, SmallGainError> {
    if opts.r_grid.is_empty() {
        return Err(SmallGainError::Invalid("synthesis grid is empty".into()));
    }
    let mut rho = rho_guess.clone();
    let mut last: Option<SynthesisFailure> = None;
    for _attempt in 0..=opts.retries {
        let mut columns: Vec<Vec<(f64, f64)>> = vec![Vec::with_capacity(opts.r_grid.len()); op.len()];
        let mut diverged = None;
        for &r in &opts.r_grid {
            match iterate(op, &rho, r, opts.max_iter)? {
                Some(s) => {
                    for (c, v) in columns.iter_mut().zip(s) {
                        c.push((r, v));
                    }
                }
                None => {
                    diverged = Some(r);
                    break;
                }
            }
        }
        let failure = if let Some(r) = diverged {
            // the identity path violates the decay condition at r
            let idp = rho.id_plus()?;
            let g = op.apply(&vec![r; op.len()])?;
            let rhs = idp.invert(r, 1e-12)?;
            let (i, lhs) = g
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            SynthesisFailure {
                reason: format!("iterates did not converge within {} steps at r = {r:e}", opts.max_iter),
                rho: rho.clone(),
                violation: PathViolation {
                    condition: PathCondition::Decay,
                    index: i,
                    r,
                    lhs,
                    rhs,
                },
            }
        } else {
            let sigma: Result<Vec<_>, _> = columns.iter().map(|c| fit(c)).collect();
            let sigma = sigma?;
            let path = DecayPath {
                rho: rho.clone(),
                sigma_min: envelope(&sigma, &opts.r_grid, f64::min)?,
                sigma_max: envelope(&sigma, &opts.r_grid, f64::max)?,
                sigma,
            };
            let v = verify_decay_path(op, &path, &opts.r_grid)?;
            match v.violation {
                None => return Ok(Ok(path)),
                Some(violation) => SynthesisFailure {
                    reason: format!("candidate failed verification ({:?})", violation.condition),
                    rho: rho.clone(),
                    violation,
                },
            }
        };
        last = Some(failure);
        rho = ComparisonFn::linear(0.5)?.compose(&rho)?;
    }
    Ok(Err(last.expect("at least one attempt")))
}

/// `V(x) = maxᵢ σᵢ⁻¹(Vᵢ(xᵢ))` on a truncated state with components of
/// dimension `component_dim`.
pub fn composite_lyapunov(v: &LyapunovFn, path: &DecayPath, x: &[f64], component_dim: usize) -> Result<f64, SmallGainError> {
    if component_dim == 0 || x.len() != path.sigma.len() * component_dim {
        return Err(SmallGainError::Dimension(format!(
            "state of length {} does not split into {} components of dimension {component_dim}",
            x.len(),
            path.sigma.len()
        )));
    }
    let mut best: f64 = 0.0;
    for (xi, s) in x.chunks(component_dim).zip(&path.sigma) {
        best = best.max(s.invert(v.value(xi), DEFAULT_INVERT_TOL * 1e-3)?);
    }
    Ok(best)
}
