//! Comparison functions of classes K, K∞, L and KL.
//!
//! Every gain, transient bound and decay rate in the crate is a
//! [`ComparisonFn`]. Parametric forms (linear, power, saturation,
//! exponential decay) are evaluated and inverted in closed form;
//! piecewise-linear tables cover gains estimated from data. Compositions,
//! `id + ρ` and inverses are kept structural so that nested evaluation is
//! exact and inverses of compositions are inverses of the parts.
//!
//! ```
//! use isskit::comparison::ComparisonFn;
//!
//! let g = ComparisonFn::linear(2.0).unwrap();
//! let h = ComparisonFn::power(1.0, 2.0).unwrap();
//! let gh = g.compose(&h).unwrap();
//! assert_eq!(gh.evaluate(3.0).unwrap(), 18.0);
//! assert!((gh.invert(18.0, 1e-12).unwrap() - 3.0).abs() < 1e-12);
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative bracket width at which bisection inversion stops.
pub const DEFAULT_INVERT_TOL: f64 = 1e-9;

/// Smallest admissible slope of a table segment or extrapolation.
pub const MIN_TABLE_SLOPE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComparisonError {
    #[error("negative argument {0}")]
    NegativeArgument(f64),
    #[error("value {r} outside the range [0, {sup}) of a bounded class-K function")]
    OutOfRange { r: f64, sup: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("declared class {declared:?} is not implied by the representation (class {derived:?})")]
    ClassMismatch { declared: Kind, derived: Kind },
    #[error("operation not defined for class {0:?}")]
    UnsupportedClass(Kind),
}

pub type Result<T, E = ComparisonError> = std::result::Result<T, E>;

/// Function class. `K` also labels the distinguished zero gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    K,
    Kinf,
    L,
}

impl Kind {
    /// Whether a function of class `self` may be labelled `declared`.
    fn implies(self, declared: Kind) -> bool {
        matches!(
            (self, declared),
            (Kind::K, Kind::K) | (Kind::Kinf, Kind::K) | (Kind::Kinf, Kind::Kinf) | (Kind::L, Kind::L)
        )
    }
}

/// Representation of a comparison function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Form {
    Zero,
    /// `c·s`
    Linear { c: f64 },
    /// `c·s^p`
    Power { c: f64, p: f64 },
    /// `c·s/(1+s)`, bounded by `c`
    Saturation { c: f64 },
    /// `c·e^{-rate·t}`, class L
    Exp { c: f64, rate: f64 },
    /// `c·(1+t)^{-p}`, class L
    Reciprocal { c: f64, p: f64 },
    /// Piecewise-linear interpolation through `knots`. Increasing tables
    /// extrapolate linearly with `slope`; decreasing (class L) tables
    /// extrapolate with exponential decay at rate `slope`.
    Table { knots: Vec<[f64; 2]>, slope: f64 },
    /// `outer ∘ inner`
    Compose {
        outer: Box<ComparisonFn>,
        inner: Box<ComparisonFn>,
    },
    /// `s ↦ s + ρ(s)`
    IdPlus { rho: Box<ComparisonFn> },
    /// Inverse of a K∞ function.
    Inverse { of: Box<ComparisonFn> },
}

#[derive(Serialize, Deserialize)]
struct RawFn {
    kind: Kind,
    #[serde(flatten)]
    form: Form,
}

/// A validated comparison function. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFn", into = "RawFn")]
pub struct ComparisonFn {
    kind: Kind,
    form: Form,
}

impl TryFrom<RawFn> for ComparisonFn {
    type Error = ComparisonError;

    fn try_from(raw: RawFn) -> Result<Self> {
        ComparisonFn::with_kind(raw.kind, raw.form)
    }
}

impl From<ComparisonFn> for RawFn {
    fn from(f: ComparisonFn) -> Self {
        RawFn {
            kind: f.kind,
            form: f.form,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ComparisonError::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn check_arg(s: f64) -> Result<()> {
    if s >= 0.0 {
        Ok(())
    } else {
        Err(ComparisonError::NegativeArgument(s))
    }
}

impl ComparisonFn {
    /// Validate `form` and label it with its own (strongest) class.
    pub fn new(form: Form) -> Result<Self> {
        let kind = derive_kind(&form)?;
        Ok(Self { kind, form })
    }

    /// Validate `form` and label it `declared`, which must be implied by
    /// the representation (a K∞ function may be declared K, not vice versa).
    pub fn with_kind(declared: Kind, form: Form) -> Result<Self> {
        let derived = derive_kind(&form)?;
        if !derived.implies(declared) {
            return Err(ComparisonError::ClassMismatch { declared, derived });
        }
        Ok(Self {
            kind: declared,
            form,
        })
    }

    pub fn zero() -> Self {
        Self {
            kind: Kind::K,
            form: Form::Zero,
        }
    }

    pub fn identity() -> Self {
        Self {
            kind: Kind::Kinf,
            form: Form::Linear { c: 1.0 },
        }
    }

    pub fn linear(c: f64) -> Result<Self> {
        Self::new(Form::Linear { c })
    }

    pub fn power(c: f64, p: f64) -> Result<Self> {
        Self::new(Form::Power { c, p })
    }

    pub fn saturation(c: f64) -> Result<Self> {
        Self::new(Form::Saturation { c })
    }

    pub fn exp_decay(c: f64, rate: f64) -> Result<Self> {
        Self::new(Form::Exp { c, rate })
    }

    pub fn reciprocal(c: f64, p: f64) -> Result<Self> {
        Self::new(Form::Reciprocal { c, p })
    }

    pub fn table(knots: Vec<[f64; 2]>, slope: f64) -> Result<Self> {
        Self::new(Form::Table { knots, slope })
    }

    /// Build a class K∞ table from estimated `(s, value)` samples.
    ///
    /// The samples are sorted, prefixed with `(0, 0)`, replaced by their
    /// running maximum and bumped to the minimum slope where flat, so the
    /// result is the smallest admissible table dominating the samples.
    pub fn monotone_envelope(samples: &[(f64, f64)]) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = samples
            .iter()
            .copied()
            .filter(|(s, _)| *s > 0.0)
            .collect();
        for &(s, v) in &pts {
            if !s.is_finite() || !v.is_finite() {
                return Err(ComparisonError::InvalidTable(format!(
                    "non-finite sample ({s}, {v})"
                )));
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 = a.1.max(b.1);
                true
            } else {
                false
            }
        });
        let mut knots = vec![[0.0, 0.0]];
        for (s, v) in pts {
            let [ps, pv] = *knots.last().expect("non-empty");
            let floor = pv + MIN_TABLE_SLOPE * (s - ps) * 2.0;
            knots.push([s, v.max(floor)]);
        }
        if knots.len() == 1 {
            return Ok(Self::identity());
        }
        let n = knots.len();
        let last = (knots[n - 1][1] - knots[n - 2][1]) / (knots[n - 1][0] - knots[n - 2][0]);
        Self::table(knots, last.max(MIN_TABLE_SLOPE * 2.0))
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn form(&self) -> &Form {
        &self.form
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.form, Form::Zero)
    }

    /// `γ(s)`, rejecting negative arguments.
    pub fn evaluate(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        Ok(self.value(s))
    }

    /// `γ(s)` with the argument clamped to `[0, ∞)`; for call sites whose
    /// arguments are norms.
    pub fn value(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match &self.form {
            Form::Zero => 0.0,
            Form::Linear { c } => c * s,
            Form::Power { c, p } => c * s.powf(*p),
            Form::Saturation { c } => c * s / (1.0 + s),
            Form::Exp { c, rate } => c * (-rate * s).exp(),
            Form::Reciprocal { c, p } => c * (1.0 + s).powf(-p),
            Form::Table { knots, slope } => eval_table(self.kind, knots, *slope, s),
            Form::Compose { outer, inner } => outer.value(inner.value(s)),
            Form::IdPlus { rho } => s + rho.value(s),
            Form::Inverse { of } => of
                .invert(s, DEFAULT_INVERT_TOL * 1e-3)
                .expect("inverse of a K-infinity function is total"),
        }
    }

    /// Supremum of the function, `None` when unbounded.
    pub fn sup(&self) -> Option<f64> {
        match &self.form {
            Form::Zero => Some(0.0),
            Form::Saturation { c } | Form::Exp { c, .. } | Form::Reciprocal { c, .. } => Some(*c),
            Form::Table { knots, .. } if self.kind == Kind::L => Some(knots[0][1]),
            Form::Compose { outer, inner } => match inner.sup() {
                None => outer.sup(),
                Some(b) => Some(outer.value(b)),
            },
            _ => None,
        }
    }

    /// Slope when the function is exactly linear (zero counts as slope 0).
    pub fn linear_slope(&self) -> Option<f64> {
        match &self.form {
            Form::Zero => Some(0.0),
            Form::Linear { c } => Some(*c),
            Form::Power { c, p } if *p == 1.0 => Some(*c),
            Form::Compose { outer, inner } => Some(outer.linear_slope()? * inner.linear_slope()?),
            Form::IdPlus { rho } => Some(1.0 + rho.linear_slope()?),
            Form::Inverse { of } => Some(1.0 / of.linear_slope()?),
            _ => None,
        }
    }

    /// Returns `s` with `γ(s) = r`, to relative accuracy `tol` in `s`.
    ///
    /// Closed forms are used where they exist; tables are inverted by
    /// segment search and everything else by bracketing bisection.
    pub fn invert(&self, r: f64, tol: f64) -> Result<f64> {
        check_arg(r)?;
        if self.kind == Kind::L {
            return Err(ComparisonError::UnsupportedClass(Kind::L));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        if let Some(sup) = self.sup() {
            if r >= sup {
                return Err(ComparisonError::OutOfRange { r, sup });
            }
        }
        match &self.form {
            Form::Zero => unreachable!("sup of zero is 0"),
            Form::Linear { c } => Ok(r / c),
            Form::Power { c, p } => Ok((r / c).powf(1.0 / p)),
            Form::Saturation { c } => {
                let q = r / c;
                Ok(q / (1.0 - q))
            }
            Form::Table { knots, slope } => Ok(invert_table(knots, *slope, r)),
            Form::Compose { outer, inner } => inner.invert(outer.invert(r, tol)?, tol),
            Form::Inverse { of } => Ok(of.value(r)),
            Form::IdPlus { rho } => match rho.linear_slope() {
                Some(c) => Ok(r / (1.0 + c)),
                None => Ok(self.bisect(r, tol)),
            },
            Form::Exp { .. } | Form::Reciprocal { .. } => unreachable!("class L rejected above"),
        }
    }

    fn bisect(&self, r: f64, tol: f64) -> f64 {
        let tol = if tol > 0.0 { tol } else { DEFAULT_INVERT_TOL };
        let mut lo = 0.0;
        let mut hi = r.max(1.0);
        let mut guard = 0;
        while self.value(hi) < r && guard < 2100 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
        }
        for _ in 0..400 {
            if hi - lo <= tol * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.value(mid) < r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `self ∘ inner`. The zero gain absorbs: `0 ∘ γ = γ ∘ 0 = 0`.
    pub fn compose(&self, inner: &ComparisonFn) -> Result<ComparisonFn> {
        for f in [self, inner] {
            if f.kind == Kind::L {
                return Err(ComparisonError::UnsupportedClass(Kind::L));
            }
        }
        if self.is_zero() || inner.is_zero() {
            return Ok(Self::zero());
        }
        Self::new(Form::Compose {
            outer: Box::new(self.clone()),
            inner: Box::new(inner.clone()),
        })
    }

    /// `id + self`, a K∞ function for any `self` in K ∪ {0}.
    pub fn id_plus(&self) -> Result<ComparisonFn> {
        if self.kind == Kind::L {
            return Err(ComparisonError::UnsupportedClass(Kind::L));
        }
        if self.is_zero() {
            return Ok(Self::identity());
        }
        Self::new(Form::IdPlus {
            rho: Box::new(self.clone()),
        })
    }

    /// The inverse function; requires class K∞.
    pub fn inverse(&self) -> Result<ComparisonFn> {
        if self.kind != Kind::Kinf {
            return Err(ComparisonError::UnsupportedClass(self.kind));
        }
        match &self.form {
            Form::Linear { c } => Self::linear(1.0 / c),
            Form::Power { c, p } => Self::power(c.powf(-1.0 / p), 1.0 / p),
            Form::Inverse { of } => Ok((**of).clone()),
            _ => Self::new(Form::Inverse {
                of: Box::new(self.clone()),
            }),
        }
    }

    /// Lipschitz constant on `[0, r_max]` when one exists for the
    /// representation; `None` when the function is not Lipschitz there
    /// (for instance `s^p` with `p < 1` at the origin).
    pub fn lipschitz_on(&self, r_max: f64) -> Option<f64> {
        let r_max = r_max.max(0.0);
        match &self.form {
            Form::Zero => Some(0.0),
            Form::Linear { c } | Form::Saturation { c } => Some(*c),
            Form::Power { c, p } => {
                if *p >= 1.0 {
                    Some(c * p * r_max.powf(p - 1.0))
                } else {
                    None
                }
            }
            Form::Exp { c, rate } => Some(c * rate),
            Form::Reciprocal { c, p } => Some(c * p),
            Form::Table { knots, slope } => {
                let seg = knots
                    .windows(2)
                    .map(|w| ((w[1][1] - w[0][1]) / (w[1][0] - w[0][0])).abs())
                    .fold(0.0, f64::max);
                Some(if self.kind == Kind::L {
                    seg.max(knots[knots.len() - 1][1] * slope)
                } else {
                    seg.max(*slope)
                })
            }
            Form::Compose { outer, inner } => {
                let li = inner.lipschitz_on(r_max)?;
                let lo = outer.lipschitz_on(inner.value(r_max))?;
                Some(li * lo)
            }
            Form::IdPlus { rho } => Some(1.0 + rho.lipschitz_on(r_max)?),
            Form::Inverse { of } => {
                // Lipschitz iff `of` has a positive lower slope bound on the
                // preimage interval.
                let s_max = of.invert(r_max, DEFAULT_INVERT_TOL).ok()?;
                let lower = of.lower_slope_on(s_max)?;
                Some(1.0 / lower)
            }
        }
    }

    fn lower_slope_on(&self, s_max: f64) -> Option<f64> {
        match &self.form {
            Form::Linear { c } => Some(*c),
            Form::Power { c, p } => {
                if *p <= 1.0 {
                    Some(c * p * s_max.max(1e-300).powf(p - 1.0))
                } else {
                    None
                }
            }
            Form::Table { knots, slope } => Some(
                knots
                    .windows(2)
                    .map(|w| (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]))
                    .fold(*slope, f64::min),
            ),
            Form::IdPlus { .. } => Some(1.0),
            Form::Compose { outer, inner } => {
                let li = inner.lower_slope_on(s_max)?;
                let lo = outer.lower_slope_on(inner.value(s_max))?;
                Some(li * lo)
            }
            _ => None,
        }
    }
}

fn derive_kind(form: &Form) -> Result<Kind> {
    match form {
        Form::Zero => Ok(Kind::K),
        Form::Linear { c } => positive("c", *c).map(|_| Kind::Kinf),
        Form::Power { c, p } => {
            positive("c", *c)?;
            positive("p", *p)?;
            Ok(Kind::Kinf)
        }
        Form::Saturation { c } => positive("c", *c).map(|_| Kind::K),
        Form::Exp { c, rate } => {
            positive("c", *c)?;
            positive("rate", *rate)?;
            Ok(Kind::L)
        }
        Form::Reciprocal { c, p } => {
            positive("c", *c)?;
            positive("p", *p)?;
            Ok(Kind::L)
        }
        Form::Table { knots, slope } => validate_table(knots, *slope),
        Form::Compose { outer, inner } => match (outer.kind, inner.kind) {
            (Kind::L, _) | (_, Kind::L) => Err(ComparisonError::UnsupportedClass(Kind::L)),
            (Kind::Kinf, Kind::Kinf) => Ok(Kind::Kinf),
            _ => Ok(Kind::K),
        },
        Form::IdPlus { rho } => match rho.kind {
            Kind::L => Err(ComparisonError::UnsupportedClass(Kind::L)),
            _ => Ok(Kind::Kinf),
        },
        Form::Inverse { of } => match of.kind {
            Kind::Kinf => Ok(Kind::Kinf),
            k => Err(ComparisonError::UnsupportedClass(k)),
        },
    }
}

fn validate_table(knots: &[[f64; 2]], slope: f64) -> Result<Kind> {
    if knots.len() < 2 {
        return Err(ComparisonError::InvalidTable("need at least two knots".into()));
    }
    if knots.iter().flatten().any(|v| !v.is_finite()) || !slope.is_finite() {
        return Err(ComparisonError::InvalidTable("non-finite entry".into()));
    }
    if knots[0][0] != 0.0 {
        return Err(ComparisonError::InvalidTable("first knot must be at 0".into()));
    }
    if slope < MIN_TABLE_SLOPE {
        return Err(ComparisonError::InvalidTable(format!(
            "extrapolation slope {slope} below minimum {MIN_TABLE_SLOPE}"
        )));
    }
    let decreasing = knots[1][1] < knots[0][1];
    for (i, w) in knots.windows(2).enumerate() {
        let ds = w[1][0] - w[0][0];
        if ds <= 0.0 {
            return Err(ComparisonError::InvalidTable(format!(
                "abscissae not strictly increasing at knot {}",
                i + 1
            )));
        }
        let m = (w[1][1] - w[0][1]) / ds;
        let ok = if decreasing {
            m <= -MIN_TABLE_SLOPE
        } else {
            m >= MIN_TABLE_SLOPE
        };
        if !ok {
            return Err(ComparisonError::InvalidTable(format!(
                "segment {i} has slope {m}, violating strict monotonicity"
            )));
        }
    }
    if decreasing {
        if knots[knots.len() - 1][1] <= 0.0 {
            return Err(ComparisonError::InvalidTable(
                "class-L table values must stay positive".into(),
            ));
        }
        Ok(Kind::L)
    } else {
        if knots[0][1] != 0.0 {
            return Err(ComparisonError::InvalidTable(
                "class-K table must pass through (0, 0)".into(),
            ));
        }
        Ok(Kind::Kinf)
    }
}

fn eval_table(kind: Kind, knots: &[[f64; 2]], slope: f64, s: f64) -> f64 {
    let last = knots[knots.len() - 1];
    if s >= last[0] {
        return if kind == Kind::L {
            last[1] * (-slope * (s - last[0])).exp()
        } else {
            last[1] + slope * (s - last[0])
        };
    }
    let j = knots.partition_point(|k| k[0] <= s).max(1);
    let [s0, v0] = knots[j - 1];
    let [s1, v1] = knots[j];
    v0 + (v1 - v0) * (s - s0) / (s1 - s0)
}

fn invert_table(knots: &[[f64; 2]], slope: f64, r: f64) -> f64 {
    let last = knots[knots.len() - 1];
    if r >= last[1] {
        return last[0] + (r - last[1]) / slope;
    }
    let j = knots.partition_point(|k| k[1] <= r).max(1);
    let [s0, v0] = knots[j - 1];
    let [s1, v1] = knots[j];
    s0 + (s1 - s0) * (r - v0) / (v1 - v0)
}

/// Class-KL function in one of three separable shapes.
///
/// `Product`: `q(r)·d(t)`; `Nested`: `q(r·d(t))`; `Warped`:
/// `outer(d(t)·inner(r))`, which covers the bounds obtained from Lyapunov
/// sandwiches such as `ψ₁⁻¹(e^{-λt}ψ₂(r))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKl", into = "RawKl")]
pub struct KLFn(RawKl);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RawKl {
    Product {
        q: ComparisonFn,
        d: ComparisonFn,
    },
    Nested {
        q: ComparisonFn,
        d: ComparisonFn,
    },
    Warped {
        outer: ComparisonFn,
        inner: ComparisonFn,
        d: ComparisonFn,
    },
}

impl TryFrom<RawKl> for KLFn {
    type Error = ComparisonError;

    fn try_from(raw: RawKl) -> Result<Self> {
        let need = |f: &ComparisonFn, k: Kind| {
            if f.kind == k {
                Ok(())
            } else {
                Err(ComparisonError::ClassMismatch {
                    declared: k,
                    derived: f.kind,
                })
            }
        };
        match &raw {
            RawKl::Product { q, d } | RawKl::Nested { q, d } => {
                need(q, Kind::Kinf)?;
                need(d, Kind::L)?;
            }
            RawKl::Warped { outer, inner, d } => {
                need(outer, Kind::Kinf)?;
                need(inner, Kind::Kinf)?;
                need(d, Kind::L)?;
            }
        }
        Ok(KLFn(raw))
    }
}

impl From<KLFn> for RawKl {
    fn from(f: KLFn) -> Self {
        f.0
    }
}

impl KLFn {
    pub fn product(q: ComparisonFn, d: ComparisonFn) -> Result<Self> {
        RawKl::Product { q, d }.try_into()
    }

    pub fn nested(q: ComparisonFn, d: ComparisonFn) -> Result<Self> {
        RawKl::Nested { q, d }.try_into()
    }

    pub fn warped(outer: ComparisonFn, inner: ComparisonFn, d: ComparisonFn) -> Result<Self> {
        RawKl::Warped { outer, inner, d }.try_into()
    }

    /// `β(r,t) = c·r·e^{-λt}`.
    pub fn exponential(c: f64, rate: f64) -> Result<Self> {
        Self::product(ComparisonFn::linear(c)?, ComparisonFn::exp_decay(1.0, rate)?)
    }

    pub fn repr(&self) -> &RawKl {
        &self.0
    }

    pub fn evaluate(&self, r: f64, t: f64) -> Result<f64> {
        check_arg(r)?;
        check_arg(t)?;
        Ok(self.value(r, t))
    }

    /// `β(r,t)` with both arguments clamped to `[0, ∞)`.
    pub fn value(&self, r: f64, t: f64) -> f64 {
        let (r, t) = (r.max(0.0), t.max(0.0));
        match &self.0 {
            RawKl::Product { q, d } => q.value(r) * d.value(t),
            RawKl::Nested { q, d } => q.value(r * d.value(t)),
            RawKl::Warped { outer, inner, d } => outer.value(d.value(t) * inner.value(r)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_a() -> ComparisonFn {
        ComparisonFn::table(vec![[0.0, 0.0], [1.0, 0.5], [2.0, 2.0]], 1.0).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(ComparisonFn::linear(2.0).unwrap().evaluate(3.0).unwrap(), 6.0);
        assert_eq!(ComparisonFn::power(1.0, 2.0).unwrap().evaluate(0.0).unwrap(), 0.0);
        assert!((table_a().evaluate(1.5).unwrap() - 1.25).abs() < 1e-15);
        assert_eq!(table_a().evaluate(3.0).unwrap(), 3.0);
    }

    #[test]
    fn negative_argument_rejected() {
        let g = ComparisonFn::linear(1.0).unwrap();
        assert_eq!(g.evaluate(-1.0), Err(ComparisonError::NegativeArgument(-1.0)));
        assert!(g.invert(-0.5, 1e-9).is_err());
    }

    #[test]
    fn compose_examples() {
        let g = ComparisonFn::linear(2.0).unwrap();
        let h = ComparisonFn::power(1.0, 2.0).unwrap();
        assert_eq!(g.compose(&h).unwrap().evaluate(3.0).unwrap(), 18.0);
        let id = ComparisonFn::identity();
        let idh = id.compose(&h).unwrap();
        for i in 0..20 {
            let s = i as f64 * 0.37;
            assert_eq!(idh.value(s), h.value(s));
        }
        assert_eq!(g.compose(&h).unwrap().kind(), Kind::Kinf);
        let sat = ComparisonFn::saturation(1.0).unwrap();
        assert_eq!(g.compose(&sat).unwrap().kind(), Kind::K);
    }

    #[test]
    fn table_composition_matches_nested_evaluation() {
        let a = table_a();
        let b = ComparisonFn::table(vec![[0.0, 0.0], [0.5, 1.0], [3.0, 2.0]], 0.25).unwrap();
        let ab = a.compose(&b).unwrap();
        for s in [0.0, 0.2, 0.5, 1.1, 2.9, 3.0, 7.0] {
            assert!((ab.value(s) - a.value(b.value(s))).abs() <= 1e-9);
        }
        let s = ab.invert(ab.value(5.0), 1e-12).unwrap();
        assert!((s - 5.0).abs() < 1e-9);
    }

    #[test]
    fn zero_gain_absorbs_composition() {
        let z = ComparisonFn::zero();
        let g = ComparisonFn::linear(3.0).unwrap();
        assert!(z.compose(&g).unwrap().is_zero());
        assert!(g.compose(&z).unwrap().is_zero());
        assert_eq!(z.value(10.0), 0.0);
        assert_eq!(z.id_plus().unwrap(), ComparisonFn::identity());
    }

    #[test]
    fn invert_examples() {
        let sq = ComparisonFn::power(1.0, 2.0).unwrap();
        assert!((sq.invert(4.0, 1e-9).unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(ComparisonFn::identity().invert(0.731, 1e-9).unwrap(), 0.731);
        let sat = ComparisonFn::saturation(2.0).unwrap();
        assert!(matches!(
            sat.invert(2.5, 1e-9),
            Err(ComparisonError::OutOfRange { .. })
        ));
        assert!((sat.invert(sat.value(3.0), 1e-9).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn id_plus_examples() {
        let rho = ComparisonFn::linear(0.1).unwrap();
        assert!((rho.id_plus().unwrap().value(10.0) - 11.0).abs() < 1e-12);
        let ip = ComparisonFn::linear(0.25).unwrap().id_plus().unwrap();
        assert!((ip.invert(1.25, 1e-12).unwrap() - 1.0).abs() < 1e-12);
        // nonlinear ρ goes through bisection
        let ip2 = ComparisonFn::power(0.25, 2.0).unwrap().id_plus().unwrap();
        let s = ip2.invert(ip2.value(1.7), 1e-12).unwrap();
        assert!((s - 1.7).abs() < 1e-10);
        for eps in [1e-2, 1e-4, 1e-8] {
            let g = ComparisonFn::linear(eps).unwrap().id_plus().unwrap();
            for i in 0..=50 {
                let s = i as f64 * 0.2;
                assert!((g.value(s) - s).abs() <= eps * 10.0 + 1e-15);
            }
        }
    }

    #[test]
    fn table_validation() {
        assert!(ComparisonFn::table(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 1.0]], 1.0).is_err());
        assert!(ComparisonFn::table(vec![[0.0, 0.0], [1.0, 1.0]], 0.0).is_err());
        assert!(ComparisonFn::table(vec![[0.5, 0.0], [1.0, 1.0]], 1.0).is_err());
        assert!(ComparisonFn::table(vec![[0.0, 0.1], [1.0, 1.0]], 1.0).is_err());
        let l = ComparisonFn::table(vec![[0.0, 1.0], [1.0, 0.5], [2.0, 0.1]], 2.0).unwrap();
        assert_eq!(l.kind(), Kind::L);
        assert!(l.value(30.0) < 1e-6);
    }

    #[test]
    fn declared_class_must_be_implied() {
        let ok = ComparisonFn::with_kind(Kind::K, Form::Linear { c: 1.0 }).unwrap();
        assert_eq!(ok.kind(), Kind::K);
        assert!(ComparisonFn::with_kind(Kind::Kinf, Form::Saturation { c: 1.0 }).is_err());
        // A K-labelled linear function cannot be inverted as K∞.
        assert!(ok.inverse().is_err());
    }

    #[test]
    fn json_shapes() {
        let g: ComparisonFn =
            serde_json::from_str(r#"{"kind":"kinf","form":"linear","c":2.0}"#).unwrap();
        assert_eq!(g, ComparisonFn::linear(2.0).unwrap());
        let t: ComparisonFn = serde_json::from_str(
            r#"{"kind":"kinf","form":"table","knots":[[0,0],[1,0.5],[2,2]],"slope":1.0}"#,
        )
        .unwrap();
        assert_eq!(t, table_a());
        let back = serde_json::to_value(&t).unwrap();
        assert_eq!(back["form"], "table");
        assert_eq!(back["kind"], "kinf");
        let nested = ComparisonFn::linear(2.0)
            .unwrap()
            .compose(&ComparisonFn::saturation(1.0).unwrap())
            .unwrap();
        let s = serde_json::to_string(&nested).unwrap();
        assert_eq!(serde_json::from_str::<ComparisonFn>(&s).unwrap(), nested);
        assert!(serde_json::from_str::<ComparisonFn>(r#"{"kind":"kinf","form":"linear","c":-1}"#)
            .is_err());
    }

    #[test]
    fn monotone_envelope_repairs_flat_samples() {
        let g = ComparisonFn::monotone_envelope(&[(1.0, 0.5), (2.0, 0.4), (3.0, 0.9)]).unwrap();
        assert!(g.value(2.0) >= 0.5);
        assert!(g.value(3.0) >= 0.9);
        assert!(g.value(2.0) > g.value(1.0));
    }

    #[test]
    fn kl_sections() {
        let b = KLFn::exponential(1.0, 1.0).unwrap();
        for i in 0..50 {
            let r = i as f64 * 0.3;
            assert!(b.value(r + 0.1, 1.0) > b.value(r, 1.0));
        }
        for i in 0..50 {
            let t = i as f64 * 0.5;
            assert!(b.value(2.0, t + 0.5) < b.value(2.0, t));
        }
        assert!(b.value(2.0, 20.0) < 1e-6 * b.value(2.0, 0.0));
        let nested = KLFn::nested(
            ComparisonFn::power(1.0, 2.0).unwrap(),
            ComparisonFn::exp_decay(1.0, 0.5).unwrap(),
        )
        .unwrap();
        assert!((nested.value(2.0, 2.0) - (2.0 * (-1.0f64).exp()).powi(2)).abs() < 1e-12);
        assert!(KLFn::product(
            ComparisonFn::exp_decay(1.0, 1.0).unwrap(),
            ComparisonFn::exp_decay(1.0, 1.0).unwrap()
        )
        .is_err());
        assert!(b.evaluate(-1.0, 0.0).is_err());
    }

    #[test]
    fn lipschitz_classification() {
        let sqrt = ComparisonFn::power(1.0, 0.5).unwrap();
        assert!(sqrt.lipschitz_on(1.0).is_none());
        let half_sq = ComparisonFn::power(0.5, 2.0).unwrap();
        assert_eq!(half_sq.lipschitz_on(2.0), Some(2.0));
        assert!(half_sq.inverse().unwrap().lipschitz_on(1.0).is_none());
        assert_eq!(ComparisonFn::linear(3.0).unwrap().inverse().unwrap().lipschitz_on(5.0), Some(1.0 / 3.0));
    }

    fn kinf_strategy() -> impl Strategy<Value = ComparisonFn> {
        prop_oneof![
            (0.05f64..20.0).prop_map(|c| ComparisonFn::linear(c).unwrap()),
            (0.05f64..5.0, 0.3f64..3.0).prop_map(|(c, p)| ComparisonFn::power(c, p).unwrap()),
            (0.01f64..2.0).prop_map(|c| ComparisonFn::linear(c).unwrap().id_plus().unwrap()),
            prop::collection::vec(0.01f64..3.0, 1..6).prop_map(|incs| {
                let mut knots = vec![[0.0, 0.0]];
                for (i, d) in incs.iter().enumerate() {
                    let [s, v] = knots[i];
                    knots.push([s + 1.0, v + d]);
                }
                ComparisonFn::table(knots, 0.5).unwrap()
            }),
        ]
    }

    proptest! {
        #[test]
        fn composition_is_strictly_increasing(a in kinf_strategy(), b in kinf_strategy()) {
            let ab = a.compose(&b).unwrap();
            prop_assert_eq!(ab.kind(), Kind::Kinf);
            let mut prev = ab.value(0.0);
            prop_assert_eq!(prev, 0.0);
            for i in 1..=100 {
                let v = ab.value(i as f64 * 0.1);
                prop_assert!(v > prev);
                prev = v;
            }
        }

        #[test]
        fn invert_round_trip(g in kinf_strategy(), s in 0.0f64..50.0) {
            let back = g.invert(g.value(s), 1e-12).unwrap();
            prop_assert!((back - s).abs() <= 1e-8 * s.max(1e-300) + 1e-300);
        }

        #[test]
        fn invert_is_monotone(g in kinf_strategy(), r in 0.0f64..20.0, dr in 0.001f64..5.0) {
            prop_assert!(g.invert(r + dr, 1e-12).unwrap() >= g.invert(r, 1e-12).unwrap());
        }
    }
}
