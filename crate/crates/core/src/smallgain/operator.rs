//! The max-type gain operator `Γ(s)ᵢ = maxⱼ γᵢⱼ(sⱼ)` of a (truncated)
//! network.

use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonFn, Form, Kind};

use super::SmallGainError;

/// Largest admissible scale parameter of a template gain.
pub const TEMPLATE_MAX_C: f64 = 1e6;
/// Admissible exponent range of power templates.
pub const TEMPLATE_P_RANGE: (f64, f64) = (0.1, 10.0);

/// How neighbors outside `0..N` are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Missing neighbors are zero states.
    #[default]
    Zero,
    /// Indices wrap around.
    Periodic,
}

/// Neighbor slots of component `i` for a translation-invariant stencil.
pub fn stencil_slots(n: usize, offsets: &[isize], boundary: Boundary) -> Vec<Vec<Option<usize>>> {
    (0..n)
        .map(|i| {
            offsets
                .iter()
                .map(|&o| {
                    let j = i as isize + o;
                    match boundary {
                        Boundary::Periodic => Some(j.rem_euclid(n as isize) as usize),
                        Boundary::Zero if j >= 0 && (j as usize) < n => Some(j as usize),
                        Boundary::Zero => None,
                    }
                })
                .collect()
        })
        .collect()
}

/// Check that a gain belongs to the template family: zero, linear, power
/// or saturation with bounded parameters. This yields a common modulus of
/// continuity for the whole family.
pub fn check_template(g: &ComparisonFn) -> Result<(), SmallGainError> {
    let bad = |why: String| Err(SmallGainError::Invalid(format!("gain outside the template family: {why}")));
    if g.kind() == Kind::L {
        return bad("class L".into());
    }
    match g.form() {
        Form::Zero => Ok(()),
        Form::Linear { c } | Form::Saturation { c } if *c <= TEMPLATE_MAX_C => Ok(()),
        Form::Power { c, p } if *c <= TEMPLATE_MAX_C && *p >= TEMPLATE_P_RANGE.0 && *p <= TEMPLATE_P_RANGE.1 => Ok(()),
        other => bad(format!("{other:?}")),
    }
}

/// `Γ` on `N` components with finite neighbor slots.
#[derive(Debug, Clone, PartialEq)]
pub struct GainOperator {
    slots: Vec<Vec<Option<usize>>>,
    gains: Vec<Vec<ComparisonFn>>,
    gamma_u_max: ComparisonFn,
}

impl GainOperator {
    /// Explicit neighbor lists with one gain per listed neighbor.
    pub fn explicit(
        neighbors: Vec<Vec<usize>>,
        gains: Vec<Vec<ComparisonFn>>,
        gamma_u_max: ComparisonFn,
    ) -> Result<Self, SmallGainError> {
        let n = neighbors.len();
        if gains.len() != n || neighbors.iter().zip(&gains).any(|(a, b)| a.len() != b.len()) {
            return Err(SmallGainError::Dimension("one gain per neighbor is required".into()));
        }
        if let Some(j) = neighbors.iter().flatten().find(|&&j| j >= n) {
            return Err(SmallGainError::Dimension(format!("neighbor index {j} outside 0..{n}")));
        }
        let slots = neighbors
            .into_iter()
            .map(|l| l.into_iter().map(Some).collect())
            .collect();
        Self::from_slots(slots, gains, gamma_u_max)
    }

    /// Translation-invariant stencil with the same gain in every slot.
    pub fn stencil(
        n: usize,
        offsets: &[isize],
        boundary: Boundary,
        gain: &ComparisonFn,
        gamma_u_max: ComparisonFn,
    ) -> Result<Self, SmallGainError> {
        let slots = stencil_slots(n, offsets, boundary);
        let gains = vec![vec![gain.clone(); offsets.len()]; n];
        Self::from_slots(slots, gains, gamma_u_max)
    }

    /// Line graph `γ_{i,i±1} = gain`.
    pub fn line(n: usize, gain: &ComparisonFn, boundary: Boundary) -> Result<Self, SmallGainError> {
        Self::stencil(n, &[-1, 1], boundary, gain, ComparisonFn::zero())
    }

    pub(crate) fn from_slots(
        slots: Vec<Vec<Option<usize>>>,
        gains: Vec<Vec<ComparisonFn>>,
        gamma_u_max: ComparisonFn,
    ) -> Result<Self, SmallGainError> {
        if slots.is_empty() {
            return Err(SmallGainError::Dimension("network has no components".into()));
        }
        for g in gains.iter().flatten() {
            check_template(g)?;
        }
        Ok(Self {
            slots,
            gains,
            gamma_u_max,
        })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.slots[i].iter().flatten().copied()
    }

    pub fn gamma_u_max(&self) -> &ComparisonFn {
        &self.gamma_u_max
    }

    /// `Γ(s)`; `s` must have one entry per represented component.
    pub fn apply(&self, s: &[f64]) -> Result<Vec<f64>, SmallGainError> {
        if s.len() != self.len() {
            return Err(SmallGainError::Dimension(format!(
                "sequence of length {} for an operator on {} components",
                s.len(),
                self.len()
            )));
        }
        Ok(self
            .slots
            .iter()
            .zip(&self.gains)
            .map(|(sl, gs)| {
                sl.iter()
                    .zip(gs)
                    .filter_map(|(j, g)| j.map(|j| g.value(s[j])))
                    .fold(0.0, f64::max)
            })
            .collect())
    }

    /// Common modulus of continuity on `[0, r_max]`:
    /// `sup |γᵢⱼ(a) − γᵢⱼ(b)|` over `|a − b| ≤ δ`. Every template is concave
    /// or convex, so the increment is largest at an end of the interval.
    pub fn equicontinuity_modulus(&self, delta: f64, r_max: f64) -> f64 {
        let d = delta.min(r_max).max(0.0);
        self.gains
            .iter()
            .flatten()
            .map(|g| g.value(d).max(g.value(r_max) - g.value(r_max - d)))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;
    use rand::Rng;

    fn lin(c: f64) -> ComparisonFn {
        ComparisonFn::linear(c).unwrap()
    }

    #[test]
    fn constant_and_spike() {
        let op = GainOperator::line(10, &lin(0.4), Boundary::Periodic).unwrap();
        assert!(op.apply(&[2.0; 10]).unwrap().iter().all(|v| (v - 0.8).abs() < 1e-15));
        let op = GainOperator::line(10, &lin(0.4), Boundary::Zero).unwrap();
        let mut s = vec![0.0; 10];
        s[4] = 1.0;
        let g = op.apply(&s).unwrap();
        for (i, v) in g.iter().enumerate() {
            let expect = if i == 3 || i == 5 { 0.4 } else { 0.0 };
            assert!((v - expect).abs() < 1e-15);
        }
        assert!(op.apply(&[0.0; 9]).is_err());
    }

    #[test]
    fn zero_boundary_drops_missing_neighbors() {
        let op = GainOperator::line(4, &lin(1.0), Boundary::Zero).unwrap();
        assert_eq!(op.neighbors(0).collect::<Vec<_>>(), vec![1]);
        let op = GainOperator::line(4, &lin(1.0), Boundary::Periodic).unwrap();
        assert_eq!(op.neighbors(0).collect::<Vec<_>>(), vec![3, 1]);
    }

    #[test]
    fn mixed_templates_match_brute_force() {
        let pw = ComparisonFn::power(0.3, 2.0).unwrap();
        let sat = ComparisonFn::saturation(2.0).unwrap();
        let neighbors = vec![vec![1, 2], vec![0], vec![0, 1]];
        let gains = vec![vec![lin(0.5), pw.clone()], vec![sat.clone()], vec![pw.clone(), lin(0.1)]];
        let op = GainOperator::explicit(neighbors, gains, ComparisonFn::zero()).unwrap();
        let s = [1.5, 0.2, 3.0];
        let g = op.apply(&s).unwrap();
        assert_eq!(g[0], (0.5 * 0.2f64).max(0.3 * 9.0));
        assert_eq!(g[1], 2.0 * 1.5 / 2.5);
        assert_eq!(g[2], (0.3 * 1.5 * 1.5f64).max(0.1 * 0.2));
    }

    #[test]
    fn rejects_non_template_gains() {
        let t = ComparisonFn::table(vec![[0.0, 0.0], [1.0, 1.0]], 1.0).unwrap();
        assert!(GainOperator::line(3, &t, Boundary::Zero).is_err());
        assert!(GainOperator::line(3, &lin(1e7), Boundary::Zero).is_err());
    }

    #[test]
    fn monotone_on_random_pairs() {
        let op = GainOperator::line(20, &ComparisonFn::power(0.7, 1.5).unwrap(), Boundary::Zero).unwrap();
        let mut rng = sampling::rng(5);
        for _ in 0..200 {
            let s: Vec<f64> = (0..20).map(|_| rng.random::<f64>() * 10.0).collect();
            let t: Vec<f64> = s.iter().map(|v| v + rng.random::<f64>()).collect();
            let (a, b) = (op.apply(&s).unwrap(), op.apply(&t).unwrap());
            assert!(a.iter().zip(&b).all(|(x, y)| x <= y));
        }
    }

    #[test]
    fn modulus_bounds_increments() {
        let op = GainOperator::line(5, &ComparisonFn::power(1.0, 2.0).unwrap(), Boundary::Zero).unwrap();
        // convex: largest increment at the right end
        assert!((op.equicontinuity_modulus(0.1, 2.0) - (4.0 - 1.9f64.powi(2))).abs() < 1e-12);
    }
}
