//! Per-term homological equations `a + db/dt - mu b = c`.
//!
//! A residual term `c(t) X^p Y^q` in slow equation `i` or fast equation `j`
//! is split into an evolution part `a` and a transform part `b`. The rate is
//! `mu = beta_j - q.beta` in fast equations and `mu = -q.beta` in slow ones.

use crate::noise::{conv, diff_poly, ibp_normalize, NoiseError, NoisePoly};
use crate::rational::{fmt_q, sgn, Q};
use num_traits::{Signed, Zero};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Anticipation {
    Allowed,
    Forbidden,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy {
    pub anticipation: Anticipation,
    /// Decaying terms with `|mu| < mu_min` are kept in the evolution.
    pub mu_min: Q,
    pub notes: String,
}

impl Policy {
    pub fn anticipate() -> Self {
        Self {
            anticipation: Anticipation::Allowed,
            mu_min: Q::zero(),
            notes: "anticipate".into(),
        }
    }

    pub fn no_anticipate() -> Self {
        Self {
            anticipation: Anticipation::Forbidden,
            mu_min: Q::zero(),
            notes: "no-anticipate".into(),
        }
    }

    pub fn with_mu_min(mut self, mu_min: Q) -> Self {
        assert!(!mu_min.is_negative(), "mu_min must be non-negative");
        self.mu_min = mu_min;
        self
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match self.anticipation {
            Anticipation::Allowed => "anticipate",
            Anticipation::Forbidden => "no-anticipate",
        };
        write!(f, "{a} mu_min={}", fmt_q(&self.mu_min, false))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("forcing `{0}` decays (mu < 0) but already anticipates future noise under the no-anticipation policy")]
    PolicyConflict(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// The split of one forcing coefficient.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TermAssignment {
    pub evolution: NoisePoly,
    pub transform: NoisePoly,
}

pub fn fast_rate(q: &[u32], b_diag: &[Q], j: usize) -> Q {
    &b_diag[j] + slow_rate(q, b_diag)
}

pub fn slow_rate(q: &[u32], b_diag: &[Q]) -> Q {
    -q.iter()
        .zip(b_diag)
        .map(|(&e, b)| b * Q::from_integer(e.into()))
        .sum::<Q>()
}

/// Solves `a + db/dt - mu b = c` under `policy`.
pub fn solve(c: &NoisePoly, mu: &Q, policy: &Policy) -> Result<TermAssignment, SolveError> {
    if c.is_zero() {
        return Ok(TermAssignment::default());
    }
    let keep = || TermAssignment {
        evolution: c.clone(),
        transform: NoisePoly::zero(),
    };
    if mu.is_zero() {
        let (evolution, transform) = ibp_normalize(c)?;
        return Ok(TermAssignment {
            evolution,
            transform,
        });
    }
    if mu.is_negative() {
        if mu.abs() < policy.mu_min {
            return Ok(keep());
        }
        if policy.anticipation == Anticipation::Forbidden && c.has_positive_rate() {
            return Err(SolveError::PolicyConflict(c.to_string()));
        }
    } else if policy.anticipation == Anticipation::Forbidden {
        return Ok(keep());
    }
    let b = conv(mu, c)?.scale(&Q::from_integer((-sgn(mu)).into()));
    Ok(TermAssignment {
        evolution: NoisePoly::zero(),
        transform: b,
    })
}

pub fn solve_fast(
    c: &NoisePoly,
    q: &[u32],
    j: usize,
    b_diag: &[Q],
    policy: &Policy,
) -> Result<TermAssignment, SolveError> {
    solve(c, &fast_rate(q, b_diag, j), policy)
}

pub fn solve_slow(
    c: &NoisePoly,
    q: &[u32],
    b_diag: &[Q],
    policy: &Policy,
) -> Result<TermAssignment, SolveError> {
    solve(c, &slow_rate(q, b_diag), policy)
}

/// Checks `a + db/dt - mu b = c` exactly.
pub fn satisfies(c: &NoisePoly, mu: &Q, t: &TermAssignment) -> Result<bool, NoiseError> {
    let lhs = t
        .evolution
        .add(&diff_poly(&t.transform)?)
        .sub(&t.transform.scale(mu));
    Ok(&lhs == c)
}
