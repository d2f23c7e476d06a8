//! Residual-driven construction of the stochastic normal form.
//!
//! The system is `x' = A x + f(x, y, t)`, `y' = B y + g(x, y, t)` with `A`
//! strictly upper triangular and `B = diag(beta)`, `beta < 0`. We seek
//! `x = X + xi`, `y = Y + eta` with `X' = A X + F`, `Y' = B Y + G`.

use crate::homological::{slow_rate, fast_rate, solve, Policy, SolveError};
use crate::noise::NoiseExpr;
use crate::rational::Q;
use crate::series::{Ctx, Series, SeriesError};
use num_traits::{Signed, Zero};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("invalid system: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("no convergence after {sweeps} sweeps; remaining residual:\n{residual}")]
    NonConvergence { sweeps: usize, residual: String },
    #[error("certification failed: claimed order {claimed}, residual found at grade {found}")]
    Certification { claimed: u32, found: u32 },
}

impl From<crate::noise::NoiseError> for EngineError {
    fn from(e: crate::noise::NoiseError) -> Self {
        EngineError::Series(SeriesError::Noise(e))
    }
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub ctx: Arc<Ctx>,
    pub a: Vec<Vec<Q>>,
    pub b_diag: Vec<Q>,
    pub f: Vec<Series>,
    pub g: Vec<Series>,
    pub noises: u32,
}

impl SystemSpec {
    /// Validates the structural requirements and returns the spec.
    ///
    /// Right-hand sides must vanish with their gradients at the origin, with
    /// one allowance: fast equations may depend linearly on slow variables.
    pub fn new(
        ctx: Arc<Ctx>,
        a: Vec<Vec<Q>>,
        b_diag: Vec<Q>,
        f: Vec<Series>,
        g: Vec<Series>,
        noises: u32,
    ) -> Result<Self, EngineError> {
        let d = ctx.dims;
        let bad = |m: String| Err(EngineError::InvalidSpec(m));
        if a.len() != d.slow || a.iter().any(|r| r.len() != d.slow) {
            return bad(format!("matrix A must be {0}x{0}", d.slow));
        }
        for (i, row) in a.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if j <= i && !v.is_zero() {
                    return bad(format!("matrix A must be strictly upper triangular (entry {},{})", i + 1, j + 1));
                }
            }
        }
        if b_diag.len() != d.fast {
            return bad(format!("expected {} fast rates", d.fast));
        }
        if let Some(b) = b_diag.iter().find(|b| !b.is_negative()) {
            return bad(format!("fast rate must be negative (got {b})"));
        }
        if f.len() != d.slow || g.len() != d.fast {
            return bad("one right-hand side per variable is required".into());
        }
        for (eq, rhs, is_fast) in f
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s, false))
            .chain(g.iter().enumerate().map(|(j, s)| (j, s, true)))
        {
            for (k, _) in rhs.iter() {
                let state: u32 = k.exps[..d.state()].iter().sum();
                let params: u32 = k.exps[d.state()..].iter().sum();
                if state + params == 0 {
                    return bad(format!(
                        "right-hand side {} has a term that does not vanish at the origin",
                        ctx.names[if is_fast { d.slow + eq } else { eq }]
                    ));
                }
                if state + params == 1 && params == 0 {
                    let var = k.exps.iter().position(|&e| e == 1).unwrap();
                    let slow_into_fast = is_fast && var < d.slow && k.noise.is_one();
                    if !slow_into_fast {
                        return bad(format!(
                            "right-hand side {} has a linear term in {}; its gradient must vanish at the origin",
                            ctx.names[if is_fast { d.slow + eq } else { eq }],
                            ctx.names[var]
                        ));
                    }
                }
            }
        }
        Ok(Self {
            ctx,
            a,
            b_diag,
            f,
            g,
            noises,
        })
    }

    pub fn order(&self) -> u32 {
        self.ctx.trunc.total
    }

    fn a_is_zero(&self) -> bool {
        self.a.iter().flatten().all(|v| v.is_zero())
    }

    /// The same system in another context with identical layout.
    pub fn recontext(&self, ctx: &Arc<Ctx>) -> SystemSpec {
        SystemSpec {
            ctx: ctx.clone(),
            a: self.a.clone(),
            b_diag: self.b_diag.clone(),
            f: self.f.iter().map(|s| s.recontext(ctx)).collect(),
            g: self.g.iter().map(|s| s.recontext(ctx)).collect(),
            noises: self.noises,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm {
    pub xi: Vec<Series>,
    pub eta: Vec<Series>,
    pub f: Vec<Series>,
    pub g: Vec<Series>,
    pub certified_order: Option<u32>,
    pub policy: Policy,
}

impl NormalForm {
    pub fn identity(spec: &SystemSpec, policy: Policy) -> Self {
        let z = Series::zero(&spec.ctx);
        let d = spec.ctx.dims;
        Self {
            xi: vec![z.clone(); d.slow],
            eta: vec![z.clone(); d.fast],
            f: vec![z.clone(); d.slow],
            g: vec![z; d.fast],
            certified_order: None,
            policy,
        }
    }

    pub fn ctx(&self) -> &Arc<Ctx> {
        self.xi
            .first()
            .or(self.eta.first())
            .expect("at least one variable")
            .ctx()
    }

    /// `x = X + xi`, `y = Y + eta` as full series.
    pub fn transform(&self) -> Vec<Series> {
        let ctx = self.ctx().clone();
        let d = ctx.dims;
        (0..d.state())
            .map(|v| {
                let corr = if v < d.slow { &self.xi[v] } else { &self.eta[v - d.slow] };
                Series::var(&ctx, v).add(corr)
            })
            .collect()
    }

    /// `X' = A X + F`, `Y' = B Y + G` as full series.
    pub fn rates(&self, spec: &SystemSpec) -> Vec<Series> {
        let ctx = self.ctx().clone();
        let d = ctx.dims;
        let mut out = Vec::with_capacity(d.state());
        for i in 0..d.slow {
            let mut r = self.f[i].clone();
            for (k, a) in spec.a[i].iter().enumerate() {
                if !a.is_zero() {
                    r.add_assign(&Series::var(&ctx, k).scale(a));
                }
            }
            out.push(r);
        }
        for j in 0..d.fast {
            out.push(self.g[j].add(&Series::var(&ctx, d.slow + j).scale(&spec.b_diag[j])));
        }
        out
    }

    pub fn recontext(&self, ctx: &Arc<Ctx>) -> NormalForm {
        let rc = |v: &Vec<Series>| v.iter().map(|s| s.recontext(ctx)).collect();
        NormalForm {
            xi: rc(&self.xi),
            eta: rc(&self.eta),
            f: rc(&self.f),
            g: rc(&self.g),
            certified_order: self.certified_order,
            policy: self.policy.clone(),
        }
    }

    /// Structural invariants; returns a description of each violation.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let d = self.ctx().dims;
        let fast = d.slow..d.state();
        for (name, list) in [("xi", &self.xi), ("eta", &self.eta)] {
            for (i, s) in list.iter().enumerate() {
                for (k, _) in s.iter() {
                    if k.grade == 0 {
                        out.push(format!("{name}[{i}] has a grade-0 term"));
                    }
                    if k.noise.bare_count() > 0 {
                        out.push(format!("{name}[{i}] has a bare white noise in {}", k.noise));
                    }
                }
            }
        }
        for (j, s) in self.g.iter().enumerate() {
            for (k, _) in s.iter() {
                if k.exps[fast.clone()].iter().all(|&e| e == 0) {
                    out.push(format!("G[{j}] has a term without a fast factor"));
                }
            }
        }
        if self.policy.anticipation == crate::homological::Anticipation::Allowed
            && self.policy.mu_min.is_zero()
        {
            for (i, s) in self.f.iter().enumerate() {
                for (k, _) in s.iter() {
                    if k.exps[fast.clone()].iter().any(|&e| e > 0) {
                        out.push(format!("F[{i}] depends on fast variables"));
                    }
                    if k.noise.has_positive_rate() {
                        out.push(format!("F[{i}] anticipates noise"));
                    }
                }
            }
        }
        if self.policy.anticipation == crate::homological::Anticipation::Forbidden {
            for s in self.xi.iter().chain(&self.eta).chain(&self.f).chain(&self.g) {
                if s.iter().any(|(k, _)| k.noise.has_positive_rate()) {
                    out.push("anticipating convolution under the no-anticipation policy".into());
                }
            }
        }
        out
    }
}

/// Residuals of the slow and fast equations for the current construction.
pub fn compute_residual(
    spec: &SystemSpec,
    nf: &NormalForm,
) -> Result<(Vec<Series>, Vec<Series>), EngineError> {
    let state = nf.transform();
    let rates = nf.rates(spec);
    Ok((slow_residual(spec, nf, &state, &rates)?, fast_residual(spec, nf, &state, &rates)?))
}

fn slow_residual(
    spec: &SystemSpec,
    nf: &NormalForm,
    state: &[Series],
    rates: &[Series],
) -> Result<Vec<Series>, EngineError> {
    let mut out = Vec::with_capacity(nf.xi.len());
    for i in 0..nf.xi.len() {
        let mut r = spec.f[i].substitute(state)?;
        for (k, a) in spec.a[i].iter().enumerate() {
            if !a.is_zero() {
                r.add_assign(&nf.xi[k].scale(a));
            }
        }
        r = r.sub(&nf.f[i]).sub(&nf.xi[i].time_derivative(rates)?);
        out.push(r);
    }
    Ok(out)
}

fn fast_residual(
    spec: &SystemSpec,
    nf: &NormalForm,
    state: &[Series],
    rates: &[Series],
) -> Result<Vec<Series>, EngineError> {
    let mut out = Vec::with_capacity(nf.eta.len());
    for j in 0..nf.eta.len() {
        let r = spec.g[j]
            .substitute(state)?
            .add(&nf.eta[j].scale(&spec.b_diag[j]))
            .sub(&nf.g[j])
            .sub(&nf.eta[j].time_derivative(rates)?);
        out.push(r);
    }
    Ok(out)
}

fn lowest_grade(res: &[Series]) -> Option<u32> {
    res.iter().filter_map(|s| s.min_grade()).min()
}

/// Solves every residual term of grade `g0` in one block of equations.
fn absorb(
    spec: &SystemSpec,
    nf: &mut NormalForm,
    res: &[Series],
    g0: u32,
    fast: bool,
) -> Result<bool, EngineError> {
    let ctx = spec.ctx.clone();
    let d = ctx.dims;
    let mut touched = false;
    for (e, r) in res.iter().enumerate() {
        for ((grade, exps), c) in r.at_grade(g0).by_monomial() {
            debug_assert_eq!(grade, g0);
            let q = &exps[d.slow..d.state()];
            let mu = if fast {
                fast_rate(q, &spec.b_diag, e)
            } else {
                slow_rate(q, &spec.b_diag)
            };
            let t = solve(&c, &mu, &nf.policy)?;
            let mono = |p: &crate::noise::NoisePoly| {
                let mut s = Series::zero(&ctx);
                for (n, k) in p.iter() {
                    s.add_term(exps.clone(), n.clone(), k.clone());
                }
                s
            };
            let (tr, ev) = if fast {
                (&mut nf.eta[e], &mut nf.g[e])
            } else {
                (&mut nf.xi[e], &mut nf.f[e])
            };
            tr.add_assign(&mono(&t.transform));
            ev.add_assign(&mono(&t.evolution));
            touched = true;
        }
    }
    Ok(touched)
}

/// One sweep at the lowest residual grade: slow block, then fast block.
/// Returns the grade processed, or `None` when the residual vanishes.
pub fn refine_once(spec: &SystemSpec, nf: &mut NormalForm) -> Result<Option<u32>, EngineError> {
    let (rx, ry) = compute_residual(spec, nf)?;
    let Some(g0) = lowest_grade(&rx).into_iter().chain(lowest_grade(&ry)).min() else {
        return Ok(None);
    };
    let d = spec.ctx.dims;
    let repeats = if spec.a_is_zero() { 1 } else { d.slow + 1 };
    let mut res = rx;
    for pass in 0..repeats {
        if pass > 0 {
            let state = nf.transform();
            let rates = nf.rates(spec);
            res = slow_residual(spec, nf, &state, &rates)?;
        }
        if !absorb(spec, nf, &res, g0, false)? {
            break;
        }
    }
    for _ in 0..repeats {
        let state = nf.transform();
        let rates = nf.rates(spec);
        let res = fast_residual(spec, nf, &state, &rates)?;
        if !absorb(spec, nf, &res, g0, true)? {
            break;
        }
    }
    Ok(Some(g0))
}

/// Builds the normal form to the truncation of `spec.ctx`, then certifies it.
pub fn construct(spec: &SystemSpec, policy: Policy) -> Result<NormalForm, EngineError> {
    let mut nf = NormalForm::identity(spec, policy);
    construct_from(spec, &mut nf)?;
    Ok(nf)
}

/// Continues the iteration from an existing construction.
pub fn construct_from(spec: &SystemSpec, nf: &mut NormalForm) -> Result<(), EngineError> {
    let budget = spec.order() as usize + 5;
    let mut last = None;
    for _ in 0..budget {
        match refine_once(spec, nf)? {
            None => {
                let n = spec.order();
                let got = verify_order(spec, nf)?;
                if got <= n {
                    return Err(EngineError::Certification {
                        claimed: n + 1,
                        found: got,
                    });
                }
                nf.certified_order = Some(got);
                return Ok(());
            }
            Some(g) => {
                if last.is_some_and(|l| g < l) {
                    break;
                }
                last = Some(g);
            }
        }
    }
    let (rx, ry) = compute_residual(spec, nf)?;
    let residual = rx
        .iter()
        .chain(&ry)
        .enumerate()
        .map(|(i, s)| format!("  [{i}] {}", s.render()))
        .collect::<Vec<_>>()
        .join("\n");
    Err(EngineError::NonConvergence {
        sweeps: budget,
        residual,
    })
}

fn h_coefficient(s: &Series, h: usize) -> Series {
    let mut out = Series::zero(s.ctx());
    for (k, c) in s.iter() {
        if k.exps[h] == 1 {
            let mut exps = k.exps.clone();
            exps[h] = 0;
            out.add_term(exps, k.noise.clone(), c.clone());
        }
    }
    out
}

fn naive_substitute(target: &Series, state: &[Series]) -> Series {
    let ctx = target.ctx().clone();
    let mut out = Series::zero(&ctx);
    for (k, c) in target.iter() {
        let mut exps = k.exps.clone();
        exps[..state.len()].fill(0);
        let mut acc = Series::monomial(&ctx, exps, k.noise.clone(), c.clone());
        for (v, s) in state.iter().enumerate() {
            for _ in 0..k.exps[v] {
                acc = acc.mul(s);
            }
        }
        out.add_assign(&acc);
    }
    out
}

/// Residual grade of `nf` recomputed from scratch one order beyond the
/// truncation. The time derivative along the new evolution is taken by the
/// shift `X -> X + h X'` with a nilpotent `h`, independently of the partial
/// derivative path used during construction. Returns the lowest grade of a
/// residual term inside the original caps, at most `order + 1`.
pub fn verify_order(spec: &SystemSpec, nf: &NormalForm) -> Result<u32, EngineError> {
    let base = spec.ctx.as_ref();
    let raised = base.with_trunc(base.trunc.raised());
    let hctx = raised.with_extra_param("h", 0, Some(1));
    let h = hctx.dims.total() - 1;
    let spec_h = spec.recontext(&hctx);
    let nf_h = nf.recontext(&hctx);
    let d = hctx.dims;

    let state = nf_h.transform();
    let rates = nf_h.rates(&spec_h);
    let hv = Series::var(&hctx, h);
    let mut shift: Vec<Option<Series>> = (0..d.state())
        .map(|v| Some(Series::var(&hctx, v).add(&hv.mul(&rates[v]))))
        .collect();
    shift.extend(std::iter::repeat_n(None, d.params));

    let mut lowest = base.trunc.total + 1;
    for v in 0..d.state() {
        let mut rhs = if v < d.slow {
            let mut r = naive_substitute(&spec_h.f[v], &state);
            for (k, a) in spec_h.a[v].iter().enumerate() {
                if !a.is_zero() {
                    r.add_assign(&state[k].scale(a));
                }
            }
            r
        } else {
            let j = v - d.slow;
            naive_substitute(&spec_h.g[j], &state).add(&state[v].scale(&spec_h.b_diag[j]))
        };
        let moved = state[v].compose(&shift)?;
        let along_flow = h_coefficient(&moved, h);
        rhs = rhs.sub(&along_flow).sub(&state[v].partial_t()?);
        for (k, _) in rhs.iter() {
            if k.exps[h] == 0 && base.trunc.within_caps(&k.exps[..h]) {
                lowest = lowest.min(k.grade);
            }
        }
    }
    Ok(lowest)
}

/// `true` when no noise factor anywhere in `s` satisfies `pred`.
pub fn noise_free_of(s: &Series, pred: impl Fn(&NoiseExpr) -> bool) -> bool {
    s.iter().all(|(k, _)| !pred(&k.noise))
}
