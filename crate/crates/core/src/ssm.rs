//! Post-processing of a normal form: the stochastic slow manifold chart, its
//! expected location, reversion of the transform, initial-condition
//! projection and the long-time replacement of quadratic noises.

use crate::engine::NormalForm;
use crate::noise::{expectation, expectation_given_future, Expectation, NoiseAtom, NoiseExpr, NoisePoly};
use crate::rational::{fmt_q, qi, Q};
use crate::series::{Ctx, Series, SeriesError, Truncation};
use num_traits::Signed;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SsmError {
    #[error("anticipating convolution on the slow manifold: {0}")]
    AnticipationOnSsm(String),
    #[error("noise factors outside the expectation table: {}", .0.join(", "))]
    Unevaluable(Vec<String>),
    #[error("parameter `{0}` is not declared")]
    UnknownParam(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// The transform restricted to `Y = 0`: `x` and `y` as series in the slow
/// variables, parameters and noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmChart {
    pub x: Vec<Series>,
    pub y: Vec<Series>,
}

fn on_manifold(s: &Series) -> Series {
    let d = s.ctx().dims;
    s.filter(|k, _| k.exps[d.slow..d.state()].iter().all(|&e| e == 0))
}

pub fn ssm_parametrisation(nf: &NormalForm) -> Result<SsmChart, SsmError> {
    let t = nf.transform();
    let d = nf.ctx().dims;
    let chart: Vec<Series> = t.iter().map(on_manifold).collect();
    for s in &chart {
        if let Some((k, _)) = s.iter().find(|(k, _)| k.noise.has_positive_rate()) {
            return Err(SsmError::AnticipationOnSsm(k.noise.to_string()));
        }
    }
    let (x, y) = chart.split_at(d.slow);
    Ok(SsmChart {
        x: x.to_vec(),
        y: y.to_vec(),
    })
}

/// Term-wise expectation; on failure lists the offending noise factors.
pub fn expected_series(s: &Series) -> Result<Series, SsmError> {
    let mut bad = Vec::new();
    let mut r = Series::zero(s.ctx());
    for (k, c) in s.iter() {
        match expectation(&k.noise) {
            Expectation::Value(v) => r.add_term(k.exps.clone(), NoiseExpr::one(), c * v),
            Expectation::Unevaluable => bad.push(k.noise.to_string()),
        }
    }
    if bad.is_empty() {
        Ok(r)
    } else {
        bad.dedup();
        Err(SsmError::Unevaluable(bad))
    }
}

/// Expectation over everything but future-only noise factors.
pub fn expected_given_future(s: &Series) -> Result<Series, SsmError> {
    let mut bad = Vec::new();
    let mut r = Series::zero(s.ctx());
    for (k, c) in s.iter() {
        match expectation_given_future(&k.noise) {
            Some(p) => {
                for (e, v) in p.iter() {
                    r.add_term(k.exps.clone(), e.clone(), c * v);
                }
            }
            None => bad.push(k.noise.to_string()),
        }
    }
    if bad.is_empty() {
        Ok(r)
    } else {
        Err(SsmError::Unevaluable(bad))
    }
}

/// `(E[x], E[y])` on the manifold.
pub fn expected_ssm(chart: &SsmChart) -> Result<(Vec<Series>, Vec<Series>), SsmError> {
    let ex = chart.x.iter().map(expected_series).collect::<Result<_, _>>()?;
    let ey = chart.y.iter().map(expected_series).collect::<Result<_, _>>()?;
    Ok((ex, ey))
}

/// The inverse transform: `(X, Y)` as series in the original `(x, y)`, which
/// reuse the layout slots of `(X, Y)`.
pub fn revert(nf: &NormalForm) -> Result<Vec<Series>, SsmError> {
    let ctx = nf.ctx().clone();
    let d = ctx.dims;
    let corr: Vec<&Series> = nf.xi.iter().chain(&nf.eta).collect();
    let ident: Vec<Series> = (0..d.state()).map(|i| Series::var(&ctx, i)).collect();
    let mut inv = ident.clone();
    // each pass fixes at least one more grade, or one more power of a
    // weight-0 variable, so the loop is bounded by the truncation size
    let limit = 2 + ctx.trunc.total as usize
        + ctx.trunc.caps.iter().flatten().map(|&c| c as usize).sum::<usize>();
    for _ in 0..=limit {
        let next: Vec<Series> = ident
            .iter()
            .zip(&corr)
            .map(|(v, c)| Ok(v.sub(&c.substitute(&inv)?)))
            .collect::<Result<_, SeriesError>>()?;
        if next == inv {
            break;
        }
        inv = next;
    }
    Ok(inv)
}

/// Mean and leading variance of the projected initial condition under one
/// information regime.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<Series>,
    /// Leading variance terms only; everything above `variance_grade` is an
    /// uncomputed tail.
    pub variance: Vec<Series>,
    pub variance_grade: Vec<Option<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialProjection {
    /// `X(0)` at the observed state, still carrying every noise factor; this
    /// is also the answer when only part of the past is known.
    pub x0_expr: Vec<Series>,
    /// Nothing about the noise is known.
    pub unconditional: Moments,
    /// The future noise is known; only past noise is averaged.
    pub given_future: Moments,
}

fn doubled(ctx: &Arc<Ctx>) -> Arc<Ctx> {
    let t = &ctx.trunc;
    ctx.with_trunc(Truncation {
        total: 2 * t.total + 1,
        caps: t.caps.iter().map(|c| c.map(|c| 2 * c + 1)).collect(),
        weights: t.weights.clone(),
    })
}

fn moments(
    inv: &[Series],
    mean_of: impl Fn(&Series) -> Result<Series, SsmError>,
    point: &[Option<Series>],
) -> Result<Moments, SsmError> {
    let mut out = Moments {
        mean: Vec::new(),
        variance: Vec::new(),
        variance_grade: Vec::new(),
    };
    for s in inv {
        let m = mean_of(s)?;
        let delta = s.sub(&m);
        let wide = doubled(s.ctx());
        let wide_point: Vec<Option<Series>> = point
            .iter()
            .map(|b| b.as_ref().map(|b| b.recontext(&wide)))
            .collect();
        let (v, g) = match delta.min_grade() {
            None => (Series::zero(&wide), None),
            Some(g) => {
                let lead = delta.at_grade(g).recontext(&wide);
                let v = mean_of(&lead.mul(&lead))?;
                (v, Some(2 * g))
            }
        };
        out.mean.push(m.compose(point)?);
        out.variance.push(v.compose(&wide_point)?);
        out.variance_grade.push(g);
    }
    Ok(out)
}

/// Projects an observed state `(x0, y0)` onto normal-form coordinates using
/// the inverse transform from [`revert`].
pub fn project_initial_condition(inv: &[Series], state: &[Q]) -> Result<InitialProjection, SsmError> {
    let ctx = inv[0].ctx().clone();
    let d = ctx.dims;
    if state.len() != d.state() {
        return Err(SeriesError::BindingCount {
            expected: d.state(),
            got: state.len(),
        }
        .into());
    }
    let mut point: Vec<Option<Series>> = state
        .iter()
        .map(|v| Some(Series::constant(&ctx, v.clone())))
        .collect();
    point.extend(std::iter::repeat_n(None, d.params));
    let x0_expr = inv.iter().map(|s| s.compose(&point)).collect::<Result<_, _>>()?;
    Ok(InitialProjection {
        x0_expr,
        unconditional: moments(inv, expected_series, &point)?,
        given_future: moments(inv, expected_given_future, &point)?,
    })
}

/// A fresh white noise introduced by [`long_time_model`]. The effective
/// forcing is `sqrt(variance) * phi[index]` with `phi[index]` standard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreshNoise {
    pub index: u32,
    pub variance: Q,
    /// The quadratic factor it replaces.
    pub source: NoiseExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongTimeModel {
    pub series: Series,
    pub fresh: Vec<FreshNoise>,
    /// Noise factors the replacement table does not cover; their terms are
    /// left unchanged in `series`.
    pub unevaluable: Vec<NoiseExpr>,
}

/// Recognizes `phi[k] * Z[mu]{ phi[k] }` with `mu < 0` and returns `mu`.
fn quadratic_factor(e: &NoiseExpr) -> Option<Q> {
    match e.atoms() {
        [NoiseAtom::Bare(k), NoiseAtom::Conv { rate, child }] if rate.is_negative() => {
            match child.atoms() {
                [NoiseAtom::Bare(j)] if j == k => Some(rate.clone()),
                _ => None,
            }
        }
        _ => None,
    }
}

/// Replaces every `phi_k Z_mu phi_k` in a slow evolution by its mean `1/2`
/// plus a fresh independent white noise of intensity `1/(2|mu|)`.
/// `noises` is the number of symbols already in use.
pub fn long_time_model(f: &Series, noises: u32) -> LongTimeModel {
    let mut fresh: Vec<FreshNoise> = Vec::new();
    let mut unevaluable = Vec::new();
    let mut series = Series::zero(f.ctx());
    for (k, c) in f.iter() {
        if let Some(mu) = quadratic_factor(&k.noise) {
            let index = match fresh.iter().find(|n| n.source == k.noise) {
                Some(n) => n.index,
                None => {
                    let index = noises + fresh.len() as u32;
                    fresh.push(FreshNoise {
                        index,
                        variance: qi(1) / (qi(2) * mu.abs()),
                        source: k.noise.clone(),
                    });
                    index
                }
            };
            series.add_term(k.exps.clone(), NoiseExpr::one(), c * Q::new(1.into(), 2.into()));
            series.add_term(k.exps.clone(), NoiseExpr::bare(index), c.clone());
            continue;
        }
        if k.noise.has_conv() && !unevaluable.contains(&k.noise) {
            unevaluable.push(k.noise.clone());
        }
        series.add_term(k.exps.clone(), k.noise.clone(), c.clone());
    }
    LongTimeModel {
        series,
        fresh,
        unevaluable,
    }
}

/// The long-time model in slow time `tau = eps t` with the noise amplitude
/// parameter fixed:
/// `dX = drift dtau + sqrt(eps) * sum_k coeff_k sqrt(variance_k) dW_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowTimeModel {
    pub drift: Series,
    /// `(noise index, coefficient, variance)`; the coefficient excludes the
    /// common `sqrt(eps)`.
    pub diffusion: Vec<(u32, Series, Q)>,
    pub eps: usize,
}

impl SlowTimeModel {
    /// The averaged model: drift at `eps = 0` and no noise.
    pub fn averaged_drift(&self) -> Series {
        self.drift.at_zero(self.eps)
    }

    pub fn render(&self) -> String {
        let eps = &self.drift.ctx().names[self.eps];
        let mut s = format!("dX = ({}) dtau", self.drift.render());
        for (k, c, v) in &self.diffusion {
            s.push_str(&format!(" + sqrt({eps}) * sqrt({}) * ({}) dW[{k}]", fmt_q(v, false), c.render()));
        }
        s
    }
}

/// Divides a long-time model (one slow variable) by `eps` and evaluates the
/// parameter `fixed` at `value`. Every term must carry a factor of `eps`.
pub fn to_slow_time(
    model: &LongTimeModel,
    eps: &str,
    fixed: &[(&str, Q)],
) -> Result<SlowTimeModel, SsmError> {
    let ctx = model.series.ctx().clone();
    let e = ctx.index_of(eps).ok_or_else(|| SsmError::UnknownParam(eps.into()))?;
    let mut bindings: Vec<Option<Series>> = vec![None; ctx.dims.total()];
    for (name, v) in fixed {
        let i = ctx.index_of(name).ok_or_else(|| SsmError::UnknownParam(name.to_string()))?;
        bindings[i] = Some(Series::constant(&ctx, v.clone()));
    }
    // division by eps can produce terms the original truncation would keep
    // at a lower grade, so work in the same context: grades only drop
    let mut drift = Series::zero(&ctx);
    let mut per_noise: std::collections::BTreeMap<u32, Series> = Default::default();
    for (k, c) in model.series.iter() {
        if k.exps[e] == 0 {
            return Err(SsmError::Unevaluable(vec![format!(
                "term without a factor of {eps}: {}",
                Series::monomial(&ctx, k.exps.clone(), k.noise.clone(), c.clone()).render()
            )]));
        }
        let mut exps = k.exps.clone();
        exps[e] -= 1;
        match k.noise.atoms() {
            [] => drift.add_term(exps, NoiseExpr::one(), c.clone()),
            [NoiseAtom::Bare(j)] => per_noise.entry(*j).or_insert_with(|| Series::zero(&ctx)).add_term(
                exps,
                NoiseExpr::one(),
                c.clone(),
            ),
            _ => {
                return Err(SsmError::Unevaluable(vec![k.noise.to_string()]));
            }
        }
    }
    let drift = drift.compose(&bindings)?;
    let mut diffusion = Vec::new();
    for (j, c) in per_noise {
        let v = model
            .fresh
            .iter()
            .find(|n| n.index == j)
            .map_or(qi(1), |n| n.variance.clone());
        diffusion.push((j, c.compose(&bindings)?, v));
    }
    Ok(SlowTimeModel { drift, diffusion, eps: e })
}

/// `NoisePoly` view of a pure-noise series, for display and tests.
pub fn noise_part(s: &Series) -> NoisePoly {
    let mut p = NoisePoly::zero();
    for (k, c) in s.iter() {
        if k.exps.iter().all(|&e| e == 0) {
            p.add_term(k.noise.clone(), c.clone());
        }
    }
    p
}
