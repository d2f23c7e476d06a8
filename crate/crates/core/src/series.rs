//! Truncated multivariate series with exact rational coefficients.
//!
//! A series lives in a [`Ctx`] that fixes the variable layout
//! (slow ++ fast ++ parameters), their display names and the truncation
//! rule. Each term is `coeff * monomial * noise` where the noise factor is a
//! canonical [`NoiseExpr`]; terms are kept in graded lexicographic order.

use crate::noise::{diff_expr, NoiseError, NoiseExpr, NoisePoly};
use crate::rational::{fmt_q, qi, Q};
use num_traits::Zero;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SeriesError {
    #[error("series live in different variable contexts")]
    DimensionMismatch,
    #[error("expected {expected} bindings, got {got}")]
    BindingCount { expected: usize, got: usize },
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("parse error at column {col}: {msg}")]
    Parse { col: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub slow: usize,
    pub fast: usize,
    pub params: usize,
}

impl Dims {
    pub fn total(&self) -> usize {
        self.slow + self.fast + self.params
    }

    pub fn state(&self) -> usize {
        self.slow + self.fast
    }

    pub fn fast_index(&self, j: usize) -> usize {
        self.slow + j
    }

    pub fn param_index(&self, k: usize) -> usize {
        self.slow + self.fast + k
    }
}

/// Which terms a series keeps. A term survives when its weighted grade is at
/// most `total` and every exponent respects its optional cap.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Truncation {
    pub total: u32,
    pub caps: Vec<Option<u32>>,
    pub weights: Vec<u32>,
}

impl Truncation {
    pub fn uniform(vars: usize, total: u32) -> Self {
        Self {
            total,
            caps: vec![None; vars],
            weights: vec![1; vars],
        }
    }

    pub fn grade(&self, exps: &[u32]) -> u32 {
        exps.iter().zip(&self.weights).map(|(e, w)| e * w).sum()
    }

    pub fn within_caps(&self, exps: &[u32]) -> bool {
        exps.iter()
            .zip(&self.caps)
            .all(|(e, c)| c.is_none_or(|c| *e <= c))
    }

    pub fn keeps(&self, exps: &[u32]) -> bool {
        self.grade(exps) <= self.total && self.within_caps(exps)
    }

    /// One more order everywhere: total and each cap raised by one.
    pub fn raised(&self) -> Self {
        Self {
            total: self.total + 1,
            caps: self.caps.iter().map(|c| c.map(|c| c + 1)).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// Variable layout, names and truncation shared by a family of series.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ctx {
    pub dims: Dims,
    pub names: Vec<String>,
    pub trunc: Truncation,
}

impl Ctx {
    pub fn new(dims: Dims, names: Vec<String>, trunc: Truncation) -> Arc<Self> {
        assert_eq!(names.len(), dims.total());
        assert_eq!(trunc.caps.len(), dims.total());
        assert_eq!(trunc.weights.len(), dims.total());
        Arc::new(Self { dims, names, trunc })
    }

    /// A copy with a different truncation.
    pub fn with_trunc(&self, trunc: Truncation) -> Arc<Self> {
        Ctx::new(self.dims, self.names.clone(), trunc)
    }

    /// A copy with one extra parameter appended.
    pub fn with_extra_param(&self, name: &str, weight: u32, cap: Option<u32>) -> Arc<Self> {
        let mut dims = self.dims;
        dims.params += 1;
        let mut names = self.names.clone();
        names.push(name.to_string());
        let mut trunc = self.trunc.clone();
        trunc.caps.push(cap);
        trunc.weights.push(weight);
        Ctx::new(dims, names, trunc)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key {
    pub grade: u32,
    pub exps: Vec<u32>,
    pub noise: NoiseExpr,
}

#[derive(Debug, Clone)]
pub struct Series {
    ctx: Arc<Ctx>,
    terms: BTreeMap<Key, Q>,
}

impl PartialEq for Series {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms && same_ctx(&self.ctx, &other.ctx)
    }
}

impl Eq for Series {}

fn same_ctx(a: &Arc<Ctx>, b: &Arc<Ctx>) -> bool {
    Arc::ptr_eq(a, b) || a.dims == b.dims && a.trunc == b.trunc
}

impl Series {
    pub fn zero(ctx: &Arc<Ctx>) -> Self {
        Self {
            ctx: ctx.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(ctx: &Arc<Ctx>, c: Q) -> Self {
        let mut s = Self::zero(ctx);
        s.add_term(vec![0; ctx.dims.total()], NoiseExpr::one(), c);
        s
    }

    pub fn one(ctx: &Arc<Ctx>) -> Self {
        Self::constant(ctx, qi(1))
    }

    /// The variable with layout index `i`.
    pub fn var(ctx: &Arc<Ctx>, i: usize) -> Self {
        let mut exps = vec![0; ctx.dims.total()];
        exps[i] = 1;
        let mut s = Self::zero(ctx);
        s.add_term(exps, NoiseExpr::one(), qi(1));
        s
    }

    pub fn monomial(ctx: &Arc<Ctx>, exps: Vec<u32>, noise: NoiseExpr, c: Q) -> Self {
        let mut s = Self::zero(ctx);
        s.add_term(exps, noise, c);
        s
    }

    pub fn noise(ctx: &Arc<Ctx>, p: &NoisePoly) -> Self {
        let mut s = Self::zero(ctx);
        for (e, c) in p.iter() {
            s.add_term(vec![0; ctx.dims.total()], e.clone(), c.clone());
        }
        s
    }

    pub fn ctx(&self) -> &Arc<Ctx> {
        &self.ctx
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Key, &Q)> {
        self.terms.iter()
    }

    pub fn coeff(&self, exps: &[u32], noise: &NoiseExpr) -> Q {
        let key = Key {
            grade: self.ctx.trunc.grade(exps),
            exps: exps.to_vec(),
            noise: noise.clone(),
        };
        self.terms.get(&key).cloned().unwrap_or_else(Q::zero)
    }

    /// Adds `c * x^exps * noise`, dropping it if outside the truncation.
    pub fn add_term(&mut self, exps: Vec<u32>, noise: NoiseExpr, c: Q) {
        if c.is_zero() || !self.ctx.trunc.keeps(&exps) {
            return;
        }
        let key = Key {
            grade: self.ctx.trunc.grade(&exps),
            exps,
            noise,
        };
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    fn check(&self, other: &Series) -> Result<(), SeriesError> {
        if same_ctx(&self.ctx, &other.ctx) {
            Ok(())
        } else {
            Err(SeriesError::DimensionMismatch)
        }
    }

    pub fn try_add(&self, other: &Series) -> Result<Series, SeriesError> {
        self.check(other)?;
        let mut r = self.clone();
        for (k, c) in &other.terms {
            r.add_term(k.exps.clone(), k.noise.clone(), c.clone());
        }
        Ok(r)
    }

    pub fn add(&self, other: &Series) -> Series {
        self.try_add(other).expect("series context mismatch")
    }

    pub fn add_assign(&mut self, other: &Series) {
        assert!(same_ctx(&self.ctx, &other.ctx), "series context mismatch");
        for (k, c) in &other.terms {
            self.add_term(k.exps.clone(), k.noise.clone(), c.clone());
        }
    }

    pub fn sub(&self, other: &Series) -> Series {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Series {
        self.scale(&qi(-1))
    }

    pub fn scale(&self, k: &Q) -> Series {
        if k.is_zero() {
            return Series::zero(&self.ctx);
        }
        Series {
            ctx: self.ctx.clone(),
            terms: self.terms.iter().map(|(key, c)| (key.clone(), c * k)).collect(),
        }
    }

    pub fn try_mul(&self, other: &Series) -> Result<Series, SeriesError> {
        self.check(other)?;
        let total = self.ctx.trunc.total;
        let mut r = Series::zero(&self.ctx);
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                if ka.grade + kb.grade > total {
                    break;
                }
                let exps: Vec<u32> = ka.exps.iter().zip(&kb.exps).map(|(a, b)| a + b).collect();
                r.add_term(exps, ka.noise.mul(&kb.noise), ca * cb);
            }
        }
        Ok(r)
    }

    pub fn mul(&self, other: &Series) -> Series {
        self.try_mul(other).expect("series context mismatch")
    }

    pub fn pow(&self, k: u32) -> Series {
        let mut r = Series::one(&self.ctx);
        for _ in 0..k {
            r = r.mul(self);
        }
        r
    }

    pub fn mul_noise(&self, p: &NoisePoly) -> Series {
        let mut r = Series::zero(&self.ctx);
        for (k, c) in &self.terms {
            for (e, ce) in p.iter() {
                r.add_term(k.exps.clone(), k.noise.mul(e), c * ce);
            }
        }
        r
    }

    /// Drops every term above grade `n`; the context's total cap becomes
    /// `min(total, n)`.
    pub fn grade_truncate(&self, n: u32) -> Series {
        let mut trunc = self.ctx.trunc.clone();
        trunc.total = trunc.total.min(n);
        let ctx = self.ctx.with_trunc(trunc);
        self.recontext(&ctx)
    }

    /// The same terms placed in another context with the same layout; terms
    /// the new truncation rejects are dropped.
    pub fn recontext(&self, ctx: &Arc<Ctx>) -> Series {
        let extra = ctx.dims.total().saturating_sub(self.ctx.dims.total());
        let mut r = Series::zero(ctx);
        for (k, c) in &self.terms {
            let mut exps = k.exps.clone();
            exps.extend(std::iter::repeat_n(0, extra));
            r.add_term(exps, k.noise.clone(), c.clone());
        }
        r
    }

    /// Keeps the terms satisfying `pred`.
    pub fn filter(&self, mut pred: impl FnMut(&Key, &Q) -> bool) -> Series {
        Series {
            ctx: self.ctx.clone(),
            terms: self
                .terms
                .iter()
                .filter(|(k, c)| pred(k, c))
                .map(|(k, c)| (k.clone(), c.clone()))
                .collect(),
        }
    }

    pub fn at_grade(&self, g: u32) -> Series {
        self.filter(|k, _| k.grade == g)
    }

    pub fn min_grade(&self) -> Option<u32> {
        self.terms.keys().next().map(|k| k.grade)
    }

    /// Partial derivative with respect to layout variable `i`.
    pub fn partial(&self, i: usize) -> Series {
        let mut r = Series::zero(&self.ctx);
        for (k, c) in &self.terms {
            let e = k.exps[i];
            if e == 0 {
                continue;
            }
            let mut exps = k.exps.clone();
            exps[i] -= 1;
            r.add_term(exps, k.noise.clone(), c * qi(e as i64));
        }
        r
    }

    /// Explicit time derivative acting on the noise factors only.
    pub fn partial_t(&self) -> Result<Series, NoiseError> {
        let mut r = Series::zero(&self.ctx);
        for (k, c) in &self.terms {
            if k.noise.is_one() {
                continue;
            }
            for (e, ce) in diff_expr(&k.noise)?.iter() {
                r.add_term(k.exps.clone(), e.clone(), c * ce);
            }
        }
        Ok(r)
    }

    /// `d/dt = d_t + sum_v (dv/dt) d_v` with one rate series per state
    /// variable (slow then fast).
    pub fn time_derivative(&self, rates: &[Series]) -> Result<Series, SeriesError> {
        let n = self.ctx.dims.state();
        if rates.len() != n {
            return Err(SeriesError::BindingCount {
                expected: n,
                got: rates.len(),
            });
        }
        let mut r = self.partial_t()?;
        for (i, rate) in rates.iter().enumerate() {
            let d = self.partial(i);
            if !d.is_zero() {
                r.add_assign(&d.try_mul(rate)?);
            }
        }
        Ok(r)
    }

    /// Composition: every variable `i` with `bindings[i] = Some(s)` is
    /// replaced by `s`; `None` leaves the variable in place.
    pub fn compose(&self, bindings: &[Option<Series>]) -> Result<Series, SeriesError> {
        let nv = self.ctx.dims.total();
        if bindings.len() != nv {
            return Err(SeriesError::BindingCount {
                expected: nv,
                got: bindings.len(),
            });
        }
        for b in bindings.iter().flatten() {
            self.check(b)?;
        }
        let mut powers: Vec<Vec<Series>> = vec![Vec::new(); nv];
        let mut out = Series::zero(&self.ctx);
        for (k, c) in &self.terms {
            let mut exps = vec![0; nv];
            let mut acc = Series::monomial(&self.ctx, vec![0; nv], k.noise.clone(), c.clone());
            for (i, &e) in k.exps.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                match &bindings[i] {
                    None => exps[i] = e,
                    Some(b) => {
                        let pw = &mut powers[i];
                        if pw.is_empty() {
                            pw.push(Series::one(&self.ctx));
                        }
                        while pw.len() <= e as usize {
                            let next = pw.last().unwrap().mul(b);
                            pw.push(next);
                        }
                        acc = acc.mul(&pw[e as usize]);
                    }
                }
                if acc.is_zero() {
                    break;
                }
            }
            if acc.is_zero() {
                continue;
            }
            if exps.iter().any(|&e| e > 0) {
                acc = acc.mul(&Series::monomial(&self.ctx, exps, NoiseExpr::one(), qi(1)));
            }
            out.add_assign(&acc);
        }
        Ok(out)
    }

    /// Substitutes the state variables (slow then fast); parameters stay.
    pub fn substitute(&self, state: &[Series]) -> Result<Series, SeriesError> {
        let d = self.ctx.dims;
        if state.len() != d.state() {
            return Err(SeriesError::BindingCount {
                expected: d.state(),
                got: state.len(),
            });
        }
        let mut b: Vec<Option<Series>> = state.iter().cloned().map(Some).collect();
        b.extend(std::iter::repeat_n(None, d.params));
        self.compose(&b)
    }

    /// Sets variable `i` to zero.
    pub fn at_zero(&self, i: usize) -> Series {
        self.filter(|k, _| k.exps[i] == 0)
    }

    /// Groups the terms by monomial.
    pub fn by_monomial(&self) -> BTreeMap<(u32, Vec<u32>), NoisePoly> {
        let mut m: BTreeMap<(u32, Vec<u32>), NoisePoly> = BTreeMap::new();
        for (k, c) in &self.terms {
            m.entry((k.grade, k.exps.clone()))
                .or_default()
                .add_term(k.noise.clone(), c.clone());
        }
        m
    }

    /// Applies `f` to the noise factor of every term.
    pub fn map_noise(
        &self,
        mut f: impl FnMut(&NoiseExpr) -> Result<NoisePoly, SeriesError>,
    ) -> Result<Series, SeriesError> {
        let mut r = Series::zero(&self.ctx);
        for (k, c) in &self.terms {
            for (e, ce) in f(&k.noise)?.iter() {
                r.add_term(k.exps.clone(), e.clone(), c * ce);
            }
        }
        Ok(r)
    }

    /// Numeric value with the given variable values and a noise evaluator.
    pub fn eval(&self, vals: &[f64], noise: &mut impl FnMut(&NoiseExpr) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|(k, c)| {
                let mono: f64 = k
                    .exps
                    .iter()
                    .zip(vals)
                    .map(|(&e, &v)| v.powi(e as i32))
                    .product();
                let nz = if k.noise.is_one() { 1.0 } else { noise(&k.noise) };
                crate::rational::to_f64(c) * mono * nz
            })
            .sum()
    }

    /// Canonical one-line rendering; `parse` inverts it.
    pub fn render(&self) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let d = self.ctx.dims;
        let order: Vec<usize> = (d.state()..d.total()).chain(0..d.state()).collect();
        let mut parts = Vec::with_capacity(self.terms.len());
        for (i, (k, c)) in self.terms.iter().enumerate() {
            let mut s = fmt_q(c, i > 0);
            let mono: Vec<String> = order
                .iter()
                .filter(|&&v| k.exps[v] > 0)
                .map(|&v| match k.exps[v] {
                    1 => self.ctx.names[v].clone(),
                    e => format!("{}^{}", self.ctx.names[v], e),
                })
                .collect();
            if !mono.is_empty() {
                s.push_str(" * ");
                s.push_str(&mono.join(" "));
            }
            if !k.noise.is_one() {
                s.push_str(" * ");
                s.push_str(&k.noise.to_string());
            }
            parts.push(s);
        }
        parts.join(" ")
    }

    /// Parses the canonical rendering produced by [`Series::render`].
    pub fn parse(ctx: &Arc<Ctx>, text: &str) -> Result<Series, SeriesError> {
        crate::text::parse_series(ctx, text)
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::build::*;
    use crate::rational::q;

    fn ctx() -> Arc<Ctx> {
        Ctx::new(
            Dims {
                slow: 1,
                fast: 1,
                params: 1,
            },
            vec!["X".into(), "Y".into(), "s".into()],
            Truncation::uniform(3, 5),
        )
    }

    #[test]
    fn products_and_truncation() {
        let c = ctx();
        let x = Series::var(&c, 0);
        let y = Series::var(&c, 1);
        assert_eq!(x.mul(&y).render(), "1 * X Y");
        let one_xy = Series::one(&c).add(&x.mul(&y));
        assert_eq!(one_xy.mul(&Series::one(&c)), one_xy);
        let t = x.add(&x.pow(3)).grade_truncate(2);
        assert_eq!(t.render(), "1 * X");
    }

    #[test]
    fn noise_square_is_one_term() {
        let c = ctx();
        let s = Series::var(&c, 2);
        let zm = z(-1, &phi(0));
        let a = s.mul_noise(&NoisePoly::term(zm.clone(), qi(1)));
        let sq = a.mul(&a);
        assert_eq!(sq.len(), 1);
        assert_eq!(sq.render(), "1 * s^2 * Z[-1]{ phi[0] }^2");
    }

    #[test]
    fn chain_rule_and_noise_derivative() {
        let c = ctx();
        let x = Series::var(&c, 0);
        let y = Series::var(&c, 1);
        let rates = vec![x.pow(3).neg(), Series::zero(&c)];
        assert_eq!(x.pow(2).time_derivative(&rates).unwrap(), x.pow(4).scale(&qi(-2)));
        let zm = NoisePoly::term(z(-1, &phi(0)), qi(1));
        let yz = y.mul_noise(&zm);
        let rates = vec![Series::zero(&c), y.neg()];
        let d = yz.time_derivative(&rates).unwrap();
        let expect = y
            .mul_noise(&NoisePoly::bare(0))
            .sub(&yz.scale(&qi(2)));
        assert_eq!(d, expect);
    }

    #[test]
    fn substitution() {
        let c = ctx();
        let x = Series::var(&c, 0);
        let y = Series::var(&c, 1);
        let target = x.mul(&y).neg();
        let r = target.substitute(&[x.clone(), y.add(&x.pow(2))]).unwrap();
        assert_eq!(r, x.mul(&y).neg().sub(&x.pow(3)));
        assert_eq!(target.substitute(&[x, y]).unwrap(), target);
    }

    #[test]
    fn render_round_trip() {
        let c = ctx();
        let x = Series::var(&c, 0);
        let s = Series::var(&c, 2);
        let zm = z(-1, &phi(0));
        let e = x
            .scale(&q(3, 2))
            .add(&x.mul(&s).mul_noise(&NoisePoly::term(prod(&[&phi(0), &zm]), qi(-2))))
            .add(&Series::constant(&c, q(-1, 7)));
        let text = e.render();
        assert_eq!(Series::parse(&c, &text).unwrap(), e);
    }
}
