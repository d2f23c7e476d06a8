//! Convolution calculus for white-noise functionals.
//!
//! A noise expression is a commutative product of atoms. An atom is either a
//! bare white noise `phi[k]` or an exponential convolution
//!
//! ```text
//! Z[mu]{ c }(t) = int_{-inf}^t exp(mu (t - s)) c(s) ds    mu < 0  (memory)
//! Z[mu]{ c }(t) = int_t^{+inf} exp(mu (t - s)) c(s) ds    mu > 0  (anticipation)
//! ```
//!
//! Every expression is kept in canonical form: atoms sorted, convolutions of
//! constants evaluated, and nested convolutions of distinct rates collapsed
//! by the composition identity. Equal keys mean equal expressions.

use crate::rational::{fmt_q, q, qi, sgn, Q};
use num_traits::{Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NoiseError {
    #[error("white noise phi[{0}] has no time derivative")]
    NotDifferentiable(u32),
    #[error("convolution rate {0} repeated; composition is undefined")]
    RepeatedRate(Box<Q>),
    #[error("convolution rate must be nonzero")]
    ZeroRate,
    #[error("noise product `{0}` carries more than one white-noise factor")]
    MalformedResidual(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseAtom {
    Bare(u32),
    Conv { rate: Q, child: NoiseExpr },
}

/// Canonical commutative product of atoms; the empty product is `1`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NoiseExpr {
    atoms: Vec<NoiseAtom>,
}

/// Which stretch of the noise history an atom depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Only the instantaneous white noise.
    Present,
    /// Only noise on `(-inf, t]`.
    Past,
    /// Only noise on `[t, +inf)`.
    Future,
    Mixed,
}

impl NoiseAtom {
    pub fn rate(&self) -> Option<&Q> {
        match self {
            NoiseAtom::Bare(_) => None,
            NoiseAtom::Conv { rate, .. } => Some(rate),
        }
    }

    pub fn window(&self) -> Window {
        match self {
            NoiseAtom::Bare(_) => Window::Present,
            NoiseAtom::Conv { rate, child } => {
                let own = if rate.is_negative() {
                    Window::Past
                } else {
                    Window::Future
                };
                for a in &child.atoms {
                    match a.window() {
                        Window::Present => {}
                        w if w == own => {}
                        _ => return Window::Mixed,
                    }
                }
                own
            }
        }
    }

    fn symbols(&self, out: &mut Vec<u32>) {
        match self {
            NoiseAtom::Bare(k) => out.push(*k),
            NoiseAtom::Conv { child, .. } => child.atoms.iter().for_each(|a| a.symbols(out)),
        }
    }

    fn has_positive_rate(&self) -> bool {
        match self {
            NoiseAtom::Bare(_) => false,
            NoiseAtom::Conv { rate, child } => rate.is_positive() || child.has_positive_rate(),
        }
    }

    fn node_count(&self) -> usize {
        match self {
            NoiseAtom::Bare(_) => 1,
            NoiseAtom::Conv { child, .. } => 1 + child.atoms.iter().map(|a| a.node_count()).sum::<usize>(),
        }
    }
}

impl NoiseExpr {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn bare(k: u32) -> Self {
        Self {
            atoms: vec![NoiseAtom::Bare(k)],
        }
    }

    /// Builds a product from atoms in any order.
    pub fn from_atoms(mut atoms: Vec<NoiseAtom>) -> Self {
        atoms.sort();
        Self { atoms }
    }

    pub fn atoms(&self) -> &[NoiseAtom] {
        &self.atoms
    }

    pub fn is_one(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn bare_count(&self) -> usize {
        self.atoms
            .iter()
            .filter(|a| matches!(a, NoiseAtom::Bare(_)))
            .count()
    }

    /// True when any convolution, at any depth, integrates over the future.
    pub fn has_positive_rate(&self) -> bool {
        self.atoms.iter().any(|a| a.has_positive_rate())
    }

    /// True when some top-level factor is a convolution.
    pub fn has_conv(&self) -> bool {
        self.atoms.iter().any(|a| matches!(a, NoiseAtom::Conv { .. }))
    }

    pub fn symbols(&self) -> Vec<u32> {
        let mut v = Vec::new();
        self.atoms.iter().for_each(|a| a.symbols(&mut v));
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn max_symbol(&self) -> Option<u32> {
        self.symbols().last().copied()
    }

    pub fn node_count(&self) -> usize {
        self.atoms.iter().map(|a| a.node_count()).sum()
    }

    pub fn mul(&self, other: &NoiseExpr) -> NoiseExpr {
        if other.atoms.is_empty() {
            return self.clone();
        }
        if self.atoms.is_empty() {
            return other.clone();
        }
        let mut atoms = Vec::with_capacity(self.atoms.len() + other.atoms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.atoms.len() && j < other.atoms.len() {
            if self.atoms[i] <= other.atoms[j] {
                atoms.push(self.atoms[i].clone());
                i += 1;
            } else {
                atoms.push(other.atoms[j].clone());
                j += 1;
            }
        }
        atoms.extend_from_slice(&self.atoms[i..]);
        atoms.extend_from_slice(&other.atoms[j..]);
        NoiseExpr { atoms }
    }

    /// The product with atom `i` removed.
    pub fn without(&self, i: usize) -> NoiseExpr {
        let mut atoms = self.atoms.clone();
        atoms.remove(i);
        NoiseExpr { atoms }
    }

    /// Rewrites every bare symbol through `map` (used to tag fresh noises).
    pub fn relabel(&self, map: &dyn Fn(u32) -> u32) -> NoiseExpr {
        NoiseExpr::from_atoms(
            self.atoms
                .iter()
                .map(|a| match a {
                    NoiseAtom::Bare(k) => NoiseAtom::Bare(map(*k)),
                    NoiseAtom::Conv { rate, child } => NoiseAtom::Conv {
                        rate: rate.clone(),
                        child: child.relabel(map),
                    },
                })
                .collect(),
        )
    }
}

/// Finite linear combination of noise expressions with rational weights.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct NoisePoly {
    terms: BTreeMap<NoiseExpr, Q>,
}

impl NoisePoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Q) -> Self {
        let mut p = Self::zero();
        p.add_term(NoiseExpr::one(), c);
        p
    }

    pub fn term(e: NoiseExpr, c: Q) -> Self {
        let mut p = Self::zero();
        p.add_term(e, c);
        p
    }

    pub fn bare(k: u32) -> Self {
        Self::term(NoiseExpr::bare(k), qi(1))
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

    pub fn iter(&self) -> impl Iterator<Item = (&NoiseExpr, &Q)> {
        self.terms.iter()
    }

    pub fn coeff(&self, e: &NoiseExpr) -> Q {
        self.terms.get(e).cloned().unwrap_or_else(Q::zero)
    }

    pub fn add_term(&mut self, e: NoiseExpr, c: Q) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
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

    pub fn add_assign(&mut self, other: &NoisePoly) {
        for (e, c) in &other.terms {
            self.add_term(e.clone(), c.clone());
        }
    }

    pub fn add(&self, other: &NoisePoly) -> NoisePoly {
        let mut r = self.clone();
        r.add_assign(other);
        r
    }

    pub fn sub(&self, other: &NoisePoly) -> NoisePoly {
        let mut r = self.clone();
        for (e, c) in &other.terms {
            r.add_term(e.clone(), -c.clone());
        }
        r
    }

    pub fn scale(&self, k: &Q) -> NoisePoly {
        if k.is_zero() {
            return NoisePoly::zero();
        }
        NoisePoly {
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * k)).collect(),
        }
    }

    pub fn mul(&self, other: &NoisePoly) -> NoisePoly {
        let mut r = NoisePoly::zero();
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                r.add_term(a.mul(b), ca * cb);
            }
        }
        r
    }

    pub fn mul_expr(&self, e: &NoiseExpr) -> NoisePoly {
        NoisePoly {
            terms: self.terms.iter().map(|(a, c)| (a.mul(e), c.clone())).collect(),
        }
    }

    pub fn has_positive_rate(&self) -> bool {
        self.terms.keys().any(|e| e.has_positive_rate())
    }

    pub fn into_terms(self) -> BTreeMap<NoiseExpr, Q> {
        self.terms
    }
}

impl FromIterator<(NoiseExpr, Q)> for NoisePoly {
    fn from_iter<I: IntoIterator<Item = (NoiseExpr, Q)>>(iter: I) -> Self {
        let mut p = NoisePoly::zero();
        for (e, c) in iter {
            p.add_term(e, c);
        }
        p
    }
}

/// Coefficients `(k_mu, k_nu)` with `Z_mu Z_nu = k_mu Z_mu + k_nu Z_nu`.
pub fn compose(mu: &Q, nu: &Q) -> Result<(Q, Q), NoiseError> {
    if mu.is_zero() || nu.is_zero() {
        return Err(NoiseError::ZeroRate);
    }
    let d = mu - nu;
    if sgn(mu) != sgn(nu) {
        let k = qi(1) / d.abs();
        Ok((k.clone(), k))
    } else if d.is_zero() {
        Err(NoiseError::RepeatedRate(Box::new(mu.clone())))
    } else {
        let k = qi(-sgn(mu) as i64) / d;
        Ok((k.clone(), -k))
    }
}

/// `Z[rate]` applied to one product, returned in canonical form.
pub fn conv_expr(rate: &Q, e: &NoiseExpr) -> Result<NoisePoly, NoiseError> {
    if rate.is_zero() {
        return Err(NoiseError::ZeroRate);
    }
    if e.is_one() {
        return Ok(NoisePoly::constant(qi(1) / rate.abs()));
    }
    if let [NoiseAtom::Conv { rate: nu, child }] = e.atoms.as_slice() {
        if nu != rate {
            let (k_mu, k_nu) = compose(rate, nu)?;
            let mut out = conv_expr(rate, child)?.scale(&k_mu);
            out.add_term(e.clone(), k_nu);
            return Ok(out);
        }
    }
    Ok(NoisePoly::term(
        NoiseExpr {
            atoms: vec![NoiseAtom::Conv {
                rate: rate.clone(),
                child: e.clone(),
            }],
        },
        qi(1),
    ))
}

/// `Z[rate]` applied linearly to a combination.
pub fn conv(rate: &Q, p: &NoisePoly) -> Result<NoisePoly, NoiseError> {
    let mut out = NoisePoly::zero();
    for (e, c) in p.iter() {
        out.add_assign(&conv_expr(rate, e)?.scale(c));
    }
    Ok(out)
}

/// `d/dt Z[mu]{c} = -sgn(mu) c + mu Z[mu]{c}`.
pub fn diff_atom(a: &NoiseAtom) -> Result<NoisePoly, NoiseError> {
    match a {
        NoiseAtom::Bare(k) => Err(NoiseError::NotDifferentiable(*k)),
        NoiseAtom::Conv { rate, child } => {
            let mut p = NoisePoly::term(child.clone(), qi(-sgn(rate) as i64));
            p.add_term(NoiseExpr::from_atoms(vec![a.clone()]), rate.clone());
            Ok(p)
        }
    }
}

/// Time derivative of a product by the product rule over its atoms.
pub fn diff_expr(e: &NoiseExpr) -> Result<NoisePoly, NoiseError> {
    let mut out = NoisePoly::zero();
    let mut total_rate = Q::zero();
    for (i, a) in e.atoms.iter().enumerate() {
        match a {
            NoiseAtom::Bare(k) => return Err(NoiseError::NotDifferentiable(*k)),
            NoiseAtom::Conv { rate, child } => {
                total_rate += rate;
                out.add_term(child.mul(&e.without(i)), qi(-sgn(rate) as i64));
            }
        }
    }
    out.add_term(e.clone(), total_rate);
    Ok(out)
}

pub fn diff_poly(p: &NoisePoly) -> Result<NoisePoly, NoiseError> {
    let mut out = NoisePoly::zero();
    for (e, c) in p.iter() {
        out.add_assign(&diff_expr(e)?.scale(c));
    }
    Ok(out)
}

/// Result of the closed-world expectation table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    Value(Q),
    Unevaluable,
}

impl Expectation {
    pub fn value(self) -> Option<Q> {
        match self {
            Expectation::Value(v) => Some(v),
            Expectation::Unevaluable => None,
        }
    }
}

fn independent(a: &NoiseAtom, b: &NoiseAtom) -> bool {
    let (mut sa, mut sb) = (Vec::new(), Vec::new());
    a.symbols(&mut sa);
    b.symbols(&mut sb);
    if !sa.iter().any(|k| sb.contains(k)) {
        return true;
    }
    matches!(
        (a.window(), b.window()),
        (Window::Past, Window::Future) | (Window::Future, Window::Past)
    )
}

/// Splits the atoms of `e` into mutually independent groups.
fn independent_groups(e: &NoiseExpr) -> Vec<Vec<NoiseAtom>> {
    let n = e.atoms.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if !independent(&e.atoms[i], &e.atoms[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<NoiseAtom>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(e.atoms[i].clone());
    }
    groups.into_values().collect()
}

fn expect_group(atoms: &[NoiseAtom]) -> Expectation {
    use Expectation::*;
    match atoms {
        [NoiseAtom::Bare(_)] => Value(Q::zero()),
        [NoiseAtom::Conv { rate, child }] => match expectation(child) {
            Value(v) => Value(v / rate.abs()),
            Unevaluable => Unevaluable,
        },
        [a @ NoiseAtom::Conv { rate, child }, b] if a == b => match child.atoms.as_slice() {
            [NoiseAtom::Bare(_)] => Value(qi(1) / (qi(2) * rate.abs())),
            _ => Unevaluable,
        },
        [NoiseAtom::Bare(k), NoiseAtom::Conv { rate, child }] if rate.is_negative() => {
            match child.atoms.as_slice() {
                [NoiseAtom::Bare(j)] if j == k => Value(q(1, 2)),
                _ => Unevaluable,
            }
        }
        _ => Unevaluable,
    }
}

/// Expectation by the rule table: `E[1]=1`, `E[phi]=0`, `E[Z c] = Z E[c]`,
/// `E[(Z_mu phi)^2] = 1/(2|mu|)`, `E[phi Z_mu phi] = 1/2` for `mu < 0`, with
/// factorization over independent groups. Anything else is `Unevaluable`.
pub fn expectation(e: &NoiseExpr) -> Expectation {
    let mut acc = qi(1);
    for g in independent_groups(e) {
        match expect_group(&g) {
            Expectation::Value(v) => {
                if v.is_zero() {
                    return Expectation::Value(v);
                }
                acc *= v;
            }
            Expectation::Unevaluable => return Expectation::Unevaluable,
        }
    }
    Expectation::Value(acc)
}

/// Expectation over everything except factors that depend only on future
/// noise, which are kept as known symbols.
pub fn expectation_given_future(e: &NoiseExpr) -> Option<NoisePoly> {
    let mut known = Vec::new();
    let mut acc = qi(1);
    for g in independent_groups(e) {
        if g.iter().all(|a| a.window() == Window::Future) {
            known.extend(g);
            continue;
        }
        match expect_group(&g) {
            Expectation::Value(v) => acc *= v,
            Expectation::Unevaluable => return None,
        }
    }
    Some(NoisePoly::term(NoiseExpr::from_atoms(known), acc))
}

/// Splits a resonant forcing `c` into `(evolution, transform)` parts with
/// `evolution + d/dt transform = c`, integrating every convolution-only
/// product by parts. What remains in the evolution is deterministic, a single
/// white noise, or a white noise times convolutions.
///
/// For a product `P` of convolutions with rates summing to `s != 0`,
/// `P = d/dt(P/s) + sum_i sgn(mu_i)/s * child_i * prod_{j != i} atom_j`.
/// When `s = 0` some factor `A = Z_mu(c)` has `mu < 0`; with `R = P / A`,
/// `P = d/dt(R Z_mu A) + sum_{i in R} sgn(nu_i) child_i (R / R_i) Z_mu A`.
pub fn ibp_normalize(c: &NoisePoly) -> Result<(NoisePoly, NoisePoly), NoiseError> {
    let mut evolution = NoisePoly::zero();
    let mut transform = NoisePoly::zero();
    let mut work: Vec<(NoiseExpr, Q)> = c.iter().map(|(e, k)| (e.clone(), k.clone())).collect();
    while let Some((e, k)) = work.pop() {
        let bare = e.bare_count();
        if bare >= 2 {
            return Err(NoiseError::MalformedResidual(e.to_string()));
        }
        if bare == 1 || e.is_one() {
            evolution.add_term(e, k);
            continue;
        }
        let s: Q = e.atoms.iter().filter_map(|a| a.rate()).sum();
        if s.is_zero() {
            let a = e
                .atoms
                .iter()
                .position(|x| x.rate().is_some_and(|r| r.is_negative()))
                .expect("zero rate sum needs a memory factor");
            let mu = e.atoms[a].rate().unwrap().clone();
            let lifted = NoiseExpr {
                atoms: vec![NoiseAtom::Conv {
                    rate: mu,
                    child: NoiseExpr {
                        atoms: vec![e.atoms[a].clone()],
                    },
                }],
            };
            let rest = e.without(a);
            transform.add_term(rest.mul(&lifted), k.clone());
            for (i, r) in rest.atoms.iter().enumerate() {
                if let NoiseAtom::Conv { rate, child } = r {
                    let w = &k * qi(sgn(rate) as i64);
                    work.push((child.mul(&rest.without(i)).mul(&lifted), w));
                }
            }
            continue;
        }
        transform.add_term(e.clone(), &k / &s);
        for (i, a) in e.atoms.iter().enumerate() {
            if let NoiseAtom::Conv { rate, child } = a {
                let w = &k * qi(sgn(rate) as i64) / &s;
                work.push((child.mul(&e.without(i)), w));
            }
        }
    }
    Ok((evolution, transform))
}

impl fmt::Display for NoiseAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseAtom::Bare(k) => write!(f, "phi[{k}]"),
            NoiseAtom::Conv { rate, child } => write!(f, "Z[{}]{{ {} }}", fmt_q(rate, true), child),
        }
    }
}

impl fmt::Display for NoiseExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        let mut i = 0;
        while i < self.atoms.len() {
            let mut j = i + 1;
            while j < self.atoms.len() && self.atoms[j] == self.atoms[i] {
                j += 1;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            write!(f, "{}", self.atoms[i])?;
            if j - i > 1 {
                write!(f, "^{}", j - i)?;
            }
            i = j;
        }
        Ok(())
    }
}

impl fmt::Display for NoisePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            let s = fmt_q(c, i > 0);
            if e.is_one() {
                write!(f, "{s}")?;
            } else {
                write!(f, "{s} * {e}")?;
            }
            if i + 1 < self.terms.len() {
                write!(f, " ")?;
            }
        }
        Ok(())
    }
}

/// Convenience constructors used throughout tests and bundled models.
pub mod build {
    use super::*;

    pub fn phi(k: u32) -> NoiseExpr {
        NoiseExpr::bare(k)
    }

    /// `Z[rate]{e}` for a single product; panics if canonicalization does
    /// not leave exactly one unit-weight product.
    pub fn z(rate: i64, e: &NoiseExpr) -> NoiseExpr {
        let p = conv_expr(&qi(rate), e).expect("nonzero rate");
        let mut it = p.iter();
        match (it.next(), it.next()) {
            (Some((x, c)), None) if *c == qi(1) => x.clone(),
            _ => panic!("Z[{rate}] of {e} is not a single product"),
        }
    }

    pub fn prod(es: &[&NoiseExpr]) -> NoiseExpr {
        es.iter().fold(NoiseExpr::one(), |acc, e| acc.mul(e))
    }
}

#[cfg(test)]
mod tests {
    use super::build::*;
    use super::*;

    fn poly(ts: &[(&NoiseExpr, Q)]) -> NoisePoly {
        ts.iter().map(|(e, c)| ((*e).clone(), c.clone())).collect()
    }

    #[test]
    fn derivative_of_memory_convolution() {
        let zm = z(-1, &phi(0));
        let d = diff_expr(&zm).unwrap();
        assert_eq!(d, poly(&[(&phi(0), qi(1)), (&zm, qi(-1))]));
        let zp = z(1, &phi(0));
        let d = diff_expr(&zp).unwrap();
        assert_eq!(d, poly(&[(&phi(0), qi(-1)), (&zp, qi(1))]));
    }

    #[test]
    fn derivative_of_nested_square() {
        let zm = z(-1, &phi(0));
        let sq = prod(&[&zm, &zm]);
        let outer = z(-1, &sq);
        let d = diff_expr(&outer).unwrap();
        assert_eq!(d, poly(&[(&sq, qi(1)), (&outer, qi(-1))]));
    }

    #[test]
    fn bare_is_not_differentiable() {
        assert_eq!(
            diff_atom(&NoiseAtom::Bare(2)),
            Err(NoiseError::NotDifferentiable(2))
        );
    }

    #[test]
    fn composition_rules() {
        assert_eq!(compose(&qi(-1), &qi(1)).unwrap(), (q(1, 2), q(1, 2)));
        assert_eq!(compose(&qi(-1), &qi(-2)).unwrap(), (qi(1), qi(-1)));
        assert!(matches!(
            compose(&qi(-1), &qi(-1)),
            Err(NoiseError::RepeatedRate(_))
        ));
        // nested distinct rates collapse
        let p = conv_expr(&qi(1), &z(-1, &phi(0))).unwrap();
        assert_eq!(
            p,
            poly(&[(&z(1, &phi(0)), q(1, 2)), (&z(-1, &phi(0)), q(1, 2))])
        );
        // nested equal rates stay structural
        let zz = conv_expr(&qi(-1), &z(-1, &phi(0))).unwrap();
        assert_eq!(zz.len(), 1);
        assert_eq!(zz.iter().next().unwrap().0.node_count(), 3);
    }

    #[test]
    fn convolution_of_constant() {
        assert_eq!(conv_expr(&qi(-3), &NoiseExpr::one()).unwrap(), NoisePoly::constant(q(1, 3)));
    }

    #[test]
    fn canonical_order_independent() {
        let a = z(-1, &phi(0));
        let b = phi(1);
        let c = z(2, &phi(0));
        let x = prod(&[&a, &b, &c]);
        let y = prod(&[&c, &a, &b]);
        assert_eq!(x, y);
        assert_eq!(x.to_string(), y.to_string());
    }

    #[test]
    fn expectation_table() {
        let zm = z(-1, &phi(0));
        assert_eq!(expectation(&prod(&[&zm, &zm])), Expectation::Value(q(1, 2)));
        assert_eq!(expectation(&z(-3, &phi(0))), Expectation::Value(qi(0)));
        assert_eq!(expectation(&prod(&[&phi(0), &zm])), Expectation::Value(q(1, 2)));
        assert_eq!(expectation(&phi(0)), Expectation::Value(qi(0)));
        assert_eq!(expectation(&NoiseExpr::one()), Expectation::Value(qi(1)));
        let z3 = z(-3, &phi(0));
        assert_eq!(expectation(&prod(&[&z3, &z3])), Expectation::Value(q(1, 6)));
        // linearity through an outer convolution
        assert_eq!(expectation(&z(-1, &prod(&[&zm, &zm]))), Expectation::Value(q(1, 2)));
        // independent symbols factorize
        let w = z(-1, &phi(1));
        assert_eq!(
            expectation(&prod(&[&zm, &zm, &w, &w])),
            Expectation::Value(q(1, 4))
        );
        // past and future windows of one symbol are independent
        let zp = z(1, &phi(0));
        assert_eq!(
            expectation(&prod(&[&zm, &zm, &zp, &zp])),
            Expectation::Value(q(1, 4))
        );
        // outside the table
        let z2 = z(-2, &phi(0));
        assert_eq!(expectation(&prod(&[&zm, &z2])), Expectation::Unevaluable);
    }

    #[test]
    fn ibp_linear_convolution() {
        let zm = z(-1, &phi(0));
        let (evo, tr) = ibp_normalize(&NoisePoly::term(zm.clone(), qi(1))).unwrap();
        assert_eq!(evo, NoisePoly::bare(0));
        assert_eq!(tr, NoisePoly::term(zm, qi(-1)));
    }

    #[test]
    fn ibp_quadratic_identities() {
        let zm = z(-1, &phi(0));
        let sq = prod(&[&zm, &zm]);
        let pz = prod(&[&phi(0), &zm]);
        let (evo, tr) = ibp_normalize(&NoisePoly::term(sq.clone(), qi(1))).unwrap();
        assert_eq!(evo, NoisePoly::term(pz.clone(), qi(1)));
        assert_eq!(tr, NoisePoly::term(sq.clone(), q(-1, 2)));

        let outer = z(-1, &sq);
        let (evo, tr) = ibp_normalize(&NoisePoly::term(outer.clone(), qi(1))).unwrap();
        assert_eq!(evo, NoisePoly::term(pz, qi(1)));
        assert_eq!(tr, poly(&[(&sq, q(-1, 2)), (&outer, qi(-1))]));
    }

    #[test]
    fn ibp_defining_relation_holds() {
        let zm = z(-1, &phi(0));
        let zz = z(-1, &zm);
        let z2 = z(-2, &phi(1));
        let c = poly(&[
            (&prod(&[&zm, &zz]), qi(3)),
            (&prod(&[&zm, &z2]), q(-1, 2)),
            (&z(-1, &prod(&[&zm, &z2])), qi(2)),
            (&prod(&[&phi(0), &zm]), qi(5)),
            (&prod(&[&zm, &z(1, &phi(0))]), qi(8)),
            (&prod(&[&zm, &zm, &z(2, &phi(1))]), qi(-1)),
        ]);
        let (evo, tr) = ibp_normalize(&c).unwrap();
        assert_eq!(evo.add(&diff_poly(&tr).unwrap()), c);
        for (e, _) in evo.iter() {
            assert!(e.bare_count() == 1 || !e.has_conv());
        }
    }

    #[test]
    fn ibp_mixed_memory_anticipation() {
        let zm = z(-1, &phi(0));
        let c = NoisePoly::term(prod(&[&zm, &z(1, &phi(0))]), qi(1));
        let (evo, _) = ibp_normalize(&c).unwrap();
        assert_eq!(evo, NoisePoly::term(prod(&[&phi(0), &z(-1, &zm)]), qi(1)));
    }

    #[test]
    fn ibp_rejects_two_white_noises() {
        let c = NoisePoly::term(prod(&[&phi(0), &phi(1)]), qi(1));
        assert!(matches!(ibp_normalize(&c), Err(NoiseError::MalformedResidual(_))));
    }

    #[test]
    fn rendering() {
        let zm = z(-1, &phi(0));
        assert_eq!(zm.to_string(), "Z[-1]{ phi[0] }");
        assert_eq!(z(-1, &zm).to_string(), "Z[-1]{ Z[-1]{ phi[0] } }");
        assert_eq!(prod(&[&phi(0), &zm]).to_string(), "phi[0]*Z[-1]{ phi[0] }");
        assert_eq!(prod(&[&zm, &zm]).to_string(), "Z[-1]{ phi[0] }^2");
    }
}
