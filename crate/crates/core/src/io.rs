//! System-spec documents, order flags and the text report.
//!
//! A spec is line oriented; `#` starts a comment:
//!
//! ```text
//! name toy
//! slow x as X                 # normal-form name defaults to upper case
//! fast y as Y weight 0 cap 2  # weight and inclusive exponent cap
//! slow z init 1/2             # default initial value for simulations
//! param s cap 2 value 1/20    # value is the default for simulations
//! order e6,s3                 # same syntax as the --order flag
//! policy anticipate           # or no-anticipate; optional `mu_min 1/10`
//! rescale e                   # t = tau/e: slow rates are multiplied by e
//! dx = -x*y
//! dy = -y + x^2 - 2*y^2 + s*phi1
//! ```
//!
//! Noise symbols are `phi1 .. phiK` (`phi` alone is `phi1`); the canonical
//! `phi[k]` with a zero-based index is accepted too. Under `rescale e`
//! fast equations are written `e*dy = ...`, i.e. already in fast time.
//! Linear deterministic terms give the matrices: `x_j` in a slow equation
//! fills `A`, `y_j` in its own equation is the fast rate.

use crate::engine::{verify_order, EngineError, NormalForm, SystemSpec};
use crate::homological::{Anticipation, Policy};
use crate::noise::{NoiseExpr, NoisePoly};
use crate::rational::{fmt_q, parse_q, Q};
use crate::series::{Ctx, Dims, Series, SeriesError, Truncation};
use crate::ssm::{expected_ssm, long_time_model, revert, ssm_parametrisation};
use crate::text::parse_expr;
use num_traits::{Signed, Zero};
use std::fmt::Write as _;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("invalid system: {0}")]
    Semantic(String),
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> SpecError {
    SpecError::Syntax {
        line,
        col,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Slow,
    Fast,
    Param,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub role: Role,
    /// Name in the equations.
    pub name: String,
    /// Name in the normal form.
    pub nf_name: String,
    pub weight: u32,
    pub cap: Option<u32>,
    pub value: Option<Q>,
    /// Default initial value of a state variable.
    pub init: Option<Q>,
}

/// `--order` syntax: comma separated exclusive bounds. `eN` bounds the
/// total grade (`grade <= N - 1`); `nameN` bounds one variable's exponent.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OrderSpec {
    pub total: Option<u32>,
    pub caps: Vec<(String, u32)>,
}

impl OrderSpec {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut out = OrderSpec::default();
        for tok in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let split = tok
                .find(|c: char| c.is_ascii_digit())
                .ok_or_else(|| format!("order token `{tok}` has no bound"))?;
            let (name, n) = tok.split_at(split);
            let n: u32 = n.parse().map_err(|_| format!("bad bound in `{tok}`"))?;
            if n == 0 {
                return Err(format!("bound in `{tok}` must be at least 1"));
            }
            if name.is_empty() {
                return Err(format!("order token `{tok}` has no name"));
            }
            if name == "e" {
                out.total = Some(n);
            } else {
                out.caps.push((name.to_string(), n));
            }
        }
        Ok(out)
    }

    /// Later settings win.
    pub fn merged(&self, over: &OrderSpec) -> OrderSpec {
        let mut out = self.clone();
        if over.total.is_some() {
            out.total = over.total;
        }
        for (n, b) in &over.caps {
            out.caps.retain(|(m, _)| m != n);
            out.caps.push((n.clone(), *b));
        }
        out
    }
}

impl std::fmt::Display for OrderSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if let Some(t) = self.total {
            parts.push(format!("e{t}"));
        }
        parts.extend(self.caps.iter().map(|(n, b)| format!("{n}{b}")));
        write!(f, "{}", parts.join(","))
    }
}

#[derive(Debug, Clone)]
struct Equation {
    line: usize,
    /// Column of the right-hand side in the source line.
    col: usize,
    var: usize,
    scaled: bool,
    rhs: String,
}

/// A parsed spec; [`SpecDocument::build`] turns it into a system at a
/// chosen order.
#[derive(Debug, Clone)]
pub struct SpecDocument {
    pub name: String,
    pub source: String,
    /// Slow, then fast, then parameters, each in declaration order.
    pub vars: Vec<VarDecl>,
    pub order: OrderSpec,
    pub policy: Policy,
    pub rescale: Option<String>,
    eqs: Vec<Equation>,
}

/// A spec built at a definite truncation.
#[derive(Debug, Clone)]
pub struct BuiltSpec {
    pub spec: SystemSpec,
    /// The full right-hand sides, after any rescale.
    pub rates: Vec<Series>,
    pub order: OrderSpec,
}

fn parse_u32(line: usize, col: usize, s: Option<&(usize, &str)>, what: &str) -> Result<u32, SpecError> {
    let (c, t) = s.ok_or_else(|| syntax(line, col, format!("missing value for {what}")))?;
    t.parse().map_err(|_| syntax(line, *c, format!("{what} must be a non-negative integer")))
}

fn parse_rational(line: usize, col: usize, s: Option<&(usize, &str)>, what: &str) -> Result<Q, SpecError> {
    let (c, t) = s.ok_or_else(|| syntax(line, col, format!("missing value for {what}")))?;
    parse_q(t).ok_or_else(|| syntax(line, *c, format!("{what} must be a rational literal p/q")))
}

/// Whitespace tokens with their 1-based columns.
fn words(s: &str, offset: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(b)) => {
                out.push((offset + b + 1, &s[b..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(b) = start {
        out.push((offset + b + 1, &s[b..]));
    }
    out
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_alphabetic() || c == '_') && cs.all(|c| c.is_alphanumeric() || c == '_')
}

fn is_noise_name(s: &str) -> bool {
    s == "phi" || s.strip_prefix("phi").is_some_and(|d| !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()))
}

/// Parses and validates a spec at its declared order.
pub fn parse_spec(text: &str) -> Result<SpecDocument, SpecError> {
    let mut name = String::new();
    let mut decls: Vec<(Role, VarDecl, usize)> = Vec::new();
    let mut order = None;
    let mut policy = Policy::anticipate();
    let mut rescale: Option<(String, usize)> = None;
    let mut raw_eqs: Vec<(usize, usize, String, bool, String, usize)> = Vec::new();

    for (ln, full) in text.lines().enumerate() {
        let line = ln + 1;
        let body = full.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        if let Some(eq) = body.find('=') {
            let lhs = &body[..eq];
            let lw = words(lhs, 0);
            let lhs_col = lw.first().map_or(1, |w| w.0);
            let lhs_txt: String = lhs.split_whitespace().collect::<Vec<_>>().join("");
            let (scale, var) = match lhs_txt.split_once('*') {
                Some((s, v)) => (Some(s.to_string()), v.to_string()),
                None => match lw.as_slice() {
                    [(_, s), (_, v)] => (Some(s.to_string()), v.to_string()),
                    _ => (None, lhs_txt.clone()),
                },
            };
            let v = var
                .strip_prefix('d')
                .filter(|v| is_ident(v))
                .ok_or_else(|| syntax(line, lhs_col, format!("expected `dVAR = ...`, found `{}`", lhs.trim())))?;
            raw_eqs.push((line, lhs_col, v.to_string(), scale.is_some(), scale.unwrap_or_default(), eq + 2));
            continue;
        }
        let w = words(body, 0);
        let (kcol, key) = w[0];
        let args = &w[1..];
        match key {
            "name" => {
                name = args.iter().map(|a| a.1).collect::<Vec<_>>().join(" ");
            }
            "slow" | "fast" | "param" => {
                let role = match key {
                    "slow" => Role::Slow,
                    "fast" => Role::Fast,
                    _ => Role::Param,
                };
                let (ncol, vname) = *args.first().ok_or_else(|| syntax(line, kcol, "missing variable name"))?;
                if !is_ident(vname) || is_noise_name(vname) || vname == "Z" || vname == "e" && role != Role::Param {
                    return Err(syntax(line, ncol, format!("`{vname}` is not a usable variable name")));
                }
                let mut d = VarDecl {
                    role,
                    name: vname.to_string(),
                    nf_name: if role == Role::Param {
                        vname.to_string()
                    } else {
                        vname.to_uppercase()
                    },
                    weight: 1,
                    cap: None,
                    value: None,
                    init: None,
                };
                let mut i = 1;
                while i < args.len() {
                    let (c, opt) = args[i];
                    let val = args.get(i + 1);
                    match opt {
                        "as" if role != Role::Param => {
                            let (vc, nn) = *val.ok_or_else(|| syntax(line, c, "missing name after `as`"))?;
                            if !is_ident(nn) {
                                return Err(syntax(line, vc, format!("`{nn}` is not a usable name")));
                            }
                            d.nf_name = nn.to_string();
                        }
                        "weight" => d.weight = parse_u32(line, c, val, "weight")?,
                        "cap" => d.cap = Some(parse_u32(line, c, val, "cap")?),
                        "value" if role == Role::Param => d.value = Some(parse_rational(line, c, val, "value")?),
                        "init" if role != Role::Param => d.init = Some(parse_rational(line, c, val, "init")?),
                        _ => return Err(syntax(line, c, format!("unknown option `{opt}` for {key}"))),
                    }
                    i += 2;
                }
                if decls.iter().any(|(_, e, _)| e.name == d.name || e.nf_name == d.nf_name) {
                    return Err(syntax(line, ncol, format!("`{}` declared twice", d.name)));
                }
                decls.push((role, d, line));
            }
            "order" => {
                let (c, t) = *args.first().ok_or_else(|| syntax(line, kcol, "missing order"))?;
                order = Some(OrderSpec::parse(t).map_err(|m| syntax(line, c, m))?);
            }
            "policy" => {
                let (c, t) = *args.first().ok_or_else(|| syntax(line, kcol, "missing policy"))?;
                policy = match t {
                    "anticipate" => Policy::anticipate(),
                    "no-anticipate" => Policy::no_anticipate(),
                    _ => return Err(syntax(line, c, format!("unknown policy `{t}`"))),
                };
                match args.get(1) {
                    Some((c, "mu_min")) => {
                        let m = parse_rational(line, *c, args.get(2), "mu_min")?;
                        if m.is_negative() {
                            return Err(syntax(line, *c, "mu_min must be non-negative"));
                        }
                        policy = policy.with_mu_min(m);
                    }
                    Some((c, o)) => return Err(syntax(line, *c, format!("unknown policy option `{o}`"))),
                    None => {}
                }
            }
            "rescale" => {
                let (c, t) = *args.first().ok_or_else(|| syntax(line, kcol, "missing parameter"))?;
                rescale = Some((t.to_string(), c));
            }
            _ => return Err(syntax(line, kcol, format!("unknown declaration `{key}`"))),
        }
    }

    let mut vars = Vec::new();
    for role in [Role::Slow, Role::Fast, Role::Param] {
        vars.extend(decls.iter().filter(|d| d.0 == role).map(|d| d.1.clone()));
    }
    if !vars.iter().any(|v| v.role != Role::Param) {
        return Err(SpecError::Semantic("no slow or fast variables declared".into()));
    }
    let rescale = match rescale {
        Some((p, c)) => {
            let line = text.lines().position(|l| l.trim_start().starts_with("rescale")).unwrap_or(0) + 1;
            if !vars.iter().any(|v| v.role == Role::Param && v.name == p) {
                return Err(syntax(line, c, format!("rescale parameter `{p}` is not a declared parameter")));
            }
            Some(p)
        }
        None => None,
    };

    let state = vars.iter().filter(|v| v.role != Role::Param).count();
    let mut eqs: Vec<Equation> = Vec::new();
    for (line, col, v, scaled, scale, rhs_col) in raw_eqs {
        let idx = vars[..state]
            .iter()
            .position(|d| d.name == v)
            .ok_or_else(|| syntax(line, col, format!("`{v}` is not a declared state variable")))?;
        let role = vars[idx].role;
        if scaled {
            match &rescale {
                Some(p) if *p == scale && role == Role::Fast => {}
                Some(p) if *p == scale => {
                    return Err(syntax(line, col, format!("only fast equations carry the `{p}*` prefix")));
                }
                _ => return Err(syntax(line, col, format!("`{scale}*d{v}` needs `rescale {scale}`"))),
            }
        } else if rescale.is_some() && role == Role::Fast {
            let p = rescale.as_deref().unwrap_or_default();
            return Err(syntax(line, col, format!("under rescale, write the fast equation as `{p}*d{v} = ...`")));
        }
        if eqs.iter().any(|e| e.var == idx) {
            return Err(syntax(line, col, format!("second equation for `{v}`")));
        }
        let rhs = text.lines().nth(line - 1).unwrap_or("");
        let rhs = rhs.split('#').next().unwrap_or("")[rhs_col - 1..].to_string();
        eqs.push(Equation {
            line,
            col: rhs_col,
            var: idx,
            scaled,
            rhs,
        });
    }
    if let Some(missing) = (0..state).find(|i| !eqs.iter().any(|e| e.var == *i)) {
        return Err(SpecError::Semantic(format!("no equation for `{}`", vars[missing].name)));
    }
    eqs.sort_by_key(|e| e.var);

    let doc = SpecDocument {
        name,
        source: text.to_string(),
        vars,
        order: order.unwrap_or_default(),
        policy,
        rescale,
        eqs,
    };
    doc.build(None)?;
    Ok(doc)
}

impl SpecDocument {
    pub fn dims(&self) -> Dims {
        let count = |r| self.vars.iter().filter(|v| v.role == r).count();
        Dims {
            slow: count(Role::Slow),
            fast: count(Role::Fast),
            params: count(Role::Param),
        }
    }

    /// Declared names in the original coordinates.
    pub fn names(&self) -> Vec<String> {
        self.vars.iter().map(|v| v.name.clone()).collect()
    }

    pub fn nf_names(&self) -> Vec<String> {
        self.vars.iter().map(|v| v.nf_name.clone()).collect()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        let d = self.dims();
        self.vars[d.state()..].iter().position(|v| v.name == name)
    }

    /// Default initial state, zero where the spec gives none.
    pub fn initial_state(&self) -> Vec<f64> {
        let d = self.dims();
        self.vars[..d.state()]
            .iter()
            .map(|v| v.init.as_ref().map_or(0.0, crate::rational::to_f64))
            .collect()
    }

    /// Default parameter values, `None` where the spec gives none.
    pub fn param_values(&self) -> Vec<Option<Q>> {
        let d = self.dims();
        self.vars[d.state()..].iter().map(|v| v.value.clone()).collect()
    }

    fn truncation(&self, order: &OrderSpec) -> Result<Truncation, SpecError> {
        let total = order
            .total
            .ok_or_else(|| SpecError::Semantic("no truncation order: give `order eN` or --order".into()))?;
        let mut caps: Vec<Option<u32>> = self.vars.iter().map(|v| v.cap).collect();
        for (name, bound) in &order.caps {
            let exact = self.vars.iter().position(|v| v.name == *name || v.nf_name == *name);
            let i = match exact {
                Some(i) => i,
                None => {
                    let hits: Vec<usize> = (0..self.vars.len())
                        .filter(|&i| self.vars[i].role == Role::Param && self.vars[i].name.starts_with(name.as_str()))
                        .collect();
                    match hits.as_slice() {
                        [i] => *i,
                        [] => return Err(SpecError::Semantic(format!("order names unknown variable `{name}`"))),
                        _ => return Err(SpecError::Semantic(format!("order prefix `{name}` is ambiguous"))),
                    }
                }
            };
            caps[i] = Some(bound - 1);
        }
        Ok(Truncation {
            total: total - 1,
            caps,
            weights: self.vars.iter().map(|v| v.weight).collect(),
        })
    }

    /// The context at `order` (merged over the spec's own order).
    pub fn ctx(&self, order: Option<&OrderSpec>) -> Result<(Arc<Ctx>, OrderSpec), SpecError> {
        let order = match order {
            Some(o) => self.order.merged(o),
            None => self.order.clone(),
        };
        let tr = self.truncation(&order)?;
        Ok((Ctx::new(self.dims(), self.nf_names(), tr), order))
    }

    /// Builds the validated system at `order`.
    pub fn build(&self, order: Option<&OrderSpec>) -> Result<BuiltSpec, SpecError> {
        let (ctx, order) = self.ctx(order)?;
        let d = ctx.dims;
        let names = self.names();
        let c2 = ctx.clone();
        let resolve = move |id: &str| -> Option<Series> {
            if let Some(i) = names.iter().position(|n| n == id) {
                return Some(Series::var(&c2, i));
            }
            let k: u32 = match id.strip_prefix("phi")? {
                "" => 0,
                digits => digits.parse::<u32>().ok()?.checked_sub(1)?,
            };
            Some(Series::noise(&c2, &NoisePoly::bare(k)))
        };
        let mut rates = Vec::with_capacity(d.state());
        for e in &self.eqs {
            let mut s = parse_expr(&ctx, &e.rhs, &resolve).map_err(|err| match err {
                SeriesError::Parse { col, msg } => syntax(e.line, e.col + col - 1, msg),
                other => syntax(e.line, e.col, other.to_string()),
            })?;
            if let (Some(p), false) = (&self.rescale, e.scaled) {
                let i = self.param_index(p).expect("checked at parse") + d.state();
                s = s.mul(&Series::var(&ctx, i));
            }
            rates.push(s);
        }
        let mut noises = 0;
        for s in &rates {
            for (k, _) in s.iter() {
                for a in k.noise.atoms() {
                    noises = noises.max(max_symbol(a) + 1);
                }
            }
        }
        // split off the linear deterministic parts
        let mut a = vec![vec![Q::zero(); d.slow]; d.slow];
        let mut b = vec![Q::zero(); d.fast];
        let mut f = Vec::new();
        let mut g = Vec::new();
        for (v, s) in rates.iter().enumerate() {
            let mut rest = s.clone();
            for (k, c) in s.iter() {
                if !k.noise.is_one() || k.exps.iter().sum::<u32>() != 1 {
                    continue;
                }
                let u = k.exps.iter().position(|&x| x == 1).expect("degree one");
                let linear = if v < d.slow && u < d.slow {
                    a[v][u] = c.clone();
                    true
                } else if v >= d.slow && u == v {
                    b[v - d.slow] = c.clone();
                    true
                } else {
                    false
                };
                if linear {
                    rest.add_term(k.exps.clone(), NoiseExpr::one(), -c.clone());
                }
            }
            if v < d.slow {
                f.push(rest);
            } else {
                g.push(rest);
            }
        }
        let spec = SystemSpec::new(ctx, a, b, f, g, noises).map_err(|e| match e {
            EngineError::InvalidSpec(m) => SpecError::Semantic(m),
            other => SpecError::Semantic(other.to_string()),
        })?;
        Ok(BuiltSpec { spec, rates, order })
    }
}

fn max_symbol(a: &crate::noise::NoiseAtom) -> u32 {
    match a {
        crate::noise::NoiseAtom::Bare(k) => *k,
        crate::noise::NoiseAtom::Conv { child, .. } => child.atoms().iter().map(max_symbol).max().unwrap_or(0),
    }
}

/// Derived objects shown in a report; each is either a value or the reason
/// it is unavailable.
#[derive(Debug, Clone)]
pub struct Analyses {
    pub chart: Result<Vec<Series>, String>,
    pub expected: Result<Vec<Series>, String>,
    pub reversion: Result<Vec<Series>, String>,
    /// Slow evolution on the manifold with `phi Z phi` replaced.
    pub long_time: Option<crate::ssm::LongTimeModel>,
}

impl Analyses {
    pub fn compute(spec: &SystemSpec, nf: &NormalForm) -> Self {
        let chart = ssm_parametrisation(nf).map_err(|e| e.to_string());
        let expected = chart
            .as_ref()
            .map_err(|e| e.clone())
            .and_then(|c| expected_ssm(c).map_err(|e| e.to_string()))
            .map(|(x, y)| x.into_iter().chain(y).collect());
        let chart = chart.map(|c| c.x.into_iter().chain(c.y).collect());
        let reversion = revert(nf).map_err(|e| e.to_string());
        let d = spec.ctx.dims;
        let long_time = (d.slow == 1 && spec.noises > 0).then(|| {
            let on_ssm = nf.f[0].filter(|k, _| k.exps[d.slow..d.state()].iter().all(|&e| e == 0));
            let mut r = on_ssm;
            for (k, a) in spec.a[0].iter().enumerate() {
                if !a.is_zero() {
                    r.add_assign(&Series::var(&spec.ctx, k).scale(a));
                }
            }
            long_time_model(&r, spec.noises)
        });
        Analyses {
            chart,
            expected,
            reversion,
            long_time,
        }
    }
}

/// Renders `s` with the context's names swapped for `names`.
fn render_as(s: &Series, names: &[String]) -> String {
    let c = s.ctx();
    let ctx = Ctx::new(c.dims, names.to_vec(), c.trunc.clone());
    s.recontext(&ctx).render()
}

/// Deterministic text report. Section lines are `label = series` with the
/// series in canonical rendering, so they parse back exactly.
pub fn emit_report(doc: &SpecDocument, built: &BuiltSpec, nf: &NormalForm, an: &Analyses) -> String {
    let orig = doc.names();
    let nfn = doc.nf_names();
    let mut r = String::new();
    let _ = writeln!(r, "stonf report");
    let _ = writeln!(r, "system {}", if doc.name.is_empty() { "-" } else { &doc.name });
    let _ = writeln!(r, "order {}", built.order);
    let _ = writeln!(r, "policy {}", nf.policy);
    let cert = nf.certified_order.map_or("none".to_string(), |c| c.to_string());
    let _ = writeln!(r, "certified {cert}");
    let _ = writeln!(r, "\n[spec]");
    for l in doc.source.lines() {
        let _ = writeln!(r, "| {l}");
    }
    let _ = writeln!(r, "\n[transform]");
    for (v, s) in nf.transform().iter().enumerate() {
        let _ = writeln!(r, "{} = {}", orig[v], s.render());
    }
    let _ = writeln!(r, "\n[evolution]");
    for (v, s) in nf.rates(&built.spec).iter().enumerate() {
        let _ = writeln!(r, "d{} = {}", nfn[v], s.render());
    }
    let _ = writeln!(r, "\n[ssm]");
    match &an.chart {
        Ok(c) => c.iter().enumerate().for_each(|(v, s)| {
            let _ = writeln!(r, "{} = {}", orig[v], s.render());
        }),
        Err(e) => {
            let _ = writeln!(r, "unavailable: {e}");
        }
    }
    let _ = writeln!(r, "\n[expected ssm]");
    match &an.expected {
        Ok(c) => c.iter().enumerate().for_each(|(v, s)| {
            let _ = writeln!(r, "E[{}] = {}", orig[v], s.render());
        }),
        Err(e) => {
            let _ = writeln!(r, "unavailable: {e}");
        }
    }
    let _ = writeln!(r, "\n[reversion]");
    match &an.reversion {
        Ok(inv) => inv.iter().enumerate().for_each(|(v, s)| {
            let _ = writeln!(r, "{} = {}", nfn[v], render_as(s, &orig));
        }),
        Err(e) => {
            let _ = writeln!(r, "unavailable: {e}");
        }
    }
    if let Some(lt) = &an.long_time {
        let _ = writeln!(r, "\n[long-time]");
        let _ = writeln!(r, "d{} = {}", nfn[0], lt.series.render());
        for n in &lt.fresh {
            let _ = writeln!(
                r,
                "fresh phi[{}] variance {} replaces {}",
                n.index,
                fmt_q(&n.variance, false),
                n.source
            );
        }
        for u in &lt.unevaluable {
            let _ = writeln!(r, "unevaluable {u}");
        }
    }
    r
}

/// The parts of a report needed to re-certify it.
#[derive(Debug, Clone)]
pub struct ParsedReport {
    pub source: String,
    pub order: OrderSpec,
    pub policy: Policy,
    pub certified: Option<u32>,
    pub transform: Vec<(usize, String)>,
    pub evolution: Vec<(usize, String)>,
}

fn section_lines<'a>(text: &'a str, name: &str) -> Vec<(usize, &'a str)> {
    let head = format!("[{name}]");
    let mut inside = false;
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        if l.starts_with('[') {
            inside = l.trim() == head;
            continue;
        }
        if inside && !l.trim().is_empty() {
            out.push((i + 1, l));
        }
    }
    out
}

pub fn parse_report(text: &str) -> Result<ParsedReport, SpecError> {
    let header = |key: &str| -> Result<(usize, String), SpecError> {
        text.lines()
            .enumerate()
            .find_map(|(i, l)| l.strip_prefix(key).map(|v| (i + 1, v.trim().to_string())))
            .ok_or_else(|| syntax(0, 1, format!("report has no `{}` line", key.trim())))
    };
    if !text.starts_with("stonf report") {
        return Err(syntax(1, 1, "not a stonf report"));
    }
    let (ol, order) = header("order ")?;
    let order = OrderSpec::parse(&order).map_err(|m| syntax(ol, 7, m))?;
    let (pl, pol) = header("policy ")?;
    let mut it = pol.split_whitespace();
    let mut policy = match it.next() {
        Some("anticipate") => Policy::anticipate(),
        Some("no-anticipate") => Policy::no_anticipate(),
        _ => return Err(syntax(pl, 8, "unknown policy")),
    };
    if let Some(m) = it.next().and_then(|m| m.strip_prefix("mu_min=")) {
        policy = policy.with_mu_min(parse_q(m).ok_or_else(|| syntax(pl, 8, "bad mu_min"))?);
    }
    let (_, cert) = header("certified ")?;
    let certified = cert.parse().ok();
    let source: String = section_lines(text, "spec")
        .iter()
        .map(|(_, l)| l.strip_prefix("| ").or(l.strip_prefix("|")).unwrap_or(l))
        .collect::<Vec<_>>()
        .join("\n");
    let eqs = |sec: &str| -> Result<Vec<(usize, String)>, SpecError> {
        section_lines(text, sec)
            .into_iter()
            .map(|(n, l)| {
                l.split_once(" = ")
                    .map(|(_, r)| (n, r.to_string()))
                    .ok_or_else(|| syntax(n, 1, "expected `name = series`"))
            })
            .collect()
    };
    Ok(ParsedReport {
        source,
        order,
        policy,
        certified,
        transform: eqs("transform")?,
        evolution: eqs("evolution")?,
    })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Rebuilds the system and normal form recorded in a report and
/// recomputes the residual order.
pub fn recertify(report: &ParsedReport) -> Result<(BuiltSpec, NormalForm, u32), VerifyError> {
    let doc = parse_spec(&report.source)?;
    let built = doc.build(Some(&report.order))?;
    let ctx = built.spec.ctx.clone();
    let d = ctx.dims;
    if report.transform.len() != d.state() || report.evolution.len() != d.state() {
        return Err(SpecError::Semantic("report sections do not match the system size".into()).into());
    }
    let parse = |(line, s): &(usize, String)| {
        Series::parse(&ctx, s).map_err(|e| match e {
            SeriesError::Parse { col, msg } => syntax(*line, col, msg),
            other => syntax(*line, 1, other.to_string()),
        })
    };
    let mut nf = NormalForm::identity(&built.spec, report.policy.clone());
    for v in 0..d.state() {
        let t = parse(&report.transform[v])?.sub(&Series::var(&ctx, v));
        let mut r = parse(&report.evolution[v])?;
        if v < d.slow {
            for (k, a) in built.spec.a[v].iter().enumerate() {
                r = r.sub(&Series::var(&ctx, k).scale(a));
            }
            nf.xi[v] = t;
            nf.f[v] = r;
        } else {
            let j = v - d.slow;
            r = r.sub(&Series::var(&ctx, v).scale(&built.spec.b_diag[j]));
            nf.eta[j] = t;
            nf.g[j] = r;
        }
    }
    let order = verify_order(&built.spec, &nf)?;
    nf.certified_order = Some(order);
    Ok((built, nf, order))
}

/// Whether a report's policy forbids anticipation.
pub fn is_non_anticipating(p: &Policy) -> bool {
    p.anticipation == Anticipation::Forbidden
}

/// Bundled example specs by name.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name.trim_end_matches(".snf") {
        "toy" => Some(TOY),
        "papavasiliou" => Some(PAPAVASILIOU),
        "linear" => Some(LINEAR),
        _ => None,
    }
}

pub const TOY: &str = "\
# slow-fast toy system with one multiplicative noise
name toy
slow x init 3/10
fast y init 1/10
param s value 1/20
order e6,s3
policy anticipate
dx = -x*y
dy = -y + x^2 - 2*y^2 + s*phi1
";

pub const PAPAVASILIOU: &str = "\
# dx = -(y + y^2) dtau, dy = -(y - x)/e dtau + dW/sqrt(e), in fast time t = tau/e
name papavasiliou
slow x init 1/2
fast y weight 0 cap 2 init 1/2
param e value 1/100
param s value 1
order e4
policy anticipate
rescale e
dx = -(y + y^2)
e*dy = -(y - x) + s*phi1
";

pub const LINEAR: &str = "\
# random walk from a fast Ornstein-Uhlenbeck input
name linear
slow x
fast y
param e value 1/10
param s value 1
order e4
policy anticipate
dx = e*y
dy = -y + s*phi1
";
