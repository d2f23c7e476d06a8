//! Stratonovich simulation: seeded noise paths, sampled convolution
//! processes, Heun integration of series right-hand sides and ensemble
//! statistics.

use crate::noise::{NoiseAtom, NoiseExpr, NoisePoly};
use crate::rational::to_f64;
use crate::series::Series;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::collections::HashMap;
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("white noise inside a pointwise factor cannot be sampled: {0}")]
    IllFormedForSampling(String),
    #[error("term with more than one white-noise factor: {0}")]
    IllFormed(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("path too short: valid window [{lo}, {hi}] cannot hold {needed} steps")]
    PathTooShort { lo: usize, hi: usize, needed: usize },
}

/// Brownian increments on a uniform grid `t_i = i dt`, `i = 0..=steps`.
#[derive(Debug, Clone)]
pub struct NoisePath {
    pub dt: f64,
    pub steps: usize,
    /// `increments[k][i]` is `W_k(t_{i+1}) - W_k(t_i)`.
    pub increments: Vec<Vec<f64>>,
    pub seed: u64,
    pub stream: u64,
}

impl NoisePath {
    /// Independent standard Wiener increments; `stream` selects an
    /// independent sub-sequence of the seed.
    pub fn generate(noises: usize, dt: f64, steps: usize, seed: u64, stream: u64) -> Result<Self, SimError> {
        if !(dt.is_finite() && dt > 0.0) || steps == 0 {
            return Err(SimError::Config(format!("need dt > 0 and at least one step (dt={dt}, steps={steps})")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let sd = dt.sqrt();
        let increments = (0..noises)
            .map(|_| {
                (0..steps)
                    .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect()
            })
            .collect();
        Ok(Self {
            dt,
            steps,
            increments,
            seed,
            stream,
        })
    }

    /// A path whose white noise is the given deterministic function.
    pub fn from_function(noises: usize, dt: f64, steps: usize, f: impl Fn(usize, f64) -> f64) -> Self {
        let increments = (0..noises)
            .map(|k| {
                (0..steps)
                    .map(|i| 0.5 * (f(k, i as f64 * dt) + f(k, (i + 1) as f64 * dt)) * dt)
                    .collect()
            })
            .collect();
        Self {
            dt,
            steps,
            increments,
            seed: 0,
            stream: 0,
        }
    }

    pub fn noises(&self) -> usize {
        self.increments.len()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// The time-reversed path (increments negated and reversed), under
    /// which past convolutions become future ones.
    pub fn reversed(&self) -> Self {
        let mut p = self.clone();
        for inc in &mut p.increments {
            inc.reverse();
            inc.iter_mut().for_each(|w| *w = -*w);
        }
        p
    }

    fn check_symbol(&self, k: u32) -> Result<(), SimError> {
        if (k as usize) < self.noises() {
            Ok(())
        } else {
            Err(SimError::Config(format!("noise symbol phi[{k}] not on the path ({} symbols)", self.noises())))
        }
    }
}

/// Values of a pointwise noise process on the path grid. Only indices in
/// `lo..=hi` are past their spin-up and trim windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub values: Vec<f64>,
    pub lo: usize,
    pub hi: usize,
}

impl Sampled {
    fn ones(n: usize) -> Self {
        Self {
            values: vec![1.0; n + 1],
            lo: 0,
            hi: n,
        }
    }

    pub fn valid(&self) -> &[f64] {
        if self.lo > self.hi {
            &[]
        } else {
            &self.values[self.lo..=self.hi]
        }
    }
}

/// Number of time constants discarded at the start (memory) or end
/// (anticipation) of every convolution sample.
pub const WINDOW_TIME_CONSTANTS: f64 = 10.0;

/// Samples noise expressions on one path, caching shared sub-expressions.
pub struct Sampler<'a> {
    path: &'a NoisePath,
    cache: HashMap<NoiseExpr, Sampled>,
}

impl<'a> Sampler<'a> {
    pub fn new(path: &'a NoisePath) -> Self {
        Self {
            path,
            cache: HashMap::new(),
        }
    }

    pub fn path(&self) -> &NoisePath {
        self.path
    }

    /// A pointwise product of convolutions; white-noise atoms are rejected.
    pub fn sample(&mut self, e: &NoiseExpr) -> Result<Sampled, SimError> {
        if let Some(s) = self.cache.get(e) {
            return Ok(s.clone());
        }
        let n = self.path.steps;
        let mut acc = Sampled::ones(n);
        for a in e.atoms() {
            let s = match a {
                NoiseAtom::Bare(_) => return Err(SimError::IllFormedForSampling(e.to_string())),
                NoiseAtom::Conv { rate, child } => self.sample_conv(to_f64(rate), child)?,
            };
            for (v, w) in acc.values.iter_mut().zip(&s.values) {
                *v *= w;
            }
            acc.lo = acc.lo.max(s.lo);
            acc.hi = acc.hi.min(s.hi);
        }
        self.cache.insert(e.clone(), acc.clone());
        Ok(acc)
    }

    /// Splits a factor into at most one white noise and a pointwise rest.
    fn split(e: &NoiseExpr) -> Result<(Option<u32>, NoiseExpr), SimError> {
        let mut bare = None;
        let mut rest = Vec::new();
        for a in e.atoms() {
            match a {
                NoiseAtom::Bare(k) if bare.is_none() => bare = Some(*k),
                NoiseAtom::Bare(_) => return Err(SimError::IllFormed(e.to_string())),
                other => rest.push(other.clone()),
            }
        }
        Ok((bare, NoiseExpr::from_atoms(rest)))
    }

    fn sample_conv(&mut self, mu: f64, child: &NoiseExpr) -> Result<Sampled, SimError> {
        let (bare, rest) = Self::split(child)?;
        if let Some(k) = bare {
            self.path.check_symbol(k)?;
        }
        let plain = rest.is_one();
        let h = self.sample(&rest)?;
        let (n, dt) = (self.path.steps, self.path.dt);
        let a = (-mu.abs() * dt).exp();
        let spin = (WINDOW_TIME_CONSTANTS / (mu.abs() * dt)).ceil() as usize;
        // contribution of step [t_i, t_{i+1}] to the filter, weighted
        // toward the end of the step where the filter is read
        let step = |i: usize, toward_end: bool| -> f64 {
            let (near, far) = if toward_end { (h.values[i + 1], h.values[i]) } else { (h.values[i], h.values[i + 1]) };
            match bare {
                Some(k) => {
                    let dw = self.path.increments[k as usize][i];
                    if plain {
                        dw * ((1.0 - a * a) / (2.0 * mu.abs() * dt)).sqrt()
                    } else {
                        0.5 * (near + far) * a.sqrt() * dw
                    }
                }
                None if plain => (1.0 - a) / mu.abs(),
                None => 0.5 * (near + a * far) * dt,
            }
        };
        let mut values = vec![0.0; n + 1];
        let (lo, hi);
        if mu < 0.0 {
            for i in 0..n {
                values[i + 1] = a * values[i] + step(i, true);
            }
            lo = h.lo + spin;
            hi = h.hi;
        } else {
            for i in (0..n).rev() {
                values[i] = a * values[i + 1] + step(i, false);
            }
            lo = h.lo;
            hi = h.hi.saturating_sub(spin);
        }
        if plain && bare.is_none() {
            // Z_mu 1 = 1/|mu| exactly once the window has passed
            let c = 1.0 / mu.abs();
            let (lo2, hi2) = (lo.min(n), hi.min(n));
            values[lo2..=hi2.max(lo2)].iter_mut().for_each(|v| *v = c);
        }
        Ok(Sampled { values, lo, hi })
    }

    /// `int_{t_from}^{t_to} p dt`, with white-noise factors integrated in the
    /// Stratonovich (trapezoidal) sense.
    pub fn integrate(&mut self, p: &NoisePoly, from: usize, to: usize) -> Result<f64, SimError> {
        let dt = self.path.dt;
        let mut total = 0.0;
        for (e, c) in p.iter() {
            let (bare, rest) = Self::split(e)?;
            let r = self.sample(&rest)?;
            if from < r.lo || to > r.hi {
                return Err(SimError::PathTooShort {
                    lo: r.lo,
                    hi: r.hi,
                    needed: to - from,
                });
            }
            let mut s = 0.0;
            for i in from..to {
                let mid = 0.5 * (r.values[i] + r.values[i + 1]);
                s += match bare {
                    Some(k) => {
                        self.path.check_symbol(k)?;
                        mid * self.path.increments[k as usize][i]
                    }
                    None => mid * dt,
                };
            }
            total += to_f64(c) * s;
        }
        Ok(total)
    }

    /// Pointwise value of a noise combination without white noise.
    pub fn value(&mut self, p: &NoisePoly, i: usize) -> Result<f64, SimError> {
        let mut v = 0.0;
        for (e, c) in p.iter() {
            v += to_f64(c) * self.sample(e)?.values[i];
        }
        Ok(v)
    }
}

/// Free-standing form of [`Sampler::sample`].
pub fn sample_convolution(path: &NoisePath, e: &NoiseExpr) -> Result<Sampled, SimError> {
    Sampler::new(path).sample(e)
}

#[derive(Debug, Clone)]
struct Term {
    coeff: f64,
    exps: Vec<u32>,
    bare: Option<u32>,
    factor: Option<usize>,
}

/// Right-hand sides ready for numerical integration: parameters are fixed
/// and each term is `coeff * monomial * [pointwise factor] * [white noise]`.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub names: Vec<String>,
    eqs: Vec<Vec<Term>>,
    factors: Vec<NoiseExpr>,
    noises: usize,
}

impl Compiled {
    /// `rates[v]` is `d(state v)/dt`. `params` gives a value per declared
    /// parameter; `noise_scale[k]` multiplies `phi[k]` (missing entries are 1).
    pub fn new(rates: &[Series], params: &[f64], noise_scale: &[f64]) -> Result<Self, SimError> {
        let ctx = rates
            .first()
            .ok_or_else(|| SimError::Config("no equations".into()))?
            .ctx()
            .clone();
        let d = ctx.dims;
        if params.len() != d.params {
            return Err(SimError::Config(format!("expected {} parameter values, got {}", d.params, params.len())));
        }
        if rates.len() != d.state() {
            return Err(SimError::Config(format!("expected {} equations, got {}", d.state(), rates.len())));
        }
        let mut factors: Vec<NoiseExpr> = Vec::new();
        let mut noises = 0;
        let mut eqs = Vec::new();
        for s in rates {
            let mut terms: Vec<Term> = Vec::new();
            for (k, c) in s.iter() {
                let mut coeff = to_f64(c);
                for (p, &e) in params.iter().zip(&k.exps[d.state()..]) {
                    coeff *= p.powi(e as i32);
                }
                let (bare, rest) = Sampler::split(&k.noise)?;
                if let Some(b) = bare {
                    coeff *= noise_scale.get(b as usize).copied().unwrap_or(1.0);
                    noises = noises.max(b as usize + 1);
                }
                for a in rest.atoms() {
                    let mut syms = Vec::new();
                    collect_symbols(a, &mut syms);
                    if let Some(m) = syms.iter().max() {
                        noises = noises.max(*m as usize + 1);
                    }
                }
                if coeff == 0.0 {
                    continue;
                }
                let factor = if rest.is_one() {
                    None
                } else {
                    Some(match factors.iter().position(|f| *f == rest) {
                        Some(i) => i,
                        None => {
                            factors.push(rest);
                            factors.len() - 1
                        }
                    })
                };
                terms.push(Term {
                    coeff,
                    exps: k.exps[..d.state()].to_vec(),
                    bare,
                    factor,
                });
            }
            eqs.push(terms);
        }
        Ok(Self {
            names: ctx.names[..d.state()].to_vec(),
            eqs,
            factors,
            noises,
        })
    }

    pub fn dim(&self) -> usize {
        self.eqs.len()
    }

    /// Number of noise symbols the model reads.
    pub fn noises(&self) -> usize {
        self.noises
    }

    /// Pointwise noise factors the model needs sampled.
    pub fn factors(&self) -> &[NoiseExpr] {
        &self.factors
    }

    /// Memory and anticipation needed around an integration window, in time
    /// units.
    pub fn windows(&self) -> (f64, f64) {
        let (mut back, mut fwd) = (0.0_f64, 0.0_f64);
        for f in &self.factors {
            let (b, w) = noise_windows(f);
            back = back.max(b);
            fwd = fwd.max(w);
        }
        (back, fwd)
    }
}

fn collect_symbols(a: &NoiseAtom, out: &mut Vec<u32>) {
    match a {
        NoiseAtom::Bare(k) => out.push(*k),
        NoiseAtom::Conv { child, .. } => child.atoms().iter().for_each(|c| collect_symbols(c, out)),
    }
}

/// Memory and anticipation, in time units, needed to sample `e` pointwise.
pub fn noise_windows(e: &NoiseExpr) -> (f64, f64) {
    let (mut back, mut fwd) = (0.0_f64, 0.0_f64);
    for a in e.atoms() {
        if let NoiseAtom::Conv { rate, child } = a {
            let (b, f) = noise_windows(child);
            let w = WINDOW_TIME_CONSTANTS / to_f64(rate).abs();
            if to_f64(rate) < 0.0 {
                back = back.max(b + w);
                fwd = fwd.max(f);
            } else {
                fwd = fwd.max(f + w);
                back = back.max(b);
            }
        }
    }
    (back, fwd)
}

/// Recorded states every `stride` steps, starting at `times[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    /// The state at the recorded time closest to `t`.
    pub fn at(&self, t: f64) -> &[f64] {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        &self.states[i]
    }
}

/// Where on the path to integrate and how often to record.
#[derive(Debug, Clone, Copy)]
pub struct Window {
    pub start: usize,
    pub steps: usize,
    pub stride: usize,
}

impl Window {
    /// The window after the model's memory spin-up, `horizon` long.
    pub fn after_spin_up(model: &Compiled, dt: f64, horizon: f64, stride: usize) -> Self {
        let (back, _) = model.windows();
        Self {
            start: (back / dt).ceil() as usize,
            steps: (horizon / dt).round() as usize,
            stride: stride.max(1),
        }
    }

    /// Path length that holds this window and the model's anticipation.
    pub fn path_steps(&self, model: &Compiled, dt: f64) -> usize {
        let (_, fwd) = model.windows();
        self.start + self.steps + (fwd / dt).ceil() as usize + 1
    }
}

fn monomial(y: &[f64], exps: &[u32]) -> f64 {
    exps.iter()
        .zip(y)
        .fold(1.0, |acc, (&e, &v)| if e == 0 { acc } else { acc * v.powi(e as i32) })
}

/// Stratonovich Heun scheme: drift terms advance with `dt`, terms carrying
/// `phi[k]` advance with the increment `dW_k`.
pub fn integrate_stratonovich(
    model: &Compiled,
    path: &NoisePath,
    init: &[f64],
    window: Window,
) -> Result<Trajectory, SimError> {
    if init.len() != model.dim() {
        return Err(SimError::Config(format!("expected {} initial values", model.dim())));
    }
    if window.steps == 0 {
        return Err(SimError::Config("zero-length integration window".into()));
    }
    if path.noises() < model.noises {
        return Err(SimError::Config(format!(
            "model uses {} noise symbols, path has {}",
            model.noises,
            path.noises()
        )));
    }
    let mut sampler = Sampler::new(path);
    let samples: Vec<Sampled> = model
        .factors
        .iter()
        .map(|f| sampler.sample(f))
        .collect::<Result<_, _>>()?;
    let end = window.start + window.steps;
    for s in &samples {
        if window.start < s.lo || end > s.hi {
            return Err(SimError::PathTooShort {
                lo: s.lo,
                hi: s.hi,
                needed: window.steps,
            });
        }
    }
    if end > path.steps {
        return Err(SimError::PathTooShort {
            lo: 0,
            hi: path.steps,
            needed: end,
        });
    }
    let dt = path.dt;
    // factors are read at grid index `fi`, noise increments at step `wi`
    let incr = |y: &[f64], fi: usize, wi: usize, out: &mut [f64]| {
        for (v, terms) in model.eqs.iter().enumerate() {
            let mut acc = 0.0;
            for t in terms {
                let mut x = t.coeff * monomial(y, &t.exps);
                if let Some(f) = t.factor {
                    x *= samples[f].values[fi];
                }
                x *= match t.bare {
                    Some(k) => path.increments[k as usize][wi],
                    None => dt,
                };
                acc += x;
            }
            out[v] = acc;
        }
    };
    let n = model.dim();
    let mut y = init.to_vec();
    let (mut k1, mut k2, mut pred) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![y.clone()],
    };
    for s in 0..window.steps {
        let i = window.start + s;
        incr(&y, i, i, &mut k1);
        for v in 0..n {
            pred[v] = y[v] + k1[v];
        }
        incr(&pred, i + 1, i, &mut k2);
        for v in 0..n {
            y[v] += 0.5 * (k1[v] + k2[v]);
        }
        if (s + 1) % window.stride == 0 {
            traj.times.push((s + 1) as f64 * dt);
            traj.states.push(y.clone());
        }
        if y.iter().any(|v| !v.is_finite()) {
            break;
        }
    }
    Ok(traj)
}

/// Summary statistics per output per time.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    pub replicates: usize,
    pub mean: Vec<Vec<f64>>,
    pub variance: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    /// Standard error of the sample variance.
    pub var_stderr: Vec<Vec<f64>>,
}

/// Mean, unbiased variance, standard error of the mean and of the variance.
pub fn moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let var = m2 / (n - 1.0);
    let se = (var / n).sqrt();
    let var_se = ((m4 - (m2 / n).powi(2)).max(0.0) / n).sqrt();
    (m, var, se, var_se)
}

impl Summary {
    /// `samples[r][t][o]`: replicate, time, output.
    pub fn from_samples(times: Vec<f64>, names: Vec<String>, samples: &[Vec<Vec<f64>>]) -> Self {
        let nt = times.len();
        let no = names.len();
        let mut s = Summary {
            times,
            names,
            replicates: samples.len(),
            mean: vec![vec![0.0; no]; nt],
            variance: vec![vec![0.0; no]; nt],
            stderr: vec![vec![0.0; no]; nt],
            var_stderr: vec![vec![0.0; no]; nt],
        };
        for t in 0..nt {
            for o in 0..no {
                let xs: Vec<f64> = samples.iter().map(|r| r[t][o]).collect();
                let (m, v, se, vse) = moments(&xs);
                s.mean[t][o] = m;
                s.variance[t][o] = v;
                s.stderr[t][o] = se;
                s.var_stderr[t][o] = vse;
            }
        }
        s
    }

    /// Tab-separated table: time, then mean/variance/stderr per output.
    pub fn to_table(&self) -> String {
        let mut out = String::from("time");
        for n in &self.names {
            write!(out, "\tmean_{n}\tvar_{n}\tse_{n}").unwrap();
        }
        out.push('\n');
        for (t, time) in self.times.iter().enumerate() {
            write!(out, "{time}").unwrap();
            for o in 0..self.names.len() {
                write!(out, "\t{:.6e}\t{:.6e}\t{:.6e}", self.mean[t][o], self.variance[t][o], self.stderr[t][o]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Ensemble settings shared by the simulation drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub replicates: usize,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    /// Times at which statistics are reported.
    pub times: Vec<f64>,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.replicates < 2 {
            return Err(SimError::Config("at least two replicates are needed".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SimError::Config(format!(
                "dt and horizon must be positive (dt={}, T={})",
                self.dt, self.horizon
            )));
        }
        if self.times.iter().any(|&t| t < 0.0 || t > self.horizon) {
            return Err(SimError::Config("report times must lie in [0, T]".into()));
        }
        Ok(())
    }
}

/// Runs `replicate(stream)` for every replicate in parallel; each replicate
/// returns one row of outputs per report time.
pub fn ensemble_stats<F>(cfg: &EnsembleConfig, names: Vec<String>, replicate: F) -> Result<Summary, SimError>
where
    F: Fn(u64) -> Result<Vec<Vec<f64>>, SimError> + Sync,
{
    cfg.validate()?;
    let samples: Vec<Vec<Vec<f64>>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(&replicate)
        .collect::<Result<_, _>>()?;
    Ok(Summary::from_samples(cfg.times.clone(), names, &samples))
}

/// Ensemble of one compiled model: each replicate draws its own path and
/// records `observe(state)` at the configured times.
pub fn simulate_ensemble(
    model: &Compiled,
    init: &[f64],
    cfg: &EnsembleConfig,
    names: Vec<String>,
    observe: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
) -> Result<Summary, SimError> {
    cfg.validate()?;
    let stride = 1;
    let window = Window::after_spin_up(model, cfg.dt, cfg.horizon, stride);
    let steps = window.path_steps(model, cfg.dt);
    let noises = model.noises().max(1);
    ensemble_stats(cfg, names, |r| {
        let path = NoisePath::generate(noises, cfg.dt, steps, cfg.seed, r)?;
        let traj = integrate_stratonovich(model, &path, init, window)?;
        Ok(cfg.times.iter().map(|&t| observe(traj.at(t))).collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::build::*;
    use crate::rational::qi;
    use crate::series::{Ctx, Dims, Truncation};
    use crate::text::parse_series;

    fn path(steps: usize, seed: u64) -> NoisePath {
        NoisePath::generate(1, 1e-3, steps, seed, 0).unwrap()
    }

    #[test]
    fn reproducible_paths() {
        let a = path(100, 7);
        let b = path(100, 7);
        assert_eq!(a.increments, b.increments);
        let c = NoisePath::generate(1, 1e-3, 100, 7, 1).unwrap();
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn constant_input() {
        let p = path(20_000, 1);
        let one = NoiseExpr::one();
        let e = NoiseExpr::from_atoms(vec![NoiseAtom::Conv {
            rate: qi(-1),
            child: one,
        }]);
        let s = sample_convolution(&p, &e).unwrap();
        assert!(s.valid().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn bare_noise_is_not_pointwise() {
        let p = path(10, 1);
        assert!(matches!(
            sample_convolution(&p, &phi(0)),
            Err(SimError::IllFormedForSampling(_))
        ));
        let two = z(-1, &prod(&[&phi(0), &phi(0)]));
        assert!(matches!(sample_convolution(&p, &two), Err(SimError::IllFormed(_))));
    }

    #[test]
    fn memory_variance() {
        let p = path(400_000, 3);
        let s = sample_convolution(&p, &z(-1, &phi(0))).unwrap();
        let v: Vec<f64> = s.valid().iter().map(|x| x * x).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        // correlated samples: a loose band around 1/2
        assert!((m - 0.5).abs() < 0.06, "{m}");
    }

    #[test]
    fn reversal_duality() {
        let p = path(30_000, 5);
        let past = sample_convolution(&p, &z(-1, &phi(0))).unwrap();
        let fut = sample_convolution(&p.reversed(), &z(1, &phi(0))).unwrap();
        let n = p.steps;
        let mut checked = 0;
        for i in (past.lo..=past.hi).step_by(97) {
            let j = n - i;
            if j >= fut.lo && j <= fut.hi {
                assert!((past.values[i] + fut.values[j]).abs() < 1e-9);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn heun_on_linear_drift() {
        let ctx = Ctx::new(
            Dims {
                slow: 1,
                fast: 0,
                params: 0,
            },
            vec!["x".into()],
            Truncation::uniform(1, 3),
        );
        let rhs = parse_series(&ctx, "-x").unwrap();
        let m = Compiled::new(&[rhs], &[], &[]).unwrap();
        let p = path(1000, 1);
        let w = Window {
            start: 0,
            steps: 1000,
            stride: 1000,
        };
        let tr = integrate_stratonovich(&m, &p, &[1.0], w).unwrap();
        assert!((tr.states[1][0] - (-1.0_f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn zero_length_is_a_config_error() {
        let ctx = Ctx::new(
            Dims {
                slow: 1,
                fast: 0,
                params: 0,
            },
            vec!["x".into()],
            Truncation::uniform(1, 3),
        );
        let m = Compiled::new(&[parse_series(&ctx, "-x").unwrap()], &[], &[]).unwrap();
        let p = path(10, 1);
        let w = Window {
            start: 0,
            steps: 0,
            stride: 1,
        };
        assert!(matches!(integrate_stratonovich(&m, &p, &[1.0], w), Err(SimError::Config(_))));
        assert!(NoisePath::generate(1, 1e-3, 0, 1, 0).is_err());
    }

    #[test]
    fn two_white_noises_rejected() {
        let ctx = Ctx::new(
            Dims {
                slow: 1,
                fast: 0,
                params: 0,
            },
            vec!["x".into()],
            Truncation::uniform(1, 3),
        );
        let rhs = parse_series(&ctx, "x phi[0] phi[0]").unwrap();
        assert!(matches!(Compiled::new(&[rhs], &[], &[]), Err(SimError::IllFormed(_))));
    }
}
