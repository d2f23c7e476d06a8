//! Simulation drivers: the original system and models derived from it,
//! observed in the original coordinates on independent noise paths.

use crate::engine::NormalForm;
use crate::io::BuiltSpec;
use crate::noise::NoiseExpr;
use crate::rational::to_f64;
use crate::series::Series;
use crate::sim::{
    ensemble_stats, integrate_stratonovich, noise_windows, Compiled, EnsembleConfig, NoisePath, Sampled, Sampler,
    SimError, Summary, Window,
};
use crate::ssm::{expected_series, long_time_model, revert, ssm_parametrisation, to_slow_time};
use std::collections::HashMap;

/// A model ready for ensembles. `init` maps the original initial state to
/// model coordinates and `observe` maps model states back; both may read
/// noise factors at the current time.
#[derive(Debug, Clone)]
pub struct SimModel {
    pub label: String,
    pub compiled: Compiled,
    pub init: Vec<Series>,
    pub observe: Vec<Series>,
    pub observe_names: Vec<String>,
    pub params: Vec<f64>,
    pub noise_scale: Vec<f64>,
}

fn slow_vars(built: &BuiltSpec) -> Vec<Series> {
    let ctx = &built.spec.ctx;
    (0..ctx.dims.slow).map(|i| Series::var(ctx, i)).collect()
}

fn all_vars(built: &BuiltSpec) -> Vec<Series> {
    let ctx = &built.spec.ctx;
    (0..ctx.dims.state()).map(|i| Series::var(ctx, i)).collect()
}

fn on_ssm(s: &Series) -> Series {
    let d = s.ctx().dims;
    s.filter(|k, _| k.exps[d.slow..d.state()].iter().all(|&e| e == 0))
}

fn err(e: impl std::fmt::Display) -> SimError {
    SimError::Config(e.to_string())
}

impl SimModel {
    /// The original system.
    pub fn full(built: &BuiltSpec, names: &[String], params: &[f64]) -> Result<Self, SimError> {
        Ok(Self {
            label: "full".into(),
            compiled: Compiled::new(&built.rates, params, &[])?,
            init: all_vars(built),
            observe: slow_vars(built),
            observe_names: names[..built.spec.ctx.dims.slow].to_vec(),
            params: params.to_vec(),
            noise_scale: Vec::new(),
        })
    }

    /// The normal form in `(X, Y)`, started at the reverted initial state
    /// and observed through the transform.
    pub fn normal_form(built: &BuiltSpec, nf: &NormalForm, names: &[String], params: &[f64]) -> Result<Self, SimError> {
        let d = built.spec.ctx.dims;
        Ok(Self {
            label: "normal-form".into(),
            compiled: Compiled::new(&nf.rates(&built.spec), params, &[])?,
            init: revert(nf).map_err(err)?,
            observe: nf.transform()[..d.slow].to_vec(),
            observe_names: names[..d.slow].to_vec(),
            params: params.to_vec(),
            noise_scale: Vec::new(),
        })
    }

    /// The slow evolution on the manifold with `phi Z phi` replaced by its
    /// mean and a fresh noise, started at the mean reverted state and
    /// observed through the mean manifold chart.
    pub fn long_time(built: &BuiltSpec, nf: &NormalForm, names: &[String], params: &[f64]) -> Result<Self, SimError> {
        let ctx = built.spec.ctx.clone();
        let d = ctx.dims;
        if d.slow != 1 {
            return Err(err("the long-time model needs exactly one slow variable"));
        }
        let mut rate = on_ssm(&nf.rates(&built.spec)[0]);
        let lt = long_time_model(&rate, built.spec.noises);
        if !lt.unevaluable.is_empty() {
            let list: Vec<String> = lt.unevaluable.iter().map(|e| e.to_string()).collect();
            return Err(err(format!("long-time model keeps unevaluable factors: {}", list.join(", "))));
        }
        rate = lt.series.clone();
        let mut noise_scale = vec![1.0; built.spec.noises as usize];
        for n in &lt.fresh {
            noise_scale.push(to_f64(&n.variance).sqrt());
        }
        let mut rates = vec![rate];
        rates.extend((d.slow..d.state()).map(|v| Series::var(&ctx, v).neg()));
        let chart = ssm_parametrisation(nf).map_err(err)?;
        let ex = expected_series(&chart.x[0]).map_err(err)?;
        let inv = revert(nf).map_err(err)?;
        let mut init = vec![expected_series(&inv[0]).map_err(err)?];
        init.extend((d.slow..d.state()).map(|_| Series::zero(&ctx)));
        Ok(Self {
            label: "long-time".into(),
            compiled: Compiled::new(&rates, params, &noise_scale)?,
            init,
            observe: vec![ex],
            observe_names: names[..1].to_vec(),
            params: params.to_vec(),
            noise_scale,
        })
    }

    /// The averaging limit: the long-time drift at `eps = 0`, restored to
    /// fast time, without noise.
    pub fn averaged(
        built: &BuiltSpec,
        nf: &NormalForm,
        eps: &str,
        names: &[String],
        params: &[f64],
    ) -> Result<Self, SimError> {
        let ctx = built.spec.ctx.clone();
        let d = ctx.dims;
        if d.slow != 1 {
            return Err(err("the averaged model needs exactly one slow variable"));
        }
        let lt = long_time_model(&on_ssm(&nf.rates(&built.spec)[0]), built.spec.noises);
        let slow = to_slow_time(&lt, eps, &[]).map_err(err)?;
        let e = ctx.index_of(eps).ok_or_else(|| err(format!("unknown parameter {eps}")))?;
        let mut rates = vec![slow.averaged_drift().mul(&Series::var(&ctx, e))];
        rates.extend((d.slow..d.state()).map(|v| Series::var(&ctx, v).neg()));
        let mut init = slow_vars(built);
        init.extend((d.slow..d.state()).map(|_| Series::zero(&ctx)));
        Ok(Self {
            label: "averaged".into(),
            compiled: Compiled::new(&rates, params, &[])?,
            init,
            observe: slow_vars(built),
            observe_names: names[..1].to_vec(),
            params: params.to_vec(),
            noise_scale: Vec::new(),
        })
    }

    fn factors(&self) -> Vec<NoiseExpr> {
        let mut out: Vec<NoiseExpr> = Vec::new();
        for s in self.init.iter().chain(&self.observe) {
            for (k, _) in s.iter() {
                if !k.noise.is_one() && !out.contains(&k.noise) {
                    out.push(k.noise.clone());
                }
            }
        }
        out
    }

    fn windows(&self) -> (f64, f64) {
        let (mut back, mut fwd) = self.compiled.windows();
        for f in self.factors() {
            let (b, w) = noise_windows(&f);
            back = back.max(b);
            fwd = fwd.max(w);
        }
        (back, fwd)
    }

    /// One replicate: observations at `times` after starting from `state0`
    /// (original coordinates).
    pub fn replicate(&self, state0: &[f64], cfg: &EnsembleConfig, seed: u64, stream: u64) -> Result<Vec<Vec<f64>>, SimError> {
        let dt = cfg.dt;
        let (back, fwd) = self.windows();
        let window = Window {
            start: (back / dt).ceil() as usize,
            steps: (cfg.horizon / dt).round() as usize,
            stride: 1,
        };
        let steps = window.start + window.steps + (fwd / dt).ceil() as usize + 2;
        let noises = self.compiled.noises().max(1);
        let path = NoisePath::generate(noises, dt, steps, seed, stream)?;
        let mut sampler = Sampler::new(&path);
        let sampled: HashMap<NoiseExpr, Sampled> = self
            .factors()
            .into_iter()
            .map(|f| sampler.sample(&f).map(|s| (f, s)))
            .collect::<Result<_, _>>()?;
        let eval = |s: &Series, vals: &[f64], i: usize| -> Result<f64, SimError> {
            let mut bad = None;
            let v = s.eval(vals, &mut |e: &NoiseExpr| match sampled.get(e) {
                Some(smp) if i >= smp.lo && i <= smp.hi => smp.values[i],
                _ => {
                    bad = Some(e.clone());
                    f64::NAN
                }
            });
            match bad {
                Some(e) => Err(SimError::IllFormedForSampling(e.to_string())),
                None => Ok(v),
            }
        };
        let mut vals: Vec<f64> = state0.to_vec();
        vals.extend(&self.params);
        let y0: Vec<f64> = self
            .init
            .iter()
            .map(|s| eval(s, &vals, window.start))
            .collect::<Result<_, _>>()?;
        let traj = integrate_stratonovich(&self.compiled, &path, &y0, window)?;
        let mut rows = Vec::with_capacity(cfg.times.len());
        for &t in &cfg.times {
            let j = (t / dt).round() as usize;
            let mut v = traj.states.get(j).cloned().unwrap_or_else(|| vec![f64::NAN; y0.len()]);
            v.extend(&self.params);
            rows.push(
                self.observe
                    .iter()
                    .map(|s| eval(s, &v, window.start + j))
                    .collect::<Result<Vec<f64>, _>>()?,
            );
        }
        Ok(rows)
    }

    pub fn ensemble(&self, state0: &[f64], cfg: &EnsembleConfig, seed: u64) -> Result<Summary, SimError> {
        ensemble_stats(cfg, self.observe_names.clone(), |r| self.replicate(state0, cfg, seed, r))
    }
}

/// Parameter values: overrides by name, then spec defaults.
pub fn param_values(
    doc: &crate::io::SpecDocument,
    overrides: &[(String, f64)],
) -> Result<Vec<f64>, SimError> {
    let d = doc.dims();
    let defaults = doc.param_values();
    for (n, _) in overrides {
        if doc.param_index(n).is_none() {
            return Err(err(format!("unknown parameter `{n}`")));
        }
    }
    doc.vars[d.state()..]
        .iter()
        .zip(defaults)
        .map(|(v, def)| {
            overrides
                .iter()
                .rev()
                .find(|(n, _)| *n == v.name)
                .map(|(_, x)| *x)
                .or(def.as_ref().map(to_f64))
                .ok_or_else(|| err(format!("no value for parameter `{}`; use --set {}=...", v.name, v.name)))
        })
        .collect()
}

/// One line of a full-versus-model comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub model: String,
    pub time: f64,
    pub name: String,
    pub mean: f64,
    pub mean_ref: f64,
    /// `(model - reference) / combined standard error`.
    pub z_mean: f64,
    pub var: f64,
    pub var_ref: f64,
    pub z_var: f64,
}

impl CompareRow {
    pub fn within(&self, k: f64) -> bool {
        self.z_mean.abs() <= k && self.z_var.abs() <= k
    }
}

fn zscore(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    let s = (sa * sa + sb * sb).sqrt();
    if s > 0.0 {
        (a - b) / s
    } else if a == b {
        0.0
    } else {
        f64::INFINITY * (a - b).signum()
    }
}

/// Compares a model ensemble with a reference ensemble output by output.
pub fn compare(model: &str, reference: &Summary, other: &Summary) -> Vec<CompareRow> {
    let mut rows = Vec::new();
    for (t, &time) in reference.times.iter().enumerate() {
        for (o, name) in reference.names.iter().enumerate() {
            rows.push(CompareRow {
                model: model.to_string(),
                time,
                name: name.clone(),
                mean: other.mean[t][o],
                mean_ref: reference.mean[t][o],
                z_mean: zscore(other.mean[t][o], other.stderr[t][o], reference.mean[t][o], reference.stderr[t][o]),
                var: other.variance[t][o],
                var_ref: reference.variance[t][o],
                z_var: zscore(
                    other.variance[t][o],
                    other.var_stderr[t][o],
                    reference.variance[t][o],
                    reference.var_stderr[t][o],
                ),
            });
        }
    }
    rows
}

pub fn compare_table(rows: &[CompareRow], k: f64) -> String {
    let mut s = String::from("model\ttime\toutput\tmean\tmean_full\tz_mean\tvar\tvar_full\tz_var\tpass\n");
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{:.6e}\t{:.6e}\t{:.2}\t{:.6e}\t{:.6e}\t{:.2}\t{}\n",
            r.model,
            r.time,
            r.name,
            r.mean,
            r.mean_ref,
            r.z_mean,
            r.var,
            r.var_ref,
            r.z_var,
            if r.within(k) { "yes" } else { "no" }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::construct;
    use crate::io::{parse_spec, LINEAR, TOY};

    #[test]
    fn normal_form_tracks_full_system_pathwise() {
        // without noise the transform of the normal form must follow the
        // full trajectory up to truncation error
        let doc = parse_spec(TOY).unwrap();
        let built = doc.build(None).unwrap();
        let nf = construct(&built.spec, doc.policy.clone()).unwrap();
        let names = doc.names();
        let p = [0.0];
        let full = SimModel::full(&built, &names, &p).unwrap();
        let red = SimModel::normal_form(&built, &nf, &names, &p).unwrap();
        let cfg = EnsembleConfig {
            replicates: 2,
            seed: 3,
            dt: 1e-3,
            horizon: 5.0,
            times: vec![1.0, 5.0],
        };
        let a = full.replicate(&[0.3, 0.1], &cfg, 3, 0).unwrap();
        let b = red.replicate(&[0.3, 0.1], &cfg, 3, 0).unwrap();
        assert!(a.iter().chain(&b).all(|r| r[0].is_finite()));
        assert!((a[1][0] - b[1][0]).abs() < 2e-3, "{a:?} {b:?}");
    }

    #[test]
    fn missing_parameter_value() {
        let doc = parse_spec(&TOY.replace(" value 1/20", "")).unwrap();
        assert!(param_values(&doc, &[]).is_err());
        assert_eq!(param_values(&doc, &[("s".into(), 0.1)]).unwrap(), vec![0.1]);
        let lin = parse_spec(LINEAR).unwrap();
        assert_eq!(param_values(&lin, &[]).unwrap(), vec![0.1, 1.0]);
    }
}
