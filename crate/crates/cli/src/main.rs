//! `stonf`: derive, certify and simulate stochastic normal forms.
//!
//! Exit status: 0 success, 1 configuration or I/O error, 2 usage error,
//! 3 spec or report parse error, 4 certification failure, 5 tolerance
//! failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use stonf_core::engine::{construct, verify_order};
use stonf_core::hopf::{hopf_noise_stats, mathieu_growth, quad_constants, quad_mean, HopfNoiseConfig};
use stonf_core::io::{bundled, emit_report, parse_report, parse_spec, recertify, Analyses, VerifyError};
use stonf_core::pipeline::{compare, compare_table, param_values, SimModel};
use stonf_core::rational::parse_q;
use stonf_core::{EnsembleConfig, OrderSpec, Policy, SpecDocument, SpecError};

#[derive(Parser)]
#[command(name = "stonf", version, about = "Stochastic normal forms for slow-fast SDEs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Construct the normal form and print the report.
    Derive {
        /// Spec file, or a bundled name: toy, papavasiliou, linear.
        spec: String,
        #[command(flatten)]
        derive: DeriveOpts,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-certify a saved report.
    Verify {
        report: PathBuf,
    },
    /// Ensemble statistics of the full system or a derived model.
    Simulate {
        spec: String,
        #[arg(long, value_enum, default_value = "full")]
        model: ModelKind,
        #[command(flatten)]
        derive: DeriveOpts,
        #[command(flatten)]
        sim: SimOpts,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full system against the derived models on independent paths.
    Compare {
        spec: String,
        #[command(flatten)]
        derive: DeriveOpts,
        #[command(flatten)]
        sim: SimOpts,
        /// Allowed |difference| in combined standard errors.
        #[arg(long, default_value_t = 3.0)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hopf noise constants and the Mathieu growth check.
    Hopf {
        #[arg(long, default_value_t = 0.2)]
        delta: f64,
        #[arg(long, default_value_t = 40)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long = "T", default_value_t = 2000.0)]
        horizon: f64,
        /// Frequency cutoff of the quadratic noise sum.
        #[arg(long, default_value_t = 30.0)]
        omega_max: f64,
        #[arg(long, default_value_t = 0.05)]
        beta: f64,
        #[arg(long, default_value_t = 0.3)]
        sigma: f64,
        /// Allowed deviation of c_r, c_i from quadrature.
        #[arg(long, default_value_t = 0.05)]
        c_tol: f64,
        /// Allowed relative deviation of band power from one.
        #[arg(long, default_value_t = 0.2)]
        band_tol: f64,
        /// Allowed relative error of the growth rates.
        #[arg(long, default_value_t = 0.1)]
        rate_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DeriveOpts {
    /// Exclusive bounds such as `e6,s3`: total grade below 6, s below 3.
    #[arg(long)]
    order: Option<String>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Decaying terms slower than this stay in the evolution.
    #[arg(long)]
    mu_min: Option<String>,
}

#[derive(Args)]
struct SimOpts {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long = "T", default_value_t = 20.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    /// Report times, comma separated; default 5 and T.
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,
    /// Initial state in original coordinates, comma separated.
    #[arg(long, value_delimiter = ',')]
    x0: Vec<f64>,
    /// Parameter value `name=value`; repeatable.
    #[arg(long = "set")]
    set: Vec<String>,
    /// Value of the rescale parameter.
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Anticipate,
    NoAnticipate,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Full,
    NormalForm,
    LongTime,
    Averaged,
}

enum Failure {
    Config(String),
    Parse(String),
    Certification(String),
    Tolerance(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Parse(_) => 3,
            Failure::Certification(_) => 4,
            Failure::Tolerance(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Parse(m) | Failure::Certification(m) | Failure::Tolerance(m) => m,
        }
    }
}

impl From<SpecError> for Failure {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::Syntax { .. } => Failure::Parse(e.to_string()),
            SpecError::Semantic(_) => Failure::Parse(e.to_string()),
        }
    }
}

fn config(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn load_spec(name: &str) -> Result<SpecDocument, Failure> {
    let path = PathBuf::from(name);
    let text = if path.exists() {
        std::fs::read_to_string(&path).map_err(|e| config(format!("{name}: {e}")))?
    } else {
        bundled(name)
            .ok_or_else(|| config(format!("{name}: no such file or bundled spec")))?
            .to_string()
    };
    parse_spec(&text).map_err(|e| Failure::Parse(format!("{name}: {e}")))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| config(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn apply_policy(doc: &mut SpecDocument, opts: &DeriveOpts) -> Result<Option<OrderSpec>, Failure> {
    if let Some(p) = opts.policy {
        let mu = doc.policy.mu_min.clone();
        doc.policy = match p {
            PolicyArg::Anticipate => Policy::anticipate(),
            PolicyArg::NoAnticipate => Policy::no_anticipate(),
        }
        .with_mu_min(mu);
    }
    if let Some(m) = &opts.mu_min {
        let q = parse_q(m)
            .filter(|q| *q >= stonf_core::Q::from_integer(0.into()))
            .ok_or_else(|| config(format!("--mu-min must be a non-negative rational, got `{m}`")))?;
        doc.policy = doc.policy.clone().with_mu_min(q);
    }
    opts.order
        .as_deref()
        .map(OrderSpec::parse)
        .transpose()
        .map_err(|m| config(format!("--order: {m}")))
}

fn derive(
    spec: &str,
    opts: &DeriveOpts,
) -> Result<(SpecDocument, stonf_core::BuiltSpec, stonf_core::NormalForm), Failure> {
    let mut doc = load_spec(spec)?;
    let order = apply_policy(&mut doc, opts)?;
    let built = doc.build(order.as_ref())?;
    let mut nf = construct(&built.spec, doc.policy.clone()).map_err(|e| Failure::Certification(e.to_string()))?;
    let certified = verify_order(&built.spec, &nf).map_err(|e| Failure::Certification(e.to_string()))?;
    nf.certified_order = Some(certified);
    Ok((doc, built, nf))
}

fn ensemble_config(doc: &SpecDocument, sim: &SimOpts) -> Result<(EnsembleConfig, Vec<f64>, Vec<f64>), Failure> {
    let mut sets = Vec::new();
    for s in &sim.set {
        let (n, v) = s
            .split_once('=')
            .ok_or_else(|| config(format!("--set expects name=value, got `{s}`")))?;
        let v: f64 = v.parse().map_err(|_| config(format!("--set {n}: `{v}` is not a number")))?;
        sets.push((n.to_string(), v));
    }
    if let Some(e) = sim.eps {
        let p = doc
            .rescale
            .clone()
            .ok_or_else(|| config("--eps needs a spec with a rescale parameter"))?;
        sets.push((p, e));
    }
    let params = param_values(doc, &sets).map_err(config)?;
    let x0 = if sim.x0.is_empty() { doc.initial_state() } else { sim.x0.clone() };
    if x0.len() != doc.dims().state() {
        return Err(config(format!("--x0 needs {} values", doc.dims().state())));
    }
    let times = if sim.times.is_empty() {
        let mut t = vec![sim.horizon.min(5.0), sim.horizon];
        t.dedup();
        t
    } else {
        sim.times.clone()
    };
    let cfg = EnsembleConfig {
        replicates: sim.replicates,
        seed: sim.seed,
        dt: sim.dt,
        horizon: sim.horizon,
        times,
    };
    cfg.validate().map_err(config)?;
    Ok((cfg, params, x0))
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Derive { spec, derive: opts, out } => {
            let (doc, built, nf) = derive(&spec, &opts)?;
            let an = Analyses::compute(&built.spec, &nf);
            emit(&out, &emit_report(&doc, &built, &nf, &an))?;
            let want = built.spec.order() + 1;
            match nf.certified_order {
                Some(c) if c == want => Ok(()),
                c => Err(Failure::Certification(format!(
                    "residual at grade {} inside the truncation (expected {want})",
                    c.unwrap_or(0)
                ))),
            }
        }
        Cmd::Verify { report } => {
            let text =
                std::fs::read_to_string(&report).map_err(|e| config(format!("{}: {e}", report.display())))?;
            let parsed = parse_report(&text).map_err(|e| Failure::Parse(format!("{}: {e}", report.display())))?;
            let (built, _, order) = recertify(&parsed).map_err(|e| match e {
                VerifyError::Spec(s) => Failure::from(s),
                VerifyError::Engine(e) => Failure::Certification(e.to_string()),
            })?;
            let want = built.spec.order() + 1;
            println!("residual order {order} (truncation {want}, report claims {:?})", parsed.certified);
            if order != want || parsed.certified != Some(order) {
                return Err(Failure::Certification(format!(
                    "report does not certify: residual at grade {order}, expected {want}"
                )));
            }
            Ok(())
        }
        Cmd::Simulate {
            spec,
            model,
            derive: opts,
            sim,
            out,
        } => {
            let (doc, built, nf) = derive(&spec, &opts)?;
            let (cfg, params, x0) = ensemble_config(&doc, &sim)?;
            let names = doc.names();
            let m = match model {
                ModelKind::Full => SimModel::full(&built, &names, &params),
                ModelKind::NormalForm => SimModel::normal_form(&built, &nf, &names, &params),
                ModelKind::LongTime => SimModel::long_time(&built, &nf, &names, &params),
                ModelKind::Averaged => {
                    let eps = doc
                        .rescale
                        .clone()
                        .ok_or_else(|| config("the averaged model needs a spec with a rescale parameter"))?;
                    SimModel::averaged(&built, &nf, &eps, &names, &params)
                }
            }
            .map_err(config)?;
            let summary = m.ensemble(&x0, &cfg, cfg.seed).map_err(config)?;
            emit(&out, &summary.to_table())
        }
        Cmd::Compare {
            spec,
            derive: opts,
            sim,
            tol,
            out,
        } => {
            let (doc, built, nf) = derive(&spec, &opts)?;
            let (cfg, params, x0) = ensemble_config(&doc, &sim)?;
            let names = doc.names();
            let full = SimModel::full(&built, &names, &params)
                .and_then(|m| m.ensemble(&x0, &cfg, cfg.seed))
                .map_err(config)?;
            let mut models = vec![SimModel::normal_form(&built, &nf, &names, &params).map_err(config)?];
            let mut skipped = Vec::new();
            match SimModel::long_time(&built, &nf, &names, &params) {
                Ok(m) => models.push(m),
                Err(e) => skipped.push(format!("# long-time model skipped: {e}\n")),
            }
            if let Some(eps) = &doc.rescale {
                match SimModel::averaged(&built, &nf, eps, &names, &params) {
                    Ok(m) => models.push(m),
                    Err(e) => skipped.push(format!("# averaged model skipped: {e}\n")),
                }
            }
            let mut rows = Vec::new();
            for (i, m) in models.iter().enumerate() {
                let s = m
                    .ensemble(&x0, &cfg, cfg.seed.wrapping_add(1 + i as u64))
                    .map_err(config)?;
                rows.extend(compare(&m.label, &full, &s));
            }
            let mut text = format!(
                "# {} replicates, dt {}, independent paths per model; pass = |z| <= {tol}\n",
                cfg.replicates, cfg.dt
            );
            text.extend(skipped);
            text.push_str(&compare_table(&rows, tol));
            emit(&out, &text)?;
            let failed: Vec<_> = rows
                .iter()
                .filter(|r| r.model == "normal-form" && !r.within(tol))
                .map(|r| format!("t={} {}", r.time, r.name))
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Tolerance(format!(
                    "normal-form model outside tolerance at {}",
                    failed.join(", ")
                )))
            }
        }
        Cmd::Hopf {
            delta,
            replicates,
            seed,
            dt,
            horizon,
            omega_max,
            beta,
            sigma,
            c_tol,
            band_tol,
            rate_tol,
            out,
        } => {
            let cfg = HopfNoiseConfig {
                delta,
                dt,
                horizon,
                omega_max,
                replicates,
                seed,
            };
            let st = hopf_noise_stats(&cfg).map_err(config)?;
            let (qr, qi) = quad_constants(delta, omega_max.max(40.0), 2e-3).map_err(config)?;
            let g = mathieu_growth(beta, sigma).map_err(config)?;
            let mut text = String::from("quantity\testimate\tstderr\treference\tpass\n");
            let mut fails = Vec::new();
            let mut row = |name: &str, (m, se): (f64, f64), reference: f64, ok: bool| {
                text.push_str(&format!("{name}\t{m:.5}\t{se:.5}\t{reference:.5}\t{}\n", if ok { "yes" } else { "no" }));
                if !ok {
                    fails.push(name.to_string());
                }
            };
            row("c_r", st.c_r, qr, (st.c_r.0 - qr).abs() <= c_tol);
            row("c_i", st.c_i, qi, (st.c_i.0 - qi).abs() <= c_tol);
            row("mean psi_r", st.psi_r_mean, 0.0, st.psi_r_mean.0.abs() <= 3.0 * st.psi_r_mean.1);
            row("mean psi_i", st.psi_i_mean, 0.0, st.psi_i_mean.0.abs() <= 3.0 * st.psi_i_mean.1);
            for (m, p) in ["phi_0", "phi_2", "phi_-2"].iter().zip(st.band_power) {
                row(&format!("E|{m}|^2"), p, 1.0, (p.0 - 1.0).abs() <= band_tol);
            }
            let rel = |r: f64| ((r - g.predicted) / g.predicted).abs();
            row("growth model", (g.model, 0.0), g.predicted, rel(g.model) <= rate_tol);
            row("growth oscillator", (g.full, 0.0), g.predicted, rel(g.full) <= rate_tol);
            text.push_str(&format!(
                "white-noise mean psi_r\t{:.5}\t0\t-\treported\n",
                quad_mean(delta, omega_max) / st.c_r.0
            ));
            text.push_str(&format!("corr phi_0 Re phi_2\t{:.5}\t{:.5}\t0\treported\n", st.band_cross.0, st.band_cross.1));
            emit(&out, &text)?;
            if fails.is_empty() {
                Ok(())
            } else {
                Err(Failure::Tolerance(format!("outside tolerance: {}", fails.join(", "))))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("stonf: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
