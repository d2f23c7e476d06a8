//! Numerical checks of the stochastic Hopf amplitude models for the
//! Duffing-van der Pol oscillator
//! `x'' = (alpha + sigma phi) x + beta x' - x^3 - x^2 x'`.
//!
//! Noise convention: the spectrum satisfies
//! `E[conj(phi~(W)) phi~(W')] = delta(W - W')` with
//! `phi(t) = int e^{iWt} phi~(W) dW`, so `phi` is white with intensity
//! `2 pi`. Functions here take increments of that `phi`; use
//! [`hopf_increments`] to convert a standard [`NoisePath`].

use crate::sim::{moments, NoisePath, SimError};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

type C = Complex64;

/// Increments of the intensity-`2 pi` noise driven by symbol `k` of `path`.
pub fn hopf_increments(path: &NoisePath, k: usize) -> Vec<f64> {
    let s = (2.0 * PI).sqrt();
    path.increments[k].iter().map(|w| s * w).collect()
}

/// Increments `int phi dt` of a deterministic forcing on the grid.
pub fn deterministic_increments(f: impl Fn(f64) -> f64, dt: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|i| {
            let t = i as f64 * dt;
            // Simpson over the step
            (f(t) + 4.0 * f(t + 0.5 * dt) + f(t + dt)) * dt / 6.0
        })
        .collect()
}

/// Discrete spectrum `phi~(W_k)`, `W_k = 2 pi k / T`, of a noise given by
/// its increments. Index `k > n/2` holds negative frequencies.
pub struct Spectrum {
    pub dt: f64,
    pub values: Vec<C>,
}

impl Spectrum {
    pub fn new(increments: &[f64], dt: f64) -> Self {
        let n = increments.len();
        let mut buf: Vec<C> = increments.iter().map(|&w| C::new(w, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        // increment j covers [t_j, t_j + dt]; reference it to its midpoint
        let d_omega = 2.0 * PI / (n as f64 * dt);
        for (k, v) in buf.iter_mut().enumerate() {
            let w = Self::freq_of(k, n, d_omega);
            *v *= C::from_polar(1.0 / (2.0 * PI), -0.5 * w * dt);
        }
        Self { dt, values: buf }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn d_omega(&self) -> f64 {
        2.0 * PI / (self.len() as f64 * self.dt)
    }

    fn freq_of(k: usize, n: usize, d_omega: f64) -> f64 {
        if k <= n / 2 {
            k as f64 * d_omega
        } else {
            (k as f64 - n as f64) * d_omega
        }
    }

    pub fn freq(&self, k: usize) -> f64 {
        Self::freq_of(k, self.len(), self.d_omega())
    }

    /// Index of frequency `j * d_omega` for a signed integer `j`.
    fn index(&self, j: i64) -> usize {
        j.rem_euclid(self.len() as i64) as usize
    }

    /// `sum_k c_k e^{i W_k t_j} d_omega` on the path grid for a spectrum
    /// supported near zero frequency.
    fn synthesize(&self, coeffs: &[(i64, C)]) -> Vec<C> {
        let n = self.len();
        let mut buf = vec![C::new(0.0, 0.0); n];
        for &(j, c) in coeffs {
            buf[self.index(j)] += c * self.d_omega();
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        buf
    }
}

fn check_delta(delta: f64) -> Result<(), SimError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SimError::Config(format!(
            "band half-width must lie in (0, 1) so the bands at 0 and +-2 do not overlap (got {delta})"
        )));
    }
    Ok(())
}

/// The slowly varying resonant component of the noise near frequency `m`.
#[derive(Debug, Clone)]
pub struct BandNoise {
    pub center: i32,
    pub delta: f64,
    pub values: Vec<C>,
}

/// `phi_m(t) = (2 delta)^{-1/2} int_{m-delta}^{m+delta} e^{i(W-m)t} phi~(W) dW`.
pub fn band_component(spec: &Spectrum, m: i32, delta: f64) -> Result<BandNoise, SimError> {
    check_delta(delta)?;
    let dw = spec.d_omega();
    let lo = ((m as f64 - delta) / dw).ceil() as i64;
    let hi = ((m as f64 + delta) / dw).floor() as i64;
    let shift = (m as f64 / dw).round() as i64;
    let scale = 1.0 / (2.0 * delta).sqrt();
    // demodulate by shifting the band to zero; for m / d_omega not an
    // integer the residual phase is applied pointwise
    let coeffs: Vec<(i64, C)> = (lo..=hi)
        .map(|j| (j - shift, spec.values[spec.index(j)] * scale))
        .collect();
    let mut values = spec.synthesize(&coeffs);
    let resid = m as f64 - shift as f64 * dw;
    if resid != 0.0 {
        for (i, v) in values.iter_mut().enumerate() {
            *v *= C::from_polar(1.0, -resid * i as f64 * spec.dt);
        }
    }
    Ok(BandNoise {
        center: m,
        delta,
        values,
    })
}

/// Kernels of the quadratic noise terms, `s = +1` or `-1`.
pub fn kernel(s: f64, w: f64, wt: f64) -> f64 {
    -((w + wt + s * w * wt) * (w + wt + 2.0 * s)) / (2.0 * (w + 2.0 * s) * (wt + 2.0 * s) * w * wt)
}

/// The same kernel in the rotated coordinates `omega = (W - W~)/2`,
/// `omega~ = W + W~`.
pub fn kernel_rotated(s: f64, om: f64, omt: f64) -> f64 {
    kernel(s, om + 0.5 * omt, -om + 0.5 * omt)
}

/// Whether a frequency lies in the non-resonant domain `D`.
pub fn in_domain(w: f64, delta: f64) -> bool {
    [-2.0, 0.0, 2.0].iter().all(|m| (w - m).abs() > delta)
}

/// The quadratically generated noise `psi_+ = c_r psi_r + i c_i psi_i`.
#[derive(Debug, Clone)]
pub struct QuadNoise {
    pub psi_r: Vec<f64>,
    pub psi_i: Vec<f64>,
    pub c_r: f64,
    pub c_i: f64,
}

impl QuadNoise {
    pub fn psi_plus(&self, i: usize) -> C {
        C::new(self.c_r * self.psi_r[i], self.c_i * self.psi_i[i])
    }
}

/// `psi_+(t) = int_{-delta}^{delta} e^{i w~ t} psi~(w~) dw~` with
/// `psi~(w~) = int K_+(W, w~ - W) phi~(W) phi~(w~ - W) dW` over `W` and
/// `w~ - W` in `D`, `|W| <= omega_max`. `c_r`, `c_i` are the sample root
/// mean squares of the real and imaginary parts.
pub fn quad_resonant_noise(spec: &Spectrum, delta: f64, omega_max: f64) -> Result<QuadNoise, SimError> {
    check_delta(delta)?;
    let dw = spec.d_omega();
    let band = (delta / dw).floor() as i64;
    let top = (omega_max / dw).floor() as i64;
    if 2 * top as usize >= spec.len() {
        return Err(SimError::Config(format!(
            "omega_max {omega_max} exceeds the Nyquist frequency {}",
            PI / spec.dt
        )));
    }
    let mut coeffs = Vec::with_capacity(2 * band as usize + 1);
    for n in -band..=band {
        let wt = n as f64 * dw;
        let mut acc = C::new(0.0, 0.0);
        for k in -top..=top {
            let (w, w2) = (k as f64 * dw, (n - k) as f64 * dw);
            if !in_domain(w, delta) || !in_domain(w2, delta) {
                continue;
            }
            acc += kernel(1.0, w, wt - w) * spec.values[spec.index(k)] * spec.values[spec.index(n - k)];
        }
        coeffs.push((n, acc * dw));
    }
    let psi = spec.synthesize(&coeffs);
    let re: Vec<f64> = psi.iter().map(|z| z.re).collect();
    let im: Vec<f64> = psi.iter().map(|z| z.im).collect();
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let (c_r, c_i) = (rms(&re), rms(&im));
    Ok(QuadNoise {
        psi_r: re.iter().map(|x| x / c_r).collect(),
        psi_i: im.iter().map(|x| x / c_i).collect(),
        c_r,
        c_i,
    })
}

/// Exact `(c_r, c_i)` for Gaussian white noise by quadrature:
/// `c_r^2 = iint K_+ (K_+ + K_-)`, `c_i^2 = iint K_+ (K_+ - K_-)` over
/// `|w~| < delta`, `W`, `w~ - W` in `D`.
pub fn quad_constants(delta: f64, omega_max: f64, step: f64) -> Result<(f64, f64), SimError> {
    check_delta(delta)?;
    let nt = 200;
    let (mut vr, mut vi) = (0.0, 0.0);
    for a in 0..=nt {
        let wt = -delta + 2.0 * delta * a as f64 / nt as f64;
        let weight = if a == 0 || a == nt { 0.5 } else { 1.0 } * 2.0 * delta / nt as f64;
        let n = (2.0 * omega_max / step) as i64;
        for k in 0..n {
            let w = -omega_max + (k as f64 + 0.5) * step;
            if !in_domain(w, delta) || !in_domain(wt - w, delta) {
                continue;
            }
            let (kp, km) = (kernel(1.0, w, wt - w), kernel(-1.0, w, wt - w));
            vr += weight * step * kp * (kp + km);
            vi += weight * step * kp * (kp - km);
        }
    }
    Ok((vr.sqrt(), vi.sqrt()))
}

/// `E[psi_+]` for white noise: the diagonal `W~ = -W` of the quadratic sum
/// gives `int_D dW / (W^2 - 4)` over `|W| <= omega_max` (infinite allowed).
pub fn quad_mean(delta: f64, omega_max: f64) -> f64 {
    let prim = |w: f64| if w.is_infinite() { 0.0 } else { 0.25 * ((w - 2.0).abs() / (w + 2.0)).ln() };
    let seg = |a: f64, b: f64| if b > a { prim(b) - prim(a) } else { 0.0 };
    let m = omega_max;
    2.0 * (seg(delta, (2.0 - delta).min(m)) + seg(2.0 + delta, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeModel {
    /// Linear noise effects only.
    Order1,
    /// With the quadratic noise and `delta`-order corrections.
    Order2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeParams {
    pub beta: f64,
    pub sigma: f64,
    pub delta: f64,
}

/// Slowly varying inputs on the integration grid. `psi` is `psi_+`; it may
/// be empty for the first-order model.
#[derive(Debug, Clone)]
pub struct AmplitudeNoises {
    pub phi0: Vec<C>,
    pub phi2: Vec<C>,
    pub psi: Vec<C>,
}

fn amplitude_rhs(model: AmplitudeModel, p: &AmplitudeParams, a: C, phi0: C, phi2: C, psi: C) -> C {
    let i = C::i();
    let b = a.conj();
    let mut r = 0.5 * p.beta * a - C::new(0.5, -1.5) * a * a * b
        + p.sigma * (p.delta / 2.0).sqrt() * (a * phi0 - b * phi2);
    if model == AmplitudeModel::Order2 {
        let phim2 = phi2.conj();
        r += i * 0.5 * p.sigma * p.sigma * psi * a
            - i * p.delta * p.sigma * p.sigma * (0.25 * phi0 * phi0 + 0.125 * phi2 * phim2) * a;
    }
    r
}

/// Heun integration of the complex amplitude equation with `b = conj(a)`.
pub fn simulate_amplitude(
    model: AmplitudeModel,
    p: &AmplitudeParams,
    noises: &AmplitudeNoises,
    dt: f64,
    a0: C,
) -> Result<Vec<C>, SimError> {
    let n = noises.phi0.len();
    if noises.phi2.len() != n || (model == AmplitudeModel::Order2 && noises.psi.len() != n) {
        return Err(SimError::Config("amplitude noises must share one grid".into()));
    }
    if n < 2 {
        return Err(SimError::Config("amplitude noises need at least two grid points".into()));
    }
    let zero = C::new(0.0, 0.0);
    let psi = |j: usize| noises.psi.get(j).copied().unwrap_or(zero);
    let mut out = Vec::with_capacity(n);
    let mut a = a0;
    out.push(a);
    for j in 0..n - 1 {
        let k1 = amplitude_rhs(model, p, a, noises.phi0[j], noises.phi2[j], psi(j));
        let pred = a + k1 * dt;
        let k2 = amplitude_rhs(model, p, pred, noises.phi0[j + 1], noises.phi2[j + 1], psi(j + 1));
        a += 0.5 * (k1 + k2) * dt;
        out.push(a);
    }
    Ok(out)
}

/// The long-time Landau model
/// `da = [beta/2 a - (1/2 - 3i/2)|a|^2 a] dt + i c_r sigma^2/2 a dW_r - c_i sigma^2/2 a dW_i`
/// driven by two standard noises of `path`.
pub fn simulate_landau_sde(
    beta: f64,
    sigma: f64,
    c_r: f64,
    c_i: f64,
    path: &NoisePath,
    a0: C,
) -> Result<Vec<C>, SimError> {
    if path.noises() < 2 {
        return Err(SimError::Config("the Landau model needs two noise symbols".into()));
    }
    let i = C::i();
    let s2 = sigma * sigma;
    let f = |a: C, dwr: f64, dwi: f64| {
        (0.5 * beta * a - C::new(0.5, -1.5) * a.norm_sqr() * a) * path.dt + i * 0.5 * c_r * s2 * a * dwr
            - 0.5 * c_i * s2 * a * dwi
    };
    let mut a = a0;
    let mut out = vec![a];
    for j in 0..path.steps {
        let (dwr, dwi) = (path.increments[0][j], path.increments[1][j]);
        let k1 = f(a, dwr, dwi);
        let k2 = f(a + k1, dwr, dwi);
        a += 0.5 * (k1 + k2);
        out.push(a);
    }
    Ok(out)
}

/// Stratonovich Heun integration of the oscillator written as
/// `(x, v)`; `phi_increments` are increments of `phi` (see the module
/// convention). Returns `(x, v)` every `stride` steps.
pub fn simulate_dvdp(
    alpha: f64,
    beta: f64,
    sigma: f64,
    phi_increments: &[f64],
    dt: f64,
    init: (f64, f64),
    stride: usize,
) -> Vec<(f64, f64)> {
    let drift = |x: f64, v: f64| (v, alpha * x + beta * v - x * x * x - x * x * v);
    let stride = stride.max(1);
    let (mut x, mut v) = init;
    let mut out = vec![(x, v)];
    for (j, &dw) in phi_increments.iter().enumerate() {
        let (dx1, dv1) = drift(x, v);
        let (px, pv) = (x + dx1 * dt, v + dv1 * dt + sigma * x * dw);
        let (dx2, dv2) = drift(px, pv);
        x += 0.5 * (dx1 + dx2) * dt;
        v += 0.5 * (dv1 + dv2) * dt + 0.5 * sigma * (x - 0.5 * (dx1 + dx2) * dt + px) * dw;
        if (j + 1) % stride == 0 {
            out.push((x, v));
        }
    }
    out
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MathieuGrowth {
    /// `beta/2 + sigma/4`.
    pub predicted: f64,
    /// Fitted from the first-order amplitude model driven by the band
    /// components of `cos 2t`.
    pub model: f64,
    /// Fitted from the linearized oscillator
    /// `x'' = (-1 + sigma cos 2t) x + beta x'`.
    pub full: f64,
}

/// Growth rates under the deterministic forcing `phi = cos 2t`.
pub fn mathieu_growth(beta: f64, sigma: f64) -> Result<MathieuGrowth, SimError> {
    let dt = 0.01;
    let horizon = 400.0;
    let steps = (horizon / dt) as usize;
    let delta = 0.2;
    let incs = deterministic_increments(|t| (2.0 * t).cos(), dt, steps);
    let spec = Spectrum::new(&incs, dt);
    let noises = AmplitudeNoises {
        phi0: band_component(&spec, 0, delta)?.values,
        phi2: band_component(&spec, 2, delta)?.values,
        psi: Vec::new(),
    };
    let p = AmplitudeParams { beta, sigma, delta };
    let a = simulate_amplitude(AmplitudeModel::Order1, &p, &noises, dt, C::new(1e-20, 0.0))?;
    // skip the ends, where the finite-window spectrum rings
    let fit = |vals: &[f64]| -> f64 {
        let n = vals.len();
        let (lo, hi) = (n / 4, 3 * n / 4);
        let xs: Vec<f64> = (lo..hi).map(|j| j as f64 * dt).collect();
        slope(&xs, &vals[lo..hi])
    };
    let log_a: Vec<f64> = a.iter().map(|z| z.norm().ln()).collect();
    let model = fit(&log_a);

    // linearized oscillator by RK4; amplitude from x^2 + x'^2
    let f = |t: f64, x: f64, v: f64| (v, (-1.0 + sigma * (2.0 * t).cos()) * x + beta * v);
    let (mut x, mut v) = (1e-3, 0.0);
    let mut log_e = Vec::with_capacity(steps);
    for j in 0..steps {
        let t = j as f64 * dt;
        let (k1x, k1v) = f(t, x, v);
        let (k2x, k2v) = f(t + dt / 2.0, x + dt / 2.0 * k1x, v + dt / 2.0 * k1v);
        let (k3x, k3v) = f(t + dt / 2.0, x + dt / 2.0 * k2x, v + dt / 2.0 * k2v);
        let (k4x, k4v) = f(t + dt, x + dt * k3x, v + dt * k3v);
        x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        log_e.push(0.5 * (x * x + v * v).ln());
    }
    let full = fit(&log_e);
    Ok(MathieuGrowth {
        predicted: 0.5 * beta + 0.25 * sigma,
        model,
        full,
    })
}

/// Ensemble estimates of the quadratic-noise constants and band
/// normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct HopfNoiseStats {
    /// `(mean, standard error)` across replicates.
    pub c_r: (f64, f64),
    pub c_i: (f64, f64),
    pub psi_r_mean: (f64, f64),
    pub psi_i_mean: (f64, f64),
    /// Sample `E|phi_m|^2` for `m = 0, 2, -2`.
    pub band_power: [(f64, f64); 3],
    /// Sample correlation between `phi_0` and the real part of `phi_2`.
    pub band_cross: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopfNoiseConfig {
    pub delta: f64,
    pub dt: f64,
    pub horizon: f64,
    pub omega_max: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for HopfNoiseConfig {
    fn default() -> Self {
        Self {
            delta: 0.2,
            dt: 0.05,
            horizon: 2000.0,
            omega_max: 30.0,
            replicates: 40,
            seed: 1,
        }
    }
}

/// Runs the band and quadratic noise constructions on independent paths.
pub fn hopf_noise_stats(cfg: &HopfNoiseConfig) -> Result<HopfNoiseStats, SimError> {
    use rayon::prelude::*;
    if cfg.replicates < 2 {
        return Err(SimError::Config("at least two replicates are needed".into()));
    }
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    // sample psi at incommensurate times: a plain time average over the
    // periodic window keeps only the zero-frequency coefficient
    let spacing = (std::f64::consts::SQRT_2 * 5.0 / cfg.delta / cfg.dt).round().max(1.0) as usize;
    let rows: Vec<[f64; 8]> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let path = NoisePath::generate(1, cfg.dt, steps, cfg.seed, r)?;
            let spec = Spectrum::new(&hopf_increments(&path, 0), cfg.dt);
            let q = quad_resonant_noise(&spec, cfg.delta, cfg.omega_max)?;
            let mean = |v: &[f64]| {
                let picks: Vec<f64> = v.iter().step_by(spacing).copied().collect();
                picks.iter().sum::<f64>() / picks.len() as f64
            };
            let power = |m: i32| -> Result<f64, SimError> {
                let b = band_component(&spec, m, cfg.delta)?;
                Ok(b.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / b.values.len() as f64)
            };
            let b0 = band_component(&spec, 0, cfg.delta)?;
            let b2 = band_component(&spec, 2, cfg.delta)?;
            let cross = b0.values.iter().zip(&b2.values).map(|(a, b)| a.re * b.re).sum::<f64>()
                / b0.values.len() as f64;
            Ok([
                q.c_r,
                q.c_i,
                mean(&q.psi_r),
                mean(&q.psi_i),
                power(0)?,
                power(2)?,
                power(-2)?,
                cross,
            ])
        })
        .collect::<Result<_, SimError>>()?;
    let col = |i: usize| {
        let xs: Vec<f64> = rows.iter().map(|r| r[i]).collect();
        let (m, _, se, _) = moments(&xs);
        (m, se)
    };
    Ok(HopfNoiseStats {
        c_r: col(0),
        c_i: col(1),
        psi_r_mean: col(2),
        psi_i_mean: col(3),
        band_power: [col(4), col(5), col(6)],
        band_cross: col(7),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_limit() {
        for om in [0.5, 1.3, 3.7] {
            let lim = 1.0 / ((om + 2.0) * (om - 2.0));
            for s in [1.0, -1.0] {
                assert!((kernel_rotated(s, om, 1e-7) - lim).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn cos_forcing_bands() {
        let dt = 0.01;
        let steps = 100_000;
        let spec = Spectrum::new(&deterministic_increments(|t| (2.0 * t).cos(), dt, steps), dt);
        let delta = 0.2;
        let b0 = band_component(&spec, 0, delta).unwrap();
        let b2 = band_component(&spec, 2, delta).unwrap();
        let mid = steps / 2;
        assert!(b0.values[mid].norm() < 1e-3);
        assert!(((2.0 * delta).sqrt() * b2.values[mid] - C::new(0.5, 0.0)).norm() < 1e-2);
    }

    #[test]
    fn overlapping_bands_rejected() {
        let spec = Spectrum::new(&[0.0; 16], 0.1);
        assert!(matches!(band_component(&spec, 0, 1.0), Err(SimError::Config(_))));
    }

    #[test]
    fn quadrature_constants() {
        let (cr, ci) = quad_constants(0.2, 40.0, 2e-3).unwrap();
        assert!((cr - 0.894).abs() < 0.01, "{cr}");
        assert!((ci - 0.203).abs() < 0.01, "{ci}");
    }

    #[test]
    fn quadratic_noise_mean() {
        let exact = 0.5 * ((4.2_f64 / 3.8).ln() + (2.2_f64 / 1.8).ln());
        assert!((quad_mean(0.2, f64::INFINITY) - exact).abs() < 1e-12);
        // midpoint sum of the kernel on the diagonal
        let (step, mut sum) = (1e-4, 0.0);
        let mut w = -30.0 + step / 2.0;
        while w < 30.0 {
            if in_domain(w, 0.2) {
                sum += kernel(1.0, w, -w) * step;
            }
            w += step;
        }
        assert!((sum - quad_mean(0.2, 30.0)).abs() < 1e-3, "{sum}");
    }

    #[test]
    fn landau_fixed_point() {
        let path = NoisePath::generate(2, 0.01, 20_000, 1, 0).unwrap();
        let a = simulate_landau_sde(0.1, 0.0, 0.87, 0.2, &path, C::new(0.05, 0.0)).unwrap();
        assert!((a.last().unwrap().norm_sqr() - 0.1).abs() < 1e-3);
        let a = simulate_landau_sde(-0.1, 0.0, 0.87, 0.2, &path, C::new(0.05, 0.0)).unwrap();
        let rate = (a[20_000].norm() / a[10_000].norm()).ln() / 100.0;
        assert!((rate + 0.05).abs() < 2e-3, "{rate}");
    }

    #[test]
    fn deterministic_limit_cycle() {
        let dt = 0.01;
        let out = simulate_dvdp(-1.0, 0.1, 0.0, &vec![0.0; 100_000], dt, (0.1, 0.0), 1);
        let late = &out[80_000..];
        let amp = late.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
        let landau = 2.0 * 0.1_f64.sqrt();
        assert!((amp - landau).abs() / landau < 0.05, "{amp}");
    }

    #[test]
    fn mathieu_rates() {
        let g = mathieu_growth(0.05, 0.3).unwrap();
        assert!((g.model - 0.1).abs() < 0.01, "{g:?}");
        assert!((g.full - 0.1).abs() < 0.01, "{g:?}");
        let g0 = mathieu_growth(0.05, 0.0).unwrap();
        assert!((g0.model - 0.025).abs() < 1e-3, "{g0:?}");
    }
}
