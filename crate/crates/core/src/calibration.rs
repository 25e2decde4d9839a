//! Thermo-optic calibration: the quadratic voltage-to-phase law, synthetic
//! fringe generation, and least-squares recovery of heater parameters.
//!
//! Phase grows linearly with dissipated electrical power, hence
//! quadratically with voltage: `theta(v) = theta_offset + pi (v / v_pi)^2`.
//! Injecting light into one cell input and sweeping the internal heater
//! produces complementary fringes `A sin^2(theta/2) + B` on the top output
//! and `A cos^2(theta/2) + B` on the bottom.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Quadratic voltage-to-phase law of one heater, plus the fringe contrast
/// and background of its calibration curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeaterModel {
    /// Voltage producing a pi phase shift.
    pub v_pi: f64,
    /// Phase at zero volts, radians.
    pub theta_offset: f64,
    /// Fringe contrast A in (0, 1].
    pub contrast: f64,
    /// Fringe background B >= 0; A + B <= 1.
    pub background: f64,
    #[serde(default)]
    pub heater_id: usize,
}

impl HeaterModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_pi > 0.0) || !self.v_pi.is_finite() {
            return Err(Error::Domain("v_pi must be positive".into()));
        }
        if !self.theta_offset.is_finite() {
            return Err(Error::Domain("theta_offset must be finite".into()));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::Domain("contrast must lie in (0, 1]".into()));
        }
        if !(self.background >= 0.0) {
            return Err(Error::Domain("background must be >= 0".into()));
        }
        if self.contrast + self.background > 1.0 + 1e-9 {
            return Err(Error::Domain(
                "contrast + background must not exceed 1".into(),
            ));
        }
        Ok(())
    }
}

/// `theta(v) = theta_offset + pi (v / v_pi)^2`.
pub fn phase_from_voltage(v: f64, model: &HeaterModel) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::Domain(format!("voltage must be >= 0, got {v}")));
    }
    model.validate()?;
    Ok(model.theta_offset + PI * (v / model.v_pi) * (v / model.v_pi))
}

/// Default programming ceiling: covers more than a 2 pi tuning range.
pub fn default_voltage_limit(model: &HeaterModel) -> f64 {
    2.0 * std::f64::consts::SQRT_2 * model.v_pi
}

/// Smallest voltage whose phase is congruent to `target` mod 2 pi.
pub fn voltage_for_phase(target: f64, model: &HeaterModel) -> Result<f64> {
    voltage_for_phase_limited(target, model, default_voltage_limit(model))
}

/// As [`voltage_for_phase`] with an explicit voltage ceiling.
pub fn voltage_for_phase_limited(target: f64, model: &HeaterModel, v_limit: f64) -> Result<f64> {
    if !target.is_finite() {
        return Err(Error::Domain("target phase must be finite".into()));
    }
    model.validate()?;
    let delta = (target - model.theta_offset).rem_euclid(TAU);
    let v = model.v_pi * (delta / PI).sqrt();
    if v > v_limit {
        return Err(Error::Range(format!(
            "phase {target} needs {v:.3} V, above the {v_limit:.3} V limit"
        )));
    }
    Ok(v)
}

/// One heater sweep: strictly increasing voltages with normalized
/// transmissions on the monitored outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationCurve {
    pub voltages: Vec<f64>,
    pub transmission_top: Vec<f64>,
    pub transmission_bottom: Option<Vec<f64>>,
}

/// Noise guard band for normalized transmissions.
const TRANSMISSION_BAND: (f64, f64) = (-0.05, 1.05);

impl CalibrationCurve {
    pub fn new(
        voltages: Vec<f64>,
        transmission_top: Vec<f64>,
        transmission_bottom: Option<Vec<f64>>,
    ) -> Result<Self> {
        let curve = Self {
            voltages,
            transmission_top,
            transmission_bottom,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn len(&self) -> usize {
        self.voltages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltages.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.voltages.len() < 8 {
            return Err(Error::Config(format!(
                "calibration needs at least 8 samples, got {}",
                self.voltages.len()
            )));
        }
        if self.transmission_top.len() != self.voltages.len() {
            return Err(Error::Config("top transmission length mismatch".into()));
        }
        if let Some(bottom) = &self.transmission_bottom {
            if bottom.len() != self.voltages.len() {
                return Err(Error::Config("bottom transmission length mismatch".into()));
            }
        }
        for w in self.voltages.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Config(
                    "voltages must be strictly increasing".into(),
                ));
            }
        }
        if self.voltages[0] < 0.0 || !self.voltages.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("voltages must be finite and >= 0".into()));
        }
        let all = self
            .transmission_top
            .iter()
            .chain(self.transmission_bottom.iter().flatten());
        for &t in all {
            if !t.is_finite() || t < TRANSMISSION_BAND.0 || t > TRANSMISSION_BAND.1 {
                return Err(Error::Config(format!(
                    "transmission {t} outside the [{}, {}] guard band",
                    TRANSMISSION_BAND.0, TRANSMISSION_BAND.1
                )));
            }
        }
        Ok(())
    }

    /// CSV with header `voltage,top,bottom` (or `voltage,top` without a
    /// monitored bottom output).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match &self.transmission_bottom {
            Some(bottom) => {
                out.push_str("voltage,top,bottom\n");
                for i in 0..self.len() {
                    out.push_str(&format!(
                        "{},{},{}\n",
                        self.voltages[i], self.transmission_top[i], bottom[i]
                    ));
                }
            }
            None => {
                out.push_str("voltage,top\n");
                for i in 0..self.len() {
                    out.push_str(&format!(
                        "{},{}\n",
                        self.voltages[i], self.transmission_top[i]
                    ));
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty calibration file".into()))?
            .trim();
        let has_bottom = match header {
            "voltage,top,bottom" => true,
            "voltage,top" => false,
            other => {
                return Err(Error::Parse(format!(
                    "unexpected calibration header {other:?}"
                )))
            }
        };
        let mut voltages = Vec::new();
        let mut top = Vec::new();
        let mut bottom = Vec::new();
        for (idx, line) in lines.enumerate() {
            let fields: Vec<&str> = line.trim().split(',').collect();
            let expect = if has_bottom { 3 } else { 2 };
            if fields.len() != expect {
                return Err(Error::Parse(format!(
                    "line {}: expected {expect} fields, got {}",
                    idx + 2,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", idx + 2)))
            };
            voltages.push(parse(fields[0])?);
            top.push(parse(fields[1])?);
            if has_bottom {
                bottom.push(parse(fields[2])?);
            }
        }
        Self::new(voltages, top, if has_bottom { Some(bottom) } else { None })
    }
}

/// Synthesize a noisy calibration sweep from a heater model.
///
/// Voltages are `n_samples` points spread evenly over [0, v_max]; both
/// outputs carry independent Gaussian noise of width `noise_sigma`,
/// clamped to the curve guard band. Deterministic per seed.
pub fn synthesize_fringe(
    model: &HeaterModel,
    v_max: f64,
    n_samples: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<CalibrationCurve> {
    model.validate()?;
    if n_samples < 8 {
        return Err(Error::Config(format!(
            "fringe needs at least 8 samples, got {n_samples}"
        )));
    }
    if !(v_max > 0.0) {
        return Err(Error::Domain("v_max must be positive".into()));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::Domain("noise sigma must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut voltages = Vec::with_capacity(n_samples);
    let mut top = Vec::with_capacity(n_samples);
    let mut bottom = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let v = v_max * i as f64 / (n_samples - 1) as f64;
        let theta = phase_from_voltage(v, model)?;
        let half = theta / 2.0;
        let t_top = model.contrast * half.sin().powi(2) + model.background;
        let t_bottom = model.contrast * half.cos().powi(2) + model.background;
        let (mut t_top, mut t_bottom) = (t_top, t_bottom);
        if noise_sigma > 0.0 {
            let n1: f64 = rng.sample(StandardNormal);
            let n2: f64 = rng.sample(StandardNormal);
            t_top = (t_top + noise_sigma * n1).clamp(TRANSMISSION_BAND.0, TRANSMISSION_BAND.1);
            t_bottom =
                (t_bottom + noise_sigma * n2).clamp(TRANSMISSION_BAND.0, TRANSMISSION_BAND.1);
        }
        voltages.push(v);
        top.push(t_top);
        bottom.push(t_bottom);
    }
    CalibrationCurve::new(voltages, top, Some(bottom))
}

/// Fitted heater parameters with fit quality diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub model: HeaterModel,
    pub rms_residual: f64,
    /// Per-parameter variance, ordered (v_pi, theta_offset, contrast, background).
    pub covariance_diag: [f64; 4],
}

/// Fringe extinction in dB: `10 log10((A + B) / B)`, `+inf` for B ~ 0.
pub fn extinction_ratio(fit: &FitResult) -> f64 {
    let a = fit.model.contrast;
    let b = fit.model.background;
    if b <= 1e-12 {
        f64::INFINITY
    } else {
        10.0 * ((a + b) / b).log10()
    }
}

struct FitProblem<'a> {
    u: Vec<f64>, // v^2
    y: &'a [f64],
}

impl FitProblem<'_> {
    /// Residuals and Jacobian for parameters (v_pi, offset, A, B).
    fn residuals(&self, p: &[f64; 4]) -> (DVector<f64>, DMatrix<f64>) {
        let (v_pi, offset, a, b) = (p[0], p[1], p[2], p[3]);
        let omega = PI / (v_pi * v_pi);
        let n = self.u.len();
        let mut r = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, 4);
        for i in 0..n {
            let psi = offset + omega * self.u[i];
            let half = psi / 2.0;
            let model = a * half.sin().powi(2) + b;
            r[i] = model - self.y[i];
            let dpsi = 0.5 * a * psi.sin();
            jac[(i, 0)] = dpsi * (-2.0 * PI * self.u[i] / (v_pi * v_pi * v_pi));
            jac[(i, 1)] = dpsi;
            jac[(i, 2)] = half.sin().powi(2);
            jac[(i, 3)] = 1.0;
        }
        (r, jac)
    }

    fn ssr(&self, p: &[f64; 4]) -> f64 {
        let (r, _) = self.residuals(p);
        r.norm_squared()
    }

    /// Best (offset, A, B) and SSR for a fixed fringe frequency in u,
    /// solved as a linear least-squares problem on
    /// `y = c0 + cc cos(omega u) + cs sin(omega u)`.
    fn projected_ssr(&self, omega: f64) -> Option<(f64, [f64; 3])> {
        let n = self.u.len();
        let mut design = DMatrix::zeros(n, 3);
        let mut rhs = DVector::zeros(n);
        for i in 0..n {
            design[(i, 0)] = 1.0;
            design[(i, 1)] = (omega * self.u[i]).cos();
            design[(i, 2)] = (omega * self.u[i]).sin();
            rhs[i] = self.y[i];
        }
        let normal = design.transpose() * &design;
        let beta = normal.lu().solve(&(design.transpose() * &rhs))?;
        let fitted = design * &beta;
        let ssr = (fitted - rhs).norm_squared();
        Some((ssr, [beta[0], beta[1], beta[2]]))
    }
}

/// Coefficients of the linear basis back to fringe parameters.
fn basis_to_params(omega: f64, beta: [f64; 3]) -> [f64; 4] {
    let [c0, cc, cs] = beta;
    // y = c0 + cc cos(psi0) where psi = offset + omega u and
    // cc = -(A/2) cos(offset), cs = (A/2) sin(offset), c0 = B + A/2
    let a = 2.0 * (cc * cc + cs * cs).sqrt();
    let offset = cs.atan2(-cc);
    let b = c0 - a / 2.0;
    let v_pi = (PI / omega).sqrt();
    [v_pi, offset, a, b]
}

/// Least-squares fringe fit: a coarse frequency scan with linearly
/// projected amplitude parameters, a 2%-step v_pi grid around the best
/// candidate, then damped Gauss-Newton down to gradient norm 1e-10
/// (at most 200 iterations).
pub fn fit_fringe(curve: &CalibrationCurve) -> Result<FitResult> {
    curve.validate()?;
    let n = curve.len();
    if n <= 4 {
        return Err(Error::Underdetermined {
            samples: n,
            params: 4,
        });
    }
    let y = &curve.transmission_top;
    let spread = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - y.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread < 1e-4 {
        return Err(Error::DegenerateData(
            "transmission is constant; fringe contrast unresolvable".into(),
        ));
    }

    let problem = FitProblem {
        u: curve.voltages.iter().map(|v| v * v).collect(),
        y,
    };
    let u_max = *problem.u.last().unwrap();
    let max_gap = problem
        .u
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);

    // stage 1: coarse scan over fringe frequency in u = v^2
    let omega_lo = 0.8 / u_max;
    let omega_hi = 0.95 * PI / max_gap;
    let coarse_steps = 600;
    let mut best: Option<(f64, f64, [f64; 3])> = None;
    for step in 0..=coarse_steps {
        let omega = omega_lo * (omega_hi / omega_lo).powf(step as f64 / coarse_steps as f64);
        if let Some((ssr, beta)) = problem.projected_ssr(omega) {
            if best.map_or(true, |(b_ssr, _, _)| ssr < b_ssr) {
                best = Some((ssr, omega, beta));
            }
        }
    }
    let (_, omega_best, _) =
        best.ok_or_else(|| Error::Numerical("frequency scan found no solvable point".into()))?;

    // stage 2: 2% v_pi grid around the sweep-derived guess
    let v_pi_guess = (PI / omega_best).sqrt();
    let mut best2: Option<(f64, f64, [f64; 3])> = None;
    let mut scale = 0.80;
    while scale <= 1.20 {
        let v_pi = v_pi_guess * scale;
        let omega = PI / (v_pi * v_pi);
        if omega <= omega_hi * 1.05 {
            if let Some((ssr, beta)) = problem.projected_ssr(omega) {
                if best2.map_or(true, |(b_ssr, _, _)| ssr < b_ssr) {
                    best2 = Some((ssr, omega, beta));
                }
            }
        }
        scale += 0.02;
    }
    let (_, omega0, beta0) = best2
        .ok_or_else(|| Error::Numerical("v_pi grid refinement found no solvable point".into()))?;
    let mut params = basis_to_params(omega0, beta0);
    params[2] = params[2].clamp(1e-6, 1.5);

    // stage 3: damped Gauss-Newton
    let mut lambda = 1e-3;
    let mut ssr = problem.ssr(&params);
    let mut converged = false;
    for _ in 0..200 {
        let (r, jac) = problem.residuals(&params);
        let grad = jac.transpose() * &r;
        if grad.amax() < 1e-10 {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for i in 0..4 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [
                params[0] + step[0],
                params[1] + step[1],
                params[2] + step[2],
                params[3] + step[3],
            ];
            if trial[0] <= 0.0 {
                lambda *= 10.0;
                continue;
            }
            let trial_ssr = problem.ssr(&trial);
            if trial_ssr < ssr {
                params = trial;
                ssr = trial_ssr;
                lambda = (lambda * 0.3).max(1e-14);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // cannot improve further; treat as converged if the gradient is small
            let (r, jac) = problem.residuals(&params);
            converged = (jac.transpose() * &r).amax() < 1e-6;
            break;
        }
    }

    // project onto the valid parameter box and wrap the offset
    let model = HeaterModel {
        v_pi: params[0],
        theta_offset: params[1].rem_euclid(TAU),
        contrast: params[2].clamp(1e-9, 1.0),
        background: params[3].clamp(0.0, 1.0),
        heater_id: 0,
    };
    let final_params = [
        model.v_pi,
        model.theta_offset,
        model.contrast,
        model.background,
    ];
    let (r, jac) = problem.residuals(&final_params);
    let rms = (r.norm_squared() / n as f64).sqrt();
    let dof = (n - 4).max(1) as f64;
    let sigma2 = r.norm_squared() / dof;
    let jtj = jac.transpose() * &jac;
    let covariance_diag = match jtj.try_inverse() {
        Some(inv) => [
            sigma2 * inv[(0, 0)],
            sigma2 * inv[(1, 1)],
            sigma2 * inv[(2, 2)],
            sigma2 * inv[(3, 3)],
        ],
        None => [f64::INFINITY; 4],
    };
    let result = FitResult {
        model,
        rms_residual: rms,
        covariance_diag,
    };
    if !converged {
        return Err(Error::FitNotConverged {
            rms,
            best: Box::new(result),
        });
    }
    result.model.validate().map_err(|_| Error::DegenerateData(
        "fit landed outside the physical parameter range".into(),
    ))?;
    Ok(result)
}
