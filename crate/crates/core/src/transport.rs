//! Axial ion-crystal geometry and shuttling.
//!
//! Equilibrium positions solve the dimensionless force balance
//! `u_i − Σ_{j<i} 1/(u_i−u_j)² + Σ_{j>i} 1/(u_i−u_j)² = 0`
//! scaled by `ℓ = (q²/(4πε₀ m ω²))^{1/3}`. Transport ramps map electrode
//! voltage to a potential-minimum displacement through a single coefficient
//! κ and a first-order low-pass filter.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_818_8e-12;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_068_92e-27;
/// ⁴⁰Ca⁺ ion mass, kg.
pub const CA40_ION_MASS: f64 = 39.962_590_86 * ATOMIC_MASS_UNIT - 9.109_383_7e-31;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("equilibrium search did not converge for N={n} after {iterations} iterations")]
    NoConvergence { n: usize, iterations: usize },
    #[error("invalid input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapConfig {
    /// Axial secular angular frequency, rad/s.
    pub omega_ax: f64,
    /// Radial secular angular frequency, rad/s.
    pub omega_rad: f64,
    pub ion_mass: f64,
    pub ion_charge: f64,
}

impl TrapConfig {
    /// ⁴⁰Ca⁺ trap from secular frequencies given in Hz.
    pub fn calcium(axial_hz: f64, radial_hz: f64) -> Self {
        TrapConfig {
            omega_ax: 2.0 * PI * axial_hz,
            omega_rad: 2.0 * PI * radial_hz,
            ion_mass: CA40_ION_MASS,
            ion_charge: ELEMENTARY_CHARGE,
        }
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        let all_positive = [self.omega_ax, self.omega_rad, self.ion_mass, self.ion_charge]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive {
            return Err(TransportError::Input("trap parameters must be positive".into()));
        }
        Ok(())
    }

    /// A linear chain needs ω_ax < ω_rad; callers may warn on `false`.
    pub fn is_linear(&self) -> bool {
        self.omega_ax < self.omega_rad
    }

    /// Length scale ℓ of the crystal, m.
    pub fn length_scale(&self) -> f64 {
        let q2 = self.ion_charge * self.ion_charge / (4.0 * PI * VACUUM_PERMITTIVITY);
        (q2 / (self.ion_mass * self.omega_ax * self.omega_ax)).cbrt()
    }
}

const MAX_NEWTON_ITERATIONS: usize = 200;

/// Dimensionless force-balance residual of `u`.
pub fn equilibrium_gradient(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|i| {
            let mut g = u[i];
            for j in 0..n {
                if j != i {
                    let d = u[i] - u[j];
                    g -= d.signum() / (d * d);
                }
            }
            g
        })
        .collect()
}

fn equilibrium_hessian(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = 1.0;
        for j in 0..n {
            if j != i {
                let d = (u[i] - u[j]).abs();
                let k = 2.0 / (d * d * d);
                h[(i, i)] += k;
                h[(i, j)] -= k;
            }
        }
    }
    h
}

/// Dimensionless equilibrium positions, ascending and centered.
pub fn dimensionless_equilibrium(n: usize) -> Result<Vec<f64>, TransportError> {
    if n == 0 {
        return Err(TransportError::Input("ion count must be >= 1".into()));
    }
    // Start from a uniform chain with roughly the right extent.
    let span = 2.0 * (n as f64).powf(0.56);
    let mut u: Vec<f64> = (0..n)
        .map(|i| if n == 1 { 0.0 } else { -0.5 * span + span * i as f64 / (n - 1) as f64 })
        .collect();
    let energy = |u: &[f64]| {
        let mut e = 0.5 * u.iter().map(|x| x * x).sum::<f64>();
        for i in 0..u.len() {
            for j in i + 1..u.len() {
                e += 1.0 / (u[j] - u[i]).abs();
            }
        }
        e
    };
    for _ in 0..MAX_NEWTON_ITERATIONS {
        let g = DVector::from_vec(equilibrium_gradient(&u));
        if g.norm() < 1e-13 {
            return Ok(symmetrize(u));
        }
        let step = equilibrium_hessian(&u)
            .lu()
            .solve(&g)
            .ok_or(TransportError::NoConvergence { n, iterations: 0 })?;
        let e0 = energy(&u);
        let mut scale = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x - scale * s).collect();
            let ordered = trial.windows(2).all(|w| w[0] < w[1]);
            if ordered && energy(&trial) <= e0 + 1e-15 * e0.abs() {
                u = trial;
                break;
            }
            scale *= 0.5;
            if scale < 1e-12 {
                return Err(TransportError::NoConvergence { n, iterations: MAX_NEWTON_ITERATIONS });
            }
        }
    }
    let g = DVector::from_vec(equilibrium_gradient(&u));
    if g.norm() < 1e-10 {
        Ok(symmetrize(u))
    } else {
        Err(TransportError::NoConvergence { n, iterations: MAX_NEWTON_ITERATIONS })
    }
}

fn symmetrize(mut u: Vec<f64>) -> Vec<f64> {
    let n = u.len();
    for i in 0..n / 2 {
        let a = 0.5 * (u[n - 1 - i] - u[i]);
        u[i] = -a;
        u[n - 1 - i] = a;
    }
    if n % 2 == 1 {
        u[n / 2] = 0.0;
    }
    u
}

/// Axial equilibrium positions of `n` ions, m, ascending and centered on 0.
pub fn equilibrium_positions(n: usize, trap: &TrapConfig) -> Result<Vec<f64>, TransportError> {
    trap.validate()?;
    let l = trap.length_scale();
    Ok(dimensionless_equilibrium(n)?.into_iter().map(|u| u * l).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RampShape {
    Linear,
    /// 3s² − 2s³.
    SmoothStep,
}

impl std::str::FromStr for RampShape {
    type Err = TransportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(RampShape::Linear),
            "smoothstep" | "smooth" => Ok(RampShape::SmoothStep),
            _ => Err(TransportError::Input(format!("unknown ramp shape `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportRamp {
    pub delta_v: f64,
    /// Displacement per volt, m/V.
    pub kappa: f64,
    pub duration: f64,
    pub shape: RampShape,
    /// Filter cutoff, Hz. `f64::INFINITY` bypasses the filter.
    pub filter_cutoff: f64,
}

/// Default κ: 14 μm for 280 mV.
pub const DEFAULT_KAPPA: f64 = 14e-6 / 0.280;

impl TransportRamp {
    pub fn validate(&self) -> Result<(), TransportError> {
        if !(self.duration > 0.0) {
            return Err(TransportError::Input("ramp duration must be > 0".into()));
        }
        if !(self.filter_cutoff > 0.0) {
            return Err(TransportError::Input("filter cutoff must be > 0".into()));
        }
        Ok(())
    }

    pub fn final_displacement(&self) -> f64 {
        self.kappa * self.delta_v
    }

    /// Filter time constant 1/(2π f_c), s.
    pub fn filter_tau(&self) -> f64 {
        1.0 / (2.0 * PI * self.filter_cutoff)
    }

    fn voltage(&self, t: f64) -> f64 {
        let s = (t / self.duration).clamp(0.0, 1.0);
        let f = match self.shape {
            RampShape::Linear => s,
            RampShape::SmoothStep => s * s * (3.0 - 2.0 * s),
        };
        self.delta_v * f
    }
}

/// Sampled command and filtered potential-minimum positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x_cmd: Vec<f64>,
    pub x_min: Vec<f64>,
    /// Time constant of the filter that produced `x_min`, s.
    pub filter_tau: f64,
}

impl Trajectory {
    /// Builds a trajectory from raw samples where the potential minimum
    /// follows the command directly. Repeated time stamps encode jumps.
    pub fn unfiltered(t: Vec<f64>, x: Vec<f64>) -> Result<Self, TransportError> {
        if t.len() != x.len() || t.len() < 2 {
            return Err(TransportError::Input("need matching t/x with >= 2 samples".into()));
        }
        if t.windows(2).any(|w| w[1] < w[0]) {
            return Err(TransportError::Input("time stamps must be non-decreasing".into()));
        }
        Ok(Trajectory { t, x_cmd: x.clone(), x_min: x, filter_tau: 0.0 })
    }

    pub fn final_displacement(&self) -> f64 {
        self.x_min.last().copied().unwrap_or(0.0)
    }

    pub fn shifted(&self, dt: f64) -> Self {
        Trajectory { t: self.t.iter().map(|t| t + dt).collect(), ..self.clone() }
    }

    /// CSV with header `t_s,x_cmd_m,x_min_m`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,x_cmd_m,x_min_m\n");
        for i in 0..self.t.len() {
            writeln!(out, "{},{},{}", self.t[i], self.x_cmd[i], self.x_min[i]).expect("string write");
        }
        out
    }
}

/// Samples the ramp every `dt` and passes it through a first-order
/// low-pass. Sampling continues for ten filter time constants after the
/// ramp ends so the minimum settles.
pub fn minimum_trajectory(ramp: &TransportRamp, dt: f64) -> Result<Trajectory, TransportError> {
    ramp.validate()?;
    if !(dt > 0.0) || dt > ramp.duration / 100.0 * (1.0 + 1e-12) {
        return Err(TransportError::Input("dt must be in (0, duration/100]".into()));
    }
    let tau = ramp.filter_tau();
    let end = ramp.duration + 10.0 * tau;
    let steps = (end / dt).ceil() as usize;
    let mut t = Vec::with_capacity(steps + 2);
    let mut x_cmd = Vec::with_capacity(steps + 2);
    let mut x_min = Vec::with_capacity(steps + 2);
    let mut y = 0.0;
    let mut prev = (0.0, 0.0);
    for i in 0..=steps {
        let ti = (i as f64 * dt).min(end);
        if i > 0 && ti <= prev.0 {
            break;
        }
        let xi = ramp.kappa * ramp.voltage(ti);
        if i > 0 {
            // Exact response to a command that is linear between samples.
            let h = ti - prev.0;
            let slope = (xi - prev.1) / h;
            let a = (-h / tau).exp();
            y = xi + (y - prev.1) * a - slope * tau * (1.0 - a);
        }
        t.push(ti);
        x_cmd.push(xi);
        x_min.push(y);
        prev = (ti, xi);
    }
    Ok(Trajectory { t, x_cmd, x_min, filter_tau: tau })
}

/// Residual motional quanta after the ion, starting at rest, follows the
/// potential minimum `x_min(t)` in a harmonic well of `trap.omega_ax`.
/// Integrated with fixed-step RK4, with the minimum linear between samples.
pub fn residual_excitation(traj: &Trajectory, trap: &TrapConfig) -> Result<f64, TransportError> {
    trap.validate()?;
    let n = traj.t.len();
    if n < 2 || traj.x_min.len() != n || traj.x_cmd.len() != n {
        return Err(TransportError::Input("trajectory needs >= 2 consistent samples".into()));
    }
    let settle = 5.0 * traj.filter_tau;
    let t_end = traj.t[n - 1];
    let x_end = traj.x_cmd[n - 1];
    let last_change = (0..n).rev().find(|&i| traj.x_cmd[i] != x_end).map(|i| traj.t[i + 1]);
    if let Some(tc) = last_change {
        if t_end - tc < settle * (1.0 - 1e-9) {
            return Err(TransportError::Input(
                "trajectory must end at rest for at least 5 filter time constants".into(),
            ));
        }
    }

    let w = trap.omega_ax;
    let w2 = w * w;
    let h_max = 2.0 * PI / w / 128.0;
    let (mut x, mut v) = (traj.x_min[0], 0.0);
    for i in 0..n - 1 {
        let (t0, t1) = (traj.t[i], traj.t[i + 1]);
        let span = t1 - t0;
        if span <= 0.0 {
            continue;
        }
        let (a0, a1) = (traj.x_min[i], traj.x_min[i + 1]);
        let target = |s: f64| a0 + (a1 - a0) * (s / span);
        let steps = (span / h_max).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let acc = |s: f64, x: f64| -w2 * (x - target(s));
        for k in 0..steps {
            let s = k as f64 * h;
            let (k1x, k1v) = (v, acc(s, x));
            let (k2x, k2v) = (v + 0.5 * h * k1v, acc(s + 0.5 * h, x + 0.5 * h * k1x));
            let (k3x, k3v) = (v + 0.5 * h * k2v, acc(s + 0.5 * h, x + 0.5 * h * k2x));
            let (k4x, k4v) = (v + h * k3v, acc(s + h, x + h * k3x));
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
    }
    let center = traj.x_min[n - 1];
    let energy = 0.5 * trap.ion_mass * (v * v + w2 * (x - center) * (x - center));
    Ok(energy / (HBAR * w))
}
