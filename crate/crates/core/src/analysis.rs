//! Line-scan post-processing: composite model curves, single-Gaussian
//! fits, background annotation and resonance separation.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::ZeemanState;
use crate::rydberg::{Component, LineShape};
use crate::scan::{Correction, ScanResult};

pub const MAX_ITERATIONS: usize = 200;
pub const TOLERANCE: f64 = 1e-8;
/// Extra iterations after convergence. Near a noisy optimum Gauss–Newton
/// contracts only linearly, so a few more steps tighten the result well
/// below the stopping threshold.
const POLISH_STEPS: usize = 3;
/// Smallest standard error used as a weight; binomial errors vanish at
/// p = 0 and p = 1.
pub const ERROR_FLOOR: f64 = 1e-3;
pub const BACKGROUND_KIND: &str = "background";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite value at point {0}")]
    NonFinite(usize),
    #[error("degenerate data: {0}")]
    Degenerate(&'static str),
    #[error("ion {ion} not in scan with {n_ions} ions")]
    UnknownIon { ion: usize, n_ions: usize },
    #[error("background {0} outside [0, 1]")]
    Background(f64),
    #[error("fit did not converge")]
    Unconverged,
}

/// Sum of the Gaussians of `components` that a shelving readout can see,
/// each peaking at its weight.
pub fn model_profile(grid: &[f64], components: &[Component], sigma: f64) -> Vec<f64> {
    let visible: Vec<&Component> = components.iter().filter(|c| c.is_detectable() && c.weight > 0.0).collect();
    grid.iter()
        .map(|&d| {
            visible
                .iter()
                .map(|c| c.weight * (-(d - c.center).powi(2) / (2.0 * sigma * sigma)).exp())
                .sum()
        })
        .collect()
}

/// Detectable components of `shape` reachable from `from`.
pub fn detectable_components(shape: &LineShape, from: ZeemanState) -> Vec<Component> {
    shape
        .channels_from(from)
        .filter(|c| c.is_detectable() && c.weight > 0.0)
        .copied()
        .collect()
}

/// Weight-averaged center of the detectable components.
pub fn profile_centroid(components: &[Component]) -> Option<f64> {
    let (sw, swc) = components
        .iter()
        .filter(|c| c.is_detectable())
        .fold((0.0, 0.0), |(sw, swc), c| (sw + c.weight, swc + c.weight * c.center));
    (sw > 0.0).then(|| swc / sw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub amplitude: f64,
    pub center_hz: f64,
    pub sigma_hz: f64,
    pub offset: f64,
    pub converged: bool,
    pub iterations: usize,
    pub chi2: f64,
    /// Parameter covariance in the order amplitude, center, sigma, offset.
    #[serde(skip)]
    pub covariance: Option<[[f64; 4]; 4]>,
    #[serde(default)]
    pub corrections: Vec<Correction>,
}

impl FitResult {
    pub fn params(&self) -> [f64; 4] {
        [self.amplitude, self.center_hz, self.sigma_hz, self.offset]
    }

    /// Standard errors from the covariance diagonal.
    pub fn std_errors(&self) -> Option<[f64; 4]> {
        self.covariance.map(|c| [c[0][0].sqrt(), c[1][1].sqrt(), c[2][2].sqrt(), c[3][3].sqrt()])
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        gaussian(&Vector4::from(self.params()), x)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }
}

fn gaussian(p: &Vector4<f64>, x: f64) -> f64 {
    let z = (x - p[1]) / p[2];
    p[0] * (-0.5 * z * z).exp() + p[3]
}

fn gradient(p: &Vector4<f64>, x: f64) -> Vector4<f64> {
    let z = (x - p[1]) / p[2];
    let e = (-0.5 * z * z).exp();
    Vector4::new(e, p[0] * e * z / p[2], p[0] * e * z * z / p[2], 1.0)
}

fn chi2(points: &[(f64, f64, f64)], p: &Vector4<f64>) -> f64 {
    points.iter().map(|&(x, y, e)| ((y - gaussian(p, x)) / e).powi(2)).sum()
}

/// Starting point from weighted moments of the baseline-subtracted data.
fn initial_guess(points: &[(f64, f64, f64)]) -> Result<Vector4<f64>, AnalysisError> {
    let ymin = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let ymax = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if ymax - ymin <= 0.0 {
        return Err(AnalysisError::Degenerate("all y values are equal"));
    }
    let wsum: f64 = points.iter().map(|p| 1.0 / (p.2 * p.2)).sum();
    let ymean = points.iter().map(|p| p.1 / (p.2 * p.2)).sum::<f64>() / wsum;
    let dip = ymean - ymin > ymax - ymean;
    let (base, peak) = if dip { (ymax, ymin) } else { (ymin, ymax) };
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &(x, y, e) in points {
        let h = (y - base).abs() / (e * e);
        s0 += h;
        s1 += h * x;
        s2 += h * x * x;
    }
    let c = s1 / s0;
    let xmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if xmax - xmin <= 0.0 {
        return Err(AnalysisError::Degenerate("all x values are equal"));
    }
    let var = (s2 / s0 - c * c).max(0.0);
    let sigma = var.sqrt().clamp((xmax - xmin) / (2.0 * points.len() as f64), xmax - xmin);
    Ok(Vector4::new(peak - base, c, sigma, base))
}

/// Relative size of a step, each parameter measured in its natural scale
/// so the test is invariant under shifts of x and scaling of y.
fn step_size(p: &Vector4<f64>, d: &Vector4<f64>) -> f64 {
    let amp_scale = p[0].abs() + p[3].abs();
    [d[0].abs() / amp_scale, d[1].abs() / p[2], d[2].abs() / p[2], d[3].abs() / amp_scale]
        .into_iter()
        .fold(0.0, f64::max)
}

/// Weighted least-squares fit of `a·exp(−(x−c)²/(2σ²)) + b` by damped
/// Gauss–Newton. Errors below [`ERROR_FLOOR`] are raised to it.
pub fn fit_gaussian(points: &[(f64, f64, f64)]) -> Result<FitResult, AnalysisError> {
    if points.len() < 5 {
        return Err(AnalysisError::TooFewPoints(points.len()));
    }
    if let Some(i) = points.iter().position(|p| !(p.0.is_finite() && p.1.is_finite() && p.2.is_finite())) {
        return Err(AnalysisError::NonFinite(i));
    }
    let pts: Vec<(f64, f64, f64)> = points.iter().map(|&(x, y, e)| (x, y, e.max(ERROR_FLOOR))).collect();
    fit_weighted(&pts)
}

/// Unit-weight fit; the covariance is rescaled by the reduced χ².
pub fn fit_gaussian_unweighted(points: &[(f64, f64)]) -> Result<FitResult, AnalysisError> {
    if points.len() < 5 {
        return Err(AnalysisError::TooFewPoints(points.len()));
    }
    if let Some(i) = points.iter().position(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(AnalysisError::NonFinite(i));
    }
    let pts: Vec<(f64, f64, f64)> = points.iter().map(|&(x, y)| (x, y, 1.0)).collect();
    let mut fit = fit_weighted(&pts)?;
    let dof = (pts.len() - 4) as f64;
    if let Some(c) = fit.covariance.as_mut() {
        c.iter_mut().flatten().for_each(|v| *v *= fit.chi2 / dof);
    }
    Ok(fit)
}

fn fit_weighted(pts: &[(f64, f64, f64)]) -> Result<FitResult, AnalysisError> {
    let mut p = initial_guess(pts)?;
    let mut cost = chi2(pts, &p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut polish = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for &(x, y, e) in pts {
            let g = gradient(&p, x) / e;
            jtj += g * g.transpose();
            jtr += g * ((y - gaussian(&p, x)) / e);
        }
        let mut accepted = false;
        let mut last_step = f64::INFINITY;
        while lambda < 1e16 {
            let mut a = jtj;
            for i in 0..4 {
                a[(i, i)] *= 1.0 + lambda;
            }
            let Some(d) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            last_step = step_size(&p, &d);
            let trial = p + d;
            let trial_cost = if trial[2] > 0.0 { chi2(pts, &trial) } else { f64::INFINITY };
            // Below the tolerance χ² is flat to rounding; trust the gradient.
            if trial_cost <= cost || (last_step < TOLERANCE && trial_cost.is_finite()) {
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if last_step < TOLERANCE {
            converged = true;
        }
        if !accepted || last_step < 1e-14 {
            break;
        }
        if converged {
            polish += 1;
            if polish > POLISH_STEPS {
                break;
            }
        }
    }

    let mut jtj = Matrix4::zeros();
    for &(x, _, e) in pts {
        let g = gradient(&p, x) / e;
        jtj += g * g.transpose();
    }
    let covariance = jtj.try_inverse().map(|m| {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m[(i, j)];
            }
        }
        out
    });
    Ok(FitResult {
        amplitude: p[0],
        center_hz: p[1],
        sigma_hz: p[2],
        offset: p[3],
        converged: converged && p[2] > 0.0,
        iterations,
        chi2: cost,
        covariance,
        corrections: Vec::new(),
    })
}

/// Fits one ion's column of a scan and carries over its corrections.
pub fn fit_scan(scan: &ScanResult, ion: usize) -> Result<FitResult, AnalysisError> {
    let col = scan
        .column(ion)
        .ok_or(AnalysisError::UnknownIon { ion, n_ions: scan.n_ions() })?;
    let mut fit = fit_gaussian(&col)?;
    fit.corrections = scan.corrections.clone();
    Ok(fit)
}

fn check_ions(scan: &ScanResult, ions: &[usize]) -> Result<(), AnalysisError> {
    match ions.iter().find(|&&i| i >= scan.n_ions()) {
        Some(&ion) => Err(AnalysisError::UnknownIon { ion, n_ions: scan.n_ions() }),
        None => Ok(()),
    }
}

/// Adds a constant to the signal of `ions`, keeping the raw values.
pub fn annotate_background(scan: &ScanResult, ions: &[usize], background: f64) -> Result<ScanResult, AnalysisError> {
    if !(0.0..=1.0).contains(&background) {
        return Err(AnalysisError::Background(background));
    }
    check_ions(scan, ions)?;
    let mut out = scan.clone();
    if background == 0.0 {
        return Ok(out);
    }
    out.raw_p.get_or_insert_with(|| scan.p.clone());
    for row in &mut out.p {
        for &i in ions {
            row[i] += background;
        }
    }
    out.corrections.push(Correction { kind: BACKGROUND_KIND.into(), ions: ions.to_vec(), value: background });
    Ok(out)
}

/// Reverses [`annotate_background`].
pub fn remove_background(scan: &ScanResult, ions: &[usize], background: f64) -> Result<ScanResult, AnalysisError> {
    if !(0.0..=1.0).contains(&background) {
        return Err(AnalysisError::Background(background));
    }
    check_ions(scan, ions)?;
    let mut out = scan.clone();
    if background == 0.0 {
        return Ok(out);
    }
    for row in &mut out.p {
        for &i in ions {
            row[i] -= background;
        }
    }
    if let Some(k) = out
        .corrections
        .iter()
        .rposition(|c| c.kind == BACKGROUND_KIND && c.ions == ions && c.value == background)
    {
        out.corrections.remove(k);
    }
    if out.corrections.is_empty() {
        out.raw_p = None;
    }
    Ok(out)
}

pub fn separation(a: &FitResult, b: &FitResult) -> Result<f64, AnalysisError> {
    if !(a.converged && b.converged) {
        return Err(AnalysisError::Unconverged);
    }
    Ok((a.center_hz - b.center_hz).abs())
}
