//! Empirical Harnack constants and the pointwise singularity-rate detector.
//!
//! The Harnack constants of the equation are not known numerically, so the
//! probes measure the smallest constant that makes each inequality hold on
//! a given configuration and report how it varies with scale.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extended::Extended;
use crate::grid::{GridError, GridField};
use crate::quadrature::{gauss, radius_from_center, sphere_directions, weighted_mean};
use crate::solver::{residual_sign, SolverConfig};
use crate::source::Evaluable;

pub const DEFAULT_C2: f64 = 0.1;
const WINDOW_SAMPLES: usize = 33;
const AVERAGE_PANELS: usize = 4;
const ANGULAR_DEGREE: usize = 16;

#[derive(Debug, Error)]
pub enum HarnackError {
    #[error("probe not contained in the source domain: {0}")]
    ContainmentViolation(String),
    #[error("source is not a solution: {0}")]
    NotSolution(String),
    #[error("empty probe list")]
    EmptyProbeList,
    #[error("source not evaluable at (r={radius}, t={t})")]
    NonEvaluable { radius: f64, t: f64 },
    #[error("invalid probe: {0}")]
    InvalidProbe(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackProbe {
    pub x0_radius: f64,
    pub r: f64,
    pub s: f64,
    #[serde(default = "default_c2")]
    pub c2_trial: f64,
}

fn default_c2() -> f64 {
    DEFAULT_C2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarnackReport {
    pub probe: HarnackProbe,
    pub avg: f64,
    pub theta: f64,
    pub window: (f64, f64),
    pub inf_over_window: f64,
    pub admissible_c1: f64,
}

fn sample(source: &dyn Evaluable, radius: f64, t: f64) -> Result<f64, HarnackError> {
    match source.value(radius, t) {
        Extended::Finite(v) => Ok(v),
        _ => Err(HarnackError::NonEvaluable { radius, t }),
    }
}

/// `⨍_{B(x0,R)} u(·,t)`, by Gauss–Legendre in the distance from `x0`.
pub fn ball_average(source: &dyn Evaluable, x0: f64, radius: f64, t: f64) -> Result<f64, HarnackError> {
    if source.singular_at_origin() && x0 <= radius {
        return Err(HarnackError::InvalidProbe(format!(
            "ball B({x0}, {radius}) contains the standing singularity at x = 0"
        )));
    }
    let n = source.medium().n();
    let dirs = sphere_directions(n, x0, ANGULAR_DEGREE);
    let rule = gauss(16);
    let width = radius / AVERAGE_PANELS as f64;
    let mut samples = Vec::new();
    for i in 0..AVERAGE_PANELS {
        for (d, w) in rule.on(i as f64 * width, (i + 1) as f64 * width) {
            let shell = w * d.powi(n as i32 - 1);
            for &(cos, wd) in &dirs {
                samples.push((sample(source, radius_from_center(x0, d, cos), t)?, shell * wd));
            }
        }
    }
    Ok(weighted_mean(samples).expect("nonempty quadrature"))
}

/// Points of `B(x0,R)` (as distances from the origin) used for infima.
fn ball_points(n: u32, x0: f64, radius: f64) -> Vec<f64> {
    let mut dists = vec![0.0, radius];
    for i in 0..AVERAGE_PANELS {
        let width = radius / AVERAGE_PANELS as f64;
        dists.extend(gauss(8).on(i as f64 * width, (i + 1) as f64 * width).map(|(d, _)| d));
    }
    let mut cosines: Vec<f64> = sphere_directions(n, x0, ANGULAR_DEGREE).iter().map(|d| d.0).collect();
    if n > 1 && x0 > 0.0 {
        cosines.extend([1.0, -1.0]);
    }
    dists
        .iter()
        .flat_map(|&d| cosines.iter().map(move |&c| radius_from_center(x0, d, c)))
        .collect()
}

/// Measures the weak Harnack constant `c1` for one probe.
pub fn weak_harnack_probe(source: &dyn Evaluable, probe: HarnackProbe) -> Result<HarnackReport, HarnackError> {
    let HarnackProbe { x0_radius: x0, r, s, c2_trial } = probe;
    if !(r > 0.0 && x0 >= 0.0 && c2_trial > 0.0 && c2_trial < 1.0) {
        return Err(HarnackError::InvalidProbe("need r > 0, x0 >= 0 and c2_trial in (0,1)".into()));
    }
    let domain = source.domain();
    if !domain.contains_ball(x0, 16.0 * r) || !domain.contains_time(s) {
        return Err(HarnackError::ContainmentViolation(format!("B({x0}, {}) at t = {s}", 16.0 * r)));
    }
    let p = source.medium().p();
    let avg = ball_average(source, x0, 2.0 * r, s)?;
    if !(avg > 0.0) {
        return Err(HarnackError::InvalidProbe(format!("average {avg} is not positive")));
    }
    let theta = c2_trial * avg.powf(2.0 - p);
    let end = s + theta * r.powf(p);
    if !domain.contains_time(end) {
        return Err(HarnackError::ContainmentViolation(format!("time window ends at {end}")));
    }
    let start = s + 0.75 * theta * r.powf(p);
    let points = ball_points(source.medium().n(), x0, 2.0 * r);
    let mut inf = f64::INFINITY;
    for i in 0..WINDOW_SAMPLES {
        let t = start + (end - start) * i as f64 / (WINDOW_SAMPLES - 1) as f64;
        for &radius in &points {
            inf = inf.min(sample(source, radius, t)?);
        }
    }
    Ok(HarnackReport {
        probe,
        avg,
        theta,
        window: (start, end),
        inf_over_window: inf,
        admissible_c1: inf / avg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L1HarnackReport {
    pub lhs: f64,
    pub rhs_inf: f64,
    pub drift: f64,
    pub admissible_c: f64,
}

/// Measures the smallest `c` in the L¹ Harnack inequality for solutions.
pub fn l1_harnack_probe(
    source: &dyn Evaluable,
    x0: f64,
    r: f64,
    s: f64,
    t: f64,
) -> Result<L1HarnackReport, HarnackError> {
    if !source.is_solution() {
        return Err(HarnackError::NotSolution(source.describe()));
    }
    l1_unchecked(source, x0, r, s, t)
}

/// As [`l1_harnack_probe`] for a grid field, which must classify as a
/// discrete solution on every interior cell.
pub fn l1_harnack_probe_field(
    field: &GridField,
    config: &SolverConfig,
    x0: f64,
    r: f64,
    s: f64,
    t: f64,
) -> Result<L1HarnackReport, HarnackError> {
    if !residual_sign(field, config).is_solution() {
        return Err(HarnackError::NotSolution("residual classification is not Solution everywhere".into()));
    }
    l1_unchecked(field, x0, r, s, t)
}

fn l1_unchecked(source: &dyn Evaluable, x0: f64, r: f64, s: f64, t: f64) -> Result<L1HarnackReport, HarnackError> {
    if !(r > 0.0 && t > s) {
        return Err(HarnackError::InvalidProbe("need r > 0 and t > s".into()));
    }
    if source.singular_at_origin() && x0 <= 2.0 * r {
        return Err(HarnackError::NotSolution("ball contains the singular point x = 0".into()));
    }
    let domain = source.domain();
    if !domain.contains_ball(x0, 2.0 * r) || !domain.contains_interval(s, t) {
        return Err(HarnackError::ContainmentViolation(format!("B({x0}, {}) x [{s}, {t}]", 2.0 * r)));
    }
    let p = source.medium().p();
    let mut lhs = f64::NEG_INFINITY;
    let mut rhs_inf = f64::INFINITY;
    for i in 0..WINDOW_SAMPLES {
        let tau = s + (t - s) * i as f64 / (WINDOW_SAMPLES - 1) as f64;
        lhs = lhs.max(ball_average(source, x0, r, tau)?);
        rhs_inf = rhs_inf.min(ball_average(source, x0, 2.0 * r, tau)?);
    }
    let drift = ((t - s) / r.powf(p)).powf(1.0 / (2.0 - p));
    Ok(L1HarnackReport {
        lhs,
        rhs_inf,
        drift,
        admissible_c: lhs / (rhs_inf + drift),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub admissible_c1: Vec<f64>,
    pub coefficient_of_variation: f64,
    pub min: f64,
    pub max: f64,
}

impl SweepReport {
    pub fn max_over_min(&self) -> f64 {
        self.max / self.min
    }
}

pub fn constant_sweep(source: &dyn Evaluable, probes: &[HarnackProbe]) -> Result<SweepReport, HarnackError> {
    if probes.is_empty() {
        return Err(HarnackError::EmptyProbeList);
    }
    let values = probes
        .iter()
        .map(|&p| weak_harnack_probe(source, p).map(|r| r.admissible_c1))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(values))
}

fn summarize(values: Vec<f64>) -> SweepReport {
    let len = values.len() as f64;
    let mean = values.iter().sum::<f64>() / len;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len;
    let cv = if mean == 0.0 { 0.0 } else { var.sqrt() / mean.abs() };
    SweepReport {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        coefficient_of_variation: cv,
        admissible_c1: values,
    }
}

/// Probes `(σ r0, σ^λ s0)` that a self-similar solution maps onto each other.
pub fn self_similar_probes(lambda: f64, x0: f64, r0: f64, s0: f64, c2: f64, scales: &[f64]) -> Vec<HarnackProbe> {
    scales
        .iter()
        .map(|&sigma| HarnackProbe {
            x0_radius: x0 * sigma,
            r: r0 * sigma,
            s: s0 * sigma.powf(lambda),
            c2_trial: c2,
        })
        .collect()
}

/// CSV with columns `scale, admissible_constant`.
pub fn write_sweep_csv<W: Write>(out: W, scales: &[f64], values: &[f64]) -> Result<(), GridError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scale", "admissible_constant"])?;
    for (s, v) in scales.iter().zip(values) {
        w.write_record([format!("{s:.16e}"), format!("{v:.16e}")])?;
    }
    w.flush().map_err(GridError::Io)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RateVerdict {
    PositiveRate,
    ZeroRate,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub x0_radius: f64,
    pub s: f64,
    pub radii: Vec<f64>,
    pub offsets: Vec<f64>,
    /// `inf u(x,t)|x−x0|^{p/(2−p)}` over each annulus `ρ/2 ≤ |x−x0| ≤ ρ`
    /// at times `s + τ/2` and `s + τ`.
    pub infima: Vec<Extended>,
    /// Fitted `d log inf / d log ρ` over the innermost entries.
    pub slope: f64,
    pub rate_estimate: Extended,
    pub verdict: RateVerdict,
}

const RATE_FIT: usize = 6;
const RATE_SLOPE_TOL: f64 = 0.25;

/// Radii `2^{−k} r0`, `k = 0..=12`, with offsets `τ = θ/2 · ρ^p`.
pub fn default_rate_schedule(p: f64, r0: f64, theta: f64) -> Vec<(f64, f64)> {
    (0..=12)
        .map(|k| {
            let rho = r0 * 0.5f64.powi(k);
            (rho, 0.5 * theta * rho.powf(p))
        })
        .collect()
}

pub fn pointwise_rate_detect(
    source: &dyn Evaluable,
    x0: f64,
    t0: f64,
    s: f64,
    schedule: &[(f64, f64)],
) -> Result<RateReport, HarnackError> {
    if !(s > t0) {
        return Err(HarnackError::InvalidProbe(format!("need s > t0 (s = {s}, t0 = {t0})")));
    }
    let medium = source.medium();
    let n = medium.n();
    let power = medium.p() / (2.0 - medium.p());
    let mut cosines: Vec<f64> = sphere_directions(n, x0, 8).iter().map(|d| d.0).collect();
    if n > 1 && x0 > 0.0 {
        cosines.extend([1.0, -1.0]);
    }
    let mut infima = Vec::with_capacity(schedule.len());
    for &(rho, tau) in schedule {
        let mut inf = Extended::Infinite;
        let mut defined = true;
        'outer: for t in [s + 0.5 * tau, s + tau] {
            for i in 0..5 {
                let d = rho * (0.5 + 0.125 * i as f64);
                for &c in &cosines {
                    match source.value(radius_from_center(x0, d, c), t) {
                        Extended::Finite(v) => {
                            let m = v * d.powf(power);
                            inf = match inf {
                                Extended::Finite(cur) => Extended::Finite(cur.min(m)),
                                _ => Extended::Finite(m),
                            };
                        }
                        Extended::Infinite => {}
                        Extended::Undefined => {
                            defined = false;
                            break 'outer;
                        }
                    }
                }
            }
        }
        infima.push(if defined { inf } else { Extended::Undefined });
    }

    let (slope, rate_estimate, verdict) = rate_verdict(schedule, &infima);
    Ok(RateReport {
        x0_radius: x0,
        s,
        radii: schedule.iter().map(|e| e.0).collect(),
        offsets: schedule.iter().map(|e| e.1).collect(),
        infima,
        slope,
        rate_estimate,
        verdict,
    })
}

fn rate_verdict(schedule: &[(f64, f64)], infima: &[Extended]) -> (f64, Extended, RateVerdict) {
    let inconclusive = (f64::NAN, Extended::Undefined, RateVerdict::Inconclusive);
    if infima.len() < RATE_FIT {
        return inconclusive;
    }
    let tail = &infima[infima.len() - RATE_FIT..];
    let radii = &schedule[schedule.len() - RATE_FIT..];
    if tail.iter().any(|m| matches!(m, Extended::Undefined)) {
        return inconclusive;
    }
    if tail.iter().all(|m| m.is_infinite()) {
        return (f64::NEG_INFINITY, Extended::Infinite, RateVerdict::PositiveRate);
    }
    let Some(&Extended::Finite(last)) = tail.last() else {
        return inconclusive;
    };
    if last == 0.0 {
        return (f64::INFINITY, Extended::ZERO, RateVerdict::ZeroRate);
    }
    let pts: Option<Vec<(f64, f64)>> = tail
        .iter()
        .zip(radii)
        .map(|(m, &(rho, _))| match m {
            Extended::Finite(v) if *v > 0.0 => Some((rho.ln(), v.ln())),
            _ => None,
        })
        .collect();
    let Some(pts) = pts else {
        return inconclusive;
    };
    let slope = fit_slope(&pts);
    if slope > RATE_SLOPE_TOL {
        (slope, Extended::ZERO, RateVerdict::ZeroRate)
    } else if slope < -RATE_SLOPE_TOL {
        (slope, Extended::Infinite, RateVerdict::PositiveRate)
    } else {
        (slope, Extended::Finite(last), RateVerdict::PositiveRate)
    }
}

/// Least-squares slope of `y` against `x`.
pub(crate) fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let len = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
