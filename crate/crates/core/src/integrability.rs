//! Local integrability measurements, critical-exponent scans, slice norms,
//! the two-class dichotomy, and the Caccioppoli and Sobolev side checks.
//!
//! Divergence is detected on a geometric schedule of excised balls
//! `B(x0, ρ_k)`, `ρ_k = r·2^{−k}`. Each dyadic annulus is integrated on its
//! own so the increments `I_k − I_{k−1}` are computed directly rather than as
//! differences of large numbers.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extended::Extended;
use crate::grid::{GridError, GridField};
use crate::harnack::{self, RateReport, RateVerdict};
use crate::quadrature::{gauss, graded_panels, radius_from_center, sphere_directions, unit_sphere_area};
use crate::solver::{residual_sign, CellClass, SolverConfig};
use crate::source::Evaluable;

/// Number of halvings in the default cutoff schedule.
pub const SCHEDULE_LEVELS: usize = 40;
/// Increments compared when judging the tail.
const TAIL: usize = 8;
const CONVERGENT_BELOW: f64 = 0.95;
const DIVERGENT_ABOVE: f64 = 1.05;
/// Levels of geometric time grading toward the start of the support.
const TIME_LEVELS: usize = 48;
const ANGULAR_DEGREE: usize = 16;
/// Bisection stops once the bracket on `q*` is this narrow.
const Q_BRACKET: f64 = 0.005;

#[derive(Debug, Error)]
pub enum IntegrabilityError {
    #[error("source has no gradient")]
    NonEvaluable,
    #[error("source undefined at (r={radius}, t={t})")]
    OutOfDomain { radius: f64, t: f64 },
    #[error("source is negative at (r={radius}, t={t}); shift it first")]
    NegativeSource { radius: f64, t: f64 },
    #[error("invalid request: {0}")]
    InvalidInput(String),
    #[error("scan verdicts are not monotone in q: {0}")]
    InconsistentVerdicts(String),
    #[error("field is not a discrete supersolution on the cutoff support")]
    NotSupersolution,
    #[error(transparent)]
    Harnack(#[from] harnack::HarnackError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solver(#[from] crate::solver::SolverError),
}

/// `B(x0·e₁, r) × (t1, t2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub x0_radius: f64,
    pub r: f64,
    pub t1: f64,
    pub t2: f64,
}

impl Cylinder {
    fn validate(&self, source: &dyn Evaluable) -> Result<(), IntegrabilityError> {
        if !(self.r > 0.0 && self.x0_radius >= 0.0 && self.t1 < self.t2) {
            return Err(IntegrabilityError::InvalidInput("need r > 0, x0 >= 0, t1 < t2".into()));
        }
        let d = source.domain();
        if !d.contains_ball(self.x0_radius, self.r) {
            return Err(IntegrabilityError::InvalidInput("ball leaves the source domain".into()));
        }
        if self.t1 < d.t_min || self.t2 > d.t_max {
            return Err(IntegrabilityError::InvalidInput("time interval leaves the source domain".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Value,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Convergent,
    Divergent,
    Borderline,
}

fn evaluate(source: &dyn Evaluable, selector: Selector, radius: f64, t: f64) -> Result<Extended, IntegrabilityError> {
    let v = match selector {
        Selector::Value => source.value(radius, t),
        Selector::Gradient => source.gradient(radius, t).ok_or(IntegrabilityError::NonEvaluable)?,
    };
    match v {
        Extended::Undefined => Err(IntegrabilityError::OutOfDomain { radius, t }),
        Extended::Finite(x) if x < 0.0 => Err(IntegrabilityError::NegativeSource { radius, t }),
        other => Ok(other),
    }
}

/// Time quadrature nodes on `(t1, t2)`, graded toward `max(t1, 0)` where
/// the families in scope concentrate.
fn time_nodes(t1: f64, t2: f64) -> Vec<(f64, f64)> {
    let rule = gauss(16);
    let mut nodes = Vec::new();
    let focus = if t1 < 0.0 && t2 > 0.0 { 0.0 } else { t1 };
    if focus > t1 {
        nodes.extend(rule.on(t1, focus));
    }
    for (a, b) in graded_panels(focus, t2, 2.0, TIME_LEVELS) {
        nodes.extend(rule.on(a, b));
    }
    nodes
}

/// Values of the selected quantity on the quadrature nodes of one annulus
/// `a < |x − x0| < b`, with their space-time weights.
fn annulus_samples(
    source: &dyn Evaluable,
    selector: Selector,
    x0: f64,
    a: f64,
    b: f64,
    times: Option<&[(f64, f64)]>,
    slice_t: f64,
) -> Result<Vec<(f64, Extended)>, IntegrabilityError> {
    let n = source.medium().n();
    let dirs = sphere_directions(n, x0, ANGULAR_DEGREE);
    let mut out = Vec::new();
    for (d, wd) in gauss(16).on(a, b) {
        let shell = wd * d.powi(n as i32 - 1);
        for &(cos, wa) in &dirs {
            let radius = radius_from_center(x0, d, cos);
            match times {
                Some(times) => {
                    for &(t, wt) in times {
                        out.push((shell * wa * wt, evaluate(source, selector, radius, t)?));
                    }
                }
                None => out.push((shell * wa, evaluate(source, selector, radius, slice_t)?)),
            }
        }
    }
    Ok(out)
}

fn power_sum(samples: &[(f64, Extended)], q: f64) -> Extended {
    let mut total = 0.0;
    for (w, v) in samples {
        match v {
            Extended::Finite(x) => {
                if *x > 0.0 {
                    total += w * x.powf(q);
                }
            }
            _ => return Extended::Infinite,
        }
    }
    Extended::Finite(total)
}

/// Quadrature samples of a source over a cylinder, one group per dyadic
/// annulus `ρ_k < |x−x0| < ρ_{k−1}`, reusable for every exponent `q`.
struct CylinderSamples {
    cutoffs: Vec<f64>,
    annuli: Vec<Vec<(f64, Extended)>>,
}

impl CylinderSamples {
    fn new(
        source: &dyn Evaluable,
        selector: Selector,
        x0: f64,
        r: f64,
        levels: usize,
        times: Option<&[(f64, f64)]>,
        slice_t: f64,
    ) -> Result<Self, IntegrabilityError> {
        let mut cutoffs = Vec::with_capacity(levels);
        let mut annuli = Vec::with_capacity(levels);
        let mut outer = r;
        for _ in 0..levels {
            let inner = 0.5 * outer;
            annuli.push(annulus_samples(source, selector, x0, inner, outer, times, slice_t)?);
            cutoffs.push(inner);
            outer = inner;
        }
        Ok(Self { cutoffs, annuli })
    }

    fn scan(&self, q: f64) -> IntegralScan {
        let increments: Vec<Extended> = self.annuli.iter().map(|s| power_sum(s, q)).collect();
        IntegralScan::from_increments(q, self.cutoffs.clone(), &increments)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralScan {
    pub q: f64,
    /// `ρ_k`, decreasing.
    pub cutoffs: Vec<f64>,
    /// `I_k`, the integral with `B(x0, ρ_k)` excised; nondecreasing.
    pub values: Vec<Extended>,
    pub verdict: Verdict,
    /// Fitted `d log I / d log ρ` over the tail.
    pub slope: f64,
    /// Geometric-mean ratio of successive tail increments.
    pub increment_ratio: f64,
}

impl IntegralScan {
    fn from_increments(q: f64, cutoffs: Vec<f64>, increments: &[Extended]) -> Self {
        let mut values = Vec::with_capacity(increments.len());
        let mut total = Extended::ZERO;
        for inc in increments {
            total = match (total, inc) {
                (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
                _ => Extended::Infinite,
            };
            values.push(total);
        }
        let len = increments.len();
        let ratio = if len > TAIL {
            match (increments[len - 1 - TAIL], increments[len - 1]) {
                (Extended::Finite(first), Extended::Finite(last)) => {
                    if last == 0.0 {
                        0.0
                    } else if first == 0.0 {
                        f64::INFINITY
                    } else {
                        (last / first).powf(1.0 / TAIL as f64)
                    }
                }
                _ => f64::INFINITY,
            }
        } else {
            f64::NAN
        };
        let verdict = if ratio < CONVERGENT_BELOW {
            Verdict::Convergent
        } else if ratio > DIVERGENT_ABOVE {
            Verdict::Divergent
        } else {
            Verdict::Borderline
        };
        let tail: Vec<(f64, f64)> = values
            .iter()
            .zip(&cutoffs)
            .skip(len.saturating_sub(TAIL))
            .filter_map(|(v, rho)| v.finite().filter(|x| *x > 0.0).map(|x| (rho.ln(), x.ln())))
            .collect();
        let slope = if tail.len() >= 2 { harnack::fit_slope(&tail) } else { f64::NAN };
        Self {
            q,
            cutoffs,
            values,
            verdict,
            slope,
            increment_ratio: ratio,
        }
    }

    /// Growth exponent `−log₂(ratio)`: positive when the tail decays.
    pub fn decay_exponent(&self) -> f64 {
        -self.increment_ratio.log2()
    }

    pub fn last_value(&self) -> Extended {
        *self.values.last().unwrap_or(&Extended::ZERO)
    }
}

/// `∫∫ u^q` (or `|∇u|^q`) over the cylinder with `B(x0, rho)` excised.
pub fn local_integral(
    source: &dyn Evaluable,
    cyl: Cylinder,
    q: f64,
    selector: Selector,
    rho: f64,
) -> Result<Extended, IntegrabilityError> {
    cyl.validate(source)?;
    if !(q > 0.0 && rho >= 0.0 && rho < cyl.r) {
        return Err(IntegrabilityError::InvalidInput("need q > 0 and 0 <= rho < r".into()));
    }
    let times = time_nodes(cyl.t1, cyl.t2);
    let panels = if rho > 0.0 {
        let levels = ((cyl.r / rho).log2().ceil() as usize).clamp(1, 80);
        let mut p = Vec::with_capacity(levels);
        let mut outer = cyl.r;
        for _ in 0..levels {
            let inner = (0.5 * outer).max(rho);
            p.push((inner, outer));
            outer = inner;
        }
        p
    } else {
        graded_panels(0.0, cyl.r, 2.0, SCHEDULE_LEVELS)
    };
    let mut total = 0.0;
    for (a, b) in panels {
        match power_sum(&annulus_samples(source, selector, cyl.x0_radius, a, b, Some(&times), 0.0)?, q) {
            Extended::Finite(v) => total += v,
            other => return Ok(other),
        }
    }
    Ok(Extended::Finite(total))
}

/// The cutoff scan `I_k` for a single exponent.
pub fn integral_scan(
    source: &dyn Evaluable,
    cyl: Cylinder,
    q: f64,
    selector: Selector,
    levels: usize,
) -> Result<IntegralScan, IntegrabilityError> {
    cyl.validate(source)?;
    let times = time_nodes(cyl.t1, cyl.t2);
    Ok(CylinderSamples::new(source, selector, cyl.x0_radius, cyl.r, levels, Some(&times), 0.0)?.scan(q))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentScan {
    pub scans: Vec<IntegralScan>,
    /// Midpoint of the final bracket, when the verdict changes on `[q_lo, q_hi]`.
    pub q_star: Option<f64>,
    pub bracket: Option<(f64, f64)>,
}

/// Locates the integrability threshold in `q` by bisection on the sign of
/// the tail decay exponent. A coarse scan first checks that convergence is
/// monotone in `q`.
pub fn exponent_scan(
    source: &dyn Evaluable,
    cyl: Cylinder,
    selector: Selector,
    q_lo: f64,
    q_hi: f64,
    levels: usize,
) -> Result<ExponentScan, IntegrabilityError> {
    if !(q_lo > 0.0 && q_lo < q_hi) {
        return Err(IntegrabilityError::InvalidInput("need 0 < q_lo < q_hi".into()));
    }
    if levels <= TAIL {
        return Err(IntegrabilityError::InvalidInput(format!("schedule needs more than {TAIL} levels")));
    }
    cyl.validate(source)?;
    let times = time_nodes(cyl.t1, cyl.t2);
    let samples = CylinderSamples::new(source, selector, cyl.x0_radius, cyl.r, levels, Some(&times), 0.0)?;

    let coarse: Vec<IntegralScan> = (0..=8)
        .map(|i| samples.scan(q_lo + (q_hi - q_lo) * i as f64 / 8.0))
        .collect();
    for pair in coarse.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.verdict == Verdict::Convergent && a.verdict != Verdict::Convergent {
            return Err(IntegrabilityError::InconsistentVerdicts(format!(
                "{:?} at q = {} but Convergent at q = {}",
                a.verdict, a.q, b.q
            )));
        }
    }
    let crossing = coarse
        .windows(2)
        .position(|w| w[0].decay_exponent() > 0.0 && w[1].decay_exponent() <= 0.0);
    let mut scans = coarse.clone();
    let Some(i) = crossing else {
        return Ok(ExponentScan {
            scans,
            q_star: None,
            bracket: None,
        });
    };
    let (mut lo, mut hi) = (coarse[i].q, coarse[i + 1].q);
    while hi - lo > Q_BRACKET {
        let mid = 0.5 * (lo + hi);
        let scan = samples.scan(mid);
        if scan.decay_exponent() > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        scans.push(scan);
    }
    scans.sort_by(|a, b| a.q.total_cmp(&b.q));
    Ok(ExponentScan {
        scans,
        q_star: Some(0.5 * (lo + hi)),
        bracket: Some((lo, hi)),
    })
}

/// CSV with columns `q, rho, I, verdict`.
pub fn write_scan_csv<W: Write>(out: W, scans: &[IntegralScan]) -> Result<(), GridError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["q", "rho", "I", "verdict"])?;
    for scan in scans {
        for (rho, v) in scan.cutoffs.iter().zip(&scan.values) {
            w.write_record([
                format!("{:.16e}", scan.q),
                format!("{rho:.16e}"),
                v.to_string(),
                format!("{:?}", scan.verdict),
            ])?;
        }
    }
    w.flush().map_err(GridError::Io)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceValue {
    pub t: f64,
    pub value: Extended,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceSup {
    pub sup_value: Extended,
    pub divergent: bool,
    /// Some slice grew at a near-constant rate (suspected logarithmic blow-up).
    pub borderline: bool,
    pub slices: Vec<SliceValue>,
}

/// `max_t ∫_{B(x0,R)} u(·,t)^α` over `samples` equally spaced times.
pub fn slice_sup_norm(
    source: &dyn Evaluable,
    x0: f64,
    radius: f64,
    t1: f64,
    t2: f64,
    alpha: f64,
    samples: usize,
) -> Result<SliceSup, IntegrabilityError> {
    if !(alpha > 0.0 && radius > 0.0 && t1 <= t2 && samples >= 1) {
        return Err(IntegrabilityError::InvalidInput("need alpha > 0, R > 0, t1 <= t2, samples >= 1".into()));
    }
    if !source.domain().contains_ball(x0, radius) {
        return Err(IntegrabilityError::InvalidInput("ball leaves the source domain".into()));
    }
    let mut slices = Vec::with_capacity(samples);
    for i in 0..samples {
        let t = if samples == 1 { t1 } else { t1 + (t2 - t1) * i as f64 / (samples - 1) as f64 };
        let s = CylinderSamples::new(source, Selector::Value, x0, radius, SCHEDULE_LEVELS, None, t)?.scan(alpha);
        let value = match s.verdict {
            Verdict::Divergent => Extended::Infinite,
            _ => s.last_value(),
        };
        slices.push(SliceValue {
            t,
            value,
            verdict: s.verdict,
        });
    }
    let divergent = slices.iter().any(|s| s.verdict == Verdict::Divergent || s.value.is_infinite());
    let borderline = slices.iter().any(|s| s.verdict == Verdict::Borderline);
    let sup_value = if divergent {
        Extended::Infinite
    } else {
        Extended::Finite(slices.iter().filter_map(|s| s.value.finite()).fold(0.0, f64::max))
    };
    Ok(SliceSup {
        sup_value,
        divergent,
        borderline,
        slices,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRegion {
    pub x0_radius: f64,
    pub r: f64,
    pub t1: f64,
    pub t2: f64,
    /// Time levels sampled for the slice norms.
    #[serde(default = "default_slices")]
    pub slices: usize,
    /// Base time of the rate probe; defaults to `t2 − (t2 − t1)/4`, moved
    /// earlier if the widest time offset would leave the domain.
    #[serde(default)]
    pub rate_time: Option<f64>,
}

fn default_slices() -> usize {
    9
}

impl ProbeRegion {
    pub fn new(x0_radius: f64, r: f64, t1: f64, t2: f64) -> Self {
        Self {
            x0_radius,
            r,
            t1,
            t2,
            slices: default_slices(),
            rate_time: None,
        }
    }

    fn default_rate_time(&self) -> f64 {
        self.t2 - 0.25 * (self.t2 - self.t1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClassVerdict {
    ClassB,
    ClassM,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanEvidence {
    pub q: f64,
    pub verdict: Verdict,
    pub increment_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub slice_sup: Extended,
    pub slice_divergent: bool,
    pub slice_borderline: bool,
    pub scan_s_critical: ScanEvidence,
    pub scan_one: ScanEvidence,
    pub rate_verdict: RateVerdict,
    pub rate_estimate: Extended,
    pub b_evidence: bool,
    pub m_evidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub verdict: ClassVerdict,
    pub evidence: Evidence,
}

/// Sorts a nonnegative source into the Barenblatt class, the complementary
/// class, or neither when the evidence is inconclusive or conflicting.
pub fn classify(source: &dyn Evaluable, probe: ProbeRegion) -> Result<ClassificationReport, IntegrabilityError> {
    let medium = source.medium();
    let cyl = Cylinder {
        x0_radius: probe.x0_radius,
        r: probe.r,
        t1: probe.t1,
        t2: probe.t2,
    };
    cyl.validate(source)?;
    let domain = source.domain();
    // Closed forms are undefined at the opening time itself.
    let slice_lo = if domain.t_open && probe.t1 <= domain.t_min {
        domain.t_min + 1e-3 * (probe.t2 - domain.t_min)
    } else {
        probe.t1
    };
    let slices = slice_sup_norm(source, probe.x0_radius, probe.r, slice_lo, probe.t2, 1.0, probe.slices)?;

    let times = time_nodes(cyl.t1, cyl.t2);
    let samples = CylinderSamples::new(source, Selector::Value, cyl.x0_radius, cyl.r, SCHEDULE_LEVELS, Some(&times), 0.0)?;
    let evidence_at = |q: f64| {
        let s = samples.scan(q);
        ScanEvidence {
            q,
            verdict: s.verdict,
            increment_ratio: s.increment_ratio,
        }
    };
    let scan_s_critical = evidence_at(medium.exponents().s_critical);
    let scan_one = evidence_at(1.0);

    let rate: RateReport = {
        let schedule = harnack::default_rate_schedule(medium.p(), 0.5 * probe.r, harnack::DEFAULT_C2);
        // The default base time backs off so the widest offset stays inside
        // the domain; an explicit one is taken as given.
        let s = match probe.rate_time {
            Some(s) => s,
            None => probe.default_rate_time().min(domain.t_max - schedule[0].1),
        };
        if s > probe.t1 && domain.contains_time(s + schedule[0].1) {
            harnack::pointwise_rate_detect(source, probe.x0_radius, probe.t1, s, &schedule)?
        } else {
            return Err(IntegrabilityError::InvalidInput("rate probe leaves the time domain".into()));
        }
    };

    let slice_finite = !slices.divergent && !slices.borderline;
    let b_evidence = slice_finite && scan_s_critical.verdict == Verdict::Convergent && rate.verdict != RateVerdict::PositiveRate;
    let m_evidence =
        slices.divergent || rate.verdict == RateVerdict::PositiveRate || scan_s_critical.verdict == Verdict::Divergent;
    let verdict = match (b_evidence, m_evidence) {
        (true, false) => ClassVerdict::ClassB,
        (false, true) => ClassVerdict::ClassM,
        _ => ClassVerdict::Undetermined,
    };
    Ok(ClassificationReport {
        verdict,
        evidence: Evidence {
            slice_sup: slices.sup_value,
            slice_divergent: slices.divergent,
            slice_borderline: slices.borderline,
            scan_s_critical,
            scan_one,
            rate_verdict: rate.verdict,
            rate_estimate: rate.rate_estimate,
            b_evidence,
            m_evidence,
        },
    })
}

/// Product cutoff `φ(x,t) = φ_r(|x|)·φ_t(t)` built from the `C¹` smoothstep
/// `3s² − 2s³`: `φ_r` is 1 on `[0, r_inner]` and 0 beyond `r_outer`; `φ_t`
/// is 0 before `t_start` and 1 after `t_full`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffFn {
    pub r_inner: f64,
    pub r_outer: f64,
    pub t_start: f64,
    pub t_full: f64,
    pub t_end: f64,
}

fn smoothstep(s: f64) -> (f64, f64) {
    let s = s.clamp(0.0, 1.0);
    (s * s * (3.0 - 2.0 * s), 6.0 * s * (1.0 - s))
}

impl CutoffFn {
    pub fn validate(&self) -> Result<(), IntegrabilityError> {
        if !(0.0 <= self.r_inner && self.r_inner < self.r_outer && self.t_start < self.t_full && self.t_full <= self.t_end) {
            return Err(IntegrabilityError::InvalidInput("cutoff needs r_inner < r_outer, t_start < t_full <= t_end".into()));
        }
        Ok(())
    }

    /// `(φ_r, φ_r')`.
    pub fn radial(&self, r: f64) -> (f64, f64) {
        let w = self.r_outer - self.r_inner;
        let (s, ds) = smoothstep((r - self.r_inner) / w);
        (1.0 - s, -ds / w)
    }

    /// `(φ_t, φ_t')`.
    pub fn temporal(&self, t: f64) -> (f64, f64) {
        let w = self.t_full - self.t_start;
        let (s, ds) = smoothstep((t - self.t_start) / w);
        (s, ds / w)
    }

    pub fn value(&self, r: f64, t: f64) -> f64 {
        self.radial(r).0 * self.temporal(t).0
    }

    pub fn gradient_abs(&self, r: f64, t: f64) -> f64 {
        self.radial(r).1.abs() * self.temporal(t).0
    }

    /// `|∂_t(φ^p)| = p φ^{p−1} φ_r |φ_t'|`.
    pub fn dt_phi_p(&self, r: f64, t: f64, p: f64) -> f64 {
        let phi = self.value(r, t);
        if phi == 0.0 {
            return 0.0;
        }
        p * phi.powf(p - 1.0) * self.radial(r).0 * self.temporal(t).1.abs()
    }
}

/// Space-time quadrature over a grid field restricted to a cutoff's
/// support: one node per radial cell (midpoint value, difference gradient,
/// exact shell volume) and the trapezoid rule across time levels.
struct CellQuadrature<'a> {
    field: &'a GridField,
    cutoff: CutoffFn,
    levels: Vec<(usize, f64)>,
}

struct Cell {
    r: f64,
    u: f64,
    grad: f64,
    weight: f64,
}

impl<'a> CellQuadrature<'a> {
    fn new(field: &'a GridField, cutoff: CutoffFn) -> Result<Self, IntegrabilityError> {
        cutoff.validate()?;
        let grid = field.grid();
        if !grid.has_origin() || cutoff.r_outer > grid.r_max() {
            return Err(IntegrabilityError::InvalidInput("cutoff support must lie in a grid containing r = 0".into()));
        }
        let times = field.times();
        if cutoff.t_start < times[0] || cutoff.t_end > *times.last().unwrap() {
            return Err(IntegrabilityError::InvalidInput("cutoff time window leaves the field".into()));
        }
        let ks: Vec<usize> = (0..times.len())
            .filter(|&k| times[k] >= cutoff.t_start && times[k] <= cutoff.t_end)
            .collect();
        if ks.len() < 2 {
            return Err(IntegrabilityError::InvalidInput("cutoff window covers fewer than two time levels".into()));
        }
        let mut levels: Vec<(usize, f64)> = ks.iter().map(|&k| (k, 0.0)).collect();
        for i in 0..ks.len() - 1 {
            let dt = times[ks[i + 1]] - times[ks[i]];
            levels[i].1 += 0.5 * dt;
            levels[i + 1].1 += 0.5 * dt;
        }
        Ok(Self { field, cutoff, levels })
    }

    fn cells(&self, k: usize) -> impl Iterator<Item = Cell> + '_ {
        let nodes = self.field.grid().nodes();
        let n = self.field.grid().n();
        let omega = unit_sphere_area(n);
        let nf = f64::from(n);
        nodes.windows(2).enumerate().filter(|(_, w)| w[0] < self.cutoff.r_outer).map(move |(j, w)| {
            let (a, b) = (self.field.at(k, j), self.field.at(k, j + 1));
            Cell {
                r: 0.5 * (w[0] + w[1]),
                u: 0.5 * (a + b),
                grad: (b - a) / (w[1] - w[0]),
                weight: omega * (w[1].powf(nf) - w[0].powf(nf)) / nf,
            }
        })
    }

    fn support_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let nodes = self.field.grid().nodes();
        self.levels
            .iter()
            .flat_map(move |&(k, _)| (0..nodes.len()).filter(move |&j| nodes[j] < self.cutoff.r_outer).map(move |j| (k, j)))
    }
}

/// `min(h, k)` for the discrete solution `h` of the point-source problem on
/// the annulus `r ≥ nodes[excise]` (exact Dirichlet data on both edges),
/// extended by `k` inside the excised ball.
///
/// Truncation and the extension keep it a discrete supersolution as long
/// as the inner trace stays above `k`.
pub fn truncated_point_source(
    medium: crate::exponents::Medium,
    grid: &crate::grid::RadialGrid,
    excise: usize,
    times: &[f64],
    k: f64,
    config: &SolverConfig,
) -> Result<GridField, IntegrabilityError> {
    use crate::solver::{solve, DirichletData};
    let ips = crate::closed_form::SolutionFamily::infinite_point_source(medium)
        .map_err(|e| IntegrabilityError::InvalidInput(e.to_string()))?;
    if !grid.has_origin() || excise == 0 || excise + 2 > grid.last() {
        return Err(IntegrabilityError::InvalidInput("need a grid with origin and 0 < excise <= J - 2".into()));
    }
    let annulus = crate::grid::RadialGrid::from_nodes(grid.n(), grid.nodes()[excise..].to_vec())?;
    let exact = |r: f64, t: f64| ips.value(r, t).finite().ok_or(IntegrabilityError::OutOfDomain { radius: r, t });
    let mut inner = Vec::with_capacity(times.len());
    let mut outer = Vec::with_capacity(times.len());
    for &t in times {
        let v = exact(annulus.r_min(), t)?;
        if v < k {
            return Err(IntegrabilityError::InvalidInput(format!("inner trace {v} drops below the cap {k} at t = {t}")));
        }
        inner.push(v);
        outer.push(exact(annulus.r_max(), t)?);
    }
    let initial = annulus.nodes().iter().map(|&r| exact(r, times[0])).collect::<Result<Vec<_>, _>>()?;
    let data = DirichletData { inner: Some(inner), outer };
    let h = solve(medium, &annulus, times, &initial, &data, config)?.field;
    let mut values = Vec::with_capacity(times.len() * grid.len());
    for kk in 0..times.len() {
        values.extend(std::iter::repeat(k).take(excise));
        values.extend(h.row(kk).iter().map(|v| v.min(k)));
    }
    Ok(GridField::from_values(
        medium,
        grid.clone(),
        times.to_vec(),
        values,
        format!("point-source solution on r >= {} truncated at {k}", annulus.r_min()),
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaccioppoliSides {
    /// `∫∫ |∇u|^p u^{−ε−1} φ^p`
    pub grad_term: f64,
    /// `sup_t ∫ u^{1−ε} φ^p`
    pub sup_term: f64,
    /// `∫∫ u^{p−1−ε}|∇φ|^p + ∫∫ u^{1−ε}|∂_t(φ^p)|`
    pub rhs: f64,
    /// `(grad_term + sup_term) / rhs`
    pub ratio: f64,
}

/// Both sides of the Caccioppoli inequality for a positive discrete
/// supersolution on the support of `cutoff`.
pub fn caccioppoli_sides(
    field: &GridField,
    cutoff: CutoffFn,
    eps: f64,
    config: &SolverConfig,
) -> Result<CaccioppoliSides, IntegrabilityError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(IntegrabilityError::InvalidInput("eps must lie in (0,1)".into()));
    }
    let quad = CellQuadrature::new(field, cutoff)?;
    for (k, j) in quad.support_cells() {
        let u = field.at(k, j);
        if !(u > 0.0) {
            return Err(IntegrabilityError::NegativeSource {
                radius: field.grid().nodes()[j],
                t: field.times()[k],
            });
        }
    }
    let classes = residual_sign(field, config);
    let violates = quad
        .support_cells()
        .any(|(k, j)| matches!(classes.class(k, j), Some(CellClass::Subsolution | CellClass::Indeterminate)));
    if violates {
        return Err(IntegrabilityError::NotSupersolution);
    }

    let p = field.medium().p();
    let times = field.times();
    let (mut grad_term, mut sup_term, mut rhs) = (0.0, 0.0f64, 0.0);
    for &(k, wt) in &quad.levels {
        let t = times[k];
        let mut slice = 0.0;
        for c in quad.cells(k) {
            let phi_p = cutoff.value(c.r, t).powf(p);
            grad_term += wt * c.weight * c.grad.abs().powf(p) * c.u.powf(-eps - 1.0) * phi_p;
            slice += c.weight * c.u.powf(1.0 - eps) * phi_p;
            rhs += wt
                * c.weight
                * (c.u.powf(p - 1.0 - eps) * cutoff.gradient_abs(c.r, t).powf(p) + c.u.powf(1.0 - eps) * cutoff.dt_phi_p(c.r, t, p));
        }
        sup_term = sup_term.max(slice);
    }
    Ok(CaccioppoliSides {
        grad_term,
        sup_term,
        rhs,
        ratio: (grad_term + sup_term) / rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobolevSides {
    /// `q = p + p·m/n`
    pub q: f64,
    /// `∫∫ |φu|^q`
    pub lhs: f64,
    /// `∫∫ |∇(φu)|^p`
    pub grad_factor: f64,
    /// `(sup_t ∫ |φu|^m)^{p/n}`
    pub sup_factor: f64,
    /// `lhs / (grad_factor · sup_factor)`
    pub ratio: f64,
}

pub fn sobolev_sides(field: &GridField, cutoff: CutoffFn, m: f64) -> Result<SobolevSides, IntegrabilityError> {
    if !(m > 0.0) {
        return Err(IntegrabilityError::InvalidInput("m must be positive".into()));
    }
    let quad = CellQuadrature::new(field, cutoff)?;
    let medium = field.medium();
    let p = medium.p();
    let q = medium.exponents().sobolev_q(m);
    let times = field.times();
    let (mut lhs, mut grad_factor, mut sup) = (0.0, 0.0, 0.0f64);
    for &(k, wt) in &quad.levels {
        let t = times[k];
        let mut slice = 0.0;
        for c in quad.cells(k) {
            let phi = cutoff.value(c.r, t);
            let dphi = cutoff.radial(c.r).1 * cutoff.temporal(t).0;
            let pu = (phi * c.u).abs();
            lhs += wt * c.weight * pu.powf(q);
            grad_factor += wt * c.weight * (phi * c.grad + c.u * dphi).abs().powf(p);
            slice += c.weight * pu.powf(m);
        }
        sup = sup.max(slice);
    }
    let sup_factor = sup.powf(p / medium.nf());
    let denom = grad_factor * sup_factor;
    Ok(SobolevSides {
        q,
        lhs,
        grad_factor,
        sup_factor,
        ratio: if denom > 0.0 { lhs / denom } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{ips_constant, SolutionFamily};
    use crate::exponents::Medium;
    use crate::grid::{uniform_times, RadialGrid};
    use crate::source::ConstantField;

    fn md(n: u32, p: f64) -> Medium {
        Medium::new(n, p).unwrap()
    }

    #[test]
    fn zero_field_integrates_to_zero() {
        let z = ConstantField { medium: md(2, 1.5), value: 0.0 };
        let cyl = Cylinder { x0_radius: 0.0, r: 1.0, t1: 0.0, t2: 1.0 };
        for q in [0.3, 1.0, 2.5] {
            assert_eq!(local_integral(&z, cyl, q, Selector::Value, 0.01).unwrap(), Extended::ZERO);
            assert_eq!(integral_scan(&z, cyl, q, Selector::Value, 20).unwrap().verdict, Verdict::Convergent);
        }
    }

    #[test]
    fn constant_integral_is_volume() {
        let k = ConstantField { medium: md(3, 1.8), value: 2.0 };
        let cyl = Cylinder { x0_radius: 0.4, r: 0.5, t1: -1.0, t2: 1.0 };
        let v = local_integral(&k, cyl, 2.0, Selector::Value, 0.0).unwrap().finite().unwrap();
        let exact = 4.0 * 2.0 * crate::quadrature::ball_volume(3, 0.5);
        assert!((v - exact).abs() < 1e-9 * exact, "{v} vs {exact}");
    }

    #[test]
    fn ips_half_power_limit() {
        let m = md(2, 1.5);
        let f = SolutionFamily::infinite_point_source(m).unwrap();
        let cyl = Cylinder { x0_radius: 0.0, r: 1.0, t1: 0.0, t2: 1.0 };
        let v = local_integral(&f, cyl, 0.5, Selector::Value, 1e-12).unwrap().finite().unwrap();
        let exact = 2.0 * std::f64::consts::PI * ips_constant(m).unwrap();
        assert!((v - exact).abs() < 1e-4 * exact, "{v} vs {exact}");
    }

    #[test]
    fn cutoff_profiles() {
        let c = CutoffFn { r_inner: 0.5, r_outer: 1.0, t_start: 0.0, t_full: 0.5, t_end: 1.0 };
        assert_eq!(c.value(0.2, 0.7), 1.0);
        assert_eq!(c.value(1.2, 0.7), 0.0);
        assert_eq!(c.value(0.2, -0.1), 0.0);
        // Derivative against a central difference.
        let h = 1e-6;
        let fd = (c.radial(0.7 + h).0 - c.radial(0.7 - h).0) / (2.0 * h);
        assert!((fd - c.radial(0.7).1).abs() < 1e-6);
        let fd = (c.temporal(0.3 + h).0 - c.temporal(0.3 - h).0) / (2.0 * h);
        assert!((fd - c.temporal(0.3).1).abs() < 1e-6);
    }

    #[test]
    fn constant_field_inequality_sides() {
        let m = md(2, 1.5);
        let grid = RadialGrid::uniform(2, 0.0, 1.0, 40).unwrap();
        let one = GridField::constant(m, grid, uniform_times(0.0, 1.0, 20), 1.0).unwrap();
        let cut = CutoffFn { r_inner: 0.3, r_outer: 0.8, t_start: 0.0, t_full: 0.5, t_end: 1.0 };
        let c = caccioppoli_sides(&one, cut, 0.3, &SolverConfig::default()).unwrap();
        assert_eq!(c.grad_term, 0.0);
        assert!(c.sup_term > 0.0 && c.rhs > 0.0);
        let s = sobolev_sides(&one, cut, 1.0).unwrap();
        assert!(s.lhs > 0.0 && s.grad_factor > 0.0 && s.sup_factor > 0.0);
        let zero = one.map(|_| 0.0, "zero").unwrap();
        let s = sobolev_sides(&zero, cut, 1.0).unwrap();
        assert_eq!((s.lhs, s.grad_factor, s.sup_factor), (0.0, 0.0, 0.0));
    }
}
