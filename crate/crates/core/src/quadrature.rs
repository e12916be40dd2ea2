//! Gauss–Legendre panels and radial/angular rules for balls in `ℝⁿ`.

use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

/// Reference nodes/weights on `[-1, 1]`.
#[derive(Debug)]
pub struct Rule {
    pairs: Vec<(f64, f64)>,
}

impl Rule {
    fn new(degree: usize) -> Self {
        let gl = GaussLegendre::new(NonZeroUsize::new(degree).expect("degree > 0"));
        Self {
            pairs: gl.as_node_weight_pairs().to_vec(),
        }
    }

    /// Mapped `(node, weight)` pairs on `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.pairs.iter().map(move |&(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Cached rules for the few degrees used across the crate.
pub fn gauss(degree: usize) -> &'static Rule {
    static R8: OnceLock<Rule> = OnceLock::new();
    static R16: OnceLock<Rule> = OnceLock::new();
    static R24: OnceLock<Rule> = OnceLock::new();
    static R32: OnceLock<Rule> = OnceLock::new();
    let cell = match degree {
        8 => &R8,
        16 => &R16,
        24 => &R24,
        32 => &R32,
        _ => panic!("unsupported Gauss–Legendre degree {degree}"),
    };
    cell.get_or_init(|| Rule::new(degree))
}

/// Panels `[a_k, b_k]` covering `[lo, hi]`, geometrically graded toward `lo`.
///
/// The innermost panel is `[lo, lo + (hi−lo)·ratio^{-levels}]`.
pub fn graded_panels(lo: f64, hi: f64, ratio: f64, levels: usize) -> Vec<(f64, f64)> {
    let len = hi - lo;
    let mut cuts: Vec<f64> = (0..=levels).map(|k| lo + len * ratio.powi(-(k as i32))).collect();
    cuts.reverse();
    let mut panels = vec![(lo, cuts[0])];
    panels.extend(cuts.windows(2).map(|w| (w[0], w[1])));
    panels
}

/// Panels graded toward both ends of `[lo, hi]`.
pub fn doubly_graded_panels(lo: f64, hi: f64, ratio: f64, levels: usize) -> Vec<(f64, f64)> {
    let mid = 0.5 * (lo + hi);
    let mut panels = graded_panels(lo, mid, ratio, levels);
    let upper: Vec<(f64, f64)> = graded_panels(0.0, hi - mid, ratio, levels)
        .into_iter()
        .rev()
        .map(|(a, b)| (hi - b, hi - a))
        .collect();
    panels.extend(upper);
    panels
}

/// `Γ(n/2)` for integer `n ≥ 1`.
fn gamma_half(n: u32) -> f64 {
    let (mut x, mut g) = if n % 2 == 0 { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    while x < 0.5 * f64::from(n) - 1e-12 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Surface area `ω_{n−1}` of the unit sphere in `ℝⁿ` (`ω_0 = 2`).
pub fn unit_sphere_area(n: u32) -> f64 {
    2.0 * PI.powf(0.5 * f64::from(n)) / gamma_half(n)
}

/// Volume of the ball of radius `r` in `ℝⁿ`.
pub fn ball_volume(n: u32, r: f64) -> f64 {
    unit_sphere_area(n) * r.powi(n as i32) / f64::from(n)
}

/// Directions for integrating a radial function over spheres centred at
/// `x0·e₁`: pairs `(cos θ, weight)` whose weights sum to `ω_{n−1}`.
pub fn sphere_directions(n: u32, x0: f64, angular_degree: usize) -> Vec<(f64, f64)> {
    if n == 1 {
        return vec![(1.0, 1.0), (-1.0, 1.0)];
    }
    if x0 == 0.0 {
        return vec![(1.0, unit_sphere_area(n))];
    }
    let omega = unit_sphere_area(n - 1);
    gauss(angular_degree)
        .on(0.0, PI)
        .map(|(theta, w)| (theta.cos(), omega * theta.sin().powi(n as i32 - 2) * w))
        .collect()
}

/// Distance from the origin of the point at distance `d` from `x0·e₁` in
/// direction with polar cosine `cos_theta`.
pub fn radius_from_center(x0: f64, d: f64, cos_theta: f64) -> f64 {
    (x0 * x0 + d * d + 2.0 * x0 * d * cos_theta).max(0.0).sqrt()
}

/// Weighted mean computed around a reference sample, so that a constant
/// integrand reproduces its value exactly.
pub fn weighted_mean(samples: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let mut iter = samples.into_iter();
    let (first_v, first_w) = iter.next()?;
    let mut wsum = first_w;
    let mut dev = 0.0;
    for (v, w) in iter {
        dev += w * (v - first_v);
        wsum += w;
    }
    Some(first_v + dev / wsum)
}
