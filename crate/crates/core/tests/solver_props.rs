use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use supercaloric::closed_form::{normalized_barenblatt, SolutionFamily};
use supercaloric::exponents::Medium;
use supercaloric::grid::{uniform_times, GridField, RadialGrid};
use supercaloric::solver::{compare, residual_sign, solve, CellClass, DirichletData, SolverConfig};

fn md(n: u32, p: f64) -> Medium {
    Medium::new(n, p).unwrap()
}

fn run(medium: Medium, grid: &RadialGrid, times: &[f64], data: impl Fn(f64, f64) -> f64, cfg: &SolverConfig) -> GridField {
    let initial: Vec<f64> = grid.nodes().iter().map(|&r| data(r, times[0])).collect();
    let boundary = DirichletData::from_fn(grid, times, &data);
    solve(medium, grid, times, &initial, &boundary, cfg).unwrap().field
}

/// Smooth data `a + b r² + c r sin(ωt + φ)` with random coefficients.
fn random_data(rng: &mut StdRng) -> impl Fn(f64, f64) -> f64 {
    let a = rng.random_range(-1.0..1.0);
    let b = rng.random_range(-2.0..2.0);
    let c = rng.random_range(-1.0..1.0);
    let w = rng.random_range(1.0..20.0);
    let phi = rng.random_range(0.0..6.0);
    move |r: f64, t: f64| a + b * r * r + c * r * (w * t + phi).sin()
}

struct Setup {
    medium: Medium,
    grid: RadialGrid,
    times: Vec<f64>,
}

fn random_setup(rng: &mut StdRng) -> Setup {
    let n = rng.random_range(1..=3u32);
    let lo = 2.0 * n as f64 / (n as f64 + 1.0);
    let p = rng.random_range(lo + 0.05..1.95);
    let r_min = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.05..0.3) };
    let intervals = rng.random_range(16..40);
    Setup {
        medium: md(n, p),
        grid: RadialGrid::uniform(n, r_min, 1.0, intervals).unwrap(),
        times: uniform_times(0.0, rng.random_range(0.02..0.2), rng.random_range(6..20)),
    }
}

#[test]
fn ordered_data_gives_ordered_solutions() {
    let mut rng = StdRng::seed_from_u64(11);
    let cfg = SolverConfig::default();
    for case in 0..50 {
        let s = random_setup(&mut rng);
        let g = random_data(&mut rng);
        let d0 = if case % 5 == 0 { 0.0 } else { rng.random_range(0.0..1.0) };
        let d1 = rng.random_range(0.0..1.0);
        let u = run(s.medium, &s.grid, &s.times, &g, &cfg);
        let v = run(s.medium, &s.grid, &s.times, |r, t| g(r, t) + d0 + d1 * r * r * (1.0 + t), &cfg);
        let rep = compare(&u, &v, 10.0 * cfg.picard_tol).unwrap();
        assert!(rep.boundary_ordered, "case {case}");
        assert!(rep.interior_ordered, "case {case}: violation {}", rep.max_violation);
        assert!(rep.max_violation < 10.0 * cfg.picard_tol);
    }
}

#[test]
fn min_of_solutions_is_a_supersolution() {
    let mut rng = StdRng::seed_from_u64(12);
    let cfg = SolverConfig::default();
    for case in 0..20 {
        let s = random_setup(&mut rng);
        let u = run(s.medium, &s.grid, &s.times, random_data(&mut rng), &cfg);
        let v = run(s.medium, &s.grid, &s.times, random_data(&mut rng), &cfg);
        let (mu, mv) = (residual_sign(&u, &cfg), residual_sign(&v, &cfg));
        let w = u.pointwise_min(&v).unwrap();
        let mw = residual_sign(&w, &cfg);
        for k in 1..s.times.len() {
            for j in 0..s.grid.len() {
                let ok = |c: Option<CellClass>| matches!(c, Some(CellClass::Solution | CellClass::Supersolution));
                if ok(mu.class(k, j)) && ok(mv.class(k, j)) {
                    assert!(ok(mw.class(k, j)), "case {case}, cell ({k}, {j}): {:?}", mw.class(k, j));
                }
            }
        }
    }
}

#[test]
fn truncations_stay_supersolutions() {
    let medium = md(2, 1.5);
    let family = SolutionFamily::infinite_point_source(medium).unwrap();
    let grid = RadialGrid::uniform(2, 0.05, 1.0, 60).unwrap();
    let times = uniform_times(0.5, 1.0, 30);
    let cfg = SolverConfig::default();
    let u = run(medium, &grid, &times, |r, t| family.value(r, t).finite().unwrap(), &cfg);
    let base = residual_sign(&u, &cfg);
    assert!(base.is_supersolution());

    let top = u.max_abs();
    let mut last: Option<GridField> = None;
    for level in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 2.0 * top] {
        let w = u.truncate(level);
        if let Some(prev) = &last {
            assert!(compare(prev, &w, 0.0).unwrap().interior_ordered);
        }
        let m = residual_sign(&w, &cfg);
        assert!(m.is_supersolution(), "level {level}");
        // Away from the truncation the stencil sees the untruncated field.
        for k in 1..times.len() {
            for j in 1..grid.last() {
                let below = [(k, j), (k - 1, j), (k, j - 1), (k, j + 1)].iter().all(|&(a, b)| u.at(a, b) < level);
                if below {
                    assert_eq!(m.class(k, j), base.class(k, j), "level {level}, cell ({k}, {j})");
                }
            }
        }
        last = Some(w);
    }
    assert_eq!(last.unwrap().values(), u.values());
}

#[test]
fn sampled_barenblatt_is_a_solution_on_fine_grids() {
    let family = normalized_barenblatt(md(2, 1.5)).unwrap();
    let grid = RadialGrid::uniform(2, 0.0, 4.0, 800).unwrap();
    let field = GridField::sample(&family, grid, uniform_times(0.5, 1.0, 25_600), None).unwrap();
    let m = residual_sign(&field, &SolverConfig::default());
    assert!(m.fraction(CellClass::Solution) >= 0.99, "{}", m.fraction(CellClass::Solution));
}

#[test]
fn sampled_power_supersolution_classes() {
    let medium = md(2, 1.5);
    let family = SolutionFamily::power_canonical(medium, 2.0).unwrap();
    let grid = RadialGrid::uniform(2, 0.1, 1.0, 90).unwrap();
    let field = GridField::sample(&family, grid, uniform_times(0.5, 1.0, 400), None).unwrap();
    let cfg = SolverConfig::default();
    assert!(residual_sign(&field, &cfg).is_supersolution());
    let negated = field.map(|v| -v, "negated").unwrap();
    assert!(residual_sign(&negated, &cfg).is_subsolution());
}
