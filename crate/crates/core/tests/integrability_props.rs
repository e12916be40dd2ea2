use supercaloric::closed_form::{normalized_barenblatt, SolutionFamily};
use supercaloric::exponents::{exponent_table, moser_sequence, Medium};
use supercaloric::grid::{uniform_times, RadialGrid};
use supercaloric::integrability::{
    caccioppoli_sides, classify, integral_scan, sobolev_sides, truncated_point_source, ClassVerdict, CutoffFn, Cylinder,
    ProbeRegion, Selector, Verdict,
};
use supercaloric::solver::SolverConfig;
use supercaloric::source::Evaluable;

const LEVELS: usize = 40;

fn md() -> Medium {
    Medium::new(2, 1.5).unwrap()
}

fn cyl(t1: f64, t2: f64) -> Cylinder {
    Cylinder {
        x0_radius: 0.0,
        r: 1.0,
        t1,
        t2,
    }
}

fn sources() -> Vec<(SolutionFamily, Cylinder)> {
    let m = md();
    vec![
        (SolutionFamily::infinite_point_source(m).unwrap(), cyl(0.0, 1.0)),
        (normalized_barenblatt(m).unwrap().zero_extended(), cyl(-1.0, 1.0)),
        (SolutionFamily::power_canonical(m, 1.8).unwrap(), cyl(0.0, 1.0)),
        (SolutionFamily::power_canonical(m, 2.5).unwrap(), cyl(0.0, 1.0)),
    ]
}

#[test]
fn convergence_is_monotone_in_q() {
    let qs: Vec<f64> = (1..=30).map(|i| 0.1 * i as f64).collect();
    for (source, c) in sources() {
        for sel in [Selector::Value, Selector::Gradient] {
            let verdicts: Vec<Verdict> = qs
                .iter()
                .map(|&q| integral_scan(&source, c, q, sel, LEVELS).unwrap().verdict)
                .collect();
            if let Some(last) = verdicts.iter().rposition(|v| *v == Verdict::Convergent) {
                assert!(
                    verdicts[..last].iter().all(|v| *v == Verdict::Convergent),
                    "{} {sel:?}: {verdicts:?}",
                    source.describe()
                );
            }
        }
    }
}

#[test]
fn moser_ladder_is_realized_on_the_barenblatt_example() {
    let m = md();
    let source = normalized_barenblatt(m).unwrap().zero_extended();
    let q_b = exponent_table(m).q_barenblatt;
    let trace = moser_sequence(m, 0.7, 64).unwrap();
    let rungs: Vec<f64> = trace.steps.iter().copied().filter(|&s| s < q_b).collect();
    assert!(rungs.len() >= 5);
    for s in rungs {
        let scan = integral_scan(&source, cyl(-1.0, 1.0), s, Selector::Value, LEVELS).unwrap();
        // Rungs just below the endpoint decay too slowly for a Convergent
        // verdict; finiteness shows as a tail ratio below one.
        assert_ne!(scan.verdict, Verdict::Divergent, "rung {s}");
        assert!(scan.increment_ratio < 1.0 && scan.decay_exponent() > 0.0, "rung {s}: ratio {}", scan.increment_ratio);
        assert!(scan.last_value().finite().is_some());
        if q_b - s > 0.1 {
            assert_eq!(scan.verdict, Verdict::Convergent, "rung {s}");
        }
    }
}

#[test]
fn gradient_endpoint_on_barenblatt() {
    let source = normalized_barenblatt(md()).unwrap().zero_extended();
    let at = |q: f64| integral_scan(&source, cyl(-1.0, 1.0), q, Selector::Gradient, LEVELS).unwrap().verdict;
    assert_eq!(at(0.8), Verdict::Convergent);
    assert!(matches!(at(5.0 / 6.0), Verdict::Divergent | Verdict::Borderline));
}

#[test]
fn classification_evidence_is_never_double_counted() {
    let m = md();
    let cases = [
        (normalized_barenblatt(m).unwrap().zero_extended(), ProbeRegion::new(0.0, 1.0, -1.0, 1.0)),
        (SolutionFamily::infinite_point_source(m).unwrap().zero_extended(), ProbeRegion::new(0.0, 1.0, -1.0, 1.0)),
        (SolutionFamily::infinite_point_source(m).unwrap(), ProbeRegion::new(0.0, 1.0, 0.0, 1.0)),
        (SolutionFamily::power_canonical(m, 1.8).unwrap(), ProbeRegion::new(0.0, 1.0, 0.0, 1.0)),
        (SolutionFamily::power_canonical(m, 2.5).unwrap(), ProbeRegion::new(0.0, 1.0, 0.0, 1.0)),
        (normalized_barenblatt(m).unwrap(), ProbeRegion::new(0.0, 1.0, 0.5, 1.5)),
    ];
    for (source, probe) in cases {
        let rep = classify(&source, probe).unwrap();
        let e = &rep.evidence;
        match rep.verdict {
            ClassVerdict::ClassB => assert!(e.b_evidence && !e.m_evidence),
            ClassVerdict::ClassM => assert!(e.m_evidence && !e.b_evidence),
            ClassVerdict::Undetermined => assert_eq!(e.b_evidence, e.m_evidence),
        }
    }
}

#[test]
fn inequality_constants_are_grid_stable() {
    let m = md();
    let cutoff = CutoffFn {
        r_inner: 0.5,
        r_outer: 1.0,
        t_start: 0.5,
        t_full: 0.75,
        t_end: 1.0,
    };
    let cfg = SolverConfig::default();
    let mut cacc = Vec::new();
    let mut sob = Vec::new();
    for j in [80usize, 160] {
        let grid = RadialGrid::uniform(2, 0.0, 2.0, j).unwrap();
        let field = truncated_point_source(m, &grid, j / 20, &uniform_times(0.5, 1.0, j / 2), 10.0, &cfg).unwrap();
        cacc.push(caccioppoli_sides(&field, cutoff, 0.3, &cfg).unwrap().ratio);
        sob.push(sobolev_sides(&field, cutoff, 1.0).unwrap().ratio);
    }
    for pair in [&cacc, &sob] {
        assert!(pair.iter().all(|&v| v.is_finite() && v > 0.0), "{pair:?}");
        assert!((pair[1] / pair[0] - 1.0).abs() <= 0.2, "{pair:?}");
    }
}
