use num_rational::BigRational;
use proptest::prelude::*;
use supercaloric::exponents::{classify_regime, exponent_table, moser_closed_form, moser_sequence, Medium, Regime};

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

fn dist(a: BigRational, b: &BigRational) -> BigRational {
    if &a > b {
        a - b
    } else {
        b - a
    }
}

/// `s_i = s_{i−1}(1 + p/n) − (2 − p)` in exact arithmetic on the binary
/// values of `p` and `s0`.
fn rational_ladder(n: u32, p: f64, s0: f64, len: usize) -> Vec<BigRational> {
    let p = exact(p);
    let n = BigRational::from_integer(n.into());
    let one = BigRational::from_integer(1.into());
    let two = BigRational::from_integer(2.into());
    let growth = &one + &p / &n;
    let shift = &two - &p;
    let mut out = vec![exact(s0)];
    for _ in 1..len {
        let next = out.last().unwrap() * &growth - &shift;
        out.push(next);
    }
    out
}

fn supercritical() -> impl Strategy<Value = (u32, f64)> {
    (1u32..=5).prop_flat_map(|n| {
        let lo = 2.0 * n as f64 / (n as f64 + 1.0);
        (Just(n), (lo + 1e-3)..(2.0 - 1e-3))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ladder_matches_rational_oracle((n, p) in supercritical(), gap in 0.01f64..2.0) {
        let medium = Medium::new(n, p).unwrap();
        let s0 = exponent_table(medium).s_critical + gap;
        let trace = moser_sequence(medium, s0, 64).unwrap();
        let oracle = rational_ladder(n, p, s0, trace.steps.len());
        let tol = exact(1e-12);
        for (i, (s, o)) in trace.steps.iter().zip(&oracle).enumerate() {
            let err = dist(exact(*s), o);
            prop_assert!(err <= tol, "recursion step {i}");
            let err = dist(exact(moser_closed_form(medium, s0, i)), o);
            prop_assert!(err <= tol, "closed form step {i}");
        }
        prop_assert!(trace.closed_form_check <= 1e-12);
        prop_assert!(trace.steps.windows(2).all(|w| w[1] > w[0]));
        let k = trace.first_ge_one.unwrap();
        prop_assert!(trace.steps[k] >= 1.0);
        prop_assert!(trace.steps[..k].iter().all(|&s| s < 1.0));
    }
}

#[test]
fn regime_sweep() {
    for n in 1..=5u32 {
        for i in 1..200 {
            let p = 1.0 + 0.01 * i as f64;
            let t = exponent_table(Medium::new(n, p).unwrap());
            let fast = classify_regime(Medium::new(n, p).unwrap()) == Regime::SupercriticalFast;
            assert_eq!(fast, t.lambda > 0.0 && p < 2.0, "n={n}, p={p}");
        }
    }
}

#[test]
fn class_gap_shrinks_toward_critical_p() {
    for n in 1..=5u32 {
        let lo = 2.0 * n as f64 / (n as f64 + 1.0);
        let mut last = f64::INFINITY;
        for i in (1..100).rev() {
            let p = lo + (2.0 - lo) * i as f64 / 100.0;
            let t = exponent_table(Medium::new(n, p).unwrap());
            let gap = t.q_barenblatt - t.s_critical;
            assert!(gap > 0.0);
            assert!(gap < last, "n={n}, p={p}");
            last = gap;
        }
        assert!(last < 0.05 * n as f64, "gap near the critical p: {last}");
    }
}
