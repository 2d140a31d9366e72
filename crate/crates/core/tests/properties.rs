use lepra_core::analysis::{
    characteristic_polynomial, cubic_roots, endemic_closed_form, endemic_equilibrium, jacobian,
    reproduction_number,
};
use lepra_core::control::{
    adjoint_derivative, hamiltonian, optimal_controls, AdjointState, ControlBounds, ControlFormula,
    ControlVector, DrugMask, Weights,
};
use lepra_core::effectiveness::{percent_reduction, EfficacyProfile};
use lepra_core::model::{check_positivity, derivative, integrate, ParamName, ParameterSet};
use lepra_core::sensitivity::{
    lhs_sample, prcc, ranks, sobol_index, srcc, ConditionalMean, ParameterRange, SobolInput,
};
use lepra_core::{presets, SimulationConfig, State};
use proptest::prelude::*;

fn table4_draw() -> impl Strategy<Value = ParameterSet> {
    let r = presets::sensitivity_ranges();
    (
        r[0].lo..r[0].hi,
        r[1].lo..r[1].hi,
        r[2].lo..r[2].hi,
        r[3].lo..r[3].hi,
        r[4].lo..r[4].hi,
    )
        .prop_map(|(g, m, d, a, y)| {
            presets::table1()
                .with(ParamName::Gamma, g)
                .with(ParamName::Mu1, m)
                .with(ParamName::Delta, d)
                .with(ParamName::Alpha, a)
                .with(ParamName::Y, y)
        })
}

fn endemic_params() -> impl Strategy<Value = ParameterSet> {
    (
        1.0..30.0f64,
        0.01..0.5f64,
        0.005..0.2f64,
        0.0001..0.01f64,
        0.1..0.5f64,
        0.05..0.5f64,
        0.0..0.5f64,
        0.1..1.0f64,
    )
        .prop_map(|(w, b, g, m1, d, a, y, m2)| ParameterSet::new(w, b, g, m1, d, a, y, m2))
        .prop_filter("R0 > 1", |p| reproduction_number(p).unwrap() > 1.0)
}

fn state() -> impl Strategy<Value = State> {
    (0.1..10.0f64, 0.1..10.0f64, 0.1..10.0f64).prop_map(|(s, i, b)| State::new(s, i, b))
}

fn costate() -> impl Strategy<Value = AdjointState> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b, c)| AdjointState::new(a, b, c))
}

fn controls() -> impl Strategy<Value = ControlVector> {
    prop::array::uniform9(0.0..0.3f64).prop_map(ControlVector::from_array)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn trajectories_stay_nonnegative(p in table4_draw(), s in 0.0..600.0f64, i in 0.0..300.0f64, b in 0.0..300.0f64) {
        let cfg = SimulationConfig::new(0.0, 2.0, 1e-3, State::new(s, i, b));
        let traj = integrate(&p, &cfg).unwrap();
        prop_assert!(check_positivity(&traj).is_clean());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn endemic_point_is_stationary(p in endemic_params()) {
        let e = endemic_equilibrium(&p).unwrap().unwrap();
        prop_assert!(e.s > 0.0 && e.i > 0.0 && e.b > 0.0);
        let r = derivative(&p, e).unwrap();
        let scale = p.omega.max(p.beta * e.s * e.b).max(1.0);
        prop_assert!(r.norm() <= 1e-9 * scale, "{r:?}");
    }

    #[test]
    fn closed_form_matches_threshold(p in endemic_params()) {
        let e = endemic_closed_form(&p).unwrap();
        prop_assert!(e.i > 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences(p in endemic_params(), x in state()) {
        let j = jacobian(&p, x);
        let h = 1e-6;
        for col in 0..3 {
            let mut up = x.to_array();
            let mut dn = x.to_array();
            up[col] += h;
            dn[col] -= h;
            let fu = derivative(&p, State::from_array(up)).unwrap().to_array();
            let fd = derivative(&p, State::from_array(dn)).unwrap().to_array();
            for row in 0..3 {
                let fdv = (fu[row] - fd[row]) / (2.0 * h);
                prop_assert!((j[row][col] - fdv).abs() <= 1e-6 * (1.0 + fdv.abs()));
            }
        }
    }

    #[test]
    fn cubic_roots_match_dense_eigensolver(p in endemic_params(), x in state()) {
        let j = jacobian(&p, x);
        let m = nalgebra::Matrix3::from_fn(|r, c| j[r][c]);
        let want: Vec<num_complex::Complex64> = m.complex_eigenvalues().iter().copied().collect();
        let got = cubic_roots(characteristic_polynomial(&j));
        let scale = 1.0 + want.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for a in &got {
            let gap = want.iter().map(|b| (a - b).norm()).fold(f64::MAX, f64::min);
            prop_assert!(gap <= 1e-6 * scale, "{got:?} vs {want:?}");
        }
        for b in &want {
            let gap = got.iter().map(|a| (a - b).norm()).fold(f64::MAX, f64::min);
            prop_assert!(gap <= 1e-6 * scale, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn adjoint_is_negative_state_gradient(x in state(), u in controls(), lam in costate()) {
        let p = presets::table3();
        let w = Weights::default();
        let rate = adjoint_derivative(&p, x, &u, lam);
        let h = 1e-5;
        for k in 0..3 {
            let mut up = x.to_array();
            let mut dn = x.to_array();
            up[k] += h;
            dn[k] -= h;
            let g = (hamiltonian(&p, State::from_array(up), &u, lam, &w)
                - hamiltonian(&p, State::from_array(dn), &u, lam, &w))
                / (2.0 * h);
            prop_assert!((rate[k] + g).abs() <= 1e-6 * (1.0 + g.abs()), "k={k} rate={} fd={}", rate[k], -g);
        }
    }

    #[test]
    fn interior_controls_are_stationary(x in state(), lam in costate()) {
        let p = presets::table3();
        let w = Weights::default();
        let bounds = ControlBounds::uniform(1e3);
        let u = optimal_controls(x, lam, &w, &bounds, &DrugMask::MDT.with_steroid(), ControlFormula::Stationary);
        let arr = u.to_array();
        let h = 1e-5;
        for k in 0..9 {
            if arr[k] <= 0.0 {
                continue;
            }
            let mut up = arr;
            let mut dn = arr;
            up[k] += h;
            dn[k] -= h;
            let g = (hamiltonian(&p, x, &ControlVector::from_array(up), lam, &w)
                - hamiltonian(&p, x, &ControlVector::from_array(dn), lam, &w))
                / (2.0 * h);
            prop_assert!(g.abs() < 1e-8, "control {k}: dH/du = {g}");
        }
    }

    #[test]
    fn controls_respect_masked_box(x in state(), lam in costate(), m in 0u8..16, cap in 0.0..1.0f64) {
        let mask = DrugMask::new(m & 1 != 0, m & 2 != 0, m & 4 != 0, m & 8 != 0);
        let bounds = ControlBounds::uniform(cap);
        let u = optimal_controls(x, lam, &Weights::default(), &bounds, &mask, ControlFormula::Stationary);
        for (k, v) in u.to_array().into_iter().enumerate() {
            prop_assert!((0.0..=cap).contains(&v));
            if !mask.enables(k) {
                prop_assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn treatment_never_raises_r0(rho in 0.0..0.99f64, eps in 0.0..0.99f64, c in 0.0..0.99f64, m in 0u8..8) {
        let p = presets::table3();
        let mask = DrugMask::new(m & 1 != 0, m & 2 != 0, m & 4 != 0, false);
        let prof = EfficacyProfile::new(rho, eps, c).unwrap();
        let pct = percent_reduction(&p, &prof, &mask).unwrap();
        prop_assert!((0.0..100.0).contains(&pct));
        let more = EfficacyProfile::new((rho + 0.005).min(0.995), eps, c).unwrap();
        prop_assert!(percent_reduction(&p, &more, &mask).unwrap() >= pct);
    }

    #[test]
    fn reductions_compose_without_clofazimine(rho in 0.0..0.99f64, eps in 0.0..0.99f64) {
        let p = presets::table3();
        let prof = EfficacyProfile::new(rho, eps, 0.3).unwrap();
        let r = percent_reduction(&p, &prof, &DrugMask::new(true, false, false, false)).unwrap();
        let d = percent_reduction(&p, &prof, &DrugMask::new(false, true, false, false)).unwrap();
        let both = percent_reduction(&p, &prof, &DrugMask::new(true, true, false, false)).unwrap();
        let composed = 100.0 * (1.0 - (1.0 - r / 100.0) * (1.0 - d / 100.0));
        prop_assert!((both - composed).abs() < 1e-9);
    }

    #[test]
    fn lhs_strata_are_all_hit(n in 2usize..300, seed in any::<u64>(), lo in 0.0..5.0f64, w in 0.1..5.0f64) {
        let r = ParameterRange::new(ParamName::Beta, lo, lo + w).unwrap();
        let m = lhs_sample(&[r, r], n, seed).unwrap();
        for j in 0..2 {
            let mut seen = vec![false; n];
            for v in m.column(j) {
                prop_assert!((r.lo..=r.hi).contains(&v));
                let s = (((v - r.lo) / r.width()) * n as f64).floor() as usize;
                seen[s.min(n - 1)] = true;
            }
            prop_assert!(seen.into_iter().all(|h| h));
        }
    }

    #[test]
    fn rank_correlations_ignore_monotone_transforms(
        x in prop::collection::vec(0.01..10.0f64, 12..60),
        noise in prop::collection::vec(-1.0..1.0f64, 60),
        z in prop::collection::vec(0.0..1.0f64, 60),
    ) {
        let n = x.len();
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, e)| a + 3.0 * e).collect();
        let z = z[..n].to_vec();
        prop_assume!(ranks(&y).windows(2).any(|w| w[0] != w[1]));
        let tx: Vec<f64> = x.iter().map(|v| v.ln() * 2.0 + 7.0).collect();
        let a = srcc(&x, &y).unwrap();
        let b = srcc(&tx, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() < 1e-12);
        if let (Ok(p1), Ok(p2)) = (prcc(&[x.clone(), z.clone()], &y, 0), prcc(&[tx, z.iter().map(|v| v.powi(3)).collect()], &y, 0)) {
            prop_assert!((p1 - p2).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&p1));
        }
    }

    #[test]
    fn sobol_index_is_a_correlation(seed in any::<u64>(), k in 0.0..5.0f64) {
        let r = ParameterRange::new(ParamName::Alpha, 0.0, 1.0).unwrap();
        let m = lhs_sample(&[r, r], 200, seed).unwrap();
        let (x, z) = (m.column(0), m.column(1));
        let y: Vec<f64> = x.iter().zip(&z).map(|(a, b)| (k * a).sin() + b).collect();
        for mode in [ConditionalMean::LeaveOneOut, ConditionalMean::InSample] {
            let s = sobol_index(SobolInput::Single(&x), &y, 10, mode).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
            let s = sobol_index(SobolInput::Pair(&x, &z), &y, 3, mode).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}
