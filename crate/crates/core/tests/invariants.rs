use proptest::prelude::*;

use sllm::dynamics::evolve_sector0;
use sllm::model::ModelParams;
use sllm::spectra::{sector_spectrum, sector_union_check};
use sllm::steady_state::{solve_steady, DiagonalState};

fn params() -> impl Strategy<Value = ModelParams> {
    (0.3f64..2.0, 0.0f64..0.04, 0.0f64..0.5, -1.5f64..1.5, 3usize..7)
        .prop_map(|(a, b, eta, omega, n)| ModelParams::new(a, b, 1.0, eta, omega, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sector_union_reproduces_full_spectrum(p in params()) {
        let report = sector_union_check(&p).unwrap();
        prop_assert_eq!(report.full.len(), p.dim() * p.dim());
        prop_assert!(report.max_abs_diff < 1e-8, "{}", report.max_abs_diff);
    }

    #[test]
    fn opposite_sectors_are_conjugate(p in params(), k in 1i64..3) {
        let plus = sector_spectrum(&p, k).unwrap();
        let minus = sector_spectrum(&p, -k).unwrap();
        let mut a: Vec<_> = plus.eigenvalues.iter().map(|z| (z.re, z.im)).collect();
        let mut b: Vec<_> = minus.eigenvalues.iter().map(|z| (z.re, -z.im)).collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.0 - y.0).abs() < 1e-9 && (x.1 - y.1).abs() < 1e-9);
        }
    }

    #[test]
    fn populations_relax_to_the_steady_state(a in 0.6f64..1.6, n_max in 50usize..60) {
        let p = ModelParams::new(a, 0.02, 1.0, 0.0, 1.0, n_max).unwrap();
        let target = solve_steady(&p).unwrap();
        let run = evolve_sector0(&DiagonalState::vacuum(n_max), &p, None, &[0.0, 5.0, 400.0]).unwrap();
        for s in &run {
            prop_assert!((s.state.p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let last = &run.last().unwrap().state;
        for (x, y) in last.p.iter().zip(&target.p) {
            prop_assert!((x - y).abs() < 1e-6, "{} vs {}", x, y);
        }
    }
}
