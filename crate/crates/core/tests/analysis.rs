use detcomm::adversary::{error_bound, ForwardingMode};
use detcomm::analysis::{parse_csv, qnd_scan, sweep_strategies, verify_scheme, write_csv, CheckStatus};
use detcomm::SchemeParams;

#[test]
fn sweep_is_independent_of_thread_count() {
    let p = SchemeParams::optimal();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sweep_strategies(&p, 300, ForwardingMode::AsDetected, 17, None).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn empirical_column_tracks_analytic() {
    let p = SchemeParams::simple();
    let (rows, summary) = sweep_strategies(&p, 4, ForwardingMode::AsDetected, 18, Some(40_000)).unwrap();
    assert_eq!(summary.violations, 0);
    for r in &rows {
        let e = r.empirical_rate.unwrap();
        let sigma = (r.analytic_rate * (1.0 - r.analytic_rate) / r.empirical_controls as f64).sqrt();
        assert!((e - r.analytic_rate).abs() < 3.5 * sigma, "{e} vs {}", r.analytic_rate);
    }
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv).unwrap();
    let back = parse_csv(std::str::from_utf8(&csv).unwrap()).unwrap();
    assert_eq!(back[0].empirical_rate, rows[0].empirical_rate);
}

#[test]
fn sweep_summary_for_presets() {
    for p in [SchemeParams::optimal(), SchemeParams::simple()] {
        let (rows, s) = sweep_strategies(&p, 2000, ForwardingMode::AsDetected, 19, None).unwrap();
        assert_eq!(s.n_strategies, 2000);
        assert_eq!(s.violations, 0);
        assert_eq!(s.bound, error_bound(&p));
        assert!(s.min_rate >= s.bound - 1e-9 && s.mean_rate > s.min_rate);
        assert!(rows.iter().enumerate().all(|(i, r)| r.strategy_id == i));
    }
}

#[test]
fn verify_flags_near_edges() {
    let r = verify_scheme(0.0005, 0.6, (1.0f64 - 0.0005 * 0.0005 - 0.36).sqrt());
    assert!(r.passed());
    assert!(r.backdoor.is_none());
    assert_eq!(r.check("near-zero parameter").unwrap().status, CheckStatus::Advisory);
}

#[test]
fn scan_grid_weights_are_exact() {
    for k in [2, 3, 10, 21] {
        let points = qnd_scan(k);
        assert_eq!(points.len(), k * (k + 1) / 2);
        let interior = points.iter().filter(|p| !p.on_edge).count();
        let expected_interior = if k >= 4 { (k - 3) * (k - 2) / 2 } else { 0 };
        assert_eq!(interior, expected_interior);
        assert!(points.iter().all(|p| p.backdoor.is_some() == p.on_edge));
    }
}
