use cuisine_nn::suite::run_suite;

#[test]
fn every_op_passes_gradient_check_across_seeds() {
    let mut worst = 0.0f64;
    let mut ops = std::collections::BTreeSet::new();
    for seed in [1u64, 2, 3] {
        for e in run_suite(seed).unwrap() {
            assert!(
                e.report.max_rel_error < 1e-4,
                "{} {} seed {}: {:?}",
                e.op,
                e.shape,
                e.seed,
                e.report
            );
            worst = worst.max(e.report.max_rel_error);
            ops.insert(e.op);
        }
    }
    assert!(ops.len() >= 16, "{ops:?}");
    eprintln!("worst relative error {worst:.3e} over {} ops", ops.len());
}
