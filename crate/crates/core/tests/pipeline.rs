use msol_core::evolution::{doss_sussman, doss_sussman_inverse};
use msol_core::harness::{partition_error, run_backward_construction, NoiseKind, RunConfig, RunOptions};
use msol_core::soliton::soliton_sum;
use msol_core::spectral::l2_norm;
use proptest::prelude::*;

fn small(case: NoiseKind) -> RunConfig {
    let mut cfg = RunConfig::headline(case);
    cfg.grid.n = 512;
    cfg.grid.half_extent = 32.0;
    cfg.horizons = vec![4.0, 6.0];
    cfg.seeds = vec![3];
    cfg
}

#[test]
fn backward_construction_of_a_quiet_pair() {
    let cfg = small(NoiseKind::None);
    let opts = RunOptions {
        jobs: 1,
        output: None,
        plots: false,
    };
    let set = run_backward_construction(&cfg, &opts).unwrap();
    assert_eq!(set.records.len(), 2);
    for rec in &set.records {
        assert!(rec.status.is_success(), "{:?}", rec.status);
        assert!(partition_error(&rec.diagnostics) < 1e-12);
        // the remainder starts at zero and grows only through the overlap
        let last = rec.diagnostics.iter().max_by(|a, b| a.t.total_cmp(&b.t)).unwrap();
        let first = rec.diagnostics.iter().min_by(|a, b| a.t.total_cmp(&b.t)).unwrap();
        assert!(last.eps_h1 < 1e-8 && first.eps_h1 < 0.05, "{} {}", first.eps_h1, last.eps_h1);
    }
    assert_eq!(set.config_hash, cfg.hash());
}

#[test]
fn noisy_construction_nearly_keeps_the_mass_of_the_target() {
    let cfg = small(NoiseKind::Exponential);
    let opts = RunOptions {
        jobs: 2,
        output: None,
        plots: false,
    };
    let set = run_backward_construction(&cfg, &opts).unwrap();
    let target = {
        let grid = cfg.make_grid().unwrap();
        l2_norm(&soliton_sum(&cfg.profile().unwrap(), &cfg.specs().unwrap(), 6.0, &grid)).powi(2)
    };
    for rec in set.records.iter().filter(|r| r.status.is_success()) {
        for d in &rec.diagnostics {
            assert!((d.mass - target).abs() < 1e-4 * target, "{} vs {target}", d.mass);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn transforms_invert_and_keep_the_modulus(seed in 0u64..1000, step in 0usize..3000) {
        let mut cfg = small(NoiseKind::Polynomial);
        cfg.grid.n = 128;
        let grid = cfg.make_grid().unwrap();
        let model = cfg.noise_model(&grid, seed).unwrap().unwrap();
        let x = soliton_sum(&cfg.profile().unwrap(), &cfg.specs().unwrap(), 0.0, &grid);
        let w = model.assemble_w(step as f64 * cfg.dt).unwrap();
        let v = doss_sussman(&x, &w).unwrap();
        let back = doss_sussman_inverse(&v, &w).unwrap();
        prop_assert!(l2_norm(&back.sub(&x).unwrap()) < 1e-13);
        for (a, b) in x.values().iter().zip(v.values()) {
            prop_assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
    }
}
