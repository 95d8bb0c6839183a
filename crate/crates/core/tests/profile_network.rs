mod common;

use rowseg::net::{build_network, NetworkConfig, RpemSites};
use rowseg::profile::{count_flops, count_params};

#[test]
fn analytic_params_match_enumeration() {
    for seed in 0..20 {
        let cfg = common::random_network(seed);
        let net = build_network::<f32>(&cfg, seed).unwrap();
        let report = count_params(&cfg).unwrap();
        assert_eq!(report.params(), net.store.count(), "config {cfg:?}");
        for row in &report.rows {
            assert_eq!(row.params, net.store.count_prefix(&format!("{}.", row.name)), "{}", row.name);
        }
    }
}

#[test]
fn baseline_is_smaller_by_the_rpem_blocks() {
    let with = NetworkConfig::tiny();
    let without = NetworkConfig { rpem_sites: RpemSites::NONE, ..with.clone() };
    let a = build_network::<f32>(&with, 0).unwrap();
    let b = build_network::<f32>(&without, 0).unwrap();
    let rpem: usize = a.net.rpems().iter().map(|(_, r)| r.param_count()).sum();
    assert!(b.store.count() < a.store.count());
    assert_eq!(a.store.count() - b.store.count(), rpem);
}

#[test]
fn paper_overhead_is_small_and_positive() {
    let with = NetworkConfig::paper();
    let without = NetworkConfig { rpem_sites: RpemSites::NONE, ..with.clone() };
    let a = count_flops(&with, (536, 960)).unwrap();
    let b = count_flops(&without, (536, 960)).unwrap();
    let ratio = a.flops() as f64 / b.flops() as f64 - 1.0;
    eprintln!(
        "flops {:.3}G -> {:.3}G ({:+.2}%), params {} -> {} ({:+.2}%)",
        b.flops() as f64 / 1e9,
        a.flops() as f64 / 1e9,
        100.0 * ratio,
        b.params(),
        a.params(),
        100.0 * (a.params() as f64 / b.params() as f64 - 1.0)
    );
    assert!(ratio > 0.0 && ratio < 0.10, "overhead {ratio}");
}

#[test]
fn flops_monotone_in_width_and_area() {
    let base = NetworkConfig::tiny();
    let wide = NetworkConfig { base_width: 24, ..base.clone() };
    let f = |c: &NetworkConfig, hw| count_flops(c, hw).unwrap().flops();
    assert!(f(&wide, (64, 96)) > f(&base, (64, 96)));
    assert!(f(&base, (128, 96)) > f(&base, (64, 96)));
}
