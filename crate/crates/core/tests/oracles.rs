mod common;

use common::*;
use rowseg::losses::{self, boundary_gt, BoundaryMode, LabelMap};

#[test]
fn conv_matches_direct_loops() {
    let worst = (0..120).map(conv_case).fold(0.0, f64::max);
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}

#[test]
fn losses_match_direct_loops() {
    for seed in 0..150 {
        let d = loss_deviations(seed);
        assert!(d.iter().all(|&v| v <= 1e-9), "case {seed}: {d:?}");
    }
}

#[test]
fn standalone_terms_agree_with_the_breakdown() {
    for seed in 0..30 {
        let c = loss_case(seed);
        let b_gt = boundary_gt(&c.gt, BoundaryMode::Transition, 1);
        let parts = losses::total_loss(&c.s0, &c.s1, &c.bz, &c.gt, &b_gt, &c.cfg).unwrap();
        assert_eq!(losses::s_loss(&c.s0, &c.s1, &c.gt, &c.cfg).unwrap(), parts.s);
        assert_eq!(losses::bas_loss(&c.s1, &c.bz, &c.gt, &c.cfg).unwrap(), parts.bas);
        assert_eq!(parts.total, (parts.s + parts.bas) + parts.b);
    }
}

#[test]
fn boundary_loss_without_labels_uses_every_pixel() {
    for seed in 0..20 {
        let c = loss_case(seed);
        let b_gt = boundary_gt(&c.gt, BoundaryMode::Transition, 1);
        let everything = LabelMap::filled(c.gt.batch(), c.gt.height(), c.gt.width(), 0);
        let want = bce_oracle(&c.bz, b_gt.data(), &everything, c.cfg.clip_eps);
        let got = losses::b_loss(&c.bz, &b_gt, &c.cfg).unwrap();
        assert!((got - want).abs() <= 1e-9, "case {seed}");
    }
}

#[test]
fn confusion_matches_tally() {
    for seed in 0..200 {
        assert!(confusion_case(seed), "case {seed}");
    }
}

#[test]
fn report_matches_closed_forms_and_orders() {
    for seed in 0..1000 {
        let r = report_case(seed);
        assert!(r.exact && r.ordered, "case {seed}");
    }
}
