use std::collections::BTreeMap;

use proptest::prelude::*;

use orns_core::certifier;
use orns_core::fourier;
use orns_core::generators;
use orns_core::routing::{self, LoadMode};
use orns_core::{parse_schedule, serialize_schedule, DemandSpec, Direction, Schedule, ShiftSchedule, SprayConfig};

fn schedule() -> impl Strategy<Value = ShiftSchedule> {
    (2usize..20).prop_flat_map(|n| {
        proptest::collection::vec(0..n as u32, 1..120).prop_map(move |s| ShiftSchedule::new(n, s).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn file_format_round_trips(s in schedule()) {
        let text = serialize_schedule(&Schedule::Shift(s.clone()));
        prop_assert_eq!(parse_schedule(&text).unwrap(), Schedule::Shift(s));
    }

    #[test]
    fn certifier_norms_match_spray_vectors(s in schedule(), h in 1usize..4, lambda in 1usize..12) {
        prop_assume!(h * lambda <= s.period());
        let rep = certifier::certify(&s, 0.5, &[h], &BTreeMap::from([(h, lambda)])).unwrap();
        let fwd = SprayConfig::for_schedule(h, lambda, Direction::Forward, s.period()).unwrap();
        let bwd = SprayConfig { direction: Direction::Backward, ..fwd };
        for r in &rep.records {
            let p = fourier::two_norm(&fourier::spray_fourier_star(&s, &fwd, r.t).unwrap());
            let q = fourier::two_norm(&fourier::spray_fourier_star(&s, &bwd, r.t).unwrap());
            prop_assert!((r.norm_p - p).abs() < 1e-9, "{} vs {}", r.norm_p, p);
            prop_assert!((r.norm_q - q).abs() < 1e-9, "{} vs {}", r.norm_q, q);
            prop_assert_eq!(r.pass, r.norm_p.max(r.norm_q) <= 0.25 + rep.slack);
        }
    }

    #[test]
    fn tv_never_exceeds_starred_norm(s in schedule(), h in 1usize..4, lambda in 1usize..12, t in 0u64..500) {
        prop_assume!(h * lambda <= s.period());
        let mut cfg = SprayConfig::for_schedule(h, lambda, Direction::Forward, s.period()).unwrap();
        cfg.start_set = orns_core::StartSet::All;
        let tv = fourier::tv_to_uniform(&fourier::spray_distribution(&s, &cfg, t).unwrap());
        let norm = fourier::two_norm(&fourier::spray_fourier_star(&s, &cfg, t).unwrap());
        prop_assert!(tv <= norm + 1e-12);
    }

    #[test]
    fn loads_scale_linearly_with_rate(seed in 0u64..1000, h in 1usize..3) {
        let s = generators::gen_random(8, 48, seed).unwrap();
        let lambda = 48 / (2 * h);
        let p = routing::build_spray(&s, h, lambda).unwrap();
        prop_assume!(p.eta > 0.0);
        let a = routing::edge_loads(&p, &DemandSpec::random(8, 0.1, seed).unwrap(), LoadMode::CertifiedSum).unwrap();
        let b = routing::edge_loads(&p, &DemandSpec::random(8, 0.3, seed).unwrap(), LoadMode::CertifiedSum).unwrap();
        for (x, y) in a.loads().iter().zip(b.loads()) {
            prop_assert!((3.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn generators_are_seed_deterministic(seed in any::<u64>()) {
        prop_assert_eq!(generators::gen_random(16, 64, seed).unwrap(), generators::gen_random(16, 64, seed).unwrap());
    }
}

#[test]
fn convolution_schedule_certifies_at_digit_phases() {
    let base = generators::gen_base_certified(16, 64, 2, 0.9, 4, 500).unwrap();
    let s = generators::gen_convolution(&base.schedule, 2, 1 << 20).unwrap();
    assert_eq!(s.period(), 4096);
    let rep = certifier::certify(&s, 0.9, &[1, 2], &BTreeMap::from([(1, 4096), (2, 64)])).unwrap();
    let bound = base.cert.norm.powi(2);
    for sm in &rep.summaries {
        assert!(sm.max_norm_p <= bound * (1.0 + 1e-9), "h={} {} > {bound}", sm.h, sm.max_norm_p);
    }
    assert!(rep.universal);
}

#[test]
fn derand_schedule_is_a_permutation_of_shifts() {
    let (s, tree) = generators::gen_derand(6, 0.5).unwrap();
    let mut shifts = s.shifts().to_vec();
    shifts.sort_unstable();
    assert_eq!(shifts, (0..64).collect::<Vec<u32>>());
    assert_eq!(tree.levels.len(), 7);
    // a single full phase over all shifts is exactly uniform
    let rep = certifier::certify(&s, 0.5, &[1], &BTreeMap::from([(1, 64)])).unwrap();
    assert_eq!(rep.records[0].norm_p, 0.0);
}
