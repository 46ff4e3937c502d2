use std::fs;
use std::path::PathBuf;

use enslab::functionals::{EnergyLedger, LedgerRow};
use enslab::io::{self, decode_checkpoint, encode_checkpoint, parse_config, parse_ledger};
use enslab::solver::{self, Simulation};
use enslab::state::{Generator, Scheme};
use enslab::{Field, FluidState, Grid, InitialData, RunConfig};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
    ]
}

fn noisy_config(t_end: f64) -> RunConfig {
    let mut init = InitialData::new(Generator::ProjectedBandlimitedNoise);
    init.rho_background = 1.0;
    init.amplitude = 0.1;
    init.u_amplitude = 0.1;
    init.w_amplitude = 0.1;
    init.seed = 5;
    let mut c = RunConfig::new(8, 0.01, t_end, init);
    c.box_len = 2.0 * std::f64::consts::PI;
    c.cadence = 5;
    c
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn config_round_trips(
        n in prop::sample::select(vec![8usize, 12, 16, 64]),
        box_len in 0.1f64..100.0,
        steps in 1usize..50,
        dt in 1e-4f64..0.1,
        conservative in any::<bool>(),
        four in any::<bool>(),
        cfl in 0.01f64..2.0,
        seed in any::<u64>(),
        amps in prop::array::uniform4(finite()),
        means in prop::array::uniform6(-10.0f64..10.0),
        besov in any::<bool>(),
    ) {
        let mut c = RunConfig::new(n, dt, dt * steps as f64, InitialData::new(Generator::GaussianBumpDensity));
        prop_assume!(c.steps().is_ok_and(|s| s == steps));
        c.box_len = box_len;
        c.cadence = 1;
        c.scheme = if conservative { Scheme::Conservative } else { Scheme::Nonconservative };
        c.order = if four { 4 } else { 2 };
        c.cfl = cfl;
        c.init.seed = seed;
        c.init.amplitude = amps[0];
        c.init.sigma = amps[1];
        c.init.u_amplitude = amps[2];
        c.init.w_amplitude = amps[3];
        c.init.w_mean = [means[0], means[1], means[2]];
        c.init.u_mean = [means[3], means[4], means[5]];
        c.monitor.besov = besov;
        let text = io::emit_config(&c);
        prop_assert_eq!(parse_config(&text).unwrap(), c);
    }

    #[test]
    fn ledger_round_trips(rows in prop::collection::vec(prop::array::uniform22(finite()), 0..20)) {
        let mut ledger = EnergyLedger::new();
        for (i, r) in rows.iter().enumerate() {
            let mut v = [0.0; 23];
            v[0] = i as f64 * 0.1;
            v[1..].copy_from_slice(r);
            ledger.push(LedgerRow::from_values(&v)).unwrap();
        }
        let back = parse_ledger(&io::ledger_to_csv(&ledger)).unwrap();
        for (a, b) in back.rows().iter().zip(ledger.rows()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        prop_assert_eq!(back.len(), ledger.len());
    }

    #[test]
    fn checkpoint_round_trips_and_truncation_fails(
        values in prop::collection::vec(-1e3f64..1e3, 7 * 512),
        time in prop_oneof![0.0f64..1e6, Just(0.0), Just(f64::MAX)],
        cut in 0usize..(48 + 7 * 512 * 8),
    ) {
        let g = Grid::new(8, 3.0).unwrap();
        let mut chunks = values.chunks(512).map(<[f64]>::to_vec);
        let rho = Field::new(&g, vec![chunks.next().unwrap()]).unwrap();
        let w = Field::new(&g, chunks.by_ref().take(3).collect()).unwrap();
        let u = Field::new(&g, chunks.collect()).unwrap();
        let state = FluidState::new(time, rho, w, u).unwrap();
        let bytes = encode_checkpoint(&state, Scheme::Nonconservative);
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert!(back.state.bit_eq(&state));
        prop_assert!(decode_checkpoint(&bytes[..cut]).is_err());
    }
}

#[test]
fn thousand_row_ledger_is_bit_identical() {
    let mut ledger = EnergyLedger::new();
    let mut x: f64 = 0.7;
    for i in 0..1000 {
        let mut v = [0.0; 23];
        v[0] = i as f64 * 1e-3;
        for c in v.iter_mut().skip(1) {
            x = (x * 3.9 * (1.0 - x)).abs();
            *c = x * 10f64.powi((i % 41) - 20);
        }
        ledger.push(LedgerRow::from_values(&v)).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.csv");
    io::write_ledger(&ledger, &path).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 1001);
    let back = io::read_ledger(&path).unwrap();
    for (a, b) in back.rows().iter().zip(ledger.rows()) {
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn resume_is_bit_exact() {
    for scheme in [Scheme::Nonconservative, Scheme::Conservative] {
        let mut config = noisy_config(0.2);
        config.scheme = scheme;
        let full = solver::run(&config).unwrap();

        let mut sim = Simulation::new(&config).unwrap();
        for _ in 0..10 {
            sim.advance().unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mid.bin");
        io::write_checkpoint(sim.state(), scheme, &path).unwrap();
        drop(sim);
        let ckpt = io::read_checkpoint(&path).unwrap();
        assert_eq!(ckpt.scheme, scheme);
        let resumed = Simulation::resume(&config, ckpt.state).unwrap().run_to_end().unwrap();
        assert!(resumed.final_state.bit_eq(&full.final_state), "{scheme}");
        // Ledger rows after the resume point keep their times.
        let times: Vec<f64> = resumed.ledger.rows().iter().map(|r| r.t).collect();
        let expected: Vec<f64> = full.ledger.rows().iter().map(|r| r.t).filter(|&t| t >= 0.1 - 1e-12).collect();
        assert_eq!(times, expected);
    }
}

#[test]
fn resume_rejects_off_grid_times() {
    let config = noisy_config(0.2);
    let sim = Simulation::new(&config).unwrap();
    let state = sim.state().clone().with_time(0.015);
    assert!(Simulation::resume(&config, state).is_err());
    let state = sim.state().clone().with_time(0.5);
    assert!(Simulation::resume(&config, state).is_err());
}

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut seeds: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    seeds.sort();
    assert!(!seeds.is_empty(), "no seeds in {}", dir.display());
    seeds.iter().map(|p| fs::read(p).unwrap()).collect()
}

#[test]
fn fuzz_seeds_round_trip() {
    let mut parsed = 0;
    for seed in corpus("parse_config") {
        if let Ok(c) = parse_config(std::str::from_utf8(&seed).unwrap()) {
            assert_eq!(parse_config(&io::emit_config(&c)).unwrap(), c);
            parsed += 1;
        }
    }
    assert!(parsed > 0);
    for seed in corpus("parse_ledger") {
        let l = parse_ledger(std::str::from_utf8(&seed).unwrap()).unwrap();
        assert_eq!(parse_ledger(&io::ledger_to_csv(&l)).unwrap(), l);
    }
    let mut decoded = 0;
    for seed in corpus("decode_checkpoint") {
        if let Ok(c) = decode_checkpoint(&seed) {
            assert_eq!(encode_checkpoint(&c.state, c.scheme), seed);
            decoded += 1;
        }
    }
    assert!(decoded > 0);
}
