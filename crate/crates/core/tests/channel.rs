use dirtysim::analysis::{sweep_ber_vs_rate, BitString};
use dirtysim::channel::{
    calibrate_levels, calibrate_thresholds, receiver_decode, receiver_init, run_channel, sender_encode,
    ChannelConfig, ChannelError, Encoding, NoiseConfig, Thresholds,
};
use dirtysim::{ActorId, Cache, CacheGeometry, LineRef, PolicyKind, WritePolicy};

fn base(seed: u64) -> ChannelConfig {
    ChannelConfig {
        seed,
        ..ChannelConfig::default()
    }
}

fn multibit() -> Encoding {
    Encoding::MultiBit {
        levels: vec![0, 3, 5, 8],
    }
}

#[test]
fn encode_decode_round_trip_every_symbol() {
    let cfg = ChannelConfig {
        encoding: multibit(),
        ..base(1)
    };
    let thresholds = calibrate_thresholds(&cfg, 8, 1).unwrap();
    let mut cache = Cache::new(cfg.cache.clone(), 0).unwrap();
    receiver_init(&mut cache, &cfg).unwrap();
    for (i, symbol) in ["00", "01", "10", "11", "11", "00"].iter().enumerate() {
        let bits: BitString = symbol.parse().unwrap();
        sender_encode(&mut cache, &cfg, bits.as_slice()).unwrap();
        let decoded = receiver_decode(&mut cache, &cfg, i as u64, &thresholds).unwrap();
        assert_eq!(decoded.bits.to_string(), *symbol);
        assert!(!decoded.sample.precondition_violated());
    }
}

#[test]
fn calibration_reports_level_means() {
    let (t, stats) = calibrate_levels(&ChannelConfig { encoding: multibit(), ..base(2) }, 10, 2).unwrap();
    let means: Vec<f64> = stats.iter().map(|s| s.mean).collect();
    assert_eq!(means, vec![110.0, 143.0, 165.0, 198.0]);
    assert!(stats.iter().all(|s| s.std_dev == 0.0));
    assert_eq!(t.cuts, vec![126.5, 154.0, 181.5]);
}

#[test]
fn jitter_keeps_binary_channel_usable() {
    let mut cfg = base(3).with_random_message(256);
    cfg.cache.latency.jitter = 1;
    let t = calibrate_thresholds(&cfg, 64, 3).unwrap();
    let r = run_channel(&cfg, &t).unwrap();
    assert!(r.ber < 0.05, "ber {}", r.ber);
}

#[test]
fn wrong_threshold_count_is_rejected() {
    let cfg = base(1).with_random_message(8);
    let err = run_channel(&cfg, &Thresholds { cuts: vec![1.0, 2.0] }).unwrap_err();
    assert!(matches!(err, ChannelError::InvalidConfig(_)));
}

#[test]
fn odd_message_rejected_for_multibit() {
    let cfg = ChannelConfig {
        encoding: multibit(),
        message: "101".parse().unwrap(),
        ..base(1)
    };
    assert!(matches!(cfg.validate(), Err(ChannelError::InvalidConfig(_))));
}

#[test]
fn sender_line_counts_match_symbols() {
    let cfg = ChannelConfig {
        encoding: Encoding::Binary { d_one: 1 },
        ..base(4)
    }
    .with_random_message(200);
    let t = calibrate_thresholds(&cfg, 4, 4).unwrap();
    let r = run_channel(&cfg, &t).unwrap();
    let ones = r.sent_bits.ones() as u64;
    let sender = r.counters["sender"];
    assert_eq!(sender.stores, ones);
    assert_eq!(sender.loads, 0);
    for e in r.events.iter().filter(|e| e.action == "encode") {
        assert!(e.d.unwrap() <= 1);
    }
}

#[test]
fn clean_noise_never_changes_symbols_under_lru() {
    for encoding in [Encoding::Binary { d_one: 1 }, Encoding::Binary { d_one: 8 }, multibit()] {
        let cfg = ChannelConfig {
            encoding,
            noise: NoiseConfig {
                rate: 1.0,
                ..NoiseConfig::default()
            },
            ..base(5)
        }
        .with_random_message(512);
        let t = calibrate_thresholds(&cfg, 4, 5).unwrap();
        let r = run_channel(&cfg, &t).unwrap();
        assert_eq!(r.symbol_errors(), 0);
        assert_eq!(r.ber, 0.0);
    }
}

#[test]
fn dirty_noise_flips_zero_symbols() {
    let cfg = ChannelConfig {
        noise: NoiseConfig {
            rate: 1.0,
            write_fraction: 1.0,
            ..NoiseConfig::default()
        },
        message: BitString::from_u64(0, 32),
        ..base(6)
    };
    let t = calibrate_thresholds(&cfg, 4, 6).unwrap();
    let r = run_channel(&cfg, &t).unwrap();
    assert!(r.latency_trace.iter().all(|p| p.decoded == "1"));
}

#[test]
fn noise_in_another_set_is_harmless() {
    let cfg = ChannelConfig {
        noise: NoiseConfig {
            rate: 1.0,
            write_fraction: 1.0,
            target: Some(9),
            ..NoiseConfig::default()
        },
        ..base(7)
    }
    .with_random_message(128);
    let t = calibrate_thresholds(&cfg, 4, 7).unwrap();
    assert_eq!(run_channel(&cfg, &t).unwrap().ber, 0.0);
}

#[test]
fn write_through_kills_channel_for_all_encodings() {
    for encoding in [Encoding::Binary { d_one: 4 }, multibit()] {
        let mut cfg = ChannelConfig { encoding, ..base(8) }.with_random_message(200);
        cfg.cache.geometry.write_policy = WritePolicy::WriteThroughNoAllocate;
        let t = calibrate_thresholds(&cfg, 4, 8).unwrap();
        let r = run_channel(&cfg, &t).unwrap();
        let zero = "0".repeat(cfg.encoding.bits_per_symbol());
        assert!(r.latency_trace.iter().all(|p| p.decoded == zero));
        assert_eq!(r.counters.get("sender").map_or(0, |c| c.writebacks), 0);
    }
}

#[test]
fn partition_with_noise_actor() {
    let mut cfg = ChannelConfig {
        noise: NoiseConfig {
            rate: 1.0,
            write_fraction: 1.0,
            ..NoiseConfig::default()
        },
        ..base(9)
    }
    .with_random_message(200);
    cfg.cache.geometry =
        CacheGeometry::default().with_even_partition(&[ActorId::SENDER, ActorId::NOISE, ActorId::RECEIVER]);
    let t = calibrate_thresholds(&cfg, 4, 9).unwrap();
    let r = run_channel(&cfg, &t).unwrap();
    let first = &r.latency_trace[0].decoded;
    assert!(r.latency_trace.iter().all(|p| &p.decoded == first));
}

#[test]
fn partition_requires_every_actor() {
    let mut cfg = base(10).with_random_message(16);
    cfg.cache.geometry = CacheGeometry::default().with_even_partition(&[ActorId::SENDER]);
    let t = Thresholds { cuts: vec![115.5] };
    assert!(matches!(run_channel(&cfg, &t), Err(ChannelError::Cache(_))));
}

#[test]
fn slip_can_break_alignment_and_is_reproducible() {
    let mut cfg = base(11).with_period(800).with_random_message(256);
    cfg.slip = 700;
    let t = calibrate_thresholds(&cfg, 4, 11).unwrap();
    let a = run_channel(&cfg, &t).unwrap();
    let b = run_channel(&cfg, &t).unwrap();
    assert_eq!(a, b);
    assert!(a.ber > 0.0);
}

#[test]
fn plru_and_random_policies_run() {
    for policy in [PolicyKind::TreePlru, PolicyKind::Random { seed: 12 }] {
        let mut cfg = base(12).with_random_message(128);
        cfg.cache.policy = policy;
        let t = match calibrate_thresholds(&cfg, 32, 12) {
            Ok(t) => t,
            Err(ChannelError::Calibration { thresholds, .. }) => thresholds,
            Err(e) => panic!("{e}"),
        };
        let r = run_channel(&cfg, &t).unwrap();
        assert!(r.ber <= 1.0);
        if policy == PolicyKind::TreePlru {
            assert_eq!(r.ber, 0.0);
        }
    }
}

#[test]
fn sweep_noiseless_is_zero_over_default_periods() {
    let cfg = base(13).with_random_message(64);
    let table = sweep_ber_vs_rate(&cfg, &dirtysim::analysis::DEFAULT_PERIODS, 2).unwrap();
    assert_eq!(table.rows.len(), 6);
    assert!(table.rows.iter().all(|r| r.mean_ber == 0.0));
    assert_eq!(table.rows[2].rate_kbps, 1375.0);
    assert!(!table.calibration_overlap);
}

#[test]
fn sweep_trials_share_messages_across_periods() {
    let cfg = base(14).with_random_message(32);
    let a = cfg.for_trial(800, 3);
    let b = cfg.for_trial(11000, 3);
    assert_eq!(a.message, b.message);
    assert_eq!(a.seed, b.seed);
    assert_ne!(cfg.for_trial(800, 4).message, a.message);
}

#[test]
fn receiver_init_then_decode_without_sender_is_zero() {
    let cfg = base(15);
    let mut cache = Cache::new(cfg.cache.clone(), 0).unwrap();
    receiver_init(&mut cache, &cfg).unwrap();
    // Another actor's dirty line in a different set does not matter.
    let g = cache.geometry().clone();
    cache.write(LineRef::new(ActorId::NOISE, g.address_of(5, 0))).unwrap();
    let d = receiver_decode(&mut cache, &cfg, 0, &Thresholds { cuts: vec![115.5] }).unwrap();
    assert_eq!(d.sample.total_cycles, 110);
    assert_eq!(d.level, 0);
}
