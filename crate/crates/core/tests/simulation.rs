use dana_core::exectime::ExecTimeModel;
use dana_core::rng::{streams, SeededRng};
use dana_core::sim::{run_simulation, write_metrics_csv, RecordKind};
use dana_core::{Algorithm, Objective, Schedule, SimConfig, Simulation, Timing};

fn config(algorithm: Algorithm, workers: usize, seed: u64) -> SimConfig {
    let mut rng = SeededRng::new(seed, streams::TRAIN_DATA);
    let objective =
        Objective::noisy_quadratic(&mut rng, vec![0.1, 0.05, 0.02, 0.01], 2048, 3.0).unwrap();
    SimConfig {
        algorithm,
        workers,
        objective,
        eval_objective: None,
        batch_size: 32,
        epochs: 4,
        schedule: Schedule {
            num_workers: workers,
            warmup_epochs: 2.0,
            decay_epochs: vec![3.0],
            decay_factor: 0.1,
            ..Schedule::constant(0.1, 0.9)
        },
        lambda: 2.0,
        momentum_correction: true,
        timing: Timing::Gamma(ExecTimeModel::homogeneous(32)),
        seed,
        init: None,
    }
}

fn csv_bytes(config: SimConfig) -> Vec<u8> {
    let out = run_simulation(config).unwrap();
    let mut buf = Vec::new();
    write_metrics_csv(&out.records, &mut buf).unwrap();
    buf
}

#[test]
fn reruns_are_byte_identical_for_every_algorithm() {
    for algorithm in Algorithm::ALL {
        let n = if algorithm == Algorithm::SequentialNag {
            1
        } else {
            6
        };
        let a = csv_bytes(config(algorithm, n, 11));
        let b = csv_bytes(config(algorithm, n, 11));
        assert_eq!(a, b, "{algorithm}");
        let c = csv_bytes(config(algorithm, n, 12));
        assert_ne!(a, c, "{algorithm}: different seeds should differ");
    }
}

#[test]
fn every_batch_is_one_master_update() {
    for algorithm in [
        Algorithm::Asgd,
        Algorithm::DanaSlim,
        Algorithm::DanaDc,
        Algorithm::Lwp,
    ] {
        let cfg = config(algorithm, 7, 3);
        let expected = cfg.total_updates();
        let out = run_simulation(cfg).unwrap();
        assert!(!out.summary.diverged);
        assert_eq!(out.summary.updates, expected);
        let update_rows = out
            .records
            .iter()
            .filter(|r| r.kind == RecordKind::Update)
            .count();
        let eval_rows = out
            .records
            .iter()
            .filter(|r| r.kind == RecordKind::Eval)
            .count();
        assert_eq!(update_rows as u64, expected);
        assert_eq!(eval_rows, 4);
        assert_eq!(out.records.len(), update_rows + eval_rows);
    }
}

#[test]
fn async_wall_clock_is_linear_in_workers() {
    for n in [1, 4, 16] {
        let mut cfg = config(Algorithm::Asgd, n, 5);
        cfg.epochs = 40;
        let total = cfg.total_updates() as f64;
        let out = run_simulation(cfg).unwrap();
        let ideal = total * 32.0 / n as f64;
        let err = (out.summary.sim_time - ideal).abs() / ideal;
        assert!(
            err < 0.05,
            "N={n}: sim time {} vs {ideal}",
            out.summary.sim_time
        );
    }
}

#[test]
fn round_robin_lag_is_seven_with_eight_workers() {
    let mut cfg = config(Algorithm::Asgd, 8, 1);
    cfg.timing = Timing::RoundRobin { period: 10.0 };
    let mut sim = Simulation::new(cfg).unwrap();
    let mut lags = Vec::new();
    while let Some(info) = sim.step().unwrap() {
        lags.push(info.lag);
    }
    assert_eq!(lags.len(), 256);
    assert!(lags[8..].iter().all(|&l| l == 7));
}

#[test]
fn event_times_never_decrease() {
    let cfg = SimConfig {
        timing: Timing::Gamma(ExecTimeModel::heterogeneous(32)),
        ..config(Algorithm::DanaZero, 12, 9)
    };
    let mut sim = Simulation::new(cfg).unwrap();
    let mut last = 0.0;
    while let Some(info) = sim.step().unwrap() {
        assert!(info.sim_time >= last);
        last = info.sim_time;
    }
}

#[test]
fn slow_machines_contribute_fewer_updates() {
    let cfg = SimConfig {
        epochs: 30,
        timing: Timing::Gamma(ExecTimeModel::heterogeneous(32)),
        ..config(Algorithm::Asgd, 8, 2)
    };
    let mut sim = Simulation::new(cfg).unwrap();
    let mut counts = [0usize; 8];
    while let Some(info) = sim.step().unwrap() {
        counts[info.worker] += 1;
    }
    let (min, max) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
    assert!(max > min, "{counts:?}");
}

#[test]
fn learning_rate_follows_the_schedule() {
    let out = run_simulation(config(Algorithm::NagAsgd, 4, 1)).unwrap();
    let updates: Vec<_> = out
        .records
        .iter()
        .filter(|r| r.kind == RecordKind::Update)
        .collect();
    assert!((updates[0].lr - 0.025).abs() < 1e-15);
    assert!((updates.last().unwrap().lr - 0.01).abs() < 1e-15);
}

#[test]
fn gap_scales_with_the_learning_rate() {
    let c = 0.1;
    for algorithm in [Algorithm::Asgd, Algorithm::DanaZero, Algorithm::MultiAsgd] {
        let mut rng = SeededRng::new(8, streams::TRAIN_DATA);
        let objective = Objective::noisy_quadratic(&mut rng, vec![0.1, 0.05, 0.02, 0.01], 4096, 30.0).unwrap();
        let cfg = SimConfig {
            objective,
            epochs: 20,
            schedule: Schedule {
                num_workers: 8,
                warmup_epochs: 0.0,
                decay_factor: c,
                decay_epochs: vec![10.0],
                ..Schedule::constant(0.1, 0.9)
            },
            ..config(algorithm, 8, 8)
        };
        let mut sim = Simulation::new(cfg).unwrap();
        while sim.step().unwrap().is_some() {}
        let epochs = sim.gap_log().epoch_mean_gaps();
        let mean = |range: std::ops::Range<usize>| {
            let xs: Vec<f64> = epochs.iter().filter(|(e, _)| range.contains(e)).map(|(_, g)| *g).collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        let ratio = mean(15..20) / mean(5..10);
        assert!((0.5 * c..=2.0 * c).contains(&ratio), "{algorithm}: ratio {ratio}");
    }
}
