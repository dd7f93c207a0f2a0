use std::f64::consts::TAU;
use std::path::Path;

use cdd_core::dynamics::{default_sample_times, run_ensemble, CurveKind, Estimator, ProtocolKind, ProtocolSpec};
use cdd_core::noise::{NoiseConfig, OuParams};
use cdd_core::protocol::{DriveConfig, ShiftPolicy};
use cdd_core::scenarios::{run_scenario, Scenario, ScenarioConfig};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn curve_bytes(seed: u64) -> Vec<u8> {
    let w1 = TAU * 2e6;
    let drive = DriveConfig::new(w1, 0.1 * w1, ShiftPolicy::Correlated(1.0)).unwrap();
    let noise = NoiseConfig {
        delta: OuParams::new(25e-6, 2f64.sqrt() / 3.6e-6, 1e-9).unwrap(),
        eps: OuParams::new(500e-6, 0.005, 1e-9).unwrap(),
        c: 1.0,
        seed,
    };
    let spec = ProtocolSpec::new(ProtocolKind::DoubleDrive, drive, noise, 40e-6).unwrap();
    let times = default_sample_times(&spec, 50);
    let ens = run_ensemble(&spec, 37, &times).unwrap();
    let mut buf = Vec::new();
    for kind in [CurveKind::AvgFidelity, CurveKind::FidelityX] {
        ens.curve(kind, Estimator::Envelope)
            .unwrap()
            .write_csv(&mut buf)
            .unwrap();
    }
    buf
}

#[test]
fn ensemble_independent_of_worker_count() {
    let one = in_pool(1, || curve_bytes(7));
    let four = in_pool(4, || curve_bytes(7));
    assert_eq!(one, four);
    assert_ne!(one, in_pool(4, || curve_bytes(8)), "seed must matter");
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn scenario_files_independent_of_worker_count() {
    let base = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in [1, 4] {
        let mut cfg = ScenarioConfig {
            scenario: Scenario::MemoryCompare,
            ..Default::default()
        };
        cfg.run.n_realizations = 12;
        cfg.run.samples = 60;
        cfg.run.output_dir = base.path().join(format!("w{threads}"));
        in_pool(threads, || run_scenario(&cfg)).unwrap();
        outputs.push(read_dir(&cfg.run.output_dir));
    }
    assert!(outputs[0].len() >= 6);
    assert_eq!(outputs[0], outputs[1]);
}
