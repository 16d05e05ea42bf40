//! Finds the timestamp noise that gives a single tracked target a mean
//! position error of about 2 m.
//!
//! Bisects `channel.sigma_t` over 20 seeds of the trajectory layout with one
//! target. Extra arguments are `section.key=value` overrides.
//!
//!     cargo run --release --example calibrate_sigma -- sim.duration=300

use splt::config::ScenarioConfig;
use splt::engine::run_scenario;
use splt::metrics::mean_tracking_error;
use splt::scenarios::run_seeds;

const TARGET_ERROR_M: f64 = 2.0;
const SEEDS: usize = 20;
const ITERATIONS: usize = 14;

fn mean_error(base: &ScenarioConfig, sigma_t: f64) -> f64 {
    let mut errors = Vec::new();
    for seed in run_seeds(base) {
        let mut cfg = base.clone();
        cfg.sim.master_seed = seed;
        cfg.channel.sigma_t = sigma_t;
        let log = run_scenario(&cfg).expect("valid config");
        errors.extend(log.targets.iter().filter_map(|t| mean_tracking_error(t).ok()));
    }
    errors.iter().sum::<f64>() / errors.len() as f64
}

fn main() {
    let mut base = ScenarioConfig::default();
    base.sim.scenario = "trajectory".into();
    base.sim.malicious_count = 1;
    base.sim.runs = SEEDS;
    for o in std::env::args().skip(1) {
        if let Err(e) = base.apply_override(&o) {
            eprintln!("calibrate_sigma: {e}");
            std::process::exit(2);
        }
    }
    // error grows with sigma, so bisect in log space
    let (mut lo, mut hi) = (1e-10_f64, 1e-7_f64);
    for _ in 0..ITERATIONS {
        let mid = (lo * hi).sqrt();
        let err = mean_error(&base, mid);
        println!("sigma_t = {mid:.4e} s  mean error = {err:.3} m");
        if err < TARGET_ERROR_M {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = (lo * hi).sqrt();
    println!("calibrated sigma_t = {sigma:.3e} s (mean error {:.3} m)", mean_error(&base, sigma));
}
