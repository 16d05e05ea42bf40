//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.
//!
//!     cargo test --release --test acceptance

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splt::channel::{received_energy, ChannelConfig};
use splt::config::{ScenarioConfig, ENERGY_SWEEP_BEAMS};
use splt::crypto::{
    decrypt_chain, decrypt_packet, derive_initial_key, encrypt_chain, encrypt_packet, reconstruct_initial_key,
    EnsemblePacket, IntegratedKey, KeyChain, SeedPair, Word96, BLOCK_BYTES, KEY_BITS,
};
use splt::engine::run_scenario;
use splt::geometry::{triangulate, Disc, Position};
use splt::metrics::{mean_tracking_error, FriendlinessEventKind};
use splt::scenarios::{self, detection_rows, efficiency_rows, mean_efficiency_by_sector, switching_sweep, DETECTION_GRID};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    check: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn crypto_roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    for i in 0..10_000 {
        let blocks = rng.random_range(1..=4);
        let mut payload = vec![0u8; blocks * BLOCK_BYTES];
        rng.fill_bytes(&mut payload);
        let mut kb = [0u8; 32];
        rng.fill_bytes(&mut kb);
        let key = IntegratedKey::from_bytes(&kb);
        let plain = EnsemblePacket { payload, index: 1 };
        let back = decrypt_packet(&encrypt_packet(&plain, &key).map_err(|e| e.to_string())?, &key)
            .map_err(|e| e.to_string())?;
        ensure(back == plain, || format!("pair {i} did not round-trip"))?;
    }
    for c in 0..200 {
        let seeds = SeedPair::new(rng.next_u64(), rng.next_u64());
        let id = rng.next_u64();
        let packets: Vec<EnsemblePacket> = (1..=8)
            .map(|j| {
                let mut payload = vec![0u8; BLOCK_BYTES * rng.random_range(1..=3)];
                rng.fill_bytes(&mut payload);
                EnsemblePacket { payload, index: j }
            })
            .collect();
        let cipher = encrypt_chain(&packets, seeds, id).map_err(|e| e.to_string())?;
        let first = packets[0].first_segment().map_err(|e| e.to_string())?;
        let sent: Vec<IntegratedKey> = KeyChain::new(derive_initial_key(seeds, id, first)).take(8).collect();
        let rebuilt = reconstruct_initial_key(&cipher[0], seeds, id).map_err(|e| e.to_string())?;
        let received: Vec<IntegratedKey> = KeyChain::new(rebuilt).take(8).collect();
        ensure(sent == received, || format!("chain {c}: key sequences differ"))?;
        let plain = decrypt_chain(&cipher, seeds, id).map_err(|e| e.to_string())?;
        ensure(plain == packets, || format!("chain {c}: decryption mismatch"))?;
    }
    Ok("10^4 packets and 200 chains of 8".into())
}

fn key_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(256);
    let mut keys = 0;
    for _ in 0..1000 {
        let id = rng.next_u64();
        let seeds = SeedPair::new(rng.next_u64(), rng.next_u64());
        let initial = derive_initial_key(seeds, id, Word96::new(rng.random()));
        for k in KeyChain::new(initial).take(16) {
            ensure(k.to_bytes().len() * 8 == 256 && k.bit_width() == KEY_BITS && KEY_BITS == 96 + 64 + 96, || {
                "key is not 256 bits".into()
            })?;
            ensure(k.k1.value() >> 96 == 0 && k.k3.value() >> 96 == 0, || "k1 or k3 wider than 96 bits".into())?;
            ensure(k.k2 == id, || "k2 changed along the chain".into())?;
            keys += 1;
        }
    }
    Ok(format!("{keys} keys"))
}

/// Exact detection rate for quarter-step probabilities, as a ratio of
/// integers: P = (4-a)(4-b)(4-c)/64.
fn exact_rate(a: u32, b: u32, c: u32, n: u32) -> f64 {
    let hit = ((4 - a) * (4 - b) * (4 - c)) as u128;
    let miss = 64 - hit;
    let den = 64u128.pow(n);
    ((den - miss.pow(n)) as f64) / den as f64
}

fn detection() -> Outcome {
    let mut cfg = ScenarioConfig::default();
    cfg.sfv.trials = 100_000;
    let rows = detection_rows(&cfg).map_err(|e| e.to_string())?;
    ensure(rows.len() == 5 * 5 * 5 * 4, || format!("{} grid rows", rows.len()))?;
    let q = |p: f64| DETECTION_GRID.iter().position(|&g| g == p).expect("grid value") as u32;
    let mut worst: f64 = 0.0;
    for r in &rows {
        let want = exact_rate(q(r.p_wh), q(r.p_i), q(r.p_r), r.n);
        ensure(r.closed_form == want, || format!("closed form {} != {want} at {r:?}", r.closed_form))?;
        let single = scenarios::single_key_probability(r.p_wh, r.p_i, r.p_r).map_err(|e| e.to_string())?;
        ensure(single == exact_rate(q(r.p_wh), q(r.p_i), q(r.p_r), 1), || format!("single-key value at {r:?}"))?;
        let bound = 4.0 * (want * (1.0 - want) / 100_000.0).sqrt();
        let dev = (r.monte_carlo - want).abs();
        ensure(dev <= bound, || format!("Monte Carlo off by {dev} > {bound} at {r:?}"))?;
        if bound > 0.0 {
            worst = worst.max(dev / bound);
        }
    }
    Ok(format!("500 rows exact, worst Monte Carlo deviation {worst:.2} of bound"))
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Position, Position, Position) {
    loop {
        let p = |rng: &mut ChaCha8Rng| Position::new(rng.random_range(0.0..400.0), rng.random_range(0.0..400.0));
        let (t, a, b) = (p(rng), p(rng), p(rng));
        let spread = (t.bearing_to(&a) - t.bearing_to(&b)).to_radians().sin().abs();
        if t.distance(&a) > 5.0 && t.distance(&b) > 5.0 && spread > 0.2 {
            return (t, a, b);
        }
    }
}

/// Height of `t` above the line through `a` and `b`.
fn height(t: Position, a: Position, b: Position) -> f64 {
    ((b.x - a.x) * (t.y - a.y) - (b.y - a.y) * (t.x - a.x)).abs() / a.distance(&b)
}

/// Minimises the squared range residuals by repeated grid refinement over
/// the zone's bounding box.
fn grid_oracle(a: Position, ra: f64, b: Position, rb: f64, zone: &Disc) -> Position {
    let cost = |p: Position| (p.distance(&a) - ra).powi(2) + (p.distance(&b) - rb).powi(2);
    let (mut cx, mut cy, mut half) = (zone.center.x, zone.center.y, zone.radius);
    while half > 1e-10 {
        let mut best = (f64::INFINITY, cx, cy);
        for i in -20..=20 {
            for j in -20..=20 {
                let (x, y) = (cx + half * i as f64 / 20.0, cy + half * j as f64 / 20.0);
                let c = cost(Position::new(x, y));
                if c < best.0 {
                    best = (c, x, y);
                }
            }
        }
        (cx, cy) = (best.1, best.2);
        half *= 0.25;
    }
    Position::new(cx, cy)
}

fn triangulation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let (t, a, b) = random_instance(&mut rng);
        // zone around a nearby prediction, excluding the mirror point
        let h = height(t, a, b);
        let zone = Disc { center: t.offset(0.2 * h, -0.1 * h), radius: h };
        let fix = triangulate(a, a.distance(&t), b, b.distance(&t), &zone, 2.0)
            .map_err(|e| format!("instance {i}: {e}"))?;
        let err = fix.position.distance(&t);
        worst = worst.max(err);
        ensure(err <= 1e-6, || format!("instance {i}: error {err}"))?;
        if i < 100 {
            let oracle = grid_oracle(a, a.distance(&t), b, b.distance(&t), &zone);
            let gap = oracle.distance(&fix.position);
            ensure(gap <= 1e-6, || format!("instance {i}: {gap} m from the grid oracle"))?;
        }
    }
    Ok(format!("worst error {worst:.2e} m"))
}

fn trajectory() -> Outcome {
    let mut cfg = ScenarioConfig::default();
    cfg.sim.scenario = "trajectory".into();
    let log = run_scenario(&cfg).map_err(|e| e.to_string())?;
    ensure(log.targets.len() == 4, || format!("{} targets", log.targets.len()))?;
    let mut errs = Vec::new();
    for t in &log.targets {
        let e = mean_tracking_error(t).map_err(|e| e.to_string())?;
        ensure((1.0..=4.0).contains(&e), || format!("target {} mean error {e:.3} m", t.label))?;
        errs.push(format!("{e:.2}"));
    }
    Ok(format!("mean errors [{}] m", errs.join(", ")))
}

fn efficiency() -> Outcome {
    let cfg = ScenarioConfig::default();
    ensure(cfg.sim.runs >= 50, || "fewer than 50 seeds".into())?;
    let rows = efficiency_rows(&cfg).map_err(|e| e.to_string())?;
    let means = mean_efficiency_by_sector(&rows, cfg.sim.sectors);
    let shown: Vec<String> = means.iter().map(|m| format!("{:.1}%", m * 100.0)).collect();
    ensure(means.windows(2).all(|w| w[1] <= w[0]), || format!("not nonincreasing: [{}]", shown.join(", ")))?;
    Ok(format!("sectors 1..4: [{}] over {} seeds", shown.join(", "), cfg.sim.runs))
}

fn switching() -> Outcome {
    let cfg = ScenarioConfig::default();
    let (rows, _) = switching_sweep(&cfg).map_err(|e| e.to_string())?;
    let mean = |v: f64| {
        let r: Vec<f64> = rows.iter().filter(|r| r.v_max == v).map(|r| r.overhead).collect();
        (r.iter().sum::<f64>() / r.len() as f64, r.len())
    };
    let ((slow, n5), (fast, n20)) = (mean(5.0), mean(20.0));
    ensure(n5 >= 50 && n5 == n20, || format!("{n5} and {n20} seeds"))?;
    ensure(fast > slow, || format!("overhead {fast:.4} s at 20 m/s vs {slow:.4} s at 5 m/s"))?;
    Ok(format!("mean overhead {slow:.3} s at 5 m/s, {fast:.3} s at 20 m/s over {n5} seeds"))
}

fn energy() -> Outcome {
    let cfg = ChannelConfig::default();
    let e: Vec<f64> = (1..=ENERGY_SWEEP_BEAMS).map(|m| received_energy(&cfg, m).expect("m >= 1")).collect();
    ensure(e.windows(2).all(|w| w[1] < w[0]), || format!("{e:?}"))?;
    Ok(format!("E(1) = {:.3} .. E(8) = {:.4}", e[0], e[7]))
}

fn friendliness() -> Outcome {
    let mut cfg = ScenarioConfig::default();
    cfg.sim.scenario = "friendliness".into();
    let log = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let interval = cfg.sfv.reauth_interval;
    let mut single = Vec::new();
    let mut consecutive = Vec::new();
    let mut last_fail: std::collections::HashMap<u64, f64> = Default::default();
    for f in log.friendliness.iter().filter(|f| f.kind == FriendlinessEventKind::ReauthFail) {
        let resumed = log
            .friendliness
            .iter()
            .find(|r| r.kind == FriendlinessEventKind::TrackingResumed && r.node == f.node && r.t >= f.t)
            .ok_or_else(|| format!("failure at {:.2} s never resumed", f.t))?;
        let delay = resumed.t - f.t;
        // a failure one sweep after another at the same node is the second in a row
        match last_fail.insert(f.node, f.t) {
            Some(prev) if (f.t - prev - interval).abs() < 1e-6 => consecutive.push(delay),
            _ => single.push(delay),
        }
    }
    ensure(!single.is_empty() && !consecutive.is_empty(), || {
        format!("{} single and {} consecutive failures", single.len(), consecutive.len())
    })?;
    ensure(single.iter().all(|&d| d >= 20.0), || format!("single-failure delays {single:?}"))?;
    ensure(consecutive.iter().all(|&d| d >= 30.0), || format!("consecutive-failure delays {consecutive:?}"))?;
    let fmt = |v: &[f64]| v.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>().join(", ");
    Ok(format!("single [{}] s, consecutive [{}] s", fmt(&single), fmt(&consecutive)))
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).expect("inside").to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).expect("readable file")));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_splt");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        let status = std::process::Command::new(bin)
            .args(["run", "all", "--master-seed", "7", "--trials", "2000", "--set", "sim.runs=4", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
        trees.push(tree(&out));
    }
    ensure(trees[0].len() >= 12, || format!("only {} files written", trees[0].len()))?;
    ensure(trees[0] == trees[1], || "output trees differ".into())?;
    let bytes: usize = trees[0].iter().map(|(_, b)| b.len()).sum();
    Ok(format!("{} files, {bytes} bytes identical", trees[0].len()))
}

fn main() {
    let criteria = [
        Criterion { name: "crypto roundtrip", limit: Some(Duration::from_secs(5)), check: crypto_roundtrip },
        Criterion { name: "key structure", limit: None, check: key_structure },
        Criterion { name: "detection formulas", limit: Some(Duration::from_secs(30)), check: detection },
        Criterion { name: "triangulation exactness", limit: Some(Duration::from_secs(10)), check: triangulation },
        Criterion { name: "trajectory error scale", limit: Some(Duration::from_secs(60)), check: trajectory },
        Criterion { name: "efficiency ordering", limit: Some(Duration::from_secs(300)), check: efficiency },
        Criterion { name: "switching overhead", limit: Some(Duration::from_secs(300)), check: switching },
        Criterion { name: "energy monotonicity", limit: None, check: energy },
        Criterion { name: "friendliness timers", limit: None, check: friendliness },
        Criterion { name: "determinism", limit: None, check: determinism },
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut result = (c.check)();
        let took = start.elapsed();
        if let (Ok(_), Some(limit)) = (&result, c.limit) {
            if took > limit {
                result = Err(format!("took {took:.1?}, limit {limit:?}"));
            }
        }
        match result {
            Ok(detail) => println!("[PASS] {:>2}. {} ({detail}; {took:.2?})", i + 1, c.name),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {:>2}. {}: {why} ({took:.2?})", i + 1, c.name);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
