//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wsn_recovery::cluster::ClusterManager;
use wsn_recovery::coverage::{CoverageMap, CoverageModel};
use wsn_recovery::energy::{computational_cost, CostCoefficients, EnergyLedger, EnergyModel};
use wsn_recovery::engine::{sweep, Axis, Simulation};
use wsn_recovery::experiments::{preset, results_csv, run_preset, ExperimentOutput};
use wsn_recovery::protocol::{registration_latency, ProtocolParams, Registrar, RegistrationPath};
use wsn_recovery::relocation::{apply_velocity_step, recover_holes_hybrid, HybridParams};
use wsn_recovery::world::{ClusterId, FieldConfig, HomePrefix, Layout, NodeId, Position, Rect, SensorNode, Velocity, ZoneId};
use wsn_recovery::{Config, Protocol};

const SWEEP_BUDGET: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn prefix() -> HomePrefix {
    HomePrefix {
        zone: ZoneId(0),
        cluster: ClusterId(0),
    }
}

fn timed_preset(name: &str) -> Result<(ExperimentOutput, Duration), String> {
    let p = preset(name).ok_or(format!("no preset {name}"))?;
    let t = Instant::now();
    let out = run_preset(&p).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    check(elapsed <= SWEEP_BUDGET, format!("{name} took {elapsed:?}"))?;
    Ok((out, elapsed))
}

/// Adjacent pairs where `worse(prev, next)` holds.
fn violations(xs: &[u64], worse: impl Fn(u64, u64) -> bool) -> usize {
    xs.windows(2).filter(|w| worse(w[0], w[1])).count()
}

fn coverage_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = Instant::now();
    let mut cells = 0usize;
    for _ in 0..200 {
        let cell = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
        let w = rng.gen_range(1..=20);
        let h = rng.gen_range(1..=20);
        let field = Rect::with_size(w as f64 * cell, h as f64 * cell);
        let radius = rng.gen_range(0.1..6.0);
        let n = rng.gen_range(0..=30);
        let nodes: Vec<SensorNode> = (0..n)
            .map(|k| {
                let p = Position::new(rng.gen_range(0.0..=field.width()), rng.gen_range(0.0..=field.height()));
                let energy = if rng.gen_bool(0.2) { 0.0 } else { 1.0 };
                SensorNode::new(NodeId(k), p, energy, prefix())
            })
            .collect();
        let mut map = CoverageMap::for_region(field, field, cell).map_err(|e| e.to_string())?;
        map.mark_covered(&nodes, radius, CoverageModel::Disk).map_err(|e| e.to_string())?;
        for j in 0..h {
            for i in 0..w {
                let c = Position::new((i as f64 + 0.5) * cell, (j as f64 + 0.5) * cell);
                let want = nodes
                    .iter()
                    .filter(|s| s.alive)
                    .any(|s| (s.position.x - c.x).hypot(s.position.y - c.y) <= radius);
                check(map.get(i, j) == want, format!("cell ({i},{j}) of a {w}x{h} field"))?;
                cells += 1;
            }
        }
    }
    let elapsed = t.elapsed();
    check(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("200 fields, {cells} cells identical, {:.2} s", elapsed.as_secs_f64()))
}

fn cluster_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0;
    for case in 0..100 {
        let k = rng.gen_range(2..=10);
        let lo = rng.gen_range(1..=20);
        let hi = lo + rng.gen_range(1..=10);
        let n = rng.gen_range(k * lo..=k * hi);
        let mut m = ClusterManager::new(lo, hi).map_err(|e| e.to_string())?;
        for c in 0..k {
            m.add_cluster(ZoneId((c % 2) as u32));
        }
        for id in 0..n {
            let c = if rng.gen_bool(0.5) { 0 } else { rng.gen_range(0..k) };
            m.add_sensor(c, NodeId(id as u32)).map_err(|e| e.to_string())?;
        }
        let rounds = m.run_to_stability(n.max(1)).map_err(|e| format!("case {case}: {e}"))?;
        check(m.all_in_range(), format!("case {case}: sizes {:?} outside [{lo},{hi}]", m.sizes()))?;
        check(m.total() == n, format!("case {case}: {} nodes after, {n} before", m.total()))?;
        check(rounds <= n, format!("case {case}: {rounds} rounds for {n} nodes"))?;
        worst = worst.max(rounds);
    }
    Ok(format!("100 configurations stable, at most {worst} rounds"))
}

fn arithmetic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bounds = Rect::new(-1e3, -1e3, 1e3, 1e3);
    for _ in 0..1000 {
        let p = Position::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let v = Velocity::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let dt = rng.gen_range(0.0..5.0);
        let q = apply_velocity_step(&p, &v, dt, &bounds);
        check(
            (q.x - (p.x + v.vx * dt)).abs() <= 1e-9 && (q.y - (p.y + v.vy * dt)).abs() <= 1e-9,
            format!("velocity step from {p:?}"),
        )?;
        let c = CostCoefficients {
            k1: rng.gen_range(0.0..3.0),
            k2: rng.gen_range(0.0..3.0),
            k3: rng.gen_range(0.0..3.0),
            k4: rng.gen_range(0.0..3.0),
        };
        let (d, r, b, o) = (
            rng.gen_range(0.0..1e4),
            rng.gen_range(1.0..1e4),
            rng.gen_range(1.0..1e4),
            rng.gen_range(0.0..100.0),
        );
        let got = computational_cost(&c, d, r, b, o).map_err(|e| e.to_string())?;
        let want = c.k1 * d + c.k2 * d / r + c.k3 * d / b + c.k4 * o;
        check((got - want).abs() <= 1e-9, format!("cost {got} vs {want}"))?;
    }
    let exact = computational_cost(&CostCoefficients::default(), 2048.0, 1024.0, 512.0, 10.0).map_err(|e| e.to_string())?;
    check(exact == 2064.0, format!("unit case gave {exact}"))?;
    Ok("1000 random substitutions within 1e-9, unit case = 2064".into())
}

fn recovery_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let energy = EnergyModel::default();
    let mut recovered = 0;
    for case in 0..100 {
        let field = Rect::with_size(2.0 * rng.gen_range(8..=20) as f64, 2.0 * rng.gen_range(8..=20) as f64);
        let map = CoverageMap::for_region(field, field, 2.0).map_err(|e| e.to_string())?;
        let n = rng.gen_range(10..=40);
        let mut nodes: Vec<SensorNode> = (0..n)
            .map(|k| {
                let p = Position::new(rng.gen_range(0.0..=field.width()), rng.gen_range(0.0..=field.height()));
                SensorNode::new(NodeId(k), p, rng.gen_range(0.05..6.0), prefix())
            })
            .collect();
        let params = HybridParams {
            dx: rng.gen_range(0.2..1.0),
            max_iterations: 500,
            sensing_radius: 5.0,
            trace: false,
        };
        let mut ledger = EnergyLedger::new();
        let r = recover_holes_hybrid(&mut nodes, &map, &params, &energy, &mut ledger).map_err(|e| format!("case {case}: {e}"))?;
        check(r.iterations_used <= params.max_iterations, format!("case {case}: {} iterations", r.iterations_used))?;
        let excused = !r.deaths.is_empty();
        check(
            excused || r.hole_trace.windows(2).all(|w| w[1] <= w[0]),
            format!("case {case}: trace {:?}", r.hole_trace),
        )?;
        recovered += r.recovered as usize;
    }
    let mut runs = 0;
    for name in ["fig8", "fig9"] {
        let p = preset(name).unwrap();
        for &v in &p.values {
            let mut c = wsn_recovery::engine::at_axis(&p.config, p.axis, v);
            c.scenario.protocol = Protocol::Hybrid;
            let report = Simulation::new(&c).and_then(|s| s.run()).map_err(|e| e.to_string())?;
            check(
                report.metrics.deaths > 0 || report.hole_trace.windows(2).all(|w| w[1] <= w[0]),
                format!("{name} at {v}: hole count rose"),
            )?;
            runs += 1;
        }
    }
    Ok(format!("100 random fields terminated ({recovered} fully recovered); {runs} scenario traces non-increasing"))
}

fn hybrid_tr(out: &ExperimentOutput) -> Vec<(usize, u64, usize)> {
    out.comparisons
        .iter()
        .map(|(v, c)| (*v, c.hybrid.recovery_time_steps, c.hybrid.migrants))
        .collect()
}

fn fig8_trend() -> Outcome {
    let (out, t) = timed_preset("fig8")?;
    let rows = hybrid_tr(&out);
    let tr: Vec<u64> = rows.iter().map(|r| r.1).collect();
    let bad = violations(&tr, |a, b| b < a);
    check(bad <= 1, format!("T_r {tr:?} has {bad} decreases"))?;
    let local = rows.iter().filter(|r| r.2 == 0).map(|r| r.1).max();
    let migrating = rows.iter().filter(|r| r.2 > 0).map(|r| r.1).min();
    let (Some(local), Some(migrating)) = (local, migrating) else {
        return Err(format!("sweep lacks one side of the migration knee: {rows:?}"));
    };
    check(migrating > local, format!("fastest migrating run {migrating} <= slowest local run {local}"))?;
    Ok(format!("T_r {tr:?}, {bad} violations, knee {local} -> {migrating}, {:.1} s", t.as_secs_f64()))
}

fn fig9_trend() -> Outcome {
    let (out, t) = timed_preset("fig9")?;
    let tr: Vec<u64> = hybrid_tr(&out).iter().map(|r| r.1).collect();
    let bad = violations(&tr, |a, b| b > a);
    check(bad <= 1, format!("T_r {tr:?} has {bad} increases"))?;
    Ok(format!("T_r {tr:?}, {bad} violations, {:.1} s", t.as_secs_f64()))
}

fn fig11_direction() -> Outcome {
    let (out, t) = timed_preset("fig11")?;
    let min = Config::default().scenario.min_threshold;
    let (_, row) = out
        .comparisons
        .iter()
        .find(|(v, _)| *v == min)
        .ok_or(format!("no row at density {min}"))?;
    let (h, s) = (row.hybrid.final_coverage, row.ssoa.final_coverage);
    check(h >= s, format!("hybrid {h} below ssoa {s}"))?;
    check(h >= 0.95, format!("hybrid coverage {h}"))?;
    Ok(format!("at {min}/cluster hybrid {h:.4} vs ssoa {s:.4}, {:.1} s", t.as_secs_f64()))
}

fn fig13_direction() -> Outcome {
    let (out, t) = timed_preset("fig13")?;
    let mut ratios = Vec::new();
    for (v, c) in &out.comparisons {
        let (h, s) = (c.hybrid.energy_spent_fraction, c.ssoa.energy_spent_fraction);
        check(h < s, format!("at {v} holes hybrid {h} >= ssoa {s}"))?;
        ratios.push(h / s);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    check(mean <= 0.6, format!("mean ratio {mean}"))?;
    Ok(format!("hybrid below ssoa at all {} points, mean ratio {mean:.3}, {:.1} s", ratios.len(), t.as_secs_f64()))
}

fn fig12_direction() -> Outcome {
    let (out, t) = timed_preset("fig12")?;
    for (v, c) in &out.comparisons {
        let (h, s) = (c.hybrid.node_cost, c.ssoa.node_cost);
        check(h < s, format!("at density {v} hybrid {h} >= ssoa {s}"))?;
    }
    Ok(format!("hybrid node cost below ssoa at all {} points, {:.1} s", out.comparisons.len(), t.as_secs_f64()))
}

fn protocol_accounting() -> Outcome {
    let (zones, clusters) = Layout::default().build(&FieldConfig::default(), 124, 135).map_err(|e| e.to_string())?;
    let mut reg = Registrar::new(&clusters, &zones, 135, ProtocolParams::default(), 2048);
    let origin = &clusters[0];
    let same = clusters.iter().find(|c| c.zone == origin.zone && c.id != origin.id).unwrap();
    let other = clusters.iter().find(|c| c.zone != origin.zone).unwrap();
    let mut a = SensorNode::new(NodeId(1), origin.head_position, 6.0, origin.prefix());
    let mut b = SensorNode::new(NodeId(2), origin.head_position, 6.0, origin.prefix());
    reg.enrol(&a, 0).map_err(|e| e.to_string())?;
    reg.enrol(&b, 0).map_err(|e| e.to_string())?;
    let intra = reg.register_node(&mut a, same.id, 0, 1).map_err(|e| e.to_string())?;
    let inter = reg.register_node(&mut b, other.id, 0, 1).map_err(|e| e.to_string())?;
    check(intra.path == RegistrationPath::IntraZone && intra.hops == 2, format!("intra {:?} {} hops", intra.path, intra.hops))?;
    check(inter.path == RegistrationPath::InterZone && inter.hops == 4, format!("inter {:?} {} hops", inter.path, inter.hops))?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..1000 {
        let link = rng.gen_range(1e-6..100.0);
        let fast = rng.gen_range(1e-6..100.0);
        let full = fast + rng.gen_range(0.0..100.0);
        let li = registration_latency(&intra, link, fast, full).map_err(|e| e.to_string())?;
        let le = registration_latency(&inter, link, fast, full).map_err(|e| e.to_string())?;
        check(li < le, format!("link {link} fast {fast} full {full}: {li} >= {le}"))?;
    }
    Ok("intra 2 hops, inter 4 hops; intra faster for 1000 random constant sets".into())
}

fn determinism() -> Outcome {
    let mut base = Config::default();
    base.scenario.holes = 30;
    base.scenario.max_threshold = 160;
    let values = [124, 135, 150];
    let protocols = [Protocol::Hybrid, Protocol::Ssoa];
    let mut n = 0;
    for seed in [1, 7, 1234] {
        base.field.rng_seed = seed;
        let a = sweep(&base, Axis::Density, &values, &protocols).map_err(|e| e.to_string())?;
        let b = sweep(&base, Axis::Density, &values, &protocols).map_err(|e| e.to_string())?;
        check(results_csv(&a) == results_csv(&b), format!("seed {seed} differs"))?;
        n += a.len();
    }
    Ok(format!("{n} runs repeated byte-identically"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("coverage oracle equivalence", coverage_oracle),
        ("cluster-manager convergence", cluster_convergence),
        ("velocity/force arithmetic", arithmetic),
        ("recovery monotonicity", recovery_monotone),
        ("holes vs recovery time trend", fig8_trend),
        ("density vs recovery time trend", fig9_trend),
        ("coverage direction at minimum density", fig11_direction),
        ("energy direction at 30 J", fig13_direction),
        ("node computational cost direction", fig12_direction),
        ("protocol accounting", protocol_accounting),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
