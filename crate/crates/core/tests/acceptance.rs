//! Acceptance gate. Runs every primary criterion against an independent
//! oracle and prints one PASS/FAIL line per criterion; exits non-zero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use genbench::consistency::sign_error;
use genbench::metrics::{classify, kappa, Bucket, ConfusionCounts};
use genbench::record::{CellKey, GridAxes, KappaThresholds};
use genbench::stats::{marginals, read_grid_csv, summarize, CellStats, Dimension, StatGrid, Statistic};
use genbench::synth::{ConflictProfile, ErrorProfile, SynthSpec};
use genbench::tradeoff::{find_tradeoff, TradeOffConfig, TradeOffError};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn genbench(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_genbench"))
        .args(args)
        .output()
        .expect("run genbench");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr),
    )
}

fn tradeoff_rows(path: &Path) -> BTreeMap<String, String> {
    let text = fs::read_to_string(path).expect("tradeoff.csv");
    text.lines()
        .skip(1)
        .filter_map(|l| l.split_once(','))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

// ---- kappa ----

fn kappa_oracle(a: u64, b: u64, c: u64, d: u64, eps: f64) -> f64 {
    let n = (a + b + c + d) as f64;
    let (a, b, c, d) = (a as f64, b as f64, c as f64, d as f64);
    let p1 = (a + d) / n;
    let p2 = ((a + b) * (a + c) + (c + d) * (b + d)) / (n * n);
    if 1.0 - p2 < eps {
        return 0.0;
    }
    ((p1 - p2) / (1.0 - p2)).clamp(-1.0, 1.0)
}

fn criterion_kappa() -> Outcome {
    let mut rng = StdRng::seed_from_u64(11);
    let eps = KappaThresholds::default().epsilon_denominator;
    let start = Instant::now();
    let mut max_err = 0.0f64;
    let mut degenerate = 0;
    let mut degenerate_ok = true;
    let mut tuples: Vec<[u64; 4]> = (1..=100).flat_map(|n| [[n, 0, 0, 0], [0, 0, 0, n]]).collect();
    while tuples.len() < 1000 {
        let n: u64 = rng.random_range(1..=100);
        let a = rng.random_range(0..=n);
        let b = rng.random_range(0..=n - a);
        let c = rng.random_range(0..=n - a - b);
        tuples.push([a, b, c, n - a - b - c]);
    }
    for [a, b, c, d] in tuples {
        let got = kappa(&ConfusionCounts::new(a, b, c, d), eps);
        let want = kappa_oracle(a, b, c, d, eps);
        let (_, p2) = ConfusionCounts::new(a, b, c, d).agreement();
        if 1.0 - p2 < eps {
            degenerate += 1;
            degenerate_ok &= got == 0.0;
        }
        max_err = max_err.max((got - want).abs());
    }
    let elapsed = start.elapsed();
    Outcome {
        name: "kappa oracle",
        pass: max_err <= 1e-12 && degenerate_ok && degenerate > 0 && elapsed < Duration::from_secs(1),
        detail: format!(
            "1000 tuples, max |err| {max_err:e}, {degenerate} degenerate -> 0: {degenerate_ok}, {:.1} ms",
            elapsed.as_secs_f64() * 1e3
        ),
    }
}

// ---- conflict rules ----

fn rule_oracle(p: &[f64], loss: Option<f64>, i: usize, th: &KappaThresholds) -> char {
    let mut m = p[0];
    for v in p {
        if *v > m {
            m = *v;
        }
    }
    let failed_loss = match (loss, th.loss_fail) {
        (Some(l), Some(limit)) => l > limit,
        _ => false,
    };
    if m < th.tau_fail || failed_loss {
        return 'd';
    }
    let mut tie = Vec::new();
    for (j, v) in p.iter().enumerate() {
        if m - v <= th.delta_tie {
            tie.push(j);
        }
    }
    if tie.len() >= 2 && tie.contains(&i) {
        return if m >= th.tau_high { 'a' } else { 'd' };
    }
    let mut first = 0;
    while p[first] != m {
        first += 1;
    }
    if first == i {
        'b'
    } else {
        'c'
    }
}

fn criterion_conflict_rules() -> Outcome {
    let mut rng = StdRng::seed_from_u64(22);
    let mut mismatches = 0;
    let mut seen: BTreeMap<char, usize> = BTreeMap::new();
    for case in 0..10_000 {
        let k = rng.random_range(3..=10);
        let th = if case % 2 == 0 {
            KappaThresholds::default()
        } else {
            KappaThresholds {
                tau_high: rng.random_range(0.3..0.8),
                tau_fail: rng.random_range(0.0..0.25),
                delta_tie: rng.random_range(0.0..0.2),
                loss_fail: if rng.random_bool(0.5) { Some(rng.random_range(0.5..3.0)) } else { None },
                ..KappaThresholds::default()
            }
        };
        // Peaked, flat and tied vectors in roughly equal measure.
        let sharp: f64 = [1.0, 4.0, 20.0][rng.random_range(0..3)];
        let mut p: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powf(sharp)).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total.max(1e-12));
        if rng.random_bool(0.5) {
            let top = p.iter().cloned().fold(f64::MIN, f64::max);
            let j = rng.random_range(0..k);
            p[j] = if rng.random_bool(0.3) { top } else { top - rng.random_range(0.0..0.25) }.max(0.0);
        }
        let loss = rng.random_bool(0.5).then(|| rng.random_range(0.0..4.0));
        let i = rng.random_range(0..k);
        let want = rule_oracle(&p, loss, i, &th);
        let got = match classify(&p, loss, i, &th).bucket() {
            Bucket::A => 'a',
            Bucket::B => 'b',
            Bucket::C => 'c',
            Bucket::D => 'd',
        };
        *seen.entry(want).or_default() += 1;
        if got != want {
            mismatches += 1;
        }
    }
    Outcome {
        name: "conflict-rule oracle",
        pass: mismatches == 0 && seen.len() == 4,
        detail: format!("10000 vectors, {mismatches} mismatches, oracle buckets {seen:?}"),
    }
}

// ---- statistics ----

fn criterion_statistics() -> Outcome {
    let mut rng = StdRng::seed_from_u64(33);
    let mut max_err = 0.0f64;
    let mut constant_exact = true;
    for case in 0..500 {
        let n = match case % 5 {
            0 => 1,
            _ => rng.random_range(1..=120),
        };
        let values: Vec<f64> = if case % 7 == 0 {
            vec![rng.random_range(-1.0..1.0); n]
        } else {
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let s = summarize(&values).expect("non-empty");
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Integer ceiling written out so the oracle shares no helper with the crate.
        #[allow(clippy::manual_div_ceil)]
        let p10 = sorted[(n + 9) / 10 - 1];
        if values.iter().all(|v| *v == values[0]) {
            constant_exact &= s.mean == values[0] && s.sd == 0.0 && s.p10 == values[0];
        }
        max_err = max_err
            .max((s.mean - mean).abs())
            .max((s.sd - sd).abs())
            .max((s.p10 - p10).abs());
    }
    Outcome {
        name: "statistics oracle",
        pass: max_err <= 1e-12 && constant_exact,
        detail: format!("500 distributions, max |err| {max_err:e}, constants exact: {constant_exact}"),
    }
}

// ---- grids ----

fn random_levels(rng: &mut StdRng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    v.shuffle(rng);
    v.truncate(n);
    v.sort_by(f64::total_cmp);
    v
}

fn random_axes(rng: &mut StdRng, nx: usize, ny: usize, nz: usize) -> GridAxes {
    let mut w: Vec<u64> = (1..=40).map(|i| i * 1_000_000).collect();
    w.shuffle(rng);
    w.truncate(nz);
    w.sort();
    GridAxes::new(random_levels(rng, nx), random_levels(rng, ny), w)
}

fn random_grid(rng: &mut StdRng, axes: GridAxes, fill: f64, value: impl Fn(&mut StdRng) -> f64) -> StatGrid {
    let mut grid = StatGrid::new(axes.clone());
    for key in axes.cells() {
        if rng.random_bool(fill) {
            grid.insert(CellStats {
                key,
                m_g: value(rng),
                sd_g: value(rng),
                p10_g: value(rng),
                m_k: value(rng),
                sd_k: value(rng),
                p10_k: value(rng),
                n_classes: 1,
            });
        }
    }
    grid
}

fn criterion_marginal_identity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(44);
    let mut max_err = 0.0f64;
    let mut checked = 0;
    for _ in 0..100 {
        let (nx, ny, nz) = (rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=8));
        let axes = random_axes(&mut rng, nx, ny, nz);
        let mut grid = random_grid(&mut rng, axes, 0.8, |r| r.random_range(-1.0..1.0));
        if grid.cells.is_empty() {
            let key = grid.axes.cells()[0];
            grid.insert(CellStats {
                key,
                m_g: 0.5,
                sd_g: 0.1,
                p10_g: 0.2,
                m_k: -0.3,
                sd_k: 0.05,
                p10_k: -0.4,
                n_classes: 1,
            });
        }
        for dim in Dimension::ALL {
            let set = marginals(&grid, dim, false).expect("marginals");
            for stat in Statistic::ALL {
                let total: f64 = grid.cells.values().map(|c| c.get(stat)).sum();
                let summed: f64 = set.series(stat).iter().sum();
                max_err = max_err.max((total - summed).abs());
                checked += 1;
            }
        }
    }
    Outcome {
        name: "marginal-total identity",
        pass: max_err <= 1e-9,
        detail: format!("100 grids, {checked} (dimension, statistic) sums, max |err| {max_err:e}"),
    }
}

fn tradeoff_oracle(grid: &StatGrid, cfg: &TradeOffConfig) -> Option<(CellKey, usize)> {
    let z_max = *grid.axes.weight_nums.iter().max()? as f64;
    let mut feasible = Vec::new();
    for &x in &grid.axes.zero_shot_levels {
        for &y in &grid.axes.ssim_levels {
            for &z in &grid.axes.weight_nums {
                let key = CellKey::new(x, y, z);
                let Some(c) = grid.cells.get(&key) else { continue };
                let under_weight = match cfg.weight_num_max {
                    Some(max) => z <= max,
                    None => true,
                };
                if x >= cfg.zero_shot_min && y >= cfg.robust_min && under_weight {
                    let obj = c.m_g + c.sd_g + c.p10_g + c.m_k + c.sd_k + c.p10_k;
                    let norm = (1.0 - x).powi(2) + y * y + (z as f64 / z_max).powi(2);
                    feasible.push((x, y, z, obj, norm));
                }
            }
        }
    }
    let best = feasible.iter().map(|f| f.3).fold(f64::INFINITY, f64::min);
    let ties: Vec<_> = feasible.into_iter().filter(|f| f.3 <= best + cfg.objective_tolerance).collect();
    let min_norm = ties.iter().map(|f| f.4).fold(f64::INFINITY, f64::min);
    let mut stage2: Vec<_> = ties.iter().filter(|f| f.4 == min_norm).collect();
    // Larger zero-shot, then smaller SSIM, then smaller model.
    stage2.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    let w = stage2.first()?;
    Some((CellKey::new(w.0, w.1, w.2), ties.len()))
}

fn criterion_tradeoff() -> Outcome {
    let mut rng = StdRng::seed_from_u64(55);
    let mut agree = 0;
    let mut multi_tie = 0;
    let mut runs = 0;
    while runs < 100 {
        let axes = random_axes(&mut rng, 6, 6, 8);
        let grid = random_grid(&mut rng, axes.clone(), 1.0, |r| r.random_range(0..3) as f64 * 0.25);
        let cfg = TradeOffConfig {
            zero_shot_min: axes.zero_shot_levels[rng.random_range(0..3)],
            robust_min: axes.ssim_levels[rng.random_range(0..3)],
            weight_num_max: rng.random_bool(0.7).then(|| axes.weight_nums[rng.random_range(3..8)]),
            objective_tolerance: 1e-9,
        };
        let Some((key, ties)) = tradeoff_oracle(&grid, &cfg) else { continue };
        runs += 1;
        if ties > 1 {
            multi_tie += 1;
        }
        if let Ok(p) = find_tradeoff(&grid, &cfg) {
            if p.key == key && p.tie_set_size == ties {
                agree += 1;
            }
        }
    }
    let axes = random_axes(&mut rng, 6, 6, 8);
    let grid = random_grid(&mut rng, axes, 1.0, |r| r.random::<f64>());
    let impossible = TradeOffConfig {
        zero_shot_min: 2.0,
        ..TradeOffConfig::default()
    };
    let empty_ok = matches!(find_tradeoff(&grid, &impossible), Err(TradeOffError::EmptyFeasibleSet { .. }));
    Outcome {
        name: "trade-off oracle",
        pass: agree == 100 && empty_ok,
        detail: format!("{agree}/100 agree ({multi_tie} with objective ties), empty set error: {empty_ok}"),
    }
}

// ---- sign-error ----

fn map(pairs: &[(u64, f64)]) -> BTreeMap<u64, f64> {
    pairs.iter().copied().collect()
}

fn criterion_sign_error() -> Outcome {
    let mut failures = Vec::new();
    let dtr = map(&[(5, 0.1), (10, 0.2), (20, 0.3)]);
    let se = |d: &BTreeMap<u64, f64>, c: &BTreeMap<u64, f64>| sign_error(d, c).expect("enough keys").se_g;
    if se(&dtr, &map(&[(5, 1.0), (10, 2.0), (20, 3.0)])) != 0.0 {
        failures.push("concordant".to_string());
    }
    if se(&dtr, &map(&[(5, 3.0), (10, 2.0), (20, 1.0)])) != 1.0 {
        failures.push("anti-concordant".to_string());
    }
    let tied = se(&map(&[(5, 0.1), (10, 0.1), (20, 0.3)]), &map(&[(5, 1.0), (10, 2.0), (20, 3.0)]));
    if (tied - 0.5 / 3.0).abs() > 1e-12 {
        failures.push(format!("tie example gave {tied}"));
    }

    let mut rng = StdRng::seed_from_u64(66);
    let mut complement_max = 0.0f64;
    let mut transform_mismatch = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let keys: Vec<u64> = (1..=n as u64).map(|i| i * 1_000_000).collect();
        // Tie-free: distinct values from shuffled ranks.
        let mut ranks_d: Vec<i64> = (0..n as i64).collect();
        let mut ranks_c = ranks_d.clone();
        ranks_d.shuffle(&mut rng);
        ranks_c.shuffle(&mut rng);
        let d: BTreeMap<u64, f64> = keys.iter().zip(&ranks_d).map(|(k, r)| (*k, *r as f64 * 0.1)).collect();
        let c: BTreeMap<u64, f64> = keys.iter().zip(&ranks_c).map(|(k, r)| (*k, *r as f64)).collect();
        let neg: BTreeMap<u64, f64> = c.iter().map(|(k, v)| (*k, -v)).collect();
        complement_max = complement_max.max((se(&d, &c) + se(&d, &neg) - 1.0).abs());

        // Small integer values so ties occur; strictly increasing transforms keep them.
        let d: BTreeMap<u64, f64> = keys.iter().map(|k| (*k, rng.random_range(0..5) as f64)).collect();
        let c: BTreeMap<u64, f64> = keys.iter().map(|k| (*k, rng.random_range(0..5) as f64)).collect();
        let c_t: BTreeMap<u64, f64> = c.iter().map(|(k, v)| (*k, v * v * v + 3.0 * v - 7.0)).collect();
        let d_t: BTreeMap<u64, f64> = d.iter().map(|(k, v)| (*k, v.exp())).collect();
        if se(&d, &c) != se(&d_t, &c_t) {
            transform_mismatch += 1;
        }
    }
    if complement_max > 1e-12 {
        failures.push(format!("complement deviates by {complement_max:e}"));
    }
    if transform_mismatch > 0 {
        failures.push(format!("{transform_mismatch} monotone-transform mismatches"));
    }
    Outcome {
        name: "sign-error properties",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("worked examples exact, complement max |err| {complement_max:e}, 100 transformed tables invariant")
        } else {
            failures.join("; ")
        },
    }
}

// ---- end to end ----

fn planted_spec(plant: CellKey, seed: u64) -> SynthSpec {
    SynthSpec {
        seed,
        axes: GridAxes::new(
            vec![0.0, 0.25, 0.5],
            vec![0.7, 0.85, 1.0],
            vec![5_000_000, 10_000_000, 20_000_000, 40_000_000],
        ),
        n_classes: 5,
        samples_per_class_per_cell: 200,
        error_profile: ErrorProfile::default(),
        conflict_profile: ConflictProfile {
            near_tie_fraction: 0.1,
            high_confidence_share: 0.5,
        },
        planted_tradeoff: Some(plant),
        plant_margin: 0.1,
        thresholds: KappaThresholds::default(),
    }
}

fn criterion_planted_recovery(work: &Path) -> Outcome {
    let plants = [
        CellKey::new(0.25, 0.85, 10_000_000),
        CellKey::new(0.5, 0.7, 40_000_000),
        CellKey::new(0.0, 1.0, 5_000_000),
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for (i, plant) in plants.iter().enumerate() {
        let dir = work.join(format!("planted{i}"));
        fs::create_dir_all(&dir).unwrap();
        let spec_path = dir.join("spec.json");
        fs::write(&spec_path, serde_json::to_string_pretty(&planted_spec(*plant, 100 + i as u64)).unwrap()).unwrap();
        let start = Instant::now();
        let s = |p: &Path| p.to_str().unwrap().to_string();
        let (rc1, log1) = genbench(&["synth", "--spec", &s(&spec_path), "--out", &s(&dir.join("data"))]);
        let (rc2, log2) = genbench(&[
            "analyze",
            "--manifest",
            &s(&dir.join("data/manifest.json")),
            "--records",
            &s(&dir.join("data/records.jsonl")),
            "--out",
            &s(&dir.join("report")),
        ]);
        let elapsed = start.elapsed();
        if rc1 != 0 || rc2 != 0 {
            pass = false;
            details.push(format!("{plant}: exit codes {rc1}/{rc2}: {log1} {log2}"));
            continue;
        }
        let rows = tradeoff_rows(&dir.join("report/tradeoff.csv"));
        let found = CellKey::new(
            rows["ZEROSHOT(upper bound)"].parse().unwrap(),
            rows["SSIM(lower bound)"].parse().unwrap(),
            rows["WEIGHT NUM"].parse().unwrap(),
        );
        let ok = found == *plant && elapsed < Duration::from_secs(60);
        pass &= ok;
        details.push(format!("{plant} -> {found} in {:.2} s", elapsed.as_secs_f64()));
    }
    Outcome {
        name: "planted trade-off recovery",
        pass,
        detail: format!("3x3x4 grid, 5 classes, 200 samples/class/cell: {}", details.join("; ")),
    }
}

fn criterion_table_layout(work: &Path) -> Outcome {
    let fx = fixtures().join("tradeoff_layout");
    let out = work.join("tradeoff_layout");
    let (rc, log) = genbench(&[
        "analyze",
        "--manifest",
        fx.join("manifest.json").to_str().unwrap(),
        "--grid",
        fx.join("grid.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    if rc != 0 {
        return Outcome {
            name: "table layout round trip",
            pass: false,
            detail: format!("analyze exited {rc}: {log}"),
        };
    }
    let rows = tradeoff_rows(&out.join("tradeoff.csv"));
    let expected = [
        ("GENERALIZATION BOUND", "0.364"),
        ("DIVERSITY BOUND", "0.087"),
        ("SSIM(lower bound)", "0.779"),
        ("ZEROSHOT(upper bound)", "0.175"),
        ("MODEL SIZE(lower bound)", "167M"),
    ];
    let rendered: Vec<&str> = expected.iter().map(|(k, _)| rows.get(*k).map_or("?", |v| v.as_str())).collect();
    let values_ok = expected.iter().zip(&rendered).all(|((_, want), got)| want == got);
    let read = |p: &Path| read_grid_csv(fs::File::open(p).unwrap(), None).unwrap();
    let written = read(&out.join("grid.csv"));
    let round_trip = written == read(&fx.join("grid.csv"))
        && find_tradeoff(&written, &TradeOffConfig::default()).map(|p| p.key).ok()
            == Some(CellKey::new(0.175, 0.779, 167_000_000));
    Outcome {
        name: "table layout round trip",
        pass: values_ok && round_trip,
        detail: format!("rendered {} ; grid.csv round trip: {round_trip}", rendered.join(" / ")),
    }
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn criterion_determinism(work: &Path) -> Outcome {
    let fx = fixtures();
    let spec = fx.join("demo_spec.json");
    let mut runs: Vec<(BTreeMap<String, Vec<u8>>, String)> = Vec::new();
    for run in 0..2 {
        let base = work.join(format!("det{run}"));
        let s = |p: PathBuf| p.to_str().unwrap().to_string();
        let data = s(base.join("data"));
        let manifest = s(base.join("data/manifest.json"));
        let records = s(base.join("data/records.jsonl"));
        let mut log = String::new();
        let steps: Vec<Vec<String>> = vec![
            vec!["synth".into(), "--spec".into(), s(spec.clone()), "--out".into(), data.clone()],
            vec!["validate".into(), "--manifest".into(), manifest.clone(), "--records".into(), records.clone()],
            vec![
                "analyze".into(),
                "--manifest".into(),
                manifest.clone(),
                "--records".into(),
                records.clone(),
                "--out".into(),
                s(base.join("analyze")),
                "--dump-rules".into(),
            ],
            vec![
                "consistency".into(),
                "--manifest".into(),
                manifest,
                "--records".into(),
                records,
                "--complexity".into(),
                s(fx.join("demo_complexity.csv")),
                "--out".into(),
                s(base.join("consistency")),
            ],
        ];
        for step in steps {
            let args: Vec<&str> = step.iter().map(String::as_str).collect();
            let (rc, out) = genbench(&args);
            log.push_str(&format!("{} -> {rc}\n{}", args[0], out.replace(&base.to_string_lossy().into_owned(), "<base>")));
        }
        let mut files = BTreeMap::new();
        for sub in ["data", "analyze", "consistency"] {
            for (name, bytes) in dir_contents(&base.join(sub)) {
                files.insert(format!("{sub}/{name}"), bytes);
            }
        }
        runs.push((files, log));
    }
    let all_ok = runs[0].1.matches("-> 0").count() == 4;
    let same = runs[0] == runs[1];
    Outcome {
        name: "determinism",
        pass: same && all_ok && runs[0].0.len() >= 14,
        detail: format!(
            "{} output files and stdout of 4 commands byte-identical across reruns: {same}; all exit 0: {all_ok}",
            runs[0].0.len()
        ),
    }
}

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let outcomes = vec![
        criterion_kappa(),
        criterion_conflict_rules(),
        criterion_statistics(),
        criterion_marginal_identity(),
        criterion_tradeoff(),
        criterion_sign_error(),
        criterion_planted_recovery(work.path()),
        criterion_table_layout(work.path()),
        criterion_determinism(work.path()),
    ];
    println!();
    for o in &outcomes {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
