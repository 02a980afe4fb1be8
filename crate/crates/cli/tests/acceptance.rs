//! Acceptance criteria 1 through 10, one status line each.
//!
//! Set `PADKIT_ACCEPTANCE=1,4,6` to run a subset. The process fails when a
//! criterion fails for any reason other than a documented deviation.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use padkit::data::{load_face, Split, SynthProfile};
use padkit::eval::{eer, hter, Aggregation, ScoreSet};
use padkit::model::{decode_checkpoint, encode_checkpoint, Architecture, Model, ModelConfig};
use padkit::nn::{format_shape, Mode};
use padkit::tensor::Tensor;
use padkit::texture::{
    coalbp_histogram, decode_feature_cache, describe_face, encode_feature_cache, lbp_histogram, lpq_histogram,
    DescriptorConfig, DescriptorKind, LpqParams, Plane, ZERO_TOLERANCE,
};
use padkit_cli::commands::{
    cmd_crosseval, cmd_extract, cmd_gradcheck, cmd_predict, cmd_synth, cmd_train, format_crosseval,
    gradcheck_verdict, CrossEvalArgs, SynthArgs, TrainArgs,
};
use padkit_cli::config::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
    /// Set when the failure is a known, recorded deviation.
    deviation: Option<String>,
}

impl Outcome {
    fn check(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
            deviation: None,
        }
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

// ---------------------------------------------------------------------------
// 1 and 2: architecture tables

const DEEP_ROWS: [(&str, &str, &str, usize); 18] = [
    ("conv1", "160×160×3", "158×158×32", 896),
    ("conv2", "158×158×32", "156×156×32", 9248),
    ("batch_norm1", "156×156×32", "156×156×32", 128),
    ("dropout1", "156×156×32", "156×156×32", 0),
    ("max_pool1", "156×156×32", "78×78×32", 0),
    ("conv3", "78×78×32", "76×76×64", 18_496),
    ("conv4", "76×76×64", "74×74×64", 36_928),
    ("batch_norm2", "74×74×64", "74×74×64", 256),
    ("dropout2", "74×74×64", "74×74×64", 0),
    ("max_pool2", "74×74×64", "37×37×64", 0),
    ("conv5", "37×37×64", "33×33×128", 204_928),
    ("conv6", "33×33×128", "29×29×128", 409_728),
    ("batch_norm3", "29×29×128", "29×29×128", 512),
    ("dropout3", "29×29×128", "29×29×128", 0),
    ("max_pool3", "29×29×128", "14×14×128", 0),
    ("dense1", "25088×1", "512×1", 12_845_568),
    ("batch_norm4", "512×1", "512×1", 2048),
    ("embedding", "512×1", "512×1", 262_656),
];
const DEEP_TOTAL: usize = 13_791_392;
const HEAD_ROWS: [usize; 5] = [0, 524_800, 2048, 131_328, 513];

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_padkit"))
        .args(["inspect", "--json"])
        .env_remove("PADKIT_SEED")
        .output()
        .expect("run padkit inspect");
    let elapsed = start.elapsed();
    assert!(output.status.success(), "inspect failed: {}", String::from_utf8_lossy(&output.stderr));
    let arch: Architecture = serde_json::from_slice(&output.stdout).expect("inspect JSON");
    let deep = arch.deep.expect("deep table");
    let mut mismatches = Vec::new();
    for (row, (name, _, _, params)) in deep.rows.iter().zip(DEEP_ROWS) {
        if row.name != name || row.params != params {
            mismatches.push(format!("{} {} != {name} {params}", row.name, row.params));
        }
    }
    if deep.rows.len() != DEEP_ROWS.len() {
        mismatches.push(format!("{} deep rows", deep.rows.len()));
    }
    if deep.total != DEEP_TOTAL {
        mismatches.push(format!("deep total {}", deep.total));
    }
    let head: Vec<usize> = arch.head.rows.iter().map(|r| r.params).collect();
    let mut head_mismatch = Vec::new();
    for (i, (&got, &want)) in head.iter().zip(&HEAD_ROWS).enumerate() {
        if got != want {
            head_mismatch.push((arch.head.rows[i].name.clone(), got, want));
        }
    }
    let fast = elapsed < Duration::from_secs(1);
    let detail = format!(
        "deep rows and total {} ({}), head rows {:?} vs {:?}, {}",
        if mismatches.is_empty() { "exact" } else { "differ" },
        if mismatches.is_empty() { "13,791,392".to_string() } else { mismatches.join("; ") },
        head,
        HEAD_ROWS,
        secs(elapsed)
    );
    let only_classification = head_mismatch.len() == 1 && head_mismatch[0] == ("classification".into(), 257, 513);
    let mut outcome = Outcome::check(mismatches.is_empty() && head_mismatch.is_empty() && fast, detail);
    if !outcome.pass && mismatches.is_empty() && fast && only_classification {
        outcome.deviation = Some(
            "the classification row over a 256-unit input has 256 + 1 = 257 parameters; 513 would need a 512-unit input"
                .into(),
        );
    }
    outcome
}

fn criterion_2() -> Outcome {
    let mut model = Model::new(ModelConfig::default()).expect("default model");
    let pixels = Tensor::zeros(&[1, 160, 160, 3]).expect("tensor");
    let trace = model.deep_shape_trace(&pixels, Mode::Infer).expect("shape trace");
    let mut mismatches = Vec::new();
    for ((name, size_in, size_out), (want_name, want_in, want_out, _)) in trace.iter().zip(DEEP_ROWS) {
        let got_in = format_shape(size_in);
        let got_out = format_shape(size_out);
        if name != want_name || got_in != want_in || got_out != want_out {
            mismatches.push(format!("{name}: {got_in} -> {got_out}"));
        }
    }
    if trace.len() != DEEP_ROWS.len() {
        mismatches.push(format!("{} traced rows", trace.len()));
    }
    let chain: Vec<String> = trace.iter().map(|(_, _, out)| format_shape(out)).collect();
    Outcome::check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("160×160×3 -> {}", chain.join(" -> "))
        } else {
            mismatches.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------
// 3 and 4: descriptors

fn criterion_3() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = RunConfig::resolve(None, Some(3)).expect("config");
    let records = cmd_synth(
        &SynthArgs {
            out: dir.path().to_path_buf(),
            profile: SynthProfile::A,
            train: 2,
            dev: 0,
            test: 0,
            side: 160,
        },
        &config,
    )
    .expect("synth");
    let face = load_face(&records[0], &config.preprocess()).expect("face");
    let vector = describe_face(&face, &DescriptorConfig::default()).expect("describe");
    let lens = [
        vector.descriptor_len(DescriptorKind::Lbp),
        vector.descriptor_len(DescriptorKind::Coalbp),
        vector.descriptor_len(DescriptorKind::Lpq),
    ];
    Outcome::check(
        lens == [354, 6144, 1536] && vector.len() == 8034,
        format!(
            "LBP {} CoALBP {} LPQ {} (six planes of 256 codes), vector {}",
            lens[0],
            lens[1],
            lens[2],
            vector.len()
        ),
    )
}

fn random_plane(rng: &mut ChaCha8Rng, levels: Option<u8>) -> Plane {
    let data = (0..256)
        .map(|_| match levels {
            Some(n) => rng.random_range(0..n) * (255 / (n - 1).max(1)),
            None => rng.random(),
        })
        .collect();
    Plane::new(16, 16, data).expect("plane")
}

fn normalize(counts: &[u64]) -> Vec<f32> {
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| (c as f64 / total as f64) as f32).collect()
}

fn px(p: &Plane, x: i64, y: i64) -> i64 {
    i64::from(p.data[(y as usize) * p.width + x as usize])
}

/// Circular 8-neighborhood, counter-clockwise from east, `>=` sets the bit;
/// 58 uniform codes in increasing order then one catch-all bin.
fn naive_lbp(p: &Plane) -> Vec<f32> {
    let is_uniform = |code: u32| (0..8).filter(|&i| (code >> i) & 1 != (code >> ((i + 1) % 8)) & 1).count() <= 2;
    let uniform: Vec<u32> = (0..256).filter(|&c| is_uniform(c)).collect();
    let ring = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];
    let mut counts = vec![0u64; 59];
    for y in 1..p.height as i64 - 1 {
        for x in 1..p.width as i64 - 1 {
            let c = px(p, x, y);
            let code: u32 = ring
                .iter()
                .enumerate()
                .map(|(i, (dx, dy))| u32::from(px(p, x + dx, y + dy) >= c) << i)
                .sum();
            counts[uniform.iter().position(|&u| u == code).unwrap_or(58)] += 1;
        }
    }
    normalize(&counts)
}

/// LBP+ on E, N, W, S; pairs at distance 2 along down, right, down-right
/// and down-left, one 16x16 table each.
fn naive_coalbp(p: &Plane) -> Vec<f32> {
    let (w, h) = (p.width as i64, p.height as i64);
    let code = |x: i64, y: i64| -> Option<usize> {
        if x < 1 || y < 1 || x > w - 2 || y > h - 2 {
            return None;
        }
        let c = px(p, x, y);
        let n = [px(p, x + 1, y), px(p, x, y - 1), px(p, x - 1, y), px(p, x, y + 1)];
        Some(n.iter().enumerate().map(|(i, &v)| usize::from(v >= c) << i).sum())
    };
    let mut counts = vec![0u64; 1024];
    for (d, (dx, dy)) in [(0, 2), (2, 0), (2, 2), (-2, 2)].into_iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                if let (Some(a), Some(b)) = (code(x, y), code(x + dx, y + dy)) {
                    counts[d * 256 + a * 16 + b] += 1;
                }
            }
        }
    }
    normalize(&counts)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns
/// eigenvalues and eigenvectors as columns.
fn jacobi_eigen(mut a: [[f64; 8]; 8]) -> ([f64; 8], [[f64; 8]; 8]) {
    let mut v = [[0.0; 8]; 8];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..100 {
        let off: f64 = (0..8).flat_map(|i| (0..8).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..8 {
            for q in p + 1..8 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..8 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..8 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    (std::array::from_fn(|i| a[i][i]), v)
}

/// Whitening rows for a 3x3 window: eigenvectors of the coefficient
/// covariance under pixel correlation `rho^distance`, after the fixed
/// `1 + (7 - i) 1e-6` scaling that separates degenerate pairs; descending
/// eigenvalue order, largest-magnitude entry positive.
fn naive_whitening(alpha: f64, rho: f64) -> [[f64; 8]; 8] {
    let offsets: Vec<(f64, f64)> = (0..9).map(|i| ((i % 3) as f64 - 1.0, (i / 3) as f64 - 1.0)).collect();
    let freqs = [(alpha, 0.0), (alpha, alpha), (0.0, alpha), (alpha, -alpha)];
    let weight = |row: usize, o: (f64, f64)| {
        let (ux, uy) = freqs[row % 4];
        let theta = 2.0 * std::f64::consts::PI * (ux * o.0 + uy * o.1);
        if row < 4 {
            theta.cos()
        } else {
            theta.sin()
        }
    };
    let corr = |a: (f64, f64), b: (f64, f64)| rho.powf(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
    let mut d = [[0.0; 8]; 8];
    for (i, row) in d.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let mut sum = 0.0;
            for &a in &offsets {
                for &b in &offsets {
                    sum += weight(i, a) * corr(a, b) * weight(j, b);
                }
            }
            let scale = |k: usize| 1.0 + (7 - k) as f64 * 1e-6;
            *cell = scale(i) * sum * scale(j);
        }
    }
    let (values, vectors) = jacobi_eigen(d);
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut rows = [[0.0; 8]; 8];
    for (row, &k) in rows.iter_mut().zip(&order) {
        let col: Vec<f64> = (0..8).map(|i| vectors[i][k]).collect();
        let pivot = (0..8).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs())).unwrap_or(0);
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (dst, src) in row.iter_mut().zip(&col) {
            *dst = sign * src;
        }
    }
    rows
}

/// Direct complex STFT of each 3x3 window at (a,0), (a,a), (0,a), (a,-a),
/// optional whitening, bit i set when component i is not below zero.
fn naive_lpq(p: &Plane, params: &LpqParams) -> Vec<f32> {
    let a = params.alpha;
    let freqs = [(a, 0.0), (a, a), (0.0, a), (a, -a)];
    let whitening = params.whitening.then(|| naive_whitening(a, params.rho));
    let mut counts = vec![0u64; 256];
    for cy in 1..p.height as i64 - 1 {
        for cx in 1..p.width as i64 - 1 {
            let mut c = [0.0f64; 8];
            for (i, (ux, uy)) in freqs.iter().enumerate() {
                for yy in -1..=1i64 {
                    for yx in -1..=1i64 {
                        let f = px(p, cx - yx, cy - yy) as f64;
                        let theta = -2.0 * std::f64::consts::PI * (ux * yx as f64 + uy * yy as f64);
                        c[i] += f * theta.cos();
                        c[4 + i] += f * theta.sin();
                    }
                }
            }
            let values = match &whitening {
                Some(w) => std::array::from_fn::<f64, 8, _>(|i| (0..8).map(|j| w[i][j] * c[j]).sum()),
                None => c,
            };
            let code: usize = values.iter().enumerate().map(|(i, &v)| usize::from(v >= -ZERO_TOLERANCE) << i).sum();
            counts[code] += 1;
        }
    }
    normalize(&counts)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let whitened = LpqParams::default();
    let plain = LpqParams {
        whitening: false,
        ..LpqParams::default()
    };
    let mut failures = Vec::new();
    let mut planes = 0;
    for i in 0..150 {
        // a third of the planes use four grey levels, so ties are common
        let levels = (i % 3 == 0).then_some(4);
        let p = random_plane(&mut rng, levels);
        planes += 1;
        if lbp_histogram(&p).expect("lbp") != naive_lbp(&p) {
            failures.push(format!("LBP plane {i}"));
        }
        if coalbp_histogram(&p).expect("coalbp") != naive_coalbp(&p) {
            failures.push(format!("CoALBP plane {i}"));
        }
        if lpq_histogram(&p, &plain).expect("lpq") != naive_lpq(&p, &plain) {
            failures.push(format!("LPQ plane {i}"));
        }
        // point-symmetric windows make whitened components exactly zero, so
        // the whitened comparison uses full-range planes only
        if levels.is_none() && lpq_histogram(&p, &whitened).expect("lpq") != naive_lpq(&p, &whitened) {
            failures.push(format!("whitened LPQ plane {i}"));
        }
    }
    let elapsed = start.elapsed();
    Outcome::check(
        failures.is_empty() && elapsed < Duration::from_secs(60),
        if failures.is_empty() {
            format!("{planes} random 16x16 planes, LBP / CoALBP / LPQ (plain and whitened) exact, {}", secs(elapsed))
        } else {
            format!("{} mismatches: {}", failures.len(), failures.join(", "))
        },
    )
}

// ---------------------------------------------------------------------------
// 5: gradients

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let config = RunConfig::resolve(None, Some(5)).expect("config");
    let entries = cmd_gradcheck(1e-2, 12, &config).expect("gradcheck");
    let elapsed = start.elapsed();
    let worst = entries
        .iter()
        .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
        .expect("entries");
    let verdict = gradcheck_verdict(&entries, 1e-3);
    Outcome::check(
        verdict.is_ok() && elapsed < Duration::from_secs(300),
        format!(
            "{} checks over every layer type and the tiny model in three variants, worst {} at {:.2e}{}, {}",
            entries.len(),
            worst.name,
            worst.max_relative_error,
            verdict.err().map_or(String::new(), |e| format!(" ({e})")),
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------------------
// 6: metrics

/// FAR and FRR at `t` by direct counting.
fn count_rates(genuine: &[f64], spoof: &[f64], t: f64) -> (f64, f64) {
    let far = genuine.iter().filter(|&&g| g > t).count() as f64 / genuine.len() as f64;
    let frr = spoof.iter().filter(|&&s| s <= t).count() as f64 / spoof.len() as f64;
    (far, frr)
}

fn sweep(set: &ScoreSet) -> Vec<(f64, f64, f64)> {
    let (genuine, spoof) = (set.genuine_scores(), set.spoof_scores());
    let mut thresholds: Vec<f64> = genuine.iter().chain(&spoof).copied().collect();
    thresholds.push(f64::NEG_INFINITY);
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds
        .into_iter()
        .map(|t| {
            let (far, frr) = count_rates(&genuine, &spoof, t);
            (t, far, frr)
        })
        .collect()
}

/// EER from an O(n^2) sweep: an exact FAR = FRR point gives that rate,
/// otherwise the bracketing pair is interpolated.
fn brute_eer(set: &ScoreSet) -> f64 {
    let points = sweep(set);
    for pair in points.windows(2) {
        let (da, db) = (pair[0].1 - pair[0].2, pair[1].1 - pair[1].2);
        if da == 0.0 {
            return pair[0].1;
        }
        if db == 0.0 {
            return pair[1].1;
        }
        if da > 0.0 && db < 0.0 {
            let alpha = da / (da - db);
            return pair[0].1 + alpha * (pair[1].1 - pair[0].1);
        }
    }
    unreachable!("the sweep runs from FAR 1 to FRR 1")
}

/// HTER at the dev threshold minimizing |FAR - FRR| (lowest on ties).
fn brute_hter(dev: &ScoreSet, test: &ScoreSet) -> f64 {
    let mut best = (f64::INFINITY, f64::NAN);
    for (t, far, frr) in sweep(dev) {
        if (far - frr).abs() < best.0 {
            best = ((far - frr).abs(), t);
        }
    }
    let (far, frr) = count_rates(&test.genuine_scores(), &test.spoof_scores(), best.1);
    0.5 * (far + frr)
}

fn random_set(rng: &mut ChaCha8Rng) -> ScoreSet {
    let n_g = rng.random_range(1..40);
    let n_s = rng.random_range(1..40);
    let quantum = [0.0, 0.1, 0.01][rng.random_range(0..3)];
    let shift: f64 = rng.random_range(0.0..0.3);
    let mut draw = |spoof: bool| {
        let x: f64 = (rng.random::<f64>() * 0.7 + if spoof { shift } else { 0.0 }).min(1.0);
        if quantum > 0.0 {
            (x / quantum).round() * quantum
        } else {
            x
        }
    };
    let labels: Vec<u8> = (0..n_g).map(|_| 0).chain((0..n_s).map(|_| 1)).collect();
    let scores: Vec<f64> = labels.iter().map(|&l| draw(l == 1).clamp(0.0, 1.0)).collect();
    ScoreSet::from_scores(&labels, &scores).expect("score set")
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut eer_err, mut hter_err) = (0.0f64, 0.0f64);
    let mut invariance_failures = 0;
    for _ in 0..1000 {
        let dev = random_set(&mut rng);
        let test = random_set(&mut rng);
        let e = eer(&test).expect("eer").rate;
        eer_err = eer_err.max((e - brute_eer(&test)).abs());
        let report = hter(&dev, &test).expect("hter");
        hter_err = hter_err.max((report.hter - brute_hter(&dev, &test)).abs());
        for f in [|x: f64| x * x * x, |x: f64| x.sqrt(), |x: f64| (x.exp() - 1.0) / (1.0f64.exp() - 1.0)] {
            let (d2, t2) = (dev.map_scores(f), test.map_scores(f));
            let r2 = hter(&d2, &t2).expect("hter");
            if r2.eer != report.eer || r2.hter != report.hter || r2.dev_eer != report.dev_eer {
                invariance_failures += 1;
            }
        }
    }
    Outcome::check(
        eer_err <= 1e-9 && hter_err <= 1e-9 && invariance_failures == 0,
        format!(
            "1000 random sets: max |EER - sweep| {eer_err:.1e}, max |HTER - sweep| {hter_err:.1e}, {invariance_failures} monotone-transform differences over 3000 transforms"
        ),
    )
}

// ---------------------------------------------------------------------------
// 7 and 8: desk-scale training on synthetic data

/// Learning rate of the desk-scale runs.
const DESK_LEARNING_RATE: f32 = 0.01;

struct Desk {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: RunConfig,
    manifest_a: PathBuf,
    cache_a: PathBuf,
    dual: PathBuf,
    dual_eer: f64,
    elapsed: Duration,
}

fn desk_config(seed: u64) -> RunConfig {
    let mut config = RunConfig::resolve(None, Some(seed)).expect("config");
    config.model.input_side = 64;
    config.learning_rate = DESK_LEARNING_RATE;
    config.epochs = 10;
    config
}

fn train_variant(root: &Path, config: &RunConfig, manifest: &Path, cache: &Path, name: &str) -> PathBuf {
    let out = root.join(format!("{name}.spfc"));
    cmd_train(
        &TrainArgs {
            manifest: manifest.to_path_buf(),
            cache: Some(cache.to_path_buf()),
            out: out.clone(),
            loss_log: None,
            resume: None,
        },
        config,
        &mut |_| {},
    )
    .expect("train");
    out
}

fn desk_run() -> Desk {
    let start = Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path().to_path_buf();
    let config = desk_config(7);
    let data_a = root.join("synth-a");
    cmd_synth(
        &SynthArgs {
            out: data_a.clone(),
            profile: SynthProfile::A,
            train: 2000,
            dev: 500,
            test: 500,
            side: 64,
        },
        &config,
    )
    .expect("synth");
    let manifest_a = data_a.join("manifest.csv");
    let cache_a = data_a.join("features.padf");
    cmd_extract(&manifest_a, &cache_a, &config).expect("extract");
    let dual = train_variant(&root, &config, &manifest_a, &cache_a, "dual");
    let scores = cmd_predict(&dual, &manifest_a, Some(&cache_a), Some(Split::Test), &root.join("dual-test.csv"), &config)
        .expect("predict");
    let dual_eer = eer(&scores).expect("eer").rate;
    Desk {
        _dir: dir,
        root,
        config,
        manifest_a,
        cache_a,
        dual,
        dual_eer,
        elapsed: start.elapsed(),
    }
}

fn criterion_7(desk: &Desk) -> Outcome {
    Outcome::check(
        desk.dual_eer <= 0.05 && desk.elapsed < Duration::from_secs(30 * 60),
        format!(
            "dual channel, 2000 train / 500 test faces at 64x64, 10 epochs: test EER {:.2}%, pipeline {}",
            100.0 * desk.dual_eer,
            secs(desk.elapsed)
        ),
    )
}

fn criterion_8(desk: &Desk) -> Outcome {
    let start = Instant::now();
    let deep = train_variant(
        &desk.root,
        &RunConfig {
            model: ModelConfig {
                variant: padkit::model::Variant::DeepOnly,
                ..desk.config.model.clone()
            },
            ..desk.config.clone()
        },
        &desk.manifest_a,
        &desk.cache_a,
        "deep-only",
    );
    let wide = train_variant(
        &desk.root,
        &RunConfig {
            model: ModelConfig {
                variant: padkit::model::Variant::WideOnly,
                ..desk.config.model.clone()
            },
            ..desk.config.clone()
        },
        &desk.manifest_a,
        &desk.cache_a,
        "wide-only",
    );
    let data_b = desk.root.join("synth-b");
    cmd_synth(
        &SynthArgs {
            out: data_b.clone(),
            profile: SynthProfile::B,
            train: 0,
            dev: 0,
            test: 500,
            side: 64,
        },
        &desk.config,
    )
    .expect("synth b");
    let manifest_b = data_b.join("manifest.csv");
    let cache_b = data_b.join("features.padf");
    cmd_extract(&manifest_b, &cache_b, &desk.config).expect("extract b");
    let report = cmd_crosseval(
        &CrossEvalArgs {
            datasets: vec![("synth-a".into(), desk.manifest_a.clone()), ("synth-b".into(), manifest_b)],
            caches: vec![("synth-a".into(), desk.cache_a.clone()), ("synth-b".into(), cache_b)],
            checkpoints: vec![
                ("synth-a".into(), desk.dual.clone()),
                ("synth-a".into(), deep),
                ("synth-a".into(), wide),
            ],
            out: Some(desk.root.join("crosseval.json")),
        },
        &desk.config,
    )
    .expect("crosseval");
    for line in report.variant_table("synth-a", Aggregation::Frame).lines() {
        println!("    {line}");
    }
    for line in report.train_eval_table("dual", Aggregation::Video).lines() {
        println!("    {line}");
    }
    let cell = |v: &str| report.get("synth-a", "synth-b", v, Aggregation::Frame).expect("cell").eer;
    let (dual, deep, wide) = (cell("dual"), cell("deep-only"), cell("wide-only"));
    let best_single = deep.min(wide);
    let all_cells = report.entries.len() == 3 * 2 * 2 && format_crosseval(&report).contains("wide-only");
    Outcome::check(
        all_cells && dual <= best_single + 0.02,
        format!(
            "A -> B EER: dual {:.2}%, deep-only {:.2}%, wide-only {:.2}% (dual <= best single + 2 points), {}",
            100.0 * dual,
            100.0 * deep,
            100.0 * wide,
            secs(start.elapsed())
        ),
    )
}

// ---------------------------------------------------------------------------
// 9 and 10: determinism and file formats

struct Small {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: RunConfig,
    manifest: PathBuf,
}

fn small_fixture() -> Small {
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path().to_path_buf();
    let mut config = RunConfig::resolve(None, Some(9)).expect("config");
    config.model.input_side = 64;
    config.epochs = 1;
    config.learning_rate = DESK_LEARNING_RATE;
    cmd_synth(
        &SynthArgs {
            out: root.join("data"),
            profile: SynthProfile::A,
            train: 96,
            dev: 0,
            test: 0,
            side: 64,
        },
        &config,
    )
    .expect("synth");
    let manifest = root.join("data/manifest.csv");
    Small {
        _dir: dir,
        root,
        config,
        manifest,
    }
}

fn criterion_9(small: &Small) -> Outcome {
    let caches: Vec<Vec<u8>> = [1, 3]
        .into_iter()
        .map(|threads| {
            let out = small.root.join(format!("cache-{threads}.padf"));
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("pool");
            pool.install(|| cmd_extract(&small.manifest, &out, &small.config)).expect("extract");
            std::fs::read(out).expect("read cache")
        })
        .collect();
    let cache = small.root.join("cache-1.padf");
    let train = |name: &str, config: &RunConfig| {
        let out = train_variant(&small.root, config, &small.manifest, &cache, name);
        std::fs::read(out).expect("read checkpoint")
    };
    let a = train("run-a", &small.config);
    let b = train("run-b", &small.config);
    let other = train(
        "run-c",
        &RunConfig {
            seed: Some(10),
            model: ModelConfig {
                seed: 10,
                ..small.config.model.clone()
            },
            ..small.config.clone()
        },
    );
    Outcome::check(
        caches[0] == caches[1] && a == b && a != other,
        format!(
            "feature caches from 1 and 3 threads {}, two 1-epoch checkpoints {} ({} bytes), another seed {}",
            if caches[0] == caches[1] { "byte-identical" } else { "differ" },
            if a == b { "byte-identical" } else { "differ" },
            a.len(),
            if a != other { "differs" } else { "is identical" }
        ),
    )
}

fn patch_header(bytes: &[u8], edit: impl Fn(&mut serde_json::Value)) -> Vec<u8> {
    let len = u32::from_le_bytes(bytes[5..9].try_into().expect("length")) as usize;
    let mut header: serde_json::Value = serde_json::from_slice(&bytes[9..9 + len]).expect("header");
    edit(&mut header);
    let header = serde_json::to_vec(&header).expect("encode header");
    let mut out = bytes[..5].to_vec();
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&bytes[9 + len..]);
    out
}

fn criterion_10(small: &Small) -> Outcome {
    let ckpt_bytes = std::fs::read(small.root.join("run-a.spfc")).expect("checkpoint");
    let cache_bytes = std::fs::read(small.root.join("cache-1.padf")).expect("cache");
    let ckpt = decode_checkpoint(&ckpt_bytes).expect("decode checkpoint");
    let cache = decode_feature_cache(&cache_bytes).expect("decode cache");
    let bitwise = ckpt.model.params().iter().all(|p| p.value.data().iter().all(|v| v.is_finite()))
        && encode_checkpoint(&ckpt).expect("encode") == ckpt_bytes
        && encode_feature_cache(&cache).expect("encode") == cache_bytes;

    let mut checks: Vec<(&str, String, &str)> = Vec::new();
    let class_of = |r: padkit::error::Result<()>| r.err().map_or("ok".to_string(), |e| e.class().to_string());
    let corrupt = |bytes: &[u8], kind: &str| -> Vec<u8> {
        let mut b = bytes.to_vec();
        match kind {
            "magic" => b[0] ^= 0xff,
            "version" => b[4] = 9,
            "truncate" => {
                b.pop();
            }
            _ => unreachable!(),
        }
        b
    };
    for (kind, want) in [("magic", "corrupt-header"), ("version", "unsupported-version"), ("truncate", "truncated-payload")] {
        checks.push(("checkpoint", class_of(decode_checkpoint(&corrupt(&ckpt_bytes, kind)).map(|_| ())), want));
        checks.push(("cache", class_of(decode_feature_cache(&corrupt(&cache_bytes, kind)).map(|_| ())), want));
    }
    let resized = patch_header(&ckpt_bytes, |h| h["model"]["input_side"] = serde_json::json!(72));
    checks.push(("checkpoint", class_of(decode_checkpoint(&resized).map(|_| ())), "config-mismatch"));
    let relabeled = patch_header(&cache_bytes, |h| h["vector_len"] = serde_json::json!(17));
    checks.push(("cache", class_of(decode_feature_cache(&relabeled).map(|_| ())), "config-mismatch"));

    let wrong: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(what, got, want)| format!("{what}: {got} instead of {want}"))
        .collect();
    Outcome::check(
        bitwise && wrong.is_empty(),
        format!(
            "checkpoint and cache re-encode bit-identically: {bitwise}; {} corruptions -> corrupt-header / unsupported-version / truncated-payload / config-mismatch{}",
            checks.len(),
            if wrong.is_empty() { String::new() } else { format!(" ({})", wrong.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------------------

const TITLES: [&str; 10] = [
    "architecture fidelity",
    "shape fidelity",
    "descriptor dimensions",
    "descriptor oracles",
    "gradient correctness",
    "metric oracles",
    "desk-scale end-to-end",
    "ablation protocol",
    "determinism",
    "checkpoint and cache round-trips",
];

fn main() {
    let selected: Vec<usize> = match std::env::var("PADKIT_ACCEPTANCE") {
        Ok(list) => list.split(',').filter_map(|s| s.trim().parse().ok()).collect(),
        Err(_) => (1..=10).collect(),
    };
    let wanted = |n: usize| selected.contains(&n);
    let mut desk: Option<Desk> = None;
    let mut small: Option<Small> = None;
    let mut unexpected = 0;
    println!("running acceptance criteria {selected:?}");
    for n in 1..=10 {
        if !wanted(n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(desk.get_or_insert_with(desk_run)),
            8 => criterion_8(desk.get_or_insert_with(desk_run)),
            9 => criterion_9(small.get_or_insert_with(small_fixture)),
            10 => {
                let small = small.get_or_insert_with(small_fixture);
                if !small.root.join("run-a.spfc").exists() {
                    criterion_9(small);
                }
                criterion_10(small)
            }
            _ => unreachable!(),
        }));
        let outcome = result.unwrap_or_else(|panic| {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::check(false, format!("panicked: {message}"))
        });
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2} {status} {}: {} [{}]",
            TITLES[n - 1],
            outcome.detail,
            secs(start.elapsed())
        );
        if let Some(d) = &outcome.deviation {
            println!("             documented deviation: {d}");
        } else if !outcome.pass {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}
