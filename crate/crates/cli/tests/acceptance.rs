//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::HashMap;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use common::fixture;
use msl_core::datasets::{
    dedup_check, dhash, dhash_hex, hamming, split, DatasetManifest, Label, SampleRecord, Source, Split, SplitMix,
    SplitRatios,
};
use msl_core::engine::{concat, conv2d, conv2d_reference, softmax, split2};
use msl_core::golden::{replay, GoldenBundle};
use msl_core::imaging::{decode, RawImage};
use msl_core::metrics::{class_metrics, confusion, wilson_interval, ConfusionMatrix};
use msl_core::model_io::{
    load_model, nano_classifier, sha256_hex, validate_envelope, write_model_file, ModelMetadata,
};
use msl_core::tensor::Tensor;
use msl_core::training::{run_early_stopping, TrainingConfig};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pp(a: f64, b: f64) -> f64 {
    (a - b).abs() * 100.0
}

fn names() -> Vec<String> {
    ModelMetadata::default_class_names()
}

fn c1_wilson() -> Check {
    let (lo, hi) = wilson_interval(485, 500, 0.95).map_err(|e| e.to_string())?;
    ensure((0.949..=0.953).contains(&lo) && (0.980..=0.984).contains(&hi), || {
        format!("485/500 gave [{lo:.5}, {hi:.5}]")
    })?;
    ensure(pp(lo, 0.951) <= 0.2 && pp(hi, 0.983) <= 0.2, || format!("485/500 bounds {lo:.5} {hi:.5}"))?;
    let (lo2, hi2) = wilson_interval(960, 1000, 0.95).map_err(|e| e.to_string())?;
    ensure(pp(lo2, 0.946) <= 0.1 && pp(hi2, 0.971) <= 0.1, || {
        format!("960/1000 gave [{lo2:.5}, {hi2:.5}]")
    })?;
    Ok(format!("485/500 -> {:.2}-{:.2}%, 960/1000 -> {:.2}-{:.2}%", lo * 100.0, hi * 100.0, lo2 * 100.0, hi2 * 100.0))
}

fn table_check(counts: Vec<Vec<u64>>, expected: [[f64; 3]; 3], tol_pp: f64) -> Result<f64, String> {
    let cm = ConfusionMatrix::from_counts(names(), counts).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (c, want) in expected.iter().enumerate() {
        let m = class_metrics(&cm, c);
        for (got, want) in [m.precision, m.recall, m.f1].into_iter().zip(want) {
            let got = got.ok_or("undefined metric")?;
            let d = pp(got, want / 100.0);
            worst = worst.max(d);
            ensure(d <= tol_pp, || format!("{}: {:.3}% vs {want}%", names()[c], got * 100.0))?;
        }
    }
    Ok(worst)
}

fn c2_tables() -> Check {
    let t2 = table_check(
        vec![vec![484, 10, 6], vec![23, 472, 5], vec![13, 5, 482]],
        [[93.1, 96.8, 94.9], [96.9, 94.4, 95.6], [97.8, 96.4, 97.1]],
        0.15,
    )?;
    let t3 = table_check(
        vec![vec![168, 10, 2], vec![9, 166, 5], vec![1, 2, 177]],
        [[94.0, 93.0, 94.0], [93.0, 92.0, 93.0], [96.0, 98.0, 97.0]],
        0.5,
    )?;
    Ok(format!("final test worst {t2:.3} pp (limit 0.15), initial test worst {t3:.3} pp (limit 0.5)"))
}

fn c3_metrics_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(3);
    let names = names();
    for round in 0..1000 {
        let n = rng.random_range(1..=10_000usize);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let cm = confusion(&names, &truth, &pred).map_err(|e| e.to_string())?;
        let mut brute = [[0u64; 3]; 3];
        for (t, row) in brute.iter_mut().enumerate() {
            for (p, cell) in row.iter_mut().enumerate() {
                *cell = truth.iter().zip(&pred).filter(|(&a, &b)| a == t && b == p).count() as u64;
            }
        }
        ensure(cm.counts().iter().zip(&brute).all(|(a, b)| a[..] == b[..]), || format!("round {round}: counts differ"))?;
        let correct = truth.iter().zip(&pred).filter(|(a, b)| a == b).count();
        let acc = cm.accuracy().value().ok_or("no accuracy")?;
        ensure(acc == correct as f64 / n as f64, || format!("round {round}: accuracy"))?;
        ensure(cm.micro_recall().value() == Some(acc), || format!("round {round}: micro recall != accuracy"))?;
        for c in 0..3 {
            let tp = truth.iter().zip(&pred).filter(|(&a, &b)| a == c && b == c).count();
            let actual = truth.iter().filter(|&&a| a == c).count();
            let predicted = pred.iter().filter(|&&b| b == c).count();
            let m = class_metrics(&cm, c);
            let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
            ensure(m.precision == ratio(tp, predicted), || format!("round {round}: precision {c}"))?;
            ensure(m.recall == ratio(tp, actual), || format!("round {round}: recall {c}"))?;
            ensure(m.f1 == ratio(2 * tp, actual + predicted), || format!("round {round}: f1 {c}"))?;
        }
    }
    Ok("1000 label sets agree with the brute-force tally".into())
}

fn c4_engine() -> Check {
    let mut rng = StdRng::seed_from_u64(4);
    let mut worst = 0.0f32;
    for case in 0..200 {
        let cin = rng.random_range(1..=32usize);
        let cout = rng.random_range(1..=32usize);
        let k = if rng.random_bool(0.5) { 1 } else { 3 };
        let stride = rng.random_range(1..=2usize);
        let (h, w) = (rng.random_range(4..=64usize), rng.random_range(4..=64usize));
        let x = Tensor::nchw(cin, h, w, (0..cin * h * w).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .map_err(|e| e.to_string())?;
        let kernel = Tensor::new(vec![cout, cin, k, k], (0..cout * cin * k * k).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .map_err(|e| e.to_string())?;
        let bias: Vec<f32> = (0..cout).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let fast = conv2d(&x, &kernel, &bias, stride, k / 2).map_err(|e| e.to_string())?;
        let slow = conv2d_reference(&x, &kernel, &bias, stride, k / 2).map_err(|e| e.to_string())?;
        ensure(fast.shape() == slow.shape(), || format!("case {case}: shape"))?;
        for (a, r) in fast.data().iter().zip(slow.data()) {
            let rel = (a - r).abs() / r.abs().max(1e-6);
            worst = worst.max(rel);
            ensure(rel <= 1e-5, || format!("case {case}: cin {cin} cout {cout} k {k} s {stride} {h}x{w}: {a} vs {r}"))?;
        }
        if cin % 2 == 0 {
            let joined = concat(&[&split2(&x, 0).map_err(|e| e.to_string())?, &split2(&x, 1).map_err(|e| e.to_string())?])
                .map_err(|e| e.to_string())?;
            ensure(joined == x, || format!("case {case}: split/concat"))?;
        }
    }
    for i in 0..10_000 {
        let logits: Vec<f32> = (0..3).map(|_| rng.random_range(-30.0f32..30.0)).collect();
        let p = softmax(&logits);
        ensure(p.iter().all(|&v| (0.0..=1.0).contains(&v)), || format!("triple {i}: out of range"))?;
        ensure((p.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() <= 1e-6, || format!("triple {i}: sum"))?;
        let shift = rng.random_range(-50.0f32..50.0);
        let q = softmax(&logits.iter().map(|l| l + shift).collect::<Vec<_>>());
        ensure(p.iter().zip(&q).all(|(a, b)| (a - b).abs() <= 1e-5), || format!("triple {i}: shift"))?;
    }
    Ok(format!("200 conv shapes, worst relative error {worst:.2e}; 10000 softmax triples"))
}

fn c5_golden() -> Check {
    let model = load_model(fixture("tiny.mslw")).map_err(|e| e.to_string())?;
    let bundle = GoldenBundle::load(fixture("tiny.golden")).map_err(|e| e.to_string())?;
    let r = replay(&model, &bundle).map_err(|e| e.to_string())?;
    for (node, (_, expected)) in r.nodes.iter().zip(&bundle.nodes) {
        let scale = expected.data().iter().fold(1.0f32, |m, v| m.max(v.abs()));
        ensure(node.max_abs_diff <= 1e-3 * scale, || format!("node {} ({}) differs by {}", node.id, node.kind, node.max_abs_diff))?;
    }
    ensure(r.probabilities_max_abs_diff <= 1e-4, || format!("probabilities differ by {}", r.probabilities_max_abs_diff))?;
    let worst = r.worst_node().map(|n| n.max_abs_diff).unwrap_or(0.0);
    Ok(format!("{} nodes, worst {worst:.2e}, probabilities {:.2e}", r.nodes.len(), r.probabilities_max_abs_diff))
}

fn record(id: String, label: Label, source: Source) -> SampleRecord {
    SampleRecord {
        path: format!("{id}.png"),
        sha256: sha256_hex(id.as_bytes()),
        phash: "0000000000000000".into(),
        id,
        label,
        source,
        split: None,
    }
}

/// Records for one dataset with `sizes[c]` images per class; mpox train is
/// half synthetic.
fn dataset(sizes: [usize; 3]) -> DatasetManifest {
    let mut records = Vec::new();
    for (label, &n) in Label::ALL.iter().zip(&sizes) {
        let train = n - (n as f64 * 0.10).round() as usize - (n as f64 * 0.15).round() as usize;
        let synthetic = if *label == Label::Mpox { (train as f64 * 0.5).round() as usize } else { 0 };
        for i in 0..n {
            let source = if i < synthetic { Source::Synthetic } else { Source::Real };
            records.push(record(format!("{}-{i}", label.as_str()), *label, source));
        }
    }
    DatasetManifest::new(records).expect("valid manifest")
}

fn check_split(sizes: [usize; 3], seed: u64, rng: &mut StdRng, exact: bool) -> Result<(), String> {
    let m = dataset(sizes);
    let out = split(&m, SplitRatios::default(), SplitMix::default(), seed).map_err(|e| e.to_string())?;
    for (label, &n) in Label::ALL.iter().zip(&sizes) {
        let count = |s: Split| out.records.iter().filter(|r| r.label == *label && r.split == Some(s)).count();
        let (tr, va, te) = (count(Split::Train), count(Split::Val), count(Split::Test));
        ensure(tr + va + te == n, || format!("{sizes:?}: {label:?} lost records"))?;
        for (got, ratio) in [(tr, 0.75), (va, 0.10), (te, 0.15)] {
            ensure((got as f64 - ratio * n as f64).abs() <= 1.0, || format!("{sizes:?}: {label:?} {tr}/{va}/{te}"))?;
        }
        if exact {
            ensure((tr, va, te) == (900, 120, 180), || format!("{label:?}: {tr}/{va}/{te}"))?;
        }
        if *label == Label::Mpox {
            let synth = out
                .records
                .iter()
                .filter(|r| r.label == Label::Mpox && r.split == Some(Split::Train) && r.source == Source::Synthetic)
                .count();
            ensure((synth as f64 - 0.5 * tr as f64).abs() <= 1.0, || format!("{sizes:?}: {synth} synthetic of {tr}"))?;
        }
    }
    ensure(
        out.records.iter().all(|r| r.source == Source::Real || r.split == Some(Split::Train)),
        || format!("{sizes:?}: synthetic record outside train"),
    )?;
    let mut shuffled = m.records.clone();
    shuffled.shuffle(rng);
    let again = split(&DatasetManifest::new(shuffled).map_err(|e| e.to_string())?, SplitRatios::default(), SplitMix::default(), seed)
        .map_err(|e| e.to_string())?;
    let by_id: HashMap<&str, Option<Split>> = out.records.iter().map(|r| (r.id.as_str(), r.split)).collect();
    ensure(again.records.iter().all(|r| by_id[r.id.as_str()] == r.split), || format!("{sizes:?}: permutation changed the split"))
}

fn c6_split() -> Check {
    let mut rng = StdRng::seed_from_u64(6);
    check_split([1200; 3], 42, &mut rng, true)?;
    for _ in 0..100 {
        let sizes = [0; 3].map(|_| rng.random_range(40..=5000usize));
        let seed = rng.random();
        check_split(sizes, seed, &mut rng, false)?;
    }
    Ok("1200/class -> 900/120/180; 100 random size sets within one sample".into())
}

/// Smooth random texture: a few oriented sinusoids per channel plus noise.
fn texture(seed: u64) -> RawImage {
    let mut rng = StdRng::seed_from_u64(seed);
    let (w, h) = (rng.random_range(96..=160u32), rng.random_range(96..=160u32));
    let waves: Vec<[f64; 5]> = (0..9)
        .map(|_| {
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let freq: f64 = rng.random_range(0.5..4.0);
            [angle.cos() * freq, angle.sin() * freq, rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(20.0..60.0), 0.0]
        })
        .collect();
    let mut px = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
            for c in 0..3 {
                let mut s = 128.0;
                for wave in &waves[c * 3..c * 3 + 3] {
                    s += wave[3] * (std::f64::consts::TAU * (wave[0] * u + wave[1] * v) + wave[2]).sin();
                }
                s += rng.random_range(-6.0..6.0);
                px.push(s.clamp(0.0, 255.0) as u8);
            }
        }
    }
    RawImage::new(w, h, px).expect("texture")
}

fn image_record(id: String, bytes: &[u8]) -> Result<SampleRecord, String> {
    let img = decode(bytes).map_err(|e| e.to_string())?;
    Ok(SampleRecord {
        path: format!("{id}.img"),
        sha256: sha256_hex(bytes),
        phash: dhash_hex(&img),
        id,
        label: Label::OtherSkin,
        source: Source::Real,
        split: None,
    })
}

fn c7_dedup() -> Check {
    let mut originals = Vec::new();
    let mut reencoded = Vec::new();
    let mut worst = 0;
    for i in 0..50 {
        let img = texture(7_000 + i);
        let png = img.encode_png().map_err(|e| e.to_string())?;
        let jpeg = decode(&png).map_err(|e| e.to_string())?.encode_jpeg(90).map_err(|e| e.to_string())?;
        worst = worst.max(hamming(dhash(&img), dhash(&decode(&jpeg).map_err(|e| e.to_string())?)));
        originals.push(image_record(format!("orig-{i}"), &png)?);
        reencoded.push(image_record(format!("jpeg-{i}"), &jpeg)?);
    }
    let a = DatasetManifest::new(originals).map_err(|e| e.to_string())?;
    let b = DatasetManifest::new(reencoded).map_err(|e| e.to_string())?;
    let r = dedup_check(&a, &b, 6).map_err(|e| e.to_string())?;
    for i in 0..50 {
        let (x, y) = (format!("orig-{i}"), format!("jpeg-{i}"));
        ensure(r.near.iter().any(|p| p.a_id == x && p.b_id == y), || format!("pair {i} not flagged"))?;
    }
    ensure(r.near.len() == 50 && r.exact.is_empty(), || format!("{} near pairs, {} exact", r.near.len(), r.exact.len()))?;

    let distinct: Vec<u64> = (0..100).map(|i| dhash(&texture(9_000 + i))).collect();
    let mut closest = 64;
    for i in 0..100 {
        for j in i + 1..100 {
            closest = closest.min(hamming(distinct[i], distinct[j]));
        }
    }
    ensure(closest > 6, || format!("distinct fixtures as close as {closest} bits"))?;

    let copies: Vec<SampleRecord> = (0..20)
        .map(|i| {
            let png = texture(11_000 + i).encode_png().map_err(|e| e.to_string())?;
            image_record(format!("copy-{i}"), &png)
        })
        .collect::<Result<_, _>>()?;
    let left = DatasetManifest::new(copies.clone()).map_err(|e| e.to_string())?;
    let right = DatasetManifest::new(
        copies
            .into_iter()
            .map(|mut r| {
                r.id = format!("again-{}", r.id);
                r.path = format!("again/{}", r.path);
                r
            })
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let r = dedup_check(&left, &right, 6).map_err(|e| e.to_string())?;
    ensure(r.exact.len() == 20, || format!("{} of 20 exact copies flagged", r.exact.len()))?;
    Ok(format!("50/50 JPEG-90 pairs flagged (max distance {worst}), closest distinct pair {closest} bits, 20/20 exact copies"))
}

fn c8_early_stopping() -> Check {
    let cfg = TrainingConfig::default();
    let peaked: Vec<f64> = (1..=250).map(|e| if e <= 65 { e as f64 } else { 0.0 }).collect();
    let s = run_early_stopping(&peaked, &cfg).map_err(|e| e.to_string())?;
    ensure((s.best_epoch, s.stopped_at) == (Some(65), Some(115)), || format!("{:?} {:?}", s.best_epoch, s.stopped_at))?;

    let mut rng = StdRng::seed_from_u64(8);
    for round in 0..2000 {
        let cfg = TrainingConfig {
            max_epochs: 10_000,
            patience: rng.random_range(1..=60),
            ..TrainingConfig::default()
        };
        let len = rng.random_range(1..=400usize);
        let metrics: Vec<f64> = (0..len).map(|_| (rng.random_range(0..50) as f64) / 50.0).collect();
        let s = run_early_stopping(&metrics, &cfg).map_err(|e| e.to_string())?;
        let mut best = f64::NEG_INFINITY;
        let mut last_improvement = 0;
        let mut expected = None;
        for (i, &m) in metrics.iter().enumerate() {
            let epoch = i as u32 + 1;
            if m > best {
                best = m;
                last_improvement = epoch;
            }
            if epoch - last_improvement >= cfg.patience {
                expected = Some(epoch);
                break;
            }
        }
        ensure(s.stopped_at == expected, || format!("round {round}: {:?} vs {expected:?}", s.stopped_at))?;
        if let Some(stop) = s.stopped_at {
            ensure(stop == s.best_epoch.unwrap_or(0) + cfg.patience, || format!("round {round}: stop {stop}"))?;
        }
    }
    Ok("best 65 + patience 50 -> stop 115; 2000 random runs stop at best + patience".into())
}

/// Classic BPF program that kills the process on `socket` or `connect`, and
/// on any foreign syscall ABI.
fn no_socket_filter() -> Vec<libc::sock_filter> {
    use libc::{BPF_ABS, BPF_JEQ, BPF_JMP, BPF_K, BPF_LD, BPF_RET, BPF_W};
    const BPF_LD_W_ABS: u16 = (BPF_LD | BPF_W | BPF_ABS) as u16;
    const BPF_JEQ_K: u16 = (BPF_JMP | BPF_JEQ | BPF_K) as u16;
    const BPF_RET_K: u16 = (BPF_RET | BPF_K) as u16;
    const RET_KILL_PROCESS: u32 = libc::SECCOMP_RET_KILL_PROCESS;
    const RET_ALLOW: u32 = libc::SECCOMP_RET_ALLOW;
    #[cfg(target_arch = "x86_64")]
    const AUDIT_ARCH: u32 = 0xC000_003E;
    #[cfg(target_arch = "aarch64")]
    const AUDIT_ARCH: u32 = 0xC000_00B7;
    let stmt = |code, k| libc::sock_filter { code, jt: 0, jf: 0, k };
    let jump = |k, jt, jf| libc::sock_filter { code: BPF_JEQ_K, jt, jf, k };
    vec![
        stmt(BPF_LD_W_ABS, 4),
        jump(AUDIT_ARCH, 1, 0),
        stmt(BPF_RET_K, RET_KILL_PROCESS),
        stmt(BPF_LD_W_ABS, 0),
        jump(libc::SYS_socket as u32, 2, 0),
        jump(libc::SYS_connect as u32, 1, 0),
        stmt(BPF_RET_K, RET_ALLOW),
        stmt(BPF_RET_K, RET_KILL_PROCESS),
    ]
}

/// Runs `msl` pinned to one CPU under the no-socket filter.
fn sandboxed_msl(args: &[&str]) -> std::io::Result<Output> {
    let filter = no_socket_filter();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_msl"));
    cmd.args(args).env_remove("MSL_MODEL").env("RAYON_NUM_THREADS", "1");
    // SAFETY: the closure only issues raw syscalls and allocates nothing
    // between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            let prog = libc::sock_fprog {
                len: filter.len() as u16,
                filter: filter.as_ptr() as *mut libc::sock_filter,
            };
            let mut set: libc::cpu_set_t = std::mem::zeroed();
            libc::CPU_SET(0, &mut set);
            if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            if libc::prctl(libc::PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            if libc::prctl(libc::PR_SET_SECCOMP, libc::SECCOMP_MODE_FILTER, &prog as *const libc::sock_fprog) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            Ok(())
        });
    }
    cmd.output()
}

fn c9_envelope_offline() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model_path = dir.path().join("nano.mslw");
    write_model_file(&nano_classifier(names(), 2024).map_err(|e| e.to_string())?, &model_path).map_err(|e| e.to_string())?;
    let model = load_model(&model_path).map_err(|e| e.to_string())?;
    let env = validate_envelope(&model);
    ensure(env.conforming(), || format!("{:?}", env.messages))?;

    let image_path = dir.path().join("case.png");
    let img = texture(224);
    let img = RawImage::new(224, 224, {
        let mut px = Vec::with_capacity(224 * 224 * 3);
        for y in 0..224 {
            for x in 0..224 {
                px.extend_from_slice(&img.pixel(x % img.width(), y % img.height()));
            }
        }
        px
    })
    .map_err(|e| e.to_string())?;
    std::fs::write(&image_path, img.encode_png().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;

    let (m, i) = (model_path.to_str().unwrap(), image_path.to_str().unwrap());
    let mut walls = Vec::new();
    let mut inference_ms = 0.0;
    for _ in 0..3 {
        let start = Instant::now();
        let out = sandboxed_msl(&["infer", "--model", m, "--image", i, "--json"]).map_err(|e| format!("cannot install the socket filter: {e}"))?;
        walls.push(start.elapsed());
        ensure(out.status.success(), || match out.status.signal() {
            Some(libc::SIGSYS) => "infer attempted to open a socket".into(),
            _ => format!("infer failed: {}", String::from_utf8_lossy(&out.stderr)),
        })?;
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
        inference_ms = v["inference_ms"].as_f64().unwrap_or(f64::NAN);
    }
    walls.sort();
    let median = walls[1];
    ensure(median < Duration::from_millis(500), || format!("median wall time {median:?}"))?;

    // The same filter must catch a process that does open sockets.
    let serve = sandboxed_msl(&["serve", "--model", m, "--port", "0", "--session-log", dir.path().join("s.jsonl").to_str().unwrap()])
        .map_err(|e| e.to_string())?;
    ensure(serve.status.signal() == Some(libc::SIGSYS), || format!("control run was not stopped: {:?}", serve.status))?;

    Ok(format!(
        "{} params, {} bytes; infer median {:.0} ms wall ({inference_ms:.0} ms engine) on one CPU with sockets forbidden",
        model.param_count(),
        model.file_size(),
        median.as_secs_f64() * 1e3
    ))
}

/// Name, runtime budget in seconds, check.
type Criterion = (&'static str, f64, fn() -> Check);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("Wilson CI reproduction", 1.0, c1_wilson),
        ("Table reconstruction", 1.0, c2_tables),
        ("Metrics oracle", 30.0, c3_metrics_oracle),
        ("Engine equivalence", 120.0, c4_engine),
        ("Golden replay", 10.0, c5_golden),
        ("Split contract", 30.0, c6_split),
        ("Dedup calibration", 60.0, c7_dedup),
        ("Early stopping", 1.0, c8_early_stopping),
        ("Envelope and offline inference", 60.0, c9_envelope_offline),
    ];
    let mut failed = 0;
    for (n, (name, budget, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let outcome = match outcome {
            Ok(_) if secs > budget => Err(format!("took {secs:.2} s, budget {budget} s")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({secs:.2} s): {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({secs:.2} s): {why}", n + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
