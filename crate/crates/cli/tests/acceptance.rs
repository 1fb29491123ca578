//! Acceptance suite. Runs every criterion in sequence (so the latency
//! measurement is not disturbed by sibling tests), prints one PASS/FAIL
//! line per criterion and fails if any criterion fails.

use std::cmp::Ordering;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use adascale_core::oodness::{build_ecdf, ecdf_eval};
use adascale_core::scoring::logsumexp;
use adascale_core::shaping::{shape_scale_fixed, ScaleRoute};
use adascale_core::{
    adascale_score, auroc, fpr_at_95_tpr, scaling_factor, ActivationRecord, HeadParams,
    Hyperparams, ImageTensor, Matrix, Method, MethodConfig, ReferenceNet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_adascale");

type Outcome = Result<String, String>;
type Criterion<'a> = (&'a str, Box<dyn Fn() -> Outcome + 'a>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn run_cli(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(BIN)
        .args(args)
        .env_remove("ADASCALE_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`adascale {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(out)
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(took)
}

// ---------------------------------------------------------------------------
// 1. gradient vs central finite differences

fn random_net(rng: &mut ChaCha8Rng) -> ReferenceNet {
    let shape = [rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=3)];
    let n_in: usize = shape.iter().product();
    let hidden = rng.random_range(1..=12);
    let classes = rng.random_range(2..=5);
    let mut u = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.5..1.5)).collect() };
    ReferenceNet::new(
        shape,
        Matrix::new(hidden, n_in, u(hidden * n_in)).unwrap(),
        u(hidden),
        Matrix::new(classes, hidden, u(classes * hidden)).unwrap(),
        u(classes),
    )
    .unwrap()
}

fn gradient_correctness() -> Outcome {
    const STEP: f64 = 1e-4;
    const TOL: f64 = 1e-5;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF1D1);
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    let mut rejected = 0;
    while trials < 100 {
        let net = random_net(&mut rng);
        let [c, h, w] = net.input_shape();
        let values: Vec<f64> = (0..c * h * w).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = ImageTensor::new(c, h, w, values.clone()).unwrap();
        // keep every hidden pre-activation clear of its kink under ±STEP moves
        let mut kink_safe = true;
        for eps_dir in [-1.0, 1.0] {
            for i in 0..values.len() {
                let mut moved = values.clone();
                moved[i] += eps_dir * STEP;
                let xm = ImageTensor::new(c, h, w, moved).unwrap();
                // activation pattern must match the centre point
                let (a0, _) = net.forward(&x).unwrap();
                let (am, _) = net.forward(&xm).unwrap();
                if a0.iter().zip(&am).any(|(p, q)| (*p > 0.0) != (*q > 0.0)) {
                    kink_safe = false;
                }
            }
        }
        if !kink_safe {
            rejected += 1;
            continue;
        }
        let class = rng.random_range(0..net.num_classes());
        let grad = net.input_gradient(&x, class).unwrap();
        for i in 0..values.len() {
            let eval = |delta: f64| {
                let mut v = values.clone();
                v[i] += delta;
                net.forward(&ImageTensor::new(c, h, w, v).unwrap()).unwrap().1[class]
            };
            let fd = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
            let scale = grad[i].abs().max(fd.abs()).max(1e-6);
            let rel = (grad[i] - fd).abs() / scale;
            worst = worst.max(rel);
            ensure!(rel <= TOL, "trial {trials}, input {i}: analytic {} vs fd {fd} (rel {rel:.2e})", grad[i]);
        }
        trials += 1;
    }
    let took = within(Duration::from_secs(5), start)?;
    Ok(format!("100 nets, worst rel err {worst:.2e}, {rejected} kink-adjacent draws rejected, {took:?}"))
}

// ---------------------------------------------------------------------------
// 2. scaling factor vs sort-based oracle

fn oracle_percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let g = p / 100.0 * (n as f64 - 1.0);
    let i = g.floor() as usize;
    if i >= n - 1 {
        sorted[n - 1]
    } else {
        sorted[i] + (g - i as f64) * (sorted[i + 1] - sorted[i])
    }
}

fn oracle_scaling_factor(a: &[f64], p: f64) -> f64 {
    let mut sorted = a.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let t = oracle_percentile(&sorted, p);
    let total: f64 = sorted.iter().sum();
    let mut above = 0.0;
    for v in sorted.iter().rev() {
        if *v > t {
            above += v;
        } else {
            break;
        }
    }
    if above < 1e-12 {
        1.0
    } else {
        total / above
    }
}

fn scaling_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5CA1E);
    let mut worst: f64 = 0.0;
    let mut degenerate = 0;
    for trial in 0..1000 {
        let d = rng.random_range(4..=512);
        let quantized = trial % 3 == 0;
        let a: Vec<f64> = (0..d)
            .map(|_| {
                let v: f64 = rng.random_range(0.0..5.0);
                if quantized { (v * 2.0).round() / 2.0 } else { v }
            })
            .collect();
        let mut ps: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..=100.0)).collect();
        ps.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut sorted = a.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut prev = f64::NEG_INFINITY;
        for &p in &ps {
            let r = scaling_factor(&a, p).map_err(|e| e.to_string())?;
            let o = oracle_scaling_factor(&a, p);
            worst = worst.max((r - o).abs());
            ensure!((r - o).abs() <= 1e-9, "trial {trial}, D={d}, p={p}: {r} vs oracle {o}");
            // nothing strictly above the threshold: the neutral fallback applies
            let t = oracle_percentile(&sorted, p);
            if sorted.iter().filter(|&&v| v > t).sum::<f64>() < 1e-12 {
                ensure!(r == 1.0, "trial {trial}: degenerate p={p} gave r={r}");
                degenerate += 1;
                continue;
            }
            ensure!(r >= prev, "trial {trial}: r decreased from {prev} to {r} at p={p}");
            prev = r;
        }
    }
    let took = within(Duration::from_secs(10), start)?;
    Ok(format!(
        "1000 vectors x 20 percentiles, max |Δ| {worst:.2e}, monotone wherever defined \
         ({degenerate} tied-maximum points take r=1), {took:?}"
    ))
}

// ---------------------------------------------------------------------------
// 3. eCDF exactness

fn ecdf_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xECDF);
    for trial in 0..100 {
        let n = rng.random_range(1..=300);
        let values: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(-50.0f64..50.0) * 4.0).round() / 4.0)
            .collect();
        let cal = build_ecdf(&values, Hyperparams::default()).map_err(|e| e.to_string())?;
        let mut distinct = values.clone();
        distinct.sort_by(|x, y| x.partial_cmp(y).unwrap());
        distinct.dedup();
        for v in distinct {
            let rank = values.iter().filter(|&&q| q <= v).count();
            let got = ecdf_eval(&cal, v);
            ensure!(got == rank as f64 / n as f64, "trial {trial}: F({v}) = {got}, expected {rank}/{n}");
        }
        let mut queries: Vec<f64> = (0..10_000).map(|_| rng.random_range(-60.0..60.0)).collect();
        queries.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut prev = 0.0;
        for q in queries {
            let f = ecdf_eval(&cal, q);
            ensure!(f >= prev, "trial {trial}: F not monotone at {q}");
            prev = f;
        }
    }
    Ok("100 calibrations exact at every distinct value; monotone on 1e4 queries each".into())
}

// ---------------------------------------------------------------------------
// 4. metrics vs brute force

fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut twice_wins = 0u64;
    for &o in ood {
        for &i in id {
            twice_wins += match o.partial_cmp(&i).unwrap() {
                Ordering::Greater => 2,
                Ordering::Equal => 1,
                Ordering::Less => 0,
            };
        }
    }
    twice_wins as f64 / 2.0 / (id.len() * ood.len()) as f64
}

fn brute_fpr(id: &[f64], ood: &[f64]) -> (f64, f64) {
    let need = (95 * id.len()).div_ceil(100);
    let tau = id
        .iter()
        .copied()
        .filter(|&t| id.iter().filter(|&&v| v <= t).count() >= need)
        .fold(f64::INFINITY, f64::min);
    let fp = ood.iter().filter(|&&v| v <= tau).count();
    (fp as f64 / ood.len() as f64, tau)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA0C);
    for trial in 0..200 {
        let n = rng.random_range(1..=200);
        let m = rng.random_range(1..=200);
        let tied = trial % 2 == 0;
        let mut draw = |shift: f64| -> f64 {
            let v: f64 = rng.random_range(-3.0..3.0) + shift;
            if tied { v.round() } else { v }
        };
        let id: Vec<f64> = (0..n).map(|_| draw(0.0)).collect();
        let ood: Vec<f64> = (0..m).map(|_| draw(0.7)).collect();
        let a = auroc(&id, &ood).map_err(|e| e.to_string())?;
        let b = brute_auroc(&id, &ood);
        ensure!(a == b, "trial {trial}: auroc {a} vs brute {b}");
        let f = fpr_at_95_tpr(&id, &ood).map_err(|e| e.to_string())?;
        let g = brute_fpr(&id, &ood);
        ensure!(f == g, "trial {trial}: fpr/tau {f:?} vs brute {g:?}");
    }
    let worked = auroc(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
    ensure!(worked == 0.75, "worked AUROC {worked}");
    let id: Vec<f64> = (1..=20).map(f64::from).collect();
    let (fpr, tau) = fpr_at_95_tpr(&id, &[18.0, 19.0, 20.0, 21.0]).unwrap();
    ensure!(fpr == 0.5 && tau == 19.0, "worked FPR@95 {fpr} at τ={tau}");
    Ok("200 random instances exact; worked examples 0.75 and 0.5 @ τ=19 exact".into())
}

// ---------------------------------------------------------------------------
// 5. collapsed band equals the static baselines

fn degeneracy_to_baseline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xDE6E);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let d = rng.random_range(4..=64);
        let c = rng.random_range(2..=6);
        let head = HeadParams::new(
            Matrix::new(c, d, (0..c * d).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap(),
            (0..c).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(0.0f64..2.0).max(0.0)).collect();
        let a_eps: Vec<f64> = a.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
        let z = head.logits(&a).unwrap();
        let rec = ActivationRecord::new(a.clone(), Some(a_eps), z.clone()).unwrap();
        let p = rng.random_range(50.0..99.0);
        let hp = Hyperparams { p_min: p, p_max: p, ..Hyperparams::default() };
        let cal_values: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..30.0)).collect();
        let cal = build_ecdf(&cal_values, hp).unwrap();
        for (method, route) in [(Method::AdascaleA, ScaleRoute::Activation), (Method::AdascaleL, ScaleRoute::Logit)] {
            let cfg = MethodConfig::new(method).with_hyperparams(hp).with_calibration(cal.clone());
            let (score, _) = adascale_score(&rec, &head, &cfg).map_err(|e| e.to_string())?;
            let fixed = shape_scale_fixed(&a, &z, p, &head, route).map_err(|e| e.to_string())?;
            let baseline = -logsumexp(&fixed.shaped_logits);
            let diff = (score - baseline).abs();
            worst = worst.max(diff);
            ensure!(diff <= 1e-12, "trial {trial} {method}: {score} vs {baseline}");
        }
    }
    Ok(format!("100 records x 2 variants, max |Δ| {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 6. worked chain

fn worked_chain() -> Outcome {
    let a = vec![1.0, 2.0, 3.0, 4.0];
    let head = HeadParams::identity(4);
    let hp = Hyperparams { p_min: 60.0, p_max: 75.0, k1_frac: 0.25, k2_frac: 0.25, ..Hyperparams::default() };
    // Q' of the record is 4 (no shift, C_o = 4); every calibration value exceeds it, so F = 0
    let cal = build_ecdf(&[10.0, 20.0], hp).unwrap();
    let rec = ActivationRecord::new(a.clone(), Some(a.clone()), a.clone()).unwrap();
    let cfg = MethodConfig::new(Method::AdascaleL).with_hyperparams(hp).with_calibration(cal.clone());
    let (score, out) = adascale_score(&rec, &head, &cfg).map_err(|e| e.to_string())?;
    ensure!(ecdf_eval(&cal, 4.0) == 0.0, "F != 0");
    ensure!(out.percentile_used == 75.0, "p = {}", out.percentile_used);
    ensure!((out.r - 2.5).abs() <= 1e-12, "r = {}", out.r);
    let expected = -(6.25f64.exp() + 12.5f64.exp() + 18.75f64.exp() + 25.0f64.exp()).ln();
    ensure!((score - expected).abs() <= 1e-12, "score {score} vs {expected}");
    Ok(format!("p=75, r={}, score={score:.12}", out.r))
}

// ---------------------------------------------------------------------------
// 7. synthetic end-to-end

fn synthetic_end_to_end(dir: &Path) -> Outcome {
    let start = Instant::now();
    let json = dir.join("demo7.json");
    run_cli(&["demo", "--seed", "7", "--out", json.to_str().unwrap()])?;
    let took = within(Duration::from_secs(60), start)?;
    let rep: Value = serde_json::from_str(&fs::read_to_string(&json).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let cfg = &rep["config"];
    for (key, want) in [("n_train", 400), ("n_calib", 100), ("n_test", 200), ("n_ood", 200)] {
        ensure!(cfg[key] == want, "{key} = {}, expected {want}", cfg[key]);
    }
    ensure!(cfg["ood_displacement"].as_f64().unwrap() >= 6.0, "OOD displacement below 6σ");
    let q_id = rep["mean_q_id"].as_f64().unwrap();
    let q_ood = rep["mean_q_ood"].as_f64().unwrap();
    let auroc_of = |m: &str| {
        rep["results"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["method"] == m)
            .and_then(|r| r["auroc"].as_f64())
            .unwrap()
    };
    let (ada, energy) = (auroc_of("adascale_a"), auroc_of("energy"));
    ensure!(q_ood > q_id, "mean Q OOD {q_ood} not above ID {q_id}");
    ensure!(ada >= energy, "AdaSCALE-A AUROC {ada} below energy {energy}");
    Ok(format!(
        "Q_OOD/Q_ID = {:.3}, AUROC adascale_a {ada:.4} >= energy {energy:.4}, {took:?}",
        q_ood / q_id
    ))
}

// ---------------------------------------------------------------------------
// 8. determinism of every subcommand

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Runs the full CLI workflow into `root`, returning captured stdout.
fn workflow(root: &Path, threads: &str) -> Result<Vec<u8>, String> {
    for mode in ["trivial", "random"] {
        fs::create_dir_all(root.join(mode)).map_err(|e| e.to_string())?;
    }
    let p = |s: &str| root.join(s).display().to_string();
    let mut stdout = Vec::new();
    let mut go = |args: Vec<String>| -> Result<(), String> {
        let mut full = vec!["--threads".to_string(), threads.to_string()];
        full.extend(args);
        let refs: Vec<&str> = full.iter().map(String::as_str).collect();
        stdout.extend(run_cli(&refs)?.stdout);
        Ok(())
    };
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();

    for mode in ["trivial", "random"] {
        let ex = p(&format!("{mode}/dumps"));
        go(s(&["demo", "--seed", "11", "--pixel-mode", mode, "--out", &p(&format!("{mode}/demo.json")), "--export-dir", &ex]))?;
        let cal = p(&format!("{mode}/cal.json"));
        go(s(&["calibrate", "--dump", &format!("{ex}/id_calib"), "--pixel-mode", mode, "--out", &cal]))?;
        for method in Method::ALL {
            let m = method.as_str();
            for split in ["id_test", "ood"] {
                let mut args = s(&["score", "--dump", &format!("{ex}/{split}"), "--method", m,
                    "--pixel-mode", mode, "--out", &p(&format!("{mode}/{m}_{split}.csv"))]);
                if method.is_adaptive() {
                    args.extend(s(&["--calibration", &cal]));
                }
                if method == Method::React {
                    args.extend(s(&["--clip-from", &format!("{ex}/id_calib")]));
                }
                go(args)?;
            }
            go(s(&["evaluate", "--id", &p(&format!("{mode}/{m}_id_test.csv")), "--ood",
                &p(&format!("{mode}/{m}_ood.csv")), "--out", &p(&format!("{mode}/{m}_eval.json"))]))?;
        }
        go(s(&["sweep", "--id-dump", &format!("{ex}/id_test"), "--ood-dump", &format!("{ex}/ood"),
            "--calibration", &cal, "--pixel-mode", mode, "--out", &p(&format!("{mode}/sweep.json"))]))?;
        go(s(&["raw-q", "--id-dump", &format!("{ex}/id_test"), "--ood-dump", &format!("{ex}/ood"),
            "--out", &p(&format!("{mode}/rawq.json"))]))?;
    }
    // generation path: perturbed activations produced on the fly through the saved network
    let bare = root.join("random/bare");
    fs::create_dir_all(&bare).map_err(|e| e.to_string())?;
    let src = root.join("random/dumps/id_calib");
    for f in ["act.bin", "logits.bin", "head_w.bin", "head_b.bin", "labels.bin", "images.bin"] {
        fs::copy(src.join(f), bare.join(f)).map_err(|e| e.to_string())?;
    }
    let manifest = fs::read_to_string(src.join("manifest.json"))
        .map_err(|e| e.to_string())?
        .replace("\"has_perturbed\": true", "\"has_perturbed\": false");
    fs::write(bare.join("manifest.json"), manifest).map_err(|e| e.to_string())?;
    go(s(&["calibrate", "--dump", &p("random/bare"), "--net", &p("random/dumps/net"), "--pixel-mode",
        "random", "--seed", "11", "--out", &p("random/cal_generated.json")]))?;
    Ok(stdout)
}

fn determinism(dir: &Path) -> Outcome {
    let (a, b, c) = (dir.join("run_a"), dir.join("run_b"), dir.join("run_c"));
    let out_a = workflow(&a, "1")?;
    let out_b = workflow(&b, "1")?;
    let out_c = workflow(&c, "4")?;
    ensure!(out_a == out_b, "stdout differs between identical runs");
    ensure!(out_a == out_c, "stdout differs between 1 and 4 threads");
    let (sa, sb, sc) = (snapshot(&a), snapshot(&b), snapshot(&c));
    ensure!(sa.len() == sb.len() && sa.len() == sc.len(), "different file sets");
    for ((fa, da), ((_, db), (_, dc))) in sa.iter().zip(sb.iter().zip(&sc)) {
        ensure!(da == db, "{fa} differs between identical runs");
        ensure!(da == dc, "{fa} differs between 1 and 4 threads");
    }
    // the on-the-fly random perturbation reproduces the exported one
    let generated = fs::read(a.join("random/cal_generated.json")).unwrap();
    let exported = fs::read(a.join("random/cal.json")).unwrap();
    let gen: Value = serde_json::from_slice(&generated).unwrap();
    let exp: Value = serde_json::from_slice(&exported).unwrap();
    // dumps hold f32, so allow storage rounding
    let (gq, eq) = (gen["q_values"].as_array().unwrap(), exp["q_values"].as_array().unwrap());
    ensure!(gq.len() == eq.len(), "generated calibration length differs");
    for (g, e) in gq.iter().zip(eq) {
        let (g, e) = (g.as_f64().unwrap(), e.as_f64().unwrap());
        ensure!((g - e).abs() <= 1e-5 * e.abs().max(1e-6), "regenerated Q' {g} vs exported {e}");
    }
    Ok(format!("{} output files byte-identical across 3 runs (trivial + random modes, 1 and 4 threads)", sa.len()))
}

// ---------------------------------------------------------------------------
// 9. latency harness

fn latency_shape(dir: &Path) -> Outcome {
    let json = dir.join("latency.json");
    run_cli(&["bench-percentile", "--out", json.to_str().unwrap()])?;
    let rows: Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    let dims: Vec<f64> = rows.iter().map(|r| r["dim"].as_f64().unwrap()).collect();
    ensure!(dims == [128.0, 512.0, 1024.0, 2048.0, 3072.0], "dims {dims:?}");
    let ratios: Vec<f64> = rows.iter().map(|r| r["ratio"].as_f64().unwrap()).collect();
    for r in rows {
        ensure!(r["variable_us"].as_f64() > r["fixed_us"].as_f64(), "variable not slower at D={}", r["dim"]);
    }
    ensure!(ratios[4] < ratios[0], "ratio at D=3072 ({}) not below D=128 ({})", ratios[4], ratios[0]);
    // least-squares slope of ratio against ln D
    let xs: Vec<f64> = dims.iter().map(|d| d.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 5.0, ratios.iter().sum::<f64>() / 5.0);
    let slope = xs.iter().zip(&ratios).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    ensure!(slope < 0.0, "ratio trend not decreasing (slope {slope})");
    Ok(format!(
        "ratios {} (slope vs ln D {slope:.3})",
        ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(" → ")
    ))
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let criteria: Vec<Criterion> = vec![
        ("gradient correctness", Box::new(gradient_correctness)),
        ("percentile/scaling oracle", Box::new(scaling_oracle)),
        ("eCDF exactness", Box::new(ecdf_exactness)),
        ("metric oracles", Box::new(metric_oracles)),
        ("degeneracy to static baseline", Box::new(degeneracy_to_baseline)),
        ("adaptive scaling worked chain", Box::new(worked_chain)),
        ("synthetic end-to-end (seed 7)", Box::new(|| synthetic_end_to_end(dir))),
        ("CLI determinism", Box::new(|| determinism(dir))),
        ("latency harness shape", Box::new(|| latency_shape(dir))),
    ];
    // written to the raw handle so the report shows without --nocapture
    let mut out = std::io::stdout();
    let mut failures = Vec::new();
    writeln!(out).unwrap();
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => writeln!(out, "[PASS] {}. {name}: {detail}", i + 1).unwrap(),
            Err(why) => {
                writeln!(out, "[FAIL] {}. {name}: {why}", i + 1).unwrap();
                failures.push(*name);
            }
        }
    }
    writeln!(out, "[N/A ] 10. full-scale benchmark figures: not reproducible at desk scale, no assertion").unwrap();
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
