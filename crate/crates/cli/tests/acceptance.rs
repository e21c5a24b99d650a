//! End-to-end acceptance checks.
//!
//! Each criterion prints one `PASS`/`FAIL` line with its measurement and
//! wall time; the test fails if any criterion fails. CLI-facing criteria run
//! the real binary, the oracle criteria call the library directly.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use segcert::data::read_labels;
use segcert::seed;
use segcert::smoothing::{cohen_certify_pixel, PixelCertificate};
use segcert::stats::{binomial_tail_pvalue, holm_correct};
use segcert::verification::{holm_bruteforce, pvalue_bruteforce};
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn segcert(args: &[&str]) -> Result<(String, Duration), String> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_segcert"))
        .args(args)
        .output()
        .map_err(|e| format!("spawn failed: {e}"))?;
    let elapsed = start.elapsed();
    if !out.status.success() {
        return Err(format!(
            "segcert {args:?} exited with {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok((String::from_utf8_lossy(&out.stdout).into_owned(), elapsed))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Column `name` of every data row of a CSV file.
fn csv_column(path: &Path, name: &str) -> Result<Vec<String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty csv")?.split(',').collect();
    let idx = header
        .iter()
        .position(|h| *h == name)
        .ok_or_else(|| format!("no column {name}"))?;
    Ok(lines
        .map(|l| l.split(',').nth(idx).unwrap_or("").to_string())
        .collect())
}

fn log_value(path: &Path, key: &str) -> Result<String, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
        .ok_or_else(|| format!("{key} missing from {}", path.display()))
}

fn within_time(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    }
}

fn radius_reproduction(tmp: &Path) -> Outcome {
    let cfg = write_config(
        tmp,
        "radius.ini",
        "[scene]\nheight = 8\nwidth = 8\n[model]\nkind = constant\nclass = 1\nclasses = 2\n\
         [smoothing]\ntau = 0.75\n[sweep]\nsigmas = 0.25, 0.5, 1.0\n",
    );
    let out = tmp.join("radius");
    let (_, elapsed) = segcert(&["--config", path_str(&cfg), "--out", path_str(&out), "sweep"])?;
    let radii: Vec<f64> = csv_column(&out.join("sweep.csv"), "radius")?
        .iter()
        .map(|r| r.parse().unwrap())
        .collect();
    let expected = [0.17, 0.34, 0.67];
    if radii.len() != 3
        || radii
            .iter()
            .zip(expected)
            .any(|(r, e)| (r - e).abs() > 0.005)
    {
        return Err(format!("radii {radii:?}, expected {expected:?} +- 0.005"));
    }
    within_time(elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "R = {:.4}, {:.4}, {:.4} in {elapsed:.2?}",
        radii[0], radii[1], radii[2]
    ))
}

fn timestep_anchor(tmp: &Path) -> Outcome {
    let (stdout, t_elapsed) = segcert(&["timestep", "--sigma", "1.0"])?;
    if stdout != "258\n" {
        return Err(format!("timestep printed {stdout:?}"));
    }
    let cfg = write_config(
        tmp,
        "anchor.ini",
        "[scene]\nheight = 4\nwidth = 4\n[model]\nkind = constant\nclasses = 2\n\
         [denoiser]\nkind = identity\n[smoothing]\nsigma = 1.0\nn0 = 2\nn = 3\n",
    );
    let mut calls = Vec::new();
    let mut total = t_elapsed;
    for mode in ["multi_step", "single_step"] {
        let out = tmp.join(format!("anchor_{mode}"));
        let (_, elapsed) = segcert(&[
            "--config",
            path_str(&cfg),
            "--out",
            path_str(&out),
            "certify",
            "--denoise",
            mode,
        ])?;
        total += elapsed;
        calls.push(log_value(&out.join("run.log"), "denoiser_calls_per_draw")?);
    }
    if calls != ["258", "1"] {
        return Err(format!(
            "denoiser calls per draw {calls:?}, expected [258, 1]"
        ));
    }
    within_time(t_elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "t* = 258; calls per draw multi 258, single 1 ({total:.2?} total)"
    ))
}

fn fwer_soundness(tmp: &Path) -> Outcome {
    let cfg = write_config(
        tmp,
        "fwer.ini",
        "[fwer]\npixels = 256\nn = 100\nn0 = 10\ntau = 0.75\nalpha = 0.05\np_true = 0.75\n\
         classes = 2\ntrials = 1000\nseed = 2023\n",
    );
    let out = tmp.join("fwer");
    let (stdout, elapsed) = segcert(&[
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out),
        "fwer-sim",
    ])?;
    let rate: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("empirical_fwer="))
        .ok_or("no empirical_fwer line")?
        .parse()
        .map_err(|e| format!("{e}"))?;
    let bound = 0.05 + 3.0 * (0.05f64 * 0.95 / 1000.0).sqrt();
    if rate > bound {
        return Err(format!("empirical FWER {rate} > {bound:.4}"));
    }
    within_time(elapsed, Duration::from_secs(180))?;
    Ok(format!(
        "empirical FWER {rate:.4} <= {bound:.4} in {elapsed:.2?}"
    ))
}

fn pvalue_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in 1..=12u64 {
        for k in 0..=n {
            for tau in [0.5, 0.75, 0.9] {
                let fast = binomial_tail_pvalue(k, n, tau).map_err(|e| e.to_string())?;
                let slow = pvalue_bruteforce(k, n, tau).map_err(|e| e.to_string())?;
                worst = worst.max((fast - slow).abs());
                cases += 1;
            }
        }
    }
    if worst > 1e-12 {
        return Err(format!("max deviation {worst:e} over {cases} cases"));
    }
    let v = binomial_tail_pvalue(100, 100, 0.75).map_err(|e| e.to_string())?;
    let expected = 3.207_202_185_381_504e-13;
    let rel = ((v - expected) / expected).abs();
    if rel > 1e-9 {
        return Err(format!("(100, 100, 0.75) -> {v:e}, relative error {rel:e}"));
    }
    Ok(format!(
        "{cases} grid cases, max |diff| {worst:.1e}; (100,100,0.75) = {v:.4e}"
    ))
}

fn holm_oracle() -> Outcome {
    let alpha = 0.05;
    let grid = [
        0.0,
        alpha / 6.0,
        alpha / 5.0,
        alpha / 4.0,
        alpha / 3.0,
        alpha / 2.0,
        alpha,
        0.5,
        1.0,
    ];
    let mut checked = 0usize;
    for n in 1..=6u32 {
        let total = (grid.len() as u32).pow(n);
        let mut pv = vec![0.0; n as usize];
        for code in 0..total {
            let mut c = code as usize;
            for slot in pv.iter_mut() {
                *slot = grid[c % grid.len()];
                c /= grid.len();
            }
            if holm_correct(&pv, alpha).unwrap() != holm_bruteforce(&pv, alpha).unwrap() {
                return Err(format!("mismatch on grid vector {pv:?}"));
            }
            checked += 1;
        }
    }
    let stream = seed::derive(31, &[]);
    for trial in 0..10_000u64 {
        let key = seed::derive(stream, &[trial]);
        let n = 1 + seed::below(key, 20) as usize;
        let alpha = [0.001, 0.01, 0.05, 0.2][seed::below(seed::mix64(key), 4) as usize];
        let pv: Vec<f64> = (0..n)
            .map(|i| {
                let bits = seed::derive(key, &[i as u64]);
                match bits % 4 {
                    0 => alpha / (1 + seed::below(seed::mix64(bits), n as u64)) as f64,
                    1 => 0.0,
                    2 => seed::unit_f64(bits) * alpha,
                    _ => seed::unit_f64(bits),
                }
            })
            .collect();
        if holm_correct(&pv, alpha).unwrap() != holm_bruteforce(&pv, alpha).unwrap() {
            return Err(format!("mismatch on random vector {pv:?} at alpha {alpha}"));
        }
        checked += 1;
    }
    Ok(format!("{checked} vectors identical"))
}

fn end_to_end_smoke(tmp: &Path) -> Outcome {
    let cfg = write_config(
        tmp,
        "smoke.ini",
        "[scene]\nheight = 64\nwidth = 64\n[model]\nkind = constant\nclass = 1\nclasses = 2\n\
         [smoothing]\nsigma = 0.25\nn0 = 10\nn = 100\nalpha = 0.001\ntau = 0.75\n",
    );
    let out = tmp.join("smoke");
    let (_, elapsed) = segcert(&[
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out),
        "certify",
    ])?;
    let labels = read_labels(out.join("certified.pgm"), Some(2)).map_err(|e| e.to_string())?;
    let certified = labels.iter().filter(|l| **l == Some(1)).count();
    if labels.len() != 4096 || certified != 4096 {
        return Err(format!("{certified} of {} pixels certified", labels.len()));
    }
    within_time(elapsed, Duration::from_secs(5))?;
    Ok(format!(
        "4096/4096 certified, 0 abstentions in {elapsed:.2?}"
    ))
}

fn denoising_benefit(tmp: &Path) -> Outcome {
    let cfg = write_config(
        tmp,
        "benefit.ini",
        "[scene]\nheight = 64\nwidth = 64\nclasses = 3\ngap = 0.3\nwithin_std = 0.05\n\
         [model]\nkind = band\n[denoiser]\nkind = posterior_mean\n\
         [smoothing]\nsigma = 0.5\nn0 = 10\nn = 100\nalpha = 0.001\ntau = 0.75\n",
    );
    let mut gains = Vec::new();
    for seed in 0..5 {
        let mut acc = Vec::new();
        for mode in ["off", "single_step"] {
            let out = tmp.join(format!("benefit_{seed}_{mode}"));
            segcert(&[
                "--config",
                path_str(&cfg),
                "--seed",
                &seed.to_string(),
                "--out",
                path_str(&out),
                "certify",
                "--denoise",
                mode,
            ])?;
            let v: f64 = csv_column(&out.join("metrics.csv"), "acc_strict")?[0]
                .parse()
                .unwrap();
            acc.push(v);
        }
        if acc[1] <= acc[0] {
            return Err(format!(
                "seed {seed}: denoised {} <= plain {}",
                acc[1], acc[0]
            ));
        }
        gains.push(format!("{:.3}->{:.3}", acc[0], acc[1]));
    }
    Ok(format!(
        "acc_strict off->denoised per seed: {}",
        gains.join(", ")
    ))
}

fn files_identical(a: &Path, b: &Path, names: &[&str]) -> Result<(), String> {
    for name in names {
        let x = fs::read(a.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if x != y {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok(())
}

fn determinism(tmp: &Path) -> Outcome {
    let configs = [
        (
            "det_oracle.ini",
            "[scene]\nheight = 32\nwidth = 32\nclasses = 4\nlayout = checkerboard\n\
             [model]\nkind = oracle\np_true = 0.85\n[smoothing]\nsigma = 0.5\nalpha = 0.01\nparallel = true\n",
        ),
        (
            "det_band.ini",
            "[scene]\nheight = 24\nwidth = 24\nclasses = 3\nlayout = disks\n\
             [model]\nkind = band\n[smoothing]\nsigma = 0.25\nn = 40\ndenoise = multi_step\nparallel = true\n",
        ),
    ];
    let files = [
        "certified.pgm",
        "pvalues.pgm",
        "metrics.csv",
        "run.log",
        "config.ini",
    ];
    for (name, text) in configs {
        let cfg = write_config(tmp, name, text);
        let a = tmp.join(format!("{name}_a"));
        let b = tmp.join(format!("{name}_b"));
        segcert(&["--config", path_str(&cfg), "--out", path_str(&a), "certify"])?;
        segcert(&["--config", path_str(&cfg), "--out", path_str(&b), "certify"])?;
        files_identical(&a, &b, &files)?;
        // The echoed config alone reproduces the run.
        let c = tmp.join(format!("{name}_c"));
        segcert(&[
            "--config",
            path_str(&a.join("config.ini")),
            "--out",
            path_str(&c),
            "certify",
        ])?;
        files_identical(&a, &c, &files)?;
    }
    Ok("repeated and echoed-config runs byte-identical (oracle and multi-step band)".into())
}

fn cohen_reference() -> Outcome {
    let cert = cohen_certify_pixel(&[10, 0], &[100, 0], 10, 100, 0.001, 0.25)
        .map_err(|e| e.to_string())?;
    let r = cert.radius();
    if (r - 0.3753).abs() > 0.0005 {
        return Err(format!("radius {r}"));
    }
    for k in 0..=50u32 {
        let c = cohen_certify_pixel(&[10, 0], &[k, 100 - k], 10, 100, 0.001, 0.25)
            .map_err(|e| e.to_string())?;
        if c != PixelCertificate::Abstain {
            return Err(format!("k = {k} certified: {c:?}"));
        }
    }
    Ok(format!("radius {r:.4}; abstains for all k <= 50"))
}

#[test]
fn acceptance() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let criteria: Vec<Criterion> = vec![
        ("radius reproduction", Box::new(|| radius_reproduction(dir))),
        ("timestep anchor", Box::new(|| timestep_anchor(dir))),
        (
            "statistical soundness (FWER)",
            Box::new(|| fwer_soundness(dir)),
        ),
        ("oracle equivalence, p-values", Box::new(pvalue_oracle)),
        ("oracle equivalence, Holm", Box::new(holm_oracle)),
        ("end-to-end smoke", Box::new(|| end_to_end_smoke(dir))),
        ("denoising benefit", Box::new(|| denoising_benefit(dir))),
        ("determinism", Box::new(|| determinism(dir))),
        ("Cohen reference certifier", Box::new(cohen_reference)),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {}. {name}: {detail} [{elapsed:.2?}]", i + 1),
            Err(why) => {
                println!("FAIL  {}. {name}: {why} [{elapsed:.2?}]", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
