//! Acceptance checks, one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use gradlite::error_feedback::Probe;
use gradlite::harness::{
    ablation_suite, grad_check_suite, memory_report, rate_check, AblationConfig, OptimizerSpec,
    ProblemSpec, RateConfig, Variant,
};
use gradlite::jacobian_approx::BasisMode;
use gradlite::linalg::{matvec, matvec_t, Mat, Vector};
use gradlite::optimizer::{gradlite_step, sgd_step, EfMode, GradLiteConfig, OptimizerState};
use gradlite::problems::{DatasetKind, Problem};
use gradlite::rng::SplitMix64;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

fn gaussian(rows: usize, cols: usize, rng: &mut SplitMix64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.standard_normal())
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn c1_two_matvec_identity() -> Outcome {
    let mut rng = SplitMix64::new(1);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let m = 1 + (rng.next_u64() % 500) as usize;
        let d = 1 + (rng.next_u64() % 100) as usize;
        let k = 1 + (rng.next_u64() % m.min(d) as u64) as usize;
        let (m, d) = if i == 0 { (500, 100) } else { (m, d) };
        let u = gaussian(m, k, &mut rng);
        let v = gaussian(d, k, &mut rng);
        let delta = Vector::from_fn(m, |_| rng.standard_normal());
        let lhs = matvec(&v, &matvec_t(&u, &delta).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let rhs = matvec_t(&u.matmul_t(&v).map_err(|e| e.to_string())?, &delta)
            .map_err(|e| e.to_string())?;
        let rel = lhs.sub(&rhs).map_err(|e| e.to_string())?.norm() / (1.0 + rhs.norm());
        worst = worst.max(rel);
    }
    ensure(worst <= 1e-10, format!("worst relative error {worst:e}"))?;
    Ok(format!("200 triples, worst relative error {worst:.2e}"))
}

fn c2_full_rank_is_sgd() -> Outcome {
    let families = [
        ProblemSpec::Quadratic {
            dim: 20,
            cond: 50.0,
            noise: 0.5,
        },
        ProblemSpec::Logistic {
            n: 64,
            dim: 16,
            dataset: DatasetKind::GaussianLogistic,
            l2: 1e-2,
        },
        ProblemSpec::Mlp {
            widths: vec![4, 6, 5, 1],
            n: 32,
        },
    ];
    let mut report = Vec::new();
    for spec in &families {
        let p = spec.build(0).map_err(|e| e.to_string())?;
        let dims = p.dims().clone();
        let eta = p.smoothness().map_or(0.05, |l| 0.5 / l);
        let cfg = GradLiteConfig {
            eta,
            k: dims.m.min(dims.d),
            tau: 1,
            ef_mode: EfMode::Off,
            probe: Probe::Exact,
            basis: BasisMode::Svd,
            seed: 0,
            power_iters: 6,
        };
        let mut rng = SplitMix64::new(9);
        let mut a = OptimizerState::for_problem(p.as_ref());
        let mut b = OptimizerState::for_problem(p.as_ref());
        let mut worst = 0.0f64;
        for t in 0..500 {
            let batch = p.sample_batch(&mut rng);
            a = gradlite_step(a, p.as_ref(), &batch, &cfg)
                .map_err(|e| e.to_string())?
                .0;
            b = sgd_step(b, p.as_ref(), &batch, eta).map_err(|e| e.to_string())?;
            let gap = a.theta().sub(b.theta()).map_err(|e| e.to_string())?.norm()
                / (1.0 + b.theta().norm());
            worst = worst.max(gap);
            ensure(gap <= 1e-10, format!("{} step {t}: gap {gap:e}", p.name()))?;
        }
        report.push(format!("{} {worst:.1e}", p.name()));
    }
    Ok(format!(
        "500 steps, worst per-step gap: {}",
        report.join(", ")
    ))
}

fn c3_gradient_oracles() -> Outcome {
    let report = grad_check_suite(0).map_err(|e| e.to_string())?;
    if let Some(f) = report.failures().first() {
        return Err(format!(
            "{} {:?}: {:e} > {:e}",
            f.problem, f.kind, f.max_error, f.tolerance
        ));
    }
    let worst = report
        .results
        .iter()
        .map(|r| r.max_error / r.tolerance)
        .fold(0.0, f64::max);
    Ok(format!(
        "{} checks pass, worst error/tolerance {worst:.2e}",
        report.results.len()
    ))
}

fn traced(
    p: &dyn Problem,
    cfg: &GradLiteConfig,
    steps: usize,
) -> Result<(OptimizerState, Vec<gradlite::optimizer::StepTrace>), String> {
    let mut rng = SplitMix64::new(21);
    let mut state = OptimizerState::for_problem(p);
    let mut traces = Vec::with_capacity(steps);
    for _ in 0..steps {
        let batch = p.sample_batch(&mut rng);
        let (next, tr) = gradlite_step(state, p, &batch, cfg).map_err(|e| e.to_string())?;
        state = next;
        traces.push(tr);
    }
    Ok((state, traces))
}

fn c4_telescoping() -> Outcome {
    let p = ProblemSpec::Quadratic {
        dim: 50,
        cond: 100.0,
        noise: 0.5,
    }
    .build(0)
    .map_err(|e| e.to_string())?;
    let base = GradLiteConfig {
        eta: 0.01,
        ..GradLiteConfig::default()
    };
    let (_, traces) = traced(p.as_ref(), &base, 1000)?;
    let d = p.dims().d;
    let (mut hat, mut exact, mut scale) = (Vector::zeros(d), Vector::zeros(d), 0.0);
    for t in &traces {
        let g = t.g_exact.as_ref().ok_or("missing exact gradient")?;
        hat = hat.add(&t.g_hat).map_err(|e| e.to_string())?;
        exact = exact.add(g).map_err(|e| e.to_string())?;
        scale += g.norm();
    }
    let last = &traces.last().ok_or("no steps")?.big_delta;
    let defect = hat
        .sub(&exact)
        .and_then(|v| v.add(last))
        .map_err(|e| e.to_string())?
        .norm();
    ensure(
        defect <= 1e-9 * scale,
        format!("telescoping defect {defect:e} vs bound {:e}", 1e-9 * scale),
    )?;

    let paper = GradLiteConfig {
        eta: 1e-3,
        ef_mode: EfMode::Paper,
        ..base
    };
    let (state, traces) = traced(p.as_ref(), &paper, 1000)?;
    let mut sum = Vector::zeros(d);
    for t in &traces {
        sum = sum.add(&t.big_delta).map_err(|e| e.to_string())?;
    }
    ensure(
        state.residual().as_ref() == Some(&sum),
        "paper-mode r_T differs from ΣΔ_t".into(),
    )?;
    Ok(format!(
        "defect/Σ‖g‖ = {:.2e}; paper-mode r_T = ΣΔ_t bit-for-bit",
        defect / scale
    ))
}

fn c5_rate() -> Outcome {
    let fit = rate_check(&RateConfig::default()).map_err(|e| e.to_string())?;
    ensure(
        (fit.slope + 0.5).abs() <= 0.15,
        format!("slope {:.3} outside −0.5 ± 0.15", fit.slope),
    )?;
    let mut floors = Vec::new();
    for k in [2, 8, 32, 50] {
        let cfg = RateConfig {
            k,
            ef_mode: EfMode::Off,
            ..RateConfig::default()
        };
        floors.push(rate_check(&cfg).map_err(|e| e.to_string())?.error_floor);
    }
    ensure(
        floors.windows(2).all(|w| w[1] < w[0]),
        format!("floors not decreasing in k: {floors:?}"),
    )?;
    let shown: Vec<String> = floors.iter().map(|f| format!("{f:.3e}")).collect();
    Ok(format!(
        "slope {:.3} (r² {:.4}); error floor at k=2,8,32,50 without feedback: {}",
        fit.slope,
        fit.r_squared,
        shown.join(" > ")
    ))
}

fn c6_ablation() -> Outcome {
    let table = ablation_suite(&AblationConfig::default()).map_err(|e| e.to_string())?;
    let mut no_ef_worst = 0;
    for seed in table.seeds() {
        let loss = |v| {
            table
                .row(v, seed)
                .map(|r| r.final_loss)
                .ok_or("missing row")
        };
        let (full, no_ef, rp) = (
            loss(Variant::Full)?,
            loss(Variant::NoEf)?,
            loss(Variant::RandomProjection)?,
        );
        ensure(
            full < rp,
            format!("seed {seed}: full {full} ≥ random-projection {rp}"),
        )?;
        ensure(
            full < no_ef,
            format!("seed {seed}: full {full} ≥ no-ef {no_ef}"),
        )?;
        if no_ef > rp {
            no_ef_worst += 1;
        }
    }
    ensure(
        no_ef_worst >= 2,
        format!("no-ef worst on only {no_ef_worst} seeds"),
    )?;
    Ok(format!(
        "η = {} tuned on full; full wins on all {} seeds, no-ef worst on {no_ef_worst}",
        table.eta,
        table.seeds().len()
    ))
}

fn c7_memory() -> Outcome {
    let specs = [
        OptimizerSpec::Sgd { eta: 1.0 },
        OptimizerSpec::GradLite(GradLiteConfig::default()),
    ];
    let report = memory_report(1000, 200, &specs).map_err(|e| e.to_string())?;
    let g = report.get("gradlite").ok_or("no gradlite row")?;
    let e = report.get("exact-sgd").ok_or("no baseline row")?;
    ensure(
        g.backward_signal == 8 && e.backward_signal == 1000,
        format!("signal {} vs {}", g.backward_signal, e.backward_signal),
    )?;
    ensure(
        g.factor_amortized == 960.0,
        format!("amortized factor {}", g.factor_amortized),
    )?;
    let saving = report
        .savings("gradlite", "exact-sgd")
        .ok_or("no savings")?;
    ensure(saving >= 0.40, format!("saving {saving}"))?;
    Ok(format!(
        "signal 8 vs 1000, factor 960/step, total {} vs {} ({:.1}% lower)",
        g.total,
        e.total,
        100.0 * saving
    ))
}

fn hash_outputs(args: &[&str]) -> Result<Vec<(String, String)>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_gradlite"))
        .args(args)
        .current_dir(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited with {:?}", out.status.code()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir.path())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    files.sort();
    let mut hashes = vec![(
        "stdout".to_string(),
        hex::encode(Sha256::digest(&out.stdout)),
    )];
    for f in files {
        let bytes = std::fs::read(&f).map_err(|e| e.to_string())?;
        let name = f
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("?")
            .to_string();
        hashes.push((name, hex::encode(Sha256::digest(bytes))));
    }
    Ok(hashes)
}

fn c8_determinism() -> Outcome {
    let commands: [&[&str]; 7] = [
        &["run"],
        &[
            "run",
            "--problem",
            "logistic",
            "--opt",
            "adam",
            "--eta",
            "0.01",
        ],
        &[
            "run",
            "--problem",
            "mlp",
            "--n",
            "64",
            "--dim",
            "8",
            "--basis",
            "random-projection",
        ],
        &["ablate"],
        &["rate-check"],
        &["grad-check"],
        &["mem-report"],
    ];
    let mut files = 0;
    for args in commands {
        let a = hash_outputs(args)?;
        let b = hash_outputs(args)?;
        ensure(a == b, format!("{args:?} produced different bytes"))?;
        files += a.len();
    }
    Ok(format!(
        "{} commands run twice, {files} outputs hash identically",
        commands.len()
    ))
}

fn main() {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 8] = [
        (
            1,
            "two-matvec identity",
            Duration::from_secs(5),
            c1_two_matvec_identity,
        ),
        (
            2,
            "full-rank exactness",
            Duration::from_secs(30),
            c2_full_rank_is_sgd,
        ),
        (
            3,
            "gradient oracles",
            Duration::from_secs(60),
            c3_gradient_oracles,
        ),
        (
            4,
            "error-feedback telescoping",
            Duration::from_secs(60),
            c4_telescoping,
        ),
        (5, "convergence rate", Duration::from_secs(600), c5_rate),
        (
            6,
            "ablation direction",
            Duration::from_secs(300),
            c6_ablation,
        ),
        (7, "memory accounting", Duration::from_secs(1), c7_memory),
        (8, "determinism", Duration::from_secs(600), c8_determinism),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > budget => Err(format!(
                "{detail}; took {:.1}s, budget {}s",
                elapsed.as_secs_f64(),
                budget.as_secs()
            )),
            other => other,
        };
        match outcome {
            Ok(detail) => println!(
                "PASS criterion {id} ({name}): {detail} [{:.2}s]",
                elapsed.as_secs_f64()
            ),
            Err(why) => {
                failed += 1;
                println!(
                    "FAIL criterion {id} ({name}): {why} [{:.2}s]",
                    elapsed.as_secs_f64()
                );
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
