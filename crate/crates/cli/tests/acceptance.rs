//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria 1–3 run the desk-scale pipeline of `configs/desk.toml` under the
//! target's scratch directory. Stages whose recorded config matches are
//! reused, so only the first run pays for training (about fifteen minutes on
//! one core). Set `FLASHCHAN_ACCEPTANCE_FRESH=1` to rebuild everything, and
//! `FLASHCHAN_ACCEPTANCE_STRICT=1` to exit nonzero when a criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use flashchan::dataset::{deserialize_dataset, load_dataset, serialize_dataset};
use flashchan::eval::{
    count_level_errors, estimate_pdf, ici_error_frequencies, total_variation_probs, Report, Source,
};
use flashchan::rng::{derive_seed, standard_normal, CounterRng};
use flashchan::sim::{program_pseudorandom, sample_normal_laplace, simulate_read, ChannelParams};
use flashchan::stats::{fit_level_distribution, Family, NormalLaplaceParams};
use flashchan::{ChannelRecord, Direction, Histogram, PECycle, ProgramLevel, VoltageLevel};
use flashchan_cli::{commands, Log, Run, RunConfig};
use flashchan_gen::loss::kl_standard_normal;
use flashchan_gen::model::step_noise;
use flashchan_gen::{checkpoint, Batch, LossComponent, Model, ModelState, Tensor, TrainConfig, EMBED_DIM};
use rand::RngCore;

// Tolerances pinned from the acceptance criteria.
const DTV_MAX: f64 = 0.15;
const ERROR_RATIO: (f64, f64) = (1.5, 3.5);
const SPEARMAN_MIN: f64 = 0.7;
const NL_KL_MAX: f64 = 1e-3;
const GRAD_REL_MAX: f64 = 1e-5;
const GRAD_MAG_MIN: f64 = 1e-8;
const KL_SE: f64 = 3.0;
const KL_DRAWS: usize = 100_000;

type Outcome = (bool, String);

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Runs the desk pipeline, reusing stages whose recorded config is current.
fn desk_pipeline() -> Result<(Run, Report), String> {
    let text = std::fs::read_to_string(root().join("configs/desk.toml")).map_err(|e| e.to_string())?;
    let config = RunConfig::from_toml(&text).map_err(|e| e.to_string())?;
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-desk");
    if std::env::var_os("FLASHCHAN_ACCEPTANCE_FRESH").is_some() {
        let _ = std::fs::remove_dir_all(&out);
    }
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    let run = Run {
        config,
        config_dir: root().join("configs"),
        out,
    };
    let current = run.config.to_toml().map_err(|e| e.to_string())?;
    let log = Log { quiet: false };
    let mut stale = false;
    let stages: [(&str, &str); 5] = [
        ("simulate", "eval.flds"),
        ("fit", "fits.toml"),
        ("train", "checkpoint.fck"),
        ("generate", "generated.flds"),
        ("evaluate", "report.toml"),
    ];
    for (stage, output) in stages {
        let recorded = std::fs::read_to_string(run.output(&format!("{stage}.config.toml"))).ok();
        stale |= recorded.as_deref() != Some(current.as_str()) || !run.output(output).exists();
        if !stale {
            eprintln!("acceptance: reusing {stage}");
            continue;
        }
        eprintln!("acceptance: running {stage}");
        let r = match stage {
            "simulate" => commands::simulate(&run, log).map(drop),
            "fit" => commands::fit(&run, log).map(drop),
            "train" => commands::train(&run, log).map(drop),
            "generate" => commands::generate(&run, log).map(drop),
            _ => commands::evaluate(&run, log).map(drop),
        };
        if let Err(e) = r {
            // A half-finished stage must not be reused next time.
            let _ = std::fs::remove_file(run.output(&format!("{stage}.config.toml")));
            return Err(format!("{stage}: {e}"));
        }
    }
    let report = Report::from_toml(&std::fs::read_to_string(run.output("report.toml")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    Ok((run, report))
}

fn criterion1(rep: &Report) -> Outcome {
    let mut worst = (0.0f64, 0u8, 0u32);
    let mut within = true;
    let mut beats_drift = true;
    let mut tight = Vec::new();
    for level in 1..=7u8 {
        let drift = rep
            .dtv_reference
            .iter()
            .find(|r| r.level == level)
            .map_or(f64::NAN, |r| r.oracle);
        for &pe in &rep.stamps {
            let g = rep.dtv_at(level, pe).map_or(f64::INFINITY, |r| r.generated);
            if g > worst.0 {
                worst = (g, level, pe);
            }
            within &= g <= DTV_MAX;
            if !(g < drift) {
                beats_drift = false;
                tight.push(format!("L{level}@{pe} {g:.3}≥{drift:.3}"));
            }
        }
    }
    let min_drift = rep.dtv_reference.iter().map(|r| r.oracle).fold(f64::INFINITY, f64::min);
    (
        within && beats_drift,
        format!(
            "max d_TV(gen, oracle) = {:.4} at level {} pe {} (bound {DTV_MAX}); min oracle drift {:.4}{}",
            worst.0,
            worst.1,
            worst.2,
            min_drift,
            if tight.is_empty() { String::new() } else { format!("; not below drift: {}", tight.join(", ")) }
        ),
    )
}

fn criterion2(rep: &Report) -> Outcome {
    let totals: Vec<u64> = rep.stamps.iter().map(|&pe| {
        rep.errors_of(Source::Generated).find(|r| r.pe == pe).map_or(0, |r| r.total_errors)
    }).collect();
    let rates: Vec<f64> = rep.stamps.iter().map(|&pe| {
        rep.errors_of(Source::Generated).find(|r| r.pe == pe).map_or(0.0, |r| r.error_rate)
    }).collect();
    let oracle: Vec<f64> = rep.stamps.iter().map(|&pe| {
        rep.errors_of(Source::Oracle).find(|r| r.pe == pe).map_or(0.0, |r| r.error_rate)
    }).collect();
    let monotone = totals.windows(2).all(|w| w[0] <= w[1]);
    let ratio = rates[rates.len() - 1] / rates[0];
    let oracle_ratio = oracle[oracle.len() - 1] / oracle[0];
    (
        monotone && (ERROR_RATIO.0..=ERROR_RATIO.1).contains(&ratio),
        format!(
            "generated errors {totals:?}, last:first ratio {ratio:.3} (oracle {oracle_ratio:.3}), band [{}, {}]",
            ERROR_RATIO.0, ERROR_RATIO.1
        ),
    )
}

fn criterion3(rep: &Report) -> Outcome {
    let bl = rep.ici_of(Source::Generated, 7000, Direction::Bitline);
    let wl = rep.ici_of(Source::Generated, 7000, Direction::Wordline);
    let argmax = bl.and_then(|r| r.argmax.clone()).unwrap_or_default();
    let rho = |r: Option<&flashchan::eval::IciRow>| r.and_then(|r| r.spearman_top9).unwrap_or(f64::NAN);
    let (rb, rw) = (rho(bl), rho(wl));
    (
        argmax == "707" && rb >= SPEARMAN_MIN && rw >= SPEARMAN_MIN,
        format!("BL argmax {argmax}, Spearman top-9 BL {rb:.3} WL {rw:.3} (min {SPEARMAN_MIN})"),
    )
}

fn criterion4() -> Outcome {
    let truth = NormalLaplaceParams::new(500.0, 6.0, 0.08, 0.15).unwrap();
    let mut rng = CounterRng::new(404, 0).stream(0);
    let mut h = Histogram::voltage();
    for _ in 0..100_000 {
        h.add(VoltageLevel::quantize(sample_normal_laplace(&truth, &mut rng)).bin() as usize);
    }
    let nl = fit_level_distribution::<f64>(&h, Family::NormalLaplace).unwrap();
    let g = fit_level_distribution::<f64>(&h, Family::Gaussian).unwrap();
    (
        nl.kl <= NL_KL_MAX && g.kl > nl.kl,
        format!("Normal-Laplace KL {:.2e} (max {NL_KL_MAX:e}), Gaussian KL {:.2e}", nl.kl, g.kl),
    )
}

/// Central difference with Richardson extrapolation; rejects steps whose
/// half-step estimate disagrees, which happens when a rectifier kink lies
/// inside the stencil.
fn numeric(m: &mut ModelState<f64>, p: usize, i: usize, f: &dyn Fn(&ModelState<f64>) -> f64) -> Option<f64> {
    let orig = m.params()[p].value[i];
    let mut at = |d: f64| {
        m.params_mut()[p].value[i] = orig + d;
        let y = f(m);
        m.params_mut()[p].value[i] = orig;
        y
    };
    for h in [1e-3, 1e-4, 1e-5, 1e-6] {
        let d1 = (at(h) - at(-h)) / (2.0 * h);
        let d2 = (at(h / 2.0) - at(-h / 2.0)) / h;
        if (d1 - d2).abs() <= 1e-6 * d1.abs().max(d2.abs()) + 1e-12 {
            return Some((4.0 * d2 - d1) / 3.0);
        }
    }
    None
}

fn criterion5() -> Outcome {
    let cfg = TrainConfig {
        grid: 8,
        width_scale: 0.0625,
        seed: 11,
        ..TrainConfig::default()
    };
    let params = ChannelParams::default();
    let recs: Vec<ChannelRecord> = [4000u32, 10000]
        .iter()
        .enumerate()
        .map(|(i, &pe)| {
            let (pl, vl) = flashchan::sim::simulate_block(3, i as u64, 8, 8, PECycle(pe), &params);
            ChannelRecord::new(pl, vl, PECycle(pe)).unwrap()
        })
        .collect();
    let refs: Vec<&ChannelRecord> = recs.iter().collect();
    let batch = Batch::new(&refs, &cfg).unwrap();
    let eps = step_noise(cfg.seed, 0, 2);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut parts = Vec::new();
    for (which, prefixes) in [
        (LossComponent::Kl, &["enc."][..]),
        (LossComponent::Recon, &["enc.", "gen."][..]),
        (LossComponent::GanGenerator, &["enc.", "gen.", "dis."][..]),
        (LossComponent::GanDiscriminator, &["dis."][..]),
    ] {
        let mut m = ModelState::<f64>::new(cfg.clone()).unwrap();
        for p in m.params_mut() {
            if p.name.ends_with(".weight") {
                p.value.iter_mut().for_each(|v| *v *= 10.0);
            }
        }
        m.component_gradients(&batch, &eps, which);
        let analytic: Vec<Vec<f64>> = m.params().iter().map(|p| p.grad.clone()).collect();
        let f = |s: &ModelState<f64>| {
            let l = s.losses(&batch, &eps);
            match which {
                LossComponent::Kl => l.kl,
                LossComponent::Recon => l.recon,
                LossComponent::GanGenerator => l.gan_g,
                LossComponent::GanDiscriminator => l.gan_d,
            }
        };
        let mut part = 0.0f64;
        for p in 0..analytic.len() {
            let (name, trainable) = (m.params()[p].name.clone(), m.params()[p].trainable);
            if !trainable || !prefixes.iter().any(|x| name.starts_with(x)) {
                continue;
            }
            for i in 0..analytic[p].len() {
                let Some(n) = numeric(&mut m, p, i, &f) else {
                    skipped += 1;
                    continue;
                };
                let a = analytic[p][i];
                let mag = a.abs().max(n.abs());
                if mag > GRAD_MAG_MIN {
                    checked += 1;
                    part = part.max((a - n).abs() / mag);
                }
            }
        }
        parts.push(format!("{which:?} {part:.1e}"));
        worst = worst.max(part);
    }
    (
        worst <= GRAD_REL_MAX && skipped * 50 <= checked,
        format!(
            "max relative error {worst:.2e} over {checked} elements ({}); {skipped} stencils straddled a kink",
            parts.join(", ")
        ),
    )
}

fn criterion6() -> Outcome {
    let mut rng = CounterRng::new(606, 0).stream(0);
    let mut normal = || standard_normal(rng.next_u64(), rng.next_u64());
    let mut worst_z = 0.0f64;
    for _ in 0..20 {
        let mu: Vec<f64> = (0..EMBED_DIM).map(|_| normal()).collect();
        let lv: Vec<f64> = (0..EMBED_DIM).map(|_| 0.8 * normal()).collect();
        let (closed, _, _) = kl_standard_normal(
            &Tensor::from_vec(1, EMBED_DIM, 1, 1, mu.clone()),
            &Tensor::from_vec(1, EMBED_DIM, 1, 1, lv.clone()),
        );
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..KL_DRAWS {
            let mut d = 0.0;
            for k in 0..EMBED_DIM {
                let e = normal();
                let z = mu[k] + (lv[k] / 2.0).exp() * e;
                d += -0.5 * lv[k] - 0.5 * e * e + 0.5 * z * z;
            }
            s += d;
            s2 += d * d;
        }
        let n = KL_DRAWS as f64;
        let mean = s / n;
        let se = ((s2 / n - mean * mean) / n).sqrt();
        worst_z = worst_z.max((closed - mean).abs() / se);
    }
    (worst_z <= KL_SE, format!("20 pairs, largest deviation {worst_z:.2} SE (max {KL_SE})"))
}

fn criterion7() -> Outcome {
    let params = ChannelParams::default();
    let th = params.default_thresholds().unwrap();
    let t = th.bins();
    let mut mismatches = 0;
    for i in 0..100u64 {
        let seed = derive_seed(707, &[i]);
        let (rows, cols) = (8 + (seed % 40) as usize, 8 + ((seed >> 8) % 40) as usize);
        let pl = program_pseudorandom(seed, rows, cols);
        let vl = simulate_read(&pl, PECycle(10_000), &params, seed ^ 1);
        let lv = |r: usize, c: usize| pl.at(r, c).index();

        let mut errors = [0u64; 8];
        let mut cells = [0u64; 8];
        let mut pdf = vec![vec![0u64; 1024]; 8];
        for r in 0..rows {
            for c in 0..cols {
                let (k, v) = (lv(r, c), vl.at(r, c).bin());
                cells[k] += 1;
                pdf[k][v as usize] += 1;
                if (k > 0 && v < t[k - 1]) || (k < 7 && v > t[k]) {
                    errors[k] += 1;
                }
            }
        }
        let table = count_level_errors(&pl, &vl, &th).unwrap();
        mismatches += usize::from(table.errors != errors || table.cells != cells);

        for (dir, bl) in [(Direction::Bitline, true), (Direction::Wordline, false)] {
            let mut naive = vec![0u64; 64];
            for r in 1..rows.saturating_sub(1).max(1) {
                for c in 0..cols {
                    if bl && lv(r, c) == 0 && vl.at(r, c).bin() > t[0] {
                        naive[lv(r - 1, c) * 8 + lv(r + 1, c)] += 1;
                    }
                }
            }
            for r in 0..rows {
                for c in 1..cols.saturating_sub(1).max(1) {
                    if !bl && lv(r, c) == 0 && vl.at(r, c).bin() > t[0] {
                        naive[lv(r, c - 1) * 8 + lv(r, c + 1)] += 1;
                    }
                }
            }
            mismatches += usize::from(ici_error_frequencies(&pl, &vl, &th, dir).unwrap().counts != naive);
        }

        let rec = ChannelRecord::new(pl.clone(), vl.clone(), PECycle(10_000)).unwrap();
        for k in ProgramLevel::all() {
            let h = estimate_pdf(std::slice::from_ref(&rec), k, PECycle(10_000));
            mismatches += usize::from(h.counts() != &pdf[k.index()][..]);
        }
    }

    let mut rng = CounterRng::new(708, 0).stream(0);
    let mut hist = |bins: usize| {
        let mut v: Vec<f64> = (0..bins).map(|_| (rng.next_u32() % 50) as f64).collect();
        v[0] += 1.0;
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let mut violations = 0;
    for i in 0..1000 {
        let bins = 2 + i % 40;
        let (p, q, r) = (hist(bins), hist(bins), hist(bins));
        let d = |a: &[f64], b: &[f64]| total_variation_probs(a, b).unwrap();
        let ok = d(&p, &q) == d(&q, &p)
            && (0.0..=1.0).contains(&d(&p, &q))
            && d(&p, &q) <= d(&p, &r) + d(&r, &q) + 1e-12
            && d(&p, &p) == 0.0
            && (p == q || d(&p, &q) > 0.0);
        violations += usize::from(!ok);
    }
    (
        mismatches == 0 && violations == 0,
        format!("{mismatches} metric mismatches on 100 grids, {violations} axiom violations on 1000 triples"),
    )
}

fn criterion8(desk: Option<&Run>) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let pl = program_pseudorandom(1, 64, 64);
    let recs: Vec<ChannelRecord> = [4000u32, 7000, 10000]
        .iter()
        .map(|&pe| ChannelRecord::new(pl.clone(), simulate_read(&pl, PECycle(pe), &ChannelParams::default(), 2), PECycle(pe)).unwrap())
        .collect();
    let mut a = Vec::new();
    serialize_dataset(&recs, &mut a).unwrap();
    let back = deserialize_dataset(&a[..]).unwrap();
    let mut b = Vec::new();
    serialize_dataset(&back, &mut b).unwrap();
    let ds = back == recs && a == b;
    ok &= ds;
    notes.push(format!("dataset round trip {}", if ds { "exact" } else { "DIFFERS" }));

    if let Some(run) = desk {
        let bytes = std::fs::read(run.output("checkpoint.fck")).unwrap();
        let m: Model = checkpoint::from_bytes(&bytes).unwrap();
        let ck = checkpoint::to_bytes(&m).unwrap() == bytes;
        ok &= ck;
        notes.push(format!("desk checkpoint round trip {}", if ck { "exact" } else { "DIFFERS" }));
    } else {
        ok = false;
        notes.push("desk checkpoint unavailable".into());
    }

    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        for cmd in ["simulate", "fit", "train", "generate", "evaluate"] {
            let st = Command::new(env!("CARGO_BIN_EXE_flashchan"))
                .args([cmd, "--quiet", "--config"])
                .arg(root().join("configs/smoke.toml"))
                .arg("--out")
                .arg(d.path())
                .output()
                .unwrap();
            if !st.status.success() {
                return (false, format!("smoke {cmd} failed: {}", String::from_utf8_lossy(&st.stderr)));
            }
        }
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let differing: Vec<String> = names
        .iter()
        .filter(|n| std::fs::read(dirs[0].path().join(n)).ok() != std::fs::read(dirs[1].path().join(n)).ok())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    ok &= differing.is_empty();
    notes.push(format!("CLI rerun: {} files, {} differ", names.len(), differing.len()));
    let generated = load_dataset(dirs[0].path().join("generated.flds")).map(|r| r.len()).unwrap_or(0);
    notes.push(format!("{generated} generated records"));
    (ok, notes.join("; "))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    }
}

fn main() -> ExitCode {
    let desk = desk_pipeline();
    let (run, report) = match &desk {
        Ok((run, rep)) => (Some(run), Some(rep)),
        Err(e) => {
            eprintln!("acceptance: desk pipeline failed: {e}");
            (None, None)
        }
    };
    let need = |f: fn(&Report) -> Outcome| match report {
        Some(r) => guarded(|| f(r)),
        None => (false, "desk pipeline did not complete".into()),
    };
    let results = [
        need(criterion1),
        need(criterion2),
        need(criterion3),
        guarded(criterion4),
        guarded(criterion5),
        guarded(criterion6),
        guarded(criterion7),
        guarded(|| criterion8(run)),
    ];
    let names = [
        "end-to-end conditioning fidelity",
        "temporal error trend",
        "spatial ICI fidelity",
        "statistical fitting",
        "gradient suite",
        "closed-form KL",
        "metric/oracle equivalence",
        "determinism and persistence",
    ];
    let mut failed = 0;
    for (i, ((pass, detail), name)) in results.iter().zip(names).enumerate() {
        println!("criterion {}: {} {name}: {detail}", i + 1, if *pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    println!("{} of 8 criteria passed", 8 - failed);
    // The lines above are the verdict. A nonzero exit is opt-in so that a
    // failing criterion does not also fail `cargo test --workspace`.
    if failed == 0 || std::env::var_os("FLASHCHAN_ACCEPTANCE_STRICT").is_none() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

