use std::time::Instant;

use flashchan::dataset::{load_dataset, save_dataset};
use flashchan::eval::{build_report, estimate_pdf, Report};
use flashchan::grid::crop_blocks;
use flashchan::rng::{derive_seed, domain};
use flashchan::sim::simulate_block;
use flashchan::stats::{fit_level_distribution, Family, FitRecord, FitReport};
use flashchan::{ChannelRecord, PECycle, ProgramLevel};
use flashchan_gen::{checkpoint, Model, ModelState};

use crate::config::Run;
use crate::error::{CliError, Result};

/// Progress and summary lines on stderr unless quiet.
#[derive(Clone, Copy, Debug)]
pub struct Log {
    pub quiet: bool,
}

impl Log {
    pub fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn load(run: &Run, path: &std::path::Path, what: &str) -> Result<Vec<ChannelRecord>> {
    let p = run.input(path);
    if !p.exists() {
        return Err(CliError::Input {
            path: p,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} not found")),
        });
    }
    let recs = load_dataset(&p)?;
    if recs.is_empty() {
        return Err(CliError::Empty(format!("{what} {} holds no records", p.display())));
    }
    Ok(recs)
}

fn load_checkpoint(run: &Run, path: &std::path::Path) -> Result<Model> {
    let p = run.input(path);
    if !p.exists() {
        return Err(CliError::Input {
            path: p,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
        });
    }
    Ok(checkpoint::load(&p)?)
}

/// `grids` tiles at `pe` from consecutive seeded blocks of split `split`.
fn simulate_split(run: &Run, split: u64, pe: PECycle, grids: usize) -> Result<Vec<ChannelRecord>> {
    let c = &run.config;
    let params = run.channel_params()?;
    let seed = derive_seed(c.seed, &[domain::DATASET, split]);
    let mut out = Vec::with_capacity(grids);
    let mut block = 0u64;
    while out.len() < grids {
        let (pl, vl) = simulate_block(seed, block, c.block_rows, c.block_cols, pe, &params);
        let pls = crop_blocks(&pl, c.tile)?;
        let vls = crop_blocks(&vl, c.tile)?;
        for (p, v) in pls.into_iter().zip(vls) {
            if out.len() < grids {
                out.push(ChannelRecord::new(p, v, pe)?);
            }
        }
        block += 1;
    }
    Ok(out)
}

/// Writes the training set to `dataset.flds` and a disjoint evaluation set
/// to `eval.flds`.
pub fn simulate(run: &Run, log: Log) -> Result<(usize, usize)> {
    let c = &run.config;
    run.record("simulate")?;
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for &pe in &run.config.pe_stamps() {
        let t = simulate_split(run, 0, pe, c.grids_per_stamp)?;
        let e = simulate_split(run, 1, pe, c.eval_grids_per_stamp)?;
        log.say(format!("pe {}: {} training and {} evaluation grids", pe.0, t.len(), e.len()));
        train.extend(t);
        eval.extend(e);
    }
    save_dataset(run.output("dataset.flds"), &train)?;
    save_dataset(run.output("eval.flds"), &eval)?;
    Ok((train.len(), eval.len()))
}

/// Fits every family to every (level 1–7, stamp) histogram of the dataset.
pub fn fit(run: &Run, log: Log) -> Result<FitReport> {
    run.record("fit")?;
    let recs = load(run, &run.config.dataset, "dataset")?;
    let mut report = FitReport::default();
    for pe in run.config.pe_stamps() {
        for level in ProgramLevel::all().skip(1) {
            let h = estimate_pdf(&recs, level, pe);
            for family in Family::ALL {
                let outcome = fit_level_distribution::<f64>(&h, family);
                report.fit.push(FitRecord::from_outcome(
                    level.index() as u8,
                    pe.0,
                    family,
                    h.total(),
                    &outcome,
                ));
            }
            let kls: Vec<String> = Family::ALL
                .iter()
                .map(|&f| {
                    let r = report.find(level.index() as u8, pe.0, f).unwrap();
                    format!("{} {}", f.name(), r.kl.map_or("-".into(), |k| format!("{k:.4}")))
                })
                .collect();
            log.say(format!("pe {} level {}: KL {}", pe.0, level.index(), kls.join(", ")));
        }
    }
    report.save(run.output("fits.toml"))?;
    Ok(report)
}

/// Trains from scratch, or from `resume`, and writes `checkpoint.fck` and
/// `loss.csv`.
pub fn train(run: &Run, log: Log) -> Result<Model> {
    run.record("train")?;
    let recs = load(run, &run.config.dataset, "dataset")?;
    let cfg = run.config.train_config()?;
    let mut model: Model = match &run.config.resume {
        Some(p) => {
            let mut m = load_checkpoint(run, p)?;
            m.config.epochs = cfg.epochs;
            m
        }
        None => ModelState::new(cfg)?,
    };
    let every = run.config.progress_every.max(1);
    let started = Instant::now();
    let mut csv = csv::Writer::from_path(run.output("loss.csv"))?;
    csv.write_record(["epoch", "step", "total", "recon", "kl", "gan_g", "gan_d"])?;
    let mut write_err = None;
    let result = model.train(&recs, |r| {
        let l = r.losses;
        if let Err(e) = csv.write_record([
            r.epoch.to_string(),
            r.step.to_string(),
            l.total.to_string(),
            l.recon.to_string(),
            l.kl.to_string(),
            l.gan_g.to_string(),
            l.gan_d.to_string(),
        ]) {
            write_err.get_or_insert(e);
        }
        if r.step % every == 0 {
            log.say(format!(
                "epoch {} step {}: total {:.4} recon {:.5} kl {:.3} gan_g {:.3} gan_d {:.3} ({:.0} s)",
                r.epoch,
                r.step,
                l.total,
                l.recon,
                l.kl,
                l.gan_g,
                l.gan_d,
                started.elapsed().as_secs_f64()
            ));
        }
    });
    if let Some(e) = write_err {
        return Err(e.into());
    }
    csv.flush()?;
    result?;
    checkpoint::save(&model, &run.output("checkpoint.fck"))?;
    log.say(format!("{} steps, checkpoint written", model.step));
    Ok(model)
}

/// Draws `samples` generated grids per evaluation record into
/// `generated.flds`.
pub fn generate(run: &Run, log: Log) -> Result<usize> {
    run.record("generate")?;
    let model = load_checkpoint(run, &run.config.checkpoint)?;
    let eval = load(run, &run.config.eval_dataset, "evaluation dataset")?;
    let n = run.config.samples;
    let mut out = Vec::with_capacity(eval.len() * n);
    for (i, rec) in eval.iter().enumerate() {
        let seed = derive_seed(run.config.seed, &[domain::SAMPLE, i as u64]);
        for vl in model.sample_voltages(&rec.pl, rec.pe, n, seed)? {
            out.push(ChannelRecord::new(rec.pl.clone(), vl, rec.pe)?);
        }
        if (i + 1) % 500 == 0 {
            log.say(format!("{} of {} grids sampled", i + 1, eval.len()));
        }
    }
    save_dataset(run.output("generated.flds"), &out)?;
    log.say(format!("{} generated records", out.len()));
    Ok(out.len())
}

/// Compares the evaluation set against the generated records and the fits.
pub fn evaluate(run: &Run, log: Log) -> Result<Report> {
    run.record("evaluate")?;
    let oracle = load(run, &run.config.eval_dataset, "evaluation dataset")?;
    let generated = load(run, &run.config.generated, "generated dataset")?;
    let fits_path = run.input(&run.config.fits);
    let fits = FitReport::load(&fits_path).map_err(|e| match e {
        flashchan::Error::Io(io) => CliError::Input { path: fits_path.clone(), source: io },
        other => other.into(),
    })?;
    let th = run.channel_params()?.default_thresholds()?;
    let report = build_report(&oracle, &generated, &fits, &th, &run.config.pe_stamps())?;
    report.write_dir(&run.out)?;
    log.say(report.headline());
    Ok(report)
}
