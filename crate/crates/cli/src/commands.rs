use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use resage::age_embedding::{TargetAge, SYNTHETIC_ANCHOR_GROUPS};
use resage::data::{build_synthetic_dataset, dataset_digest, load_image_file, save_rgb_png, Dataset, Image, Split};
use resage::evaluation::{
    ablation_compare, age_table, confusion_from_sweep, confusion_table, generate_sweep, group_fid,
    identity_interpolation, image_grid, labeled_strip, mean_age_per_group, render_confusion_heatmap, write_json,
    write_text, AgeGrid, AgeReader, ConfusionMode, EncoderFeatures, SYNTHETIC_DECADES,
};
use resage::inference::{age_transform, estimate_ages, EmbeddingMode};
use resage::networks::{load_checkpoint, ModelBundle};
use resage::training::{train, TrainConfig, TrainOptions, Trainer, CHECKPOINT_FILE};
use resage::Error;
use tch::Tensor;

use crate::{Command, Suite, Switch, TrainFlags};

/// Targets of the per-epoch sample grid.
const SAMPLE_TARGETS: [f64; 4] = [25.0, 35.0, 45.0, 55.0];
const SAMPLE_IMAGES: usize = 6;
const INTERP_TARGET: f64 = 40.0;
const INTERP_STEPS: usize = 8;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthData { out, identities, per_identity, profile, seed } => {
            synth_data(&out, identities, per_identity, profile.profile(), seed)
        }
        Command::Train { manifest, out, flags, resume, keep_epoch_checkpoints } => {
            cmd_train(&manifest, &out, &flags, resume, keep_epoch_checkpoints)
        }
        Command::Infer { checkpoint, image, target_age, out, residual } => {
            infer(&checkpoint, &image, target_age, &out, residual)
        }
        Command::Sweep { checkpoint, image, lo, hi, step, out, residual } => {
            sweep(&checkpoint, &image, lo, hi, step, &out, residual)
        }
        Command::Eval { checkpoint, manifest, suite, out } => eval(&checkpoint, &manifest, suite, &out),
        Command::Ablation { manifest, out, flags } => ablation(&manifest, &out, &flags),
    }
}

fn synth_data(out: &Path, identities: usize, per_identity: usize, profile: resage::networks::SizeProfile, seed: u64) -> Result<()> {
    let existed = out.exists();
    let data = build_synthetic_dataset(out, identities, per_identity, &profile, seed)?;
    if !existed {
        println!("created {}", out.display());
    }
    println!("images {}", data.entries.len());
    println!("manifest {}", data.manifest.display());
    println!("sha256 {}", dataset_digest(&data.manifest)?);
    Ok(())
}

fn resolve_config(flags: &TrainFlags) -> Result<TrainConfig> {
    let mut cfg = match &flags.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(p) = flags.profile {
        cfg.profile = p.profile();
    }
    if let Some(r) = flags.residual {
        cfg.residual_enabled = r.enabled();
    }
    if let Some(epochs) = flags.epochs {
        cfg.epochs = epochs;
        cfg.decay_start_epoch = cfg.decay_start_epoch.min(epochs);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The test split, or `None` when the manifest has no test entries.
fn load_test(manifest: &Path, cfg: &TrainConfig) -> Result<Option<Dataset>> {
    match Dataset::load(manifest, &cfg.profile, Some(Split::Test)) {
        Ok(d) => Ok(Some(d)),
        Err(Error::Validation(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn to_images(batch: &Tensor) -> Result<Vec<Image>> {
    (0..batch.size()[0]).map(|i| Ok(Image::from_tensor(&batch.get(i))?)).collect()
}

fn sample_grid(models: &ModelBundle, test: &Dataset, path: &Path) -> Result<()> {
    let n = test.len().min(SAMPLE_IMAGES);
    let x = test.batch(&(0..n).collect::<Vec<_>>());
    let mut columns = vec![to_images(&x)?];
    for t in SAMPLE_TARGETS {
        let targets = vec![TargetAge::new(t, models.profile.num_classes)?; n];
        columns.push(to_images(&age_transform(models, &x, &targets, EmbeddingMode::trained(models))?)?);
    }
    let rows: Vec<Vec<Image>> = (0..n).map(|i| columns.iter().map(|c| c[i].clone()).collect()).collect();
    save_rgb_png(&image_grid(&rows)?, path)?;
    Ok(())
}

fn cmd_train(manifest: &Path, out: &Path, flags: &TrainFlags, resume: Option<PathBuf>, keep: bool) -> Result<()> {
    let cfg = resolve_config(flags)?;
    let train_set = Dataset::load(manifest, &cfg.profile, Some(Split::Train))?;
    let test = load_test(manifest, &cfg)?;
    if let Some(r) = &resume {
        // Fails early on a missing or mismatched checkpoint.
        load_checkpoint(r, Some(&cfg.profile))?;
    }
    let options = TrainOptions { out_dir: Some(out.to_path_buf()), keep_epoch_checkpoints: keep, resume };
    let samples = out.join("samples");
    let outcome = train(&cfg, &train_set, &options, &mut |trainer: &Trainer| {
        let epoch = trainer.epochs_done();
        if let Some(test) = &test {
            sample_grid(&trainer.models, test, &samples.join(format!("epoch_{epoch:03}.png")))
                .map_err(|e| Error::Validation(format!("sample grid: {e}")))?;
        }
        println!("epoch {epoch} done, step {}", trainer.models.step);
        Ok(())
    })?;
    if let Some(last) = outcome.log.last() {
        println!("last step {}: {}", last.step, last.losses);
    }
    println!("checkpoint {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}

struct Prepared {
    models: ModelBundle,
    x: Tensor,
    mode: EmbeddingMode<'static>,
}

fn prepare(checkpoint: &Path, image: &Path, residual: Option<Switch>) -> Result<Prepared> {
    let models = load_checkpoint(checkpoint, None)?.bundle;
    let img = load_image_file(image, models.profile.image_side as usize)?;
    let mode = match residual {
        Some(r) => EmbeddingMode::SelfEstimated { residual: r.enabled() },
        None => EmbeddingMode::trained(&models),
    };
    Ok(Prepared { models, x: img.to_tensor().unsqueeze(0), mode })
}

fn age_one(p: &Prepared, t: TargetAge) -> Result<Image> {
    Ok(Image::from_tensor(&age_transform(&p.models, &p.x, &[t], p.mode)?)?)
}

fn infer(checkpoint: &Path, image: &Path, target: f64, out: &Path, residual: Option<Switch>) -> Result<()> {
    let p = prepare(checkpoint, image, residual)?;
    let t = TargetAge::new(target, p.models.profile.num_classes)?;
    let m = estimate_ages(&p.models, &p.x)?[0];
    let aged = age_one(&p, t)?;
    aged.save_png(out)?;
    println!("self_estimated_age {m:.3}");
    println!("target_age {}", t.value());
    println!("wrote {}", out.display());
    Ok(())
}

fn sweep(
    checkpoint: &Path,
    image: &Path,
    lo: i64,
    hi: i64,
    step: i64,
    out: &Path,
    residual: Option<Switch>,
) -> Result<()> {
    let grid = AgeGrid::new(lo, hi, step)?;
    let p = prepare(checkpoint, image, residual)?;
    let k = p.models.profile.num_classes;
    let targets = grid.ages().into_iter().map(|t| TargetAge::new(t as f64, k)).collect::<resage::Result<Vec<_>>>()?;
    let frames = targets.iter().map(|&t| age_one(&p, t)).collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = grid.ages().iter().map(|t| t.to_string()).collect();
    save_rgb_png(&labeled_strip(&frames, &labels)?, out)?;
    println!("frames {}", frames.len());
    println!("wrote {}", out.display());
    Ok(())
}

fn eval(checkpoint: &Path, manifest: &Path, suite: Suite, out: &Path) -> Result<()> {
    let models = load_checkpoint(checkpoint, None)?.bundle;
    let test = Dataset::load(manifest, &models.profile, Some(Split::Test))?;
    // Everything is computed before the first write.
    let mut writes: Vec<Box<dyn FnOnce() -> Result<()>>> = Vec::new();
    match suite {
        Suite::Confusion => {
            for mode in [ConfusionMode::SelfEstimated, ConfusionMode::Interpolated] {
                let sweep = generate_sweep(&models, &test.images, AgeGrid::confusion_default(), mode, &SYNTHETIC_ANCHOR_GROUPS)?;
                for reader in [AgeReader::Embedded, AgeReader::Oracle] {
                    let m = confusion_from_sweep(&models, &sweep, reader)?;
                    let stem = format!("confusion_{}_{}", mode.name(), reader_name(reader));
                    println!("{stem} mean_abs_error {:.4}", m.mean_abs_error());
                    let dir = out.to_path_buf();
                    writes.push(Box::new(move || {
                        write_json(dir.join(format!("{stem}.json")), &m)?;
                        write_text(dir.join(format!("{stem}.txt")), &confusion_table(&m))?;
                        render_confusion_heatmap(&m, 16, dir.join(format!("{stem}.png")))?;
                        Ok(())
                    }));
                }
            }
        }
        Suite::Fid => {
            let rows = group_fid(&models, &test.images, &test.ages, &SYNTHETIC_DECADES, &EncoderFeatures(&models))?;
            let mut text = format!("{:>8} {:>6} {:>10} {:>12}\n", "group", "real", "generated", "fid");
            for r in &rows {
                text.push_str(&format!("{:>8} {:>6} {:>10} {:>12.5}\n", r.group.label(), r.real, r.generated, r.fid));
            }
            print!("{text}");
            let dir = out.to_path_buf();
            writes.push(Box::new(move || {
                write_json(dir.join("fid.json"), &rows)?;
                write_text(dir.join("fid.txt"), &text)?;
                Ok(())
            }));
        }
        Suite::AgeTable => {
            for reader in [AgeReader::Embedded, AgeReader::Oracle] {
                let rows = mean_age_per_group(&models, &test.images, &test.ages, &SYNTHETIC_DECADES, reader)?;
                let text = age_table(&rows);
                println!("# reader={}", reader_name(reader));
                print!("{text}");
                let (dir, name) = (out.to_path_buf(), reader_name(reader));
                writes.push(Box::new(move || {
                    write_json(dir.join(format!("age_table_{name}.json")), &rows)?;
                    write_text(dir.join(format!("age_table_{name}.txt")), &text)?;
                    Ok(())
                }));
            }
        }
        Suite::Interp => {
            let order = test.identity_order();
            if order.len() < 2 {
                return Err(Error::Validation("interpolation needs two test identities".into()).into());
            }
            let first = |id: &String| test.identities.iter().position(|i| i == id).expect("listed identity");
            let (a, b) = (first(&order[0]), first(&order[1]));
            let t = TargetAge::new(INTERP_TARGET, models.profile.num_classes)?;
            let frames = identity_interpolation(
                &models,
                &test.images.get(a as i64),
                &test.images.get(b as i64),
                t,
                INTERP_STEPS,
            )?;
            let labels: Vec<String> =
                (0..INTERP_STEPS).map(|i| format!("{:.2}", i as f64 / (INTERP_STEPS - 1) as f64)).collect();
            let strip = labeled_strip(&to_images(&frames)?, &labels)?;
            println!("interpolated {} -> {} at age {INTERP_TARGET}", order[0], order[1]);
            let path = out.join("interpolation.png");
            writes.push(Box::new(move || Ok(save_rgb_png(&strip, path)?)));
        }
    }
    for w in writes {
        w()?;
    }
    println!("reports in {}", out.display());
    Ok(())
}

fn reader_name(r: AgeReader) -> &'static str {
    match r {
        AgeReader::Embedded => "embedded",
        AgeReader::Oracle => "oracle",
    }
}

fn ablation(manifest: &Path, out: &Path, flags: &TrainFlags) -> Result<()> {
    let cfg = resolve_config(flags)?;
    let train_set = Dataset::load(manifest, &cfg.profile, Some(Split::Train))?;
    let test = Dataset::load(manifest, &cfg.profile, Some(Split::Test)).context("ablation needs a test split")?;
    let report = ablation_compare(&cfg, &train_set, &test, Some(out.to_path_buf()))?;
    let table = report.to_table();
    write_json(out.join("ablation.json"), &report)?;
    write_text(out.join("ablation.txt"), &table)?;
    print!("{table}");
    Ok(())
}
