use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cxrnet::checkpoint::Checkpoint;
use cxrnet::datapipe::{preprocess, scan_split, ImageSet, Label, Split};
use cxrnet::metrics::DEFAULT_THRESHOLD;
use cxrnet::optim::clamp_probability;
use cxrnet::trainer::{evaluate, train_with};
use cxrnet::{Error, EvaluationReport, ModelSpec, Network, Result, Tensor};
use serde::Serialize;

use crate::config::RunConfig;

const EVAL_BATCH: usize = 32;

/// Writes through a temporary sibling so readers never see half a file.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Serialize)]
struct SplitCounts {
    normal: usize,
    pneumonia: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config_sha256: String,
    config: &'a RunConfig,
    parameters: usize,
    train: SplitCounts,
    val: SplitCounts,
    epochs_completed: usize,
    best_epoch: Option<usize>,
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    // Everything that can fail on bad input happens before the output
    // directory is touched.
    let train_ds = scan_split(&cfg.dataset_root, Split::Train)?;
    let val_ds = scan_split(&cfg.dataset_root, Split::Val)?;
    let train_set = ImageSet::<f32>::load(&train_ds, cfg.image_size)?;
    let val_set = ImageSet::<f32>::load(&val_ds, cfg.image_size)?;
    let tc = cfg.train_config();
    let network = Network::<f32>::init(ModelSpec::classifier(cfg.image_size), &mut tc.init_rng())?;
    let parameters = network.param_count();

    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let counts = |ds: &cxrnet::datapipe::LabeledDataset| SplitCounts {
        normal: ds.count(Label::Normal),
        pneumonia: ds.count(Label::Pneumonia),
    };
    let write_manifest = |epochs_completed: usize, best_epoch: Option<usize>| {
        let manifest = Manifest {
            tool: "cxrnet",
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config_sha256: cfg.sha256(),
            config: cfg,
            parameters,
            train: counts(&train_ds),
            val: counts(&val_ds),
            epochs_completed,
            best_epoch,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        write_atomic(&out.join("manifest.json"), json.as_bytes())
    };
    write_manifest(0, None)?;
    write_atomic(&out.join("history.csv"), cxrnet::History::default().to_csv().as_bytes())?;
    eprintln!(
        "training {parameters} parameters on {} images ({} validation), {} epochs",
        train_set.len(),
        val_set.len(),
        cfg.epochs
    );

    let mut best: Option<(f64, usize)> = None;
    let trainer = train_with(network, &train_set, &val_set, &tc, |trainer, rec| {
        write_atomic(&out.join("history.csv"), trainer.history().to_csv().as_bytes())?;
        let epoch = rec.epoch as u32;
        Checkpoint::capture(trainer.network(), Some(trainer.adam()), epoch, cfg.seed).save(&out.join("model.cxrn"))?;
        if best.is_none_or(|(loss, _)| rec.val_loss < loss) {
            best = Some((rec.val_loss, rec.epoch));
            Checkpoint::capture(trainer.network(), None, epoch, cfg.seed).save(&out.join("best.cxrn"))?;
        }
        write_manifest(rec.epoch, best.map(|b| b.1))?;
        eprintln!(
            "epoch {}/{}: train_loss {:.4} train_acc {:.4} val_loss {:.4} val_acc {:.4} lr {}",
            rec.epoch,
            cfg.epochs,
            rec.train_loss,
            rec.train_accuracy,
            rec.val_loss,
            rec.val_accuracy,
            rec.learning_rate
        );
        Ok(())
    })?;
    if cfg.epochs == 0 {
        Checkpoint::capture(trainer.network(), Some(trainer.adam()), 0, cfg.seed).save(&out.join("model.cxrn"))?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn load_network(path: &Path) -> Result<Network<f32>> {
    Checkpoint::load(path)?.network()
}

/// Side of the square input a checkpointed network expects.
fn input_size(net: &Network<f32>) -> Result<usize> {
    match net.spec().input {
        [1, h, w] if h == w => Ok(h),
        other => Err(Error::Format(format!("checkpoint expects unsupported input {other:?}"))),
    }
}

fn scores_csv(paths: &[PathBuf], labels: &[u8], scores: &[f64]) -> String {
    let mut out = String::from("path,label,score\n");
    for ((p, l), s) in paths.iter().zip(labels).zip(scores) {
        writeln!(out, "{},{l},{s}", p.display()).expect("write to string");
    }
    out
}

/// Parses `path,label,score` rows. Paths may contain commas; the last two
/// fields are split from the right.
pub fn parse_scores_csv(text: &str) -> Result<(Vec<u8>, Vec<f64>)> {
    let mut lines = text.lines();
    if lines.next() != Some("path,label,score") {
        return Err(Error::Format(
            "scores file must start with the header path,label,score".into(),
        ));
    }
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let bad = || Error::Format(format!("scores file line {}: {line:?}", i + 2));
        let mut fields = line.rsplitn(3, ',');
        let score: f64 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let label: u8 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        fields.next().ok_or_else(bad)?;
        labels.push(label);
        scores.push(score);
    }
    Ok((labels, scores))
}

fn write_report(out: &Path, report: &EvaluationReport) -> Result<()> {
    fs::create_dir_all(out)?;
    write_atomic(&out.join("report.json"), (report.to_json() + "\n").as_bytes())?;
    write_atomic(&out.join("roc.csv"), report.roc_csv().as_bytes())?;
    write_atomic(&out.join("pr.csv"), report.pr_csv().as_bytes())?;
    println!(
        "accuracy {:.4}  roc_auc {:.4}  pr_auc {:.4}  ({} images)",
        report.accuracy, report.roc_auc, report.pr_auc, report.total
    );
    Ok(())
}

pub fn evaluate_split(cfg: &RunConfig, split: Split) -> Result<()> {
    let net = load_network(&cfg.checkpoint_path())?;
    let ds = scan_split(&cfg.dataset_root, split)?;
    let set = ImageSet::<f32>::load(&ds, input_size(&net)?)?;
    let scores = evaluate(&net, &set, EVAL_BATCH)?;
    let report = EvaluationReport::compute(&scores.scores, &scores.labels, DEFAULT_THRESHOLD)?;
    let paths: Vec<PathBuf> = ds.items.iter().map(|i| i.path.clone()).collect();
    fs::create_dir_all(&cfg.output_dir)?;
    write_atomic(
        &cfg.output_dir.join("scores.csv"),
        scores_csv(&paths, &scores.labels, &scores.scores).as_bytes(),
    )?;
    write_report(&cfg.output_dir, &report)
}

pub fn report(scores_path: &Path, out: &Path, threshold: f64) -> Result<()> {
    let text = fs::read_to_string(scores_path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", scores_path.display())))?;
    let (labels, scores) = parse_scores_csv(&text)?;
    let report = EvaluationReport::compute(&scores, &labels, threshold)?;
    write_report(out, &report)
}

#[derive(Serialize)]
struct Prediction<'a> {
    path: &'a str,
    probability: f64,
    label: String,
}

pub fn predict(cfg: &RunConfig, images: &[PathBuf]) -> Result<()> {
    let net = load_network(&cfg.checkpoint_path())?;
    let size = input_size(&net)?;
    for path in images {
        let img = preprocess::<f32>(path, size)?;
        let batch = Tensor::from_vec(&[1, 1, size, size], img.into_data())?;
        let p = clamp_probability(net.predict(&batch)?.data()[0] as f64);
        let line = Prediction {
            path: &path.to_string_lossy(),
            probability: p,
            label: Label::from_probability(p, DEFAULT_THRESHOLD).to_string(),
        };
        println!("{}", serde_json::to_string(&line).expect("prediction serializes"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_csv_round_trip() {
        let paths = vec![PathBuf::from("a,b.png"), PathBuf::from("c.png")];
        let text = scores_csv(&paths, &[1, 0], &[0.1 + 0.2, 1e-7]);
        let (labels, scores) = parse_scores_csv(&text).unwrap();
        assert_eq!(labels, vec![1, 0]);
        assert_eq!(scores, vec![0.1 + 0.2, 1e-7]);
    }

    #[test]
    fn malformed_scores_rejected() {
        assert_eq!(parse_scores_csv("x\n").unwrap_err().category(), "format");
        assert!(parse_scores_csv("path,label,score\na,1,notanumber\n").is_err());
    }
}
