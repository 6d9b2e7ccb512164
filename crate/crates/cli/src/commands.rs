use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use smell::checkpoint::Checkpoint;
use smell::data::{load_csv, make_folds, to_csv_string, CsvOptions};
use smell::datasets::{self, SynthParams};
use smell::eval::{cross_validate, prepare_dataset, run_ablations};
use smell::export::export_embeddings;
use smell::report::{result_rows, write_csv, write_reports, ResultRow};
use smell::theory::{default_grid, risk_consistency_report, RiskInput};
use smell::trainer::{train, StepLog, TrainConfig};
use smell::Dataset64;

use crate::args::{AblateArgs, ConfigArgs, DataArgs, EvalArgs, ExportArgs, RiskArgs, SynthArgs, SynthTarget, TrainArgs};
use crate::UserError;

const MANIFEST: &str = "manifest.json";

struct Loaded {
    source: String,
    sha256: String,
    dataset: Dataset64,
}

#[derive(Serialize)]
struct DatasetEntry<'a> {
    name: &'a str,
    source: &'a str,
    sha256: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a TrainConfig,
    datasets: Vec<DatasetEntry<'a>>,
    outputs: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load_datasets(args: &DataArgs) -> Result<Vec<Loaded>> {
    let options = CsvOptions {
        has_header: args.has_header,
        label_col: args.label_col,
    };
    let mut paths = args.data.clone();
    if let Some(dir) = &args.data_dir {
        let entries = fs::read_dir(dir).map_err(|e| UserError(format!("cannot read directory {}: {e}", dir.display())))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        found.sort();
        if found.is_empty() {
            bail!(UserError(format!("no .csv files in {}", dir.display())));
        }
        paths.extend(found);
    }
    let mut out = Vec::new();
    for path in &paths {
        let bytes = fs::read(path).map_err(|e| UserError(format!("cannot read {}: {e}", path.display())))?;
        let dataset = load_csv(path, &options)?;
        out.push(Loaded {
            source: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            dataset,
        });
    }
    for name in &args.builtin {
        let dataset = match name.as_str() {
            "iris" => datasets::iris(),
            "monk2" => datasets::monk2(),
            other => bail!(UserError(format!("unknown builtin dataset '{other}' (iris, monk2)"))),
        };
        out.push(Loaded {
            source: format!("builtin:{name}"),
            sha256: sha256_hex(to_csv_string(&dataset).as_bytes()),
            dataset,
        });
    }
    if out.is_empty() {
        bail!(UserError("no dataset given (use --data, --data-dir or --builtin)".into()));
    }
    Ok(out)
}

fn resolve_config(args: &ConfigArgs, base: Option<TrainConfig>) -> Result<TrainConfig> {
    let mut config = match (&args.config, base) {
        (Some(path), _) => {
            let text =
                fs::read_to_string(path).map_err(|e| UserError(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| UserError(format!("invalid config {}: {e}", path.display())))?
        }
        (None, Some(base)) => base,
        (None, None) => TrainConfig::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field.clone() {
                config.$field = v;
            })*
        };
    }
    apply!(
        seed,
        r_hc,
        r_d,
        r_r,
        epsilon,
        positive_markers,
        negative_markers,
        latent_dim,
        hidden,
        learning_rate,
        momentum,
        batch_size,
        pretrain_epochs,
        joint_epochs,
        downsample
    );
    config.zero_r_r |= args.zero_r_r;
    config.zero_r_d |= args.zero_r_d;
    for warning in config.validate()? {
        eprintln!("warning: {warning}");
    }
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| UserError(format!("cannot create {}: {e}", dir.display())).into())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_manifest(dir: &Path, command: &str, config: &TrainConfig, data: &[Loaded], outputs: &[&str]) -> Result<()> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config,
        datasets: data
            .iter()
            .map(|d| DatasetEntry {
                name: &d.dataset.name,
                source: &d.source,
                sha256: &d.sha256,
            })
            .collect(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    write_text(&dir.join(MANIFEST), &(serde_json::to_string_pretty(&manifest)? + "\n"))
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let data = load_datasets(&args.data)?;
    if data.len() != 1 {
        bail!(UserError("train takes exactly one dataset".into()));
    }
    let config = resolve_config(&args.config, None)?;
    if let Some(fold) = args.fold {
        if fold >= smell::data::NUM_FOLDS {
            bail!(UserError(format!("--fold must be below {}", smell::data::NUM_FOLDS)));
        }
    }
    create_dir(&args.out)?;
    let dataset = prepare_dataset(&data[0].dataset, &config)?;
    let plan = make_folds(&dataset, config.seed);
    eprintln!("training on {} ({} rows)", dataset.name, dataset.n_rows());
    let model = train(&dataset, &plan, args.fold, &config)?;
    Checkpoint::from_parts(&model.params, &model.markers, &config).save(args.out.join("checkpoint.json"))?;
    write_csv::<StepLog>(args.out.join("log.csv"), &model.log)?;
    #[derive(Serialize)]
    struct PretrainRow {
        epoch: usize,
        reconstruction: f64,
    }
    let pretrain: Vec<PretrainRow> = model
        .pretrain_log
        .iter()
        .enumerate()
        .map(|(epoch, &reconstruction)| PretrainRow { epoch, reconstruction })
        .collect();
    write_csv(args.out.join("pretrain_log.csv"), &pretrain)?;
    write_manifest(&args.out, "train", &config, &data, &["checkpoint.json", "log.csv", "pretrain_log.csv"])?;
    if let Some(last) = model.log.last() {
        eprintln!("final step {}: total {:.6} (h_c {:.6})", last.step, last.total, last.h_c);
    }
    Ok(())
}

const REPORTS: [&str; 3] = ["results.csv", "dataset_summary.csv", "summary.csv"];

fn print_summary(rows: &[ResultRow]) {
    for s in smell::report::dataset_summaries(rows) {
        eprintln!("{} {}: {:.4} +- {:.4}", s.dataset, s.method, s.mean, s.std);
    }
}

pub fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let data = load_datasets(&args.data)?;
    let base = match &args.checkpoint {
        Some(path) => Some(Checkpoint::load(path)?.config),
        None => None,
    };
    let config = resolve_config(&args.config, base)?;
    if args.methods.is_empty() {
        bail!(UserError("no methods given".into()));
    }
    let mut methods = args.methods.clone();
    methods.dedup();
    create_dir(&args.out)?;
    let mut rows = Vec::new();
    for loaded in &data {
        let dataset = prepare_dataset(&loaded.dataset, &config)?;
        let results = cross_validate(&dataset, &config, &methods)
            .with_context(|| format!("evaluating {}", dataset.name))?;
        let named: Vec<(String, &_)> = results.iter().map(|m| (m.metric.to_string(), m)).collect();
        rows.extend(result_rows(&dataset.name, &named));
    }
    write_reports(&args.out, &rows)?;
    print_summary(&rows);
    write_manifest(&args.out, "eval", &config, &data, &REPORTS)
}

pub fn ablate_cmd(args: &AblateArgs) -> Result<()> {
    let data = load_datasets(&args.data)?;
    let config = resolve_config(&args.config, None)?;
    create_dir(&args.out)?;
    let mut rows = Vec::new();
    for loaded in &data {
        let dataset = prepare_dataset(&loaded.dataset, &config)?;
        let results = run_ablations(&dataset, &config).with_context(|| format!("ablating {}", dataset.name))?;
        for r in &results {
            rows.extend(r.folds.iter().map(|f| ResultRow {
                dataset: dataset.name.clone(),
                method: r.variant.name.to_string(),
                fold: f.fold,
                accuracy: f.accuracy,
            }));
        }
    }
    write_reports(&args.out, &rows)?;
    print_summary(&rows);
    write_manifest(&args.out, "ablate", &config, &data, &REPORTS)
}

pub fn export_cmd(args: &ExportArgs) -> Result<()> {
    let data = load_datasets(&args.data)?;
    if data.len() != 1 {
        bail!(UserError("export takes exactly one dataset".into()));
    }
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let (params, markers) = checkpoint.restore::<f64>()?;
    let dataset = prepare_dataset(&data[0].dataset, &checkpoint.config)?;
    if dataset.n_features() != params.input_dim() {
        bail!(UserError(format!(
            "dataset has {} features but the checkpoint expects {}",
            dataset.n_features(),
            params.input_dim()
        )));
    }
    create_dir(&args.out)?;
    export_embeddings(&params, &markers, &dataset, &args.out, args.pca2, args.seed)?;
    write_manifest(
        &args.out,
        "export",
        &checkpoint.config,
        &data,
        &["latent.csv", "svectors.csv", "markers.json"],
    )
}

pub fn risk_cmd(args: &RiskArgs) -> Result<()> {
    let grid = match (args.dplus, args.dminus, args.grid) {
        (_, _, true) => default_grid(),
        (Some(p), Some(m), false) => vec![RiskInput::new(p, m).map_err(|e| UserError(e.to_string()))?],
        _ => bail!(UserError("give --dplus and --dminus, or --grid".into())),
    };
    if !(args.tol > 0.0) {
        bail!(UserError("--tol must be > 0".into()));
    }
    let report = risk_consistency_report(&grid, args.tol)?;
    let mut text = String::from("d_plus,d_minus,closed_form,numerical,error_estimate,abs_diff,flag\n");
    for r in &report.rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.d_plus,
            r.d_minus,
            r.closed_form,
            r.numerical,
            r.error_estimate,
            r.abs_diff,
            r.flag()
        ));
    }
    match &args.out {
        Some(path) => write_text(path, &text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    eprintln!(
        "{} rows, {} flagged, max |closed - numerical| = {:e}",
        report.rows.len(),
        report.mismatches,
        report.max_abs_deviation
    );
    Ok(())
}

pub fn synth_cmd(args: &SynthArgs) -> Result<()> {
    let dataset: Dataset64 = match args.kind {
        SynthTarget::Iris => datasets::iris(),
        SynthTarget::Monk2 => datasets::monk2(),
        SynthTarget::Generated(kind) => {
            if args.rows < 4 {
                bail!(UserError("--rows must be at least 4".into()));
            }
            let params = SynthParams {
                rows: args.rows,
                separation: args.separation,
                noise_dims: args.noise_dims,
                seed: args.seed,
            };
            datasets::synthesize(kind, &params)?
        }
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_text(&args.out, &to_csv_string(&dataset))
}
