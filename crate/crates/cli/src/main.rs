mod error;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nfsense_core::channel_sim::{
    channel_variation_power, domination_table, generate_population, variation_terms, ActivityClass,
    PowerMode, RadioConfig,
};
use nfsense_core::config::RunConfig;
use nfsense_core::dataset_io::{dataset_hash, export_csv, make_split, read_dataset, write_dataset, SplitManifest};
use nfsense_core::infer_eval::{
    check_no_leakage, dump_features, evaluate, run_ablation_suite, run_experiment, Predictor,
};
use nfsense_core::model::{load_checkpoint, save_checkpoint, HarModel, ModelDims};
use nfsense_core::preprocess::{assemble_dataset, cache_key, pad_len, write_cache, ModelInput};
use nfsense_core::train::{baseline_finetune, compute_anchors, finetune, pretrain, write_history, Anchors, HistoryRow};
use nfsense_core::CsiSample;

use error::{Category, Failure};

#[derive(Parser, Debug)]
#[command(name = "nfsense", version, about = "Near-field Wi-Fi activity recognition pipeline")]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set train.pt_epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads for data-parallel stages; defaults to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic population to a dataset file.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble model inputs and write them to a cache file.
    Preprocess {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw the split and pre-train on the source subjects.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the split manifest.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Fine-tune a pre-trained model on the target subject.
    Finetune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to write anchors recomputed with the fine-tuned model.
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long)]
        history: Option<PathBuf>,
        /// Run the configured comparison variant instead of anchor matching.
        #[arg(long)]
        baseline: bool,
    },
    /// Score a model on the target subject's held-out samples.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = PredictorKind::Composite)]
        predictor: PredictorKind,
        /// Required for composite inference.
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Full loop per configured seed: split, pre-train, fine-tune, evaluate.
    Experiment {
        /// Dataset to use; simulated from the configuration when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Receives one `seed_<n>` directory per seed and `summary.csv`
        #[arg(long)]
        out_dir: PathBuf,
        /// Also run the single-ingredient ablations.
        #[arg(long)]
        ablation: bool,
    },
    /// Write the feature vector of every sample as CSV.
    DumpFeatures {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a dataset as one CSV row per CSI value.
    ExportCsv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report the reflection variation terms and the seated-row domination table.
    PhysicsCheck {
        #[arg(long, default_value_t = 0.2)]
        l1: f64,
        #[arg(long, default_value_t = 5.0)]
        l2: f64,
        #[arg(long, default_value_t = 0.06)]
        lambda: f64,
        #[arg(long, default_value_t = 4.0)]
        sigma: f64,
        #[arg(long, default_value_t = 4)]
        subjects: usize,
        #[arg(long, default_value = "PP")]
        activity: String,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PredictorKind {
    Composite,
    Softmax,
    Cosine,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            return Failure::new(Category::Usage, first).report();
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Ok(s) = std::env::var("NFS_SEED") {
        cfg.set("seed", &s)?;
        cfg.set("experiment.seeds", &s)?;
    }
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::new(Category::Usage, "--workers must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(Category::Runtime, e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { out } => simulate(&cfg, &out),
        Command::Preprocess { data, out } => preprocess(&cfg, &data, &out),
        Command::Pretrain {
            data,
            out,
            manifest,
            history,
        } => pretrain_cmd(&cfg, &data, &out, &manifest, history.as_deref()),
        Command::Finetune {
            data,
            model,
            manifest,
            out,
            anchors,
            history,
            baseline,
        } => finetune_cmd(&cfg, &data, &model, &manifest, &out, anchors.as_deref(), history.as_deref(), baseline),
        Command::Eval {
            data,
            model,
            manifest,
            predictor,
            anchors,
            report,
        } => eval_cmd(&cfg, &data, &model, &manifest, predictor, anchors.as_deref(), report.as_deref()),
        Command::Experiment { data, out_dir, ablation } => experiment(&cfg, data.as_deref(), &out_dir, ablation),
        Command::DumpFeatures { data, model, out } => dump(&cfg, &data, &model, &out),
        Command::ExportCsv { data, out } => {
            let samples = read_dataset(&data)?;
            let rows = export_csv(&samples, BufWriter::new(create(&out)?)).map_err(|e| Failure::io(&out, e))?;
            println!("wrote {rows} rows to {}", out.display());
            Ok(())
        }
        Command::PhysicsCheck {
            l1,
            l2,
            lambda,
            sigma,
            subjects,
            activity,
        } => physics(&cfg, l1, l2, lambda, sigma, subjects, &activity),
    }
}

fn create(path: &Path) -> Result<fs::File, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| Failure::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    create(path)?.write_all(text.as_bytes()).map_err(|e| Failure::io(path, e))
}

fn write_rows(path: &Path, rows: &[HistoryRow]) -> Result<(), Failure> {
    let mut w = BufWriter::new(create(path)?);
    write_history(rows, &mut w).and_then(|_| w.flush()).map_err(|e| Failure::io(path, e))
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let samples = generate_population(&cfg.population_for_seed())?;
    write_dataset(out, &samples)?;
    println!("wrote {} samples to {} (sha256 {})", samples.len(), out.display(), dataset_hash(&samples)?);
    Ok(())
}

fn inputs_for(cfg: &RunConfig, samples: &[CsiSample]) -> Result<Vec<ModelInput>, Failure> {
    let pad = pad_len(samples)?;
    Ok(assemble_dataset(samples, &cfg.embed, pad)?)
}

fn preprocess(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), Failure> {
    let samples = read_dataset(data)?;
    let pad = pad_len(&samples)?;
    let inputs = assemble_dataset(&samples, &cfg.embed, pad)?;
    let key = cache_key(&dataset_hash(&samples)?, &cfg.embed, pad);
    write_cache(out, &inputs, &key)?;
    println!("wrote {} inputs ({} x {}) to {}", inputs.len(), pad, inputs[0].n_features, out.display());
    Ok(())
}

fn select<'a>(inputs: &'a [ModelInput], ids: &[usize]) -> Vec<&'a ModelInput> {
    ids.iter().map(|&i| &inputs[i]).collect()
}

fn pretrain_cmd(
    cfg: &RunConfig,
    data: &Path,
    out: &Path,
    manifest_path: &Path,
    history: Option<&Path>,
) -> Result<(), Failure> {
    let samples = read_dataset(data)?;
    let manifest = make_split(&samples, &cfg.split, cfg.seed)?;
    let inputs = inputs_for(cfg, &samples)?;
    let exp = cfg.experiment(cfg.seed);
    let (weights, _) = exp.effective();
    let mut dims = ModelDims::new(inputs[0].n_features);
    dims.encoder = cfg.encoder_width;
    let model = HarModel::init(dims, &mut nfsense_core::rng::rng(cfg.seed));
    let train = nfsense_core::train::TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    let (model, rows) = pretrain(&model, &select(&inputs, &manifest.pt_ids(&samples)), &train, &weights)?;
    save_checkpoint(&model, out)?;
    manifest.write(manifest_path)?;
    if let Some(h) = history {
        write_rows(h, &rows)?;
    }
    let val = rows.last().and_then(|r| r.val_acc).map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!("pre-trained {} epochs, validation accuracy {val}; model {}", rows.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn finetune_cmd(
    cfg: &RunConfig,
    data: &Path,
    model_path: &Path,
    manifest_path: &Path,
    out: &Path,
    anchors_out: Option<&Path>,
    history: Option<&Path>,
    baseline: bool,
) -> Result<(), Failure> {
    let samples = read_dataset(data)?;
    let manifest = SplitManifest::read(manifest_path)?;
    manifest.check(&samples)?;
    let inputs = inputs_for(cfg, &samples)?;
    let model = load_checkpoint(model_path)?;
    let train = nfsense_core::train::TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    let ft = select(&inputs, &manifest.ft_flat());
    let an = select(&inputs, &manifest.anchor_flat());
    let (tuned, rows) = if baseline {
        baseline_finetune(&model, &ft, &train, cfg.baseline())?
    } else {
        let (weights, _) = cfg.experiment(cfg.seed).effective();
        finetune(&model, &ft, &an, &train, &weights)?
    };
    save_checkpoint(&tuned, out)?;
    if let Some(h) = history {
        write_rows(h, &rows)?;
    }
    if let Some(a) = anchors_out {
        write_text(a, &compute_anchors(&tuned, &an, 64)?.to_text())?;
    }
    println!("fine-tuned {} steps; model {}", rows.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval_cmd(
    cfg: &RunConfig,
    data: &Path,
    model_path: &Path,
    manifest_path: &Path,
    kind: PredictorKind,
    anchors_path: Option<&Path>,
    report_path: Option<&Path>,
) -> Result<(), Failure> {
    let samples = read_dataset(data)?;
    let manifest = SplitManifest::read(manifest_path)?;
    manifest.check(&samples)?;
    let test_ids = manifest.test_ids(&samples);
    check_no_leakage(&manifest, &test_ids)?;
    let inputs = inputs_for(cfg, &samples)?;
    let model = load_checkpoint(model_path)?;
    let anchors;
    let (_, composite) = cfg.experiment(cfg.seed).effective();
    let (predictor, method) = match kind {
        PredictorKind::Composite => {
            let path = anchors_path
                .ok_or_else(|| Failure::new(Category::Usage, "composite inference needs --anchors"))?;
            let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            anchors = Anchors::from_text(&text)?;
            (
                Predictor::Composite {
                    anchors: &anchors,
                    params: composite,
                },
                "wianchor",
            )
        }
        PredictorKind::Softmax => (Predictor::Softmax, "softmax"),
        PredictorKind::Cosine => (Predictor::Cosine { scale: cfg.cosine_scale }, "cosine"),
    };
    let absent: Vec<usize> = manifest.absent_classes.iter().map(|c| c.id() as usize).collect();
    let report = evaluate(&model, predictor, &select(&inputs, &test_ids), &absent, method, cfg.seed, &cfg.hash())?;
    print!("{}", report.to_table());
    if let Some(p) = report_path {
        write_text(p, &report.to_csv())?;
    }
    Ok(())
}

fn dataset_for(cfg: &RunConfig, data: Option<&Path>) -> Result<Vec<CsiSample>, Failure> {
    match data {
        Some(p) => Ok(read_dataset(p)?),
        None => {
            Ok(generate_population(&cfg.population_for_seed())?)
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| format!("{x:.6}"))
}

fn experiment(cfg: &RunConfig, data: Option<&Path>, out_dir: &Path, ablation: bool) -> Result<(), Failure> {
    let samples = dataset_for(cfg, data)?;
    fs::create_dir_all(out_dir).map_err(|e| Failure::io(out_dir, e))?;
    write_text(&out_dir.join("config.txt"), &cfg.to_text())?;
    let mut summary = String::from("seed,method,overall,with_ft,absent,source_val_acc,config_hash\n");
    for &seed in &cfg.seeds {
        let exp = cfg.experiment(seed);
        let dir = out_dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&dir).map_err(|e| Failure::io(&dir, e))?;
        let o = run_experiment(&samples, &exp)?;
        o.manifest.write(dir.join("split.txt"))?;
        for (name, m) in [("pretrained", &o.pt_model), ("finetuned", &o.ft_model), ("baseline", &o.baseline_model)] {
            save_checkpoint(m, dir.join(format!("{name}.nfsw")))?;
        }
        write_text(&dir.join("anchors.txt"), &o.anchors.to_text())?;
        write_rows(&dir.join("pretrain_history.csv"), &o.pt_history)?;
        write_rows(&dir.join("finetune_history.csv"), &o.ft_history)?;
        write_rows(&dir.join("baseline_history.csv"), &o.baseline_history)?;
        for r in [&o.wianchor, &o.baseline] {
            write_text(&dir.join(format!("report_{}.csv", r.method)), &r.to_csv())?;
            write_text(&dir.join(format!("report_{}.txt", r.method)), &r.to_table())?;
            summary.push_str(&format!(
                "{seed},{},{:.6},{},{},{},{}\n",
                r.method,
                r.overall,
                fmt_opt(r.with_ft_mean),
                fmt_opt(r.absent_mean),
                fmt_opt(o.source_val_acc),
                r.config_hash
            ));
            println!(
                "seed {seed} {:<18} overall {:.3} with-FT {} absent {}",
                r.method,
                r.overall,
                fmt_opt(r.with_ft_mean),
                fmt_opt(r.absent_mean)
            );
        }
        if ablation {
            let a = run_ablation_suite(&samples, &exp)?;
            for r in [&a.full, &a.no_composite, &a.no_anchor, &a.no_margin, &a.naive] {
                write_text(&dir.join(format!("ablation_{}.csv", r.method)), &r.to_csv())?;
                summary.push_str(&format!(
                    "{seed},ablation_{},{:.6},{},{},{},{}\n",
                    r.method,
                    r.overall,
                    fmt_opt(r.with_ft_mean),
                    fmt_opt(r.absent_mean),
                    fmt_opt(a.source_val_acc),
                    r.config_hash
                ));
            }
        }
    }
    write_text(&out_dir.join("summary.csv"), &summary)?;
    println!("wrote results to {}", out_dir.display());
    Ok(())
}

fn dump(cfg: &RunConfig, data: &Path, model_path: &Path, out: &Path) -> Result<(), Failure> {
    let samples = read_dataset(data)?;
    let inputs = inputs_for(cfg, &samples)?;
    let model = load_checkpoint(model_path)?;
    let refs: Vec<&ModelInput> = inputs.iter().collect();
    let mut w = BufWriter::new(create(out)?);
    let rows = dump_features(&model, &refs, &mut w)?;
    w.flush().map_err(|e| Failure::io(out, e))?;
    println!("wrote {rows} feature rows to {}", out.display());
    Ok(())
}

fn physics(
    cfg: &RunConfig,
    l1: f64,
    l2: f64,
    lambda: f64,
    sigma: f64,
    subjects: usize,
    activity: &str,
) -> Result<(), Failure> {
    let radio = RadioConfig {
        pathloss_exponent: sigma,
        ..RadioConfig::with_wavelength(lambda)
    };
    let (amp, phase) = variation_terms(&radio, l1, l2);
    let full = channel_variation_power(&radio, 1.0, l1, l2, 1.0, PowerMode::Full)?;
    let simple = channel_variation_power(&radio, 1.0, l1, l2, 1.0, PowerMode::Simplified)?;
    println!("geometry: L1 = {l1} m, L2 = {l2} m, lambda = {lambda} m, sigma = {sigma}");
    println!("amplitude term      {amp:.6e}");
    println!("phase term          {phase:.6e}");
    println!("phase / amplitude   {:.2}", phase / amp);
    println!("full vs simplified  relative gap {:.4}%", 100.0 * (full - simple) / full);

    let activity: ActivityClass = activity.parse()?;
    let table = domination_table(
        &cfg.population.radio,
        subjects,
        activity,
        cfg.population.reflect_gain,
        cfg.population.traffic.duration_s,
        200,
        cfg.seed,
    )?;
    println!();
    println!("conjugate-ratio phase variance per link while one subject performs {activity}");
    print!("{:<8}", "active");
    for l in 0..subjects {
        print!(" {:>12}", format!("link {l}"));
    }
    println!(" {:>12}", "own/other");
    for row in &table {
        print!("{:<8}", row.active);
        for v in &row.phase_variance {
            print!(" {v:>12.4e}");
        }
        println!(" {:>12.1}", row.min_own_to_other());
    }
    println!();
    println!("closed-form variation power relative to the own link");
    for row in &table {
        print!("{:<8}", row.active);
        for v in &row.closed_form {
            print!(" {v:>12.4e}");
        }
        println!();
    }
    Ok(())
}
