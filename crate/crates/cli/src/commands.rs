use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use oracle4rec::encoder::{load_checkpoint, read_manifest, Arch, Manifest};
use oracle4rec::eval::{analyze_preferences, evaluate, inference_side, EvalTarget, MetricsReport};
use oracle4rec::seqdata::{
    build_dataset, generate_synthetic_drift, load_interactions, split_leave_one_out, Dataset,
    DatasetStats, InputFormat, SplitDataset, SyntheticConfig,
};
use oracle4rec::training::{save_run, train, RunMetrics};
use oracle4rec::{resolve_config, Config, Error, Precision, Real};

use crate::ablation;
use crate::args::{AblateArgs, AnalyzeArgs, EvalArgs, PrepArgs, RunArgs, SynthArgs};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub const DATASET_FILE: &str = "dataset.json";
pub const STATS_FILE: &str = "stats.json";
pub const CONFIG_ECHO: &str = "config.conf";

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Run(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v).map_err(Error::from)?)
}

/// A prepared dataset file, or a raw TSV log that is filtered on the fly.
pub fn load_dataset(path: &Path, min_count: usize) -> Result<Dataset> {
    let raw = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("tsv" | "txt" | "data")
    );
    if raw {
        let inter = load_interactions(path, InputFormat::Tsv)?;
        Ok(build_dataset(&inter, min_count)?)
    } else {
        Ok(Dataset::load(path)?)
    }
}

fn dataset_path(flag: Option<&Path>, cfg: &Config) -> Result<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.data.path.clone())
        .ok_or_else(|| CliError::Usage("no dataset: pass --input or set data.path".into()))
}

#[derive(Serialize)]
struct StatsReport<'a> {
    source: &'a Path,
    min_count: usize,
    #[serde(flatten)]
    stats: DatasetStats,
    categories: usize,
}

fn print_stats(s: &DatasetStats) {
    println!("users         {}", s.users);
    println!("items         {}", s.items);
    println!("interactions  {}", s.interactions);
    println!("density       {:.3}%", s.density * 100.0);
}

pub fn prep(a: &PrepArgs, overrides: &[(String, String)]) -> Result<()> {
    let cfg = resolve_config(a.config.as_deref(), overrides)?;
    let min_count = cfg.data.min_count;
    let inter = load_interactions(&a.input, InputFormat::Tsv)?;
    let ds = build_dataset(&inter, min_count)?;
    create_dir(&a.out)?;
    ds.save(a.out.join(DATASET_FILE))?;
    let stats = ds.stats();
    let report = StatsReport {
        source: &a.input,
        min_count,
        stats,
        categories: ds.num_categories(),
    };
    write(&a.out.join(STATS_FILE), to_json(&report)?)?;
    print_stats(&stats);
    Ok(())
}

fn run_config(
    config: Option<&Path>,
    switches: Vec<(String, String)>,
    protocol: Option<oracle4rec::Protocol>,
    seed: Option<u64>,
    overrides: &[(String, String)],
) -> Result<Config> {
    let mut all = switches;
    if let Some(p) = protocol {
        all.push(("eval.protocol".into(), p.to_string()));
    }
    if let Some(s) = seed {
        all.push(("train.seed".into(), s.to_string()));
    }
    all.extend_from_slice(overrides);
    Ok(resolve_config(config, &all)?)
}

fn train_and_save<T: Real>(split: &SplitDataset, cfg: &Config, out: &Path) -> Result<()> {
    let outcome = train::<T>(split, cfg)?;
    let ckpt = save_run(out, &outcome, cfg)?;
    write(&out.join(CONFIG_ECHO), cfg.to_kv_string())?;
    let v = &outcome.valid;
    println!(
        "best epoch {} of {}: valid HR@10 {:.4}  NDCG@10 {:.4}  MRR {:.4}",
        outcome.best_epoch,
        outcome.log.epochs.len(),
        v.hr10,
        v.ndcg10,
        v.mrr
    );
    println!("checkpoint {}", ckpt.display());
    Ok(())
}

fn train_with(mut cfg: Config, input: Option<&Path>, out: &Path) -> Result<()> {
    let path = dataset_path(input, &cfg)?;
    let ds = load_dataset(&path, cfg.data.min_count)?;
    // recorded so that `eval` can find the data from the checkpoint alone
    cfg.data.path = Some(fs::canonicalize(&path).unwrap_or(path));
    let split = split_leave_one_out(&ds)?;
    create_dir(out)?;
    match cfg.model.precision {
        Precision::F32 => train_and_save::<f32>(&split, &cfg, out),
        Precision::F64 => train_and_save::<f64>(&split, &cfg, out),
    }
}

pub fn train_cmd(a: &RunArgs, overrides: &[(String, String)]) -> Result<()> {
    let cfg = run_config(
        a.config.as_deref(),
        Vec::new(),
        a.protocol,
        a.seed,
        overrides,
    )?;
    train_with(cfg, a.input.as_deref(), &a.out)
}

pub fn ablate(a: &AblateArgs, overrides: &[(String, String)]) -> Result<()> {
    if a.list {
        print!("{}", ablation::listing());
        return Ok(());
    }
    let name = a.name.as_deref().unwrap_or_default();
    let ab = ablation::find(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown ablation `{name}`, see `oracle4rec ablate --list`"
        ))
    })?;
    let out = a
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let cfg = run_config(
        a.config.as_deref(),
        ab.overrides(),
        a.protocol,
        a.seed,
        overrides,
    )?;
    log::info!("ablation ({}) {}: {}", ab.row, ab.name, ab.description);
    train_with(cfg, a.input.as_deref(), out)
}

fn eval_as<T: Real>(
    ckpt: &Path,
    split: &SplitDataset,
    cfg: &Config,
) -> oracle4rec::Result<MetricsReport> {
    let (params, manifest) = load_checkpoint::<T>(ckpt)?;
    let arch = Arch::<T>::new(&manifest.config.model)?;
    evaluate(
        &arch,
        &params,
        inference_side(&manifest.config.train),
        split,
        EvalTarget::Test,
        cfg.eval.protocol,
        cfg.eval.seed,
    )
}

fn checkpoint_split(manifest: &Manifest, input: Option<&Path>) -> Result<SplitDataset> {
    let path = dataset_path(input, &manifest.config)?;
    let ds = load_dataset(&path, manifest.config.data.min_count)?;
    if ds.num_items != manifest.num_items {
        return Err(CliError::Run(Error::Checkpoint(format!(
            "checkpoint has {} items, dataset {} has {}",
            manifest.num_items,
            path.display(),
            ds.num_items
        ))));
    }
    Ok(split_leave_one_out(&ds)?)
}

pub fn eval_cmd(a: &EvalArgs, overrides: &[(String, String)]) -> Result<()> {
    let manifest = read_manifest(&a.checkpoint)?;
    let mut cfg = manifest.config.clone();
    if let Some(p) = a.protocol {
        cfg.eval.protocol = p;
    }
    if let Some(s) = a.seed {
        cfg.eval.seed = s;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    let split = checkpoint_split(&manifest, a.input.as_deref())?;
    let m = match manifest.dtype.as_str() {
        "f64" => eval_as::<f64>(&a.checkpoint, &split, &cfg)?,
        _ => eval_as::<f32>(&a.checkpoint, &split, &cfg)?,
    };
    let out = match &a.out {
        Some(o) => o.clone(),
        None => {
            let p = &a.checkpoint;
            if p.is_dir() {
                p.clone()
            } else {
                p.parent().map(Path::to_path_buf).unwrap_or_default()
            }
        }
    };
    create_dir(&out)?;
    let report = RunMetrics {
        split: "test",
        best_epoch: None,
        metrics: &m,
        config: &cfg,
    };
    let path = out.join("metrics.json");
    write(&path, to_json(&report)?)?;
    println!(
        "{} users, {}: HR@1 {:.4}  HR@5 {:.4}  HR@10 {:.4}  NDCG@5 {:.4}  NDCG@10 {:.4}  MRR {:.4}",
        m.users, m.protocol, m.hr1, m.hr5, m.hr10, m.ndcg5, m.ndcg10, m.mrr
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn analyze_as<T: Real>(
    a: &Path,
    b: &Path,
    split: &SplitDataset,
    k: usize,
) -> oracle4rec::Result<(
    oracle4rec::eval::PreferenceReport,
    oracle4rec::eval::PreferenceTable,
)> {
    let (pa, ma) = load_checkpoint::<T>(a)?;
    let (pb, mb) = load_checkpoint::<T>(b)?;
    let arch_a = Arch::<T>::new(&ma.config.model)?;
    let arch_b = Arch::<T>::new(&mb.config.model)?;
    analyze_preferences(
        &arch_a,
        &pa,
        inference_side(&ma.config.train),
        &arch_b,
        &pb,
        inference_side(&mb.config.train),
        split,
        k,
    )
}

pub fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let [ca, cb] = a.checkpoint.as_slice() else {
        return Err(CliError::Usage(format!(
            "analyze needs exactly two --checkpoint flags, got {}",
            a.checkpoint.len()
        )));
    };
    let ma = read_manifest(ca)?;
    let mb = read_manifest(cb)?;
    if ma.num_items != mb.num_items {
        return Err(CliError::Run(Error::Checkpoint(
            "the two checkpoints were trained on different item sets".into(),
        )));
    }
    let split = checkpoint_split(&ma, a.input.as_deref())?;
    let k = a.top_k.unwrap_or(ma.config.eval.top_k);
    let (report, table) = if ma.dtype == "f32" && mb.dtype == "f32" {
        analyze_as::<f32>(ca, cb, &split, k)?
    } else {
        analyze_as::<f64>(ca, cb, &split, k)?
    };
    create_dir(&a.out)?;
    write(&a.out.join("prefdist.csv"), table.to_csv(&split))?;
    write(&a.out.join("preference.json"), to_json(&report)?)?;
    println!(
        "{} users, top-{}: KL(a) {:.4}  KL(b) {:.4}  improvement {}",
        report.users, report.top_k, report.kl_a, report.kl_b, report.relative_improvement_pct
    );
    Ok(())
}

#[derive(Serialize)]
struct SynthReport<'a> {
    config: &'a SyntheticConfig,
    trajectories: &'a [Vec<usize>],
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        num_users: a.users,
        num_items: a.items,
        num_categories: a.categories,
        drift_rate: a.drift_rate,
        seq_len_range: (a.min_len, a.max_len),
        seed: a.seed,
        focus: a.focus,
    };
    let s = generate_synthetic_drift(&cfg)?;
    create_dir(&a.out)?;
    s.dataset.save(a.out.join(DATASET_FILE))?;
    let report = SynthReport {
        config: &s.config,
        trajectories: &s.trajectories,
    };
    write(&a.out.join("synthetic.json"), to_json(&report)?)?;
    print_stats(&s.dataset.stats());
    Ok(())
}
