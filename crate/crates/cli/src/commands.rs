use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use flowsieve::classify::{evaluate, split, Dataset, ForestConfig, ForestModel, DEFAULT_TRAIN_FRAC};
use flowsieve::cluster::{write_assignments, write_cluster_report, Algorithm, Linkage, DEFAULT_K};
use flowsieve::dpi::Blocklist;
use flowsieve::experiment::{compare, CompareConfig};
use flowsieve::features::write_feature_table;
use flowsieve::ingest::{
    apply_tags, assemble_flows, parse_pcap, read_flow_table, write_flow_table, CaptureOptions, TagMap,
    DEFAULT_IDLE_TIMEOUT_S, DEFAULT_PREFIX_CAP,
};
use flowsieve::select::{clean, parse_rules, CleanConfig, SelectionPolicy};
use flowsieve::synth::{generate, read_roles, write_roles, ScenarioSpec};

use crate::config::ConfigFile;
use crate::{CleanArgs, CleanOpts, Cli, Command, CompareArgs, EvalArgs, ForestOpts, IngestArgs, SynthArgs, TrainArgs};

const DEFAULT_SEED: u64 = 42;

/// 2 for I/O failures anywhere in the chain, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|c| {
        c.downcast_ref::<std::io::Error>().is_some()
            || c.downcast_ref::<flowsieve::Error>().is_some_and(flowsieve::Error::is_io)
    });
    if io {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = cfg.pick(cli.threads, "threads")? {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
    }
    match cli.command {
        Command::Synth(a) => synth(&cfg, a),
        Command::Ingest(a) => ingest(&cfg, a),
        Command::Clean(a) => clean_cmd(&cfg, a),
        Command::Train(a) => train(&cfg, a),
        Command::Eval(a) => eval(&cfg, a),
        Command::Compare(a) => compare_cmd(&cfg, a),
    }
}

fn out_dir(cfg: &ConfigFile, flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = cfg.or(flag, "out", PathBuf::from("."))?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn required(cfg: &ConfigFile, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
    cfg.pick(flag, key)?.with_context(|| format!("--{} is required", key.replace('_', "-")))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("writing {}", path.display()))?))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).with_context(|| format!("writing {}", path.display()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_flows(path: &Path) -> Result<Vec<flowsieve::FlowRecord>> {
    read_flow_table(path).with_context(|| format!("reading flow table {}", path.display()))
}

fn read_to_string(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))
}

fn scenario_spec(cfg: &ConfigFile, path: Option<PathBuf>, seed: Option<u64>) -> Result<ScenarioSpec> {
    let mut spec = match cfg.pick(path, "scenario")? {
        Some(p) => ScenarioSpec::parse(&read_to_string(&p, "scenario")?)
            .with_context(|| format!("in scenario {}", p.display()))?,
        None => ScenarioSpec::five_apps(DEFAULT_SEED),
    };
    if let Some(seed) = cfg.pick(seed, "seed")? {
        spec.seed = seed;
    }
    Ok(spec)
}

fn synth(cfg: &ConfigFile, a: SynthArgs) -> Result<()> {
    let spec = scenario_spec(cfg, a.scenario, a.seed)?;
    let dir = out_dir(cfg, a.out)?;
    let s = generate(&spec)?;
    write_flow_table(&s.flows, dir.join("flows.csv")).context("writing flows.csv")?;
    write_roles(&s, create(&dir.join("roles.csv"))?)?;
    write_text(&dir.join("scenario.txt"), &spec.to_text())?;
    eprintln!("synth: {} flows across {} apps -> {}", s.flows.len(), spec.apps.len(), dir.display());
    Ok(())
}

fn ingest(cfg: &ConfigFile, a: IngestArgs) -> Result<()> {
    let idle = cfg.or(a.idle_timeout, "idle_timeout", DEFAULT_IDLE_TIMEOUT_S)?;
    if !(idle.is_finite() && idle > 0.0) {
        bail!("--idle-timeout must be positive, got {idle}");
    }
    let opts = CaptureOptions { prefix_cap: cfg.or(a.prefix_cap, "prefix_cap", DEFAULT_PREFIX_CAP)? };
    let mut packets = Vec::new();
    for path in &a.pcap {
        let bytes = fs::read(path).with_context(|| format!("reading capture {}", path.display()))?;
        let cap = parse_pcap(&bytes, opts).with_context(|| format!("in capture {}", path.display()))?;
        eprintln!(
            "ingest: {}: {} packets, {} skipped, {} truncated",
            path.display(),
            cap.packets.len(),
            cap.skipped,
            cap.truncated
        );
        packets.extend(cap.packets);
    }
    let mut asm = assemble_flows(&packets, idle);
    if let Some(p) = cfg.pick(a.tags, "tags")? {
        let tags =
            TagMap::parse(&read_to_string(&p, "tag map")?).with_context(|| format!("in tag map {}", p.display()))?;
        apply_tags(&mut asm.flows, &tags, &asm.origins);
    }
    let dir = out_dir(cfg, a.out)?;
    write_flow_table(&asm.flows, dir.join("flows.csv")).context("writing flows.csv")?;
    let labeled = asm.flows.iter().filter(|f| f.app_label.is_some()).count();
    eprintln!("ingest: {} flows ({labeled} labeled) -> {}", asm.flows.len(), dir.display());
    Ok(())
}

fn parse_algorithms(text: &str) -> Result<Vec<Algorithm>> {
    let algos = text
        .split(',')
        .map(|s| s.trim().parse::<Algorithm>().map_err(|e| anyhow::anyhow!("--algorithm: {e}")))
        .collect::<Result<Vec<_>>>()?;
    if algos.is_empty() {
        bail!("--algorithm needs at least one value");
    }
    Ok(algos)
}

fn clean_config(cfg: &ConfigFile, o: &CleanOpts) -> Result<CleanConfig> {
    let policy = match cfg.pick(o.policy.clone(), "policy")? {
        Some(p) => parse_rules(&read_to_string(&p, "policy")?).with_context(|| format!("in policy {}", p.display()))?,
        None => SelectionPolicy::default(),
    };
    let blocklist = match cfg.pick(o.blocklist.clone(), "blocklist")? {
        Some(p) => Blocklist::parse(&read_to_string(&p, "blocklist")?)
            .with_context(|| format!("in blocklist {}", p.display()))?,
        None => Blocklist::shipped(),
    };
    let linkage: Linkage = match cfg.pick(o.linkage.clone(), "linkage")? {
        Some(s) => s.parse().map_err(|e| anyhow::anyhow!("--linkage: {e}"))?,
        None => Linkage::default(),
    };
    let k = cfg.or(o.k, "k", DEFAULT_K)?;
    if k == 0 {
        bail!("--k must be at least 1");
    }
    Ok(CleanConfig {
        blocklist,
        policy,
        linkage,
        k,
        seed: cfg.or(o.seed, "seed", DEFAULT_SEED)?,
        skip_dpi: cfg.switch(o.skip_dpi, "skip_dpi")?,
        pooled: cfg.switch(o.pooled, "pooled")?,
        ..CleanConfig::default()
    })
}

fn forest_config(cfg: &ConfigFile, o: &ForestOpts, seed: u64) -> Result<(f64, ForestConfig)> {
    let frac = cfg.or(o.train_frac, "train_frac", DEFAULT_TRAIN_FRAC)?;
    if !(frac > 0.0 && frac < 1.0) {
        bail!("--train-frac must lie strictly between 0 and 1, got {frac}");
    }
    let d = ForestConfig::default();
    let forest = ForestConfig {
        n_trees: cfg.or(o.trees, "trees", d.n_trees)?,
        max_depth: cfg.or(o.max_depth, "max_depth", d.max_depth)?,
        seed,
        ..d
    };
    if forest.n_trees == 0 {
        bail!("--trees must be at least 1");
    }
    Ok((frac, forest))
}

fn clean_cmd(cfg: &ConfigFile, a: CleanArgs) -> Result<()> {
    let flows_path = required(cfg, a.flows, "flows")?;
    let mut conf = clean_config(cfg, &a.opts)?;
    if let Some(s) = cfg.pick(a.algorithm, "algorithm")? {
        let algos = parse_algorithms(&s)?;
        if algos.len() != 1 {
            bail!("clean takes a single --algorithm");
        }
        conf.algorithm = algos[0];
    }
    let flows = load_flows(&flows_path)?;
    let dir = out_dir(cfg, a.opts.out)?;
    let out = clean(flows, &conf)?;

    write_flow_table(&out.cleaned, dir.join("cleaned.csv")).context("writing cleaned.csv")?;
    write_json(&dir.join("clean_report.json"), &out.report)?;
    let mut features = create(&dir.join("features.csv"))?;
    write_feature_table(&out.cleaned, &mut features)?;
    features.flush()?;
    if cfg.switch(a.opts.emit_csv, "emit_csv")? {
        let cdir = dir.join("clusters");
        fs::create_dir_all(&cdir).with_context(|| format!("creating {}", cdir.display()))?;
        for g in &out.clusters {
            let stem = file_stem(&g.app_label);
            write_cluster_report(&g.model, create(&cdir.join(format!("{stem}_clusters.csv")))?)?;
            write_assignments(&g.model, &g.flow_ids, create(&cdir.join(format!("{stem}_assignments.csv")))?)?;
        }
    }
    let r = &out.report;
    eprintln!(
        "clean: {} in, {} dpi-discarded, {} kept, {} dropped ({:.1} ms)",
        r.input(),
        r.dpi_discarded(),
        r.flows_kept(),
        r.flows_dropped(),
        r.total_ms
    );
    for app in r.apps.iter().filter(|a| a.skipped.is_some()) {
        eprintln!("clean: skipped {}: {}", app.app_label, app.skipped.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn file_stem(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn train(cfg: &ConfigFile, a: TrainArgs) -> Result<()> {
    let flows = load_flows(&required(cfg, a.flows, "flows")?)?;
    let seed = cfg.or(a.seed, "seed", DEFAULT_SEED)?;
    let (frac, forest) = forest_config(cfg, &a.forest, seed)?;
    let (train_set, test_set) = split(&flows, frac, seed)?;
    let model = ForestModel::fit(&Dataset::from_flows(&train_set)?, forest)?;
    let dir = out_dir(cfg, a.out)?;
    write_flow_table(&train_set, dir.join("train.csv")).context("writing train.csv")?;
    write_flow_table(&test_set, dir.join("test.csv")).context("writing test.csv")?;
    write_json(&dir.join("model.json"), &model)?;
    eprintln!(
        "train: {} train / {} test flows, {} classes, {} trees -> {}",
        train_set.len(),
        test_set.len(),
        model.labels.len(),
        model.trees.len(),
        dir.display()
    );
    Ok(())
}

fn eval(cfg: &ConfigFile, a: EvalArgs) -> Result<()> {
    let model_path = required(cfg, a.model, "model")?;
    let model: ForestModel = serde_json::from_str(&read_to_string(&model_path, "model")?)
        .with_context(|| format!("parsing model {}", model_path.display()))?;
    let test = load_flows(&required(cfg, a.test, "test")?)?;
    let m = evaluate(&model, &test)?;
    let dir = out_dir(cfg, a.out)?;
    write_json(
        &dir.join("metrics.json"),
        &json!({
            "accuracy": m.accuracy,
            "macro_precision": m.macro_precision,
            "macro_recall": m.macro_recall,
            "labels": m.labels,
            "confusion": m.confusion,
            "config": model.config,
        }),
    )?;
    println!(
        "accuracy {:.4}  macro_precision {:.4}  macro_recall {:.4}  ({} flows)",
        m.accuracy,
        m.macro_precision,
        m.macro_recall,
        test.len()
    );
    Ok(())
}

fn compare_cmd(cfg: &ConfigFile, a: CompareArgs) -> Result<()> {
    let scenario = match cfg.pick(a.flows, "flows")? {
        Some(flows_path) => {
            let roles = required(cfg, a.roles, "roles")?;
            let file = File::open(&roles).with_context(|| format!("reading roles {}", roles.display()))?;
            read_roles(load_flows(&flows_path)?, file).with_context(|| format!("in roles {}", roles.display()))?
        }
        None => generate(&scenario_spec(cfg, a.scenario, a.opts.seed)?)?,
    };
    let clean_cfg = clean_config(cfg, &a.opts)?;
    let algorithms = parse_algorithms(&cfg.or(a.algorithm, "algorithm", "kmeans,hier".to_string())?)?;
    let (train_frac, forest) = forest_config(cfg, &a.forest, clean_cfg.seed)?;
    let conf = CompareConfig { clean: clean_cfg, algorithms, train_frac, forest };

    let (report, timing) = compare(&scenario, &conf)?;
    let dir = out_dir(cfg, a.opts.out)?;
    write_json(&dir.join("compare.json"), &report)?;
    write_text(&dir.join("compare.txt"), &report.to_table())?;
    write_json(&dir.join("timing.json"), &timing)?;
    write_text(&dir.join("timing.txt"), &timing.to_table())?;
    if cfg.switch(a.opts.emit_csv, "emit_csv")? {
        report.write_csv(create(&dir.join("compare.csv"))?)?;
        timing.write_csv(create(&dir.join("timing.csv"))?)?;
    }
    print!("{}\n{}", report.to_table(), timing.to_table());
    Ok(())
}
