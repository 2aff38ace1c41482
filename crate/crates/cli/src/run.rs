use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use cellbranch::config::{Model, RunConfig, Traversal};
use cellbranch::lineage::{hitting_time, simulate_path, HittingTime};
use cellbranch::offspring::classify_regime;
use cellbranch::oracle::{
    build_kernel_with, hitting_tail, propagate, renewal_limit, renewal_sequence, stationary_solve, KernelOptions,
};
use cellbranch::rng::map_replicates;
use cellbranch::stats::{tv_distance, EmpiricalMeasure};
use cellbranch::suites::{self, DEFAULT_SEED};
use cellbranch::tree::{
    simulate_tree_bfs, simulate_tree_dfs, write_ledger_csv, write_ledger_csv_header, GenerationLedger,
};
use cellbranch::Error;
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

const DEFAULT_OUT: &str = "cellbranch-out";

pub struct Options {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

struct Loaded {
    config: RunConfig,
    model: Model,
    hash: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
        path: path.display().to_string(),
        source,
    })?;
    let config = RunConfig::from_json(&text)?;
    let model = config.model.build()?;
    Ok(Loaded {
        config,
        model,
        hash: sha256_hex(text.as_bytes()),
    })
}

/// Output directory plus the list of files written so far.
struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
    started: Instant,
}

impl Artifacts {
    fn open(opts: &Options, config: Option<&RunConfig>) -> Result<Self, CliError> {
        let dir = opts
            .out
            .clone()
            .or_else(|| config.and_then(|c| c.output.dir.clone()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn finish(mut self, command: &str, config_hash: &str, seed: u64) -> Result<(), CliError> {
        let manifest = json!({
            "command": command,
            "config_sha256": config_hash,
            "seed": seed,
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": cellbranch::VERSION,
            "wall_time_secs": self.started.elapsed().as_secs_f64(),
            "files": self.files,
        });
        self.json("manifest.json", &manifest)?;
        info!("wrote {} files to {}", self.files.len(), self.dir.display());
        Ok(())
    }
}

fn seed_of(opts: &Options, config: &RunConfig) -> u64 {
    opts.seed.unwrap_or(config.seed)
}

fn regime_value(model: &Model) -> Value {
    match classify_regime(&model.env, &model.imm) {
        Ok(r) => json!({ "report": r, "ergodic": r.is_ergodic() }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn classify(opts: &Options, config: &Path) -> Result<(), CliError> {
    let loaded = load(config)?;
    let report = classify_regime(&loaded.model.env, &loaded.model.imm)?;
    let value = json!({
        "report": report,
        "ergodic": report.is_ergodic(),
        "immigration_mode": loaded.model.imm.mode(),
    });
    println!("{}", serde_json::to_string_pretty(&value)?);
    let mut out = Artifacts::open(opts, Some(&loaded.config))?;
    out.json("classify.json", &value)?;
    out.finish("classify", &loaded.hash, seed_of(opts, &loaded.config))
}

pub fn lineage(opts: &Options, config: &Path) -> Result<(), CliError> {
    let loaded = load(config)?;
    let seed = seed_of(opts, &loaded.config);
    let exp = &loaded.config.experiment;
    let Model { env, imm, k0 } = &loaded.model;
    let n = exp.n as usize;
    let paths = map_replicates(seed, exp.replicates, |_, rng| simulate_path(*k0, n, env, imm, rng));
    let returns = map_replicates(seed.wrapping_add(1), exp.replicates, |_, rng| {
        hitting_time(*k0, env, imm, rng, exp.cap)
    });

    let mut out = Artifacts::open(opts, Some(&loaded.config))?;
    let mut w = out.create("lineage.csv")?;
    writeln!(w, "run_id,n,state")?;
    for (run, path) in paths.iter().enumerate() {
        for (i, z) in path.states.iter().enumerate() {
            writeln!(w, "{run},{i},{z}")?;
        }
    }
    w.flush()?;

    let mut w = out.create("return_times.csv")?;
    writeln!(w, "run_id,t0")?;
    for (run, t) in returns.iter().enumerate() {
        match t {
            HittingTime::Hit(t) => writeln!(w, "{run},{t}")?,
            HittingTime::Capped => writeln!(w, "{run},")?,
        }
    }
    w.flush()?;

    let last = EmpiricalMeasure::from_samples(paths.iter().map(|p| p.last()));
    let hits: Vec<u64> = returns
        .iter()
        .filter_map(|t| match t {
            HittingTime::Hit(t) => Some(*t),
            HittingTime::Capped => None,
        })
        .collect();
    let summary = json!({
        "n": n,
        "replicates": exp.replicates,
        "k0": k0,
        "regime": regime_value(&loaded.model),
        "final_mean": last.mean(),
        "final_law": last.iter().collect::<Vec<_>>(),
        "saturated_paths": paths.iter().filter(|p| p.saturated).count(),
        "return_time_cap": exp.cap,
        "return_time_mean": if hits.is_empty() { None } else { Some(hits.iter().sum::<u64>() as f64 / hits.len() as f64) },
        "return_times_capped": returns.len() - hits.len(),
    });
    out.json("summary.json", &summary)?;
    out.finish("lineage", &loaded.hash, seed)
}

pub fn tree(opts: &Options, config: &Path, k0_override: Option<u64>) -> Result<(), CliError> {
    let loaded = load(config)?;
    let seed = seed_of(opts, &loaded.config);
    let exp = &loaded.config.experiment;
    let k0 = k0_override.unwrap_or(loaded.model.k0);
    let Model { env, imm, .. } = &loaded.model;
    if exp.traversal == Traversal::Bfs && exp.n > exp.max_depth {
        return Err(Error::DepthTooLarge {
            requested: exp.n,
            max: exp.max_depth,
        }
        .into());
    }
    let runs: Vec<Vec<GenerationLedger>> = map_replicates(seed, exp.replicates, |_, rng| match exp.traversal {
        Traversal::Bfs => simulate_tree_bfs(k0, exp.n, env, imm, rng),
        Traversal::Dfs => {
            let mut acc = EmpiricalMeasure::new();
            simulate_tree_dfs(k0, exp.n, env, imm, rng, &mut acc).map(|l| vec![l])
        }
    })
    .into_iter()
    .collect::<Result<_, _>>()?;

    let mut out = Artifacts::open(opts, Some(&loaded.config))?;
    let mut w = out.create("ledgers.csv")?;
    write_ledger_csv_header(&mut w)?;
    for (run, ledgers) in runs.iter().enumerate() {
        write_ledger_csv(&mut w, run as u64, ledgers)?;
    }
    w.flush()?;

    let generations: Vec<Value> = (0..runs[0].len())
        .map(|g| {
            let at: Vec<&GenerationLedger> = runs.iter().map(|r| &r[g]).collect();
            let count = at.len() as f64;
            json!({
                "n": at[0].n,
                "mean_infected_fraction": at.iter().map(|l| l.infected_fraction()).sum::<f64>() / count,
                "mean_parasites": at.iter().map(|l| l.parasites_total as f64).sum::<f64>() / count,
                "mean_clean_fraction": at.iter().map(|l| l.fraction(0)).sum::<f64>() / count,
            })
        })
        .collect();
    let summary = json!({
        "traversal": exp.traversal,
        "replicates": exp.replicates,
        "k0": k0,
        "regime": regime_value(&loaded.model),
        "generations": generations,
        "saturated_runs": runs.iter().filter(|r| r.iter().any(|l| l.saturated)).count(),
    });
    out.json("summary.json", &summary)?;
    out.finish("tree", &loaded.hash, seed)
}

pub fn oracle(opts: &Options, config: &Path, write_kernel: bool) -> Result<(), CliError> {
    let loaded = load(config)?;
    let seed = seed_of(opts, &loaded.config);
    let exp = &loaded.config.experiment;
    let Model { env, imm, k0 } = &loaded.model;
    // a degenerate marginal makes the log-mean undefined but the chain only
    // more contracting, so only a successful non-ergodic report skips the
    // stationary law
    let transient = matches!(classify_regime(env, imm), Ok(r) if !r.is_ergodic());
    let kernel = build_kernel_with(
        env,
        imm,
        &KernelOptions {
            truncation: exp.truncation,
            overflow_budget: if transient { None } else { exp.overflow_budget },
        },
    )?;
    if *k0 as usize > exp.truncation {
        return Err(Error::InvalidArgument(format!("k0 = {k0} above truncation {}", exp.truncation)).into());
    }
    let n = exp.n as usize;
    let mut out = Artifacts::open(opts, Some(&loaded.config))?;
    if write_kernel {
        let mut w = out.create("kernel.csv")?;
        kernel.write_csv(&mut w)?;
        w.flush()?;
    }
    let law = propagate(&kernel, *k0 as usize, n);
    let mut w = out.create("pmf.csv")?;
    law.write_csv(&mut w)?;
    w.flush()?;

    let u = renewal_sequence(&kernel, n);
    let mut w = out.create("renewal.csv")?;
    writeln!(w, "n,u")?;
    for (i, v) in u.iter().enumerate() {
        writeln!(w, "{i},{v:e}")?;
    }
    w.flush()?;

    let tail = hitting_tail(&kernel, *k0 as usize, n);
    let mut w = out.create("hitting_tail.csv")?;
    writeln!(w, "n,tail")?;
    for (i, v) in tail.iter().enumerate() {
        writeln!(w, "{i},{v:e}")?;
    }
    w.flush()?;

    let mut summary = json!({
        "n": n,
        "k0": k0,
        "truncation": exp.truncation,
        "regime": regime_value(&loaded.model),
        "max_row_overflow": kernel.max_row_overflow(),
        "heavy_tail_truncated": kernel.heavy_tail_truncated(),
        "law_overflow": law.overflow,
    });
    if !transient {
        let limit = renewal_limit(&kernel, exp.cap as usize)?;
        let stationary = stationary_solve(&kernel)?;
        let mut w = out.create("stationary.csv")?;
        writeln!(w, "k,power_iteration,excursion")?;
        for (k, p) in stationary.power_iteration.probs.iter().enumerate() {
            writeln!(w, "{k},{p:e},{:e}", stationary.excursion.probs[k])?;
        }
        w.flush()?;
        summary["u_infinity"] = json!(limit.u_infinity);
        summary["mean_return_time"] = json!(limit.mean_return_time);
        summary["renewal_remainder_bound"] = json!(limit.remainder_bound);
        summary["stationary_iterations"] = json!(stationary.iterations);
        summary["stationary_method_tv"] = json!(tv_distance(&stationary.power_iteration, &stationary.excursion));
    } else {
        warn!("model is not ergodic; skipping the stationary law");
    }
    out.json("summary.json", &summary)?;
    out.finish("oracle", &loaded.hash, seed)
}

pub fn verify(opts: &Options, suite: &str, config: Option<&Path>) -> Result<(), CliError> {
    let loaded = config.map(load).transpose()?;
    let seed = opts
        .seed
        .or(loaded.as_ref().map(|l| l.config.seed))
        .unwrap_or(DEFAULT_SEED);
    if !suites::SUITES.contains(&suite) {
        return Err(Error::UnknownSuite(suite.to_string()).into());
    }
    let reports = suites::run_suite(suite, seed)?;
    for r in &reports {
        println!("{r}");
    }
    let mut out = Artifacts::open(opts, loaded.as_ref().map(|l| &l.config))?;
    out.json("verify.json", &json!({ "suite": suite, "seed": seed, "criteria": reports }))?;
    let hash = loaded.map_or_else(|| sha256_hex(suite.as_bytes()), |l| l.hash);
    out.finish("verify", &hash, seed)?;
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::CriteriaFailed {
            failed,
            total: reports.len(),
        });
    }
    Ok(())
}
