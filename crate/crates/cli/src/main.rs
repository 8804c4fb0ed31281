use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use mialab::config::{Epsilon, ExperimentConfig, Profile};
use mialab::dp;
use mialab::experiments::{self, report};
use mialab::Error;

#[derive(Parser)]
#[command(name = "mialab", version, about = "Membership inference against DP models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// `paper` or `desk`; overrides the config's profile.
        #[arg(long)]
        profile: Option<String>,
    },
    /// Print the three advantage bounds as CSV.
    Bounds {
        /// Comma-separated ε values; `inf` allowed.
        #[arg(long, default_value = "0.01,0.1,1,10,100,inf")]
        epsilons: String,
        #[arg(long, default_value_t = dp::DEFAULT_DELTA)]
        delta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ε spent by the subsampled Gaussian, or σ for a target ε.
    Account {
        #[arg(long)]
        q: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = dp::DEFAULT_DELTA)]
        delta: f64,
        /// Noise multiplier to account.
        #[arg(long, conflicts_with = "target_epsilon")]
        sigma: Option<f64>,
        /// Calibrate σ for this ε instead.
        #[arg(long)]
        target_epsilon: Option<f64>,
    },
    /// Build the config's pools and write their sizes and member ids.
    Split {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// A failure tagged with the phase it happened in.
struct Failure {
    phase: &'static str,
    error: anyhow::Error,
}

trait Phase<T> {
    fn phase(self, phase: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Phase<T> for Result<T, E> {
    fn phase(self, phase: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            phase,
            error: e.into(),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            jobs,
            profile,
        } => run(&config, &out, seed, jobs, profile.as_deref()),
        Command::Bounds {
            epsilons,
            delta,
            out,
        } => bounds(&epsilons, delta, out.as_deref()),
        Command::Account {
            q,
            steps,
            delta,
            sigma,
            target_epsilon,
        } => account(q, steps, delta, sigma, target_epsilon),
        Command::Split { config, out, seed } => split(&config, &out, seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if let Some(Error::Config(msg)) = f.error.downcast_ref::<Error>() {
                eprintln!("config error: {msg}");
                ExitCode::from(2)
            } else if f.phase == "config" {
                eprintln!("config error: {:#}", f.error);
                ExitCode::from(2)
            } else {
                eprintln!("error [{}]: {:#}", f.phase, f.error);
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>, profile: Option<&str>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(path).phase("config")?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(p) = profile {
        let p = Profile::parse(p)
            .with_context(|| format!("--profile must be `paper` or `desk`, got `{p}`"))
            .phase("config")?;
        cfg = cfg.with_profile(p);
    }
    Ok(cfg)
}

fn base_dir(config: &Path) -> PathBuf {
    config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Artifact {
    path: String,
    sha256: String,
    bytes: usize,
}

struct Writer<'a> {
    dir: &'a Path,
    artifacts: Vec<Artifact>,
}

impl Writer<'_> {
    fn write(&mut self, rel: &str, content: &str) -> Result<(), Failure> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))
                .phase("write")?;
        }
        fs::write(&path, content)
            .with_context(|| format!("writing {}", path.display()))
            .phase("write")?;
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            sha256: sha256_hex(content.as_bytes()),
            bytes: content.len(),
        });
        Ok(())
    }
}

fn run(config: &Path, out: &Path, seed: Option<u64>, jobs: usize, profile: Option<&str>) -> Result<(), Failure> {
    let mut timings: Vec<(&str, f64)> = Vec::new();
    let t = Instant::now();
    let cfg = load_config(config, seed, profile)?;
    timings.push(("config", t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let prepared = cfg.prepare(&base_dir(config)).phase("data")?;
    timings.push(("data", t.elapsed().as_secs_f64()));

    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .phase("write")?;
    let mut w = Writer {
        dir: out,
        artifacts: Vec::new(),
    };
    let spec = cfg.campaign_spec(prepared.width, prepared.classes);
    let mut notes = Vec::new();

    let t = Instant::now();
    match cfg.experiment.game() {
        None => {
            let result = experiments::batch_mm_campaign(&spec, &prepared.pools, jobs).phase("campaign")?;
            timings.push(("campaign", t.elapsed().as_secs_f64()));
            let t = Instant::now();
            w.write("results.csv", &report::results_csv(&result).phase("write")?)?;
            w.write("summary.csv", &report::summary_csv(&result).phase("write")?)?;
            for trace in &result.traces {
                let name = format!("traces/{}", report::trace_file_name(trace));
                w.write(&name, &report::trace_csv(trace).phase("write")?)?;
            }
            notes = result.notes;
            notes.push(
                "members and non-members are drawn without replacement from finite pools, \
                 so repetitions share samples and are not independent population draws"
                    .to_string(),
            );
            timings.push(("write", t.elapsed().as_secs_f64()));
        }
        Some(kind) => {
            let records = experiments::play_games(kind, &spec, &prepared.pools, jobs).phase("games")?;
            timings.push(("games", t.elapsed().as_secs_f64()));
            let t = Instant::now();
            w.write("games.csv", &report::games_csv(&records).phase("write")?)?;
            let summary = experiments::summarize_games(&records);
            w.write("summary.csv", &report::game_summary_csv(&summary).phase("write")?)?;
            timings.push(("write", t.elapsed().as_secs_f64()));
        }
    }
    w.write("bounds.csv", &report::bounds_csv(&cfg.epsilons(), cfg.delta).phase("write")?)?;

    let canonical = cfg.canonical_json();
    let manifest = serde_json::json!({
        "config_digest": sha256_hex(canonical.as_bytes()),
        "config": serde_json::from_str::<serde_json::Value>(&canonical).expect("canonical json"),
        "seed": cfg.seed,
        "jobs": jobs,
        "pools": prepared.pools.sizes(),
        "pool_tags": prepared.pools.tags,
        "artifacts": w.artifacts,
        "phase_seconds": timings
            .iter()
            .map(|(k, v)| (k.to_string(), serde_json::json!(v)))
            .collect::<serde_json::Map<_, _>>(),
        "notes": notes,
        "versions": { "mialab": env!("CARGO_PKG_VERSION") },
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(out.join("manifest.json"), text + "\n")
        .context("writing manifest.json")
        .phase("write")?;
    for n in &notes {
        eprintln!("note: {n}");
    }
    println!("wrote {} artifacts to {}", w.artifacts.len() + 1, out.display());
    Ok(())
}

fn parse_epsilons(list: &str) -> anyhow::Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            let s = s.trim();
            let e: Epsilon = serde_json::from_value(serde_json::Value::String(s.to_string()))
                .with_context(|| format!("invalid epsilon `{s}`"))?;
            anyhow::ensure!(e.0 >= 0.0, "epsilon `{s}` is negative");
            Ok(e.0)
        })
        .collect()
}

fn bounds(epsilons: &str, delta: f64, out: Option<&Path>) -> Result<(), Failure> {
    let eps = parse_epsilons(epsilons).phase("config")?;
    if !(0.0..1.0).contains(&delta) {
        return Err(anyhow::anyhow!("--delta must lie in [0, 1)")).phase("config");
    }
    let text = report::bounds_csv(&eps, delta).phase("bounds")?;
    match out {
        Some(p) => fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .phase("write"),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn account(q: f64, steps: usize, delta: f64, sigma: Option<f64>, target: Option<f64>) -> Result<(), Failure> {
    match (sigma, target) {
        (Some(sigma), _) => {
            let c = dp::account(q, sigma, steps, delta).phase("account")?;
            println!("{}", serde_json::json!({ "epsilon": c.epsilon, "order": c.order }));
        }
        (None, Some(eps)) => {
            let sigma = dp::calibrate_sigma(eps, delta, q, steps).phase("account")?;
            let c = dp::account(q, sigma, steps, delta).phase("account")?;
            println!(
                "{}",
                serde_json::json!({ "sigma": sigma, "epsilon": c.epsilon, "order": c.order })
            );
        }
        (None, None) => {
            return Err(anyhow::anyhow!("pass --sigma or --target-epsilon")).phase("config");
        }
    }
    Ok(())
}

fn split(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load_config(config, seed, None)?;
    let prepared = cfg.prepare(&base_dir(config)).phase("data")?;
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .phase("write")?;
    let pools = &prepared.pools;
    let mut sizes = String::from("pool,tag,size,member_pool\n");
    let mut ids = String::from("pool,sample_id,label\n");
    for (k, pool) in pools.pools.iter().enumerate() {
        sizes.push_str(&format!("{k},{},{},{}\n", pools.tags[k], pool.len(), u8::from(k == pools.k_member)));
        for s in pool {
            ids.push_str(&format!("{k},{},{}\n", s.id, s.label));
        }
    }
    let mut w = Writer {
        dir: out,
        artifacts: Vec::new(),
    };
    w.write("pools.csv", &sizes)?;
    w.write("pool_members.csv", &ids)?;
    println!("{} pools: {:?}", pools.pools.len(), pools.sizes());
    Ok(())
}
