mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qnoc::report::{write_results, write_timeseries};
use qnoc::{
    cdg_acyclic, run, sweep, AllTurns, Census, MeshConfig, Network, PolicyKind, SweepRow, VcClass,
};

use config::{ConfigError, ConfigFile};

const EXIT_CONFIG: u8 = 2;
const EXIT_DRAIN_TIMEOUT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "qnoc",
    version,
    about = "Cycle-level 2D-mesh NoC simulator with learned routing"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Output {
    /// Output file; defaults to a generated name inside --out-dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for generated output names.
    #[arg(long, env = "QNOC_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

impl Output {
    fn resolve(&self, default_name: &str) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| self.out_dir.join(default_name))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write a one-row results CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides [run] seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides [policy] kind.
        #[arg(long)]
        policy: Option<PolicyKind>,
        /// Also write the windowed latency time series here.
        #[arg(long)]
        timeseries: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Run every (policy, rate, seed) combination into one CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated rates, or `start:stop:step`.
        #[arg(long)]
        rates: String,
        /// Comma-separated policy names; defaults to all six.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<PolicyKind>,
        /// Comma-separated seeds; defaults to [run] seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Check that both VC classes give an acyclic channel dependency graph.
    VerifyTurns {
        #[arg(long, default_value_t = 8)]
        max_width: usize,
        #[arg(long, default_value_t = 8)]
        max_height: usize,
    },
    /// Run a config and write every router's Q-table as CSV.
    DumpQtable {
        #[arg(long)]
        config: PathBuf,
        /// Only this router.
        #[arg(long)]
        router: Option<usize>,
        /// Cycles to simulate before dumping; defaults to warmup + measure.
        #[arg(long)]
        cycles: Option<u64>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct DrainTimeout(Census);

impl std::fmt::Display for DrainTimeout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = &self.0;
        write!(
            f,
            "drain timed out at cycle {}: {} queued at sources, {} in network, {} busy VCs, {} flits on links, {} learning packets queued, oldest entry {:?}",
            c.cycle, c.queued_at_source, c.in_network, c.busy_vcs, c.flits_on_links, c.learning_queued, c.oldest_entry
        )
    }
}

impl std::error::Error for DrainTimeout {}

fn provenance(cfg: &ConfigFile) -> Vec<String> {
    vec![
        format!("qnoc {}", env!("CARGO_PKG_VERSION")),
        format!("seed = {}", cfg.run.seed),
        cfg.echo(),
    ]
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Parses `0.01,0.02` or `start:stop:step` (inclusive of stop).
fn parse_rates(arg: &str) -> Result<Vec<f64>> {
    let round = |x: f64| (x * 1e9).round() / 1e9;
    if let [a, b, s] = arg.split(':').collect::<Vec<_>>()[..] {
        let (a, b, s): (f64, f64, f64) = (a.trim().parse()?, b.trim().parse()?, s.trim().parse()?);
        if s <= 0.0 || b < a {
            bail!("rate range {arg}: need start <= stop and step > 0");
        }
        let n = ((b - a) / s + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| round(a + i as f64 * s)).collect());
    }
    arg.split(',')
        .map(|r| {
            r.trim()
                .parse::<f64>()
                .with_context(|| format!("bad rate {r:?}"))
        })
        .collect()
}

fn load(path: &Path) -> Result<ConfigFile> {
    Ok(ConfigFile::load(path)?)
}

fn cmd_run(
    config: &Path,
    seed: Option<u64>,
    policy: Option<PolicyKind>,
    timeseries: Option<&Path>,
    output: &Output,
) -> Result<()> {
    let mut file = load(config)?;
    if let Some(s) = seed {
        file.run.seed = s;
    }
    if let Some(p) = policy {
        file.policy.kind = p;
    }
    let sim = file.to_sim()?;
    let stats = run(&sim)?;
    let pattern = sim.traffic.label();
    let prov = provenance(&file);
    let path = output.resolve(&format!(
        "run_{}_{}_seed{}.csv",
        sim.policy.kind, pattern, sim.seed
    ));
    let census = stats.census;
    let rows = [SweepRow {
        policy: sim.policy.kind,
        rate: sim.traffic.injection_rate,
        seed: sim.seed,
        stats,
    }];
    let mut w = create(&path)?;
    write_results(&mut w, &prov, &pattern, &rows)?;
    w.flush()?;
    if let Some(ts) = timeseries {
        let mut w = create(ts)?;
        write_timeseries(&mut w, &prov, &rows[0].stats.windows)?;
        w.flush()?;
    }
    let s = &rows[0].stats;
    eprintln!(
        "{}: {} delivered, mean latency {}, throughput {:.4}",
        path.display(),
        s.delivered,
        s.mean_latency().map_or("-".into(), |l| format!("{l:.2}")),
        s.throughput
    );
    if let Some(c) = census {
        return Err(DrainTimeout(c).into());
    }
    Ok(())
}

fn cmd_sweep(
    config: &Path,
    rates: &str,
    policies: &[PolicyKind],
    seeds: &[u64],
    output: &Output,
) -> Result<()> {
    let file = load(config)?;
    let sim = file.to_sim()?;
    let rates = parse_rates(rates).map_err(|e| ConfigError(format!("--rates: {e}")))?;
    let policies = if policies.is_empty() {
        &PolicyKind::ALL[..]
    } else {
        policies
    };
    let default_seed = [sim.seed];
    let seeds = if seeds.is_empty() {
        &default_seed[..]
    } else {
        seeds
    };
    let rows = sweep(&sim, policies, &rates, seeds)?;
    let pattern = sim.traffic.label();
    let path = output.resolve(&format!("sweep_{pattern}.csv"));
    let mut w = create(&path)?;
    write_results(&mut w, &provenance(&file), &pattern, &rows)?;
    w.flush()?;
    let flagged = rows.iter().filter(|r| r.stats.saturated).count();
    eprintln!(
        "{}: {} rows, {flagged} saturated",
        path.display(),
        rows.len()
    );
    Ok(())
}

fn cmd_verify_turns(max_w: usize, max_h: usize) -> Result<()> {
    if max_w < 2 || max_h < 2 {
        return Err(ConfigError("meshes need at least 2x2".into()).into());
    }
    let mut failures = 0;
    for w in 2..=max_w {
        for h in 2..=max_h {
            let m = MeshConfig::new(w, h)?;
            let a = cdg_acyclic(&VcClass::A, &m);
            let b = cdg_acyclic(&VcClass::B, &m);
            let control = cdg_acyclic(&AllTurns, &m);
            let ok = a && b && !control;
            failures += usize::from(!ok);
            println!(
                "{w}x{h}: class A {} class B {} unrestricted {}{}",
                if a { "acyclic" } else { "CYCLIC" },
                if b { "acyclic" } else { "CYCLIC" },
                if control { "acyclic" } else { "cyclic" },
                if ok { "" } else { "  <- unexpected" }
            );
        }
    }
    if failures > 0 {
        bail!("{failures} mesh size(s) failed the turn-model check");
    }
    println!(
        "both classes deadlock-free on all {} mesh sizes",
        (max_w - 1) * (max_h - 1)
    );
    Ok(())
}

fn cmd_dump_qtable(
    config: &Path,
    router: Option<usize>,
    cycles: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let file = load(config)?;
    let sim = file.to_sim()?;
    if !sim.policy.kind.is_learning() {
        return Err(ConfigError(format!("policy {} keeps no Q-table", sim.policy.kind)).into());
    }
    if let Some(r) = router.filter(|&r| r >= sim.mesh.nodes()) {
        return Err(ConfigError(format!(
            "router {r} outside a {}-node mesh",
            sim.mesh.nodes()
        ))
        .into());
    }
    let mut net = Network::new(sim.mesh, sim.router, sim.policy.clone(), sim.seed)?;
    let cycles = cycles.unwrap_or(sim.warmup_cycles + sim.measure_cycles);
    let mut gen = qnoc::engine::Generator::new(sim.seed, sim.mesh.nodes());
    for _ in 0..cycles {
        gen.generate(&mut net, &sim.traffic)?;
        net.step();
        net.take_deliveries();
    }
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    qnoc::report::write_provenance(&mut w, &[format!("cycle = {cycles}"), file.echo()])?;
    let mut header = true;
    for r in net
        .routers()
        .iter()
        .filter(|r| router.is_none_or(|id| id == r.id()))
    {
        r.qtable()
            .expect("learning policy")
            .write_csv(&mut w, header)?;
        header = false;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Command::Run {
            config,
            seed,
            policy,
            timeseries,
            output,
        } => cmd_run(config, *seed, *policy, timeseries.as_deref(), output),
        Command::Sweep {
            config,
            rates,
            policies,
            seeds,
            output,
        } => cmd_sweep(config, rates, policies, seeds, output),
        Command::VerifyTurns {
            max_width,
            max_height,
        } => cmd_verify_turns(*max_width, *max_height),
        Command::DumpQtable {
            config,
            router,
            cycles,
            out,
        } => cmd_dump_qtable(config, *router, *cycles, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<ConfigError>() => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) if e.is::<DrainTimeout>() => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DRAIN_TIMEOUT)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
