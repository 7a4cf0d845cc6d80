use std::path::PathBuf;

use chomp_sdr::scenario::load_scenario;
use chomp_sdr::simgen::{run_replications_with, ResultTable};
use clap::Args;

use crate::error::CliError;

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario file (JSON).
    pub config: PathBuf,
    /// Output CSV; overrides the scenario's `output` key (default `results.csv`).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Worker threads for replications; defaults to all cores.
    #[arg(long, env = "SDR_THREADS")]
    pub threads: Option<usize>,
    /// Override the scenario's replication count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the scenario's base seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(a: &SimulateArgs) -> Result<Vec<PathBuf>, CliError> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", a.config.display())))?;
    let (mut scenario, cfg) =
        load_scenario(&text).map_err(|e| CliError::Config(format!("{}: {e}", a.config.display())))?;
    if let Some(r) = a.reps {
        scenario.reps = r;
    }
    if let Some(s) = a.seed {
        scenario.seed = s;
    }
    scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let out = a
        .output
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results.csv"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }

    let mut flush_error = None;
    let total = scenario.reps;
    let result = run_replications_with(&scenario, a.threads, |records| {
        // partial tables survive an interrupted run
        if records.len() < total {
            if let Err(e) = ResultTable::from_records(&scenario, records).save(&out) {
                flush_error = Some(e);
            }
        }
        eprintln!("{}/{} replications", records.len(), total);
    })?;
    if let Some(e) = flush_error {
        return Err(e.into());
    }
    result.table.save(&out)?;
    let failed = result.records.iter().flat_map(|r| &r.fits).filter(|f| f.failure.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} estimator fits failed; see the 'failed' rows");
    }
    Ok(vec![out.clone(), chomp_sdr::simgen::meta_path(&out)])
}
