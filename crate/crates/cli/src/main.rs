//! `interfactor` command-line driver.
//!
//! Every command reads an optional TOML config, applies `--set` overrides,
//! writes its artifacts into the output directory and finishes with a
//! `manifest.json` listing each artifact with its SHA-256.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use interfactor::config::RunConfig;
use interfactor::genomics::{detect_interactions, overlap_permutation_test};
use interfactor::io::{load_draws, persist_draws, Manifest};
use interfactor::simulate::{evaluate_fit, export_surface, fit, generate, Alignment};
use interfactor::spec::ModelSpec;
use interfactor::summary::posterior_summary;
use interfactor::{standardize_rows, DataMatrix, Error, PosteriorDraws, Result};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "interfactor", version, about = "Sparse factor models with interaction terms")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set mcmc.iters=1000`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[arg(
        long,
        global = true,
        env = "INTERFACTOR_OUTPUT_DIR",
        default_value = "interfactor-out"
    )]
    output_dir: PathBuf,

    /// Run seed; replaces `mcmc.seed` and `simulate.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic saddle data set with planted interactions.
    Simulate,
    /// Fit the configured model; one draws file per chain.
    Fit,
    /// Posterior means, intervals and inclusion probabilities.
    Summarize {
        /// Draws files to pool (default `paths.draws`).
        #[arg(long)]
        draws: Vec<PathBuf>,
    },
    /// Features whose interaction probability exceeds `detect.threshold`.
    Detect {
        #[arg(long)]
        draws: Vec<PathBuf>,
    },
    /// Fit several models to one synthetic data set and score them against the truth.
    Compare,
    /// Permutation test for the overlap of gene lists across data sets.
    TestOverlap,
    /// Interaction surface of one feature over the two factor scores.
    ExportSurface {
        #[arg(long)]
        draws: Vec<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit => "fit",
            Command::Summarize { .. } => "summarize",
            Command::Detect { .. } => "detect",
            Command::Compare => "compare",
            Command::TestOverlap => "test-overlap",
            Command::ExportSurface { .. } => "export-surface",
        }
    }
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Run {
    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(PathBuf::from(name));
        self.out.join(name)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.path(name), text)?;
        Ok(())
    }

    fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn data(&self) -> Result<DataMatrix> {
        let path = self
            .cfg
            .paths
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("paths.data is required".into()))?;
        Ok(standardize_rows(&DataMatrix::load(path)?)?.0)
    }

    fn draws(&self, given: &[PathBuf]) -> Result<PosteriorDraws> {
        let paths: Vec<PathBuf> = if given.is_empty() {
            self.cfg.paths.draws.iter().cloned().collect()
        } else {
            given.to_vec()
        };
        let mut pooled: Option<PosteriorDraws> = None;
        for p in &paths {
            let d = load_draws(p)?;
            match &mut pooled {
                None => pooled = Some(d),
                Some(all) => all.states.extend(d.states),
            }
        }
        pooled.ok_or_else(|| Error::Config("no draws file given (--draws or paths.draws)".into()))
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::InvalidInput(e.to_string()))
}

fn simulate(run: &mut Run) -> Result<()> {
    let (data, truth) = generate(&run.cfg.simulate)?;
    data.save(&run.path("data.csv"))?;
    let ids = data.feature_ids();
    let affected: Vec<AffectedRow> = truth
        .affected_set
        .iter()
        .map(|&i| AffectedRow {
            feature: i,
            feature_id: ids[i].clone(),
        })
        .collect();
    run.write_csv("affected.csv", &affected)?;
    run.write_text("seed_groups.json", &to_json(&truth.seed_groups)?)?;
    info!("{} features, {} affected", data.n_features(), affected.len());
    Ok(())
}

#[derive(Serialize)]
struct AffectedRow {
    feature: usize,
    feature_id: String,
}

fn fit_command(run: &mut Run) -> Result<()> {
    let data = run.data()?;
    let mut model = run.cfg.model.clone();
    if model.seed_groups.is_empty() {
        if let Some(p) = &run.cfg.paths.seed_groups {
            let text = std::fs::read_to_string(p)?;
            model.seed_groups = serde_json::from_str(&text).map_err(|e| Error::Config(format!("seed groups: {e}")))?;
        }
    }
    let spec = model.to_spec(data.n_features())?;
    let chains = run.cfg.mcmc.chains as u64;
    let draws: Vec<PosteriorDraws> = (0..chains)
        .into_par_iter()
        .map(|c| fit(&spec, &data, &run.cfg.mcmc.settings(c)))
        .collect::<Result<_>>()?;
    for (c, d) in draws.iter().enumerate() {
        persist_draws(d, &run.path(&format!("draws_chain{c}.bin")))?;
        if let Some(a) = &d.acceptance {
            info!("chain {c}: acceptance {:.3}, final step {:.4}", a.rate(), a.final_step);
        }
    }
    Ok(())
}

fn summarize(run: &mut Run, draws: &[PathBuf]) -> Result<()> {
    let draws = run.draws(draws)?;
    posterior_summary(&draws)?.save(&run.path("summary.csv"))
}

#[derive(Serialize)]
struct DetectionRow {
    feature: usize,
    feature_id: String,
    probability: f64,
}

fn detect(run: &mut Run, draws: &[PathBuf]) -> Result<()> {
    let draws = run.draws(draws)?;
    let ids: Option<Vec<String>> = match &run.cfg.paths.data {
        Some(p) => Some(DataMatrix::load(p)?.feature_ids().to_vec()),
        None => None,
    };
    let rows: Vec<DetectionRow> = detect_interactions(&draws, run.cfg.detect.threshold)?
        .into_iter()
        .map(|d| DetectionRow {
            feature: d.feature,
            feature_id: ids
                .as_ref()
                .map_or_else(|| format!("f{}", d.feature), |v| v[d.feature].clone()),
            probability: d.probability,
        })
        .collect();
    println!("{} features above {}", rows.len(), run.cfg.detect.threshold);
    run.write_csv("detections.csv", &rows)
}

#[derive(Serialize)]
struct CompareRow {
    label: String,
    aad_lambda: f64,
    aad_alpha: f64,
    aad_interaction: f64,
    true_positives: usize,
    false_positives: usize,
    true_negatives: usize,
    false_negatives: usize,
    accuracy: f64,
    saddle_rate: f64,
    acceptance_rate: Option<f64>,
}

fn compare(run: &mut Run) -> Result<()> {
    let (data, truth) = generate(&run.cfg.simulate)?;
    let m = data.n_features();
    let with_seeds = |s: ModelSpec| {
        s.with_seed_groups(truth.seed_groups.clone())
            .with_seed_constraints()
            .validate(m)
    };
    let mut specs = Vec::new();
    if run.cfg.compare.include_mult {
        specs.push(("mult2".to_string(), with_seeds(ModelSpec::mult_approach2(2))?));
    }
    for &ls in &run.cfg.compare.length_scales {
        let mut s = ModelSpec::gp(2, 1)?;
        s.length_scale = Some(ls);
        specs.push((format!("gp1_ls{ls}"), with_seeds(s)?));
    }
    let settings = run.cfg.mcmc.settings(0);
    let rows: Vec<CompareRow> = specs
        .par_iter()
        .map(|(label, spec)| {
            let draws = fit(spec, &data, &settings)?;
            let r = evaluate_fit(label, &draws, &truth, run.cfg.detect.threshold)?;
            Ok(CompareRow {
                accuracy: r.accuracy(),
                saddle_rate: r.saddle_rate(),
                label: r.label,
                aad_lambda: r.aad_lambda,
                aad_alpha: r.aad_alpha,
                aad_interaction: r.aad_interaction,
                true_positives: r.true_positives,
                false_positives: r.false_positives,
                true_negatives: r.true_negatives,
                false_negatives: r.false_negatives,
                acceptance_rate: r.acceptance_rate,
            })
        })
        .collect::<Result<_>>()?;
    for r in &rows {
        println!(
            "{:<12} AAD(F) {:.4}  accuracy {:.3}  saddle {:.3}",
            r.label, r.aad_interaction, r.accuracy, r.saddle_rate
        );
    }
    run.write_csv("comparison.csv", &rows)
}

fn test_overlap(run: &mut Run) -> Result<()> {
    let result = overlap_permutation_test(&run.cfg.overlap.input(), run.cfg.mcmc.seed)?;
    println!(
        "p-value {} ({} of {} replicates >= {})",
        result.p_value, result.exceedances, result.n_replicates, run.cfg.overlap.observed
    );
    run.write_text("overlap.json", &to_json(&result)?)
}

fn surface(run: &mut Run, draws: &[PathBuf]) -> Result<()> {
    let draws = run.draws(draws)?;
    let feature = run.cfg.surface.feature;
    let m = draws.states[0].n_features();
    if feature >= m {
        return Err(Error::InvalidInput(format!(
            "surface.feature {feature} out of range (m = {m})"
        )));
    }
    let lambda = draws.mean_lambda();
    if lambda.nrows() < 2 {
        return Err(Error::InvalidInput("surface needs two factors".into()));
    }
    let identity = Alignment {
        perm: (0..lambda.nrows()).collect(),
        signs: vec![1.0; lambda.nrows()],
        correlations: vec![1.0; lambda.nrows()],
    };
    let l = identity.apply_rows(&lambda);
    let effect: Vec<f64> = draws.mean_interaction().row(feature).iter().copied().collect();
    let row = |r: usize| l.row(r).iter().copied().collect::<Vec<f64>>();
    let grid = export_surface(&row(0), &row(1), &effect, run.cfg.surface.grid_size)?;
    grid.save(&run.path("surface.csv"))
}

fn execute(cli: Cli) -> Result<()> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("mcmc.seed={s}"));
        overrides.push(format!("simulate.seed={s}"));
    }
    let cfg = RunConfig::parse(&text, &overrides)?;
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    std::fs::create_dir_all(&cli.output_dir)?;
    let mut run = Run {
        cfg,
        out: cli.output_dir.clone(),
        artifacts: Vec::new(),
    };
    match &cli.command {
        Command::Simulate => simulate(&mut run)?,
        Command::Fit => fit_command(&mut run)?,
        Command::Summarize { draws } => summarize(&mut run, draws)?,
        Command::Detect { draws } => detect(&mut run, draws)?,
        Command::Compare => compare(&mut run)?,
        Command::TestOverlap => test_overlap(&mut run)?,
        Command::ExportSurface { draws } => surface(&mut run, draws)?,
    }
    let seed = match cli.command {
        Command::Simulate | Command::Compare => run.cfg.simulate.seed,
        _ => run.cfg.mcmc.seed,
    };
    Manifest::write(&run.out, cli.command.name(), seed, run.cfg.to_json(), &run.artifacts)?;
    info!("wrote {} artifacts to {}", run.artifacts.len(), run.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Parser messages can span lines; the error line must not.
            let msg: Vec<String> = e
                .to_string()
                .lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("error {}: {}", e.code(), msg.join(" "));
            ExitCode::FAILURE
        }
    }
}
