//! Batch command-line pipeline: simulate → fit → risk / corr / predict /
//! compare / diagnose, emitting plot-ready tables plus a reproducibility
//! manifest per run. Flags override the optional TOML config file.

use crate::assess::{cv_split, interval_score, ppl, ComparisonReport};
use crate::data::{
    read_dataset_file, simulate_sim1, simulate_sim2, write_dataset_file, Sim1Config, Sim2Config,
};
use crate::distributions::QuadratureRule;
use crate::inference::{
    bmd, curve_draws, conditional_pmfs, ed_samples, fit_implant_model, intracluster_corr_draw,
    posterior_predictive, quantile_type7, Endpoint,
};
use crate::mcmc::{diagnostics, fit_multichain, read_chain, write_chain, McmcConfig};
use crate::model::{elicit_sigma2_prior, Hyperparameters, ModelSpec};
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "devtox",
    version,
    about = "Bayesian nonparametric dose-response modeling and risk assessment \
             for clustered ordinal data from developmental toxicity studies"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (designs sim1 or sim2) plus its truth tables.
    Simulate(SimulateArgs),
    /// Fit a model by MCMC and write the chain file(s) and manifest.
    Fit(FitArgs),
    /// Dose-response curves, ED samples, and the BMD table from a chain.
    Risk(RiskArgs),
    /// Intracluster correlation draws at chosen doses.
    Corr(CorrArgs),
    /// Posterior predictive samples and conditional pmf estimates.
    Predict(PredictArgs),
    /// Cross-validated model comparison (PPL and interval score).
    Compare(CompareArgs),
    /// Convergence diagnostics and traces for a chain.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Which synthetic design to generate: sim1 or sim2.
    #[arg(long)]
    design: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20260810)]
    seed: u64,
    /// TOML config overriding the default simulator coefficients.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
struct McmcArgs {
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_chains: Option<usize>,
    /// Mixture truncation level L.
    #[arg(long)]
    truncation: Option<usize>,
}

#[derive(Debug, Args, Clone)]
struct PriorArgs {
    /// Inverse-gamma shape for the overdispersion prior.
    #[arg(long)]
    a_sigma: Option<f64>,
    /// Inverse-gamma rate for the overdispersion prior.
    #[arg(long)]
    b_sigma: Option<f64>,
    /// Elicit (a_sigma, b_sigma) from a target extra-variance fraction.
    #[arg(long)]
    elicit_v: Option<f64>,
    /// Shape to pair with --elicit-v (default 3).
    #[arg(long)]
    elicit_a: Option<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model name: cr-logits, cr-bb, cr-lnb, cw-bin, gen-bin, cw-lnb, gen-lnb.
    #[arg(long)]
    model: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    mcmc: McmcArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RiskArgs {
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated benchmark response levels.
    #[arg(long, default_value = "0.05,0.10")]
    bmr: String,
    /// Dose grid resolution for the curve table.
    #[arg(long, default_value_t = 26)]
    grid_points: usize,
    /// Upper end of the curve grid; defaults to the chain's design maximum...
    /// required here because the chain file does not carry the dataset.
    #[arg(long)]
    grid_max: f64,
    /// ED search upper bound; defaults to 1.5 × grid_max.
    #[arg(long)]
    search_max: Option<f64>,
}

#[derive(Debug, Args)]
struct CorrArgs {
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated dose levels (e.g. the design doses plus 3.75).
    #[arg(long)]
    doses: String,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Doses for the predictive samples; defaults to the observed levels.
    #[arg(long)]
    doses: Option<String>,
    /// Implant count for the conditional pmfs.
    #[arg(long, default_value_t = 12)]
    m: u32,
    /// Conditioning non-viable count for Pr(y | m, R).
    #[arg(long, default_value_t = 2)]
    r: u32,
    #[arg(long, default_value_t = 20260810)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated model names to refit on the training split.
    #[arg(long, default_value = "cw-bin,cw-lnb,gen-bin,gen-lnb")]
    models: String,
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    mcmc: McmcArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Dose at which weight and curve traces are monitored.
    #[arg(long)]
    dose: f64,
}

/// TOML config file: any section may be omitted; flags override.
#[derive(Debug, Default, Deserialize)]
struct FileConfig {
    mcmc: Option<McmcFileConfig>,
    prior: Option<PriorFileConfig>,
    sim1: Option<Sim1Config>,
    sim2: Option<Sim2Config>,
}

#[derive(Debug, Default, Deserialize)]
struct McmcFileConfig {
    n_iter: Option<usize>,
    burn_in: Option<usize>,
    thin: Option<usize>,
    seed: Option<u64>,
    n_chains: Option<usize>,
    truncation: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct PriorFileConfig {
    a_sigma: Option<f64>,
    b_sigma: Option<f64>,
    elicit_v: Option<f64>,
    elicit_a: Option<f64>,
    a_alpha: Option<f64>,
    b_alpha: Option<f64>,
}

fn load_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

/// Reproducibility manifest written next to every run's outputs.
#[derive(Debug, Serialize)]
struct Manifest {
    tool: String,
    version: String,
    command: String,
    spec: Option<ModelSpec>,
    hyper: Option<Hyperparameters>,
    mcmc: Option<McmcConfig>,
    seed: Option<u64>,
    wall_secs: f64,
    outputs: Vec<String>,
    notes: Vec<String>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Manifest {
            tool: "devtox".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            spec: None,
            hyper: None,
            mcmc: None,
            seed: None,
            wall_secs: 0.0,
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage/help text
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Risk(args) => cmd_risk(args),
        Command::Corr(args) => cmd_corr(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Diagnose(args) => cmd_diagnose(args),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let start = std::time::Instant::now();
    let file_cfg = load_config(&args.config)?;
    std::fs::create_dir_all(&args.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut manifest = Manifest::new("simulate");
    manifest.seed = Some(args.seed);
    match args.design.as_str() {
        "sim1" => {
            let cfg = file_cfg.sim1.unwrap_or_default();
            let (data, truth) = simulate_sim1(&cfg, &mut rng)?;
            write_dataset_file(&args.out.join("dataset.csv"), &data)?;
            write_truth_curves(&args.out.join("truth_curves.csv"), &truth)?;
            manifest.notes.push(format!("sim1 config: {cfg:?}"));
            manifest.outputs = vec!["dataset.csv".into(), "truth_curves.csv".into()];
        }
        "sim2" => {
            let cfg = file_cfg.sim2.unwrap_or_default();
            let (data, truth, corr) = simulate_sim2(&cfg, &mut rng)?;
            write_dataset_file(&args.out.join("dataset.csv"), &data)?;
            write_truth_curves(&args.out.join("truth_curves.csv"), &truth)?;
            let mut w = csv::Writer::from_path(args.out.join("truth_correlations.csv"))?;
            w.write_record(["dose", "category", "corr"])?;
            for (d, &dose) in corr.doses.iter().enumerate() {
                for j in 0..3 {
                    w.write_record(&[
                        format!("{dose}"),
                        format!("{}", j + 1),
                        format!("{:.10}", corr.by_category[j][d]),
                    ])?;
                }
            }
            w.flush()?;
            manifest.notes.push(format!("sim2 config: {cfg:?}"));
            manifest.outputs = vec![
                "dataset.csv".into(),
                "truth_curves.csv".into(),
                "truth_correlations.csv".into(),
            ];
        }
        other => return Err(Error::Config(format!("unknown design '{other}'"))),
    }
    manifest.wall_secs = start.elapsed().as_secs_f64();
    manifest.write(&args.out)
}

fn write_truth_curves(path: &Path, truth: &crate::data::TrueCurves) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dose", "D", "M", "r"])?;
    for (i, &x) in truth.grid.iter().enumerate() {
        w.write_record(&[
            format!("{x}"),
            format!("{:.10}", truth.d[i]),
            format!("{:.10}", truth.m[i]),
            format!("{:.10}", truth.r[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn resolve_mcmc(args: &McmcArgs, file: &Option<McmcFileConfig>) -> (McmcConfig, usize) {
    let f = file.as_ref();
    let defaults = McmcConfig::default();
    let config = McmcConfig {
        n_iter: args
            .n_iter
            .or(f.and_then(|c| c.n_iter))
            .unwrap_or(defaults.n_iter),
        burn_in: args
            .burn_in
            .or(f.and_then(|c| c.burn_in))
            .unwrap_or(defaults.burn_in),
        thin: args.thin.or(f.and_then(|c| c.thin)).unwrap_or(defaults.thin),
        seed: args.seed.or(f.and_then(|c| c.seed)).unwrap_or(defaults.seed),
        n_chains: args
            .n_chains
            .or(f.and_then(|c| c.n_chains))
            .unwrap_or(defaults.n_chains),
    };
    let truncation = args
        .truncation
        .or(f.and_then(|c| c.truncation))
        .unwrap_or(50);
    (config, truncation)
}

fn resolve_hyper(
    prior: &PriorArgs,
    file: &Option<PriorFileConfig>,
    max_dose: f64,
) -> Result<Hyperparameters> {
    let mut hyper = Hyperparameters::defaults(max_dose);
    let f = file.as_ref();
    if let Some(a) = f.and_then(|c| c.a_alpha) {
        hyper.a_alpha = a;
    }
    if let Some(b) = f.and_then(|c| c.b_alpha) {
        hyper.b_alpha = b;
    }
    let elicit_v = prior.elicit_v.or(f.and_then(|c| c.elicit_v));
    if let Some(v) = elicit_v {
        let a = prior.elicit_a.or(f.and_then(|c| c.elicit_a)).unwrap_or(3.0);
        let (a_sigma, b_sigma) = elicit_sigma2_prior(v, a)?;
        hyper.a_sigma = a_sigma;
        hyper.b_sigma = b_sigma;
    }
    if let Some(a) = prior.a_sigma.or(f.and_then(|c| c.a_sigma)) {
        hyper.a_sigma = a;
    }
    if let Some(b) = prior.b_sigma.or(f.and_then(|c| c.b_sigma)) {
        hyper.b_sigma = b;
    }
    hyper.validate()?;
    Ok(hyper)
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let start = std::time::Instant::now();
    let file_cfg = load_config(&args.config)?;
    std::fs::create_dir_all(&args.out)?;
    let data = read_dataset_file(&args.data)?;
    let (config, truncation) = resolve_mcmc(&args.mcmc, &file_cfg.mcmc);
    let spec = ModelSpec::from_name(&args.model, truncation)?;
    let hyper = resolve_hyper(&args.prior, &file_cfg.prior, data.max_dose())?;
    let chains = fit_multichain(&spec, &data, &hyper, &config)?;
    let mut manifest = Manifest::new("fit");
    manifest.spec = Some(spec);
    manifest.hyper = Some(hyper);
    manifest.mcmc = Some(config);
    manifest.seed = Some(config.seed);
    for (k, chain) in chains.iter().enumerate() {
        let name = format!("chain_{k}.jsonl");
        write_chain(&args.out.join(&name), chain)?;
        manifest.outputs.push(name);
        manifest.notes.push(format!(
            "chain {k}: {} retained draws, wall {:.1}s{}",
            chain.draws.len(),
            chain.wall_secs,
            chain
                .acceptance
                .map(|a| format!(", MH acceptance {a:.3}"))
                .unwrap_or_default()
        ));
    }
    manifest.wall_secs = start.elapsed().as_secs_f64();
    manifest.write(&args.out)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad {what} value '{s}'")))
        })
        .collect()
}

fn cmd_risk(args: RiskArgs) -> Result<()> {
    let start = std::time::Instant::now();
    std::fs::create_dir_all(&args.out)?;
    let chain = read_chain(&args.chain)?;
    let rule = QuadratureRule::shared();
    let bmrs = parse_list(&args.bmr, "BMR")?;
    for &b in &bmrs {
        if !(0.0..1.0).contains(&b) || b == 0.0 {
            return Err(Error::Config(format!("BMR must lie in (0,1), got {b}")));
        }
    }
    if args.grid_points < 2 {
        return Err(Error::Config("grid needs at least 2 points".into()));
    }
    let grid = crate::data::dose_grid(args.grid_max, args.grid_points);
    let search_max = args.search_max.unwrap_or(1.5 * args.grid_max);

    let curves = curve_draws(&chain, &grid, rule)?;
    let mut w = csv::Writer::from_path(args.out.join("curves.csv"))?;
    w.write_record(["draw", "dose", "D", "M", "r"])?;
    for (di, row) in curves.values.iter().enumerate() {
        for (gi, &x) in curves.grid.iter().enumerate() {
            let (d, m, r) = row[gi];
            w.write_record(&[
                di.to_string(),
                format!("{x}"),
                format!("{d:.8}"),
                format!("{m:.8}"),
                format!("{r:.8}"),
            ])?;
        }
    }
    w.flush()?;

    let mut ed_writer = csv::Writer::from_path(args.out.join("ed_samples.csv"))?;
    ed_writer.write_record(["endpoint", "bmr", "draw", "ed"])?;
    let mut bmd_long = csv::Writer::from_path(args.out.join("bmd.csv"))?;
    bmd_long.write_record([
        "model",
        "endpoint",
        "bmr",
        "bmd",
        "n_ed",
        "n_censored",
        "censor_fraction",
        "unreliable",
    ])?;
    // wide table mirroring the reference layout: one row per model,
    // endpoint × BMR columns
    let mut header = vec!["model".to_string()];
    let mut wide_row = vec![chain.spec.name().to_string()];
    for endpoint in Endpoint::ALL {
        for &bmr in &bmrs {
            header.push(format!("{}_bmr{}", endpoint.name(), bmr));
            let samples = ed_samples(&chain, endpoint, bmr, search_max, rule)?;
            for (k, &d) in samples.doses.iter().enumerate() {
                ed_writer.write_record(&[
                    endpoint.name().to_string(),
                    format!("{bmr}"),
                    k.to_string(),
                    format!("{d:.8}"),
                ])?;
            }
            let bmd_value = if samples.doses.is_empty() {
                f64::NAN
            } else {
                bmd(&samples.doses, 0.95)?
            };
            wide_row.push(format!("{bmd_value:.4}"));
            bmd_long.write_record(&[
                chain.spec.name().to_string(),
                endpoint.name().to_string(),
                format!("{bmr}"),
                format!("{bmd_value:.6}"),
                samples.doses.len().to_string(),
                samples.censored.to_string(),
                format!("{:.4}", samples.censoring_fraction()),
                samples.bmd_unreliable().to_string(),
            ])?;
        }
    }
    ed_writer.flush()?;
    bmd_long.flush()?;
    let mut wide = csv::Writer::from_path(args.out.join("bmd_table.csv"))?;
    wide.write_record(&header)?;
    wide.write_record(&wide_row)?;
    wide.flush()?;

    let mut manifest = Manifest::new("risk");
    manifest.spec = Some(chain.spec);
    manifest.mcmc = Some(chain.config);
    manifest.outputs = vec![
        "curves.csv".into(),
        "ed_samples.csv".into(),
        "bmd.csv".into(),
        "bmd_table.csv".into(),
    ];
    manifest.wall_secs = start.elapsed().as_secs_f64();
    manifest.write(&args.out)
}

fn cmd_corr(args: CorrArgs) -> Result<()> {
    let start = std::time::Instant::now();
    std::fs::create_dir_all(&args.out)?;
    let chain = read_chain(&args.chain)?;
    let rule = QuadratureRule::shared();
    let doses = parse_list(&args.doses, "dose")?;
    let mut w = csv::Writer::from_path(args.out.join("correlations.csv"))?;
    w.write_record(["draw", "dose", "category", "corr"])?;
    let mut degenerate = 0usize;
    for (di, draw) in chain.draws.iter().enumerate() {
        for &dose in &doses {
            for category in 1..=3 {
                match intracluster_corr_draw(&draw.params, chain.spec.kernel, dose, category, rule)
                {
                    Ok(c) => w.write_record(&[
                        di.to_string(),
                        format!("{dose}"),
                        category.to_string(),
                        format!("{c:.8}"),
                    ])?,
                    Err(_) => degenerate += 1,
                }
            }
        }
    }
    w.flush()?;
    let mut manifest = Manifest::new("corr");
    manifest.spec = Some(chain.spec);
    manifest.outputs = vec!["correlations.csv".into()];
    if degenerate > 0 {
        manifest
            .notes
            .push(format!("{degenerate} degenerate draws skipped"));
    }
    manifest.wall_secs = start.elapsed().as_secs_f64();
    manifest.write(&args.out)
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let start = std::time::Instant::now();
    std::fs::create_dir_all(&args.out)?;
    let chain = read_chain(&args.chain)?;
    let data = read_dataset_file(&args.data)?;
    let rule = QuadratureRule::shared();
    let doses = match &args.doses {
        Some(text) => parse_list(text, "dose")?,
        None => data.dose_levels().to_vec(),
    };
    if args.r > args.m {
        return Err(Error::Config("conditioning R exceeds m".into()));
    }
    let implant = fit_implant_model(&data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let samples = posterior_predictive(&chain, &doses, &implant, &mut rng)?;
    let mut w = csv::Writer::from_path(args.out.join("predictive.csv"))?;
    w.write_record(["draw", "dose", "m", "R", "y"])?;
    for (d, &dose) in doses.iter().enumerate() {
        for (k, &(m, r, y)) in samples[d].iter().enumerate() {
            w.write_record(&[
                k.to_string(),
                format!("{dose}"),
                m.to_string(),
                r.to_string(),
                y.to_string(),
            ])?;
        }
    }
    w.flush()?;

    // pointwise posterior mean and 95% band of the conditional pmfs
    let mut wr = csv::Writer::from_path(args.out.join("pmf_r.csv"))?;
    wr.write_record(["dose", "count", "mean", "lo95", "hi95"])?;
    let mut wy = csv::Writer::from_path(args.out.join("pmf_y.csv"))?;
    wy.write_record(["dose", "count", "mean", "lo95", "hi95"])?;
    for &dose in &doses {
        let mut r_all: Vec<Vec<f64>> = Vec::new();
        let mut y_all: Vec<Vec<f64>> = Vec::new();
        for draw in &chain.draws {
            let (r_pmf, y_pmf) =
                conditional_pmfs(&draw.params, chain.spec.kernel, dose, args.m, args.r, rule)?;
            r_all.push(r_pmf);
            y_all.push(y_pmf);
        }
        write_pmf_summary(&mut wr, dose, &r_all)?;
        write_pmf_summary(&mut wy, dose, &y_all)?;
    }
    wr.flush()?;
    wy.flush()?;

    let mut manifest = Manifest::new("predict");
    manifest.spec = Some(chain.spec);
    manifest.seed = Some(args.seed);
    manifest.notes.push(format!(
        "implant model rate {:.4}; conditional pmfs at m={}, R={}",
        implant.rate, args.m, args.r
    ));
    manifest.outputs = vec!["predictive.csv".into(), "pmf_r.csv".into(), "pmf_y.csv".into()];
    manifest.wall_secs = start.elapsed().as_secs_f64();
    manifest.write(&args.out)
}

fn write_pmf_summary<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    dose: f64,
    draws: &[Vec<f64>],
) -> Result<()> {
    let len = draws[0].len();
    for count in 0..len {
        let mut vals: Vec<f64> = draws.iter().map(|d| d[count]).collect();
        vals.sort_by(f64::total_cmp);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        w.write_record(&[
            format!("{dose}"),
            count.to_string(),
            format!("{mean:.8}"),
            format!("{:.8}", quantile_type7(&vals, 0.025)),
            format!("{:.8}", quantile_type7(&vals, 0.975)),
        ])?;
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let start = std::time::Instant::now();
    let file_cfg = load_config(&args.config)?;
    std::fs::create_dir_all(&args.out)?;
    let data = read_dataset_file(&args.data)?;
    let (config, truncation) = resolve_mcmc(&args.mcmc, &file_cfg.mcmc);
    let hyper = resolve_hyper(&args.prior, &file_cfg.prior, data.max_dose())?;
    let model_names: Vec<String> = args.models.split(',').map(|s| s.trim().to_string()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let split = cv_split(&data, args.fraction, &mut rng)?;
    let mut split_writer = csv::Writer::from_path(args.out.join("split.csv"))?;
    split_writer.write_record(["record_index", "role"])?;
    for i in 0..data.n_dams() {
        let role = if split.test_indices.contains(&i) {
            "test"
        } else {
            "train"
        };
        split_writer.write_record(&[i.to_string(), role.to_string()])?;
    }
    split_writer.flush()?;

    let implant = fit_implant_model(&split.train)?;
    let doses = data.dose_levels().to_vec();
    let mut report = ComparisonReport::new(model_names.clone());
    let mut g_all: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let mut p_all: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let mut s_all: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let mut manifest = Manifest::new("compare");
    for name in &model_names {
        let spec = ModelSpec::from_name(name, truncation)?;
        let chain = crate::mcmc::fit(&spec, &split.train, &hyper, &config)?;
        let mut pred_rng = ChaCha8Rng::seed_from_u64(crate::mcmc::chain_seed(config.seed, 7));
        let predictive = posterior_predictive(&chain, &doses, &implant, &mut pred_rng)?;
        for (e, endpoint) in Endpoint::ALL.into_iter().enumerate() {
            let res = ppl(&split.test, &predictive, &doses, endpoint)?;
            let s = interval_score(&split.test, &predictive, &doses, endpoint, 0.05)?;
            g_all[e].push(res.goodness);
            p_all[e].push(res.penalty);
            s_all[e].push(s);
            if res.skipped > 0 && endpoint == Endpoint::Malformation {
                manifest.notes.push(format!(
                    "{name}: {} malformation test dam(s) without live implants skipped",
                    res.skipped
                ));
            }
        }
        manifest
            .notes
            .push(format!("{name}: fitted in {:.1}s", chain.wall_secs));
    }
    for (e, endpoint) in Endpoint::ALL.into_iter().enumerate() {
        report.push(endpoint, "G", g_all[e].clone());
        report.push(endpoint, "P", p_all[e].clone());
        report.push(endpoint, "S", s_all[e].clone());
    }
    report.to_csv(std::fs::File::create(args.out.join("comparison.csv"))?)?;
    manifest.mcmc = Some(config);
    manifest.hyper = Some(hyper);
    manifest.seed = Some(config.seed);
    manifest.outputs = vec!["comparison.csv".into(), "split.csv".into()];
    manifest.wall_secs = start.elapsed().as_secs_f64();
    manifest.write(&args.out)
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let start = std::time::Instant::now();
    std::fs::create_dir_all(&args.out)?;
    let chain = read_chain(&args.chain)?;
    let rule = QuadratureRule::shared();
    let bundle = diagnostics(&chain, args.dose, rule)?;
    let mut w = csv::Writer::from_path(args.out.join("traces.csv"))?;
    let mut header = vec!["draw".to_string()];
    header.extend(bundle.traces.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    let n = bundle.traces.first().map(|(_, v)| v.len()).unwrap_or(0);
    for i in 0..n {
        let mut rec = vec![i.to_string()];
        rec.extend(bundle.traces.iter().map(|(_, v)| format!("{:.8}", v[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let mut cw = csv::Writer::from_path(args.out.join("convergence.csv"))?;
    cw.write_record(["name", "ess", "rhat", "degenerate"])?;
    for s in &bundle.scalars {
        cw.write_record(&[
            s.name.clone(),
            format!("{:.2}", s.ess),
            format!("{:.4}", s.rhat),
            s.degenerate.to_string(),
        ])?;
    }
    cw.flush()?;
    let mut manifest = Manifest::new("diagnose");
    manifest.spec = Some(chain.spec);
    manifest.outputs = vec!["traces.csv".into(), "convergence.csv".into()];
    manifest.wall_secs = start.elapsed().as_secs_f64();
    manifest.write(&args.out)
}
