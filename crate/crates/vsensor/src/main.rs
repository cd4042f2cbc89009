use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vsensor::pipeline::{self, limited};
use vsensor::vsensor_core::{EvalTable, Method, Mode};
use vsensor::{io, report, Error, Result, RunConfig};

/// Certified-robust virtual sensors: data, training, attacks, verification
/// and reports.
#[derive(Parser)]
#[command(name = "vsensor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Write train.csv and test.csv.
    GenData,
    /// Train one model and write model.json.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Run PGD on a dataset and write attack.jsonl.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Certify output bounds and write <method>.jsonl.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Build the error table and plot data for one model.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Dual certificates; computed when absent.
        #[arg(long)]
        dual: Option<PathBuf>,
        /// Exact certificates; computed when absent.
        #[arg(long)]
        milp: Option<PathBuf>,
    },
    /// Every step for all four training modes plus a combined report.
    Pipeline,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Standard,
    Noise,
    Robust,
    Targeted,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Dual,
    Milp,
}

#[derive(Args)]
struct Overrides {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, global = true)]
    eps_series: Option<f64>,
    #[arg(long, global = true)]
    eps_scalar: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    target_lo: Option<f64>,
    #[arg(long, global = true)]
    target_hi: Option<f64>,
    #[arg(long, global = true)]
    pgd_steps: Option<usize>,
    #[arg(long, global = true)]
    pgd_step_series: Option<f64>,
    #[arg(long, global = true)]
    pgd_step_scalar: Option<f64>,
    #[arg(long, global = true)]
    restarts: Option<usize>,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    /// Only use the first N test examples.
    #[arg(long, global = true)]
    limit: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    hidden_dim: Option<usize>,
    #[arg(long, global = true)]
    n_train: Option<usize>,
    #[arg(long, global = true)]
    n_test: Option<usize>,
    #[arg(long, global = true)]
    noise_draws: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:tt)+) => {
                if let Some(v) = self.$flag {
                    cfg.$($field)+ = v;
                }
            };
        }
        set!(seed => seed);
        set!(eps_series => perturb.eps_series);
        set!(eps_scalar => perturb.eps_scalar);
        set!(lambda => train.lambda);
        set!(target_lo => train.target_lo);
        set!(target_hi => train.target_hi);
        set!(pgd_steps => attack.steps);
        set!(pgd_step_series => attack.step_series);
        set!(pgd_step_scalar => attack.step_scalar);
        set!(restarts => attack.restarts);
        set!(epochs => train.epochs);
        set!(hidden_dim => train.hidden_dim);
        set!(n_train => data.n_train);
        set!(n_test => data.n_test);
        set!(noise_draws => eval.noise_draws);
        if let Some(m) = self.mode {
            cfg.train.mode = match m {
                ModeArg::Standard => Mode::Standard,
                ModeArg::Noise => Mode::Noise,
                ModeArg::Robust => Mode::Robust,
                ModeArg::Targeted => Mode::Targeted,
            };
        }
        if let Some(m) = self.method {
            cfg.verify.method = match m {
                MethodArg::Dual => Method::Dual,
                MethodArg::Milp => Method::Milp,
            };
        }
        if self.limit.is_some() {
            cfg.verify.limit = self.limit;
        }
        // keep the schedule consistent when only the epoch count is given
        if self.epochs.is_some() && self.config.is_none() {
            let e = cfg.train.epochs;
            cfg.train.lr_peak_epoch = cfg.train.lr_peak_epoch.min(e / 4);
            cfg.train.eps_ramp_epochs = cfg.train.eps_ramp_epochs.min(e / 4);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.opts.resolve()?;
    let out = cli.opts.out_dir.as_path();
    match cli.command {
        Command::GenData => {
            let (train, test) = pipeline::generate_data(&cfg)?;
            let g = cfg.generator();
            io::save_dataset(&out.join("train.csv"), &train, Some(&g))?;
            io::save_dataset(&out.join("test.csv"), &test, Some(&g))?;
        }
        Command::Train { data } => {
            let ds = io::load_dataset(&data)?;
            let (net, meta) = pipeline::train_model(&cfg, &ds)?;
            io::save_model(&out.join("model.json"), &net, &meta)?;
        }
        Command::Attack { model, data } => {
            let (net, ds) = load_inputs(&model, &data, &cfg)?;
            let records = pipeline::attack_dataset(&net, &ds, &cfg)?;
            io::save_attacks(&out.join("attack.jsonl"), &records)?;
        }
        Command::Verify { model, data } => {
            let (net, ds) = load_inputs(&model, &data, &cfg)?;
            let method = cfg.verify.method;
            let certs = pipeline::verify(&net, &ds, &cfg, method)?;
            io::save_certificates(&out.join(format!("{}.jsonl", method.as_str())), &certs)?;
        }
        Command::Report { model, data, dual, milp } => {
            let (net, ds) = load_inputs(&model, &data, &cfg)?;
            let certs = |path: Option<PathBuf>, method| match path {
                Some(p) => io::load_certificates(&p),
                None => pipeline::verify(&net, &ds, &cfg, method),
            };
            let dual = certs(dual, Method::Dual)?;
            let milp = certs(milp, Method::Milp)?;
            let records = pipeline::evaluate(&net, &ds, &cfg, &dual, &milp)?;
            let table = EvalTable::from_records(cfg.train.mode.as_str(), &records)?;
            let attacks = pipeline::attack_dataset(&net, &ds, &cfg)?;
            pipeline::write_model_report(out, &table, &records, &ds, &attacks, &cfg.spec(), &cfg.eval.series_ids)?;
            print!("{}", report::render_markdown(std::slice::from_ref(&table)));
        }
        Command::Pipeline => {
            let result = vsensor::run_pipeline(&cfg, out)?;
            let tables: Vec<EvalTable> = result.runs.iter().map(|r| r.table.clone()).collect();
            print!("{}", report::render_markdown(&tables));
            return Ok(());
        }
    }
    cfg.echo(out)
}

fn load_inputs(model: &Path, data: &Path, cfg: &RunConfig) -> Result<(vsensor::vsensor_core::DenseNet, vsensor::vsensor_core::Dataset)> {
    let (net, _) = io::load_model(model)?;
    let ds = limited(&io::load_dataset(data)?, cfg.verify.limit);
    if ds.input_dim() != net.input_dim() {
        return Err(Error::Config(format!(
            "model expects {} features, dataset has {}",
            net.input_dim(),
            ds.input_dim()
        )));
    }
    Ok((net, ds))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let usage = matches!(e, Error::Config(_) | Error::Core(vsensor::vsensor_core::Error::Config(_)));
            ExitCode::from(if usage { 1 } else { 2 })
        }
    }
}
