use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tenrank_core::criteria::TuneOptions;
use tenrank_core::iterative::PenaltyDims;
use tenrank_core::simgen::{self, ModelKind, ModelSpec};
use tenrank_core::Method;
use tenrank_harness::estimator::{EstimatorSpec, RunSettings};
use tenrank_harness::ingest::{load_series, to_long_csv, to_wide_csv, CsvLayout};
use tenrank_harness::report::{self, EstimateOptions, TuneCommand};
use tenrank_harness::{run_experiment, Error, ExperimentConfig, Result};

/// Rank determination for tensor factor models.
#[derive(Parser)]
#[command(name = "tenrank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Tfms,
    CsvLong,
    CsvWide,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Auto,
    Long,
    Wide,
}

impl From<Layout> for CsvLayout {
    fn from(l: Layout) -> Self {
        match l {
            Layout::Auto => CsvLayout::Auto,
            Layout::Long => CsvLayout::Long,
            Layout::Wide => CsvLayout::Wide,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PenDims {
    Original,
    Projected,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a series from one of the matrix designs M0..M4.
    Simulate {
        #[arg(long, default_value = "M1")]
        model: ModelKind,
        #[arg(long, default_value_t = 20)]
        d1: usize,
        #[arg(long, default_value_t = 20)]
        d2: usize,
        #[arg(short = 'T', long = "t", default_value_t = 300)]
        t: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        /// Output format; guessed from the extension when omitted.
        #[arg(long, value_enum)]
        format: Option<OutFormat>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Rank estimates, spectra and lag diagnostics for one series.
    Estimate {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        layout: Layout,
        /// Estimators such as IC2-TIPUP; repeatable. Defaults to IC2 and ER1 on both statistics.
        #[arg(short, long = "estimator")]
        estimators: Vec<EstimatorSpec>,
        /// Factor strength assumed by IC penalties.
        #[arg(long, default_value_t = 0.0)]
        nu: f64,
        #[arg(long, default_value_t = 1)]
        h0: usize,
        /// Per-mode search bound, comma separated.
        #[arg(long, value_delimiter = ',')]
        m_star: Option<Vec<usize>>,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
        #[arg(long, value_enum, default_value = "original")]
        penalty_dims: PenDims,
        #[arg(long)]
        no_demean: bool,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run a Monte-Carlo experiment described by a TOML file.
    Experiment {
        config: PathBuf,
        /// Override the config's CSV output.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        frequencies_csv: Option<PathBuf>,
    },
    /// Choose the IC multiplier by subsample stability.
    TuneC {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        layout: Layout,
        #[arg(long, default_value = "TIPUP")]
        method: Method,
        #[arg(long, default_value_t = 2)]
        variant: u8,
        #[arg(long, default_value_t = 0.0)]
        nu: f64,
        #[arg(long, default_value_t = 1)]
        h0: usize,
        #[arg(long, default_value_t = 10)]
        m_star: usize,
        #[arg(long, default_value_t = 1e-6)]
        c_min: f64,
        #[arg(long, default_value_t = 1e2)]
        c_max: f64,
        #[arg(long, default_value_t = 81)]
        c_count: usize,
        #[arg(long, default_value_t = 10)]
        subsamples: usize,
        #[arg(long)]
        no_demean: bool,
        /// Writes PREFIX_ranks.csv and PREFIX_stability.csv.
        #[arg(long)]
        csv_prefix: Option<PathBuf>,
    },
    /// Leading singular values of both statistics across maximal lags.
    Diagnose {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        layout: Layout,
        #[arg(long, default_value_t = 4)]
        h_max: usize,
        #[arg(long, default_value_t = 5)]
        m_max: usize,
        /// Normalization h0^-a applied to the singular values.
        #[arg(long, default_value_t = 0.5)]
        exponent: f64,
        #[arg(long)]
        no_demean: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { model, d1, d2, t, seed, noise_scale, format, out } => {
            let spec = ModelSpec::preset(model, d1, d2, t, seed)?.with_noise_scale(noise_scale);
            spec.validate()?;
            let series = simgen::generate(&spec)?.series;
            let format = format.unwrap_or_else(|| {
                match out.extension().and_then(|e| e.to_str()) {
                    Some(e) if e.eq_ignore_ascii_case("csv") => OutFormat::CsvLong,
                    _ => OutFormat::Tfms,
                }
            });
            match format {
                OutFormat::Tfms => tenrank_core::io::save(&out, &series)?,
                OutFormat::CsvLong => write_text(&out, &to_long_csv(&series))?,
                OutFormat::CsvWide => write_text(&out, &to_wide_csv(&series))?,
            }
            eprintln!(
                "wrote {} ({}x{}, T={}, true ranks ({},{}))",
                out.display(),
                d1,
                d2,
                t,
                spec.r1,
                spec.r2
            );
        }
        Command::Estimate { input, layout, estimators, nu, h0, m_star, max_iter, penalty_dims, no_demean, json } => {
            let series = load_series(&input, layout.into())?;
            let mut opts = EstimateOptions::default();
            if !estimators.is_empty() {
                opts.estimators = estimators;
            }
            for e in &mut opts.estimators {
                if nu != 0.0 {
                    *e = e.clone().with_nu(nu);
                }
                e.validate()?;
            }
            opts.settings = RunSettings {
                h0,
                m_star,
                max_iter,
                penalty_dims: match penalty_dims {
                    PenDims::Original => PenaltyDims::Original,
                    PenDims::Projected => PenaltyDims::Projected,
                },
                ..RunSettings::default()
            };
            opts.demean = !no_demean;
            let rep = report::estimate(&series, &opts)?;
            print!("{}", rep.render());
            if let Some(p) = json {
                write_text(&p, &serde_json::to_string_pretty(&rep)?)?;
            }
        }
        Command::Experiment { config, csv, json, frequencies_csv } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if csv.is_some() {
                cfg.output.csv = csv;
            }
            if json.is_some() {
                cfg.output.json = json;
            }
            if frequencies_csv.is_some() {
                cfg.output.frequencies_csv = frequencies_csv;
            }
            let table = run_experiment(&cfg)?;
            print!("{}", table.render());
            table.write_outputs(&cfg)?;
        }
        Command::TuneC {
            input, layout, method, variant, nu, h0, m_star, c_min, c_max, c_count, subsamples, no_demean, csv_prefix,
        } => {
            let series = load_series(&input, layout.into())?;
            if !(c_min > 0.0 && c_max >= c_min && c_count >= 1) {
                return Err(Error::Input("c grid needs 0 < c_min <= c_max and c_count >= 1".into()));
            }
            let cmd = TuneCommand {
                method,
                variant,
                nu,
                h0,
                m_star,
                c_grid: TuneOptions::log_grid(c_min, c_max, c_count),
                subsamples,
                demean: !no_demean,
            };
            let results = report::tune_all(&series, &cmd)?;
            for r in &results {
                match (r.c_hat, r.rank) {
                    (Some(c), Some(k)) => println!("mode {}: c = {c:.4e}, rank {k}", r.mode + 1),
                    _ => println!("mode {}: no admissible c", r.mode + 1),
                }
                if let Some(w) = &r.warning {
                    eprintln!("warning: mode {}: {w}", r.mode + 1);
                }
            }
            if let Some(prefix) = csv_prefix {
                let with = |suffix: &str| {
                    let mut s = prefix.clone().into_os_string();
                    s.push(suffix);
                    PathBuf::from(s)
                };
                report::tune_ranks_csv(&results, create(&with("_ranks.csv"))?)?;
                report::tune_stability_csv(&results, create(&with("_stability.csv"))?)?;
            }
        }
        Command::Diagnose { input, layout, h_max, m_max, exponent, no_demean, csv } => {
            let series = load_series(&input, layout.into())?;
            let tables = report::diagnose(&series, h_max, m_max, exponent, !no_demean)?;
            for t in &tables {
                println!("mode {} (h0^-{} sigma_m)", t.mode, t.exponent);
                for r in &t.rows {
                    let f = |v: &[f64]| v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(" ");
                    println!("  h0={}  TOPUP {}", r.h0, f(&r.topup_normalized));
                    println!("        TIPUP {}", f(&r.tipup_normalized));
                }
            }
            if let Some(p) = csv {
                report::tau_csv(&tables, create(&p)?)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
