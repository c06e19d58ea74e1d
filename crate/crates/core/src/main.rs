//! Command line front end. Exit codes: 0 on success, 1 for rejected or
//! unparseable inputs, 2 for numeric failures.

use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand};

use pgd_imp::dataset::Dataset;
use pgd_imp::error::{Error, Result};
use pgd_imp::harness;
use pgd_imp::metrics::AGGREGATE_CSV_HEADER;
use pgd_imp::model::ArchSpec;
use pgd_imp::schedule::{build_plan, plan_to_csv, ScheduleKind};
use pgd_imp::train::TrainParams;
use pgd_imp::{
    generate_toy_dataset, load_dataset, load_image, load_model, pair_metrics, parse_variant,
    save_dataset, save_model, train_toy, AttackConfig, AttackMode, ToyDatasetSpec,
};

#[derive(Parser)]
#[command(
    name = "pgd-imp",
    version,
    about = "Imperceptible sign-gradient attacks on small image classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled image dataset (train/ and test/ splits)
    GenData(GenDataArgs),
    /// Train a small classifier on a dataset directory
    Train(TrainArgs),
    /// Attack a dataset and write reports plus adversarial images
    Attack(AttackArgs),
    /// Compare the four attack variants on one dataset
    Ablate(AttackArgs),
    /// Print a step plan, or compare all schedules when given a model
    Schedules(SchedulesArgs),
    /// Sweep iteration budgets against perturbation budgets
    Sweep(SweepArgs),
    /// Compute image-pair metrics between two netpbm files
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output directory; gets train/ and test/ subdirectories
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 64)]
    train_per_class: usize,
    #[arg(long, default_value_t = 64)]
    test_per_class: usize,
    #[arg(long, default_value_t = 3)]
    channels: usize,
    #[arg(long, default_value_t = 8)]
    height: usize,
    #[arg(long, default_value_t = 8)]
    width: usize,
    /// Uniform pixel noise amplitude around each class template
    #[arg(long, default_value_t = 2.0)]
    noise: f64,
    /// Per-pixel class offset bound; controls class separation in pixel levels
    #[arg(long, default_value_t = 3.0)]
    spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (manifest.csv plus images)
    #[arg(long)]
    data: PathBuf,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
    /// logistic | mlp | conv
    #[arg(long, default_value = "conv")]
    arch: String,
    /// Hidden width for mlp
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Channels for the conv layer
    #[arg(long, default_value_t = 16)]
    conv_channels: usize,
    /// Square kernel size for the conv layer
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AttackOpts {
    /// Trained model file
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory (manifest.csv plus images)
    #[arg(long)]
    data: PathBuf,
    /// Perturbation budget in pixel levels
    #[arg(long, default_value_t = 8.0)]
    epsilon: f64,
    /// Iteration budget
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// constant | linear | linear-reverse | cosine | cosine-reverse
    #[arg(long, default_value = "linear")]
    schedule: String,
    /// pgd | pgd-dss | pgd-aes | pgd-imp
    #[arg(long, default_value = "pgd-imp")]
    attack: String,
    /// untargeted | targeted
    #[arg(long, default_value = "untargeted")]
    mode: String,
    /// Target class, required in targeted mode
    #[arg(long)]
    target: Option<usize>,
    /// Fixed step for the non-dss variants; defaults to epsilon / 4
    #[arg(long)]
    baseline_alpha: Option<f64>,
    /// Start plain PGD from a random point inside the budget ball
    #[arg(long)]
    random_init: bool,
    /// Seed for randomized choices
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl AttackOpts {
    fn mode(&self) -> Result<AttackMode> {
        match (self.mode.as_str(), self.target) {
            ("untargeted", None) => Ok(AttackMode::Untargeted),
            ("untargeted", Some(_)) => {
                Err(Error::rejected("--target only applies to targeted mode"))
            }
            ("targeted", Some(target)) => Ok(AttackMode::Targeted { target }),
            ("targeted", None) => Err(Error::rejected("targeted mode requires --target")),
            (other, _) => Err(Error::rejected(format!(
                "unknown mode `{other}`, expected untargeted or targeted"
            ))),
        }
    }

    fn config(&self) -> Result<AttackConfig> {
        let (dss, aes) = parse_variant(&self.attack)?;
        let schedule = ScheduleKind::parse(&self.schedule)?;
        let config = AttackConfig {
            mode: self.mode()?,
            epsilon: self.epsilon,
            steps: self.steps,
            schedule,
            dss,
            aes,
            baseline_alpha: self.baseline_alpha,
            random_init: self.random_init,
            init_seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    fn load(&self) -> Result<(pgd_imp::Model, Dataset)> {
        Ok((load_model(&self.model)?, load_dataset(&self.data)?))
    }
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    opts: AttackOpts,
    /// Output directory for reports
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SchedulesArgs {
    /// Iteration budget
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Perturbation budget in pixel levels
    #[arg(long, default_value_t = 8.0)]
    epsilon: f64,
    /// Schedule for the plan printout (ignored in comparison mode)
    #[arg(long, default_value = "linear")]
    schedule: String,
    /// With --data: run the all-schedule comparison on this model
    #[arg(long)]
    model: Option<PathBuf>,
    /// Dataset directory for the comparison
    #[arg(long)]
    data: Option<PathBuf>,
    /// Plan mode: optional output file. Comparison mode: output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// untargeted | targeted (comparison mode)
    #[arg(long, default_value = "untargeted")]
    mode: String,
    /// Target class, required in targeted mode
    #[arg(long)]
    target: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    opts: AttackOpts,
    /// Output directory for sweep.csv
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated iteration budgets, e.g. 10,100,1000
    #[arg(long, default_value = "10,100,1000")]
    steps_list: String,
    /// Comma-separated perturbation budgets, e.g. 2,4,8
    #[arg(long, default_value = "2,4,8")]
    epsilon_list: String,
}

#[derive(Args)]
struct MetricsArgs {
    /// Reference image
    original: PathBuf,
    /// Image to compare against the reference
    modified: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        process::exit(e.exit_code() as i32);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(args) => gen_data(args),
        Command::Train(args) => train(args),
        Command::Attack(args) => attack(args),
        Command::Ablate(args) => ablate(args),
        Command::Schedules(args) => schedules(args),
        Command::Sweep(args) => sweep(args),
        Command::Metrics(args) => metrics(args),
    }
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let spec = ToyDatasetSpec {
        num_classes: args.classes,
        train_per_class: args.train_per_class,
        test_per_class: args.test_per_class,
        shape: (args.channels, args.height, args.width),
        noise_scale: args.noise,
        template_spread: args.spread,
        seed: args.seed,
        templates: None,
    };
    let data = generate_toy_dataset(&spec)?;
    let train = Dataset::from_batch(data.train);
    let test = Dataset::from_batch(data.test);
    save_dataset(&args.out.join("train"), &train)?;
    save_dataset(&args.out.join("test"), &test)?;
    println!(
        "wrote {} train and {} test images to {}",
        train.len(),
        test.len(),
        args.out.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let shape = dataset.batch.images[0].shape();
    let num_classes = dataset
        .batch
        .labels
        .iter()
        .max()
        .map(|&m| m + 1)
        .unwrap_or(0);
    if num_classes < 2 {
        return Err(Error::rejected("dataset must contain at least 2 classes"));
    }
    let arch = match args.arch.as_str() {
        "logistic" => ArchSpec::logistic(shape, num_classes),
        "mlp" => ArchSpec::mlp(shape, args.hidden, num_classes),
        "conv" => ArchSpec::conv(shape, args.conv_channels, args.kernel, num_classes),
        other => {
            return Err(Error::rejected(format!(
                "unknown architecture `{other}`, expected logistic, mlp, or conv"
            )))
        }
    };
    let params = TrainParams {
        epochs: args.epochs,
        learning_rate: args.lr,
        batch_size: args.batch_size,
        seed: args.seed,
    };
    let model = train_toy(&arch, &dataset.batch, &params)?;
    let acc = pgd_imp::accuracy(&model, &dataset.batch)?;
    save_model(&model, &args.out)?;
    println!(
        "trained {} model to {acc:.2}% train accuracy, saved to {}",
        args.arch,
        args.out.display()
    );
    Ok(())
}

fn attack(args: AttackArgs) -> Result<()> {
    let config = args.opts.config()?;
    let (model, dataset) = args.opts.load()?;
    let report = harness::run_attack(&model, &dataset, &config, &args.out)?;
    println!("{AGGREGATE_CSV_HEADER}");
    println!("{}", report.csv_row());
    Ok(())
}

fn ablate(args: AttackArgs) -> Result<()> {
    let config = args.opts.config()?;
    let (model, dataset) = args.opts.load()?;
    let rows = harness::run_ablation_table(&model, &dataset, &config, &args.out)?;
    println!("variant,{AGGREGATE_CSV_HEADER}");
    for (name, report) in rows {
        println!("{name},{}", report.csv_row());
    }
    Ok(())
}

fn schedules(args: SchedulesArgs) -> Result<()> {
    match (&args.model, &args.data) {
        (Some(model_path), Some(data_path)) => {
            let out = args
                .out
                .as_deref()
                .ok_or_else(|| Error::rejected("schedule comparison requires --out directory"))?;
            let mode = match (args.mode.as_str(), args.target) {
                ("untargeted", None) => AttackMode::Untargeted,
                ("targeted", Some(target)) => AttackMode::Targeted { target },
                ("targeted", None) => {
                    return Err(Error::rejected("targeted mode requires --target"))
                }
                (other, _) => return Err(Error::rejected(format!("unknown mode `{other}`"))),
            };
            let config = AttackConfig::new(mode, args.epsilon, args.steps, ScheduleKind::Linear);
            config.validate()?;
            let model = load_model(model_path)?;
            let dataset = load_dataset(data_path)?;
            let rows = harness::run_schedule_table(&model, &dataset, &config, out)?;
            println!("schedule,{AGGREGATE_CSV_HEADER}");
            for (name, report) in rows {
                println!("{name},{}", report.csv_row());
            }
        }
        (None, None) => {
            let kind = ScheduleKind::parse(&args.schedule)?;
            let plan = build_plan(kind, args.steps, args.epsilon)?;
            let csv = plan_to_csv(&plan);
            match &args.out {
                Some(path) => {
                    std::fs::write(path, &csv).map_err(|e| Error::io(path, e))?;
                    println!("wrote plan to {}", path.display());
                }
                None => print!("{csv}"),
            }
        }
        _ => {
            return Err(Error::rejected(
                "schedule comparison requires both --model and --data",
            ))
        }
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let config = args.opts.config()?;
    let (model, dataset) = args.opts.load()?;
    let steps_list = parse_list::<usize>(&args.steps_list, "steps-list")?;
    let epsilon_list = parse_list::<f64>(&args.epsilon_list, "epsilon-list")?;
    let rows = harness::run_sweep(
        &model,
        &dataset,
        &config,
        &steps_list,
        &epsilon_list,
        &args.out,
    )?;
    println!("steps,epsilon,{AGGREGATE_CSV_HEADER}");
    for row in rows {
        println!("{},{},{}", row.steps, row.epsilon, row.report.csv_row());
    }
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let original = load_image(&args.original)?;
    let modified = load_image(&args.modified)?;
    let m = pair_metrics(&original, &modified)?;
    let psnr = if m.psnr.is_finite() {
        format!("{:.6}", m.psnr)
    } else {
        "inf".to_string()
    };
    println!("linf,l2,psnr,ssim");
    println!("{:.6},{:.6},{},{:.6}", m.linf, m.l2, psnr, m.ssim);
    Ok(())
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    let mut values = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        values.push(
            part.parse::<T>()
                .map_err(|_| Error::rejected(format!("could not parse `{part}` in --{what}")))?,
        );
    }
    if values.is_empty() {
        return Err(Error::rejected(format!("--{what} is empty")));
    }
    Ok(values)
}
