//! `binfm` command-line tool.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use binfm::dataio::{
    gen_circles, gen_moons, load_libsvm_with, save_libsvm, split_size, Dataset, LoadOptions,
};
use binfm::experiment::{
    bench_csv, bench_markdown, boundary_grid, cross_validate, evaluate, fit, repeated_split,
    BenchRow, Grid, HyperParams, Method,
};
use binfm::modelfile::SavedModel;
use binfm::packed::memory_report;
use binfm::{BinStrategy, Error, LossKind, Optimizer};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "binfm", version, about = "Binarized factorization machines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic circles or moons dataset in libsvm format.
    GenSynth(GenSynthArgs),
    /// Train a model and write it with its per-epoch loss log.
    Train(TrainArgs),
    /// Predict labels for a libsvm file.
    Predict(PredictArgs),
    /// Accuracy, prediction time and memory of a model on labelled data.
    Eval(EvalArgs),
    /// Score a 2-D lattice for decision-boundary plots.
    Boundary(BoundaryArgs),
    /// Repeated-split comparison of fm, sefm and binfm.
    Bench(BenchArgs),
    /// Parameter memory of FM, SEFM, DFM and the binarized FM.
    MemReport(MemReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SynthKind {
    Circles,
    Moons,
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct HpArgs {
    #[arg(long, default_value_t = 30)]
    bins: usize,
    #[arg(long = "bin-strategy", default_value = "quantile", value_parser = parse_strategy)]
    bin_strategy: BinStrategy,
    #[arg(long, default_value_t = 16)]
    rank: usize,
    /// Learning rate; defaults to 0.1 for binfm and 0.05 for fm/sefm.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    lambda1: f64,
    #[arg(long, default_value_t = 1e-4)]
    lambda2: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value = "logistic", value_parser = parse_loss)]
    loss: LossKind,
    #[arg(long, default_value = "adagrad", value_parser = parse_optimizer)]
    optimizer: Optimizer,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fix alpha = beta = 1.
    #[arg(long)]
    no_scaling: bool,
    /// Stop once an epoch improves training loss by less than this fraction.
    #[arg(long)]
    early_stop_tol: Option<f64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl HpArgs {
    fn for_method(&self, method: Method) -> HyperParams {
        HyperParams {
            bins: self.bins,
            strategy: self.bin_strategy,
            rank: self.rank,
            eta: self.eta.unwrap_or(method.default_eta()),
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            eps: self.eps,
            loss: self.loss,
            optimizer: self.optimizer,
            epochs: self.epochs,
            use_scaling: !self.no_scaling,
            seed: self.seed,
            tol: self.early_stop_tol,
            jobs: self.jobs,
            ..HyperParams::for_method(method)
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "binfm", value_parser = parse_method)]
    model: Method,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Loss CSV (epoch,loss); defaults to `<out>.loss.csv`.
    #[arg(long)]
    loss_log: Option<PathBuf>,
    /// Minimum input dimensionality (libsvm does not record trailing zeros).
    #[arg(long)]
    dim: Option<usize>,
    /// Select rank, bins and regularization by k-fold cross-validation.
    #[arg(long)]
    cv: Option<usize>,
    #[command(flatten)]
    hp: HpArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output file (one label per line); stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the decision score after each label.
    #[arg(long)]
    scores: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args, Debug)]
struct BoundaryArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    xmin: f64,
    #[arg(long, allow_hyphen_values = true)]
    xmax: f64,
    #[arg(long, allow_hyphen_values = true)]
    ymin: f64,
    #[arg(long, allow_hyphen_values = true)]
    ymax: f64,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// CSV output; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// libsvm dataset; repeatable.
    #[arg(long)]
    data: Vec<PathBuf>,
    /// Generated dataset; repeatable.
    #[arg(long, value_enum)]
    synth: Vec<SynthKind>,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    #[arg(long)]
    out_md: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[command(flatten)]
    hp: HpArgs,
}

#[derive(Args, Debug)]
struct MemReportArgs {
    /// Report for a saved model instead of explicit dimensions.
    #[arg(long, conflicts_with_all = ["d", "bins", "rank"])]
    model: Option<PathBuf>,
    #[arg(long)]
    d: Option<u64>,
    #[arg(long)]
    bins: Option<u64>,
    #[arg(long)]
    rank: Option<u64>,
    #[arg(long)]
    csv: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_strategy(s: &str) -> Result<BinStrategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_optimizer(s: &str) -> Result<Optimizer, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Boundary(a) => boundary(a),
        Command::Bench(a) => bench(a),
        Command::MemReport(a) => mem_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Divergence { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            let mut out = io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                }),
                _ => Ok(()),
            }
        }
    }
}

fn check_synth(n: usize, noise: f64) -> CmdResult {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(usage(format!("--n must be even and >= 2, got {n}")));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(usage(format!(
            "--noise must be finite and >= 0, got {noise}"
        )));
    }
    Ok(())
}

fn synth(kind: SynthKind, n: usize, noise: f64, seed: u64) -> Result<Dataset, Error> {
    match kind {
        SynthKind::Circles => gen_circles(n, noise, seed),
        SynthKind::Moons => gen_moons(n, noise, seed),
    }
}

fn gen_synth(a: GenSynthArgs) -> CmdResult {
    check_synth(a.n, a.noise)?;
    let ds = synth(a.kind, a.n, a.noise, a.seed)?;
    save_libsvm(&ds, &a.out)?;
    Ok(())
}

fn validate_hp(hp: &HpArgs, methods: &[Method]) -> CmdResult {
    for &m in methods {
        hp.for_method(m)
            .validate(m)
            .map_err(|e| usage(e.to_string()))?;
    }
    Ok(())
}

fn default_loss_log(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".loss.csv");
    PathBuf::from(s)
}

fn train(a: TrainArgs) -> CmdResult {
    validate_hp(&a.hp, &[a.model])?;
    if let Some(k) = a.cv {
        if k < 2 {
            return Err(usage("--cv needs at least 2 folds"));
        }
    }
    let loss_log = a
        .loss_log
        .clone()
        .unwrap_or_else(|| default_loss_log(&a.out));
    if loss_log == a.out {
        return Err(usage("--loss-log and --out must differ"));
    }

    let opts = LoadOptions {
        min_dim: a.dim.unwrap_or(0),
        labels: None,
    };
    let ds = load_libsvm_with(&a.data, &opts)?;
    let mut hp = a.hp.for_method(a.model);
    if let Some(k) = a.cv {
        let cv = cross_validate(a.model, &ds, &Grid::default(), k, &hp)?;
        eprintln!(
            "cv: rank {} bins {} lambda {} (mean accuracy {:.4})",
            cv.best.rank, cv.best.bins, cv.best.lambda1, cv.best_accuracy
        );
        hp = cv.best;
    }
    let report = fit(a.model, &ds, &hp)?;

    let mut log = String::from("epoch,loss\n");
    for (e, l) in report.epoch_losses.iter().enumerate() {
        writeln!(log, "{},{}", e + 1, l).unwrap();
    }
    report.model.save(&a.out)?;
    write_output(Some(&loss_log), &log)?;
    eprintln!(
        "trained {} on {} samples ({} classes) in {:.2}s; final loss {:.6}",
        a.model,
        ds.len(),
        ds.classes(),
        report.train_secs,
        report
            .epoch_losses
            .last()
            .copied()
            .unwrap_or(report.initial_loss)
    );
    Ok(())
}

fn load_for_model(model: &SavedModel, path: &Path, keep_labels: bool) -> Result<Dataset, Error> {
    let opts = LoadOptions {
        min_dim: model.input_dim(),
        labels: keep_labels.then(|| model.labels().to_vec()),
    };
    let ds = load_libsvm_with(path, &opts)?;
    if ds.dim() > model.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} has {} features, model expects {}",
            path.display(),
            ds.dim(),
            model.input_dim()
        )));
    }
    Ok(ds)
}

fn predict(a: PredictArgs) -> CmdResult {
    let model = SavedModel::load(&a.model)?;
    let ds = load_for_model(&model, &a.data, false)?;
    let mut out = String::new();
    for s in ds.samples() {
        let scores = model.scores(s)?;
        let c = binfm::ovr::decide(&scores, model.classes());
        let label = &model.labels()[c];
        if a.scores {
            let score = if model.classes() == 2 {
                scores[0]
            } else {
                scores[c]
            };
            writeln!(out, "{label} {score}").unwrap();
        } else {
            writeln!(out, "{label}").unwrap();
        }
    }
    write_output(a.out.as_deref(), &out)?;
    Ok(())
}

fn eval(a: EvalArgs) -> CmdResult {
    let model = SavedModel::load(&a.model)?;
    let ds = load_for_model(&model, &a.data, true)?;
    let ev = evaluate(&model, &ds)?;
    let file_bytes = fs::metadata(&a.model).map(|m| m.len()).unwrap_or(0);
    let mem = model.memory_report();
    let mut out = String::new();
    writeln!(
        out,
        "model: {} (d={}, b={}, m={}, heads={})",
        model.kind_name(),
        model.input_dim(),
        model.bins(),
        model.rank(),
        model.heads()
    )
    .unwrap();
    writeln!(
        out,
        "accuracy: {:.6} ({}/{})",
        ev.accuracy, ev.correct, ev.total
    )
    .unwrap();
    writeln!(
        out,
        "prediction time: {:.6} s total, {:.3} us per sample",
        ev.predict_secs,
        1e6 * ev.secs_per_sample()
    )
    .unwrap();
    write!(out, "{mem}").unwrap();
    let key = match model.kind_name() {
        "binfm" => "Binarized FM",
        "sefm" => "SEFM",
        _ => "FM",
    };
    if let Some(row) = mem.row(key) {
        writeln!(
            out,
            "this model: {} bits per head ({:.4}x FM); file {} bytes",
            row.bits, row.ratio, file_bytes
        )
        .unwrap();
    }
    write_output(None, &out)?;
    Ok(())
}

fn boundary(a: BoundaryArgs) -> CmdResult {
    if a.steps < 2 {
        return Err(usage("--steps must be >= 2"));
    }
    let finite = [a.xmin, a.xmax, a.ymin, a.ymax]
        .iter()
        .all(|v| v.is_finite());
    if !finite || a.xmin >= a.xmax || a.ymin >= a.ymax {
        return Err(usage("grid bounds must be finite with min < max"));
    }
    let model = SavedModel::load(&a.model)?;
    let points = boundary_grid(&model, (a.xmin, a.xmax), (a.ymin, a.ymax), a.steps)?;
    let mut out = String::from("x,y,score,label\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{}",
            p.x,
            p.y,
            p.score,
            model.labels()[p.class]
        )
        .unwrap();
    }
    write_output(a.out.as_deref(), &out)?;
    Ok(())
}

fn bench(a: BenchArgs) -> CmdResult {
    validate_hp(&a.hp, &Method::ALL)?;
    if a.data.is_empty() && a.synth.is_empty() {
        return Err(usage("give at least one --data or --synth dataset"));
    }
    if a.repeats == 0 {
        return Err(usage("--repeats must be >= 1"));
    }
    if !(a.train_frac > 0.0 && a.train_frac < 1.0) {
        return Err(usage("--train-frac must lie in (0, 1)"));
    }
    if !a.synth.is_empty() {
        check_synth(a.n, a.noise)?;
    }

    let mut datasets = Vec::new();
    for kind in &a.synth {
        let name = format!("{kind:?}").to_lowercase();
        datasets.push((name, synth(*kind, a.n, a.noise, a.hp.seed)?));
    }
    for path in &a.data {
        let name = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        datasets.push((name, load_libsvm_with(path, &LoadOptions::default())?));
    }

    let mut rows = Vec::new();
    for (name, ds) in &datasets {
        let test_len = ds.len() - split_size(ds.len(), a.train_frac);
        for method in Method::ALL {
            let hp = a.hp.for_method(method);
            let start = Instant::now();
            let runs = repeated_split(method, ds, &hp, a.repeats, a.train_frac, a.hp.seed)?;
            eprintln!(
                "{name}/{method}: {} runs in {:.1}s",
                runs.len(),
                start.elapsed().as_secs_f64()
            );
            rows.push(BenchRow::from_runs(
                name,
                method,
                &runs,
                ds.dim(),
                &hp,
                test_len,
            ));
        }
    }
    let md = bench_markdown(&rows);
    if let Some(p) = &a.out_md {
        write_output(Some(p), &md)?;
    }
    if let Some(p) = &a.out_csv {
        write_output(Some(p), &bench_csv(&rows))?;
    }
    write_output(None, &md)?;
    Ok(())
}

fn mem_report(a: MemReportArgs) -> CmdResult {
    let report = match &a.model {
        Some(path) => {
            let model = SavedModel::load(path)?;
            model.memory_report()
        }
        None => {
            let (Some(d), Some(b), Some(m)) = (a.d, a.bins, a.rank) else {
                return Err(usage("give --model, or all of --d, --bins and --rank"));
            };
            if d == 0 || b == 0 || m == 0 {
                return Err(usage("--d, --bins and --rank must be >= 1"));
            }
            memory_report(d, b, m)
        }
    };
    let text = if a.csv {
        report.to_csv()
    } else {
        report.to_string()
    };
    write_output(None, &text)?;
    Ok(())
}
