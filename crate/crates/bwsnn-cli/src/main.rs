//! Command-line front end: runs the cycle simulator, validates configs and
//! weight files, prices networks, sweeps design families, and generates
//! encoder streams and weight files.
//!
//! Machine-readable results go to stdout (or `--out`) as JSON with a schema
//! tag and no timestamps, so identical invocations produce identical bytes.
//! Diagnostics go to stderr. Exit codes: 0 success, 2 usage or config
//! errors, 3 unreadable or malformed files, 4 validation failures, 5
//! simulator/reference divergence under `--check`.

use anyhow::{anyhow, Context};
use bwsnn::codec::{classify, encode, EncoderMode, EncoderSpec, RealTensor};
use bwsnn::config::{parse_network, parse_sweep};
use bwsnn::costmodel::{latency_model, network_area, sweep, CostOptions, CostReport};
use bwsnn::inputs::{read_idx_image, read_real_tensor};
use bwsnn::netmodel::{validate, GraphDecl, NetworkGraph, NetworkTopology};
use bwsnn::oracle::{snn_forward_ref, SpikeTensor};
use bwsnn::random::random_kernels;
use bwsnn::systolic::{
    run_network_observed, CycleEventSink, CycleStats, LatencyPrediction, NoSink,
    RunOptions, SpikeVector,
};
use bwsnn::weights::{kernels_for, read_weight_file, write_weight_file, WeightRecord};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const EXIT_CONFIG: i32 = 2;
const EXIT_FILE: i32 = 3;
const EXIT_VALIDATION: i32 = 4;
const EXIT_DIVERGED: i32 = 5;

#[derive(Parser)]
#[command(
    name = "bwsnn",
    version,
    about = "Cycle simulator and cost model for a binary-weight spiking accelerator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a network on the cycle simulator and report counts and timing
    Simulate(SimulateArgs),
    /// Validate a network description and optionally a weight file
    Check(CheckArgs),
    /// Price a network: per-layer area, totals, optional latency
    Area(AreaArgs),
    /// Enumerate and price a whole design family
    Sweep(SweepArgs),
    /// Rate-encode an image into a spike stream
    Encode(EncodeArgs),
    /// Write a weight file with random binary kernels for a network
    Mkweights(MkweightsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Deterministic,
    Bernoulli,
}

impl From<ModeArg> for EncoderMode {
    fn from(mode: ModeArg) -> EncoderMode {
        match mode {
            ModeArg::Deterministic => EncoderMode::Deterministic,
            ModeArg::Bernoulli => EncoderMode::Bernoulli,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Network description (JSON)
    #[arg(long)]
    network: PathBuf,
    /// Weight file for the network
    #[arg(long)]
    weights: PathBuf,
    /// Input image: raw f32 tensor or an IDX archive (sniffed by magic)
    #[arg(long, conflicts_with = "zero_input")]
    input: Option<PathBuf>,
    /// Image index within an IDX archive
    #[arg(long, default_value_t = 0)]
    idx_index: usize,
    /// Stream an all-zero input instead of a file (timing studies)
    #[arg(long)]
    zero_input: bool,
    /// Time steps to encode and simulate
    #[arg(long)]
    steps: usize,
    /// How intensities become spikes
    #[arg(long, value_enum, default_value_t = ModeArg::Deterministic)]
    encoder: ModeArg,
    /// Seed for the stochastic encoder
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Crossbar accumulation latency in cycles
    #[arg(long, default_value_t = 1)]
    accum_delay: u32,
    /// Clock for wall-time figures
    #[arg(long, default_value_t = 100e6)]
    clock_hz: f64,
    /// Also run the reference evaluator and fail on any divergence
    #[arg(long)]
    check: bool,
    /// Write every fetched and emitted vector as CSV
    #[arg(long)]
    trace_csv: Option<PathBuf>,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Network description (JSON)
    #[arg(long)]
    network: PathBuf,
    /// Weight file to check against the network
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AreaArgs {
    /// Network description (JSON)
    #[arg(long)]
    network: PathBuf,
    /// Include a latency section for this many time steps
    #[arg(long)]
    steps: Option<usize>,
    /// Rescale totals to this process node (nm)
    #[arg(long)]
    node_nm: Option<f64>,
    /// Report whether the total fits this budget
    #[arg(long)]
    budget_mm2: Option<f64>,
    #[arg(long, default_value_t = 1)]
    accum_delay: u32,
    #[arg(long, default_value_t = 100e6)]
    clock_hz: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep family description (JSON)
    #[arg(long)]
    family: PathBuf,
    /// Mark candidates against this budget
    #[arg(long)]
    budget_mm2: Option<f64>,
    /// Emit CSV instead of JSON
    #[arg(long)]
    csv: bool,
    #[arg(long, default_value_t = 1)]
    accum_delay: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    /// Input image: raw f32 tensor or an IDX archive (sniffed by magic)
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    idx_index: usize,
    #[arg(long)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Deterministic)]
    encoder: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MkweightsArgs {
    /// Network description (JSON)
    #[arg(long)]
    network: PathBuf,
    /// Where to write the weight file
    #[arg(long)]
    out: PathBuf,
    /// Seed for the kernel signs
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// An error bound to the exit code it should produce.
struct Failure {
    code: i32,
    err: anyhow::Error,
}

trait WithCode<T> {
    fn code(self, code: i32) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: i32) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, err: e.into() })
    }
}

fn fail(code: i32, err: anyhow::Error) -> Failure {
    Failure { code, err }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate(args) => cmd_simulate(args),
        Cmd::Check(args) => cmd_check(args),
        Cmd::Area(args) => cmd_area(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Encode(args) => cmd_encode(args),
        Cmd::Mkweights(args) => cmd_mkweights(args),
    };
    if let Err(failure) = result {
        eprintln!("error: {:#}", failure.err);
        std::process::exit(failure.code);
    }
}

// ── Shared plumbing ──────────────────────────────────────────────────────────

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .code(EXIT_FILE)
}

fn load_network(path: &Path) -> Result<(GraphDecl, NetworkTopology), Failure> {
    let text = String::from_utf8(read_file(path)?)
        .with_context(|| format!("{} is not UTF-8", path.display()))
        .code(EXIT_FILE)?;
    let decl = parse_network(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .code(EXIT_CONFIG)?;
    let topo = NetworkTopology::from_decl(&decl)
        .with_context(|| format!("checking {}", path.display()))
        .code(EXIT_VALIDATION)?;
    Ok((decl, topo))
}

fn load_graph(network: &Path, weights: &Path) -> Result<NetworkGraph, Failure> {
    let (_, topo) = load_network(network)?;
    let records = read_weight_file(&mut read_file(weights)?.as_slice())
        .with_context(|| format!("reading {}", weights.display()))
        .code(EXIT_FILE)?;
    let kernels = kernels_for(&topo, records)
        .with_context(|| format!("matching {} to the network", weights.display()))
        .code(EXIT_VALIDATION)?;
    NetworkGraph::new(topo, kernels).code(EXIT_VALIDATION)
}

/// Loads an image as a real tensor: IDX archives by magic, raw otherwise.
fn load_image(path: &Path, idx_index: usize) -> Result<RealTensor, Failure> {
    let raw = read_file(path)?;
    let looks_idx = raw.len() >= 4 && raw[0] == 0 && raw[1] == 0 && raw[2] == 0x08;
    let result = if looks_idx {
        read_idx_image(&mut raw.as_slice(), idx_index)
    } else {
        read_real_tensor(&mut raw.as_slice())
    };
    result
        .with_context(|| format!("loading image from {}", path.display()))
        .code(EXIT_FILE)
}

/// Writes to `--out` atomically (write-then-rename), or to stdout. A closed
/// stdout (downstream `head` etc.) ends the process quietly.
fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), Failure> {
    match out {
        None => {
            use std::io::Write;
            let stdout = std::io::stdout();
            if let Err(e) = writeln!(stdout.lock(), "{content}") {
                if e.kind() == std::io::ErrorKind::BrokenPipe {
                    std::process::exit(0);
                }
                return Err(e).context("writing to stdout").code(EXIT_FILE);
            }
            Ok(())
        }
        Some(path) => atomic_write(path, content.as_bytes())
            .with_context(|| format!("writing {}", path.display()))
            .code(EXIT_FILE),
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).code(EXIT_FILE)
}

// ── simulate ─────────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct RunReport {
    schema: &'static str,
    class: usize,
    counts: Vec<u64>,
    stats: CycleStats,
    predicted: LatencyPrediction,
    /// True when the reference evaluator confirmed the run.
    checked: bool,
}

/// Collects fetch/emit events into CSV rows.
struct CsvSink {
    rows: String,
}

impl CsvSink {
    fn new() -> CsvSink {
        CsvSink { rows: String::from("cycle,layer,event,step,row,col,bits\n") }
    }

    fn push(&mut self, cycle: u64, layer: usize, event: &str, v: &SpikeVector) {
        let bits: String =
            v.bits.iter().map(|&b| if b != 0 { '1' } else { '0' }).collect();
        let _ = writeln!(
            self.rows,
            "{cycle},{layer},{event},{},{},{},{bits}",
            v.step, v.row, v.col
        );
    }
}

impl CycleEventSink for CsvSink {
    fn consumed(&mut self, cycle: u64, layer: usize, vector: &SpikeVector) {
        self.push(cycle, layer, "fetch", vector);
    }
    fn produced(&mut self, cycle: u64, layer: usize, vector: &SpikeVector) {
        self.push(cycle, layer, "emit", vector);
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    if args.steps == 0 {
        return Err(fail(EXIT_CONFIG, anyhow!("--steps must be at least 1")));
    }
    if args.input.is_none() && !args.zero_input {
        return Err(fail(
            EXIT_CONFIG,
            anyhow!("provide an --input image or pass --zero-input"),
        ));
    }
    let graph = load_graph(&args.network, &args.weights)?;
    let (c, h, w) = graph.topology.input_dims();

    let input: Vec<SpikeTensor> = match &args.input {
        None => vec![SpikeTensor::zeros(c, h, w); args.steps],
        Some(path) => {
            let image = load_image(path, args.idx_index)?;
            let spec = EncoderSpec {
                mode: args.encoder.into(),
                steps: args.steps,
                seed: args.seed,
            };
            encode(&image, &spec)
                .with_context(|| format!("encoding {}", path.display()))
                .code(EXIT_FILE)?
        }
    };

    let opts = RunOptions {
        accum_delay: args.accum_delay,
        record_trace: args.check,
        clock_hz: args.clock_hz,
    };
    let mut csv = args.trace_csv.as_ref().map(|_| CsvSink::new());
    let outcome = match csv.as_mut() {
        Some(sink) => run_network_observed(&graph, &input, &opts, sink),
        None => run_network_observed(&graph, &input, &opts, &mut NoSink),
    }
    .context("simulating")
    .code(EXIT_VALIDATION)?;

    if args.check {
        let expected = snn_forward_ref(&graph, &input)
            .context("reference evaluation")
            .code(EXIT_VALIDATION)?;
        if outcome.counts != expected.counts {
            return Err(fail(
                EXIT_DIVERGED,
                anyhow!(
                    "spike counts diverge: simulator {:?}, reference {:?}",
                    outcome.counts,
                    expected.counts
                ),
            ));
        }
        let trace = outcome.trace.as_ref().expect("trace recorded under --check");
        if *trace != expected.trace {
            let (layer, step) = first_divergence(trace, &expected.trace);
            return Err(fail(
                EXIT_DIVERGED,
                anyhow!("traces diverge first at layer {layer}, time step {step}"),
            ));
        }
    }

    if let (Some(path), Some(sink)) = (&args.trace_csv, csv) {
        atomic_write(path, sink.rows.as_bytes())
            .with_context(|| format!("writing {}", path.display()))
            .code(EXIT_FILE)?;
    }

    let report = RunReport {
        schema: "bwsnn-run-v1",
        class: classify(&outcome.counts).code(EXIT_VALIDATION)?,
        counts: outcome.counts,
        predicted: latency_model(
            &graph.topology,
            args.steps,
            &CostOptions {
                accum_delay: args.accum_delay,
                clock_hz: args.clock_hz,
                node_nm: None,
            },
        ),
        stats: outcome.stats,
        checked: args.check,
    };
    emit(&args.out, &to_json(&report)?)
}

fn first_divergence(
    got: &[Vec<SpikeTensor>],
    expected: &[Vec<SpikeTensor>],
) -> (usize, usize) {
    for (layer, (a, b)) in got.iter().zip(expected).enumerate() {
        for (step, (x, y)) in a.iter().zip(b).enumerate() {
            if x != y {
                return (layer, step);
            }
        }
    }
    (0, 0)
}

// ── check ────────────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct CheckReport {
    schema: &'static str,
    ok: bool,
    layers: usize,
    terminal: usize,
    weights_checked: bool,
    violations: Vec<String>,
}

fn cmd_check(args: CheckArgs) -> Result<(), Failure> {
    let (_, topo) = load_network(&args.network)?;
    let mut report = CheckReport {
        schema: "bwsnn-check-v1",
        ok: true,
        layers: topo.layer_count(),
        terminal: topo.terminal,
        weights_checked: args.weights.is_some(),
        violations: Vec::new(),
    };
    if let Some(weights) = &args.weights {
        let records = read_weight_file(&mut read_file(weights)?.as_slice())
            .with_context(|| format!("reading {}", weights.display()))
            .code(EXIT_FILE)?;
        let kernels = kernels_for(&topo, records)
            .with_context(|| format!("matching {} to the network", weights.display()))
            .code(EXIT_VALIDATION)?;
        let graph = NetworkGraph::new(topo, kernels).code(EXIT_VALIDATION)?;
        report.violations =
            validate(&graph).iter().map(|v| v.to_string()).collect();
        report.ok = report.violations.is_empty();
    }
    for violation in &report.violations {
        eprintln!("violation: {violation}");
    }
    let ok = report.ok;
    emit(&args.out, &to_json(&report)?)?;
    if ok {
        Ok(())
    } else {
        Err(fail(EXIT_VALIDATION, anyhow!("network failed validation")))
    }
}

// ── area ─────────────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct AreaReport {
    schema: &'static str,
    #[serde(flatten)]
    report: CostReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    fits_budget: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    latency: Option<LatencyPrediction>,
}

fn cmd_area(args: AreaArgs) -> Result<(), Failure> {
    let (_, topo) = load_network(&args.network)?;
    let opts = CostOptions {
        accum_delay: args.accum_delay,
        clock_hz: args.clock_hz,
        node_nm: args.node_nm,
    };
    let report = network_area(&topo, &opts);
    let fits_budget = args.budget_mm2.map(|budget| report.total_mm2 <= budget);
    let latency = args.steps.map(|steps| latency_model(&topo, steps, &opts));
    let full =
        AreaReport { schema: "bwsnn-area-v1", report, fits_budget, latency };
    emit(&args.out, &to_json(&full)?)
}

// ── sweep ────────────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct SweepReport {
    schema: &'static str,
    entries: Vec<bwsnn::costmodel::SweepEntry>,
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let text = String::from_utf8(read_file(&args.family)?)
        .with_context(|| format!("{} is not UTF-8", args.family.display()))
        .code(EXIT_FILE)?;
    let family = parse_sweep(&text)
        .with_context(|| format!("parsing {}", args.family.display()))
        .code(EXIT_CONFIG)?;
    let budget_um2 = args.budget_mm2.map(|mm2| (mm2 * 1e6) as u64);
    let opts = CostOptions { accum_delay: args.accum_delay, ..Default::default() };
    let entries = sweep(&family, budget_um2, &opts)
        .context("enumerating the family")
        .code(EXIT_VALIDATION)?;
    if args.csv {
        let mut out = String::from(
            "label,depth,hidden_channels,total_um2,total_mm2,\
             input_cycles_per_step,pipeline_fill_cycles,fits_budget\n",
        );
        for e in &entries {
            let fits = e
                .fits_budget
                .map(|b| b.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{fits}",
                e.label,
                e.depth,
                e.hidden_channels,
                e.total_um2,
                e.total_mm2,
                e.input_cycles_per_step,
                e.pipeline_fill_cycles
            );
        }
        emit(&args.out, out.trim_end())
    } else {
        emit(&args.out, &to_json(&SweepReport { schema: "bwsnn-sweep-result-v1", entries })?)
    }
}

// ── encode ───────────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct SpikeStream {
    schema: &'static str,
    channels: usize,
    height: usize,
    width: usize,
    steps: Vec<SpikeTensor>,
}

fn cmd_encode(args: EncodeArgs) -> Result<(), Failure> {
    let image = load_image(&args.input, args.idx_index)?;
    let spec = EncoderSpec {
        mode: args.encoder.into(),
        steps: args.steps,
        seed: args.seed,
    };
    let steps = encode(&image, &spec)
        .with_context(|| format!("encoding {}", args.input.display()))
        .code(EXIT_FILE)?;
    let (channels, height, width) = image.dims();
    let stream =
        SpikeStream { schema: "bwsnn-spikes-v1", channels, height, width, steps };
    emit(&args.out, &to_json(&stream)?)
}

// ── mkweights ────────────────────────────────────────────────────────────────

fn cmd_mkweights(args: MkweightsArgs) -> Result<(), Failure> {
    let (_, topo) = load_network(&args.network)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let kernels = random_kernels(&mut rng, &topo);
    let records: Vec<WeightRecord> = topo
        .layers
        .iter()
        .zip(kernels)
        .map(|(node, set)| WeightRecord { kind: node.kind, kernels: set })
        .collect();
    let mut bytes = Vec::new();
    write_weight_file(&mut bytes, &records)
        .context("building the weight file")
        .code(EXIT_FILE)?;
    atomic_write(&args.out, &bytes)
        .with_context(|| format!("writing {}", args.out.display()))
        .code(EXIT_FILE)?;
    eprintln!(
        "wrote {} layers ({} bytes) to {}",
        records.len(),
        bytes.len(),
        args.out.display()
    );
    Ok(())
}
