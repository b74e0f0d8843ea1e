//! `nilsoliton`: build, inspect, flow and certify two-step nilpotent structure tensors.
//!
//! JSON goes to `-o FILE` (with a `FILE.meta.json` sidecar holding the timestamp)
//! or to stdout with `--json`; otherwise stdout gets a short human summary.
//! Exit codes: 0 success, 1 contract error, 2 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use nilsoliton::certification::{non_einstein_certificate, CertifyOptions, Certificate};
use nilsoliton::constructions::{build_family, standard_blocks, FamilySpec, StandardBlock};
use nilsoliton::flow::{flow_to_distinguished, scan_generic, FlowOptions, ScanSummary};
use nilsoliton::indecomposability::{common_kernel, decomposition_search, structural_criteria_with, SearchOptions};
use nilsoliton::io::{read_tensor, tensor_json, tensor_value, write_text};
use nilsoliton::moduli::{generic_moduli_dim, non_einstein_region, region_table, ModuliSource};
use nilsoliton::{distinguished_report, moment, Error, StructureTensor};

const DEFAULT_SEED: u64 = 0x5eed_cafe;

#[derive(Parser)]
#[command(name = "nilsoliton", version, about = "Nilsoliton tools for two-step nilpotent Lie algebras")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Write JSON here (a `.meta.json` sidecar records the run time).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Print JSON on stdout instead of the summary.
    #[arg(long)]
    json: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum FamilyName {
    Heisenberg,
    Soliton,
    BBlocks,
    NonEinstein,
    J9,
    MinimalD,
    Block,
}

#[derive(Args, Clone, Default)]
struct FamilyArgs {
    /// Family to build or to certify against.
    #[arg(long, value_enum)]
    family: Option<FamilyName>,
    /// Family spec as a JSON file (overrides the other family flags).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    j: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// Comma-separated parameters t₁,…,tₙ.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    t: Option<Vec<f64>>,
    /// Block name for `--family block` (J, B1..B6, JK_pair, Soliton23, HeisenbergJ(k)).
    #[arg(long)]
    block: Option<String>,
    /// q for `--family minimal-d`.
    #[arg(long)]
    q: Option<usize>,
    /// p for `--family minimal-d`.
    #[arg(long)]
    p: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a tensor from a named family.
    Build {
        #[command(flatten)]
        family: FamilyArgs,
        /// Output tensor file (stdout if absent).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Moment map, r and residual of a tensor.
    Moment {
        input: PathBuf,
        #[arg(long, default_value_t = nilsoliton::moment::DEFAULT_DISTINGUISHED_TOL)]
        tol: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Gradient flow of ‖m‖² on the sphere.
    Flow {
        input: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 200_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 0)]
        record_every: usize,
        /// Write the final tensor here.
        #[arg(long)]
        final_tensor: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Non-Einstein certificate for a family tensor.
    Certify {
        input: PathBuf,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long, default_value_t = 32)]
        starts: usize,
        #[arg(long, default_value_t = 1e-4)]
        floor: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Indecomposability criteria and an optional splitting search.
    Indecomp {
        input: PathBuf,
        #[command(flatten)]
        family: FamilyArgs,
        /// Also search for an explicit splitting.
        #[arg(long)]
        search: bool,
        #[arg(long, default_value_t = 4)]
        max_p: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Generic moduli dimensions and the type classification table.
    Moduli {
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        q: Option<usize>,
        /// Emit the classification table as CSV.
        #[arg(long)]
        table: bool,
        #[arg(long, default_value_t = 20)]
        qmax: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Flow many random tensors of one type.
    Scan {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        q: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 200_000)]
        max_iter: usize,
        /// Residual histogram as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Summary of a tensor file.
    Show {
        input: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_io() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn contract(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

type CliResult<T> = Result<T, Failure>;

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("NILSOLITON_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| contract(format!("NILSOLITON_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| contract(e.to_string()))
}

fn load(path: &Path) -> CliResult<StructureTensor> {
    let c = read_tensor(path)?;
    if c.correction() > 0.0 {
        eprintln!("note: input was not exactly skew; projected (correction {:e})", c.correction());
    }
    Ok(c)
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values always serialize") + "\n"
}

fn write_sidecar(path: &Path) -> CliResult<()> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = json!({
        "generated_unix": secs,
        "version": env!("CARGO_PKG_VERSION"),
        "args": std::env::args().skip(1).collect::<Vec<_>>(),
    });
    let mut side = path.as_os_str().to_owned();
    side.push(".meta.json");
    Ok(write_text(Path::new(&side), &pretty(&meta))?)
}

fn emit(out: &OutArgs, payload: &Value, summary: &str) -> CliResult<()> {
    if let Some(path) = &out.output {
        write_text(path, &pretty(payload))?;
        write_sidecar(path)?;
    }
    if out.json {
        print!("{}", pretty(payload));
    } else {
        print!("{summary}");
    }
    Ok(())
}

fn family_spec(args: &FamilyArgs) -> CliResult<Option<FamilySpec>> {
    if let Some(path) = &args.spec {
        let text = std::fs::read_to_string(path).map_err(|e| Failure {
            code: 2,
            message: format!("cannot access {}: {e}", path.display()),
        })?;
        let spec: FamilySpec = serde_json::from_str(&text).map_err(|e| contract(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        return Ok(Some(spec));
    }
    let need = |v: Option<usize>, name: &str| v.ok_or_else(|| contract(format!("--{name} is required for this family")));
    let family = match args.family {
        Some(f) => f,
        None if args.j.is_some() || args.k.is_some() || args.n.is_some() => FamilyName::NonEinstein,
        None => return Ok(None),
    };
    let spec = match family {
        FamilyName::Heisenberg => FamilySpec::heisenberg(need(args.k, "k")?),
        FamilyName::Soliton => FamilySpec::soliton(),
        FamilyName::BBlocks => FamilySpec::b_blocks(need(args.j, "j")?),
        FamilyName::NonEinstein => {
            let mut s = FamilySpec::non_einstein(need(args.j, "j")?, need(args.k, "k")?, need(args.n, "n")?, args.d.unwrap_or(0));
            if let Some(t) = &args.t {
                s = s.with_t(t.clone());
            }
            s
        }
        FamilyName::J9 => FamilySpec::j9(need(args.j, "j")?),
        FamilyName::MinimalD => FamilySpec::minimal_d(need(args.q, "q")?, need(args.p, "p")?),
        FamilyName::Block => return Ok(None),
    };
    spec.validate()?;
    Ok(Some(spec))
}

fn build(args: &FamilyArgs, output: Option<&Path>) -> CliResult<()> {
    let tensor = match (args.family, &args.spec) {
        (Some(FamilyName::Block), None) => {
            let name = args.block.as_deref().ok_or_else(|| contract("--block is required for --family block"))?;
            let block: StandardBlock = name.parse()?;
            standard_blocks(block)?.with_labels(Some(json!({ "block": block.to_string() })))
        }
        _ => {
            let spec = family_spec(args)?.ok_or_else(|| contract("build needs --family or --spec"))?;
            let labels = serde_json::to_value(&spec).map_err(|e| contract(e.to_string()))?;
            build_family(&spec)?.with_labels(Some(json!({ "family": labels })))
        }
    };
    let text = tensor_json(&tensor) + "\n";
    match output {
        Some(path) => {
            write_text(path, &text)?;
            write_sidecar(path)?;
            println!("wrote type ({}, {}) tensor to {}", tensor.p(), tensor.q(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn matrix_rows(m: &nilsoliton::linalg::Mat) -> Vec<Vec<f64>> {
    nilsoliton::linalg::rows_of(m)
}

fn run_moment(input: &Path, tol: f64, out: &OutArgs) -> CliResult<()> {
    if !(tol > 0.0) {
        return Err(contract("--tol must be positive"));
    }
    let c = load(input)?;
    let m = moment(&c);
    let rep = distinguished_report(&c)?;
    let payload = json!({
        "p": c.p(),
        "q": c.q(),
        "m1": matrix_rows(&m.m1),
        "m2": matrix_rows(&m.m2),
        "report": rep,
        "distinguished": rep.is_distinguished(tol),
        "skew_correction": c.correction(),
    });
    let summary = format!(
        "type ({}, {})\nr = {}\nresidual = {:e}\ndistinguished = {}\n",
        c.p(),
        c.q(),
        rep.r,
        rep.residual,
        rep.is_distinguished(tol)
    );
    emit(out, &payload, &summary)
}

fn flow_options(tol: f64, max_iter: usize, record_every: usize) -> CliResult<FlowOptions> {
    if !(tol > 0.0) {
        return Err(contract("--tol must be positive"));
    }
    Ok(FlowOptions {
        tol,
        max_iter,
        record_every,
        ..FlowOptions::default()
    })
}

fn run_flow(input: &Path, opts: FlowOptions, final_tensor: Option<&Path>, out: &OutArgs) -> CliResult<()> {
    let c = load(input)?;
    let res = flow_to_distinguished(&c, &opts)?;
    if let Some(path) = final_tensor {
        write_text(path, &(tensor_json(&res.final_tensor) + "\n"))?;
    }
    let payload = json!({
        "status": res.status,
        "residual": res.residual,
        "r": res.r,
        "iterations": res.iterations,
        "min_rank_sigma": res.min_rank_sigma,
        "objective": res.objective,
        "stalled": res.stalled,
        "monotone": res.monotone,
        "trajectory": res.trajectory,
        "final_tensor": tensor_value(&res.final_tensor),
    });
    let summary = format!(
        "status = {:?}\nresidual = {:e}\niterations = {}\nmin_rank_sigma = {:e}\n",
        res.status, res.residual, res.iterations, res.min_rank_sigma
    );
    emit(out, &payload, &summary)
}

fn condition_table(cert: &Certificate) -> String {
    let mut s = format!("verdict: {:?}\n", cert.verdict);
    let width = cert.conditions.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &cert.conditions {
        let mark = if c.satisfied { "ok" } else { "--" };
        s.push_str(&format!("  [{mark}] {:<width$}  {:e}", c.name, c.value));
        if let Some(d) = &c.detail {
            s.push_str(&format!("  ({d})"));
        }
        s.push('\n');
    }
    for n in &cert.notes {
        s.push_str(&format!("  note: {n}\n"));
    }
    s
}

fn check_family(c: &StructureTensor, spec: &FamilySpec) -> CliResult<()> {
    let built = build_family(spec)?;
    match built.max_abs_diff(c) {
        Some(d) if d <= 1e-12 * (1.0 + c.norm()) => Ok(()),
        Some(d) => Err(contract(format!("tensor differs from the named family by {d:e}"))),
        None => Err(contract(format!(
            "tensor has type ({}, {}) but the family has type ({}, {})",
            c.p(),
            c.q(),
            built.p(),
            built.q()
        ))),
    }
}

fn run_certify(input: &Path, family: &FamilyArgs, opts: CertifyOptions, out: &OutArgs) -> CliResult<()> {
    let c = load(input)?;
    let spec = family_spec(family)?.ok_or_else(|| contract("certify needs family parameters (--j --k --n or --spec)"))?;
    check_family(&c, &spec)?;
    let cert = non_einstein_certificate(&spec, &opts)?;
    let payload = serde_json::to_value(&cert).map_err(|e| contract(e.to_string()))?;
    emit(out, &payload, &condition_table(&cert))
}

fn run_indecomp(input: &Path, family: &FamilyArgs, search: Option<SearchOptions>, out: &OutArgs) -> CliResult<()> {
    let c = load(input)?;
    let spec = family_spec(family)?;
    let cert = structural_criteria_with(&c, spec.as_ref(), &CertifyOptions::default());
    let mut summary = condition_table(&cert);
    let mut payload = json!({ "certificate": cert });
    if let Some(opts) = search {
        if common_kernel(&c).ncols() > 0 {
            summary.push_str("search: skipped, the tensor has a common kernel\n");
            payload["decomposition"] = Value::Null;
        } else {
            let found = decomposition_search(&c, &opts)?;
            summary.push_str(&match &found {
                Some(d) => format!("search: split with dim V1 = {}, dim V2 = {}\n", d.v1.ncols(), d.v2.ncols()),
                None => "search: no splitting found\n".into(),
            });
            payload["decomposition"] = serde_json::to_value(&found).map_err(|e| contract(e.to_string()))?;
        }
    }
    emit(out, &payload, &summary)
}

fn run_moduli(p: Option<usize>, q: Option<usize>, table: bool, qmax: usize, out: &OutArgs) -> CliResult<()> {
    if table {
        let rows = region_table(qmax)?;
        let mut csv = String::from("p,q,label,moduli_dim,region_bound,source\n");
        for r in &rows {
            let dim = generic_moduli_dim(r.p, r.q)?.dim;
            let region = non_einstein_region(r.p, r.q);
            let bound = if region.in_region {
                format!("{:.16e}", region.moduli_lower_bound)
            } else {
                String::new()
            };
            csv.push_str(&format!("{},{},{:?},{},{},\"{}\"\n", r.p, r.q, r.label, dim, bound, r.source));
        }
        return match &out.output {
            Some(path) => {
                write_text(path, &csv)?;
                println!("wrote {} rows to {}", rows.len(), path.display());
                Ok(())
            }
            None => {
                print!("{csv}");
                Ok(())
            }
        };
    }
    let (Some(p), Some(q)) = (p, q) else {
        return Err(contract("moduli needs --p and --q, or --table"));
    };
    let entry = generic_moduli_dim(p, q)?;
    let region = non_einstein_region(p, q);
    let payload = json!({ "entry": entry, "region": region });
    let source = match entry.source {
        ModuliSource::TableRow => "",
        ModuliSource::Dual => " (dual type)",
        ModuliSource::Formula if entry.clamped => " (formula, clamped at 0)",
        ModuliSource::Formula => " (formula)",
    };
    emit(out, &payload, &format!("{}{source}\n", entry.dim))
}

fn histogram_csv(s: &ScanSummary) -> String {
    let mut csv = String::from("lo,hi,count\n");
    for b in &s.histogram {
        csv.push_str(&format!("{:.16e},{:.16e},{}\n", b.lo, b.hi, b.count));
    }
    csv
}

fn run_scan(p: usize, q: usize, trials: usize, seed: u64, opts: FlowOptions, csv: Option<&Path>, out: &OutArgs) -> CliResult<()> {
    let s = scan_generic(p, q, trials, seed, &opts)?;
    if let Some(path) = csv {
        write_text(path, &histogram_csv(&s))?;
    }
    let payload = serde_json::to_value(&s).map_err(|e| contract(e.to_string()))?;
    let summary = format!(
        "type ({p}, {q}), {trials} trials\ndistinguished = {} ({:.3})\ndegenerated = {}\nmax_iterations = {}\n",
        s.distinguished, s.fraction_distinguished, s.degenerated, s.max_iterations
    );
    emit(out, &payload, &summary)
}

fn run_show(input: &Path, out: &OutArgs) -> CliResult<()> {
    let c = load(input)?;
    let kernel = common_kernel(&c).ncols();
    let typed = c.is_type_pq(nilsoliton::tensor::DEFAULT_RANK_TOL);
    let norms: Vec<f64> = c.mats().iter().map(nilsoliton::linalg::frob_norm).collect();
    let payload = json!({
        "p": c.p(),
        "q": c.q(),
        "norm": c.norm(),
        "component_norms": norms,
        "components_independent": typed,
        "common_kernel_dim": kernel,
        "skew_correction": c.correction(),
        "labels": c.labels(),
    });
    let summary = format!(
        "type ({}, {})\nnorm = {}\ncomponents independent = {typed}\ncommon kernel dim = {kernel}\nskew correction = {:e}\n",
        c.p(),
        c.q(),
        c.norm(),
        c.correction()
    );
    emit(out, &payload, &summary)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Build { family, output } => build(&family, output.as_deref()),
        Command::Moment { input, tol, out } => run_moment(&input, tol, &out),
        Command::Flow {
            input,
            tol,
            max_iter,
            record_every,
            final_tensor,
            out,
        } => run_flow(&input, flow_options(tol, max_iter, record_every)?, final_tensor.as_deref(), &out),
        Command::Certify {
            input,
            family,
            seed,
            samples,
            starts,
            floor,
            out,
        } => {
            if samples == 0 || starts == 0 || !(floor > 0.0) {
                return Err(contract("--samples and --starts must be positive and --floor > 0"));
            }
            let opts = CertifyOptions { samples, starts, floor, seed };
            run_certify(&input, &family, opts, &out)
        }
        Command::Indecomp {
            input,
            family,
            search,
            max_p,
            seed,
            out,
        } => {
            let opts = search.then(|| SearchOptions {
                max_p,
                seed,
                ..SearchOptions::default()
            });
            run_indecomp(&input, &family, opts, &out)
        }
        Command::Moduli { p, q, table, qmax, out } => run_moduli(p, q, table, qmax, &out),
        Command::Scan {
            p,
            q,
            trials,
            seed,
            tol,
            max_iter,
            csv,
            out,
        } => run_scan(p, q, trials, seed, flow_options(tol, max_iter, 0)?, csv.as_deref(), &out),
        Command::Show { input, out } => run_show(&input, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
