//! `subann`: generate instances, build and query the index structures, run
//! the online structure, benchmark against the brute-force oracle and verify
//! structural invariants.
//!
//! Relative output paths are resolved against `SUBANN_OUT_DIR` when it is set.
//! Exit status is 0 on success, 1 when an enabled oracle check fails and 2 on
//! usage or input errors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use subspace_ann::ann_avd::{AvdIndex, DEFAULT_C2};
use subspace_ann::ann_const::{AnnIndex, ConstAnnIndex};
use subspace_ann::ann_eps::{EpsAnnIndex, DEFAULT_C1};
use subspace_ann::bench::{bench_index, bench_online, BenchReport, BuildInfo};
use subspace_ann::datagen::{generate, HeightDist, InstanceSpec, SubspaceKind};
use subspace_ann::io::{read_queries, write_jsonl, write_queries, InstanceFile};
use subspace_ann::metric::MetricInstance;
use subspace_ann::online_avd::OnlineAvd;
use subspace_ann::oracle;
use subspace_ann::wspd::build_wspd;

const OUT_DIR_ENV: &str = "SUBANN_OUT_DIR";
/// Largest instance accepted by the quadratic verifiers.
const VERIFY_LIMIT: usize = 5000;

#[derive(Parser)]
#[command(name = "subann", version, about = "Approximate nearest neighbors for queries on a low-dimensional subspace")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance and a query stream on its subspace
    Gen(GenArgs),
    /// Build an index and report its size and cost
    Build(BuildArgs),
    /// Answer a query stream with an index
    Query(QueryArgs),
    /// Answer a query stream with the online structure
    Online(OnlineArgs),
    /// Benchmark an index or the online structure on a query stream
    Bench(BenchArgs),
    /// Check oracle consistency and structural invariants
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum IndexKind {
    Const,
    Eps,
    Avd,
    Online,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Affine,
    Sphere,
    Segment,
    Polyline,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum What {
    Nn,
    Wspd,
    Net,
    Online,
}

#[derive(Args)]
struct GenArgs {
    /// Instance spec JSON; overrides the shape flags below
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "segment")]
    kind: Kind,
    #[arg(long, default_value_t = 20)]
    dim: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 500)]
    num_queries: usize,
    /// Flat dimension (affine) or span dimension (sphere)
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    extent: f64,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 2.0)]
    length: f64,
    #[arg(long, default_value_t = 10)]
    vertices: usize,
    #[arg(long, default_value_t = 0.0)]
    min_height: f64,
    #[arg(long, default_value_t = 1.0)]
    max_height: f64,
    #[arg(long, required_unless_present = "spec")]
    seed: Option<u64>,
    /// Output instance file
    #[arg(long, default_value = "instance.json")]
    instance: PathBuf,
    /// Output query stream
    #[arg(long, default_value = "queries.jsonl")]
    queries: PathBuf,
}

#[derive(Args, Clone)]
struct IndexArgs {
    #[arg(long, value_enum, default_value = "const")]
    index: IndexKind,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_C1)]
    c1: f64,
    #[arg(long, default_value_t = DEFAULT_C2)]
    c2: f64,
    /// Ratio checked by --oracle instead of the structure's guarantee
    #[arg(long)]
    bound: Option<f64>,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    index: IndexArgs,
    /// Write the index net tree as JSON
    #[arg(long)]
    dump_tree: Option<PathBuf>,
    /// Write AVD centers or eps reach points as JSON lines
    #[arg(long)]
    dump_centers: Option<PathBuf>,
    /// Write the build summary as JSON
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[command(flatten)]
    index: IndexArgs,
    /// Answers as JSON lines; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Check every answer against the exact nearest neighbor
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct OnlineArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    /// Start from previously saved regions
    #[arg(long)]
    load_regions: Option<PathBuf>,
    #[arg(long)]
    dump_regions: Option<PathBuf>,
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[command(flatten)]
    index: IndexArgs,
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    what: What,
    #[arg(long)]
    instance: PathBuf,
    /// Required for `nn` and `online`
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value_t = 8.0)]
    separation: f64,
    /// Net radii for `net`
    #[arg(long, default_value_t = 1.0)]
    outer: f64,
    #[arg(long, default_value_t = 0.1)]
    inner: f64,
    /// Net centers checked for `net`
    #[arg(long, default_value_t = 10)]
    centers: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let path = resolve(path);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_instance(path: &Path) -> Result<Arc<MetricInstance>> {
    let file = InstanceFile::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(file.to_instance()?)
}

fn load_queries(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    let queries = read_queries(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some((i, q)) = queries.iter().enumerate().find(|(_, q)| q.len() != dim) {
        bail!("query {i} has dimension {} but the instance has {dim}", q.len());
    }
    Ok(queries)
}

enum Built {
    Const(ConstAnnIndex),
    Eps(EpsAnnIndex),
    Avd(AvdIndex),
}

impl Built {
    fn index(&self) -> &dyn AnnIndex {
        match self {
            Built::Const(i) => i,
            Built::Eps(i) => i,
            Built::Avd(i) => i,
        }
    }

    fn tree_json(&self) -> serde_json::Value {
        match self {
            Built::Const(i) => i.tree().to_json(),
            Built::Eps(i) => i.tree().to_json(),
            Built::Avd(i) => i.tree().to_json(),
        }
    }

    fn stats(&self) -> serde_json::Value {
        match self {
            Built::Const(i) => serde_json::json!({ "tree_nodes": i.tree().nodes().len() }),
            Built::Eps(i) => serde_json::to_value(i.stats()).expect("serializable"),
            Built::Avd(i) => serde_json::to_value(i.stats()).expect("serializable"),
        }
    }
}

/// Guaranteed approximation factor of each structure.
fn bound(args: &IndexArgs) -> f64 {
    if let Some(b) = args.bound {
        return b;
    }
    match args.index {
        IndexKind::Const => 6.0,
        IndexKind::Eps | IndexKind::Online => 1.0 + args.eps,
        IndexKind::Avd => 1.0 + 5.0 * args.eps,
    }
}

fn check_bound(args: &IndexArgs) -> Result<()> {
    match args.bound {
        Some(b) if !(b >= 1.0) => bail!("--bound must be at least 1, got {b}"),
        _ => Ok(()),
    }
}

fn config(args: &IndexArgs) -> serde_json::Value {
    match args.index {
        IndexKind::Const => serde_json::json!({ "index": "const" }),
        IndexKind::Eps => serde_json::json!({ "index": "eps", "eps": args.eps, "c1": args.c1 }),
        IndexKind::Avd => serde_json::json!({ "index": "avd", "eps": args.eps, "c2": args.c2 }),
        IndexKind::Online => serde_json::json!({ "index": "online", "eps": args.eps }),
    }
}

fn build(inst: &Arc<MetricInstance>, args: &IndexArgs) -> Result<(Built, BuildInfo)> {
    let before = inst.evals();
    let start = Instant::now();
    let built = match args.index {
        IndexKind::Const => Built::Const(ConstAnnIndex::build(inst.clone())?),
        IndexKind::Eps => Built::Eps(EpsAnnIndex::build_with(inst.clone(), args.eps, args.c1)?),
        IndexKind::Avd => Built::Avd(AvdIndex::build_with(inst.clone(), args.eps, args.c2)?),
        IndexKind::Online => bail!("the online structure has no build step; use `subann online`"),
    };
    let info = BuildInfo {
        index: format!("{:?}", args.index).to_lowercase(),
        config: config(args),
        seconds: start.elapsed().as_secs_f64(),
        distance_evals: inst.evals() - before,
    };
    Ok((built, info))
}

fn cmd_gen(a: GenArgs) -> Result<bool> {
    let spec = match &a.spec {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_reader(BufReader::new(f))
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => InstanceSpec {
            ambient_dim: a.dim,
            n: a.n,
            queries: a.num_queries,
            subspace: match a.kind {
                Kind::Affine => SubspaceKind::Affine { k: a.k, extent: a.extent },
                Kind::Sphere => SubspaceKind::Sphere { k: a.k, radius: a.radius },
                Kind::Segment => SubspaceKind::Segment { length: a.length },
                Kind::Polyline => SubspaceKind::Polyline {
                    vertices: a.vertices,
                    length: a.length,
                },
            },
            heights: HeightDist {
                min: a.min_height,
                max: a.max_height,
            },
            seed: a.seed.expect("required without --spec"),
        },
    };
    let g = generate(&spec)?;
    for path in [&a.instance, &a.queries] {
        if let Some(parent) = resolve(path).parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
    }
    InstanceFile::from_generated(&g, Some(spec.clone())).write(&resolve(&a.instance))?;
    write_queries(&resolve(&a.queries), &g.queries)?;
    print_json(&serde_json::json!({
        "instance": resolve(&a.instance),
        "queries": resolve(&a.queries),
        "n": spec.n,
        "num_queries": g.queries.len(),
        "dim": spec.ambient_dim,
    }))?;
    Ok(true)
}

fn cmd_build(a: BuildArgs) -> Result<bool> {
    let inst = load_instance(&a.instance)?;
    let (built, info) = build(&inst, &a.index)?;
    if let Some(path) = &a.dump_tree {
        write_json(path, &built.tree_json())?;
    }
    if let Some(path) = &a.dump_centers {
        let w = create(path)?;
        match &built {
            Built::Avd(i) => write_jsonl(w, i.centers())?,
            Built::Eps(i) => write_jsonl(w, i.reach_points())?,
            Built::Const(_) => bail!("--dump-centers needs --index eps or avd"),
        }
    }
    let summary = serde_json::json!({ "build": info, "stats": built.stats(), "n": inst.len() });
    if let Some(path) = &a.report {
        write_json(path, &summary)?;
    }
    print_json(&summary)?;
    Ok(true)
}

#[derive(Serialize)]
struct AnswerRow {
    query: usize,
    id: usize,
    distance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratio: Option<f64>,
}

/// Writes the answers and returns whether every checked ratio is within `bound`.
fn emit_answers(
    inst: &MetricInstance,
    queries: &[Vec<f64>],
    answers: &[(usize, f64)],
    check: Option<f64>,
    out: Option<&Path>,
) -> Result<bool> {
    let mut ok = true;
    let rows: Vec<AnswerRow> = answers
        .iter()
        .enumerate()
        .map(|(i, &(id, distance))| {
            let exact = check.map(|_| oracle::exact_nn(inst, &queries[i]).1);
            if let (Some(b), Some(e)) = (check, exact) {
                ok &= oracle::ratio_ok(distance, e, b);
            }
            AnswerRow {
                query: i,
                id,
                distance,
                exact,
                ratio: exact.map(|e| oracle::ratio(distance, e)),
            }
        })
        .collect();
    match out {
        Some(path) => write_jsonl(create(path)?, &rows)?,
        None => write_jsonl(std::io::stdout().lock(), &rows)?,
    }
    if !ok {
        eprintln!("oracle check failed: some answer exceeds ratio {}", check.unwrap_or(0.0));
    }
    Ok(ok)
}

fn cmd_query(a: QueryArgs) -> Result<bool> {
    check_bound(&a.index)?;
    let inst = load_instance(&a.instance)?;
    let queries = load_queries(&a.queries, inst.dim())?;
    let (built, _) = build(&inst, &a.index)?;
    let answers: Vec<(usize, f64)> = queries
        .iter()
        .map(|q| {
            let ans = built.index().query(q);
            (ans.id, ans.distance)
        })
        .collect();
    let check = a.oracle.then(|| bound(&a.index));
    emit_answers(&inst, &queries, &answers, check, a.out.as_deref())
}

fn cmd_online(a: OnlineArgs) -> Result<bool> {
    let inst = load_instance(&a.instance)?;
    let queries = load_queries(&a.queries, inst.dim())?;
    let mut state = OnlineAvd::new(inst.clone(), a.eps)?;
    if let Some(path) = &a.load_regions {
        let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
        state.load_regions(BufReader::new(f))?;
    }
    let answers: Vec<(usize, f64)> = queries
        .iter()
        .map(|q| {
            let (id, _) = state.query(q);
            (id, inst.raw_distance(q, &inst.point(id).coords))
        })
        .collect();
    if let Some(path) = &a.dump_regions {
        let mut w = create(path)?;
        state.save_regions(&mut w)?;
        w.flush()?;
    }
    if let Some(path) = &a.stats {
        write_json(
            path,
            &serde_json::json!({
                "eps": a.eps,
                "diam_approx": state.diam_approx(),
                "regions": state.regions().len(),
                "cache_hit_rate": state.stats().cache_hit_rate(),
                "stats": state.stats(),
            }),
        )?;
    }
    let check = a.oracle.then_some(1.0 + a.eps);
    emit_answers(&inst, &queries, &answers, check, a.out.as_deref())
}

fn cmd_bench(a: BenchArgs) -> Result<bool> {
    check_bound(&a.index)?;
    let inst = load_instance(&a.instance)?;
    let queries = load_queries(&a.queries, inst.dim())?;
    let check = a.oracle.then(|| bound(&a.index));
    let report: BenchReport = if a.index.index == IndexKind::Online {
        let mut state = OnlineAvd::new(inst.clone(), a.index.eps)?;
        bench_online(&mut state, &queries, check).0
    } else {
        let (built, info) = build(&inst, &a.index)?;
        let mut report = bench_index(info, built.index(), &queries, check).0;
        report.config["stats"] = built.stats();
        report
    };
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    print_json(&report)?;
    Ok(report.oracle.as_ref().is_none_or(|o| o.pass))
}

#[derive(Serialize)]
struct VerifyReport {
    what: String,
    pass: bool,
    details: serde_json::Value,
}

fn require_small(inst: &MetricInstance) -> Result<()> {
    if inst.len() > VERIFY_LIMIT {
        bail!("verification is quadratic; instance has {} points (limit {VERIFY_LIMIT})", inst.len());
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    let inst = load_instance(&a.instance)?;
    let queries = |inst: &MetricInstance| -> Result<Vec<Vec<f64>>> {
        let Some(path) = &a.queries else {
            bail!("--queries is required for this check");
        };
        load_queries(path, inst.dim())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (pass, details) = match a.what {
        What::Nn => {
            let qs = queries(&inst)?;
            let disagreements = qs
                .iter()
                .filter(|q| oracle::exact_nn(&inst, q) != oracle::exact_nn_alt(&inst, q))
                .count();
            let axiom = inst.find_axiom_violation(a.samples, &mut rng);
            (
                disagreements == 0 && axiom.is_none(),
                serde_json::json!({
                    "queries": qs.len(),
                    "disagreements": disagreements,
                    "axiom_violation": axiom,
                }),
            )
        }
        What::Wspd => {
            require_small(&inst)?;
            let w = build_wspd(&inst, a.separation)?;
            let pairs: Vec<_> = w.pairs.iter().map(|p| (p.a_node, p.b_node)).collect();
            let report = oracle::verify_wspd(w.tree(), &pairs, a.separation);
            (report.ok, serde_json::to_value(&report)?)
        }
        What::Net => {
            let sub = inst.subspace().clone();
            let mut reports = Vec::new();
            let mut pass = true;
            for p in inst.points().iter().take(a.centers) {
                let center = inst.project(&p.coords);
                let net = inst.subspace_net(&center, a.outer, a.inner)?;
                let report = oracle::verify_net(
                    &net,
                    a.inner,
                    a.samples,
                    || sub.sample_ball(&center, a.outer, &mut rng),
                    |x, y| inst.raw_distance(x, y),
                );
                pass &= report.ok;
                reports.push(report);
            }
            (pass, serde_json::to_value(&reports)?)
        }
        What::Online => {
            require_small(&inst)?;
            let qs = queries(&inst)?;
            let mut state = OnlineAvd::new(inst.clone(), a.eps)?;
            let mut failures = 0;
            let mut worst: f64 = 1.0;
            for q in &qs {
                let (id, _) = state.query(q);
                let d = inst.raw_distance(q, &inst.point(id).coords);
                let e = oracle::exact_nn(&inst, q).1;
                worst = worst.max(oracle::ratio(d, e));
                if !oracle::ratio_ok(d, e, 1.0 + a.eps) {
                    failures += 1;
                }
            }
            let diam = oracle::exact_diameter(&inst);
            let approx = state.diam_approx();
            let diam_ok = approx <= diam && diam <= 2.0 * approx;
            (
                failures == 0 && diam_ok,
                serde_json::json!({
                    "queries": qs.len(),
                    "failures": failures,
                    "max_ratio": worst,
                    "diameter": diam,
                    "diam_approx": approx,
                    "diam_ok": diam_ok,
                    "regions": state.regions().len(),
                }),
            )
        }
    };
    let report = VerifyReport {
        what: format!("{:?}", a.what).to_lowercase(),
        pass,
        details,
    };
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    print_json(&report)?;
    Ok(pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Build(a) => cmd_build(a),
        Command::Query(a) => cmd_query(a),
        Command::Online(a) => cmd_online(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
