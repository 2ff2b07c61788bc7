use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gdgnn::bench::{self, BenchConfig, Method};
use gdgnn::config::{Task, TrainConfig};
use gdgnn::expressiveness::{self as ex, fixtures, SignatureVariant};
use gdgnn::geodesic::{bfs_distances, horizontal_geodesic, vertical_geodesic, TieBreak};
use gdgnn::gnn::ModelParams;
use gdgnn::io;
use gdgnn::pooling::{PoolConfig, Variant};
use gdgnn::train::{self, TrainData};
use gdgnn::{GdgnnError, Graph, GraphCollection};

#[derive(Parser)]
#[command(name = "gdgnn", version, about = "Geodesic graph neural networks")]
struct Cli {
    /// Worker threads for geodesic extraction (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// 1-WL color refinement of a graph.
    Wl {
        graph: String,
        #[arg(long, default_value_t = 100)]
        rounds: usize,
    },
    /// Horizontal and vertical geodesics of one node pair.
    Geodesic {
        graph: String,
        #[arg(long, num_args = 2, value_names = ["U", "V"], required = true)]
        pair: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        dmax: u32,
        /// `lex` or `random`; `random` draws ties with `--seed`.
        #[arg(long, default_value = "lex")]
        tie_break: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Canonical geodesic signature of a graph, or of one node.
    Signature {
        graph: String,
        #[arg(long, default_value_t = 3)]
        dmax: u32,
        #[arg(long, default_value = "vert")]
        variant: SignatureVariant,
        #[arg(long)]
        node: Option<usize>,
    },
    /// Whether geodesic signatures tell graphs apart (prints 1 or 0).
    Distinguish {
        /// Two graphs, or none with `--pairs`.
        graphs: Vec<String>,
        /// Collection file whose consecutive records form the pairs.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        dmax: u32,
        #[arg(long, default_value = "vert")]
        variant: SignatureVariant,
    },
    /// Train a model and report test metrics.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        opts: ModelArgs,
        /// Write the trained parameters here (plus `<out>.cfg`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write per-epoch metrics as CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Evaluate saved parameters on the test split they were trained for.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        opts: ModelArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Time amortized scoring against the per-query subgraph baseline.
    Bench {
        /// Edge-list file; a random graph is generated when absent.
        graph: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        nodes: usize,
        #[arg(long, default_value_t = 25_000)]
        edges: usize,
        #[arg(long, default_value_t = 1000)]
        queries: usize,
        /// `gdgnn`, `subgraph-baseline` or `both`.
        #[arg(long, default_value = "both")]
        method: String,
        #[arg(long, default_value_t = 3)]
        dmax: u32,
        #[arg(long, default_value = "vert")]
        variant: Variant,
        #[arg(long, default_value_t = 3)]
        layers: usize,
        #[arg(long, default_value_t = 32)]
        hidden: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a generated graph (edge list) or collection (JSON lines).
    Gen {
        /// regular, gnm, cycle, csl, csl-collection, shrikhande, rook,
        /// tri-square, hexagon, ring
        kind: String,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        r: usize,
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        skip: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Edge list (link and node tasks) or collection (graph task).
    #[arg(long)]
    data: Option<String>,
    /// Node labels, `node<TAB>label` per line (node task).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Directory holding cora.content and cora.cites.
    #[arg(long)]
    cora: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    /// `key=value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    dmax: Option<u32>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// `gcn` or `gin`.
    #[arg(long)]
    layer: Option<String>,
    /// Extra `key=value` settings.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

enum Failure {
    Usage(String),
    Data(String),
    /// stdout closed early, e.g. piped into `head`
    Closed,
}

impl From<GdgnnError> for Failure {
    fn from(e: GdgnnError) -> Self {
        match e {
            GdgnnError::InvalidParameter(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            Failure::Closed
        } else {
            Failure::Data(e.to_string())
        }
    }
}

type Res<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let mut out = std::io::stdout().lock();
    match run(cli.cmd, &mut out) {
        Ok(()) | Err(Failure::Closed) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

/// A built-in graph name or an edge-list path.
fn load_graph(spec: &str) -> Res<Graph> {
    let g = match spec {
        "shrikhande" => ex::shrikhande(),
        "rook" => ex::rook4x4(),
        "tri-square" => fixtures::triangle_and_square(),
        "hexagon" => fixtures::hexagon(),
        "ring" => fixtures::connector_ring(),
        _ => match spec.strip_prefix("csl:") {
            Some(skip) => {
                let skip = skip.parse().map_err(|_| Failure::Usage(format!("bad CSL skip '{skip}'")))?;
                ex::csl_graph(41, skip)?
            }
            None => io::read_edge_list(spec)?,
        },
    };
    Ok(g)
}

fn run(cmd: Cmd, out: &mut impl Write) -> Res<()> {
    match cmd {
        Cmd::Wl { graph, rounds } => {
            let g = load_graph(&graph)?;
            let p = ex::wl_refine(&g, rounds);
            writeln!(out, "classes\t{}", p.num_classes())?;
            writeln!(out, "rounds\t{}", p.rounds_to_stabilize)?;
            for (v, c) in p.colors.iter().enumerate() {
                writeln!(out, "{v}\t{c}")?;
            }
        }
        Cmd::Geodesic {
            graph,
            pair,
            dmax,
            tie_break,
            seed,
        } => {
            let g = load_graph(&graph)?;
            let (u, v) = (pair[0], pair[1]);
            for w in [u, v] {
                if w >= g.num_nodes() {
                    return Err(GdgnnError::NodeOutOfRange {
                        node: w,
                        num_nodes: g.num_nodes(),
                    }
                    .into());
                }
            }
            let policy = match tie_break.as_str() {
                "lex" => TieBreak::Lexicographic,
                "random" => TieBreak::SeededRandom(seed),
                other => return Err(Failure::Usage(format!("tie-break must be 'lex' or 'random', got '{other}'"))),
            };
            let (du, dv) = (bfs_distances(&g, u, dmax), bfs_distances(&g, v, dmax));
            let list = |xs: &[usize]| xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ");
            match horizontal_geodesic(&g, u, v, &dv, policy) {
                None => writeln!(out, "distance\tinf")?,
                Some(p) => {
                    writeln!(out, "distance\t{}", p.distance())?;
                    writeln!(out, "path\t{}", list(&p.path))?;
                }
            }
            if let Some(vg) = vertical_geodesic(&g, u, v, &du, &dv) {
                writeln!(out, "near_u\t{}", list(&vg.near_u))?;
                writeln!(out, "near_v\t{}", list(&vg.near_v))?;
                let degs: Vec<String> = vg.degrees.iter().map(|(w, d)| format!("{w}:{d}")).collect();
                writeln!(out, "degrees\t{}", degs.join(" "))?;
            }
        }
        Cmd::Signature {
            graph,
            dmax,
            variant,
            node,
        } => {
            let g = load_graph(&graph)?;
            let json = match node {
                Some(v) if v >= g.num_nodes() => {
                    return Err(GdgnnError::NodeOutOfRange {
                        node: v,
                        num_nodes: g.num_nodes(),
                    }
                    .into())
                }
                Some(v) => serde_json::to_string(&ex::node_signature(&g, v, dmax, variant)),
                None => serde_json::to_string(&ex::canonical_signature(&g, dmax, variant)),
            }
            .map_err(|e| Failure::Data(e.to_string()))?;
            writeln!(out, "{json}")?;
        }
        Cmd::Distinguish {
            graphs,
            pairs,
            dmax,
            variant,
        } => match (pairs, graphs.as_slice()) {
            (None, [a, b]) => {
                let bit = ex::distinguish_pair(&load_graph(a)?, &load_graph(b)?, dmax, variant);
                writeln!(out, "{}", u8::from(bit))?;
            }
            (Some(path), []) => {
                let c = io::read_collection(path)?;
                if c.len() % 2 != 0 {
                    return Err(Failure::Data(format!("{} graphs do not form pairs", c.len())));
                }
                for (i, p) in c.graphs.chunks(2).enumerate() {
                    let bit = ex::distinguish_pair(&p[0], &p[1], dmax, variant);
                    writeln!(out, "{i}\t{variant}\t{}", u8::from(bit))?;
                }
            }
            _ => return Err(Failure::Usage("give two graphs or --pairs FILE".into())),
        },
        Cmd::Train {
            data,
            opts,
            out: save,
            metrics,
        } => {
            let cfg = build_config(&opts)?;
            let loaded = load_data(&data, &cfg)?;
            let outcome = train::train(loaded.view(), &cfg)?;
            if let Some(path) = save {
                std::fs::write(&path, outcome.params.to_checkpoint())?;
                std::fs::write(config_path(&path), cfg.to_text())?;
            }
            if let Some(path) = metrics {
                outcome.log.write_csv(std::fs::File::create(path)?)?;
            }
            writeln!(out, "best_epoch\t{}", outcome.best_epoch)?;
            for (name, m) in [("valid", &outcome.valid), ("test", &outcome.test)] {
                for (k, v) in m.entries() {
                    writeln!(out, "{name}\t{k}\t{v:.6}")?;
                }
            }
        }
        Cmd::Eval { data, opts, checkpoint } => {
            let mut opts = opts;
            if opts.config.is_none() && config_path(&checkpoint).is_file() {
                opts.config = Some(config_path(&checkpoint));
            }
            let cfg = build_config(&opts)?;
            let params = ModelParams::from_checkpoint(&std::fs::read_to_string(&checkpoint)?)?;
            let loaded = load_data(&data, &cfg)?;
            let m = train::evaluate_test(loaded.view(), &cfg, &params)?;
            for (k, v) in m.entries() {
                writeln!(out, "test\t{k}\t{v:.6}")?;
            }
        }
        Cmd::Bench {
            graph,
            nodes,
            edges,
            queries,
            method,
            dmax,
            variant,
            layers,
            hidden,
            seed,
        } => {
            let g = match graph {
                Some(spec) => load_graph(&spec)?,
                None => bench::random_gnm(nodes, edges, seed)?,
            };
            let q = bench::disjoint_queries(g.num_nodes(), queries, seed.wrapping_add(1))?;
            let methods = match method.as_str() {
                "both" => vec![Method::Gdgnn, Method::SubgraphBaseline],
                m => vec![m.parse::<Method>()?],
            };
            let cfg = BenchConfig::new(PoolConfig::new(variant, dmax), layers, hidden, seed)?;
            writeln!(out, "{}", bench::CSV_HEADER)?;
            for m in methods {
                let r = bench::run_benchmark(&g, &q, m, &cfg)?;
                writeln!(out, "{}", bench::csv_row(&r))?;
            }
        }
        Cmd::Gen {
            kind,
            n,
            r,
            m,
            skip,
            seed,
            out: path,
        } => {
            let mut buf = Vec::new();
            if kind == "csl-collection" {
                let graphs = ex::CSL_SKIPS.iter().map(|&s| ex::csl_graph(41, s)).collect::<Result<Vec<_>, _>>()?;
                let labels = (0..graphs.len() as i64).map(gdgnn::graph::GraphLabel::Class).collect();
                io::write_collection(&GraphCollection::new(graphs, Some(labels))?, &mut buf)?;
            } else {
                let g = match kind.as_str() {
                    "regular" => ex::random_regular_graph(n, r, seed)?,
                    "gnm" => bench::random_gnm(n, m, seed)?,
                    "cycle" => Graph::build(n, (0..n).map(|i| (i, (i + 1) % n)), true)?,
                    "csl" => ex::csl_graph(n, skip)?,
                    other => load_builtin(other)?,
                };
                io::write_edge_list(&g, &mut buf)?;
            }
            match path {
                Some(p) => std::fs::write(p, buf)?,
                None => out.write_all(&buf)?,
            }
        }
    }
    Ok(())
}

fn load_builtin(name: &str) -> Res<Graph> {
    match name {
        "shrikhande" | "rook" | "tri-square" | "hexagon" | "ring" => load_graph(name),
        other => Err(Failure::Usage(format!("unknown generator '{other}'"))),
    }
}

fn config_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}

fn build_config(o: &ModelArgs) -> Res<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &o.config {
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
    }
    let flags = [
        ("task", o.task.clone()),
        ("dmax", o.dmax.map(|v| v.to_string())),
        ("variant", o.variant.clone()),
        ("seed", o.seed.map(|v| v.to_string())),
        ("epochs", o.epochs.map(|v| v.to_string())),
        ("lr", o.lr.map(|v| v.to_string())),
        ("layers", o.layers.map(|v| v.to_string())),
        ("hidden", o.hidden.map(|v| v.to_string())),
        ("layer", o.layer.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    for kv in &o.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

enum Loaded {
    Graph(Graph),
    Nodes(Graph, Vec<usize>),
    Collection(GraphCollection),
}

impl Loaded {
    fn view(&self) -> TrainData<'_> {
        match self {
            Loaded::Graph(g) => TrainData::Links(g),
            Loaded::Nodes(g, y) => TrainData::Nodes(g, y),
            Loaded::Collection(c) => TrainData::Graphs(c),
        }
    }
}

fn load_data(d: &DataArgs, cfg: &TrainConfig) -> Res<Loaded> {
    if let Some(dir) = &d.cora {
        let c = io::load_cora(dir)?;
        return Ok(match cfg.task {
            Task::Link => Loaded::Graph(c.graph),
            Task::Node => Loaded::Nodes(c.graph, c.labels),
            Task::Graph => return Err(Failure::Usage("Cora is a single graph; use task link or node".into())),
        });
    }
    let path = d.data.as_ref().ok_or_else(|| Failure::Usage("--data or --cora is required".into()))?;
    Ok(match cfg.task {
        Task::Link => Loaded::Graph(load_graph(path)?),
        Task::Node => {
            let g = load_graph(path)?;
            let lp = d.labels.as_ref().ok_or_else(|| Failure::Usage("node task needs --labels".into()))?;
            let y = io::read_node_labels(lp, g.num_nodes())?;
            Loaded::Nodes(g, y)
        }
        Task::Graph => Loaded::Collection(io::read_collection(path)?),
    })
}
