//! Batch experiment runner.
//!
//! Every subcommand takes its parameters as flags; `--config FILE` supplies defaults from a flat
//! `key = value` file (keys are flag names without the dashes) and explicit flags override it.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::distributions::OffspringDistribution;
use crate::error::{Error, Result};
use crate::exact;
use crate::graph::{
    build_line_family, read_half_edge_graph, read_rooted_graph, sample_config_model, sample_egw, sample_gw, sample_gwc1, sample_gwc2, write_half_edge_graph,
    write_rooted_graph, LineVariant, SizeCap,
};
use crate::recursion::{fmt12, line_panel, run_sweep, summarize, tree_panel, RecursionReport, SWEEP_LAMBDAS, SWEEP_LEVELS};
use crate::seed::derive_seed;
use crate::sim::{excursion_time, survival_time, EventTimeline, SimGraph, SimParams};
use crate::stats;
use crate::threshold::{
    default_depth, estimate_lambda1, good_vertex_scan, single_seed_survival, survival_time_scaling, tail_probe_s, GoodVertexParams, Proxy, ThresholdConfig,
    DEFAULT_P_STAR,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "contagion", version, about = "Contact process experiments on random trees and graphs", args_override_self = true)]
pub struct Cli {
    /// Write artifacts into this directory instead of printing them.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Family {
    Gw,
    Gwc1,
    Gwc2,
    Egw,
    LineF,
    Config,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Observable {
    Survival,
    Excursion,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProxyArg {
    ReachDepth,
    AliveAtHorizon,
}

impl From<ProxyArg> for Proxy {
    fn from(p: ProxyArg) -> Self {
        match p {
            ProxyArg::ReachDepth => Proxy::ReachDepth,
            ProxyArg::AliveAtHorizon => Proxy::AliveAtHorizon,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a tree, unicyclic graph, line family or configuration graph.
    SampleGraph {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long)]
        dist: String,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        /// Cycle or line length.
        #[arg(long, default_value_t = 3)]
        m: usize,
        /// Depth of the grafted cycle (egw).
        #[arg(long, default_value_t = 1)]
        h: usize,
        /// Vertex count (config).
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Monte Carlo survival or excursion time from the root.
    Simulate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = Observable::Survival)]
        observable: Observable,
        #[arg(long, default_value_t = 1e4)]
        horizon: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Exact R, S, π(0), M, M̄ and B from the Markov chain.
    Exact {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 2)]
        levels: usize,
    },
    /// Check every recursion inequality over a random panel.
    VerifyRecursions {
        #[arg(long, default_value = "default")]
        panel: String,
        #[arg(long, default_value_t = 200)]
        trees: usize,
        #[arg(long, default_value_t = 40)]
        lines: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Bisection estimate of the survival threshold on GW trees.
    EstimateThreshold {
        #[arg(long)]
        dist: String,
        /// Scale for the bracket; defaults to the offspring mean.
        #[arg(long)]
        d: Option<f64>,
        /// Defaults to the smallest L with d^L >= 1e4.
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, value_enum, default_value_t = ProxyArg::ReachDepth)]
        proxy: ProxyArg,
        #[arg(long, default_value_t = 2000)]
        replicas: usize,
        #[arg(long, default_value_t = DEFAULT_P_STAR)]
        p_star: f64,
        #[arg(long, default_value_t = 1e4)]
        horizon: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Median survival time from all-infected across graph sizes.
    SurvivalScaling {
        #[arg(long)]
        dist: String,
        #[arg(long, value_delimiter = ',')]
        ns: Vec<usize>,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 50)]
        replicas: usize,
        #[arg(long, default_value_t = 1e4)]
        cap: f64,
        /// Also run single-seed survival on the largest n.
        #[arg(long)]
        single_seed: bool,
        #[arg(long)]
        seed: u64,
    },
    /// Mark good vertices of a graph.
    GoodScan {
        /// Graph file; otherwise a configuration graph is sampled from --dist and --n.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        dist: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 10)]
        kappa: usize,
        #[arg(long, default_value_t = 0.5)]
        c0: f64,
        #[arg(long)]
        j0: usize,
        #[arg(long)]
        d_tilde: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1.5)]
        theta: f64,
        #[arg(long, default_value_t = 1)]
        l0: usize,
        /// Overrides the derived l1.
        #[arg(long)]
        l1: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tail of the recursive bound on S at λ = (1 − ε)/d.
    TailProbe {
        #[arg(long)]
        dist: String,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long)]
        d: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
        t: Vec<f64>,
        #[arg(long)]
        seed: u64,
    },
}

/// An artifact produced by a subcommand.
struct Artifact {
    name: String,
    body: String,
}

struct Report {
    artifacts: Vec<Artifact>,
    summary: String,
}

/// Rounds to 12 significant digits so JSON numbers print deterministically.
fn r12(x: f64) -> Value {
    if x.is_finite() {
        json!(fmt12(x).parse::<f64>().expect("fmt12 output parses"))
    } else {
        Value::Null
    }
}

fn load_dist(spec: &str) -> Result<OffspringDistribution> {
    OffspringDistribution::parse_spec(spec)
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize") + "\n"
}

fn execute(cmd: &Command) -> Result<Report> {
    match cmd {
        Command::SampleGraph { family, dist, depth, m, h, n, seed } => {
            let law = load_dist(dist)?;
            let key = derive_seed(*seed, &["sample-graph".into()]);
            let cap = SizeCap::default();
            let (body, n_out, e_out) = match family {
                Family::Config => {
                    let g = sample_config_model(*n, &law, &key)?;
                    (write_half_edge_graph(&g), g.n(), g.edge_count())
                }
                other => {
                    let g = match other {
                        Family::Gw => sample_gw(&law, *depth, &key, cap)?,
                        Family::Gwc1 => sample_gwc1(&law, *m, *depth, &key, cap)?,
                        Family::Gwc2 => sample_gwc2(&law, *m, *depth, &key, cap)?,
                        Family::Egw => sample_egw(&law, &law, *h, *m, *depth, &key, cap)?,
                        Family::LineF => build_line_family(&law, LineVariant::F { m: *m }, *depth, &key, cap)?,
                        Family::Config => unreachable!(),
                    };
                    (write_rooted_graph(&g), g.n(), g.edge_count())
                }
            };
            Ok(Report {
                artifacts: vec![Artifact { name: "graph.txt".into(), body }],
                summary: format!("sample-graph family={family:?} vertices={n_out} edges={e_out} seed={}", key.path()),
            })
        }
        Command::Simulate { graph, lambda, reps, observable, horizon, seed } => {
            let g = read_rooted_graph(&read_file(graph)?)?;
            let sg = SimGraph::from_rooted(&g);
            let params = SimParams::new(*lambda).with_horizon(*horizon);
            let key = derive_seed(*seed, &["simulate".into()]);
            let base = lambda.max(f64::MIN_POSITIVE);
            let runs: Vec<Result<(f64, bool, String)>> = {
                use rayon::prelude::*;
                (0..*reps)
                    .into_par_iter()
                    .map(|i| {
                        let k = key.child(i as u64);
                        let tl = EventTimeline::new(&k, base)?;
                        let mut net = sg.clone();
                        let out = match observable {
                            Observable::Survival => survival_time(&mut net, &tl, &params, &[g.root()])?,
                            Observable::Excursion => excursion_time(&mut net, &tl, &params, g.root())?,
                        };
                        Ok((out.end_time, out.censored(), k.path().to_string()))
                    })
                    .collect()
            };
            let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
            let times: Vec<f64> = runs.iter().map(|r| r.0).collect();
            let censored = runs.iter().filter(|r| r.1).count();
            let ms = stats::mean_se(&times);
            let per_rep = csv("replica,time,censored,seed", runs.iter().enumerate().map(|(i, (t, c, p))| format!("{i},{},{c},{p}", fmt12(*t))));
            let summary = json!({
                "observable": format!("{observable:?}").to_lowercase(),
                "lambda": r12(*lambda), "horizon": r12(*horizon), "reps": reps,
                "mean": r12(ms.mean), "se": r12(ms.se), "censored": censored, "seed": key.path(),
            });
            Ok(Report {
                artifacts: vec![Artifact { name: "simulate.json".into(), body: pretty(&summary) }, Artifact { name: "simulate.csv".into(), body: per_rep }],
                summary: format!("simulate mean={} se={} reps={reps} censored={censored} seed={}", fmt12(ms.mean), fmt12(ms.se), key.path()),
            })
        }
        Command::Exact { graph, lambda, levels } => {
            let g = read_rooted_graph(&read_file(graph)?)?;
            let res = exact::analyze(&g, *lambda, *levels)?;
            let v = json!({
                "vertices": res.vertices, "lambda": r12(res.lambda),
                "R": r12(res.r), "S": r12(res.s), "pi0": r12(res.pi0),
                "M": res.m.iter().map(|&x| r12(x)).collect::<Vec<_>>(),
                "Mbar": res.mbar.iter().map(|&x| r12(x)).collect::<Vec<_>>(),
                "B": res.b.map(r12),
                "residuals": res.residuals.iter().map(|(k, &x)| (k.clone(), r12(x))).collect::<serde_json::Map<_, _>>(),
            });
            Ok(Report {
                artifacts: vec![Artifact { name: "exact.json".into(), body: pretty(&v) }],
                summary: format!("exact vertices={} R={} S={} pi0={}", res.vertices, fmt12(res.r), fmt12(res.s), fmt12(res.pi0)),
            })
        }
        Command::VerifyRecursions { panel, trees, lines, seed } => {
            if panel != "default" {
                return Err(Error::InvalidArgument(format!("unknown panel {panel:?}; only \"default\" exists")));
            }
            let key = derive_seed(*seed, &["recursion-sweep".into()]);
            let tp = tree_panel(&key, *trees)?;
            let lp = line_panel(&key, *lines)?;
            let paths: HashMap<String, String> = (0..*trees)
                .map(|i| (tp[i].0.clone(), key.child("tree").child(i as u64).path().to_string()))
                .chain((0..*lines).map(|i| (lp[i].0.clone(), key.child("line").child(i as u64).path().to_string())))
                .collect();
            let rows = run_sweep(&tp, &lp, &SWEEP_LAMBDAS, &SWEEP_LEVELS)?;
            let s = summarize(&rows);
            let body = csv(&format!("{},seed", RecursionReport::csv_header()), rows.iter().map(|r| format!("{},{}", r.csv_row(), paths[&r.instance])));
            let guarded_violations = rows.iter().filter(|r| r.guarded() && !r.satisfied).count();
            let v = json!({
                "rows": s.rows, "violations": s.violations, "guarded_rows": s.guarded_rows, "guarded_violations": guarded_violations,
                "guard_active_fraction": r12(s.guard_active_fraction), "seed": key.path(),
            });
            Ok(Report {
                artifacts: vec![Artifact { name: "recursions.csv".into(), body }, Artifact { name: "recursions.json".into(), body: pretty(&v) }],
                summary: format!(
                    "verify-recursions rows={} violations={} guarded_violations={guarded_violations} guard_active={} seed={}",
                    s.rows,
                    s.violations,
                    fmt12(s.guard_active_fraction),
                    key.path()
                ),
            })
        }
        Command::EstimateThreshold { dist, d, depth, proxy, replicas, p_star, horizon, seed } => {
            let law = load_dist(dist)?;
            let d = d.unwrap_or(law.mean());
            let depth = match depth {
                Some(l) => *l,
                None => default_depth(d)?,
            };
            let key = derive_seed(*seed, &["estimate-threshold".into(), law.label().into()]);
            let cfg = ThresholdConfig { d, depth, horizon: *horizon, proxy: (*proxy).into(), replicas: *replicas, p_star: *p_star };
            let e = estimate_lambda1(&law, &cfg, &key)?;
            let trace = csv(
                "probe,lambda,p_hat,se,successes,replicas,censored,proxy,depth,horizon,seed",
                e.trace.iter().enumerate().map(|(i, p)| {
                    format!("{i},{},{},{},{},{},{},{},{depth},{},{}", fmt12(p.lambda), fmt12(p.p_hat), fmt12(p.se), p.successes, p.replicas, p.censored, e.proxy, fmt12(*horizon), e.seed)
                }),
            );
            let v = json!({
                "family": e.family, "proxy": e.proxy.to_string(), "depth": depth, "horizon": r12(*horizon), "p_star": r12(e.p_star),
                "replicas": e.replicas, "lambda_hat": r12(e.lambda_hat), "lambda_hat_times_d": r12(e.lambda_hat * d),
                "bracket": [r12(e.bracket.0), r12(e.bracket.1)], "seed": e.seed,
            });
            Ok(Report {
                artifacts: vec![Artifact { name: "threshold.csv".into(), body: trace }, Artifact { name: "threshold.json".into(), body: pretty(&v) }],
                summary: format!("estimate-threshold lambda_hat={} lambda_hat*d={} depth={depth} seed={}", fmt12(e.lambda_hat), fmt12(e.lambda_hat * d), e.seed),
            })
        }
        Command::SurvivalScaling { dist, ns, lambda, replicas, cap, single_seed, seed } => {
            let law = load_dist(dist)?;
            if ns.is_empty() {
                return Err(Error::InvalidArgument("--ns needs at least one size".into()));
            }
            let key = derive_seed(*seed, &["survival-scaling".into()]);
            let t = survival_time_scaling(&law, ns, *lambda, *replicas, *cap, &key)?;
            let body = csv(
                "n,median,q25,q75,cap_hits,replicas,lambda,cap,seed",
                t.rows.iter().map(|r| {
                    format!("{},{},{},{},{},{},{},{},{}/{}", r.n, fmt12(r.median), fmt12(r.q25), fmt12(r.q75), r.cap_hits, r.replicas, fmt12(*lambda), fmt12(*cap), t.seed, r.n)
                }),
            );
            let mut v = json!({ "lambda": r12(*lambda), "cap": r12(*cap), "slope": r12(t.slope), "seed": t.seed });
            let mut summary = format!("survival-scaling slope={} seed={}", fmt12(t.slope), t.seed);
            if *single_seed {
                let n = *ns.iter().max().expect("nonempty");
                let s = single_seed_survival(&law, n, *lambda, *replicas, *cap, &derive_seed(*seed, &["single-seed".into()]))?;
                v["single_seed"] = json!({ "n": n, "fraction": r12(s.fraction), "survived": s.survived, "replicas": s.replicas, "seed": s.seed });
                let _ = write!(summary, " single_seed_fraction={}", fmt12(s.fraction));
            }
            Ok(Report {
                artifacts: vec![Artifact { name: "scaling.csv".into(), body }, Artifact { name: "scaling.json".into(), body: pretty(&v) }],
                summary,
            })
        }
        Command::GoodScan { graph, dist, n, kappa, c0, j0, d_tilde, lambda, theta, l0, l1, seed } => {
            let (g, source) = match (graph, dist, n) {
                (Some(p), _, _) => (read_half_edge_graph(&read_file(p)?)?, p.display().to_string()),
                (None, Some(spec), Some(n)) => {
                    let seed = seed.ok_or_else(|| Error::InvalidArgument("sampling a graph needs --seed".into()))?;
                    let key = derive_seed(seed, &["good-scan".into()]);
                    (sample_config_model(*n, &load_dist(spec)?, &key)?, key.path().to_string())
                }
                _ => return Err(Error::InvalidArgument("good-scan needs --graph, or --dist with --n".into())),
            };
            let params = match l1 {
                Some(l1) => GoodVertexParams::with_l1(g.n(), *kappa, *c0, *j0, *d_tilde, *lambda, *theta, *l0, *l1),
                None => GoodVertexParams::new(g.n(), *kappa, *c0, *j0, *d_tilde, *lambda, *theta, *l0)?,
            };
            let scan = good_vertex_scan(&g, &params);
            let body = csv(
                "vertex,good,boundary,min_expansion,truncated,source",
                scan.verdicts.iter().map(|r| format!("{},{},{},{},{},{source}", r.vertex, r.good, r.boundary, r.min_expansion, r.truncated)),
            );
            let v = json!({
                "vertices": g.n(), "good": scan.good.len(), "p0_hat": r12(scan.p0_hat), "truncated": scan.truncated(),
                "l1": params.l1, "l2": params.l2, "l": params.l, "A": r12(params.a), "source": source,
            });
            Ok(Report {
                artifacts: vec![Artifact { name: "good.csv".into(), body }, Artifact { name: "good.json".into(), body: pretty(&v) }],
                summary: format!("good-scan good={} of {} p0_hat={} l1={} source={source}", scan.good.len(), g.n(), fmt12(scan.p0_hat), params.l1),
            })
        }
        Command::TailProbe { dist, depth, eps, d, samples, t, seed } => {
            let law = load_dist(dist)?;
            let d = d.unwrap_or(law.mean());
            let key = derive_seed(*seed, &["tail-probe".into()]);
            let table = tail_probe_s(&law, *depth, *eps, d, *samples, t, &key)?;
            let body = csv(
                "t,exceedances,samples,p_hat,wilson_lo,wilson_hi,reference,flagged,seed",
                table.rows.iter().map(|r| {
                    format!(
                        "{},{},{},{},{},{},{},{},{}",
                        fmt12(r.t),
                        r.exceedances,
                        r.samples,
                        fmt12(r.p_hat),
                        fmt12(r.wilson_lo),
                        fmt12(r.wilson_hi),
                        fmt12(r.reference),
                        r.flagged,
                        table.seed
                    )
                }),
            );
            Ok(Report {
                artifacts: vec![Artifact { name: "tail.csv".into(), body }],
                summary: format!("tail-probe flagged={} max_bound={} lambda={} seed={}", table.flagged(), fmt12(table.max_bound), fmt12(table.lambda), table.seed),
            })
        }
    }
}

/// Splices `--config FILE` entries in right after the subcommand name, so later explicit flags win.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().ok_or_else(|| Error::Parse("--config needs a file".into()))?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            out.push(a);
        }
    }
    let Some(path) = config else { return Ok(out) };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Parse(format!("cannot read config {path}: {e}")))?;
    let cmd = Cli::command();
    let (pos, sub) = out
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, a)| cmd.find_subcommand(a).map(|s| (i, s.clone())))
        .ok_or_else(|| Error::Parse("a config file needs a subcommand".into()))?;
    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", lineno + 1)))?;
        let (k, v) = (k.trim().replace('_', "-"), v.trim());
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(k.as_str()))
            .ok_or_else(|| Error::Parse(format!("config line {}: unknown key {k:?}", lineno + 1)))?;
        if arg.get_action().takes_values() {
            extra.push(format!("--{k}"));
            extra.push(v.to_string());
        } else {
            match v {
                "true" => extra.push(format!("--{k}")),
                "false" => {}
                _ => return Err(Error::Parse(format!("config line {}: {k} takes true or false", lineno + 1))),
            }
        }
    }
    out.splice(pos + 1..pos + 1, extra);
    Ok(out)
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("CONTAGION_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| Error::Parse(format!("CONTAGION_THREADS={v:?} is not a positive integer")))?;
    if n == 0 {
        return Err(Error::Parse("CONTAGION_THREADS must be at least 1".into()));
    }
    // a second call in one process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn emit(out: Option<&Path>, report: &Report) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for a in &report.artifacts {
                std::fs::write(dir.join(&a.name), &a.body)?;
            }
            println!("{}", report.summary);
        }
        None => {
            for a in &report.artifacts {
                print!("{}", a.body);
            }
            eprintln!("{}", report.summary);
        }
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    let argv = match expand_config(argv.into_iter().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    match execute(&cli.command).and_then(|r| emit(cli.out.as_deref(), &r)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_and_help() {
        assert_eq!(run(args("contagion nonsense")), EXIT_USAGE);
        assert_eq!(run(args("contagion exact --lambda 1")), EXIT_USAGE);
        assert_eq!(run(args("contagion --help")), EXIT_OK);
        assert_eq!(run(args("contagion --version")), EXIT_OK);
        assert_eq!(run(args("contagion exact --graph /nonexistent/edge.txt --lambda 1")), EXIT_RUNTIME);
    }

    #[test]
    fn config_then_flags() {
        let dir = std::env::temp_dir().join(format!("contagion-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("c.txt");
        std::fs::write(&cfg, "# tail probe\ndist = poisson(4)\ndepth = 2\nsamples = 100\nseed = 1\nt = 4,8\n").unwrap();
        let a = expand_config(args(&format!("contagion tail-probe --config {} --depth 1", cfg.display()))).unwrap();
        let cli = Cli::try_parse_from(a).unwrap();
        match cli.command {
            Command::TailProbe { depth, samples, ref t, .. } => {
                assert_eq!(depth, 1);
                assert_eq!(samples, 100);
                assert_eq!(t, &vec![4.0, 8.0]);
            }
            _ => panic!("wrong subcommand"),
        }
        std::fs::write(&cfg, "bogus = 3\n").unwrap();
        assert_eq!(run(args(&format!("contagion tail-probe --config {}", cfg.display()))), EXIT_USAGE);
        std::fs::write(&cfg, "no equals sign\n").unwrap();
        assert_eq!(run(args(&format!("contagion tail-probe --config {}", cfg.display()))), EXIT_USAGE);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
