use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;
use lograph::connectivity::{coherence_graph_with, CoherenceConfig, TimeSeriesSet, DEFAULT_CYCLES};
use lograph::eval::{median_iqr, run_benchmark, BenchmarkConfig, BenchmarkRun, ExperimentReport, Method};
use lograph::graph::knn_similarity_graph;
use lograph::graph_update::{alternate, AlternatingConfig, DualStepMode};
use lograph::io;
use lograph::lowrank::{pca_lowrank, rpca};
use lograph::synth::{EigenMode, SynthInstance, SynthSpec};
use lograph::{Laplacian, Matrix};

use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::svg::heatmap;
use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    /// Number of nodes (rows).
    #[arg(long, default_value_t = 30)]
    pub p: usize,
    /// Number of samples (columns).
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Rank of the clean component.
    #[arg(long, default_value_t = 3)]
    pub r: usize,
    /// Edge probability of the ground-truth graph.
    #[arg(long, default_value_t = 0.2)]
    pub q: f64,
    /// Fraction of corrupted entries.
    #[arg(long, default_value_t = 0.4)]
    pub k: f64,
    #[arg(long, default_value = "smallest", value_parser = ["smallest", "largest"])]
    pub eigen_mode: String,
}

impl SynthFlags {
    fn spec(&self, seed: u64) -> Result<SynthSpec, CliError> {
        let spec = SynthSpec {
            p: self.p,
            n: self.n,
            r: self.r,
            q: self.q,
            k: self.k,
            seed,
            eigen_mode: self.eigen_mode.parse::<EigenMode>()?,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn record(&self, config: &mut BTreeMap<String, String>) {
        config.insert("p".into(), self.p.to_string());
        config.insert("n".into(), self.n.to_string());
        config.insert("r".into(), self.r.to_string());
        config.insert("q".into(), self.q.to_string());
        config.insert("k".into(), self.k.to_string());
        config.insert("eigen_mode".into(), self.eigen_mode.clone());
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverFlags {
    /// Sparsity weight, taken literally.
    #[arg(long, default_value_t = 2.5 / 50f64.sqrt())]
    pub delta: f64,
    /// Graph-smoothness weight.
    #[arg(long, default_value_t = 1.5)]
    pub gamma: f64,
    /// Frobenius weight on the Laplacian.
    #[arg(long, default_value_t = 1.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 10)]
    pub outer_iters: usize,
    /// Iteration cap of the low-rank ADMM.
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value = "standard", value_parser = ["standard", "paper-literal"])]
    pub dual_step: String,
}

impl SolverFlags {
    fn alternating(&self) -> Result<AlternatingConfig, CliError> {
        let mut cfg = AlternatingConfig::with_weights(self.delta, self.gamma, self.beta);
        cfg.outer_iters = self.outer_iters;
        cfg.lowrank.max_iters = self.max_iters;
        cfg.graph.dual_step_mode = self.dual_step.parse::<DualStepMode>()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn record(&self, config: &mut BTreeMap<String, String>) {
        config.insert("delta".into(), self.delta.to_string());
        config.insert("gamma".into(), self.gamma.to_string());
        config.insert("beta".into(), self.beta.to_string());
        config.insert("outer_iters".into(), self.outer_iters.to_string());
        config.insert("max_iters".into(), self.max_iters.to_string());
        config.insert("dual_step".into(), self.dual_step.clone());
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub synth: SynthFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Data matrix (CSV, rows are nodes).
    #[arg(long)]
    pub input: PathBuf,
    /// Initial graph as an edge list.
    #[arg(long, conflicts_with = "knn")]
    pub graph: Option<PathBuf>,
    /// Build the initial graph from the K nearest rows instead (default 10).
    #[arg(long)]
    pub knn: Option<usize>,
    #[arg(long, default_value = "proposed", value_parser = ["proposed", "rpca", "pca"])]
    pub method: String,
    /// Rank kept by PCA.
    #[arg(long)]
    pub rank: Option<usize>,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CoherenceArgs {
    /// Time series CSV, one channel per row.
    #[arg(long)]
    pub input: PathBuf,
    /// Sampling rate in Hz.
    #[arg(long)]
    pub fs: f64,
    /// Centre frequency in Hz.
    #[arg(long)]
    pub freq: f64,
    #[arg(long, default_value_t = DEFAULT_CYCLES)]
    pub cycles: f64,
    /// Output edge list.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// First seed; seeds run from here upwards.
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    #[arg(long, value_delimiter = ',', default_value = "proposed,rpca,pca")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub knn: usize,
    /// Rank kept by PCA (defaults to r).
    #[arg(long)]
    pub pca_rank: Option<usize>,
    #[command(flatten)]
    pub synth: SynthFlags,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long)]
    pub out: PathBuf,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write(dir: &Path, name: &str, text: &str, artifacts: &mut Vec<String>) -> Result<(), CliError> {
    io::write_text(&dir.join(name), text)?;
    artifacts.push(name.to_string());
    Ok(())
}

pub fn synth(a: &SynthArgs, argv: &[String]) -> Result<(), CliError> {
    let spec = a.synth.spec(a.seed)?;
    let inst = SynthInstance::generate(&spec)?;
    create_dir(&a.out)?;

    let mut config = BTreeMap::new();
    a.synth.record(&mut config);
    let mut manifest = RunManifest::new(argv, config, Some(a.seed));
    let arts = &mut manifest.artifacts;
    write(&a.out, "X.csv", &io::matrix_to_csv(&inst.x), arts)?;
    write(&a.out, "L0.csv", &io::matrix_to_csv(&inst.l0), arts)?;
    write(&a.out, "M0.csv", &io::matrix_to_csv(&inst.m0), arts)?;
    write(&a.out, "W_true.tsv", &io::edge_list_to_string(&inst.w_true), arts)?;
    let spec_txt = format!(
        "p={}\nn={}\nr={}\nq={}\nk={}\nseed={}\neigen_mode={}\n",
        spec.p, spec.n, spec.r, spec.q, spec.k, spec.seed, spec.eigen_mode
    );
    write(&a.out, "spec.txt", &spec_txt, arts)?;
    manifest.write(&a.out.join(MANIFEST_FILE))?;
    println!("wrote {} ({}x{}, {} edges)", a.out.display(), spec.p, spec.n, inst.w_true.edge_count());
    Ok(())
}

pub fn decompose(a: &DecomposeArgs, argv: &[String]) -> Result<(), CliError> {
    let x = io::read_matrix(&a.input)?;
    let method: Method = a.method.parse()?;
    let cfg = a.solver.alternating()?;

    let mut config = BTreeMap::new();
    a.solver.record(&mut config);
    config.insert("method".into(), a.method.clone());
    config.insert("input".into(), a.input.display().to_string());

    let initial_graph = || -> Result<Laplacian, CliError> {
        match &a.graph {
            Some(path) => {
                let w = io::read_edge_list(path)?;
                if w.nodes() != x.nrows() {
                    return Err(CliError::Usage(format!(
                        "{}: graph has {} nodes but the data has {} rows",
                        path.display(),
                        w.nodes(),
                        x.nrows()
                    )));
                }
                Ok(w.laplacian())
            }
            None => Ok(knn_similarity_graph(&x, a.knn.unwrap_or(10))?.laplacian()),
        }
    };

    let outputs: (Matrix, Option<Matrix>, Option<Laplacian>, String, Option<String>) = match method {
        Method::Proposed => {
            match &a.graph {
                Some(g) => config.insert("graph".into(), g.display().to_string()),
                None => config.insert("knn".into(), a.knn.unwrap_or(10).to_string()),
            };
            let phi0 = initial_graph()?;
            let res = alternate(&x, &phi0, &cfg)?;
            if !res.monotone {
                log::warn!("outer objective was not monotone");
            }
            let steps: Vec<(usize, &[lograph::lowrank::IterationRecord])> =
                res.steps.iter().enumerate().map(|(i, s)| (i + 1, s.history.as_slice())).collect();
            let diag = io::diagnostics_to_csv(&steps);
            let outer = io::outer_log_to_csv(&res.outer);
            (res.l, Some(res.m), Some(res.phi), diag, Some(outer))
        }
        Method::Rpca => {
            let res = rpca(&x, cfg.lowrank.delta, &cfg.lowrank)?;
            let diag = io::diagnostics_to_csv(&[(1, res.history.as_slice())]);
            (res.l, Some(res.m), None, diag, None)
        }
        Method::Pca => {
            let rank = a
                .rank
                .ok_or_else(|| CliError::Usage("--method pca requires --rank".into()))?;
            config.insert("rank".into(), rank.to_string());
            (pca_lowrank(&x, rank)?, None, None, format!("{}\n", io::DIAGNOSTICS_HEADER), None)
        }
    };
    let (l, m, phi, diag, outer) = outputs;
    for v in l.iter() {
        if !v.is_finite() {
            return Err(CliError::Solver("low-rank estimate is not finite".into()));
        }
    }

    create_dir(&a.out)?;
    let mut manifest = RunManifest::new(argv, config, None);
    let arts = &mut manifest.artifacts;
    write(&a.out, "L.csv", &io::matrix_to_csv(&l), arts)?;
    if let Some(m) = m {
        write(&a.out, "M.csv", &io::matrix_to_csv(&m), arts)?;
    }
    if let Some(phi) = phi {
        write(&a.out, "Phi.tsv", &io::edge_list_to_string(&phi.adjacency()), arts)?;
    }
    write(&a.out, "diagnostics.csv", &diag, arts)?;
    if let Some(outer) = outer {
        write(&a.out, "outer.csv", &outer, arts)?;
    }
    manifest.write(&a.out.join(MANIFEST_FILE))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn coherence(a: &CoherenceArgs, argv: &[String]) -> Result<(), CliError> {
    let cfg = CoherenceConfig::new(a.freq, a.fs)?.with_cycles(a.cycles)?;
    let data = io::read_matrix(&a.input)?;
    let ts = TimeSeriesSet::new(data, a.fs)?;
    let graph = coherence_graph_with(&ts, &cfg)?;
    if !graph.failed_pairs.is_empty() {
        eprintln!(
            "warning: {} channel pairs had no band energy and were set to 0",
            graph.failed_pairs.len()
        );
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    io::write_edge_list(&a.out, &graph.adjacency)?;

    let mut config = BTreeMap::new();
    config.insert("fs".into(), a.fs.to_string());
    config.insert("freq".into(), a.freq.to_string());
    config.insert("cycles".into(), a.cycles.to_string());
    config.insert("input".into(), a.input.display().to_string());
    let mut manifest = RunManifest::new(argv, config, None);
    let name = a
        .out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "graph.tsv".into());
    manifest.artifacts.push(name.clone());
    manifest.write(&a.out.with_file_name(format!("{name}.manifest.json")))?;
    println!("wrote {} ({} channels)", a.out.display(), ts.channels());
    Ok(())
}

fn thread_count() -> usize {
    std::env::var("LOGRAPH_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs every seed, in parallel, returning results in seed order.
fn run_seeds(
    flags: &SynthFlags,
    seeds: &[u64],
    methods: &[Method],
    cfg: &BenchmarkConfig,
) -> Result<Vec<lograph::Result<BenchmarkRun>>, CliError> {
    let specs = seeds.iter().map(|&s| flags.spec(s)).collect::<Result<Vec<_>, _>>()?;
    let slots: Vec<Mutex<Option<lograph::Result<BenchmarkRun>>>> = specs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = thread_count().min(specs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= specs.len() {
                    break;
                }
                let run = run_benchmark(&specs[i], methods, cfg);
                *slots[i].lock().expect("slot lock") = Some(run);
            });
        }
    });
    Ok(slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every seed ran"))
        .collect())
}

pub fn benchmark(a: &BenchmarkArgs, argv: &[String]) -> Result<(), CliError> {
    let methods = a
        .methods
        .iter()
        .map(|m| m.trim().parse::<Method>())
        .collect::<lograph::Result<Vec<_>>>()?;
    if methods.is_empty() || a.seeds == 0 {
        return Err(CliError::Usage("need at least one method and one seed".into()));
    }
    let cfg = BenchmarkConfig {
        alternating: a.solver.alternating()?,
        knn: a.knn,
        pca_rank: a.pca_rank,
        ..Default::default()
    };
    let seeds: Vec<u64> = (a.seed_base..a.seed_base + a.seeds).collect();
    let runs = run_seeds(&a.synth, &seeds, &methods, &cfg)?;

    create_dir(&a.out)?;
    let mut config = BTreeMap::new();
    a.synth.record(&mut config);
    a.solver.record(&mut config);
    config.insert("seeds".into(), a.seeds.to_string());
    config.insert("seed_base".into(), a.seed_base.to_string());
    config.insert("knn".into(), a.knn.to_string());
    config.insert("methods".into(), a.methods.join(","));
    if let Some(r) = a.pca_rank {
        config.insert("pca_rank".into(), r.to_string());
    }
    let mut manifest = RunManifest::new(argv, config, Some(a.seed_base));

    let mut all_reports: Vec<ExperimentReport> = Vec::new();
    for (&seed, run) in seeds.iter().zip(&runs) {
        let dir_name = format!("seed_{seed:04}");
        let dir = a.out.join(&dir_name);
        create_dir(&dir)?;
        let run = match run {
            Ok(run) => run,
            Err(e) => {
                eprintln!("seed {seed}: instance generation failed: {e}");
                continue;
            }
        };
        let mut arts = Vec::new();
        write(&dir, "report.csv", &io::reports_to_csv(&run.reports), &mut arts)?;
        let truth = &run.instance.w_true;
        let estimate = run.proposed.as_ref().map(|p| p.phi.adjacency());
        let max_of = |w: &lograph::Adjacency| w.weights().iter().fold(0.0f64, |m, &v| m.max(v));
        let scale = estimate.as_ref().map_or(max_of(truth), |e| max_of(truth).max(max_of(e)));
        write(
            &dir,
            "adjacency_true.svg",
            &heatmap(truth, &format!("true adjacency, seed {seed}"), Some(scale)),
            &mut arts,
        )?;
        if let Some(est) = &estimate {
            write(
                &dir,
                "adjacency_estimated.svg",
                &heatmap(est, &format!("estimated adjacency, seed {seed}"), Some(scale)),
                &mut arts,
            )?;
        }
        if let Some(p) = &run.proposed {
            write(&dir, "outer.csv", &io::outer_log_to_csv(&p.outer), &mut arts)?;
        }
        manifest.artifacts.extend(arts.into_iter().map(|f| format!("{dir_name}/{f}")));
        all_reports.extend(run.reports.iter().cloned());
    }
    write(&a.out, "report.csv", &io::reports_to_csv(&all_reports), &mut manifest.artifacts)?;
    let table = render_tables(&all_reports, &methods);
    write(&a.out, "summary.txt", &table, &mut manifest.artifacts)?;
    manifest.write(&a.out.join(MANIFEST_FILE))?;
    print!("{table}");

    if all_reports.iter().any(ExperimentReport::succeeded) {
        Ok(())
    } else {
        Err(CliError::AllFailed)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn render_tables(reports: &[ExperimentReport], methods: &[Method]) -> String {
    let mut out = format!(
        "{:<10} {:>6} {:>12} {:>12} {:>6} {:>10}\n",
        "method", "seed", "lowrank_err", "graph_err", "rank", "time_s"
    );
    for r in reports {
        let lowrank = if r.succeeded() { format!("{:.4}", r.lowrank_error) } else { "failed".into() };
        out += &format!(
            "{:<10} {:>6} {:>12} {:>12} {:>6} {:>10.3}\n",
            r.method.name(),
            r.seed,
            lowrank,
            fmt_opt(r.graph_error),
            r.rank,
            r.wall_time
        );
    }
    out += &format!(
        "\n{:<10} {:>8} {:>12} {:>10} {:>12} {:>10}\n",
        "method", "ok/runs", "median_L", "iqr_L", "median_G", "iqr_G"
    );
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    for m in methods {
        let rows: Vec<&ExperimentReport> = reports.iter().filter(|r| r.method == m).collect();
        let ok: Vec<&&ExperimentReport> = rows.iter().filter(|r| r.succeeded()).collect();
        let l = median_iqr(&ok.iter().map(|r| r.lowrank_error).collect::<Vec<_>>());
        let g = median_iqr(&ok.iter().filter_map(|r| r.graph_error).collect::<Vec<_>>());
        out += &format!(
            "{:<10} {:>8} {:>12} {:>10} {:>12} {:>10}\n",
            m.name(),
            format!("{}/{}", ok.len(), rows.len()),
            fmt_opt(l.map(|v| v.0)),
            fmt_opt(l.map(|v| v.1)),
            fmt_opt(g.map(|v| v.0)),
            fmt_opt(g.map(|v| v.1))
        );
    }
    out
}
