//! Downstream evaluation: numerical rank, projection onto the leading
//! components of a low-rank estimate, a small linear classifier, and the
//! synthetic benchmark runner.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::graph::{knn_similarity_graph, Laplacian, Matrix};
use crate::graph_update::{alternate, AlternatingConfig, DecompositionResult};
use crate::lowrank::{pca_lowrank, rpca, StepResult};
use crate::prox::{singular_values, svd};
use crate::synth::{recon_error, SynthInstance, SynthSpec};

pub const DEFAULT_RANK_TOL: f64 = 1e-6;

/// Number of singular values at or above `rel_tol · σ₁`.
pub fn rank_estimate(l: &Matrix, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidParameter(format!("relative tolerance {rel_tol} not in (0, 1)")));
    }
    let sv = singular_values(l)?;
    match sv.first() {
        Some(&top) if top > 0.0 => Ok(sv.iter().filter(|&&s| s >= rel_tol * top).count()),
        _ => Ok(0),
    }
}

/// `U_kᵀ X`, with `U_k` the leading `k` left singular vectors of `l`.
pub fn project_components(l: &Matrix, x: &Matrix, k: usize) -> Result<Matrix> {
    if l.nrows() != x.nrows() {
        return Err(Error::Dimension(format!(
            "low-rank estimate has {} rows but the data has {}",
            l.nrows(),
            x.nrows()
        )));
    }
    let numerical_rank = {
        let sv = singular_values(l)?;
        let floor = sv.first().copied().unwrap_or(0.0) * f64::EPSILON * l.nrows().max(l.ncols()) as f64;
        sv.iter().filter(|&&s| s > floor).count()
    };
    if k == 0 || k > numerical_rank {
        return Err(Error::InvalidParameter(format!(
            "component count {k} must lie in 1..={numerical_rank} (numerical rank)"
        )));
    }
    let dec = svd(l)?;
    let u = dec.u.as_ref().expect("u requested");
    let mut order: Vec<usize> = (0..dec.singular_values.len()).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let basis = Matrix::from_columns(&order[..k].iter().map(|&c| u.column(c)).collect::<Vec<_>>());
    Ok(basis.transpose() * x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub lambda: f64,
    pub iterations: usize,
    pub step: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            lambda: 1e-3,
            iterations: 2000,
            step: 0.5,
        }
    }
}

/// L2-regularized hinge-loss linear classifier over standardized features.
///
/// Features are stored one sample per column. Training is full-batch
/// subgradient descent from zero with step `step / sqrt(t)`, so the fit is
/// a deterministic function of the data.
#[derive(Clone, Debug)]
pub struct LinearClassifier {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

impl LinearClassifier {
    pub fn fit(features: &Matrix, labels: &[bool], cfg: &ClassifierConfig) -> Result<Self> {
        let (d, n) = features.shape();
        if labels.len() != n {
            return Err(Error::Dimension(format!("{n} samples but {} labels", labels.len())));
        }
        if n == 0 || labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
            return Err(Error::InvalidParameter("training set must contain both classes".into()));
        }
        let mean: Vec<f64> = (0..d).map(|r| features.row(r).mean()).collect();
        let scale: Vec<f64> = (0..d)
            .map(|r| {
                let var = features.row(r).iter().map(|v| (v - mean[r]).powi(2)).sum::<f64>() / n as f64;
                if var > 0.0 { var.sqrt() } else { 1.0 }
            })
            .collect();
        let mut clf = LinearClassifier {
            mean,
            scale,
            weights: vec![0.0; d],
            bias: 0.0,
        };
        let z: Vec<Vec<f64>> = (0..n).map(|c| clf.standardize(features, c)).collect();
        let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();

        for t in 1..=cfg.iterations {
            let mut grad_w: Vec<f64> = clf.weights.iter().map(|w| cfg.lambda * w).collect();
            let mut grad_b = 0.0;
            for (zi, &yi) in z.iter().zip(&y) {
                let margin = yi * (dot(&clf.weights, zi) + clf.bias);
                if margin < 1.0 {
                    for (g, v) in grad_w.iter_mut().zip(zi) {
                        *g -= yi * v / n as f64;
                    }
                    grad_b -= yi / n as f64;
                }
            }
            let eta = cfg.step / (t as f64).sqrt();
            for (w, g) in clf.weights.iter_mut().zip(&grad_w) {
                *w -= eta * g;
            }
            clf.bias -= eta * grad_b;
        }
        Ok(clf)
    }

    fn standardize(&self, features: &Matrix, col: usize) -> Vec<f64> {
        (0..features.nrows())
            .map(|r| (features[(r, col)] - self.mean[r]) / self.scale[r])
            .collect()
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<bool>> {
        if features.nrows() != self.weights.len() {
            return Err(Error::Dimension(format!(
                "classifier expects {} features, got {}",
                self.weights.len(),
                features.nrows()
            )));
        }
        Ok((0..features.ncols())
            .map(|c| dot(&self.weights, &self.standardize(features, c)) + self.bias > 0.0)
            .collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub predictions: Vec<bool>,
    pub accuracy: f64,
}

/// Trains on one labelled set and scores another.
pub fn linear_classify(
    train: &Matrix,
    train_labels: &[bool],
    test: &Matrix,
    test_labels: &[bool],
) -> Result<Classification> {
    if test.ncols() != test_labels.len() {
        return Err(Error::Dimension(format!(
            "{} test samples but {} labels",
            test.ncols(),
            test_labels.len()
        )));
    }
    let clf = LinearClassifier::fit(train, train_labels, &ClassifierConfig::default())?;
    let predictions = clf.predict(test)?;
    let correct = predictions.iter().zip(test_labels).filter(|(p, y)| p == y).count();
    let accuracy = if predictions.is_empty() {
        0.0
    } else {
        correct as f64 / predictions.len() as f64
    };
    Ok(Classification { predictions, accuracy })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Proposed,
    Rpca,
    Pca,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::Rpca, Method::Pca];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Rpca => "rpca",
            Method::Pca => "pca",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "rpca" => Ok(Method::Rpca),
            "pca" => Ok(Method::Pca),
            other => Err(Error::InvalidParameter(format!(
                "unknown method '{other}' (expected proposed, rpca or pca)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub method: Method,
    pub lowrank_error: f64,
    pub graph_error: Option<f64>,
    pub rank: usize,
    pub seed: u64,
    pub wall_time: f64,
    /// Set when the method failed; the numeric fields are then NaN/0.
    pub failure: Option<String>,
}

impl ExperimentReport {
    fn failed(method: Method, seed: u64, wall_time: f64, err: &Error) -> Self {
        ExperimentReport {
            method,
            lowrank_error: f64::NAN,
            graph_error: None,
            rank: 0,
            seed,
            wall_time,
            failure: Some(err.to_string()),
        }
    }

    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub alternating: AlternatingConfig,
    /// Neighbours per node for the initial similarity graph.
    pub knn: usize,
    /// Rank kept by PCA; the synthetic rank when `None`.
    pub pca_rank: Option<usize>,
    pub rank_tol: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            alternating: AlternatingConfig::default(),
            knn: 10,
            pca_rank: None,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

/// Everything produced for one seed.
#[derive(Clone, Debug)]
pub struct BenchmarkRun {
    pub instance: SynthInstance,
    pub initial_graph: Laplacian,
    /// One row per requested method, ordered by method.
    pub reports: Vec<ExperimentReport>,
    pub proposed: Option<DecompositionResult>,
    pub rpca: Option<StepResult>,
}

/// Generates the instance for `spec` and runs each method on it.
pub fn run_benchmark(spec: &SynthSpec, methods: &[Method], cfg: &BenchmarkConfig) -> Result<BenchmarkRun> {
    let instance = SynthInstance::generate(spec)?;
    let initial_graph = knn_similarity_graph(&instance.x, cfg.knn)?.laplacian();

    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();

    let mut reports = Vec::new();
    let mut proposed = None;
    let mut rpca_result = None;
    for method in methods {
        let start = Instant::now();
        let outcome: Result<(Matrix, Option<f64>)> = match method {
            Method::Proposed => alternate(&instance.x, &initial_graph, &cfg.alternating).and_then(|res| {
                let graph_error = recon_error(res.phi.matrix(), instance.phi_true.matrix())?;
                let l = res.l.clone();
                proposed = Some(res);
                Ok((l, Some(graph_error)))
            }),
            Method::Rpca => {
                rpca(&instance.x, cfg.alternating.lowrank.delta, &cfg.alternating.lowrank).map(|res| {
                    let l = res.l.clone();
                    rpca_result = Some(res);
                    (l, None)
                })
            }
            Method::Pca => pca_lowrank(&instance.x, cfg.pca_rank.unwrap_or(spec.r)).map(|l| (l, None)),
        };
        let report = outcome.and_then(|(l, graph_error)| {
            Ok(ExperimentReport {
                method,
                lowrank_error: recon_error(&l, &instance.l0)?,
                graph_error,
                rank: rank_estimate(&l, cfg.rank_tol)?,
                seed: spec.seed,
                wall_time: start.elapsed().as_secs_f64(),
                failure: None,
            })
        });
        reports.push(report.unwrap_or_else(|e| {
            log::warn!("{method} failed on seed {}: {e}", spec.seed);
            ExperimentReport::failed(method, spec.seed, start.elapsed().as_secs_f64(), &e)
        }));
    }
    Ok(BenchmarkRun {
        instance,
        initial_graph,
        reports,
        proposed,
        rpca: rpca_result,
    })
}

/// Median and interquartile range (linear interpolation between order statistics).
pub fn median_iqr(values: &[f64]) -> Option<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some((q(0.5), q(0.75) - q(0.25)))
}
