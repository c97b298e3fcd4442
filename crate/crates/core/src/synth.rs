//! Synthetic benchmark generator: an Erdős–Rényi weighted graph, a low-rank
//! component built from Laplacian eigenvectors, and ±1 Bernoulli corruption.
//!
//! Every sub-generator draws from its own ChaCha8 stream of the same seed
//! (see [`Stream`]), so e.g. the corruption can be regenerated without
//! touching the graph.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, Laplacian, Matrix};

/// Stream identifiers for the per-component generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Graph = 1,
    Factors = 2,
    Corruption = 3,
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Which end of the Laplacian spectrum supplies the low-rank basis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EigenMode {
    /// Smallest eigenvalues: smooth over the graph.
    #[default]
    Smallest,
    Largest,
}

impl std::str::FromStr for EigenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smallest" => Ok(EigenMode::Smallest),
            "largest" => Ok(EigenMode::Largest),
            other => Err(Error::InvalidParameter(format!(
                "unknown eigen mode '{other}' (expected smallest or largest)"
            ))),
        }
    }
}

impl std::fmt::Display for EigenMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EigenMode::Smallest => "smallest",
            EigenMode::Largest => "largest",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub p: usize,
    pub n: usize,
    pub r: usize,
    /// Edge probability.
    pub q: f64,
    /// Fraction of corrupted entries.
    pub k: f64,
    pub seed: u64,
    pub eigen_mode: EigenMode,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            p: 30,
            n: 50,
            r: 3,
            q: 0.2,
            k: 0.4,
            seed: 0,
            eigen_mode: EigenMode::Smallest,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n == 0 || self.r == 0 {
            return Err(Error::InvalidParameter("p, n and r must be positive".into()));
        }
        if self.r > self.p || self.r > self.n {
            return Err(Error::InvalidParameter(format!(
                "rank {} exceeds min(p, n) = {}",
                self.r,
                self.p.min(self.n)
            )));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidParameter(format!("edge probability {} not in (0, 1)", self.q)));
        }
        if !(0.0..=1.0).contains(&self.k) {
            return Err(Error::InvalidParameter(format!("corruption fraction {} not in [0, 1]", self.k)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthInstance {
    pub x: Matrix,
    pub l0: Matrix,
    pub m0: Matrix,
    pub w_true: Adjacency,
    pub phi_true: Laplacian,
}

impl SynthInstance {
    pub fn generate(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let w_true = gen_er_graph(spec.p, spec.q, spec.seed)?;
        let phi_true = w_true.laplacian();
        let l0 = gen_lowrank(&phi_true, spec.r, spec.n, spec.seed, spec.eigen_mode)?;
        let m0 = gen_sparse_corruption(spec.p, spec.n, spec.k, spec.seed)?;
        let x = &l0 + &m0;
        Ok(SynthInstance {
            x,
            l0,
            m0,
            w_true,
            phi_true,
        })
    }
}

/// Each unordered pair is joined with probability `q`; weights are Uniform(0, 1).
pub fn gen_er_graph(p: usize, q: f64, seed: u64) -> Result<Adjacency> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("edge probability {q} not in (0, 1)")));
    }
    let mut rng = rng_for(seed, Stream::Graph);
    let mut w = Matrix::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            if rng.random_bool(q) {
                // Uniform on (0, 1): a drawn edge never has zero weight.
                let v: f64 = loop {
                    let v = rng.random::<f64>();
                    if v > 0.0 {
                        break v;
                    }
                };
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    Adjacency::new(w)
}

/// `L0 = P Yᵀ`, with `P` the `r` selected unit eigenvectors of `phi` and `Y`
/// an `n × r` matrix of N(0, 1/p) draws.
pub fn gen_lowrank(phi: &Laplacian, r: usize, n: usize, seed: u64, mode: EigenMode) -> Result<Matrix> {
    let p = phi.nodes();
    if r == 0 || r > p {
        return Err(Error::InvalidParameter(format!("rank {r} must lie in 1..={p}")));
    }
    let basis = eigenbasis(phi, r, mode)?;
    let normal = Normal::new(0.0, (1.0 / p as f64).sqrt())
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = rng_for(seed, Stream::Factors);
    let y = Matrix::from_fn(n, r, |_, _| normal.sample(&mut rng));
    Ok(basis * y.transpose())
}

/// The `r` eigenvectors at the chosen end of the spectrum, as columns.
pub fn eigenbasis(phi: &Laplacian, r: usize, mode: EigenMode) -> Result<Matrix> {
    let p = phi.nodes();
    let eig = SymmetricEigen::try_new(phi.matrix().clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("Laplacian eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    if mode == EigenMode::Largest {
        order.reverse();
    }
    let mut basis = Matrix::zeros(p, r);
    for (c, &idx) in order[..r].iter().enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(idx));
    }
    Ok(basis)
}

/// Each entry is +1 with probability k/2, −1 with probability k/2, else 0.
pub fn gen_sparse_corruption(p: usize, n: usize, k: f64, seed: u64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::InvalidParameter(format!("corruption fraction {k} not in [0, 1]")));
    }
    let mut rng = rng_for(seed, Stream::Corruption);
    // column-major fill order, matching nalgebra storage
    Ok(Matrix::from_fn(p, n, |_, _| {
        let u: f64 = rng.random();
        if u < 0.5 * k {
            1.0
        } else if u < k {
            -1.0
        } else {
            0.0
        }
    }))
}

/// `‖est − truth‖_F / ‖truth‖_F`.
pub fn recon_error(est: &Matrix, truth: &Matrix) -> Result<f64> {
    if est.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "estimate is {:?} but truth is {:?}",
            est.shape(),
            truth.shape()
        )));
    }
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(Error::InvalidParameter("reference matrix has zero norm".into()));
    }
    Ok((est - truth).norm() / denom)
}
