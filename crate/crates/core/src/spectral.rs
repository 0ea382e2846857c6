//! Spectral embeddings and random dot product resampling.
//!
//! Both embeddings factor a symmetric matrix (the adjacency matrix for ASE,
//! `D^{-1/2} A D^{-1/2}` for LSE) through its singular value decomposition
//! and keep the top `d` components: `X = U_d sqrt(S_d)`. For a symmetric
//! matrix the singular values are the absolute eigenvalues and the left
//! singular vectors are the eigenvectors, so the factorization is computed
//! with a symmetric eigensolver.
//!
//! Resampling treats the rows of `X` as latent positions of a random dot
//! product graph, rescales the resulting probability matrix so its expected
//! edge count matches the source graph, and draws connected graphs from it.

use std::fmt;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sbm::{ConnectedSample, ProbMatrix};

/// Variance floor for the profile likelihood.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Elbow used when an embedding picks its own dimension.
pub const AUTO_ELBOWS: usize = 2;

// Singular values at or below this are treated as zero.
const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmbeddingKind {
    #[serde(rename = "ASE")]
    Ase,
    #[serde(rename = "LSE")]
    Lse,
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingKind::Ase => "ASE",
            EmbeddingKind::Lse => "LSE",
        })
    }
}

impl std::str::FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ase" => Ok(EmbeddingKind::Ase),
            "lse" => Ok(EmbeddingKind::Lse),
            other => Err(Error::InvalidParameter(format!(
                "unknown embedding kind {other:?} (expected ase or lse)"
            ))),
        }
    }
}

/// Singular values sorted nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum(Vec<f64>);

impl SingularSpectrum {
    /// Sorts the values; rejects negatives and non-finite entries.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!("singular value {bad}")));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(SingularSpectrum(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Profile log-likelihood of splitting the spectrum after the first `q`
/// values, with each side modeled as a Gaussian with its own mean and a
/// shared variance.
pub fn profile_log_likelihood(values: &[f64], q: usize) -> f64 {
    let m = values.len();
    let (head, tail) = values.split_at(q);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let ss = |xs: &[f64], mu: f64| xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>();
    let sum_sq = ss(head, mean(head)) + ss(tail, mean(tail));
    let dof = if m > 2 { (m - 2) as f64 } else { 1.0 };
    let var = (sum_sq / dof).max(VARIANCE_FLOOR);
    -0.5 * m as f64 * (2.0 * std::f64::consts::PI * var).ln() - sum_sq / (2.0 * var)
}

/// Elbow of a scree plot: the split `q` in `1..=min(m-1, d_max)` with the
/// highest profile likelihood. Ties go to the smaller `q`.
pub fn select_dimension(spectrum: &SingularSpectrum, d_max: Option<usize>) -> Result<usize> {
    let values = spectrum.values();
    if values.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "dimension selection needs at least 2 singular values, got {}",
            values.len()
        )));
    }
    let upper = d_max.unwrap_or(values.len() - 1).clamp(1, values.len() - 1);
    let mut best = (1, profile_log_likelihood(values, 1));
    for q in 2..=upper {
        let ll = profile_log_likelihood(values, q);
        if ll > best.1 {
            best = (q, ll);
        }
    }
    Ok(best.0)
}

/// Repeated elbow search: each pass runs [`select_dimension`] on the values
/// after the previous elbow. Returns the cumulative elbow positions; stops
/// early when fewer than two values remain.
pub fn select_elbows(spectrum: &SingularSpectrum, n_elbows: usize) -> Result<Vec<usize>> {
    let values = spectrum.values();
    if values.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "dimension selection needs at least 2 singular values, got {}",
            values.len()
        )));
    }
    let mut elbows = Vec::with_capacity(n_elbows);
    let mut start = 0;
    for _ in 0..n_elbows {
        let rest = &values[start..];
        if rest.len() < 2 {
            break;
        }
        start += select_dimension(&SingularSpectrum(rest.to_vec()), None)?;
        elbows.push(start);
    }
    Ok(elbows)
}

/// Latent positions, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    positions: DMatrix<f64>,
    kind: EmbeddingKind,
    spectrum: SingularSpectrum,
}

impl Embedding {
    pub fn from_positions(positions: DMatrix<f64>, kind: EmbeddingKind) -> Result<Self> {
        if positions.ncols() == 0 || positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "embedding needs at least one column of finite values".into(),
            ));
        }
        Ok(Embedding {
            positions,
            kind,
            spectrum: SingularSpectrum(Vec::new()),
        })
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn node_count(&self) -> usize {
        self.positions.nrows()
    }

    /// Full spectrum of the embedded matrix (empty when built from raw
    /// positions).
    pub fn spectrum(&self) -> &SingularSpectrum {
        &self.spectrum
    }

    /// Dot-product probabilities clipped to `[0, 1]`, with the number of
    /// upper-triangle entries that were clipped.
    pub fn probabilities(&self) -> (ProbMatrix, usize) {
        let gram = &self.positions * self.positions.transpose();
        ProbMatrix::from_fn_clipped(self.node_count(), |i, j| gram[(i, j)])
    }

    /// CSV with a `node,x1,...,xd` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node");
        for k in 1..=self.dim() {
            let _ = write!(out, ",x{k}");
        }
        out.push('\n');
        for (i, row) in self.positions.row_iter().enumerate() {
            let _ = write!(out, "{i}");
            for v in row.iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Adjacency spectral embedding. `d = None` picks the dimension from the
/// spectrum with [`select_dimension`], capped at `N/2`.
pub fn ase(g: &Graph, d: Option<usize>) -> Result<Embedding> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::InvalidGraph("cannot embed an empty graph".into()));
    }
    let a = DMatrix::from_row_slice(n, n, &g.adjacency_matrix());
    embed_symmetric(a, d, EmbeddingKind::Ase)
}

/// Normalized-Laplacian spectral embedding of `D^{-1/2} A D^{-1/2}`.
pub fn lse(g: &Graph, d: Option<usize>) -> Result<Embedding> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::InvalidGraph("cannot embed an empty graph".into()));
    }
    let degrees = g.degrees();
    if let Some(i) = degrees.as_slice().iter().position(|&k| k == 0) {
        return Err(Error::IsolatedNode(i));
    }
    let inv_sqrt: Vec<f64> = degrees
        .as_slice()
        .iter()
        .map(|&k| 1.0 / (k as f64).sqrt())
        .collect();
    let mut l = DMatrix::zeros(n, n);
    for &(i, j) in g.edges() {
        let v = inv_sqrt[i] * inv_sqrt[j];
        l[(i, j)] = v;
        l[(j, i)] = v;
    }
    embed_symmetric(l, d, EmbeddingKind::Lse)
}

pub fn embed(g: &Graph, kind: EmbeddingKind, d: Option<usize>) -> Result<Embedding> {
    match kind {
        EmbeddingKind::Ase => ase(g, d),
        EmbeddingKind::Lse => lse(g, d),
    }
}

/// Rank-`d` factorization `U_d sqrt(S_d)` of a symmetric matrix. Each
/// column is signed so its largest-magnitude entry is positive.
pub fn embed_symmetric(m: DMatrix<f64>, d: Option<usize>, kind: EmbeddingKind) -> Result<Embedding> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .abs()
            .total_cmp(&eig.eigenvalues[x].abs())
            .then(x.cmp(&y))
    });
    let spectrum = SingularSpectrum(order.iter().map(|&k| eig.eigenvalues[k].abs()).collect());
    if spectrum.0.first().is_none_or(|&s| s <= ZERO_TOL) {
        return Err(Error::ZeroMatrix);
    }
    let d = match d {
        Some(d) if d == 0 || d > n => return Err(Error::DimensionOutOfRange { d, max: n }),
        Some(d) => d,
        None if n < 2 => 1,
        None => {
            let elbows = select_elbows(&spectrum, AUTO_ELBOWS)?;
            elbows.last().copied().unwrap_or(1).min((n / 2).max(1))
        }
    };
    let mut positions = DMatrix::zeros(n, d);
    for (col, &k) in order.iter().take(d).enumerate() {
        let scale = spectrum.0[col].sqrt();
        let vector = eig.eigenvectors.column(k);
        let pivot = vector
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, &v)| if v.abs() > best.1.abs() { (i, v) } else { best });
        let sign = if pivot.1 < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            positions[(i, col)] = sign * scale * vector[i];
        }
    }
    Ok(Embedding {
        positions,
        kind,
        spectrum,
    })
}

/// Dot-product edge probabilities `clip(X_i . X_j, 0, 1)`, zero diagonal.
pub fn rdpg_probabilities(e: &Embedding) -> ProbMatrix {
    e.probabilities().0
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityAdjusted {
    pub p: ProbMatrix,
    pub ratio: f64,
    /// Upper-triangle entries pushed above 1 by the rescaling.
    pub clipped: usize,
}

/// Rescales `p` by `r = target_edges / E[edges](p)` and clips to `[0, 1]`.
pub fn density_adjust(p: &ProbMatrix, target_edges: usize) -> Result<DensityAdjusted> {
    if target_edges == 0 {
        return Err(Error::InvalidParameter("target edge count must be positive".into()));
    }
    let expected = p.expected_edges();
    if expected <= 0.0 {
        return Err(Error::ZeroExpectedEdges);
    }
    let ratio = target_edges as f64 / expected;
    let (adjusted, clipped) = ProbMatrix::from_fn_clipped(p.size(), |i, j| ratio * p.get(i, j));
    Ok(DensityAdjusted {
        p: adjusted,
        ratio,
        clipped,
    })
}

/// Density-adjusted random dot product model fitted to one graph.
#[derive(Debug, Clone)]
pub struct ResampleModel {
    pub kind: EmbeddingKind,
    pub dim: usize,
    pub ratio: f64,
    pub adjusted: ProbMatrix,
    /// Entries clipped when forming dot products.
    pub clipped_raw: usize,
    /// Entries clipped after rescaling by `ratio`.
    pub clipped_adjusted: usize,
    pub target_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleManifest {
    pub kind: EmbeddingKind,
    pub d: usize,
    pub r: f64,
    pub clipped_entries: usize,
    pub rejections: usize,
    pub target_edges: usize,
    pub expected_edges: f64,
}

impl ResampleModel {
    /// Embeds `g` (automatic dimension) and rescales to its edge count.
    pub fn fit(g: &Graph, kind: EmbeddingKind) -> Result<Self> {
        Self::from_embedding(&embed(g, kind, None)?, g.edge_count())
    }

    pub fn from_embedding(e: &Embedding, target_edges: usize) -> Result<Self> {
        let (raw, clipped_raw) = e.probabilities();
        let adjusted = density_adjust(&raw, target_edges)?;
        Ok(ResampleModel {
            kind: e.kind(),
            dim: e.dim(),
            ratio: adjusted.ratio,
            adjusted: adjusted.p,
            clipped_raw,
            clipped_adjusted: adjusted.clipped,
            target_edges,
        })
    }

    pub fn sample_connected<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        max_tries: usize,
    ) -> Result<ConnectedSample> {
        self.adjusted.sample_connected(rng, max_tries)
    }

    pub fn manifest(&self, rejections: usize) -> ResampleManifest {
        ResampleManifest {
            kind: self.kind,
            d: self.dim,
            r: self.ratio,
            clipped_entries: self.clipped_raw + self.clipped_adjusted,
            rejections,
            target_edges: self.target_edges,
            expected_edges: self.adjusted.expected_edges(),
        }
    }
}

/// Fits a model to `g` and draws one connected graph from it.
pub fn resample<R: Rng + ?Sized>(
    g: &Graph,
    kind: EmbeddingKind,
    rng: &mut R,
    max_tries: usize,
) -> Result<ConnectedSample> {
    if !g.is_connected() {
        return Err(Error::InvalidGraph("resampling needs a connected graph".into()));
    }
    ResampleModel::fit(g, kind)?.sample_connected(rng, max_tries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::{BlockMatrix, SbmParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spectrum(v: &[f64]) -> SingularSpectrum {
        SingularSpectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn complete_graph_ase() {
        for n in [3usize, 4, 7] {
            let e = ase(&Graph::complete(n), Some(1)).unwrap();
            let expected = ((n - 1) as f64 / n as f64).sqrt();
            for i in 0..n {
                assert!((e.positions()[(i, 0)] - expected).abs() < 1e-10);
            }
        }
        let p = rdpg_probabilities(&ase(&Graph::complete(4), Some(1)).unwrap());
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.0 } else { 0.75 };
                assert!((p.get(i, j) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn complete_graph_lse() {
        let n = 6;
        let e = lse(&Graph::complete(n), Some(1)).unwrap();
        assert!((e.spectrum().values()[0] - 1.0).abs() < 1e-12);
        for i in 0..n {
            assert!((e.positions()[(i, 0)] - 1.0 / (n as f64).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn embedding_errors() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        assert!(matches!(lse(&g, None), Err(Error::IsolatedNode(2))));
        assert!(matches!(ase(&Graph::empty(4), None), Err(Error::ZeroMatrix)));
        assert!(matches!(
            ase(&Graph::complete(3), Some(4)),
            Err(Error::DimensionOutOfRange { d: 4, max: 3 })
        ));
        assert!(ase(&Graph::complete(3), Some(0)).is_err());
    }

    #[test]
    fn laplacian_spectrum_is_bounded_by_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = SbmParams::new(10, BlockMatrix::new(0.6, 0.1, 0.3).unwrap()).unwrap();
        for _ in 0..20 {
            let g = params.sample_connected(&mut rng, 1000).unwrap().graph;
            let e = lse(&g, None).unwrap();
            assert!(e.spectrum().values().iter().all(|&s| s <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn dimension_selection_examples() {
        assert_eq!(select_dimension(&spectrum(&[10.0, 9.5, 1.0, 0.9, 0.8]), None).unwrap(), 2);
        assert_eq!(select_dimension(&spectrum(&[5.0, 0.0]), None).unwrap(), 1);
        assert_eq!(select_dimension(&spectrum(&[3.0, 3.0, 3.0, 3.0]), None).unwrap(), 1);
        assert!(select_dimension(&spectrum(&[1.0]), None).is_err());
        // d_max caps the search.
        assert_eq!(select_dimension(&spectrum(&[10.0, 9.0, 8.0, 1.0, 0.5]), Some(2)).unwrap(), 2);
        assert!(SingularSpectrum::new(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn rdpg_clipping() {
        let orth = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let e = Embedding::from_positions(orth, EmbeddingKind::Ase).unwrap();
        assert_eq!(rdpg_probabilities(&e).get(0, 1), 0.0);

        let big = DMatrix::from_row_slice(2, 1, &[1.3, 1.0]);
        let e = Embedding::from_positions(big, EmbeddingKind::Ase).unwrap();
        let (p, clipped) = e.probabilities();
        assert_eq!(p.get(0, 1), 1.0);
        assert_eq!(p.get(0, 0), 0.0);
        assert_eq!(clipped, 1);

        let neg = DMatrix::from_row_slice(2, 1, &[1.0, -0.5]);
        let e = Embedding::from_positions(neg, EmbeddingKind::Lse).unwrap();
        assert_eq!(rdpg_probabilities(&e).get(1, 0), 0.0);
    }

    #[test]
    fn density_adjust_arithmetic() {
        // 9 same-parity pairs at 0.25, 12 mixed pairs at 0.75.
        let (p, _) = ProbMatrix::from_fn_clipped(7, |i, j| if (i + j) % 2 == 0 { 0.25 } else { 0.75 });
        assert_eq!(p.expected_edges(), 11.25);
        let adj = density_adjust(&p, 45).unwrap();
        assert_eq!(adj.ratio, 4.0);
        assert_eq!(adj.clipped, 12);
        assert_eq!(adj.p.get(0, 2), 1.0);
        assert!(density_adjust(&p, 0).is_err());

        let half = ProbMatrix::constant(5, 0.5).unwrap();
        let doubled = density_adjust(&half, 10).unwrap();
        assert_eq!(doubled.ratio, 2.0);
        assert_eq!(doubled.clipped, 0);
        assert_eq!(doubled.p.get(0, 1), 1.0);
        let identity = density_adjust(&half, 5).unwrap();
        assert_eq!(identity.ratio, 1.0);
        assert_eq!(identity.p, half);

        assert!(matches!(
            density_adjust(&ProbMatrix::constant(4, 0.0).unwrap(), 3),
            Err(Error::ZeroExpectedEdges)
        ));
    }

    #[test]
    fn clipped_adjustment_never_exceeds_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(3..12);
            let (p, _) = ProbMatrix::from_fn_clipped(n, |_, _| rng.random::<f64>());
            let target = rng.random_range(1..=n * (n - 1) / 2);
            let adj = density_adjust(&p, target).unwrap();
            let got = adj.p.expected_edges();
            if adj.clipped == 0 {
                assert!((got - target as f64).abs() < 1e-9);
            } else {
                assert!(got < target as f64);
            }
        }
    }

    #[test]
    fn complete_graph_resample_targets_edge_count() {
        let g = Graph::complete(6);
        let model = ResampleModel::fit(&g, EmbeddingKind::Ase).unwrap();
        let m = model.manifest(0);
        assert_eq!(m.target_edges, 15);
        // Spectrum [5, 1, 1, 1, 1, 1]: elbows at 1 then 2.
        assert_eq!(m.d, 2);
        assert!(model.adjusted.expected_edges() <= 15.0 + 1e-9);
        let fixed = ResampleModel::from_embedding(&ase(&g, Some(1)).unwrap(), 15).unwrap();
        assert!((fixed.adjusted.expected_edges() - 15.0).abs() < 1e-9);
    }

    #[test]
    fn repeated_elbows() {
        let s = SingularSpectrum::new(vec![10.0, 9.5, 1.0, 0.9, 0.8]).unwrap();
        assert_eq!(select_elbows(&s, 1).unwrap(), vec![2]);
        assert_eq!(select_elbows(&s, 2).unwrap()[0], 2);
        let two = select_elbows(&SingularSpectrum::new(vec![20.0, 19.0, 8.0, 7.5, 1.0, 0.9, 0.8]).unwrap(), 2).unwrap();
        assert_eq!(two, vec![2, 4]);
        // Stops once fewer than two values remain.
        assert_eq!(select_elbows(&SingularSpectrum::new(vec![5.0, 0.0]).unwrap(), 3).unwrap(), vec![1]);
        assert!(select_elbows(&SingularSpectrum::new(vec![1.0]).unwrap(), 2).is_err());
    }

    #[test]
    fn resampling_is_seed_deterministic() {
        let params = SbmParams::new(12, BlockMatrix::new(0.75, 0.05, 0.15).unwrap()).unwrap();
        let g = params
            .sample_connected(&mut ChaCha8Rng::seed_from_u64(3), 10_000)
            .unwrap()
            .graph;
        for kind in [EmbeddingKind::Ase, EmbeddingKind::Lse] {
            let x = resample(&g, kind, &mut ChaCha8Rng::seed_from_u64(9), 10_000).unwrap();
            let y = resample(&g, kind, &mut ChaCha8Rng::seed_from_u64(9), 10_000).unwrap();
            assert_eq!(x.graph, y.graph);
            assert_eq!(x.rejected, y.rejected);
        }
        assert!(resample(&Graph::new(4, [(0, 1)]).unwrap(), EmbeddingKind::Ase, &mut ChaCha8Rng::seed_from_u64(1), 5).is_err());
    }

    #[test]
    fn embedding_is_bitwise_deterministic() {
        let params = SbmParams::new(12, BlockMatrix::new(0.8, 0.15, 0.05).unwrap()).unwrap();
        let g = params.sample(&mut ChaCha8Rng::seed_from_u64(21));
        assert_eq!(ase(&g, None).unwrap(), ase(&g, None).unwrap());
    }

    #[test]
    fn embedding_csv_layout() {
        let e = ase(&Graph::complete(3), Some(2)).unwrap();
        let csv = e.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("node,x1,x2"));
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("ASE".parse::<EmbeddingKind>().unwrap(), EmbeddingKind::Ase);
        assert_eq!("lse".parse::<EmbeddingKind>().unwrap(), EmbeddingKind::Lse);
        assert!("pca".parse::<EmbeddingKind>().is_err());
    }
}
