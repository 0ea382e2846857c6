//! Two-block stochastic block models.
//!
//! Block 1 holds nodes `0..n`, block 2 holds `n..2n`. Edge probabilities are
//! `a` inside block 1, `c` inside block 2 and `b` between blocks. The four
//! linear families move `(a, b, c)` along a fixed direction as `theta` grows.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BlockLabel, Graph};

/// Default per-block size (24 nodes total).
pub const DEFAULT_BLOCK_SIZE: usize = 12;
/// Default cap on connectivity-rejection draws.
pub const DEFAULT_MAX_TRIES: usize = 1000;
/// Default dominance factor for [`classify_structure`].
pub const DEFAULT_MARGIN: f64 = 3.0;

// Parameters that land within this distance of 0 or 1 after theta
// arithmetic are snapped onto the boundary.
const SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl BlockMatrix {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("c", c)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "block probability {name}={v} outside [0, 1]"
                )));
            }
        }
        Ok(BlockMatrix { a, b, c })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmParams {
    n: usize,
    block: BlockMatrix,
}

impl SbmParams {
    /// `n` is the size of each block.
    pub fn new(n: usize, block: BlockMatrix) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("block size must be at least 1".into()));
        }
        Ok(SbmParams { n, block })
    }

    pub fn block_size(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        2 * self.n
    }

    pub fn block(&self) -> BlockMatrix {
        self.block
    }

    /// First `n` nodes in block 1, the rest in block 2.
    pub fn membership(&self) -> Vec<BlockLabel> {
        let mut m = vec![1; self.n];
        m.resize(2 * self.n, 2);
        m
    }

    pub fn probability_matrix(&self) -> ProbMatrix {
        let size = self.node_count();
        let BlockMatrix { a, b, c } = self.block;
        let mut values = vec![0.0; size * size];
        for i in 0..size {
            for j in 0..size {
                if i == j {
                    continue;
                }
                values[i * size + j] = match (i < self.n, j < self.n) {
                    (true, true) => a,
                    (false, false) => c,
                    _ => b,
                };
            }
        }
        ProbMatrix { n: size, values }
    }

    /// One labeled draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Graph {
        self.probability_matrix()
            .sample(rng)
            .with_labels(self.membership())
            .expect("membership has one label per node")
    }

    /// Labeled draw conditioned on connectivity.
    pub fn sample_connected<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        max_tries: usize,
    ) -> Result<ConnectedSample> {
        let mut sample = self.probability_matrix().sample_connected(rng, max_tries)?;
        sample.graph = sample
            .graph
            .with_labels(self.membership())
            .expect("membership has one label per node");
        Ok(sample)
    }

    /// Expected edge count under the `C(n,2)(a+b+c)` convention, which
    /// counts `C(n,2)` inter-block pairs instead of `n^2`. Use it to design
    /// equal-density families; use [`ProbMatrix::expected_edges`] for the
    /// true expectation.
    pub fn expected_edges_nominal(&self) -> f64 {
        let pairs = (self.n * (self.n - 1) / 2) as f64;
        pairs * (self.block.a + self.block.b + self.block.c)
    }

    /// True expected edge count, `C(n,2)(a+c) + n^2 b`.
    pub fn expected_edges_closed_form(&self) -> f64 {
        let pairs = (self.n * (self.n - 1) / 2) as f64;
        pairs * (self.block.a + self.block.c) + (self.n * self.n) as f64 * self.block.b
    }
}

/// Symmetric edge-probability matrix with a zero diagonal, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    n: usize,
    values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConnectedSample {
    pub graph: Graph,
    /// Disconnected draws discarded before this one.
    pub rejected: usize,
}

impl ProbMatrix {
    /// Validates symmetry, range and the zero diagonal.
    pub fn from_row_major(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "{} values for a {n}x{n} matrix",
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::InvalidParameter(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidParameter(format!(
                        "probability {v} at ({i}, {j}) outside [0, 1]"
                    )));
                }
                if v != values[j * n + i] {
                    return Err(Error::InvalidParameter(format!(
                        "asymmetric entries at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(ProbMatrix { n, values })
    }

    /// Builds from a symmetric generator `f(i, j)` evaluated for `i < j`.
    /// Values are clipped to `[0, 1]`; returns the matrix and the number of
    /// upper-triangle entries that needed clipping.
    pub fn from_fn_clipped(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> (Self, usize) {
        let mut values = vec![0.0; n * n];
        let mut clipped = 0;
        for i in 0..n {
            for j in i + 1..n {
                let raw = f(i, j);
                let v = raw.clamp(0.0, 1.0);
                if v != raw {
                    clipped += 1;
                }
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        (ProbMatrix { n, values }, clipped)
    }

    pub fn constant(n: usize, p: f64) -> Result<Self> {
        BlockMatrix::new(p, p, p)?;
        Ok(Self::from_fn_clipped(n, |_, _| p).0)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.values
    }

    /// Sum of the strictly upper-triangular entries.
    pub fn expected_edges(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            total += self.values[i * self.n + i + 1..(i + 1) * self.n]
                .iter()
                .sum::<f64>();
        }
        total
    }

    /// Independent Bernoulli draw for every pair `i < j`, visited in
    /// row-major order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Graph {
        let mut edges = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                let u: f64 = rng.random();
                if u < self.get(i, j) {
                    edges.push((i, j));
                }
            }
        }
        Graph::from_sorted_unchecked(self.n, edges)
    }

    /// Redraws until the sample is connected. Fails with
    /// [`Error::ConnectivityExhausted`] after `max_tries` disconnected draws.
    pub fn sample_connected<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        max_tries: usize,
    ) -> Result<ConnectedSample> {
        if max_tries == 0 {
            return Err(Error::InvalidParameter("max_tries must be at least 1".into()));
        }
        for rejected in 0..max_tries {
            let graph = self.sample(rng);
            if graph.is_connected() {
                return Ok(ConnectedSample { graph, rejected });
            }
        }
        Err(Error::ConnectivityExhausted { tries: max_tries })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyId {
    M1,
    M2,
    M3,
    M4,
}

impl FamilyId {
    /// Direction of travel in `(a, b, c)` space.
    pub fn delta(self) -> [f64; 3] {
        match self {
            // DCP to affinity
            FamilyId::M1 => [-1.0, 0.0, 1.0],
            // CCP to affinity
            FamilyId::M2 => [0.0, -1.0, 1.0],
            // DCP to CCP, density grows
            FamilyId::M3 => [0.0, 1.0, 0.0],
            // DCP to CCP, density preserved
            FamilyId::M4 => [-1.0, 1.0, 0.0],
        }
    }

    pub fn default_base(self) -> BlockMatrix {
        match self {
            FamilyId::M1 | FamilyId::M3 | FamilyId::M4 => BlockMatrix {
                a: 0.75,
                b: 0.05,
                c: 0.05,
            },
            FamilyId::M2 => BlockMatrix {
                a: 0.75,
                b: 0.75,
                c: 0.05,
            },
        }
    }

    pub fn default_theta_grid(self) -> Vec<f64> {
        match self {
            FamilyId::M1 | FamilyId::M2 => (0..8).map(|k| snap(k as f64 * 0.05)).collect(),
            FamilyId::M3 => (0..8).map(|k| snap(k as f64 * 0.1)).collect(),
            FamilyId::M4 => vec![0.0, 0.1, 0.2, 0.3, 0.35],
        }
    }

    pub fn preserves_nominal_density(self) -> bool {
        self != FamilyId::M3
    }
}

impl fmt::Display for FamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

fn snap(x: f64) -> f64 {
    let rounded = (x * 1e12).round() / 1e12;
    if (rounded - x).abs() <= SNAP {
        rounded
    } else {
        x
    }
}

/// A linear curve `base + theta * delta` for `theta` in `[0, theta_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmFamily {
    id: FamilyId,
    base: BlockMatrix,
    delta: [f64; 3],
    theta_max: f64,
}

impl SbmFamily {
    pub fn new(id: FamilyId, base: BlockMatrix, theta_max: f64) -> Result<Self> {
        Self::with_delta(id, base, id.delta(), theta_max)
    }

    /// Checks `delta` against the family's direction rule and that both ends
    /// of the curve stay inside the unit cube.
    pub fn with_delta(
        id: FamilyId,
        base: BlockMatrix,
        delta: [f64; 3],
        theta_max: f64,
    ) -> Result<Self> {
        if !theta_max.is_finite() || theta_max < 0.0 {
            return Err(Error::InvalidParameter(format!("theta_max={theta_max}")));
        }
        match id {
            FamilyId::M3 => {
                if delta != [0.0, 1.0, 0.0] {
                    return Err(Error::InvalidParameter(format!(
                        "M3 direction must be (0, 1, 0), got {delta:?}"
                    )));
                }
            }
            _ => {
                if delta.iter().sum::<f64>().abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "{id} direction must sum to zero, got {delta:?}"
                    )));
                }
            }
        }
        let family = SbmFamily {
            id,
            base,
            delta,
            theta_max,
        };
        family.point(theta_max)?;
        Ok(family)
    }

    pub fn id(&self) -> FamilyId {
        self.id
    }

    pub fn base(&self) -> BlockMatrix {
        self.base
    }

    pub fn delta(&self) -> [f64; 3] {
        self.delta
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    /// `(a, b, c)` at `theta`.
    pub fn point(&self, theta: f64) -> Result<BlockMatrix> {
        if !(0.0..=self.theta_max + SNAP).contains(&theta) {
            return Err(Error::ThetaOutOfRange {
                theta,
                theta_max: self.theta_max,
            });
        }
        let base = self.base.as_array();
        let mut out = [0.0; 3];
        for k in 0..3 {
            let mut v = snap(base[k] + theta * self.delta[k]);
            if v < 0.0 && v > -SNAP {
                v = 0.0;
            }
            if v > 1.0 && v < 1.0 + SNAP {
                v = 1.0;
            }
            out[k] = v;
        }
        BlockMatrix::new(out[0], out[1], out[2])
            .map_err(|e| e.context(format!("{} at theta={theta}", self.id)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "DCP")]
    Dcp,
    #[serde(rename = "CCP")]
    Ccp,
    Affinity,
    Ambiguous,
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::Dcp => "DCP",
            Structure::Ccp => "CCP",
            Structure::Affinity => "Affinity",
            Structure::Ambiguous => "Ambiguous",
        })
    }
}

/// Labels a block matrix with its qualitative regime, reading "x much
/// greater than y" as `x >= margin * y`:
///
/// * Affinity: `a, c >> b` and `a`, `c` within a factor of `margin`.
/// * DCP: `a >> b` and `a >> c`.
/// * CCP: `a >> c`, `b >> c` and `a` not dominating `b`.
///
/// Rules are tried in that order. Used for labeling output only.
pub fn classify_structure(bm: BlockMatrix, margin: f64) -> Structure {
    let BlockMatrix { a, b, c } = bm;
    let dominates = |x: f64, y: f64| x >= margin * y;
    let comparable = a.max(c) < margin * a.min(c);
    if dominates(a, b) && dominates(c, b) && comparable {
        Structure::Affinity
    } else if dominates(a, b) && dominates(a, c) {
        Structure::Dcp
    } else if dominates(a, c) && dominates(b, c) {
        Structure::Ccp
    } else {
        Structure::Ambiguous
    }
}

/// JSON description of a family sweep:
/// `{ "n": 12, "base": [0.75,0.05,0.05], "delta": [-1,0,1], "theta": [...], "family": "M1" }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(default = "default_block_size")]
    pub n: usize,
    pub family: FamilyId,
    #[serde(default)]
    pub base: Option<[f64; 3]>,
    #[serde(default)]
    pub delta: Option<[f64; 3]>,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
}

fn default_block_size() -> usize {
    DEFAULT_BLOCK_SIZE
}

impl FamilySpec {
    pub fn theta_grid(&self) -> Vec<f64> {
        self.theta
            .clone()
            .unwrap_or_else(|| self.family.default_theta_grid())
    }

    pub fn base_matrix(&self) -> Result<BlockMatrix> {
        match self.base {
            Some([a, b, c]) => BlockMatrix::new(a, b, c),
            None => Ok(self.family.default_base()),
        }
    }

    /// Family whose `theta_max` is the largest grid value.
    pub fn build(&self) -> Result<SbmFamily> {
        self.build_with_base(self.base_matrix()?)
    }

    pub fn build_with_base(&self, base: BlockMatrix) -> Result<SbmFamily> {
        let grid = self.theta_grid();
        if grid.is_empty() {
            return Err(Error::Config("theta grid is empty".into()));
        }
        if let Some(bad) = grid.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(Error::Config(format!("theta {bad} is negative or not finite")));
        }
        let theta_max = grid.iter().copied().fold(0.0, f64::max);
        SbmFamily::with_delta(
            self.family,
            base,
            self.delta.unwrap_or(self.family.delta()),
            theta_max,
        )
    }
}
