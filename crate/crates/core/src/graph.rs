//! Random regular problem graphs, the balanced-partition cost and its
//! exhaustive classical solution.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{Bits, SectorBasis};
use crate::error::{Error, Result};
use crate::hamiltonian::LatticeGeometry;

/// Pairing attempts before the configuration model gives up.
pub const MAX_PAIRING_ATTEMPTS: usize = 10_000;

/// A simple undirected regular graph.
///
/// Vertices are 0-based here (vertex `v` is bit `v` of a configuration); the
/// instance file uses 1-based ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    degree: usize,
    seed: u64,
    /// Sorted `(u, v)` pairs with `u < v`.
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from 0-based edges, checking that it is simple and regular.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], seed: u64) -> Result<Self> {
        if n == 0 || n > 63 {
            return Err(Error::invalid(format!("vertex count {n} outside 1..=63")));
        }
        let mut seen = HashSet::new();
        let mut norm = Vec::with_capacity(edges.len());
        let mut deg = vec![0usize; n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at vertex {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::invalid(format!("duplicate edge {e:?}")));
            }
            deg[a] += 1;
            deg[b] += 1;
            norm.push(e);
        }
        let degree = deg[0];
        if let Some(v) = deg.iter().position(|&d| d != degree) {
            return Err(Error::invalid(format!(
                "graph is not regular: vertex {v} has degree {} vs {degree}",
                deg[v]
            )));
        }
        norm.sort_unstable();
        Ok(Graph {
            n,
            degree,
            seed,
            edges: norm,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn max_degree(&self) -> usize {
        self.degree
    }

    /// Number of edges whose endpoints carry different bits.
    #[inline]
    pub fn cut(&self, state: u64) -> u32 {
        self.edges
            .iter()
            .map(|&(u, v)| ((state >> u ^ state >> v) & 1) as u32)
            .sum()
    }
}

/// Samples a random simple `degree`-regular graph on `n` vertices.
///
/// Configuration model: shuffle `n * degree` stubs, pair them in order, and
/// restart from scratch whenever a self-loop or repeated edge shows up.
pub fn gen_regular_graph(n: usize, degree: usize, seed: u64) -> Result<Graph> {
    if !(n * degree).is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "n * degree = {} is odd; no {degree}-regular graph on {n} vertices",
            n * degree
        )));
    }
    if n <= degree {
        return Err(Error::invalid(format!(
            "need more than {degree} vertices for a simple {degree}-regular graph, got {n}"
        )));
    }
    if n > 63 {
        return Err(Error::invalid(format!("vertex count {n} exceeds 63")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stubs: Vec<usize> = (0..n)
        .flat_map(|v| std::iter::repeat_n(v, degree))
        .collect();
    let mut seen = HashSet::with_capacity(stubs.len() / 2);
    'attempt: for _ in 0..MAX_PAIRING_ATTEMPTS {
        stubs.shuffle(&mut rng);
        seen.clear();
        let mut edges = Vec::with_capacity(stubs.len() / 2);
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            let e = (a.min(b), a.max(b));
            if a == b || !seen.insert(e) {
                continue 'attempt;
            }
            edges.push(e);
        }
        edges.sort_unstable();
        return Ok(Graph {
            n,
            degree,
            seed,
            edges,
        });
    }
    Err(Error::GenerationFailed {
        attempts: MAX_PAIRING_ATTEMPTS,
    })
}

/// Cut size of a configuration given as a length-tagged bitstring.
pub fn cut_size(graph: &Graph, config: Bits) -> Result<u32> {
    if config.len != graph.n {
        return Err(Error::DimensionMismatch {
            expected: graph.n,
            actual: config.len,
        });
    }
    Ok(graph.cut(config.value))
}

/// Ground truth of the balanced partition problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSolution {
    pub min_cut: u32,
    /// Optimal balanced configurations in ascending (combinadic) order.
    pub solutions: Vec<u64>,
}

impl PartitionSolution {
    /// Solution degeneracy `D`.
    pub fn degeneracy(&self) -> usize {
        self.solutions.len()
    }

    pub fn contains(&self, state: u64) -> bool {
        self.solutions.binary_search(&state).is_ok()
    }
}

/// Exhaustive search over every balanced configuration.
pub fn solve_partition_bruteforce(graph: &Graph) -> Result<PartitionSolution> {
    if !graph.n.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "balanced partition needs an even vertex count, got {}",
            graph.n
        )));
    }
    let basis = SectorBasis::half_filling(graph.n)?;
    let mut min_cut = u32::MAX;
    let mut solutions = Vec::new();
    for &s in basis.states() {
        let c = graph.cut(s);
        if c < min_cut {
            min_cut = c;
            solutions.clear();
        }
        if c == min_cut {
            solutions.push(s);
        }
    }
    Ok(PartitionSolution { min_cut, solutions })
}

/// A problem graph together with the lattice it is annealed on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemInstance {
    pub graph: Graph,
    pub geometry: LatticeGeometry,
}

impl ProblemInstance {
    pub fn new(graph: Graph, geometry: LatticeGeometry) -> Result<Self> {
        if graph.n() != geometry.sites() {
            return Err(Error::DimensionMismatch {
                expected: geometry.sites(),
                actual: graph.n(),
            });
        }
        Ok(ProblemInstance { graph, geometry })
    }

    /// Random 3-regular instance filling a `rows x cols` lattice.
    pub fn random(rows: usize, cols: usize, seed: u64) -> Result<Self> {
        let geometry = LatticeGeometry::new(rows, cols)?;
        let graph = gen_regular_graph(geometry.sites(), 3, seed)?;
        Self::new(graph, geometry)
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            version: 1,
            n: self.graph.n,
            rows: self.geometry.rows(),
            cols: self.geometry.cols(),
            degree: self.graph.degree,
            seed: self.graph.seed,
            edges: self.graph.edges.iter().map(|&(u, v)| [u + 1, v + 1]).collect(),
        };
        let mut s = serde_json::to_string(&file).expect("instance serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.version != 1 {
            return Err(Error::Parse(format!(
                "unsupported instance version {}",
                file.version
            )));
        }
        let mut edges = Vec::with_capacity(file.edges.len());
        for [u, v] in file.edges {
            if u == 0 || v == 0 {
                return Err(Error::Parse("vertex ids are 1-based".into()));
            }
            edges.push((u - 1, v - 1));
        }
        let graph = Graph::from_edges(file.n, &edges, file.seed)?;
        if graph.degree() != file.degree {
            return Err(Error::Parse(format!(
                "declared degree {} but edges give {}",
                file.degree,
                graph.degree()
            )));
        }
        Self::new(graph, LatticeGeometry::new(file.rows, file.cols)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    version: u32,
    n: usize,
    rows: usize,
    cols: usize,
    degree: usize,
    seed: u64,
    edges: Vec<[usize; 2]>,
}
