//! Exact-diagonalization simulator for atomic (spinless-fermion and
//! hard-core-boson) and transverse-field Ising quantum annealers applied to
//! balanced partitioning of random 3-regular graphs.
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`]: problem instances, the cut cost and the brute-force oracle
//! - [`basis`]: fixed-particle-number and full spin bases
//! - [`hamiltonian`]: sparse operator components and the interpolated `H(s)`
//! - [`linalg`]: eigensolvers and the Krylov propagator
//! - [`spectral`]: low-energy spectra, relevant gap, fidelity susceptibility, glass order
//! - [`dynamics`]: time evolution along the schedule and its observables
//! - [`experiment`]: sweeps, aggregation and pairwise comparisons

pub mod basis;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod hamiltonian;
pub mod dynamics;
pub mod linalg;
pub mod spectral;

pub use basis::{AnnealBasis, Basis, Bits, FullBasis, SectorBasis};
pub use error::{Error, Result};
pub use graph::{cut_size, gen_regular_graph, solve_partition_bruteforce, Graph, PartitionSolution, ProblemInstance};
pub use hamiltonian::{AnnealerKind, HamiltonianParts, LatticeGeometry, SparseOperator, Statistics, Weights};
pub use linalg::{EigenPairs, LinearOperator, ParametricOperator};
pub use dynamics::{evolve, AnnealSchedule, DynamicsTrace, EvolveOptions, Integrator};
pub use spectral::{EigenSolver, fidelity_susceptibility, glass_order, lowest_eigs, relevant_gap, spectral_trace, SpectralTrace};
pub use experiment::{aggregate_by_degeneracy, compare_annealers, run_sweep, ResultRecord, SweepConfig, Task};
