//! Computational bases for the annealers.
//!
//! A basis state is a `u64` whose bit `i - 1` holds the occupation of site `i`
//! (1-based, row-major over the lattice). For the Ising annealer the same bit
//! stores `(σ_i^z + 1) / 2`, so "occupied", "spin up" and "vertex in V1" all
//! coincide.
//!
//! The atomic annealers live in a fixed particle-number sector whose states are
//! kept in ascending integer order. That order is exactly the combinatorial
//! number system, so ranks come from a binomial sum instead of a lookup table.

use std::fmt;

use crate::error::{Error, Result};

/// Largest site count whose states fit in a machine word with room to spare.
pub const MAX_SITES: usize = 63;

/// Binomial coefficient `C(n, k)`; zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = acc * (n - i) as u64 / (i as u64 + 1);
    }
    acc
}

/// Common interface of the sector and full bases.
pub trait Basis {
    fn n_sites(&self) -> usize;
    fn dim(&self) -> usize;
    /// Bit pattern of the `index`-th basis state. Panics when out of range.
    fn state(&self, index: usize) -> u64;
    /// Inverse of [`Basis::state`]; `None` for states outside the basis.
    fn index_of(&self, state: u64) -> Option<usize>;
}

/// All `n`-bit states with exactly `k` set bits, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorBasis {
    n: usize,
    k: usize,
    states: Vec<u64>,
    // binom[m][j] = C(m, j) for m <= n, j <= k
    binom: Vec<Vec<u64>>,
}

impl SectorBasis {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n > MAX_SITES {
            return Err(Error::invalid(format!(
                "{n} sites exceed the {MAX_SITES}-site limit"
            )));
        }
        if k > n {
            return Err(Error::invalid(format!(
                "particle number {k} exceeds site count {n}"
            )));
        }
        let binom = (0..=n)
            .map(|m| (0..=k).map(|j| binomial(m, j)).collect())
            .collect();
        let dim = binomial(n, k) as usize;
        let mut states = Vec::with_capacity(dim);
        if k == 0 {
            states.push(0);
        } else {
            // Gosper's hack walks popcount-k words in increasing order.
            let mut x: u64 = (1u64 << k) - 1;
            let limit = 1u64 << n;
            while x < limit {
                states.push(x);
                let c = x & x.wrapping_neg();
                let r = x + c;
                x = (((r ^ x) >> 2) / c) | r;
            }
        }
        debug_assert_eq!(states.len(), dim);
        Ok(SectorBasis { n, k, states, binom })
    }

    /// Half-filled sector on `n` sites.
    pub fn half_filling(n: usize) -> Result<Self> {
        if !n.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "half filling needs an even site count, got {n}"
            )));
        }
        Self::new(n, n / 2)
    }

    pub fn particles(&self) -> usize {
        self.k
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    /// Position of `state` in the ascending enumeration (combinadic formula).
    pub fn rank(&self, state: u64) -> Result<usize> {
        if state.count_ones() as usize != self.k || (self.n < 64 && state >> self.n != 0) {
            return Err(Error::invalid(format!(
                "state {state:#b} is not in the ({}, {}) sector",
                self.n, self.k
            )));
        }
        Ok(self.rank_unchecked(state))
    }

    #[inline]
    pub(crate) fn rank_unchecked(&self, state: u64) -> usize {
        let mut rank = 0u64;
        let mut bits = state;
        let mut j = 1;
        while bits != 0 {
            let p = bits.trailing_zeros() as usize;
            rank += self.binom[p][j];
            j += 1;
            bits &= bits - 1;
        }
        rank as usize
    }

    pub fn unrank(&self, index: usize) -> Result<u64> {
        self.states.get(index).copied().ok_or_else(|| {
            Error::invalid(format!(
                "index {index} out of range for dimension {}",
                self.states.len()
            ))
        })
    }
}

impl Basis for SectorBasis {
    fn n_sites(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.states.len()
    }

    fn state(&self, index: usize) -> u64 {
        self.states[index]
    }

    fn index_of(&self, state: u64) -> Option<usize> {
        self.rank(state).ok()
    }
}

/// Every `n`-bit configuration; the index is the state itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FullBasis {
    n: usize,
}

impl FullBasis {
    pub fn new(n: usize) -> Result<Self> {
        // a dense 2^n state vector is the real limit, well below 63
        if n == 0 || n > 40 {
            return Err(Error::invalid(format!(
                "full basis needs 1..=40 spins, got {n}"
            )));
        }
        Ok(FullBasis { n })
    }
}

impl Basis for FullBasis {
    fn n_sites(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        1usize << self.n
    }

    fn state(&self, index: usize) -> u64 {
        assert!(index < self.dim(), "index {index} out of range");
        index as u64
    }

    fn index_of(&self, state: u64) -> Option<usize> {
        (state >> self.n == 0).then_some(state as usize)
    }
}

/// Basis of one annealer: a particle-number sector or the full spin space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnnealBasis {
    Sector(SectorBasis),
    Full(FullBasis),
}

impl Basis for AnnealBasis {
    fn n_sites(&self) -> usize {
        match self {
            AnnealBasis::Sector(b) => b.n_sites(),
            AnnealBasis::Full(b) => b.n_sites(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            AnnealBasis::Sector(b) => b.dim(),
            AnnealBasis::Full(b) => b.dim(),
        }
    }

    #[inline]
    fn state(&self, index: usize) -> u64 {
        match self {
            AnnealBasis::Sector(b) => b.states[index],
            AnnealBasis::Full(_) => index as u64,
        }
    }

    fn index_of(&self, state: u64) -> Option<usize> {
        match self {
            AnnealBasis::Sector(b) => b.index_of(state),
            AnnealBasis::Full(b) => b.index_of(state),
        }
    }
}

/// A bit pattern together with its length, printed site 1 first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bits {
    pub value: u64,
    pub len: usize,
}

impl Bits {
    pub fn new(value: u64, len: usize) -> Self {
        Bits { value, len }
    }

    /// Parses site-ordered text such as `"0101"` (site 1 leftmost).
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.len() > MAX_SITES {
            return Err(Error::Parse(format!("bitstring longer than {MAX_SITES}")));
        }
        let mut value = 0u64;
        for (i, ch) in text.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => value |= 1 << i,
                _ => return Err(Error::Parse(format!("invalid bit {ch:?} in {text:?}"))),
            }
        }
        Ok(Bits {
            value,
            len: text.len(),
        })
    }

    pub fn complement(self) -> Self {
        let mask = if self.len == 64 { u64::MAX } else { (1u64 << self.len) - 1 };
        Bits {
            value: !self.value & mask,
            len: self.len,
        }
    }

    /// Ket notation, e.g. `|0101⟩`.
    pub fn ket(&self) -> String {
        format!("|{self}⟩")
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.value >> i & 1 == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Ket string of a basis state on `n` sites.
pub fn format_state(state: u64, n: usize) -> String {
    Bits::new(state, n).ket()
}
