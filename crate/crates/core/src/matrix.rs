//! Row-stochastic matrices and the structural classifiers used throughout:
//! consequent sets, the Sarymsakov and scrambling conditions, positive
//! columns, and the row-spread consensus metric.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Entries below this threshold count as structurally zero by default.
pub const DEFAULT_ZERO_TOL: f64 = 1e-15;

/// Row sums must match 1 within this tolerance after construction.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Subset-pair enumeration in the Sarymsakov check is capped at this order.
pub const DEFAULT_ENUM_LIMIT: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixError {
    /// A row of the raw input sums to zero and cannot be normalized.
    ZeroRow { row: usize },
    /// A negative entry was found.
    NegativeEntry { row: usize, col: usize },
    /// A row sum is outside the stochasticity tolerance.
    NotStochastic { row: usize, sum: f64 },
    /// The entry buffer does not describe a square matrix.
    NotSquare,
    /// Order zero is not a matrix.
    EmptyMatrix,
    /// The consequent function requires a nonempty argument set.
    EmptySet,
    /// The order exceeds the subset-enumeration limit.
    TooLarge { n: usize, limit: usize },
    /// No entry exceeds the structural-zero threshold.
    AllZero,
}

impl fmt::Display for MatrixError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixError::ZeroRow { row } => write!(f, "row {row} sums to zero"),
            MatrixError::NegativeEntry { row, col } => {
                write!(f, "negative entry at ({row}, {col})")
            }
            MatrixError::NotStochastic { row, sum } => {
                write!(f, "row {row} sums to {sum}, not 1")
            }
            MatrixError::NotSquare => write!(f, "entry buffer is not square"),
            MatrixError::EmptyMatrix => write!(f, "matrix order must be at least 1"),
            MatrixError::EmptySet => write!(f, "index set must be nonempty"),
            MatrixError::TooLarge { n, limit } => {
                write!(f, "order {n} exceeds enumeration limit {limit}")
            }
            MatrixError::AllZero => write!(f, "no entry above the zero threshold"),
        }
    }
}

/// A subset of row/column indices `0..n`, stored as a bitmask (`n <= 64`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexSet {
    bits: u64,
}

impl IndexSet {
    pub fn empty() -> Self {
        IndexSet { bits: 0 }
    }

    pub fn from_bits(bits: u64) -> Self {
        IndexSet { bits }
    }

    pub fn from_indices(indices: &[usize]) -> Self {
        let mut bits = 0u64;
        for &i in indices {
            debug_assert!(i < 64);
            bits |= 1 << i;
        }
        IndexSet { bits }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        i < 64 && self.bits & (1 << i) != 0
    }

    pub fn intersects(&self, other: &IndexSet) -> bool {
        self.bits & other.bits != 0
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        IndexSet { bits: self.bits | other.bits }
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..64).filter(|&i| self.contains(i)).collect()
    }
}

/// A square nonnegative matrix whose rows each sum to 1.
///
/// `zero_tol` is the threshold below which an entry is treated as a
/// structural zero by every classifier; it is inherited by products.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    entries: Vec<f64>,
    zero_tol: f64,
}

impl StochasticMatrix {
    /// Validates an already row-stochastic entry buffer (row-major).
    pub fn new(n: usize, entries: Vec<f64>, zero_tol: f64) -> Result<Self, MatrixError> {
        if n == 0 {
            return Err(MatrixError::EmptyMatrix);
        }
        if entries.len() != n * n {
            return Err(MatrixError::NotSquare);
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let e = entries[i * n + j];
                if e < 0.0 {
                    return Err(MatrixError::NegativeEntry { row: i, col: j });
                }
                sum += e;
            }
            if libm::fabs(sum - 1.0) > ROW_SUM_TOL {
                return Err(MatrixError::NotStochastic { row: i, sum });
            }
        }
        Ok(StochasticMatrix { n, entries, zero_tol })
    }

    /// Divides each row of a nonnegative matrix by its sum.
    ///
    /// The zero pattern is preserved exactly: a zero input entry stays zero.
    pub fn normalize_rows(n: usize, raw: Vec<f64>, zero_tol: f64) -> Result<Self, MatrixError> {
        if n == 0 {
            return Err(MatrixError::EmptyMatrix);
        }
        if raw.len() != n * n {
            return Err(MatrixError::NotSquare);
        }
        let mut entries = raw;
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let e = entries[i * n + j];
                if e < 0.0 {
                    return Err(MatrixError::NegativeEntry { row: i, col: j });
                }
                sum += e;
            }
            if sum == 0.0 {
                return Err(MatrixError::ZeroRow { row: i });
            }
            for j in 0..n {
                entries[i * n + j] /= sum;
            }
        }
        Ok(StochasticMatrix { n, entries, zero_tol })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, MatrixError> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(MatrixError::NotSquare);
            }
            entries.extend_from_slice(r);
        }
        StochasticMatrix::new(n, entries, DEFAULT_ZERO_TOL)
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        StochasticMatrix { n, entries, zero_tol: DEFAULT_ZERO_TOL }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn zero_tol(&self) -> f64 {
        self.zero_tol
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// Whether entry (i, j) is structurally positive.
    pub fn is_positive(&self, i: usize, j: usize) -> bool {
        self.get(i, j) > self.zero_tol
    }

    /// `self * rhs` with plain dense accumulation in fixed index order.
    pub fn multiply(&self, rhs: &StochasticMatrix) -> StochasticMatrix {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for l in 0..n {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * rhs.get(l, j);
                }
            }
        }
        StochasticMatrix { n, entries: out, zero_tol: self.zero_tol.max(rhs.zero_tol) }
    }

    /// Left action of a stochastic row vector: `v * self`.
    pub fn left_apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for j in 0..self.n {
                out[j] += vi * self.get(i, j);
            }
        }
        out
    }

    /// Right action on a column per coordinate block: `self * x` where `x`
    /// is `n` stacked row vectors of dimension `d` (used for agent states).
    pub fn mix_states(&self, states: &[Vec<f64>]) -> Vec<Vec<f64>> {
        debug_assert_eq!(states.len(), self.n);
        let d = states[0].len();
        let mut out = vec![vec![0.0; d]; self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                let a = self.get(i, j);
                if a == 0.0 {
                    continue;
                }
                for c in 0..d {
                    out[i][c] += a * states[j][c];
                }
            }
        }
        out
    }

    /// Support of a row as a bitmask of structurally positive columns.
    fn row_support(&self, i: usize) -> u64 {
        let mut bits = 0u64;
        for j in 0..self.n {
            if self.is_positive(i, j) {
                bits |= 1 << j;
            }
        }
        bits
    }

    /// The consequent function: columns reachable in one step from `s`.
    pub fn consequent_set(&self, s: &IndexSet) -> Result<IndexSet, MatrixError> {
        if s.is_empty() {
            return Err(MatrixError::EmptySet);
        }
        let mut bits = 0u64;
        for i in 0..self.n {
            if s.contains(i) {
                bits |= self.row_support(i);
            }
        }
        Ok(IndexSet::from_bits(bits))
    }

    /// Consequent sets for every subset of `0..n`, by subset DP.
    fn all_consequents(&self) -> Vec<u64> {
        let n = self.n;
        let supports: Vec<u64> = (0..n).map(|i| self.row_support(i)).collect();
        let mut f = vec![0u64; 1 << n];
        for mask in 1usize..(1 << n) {
            let low = mask.trailing_zeros() as usize;
            f[mask] = f[mask & (mask - 1)] | supports[low];
        }
        f
    }

    /// Exhaustive check of the Sarymsakov condition over all ordered pairs
    /// of disjoint nonempty subsets, with early exit on the first violation.
    pub fn is_sarymsakov(&self) -> Result<bool, MatrixError> {
        self.is_sarymsakov_with_limit(DEFAULT_ENUM_LIMIT)
    }

    pub fn is_sarymsakov_with_limit(&self, limit: usize) -> Result<bool, MatrixError> {
        let n = self.n;
        if n > limit || n > 63 {
            return Err(MatrixError::TooLarge { n, limit });
        }
        if n == 1 {
            // No pair of disjoint nonempty subsets exists.
            return Ok(true);
        }
        let f = self.all_consequents();
        let full = (1u64 << n) - 1;
        for s in 1usize..(1 << n) {
            let comp = (full as usize) & !s;
            // Enumerate nonempty submasks of the complement.
            let mut sp = comp;
            while sp != 0 {
                let fs = f[s];
                let fsp = f[sp];
                let intersect = fs & fsp != 0;
                if !intersect {
                    let grow = (fs | fsp).count_ones() as usize
                        > (s.count_ones() + sp.count_ones()) as usize;
                    if !grow {
                        return Ok(false);
                    }
                }
                sp = (sp - 1) & comp;
            }
        }
        Ok(true)
    }

    /// For every proper nonempty subset there is a positive entry leaving it.
    ///
    /// Exhaustive over subsets; use [`support_strongly_connected`] for the
    /// equivalent digraph route at larger orders.
    ///
    /// [`support_strongly_connected`]: StochasticMatrix::support_strongly_connected
    pub fn satisfies_connectivity_condition(&self) -> Result<bool, MatrixError> {
        self.satisfies_connectivity_condition_with_limit(DEFAULT_ENUM_LIMIT)
    }

    pub fn satisfies_connectivity_condition_with_limit(
        &self,
        limit: usize,
    ) -> Result<bool, MatrixError> {
        let n = self.n;
        if n > limit || n > 63 {
            return Err(MatrixError::TooLarge { n, limit });
        }
        if n == 1 {
            return Ok(true);
        }
        let f = self.all_consequents();
        let full = (1u64 << n) - 1;
        for s in 1usize..((1 << n) - 1) {
            // An edge from S into its complement: F(S) must leave S.
            if f[s] & (full & !(s as u64)) == 0 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Strong connectivity of the support digraph (forward and reverse
    /// reachability from node 0).
    pub fn support_strongly_connected(&self) -> bool {
        let n = self.n;
        if n == 1 {
            return true;
        }
        let reach = |reverse: bool| -> bool {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut count = 1;
            while let Some(u) = stack.pop() {
                for v in 0..n {
                    let edge = if reverse { self.is_positive(v, u) } else { self.is_positive(u, v) };
                    if edge && !seen[v] {
                        seen[v] = true;
                        count += 1;
                        stack.push(v);
                    }
                }
            }
            count == n
        };
        reach(false) && reach(true)
    }

    /// Every pair of rows shares a structurally positive column.
    pub fn is_scrambling(&self) -> bool {
        let n = self.n;
        let supports: Vec<u64> = (0..n).map(|i| self.row_support(i)).collect();
        for i in 0..n {
            for j in (i + 1)..n {
                if supports[i] & supports[j] == 0 {
                    return false;
                }
            }
        }
        true
    }

    /// Smallest column index whose entries are all structurally positive,
    /// together with the minimum entry of that column.
    pub fn positive_column_index(&self) -> Option<(usize, f64)> {
        'col: for j in 0..self.n {
            let mut min = f64::INFINITY;
            for i in 0..self.n {
                let e = self.get(i, j);
                if e <= self.zero_tol {
                    continue 'col;
                }
                if e < min {
                    min = e;
                }
            }
            return Some((j, min));
        }
        None
    }

    pub fn positive_diagonal(&self) -> bool {
        (0..self.n).all(|i| self.is_positive(i, i))
    }

    /// Minimum over structurally positive entries (the empirical beta of a
    /// realized matrix).
    pub fn min_positive_entry(&self) -> Result<f64, MatrixError> {
        let mut min = f64::INFINITY;
        for &e in &self.entries {
            if e > self.zero_tol && e < min {
                min = e;
            }
        }
        if min.is_finite() {
            Ok(min)
        } else {
            Err(MatrixError::AllZero)
        }
    }

    /// Max over columns of (max entry - min entry); 0 iff all rows agree.
    pub fn row_spread(&self) -> f64 {
        let n = self.n;
        let mut spread: f64 = 0.0;
        for j in 0..n {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..n {
                let e = self.get(i, j);
                lo = lo.min(e);
                hi = hi.max(e);
            }
            spread = spread.max(hi - lo);
        }
        spread
    }

    /// Max-absolute-entry distance from the identity.
    pub fn max_norm_from_identity(&self) -> f64 {
        let n = self.n;
        let mut norm: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                norm = norm.max(libm::fabs(self.get(i, j) - target));
            }
        }
        norm
    }

    /// Column-wise average of the rows, a stochastic vector.
    pub fn row_average(&self) -> Vec<f64> {
        let n = self.n;
        let mut avg = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                avg[j] += self.get(i, j);
            }
        }
        for a in &mut avg {
            *a /= n as f64;
        }
        avg
    }
}
