//! Dense bit-packed linear algebra over GF(2).
//!
//! Rows are stored as contiguous `u64` words so that elimination is a
//! sequence of word-level XORs. Pivoting always takes the first nonzero
//! column scanning left to right and the first candidate row scanning top to
//! bottom, which keeps every result reproducible.

use std::fmt;

const WORD: usize = 64;

#[inline]
fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD)
}

/// A vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVec {
    words: Vec<u64>,
    len: usize,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            assert!(b <= 1, "non-binary entry {b} at index {i}");
            if b == 1 {
                v.set(i, true);
            }
        }
        v
    }

    pub fn from_ones(len: usize, ones: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::zeros(len);
        for i in ones {
            v.flip(i);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range (len {})", self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range (len {})", self.len);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range (len {})", self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        assert_eq!(self.len, other.len, "length mismatch in xor");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitVec) -> bool {
        assert_eq!(self.len, other.len, "length mismatch in dot product");
        self.words
            .iter()
            .zip(&other.words)
            .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones())
            & 1
            == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let tz = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * WORD + tz)
            })
        })
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| self.get(i) as u8).collect()
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(s: &str) -> Option<Self> {
        let mut v = Self::zeros(s.len());
        for (i, c) in s.bytes().enumerate() {
            match c {
                b'0' => {}
                b'1' => v.flip(i),
                _ => return None,
            }
        }
        Some(v)
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({self})")
    }
}

/// A row-major bit-packed matrix over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        Self {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// Builds a matrix from dense 0/1 rows. All rows must share a length.
    pub fn from_dense(rows: &[Vec<u8>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged dense matrix at row {r}");
            for (c, &b) in row.iter().enumerate() {
                assert!(b <= 1, "non-binary entry {b} at ({r}, {c})");
                if b == 1 {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    pub fn from_rows(cols: usize, rows: &[BitVec]) -> Self {
        let mut m = Self::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "row {r} has wrong length");
            m.row_words_mut(r).copy_from_slice(row.words());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(r < self.rows && c < self.cols, "index ({r}, {c}) out of range");
        (self.data[r * self.stride + c / WORD] >> (c % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(r < self.rows && c < self.cols, "index ({r}, {c}) out of range");
        let mask = 1u64 << (c % WORD);
        let w = &mut self.data[r * self.stride + c / WORD];
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, r: usize, c: usize) {
        assert!(r < self.rows && c < self.cols, "index ({r}, {c}) out of range");
        self.data[r * self.stride + c / WORD] ^= 1u64 << (c % WORD);
    }

    #[inline]
    pub fn row_words(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    #[inline]
    fn row_words_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.data[r * self.stride..(r + 1) * self.stride]
    }

    pub fn row(&self, r: usize) -> BitVec {
        BitVec {
            words: self.row_words(r).to_vec(),
            len: self.cols,
        }
    }

    pub fn row_weight(&self, r: usize) -> usize {
        self.row_words(r).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Column indices of the set bits in row `r`, ascending.
    pub fn row_support(&self, r: usize) -> Vec<usize> {
        self.row(r).iter_ones().collect()
    }

    /// `row[dst] ^= row[src]`.
    #[inline]
    pub fn xor_row_into(&mut self, src: usize, dst: usize) {
        assert_ne!(src, dst);
        let s = self.stride;
        if src < dst {
            let (a, b) = self.data.split_at_mut(dst * s);
            for (d, x) in b[..s].iter_mut().zip(&a[src * s..(src + 1) * s]) {
                *d ^= x;
            }
        } else {
            let (a, b) = self.data.split_at_mut(src * s);
            for (d, x) in a[dst * s..(dst + 1) * s].iter_mut().zip(&b[..s]) {
                *d ^= x;
            }
        }
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let s = self.stride;
        for w in 0..s {
            self.data.swap(a * s + w, b * s + w);
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in self.row(r).iter_ones() {
                t.set(c, r, true);
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &BitVec) -> BitVec {
        assert_eq!(x.len(), self.cols, "dimension mismatch in matrix-vector product");
        let mut out = BitVec::zeros(self.rows);
        for r in 0..self.rows {
            let parity = self
                .row_words(r)
                .iter()
                .zip(x.words())
                .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones());
            if parity & 1 == 1 {
                out.flip(r);
            }
        }
        out
    }

    pub fn mul(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in matrix product");
        let mut out = BitMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in self.row(r).iter_ones() {
                let s = out.stride;
                let src = other.row_words(k);
                for (d, x) in out.data[r * s..(r + 1) * s].iter_mut().zip(src) {
                    *d ^= x;
                }
            }
        }
        out
    }

    pub fn hstack(&self, right: &BitMatrix) -> BitMatrix {
        assert_eq!(self.rows, right.rows, "row mismatch in hstack");
        let mut out = BitMatrix::zeros(self.rows, self.cols + right.cols);
        for r in 0..self.rows {
            for c in self.row(r).iter_ones() {
                out.set(r, c, true);
            }
            for c in right.row(r).iter_ones() {
                out.set(r, self.cols + c, true);
            }
        }
        out
    }

    pub fn vstack(&self, below: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, below.cols, "column mismatch in vstack");
        let mut data = self.data.clone();
        data.extend_from_slice(&below.data);
        BitMatrix {
            rows: self.rows + below.rows,
            cols: self.cols,
            stride: self.stride,
            data,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&w| w == 0)
    }

    /// Reduces `self` in place to reduced row echelon form and returns the
    /// pivot column of each of the leading `rank` rows.
    pub fn rref_in_place(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut rank = 0;
        for c in 0..self.cols {
            if rank == self.rows {
                break;
            }
            let (wi, mask) = (c / WORD, 1u64 << (c % WORD));
            let Some(p) = (rank..self.rows).find(|&r| self.data[r * self.stride + wi] & mask != 0)
            else {
                continue;
            };
            self.swap_rows(rank, p);
            for r in 0..self.rows {
                if r != rank && self.data[r * self.stride + wi] & mask != 0 {
                    self.xor_row_into(rank, r);
                }
            }
            pivots.push(c);
            rank += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        self.clone().rref_in_place().len()
    }

    /// Solves `self · x = b`. Returns `None` when the system is inconsistent.
    pub fn solve(&self, b: &BitVec) -> Option<BitVec> {
        assert_eq!(b.len(), self.rows, "right-hand side length must equal row count");
        let mut aug = self.hstack(&column(b));
        let pivots = aug.rref_in_place();
        if pivots.last() == Some(&self.cols) {
            return None;
        }
        let mut x = BitVec::zeros(self.cols);
        for (i, &p) in pivots.iter().enumerate() {
            if aug.get(i, self.cols) {
                x.set(p, true);
            }
        }
        Some(x)
    }

    /// A basis of `{x : self · x = 0}`, one vector per free column.
    pub fn nullspace(&self) -> Vec<BitVec> {
        let mut r = self.clone();
        let pivots = r.rref_in_place();
        let mut is_pivot = vec![false; self.cols];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        (0..self.cols)
            .filter(|&f| !is_pivot[f])
            .map(|f| {
                let mut x = BitVec::zeros(self.cols);
                x.set(f, true);
                for (i, &p) in pivots.iter().enumerate() {
                    if r.get(i, f) {
                        x.set(p, true);
                    }
                }
                x
            })
            .collect()
    }

    /// Inverse of a square matrix, if it is nonsingular.
    pub fn inverse(&self) -> Option<BitMatrix> {
        assert_eq!(self.rows, self.cols, "inverse of a non-square matrix");
        let n = self.rows;
        let mut aug = self.hstack(&BitMatrix::identity(n));
        let pivots = aug.rref_in_place();
        if pivots.len() < n || pivots[n - 1] >= n {
            return None;
        }
        let mut inv = BitMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                if aug.get(r, n + c) {
                    inv.set(r, c, true);
                }
            }
        }
        Some(inv)
    }
}

fn column(b: &BitVec) -> BitMatrix {
    let mut m = BitMatrix::zeros(b.len(), 1);
    for i in b.iter_ones() {
        m.set(i, 0, true);
    }
    m
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {}", self.row(r))?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> BitMatrix {
        let mut m = BitMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if rng.random_bool(density) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    #[test]
    fn identity_rank() {
        assert_eq!(BitMatrix::identity(4).rank(), 4);
    }

    #[test]
    fn zero_rank() {
        assert_eq!(BitMatrix::zeros(3, 5).rank(), 0);
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let b = BitVec::from_bits(&[1, 0, 1, 1]);
        assert_eq!(BitMatrix::identity(4).solve(&b), Some(b));
    }

    #[test]
    fn solve_zero_matrix_inconsistent() {
        let b = BitVec::from_bits(&[0, 1, 0]);
        assert_eq!(BitMatrix::zeros(3, 4).solve(&b), None);
        assert_eq!(BitMatrix::zeros(3, 4).solve(&BitVec::zeros(3)), Some(BitVec::zeros(4)));
    }

    #[test]
    fn solve_random_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut solved = 0;
        for _ in 0..50 {
            let m = random_matrix(&mut rng, 8, 8, 0.5);
            if m.rank() < 8 {
                continue;
            }
            let x0 = BitVec::from_bits(&(0..8).map(|_| rng.random_range(0..2)).collect::<Vec<u8>>());
            let b = m.mul_vec(&x0);
            let x = m.solve(&b).expect("full rank system is consistent");
            assert_eq!(m.mul_vec(&x), b);
            assert_eq!(x, x0, "full rank solution is unique");
            solved += 1;
        }
        assert!(solved > 5);
    }

    #[test]
    #[should_panic]
    fn solve_dimension_mismatch_panics() {
        BitMatrix::identity(3).solve(&BitVec::zeros(4));
    }

    #[test]
    fn nullspace_edge_cases() {
        assert!(BitMatrix::identity(3).nullspace().is_empty());
        assert_eq!(BitMatrix::zeros(2, 4).nullspace().len(), 4);
    }

    #[test]
    fn nullspace_matches_exhaustive_search() {
        let m = BitMatrix::from_dense(&[vec![1, 1, 0], vec![0, 1, 1]]);
        // Exhaustive: the only nonzero kernel vector among the 8 candidates.
        let kernel: Vec<u8> = (0u8..8)
            .filter(|&v| {
                let x = BitVec::from_bits(&[(v >> 0) & 1, (v >> 1) & 1, (v >> 2) & 1]);
                v != 0 && m.mul_vec(&x).is_zero()
            })
            .collect();
        assert_eq!(kernel, vec![0b111]);
        assert_eq!(m.nullspace(), vec![BitVec::from_bits(&[1, 1, 1])]);
    }

    #[test]
    fn inverse_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 10, 10, 0.4);
            match m.inverse() {
                Some(inv) => assert_eq!(m.mul(&inv), BitMatrix::identity(10)),
                None => assert!(m.rank() < 10),
            }
        }
    }

    #[test]
    fn bitvec_display_parse() {
        let v = BitVec::from_bits(&[0, 1, 1, 0, 1]);
        assert_eq!(v.to_string(), "01101");
        assert_eq!(BitVec::parse("01101"), Some(v));
        assert_eq!(BitVec::parse("01x"), None);
    }

    #[test]
    fn iter_ones_crosses_words() {
        let v = BitVec::from_ones(150, [0, 63, 64, 149]);
        assert_eq!(v.iter_ones().collect::<Vec<_>>(), vec![0, 63, 64, 149]);
        assert_eq!(v.count_ones(), 4);
    }

    proptest! {
        #[test]
        fn rank_plus_nullity(rows in 1usize..20, cols in 1usize..90, seed in any::<u64>(), density in 0.05f64..0.9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, rows, cols, density);
            let rank = m.rank();
            prop_assert!(rank <= rows.min(cols));
            let kernel = m.nullspace();
            prop_assert_eq!(rank + kernel.len(), cols);
            for x in &kernel {
                prop_assert!(m.mul_vec(x).is_zero());
            }
        }

        #[test]
        fn solve_result_satisfies_system(rows in 1usize..16, cols in 1usize..70, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, rows, cols, 0.3);
            let b = BitVec::from_bits(&(0..rows).map(|_| rng.random_range(0..2)).collect::<Vec<u8>>());
            if let Some(x) = m.solve(&b) {
                prop_assert_eq!(m.mul_vec(&x), b);
            } else {
                // Inconsistent means b lies outside the column space.
                let aug = m.hstack(&column(&b));
                prop_assert_eq!(aug.rank(), m.rank() + 1);
            }
        }

        #[test]
        fn rank_invariant_under_row_ops(rows in 2usize..16, cols in 1usize..70, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, rows, cols, 0.4);
            let mut n = m.clone();
            for _ in 0..30 {
                let a = rng.random_range(0..rows);
                let b = rng.random_range(0..rows);
                if rng.random_bool(0.5) {
                    n.swap_rows(a, b);
                } else if a != b {
                    n.xor_row_into(a, b);
                }
            }
            prop_assert_eq!(m.rank(), n.rank());
        }
    }
}
