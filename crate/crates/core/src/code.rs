//! CSS codes and the bivariate bicycle construction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gf2::{BitMatrix, BitVec};
use crate::CoreError;

/// `x^a y^b` in `F2[x, y] / (x^l - 1, y^m - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Monomial {
    pub x_exp: u32,
    pub y_exp: u32,
}

impl Monomial {
    pub const ONE: Monomial = Monomial { x_exp: 0, y_exp: 0 };

    pub const fn x(e: u32) -> Self {
        Monomial { x_exp: e, y_exp: 0 }
    }

    pub const fn y(e: u32) -> Self {
        Monomial { x_exp: 0, y_exp: e }
    }

    pub const fn xy(x_exp: u32, y_exp: u32) -> Self {
        Monomial { x_exp, y_exp }
    }
}

/// A CSS stabilizer code with a paired basis of logical operators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CssCode {
    pub n: usize,
    /// X-type checks, one per row.
    pub hx: BitMatrix,
    /// Z-type checks, one per row.
    pub hz: BitMatrix,
    pub logical_x: Vec<BitVec>,
    pub logical_z: Vec<BitVec>,
    pub k: usize,
}

impl CssCode {
    /// Validates commutation and derives a paired logical basis.
    pub fn new(hx: BitMatrix, hz: BitMatrix) -> Result<Self, CoreError> {
        if hx.cols() != hz.cols() {
            return Err(CoreError::InvalidCode(format!(
                "hx has {} columns but hz has {}",
                hx.cols(),
                hz.cols()
            )));
        }
        if !hx.mul(&hz.transpose()).is_zero() {
            return Err(CoreError::InvalidCode("X and Z checks do not commute".into()));
        }
        let n = hx.cols();
        let (logical_x, logical_z) = logical_operators(&hx, &hz);
        let k = n - hx.rank() - hz.rank();
        debug_assert_eq!(k, logical_x.len());
        Ok(Self {
            n,
            hx,
            hz,
            logical_x,
            logical_z,
            k,
        })
    }

    pub fn num_x_checks(&self) -> usize {
        self.hx.rows()
    }

    pub fn num_z_checks(&self) -> usize {
        self.hz.rows()
    }

    /// Distance-`d` bit-flip repetition code protecting against Z errors:
    /// adjacent-pair X checks and no Z checks.
    pub fn repetition(d: usize) -> Result<Self, CoreError> {
        if d < 2 {
            return Err(CoreError::InvalidCode(format!("repetition distance {d} < 2")));
        }
        let mut hx = BitMatrix::zeros(d - 1, d);
        for i in 0..d - 1 {
            hx.set(i, i, true);
            hx.set(i, i + 1, true);
        }
        Self::new(hx, BitMatrix::zeros(0, d))
    }
}

/// Cyclic-shift representation of `sum of monomials` as an `lm x lm` matrix,
/// with qubit `(i, j)` at index `i*m + j`.
fn polynomial_matrix(l: usize, m: usize, terms: &[Monomial]) -> BitMatrix {
    let size = l * m;
    let mut out = BitMatrix::zeros(size, size);
    for t in terms {
        for i in 0..l {
            for j in 0..m {
                let row = i * m + j;
                let col = ((i + t.x_exp as usize) % l) * m + (j + t.y_exp as usize) % m;
                out.flip(row, col);
            }
        }
    }
    out
}

/// Builds the BB code with `hx = [A | B]` and `hz = [B^T | A^T]`.
pub fn build_bb_code(
    l: usize,
    m: usize,
    a_terms: &[Monomial],
    b_terms: &[Monomial],
) -> Result<CssCode, CoreError> {
    if l < 2 || m < 2 {
        return Err(CoreError::InvalidCode(format!("group orders must be >= 2, got l={l}, m={m}")));
    }
    if a_terms.is_empty() || b_terms.is_empty() {
        return Err(CoreError::InvalidCode("polynomials must have at least one term".into()));
    }
    for t in a_terms.iter().chain(b_terms) {
        if t.x_exp as usize >= l || t.y_exp as usize >= m {
            return Err(CoreError::InvalidCode(format!(
                "monomial x^{} y^{} not reduced for l={l}, m={m}",
                t.x_exp, t.y_exp
            )));
        }
    }
    let a = polynomial_matrix(l, m, a_terms);
    let b = polynomial_matrix(l, m, b_terms);
    let hx = a.hstack(&b);
    let hz = b.transpose().hstack(&a.transpose());
    CssCode::new(hx, hz)
}

/// Row-reduced basis supporting incremental membership tests.
struct EchelonBasis {
    rows: Vec<(usize, BitVec)>,
}

impl EchelonBasis {
    fn new() -> Self {
        Self { rows: Vec::new() }
    }

    fn reduce(&self, v: &BitVec) -> BitVec {
        let mut v = v.clone();
        for (pivot, row) in &self.rows {
            if v.get(*pivot) {
                v.xor_assign(row);
            }
        }
        v
    }

    /// Inserts `v`; returns false if it was already in the span.
    fn insert(&mut self, v: &BitVec) -> bool {
        let r = self.reduce(v);
        let first = r.iter_ones().next();
        match first {
            None => false,
            Some(pivot) => {
                for (_, row) in self.rows.iter_mut() {
                    if row.get(pivot) {
                        row.xor_assign(&r);
                    }
                }
                self.rows.push((pivot, r));
                true
            }
        }
    }
}

/// Kernel vectors of `commute_with` that are independent of `stabilizers`,
/// taken greedily in kernel-basis order.
fn independent_kernel_vectors(commute_with: &BitMatrix, stabilizers: &BitMatrix) -> Vec<BitVec> {
    let mut span = EchelonBasis::new();
    for r in 0..stabilizers.rows() {
        span.insert(&stabilizers.row(r));
    }
    commute_with
        .nullspace()
        .into_iter()
        .filter(|v| span.insert(v))
        .collect()
}

/// Returns `k` X-type and `k` Z-type logical representatives with
/// `logical_x[i] · logical_z[j] = δ_ij`.
pub fn logical_operators(hx: &BitMatrix, hz: &BitMatrix) -> (Vec<BitVec>, Vec<BitVec>) {
    let lx = independent_kernel_vectors(hz, hx);
    let lz = independent_kernel_vectors(hx, hz);
    assert_eq!(lx.len(), lz.len(), "logical X and Z counts differ");
    let k = lx.len();
    if k == 0 {
        return (lx, lz);
    }
    let n = hx.cols();
    let lx_m = BitMatrix::from_rows(n, &lx);
    let lz_m = BitMatrix::from_rows(n, &lz);
    let pairing = lx_m.mul(&lz_m.transpose());
    let inv = pairing
        .inverse()
        .expect("logical pairing matrix of a valid CSS code is invertible");
    let lz_paired = inv.transpose().mul(&lz_m);
    let lz = (0..k).map(|i| lz_paired.row(i)).collect();
    (lx, lz)
}

/// Named codes accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodePreset {
    /// `[[72,12,6]]`: l = m = 6, A = x^3 + y + y^2, B = y^3 + x + x^2.
    Bb72,
    /// `[[144,12,12]]`: l = 12, m = 6, same polynomials.
    Bb144,
}

impl CodePreset {
    /// `(l, m, A terms, B terms)`.
    pub fn parameters(self) -> (usize, usize, [Monomial; 3], [Monomial; 3]) {
        let a = [Monomial::x(3), Monomial::y(1), Monomial::y(2)];
        let b = [Monomial::y(3), Monomial::x(1), Monomial::x(2)];
        match self {
            CodePreset::Bb72 => (6, 6, a, b),
            CodePreset::Bb144 => (12, 6, a, b),
        }
    }

    pub fn build(self) -> CssCode {
        let (l, m, a, b) = self.parameters();
        build_bb_code(l, m, &a, &b).expect("preset parameters are valid")
    }

    /// The interleaved depth-7 syndrome-extraction schedule.
    pub fn schedule(self) -> crate::circuit::CnotSchedule {
        let (l, m, a, b) = self.parameters();
        crate::circuit::CnotSchedule::bivariate_bicycle(l, m, &a, &b).expect("presets have three-term polynomials")
    }
}

impl FromStr for CodePreset {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bb72" => Ok(CodePreset::Bb72),
            "bb144" => Ok(CodePreset::Bb144),
            other => Err(CoreError::InvalidCode(format!("unknown code preset `{other}`"))),
        }
    }
}

impl fmt::Display for CodePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodePreset::Bb72 => "bb72",
            CodePreset::Bb144 => "bb144",
        })
    }
}
