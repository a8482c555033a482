//! Sparse symmetric matrix storage (CSR), shifted operators, Matrix Market
//! ingestion and the 2D Laplacian test-matrix generator.

use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Symmetry check tolerance, relative to the largest stored magnitude.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A linear map on R^n. The uniform handle for preconditioned operators
/// like `M (A - tau I) M*` and `T (A - tau I)`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// Writes `self * x` into `y`. Callers guarantee matching lengths.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

/// Compressed sparse row matrix. Immutable after construction, so it can be
/// shared freely across threads; `matvec` is reentrant.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from (row, col, value) triplets, 0-based.
    /// Duplicate entries are summed; columns within each row end up
    /// strictly increasing.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidStructure(format!(
                    "entry ({i}, {j}) out of bounds for dimension {n}"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries of row `i` as (column, value) pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(pos) => Some(self.values[lo + pos]),
            Err(_) => None,
        }
    }

    /// Largest |a_ij - a_ji| over all stored entries (missing mirror entries
    /// count as zero).
    pub fn symmetry_gap(&self) -> f64 {
        let mut gap = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let mirrored = self.get(j, i).unwrap_or(0.0);
                gap = gap.max((v - mirrored).abs());
            }
        }
        gap
    }

    pub fn max_abs_value(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Checks structural and numerical symmetry against `SYMMETRY_TOL`
    /// relative to the largest stored magnitude.
    pub fn check_symmetric(&self) -> Result<()> {
        let tol = SYMMETRY_TOL * self.max_abs_value().max(1.0);
        let gap = self.symmetry_gap();
        if gap > tol {
            return Err(Error::NotSymmetric { gap, tol });
        }
        Ok(())
    }

    /// `A * x`. Allocates only the output vector.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(self.apply(x))
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a[i * self.n + j] = v;
            }
        }
        a
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }
}

/// `A - tau I` applied without forming the shifted matrix.
pub struct ShiftedOperator<'a> {
    base: &'a CsrMatrix,
    shift: f64,
}

impl<'a> ShiftedOperator<'a> {
    pub fn new(base: &'a CsrMatrix, shift: f64) -> Self {
        ShiftedOperator { base, shift }
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }
}

impl LinearOperator for ShiftedOperator<'_> {
    fn dim(&self) -> usize {
        self.base.n
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.base.apply_into(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi -= self.shift * xi;
        }
    }
}

/// Five-point finite-difference Laplacian on the unit square with Dirichlet
/// boundaries and mesh size `h = 2^-s`: the `(2^s - 1)^2` matrix with
/// diagonal `4/h^2` and off-diagonals `-1/h^2` on the stencil.
pub fn gen_laplace_2d(s: u32) -> CsrMatrix {
    assert!(s >= 2, "mesh refinement must be at least 2");
    let grid = (1usize << s) - 1;
    let n = grid * grid;
    let h = 0.5f64.powi(s as i32);
    let scale = 1.0 / (h * h);
    let idx = |r: usize, c: usize| r * grid + c;

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(5 * n);
    let mut values = Vec::with_capacity(5 * n);
    row_ptr.push(0);
    for r in 0..grid {
        for c in 0..grid {
            if r > 0 {
                col_idx.push(idx(r - 1, c));
                values.push(-scale);
            }
            if c > 0 {
                col_idx.push(idx(r, c - 1));
                values.push(-scale);
            }
            col_idx.push(idx(r, c));
            values.push(4.0 * scale);
            if c + 1 < grid {
                col_idx.push(idx(r, c + 1));
                values.push(-scale);
            }
            if r + 1 < grid {
                col_idx.push(idx(r + 1, c));
                values.push(-scale);
            }
            row_ptr.push(col_idx.len());
        }
    }
    CsrMatrix {
        n,
        row_ptr,
        col_idx,
        values,
    }
}

/// The analytic eigenvalues of `gen_laplace_2d(s)`:
/// `lambda_ij = (4/h^2) (sin^2(i pi h / 2) + sin^2(j pi h / 2))`.
pub fn laplace_eigenvalues(s: u32) -> Vec<f64> {
    let grid = (1usize << s) - 1;
    let h = 0.5f64.powi(s as i32);
    let scale = 4.0 / (h * h);
    let one_d: Vec<f64> = (1..=grid)
        .map(|i| {
            let t = (i as f64 * std::f64::consts::PI * h / 2.0).sin();
            scale * t * t
        })
        .collect();
    let mut out = Vec::with_capacity(grid * grid);
    for &li in &one_d {
        for &lj in &one_d {
            out.push(li + lj);
        }
    }
    out
}

/// Counts analytic Laplacian eigenvalues strictly below `tau`.
pub fn count_laplace_eigs_below(s: u32, tau: f64) -> usize {
    laplace_eigenvalues(s).iter().filter(|&&l| l < tau).count()
}

/// Reads a Matrix Market coordinate file (real, symmetric or general).
/// Symmetric storage is expanded to full CSR; duplicates are summed; general
/// inputs must still be numerically symmetric.
pub fn read_matrix_market<P: AsRef<Path>>(path: P) -> Result<CsrMatrix> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            msg: "empty file".into(),
        })
        .and_then(|(i, l)| l.map(|l| (i, l)).map_err(Error::Io))?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_lowercase()).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Parse {
            line: 1,
            msg: "expected `%%MatrixMarket matrix ...` header".into(),
        });
    }
    if tokens[2] != "coordinate" {
        return Err(Error::UnsupportedField(format!(
            "format `{}` (only coordinate supported)",
            tokens[2]
        )));
    }
    match tokens[3].as_str() {
        "real" | "integer" => {}
        other => return Err(Error::UnsupportedField(format!("field `{other}`"))),
    }
    let symmetric = match tokens[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => return Err(Error::UnsupportedField(format!("symmetry `{other}`"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (line_idx, line) in lines {
        let line = line?;
        let line_no = line_idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split_whitespace().collect();
        if size.is_none() {
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "expected `rows cols nnz`".into(),
                });
            }
            let rows = parse_usize(parts[0], line_no)?;
            let cols = parse_usize(parts[1], line_no)?;
            let nnz = parse_usize(parts[2], line_no)?;
            if rows != cols {
                return Err(Error::NotSquare { rows, cols });
            }
            size = Some((rows, cols, nnz));
            triplets.reserve(if symmetric { 2 * nnz } else { nnz });
            continue;
        }
        if parts.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `i j value`, got {} fields", parts.len()),
            });
        }
        let i = parse_usize(parts[0], line_no)?;
        let j = parse_usize(parts[1], line_no)?;
        let v: f64 = parts[2].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad value `{}`", parts[2]),
        })?;
        let (n, _, _) = size.unwrap();
        if i == 0 || j == 0 || i > n || j > n {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("index ({i}, {j}) out of range for dimension {n}"),
            });
        }
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    let (n, _, expected_nnz) = size.ok_or(Error::Parse {
        line: 1,
        msg: "missing size line".into(),
    })?;
    let stored = if symmetric {
        triplets.iter().filter(|t| t.0 <= t.1).count()
    } else {
        triplets.len()
    };
    if stored != expected_nnz {
        return Err(Error::Parse {
            line: 0,
            msg: format!("expected {expected_nnz} entries, found {stored}"),
        });
    }
    let matrix = CsrMatrix::from_triplets(n, &triplets)?;
    matrix.check_symmetric()?;
    Ok(matrix)
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad integer `{tok}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn diag(values: &[f64]) -> CsrMatrix {
        let triplets: Vec<(usize, usize, f64)> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, i, v))
            .collect();
        CsrMatrix::from_triplets(values.len(), &triplets).unwrap()
    }

    #[test]
    fn matvec_identity() {
        let a = diag(&[1.0, 1.0, 1.0]);
        assert_eq!(a.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn matvec_diagonal() {
        let a = diag(&[-4.0, 9.0]);
        assert_eq!(a.matvec(&[1.0, 1.0]).unwrap(), vec![-4.0, 9.0]);
    }

    #[test]
    fn matvec_laplace_s2_first_column() {
        // Five-point stencil on the 3x3 interior grid, h = 1/4: row 0 couples
        // to its right neighbor (index 1) and the node below (index 3).
        let a = gen_laplace_2d(2);
        let mut e1 = vec![0.0; 9];
        e1[0] = 1.0;
        let y = a.matvec(&e1).unwrap();
        let expected = [64.0, -16.0, 0.0, -16.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        for (yi, ei) in y.iter().zip(expected.iter()) {
            assert_eq!(yi, ei);
        }
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let a = diag(&[1.0, 2.0]);
        assert!(matches!(
            a.matvec(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matvec_linearity() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = gen_laplace_2d(3);
        let n = a.dim();
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (al, be) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let mixed: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| al * xi + be * yi).collect();
            let lhs = a.matvec(&mixed).unwrap();
            let ax = a.matvec(&x).unwrap();
            let ay = a.matvec(&y).unwrap();
            let scale = lhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for i in 0..n {
                assert!((lhs[i] - (al * ax[i] + be * ay[i])).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn laplace_dimensions_and_diagonal() {
        let a = gen_laplace_2d(7);
        assert_eq!(a.dim(), 16_129);
        let a = gen_laplace_2d(2);
        assert_eq!(a.dim(), 9);
        for i in 0..9 {
            assert_eq!(a.get(i, i), Some(64.0));
        }
    }

    #[test]
    fn laplace_smallest_eigenvalue_s3() {
        let mut eigs = laplace_eigenvalues(3);
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = 0.125;
        let expected = (4.0 / (h * h)) * 2.0 * (std::f64::consts::PI * h / 2.0).sin().powi(2);
        assert!((eigs[0] - expected).abs() < 1e-10);
        assert!((eigs[0] - 19.4868).abs() < 1e-3);
    }

    #[test]
    fn laplace_count_table1() {
        // The reproduction anchor for everything downstream: the analytic
        // oracle must give exactly 226 for s=7, tau=3000.
        assert_eq!(count_laplace_eigs_below(7, 3000.0), 226);
    }

    #[test]
    fn laplace_count_trivial_and_interior() {
        assert_eq!(count_laplace_eigs_below(2, 0.0), 0);
        // Frozen from the enumeration oracle (sorted analytic spectrum).
        assert_eq!(count_laplace_eigs_below(4, 1020.0), 105);
        let mut eigs = laplace_eigenvalues(4);
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let below = eigs.iter().filter(|&&l| l < 1020.0).count();
        assert_eq!(below, 105);
    }

    #[test]
    fn shifted_operator_matches_manual() {
        let a = diag(&[-4.0, 9.0]);
        let op = ShiftedOperator::new(&a, 2.0);
        assert_eq!(op.apply(&[1.0, 1.0]), vec![-6.0, 7.0]);
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn mm_symmetric_diag() {
        let f = write_tmp(
            "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 -4.0\n2 2 9.0\n",
        );
        let a = read_matrix_market(f.path()).unwrap();
        assert_eq!(a.get(0, 0), Some(-4.0));
        assert_eq!(a.get(1, 1), Some(9.0));
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn mm_general_symmetric_pair() {
        let f = write_tmp(
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 2 0.5\n2 1 0.5\n",
        );
        let a = read_matrix_market(f.path()).unwrap();
        assert!(a.check_symmetric().is_ok());
    }

    #[test]
    fn mm_symmetric_mirrors_lower_triangle() {
        let f = write_tmp(
            "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n2 1 0.5\n",
        );
        let a = read_matrix_market(f.path()).unwrap();
        assert_eq!(a.get(0, 1), Some(0.5));
        assert_eq!(a.get(1, 0), Some(0.5));
    }

    #[test]
    fn mm_duplicates_summed() {
        let f = write_tmp(
            "%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1.5\n1 1 2.5\n",
        );
        let a = read_matrix_market(f.path()).unwrap();
        assert_eq!(a.get(0, 0), Some(4.0));
    }

    #[test]
    fn mm_rejects_non_square_and_complex() {
        let f = write_tmp("%%MatrixMarket matrix coordinate real general\n2 3 1\n1 1 1.0\n");
        assert!(matches!(
            read_matrix_market(f.path()),
            Err(Error::NotSquare { .. })
        ));
        let f = write_tmp("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1.0 0.0\n");
        assert!(matches!(
            read_matrix_market(f.path()),
            Err(Error::UnsupportedField(_))
        ));
    }

    #[test]
    fn mm_parse_error_carries_line_number() {
        let f = write_tmp("%%MatrixMarket matrix coordinate real general\n1 1 1\n1 oops 1.0\n");
        match read_matrix_market(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn mm_rejects_asymmetric_general() {
        let f = write_tmp("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 0.5\n");
        assert!(matches!(
            read_matrix_market(f.path()),
            Err(Error::NotSymmetric { .. })
        ));
    }
}
