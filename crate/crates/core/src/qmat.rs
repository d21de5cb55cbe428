//! Complex matrix and quantum-state primitives.
//!
//! # Basis convention
//!
//! The joint two-qubit basis is ordered `{|L,H⟩, |L,V⟩, |R,H⟩, |R,V⟩}`:
//! the electron path qubit (`L`/`R`) is the **first** tensor factor and
//! indexes the slow axis, the photon polarisation (`H`/`V`) is the second.
//! Every matrix index in the crate follows this ordering, and
//! [`tensor`] builds Kronecker products with the same electron-first
//! convention. On the single-qubit Bloch sphere, `z = H/V`, `x = D/A`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::{Add, Index, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{fmt17, Error, Result};

/// Hermiticity tolerance for density matrices.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Lower bound on density-matrix eigenvalues.
pub const EIGENVALUE_FLOOR: f64 = -1e-10;
/// Trace tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-12;
/// Off-diagonal tolerance for the cyclic Jacobi eigensolver.
const JACOBI_TOL: f64 = 1e-13;
/// Sweep cap for the cyclic Jacobi eigensolver.
const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries; all entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidValue("non-finite matrix entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// 2x2 matrix from row-major entries.
    pub fn mat2(e: [Complex64; 4]) -> Self {
        Self {
            rows: 2,
            cols: 2,
            data: e.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)].conj())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        assert!(self.is_square(), "trace of a non-square matrix");
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry-wise deviation from Hermiticity, `max |A - A†|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        assert!(self.is_square());
        let mut dev: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Complex64 {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = Complex64::ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::ZERO {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Kronecker product with the first factor on the slow axis
/// (electron-first convention). Both factors must be square.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() || !b.is_square() {
        return Err(Error::Dimension("tensor factors must be square".into()));
    }
    let (na, nb) = (a.rows, b.rows);
    Ok(ComplexMatrix::from_fn(na * nb, na * nb, |i, j| {
        a[(i / nb, j / nb)] * b[(i % nb, j % nb)]
    }))
}

/// Tensor factor selector for [`partial_transpose`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    /// The electron path factor.
    First,
    /// The photon polarisation factor.
    Second,
}

/// Transposition applied to one tensor factor of a two-qubit state.
pub fn partial_transpose(rho: &DensityMatrix, subsystem: Subsystem) -> Result<ComplexMatrix> {
    if rho.dim() != 4 {
        return Err(Error::Dimension(format!(
            "partial transpose needs dimension 4, got {}",
            rho.dim()
        )));
    }
    let m = rho.mat();
    let out = match subsystem {
        // out[(a,s),(b,t)] = in[(b,s),(a,t)]
        Subsystem::First => ComplexMatrix::from_fn(4, 4, |i, j| {
            let (a, s) = (i / 2, i % 2);
            let (b, t) = (j / 2, j % 2);
            m[(2 * b + s, 2 * a + t)]
        }),
        // out[(a,s),(b,t)] = in[(a,t),(b,s)]
        Subsystem::Second => ComplexMatrix::from_fn(4, 4, |i, j| {
            let (a, s) = (i / 2, i % 2);
            let (b, t) = (j / 2, j % 2);
            m[(2 * a + t, 2 * b + s)]
        }),
    };
    Ok(out)
}

/// Eigenvalues of a Hermitian matrix, sorted ascending.
///
/// Rejects inputs whose Hermiticity deviation exceeds 1e-10. Uses the closed
/// form at dimension 2 and cyclic Jacobi sweeps otherwise.
pub fn herm_eigvals(h: &ComplexMatrix) -> Result<Vec<f64>> {
    Ok(herm_eig(h)?.0)
}

/// Eigen-decomposition of a Hermitian matrix: `(values ascending, vectors)`,
/// with eigenvectors as the columns of a unitary matrix in matching order.
pub fn herm_eig(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !h.is_square() {
        return Err(Error::Dimension("eigensolver needs a square matrix".into()));
    }
    let dev = h.hermiticity_deviation();
    if dev > 1e-10 {
        return Err(Error::NotHermitian { dev });
    }
    let n = h.rows;
    if n == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let (vals, vecs) = if n == 1 {
        (vec![h[(0, 0)].re], ComplexMatrix::identity(1))
    } else if n == 2 {
        herm_eig_2x2(h)
    } else {
        jacobi_eig(h)
    };
    Ok(sort_eig(vals, vecs))
}

/// Stable unitary rotation for the Hermitian block `[[α, β],[β̄, γ]]`:
/// returns `(V, λ0, λ1)` with `V† B V = diag(λ0, λ1)` and `V` row-major.
///
/// Uses the classic Jacobi parametrisation (phase factor plus the small
/// root of `t² + 2τt − 1 = 0`), which tends smoothly to the identity as
/// `|β| → 0` instead of losing rank to cancellation.
fn block_rotation(alpha: f64, gamma: f64, beta: Complex64) -> ([Complex64; 4], f64, f64) {
    let b = beta.norm();
    let phase = beta / b;
    let tau = (gamma - alpha) / (2.0 * b);
    let t = if tau.abs() == f64::INFINITY {
        0.0
    } else {
        tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    // V = diag(1, e^{-iφ}) · [[c, s], [−s, c]] with φ = arg β.
    let v = [
        Complex64::new(c, 0.0),
        Complex64::new(s, 0.0),
        -phase.conj() * s,
        phase.conj() * c,
    ];
    (v, alpha - t * b, gamma + t * b)
}

/// Closed-form Hermitian 2x2 eigen-decomposition.
fn herm_eig_2x2(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let alpha = h[(0, 0)].re;
    let gamma = h[(1, 1)].re;
    let beta = h[(0, 1)];
    if beta.norm() == 0.0 {
        return (vec![alpha, gamma], ComplexMatrix::identity(2));
    }
    let (v, l0, l1) = block_rotation(alpha, gamma, beta);
    (vec![l0, l1], ComplexMatrix::mat2(v))
}

/// Cyclic Jacobi diagonalisation for Hermitian matrices.
fn jacobi_eig(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = h.rows;
    let mut a = h.clone();
    let mut q = ComplexMatrix::identity(n);
    let scale = 1.0 + a.frobenius_norm();
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)].norm_sqr();
            }
        }
        if off.sqrt() <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let beta = a[(p, r)];
                if beta.norm() == 0.0 {
                    continue;
                }
                let alpha = a[(p, p)].re;
                let gamma = a[(r, r)].re;
                let (v, _, _) = block_rotation(alpha, gamma, beta);
                let v0 = [v[0], v[2]];
                let v1 = [v[1], v[3]];
                // Right-multiply columns p, r of a and q by V.
                for i in 0..n {
                    let (ap, ar) = (a[(i, p)], a[(i, r)]);
                    a.set(i, p, ap * v0[0] + ar * v0[1]);
                    a.set(i, r, ap * v1[0] + ar * v1[1]);
                    let (qp, qr) = (q[(i, p)], q[(i, r)]);
                    q.set(i, p, qp * v0[0] + qr * v0[1]);
                    q.set(i, r, qp * v1[0] + qr * v1[1]);
                }
                // Left-multiply rows p, r of a by V†.
                for j in 0..n {
                    let (ap, ar) = (a[(p, j)], a[(r, j)]);
                    a.set(p, j, v0[0].conj() * ap + v0[1].conj() * ar);
                    a.set(r, j, v1[0].conj() * ap + v1[1].conj() * ar);
                }
                let zero = Complex64::ZERO;
                a.set(p, r, zero);
                a.set(r, p, zero);
            }
        }
    }
    let vals = (0..n).map(|i| a[(i, i)].re).collect();
    (vals, q)
}

fn sort_eig(vals: Vec<f64>, vecs: ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let sorted_vals: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let sorted_vecs = ComplexMatrix::from_fn(n, n, |i, j| vecs[(i, order[j])]);
    (sorted_vals, sorted_vecs)
}

/// Hermitian, positive semidefinite, unit-trace matrix of dimension 2 or 4.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates all invariants: square of dimension 2 or 4, Hermitian within
    /// 1e-12, eigenvalues ≥ −1e-10, unit trace within 1e-12.
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        if !mat.is_square() || !(mat.rows == 2 || mat.rows == 4) {
            return Err(Error::Dimension(format!(
                "density matrix must be 2x2 or 4x4, got {}x{}",
                mat.rows, mat.cols
            )));
        }
        let dev = mat.hermiticity_deviation();
        if dev > HERMITICITY_TOL {
            return Err(Error::NotHermitian { dev });
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidValue(format!(
                "density matrix trace {} + {}i, expected 1",
                tr.re, tr.im
            )));
        }
        let eigs = herm_eigvals(&mat)?;
        if eigs[0] < EIGENVALUE_FLOOR {
            return Err(Error::NotPositiveSemidefinite { min_eig: eigs[0] });
        }
        Ok(Self { mat })
    }

    /// Constructor for matrices that are valid states by construction
    /// (e.g. `M M† / tr` quotients). Debug builds still validate.
    pub(crate) fn new_unchecked(mat: ComplexMatrix) -> Self {
        debug_assert!(mat.hermiticity_deviation() <= 1e-9);
        debug_assert!((mat.trace().re - 1.0).abs() <= 1e-9);
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.rows
    }

    pub fn mat(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_mat(self) -> ComplexMatrix {
        self.mat
    }

    /// Maximally mixed state `I/n`.
    pub fn maximally_mixed(dim: usize) -> Self {
        let s = Complex64::new(1.0 / dim as f64, 0.0);
        Self {
            mat: ComplexMatrix::identity(dim).scale(s),
        }
    }

    /// Projector onto a pure state.
    pub fn from_pure(psi: &PureState) -> Self {
        let n = psi.dim();
        let mat = ComplexMatrix::from_fn(n, n, |i, j| psi.amplitudes()[i] * psi.amplitudes()[j].conj());
        Self { mat }
    }

    /// Positive-semidefinite square root via eigen-decomposition.
    pub fn sqrt(&self) -> Result<ComplexMatrix> {
        let (vals, vecs) = herm_eig(&self.mat)?;
        let n = self.dim();
        let mut out = ComplexMatrix::zeros(n, n);
        for k in 0..n {
            let s = vals[k].max(0.0).sqrt();
            if s == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    let v = out[(i, j)] + Complex64::new(s, 0.0) * vecs[(i, k)] * vecs[(j, k)].conj();
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }
}

/// Trace distance `½ Σ |eig(ρ − σ)|`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension("trace distance dimension mismatch".into()));
    }
    let diff = a.mat() - b.mat();
    let eigs = herm_eigvals(&diff)?;
    Ok(0.5 * eigs.iter().map(|x| x.abs()).sum::<f64>())
}

/// Normalised pure state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: Vec<Complex64>,
}

impl PureState {
    /// Validates unit Euclidean norm within 1e-12.
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidValue(format!(
                "pure state norm {norm}, expected 1"
            )));
        }
        Ok(Self { amps })
    }

    /// Normalises an arbitrary nonzero vector.
    pub fn normalised(amps: Vec<Complex64>) -> Result<Self> {
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidValue("zero state vector".into()));
        }
        Ok(Self {
            amps: amps.into_iter().map(|z| z / norm).collect(),
        })
    }

    /// Computational basis state `|index⟩` in dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::ZERO; dim];
        amps[index] = Complex64::ONE;
        Self { amps }
    }

    /// The Bell state `(|L,H⟩ + |R,V⟩)/√2`.
    pub fn bell_phi_plus() -> Self {
        let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self {
            amps: vec![r, Complex64::ZERO, Complex64::ZERO, r],
        }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }
}

/// Overlap `⟨ψ|ρ|ψ⟩ ∈ [0, 1]`.
pub fn state_fidelity(rho: &DensityMatrix, psi: &PureState) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::Dimension(format!(
            "fidelity dimension mismatch: state {} vs vector {}",
            rho.dim(),
            psi.dim()
        )));
    }
    let n = rho.dim();
    let mut acc = Complex64::ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += psi.amps[i].conj() * rho.mat()[(i, j)] * psi.amps[j];
        }
    }
    Ok(acc.re)
}

/// Haar-ish random mixed state from a Ginibre draw, `ρ = G G† / tr`.
pub fn random_density_matrix<R: Rng>(rng: &mut R, dim: usize) -> DensityMatrix {
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let gg = &g * &g.adjoint();
    let tr = gg.trace().re;
    DensityMatrix::new_unchecked(gg.scale(Complex64::new(1.0 / tr, 0.0)))
}

/// Random pure state from a normalised complex Gaussian vector.
pub fn random_pure_state<R: Rng>(rng: &mut R, dim: usize) -> PureState {
    let amps: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    PureState::normalised(amps).expect("Gaussian vector is nonzero")
}

/// Werner state `p |Φ⁺⟩⟨Φ⁺| + (1−p) I/4`.
pub fn werner_state(p: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidValue(format!("Werner parameter {p} outside [0,1]")));
    }
    let bell = DensityMatrix::from_pure(&PureState::bell_phi_plus());
    let mixed = DensityMatrix::maximally_mixed(4);
    let mat = &bell.mat().scale(Complex64::new(p, 0.0))
        + &mixed.mat().scale(Complex64::new(1.0 - p, 0.0));
    Ok(DensityMatrix::new_unchecked(mat))
}

/// Serialises a density matrix as text: dimension, then row-major entries as
/// re/im pairs at 17 significant digits, one row per line. Lines starting
/// with `#` are comments.
pub fn write_density_matrix<W: Write>(rho: &DensityMatrix, w: &mut W) -> Result<()> {
    w.write_all(density_matrix_to_string(rho).as_bytes())?;
    Ok(())
}

pub fn density_matrix_to_string(rho: &DensityMatrix) -> String {
    let n = rho.dim();
    let mut s = String::new();
    let _ = writeln!(s, "{n}");
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .flat_map(|j| {
                let z = rho.mat()[(i, j)];
                [fmt17(z.re), fmt17(z.im)]
            })
            .collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// Reads the format written by [`write_density_matrix`], re-validating all
/// density-matrix invariants.
pub fn read_density_matrix<R: BufRead>(r: &mut R) -> Result<DensityMatrix> {
    let mut lines = Vec::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        lines.push(t.to_string());
    }
    density_matrix_from_lines(&lines, "<density matrix>")
}

pub(crate) fn density_matrix_from_lines(lines: &[String], path: &str) -> Result<DensityMatrix> {
    let parse_err = |line: usize, msg: &str| Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.to_string(),
    };
    if lines.is_empty() {
        return Err(parse_err(0, "empty density matrix file"));
    }
    let n: usize = lines[0]
        .parse()
        .map_err(|_| parse_err(1, "expected dimension"))?;
    if lines.len() < 1 + n {
        return Err(parse_err(lines.len(), "missing matrix rows"));
    }
    let mut data = Vec::with_capacity(n * n);
    for (i, line) in lines[1..1 + n].iter().enumerate() {
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(i + 2, "bad float"))?;
        if nums.len() != 2 * n {
            return Err(parse_err(i + 2, "wrong entry count in row"));
        }
        for pair in nums.chunks(2) {
            data.push(Complex64::new(pair[0], pair[1]));
        }
    }
    DensityMatrix::new(ComplexMatrix::new(n, n, data)?)
}

/// Pauli matrices in the `z = H/V` convention.
pub fn pauli(which: usize) -> ComplexMatrix {
    let i = Complex64::I;
    let o = Complex64::ONE;
    let z = Complex64::ZERO;
    match which {
        1 => ComplexMatrix::mat2([z, o, o, z]),
        2 => ComplexMatrix::mat2([z, -i, i, z]),
        3 => ComplexMatrix::mat2([o, z, z, -o]),
        _ => ComplexMatrix::identity(2),
    }
}
