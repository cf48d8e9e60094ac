//! Dense complex matrix substrate shared by all physics modules.
//!
//! Everything here is a pure function over immutable values: adjoints,
//! commutators, matrix exponentials, SVD nullspaces, block restriction and
//! embedding, polar decomposition and Procrustes basis alignment.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{Eig, Eigh, Inverse, SVD, UPLO};
use num_complex::Complex64;

use crate::{HolodynError, Result};

pub type CMatrix = Array2<Complex64>;
pub type CVector = Array1<Complex64>;

pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    Array2::eye(n)
}

pub fn zeros(n: usize) -> CMatrix {
    Array2::zeros((n, n))
}

/// Conjugate transpose.
pub fn dagger(a: &CMatrix) -> CMatrix {
    a.t().mapv(|z| z.conj())
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + &dagger(a)).mapv(|z| z * 0.5)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) - b.dot(a)
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) + b.dot(a)
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diag().sum()
}

/// Frobenius norm. Upper-bounds the spectral norm, so every tolerance check
/// stated in operator norm is safe when tested against this.
pub fn fro_norm(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn one_norm(a: &CMatrix) -> f64 {
    let mut best = 0.0;
    for j in 0..a.ncols() {
        let col: f64 = a.column(j).iter().map(|z| z.norm()).sum();
        if col > best {
            best = col;
        }
    }
    best
}

fn check_square(a: &CMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(HolodynError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

/// exp(scale * A) by Pade-13 scaling and squaring (Higham 2005).
pub fn matexp(a: &CMatrix, scale: Complex64) -> Result<CMatrix> {
    let n = check_square(a)?;
    let m = a.mapv(|z| z * scale);
    const THETA13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let norm = one_norm(&m);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let m = m.mapv(|z| z / c(2f64.powi(squarings as i32), 0.0));
    let eye = identity(n);
    let m2 = m.dot(&m);
    let m4 = m2.dot(&m2);
    let m6 = m2.dot(&m4);
    let u_inner = m6.mapv(|z| z * B[13]) + m4.mapv(|z| z * B[11]) + m2.mapv(|z| z * B[9]);
    let u = m.dot(
        &(m6.dot(&u_inner)
            + m6.mapv(|z| z * B[7])
            + m4.mapv(|z| z * B[5])
            + m2.mapv(|z| z * B[3])
            + eye.mapv(|z| z * B[1])),
    );
    let v_inner = m6.mapv(|z| z * B[12]) + m4.mapv(|z| z * B[10]) + m2.mapv(|z| z * B[8]);
    let v = m6.dot(&v_inner)
        + m6.mapv(|z| z * B[6])
        + m4.mapv(|z| z * B[4])
        + m2.mapv(|z| z * B[2])
        + eye.mapv(|z| z * B[0]);
    let denom = (&v - &u).inv()?;
    let mut result = denom.dot(&(&v + &u));
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    Ok(result)
}

/// An orthonormal subspace of a fixed ambient space, stored as a basis
/// (columns) together with its projector.
#[derive(Debug, Clone)]
pub struct Subspace {
    pub basis: CMatrix,
    pub projector: CMatrix,
}

impl Subspace {
    pub fn from_basis(basis: CMatrix) -> Self {
        let projector = basis.dot(&dagger(&basis));
        Subspace { basis, projector }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn perp_projector(&self) -> CMatrix {
        identity(self.ambient_dim()) - &self.projector
    }

    /// Orthonormality defect of the stored basis.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = dagger(&self.basis).dot(&self.basis);
        fro_norm(&(g - identity(self.dim())))
    }
}

/// Orthonormal basis of the numerical nullspace of `a`: singular vectors with
/// sigma_i <= rel_tol * sigma_max. A zero matrix yields the whole space.
pub fn nullspace(a: &CMatrix, rel_tol: f64) -> Result<Subspace> {
    let n = check_square(a)?;
    if !(0.0..1.0).contains(&rel_tol) || rel_tol <= 0.0 {
        return Err(HolodynError::InvalidParameter(format!(
            "rel_tol must lie in (0,1), got {rel_tol}"
        )));
    }
    let (_, sv, vt) = a.svd(false, true)?;
    let vt = vt.expect("requested V^H");
    let sigma_max = sv.iter().cloned().fold(0.0f64, f64::max);
    let v = dagger(&vt);
    if sigma_max == 0.0 {
        return Ok(Subspace::from_basis(v));
    }
    let cutoff = rel_tol * sigma_max;
    // LAPACK returns singular values in descending order.
    let k = sv.iter().filter(|&&sigma| sigma <= cutoff).count();
    let basis = v.slice(s![.., n - k..]).to_owned();
    Ok(Subspace::from_basis(basis))
}

/// basis_rows^dagger . A . basis_cols — the (rows, cols) block of A.
pub fn block(a: &CMatrix, rows: &Subspace, cols: &Subspace) -> Result<CMatrix> {
    let n = check_square(a)?;
    for sp in [rows, cols] {
        if sp.ambient_dim() != n {
            return Err(HolodynError::DimensionMismatch {
                expected: n,
                got: sp.ambient_dim(),
            });
        }
    }
    Ok(dagger(&rows.basis).dot(a).dot(&cols.basis))
}

/// Inverse of `block`: lift a small block back into the ambient space.
pub fn embed(b: &CMatrix, rows: &Subspace, cols: &Subspace) -> CMatrix {
    rows.basis.dot(b).dot(&dagger(&cols.basis))
}

/// Unitary factor of the polar decomposition A = U P.
pub fn polar_unitary(a: &CMatrix) -> Result<CMatrix> {
    let (u, _, vt) = a.svd(true, true)?;
    Ok(u.expect("U").dot(&vt.expect("V^H")))
}

/// Rotate the columns of `basis` by the unitary that best matches `target`
/// (orthogonal Procrustes). Keeps a tracked kernel basis from jumping.
pub fn procrustes_align(basis: &CMatrix, target: &CMatrix) -> Result<CMatrix> {
    let overlap = dagger(basis).dot(target);
    let rot = polar_unitary(&overlap)?;
    Ok(basis.dot(&rot))
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues + columns.
pub fn eigh(a: &CMatrix) -> Result<(Array1<f64>, CMatrix)> {
    let (vals, vecs) = a.eigh(UPLO::Lower)?;
    // LAPACK sees the row-major buffer as A^T = A*, so the returned columns
    // are conjugates of the eigenvectors of A.
    Ok((vals, vecs.mapv(|z| z.conj())))
}

/// Eigenvalues of a general complex matrix.
pub fn eigvals(a: &CMatrix) -> Result<CVector> {
    let (vals, _) = a.eig()?;
    Ok(vals)
}

/// Eigendecomposition of a general complex matrix.
pub fn eig(a: &CMatrix) -> Result<(CVector, CMatrix)> {
    let (vals, vecs) = a.eig()?;
    Ok((vals, vecs))
}

pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    Ok(a.inv()?)
}

/// Kronecker product, column-stacking convention: vec(A X B) = (B^T (x) A) vec(X).
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Column-stack a matrix into a vector.
pub fn vec_stack(a: &CMatrix) -> CVector {
    let n = a.nrows();
    let mut v = Array1::zeros(n * a.ncols());
    for j in 0..a.ncols() {
        for i in 0..n {
            v[j * n + i] = a[[i, j]];
        }
    }
    v
}

/// Inverse of `vec_stack` for a square matrix.
pub fn unstack(v: &CVector, n: usize) -> CMatrix {
    let mut a = Array2::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            a[[i, j]] = v[j * n + i];
        }
    }
    a
}

pub fn random_hermitian<R: rand::Rng>(rng: &mut R, n: usize) -> CMatrix {
    let mut a: CMatrix = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            a[[i, j]] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    hermitian_part(&a)
}

/// Random density matrix supported on the given subspace.
pub fn random_state_in<R: rand::Rng>(rng: &mut R, space: &Subspace) -> CMatrix {
    let k = space.dim();
    let h = random_hermitian(rng, k);
    let (_, v) = eigh(&h).expect("hermitian eig");
    // Random positive weights, normalized.
    let mut w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let mut rho_block = zeros(k);
    for (idx, weight) in w.iter().enumerate() {
        let col = v.column(idx);
        for i in 0..k {
            for j in 0..k {
                rho_block[[i, j]] += col[i] * col[j].conj() * c(*weight, 0.0);
            }
        }
    }
    embed(&rho_block, space, space)
}
