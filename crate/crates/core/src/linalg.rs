//! Dense real/complex kernels the rest of the crate builds on.
//!
//! Everything here is desk scale (n up to a few hundred), so the kernels are
//! plain dense LAPACK calls: LU solves for shifted systems, `zgeev` for
//! spectra, full SVD for condition numbers and subspace angles, and a
//! Schur-based Lyapunov solver (`dgees` + `dtrsyl`).

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, EigVals, LeastSquaresSvd, Solve, SVD};
use num_complex::Complex64;
use std::ffi::c_char;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Array2<C64>;
pub type CVec = Array1<C64>;
pub type RMat = Array2<f64>;
pub type RVec = Array1<f64>;

/// Unit roundoff of f64 (half the machine epsilon).
pub const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;

/// Promote a real matrix to complex storage.
pub fn promote(a: &RMat) -> CMat {
    a.mapv(|x| C64::new(x, 0.0))
}

/// Promote a real vector to complex storage.
pub fn promote_vec(v: &RVec) -> CVec {
    v.mapv(|x| C64::new(x, 0.0))
}

/// Build sigma*I - A (complex) from a real A.
fn shifted_matrix(a: &RMat, sigma: C64) -> CMat {
    let n = a.nrows();
    let mut m = a.mapv(|x| C64::new(-x, 0.0));
    for i in 0..n {
        m[[i, i]] += sigma;
    }
    m
}

/// Solve (sigma*I - A) x = rhs for a real square A and complex shift.
///
/// The shift being an eigenvalue of A is detected by LU breakdown, not by an
/// eigendecomposition.
pub fn shifted_solve(a: &RMat, sigma: C64, rhs: &RVec) -> Result<CVec> {
    let m = shifted_matrix(a, sigma);
    m.solve(&promote_vec(rhs))
        .map_err(|_| Error::SingularShift { shift: sigma })
}

/// Solve (sigma*I - A)^T x = rhs, i.e. the shifted system with A transposed.
pub fn shifted_solve_t(a: &RMat, sigma: C64, rhs: &RVec) -> Result<CVec> {
    let at = a.t().to_owned();
    let m = shifted_matrix(&at, sigma);
    m.solve(&promote_vec(rhs))
        .map_err(|_| Error::SingularShift { shift: sigma })
}

/// Solve (sigma*I - A) v = b and (sigma*I - A)^T w = c off one factorization.
pub fn shifted_solve_pair(a: &RMat, sigma: C64, b: &RVec, c: &RVec) -> Result<(CVec, CVec)> {
    use ndarray_linalg::Factorize;
    let m = shifted_matrix(a, sigma);
    let lu = m
        .factorize()
        .map_err(|_| Error::SingularShift { shift: sigma })?;
    let v = lu
        .solve(&promote_vec(b))
        .map_err(|_| Error::SingularShift { shift: sigma })?;
    let w = lu
        .solve_t(&promote_vec(c))
        .map_err(|_| Error::SingularShift { shift: sigma })?;
    Ok((v, w))
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
///
/// Columns of the returned matrix are unit-norm eigenvectors in the order of
/// the eigenvalue list. No conjugate pairing is applied here; see
/// [`crate::shifts::ShiftSet::pair_values`] for the pairing pass used on
/// matrices similar to real ones.
pub fn eig_dense(m: &CMat) -> Result<(CVec, CMat)> {
    m.eig().map_err(map_eig_err)
}

/// Eigenvalues of a real square matrix (complex in general).
pub fn eigvals_real(a: &RMat) -> Result<CVec> {
    a.eigvals().map_err(map_eig_err)
}

fn map_eig_err(e: ndarray_linalg::error::LinalgError) -> Error {
    match e {
        ndarray_linalg::error::LinalgError::Lapack(lax::error::Error::LapackComputationalFailure {
            return_code,
        }) => Error::NoConvergence { info: return_code },
        _ => Error::Internal {
            routine: "geev",
            info: -1,
        },
    }
}

/// Singular values of a complex matrix, descending.
pub fn singular_values(m: &CMat) -> Result<RVec> {
    let (_, s, _) = m.svd(false, false).map_err(|_| Error::Internal {
        routine: "gesvd",
        info: -1,
    })?;
    Ok(s)
}

/// Spectral norm (largest singular value).
pub fn norm2(m: &CMat) -> f64 {
    match singular_values(m) {
        Ok(s) => s.iter().copied().fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    }
}

/// Euclidean norm of a complex vector.
pub fn norm2_vec(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Frobenius norm of a complex matrix.
pub fn norm_fro(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Two-norm condition number sigma_max/sigma_min from a full SVD.
///
/// Returns `f64::INFINITY` when sigma_min falls below the underflow-safe
/// threshold `1e2 * u * sigma_max * max(rows, cols)`, which also covers rank
/// deficiency, so this never errors for a nonzero matrix.
pub fn cond2(m: &CMat) -> f64 {
    let s = match singular_values(m) {
        Ok(s) => s,
        Err(_) => return f64::INFINITY,
    };
    let smax = s.iter().copied().fold(0.0, f64::max);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    let dim = m.nrows().max(m.ncols()) as f64;
    if smin <= 1e2 * UNIT_ROUNDOFF * smax * dim {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Condition number of a real matrix.
pub fn cond2_real(m: &RMat) -> f64 {
    cond2(&promote(m))
}

/// Orthonormal basis of the column span, with a rank check.
fn orthonormal_basis(v: &CMat) -> Result<CMat> {
    let r = v.ncols();
    let (u, s, _) = v.svd(true, false).map_err(|_| Error::Internal {
        routine: "gesvd",
        info: -1,
    })?;
    let u = u.expect("svd with compute_u");
    let smax = s.iter().copied().fold(0.0, f64::max);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    let dim = v.nrows().max(v.ncols()) as f64;
    if smin <= dim * f64::EPSILON * smax {
        return Err(Error::RankDeficient {
            ratio: if smax > 0.0 { smin / smax } else { 0.0 },
        });
    }
    Ok(u.slice(ndarray::s![.., ..r]).to_owned())
}

/// Cosine of the largest principal angle between the column spans of V and W.
///
/// Computed as the smallest singular value of Q_V^H Q_W with Q_V, Q_W
/// orthonormal bases of the two ranges; equals 1 exactly when the subspaces
/// coincide and 0 when some direction of one is orthogonal to all of the other.
pub fn subspace_cos_angle(v: &CMat, w: &CMat) -> Result<f64> {
    if v.ncols() != w.ncols() {
        return Err(Error::SizeMismatch {
            left: v.ncols(),
            right: w.ncols(),
        });
    }
    let qv = orthonormal_basis(v)?;
    let qw = orthonormal_basis(w)?;
    let g = qv.mapv(|z| z.conj()).t().dot(&qw);
    let s = singular_values(&g)?;
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(smin.clamp(0.0, 1.0))
}

/// Solve M x = rhs for complex square M by LU.
pub fn solve_c(m: &CMat, rhs: &CVec) -> Result<CVec> {
    m.solve(rhs).map_err(|_| Error::RankCollapse {
        cond: f64::INFINITY,
    })
}

/// Solve M X = RHS column by column.
pub fn solve_c_mat(m: &CMat, rhs: &CMat) -> Result<CMat> {
    let n = rhs.nrows();
    let k = rhs.ncols();
    let mut out = CMat::zeros((n, k));
    for j in 0..k {
        let col = rhs.column(j).to_owned();
        let x = solve_c(m, &col)?;
        out.column_mut(j).assign(&x);
    }
    Ok(out)
}

/// Minimum-norm least-squares solution of A x = b (A may be wide or tall).
pub fn lstsq_min_norm(a: &CMat, b: &CVec) -> Result<CVec> {
    let res = a.least_squares(b).map_err(|_| Error::Internal {
        routine: "gelsd",
        info: -1,
    })?;
    Ok(res.solution)
}

fn to_col_major(a: &RMat) -> Vec<f64> {
    let (n, m) = a.dim();
    let mut v = Vec::with_capacity(n * m);
    for j in 0..m {
        for i in 0..n {
            v.push(a[[i, j]]);
        }
    }
    v
}

fn from_col_major(v: &[f64], n: usize, m: usize) -> RMat {
    RMat::from_shape_fn((n, m), |(i, j)| v[j * n + i])
}

/// Real Schur decomposition A = Z T Z^T via `dgees`.
///
/// Returns (T, Z, eigenvalue real parts, eigenvalue imaginary parts).
fn real_schur(a: &RMat) -> Result<(RMat, RMat, Vec<f64>, Vec<f64>)> {
    let n = a.nrows();
    let ni = n as i32;
    let mut t = to_col_major(a);
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut vs = vec![0.0; n * n];
    let mut sdim: i32 = 0;
    let mut info: i32 = 0;

    // workspace query
    let mut wkopt = 0.0f64;
    let query: i32 = -1;
    unsafe {
        lapack_sys::dgees_(
            &(b'V' as c_char),
            &(b'N' as c_char),
            None,
            &ni,
            t.as_mut_ptr(),
            &ni,
            &mut sdim,
            wr.as_mut_ptr(),
            wi.as_mut_ptr(),
            vs.as_mut_ptr(),
            &ni,
            &mut wkopt,
            &query,
            std::ptr::null_mut(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Internal {
            routine: "dgees",
            info,
        });
    }
    let lwork = (wkopt as i32).max(3 * ni);
    let mut work = vec![0.0; lwork as usize];
    unsafe {
        lapack_sys::dgees_(
            &(b'V' as c_char),
            &(b'N' as c_char),
            None,
            &ni,
            t.as_mut_ptr(),
            &ni,
            &mut sdim,
            wr.as_mut_ptr(),
            wi.as_mut_ptr(),
            vs.as_mut_ptr(),
            &ni,
            work.as_mut_ptr(),
            &lwork,
            std::ptr::null_mut(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::NoConvergence { info });
    }
    Ok((from_col_major(&t, n, n), from_col_major(&vs, n, n), wr, wi))
}

/// Solve the continuous Lyapunov equation A P + P A^T + Q = 0 for stable A.
///
/// Bartels-Stewart: a real Schur form of A, then a quasi-triangular Sylvester
/// solve (`dtrsyl`) in the rotated frame. The result is symmetrized exactly.
pub fn lyapunov_solve(a: &RMat, q: &RMat) -> Result<RMat> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "lyapunov_solve: A is {}x{}, Q is {}x{}",
                a.nrows(),
                a.ncols(),
                q.nrows(),
                q.ncols()
            ),
        });
    }
    let (t, z, wr, _wi) = real_schur(a)?;
    let max_re = wr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max_re < 0.0) {
        return Err(Error::UnstableMatrix { max_re });
    }

    // T Y + Y T^T = -Z^T Q Z
    let rhs = -z.t().dot(q).dot(&z);
    let ni = n as i32;
    let tc = to_col_major(&t);
    let mut cc = to_col_major(&rhs);
    let mut scale = 1.0f64;
    let mut info: i32 = 0;
    let isgn: i32 = 1;
    unsafe {
        lapack_sys::dtrsyl_(
            &(b'N' as c_char),
            &(b'T' as c_char),
            &isgn,
            &ni,
            &ni,
            tc.as_ptr(),
            &ni,
            tc.as_ptr(),
            &ni,
            cc.as_mut_ptr(),
            &ni,
            &mut scale,
            &mut info,
        );
    }
    if info < 0 {
        return Err(Error::Internal {
            routine: "dtrsyl",
            info,
        });
    }
    let y = from_col_major(&cc, n, n) / scale;
    let p = z.dot(&y).dot(&z.t());
    // enforce exact symmetry
    let mut sym = RMat::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            sym[[i, j]] = 0.5 * (p[[i, j]] + p[[j, i]]);
        }
    }
    Ok(sym)
}
