//! SISO LTI systems in state-space form: transfer function evaluation,
//! stability, H2 norms and H2 errors, and seeded synthetic fixtures.

use ndarray::s;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, CVec, RMat, RVec};

type C64 = Complex64;

/// A single-input single-output system  x' = A x + b u,  y = c^T x.
///
/// Stability is a queryable property rather than an invariant: intermediate
/// reduced models produced by the fixed-point iteration may be unstable, and
/// they still need to live in this type.
#[derive(Debug, Clone)]
pub struct LtiSystem {
    a: RMat,
    b: RVec,
    c: RVec,
}

impl LtiSystem {
    pub fn new(a: RMat, b: RVec, c: RVec) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || c.len() != n {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "A is {}x{}, b has {}, c has {}",
                    a.nrows(),
                    a.ncols(),
                    b.len(),
                    c.len()
                ),
            });
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|x| !x.is_finite()) {
            return Err(Error::DimensionMismatch {
                context: "non-finite entry in system data".into(),
            });
        }
        Ok(LtiSystem { a, b, c })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &RMat {
        &self.a
    }

    pub fn b(&self) -> &RVec {
        &self.b
    }

    pub fn c(&self) -> &RVec {
        &self.c
    }

    /// H(s) = c^T (sI - A)^{-1} b.
    pub fn eval_transfer(&self, s: C64) -> Result<C64> {
        let v = linalg::shifted_solve(&self.a, s, &self.b)?;
        Ok(dot_real_complex(&self.c, &v))
    }

    /// H'(s) = -c^T (sI - A)^{-2} b, computed as -(w^T v) with
    /// v = (sI-A)^{-1} b and w = (sI-A)^{-T} c. Two solves, no squared
    /// resolvent.
    pub fn eval_transfer_deriv(&self, s: C64) -> Result<C64> {
        let v = linalg::shifted_solve(&self.a, s, &self.b)?;
        let w = linalg::shifted_solve_t(&self.a, s, &self.c)?;
        Ok(-w.iter().zip(v.iter()).map(|(x, y)| x * y).sum::<C64>())
    }

    /// Strict Hurwitz stability: all eigenvalues of A in the open left
    /// half-plane.
    pub fn is_stable(&self) -> bool {
        match linalg::eigvals_real(&self.a) {
            Ok(vals) => vals.iter().all(|z| z.re < 0.0),
            Err(_) => false,
        }
    }

    /// Eigenvalues of A.
    pub fn poles(&self) -> Result<CVec> {
        linalg::eigvals_real(&self.a)
    }

    /// H2 norm sqrt(c^T P c) with A P + P A^T + b b^T = 0.
    pub fn h2_norm(&self) -> Result<f64> {
        let n = self.order();
        let bb = RMat::from_shape_fn((n, n), |(i, j)| self.b[i] * self.b[j]);
        let p = linalg::lyapunov_solve(&self.a, &bb)?;
        let cpc = self.c.dot(&p.dot(&self.c));
        Ok(cpc.max(0.0).sqrt())
    }
}

fn dot_real_complex(r: &RVec, z: &CVec) -> C64 {
    r.iter().zip(z.iter()).map(|(x, y)| y * *x).sum()
}

/// H2 norm of the difference of two stable systems, via the block-diagonal
/// augmented system (A_err = diag(A, A_r), b_err = (b; b_r), c_err = (c; -c_r)).
pub fn h2_error(full: &LtiSystem, reduced: &LtiSystem) -> Result<f64> {
    let n = full.order();
    let m = reduced.order();
    let mut a = RMat::zeros((n + m, n + m));
    a.slice_mut(s![..n, ..n]).assign(full.a());
    a.slice_mut(s![n.., n..]).assign(reduced.a());
    let mut b = RVec::zeros(n + m);
    b.slice_mut(s![..n]).assign(full.b());
    b.slice_mut(s![n..]).assign(reduced.b());
    let mut c = RVec::zeros(n + m);
    c.slice_mut(s![..n]).assign(full.c());
    c.slice_mut(s![n..]).assign(&reduced.c().mapv(|x| -x));
    LtiSystem::new(a, b, c)?.h2_norm()
}

/// Pole layouts for the synthetic system generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumSpec {
    /// Real poles drawn uniformly from [lo, hi] (both negative), assembled
    /// diagonally and similarity-scrambled.
    RealInterval { lo: f64, hi: f64 },
    /// Real poles in [lo, hi] with A kept literally diagonal.
    Diagonal { lo: f64, hi: f64 },
    /// A stressed layout echoing large mechatronic benchmarks: lightly damped
    /// complex pairs with resonance frequencies spread over several decades,
    /// plus a few well-damped real poles.
    CdLike,
}

/// Deterministically generate a stable system of order n.
///
/// Poles are drawn per the descriptor, assembled in real block-diagonal form
/// (1x1 blocks for real poles, 2x2 rotation blocks for conjugate pairs) and,
/// except for `Diagonal`, scrambled by a seeded well-conditioned real
/// similarity. b and c are seeded dense Gaussian vectors.
pub fn synth_random_stable(n: usize, seed: u64, spec: SpectrumSpec) -> Result<LtiSystem> {
    if n == 0 {
        return Err(Error::BadSpec {
            reason: "order must be at least 1".into(),
        });
    }
    match spec {
        SpectrumSpec::RealInterval { lo, hi } | SpectrumSpec::Diagonal { lo, hi } => {
            if !(lo < hi && hi < 0.0) {
                return Err(Error::BadSpec {
                    reason: format!("real interval [{lo}, {hi}] must satisfy lo < hi < 0"),
                });
            }
        }
        SpectrumSpec::CdLike => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // assemble the real block-diagonal pole matrix
    let mut d = RMat::zeros((n, n));
    match spec {
        SpectrumSpec::RealInterval { lo, hi } | SpectrumSpec::Diagonal { lo, hi } => {
            for i in 0..n {
                d[[i, i]] = lo + (hi - lo) * rng.random::<f64>();
            }
        }
        SpectrumSpec::CdLike => {
            // complex pairs  -zeta*omega +/- i*omega, omega log-spread over
            // three decades, damping ratios 1e-2 .. 1e-1
            let mut i = 0;
            while i + 1 < n {
                let omega = 10f64.powf(rng.random::<f64>() * 3.0); // 1 .. 1e3
                let zeta = 10f64.powf(-(1.0 + rng.random::<f64>())); // 1e-2 .. 1e-1
                let re = -zeta * omega;
                d[[i, i]] = re;
                d[[i + 1, i + 1]] = re;
                d[[i, i + 1]] = omega;
                d[[i + 1, i]] = -omega;
                i += 2;
            }
            if i < n {
                d[[i, i]] = -(1.0 + 9.0 * rng.random::<f64>());
            }
        }
    }

    let a = if matches!(spec, SpectrumSpec::Diagonal { .. }) {
        d
    } else {
        // T = I + 0.5*G/||G||, kappa(T) <= 3
        let g = RMat::from_shape_fn((n, n), |_| rng.sample::<f64, _>(StandardNormal));
        let gn = linalg::norm2(&linalg::promote(&g));
        let t = &RMat::eye(n) + &(g.mapv(|x| 0.5 * x / gn));
        // A = T D T^{-1}: solve A T = T D  <=>  T^T A^T = (T D)^T
        let td = t.dot(&d);
        let tt = linalg::promote(&t.t().to_owned());
        let rhs = linalg::promote(&td.t().to_owned());
        let at = linalg::solve_c_mat(&tt, &rhs)?;
        at.t().mapv(|z| z.re)
    };

    let b = RVec::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
    let c = RVec::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
    let sys = LtiSystem::new(a, b, c)?;
    debug_assert!(sys.is_stable());
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn first_order() -> LtiSystem {
        LtiSystem::new(array![[-1.0]], array![1.0], array![1.0]).unwrap()
    }

    #[test]
    fn transfer_fixtures() {
        let sys = first_order();
        assert_relative_eq!(sys.eval_transfer(c(0.0, 0.0)).unwrap().re, 1.0, max_relative = 1e-14);
        assert_relative_eq!(sys.eval_transfer(c(1.0, 0.0)).unwrap().re, 0.5, max_relative = 1e-14);

        let two = LtiSystem::new(
            array![[-1.0, 0.0], [0.0, -2.0]],
            array![1.0, 1.0],
            array![1.0, 1.0],
        )
        .unwrap();
        assert_relative_eq!(two.eval_transfer(c(0.0, 0.0)).unwrap().re, 1.5, max_relative = 1e-14);
    }

    #[test]
    fn transfer_deriv_fixtures() {
        let sys = first_order();
        assert_relative_eq!(
            sys.eval_transfer_deriv(c(1.0, 0.0)).unwrap().re,
            -0.25,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            sys.eval_transfer_deriv(c(0.0, 0.0)).unwrap().re,
            -1.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn transfer_deriv_matches_finite_differences() {
        let sys = synth_random_stable(12, 5, SpectrumSpec::RealInterval { lo: -10.0, hi: -1.0 })
            .unwrap();
        for s0 in [c(0.7, 0.0), c(2.0, 1.5), c(0.1, -3.0)] {
            let h = 1e-5 * (1.0 + s0.norm());
            let fd = (sys.eval_transfer(s0 + h).unwrap() - sys.eval_transfer(s0 - h).unwrap())
                / (2.0 * h);
            let an = sys.eval_transfer_deriv(s0).unwrap();
            assert!(
                (fd - an).norm() <= 1e-5 * (1.0 + an.norm()),
                "fd {fd} analytic {an}"
            );
        }
    }

    #[test]
    fn stability_fixtures() {
        assert!(first_order().is_stable());
        let unstable =
            LtiSystem::new(array![[1.0, 0.0], [0.0, -1.0]], array![1.0, 1.0], array![1.0, 1.0])
                .unwrap();
        assert!(!unstable.is_stable());
        // marginal (eigenvalues +/- i) is not strictly stable
        let marginal =
            LtiSystem::new(array![[0.0, 1.0], [-1.0, 0.0]], array![1.0, 1.0], array![1.0, 1.0])
                .unwrap();
        assert!(!marginal.is_stable());
    }

    #[test]
    fn h2_norm_fixtures() {
        let sys = first_order();
        assert_relative_eq!(sys.h2_norm().unwrap(), 0.5f64.sqrt(), max_relative = 1e-12);

        let two = LtiSystem::new(array![[-2.0]], array![1.0], array![1.0]).unwrap();
        assert_relative_eq!(two.h2_norm().unwrap(), 0.5, max_relative = 1e-12);

        // linear in c
        let scaled = LtiSystem::new(array![[-1.0]], array![1.0], array![2.0]).unwrap();
        assert_relative_eq!(
            scaled.h2_norm().unwrap(),
            2.0 * sys.h2_norm().unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn h2_norm_unstable_rejected() {
        let sys = LtiSystem::new(array![[1.0]], array![1.0], array![1.0]).unwrap();
        assert!(matches!(sys.h2_norm(), Err(Error::UnstableMatrix { .. })));
    }

    #[test]
    fn h2_norm_matches_residue_oracle() {
        // ||H||^2 = sum_i phi_i * H(-lambda_i) over simple poles
        for seed in [1u64, 2, 3] {
            let sys = synth_random_stable(
                20,
                seed,
                SpectrumSpec::RealInterval { lo: -8.0, hi: -0.5 },
            )
            .unwrap();
            let (vals, vecs) = linalg::eig_dense(&linalg::promote(sys.a())).unwrap();
            // residues phi_i = (c^T x_i)(y_i^T b) with X^{-1} rows as left vectors
            let xinv = linalg::solve_c_mat(&vecs, &ndarray::Array2::eye(20)).unwrap();
            let cb = linalg::promote_vec(sys.c());
            let bb = linalg::promote_vec(sys.b());
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..20 {
                let xi = vecs.column(i);
                let yi = xinv.row(i);
                let phi = cb.dot(&xi) * yi.dot(&bb);
                acc += phi * sys.eval_transfer(-vals[i]).unwrap();
            }
            let oracle = acc.re.max(0.0).sqrt();
            assert!(acc.im.abs() < 1e-8 * acc.re.abs());
            let got = sys.h2_norm().unwrap();
            assert_relative_eq!(got, oracle, max_relative = 1e-8);
        }
    }

    #[test]
    fn h2_error_fixtures() {
        let full = first_order();
        assert!(h2_error(&full, &full).unwrap() < 1e-12 * full.h2_norm().unwrap());

        let two = LtiSystem::new(array![[-2.0]], array![1.0], array![1.0]).unwrap();
        let e = h2_error(&full, &two).unwrap();
        assert_relative_eq!(e, (1.0f64 / 12.0).sqrt(), max_relative = 1e-12);
        // symmetric in its arguments
        assert_relative_eq!(e, h2_error(&two, &full).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn synth_is_stable_and_deterministic() {
        let spec = SpectrumSpec::RealInterval { lo: -10.0, hi: -1.0 };
        let s1 = synth_random_stable(2, 7, spec).unwrap();
        assert!(s1.is_stable());
        let s2 = synth_random_stable(2, 7, spec).unwrap();
        assert_eq!(s1.a(), s2.a());
        assert_eq!(s1.b(), s2.b());
        assert_eq!(s1.c(), s2.c());

        let big = synth_random_stable(120, 1, SpectrumSpec::CdLike).unwrap();
        let poles = big.poles().unwrap();
        assert!(poles.iter().all(|z| z.re < 0.0));
    }

    #[test]
    fn synth_rejects_bad_spec() {
        assert!(matches!(
            synth_random_stable(3, 0, SpectrumSpec::RealInterval { lo: -1.0, hi: -2.0 }),
            Err(Error::BadSpec { .. })
        ));
        assert!(matches!(
            synth_random_stable(0, 0, SpectrumSpec::CdLike),
            Err(Error::BadSpec { .. })
        ));
    }
}
