//! Perturbation and backward-stability diagnostics for the fixed-point
//! iteration.
//!
//! Near a fixed point the reduced poles are mirrored shifts up to residuals
//! eps_k = mu_k + sigma_k. Two condensed quantities drive everything here:
//!
//! - eps_bullet = max_i |prod_k (1 - eps_k/(sigma_i + sigma_k)) - 1|
//! - eps        = max_i |prod_k (1 + eps_k/(sigma_i - mu_k)) - 1|
//!
//! They bound the distance between the computed reduced input q and the ideal
//! feedback q_bullet that would place the reduced poles exactly at the
//! mirrored shifts, and they propagate to rank-one backward perturbations
//! (delta_b, delta_A) of the full-order data for which the computed reduced
//! model is *exact*. A certificate with eps_bullet < 1/2 therefore justifies
//! stopping.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::interpolation::{self, PrimitiveBases, ReducedModel};
use crate::irka;
use crate::linalg::{self, CMat, CVec, RVec};
use crate::lti::LtiSystem;
use crate::shifts::{matching_assignment, min_sum_assignment, PairRole, ShiftSet, SEP_TOL};

type C64 = Complex64;

/// Mirror residuals and their condensed products.
#[derive(Debug, Clone)]
pub struct EpsilonQuantities {
    pub eps_bullet: f64,
    pub eps: f64,
    /// eps_k = mu_k + sigma_k under the optimal matching, conjugation-closed.
    pub eps_k: Vec<C64>,
}

/// eps_k, eps and eps_bullet for a (shifts, poles) pair of equal size.
///
/// mu is indexed against -sigma by optimal (bottleneck) matching first. The
/// products are accumulated in log-magnitude/angle form so that early
/// iterations with huge eps_k overflow to the infinity sentinel instead of
/// poisoning the run.
pub fn epsilon_quantities(sigma: &ShiftSet, mu: &ShiftSet) -> Result<EpsilonQuantities> {
    let sv = sigma.values();
    let mv = mu.values();
    if sv.len() != mv.len() {
        return Err(Error::SizeMismatch {
            left: sv.len(),
            right: mv.len(),
        });
    }
    let r = sv.len();
    let minus_sigma: Vec<C64> = sv.iter().map(|z| -z).collect();
    let (_, perm) = matching_assignment(&mv, &minus_sigma)?;
    // mu_at[k]: the pole matched to -sigma_k
    let mut mu_at = vec![C64::new(0.0, 0.0); r];
    for (i, &k) in perm.iter().enumerate() {
        mu_at[k] = mv[i];
    }
    let mut eps_k: Vec<C64> = (0..r).map(|k| mu_at[k] + sv[k]).collect();
    // the matching can split conjugate pairs on ties; resymmetrize along the
    // structure of sigma
    for (i, role) in sigma.pair_roles().iter().enumerate() {
        if let PairRole::Upper(j) = role {
            let avg = 0.5 * (eps_k[i] + eps_k[*j].conj());
            eps_k[i] = avg;
            eps_k[*j] = avg.conj();
            mu_at[i] = -sv[i] + eps_k[i];
            mu_at[*j] = -sv[*j] + eps_k[*j];
        }
    }

    let scale = sigma.max_modulus();
    let mut eps_bullet = 0.0f64;
    let mut eps = 0.0f64;
    for i in 0..r {
        let mut log_b = 0.0f64;
        let mut arg_b = 0.0f64;
        let mut log_e = 0.0f64;
        let mut arg_e = 0.0f64;
        for k in 0..r {
            let den_b = sv[i] + sv[k];
            if den_b.norm() < SEP_TOL * scale {
                return Err(Error::DenominatorCollapse { i, k });
            }
            let fac_b = C64::new(1.0, 0.0) - eps_k[k] / den_b;
            log_b += fac_b.norm().ln();
            arg_b += fac_b.arg();

            let den_e = sv[i] - mu_at[k];
            if den_e.norm() < SEP_TOL * scale {
                return Err(Error::DenominatorCollapse { i, k });
            }
            let fac_e = C64::new(1.0, 0.0) + eps_k[k] / den_e;
            log_e += fac_e.norm().ln();
            arg_e += fac_e.arg();
        }
        eps_bullet = eps_bullet.max(product_minus_one(log_b, arg_b));
        eps = eps.max(product_minus_one(log_e, arg_e));
    }
    Ok(EpsilonQuantities {
        eps_bullet,
        eps,
        eps_k,
    })
}

fn product_minus_one(log_mag: f64, arg: f64) -> f64 {
    if log_mag > 700.0 {
        return f64::INFINITY;
    }
    let p = C64::from_polar(log_mag.exp(), arg);
    (p - C64::new(1.0, 0.0)).norm()
}

/// Per-index factors eta_i with q_i = q_bullet_i * (1 - eta_i).
pub fn eta_factors(sigma: &ShiftSet, eps_k: &[C64]) -> Result<Vec<f64>> {
    let sv = sigma.values();
    let scale = sigma.max_modulus();
    let mut out = Vec::with_capacity(sv.len());
    for i in 0..sv.len() {
        let mut log_m = 0.0f64;
        let mut arg = 0.0f64;
        for (k, e) in eps_k.iter().enumerate() {
            let den = sv[i] + sv[k];
            if den.norm() < SEP_TOL * scale {
                return Err(Error::DenominatorCollapse { i, k });
            }
            let fac = C64::new(1.0, 0.0) - e / den;
            log_m += fac.norm().ln();
            arg += fac.arg();
        }
        out.push(product_minus_one(log_m, arg));
    }
    Ok(out)
}

/// Reduced-level backward perturbation: the ideal feedback q_bullet, the
/// defect dq = q - q_bullet, and the norm bounds it is checked against.
#[derive(Debug, Clone)]
pub struct ReducedPerturbation {
    pub q_bullet: CVec,
    pub dq: CVec,
    /// matching distance between eig(Sigma - q_bullet e^T) and -sigma
    pub placement_defect: f64,
    pub eps: f64,
    pub eps_bullet: f64,
    pub dq_norm: f64,
    /// eps * ||q||
    pub bound_eps_q: f64,
    /// eps_bullet * ||q_bullet||
    pub bound_eps_bullet_qbullet: f64,
}

pub fn backward_reduced_perturbation(model: &ReducedModel) -> Result<ReducedPerturbation> {
    let sigma = model.sigma();
    if !sigma.is_working() {
        return Err(Error::BadSpec {
            reason: "backward perturbation needs a working shift set".into(),
        });
    }
    let q_bullet = irka::feedback_vector(sigma)?;
    let dq = model.q() - &q_bullet;
    let (mu_b, _) = interpolation::companion_eig(sigma, &q_bullet)?;
    let minus_sigma: Vec<C64> = sigma.values().iter().map(|z| -z).collect();
    let (placement_defect, _) = matching_assignment(&mu_b.values(), &minus_sigma)?;
    let eq = epsilon_quantities(sigma, model.mu())?;
    let dq_norm = linalg::norm2_vec(&dq);
    Ok(ReducedPerturbation {
        placement_defect,
        eps: eq.eps,
        eps_bullet: eq.eps_bullet,
        dq_norm,
        bound_eps_q: eq.eps * linalg::norm2_vec(model.q()),
        bound_eps_bullet_qbullet: eq.eps_bullet * linalg::norm2_vec(&q_bullet),
        q_bullet,
        dq,
    })
}

/// Full-order backward perturbation (delta_b, delta_A = delta_b f^T) under
/// which the perturbed system projects exactly onto the pole-placed reduced
/// model, plus verification residuals and bound comparisons.
#[derive(Debug, Clone)]
pub struct SystemPerturbation {
    pub db: RVec,
    /// delta_A = db f^T, stored by its factors
    pub f: RVec,
    pub db_norm: f64,
    pub da_norm: f64,
    /// relative Frobenius residual of
    /// U^T (A + dA) V = Sigma - U^T (b - db) e^T
    pub projection_residual: f64,
    /// worst relative defect of G_r_bullet(sigma_i) = G_bullet(sigma_i)
    pub interpolation_residual: f64,
    /// imaginary dirt removed when promoting db (and f) to real vectors
    pub promotion_defect: f64,
    pub db_bound: f64,
    pub da_bound: f64,
    /// reported least-squares output correction; no interpolation claim
    pub dc_least_squares: RVec,
}

pub fn backward_system_perturbation(
    sys: &LtiSystem,
    bases: &PrimitiveBases,
    model: &ReducedModel,
) -> Result<SystemPerturbation> {
    let rp = backward_reduced_perturbation(model)?;
    if !(rp.eps_bullet < 0.5) {
        return Err(Error::CertificateInvalid {
            eps_bullet: rp.eps_bullet,
        });
    }
    let r = model.order();
    let n = sys.order();
    let sv = model.sigma().values();

    // U^T = L^{-1} W^T  (r x n)
    let wt = bases.w().t().to_owned();
    let ut = linalg::solve_c_mat(bases.loewner(), &wt)?;

    // db = (U^T)^+ dq  and  f = (V^T)^+ e, both minimum-norm solutions
    let db_c = linalg::lstsq_min_norm(&ut, &rp.dq)?;
    let vt = bases.v().t().to_owned();
    let ones = CVec::from_elem(r, C64::new(1.0, 0.0));
    let f_c = linalg::lstsq_min_norm(&vt, &ones)?;

    let promo = |v: &CVec| -> (RVec, f64) {
        let imag: f64 = v.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
        let total = linalg::norm2_vec(v);
        let defect = if total > 0.0 { imag / total } else { 0.0 };
        (v.mapv(|z| z.re), defect)
    };
    let (db, d1) = promo(&db_c);
    let (f, d2) = promo(&f_c);
    let promotion_defect = d1.max(d2);

    let db_norm = db.dot(&db).sqrt();
    let f_norm = f.dot(&f).sqrt();
    let da_norm = db_norm * f_norm; // rank-one spectral norm

    // A + dA and b - db
    let mut a_pert = sys.a().clone();
    for i in 0..n {
        for j in 0..n {
            a_pert[[i, j]] += db[i] * f[j];
        }
    }
    let b_pert = sys.b() - &db;

    // projection identity
    let av = {
        let vre = bases.v().mapv(|z| z.re);
        let vim = bases.v().mapv(|z| z.im);
        let re = a_pert.dot(&vre);
        let im = a_pert.dot(&vim);
        CMat::from_shape_fn((n, r), |(i, j)| C64::new(re[[i, j]], im[[i, j]]))
    };
    let apv = ut.dot(&av);
    let ut_bpert = ut.dot(&b_pert.mapv(|x| C64::new(x, 0.0)));
    let rhs = CMat::from_shape_fn((r, r), |(i, j)| {
        let d = if i == j { sv[i] } else { C64::new(0.0, 0.0) };
        d - ut_bpert[i]
    });
    let diff = &apv - &rhs;
    let scale = linalg::norm_fro(&apv).max(linalg::norm_fro(&rhs));
    let projection_residual = if scale > 0.0 {
        linalg::norm_fro(&diff) / scale
    } else {
        0.0
    };

    // interpolation identity at the shifts:
    // c_r^T (sI - A_r_bullet)^{-1} q_bullet = c^T (sI - (A+dA))^{-1} (b - db)
    let ar_bullet = CMat::from_shape_fn((r, r), |(i, j)| {
        let d = if i == j { sv[i] } else { C64::new(0.0, 0.0) };
        d - rp.q_bullet[i]
    });
    let mut interpolation_residual = 0.0f64;
    for &si in &sv {
        let mut mr = -ar_bullet.clone();
        for i in 0..r {
            mr[[i, i]] += si;
        }
        let xr = linalg::solve_c(&mr, &rp.q_bullet)?;
        let g_r = model.c_r().dot(&xr);
        let xf = linalg::shifted_solve(&a_pert, si, &b_pert)?;
        let g_f = sys
            .c()
            .iter()
            .zip(xf.iter())
            .map(|(ci, zi)| zi * *ci)
            .sum::<C64>();
        let rel = (g_r - g_f).norm() / (1.0 + g_f.norm());
        interpolation_residual = interpolation_residual.max(rel);
    }

    // backward bounds
    let kappa_v = linalg::cond2(bases.v());
    let cos_angle = linalg::subspace_cos_angle(bases.v(), bases.w())?;
    let norm_b = sys.b().dot(sys.b()).sqrt();
    let norm_a = linalg::norm2(&linalg::promote(sys.a()));
    let db_bound = kappa_v / cos_angle * rp.eps * norm_b;
    let da_bound = kappa_v * kappa_v / cos_angle
        * (2.0 * rp.eps_bullet / (1.0 - 2.0 * rp.eps_bullet))
        * norm_a;

    // reported least-squares output correction dc = -(1/r) (db^T W e) f
    let we = bases.w().sum_axis(ndarray::Axis(1));
    let s: C64 = db.iter().zip(we.iter()).map(|(x, z)| z * *x).sum();
    let dc_least_squares = f.mapv(|x| -(s.re / r as f64) * x);

    Ok(SystemPerturbation {
        db,
        f,
        db_norm,
        da_norm,
        projection_residual,
        interpolation_residual,
        promotion_defect,
        db_bound,
        da_bound,
        dc_least_squares,
    })
}

/// Cauchy matrix C(sigma, mu) with entries 1/(sigma_i - mu_j).
pub fn cauchy_matrix(sigma: &[C64], mu: &[C64]) -> CMat {
    CMat::from_shape_fn((sigma.len(), mu.len()), |(i, j)| {
        C64::new(1.0, 0.0) / (sigma[i] - mu[j])
    })
}

/// Relative eigenvalue movement under a perturbation of the reduced input,
/// against its a priori bounds.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationBound {
    /// optimal l2 aggregate of relative eigenvalue differences
    pub lhs: f64,
    /// ||C||_2 * ||(C M)^{-1}||_2 * kappa2(C~) * ||dq e^T||_2
    pub rhs: f64,
    /// kappa2(C) * kappa2(C~) * ||dq e^T||_2, bounding the absolute variant
    pub rhs_remark: f64,
    /// optimal l2 aggregate of absolute eigenvalue differences
    pub lhs_abs: f64,
}

pub fn eigenvalue_perturbation_bound(
    sigma: &ShiftSet,
    q: &CVec,
    dq: &CVec,
) -> Result<PerturbationBound> {
    let sv = sigma.values();
    let r = sv.len();
    if q.len() != r || dq.len() != r {
        return Err(Error::SizeMismatch {
            left: q.len(),
            right: r,
        });
    }
    let dense = |qv: &CVec| -> CMat {
        CMat::from_shape_fn((r, r), |(i, j)| {
            let d = if i == j { sv[i] } else { C64::new(0.0, 0.0) };
            d - qv[i]
        })
    };
    let (mu, _) = linalg::eig_dense(&dense(q))?;
    let qt = q + dq;
    let (mu_t, _) = linalg::eig_dense(&dense(&qt))?;

    let mu_scale = mu.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for (i, z) in mu.iter().enumerate() {
        if z.norm() < SEP_TOL * mu_scale {
            return Err(Error::ZeroEigenvalue { index: i });
        }
    }

    // optimal sum-of-squares matchings (relative and absolute)
    let mut cost_rel = vec![0.0; r * r];
    let mut cost_abs = vec![0.0; r * r];
    for i in 0..r {
        for j in 0..r {
            let d = (mu[i] - mu_t[j]).norm();
            cost_abs[i * r + j] = d * d;
            let rel = d / mu[i].norm();
            cost_rel[i * r + j] = rel * rel;
        }
    }
    let perm_rel = min_sum_assignment(&cost_rel, r);
    let perm_abs = min_sum_assignment(&cost_abs, r);
    let lhs = (0..r)
        .map(|i| cost_rel[i * r + perm_rel[i]])
        .sum::<f64>()
        .sqrt();
    let lhs_abs = (0..r)
        .map(|i| cost_abs[i * r + perm_abs[i]])
        .sum::<f64>()
        .sqrt();

    // Cauchy factors
    let guard = |muv: &CVec| -> Result<CMat> {
        let scale = sigma.max_modulus();
        for (i, s) in sv.iter().enumerate() {
            for (j, m) in muv.iter().enumerate() {
                if (s - m).norm() < SEP_TOL * scale.max(s.norm()) {
                    return Err(Error::ShiftEigCollision { i, j });
                }
            }
        }
        Ok(cauchy_matrix(&sv, &muv.to_vec()))
    };
    let c = guard(&mu)?;
    let ct = guard(&mu_t)?;
    let cm = CMat::from_shape_fn((r, r), |(i, j)| c[[i, j]] * mu[j]);
    let s_cm = linalg::singular_values(&cm)?;
    let inv_cm_norm = 1.0 / s_cm.iter().copied().fold(f64::INFINITY, f64::min);
    let dq_rank1 = (r as f64).sqrt() * linalg::norm2_vec(dq);
    let rhs = linalg::norm2(&c) * inv_cm_norm * linalg::cond2(&ct) * dq_rank1;
    let rhs_remark = linalg::cond2(&c) * linalg::cond2(&ct) * dq_rank1;

    Ok(PerturbationBound {
        lhs,
        rhs,
        rhs_remark,
        lhs_abs,
    })
}

/// Conditioning snapshot of one iteration.
#[derive(Debug, Clone, Copy)]
pub struct CondReport {
    pub kappa_c: f64,
    pub kappa_v: f64,
    pub cos_angle: f64,
    pub q_norm: f64,
}

/// Condition numbers of the Cauchy eigenvector factor and of V, the V/W
/// subspace angle cosine, and the reduced input norm. Overflow lands on the
/// infinity sentinel rather than erroring.
pub fn condition_report(bases: &PrimitiveBases, model: &ReducedModel) -> CondReport {
    let sv = model.sigma().values();
    let mv = model.mu().values();
    let scale = model.sigma().max_modulus();
    let collision = sv
        .iter()
        .any(|s| mv.iter().any(|m| (s - m).norm() < 1e-3 * SEP_TOL * scale));
    let kappa_c = if collision {
        f64::INFINITY
    } else {
        linalg::cond2(&cauchy_matrix(&sv, &mv))
    };
    let kappa_v = linalg::cond2(bases.v());
    let cos_angle = linalg::subspace_cos_angle(bases.v(), bases.w()).unwrap_or(0.0);
    CondReport {
        kappa_c,
        kappa_v,
        cos_angle,
        q_norm: linalg::norm2_vec(model.q()),
    }
}

/// The backward-stability certificate attached to a finished run.
#[derive(Debug, Clone)]
pub struct BackwardCertificate {
    pub eps: f64,
    pub eps_bullet: f64,
    pub eta: Vec<f64>,
    /// eps * ||q||, bounding ||dq||
    pub dq_norm_bound_q: f64,
    /// eps_bullet * ||q_bullet||, bounding ||dq||
    pub dq_norm_bound_qbullet: f64,
    /// 2 eps_bullet ||A_r_bullet||, bounding ||dA_r||
    pub dar_bound: f64,
    /// kappa2(V)/cos * eps * ||b||, bounding ||db||
    pub db_bound: f64,
    /// kappa2(V)^2/cos * 2 eps_bullet/(1 - 2 eps_bullet) * ||A||, bounding ||dA||
    pub da_bound: f64,
    /// eps_bullet < 1/2
    pub valid: bool,
}

/// Assemble the certificate for a reduced model given the conditioning data
/// of the bases it came from.
pub fn build_certificate(
    model: &ReducedModel,
    kappa_v: f64,
    cos_angle: f64,
    norm_b: f64,
    norm_a: f64,
) -> Result<BackwardCertificate> {
    let sigma = model.sigma();
    let eq = epsilon_quantities(sigma, model.mu())?;
    let eta = eta_factors(sigma, &eq.eps_k)?;
    let q_bullet = irka::feedback_vector(sigma)?;
    let qb_norm = linalg::norm2_vec(&q_bullet);
    let q_norm = linalg::norm2_vec(model.q());

    let sv = sigma.values();
    let ar_bullet = CMat::from_shape_fn((model.order(), model.order()), |(i, j)| {
        let d = if i == j { sv[i] } else { C64::new(0.0, 0.0) };
        d - q_bullet[i]
    });
    let dar_bound = 2.0 * eq.eps_bullet * linalg::norm2(&ar_bullet);

    let valid = eq.eps_bullet < 0.5;
    let da_bound = if valid {
        kappa_v * kappa_v / cos_angle * (2.0 * eq.eps_bullet / (1.0 - 2.0 * eq.eps_bullet))
            * norm_a
    } else {
        f64::INFINITY
    };
    Ok(BackwardCertificate {
        eps: eq.eps,
        eps_bullet: eq.eps_bullet,
        eta,
        dq_norm_bound_q: eq.eps * q_norm,
        dq_norm_bound_qbullet: eq.eps_bullet * qb_norm,
        dar_bound,
        db_bound: kappa_v / cos_angle * eq.eps * norm_b,
        da_bound,
        valid,
    })
}
