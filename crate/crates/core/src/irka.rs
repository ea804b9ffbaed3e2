//! The fixed-point driver: reflect the reduced poles into new shifts until
//! stationarity, with optional pole-placement blending of the update.
//!
//! One step builds primitive bases at the working shifts, projects, and
//! eigensolves the generalized companion matrix. In that frame the reduced
//! input q doubles as the feedback vector that moves the shift diagonal to
//! the reduced poles, and an explicit feedback f exists that would reflect
//! the shifts outright. Blending q with f (Mann-style relaxation of the
//! fixed-point map) trades interpolation accuracy per step for steering
//! strength; the blend is equivalent to relaxing the characteristic
//! polynomial in the Lagrange basis anchored at the current shifts, which
//! [`kv_equivalence_check`] verifies pointwise through the secular function.

use num_complex::Complex64;

use crate::diagnostics::{self, BackwardCertificate};
use crate::error::{Error, Result};
use crate::interpolation::{self, PrimitiveBases, ReducedModel};
use crate::linalg::{self, CVec};
use crate::lti::LtiSystem;
use crate::shifts::{hausdorff_distance, matching_distance, ShiftSet, SEP_TOL};

type C64 = Complex64;

/// How the candidate shifts are produced from one projected model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateMode {
    /// Reflect the reduced poles (alpha = 1).
    Vanilla,
    /// Blend the reduced input with the reflecting feedback vector.
    Blended(AlphaSchedule),
}

/// Choice of the blending coefficient per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSchedule {
    Fixed(f64),
    /// Start at 1; halve after a step that increased the matching distance,
    /// reset to 1 after a decrease. A pragmatic heuristic, not a tuned rule.
    Backoff,
}

/// When to declare stationarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// d(candidate, current) <= tol * max |candidate|
    Matching,
    /// test the cheaper Hausdorff distance first, then the matching distance
    HausdorffThenMatching,
    /// eps_bullet <= tol (backward certificate justifies stopping)
    Certificate,
}

#[derive(Debug, Clone)]
pub struct IrkaConfig {
    pub r: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub update_mode: UpdateMode,
    pub stop_rule: StopRule,
    pub cycle_max_period: usize,
    pub seed: u64,
    /// Check the Lagrange-basis equivalence of the blended update each step.
    pub verify_kv: bool,
}

impl IrkaConfig {
    pub fn new(r: usize) -> Self {
        IrkaConfig {
            r,
            tol: 1e-8,
            max_iter: 200,
            update_mode: UpdateMode::Vanilla,
            stop_rule: StopRule::Matching,
            cycle_max_period: 8,
            seed: 0,
            verify_kv: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::BadSpec {
                reason: "reduced order must be at least 1".into(),
            });
        }
        if !(self.tol > 0.0) {
            return Err(Error::BadSpec {
                reason: "tolerance must be positive".into(),
            });
        }
        if let UpdateMode::Blended(AlphaSchedule::Fixed(a)) = self.update_mode {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::BadSpec {
                    reason: format!("alpha = {a} outside [0, 1]"),
                });
            }
        }
        Ok(())
    }
}

/// Everything recorded about one iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k: usize,
    pub sigma_in: ShiftSet,
    pub mu_out: ShiftSet,
    pub q_norm: f64,
    /// matching distance between the candidate and the current shifts
    pub d: f64,
    /// Hausdorff distance between the same sets
    pub h: f64,
    pub kappa_c: f64,
    pub kappa_v: f64,
    pub cos_angle: f64,
    pub eps: f64,
    pub eps_bullet: f64,
    /// how many candidate entries were flipped into the right half-plane
    pub flipped: usize,
    pub alpha_used: f64,
    pub cond_loewner: f64,
    pub degenerate_q: bool,
    /// residual of the Krajewski-Viaro equivalence check, when enabled
    pub kv_residual: Option<f64>,
}

/// Terminal state of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Converged,
    MaxIter,
    /// A periodic orbit of the given period was detected.
    Cycle(usize),
    Failed(String),
}

/// Output bundle of [`run_irka`]; failures land in `status`, never panic.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    /// Model of the final (or best-seen, for cycles) iterate.
    pub model: Option<ReducedModel>,
    /// Bases the final model was built from.
    pub bases: Option<PrimitiveBases>,
    /// Real state-space realization of the final model.
    pub realified: Option<LtiSystem>,
    pub history: Vec<IterationRecord>,
    pub certificate: Option<BackwardCertificate>,
    /// Working shifts of the final iterate.
    pub final_shifts: Option<ShiftSet>,
}

/// Pole-placement weights: q_i = prod_j (sigma_i - mu_j) / prod_{j != i}
/// (sigma_i - sigma_j), so that eig(Sigma - q e^T) lands exactly on the
/// target tuple.
pub fn placement_q(sigma: &ShiftSet, mu_target: &ShiftSet) -> Result<CVec> {
    let sv = sigma.values();
    let mv = mu_target.values();
    if sv.len() != mv.len() {
        return Err(Error::SizeMismatch {
            left: sv.len(),
            right: mv.len(),
        });
    }
    let scale = sigma.max_modulus();
    let r = sv.len();
    let mut q = CVec::zeros(r);
    for i in 0..r {
        let mut num = C64::new(1.0, 0.0);
        for &m in &mv {
            num *= sv[i] - m;
        }
        let mut den = C64::new(1.0, 0.0);
        for j in 0..r {
            if j == i {
                continue;
            }
            let d = sv[i] - sv[j];
            if d.norm() < SEP_TOL * scale {
                return Err(Error::ShiftCollision { i, j });
            }
            den *= d;
        }
        q[i] = num / den;
    }
    Ok(q)
}

/// The explicit feedback that reflects the shifts:
/// f_i = 2 sigma_i prod_{j != i} (sigma_i + sigma_j)/(sigma_i - sigma_j),
/// so eig(Sigma - f e^T) = -sigma exactly. Identical to
/// `placement_q(sigma, -sigma)`.
pub fn feedback_vector(sigma: &ShiftSet) -> Result<CVec> {
    let sv = sigma.values();
    let scale = sigma.max_modulus();
    let r = sv.len();
    let mut f = CVec::zeros(r);
    for i in 0..r {
        let mut acc = 2.0 * sv[i];
        for j in 0..r {
            if j == i {
                continue;
            }
            let d = sv[i] - sv[j];
            if d.norm() < SEP_TOL * scale {
                return Err(Error::ShiftCollision { i, j });
            }
            acc *= (sv[i] + sv[j]) / d;
        }
        f[i] = acc;
    }
    Ok(f)
}

/// Record of one blended update.
#[derive(Debug, Clone)]
pub struct BlendRecord {
    pub alpha: f64,
    pub q_blend: CVec,
    /// Indices excluded from the feedback blend (alpha forced to 1 there).
    pub masked: Vec<usize>,
}

/// Blend the reduced input with the reflecting feedback and reflect the
/// resulting companion spectrum into candidate shifts.
///
/// `flip_mask[i]`, when given, marks shifts that were produced by a
/// stability flip; those indices keep their interpolation weight unblended
/// (partial placement), since reflecting them again would push the next
/// poles back into the wrong half-plane.
pub fn blended_update(
    sigma: &ShiftSet,
    q: &CVec,
    alpha: f64,
    flip_mask: Option<&[bool]>,
) -> Result<(ShiftSet, BlendRecord)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::BadSpec {
            reason: format!("alpha = {alpha} outside [0, 1]"),
        });
    }
    let r = sigma.len();
    let (q_blend, masked) = if alpha == 1.0 {
        (q.clone(), Vec::new())
    } else {
        let f = feedback_vector(sigma)?;
        let mut qb = CVec::zeros(r);
        let mut masked = Vec::new();
        for i in 0..r {
            let keep = flip_mask.map_or(false, |m| m[i]);
            if keep {
                qb[i] = q[i];
                masked.push(i);
            } else {
                qb[i] = alpha * q[i] + (1.0 - alpha) * f[i];
            }
        }
        (qb, masked)
    };
    let (mu, _) = interpolation::companion_eig(sigma, &q_blend)?;
    Ok((
        mu.reflect(),
        BlendRecord {
            alpha,
            q_blend,
            masked,
        },
    ))
}

/// Pointwise check that the blended companion polynomial is the same convex
/// combination in the Lagrange frame:
/// det(zI - A(q_blend)) = alpha det(zI - A(q)) + (1-alpha) det(zI - A(f)).
///
/// Returns the maximum relative residual over the sample points. The identity
/// is exact in exact arithmetic, so anything above roundoff indicates a bug.
pub fn kv_equivalence_check(
    sigma: &ShiftSet,
    q: &CVec,
    alpha: f64,
    z_samples: &[C64],
) -> Result<f64> {
    let f = feedback_vector(sigma)?;
    let q_blend = CVec::from_shape_fn(q.len(), |i| alpha * q[i] + (1.0 - alpha) * f[i]);
    let mut worst = 0.0f64;
    for &z in z_samples {
        let lhs = interpolation::secular_eval(sigma, &q_blend, z)?;
        let pq = interpolation::secular_eval(sigma, q, z)?;
        let pf = interpolation::secular_eval(sigma, &f, z)?;
        let rhs = alpha * pq + (1.0 - alpha) * pf;
        let scale = lhs.norm().max(rhs.norm()).max(1e-300);
        worst = worst.max((lhs - rhs).norm() / scale);
    }
    Ok(worst)
}

/// The per-iteration payload the driver consumes; produced by [`default_step`]
/// or by a scripted stand-in under test.
#[derive(Clone)]
pub struct StepOutput {
    pub bases: PrimitiveBases,
    pub model: ReducedModel,
    pub candidate: ShiftSet,
}

/// One raw fixed-point step at the given working shifts: build, project,
/// reflect. The returned candidate is the pre-flip reflection of the reduced
/// poles; the record carries the distances of the candidate to the input
/// shifts and the conditioning snapshot of this iterate.
pub fn irka_step(
    sys: &LtiSystem,
    shifts: &ShiftSet,
) -> Result<(ReducedModel, ShiftSet, IterationRecord)> {
    let out = default_step(sys, shifts, 1.0, &[])?;
    let record = make_record(0, shifts, &out, 1.0, None);
    Ok((out.model, out.candidate, record))
}

/// Build, project, and form the (possibly blended) candidate shifts.
pub fn default_step(
    sys: &LtiSystem,
    shifts: &ShiftSet,
    alpha: f64,
    flip_mask: &[bool],
) -> Result<StepOutput> {
    if sys.order() < shifts.len() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "reduced order {} exceeds system order {}",
                shifts.len(),
                sys.order()
            ),
        });
    }
    let bases = interpolation::build_primitive_bases(sys, shifts)?;
    let model = interpolation::project_reduced(sys, &bases)?;
    let candidate = if alpha == 1.0 {
        model.mu().reflect()
    } else {
        let mask = if flip_mask.len() == shifts.len() {
            Some(flip_mask)
        } else {
            None
        };
        blended_update(shifts, model.q(), alpha, mask)?.0
    };
    Ok(StepOutput {
        bases,
        model,
        candidate,
    })
}

fn make_record(
    k: usize,
    shifts: &ShiftSet,
    out: &StepOutput,
    alpha: f64,
    kv_residual: Option<f64>,
) -> IterationRecord {
    let d = matching_distance(&out.candidate, shifts).unwrap_or(f64::INFINITY);
    let h = hausdorff_distance(&out.candidate, shifts).unwrap_or(f64::INFINITY);
    let rep = diagnostics::condition_report(&out.bases, &out.model);
    let (eps, eps_bullet) = match diagnostics::epsilon_quantities(shifts, out.model.mu()) {
        Ok(eq) => (eq.eps, eq.eps_bullet),
        Err(_) => (f64::INFINITY, f64::INFINITY),
    };
    IterationRecord {
        k,
        sigma_in: shifts.clone(),
        mu_out: out.model.mu().clone(),
        q_norm: rep.q_norm,
        d,
        h,
        kappa_c: rep.kappa_c,
        kappa_v: rep.kappa_v,
        cos_angle: rep.cos_angle,
        eps,
        eps_bullet,
        flipped: 0,
        alpha_used: alpha,
        cond_loewner: out.bases.cond_loewner(),
        degenerate_q: out.model.is_degenerate(),
        kv_residual,
    }
}

/// Default initialization: r points log-spaced in modulus between the
/// extreme eigenvalue moduli of A, on the positive real axis. With
/// `randomize`, moduli are drawn log-uniformly instead and entries are paired
/// into conjugate points with seeded angles.
pub fn default_init(sys: &LtiSystem, r: usize, seed: u64, randomize: bool) -> Result<ShiftSet> {
    use rand::prelude::*;
    let eigs = sys.poles()?;
    let mods: Vec<f64> = eigs.iter().map(|z| z.norm()).collect();
    let lmax = mods.iter().copied().fold(0.0, f64::max).max(1e-8);
    let lmin = mods
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(1e-8 * lmax);
    let (lo, hi) = (lmin.ln(), lmax.ln());
    let set = if randomize {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut vals: Vec<C64> = Vec::with_capacity(r);
        let pairs = r / 2;
        for _ in 0..pairs {
            let m = (lo + (hi - lo) * rng.random::<f64>()).exp();
            let theta = rng.random::<f64>() * std::f64::consts::FRAC_PI_2 * 0.9;
            let z = C64::from_polar(m, theta);
            vals.push(z);
            vals.push(z.conj());
        }
        if r % 2 == 1 {
            vals.push(C64::new((lo + (hi - lo) * rng.random::<f64>()).exp(), 0.0));
        }
        ShiftSet::pair_values(&vals)?
    } else {
        let pts: Vec<f64> = if r == 1 {
            vec![(0.5 * (lo + hi)).exp()]
        } else {
            (0..r)
                .map(|i| (lo + (hi - lo) * i as f64 / (r - 1) as f64).exp())
                .collect()
        };
        ShiftSet::from_reals(&pts)
    };
    // collapse guard doubles as the degenerate-interval (lmin = lmax) fix
    Ok(set.flip_unstable().0)
}

/// Run the fixed-point iteration to a terminal status.
pub fn run_irka(sys: &LtiSystem, config: &IrkaConfig, init: Option<ShiftSet>) -> RunOutcome {
    run_irka_with(sys, config, init, default_step)
}

/// Driver core, parameterized over the per-iteration step so termination
/// logic (stopping rules, flip bookkeeping, cycle detection) can be driven by
/// scripted iterates in tests.
pub fn run_irka_with<F>(
    sys: &LtiSystem,
    config: &IrkaConfig,
    init: Option<ShiftSet>,
    mut step: F,
) -> RunOutcome
where
    F: FnMut(&LtiSystem, &ShiftSet, f64, &[bool]) -> Result<StepOutput>,
{
    let mut history = Vec::new();
    let fail = |reason: String, history: Vec<IterationRecord>| RunOutcome {
        status: RunStatus::Failed(reason),
        model: None,
        bases: None,
        realified: None,
        history,
        certificate: None,
        final_shifts: None,
    };
    if let Err(e) = config.validate() {
        return fail(e.to_string(), history);
    }
    let init = match init {
        Some(s) => {
            if s.len() != config.r {
                return fail(
                    format!("initial shift set has size {}, expected {}", s.len(), config.r),
                    history,
                );
            }
            s
        }
        None => match default_init(sys, config.r, config.seed, false) {
            Ok(s) => s,
            Err(e) => return fail(e.to_string(), history),
        },
    };
    if sys.order() < config.r {
        return fail(
            format!(
                "reduced order {} exceeds system order {}",
                config.r,
                sys.order()
            ),
            history,
        );
    }

    let (mut working, _) = init.flip_unstable();
    let mut flip_mask = vec![false; config.r];
    let mut sigma_trail: Vec<ShiftSet> = vec![working.clone()];
    let mut alpha = initial_alpha(&config.update_mode);
    let mut prev_d: Option<f64> = None;
    let mut best: Option<(f64, StepOutput, ShiftSet)> = None;

    let mut status = RunStatus::MaxIter;
    let mut finished: Option<(StepOutput, ShiftSet)> = None;

    for k in 0..config.max_iter {
        let out = match step(sys, &working, alpha, &flip_mask) {
            Ok(o) => o,
            Err(e) => {
                status = RunStatus::Failed(e.to_string());
                break;
            }
        };
        let kv = if config.verify_kv && alpha < 1.0 {
            kv_residual_for(&working, &out, alpha)
        } else {
            None
        };
        let mut record = make_record(k, &working, &out, alpha, kv);

        let scale = out.candidate.max_modulus();
        let stop = match config.stop_rule {
            StopRule::Matching => record.d <= config.tol * scale,
            StopRule::HausdorffThenMatching => {
                record.h <= config.tol * scale && record.d <= config.tol * scale
            }
            StopRule::Certificate => record.eps_bullet <= config.tol,
        };

        // stability flip decides the next working set
        let (next, mask) = out.candidate.flip_unstable_mask();
        record.flipped = mask.iter().filter(|&&f| f).count();
        history.push(record.clone());

        if best.as_ref().map_or(true, |(bd, _, _)| record.d < *bd) {
            best = Some((record.d, out.clone(), working.clone()));
        }

        if stop {
            status = RunStatus::Converged;
            finished = Some((out, working.clone()));
            break;
        }

        // backoff schedule reacts to the distance trend
        if let UpdateMode::Blended(AlphaSchedule::Backoff) = config.update_mode {
            if let Some(p) = prev_d {
                if record.d > p {
                    alpha = (alpha * 0.5).max(1.0 / 1024.0);
                } else {
                    alpha = 1.0;
                }
            }
        }
        prev_d = Some(record.d);

        working = next;
        flip_mask = mask;
        sigma_trail.push(working.clone());

        if sigma_trail.len() >= 2 * config.cycle_max_period {
            if let Some((p, _)) = crate::shifts::detect_cycle(
                &sigma_trail,
                config.cycle_max_period,
                100.0 * config.tol,
            ) {
                status = RunStatus::Cycle(p);
                finished = best.clone().map(|(_, o, w)| (o, w));
                break;
            }
        }
    }

    if status == RunStatus::MaxIter {
        finished = best.clone().map(|(_, o, w)| (o, w));
    }

    let (model, bases, final_shifts) = match finished {
        Some((o, w)) => (Some(o.model), Some(o.bases), Some(w)),
        None => (None, None, None),
    };
    let realified = model.as_ref().and_then(|m| m.to_real_state_space().ok());
    let certificate = match (&model, &bases) {
        (Some(m), Some(b)) => {
            let rep = diagnostics::condition_report(b, m);
            let norm_b = sys.b().dot(sys.b()).sqrt();
            let norm_a = linalg::norm2(&linalg::promote(sys.a()));
            diagnostics::build_certificate(m, rep.kappa_v, rep.cos_angle, norm_b, norm_a).ok()
        }
        _ => None,
    };
    RunOutcome {
        status,
        model,
        bases,
        realified,
        history,
        certificate,
        final_shifts,
    }
}

fn initial_alpha(mode: &UpdateMode) -> f64 {
    match mode {
        UpdateMode::Vanilla => 1.0,
        UpdateMode::Blended(AlphaSchedule::Fixed(a)) => *a,
        UpdateMode::Blended(AlphaSchedule::Backoff) => 1.0,
    }
}

fn kv_residual_for(working: &ShiftSet, out: &StepOutput, alpha: f64) -> Option<f64> {
    // sample ring just outside the shift moduli
    let scale = working.max_modulus();
    let zs: Vec<C64> = (0..8)
        .map(|i| C64::from_polar(2.0 * scale + 1.0, 0.37 + i as f64 * 0.7))
        .collect();
    kv_equivalence_check(working, out.model.q(), alpha, &zs).ok()
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

    fn sym_two_state() -> LtiSystem {
        LtiSystem::new(
            array![[-1.0, 0.0], [0.0, -2.0]],
            array![1.0, 1.0],
            array![1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn placement_fixture() {
        let sigma = ShiftSet::from_reals(&[1.0, 2.0]);
        let target = ShiftSet::from_reals(&[-1.0, -2.0]);
        let q = placement_q(&sigma, &target).unwrap();
        assert_relative_eq!(q[0].re, -6.0, max_relative = 1e-13);
        assert_relative_eq!(q[1].re, 12.0, max_relative = 1e-13);
        let (mu, _) = interpolation::companion_eig(&sigma, &q).unwrap();
        let got = mu.values();
        assert!(got.iter().any(|z| (z + c(1.0, 0.0)).norm() < 1e-12));
        assert!(got.iter().any(|z| (z + c(2.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn placement_identity_target_gives_zero() {
        let sigma = ShiftSet::from_reals(&[1.0, 2.0, 5.0]);
        let q = placement_q(&sigma, &sigma).unwrap();
        assert!(q.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn placement_scalar() {
        let sigma = ShiftSet::from_reals(&[1.0]);
        let q = placement_q(&sigma, &ShiftSet::from_reals(&[-1.0])).unwrap();
        assert_relative_eq!(q[0].re, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn feedback_fixtures() {
        let f = feedback_vector(&ShiftSet::from_reals(&[3.0])).unwrap();
        assert_relative_eq!(f[0].re, 6.0, max_relative = 1e-14);

        let f = feedback_vector(&ShiftSet::from_reals(&[1.0, 2.0])).unwrap();
        assert_relative_eq!(f[0].re, -6.0, max_relative = 1e-13);
        assert_relative_eq!(f[1].re, 12.0, max_relative = 1e-13);

        // complex pair: f = (2-2i, 2+2i), eig = -1 +/- i
        let sigma = ShiftSet::pair_values(&[c(1.0, 1.0), c(1.0, -1.0)]).unwrap();
        let f = feedback_vector(&sigma).unwrap();
        let fv: Vec<C64> = f.to_vec();
        assert!(fv.iter().any(|z| (z - c(2.0, -2.0)).norm() < 1e-13));
        assert!(fv.iter().any(|z| (z - c(2.0, 2.0)).norm() < 1e-13));
        let (mu, _) = interpolation::companion_eig(&sigma, &f).unwrap();
        let mv = mu.values();
        assert!(mv.iter().any(|z| (z - c(-1.0, 1.0)).norm() < 1e-12));
        assert!(mv.iter().any(|z| (z - c(-1.0, -1.0)).norm() < 1e-12));

        // agrees with placement at the mirror
        let sigma = ShiftSet::from_reals(&[0.7, 1.9, 4.2]);
        let f = feedback_vector(&sigma).unwrap();
        let q = placement_q(&sigma, &sigma.reflect()).unwrap();
        for i in 0..3 {
            assert!((f[i] - q[i]).norm() < 1e-12 * f[i].norm());
        }
    }

    #[test]
    fn blended_alpha_one_is_vanilla_bitwise() {
        let sys = sym_two_state();
        let shifts = ShiftSet::from_reals(&[1.0, 2.0]);
        let (model, candidate, _) = irka_step(&sys, &shifts).unwrap();
        let (blended, rec) = blended_update(&shifts, model.q(), 1.0, None).unwrap();
        assert_eq!(candidate, blended);
        assert_eq!(rec.q_blend, *model.q());
    }

    #[test]
    fn blended_alpha_zero_reflects_back() {
        // pure placement puts the poles at -sigma; reflecting returns sigma
        let sys = sym_two_state();
        let shifts = ShiftSet::from_reals(&[1.0, 2.0]);
        let (model, _, _) = irka_step(&sys, &shifts).unwrap();
        let (cand, _) = blended_update(&shifts, model.q(), 0.0, None).unwrap();
        let d = matching_distance(&cand, &shifts).unwrap();
        assert!(d < 1e-10 * shifts.max_modulus(), "d = {d}");
    }

    #[test]
    fn blended_half_preserves_closure() {
        let sys = sym_two_state();
        let shifts = ShiftSet::from_reals(&[1.0, 2.0]);
        let (model, _, _) = irka_step(&sys, &shifts).unwrap();
        let (cand, _) = blended_update(&shifts, model.q(), 0.5, None).unwrap();
        let vals = cand.values();
        assert!(vals.iter().all(|z| z.is_finite()));
        let mut conj: Vec<C64> = vals.iter().map(|z| z.conj()).collect();
        for z in &vals {
            let p = conj.iter().position(|w| w == z).unwrap();
            conj.remove(p);
        }
        assert!(conj.is_empty());
    }

    #[test]
    fn kv_check_trivial_alphas() {
        let sys = sym_two_state();
        let shifts = ShiftSet::from_reals(&[1.0, 2.0]);
        let (model, _, _) = irka_step(&sys, &shifts).unwrap();
        let zs = [c(0.0, 1.0), c(3.0, 0.5), c(-2.0, 2.0)];
        assert!(kv_equivalence_check(&shifts, model.q(), 1.0, &zs).unwrap() < 1e-14);
        assert!(kv_equivalence_check(&shifts, model.q(), 0.0, &zs).unwrap() < 1e-14);
        assert!(kv_equivalence_check(&shifts, model.q(), 0.37, &zs).unwrap() < 1e-12);
    }

    #[test]
    fn scalar_step_reaches_fixed_point_in_one_move() {
        let sys = first_order();
        for s0 in [0.2, 1.0, 5.0, 40.0] {
            let shifts = ShiftSet::from_reals(&[s0]);
            let (_, cand, rec) = irka_step(&sys, &shifts).unwrap();
            assert_relative_eq!(cand.values()[0].re, 1.0, max_relative = 1e-11);
            assert!(rec.h <= rec.d + 1e-15);
        }
        // at the fixed point the distance is zero
        let shifts = ShiftSet::from_reals(&[1.0]);
        let (_, cand, rec) = irka_step(&sys, &shifts).unwrap();
        assert!(rec.d < 1e-11);
        assert_relative_eq!(cand.values()[0].re, 1.0, max_relative = 1e-11);
    }

    #[test]
    fn run_scalar_converges() {
        let sys = first_order();
        let mut cfg = IrkaConfig::new(1);
        cfg.tol = 1e-10;
        let out = run_irka(&sys, &cfg, Some(ShiftSet::from_reals(&[17.0])));
        assert_eq!(out.status, RunStatus::Converged);
        let fs = out.final_shifts.unwrap().values()[0];
        assert!((fs - c(1.0, 0.0)).norm() < 1e-10);
        let q = out.model.as_ref().unwrap().q()[0];
        assert!((q - c(2.0, 0.0)).norm() < 1e-10);
        assert!(out.certificate.unwrap().eps_bullet < 1e-9);
    }

    #[test]
    fn run_symmetric_r1_matches_known_fixed_point() {
        let sys = sym_two_state();
        let mut cfg = IrkaConfig::new(1);
        cfg.tol = 1e-12;
        cfg.max_iter = 400;
        let out = run_irka(&sys, &cfg, Some(ShiftSet::from_reals(&[0.5])));
        assert_eq!(out.status, RunStatus::Converged);
        let s = out.final_shifts.unwrap().values()[0].re;
        // independently computed optimum of the r = 1 mirror problem
        assert_relative_eq!(s, 1.3285894, max_relative = 1e-6);
    }

    #[test]
    fn run_reports_failure_as_status() {
        let sys = first_order();
        let cfg = IrkaConfig::new(3); // r > n
        let out = run_irka(&sys, &cfg, None);
        assert!(matches!(out.status, RunStatus::Failed(_)));
        assert!(out.history.is_empty());
    }

    #[test]
    fn default_init_logspace_is_deterministic_and_working() {
        let sys = sym_two_state();
        let a = default_init(&sys, 2, 0, false).unwrap();
        let b = default_init(&sys, 2, 0, false).unwrap();
        assert_eq!(a, b);
        assert!(a.is_working());
        assert_relative_eq!(a.values()[0].re, 1.0, max_relative = 1e-12);
        assert_relative_eq!(a.values()[1].re, 2.0, max_relative = 1e-12);

        let r = default_init(&sys, 4, 3, true).unwrap();
        assert!(r.is_working());
        assert_eq!(r.len(), 4);
    }

    #[test]
    fn scripted_cycle_is_detected() {
        // alternate two candidate sets regardless of the model
        let sys = sym_two_state();
        let a = ShiftSet::from_reals(&[1.0, 2.0]);
        let b = ShiftSet::from_reals(&[3.0, 4.0]);
        let mut k = 0usize;
        let mut cfg = IrkaConfig::new(2);
        cfg.tol = 1e-8;
        cfg.cycle_max_period = 4;
        cfg.max_iter = 50;
        let out = run_irka_with(&sys, &cfg, Some(a.clone()), |sys, shifts, _, _| {
            let bases = interpolation::build_primitive_bases(sys, shifts)?;
            let model = interpolation::project_reduced(sys, &bases)?;
            let candidate = if k % 2 == 0 { b.clone() } else { a.clone() };
            k += 1;
            Ok(StepOutput {
                bases,
                model,
                candidate,
            })
        });
        assert_eq!(out.status, RunStatus::Cycle(2));
        assert!(out.history.len() <= 20);
        assert!(out.model.is_some());
    }
}
