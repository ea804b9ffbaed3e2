//! Conjugation-closed tuples of complex points with the metrics used by the
//! fixed-point driver.
//!
//! A [`ShiftSet`] stores real entries and one representative of each conjugate
//! pair; the full tuple is materialized on demand. Closure under conjugation is
//! therefore a structural fact rather than a floating-point coincidence, and
//! every operation preserves it bit-exactly.
//!
//! The same type also carries eigenvalue tuples, which have no right-half-plane
//! requirement; `flip_unstable` converts a raw candidate into a working set.

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

type C64 = Complex64;

/// Snap tolerance for treating an eigenvalue as real and for matching
/// conjugate partners: |Im| < PAIR_TOL * (1 + |z|).
pub const PAIR_TOL: f64 = 1e-10;

/// Relative separation below which two entries count as colliding.
pub const SEP_TOL: f64 = 1e-8;

/// Relative floor used to push purely imaginary candidates into the open
/// right half-plane.
pub const STAB_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Entry {
    Real(f64),
    /// One member of a conjugate pair; the stored value has Im > 0.
    Pair(C64),
}

/// Structural role of one materialized index of a [`ShiftSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairRole {
    Real,
    /// Upper member of a conjugate pair; the partner sits at the given index.
    Upper(usize),
    /// Lower member of a conjugate pair; the partner sits at the given index.
    Lower(usize),
}

/// An unordered tuple of complex points, closed under conjugation.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSet {
    entries: Vec<Entry>,
}

impl ShiftSet {
    /// Build from explicitly real values.
    pub fn from_reals(vals: &[f64]) -> Self {
        ShiftSet {
            entries: vals.iter().map(|&x| Entry::Real(x)).collect(),
        }
    }

    /// Build from a list of complex values that is (numerically) closed under
    /// conjugation.
    ///
    /// Values with |Im| < tol*(1+|z|) are snapped to the real axis; the rest
    /// are greedily matched into conjugate pairs and symmetrized as
    /// ((z + conj(z'))/2). Fails if some value has no conjugate partner.
    pub fn pair_values(vals: &[C64]) -> Result<Self> {
        let mut reals = Vec::new();
        let mut complexes: Vec<C64> = Vec::new();
        for &z in vals {
            if z.im.abs() < PAIR_TOL * (1.0 + z.norm()) {
                reals.push((z, Entry::Real(z.re)));
            } else {
                complexes.push(z);
            }
        }
        let mut used = vec![false; complexes.len()];
        let mut pairs: Vec<(usize, Entry)> = Vec::new();
        for i in 0..complexes.len() {
            if used[i] || complexes[i].im < 0.0 {
                continue;
            }
            let zi = complexes[i];
            // nearest unused conjugate candidate in the lower half-plane
            let mut best: Option<(usize, f64)> = None;
            for (j, &zj) in complexes.iter().enumerate() {
                if used[j] || j == i || zj.im >= 0.0 {
                    continue;
                }
                let d = (zi - zj.conj()).norm();
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            let Some((j, d)) = best else {
                return Err(Error::BadSpec {
                    reason: format!("value {zi} has no conjugate partner"),
                });
            };
            let zj = complexes[j];
            if d > PAIR_TOL * (1.0 + zi.norm()) * 1e3 {
                // partners must agree well beyond the snap tolerance
                return Err(Error::BadSpec {
                    reason: format!("values {zi} and {zj} are not a conjugate pair"),
                });
            }
            used[i] = true;
            used[j] = true;
            let mid = 0.5 * (zi + zj.conj());
            pairs.push((i, Entry::Pair(C64::new(mid.re, mid.im.abs()))));
        }
        if used.iter().filter(|&&u| u).count() != complexes.len() {
            return Err(Error::BadSpec {
                reason: "set is not closed under conjugation".into(),
            });
        }
        // keep the original encounter order: reals by position, pairs by the
        // position of their upper member
        let mut entries: Vec<(usize, Entry)> = Vec::new();
        let mut ridx = 0usize;
        for (k, &z) in vals.iter().enumerate() {
            if z.im.abs() < PAIR_TOL * (1.0 + z.norm()) {
                entries.push((k, reals[ridx].1));
                ridx += 1;
            }
        }
        let mut cidx = 0usize;
        for (k, &z) in vals.iter().enumerate() {
            if z.im.abs() >= PAIR_TOL * (1.0 + z.norm()) {
                if z.im > 0.0 {
                    if let Some(&(_, e)) = pairs.iter().find(|(pi, _)| *pi == cidx) {
                        entries.push((k, e));
                    }
                }
                cidx += 1;
            }
        }
        entries.sort_by_key(|(k, _)| *k);
        Ok(ShiftSet {
            entries: entries.into_iter().map(|(_, e)| e).collect(),
        })
    }

    /// Number of points in the materialized tuple.
    pub fn len(&self) -> usize {
        self.entries
            .iter()
            .map(|e| match e {
                Entry::Real(_) => 1,
                Entry::Pair(_) => 2,
            })
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Materialize the tuple in canonical order: storage order, with each
    /// conjugate pair emitted as (upper, lower) adjacently.
    pub fn values(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.len());
        for e in &self.entries {
            match e {
                Entry::Real(x) => out.push(C64::new(*x, 0.0)),
                Entry::Pair(z) => {
                    out.push(*z);
                    out.push(z.conj());
                }
            }
        }
        out
    }

    /// Role of each materialized index (pair members are adjacent).
    pub fn pair_roles(&self) -> Vec<PairRole> {
        let mut out = Vec::with_capacity(self.len());
        for e in &self.entries {
            match e {
                Entry::Real(_) => out.push(PairRole::Real),
                Entry::Pair(_) => {
                    let k = out.len();
                    out.push(PairRole::Upper(k + 1));
                    out.push(PairRole::Lower(k));
                }
            }
        }
        out
    }

    /// Largest modulus in the set (0 for an empty set).
    pub fn max_modulus(&self) -> f64 {
        self.values().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// True if every point has strictly positive real part.
    pub fn in_right_half_plane(&self) -> bool {
        self.values().iter().all(|z| z.re > 0.0)
    }

    /// Entrywise negation (mirror across the imaginary axis).
    pub fn reflect(&self) -> ShiftSet {
        ShiftSet {
            entries: self
                .entries
                .iter()
                .map(|e| match e {
                    Entry::Real(x) => Entry::Real(-x),
                    // -(a+bi) has Im<0 for b>0; store the conjugate so the
                    // upper member is kept
                    Entry::Pair(z) => Entry::Pair(C64::new(-z.re, z.im)),
                })
                .collect(),
        }
    }

    /// Flip entries with nonpositive real part across the imaginary axis and
    /// nudge purely imaginary ones into the open right half-plane, then
    /// separate any colliding entries. Returns the flip count (a conjugate
    /// pair counts as 2).
    pub fn flip_unstable(&self) -> (ShiftSet, usize) {
        let (s, mask) = self.flip_unstable_mask();
        let count = mask.iter().filter(|&&f| f).count();
        (s, count)
    }

    /// Like [`ShiftSet::flip_unstable`] but reporting, per materialized index,
    /// whether that point was flipped.
    pub fn flip_unstable_mask(&self) -> (ShiftSet, Vec<bool>) {
        let floor = STAB_FLOOR * self.max_modulus().max(1e-300);
        let mut mask = Vec::with_capacity(self.len());
        let mut entries = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            match e {
                Entry::Real(x) => {
                    if *x <= 0.0 {
                        mask.push(true);
                        entries.push(Entry::Real(if -*x > 0.0 { -*x } else { floor }));
                    } else {
                        mask.push(false);
                        entries.push(Entry::Real(*x));
                    }
                }
                Entry::Pair(z) => {
                    if z.re <= 0.0 {
                        mask.push(true);
                        mask.push(true);
                        let re = if -z.re > 0.0 { -z.re } else { floor };
                        entries.push(Entry::Pair(C64::new(re, z.im)));
                    } else {
                        mask.push(false);
                        mask.push(false);
                        entries.push(Entry::Pair(*z));
                    }
                }
            }
        }
        let mut s = ShiftSet { entries };
        s.separate_collisions();
        (s, mask)
    }

    /// Deterministically perturb colliding entries apart:
    /// sigma_i <- sigma_i * (1 + SEP_TOL * i), conjugate partners together.
    fn separate_collisions(&mut self) {
        let scale = self.max_modulus();
        if scale == 0.0 {
            return;
        }
        for pass in 0..8 {
            let vals = self.values();
            let n = vals.len();
            let mut collide = false;
            'outer: for i in 0..n {
                for j in (i + 1)..n {
                    if (vals[i] - vals[j]).norm() < SEP_TOL * scale {
                        collide = true;
                        break 'outer;
                    }
                }
            }
            if !collide {
                return;
            }
            let bump = SEP_TOL * (1.0 + pass as f64);
            for (i, e) in self.entries.iter_mut().enumerate() {
                let f = 1.0 + bump * i as f64;
                match e {
                    Entry::Real(x) => *x *= f,
                    Entry::Pair(z) => *z *= f,
                }
            }
        }
    }

    /// True when all points are pairwise separated by SEP_TOL * max|sigma|.
    pub fn is_separated(&self) -> bool {
        let vals = self.values();
        let scale = self.max_modulus();
        for i in 0..vals.len() {
            for j in (i + 1)..vals.len() {
                if (vals[i] - vals[j]).norm() < SEP_TOL * scale {
                    return false;
                }
            }
        }
        true
    }

    /// True for a set usable to build bases: nonempty, strictly in the right
    /// half-plane, and pairwise separated.
    pub fn is_working(&self) -> bool {
        !self.is_empty() && self.in_right_half_plane() && self.is_separated()
    }
}

/// Exact bottleneck matching distance between two equal-size tuples:
/// the minimum over permutations of the maximum modulus difference.
///
/// Solved by bisection over the sorted pairwise distances with a bipartite
/// matching feasibility test, which is exact (the optimum is one of the r^2
/// pairwise distances).
pub fn matching_distance(a: &ShiftSet, b: &ShiftSet) -> Result<f64> {
    let av = a.values();
    let bv = b.values();
    if av.len() != bv.len() {
        return Err(Error::SizeMismatch {
            left: av.len(),
            right: bv.len(),
        });
    }
    Ok(bottleneck_value(&av, &bv))
}

/// Bottleneck matching together with one optimal assignment
/// `perm[i] = j` pairing `a[i]` with `b[perm[i]]`.
pub fn matching_assignment(a: &[C64], b: &[C64]) -> Result<(f64, Vec<usize>)> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let d = bottleneck_value(a, b);
    // recover a witness matching at the optimal threshold (with slack for ties)
    let thr = d * (1.0 + 1e-12) + f64::MIN_POSITIVE;
    let m = max_bipartite_matching(a, b, thr);
    let perm = m
        .into_iter()
        .map(|p| p.expect("feasible at optimal threshold"))
        .collect();
    Ok((d, perm))
}

fn bottleneck_value(a: &[C64], b: &[C64]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let mut dists: Vec<f64> = Vec::with_capacity(n * n);
    for &x in a {
        for &y in b {
            dists.push((x - y).norm());
        }
    }
    dists.sort_by(f64::total_cmp);
    dists.dedup();
    // smallest threshold admitting a perfect matching
    let feasible = |t: f64| -> bool {
        max_bipartite_matching(a, b, t)
            .iter()
            .all(|m| m.is_some())
    };
    let mut lo = 0usize;
    let mut hi = dists.len() - 1; // full threshold always feasible
    if feasible(dists[lo]) {
        return dists[lo];
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if feasible(dists[mid]) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    dists[hi]
}

/// Kuhn's augmenting-path matching on the graph of pairs with
/// |a_i - b_j| <= threshold. Returns, per left node, the matched right node.
fn max_bipartite_matching(a: &[C64], b: &[C64], threshold: f64) -> Vec<Option<usize>> {
    let n = a.len();
    let mut adj = vec![Vec::new(); n];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            if (x - y).norm() <= threshold {
                adj[i].push(j);
            }
        }
    }
    let mut match_right: Vec<Option<usize>> = vec![None; n];
    fn try_augment(
        i: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        match_right: &mut [Option<usize>],
    ) -> bool {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                if match_right[j].is_none()
                    || try_augment(match_right[j].unwrap(), adj, seen, match_right)
                {
                    match_right[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    for i in 0..n {
        let mut seen = vec![false; n];
        try_augment(i, &adj, &mut seen, &mut match_right);
    }
    let mut match_left: Vec<Option<usize>> = vec![None; n];
    for (j, m) in match_right.iter().enumerate() {
        if let Some(i) = *m {
            match_left[i] = Some(j);
        }
    }
    match_left
}

/// Hausdorff distance between two nonempty point sets (sizes may differ).
pub fn hausdorff_distance(a: &ShiftSet, b: &ShiftSet) -> Result<f64> {
    let av = a.values();
    let bv = b.values();
    if av.is_empty() || bv.is_empty() {
        return Err(Error::EmptySet);
    }
    let one_sided = |xs: &[C64], ys: &[C64]| -> f64 {
        xs.iter()
            .map(|x| {
                ys.iter()
                    .map(|y| (x - y).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    Ok(one_sided(&av, &bv).max(one_sided(&bv, &av)))
}

/// Minimum-cost sum assignment (Hungarian algorithm with potentials).
///
/// `cost` is row-major n x n; returns `perm[i] = j` minimizing the total cost.
pub fn min_sum_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    if n == 0 {
        return Vec::new();
    }
    // standard O(n^3) shortest augmenting path formulation, 1-based buffers
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j]: row matched to column j (0 = none)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    perm
}

/// Scan a shift history for a periodic orbit.
///
/// Returns the smallest period p in [2, max_period] for which the last
/// max(3, p) comparable steps satisfy d(s_k, s_{k-p}) < tol * max|s_k|,
/// together with the worst relative residual over those comparisons. A history
/// that is simply converging (period 1 within tolerance) reports nothing;
/// stationarity is the stopping test's job.
pub fn detect_cycle(
    history: &[ShiftSet],
    max_period: usize,
    tol: f64,
) -> Option<(usize, f64)> {
    let n = history.len();
    if n < 2 {
        return None;
    }
    let rel_dist = |a: &ShiftSet, b: &ShiftSet| -> Option<f64> {
        let scale = a.max_modulus();
        if scale == 0.0 {
            return Some(0.0);
        }
        matching_distance(a, b).ok().map(|d| d / scale)
    };
    // period-1 stationarity is convergence, not a cycle
    let window1 = 3.min(n - 1);
    let stationary = (0..window1).all(|s| {
        let k = n - 1 - s;
        rel_dist(&history[k], &history[k - 1]).is_some_and(|d| d < tol)
    });
    if stationary {
        return None;
    }
    for p in 2..=max_period {
        let window = 3.max(p);
        if n < p + window {
            continue;
        }
        let mut worst = 0.0f64;
        let mut ok = true;
        for s in 0..window {
            let k = n - 1 - s;
            match rel_dist(&history[k], &history[k - p]) {
                Some(d) if d < tol => worst = worst.max(d),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Some((p, worst));
        }
    }
    None
}

impl Serialize for ShiftSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.values().iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ShiftSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(deserializer)?;
        let vals: Vec<C64> = pairs.iter().map(|p| C64::new(p[0], p[1])).collect();
        ShiftSet::pair_values(&vals).map_err(|e| D::Error::custom(e.to_string()))
    }
}
