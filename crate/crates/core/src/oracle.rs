//! Independent cross-checks for the main pipeline, written against different
//! formulations on purpose: determinant predicates instead of solved centers,
//! exhaustive subset scans instead of grid-pruned enumeration, pairwise
//! matching instead of keyed grouping. Agreement between two routes is the
//! evidence; a mismatch comes back as [`GeomError::OracleDisagreement`] with
//! a minimal reproduction in the message.
//!
//! Everything here targets desk-sized instances. The brute-force enumerators
//! are quadratic to cubic in the point count and are only meant for the
//! scales the comparison tests use.

use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;
use std::collections::HashMap;

use crate::af::{permutations, AfContext, TupleXi};
use crate::error::{GeomError, Result};
use crate::kernel::{self, Point};
use crate::num::{rat, rint, Rat};
use crate::pointset::PointSet;
use crate::sliver::forbidden_interval;
use crate::torus::LPoint;
use crate::triangulation::{Simplex, WeightFunction};

/// Exact determinant of a square matrix by fraction-free elimination on a
/// local copy. Small inputs only.
fn det(rows: &[Vec<Rat>]) -> Rat {
    kernel::det(rows)
}

/// Lifts a point to the paraboloid shifted by its weight: `(p, |p|^2 - w)`.
fn lift_height(p: &[Rat], w: &Rat) -> Rat {
    kernel::norm_sq(p) - w
}

/// Position of the lifted point `(q, |q|^2 - wq)` relative to the hyperplane
/// through the lifted vertices of a full-dimensional simplex.
///
/// `Less` means strictly below, which is equivalent to `q` having strictly
/// negative power against the simplex orthosphere; so `Less` witnesses a
/// non-empty orthosphere. Computed as a sign of a `(d+1) x (d+1)` determinant
/// times the base orientation, with no center ever solved for.
pub fn lifted_side(
    simplex: &[&[Rat]],
    weights: &[Rat],
    q: &[Rat],
    wq: &Rat,
) -> Result<Ordering> {
    let d = q.len();
    if simplex.len() != d + 1 || weights.len() != d + 1 {
        return Err(GeomError::Config(
            "lifted side test needs d+1 vertices and weights".into(),
        ));
    }
    let base = simplex[0];
    let h0 = lift_height(base, &weights[0]);
    let orient_rows: Vec<Vec<Rat>> = simplex[1..]
        .iter()
        .map(|p| kernel::sub(p, base))
        .collect();
    let orient = det(&orient_rows);
    if orient.is_zero() {
        return Err(GeomError::DegenerateSimplex);
    }
    let mut rows = Vec::with_capacity(d + 1);
    for (p, w) in simplex[1..].iter().zip(&weights[1..]) {
        let mut row = kernel::sub(p, base);
        row.push(lift_height(p, w) - &h0);
        rows.push(row);
    }
    let mut row = kernel::sub(q, base);
    row.push(lift_height(q, wq) - &h0);
    rows.push(row);
    // det = orient * (height of q above the interpolating affine map), and
    // that height equals the power of q against the orthosphere.
    let excess = det(&rows) * orient.signum();
    if excess.is_negative() {
        Ok(Ordering::Less)
    } else if excess.is_zero() {
        Ok(Ordering::Equal)
    } else {
        Ok(Ordering::Greater)
    }
}

/// Candidate co-vertices for brute enumeration: every lift of every point
/// within `cut_sq` of the anchor coordinates, as `(lift, coords)` pairs
/// ordered by distance from the anchor.
fn lifts_near(set: &PointSet, anchor: &Point, cut_sq: &Rat) -> Vec<(LPoint, Point)> {
    let dom = &set.domain;
    let mut out = Vec::new();
    for (id, b) in set.points.iter().enumerate() {
        for (shift, d2) in dom.lifts_within(anchor, b, cut_sq) {
            let lp = LPoint { id, shift };
            let coords = lp.coords(dom, &set.points);
            out.push((d2, lp, coords));
        }
    }
    out.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    out.into_iter().map(|(_, lp, c)| (lp, c)).collect()
}

/// Exhaustive weighted Delaunay enumeration through the lifted-hull
/// predicate: a `d+1`-subset is accepted when no other lifted point lies
/// strictly below its lifted hyperplane. Weak emptiness, so cocircular
/// configurations contribute every simplex of their cell, matching the
/// convention of the main enumerator.
///
/// Needs a covering certificate; an empty orthosphere's radius is bounded by
/// the covering radius, which bounds how far co-vertices and witnesses can
/// sit from the anchor.
pub fn lifted_hull_simplices(set: &PointSet, weights: &[Rat]) -> Result<Vec<Simplex>> {
    let n = set.len();
    if weights.len() != n {
        return Err(GeomError::Config(format!(
            "weight vector has {} entries for {} points",
            weights.len(),
            n
        )));
    }
    let d = set.domain.dim;
    let cert = set.cert.as_ref().ok_or_else(|| {
        GeomError::Config("brute enumeration needs a covering certificate".into())
    })?;
    let w_max = weights.iter().max().cloned().unwrap_or_else(Rat::zero);
    // u <= cov^2, every vertex within sqrt(u + w_max) of the center, so
    // pairwise distances stay within 2 sqrt(cov^2 + w_max); witnesses that
    // could sit below a hyperplane are within the same bound of the center.
    let reach_sq = &cert.cov_sq_hi + &w_max;
    let pair_sq = rint(4) * &reach_sq;
    // Candidates around the anchor: vertices within 2r of it; witnesses
    // within 2r of the center, hence within 3r of the anchor.
    let witness_sq = rint(9) * &reach_sq;

    let mut found: Vec<Simplex> = Vec::new();
    for a in 0..n {
        let anchor_lp = LPoint::base(a, d);
        let anchor = set.points[a].clone();
        let near = lifts_near(set, &anchor, &witness_sq);
        let verts: Vec<&(LPoint, Point)> = near
            .iter()
            .filter(|(lp, c)| {
                *lp > anchor_lp
                    && lp.id >= a
                    && kernel::dist_sq(c, &anchor) <= pair_sq
            })
            .collect();
        let mut chosen: Vec<usize> = Vec::with_capacity(d);
        subsets_accept(
            set,
            weights,
            &anchor_lp,
            &anchor,
            &verts,
            &near,
            &pair_sq,
            0,
            &mut chosen,
            &mut found,
        )?;
    }
    found.sort();
    found.dedup();
    Ok(found)
}

#[allow(clippy::too_many_arguments)]
fn subsets_accept(
    set: &PointSet,
    weights: &[Rat],
    anchor_lp: &LPoint,
    anchor: &Point,
    verts: &[&(LPoint, Point)],
    near: &[(LPoint, Point)],
    pair_sq: &Rat,
    from: usize,
    chosen: &mut Vec<usize>,
    found: &mut Vec<Simplex>,
) -> Result<()> {
    let d = set.domain.dim;
    if chosen.len() == d {
        let mut coords: Vec<&[Rat]> = Vec::with_capacity(d + 1);
        let mut ws: Vec<Rat> = Vec::with_capacity(d + 1);
        let mut lps: Vec<LPoint> = Vec::with_capacity(d + 1);
        coords.push(anchor);
        ws.push(weights[anchor_lp.id].clone());
        lps.push(anchor_lp.clone());
        for &i in chosen.iter() {
            coords.push(&verts[i].1);
            ws.push(weights[verts[i].0.id].clone());
            lps.push(verts[i].0.clone());
        }
        let orient_rows: Vec<Vec<Rat>> = coords[1..]
            .iter()
            .map(|p| kernel::sub(p, coords[0]))
            .collect();
        if det(&orient_rows).is_zero() {
            return Ok(());
        }
        for (lp, c) in near {
            if lps.contains(lp) {
                continue;
            }
            if lifted_side(&coords, &ws, c, &weights[lp.id])? == Ordering::Less {
                return Ok(());
            }
        }
        found.push(Simplex::new(lps));
        return Ok(());
    }
    for i in from..verts.len() {
        if verts.len() - i < d - chosen.len() {
            break;
        }
        let ok = chosen
            .iter()
            .all(|&j| kernel::dist_sq(&verts[j].1, &verts[i].1) <= *pair_sq);
        if !ok {
            continue;
        }
        chosen.push(i);
        subsets_accept(
            set, weights, anchor_lp, anchor, verts, near, pair_sq, i + 1, chosen,
            found,
        )?;
        chosen.pop();
    }
    Ok(())
}

/// Classical circumsphere Delaunay by direct means: for each candidate
/// `d+1`-subset, the circumcenter is solved from the chord bisector system
/// `2 (p_j - p_0) . z = |p_j|^2 - |p_0|^2` and emptiness is an exact distance
/// comparison against every nearby lift. Zero weights only.
pub fn brute_delaunay(set: &PointSet) -> Result<Vec<Simplex>> {
    let n = set.len();
    let d = set.domain.dim;
    let cert = set.cert.as_ref().ok_or_else(|| {
        GeomError::Config("brute enumeration needs a covering certificate".into())
    })?;
    let pair_sq = rint(4) * &cert.cov_sq_hi;
    let witness_sq = rint(9) * &cert.cov_sq_hi;

    let mut found: Vec<Simplex> = Vec::new();
    for a in 0..n {
        let anchor_lp = LPoint::base(a, d);
        let anchor = set.points[a].clone();
        let near = lifts_near(set, &anchor, &witness_sq);
        let verts: Vec<&(LPoint, Point)> = near
            .iter()
            .filter(|(lp, c)| {
                *lp > anchor_lp
                    && lp.id >= a
                    && kernel::dist_sq(c, &anchor) <= pair_sq
            })
            .collect();
        let mut stack: Vec<usize> = Vec::with_capacity(d);
        circum_subsets(
            set, &anchor_lp, &anchor, &verts, &near, &pair_sq, &cert.cov_sq_hi, 0,
            &mut stack, &mut found,
        )?;
    }
    found.sort();
    found.dedup();
    Ok(found)
}

#[allow(clippy::too_many_arguments)]
fn circum_subsets(
    set: &PointSet,
    anchor_lp: &LPoint,
    anchor: &Point,
    verts: &[&(LPoint, Point)],
    near: &[(LPoint, Point)],
    pair_sq: &Rat,
    u_max: &Rat,
    from: usize,
    chosen: &mut Vec<usize>,
    found: &mut Vec<Simplex>,
) -> Result<()> {
    let d = set.domain.dim;
    if chosen.len() == d {
        let mut coords: Vec<&[Rat]> = Vec::with_capacity(d + 1);
        let mut lps: Vec<LPoint> = Vec::with_capacity(d + 1);
        coords.push(anchor);
        lps.push(anchor_lp.clone());
        for &i in chosen.iter() {
            coords.push(&verts[i].1);
            lps.push(verts[i].0.clone());
        }
        let rows: Vec<Vec<Rat>> = coords[1..]
            .iter()
            .map(|p| kernel::scale(&kernel::sub(p, coords[0]), &rint(2)))
            .collect();
        let rhs: Vec<Rat> = coords[1..]
            .iter()
            .map(|p| kernel::norm_sq(p) - kernel::norm_sq(coords[0]))
            .collect();
        let z = match kernel::solve_square(&rows, &rhs) {
            Some(z) => z,
            None => return Ok(()),
        };
        let r_sq = kernel::dist_sq(&z, coords[0]);
        if r_sq > *u_max {
            return Ok(());
        }
        for (lp, c) in near {
            if lps.contains(lp) {
                continue;
            }
            if kernel::dist_sq(&z, c) < r_sq {
                return Ok(());
            }
        }
        found.push(Simplex::new(lps));
        return Ok(());
    }
    for i in from..verts.len() {
        if verts.len() - i < d - chosen.len() {
            break;
        }
        let ok = chosen
            .iter()
            .all(|&j| kernel::dist_sq(&verts[j].1, &verts[i].1) <= *pair_sq);
        if !ok {
            continue;
        }
        chosen.push(i);
        circum_subsets(
            set, anchor_lp, anchor, verts, near, pair_sq, u_max, i + 1, chosen,
            found,
        )?;
        chosen.pop();
    }
    Ok(())
}

/// Set equality of two simplex lists, with a small disagreement sample in
/// the error message when they differ.
pub fn compare_simplices(check: &str, ours: &[Simplex], oracle: &[Simplex]) -> Result<()> {
    let mut a = ours.to_vec();
    let mut b = oracle.to_vec();
    a.sort();
    a.dedup();
    b.sort();
    b.dedup();
    if a == b {
        return Ok(());
    }
    let missing: Vec<&Simplex> = b.iter().filter(|s| !a.contains(s)).take(3).collect();
    let extra: Vec<&Simplex> = a.iter().filter(|s| !b.contains(s)).take(3).collect();
    Err(GeomError::OracleDisagreement {
        check: check.into(),
        detail: format!(
            "{} simplices vs {} from the oracle; oracle-only sample {:?}; main-only sample {:?}",
            a.len(),
            b.len(),
            missing,
            extra
        ),
    })
}

/// Membership of one vertex set in the weighted Delaunay complex, decided
/// purely by the lifted predicate: affinely independent and no lifted point
/// strictly below the lifted hyperplane.
pub fn in_del(set: &PointSet, weights: &[Rat], vertices: &[LPoint]) -> Result<bool> {
    let d = set.domain.dim;
    if vertices.len() != d + 1 {
        return Err(GeomError::Config(
            "membership test expects a full-dimensional vertex list".into(),
        ));
    }
    let cert = set.cert.as_ref().ok_or_else(|| {
        GeomError::Config("membership test needs a covering certificate".into())
    })?;
    let dom = &set.domain;
    let coords: Vec<Point> = vertices
        .iter()
        .map(|v| v.coords(dom, &set.points))
        .collect();
    let refs: Vec<&[Rat]> = coords.iter().map(|c| c.as_slice()).collect();
    let orient_rows: Vec<Vec<Rat>> = refs[1..]
        .iter()
        .map(|p| kernel::sub(p, refs[0]))
        .collect();
    if det(&orient_rows).is_zero() {
        return Ok(false);
    }
    let ws: Vec<Rat> = vertices.iter().map(|v| weights[v.id].clone()).collect();
    let w_max = weights.iter().max().cloned().unwrap_or_else(Rat::zero);
    let reach_sq = &cert.cov_sq_hi + &w_max;
    let witness_sq = rint(9) * &reach_sq;
    for (lp, c) in lifts_near(set, &coords[0], &witness_sq) {
        if vertices.contains(&lp) {
            continue;
        }
        if lifted_side(&refs, &ws, &c, &weights[lp.id])? == Ordering::Less {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Outcome of the forbidden-interval sweep.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub pairs: usize,
    pub samples_per_pair: usize,
    /// Samples where the face was present in the complex.
    pub appearances: usize,
    /// Present with a weight outside the forbidden interval: must be zero.
    pub violations: usize,
    /// Pairs whose interval length failed the closed form: must be zero.
    pub length_mismatches: usize,
}

/// Squared distance from `p` to the affine hull of `tau` through volume
/// ratios: `h = k Vol_k / Vol_{k-1}`, squared to stay rational. Independent
/// of the projection route used by the interval construction.
fn hull_dist_sq_by_volumes(p: &Point, tau: &[Point]) -> Result<Rat> {
    let k = tau.len();
    let mut all: Vec<&[Rat]> = tau.iter().map(|q| q.as_slice()).collect();
    let base_sq = kernel::simplex_volume_sq(&all);
    if base_sq.is_zero() {
        return Err(GeomError::DegenerateSimplex);
    }
    all.push(p);
    let full_sq = kernel::simplex_volume_sq(&all);
    Ok(rint((k * k) as i64) * full_sq / base_sq)
}

/// Sweeps weights for single points against the forbidden intervals of
/// nearby faces. For each sampled `(p, tau)` pair the interval is recomputed,
/// its squared length is checked against `64 M^2 d(p, H(tau))^2` with the
/// hull distance obtained by volume ratios, and `samples` weights from the
/// admissible range are classified: whenever `tau + p` sits in the complex,
/// the sampled weight must lie inside the interval.
pub fn sweep_forbidden(
    set: &PointSet,
    wf: &WeightFunction,
    pairs: usize,
    samples: usize,
    seed: u64,
) -> Result<SweepReport> {
    let d = set.domain.dim;
    let dom = &set.domain;
    let n = set.len();
    wf.check(n)?;
    let m = wf.scale.clone();
    let range_sq = rint(20) * &m * &m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_hi = wf.max_weight();

    let mut report = SweepReport {
        pairs: 0,
        samples_per_pair: samples,
        appearances: 0,
        violations: 0,
        length_mismatches: 0,
    };

    let mut attempts = 0usize;
    while report.pairs < pairs && attempts < pairs * 40 {
        attempts += 1;
        let p_id = rng.gen_range(0..n);
        let p = &set.points[p_id];
        // Faces are d-subsets of lifts strictly within 2 sqrt(5) M of p,
        // excluding p's own lifts to keep the face weights independent of
        // the swept weight.
        let mut near: Vec<LPoint> = Vec::new();
        for (id, b) in set.points.iter().enumerate() {
            for (shift, d2) in dom.lifts_within(p, b, &range_sq) {
                if id == p_id || d2 >= range_sq {
                    continue;
                }
                near.push(LPoint { id, shift });
            }
        }
        if near.len() < d {
            continue;
        }
        let mut tau_lps: Vec<LPoint> = Vec::with_capacity(d);
        let mut pool = near.clone();
        for _ in 0..d {
            let i = rng.gen_range(0..pool.len());
            tau_lps.push(pool.swap_remove(i));
        }
        let tau: Vec<Point> = tau_lps
            .iter()
            .map(|v| v.coords(dom, &set.points))
            .collect();
        let lambda: Vec<Rat> = tau_lps.iter().map(|v| wf.weights[v.id].clone()).collect();
        let interval = match forbidden_interval(p, &tau, &lambda, &m) {
            Ok(iv) => iv,
            Err(GeomError::DegenerateSimplex) => continue,
            Err(e) => return Err(e),
        };
        report.pairs += 1;

        let alt_sq = hull_dist_sq_by_volumes(p, &tau)?;
        // Full length is 8 M d(p, H); compare (2 half)^2 against 64 M^2 h^2.
        if rint(4) * &interval.half_len_sq != rint(64) * &m * &m * &alt_sq {
            report.length_mismatches += 1;
        }

        let mut face: Vec<LPoint> = tau_lps.clone();
        face.push(LPoint::base(p_id, d));
        let mut weights = wf.weights.clone();
        for _ in 0..samples {
            let k = rng.gen_range(0..=(1u64 << 16));
            let wp = rat(k as i64, 1i64 << 16) * &w_hi;
            weights[p_id] = wp.clone();
            if in_del(set, &weights, &face)? {
                report.appearances += 1;
                if !interval.contains(&wp) {
                    report.violations += 1;
                }
            }
        }
    }
    if report.pairs < pairs {
        return Err(GeomError::Config(format!(
            "sweep found only {} usable pairs out of {} requested",
            report.pairs, pairs
        )));
    }
    Ok(report)
}

/// Residual check for solved orthospheres on random rational simplices:
/// every vertex must have exactly zero power. Returns the number of
/// simplices checked.
pub fn orthosphere_residuals(dim: usize, count: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0usize;
    while done < count {
        let pts: Vec<Point> = (0..=dim)
            .map(|_| {
                (0..dim)
                    .map(|_| rat(rng.gen_range(-(1 << 12)..=1 << 12), 1 << 8))
                    .collect()
            })
            .collect();
        let refs: Vec<&[Rat]> = pts.iter().map(|p| p.as_slice()).collect();
        if !kernel::affinely_independent(&refs) {
            continue;
        }
        let ws: Vec<Rat> = (0..=dim)
            .map(|_| rat(rng.gen_range(0..=1 << 10), 1 << 10))
            .collect();
        let (z, u) = kernel::orthosphere(&refs, &ws)?;
        for (p, w) in refs.iter().zip(&ws) {
            let res = kernel::dist_sq(&z, p) - &u - w;
            if !res.is_zero() {
                return Err(GeomError::OracleDisagreement {
                    check: "orthosphere residual".into(),
                    detail: format!("nonzero residual {} at {:?}", res, p),
                });
            }
        }
        done += 1;
    }
    Ok(done)
}

/// Face consistency of solved orthospheres: for a face with at least two
/// vertices inside a larger simplex, the face orthocenter is the orthogonal
/// projection of the big center onto the face hull and the powers differ by
/// exactly the squared projection distance. Returns the number of face
/// pairs checked.
pub fn orthosphere_face_pairs(dim: usize, count: usize, seed: u64) -> Result<usize> {
    if dim < 2 {
        return Ok(0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0usize;
    while done < count {
        let pts: Vec<Point> = (0..=dim)
            .map(|_| {
                (0..dim)
                    .map(|_| rat(rng.gen_range(-(1 << 12)..=1 << 12), 1 << 8))
                    .collect()
            })
            .collect();
        let refs: Vec<&[Rat]> = pts.iter().map(|p| p.as_slice()).collect();
        if !kernel::affinely_independent(&refs) {
            continue;
        }
        let ws: Vec<Rat> = (0..=dim)
            .map(|_| rat(rng.gen_range(0..=1 << 10), 1 << 10))
            .collect();
        let (z_big, u_big) = kernel::orthosphere(&refs, &ws)?;
        let face_len = rng.gen_range(2..=dim);
        let mut idx: Vec<usize> = (0..=dim).collect();
        for _ in 0..(dim + 1 - face_len) {
            let i = rng.gen_range(0..idx.len());
            idx.swap_remove(i);
        }
        let face_refs: Vec<&[Rat]> = idx.iter().map(|&i| refs[i]).collect();
        let face_ws: Vec<Rat> = idx.iter().map(|&i| ws[i].clone()).collect();
        let (z_face, u_face) = kernel::orthosphere(&face_refs, &face_ws)?;
        let (foot, alt_sq) = kernel::project_affine(&z_big, &face_refs)?;
        if foot != z_face {
            return Err(GeomError::OracleDisagreement {
                check: "face orthocenter projection".into(),
                detail: format!("projection {:?} vs face center {:?}", foot, z_face),
            });
        }
        if &u_big - &u_face != alt_sq {
            return Err(GeomError::OracleDisagreement {
                check: "face power difference".into(),
                detail: format!(
                    "u' - u = {} but squared center distance is {}",
                    &u_big - &u_face,
                    alt_sq
                ),
            });
        }
        done += 1;
    }
    Ok(done)
}

/// Dense-grid lower bound on the covering radius: the largest over grid
/// points of the exact squared distance to the set. Must never exceed the
/// set's certified covering bound.
pub fn covering_grid_lower(set: &PointSet, res: u32) -> Result<Rat> {
    if res == 0 {
        return Err(GeomError::Config("grid resolution must be positive".into()));
    }
    let dom = &set.domain;
    let d = dom.dim;
    let step = &dom.period / rint(res as i64);
    let mut worst = Rat::zero();
    let mut idx = vec![0u32; d];
    loop {
        let x: Point = idx.iter().map(|&i| rint(i as i64) * &step).collect();
        let best = set
            .points
            .iter()
            .map(|p| dom.dist_sq(&x, p))
            .min()
            .expect("nonempty set");
        if best > worst {
            worst = best;
        }
        let mut axis = d;
        loop {
            if axis == 0 {
                return finish_grid(set, worst);
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < res {
                break;
            }
            idx[axis] = 0;
        }
        if idx.iter().all(|&i| i == 0) {
            return finish_grid(set, worst);
        }
    }
}

fn finish_grid(set: &PointSet, worst: Rat) -> Result<Rat> {
    if let Some(cert) = set.cert.as_ref() {
        if worst > cert.cov_sq_hi {
            return Err(GeomError::OracleDisagreement {
                check: "grid covering".into(),
                detail: format!(
                    "grid point at squared distance {} exceeds certified bound {}",
                    worst, cert.cov_sq_hi
                ),
            });
        }
    }
    Ok(worst)
}

/// Independent reconstruction of the chain relation by pairwise matching:
/// two members are related at a level when some permutation of the leading
/// `n` chain entries makes the chains equal up to one common period shift.
/// The resulting union-find partition must coincide with the keyed classes,
/// level by level. Returns the per-level class counts.
pub fn chain_relation_pairwise(af: &AfContext, n: usize) -> Result<Vec<usize>> {
    let rel = af.relation_r(n)?;
    let members = &rel.members;
    let perms = permutations(n);
    let mut counts = Vec::new();
    for lp in &rel.levels {
        let chains: Vec<TupleXi> = members
            .iter()
            .map(|&p| af.j_chain(&af.theta(p)?, n, lp.level))
            .collect::<Result<_>>()?;
        // Orbit of each chain under leading-slot permutations, in the
        // canonical translation frame.
        let orbits: Vec<Vec<TupleXi>> = chains
            .iter()
            .map(|c| {
                let mut o: Vec<TupleXi> = perms
                    .iter()
                    .map(|s| {
                        let mut e = c.entries.clone();
                        let lead: Vec<_> = s.iter().map(|&i| e[i].clone()).collect();
                        e[..n].clone_from_slice(&lead);
                        TupleXi {
                            level: c.level,
                            entries: e,
                        }
                        .canonical()
                        .0
                    })
                    .collect();
                o.sort_by(|a, b| a.entries.cmp(&b.entries));
                o.dedup_by(|a, b| a.entries == b.entries);
                o
            })
            .collect();

        let mut parent: Vec<usize> = (0..members.len()).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            let mut r = i;
            while parent[r] != r {
                r = parent[r];
            }
            let mut c = i;
            while parent[c] != r {
                let nx = parent[c];
                parent[c] = r;
                c = nx;
            }
            r
        }
        for i in 0..members.len() {
            for j in (i + 1)..members.len() {
                let hit = orbits[i]
                    .iter()
                    .any(|a| orbits[j].iter().any(|b| a.entries == b.entries));
                if hit {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[rj] = ri;
                    }
                }
            }
        }
        let mut classes: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..members.len() {
            let r = find(&mut parent, i);
            classes.entry(r).or_default().push(members[i]);
        }
        let mut rebuilt: Vec<Vec<usize>> = classes.into_values().collect();
        for c in &mut rebuilt {
            c.sort_unstable();
        }
        rebuilt.sort_by_key(|c| c[0]);
        let mut keyed = lp.classes.clone();
        for c in &mut keyed {
            c.sort_unstable();
        }
        keyed.sort_by_key(|c| c[0]);
        if rebuilt != keyed {
            return Err(GeomError::OracleDisagreement {
                check: "chain relation".into(),
                detail: format!(
                    "level {}: pairwise matching yields {} classes, keyed grouping {}",
                    lp.level,
                    rebuilt.len(),
                    keyed.len()
                ),
            });
        }
        counts.push(rebuilt.len());
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{build_hierarchy, unit_circle_set, RefineConfig};
    use crate::pointset::PointSet;
    use crate::torus::TorusDomain;
    use crate::triangulation::{del_simplices, del_simplices_covering};

    fn small_set(dim: usize, cells: i64, seed: u64) -> PointSet {
        let domain = TorusDomain::new(dim, rint(6 * cells)).expect("domain");
        let jitter = if dim >= 3 { rat(3, 8) } else { rat(5, 4) };
        PointSet::perturbed_lattice(domain, &rint(6), &jitter, 10, seed).expect("set")
    }

    #[test]
    fn lifted_side_matches_power_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..60 {
            let d = rng.gen_range(1..=3usize);
            let pts: Vec<Point> = (0..=d)
                .map(|_| {
                    (0..d)
                        .map(|_| rat(rng.gen_range(-64..=64), 8))
                        .collect()
                })
                .collect();
            let refs: Vec<&[Rat]> = pts.iter().map(|p| p.as_slice()).collect();
            if !kernel::affinely_independent(&refs) {
                continue;
            }
            let ws: Vec<Rat> = (0..=d).map(|_| rat(rng.gen_range(0..=16), 64)).collect();
            let q: Point = (0..d).map(|_| rat(rng.gen_range(-64..=64), 8)).collect();
            let wq = rat(rng.gen_range(0..=16), 64);
            let (z, u) = kernel::orthosphere(&refs, &ws).expect("orthosphere");
            let power = kernel::dist_sq(&z, &q) - &u - &wq;
            let side = lifted_side(&refs, &ws, &q, &wq).expect("side");
            let expected = if power.is_negative() {
                Ordering::Less
            } else if power.is_zero() {
                Ordering::Equal
            } else {
                Ordering::Greater
            };
            assert_eq!(side, expected);
        }
    }

    #[test]
    fn brute_agrees_with_main_enumerator_zero_weight() {
        for seed in [1u64, 2, 3] {
            let set = small_set(2, 4, seed);
            let weights = vec![Rat::zero(); set.len()];
            let ours = del_simplices_covering(&set, &weights).expect("main");
            let circ = brute_delaunay(&set).expect("circum oracle");
            let hull = lifted_hull_simplices(&set, &weights).expect("hull oracle");
            compare_simplices("circumsphere", &ours, &circ).expect("circum agreement");
            compare_simplices("lifted hull", &ours, &hull).expect("hull agreement");
            assert!(!ours.is_empty());
        }
    }

    #[test]
    fn brute_agrees_on_weighted_instance() {
        // Scale chosen so the certificate establishes M-separation and
        // 2M-syndeticity for the jittered pitch-6 lattice: separation is at
        // least 3.5, covering at most sqrt(36.125), and 20 M^2 < (L/4)^2
        // holds at L = 60.
        let set = small_set(2, 10, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = rat(13, 4);
        let hi = &(&m / rint(3)) * &(&m / rint(3));
        let wf = WeightFunction {
            weights: (0..set.len())
                .map(|_| rat(rng.gen_range(0..=16), 16) * &hi)
                .collect(),
            scale: m.clone(),
        };
        let ours = del_simplices(&set, &wf).expect("main");
        let hull = lifted_hull_simplices(&set, &wf.weights).expect("hull oracle");
        compare_simplices("weighted hull", &ours, &hull).expect("agreement");
        assert!(!ours.is_empty());
    }

    #[test]
    fn brute_agrees_in_dimension_three() {
        let set = small_set(3, 3, 2);
        let weights = vec![Rat::zero(); set.len()];
        let ours = del_simplices_covering(&set, &weights).expect("main");
        let circ = brute_delaunay(&set).expect("circum oracle");
        compare_simplices("circumsphere d3", &ours, &circ).expect("agreement");
        assert!(!ours.is_empty());
    }

    #[test]
    fn membership_test_matches_enumeration() {
        let set = small_set(2, 3, 4);
        let weights = vec![Rat::zero(); set.len()];
        let all = lifted_hull_simplices(&set, &weights).expect("oracle");
        for s in all.iter().take(5) {
            assert!(in_del(&set, &weights, &s.vertices).expect("member"));
        }
        let absent = Simplex::new(vec![
            LPoint::base(0, 2),
            LPoint {
                id: 1,
                shift: vec![0, 0],
            },
            LPoint {
                id: 2,
                shift: vec![0, 0],
            },
        ]);
        if !all.contains(&absent) {
            assert!(!in_del(&set, &weights, &absent.vertices).expect("non-member"));
        }
    }

    #[test]
    fn residual_and_face_checks_pass() {
        for d in 1..=3 {
            assert_eq!(orthosphere_residuals(d, 40, 7).expect("residuals"), 40);
        }
        for d in 2..=3 {
            assert_eq!(orthosphere_face_pairs(d, 25, 13).expect("faces"), 25);
        }
    }

    #[test]
    fn grid_covering_respects_certificate() {
        let set = small_set(2, 4, 21);
        let lower = covering_grid_lower(&set, 24).expect("grid");
        assert!(lower <= set.cert.as_ref().expect("cert").cov_sq_hi);
        assert!(lower.is_positive());
    }

    #[test]
    fn pairwise_relation_matches_keyed_classes_small() {
        let base = unit_circle_set(2048).expect("set");
        let cfg = RefineConfig {
            base_m: rint(2),
            counting_factor: rat(2, 15),
            ..RefineConfig::desk(1).expect("profile")
        };
        let h = build_hierarchy(&base, 1, &cfg).expect("hierarchy");
        let af = AfContext::new(&h).expect("af");
        let counts = chain_relation_pairwise(&af, 2).expect("pairwise");
        assert_eq!(counts.len(), h.levels.len());
    }

    #[test]
    fn thin_face_interval_is_narrow_and_escapable() {
        // A vertex hovering just off the circumcircle plane of a triangle is
        // the d = 3 sliver geometry. Its forbidden interval must be exactly
        // 8 M d(p, H) long, so a nearly flat vertex forbids only a thin
        // weight slice and the grid scan escapes it inside the budget.
        use crate::sliver::IntervalSet;
        let tau: Vec<Point> = vec![
            vec![rint(0), rint(0), rint(0)],
            vec![rint(1), rint(0), rint(0)],
            vec![rint(0), rint(1), rint(0)],
        ];
        let h = rat(1, 40);
        let p: Point = vec![rint(1), rint(1), h.clone()];
        let m = rint(1);
        let lambda = vec![Rat::zero(); 3];
        let iv = forbidden_interval(&p, &tau, &lambda, &m).expect("interval");
        assert_eq!(rint(4) * &iv.half_len_sq, rint(64) * &h * &h);
        // The foot (1,1,0) lies on the circumcircle of tau, so the interval
        // starts essentially at zero weight and swallows most of the small
        // weights, but not the whole admissible range.
        assert!(iv.contains(&Rat::zero()));
        let budget = rat(1, 9);
        let set = IntervalSet {
            intervals: vec![iv.clone()],
        };
        let free = set
            .min_free_on_grid(&budget, 8, 2)
            .expect("escape weight exists");
        assert!(free.is_positive() && free <= budget);
        assert!(!iv.contains(&free));
    }
}
