//! Exact convex polytope toolkit for ambient dimension at most 3.
//!
//! Polytopes are handled as finite generating point sets (V-form) with
//! facet enumeration on demand (H-form). Everything is exact; the only
//! irrational quantities (lower-dimensional surface measures) are returned
//! as certified rational intervals.

use crate::error::{GeomError, Result};
use crate::kernel::{self, Point};
use crate::num::{Rat, RatInterval};
use num_traits::{Signed, Zero};
use std::collections::HashMap;

/// Half-space `<normal, x> <= offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: Point,
    pub offset: Rat,
}

impl HalfSpace {
    pub fn eval(&self, x: &[Rat]) -> Rat {
        kernel::dot(&self.normal, x) - &self.offset
    }

    /// Scales so the first nonzero normal entry has absolute value one,
    /// preserving orientation. Used for deduplication.
    fn normalized(&self) -> HalfSpace {
        let s = self
            .normal
            .iter()
            .find(|c| !c.is_zero())
            .expect("zero normal")
            .abs();
        HalfSpace {
            normal: self.normal.iter().map(|c| c / &s).collect(),
            offset: &self.offset / &s,
        }
    }
}

/// Facet system of a full-dimensional polytope: the half-spaces plus, for
/// each, the indices of generating points lying on its hyperplane.
#[derive(Debug, Clone)]
pub struct FacetSystem {
    pub halves: Vec<HalfSpace>,
    pub on_facet: Vec<Vec<usize>>,
}

impl FacetSystem {
    pub fn contains(&self, x: &[Rat]) -> bool {
        self.halves.iter().all(|h| !h.eval(x).is_positive())
    }

    pub fn strictly_contains(&self, x: &[Rat]) -> bool {
        self.halves.iter().all(|h| h.eval(x).is_negative())
    }
}

/// Affine frame mapping local coordinates to ambient ones.
#[derive(Debug, Clone)]
pub struct LocalFrame {
    pub base: Point,
    pub basis: Vec<Point>,
}

impl LocalFrame {
    pub fn to_ambient(&self, local: &[Rat]) -> Point {
        let mut out = self.base.clone();
        for (l, e) in local.iter().zip(&self.basis) {
            for (o, c) in out.iter_mut().zip(e) {
                *o = &*o + l * c;
            }
        }
        out
    }
}

/// Exact affine rank of a point set (dimension of its affine hull).
pub fn affine_rank(pts: &[Point]) -> usize {
    if pts.len() <= 1 {
        return 0;
    }
    let edges: Vec<Point> = pts[1..].iter().map(|p| kernel::sub(p, &pts[0])).collect();
    kernel::rank(&edges)
}

/// Exact affine coordinates of every point in a greedily chosen independent
/// edge basis. The local coordinates are affine, not isometric; use them
/// for combinatorics, never for measure.
pub fn local_coords(pts: &[Point]) -> (Vec<Point>, LocalFrame) {
    let base = pts[0].clone();
    let mut basis: Vec<Point> = Vec::new();
    for p in &pts[1..] {
        let e = kernel::sub(p, &base);
        let mut trial = basis.clone();
        trial.push(e.clone());
        if kernel::rank(&trial) == trial.len() {
            basis.push(e);
        }
    }
    if basis.is_empty() {
        return (
            vec![vec![]; pts.len()],
            LocalFrame { base, basis },
        );
    }
    let g: Vec<Vec<Rat>> = basis
        .iter()
        .map(|a| basis.iter().map(|b| kernel::dot(a, b)).collect())
        .collect();
    let locals = pts
        .iter()
        .map(|p| {
            let pb = kernel::sub(p, &base);
            let c: Vec<Rat> = basis.iter().map(|e| kernel::dot(e, &pb)).collect();
            kernel::solve_square(&g, &c).expect("independent basis")
        })
        .collect();
    (locals, LocalFrame { base, basis })
}

fn normal_through(sub: &[&Point]) -> Option<Point> {
    // Normal of the hyperplane through k affinely independent points in R^k.
    match sub.len() {
        1 => {
            debug_assert_eq!(sub[0].len(), 1);
            Some(vec![Rat::from_integer(1.into())])
        }
        2 => {
            let e = kernel::sub(sub[1], sub[0]);
            if e.iter().all(|c| c.is_zero()) {
                return None;
            }
            Some(vec![-e[1].clone(), e[0].clone()])
        }
        3 => {
            let a = kernel::sub(sub[1], sub[0]);
            let b = kernel::sub(sub[2], sub[0]);
            let n = vec![
                &a[1] * &b[2] - &a[2] * &b[1],
                &a[2] * &b[0] - &a[0] * &b[2],
                &a[0] * &b[1] - &a[1] * &b[0],
            ];
            if n.iter().all(|c| c.is_zero()) {
                return None;
            }
            Some(n)
        }
        _ => unreachable!("ambient dimension at most 3"),
    }
}

/// Facet enumeration of a full-dimensional polytope in `R^k`, `k <= 3`,
/// by brute force over `k`-subsets of the generators.
pub fn facets_fulldim(pts: &[Point]) -> Result<FacetSystem> {
    let k = pts[0].len();
    if !(1..=3).contains(&k) {
        return Err(GeomError::UnsupportedDimension(k));
    }
    if affine_rank(pts) != k {
        return Err(GeomError::DegenerateSimplex);
    }
    let n = pts.len();
    let mut chosen: HashMap<String, (HalfSpace, Vec<usize>)> = HashMap::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let sub: Vec<&Point> = idx.iter().map(|&i| &pts[i]).collect();
        if let Some(normal) = normal_through(&sub) {
            let offset = kernel::dot(&normal, sub[0]);
            let mut pos = false;
            let mut neg = false;
            for p in pts {
                match (kernel::dot(&normal, p) - &offset).cmp(&Rat::zero()) {
                    std::cmp::Ordering::Greater => pos = true,
                    std::cmp::Ordering::Less => neg = true,
                    std::cmp::Ordering::Equal => {}
                }
            }
            if !(pos && neg) && (pos || neg) {
                let h = if pos {
                    HalfSpace {
                        normal: normal.iter().map(|c| -c).collect(),
                        offset: -offset,
                    }
                } else {
                    HalfSpace { normal, offset }
                };
                let h = h.normalized();
                let key = format!(
                    "{}|{}",
                    h.normal
                        .iter()
                        .map(|c| c.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                    h.offset
                );
                chosen.entry(key).or_insert_with(|| {
                    let on: Vec<usize> = (0..n).filter(|&i| h.eval(&pts[i]).is_zero()).collect();
                    (h.clone(), on)
                });
            }
        }
        // Next k-combination.
        let mut i = k;
        loop {
            if i == 0 {
                let mut keys: Vec<&String> = chosen.keys().collect();
                keys.sort();
                let mut halves = Vec::new();
                let mut on_facet = Vec::new();
                for key in keys {
                    let (h, on) = &chosen[key];
                    halves.push(h.clone());
                    on_facet.push(on.clone());
                }
                return Ok(FacetSystem { halves, on_facet });
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] <= n - (k - i) {
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Membership of `x` in the convex hull of `pts` (any dimension), by
/// Caratheodory enumeration of containing simplices.
pub fn in_convex_hull(x: &[Rat], pts: &[Point]) -> bool {
    if pts.is_empty() {
        return false;
    }
    let k = affine_rank(pts);
    // Quick reject: x must lie in the affine hull.
    let refs: Vec<&[Rat]> = pts.iter().map(|p| p.as_slice()).collect();
    let mut span: Vec<&[Rat]> = vec![refs[0]];
    for r in &refs[1..] {
        let mut trial: Vec<Point> = span[1..].iter().map(|p| kernel::sub(p, span[0])).collect();
        trial.push(kernel::sub(r, span[0]));
        if kernel::rank(&trial) == trial.len() {
            span.push(r);
        }
    }
    match kernel::project_affine(x, &span) {
        Ok((_, d2)) => {
            if !d2.is_zero() {
                return false;
            }
        }
        Err(_) => return false,
    }
    // Try simplices of full rank containing x.
    subsets_of_size(pts.len(), k + 1, &mut |ids| {
        let sub: Vec<&[Rat]> = ids.iter().map(|&i| pts[i].as_slice()).collect();
        if !kernel::affinely_independent(&sub) {
            return false;
        }
        match kernel::barycentric(x, &sub) {
            Ok(bc) => bc.iter().all(|c| !c.is_negative()),
            Err(_) => false,
        }
    })
}

/// Calls `f` on each size-`k` index subset until `f` returns true.
/// Returns whether any call succeeded.
fn subsets_of_size(n: usize, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    if k > n {
        return false;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if f(&idx) {
            return true;
        }
        let mut i = k;
        loop {
            if i == 0 {
                return false;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] <= n - (k - i) {
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Indices of the extreme points (vertices) of `conv(pts)`.
pub fn extreme_points(pts: &[Point]) -> Vec<usize> {
    (0..pts.len())
        .filter(|&i| {
            let others: Vec<Point> = pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, p)| p.clone())
                .collect();
            !in_convex_hull(&pts[i], &others)
        })
        .collect()
}

/// Bottom-vertex triangulation. Returns simplices as sorted global index
/// lists into `pts`; each simplex has `affine_rank(pts) + 1` vertices. The
/// recursion cones the lexicographically smallest vertex over the facets
/// avoiding it.
pub fn bvt(pts: &[Point]) -> Vec<Vec<usize>> {
    let ext = extreme_points(pts);
    let ids: Vec<usize> = ext;
    bvt_rec(pts, &ids)
}

fn bvt_rec(pts: &[Point], ids: &[usize]) -> Vec<Vec<usize>> {
    let sub: Vec<Point> = ids.iter().map(|&i| pts[i].clone()).collect();
    let k = affine_rank(&sub);
    if k == 0 {
        return vec![vec![ids[0]]];
    }
    let m_pos = (0..ids.len())
        .min_by(|&a, &b| kernel::lex_cmp(&pts[ids[a]], &pts[ids[b]]))
        .unwrap();
    let m_id = ids[m_pos];
    let (locals, _) = local_coords(&sub);
    let trimmed: Vec<Point> = locals.iter().map(|l| l[..k].to_vec()).collect();
    let fs = facets_fulldim(&trimmed).expect("rank-consistent facet enumeration");
    let mut out = Vec::new();
    for on in &fs.on_facet {
        if on.contains(&m_pos) {
            continue;
        }
        let facet_ids: Vec<usize> = on.iter().map(|&j| ids[j]).collect();
        for mut simplex in bvt_rec(pts, &facet_ids) {
            simplex.push(m_id);
            simplex.sort_unstable();
            out.push(simplex);
        }
    }
    out.sort();
    out
}

/// Exact volume of a full-dimensional polytope in `R^k`, `k <= 3`.
pub fn volume_fulldim(pts: &[Point]) -> Result<Rat> {
    let k = pts[0].len();
    if affine_rank(pts) != k {
        return Err(GeomError::DegenerateSimplex);
    }
    let mut total = Rat::zero();
    for simplex in bvt(pts) {
        let refs: Vec<&[Rat]> = simplex.iter().map(|&i| pts[i].as_slice()).collect();
        total += kernel::simplex_volume(&refs);
    }
    Ok(total)
}

/// Certified interval for the `k`-dimensional measure of a possibly
/// lower-dimensional polytope embedded in ambient space, via squared
/// simplex measures and interval square roots.
pub fn measure_interval(pts: &[Point], bits: u32) -> RatInterval {
    let mut total = RatInterval::exact(Rat::zero());
    for simplex in bvt(pts) {
        let refs: Vec<&[Rat]> = simplex.iter().map(|&i| pts[i].as_slice()).collect();
        let v2 = kernel::simplex_volume_sq(&refs);
        total = total.add(&RatInterval::sqrt_of(&v2, bits));
    }
    total
}

/// Exact squared distance from a point to a convex hull.
pub fn dist_sq_point_hull(x: &[Rat], pts: &[Point]) -> Rat {
    let k = affine_rank(pts);
    let mut best: Option<Rat> = None;
    for size in 1..=k + 1 {
        subsets_of_size(pts.len(), size, &mut |ids| {
            let sub: Vec<&[Rat]> = ids.iter().map(|&i| pts[i].as_slice()).collect();
            if !kernel::affinely_independent(&sub) {
                return false;
            }
            if let Ok((foot, d2)) = kernel::project_affine(x, &sub) {
                if best.as_ref().map_or(true, |b| &d2 < b) {
                    if let Ok(bc) = kernel::barycentric(&foot, &sub) {
                        if bc.iter().all(|c| !c.is_negative()) {
                            best = Some(d2);
                        }
                    }
                }
            }
            false
        });
    }
    best.expect("nonempty hull")
}

/// Exact squared distance between two convex hulls. Zero when they meet.
pub fn dist_sq_hull_hull(a: &[Point], b: &[Point]) -> Rat {
    // Vertex-in-hull fast paths (also cover containment).
    for p in a {
        if in_convex_hull(p, b) {
            return Rat::zero();
        }
    }
    for q in b {
        if in_convex_hull(q, a) {
            return Rat::zero();
        }
    }
    let ka = affine_rank(a);
    let kb = affine_rank(b);
    let mut best: Option<Rat> = None;
    // Stationary pairs over faces spanned by affinely independent subsets.
    // Singular systems are skipped: at an extreme minimizing pair the
    // stationary system on the minimal supporting faces is nonsingular.
    for sa in 1..=ka + 1 {
        subsets_of_size(a.len(), sa, &mut |ids_a| {
            let sub_a: Vec<&[Rat]> = ids_a.iter().map(|&i| a[i].as_slice()).collect();
            if !kernel::affinely_independent(&sub_a) {
                return false;
            }
            for sb in 1..=kb + 1 {
                subsets_of_size(b.len(), sb, &mut |ids_b| {
                    let sub_b: Vec<&[Rat]> = ids_b.iter().map(|&i| b[i].as_slice()).collect();
                    if !kernel::affinely_independent(&sub_b) {
                        return false;
                    }
                    if let Some(d2) = stationary_dist_sq(&sub_a, &sub_b) {
                        if best.as_ref().map_or(true, |bst| &d2 < bst) {
                            best = Some(d2);
                        }
                    }
                    false
                });
            }
            false
        });
    }
    best.expect("nonempty hulls")
}

/// Minimizes `|p - q|^2` for `p` in the affine hull of `sub_a`, `q` in the
/// affine hull of `sub_b`; returns the value when the minimizer is unique
/// and both feet land inside the respective convex hulls.
fn stationary_dist_sq(sub_a: &[&[Rat]], sub_b: &[&[Rat]]) -> Option<Rat> {
    let ea: Vec<Point> = sub_a[1..].iter().map(|p| kernel::sub(p, sub_a[0])).collect();
    let eb: Vec<Point> = sub_b[1..].iter().map(|p| kernel::sub(p, sub_b[0])).collect();
    let na = ea.len();
    let nb = eb.len();
    let dim = na + nb;
    let diff0 = kernel::sub(sub_b[0], sub_a[0]);
    if dim == 0 {
        let d2 = kernel::norm_sq(&diff0);
        return Some(d2);
    }
    // Minimize |a0 + Ea y - b0 - Eb z|^2; normal equations in (y, z).
    let mut m = vec![vec![Rat::zero(); dim]; dim];
    let mut rhs = vec![Rat::zero(); dim];
    for i in 0..na {
        for j in 0..na {
            m[i][j] = kernel::dot(&ea[i], &ea[j]);
        }
        for j in 0..nb {
            m[i][na + j] = -kernel::dot(&ea[i], &eb[j]);
        }
        rhs[i] = kernel::dot(&ea[i], &diff0);
    }
    for i in 0..nb {
        for j in 0..na {
            m[na + i][j] = -kernel::dot(&eb[i], &ea[j]);
        }
        for j in 0..nb {
            m[na + i][na + j] = kernel::dot(&eb[i], &eb[j]);
        }
        rhs[na + i] = -kernel::dot(&eb[i], &diff0);
    }
    let sol = kernel::solve_square(&m, &rhs)?;
    let mut p = sub_a[0].to_vec();
    for (c, e) in sol[..na].iter().zip(&ea) {
        for (pc, ec) in p.iter_mut().zip(e) {
            *pc = &*pc + c * ec;
        }
    }
    let mut q = sub_b[0].to_vec();
    for (c, e) in sol[na..].iter().zip(&eb) {
        for (qc, ec) in q.iter_mut().zip(e) {
            *qc = &*qc + c * ec;
        }
    }
    let inside = |foot: &Point, sub: &[&[Rat]]| -> bool {
        match kernel::barycentric(foot, sub) {
            Ok(bc) => bc.iter().all(|c| !c.is_negative()),
            Err(_) => false,
        }
    };
    if inside(&p, sub_a) && inside(&q, sub_b) {
        Some(kernel::dist_sq(&p, &q))
    } else {
        None
    }
}

/// Candidate-complete vertex enumeration of the intersection of half-space
/// systems: solves every `k`-subset of the combined constraints as
/// equalities and keeps solutions satisfying everything. Covers vertices of
/// lower-dimensional intersections too.
pub fn intersection_vertices(systems: &[&FacetSystem], dim: usize) -> Vec<Point> {
    let all: Vec<&HalfSpace> = systems.iter().flat_map(|s| s.halves.iter()).collect();
    let mut out: Vec<Point> = Vec::new();
    subsets_of_size(all.len(), dim, &mut |ids| {
        let a: Vec<Vec<Rat>> = ids.iter().map(|&i| all[i].normal.clone()).collect();
        let b: Vec<Rat> = ids.iter().map(|&i| all[i].offset.clone()).collect();
        if let Some(x) = kernel::solve_square(&a, &b) {
            if all.iter().all(|h| !h.eval(&x).is_positive()) && !out.contains(&x) {
                out.push(x);
            }
        }
        false
    });
    out.sort_by(|a, b| kernel::lex_cmp(a, b));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{rat, rint};

    fn pt(coords: &[i64]) -> Point {
        coords.iter().map(|&c| rint(c)).collect()
    }

    fn square() -> Vec<Point> {
        vec![pt(&[0, 0]), pt(&[1, 0]), pt(&[0, 1]), pt(&[1, 1])]
    }

    #[test]
    fn square_facets_and_volume() {
        let fs = facets_fulldim(&square()).unwrap();
        assert_eq!(fs.halves.len(), 4);
        assert!(fs.contains(&vec![rat(1, 2), rat(1, 2)]));
        assert!(!fs.contains(&vec![rat(3, 2), rat(1, 2)]));
        assert!(fs.contains(&pt(&[1, 0])));
        assert!(!fs.strictly_contains(&pt(&[1, 0])));
        assert_eq!(volume_fulldim(&square()).unwrap(), rint(1));
    }

    #[test]
    fn square_bvt_splits_along_bottom_vertex_diagonal() {
        let t = bvt(&square());
        assert_eq!(t, vec![vec![0, 1, 3], vec![0, 2, 3]]);
    }

    #[test]
    fn cube_and_octahedron_volumes() {
        let cube: Vec<Point> = (0..8)
            .map(|i| pt(&[i & 1, (i >> 1) & 1, (i >> 2) & 1]))
            .collect();
        assert_eq!(facets_fulldim(&cube).unwrap().halves.len(), 6);
        assert_eq!(volume_fulldim(&cube).unwrap(), rint(1));
        assert_eq!(bvt(&cube).len(), 6);
        let octa = vec![
            pt(&[1, 0, 0]),
            pt(&[-1, 0, 0]),
            pt(&[0, 1, 0]),
            pt(&[0, -1, 0]),
            pt(&[0, 0, 1]),
            pt(&[0, 0, -1]),
        ];
        assert_eq!(facets_fulldim(&octa).unwrap().halves.len(), 8);
        assert_eq!(volume_fulldim(&octa).unwrap(), rat(4, 3));
    }

    #[test]
    fn hull_membership_and_extremes() {
        let mut pts = square();
        pts.push(vec![rat(1, 2), rat(1, 2)]);
        assert_eq!(extreme_points(&pts), vec![0, 1, 2, 3]);
        assert!(in_convex_hull(&vec![rat(1, 3), rat(1, 3)], &pts));
        assert!(in_convex_hull(&pt(&[1, 1]), &pts));
        assert!(!in_convex_hull(&vec![rat(1, 2), rat(-1, 10)], &pts));
        // Lower-dimensional hull: a segment.
        let seg = vec![pt(&[0, 0]), pt(&[2, 2])];
        assert!(in_convex_hull(&pt(&[1, 1]), &seg));
        assert!(!in_convex_hull(&vec![rat(1, 1), rat(99, 100)], &seg));
    }

    #[test]
    fn point_hull_distance() {
        let sq = square();
        assert_eq!(dist_sq_point_hull(&vec![rat(1, 2), rat(1, 2)], &sq), rint(0));
        assert_eq!(dist_sq_point_hull(&pt(&[3, 0]), &sq), rint(4));
        assert_eq!(dist_sq_point_hull(&pt(&[2, 2]), &sq), rint(2));
        let seg = vec![pt(&[0, 0]), pt(&[4, 0])];
        assert_eq!(dist_sq_point_hull(&pt(&[1, 3]), &seg), rint(9));
        assert_eq!(dist_sq_point_hull(&pt(&[-2, 0]), &seg), rint(4));
    }

    #[test]
    fn hull_hull_distance() {
        let sq = square();
        let far: Vec<Point> = vec![pt(&[3, 0]), pt(&[4, 0]), pt(&[3, 1]), pt(&[4, 1])];
        assert_eq!(dist_sq_hull_hull(&sq, &far), rint(4));
        // Parallel faces: distance attained along a whole edge pair.
        let above: Vec<Point> = vec![pt(&[0, 3]), pt(&[1, 3]), pt(&[0, 4]), pt(&[1, 4])];
        assert_eq!(dist_sq_hull_hull(&sq, &above), rint(4));
        // Crossing segments meet.
        let s1 = vec![pt(&[0, 0]), pt(&[2, 2])];
        let s2 = vec![pt(&[0, 2]), pt(&[2, 0])];
        assert_eq!(dist_sq_hull_hull(&s1, &s2), rint(0));
        // Offset parallel diagonal segments: minimum from endpoint (2,2)
        // to the interior foot (7/2, 1/2) on the other line.
        let s3 = vec![pt(&[3, 0]), pt(&[5, 2])];
        assert_eq!(dist_sq_hull_hull(&s1, &s3), rat(9, 2));
        // Overlapping squares.
        let shifted: Vec<Point> =
            vec![pt(&[1, 0]), pt(&[2, 0]), pt(&[1, 1]), pt(&[2, 1])];
        assert_eq!(dist_sq_hull_hull(&sq, &shifted), rint(0));
    }

    #[test]
    fn intersection_vertices_of_touching_squares() {
        let sq = square();
        let shifted: Vec<Point> =
            vec![pt(&[1, 0]), pt(&[2, 0]), pt(&[1, 1]), pt(&[2, 1])];
        let fa = facets_fulldim(&sq).unwrap();
        let fb = facets_fulldim(&shifted).unwrap();
        let vs = intersection_vertices(&[&fa, &fb], 2);
        assert_eq!(vs, vec![pt(&[1, 0]), pt(&[1, 1])]);
    }

    #[test]
    fn measure_interval_of_diagonal() {
        let seg = vec![pt(&[0, 0]), pt(&[1, 1])];
        let m = measure_interval(&seg, 40);
        assert!(&m.lo * &m.lo <= rint(2));
        assert!(&m.hi * &m.hi >= rint(2));
        assert!(&m.hi - &m.lo < rat(1, 1_000_000));
        // Full-dimensional square has exact interval.
        let m2 = measure_interval(&square(), 16);
        assert_eq!(m2.lo, rint(1));
        assert_eq!(m2.hi, rint(1));
    }

    #[test]
    fn tetrahedron_point_distance() {
        let tet = vec![pt(&[0, 0, 0]), pt(&[2, 0, 0]), pt(&[0, 2, 0]), pt(&[0, 0, 2])];
        assert_eq!(dist_sq_point_hull(&pt(&[0, 0, 4]), &tet), rint(4));
        assert_eq!(
            dist_sq_point_hull(&vec![rat(1, 2), rat(1, 2), rat(1, 2)], &tet),
            rint(0)
        );
        // Nearest point on the slanted facet x+y+z=2 is (2/3, 2/3, 2/3).
        assert_eq!(dist_sq_point_hull(&pt(&[2, 2, 2]), &tet), rat(16, 3));
    }
}
