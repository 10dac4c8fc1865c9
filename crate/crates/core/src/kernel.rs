//! Exact linear-algebra and simplex predicates over rational points.
//!
//! Points are dense rational coordinate vectors. Everything here is
//! dimension-generic but only exercised for d in 1..=3.

use crate::error::{GeomError, Result};
use crate::num::Rat;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;

pub type Point = Vec<Rat>;

pub fn lex_cmp(a: &[Rat], b: &[Rat]) -> Ordering {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        match x.cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

pub fn add(a: &[Rat], b: &[Rat]) -> Point {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[Rat], b: &[Rat]) -> Point {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[Rat], s: &Rat) -> Point {
    a.iter().map(|x| x * s).collect()
}

pub fn dot(a: &[Rat], b: &[Rat]) -> Rat {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[Rat]) -> Rat {
    dot(a, a)
}

pub fn dist_sq(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            &d * &d
        })
        .sum()
}

/// Arithmetic mean of a nonempty point list.
pub fn centroid(points: &[&[Rat]]) -> Point {
    assert!(!points.is_empty());
    let d = points[0].len();
    let n = Rat::from_integer(points.len().into());
    (0..d)
        .map(|i| points.iter().map(|p| &p[i]).sum::<Rat>() / &n)
        .collect()
}

/// Solves the square system `A x = b` by exact Gaussian elimination.
/// Returns `None` when `A` is singular.
pub fn solve_square(a: &[Vec<Rat>], b: &[Rat]) -> Option<Vec<Rat>> {
    let n = a.len();
    debug_assert!(a.iter().all(|row| row.len() == n));
    debug_assert_eq!(b.len(), n);
    let mut m: Vec<Vec<Rat>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        let inv = m[col][col].clone().recip();
        for c in col..=n {
            m[col][c] = &m[col][c] * &inv;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..=n {
                    m[r][c] = &m[r][c] - &f * &m[col][c];
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n].clone()).collect())
}

/// Exact determinant by Gaussian elimination with row swaps.
pub fn det(a: &[Vec<Rat>]) -> Rat {
    let n = a.len();
    let mut m: Vec<Vec<Rat>> = a.to_vec();
    let mut result = Rat::one();
    for col in 0..n {
        let pivot = match (col..n).find(|&r| !m[r][col].is_zero()) {
            Some(p) => p,
            None => return Rat::zero(),
        };
        if pivot != col {
            m.swap(col, pivot);
            result = -result;
        }
        result *= &m[col][col];
        let inv = m[col][col].clone().recip();
        for r in col + 1..n {
            if !m[r][col].is_zero() {
                let f = &m[r][col] * &inv;
                for c in col..n {
                    m[r][c] = &m[r][c] - &f * &m[col][c];
                }
            }
        }
    }
    result
}

/// Rank of a rectangular rational matrix.
pub fn rank(a: &[Vec<Rat>]) -> usize {
    if a.is_empty() {
        return 0;
    }
    let rows = a.len();
    let cols = a[0].len();
    let mut m = a.to_vec();
    let mut r = 0;
    for col in 0..cols {
        if r == rows {
            break;
        }
        let pivot = match (r..rows).find(|&i| !m[i][col].is_zero()) {
            Some(p) => p,
            None => continue,
        };
        m.swap(r, pivot);
        let inv = m[r][col].clone().recip();
        for i in r + 1..rows {
            if !m[i][col].is_zero() {
                let f = &m[i][col] * &inv;
                for c in col..cols {
                    m[i][c] = &m[i][c] - &f * &m[r][c];
                }
            }
        }
        r += 1;
    }
    r
}

/// Gram matrix of difference vectors `p_i - p_0`, `i = 1..k`.
pub fn gram(points: &[&[Rat]]) -> Vec<Vec<Rat>> {
    let base = points[0];
    let es: Vec<Point> = points[1..].iter().map(|p| sub(p, base)).collect();
    es.iter()
        .map(|a| es.iter().map(|b| dot(a, b)).collect())
        .collect()
}

/// True when the points are affinely independent.
pub fn affinely_independent(points: &[&[Rat]]) -> bool {
    if points.len() <= 1 {
        return true;
    }
    let base = points[0];
    let es: Vec<Point> = points[1..].iter().map(|p| sub(p, base)).collect();
    rank(&es) == points.len() - 1
}

/// Orthogonal projection of `x` onto the affine hull of `points`
/// (which must be affinely independent). Returns the foot point and the
/// squared distance from `x` to the hull.
pub fn project_affine(x: &[Rat], points: &[&[Rat]]) -> Result<(Point, Rat)> {
    let base = points[0];
    if points.len() == 1 {
        return Ok((base.to_vec(), dist_sq(x, base)));
    }
    let es: Vec<Point> = points[1..].iter().map(|p| sub(p, base)).collect();
    let g = gram(points);
    let xb = sub(x, base);
    let c: Vec<Rat> = es.iter().map(|e| dot(e, &xb)).collect();
    let y = solve_square(&g, &c).ok_or(GeomError::DegenerateSimplex)?;
    let mut foot = base.to_vec();
    for (yi, e) in y.iter().zip(&es) {
        for (f, ei) in foot.iter_mut().zip(e) {
            *f = &*f + yi * ei;
        }
    }
    let d2 = dist_sq(x, &foot);
    Ok((foot, d2))
}

/// Squared distance from vertex `i` of a simplex to the affine hull of the
/// remaining vertices.
pub fn altitude_sq(points: &[&[Rat]], i: usize) -> Result<Rat> {
    let others: Vec<&[Rat]> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, p)| *p)
        .collect();
    Ok(project_affine(points[i], &others)?.1)
}

/// Circumcenter (within the affine hull) and squared circumradius of an
/// affinely independent point tuple.
pub fn circumsphere(points: &[&[Rat]]) -> Result<(Point, Rat)> {
    let base = points[0];
    if points.len() == 1 {
        return Ok((base.to_vec(), Rat::zero()));
    }
    let es: Vec<Point> = points[1..].iter().map(|p| sub(p, base)).collect();
    let g = gram(points);
    let half = Rat::new(1.into(), 2.into());
    let c: Vec<Rat> = es.iter().map(|e| &half * norm_sq(e)).collect();
    let y = solve_square(&g, &c).ok_or(GeomError::DegenerateSimplex)?;
    let mut z = base.to_vec();
    for (yi, e) in y.iter().zip(&es) {
        for (zc, ei) in z.iter_mut().zip(e) {
            *zc = &*zc + yi * ei;
        }
    }
    let r2 = dist_sq(&z, base);
    Ok((z, r2))
}

/// The smallest common orthosphere of weighted points: the center `z` lies in
/// their affine hull and every point has equal power `d(z, p_i)^2 - w_i`.
/// Returns `(z, u)` with `u` that common power.
pub fn orthosphere(points: &[&[Rat]], weights: &[Rat]) -> Result<(Point, Rat)> {
    debug_assert_eq!(points.len(), weights.len());
    let base = points[0];
    if points.len() == 1 {
        return Ok((base.to_vec(), -weights[0].clone()));
    }
    let es: Vec<Point> = points[1..].iter().map(|p| sub(p, base)).collect();
    let g = gram(points);
    let half = Rat::new(1.into(), 2.into());
    let c: Vec<Rat> = es
        .iter()
        .zip(&weights[1..])
        .map(|(e, w)| &half * (norm_sq(e) - w + &weights[0]))
        .collect();
    let y = solve_square(&g, &c).ok_or(GeomError::DegenerateSimplex)?;
    let mut z = base.to_vec();
    for (yi, e) in y.iter().zip(&es) {
        for (zc, ei) in z.iter_mut().zip(e) {
            *zc = &*zc + yi * ei;
        }
    }
    let u = dist_sq(&z, base) - &weights[0];
    Ok((z, u))
}

/// Signed volume of a full-dimensional simplex (`d+1` points in `R^d`)
/// is `det / d!`; this returns the absolute volume.
pub fn simplex_volume(points: &[&[Rat]]) -> Rat {
    let d = points[0].len();
    assert_eq!(points.len(), d + 1, "full-dimensional simplex expected");
    let base = points[0];
    let m: Vec<Vec<Rat>> = points[1..].iter().map(|p| sub(p, base)).collect();
    let mut v = det(&m).abs();
    for k in 2..=d {
        v /= Rat::from_integer(k.into());
    }
    v
}

/// Squared `k`-volume of a `k`-simplex given as `k+1` points, via the Gram
/// determinant: `vol^2 = det(G) / (k!)^2`.
pub fn simplex_volume_sq(points: &[&[Rat]]) -> Rat {
    let k = points.len() - 1;
    if k == 0 {
        return Rat::one();
    }
    let g = gram(points);
    let mut v = det(&g);
    for j in 2..=k {
        let f = Rat::from_integer(j.into());
        v /= &f * &f;
    }
    v
}

/// Barycentric coordinates of `x` with respect to an affinely independent
/// tuple spanning `x`'s affine hull. Errors if `x` is not in the hull.
pub fn barycentric(x: &[Rat], points: &[&[Rat]]) -> Result<Vec<Rat>> {
    let (foot, d2) = project_affine(x, points)?;
    if !d2.is_zero() {
        return Err(GeomError::TriangulationViolation(
            "barycentric coordinates of a point outside the affine hull".into(),
        ));
    }
    let base = points[0];
    if points.len() == 1 {
        return Ok(vec![Rat::one()]);
    }
    let es: Vec<Point> = points[1..].iter().map(|p| sub(p, base)).collect();
    let g = gram(points);
    let xb = sub(&foot, base);
    let c: Vec<Rat> = es.iter().map(|e| dot(e, &xb)).collect();
    let y = solve_square(&g, &c).ok_or(GeomError::DegenerateSimplex)?;
    let mut coords = Vec::with_capacity(points.len());
    let rest: Rat = y.iter().sum();
    coords.push(Rat::one() - rest);
    coords.extend(y);
    Ok(coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{rat, rint};
    use proptest::prelude::*;

    fn pt(coords: &[i64]) -> Point {
        coords.iter().map(|&c| rint(c)).collect()
    }

    #[test]
    fn solve_and_det_basics() {
        let a = vec![vec![rint(2), rint(1)], vec![rint(1), rint(3)]];
        let b = vec![rint(5), rint(10)];
        let x = solve_square(&a, &b).unwrap();
        assert_eq!(x, vec![rint(1), rint(3)]);
        assert_eq!(det(&a), rint(5));
        let sing = vec![vec![rint(1), rint(2)], vec![rint(2), rint(4)]];
        assert!(solve_square(&sing, &b).is_none());
        assert_eq!(det(&sing), rint(0));
        assert_eq!(rank(&sing), 1);
    }

    #[test]
    fn unit_simplex_volume() {
        let p0 = pt(&[0, 0]);
        let p1 = pt(&[1, 0]);
        let p2 = pt(&[0, 1]);
        let pts: Vec<&[Rat]> = vec![&p0, &p1, &p2];
        assert_eq!(simplex_volume(&pts), rat(1, 2));
        assert_eq!(simplex_volume_sq(&pts), rat(1, 4));
        let q0 = pt(&[0, 0, 0]);
        let q1 = pt(&[1, 0, 0]);
        let q2 = pt(&[0, 1, 0]);
        let q3 = pt(&[0, 0, 1]);
        let qs: Vec<&[Rat]> = vec![&q0, &q1, &q2, &q3];
        assert_eq!(simplex_volume(&qs), rat(1, 6));
        assert_eq!(simplex_volume_sq(&qs), rat(1, 36));
    }

    #[test]
    fn circumsphere_of_right_triangle() {
        let p0 = pt(&[0, 0]);
        let p1 = pt(&[2, 0]);
        let p2 = pt(&[0, 2]);
        let pts: Vec<&[Rat]> = vec![&p0, &p1, &p2];
        let (z, r2) = circumsphere(&pts).unwrap();
        assert_eq!(z, pt(&[1, 1]));
        assert_eq!(r2, rint(2));
    }

    #[test]
    fn orthosphere_reduces_to_circumsphere_at_zero_weight() {
        let p0 = pt(&[0, 0]);
        let p1 = pt(&[3, 1]);
        let p2 = pt(&[1, 4]);
        let pts: Vec<&[Rat]> = vec![&p0, &p1, &p2];
        let w = vec![rint(0); 3];
        let (z, u) = orthosphere(&pts, &w).unwrap();
        let (c, r2) = circumsphere(&pts).unwrap();
        assert_eq!(z, c);
        assert_eq!(u, r2);
    }

    #[test]
    fn projection_onto_segment() {
        let a = pt(&[0, 0]);
        let b = pt(&[4, 0]);
        let hull: Vec<&[Rat]> = vec![&a, &b];
        let x = pt(&[1, 3]);
        let (foot, d2) = project_affine(&x, &hull).unwrap();
        assert_eq!(foot, pt(&[1, 0]));
        assert_eq!(d2, rint(9));
    }

    #[test]
    fn barycentric_of_centroid() {
        let p0 = pt(&[0, 0]);
        let p1 = pt(&[3, 0]);
        let p2 = pt(&[0, 3]);
        let pts: Vec<&[Rat]> = vec![&p0, &p1, &p2];
        let c = centroid(&pts);
        let bc = barycentric(&c, &pts).unwrap();
        assert_eq!(bc, vec![rat(1, 3), rat(1, 3), rat(1, 3)]);
    }

    fn small_rat() -> impl Strategy<Value = Rat> {
        (-12i64..=12, 1i64..=4).prop_map(|(n, d)| rat(n, d))
    }

    fn point_nd(d: usize) -> impl Strategy<Value = Point> {
        prop::collection::vec(small_rat(), d)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn circumsphere_is_equidistant(d in 2usize..=3, seeds in prop::collection::vec(prop::collection::vec(-12i64..=12, 3), 4)) {
            let pts: Vec<Point> = seeds.iter().take(d + 1).map(|c| c[..d].iter().map(|&v| rint(v)).collect()).collect();
            let refs: Vec<&[Rat]> = pts.iter().map(|p| p.as_slice()).collect();
            prop_assume!(affinely_independent(&refs));
            let (z, r2) = circumsphere(&refs).unwrap();
            for p in &refs {
                prop_assert_eq!(dist_sq(&z, p), r2.clone());
            }
        }

        #[test]
        fn orthosphere_has_equal_power(d in 2usize..=3,
                                       seeds in prop::collection::vec(prop::collection::vec(-12i64..=12, 3), 4),
                                       ws in prop::collection::vec(0i64..=5, 4)) {
            let pts: Vec<Point> = seeds.iter().take(d + 1).map(|c| c[..d].iter().map(|&v| rint(v)).collect()).collect();
            let refs: Vec<&[Rat]> = pts.iter().map(|p| p.as_slice()).collect();
            prop_assume!(affinely_independent(&refs));
            let weights: Vec<Rat> = ws.iter().take(d + 1).map(|&w| rat(w, 7)).collect();
            let (z, u) = orthosphere(&refs, &weights).unwrap();
            for (p, w) in refs.iter().zip(&weights) {
                prop_assert_eq!(dist_sq(&z, p) - w, u.clone());
            }
        }

        #[test]
        fn projection_foot_is_orthogonal(x in point_nd(3), seeds in prop::collection::vec(prop::collection::vec(-12i64..=12, 3), 3)) {
            let pts: Vec<Point> = seeds.iter().map(|c| c.iter().map(|&v| rint(v)).collect()).collect();
            let refs: Vec<&[Rat]> = pts.iter().map(|p| p.as_slice()).collect();
            prop_assume!(affinely_independent(&refs));
            let (foot, d2) = project_affine(&x, &refs).unwrap();
            prop_assert_eq!(dist_sq(&x, &foot), d2.clone());
            let xf = sub(&x, &foot);
            for w in refs.windows(2) {
                let e = sub(w[1], w[0]);
                prop_assert!(dot(&xf, &e).is_zero());
            }
            // The foot minimizes distance among hull members.
            let probe = add(&foot, &sub(refs[1], refs[0]));
            prop_assert!(dist_sq(&x, &probe) >= d2);
        }

        #[test]
        fn gram_volume_matches_determinant_volume(seeds in prop::collection::vec(prop::collection::vec(-9i64..=9, 3), 4)) {
            let pts: Vec<Point> = seeds.iter().map(|c| c.iter().map(|&v| rint(v)).collect()).collect();
            let refs: Vec<&[Rat]> = pts.iter().map(|p| p.as_slice()).collect();
            prop_assume!(affinely_independent(&refs));
            let v = simplex_volume(&refs);
            prop_assert_eq!(simplex_volume_sq(&refs), &v * &v);
        }
    }
}
