//! Flat cubical torus `[0, L)^d` with exact periodic metric and lift
//! enumeration.
//!
//! A "lift" of a stored point is one of its periodic translates `p + k L`
//! for an integer shift vector `k`. All distance work happens on lifts;
//! stored points are kept canonical (each coordinate in `[0, L)`).

use crate::error::{GeomError, Result};
use crate::kernel::Point;
use crate::num::{rat_ceil, rat_floor, sqrt_upper, Rat};
use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use std::collections::{HashMap, HashSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorusDomain {
    pub dim: usize,
    pub period: Rat,
}

impl TorusDomain {
    pub fn new(dim: usize, period: Rat) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(GeomError::UnsupportedDimension(dim));
        }
        if !period.is_positive() {
            return Err(GeomError::Config("torus period must be positive".into()));
        }
        Ok(TorusDomain { dim, period })
    }

    /// Checks the standing scale invariant `20 M^2 < (L/4)^2` that keeps
    /// every simplex diameter under half the period.
    pub fn check_scale(&self, m: &Rat) -> Result<()> {
        let l4 = &self.period / Rat::from_integer(4.into());
        if Rat::from_integer(20.into()) * m * m < &l4 * &l4 {
            Ok(())
        } else {
            Err(GeomError::ScaleTooLargeForTorus {
                m: m.to_string(),
                l: self.period.to_string(),
            })
        }
    }

    /// Reduces every coordinate into `[0, L)`.
    pub fn canonical(&self, p: &[Rat]) -> Point {
        p.iter()
            .map(|c| {
                let k = rat_floor(&(c / &self.period));
                c - Rat::from_integer(k) * &self.period
            })
            .collect()
    }

    /// Translate `p` by `shift * L`.
    pub fn lift(&self, p: &[Rat], shift: &[i64]) -> Point {
        p.iter()
            .zip(shift)
            .map(|(c, &k)| c + Rat::from_integer(BigInt::from(k)) * &self.period)
            .collect()
    }

    /// Squared periodic distance: per-axis minimum over lifts.
    pub fn dist_sq(&self, a: &[Rat], b: &[Rat]) -> Rat {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = (x - y).abs();
                let wrapped = &self.period - &d;
                let m = if wrapped < d { wrapped } else { d };
                &m * &m
            })
            .sum()
    }

    /// The shift `k` minimizing `|b + kL - a|`, ties broken toward the
    /// smaller shift, together with the squared distance of that lift.
    pub fn min_lift_shift(&self, a: &[Rat], b: &[Rat]) -> (Vec<i64>, Rat) {
        let mut shift = Vec::with_capacity(self.dim);
        let mut d2 = Rat::zero();
        for (x, y) in a.iter().zip(b) {
            // Candidate shifts floor((x-y)/L) and that plus one.
            let base = rat_floor(&((x - y) / &self.period));
            let k0 = base.to_i64().expect("shift fits i64");
            let mut best_k = k0;
            let mut best = (y + Rat::from_integer(BigInt::from(k0)) * &self.period - x).abs();
            let c1 = (y + Rat::from_integer(BigInt::from(k0 + 1)) * &self.period - x).abs();
            if c1 < best {
                best = c1;
                best_k = k0 + 1;
            }
            shift.push(best_k);
            d2 += &best * &best;
        }
        (shift, d2)
    }

    /// All shifts `k` with `|b + kL - x|^2 <= r_sq`, each with its exact
    /// squared distance, in lexicographic shift order.
    pub fn lifts_within(&self, x: &[Rat], b: &[Rat], r_sq: &Rat) -> Vec<(Vec<i64>, Rat)> {
        let mut out = Vec::new();
        if r_sq.is_negative() {
            return out;
        }
        let r = sqrt_upper(r_sq, 32);
        let mut shift = vec![0i64; self.dim];
        self.lifts_rec(x, b, r_sq, &r, 0, &mut shift, &Rat::zero(), &mut out);
        out
    }

    fn lifts_rec(
        &self,
        x: &[Rat],
        b: &[Rat],
        r_sq: &Rat,
        r: &Rat,
        axis: usize,
        shift: &mut Vec<i64>,
        acc: &Rat,
        out: &mut Vec<(Vec<i64>, Rat)>,
    ) {
        if axis == self.dim {
            if acc <= r_sq {
                out.push((shift.clone(), acc.clone()));
            }
            return;
        }
        let lo = rat_ceil(&((&x[axis] - r - &b[axis]) / &self.period))
            .to_i64()
            .expect("shift fits i64");
        let hi = rat_floor(&((&x[axis] + r - &b[axis]) / &self.period))
            .to_i64()
            .expect("shift fits i64");
        for k in lo..=hi {
            let c = &b[axis] + Rat::from_integer(BigInt::from(k)) * &self.period - &x[axis];
            let next = acc + &c * &c;
            if &next <= r_sq {
                shift[axis] = k;
                self.lifts_rec(x, b, r_sq, r, axis + 1, shift, &next, out);
            }
        }
        shift[axis] = 0;
    }
}

/// A lifted point: index into a point list plus an integer period shift.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LPoint {
    pub id: usize,
    pub shift: Vec<i64>,
}

impl LPoint {
    pub fn base(id: usize, dim: usize) -> Self {
        LPoint {
            id,
            shift: vec![0; dim],
        }
    }

    pub fn coords(&self, domain: &TorusDomain, points: &[Point]) -> Point {
        domain.lift(&points[self.id], &self.shift)
    }
}

/// Sorts a vertex list by `(id, shift)` and translates so the first vertex
/// has shift zero. Two lifted vertex sets that differ by a whole-period
/// translation map to the same canonical form. Repeated ids (distinct lifts
/// of one point) are allowed.
pub fn canonical_vertices(mut vs: Vec<LPoint>) -> Vec<LPoint> {
    vs.sort();
    let base = vs[0].shift.clone();
    for v in &mut vs {
        for (s, b) in v.shift.iter_mut().zip(&base) {
            *s -= b;
        }
    }
    vs
}

/// Uniform bucket grid over the fundamental domain for coarse neighbor
/// candidate queries. Exactness is preserved because callers re-filter with
/// exact distances; the grid only has to be conservative.
pub struct BucketGrid {
    cells_per_axis: i64,
    cell: Rat,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
    dim: usize,
}

impl BucketGrid {
    /// `target_cell` is an advisory cell edge; the actual edge divides `L`.
    pub fn build(domain: &TorusDomain, points: &[Point], target_cell: &Rat) -> Self {
        assert!(target_cell.is_positive());
        let m = rat_floor(&(&domain.period / target_cell))
            .to_i64()
            .unwrap_or(1)
            .max(1);
        let cell = &domain.period / Rat::from_integer(BigInt::from(m));
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            let key: Vec<i64> = p
                .iter()
                .map(|c| {
                    rat_floor(&(c / &cell))
                        .to_i64()
                        .expect("bucket index fits i64")
                        .clamp(0, m - 1)
                })
                .collect();
            buckets.entry(key).or_default().push(i);
        }
        BucketGrid {
            cells_per_axis: m,
            cell,
            buckets,
            dim: domain.dim,
        }
    }

    /// Edge length of one bucket.
    pub fn cell_edge(&self) -> &Rat {
        &self.cell
    }

    /// Ids of points possibly within `radius` of `x` (superset, sorted).
    pub fn near(&self, x: &[Rat], radius: &Rat) -> Vec<usize> {
        let mut ranges = Vec::with_capacity(self.dim);
        for c in x.iter() {
            let lo = rat_floor(&(&(c - radius) / &self.cell))
                .to_i64()
                .expect("bucket range fits i64");
            let hi = rat_floor(&(&(c + radius) / &self.cell))
                .to_i64()
                .expect("bucket range fits i64");
            let span = if hi - lo + 1 >= self.cells_per_axis {
                (0, self.cells_per_axis - 1)
            } else {
                (lo, hi)
            };
            ranges.push(span);
        }
        let mut seen: HashSet<usize> = HashSet::new();
        let mut key = vec![0i64; self.dim];
        self.collect(&ranges, 0, &mut key, &mut seen);
        let mut out: Vec<usize> = seen.into_iter().collect();
        out.sort_unstable();
        out
    }

    fn collect(
        &self,
        ranges: &[(i64, i64)],
        axis: usize,
        key: &mut Vec<i64>,
        seen: &mut HashSet<usize>,
    ) {
        if axis == self.dim {
            if let Some(ids) = self.buckets.get(key) {
                seen.extend(ids.iter().copied());
            }
            return;
        }
        for j in ranges[axis].0..=ranges[axis].1 {
            key[axis] = j.rem_euclid(self.cells_per_axis);
            self.collect(ranges, axis + 1, key, seen);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{rat, rint};

    fn dom(d: usize, l: i64) -> TorusDomain {
        TorusDomain::new(d, rint(l)).unwrap()
    }

    #[test]
    fn canonical_reduces_into_period() {
        let t = dom(2, 10);
        let p = vec![rat(-3, 2), rint(17)];
        assert_eq!(t.canonical(&p), vec![rat(17, 2), rint(7)]);
    }

    #[test]
    fn periodic_distance_wraps() {
        let t = dom(2, 10);
        let a = vec![rint(1), rint(1)];
        let b = vec![rint(9), rint(1)];
        assert_eq!(t.dist_sq(&a, &b), rint(4));
        let (shift, d2) = t.min_lift_shift(&a, &b);
        assert_eq!(shift, vec![-1, 0]);
        assert_eq!(d2, rint(4));
    }

    #[test]
    fn lifts_within_finds_all_wraps() {
        let t = dom(1, 10);
        let x = vec![rint(0)];
        let b = vec![rint(3)];
        // Lifts of 3 within distance 7 of 0: -7 and 3.
        let hits = t.lifts_within(&x, &b, &rint(49));
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0], (vec![-1], rint(49)));
        assert_eq!(hits[1], (vec![0], rint(9)));
    }

    #[test]
    fn scale_invariant_boundary() {
        let t = dom(2, 40);
        // 20 M^2 < 100 needs M^2 < 5.
        assert!(t.check_scale(&rint(2)).is_ok());
        assert!(t.check_scale(&rint(3)).is_err());
    }

    #[test]
    fn canonical_vertices_anchor_min_id() {
        let vs = vec![
            LPoint {
                id: 7,
                shift: vec![1, 0],
            },
            LPoint {
                id: 2,
                shift: vec![1, -1],
            },
            LPoint {
                id: 4,
                shift: vec![0, 0],
            },
        ];
        let c = canonical_vertices(vs);
        assert_eq!(c[0], LPoint { id: 2, shift: vec![0, 0] });
        assert_eq!(c[1], LPoint { id: 4, shift: vec![-1, 1] });
        assert_eq!(c[2], LPoint { id: 7, shift: vec![0, 1] });
    }

    #[test]
    fn bucket_grid_near_is_superset() {
        let t = dom(2, 12);
        let pts: Vec<Point> = (0..12)
            .flat_map(|i| (0..12).map(move |j| vec![rint(i), rint(j)]))
            .collect();
        let grid = BucketGrid::build(&t, &pts, &rint(2));
        let x = vec![rat(1, 2), rat(23, 2)];
        let r = rint(2);
        let cand = grid.near(&x, &r);
        for (i, p) in pts.iter().enumerate() {
            if t.dist_sq(&x, p) <= &r * &r {
                assert!(cand.contains(&i), "missing candidate {i}");
            }
        }
    }
}
