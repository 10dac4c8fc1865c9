//! Separated and syndetic point sets on a torus, with exact validators.
//!
//! A set is `M`-separated when distinct points keep squared distance at
//! least `M^2`, and `M`-syndetic when every point of the domain has a set
//! point within `M` (closed balls). Certificates carry a rational lower
//! bound on the squared separation and upper bound on the squared covering
//! radius; validators compute both quantities exactly on desk-scale inputs.

use crate::error::{GeomError, Result};
use crate::kernel::{self, Point};
use crate::num::{parse_rat, rat_to_string, sqrt_upper, Rat};
use crate::torus::{canonical_vertices, BucketGrid, LPoint, TorusDomain};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::{HashMap, HashSet};

/// Certified bounds: every distinct pair is at squared distance at least
/// `sep_sq_lo`, and every domain point has a set point within squared
/// distance `cov_sq_hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SetCert {
    pub sep_sq_lo: Rat,
    pub cov_sq_hi: Rat,
}

#[derive(Debug, Clone)]
pub struct PointSet {
    pub domain: TorusDomain,
    /// Canonical representatives, lexicographically sorted.
    pub points: Vec<Point>,
    pub cert: Option<SetCert>,
}

impl PointSet {
    pub fn from_points(domain: TorusDomain, raw: Vec<Point>) -> Result<Self> {
        if raw.is_empty() {
            return Err(GeomError::Config("empty point set".into()));
        }
        let mut points: Vec<Point> = Vec::with_capacity(raw.len());
        for p in &raw {
            if p.len() != domain.dim {
                return Err(GeomError::DimensionMismatch {
                    expected: domain.dim,
                    got: p.len(),
                });
            }
            points.push(domain.canonical(p));
        }
        points.sort_by(|a, b| kernel::lex_cmp(a, b));
        for w in points.windows(2) {
            if w[0] == w[1] {
                return Err(GeomError::NotSeparated("any".into(), 0, 0));
            }
        }
        Ok(PointSet {
            domain,
            points,
            cert: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integer lattice of the given pitch; `pitch` must divide the period.
    pub fn lattice(domain: TorusDomain, pitch: &Rat) -> Result<Self> {
        let per_axis = lattice_cells(&domain, pitch)?;
        let dim = domain.dim;
        let mut points = Vec::new();
        let mut idx = vec![0i64; dim];
        loop {
            points.push(idx.iter().map(|&i| Rat::from_integer(i.into()) * pitch).collect());
            let mut axis = dim;
            loop {
                if axis == 0 {
                    break;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < per_axis {
                    break;
                }
                idx[axis] = 0;
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
        let d = Rat::from_integer(dim.into());
        let half = pitch / Rat::from_integer(2.into());
        let cert = SetCert {
            sep_sq_lo: pitch * pitch,
            cov_sq_hi: &d * &half * &half,
        };
        let mut set = PointSet::from_points(domain, points)?;
        set.cert = Some(cert);
        Ok(set)
    }

    /// Lattice with independent per-coordinate jitter drawn uniformly from
    /// the dyadic grid of step `2^-denom_log2 * jitter` inside
    /// `[-jitter, jitter]`. Separation is re-validated exactly; covering
    /// carries the analytic bound `sqrt(d) * (pitch/2 + jitter)`.
    pub fn perturbed_lattice(
        domain: TorusDomain,
        pitch: &Rat,
        jitter: &Rat,
        denom_log2: u32,
        seed: u64,
    ) -> Result<Self> {
        if jitter.is_negative() {
            return Err(GeomError::Config("negative jitter".into()));
        }
        if !(jitter * Rat::from_integer(4.into()) < *pitch) {
            return Err(GeomError::Config(
                "jitter must stay below pitch/4 to keep the set separated".into(),
            ));
        }
        let per_axis = lattice_cells(&domain, pitch)?;
        let dim = domain.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = 1u64 << denom_log2;
        let scale = Rat::new(BigInt::one(), BigInt::from(steps));
        let mut points = Vec::new();
        let mut idx = vec![0i64; dim];
        loop {
            let p: Point = idx
                .iter()
                .map(|&i| {
                    let r = rng.gen_range(0..=steps);
                    let offset = jitter
                        * &scale
                        * Rat::from_integer(BigInt::from(2 * r as i128 - steps as i128));
                    Rat::from_integer(i.into()) * pitch + offset
                })
                .collect();
            points.push(p);
            let mut axis = dim;
            loop {
                if axis == 0 {
                    break;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < per_axis {
                    break;
                }
                idx[axis] = 0;
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
        let mut set = PointSet::from_points(domain, points)?;
        let d = Rat::from_integer(dim.into());
        let reach = pitch / Rat::from_integer(2.into()) + jitter;
        let cov_sq_hi = &d * &reach * &reach;
        let (sep_sq, _, _) = set.min_pair_dist_sq();
        set.cert = Some(SetCert {
            sep_sq_lo: sep_sq,
            cov_sq_hi,
        });
        Ok(set)
    }

    /// Exact minimum squared pairwise distance and a witness pair.
    pub fn min_pair_dist_sq(&self) -> (Rat, usize, usize) {
        assert!(self.len() >= 1);
        let n = self.len();
        if n == 1 {
            // Only the self-lift pairs: nearest periodic copy.
            let d2 = (0..self.domain.dim)
                .map(|_| &self.domain.period * &self.domain.period)
                .min()
                .unwrap();
            return (d2, 0, 0);
        }
        let cell = self.heuristic_cell();
        let grid = BucketGrid::build(&self.domain, &self.points, &cell);
        let results: Vec<(Rat, usize, usize)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut radius = cell.clone();
                loop {
                    let cand = grid.near(&self.points[i], &radius);
                    let r_sq = &radius * &radius;
                    let mut best: Option<(Rat, usize)> = None;
                    for &j in &cand {
                        if j == i {
                            continue;
                        }
                        let d2 = self.domain.dist_sq(&self.points[i], &self.points[j]);
                        if d2 <= r_sq && best.as_ref().map_or(true, |(b, _)| &d2 < b) {
                            best = Some((d2, j));
                        }
                    }
                    if let Some((d2, j)) = best {
                        return (d2, i.min(j), i.max(j));
                    }
                    radius = &radius * Rat::from_integer(2.into());
                    if radius > self.domain.period {
                        // All points coincide with lifts beyond the period;
                        // fall back to brute force against everything.
                        let (d2, j) = (0..n)
                            .filter(|&j| j != i)
                            .map(|j| (self.domain.dist_sq(&self.points[i], &self.points[j]), j))
                            .min_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)))
                            .unwrap();
                        return (d2, i.min(j), i.max(j));
                    }
                }
            })
            .collect();
        results
            .into_iter()
            .min_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
            .unwrap()
    }

    /// Exact squared covering radius and a witness location attaining it.
    ///
    /// The farthest point from the set is a critical point of the distance
    /// function: it lies in the convex hull of its nearest set points, hence
    /// equals the in-hull circumcenter of an affinely independent subset of
    /// at most `d+1` of them. Enumerating those circumcenters among
    /// neighbor tuples and maximizing the exact distance-to-set is exact.
    pub fn covering_radius_sq(&self) -> (Rat, Point) {
        let dim = self.domain.dim;
        let upper = self.probe_cov_upper();
        let upper_r = sqrt_upper(&upper, 32);
        let grid = BucketGrid::build(&self.domain, &self.points, &self.heuristic_cell());
        let two_r = Rat::from_integer(2.into()) * &upper_r;
        let pair_r_sq = &two_r * &two_r;
        let n = self.len();
        let results: Vec<(Rat, Point)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let p = &self.points[i];
                // Lifted neighbors within 2R of p, p itself (shift 0) first.
                let mut nbrs: Vec<LPoint> = Vec::new();
                for j in grid.near(p, &two_r) {
                    for (shift, d2) in self.domain.lifts_within(p, &self.points[j], &pair_r_sq) {
                        if j == i && shift.iter().all(|&s| s == 0) {
                            continue;
                        }
                        let _ = d2;
                        nbrs.push(LPoint { id: j, shift });
                    }
                }
                nbrs.sort();
                let mut best = (Rat::zero(), p.clone());
                let mut seen: HashSet<Vec<LPoint>> = HashSet::new();
                let anchor = LPoint::base(i, dim);
                let mut subset: Vec<LPoint> = Vec::new();
                self.cov_subsets(
                    &grid,
                    &anchor,
                    &nbrs,
                    0,
                    &mut subset,
                    &upper,
                    &mut seen,
                    &mut best,
                );
                best
            })
            .collect();
        results
            .into_iter()
            .max_by(|a, b| a.0.cmp(&b.0).then_with(|| kernel::lex_cmp(&b.1, &a.1)))
            .unwrap()
    }

    #[allow(clippy::too_many_arguments)]
    fn cov_subsets(
        &self,
        grid: &BucketGrid,
        anchor: &LPoint,
        nbrs: &[LPoint],
        start: usize,
        subset: &mut Vec<LPoint>,
        upper: &Rat,
        seen: &mut HashSet<Vec<LPoint>>,
        best: &mut (Rat, Point),
    ) {
        let dim = self.domain.dim;
        if !subset.is_empty() {
            let mut vs = vec![anchor.clone()];
            vs.extend(subset.iter().cloned());
            let key = canonical_vertices(vs.clone());
            if seen.insert(key) {
                let coords: Vec<Point> = vs
                    .iter()
                    .map(|v| v.coords(&self.domain, &self.points))
                    .collect();
                let refs: Vec<&[Rat]> = coords.iter().map(|c| c.as_slice()).collect();
                if kernel::affinely_independent(&refs) {
                    if let Ok((z, r2)) = kernel::circumsphere(&refs) {
                        if &r2 <= upper {
                            let zc = self.domain.canonical(&z);
                            let d2 = self.dist_to_set_sq(grid, &zc, &r2);
                            if d2 > best.0 || (d2 == best.0 && kernel::lex_cmp(&zc, &best.1).is_lt())
                            {
                                *best = (d2, zc);
                            }
                        }
                    }
                }
            }
        }
        if subset.len() == dim {
            return;
        }
        for k in start..nbrs.len() {
            subset.push(nbrs[k].clone());
            self.cov_subsets(grid, anchor, nbrs, k + 1, subset, upper, seen, best);
            subset.pop();
        }
    }

    /// Exact squared distance from `x` to the nearest set point, given an
    /// a-priori upper bound `budget` on that squared distance.
    fn dist_to_set_sq(&self, grid: &BucketGrid, x: &Point, budget: &Rat) -> Rat {
        // start at the bucket scale and widen; the budget only caps the start
        let cap = sqrt_upper(budget, 32);
        let mut r = grid.cell_edge().clone().min(cap);
        if !r.is_positive() {
            r = Rat::one();
        }
        loop {
            let cand = grid.near(x, &r);
            let r_sq = &r * &r;
            let best = cand
                .iter()
                .map(|&j| self.domain.dist_sq(x, &self.points[j]))
                .filter(|d2| d2 <= &r_sq)
                .min();
            if let Some(d2) = best {
                return d2;
            }
            r = &r * Rat::from_integer(2.into());
        }
    }

    /// Cheap rational upper bound on the squared covering radius from a
    /// probe grid: max probe distance plus probe half-diagonal.
    fn probe_cov_upper(&self) -> Rat {
        let dim = self.domain.dim;
        let per_axis: i64 = (self.len() as f64).powf(1.0 / dim as f64).ceil() as i64 * 2 + 1;
        let cell = &self.domain.period / Rat::from_integer(per_axis.into());
        let grid = BucketGrid::build(&self.domain, &self.points, &self.heuristic_cell());
        let mut idx = vec![0i64; dim];
        let half = &cell / Rat::from_integer(2.into());
        let mut max_d2 = Rat::zero();
        let start_budget = {
            let d = Rat::from_integer(dim.into());
            let quarter = &self.domain.period / Rat::from_integer(4.into());
            &d * &quarter * &quarter
        };
        loop {
            let x: Point = idx.iter().map(|&i| Rat::from_integer(i.into()) * &cell + &half).collect();
            let d2 = self.dist_to_set_sq(&grid, &x, &start_budget);
            if d2 > max_d2 {
                max_d2 = d2;
            }
            let mut axis = dim;
            loop {
                if axis == 0 {
                    break;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < per_axis {
                    break;
                }
                idx[axis] = 0;
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
        // Any x is within the half-diagonal of some probe.
        let d = Rat::from_integer(dim.into());
        let probe_reach_sq = &d * &half * &half;
        let max_r = sqrt_upper(&max_d2, 32);
        let reach_r = sqrt_upper(&probe_reach_sq, 32);
        let total = &max_r + &reach_r;
        &total * &total
    }

    fn heuristic_cell(&self) -> Rat {
        let dim = self.domain.dim;
        let per_axis = (self.len() as f64).powf(1.0 / dim as f64).floor().max(1.0) as i64;
        &self.domain.period / Rat::from_integer(per_axis.into())
    }

    pub fn validate_separated(&self, m_sq: &Rat) -> Result<()> {
        let (d2, i, j) = self.min_pair_dist_sq();
        if &d2 >= m_sq {
            Ok(())
        } else {
            Err(GeomError::NotSeparated(
                format!("sq {}", m_sq),
                i,
                j,
            ))
        }
    }

    pub fn validate_syndetic(&self, m_sq: &Rat) -> Result<()> {
        let (cov_sq, witness) = self.covering_radius_sq();
        if &cov_sq <= m_sq {
            Ok(())
        } else {
            let w = witness
                .iter()
                .map(rat_to_string)
                .collect::<Vec<_>>()
                .join(" ");
            Err(GeomError::NotSyndetic(format!("sq {}", m_sq), w))
        }
    }

    /// Validates both properties exactly and stores the exact certificate.
    pub fn validate_and_certify(&mut self, sep_sq: &Rat, cov_sq: &Rat) -> Result<()> {
        let (exact_sep, i, j) = self.min_pair_dist_sq();
        if &exact_sep < sep_sq {
            return Err(GeomError::NotSeparated(format!("sq {}", sep_sq), i, j));
        }
        let (exact_cov, witness) = self.covering_radius_sq();
        if &exact_cov > cov_sq {
            let w = witness
                .iter()
                .map(rat_to_string)
                .collect::<Vec<_>>()
                .join(" ");
            return Err(GeomError::NotSyndetic(format!("sq {}", cov_sq), w));
        }
        self.cert = Some(SetCert {
            sep_sq_lo: exact_sep,
            cov_sq_hi: exact_cov,
        });
        Ok(())
    }

    /// Number of periodic copies (lifts) inside the closed ball of squared
    /// radius `r_sq` around `x`.
    pub fn count_in_ball(&self, x: &Point, r_sq: &Rat) -> usize {
        self.points
            .iter()
            .map(|p| self.domain.lifts_within(x, p, r_sq).len())
            .sum()
    }

    /// Greedy coloring in id order such that points of equal color are at
    /// squared distance at least `r_sq`. Returns per-point colors and the
    /// number of colors used.
    pub fn color_separated(&self, r_sq: &Rat) -> (Vec<usize>, usize) {
        let r = sqrt_upper(r_sq, 32);
        let grid = BucketGrid::build(&self.domain, &self.points, &self.heuristic_cell());
        let mut colors: Vec<Option<usize>> = vec![None; self.len()];
        let mut max_color = 0usize;
        for i in 0..self.len() {
            let mut used: HashSet<usize> = HashSet::new();
            for j in grid.near(&self.points[i], &r) {
                if j == i {
                    continue;
                }
                if let Some(c) = colors[j] {
                    if self.domain.dist_sq(&self.points[i], &self.points[j]) < *r_sq {
                        used.insert(c);
                    }
                }
            }
            let c = (0..).find(|c| !used.contains(c)).unwrap();
            colors[i] = Some(c);
            max_color = max_color.max(c + 1);
        }
        (colors.into_iter().map(|c| c.unwrap()).collect(), max_color)
    }

    /// Greedy lexicographic thinning: keeps a point when it is at squared
    /// distance at least `m1_sq` from everything already kept. The result
    /// is `m1`-separated, and `(m1 + cov)`-syndetic when the input covering
    /// radius is `cov`.
    pub fn thin(&self, m1_sq: &Rat) -> Vec<usize> {
        let m1 = sqrt_upper(m1_sq, 32);
        let cell = m1.clone();
        let mut kept: Vec<usize> = Vec::new();
        let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        let cells_per_axis = {
            use num_traits::ToPrimitive;
            crate::num::rat_floor(&(&self.domain.period / &cell))
                .to_i64()
                .unwrap_or(1)
                .max(1)
        };
        let cell = &self.domain.period / Rat::from_integer(cells_per_axis.into());
        let key_of = |p: &Point| -> Vec<i64> {
            use num_traits::ToPrimitive;
            p.iter()
                .map(|c| {
                    crate::num::rat_floor(&(c / &cell))
                        .to_i64()
                        .unwrap()
                        .clamp(0, cells_per_axis - 1)
                })
                .collect()
        };
        for i in 0..self.len() {
            let p = &self.points[i];
            let key = key_of(p);
            let mut ok = true;
            // Examine the 3^d cell neighborhood (cell edge >= m1 ensures
            // any conflicting kept point lives there).
            let mut offsets = vec![0i64; self.domain.dim];
            'outer: loop {
                let k: Vec<i64> = key
                    .iter()
                    .zip(&offsets)
                    .map(|(c, o)| (c + o - 1).rem_euclid(cells_per_axis))
                    .collect();
                if let Some(ids) = grid.get(&k) {
                    for &j in ids {
                        if self.domain.dist_sq(p, &self.points[j]) < *m1_sq {
                            ok = false;
                            break 'outer;
                        }
                    }
                }
                let mut axis = self.domain.dim;
                loop {
                    if axis == 0 {
                        break 'outer;
                    }
                    axis -= 1;
                    offsets[axis] += 1;
                    if offsets[axis] < 3 {
                        break;
                    }
                    offsets[axis] = 0;
                }
            }
            if ok {
                grid.entry(key).or_default().push(i);
                kept.push(i);
            }
        }
        kept
    }

    /// Subset copy with fresh canonical ordering and no certificate.
    pub fn subset(&self, ids: &[usize]) -> Result<PointSet> {
        PointSet::from_points(
            self.domain.clone(),
            ids.iter().map(|&i| self.points[i].clone()).collect(),
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} {} {}\n",
            self.domain.dim,
            rat_to_string(&self.domain.period),
            self.len()
        );
        for p in &self.points {
            let line = p.iter().map(rat_to_string).collect::<Vec<_>>().join(" ");
            s.push_str(&line);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| GeomError::Parse("empty point set file".into()))?;
        let mut parts = header.split_whitespace();
        let dim: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| GeomError::Parse("bad dimension in header".into()))?;
        let period = parts
            .next()
            .ok_or_else(|| GeomError::Parse("missing period in header".into()))
            .and_then(|t| parse_rat(t).map_err(GeomError::Parse))?;
        let n: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| GeomError::Parse("bad count in header".into()))?;
        let domain = TorusDomain::new(dim, period)?;
        let mut pts = Vec::with_capacity(n);
        for line in lines.take(n) {
            let coords: Vec<Rat> = line
                .split_whitespace()
                .map(|t| parse_rat(t).map_err(GeomError::Parse))
                .collect::<Result<_>>()?;
            pts.push(coords);
        }
        if pts.len() != n {
            return Err(GeomError::Parse(format!(
                "expected {n} points, found {}",
                pts.len()
            )));
        }
        PointSet::from_points(domain, pts)
    }
}

fn lattice_cells(domain: &TorusDomain, pitch: &Rat) -> Result<i64> {
    use num_traits::ToPrimitive;
    if !pitch.is_positive() {
        return Err(GeomError::Config("pitch must be positive".into()));
    }
    let ratio = &domain.period / pitch;
    if !ratio.is_integer() {
        return Err(GeomError::Config(
            "lattice pitch must divide the torus period".into(),
        ));
    }
    let m = ratio.to_integer().to_i64().ok_or_else(|| {
        GeomError::Config("lattice resolution too large".into())
    })?;
    if m < 1 {
        return Err(GeomError::Config("pitch exceeds the torus period".into()));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{rat, rint};

    fn dom(d: usize, l: i64) -> TorusDomain {
        TorusDomain::new(d, rint(l)).unwrap()
    }

    #[test]
    fn lattice_cert_is_exact() {
        let set = PointSet::lattice(dom(2, 12), &rint(3)).unwrap();
        assert_eq!(set.len(), 16);
        let (sep, _, _) = set.min_pair_dist_sq();
        assert_eq!(sep, rint(9));
        let (cov, _) = set.covering_radius_sq();
        // Farthest point of a pitch-3 square lattice: cell center, d^2 = 2*(3/2)^2.
        assert_eq!(cov, rat(9, 2));
        let cert = set.cert.unwrap();
        assert_eq!(cert.sep_sq_lo, rint(9));
        assert_eq!(cert.cov_sq_hi, rat(9, 2));
    }

    #[test]
    fn covering_radius_of_single_point_line() {
        let set = PointSet::from_points(dom(1, 10), vec![vec![rint(4)]]).unwrap();
        let (cov, witness) = set.covering_radius_sq();
        assert_eq!(cov, rint(25));
        assert_eq!(witness, vec![rint(9)]);
    }

    #[test]
    fn covering_radius_degenerate_collinear() {
        // Points on a line of the 2-torus: farthest location is off-line,
        // critical subsets are pairs (midpoints), not triangles.
        let set = PointSet::from_points(
            dom(2, 8),
            vec![
                vec![rint(0), rint(0)],
                vec![rint(2), rint(0)],
                vec![rint(4), rint(0)],
                vec![rint(6), rint(0)],
            ],
        )
        .unwrap();
        let (cov, _) = set.covering_radius_sq();
        // Farthest point (1, 4): 1 + 16.
        assert_eq!(cov, rint(17));
    }

    #[test]
    fn validators_accept_and_reject() {
        let set = PointSet::lattice(dom(2, 12), &rint(3)).unwrap();
        assert!(set.validate_separated(&rint(9)).is_ok());
        assert!(set.validate_separated(&rat(91, 10)).is_err());
        assert!(set.validate_syndetic(&rat(9, 2)).is_ok());
        assert!(set.validate_syndetic(&rat(44, 10)).is_err());
    }

    #[test]
    fn perturbed_lattice_within_bounds() {
        let set =
            PointSet::perturbed_lattice(dom(2, 12), &rint(3), &rat(1, 4), 6, 7).unwrap();
        assert_eq!(set.len(), 16);
        let cert = set.cert.clone().unwrap();
        // Exact separation must respect the analytic guarantee
        // (pitch - 2 j sqrt(2))^2 > (3 - 0.75)^2 = 5.0625.
        assert!(cert.sep_sq_lo > rint(5));
        let (cov, _) = set.covering_radius_sq();
        assert!(cov <= cert.cov_sq_hi);
        // Determinism.
        let again =
            PointSet::perturbed_lattice(dom(2, 12), &rint(3), &rat(1, 4), 6, 7).unwrap();
        assert_eq!(set.points, again.points);
    }

    #[test]
    fn count_in_ball_counts_lifts() {
        let set = PointSet::lattice(dom(1, 6), &rint(1)).unwrap();
        // Ball of radius 2.5 around 0 on the line: lifts at -2,-1,0,1,2.
        assert_eq!(set.count_in_ball(&vec![rint(0)], &rat(25, 4)), 5);
        // Radius exactly 2: closed ball includes -2..2.
        assert_eq!(set.count_in_ball(&vec![rint(0)], &rint(4)), 5);
    }

    #[test]
    fn coloring_separates_classes() {
        let set = PointSet::lattice(dom(2, 8), &rint(1)).unwrap();
        let r_sq = rint(4);
        let (colors, k) = set.color_separated(&r_sq);
        assert!(k >= 4);
        for i in 0..set.len() {
            for j in i + 1..set.len() {
                if colors[i] == colors[j] {
                    assert!(set.domain.dist_sq(&set.points[i], &set.points[j]) >= r_sq);
                }
            }
        }
    }

    #[test]
    fn thinning_is_separated_and_covers() {
        let set = PointSet::lattice(dom(2, 12), &rint(1)).unwrap();
        let kept = set.thin(&rint(4));
        let sub = set.subset(&kept).unwrap();
        let (sep, _, _) = sub.min_pair_dist_sq();
        assert!(sep >= rint(4));
        // Input is sqrt(2)/2-syndetic; result must be (2 + sqrt(1/2))-syndetic.
        let bound = rat(1, 2) + rint(4) + rint(4) * crate::num::sqrt_upper(&rat(1, 2), 16);
        let (cov, _) = sub.covering_radius_sq();
        assert!(cov <= bound);
    }

    #[test]
    fn text_round_trip() {
        let set = PointSet::perturbed_lattice(dom(2, 12), &rint(3), &rat(1, 8), 5, 3).unwrap();
        let text = set.to_text();
        let back = PointSet::from_text(&text).unwrap();
        assert_eq!(set.points, back.points);
        assert_eq!(back.domain.period, rint(12));
        assert!(PointSet::from_text("2 12\n").is_err());
    }
}
