//! Weight selection that forbids slivers.
//!
//! A simplex whose vertices all lie near a common hyperplane survives in a
//! weighted Delaunay triangulation only if the weight of the vertex closing
//! it lands in an explicit open interval determined by the face it extends.
//! Sweeping every nearby low-dimensional face and picking each weight
//! outside the union of those intervals therefore bounds all cell altitudes
//! and volumes from below. Weights are assigned greedily class by class over
//! a coloring whose classes are mutually far apart, which makes the outcome
//! independent of the order within a class.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use crate::error::{GeomError, Result};
use crate::kernel::{self, Point};
use crate::num::{rat, rat_ceil, rint, sqrt_lower, sqrt_upper, PiScaled, Rat};
use crate::pointset::PointSet;
use crate::torus::{BucketGrid, LPoint};
use crate::triangulation::{cert_or_err, Triangulation, WeightFunction};

/// Extra grid halvings tried beyond the configured depth before the scan
/// reports the admissible range as exhausted.
pub const GRID_MAX_EXTRA: u32 = 16;

/// An open interval of excluded weights, stored as center and squared
/// half-length so membership stays rational: `x` is forbidden iff
/// `(x - center)^2 < half_len_sq`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForbiddenInterval {
    pub center: Rat,
    pub half_len_sq: Rat,
}

impl ForbiddenInterval {
    pub fn contains(&self, x: &Rat) -> bool {
        let d = x - &self.center;
        &d * &d < self.half_len_sq
    }

    /// Certified upper bound on the interval length, exact when the squared
    /// half-length is a perfect square.
    pub fn length_upper(&self, bits: u32) -> Rat {
        rint(2) * sqrt_upper(&self.half_len_sq, bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliverProfile {
    /// The proof-scale altitude threshold: sound for any admissible input,
    /// far below what finite instances can probe.
    Paper,
    /// A desk-scale threshold that actually fires on small instances. The
    /// measure guarantee no longer applies, so the grid scan may honestly
    /// report the weight range as exhausted.
    Desk,
}

/// Parameters of the weight pass: the altitude threshold `c1_eff * M` under
/// which a face contributes a forbidden interval, and the dyadic resolution
/// of the scan for the smallest non-forbidden weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliverConfig {
    pub profile: SliverProfile,
    pub c1_eff: Rat,
    pub grid_depth: u32,
}

impl SliverConfig {
    pub fn paper(dim: usize) -> Self {
        SliverConfig {
            profile: SliverProfile::Paper,
            c1_eff: c1_paper(dim),
            grid_depth: 8,
        }
    }

    pub fn desk() -> Self {
        SliverConfig {
            profile: SliverProfile::Desk,
            c1_eff: rat(1, 20),
            grid_depth: 8,
        }
    }

    /// Volume floor for accepted full-dimensional simplices,
    /// `c1_eff^{d-1} M^d / d!`.
    pub fn volume_floor(&self, dim: usize, m: &Rat) -> Rat {
        let mut v = Rat::one();
        for _ in 1..dim {
            v *= &self.c1_eff;
        }
        let mut fact = Rat::one();
        for k in 1..=dim as i64 {
            v *= m;
            fact *= rint(k);
        }
        v / fact
    }

    /// Squared altitude floor `(c2_eff * M)^2` for simplex vertices.
    pub fn altitude_floor_sq(&self, dim: usize, m: &Rat) -> Result<PiScaled> {
        Ok(c2_sq(&self.c1_eff, dim)?.scale(&(m * m)))
    }
}

/// The default altitude-threshold coefficient, `1 / (72 * 10^{d^2} * d)`.
pub fn c1_paper(dim: usize) -> Rat {
    assert!(dim >= 1, "positive dimension required");
    let ten_pow = BigInt::from(10u32).pow((dim * dim) as u32);
    Rat::new(BigInt::one(), BigInt::from(72 * dim as i64) * ten_pow)
}

/// The squared altitude coefficient derived from `c1`:
/// `c2 = c1^{d-1} / ((d-1)! * V_{d-1} * sqrt(5)^{d-1})` with `V_k` the
/// k-dimensional unit-ball volume, so the square is rational up to a power
/// of pi.
pub fn c2_sq(c1: &Rat, dim: usize) -> Result<PiScaled> {
    let mut c1_sq_pow = Rat::one();
    for _ in 1..dim {
        c1_sq_pow *= c1;
        c1_sq_pow *= c1;
    }
    match dim {
        // (d-1)!^2 * V_{d-1}^2 * 5^{d-1} = 1, 4 * 5, 4 * pi^2 * 25.
        1 => Ok(PiScaled::rational(c1_sq_pow)),
        2 => Ok(PiScaled::rational(c1_sq_pow / rint(20))),
        3 => Ok(PiScaled::new(c1_sq_pow / rint(100), -2)),
        d => Err(GeomError::UnsupportedDimension(d)),
    }
}

/// A sorted union of forbidden intervals for one point's weight.
#[derive(Debug, Clone, Default)]
pub struct IntervalSet {
    pub intervals: Vec<ForbiddenInterval>,
}

impl IntervalSet {
    pub fn contains(&self, x: &Rat) -> bool {
        self.intervals.iter().any(|iv| iv.contains(x))
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Certified upper bound on the total length (intervals may overlap, so
    /// this also bounds the measure of the union).
    pub fn total_length_upper(&self, bits: u32) -> Rat {
        self.intervals
            .iter()
            .map(|iv| iv.length_upper(bits))
            .sum()
    }

    /// The smallest grid value `j * hi / 2^depth` in `[0, hi]` outside every
    /// interval, halving the pitch up to `max_extra` times if a depth has no
    /// free grid point. Covered stretches are skipped by jumping to a lower
    /// bound of the covering interval's endpoint, so the cost scales with
    /// the number of intervals rather than the grid size.
    pub fn min_free_on_grid(&self, hi: &Rat, depth: u32, max_extra: u32) -> Option<Rat> {
        assert!(hi.is_positive());
        for extra in 0..=max_extra {
            let steps = BigInt::one() << (depth + extra);
            let pitch = hi / Rat::from_integer(steps.clone());
            let steps = Rat::from_integer(steps);
            let mut j = Rat::zero();
            while j <= steps {
                let x = &pitch * &j;
                let mut reach: Option<Rat> = None;
                for iv in &self.intervals {
                    if iv.contains(&x) {
                        let ub = &iv.center + sqrt_lower(&iv.half_len_sq, 64);
                        if reach.as_ref().map_or(true, |r| ub > *r) {
                            reach = Some(ub);
                        }
                    }
                }
                match reach {
                    None => return Some(x),
                    Some(ub) => {
                        let jn = Rat::from_integer(rat_ceil(&(&ub / &pitch)));
                        let next = &j + Rat::one();
                        j = if jn > next { jn } else { next };
                    }
                }
            }
        }
        None
    }
}

/// All faces with `k+1` vertices near point `p`: lifts of other points
/// strictly within distance `2 sqrt(5) M` of `p`, pairwise strictly within
/// the same bound, and affinely independent together with `p`. Faces come
/// back as sorted lift lists in `p`'s frame (`p` itself at shift zero).
pub fn candidate_faces(set: &PointSet, p: usize, k: usize, m: &Rat) -> Result<Vec<Vec<LPoint>>> {
    let grid = neighbor_grid(set, m);
    candidate_faces_with(set, &grid, p, k, m)
}

pub(crate) fn neighbor_grid(set: &PointSet, m: &Rat) -> BucketGrid {
    let bound = rint(20) * m * m;
    let cell = sqrt_upper(&bound, 32).max(Rat::one());
    BucketGrid::build(&set.domain, &set.points, &cell)
}

pub(crate) fn candidate_faces_with(
    set: &PointSet,
    grid: &BucketGrid,
    p: usize,
    k: usize,
    m: &Rat,
) -> Result<Vec<Vec<LPoint>>> {
    let dom = &set.domain;
    let d = dom.dim;
    if k < 1 || k >= d {
        return Err(GeomError::Config(format!(
            "face dimension {k} outside 1..{d}"
        )));
    }
    cert_or_err(set)?;
    let x = &set.points[p];
    let bound = rint(20) * m * m;
    let r_up = sqrt_upper(&bound, 32);

    // Lifts of other points strictly within 2 sqrt(5) M of p, sorted.
    let mut neighbors: Vec<(LPoint, Point)> = Vec::new();
    for id in grid.near(x, &r_up) {
        if id == p {
            continue;
        }
        for (shift, d2) in dom.lifts_within(x, &set.points[id], &bound) {
            if d2 < bound {
                let lp = LPoint { id, shift };
                let coords = lp.coords(dom, &set.points);
                neighbors.push((lp, coords));
            }
        }
    }
    neighbors.sort_by(|a, b| a.0.cmp(&b.0));

    let nn = neighbors.len();
    let mut close = vec![vec![false; nn]; nn];
    for i in 0..nn {
        for j in (i + 1)..nn {
            let ds = kernel::dist_sq(&neighbors[i].1, &neighbors[j].1);
            if ds < bound {
                close[i][j] = true;
                close[j][i] = true;
            }
        }
    }

    let mut faces = Vec::new();
    let mut chosen: Vec<usize> = Vec::with_capacity(k + 1);
    collect_faces(&neighbors, &close, x, k + 1, 0, &mut chosen, &mut faces);

    if dom.check_scale(m).is_ok() {
        // Separated points admit fewer than 10^d lifts in the ball, hence
        // fewer than 10^{(k+1)d} faces.
        let cap = 10u128.pow(((k + 1) * d) as u32);
        assert!(
            (faces.len() as u128) < cap,
            "candidate face count {} exceeds the locality cap {}",
            faces.len(),
            cap
        );
    }
    Ok(faces)
}

fn collect_faces(
    neighbors: &[(LPoint, Point)],
    close: &[Vec<bool>],
    p: &Point,
    need: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    faces: &mut Vec<Vec<LPoint>>,
) {
    if chosen.len() == need {
        let mut refs: Vec<&[Rat]> = chosen
            .iter()
            .map(|&i| neighbors[i].1.as_slice())
            .collect();
        refs.push(p.as_slice());
        if kernel::affinely_independent(&refs) {
            faces.push(chosen.iter().map(|&i| neighbors[i].0.clone()).collect());
        }
        return;
    }
    for i in start..neighbors.len() {
        if neighbors.len() - i < need - chosen.len() {
            break;
        }
        if chosen.iter().any(|&j| !close[j][i]) {
            continue;
        }
        chosen.push(i);
        collect_faces(neighbors, close, p, need, i + 1, chosen, faces);
        chosen.pop();
    }
}

/// The open interval of weights for `p` forbidden by the weighted face
/// `(tau, lambda)`: center `d(p,H)^2 + d(z,pi(p))^2 - u`, where `H` is the
/// affine hull of `tau`, `pi` the orthogonal projection onto it and `(z,u)`
/// the orthosphere of the weighted face, with squared half-length
/// `16 M^2 d(p,H)^2`.
pub fn forbidden_interval(
    p: &Point,
    tau: &[Point],
    lambda: &[Rat],
    m: &Rat,
) -> Result<ForbiddenInterval> {
    if tau.is_empty() || tau.len() != lambda.len() {
        return Err(GeomError::Config(
            "forbidden interval needs matching nonempty face and weight lists".into(),
        ));
    }
    for q in tau {
        if q.len() != p.len() {
            return Err(GeomError::DimensionMismatch {
                expected: p.len(),
                got: q.len(),
            });
        }
    }
    let refs: Vec<&[Rat]> = tau.iter().map(|q| q.as_slice()).collect();
    let (foot, alt_sq) = kernel::project_affine(p, &refs)?;
    if alt_sq.is_zero() {
        return Err(GeomError::DegenerateSimplex);
    }
    let (z, u) = kernel::orthosphere(&refs, lambda)?;
    let center = &alt_sq + kernel::dist_sq(&z, &foot) - u;
    let half_len_sq = rint(16) * m * m * &alt_sq;
    Ok(ForbiddenInterval {
        center,
        half_len_sq,
    })
}

/// The union of forbidden intervals for `p` under the current weights: one
/// interval per candidate face of each dimension whose hull passes within
/// `c1_eff * M` of `p`, with face weights read from `w`.
pub fn forbidden_set(
    set: &PointSet,
    p: usize,
    w: &[Rat],
    cfg: &SliverConfig,
    m: &Rat,
) -> Result<IntervalSet> {
    let grid = neighbor_grid(set, m);
    forbidden_set_with(set, &grid, p, w, cfg, m)
}

pub(crate) fn forbidden_set_with(
    set: &PointSet,
    grid: &BucketGrid,
    p: usize,
    w: &[Rat],
    cfg: &SliverConfig,
    m: &Rat,
) -> Result<IntervalSet> {
    let dom = &set.domain;
    let x = &set.points[p];
    let thresh = {
        let t = &cfg.c1_eff * m;
        &t * &t
    };
    let mut intervals = Vec::new();
    for k in 1..dom.dim {
        for face in candidate_faces_with(set, grid, p, k, m)? {
            let coords: Vec<Point> = face.iter().map(|v| v.coords(dom, &set.points)).collect();
            let refs: Vec<&[Rat]> = coords.iter().map(|c| c.as_slice()).collect();
            let (_, alt_sq) = kernel::project_affine(x, &refs)?;
            if alt_sq > thresh {
                continue;
            }
            let lambda: Vec<Rat> = face.iter().map(|v| w[v.id].clone()).collect();
            intervals.push(forbidden_interval(x, &coords, &lambda, m)?);
        }
    }
    intervals.sort_by(|a, b| {
        a.center
            .cmp(&b.center)
            .then_with(|| a.half_len_sq.cmp(&b.half_len_sq))
    });
    Ok(IntervalSet { intervals })
}

/// Books the measure argument for one point: how many faces contribute, the
/// cap on that count from separation, the per-interval length cap
/// `8 c1_eff M^2`, and both resulting upper bounds against the weight
/// budget `M^2 / 9`. With the default coefficient the count cap times the
/// length cap equals the budget times `8/72 * 9 = 1` exactly.
#[derive(Debug, Clone)]
pub struct MeasureCert {
    pub face_count: usize,
    /// `d * 10^{d^2}`.
    pub count_cap: u128,
    /// `8 c1_eff M^2`.
    pub per_interval_cap: Rat,
    /// `face_count * per_interval_cap`.
    pub counted_upper: Rat,
    /// Sum of certified per-interval length bounds.
    pub summed_upper: Rat,
    /// `M^2 / 9`, the length of the admissible weight range.
    pub budget: Rat,
}

pub fn measure_certificate(
    set: &PointSet,
    p: usize,
    w: &[Rat],
    cfg: &SliverConfig,
    m: &Rat,
) -> Result<MeasureCert> {
    let d = set.domain.dim;
    let iset = forbidden_set(set, p, w, cfg, m)?;
    let m_sq = m * m;
    let per_interval_cap = rint(8) * &cfg.c1_eff * &m_sq;
    let face_count = iset.len();
    Ok(MeasureCert {
        face_count,
        count_cap: (d as u128) * 10u128.pow((d * d) as u32),
        counted_upper: Rat::from_integer(BigInt::from(face_count)) * &per_interval_cap,
        per_interval_cap,
        summed_upper: iset.total_length_upper(64),
        budget: m_sq / rint(9),
    })
}

/// Greedy per-class weight assignment. Classes are processed in index
/// order; every point of the active class receives the smallest grid value
/// in `[0, (M/3)^2]` outside its current forbidden set. Points of one class
/// are mutually farther apart than `2 sqrt(5) M`, so they cannot appear in
/// each other's candidate faces: within a class the outcome is order
/// independent and is evaluated in parallel.
pub fn assign_weights(
    set: &PointSet,
    m: &Rat,
    cfg: &SliverConfig,
    colors: &[usize],
    color_count: usize,
) -> Result<WeightFunction> {
    let n = set.len();
    if colors.len() != n {
        return Err(GeomError::Config(format!(
            "coloring has {} entries for {} points",
            colors.len(),
            n
        )));
    }
    if colors.iter().any(|&c| c >= color_count) {
        return Err(GeomError::Config("color index out of range".into()));
    }
    let cert = cert_or_err(set)?;
    let m_sq = m * m;
    if cert.sep_sq_lo < m_sq {
        return Err(GeomError::Config(format!(
            "certificate separation {} does not establish M-separation for M^2 = {}",
            cert.sep_sq_lo, m_sq
        )));
    }
    if cert.cov_sq_hi > rat(4, 1) * &m_sq {
        return Err(GeomError::Config(format!(
            "certificate covering {} does not establish 2M-syndeticity for 4M^2 = {}",
            cert.cov_sq_hi,
            rat(4, 1) * &m_sq
        )));
    }

    let dom = &set.domain;
    let grid = neighbor_grid(set, m);
    let bound = rint(20) * m * m;
    let r_up = sqrt_upper(&bound, 32);
    for p in 0..n {
        for id in grid.near(&set.points[p], &r_up) {
            if id <= p || colors[id] != colors[p] {
                continue;
            }
            for (_, d2) in dom.lifts_within(&set.points[p], &set.points[id], &bound) {
                if d2 < bound {
                    return Err(GeomError::Config(format!(
                        "coloring class {} holds points {p} and {id} within 2 sqrt(5) M",
                        colors[p]
                    )));
                }
            }
        }
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); color_count];
    for (i, &c) in colors.iter().enumerate() {
        members[c].push(i);
    }

    let hi = &m_sq / rint(9);
    let mut weights = vec![Rat::zero(); n];
    for (ci, class) in members.iter().enumerate() {
        crate::trace(|| format!("weights: class {}/{} ({} points)", ci + 1, color_count, class.len()));
        let picks: Vec<(usize, Result<Option<Rat>>)> = class
            .par_iter()
            .map(|&p| {
                let pick = forbidden_set_with(set, &grid, p, &weights, cfg, m).map(|iset| {
                    iset.min_free_on_grid(&hi, cfg.grid_depth, GRID_MAX_EXTRA)
                });
                (p, pick)
            })
            .collect();
        for (p, pick) in picks {
            match pick? {
                Some(x) => weights[p] = x,
                None => return Err(GeomError::WeightRangeExhausted(p)),
            }
        }
    }
    Ok(WeightFunction {
        weights,
        scale: m.clone(),
    })
}

/// Margins reported by a successful sliver check.
#[derive(Debug, Clone)]
pub struct SliverReport {
    pub simplex_count: usize,
    pub min_volume: Rat,
    pub volume_floor: Rat,
    pub min_altitude_sq: Rat,
    pub altitude_floor_sq: PiScaled,
}

/// Checks every simplex of the triangulation against the profile's volume
/// and altitude floors. The bounds are strict except in dimension one,
/// where separation is closed and an edge may realize its floor exactly.
pub fn verify_no_slivers(
    set: &PointSet,
    tri: &Triangulation,
    m: &Rat,
    cfg: &SliverConfig,
) -> Result<SliverReport> {
    let d = set.domain.dim;
    let volume_floor = cfg.volume_floor(d, m);
    let altitude_floor_sq = cfg.altitude_floor_sq(d, m)?;
    let strict = d >= 2;

    let mut min_volume: Option<Rat> = None;
    let mut min_altitude_sq: Option<Rat> = None;
    for simplex in &tri.simplices {
        let coords = simplex.coords(set);
        let refs: Vec<&[Rat]> = coords.iter().map(|c| c.as_slice()).collect();
        let vol = kernel::simplex_volume(&refs);
        let vol_ok = if strict {
            vol > volume_floor
        } else {
            vol >= volume_floor
        };
        if !vol_ok {
            return Err(GeomError::SliverFound(simplex.ids()));
        }
        if min_volume.as_ref().map_or(true, |v| vol < *v) {
            min_volume = Some(vol);
        }
        for i in 0..refs.len() {
            let alt_sq = kernel::altitude_sq(&refs, i)?;
            let cmp = altitude_floor_sq.cmp_rat(&alt_sq);
            let alt_ok = if strict {
                cmp == std::cmp::Ordering::Less
            } else {
                cmp != std::cmp::Ordering::Greater
            };
            if !alt_ok {
                return Err(GeomError::SliverFound(simplex.ids()));
            }
            if min_altitude_sq.as_ref().map_or(true, |a| alt_sq < *a) {
                min_altitude_sq = Some(alt_sq);
            }
        }
    }
    Ok(SliverReport {
        simplex_count: tri.simplices.len(),
        min_volume: min_volume.unwrap_or_else(Rat::zero),
        volume_floor,
        min_altitude_sq: min_altitude_sq.unwrap_or_else(Rat::zero),
        altitude_floor_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rat_f64;
    use crate::pointset::SetCert;
    use crate::torus::TorusDomain;
    use crate::triangulation::triangulation;
    use proptest::prelude::*;

    fn pt(xs: &[Rat]) -> Point {
        xs.to_vec()
    }

    fn spec_interval() -> ForbiddenInterval {
        // tau = {(0,0), (2,0)} with zero weights has orthosphere z = (1,0),
        // u = 1; p = (1, 1/2) projects to (1,0) at squared distance 1/4, so
        // the center is 1/4 + 0 - 1 = -3/4 and the squared half-length is
        // 16 * 1 * 1/4 = 4.
        let tau = vec![pt(&[rint(0), rint(0)]), pt(&[rint(2), rint(0)])];
        let lambda = vec![Rat::zero(), Rat::zero()];
        let p = pt(&[rint(1), rat(1, 2)]);
        forbidden_interval(&p, &tau, &lambda, &rint(1)).unwrap()
    }

    #[test]
    fn interval_matches_hand_computation() {
        let iv = spec_interval();
        assert_eq!(iv.center, rat(-3, 4));
        assert_eq!(iv.half_len_sq, rint(4));
        // Open endpoints at -11/4 and 5/4.
        assert!(iv.contains(&Rat::zero()));
        assert!(iv.contains(&rint(1)));
        assert!(iv.contains(&rat(-27, 10)));
        assert!(!iv.contains(&rat(5, 4)));
        assert!(!iv.contains(&rat(-11, 4)));
        assert!(!iv.contains(&rint(2)));
        // Perfect square, so the length bound is exact: 8 M d(p, H).
        assert_eq!(iv.length_upper(32), rint(4));
    }

    #[test]
    fn interval_is_translation_invariant() {
        let base = spec_interval();
        let shift = pt(&[rat(7, 3), rat(-2, 5)]);
        let tau: Vec<Point> = vec![
            kernel::add(&pt(&[rint(0), rint(0)]), &shift),
            kernel::add(&pt(&[rint(2), rint(0)]), &shift),
        ];
        let lambda = vec![Rat::zero(), Rat::zero()];
        let p = kernel::add(&pt(&[rint(1), rat(1, 2)]), &shift);
        let moved = forbidden_interval(&p, &tau, &lambda, &rint(1)).unwrap();
        assert_eq!(moved, base);
    }

    #[test]
    fn interval_rejects_point_on_hull() {
        let tau = vec![pt(&[rint(0), rint(0)]), pt(&[rint(2), rint(0)])];
        let lambda = vec![Rat::zero(), Rat::zero()];
        let p = pt(&[rint(1), rint(0)]);
        match forbidden_interval(&p, &tau, &lambda, &rint(1)) {
            Err(GeomError::DegenerateSimplex) => {}
            other => panic!("expected degenerate simplex, got {other:?}"),
        }
    }

    #[test]
    fn paper_coefficients() {
        assert_eq!(c1_paper(1), rat(1, 720));
        assert_eq!(c1_paper(2), rat(1, 1_440_000));
        assert_eq!(
            c1_paper(3),
            Rat::new(BigInt::one(), BigInt::from(216_000_000_000u64))
        );
        // The measure budget closes exactly: 8 d 10^{d^2} c1 = 1/9.
        for d in 1..=3usize {
            let cap = Rat::from_integer(BigInt::from(d) * BigInt::from(10u32).pow((d * d) as u32));
            assert_eq!(rint(8) * cap * c1_paper(d), rat(1, 9));
        }
    }

    #[test]
    fn altitude_coefficients() {
        let one = c2_sq(&rint(1), 1).unwrap();
        assert_eq!(one.plain, rint(1));
        assert_eq!(one.pi_pow, 0);

        let c1 = c1_paper(2);
        let paper2 = c2_sq(&c1, 2).unwrap();
        assert_eq!(paper2.plain, &c1 * &c1 / rint(20));
        assert_eq!(paper2.pi_pow, 0);

        let desk2 = c2_sq(&rat(1, 20), 2).unwrap();
        assert_eq!(desk2.plain, rat(1, 8000));

        let c1 = rat(1, 20);
        let quad = &c1 * &c1 * &c1 * &c1;
        let desk3 = c2_sq(&c1, 3).unwrap();
        assert_eq!(desk3.plain, quad / rint(100));
        assert_eq!(desk3.pi_pow, -2);

        assert!(c2_sq(&c1, 4).is_err());
    }

    fn unit_lattice(dim: usize) -> PointSet {
        let domain = TorusDomain::new(dim, rint(8)).unwrap();
        let mut set = PointSet::lattice(domain, &rint(1)).unwrap();
        set.validate_and_certify(&rint(1), &rat_dim_quarter(dim)).unwrap();
        set
    }

    fn rat_dim_quarter(dim: usize) -> Rat {
        // Covering radius of the unit lattice is sqrt(d)/2.
        Rat::from_integer(BigInt::from(dim)) / rint(4)
    }

    #[test]
    fn candidate_faces_on_unit_lattice() {
        let set = unit_lattice(2);
        let m = rat(3, 8);
        // 2 sqrt(5) M = 1.677...: neighbors are the 4 axis and 4 diagonal
        // offsets. Close pairs are axis-diagonal (8) and perpendicular
        // axis-axis (4); opposite pairs are 2 apart and excluded.
        let faces = candidate_faces(&set, 0, 1, &m).unwrap();
        assert_eq!(faces.len(), 12);
        let bound = rint(20) * &m * &m;
        for face in &faces {
            assert_eq!(face.len(), 2);
            let a = face[0].coords(&set.domain, &set.points);
            let b = face[1].coords(&set.domain, &set.points);
            assert!(kernel::dist_sq(&a, &b) < bound);
            assert!(kernel::dist_sq(&set.points[0], &a) < bound);
            assert!(kernel::dist_sq(&set.points[0], &b) < bound);
        }
        assert!(candidate_faces(&set, 0, 2, &m).is_err());
        assert!(candidate_faces(&set, 0, 0, &m).is_err());
    }

    #[test]
    fn forbidden_set_empty_under_paper_threshold() {
        let set = unit_lattice(2);
        let m = rat(3, 8);
        let cfg = SliverConfig::paper(2);
        let w = vec![Rat::zero(); set.len()];
        let iset = forbidden_set(&set, 0, &w, &cfg, &m).unwrap();
        // No lattice face hull passes within c1 M of another point.
        assert!(iset.is_empty());
        let hi = &m * &m / rint(9);
        assert_eq!(iset.min_free_on_grid(&hi, 8, 4), Some(Rat::zero()));
    }

    #[test]
    fn grid_query_steps_past_interval() {
        // One interval (-1, 1/20) in the range [0, 1/9]: grid pitch 1/144 at
        // depth 4, so the first free grid value is 8/144 = 1/18.
        let iset = IntervalSet {
            intervals: vec![ForbiddenInterval {
                center: rat(-19, 40),
                half_len_sq: rat(441, 1600),
            }],
        };
        let hi = rat(1, 9);
        assert_eq!(iset.min_free_on_grid(&hi, 4, 0), Some(rat(1, 18)));
        for j in 0..8i64 {
            assert!(iset.contains(&rat(j, 144)));
        }
        assert!(!iset.contains(&rat(1, 18)));

        // An interval swallowing the whole range leaves nothing at any depth.
        let all = IntervalSet {
            intervals: vec![ForbiddenInterval {
                center: rat(1, 18),
                half_len_sq: rint(1),
            }],
        };
        assert_eq!(all.min_free_on_grid(&hi, 4, 6), None);
    }

    fn desk_set(seed: u64) -> PointSet {
        let domain = TorusDomain::new(2, rint(140)).unwrap();
        let mut set =
            PointSet::perturbed_lattice(domain, &rint(20), &rat(1, 2), 8, seed).unwrap();
        let (sep, _, _) = set.min_pair_dist_sq();
        let (cov, _) = set.covering_radius_sq();
        set.cert = Some(SetCert {
            sep_sq_lo: sep,
            cov_sq_hi: cov,
        });
        set
    }

    #[test]
    fn assign_weights_desk_profile_end_to_end() {
        let set = desk_set(5);
        let m = rat(15, 2);
        let bound = rint(20) * &m * &m;
        let (colors, count) = set.color_separated(&bound);
        let cfg = SliverConfig::desk();
        let wf = assign_weights(&set, &m, &cfg, &colors, count).unwrap();
        wf.check(set.len()).unwrap();
        // Grid values: every weight is a multiple of the finest pitch.
        let hi = &m * &m / rint(9);
        for w in &wf.weights {
            let steps = Rat::from_integer(BigInt::one() << (cfg.grid_depth + GRID_MAX_EXTRA));
            let q = w / &hi * steps;
            assert!(q.is_integer());
        }
        let again = assign_weights(&set, &m, &cfg, &colors, count).unwrap();
        assert_eq!(wf.weights, again.weights);

        let tri = triangulation(&set, &wf).unwrap();
        let report = verify_no_slivers(&set, &tri, &m, &cfg).unwrap();
        assert!(report.min_volume > report.volume_floor);
        assert!(report.altitude_floor_sq.cmp_rat(&report.min_altitude_sq)
            == std::cmp::Ordering::Less);
        assert!(report.simplex_count > 0);
    }

    #[test]
    fn assign_weights_paper_profile_is_vacuous_here() {
        let set = desk_set(9);
        let m = rat(15, 2);
        let bound = rint(20) * &m * &m;
        let (colors, count) = set.color_separated(&bound);
        let cfg = SliverConfig::paper(2);
        let wf = assign_weights(&set, &m, &cfg, &colors, count).unwrap();
        // The proof-scale threshold admits no face this coarse.
        assert!(wf.weights.iter().all(|w| w.is_zero()));
        let tri = triangulation(&set, &wf).unwrap();
        verify_no_slivers(&set, &tri, &m, &cfg).unwrap();
    }

    #[test]
    fn measure_certificate_respects_budget() {
        let set = desk_set(5);
        let m = rat(15, 2);
        let w = vec![Rat::zero(); set.len()];
        for cfg in [SliverConfig::paper(2), SliverConfig::desk()] {
            for p in [0usize, 7, 23] {
                let cert = measure_certificate(&set, p, &w, &cfg, &m).unwrap();
                assert!((cert.face_count as u128) < cert.count_cap);
                assert!(cert.summed_upper <= cert.counted_upper);
                if cfg.profile == SliverProfile::Paper {
                    // Count cap times interval cap is exactly the budget.
                    let cap = Rat::from_integer(BigInt::from(cert.count_cap));
                    assert_eq!(&cap * &cert.per_interval_cap, cert.budget);
                    assert!(cert.counted_upper < cert.budget);
                }
            }
        }
    }

    #[test]
    fn one_dimensional_pass_is_trivial() {
        let domain = TorusDomain::new(1, rint(8)).unwrap();
        let mut set = PointSet::lattice(domain, &rint(1)).unwrap();
        set.validate_and_certify(&rint(1), &rat(1, 4)).unwrap();
        let m = rat(3, 8);
        let bound = rint(20) * &m * &m;
        let (colors, count) = set.color_separated(&bound);
        let cfg = SliverConfig::desk();
        let wf = assign_weights(&set, &m, &cfg, &colors, count).unwrap();
        assert!(wf.weights.iter().all(|w| w.is_zero()));
        let tri = triangulation(&set, &wf).unwrap();
        let report = verify_no_slivers(&set, &tri, &m, &cfg).unwrap();
        // Unit edges against floors M = 3/8 and M^2 = 9/64.
        assert_eq!(report.min_volume, rint(1));
        assert_eq!(report.volume_floor, rat(3, 8));
        assert_eq!(report.min_altitude_sq, rint(1));
    }

    #[test]
    fn coloring_violation_is_rejected() {
        let set = unit_lattice(2);
        let m = rat(3, 8);
        // Adjacent lattice points are 1 < 2 sqrt(5) M apart: one class for
        // everything cannot be valid.
        let colors = vec![0usize; set.len()];
        let cfg = SliverConfig::desk();
        match assign_weights(&set, &m, &cfg, &colors, 1) {
            Err(GeomError::Config(msg)) => assert!(msg.contains("class")),
            other => panic!("expected coloring rejection, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn membership_agrees_with_float_probes(num in -2000i64..2000, den in 1i64..500) {
            let iv = spec_interval();
            let x = rat(num, den);
            let exact = iv.contains(&x);
            let xf = rat_f64(&x);
            let margin = (xf + 0.75).abs() - 2.0;
            // Probes well clear of the boundary must agree with the floats.
            if margin.abs() > 1e-9 {
                prop_assert_eq!(exact, margin < 0.0);
            }
        }
    }
}
