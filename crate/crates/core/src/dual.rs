//! The dual tessellation of a sliver-free triangulation.
//!
//! Every simplex is split into one piece per vertex, the region where that
//! vertex's barycentric coordinate dominates the others. The union of a
//! point's pieces over its incident simplices is its dual cell. Because the
//! triangulation has altitude and volume floors, the cells carry uniform
//! guarantees: each contains a ball around its site, nearby cells always
//! share a point, each meets a bounded number of others, and the volume of
//! a neighborhood of a cell boundary is bounded by an explicit formula.

use std::collections::{BTreeSet, HashSet};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GeomError, Result};
use crate::kernel::{self, Point};
use crate::num::{pi_interval, rat, rat_f64, rint, sqrt_lower, sqrt_upper, Rat};
use crate::pointset::PointSet;
use crate::polytope::{self, FacetSystem, HalfSpace};
use crate::sliver::{c2_sq, SliverConfig};
use crate::torus::{BucketGrid, LPoint};
use crate::triangulation::Triangulation;

/// The dominance region of one vertex inside one simplex: all points whose
/// barycentric coordinate at the owner is at least every other coordinate.
/// Vertices are the averages of the owner with each subset of the other
/// vertices; facets come from the barycentric inequalities.
#[derive(Debug, Clone)]
pub struct DualPiece {
    /// Index of the owning vertex within `simplex_coords`.
    pub owner_vertex: usize,
    /// Simplex vertex coordinates, translated so the owner sits at the base
    /// position of its point.
    pub simplex_coords: Vec<Point>,
    /// The `2^d` subset averages, in subset-mask order.
    pub vertices: Vec<Point>,
    pub facets: FacetSystem,
    /// Source in the triangulation: simplex index and the owner lift's
    /// period shift, when the piece was assembled from one.
    pub source: Option<(usize, Vec<i64>)>,
}

/// All pieces owned by one point, in its own frame, with bookkeeping for
/// neighbor queries.
#[derive(Debug, Clone)]
pub struct DualCell {
    pub owner: usize,
    pub pieces: Vec<DualPiece>,
    pub volume: Rat,
    /// Largest squared distance from the site to any piece vertex.
    pub reach_sq: Rat,
}

/// One cell per point; adjacency lists the meeting translates of other
/// cells as `(id, shift)`, meaning this cell meets `cell(id) + shift * L`.
#[derive(Debug, Clone)]
pub struct DualTessellation {
    pub cells: Vec<DualCell>,
    pub adjacency: Vec<Vec<(usize, Vec<i64>)>>,
}

/// Builds the dominance piece of `coords[owner_vertex]` in the simplex
/// spanned by `coords`. The facet system is derived exactly from the
/// barycentric coordinate functionals; the vertex list from the subset
/// averages. Both derivations are cross-checked against each other.
pub fn dual_piece(coords: &[Point], owner_vertex: usize) -> Result<DualPiece> {
    let d = coords[0].len();
    if coords.len() != d + 1 {
        return Err(GeomError::Config(
            "dominance pieces need a full-dimensional simplex".into(),
        ));
    }
    if owner_vertex > d {
        return Err(GeomError::Config("owner index outside the simplex".into()));
    }
    let refs: Vec<&[Rat]> = coords.iter().map(|c| c.as_slice()).collect();
    if !kernel::affinely_independent(&refs) {
        return Err(GeomError::DegenerateSimplex);
    }

    // Barycentric functionals: lambda_i(x) = c_i . x + b_i solves
    // A lambda = (x, 1) with columns (v_j, 1). Row i of the inverse comes
    // from solving the transposed system against the i-th unit vector.
    let mut at: Vec<Vec<Rat>> = Vec::with_capacity(d + 1);
    for v in coords {
        let mut row = v.clone();
        row.push(Rat::one());
        at.push(row);
    }
    let mut functionals: Vec<(Point, Rat)> = Vec::with_capacity(d + 1);
    for i in 0..=d {
        let mut e = vec![Rat::zero(); d + 1];
        e[i] = Rat::one();
        let y = kernel::solve_square(&at, &e).ok_or(GeomError::DegenerateSimplex)?;
        let (c, b) = y.split_at(d);
        functionals.push((c.to_vec(), b[0].clone()));
    }

    // lambda_q >= 0 and lambda_owner - lambda_q >= 0 for q != owner.
    let mut halves = Vec::with_capacity(2 * d);
    let (co, bo) = functionals[owner_vertex].clone();
    for (q, (cq, bq)) in functionals.iter().enumerate() {
        if q == owner_vertex {
            continue;
        }
        halves.push(HalfSpace {
            normal: cq.iter().map(|c| -c).collect(),
            offset: bq.clone(),
        });
        halves.push(HalfSpace {
            normal: cq.iter().zip(&co).map(|(a, b)| a - b).collect(),
            offset: &bo - bq,
        });
    }

    // Subset averages over the non-owner vertices, in mask order.
    let others: Vec<usize> = (0..=d).filter(|&i| i != owner_vertex).collect();
    let mut vertices = Vec::with_capacity(1 << d);
    for mask in 0u32..(1 << d) {
        let mut sum = coords[owner_vertex].clone();
        let mut count = 1i64;
        for (bit, &oi) in others.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                sum = kernel::add(&sum, &coords[oi]);
                count += 1;
            }
        }
        vertices.push(kernel::scale(&sum, &rat(1, count)));
    }

    let mut on_facet = Vec::with_capacity(halves.len());
    for h in &halves {
        let mut on = Vec::new();
        for (i, v) in vertices.iter().enumerate() {
            let e = h.eval(v);
            if e.is_positive() {
                return Err(GeomError::TessellationViolation(
                    "subset average escapes the barycentric facet system".into(),
                ));
            }
            if e.is_zero() {
                on.push(i);
            }
        }
        // Each inequality supports a genuine facet: half the vertices.
        if on.len() != 1 << (d - 1) {
            return Err(GeomError::TessellationViolation(
                "barycentric facet misses its subset averages".into(),
            ));
        }
        on_facet.push(on);
    }

    Ok(DualPiece {
        owner_vertex,
        simplex_coords: coords.to_vec(),
        vertices,
        facets: FacetSystem { halves, on_facet },
        source: None,
    })
}

impl DualPiece {
    pub fn owner_point(&self) -> &Point {
        &self.simplex_coords[self.owner_vertex]
    }

    /// The site's squared distance to the affine hull of the opposite
    /// vertices, the quantity the capacity argument runs on.
    pub fn opposite_altitude_sq(&self) -> Result<Rat> {
        let refs: Vec<&[Rat]> = self
            .simplex_coords
            .iter()
            .map(|c| c.as_slice())
            .collect();
        kernel::altitude_sq(&refs, self.owner_vertex)
    }
}

/// Assembles the dual tessellation of a triangulation: pieces grouped by
/// owner, exact volume accounting, and the meeting graph. Volumes are
/// checked piece against simplex (each piece is exactly a `(d+1)`-th) and
/// globally against the torus volume.
pub fn build_dual(set: &PointSet, tri: &Triangulation) -> Result<DualTessellation> {
    let dom = &set.domain;
    let d = dom.dim;
    let n = set.len();

    let mut cells: Vec<DualCell> = (0..n)
        .map(|owner| DualCell {
            owner,
            pieces: Vec::new(),
            volume: Rat::zero(),
            reach_sq: Rat::zero(),
        })
        .collect();

    for (s, simplex) in tri.simplices.iter().enumerate() {
        let coords = simplex.coords(set);
        let refs: Vec<&[Rat]> = coords.iter().map(|c| c.as_slice()).collect();
        let vol = kernel::simplex_volume(&refs);
        for (vi, v) in simplex.vertices.iter().enumerate() {
            let offset: Point = v
                .shift
                .iter()
                .map(|&k| Rat::from_integer(BigInt::from(k)) * &dom.period)
                .collect();
            let translated: Vec<Point> = coords.iter().map(|c| kernel::sub(c, &offset)).collect();
            let mut piece = dual_piece(&translated, vi)?;
            piece.source = Some((s, v.shift.clone()));

            let piece_vol = polytope::volume_fulldim(&piece.vertices)?;
            if &piece_vol * rint(d as i64 + 1) != vol {
                return Err(GeomError::TessellationViolation(format!(
                    "piece volume {piece_vol} is not a (d+1)-th of simplex volume {vol}"
                )));
            }
            let cell = &mut cells[v.id];
            cell.volume += piece_vol;
            for pv in &piece.vertices {
                let r = kernel::dist_sq(pv, &set.points[v.id]);
                if r > cell.reach_sq {
                    cell.reach_sq = r;
                }
            }
            cell.pieces.push(piece);
        }
    }

    let mut total = Rat::zero();
    for cell in &cells {
        if cell.pieces.is_empty() {
            return Err(GeomError::TessellationViolation(format!(
                "point {} owns no simplex",
                cell.owner
            )));
        }
        total += &cell.volume;
    }
    let mut torus_vol = Rat::one();
    for _ in 0..d {
        torus_vol *= &dom.period;
    }
    if total != torus_vol {
        return Err(GeomError::TessellationViolation(format!(
            "cell volumes sum to {total}, torus volume is {torus_vol}"
        )));
    }

    let t = std::time::Instant::now();
    let adjacency = meeting_graph(set, &cells)?;
    crate::trace(|| format!("meeting graph: {:?}", t.elapsed()));
    Ok(DualTessellation { cells, adjacency })
}

/// Exact meeting graph: cells `i` and `j + shift * L` are adjacent iff some
/// piece of one touches some piece of the other. Candidate translates come
/// from the cells' reach bounds; most meetings are confirmed cheaply by a
/// shared subset-average vertex, the rest by exact hull distances.
fn meeting_graph(set: &PointSet, cells: &[DualCell]) -> Result<Vec<Vec<(usize, Vec<i64>)>>> {
    let dom = &set.domain;
    let n = cells.len();
    let mut adjacency: Vec<BTreeSet<(usize, Vec<i64>)>> = vec![BTreeSet::new(); n];

    let reach_up: Vec<Rat> = cells
        .iter()
        .map(|c| sqrt_upper(&c.reach_sq, 32))
        .collect();
    let r_max = reach_up
        .iter()
        .max()
        .cloned()
        .expect("tessellation has at least one cell");
    let grid = BucketGrid::build(dom, &set.points, &r_max.clone().max(Rat::one()));

    for i in 0..n {
        // cells can only meet when the site balls of their reaches overlap
        let query = &reach_up[i] + &r_max;
        for j in grid.near(&set.points[i], &query) {
            if j < i {
                continue;
            }
            let reach = &reach_up[i] + &reach_up[j];
            let bound = &reach * &reach;
            for (shift, _) in dom.lifts_within(&set.points[i], &set.points[j], &bound) {
                if i == j && shift.iter().all(|&k| k == 0) {
                    continue;
                }
                let offset: Point = shift
                    .iter()
                    .map(|&k| Rat::from_integer(BigInt::from(k)) * &dom.period)
                    .collect();
                if cells_meet(&cells[i], &cells[j], &offset) {
                    adjacency[i].insert((j, shift.clone()));
                    adjacency[j].insert((i, shift.iter().map(|&k| -k).collect()));
                }
            }
        }
    }
    Ok(adjacency.into_iter().map(|s| s.into_iter().collect()).collect())
}

/// Whether cell `b`, translated by `offset`, touches cell `a`.
fn cells_meet(a: &DualCell, b: &DualCell, offset: &Point) -> bool {
    let translated: Vec<Vec<Point>> = b
        .pieces
        .iter()
        .map(|p| p.vertices.iter().map(|v| kernel::add(v, offset)).collect())
        .collect();
    // Fast path: adjacent pieces share a subset-average vertex exactly.
    for pa in &a.pieces {
        for tb in &translated {
            if pa.vertices.iter().any(|v| tb.contains(v)) {
                return true;
            }
        }
    }
    for pa in &a.pieces {
        for tb in &translated {
            if bbox_gap(&pa.vertices, tb) {
                continue;
            }
            if polytope::dist_sq_hull_hull(&pa.vertices, tb).is_zero() {
                return true;
            }
        }
    }
    false
}

fn bbox_gap(a: &[Point], b: &[Point]) -> bool {
    let d = a[0].len();
    for axis in 0..d {
        let a_hi = a.iter().map(|p| &p[axis]).max().unwrap();
        let b_lo = b.iter().map(|p| &p[axis]).min().unwrap();
        if b_lo > a_hi {
            return true;
        }
        let b_hi = b.iter().map(|p| &p[axis]).max().unwrap();
        let a_lo = a.iter().map(|p| &p[axis]).min().unwrap();
        if a_lo > b_hi {
            return true;
        }
    }
    false
}

/// The squared capacity radius `(c2_eff M / (d+1))^2` is certified to
/// dominate `r_sq` before ball checks run.
fn check_radius_cap(set: &PointSet, cfg: &SliverConfig, m: &Rat, r_sq: &Rat) -> Result<()> {
    let d = set.domain.dim;
    let denom = rint(((d + 1) * (d + 1)) as i64);
    let cap = c2_sq(&cfg.c1_eff, d)?.scale(&(m * m / denom));
    if !cap.ge_rat(r_sq) {
        return Err(GeomError::Config(format!(
            "radius^2 {r_sq} exceeds the capacity bound"
        )));
    }
    Ok(())
}

/// Checks `B(site, r) contained in the cell` by the scaled-star route: each
/// piece contains its simplex shrunk towards the site by `1/(d+1)`, and the
/// site's altitude over every opposite facet exceeds `(d+1) r`, so the ball
/// lies inside the shrunk star. Random points of the ball corroborate by
/// direct membership.
pub fn capacity_check(
    set: &PointSet,
    cell: &DualCell,
    cfg: &SliverConfig,
    m: &Rat,
    r_sq: &Rat,
    samples: usize,
    seed: u64,
) -> Result<bool> {
    check_radius_cap(set, cfg, m, r_sq)?;
    let d = set.domain.dim;
    let site = &set.points[cell.owner];
    let shrink = rat(1, d as i64 + 1);
    let blow = rint(((d + 1) * (d + 1)) as i64);

    for piece in &cell.pieces {
        for v in &piece.simplex_coords {
            let scaled = kernel::add(site, &kernel::scale(&kernel::sub(v, site), &shrink));
            if !piece.facets.contains(&scaled) {
                return Ok(false);
            }
        }
        if piece.opposite_altitude_sq()? <= &blow * r_sq {
            return Ok(false);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_up = sqrt_upper(r_sq, 32);
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    while accepted < samples && attempts < samples * 20 {
        attempts += 1;
        let x: Point = (0..d)
            .map(|_| {
                let k = rng.gen_range(-(1i64 << 20)..=(1i64 << 20));
                rat(k, 1 << 20) * &r_up
            })
            .collect();
        let probe = kernel::add(site, &x);
        if kernel::dist_sq(&probe, site) > *r_sq {
            continue;
        }
        accepted += 1;
        if !cell.pieces.iter().any(|p| p.facets.contains(&probe)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Separation probing: random points of the torus list every cell translate
/// within distance `K`, which must never exceed `d+1` elements and must
/// always share a common point, witnessed by the barycenter of the sites.
#[derive(Debug, Clone)]
pub struct SeparationReport {
    pub probes: usize,
    pub max_meet: usize,
    pub witnessed: usize,
}

pub fn separation_check(
    set: &PointSet,
    dual: &DualTessellation,
    cfg: &SliverConfig,
    m: &Rat,
    k_sq: &Rat,
    probes: usize,
    seed: u64,
) -> Result<SeparationReport> {
    check_radius_cap(set, cfg, m, k_sq)?;
    let dom = &set.domain;
    let d = dom.dim;
    let k_up = sqrt_upper(k_sq, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_meet = 0usize;
    let mut witnessed = 0usize;

    for _ in 0..probes {
        let q: Point = (0..d)
            .map(|_| {
                let k = rng.gen_range(0..(1u64 << 20));
                Rat::new(BigInt::from(k), BigInt::one() << 20) * &dom.period
            })
            .collect();

        // Elements within K of q: (id, shift) with d(q, cell + shift L) < K.
        let mut near: Vec<(usize, Vec<i64>, Point)> = Vec::new();
        for (i, cell) in dual.cells.iter().enumerate() {
            let reach = sqrt_upper(&cell.reach_sq, 32) + &k_up;
            let bound = &reach * &reach;
            for (shift, _) in dom.lifts_within(&q, &set.points[i], &bound) {
                let offset: Point = shift
                    .iter()
                    .map(|&s| Rat::from_integer(BigInt::from(s)) * &dom.period)
                    .collect();
                let local = kernel::sub(&q, &offset);
                let dist = cell
                    .pieces
                    .iter()
                    .map(|p| polytope::dist_sq_point_hull(&local, &p.vertices))
                    .min()
                    .expect("cell has pieces");
                if dist < *k_sq {
                    near.push((i, shift, offset));
                }
            }
        }

        if near.is_empty() {
            return Err(GeomError::TessellationViolation(
                "probe point is far from every cell of a tiling".into(),
            ));
        }
        if near.len() > d + 1 {
            return Err(GeomError::TessellationViolation(format!(
                "{} cells within the separation radius of one point",
                near.len()
            )));
        }
        max_meet = max_meet.max(near.len());

        // Common point: the barycenter of the lifted sites lies in every
        // listed cell.
        let sites: Vec<Point> = near
            .iter()
            .map(|(i, _, offset)| kernel::add(&set.points[*i], offset))
            .collect();
        let site_refs: Vec<&[Rat]> = sites.iter().map(|s| s.as_slice()).collect();
        let z = kernel::centroid(&site_refs);
        for (i, _, offset) in &near {
            let local = kernel::sub(&z, offset);
            if !dual.cells[*i]
                .pieces
                .iter()
                .any(|p| p.facets.contains(&local))
            {
                return Err(GeomError::TessellationViolation(
                    "near cells have no common point at the site barycenter".into(),
                ));
            }
        }
        if near.len() >= 2 {
            witnessed += 1;
        }
    }
    Ok(SeparationReport {
        probes,
        max_meet,
        witnessed,
    })
}

/// Meeting structure report: degrees against the `10^d` cap, full
/// `(d+1)`-fold meetings cross-indexed with simplices, the exact gap
/// between a cell and the opposite facet of each of its simplices, and
/// sampled coverage of simplex neighborhoods by the incident cells.
#[derive(Debug, Clone)]
pub struct MeetReport {
    pub max_degree: usize,
    pub degree_cap: usize,
    pub full_meetings: usize,
    pub min_facet_gap_sq: Rat,
}

pub fn meet_structure(
    set: &PointSet,
    tri: &Triangulation,
    dual: &DualTessellation,
    cfg: &SliverConfig,
    m: &Rat,
    r_sq: &Rat,
    samples_per_simplex: usize,
    seed: u64,
) -> Result<MeetReport> {
    check_radius_cap(set, cfg, m, r_sq)?;
    let dom = &set.domain;
    let d = dom.dim;
    let degree_cap = 10usize.pow(d as u32);

    let mut max_degree = 0usize;
    for (i, adj) in dual.adjacency.iter().enumerate() {
        if adj.len() > degree_cap {
            return Err(GeomError::TessellationViolation(format!(
                "cell {i} meets {} others, cap is {degree_cap}",
                adj.len()
            )));
        }
        max_degree = max_degree.max(adj.len());
    }

    // Every adjacent pair must extend to a full meeting: some simplex holds
    // lifts of both owners at the observed relative shift.
    let mut pair_index: HashSet<(usize, usize, Vec<i64>)> = HashSet::new();
    for simplex in &tri.simplices {
        for a in &simplex.vertices {
            for b in &simplex.vertices {
                if a == b {
                    continue;
                }
                let rel: Vec<i64> = b.shift.iter().zip(&a.shift).map(|(x, y)| x - y).collect();
                pair_index.insert((a.id, b.id, rel));
            }
        }
    }
    for (i, adj) in dual.adjacency.iter().enumerate() {
        for (j, shift) in adj {
            if !pair_index.contains(&(i, *j, shift.clone())) {
                return Err(GeomError::TessellationViolation(format!(
                    "cells {i} and {j} meet without a common simplex"
                )));
            }
        }
    }

    // Full meetings, one per simplex: the centroid lies in the piece of
    // every vertex, distinct simplices give distinct meetings.
    let mut meeting_keys: BTreeSet<Vec<LPoint>> = BTreeSet::new();
    let mut min_gap: Option<Rat> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for (s, simplex) in tri.simplices.iter().enumerate() {
        let coords = simplex.coords(set);
        let refs: Vec<&[Rat]> = coords.iter().map(|c| c.as_slice()).collect();
        let z = kernel::centroid(&refs);
        meeting_keys.insert(simplex.vertices.clone());

        for (vi, v) in simplex.vertices.iter().enumerate() {
            let offset: Point = v
                .shift
                .iter()
                .map(|&k| Rat::from_integer(BigInt::from(k)) * &dom.period)
                .collect();
            let piece = dual.cells[v.id]
                .pieces
                .iter()
                .find(|p| p.source.as_ref() == Some(&(s, v.shift.clone())))
                .ok_or_else(|| {
                    GeomError::TessellationViolation("missing piece for simplex vertex".into())
                })?;
            if !piece.facets.contains(&kernel::sub(&z, &offset)) {
                return Err(GeomError::TessellationViolation(
                    "simplex centroid escapes a vertex piece".into(),
                ));
            }

            // Exact gap: the whole cell of this vertex keeps distance r
            // from the opposite facet of the simplex.
            let facet: Vec<Point> = coords
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != vi)
                .map(|(_, c)| c.clone())
                .collect();
            for p in &dual.cells[v.id].pieces {
                let translated: Vec<Point> =
                    p.vertices.iter().map(|pv| kernel::add(pv, &offset)).collect();
                let gap = polytope::dist_sq_hull_hull(&translated, &facet);
                if gap < *r_sq {
                    return Err(GeomError::TessellationViolation(format!(
                        "cell {} passes within the separation radius of an opposite facet",
                        v.id
                    )));
                }
                if min_gap.as_ref().map_or(true, |g| gap < *g) {
                    min_gap = Some(gap);
                }
            }
        }

        // Sampled coverage: points near the simplex lie in some vertex cell.
        let r_up = sqrt_upper(r_sq, 32);
        let boxes: Vec<(Rat, Rat)> = (0..d)
            .map(|axis| {
                let lo = coords.iter().map(|c| &c[axis]).min().unwrap() - &r_up;
                let hi = coords.iter().map(|c| &c[axis]).max().unwrap() + &r_up;
                (lo, hi)
            })
            .collect();
        let mut accepted = 0usize;
        let mut attempts = 0usize;
        while accepted < samples_per_simplex && attempts < samples_per_simplex * 40 {
            attempts += 1;
            let q: Point = boxes
                .iter()
                .map(|(lo, hi)| {
                    let k = rng.gen_range(0..(1u64 << 20));
                    lo + Rat::new(BigInt::from(k), BigInt::one() << 20) * (hi - lo)
                })
                .collect();
            if polytope::dist_sq_point_hull(&q, &coords) >= *r_sq {
                continue;
            }
            accepted += 1;
            let covered = simplex.vertices.iter().any(|v| {
                let offset: Point = v
                    .shift
                    .iter()
                    .map(|&k| Rat::from_integer(BigInt::from(k)) * &dom.period)
                    .collect();
                let local = kernel::sub(&q, &offset);
                dual.cells[v.id]
                    .pieces
                    .iter()
                    .any(|p| p.facets.contains(&local))
            });
            if !covered {
                return Err(GeomError::TessellationViolation(
                    "simplex neighborhood point escapes the incident cells".into(),
                ));
            }
        }
    }

    if meeting_keys.len() != tri.simplices.len() {
        return Err(GeomError::TessellationViolation(
            "distinct simplices produced identical meetings".into(),
        ));
    }

    Ok(MeetReport {
        max_degree,
        degree_cap,
        full_meetings: meeting_keys.len(),
        min_facet_gap_sq: min_gap.unwrap_or_else(Rat::zero),
    })
}

/// Monte Carlo volume of the `lnb`-neighborhood of a cell boundary, checked
/// against the analytic cap `10^{d^2} 2 lnb V_{d-1} (sqrt(5) M + lnb)^{d-1}`.
#[derive(Debug, Clone)]
pub struct BoundaryVolume {
    pub estimate: f64,
    pub sigma: f64,
    pub cap_lower: f64,
    pub within_cap: bool,
    pub hits: usize,
    pub samples: usize,
}

/// Certified lower bound on the boundary-volume cap; the estimate must stay
/// under this, which is stricter than the cap itself.
pub fn boundary_cap_lower(dim: usize, m: &Rat, lnb: &Rat) -> Result<Rat> {
    let lead = Rat::from_integer(BigInt::from(10u32).pow((dim * dim) as u32)) * rint(2) * lnb;
    let radius = sqrt_lower(&(rint(5) * m * m), 64) + lnb;
    Ok(match dim {
        1 => lead,
        2 => lead * rint(2) * radius,
        3 => lead * pi_interval(40).0 * &radius * &radius,
        d => return Err(GeomError::UnsupportedDimension(d)),
    })
}

/// The boundary of a cell is the union, over its pieces and the orderings
/// of each piece's non-owner vertices, of the hulls of the running averages
/// of the owner with the ordering's prefixes. That makes the hit test for
/// the neighborhood sampling exact.
pub fn boundary_volume_estimate(
    set: &PointSet,
    cell: &DualCell,
    m: &Rat,
    lnb: &Rat,
    samples: usize,
    seed: u64,
) -> Result<BoundaryVolume> {
    if !lnb.is_positive() {
        return Err(GeomError::Config("neighborhood radius must be positive".into()));
    }
    let d = set.domain.dim;
    let lnb_sq = lnb * lnb;

    let mut walls: Vec<Vec<Point>> = Vec::new();
    for piece in &cell.pieces {
        let p = piece.owner_point().clone();
        let others: Vec<Point> = piece
            .simplex_coords
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != piece.owner_vertex)
            .map(|(_, c)| c.clone())
            .collect();
        for perm in permutations(others.len()) {
            let mut wall = Vec::with_capacity(d);
            let mut sum = p.clone();
            for (k, &oi) in perm.iter().enumerate() {
                sum = kernel::add(&sum, &others[oi]);
                wall.push(kernel::scale(&sum, &rat(1, k as i64 + 2)));
            }
            walls.push(wall);
        }
    }

    let boxes: Vec<(Rat, Rat)> = (0..d)
        .map(|axis| {
            let lo = cell
                .pieces
                .iter()
                .flat_map(|p| p.vertices.iter().map(move |v| &v[axis]))
                .min()
                .unwrap()
                - lnb;
            let hi = cell
                .pieces
                .iter()
                .flat_map(|p| p.vertices.iter().map(move |v| &v[axis]))
                .max()
                .unwrap()
                + lnb;
            (lo, hi)
        })
        .collect();
    let mut box_vol = Rat::one();
    for (lo, hi) in &boxes {
        box_vol *= hi - lo;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let q: Point = boxes
            .iter()
            .map(|(lo, hi)| {
                let k = rng.gen_range(0..(1u64 << 20));
                lo + Rat::new(BigInt::from(k), BigInt::one() << 20) * (hi - lo)
            })
            .collect();
        let hit = walls
            .iter()
            .any(|w| polytope::dist_sq_point_hull(&q, w) < lnb_sq);
        if hit {
            hits += 1;
        }
    }

    let bf = rat_f64(&box_vol);
    let rate = hits as f64 / samples as f64;
    let estimate = bf * rate;
    let sigma = bf * (rate * (1.0 - rate) / samples as f64).sqrt();
    let cap_lower = rat_f64(&boundary_cap_lower(d, m, lnb)?);
    Ok(BoundaryVolume {
        estimate,
        sigma,
        cap_lower,
        within_cap: estimate + 3.0 * sigma <= cap_lower,
        hits,
        samples,
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut perm = rest.clone();
            perm.insert(pos, n - 1);
            out.push(perm);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointset::SetCert;
    use crate::torus::TorusDomain;
    use crate::triangulation::{triangulation, WeightFunction};

    fn pt(xs: &[i64]) -> Point {
        xs.iter().map(|&x| rint(x)).collect()
    }

    #[test]
    fn piece_on_a_segment() {
        let coords = vec![pt(&[0]), pt(&[4])];
        let piece = dual_piece(&coords, 0).unwrap();
        assert_eq!(piece.vertices, vec![pt(&[0]), pt(&[2])]);
        assert!(piece.facets.contains(&pt(&[1])));
        assert!(piece.facets.contains(&pt(&[2])));
        assert!(!piece.facets.contains(&pt(&[3])));
        assert!(!piece.facets.contains(&pt(&[-1])));
    }

    #[test]
    fn piece_on_a_right_triangle() {
        let coords = vec![pt(&[0, 0]), pt(&[3, 0]), pt(&[0, 3])];
        let piece = dual_piece(&coords, 0).unwrap();
        let expect: BTreeSet<Vec<Rat>> = [
            pt(&[0, 0]),
            vec![rat(3, 2), rint(0)],
            vec![rint(0), rat(3, 2)],
            pt(&[1, 1]),
        ]
        .into_iter()
        .collect();
        let got: BTreeSet<Vec<Rat>> = piece.vertices.iter().cloned().collect();
        assert_eq!(got, expect);
        // The barycenter of the simplex is the far corner of the piece.
        assert!(piece.facets.contains(&pt(&[1, 1])));
        assert_eq!(piece.facets.halves.len(), 4);
        assert_eq!(polytope::extreme_points(&piece.vertices).len(), 4);
        let vol = polytope::volume_fulldim(&piece.vertices).unwrap();
        assert_eq!(vol, rat(3, 2));

        // Each owner's piece has the same volume, a third of the simplex.
        for owner in 1..3 {
            let p = dual_piece(&coords, owner).unwrap();
            assert_eq!(polytope::volume_fulldim(&p.vertices).unwrap(), rat(3, 2));
        }
    }

    #[test]
    fn degenerate_simplex_is_rejected() {
        let coords = vec![pt(&[0, 0]), pt(&[1, 1]), pt(&[2, 2])];
        match dual_piece(&coords, 0) {
            Err(GeomError::DegenerateSimplex) => {}
            other => panic!("expected degenerate rejection, got {other:?}"),
        }
    }

    fn d1_lattice() -> (PointSet, WeightFunction) {
        let domain = TorusDomain::new(1, rint(8)).unwrap();
        let mut set = PointSet::lattice(domain, &rint(1)).unwrap();
        set.validate_and_certify(&rint(1), &rat(1, 4)).unwrap();
        let wf = WeightFunction::zero(set.len(), rat(3, 8));
        (set, wf)
    }

    #[test]
    fn dual_of_the_circle_lattice() {
        let (set, wf) = d1_lattice();
        let tri = triangulation(&set, &wf).unwrap();
        let dual = build_dual(&set, &tri).unwrap();
        assert_eq!(dual.cells.len(), 8);
        for cell in &dual.cells {
            // Interval of length one centered on the site.
            assert_eq!(cell.volume, rint(1));
            assert_eq!(cell.pieces.len(), 2);
            assert_eq!(cell.reach_sq, rat(1, 4));
        }
        for adj in &dual.adjacency {
            assert_eq!(adj.len(), 2);
        }
        let cfg = SliverConfig::desk();
        let m = rat(3, 8);
        let report = meet_structure(&set, &tri, &dual, &cfg, &m, &rat(1, 10000), 10, 3).unwrap();
        assert_eq!(report.max_degree, 2);
        assert_eq!(report.degree_cap, 10);
        assert_eq!(report.full_meetings, 8);
    }

    fn desk_setup() -> (PointSet, Rat, SliverConfig, Triangulation) {
        let domain = TorusDomain::new(2, rint(140)).unwrap();
        let mut set =
            PointSet::perturbed_lattice(domain, &rint(20), &rat(1, 2), 8, 5).unwrap();
        let (sep, _, _) = set.min_pair_dist_sq();
        let (cov, _) = set.covering_radius_sq();
        set.cert = Some(SetCert {
            sep_sq_lo: sep,
            cov_sq_hi: cov,
        });
        let m = rat(15, 2);
        let cfg = SliverConfig::desk();
        let bound = rint(20) * &m * &m;
        let (colors, count) = set.color_separated(&bound);
        let wf = crate::sliver::assign_weights(&set, &m, &cfg, &colors, count).unwrap();
        let tri = triangulation(&set, &wf).unwrap();
        (set, m, cfg, tri)
    }

    #[test]
    fn desk_dual_tiles_and_separates() {
        let (set, m, cfg, tri) = desk_setup();
        let dual = build_dual(&set, &tri).unwrap();
        assert_eq!(dual.cells.len(), set.len());

        // Adjacency is symmetric.
        for (i, adj) in dual.adjacency.iter().enumerate() {
            for (j, shift) in adj {
                let back: Vec<i64> = shift.iter().map(|&k| -k).collect();
                assert!(dual.adjacency[*j].contains(&(i, back)));
            }
        }

        // Exercised radius: the exact capacity bound for the desk profile.
        let r_sq = c2_sq(&cfg.c1_eff, 2).unwrap().plain * &m * &m / rint(9);
        for cell in dual.cells.iter().take(12) {
            assert!(capacity_check(&set, cell, &cfg, &m, &r_sq, 200, 11).unwrap());
        }

        let sep = separation_check(&set, &dual, &cfg, &m, &r_sq, 150, 17).unwrap();
        assert_eq!(sep.probes, 150);
        assert!(sep.max_meet >= 1 && sep.max_meet <= 3);

        let meet = meet_structure(&set, &tri, &dual, &cfg, &m, &r_sq, 8, 23).unwrap();
        assert!(meet.max_degree <= meet.degree_cap);
        assert!(meet.max_degree >= 6);
        assert_eq!(meet.full_meetings, tri.simplices.len());
        assert!(meet.min_facet_gap_sq >= r_sq);
    }

    #[test]
    fn desk_nesting_bounds_hold_exactly() {
        let (set, _, _, tri) = desk_setup();
        let dual = build_dual(&set, &tri).unwrap();
        let d = 2i64;
        for cell in dual.cells.iter().take(10) {
            let site = &set.points[cell.owner];
            for piece in &cell.pieces {
                // Upper nesting: the piece sits inside the simplex scaled
                // towards the site by d/(d+1).
                let scaled: Vec<Point> = piece
                    .simplex_coords
                    .iter()
                    .map(|c| {
                        kernel::add(site, &kernel::scale(&kernel::sub(c, site), &rat(d, d + 1)))
                    })
                    .collect();
                let hull = polytope::facets_fulldim(&scaled).unwrap();
                for v in &piece.vertices {
                    assert!(hull.contains(v));
                }
                // Lower nesting: the simplex scaled by 1/(d+1) sits inside
                // the piece.
                for c in &piece.simplex_coords {
                    let inner =
                        kernel::add(site, &kernel::scale(&kernel::sub(c, site), &rat(1, d + 1)));
                    assert!(piece.facets.contains(&inner));
                }
            }
        }
    }

    #[test]
    fn boundary_neighborhood_on_the_circle() {
        let (set, wf) = d1_lattice();
        let tri = triangulation(&set, &wf).unwrap();
        let dual = build_dual(&set, &tri).unwrap();
        let m = rat(3, 8);
        let est =
            boundary_volume_estimate(&set, &dual.cells[0], &m, &rat(1, 4), 4000, 7).unwrap();
        // Exact value: two intervals of length 1/2 around the midpoints.
        assert!((est.estimate - 1.0).abs() <= 4.0 * est.sigma + 1e-9);
        assert!(est.within_cap);
        assert_eq!(est.cap_lower, rat_f64(&rint(5)));
        let again =
            boundary_volume_estimate(&set, &dual.cells[0], &m, &rat(1, 4), 4000, 7).unwrap();
        assert_eq!(est.estimate, again.estimate);
    }

    #[test]
    fn desk_boundary_volume_stays_under_cap() {
        let (set, m, _, tri) = desk_setup();
        let dual = build_dual(&set, &tri).unwrap();
        let est = boundary_volume_estimate(&set, &dual.cells[0], &m, &rint(1), 3000, 29).unwrap();
        assert!(est.within_cap);
        assert!(est.estimate > 0.0);
        // Cap at d=2: 4*10^4 * (sqrt(5) M + 1), far above any real cell.
        assert!(est.cap_lower > 100_000.0);
        let other_seed =
            boundary_volume_estimate(&set, &dual.cells[0], &m, &rint(1), 3000, 31).unwrap();
        assert!((est.estimate - other_seed.estimate).abs()
            <= 3.0 * (est.sigma + other_seed.sigma) + 1e-9);
    }
}
