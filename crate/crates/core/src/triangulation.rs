//! Weighted Delaunay (regular) triangulations on the torus.
//!
//! The primary construction enumerates candidate `(d+1)`-subsets inside
//! bucketed neighborhoods whose radius comes from the scale bounds (orthoradius
//! and pairwise-distance caps), then keeps exactly the subsets with an empty
//! orthosphere. Cocircular degeneracies are grouped into polytopal cells by
//! exact orthosphere equality and resolved combinatorially by bottom-vertex
//! triangulation, never by symbolic perturbation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{GeomError, Result};
use crate::kernel::{self, Point};
use crate::num::{rat, sqrt_upper, Rat};
use crate::pointset::{PointSet, SetCert};
use crate::polytope;
use crate::torus::{canonical_vertices, BucketGrid, LPoint, TorusDomain};

/// Per-point weights for a regular triangulation at scale `M`. Admissible
/// weights lie in `[0, (M/3)^2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction {
    /// Weight of point id `i`; all lifts of a point share its weight.
    pub weights: Vec<Rat>,
    /// The scale `M` the weight range is tied to.
    pub scale: Rat,
}

impl WeightFunction {
    pub fn zero(n: usize, scale: Rat) -> Self {
        WeightFunction {
            weights: vec![Rat::zero(); n],
            scale,
        }
    }

    /// Upper end of the admissible weight range, `(M/3)^2`.
    pub fn max_weight(&self) -> Rat {
        let third = &self.scale / rat(3, 1);
        &third * &third
    }

    /// Checks length and that every weight lies in `[0, (M/3)^2]`.
    pub fn check(&self, n: usize) -> Result<()> {
        if self.weights.len() != n {
            return Err(GeomError::Config(format!(
                "weight vector has {} entries for {} points",
                self.weights.len(),
                n
            )));
        }
        if !self.scale.is_positive() {
            return Err(GeomError::Config("weight scale must be positive".into()));
        }
        let hi = self.max_weight();
        for (i, w) in self.weights.iter().enumerate() {
            if w.is_negative() || w > &hi {
                return Err(GeomError::InfeasibleWeight(i));
            }
        }
        Ok(())
    }
}

/// A sphere in power position: center `z` and power radius `u` (possibly
/// negative). A weighted point `(p, w)` is on it iff `d(z,p)^2 - u - w = 0`
/// and violates it iff that power is negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Orthosphere {
    pub z: Point,
    pub u: Rat,
}

/// The common orthosphere of up to `d+1` affinely independent weighted points,
/// with its center in their affine hull.
///
/// Preconditions are checked exactly: the balls `B(p_i, sqrt(w_i))` must be
/// pairwise disjoint, i.e. `t := d(p_i,p_j)^2 - w_i - w_j` is positive and
/// `t^2 > 4 w_i w_j` (the squared form of `d > sqrt(w_i) + sqrt(w_j)`).
pub fn orthosphere(coords: &[Point], weights: &[Rat]) -> Result<Orthosphere> {
    if coords.is_empty() || coords.len() != weights.len() {
        return Err(GeomError::Config(
            "orthosphere needs matching nonempty point and weight lists".into(),
        ));
    }
    let dim = coords[0].len();
    for c in coords {
        if c.len() != dim {
            return Err(GeomError::DimensionMismatch {
                expected: dim,
                got: c.len(),
            });
        }
    }
    if coords.len() > dim + 1 {
        return Err(GeomError::DegenerateSimplex);
    }
    for i in 0..coords.len() {
        for j in (i + 1)..coords.len() {
            let ds = kernel::dist_sq(&coords[i], &coords[j]);
            check_disjoint(&ds, &weights[i], &weights[j], i, j)?;
        }
    }
    let refs: Vec<&[Rat]> = coords.iter().map(|c| c.as_slice()).collect();
    let (z, u) = kernel::orthosphere(&refs, weights)?;
    Ok(Orthosphere { z, u })
}

fn check_disjoint(ds: &Rat, wi: &Rat, wj: &Rat, i: usize, j: usize) -> Result<()> {
    let t = ds - wi - wj;
    let rhs = rat(4, 1) * wi * wj;
    if !t.is_positive() || &t * &t <= rhs {
        return Err(GeomError::OverlappingBalls(i, j));
    }
    Ok(())
}

/// True iff no weighted point of the set lies strictly inside the sphere:
/// `d(z, p + kL)^2 - u - w(p) >= 0` for every point and every period lift.
pub fn is_empty(sphere: &Orthosphere, set: &PointSet, wf: &WeightFunction) -> bool {
    for (i, p) in set.points.iter().enumerate() {
        let budget = &sphere.u + &wf.weights[i];
        if budget.is_negative() {
            continue;
        }
        for (_, d2) in set.domain.lifts_within(&sphere.z, p, &budget) {
            if d2 < budget {
                return false;
            }
        }
    }
    true
}

/// A full-dimensional simplex on the torus, stored as canonical lifted
/// vertices (sorted by `(id, shift)`, first shift zero).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Simplex {
    pub vertices: Vec<LPoint>,
}

impl Simplex {
    pub fn new(vertices: Vec<LPoint>) -> Self {
        Simplex {
            vertices: canonical_vertices(vertices),
        }
    }

    /// Sorted vertex ids (a multiset when a point meets its own lift).
    pub fn ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.vertices.iter().map(|v| v.id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn coords(&self, set: &PointSet) -> Vec<Point> {
        self.vertices
            .iter()
            .map(|v| v.coords(&set.domain, &set.points))
            .collect()
    }
}

/// A cocircular cell: the convex hull of all lifted points sharing one common
/// empty orthosphere. Simplicial in the generic case.
#[derive(Debug, Clone)]
pub struct Cell {
    /// Canonical lifted vertices; the sphere center is stored in the same
    /// frame, so `d(z, v)^2 = u + w(v)` holds verbatim for every vertex.
    pub vertices: Vec<LPoint>,
    pub sphere: Orthosphere,
}

impl Cell {
    pub fn coords(&self, set: &PointSet) -> Vec<Point> {
        self.vertices
            .iter()
            .map(|v| v.coords(&set.domain, &set.points))
            .collect()
    }
}

/// The cell decomposition dual to a weight assignment: one cell per distinct
/// empty orthosphere, covering the torus exactly.
#[derive(Debug, Clone)]
pub struct RegularComplex {
    pub cells: Vec<Cell>,
}

/// A triangulation refining a regular complex: bottom-vertex simplices of each
/// cell, with `parent[i]` the cell index of simplex `i`.
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub complex: RegularComplex,
    pub simplices: Vec<Simplex>,
    pub parent: Vec<usize>,
}

impl Triangulation {
    pub fn sphere_of(&self, simplex: usize) -> &Orthosphere {
        &self.complex.cells[self.parent[simplex]].sphere
    }
}

/// Exact summary bounds over a triangulation, for invariant reporting.
#[derive(Debug, Clone)]
pub struct TriangulationStats {
    pub cell_count: usize,
    pub simplex_count: usize,
    /// Largest orthosphere power radius over all cells.
    pub max_u: Rat,
    /// Largest squared vertex-pair distance within any cell.
    pub max_pair_dist_sq: Rat,
    /// Smallest simplex volume.
    pub min_volume: Rat,
    /// Smallest squared vertex altitude over all simplices.
    pub min_altitude_sq: Rat,
}

pub(crate) fn cert_or_err(set: &PointSet) -> Result<&SetCert> {
    set.cert.as_ref().ok_or_else(|| {
        GeomError::Config("point set carries no separation/covering certificate".into())
    })
}

/// The simplices of the regular triangulation at scale `M`.
///
/// Requires a certificate establishing `M`-separation and `2M`-syndeticity and
/// the torus scale invariant. Candidates are pruned to orthoradius `u <= 4M^2`
/// and pairwise squared distances `<= 20 M^2`; accepted cells in fact satisfy
/// the strict versions of both bounds.
pub fn del_simplices(set: &PointSet, wf: &WeightFunction) -> Result<Vec<Simplex>> {
    let n = set.len();
    wf.check(n)?;
    set.domain.check_scale(&wf.scale)?;
    let cert = cert_or_err(set)?;
    let m_sq = &wf.scale * &wf.scale;
    if cert.sep_sq_lo < m_sq {
        return Err(GeomError::Config(format!(
            "certificate separation {} does not establish M-separation for M^2 = {}",
            cert.sep_sq_lo, m_sq
        )));
    }
    let four_m_sq = rat(4, 1) * &m_sq;
    if cert.cov_sq_hi > four_m_sq {
        return Err(GeomError::Config(format!(
            "certificate covering {} does not establish 2M-syndeticity for 4M^2 = {}",
            cert.cov_sq_hi, four_m_sq
        )));
    }
    let pair_sq = rat(20, 1) * &m_sq;
    // M-separation plus admissible weights already forces disjoint balls.
    enumerate_simplices(set, &wf.weights, &four_m_sq, &pair_sq, false)
}

/// The simplices of the regular triangulation with pruning derived from the
/// covering certificate instead of a separation scale.
///
/// An empty orthosphere's center has some site within covering distance, so
/// `u <= cov^2`; every vertex lies within `sqrt(u + w_max)` of the center, so
/// pairwise squared distances are at most `4 (cov^2 + w_max)`. This admits
/// sparse sets (no syndeticity needed) at the cost of wider enumeration, and
/// is the entry point for zero-weight comparisons against classical Delaunay.
pub fn del_simplices_covering(set: &PointSet, weights: &[Rat]) -> Result<Vec<Simplex>> {
    let n = set.len();
    if weights.len() != n {
        return Err(GeomError::Config(format!(
            "weight vector has {} entries for {} points",
            weights.len(),
            n
        )));
    }
    for (i, w) in weights.iter().enumerate() {
        if w.is_negative() {
            return Err(GeomError::InfeasibleWeight(i));
        }
    }
    let cert = cert_or_err(set)?;
    let w_max = weights.iter().max().cloned().unwrap_or_else(Rat::zero);
    let u_max = cert.cov_sq_hi.clone();
    let pair_sq = rat(4, 1) * (&u_max + &w_max);
    enumerate_simplices(set, weights, &u_max, &pair_sq, true)
}

/// Shared enumeration core: for each anchor lift `(a, 0)`, gather every
/// strictly lex-greater lift within the pairwise bound, test all `d`-subsets
/// whose pairs also satisfy the bound, and keep subsets whose orthosphere has
/// `u <= u_max` and is globally empty. Every canonical simplex is produced
/// exactly once, at the anchor equal to its lex-least vertex.
fn enumerate_simplices(
    set: &PointSet,
    weights: &[Rat],
    u_max: &Rat,
    pair_sq: &Rat,
    check_balls: bool,
) -> Result<Vec<Simplex>> {
    let dom = &set.domain;
    let pts = &set.points;
    let d = dom.dim;
    let n = pts.len();
    let w_max = weights.iter().max().cloned().unwrap_or_else(Rat::zero);
    let r_pair_up = sqrt_upper(pair_sq, 32);
    let grid = BucketGrid::build(dom, pts, &r_pair_up);
    let overlap_reach = rat(4, 1) * &w_max;
    let want_ball_checks = check_balls && w_max.is_positive();

    let done = std::sync::atomic::AtomicUsize::new(0);
    let per_anchor: Result<Vec<Vec<Simplex>>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            if k % 2000 == 0 {
                crate::trace(|| format!("enumerate: {}/{} anchors", k, n));
            }
            let p_a = &pts[a];
            let anchor = LPoint::base(a, d);
            let mut nb: Vec<(LPoint, Point)> = Vec::new();
            for b in grid.near(p_a, &r_pair_up) {
                if b < a {
                    continue;
                }
                for (shift, d2) in dom.lifts_within(p_a, &pts[b], pair_sq) {
                    let lp = LPoint { id: b, shift };
                    if lp <= anchor {
                        continue;
                    }
                    if want_ball_checks && d2 <= overlap_reach {
                        check_disjoint(&d2, &weights[a], &weights[b], a, b)?;
                    }
                    let c = lp.coords(dom, pts);
                    nb.push((lp, c));
                }
            }
            nb.sort_by(|x, y| x.0.cmp(&y.0));

            let k = nb.len();
            let mut adj = vec![vec![false; k]; k];
            for i in 0..k {
                for j in (i + 1)..k {
                    let ds = kernel::dist_sq(&nb[i].1, &nb[j].1);
                    if want_ball_checks && ds <= overlap_reach {
                        check_disjoint(&ds, &weights[nb[i].0.id], &weights[nb[j].0.id],
                            nb[i].0.id, nb[j].0.id)?;
                    }
                    let ok = ds <= *pair_sq;
                    adj[i][j] = ok;
                    adj[j][i] = ok;
                }
            }

            let mut out = Vec::new();
            let mut chosen: Vec<usize> = Vec::with_capacity(d);
            let mut visit = |subset: &[usize]| -> Result<()> {
                let mut coords: Vec<&[Rat]> = Vec::with_capacity(d + 1);
                let mut ws: Vec<Rat> = Vec::with_capacity(d + 1);
                coords.push(p_a.as_slice());
                ws.push(weights[a].clone());
                for &i in subset {
                    coords.push(nb[i].1.as_slice());
                    ws.push(weights[nb[i].0.id].clone());
                }
                let (z, u) = match kernel::orthosphere(&coords, &ws) {
                    Ok(zu) => zu,
                    Err(GeomError::DegenerateSimplex) => return Ok(()),
                    Err(e) => return Err(e),
                };
                if &u > u_max {
                    return Ok(());
                }
                if !empty_with_grid(dom, pts, weights, &grid, &z, &u, &w_max) {
                    return Ok(());
                }
                let mut vs = vec![anchor.clone()];
                for &i in subset {
                    vs.push(nb[i].0.clone());
                }
                out.push(Simplex::new(vs));
                Ok(())
            };
            subset_scan(&mut chosen, 0, d, &adj, &mut visit)?;
            Ok(out)
        })
        .collect();

    let mut simplices: Vec<Simplex> = per_anchor?.into_iter().flatten().collect();
    simplices.sort();
    debug_assert!(simplices.windows(2).all(|w| w[0] != w[1]));
    Ok(simplices)
}

/// Visits the index subsets of size `want` whose pairs are all adjacent.
fn subset_scan<F: FnMut(&[usize]) -> Result<()>>(
    chosen: &mut Vec<usize>,
    from: usize,
    want: usize,
    adj: &[Vec<bool>],
    f: &mut F,
) -> Result<()> {
    if chosen.len() == want {
        return f(chosen);
    }
    for i in from..adj.len() {
        if chosen.iter().any(|&c| !adj[c][i]) {
            continue;
        }
        chosen.push(i);
        subset_scan(chosen, i + 1, want, adj, f)?;
        chosen.pop();
    }
    Ok(())
}

fn empty_with_grid(
    dom: &TorusDomain,
    pts: &[Point],
    weights: &[Rat],
    grid: &BucketGrid,
    z: &Point,
    u: &Rat,
    w_max: &Rat,
) -> bool {
    let budget_max = u + w_max;
    if budget_max.is_negative() {
        return true;
    }
    let r_up = sqrt_upper(&budget_max, 32);
    for s in grid.near(z, &r_up) {
        let budget = u + &weights[s];
        if budget.is_negative() {
            continue;
        }
        for (_, d2) in dom.lifts_within(z, &pts[s], &budget) {
            if d2 < budget {
                return false;
            }
        }
    }
    true
}

/// Groups simplices by exact orthosphere equality into cells and verifies the
/// cell decomposition: every zero-power lift is a cell vertex, all vertices
/// are extreme, cells are full-dimensional, and total volume is `L^d`.
pub fn complex_from_simplices(
    set: &PointSet,
    weights: &[Rat],
    simplices: &[Simplex],
) -> Result<RegularComplex> {
    let dom = &set.domain;
    let pts = &set.points;
    let d = dom.dim;
    if simplices.is_empty() {
        return Err(GeomError::TessellationViolation(
            "no simplices to assemble into a complex".into(),
        ));
    }
    let w_max = weights.iter().max().cloned().unwrap_or_else(Rat::zero);

    let mut groups: BTreeMap<(Vec<Rat>, Rat), BTreeSet<LPoint>> = BTreeMap::new();
    for s in simplices {
        let coords = s.coords(set);
        let refs: Vec<&[Rat]> = coords.iter().map(|c| c.as_slice()).collect();
        let ws: Vec<Rat> = s.vertices.iter().map(|v| weights[v.id].clone()).collect();
        let (z, u) = kernel::orthosphere(&refs, &ws)?;
        let zc = dom.canonical(&z);
        let mut t = vec![0i64; d];
        for k in 0..d {
            let q = (&zc[k] - &z[k]) / &dom.period;
            debug_assert!(q.is_integer());
            t[k] = q.to_integer().to_i64().expect("translation fits i64");
        }
        let entry = groups.entry((zc, u)).or_default();
        for v in &s.vertices {
            let mut shift = v.shift.clone();
            for k in 0..d {
                shift[k] += t[k];
            }
            entry.insert(LPoint { id: v.id, shift });
        }
    }

    let u_hi = groups
        .keys()
        .map(|(_, u)| u)
        .max()
        .cloned()
        .unwrap_or_else(Rat::zero);
    let reach_hi = (&u_hi + &w_max).max(rat(1, 1));
    let grid = BucketGrid::build(dom, pts, &sqrt_upper(&reach_hi, 32));

    let group_list: Vec<((Vec<Rat>, Rat), BTreeSet<LPoint>)> = groups.into_iter().collect();
    let assembled: Result<Vec<Cell>> = group_list
        .into_par_iter()
        .map(|((zc, u), verts)| {
            let mut vs: Vec<LPoint> = verts.into_iter().collect();
            vs.sort();
            let base = vs[0].shift.clone();
            for v in &mut vs {
                for k in 0..d {
                    v.shift[k] -= base[k];
                }
            }
            let mut z = zc;
            for k in 0..d {
                z[k] = &z[k] - Rat::from_integer(base[k].into()) * &dom.period;
            }

            // Completeness: every lift at exactly zero power must be a vertex,
            // and no lift may have negative power.
            let reach = &u + &w_max;
            if !reach.is_negative() {
                let r_up = sqrt_upper(&reach, 32);
                for s in grid.near(&z, &r_up) {
                    let budget = &u + &weights[s];
                    if budget.is_negative() {
                        continue;
                    }
                    for (shift, d2) in dom.lifts_within(&z, &pts[s], &budget) {
                        if d2 < budget {
                            return Err(GeomError::TessellationViolation(format!(
                                "point {} strictly inside a cell orthosphere",
                                s
                            )));
                        }
                        let lp = LPoint { id: s, shift };
                        if d2 == budget && !vs.contains(&lp) {
                            return Err(GeomError::TessellationViolation(format!(
                                "zero-power lift of point {} missing from its cell",
                                s
                            )));
                        }
                    }
                }
            }

            let coords: Vec<Point> = vs.iter().map(|v| v.coords(dom, pts)).collect();
            if polytope::extreme_points(&coords).len() != coords.len() {
                return Err(GeomError::TessellationViolation(
                    "non-extreme vertex in a cell".into(),
                ));
            }
            Ok(Cell {
                vertices: vs,
                sphere: Orthosphere { z, u },
            })
        })
        .collect();
    let cells = assembled?;

    let mut total = Rat::zero();
    for cell in &cells {
        let coords = cell.coords(set);
        let vol = polytope::volume_fulldim(&coords)
            .map_err(|_| GeomError::TessellationViolation("cell not full-dimensional".into()))?;
        if !vol.is_positive() {
            return Err(GeomError::TessellationViolation(
                "cell with nonpositive volume".into(),
            ));
        }
        total += vol;
    }
    let mut ld = rat(1, 1);
    for _ in 0..d {
        ld *= &dom.period;
    }
    if total != ld {
        return Err(GeomError::TessellationViolation(format!(
            "cell volumes sum to {} instead of L^d = {}",
            total, ld
        )));
    }
    Ok(RegularComplex { cells })
}

/// The regular complex at scale `M`: `del_simplices` grouped into cells.
pub fn regular_complex(set: &PointSet, wf: &WeightFunction) -> Result<RegularComplex> {
    let simplices = del_simplices(set, wf)?;
    complex_from_simplices(set, &wf.weights, &simplices)
}

/// Bottom-vertex triangulation of a polytope given by its extreme points:
/// recursively cones the lexicographically least vertex over the facets that
/// miss it. Returns index tuples into `coords`.
pub fn bottom_vertex_triangulate(coords: &[Point]) -> Vec<Vec<usize>> {
    polytope::bvt(coords)
}

/// Bottom-vertex simplices of one cell, as canonical torus simplices.
pub fn triangulate_cell(set: &PointSet, cell: &Cell) -> Vec<Simplex> {
    let coords = cell.coords(set);
    bottom_vertex_triangulate(&coords)
        .into_iter()
        .map(|ix| Simplex::new(ix.into_iter().map(|i| cell.vertices[i].clone()).collect()))
        .collect()
}

/// The full triangulation at scale `M`: every cell bottom-vertex triangulated.
///
/// Verifies per-cell volume agreement, that every point id occurs as a vertex,
/// and that every `(d-1)`-face is shared by exactly two simplices.
pub fn triangulation(set: &PointSet, wf: &WeightFunction) -> Result<Triangulation> {
    let complex = regular_complex(set, wf)?;
    triangulation_of(set, complex)
}

/// As `triangulation`, for an already-assembled complex.
pub fn triangulation_of(set: &PointSet, complex: RegularComplex) -> Result<Triangulation> {
    let d = set.domain.dim;
    let mut simplices = Vec::new();
    let mut parent = Vec::new();
    for (ci, cell) in complex.cells.iter().enumerate() {
        let coords = cell.coords(set);
        let cell_vol = polytope::volume_fulldim(&coords)
            .map_err(|_| GeomError::TessellationViolation("cell not full-dimensional".into()))?;
        let mut bvt_vol = Rat::zero();
        for s in triangulate_cell(set, cell) {
            let sc = s.coords(set);
            let refs: Vec<&[Rat]> = sc.iter().map(|c| c.as_slice()).collect();
            let vol = kernel::simplex_volume(&refs);
            if !vol.is_positive() {
                return Err(GeomError::TriangulationViolation(
                    "degenerate bottom-vertex simplex".into(),
                ));
            }
            bvt_vol += vol;
            simplices.push(s);
            parent.push(ci);
        }
        if bvt_vol != cell_vol {
            return Err(GeomError::TriangulationViolation(
                "bottom-vertex simplices do not fill their cell".into(),
            ));
        }
    }

    let mut seen = vec![false; set.len()];
    for s in &simplices {
        for v in &s.vertices {
            seen[v.id] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|&b| !b) {
        return Err(GeomError::TriangulationViolation(format!(
            "point {} is not a vertex of any simplex",
            missing
        )));
    }

    // Closed torus: every (d-1)-face bounds exactly two full simplices.
    let mut face_count: HashMap<Vec<LPoint>, usize> = HashMap::new();
    for s in &simplices {
        for omit in 0..=d {
            let face: Vec<LPoint> = s
                .vertices
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != omit)
                .map(|(_, v)| v.clone())
                .collect();
            *face_count.entry(canonical_vertices(face)).or_insert(0) += 1;
        }
    }
    if let Some((_, &c)) = face_count.iter().find(|(_, &c)| c != 2) {
        return Err(GeomError::TriangulationViolation(format!(
            "a boundary face is shared by {} simplices instead of 2",
            c
        )));
    }

    Ok(Triangulation {
        complex,
        simplices,
        parent,
    })
}

/// Exact extremal statistics over all cells and simplices.
pub fn stats(tri: &Triangulation, set: &PointSet) -> TriangulationStats {
    let mut max_u = tri.complex.cells[0].sphere.u.clone();
    let mut max_pair = Rat::zero();
    for cell in &tri.complex.cells {
        if cell.sphere.u > max_u {
            max_u = cell.sphere.u.clone();
        }
        let coords = cell.coords(set);
        for i in 0..coords.len() {
            for j in (i + 1)..coords.len() {
                let ds = kernel::dist_sq(&coords[i], &coords[j]);
                if ds > max_pair {
                    max_pair = ds;
                }
            }
        }
    }
    let mut min_vol: Option<Rat> = None;
    let mut min_alt: Option<Rat> = None;
    for s in &tri.simplices {
        let sc = s.coords(set);
        let refs: Vec<&[Rat]> = sc.iter().map(|c| c.as_slice()).collect();
        let vol = kernel::simplex_volume(&refs);
        if min_vol.as_ref().map_or(true, |m| &vol < m) {
            min_vol = Some(vol);
        }
        for i in 0..refs.len() {
            let alt = kernel::altitude_sq(&refs, i).expect("nondegenerate simplex");
            if min_alt.as_ref().map_or(true, |m| &alt < m) {
                min_alt = Some(alt);
            }
        }
    }
    TriangulationStats {
        cell_count: tri.complex.cells.len(),
        simplex_count: tri.simplices.len(),
        max_u,
        max_pair_dist_sq: max_pair,
        min_volume: min_vol.expect("nonempty triangulation"),
        min_altitude_sq: min_alt.expect("nonempty triangulation"),
    }
}

/// Verifies the face-to-face property on every pair of cells that meet on the
/// torus: the geometric intersection of two cells (one possibly translated by
/// a period vector) equals the convex hull of their shared vertices. Returns
/// the number of meeting configurations checked.
pub fn verify_face_to_face(set: &PointSet, complex: &RegularComplex) -> Result<usize> {
    let dom = &set.domain;
    let cells = &complex.cells;
    let coords: Vec<Vec<Point>> = cells.iter().map(|c| c.coords(set)).collect();
    let systems: Vec<polytope::FacetSystem> = coords
        .iter()
        .map(|c| polytope::facets_fulldim(c))
        .collect::<Result<_>>()?;
    let reach: Vec<Rat> = cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            coords[i]
                .iter()
                .map(|p| kernel::dist_sq(&c.sphere.z, p))
                .max()
                .expect("nonempty cell")
        })
        .collect();

    let mut pairs = 0usize;
    for i in 0..cells.len() {
        for j in i..cells.len() {
            let thresh = sqrt_upper(&reach[i], 32) + sqrt_upper(&reach[j], 32);
            let thresh_sq = &thresh * &thresh;
            for (t, _) in dom.lifts_within(&cells[i].sphere.z, &cells[j].sphere.z, &thresh_sq) {
                if i == j && t.iter().all(|&k| k == 0) {
                    continue;
                }
                let moved: BTreeSet<LPoint> = cells[j]
                    .vertices
                    .iter()
                    .map(|v| {
                        let mut shift = v.shift.clone();
                        for k in 0..dom.dim {
                            shift[k] += t[k];
                        }
                        LPoint { id: v.id, shift }
                    })
                    .collect();
                let moved_coords: Vec<Point> =
                    moved.iter().map(|v| v.coords(dom, &set.points)).collect();
                let sys_j = polytope::facets_fulldim(&moved_coords)?;
                let inter = polytope::intersection_vertices(&[&systems[i], &sys_j], dom.dim);
                let mut shared_coords: Vec<Point> = cells[i]
                    .vertices
                    .iter()
                    .filter(|v| moved.contains(*v))
                    .map(|v| v.coords(dom, &set.points))
                    .collect();
                shared_coords.sort_by(|a, b| kernel::lex_cmp(a, b));
                let mut inter_sorted = inter;
                inter_sorted.sort_by(|a, b| kernel::lex_cmp(a, b));
                if inter_sorted != shared_coords {
                    return Err(GeomError::TessellationViolation(format!(
                        "cells {} and {} do not meet face-to-face",
                        i, j
                    )));
                }
                if !shared_coords.is_empty() {
                    pairs += 1;
                }
            }
        }
    }
    Ok(pairs)
}
