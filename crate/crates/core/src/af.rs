//! Combinatorics of the boundary hierarchy over a refinement tower.
//!
//! Every base point is assigned an ordered tuple of tiles around it, one
//! tile per slot, so that each tile of the tower carries its fair share of
//! tuples.  Pushing a tuple one level up through the parent map, in a way
//! that keeps the leading entries canonical, yields a chain of coarser and
//! coarser tuples; grouping points by the chain value at each level gives a
//! family of equivalence relations whose classes track how walls between
//! aggregated cells persist under coarsening.  The module builds the
//! assignment, the push-up maps, the boundary sets, and the relations, and
//! checks the structural laws that tie them together.
//!
//! Everything here is exact: tile membership, wall contacts, and tuple
//! admissibility are decided with rational arithmetic on the same convex
//! pieces the tower itself is made of.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use num_traits::Zero;

use crate::error::{GeomError, Result};
use crate::hierarchy::{
    region_of, shift_point, star_member_cell, translate_system, Hierarchy,
};
use crate::kernel::{self, Point};
use crate::num::{sqrt_upper, Rat};
use crate::polytope::{
    dist_sq_hull_hull, dist_sq_point_hull, intersection_vertices, FacetSystem,
};
use crate::torus::BucketGrid;

/// Positioned tile: a cell index together with the period shift that places
/// one concrete copy of it on the covering space.
pub type Tile = (usize, Vec<i64>);

fn add_shift(a: &[i64], b: &[i64]) -> Vec<i64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub_shift(a: &[i64], b: &[i64]) -> Vec<i64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Ordered tuple of positioned tiles of one level, full length `d + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TupleXi {
    pub level: usize,
    pub entries: Vec<Tile>,
}

impl TupleXi {
    pub fn translated(&self, v: &[i64]) -> TupleXi {
        TupleXi {
            level: self.level,
            entries: self
                .entries
                .iter()
                .map(|(c, s)| (*c, add_shift(s, v)))
                .collect(),
        }
    }

    /// Shift-normal form: the first entry is moved to the zero copy and the
    /// removed shift is returned, so `self == canon.translated(&delta)`.
    pub fn canonical(&self) -> (TupleXi, Vec<i64>) {
        let delta = self.entries[0].1.clone();
        let neg: Vec<i64> = delta.iter().map(|x| -x).collect();
        (self.translated(&neg), delta)
    }
}

/// Act by a permutation of slots: entry `i` of the result is entry
/// `sigma^{-1}(i)` of the input.  `sigma` is given in one-line notation on
/// `0..len`, as the forward map of slots.
pub fn permute_tuple(xi: &TupleXi, sigma: &[usize]) -> TupleXi {
    let mut entries = vec![(0usize, Vec::new()); xi.entries.len()];
    for (i, e) in xi.entries.iter().enumerate() {
        entries[sigma[i]] = e.clone();
    }
    TupleXi {
        level: xi.level,
        entries,
    }
}

/// All permutations of `0..k` in a deterministic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for sub in permutations(k - 1) {
        for pos in 0..k {
            let mut p = sub.clone();
            p.insert(pos, k - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

/// A meeting family: the tiles of one simplex of a level, together with a
/// point lying in every one of their aggregated cells.
#[derive(Debug, Clone)]
pub struct MeetSet {
    pub tiles: Vec<Tile>,
    pub witness: Point,
}

struct LevelMeets {
    meets: Vec<MeetSet>,
    /// cell id -> list of (meet index, shift of that cell's entry there).
    by_cell: HashMap<usize, Vec<(usize, Vec<i64>)>>,
}

/// Per-point tuple assignment at the base level.
#[derive(Debug)]
pub struct ThetaData {
    /// Tuple of each base point, positioned at the point's own copy.
    pub assignments: Vec<TupleXi>,
    /// Base points of each level-0 cell, in local lexicographic order.
    pub per_cell_points: Vec<Vec<usize>>,
    /// Canonical tuples of each level-0 cell, in tuple order.
    pub per_cell_tuples: Vec<Vec<TupleXi>>,
}

/// Boundary sets indexed by tuple length and level: `sets[n - 1][l]` holds
/// the base points whose assigned tuple keeps its first `n` entries in
/// pairwise distinct cells at every level `1..=l`.
#[derive(Debug)]
pub struct BoundarySets {
    pub sets: Vec<Vec<BTreeSet<usize>>>,
}

impl BoundarySets {
    pub fn b(&self, n: usize, level: usize) -> &BTreeSet<usize> {
        &self.sets[n - 1][level]
    }
}

/// Round-robin block of one parent: its interior children in tile order and
/// the canonical tuples they are distributed over.
#[derive(Debug)]
pub struct ABlock {
    pub tiles: Vec<Tile>,
    pub zetas: Vec<TupleXi>,
    pub assign: Vec<usize>,
    index_of: HashMap<usize, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    /// Classes of the iterated push-up chain.
    Chain,
    /// Classes of the unordered ancestor set of the leading entries.
    Ancestors,
}

/// One partition of the member points, with bookkeeping against the
/// previous level.
#[derive(Debug)]
pub struct LevelPartition {
    pub level: usize,
    /// Classes as sorted member lists, ordered by smallest member.
    pub classes: Vec<Vec<usize>>,
    pub class_of: HashMap<usize, usize>,
    /// Pairs of previous-level representatives joined at this level.
    pub merges: Vec<(usize, usize)>,
    /// True when no previous-level class was split apart.
    pub monotone: bool,
}

#[derive(Debug)]
pub struct EquivRelation {
    pub n: usize,
    pub kind: RelationKind,
    pub members: Vec<usize>,
    pub levels: Vec<LevelPartition>,
}

impl EquivRelation {
    pub fn monotone(&self) -> bool {
        self.levels.iter().all(|lp| lp.monotone)
    }
}

/// Does every class of `fine` sit inside a single class of `coarse`?
/// Members of `fine` must all be members of `coarse`.
pub fn refines(fine: &LevelPartition, coarse: &LevelPartition) -> bool {
    fine.classes.iter().all(|class| {
        let mut target: Option<usize> = None;
        class.iter().all(|p| match coarse.class_of.get(p) {
            None => false,
            Some(&c) => match target {
                None => {
                    target = Some(c);
                    true
                }
                Some(t) => t == c,
            },
        })
    })
}

/// Census of one chain class against the wall it tracks.
#[derive(Debug)]
pub struct ClassThinness {
    pub zeta: TupleXi,
    pub size: usize,
    /// Members still keeping two distinct parents one level up.
    pub boundary_overlap: usize,
    /// Smallest interior-point count over the tiles feeding the class.
    pub interior_floor: usize,
    /// Boundary census of the parent cell the class is keyed to.
    pub wall_count: usize,
    pub ok_lower: bool,
    pub ok_upper: bool,
}

#[derive(Debug)]
pub struct ThinnessReport {
    pub level: usize,
    pub classes: Vec<ClassThinness>,
    pub all_ok: bool,
    /// Largest boundary overlap over class size, as a fraction.
    pub worst_ratio: (usize, usize),
}

/// Literal evaluation of the structural laws at one level, on the finite
/// tower as built.  `conclusive` records whether the tower was deep enough
/// for the laws that only stabilise at saturation.
#[derive(Debug)]
pub struct StructureReport {
    pub n: usize,
    pub level: usize,
    pub conclusive: bool,
    pub partition_ok: bool,
    pub image_law_ok: bool,
    pub collapse_law_ok: bool,
    pub inside_next_ok: Option<bool>,
    pub class_count: usize,
    pub single_class: bool,
    pub details: Vec<String>,
}

/// One convex piece of an aggregated cell, with absolute coordinates and
/// cached axis bounds.
struct RegionPiece {
    sys: FacetSystem,
    verts: Vec<Point>,
    lo: Point,
    hi: Point,
}

fn bbox_of(verts: &[Point]) -> (Point, Point) {
    let dim = verts[0].len();
    let mut lo = verts[0].clone();
    let mut hi = verts[0].clone();
    for v in verts {
        for i in 0..dim {
            if v[i] < lo[i] {
                lo[i] = v[i].clone();
            }
            if v[i] > hi[i] {
                hi[i] = v[i].clone();
            }
        }
    }
    (lo, hi)
}

fn boxes_touch(alo: &Point, ahi: &Point, blo: &Point, bhi: &Point) -> bool {
    alo.iter()
        .zip(ahi)
        .zip(blo.iter().zip(bhi))
        .all(|((al, ah), (bl, bh))| al <= bh && bl <= ah)
}

type Cached<T> = RefCell<Option<std::result::Result<Rc<T>, String>>>;

/// Combinatorial context over a built tower.  All maps are computed lazily
/// and memoised; failures are remembered so repeated queries stay cheap.
pub struct AfContext<'a> {
    pub h: &'a Hierarchy,
    meets: Vec<LevelMeets>,
    base_grid: BucketGrid,
    owner: Cached<Vec<Tile>>,
    theta: Cached<ThetaData>,
    bsets: RefCell<Option<Rc<BoundarySets>>>,
    regions: RefCell<HashMap<(usize, usize), Rc<Vec<RegionPiece>>>>,
    ablocks: RefCell<HashMap<(usize, usize), std::result::Result<Rc<ABlock>, String>>>,
    wall_counts: RefCell<HashMap<(usize, usize), usize>>,
    interior_counts: RefCell<HashMap<(usize, usize), usize>>,
    nsets: RefCell<HashMap<(usize, usize, Vec<Tile>), Rc<Vec<Tile>>>>,
    jcache: RefCell<HashMap<(usize, usize, Vec<Tile>), Rc<TupleXi>>>,
    relations: RefCell<HashMap<(usize, u8), Rc<EquivRelation>>>,
}

impl<'a> AfContext<'a> {
    pub fn new(h: &'a Hierarchy) -> Result<AfContext<'a>> {
        let dim = h.base.domain.dim;
        let mut meets = Vec::with_capacity(h.levels.len());
        for lv in &h.levels {
            let mut sets: Vec<MeetSet> = Vec::with_capacity(lv.tri.simplices.len());
            let mut by_cell: HashMap<usize, Vec<(usize, Vec<i64>)>> = HashMap::new();
            for (si, s) in lv.tri.simplices.iter().enumerate() {
                if s.vertices.len() != dim + 1 {
                    return Err(GeomError::AggregationViolation(format!(
                        "level {} simplex {} joins {} cells; meeting families \
                         of more than {} tiles are outside the model",
                        lv.index,
                        si,
                        s.vertices.len(),
                        dim + 1
                    )));
                }
                let tiles: Vec<Tile> =
                    s.vertices.iter().map(|v| (v.id, v.shift.clone())).collect();
                let mut ids: Vec<usize> = tiles.iter().map(|t| t.0).collect();
                ids.sort_unstable();
                ids.dedup();
                if ids.len() != tiles.len() {
                    return Err(GeomError::AggregationViolation(format!(
                        "level {} simplex {} meets two copies of one cell",
                        lv.index, si
                    )));
                }
                let witness = match lv.witnesses.get(si).and_then(|w| w.as_ref()) {
                    Some(w) => w.clone(),
                    None => {
                        return Err(GeomError::AggregationViolation(format!(
                            "level {} simplex {} has no meeting witness",
                            lv.index, si
                        )))
                    }
                };
                for t in &tiles {
                    by_cell
                        .entry(t.0)
                        .or_default()
                        .push((sets.len(), t.1.clone()));
                }
                sets.push(MeetSet { tiles, witness });
            }
            meets.push(LevelMeets {
                meets: sets,
                by_cell,
            });
        }
        let base_grid =
            BucketGrid::build(&h.base.domain, &h.base.points, &h.levels[0].m);
        Ok(AfContext {
            h,
            meets,
            base_grid,
            owner: RefCell::new(None),
            theta: RefCell::new(None),
            bsets: RefCell::new(None),
            regions: RefCell::new(HashMap::new()),
            ablocks: RefCell::new(HashMap::new()),
            wall_counts: RefCell::new(HashMap::new()),
            interior_counts: RefCell::new(HashMap::new()),
            nsets: RefCell::new(HashMap::new()),
            jcache: RefCell::new(HashMap::new()),
            relations: RefCell::new(HashMap::new()),
        })
    }

    pub fn dim(&self) -> usize {
        self.h.base.domain.dim
    }

    pub fn top(&self) -> usize {
        self.h.levels.len() - 1
    }

    pub fn meet_count(&self, level: usize) -> usize {
        self.meets[level].meets.len()
    }

    pub fn meet(&self, level: usize, idx: usize) -> &MeetSet {
        &self.meets[level].meets[idx]
    }

    /// Site of the positioned tile on the covering space.
    pub fn marker(&self, level: usize, t: &Tile) -> Point {
        let lv = &self.h.levels[level];
        kernel::add(
            &lv.set.points[t.0],
            &shift_point(&self.h.base.domain, &t.1),
        )
    }

    pub fn tile_cmp(&self, level: usize, a: &Tile, b: &Tile) -> Ordering {
        kernel::lex_cmp(&self.marker(level, a), &self.marker(level, b))
    }

    pub fn tuple_cmp(&self, a: &TupleXi, b: &TupleXi) -> Ordering {
        debug_assert_eq!(a.level, b.level);
        for (x, y) in a.entries.iter().zip(&b.entries) {
            match self.tile_cmp(a.level, x, y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }

    /// Closed neighbourhood: the tile itself plus every tile meeting it.
    pub fn neighborhood(&self, level: usize, t: &Tile) -> Vec<Tile> {
        let lv = &self.h.levels[level];
        let mut out = vec![t.clone()];
        for (j, w) in &lv.agg_adjacency[t.0] {
            out.push((*j, add_shift(&t.1, w)));
        }
        out
    }

    /// Positioned parent of a positioned tile.
    pub fn ancestor(&self, level: usize, t: &Tile) -> Tile {
        let parents = self.h.levels[level + 1]
            .parent_of
            .as_ref()
            .expect("levels above 0 carry a parent map");
        let (c, u) = &parents[t.0];
        (*c, add_shift(u, &t.1))
    }

    /// Distinctness of the leading entries' ancestors at levels
    /// `xi.level + 1 ..= lcap`.
    fn distinct_up_to(&self, xi: &TupleXi, n: usize, lcap: usize) -> bool {
        if n <= 1 {
            return true;
        }
        let mut cur: Vec<Tile> = xi.entries[..n].to_vec();
        let stop = lcap.min(self.top());
        let mut l = xi.level;
        while l < stop {
            cur = cur.iter().map(|t| self.ancestor(l, t)).collect();
            let mut ids: Vec<usize> = cur.iter().map(|t| t.0).collect();
            ids.sort_unstable();
            ids.dedup();
            // Two copies of one cell would mean the tuple wrapped the torus;
            // scales are guarded against that, so treat it as a collision.
            if ids.len() != n {
                return false;
            }
            l += 1;
        }
        true
    }

    /// Membership in the distinct-ancestor family of length `n`.
    pub fn in_family(&self, xi: &TupleXi, n: usize) -> bool {
        self.distinct_up_to(xi, n, self.top())
    }

    /// All ordered tuples of one level arising from its meeting families,
    /// filtered to the distinct-ancestor family of length `n`.
    pub fn tuples_level(&self, level: usize, n: usize) -> Vec<TupleXi> {
        let k = self.dim() + 1;
        let perms = permutations(k);
        let mut out = Vec::new();
        for m in &self.meets[level].meets {
            for perm in &perms {
                let xi = TupleXi {
                    level,
                    entries: perm.iter().map(|&i| m.tiles[i].clone()).collect(),
                };
                let (canon, _) = xi.canonical();
                if self.in_family(&canon, n) {
                    out.push(canon);
                }
            }
        }
        out.sort_by(|a, b| self.tuple_cmp(a, b));
        out.dedup();
        out
    }

    /// Convex pieces of the aggregated cell, absolute coordinates cached.
    fn region_pieces(&self, level: usize, cell: usize) -> Rc<Vec<RegionPiece>> {
        if let Some(r) = self.regions.borrow().get(&(level, cell)) {
            return Rc::clone(r);
        }
        let slice = &self.h.levels[..=level];
        let mut out = Vec::new();
        for (p, off) in region_of(slice, level, cell) {
            let sys = translate_system(&p.facets, &off);
            let verts: Vec<Point> =
                p.vertices.iter().map(|v| kernel::add(v, &off)).collect();
            let (lo, hi) = bbox_of(&verts);
            out.push(RegionPiece {
                sys,
                verts,
                lo,
                hi,
            });
        }
        let rc = Rc::new(out);
        self.regions
            .borrow_mut()
            .insert((level, cell), Rc::clone(&rc));
        rc
    }

    /// Whether the closed region of tile `t` at `level` contains `x`.
    pub fn region_has_point(&self, level: usize, t: &Tile, x: &Point) -> bool {
        let off = shift_point(&self.h.base.domain, &t.1);
        let local = kernel::sub(x, &off);
        self.region_pieces(level, t.0)
            .iter()
            .any(|p| p.sys.contains(&local))
    }

    /// Owner tile of every base point: a level-0 cell whose region holds the
    /// point, ties broken towards the smaller site so walls count once.
    pub fn owner(&self) -> Result<Rc<Vec<Tile>>> {
        if let Some(r) = self.owner.borrow().as_ref() {
            return r
                .clone()
                .map_err(GeomError::AggregationViolation);
        }
        let res = self.compute_owner();
        let stored = match &res {
            Ok(rc) => Ok(Rc::clone(rc)),
            Err(msg) => Err(msg.clone()),
        };
        *self.owner.borrow_mut() = Some(stored);
        res.map_err(GeomError::AggregationViolation)
    }

    fn compute_owner(&self) -> std::result::Result<Rc<Vec<Tile>>, String> {
        let lv0 = &self.h.levels[0];
        let domain = &self.h.base.domain;
        let grid = BucketGrid::build(domain, &lv0.set.points, &lv0.m);
        let rmax = lv0
            .reach_sq
            .iter()
            .cloned()
            .fold(Rat::zero(), |a, b| if b > a { b } else { a });
        let radius = sqrt_upper(&rmax, 64);
        let mut owners = Vec::with_capacity(self.h.base.len());
        for p in &self.h.base.points {
            let mut holding: Vec<Tile> = Vec::new();
            for c in grid.near(p, &radius) {
                for (u, _) in
                    domain.lifts_within(&lv0.set.points[c], p, &lv0.reach_sq[c])
                {
                    // lift of the site near the point; the point sits in the
                    // copy of the cell shifted the opposite way
                    let neg: Vec<i64> = u.iter().map(|x| -x).collect();
                    let local =
                        kernel::sub(p, &shift_point(domain, &neg));
                    if star_member_cell(&lv0.dual.cells[c], &local) {
                        holding.push((c, neg.clone()));
                    }
                }
            }
            if holding.is_empty() {
                return Err(format!(
                    "base point {:?} lies in no level-0 cell",
                    p.iter().map(crate::num::rat_to_string).collect::<Vec<_>>()
                ));
            }
            holding.sort_by(|a, b| self.tile_cmp(0, a, b));
            holding.dedup();
            owners.push(holding[0].clone());
        }
        Ok(Rc::new(owners))
    }

    /// Canonical tuples of one cell: every ordering of every meeting family
    /// through the cell, aligned so the cell sits first at its zero copy.
    pub fn cell_tuples(&self, level: usize, cell: usize) -> Vec<TupleXi> {
        let lm = &self.meets[level];
        let mut out = Vec::new();
        if let Some(rows) = lm.by_cell.get(&cell) {
            for (mi, w0) in rows {
                let m = &lm.meets[*mi];
                let tiles: Vec<Tile> = m
                    .tiles
                    .iter()
                    .map(|(id, s)| (*id, sub_shift(s, w0)))
                    .collect();
                let anchor = tiles
                    .iter()
                    .position(|t| t.0 == cell && t.1.iter().all(|x| *x == 0))
                    .expect("aligned family contains the cell at its zero copy");
                let rest: Vec<usize> =
                    (0..tiles.len()).filter(|k| *k != anchor).collect();
                for perm in permutations(rest.len()) {
                    let mut entries = vec![tiles[anchor].clone()];
                    entries.extend(perm.iter().map(|&k| tiles[rest[k]].clone()));
                    out.push(TupleXi { level, entries });
                }
            }
        }
        out.sort_by(|a, b| self.tuple_cmp(a, b));
        out
    }

    fn theta_data(&self) -> Result<Rc<ThetaData>> {
        if let Some(r) = self.theta.borrow().as_ref() {
            return r.clone().map_err(|detail| GeomError::CapacityShortfall {
                level: 0,
                detail,
            });
        }
        // surface owner failures under their own kind before capacity ones
        let owner = self.owner()?;
        let res = self.compute_theta(&owner);
        let stored = match &res {
            Ok(rc) => Ok(Rc::clone(rc)),
            Err(msg) => Err(msg.clone()),
        };
        *self.theta.borrow_mut() = Some(stored);
        res.map_err(|detail| GeomError::CapacityShortfall { level: 0, detail })
    }

    fn compute_theta(
        &self,
        owner: &[Tile],
    ) -> std::result::Result<Rc<ThetaData>, String> {
        let lv0 = &self.h.levels[0];
        let domain = &self.h.base.domain;
        let mut per_cell: Vec<Vec<usize>> = vec![Vec::new(); lv0.set.len()];
        for (p, (c, _)) in owner.iter().enumerate() {
            per_cell[*c].push(p);
        }
        // local order inside each cell: position relative to the owning copy
        for pts in per_cell.iter_mut() {
            pts.sort_by(|&a, &b| {
                let la = kernel::sub(
                    &self.h.base.points[a],
                    &shift_point(domain, &owner[a].1),
                );
                let lb = kernel::sub(
                    &self.h.base.points[b],
                    &shift_point(domain, &owner[b].1),
                );
                kernel::lex_cmp(&la, &lb)
            });
        }
        let mut tuples_at: Vec<Vec<TupleXi>> = Vec::with_capacity(lv0.set.len());
        for c in 0..lv0.set.len() {
            tuples_at.push(self.cell_tuples(0, c));
        }
        let mut short: Vec<String> = Vec::new();
        for c in 0..lv0.set.len() {
            if per_cell[c].len() < tuples_at[c].len() {
                short.push(format!(
                    "cell {} holds {} points for {} tuples",
                    c,
                    per_cell[c].len(),
                    tuples_at[c].len()
                ));
            }
        }
        if !short.is_empty() {
            let head = short[..short.len().min(6)].join("; ");
            return Err(format!(
                "{} of {} cells cannot host their tuples: {}",
                short.len(),
                lv0.set.len(),
                head
            ));
        }
        let dim = self.dim();
        let zero = TupleXi {
            level: 0,
            entries: vec![(0, vec![0; dim]); dim + 1],
        };
        let mut assignments = vec![zero; self.h.base.len()];
        for c in 0..lv0.set.len() {
            let k = tuples_at[c].len();
            if k == 0 {
                return Err(format!("cell {c} sits in no meeting family"));
            }
            for (rank, &p) in per_cell[c].iter().enumerate() {
                assignments[p] = tuples_at[c][rank % k].translated(&owner[p].1);
            }
        }
        Ok(Rc::new(ThetaData {
            assignments,
            per_cell_points: per_cell,
            per_cell_tuples: tuples_at,
        }))
    }

    /// Tuple assigned to a base point, positioned at the point's copy.
    pub fn theta(&self, p: usize) -> Result<TupleXi> {
        Ok(self.theta_data()?.assignments[p].clone())
    }

    pub fn theta_table(&self) -> Result<Rc<ThetaData>> {
        self.theta_data()
    }

    pub fn boundary_sets(&self) -> Result<Rc<BoundarySets>> {
        if let Some(r) = self.bsets.borrow().as_ref() {
            return Ok(Rc::clone(r));
        }
        let th = self.theta_data()?;
        let top = self.top();
        let kmax = self.dim() + 1;
        let mut sets = vec![vec![BTreeSet::new(); top + 1]; kmax];
        for p in 0..self.h.base.len() {
            let xi = &th.assignments[p];
            for n in 1..=kmax {
                for l in 0..=top {
                    if self.distinct_up_to(xi, n, l) {
                        sets[n - 1][l].insert(p);
                    }
                }
            }
        }
        let rc = Rc::new(BoundarySets { sets });
        *self.bsets.borrow_mut() = Some(Rc::clone(&rc));
        Ok(rc)
    }

    /// Interior test: every neighbour of the tile has the same parent.
    pub fn i_member(&self, level: usize, t: &Tile) -> bool {
        let anc = self.ancestor(level, t);
        self.neighborhood(level, t)
            .iter()
            .all(|u| self.ancestor(level, u) == anc)
    }

    /// Boundary census of a cell of `level >= 1`: base points within the
    /// base diameter of some wall between the cell and a neighbour.
    pub fn wall_count(&self, level: usize, cell: usize) -> usize {
        if let Some(&c) = self.wall_counts.borrow().get(&(level, cell)) {
            return c;
        }
        let lv = &self.h.levels[level];
        let domain = &self.h.base.domain;
        let mine = self.region_pieces(level, cell);
        let mut contacts: Vec<Vec<Point>> = Vec::new();
        for (j, t) in &lv.agg_adjacency[cell] {
            let off = shift_point(domain, t);
            for pb in self.region_pieces(level, *j).iter() {
                let blo = kernel::add(&pb.lo, &off);
                let bhi = kernel::add(&pb.hi, &off);
                let vb: Vec<Point> =
                    pb.verts.iter().map(|v| kernel::add(v, &off)).collect();
                for pa in mine.iter() {
                    if !boxes_touch(&pa.lo, &pa.hi, &blo, &bhi) {
                        continue;
                    }
                    if !dist_sq_hull_hull(&pa.verts, &vb).is_zero() {
                        continue;
                    }
                    let sys_b = translate_system(&pb.sys, &off);
                    let verts = intersection_vertices(
                        &[&pa.sys, &sys_b],
                        self.dim(),
                    );
                    if !verts.is_empty() {
                        contacts.push(verts);
                    }
                }
            }
        }
        let diam0_sq = &self.h.levels[0].diam_sq;
        let diam0_up = sqrt_upper(diam0_sq, 64);
        let window = sqrt_upper(&lv.reach_sq[cell], 64) + &diam0_up;
        let win_sq = &window * &window;
        let site = &lv.set.points[cell];
        let mut count = 0usize;
        for b in self.base_grid.near(site, &window) {
            let mut hit = false;
            'lifts: for (u, _) in
                domain.lifts_within(site, &self.h.base.points[b], &win_sq)
            {
                let pt = kernel::add(
                    &self.h.base.points[b],
                    &shift_point(domain, &u),
                );
                for cs in &contacts {
                    if dist_sq_point_hull(&pt, cs) <= *diam0_sq {
                        hit = true;
                        break 'lifts;
                    }
                }
            }
            if hit {
                count += 1;
            }
        }
        self.wall_counts
            .borrow_mut()
            .insert((level, cell), count);
        count
    }

    /// Base points inside the cell's region and in no neighbouring region.
    pub fn interior_count(&self, level: usize, cell: usize) -> usize {
        if let Some(&c) = self.interior_counts.borrow().get(&(level, cell)) {
            return c;
        }
        let lv = &self.h.levels[level];
        let domain = &self.h.base.domain;
        let mine = self.region_pieces(level, cell);
        let nbrs: Vec<(Rc<Vec<RegionPiece>>, Point)> = lv.agg_adjacency[cell]
            .iter()
            .map(|(j, t)| (self.region_pieces(level, *j), shift_point(domain, t)))
            .collect();
        let radius = sqrt_upper(&lv.reach_sq[cell], 64);
        let r_sq = &radius * &radius;
        let site = &lv.set.points[cell];
        let mut count = 0usize;
        for b in self.base_grid.near(site, &radius) {
            let mut interior = false;
            'lifts: for (u, _) in
                domain.lifts_within(site, &self.h.base.points[b], &r_sq)
            {
                let pt = kernel::add(
                    &self.h.base.points[b],
                    &shift_point(domain, &u),
                );
                if !mine.iter().any(|p| p.sys.contains(&pt)) {
                    continue;
                }
                for (ps, off) in &nbrs {
                    let local = kernel::sub(&pt, off);
                    if ps.iter().any(|p| p.sys.contains(&local)) {
                        continue 'lifts;
                    }
                }
                interior = true;
                break;
            }
            if interior {
                count += 1;
            }
        }
        self.interior_counts
            .borrow_mut()
            .insert((level, cell), count);
        count
    }

    /// Round-robin block of one parent cell.
    pub fn a_block(&self, level: usize, parent: usize) -> Result<Rc<ABlock>> {
        if let Some(r) = self.ablocks.borrow().get(&(level, parent)) {
            return r.clone().map_err(GeomError::CountShortfall);
        }
        let res = self.compute_a_block(level, parent);
        let stored = match &res {
            Ok(rc) => Ok(Rc::clone(rc)),
            Err(msg) => Err(msg.clone()),
        };
        self.ablocks
            .borrow_mut()
            .insert((level, parent), stored);
        res.map_err(GeomError::CountShortfall)
    }

    fn compute_a_block(
        &self,
        level: usize,
        parent: usize,
    ) -> std::result::Result<Rc<ABlock>, String> {
        let lvp = &self.h.levels[level + 1];
        let kids = lvp
            .children
            .as_ref()
            .ok_or_else(|| "parent level carries no children".to_string())?;
        let mut tiles: Vec<Tile> = kids[parent]
            .iter()
            .cloned()
            .filter(|t| self.i_member(level, t))
            .collect();
        tiles.sort_by(|a, b| self.tile_cmp(level, a, b));
        let zetas = self.cell_tuples(level + 1, parent);
        if zetas.is_empty() {
            return Err(format!(
                "parent {parent} at level {} sits in no meeting family",
                level + 1
            ));
        }
        let e = self.wall_count(level + 1, parent);
        let q = tiles.len() / zetas.len();
        if q < e {
            return Err(format!(
                "parent {parent} at level {}: {} interior children over {} \
                 tuples gives {} per tuple, below the boundary census {}",
                level + 1,
                tiles.len(),
                zetas.len(),
                q,
                e
            ));
        }
        let assign: Vec<usize> = (0..tiles.len()).map(|k| k % zetas.len()).collect();
        let index_of: HashMap<usize, usize> = tiles
            .iter()
            .enumerate()
            .map(|(k, t)| (t.0, k))
            .collect();
        Ok(Rc::new(ABlock {
            tiles,
            zetas,
            assign,
            index_of,
        }))
    }

    /// Tuple handed to an interior tile: its parent's block value, carried
    /// to the tile's copy.
    pub fn a_value(&self, level: usize, t: &Tile) -> Result<TupleXi> {
        debug_assert!(self.i_member(level, t));
        let (s, us) = self.ancestor(level, t);
        let block = self.a_block(level, s)?;
        let k = *block.index_of.get(&t.0).ok_or_else(|| {
            GeomError::AggregationViolation(format!(
                "tile {} is not an interior child of parent {}",
                t.0, s
            ))
        })?;
        Ok(block.zetas[block.assign[k]].translated(&us))
    }

    /// The full interior-tile assignment of one child level.
    pub fn a_map(&self, level: usize) -> Result<Vec<(Tile, TupleXi)>> {
        let lvp = &self.h.levels[level + 1];
        let mut out = Vec::new();
        for s in 0..lvp.set.len() {
            let block = self.a_block(level, s)?;
            for (k, t) in block.tiles.iter().enumerate() {
                out.push((t.clone(), block.zetas[block.assign[k]].clone()));
            }
        }
        Ok(out)
    }

    /// Witness point of the meeting family a tuple is an ordering of.
    fn meet_witness(&self, xi: &TupleXi) -> Result<Point> {
        let lm = &self.meets[xi.level];
        let (c0, u0) = &xi.entries[0];
        let want: BTreeSet<Tile> = xi.entries.iter().cloned().collect();
        if let Some(rows) = lm.by_cell.get(c0) {
            for (mi, w0) in rows {
                let v = sub_shift(u0, w0);
                let aligned: BTreeSet<Tile> = lm.meets[*mi]
                    .tiles
                    .iter()
                    .map(|(id, s)| (*id, add_shift(s, &v)))
                    .collect();
                if aligned == want {
                    return Ok(kernel::add(
                        &lm.meets[*mi].witness,
                        &shift_point(&self.h.base.domain, &v),
                    ));
                }
            }
        }
        Err(GeomError::NoAdmissibleTuple(format!(
            "tuple at level {} is not an ordering of any meeting family",
            xi.level
        )))
    }

    /// Does the candidate tile meet the common region of the leading
    /// entries?  The shared witness settles most cases; the rest fall back
    /// to exact intersection of convex pieces.
    fn tile_meets_common(
        &self,
        level: usize,
        cand: &Tile,
        firstn: &[Tile],
        witness: &Point,
    ) -> bool {
        if self.region_has_point(level, cand, witness) {
            return true;
        }
        let domain = &self.h.base.domain;
        let dim = self.dim();
        // shifted piece lists: candidate first, then each leading entry
        let mut lists: Vec<Vec<(FacetSystem, Point, Point)>> = Vec::new();
        for t in std::iter::once(cand).chain(firstn.iter()) {
            let off = shift_point(domain, &t.1);
            let pieces = self.region_pieces(level, t.0);
            lists.push(
                pieces
                    .iter()
                    .map(|p| {
                        (
                            translate_system(&p.sys, &off),
                            kernel::add(&p.lo, &off),
                            kernel::add(&p.hi, &off),
                        )
                    })
                    .collect(),
            );
        }
        let mut idx = vec![0usize; lists.len()];
        'outer: loop {
            let combo: Vec<&(FacetSystem, Point, Point)> =
                idx.iter().zip(&lists).map(|(&i, l)| &l[i]).collect();
            let mut ok = true;
            'pairs: for a in 0..combo.len() {
                for b in a + 1..combo.len() {
                    if !boxes_touch(&combo[a].1, &combo[a].2, &combo[b].1, &combo[b].2)
                    {
                        ok = false;
                        break 'pairs;
                    }
                }
            }
            if ok {
                let systems: Vec<&FacetSystem> =
                    combo.iter().map(|c| &c.0).collect();
                if !intersection_vertices(&systems, dim).is_empty() {
                    return true;
                }
            }
            for k in 0..idx.len() {
                idx[k] += 1;
                if idx[k] < lists[k].len() {
                    continue 'outer;
                }
                idx[k] = 0;
            }
            return false;
        }
    }

    /// Parents of every tile meeting the common region of the first `n`
    /// entries, in marker order.
    pub fn n_set(&self, xi: &TupleXi, n: usize) -> Result<Rc<Vec<Tile>>> {
        let (canon, delta) = TupleXi {
            level: xi.level,
            entries: xi.entries[..n].to_vec(),
        }
        .canonical();
        let key = (xi.level, n, canon.entries.clone());
        if let Some(r) = self.nsets.borrow().get(&key) {
            let out: Vec<Tile> = r
                .iter()
                .map(|(c, s)| (*c, add_shift(s, &delta)))
                .collect();
            return Ok(Rc::new(out));
        }
        let level = xi.level;
        let witness = self.meet_witness(xi)?;
        let neg: Vec<i64> = delta.iter().map(|x| -x).collect();
        let wit_canon = kernel::add(
            &witness,
            &shift_point(&self.h.base.domain, &neg),
        );
        let mut parents: Vec<Tile> = Vec::new();
        for cand in self.neighborhood(level, &canon.entries[0]) {
            if self.tile_meets_common(level, &cand, &canon.entries, &wit_canon) {
                let a = self.ancestor(level, &cand);
                if !parents.contains(&a) {
                    parents.push(a);
                }
            }
        }
        parents.sort_by(|a, b| self.tile_cmp(level + 1, a, b));
        if parents.len() > self.dim() + 1 {
            return Err(GeomError::AggregationViolation(format!(
                "{} parents crowd one meeting region at level {}",
                parents.len(),
                level
            )));
        }
        self.nsets
            .borrow_mut()
            .insert(key, Rc::new(parents.clone()));
        let out: Vec<Tile> = parents
            .iter()
            .map(|(c, s)| (*c, add_shift(s, &delta)))
            .collect();
        Ok(Rc::new(out))
    }

    /// Push a tuple one level up, keeping its first `n` entries canonical:
    /// parents of the leading entries are pinned in first-appearance order,
    /// the remaining touched parents follow sorted, and the free slots take
    /// the smallest admissible completion.
    pub fn j_value(&self, xi: &TupleXi, n: usize) -> Result<TupleXi> {
        let l = xi.level;
        if l >= self.top() {
            return Err(GeomError::Config(
                "no coarser level to push the tuple into".into(),
            ));
        }
        let (canon, delta) = xi.canonical();
        let key = (l, n, canon.entries.clone());
        if let Some(r) = self.jcache.borrow().get(&key) {
            return Ok(r.translated(&delta));
        }
        let nset = self.n_set(&canon, n)?;
        if nset.is_empty() {
            return Err(GeomError::NoAdmissibleTuple(format!(
                "leading entries at level {l} have empty common region"
            )));
        }
        if n == 1 && nset.len() == 1 {
            let res = self.a_value(l, &canon.entries[0])?;
            self.jcache
                .borrow_mut()
                .insert(key, Rc::new(res.clone()));
            return Ok(res.translated(&delta));
        }
        if nset.len() == 1 {
            return Err(GeomError::AggregationViolation(format!(
                "distinct-ancestor tuple collapsed to one parent at level {l}"
            )));
        }
        let ancs: Vec<Tile> = canon
            .entries
            .iter()
            .map(|t| self.ancestor(l, t))
            .collect();
        let mut pinned: Vec<Tile> = Vec::new();
        for a in &ancs {
            if !pinned.contains(a) {
                pinned.push(a.clone());
            }
        }
        for a in &pinned {
            if !nset.contains(a) {
                return Err(GeomError::AggregationViolation(format!(
                    "parent of a tuple entry misses its own meeting region \
                     at level {l}"
                )));
            }
        }
        let rest: Vec<Tile> = nset
            .iter()
            .filter(|t| !pinned.contains(t))
            .cloned()
            .collect();
        let (a0, s0) = &nset[0];
        let lm_up = &self.meets[l + 1];
        let mut best_tail: Option<Vec<Tile>> = None;
        if let Some(rows) = lm_up.by_cell.get(a0) {
            for (mi, w0) in rows {
                let v = sub_shift(s0, w0);
                let aligned: Vec<Tile> = lm_up.meets[*mi]
                    .tiles
                    .iter()
                    .map(|(id, s)| (*id, add_shift(s, &v)))
                    .collect();
                if !nset.iter().all(|t| aligned.contains(t)) {
                    continue;
                }
                let mut tail: Vec<Tile> = aligned
                    .iter()
                    .filter(|t| !nset.contains(t))
                    .cloned()
                    .collect();
                tail.sort_by(|a, b| self.tile_cmp(l + 1, a, b));
                let better = match &best_tail {
                    None => true,
                    Some(cur) => {
                        let mut ord = Ordering::Equal;
                        for (x, y) in tail.iter().zip(cur.iter()) {
                            ord = self.tile_cmp(l + 1, x, y);
                            if ord != Ordering::Equal {
                                break;
                            }
                        }
                        ord == Ordering::Less
                    }
                };
                if better {
                    best_tail = Some(tail);
                }
            }
        }
        let tail = best_tail.ok_or_else(|| {
            GeomError::NoAdmissibleTuple(format!(
                "no meeting family one level above {l} spans all touched \
                 parents"
            ))
        })?;
        let mut entries = pinned;
        entries.extend(rest);
        entries.extend(tail);
        let res = TupleXi {
            level: l + 1,
            entries,
        };
        self.jcache
            .borrow_mut()
            .insert(key, Rc::new(res.clone()));
        Ok(res.translated(&delta))
    }

    /// Iterate the push-up until the tuple lives at `to_level`.
    pub fn j_chain(&self, xi: &TupleXi, n: usize, to_level: usize) -> Result<TupleXi> {
        let mut cur = xi.clone();
        while cur.level < to_level {
            cur = self.j_value(&cur, n)?;
        }
        Ok(cur)
    }

    fn canon_mod_sn(&self, xi: &TupleXi, n: usize) -> Vec<Tile> {
        let mut entries = xi.entries.clone();
        let lead = &mut entries[..n];
        lead.sort_by(|a, b| self.tile_cmp(xi.level, a, b));
        let delta = entries[0].1.clone();
        entries
            .iter()
            .map(|(c, s)| (*c, sub_shift(s, &delta)))
            .collect()
    }

    /// Unordered positioned ancestors of the first `n` entries at `level`,
    /// shift-normalised.
    fn ancestor_key(&self, xi: &TupleXi, n: usize, level: usize) -> Vec<Tile> {
        let mut cur: Vec<Tile> = xi.entries[..n].to_vec();
        let mut l = xi.level;
        while l < level {
            cur = cur.iter().map(|t| self.ancestor(l, t)).collect();
            l += 1;
        }
        cur.sort_by(|a, b| self.tile_cmp(level, a, b));
        cur.dedup();
        let delta = cur[0].1.clone();
        cur.iter().map(|(c, s)| (*c, sub_shift(s, &delta))).collect()
    }

    fn build_partitions(
        &self,
        members: &[usize],
        mut key_at: impl FnMut(usize, usize) -> Result<Vec<Tile>>,
    ) -> Result<Vec<LevelPartition>> {
        let mut levels: Vec<LevelPartition> = Vec::new();
        for l in 0..=self.top() {
            let mut groups: BTreeMap<Vec<Tile>, Vec<usize>> = BTreeMap::new();
            for &p in members {
                groups.entry(key_at(p, l)?).or_default().push(p);
            }
            let mut classes: Vec<Vec<usize>> = groups.into_values().collect();
            for c in classes.iter_mut() {
                c.sort_unstable();
            }
            classes.sort_by_key(|c| c[0]);
            let mut class_of = HashMap::new();
            for (i, c) in classes.iter().enumerate() {
                for &p in c {
                    class_of.insert(p, i);
                }
            }
            let (merges, monotone) = match levels.last() {
                None => {
                    let mut m = Vec::new();
                    for c in &classes {
                        for w in c.windows(2) {
                            m.push((w[0], w[1]));
                        }
                    }
                    (m, true)
                }
                Some(prev) => {
                    let mut m = Vec::new();
                    let mut mono = true;
                    for c in &classes {
                        let mut reps: Vec<usize> =
                            c.iter().map(|p| prev.classes[prev.class_of[p]][0]).collect();
                        reps.sort_unstable();
                        reps.dedup();
                        for w in reps.windows(2) {
                            m.push((w[0], w[1]));
                        }
                    }
                    for pc in &prev.classes {
                        let mut target: Option<usize> = None;
                        for p in pc {
                            match target {
                                None => target = Some(class_of[p]),
                                Some(t) => {
                                    if t != class_of[p] {
                                        mono = false;
                                    }
                                }
                            }
                        }
                    }
                    (m, mono)
                }
            };
            levels.push(LevelPartition {
                level: l,
                classes,
                class_of,
                merges,
                monotone,
            });
        }
        Ok(levels)
    }

    /// Chain relation of length `n`: points grouped by the value of the
    /// iterated push-up at each level, up to slot permutation of the
    /// leading entries and up to translation.
    pub fn relation_r(&self, n: usize) -> Result<Rc<EquivRelation>> {
        if let Some(r) = self.relations.borrow().get(&(n, 0)) {
            return Ok(Rc::clone(r));
        }
        let b = self.boundary_sets()?;
        let members: Vec<usize> = b.b(n, self.top()).iter().copied().collect();
        let th = self.theta_data()?;
        let levels = self.build_partitions(&members, |p, l| {
            let val = self.j_chain(&th.assignments[p], n, l)?;
            Ok(self.canon_mod_sn(&val, n))
        })?;
        let rel = Rc::new(EquivRelation {
            n,
            kind: RelationKind::Chain,
            members,
            levels,
        });
        self.relations.borrow_mut().insert((n, 0), Rc::clone(&rel));
        Ok(rel)
    }

    /// Ancestor relation of length `n >= 2`: points grouped by the
    /// unordered ancestor set of the leading entries at each level.
    pub fn relation_q(&self, n: usize) -> Result<Rc<EquivRelation>> {
        if n < 2 {
            return Err(GeomError::Config(
                "ancestor relation needs at least two leading entries".into(),
            ));
        }
        if let Some(r) = self.relations.borrow().get(&(n, 1)) {
            return Ok(Rc::clone(r));
        }
        let b = self.boundary_sets()?;
        let members: Vec<usize> = b.b(n, self.top()).iter().copied().collect();
        let th = self.theta_data()?;
        let levels = self.build_partitions(&members, |p, l| {
            Ok(self.ancestor_key(&th.assignments[p], n, l))
        })?;
        let rel = Rc::new(EquivRelation {
            n,
            kind: RelationKind::Ancestors,
            members,
            levels,
        });
        self.relations.borrow_mut().insert((n, 1), Rc::clone(&rel));
        Ok(rel)
    }

    /// Per-class census of the single-entry chain relation one level above
    /// `level`: each class must hold at least one tile's worth of interior
    /// points per boundary point, and may keep at most a wall's worth of
    /// points that still straddle two parents.
    pub fn thinness_report(&self, level: usize) -> Result<ThinnessReport> {
        if level + 1 > self.top() {
            return Err(GeomError::Config(
                "thinness needs a level above the one given".into(),
            ));
        }
        let r1 = self.relation_r(1)?;
        let lp = &r1.levels[level + 1];
        let b = self.boundary_sets()?;
        let b2 = b.b(2, level + 1);
        let th = self.theta_data()?;
        let mut classes = Vec::new();
        let mut all_ok = true;
        let mut worst = (0usize, 1usize);
        for class in &lp.classes {
            let rep = class[0];
            let zeta = self.j_chain(&th.assignments[rep], 1, level + 1)?;
            let (zc, _) = zeta.canonical();
            let s = zc.entries[0].0;
            let block = self.a_block(level, s)?;
            let zi = block
                .zetas
                .iter()
                .position(|z| *z == zc)
                .ok_or_else(|| {
                    GeomError::AggregationViolation(format!(
                        "chain value of class rep {rep} is not a canonical \
                         tuple of parent {s}"
                    ))
                })?;
            let fiber: Vec<&Tile> = block
                .tiles
                .iter()
                .zip(&block.assign)
                .filter(|(_, a)| **a == zi)
                .map(|(t, _)| t)
                .collect();
            let interior_floor = fiber
                .iter()
                .map(|t| self.interior_count(level, t.0))
                .min()
                .unwrap_or(0);
            let e = self.wall_count(level + 1, s);
            let overlap = class.iter().filter(|p| b2.contains(p)).count();
            let ok_lower = class.len() >= interior_floor * e;
            let ok_upper = overlap <= e;
            all_ok &= ok_lower && ok_upper;
            if overlap * worst.1 > worst.0 * class.len() {
                worst = (overlap, class.len());
            }
            classes.push(ClassThinness {
                zeta: zc,
                size: class.len(),
                boundary_overlap: overlap,
                interior_floor,
                wall_count: e,
                ok_lower,
                ok_upper,
            });
        }
        Ok(ThinnessReport {
            level,
            classes,
            all_ok,
            worst_ratio: worst,
        })
    }

    /// Evaluate the structural laws for chain length `n` at one level.
    pub fn check_structure(&self, n: usize, level: usize) -> Result<StructureReport> {
        let kmax = self.dim() + 1;
        if n == 0 || n > kmax {
            return Err(GeomError::Config(format!(
                "chain length must lie in 1..={kmax}"
            )));
        }
        if level > self.top() {
            return Err(GeomError::Config("level beyond the tower".into()));
        }
        let b = self.boundary_sets()?;
        let top = self.top();
        let all: BTreeSet<usize> = (0..self.h.base.len()).collect();
        let empty: BTreeSet<usize> = BTreeSet::new();
        let bset = |k: usize| -> &BTreeSet<usize> {
            if k <= kmax {
                b.b(k, top)
            } else {
                &empty
            }
        };
        let phi_image = |a: &BTreeSet<usize>| -> BTreeSet<usize> {
            if a.is_empty() {
                BTreeSet::new()
            } else {
                all.clone()
            }
        };
        // difference chain of saturated images
        let mut cs: Vec<BTreeSet<usize>> = Vec::new();
        for k in 1..=kmax {
            let img = phi_image(bset(k));
            let next = phi_image(bset(k + 1));
            if k < kmax {
                cs.push(img.difference(&next).copied().collect());
            } else {
                cs.push(img);
            }
        }
        let mut partition_ok = true;
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        for c in &cs {
            if !seen.is_disjoint(c) {
                partition_ok = false;
            }
            seen.extend(c.iter().copied());
        }
        if seen != all {
            partition_ok = false;
        }
        let rel = self.relation_r(n)?;
        let lp = &rel.levels[level];
        let bn: BTreeSet<usize> = rel.members.iter().copied().collect();
        let bn1 = bset(n + 1);
        // image of the next boundary set under the relation
        let mut lhs: BTreeSet<usize> = BTreeSet::new();
        for class in &lp.classes {
            if class.iter().any(|p| bn1.contains(p)) {
                lhs.extend(class.iter().copied());
            }
        }
        let rhs: BTreeSet<usize> = if bn1.is_empty() {
            BTreeSet::new()
        } else {
            bn.clone()
        };
        let image_law_ok = lhs == rhs;
        // restriction to the matching difference set collapses to one class
        let d: BTreeSet<usize> =
            bn.intersection(&cs[n - 1]).copied().collect();
        let collapse_law_ok = if d.is_empty() {
            true
        } else {
            let mut target: Option<usize> = None;
            let mut ok = true;
            for p in &d {
                match (target, lp.class_of.get(p)) {
                    (_, None) => ok = false,
                    (None, Some(&c)) => target = Some(c),
                    (Some(t), Some(&c)) => {
                        if t != c {
                            ok = false;
                        }
                    }
                }
            }
            ok
        };
        let inside_next_ok = if n + 1 <= kmax {
            let q = self.relation_q(n + 1)?;
            let qlp = &q.levels[level];
            let mut ok = true;
            for class in &lp.classes {
                let mut target: Option<usize> = None;
                for p in class {
                    if !bn1.contains(p) {
                        continue;
                    }
                    match (target, qlp.class_of.get(p)) {
                        (_, None) => ok = false,
                        (None, Some(&c)) => target = Some(c),
                        (Some(t), Some(&c)) => {
                            if t != c {
                                ok = false;
                            }
                        }
                    }
                }
            }
            Some(ok)
        } else {
            None
        };
        let class_count = lp.classes.len();
        let single_class = class_count == 1;
        let conclusive = self.h.saturated && level == top;
        let details = vec![
            format!("members {}", rel.members.len()),
            format!("classes at level {level}: {class_count}"),
            format!(
                "difference sets sized {:?}",
                cs.iter().map(|c| c.len()).collect::<Vec<_>>()
            ),
        ];
        Ok(StructureReport {
            n,
            level,
            conclusive,
            partition_ok,
            image_law_ok,
            collapse_law_ok,
            inside_next_ok,
            class_count,
            single_class,
            details,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{
        build_hierarchy, offset_row_lattice, unit_circle_set, RefineConfig,
    };
    use crate::num::{rat, rat_to_string, rint};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    /// One-dimensional tower sized so that every map of the module is total:
    /// two base points per cell, and a counting factor that the coarse scale
    /// can still satisfy on a 2048-period circle.
    fn line_cfg() -> RefineConfig {
        RefineConfig {
            base_m: rint(2),
            counting_factor: rat(2, 15),
            ..RefineConfig::desk(1).expect("profile")
        }
    }

    fn line_hierarchy() -> &'static Hierarchy {
        static H: OnceLock<Hierarchy> = OnceLock::new();
        H.get_or_init(|| {
            let base = unit_circle_set(2048).expect("base set");
            build_hierarchy(&base, 2, &line_cfg()).expect("line tower")
        })
    }

    /// Plane instance coarse enough that every cell holds more points than
    /// tuples; single level, used for the assignment map only.
    fn plane_theta_hierarchy() -> &'static Hierarchy {
        static H: OnceLock<Hierarchy> = OnceLock::new();
        H.get_or_init(|| {
            let base = offset_row_lattice(364).expect("base set");
            let cfg = RefineConfig {
                base_m: rint(15),
                ..RefineConfig::desk(2).expect("profile")
            };
            build_hierarchy(&base, 0, &cfg).expect("plane tower")
        })
    }

    /// Full two-level plane tower; expensive, shared by the sampled tests.
    fn plane_survey_hierarchy() -> &'static Hierarchy {
        static H: OnceLock<Hierarchy> = OnceLock::new();
        H.get_or_init(|| {
            let base = offset_row_lattice(364).expect("base set");
            build_hierarchy(&base, 2, &RefineConfig::desk(2).expect("profile")).expect("survey tower")
        })
    }

    #[test]
    #[ignore]
    fn probe_line_cascade() {
        let h = line_hierarchy();
        eprintln!("levels {} saturated {}", h.levels.len(), h.saturated);
        for lv in &h.levels {
            eprintln!(
                "level {}: m = {}, sites = {}, simplices = {}, diam_sq = {}",
                lv.index,
                rat_to_string(&lv.m),
                lv.set.len(),
                lv.tri.simplices.len(),
                rat_to_string(&lv.diam_sq)
            );
        }
        let ctx = AfContext::new(h).expect("context");
        let th = ctx.theta_table().expect("theta");
        let mut fmin = usize::MAX;
        let mut fmax = 0;
        let mut zmin = usize::MAX;
        let mut zmax = 0;
        for c in 0..h.levels[0].set.len() {
            fmin = fmin.min(th.per_cell_points[c].len());
            fmax = fmax.max(th.per_cell_points[c].len());
            zmin = zmin.min(th.per_cell_tuples[c].len());
            zmax = zmax.max(th.per_cell_tuples[c].len());
        }
        eprintln!("theta: points per cell {fmin}..{fmax}, tuples per cell {zmin}..{zmax}");
        let b = ctx.boundary_sets().expect("boundary sets");
        for n in 1..=ctx.dim() + 1 {
            let sizes: Vec<usize> =
                (0..=ctx.top()).map(|l| b.b(n, l).len()).collect();
            eprintln!("boundary set {n}: sizes by level {sizes:?}");
        }
        for n in 1..=2 {
            eprintln!(
                "tuples level 0 family {n}: {}",
                ctx.tuples_level(0, n).len()
            );
            eprintln!(
                "tuples level 1 family {n}: {}",
                ctx.tuples_level(1, n).len()
            );
        }
        let mut kid_counts: BTreeMap<usize, usize> = BTreeMap::new();
        let mut e_counts: BTreeMap<usize, usize> = BTreeMap::new();
        let mut q_counts: BTreeMap<usize, usize> = BTreeMap::new();
        for s in 0..h.levels[1].set.len() {
            let block = ctx.a_block(0, s).expect("block");
            *kid_counts.entry(block.tiles.len()).or_default() += 1;
            *e_counts.entry(ctx.wall_count(1, s)).or_default() += 1;
            *q_counts
                .entry(block.tiles.len() / block.zetas.len())
                .or_default() += 1;
        }
        eprintln!("interior children histogram {kid_counts:?}");
        eprintln!("wall census histogram {e_counts:?}");
        eprintln!("per-tuple quota histogram {q_counts:?}");
        let mut int_hist: BTreeMap<usize, usize> = BTreeMap::new();
        for c in 0..h.levels[0].set.len() {
            *int_hist.entry(ctx.interior_count(0, c)).or_default() += 1;
        }
        eprintln!("interior base points per level-0 cell {int_hist:?}");
        let r1 = ctx.relation_r(1).expect("chain relation 1");
        let r2 = ctx.relation_r(2).expect("chain relation 2");
        let q2 = ctx.relation_q(2).expect("ancestor relation 2");
        for rel in [&r1, &r2, &q2] {
            let counts: Vec<usize> =
                rel.levels.iter().map(|lp| lp.classes.len()).collect();
            let merges: Vec<usize> =
                rel.levels.iter().map(|lp| lp.merges.len()).collect();
            eprintln!(
                "relation {:?} n={} members {} classes {:?} merges {:?}",
                rel.kind,
                rel.n,
                rel.members.len(),
                counts,
                merges
            );
        }
        let thin = ctx.thinness_report(0).expect("thinness");
        let mut size_hist: BTreeMap<usize, usize> = BTreeMap::new();
        let mut floor_hist: BTreeMap<usize, usize> = BTreeMap::new();
        let mut over_hist: BTreeMap<usize, usize> = BTreeMap::new();
        for c in &thin.classes {
            *size_hist.entry(c.size).or_default() += 1;
            *floor_hist.entry(c.interior_floor).or_default() += 1;
            *over_hist.entry(c.boundary_overlap).or_default() += 1;
        }
        eprintln!(
            "thinness: all_ok {} worst {:?} sizes {size_hist:?} floors {floor_hist:?} overlaps {over_hist:?}",
            thin.all_ok, thin.worst_ratio
        );
        for n in 1..=2 {
            let rep = ctx.check_structure(n, ctx.top()).expect("structure");
            eprintln!(
                "structure n={} level={}: conclusive {} partition {} image {} collapse {} inside_next {:?} classes {}",
                rep.n,
                rep.level,
                rep.conclusive,
                rep.partition_ok,
                rep.image_law_ok,
                rep.collapse_law_ok,
                rep.inside_next_ok,
                rep.class_count
            );
        }
    }

    #[test]
    #[ignore]
    fn probe_plane_theta() {
        let h = plane_theta_hierarchy();
        eprintln!(
            "level 0: m = {}, sites = {}, simplices = {}",
            rat_to_string(&h.levels[0].m),
            h.levels[0].set.len(),
            h.levels[0].tri.simplices.len()
        );
        let ctx = AfContext::new(h).expect("context");
        match ctx.theta_table() {
            Ok(th) => {
                let mut worst = isize::MAX;
                let mut fmin = usize::MAX;
                let mut zmax = 0;
                for c in 0..h.levels[0].set.len() {
                    let f = th.per_cell_points[c].len() as isize;
                    let z = th.per_cell_tuples[c].len() as isize;
                    worst = worst.min(f - z);
                    fmin = fmin.min(f as usize);
                    zmax = zmax.max(z as usize);
                }
                eprintln!("theta ok: min surplus {worst}, min points {fmin}, max tuples {zmax}");
            }
            Err(e) => eprintln!("theta failed: {e}"),
        }
    }

    #[test]
    fn meets_carry_their_witnesses() {
        let h = line_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        for l in 0..=ctx.top() {
            for mi in 0..ctx.meet_count(l) {
                let m = ctx.meet(l, mi);
                assert_eq!(m.tiles.len(), ctx.dim() + 1);
                for t in &m.tiles {
                    assert!(
                        ctx.region_has_point(l, t, &m.witness),
                        "witness escapes tile {t:?} at level {l}"
                    );
                }
            }
        }
    }

    #[test]
    fn neighborhoods_are_closed_and_small() {
        let h = line_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        let bound = 10usize.pow(ctx.dim() as u32) + 1;
        for l in 0..=ctx.top() {
            for c in 0..h.levels[l].set.len() {
                let t: Tile = (c, vec![0]);
                let nb = ctx.neighborhood(l, &t);
                assert!(nb.contains(&t));
                assert!(nb.len() <= bound, "cell {c} level {l} meets {}", nb.len());
                let set: BTreeSet<&Tile> = nb.iter().collect();
                assert_eq!(set.len(), nb.len(), "duplicate neighbour");
            }
        }
    }

    #[test]
    fn tuple_families_nest_and_saturate() {
        let h = line_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        let t01 = ctx.tuples_level(0, 1);
        let t02 = ctx.tuples_level(0, 2);
        assert_eq!(t01.len(), 2 * h.levels[0].tri.simplices.len());
        let t02set: BTreeSet<&TupleXi> = t02.iter().collect();
        for xi in &t02 {
            assert!(t01.binary_search_by(|c| ctx.tuple_cmp(c, xi)).is_ok());
        }
        assert!(t02set.len() < t01.len());
        // at the top level the distinctness constraint is vacuous
        let t11 = ctx.tuples_level(1, 1);
        let t12 = ctx.tuples_level(1, 2);
        assert_eq!(t11, t12);
        assert_eq!(t11.len(), 2 * h.levels[1].tri.simplices.len());
    }

    #[test]
    fn theta_fills_every_cell_exactly() {
        let h = line_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        let th = ctx.theta_table().expect("theta");
        let n0 = h.levels[0].set.len();
        for c in 0..n0 {
            assert_eq!(th.per_cell_points[c].len(), 2, "cell {c} point count");
            assert_eq!(th.per_cell_tuples[c].len(), 2, "cell {c} tuple count");
        }
        // surjective with multiplicity one: every canonical tuple is taken
        let mut hits: HashMap<Vec<Tile>, usize> = HashMap::new();
        for p in 0..h.base.len() {
            let xi = ctx.theta(p).expect("theta value");
            // the point lies in the closed cell of its first entry
            assert!(
                ctx.region_has_point(0, &xi.entries[0], &h.base.points[p]),
                "point {p} outside its leading tile"
            );
            let (canon, _) = xi.canonical();
            *hits.entry(canon.entries).or_default() += 1;
        }
        assert_eq!(hits.len(), 2 * h.levels[0].tri.simplices.len());
        assert!(hits.values().all(|&k| k == 1));
    }

    #[test]
    fn theta_repeats_across_congruent_cells() {
        let h = line_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        let th = ctx.theta_table().expect("theta");
        let domain = &h.base.domain;
        // pattern of a cell: local point offsets and local tuple shapes,
        // both relative to the site; the assignment must repeat verbatim
        // on cells with equal patterns
        let mut by_pattern: HashMap<String, Vec<String>> = HashMap::new();
        for c in 0..h.levels[0].set.len() {
            let site = &h.levels[0].set.points[c];
            let mut pts = Vec::new();
            for &p in &th.per_cell_points[c] {
                let owner = ctx.owner().expect("owner")[p].clone();
                let local = kernel::sub(
                    &kernel::sub(&h.base.points[p], &shift_point(domain, &owner.1)),
                    site,
                );
                pts.push(local.iter().map(rat_to_string).collect::<Vec<_>>().join(","));
            }
            let mut shapes = Vec::new();
            for z in &th.per_cell_tuples[c] {
                let shape: Vec<String> = z
                    .entries
                    .iter()
                    .map(|t| {
                        kernel::sub(&ctx.marker(0, t), site)
                            .iter()
                            .map(rat_to_string)
                            .collect::<Vec<_>>()
                            .join(",")
                    })
                    .collect();
                shapes.push(shape.join(" | "));
            }
            let key = format!("{pts:?}");
            let value = format!("{shapes:?}");
            by_pattern.entry(key).or_default().push(value);
        }
        for (key, values) in by_pattern {
            assert!(
                values.windows(2).all(|w| w[0] == w[1]),
                "assignment varies across congruent cells with pattern {key}"
            );
        }
    }

    #[test]
    fn boundary_sets_form_a_lattice() {
        let h = line_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        let b = ctx.boundary_sets().expect("boundary sets");
        let top = ctx.top();
        let all: BTreeSet<usize> = (0..h.base.len()).collect();
        for l in 0..=top {
            assert_eq!(b.b(1, l), &all, "length-1 set must be everything");
        }
        for n in 1..=ctx.dim() + 1 {
            for l in 0..top {
                assert!(
                    b.b(n, l + 1).is_subset(b.b(n, l)),
                    "boundary set grows with level"
                );
            }
        }
        for n in 1..ctx.dim() + 1 {
            for l in 0..=top {
                assert!(
                    b.b(n + 1, l).is_subset(b.b(n, l)),
                    "boundary set grows with length"
                );
            }
        }
        assert_eq!(b.b(2, 0), &all);
        assert!(!b.b(2, top).is_empty());
        assert!(b.b(2, top).len() < all.len());
    }

    #[test]
    fn interior_blocks_cover_their_walls() {
        let h = line_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        let n1 = h.levels[1].set.len();
        let mut total_interior = 0;
        for s in 0..n1 {
            let block = ctx.a_block(0, s).expect("block");
            assert_eq!(block.zetas.len(), 2, "line parents sit in two families");
            let e = ctx.wall_count(1, s);
            assert!(
                block.tiles.len() / block.zetas.len() >= e,
                "parent {s} quota below census"
            );
            // independent census: integers within the base diameter of a
            // region endpoint, endpoints read off the region vertices
            let pieces = ctx.region_pieces(1, s);
            let mut lo = pieces[0].lo[0].clone();
            let mut hi = pieces[0].hi[0].clone();
            for p in pieces.iter() {
                if p.lo[0] < lo {
                    lo = p.lo[0].clone();
                }
                if p.hi[0] > hi {
                    hi = p.hi[0].clone();
                }
            }
            let diam0 = sqrt_upper(&h.levels[0].diam_sq, 64);
            let mut brute = 0usize;
            for b in 0..h.base.len() {
                let x = &h.base.points[b];
                let hit = |w: &Rat| {
                    let lifts = h.base.domain.lifts_within(
                        std::slice::from_ref(w),
                        x,
                        &(&diam0 * &diam0),
                    );
                    !lifts.is_empty()
                };
                if hit(&lo) || hit(&hi) {
                    brute += 1;
                }
            }
            assert_eq!(e, brute, "census of parent {s} disagrees");
            total_interior += block.tiles.len();
            for (k, t) in block.tiles.iter().enumerate() {
                assert!(ctx.i_member(0, t));
                let zeta = &block.zetas[block.assign[k]];
                assert_eq!(zeta.entries[0], (s, vec![0]), "tuple not anchored");
            }
        }
        // interior children plus straddlers account for every level-0 cell
        let straddlers = (0..h.levels[0].set.len())
            .filter(|&c| !ctx.i_member(0, &(c, vec![0])))
            .count();
        assert_eq!(total_interior + straddlers, h.levels[0].set.len());
        // the assignment is defined exactly on interior tiles
        let map = ctx.a_map(0).expect("full map");
        assert_eq!(map.len(), total_interior);
        for (t, zeta) in &map {
            assert_eq!(zeta.entries[0], ctx.ancestor(0, t), "leading entry law");
        }
    }

    #[test]
    fn pushed_tuples_keep_their_leading_entries() {
        let h = line_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        let tuples = ctx.tuples_level(0, 1);
        for xi in &tuples {
            let m_max = (1..=ctx.dim() + 1)
                .rev()
                .find(|&m| ctx.in_family(xi, m))
                .expect("family of length one always holds");
            for n in 1..=m_max {
                let j = ctx.j_value(xi, n).expect("push-up defined");
                assert_eq!(j.level, 1);
                assert!(ctx.in_family(&j, n), "pushed tuple leaves the family");
                // leading entries are the ancestors, in order
                for k in 0..m_max {
                    assert_eq!(
                        j.entries[k],
                        ctx.ancestor(0, &xi.entries[k]),
                        "prefix law at slot {k}"
                    );
                }
                // unordered image law for every prefix length
                for m in 1..=ctx.dim() + 1 {
                    let want: BTreeSet<Tile> = xi.entries[..m]
                        .iter()
                        .map(|t| ctx.ancestor(0, t))
                        .collect();
                    let got: BTreeSet<Tile> =
                        j.entries[..want.len()].iter().cloned().collect();
                    assert_eq!(got, want, "image law at prefix {m}");
                }
            }
        }
    }

    #[test]
    fn pushed_tuples_respect_slot_symmetry() {
        let h = line_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        let tuples = ctx.tuples_level(0, 1);
        // equal leading entry forces an equal push-up of length one
        let mut by_first: HashMap<Tile, Vec<&TupleXi>> = HashMap::new();
        for xi in &tuples {
            by_first.entry(xi.entries[0].clone()).or_default().push(xi);
        }
        for (first, group) in by_first {
            let vals: Vec<TupleXi> = group
                .iter()
                .map(|xi| ctx.j_value(xi, 1).expect("push-up"))
                .collect();
            assert!(
                vals.windows(2).all(|w| w[0] == w[1]),
                "push-up of length one differs on shared first entry {first:?}"
            );
        }
        // swapping both entries of a straddling pair swaps the push-up
        let swap = vec![1usize, 0];
        for xi in &tuples {
            if !ctx.in_family(xi, 2) {
                continue;
            }
            let eta = permute_tuple(xi, &swap);
            let je = ctx.j_value(&eta, 2).expect("push-up of the swap");
            let j = ctx.j_value(xi, 2).expect("push-up");
            assert_eq!(
                permute_tuple(&j, &swap),
                je,
                "push-up does not intertwine the swap"
            );
        }
    }

    #[test]
    fn chain_and_ancestor_relations_cohere() {
        let h = line_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        let r1 = ctx.relation_r(1).expect("chain relation 1");
        let r2 = ctx.relation_r(2).expect("chain relation 2");
        let q2 = ctx.relation_q(2).expect("ancestor relation 2");
        assert_eq!(r1.members.len(), h.base.len());
        assert!(r1.monotone());
        assert!(r2.monotone());
        assert!(q2.monotone());
        // class counts never increase with the level
        for rel in [&r1, &r2, &q2] {
            for w in rel.levels.windows(2) {
                assert!(w[0].classes.len() >= w[1].classes.len());
            }
        }
        assert_eq!(r1.levels[0].classes.len(), h.base.len());
        // chain classes refine ancestor classes at every level
        assert_eq!(r2.members, q2.members);
        for l in 0..=ctx.top() {
            assert!(
                refines(&r2.levels[l], &q2.levels[l]),
                "chain relation leaves ancestor relation at level {l}"
            );
        }
        // members of one ancestor class stay within twice the cell size
        for l in 0..=ctx.top() {
            let bound = rat(4, 1) * &h.levels[l].diam_sq;
            for class in &q2.levels[l].classes {
                for a in class {
                    for b in class {
                        let d = h
                            .base
                            .domain
                            .dist_sq(&h.base.points[*a], &h.base.points[*b]);
                        assert!(d <= bound, "ancestor class too wide at level {l}");
                    }
                }
            }
        }
        // merge accounting: joining k classes logs k - 1 pairs
        for rel in [&r1, &r2, &q2] {
            for w in rel.levels.windows(2) {
                let merged: usize = w[1].merges.len();
                assert_eq!(
                    w[0].classes.len() - w[1].classes.len(),
                    merged,
                    "merge log out of balance"
                );
            }
        }
    }

    #[test]
    fn chain_classes_stay_thin() {
        let h = line_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        let thin = ctx.thinness_report(0).expect("thinness");
        assert!(thin.all_ok);
        let r1 = ctx.relation_r(1).expect("chain relation");
        assert_eq!(thin.classes.len(), r1.levels[1].classes.len());
        let mut total = 0;
        for c in &thin.classes {
            assert_eq!(c.wall_count, 10, "line walls always catch ten points");
            assert_eq!(c.interior_floor, 1, "one interior point per tile");
            assert_eq!(c.boundary_overlap, 1, "one straddler per class");
            assert!(c.size >= c.interior_floor * c.wall_count);
            total += c.size;
        }
        assert_eq!(total, h.base.len(), "classes cover the base");
    }

    #[test]
    fn structure_laws_at_the_top() {
        let h = line_hierarchy();
        assert!(h.saturated, "tower must have stalled for a conclusive check");
        let ctx = AfContext::new(h).expect("context");
        let top = ctx.top();
        let s1 = ctx.check_structure(1, top).expect("structure 1");
        assert!(s1.conclusive);
        assert!(s1.partition_ok);
        assert!(s1.image_law_ok);
        assert!(s1.collapse_law_ok);
        assert_eq!(s1.inside_next_ok, Some(true));
        // a finite tower retains one class per persistent wall; full
        // collapse to a single class needs unbounded depth
        assert!(!s1.single_class);
        let s2 = ctx.check_structure(2, top).expect("structure 2");
        assert!(s2.partition_ok);
        assert!(s2.image_law_ok);
        assert!(s2.inside_next_ok.is_none());
        // distinct walls keep distinct pair classes at finite depth, so the
        // full-length collapse law reads false here by design
        assert!(!s2.collapse_law_ok);
    }

    #[test]
    fn capacity_shortfall_is_reported() {
        let base = unit_circle_set(64).expect("base set");
        let h = build_hierarchy(&base, 0, &RefineConfig::desk(1).expect("profile")).expect("tower");
        let ctx = AfContext::new(&h).expect("context");
        match ctx.theta_table() {
            Err(GeomError::CapacityShortfall { level: 0, .. }) => {}
            other => panic!("expected a capacity shortfall, got {other:?}"),
        }
    }

    #[test]
    fn count_shortfall_is_reported() {
        let base = unit_circle_set(512).expect("base set");
        let cfg = RefineConfig {
            base_m: rint(2),
            counting_factor: rint(0),
            ..RefineConfig::desk(1).expect("profile")
        };
        let h = build_hierarchy(&base, 1, &cfg).expect("tower");
        assert!(h.levels.len() == 2, "need a coarse level for the block map");
        let ctx = AfContext::new(&h).expect("context");
        match ctx.a_map(0) {
            Err(GeomError::CountShortfall(_)) => {}
            other => panic!("expected a count shortfall, got {other:?}"),
        }
    }

    #[test]
    fn inadmissible_tuples_are_rejected() {
        let h = line_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        // two cells that no meeting family joins
        let far: Tile = (h.levels[0].set.len() / 2, vec![0]);
        let near: Tile = (0, vec![0]);
        assert!(!ctx.neighborhood(0, &near).contains(&far));
        let xi = TupleXi {
            level: 0,
            entries: vec![near, far],
        };
        match ctx.j_value(&xi, 2) {
            Err(GeomError::NoAdmissibleTuple(_)) => {}
            other => panic!("expected rejection, got {other:?}"),
        }
        match ctx.relation_q(1) {
            Err(GeomError::Config(_)) => {}
            other => panic!("expected a config error, got {other:?}"),
        }
        match ctx.thinness_report(ctx.top()) {
            Err(GeomError::Config(_)) => {}
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn plane_assignment_fills_coarse_cells() {
        let h = plane_theta_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        let th = ctx.theta_table().expect("theta");
        let mut assigned = 0;
        for c in 0..h.levels[0].set.len() {
            let f = th.per_cell_points[c].len();
            let z = th.per_cell_tuples[c].len();
            assert!(f >= z, "cell {c} holds {f} points for {z} tuples");
            assert!(z >= 2, "plane cell {c} sits in too few families");
            assigned += f;
        }
        assert_eq!(assigned, h.base.len());
        for p in (0..h.base.len()).step_by(7) {
            let xi = ctx.theta(p).expect("theta value");
            assert!(
                ctx.region_has_point(0, &xi.entries[0], &h.base.points[p]),
                "point {p} outside its leading tile"
            );
        }
    }

    #[test]
    fn sampled_plane_pushes_obey_the_laws() {
        let h = plane_survey_hierarchy();
        let ctx = AfContext::new(h).expect("context");
        let total = ctx.meet_count(0);
        let stride = (total / 24).max(1);
        let perms3 = permutations(3);
        let mut sampled: Vec<TupleXi> = Vec::new();
        for mi in (0..total).step_by(stride) {
            let m = ctx.meet(0, mi);
            for perm in &perms3 {
                sampled.push(TupleXi {
                    level: 0,
                    entries: perm.iter().map(|&i| m.tiles[i].clone()).collect(),
                });
            }
        }
        let mut checked = 0usize;
        let mut tail_checked = 0usize;
        for xi in &sampled {
            for n in 1..=3usize {
                if n >= 2 && !ctx.in_family(xi, n) {
                    continue;
                }
                if n == 1 {
                    // the single-parent branch routes through the block map,
                    // which this instance cannot afford; skip those
                    let nset = ctx.n_set(xi, 1).expect("touched parents");
                    if nset.len() < 2 {
                        continue;
                    }
                }
                let j = ctx.j_value(xi, n).expect("push-up defined");
                assert!(ctx.in_family(&j, n));
                let m_max = (n..=3)
                    .rev()
                    .find(|&m| ctx.in_family(xi, m))
                    .unwrap_or(n);
                for k in 0..m_max {
                    assert_eq!(j.entries[k], ctx.ancestor(0, &xi.entries[k]));
                }
                for m in 1..=3usize {
                    let want: BTreeSet<Tile> = xi.entries[..m]
                        .iter()
                        .map(|t| ctx.ancestor(0, t))
                        .collect();
                    let got: BTreeSet<Tile> =
                        j.entries[..want.len()].iter().cloned().collect();
                    assert_eq!(got, want);
                }
                checked += 1;
                // free slots beyond the touched parents take the smallest
                // admissible tile, measured geometrically
                let nset = ctx.n_set(xi, n).expect("touched parents");
                if nset.len() == 2 {
                    let wit = ctx.meet_witness(&j).expect("coarse witness");
                    let mut best: Option<Tile> = None;
                    for cand in ctx.neighborhood(1, &j.entries[0]) {
                        if j.entries[..2].contains(&cand) {
                            continue;
                        }
                        if ctx.tile_meets_common(1, &cand, &j.entries[..2], &wit)
                        {
                            let better = match &best {
                                None => true,
                                Some(b) => {
                                    ctx.tile_cmp(1, &cand, b) == Ordering::Less
                                }
                            };
                            if better {
                                best = Some(cand);
                            }
                        }
                    }
                    assert_eq!(
                        best.as_ref(),
                        Some(&j.entries[2]),
                        "greedy completion disagrees"
                    );
                    tail_checked += 1;
                }
            }
        }
        assert!(checked >= 100, "sample too small: {checked}");
        assert!(tail_checked >= 10, "tail sample too small: {tail_checked}");
        // slot symmetry within and across sampled families
        let mut by_lead: HashMap<(usize, Vec<Tile>), Vec<&TupleXi>> =
            HashMap::new();
        for xi in &sampled {
            for n in [2usize, 3] {
                if !ctx.in_family(xi, n) {
                    continue;
                }
                let mut lead: Vec<Tile> = xi.entries[..n].to_vec();
                lead.sort();
                let delta = lead[0].1.clone();
                let lead: Vec<Tile> = lead
                    .iter()
                    .map(|(c, s)| (*c, sub_shift(s, &delta)))
                    .collect();
                by_lead.entry((n, lead)).or_default().push(xi);
            }
        }
        let mut sym_checked = 0usize;
        for ((n, _), group) in &by_lead {
            if group.len() < 2 {
                continue;
            }
            let j0 = ctx.j_value(group[0], *n).expect("push-up");
            for other in &group[1..] {
                let j1 = ctx.j_value(other, *n).expect("push-up");
                let (c0, _) = j0.canonical();
                let (c1, _) = j1.canonical();
                let ok = perms3.iter().any(|sigma| {
                    let fixes: BTreeSet<usize> =
                        (0..*n).map(|k| sigma[k]).collect();
                    let want: BTreeSet<usize> = (0..*n).collect();
                    fixes == want && permute_tuple(&c0, sigma).canonical().0 == c1
                });
                assert!(ok, "no slot symmetry links two equal-lead push-ups");
                sym_checked += 1;
            }
        }
        assert!(sym_checked >= 20, "symmetry sample too small: {sym_checked}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn tuple_frames_compose(
            raw in proptest::collection::vec(
                (0usize..40, proptest::collection::vec(-3i64..4, 2)),
                3,
            ),
            shift in proptest::collection::vec(-3i64..4, 2),
        ) {
            let xi = TupleXi { level: 0, entries: raw };
            let (canon, delta) = xi.canonical();
            prop_assert_eq!(canon.translated(&delta), xi.clone());
            prop_assert_eq!(canon.entries[0].1.clone(), vec![0i64, 0]);
            let moved = xi.translated(&shift);
            let (canon2, _) = moved.canonical();
            prop_assert_eq!(canon2, canon);
            for sigma in permutations(3) {
                let mut inv = vec![0usize; 3];
                for (i, &s) in sigma.iter().enumerate() {
                    inv[s] = i;
                }
                let back = permute_tuple(&permute_tuple(&xi, &sigma), &inv);
                prop_assert_eq!(back, xi.clone());
            }
        }
    }
}
