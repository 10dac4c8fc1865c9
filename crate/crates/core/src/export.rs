//! Artifact writers. Two regimes on purpose: JSON and CSV carry exact
//! rationals as `p/q` strings and are the authoritative record; OFF carries
//! rounded decimal coordinates for mesh viewers and is flagged as such in
//! its header comments. Nothing here writes timings, so artifacts from
//! identical runs are byte-identical.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::Signed;
use serde_json::{json, Map, Value};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::af::EquivRelation;
use crate::dual::DualTessellation;
use crate::error::{GeomError, Result};
use crate::hierarchy::{Hierarchy, LevelReport};
use crate::kernel::Point;
use crate::num::{rat_f64, rat_to_string, Rat};
use crate::pointset::PointSet;
use crate::report::Report;
use crate::sliver::SliverReport;
use crate::triangulation::{Triangulation, WeightFunction};

/// Fixed-point decimal expansion with `digits` fractional digits, rounded
/// half away from zero. Lossy for most rationals; OFF-only.
pub fn rat_decimal(r: &Rat, digits: u32) -> String {
    let scale = BigInt::from(10u32).pow(digits);
    let scaled = r * Rat::from_integer(scale.clone());
    let num = scaled.numer() * BigInt::from(2) + scaled.denom() * BigInt::from(scaled.numer().signum());
    let rounded: BigInt = num / (scaled.denom() * BigInt::from(2));
    let neg = rounded.is_negative();
    let mag = rounded.abs();
    let (int, frac) = mag.div_rem(&scale);
    let sign = if neg { "-" } else { "" };
    if digits == 0 {
        return format!("{sign}{int}");
    }
    let frac_str = format!("{:0>width$}", frac.to_string(), width = digits as usize);
    format!("{sign}{int}.{frac_str}")
}

fn rs(r: &Rat) -> Value {
    Value::String(rat_to_string(r))
}

fn point_rs(p: &[Rat]) -> Value {
    Value::Array(p.iter().map(rs).collect())
}

fn shift_json(s: &[i64]) -> Value {
    Value::Array(s.iter().map(|&x| json!(x)).collect())
}

/// Decimal digits used in OFF coordinate lines.
pub const OFF_DIGITS: u32 = 15;

// ---------------------------------------------------------------------------
// OFF geometry

/// Collects rounded coordinates, deduplicating identical decimal triples.
struct OffVertices {
    order: Vec<String>,
    index: std::collections::HashMap<String, usize>,
}

impl OffVertices {
    fn new() -> Self {
        OffVertices {
            order: Vec::new(),
            index: std::collections::HashMap::new(),
        }
    }

    fn push(&mut self, p: &[Rat]) -> usize {
        let mut line = String::new();
        for (i, c) in p.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&rat_decimal(c, OFF_DIGITS));
        }
        if p.len() == 2 {
            line.push_str(" 0.0");
        }
        if let Some(&i) = self.index.get(&line) {
            return i;
        }
        let i = self.order.len();
        self.index.insert(line.clone(), i);
        self.order.push(line);
        i
    }
}

fn off_header(kind: &str, v: usize, f: usize) -> String {
    format!(
        "OFF\n# {kind}\n# decimal coordinates, rounded to {OFF_DIGITS} digits; not authoritative\n{v} {f} 0\n"
    )
}

/// The triangulation as a triangle (d = 2) or triangle-soup (d = 3, one
/// triangle per tetrahedron face) mesh.
pub fn off_triangulation(set: &PointSet, tri: &Triangulation) -> Result<String> {
    let d = set.domain.dim;
    if d != 2 && d != 3 {
        return Err(GeomError::UnsupportedDimension(d));
    }
    let mut verts = OffVertices::new();
    let mut faces: Vec<Vec<usize>> = Vec::new();
    for s in &tri.simplices {
        let ids: Vec<usize> = s
            .coords(set)
            .iter()
            .map(|c| verts.push(c))
            .collect();
        if d == 2 {
            faces.push(ids);
        } else {
            for skip in 0..ids.len() {
                let mut f: Vec<usize> = ids
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| v)
                    .collect();
                f.sort_unstable();
                faces.push(f);
            }
        }
    }
    if d == 3 {
        faces.sort();
        faces.dedup();
    }
    let mut out = off_header("regular triangulation", verts.order.len(), faces.len());
    for v in &verts.order {
        let _ = writeln!(out, "{v}");
    }
    for f in &faces {
        let _ = write!(out, "{}", f.len());
        for i in f {
            let _ = write!(out, " {i}");
        }
        out.push('\n');
    }
    Ok(out)
}

fn centroid_f64(ps: &[Point]) -> Vec<f64> {
    let d = ps[0].len();
    let mut c = vec![0.0; d];
    for p in ps {
        for (ci, x) in c.iter_mut().zip(p) {
            *ci += rat_f64(x);
        }
    }
    for ci in &mut c {
        *ci /= ps.len() as f64;
    }
    c
}

/// Indices of `ps` in counterclockwise order around their centroid after
/// projecting out `normal` (2-d inputs pass `None`). Export-only ordering,
/// done in floating point.
fn angular_order(ps: &[Point], normal: Option<&[f64]>) -> Vec<usize> {
    let c = centroid_f64(ps);
    let (e1, e2) = match normal {
        None => (vec![1.0, 0.0], vec![0.0, 1.0]),
        Some(n) => {
            let pick = if n[0].abs() < 0.9 {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 1.0, 0.0]
            };
            let mut e1 = [
                n[1] * pick[2] - n[2] * pick[1],
                n[2] * pick[0] - n[0] * pick[2],
                n[0] * pick[1] - n[1] * pick[0],
            ];
            let l1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
            for x in &mut e1 {
                *x /= l1;
            }
            let e2 = [
                n[1] * e1[2] - n[2] * e1[1],
                n[2] * e1[0] - n[0] * e1[2],
                n[0] * e1[1] - n[1] * e1[0],
            ];
            (e1.to_vec(), e2.to_vec())
        }
    };
    let mut idx: Vec<usize> = (0..ps.len()).collect();
    idx.sort_by(|&a, &b| {
        let ang = |i: usize| {
            let p: Vec<f64> = ps[i].iter().map(rat_f64).collect();
            let rel: Vec<f64> = p.iter().zip(&c).map(|(x, cx)| x - cx).collect();
            let u: f64 = rel.iter().zip(&e1).map(|(x, e)| x * e).sum();
            let v: f64 = rel.iter().zip(&e2).map(|(x, e)| x * e).sum();
            v.atan2(u)
        };
        ang(a).partial_cmp(&ang(b)).unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

/// The dual tessellation with every piece exported as its own polygon
/// (d = 2) or polyhedron surface (d = 3), grouped by owning cell through
/// face-list comments.
pub fn off_dual(set: &PointSet, dual: &DualTessellation) -> Result<String> {
    let d = set.domain.dim;
    if d != 2 && d != 3 {
        return Err(GeomError::UnsupportedDimension(d));
    }
    let mut verts = OffVertices::new();
    // (owner, face vertex lists)
    let mut groups: Vec<(usize, Vec<Vec<usize>>)> = Vec::new();
    for cell in &dual.cells {
        let mut faces: Vec<Vec<usize>> = Vec::new();
        for piece in &cell.pieces {
            if d == 2 {
                let order = angular_order(&piece.vertices, None);
                faces.push(
                    order
                        .iter()
                        .map(|&i| verts.push(&piece.vertices[i]))
                        .collect(),
                );
            } else {
                for (fi, on) in piece.facets.on_facet.iter().enumerate() {
                    if on.len() < 3 {
                        continue;
                    }
                    let pts: Vec<Point> =
                        on.iter().map(|&i| piece.vertices[i].clone()).collect();
                    let n: Vec<f64> = piece.facets.halves[fi]
                        .normal
                        .iter()
                        .map(rat_f64)
                        .collect();
                    let order = angular_order(&pts, Some(&n));
                    faces.push(order.iter().map(|&i| verts.push(&pts[i])).collect());
                }
            }
        }
        groups.push((cell.owner, faces));
    }
    let total: usize = groups.iter().map(|(_, f)| f.len()).sum();
    let mut out = off_header("dual tessellation pieces", verts.order.len(), total);
    for v in &verts.order {
        let _ = writeln!(out, "{v}");
    }
    for (owner, faces) in &groups {
        let _ = writeln!(out, "# cell of point {owner}");
        for f in faces {
            let _ = write!(out, "{}", f.len());
            for i in f {
                let _ = write!(out, " {i}");
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// Minimal OFF reader for round-trip checks: vertex coordinate triples and
/// face index lists. Ignores comments and edge counts.
pub fn parse_off(text: &str) -> Result<(Vec<Vec<f64>>, Vec<Vec<usize>>)> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| GeomError::Parse("empty OFF".into()))?;
    if header != "OFF" {
        return Err(GeomError::Parse(format!("bad OFF header {header:?}")));
    }
    let counts = lines
        .next()
        .ok_or_else(|| GeomError::Parse("missing OFF counts".into()))?;
    let mut it = counts.split_whitespace();
    let nv: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| GeomError::Parse("bad vertex count".into()))?;
    let nf: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| GeomError::Parse("bad face count".into()))?;
    let mut vs = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = lines
            .next()
            .ok_or_else(|| GeomError::Parse("truncated OFF vertices".into()))?;
        let coords: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| GeomError::Parse(format!("bad coordinate {t:?}")))
            })
            .collect::<Result<_>>()?;
        vs.push(coords);
    }
    let mut fs = Vec::with_capacity(nf);
    for _ in 0..nf {
        let line = lines
            .next()
            .ok_or_else(|| GeomError::Parse("truncated OFF faces".into()))?;
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| GeomError::Parse(format!("bad face index {t:?}")))
            })
            .collect::<Result<_>>()?;
        if nums.is_empty() || nums.len() != nums[0] + 1 {
            return Err(GeomError::Parse("face arity mismatch".into()));
        }
        fs.push(nums[1..].to_vec());
    }
    Ok((vs, fs))
}

// ---------------------------------------------------------------------------
// JSON

/// Simplex vertex lists with period shifts, per-cell orthospheres, and the
/// simplex-to-cell grouping.
pub fn triangulation_json(set: &PointSet, tri: &Triangulation) -> Value {
    let simplices: Vec<Value> = tri
        .simplices
        .iter()
        .zip(&tri.parent)
        .map(|(s, &cell)| {
            json!({
                "vertices": s
                    .vertices
                    .iter()
                    .map(|v| json!([v.id, shift_json(&v.shift)]))
                    .collect::<Vec<_>>(),
                "cell": cell,
            })
        })
        .collect();
    let cells: Vec<Value> = tri
        .complex
        .cells
        .iter()
        .map(|c| {
            json!({
                "vertices": c
                    .vertices
                    .iter()
                    .map(|v| json!([v.id, shift_json(&v.shift)]))
                    .collect::<Vec<_>>(),
                "sphere": {"z": point_rs(&c.sphere.z), "u": rs(&c.sphere.u)},
            })
        })
        .collect();
    json!({
        "dimension": set.domain.dim,
        "period": rs(&set.domain.period),
        "points": set.points.iter().map(|p| point_rs(p)).collect::<Vec<_>>(),
        "simplices": simplices,
        "cells": cells,
    })
}

/// Chosen weights with per-point forbidden-interval statistics and the
/// margins of the final sliver check.
pub fn sliver_json(
    wf: &WeightFunction,
    interval_stats: &[(usize, Rat)],
    rep: &SliverReport,
) -> Value {
    let points: Vec<Value> = wf
        .weights
        .iter()
        .zip(interval_stats)
        .map(|(w, (count, len))| {
            json!({
                "weight": rs(w),
                "intervals": count,
                "forbidden_length_upper": rs(len),
            })
        })
        .collect();
    json!({
        "scale": rs(&wf.scale),
        "points": points,
        "margins": {
            "simplices": rep.simplex_count,
            "min_volume": rs(&rep.min_volume),
            "volume_floor": rs(&rep.volume_floor),
            "min_altitude_sq": rs(&rep.min_altitude_sq),
            "altitude_floor_sq": {
                "plain": rs(&rep.altitude_floor_sq.plain),
                "pi_pow": rep.altitude_floor_sq.pi_pow,
            },
        },
    })
}

/// Cell adjacency with shifts, plus exact volume and reach margins.
pub fn dual_json(set: &PointSet, dual: &DualTessellation) -> Value {
    let cells: Vec<Value> = dual
        .cells
        .iter()
        .map(|c| {
            json!({
                "owner": c.owner,
                "pieces": c.pieces.len(),
                "volume": rs(&c.volume),
                "reach_sq": rs(&c.reach_sq),
            })
        })
        .collect();
    let adjacency: Vec<Value> = dual
        .adjacency
        .iter()
        .map(|adj| {
            Value::Array(
                adj.iter()
                    .map(|(j, s)| json!([j, shift_json(s)]))
                    .collect(),
            )
        })
        .collect();
    let total: Rat = dual.cells.iter().map(|c| c.volume.clone()).sum();
    let max_degree = dual.adjacency.iter().map(|a| a.len()).max().unwrap_or(0);
    json!({
        "dimension": set.domain.dim,
        "period": rs(&set.domain.period),
        "cells": cells,
        "adjacency": adjacency,
        "margins": {
            "total_volume": rs(&total),
            "max_degree": max_degree,
        },
    })
}

/// Per-cell margin rows; one row per dual cell.
pub fn margins_csv(dual: &DualTessellation) -> String {
    let mut out = String::from("cell,owner,pieces,neighbors,volume,reach_sq\n");
    for (i, c) in dual.cells.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            i,
            c.owner,
            c.pieces.len(),
            dual.adjacency[i].len(),
            rat_to_string(&c.volume),
            rat_to_string(&c.reach_sq)
        );
    }
    out
}

/// Per-level cells with child lists and anchor coordinates, plus the
/// verification reports.
pub fn hierarchy_json(h: &Hierarchy, reports: &[LevelReport]) -> Value {
    let levels: Vec<Value> = h
        .levels
        .iter()
        .map(|lv| {
            let cells: Vec<Value> = (0..lv.set.len())
                .map(|c| {
                    let children = lv.children.as_ref().map(|ch| {
                        ch[c]
                            .iter()
                            .map(|(f, s)| json!([f, shift_json(s)]))
                            .collect::<Vec<_>>()
                    });
                    let anchor = lv.witnesses[c].as_ref().map(|w| point_rs(w));
                    json!({
                        "children": children,
                        "anchor": anchor,
                    })
                })
                .collect();
            let verification: Value = reports
                .iter()
                .find(|r| r.level == lv.index)
                .map(|r| {
                    let mut m = Map::new();
                    for c in &r.conditions {
                        m.insert(
                            c.name.to_string(),
                            json!({"ok": c.ok, "detail": c.detail}),
                        );
                    }
                    Value::Object(m)
                })
                .unwrap_or(Value::Null);
            json!({
                "index": lv.index,
                "scale": rs(&lv.m),
                "sites": lv.set.len(),
                "cells": cells,
                "verification": verification,
            })
        })
        .collect();
    json!({
        "depth": h.levels.len(),
        "saturated": h.saturated,
        "levels": levels,
    })
}

/// Classes as id-to-members maps plus the per-level merge log.
pub fn relation_json(rel: &EquivRelation) -> Value {
    let levels: Vec<Value> = rel
        .levels
        .iter()
        .map(|lp| {
            let mut classes = Map::new();
            for (i, c) in lp.classes.iter().enumerate() {
                classes.insert(i.to_string(), json!(c));
            }
            json!({
                "level": lp.level,
                "classes": Value::Object(classes),
                "merges": lp
                    .merges
                    .iter()
                    .map(|(a, b)| json!([a, b]))
                    .collect::<Vec<_>>(),
                "monotone": lp.monotone,
            })
        })
        .collect();
    json!({
        "n": rel.n,
        "kind": format!("{:?}", rel.kind),
        "members": rel.members,
        "levels": levels,
    })
}

// ---------------------------------------------------------------------------
// files

/// Writes one artifact file, creating the directory if needed.
pub fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, content)?;
    Ok(path)
}

/// Serializes a JSON artifact with a stable layout.
pub fn json_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serialization");
    s.push('\n');
    s
}

/// Writes the full artifact set for a run directory.
pub fn write_report(dir: &Path, report: &Report) -> Result<PathBuf> {
    write_artifact(dir, "report.json", &report.to_json_string()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{parse_rat, rat, rint};

    #[test]
    fn decimal_rounds_half_away() {
        assert_eq!(rat_decimal(&rat(1, 3), 5), "0.33333");
        assert_eq!(rat_decimal(&rat(-1, 3), 5), "-0.33333");
        assert_eq!(rat_decimal(&rat(1, 2), 0), "1");
        assert_eq!(rat_decimal(&rat(5, 2), 1), "2.5");
        assert_eq!(rat_decimal(&rint(2), 3), "2.000");
        assert_eq!(rat_decimal(&rat(-7, 4), 1), "-1.8");
    }

    #[test]
    fn decimal_round_trips_at_export_precision() {
        for (n, d) in [(1i64, 7i64), (22, 7), (-355, 113), (1, 999983)] {
            let r = rat(n, d);
            let s = rat_decimal(&r, OFF_DIGITS);
            let back = parse_rat(&s).expect("parse");
            let err = (&back - &r).abs();
            assert!(err < rat(1, 1_000_000_000_000), "{s} vs {n}/{d}");
        }
    }

    #[test]
    fn off_round_trip_small() {
        let text = "OFF\n# comment\n3 1 0\n0.0 0.0 0.0\n1.0 0.0 0.0\n0.0 1.0 0.0\n3 0 1 2\n";
        let (vs, fs) = parse_off(text).expect("parse");
        assert_eq!(vs.len(), 3);
        assert_eq!(fs, vec![vec![0, 1, 2]]);
    }
}
