//! Staged end-to-end runs.
//!
//! A run takes a generator description to a verified tessellation (and
//! optionally a refinement tower with its boundary combinatorics), records
//! every invariant it checked in a [`Report`], and mirrors the state into
//! plain-text artifacts.  The same stages back the command-line verbs, the
//! oracle battery, and the acceptance criteria in [`criteria`].

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use num_traits::{One, Signed, Zero};

use crate::dual::{
    build_dual, capacity_check, meet_structure, separation_check, DualTessellation,
};
use crate::error::{GeomError, Result};
use crate::export;
use crate::hierarchy::{
    build_hierarchy, offset_row_lattice, unit_circle_set, verify_all, Hierarchy, LevelReport,
    RefineConfig,
};
use crate::num::{parse_rat, rat, rat_to_string, rint, Rat};
use crate::oracle;
use crate::pointset::PointSet;
use crate::report::{Report, StageReport};
use crate::sliver::{
    assign_weights, c2_sq, forbidden_set, verify_no_slivers, SliverConfig, SliverProfile,
    SliverReport,
};
use crate::torus::TorusDomain;
use crate::triangulation::{
    stats, triangulation, verify_face_to_face, Triangulation, TriangulationStats, WeightFunction,
};

fn prat(s: &str) -> Result<Rat> {
    parse_rat(s).map_err(GeomError::Parse)
}

// ---------------------------------------------------------------------------
// run configuration

/// How the raw point set is produced.
#[derive(Clone, Debug)]
pub enum Generator {
    /// Lattice with dyadic jitter; requires `4 * jitter < pitch`.
    Jitter { pitch: Rat, jitter: Rat, grid_log2: u32 },
    /// Unit-spaced circle, dimension one only.
    Circle,
    /// Offset double rows, dimension two only.
    Rows,
}

/// Everything a deterministic run depends on.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub dim: usize,
    pub period: Rat,
    pub generator: Generator,
    pub seed: u64,
    /// Working separation scale: the thinned set is scale-separated and
    /// `2 * scale`-syndetic.
    pub scale: Rat,
    pub sliver: SliverConfig,
    pub refine: RefineConfig,
    /// Levels above the base; zero stops the run after dualization.
    pub depth: usize,
    pub label: String,
}

/// Last stage a partial run executes; later stages are skipped entirely.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageKind {
    Generate,
    Triangulate,
    Dualize,
    Refine,
    AfCheck,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let dom = TorusDomain::new(self.dim, self.period.clone())?;
        if !self.scale.is_positive() {
            return Err(GeomError::Config("working scale must be positive".into()));
        }
        dom.check_scale(&self.scale)?;
        match &self.generator {
            Generator::Jitter { pitch, .. } => {
                if !pitch.is_positive() {
                    return Err(GeomError::Config("lattice pitch must be positive".into()));
                }
            }
            Generator::Circle => {
                if self.dim != 1 {
                    return Err(GeomError::Config(
                        "the circle generator is one-dimensional".into(),
                    ));
                }
                period_int(&self.period)?;
            }
            Generator::Rows => {
                if self.dim != 2 {
                    return Err(GeomError::Config(
                        "the row generator is two-dimensional".into(),
                    ));
                }
                period_int(&self.period)?;
            }
        }
        if self.depth > 0 && self.refine.base_m != self.scale {
            return Err(GeomError::Config(format!(
                "refinement base scale {} must match the working scale {}",
                self.refine.base_m, self.scale
            )));
        }
        Ok(())
    }
}

fn period_int(period: &Rat) -> Result<i64> {
    if !period.is_integer() {
        return Err(GeomError::Config(format!(
            "this generator needs an integer period, got {period}"
        )));
    }
    i64::try_from(period.numer().clone())
        .map_err(|_| GeomError::Config("period out of range".into()))
}

/// Reference run: plane, one hundred-odd working sites, no refinement.
/// Small enough for a desk smoke run, rich enough to exercise every stage
/// up to dualization.
pub fn reference_config() -> RunConfig {
    let mut refine = RefineConfig::desk(2).expect("stock plane profile");
    refine.base_m = rint(2);
    RunConfig {
        dim: 2,
        period: rint(36),
        generator: Generator::Jitter {
            pitch: rint(2),
            jitter: rat(1, 4),
            grid_log2: 10,
        },
        seed: 20260822,
        scale: rint(2),
        sliver: SliverConfig::desk(),
        refine,
        depth: 0,
        label: "reference-d2".into(),
    }
}

/// Smallest full run: a short circle, no refinement.  Used by fast tests.
pub fn tiny_line_config() -> RunConfig {
    let mut refine = RefineConfig::desk(1).expect("stock line profile");
    refine.base_m = rint(2);
    RunConfig {
        dim: 1,
        period: rint(96),
        generator: Generator::Circle,
        seed: 7,
        scale: rint(2),
        sliver: SliverConfig::desk(),
        refine,
        depth: 0,
        label: "line-96".into(),
    }
}

/// Two-level circle tower with the tight counting profile; the default
/// instance behind the refinement and boundary-check verbs.
pub fn line_tower_config() -> RunConfig {
    let mut refine = RefineConfig::desk(1).expect("stock line profile");
    refine.base_m = rint(2);
    refine.counting_factor = rat(2, 15);
    RunConfig {
        dim: 1,
        period: rint(2048),
        generator: Generator::Circle,
        seed: 7,
        scale: rint(2),
        sliver: SliverConfig::desk(),
        refine,
        depth: 2,
        label: "line-tower".into(),
    }
}

// ---------------------------------------------------------------------------
// configuration files

/// Parses the `key = value` section format into a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    config_with_overrides(text, &[])
}

/// Same, with `section.key = value` pairs applied on top of the file.
pub fn config_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut map = read_kv(text)?;
    for (k, v) in overrides {
        let key = k.trim();
        if !key.contains('.') {
            return Err(GeomError::Config(format!(
                "override '{key}' must use section.key form"
            )));
        }
        map.insert(key.to_string(), v.trim().to_string());
    }
    config_from_map(&map)
}

fn read_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut section = String::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(GeomError::Config(format!(
                "line {}: expected 'key = value', got '{line}'",
                ln + 1
            )));
        };
        if section.is_empty() {
            return Err(GeomError::Config(format!(
                "line {}: key outside any [section]",
                ln + 1
            )));
        }
        map.insert(
            format!("{section}.{}", k.trim()),
            v.trim().to_string(),
        );
    }
    Ok(map)
}

fn config_from_map(map: &BTreeMap<String, String>) -> Result<RunConfig> {
    const KNOWN: &[&str] = &[
        "domain.dim",
        "domain.period",
        "points.generator",
        "points.pitch",
        "points.jitter",
        "points.grid_log2",
        "points.seed",
        "points.scale",
        "sliver.profile",
        "sliver.c1",
        "sliver.grid_depth",
        "refine.profile",
        "refine.base_m",
        "refine.counting_factor",
        "refine.depth",
        "run.label",
    ];
    for k in map.keys() {
        if !KNOWN.contains(&k.as_str()) {
            return Err(GeomError::Config(format!("unknown configuration key {k}")));
        }
    }
    let need = |k: &str| -> Result<&String> {
        map.get(k)
            .ok_or_else(|| GeomError::Config(format!("missing configuration key {k}")))
    };
    let get_rat = |k: &str, default: Option<Rat>| -> Result<Rat> {
        match map.get(k) {
            Some(v) => prat(v),
            None => default.ok_or_else(|| GeomError::Config(format!("missing key {k}"))),
        }
    };
    let get_usize = |k: &str, default: usize| -> Result<usize> {
        match map.get(k) {
            Some(v) => v
                .parse()
                .map_err(|_| GeomError::Config(format!("{k} must be an integer, got '{v}'"))),
            None => Ok(default),
        }
    };

    let dim: usize = need("domain.dim")?
        .parse()
        .map_err(|_| GeomError::Config("domain.dim must be an integer".into()))?;
    let period = prat(need("domain.period")?)?;
    let scale = prat(need("points.scale")?)?;
    let seed = get_usize("points.seed", 1)? as u64;

    let generator = match map.get("points.generator").map(String::as_str) {
        None | Some("jitter") => Generator::Jitter {
            pitch: get_rat("points.pitch", Some(rint(2)))?,
            jitter: get_rat("points.jitter", Some(rat(1, 4)))?,
            grid_log2: get_usize("points.grid_log2", 10)? as u32,
        },
        Some("circle") => Generator::Circle,
        Some("rows") => Generator::Rows,
        Some(other) => {
            return Err(GeomError::Config(format!(
                "unknown generator '{other}' (expected jitter, circle, or rows)"
            )))
        }
    };

    let mut sliver = match map.get("sliver.profile").map(String::as_str) {
        None | Some("desk") => SliverConfig::desk(),
        Some("paper") => SliverConfig::paper(dim),
        Some(other) => {
            return Err(GeomError::Config(format!(
                "unknown sliver profile '{other}' (expected desk or paper)"
            )))
        }
    };
    if let Some(v) = map.get("sliver.c1") {
        sliver.c1_eff = prat(v)?;
    }
    sliver.grid_depth = get_usize("sliver.grid_depth", sliver.grid_depth as usize)? as u32;

    let mut refine = match map.get("refine.profile").map(String::as_str) {
        None | Some("desk") => RefineConfig::desk(dim)?,
        Some("paper") => RefineConfig::paper(dim)?,
        Some(other) => {
            return Err(GeomError::Config(format!(
                "unknown refinement profile '{other}' (expected desk or paper)"
            )))
        }
    };
    refine.base_m = get_rat("refine.base_m", Some(scale.clone()))?;
    if let Some(v) = map.get("refine.counting_factor") {
        refine.counting_factor = prat(v)?;
    }
    let depth = get_usize("refine.depth", 0)?;

    let label = map
        .get("run.label")
        .cloned()
        .unwrap_or_else(|| "run".into());

    let cfg = RunConfig {
        dim,
        period,
        generator,
        seed,
        scale,
        sliver,
        refine,
        depth,
        label,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Emits the configuration in the same format [`parse_config`] reads.
pub fn render_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    s.push_str("[domain]\n");
    s.push_str(&format!("dim = {}\n", cfg.dim));
    s.push_str(&format!("period = {}\n", rat_to_string(&cfg.period)));
    s.push_str("\n[points]\n");
    match &cfg.generator {
        Generator::Jitter {
            pitch,
            jitter,
            grid_log2,
        } => {
            s.push_str("generator = jitter\n");
            s.push_str(&format!("pitch = {}\n", rat_to_string(pitch)));
            s.push_str(&format!("jitter = {}\n", rat_to_string(jitter)));
            s.push_str(&format!("grid_log2 = {grid_log2}\n"));
        }
        Generator::Circle => s.push_str("generator = circle\n"),
        Generator::Rows => s.push_str("generator = rows\n"),
    }
    s.push_str(&format!("seed = {}\n", cfg.seed));
    s.push_str(&format!("scale = {}\n", rat_to_string(&cfg.scale)));
    s.push_str("\n[sliver]\n");
    let profile = match cfg.sliver.profile {
        SliverProfile::Paper => "paper",
        SliverProfile::Desk => "desk",
    };
    s.push_str(&format!("profile = {profile}\n"));
    s.push_str(&format!("c1 = {}\n", rat_to_string(&cfg.sliver.c1_eff)));
    s.push_str(&format!("grid_depth = {}\n", cfg.sliver.grid_depth));
    s.push_str("\n[refine]\n");
    s.push_str("profile = desk\n");
    s.push_str(&format!("base_m = {}\n", rat_to_string(&cfg.refine.base_m)));
    s.push_str(&format!(
        "counting_factor = {}\n",
        rat_to_string(&cfg.refine.counting_factor)
    ));
    s.push_str(&format!("depth = {}\n", cfg.depth));
    s.push_str("\n[run]\n");
    s.push_str(&format!("label = {}\n", cfg.label));
    s
}

// ---------------------------------------------------------------------------
// staged execution

/// Everything a completed run leaves in memory.  Stages that were skipped
/// (by depth or by an early [`StageKind`]) leave `None`.
pub struct RunOutput {
    pub raw: PointSet,
    pub work: PointSet,
    pub colors: Vec<usize>,
    pub color_count: usize,
    pub wf: Option<WeightFunction>,
    pub tri: Option<Triangulation>,
    pub stats: Option<TriangulationStats>,
    pub sliver: Option<SliverReport>,
    pub dual: Option<DualTessellation>,
    pub hierarchy: Option<Hierarchy>,
    pub level_reports: Vec<LevelReport>,
}

/// Runs every stage and, when `out_dir` is given, writes the artifacts and
/// the report there.  The report is returned even when a stage aborts.
pub fn run_pipeline(cfg: &RunConfig, out_dir: Option<&Path>) -> (Report, Result<RunOutput>) {
    run_pipeline_until(cfg, StageKind::AfCheck, out_dir)
}

/// Runs the stages up to and including `until`.
pub fn run_pipeline_until(
    cfg: &RunConfig,
    until: StageKind,
    out_dir: Option<&Path>,
) -> (Report, Result<RunOutput>) {
    let mut rep = Report::new(&cfg.label, cfg.seed);
    let res = drive(cfg, until, &mut rep, out_dir);
    if let Some(dir) = out_dir {
        if let Err(e) = export::write_report(dir, &rep) {
            return (rep, Err(e));
        }
    }
    (rep, res)
}

fn drive(
    cfg: &RunConfig,
    until: StageKind,
    rep: &mut Report,
    out_dir: Option<&Path>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let raw = generate_stage(cfg, rep)?;
    let work = thin_stage(cfg, rep, &raw)?;
    let (colors, color_count) = color_stage(cfg, rep, &work)?;
    let mut out = RunOutput {
        raw,
        work,
        colors,
        color_count,
        wf: None,
        tri: None,
        stats: None,
        sliver: None,
        dual: None,
        hierarchy: None,
        level_reports: Vec::new(),
    };
    if until >= StageKind::Triangulate {
        let wf = weight_stage(cfg, rep, &out.work, &out.colors, out.color_count)?;
        let (tri, st, sliver) = triangulate_stage(cfg, rep, &out.work, &wf)?;
        out.wf = Some(wf);
        out.tri = Some(tri);
        out.stats = Some(st);
        out.sliver = sliver;
    }
    if until >= StageKind::Dualize {
        let tri = out.tri.as_ref().expect("triangulation stage ran");
        out.dual = Some(dual_stage(cfg, rep, &out.work, tri)?);
    }
    if until >= StageKind::Refine && cfg.depth > 0 {
        // the tower thins its own base, so hand it the full raw set: the
        // boundary map later needs the thinned-away points too
        let (h, reports) = refine_stage(cfg, rep, &out.raw, out_dir)?;
        out.hierarchy = Some(h);
        out.level_reports = reports;
    }
    if until >= StageKind::AfCheck && cfg.depth > 0 {
        let h = out.hierarchy.as_ref().expect("refinement stage ran");
        af_stage(rep, h, out_dir)?;
    }
    if out_dir.is_some() {
        export_stage(cfg, rep, &out, out_dir.expect("checked"))?;
    }
    Ok(out)
}

fn finish(rep: &mut Report, mut st: StageReport, t: Instant) {
    st.seconds = t.elapsed().as_secs_f64();
    rep.push(st);
}

fn generate_stage(cfg: &RunConfig, rep: &mut Report) -> Result<PointSet> {
    let t = Instant::now();
    let mut st = StageReport::new("generate");
    let raw = build_raw(cfg)?;
    match &raw.cert {
        Some(c) => {
            st.check_detail(
                "raw set carries a certificate",
                true,
                format!("{} points", raw.len()),
            );
            st.check_margin("raw separation is positive", c.sep_sq_lo.is_positive(), &c.sep_sq_lo);
        }
        None => st.check("raw set carries a certificate", false),
    }
    finish(rep, st, t);
    Ok(raw)
}

fn build_raw(cfg: &RunConfig) -> Result<PointSet> {
    match &cfg.generator {
        Generator::Jitter {
            pitch,
            jitter,
            grid_log2,
        } => {
            let dom = TorusDomain::new(cfg.dim, cfg.period.clone())?;
            PointSet::perturbed_lattice(dom, pitch, jitter, *grid_log2, cfg.seed)
        }
        Generator::Circle => unit_circle_set(period_int(&cfg.period)?),
        Generator::Rows => offset_row_lattice(period_int(&cfg.period)?),
    }
}

fn thin_work(cfg: &RunConfig, raw: &PointSet) -> Result<PointSet> {
    let m_sq = &cfg.scale * &cfg.scale;
    let ids = raw.thin(&m_sq);
    let mut work = raw.subset(&ids)?;
    work.validate_and_certify(&m_sq, &(rint(4) * &m_sq))?;
    Ok(work)
}

fn thin_stage(cfg: &RunConfig, rep: &mut Report, raw: &PointSet) -> Result<PointSet> {
    let t = Instant::now();
    let mut st = StageReport::new("thin");
    let m_sq = &cfg.scale * &cfg.scale;
    match thin_work(cfg, raw) {
        Ok(work) => {
            let cert = work.cert.as_ref().expect("just certified");
            st.check_margin(
                "working set is scale-separated",
                cert.sep_sq_lo >= m_sq,
                &(&cert.sep_sq_lo - &m_sq),
            );
            st.check_margin(
                "working set is doubly syndetic",
                cert.cov_sq_hi <= rint(4) * &m_sq,
                &(rint(4) * &m_sq - &cert.cov_sq_hi),
            );
            st.check_detail(
                "thinning kept a nonempty core",
                !work.points.is_empty(),
                format!("{} of {} points kept", work.len(), raw.len()),
            );
            finish(rep, st, t);
            Ok(work)
        }
        Err(e) => {
            st.check_detail("working set is scale-separated", false, e.to_string());
            finish(rep, st, t);
            Err(e)
        }
    }
}

fn color_stage(cfg: &RunConfig, rep: &mut Report, work: &PointSet) -> Result<(Vec<usize>, usize)> {
    let t = Instant::now();
    let mut st = StageReport::new("color");
    let r_sq = rint(20) * &cfg.scale * &cfg.scale;
    let (colors, count) = work.color_separated(&r_sq);
    // verify the guarantee instead of trusting the construction
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (p, &c) in colors.iter().enumerate() {
        groups[c].push(p);
    }
    let mut bad = 0usize;
    for g in &groups {
        for (i, &a) in g.iter().enumerate() {
            for &b in &g[i + 1..] {
                if work.domain.dist_sq(&work.points[a], &work.points[b]) <= r_sq {
                    bad += 1;
                }
            }
        }
    }
    st.check_detail(
        "same-color points clear the interaction radius",
        bad == 0,
        format!("{count} colors, {bad} close pairs"),
    );
    finish(rep, st, t);
    Ok((colors, count))
}

fn weight_stage(
    cfg: &RunConfig,
    rep: &mut Report,
    work: &PointSet,
    colors: &[usize],
    color_count: usize,
) -> Result<WeightFunction> {
    let t = Instant::now();
    let mut st = StageReport::new("weights");
    let wf = match assign_weights(work, &cfg.scale, &cfg.sliver, colors, color_count) {
        Ok(wf) => wf,
        Err(e) => {
            st.check_detail("every point found an admissible weight", false, e.to_string());
            finish(rep, st, t);
            return Err(e);
        }
    };
    st.check("every point found an admissible weight", true);
    let cap = wf.max_weight();
    let max_used = wf
        .weights
        .iter()
        .cloned()
        .max()
        .unwrap_or_else(Rat::zero);
    st.check_margin(
        "weights stay under the cap",
        wf.check(work.len()).is_ok(),
        &(&cap - &max_used),
    );
    finish(rep, st, t);
    Ok(wf)
}

fn triangulate_stage(
    cfg: &RunConfig,
    rep: &mut Report,
    work: &PointSet,
    wf: &WeightFunction,
) -> Result<(Triangulation, TriangulationStats, Option<SliverReport>)> {
    let t = Instant::now();
    let mut st = StageReport::new("triangulate");
    let tri = triangulation(work, wf)?;
    let s = stats(&tri, work);
    let m_sq = &cfg.scale * &cfg.scale;
    st.check_margin(
        "orthoradii stay below the covering bound",
        s.max_u < rint(4) * &m_sq,
        &(rint(4) * &m_sq - &s.max_u),
    );
    st.check_margin(
        "cell edges stay below the interaction bound",
        s.max_pair_dist_sq < rint(20) * &m_sq,
        &(rint(20) * &m_sq - &s.max_pair_dist_sq),
    );
    match verify_face_to_face(work, &tri.complex) {
        Ok(k) => st.check_detail(
            "adjacent cells share exact faces",
            true,
            format!("{k} face incidences, {} simplices", s.simplex_count),
        ),
        Err(e) => st.check_detail("adjacent cells share exact faces", false, e.to_string()),
    }
    let sliver = match verify_no_slivers(work, &tri, &cfg.scale, &cfg.sliver) {
        Ok(r) => {
            st.check_margin(
                "simplex volumes clear the floor",
                r.min_volume >= r.volume_floor,
                &(&r.min_volume - &r.volume_floor),
            );
            if cfg.dim >= 2 {
                st.check_detail(
                    "simplex altitudes clear the floor",
                    r.altitude_floor_sq.cmp_rat(&r.min_altitude_sq) == std::cmp::Ordering::Less,
                    format!("min altitude^2 {}", rat_to_string(&r.min_altitude_sq)),
                );
            }
            Some(r)
        }
        Err(e @ GeomError::SliverFound(_)) => {
            st.check_detail("simplex volumes clear the floor", false, e.to_string());
            None
        }
        Err(e) => return Err(e),
    };
    finish(rep, st, t);
    Ok((tri, s, sliver))
}

/// Shared sampling radius: the capacity ball the dual module certifies,
/// `c2 m / (d + 1)` squared.  On the line the analytic radius touches the
/// tightest admissible gap exactly, where the strict nesting certificate
/// cannot conclude, so it is shrunk to three quarters there.
pub fn sampling_radius_sq(cfg: &SliverConfig, dim: usize, m: &Rat) -> Result<Rat> {
    let denom = rint(((dim + 1) * (dim + 1)) as i64);
    let cap = c2_sq(&cfg.c1_eff, dim)?.plain * m * m / denom;
    Ok(if dim == 1 { cap * rat(9, 16) } else { cap })
}

fn dual_stage(
    cfg: &RunConfig,
    rep: &mut Report,
    work: &PointSet,
    tri: &Triangulation,
) -> Result<DualTessellation> {
    let t = Instant::now();
    let mut st = StageReport::new("dualize");
    let dual = build_dual(work, tri)?;
    let mut total = Rat::zero();
    for c in &dual.cells {
        total = total + &c.volume;
    }
    let mut torus_vol = Rat::one();
    for _ in 0..cfg.dim {
        torus_vol = torus_vol * &cfg.period;
    }
    st.check_detail(
        "cell volumes fill the torus exactly",
        total == torus_vol,
        format!("sum {}", rat_to_string(&total)),
    );
    let r_sq = sampling_radius_sq(&cfg.sliver, cfg.dim, &cfg.scale)?;
    let picks: Vec<usize> = sample_indices(dual.cells.len(), 5);
    let mut capacity_ok = true;
    for &c in &picks {
        if !capacity_check(work, &dual.cells[c], &cfg.sliver, &cfg.scale, &r_sq, 120, cfg.seed ^ 0x11)? {
            capacity_ok = false;
        }
    }
    st.check_detail(
        "sampled cells hold their capacity ball",
        capacity_ok,
        format!("{} cells, 120 samples each", picks.len()),
    );
    match separation_check(work, &dual, &cfg.sliver, &cfg.scale, &r_sq, 120, cfg.seed ^ 0x22) {
        Ok(sep) => st.check_detail(
            "probed points meet at most dim+1 cells",
            sep.max_meet <= cfg.dim + 1,
            format!("max meet {}, {} shared witnesses", sep.max_meet, sep.witnessed),
        ),
        Err(e @ GeomError::TessellationViolation(_)) => {
            st.check_detail("probed points meet at most dim+1 cells", false, e.to_string())
        }
        Err(e) => return Err(e),
    }
    match meet_structure(work, tri, &dual, &cfg.sliver, &cfg.scale, &r_sq, 4, cfg.seed ^ 0x33) {
        Ok(meet) => st.check_detail(
            "meeting degrees stay within the budget",
            meet.max_degree <= meet.degree_cap,
            format!(
                "max degree {} of {}, {} full meetings",
                meet.max_degree, meet.degree_cap, meet.full_meetings
            ),
        ),
        Err(e @ GeomError::TessellationViolation(_)) => {
            st.check_detail("meeting degrees stay within the budget", false, e.to_string())
        }
        Err(e) => return Err(e),
    }
    finish(rep, st, t);
    Ok(dual)
}

fn sample_indices(len: usize, want: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let k = want.min(len);
    (0..k).map(|i| i * len / k).collect()
}

fn refine_stage(
    cfg: &RunConfig,
    rep: &mut Report,
    work: &PointSet,
    out_dir: Option<&Path>,
) -> Result<(Hierarchy, Vec<LevelReport>)> {
    let t = Instant::now();
    let mut st = StageReport::new("refine");
    let h = match build_hierarchy(work, cfg.depth, &cfg.refine) {
        Ok(h) => h,
        Err(e) => {
            st.check_detail("tower construction succeeded", false, e.to_string());
            finish(rep, st, t);
            return Err(e);
        }
    };
    st.check_detail(
        "tower reached the requested depth or saturated",
        h.levels.len() == cfg.depth + 1 || h.saturated,
        format!("{} levels, saturated {}", h.levels.len(), h.saturated),
    );
    let reports = verify_all(&h, &cfg.refine);
    for lr in &reports {
        for c in &lr.conditions {
            st.check_detail(format!("level {} {}", lr.level, c.name), c.ok, c.detail.clone());
        }
    }
    if let Some(dir) = out_dir {
        let v = export::hierarchy_json(&h, &reports);
        export::write_artifact(dir, "hierarchy.json", &export::json_string(&v))?;
    }
    finish(rep, st, t);
    Ok((h, reports))
}

fn af_stage(rep: &mut Report, h: &Hierarchy, out_dir: Option<&Path>) -> Result<()> {
    let t = Instant::now();
    let mut st = StageReport::new("af-check");
    let ctx = crate::af::AfContext::new(h)?;
    let top = h.levels.len() - 1;

    match ctx.theta_table() {
        Ok(_) => {
            let mut misplaced = 0usize;
            for p in 0..h.base.len() {
                let xi = ctx.theta(p)?;
                if !ctx.region_has_point(0, &xi.entries[0], &h.base.points[p]) {
                    misplaced += 1;
                }
            }
            st.check_detail(
                "every point sits in its leading boundary tile",
                misplaced == 0,
                format!("{} points checked", h.base.len()),
            );
        }
        Err(e) => st.check_detail("every point sits in its leading boundary tile", false, e.to_string()),
    }

    let b = ctx.boundary_sets()?;
    let all: std::collections::BTreeSet<usize> = (0..h.base.len()).collect();
    let dim = h.base.domain.dim;
    let mut cover_ok = true;
    let mut shrink_ok = true;
    for l in 0..=top {
        if b.b(1, l) != &all {
            cover_ok = false;
        }
        for n in 1..=dim {
            if b.b(n + 1, l).len() > b.b(n, l).len() {
                shrink_ok = false;
            }
        }
    }
    st.check("length-one boundary sets cover every point", cover_ok);
    st.check("boundary sets shrink with tuple length", shrink_ok);

    let r1 = ctx.relation_r(1)?;
    st.check_detail(
        "chained relation only coarsens",
        r1.monotone(),
        format!(
            "classes per level {:?}",
            r1.levels.iter().map(|l| l.classes.len()).collect::<Vec<_>>()
        ),
    );
    let r2 = ctx.relation_r(2)?;
    let q2 = ctx.relation_q(2)?;
    let mut refine_ok = r2.monotone() && q2.monotone();
    for i in 0..r2.levels.len() {
        if !crate::af::refines(&r2.levels[i], &q2.levels[i]) {
            refine_ok = false;
        }
    }
    st.check_detail(
        "pair chains refine the coarse quotient",
        refine_ok,
        format!(
            "R {:?} vs Q {:?}",
            r2.levels.iter().map(|l| l.classes.len()).collect::<Vec<_>>(),
            q2.levels.iter().map(|l| l.classes.len()).collect::<Vec<_>>()
        ),
    );

    if top >= 1 {
        let thin = ctx.thinness_report(top - 1)?;
        st.check_detail(
            "boundary classes stay thin",
            thin.all_ok,
            format!(
                "worst overlap {}/{}",
                thin.worst_ratio.0, thin.worst_ratio.1
            ),
        );
    } else {
        st.check_detail("boundary classes stay thin", true, "single level, nothing to compare");
    }

    let s = ctx.check_structure(1, top)?;
    st.check_detail(
        "structure laws hold at the top level",
        s.partition_ok && s.image_law_ok && s.collapse_law_ok && s.inside_next_ok != Some(false),
        format!("{} classes, conclusive {}", s.class_count, s.conclusive),
    );

    if let Some(dir) = out_dir {
        export::write_artifact(dir, "relation-r1.json", &export::json_string(&export::relation_json(&r1)))?;
        export::write_artifact(dir, "relation-r2.json", &export::json_string(&export::relation_json(&r2)))?;
        export::write_artifact(dir, "relation-q2.json", &export::json_string(&export::relation_json(&q2)))?;
    }
    finish(rep, st, t);
    Ok(())
}

fn export_stage(cfg: &RunConfig, rep: &mut Report, out: &RunOutput, dir: &Path) -> Result<()> {
    let t = Instant::now();
    let mut st = StageReport::new("export");
    let mut written = 2usize; // report.json and config.txt
    export::write_artifact(dir, "config.txt", &render_config(cfg))?;
    export::write_artifact(dir, "points.txt", &out.work.to_text())?;
    written += 1;
    st.check_detail(
        "point list round-trips exactly",
        PointSet::from_text(&out.work.to_text())
            .map(|s| s.points == out.work.points)
            .unwrap_or(false),
        format!("{} points", out.work.len()),
    );

    if let (Some(tri), Some(wf)) = (&out.tri, &out.wf) {
        let json = export::json_string(&export::triangulation_json(&out.work, tri));
        export::write_artifact(dir, "triangulation.json", &json)?;
        written += 1;
        if cfg.dim >= 2 {
            let off = export::off_triangulation(&out.work, tri)?;
            export::write_artifact(dir, "triangulation.off", &off)?;
            written += 1;
            let gap = off_reimport_gap(&off)?;
            st.check_detail(
                "mesh decimals re-import within tolerance",
                gap <= 1e-12,
                format!("max gap {gap:.3e}"),
            );
        }
        if let Some(sr) = &out.sliver {
            let mut interval_stats: Vec<(usize, Rat)> = Vec::with_capacity(out.work.len());
            for p in 0..out.work.len() {
                let fs = forbidden_set(&out.work, p, &wf.weights, &cfg.sliver, &cfg.scale)?;
                interval_stats.push((fs.intervals.len(), fs.total_length_upper(48)));
            }
            let json = export::json_string(&export::sliver_json(wf, &interval_stats, sr));
            export::write_artifact(dir, "sliver.json", &json)?;
            written += 1;
        }
    }
    if let Some(dual) = &out.dual {
        let json = export::json_string(&export::dual_json(&out.work, dual));
        export::write_artifact(dir, "dual.json", &json)?;
        written += 1;
        if cfg.dim >= 2 {
            let off = export::off_dual(&out.work, dual)?;
            export::write_artifact(dir, "dual.off", &off)?;
            written += 1;
        }
        let csv = export::margins_csv(dual);
        export::write_artifact(dir, "margins.csv", &csv)?;
        written += 1;
        st.check_detail(
            "margin table has one row per cell",
            csv.lines().count() == dual.cells.len() + 1,
            format!("{} cells", dual.cells.len()),
        );
    }
    if out.hierarchy.is_some() {
        written += 4; // hierarchy.json and three relation files
    }
    st.check_detail("artifacts written", true, format!("{written} files in {}", dir.display()));
    finish(rep, st, t);
    Ok(())
}

/// Largest disagreement between a decimal vertex token parsed as floating
/// point and the exact rational the token denotes.
fn off_reimport_gap(off: &str) -> Result<f64> {
    let mut lines = off.lines().filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    let header = lines.next().unwrap_or_default();
    if !header.contains("OFF") {
        return Err(GeomError::Parse("missing OFF header".into()));
    }
    let counts = lines
        .next()
        .ok_or_else(|| GeomError::Parse("missing OFF counts".into()))?;
    let v: usize = counts
        .split_whitespace()
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| GeomError::Parse("bad OFF counts".into()))?;
    let mut gap: f64 = 0.0;
    for _ in 0..v {
        let line = lines
            .next()
            .ok_or_else(|| GeomError::Parse("truncated OFF vertex block".into()))?;
        for tok in line.split_whitespace() {
            let f: f64 = tok
                .parse()
                .map_err(|_| GeomError::Parse(format!("bad vertex token '{tok}'")))?;
            let exact = prat(tok)?;
            gap = gap.max((f - crate::num::rat_f64(&exact)).abs());
        }
    }
    Ok(gap)
}

// ---------------------------------------------------------------------------
// oracle battery

/// Re-derives the run deterministically and pits it against the
/// independently written checks.  Requires the artifacts of a previous
/// pipeline run in `dir`; a failed comparison is recorded in the report
/// rather than returned as an error.
pub fn run_oracles(cfg: &RunConfig, dir: &Path) -> Result<Report> {
    if !dir.join("report.json").is_file() {
        return Err(GeomError::Config(format!(
            "no pipeline artifacts in {}: run a pipeline verb there first",
            dir.display()
        )));
    }
    cfg.validate()?;
    let mut rep = Report::new(format!("{}-oracle", cfg.label), cfg.seed);

    let raw = build_raw(cfg)?;
    let work = thin_work(cfg, &raw)?;
    let r_sq = rint(20) * &cfg.scale * &cfg.scale;
    let (colors, color_count) = work.color_separated(&r_sq);
    let wf = assign_weights(&work, &cfg.scale, &cfg.sliver, &colors, color_count)?;
    let tri = triangulation(&work, &wf)?;
    let dual = build_dual(&work, &tri)?;
    let n = work.len();

    let t = Instant::now();
    let mut st = StageReport::new("classical");
    let zeros = vec![Rat::zero(); n];
    let ours = crate::triangulation::del_simplices_covering(&work, &zeros)?;
    let brute = oracle::brute_delaunay(&work)?;
    record_compare(
        &mut st,
        "zero-weight cells match the brute enumeration",
        oracle::compare_simplices("zero-weight", &ours, &brute),
        format!("{} simplices", brute.len()),
    )?;
    finish(&mut rep, st, t);

    let t = Instant::now();
    let mut st = StageReport::new("lifted-hull");
    let hull = oracle::lifted_hull_simplices(&work, &wf.weights)?;
    record_compare(
        &mut st,
        "weighted cells match the lifted hull",
        oracle::compare_simplices("weighted-hull", &tri.simplices, &hull),
        format!("{} simplices", hull.len()),
    )?;
    finish(&mut rep, st, t);

    let t = Instant::now();
    let mut st = StageReport::new("interval-sweep");
    let sw = oracle::sweep_forbidden(&work, &wf, 12, 50, cfg.seed ^ 0x55)?;
    st.check_detail(
        "no forbidden weight entered the complex",
        sw.violations == 0,
        format!("{} appearances over {} pairs", sw.appearances, sw.pairs),
    );
    st.check(
        "interval lengths match the closed form",
        sw.length_mismatches == 0,
    );
    finish(&mut rep, st, t);

    let t = Instant::now();
    let mut st = StageReport::new("orthocenters");
    let done = oracle::orthosphere_residuals(cfg.dim, 200, cfg.seed ^ 0x66)?;
    st.check_detail(
        "orthocenter residuals vanish exactly",
        done == 200,
        format!("{done} simplices"),
    );
    if cfg.dim >= 2 {
        let pairs = oracle::orthosphere_face_pairs(cfg.dim, 100, cfg.seed ^ 0x77)?;
        st.check_detail(
            "face orthocenters project onto their base",
            pairs == 100,
            format!("{pairs} pairs"),
        );
    }
    finish(&mut rep, st, t);

    let t = Instant::now();
    let mut st = StageReport::new("covering-grid");
    let res = if cfg.dim == 1 { 64 } else { 24 };
    match oracle::covering_grid_lower(&work, res) {
        Ok(g) => {
            let cert = work.cert.as_ref().expect("certified");
            st.check_margin(
                "grid probe stays under the covering certificate",
                g <= cert.cov_sq_hi,
                &(&cert.cov_sq_hi - &g),
            );
        }
        Err(e @ GeomError::OracleDisagreement { .. }) => {
            st.check_detail("grid probe stays under the covering certificate", false, e.to_string());
        }
        Err(e) => return Err(e),
    }
    finish(&mut rep, st, t);

    let t = Instant::now();
    let mut st = StageReport::new("boundary-volume");
    if cfg.dim <= 2 {
        let bv = crate::dual::boundary_volume_estimate(
            &work,
            &dual.cells[0],
            &cfg.scale,
            &Rat::one(),
            1500,
            cfg.seed ^ 0x88,
        )?;
        st.check_detail(
            "boundary estimate stays under the analytic cap",
            bv.within_cap,
            format!(
                "estimate {:.2} + 3 sigma {:.2} vs cap {:.0}",
                bv.estimate,
                3.0 * bv.sigma,
                bv.cap_lower
            ),
        );
    } else {
        st.check_detail(
            "boundary estimate stays under the analytic cap",
            true,
            "skipped in dimension three",
        );
    }
    finish(&mut rep, st, t);

    if cfg.dim == 1 && cfg.depth > 0 {
        let t = Instant::now();
        let mut st = StageReport::new("relation-chains");
        let h = build_hierarchy(&raw, cfg.depth, &cfg.refine)?;
        let af = crate::af::AfContext::new(&h)?;
        for nn in 1..=2usize {
            match oracle::chain_relation_pairwise(&af, nn) {
                Ok(counts) => st.check_detail(
                    format!("length-{nn} chain classes match the pairwise orbits"),
                    true,
                    format!("classes per level {counts:?}"),
                ),
                Err(e @ GeomError::OracleDisagreement { .. }) => st.check_detail(
                    format!("length-{nn} chain classes match the pairwise orbits"),
                    false,
                    e.to_string(),
                ),
                Err(e) => return Err(e),
            }
        }
        finish(&mut rep, st, t);
    }

    rep.validate_unique()?;
    Ok(rep)
}

fn record_compare(
    st: &mut StageReport,
    name: &str,
    res: Result<()>,
    ok_detail: String,
) -> Result<()> {
    match res {
        Ok(()) => {
            st.check_detail(name, true, ok_detail);
            Ok(())
        }
        Err(e @ GeomError::OracleDisagreement { .. }) => {
            st.check_detail(name, false, e.to_string());
            Ok(())
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendered_configuration_parses_back_to_itself() {
        let cfg = reference_config();
        let text = render_config(&cfg);
        let back = parse_config(&text).expect("rendered config parses");
        assert_eq!(render_config(&back), text);
        assert_eq!(back.dim, 2);
        assert_eq!(back.seed, 20260822);
        assert_eq!(back.scale, rint(2));
        assert_eq!(back.depth, 0);
    }

    #[test]
    fn overrides_take_precedence_and_unknown_keys_are_rejected() {
        let text = render_config(&tiny_line_config());
        let cfg = config_with_overrides(
            &text,
            &[("points.seed".into(), "99".into()), ("run.label".into(), "other".into())],
        )
        .expect("overridden config parses");
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.label, "other");
        let bad = config_with_overrides(&text, &[("points.sneed".into(), "1".into())]);
        assert!(matches!(bad, Err(GeomError::Config(_))));
        let plain = config_with_overrides(&text, &[("seed".into(), "1".into())]);
        assert!(matches!(plain, Err(GeomError::Config(_))));
    }

    #[test]
    fn misshapen_configuration_lines_are_rejected() {
        assert!(matches!(parse_config("dim = 2"), Err(GeomError::Config(_))));
        assert!(matches!(
            parse_config("[domain]\ndim 2\n"),
            Err(GeomError::Config(_))
        ));
        let cfg = parse_config(concat!(
            "[domain]\ndim = 1\nperiod = 96\n",
            "[points]\ngenerator = circle\nscale = 2\nseed = 3\n",
        ))
        .expect("minimal config parses");
        assert_eq!(cfg.dim, 1);
        assert_eq!(cfg.period, rint(96));
    }

    #[test]
    fn short_circle_run_passes_every_stage_and_writes_artifacts() {
        let dir = tempfile::tempdir().expect("tempdir");
        let cfg = tiny_line_config();
        let (rep, out) = run_pipeline(&cfg, Some(dir.path()));
        let out = out.expect("pipeline completes");
        assert!(rep.all_pass(), "report:\n{}", rep.render_text());
        rep.validate_unique().expect("assertion names are unique");
        assert!(out.tri.is_some() && out.dual.is_some());
        assert!(out.hierarchy.is_none(), "depth zero builds no tower");
        for name in ["report.json", "config.txt", "points.txt", "triangulation.json",
                     "sliver.json", "dual.json", "margins.csv"] {
            assert!(dir.path().join(name).is_file(), "missing artifact {name}");
        }
        assert!(
            !dir.path().join("triangulation.off").exists(),
            "no mesh export in dimension one"
        );
    }

    #[test]
    fn oracle_battery_needs_artifacts_and_then_agrees() {
        let cfg = tiny_line_config();
        let empty = tempfile::tempdir().expect("tempdir");
        assert!(matches!(
            run_oracles(&cfg, empty.path()),
            Err(GeomError::Config(_))
        ));
        let dir = tempfile::tempdir().expect("tempdir");
        let (_, out) = run_pipeline(&cfg, Some(dir.path()));
        out.expect("pipeline completes");
        let rep = run_oracles(&cfg, dir.path()).expect("battery runs");
        assert!(rep.all_pass(), "oracle report:\n{}", rep.render_text());
    }

    #[test]
    fn repeated_runs_emit_identical_reports() {
        let cfg = tiny_line_config();
        let (a, ra) = run_pipeline(&cfg, None);
        let (b, rb) = run_pipeline(&cfg, None);
        ra.expect("first run completes");
        rb.expect("second run completes");
        assert_eq!(
            a.to_json_string().expect("serializes"),
            b.to_json_string().expect("serializes")
        );
    }

    #[test]
    fn circle_tower_run_verifies_refinement_and_boundary_structure() {
        let dir = tempfile::tempdir().expect("tempdir");
        let cfg = line_tower_config();
        let (rep, out) = run_pipeline(&cfg, Some(dir.path()));
        let out = out.expect("pipeline completes");
        assert!(rep.all_pass(), "report:\n{}", rep.render_text());
        let h = out.hierarchy.expect("tower built");
        assert!(h.levels.len() >= 2);
        assert!(!out.level_reports.is_empty());
        for name in ["hierarchy.json", "relation-r1.json", "relation-r2.json", "relation-q2.json"] {
            assert!(dir.path().join(name).is_file(), "missing artifact {name}");
        }
    }

    #[test]
    fn partial_runs_stop_where_asked() {
        let cfg = tiny_line_config();
        let (rep, out) = run_pipeline_until(&cfg, StageKind::Generate, None);
        let out = out.expect("generation completes");
        assert!(rep.all_pass());
        assert!(out.tri.is_none() && out.dual.is_none());
        let (_, out) = run_pipeline_until(&cfg, StageKind::Triangulate, None);
        let out = out.expect("triangulation completes");
        assert!(out.tri.is_some() && out.dual.is_none());
    }

    #[test]
    fn invalid_configurations_are_refused() {
        let mut cfg = tiny_line_config();
        cfg.dim = 2;
        assert!(matches!(cfg.validate(), Err(GeomError::Config(_))));
        let mut cfg = tiny_line_config();
        cfg.scale = rint(40);
        assert!(cfg.validate().is_err());
        let mut cfg = line_tower_config();
        cfg.refine.base_m = rint(4);
        assert!(matches!(cfg.validate(), Err(GeomError::Config(_))));
    }
}
