use std::time::Instant;
use tessera_core::num::{rat, rint, Rat};
use tessera_core::pointset::PointSet;
use tessera_core::torus::TorusDomain;
use tessera_core::triangulation::{del_simplices_covering, WeightFunction, triangulation};
use tessera_core::{oracle, dual, sliver};
use num_traits::Zero;

fn main() {
    // C1 instance, d=2: 49 points
    let dom = TorusDomain::new(2, rint(36)).unwrap();
    let set = PointSet::perturbed_lattice(dom, &rat(36, 7), &rat(1, 4), 10, 1).unwrap();
    println!("c1 d2 n={}", set.len());
    let t = Instant::now();
    let brute = oracle::brute_delaunay(&set).unwrap();
    println!("brute d2: {:.2}s {} simplices", t.elapsed().as_secs_f64(), brute.len());
    let t = Instant::now();
    let zeros = vec![Rat::zero(); set.len()];
    let ours = del_simplices_covering(&set, &zeros).unwrap();
    println!("ours d2: {:.2}s {} simplices", t.elapsed().as_secs_f64(), ours.len());

    // C1 instance, d=3: 8 points
    let dom3 = TorusDomain::new(3, rint(12)).unwrap();
    let set3 = PointSet::perturbed_lattice(dom3, &rint(6), &rat(3, 8), 10, 1).unwrap();
    let t = Instant::now();
    let b3 = oracle::brute_delaunay(&set3).unwrap();
    println!("brute d3 n={}: {:.2}s {} simplices", set3.len(), t.elapsed().as_secs_f64(), b3.len());

    // battery instance, d=2 M=1 L=18: 49 points
    let dom = TorusDomain::new(2, rint(18)).unwrap();
    let mut set = PointSet::perturbed_lattice(dom, &rat(18, 7), &rat(1, 8), 10, 1).unwrap();
    set.validate_and_certify(&rint(1), &rint(4)).unwrap();
    let cfg = sliver::SliverConfig::desk();
    let m = rint(1);
    let r_sq = rint(20) * &m * &m;
    let (colors, nc) = set.color_separated(&r_sq);
    let wf = sliver::assign_weights(&set, &m, &cfg, &colors, nc).unwrap();
    let t = Instant::now();
    let tri = triangulation(&set, &wf).unwrap();
    println!("battery tri: {:.2}s {} simplices", t.elapsed().as_secs_f64(), tri.simplices.len());
    let t = Instant::now();
    let du = dual::build_dual(&set, &tri).unwrap();
    println!("battery dual: {:.2}s {} cells", t.elapsed().as_secs_f64(), du.cells.len());

    // C8: boundary MC, 5000 samples on one cell
    let t = Instant::now();
    let bv = dual::boundary_volume_estimate(&set, &du.cells[0], &m, &rint(1), 5000, 3).unwrap();
    println!("mc 5000: {:.2}s est {:.2} sigma {:.2} cap {:.0}", t.elapsed().as_secs_f64(), bv.estimate, bv.sigma, bv.cap_lower);

    // C7 capacity: 200 samples on one cell
    let rad = tessera_core::pipeline::sampling_radius_sq(&cfg, 2, &m).unwrap();
    let t = Instant::now();
    let ok = dual::capacity_check(&set, &du.cells[0], &cfg, &m, &rad, 200, 5).unwrap();
    println!("capacity 200: {:.2}s ok={ok}", t.elapsed().as_secs_f64());
    let t = Instant::now();
    let sep = dual::separation_check(&set, &du, &cfg, &m, &rad, 100, 5).unwrap();
    println!("separation 100: {:.2}s max_meet {}", t.elapsed().as_secs_f64(), sep.max_meet);

    // C5 sweep on the battery set (49 pts): 10 pairs x 20 samples scaled probe
    let t = Instant::now();
    let sw = oracle::sweep_forbidden(&set, &wf, 10, 20, 9).unwrap();
    println!("sweep 10x20: {:.2}s appearances {} violations {}", t.elapsed().as_secs_f64(), sw.appearances, sw.violations);
}
