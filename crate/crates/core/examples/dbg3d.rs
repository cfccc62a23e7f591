use pmdrift::drift::LogLogPotential;
use pmdrift::grid::{Grid, VectorField};
use pmdrift::ops::lp_logq_norm;
use pmdrift::oracles::StationaryProfile;
use std::time::Instant;

fn main() {
    let d = 2usize;
    let grid = Grid::full_box(d, 512, 1.5).unwrap();
    let mut norms = Vec::new();
    let mut peaks = Vec::new();
    for lll in [2.0f64, 3.0, 4.0] {
        let a = lll.exp().exp();
        let t0 = Instant::now();
        let pot = LogLogPotential::new(a, d).unwrap();
        let v = VectorField::from_fn_cells(grid, |x| pot.gradient(x));
        let norm = lp_logq_norm(&v, d as f64, d as f64 - 1.1).unwrap();
        let t1 = Instant::now();
        let prof = StationaryProfile::solve(&|r| pot.phi(r), 2.0, 1.0, d, 1e4).unwrap();
        println!(
            "A=e^e^{lll}: norm={norm:.5} peak={:.5} C={:.5} (norm {:.1?} profile {:.1?})",
            prof.peak(), prof.c, t1 - t0, t1.elapsed()
        );
        norms.push(norm);
        peaks.push(prof.peak());
    }
    println!("norm steps: {:.4} {:.4}; spread {:.4}",
        norms[1]/norms[0], norms[2]/norms[1], norms.iter().cloned().fold(f64::MIN, f64::max)/norms.iter().cloned().fold(f64::MAX, f64::min));
    println!("peak ratio last/first: {:.4}", peaks[2]/peaks[0]);
}
