//! Radius-graph construction on a periodic box.
//!
//! Builds cell-list neighbor lists for a jittered particle lattice at a few
//! interaction radii and reports degree statistics, then shows that the
//! result is identical however many worker threads build it.
//!
//! Run with `cargo run --example neighbor_search`.

use lgr::geom::{PeriodicBox, Vec3};
use lgr::neighbor::{average_interparticle_distance, build_neighbor_list};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn jittered_lattice(side: usize, domain: &PeriodicBox, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dx = domain.extents().x / side as f64;
    let mut points = Vec::with_capacity(side * side * side);
    for i in 0..side {
        for j in 0..side {
            for k in 0..side {
                let jitter = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
                let cell = Vec3::new(i as f64, j as f64, k as f64);
                points.push(domain.wrap((cell + Vec3::splat(0.5) + (jitter - Vec3::splat(0.5)) * 0.2) * dx));
            }
        }
    }
    points
}

fn main() {
    let domain = PeriodicBox::cube(1.0);
    let points = jittered_lattice(20, &domain, 7);
    let dx = average_interparticle_distance(points.len(), &domain);
    println!("{} particles, mean spacing {dx:.4}", points.len());

    println!("\n radius/dx    edges   mean degree   max degree");
    for factor in [1.0, 1.5, 2.0, 3.0] {
        let list = build_neighbor_list(&points, &domain, factor * dx).expect("radius fits the box");
        let max_degree = (0..points.len()).map(|i| list.neighbors(i).len()).max().unwrap();
        println!(
            "   {factor:>4.1}    {:>8}      {:>6.2}       {:>4}",
            list.n_edges(),
            list.mean_degree(),
            max_degree
        );
    }

    // Neighbor lists are sorted CSR rows, so equality is well-defined and
    // must hold regardless of the thread count that built them.
    let radius = 1.5 * dx;
    let reference = build_neighbor_list(&points, &domain, radius).unwrap();
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let list = pool.install(|| build_neighbor_list(&points, &domain, radius).unwrap());
        assert_eq!(list.offsets(), reference.offsets());
        assert_eq!(list.indices(), reference.indices());
        println!("{threads} thread(s): identical neighbor list");
    }

    // Every edge respects the strict cutoff.
    let mut worst: f64 = 0.0;
    for i in 0..points.len() {
        for &j in reference.neighbors(i) {
            worst = worst.max(domain.min_image(points[i], points[j as usize]).norm());
        }
    }
    println!("longest edge {worst:.4} < radius {radius:.4}");
}
