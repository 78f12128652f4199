//! The debiased Sinkhorn divergence between particle clouds.
//!
//! Demonstrates the properties that make the debiased divergence a usable
//! distribution distance: identical clouds score exactly zero, singleton
//! clouds recover the squared minimum-image distance, and rigidly
//! translating a cloud grows the divergence like |d|².
//!
//! Run with `cargo run --example sinkhorn_basics`.

use lgr::eval::{default_eps, sinkhorn_divergence, SinkhornParams};
use lgr::geom::{PeriodicBox, Vec3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn cloud(n: usize, center: Vec3, spread: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            center
                + Vec3::new(
                    rng.random_range(-spread..spread),
                    rng.random_range(-spread..spread),
                    rng.random_range(-spread..spread),
                )
        })
        .collect()
}

fn main() {
    let domain = PeriodicBox::cube(4.0);
    let x = cloud(64, Vec3::splat(1.2), 0.3, 1);

    // Regularization scaled to the cloud's own spacing.
    let eps = default_eps(&x, &domain).expect("eps");
    let params = SinkhornParams::new(eps);
    println!("cloud of {} points, eps = {eps:.3e}", x.len());

    let self_div = sinkhorn_divergence(&x, &x, &domain, &params).expect("self");
    println!(
        "S(X, X) = {:.3e} (debiasing cancels the entropic offset exactly; converged: {})",
        self_div.value, self_div.converged
    );

    // Singletons: the divergence is the squared minimum-image distance.
    let a = vec![Vec3::new(0.1, 2.0, 2.0)];
    let b = vec![Vec3::new(3.9, 2.0, 2.0)];
    let s = sinkhorn_divergence(&a, &b, &domain, &params).expect("singleton");
    println!(
        "singletons wrapping the boundary: S = {:.6e}, |d|²_min-image = {:.6e}",
        s.value,
        0.2f64 * 0.2
    );

    // Rigid translation: S grows as |d|² while the shift stays below the
    // half-box (no wraparound). Separated clouds at tiny eps converge very
    // slowly, so the sweep uses a coarser regularization — the debiased
    // value is eps-independent for rigid shifts.
    let sweep = SinkhornParams::new(eps.max(5e-3));
    println!("\n  |d|        S(X, X+d)   |d|²          marginal violation");
    for k in 0..6 {
        let d = 0.25 * k as f64;
        let shifted: Vec<Vec3> = x.iter().map(|&p| p + Vec3::new(d, 0.0, 0.0)).collect();
        let r = sinkhorn_divergence(&x, &shifted, &domain, &sweep).expect("translate");
        println!(
            "  {d:>4.2}    {:>12.6e}   {:.6e}   {:.1e}{}",
            r.value,
            d * d,
            r.max_violation,
            if r.converged { "" } else { " (cap hit)" }
        );
    }
    println!("\nthe divergence tracks the squared shift to the violation's accuracy;");
    println!("hitting the sweep cap is a soft condition — the value is still returned");
}
