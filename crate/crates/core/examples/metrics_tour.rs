//! The four structural indices on synthetic representations: a copy, a
//! rotated and rescaled copy, a noisy copy and an unrelated matrix.
//!
//! cargo run --example metrics_tour

use rand::Rng;
use rand_distr::StandardNormal;
use repsim::numerics::Matrix;
use repsim::rng::rng;
use repsim::simindex::Index;
use repsim::ActivationSet;

fn gaussian(r: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal))
}

fn main() -> repsim::Result<()> {
    let mut r = rng(42);
    let (n, c) = (200, 8);
    let base = gaussian(&mut r, n, c);

    // a planar rotation of the first two channels, then a global scale
    let (cos, sin) = (0.6, 0.8);
    let rot = Matrix::from_fn(c, c, |i, j| match (i, j) {
        (0, 0) | (1, 1) => cos,
        (0, 1) => -sin,
        (1, 0) => sin,
        _ if i == j => 1.0,
        _ => 0.0,
    });
    let rotated = base.matmul(&rot)?.scale(3.0);
    let noise = gaussian(&mut r, n, c).scale(0.5);
    let noisy = base.add(&noise)?;
    let unrelated = gaussian(&mut r, n, c);

    let a = ActivationSet::from_matrix(base, None)?;
    let variants = [
        ("copy", a.clone()),
        ("rotated x3", ActivationSet::from_matrix(rotated, None)?),
        ("noisy", ActivationSet::from_matrix(noisy, None)?),
        ("unrelated", ActivationSet::from_matrix(unrelated, None)?),
    ];

    println!(
        "{:<12} {:>8} {:>8} {:>8} {:>10}",
        "B", "lcka", "pwcca", "opd", "dm-struct"
    );
    for (name, b) in &variants {
        println!(
            "{:<12} {:>8.4} {:>8.4} {:>8.4} {:>10.4}",
            name,
            Index::Lcka.compute(&a, b)?,
            Index::Pwcca.compute(&a, b)?,
            Index::Opd.compute(&a, b)?,
            Index::DmStructural.compute(&a, b)?,
        );
    }
    println!("lcka and pwcca are similarities; opd and dm-struct are distances");
    Ok(())
}
