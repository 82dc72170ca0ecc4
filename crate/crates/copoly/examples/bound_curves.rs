//! Closed-form quantities of the charge laws: the bound curves on the
//! critical line, the Cramér rate function and the optimal stretch level.
//!
//! Run with: cargo run --release --example bound_curves

use copoly::model::{cramer_rate, h_lower, h_m, h_upper, optimal_q, ChargeLaw};

fn main() {
    let laws = [ChargeLaw::BernoulliSymmetric, ChargeLaw::StandardGaussian];
    println!("bound curves h^(2/3) (lower) and h^(1) (upper):");
    println!("{:>8} {:>12} {:>12} {:>12} {:>12}", "lambda", "bern lower", "bern upper", "gauss lower", "gauss upper");
    for &l in &[0.1, 0.3, 0.6, 1.0, 2.0, 4.0] {
        println!(
            "{:>8} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            l,
            h_lower(laws[0], l).unwrap(),
            h_upper(laws[0], l).unwrap(),
            h_lower(laws[1], l).unwrap(),
            h_upper(laws[1], l).unwrap(),
        );
    }

    println!("\nthe conjectured critical slope lies strictly inside [2/3, 1]:");
    for &m in &[0.8, 0.84, 0.9] {
        println!("  h^({m})(0.6) = {:.6}", h_m(laws[0], m, 0.6).unwrap());
    }

    println!("\nCramér rate of a binary charge average:");
    for &q in &[-1.0, -0.8, -0.5, -0.2, 0.0] {
        println!("  Sigma({q:>4}) = {:.6}", cramer_rate(laws[0], q));
    }

    println!("\noptimal stretch level (tilted mean) for the lower-bound strategy:");
    for &l in &[0.3, 0.6, 1.0] {
        println!(
            "  lambda = {l}: q0 = {:.6} (binary), {:.6} (gaussian)",
            optimal_q(laws[0], l),
            optimal_q(laws[1], l)
        );
    }
}
