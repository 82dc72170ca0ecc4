//! Critical-curve estimation: for each coupling, bisect the bias at which
//! the pinned partition value crosses 1, then fit the one-parameter family
//! of bound curves through the estimates.
//!
//! Run with: cargo run --release --example critical_curve

use copoly::analysis::{estimate_h_hat, fit_m, FitCriterion};
use copoly::disorder::generate;
use copoly::engine::Window;
use copoly::model::{h_lower, h_upper, ChargeLaw};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let law = ChargeLaw::BernoulliSymmetric;
    let size = 50_000; // a desk-scale stand-in for the production 2N = 5*10^5
    let env = generate(law, size, 11, 0)?;
    let lambdas = [0.2, 0.6, 1.0, 2.0, 4.0];

    println!("estimates of the critical bias at size {size} (one fixed environment):");
    let mut points = Vec::new();
    for &l in &lambdas {
        let p = estimate_h_hat(&env, l, size, 1e-6, None, Some(Window::PAPER))?;
        println!(
            "  lambda = {l:<4}: h_hat = {:.6}  (rigorous bounds [{:.4}, {:.4}]{})",
            p.h_hat,
            h_lower(law, l)?,
            h_upper(law, l)?,
            if p.saturated { ", saturated" } else { "" }
        );
        points.push(p);
    }

    let fit = fit_m(&points, law, FitCriterion::AnchorAtLambda(4.0))?;
    println!("\nslope fitted by anchoring at lambda = 4: m = {:.4}", fit.m);
    println!("relative errors of h^(m) against the estimates:");
    for (l, e) in &fit.relative_errors {
        println!("  lambda = {l:<4}: {e:+.4}");
    }
    println!("\nestimates at finite size drift upward with N; the production");
    println!("run at 2N = 5*10^5 gives m close to 0.82 for binary charges.");
    Ok(())
}
