//! Atypical-stretch machinery behind the lower-bound strategy: the first
//! q-atypical stretch time, the rate-matched stopping time T, the
//! first-crossing time of the pinned value, and the pinned-product bound.
//!
//! Run with: cargo run --release --example atypical_stretches

use copoly::analysis::stretch_certificate;
use copoly::disorder::{detect_tc, find_tau, generate};
use copoly::engine::{pinned_product_lower_bound, sweep, SweepOptions, Window};
use copoly::model::{cramer_rate, optimal_q, ChargeLaw, PolymerParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let law = ChargeLaw::BernoulliSymmetric;
    let env = generate(law, 200_000, 17, 0)?;

    let q = optimal_q(law, 0.6);
    println!("optimal stretch level at lambda = 0.6: q0 = {q:.6}, rate Sigma(q0) = {:.6}", cramer_rate(law, q));
    println!("\nfirst q-atypical stretch of length at least M:");
    for m in [4usize, 16, 40] {
        let rec = find_tau(&env, q, m, 200_000)?;
        match (rec.tau, rec.r) {
            (Some(tau), Some(r)) => {
                println!("  M = {m:>3}: tau = {tau:>8}, shortest stretch R = {r}  (log tau / M = {:.3})", (tau as f64).ln() / m as f64)
            }
            _ => println!("  M = {m:>3}: censored at cap"),
        }
    }

    // the certificate couples the stretch time to the pinned value there
    let params = PolymerParams::new(0.6, 0.10, law)?;
    let cert = stretch_certificate(&env, &params, None, 30, 0.5, 200_000, Some(Window::PAPER))?;
    println!("\nstretch certificate at (0.6, 0.10), A = 30:");
    println!("  T = {:?}, measured log Z_T(0) = {:?}", cert.record.t, cert.log_z_at_t);
    println!("  measured positive: {} (localization witness)", cert.measured_positive);

    // iterated first-crossing times give the product lower bound
    let params = PolymerParams::new(1.0, 0.3, law)?;
    let level = 2.0;
    let mut pins = Vec::new();
    let mut offset = 0usize;
    let mut view = env.view();
    for _ in 0..5 {
        let sub = copoly::disorder::from_charges(law, view.to_vec())?;
        match detect_tc(&sub, &params, level, 20_000, None)?.time {
            Some(t) => {
                offset += t;
                pins.push(offset);
                view = view.shifted(t);
            }
            None => break,
        }
    }
    println!("\niterated crossings of Z(0) >= {level} at (1.0, 0.3): pins at {pins:?}");
    let n = *pins.last().unwrap();
    let bound = pinned_product_lower_bound(env.view(), &params, &pins[..pins.len() - 1], n, None)?;
    let truth = sweep(env.view(), &params, n, &SweepOptions::default())?.pinned_log;
    println!("  product bound log Z_hat = {bound:.4} >= {:.4} = n_pins * log C", pins.len() as f64 * level.ln());
    println!("  true log Z(0) = {truth:.4} >= product bound: {}", truth >= bound);
    Ok(())
}
