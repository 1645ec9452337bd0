//! Regenerates the frozen stage-count table of `rock4`.
//!
//! `cargo run --release -p mrrd --example rock4_design [s_max]`

use mrrd::rock4::design::search_ell;

fn main() {
    let s_max: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(152);
    for s in 5..=s_max {
        let (ell, beta) = search_ell(s, 40_000).expect("no stable interval");
        println!("    ({ell:?}, {beta:?}), // s = {s}, beta/s^2 = {:.4}", beta / (s * s) as f64);
    }
}
