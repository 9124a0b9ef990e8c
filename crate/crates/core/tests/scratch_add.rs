//! Temporary exploration of dumped ill-behaved rational additions.

use num_complex::Complex64;
use roadcast::lti::RationalEntry;

fn load(path: &str) -> (RationalEntry, RationalEntry) {
    let text = std::fs::read_to_string(path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let a: RationalEntry = serde_json::from_value(v["a"].clone()).unwrap();
    let b: RationalEntry = serde_json::from_value(v["b"].clone()).unwrap();
    (a, b)
}

fn response_err(entry: &RationalEntry, a: &RationalEntry, b: &RationalEntry) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..101 {
        let omega = 10f64.powf(-2.0 + 5.0 * (k as f64) / 100.0);
        let s = Complex64::new(0.0, omega);
        let exact = a.eval(s) + b.eval(s);
        let scale = (a.eval(s).norm() + b.eval(s).norm()).max(1e-300);
        worst = worst.max((entry.eval(s) - exact).norm() / scale);
    }
    worst
}

#[test]
#[ignore]
fn explore() {
    let path = std::env::var("DUMP").unwrap();
    let (a, b) = load(&path);
    eprintln!(
        "a: {} zeros / {} poles, gain {:.6e}",
        a.zeros().len(),
        a.poles().len(),
        a.gain()
    );
    eprintln!(
        "b: {} zeros / {} poles, gain {:.6e}",
        b.zeros().len(),
        b.poles().len(),
        b.gain()
    );
    let sum = a.add(&b).unwrap();
    eprintln!("add() err = {:.3e}", response_err(&sum, &a, &b));
    eprintln!("out zeros:");
    for z in sum.zeros() {
        eprintln!("  {:+.9e} {:+.9e}i", z.re, z.im);
    }
    eprintln!("a zeros:");
    for z in a.zeros() {
        eprintln!("  {:+.9e} {:+.9e}i", z.re, z.im);
    }
    eprintln!("b zeros:");
    for z in b.zeros() {
        eprintln!("  {:+.9e} {:+.9e}i", z.re, z.im);
    }
    eprintln!(
        "shared poles check: a.poles == b.poles ? {}",
        a.poles() == b.poles()
    );
}

#[test]
#[ignore]
fn explore_seeds() {
    use roadcast::linalg::poly;
    let path = std::env::var("DUMP").unwrap();
    let (a, b) = load(&path);
    // Shared poles (verified above), so the numerator sum is just
    // g_a·Π(s − z_a) + g_b·Π(s − z_b).
    let term_a = poly::from_roots(a.zeros(), a.gain()).unwrap();
    let term_b = poly::from_roots(b.zeros(), b.gain()).unwrap();
    let sum = poly::add_scaled(&term_a, 1.0, &term_b);
    let sum = poly::trim_cancelled(&sum, &term_a, 1.0, &term_b, 1e-12);
    let seeds = poly::roots(&sum).unwrap();
    eprintln!("seeds:");
    for z in &seeds {
        eprintln!("  {:+.9e} {:+.9e}i", z.re, z.im);
    }
    let terms = [
        (a.gain(), a.zeros().to_vec()),
        (b.gain(), b.zeros().to_vec()),
    ];
    let refined = poly::refine_sum_roots(&terms, &seeds);
    eprintln!("refined:");
    for z in &refined {
        eprintln!("  {:+.9e} {:+.9e}i", z.re, z.im);
    }
}
