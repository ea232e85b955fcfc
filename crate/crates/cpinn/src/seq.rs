//! Seedless deterministic sequences used for probing and shift sampling.

/// Base-2 van der Corput radical inverse of `n`.
///
/// The sequence 0, 1/2, 1/4, 3/4, 1/8, 5/8, ... fills [0,1) with the
/// property that the first 2^m terms are exactly the multiples of 2^-m.
pub fn van_der_corput(mut n: u64) -> f64 {
    let mut x = 0.0;
    let mut base = 0.5;
    while n > 0 {
        if n & 1 == 1 {
            x += base;
        }
        base *= 0.5;
        n >>= 1;
    }
    x
}

/// The first `n` probe positions on one axis: `{1}` followed by van der
/// Corput points. Prefixes are nested, so probe sets grow monotonically
/// with `n` and suprema over them never decrease.
pub fn axis_probes(n: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(n);
    v.push(1.0);
    for i in 0..n.saturating_sub(1) {
        v.push(van_der_corput(i as u64));
    }
    v
}

/// Additive Weyl sequence on [0,1)^dim with per-axis irrational strides.
///
/// Deterministic and seedless; consecutive points are well spread.
pub fn weyl_point(n: u64, dim: usize) -> Vec<f64> {
    // Strides: fractional parts of sqrt of the first primes.
    const PRIMES: [f64; 8] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0];
    (0..dim)
        .map(|a| {
            let s = PRIMES[a % PRIMES.len()].sqrt().fract();
            ((n as f64 + 1.0) * s).fract()
        })
        .collect()
}
