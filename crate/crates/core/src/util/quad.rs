//! Radial quadrature on uniform samples.

/// Composite Simpson over `y` at spacing `h` (3/8 rule absorbs an odd tail).
pub fn simpson(y: &[f64], h: f64) -> f64 {
    let n = y.len();
    assert!(n >= 5);
    let (even_part, tail) = if (n - 1) % 2 == 0 {
        (n, 0.0)
    } else {
        // last three intervals by Simpson 3/8
        let m = n - 4;
        let tail = 3.0 * h / 8.0 * (y[m] + 3.0 * y[m + 1] + 3.0 * y[m + 2] + y[m + 3]);
        (n - 3, tail)
    };
    let mut acc = y[0] + y[even_part - 1];
    for (i, &v) in y.iter().enumerate().take(even_part - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0 + tail
}

/// Integral of an even function over the whole line from samples on `[0, R]`:
/// plain trapezoid on the symmetrized grid, which is spectrally accurate for
/// smooth decaying integrands.
pub fn integral_even_whole_line(y: &[f64], h: f64) -> f64 {
    let mut acc = y[0];
    for &v in &y[1..] {
        acc += 2.0 * v;
    }
    acc * h
}
