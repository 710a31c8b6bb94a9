//! In-place FFT helpers over the flattened field layout (axis 0 slowest).

use num_complex::Complex64;

use super::grid::Grid;

fn transpose(n: usize, data: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>) {
    scratch.clear();
    scratch.resize(n * n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            scratch[j * n + i] = data[i * n + j];
        }
    }
    std::mem::swap(data, scratch);
}

/// Unnormalized FFT along every axis; `inverse` flips the transform direction.
pub(crate) fn fft_all_axes(grid: &Grid, data: &mut Vec<Complex64>, inverse: bool) {
    let n = grid.points_per_axis();
    let fft = if inverse {
        grid.fft_inverse().clone()
    } else {
        grid.fft_forward().clone()
    };
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    match grid.dim() {
        1 => fft.process_with_scratch(data, &mut scratch),
        _ => {
            let mut tmp = Vec::new();
            for row in data.chunks_mut(n) {
                fft.process_with_scratch(row, &mut scratch);
            }
            transpose(n, data, &mut tmp);
            for row in data.chunks_mut(n) {
                fft.process_with_scratch(row, &mut scratch);
            }
            transpose(n, data, &mut tmp);
        }
    }
}
