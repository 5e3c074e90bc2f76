//! Multi-dimensional complex FFTs on row-major `n^dim` arrays.
//!
//! Forward transforms are normalized by `1/N` so that stored coefficients are
//! the Fourier-series amplitudes: `f(x) = sum_k c_k exp(i k.x)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

type Plan = Arc<dyn Fft<f64>>;

fn plan(n: usize, direction: FftDirection) -> Plan {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Plan>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, matches!(direction, FftDirection::Forward));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(key)
        .or_insert_with(|| FftPlanner::new().plan_fft(n, direction))
        .clone()
}

/// Lines processed per parallel task.
const BATCH: usize = 64;

fn transform_axis(data: &mut [Complex64], n: usize, dim: usize, axis: usize, fft: &Plan) {
    let stride = n.pow((dim - 1 - axis) as u32);
    if stride == 1 {
        data.par_chunks_mut(n * BATCH).for_each(|chunk| {
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(chunk, &mut scratch);
        });
        return;
    }
    let block = n * stride;
    for outer in data.chunks_mut(block) {
        // Gather columns into contiguous lines, transform, scatter back.
        let mut lines = vec![Complex64::default(); block];
        {
            let src: &[Complex64] = outer;
            lines
                .par_chunks_mut(n * BATCH)
                .enumerate()
                .for_each(|(c, chunk)| {
                    for (l, line) in chunk.chunks_mut(n).enumerate() {
                        let i = c * BATCH + l;
                        for (j, v) in line.iter_mut().enumerate() {
                            *v = src[j * stride + i];
                        }
                    }
                    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
                    fft.process_with_scratch(chunk, &mut scratch);
                });
        }
        let lines = &lines;
        outer.par_chunks_mut(stride).enumerate().for_each(|(j, row)| {
            for (i, v) in row.iter_mut().enumerate() {
                *v = lines[i * n + j];
            }
        });
    }
}

/// In-place forward transform with `1/N` normalization.
pub fn forward(data: &mut [Complex64], n: usize, dim: usize) {
    debug_assert_eq!(data.len(), n.pow(dim as u32));
    let fft = plan(n, FftDirection::Forward);
    for axis in (0..dim).rev() {
        transform_axis(data, n, dim, axis, &fft);
    }
    let scale = 1.0 / data.len() as f64;
    data.par_iter_mut().for_each(|v| *v *= scale);
}

/// In-place inverse transform (synthesis of the Fourier series on the grid).
pub fn inverse(data: &mut [Complex64], n: usize, dim: usize) {
    debug_assert_eq!(data.len(), n.pow(dim as u32));
    let fft = plan(n, FftDirection::Inverse);
    for axis in 0..dim {
        transform_axis(data, n, dim, axis, &fft);
    }
}
