use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Unnormalised inverse DFT over a cubic row-major array with `n` points per axis.
pub(crate) struct InverseFft {
    n: usize,
    m: usize,
    plan: Arc<dyn Fft<f64>>,
}

impl InverseFft {
    pub(crate) fn new(n: usize, m: usize) -> Self {
        let plan = FftPlanner::new().plan_fft_inverse(n);
        InverseFft { n, m, plan }
    }

    pub(crate) fn process(&self, data: &mut [Complex64]) {
        let n = self.n;
        let total = n.pow(self.m as u32);
        debug_assert_eq!(data.len(), total);
        let mut scratch = vec![Complex64::default(); self.plan.get_inplace_scratch_len()];
        // last axis: contiguous rows
        for row in data.chunks_exact_mut(n) {
            self.plan.process_with_scratch(row, &mut scratch);
        }
        let mut line = vec![Complex64::default(); n];
        for axis in (0..self.m - 1).rev() {
            let stride = n.pow((self.m - 1 - axis) as u32);
            let outer = total / (n * stride);
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for k in 0..n {
                        line[k] = data[base + k * stride];
                    }
                    self.plan.process_with_scratch(&mut line, &mut scratch);
                    for k in 0..n {
                        data[base + k * stride] = line[k];
                    }
                }
            }
        }
    }
}

/// Smallest integer `>= n` whose prime factors are all 2, 3 or 5, made even.
pub(crate) fn smooth_size(n: usize) -> usize {
    let mut k = n.max(2);
    loop {
        if k % 2 == 0 {
            let mut r = k;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            if r == 1 {
                return k;
            }
        }
        k += 1;
    }
}
