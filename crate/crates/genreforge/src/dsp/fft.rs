//! Radix-2 decimation-in-time FFT.
//!
//! Unnormalized forward transform: `X[k] = sum_n x[n] * exp(-2*pi*i*k*n/N)`.
//! Lengths must be powers of two. Twiddle factors are evaluated directly
//! from `cos`/`sin` so rounding does not accumulate across a stage.

use num_complex::Complex64;

use super::DspError;

/// Planned FFT for one power-of-two length: bit-reversal permutation plus
/// per-stage twiddle tables, reusable across frames.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    bit_rev: Vec<u32>,
    // One table per stage; stage s holds m/2 twiddles for butterflies of span m = 2^(s+1).
    twiddles: Vec<Vec<Complex64>>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self, DspError> {
        if n == 0 || !n.is_power_of_two() {
            return Err(DspError::NonPowerOfTwoLength(n));
        }
        let levels = n.trailing_zeros();
        let mut bit_rev = vec![0u32; n];
        for (i, slot) in bit_rev.iter_mut().enumerate() {
            *slot = (i as u32).reverse_bits() >> (32 - levels.max(1)) as u32;
        }
        if n == 1 {
            bit_rev[0] = 0;
        }
        let mut twiddles = Vec::with_capacity(levels as usize);
        let mut m = 2usize;
        while m <= n {
            let half = m / 2;
            let mut table = Vec::with_capacity(half);
            for j in 0..half {
                let angle = -2.0 * std::f64::consts::PI * (j as f64) / (m as f64);
                table.push(Complex64::new(angle.cos(), angle.sin()));
            }
            twiddles.push(table);
            m *= 2;
        }
        Ok(Self { n, bit_rev, twiddles })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform. Panics if `buf.len()` differs from the
    /// planned length.
    pub fn process(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        for (i, &j) in self.bit_rev.iter().enumerate() {
            let j = j as usize;
            if i < j {
                buf.swap(i, j);
            }
        }
        for table in &self.twiddles {
            let half = table.len();
            let m = half * 2;
            for start in (0..self.n).step_by(m) {
                for (j, &w) in table.iter().enumerate() {
                    let a = buf[start + j];
                    let b = buf[start + j + half] * w;
                    buf[start + j] = a + b;
                    buf[start + j + half] = a - b;
                }
            }
        }
    }
}

/// One-shot forward DFT of a power-of-two-length complex signal.
pub fn fft(signal: &[Complex64]) -> Result<Vec<Complex64>, DspError> {
    let plan = FftPlan::new(signal.len())?;
    let mut buf = signal.to_vec();
    plan.process(&mut buf);
    Ok(buf)
}

/// Brute-force O(N^2) DFT oracle, shared by the dsp test modules.
#[cfg(test)]
pub(crate) fn naive_dft(input: &[Complex64]) -> Vec<Complex64> {
    let n = input.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut sum = Complex64::new(0.0, 0.0);
        for (idx, x) in input.iter().enumerate() {
            let angle = -2.0 * std::f64::consts::PI * (k * idx) as f64 / n as f64;
            sum += x * Complex64::new(angle.cos(), angle.sin());
        }
        *slot = sum;
    }
    out
}
