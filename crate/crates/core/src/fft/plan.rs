use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::math;

/// Prime factors above this size are handled by Bluestein's algorithm
/// instead of an O(p^2) generic butterfly.
const MAX_DIRECT_RADIX: usize = 61;

/// Precomputed complex FFT of a fixed length.
///
/// The forward transform is unnormalised, `X_k = sum_t x_t e^{-2 pi i k t / n}`.
/// [`FftPlan::inverse`] is also unnormalised; callers apply `1/n`.
#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Trivial,
    MixedRadix {
        factors: Vec<(usize, usize)>,
        twiddles: Vec<Complex64>,
    },
    Bluestein(Box<Bluestein>),
}

#[derive(Debug, Clone)]
struct Bluestein {
    inner: FftPlan,
    chirp: Vec<Complex64>,
    kernel_spectrum: Vec<Complex64>,
}

/// `e^{-2 pi i num / den}` with the angle reduced before evaluation.
pub(crate) fn root_of_unity(num: usize, den: usize) -> Complex64 {
    let (s, c) = math::sin_cos(-2.0 * PI * (num % den) as f64 / den as f64);
    Complex64::new(c, s)
}

fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while n % 4 == 0 {
        out.push(4);
        n /= 4;
    }
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be positive");
        if len == 1 {
            return Self { len, kind: Kind::Trivial };
        }
        let primes = prime_factors(len);
        if primes.iter().any(|&p| p > MAX_DIRECT_RADIX) {
            return Self {
                len,
                kind: Kind::Bluestein(Box::new(Bluestein::new(len))),
            };
        }
        let mut factors = Vec::with_capacity(primes.len());
        let mut rest = len;
        for p in primes {
            rest /= p;
            factors.push((p, rest));
        }
        let twiddles = (0..len).map(|k| root_of_unity(k, len)).collect();
        Self {
            len,
            kind: Kind::MixedRadix { factors, twiddles },
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len, "FFT buffer length");
        match &self.kind {
            Kind::Trivial => {}
            Kind::MixedRadix { factors, twiddles } => {
                let input = data.to_vec();
                let mut scratch = vec![Complex64::new(0.0, 0.0); factors[0].0];
                mixed_radix(data, &input, 0, 1, factors, twiddles, &mut scratch);
            }
            Kind::Bluestein(b) => b.run(data),
        }
    }

    /// In-place unnormalised inverse transform (`e^{+2 pi i k t / n}`).
    pub fn inverse(&self, data: &mut [Complex64]) {
        for z in data.iter_mut() {
            *z = z.conj();
        }
        self.forward(data);
        for z in data.iter_mut() {
            *z = z.conj();
        }
    }
}

/// Recursive decimation-in-time step: `out` receives the length-`p*m` DFT of
/// `input[offset + j * stride]`.
fn mixed_radix(
    out: &mut [Complex64],
    input: &[Complex64],
    offset: usize,
    stride: usize,
    factors: &[(usize, usize)],
    twiddles: &[Complex64],
    scratch: &mut Vec<Complex64>,
) {
    let (p, m) = factors[0];
    if m == 1 {
        for (q, o) in out.iter_mut().enumerate().take(p) {
            *o = input[offset + q * stride];
        }
    } else {
        for q in 0..p {
            mixed_radix(
                &mut out[q * m..(q + 1) * m],
                input,
                offset + q * stride,
                stride * p,
                &factors[1..],
                twiddles,
                scratch,
            );
        }
    }
    let n_total = twiddles.len();
    if scratch.len() < p {
        scratch.resize(p, Complex64::new(0.0, 0.0));
    }
    if p == 2 {
        for u in 0..m {
            let t = out[u + m] * twiddles[stride * u];
            let a = out[u];
            out[u] = a + t;
            out[u + m] = a - t;
        }
        return;
    }
    for u in 0..m {
        for q in 0..p {
            scratch[q] = out[u + q * m];
        }
        for q1 in 0..p {
            let k = u + q1 * m;
            let step = (stride * k) % n_total;
            let mut idx = 0usize;
            let mut acc = scratch[0];
            for s in scratch.iter().take(p).skip(1) {
                idx += step;
                if idx >= n_total {
                    idx -= n_total;
                }
                acc += s * twiddles[idx];
            }
            out[k] = acc;
        }
    }
}

impl Bluestein {
    fn new(len: usize) -> Self {
        let mut m = 1;
        while m < 2 * len - 1 {
            m <<= 1;
        }
        let inner = FftPlan::new(m);
        // w_k = e^{-i pi k^2 / n}; k^2 reduced mod 2n keeps the angle small.
        let chirp: Vec<Complex64> = (0..len)
            .map(|k| {
                let k2 = (k * k) % (2 * len);
                root_of_unity(k2, 2 * len)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); m];
        kernel[0] = chirp[0].conj();
        for k in 1..len {
            kernel[k] = chirp[k].conj();
            kernel[m - k] = chirp[k].conj();
        }
        inner.forward(&mut kernel);
        Self {
            inner,
            chirp,
            kernel_spectrum: kernel,
        }
    }

    fn run(&self, data: &mut [Complex64]) {
        let m = self.inner.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for (k, (b, x)) in buf.iter_mut().zip(data.iter()).enumerate() {
            *b = x * self.chirp[k];
        }
        self.inner.forward(&mut buf);
        for (b, h) in buf.iter_mut().zip(&self.kernel_spectrum) {
            *b *= h;
        }
        self.inner.inverse(&mut buf);
        let scale = 1.0 / m as f64;
        for (k, x) in data.iter_mut().enumerate() {
            *x = buf[k] * self.chirp[k] * scale;
        }
    }
}
