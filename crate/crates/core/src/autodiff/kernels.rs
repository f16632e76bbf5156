//! Dense kernels shared by the graph ops: GEMM dispatch, patch extraction
//! for (transposed) convolution, and interpolation matrices.

use super::Scalar;

/// `C = alpha * A B + beta * C` for row-major views described by strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    (rsa, csa): (usize, usize),
    b: &[T],
    (rsb, csb): (usize, usize),
    beta: T,
    c: &mut [T],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, rsa, csa) < a.len(), "gemm: A out of bounds");
        assert!(last(k, n, rsb, csb) < b.len(), "gemm: B out of bounds");
    }
    assert!(last(m, n, rsc, csc) < c.len(), "gemm: C out of bounds");
    // SAFETY: every index touched lies within the slices, checked above.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Geometry linking an image `[c, h, w]` to a `grid_h x grid_w` lattice of
/// `k x k` patches taken with `stride` and zero `pad`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Patch {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl Patch {
    pub fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn grid(&self) -> usize {
        self.grid_h * self.grid_w
    }

    /// Image index of patch row `r` at grid cell `(gy, gx)`, if inside.
    #[inline]
    fn source(&self, ci: usize, ki: usize, kj: usize, gy: usize, gx: usize) -> Option<usize> {
        let y = (gy * self.stride + ki).checked_sub(self.pad)?;
        let x = (gx * self.stride + kj).checked_sub(self.pad)?;
        (y < self.h && x < self.w).then(|| (ci * self.h + y) * self.w + x)
    }

    /// Writes patches of `img` as a `[rows, grid]` matrix with row stride `ld`.
    pub fn im2col<T: Scalar>(&self, img: &[T], cols: &mut [T], ld: usize) {
        let grid = self.grid();
        for ci in 0..self.c {
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let r = (ci * self.k + ki) * self.k + kj;
                    let row = &mut cols[r * ld..r * ld + grid];
                    for gy in 0..self.grid_h {
                        for gx in 0..self.grid_w {
                            row[gy * self.grid_w + gx] = match self.source(ci, ki, kj, gy, gx) {
                                Some(idx) => img[idx],
                                None => T::zero(),
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Patch::im2col`]: scatters-adds columns into `img`.
    pub fn col2im<T: Scalar>(&self, cols: &[T], ld: usize, img: &mut [T]) {
        let grid = self.grid();
        for ci in 0..self.c {
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let r = (ci * self.k + ki) * self.k + kj;
                    let row = &cols[r * ld..r * ld + grid];
                    for gy in 0..self.grid_h {
                        for gx in 0..self.grid_w {
                            if let Some(idx) = self.source(ci, ki, kj, gy, gx) {
                                img[idx] = img[idx] + row[gy * self.grid_w + gx];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Output size of a strided convolution.
pub(crate) fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    (padded >= k).then(|| (padded - k) / stride + 1)
}

/// Output size of a transposed convolution.
pub(crate) fn conv_transpose_out(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    ((size - 1) * stride + k).checked_sub(2 * pad).filter(|&s| s > 0)
}

/// `[out, in]` linear-interpolation matrix with half-pixel centers and
/// clamped edges; rows sum to one.
pub(crate) fn bilinear_matrix<T: Scalar>(input: usize, output: usize) -> Vec<T> {
    let mut m = vec![T::zero(); output * input];
    let scale = input as f64 / output as f64;
    for o in 0..output {
        let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(input - 1);
        let frac = src - lo as f64;
        m[o * input + lo] = m[o * input + lo] + T::from_f64(1.0 - frac).unwrap();
        m[o * input + hi] = m[o * input + hi] + T::from_f64(frac).unwrap();
    }
    m
}
