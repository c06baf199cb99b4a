//! Geometry and im2col kernels for strided 2-D convolutions.

/// Spatial geometry of a square-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub const fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        ConvGeom {
            kernel,
            stride,
            pad,
        }
    }

    /// Output extent of a convolution: `floor((in + 2 pad - k) / stride) + 1`.
    pub fn conv_out(&self, input: usize) -> Option<usize> {
        let padded = input + 2 * self.pad;
        if padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    /// Output extent of the transposed convolution: `(in - 1) stride - 2 pad + k`.
    pub fn deconv_out(&self, input: usize) -> Option<usize> {
        ((input - 1) * self.stride + self.kernel).checked_sub(2 * self.pad)
    }
}

/// Unfolds one `[c, h, w]` image into `[c * k * k, oh * ow]` columns.
pub(crate) fn im2col<T: Copy + Default>(
    img: &[T],
    c: usize,
    h: usize,
    w: usize,
    g: ConvGeom,
    oh: usize,
    ow: usize,
    cols: &mut [T],
) {
    let k = g.kernel;
    let plane = oh * ow;
    debug_assert_eq!(cols.len(), c * k * k * plane);
    for ch in 0..c {
        let src = &img[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        line.iter_mut().for_each(|v| *v = T::default());
                        continue;
                    }
                    let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= w as isize {
                            T::default()
                        } else {
                            srow[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `img`.
pub(crate) fn col2im<T: Copy + std::ops::AddAssign>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    g: ConvGeom,
    oh: usize,
    ow: usize,
    img: &mut [T],
) {
    let k = g.kernel;
    let plane = oh * ow;
    for ch in 0..c {
        let dst = &mut img[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            drow[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_two_kernel_four_halves_even_extents() {
        let g = ConvGeom::new(4, 2, 1);
        assert_eq!(g.conv_out(32), Some(16));
        assert_eq!(g.conv_out(16), Some(8));
        assert_eq!(g.deconv_out(8), Some(16));
        assert_eq!(g.deconv_out(16), Some(32));
    }

    #[test]
    fn valid_geometry_matches_floor_formula() {
        let g = ConvGeom::new(4, 2, 0);
        assert_eq!(g.conv_out(32), Some(15));
        assert_eq!(g.conv_out(3), None);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeom::new(4, 2, 1);
        let (c, h, w) = (2, 6, 8);
        let (oh, ow) = (g.conv_out(h).unwrap(), g.conv_out(w).unwrap());
        let x: Vec<f64> = (0..c * h * w).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let y: Vec<f64> = (0..c * 16 * oh * ow)
            .map(|i| ((i * 13 % 7) as f64) - 3.0)
            .collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, c, h, w, g, oh, ow, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, c, h, w, g, oh, ow, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
