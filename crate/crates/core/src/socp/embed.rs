use num_complex::Complex64;

/// Real embedding of a complex vector: entry `i` becomes the pair
/// `(re, im)` at positions `2i`, `2i + 1`.
///
/// An inner product `h^H w` becomes a 2-row real map acting on the embedded
/// `w`: the first row gives the real part, the second the imaginary part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexEmbedding {
    complex_dim: usize,
}

impl ComplexEmbedding {
    pub fn new(complex_dim: usize) -> Self {
        ComplexEmbedding { complex_dim }
    }

    pub fn complex_dim(&self) -> usize {
        self.complex_dim
    }

    pub fn real_dim(&self) -> usize {
        2 * self.complex_dim
    }

    pub fn re(&self, i: usize) -> usize {
        2 * i
    }

    pub fn im(&self, i: usize) -> usize {
        2 * i + 1
    }

    pub fn embed(&self, w: &[Complex64]) -> Vec<f64> {
        assert_eq!(w.len(), self.complex_dim);
        w.iter().flat_map(|v| [v.re, v.im]).collect()
    }

    pub fn extract(&self, x: &[f64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.real_dim());
        x.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
    }

    /// Rows `(re_row, im_row)` with `Re(h^H w) = re_row . x` and
    /// `Im(h^H w) = im_row . x` for `x = embed(w)`.
    pub fn inner_product_rows(&self, h: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(h.len(), self.complex_dim);
        let mut re_row = vec![0.0; self.real_dim()];
        let mut im_row = vec![0.0; self.real_dim()];
        for (i, hi) in h.iter().enumerate() {
            // conj(h) w = (hr wr + hi wi) + i (hr wi - hi wr)
            re_row[self.re(i)] = hi.re;
            re_row[self.im(i)] = hi.im;
            im_row[self.re(i)] = -hi.im;
            im_row[self.im(i)] = hi.re;
        }
        (re_row, im_row)
    }
}
