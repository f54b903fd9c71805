//! Channel-major convolution kernels used by the network and its gradients.
//!
//! Activations are stored as `[channels][len]` rows in one flat buffer with a
//! row stride. Weights are `[c_out][c_in][k]`.

/// Geometry of one (possibly dilated) convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub dilation: usize,
    /// Row stride of the input buffer.
    pub in_stride: usize,
    /// First input index read for output index 0.
    pub start: usize,
    pub len_out: usize,
}

/// `C += A·B` on strided row-major views (lengths checked by the callers).
#[allow(clippy::too_many_arguments)]
fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    let last = |rs: usize, cs: usize, r: usize, cc: usize| (r - 1) * rs + (cc - 1) * cs;
    assert!(last(rsa, csa, m, k) < a.len());
    assert!(last(rsb, csb, k, n) < b.len());
    assert!(last(rsc, csc, m, n) < c.len());
    // SAFETY: the asserts above keep every strided access inside its slice,
    // and `c` is a unique borrow distinct from `a` and `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

impl Conv {
    /// One tap `j` of the convolution is a `[c_out × c_in]·[c_in × len_out]`
    /// product over a shifted view of the input.
    pub fn forward(&self, w: &[f64], b: &[f64], input: &[f64]) -> Vec<f64> {
        let n = self.len_out;
        let mut out = vec![0.0; self.c_out * n];
        for (co, row) in out.chunks_exact_mut(n).enumerate() {
            row.fill(b[co]);
        }
        let ck = self.c_in * self.k;
        for j in 0..self.k {
            let off = self.start + j * self.dilation;
            gemm_acc(self.c_out, self.c_in, n, &w[j..], ck, self.k, &input[off..], self.in_stride, 1, &mut out, n, 1);
        }
        out
    }

    /// Accumulates weight, bias and (optionally) input gradients given the
    /// output gradient `dout` (`[c_out][len_out]`).
    pub fn backward(
        &self,
        w: &[f64],
        input: &[f64],
        dout: &[f64],
        dw: &mut [f64],
        db: &mut [f64],
        mut din: Option<&mut [f64]>,
    ) {
        let n = self.len_out;
        for (co, grow) in dout.chunks_exact(n).enumerate() {
            db[co] += grow.iter().sum::<f64>();
        }
        let ck = self.c_in * self.k;
        for j in 0..self.k {
            let off = self.start + j * self.dilation;
            // dW_j[co][ci] += Σ_t dout[co][t] · x[ci][off + t]
            gemm_acc(self.c_out, n, self.c_in, dout, n, 1, &input[off..], 1, self.in_stride, &mut dw[j..], ck, self.k);
            if let Some(d) = din.as_deref_mut() {
                // dx[ci][off + t] += Σ_co W_j[co][ci] · dout[co][t]
                gemm_acc(self.c_in, self.c_out, n, &w[j..], self.k, ck, dout, n, 1, &mut d[off..], self.in_stride, 1);
            }
        }
    }
}
