//! Receptive-field connectivity on an image grid, without weight sharing.
//!
//! Output units live on the same `height x width` grid as the input, with
//! `units_per_site` independent units per position (output index
//! `u * H * W + r * W + c`, matching the channel-planar input layout
//! `ch * H * W + r * W + c`). Each unit sees a `field x field` window
//! around its position across all input channels — truncated at the image
//! border, no padding — plus an optional "broadcast" tail of the input
//! (e.g. a label block) that every unit sees.
//!
//! Kernels run on packed index lists; the dense weight matrix remains the
//! source of truth with off-pattern entries pinned to exact zero.

use crate::error::{Error, Result};
use crate::numerics::{Mat, Scalar};
use crate::rule::UpdateBatch;

/// Local connectivity descriptor plus precomputed index lists.
#[derive(Debug, Clone)]
pub struct LocalPattern {
    height: usize,
    width: usize,
    channels: usize,
    units_per_site: usize,
    field: usize,
    broadcast_len: usize,
    /// CSR over output units: `indices[offsets[j]..offsets[j+1]]` are the
    /// sorted input indices feeding unit `j`.
    offsets: Vec<usize>,
    indices: Vec<u32>,
    /// Reverse CSR over inputs: the output units each input feeds.
    rev_offsets: Vec<usize>,
    rev_indices: Vec<u32>,
    /// Membership bitmap over `fan_in * fan_out`, for O(1) mask checks.
    bitmap: Vec<u64>,
}

impl PartialEq for LocalPattern {
    fn eq(&self, other: &Self) -> bool {
        // The derived lists are a function of the descriptor.
        self.height == other.height
            && self.width == other.width
            && self.channels == other.channels
            && self.units_per_site == other.units_per_site
            && self.field == other.field
            && self.broadcast_len == other.broadcast_len
    }
}
impl Eq for LocalPattern {}

impl LocalPattern {
    /// Build the pattern for a `height x width x channels` input grid.
    ///
    /// `field` must be odd so windows center on their unit. The broadcast
    /// tail occupies input indices `H*W*C .. H*W*C + broadcast_len`.
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        units_per_site: usize,
        field: usize,
        broadcast_len: usize,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 || units_per_site == 0 {
            return Err(Error::EmptyInput("LocalPattern::new"));
        }
        if field == 0 || field % 2 == 0 || field > height || field > width {
            return Err(Error::NotEnough {
                context: "LocalPattern::new: field must be odd and fit the grid",
                requested: field,
                available: height.min(width),
            });
        }
        let grid = height * width;
        let fan_in = grid * channels + broadcast_len;
        let fan_out = grid * units_per_site;
        let half = field / 2;

        let mut offsets = Vec::with_capacity(fan_out + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for u in 0..units_per_site {
            let _ = u; // every unit at a site has the same field
            for r in 0..height {
                for c in 0..width {
                    let r0 = r.saturating_sub(half);
                    let r1 = (r + half).min(height - 1);
                    let c0 = c.saturating_sub(half);
                    let c1 = (c + half).min(width - 1);
                    for ch in 0..channels {
                        for rr in r0..=r1 {
                            for cc in c0..=c1 {
                                indices.push((ch * grid + rr * width + cc) as u32);
                            }
                        }
                    }
                    for b in 0..broadcast_len {
                        indices.push((grid * channels + b) as u32);
                    }
                    offsets.push(indices.len());
                }
            }
        }

        let mut rev_counts = vec![0usize; fan_in];
        for &i in &indices {
            rev_counts[i as usize] += 1;
        }
        let mut rev_offsets = Vec::with_capacity(fan_in + 1);
        rev_offsets.push(0usize);
        for &c in &rev_counts {
            rev_offsets.push(rev_offsets.last().unwrap() + c);
        }
        let mut cursor = rev_offsets.clone();
        let mut rev_indices = vec![0u32; indices.len()];
        for j in 0..fan_out {
            for &i in &indices[offsets[j]..offsets[j + 1]] {
                rev_indices[cursor[i as usize]] = j as u32;
                cursor[i as usize] += 1;
            }
        }

        let mut bitmap = vec![0u64; (fan_in * fan_out).div_ceil(64)];
        for j in 0..fan_out {
            for &i in &indices[offsets[j]..offsets[j + 1]] {
                let bit = i as usize * fan_out + j;
                bitmap[bit / 64] |= 1 << (bit % 64);
            }
        }

        Ok(LocalPattern {
            height,
            width,
            channels,
            units_per_site,
            field,
            broadcast_len,
            offsets,
            indices,
            rev_offsets,
            rev_indices,
            bitmap,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn units_per_site(&self) -> usize {
        self.units_per_site
    }
    pub fn field(&self) -> usize {
        self.field
    }
    pub fn broadcast_len(&self) -> usize {
        self.broadcast_len
    }

    pub fn fan_in(&self) -> usize {
        self.height * self.width * self.channels + self.broadcast_len
    }

    pub fn fan_out(&self) -> usize {
        self.height * self.width * self.units_per_site
    }

    /// Sorted input indices feeding output unit `j`.
    pub fn inputs_of(&self, j: usize) -> &[u32] {
        &self.indices[self.offsets[j]..self.offsets[j + 1]]
    }

    /// Output units fed by input `i`.
    pub fn outputs_of(&self, i: usize) -> &[u32] {
        &self.rev_indices[self.rev_offsets[i]..self.rev_offsets[i + 1]]
    }

    pub fn connects(&self, i: usize, j: usize) -> bool {
        let bit = i * self.fan_out() + j;
        self.bitmap[bit / 64] & (1 << (bit % 64)) != 0
    }

    /// Error if any off-pattern entry of `m` is nonzero.
    pub fn check_masked<T: Scalar>(&self, m: &Mat<T>) -> Result<()> {
        let fan_out = self.fan_out();
        for i in 0..self.fan_in() {
            let row = m.row(i);
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    let bit = i * fan_out + j;
                    if self.bitmap[bit / 64] & (1 << (bit % 64)) == 0 {
                        return Err(Error::Format {
                            path: "local weights".into(),
                            detail: format!("nonzero off-pattern entry at ({i}, {j})"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Pack the connected entries of `w` parallel to the CSR index list.
    fn pack<T: Scalar>(&self, w: &Mat<T>) -> Vec<T> {
        let mut packed = Vec::with_capacity(self.indices.len());
        for j in 0..self.fan_out() {
            for &i in self.inputs_of(j) {
                packed.push(w[(i as usize, j)]);
            }
        }
        packed
    }

    /// Batch linear response using the packed kernel.
    pub fn forward<T: Scalar>(&self, x: &Mat<T>, w: &Mat<T>) -> Result<Mat<T>> {
        if x.cols() != self.fan_in() {
            return Err(Error::LayoutMismatch {
                expected: self.fan_in(),
                got: x.cols(),
            });
        }
        let packed = self.pack(w);
        let mut out = Mat::zeros(x.rows(), self.fan_out());
        for s in 0..x.rows() {
            let x_row = x.row(s);
            let o_row = out.row_mut(s);
            for (j, o) in o_row.iter_mut().enumerate() {
                let lo = self.offsets[j];
                let hi = self.offsets[j + 1];
                *o = T::from64(gather_dot(x_row, &self.indices[lo..hi], &packed[lo..hi]));
            }
        }
        Ok(out)
    }

    /// Pull an upstream gradient on the linear response back to the input
    /// (single sample).
    pub fn backward<T: Scalar>(&self, w: &Mat<T>, upstream: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.fan_in()];
        for (i, gi) in g.iter_mut().enumerate() {
            let w_row = w.row(i);
            let mut acc = 0.0f64;
            for &j in self.outputs_of(i) {
                acc += w_row[j as usize].as64() * upstream[j as usize].as64();
            }
            *gi = T::from64(acc);
        }
        g
    }

    /// Competitive update restricted to the pattern.
    ///
    /// Identical to the dense rule on the masked weight matrix (off-pattern
    /// weights are zero, so they add nothing to the reconstruction), but
    /// computed on the index lists at a fraction of the cost.
    pub fn competitive_delta<T: Scalar>(
        &self,
        batch: &UpdateBatch<T>,
        w: &Mat<T>,
        weights: Option<&[T]>,
    ) -> Result<Mat<T>> {
        let (x, y) = (batch.x, batch.y);
        if x.rows() == 0 {
            return Err(Error::EmptyInput("local competitive_delta"));
        }
        if x.rows() != y.rows() || x.cols() != self.fan_in() || y.cols() != self.fan_out() {
            return Err(Error::DimensionMismatch {
                op: "local competitive_delta",
                lhs_rows: x.rows(),
                lhs_cols: x.cols(),
                rhs_rows: y.rows(),
                rhs_cols: y.cols(),
            });
        }
        if let Some(g) = weights {
            if g.len() != x.rows() {
                return Err(Error::DimensionMismatch {
                    op: "local competitive_delta",
                    lhs_rows: x.rows(),
                    lhs_cols: x.cols(),
                    rhs_rows: g.len(),
                    rhs_cols: 1,
                });
            }
            if !crate::numerics::all_finite(g) {
                return Err(Error::NonFinite {
                    context: "local competitive_delta",
                });
            }
        }
        if !batch.eta.is_finite() || !x.all_finite() || !y.all_finite() || !w.all_finite() {
            return Err(Error::NonFinite {
                context: "local competitive_delta",
            });
        }

        let b = x.rows();
        let fan_in = self.fan_in();
        let fan_out = self.fan_out();
        let packed = self.pack(w);

        // Residual transposed, f64: rt[i][s] = x[s][i] - sum_j y[s][j] w_ij.
        let mut rt = vec![0.0f64; fan_in * b];
        for s in 0..b {
            for (i, &v) in x.row(s).iter().enumerate() {
                rt[i * b + s] = v.as64();
            }
        }
        // Response transposed, f64, with optional per-sample gates folded in
        // for the delta contraction (the residual uses ungated responses).
        let mut yt = vec![0.0f64; fan_out * b];
        for s in 0..b {
            for (j, &v) in y.row(s).iter().enumerate() {
                yt[j * b + s] = v.as64();
            }
        }
        for j in 0..fan_out {
            let y_row = &yt[j * b..(j + 1) * b];
            for (e, &iu) in self.inputs_of(j).iter().enumerate() {
                let wij = packed[self.offsets[j] + e].as64();
                let r_row = &mut rt[iu as usize * b..(iu as usize + 1) * b];
                for (r, &yv) in r_row.iter_mut().zip(y_row) {
                    *r -= wij * yv;
                }
            }
        }
        if let Some(g) = weights {
            for j in 0..fan_out {
                let y_row = &mut yt[j * b..(j + 1) * b];
                for (yv, gs) in y_row.iter_mut().zip(g) {
                    *yv *= gs.as64();
                }
            }
        }

        let scale = batch.eta.as64() / b as f64;
        let mut delta = Mat::zeros(fan_in, fan_out);
        for j in 0..fan_out {
            let y_row = &yt[j * b..(j + 1) * b];
            for &iu in self.inputs_of(j) {
                let i = iu as usize;
                let r_row = &rt[i * b..(i + 1) * b];
                let mut acc = [0.0f64; 4];
                let chunks = b / 4;
                for k in 0..chunks {
                    let s = 4 * k;
                    acc[0] += r_row[s] * y_row[s];
                    acc[1] += r_row[s + 1] * y_row[s + 1];
                    acc[2] += r_row[s + 2] * y_row[s + 2];
                    acc[3] += r_row[s + 3] * y_row[s + 3];
                }
                for s in 4 * chunks..b {
                    acc[0] += r_row[s] * y_row[s];
                }
                delta[(i, j)] = T::from64(((acc[0] + acc[1]) + (acc[2] + acc[3])) * scale);
            }
        }
        Ok(delta)
    }
}

/// Gathered dot product with four interleaved `f64` accumulators.
fn gather_dot<T: Scalar>(x: &[T], idx: &[u32], w: &[T]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = idx.len() / 4;
    for k in 0..chunks {
        let e = 4 * k;
        acc[0] += x[idx[e] as usize].as64() * w[e].as64();
        acc[1] += x[idx[e + 1] as usize].as64() * w[e + 1].as64();
        acc[2] += x[idx[e + 2] as usize].as64() * w[e + 2].as64();
        acc[3] += x[idx[e + 3] as usize].as64() * w[e + 3].as64();
    }
    for e in 4 * chunks..idx.len() {
        acc[0] += x[idx[e] as usize].as64() * w[e].as64();
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}
