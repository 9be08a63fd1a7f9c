//! Inner loops. Every output element is accumulated as
//! `bias + Σ_r a[r]·b[r]` with the reduction index `r` walked in increasing
//! order, whatever the tiling, so tiled, remainder and parallel paths agree
//! bit for bit.

use crate::exec::for_each_chunk;
use crate::scalar::Scalar;

const MR: usize = 4;
const NR: usize = 32;

/// out[m, j] = bias[m] + Σ_r w[m, r] · rows[r][j] for j < ncols.
///
/// `w` is row-major (m × rows.len()); `out` is row-major (m × ncols).
pub(crate) fn gemm_bias<S: Scalar>(w: &[S], rows: &[&[S]], bias: &[S], out: &mut [S], ncols: usize) {
    let depth = rows.len();
    let m_total = bias.len();
    debug_assert_eq!(w.len(), m_total * depth);
    debug_assert_eq!(out.len(), m_total * ncols);
    for_each_chunk(out, MR * ncols, |blk, chunk| {
        let m0 = blk * MR;
        let m = chunk.len() / ncols;
        let w_blk = &w[m0 * depth..(m0 + m) * depth];
        let b_blk = &bias[m0..m0 + m];
        macro_rules! dispatch {
            ($($n:literal)*) => {
                match m {
                    $($n => panel::<S, $n>(w_blk, rows, b_blk, chunk, ncols),)*
                    _ => unreachable!("row block wider than MR"),
                }
            };
        }
        dispatch!(1 2 3 4 5 6 7 8)
    });
}

/// Columns per accumulator group. Each group is its own local array so the
/// optimizer keeps it in registers; one large array ends up spilled.
const LANES: usize = 8;
const GROUPS: usize = NR / LANES;

#[inline(always)]
fn step<S: Scalar, const M: usize>(acc: &mut [[S; LANES]; M], a: &[S; M], b: &[S]) {
    let b: &[S; LANES] = b[..LANES].try_into().unwrap();
    for m in 0..M {
        for j in 0..LANES {
            acc[m][j] = acc[m][j] + a[m] * b[j];
        }
    }
}

#[inline(always)]
fn store<S: Scalar, const M: usize>(acc: &[[S; LANES]; M], out: &mut [S], ncols: usize, j0: usize) {
    for m in 0..M {
        out[m * ncols + j0..m * ncols + j0 + LANES].copy_from_slice(&acc[m]);
    }
}

fn panel<S: Scalar, const M: usize>(w: &[S], rows: &[&[S]], bias: &[S], out: &mut [S], ncols: usize) {
    let depth = rows.len();
    // Weights transposed to (depth, M) so one step reads a contiguous column.
    let mut wt = vec![[S::zero(); M]; depth];
    for m in 0..M {
        for r in 0..depth {
            wt[r][m] = w[m * depth + r];
        }
    }
    let init: [[S; LANES]; M] = std::array::from_fn(|m| [bias[m]; LANES]);
    let mut j0 = 0;
    while j0 + NR <= ncols {
        debug_assert_eq!(GROUPS, 4);
        let (mut a0, mut a1, mut a2, mut a3) = (init, init, init, init);
        for (row, a) in rows.iter().zip(&wt) {
            let b = &row[j0..j0 + NR];
            step(&mut a0, a, &b[0..]);
            step(&mut a1, a, &b[LANES..]);
            step(&mut a2, a, &b[2 * LANES..]);
            step(&mut a3, a, &b[3 * LANES..]);
        }
        store(&a0, out, ncols, j0);
        store(&a1, out, ncols, j0 + LANES);
        store(&a2, out, ncols, j0 + 2 * LANES);
        store(&a3, out, ncols, j0 + 3 * LANES);
        j0 += NR;
    }
    while j0 + LANES <= ncols {
        let mut a0 = init;
        for (row, a) in rows.iter().zip(&wt) {
            step(&mut a0, a, &row[j0..j0 + LANES]);
        }
        store(&a0, out, ncols, j0);
        j0 += LANES;
    }
    if j0 < ncols {
        let rem = ncols - j0;
        let mut acc = vec![S::zero(); M * rem];
        for m in 0..M {
            acc[m * rem..(m + 1) * rem].fill(bias[m]);
        }
        for (row, a) in rows.iter().zip(&wt) {
            let b = &row[j0..ncols];
            for m in 0..M {
                for (acc, &bj) in acc[m * rem..(m + 1) * rem].iter_mut().zip(b) {
                    *acc = *acc + a[m] * bj;
                }
            }
        }
        for m in 0..M {
            out[m * ncols + j0..(m + 1) * ncols].copy_from_slice(&acc[m * rem..(m + 1) * rem]);
        }
    }
}

/// Temporal convolution of one sample. `x` holds c_in planes of t×v values,
/// `weight` is (c_out, c_in, k), `out` receives c_out planes of t_out×v.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_time_sample<S: Scalar>(
    x: &[S],
    c_in: usize,
    t: usize,
    v: usize,
    weight: &[S],
    bias: &[S],
    k: usize,
    stride: usize,
    padding: usize,
    t_out: usize,
    out: &mut [S],
) {
    let plane = t * v;
    let ncols = t_out * v;
    if stride == 1 {
        // Row (i, kk) of the implicit im2col matrix is plane i of the padded
        // input shifted by kk frames.
        let padded;
        let (src, src_plane) = if padding == 0 {
            (x, plane)
        } else {
            let pt = t + 2 * padding;
            let mut buf = vec![S::zero(); c_in * pt * v];
            for i in 0..c_in {
                let dst = i * pt * v + padding * v;
                buf[dst..dst + plane].copy_from_slice(&x[i * plane..(i + 1) * plane]);
            }
            padded = buf;
            (&padded[..], pt * v)
        };
        let mut rows: Vec<&[S]> = Vec::with_capacity(c_in * k);
        for i in 0..c_in {
            let p = &src[i * src_plane..(i + 1) * src_plane];
            for kk in 0..k {
                rows.push(&p[kk * v..kk * v + ncols]);
            }
        }
        gemm_bias(weight, &rows, bias, out, ncols);
    } else {
        let mut col = vec![S::zero(); c_in * k * ncols];
        for i in 0..c_in {
            let p = &x[i * plane..(i + 1) * plane];
            for kk in 0..k {
                let row = &mut col[(i * k + kk) * ncols..(i * k + kk + 1) * ncols];
                for to in 0..t_out {
                    let src_t = (to * stride + kk) as isize - padding as isize;
                    if src_t >= 0 && (src_t as usize) < t {
                        let s = src_t as usize * v;
                        row[to * v..(to + 1) * v].copy_from_slice(&p[s..s + v]);
                    }
                }
            }
        }
        let rows: Vec<&[S]> = col.chunks(ncols).collect();
        gemm_bias(weight, &rows, bias, out, ncols);
    }
}

const GRAPH_ROWS: usize = 64;

/// Joint count up to which graph rows are accumulated in registers.
const GRAPH_WIDE: usize = 32;

/// out_row[w] = Σ_u x_row[u] · a[u, w] for each length-v row.
pub(crate) fn graph_rows<S: Scalar>(x: &[S], a: &[S], v: usize, out: &mut [S]) {
    if v <= GRAPH_WIDE {
        let mut ap = vec![[S::zero(); GRAPH_WIDE]; v];
        for u in 0..v {
            ap[u][..v].copy_from_slice(&a[u * v..(u + 1) * v]);
        }
        for_each_chunk(out, GRAPH_ROWS * v, |blk, chunk| {
            let base = blk * GRAPH_ROWS * v;
            for (r, o) in chunk.chunks_mut(v).enumerate() {
                let xr = &x[base + r * v..base + (r + 1) * v];
                let mut acc = [S::zero(); GRAPH_WIDE];
                for (&xu, ar) in xr.iter().zip(&ap) {
                    for w in 0..GRAPH_WIDE {
                        acc[w] = acc[w] + xu * ar[w];
                    }
                }
                o.copy_from_slice(&acc[..v]);
            }
        });
        return;
    }
    for_each_chunk(out, GRAPH_ROWS * v, |blk, chunk| {
        let base = blk * GRAPH_ROWS * v;
        for (r, o) in chunk.chunks_mut(v).enumerate() {
            let xr = &x[base + r * v..base + (r + 1) * v];
            o.fill(S::zero());
            for (u, &xu) in xr.iter().enumerate() {
                let ar = &a[u * v..(u + 1) * v];
                for (ow, &aw) in o.iter_mut().zip(ar) {
                    *ow = *ow + xu * aw;
                }
            }
        }
    });
}
