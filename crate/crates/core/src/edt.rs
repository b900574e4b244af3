//! Exact Euclidean distance transforms by separable lower-envelope passes
//! (Felzenszwalb & Huttenlocher), in 2D per slice or 3D with per-axis
//! spacing.

use rayon::prelude::*;

use crate::volume::Dims;

/// Squared-distance sentinel for "no feature reachable along this line".
pub const FAR: f64 = 1e30;

/// One lower-envelope pass: `out[p] = min_q f[q] + (w (p - q))²`.
pub fn squared_1d(f: &[f64], w: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    envelope(f, w, out, None, v, z);
}

fn envelope(f: &[f64], w: f64, out: &mut [f64], mut arg: Option<&mut [usize]>, v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    let w2 = w * w;
    let mut k: usize = 0;
    for q in 0..n {
        if f[q] >= FAR {
            continue;
        }
        if v.is_empty() {
            v.push(q);
            z.push(f64::NEG_INFINITY);
            z.push(f64::INFINITY);
            k = 0;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + w2 * (q * q) as f64) - (f[p] + w2 * (p * p) as f64))
                / (2.0 * w2 * (q as f64 - p as f64));
            if s <= z[k] {
                v.pop();
                z.pop();
                if k == 0 {
                    v.push(q);
                    z[0] = f64::NEG_INFINITY;
                    z.push(f64::INFINITY);
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v.push(q);
                z[k] = s;
                z.push(f64::INFINITY);
                break;
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = FAR);
        if let Some(a) = arg {
            a.iter_mut().for_each(|x| *x = usize::MAX);
        }
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = f[p] + w2 * d * d;
        if let Some(a) = arg.as_deref_mut() {
            a[q] = p;
        }
    }
}

fn pass_rows(buf: &mut [f64], nx: usize, w: f64) {
    buf.par_chunks_mut(nx).for_each_init(
        || (vec![0f64; nx], Vec::new(), Vec::new()),
        |(tmp, v, z), row| {
            tmp.copy_from_slice(row);
            squared_1d(tmp, w, row, v, z);
        },
    );
}

fn pass_cols_in_slices(buf: &mut [f64], dims: Dims, w: f64) {
    let (nx, ny) = (dims.nx, dims.ny);
    buf.par_chunks_mut(dims.slice_len()).for_each(|sl| {
        let mut col = vec![0f64; ny];
        let mut out = vec![0f64; ny];
        let (mut v, mut z) = (Vec::new(), Vec::new());
        for x in 0..nx {
            for y in 0..ny {
                col[y] = sl[y * nx + x];
            }
            squared_1d(&col, w, &mut out, &mut v, &mut z);
            for y in 0..ny {
                sl[y * nx + x] = out[y];
            }
        }
    });
}

fn pass_z(buf: &mut [f64], dims: Dims, w: f64) {
    let plane = dims.slice_len();
    let nz = dims.nz;
    // transpose columns in blocks of rows to keep memory access sane
    let cols: Vec<Vec<f64>> = (0..plane)
        .into_par_iter()
        .map(|p| {
            let col: Vec<f64> = (0..nz).map(|z| buf[z * plane + p]).collect();
            let mut out = vec![0f64; nz];
            let (mut v, mut zz) = (Vec::new(), Vec::new());
            squared_1d(&col, w, &mut out, &mut v, &mut zz);
            out
        })
        .collect();
    for (p, col) in cols.into_iter().enumerate() {
        for (z, val) in col.into_iter().enumerate() {
            buf[z * plane + p] = val;
        }
    }
}

/// Squared distance from every voxel to the nearest voxel where `feature`
/// holds, computed independently in each z-slice (unit pixel spacing).
pub fn squared_2d_slices(dims: Dims, feature: impl Fn(usize) -> bool + Sync) -> Vec<f64> {
    let mut buf: Vec<f64> = (0..dims.len())
        .into_par_iter()
        .map(|i| if feature(i) { 0.0 } else { FAR })
        .collect();
    pass_rows(&mut buf, dims.nx, 1.0);
    pass_cols_in_slices(&mut buf, dims, 1.0);
    buf
}

/// Squared distance to the nearest feature voxel in 3D with per-axis spacing.
pub fn squared_3d(dims: Dims, spacing: [f64; 3], feature: impl Fn(usize) -> bool + Sync) -> Vec<f64> {
    let mut buf: Vec<f64> = (0..dims.len())
        .into_par_iter()
        .map(|i| if feature(i) { 0.0 } else { FAR })
        .collect();
    pass_rows(&mut buf, dims.nx, spacing[0]);
    pass_cols_in_slices(&mut buf, dims, spacing[1]);
    if dims.nz > 1 {
        pass_z(&mut buf, dims, spacing[2]);
    }
    buf
}

/// Distance (not squared) in a 2D `nx × ny` image.
pub fn distance_2d(nx: usize, ny: usize, feature: impl Fn(usize) -> bool + Sync) -> Vec<f64> {
    squared_2d_slices(Dims::new(nx, ny, 1), feature)
        .into_iter()
        .map(|d| if d >= FAR { f64::INFINITY } else { d.sqrt() })
        .collect()
}

/// Distance and nearest feature pixel (row-major index, `usize::MAX` if
/// none) for every pixel of an `nx × ny` image.
pub fn feature_transform_2d(nx: usize, ny: usize, feature: impl Fn(usize) -> bool) -> (Vec<f64>, Vec<usize>) {
    let n = nx * ny;
    let mut row_d = vec![0f64; n];
    let mut row_arg = vec![0usize; n];
    let (mut v, mut z) = (Vec::new(), Vec::new());
    let mut f = vec![0f64; nx.max(ny)];
    for y in 0..ny {
        for x in 0..nx {
            f[x] = if feature(y * nx + x) { 0.0 } else { FAR };
        }
        let r = y * nx..(y + 1) * nx;
        envelope(&f[..nx], 1.0, &mut row_d[r.clone()], Some(&mut row_arg[r]), &mut v, &mut z);
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut nearest = vec![usize::MAX; n];
    let mut out = vec![0f64; ny];
    let mut arg = vec![0usize; ny];
    for x in 0..nx {
        for y in 0..ny {
            f[y] = row_d[y * nx + x];
        }
        envelope(&f[..ny], 1.0, &mut out, Some(&mut arg), &mut v, &mut z);
        for y in 0..ny {
            if out[y] < FAR && arg[y] != usize::MAX {
                let q = arg[y];
                dist[y * nx + x] = out[y].sqrt();
                nearest[y * nx + x] = q * nx + row_arg[q * nx + x];
            }
        }
    }
    (dist, nearest)
}
