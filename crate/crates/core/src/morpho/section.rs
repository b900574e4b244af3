use std::collections::{HashMap, VecDeque};

use super::skeleton::{voxel_at, Skeleton};
use crate::edt;
use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// One perpendicular cross-section, pixel coordinates relative to the
/// skeleton point at the given pitch.
#[derive(Debug, Clone, Default)]
pub struct Section {
    pub axon: Vec<(i32, i32)>,
    pub myelin: Vec<(i32, i32)>,
    pub pitch_nm: f64,
    /// The region reached the volume boundary or the search radius.
    pub partial: bool,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(a: [f64; 3]) -> Option<[f64; 3]> {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    (n > 1e-9).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

/// Central-difference tangent, one-sided at the ends.
pub fn tangent(sk: &Skeleton, index: usize) -> Result<[f64; 3]> {
    let p = &sk.points_nm;
    if index >= p.len() {
        return Err(Error::param(format!("skeleton index {index} out of range {}", p.len())));
    }
    if p.len() < 2 {
        return Err(Error::Degenerate("tangent of a single-point skeleton".into()));
    }
    let lo = index.saturating_sub(1);
    let hi = (index + 1).min(p.len() - 1);
    unit(sub(p[hi], p[lo])).ok_or_else(|| Error::Degenerate(format!("repeated skeleton points at {index}")))
}

/// In-plane basis `(u, v)` orthogonal to `t`.
fn basis(t: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let ax = (0..3).min_by(|&a, &b| t[a].abs().total_cmp(&t[b].abs())).unwrap();
    let mut e = [0.0; 3];
    e[ax] = 1.0;
    let u = unit(cross(t, e)).expect("axis chosen least parallel");
    let v = cross(t, u);
    (u, v)
}

const N4: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const N8: [(i32, i32); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Sample both label fields in the plane through skeleton point `index`
/// perpendicular to the local tangent. The axon region is the 4-connected
/// component of `label` at the point; the myelin region is the 8-connected
/// part of myelin instance `label` touching it. `max_radius` bounds the
/// search in pixels.
pub fn cross_section(
    axons: &LabelVolume,
    myelin_inst: &LabelVolume,
    sk: &Skeleton,
    index: usize,
    max_radius: i32,
) -> Result<Section> {
    myelin_inst.ensure_congruent(axons.dims, axons.voxel_size, "myelin instances")?;
    let t = tangent(sk, index)?;
    let (u, v) = basis(t);
    let c = sk.points_nm[index];
    let pitch = sk.pitch_nm;
    let label = sk.label;
    let mut cache: HashMap<(i32, i32), Option<(u32, u32)>> = HashMap::new();
    let mut sample = |i: i32, j: i32| -> Option<(u32, u32)> {
        *cache.entry((i, j)).or_insert_with(|| {
            let (a, b) = (i as f64 * pitch, j as f64 * pitch);
            let q = std::array::from_fn(|k| c[k] + a * u[k] + b * v[k]);
            voxel_at(axons.dims, axons.voxel_size, q).map(|idx| (axons.labels[idx], myelin_inst.labels[idx]))
        })
    };
    let mut out = Section {
        pitch_nm: pitch,
        ..Section::default()
    };
    // the smoothed point may sit just off the mask; look one ring out
    let start = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
        .into_iter()
        .find(|&(i, j)| sample(i, j).is_some_and(|s| s.0 == label));
    let Some(start) = start else {
        return Ok(out);
    };
    let mut state: HashMap<(i32, i32), u8> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    state.insert(start, 1);
    while let Some((i, j)) = queue.pop_front() {
        out.axon.push((i, j));
        if i.abs() >= max_radius || j.abs() >= max_radius {
            out.partial = true;
            continue;
        }
        for (di, dj) in N4 {
            let n = (i + di, j + dj);
            if state.contains_key(&n) {
                continue;
            }
            match sample(n.0, n.1) {
                None => out.partial = true,
                Some((a, _)) if a == label => {
                    state.insert(n, 1);
                    queue.push_back(n);
                }
                _ => {}
            }
        }
    }
    for k in 0..out.axon.len() {
        let (i, j) = out.axon[k];
        for (di, dj) in N8 {
            let n = (i + di, j + dj);
            if state.contains_key(&n) {
                continue;
            }
            if let Some((a, m)) = sample(n.0, n.1) {
                if m == label && a != label {
                    state.insert(n, 2);
                    queue.push_back(n);
                }
            }
        }
    }
    while let Some((i, j)) = queue.pop_front() {
        out.myelin.push((i, j));
        if i.abs() >= max_radius || j.abs() >= max_radius {
            out.partial = true;
            continue;
        }
        for (di, dj) in N8 {
            let n = (i + di, j + dj);
            if state.contains_key(&n) {
                continue;
            }
            match sample(n.0, n.1) {
                None => out.partial = true,
                Some((a, m)) if m == label && a != label => {
                    state.insert(n, 2);
                    queue.push_back(n);
                }
                _ => {}
            }
        }
    }
    out.axon.sort_unstable();
    out.myelin.sort_unstable();
    Ok(out)
}

/// Moment-equivalent ellipse of a pixel region: `(minor, major, ecc)` in
/// pixel units. Each pixel contributes its own uniform-square variance.
pub fn fit_ellipse(region: &[(i32, i32)]) -> Result<(f64, f64, f64)> {
    if region.is_empty() {
        return Err(Error::Degenerate("ellipse fit of an empty region".into()));
    }
    let n = region.len() as f64;
    let mx = region.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = region.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in region {
        let (dx, dy) = (x as f64 - mx, y as f64 - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sxx / n + 1.0 / 12.0, syy / n + 1.0 / 12.0, sxy / n);
    let mean = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let (l1, l2) = (mean + disc, (mean - disc).max(0.0));
    let major = 4.0 * l1.sqrt();
    let minor = 4.0 * l2.sqrt();
    let ecc = (1.0 - (minor / major).powi(2)).max(0.0).sqrt();
    Ok((minor, major, ecc))
}

/// Thickness samples along the ridge of the region's distance map, in
/// pixel units. A ridge pixel is a local maximum of the distance along the
/// direction to its nearest background pixel; the sample is twice the peak
/// height of a tent fitted through the three values, minus the half-pixel
/// offset of pixel-centre distances.
pub fn thickness_samples(region: &[(i32, i32)]) -> Vec<f64> {
    if region.is_empty() {
        return Vec::new();
    }
    let x0 = region.iter().map(|p| p.0).min().unwrap() - 1;
    let y0 = region.iter().map(|p| p.1).min().unwrap() - 1;
    let nx = (region.iter().map(|p| p.0).max().unwrap() - x0 + 2) as usize;
    let ny = (region.iter().map(|p| p.1).max().unwrap() - y0 + 2) as usize;
    let mut mask = vec![false; nx * ny];
    for &(x, y) in region {
        mask[(y - y0) as usize * nx + (x - x0) as usize] = true;
    }
    let (dt, near) = edt::feature_transform_2d(nx, ny, |i| !mask[i]);
    let at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= nx as i64 || y >= ny as i64 || !mask[y as usize * nx + x as usize] {
            0.0
        } else {
            dt[y as usize * nx + x as usize]
        }
    };
    let mut out = Vec::new();
    for y in 0..ny as i64 {
        for x in 0..nx as i64 {
            let i = y as usize * nx + x as usize;
            if !mask[i] {
                continue;
            }
            let j = near[i];
            let (ux, uy) = ((x - (j % nx) as i64) as f64, (y - (j / nx) as i64) as f64);
            let ang = uy.atan2(ux);
            let sector = ((ang / std::f64::consts::FRAC_PI_4).round() as i64).rem_euclid(8);
            let (dx, dy) = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)][sector as usize];
            let b = dt[i];
            let a = at(x - dx, y - dy);
            let c = at(x + dx, y + dy);
            if b < a || b < c {
                continue;
            }
            let s = b - a.min(c);
            let h = if s > 0.0 { b + 0.5 * (a.max(c) - b + s) } else { b };
            out.push(2.0 * (h - 0.5));
        }
    }
    out
}

pub(crate) fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Median myelin thickness of a section region in pixel units, `None` when
/// the region is empty.
pub fn myelin_thickness(region: &[(i32, i32)]) -> Option<f64> {
    median(&mut thickness_samples(region))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(f: impl Fn(f64, f64) -> bool, r: i32) -> Vec<(i32, i32)> {
        let mut out = Vec::new();
        for y in -r..=r {
            for x in -r..=r {
                if f(x as f64, y as f64) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    #[test]
    fn disk_and_ellipse_eccentricity() {
        let disk = raster(|x, y| x * x + y * y <= 400.0, 25);
        let (mi, ma, e) = fit_ellipse(&disk).unwrap();
        assert!(e < 0.05);
        assert!((mi - 40.0).abs() < 1.0 && (ma - 40.0).abs() < 1.0, "{mi} {ma}");
        let ell = raster(|x, y| (x / 30.0).powi(2) + (y / 15.0).powi(2) <= 1.0, 35);
        let (mi, ma, e) = fit_ellipse(&ell).unwrap();
        assert!((e - 0.866).abs() < 0.02, "{e}");
        assert!(mi <= ma);
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        let rot = raster(
            |x, y| {
                let (u, v) = (c * x + s * y, -s * x + c * y);
                (u / 30.0).powi(2) + (v / 15.0).powi(2) <= 1.0
            },
            35,
        );
        let (_, _, er) = fit_ellipse(&rot).unwrap();
        assert!((er - e).abs() < 0.02);
        let (mi, ma, e1) = fit_ellipse(&[(3, 4)]).unwrap();
        assert_eq!((mi, e1), (ma, 0.0));
        assert!(fit_ellipse(&[]).is_err());
    }

    #[test]
    fn annulus_thickness() {
        // inner 20 px, outer 35 px
        let ring = raster(
            |x, y| {
                let r = (x * x + y * y).sqrt();
                r > 20.0 && r <= 35.0
            },
            40,
        );
        let t = myelin_thickness(&ring).unwrap();
        assert!((t - 15.0).abs() <= 1.0, "{t}");
    }

    #[test]
    fn one_pixel_band_and_bulge() {
        let band: Vec<(i32, i32)> = (0..30).map(|x| (x, 0)).collect();
        assert_eq!(myelin_thickness(&band), Some(1.0));
        for w in [2, 3, 4, 7] {
            let band: Vec<(i32, i32)> = (0..w).flat_map(|y| (0..40).map(move |x| (x, y))).collect();
            let t = myelin_thickness(&band).unwrap();
            assert!((t - w as f64).abs() <= 0.5, "width {w}: {t}");
        }
        let mut ring = raster(
            |x, y| {
                let r = (x * x + y * y).sqrt();
                (r > 20.0 && r <= 28.0) || (x > 15.0 && y.abs() < 6.0 && r <= 40.0)
            },
            42,
        );
        ring.dedup();
        let t = myelin_thickness(&ring).unwrap();
        assert!((t - 8.0).abs() <= 1.0, "{t}");
        assert_eq!(myelin_thickness(&[]), None);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
