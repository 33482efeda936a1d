//! Independent reference implementations shared by the integration tests.
//! Each one is deliberately naive and shares no code path with the library.

#![allow(dead_code)]

pub mod golden;

use std::collections::VecDeque;

/// Breadth-first flood fill from seed cells through `wet` cells.
/// Dry or nodata seeds spread only into their immediate wet neighbours.
pub fn bfs_connect(wet: &[bool], seeds: &[bool], ncols: usize, nrows: usize, eight: bool) -> Vec<bool> {
    let offsets: &[(isize, isize)] = if eight {
        &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    } else {
        &[(-1, 0), (1, 0), (0, -1), (0, 1)]
    };
    let mut out = vec![false; wet.len()];
    let mut queue = VecDeque::new();
    let neighbours = |i: usize| {
        let (r, c) = ((i / ncols) as isize, (i % ncols) as isize);
        offsets.iter().filter_map(move |&(dr, dc)| {
            let (nr, nc) = (r + dr, c + dc);
            (nr >= 0 && nc >= 0 && nr < nrows as isize && nc < ncols as isize)
                .then(|| nr as usize * ncols + nc as usize)
        })
    };
    for i in 0..wet.len() {
        if !seeds[i] {
            continue;
        }
        if wet[i] && !out[i] {
            out[i] = true;
            queue.push_back(i);
        }
        for j in neighbours(i) {
            if wet[j] && !out[j] {
                out[j] = true;
                queue.push_back(j);
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        for j in neighbours(i) {
            if wet[j] && !out[j] {
                out[j] = true;
                queue.push_back(j);
            }
        }
    }
    out
}

/// O(n²) nearest-feature Euclidean distance in cell units, scaled by `cell`.
pub fn brute_distance(features: &[bool], ncols: usize, nrows: usize, cell: f64) -> Vec<f64> {
    let pts: Vec<(f64, f64)> = (0..features.len())
        .filter(|&i| features[i])
        .map(|i| ((i % ncols) as f64, (i / ncols) as f64))
        .collect();
    (0..ncols * nrows)
        .map(|i| {
            let (x, y) = ((i % ncols) as f64, (i / ncols) as f64);
            pts.iter()
                .map(|&(px, py)| ((x - px).powi(2) + (y - py).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
                * cell
        })
        .collect()
}

/// Horn slope in degrees at one interior cell, straight from the kernel.
pub fn horn_slope_at(z: &dyn Fn(usize, usize) -> f64, r: usize, c: usize, cell: f64) -> f64 {
    let (a, b, cc) = (z(r - 1, c - 1), z(r - 1, c), z(r - 1, c + 1));
    let (d, f) = (z(r, c - 1), z(r, c + 1));
    let (g, h, i) = (z(r + 1, c - 1), z(r + 1, c), z(r + 1, c + 1));
    let dzdx = ((cc + 2.0 * f + i) - (a + 2.0 * d + g)) / (8.0 * cell);
    let dzdy = ((g + 2.0 * h + i) - (a + 2.0 * b + cc)) / (8.0 * cell);
    (dzdx * dzdx + dzdy * dzdy).sqrt().atan().to_degrees()
}

/// Kappa and overall accuracy straight from (reference, predicted) pairs.
pub fn kappa_from_pairs(pairs: &[(u8, u8)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let agree = pairs.iter().filter(|(a, b)| a == b).count() as f64;
    let p_o = agree / n;
    let mut classes: Vec<u8> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    classes.sort_unstable();
    classes.dedup();
    let p_e: f64 = classes
        .iter()
        .map(|&k| {
            let r = pairs.iter().filter(|p| p.0 == k).count() as f64;
            let c = pairs.iter().filter(|p| p.1 == k).count() as f64;
            r * c
        })
        .sum::<f64>()
        / (n * n);
    (p_o, (p_o - p_e) / (1.0 - p_e))
}

/// Per-cell hit/miss/false-alarm/correct-rejection counts by a plain loop.
/// Triples where any map is `None` are skipped.
pub fn three_map_counts(t2: &[Option<u8>], pred: &[Option<u8>], obs: &[Option<u8>]) -> [u64; 4] {
    let mut counts = [0u64; 4]; // correct rejection, hit, miss, false alarm
    for i in 0..t2.len() {
        let (Some(a), Some(p), Some(o)) = (t2[i], pred[i], obs[i]) else { continue };
        let slot = if a != o && a != p {
            1
        } else if a != o {
            2
        } else if a != p {
            3
        } else {
            0
        };
        counts[slot] += 1;
    }
    counts
}

/// Advance class counts one period at a time through a row-stochastic matrix.
pub fn markov_simulate(counts: &[f64], p: &[f64], periods: usize) -> Vec<f64> {
    let k = counts.len();
    let mut c = counts.to_vec();
    for _ in 0..periods {
        let mut next = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                next[j] += c[i] * p[i * k + j];
            }
        }
        c = next;
    }
    c
}

/// Meridian arc length from the equator by composite Simpson quadrature of
/// the meridional radius of curvature.
pub fn meridian_arc(a: f64, e2: f64, lat_rad: f64) -> f64 {
    let n = 20_000;
    let h = lat_rad / n as f64;
    let m = |p: f64| a * (1.0 - e2) / (1.0 - e2 * p.sin().powi(2)).powf(1.5);
    let mut sum = m(0.0) + m(lat_rad);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * m(i as f64 * h);
    }
    sum * h / 3.0
}

/// Transverse Mercator by the classic power series in longitude difference,
/// with the meridian arc from quadrature. Good to millimetres within a few
/// degrees of the central meridian. Returns (x, y) without false origin.
pub fn tm_series(a: f64, e2: f64, k0: f64, lon0_deg: f64, lon_deg: f64, lat_deg: f64) -> (f64, f64) {
    let phi = lat_deg.to_radians();
    let ep2 = e2 / (1.0 - e2);
    let n = a / (1.0 - e2 * phi.sin().powi(2)).sqrt();
    let t = phi.tan().powi(2);
    let c = ep2 * phi.cos().powi(2);
    let aa = (lon_deg - lon0_deg).to_radians() * phi.cos();
    let m = meridian_arc(a, e2, phi);
    let x = k0
        * n
        * (aa + (1.0 - t + c) * aa.powi(3) / 6.0
            + (5.0 - 18.0 * t + t * t + 72.0 * c - 58.0 * ep2) * aa.powi(5) / 120.0);
    let y = k0
        * (m + n
            * phi.tan()
            * (aa * aa / 2.0
                + (5.0 - t + 9.0 * c + 4.0 * c * c) * aa.powi(4) / 24.0
                + (61.0 - 58.0 * t + t * t + 600.0 * c - 330.0 * ep2) * aa.powi(6) / 720.0));
    (x, y)
}
