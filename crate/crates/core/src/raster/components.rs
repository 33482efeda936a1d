//! Connected-component labeling over boolean masks.
//!
//! Row bands are labeled in parallel with a local union-find, seams between
//! bands are merged sequentially, and the final labels are renumbered in
//! row-major order of first appearance. The result does not depend on how many
//! threads ran the band pass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// Edge-sharing neighbours only.
    #[default]
    Four,
    /// Edge- and corner-sharing neighbours.
    Eight,
}

impl Connectivity {
    /// Neighbour offsets as (drow, dcol).
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

pub const UNLABELED: u32 = u32::MAX;

/// Label the `true` cells of a row-major mask.
///
/// Returns one label per cell (`u32::MAX` for background) and the number of
/// components. Labels are dense, starting at 0, ordered by first cell in
/// row-major order.
pub fn label_components(
    mask: &[bool],
    ncols: usize,
    nrows: usize,
    connectivity: Connectivity,
) -> (Vec<u32>, usize) {
    assert_eq!(mask.len(), ncols * nrows, "mask length must equal ncols*nrows");
    if mask.is_empty() {
        return (Vec::new(), 0);
    }
    let threads = rayon::current_num_threads().max(1);
    let band_rows = nrows.div_ceil(threads * 4).max(16);

    let mut parent: Vec<u32> = (0..mask.len() as u32).collect();

    parent
        .par_chunks_mut(band_rows * ncols)
        .enumerate()
        .for_each(|(band, chunk)| {
            let base = band * band_rows * ncols;
            let rows = chunk.len() / ncols;
            for r in 0..rows {
                for c in 0..ncols {
                    let local = r * ncols + c;
                    if !mask[base + local] {
                        continue;
                    }
                    // previously visited neighbours inside the band
                    if c > 0 && mask[base + local - 1] {
                        union_local(chunk, base, local, local - 1);
                    }
                    if r > 0 {
                        let up = local - ncols;
                        if mask[base + up] {
                            union_local(chunk, base, local, up);
                        }
                        if connectivity == Connectivity::Eight {
                            if c > 0 && mask[base + up - 1] {
                                union_local(chunk, base, local, up - 1);
                            }
                            if c + 1 < ncols && mask[base + up + 1] {
                                union_local(chunk, base, local, up + 1);
                            }
                        }
                    }
                }
            }
        });

    // merge across band seams
    let mut seam = band_rows;
    while seam < nrows {
        let above = (seam - 1) * ncols;
        let below = seam * ncols;
        for c in 0..ncols {
            let i = below + c;
            if !mask[i] {
                continue;
            }
            if mask[above + c] {
                union(&mut parent, i as u32, (above + c) as u32);
            }
            if connectivity == Connectivity::Eight {
                if c > 0 && mask[above + c - 1] {
                    union(&mut parent, i as u32, (above + c - 1) as u32);
                }
                if c + 1 < ncols && mask[above + c + 1] {
                    union(&mut parent, i as u32, (above + c + 1) as u32);
                }
            }
        }
        seam += band_rows;
    }

    let mut labels = vec![UNLABELED; mask.len()];
    let mut root_label = vec![UNLABELED; mask.len()];
    let mut next = 0u32;
    for i in 0..mask.len() {
        if !mask[i] {
            continue;
        }
        let root = find(&mut parent, i as u32) as usize;
        if root_label[root] == UNLABELED {
            root_label[root] = next;
            next += 1;
        }
        labels[i] = root_label[root];
    }
    (labels, next as usize)
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let grand = parent[parent[x as usize] as usize];
        parent[x as usize] = grand;
        x = grand;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let ra = find(parent, a);
    let rb = find(parent, b);
    if ra != rb {
        // keep the smaller index as root
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Union-find restricted to one band; `chunk` holds global parent indices.
fn union_local(chunk: &mut [u32], base: usize, a: usize, b: usize) {
    let ra = find_local(chunk, base, a);
    let rb = find_local(chunk, base, b);
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        chunk[hi] = (base + lo) as u32;
    }
}

fn find_local(chunk: &mut [u32], base: usize, mut x: usize) -> usize {
    loop {
        let p = chunk[x] as usize - base;
        if p == x {
            return x;
        }
        let gp = chunk[p] as usize - base;
        chunk[x] = (base + gp) as u32;
        x = gp;
    }
}
