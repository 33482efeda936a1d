//! Staircase polygonization of one class of a categorical grid.
//!
//! Region boundaries are traced along cell edges with the region on the left,
//! turning left first at every vertex. Regions are 4-connected, so two cells
//! touching only at a corner belong to separate polygons and every ring stays
//! on lattice vertices. Areas are therefore exact multiples of the cell area.

use super::components::{label_components, Connectivity, UNLABELED};
use super::{ClassGrid, Coord, Feature, Geometry, Polygon, VectorLayer};

// Directions in lattice space (x right, y up): E, N, W, S.
const DX: [i64; 4] = [1, 0, -1, 0];
const DY: [i64; 4] = [0, 1, 0, -1];

struct Lattice<'a> {
    labels: &'a [u32],
    ncols: i64,
    nrows: i64,
}

impl Lattice<'_> {
    /// Component label of the cell whose lower-left lattice corner is (x, y).
    fn label(&self, x: i64, y: i64) -> u32 {
        if x < 0 || y < 0 || x >= self.ncols || y >= self.nrows {
            return UNLABELED;
        }
        let row = self.nrows - 1 - y;
        self.labels[(row * self.ncols + x) as usize]
    }

    /// Cells to the left and right of the unit edge leaving (x, y) in `dir`.
    fn sides(dir: usize, x: i64, y: i64) -> ((i64, i64), (i64, i64)) {
        match dir {
            0 => ((x, y), (x, y - 1)),
            1 => ((x - 1, y), (x, y)),
            2 => ((x - 1, y - 1), (x - 1, y)),
            _ => ((x, y - 1), (x - 1, y - 1)),
        }
    }

    fn is_edge(&self, dir: usize, x: i64, y: i64, label: u32) -> bool {
        let ((lx, ly), (rx, ry)) = Self::sides(dir, x, y);
        self.label(lx, ly) == label && self.label(rx, ry) != label
    }

    /// Index of an edge via its left cell and direction.
    fn edge_id(&self, dir: usize, x: i64, y: i64) -> usize {
        let ((lx, ly), _) = Self::sides(dir, x, y);
        let row = self.nrows - 1 - ly;
        ((row * self.ncols + lx) as usize) * 4 + dir
    }
}

/// Trace every connected region of `class_id` into one MultiPolygon feature.
/// An absent class yields an empty layer.
pub fn polygonize(mask: &ClassGrid, class_id: u8) -> VectorLayer {
    let header = mask.header();
    let mut layer = VectorLayer::new(header.crs_tag.clone());
    let selected: Vec<bool> = mask.cells().iter().map(|&c| c == class_id).collect();
    let (labels, count) = label_components(&selected, header.ncols, header.nrows, Connectivity::Four);
    if count == 0 {
        return layer;
    }
    let lattice = Lattice {
        labels: &labels,
        ncols: header.ncols as i64,
        nrows: header.nrows as i64,
    };
    let mut visited = vec![false; labels.len() * 4];
    let mut exteriors: Vec<Option<Vec<[i64; 2]>>> = vec![None; count];
    let mut holes: Vec<Vec<Vec<[i64; 2]>>> = vec![Vec::new(); count];

    for row in 0..header.nrows as i64 {
        for col in 0..header.ncols as i64 {
            let label = labels[(row * lattice.ncols + col) as usize];
            if label == UNLABELED {
                continue;
            }
            let y = lattice.nrows - 1 - row;
            // edge starts for the four sides of cell (col, y)
            let starts = [(0, col, y), (1, col + 1, y), (2, col + 1, y + 1), (3, col, y + 1)];
            for (dir, sx, sy) in starts {
                if !lattice.is_edge(dir, sx, sy, label) || visited[lattice.edge_id(dir, sx, sy)] {
                    continue;
                }
                let ring = trace(&lattice, &mut visited, dir, sx, sy, label);
                if lattice_area2(&ring) > 0 {
                    debug_assert!(exteriors[label as usize].is_none(), "one exterior per region");
                    exteriors[label as usize] = Some(ring);
                } else {
                    holes[label as usize].push(ring);
                }
            }
        }
    }

    let (ox, oy, cs) = (header.origin_x, header.origin_y, header.cell_size);
    let to_map = |ring: Vec<[i64; 2]>| -> Vec<Coord> {
        ring.into_iter()
            .map(|[x, y]| [ox + x as f64 * cs, oy + y as f64 * cs])
            .collect()
    };
    let polygons: Vec<Polygon> = exteriors
        .into_iter()
        .zip(holes)
        .filter_map(|(ext, hs)| {
            let ext = ext?;
            Some(Polygon {
                exterior: to_map(ext),
                holes: hs.into_iter().map(to_map).collect(),
            })
        })
        .collect();
    let cells = selected.iter().filter(|&&s| s).count();
    layer.features.push(
        Feature::new(Geometry::MultiPolygon(polygons))
            .with_property("class_id", class_id)
            .with_property("cells", cells as u64),
    );
    layer
}

fn trace(
    lattice: &Lattice<'_>,
    visited: &mut [bool],
    start_dir: usize,
    sx: i64,
    sy: i64,
    label: u32,
) -> Vec<[i64; 2]> {
    let mut ring = vec![[sx, sy]];
    let (mut dir, mut x, mut y) = (start_dir, sx, sy);
    loop {
        visited[lattice.edge_id(dir, x, y)] = true;
        x += DX[dir];
        y += DY[dir];
        // prefer left, then straight, then right
        let next = [(dir + 1) % 4, dir, (dir + 3) % 4]
            .into_iter()
            .find(|&d| lattice.is_edge(d, x, y, label))
            .expect("boundary edges always continue");
        if next != dir {
            ring.push([x, y]);
        }
        if (x, y) == (sx, sy) && next == start_dir {
            break;
        }
        dir = next;
    }
    // the start vertex is a corner unless the ring entered it going straight
    if ring.len() > 1 && ring.last() == ring.first() {
        // closed already
    } else {
        ring.push([sx, sy]);
    }
    simplify_start(&mut ring);
    ring
}

/// Drop the start vertex if it is collinear with its neighbours, keeping the ring closed.
fn simplify_start(ring: &mut Vec<[i64; 2]>) {
    if ring.len() < 5 {
        return;
    }
    let n = ring.len();
    let prev = ring[n - 2];
    let cur = ring[0];
    let next = ring[1];
    let cross = (cur[0] - prev[0]) * (next[1] - cur[1]) - (cur[1] - prev[1]) * (next[0] - cur[0]);
    if cross == 0 {
        ring.remove(0);
        let first = ring[0];
        *ring.last_mut().expect("non-empty") = first;
    }
}

fn lattice_area2(ring: &[[i64; 2]]) -> i64 {
    ring.windows(2)
        .map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{ring_signed_area, GridHeader, Legend, Rgba};

    fn grid(rows: &[&str], cell: f64) -> ClassGrid {
        let ncols = rows[0].len();
        let h = GridHeader::new(ncols, rows.len(), cell, 0.0, 0.0, "t", 255.0).unwrap();
        let cells = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| if c == '#' { 1 } else { 0 }))
            .collect();
        let legend = Legend::new()
            .with(0, "dry", Rgba([0, 0, 0, 0]))
            .with(1, "wet", Rgba([0, 0, 255, 255]));
        ClassGrid::new(h, cells, legend).unwrap()
    }

    fn polys(layer: &VectorLayer) -> &[Polygon] {
        layer.features[0].geometry.polygons()
    }

    #[test]
    fn single_cell_is_unit_square() {
        let l = polygonize(&grid(&["#"], 1.0), 1);
        let p = polys(&l);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].exterior.len(), 5);
        assert_eq!(p[0].area(), 1.0);
    }

    #[test]
    fn block_merges_into_one_square() {
        let l = polygonize(&grid(&["....", ".##.", ".##.", "...."], 1.0), 1);
        let p = polys(&l);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].exterior.len(), 5, "{:?}", p[0].exterior);
        assert_eq!(p[0].area(), 4.0);
        assert!(p[0].holes.is_empty());
    }

    #[test]
    fn ring_has_one_hole() {
        let l = polygonize(&grid(&["###", "#.#", "###"], 2.0), 1);
        let p = polys(&l);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].holes.len(), 1);
        assert!(ring_signed_area(&p[0].exterior) > 0.0);
        assert!(ring_signed_area(&p[0].holes[0]) < 0.0);
        assert_eq!(p[0].area(), 8.0 * 4.0);
    }

    #[test]
    fn diagonal_cells_are_separate_polygons() {
        let l = polygonize(&grid(&["#.", ".#"], 1.0), 1);
        assert_eq!(polys(&l).len(), 2);
        assert_eq!(l.area(), 2.0);
    }

    #[test]
    fn hole_with_diagonal_pinch() {
        // background cells inside touch diagonally; the hole is traced as one ring
        let l = polygonize(
            &grid(&["#####", "#.###", "##.##", "#####"], 1.0),
            1,
        );
        assert_eq!(l.area(), 18.0);
    }

    #[test]
    fn absent_class_gives_empty_layer() {
        let l = polygonize(&grid(&["..", ".."], 1.0), 1);
        assert!(l.features.is_empty());
    }

    #[test]
    fn starts_mid_edge_are_simplified() {
        // an L shape: first edge found is the bottom of row 0's cell, mid-way along the top edge
        let l = polygonize(&grid(&["##", "#."], 1.0), 1);
        let p = polys(&l);
        assert_eq!(p[0].exterior.len(), 7, "{:?}", p[0].exterior);
        assert_eq!(p[0].area(), 3.0);
    }
}
