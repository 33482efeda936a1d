use super::{ClassGrid, FloatGrid, GridHeader, Polygon, VectorLayer};
use crate::error::{Error, Result};

/// Grids whose cells can be blanked to nodata.
pub trait Masked: Sized {
    fn header(&self) -> &GridHeader;
    /// Copy with every cell where `keep[i]` is false set to nodata.
    fn keep_only(&self, keep: &[bool]) -> Self;
}

impl Masked for FloatGrid {
    fn header(&self) -> &GridHeader {
        FloatGrid::header(self)
    }

    fn keep_only(&self, keep: &[bool]) -> Self {
        let nd = self.header().nodata_value;
        let cells = self
            .cells()
            .iter()
            .zip(keep)
            .map(|(&v, &k)| if k { v } else { nd })
            .collect();
        FloatGrid::new(self.header().clone(), cells).expect("same shape")
    }
}

impl Masked for ClassGrid {
    fn header(&self) -> &GridHeader {
        ClassGrid::header(self)
    }

    fn keep_only(&self, keep: &[bool]) -> Self {
        let nd = self.nodata();
        let cells = self
            .cells()
            .iter()
            .zip(keep)
            .map(|(&v, &k)| if k { v } else { nd })
            .collect();
        self.with_cells(cells).expect("same shape")
    }
}

/// Cells whose centers fall outside every polygon of `mask` become nodata.
pub fn clip_by_polygon<G: Masked>(grid: &G, mask: &VectorLayer) -> Result<G> {
    let header = grid.header();
    if header.crs_tag != mask.crs_tag {
        return Err(Error::CrsMismatch {
            left: header.crs_tag.clone(),
            right: mask.crs_tag.clone(),
        });
    }
    let inside = rasterize_polygons(mask.polygons(), header);
    Ok(grid.keep_only(&inside))
}

/// Cell-center rasterization. Polygons mark cells whose center lies inside;
/// points mark the cell that contains them.
pub fn rasterize_layer(layer: &VectorLayer, header: &GridHeader) -> Result<Vec<bool>> {
    if header.crs_tag != layer.crs_tag {
        return Err(Error::CrsMismatch {
            left: header.crs_tag.clone(),
            right: layer.crs_tag.clone(),
        });
    }
    let mut cells = rasterize_polygons(layer.polygons(), header);
    for [x, y] in layer.points() {
        if let Some((r, c)) = header.cell_at(x, y) {
            cells[header.index(r, c)] = true;
        }
    }
    Ok(cells)
}

/// Scanline fill at cell-center rows, using the same crossing arithmetic as
/// [`super::point_in_polygon`] so both agree on every center.
fn rasterize_polygons<'a>(
    polygons: impl Iterator<Item = &'a Polygon>,
    header: &GridHeader,
) -> Vec<bool> {
    let mut inside = vec![false; header.len()];
    let mut crossings = Vec::new();
    for polygon in polygons {
        for row in 0..header.nrows {
            let (_, y) = header.cell_center(row, 0);
            crossings.clear();
            for ring in polygon.rings() {
                for w in ring.windows(2) {
                    let ([xi, yi], [xj, yj]) = (w[0], w[1]);
                    if (yi > y) != (yj > y) {
                        crossings.push((xj - xi) * (y - yi) / (yj - yi) + xi);
                    }
                }
            }
            crossings.sort_by(f64::total_cmp);
            // a center x is inside iff an odd number of crossings lie strictly
            // to its right, i.e. c[2k] <= x < c[2k+1]
            for pair in crossings.chunks_exact(2) {
                let (lo, hi) = (pair[0], pair[1]);
                let Some(first) = first_col_at_or_after(header, lo) else {
                    continue;
                };
                let mut col = first;
                while col < header.ncols && header.cell_center(row, col).0 < hi {
                    inside[header.index(row, col)] = true;
                    col += 1;
                }
            }
        }
    }
    inside
}

fn first_col_at_or_after(header: &GridHeader, x: f64) -> Option<usize> {
    let guess = ((x - header.origin_x) / header.cell_size - 0.5).ceil();
    let mut col = if guess <= 0.0 {
        0
    } else if guess >= header.ncols as f64 {
        header.ncols
    } else {
        guess as usize
    };
    while col > 0 && header.cell_center(0, col - 1).0 >= x {
        col -= 1;
    }
    while col < header.ncols && header.cell_center(0, col).0 < x {
        col += 1;
    }
    (col < header.ncols).then_some(col)
}

/// Joint counts of two aligned categorical grids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossTab {
    /// Sorted union of both legends' class ids.
    pub classes: Vec<u8>,
    /// Row-major `classes.len()²` counts: rows are `a`, columns `b`.
    pub counts: Vec<u64>,
}

impl CrossTab {
    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn position(&self, class_id: u8) -> Option<usize> {
        self.classes.binary_search(&class_id).ok()
    }

    pub fn count(&self, from: u8, to: u8) -> u64 {
        match (self.position(from), self.position(to)) {
            (Some(i), Some(j)) => self.counts[i * self.k() + j],
            _ => 0,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.k() + j]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        let k = self.k();
        (0..k).map(|i| self.counts[i * k..(i + 1) * k].iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let k = self.k();
        (0..k).map(|j| (0..k).map(|i| self.counts[i * k + j]).sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn cross_tab(a: &ClassGrid, b: &ClassGrid) -> Result<CrossTab> {
    a.header().ensure_aligned(b.header())?;
    let mut classes: Vec<u8> = a.legend().ids().chain(b.legend().ids()).collect();
    classes.sort_unstable();
    classes.dedup();
    let k = classes.len();
    let mut pos = [usize::MAX; 256];
    for (i, &c) in classes.iter().enumerate() {
        pos[c as usize] = i;
    }
    let mut counts = vec![0u64; k * k];
    let (nda, ndb) = (a.nodata(), b.nodata());
    for (&x, &y) in a.cells().iter().zip(b.cells()) {
        if x == nda || y == ndb {
            continue;
        }
        counts[pos[x as usize] * k + pos[y as usize]] += 1;
    }
    Ok(CrossTab { classes, counts })
}

/// Nearest-neighbour resampling of a categorical grid onto `target`.
/// Target cells whose center falls outside the source become nodata.
pub fn resample_nearest(grid: &ClassGrid, target: &GridHeader) -> Result<ClassGrid> {
    let src = grid.header();
    if src.crs_tag != target.crs_tag {
        return Err(Error::CrsMismatch {
            left: src.crs_tag.clone(),
            right: target.crs_tag.clone(),
        });
    }
    if !src.extent().overlaps(&target.extent()) {
        return Err(Error::Extent);
    }
    let header = target.with_nodata(src.nodata_value);
    if src.is_aligned(target) {
        return ClassGrid::new(header, grid.cells().to_vec(), grid.legend().clone());
    }
    let nd = grid.nodata();
    let mut cells = Vec::with_capacity(header.len());
    for row in 0..header.nrows {
        for col in 0..header.ncols {
            let (x, y) = header.cell_center(row, col);
            cells.push(match src.cell_at(x, y) {
                Some((r, c)) => grid.cells()[src.index(r, c)],
                None => nd,
            });
        }
    }
    ClassGrid::new(header, cells, grid.legend().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{point_in_polygon, Feature, Geometry, Legend, Rgba};

    fn header(n: usize) -> GridHeader {
        GridHeader::new(n, n, 1.0, 0.0, 0.0, "t", -9999.0).unwrap()
    }

    fn layer(polys: Vec<Polygon>) -> VectorLayer {
        let mut l = VectorLayer::new("t");
        for p in polys {
            l.features.push(Feature::new(Geometry::Polygon(p)));
        }
        l
    }

    #[test]
    fn clip_full_mask_is_identity() {
        let g = FloatGrid::from_fn(header(4), |r, c| (r * 4 + c) as f64).unwrap();
        let out = clip_by_polygon(&g, &layer(vec![Polygon::rect(-1.0, -1.0, 5.0, 5.0)])).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn clip_empty_mask_blanks_everything() {
        let g = FloatGrid::filled(header(4), 1.0);
        let out = clip_by_polygon(&g, &VectorLayer::new("t")).unwrap();
        assert_eq!(out.nodata_count(), 16);
    }

    #[test]
    fn clip_left_half_keeps_32_cells() {
        let g = FloatGrid::filled(header(8), 1.0);
        let mask = layer(vec![Polygon::rect(0.0, 0.0, 4.0, 8.0)]);
        // brute-force point-in-polygon over all 64 centers
        let poly = &mask.features[0].geometry.polygons()[0];
        let expected = (0..8)
            .flat_map(|r| (0..8).map(move |c| (r, c)))
            .filter(|&(r, c)| {
                let (x, y) = g.header().cell_center(r, c);
                point_in_polygon(poly, x, y)
            })
            .count();
        assert_eq!(expected, 32);
        let out = clip_by_polygon(&g, &mask).unwrap();
        assert_eq!(out.data_count(), expected);
    }

    #[test]
    fn clip_crs_mismatch() {
        let g = FloatGrid::filled(header(2), 1.0);
        let mask = VectorLayer::new("other");
        assert!(matches!(clip_by_polygon(&g, &mask), Err(Error::CrsMismatch { .. })));
    }

    #[test]
    fn rasterize_matches_point_in_polygon_on_triangle_with_hole() {
        let h = GridHeader::new(23, 17, 0.7, 3.0, -2.0, "t", -1.0).unwrap();
        let poly = Polygon::new(
            vec![[3.1, -1.9], [19.0, 0.3], [8.3, 9.6]],
            vec![vec![[8.0, 2.0], [10.0, 2.0], [9.0, 4.0]]],
        );
        let l = layer(vec![poly.clone()]);
        let cells = rasterize_layer(&l, &h).unwrap();
        for r in 0..h.nrows {
            for c in 0..h.ncols {
                let (x, y) = h.cell_center(r, c);
                assert_eq!(cells[h.index(r, c)], point_in_polygon(&poly, x, y), "cell {r},{c}");
            }
        }
    }

    fn legend() -> Legend {
        Legend::new()
            .with(1, "one", Rgba([0, 0, 0, 255]))
            .with(2, "two", Rgba([9, 9, 9, 255]))
    }

    #[test]
    fn cross_tab_identity_is_diagonal() {
        let h = header(4).with_nodata(255.0);
        let cells: Vec<u8> = (0..16).map(|i| 1 + (i % 2) as u8).collect();
        let a = ClassGrid::new(h, cells, legend()).unwrap();
        let t = cross_tab(&a, &a).unwrap();
        assert_eq!(t.count(1, 1), 8);
        assert_eq!(t.count(2, 2), 8);
        assert_eq!(t.count(1, 2) + t.count(2, 1), 0);
    }

    #[test]
    fn cross_tab_checkerboard_vs_uniform() {
        let h = header(4).with_nodata(255.0);
        let checker: Vec<u8> = (0..16).map(|i| 1 + (((i / 4) + (i % 4)) % 2) as u8).collect();
        let a = ClassGrid::new(h.clone(), checker, legend()).unwrap();
        let b = ClassGrid::filled(h, 1, legend()).unwrap();
        let t = cross_tab(&a, &b).unwrap();
        assert_eq!(t.count(1, 1), 8);
        assert_eq!(t.count(2, 1), 8);
        assert_eq!(t.total(), 16);
    }

    #[test]
    fn cross_tab_requires_alignment() {
        let a = ClassGrid::filled(header(4).with_nodata(255.0), 1, legend()).unwrap();
        let b = ClassGrid::filled(header(3).with_nodata(255.0), 1, legend()).unwrap();
        assert!(matches!(cross_tab(&a, &b), Err(Error::Alignment(_))));
    }

    #[test]
    fn resample_coarse_to_fine() {
        let coarse_h = GridHeader::new(2, 2, 30.0, 0.0, 0.0, "t", 255.0).unwrap();
        let coarse = ClassGrid::new(coarse_h, vec![1, 2, 2, 1], legend()).unwrap();
        let fine_h = GridHeader::new(60, 60, 1.0, 0.0, 0.0, "t", 255.0).unwrap();
        let fine = resample_nearest(&coarse, &fine_h).unwrap();
        assert_eq!(fine.count_of(1), 2 * 900);
        assert_eq!(fine.count_of(2), 2 * 900);
        assert_eq!(fine.get(0, 0), Some(1));
        assert_eq!(fine.get(0, 30), Some(2));
        let far = GridHeader::new(2, 2, 1.0, 1000.0, 0.0, "t", 255.0).unwrap();
        assert!(matches!(resample_nearest(&coarse, &far), Err(Error::Extent)));
    }
}
