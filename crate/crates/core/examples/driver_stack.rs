//! Derive the six land-change drivers over a synthetic valley: elevation,
//! distances to a river, a quarry, a road and a town, and slope.

use coastal_slr::drivers::{build_driver_stack, DriverInputs, FeatureSource};
use coastal_slr::raster::{ClassGrid, FloatGrid, GridHeader, Legend};

fn features(header: &GridHeader, hit: impl Fn(usize, usize) -> bool) -> FeatureSource {
    let cells = (0..header.len()).map(|i| u8::from(hit(i / header.ncols, i % header.ncols))).collect();
    FeatureSource::Grid(ClassGrid::new(header.with_nodata(255.0), cells, Legend::generic([0, 1])).unwrap())
}

fn main() -> coastal_slr::Result<()> {
    let header = GridHeader::new(60, 40, 25.0, 0.0, 0.0, "EPSG:26918", -9999.0)?;
    let dem = FloatGrid::from_fn(header.clone(), |r, c| 2.0 + 0.5 * (c as f64 - 30.0).abs() + 0.1 * r as f64)?;
    let inputs = DriverInputs {
        rivers: Some(features(&header, |_, c| c == 30)),
        disturbance: Some(features(&header, |r, c| (5..8).contains(&r) && (45..50).contains(&c))),
        roads: Some(features(&header, |r, _| r == 20)),
        urban: Some(features(&header, |r, c| (15..25).contains(&r) && (10..18).contains(&c))),
    };
    let stack = build_driver_stack(&dem, &inputs)?;
    println!("{:<18} {:>9} {:>9} {:>9}", "driver", "min", "mean", "max");
    for (name, grid) in stack.names().iter().zip(stack.grids()) {
        let v: Vec<f64> = (0..header.len()).filter_map(|i| grid.value(i)).collect();
        let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        println!("{name:<18} {lo:>9.2} {:>9.2} {hi:>9.2}", v.iter().sum::<f64>() / v.len() as f64);
    }
    Ok(())
}
