//! Train a forest-to-urban transition network on a synthetic town that grows
//! along its road, then project ten years ahead with Markov quotas and hard
//! allocation.

use std::collections::BTreeMap;

use coastal_slr::drivers::{build_driver_stack, DriverInputs, FeatureSource};
use coastal_slr::landchange::{
    allocate, build_training_set, change_analysis, class_counts, filter_transitions, markov_from_table,
    project_markov, train_mlp, transition_potential, MlpParams,
};
use coastal_slr::raster::{ClassGrid, FloatGrid, GridHeader, Legend};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FOREST: u8 = 1;
const URBAN: u8 = 2;

fn main() -> coastal_slr::Result<()> {
    let n = 120;
    let header = GridHeader::new(n, n, 30.0, 0.0, 0.0, "EPSG:26918", -9999.0)?;
    let legend = || Legend::generic([FOREST, URBAN]);
    let grid = |cells: Vec<u8>| ClassGrid::new(header.with_nodata(255.0), cells, legend());
    let road = |r: usize| r.abs_diff(60) as f64;
    let centre = |r: usize, c: usize| ((r as f64 - 60.0).powi(2) + (c as f64 - 20.0).powi(2)).sqrt();

    // Urban grows outwards, fastest close to the road.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let reach = |r: usize, c: usize, t: f64| centre(r, c) < t * (1.0 + 2.0 / (1.0 + road(r) / 4.0));
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    for i in 0..n * n {
        let (r, c) = (i / n, i % n);
        let a = if reach(r, c, 12.0) { URBAN } else { FOREST };
        let b = if a == URBAN || (reach(r, c, 22.0) && rng.random_bool(0.9)) { URBAN } else { FOREST };
        t1.push(a);
        t2.push(b);
    }
    let (t1, t2) = (grid(t1)?, grid(t2)?);

    let dem = FloatGrid::from_fn(header.clone(), |r, c| 5.0 + 0.02 * c as f64 + 0.01 * r as f64)?;
    let line = |hit: &dyn Fn(usize, usize) -> bool| {
        let cells = (0..n * n).map(|i| u8::from(hit(i / n, i % n))).collect();
        ClassGrid::new(header.with_nodata(255.0), cells, Legend::generic([0, 1])).map(FeatureSource::Grid)
    };
    let inputs = DriverInputs {
        rivers: Some(line(&|_, c| c == 100)?),
        disturbance: Some(line(&|r, c| r < 4 && c > 110)?),
        roads: Some(line(&|r, _| r == 60)?),
        urban: Some(line(&|r, c| t1.get(r, c) == Some(URBAN))?),
    };
    let drivers = build_driver_stack(&dem, &inputs)?;

    let change = change_analysis(&t1, &t2)?;
    let specs = filter_transitions(&change.transitions, 100);
    println!("transitions modelled: {}", specs.len());
    let params = MlpParams { samples_per_class: 600, max_iter: 400, ..MlpParams::default() };
    let mut potentials = Vec::new();
    for spec in &specs {
        let set = build_training_set(&t1, &t2, &drivers, spec, params.samples_per_class, 11)?;
        let model = train_mlp(&set, &params)?;
        println!(
            "{} -> {}: accuracy {:.2}%, skill {:.4}, {} epochs",
            spec.from_class,
            spec.to_class,
            100.0 * model.performance.accuracy,
            model.performance.skill,
            model.epochs()
        );
        potentials.push((spec.clone(), transition_potential(&model, &t2, &drivers)?));
    }

    let markov = markov_from_table(&change.table, 10.0);
    let counts: BTreeMap<u8, u64> = class_counts(&t2);
    let projection = project_markov(&markov, &counts, 2020.0, 2030.0)?;
    let allocation = allocate(&t2, &potentials, &projection)?;
    let projected = class_counts(&allocation.grid);
    for id in [FOREST, URBAN] {
        println!("class {id}: {} cells now, {} projected", counts[&id], projected[&id]);
    }
    Ok(())
}
