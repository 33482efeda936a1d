mod common;

use coastal_slr::inundation::{
    build_scenarios, hydro_connect, mask_diff, mask_legend, scenario_stats, stats_from_counts,
    threshold_dem, ScenarioOptions, SeedSource, DRY, WET,
};
use coastal_slr::raster::{
    ClassGrid, Connectivity, Feature, FloatGrid, Geometry, GridHeader, Polygon, VectorLayer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn header(n: usize) -> GridHeader {
    GridHeader::new(n, n, 1.0, 0.0, 0.0, "t", -9999.0).unwrap()
}

fn random_mask(rng: &mut ChaCha8Rng, n: usize, p: f64) -> ClassGrid {
    let cells = (0..n * n).map(|_| u8::from(rng.random_bool(p))).collect();
    ClassGrid::new(header(n).with_nodata(255.0), cells, mask_legend()).unwrap()
}

#[test]
fn hydro_connect_matches_bfs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let p = rng.random_range(0.35..0.7);
        let mask = random_mask(&mut rng, 64, p);
        let seeds: Vec<bool> = (0..64 * 64).map(|_| rng.random_bool(0.002)).collect();
        if !seeds.iter().any(|&s| s) {
            continue;
        }
        let wet: Vec<bool> = mask.cells().iter().map(|&c| c == WET).collect();
        for conn in [Connectivity::Four, Connectivity::Eight] {
            let out = hydro_connect(&mask, &SeedSource::Cells(seeds.clone()), conn).unwrap();
            let oracle = common::bfs_connect(&wet, &seeds, 64, 64, conn == Connectivity::Eight);
            let got: Vec<bool> = out.cells().iter().map(|&c| c == WET).collect();
            assert_eq!(got, oracle, "case {case} {conn:?}");
        }
    }
}

#[test]
fn hydro_connect_is_idempotent_contraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let mask = random_mask(&mut rng, 40, 0.6);
        let seeds = SeedSource::Cells((0..1600).map(|i| i % 40 == 0).collect());
        let once = hydro_connect(&mask, &seeds, Connectivity::Four).unwrap();
        let twice = hydro_connect(&once, &seeds, Connectivity::Four).unwrap();
        assert_eq!(once, twice);
        for (a, b) in once.cells().iter().zip(mask.cells()) {
            assert!(*a != WET || *b == WET);
        }
    }
}

fn west_ocean_coastline(n: usize) -> VectorLayer {
    VectorLayer::new("t").with_feature(Feature::new(Geometry::Polygon(Polygon::rect(
        2.0,
        -1.0,
        n as f64 + 1.0,
        n as f64 + 1.0,
    ))))
}

#[test]
fn scenarios_nest_on_random_dems() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let dem = FloatGrid::from_fn(header(48), |_, c| {
            c as f64 * 0.12 + rng.random_range(-1.5..1.5)
        })
        .unwrap();
        let s = build_scenarios(
            &dem,
            &west_ocean_coastline(48),
            &[1.0, 2.0, 3.0, 4.0],
            &ScenarioOptions::default(),
        )
        .unwrap();
        for w in s.windows(2) {
            for (a, b) in w[0].mask.cells().iter().zip(w[1].mask.cells()) {
                assert!(*a != WET || *b == WET);
            }
        }
        // every inundated cell is at or below the level
        for sc in &s {
            for (i, &c) in sc.mask.cells().iter().enumerate() {
                if c == WET {
                    assert!(dem.cells()[i] <= sc.height_m);
                }
            }
        }
    }
}

#[test]
fn threshold_count_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dem = FloatGrid::from_fn(header(100), |_, _| rng.random_range(-3.0..12.0)).unwrap();
    for h in [1.0, 2.0, 3.0, 4.0] {
        let m = threshold_dem(&dem, h).unwrap();
        let mut expected = 0;
        for &v in dem.cells() {
            if v <= h {
                expected += 1;
            }
        }
        assert_eq!(m.count_of(WET), expected);
    }
}

#[test]
fn explicit_seed_layer_overrides_shoreline() {
    // flat low land, seeded only in the north-east corner; a dry wall at col 5 blocks the west
    let dem = FloatGrid::from_fn(header(10), |_, c| if c == 5 { 9.0 } else { 0.5 }).unwrap();
    let seeds = VectorLayer::new("t").with_feature(Feature::new(Geometry::Point([9.5, 9.5])));
    let opts = ScenarioOptions {
        connectivity: Connectivity::Four,
        seeds: Some(seeds),
    };
    let s = build_scenarios(&dem, &west_ocean_coastline(10), &[1.0], &opts).unwrap();
    // columns 6..9 connected to the seed point
    assert_eq!(s[0].inundated_cells(), 40);
}

#[test]
fn table_one_arithmetic() {
    let s = stats_from_counts(1.0, 780_000, 1.0, 150_060_000).unwrap();
    assert_eq!(s.area_km2, 0.78);
    assert_eq!(s.study_area_km2, 150.06);
    let expected_pct = 100.0 * 0.78 / 150.06;
    assert!(((s.pct_of_study_area - expected_pct) / expected_pct).abs() < 1e-12);
    assert_eq!((s.pct_of_study_area * 100.0).round() / 100.0, 0.52);
}

#[test]
fn stats_from_scenario_match_hand_multiplication() {
    let h = GridHeader::new(10, 10, 2.5, 0.0, 0.0, "t", 255.0).unwrap();
    let cells = (0..100).map(|i| u8::from(i < 37)).collect();
    let mask = ClassGrid::new(h, cells, mask_legend()).unwrap();
    let sc = coastal_slr::inundation::SlrScenario {
        height_m: 2.0,
        mask,
        connectivity: Connectivity::Four,
        seed_source: String::new(),
    };
    let s = scenario_stats(&sc, 100).unwrap();
    assert_eq!(s.area_km2, 37.0 * 6.25 / 1e6);
    assert!((s.pct_of_study_area - 37.0).abs() < 1e-12);
}

#[test]
fn dilated_mask_diff_counts_ring() {
    let n = 20;
    let mut ours = vec![DRY; n * n];
    for r in 6..12 {
        for c in 5..13 {
            ours[r * n + c] = WET;
        }
    }
    // morphological 4-neighbour dilation, computed directly
    let mut theirs = ours.clone();
    let mut ring = 0;
    for r in 0..n {
        for c in 0..n {
            if ours[r * n + c] == WET {
                continue;
            }
            let touches = [(0isize, 1isize), (0, -1), (1, 0), (-1, 0)].iter().any(|&(dr, dc)| {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                nr >= 0 && nc >= 0 && (nr as usize) < n && (nc as usize) < n
                    && ours[nr as usize * n + nc as usize] == WET
            });
            if touches {
                theirs[r * n + c] = WET;
                ring += 1;
            }
        }
    }
    let h = header(n).with_nodata(255.0);
    let ours = ClassGrid::new(h.clone(), ours, mask_legend()).unwrap();
    let theirs = ClassGrid::new(h, theirs, mask_legend()).unwrap();
    let d = mask_diff(&ours, &theirs).unwrap();
    assert_eq!(ring, 2 * (6 + 8));
    assert_eq!(d.only_theirs, ring);
    assert_eq!(d.only_ours, 0);
    assert_eq!(d.both, 48);
    assert_eq!(d.total(), (n * n) as u64);
}
