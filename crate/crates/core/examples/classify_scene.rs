//! Maximum-likelihood classification of a noisy three-band scene with water,
//! marsh, forest and built-up patches, assessed against a stratified sample.

use coastal_slr::classify::{assess, fit_signatures, maxlike_classify, stratified_sample, BandStack};
use coastal_slr::raster::{ClassGrid, FloatGrid, GridHeader, Legend, Rgba};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> coastal_slr::Result<()> {
    let n = 100;
    let header = GridHeader::new(n, n, 30.0, 0.0, 0.0, "EPSG:26918", -9999.0)?;
    let mut legend = Legend::new();
    legend.insert(1, "Water", Rgba([0x2b, 0x6c, 0xb0, 0xff]));
    legend.insert(2, "Marsh", Rgba([0x8c, 0xb3, 0x6e, 0xff]));
    legend.insert(3, "Forest", Rgba([0x1e, 0x5a, 0x2a, 0xff]));
    legend.insert(4, "Built", Rgba([0xc8, 0x3c, 0x3c, 0xff]));
    let truth: Vec<u8> = (0..n * n)
        .map(|i| {
            let (r, c) = (i / n, i % n);
            match c {
                0..25 => 1,
                25..45 => 2,
                _ if (40..60).contains(&r) && c > 70 => 4,
                _ => 3,
            }
        })
        .collect();
    let reference = ClassGrid::new(header.with_nodata(255.0), truth.clone(), legend.clone())?;

    // green, red, near infrared
    let means = [[30.0, 20.0, 8.0], [45.0, 38.0, 60.0], [35.0, 25.0, 90.0], [70.0, 75.0, 55.0]];
    let noise = Normal::new(0.0, 14.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bands = (0..3)
        .map(|b| {
            let cells = truth.iter().map(|&t| means[t as usize - 1][b] + noise.sample(&mut rng)).collect();
            FloatGrid::new(header.clone(), cells)
        })
        .collect::<coastal_slr::Result<Vec<_>>>()?;
    let stack = BandStack::new(vec!["green".into(), "red".into(), "nir".into()], bands)?;

    // Train on every 7th cell of the reference.
    let training = reference.with_cells(truth.iter().enumerate().map(|(i, &t)| if i % 7 == 0 { t } else { 255 }).collect())?;
    let signatures = fit_signatures(&stack, &training)?;
    let classified = maxlike_classify(&stack, &signatures, None, &legend)?;

    let points = stratified_sample(&reference, 100, 42)?;
    let assessment = assess(&classified, &points)?;
    print!("{}", assessment.report_text(&legend));
    Ok(())
}
