use lockwalk_core::heavy_tail::{LevelLaw, LevelSampler};
use lockwalk_core::sampler::{sample_trajectory, sample_y, Color, StepTable, TrajectorySeed};
use lockwalk_core::tail::stabilization_index;
use lockwalk_core::{build_levels, GroupSpec, GrowthSchedule, Limits};

#[test]
fn first_level_frequency() {
    let law = LevelLaw::new();
    let mut s = LevelSampler::new();
    let mut rng = TrajectorySeed { master: 4, index: 0 }.rng();
    let n = 1_000_000;
    let hits = (0..n).filter(|_| s.sample(&mut rng) == 1).count() as f64;
    let p = law.pmf(1);
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((hits / n as f64 - p).abs() < 4.0 * se);
}

#[test]
fn deep_level_is_almost_never_red() {
    let mut rng = TrajectorySeed { master: 4, index: 1 }.rng();
    let reds = (0..1_000_000).filter(|_| sample_y(&mut rng, 30) == Color::Red).count();
    // expected 9.3e-4 reds; more than two would be a 1e-9 event
    assert!(reds <= 2, "{reds} reds at k = 30");
}

#[test]
fn stabilization_frequency_grows_with_length() {
    let cons = build_levels(&GroupSpec::lamplighter(), &GrowthSchedule::desk(), 2, Limits::default()).unwrap();
    let table = StepTable::new(&cons);
    let mut sampler = LevelSampler::new();
    let trajectories = 400;
    let freq: Vec<f64> = [100usize, 1000, 10_000]
        .iter()
        .map(|&n| {
            let ok = (0..trajectories)
                .filter(|&index| {
                    let t = sample_trajectory(TrajectorySeed { master: n as u64, index }, n, &table, &mut sampler);
                    stabilization_index(&t.steps).is_some_and(|i0| i0 <= n / 2)
                })
                .count();
            ok as f64 / trajectories as f64
        })
        .collect();
    eprintln!("stabilization frequencies {freq:?}");
    assert!(freq.windows(2).all(|w| w[1] >= w[0]), "{freq:?}");
}
