use mcmi_core::metrics::pixel_mse;
use mcmi_core::synth::{generate_dataset, ShapePairSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn outline_matches_its_own_fill_best() {
    let spec = ShapePairSpec {
        seed: 21,
        ..ShapePairSpec::default()
    };
    let data = generate_dataset(&spec, 200).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 500;
    let mut wins = 0;
    for _ in 0..trials {
        let i = rng.gen_range(0..data.len());
        let j = (i + rng.gen_range(1..data.len())) % data.len();
        let x = data.x_batch(&[i]).unwrap();
        let same = pixel_mse(&x, &data.y_batch(&[i]).unwrap()).unwrap();
        let other = pixel_mse(&x, &data.y_batch(&[j]).unwrap()).unwrap();
        wins += usize::from(same < other);
    }
    assert!(wins * 100 >= trials * 95, "{wins}/{trials}");
}
