//! Training-loop invariants on the synthetic dataset.

use vsensor_core::{mre, train_with_history, Generator, Mode, PerturbationSpec, TrainConfig};

fn cfg(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        epochs: 40,
        batch_size: 128,
        lr_peak_epoch: 10,
        eps_ramp_epochs: 10,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn final_epoch_loss_below_first() {
    let data = Generator::default().generate(2000, 11).unwrap();
    let spec = PerturbationSpec::default();
    for mode in Mode::ALL {
        let (_, history) = train_with_history(&data, &cfg(mode), &spec).unwrap();
        assert_eq!(history.len(), 40);
        let (first, last) = (history[0], *history.last().unwrap());
        assert!(last < first, "{mode:?}: {first} -> {last}");
    }
}

#[test]
fn standard_model_is_accurate() {
    let data = Generator::default().generate(2000, 12).unwrap();
    let test = Generator::default().generate(300, 13).unwrap();
    let net = vsensor_core::train(&data, &cfg(Mode::Standard), &PerturbationSpec::default()).unwrap();
    let err = mre(&net, test.examples()).unwrap();
    assert!(err < 0.10, "mre {err}");
}
