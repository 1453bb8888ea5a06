use pmcts::cli::gradcheck_batch;
use pmcts::policy::{
    load_model_for, save_model, train_epochs, AdamState, ConvPolicy, ConvPolicyConfig, PolicyModel, TrainOptions,
};
use pmcts::samegame::{encode_board, generate_board, BoardSeed};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn outputs_are_a_distribution(seed in any::<u64>(), net_seed in any::<u64>()) {
        let net = ConvPolicy::new(ConvPolicyConfig::desk(6, 6, 4, net_seed)).unwrap();
        let b = generate_board(&BoardSeed::new(seed, 6, 6, 4)).unwrap();
        let p = net.evaluate(&encode_board(&b)).unwrap();
        prop_assert_eq!(p.len(), 36);
        prop_assert!(p.iter().all(|&x| x > 0.0 && x.is_finite()));
        prop_assert!((p.iter().map(|&x| x as f64).sum::<f64>() - 1.0).abs() < 1e-5);
    }
}

#[test]
fn identical_seeds_train_identically() {
    let batch = gradcheck_batch(5, 5, 3, 16, 1).unwrap();
    let run = || {
        let mut net = ConvPolicy::new(ConvPolicyConfig::desk(5, 5, 3, 9)).unwrap();
        let mut adam = AdamState::new(net.num_params(), 5e-4);
        for _ in 0..20 {
            let (_, g) = net.loss_and_gradients(&batch).unwrap();
            adam.apply(net.params_mut(), &g);
        }
        net.params().to_vec()
    };
    let (a, b) = (run(), run());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn zero_gradient_step_changes_nothing() {
    let mut net = ConvPolicy::new(ConvPolicyConfig::tiny(5, 5, 3, 2)).unwrap();
    let before = net.params().to_vec();
    let mut adam = AdamState::new(net.num_params(), 5e-4);
    adam.apply(net.params_mut(), &vec![0.0; before.len()]);
    assert_eq!(net.params(), before.as_slice());
}

#[test]
fn epochs_reduce_loss_on_learnable_data() {
    // the target is always the bottom-left cell, which every board can name
    let samples: Vec<_> = gradcheck_batch(5, 5, 3, 96, 4)
        .unwrap()
        .into_iter()
        .map(|mut s| {
            s.target = 20;
            s
        })
        .collect();
    let (train, valid) = samples.split_at(80);
    let mut net = ConvPolicy::new(ConvPolicyConfig::desk(5, 5, 3, 4)).unwrap();
    let opts = TrainOptions {
        batch_size: 16,
        learning_rate: 1e-3,
        max_epochs: 5,
        ..TrainOptions::default()
    };
    let h = train_epochs(&mut net, train, valid, &opts).unwrap();
    assert!(h.train_losses.windows(2).all(|w| w[1] < w[0]), "{:?}", h.train_losses);
    assert!(h.best_valid_loss() < 0.5, "{:?}", h.valid_losses);
}

#[test]
fn saved_model_loads_for_its_board_size_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    let net = ConvPolicy::new(ConvPolicyConfig::desk(7, 7, 5, 3)).unwrap();
    save_model(&net, &path).unwrap();
    let back = load_model_for(&path, 7, 7, 5).unwrap();
    assert_eq!(back.params(), net.params());
    let err = load_model_for(&path, 10, 10, 5).unwrap_err().to_string();
    assert!(err.contains("7x7"), "{err}");
}
