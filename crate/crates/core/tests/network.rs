use actens::gradcheck::check_network;
use actens::nn::{sgd_step, train, LayerSpec, Tensor};
use actens::{ActivationFamily, ActivationKind, Dataset, ModelId, Network, NetworkSpec, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn tiny_spec() -> NetworkSpec {
    NetworkSpec {
        input: [1, 6, 6],
        layers: vec![
            LayerSpec::Conv2d { out_channels: 2, kernel: 3, stride: 1 },
            LayerSpec::Activation,
            LayerSpec::MaxPool { kernel: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { out: 3 },
        ],
    }
}

fn learnable_families() -> Vec<ActivationFamily> {
    let mut v = Vec::new();
    for m in [1.0, 2.0, 255.0] {
        v.push(ActivationFamily::new(ActivationKind::Prelu, m));
        v.push(ActivationFamily::new(ActivationKind::Srelu, m));
        v.push(ActivationFamily::aplu(5, m));
        v.push(ActivationFamily::melu(4, m));
        v.push(ActivationFamily::melu(8, m));
    }
    v
}

/// Moves activation parameters off their initial values so every partial
/// is exercised.
fn randomize_activation(net: &mut Network, rng: &mut ChaCha8Rng) {
    let fam = net.family().clone();
    let m = fam.max_input;
    for g in net.param_groups_mut().iter_mut().filter(|g| g.name.starts_with("act")) {
        let len = g.values.len();
        for (i, v) in g.values.iter_mut().enumerate() {
            *v = match fam.kind {
                // per channel (t_l, a_l, t_r, a_r)
                ActivationKind::Srelu => match i % 4 {
                    0 => rng.random_range(-0.8..-0.2),
                    1 | 3 => rng.random_range(0.2..1.5),
                    _ => rng.random_range(0.3..0.9) * m.min(2.0),
                },
                ActivationKind::Aplu if g.name.ends_with(".b") => rng.random_range(-1.0..1.0),
                _ => rng.random_range(-0.8..0.8),
            };
        }
        assert_eq!(g.values.len(), len);
    }
}

fn tiny_batch(rng: &mut ChaCha8Rng) -> (Tensor, Vec<usize>) {
    let data: Vec<f64> = (0..4 * 36).map(|_| rng.random_range(-1.5..1.5)).collect();
    (Tensor::new(vec![4, 1, 6, 6], data).unwrap(), vec![0, 2, 1, 2])
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut families = learnable_families();
    for k in [ActivationKind::Relu, ActivationKind::LeakyRelu, ActivationKind::Elu, ActivationKind::Selu] {
        families.push(ActivationFamily::new(k, 1.0));
    }
    for fam in families {
        let mut net = Network::new(tiny_spec(), fam.clone(), 5).unwrap();
        assert!(net.param_count() <= 200, "{} params", net.param_count());
        randomize_activation(&mut net, &mut rng);
        let (batch, labels) = tiny_batch(&mut rng);
        for g in check_network(&net, &batch, &labels, 1e-5, 1e-4).unwrap() {
            assert!(
                g.max_rel_error <= 1e-5,
                "{} {}: rel err {} at {:?}",
                ModelId::new(fam.clone()),
                g.name,
                g.max_rel_error,
                g.worst
            );
        }
    }
}

#[test]
fn aplu_penalty_and_learning_rate_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let fam = ActivationFamily::aplu(5, 255.0);
    let mut net = Network::new(tiny_spec(), fam, 8).unwrap();
    randomize_activation(&mut net, &mut rng);
    let (batch, labels) = tiny_batch(&mut rng);

    let mut free = net.clone();
    for g in free.param_groups_mut() {
        g.l2_coeff = 0.0;
    }
    let loss = net.loss_and_backward(&batch, &labels).unwrap();
    let loss_free = free.loss_and_backward(&batch, &labels).unwrap();

    let a = net.param_groups().iter().position(|g| g.name == "act1.a").unwrap();
    let b = net.param_groups().iter().position(|g| g.name == "act1.b").unwrap();
    let ga = &net.param_groups()[a];
    let penalty: f64 = ga.values.iter().map(|v| 0.001 * v * v).sum();
    assert!((loss - loss_free - penalty).abs() < 1e-15);
    for ((v, g), g0) in ga.values.iter().zip(&ga.grads).zip(&free.param_groups()[a].grads) {
        assert!((g - g0 - 0.002 * v).abs() < 1e-15);
    }
    assert_eq!(net.param_groups()[b].l2_coeff, 0.0);

    for (i, g) in net.param_groups().iter().enumerate() {
        let expected = if i == a || i == b { 1.0 / 255.0 } else { 1.0 };
        assert_eq!(g.lr_scale, expected, "{}", g.name);
    }
    let before = net.clone();
    sgd_step(net.param_groups_mut(), 0.1);
    for (old, new) in before.param_groups().iter().zip(net.param_groups()) {
        for ((v0, gr), v1) in old.values.iter().zip(&old.grads).zip(&new.values) {
            assert_eq!(*v1, v0 - 0.1 * old.lr_scale * gr);
        }
    }
}

/// Two Gaussian blobs at (-2, -2) and (2, 2) with unit-half spread.
fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let centre = if c == 0 { -2.0 } else { 2.0 };
        features.push(centre + noise.sample(&mut rng));
        features.push(centre + noise.sample(&mut rng));
        labels.push(c);
    }
    Dataset::new([2, 1, 1], features, labels, 2).unwrap()
}

/// Classic perceptron; returns true once an epoch makes no mistakes.
fn perceptron_separates(d: &Dataset) -> bool {
    let mut w = [0.0f64; 3];
    for _ in 0..1000 {
        let mut mistakes = 0;
        for i in 0..d.len() {
            let x = d.sample(i);
            let y = if d.labels()[i] == 1 { 1.0 } else { -1.0 };
            if y * (w[0] * x[0] + w[1] * x[1] + w[2]) <= 0.0 {
                w[0] += y * x[0];
                w[1] += y * x[1];
                w[2] += y;
                mistakes += 1;
            }
        }
        if mistakes == 0 {
            return true;
        }
    }
    false
}

fn train_accuracy(net: &Network, d: &Dataset) -> f64 {
    let s = actens::nn::predict_scores(net, d, "m").unwrap();
    actens::ensemble::accuracy(&s, d.labels()).unwrap()
}

#[test]
fn linear_classifier_separates_blobs() {
    let d = blobs(200, 1);
    assert!(perceptron_separates(&d));
    let spec = NetworkSpec::mlp([2, 1, 1], &[], 2);
    let mut net = Network::new(spec, ActivationFamily::new(ActivationKind::Relu, 1.0), 2).unwrap();
    let cfg = TrainConfig { learning_rate: 0.05, ..Default::default() };
    train(&mut net, &d, &cfg).unwrap();
    assert!(train_accuracy(&net, &d) >= 99.0);
}

#[test]
fn loss_falls_for_every_family() {
    let d = blobs(120, 2);
    let mut families: Vec<ActivationFamily> =
        ActivationKind::ALL.iter().map(|&k| ActivationFamily::new(k, 1.0)).collect();
    families.push(ActivationFamily::melu(4, 1.0));
    for fam in families {
        let spec = NetworkSpec::mlp([2, 1, 1], &[8], 2);
        let mut net = Network::new(spec, fam.clone(), 3).unwrap();
        let cfg = TrainConfig { learning_rate: 0.01, epochs: 5, ..Default::default() };
        let losses = train(&mut net, &d, &cfg).unwrap().epoch_losses;
        assert!(
            losses.windows(2).all(|w| w[1] < w[0]),
            "{}: {losses:?}",
            ModelId::new(fam.clone())
        );
    }
}

#[test]
fn same_seed_same_parameters() {
    let d = blobs(60, 3);
    let run = || {
        let spec = NetworkSpec::mlp([2, 1, 1], &[4], 2);
        let mut net = Network::new(spec, ActivationFamily::aplu(2, 1.0), 9).unwrap();
        let cfg = TrainConfig { learning_rate: 0.01, epochs: 3, seed: 77, ..Default::default() };
        train(&mut net, &d, &cfg).unwrap();
        net
    };
    let (a, b) = (run(), run());
    assert_eq!(a.param_groups(), b.param_groups());
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn checkpoint_file_round_trip() {
    let d = blobs(40, 4);
    let spec = NetworkSpec::mlp([2, 1, 1], &[4], 2);
    let mut net = Network::new(spec, ActivationFamily::melu(4, 255.0), 1).unwrap();
    let cfg = TrainConfig { learning_rate: 0.01, epochs: 2, ..Default::default() };
    train(&mut net, &d, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    net.save(&path).unwrap();
    let back = Network::load(&path).unwrap();
    // gradient buffers are scratch space and are not stored
    assert_eq!(back.to_json(), net.to_json());
    for (a, b) in back.param_groups().iter().zip(net.param_groups()) {
        assert_eq!(a.values, b.values);
    }
    assert_eq!(back.spec(), net.spec());
    let probe = Tensor::new(vec![1, 2], vec![0.3, -1.2]).unwrap();
    assert_eq!(back.forward(&probe).unwrap().0, net.forward(&probe).unwrap().0);
}

#[test]
fn checkpoint_with_oversized_spec_rejected() {
    let net = Network::new(NetworkSpec::mlp([2, 1, 1], &[], 2), ActivationFamily::new(ActivationKind::Relu, 1.0), 0)
        .unwrap();
    let text = net.to_json().replace("\"out\": 2", "\"out\": 4000000000000");
    assert!(Network::from_json(&text).is_err());
}
