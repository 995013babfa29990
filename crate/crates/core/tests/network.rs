use dfdnet::dataset::{synthesize, SceneSource};
use dfdnet::graph::Graph;
use dfdnet::network::{Network, NetworkConfig};
use dfdnet::params::ParamStore;
use dfdnet::train::{sample_gradients, Crop};
use dfdnet::{Model, Tensor, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Parameter count written out layer by layer from the architecture
/// description, independent of the library's own accounting.
fn expected_params(cfg: &NetworkConfig, res: usize) -> usize {
    let n = cfg.n_filters;
    let gdfg = |c: usize, h: usize, w: usize| {
        let e = (c / 4).max(4);
        let phi = n * h * (w / 2 + 1) * 2;
        let coef = 2 * c + e * c + 2 + n * c * e;
        let mlp = (2 * c * c + 2 * c) + 2 + (c * 2 * c + c) + 2 * c;
        phi + coef + mlp
    };
    let c0 = cfg.base_channels;
    let mut total = c0 * 3 * 9 + c0 + 6 * c0 * 9 + 6;
    for s in 0..cfg.stages {
        let (c, r) = (c0 << s, res >> s);
        total += gdfg(c, r, r) + (2 * c * c * 16 + 2 * c);
        total += (2 * c * c * 4 + c) + gdfg(2 * c, r, r) + (c * 2 * c + c);
    }
    total + gdfg(c0 << cfg.stages, res >> cfg.stages, res >> cfg.stages)
}

#[test]
fn parameter_count_golden() {
    let cfg = NetworkConfig::default();
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Network::new(&cfg, 64, 64, true, &mut store, &mut rng).unwrap();
    assert_eq!(net.param_count(&store), expected_params(&cfg, 64));
    assert_eq!(net.param_count(&store), 72450);

    let mut other = ParamStore::new();
    let again = Network::new(&cfg, 64, 64, true, &mut other, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
    assert_eq!(again.param_count(&other), 72450);
}

#[test]
fn plain_variant_has_matched_budget() {
    let cfg = NetworkConfig::default();
    let count = |gdfg| {
        let mut store = ParamStore::new();
        let net = Network::new(&cfg, 64, 64, gdfg, &mut store, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        net.param_count(&store) as f64
    };
    let (full, plain) = (count(true), count(false));
    assert!((full - plain).abs() / full < 0.01, "{full} vs {plain}");
}

#[test]
fn embedding_of_an_impulse_stays_local() {
    let cfg = NetworkConfig::default();
    let mut store = ParamStore::new();
    let net = Network::new(&cfg, 16, 16, true, &mut store, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let bias = store.id("embed.b").unwrap();
    store.get_mut(bias).data_mut().fill(0.0);
    let mut img = Tensor::zeros(&[3, 16, 16]);
    img.data_mut()[7 * 16 + 9] = 1.0;
    let mut g = Graph::new();
    let bound = store.bind(&mut g);
    let x = g.constant(img);
    let e = net.embed_node(&mut g, &bound, x);
    let out = g.value(e);
    let (c, h, w) = out.dims3();
    assert_eq!(c, cfg.base_channels);
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                if y.abs_diff(7) > 1 || xx.abs_diff(9) > 1 {
                    assert_eq!(out.channel(ch)[y * w + xx], 0.0);
                }
            }
        }
    }
}

#[test]
fn decoder_stage_gradients_match_finite_differences() {
    let cfg = NetworkConfig {
        stages: 1,
        base_channels: 4,
        n_filters: 2,
        blocks_per_stage: 1,
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Network::new(&cfg, 8, 8, true, &mut store, &mut rng).unwrap();
    for t in store.tensors_mut() {
        let noise = random(&mut rng, t.shape());
        t.add_assign(&noise.map(|v| 0.1 * v));
    }
    let d_in = random(&mut rng, &[8, 4, 4]);
    let skip = random(&mut rng, &[4, 8, 8]);
    let weights = random(&mut rng, &[4, 8, 8]);

    let loss = |store: &ParamStore, d_in: &Tensor, grads: bool| {
        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let d = g.param(d_in.clone());
        let s = g.constant(skip.clone());
        let y = net.decoder_node(&mut g, store, &bound, 0, d, s);
        let wv = g.constant(weights.clone());
        let prod = g.mul(y, wv);
        let l = g.sum(prod);
        let value = g.value(l).item();
        if !grads {
            return (value, Vec::new(), Tensor::zeros(&[0]));
        }
        g.backward(l);
        (value, bound.grads(&g, store), g.grad(d).unwrap().clone())
    };
    let (_, pgrads, dgrad) = loss(&store, &d_in, true);

    let eps = 1e-4;
    let (mut num, mut ana) = (Vec::new(), Vec::new());
    for i in (0..d_in.len()).step_by(7) {
        let mut p = d_in.clone();
        p.data_mut()[i] += eps;
        let mut m = d_in.clone();
        m.data_mut()[i] -= eps;
        num.push((loss(&store, &p, false).0 - loss(&store, &m, false).0) / (2.0 * eps));
        ana.push(dgrad.data()[i]);
    }
    for (pi, grad) in pgrads.iter().enumerate() {
        let name = store.iter().nth(pi).unwrap().0.to_owned();
        if !name.starts_with("dec0") {
            continue;
        }
        for i in (0..grad.len()).step_by(grad.len() / 3 + 1) {
            let mut plus = store.clone();
            plus.tensors_mut()[pi].data_mut()[i] += eps;
            let mut minus = store.clone();
            minus.tensors_mut()[pi].data_mut()[i] -= eps;
            num.push((loss(&plus, &d_in, false).0 - loss(&minus, &d_in, false).0) / (2.0 * eps));
            ana.push(grad.data()[i]);
        }
    }
    let diff: f64 = num.iter().zip(&ana).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = num.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    assert!(diff / scale < 1e-3, "relative error {}", diff / scale);
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn untrained_network_starts_near_identity() {
    let model = Model::init(&TrainConfig::default()).unwrap();
    for i in 0..4 {
        let (s, _) = synthesize(&SceneSource::Procedural, 11, i, 64).unwrap();
        let (restored, _) = model.net.forward(&model.store, &s.reference).unwrap();
        let r = pearson(restored.data(), s.reference.data());
        assert!(r > 0.5, "sample {i}: r = {r}");
    }
}

#[test]
fn all_gradients_are_finite_and_reach_every_parameter_group() {
    let model = Model::init(&TrainConfig::default()).unwrap();
    let (s, _) = synthesize(&SceneSource::Procedural, 3, 0, 64).unwrap();
    let crop = Crop {
        input: s.input,
        reference: s.reference,
        flare: s.flare,
        light: s.masks.light_source,
    };
    let (loss, grads) = sample_gradients(&model, &crop, 17).unwrap();
    assert!(loss.total.is_finite());
    assert!(grads.iter().all(Tensor::is_finite));
    for prefix in ["embed.", "enc0.", "enc1.", "bottleneck.", "dec0.", "dec1.", "out.", "ldg."] {
        let touched = model
            .store
            .iter()
            .zip(&grads)
            .filter(|((n, _), _)| n.starts_with(prefix))
            .any(|(_, g)| g.data().iter().any(|v| *v != 0.0));
        assert!(touched, "no gradient reaches {prefix}");
    }
}
