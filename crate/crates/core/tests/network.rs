use std::path::PathBuf;

use latentlayout::layout::{BBox, Element, Layout};
use latentlayout::net::{
    reconstruction_loss, sigmoid, Hyperparameters, LatentCodes, LayoutNet, NetworkWeights,
    Reconstruction,
};
use latentlayout::Error;
use proptest::prelude::*;
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn mini() -> Hyperparameters {
    Hyperparameters {
        d_model: 8,
        ffn_hidden: 4,
        heads: 2,
        blocks: 2,
        mlp_hidden: 6,
        d_z: 4,
        vocab_size: 5,
        max_elements: 9,
    }
}

fn golden() -> Value {
    serde_json::from_str(&std::fs::read_to_string(data("golden.json")).unwrap()).unwrap()
}

fn matrix(v: &Value) -> Vec<Vec<f64>> {
    serde_json::from_value(v.clone()).unwrap()
}

fn labels(v: &Value) -> Vec<usize> {
    serde_json::from_value(v.clone()).unwrap()
}

fn layout_from(boxes: &[Vec<f64>], labels: &[usize]) -> Layout {
    Layout::new(
        boxes
            .iter()
            .zip(labels)
            .map(|(b, &l)| Element::new(l, BBox::new(b[0], b[1], b[2], b[3])))
            .collect(),
    )
    .unwrap()
}

fn codes(rows: Vec<Vec<f64>>) -> LatentCodes {
    LatentCodes::try_from(rows).unwrap()
}

fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b}");
}

fn golden_net() -> LayoutNet {
    LayoutNet::new(&NetworkWeights::load(data("mini_1234.json")).unwrap()).unwrap()
}

#[test]
fn stored_weights_match_seeded_init() {
    let stored = NetworkWeights::load(data("mini_1234.json")).unwrap();
    assert_eq!(stored, NetworkWeights::random(mini(), 1234).unwrap());
}

#[test]
fn golden_generator() {
    let g = golden();
    let net = golden_net();
    let out = net
        .generate(&codes(matrix(&g["generator"]["z"])), &labels(&g["generator"]["labels"]))
        .unwrap();
    for (b, want) in out.boxes().iter().zip(matrix(&g["generator"]["boxes"])) {
        for (x, y) in b.to_array().iter().zip(&want) {
            assert_close(*x, *y, 1e-6, "generator box");
        }
    }
}

#[test]
fn golden_discriminator_and_aux() {
    let g = golden();
    let net = golden_net();
    let d = &g["discriminator"];
    let layout = layout_from(&matrix(&d["boxes"]), &labels(&d["labels"]));
    let out = net.discriminate(&layout).unwrap();
    assert_close(out.score, d["score"].as_f64().unwrap(), 1e-6, "score");
    let h: Vec<f64> = serde_json::from_value(d["h_const"].clone()).unwrap();
    for (a, b) in out.h_const.iter().zip(&h) {
        assert_close(*a, *b, 1e-6, "h_const");
    }

    let rec = net.reconstruct(&out.h_const, layout.len()).unwrap();
    for (b, want) in rec.boxes.iter().zip(matrix(&g["aux"]["boxes"])) {
        for (x, y) in b.iter().zip(&want) {
            assert_close(*x, *y, 1e-6, "aux box");
        }
    }
    for (p, want) in rec.label_probs.iter().zip(matrix(&g["aux"]["label_probs"])) {
        assert_close(p.iter().sum(), 1.0, 1e-6, "probability mass");
        for (x, y) in p.iter().zip(&want) {
            assert_close(*x, *y, 1e-6, "aux probability");
        }
    }
}

#[test]
fn golden_objective() {
    let g = golden();
    let net = golden_net();
    let d = &g["discriminator"];
    let o = &g["objective"];
    let layout = layout_from(&matrix(&d["boxes"]), &labels(&d["labels"]));
    let diag = net.gan_objective(&layout, &codes(matrix(&o["z"]))).unwrap();
    assert_close(diag.d_real, o["d_real"].as_f64().unwrap(), 1e-6, "d_real");
    assert_close(diag.d_fake, o["d_fake"].as_f64().unwrap(), 1e-6, "d_fake");
    assert_close(diag.rec_loss, o["rec_loss"].as_f64().unwrap(), 1e-6, "rec_loss");
    assert_close(diag.total, o["total"].as_f64().unwrap(), 1e-6, "total");
}

fn tiny() -> Hyperparameters {
    Hyperparameters {
        d_model: 2,
        ffn_hidden: 1,
        heads: 1,
        blocks: 1,
        mlp_hidden: 1,
        d_z: 1,
        vocab_size: 1,
        max_elements: 1,
    }
}

fn set(w: &mut NetworkWeights, name: &str, values: &[f32]) {
    let t = w.get_mut(name).unwrap();
    assert_eq!(t.data.len(), values.len(), "{name}");
    t.data.copy_from_slice(values);
}

// One element, z = 0.5. Encoder: relu(z) = 0.5, then (2, -2) * 0.5 = (1, -1).
// Attention over a single token returns out(v(x)) = v.bias = (1, 0), giving
// (2, -1): mean 0.5, deviations (1.5, -1.5), variance 2.25. LN1 with gain
// (2, 1) and bias (0.1, -0.1) gives (3/s + 0.1, -1.5/s - 0.1), s = sqrt(2.25 + eps).
// The FFN contributes only fc2.bias = (0.25, 0). LN2 is the identity affine,
// so the output is (a, -a) with m = (4.5/s + 0.45)/2 and a = m / sqrt(m² + eps).
// Decoder: relu(a) = a, logits (a, 0.5, -a, 2a).
#[test]
fn hand_checked_single_block() {
    let mut w = NetworkWeights::zeros(tiny()).unwrap();
    set(&mut w, "gen.enc.fc1.weight", &[1.0, 0.0]);
    set(&mut w, "gen.enc.fc2.weight", &[2.0, -2.0]);
    set(&mut w, "gen.block0.attn.v.bias", &[1.0, 0.0]);
    set(&mut w, "gen.block0.attn.out.weight", &[1.0, 0.0, 0.0, 1.0]);
    set(&mut w, "gen.block0.ln1.weight", &[2.0, 1.0]);
    set(&mut w, "gen.block0.ln1.bias", &[0.1, -0.1]);
    set(&mut w, "gen.block0.ffn.fc2.bias", &[0.25, 0.0]);
    set(&mut w, "gen.block0.ln2.weight", &[1.0, 1.0]);
    set(&mut w, "gen.dec.fc1.weight", &[1.0, 0.0]);
    set(&mut w, "gen.dec.fc2.weight", &[1.0, 0.0, -1.0, 2.0]);
    set(&mut w, "gen.dec.fc2.bias", &[0.0, 0.5, 0.0, 0.0]);
    let net = LayoutNet::new(&w).unwrap();
    let out = net.generate(&codes(vec![vec![0.5]]), &[0]).unwrap();

    let eps = 1e-5;
    let s = (2.25f64 + eps).sqrt();
    // f32 storage of 0.1 shifts LN1's output slightly; both biases cancel
    // to one difference below.
    let (b1, b2) = (0.1f32 as f64, -0.1f32 as f64);
    let y = [3.0 / s + b1 + 0.25, -1.5 / s + b2];
    let m = (y[0] - y[1]) / 2.0;
    let a = m / (m * m + eps).sqrt();
    let want = [sigmoid(a), sigmoid(0.5), sigmoid(-a), sigmoid(2.0 * a)];
    let got = out.boxes()[0].to_array();
    for (g, w) in got.iter().zip(want) {
        assert_close(*g, w, 1e-12, "hand-computed box");
    }
    for (g, w) in got.iter().zip([0.731_058_2, 0.622_459_3, 0.268_941_8, 0.880_796_9]) {
        assert_close(*g, w, 1e-6, "rounded box");
    }
}

#[test]
fn zero_attention_and_ffn_block_is_layer_norm() {
    let mut w = NetworkWeights::zeros(Hyperparameters { blocks: 1, ..mini() }).unwrap();
    for ln in ["ln1", "ln2"] {
        set(&mut w, &format!("gen.block0.{ln}.weight"), &[1.0; 8]);
    }
    let block = latentlayout::net::Block::load(&w, "gen.block0").unwrap();
    let x = nalgebra::DMatrix::from_fn(3, 8, |i, j| ((i * 8 + j) as f64 * 0.37).sin());
    let y = block.forward(&x);
    let norm = latentlayout::net::LayerNorm::identity(8);
    let once = norm.forward(&x);
    let twice = norm.forward(&once);
    assert_eq!(y.shape(), x.shape());
    for ((a, b), c) in y.iter().zip(twice.iter()).zip(once.iter()) {
        assert_close(*a, *b, 1e-12, "LN2(LN1(x))");
        // A second normalization only differs through the variance epsilon.
        assert_close(*a, *c, 1e-4, "LN(x)");
    }
}

#[test]
fn weight_container_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let w = NetworkWeights::random(mini(), 7).unwrap();
    w.save(&path).unwrap();
    assert_eq!(NetworkWeights::load(&path).unwrap(), w);

    let text = std::fs::read_to_string(&path).unwrap();
    let mut manifest: Value = serde_json::from_str(&text).unwrap();
    manifest["tensors"]
        .as_array_mut()
        .unwrap()
        .retain(|t| !t["name"].as_str().unwrap().starts_with("disc.block1."));
    let broken = dir.path().join("missing.json");
    std::fs::write(&broken, manifest.to_string()).unwrap();
    match NetworkWeights::load(&broken) {
        Err(Error::MissingTensor(name)) => assert!(name.starts_with("disc.block1."), "{name}"),
        other => panic!("expected a missing tensor, got {other:?}"),
    }

    let blob = std::fs::read(dir.path().join("m.bin")).unwrap();
    std::fs::write(dir.path().join("m.bin"), &blob[..blob.len() - 4]).unwrap();
    assert!(matches!(
        NetworkWeights::load(&path),
        Err(Error::TruncatedBlob { .. })
    ));
}

#[test]
fn reconstruction_loss_reference_values() {
    let target = layout_from(
        &[vec![0.5, 0.7, 0.2, 0.2], vec![0.3, 0.2, 0.4, 0.1]],
        &[3, 1],
    );
    let sorted = [[0.3, 0.2, 0.4, 0.1], [0.5, 0.7, 0.2, 0.2]];
    let perfect = Reconstruction {
        boxes: sorted.to_vec(),
        label_probs: vec![
            vec![0.0, 1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0, 0.0],
        ],
    };
    assert_eq!(reconstruction_loss(&perfect, &target).unwrap(), 0.0);
    let uniform = Reconstruction {
        boxes: sorted.to_vec(),
        label_probs: vec![vec![0.2; 5]; 2],
    };
    assert_close(reconstruction_loss(&uniform, &target).unwrap(), 5f64.ln(), 1e-6, "ln 5");
}

#[test]
fn objective_is_finite_on_random_inputs() {
    let net = LayoutNet::new(&NetworkWeights::random(mini(), 99).unwrap()).unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
    use rand::Rng;
    for trial in 0..1000u64 {
        let n = rng.random_range(1..=9);
        let elements = (0..n)
            .map(|_| {
                Element::new(
                    rng.random_range(0..5),
                    BBox::new(rng.random(), rng.random(), rng.random(), rng.random()),
                )
            })
            .collect();
        let real = Layout::new(elements).unwrap();
        let z = LatentCodes::sample(n, 4, trial);
        let d = net.gan_objective(&real, &z).unwrap();
        assert!(d.total.is_finite(), "trial {trial}: {d:?}");
    }
}

fn instance() -> impl Strategy<Value = (u64, Vec<usize>, Vec<Vec<f64>>, Vec<usize>)> {
    (1usize..=9).prop_flat_map(|n| {
        (
            any::<u64>(),
            prop::collection::vec(0usize..5, n),
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generator_is_permutation_equivariant((seed, labels, z, perm) in instance()) {
        let net = LayoutNet::new(&NetworkWeights::random(mini(), seed).unwrap()).unwrap();
        let z = codes(z);
        let out = net.generate(&z, &labels).unwrap();
        let plabels: Vec<usize> = perm.iter().map(|&p| labels[p]).collect();
        let pout = net.generate(&z.permuted(&perm), &plabels).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            let (a, b) = (pout.boxes()[i].to_array(), out.boxes()[p].to_array());
            for k in 0..4 {
                prop_assert!((a[k] - b[k]).abs() <= 1e-9);
            }
            prop_assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn discriminator_is_permutation_invariant((seed, labels, z, perm) in instance()) {
        let net = LayoutNet::new(&NetworkWeights::random(mini(), seed).unwrap()).unwrap();
        let boxes: Vec<Vec<f64>> = z.iter().map(|r| r.iter().map(|v| sigmoid(*v)).collect()).collect();
        let layout = layout_from(&boxes, &labels);
        let pboxes: Vec<Vec<f64>> = perm.iter().map(|&p| boxes[p].clone()).collect();
        let plabels: Vec<usize> = perm.iter().map(|&p| labels[p]).collect();
        let a = net.discriminate(&layout).unwrap().score;
        let b = net.discriminate(&layout_from(&pboxes, &plabels)).unwrap().score;
        prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
    }
}
