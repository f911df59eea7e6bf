use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rdas_core::graphbuild::{AdjacencyView, GraphOptions};
use rdas_core::harness::{TrainConfig, Variant};
use rdas_core::model::{GraphInput, ModelConfig, Phi, Rdas};
use rdas_core::tensor::{ParamStore, Tape};

type Mat = Vec<Vec<f64>>;

fn param(store: &ParamStore, name: &str) -> Mat {
    let t = store.value(store.id(name).unwrap());
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn cat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

/// Forward pass written node by node in plain floats, reading weights by
/// name. Returns per-node answer probabilities.
fn reference(store: &ParamStore, cfg: &ModelConfig, input: &GraphInput, tokens: &[usize]) -> Vec<f64> {
    let (m, layers) = (cfg.hidden, cfg.layers);
    let words = param(store, "word_embedding");
    let dist = param(store, "distance_embedding");
    let x: Mat = (0..input.num_nodes())
        .map(|v| {
            let d = if cfg.no_distance_embedding {
                vec![0.0; cfg.word_dim]
            } else {
                dist[input.distance_tokens[v]].clone()
            };
            cat(&words[input.word_ids[v]], &d)
        })
        .collect();
    let nodes = matmul(&x, &param(store, "init_projection"));

    let (wx, wh, b) = (
        param(store, "lstm.input"),
        param(store, "lstm.hidden"),
        param(store, "lstm.bias"),
    );
    let (mut h, mut c) = (vec![0.0; m], vec![0.0; m]);
    for &tok in tokens {
        let pre: Vec<f64> = (0..4 * m)
            .map(|j| {
                b[0][j]
                    + (0..cfg.word_dim).map(|k| words[tok][k] * wx[k][j]).sum::<f64>()
                    + (0..m).map(|k| h[k] * wh[k][j]).sum::<f64>()
            })
            .collect();
        for k in 0..m {
            let (i, f, g, o) = (sig(pre[k]), sig(pre[m + k]), pre[2 * m + k].tanh(), sig(pre[3 * m + k]));
            c[k] = f * c[k] + i * g;
            h[k] = o * c[k].tanh();
        }
    }
    let q = h;

    let mut hs: Mat = nodes.iter().map(|n| cat(n, &q)).collect();
    for l in 0..layers {
        let w0 = param(store, &format!("layer{l}.w0"));
        let w1 = param(store, &format!("layer{l}.w1"));
        let gw = param(store, &format!("layer{l}.gate.weight"));
        let gb = param(store, &format!("layer{l}.gate.bias"));
        let d = hs[0].len();
        let mut next = hs.clone();
        for v in 0..hs.len() {
            let preds = &input.adjacency.preds[v];
            let agg: Vec<f64> = (0..d)
                .map(|k| preds.iter().map(|&j| hs[j][k]).sum::<f64>() / input.adjacency.norm[v])
                .collect();
            let u: Vec<f64> = (0..d)
                .map(|j| sig((0..d).map(|k| agg[k] * w1[k][j] + hs[v][k] * w0[k][j]).sum()))
                .collect();
            let uh = cat(&u, &hs[v]);
            for j in 0..d {
                let a = sig(gb[0][j] + (0..2 * d).map(|k| uh[k] * gw[k][j]).sum::<f64>());
                let phi = match cfg.phi {
                    Phi::Tanh => u[j].tanh(),
                    Phi::Sigmoid => sig(u[j]),
                    Phi::Relu => u[j].max(0.0),
                };
                next[v][j] = phi * a + hs[v][j] * (1.0 - a);
            }
        }
        hs = next;
    }

    let wp = param(store, "prediction");
    hs.iter()
        .map(|hv| {
            let z = cat(hv, &q);
            let l0: f64 = z.iter().zip(&wp).map(|(x, w)| x * w[0]).sum();
            let l1: f64 = z.iter().zip(&wp).map(|(x, w)| x * w[1]).sum();
            1.0 / (1.0 + (l0 - l1).exp())
        })
        .collect()
}

fn model(cfg: ModelConfig, vocab: usize, seed: u64) -> (Rdas, ParamStore) {
    let mut store = ParamStore::new();
    let m = Rdas::init(cfg, vocab, &mut store, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (m, store)
}

fn run(m: &Rdas, store: &ParamStore, input: &GraphInput, tokens: &[usize]) -> (Vec<[f64; 2]>, Vec<Vec<f64>>) {
    let mut tape = Tape::new(store);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = m.forward(&mut tape, input, tokens, false, &mut rng).unwrap();
    let p = tape.value(out.probs);
    let probs = (0..p.rows()).map(|r| [p.get(r, 0), p.get(r, 1)]).collect();
    let gates = out.gates.iter().map(|g| tape.value(*g).data().to_vec()).collect();
    (probs, gates)
}

fn graph_input() -> impl Strategy<Value = (GraphInput, Vec<usize>)> {
    (1usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec(0usize..6, n),
            prop::collection::vec(0usize..5, n),
            prop::collection::vec((0..n, 0..n), 0..2 * n),
            prop::collection::vec(0usize..6, 1..5),
        )
            .prop_map(move |(words, dists, edges, tokens)| {
                let mut preds = vec![Vec::new(); n];
                for (u, v) in edges {
                    preds[v].push(u);
                }
                let norm = preds.iter().map(|p| p.len().max(1) as f64).collect();
                let input = GraphInput {
                    word_ids: words,
                    distance_tokens: dists,
                    adjacency: AdjacencyView { preds, norm },
                };
                (input, tokens)
            })
    })
}

fn config(phi: Phi, no_de: bool, layers: usize) -> ModelConfig {
    ModelConfig {
        word_dim: 3,
        hidden: 2,
        layers,
        dropout: 0.2,
        max_distance: 4,
        phi,
        no_distance_embedding: no_de,
    }
}

fn phi_strategy() -> impl Strategy<Value = Phi> {
    prop_oneof![Just(Phi::Tanh), Just(Phi::Sigmoid), Just(Phi::Relu)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn forward_matches_plain_reference(
        (input, tokens) in graph_input(),
        phi in phi_strategy(),
        no_de in any::<bool>(),
        layers in 1usize..4,
        seed in 0u64..1000,
    ) {
        let cfg = config(phi, no_de, layers);
        let (m, store) = model(cfg, 6, seed);
        let (probs, gates) = run(&m, &store, &input, &tokens);
        let want = reference(&store, &cfg, &input, &tokens);
        for (p, w) in probs.iter().zip(&want) {
            prop_assert!((p[1] - w).abs() < 1e-10, "{} vs {}", p[1], w);
            prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
        prop_assert_eq!(gates.len(), layers);
        for g in gates.iter().flatten() {
            prop_assert!(*g > 0.0 && *g < 1.0);
        }
        // evaluation mode is deterministic
        let (again, _) = run(&m, &store, &input, &tokens);
        prop_assert_eq!(probs, again);
    }

    #[test]
    fn relabelling_nodes_permutes_outputs(
        (input, tokens) in graph_input(),
        phi in phi_strategy(),
        rot in 0usize..8,
        seed in 0u64..1000,
    ) {
        let n = input.num_nodes();
        // new index of old node v
        let perm: Vec<usize> = (0..n).map(|v| (v * 5 + rot) % n).collect();
        let perm = if (0..n).all(|i| perm.contains(&i)) { perm } else { (0..n).rev().collect() };
        let mut moved = GraphInput {
            word_ids: vec![0; n],
            distance_tokens: vec![0; n],
            adjacency: AdjacencyView { preds: vec![Vec::new(); n], norm: vec![1.0; n] },
        };
        for v in 0..n {
            let p = perm[v];
            moved.word_ids[p] = input.word_ids[v];
            moved.distance_tokens[p] = input.distance_tokens[v];
            moved.adjacency.preds[p] = input.adjacency.preds[v].iter().map(|&u| perm[u]).collect();
            moved.adjacency.norm[p] = input.adjacency.norm[v];
        }
        let cfg = config(phi, false, 2);
        let (m, store) = model(cfg, 6, seed);
        let (a, _) = run(&m, &store, &input, &tokens);
        let (b, _) = run(&m, &store, &moved, &tokens);
        for v in 0..n {
            prop_assert!((a[v][1] - b[perm[v]][1]).abs() < 1e-12);
        }
    }
}

#[test]
fn three_node_chain_by_hand() {
    // one-dimensional everything: word_dim 1, hidden 1, one layer
    let cfg = ModelConfig {
        word_dim: 1,
        hidden: 1,
        layers: 1,
        dropout: 0.0,
        max_distance: 2,
        phi: Phi::Tanh,
        no_distance_embedding: false,
    };
    let (m, mut store) = model(cfg, 3, 0);
    let mut set = |name: &str, v: &[f64]| {
        let id = store.id(name).unwrap();
        store.value_mut(id).data_mut().copy_from_slice(v);
    };
    set("word_embedding", &[0.5, -1.0, 2.0]);
    set("distance_embedding", &[0.0, 1.0, 2.0]);
    set("init_projection", &[1.0, 0.5]);
    // only the cell-candidate block is open: i = f = o = sigmoid(0) = 0.5
    set("lstm.input", &[0.0, 0.0, 1.0, 0.0]);
    set("lstm.hidden", &[0.0, 0.0, 0.0, 0.0]);
    set("lstm.bias", &[0.0, 0.0, 0.0, 0.0]);
    set("layer0.w0", &[1.0, 0.0, 0.0, 1.0]);
    set("layer0.w1", &[1.0, 0.0, 0.0, 0.0]);
    set("layer0.gate.weight", &[0.0; 8]);
    set("layer0.gate.bias", &[0.0, 0.0]);
    set("prediction", &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);

    // chain 0 -> 1 -> 2 with words 0, 1, 2 at hops 0, 1, 2
    let input = GraphInput {
        word_ids: vec![0, 1, 2],
        distance_tokens: vec![0, 1, 2],
        adjacency: AdjacencyView {
            preds: vec![vec![], vec![0], vec![1]],
            norm: vec![1.0, 1.0, 1.0],
        },
    };
    let (probs, gates) = run(&m, &store, &input, &[2]);

    // question: x = 2, g = tanh(2), c = 0.5 g, q = 0.5 tanh(c)
    let q = 0.5 * (0.5 * 2f64.tanh()).tanh();
    // n_v = w_v + 0.5 d_v
    let n = [0.5, -1.0 + 0.5, 2.0 + 1.0];
    let h0: Vec<[f64; 2]> = n.iter().map(|&x| [x, q]).collect();
    let mut h1 = Vec::new();
    for v in 0..3 {
        let agg0 = if v == 0 { 0.0 } else { h0[v - 1][0] };
        let u = [sig(agg0 + h0[v][0]), sig(h0[v][1])];
        // gate is sigmoid(0) = 0.5 everywhere
        h1.push([0.5 * u[0].tanh() + 0.5 * h0[v][0], 0.5 * u[1].tanh() + 0.5 * h0[v][1]]);
    }
    for v in 0..3 {
        // logits are (0, h1[v][0])
        let want = sig(h1[v][0]);
        assert!(
            (probs[v][1] - want).abs() < 1e-12,
            "node {v}: {} vs {want}",
            probs[v][1]
        );
    }
    assert!(gates[0].iter().all(|&g| (g - 0.5).abs() < 1e-15));
}

#[test]
fn ablations_keep_parameter_shapes() {
    let base = ModelConfig::default();
    let (_, full) = model(base, 10, 3);
    for variant in Variant::ALL {
        let (cfg, train) = variant.apply(&base, &TrainConfig::default());
        let graph = train.graph;
        let (_, store) = model(cfg, 10, 3);
        let shapes = |s: &ParamStore| -> Vec<(String, [usize; 2])> {
            s.params().iter().map(|p| (p.name.clone(), p.value.shape())).collect()
        };
        assert_eq!(shapes(&store), shapes(&full), "{}", variant.name());
        match variant {
            Variant::NoDirection => assert!(graph.no_direction),
            Variant::NoRn => assert!(graph.no_relation_nodes),
            Variant::NoDe => assert!(cfg.no_distance_embedding),
            Variant::Full => assert_eq!(graph, GraphOptions::default()),
        }
    }
}
