use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdas_core::graphbuild::AdjacencyView;
use rdas_core::model::{GraphInput, ModelConfig, Phi, Rdas};
use rdas_core::tensor::{
    grad_check, uniform, Axis, GradCheckConfig, ParamId, ParamStore, Tape, Tensor, TensorError, Var,
};

const TOL: f64 = 1e-3;

fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
    uniform(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Scalar probe `sum(x * c)` with fixed random `c`, so every output element
/// gets a distinct upstream gradient.
fn probe(t: &mut Tape<'_>, x: Var, seed: u64) -> Result<Var, TensorError> {
    let [r, c] = t.value(x).shape();
    let w = t.constant(random(r, c, seed));
    let y = t.mul(x, w)?;
    Ok(t.sum(y))
}

fn check<F>(name: &str, store: &mut ParamStore, f: F)
where
    F: Fn(&mut Tape<'_>) -> Result<Var, TensorError>,
{
    let report = grad_check(store, f, GradCheckConfig::default()).unwrap();
    assert!(report.coordinates > 0, "{name}");
    assert!(report.max_rel_error < TOL, "{name}: {report:?}");
}

fn two_params(a: [usize; 2], b: [usize; 2]) -> (ParamStore, ParamId, ParamId) {
    let mut s = ParamStore::new();
    let x = s.add("a", random(a[0], a[1], 1), true).unwrap();
    let y = s.add("b", random(b[0], b[1], 2), true).unwrap();
    (s, x, y)
}

#[test]
fn binary_ops() {
    let (mut s, a, b) = two_params([3, 4], [4, 2]);
    check("matmul", &mut s, |t| {
        let (x, y) = (t.param(a), t.param(b));
        let z = t.matmul(x, y)?;
        probe(t, z, 9)
    });

    let (mut s, a, b) = two_params([3, 4], [3, 4]);
    for (name, op) in [
        ("add", 0),
        ("sub", 1),
        ("mul", 2),
        ("concat_cols", 3),
        ("concat_rows", 4),
    ] {
        check(name, &mut s, |t| {
            let (x, y) = (t.param(a), t.param(b));
            let z = match op {
                0 => t.add(x, y)?,
                1 => t.sub(x, y)?,
                2 => t.mul(x, y)?,
                3 => t.concat(x, y, Axis::Cols)?,
                _ => t.concat(x, y, Axis::Rows)?,
            };
            probe(t, z, 9)
        });
    }

    let (mut s, a, b) = two_params([3, 4], [1, 4]);
    check("add_row", &mut s, |t| {
        let (x, y) = (t.param(a), t.param(b));
        let z = t.add_row(x, y)?;
        probe(t, z, 9)
    });
}

#[test]
fn elementwise_ops() {
    let mut s = ParamStore::new();
    // keep inputs away from the relu kink
    let vals: Vec<f64> = random(3, 4, 3).data().iter().map(|v| v + 0.1 * v.signum()).collect();
    let a = s.add("a", Tensor::new(3, 4, vals), true).unwrap();
    for op in 0..6 {
        check(&format!("elementwise {op}"), &mut s, |t| {
            let x = t.param(a);
            let z = match op {
                0 => t.sigmoid(x),
                1 => t.tanh(x),
                2 => t.relu(x),
                3 => t.one_minus(x),
                4 => t.scale(x, -2.5),
                _ => t.map(x, f64::sin, f64::cos),
            };
            probe(t, z, 9)
        });
    }
}

#[test]
fn softmax_and_reductions() {
    let mut s = ParamStore::new();
    let a = s.add("a", random(4, 3, 4), true).unwrap();
    for axis in [Axis::Cols, Axis::Rows] {
        check("softmax", &mut s, |t| {
            let x = t.param(a);
            let z = t.softmax(x, axis);
            probe(t, z, 9)
        });
    }
    check("mean", &mut s, |t| {
        let x = t.param(a);
        let y = t.sigmoid(x);
        Ok(t.mean(y))
    });
    check("neg_log_pick", &mut s, |t| {
        let x = t.param(a);
        let p = t.softmax(x, Axis::Cols);
        let nll = t.neg_log_pick(p, &[0, 2, 1, 2])?;
        probe(t, nll, 9)
    });
}

#[test]
fn indexing_ops() {
    let (mut s, table, row) = two_params([5, 3], [1, 3]);
    check("embedding_lookup", &mut s, |t| {
        let x = t.param(table);
        let z = t.embedding_lookup(x, &[4, 0, 4, 2])?;
        probe(t, z, 9)
    });
    check("embedding_lookup_param", &mut s, |t| {
        let z = t.embedding_lookup_param(table, &[1, 1, 3])?;
        probe(t, z, 9)
    });
    check("repeat_rows", &mut s, |t| {
        let x = t.param(row);
        let z = t.repeat_rows(x, 4)?;
        probe(t, z, 9)
    });
    check("slice_cols", &mut s, |t| {
        let x = t.param(table);
        let z = t.slice_cols(x, 1, 2)?;
        probe(t, z, 9)
    });
    check("row", &mut s, |t| {
        let x = t.param(table);
        let z = t.row(x, 3)?;
        probe(t, z, 9)
    });
}

#[test]
fn aggregate_and_dropout() {
    let mut s = ParamStore::new();
    let a = s.add("a", random(4, 3, 5), true).unwrap();
    let preds: &'static [Vec<usize>] = Box::leak(vec![vec![], vec![0], vec![0, 1], vec![1, 2, 2]].into_boxed_slice());
    let norm: &'static [f64] = Box::leak(vec![1.0, 1.0, 2.0, 3.0].into_boxed_slice());
    check("aggregate", &mut s, |t| {
        let x = t.param(a);
        let z = t.aggregate(x, preds, norm)?;
        probe(t, z, 9)
    });
    check("dropout", &mut s, |t| {
        let x = t.param(a);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = t.dropout(x, 0.4, true, &mut rng)?;
        probe(t, z, 9)
    });
}

#[test]
fn wrong_derivative_fails_the_check() {
    let mut s = ParamStore::new();
    let a = s.add("a", random(3, 4, 6), true).unwrap();
    let report = grad_check(
        &mut s,
        |t| {
            let x = t.param(a);
            // tanh with the derivative of sigmoid
            let z = t.map(x, f64::tanh, |v| {
                let e = 1.0 / (1.0 + (-v).exp());
                e * (1.0 - e)
            });
            probe(t, z, 9)
        },
        GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.max_rel_error > 1e-2, "{report:?}");
}

#[test]
fn full_model_on_five_nodes() {
    for (phi, no_de) in [(Phi::Tanh, false), (Phi::Sigmoid, true)] {
        let config = ModelConfig {
            word_dim: 3,
            hidden: 2,
            layers: 2,
            dropout: 0.3,
            max_distance: 4,
            phi,
            no_distance_embedding: no_de,
        };
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = Rdas::init(config, 7, &mut store, &mut rng).unwrap();
        // nonzero biases so their gradients are exercised away from zero
        for id in store.ids().collect::<Vec<_>>() {
            if store.param(id).name.ends_with("bias") {
                let v: Vec<f64> = (0..store.value(id).len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
                store.value_mut(id).data_mut().copy_from_slice(&v);
            }
        }
        let preds = vec![vec![], vec![0], vec![0], vec![1, 2], vec![3]];
        // the check closure must accept tapes of any lifetime
        let input: &'static GraphInput = Box::leak(Box::new(GraphInput {
            word_ids: vec![1, 2, 3, 4, 5],
            distance_tokens: vec![0, 1, 1, 2, 3],
            adjacency: AdjacencyView {
                norm: preds.iter().map(|p: &Vec<usize>| p.len().max(1) as f64).collect(),
                preds,
            },
        }));
        let labels = [0, 0, 1, 0, 1];
        let report = grad_check(
            &mut store,
            |t| {
                let mut drop_rng = ChaCha8Rng::seed_from_u64(8);
                let out = model
                    .forward(t, input, &[6, 2, 0], true, &mut drop_rng)
                    .map_err(|e| TensorError::InvalidArgument(e.to_string()))?;
                model
                    .loss(t, out.probs, &labels)
                    .map_err(|e| TensorError::InvalidArgument(e.to_string()))
            },
            GradCheckConfig {
                eps: 1e-5,
                samples_per_param: 40,
                seed: 1,
            },
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "{phi:?}: {report:?}");
    }
}
