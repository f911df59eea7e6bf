use rand::Rng;

use crate::graphbuild::{AdjacencyView, NodeKind, ReasoningGraph};
use crate::tensor::{uniform, xavier, Axis, ParamId, ParamStore, Tape, Tensor, Var};

use super::{ModelConfig, ModelError, Phi, Vocab};

/// Per-graph inputs the network needs, precomputed once per question.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub word_ids: Vec<usize>,
    pub distance_tokens: Vec<usize>,
    pub adjacency: AdjacencyView,
}

impl GraphInput {
    pub fn new(graph: &ReasoningGraph, adjacency: AdjacencyView, vocab: &Vocab, config: &ModelConfig) -> Self {
        Self {
            word_ids: graph.nodes.iter().map(|n| vocab.surface_id(&n.surface)).collect(),
            distance_tokens: graph.hops.iter().map(|&h| h.min(config.max_distance)).collect(),
            adjacency,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.word_ids.len()
    }
}

/// Two-way class per node: 1 for gold answer entities, 0 for everything
/// else (relation nodes included).
pub fn node_labels(
    graph: &ReasoningGraph,
    answers: &std::collections::BTreeSet<crate::kbstore::EntityId>,
) -> Vec<usize> {
    graph
        .nodes
        .iter()
        .map(|n| match (n.kind, n.entity()) {
            (NodeKind::Entity, Some(e)) if answers.contains(&e) => 1,
            _ => 0,
        })
        .collect()
}

#[derive(Debug, Clone)]
struct LayerParams {
    w0: ParamId,
    w1: ParamId,
    gate_w: ParamId,
    gate_b: ParamId,
}

/// Parameter handles for the gated graph-convolutional reasoner.
#[derive(Debug, Clone)]
pub struct Rdas {
    config: ModelConfig,
    word_emb: ParamId,
    dist_emb: ParamId,
    init_proj: ParamId,
    lstm_input: ParamId,
    lstm_hidden: ParamId,
    lstm_bias: ParamId,
    layers: Vec<LayerParams>,
    prediction: ParamId,
}

/// Forward results kept for inspection and tests.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `N x 2` rows of (non-answer, answer) probabilities.
    pub probs: Var,
    pub question: Var,
    /// Gate activations per layer, `N x d`.
    pub gates: Vec<Var>,
}

fn layer_name(l: usize, part: &str) -> String {
    format!("layer{l}.{part}")
}

impl Rdas {
    /// Registers freshly initialized parameters in `store`.
    pub fn init<R: Rng + ?Sized>(
        config: ModelConfig,
        vocab_size: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let (n, m, d) = (config.word_dim, config.hidden, config.gcn_width());
        store.add("word_embedding", uniform(vocab_size, n, 1.0, rng), true)?;
        store.add(
            "distance_embedding",
            uniform(config.max_distance + 1, n, 1.0, rng),
            true,
        )?;
        store.add("init_projection", xavier(2 * n, n, rng), true)?;
        store.add("lstm.input", xavier(n, 4 * m, rng), true)?;
        store.add("lstm.hidden", xavier(m, 4 * m, rng), true)?;
        store.add("lstm.bias", Tensor::zeros(1, 4 * m), true)?;
        for l in 0..config.layers {
            store.add(&layer_name(l, "w0"), xavier(d, d, rng), true)?;
            store.add(&layer_name(l, "w1"), xavier(d, d, rng), true)?;
            store.add(&layer_name(l, "gate.weight"), xavier(2 * d, d, rng), true)?;
            store.add(&layer_name(l, "gate.bias"), Tensor::zeros(1, d), true)?;
        }
        store.add("prediction", xavier(d + m, 2, rng), true)?;
        Self::bind(config, store)
    }

    /// Looks up existing parameters by name and checks their shapes.
    pub fn bind(config: ModelConfig, store: &ParamStore) -> Result<Self, ModelError> {
        config.validate()?;
        let (n, m, d) = (config.word_dim, config.hidden, config.gcn_width());
        let get = |name: &str, rows: Option<usize>, cols: usize| -> Result<ParamId, ModelError> {
            let id = store
                .id(name)
                .ok_or_else(|| ModelError::MissingParam(name.to_string()))?;
            let shape = store.value(id).shape();
            if shape[1] != cols || rows.is_some_and(|r| r != shape[0]) {
                return Err(ModelError::ParamShape {
                    name: name.to_string(),
                    shape,
                });
            }
            Ok(id)
        };
        let layers = (0..config.layers)
            .map(|l| {
                Ok(LayerParams {
                    w0: get(&layer_name(l, "w0"), Some(d), d)?,
                    w1: get(&layer_name(l, "w1"), Some(d), d)?,
                    gate_w: get(&layer_name(l, "gate.weight"), Some(2 * d), d)?,
                    gate_b: get(&layer_name(l, "gate.bias"), Some(1), d)?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(Self {
            word_emb: get("word_embedding", None, n)?,
            dist_emb: get("distance_embedding", Some(config.max_distance + 1), n)?,
            init_proj: get("init_projection", Some(2 * n), n)?,
            lstm_input: get("lstm.input", Some(n), 4 * m)?,
            lstm_hidden: get("lstm.hidden", Some(m), 4 * m)?,
            lstm_bias: get("lstm.bias", Some(1), 4 * m)?,
            layers,
            prediction: get("prediction", Some(d + m), 2)?,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn word_embedding(&self) -> ParamId {
        self.word_emb
    }

    pub fn vocab_size(&self, store: &ParamStore) -> usize {
        store.value(self.word_emb).rows()
    }

    /// Distance vectors `d_v`, all zeros under the distance ablation.
    pub fn distance_features(&self, tape: &mut Tape<'_>, input: &GraphInput) -> Result<Var, ModelError> {
        if self.config.no_distance_embedding {
            Ok(tape.constant(Tensor::zeros(input.num_nodes(), self.config.word_dim)))
        } else {
            Ok(tape.embedding_lookup_param(self.dist_emb, &input.distance_tokens)?)
        }
    }

    /// `n_v = [w_v ; d_v] W`, one row per node.
    pub fn init_nodes(&self, tape: &mut Tape<'_>, input: &GraphInput) -> Result<Var, ModelError> {
        let words = tape.embedding_lookup_param(self.word_emb, &input.word_ids)?;
        let dist = self.distance_features(tape, input)?;
        let x = tape.concat(words, dist, Axis::Cols)?;
        let proj = tape.param(self.init_proj);
        Ok(tape.matmul(x, proj)?)
    }

    /// Final hidden state of a single-layer LSTM over the question words.
    /// Gate blocks are laid out input, forget, cell, output.
    pub fn encode_question(&self, tape: &mut Tape<'_>, tokens: &[usize]) -> Result<Var, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptyQuestion);
        }
        let m = self.config.hidden;
        let emb = tape.embedding_lookup_param(self.word_emb, tokens)?;
        let wx = tape.param(self.lstm_input);
        let wh = tape.param(self.lstm_hidden);
        let b = tape.param(self.lstm_bias);
        let xw = tape.matmul(emb, wx)?;
        let xw = tape.add_row(xw, b)?;
        let mut h = tape.constant(Tensor::zeros(1, m));
        let mut c = tape.constant(Tensor::zeros(1, m));
        for t in 0..tokens.len() {
            let x_t = tape.row(xw, t)?;
            let hw = tape.matmul(h, wh)?;
            let pre = tape.add(x_t, hw)?;
            let i_pre = tape.slice_cols(pre, 0, m)?;
            let f_pre = tape.slice_cols(pre, m, m)?;
            let g_pre = tape.slice_cols(pre, 2 * m, m)?;
            let o_pre = tape.slice_cols(pre, 3 * m, m)?;
            let i = tape.sigmoid(i_pre);
            let f = tape.sigmoid(f_pre);
            let g = tape.tanh(g_pre);
            let o = tape.sigmoid(o_pre);
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, g)?;
            c = tape.add(keep, write)?;
            let tc = tape.tanh(c);
            h = tape.mul(o, tc)?;
        }
        Ok(h)
    }

    /// `h_v^0 = [n_v ; q]` for every node.
    pub fn attach_question(&self, tape: &mut Tape<'_>, nodes: Var, question: Var) -> Result<Var, ModelError> {
        let n = tape.value(nodes).rows();
        let q = tape.repeat_rows(question, n)?;
        Ok(tape.concat(nodes, q, Axis::Cols)?)
    }

    /// `u_v = sigmoid((1/c_v) sum_{j in N_v} h_j W1 + h_v W0)`.
    pub fn gcn_update<'a>(
        &self,
        tape: &mut Tape<'a>,
        h: Var,
        adjacency: &'a AdjacencyView,
        layer: usize,
    ) -> Result<Var, ModelError> {
        let p = &self.layers[layer];
        let agg = tape.aggregate(h, &adjacency.preds, &adjacency.norm)?;
        let w1 = tape.param(p.w1);
        let w0 = tape.param(p.w0);
        let msg = tape.matmul(agg, w1)?;
        let own = tape.matmul(h, w0)?;
        let pre = tape.add(msg, own)?;
        Ok(tape.sigmoid(pre))
    }

    /// Gate `a = sigmoid([u ; h] Wg + b)` and `h' = phi(u) * a + h * (1 - a)`.
    /// Returns `(h', a)`.
    pub fn gate_combine(&self, tape: &mut Tape<'_>, u: Var, h: Var, layer: usize) -> Result<(Var, Var), ModelError> {
        let p = &self.layers[layer];
        let uh = tape.concat(u, h, Axis::Cols)?;
        let gw = tape.param(p.gate_w);
        let gb = tape.param(p.gate_b);
        let lin = tape.matmul(uh, gw)?;
        let pre = tape.add_row(lin, gb)?;
        let a = tape.sigmoid(pre);
        let phi_u = match self.config.phi {
            Phi::Tanh => tape.tanh(u),
            Phi::Sigmoid => tape.sigmoid(u),
            Phi::Relu => tape.relu(u),
        };
        let new_part = tape.mul(phi_u, a)?;
        let one_minus_a = tape.one_minus(a);
        let old_part = tape.mul(h, one_minus_a)?;
        Ok((tape.add(new_part, old_part)?, a))
    }

    /// Full pass: node init, question encoding, `L` gated GCN layers and the
    /// per-node two-way softmax. Dropout only applies when `training`.
    pub fn forward<'a, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'a>,
        input: &'a GraphInput,
        tokens: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput, ModelError> {
        if input.num_nodes() == 0 {
            return Err(ModelError::EmptyGraph);
        }
        let nodes = self.init_nodes(tape, input)?;
        let q = self.encode_question(tape, tokens)?;
        let mut h = self.attach_question(tape, nodes, q)?;
        let mut gates = Vec::with_capacity(self.layers.len());
        for l in 0..self.layers.len() {
            let u = self.gcn_update(tape, h, &input.adjacency, l)?;
            let (next, a) = self.gate_combine(tape, u, h, l)?;
            gates.push(a);
            h = tape.dropout(next, self.config.dropout, training, rng)?;
        }
        let hq = self.attach_question(tape, h, q)?;
        let wp = tape.param(self.prediction);
        let logits = tape.matmul(hq, wp)?;
        let probs = tape.softmax(logits, Axis::Cols);
        Ok(ForwardOutput {
            probs,
            question: q,
            gates,
        })
    }

    /// Mean over nodes of `-ln p(true class)`.
    pub fn loss(&self, tape: &mut Tape<'_>, probs: Var, labels: &[usize]) -> Result<Var, ModelError> {
        let rows = tape.value(probs).rows();
        if rows != labels.len() {
            return Err(ModelError::LabelMismatch {
                nodes: rows,
                labels: labels.len(),
            });
        }
        let nll = tape.neg_log_pick(probs, labels)?;
        Ok(tape.mean(nll))
    }
}
