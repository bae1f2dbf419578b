//! Message-passing encoder over the scheduling graph and the policy/value
//! heads on top of it.
//!
//! Node features are projected to the hidden width, then each round updates
//! every node as
//!
//! ```text
//! h' = relu(W_self·h + b + Σ_rel W_rel · mean_{edges into the node}([h_src ; edge features]))
//! ```
//!
//! over five relations: job→machine and machine→job (both along eligibility
//! edges), machine→setup, job→setup and setup→machine. The state embedding
//! is `[mean job embedding ; mean machine embedding ; global features]`.
//!
//! Several graphs are processed at once as a disjoint union; the action
//! distribution of each graph is normalized over its own candidates.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use upmsp_core::graph::{HeteroGraph, GLOBAL_FEATURES, JOB_FEATURES, MACHINE_FEATURES, SETUP_FEATURES};
use upmsp_core::{Action, ActionSet};

use crate::error::{NnError, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Node embedding width.
    pub hidden: usize,
    /// Message-passing rounds.
    pub rounds: usize,
    /// Width of each hidden layer in the pair, wait and value heads.
    pub head_hidden: usize,
    /// Hidden layers per head.
    pub head_layers: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { hidden: 32, rounds: 2, head_hidden: 64, head_layers: 2 }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.head_hidden == 0 {
            return Err(NnError::Invalid(format!("layer widths must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn pooled_width(&self) -> usize {
        2 * self.hidden + GLOBAL_FEATURES
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Job,
    Machine,
    Setup,
}

const KINDS: [Kind; 3] = [Kind::Job, Kind::Machine, Kind::Setup];

fn kind_features(kind: Kind) -> usize {
    match kind {
        Kind::Job => JOB_FEATURES,
        Kind::Machine => MACHINE_FEATURES,
        Kind::Setup => SETUP_FEATURES,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Relation {
    JobToMachine,
    MachineToJob,
    MachineToSetup,
    JobToSetup,
    SetupToMachine,
}

const RELATIONS: [Relation; 5] = [
    Relation::JobToMachine,
    Relation::MachineToJob,
    Relation::MachineToSetup,
    Relation::JobToSetup,
    Relation::SetupToMachine,
];

impl Relation {
    fn src(self) -> Kind {
        match self {
            Relation::JobToMachine | Relation::JobToSetup => Kind::Job,
            Relation::MachineToJob | Relation::MachineToSetup => Kind::Machine,
            Relation::SetupToMachine => Kind::Setup,
        }
    }

    fn dst(self) -> Kind {
        match self {
            Relation::JobToMachine | Relation::SetupToMachine => Kind::Machine,
            Relation::MachineToJob => Kind::Job,
            Relation::MachineToSetup | Relation::JobToSetup => Kind::Setup,
        }
    }

    fn edge_features(self) -> usize {
        match self {
            Relation::JobToMachine | Relation::MachineToJob => upmsp_core::graph::JM_FEATURES,
            Relation::MachineToSetup => upmsp_core::graph::MS_FEATURES,
            Relation::JobToSetup => upmsp_core::graph::JS_FEATURES,
            Relation::SetupToMachine => upmsp_core::graph::SM_FEATURES,
        }
    }
}

/// Dense layer: `x·W + b`, with `W` stored `in × out`.
#[derive(Debug, Clone, Copy)]
struct Linear {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Mlp {
    layers: Vec<Linear>,
}

#[derive(Debug, Clone)]
struct Round {
    /// Per node kind, in [`KINDS`] order.
    update: [Linear; 3],
    /// Per relation, in [`RELATIONS`] order (no bias).
    message: [usize; 5],
}

/// Parameter positions, derived deterministically from a [`PolicyConfig`].
#[derive(Debug, Clone)]
struct Layout {
    shapes: Vec<(usize, usize)>,
    /// Which tensors are biases (zero-initialized).
    bias: Vec<bool>,
    embed: [Linear; 3],
    rounds: Vec<Round>,
    /// First pair layer split by input block: job, machine, edge.
    pair_in: [usize; 3],
    pair_in_bias: usize,
    pair_rest: Mlp,
    wait: Mlp,
    value: Mlp,
}

struct LayoutBuilder {
    shapes: Vec<(usize, usize)>,
    bias: Vec<bool>,
}

impl LayoutBuilder {
    fn tensor(&mut self, rows: usize, cols: usize, bias: bool) -> usize {
        self.shapes.push((rows, cols));
        self.bias.push(bias);
        self.shapes.len() - 1
    }

    fn linear(&mut self, input: usize, output: usize) -> Linear {
        Linear { w: self.tensor(input, output, false), b: self.tensor(1, output, true) }
    }

    /// `input → hidden × layers → 1`.
    fn mlp(&mut self, input: usize, hidden: usize, layers: usize) -> Mlp {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat(hidden).take(layers));
        dims.push(1);
        Mlp { layers: dims.windows(2).map(|w| self.linear(w[0], w[1])).collect() }
    }
}

impl Layout {
    fn new(cfg: &PolicyConfig) -> Layout {
        let h = cfg.hidden;
        let mut b = LayoutBuilder { shapes: Vec::new(), bias: Vec::new() };
        let embed = KINDS.map(|k| b.linear(kind_features(k), h));
        let rounds = (0..cfg.rounds)
            .map(|_| Round {
                update: KINDS.map(|_| b.linear(h, h)),
                message: RELATIONS.map(|r| b.tensor(h + r.edge_features(), h, false)),
            })
            .collect();
        let first_out = if cfg.head_layers == 0 { 1 } else { cfg.head_hidden };
        let pair_in = [
            b.tensor(h, first_out, false),
            b.tensor(h, first_out, false),
            b.tensor(upmsp_core::graph::JM_FEATURES, first_out, false),
        ];
        let pair_in_bias = b.tensor(1, first_out, true);
        let pair_rest = if cfg.head_layers == 0 {
            Mlp { layers: Vec::new() }
        } else {
            b.mlp(cfg.head_hidden, cfg.head_hidden, cfg.head_layers - 1)
        };
        let wait = b.mlp(cfg.pooled_width(), cfg.head_hidden, cfg.head_layers);
        let value = b.mlp(cfg.pooled_width(), cfg.head_hidden, cfg.head_layers);
        Layout {
            shapes: b.shapes,
            bias: b.bias,
            embed,
            rounds,
            pair_in,
            pair_in_bias,
            pair_rest,
            wait,
            value,
        }
    }
}

/// Shared encoder plus pair, wait and value heads.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    pub tensors: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    v: u32,
    config: PolicyConfig,
    shapes: Vec<(usize, usize)>,
    values: Vec<f64>,
}

impl PolicyParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: PolicyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = layout
            .shapes
            .iter()
            .zip(&layout.bias)
            .map(|(&(r, c), &is_bias)| {
                if is_bias {
                    return Tensor::zeros(r, c);
                }
                let limit = (6.0 / (r + c) as f64).sqrt();
                let data = (0..r * c).map(|_| rng.gen_range(-limit..=limit)).collect();
                Tensor::from_vec(r, c, data).expect("shape from layout")
            })
            .collect();
        Ok(PolicyParams { config, tensors })
    }

    /// Every tensor set to `value`.
    pub fn constant(config: PolicyConfig, value: f64) -> Result<Self> {
        let mut p = PolicyParams::init(config, 0)?;
        for t in &mut p.tensors {
            t.data_mut().iter_mut().for_each(|x| *x = value);
        }
        Ok(p)
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(Tensor::shape).collect()
    }

    /// Indices of bias tensors in `tensors`.
    pub fn bias_mask(&self) -> Vec<bool> {
        Layout::new(&self.config).bias
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_values() {
            return Err(NnError::Shape { op: "set_flat", left: (self.num_values(), 1), right: (values.len(), 1) });
        }
        let mut at = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[at..at + n]);
            at += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn to_json(&self) -> String {
        let ck = Checkpoint { v: CHECKPOINT_VERSION, config: self.config, shapes: self.shapes(), values: self.flat() };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.v != CHECKPOINT_VERSION {
            return Err(NnError::Invalid(format!("unsupported checkpoint version {}", ck.v)));
        }
        let mut params = PolicyParams::init(ck.config, 0)?;
        if params.shapes() != ck.shapes {
            return Err(NnError::Invalid("checkpoint shapes do not match its config".into()));
        }
        params.set_flat(&ck.values)?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| NnError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| NnError::Io { path: path.to_path_buf(), source })?;
        PolicyParams::from_json(&text)
    }

    /// Gradient of every value in [`PolicyParams::flat`] order; zero where
    /// the output did not depend on a tensor.
    pub fn flat_grad(&self, grads: &Gradients, bound: &[Var]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_values());
        for (t, &v) in self.tensors.iter().zip(bound) {
            match grads.get(v) {
                Some(g) => out.extend_from_slice(g.data()),
                None => out.extend(std::iter::repeat(0.0).take(t.len())),
            }
        }
        out
    }

    /// Places every tensor on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.var(t.clone())).collect()
    }
}

/// Typed edges of one relation in a batch, with global row indices.
#[derive(Debug, Clone, Default)]
struct RelationEdges {
    src: Vec<usize>,
    dst: Vec<usize>,
    features: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Pair(usize),
    Wait(usize),
}

/// Disjoint union of several graphs plus the candidate actions of each.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    graphs: usize,
    node_x: [Tensor; 3],
    /// Graph of each job / machine row.
    job_graph: Vec<usize>,
    machine_graph: Vec<usize>,
    relations: Vec<RelationEdges>,
    globals: Tensor,
    pair_job: Vec<usize>,
    pair_machine: Vec<usize>,
    pair_x: Tensor,
    /// Graph of each wait-head row.
    wait_graphs: Vec<usize>,
    /// Rows of `[pair logits ; wait logits]` in output order.
    order: Vec<usize>,
    offsets: Vec<usize>,
}

fn stack(rows: &[&[f64]], width: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows.len() * width);
    for r in rows {
        debug_assert_eq!(r.len(), width);
        data.extend_from_slice(r);
    }
    Tensor::from_vec(rows.len(), width, data).expect("stacked feature rows")
}

impl GraphBatch {
    /// `actions[b]` lists the candidates of graph `b` in output order. Every
    /// assignment must have a job-machine edge in its graph.
    pub fn new(graphs: &[&HeteroGraph], actions: &[&[Action]]) -> Result<Self> {
        if graphs.len() != actions.len() {
            return Err(NnError::Shape { op: "GraphBatch", left: (graphs.len(), 1), right: (actions.len(), 1) });
        }
        let mut job_rows: Vec<&[f64]> = Vec::new();
        let mut machine_rows: Vec<&[f64]> = Vec::new();
        let mut setup_rows: Vec<&[f64]> = Vec::new();
        let mut job_graph = Vec::new();
        let mut machine_graph = Vec::new();
        let mut relations = vec![RelationEdges::default(); RELATIONS.len()];
        let mut global_rows: Vec<&[f64]> = Vec::new();
        let mut pair_job = Vec::new();
        let mut pair_machine = Vec::new();
        let mut pair_rows: Vec<&[f64]> = Vec::new();
        let mut slots: Vec<Slot> = Vec::new();
        let mut offsets = vec![0];
        let mut wait_graphs = Vec::new();

        for (b, (g, acts)) in graphs.iter().zip(actions).enumerate() {
            if g.nodes.machines.is_empty() {
                return Err(NnError::Empty(format!("graph {b} has no machine nodes")));
            }
            if acts.is_empty() {
                return Err(NnError::Empty(format!("graph {b} has no candidate actions")));
            }
            let (jo, mo, so) = (job_rows.len(), machine_rows.len(), setup_rows.len());
            job_rows.extend(g.nodes.jobs.iter().map(|n| n.x.as_slice()));
            machine_rows.extend(g.nodes.machines.iter().map(|n| n.x.as_slice()));
            setup_rows.extend(g.nodes.setups.iter().map(|n| n.x.as_slice()));
            job_graph.extend(std::iter::repeat(b).take(g.nodes.jobs.len()));
            machine_graph.extend(std::iter::repeat(b).take(g.nodes.machines.len()));
            if g.globals.len() != GLOBAL_FEATURES {
                return Err(NnError::Shape {
                    op: "globals",
                    left: (1, GLOBAL_FEATURES),
                    right: (1, g.globals.len()),
                });
            }
            global_rows.push(&g.globals);

            for (rel, edges) in RELATIONS.iter().zip(relations.iter_mut()) {
                let (list, src_off, dst_off, flip) = match rel {
                    Relation::JobToMachine => (&g.edges.jm, jo, mo, false),
                    Relation::MachineToJob => (&g.edges.jm, mo, jo, true),
                    Relation::MachineToSetup => (&g.edges.ms, mo, so, false),
                    Relation::JobToSetup => (&g.edges.js, jo, so, false),
                    Relation::SetupToMachine => (&g.edges.sm, so, mo, false),
                };
                for e in list {
                    let (s, d) = if flip { (e.dst, e.src) } else { (e.src, e.dst) };
                    edges.src.push(src_off + s);
                    edges.dst.push(dst_off + d);
                    edges.features.extend_from_slice(&e.x);
                }
            }

            for a in acts.iter() {
                match *a {
                    Action::Assign { job, machine } => {
                        let pos = g.job_position(job).ok_or_else(|| {
                            NnError::Invalid(format!("job {job} has no node in graph {b}"))
                        })?;
                        let edge = g.jm_edge(pos, machine).ok_or_else(|| {
                            NnError::Invalid(format!("pair ({job}, {machine}) has no edge in graph {b}"))
                        })?;
                        slots.push(Slot::Pair(pair_job.len()));
                        pair_job.push(jo + pos);
                        pair_machine.push(mo + machine);
                        pair_rows.push(&edge.x);
                    }
                    Action::Wait => {
                        slots.push(Slot::Wait(wait_graphs.len()));
                        wait_graphs.push(b);
                    }
                }
            }
            offsets.push(slots.len());
        }

        // Wait rows follow all pair rows.
        let pairs = pair_job.len();
        let order = slots
            .into_iter()
            .map(|s| match s {
                Slot::Pair(i) => i,
                Slot::Wait(w) => pairs + w,
            })
            .collect();

        Ok(GraphBatch {
            graphs: graphs.len(),
            node_x: [
                stack(&job_rows, JOB_FEATURES),
                stack(&machine_rows, MACHINE_FEATURES),
                stack(&setup_rows, SETUP_FEATURES),
            ],
            job_graph,
            machine_graph,
            relations,
            globals: stack(&global_rows, GLOBAL_FEATURES),
            pair_job,
            pair_machine,
            pair_x: stack(&pair_rows, upmsp_core::graph::JM_FEATURES),
            wait_graphs,
            order,
            offsets,
        })
    }

    /// Batch of one graph with the feasible actions of its state.
    pub fn single(graph: &HeteroGraph, actions: &ActionSet) -> Result<Self> {
        GraphBatch::new(&[graph], &[&actions.actions])
    }

    pub fn graphs(&self) -> usize {
        self.graphs
    }

    /// Candidate rows `offsets[b]..offsets[b + 1]` belong to graph `b`.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }
}

/// Node embeddings and pooled state embeddings of a batch.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub jobs: Var,
    pub machines: Var,
    pub setups: Var,
    /// One row per graph.
    pub pooled: Var,
}

/// Outputs of [`forward`].
#[derive(Debug, Clone, Copy)]
pub struct Heads {
    pub encoded: Encoded,
    /// Log-probability of every candidate, grouped by graph (column).
    pub log_probs: Var,
    /// State value per graph (column).
    pub values: Var,
}

fn linear(tape: &mut Tape, p: &[Var], l: Linear, x: Var) -> Result<Var> {
    let y = tape.matmul(x, p[l.w])?;
    tape.add_row(y, p[l.b])
}

fn mlp(tape: &mut Tape, p: &[Var], m: &Mlp, mut x: Var) -> Result<Var> {
    for (i, l) in m.layers.iter().enumerate() {
        x = linear(tape, p, *l, x)?;
        if i + 1 < m.layers.len() {
            x = tape.relu(x);
        }
    }
    Ok(x)
}

/// Runs the encoder over `batch`. `p` are the bound parameters.
pub fn encode(tape: &mut Tape, params: &PolicyParams, p: &[Var], batch: &GraphBatch) -> Result<Encoded> {
    let layout = Layout::new(&params.config);
    if p.len() != layout.shapes.len() {
        return Err(NnError::Shape { op: "encode", left: (layout.shapes.len(), 1), right: (p.len(), 1) });
    }
    let mut h = [0usize; 3].map(|_| None::<Var>);
    for (i, kind) in KINDS.iter().enumerate() {
        let x = tape.constant(batch.node_x[i].clone());
        let y = linear(tape, p, layout.embed[i], x)?;
        h[i] = Some(tape.relu(y));
        debug_assert_eq!(tape.shape(h[i].unwrap()).0, batch.node_x[i].rows(), "{kind:?}");
    }
    let mut h = h.map(|v| v.expect("embedded"));
    let edge_x: Vec<Var> = RELATIONS
        .iter()
        .zip(&batch.relations)
        .map(|(r, e)| {
            let t = Tensor::from_vec(e.src.len(), r.edge_features(), e.features.clone()).expect("edge features");
            tape.constant(t)
        })
        .collect();

    for round in &layout.rounds {
        let mut next = [None::<Var>; 3];
        for (i, kind) in KINDS.iter().enumerate() {
            let mut acc = linear(tape, p, round.update[i], h[i])?;
            let rows = batch.node_x[i].rows();
            for (r, rel) in RELATIONS.iter().enumerate() {
                if rel.dst() != *kind {
                    continue;
                }
                let edges = &batch.relations[r];
                let src_h = h[KINDS.iter().position(|k| *k == rel.src()).expect("kind")];
                let gathered = tape.gather_rows(src_h, &edges.src)?;
                let msg_in = tape.concat_cols(&[gathered, edge_x[r]])?;
                let mean = tape.segment_mean(msg_in, &edges.dst, rows)?;
                let msg = tape.matmul(mean, p[round.message[r]])?;
                acc = tape.add(acc, msg)?;
            }
            next[i] = Some(tape.relu(acc));
        }
        h = next.map(|v| v.expect("updated"));
    }

    let job_pool = tape.segment_mean(h[0], &batch.job_graph, batch.graphs)?;
    let machine_pool = tape.segment_mean(h[1], &batch.machine_graph, batch.graphs)?;
    let globals = tape.constant(batch.globals.clone());
    let pooled = tape.concat_cols(&[job_pool, machine_pool, globals])?;
    Ok(Encoded { jobs: h[0], machines: h[1], setups: h[2], pooled })
}

/// Encoder plus heads: per-graph log-probabilities over the candidates and
/// a state value per graph.
pub fn forward(tape: &mut Tape, params: &PolicyParams, p: &[Var], batch: &GraphBatch) -> Result<Heads> {
    let layout = Layout::new(&params.config);
    let encoded = encode(tape, params, p, batch)?;
    let mut parts = Vec::new();

    if !batch.pair_job.is_empty() {
        let hj = tape.gather_rows(encoded.jobs, &batch.pair_job)?;
        let hm = tape.gather_rows(encoded.machines, &batch.pair_machine)?;
        let ex = tape.constant(batch.pair_x.clone());
        let a = tape.matmul(hj, p[layout.pair_in[0]])?;
        let b = tape.matmul(hm, p[layout.pair_in[1]])?;
        let c = tape.matmul(ex, p[layout.pair_in[2]])?;
        let ab = tape.add(a, b)?;
        let abc = tape.add(ab, c)?;
        let mut x = tape.add_row(abc, p[layout.pair_in_bias])?;
        if !layout.pair_rest.layers.is_empty() {
            x = tape.relu(x);
            x = mlp(tape, p, &layout.pair_rest, x)?;
        }
        parts.push(x);
    }
    if !batch.wait_graphs.is_empty() {
        let pooled = tape.gather_rows(encoded.pooled, &batch.wait_graphs)?;
        parts.push(mlp(tape, p, &layout.wait, pooled)?);
    }
    let logits = tape.concat_rows(&parts)?;
    let ordered = tape.gather_rows(logits, &batch.order)?;
    let log_probs = tape.segment_log_softmax(ordered, &batch.offsets)?;
    let values = mlp(tape, p, &layout.value, encoded.pooled)?;
    Ok(Heads { encoded, log_probs, values })
}

/// Distribution over the feasible actions of one state (same order as
/// `actions.actions`) and the state value.
pub fn act_distribution(params: &PolicyParams, graph: &HeteroGraph, actions: &ActionSet) -> Result<(Vec<f64>, f64)> {
    let batch = GraphBatch::single(graph, actions)?;
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let heads = forward(&mut tape, params, &p, &batch)?;
    let probs = tape.value(heads.log_probs).data().iter().map(|l| l.exp()).collect();
    Ok((probs, tape.value(heads.values).item()))
}

/// Dense distribution over all `n·m` pairs (job-major) followed by Wait, with
/// exact zeros on infeasible entries, and the state value.
pub fn policy_value(
    params: &PolicyParams,
    graph: &HeteroGraph,
    actions: &ActionSet,
    n: usize,
    m: usize,
) -> Result<(Vec<f64>, f64)> {
    if actions.actions.is_empty() {
        return Err(NnError::Empty("every action is masked".into()));
    }
    let (probs, value) = act_distribution(params, graph, actions)?;
    let mut dense = vec![0.0; n * m + 1];
    for (a, p) in actions.actions.iter().zip(probs) {
        dense[a.index(n, m)] = p;
    }
    Ok((dense, value))
}
