//! PaiNN-style message passing over the periodic multigraph.
//!
//! Each atom carries H scalar channels and H vector channels. Vector
//! channels are stored as a 3N×H matrix whose row blocks hold the x, y and z
//! components (rows `k·N + i`). Every block runs a message pass over the
//! surface edge set, a second over all edges, then a gated update. Edge
//! filters combine the Gaussian radial basis (with envelope) and Fourier
//! features of the fractional edge displacement, both rotation invariant.
//!
//! Parameter count for hidden H, layers L, basis size R, frequencies K,
//! time dimension D and Z_max elements (F = R + 6K):
//!
//! ```text
//! Z_max·H + H + (H² + H + 1)
//!   + L·[ D·H + H
//!         + 2·(H² + H + 3H² + 3H + 3F·H)
//!         + 2H² + 2H² + H + 3H² + 3H ]
//! ```
//! (embedding, readout, classifier head, then per block: time map, two
//! message passes and the update).

use std::collections::BTreeMap;
use std::rc::Rc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::features::{fourier_frac_features, rbf_expand, time_embedding};
use super::params::{ParameterSet, Tensor};
use super::tape::{logistic, Tape, Var};
use crate::bridge::{BridgeSchedule, Denoiser};
use crate::error::{Error, Result};
use crate::geometry::{build_neighbor_multigraph, wrap_into_cell, Structure, Vec3};

/// Edge set used by the first message pass of every block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceMode {
    /// Both endpoints are non-adsorbate atoms.
    Slab,
    /// Both endpoints are non-adsorbate atoms within 1 Å of the highest one.
    TopLayer,
}

impl std::str::FromStr for SurfaceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "slab" => Ok(SurfaceMode::Slab),
            "top_layer" | "toplayer" | "top" => Ok(SurfaceMode::TopLayer),
            other => Err(Error::Config(format!("unknown surface mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for SurfaceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SurfaceMode::Slab => "slab",
            SurfaceMode::TopLayer => "top_layer",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    L1,
    L2,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(LossKind::L1),
            "l2" => Ok(LossKind::L2),
            other => Err(Error::Config(format!("unknown loss type '{other}'"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub cutoff: f64,
    pub hidden: usize,
    pub layers: usize,
    pub num_rbf: usize,
    pub n_frequencies: usize,
    pub envelope_exponent: u32,
    pub out_channels: usize,
    pub max_atomic_number: u32,
    pub time_embed_dim: usize,
    pub surface_mode: SurfaceMode,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            cutoff: 4.0,
            hidden: 64,
            layers: 3,
            num_rbf: 32,
            n_frequencies: 8,
            envelope_exponent: 5,
            out_channels: 3,
            max_atomic_number: crate::elements::MAX_ATOMIC_NUMBER,
            time_embed_dim: 16,
            surface_mode: SurfaceMode::Slab,
        }
    }
}

impl DenoiserConfig {
    /// Full-size network: 256 channels, 4 layers, 256 radial bases, 40 frequencies.
    pub fn full_scale() -> Self {
        DenoiserConfig {
            hidden: 256,
            layers: 4,
            num_rbf: 256,
            n_frequencies: 40,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden == 0 {
            return bad("hidden must be > 0".into());
        }
        if self.layers == 0 {
            return bad("layers must be >= 1".into());
        }
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            return bad(format!("cutoff must be > 0, got {}", self.cutoff));
        }
        if self.num_rbf == 0 {
            return bad("num_rbf must be > 0".into());
        }
        if self.out_channels != 3 {
            return bad(format!("out_channels must be 3, got {}", self.out_channels));
        }
        if self.time_embed_dim == 0 || !self.time_embed_dim.is_multiple_of(2) {
            return bad(format!(
                "time_embed_dim must be even and > 0, got {}",
                self.time_embed_dim
            ));
        }
        if self.max_atomic_number == 0 {
            return bad("max_atomic_number must be > 0".into());
        }
        Ok(())
    }

    pub fn edge_feature_dim(&self) -> usize {
        self.num_rbf + 6 * self.n_frequencies
    }

    /// Names and shapes of every parameter, sorted by name.
    pub fn parameter_shapes(&self) -> Vec<(String, usize, usize)> {
        let h = self.hidden;
        let f = self.edge_feature_dim();
        let mut v: Vec<(String, usize, usize)> = vec![
            ("embed.w".into(), self.max_atomic_number as usize, h),
            ("readout.w".into(), h, 1),
            ("classifier.mlp1.w".into(), h, h),
            ("classifier.mlp1.b".into(), 1, h),
            ("classifier.mlp2.w".into(), h, 1),
            ("classifier.out.b".into(), 1, 1),
        ];
        for l in 0..self.layers {
            let p = format!("block{l}");
            v.push((format!("{p}.time.w"), self.time_embed_dim, h));
            v.push((format!("{p}.time.b"), 1, h));
            for pass in ["surface", "all"] {
                v.push((format!("{p}.{pass}.phi1.w"), h, h));
                v.push((format!("{p}.{pass}.phi1.b"), 1, h));
                v.push((format!("{p}.{pass}.phi2.w"), h, 3 * h));
                v.push((format!("{p}.{pass}.phi2.b"), 1, 3 * h));
                v.push((format!("{p}.{pass}.filter.w"), f, 3 * h));
            }
            v.push((format!("{p}.update.u.w"), h, h));
            v.push((format!("{p}.update.v.w"), h, h));
            v.push((format!("{p}.update.mlp1.w"), 2 * h, h));
            v.push((format!("{p}.update.mlp1.b"), 1, h));
            v.push((format!("{p}.update.mlp2.w"), h, 3 * h));
            v.push((format!("{p}.update.mlp2.b"), 1, 3 * h));
        }
        v.sort();
        v
    }
}

/// Closed-form parameter count (see module docs).
pub fn parameter_count(config: &DenoiserConfig) -> usize {
    let h = config.hidden;
    let f = config.edge_feature_dim();
    let d = config.time_embed_dim;
    let z = config.max_atomic_number as usize;
    let per_pass = h * h + h + 3 * h * h + 3 * h + 3 * f * h;
    let update = 2 * h * h + 2 * h * h + h + 3 * h * h + 3 * h;
    z * h + h + (h * h + h + h + 1) + config.layers * (d * h + h + 2 * per_pass + update)
}

/// Scalar features (N×H) and vector features (3N×H, component-major blocks).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub scalar: Array2<f64>,
    pub vector: Array2<f64>,
}

impl NodeState {
    pub fn num_atoms(&self) -> usize {
        self.scalar.nrows()
    }

    /// Vector channel `c` of atom `i`.
    pub fn vector_of(&self, i: usize, c: usize) -> Vec3 {
        let n = self.num_atoms();
        Vec3::new(
            self.vector[(i, c)],
            self.vector[(n + i, c)],
            self.vector[(2 * n + i, c)],
        )
    }
}

#[derive(Debug)]
struct EdgeSet {
    src: Rc<Vec<usize>>,
    dst: Rc<Vec<usize>>,
    src3: Rc<Vec<usize>>,
    dst3: Rc<Vec<usize>>,
    unit3: Rc<Vec<f64>>,
    feats: Array2<f64>,
}

impl EdgeSet {
    fn len(&self) -> usize {
        self.src.len()
    }
}

/// Several structures packed as one disconnected graph.
#[derive(Debug)]
pub struct GraphBatch {
    n: usize,
    offsets: Vec<usize>,
    species: Rc<Vec<usize>>,
    time: Array2<f64>,
    graph_of: Rc<Vec<usize>>,
    surface: EdgeSet,
    all: EdgeSet,
}

impl GraphBatch {
    pub fn num_atoms(&self) -> usize {
        self.n
    }

    pub fn num_graphs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> (usize, usize) {
        (self.surface.len(), self.all.len())
    }

    /// Build from structures and their m_t values; positions are wrapped first.
    pub fn new(items: &[(&Structure, f64)], config: &DenoiserConfig) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let n: usize = items.iter().map(|(s, _)| s.len()).sum();
        let fdim = config.edge_feature_dim();
        let mut offsets = vec![0];
        let mut species = Vec::with_capacity(n);
        let mut time = Array2::zeros((n, config.time_embed_dim));
        let mut graph_of = Vec::with_capacity(n);
        let mut raw: [Vec<(usize, usize, Vec3, Vec<f64>)>; 2] = [Vec::new(), Vec::new()];
        for (g, (s, m_t)) in items.iter().enumerate() {
            s.validate()?;
            let base = *offsets.last().unwrap();
            let emb = time_embedding(*m_t, config.time_embed_dim);
            for (i, &z) in s.atomic_numbers.iter().enumerate() {
                if z == 0 || z > config.max_atomic_number {
                    return Err(Error::ElementOutsideTable(z));
                }
                species.push(z as usize - 1);
                graph_of.push(g);
                for (k, e) in emb.iter().enumerate() {
                    time[(base + i, k)] = *e;
                }
            }
            let wrapped = wrap_into_cell(s);
            let graph = build_neighbor_multigraph(&wrapped, config.cutoff)?;
            let in_surface = surface_mask(&wrapped, config.surface_mode);
            for e in &graph.edges {
                let r = e.unit * e.distance;
                let frac = wrapped.lattice.to_frac(&r);
                let mut feat = rbf_expand(e.distance, config.cutoff, config.num_rbf, config.envelope_exponent)?;
                let env = super::features::envelope(e.distance / config.cutoff, config.envelope_exponent);
                feat.extend(
                    fourier_frac_features([frac.x, frac.y, frac.z], config.n_frequencies)
                        .into_iter()
                        .map(|v| v * env),
                );
                debug_assert_eq!(feat.len(), fdim);
                let rec = (base + e.i, base + e.j, e.unit, feat);
                if in_surface[e.i] && in_surface[e.j] {
                    raw[0].push(rec.clone());
                }
                raw[1].push(rec);
            }
            offsets.push(base + s.len());
        }
        let [surf_raw, all_raw] = raw;
        Ok(GraphBatch {
            n,
            offsets,
            species: Rc::new(species),
            time,
            graph_of: Rc::new(graph_of),
            surface: edge_set(surf_raw, n, fdim),
            all: edge_set(all_raw, n, fdim),
        })
    }
}

fn surface_mask(s: &Structure, mode: SurfaceMode) -> Vec<bool> {
    match mode {
        SurfaceMode::Slab => s.adsorbate.iter().map(|&a| !a).collect(),
        SurfaceMode::TopLayer => {
            let top = (0..s.len())
                .filter(|&i| !s.adsorbate[i])
                .map(|i| s.positions[i].z)
                .fold(f64::NEG_INFINITY, f64::max);
            (0..s.len())
                .map(|i| !s.adsorbate[i] && s.positions[i].z >= top - 1.0)
                .collect()
        }
    }
}

fn edge_set(raw: Vec<(usize, usize, Vec3, Vec<f64>)>, n: usize, fdim: usize) -> EdgeSet {
    let e = raw.len();
    let mut src = Vec::with_capacity(e);
    let mut dst = Vec::with_capacity(e);
    let mut unit3 = vec![0.0; 3 * e];
    let mut feats = Array2::zeros((e, fdim));
    for (k, (i, j, u, f)) in raw.into_iter().enumerate() {
        dst.push(i);
        src.push(j);
        for c in 0..3 {
            unit3[c * e + k] = u[c];
        }
        for (col, v) in f.into_iter().enumerate() {
            feats[(k, col)] = v;
        }
    }
    let tri = |idx: &[usize]| -> Vec<usize> { (0..3).flat_map(|c| idx.iter().map(move |&x| c * n + x)).collect() };
    EdgeSet {
        src3: Rc::new(tri(&src)),
        dst3: Rc::new(tri(&dst)),
        src: Rc::new(src),
        dst: Rc::new(dst),
        unit3: Rc::new(unit3),
        feats,
    }
}

/// Per-forward tape state: parameter leaves and constant edge features.
struct Ctx<'a> {
    tape: Tape,
    vars: BTreeMap<&'a str, Var>,
    batch: &'a GraphBatch,
    feats: [Var; 2],
    hidden: usize,
}

impl<'a> Ctx<'a> {
    fn new(params: &'a ParameterSet, batch: &'a GraphBatch, hidden: usize) -> Self {
        let mut tape = Tape::new();
        let mut vars = BTreeMap::new();
        for (slot, (name, t)) in params.iter().enumerate() {
            vars.insert(name, tape.param(slot, t.to_array()));
        }
        let feats = [
            tape.constant(batch.surface.feats.clone()),
            tape.constant(batch.all.feats.clone()),
        ];
        Ctx {
            tape,
            vars,
            batch,
            feats,
            hidden,
        }
    }

    fn p(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter '{name}' missing"))
    }

    fn linear(&mut self, x: Var, prefix: &str) -> Var {
        let w = self.p(&format!("{prefix}.w"));
        let y = self.tape.matmul(x, w);
        let bias = format!("{prefix}.b");
        match self.vars.get(bias.as_str()) {
            Some(&b) => self.tape.add_row(y, b),
            None => y,
        }
    }

    fn embed(&mut self) -> (Var, Var) {
        let e = self.p("embed.w");
        let s = self.tape.gather(e, self.batch.species.clone());
        let v = self.tape.constant(Array2::zeros((3 * self.batch.n, self.hidden)));
        (s, v)
    }

    fn add_time(&mut self, s: Var, l: usize) -> Var {
        let t = self.tape.constant(self.batch.time.clone());
        let te = self.linear(t, &format!("block{l}.time"));
        self.tape.add(s, te)
    }

    fn message(&mut self, s: Var, v: Var, l: usize, pass: usize) -> (Var, Var) {
        let h = self.hidden;
        let name = if pass == 0 { "surface" } else { "all" };
        let prefix = format!("block{l}.{name}");
        let es = if pass == 0 {
            &self.batch.surface
        } else {
            &self.batch.all
        };
        let (src, dst, src3, dst3, unit3) = (
            es.src.clone(),
            es.dst.clone(),
            es.src3.clone(),
            es.dst3.clone(),
            es.unit3.clone(),
        );
        let n = self.batch.n;
        let x = self.linear(s, &format!("{prefix}.phi1"));
        let x = self.tape.silu(x);
        let phi = self.linear(x, &format!("{prefix}.phi2"));
        let filt_w = self.p(&format!("{prefix}.filter.w"));
        let filt = self.tape.matmul(self.feats[pass], filt_w);
        let phi_j = self.tape.gather(phi, src);
        let m = self.tape.mul(phi_j, filt);
        let a = self.tape.slice_cols(m, 0, h);
        let b = self.tape.slice_cols(m, h, h);
        let c = self.tape.slice_cols(m, 2 * h, h);
        let ds = self.tape.scatter_add(a, dst, n);
        let s = self.tape.add(s, ds);
        let v_j = self.tape.gather(v, src3);
        let b3 = self.tape.tile3(b);
        let bv = self.tape.mul(b3, v_j);
        let c3 = self.tape.tile3(c);
        let cu = self.tape.scale_rows(c3, unit3);
        let dv = self.tape.add(bv, cu);
        let dv = self.tape.scatter_add(dv, dst3, 3 * n);
        let v = self.tape.add(v, dv);
        (s, v)
    }

    fn update(&mut self, s: Var, v: Var, l: usize) -> (Var, Var) {
        let h = self.hidden;
        let prefix = format!("block{l}.update");
        let uv = self.linear(v, &format!("{prefix}.u"));
        let vv = self.linear(v, &format!("{prefix}.v"));
        let sq = self.tape.mul(vv, vv);
        let sq = self.tape.sum_blocks3(sq);
        let norm = self.tape.sqrt_eps(sq, 1e-8);
        let x = self.tape.concat_cols(s, norm);
        let x = self.linear(x, &format!("{prefix}.mlp1"));
        let x = self.tape.silu(x);
        let a = self.linear(x, &format!("{prefix}.mlp2"));
        let a_vv = self.tape.slice_cols(a, 0, h);
        let a_sv = self.tape.slice_cols(a, h, h);
        let a_ss = self.tape.slice_cols(a, 2 * h, h);
        let gate = self.tape.tile3(a_vv);
        let dv = self.tape.mul(gate, uv);
        let v = self.tape.add(v, dv);
        let inner = self.tape.mul(uv, vv);
        let inner = self.tape.sum_blocks3(inner);
        let ds = self.tape.mul(a_sv, inner);
        let ds = self.tape.add(ds, a_ss);
        let s = self.tape.add(s, ds);
        (s, v)
    }

    fn block(&mut self, s: Var, v: Var, l: usize) -> (Var, Var) {
        let (s, v) = self.message(s, v, l, 0);
        let (s, v) = self.message(s, v, l, 1);
        self.update(s, v, l)
    }

    fn encode(&mut self, layers: usize) -> (Var, Var) {
        let (mut s, mut v) = self.embed();
        for l in 0..layers {
            s = self.add_time(s, l);
            (s, v) = self.block(s, v, l);
        }
        (s, v)
    }

    fn classifier_logits(&mut self, s: Var) -> Var {
        let x = self.linear(s, "classifier.mlp1");
        let x = self.tape.silu(x);
        let w2 = self.p("classifier.mlp2.w");
        let per_atom = self.tape.matmul(x, w2);
        let pooled = self
            .tape
            .scatter_add(per_atom, self.batch.graph_of.clone(), self.batch.num_graphs());
        let b = self.p("classifier.out.b");
        self.tape.add_row(pooled, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Head {
    Displacement,
    Confidence,
}

/// A recorded forward evaluation. Attach a loss, then ask for gradients.
pub struct Trace {
    tape: Tape,
    out: Var,
    head: Head,
    offsets: Vec<usize>,
    loss: Option<Var>,
    names: Vec<(String, usize, usize)>,
}

impl Trace {
    /// Per-structure displacement predictions.
    pub fn predictions(&self) -> Result<Vec<Vec<Vec3>>> {
        if self.head != Head::Displacement {
            return Err(Error::InvalidArgument("trace holds classifier logits".into()));
        }
        let out = self.tape.value(self.out);
        let n = *self.offsets.last().unwrap();
        Ok(self
            .offsets
            .windows(2)
            .map(|w| {
                (w[0]..w[1])
                    .map(|i| Vec3::new(out[(i, 0)], out[(n + i, 0)], out[(2 * n + i, 0)]))
                    .collect()
            })
            .collect())
    }

    /// Per-structure classifier logits.
    pub fn logits(&self) -> Result<Vec<f64>> {
        if self.head != Head::Confidence {
            return Err(Error::InvalidArgument("trace holds displacement predictions".into()));
        }
        Ok(self.tape.value(self.out).column(0).to_vec())
    }

    /// Σ_i w_i·Σ_c loss(pred_ic − target_ic) over all structures, with one
    /// weight per atom. Returns the loss value.
    pub fn attach_regression_loss(
        &mut self,
        targets: &[Vec<Vec3>],
        weights: &[Vec<f64>],
        kind: LossKind,
    ) -> Result<f64> {
        if self.head != Head::Displacement {
            return Err(Error::InvalidArgument(
                "regression loss needs the displacement head".into(),
            ));
        }
        let n = *self.offsets.last().unwrap();
        if targets.len() != self.offsets.len() - 1 || weights.len() != targets.len() {
            return Err(Error::Shape("targets/weights do not match batch".into()));
        }
        let mut t = Array2::zeros((3 * n, 1));
        let mut w = Array2::zeros((3 * n, 1));
        for (g, (tg, wg)) in targets.iter().zip(weights).enumerate() {
            let base = self.offsets[g];
            if tg.len() != self.offsets[g + 1] - base || wg.len() != tg.len() {
                return Err(Error::Shape(format!(
                    "structure {g}: target rows differ from atom count"
                )));
            }
            for (i, (v, &wi)) in tg.iter().zip(wg).enumerate() {
                for c in 0..3 {
                    t[(c * n + base + i, 0)] = v[c];
                    w[(c * n + base + i, 0)] = wi;
                }
            }
        }
        let loss = match kind {
            LossKind::L1 => self.tape.weighted_l1(self.out, Rc::new(t), Rc::new(w)),
            LossKind::L2 => self.tape.weighted_l2(self.out, Rc::new(t), Rc::new(w)),
        };
        self.loss = Some(loss);
        Ok(self.tape.value(loss)[(0, 0)])
    }

    /// Weighted binary cross-entropy of the classifier logits.
    pub fn attach_bce_loss(&mut self, labels: &[f64], weights: &[f64]) -> Result<f64> {
        if self.head != Head::Confidence {
            return Err(Error::InvalidArgument("BCE loss needs the classifier head".into()));
        }
        if labels.len() != self.offsets.len() - 1 || weights.len() != labels.len() {
            return Err(Error::Shape("labels/weights do not match batch".into()));
        }
        let loss = self
            .tape
            .weighted_bce(self.out, Rc::new(labels.to_vec()), Rc::new(weights.to_vec()));
        self.loss = Some(loss);
        Ok(self.tape.value(loss)[(0, 0)])
    }

    /// Exact gradient of the attached loss, shaped like the parameters.
    pub fn gradient(&self) -> Result<ParameterSet> {
        let loss = self.loss.ok_or(Error::NoContext)?;
        let grads = self.tape.backward(loss, self.names.len())?;
        let mut out = ParameterSet::new();
        for ((name, r, c), g) in self.names.iter().zip(grads) {
            let t = match g {
                Some(a) => Tensor::from_array(&a),
                None => Tensor::zeros(*r, *c),
            };
            out.insert(name.clone(), t);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    pub config: DenoiserConfig,
    pub params: ParameterSet,
}

impl DenoiserModel {
    /// Fresh Glorot-initialised model.
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ParameterSet::glorot(&config.parameter_shapes(), seed);
        Ok(DenoiserModel { config, params })
    }

    pub fn from_parts(config: DenoiserConfig, params: ParameterSet) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config.parameter_shapes())?;
        Ok(DenoiserModel { config, params })
    }

    pub fn batch(&self, items: &[(&Structure, f64)]) -> Result<GraphBatch> {
        GraphBatch::new(items, &self.config)
    }

    /// Element embedding plus the first block's time term; zero vectors.
    pub fn embed_atoms(&self, structure: &Structure, t: usize, schedule: &BridgeSchedule) -> Result<NodeState> {
        let batch = self.batch(&[(structure, checked_m(schedule, t)?)])?;
        let mut ctx = Ctx::new(&self.params, &batch, self.config.hidden);
        let (s, v) = ctx.embed();
        let s = ctx.add_time(s, 0);
        Ok(NodeState {
            scalar: ctx.tape.value(s).clone(),
            vector: ctx.tape.value(v).clone(),
        })
    }

    /// Block `layer` applied to `state`. The time term of block `layer` is
    /// added at its input for layer > 0 (block 0's is part of `embed_atoms`).
    pub fn block_forward(
        &self,
        layer: usize,
        state: &NodeState,
        structure: &Structure,
        t: usize,
        schedule: &BridgeSchedule,
    ) -> Result<NodeState> {
        if layer >= self.config.layers {
            return Err(Error::InvalidArgument(format!(
                "block {layer} of {}",
                self.config.layers
            )));
        }
        let n = structure.len();
        let h = self.config.hidden;
        if state.scalar.dim() != (n, h) || state.vector.dim() != (3 * n, h) {
            return Err(Error::Shape(format!(
                "node state {:?}/{:?} for {n} atoms with {h} channels",
                state.scalar.dim(),
                state.vector.dim()
            )));
        }
        let batch = self.batch(&[(structure, checked_m(schedule, t)?)])?;
        let mut ctx = Ctx::new(&self.params, &batch, h);
        let mut s = ctx.tape.constant(state.scalar.clone());
        let v = ctx.tape.constant(state.vector.clone());
        if layer > 0 {
            s = ctx.add_time(s, layer);
        }
        let (s, v) = ctx.block(s, v, layer);
        Ok(NodeState {
            scalar: ctx.tape.value(s).clone(),
            vector: ctx.tape.value(v).clone(),
        })
    }

    /// Record a displacement-head evaluation over a batch.
    pub fn trace(&self, batch: &GraphBatch) -> Trace {
        let mut ctx = Ctx::new(&self.params, batch, self.config.hidden);
        let (_, v) = ctx.encode(self.config.layers);
        let w = ctx.p("readout.w");
        let out = ctx.tape.matmul(v, w);
        Trace {
            tape: ctx.tape,
            out,
            head: Head::Displacement,
            offsets: batch.offsets.clone(),
            loss: None,
            names: self.params.shapes(),
        }
    }

    /// Record a classifier-head evaluation over a batch.
    pub fn trace_classifier(&self, batch: &GraphBatch) -> Trace {
        let mut ctx = Ctx::new(&self.params, batch, self.config.hidden);
        let (s, _) = ctx.encode(self.config.layers);
        let out = ctx.classifier_logits(s);
        Trace {
            tape: ctx.tape,
            out,
            head: Head::Confidence,
            offsets: batch.offsets.clone(),
            loss: None,
            names: self.params.shapes(),
        }
    }

    /// ε prediction for `structure` with positions replaced by `x_t`.
    pub fn forward(
        &self,
        structure: &Structure,
        x_t: &[Vec3],
        t: usize,
        schedule: &BridgeSchedule,
    ) -> Result<Vec<Vec3>> {
        if x_t.len() != structure.len() {
            return Err(Error::Shape(format!(
                "{} positions for {} atoms",
                x_t.len(),
                structure.len()
            )));
        }
        let state = structure.with_positions(x_t.to_vec());
        let batch = self.batch(&[(&state, checked_m(schedule, t)?)])?;
        Ok(self.trace(&batch).predictions()?.pop().unwrap())
    }

    /// Confidence in (0, 1) that `structure` is a sound relaxed geometry.
    pub fn classifier_forward(&self, structure: &Structure) -> Result<f64> {
        Ok(self.classifier_batch(&[structure])?[0])
    }

    /// Confidences evaluated in chunks of 16 structures.
    pub fn classifier_batch(&self, structures: &[&Structure]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(structures.len());
        for chunk in structures.chunks(16) {
            let items: Vec<(&Structure, f64)> = chunk.iter().map(|s| (*s, 0.0)).collect();
            let batch = self.batch(&items)?;
            out.extend(self.trace_classifier(&batch).logits()?.into_iter().map(logistic));
        }
        Ok(out)
    }
}

fn checked_m(schedule: &BridgeSchedule, t: usize) -> Result<f64> {
    if t > schedule.num_timesteps() {
        return Err(Error::Schedule(format!(
            "timestep {t} outside [0, {}]",
            schedule.num_timesteps()
        )));
    }
    Ok(schedule.m(t))
}

impl Denoiser for DenoiserModel {
    fn predict(&self, state: &Structure, t: usize, schedule: &BridgeSchedule) -> Result<Vec<Vec3>> {
        self.forward(state, &state.positions, t, schedule)
    }
}
