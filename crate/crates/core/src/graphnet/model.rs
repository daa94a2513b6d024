use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoding::{InitialGraph, NodeFeatures, PositionalEncoderConfig, DESCRIPTOR_GEOMETRY};
use super::probs::DependencyProbabilities;
use crate::depgraph::DependencyGraph;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the loss.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_classes: usize,
    pub encoder: PositionalEncoderConfig,
    pub hidden: usize,
    pub latent: usize,
    pub heads: usize,
    pub decoder_hidden: usize,
    pub attention_slope: f64,
    pub decoder_slope: f64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_classes: 8,
            encoder: PositionalEncoderConfig {
                subdivisions: 1,
                ..Default::default()
            },
            hidden: 256,
            latent: 128,
            heads: 16,
            decoder_hidden: 128,
            attention_slope: 0.2,
            decoder_slope: 0.2,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn d_in(&self) -> usize {
        self.num_classes + DESCRIPTOR_GEOMETRY + self.encoder.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.hidden == 0 || self.latent == 0 || self.heads == 0 || self.decoder_hidden == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        Ok(())
    }
}

pub const TENSOR_NAMES: [&str; 10] = [
    "gat1.phi", "gat1.att", "gat1.root", "gat2.phi", "gat2.att", "gat2.root", "dec.w1", "dec.b1", "dec.w2", "dec.b2",
];

/// Learnable tensors. Per-head projections are stored side by side: column
/// block `h` of `gat1_phi` is head `h`'s `d_in × hidden` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub gat1_phi: Array2<f64>,
    pub gat1_att: Array2<f64>,
    /// Projection of a node's own features added to its attention output.
    pub gat1_root: Array2<f64>,
    pub gat2_phi: Array2<f64>,
    pub gat2_att: Array2<f64>,
    pub gat2_root: Array2<f64>,
    /// Rows `0..latent` act on `z_i`, the rest on `z_j`.
    pub dec_w1: Array2<f64>,
    pub dec_b1: Array2<f64>,
    pub dec_w2: Array2<f64>,
    pub dec_b2: Array2<f64>,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

impl ModelParams {
    pub fn shapes(config: &ModelConfig) -> [(usize, usize); 10] {
        let c = config;
        [
            (c.d_in(), c.heads * c.hidden),
            (c.heads, c.hidden),
            (c.d_in(), c.hidden),
            (c.hidden, c.heads * c.latent),
            (c.heads, c.latent),
            (c.hidden, c.latent),
            (2 * c.latent, c.decoder_hidden),
            (1, c.decoder_hidden),
            (c.decoder_hidden, 1),
            (1, 1),
        ]
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        let sh = Self::shapes(config);
        ModelParams {
            config: config.clone(),
            gat1_phi: Array2::zeros(sh[0]),
            gat1_att: Array2::zeros(sh[1]),
            gat1_root: Array2::zeros(sh[2]),
            gat2_phi: Array2::zeros(sh[3]),
            gat2_att: Array2::zeros(sh[4]),
            gat2_root: Array2::zeros(sh[5]),
            dec_w1: Array2::zeros(sh[6]),
            dec_b1: Array2::zeros(sh[7]),
            dec_w2: Array2::zeros(sh[8]),
            dec_b2: Array2::zeros(sh[9]),
        }
    }

    /// Glorot-uniform weights, zero biases, seeded by `config.init_seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mut rng = ChaCha8Rng::seed_from_u64(c.init_seed);
        let mut p = Self::zeros(c);
        p.gat1_phi = glorot(&mut rng, c.d_in(), c.heads * c.hidden, c.d_in(), c.hidden);
        p.gat1_att = glorot(&mut rng, c.heads, c.hidden, c.hidden, 1);
        p.gat2_phi = glorot(&mut rng, c.hidden, c.heads * c.latent, c.hidden, c.latent);
        p.gat2_att = glorot(&mut rng, c.heads, c.latent, c.latent, 1);
        p.gat1_root = glorot(&mut rng, c.d_in(), c.hidden, c.d_in(), c.hidden);
        p.gat2_root = glorot(&mut rng, c.hidden, c.latent, c.hidden, c.latent);
        p.dec_w1 = glorot(&mut rng, 2 * c.latent, c.decoder_hidden, 2 * c.latent, c.decoder_hidden);
        p.dec_w2 = glorot(&mut rng, c.decoder_hidden, 1, c.decoder_hidden, 1);
        Ok(p)
    }

    pub fn tensors(&self) -> [&Array2<f64>; 10] {
        [
            &self.gat1_phi,
            &self.gat1_att,
            &self.gat1_root,
            &self.gat2_phi,
            &self.gat2_att,
            &self.gat2_root,
            &self.dec_w1,
            &self.dec_b1,
            &self.dec_w2,
            &self.dec_b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Array2<f64>; 10] {
        [
            &mut self.gat1_phi,
            &mut self.gat1_att,
            &mut self.gat1_root,
            &mut self.gat2_phi,
            &mut self.gat2_att,
            &mut self.gat2_root,
            &mut self.dec_w1,
            &mut self.dec_b1,
            &mut self.dec_w2,
            &mut self.dec_b2,
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn check_shapes(&self) -> Result<()> {
        for ((t, want), name) in self.tensors().iter().zip(Self::shapes(&self.config)).zip(TENSOR_NAMES) {
            if t.dim() != want {
                return Err(Error::InvalidArgument(format!(
                    "tensor {name} has shape {:?}, expected {want:?}",
                    t.dim()
                )));
            }
        }
        Ok(())
    }
}

#[inline]
fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Which neighbours each node attends to, besides itself.
#[derive(Clone, Copy)]
enum Neighbours<'a> {
    All,
    Mask(&'a Array2<bool>),
}

impl Neighbours<'_> {
    #[inline]
    fn allows(&self, i: usize, j: usize) -> bool {
        i == j
            || match self {
                Neighbours::All => true,
                Neighbours::Mask(m) => m[(i, j)],
            }
    }
}

/// Attention coefficients of one layer; block `g` holds `heads × n × n` values
/// for segment `g` in row-major `[h][i][j]` order.
#[derive(Debug, Clone)]
pub struct Attention {
    pub heads: usize,
    pub blocks: Vec<Vec<f64>>,
}

impl Attention {
    /// `α_ij` for head `h` in segment `g` (local indices).
    pub fn get(&self, g: usize, h: usize, i: usize, j: usize) -> f64 {
        let n = ((self.blocks[g].len() / self.heads) as f64).sqrt().round() as usize;
        self.blocks[g][(h * n + i) * n + j]
    }
}

/// Per-head attention over projected features `p` (rows × heads·f); returns
/// the head-averaged messages.
fn attention_forward(
    p: &Array2<f64>,
    att: &Array2<f64>,
    f: usize,
    slope: f64,
    segs: &[Range<usize>],
    nb: Neighbours,
) -> (Array2<f64>, Attention) {
    let heads = att.nrows();
    let w = heads * f;
    let ps = p.as_slice().expect("standard layout");
    let at = att.as_slice().expect("standard layout");
    let mut out = Array2::<f64>::zeros((p.nrows(), f));
    let os = out.as_slice_mut().unwrap();
    let inv_h = 1.0 / heads as f64;
    let mut blocks = Vec::with_capacity(segs.len());
    for seg in segs {
        let n = seg.len();
        let mut alpha = vec![0.0; heads * n * n];
        let mut e = vec![0.0; n];
        for h in 0..heads {
            let a = &at[h * f..(h + 1) * f];
            for li in 0..n {
                let i = seg.start + li;
                let pi = &ps[i * w + h * f..i * w + (h + 1) * f];
                let mut max = f64::NEG_INFINITY;
                for lj in 0..n {
                    if !nb.allows(li, lj) {
                        continue;
                    }
                    let j = seg.start + lj;
                    let pj = &ps[j * w + h * f..j * w + (h + 1) * f];
                    let mut acc = 0.0;
                    for k in 0..f {
                        acc += a[k] * leaky(pi[k] + pj[k], slope);
                    }
                    e[lj] = acc;
                    max = max.max(acc);
                }
                let row = &mut alpha[(h * n + li) * n..(h * n + li + 1) * n];
                let mut sum = 0.0;
                for lj in 0..n {
                    if nb.allows(li, lj) {
                        row[lj] = (e[lj] - max).exp();
                        sum += row[lj];
                    }
                }
                for lj in 0..n {
                    row[lj] /= sum;
                }
                let oi = &mut os[i * f..(i + 1) * f];
                for lj in 0..n {
                    let c = row[lj] * inv_h;
                    if c == 0.0 {
                        continue;
                    }
                    let j = seg.start + lj;
                    let pj = &ps[j * w + h * f..j * w + (h + 1) * f];
                    for k in 0..f {
                        oi[k] += c * pj[k];
                    }
                }
            }
        }
        blocks.push(alpha);
    }
    (out, Attention { heads, blocks })
}

/// Gradients of [`attention_forward`] with respect to `p` and `att`.
fn attention_backward(
    p: &Array2<f64>,
    att: &Array2<f64>,
    f: usize,
    slope: f64,
    segs: &[Range<usize>],
    nb: Neighbours,
    alpha: &Attention,
    dout: &Array2<f64>,
    datt: &mut Array2<f64>,
) -> Array2<f64> {
    let heads = att.nrows();
    let w = heads * f;
    let ps = p.as_slice().unwrap();
    let at = att.as_slice().unwrap();
    let ds = dout.as_slice().unwrap();
    let mut dp = Array2::<f64>::zeros(p.dim());
    let dps = dp.as_slice_mut().unwrap();
    let das = datt.as_slice_mut().unwrap();
    let inv_h = 1.0 / heads as f64;
    let mut dalpha = Vec::new();
    let mut dpi = vec![0.0; f];
    for (g, seg) in segs.iter().enumerate() {
        let n = seg.len();
        let block = &alpha.blocks[g];
        dalpha.resize(n, 0.0);
        for h in 0..heads {
            let a = &at[h * f..(h + 1) * f];
            for li in 0..n {
                let i = seg.start + li;
                let row = &block[(h * n + li) * n..(h * n + li + 1) * n];
                let di = &ds[i * f..(i + 1) * f];
                let mut weighted = 0.0;
                for lj in 0..n {
                    if !nb.allows(li, lj) {
                        dalpha[lj] = 0.0;
                        continue;
                    }
                    let j = seg.start + lj;
                    let pj = &ps[j * w + h * f..j * w + (h + 1) * f];
                    let mut acc = 0.0;
                    for k in 0..f {
                        acc += di[k] * pj[k];
                    }
                    dalpha[lj] = acc * inv_h;
                    weighted += row[lj] * dalpha[lj];
                    // message path: out_i += α_ij / H · p_j
                    let c = row[lj] * inv_h;
                    let dpj = &mut dps[j * w + h * f..j * w + (h + 1) * f];
                    for k in 0..f {
                        dpj[k] += c * di[k];
                    }
                }
                dpi.iter_mut().for_each(|v| *v = 0.0);
                let pi: Vec<f64> = ps[i * w + h * f..i * w + (h + 1) * f].to_vec();
                for lj in 0..n {
                    if !nb.allows(li, lj) {
                        continue;
                    }
                    let de = row[lj] * (dalpha[lj] - weighted);
                    if de == 0.0 {
                        continue;
                    }
                    let j = seg.start + lj;
                    for k in 0..f {
                        let sk = pi[k] + ps[j * w + h * f + k];
                        das[h * f + k] += de * leaky(sk, slope);
                        let d = de * a[k] * leaky_grad(sk, slope);
                        dpi[k] += d;
                        dps[j * w + h * f + k] += d;
                    }
                }
                let dpi_dst = &mut dps[i * w + h * f..i * w + (h + 1) * f];
                for k in 0..f {
                    dpi_dst[k] += dpi[k];
                }
            }
        }
    }
    dp
}

/// One attention layer applied to a single graph with an explicit edge list;
/// returns the layer output and the attention coefficients.
pub fn gat_layer(
    features: &Array2<f64>,
    edges: &[(usize, usize)],
    phi: &Array2<f64>,
    att: &Array2<f64>,
    slope: f64,
) -> Result<(Array2<f64>, Attention)> {
    let n = features.nrows();
    let heads = att.nrows();
    if heads == 0 || phi.nrows() != features.ncols() || phi.ncols() != heads * att.ncols() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: features {:?}, phi {:?}, att {:?}",
            features.dim(),
            phi.dim(),
            att.dim()
        )));
    }
    let mut mask = Array2::from_elem((n, n), false);
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(Error::InvalidArgument(format!("edge ({i}, {j}) out of range")));
        }
        mask[(i, j)] = true;
    }
    let p = features.dot(phi);
    Ok(attention_forward(
        &p,
        att,
        att.ncols(),
        slope,
        &[0..n],
        Neighbours::Mask(&mask),
    ))
}

/// Intermediate values of one forward pass over a batch of graphs.
pub struct ForwardCache {
    segs: Vec<Range<usize>>,
    x: Array2<f64>,
    p1: Array2<f64>,
    alpha1: Attention,
    o1: Array2<f64>,
    a1: Array2<f64>,
    p2: Array2<f64>,
    alpha2: Attention,
    pub z: Array2<f64>,
    u: Array2<f64>,
    v: Array2<f64>,
    /// Per segment, `n × n` probabilities (diagonal zero).
    pub rho: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn attention(&self) -> (&Attention, &Attention) {
        (&self.alpha1, &self.alpha2)
    }
}

/// Stacks node features of several graphs into one block-diagonal batch.
pub fn stack(graphs: &[&NodeFeatures]) -> (Array2<f64>, Vec<Range<usize>>) {
    let total: usize = graphs.iter().map(|g| g.n()).sum();
    let d = graphs.first().map_or(0, |g| g.dim());
    let mut x = Array2::zeros((total, d));
    let mut segs = Vec::with_capacity(graphs.len());
    let mut at = 0;
    for g in graphs {
        x.slice_mut(s![at..at + g.n(), ..]).assign(&g.rows);
        segs.push(at..at + g.n());
        at += g.n();
    }
    (x, segs)
}

fn check_input(params: &ModelParams, x: &ArrayView2<f64>) -> Result<()> {
    if x.ncols() != params.config.d_in() {
        return Err(Error::InvalidArgument(format!(
            "feature width {} does not match model input {}",
            x.ncols(),
            params.config.d_in()
        )));
    }
    Ok(())
}

/// Encoder and decoder over a batch of graphs.
pub fn forward(params: &ModelParams, x: Array2<f64>, segs: Vec<Range<usize>>) -> Result<ForwardCache> {
    check_input(params, &x.view())?;
    let c = &params.config;
    let p1 = x.dot(&params.gat1_phi);
    let (mut o1, alpha1) = attention_forward(&p1, &params.gat1_att, c.hidden, c.attention_slope, &segs, Neighbours::All);
    o1 += &x.dot(&params.gat1_root);
    let a1 = o1.mapv(elu);
    let p2 = a1.dot(&params.gat2_phi);
    let (mut z, alpha2) = attention_forward(&p2, &params.gat2_att, c.latent, c.attention_slope, &segs, Neighbours::All);
    z += &a1.dot(&params.gat2_root);
    let u = z.dot(&params.dec_w1.slice(s![..c.latent, ..]));
    let v = z.dot(&params.dec_w1.slice(s![c.latent.., ..]));
    let rho = decode_blocks(params, &u, &v, &segs);
    Ok(ForwardCache {
        segs,
        x,
        p1,
        alpha1,
        o1,
        a1,
        p2,
        alpha2,
        z,
        u,
        v,
        rho,
    })
}

fn decode_blocks(params: &ModelParams, u: &Array2<f64>, v: &Array2<f64>, segs: &[Range<usize>]) -> Vec<Array2<f64>> {
    let slope = params.config.decoder_slope;
    let hd = params.config.decoder_hidden;
    let b1 = params.dec_b1.as_slice().unwrap();
    let w2 = params.dec_w2.as_slice().unwrap();
    let b2 = params.dec_b2[(0, 0)];
    let us = u.as_slice().unwrap();
    let vs = v.as_slice().unwrap();
    segs.iter()
        .map(|seg| {
            let n = seg.len();
            let mut rho = Array2::zeros((n, n));
            for li in 0..n {
                let ui = &us[(seg.start + li) * hd..(seg.start + li + 1) * hd];
                for lj in 0..n {
                    if li == lj {
                        continue;
                    }
                    let vj = &vs[(seg.start + lj) * hd..(seg.start + lj + 1) * hd];
                    let mut logit = b2;
                    for k in 0..hd {
                        logit += w2[k] * leaky(ui[k] + vj[k] + b1[k], slope);
                    }
                    rho[(li, lj)] = sigmoid(logit);
                }
            }
            rho
        })
        .collect()
}

/// Latent node features of one graph.
pub fn encode(params: &ModelParams, graph: &InitialGraph) -> Result<Array2<f64>> {
    let n = graph.n();
    Ok(forward(params, graph.features.rows.clone(), vec![0..n])?.z)
}

/// Edge probabilities from latent node features.
pub fn decode_edges(params: &ModelParams, z: &Array2<f64>) -> Result<DependencyProbabilities> {
    let c = &params.config;
    if z.ncols() != c.latent {
        return Err(Error::InvalidArgument(format!(
            "latent width {} does not match {}",
            z.ncols(),
            c.latent
        )));
    }
    let u = z.dot(&params.dec_w1.slice(s![..c.latent, ..]));
    let v = z.dot(&params.dec_w1.slice(s![c.latent.., ..]));
    let rho = decode_blocks(params, &u, &v, &[0..z.nrows()]).pop().unwrap();
    DependencyProbabilities::new(rho)
}

/// Dependency probabilities for one scene.
pub fn predict(params: &ModelParams, graph: &InitialGraph) -> Result<DependencyProbabilities> {
    let n = graph.n();
    let cache = forward(params, graph.features.rows.clone(), vec![0..n])?;
    DependencyProbabilities::new(cache.rho.into_iter().next().unwrap())
}

/// Weighted binary cross-entropy of one graph, averaged over ordered pairs,
/// with the derivative of that mean with respect to each logit.
fn bce_block(rho: &Array2<f64>, truth: &Array2<f64>, pos_weight: f64) -> (f64, Array2<f64>, usize) {
    let n = rho.nrows();
    let m = (n * (n - 1)) as f64;
    let mut loss = 0.0;
    let mut clamped = 0;
    let mut dlogit = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (r, y) = (rho[(i, j)], truth[(i, j)]);
            let rc = r.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            loss -= pos_weight * y * rc.ln() + (1.0 - y) * (1.0 - rc).ln();
            if rc != r {
                clamped += 1;
            } else {
                dlogit[(i, j)] = (-pos_weight * y * (1.0 - r) + (1.0 - y) * r) / m;
            }
        }
    }
    (loss / m, dlogit, clamped)
}

/// Mean binary cross-entropy between predicted probabilities and a graph's
/// adjacency over ordered pairs.
pub fn bce_loss(rho: &DependencyProbabilities, truth: &DependencyGraph) -> Result<f64> {
    if rho.n() != truth.n() {
        return Err(Error::InvalidArgument(format!(
            "probabilities for {} nodes, graph has {}",
            rho.n(),
            truth.n()
        )));
    }
    if rho.n() < 2 {
        return Ok(0.0);
    }
    let (loss, _, clamped) = bce_block(rho.matrix(), &truth.adjacency(), 1.0);
    if clamped > 0 {
        log::debug!("bce: {clamped} probabilities clamped to [{BCE_CLAMP}, {}]", 1.0 - BCE_CLAMP);
    }
    Ok(loss)
}

/// Batch loss (mean over graphs with at least two nodes) and its gradient,
/// accumulated into `grads`.
pub fn loss_and_gradient(
    params: &ModelParams,
    cache: &ForwardCache,
    truths: &[&Array2<f64>],
    pos_weight: f64,
    grads: &mut ModelParams,
) -> f64 {
    let c = &params.config;
    let counted = cache.segs.iter().filter(|s| s.len() >= 2).count();
    if counted == 0 {
        return 0.0;
    }
    let g_scale = 1.0 / counted as f64;
    let hd = c.decoder_hidden;
    let slope = c.decoder_slope;
    let b1 = params.dec_b1.as_slice().unwrap();
    let w2 = params.dec_w2.as_slice().unwrap();
    let us = cache.u.as_slice().unwrap();
    let vs = cache.v.as_slice().unwrap();

    let mut du = Array2::<f64>::zeros(cache.u.dim());
    let mut dv = Array2::<f64>::zeros(cache.v.dim());
    let mut total = 0.0;
    let mut clamped = 0;
    {
        let dus = du.as_slice_mut().unwrap();
        let dvs = dv.as_slice_mut().unwrap();
        let db1 = grads.dec_b1.as_slice_mut().unwrap();
        let dw2 = grads.dec_w2.as_slice_mut().unwrap();
        let mut db2 = 0.0;
        for (g, seg) in cache.segs.iter().enumerate() {
            if seg.len() < 2 {
                continue;
            }
            let (loss, dlogit, cl) = bce_block(&cache.rho[g], truths[g], pos_weight);
            total += loss * g_scale;
            clamped += cl;
            let n = seg.len();
            for li in 0..n {
                let i = seg.start + li;
                for lj in 0..n {
                    let dl = dlogit[(li, lj)] * g_scale;
                    if li == lj || dl == 0.0 {
                        continue;
                    }
                    let j = seg.start + lj;
                    db2 += dl;
                    for k in 0..hd {
                        let pre = us[i * hd + k] + vs[j * hd + k] + b1[k];
                        dw2[k] += dl * leaky(pre, slope);
                        let dpre = dl * w2[k] * leaky_grad(pre, slope);
                        db1[k] += dpre;
                        dus[i * hd + k] += dpre;
                        dvs[j * hd + k] += dpre;
                    }
                }
            }
        }
        grads.dec_b2[(0, 0)] += db2;
    }
    if clamped > 0 {
        log::debug!("bce: {clamped} probabilities clamped");
    }

    // decoder first layer
    let zt = cache.z.t();
    grads.dec_w1.slice_mut(s![..c.latent, ..]).scaled_add(1.0, &zt.dot(&du));
    grads.dec_w1.slice_mut(s![c.latent.., ..]).scaled_add(1.0, &zt.dot(&dv));
    let dz = du.dot(&params.dec_w1.slice(s![..c.latent, ..]).t()) + dv.dot(&params.dec_w1.slice(s![c.latent.., ..]).t());

    // second attention layer
    let dp2 = attention_backward(
        &cache.p2,
        &params.gat2_att,
        c.latent,
        c.attention_slope,
        &cache.segs,
        Neighbours::All,
        &cache.alpha2,
        &dz,
        &mut grads.gat2_att,
    );
    grads.gat2_phi.scaled_add(1.0, &cache.a1.t().dot(&dp2));
    grads.gat2_root.scaled_add(1.0, &cache.a1.t().dot(&dz));
    let mut do1 = dp2.dot(&params.gat2_phi.t()) + dz.dot(&params.gat2_root.t());
    do1.zip_mut_with(&cache.o1, |d, &o| *d *= elu_grad(o));

    // first attention layer
    let dp1 = attention_backward(
        &cache.p1,
        &params.gat1_att,
        c.hidden,
        c.attention_slope,
        &cache.segs,
        Neighbours::All,
        &cache.alpha1,
        &do1,
        &mut grads.gat1_att,
    );
    grads.gat1_phi.scaled_add(1.0, &cache.x.t().dot(&dp1));
    grads.gat1_root.scaled_add(1.0, &cache.x.t().dot(&do1));
    total
}

/// Batch loss without gradients.
pub fn batch_loss(cache: &ForwardCache, truths: &[&Array2<f64>], pos_weight: f64) -> f64 {
    let counted = cache.segs.iter().filter(|s| s.len() >= 2).count();
    if counted == 0 {
        return 0.0;
    }
    cache
        .segs
        .iter()
        .enumerate()
        .filter(|(_, s)| s.len() >= 2)
        .map(|(g, _)| bce_block(&cache.rho[g], truths[g], pos_weight).0)
        .sum::<f64>()
        / counted as f64
}

/// Row sums of every attention row, for diagnostics.
pub fn attention_row_sums(att: &Attention) -> Vec<f64> {
    att.blocks
        .iter()
        .flat_map(|b| {
            let n = ((b.len() / att.heads) as f64).sqrt().round() as usize;
            b.chunks(n.max(1)).map(|r| r.iter().sum::<f64>()).collect::<Vec<_>>()
        })
        .collect()
}
