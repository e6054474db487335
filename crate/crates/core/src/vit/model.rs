use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{HeadKind, ViTConfig};
use super::heads::{self, uniform_init, DenseIndex, DomainHeadIndex};
use super::params::{Binding, ParamGroup, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug)]
pub struct NormIndex {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl NormIndex {
    fn register(store: &mut ParamStore, prefix: &str, dim: usize) -> Self {
        NormIndex {
            gamma: store.add(
                format!("{prefix}.gamma"),
                ParamGroup::Encoder,
                Tensor::filled(&[dim], 1.0),
            ),
            beta: store.add(
                format!("{prefix}.beta"),
                ParamGroup::Encoder,
                Tensor::zeros(&[dim]),
            ),
        }
    }

    fn forward(&self, g: &mut Graph, b: &Binding, x: Var) -> Result<Var> {
        let n = g.layernorm(x);
        let s = g.mul_row(n, b.var(self.gamma))?;
        g.add_row(s, b.var(self.beta))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionIndex {
    pub query: DenseIndex,
    pub key: DenseIndex,
    pub value: DenseIndex,
    pub output: DenseIndex,
}

#[derive(Clone, Copy, Debug)]
pub struct BlockIndex {
    pub norm1: NormIndex,
    pub attn: AttentionIndex,
    pub norm2: NormIndex,
    pub fc1: DenseIndex,
    pub fc2: DenseIndex,
}

/// Positions of every named tensor inside the model's [`ParamStore`].
#[derive(Clone, Debug)]
pub struct ModelIndex {
    pub patch: DenseIndex,
    pub cls_token: ParamId,
    pub pos_embed: ParamId,
    pub blocks: Vec<BlockIndex>,
    pub norm: NormIndex,
    pub proj: DenseIndex,
    pub linear_head: DenseIndex,
    pub cosine_weights: ParamId,
    pub domain: DomainHeadIndex,
}

/// Encoder F with class token, plus linear, cosine and domain heads.
#[derive(Clone, Debug)]
pub struct ViTModel {
    pub cfg: ViTConfig,
    pub store: ParamStore,
    pub idx: ModelIndex,
}

/// Encoder output plus the attention maps (`[layer][head]`, each
/// `[tokens×tokens]`) recorded along the way.
pub struct EncodeTrace {
    pub feature: Var,
    pub attention: Vec<Vec<Var>>,
}

impl ViTModel {
    pub fn new(cfg: ViTConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).unwrap();
        let mut store = ParamStore::new();
        let enc = ParamGroup::Encoder;
        let d = cfg.embed_dim;

        let patch =
            DenseIndex::register(&mut store, "patch_embed", enc, cfg.patch_dim(), d, &mut rng);
        let cls: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
        let cls_token = store.add("cls_token", enc, Tensor::new(&[1, d], cls)?);
        let t = cfg.num_tokens();
        let pos: Vec<f64> = (0..t * d).map(|_| normal.sample(&mut rng)).collect();
        let pos_embed = store.add("pos_embed", enc, Tensor::new(&[t, d], pos)?);

        let hidden = d * cfg.mlp_ratio;
        let blocks = (0..cfg.num_layers)
            .map(|l| {
                let p = format!("blocks.{l}");
                BlockIndex {
                    norm1: NormIndex::register(&mut store, &format!("{p}.norm1"), d),
                    attn: AttentionIndex {
                        query: DenseIndex::register(
                            &mut store,
                            &format!("{p}.attn.query"),
                            enc,
                            d,
                            d,
                            &mut rng,
                        ),
                        key: DenseIndex::register(
                            &mut store,
                            &format!("{p}.attn.key"),
                            enc,
                            d,
                            d,
                            &mut rng,
                        ),
                        value: DenseIndex::register(
                            &mut store,
                            &format!("{p}.attn.value"),
                            enc,
                            d,
                            d,
                            &mut rng,
                        ),
                        output: DenseIndex::register(
                            &mut store,
                            &format!("{p}.attn.output"),
                            enc,
                            d,
                            d,
                            &mut rng,
                        ),
                    },
                    norm2: NormIndex::register(&mut store, &format!("{p}.norm2"), d),
                    fc1: DenseIndex::register(
                        &mut store,
                        &format!("{p}.mlp.fc1"),
                        enc,
                        d,
                        hidden,
                        &mut rng,
                    ),
                    fc2: DenseIndex::register(
                        &mut store,
                        &format!("{p}.mlp.fc2"),
                        enc,
                        hidden,
                        d,
                        &mut rng,
                    ),
                }
            })
            .collect();
        let norm = NormIndex::register(&mut store, "norm", d);
        let e = cfg.embedding_dim_out;
        let proj = DenseIndex::register(&mut store, "proj", enc, d, e, &mut rng);

        let cls_group = ParamGroup::Classifier;
        let linear_head = DenseIndex::register(
            &mut store,
            "head.linear",
            cls_group,
            e,
            cfg.num_classes,
            &mut rng,
        );
        let cosine_weights = store.add(
            "head.cosine.weight",
            cls_group,
            uniform_init(&mut rng, e, &[cfg.num_classes, e]),
        );
        let domain = DomainHeadIndex::register(&mut store, e, cfg.domain_hidden, &mut rng);

        Ok(ViTModel {
            cfg,
            store,
            idx: ModelIndex {
                patch,
                cls_token,
                pos_embed,
                blocks,
                norm,
                proj,
                linear_head,
                cosine_weights,
                domain,
            },
        })
    }

    /// Binds the encoder parameters on a tape.
    pub fn bind_encoder(&self, g: &mut Graph, trainable: bool) -> Binding {
        let train: &[ParamGroup] = if trainable {
            &[ParamGroup::Encoder]
        } else {
            &[]
        };
        self.store.bind(g, &[ParamGroup::Encoder], train)
    }

    /// Binds the classifier and domain heads on a tape.
    pub fn bind_heads(&self, g: &mut Graph, trainable: &[ParamGroup]) -> Binding {
        self.store
            .bind(g, &[ParamGroup::Classifier, ParamGroup::Domain], trainable)
    }

    pub fn encode(
        &self,
        g: &mut Graph,
        b: &Binding,
        image: &Tensor,
        window: Option<usize>,
    ) -> Result<Var> {
        Ok(self.encode_traced(g, b, image, window)?.feature)
    }

    pub fn encode_traced(
        &self,
        g: &mut Graph,
        b: &Binding,
        image: &Tensor,
        window: Option<usize>,
    ) -> Result<EncodeTrace> {
        let patches = patchify(&self.cfg, image)?;
        let tokens = patch_embed(g, b, &self.idx, patches)?;
        let mask = attention_mask(self.cfg.grid(), window).map(|m| g.constant(m));
        let mut x = tokens;
        let mut attention = Vec::with_capacity(self.idx.blocks.len());
        for block in &self.idx.blocks {
            let h = block.norm1.forward(g, b, x)?;
            let (a, maps) = mhsa_forward(g, b, &block.attn, h, self.cfg.num_heads, mask)?;
            attention.push(maps);
            x = g.add(x, a)?;
            let h = block.norm2.forward(g, b, x)?;
            let h = block.fc1.forward(g, b, h)?;
            let h = g.gelu(h);
            let h = block.fc2.forward(g, b, h)?;
            x = g.add(x, h)?;
        }
        let x = self.idx.norm.forward(g, b, x)?;
        let cls = g.slice_rows(x, 0, 1)?;
        let f = self.idx.proj.forward(g, b, cls)?;
        let feature = g.reshape(f, &[self.cfg.embedding_dim_out])?;
        Ok(EncodeTrace { feature, attention })
    }

    /// Class logits `[B×n_c]` from a `[B×e]` feature matrix, using the
    /// configured label predictor.
    pub fn classify(&self, g: &mut Graph, b: &Binding, features: Var) -> Result<Var> {
        match self.cfg.head {
            HeadKind::Linear => heads::linear_head(
                g,
                features,
                b.var(self.idx.linear_head.weight),
                b.var(self.idx.linear_head.bias),
            ),
            HeadKind::Cosine => heads::cosine_head(
                g,
                features,
                b.var(self.idx.cosine_weights),
                self.cfg.cosine_temperature,
            ),
        }
    }

    pub fn domain_logits(&self, g: &mut Graph, b: &Binding, features: Var) -> Result<Var> {
        heads::domain_head(g, b, &self.idx.domain, features)
    }

    /// Forward-only feature F(x).
    pub fn features(&self, image: &Tensor, window: Option<usize>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let b = self.bind_encoder(&mut g, false);
        let f = self.encode(&mut g, &b, image, window)?;
        Ok(g.value(f).data().to_vec())
    }

    /// Forward-only class logits for one image.
    pub fn logits(&self, image: &Tensor, window: Option<usize>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let b = self
            .store
            .bind(&mut g, &[ParamGroup::Encoder, ParamGroup::Classifier], &[]);
        let f = self.encode(&mut g, &b, image, window)?;
        let f = g.reshape(f, &[1, self.cfg.embedding_dim_out])?;
        let z = self.classify(&mut g, &b, f)?;
        Ok(g.value(z).data().to_vec())
    }
}

/// Splits a `[C×H×W]` image into `[(H/N)²×(C·N·N)]` flattened patches,
/// row-major over the patch grid.
pub fn patchify(cfg: &ViTConfig, image: &Tensor) -> Result<Tensor> {
    let (c, s, n) = (cfg.channels, cfg.image_size, cfg.patch_size);
    if image.shape() != [c, s, s] {
        return Err(Error::Dimension {
            op: "patchify",
            lhs: image.shape().to_vec(),
            rhs: vec![c, s, s],
        });
    }
    if s % n != 0 {
        return Err(Error::config(format!(
            "image {s} not divisible by patch {n}"
        )));
    }
    let grid = s / n;
    let px = image.data();
    let mut out = Vec::with_capacity(grid * grid * c * n * n);
    for gy in 0..grid {
        for gx in 0..grid {
            for ch in 0..c {
                for dy in 0..n {
                    let row = ch * s * s + (gy * n + dy) * s + gx * n;
                    out.extend_from_slice(&px[row..row + n]);
                }
            }
        }
    }
    Tensor::new(&[grid * grid, c * n * n], out)
}

/// Linear patch projection of pixels rescaled from `[0,1]` to `[-1,1]`,
/// class token prepended, position embeddings added.
pub fn patch_embed(
    g: &mut Graph,
    b: &Binding,
    idx: &ModelIndex,
    mut patches: Tensor,
) -> Result<Var> {
    for v in patches.data_mut() {
        *v = 2.0 * *v - 1.0;
    }
    let p = g.constant(patches);
    let x = idx.patch.forward(g, b, p)?;
    let x = g.concat_rows(&[b.var(idx.cls_token), x])?;
    g.add(x, b.var(idx.pos_embed))
}

/// Additive attention mask for a receptive-field radius on the patch grid
/// (Chebyshev distance). The class token sees and is seen by everything.
/// Returns `None` when nothing would be masked.
pub fn attention_mask(grid: usize, window: Option<usize>) -> Option<Tensor> {
    let radius = window?;
    if radius + 1 >= grid {
        return None;
    }
    let t = grid * grid + 1;
    let mut m = vec![0.0; t * t];
    for qi in 1..t {
        let (qy, qx) = ((qi - 1) / grid, (qi - 1) % grid);
        for ki in 1..t {
            let (ky, kx) = ((ki - 1) / grid, (ki - 1) % grid);
            if qy.abs_diff(ky).max(qx.abs_diff(kx)) > radius {
                m[qi * t + ki] = f64::NEG_INFINITY;
            }
        }
    }
    Some(Tensor::new(&[t, t], m).unwrap())
}

/// Multi-head self-attention over `[T×d]` tokens. Returns the projected
/// output and the per-head attention weights.
pub fn mhsa_forward(
    g: &mut Graph,
    b: &Binding,
    idx: &AttentionIndex,
    x: Var,
    num_heads: usize,
    mask: Option<Var>,
) -> Result<(Var, Vec<Var>)> {
    let d = g.shape(x)[1];
    if d % num_heads != 0 {
        return Err(Error::config(format!(
            "{d} not divisible into {num_heads} heads"
        )));
    }
    let dh = d / num_heads;
    let q = idx.query.forward(g, b, x)?;
    let k = idx.key.forward(g, b, x)?;
    let v = idx.value.forward(g, b, x)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(num_heads);
    let mut maps = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let qh = g.slice_cols(q, h * dh, dh)?;
        let kh = g.slice_cols(k, h * dh, dh)?;
        let vh = g.slice_cols(v, h * dh, dh)?;
        let s = g.matmul_nt(qh, kh)?;
        let mut s = g.scale(s, scale);
        if let Some(m) = mask {
            s = g.add(s, m)?;
        }
        let a = g.softmax(s, 1)?;
        maps.push(a);
        outs.push(g.matmul(a, vh)?);
    }
    let cat = if num_heads == 1 {
        outs[0]
    } else {
        g.concat_cols(&outs)?
    };
    let out = idx.output.forward(g, b, cat)?;
    Ok((out, maps))
}
