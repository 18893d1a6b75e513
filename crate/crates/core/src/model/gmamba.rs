use rand::Rng;

use crate::cad::TokenRole;
use crate::geometry::{MAX_SIBLING, PARENT_CLASSES};
use crate::numerics::{BoundParams, ParamId, ParamStore, Scalar, Tape, Tensor, Var};

use super::config::{ModelConfig, Variant};
use super::features::{timestep_features, Conditioning, TokenInput};
use super::scan::{gsm_ssd_layer, GsmVars, GsmWeights, KernelVars, Kernels};
use super::ModelError;

/// Init std of the token rows of the embedding matrix.
pub const EMBED_STD: f64 = 0.5;
/// Init std of the learnable positional table.
pub const POS_STD: f64 = 0.1;
const FLAG_STD: f64 = 0.02;
/// Initial pre-squash transition value; squashes to about 0.73.
const A_RAW_INIT: f64 = -1.0;

#[derive(Clone, Copy, Debug)]
enum Init {
    Normal(f64),
    Fill(f64),
    /// Causal kernel passing the current token through unchanged.
    ConvIdentity,
    /// Raw kernel bias: transition block at [`A_RAW_INIT`], the rest at one.
    KernelBias,
    /// Token rows at [`EMBED_STD`], the two flag rows at `FLAG_STD`.
    Embedding,
}

struct Entry {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

/// Where a block's kernels come from.
#[derive(Clone, Debug)]
pub enum KernelSource {
    /// `f_geom([Δ, Π])`, one set per token.
    Geometric { w1: ParamId, b1: ParamId, w2: ParamId, b2: ParamId },
    /// One `1 × 4d` row shared by every token.
    Shared { raw: ParamId },
}

#[derive(Clone, Debug)]
pub struct BlockIds {
    pub norm1: ParamId,
    pub conv: ParamId,
    pub kernels: KernelSource,
    /// Timestep MLP `(w1, b1, w2, b2)` when modulation is enabled.
    pub time: Option<[ParamId; 4]>,
    pub w_in: ParamId,
    pub b_in: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
    pub norm2: ParamId,
    pub mlp: [ParamId; 4],
}

#[derive(Clone, Debug)]
struct CondIds {
    g: [ParamId; 4],
    parent: ParamId,
    sibling: ParamId,
    role: ParamId,
}

/// Parameter layout and forward pass of the denoiser `ε_θ`. Parameters
/// live in a caller-owned [`ParamStore`] under the `enc.` prefix.
#[derive(Clone, Debug)]
pub struct GMamba {
    pub config: ModelConfig,
    emb_w: ParamId,
    emb_pos: ParamId,
    cond: Option<CondIds>,
    blocks: Vec<BlockIds>,
    final_norm: ParamId,
    final_w: ParamId,
    final_b: ParamId,
}

struct Layout(Vec<Entry>);

impl Layout {
    fn push(&mut self, name: String, shape: &[usize], init: Init) {
        self.0.push(Entry { name, shape: shape.to_vec(), init });
    }

    fn linear(&mut self, prefix: &str, i: usize, o: usize, zero: bool) {
        let std = if zero { 0.0 } else { 1.0 / (i as f64).sqrt() };
        self.push(format!("{prefix}.w"), &[i, o], Init::Normal(std));
        self.push(format!("{prefix}.b"), &[1, o], Init::Fill(0.0));
    }
}

fn layout(c: &ModelConfig) -> Layout {
    let (d, v) = (c.d_e, c.v);
    let mut l = Layout(Vec::new());
    l.push("enc.emb.w".into(), &[2 * v + 2, d], Init::Embedding);
    l.push("enc.emb.pos".into(), &[c.n_ts, d], Init::Normal(POS_STD));
    if c.variant == Variant::GMamba {
        l.linear("enc.cond.g1", 3, c.d_c, false);
        l.linear("enc.cond.g2", c.d_c, c.d_c, false);
        l.push("enc.cond.pe_parent".into(), &[PARENT_CLASSES, d], Init::Normal(0.1));
        l.push("enc.cond.pe_sibling".into(), &[MAX_SIBLING + 1, d], Init::Normal(0.1));
        l.push("enc.cond.pe_role".into(), &[TokenRole::COUNT, d], Init::Normal(0.1));
    }
    for i in 0..c.n_blocks {
        let p = format!("enc.block{i}");
        l.push(format!("{p}.norm1"), &[1, d], Init::Fill(1.0));
        l.push(format!("{p}.conv"), &[c.k, d], Init::ConvIdentity);
        match c.variant {
            Variant::GMamba => {
                l.linear(&format!("{p}.geom1"), c.d_c + d, d, false);
                l.push(format!("{p}.geom2.w"), &[d, 4 * d], Init::Normal(1.0 / (d as f64).sqrt()));
                l.push(format!("{p}.geom2.b"), &[1, 4 * d], Init::KernelBias);
            }
            Variant::VanillaSsd => l.push(format!("{p}.shared"), &[1, 4 * d], Init::KernelBias),
        }
        if c.film_enabled {
            l.linear(&format!("{p}.time1"), d, d, false);
            l.linear(&format!("{p}.time2"), d, 4 * d, true);
        }
        l.linear(&format!("{p}.gsm_in"), d, 2 * d, false);
        l.linear(&format!("{p}.gsm_out"), d, d, false);
        l.push(format!("{p}.norm2"), &[1, d], Init::Fill(1.0));
        l.linear(&format!("{p}.mlp1"), d, 4 * d, false);
        l.linear(&format!("{p}.mlp2"), 4 * d, d, false);
    }
    l.push("enc.final.norm".into(), &[1, d], Init::Fill(1.0));
    l.linear("enc.final", d, d, true);
    l
}

fn init_tensor<T: Scalar>(e: &Entry, rng: &mut impl Rng) -> Tensor<T> {
    match e.init {
        Init::Normal(std) if std == 0.0 => Tensor::zeros(&e.shape),
        Init::Normal(std) => Tensor::randn(&e.shape, std, rng),
        Init::Fill(v) => Tensor::full(&e.shape, T::of(v)),
        Init::ConvIdentity => {
            let d = e.shape[1];
            Tensor::from_fn(&e.shape, |i| if i < d { T::one() } else { T::zero() })
        }
        Init::Embedding => {
            let (rows, d) = (e.shape[0], e.shape[1]);
            let tok = Tensor::<T>::randn(&[rows - 2, d], EMBED_STD, rng);
            let flags = Tensor::<T>::randn(&[2, d], FLAG_STD, rng);
            let mut data = tok.into_data();
            data.extend(flags.into_data());
            Tensor::matrix(rows, d, data).expect("embedding shape")
        }
        Init::KernelBias => {
            let d = e.shape[1] / 4;
            Tensor::from_fn(&e.shape, |i| T::of(if i < d { A_RAW_INIT } else { 1.0 }))
        }
    }
}

impl GMamba {
    /// Registers freshly initialized parameters in `store`.
    pub fn new<T: Scalar>(config: ModelConfig, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Result<Self, ModelError> {
        config.validate()?;
        for e in layout(&config).0 {
            let t = init_tensor(&e, rng);
            store.add(e.name, t)?;
        }
        Self::from_store(config, store)
    }

    /// Binds to parameters already present in `store`, e.g. after loading a
    /// checkpoint. Missing names or wrong shapes are errors.
    pub fn from_store<T: Scalar>(config: ModelConfig, store: &ParamStore<T>) -> Result<Self, ModelError> {
        config.validate()?;
        for e in layout(&config).0 {
            match store.id(&e.name) {
                Some(id) if store.get(id).shape() == e.shape.as_slice() => {}
                Some(id) => {
                    return Err(ModelError::Uninitialized(format!(
                        "{} has shape {:?}, expected {:?}",
                        e.name,
                        store.get(id).shape(),
                        e.shape
                    )))
                }
                None => return Err(ModelError::Uninitialized(e.name)),
            }
        }
        let id = |n: &str| store.id(n).expect("checked above");
        let lin = |p: &str| [id(&format!("{p}.w")), id(&format!("{p}.b"))];
        let cond = (config.variant == Variant::GMamba).then(|| {
            let [g1w, g1b] = lin("enc.cond.g1");
            let [g2w, g2b] = lin("enc.cond.g2");
            CondIds {
                g: [g1w, g1b, g2w, g2b],
                parent: id("enc.cond.pe_parent"),
                sibling: id("enc.cond.pe_sibling"),
                role: id("enc.cond.pe_role"),
            }
        });
        let blocks = (0..config.n_blocks)
            .map(|i| {
                let p = format!("enc.block{i}");
                let kernels = match config.variant {
                    Variant::GMamba => {
                        let [w1, b1] = lin(&format!("{p}.geom1"));
                        let [w2, b2] = lin(&format!("{p}.geom2"));
                        KernelSource::Geometric { w1, b1, w2, b2 }
                    }
                    Variant::VanillaSsd => KernelSource::Shared { raw: id(&format!("{p}.shared")) },
                };
                let time = config.film_enabled.then(|| {
                    let [a, b] = lin(&format!("{p}.time1"));
                    let [c, d] = lin(&format!("{p}.time2"));
                    [a, b, c, d]
                });
                let [w_in, b_in] = lin(&format!("{p}.gsm_in"));
                let [w_out, b_out] = lin(&format!("{p}.gsm_out"));
                let [m1, c1] = lin(&format!("{p}.mlp1"));
                let [m2, c2] = lin(&format!("{p}.mlp2"));
                BlockIds {
                    norm1: id(&format!("{p}.norm1")),
                    conv: id(&format!("{p}.conv")),
                    kernels,
                    time,
                    w_in,
                    b_in,
                    w_out,
                    b_out,
                    norm2: id(&format!("{p}.norm2")),
                    mlp: [m1, c1, m2, c2],
                }
            })
            .collect();
        let [final_w, final_b] = lin("enc.final");
        Ok(GMamba {
            emb_w: id("enc.emb.w"),
            emb_pos: id("enc.emb.pos"),
            cond,
            blocks,
            final_norm: id("enc.final.norm"),
            final_w,
            final_b,
            config,
        })
    }

    pub fn blocks(&self) -> &[BlockIds] {
        &self.blocks
    }

    /// Names of every parameter this model owns.
    pub fn param_names(config: &ModelConfig) -> Vec<String> {
        layout(config).0.into_iter().map(|e| e.name).collect()
    }

    fn check_len(&self, len: usize) -> Result<(), ModelError> {
        if len == 0 {
            return Err(ModelError::Input("empty sequence".into()));
        }
        if len > self.config.n_ts {
            return Err(ModelError::Input(format!("{len} tokens exceed the positional table of {}", self.config.n_ts)));
        }
        Ok(())
    }

    /// Embedding of the valid prefix, `L × d_e`: the one-hot rows of both
    /// token components, the raw type and step flags through their own
    /// rows, plus the positional table.
    pub fn embed_var<T: Scalar>(&self, tape: &mut Tape<T>, bp: &BoundParams, tok: &TokenInput) -> Result<Var, ModelError> {
        let (l, d, v) = (tok.len(), self.config.d_e, self.config.v);
        self.check_len(l)?;
        if tok.a.iter().chain(&tok.b).any(|&x| x >= v) {
            return Err(ModelError::Input("token id out of vocabulary".into()));
        }
        let w = bp.var(self.emb_w);
        let ea = tape.gather(w, &tok.a)?;
        let b_idx: Vec<usize> = tok.b.iter().map(|&b| v + b).collect();
        let eb = tape.gather(w, &b_idx)?;
        let mut z = tape.add(ea, eb)?;
        for (row, flags) in [(2 * v, &tok.types), (2 * v + 1, &tok.steps)] {
            let r = tape.gather(w, &vec![row; l])?;
            let f = tape.constant(Tensor::from_fn(&[l, d], |i| T::of(flags[i / d] as f64)))?;
            let rf = tape.mul(r, f)?;
            z = tape.add(z, rf)?;
        }
        let idx: Vec<usize> = (0..l).collect();
        let pos = tape.gather(bp.var(self.emb_pos), &idx)?;
        Ok(tape.add(z, pos)?)
    }

    /// `Δ` (`L × d_c`) and `Π` (`L × d_e`) for the GMamba variant.
    fn conditioning_vars<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        bp: &BoundParams,
        cond: &Conditioning,
    ) -> Result<Option<(Var, Var)>, ModelError> {
        let Some(ids) = &self.cond else { return Ok(None) };
        let feats = tape.constant(cond.features())?;
        let h = tape.linear(feats, bp.var(ids.g[0]), bp.var(ids.g[1]))?;
        let h = tape.silu(h)?;
        let delta = tape.linear(h, bp.var(ids.g[2]), bp.var(ids.g[3]))?;
        let idx = |v: &[u8]| v.iter().map(|&x| x as usize).collect::<Vec<_>>();
        let p = tape.gather(bp.var(ids.parent), &idx(&cond.ctx.parent))?;
        let s = tape.gather(bp.var(ids.sibling), &idx(&cond.ctx.sibling))?;
        let r = tape.gather(bp.var(ids.role), &idx(&cond.ctx.role))?;
        let ps = tape.add(p, s)?;
        let pi = tape.add(ps, r)?;
        Ok(Some((delta, pi)))
    }

    /// FiLM gains `ψ_t = 1 + MLP(sin/cos(t))`, `1 × 4d_e`.
    fn film_var<T: Scalar>(&self, tape: &mut Tape<T>, bp: &BoundParams, block: &BlockIds, tfeat: Var) -> Result<Option<Var>, ModelError> {
        let Some([w1, b1, w2, b2]) = block.time else { return Ok(None) };
        let h = tape.linear(tfeat, bp.var(w1), bp.var(b1))?;
        let h = tape.silu(h)?;
        let out = tape.linear(h, bp.var(w2), bp.var(b2))?;
        Ok(Some(tape.affine(out, 1.0, 1.0)?))
    }

    fn kernel_vars<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        bp: &BoundParams,
        block: &BlockIds,
        cond: Option<(Var, Var)>,
        psi: Option<Var>,
        len: usize,
    ) -> Result<KernelVars, ModelError> {
        let d = self.config.d_e;
        let raw = match (&block.kernels, cond) {
            (KernelSource::Geometric { w1, b1, w2, b2 }, Some((delta, pi))) => {
                let x = tape.concat_cols(&[delta, pi])?;
                let h = tape.linear(x, bp.var(*w1), bp.var(*b1))?;
                let h = tape.silu(h)?;
                let raw = tape.linear(h, bp.var(*w2), bp.var(*b2))?;
                match psi {
                    Some(p) => tape.mul_row(raw, p)?,
                    None => raw,
                }
            }
            (KernelSource::Shared { raw }, _) => {
                let mut r = bp.var(*raw);
                if let Some(p) = psi {
                    r = tape.mul(r, p)?;
                }
                tape.gather(r, &vec![0; len])?
            }
            (KernelSource::Geometric { .. }, None) => unreachable!("geometric kernels always have conditioning"),
        };
        let a_raw = tape.slice_cols(raw, 0, d)?;
        Ok(KernelVars {
            a: tape.squash(a_raw)?,
            b: tape.slice_cols(raw, d, d)?,
            c: tape.slice_cols(raw, 2 * d, d)?,
            g: tape.slice_cols(raw, 3 * d, d)?,
        })
    }

    /// Records `ε_θ(Z_t, t)` for the valid prefix `z_t` (`L × d_e`).
    pub fn denoise_var<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        bp: &BoundParams,
        z_t: Var,
        t: usize,
        cond: &Conditioning,
    ) -> Result<Var, ModelError> {
        let shape = tape.shape(z_t).to_vec();
        let (l, d) = (shape[0], self.config.d_e);
        if shape != [l, d] {
            return Err(ModelError::Input(format!("Z_t has shape {shape:?}, expected [L, {d}]")));
        }
        self.check_len(l)?;
        cond.check(l)?;
        let cv = self.conditioning_vars(tape, bp, cond)?;
        let tfeat = match self.config.film_enabled {
            true => Some(tape.constant(timestep_features(t, d))?),
            false => None,
        };
        let mut x = z_t;
        for block in &self.blocks {
            let psi = match tfeat {
                Some(tf) => self.film_var(tape, bp, block, tf)?,
                None => None,
            };
            let kv = self.kernel_vars(tape, bp, block, cv, psi, l)?;
            let n1 = tape.rms_norm(x, bp.var(block.norm1))?;
            let wv = GsmVars {
                conv: bp.var(block.conv),
                w_in: bp.var(block.w_in),
                b_in: bp.var(block.b_in),
                w_out: bp.var(block.w_out),
                b_out: bp.var(block.b_out),
            };
            let y = gsm_ssd_layer(tape, n1, cv.map(|c| c.1), &kv, &wv)?;
            x = tape.add(x, y)?;
            let n2 = tape.rms_norm(x, bp.var(block.norm2))?;
            let [m1, c1, m2, c2] = block.mlp;
            let h = tape.linear(n2, bp.var(m1), bp.var(c1))?;
            let h = tape.silu(h)?;
            let y = tape.linear(h, bp.var(m2), bp.var(c2))?;
            x = tape.add(x, y)?;
        }
        let n = tape.rms_norm(x, bp.var(self.final_norm))?;
        Ok(tape.linear(n, bp.var(self.final_w), bp.var(self.final_b))?)
    }

    /// Embedding of a whole sequence, `len × d_e`; rows at and beyond
    /// `valid_len` are zero.
    pub fn embed<T: Scalar>(&self, params: &ParamStore<T>, seq: &crate::cad::CadSequence) -> Result<Tensor<T>, ModelError> {
        seq.check()?;
        let tok = TokenInput::from_sequence(seq);
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape)?;
        let z = self.embed_var(&mut tape, &bp, &tok)?;
        Ok(pad_rows(tape.value(z), seq.len()))
    }

    /// `ε̂` for a padded `Z_t` (`n × d_e`) whose first `cond.len()` rows are
    /// valid; padded rows of the output are zero.
    pub fn denoise<T: Scalar>(&self, params: &ParamStore<T>, z_t: &Tensor<T>, t: usize, cond: &Conditioning) -> Result<Tensor<T>, ModelError> {
        let l = cond.len();
        if !z_t.is_matrix() || z_t.cols() != self.config.d_e || z_t.rows() < l {
            return Err(ModelError::Input(format!("Z_t has shape {:?} for {l} valid tokens", z_t.shape())));
        }
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape)?;
        let z = tape.constant(take_rows(z_t, l))?;
        let e = self.denoise_var(&mut tape, &bp, z, t, cond)?;
        Ok(pad_rows(tape.value(e), z_t.rows()))
    }

    /// Kernels `(Ā, B̄, C, G)` of one block for the given conditioning.
    pub fn make_kernels<T: Scalar>(&self, params: &ParamStore<T>, block: usize, cond: &Conditioning, t: usize) -> Result<Kernels<T>, ModelError> {
        let b = self.blocks.get(block).ok_or_else(|| ModelError::Input(format!("no block {block}")))?;
        let l = cond.len();
        self.check_len(l)?;
        cond.check(l)?;
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape)?;
        let cv = self.conditioning_vars(&mut tape, &bp, cond)?;
        let psi = match self.config.film_enabled {
            true => {
                let tf = tape.constant(timestep_features(t, self.config.d_e))?;
                self.film_var(&mut tape, &bp, b, tf)?
            }
            false => None,
        };
        let kv = self.kernel_vars(&mut tape, &bp, b, cv, psi, l)?;
        Ok(Kernels {
            a: tape.value(kv.a).clone(),
            b: tape.value(kv.b).clone(),
            c: tape.value(kv.c).clone(),
            g: tape.value(kv.g).clone(),
        })
    }

    /// Hierarchical offsets `Π` (`L × d_e`); zero for the shared-kernel variant.
    pub fn hierarchy_offsets<T: Scalar>(&self, params: &ParamStore<T>, cond: &Conditioning) -> Result<Tensor<T>, ModelError> {
        let l = cond.len();
        cond.check(l)?;
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape)?;
        Ok(match self.conditioning_vars(&mut tape, &bp, cond)? {
            Some((_, pi)) => tape.value(pi).clone(),
            None => Tensor::zeros(&[l, self.config.d_e]),
        })
    }

    pub fn gsm_weights<T: Scalar>(&self, params: &ParamStore<T>, block: usize) -> Result<GsmWeights<T>, ModelError> {
        let b = self.blocks.get(block).ok_or_else(|| ModelError::Input(format!("no block {block}")))?;
        Ok(GsmWeights {
            conv: params.get(b.conv).clone(),
            w_in: params.get(b.w_in).clone(),
            b_in: params.get(b.b_in).clone(),
            w_out: params.get(b.w_out).clone(),
            b_out: params.get(b.b_out).clone(),
        })
    }
}

/// First `n` rows of a matrix.
pub(crate) fn take_rows<T: Scalar>(t: &Tensor<T>, n: usize) -> Tensor<T> {
    let d = t.cols();
    Tensor::matrix(n, d, t.data()[..n * d].to_vec()).expect("row prefix")
}

/// Extends a matrix with zero rows up to `n`.
pub(crate) fn pad_rows<T: Scalar>(t: &Tensor<T>, n: usize) -> Tensor<T> {
    let d = t.cols();
    let mut data = t.data().to_vec();
    data.resize(n * d, T::zero());
    Tensor::matrix(n, d, data).expect("padded rows")
}
