use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{EncoderKind, ModelConfig};
use crate::numerics::{c, Real};

pub const INIT_STD: f64 = 0.02;

/// Which optimiser owns a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    /// Item and positional embeddings, used by both encoders.
    Shared,
    Past,
    Future,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Past,
    Future,
}

impl Side {
    pub fn group(self) -> ParamGroup {
        match self {
            Side::Past => ParamGroup::Past,
            Side::Future => ParamGroup::Future,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Past => "past",
            Side::Future => "future",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterParams<T> {
    pub ln_gain: Array2<T>,
    pub ln_bias: Array2<T>,
    /// Complex filter weights, `bins x d`; only for the learnable variant.
    pub weight_re: Option<Array2<T>>,
    pub weight_im: Option<Array2<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnParams<T> {
    pub wq: Array2<T>,
    pub wk: Array2<T>,
    pub wv: Array2<T>,
    pub w1: Array2<T>,
    pub b1: Array2<T>,
    pub ln1_gain: Array2<T>,
    pub ln1_bias: Array2<T>,
    pub w2: Array2<T>,
    pub b2: Array2<T>,
    pub w3: Array2<T>,
    pub b3: Array2<T>,
    pub ln2_gain: Array2<T>,
    pub ln2_bias: Array2<T>,
}

/// Single-layer GRU, gates ordered `r, z, n` as in PyTorch, plus an output
/// projection.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub w_ih: Array2<T>,
    pub w_hh: Array2<T>,
    pub b_ih: Array2<T>,
    pub b_hh: Array2<T>,
    pub w_out: Array2<T>,
    pub b_out: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights<T> {
    pub filters: Vec<FilterParams<T>>,
    pub attns: Vec<AttnParams<T>>,
    pub gru: Option<GruParams<T>>,
}

/// All trainable state. The embedding tables are stored once and read by
/// both encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    /// `(n+1) x d`; row 0 is the padding embedding.
    pub item_emb: Array2<T>,
    /// `L x d`.
    pub pos_emb: Array2<T>,
    pub past: EncoderWeights<T>,
    pub future: EncoderWeights<T>,
}

fn gaussian<T: Real, R: Rng + ?Sized>(shape: (usize, usize), rng: &mut R) -> Array2<T> {
    let normal = Normal::new(0.0, INIT_STD).unwrap();
    Array2::from_shape_fn(shape, |_| T::from_f64_lossy(normal.sample(rng)))
}

impl<T: Real> FilterParams<T> {
    fn new(cfg: &ModelConfig) -> Self {
        let bins = cfg.max_len / 2 + 1;
        FilterParams {
            ln_gain: Array2::ones((1, cfg.d)),
            ln_bias: Array2::zeros((1, cfg.d)),
            weight_re: cfg.learnable_filter.then(|| Array2::ones((bins, cfg.d))),
            weight_im: cfg.learnable_filter.then(|| Array2::zeros((bins, cfg.d))),
        }
    }
}

impl<T: Real> AttnParams<T> {
    fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let (d, f) = (cfg.d, cfg.d_ff);
        AttnParams {
            wq: gaussian((d, d), rng),
            wk: gaussian((d, d), rng),
            wv: gaussian((d, d), rng),
            w1: gaussian((d, d), rng),
            b1: Array2::zeros((1, d)),
            ln1_gain: Array2::ones((1, d)),
            ln1_bias: Array2::zeros((1, d)),
            w2: gaussian((d, f), rng),
            b2: Array2::zeros((1, f)),
            w3: gaussian((f, d), rng),
            b3: Array2::zeros((1, d)),
            ln2_gain: Array2::ones((1, d)),
            ln2_bias: Array2::zeros((1, d)),
        }
    }
}

impl<T: Real> GruParams<T> {
    fn new<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        GruParams {
            w_ih: gaussian((d, 3 * d), rng),
            w_hh: gaussian((d, 3 * d), rng),
            b_ih: Array2::zeros((1, 3 * d)),
            b_hh: Array2::zeros((1, 3 * d)),
            w_out: gaussian((d, d), rng),
            b_out: Array2::zeros((1, d)),
        }
    }
}

impl<T: Real> EncoderWeights<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        match cfg.encoder {
            EncoderKind::Attention => EncoderWeights {
                filters: (0..cfg.filter_layers)
                    .map(|_| FilterParams::new(cfg))
                    .collect(),
                attns: (0..cfg.attn_layers)
                    .map(|_| AttnParams::new(cfg, rng))
                    .collect(),
                gru: None,
            },
            EncoderKind::Recurrent => EncoderWeights {
                filters: Vec::new(),
                attns: Vec::new(),
                gru: Some(GruParams::new(cfg.d, rng)),
            },
        }
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<T>)>) {
        for (g, f) in self.filters.iter().enumerate() {
            out.push((format!("{prefix}.filter{g}.ln_gain"), &f.ln_gain));
            out.push((format!("{prefix}.filter{g}.ln_bias"), &f.ln_bias));
            if let (Some(re), Some(im)) = (&f.weight_re, &f.weight_im) {
                out.push((format!("{prefix}.filter{g}.weight_re"), re));
                out.push((format!("{prefix}.filter{g}.weight_im"), im));
            }
        }
        for (k, a) in self.attns.iter().enumerate() {
            let p = format!("{prefix}.attn{k}");
            for (n, t) in [
                ("wq", &a.wq),
                ("wk", &a.wk),
                ("wv", &a.wv),
                ("w1", &a.w1),
                ("b1", &a.b1),
                ("ln1_gain", &a.ln1_gain),
                ("ln1_bias", &a.ln1_bias),
                ("w2", &a.w2),
                ("b2", &a.b2),
                ("w3", &a.w3),
                ("b3", &a.b3),
                ("ln2_gain", &a.ln2_gain),
                ("ln2_bias", &a.ln2_bias),
            ] {
                out.push((format!("{p}.{n}"), t));
            }
        }
        if let Some(g) = &self.gru {
            for (n, t) in [
                ("w_ih", &g.w_ih),
                ("w_hh", &g.w_hh),
                ("b_ih", &g.b_ih),
                ("b_hh", &g.b_hh),
                ("w_out", &g.w_out),
                ("b_out", &g.b_out),
            ] {
                out.push((format!("{prefix}.gru.{n}"), t));
            }
        }
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Array2<T>>) {
        for f in &mut self.filters {
            out.push(&mut f.ln_gain);
            out.push(&mut f.ln_bias);
            if let (Some(re), Some(im)) = (&mut f.weight_re, &mut f.weight_im) {
                out.push(re);
                out.push(im);
            }
        }
        for a in &mut self.attns {
            out.extend([
                &mut a.wq,
                &mut a.wk,
                &mut a.wv,
                &mut a.w1,
                &mut a.b1,
                &mut a.ln1_gain,
                &mut a.ln1_bias,
                &mut a.w2,
                &mut a.b2,
                &mut a.w3,
                &mut a.b3,
                &mut a.ln2_gain,
                &mut a.ln2_bias,
            ]);
        }
        if let Some(g) = &mut self.gru {
            out.extend([
                &mut g.w_ih,
                &mut g.w_hh,
                &mut g.b_ih,
                &mut g.b_hh,
                &mut g.w_out,
                &mut g.b_out,
            ]);
        }
    }
}

/// Name, group and tensor, in canonical (checkpoint) order.
pub type TensorRef<'a, T> = (String, ParamGroup, &'a Array2<T>);

impl<T: Real> ModelParams<T> {
    /// Seeded initialisation: N(0, 0.02) weights and embeddings, zero
    /// biases, identity layer norms, all-pass learnable filters.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, num_items: usize, rng: &mut R) -> Self {
        let item_emb = gaussian((num_items + 1, cfg.d), rng);
        let pos_emb = gaussian((cfg.max_len, cfg.d), rng);
        let past = EncoderWeights::new(cfg, rng);
        let future = EncoderWeights::new(cfg, rng);
        ModelParams {
            item_emb,
            pos_emb,
            past,
            future,
        }
    }

    pub fn num_items(&self) -> usize {
        self.item_emb.nrows() - 1
    }

    pub fn d(&self) -> usize {
        self.item_emb.ncols()
    }

    pub fn encoder(&self, side: Side) -> &EncoderWeights<T> {
        match side {
            Side::Past => &self.past,
            Side::Future => &self.future,
        }
    }

    pub fn encoder_mut(&mut self, side: Side) -> &mut EncoderWeights<T> {
        match side {
            Side::Past => &mut self.past,
            Side::Future => &mut self.future,
        }
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_, T>> {
        let mut out = vec![
            ("item_emb".to_string(), ParamGroup::Shared, &self.item_emb),
            ("pos_emb".to_string(), ParamGroup::Shared, &self.pos_emb),
        ];
        for side in [Side::Past, Side::Future] {
            let mut v = Vec::new();
            self.encoder(side).visit(side.name(), &mut v);
            out.extend(v.into_iter().map(|(n, t)| (n, side.group(), t)));
        }
        out
    }

    /// Mutable tensors in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(ParamGroup, &mut Array2<T>)> {
        let mut out = vec![
            (ParamGroup::Shared, &mut self.item_emb),
            (ParamGroup::Shared, &mut self.pos_emb),
        ];
        let mut past = Vec::new();
        self.past.visit_mut(&mut past);
        out.extend(past.into_iter().map(|t| (ParamGroup::Past, t)));
        let mut fut = Vec::new();
        self.future.visit_mut(&mut fut);
        out.extend(fut.into_iter().map(|t| (ParamGroup::Future, t)));
        out
    }

    /// Same structure, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for ((_, a), (_, _, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for (_, t) in self.tensors_mut() {
            t.mapv_inplace(|v| v * s);
        }
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for (_, _, t) in self.tensors() {
            out.extend(t.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) {
        let mut k = 0;
        for (_, t) in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = flat[k];
                k += 1;
            }
        }
        assert_eq!(k, flat.len(), "flat parameter length mismatch");
    }

    /// Flat-index range of every named tensor.
    pub fn layout(&self) -> Vec<(String, ParamGroup, std::ops::Range<usize>)> {
        let mut k = 0;
        self.tensors()
            .into_iter()
            .map(|(n, g, t)| {
                let r = k..k + t.len();
                k += t.len();
                (n, g, r)
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U> {
            item_emb: Array2::zeros(self.item_emb.dim()),
            pos_emb: Array2::zeros(self.pos_emb.dim()),
            past: cast_weights(&self.past),
            future: cast_weights(&self.future),
        };
        let flat: Vec<U> = self
            .to_flat()
            .into_iter()
            .map(|v| c::<U>(v.as_f64()))
            .collect();
        out.set_flat(&flat);
        out
    }
}

fn cast_weights<T: Real, U: Real>(w: &EncoderWeights<T>) -> EncoderWeights<U> {
    let z = |a: &Array2<T>| Array2::<U>::zeros(a.dim());
    EncoderWeights {
        filters: w
            .filters
            .iter()
            .map(|f| FilterParams {
                ln_gain: z(&f.ln_gain),
                ln_bias: z(&f.ln_bias),
                weight_re: f.weight_re.as_ref().map(z),
                weight_im: f.weight_im.as_ref().map(z),
            })
            .collect(),
        attns: w
            .attns
            .iter()
            .map(|a| AttnParams {
                wq: z(&a.wq),
                wk: z(&a.wk),
                wv: z(&a.wv),
                w1: z(&a.w1),
                b1: z(&a.b1),
                ln1_gain: z(&a.ln1_gain),
                ln1_bias: z(&a.ln1_bias),
                w2: z(&a.w2),
                b2: z(&a.b2),
                w3: z(&a.w3),
                b3: z(&a.b3),
                ln2_gain: z(&a.ln2_gain),
                ln2_bias: z(&a.ln2_bias),
            })
            .collect(),
        gru: w.gru.as_ref().map(|g| GruParams {
            w_ih: z(&g.w_ih),
            w_hh: z(&g.w_hh),
            b_ih: z(&g.b_ih),
            b_hh: z(&g.b_hh),
            w_out: z(&g.w_out),
            b_out: z(&g.b_out),
        }),
    }
}
