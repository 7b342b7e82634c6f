//! The parameter tree and the dense row-major matrix it is built from.
//!
//! Matrices store `rows x cols` contiguously so the inner loops of the
//! forward and backward passes run over stride-1 slices. The tree walks
//! (`arrays`, `zip_apply`, ...) give the optimizer, the checkpoint writer,
//! and the finite-difference tests one flat view of every parameter.

use rand::Rng;

use crate::model::ModelConfig;
use crate::seed;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Mat {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect();
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// One hidden layer: `w` maps (in_dim x out_dim), bias has out_dim entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Mat,
    pub b: Vec<f64>,
}

/// Every trainable array of the model. Also used as the gradient container,
/// since gradients are shape-congruent by definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// vocab_size x embed_dim.
    pub embedding: Mat,
    pub layers: Vec<Layer>,
    /// last hidden dim x vocab_size, zero at init so the starting
    /// distribution is exactly uniform.
    pub out_w: Mat,
    pub out_b: Vec<f64>,
}

pub type Gradients = ModelParams;

impl ModelParams {
    pub fn init(config: &ModelConfig, seed_value: u64) -> ModelParams {
        let mut rng = seed::rng(seed_value, "model/init");
        let embedding = Mat::uniform(
            config.vocab_size,
            config.embed_dim,
            1.0 / (config.embed_dim as f64).sqrt(),
            &mut rng,
        );
        let mut layers = Vec::new();
        let mut in_dim = config.input_dim();
        for &out_dim in &config.hidden_dims {
            let scale = 1.0 / (in_dim as f64).sqrt();
            layers.push(Layer {
                w: Mat::uniform(in_dim, out_dim, scale, &mut rng),
                b: vec![0.0; out_dim],
            });
            in_dim = out_dim;
        }
        ModelParams {
            embedding,
            layers,
            out_w: Mat::zeros(in_dim, config.vocab_size),
            out_b: vec![0.0; config.vocab_size],
        }
    }

    pub fn zeros_like(&self) -> ModelParams {
        let mut out = self.clone();
        out.for_each_mut(|xs| xs.fill(0.0));
        out
    }

    /// Named arrays in checkpoint order: embedding, layer{i}.w, layer{i}.b,
    /// out.w, out.b. The names are part of the on-disk format.
    pub fn arrays(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = vec![(
            "embedding".into(),
            vec![self.embedding.rows, self.embedding.cols],
            &self.embedding.data,
        )];
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.w"), vec![layer.w.rows, layer.w.cols], &layer.w.data));
            out.push((format!("layer{i}.b"), vec![layer.b.len()], &layer.b));
        }
        out.push(("out.w".into(), vec![self.out_w.rows, self.out_w.cols], &self.out_w.data));
        out.push(("out.b".into(), vec![self.out_b.len()], &self.out_b));
        out
    }

    /// Mutable view in the same order as [`ModelParams::arrays`]; checkpoint
    /// loading fills parameters through this.
    pub fn arrays_mut(&mut self) -> Vec<(String, Vec<usize>, &mut [f64])> {
        let mut out: Vec<(String, Vec<usize>, &mut [f64])> = vec![(
            "embedding".into(),
            vec![self.embedding.rows, self.embedding.cols],
            &mut self.embedding.data,
        )];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let shape = vec![layer.w.rows, layer.w.cols];
            out.push((format!("layer{i}.w"), shape, &mut layer.w.data));
            let blen = layer.b.len();
            out.push((format!("layer{i}.b"), vec![blen], &mut layer.b));
        }
        out.push((
            "out.w".into(),
            vec![self.out_w.rows, self.out_w.cols],
            &mut self.out_w.data,
        ));
        out.push(("out.b".into(), vec![self.out_b.len()], &mut self.out_b));
        out
    }

    /// Exact bit-level equality, the standard replay check.
    pub fn bit_eq(&self, other: &ModelParams) -> bool {
        let a = self.arrays();
        let b = other.arrays();
        a.len() == b.len()
            && a.iter().zip(&b).all(|((na, sa, xa), (nb, sb, xb))| {
                na == nb
                    && sa == sb
                    && xa.len() == xb.len()
                    && xa.iter().zip(xb.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    /// True when `other` has the same named arrays in the same shapes.
    pub fn congruent(&self, other: &ModelParams) -> bool {
        let a = self.arrays();
        let b = other.arrays();
        a.len() == b.len()
            && a.iter().zip(&b).all(|((na, sa, _), (nb, sb, _))| na == nb && sa == sb)
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        f(&mut self.embedding.data);
        for layer in &mut self.layers {
            f(&mut layer.w.data);
            f(&mut layer.b);
        }
        f(&mut self.out_w.data);
        f(&mut self.out_b);
    }

    /// Walks self and a congruent tree in lockstep; the workhorse behind
    /// optimizer updates.
    pub fn zip_apply(&mut self, other: &ModelParams, mut f: impl FnMut(&mut [f64], &[f64])) {
        f(&mut self.embedding.data, &other.embedding.data);
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            f(&mut a.w.data, &b.w.data);
            f(&mut a.b, &b.b);
        }
        f(&mut self.out_w.data, &other.out_w.data);
        f(&mut self.out_b, &other.out_b);
    }

    /// Lockstep walk over self and two congruent trees (Adam needs both
    /// moment trees at once).
    pub fn zip_apply2(
        &mut self,
        m: &mut ModelParams,
        v: &mut ModelParams,
        grads: &ModelParams,
        mut f: impl FnMut(&mut [f64], &mut [f64], &mut [f64], &[f64]),
    ) {
        f(&mut self.embedding.data, &mut m.embedding.data, &mut v.embedding.data, &grads.embedding.data);
        for (((a, ml), vl), g) in
            self.layers.iter_mut().zip(&mut m.layers).zip(&mut v.layers).zip(&grads.layers)
        {
            f(&mut a.w.data, &mut ml.w.data, &mut vl.w.data, &g.w.data);
            f(&mut a.b, &mut ml.b, &mut vl.b, &g.b);
        }
        f(&mut self.out_w.data, &mut m.out_w.data, &mut v.out_w.data, &grads.out_w.data);
        f(&mut self.out_b, &mut m.out_b, &mut v.out_b, &grads.out_b);
    }

    pub fn n_params(&self) -> usize {
        self.arrays().iter().map(|(_, _, xs)| xs.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        let mut check = |xs: &[f64]| ok &= xs.iter().all(|x| x.is_finite());
        check(&self.embedding.data);
        for layer in &self.layers {
            check(&layer.w.data);
            check(&layer.b);
        }
        check(&self.out_w.data);
        check(&self.out_b);
        ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            context_window: 3,
            embed_dim: 4,
            hidden_dims: vec![6, 5],
            vocab_size: 9,
            pad_token: 4,
        }
    }

    #[test]
    fn init_is_deterministic_and_scaled() {
        let a = ModelParams::init(&cfg(), 42);
        let b = ModelParams::init(&cfg(), 42);
        let c = ModelParams::init(&cfg(), 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.out_w.data.iter().all(|&x| x == 0.0));
        assert!(a.out_b.iter().all(|&x| x == 0.0));
        assert!(a.layers.iter().all(|l| l.b.iter().all(|&x| x == 0.0)));
        let s0 = 1.0 / (12f64).sqrt();
        assert!(a.layers[0].w.data.iter().all(|&x| x.abs() <= s0));
        assert!(a.layers[0].w.data.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn array_names_cover_every_parameter() {
        let p = ModelParams::init(&cfg(), 1);
        let arrays = p.arrays();
        let names: Vec<&str> = arrays.iter().map(|(n, _, _)| n.as_str()).collect();
        assert_eq!(names, ["embedding", "layer0.w", "layer0.b", "layer1.w", "layer1.b", "out.w", "out.b"]);
        let total: usize = arrays.iter().map(|(_, shape, xs)| {
            assert_eq!(shape.iter().product::<usize>(), xs.len());
            xs.len()
        }).sum();
        assert_eq!(total, p.n_params());
        assert_eq!(total, 9 * 4 + (12 * 6 + 6) + (6 * 5 + 5) + (5 * 9 + 9));
    }
}
