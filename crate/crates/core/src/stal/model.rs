//! The two-branch toy model, its objective and analytic gradients.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loss::{align_loss, mean_bce, sigmoid, standardize_vector, supcon_loss};
use super::schedule::{curriculum_weight, CurriculumSchedule};
use super::Sample;
use crate::error::{Error, Result};
use crate::features::{FEATURE_LEN, TAIL_DELTA};

pub const PIXEL_DIM: usize = 256;
pub const EMBED_DIM: usize = 32;
pub const PROJ_DIM: usize = 16;
pub const TAIL_SLICE: std::ops::Range<usize> = TAIL_DELTA..TAIL_DELTA + 4;
pub const LN_EPS: f64 = 1e-6;

/// `y = W x + b` with `W` stored row-major as `out x inp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub out: usize,
    pub inp: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            out,
            inp,
            weight: vec![0.0; out * inp],
            bias: vec![0.0; out],
        }
    }

    /// Normal weights with variance `1 / inp`, zero bias.
    pub fn random<R: Rng>(out: usize, inp: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (1.0 / inp as f64).sqrt()).expect("valid std");
        Self {
            out,
            inp,
            weight: (0..out * inp).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; out],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inp);
        self.weight
            .chunks_exact(self.inp)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Affine) -> Vec<f64> {
        let mut dx = vec![0.0; self.inp];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &self.weight[o * self.inp..(o + 1) * self.inp];
            let grow = &mut grad.weight[o * self.inp..(o + 1) * self.inp];
            for k in 0..self.inp {
                grow[k] += g * x[k];
                dx[k] += g * row[k];
            }
        }
        dx
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Per-dimension standardization fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population statistics per column; near-constant columns get unit scale.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.collect();
        let first = rows.first().ok_or_else(|| Error::Data("no rows to fit".into()))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in &rows {
            mean.iter_mut().zip(*r).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for r in &rows {
            var.iter_mut()
                .zip(*r)
                .zip(&mean)
                .for_each(|((s, v), m)| *s += (v - m) * (v - m) / n);
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// All learnable maps. Spatial: `e_theta`, `g_eta`, `c_s`. Frequency branch:
/// `f_psi`, `t_omega` (tail slice to `e_t`), `t_out` (`e_t` to the tail logit), `c_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub e_theta: Affine,
    pub g_eta: Affine,
    pub c_s: Affine,
    pub f_psi: Affine,
    pub t_omega: Affine,
    pub t_out: Affine,
    pub c_f: Affine,
}

impl Params {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        Self {
            e_theta: Affine::random(EMBED_DIM, PIXEL_DIM, rng),
            g_eta: Affine::random(PROJ_DIM, EMBED_DIM, rng),
            c_s: Affine::random(1, EMBED_DIM, rng),
            f_psi: Affine::random(PROJ_DIM, FEATURE_LEN, rng),
            t_omega: Affine::random(PROJ_DIM, TAIL_SLICE.len(), rng),
            t_out: Affine::random(1, PROJ_DIM, rng),
            c_f: Affine::random(1, PROJ_DIM, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |a: &Affine| Affine::zeros(a.out, a.inp);
        Self {
            e_theta: z(&self.e_theta),
            g_eta: z(&self.g_eta),
            c_s: z(&self.c_s),
            f_psi: z(&self.f_psi),
            t_omega: z(&self.t_omega),
            t_out: z(&self.t_out),
            c_f: z(&self.c_f),
        }
    }

    fn named(&self) -> [(&'static str, &Affine); 7] {
        [
            ("E_theta", &self.e_theta),
            ("g_eta", &self.g_eta),
            ("C_s", &self.c_s),
            ("F_psi", &self.f_psi),
            ("T_omega", &self.t_omega),
            ("T_omega_out", &self.t_out),
            ("C_f", &self.c_f),
        ]
    }

    fn named_mut(&mut self) -> [(&'static str, &mut Affine); 7] {
        [
            ("E_theta", &mut self.e_theta),
            ("g_eta", &mut self.g_eta),
            ("C_s", &mut self.c_s),
            ("F_psi", &mut self.f_psi),
            ("T_omega", &mut self.t_omega),
            ("T_omega_out", &mut self.t_out),
            ("C_f", &mut self.c_f),
        ]
    }

    /// Visits every parameter tensor as `(name, values)`, e.g. `("F_psi.weight", ..)`.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        for (name, a) in self.named_mut() {
            f(&format!("{name}.weight"), &mut a.weight);
            f(&format!("{name}.bias"), &mut a.bias);
        }
    }

    pub fn for_each(&self, mut f: impl FnMut(&str, &[f64])) {
        for (name, a) in self.named() {
            f(&format!("{name}.weight"), &a.weight);
            f(&format!("{name}.bias"), &a.bias);
        }
    }

    /// Names of the tensors that only exist at training time.
    pub fn is_frequency_branch(name: &str) -> bool {
        ["F_psi.", "T_omega.", "T_omega_out.", "C_f."]
            .iter()
            .any(|p| name.starts_with(p))
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &Params) {
        let mut flat = Vec::new();
        other.for_each(|_, v| flat.push(v.to_vec()));
        let mut i = 0;
        self.for_each_mut(|_, v| {
            v.iter_mut().zip(&flat[i]).for_each(|(a, b)| *a += scale * b);
            i += 1;
        });
    }

    fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, a)| a.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyStalModel {
    pub params: Params,
    /// Strength of the tail embedding injected into the teacher target.
    pub beta: f64,
    pub pixel_scaler: Standardizer,
    pub feature_scaler: Standardizer,
}

/// The inference-time model: pixel summary to probability, nothing else.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDetector {
    pub pixel_scaler: Standardizer,
    pub e_theta: Affine,
    pub c_s: Affine,
}

impl SpatialDetector {
    /// `sigmoid(C_s(E_theta(x)))`.
    pub fn predict(&self, pixels: &[f64]) -> f64 {
        let v = self.e_theta.forward(&self.pixel_scaler.apply(pixels));
        sigmoid(self.c_s.forward(&v)[0])
    }
}

impl ToyStalModel {
    pub fn new<R: Rng>(beta: f64, rng: &mut R) -> Self {
        Self {
            params: Params::random(rng),
            beta,
            pixel_scaler: Standardizer::identity(PIXEL_DIM),
            feature_scaler: Standardizer::identity(FEATURE_LEN),
        }
    }

    pub fn spatial(&self) -> SpatialDetector {
        SpatialDetector {
            pixel_scaler: self.pixel_scaler.clone(),
            e_theta: self.params.e_theta.clone(),
            c_s: self.params.c_s.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            (&self.params.e_theta, EMBED_DIM, PIXEL_DIM),
            (&self.params.g_eta, PROJ_DIM, EMBED_DIM),
            (&self.params.c_s, 1, EMBED_DIM),
            (&self.params.f_psi, PROJ_DIM, FEATURE_LEN),
            (&self.params.t_omega, PROJ_DIM, TAIL_SLICE.len()),
            (&self.params.t_out, 1, PROJ_DIM),
            (&self.params.c_f, 1, PROJ_DIM),
        ];
        for (a, out, inp) in dims {
            if a.out != out || a.inp != inp || a.weight.len() != out * inp || a.bias.len() != out {
                return Err(Error::Data(format!(
                    "parameter shape {}x{} does not match {out}x{inp}",
                    a.out, a.inp
                )));
            }
        }
        if self.pixel_scaler.mean.len() != PIXEL_DIM || self.feature_scaler.mean.len() != FEATURE_LEN {
            return Err(Error::Data("scaler dimensions do not match the model".into()));
        }
        if !self.params.is_finite() || !self.beta.is_finite() {
            return Err(Error::Numeric("model holds non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::Data(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    /// `(h_f, e_t)` for one feature vector.
    fn frequency_embeddings(&self, features: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let x = self.feature_scaler.apply(features);
        let h = self.params.f_psi.forward(&x);
        let e = self.params.t_omega.forward(&x[TAIL_SLICE]);
        (x, h, e)
    }
}

/// `t_f = LN(h_f + beta e_t)` with parameter-free standardization.
pub fn teacher_target(model: &ToyStalModel, features: &[f64]) -> Vec<f64> {
    let (_, h, e) = model.frequency_embeddings(features);
    let u: Vec<f64> = h.iter().zip(&e).map(|(a, b)| a + model.beta * b).collect();
    standardize_vector(&u, LN_EPS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub cls: f64,
    pub con: f64,
    pub freq: f64,
    pub align: f64,
    pub tail: f64,
    pub temperature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cls: 1.0,
            con: 0.1,
            freq: 0.5,
            align: 1.0,
            tail: 0.5,
            temperature: 0.1,
        }
    }
}

impl LossWeights {
    /// Same spatial weights, auxiliary weights zeroed.
    pub fn spatial_only(&self) -> Self {
        Self {
            freq: 0.0,
            align: 0.0,
            tail: 0.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.cls, self.con, self.freq, self.align, self.tail];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("contrastive temperature must be positive".into()));
        }
        Ok(())
    }
}

/// Individual loss terms; `None` marks a term skipped for this batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub cls: f64,
    pub con: Option<f64>,
    pub freq: f64,
    pub align: Option<f64>,
    pub tail: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub w_aux: f64,
    pub terms: LossTerms,
    /// Names of skipped terms, e.g. `L_con`.
    pub skipped: Vec<&'static str>,
    pub grads: Params,
}

/// The objective with the teacher targets supplied as constants.
///
/// `total = cls L_cls + con L_con + w_aux (freq L_freq + align L_align + tail L_tail)`;
/// skipped terms contribute 0. Gradients never flow through `targets`.
pub fn objective(
    model: &ToyStalModel,
    batch: &[&Sample],
    targets: &[Vec<f64>],
    weights: &LossWeights,
    w_aux: f64,
) -> Result<LossReport> {
    weights.validate()?;
    if batch.is_empty() || targets.len() != batch.len() {
        return Err(Error::Data("batch and targets must be nonempty and equal in size".into()));
    }
    let p = &model.params;
    let labels: Vec<u8> = batch.iter().map(|s| s.label).collect();

    // forward
    let xs: Vec<Vec<f64>> = batch.iter().map(|s| model.pixel_scaler.apply(&s.pixels)).collect();
    let vs: Vec<Vec<f64>> = xs.iter().map(|x| p.e_theta.forward(x)).collect();
    let ps: Vec<Vec<f64>> = vs.iter().map(|v| p.g_eta.forward(v)).collect();
    let ys: Vec<f64> = vs.iter().map(|v| p.c_s.forward(v)[0]).collect();
    let freq: Vec<_> = batch.iter().map(|s| model.frequency_embeddings(&s.features)).collect();
    let yf: Vec<f64> = freq.iter().map(|(_, h, _)| p.c_f.forward(h)[0]).collect();
    let yt: Vec<f64> = freq.iter().map(|(_, _, e)| p.t_out.forward(e)[0]).collect();

    let (l_cls, d_ys) = mean_bce(&ys, &labels);
    let (l_freq, d_yf) = mean_bce(&yf, &labels);
    let (l_tail, d_yt) = mean_bce(&yt, &labels);
    let con = supcon_loss(&ps, &labels, weights.temperature)?;
    let align = align_loss(&ps, targets, &labels)?;

    let mut skipped = Vec::new();
    let mut total = weights.cls * l_cls + w_aux * (weights.freq * l_freq + weights.tail * l_tail);
    if let Some(c) = &con {
        total += weights.con * c.loss;
    } else {
        skipped.push("L_con");
    }
    if let Some(a) = &align {
        total += w_aux * weights.align * a.loss;
    } else {
        skipped.push("L_align");
    }

    // backward
    let mut g = p.zeros_like();
    let dim = PROJ_DIM;
    for i in 0..batch.len() {
        let mut dp = vec![0.0; dim];
        if let Some(c) = &con {
            dp.iter_mut().zip(&c.grad[i]).for_each(|(d, v)| *d += weights.con * v);
        }
        if let Some(a) = &align {
            dp.iter_mut()
                .zip(&a.grad[i])
                .for_each(|(d, v)| *d += w_aux * weights.align * v);
        }
        let mut dv = p.g_eta.backward(&vs[i], &dp, &mut g.g_eta);
        let dv_cls = p.c_s.backward(&vs[i], &[weights.cls * d_ys[i]], &mut g.c_s);
        dv.iter_mut().zip(&dv_cls).for_each(|(a, b)| *a += b);
        p.e_theta.backward(&xs[i], &dv, &mut g.e_theta);

        let (x, h, e) = &freq[i];
        let dh = p.c_f.backward(h, &[w_aux * weights.freq * d_yf[i]], &mut g.c_f);
        p.f_psi.backward(x, &dh, &mut g.f_psi);
        let de = p.t_out.backward(e, &[w_aux * weights.tail * d_yt[i]], &mut g.t_out);
        p.t_omega.backward(&x[TAIL_SLICE], &de, &mut g.t_omega);
    }

    Ok(LossReport {
        total,
        w_aux,
        terms: LossTerms {
            cls: l_cls,
            con: con.map(|c| c.loss),
            freq: l_freq,
            align: align.map(|a| a.loss),
            tail: l_tail,
        },
        skipped,
        grads: g,
    })
}

/// Objective at a training step: targets are taken from the current teacher
/// and held fixed, and `w_aux` comes from the curriculum.
pub fn total_loss(
    model: &ToyStalModel,
    batch: &[&Sample],
    weights: &LossWeights,
    step: usize,
    sched: &CurriculumSchedule,
) -> Result<LossReport> {
    let targets: Vec<Vec<f64>> = batch.iter().map(|s| teacher_target(model, &s.features)).collect();
    objective(model, batch, &targets, weights, curriculum_weight(step, sched)?)
}
