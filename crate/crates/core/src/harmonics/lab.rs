//! One-dimensional polynomial-activation cascades on periodic band-limited
//! signals, evaluated exactly in the Fourier-coefficient domain.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Coefficients `x_m` for `m` in `[-M, M]`, stored at index `m + M`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSignal {
    bandwidth: usize,
    coeffs: Vec<Complex64>,
}

impl FourierSignal {
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() < 3 || coeffs.len().is_multiple_of(2) {
            return Err(Error::domain(format!(
                "need 2M+1 coefficients with M >= 1, got {}",
                coeffs.len()
            )));
        }
        Ok(Self {
            bandwidth: coeffs.len() / 2,
            coeffs,
        })
    }

    pub fn zeros(bandwidth: usize) -> Self {
        Self {
            bandwidth,
            coeffs: vec![ZERO; 2 * bandwidth + 1],
        }
    }

    /// `A cos(k0 t)`: coefficients `A/2` at `+-k0`.
    pub fn from_tone(tone: &ToneInput) -> Self {
        let mut s = Self::zeros(tone.frequency);
        let half = Complex64::new(tone.amplitude / 2.0, 0.0);
        s.set(tone.frequency as i64, half);
        s.set(-(tone.frequency as i64), half);
        s
    }

    /// Random real signal of exact bandwidth `m`: Hermitian, nonzero top coefficient.
    pub fn random_real<R: Rng>(bandwidth: usize, rng: &mut R) -> Self {
        let mut s = Self::zeros(bandwidth);
        s.set(0, Complex64::new(rng.random_range(-1.0..1.0), 0.0));
        for m in 1..=bandwidth as i64 {
            let mut c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if m == bandwidth as i64 && c.norm() < 0.1 {
                c = Complex64::new(0.5, 0.25);
            }
            s.set(m, c);
            s.set(-m, c.conj());
        }
        s
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient at frequency `m`; zero outside the stored band.
    pub fn coeff(&self, m: i64) -> Complex64 {
        let b = self.bandwidth as i64;
        if m.abs() > b {
            ZERO
        } else {
            self.coeffs[(m + b) as usize]
        }
    }

    pub fn set(&mut self, m: i64, value: Complex64) {
        let b = self.bandwidth as i64;
        assert!(m.abs() <= b, "frequency {m} outside bandwidth {b}");
        self.coeffs[(m + b) as usize] = value;
    }

    pub fn power(&self, m: i64) -> f64 {
        self.coeff(m).norm_sqr()
    }

    /// Largest `|m|` whose coefficient magnitude exceeds `tol`.
    pub fn effective_bandwidth(&self, tol: f64) -> usize {
        (0..=self.bandwidth as i64)
            .rev()
            .find(|&m| self.coeff(m).norm() > tol || self.coeff(-m).norm() > tol)
            .unwrap_or(0) as usize
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (0..=self.bandwidth as i64).all(|m| (self.coeff(-m) - self.coeff(m).conj()).norm() <= tol)
    }

    /// Largest coefficient difference over the union of both bands.
    pub fn max_abs_diff(&self, other: &FourierSignal) -> f64 {
        let b = self.bandwidth.max(other.bandwidth) as i64;
        (-b..=b)
            .map(|m| (self.coeff(m) - other.coeff(m)).norm())
            .fold(0.0, f64::max)
    }

    fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn eval(&self, t: f64) -> Complex64 {
        let b = self.bandwidth as i64;
        (-b..=b)
            .map(|m| self.coeff(m) * Complex64::from_polar(1.0, m as f64 * t))
            .sum()
    }
}

fn convolve(a: &FourierSignal, b: &FourierSignal) -> FourierSignal {
    let mut out = FourierSignal::zeros(a.bandwidth + b.bandwidth);
    for (i, &x) in a.coeffs.iter().enumerate() {
        if x == ZERO {
            continue;
        }
        for (j, &y) in b.coeffs.iter().enumerate() {
            out.coeffs[i + j] += x * y;
        }
    }
    out
}

/// `phi(z) = sum_q a_q z^q` with real coefficients and nonzero leading term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyActivation {
    coeffs: Vec<f64>,
}

impl PolyActivation {
    /// `coeffs[q]` is `a_q`; the degree is `coeffs.len() - 1`.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        match coeffs.last() {
            Some(&lead) if coeffs.len() >= 2 && lead != 0.0 && coeffs.iter().all(|c| c.is_finite()) => {
                Ok(Self { coeffs })
            }
            _ => Err(Error::domain(
                "polynomial needs degree >= 1, finite coefficients and a nonzero leading coefficient",
            )),
        }
    }

    pub fn identity() -> Self {
        Self {
            coeffs: vec![0.0, 1.0],
        }
    }

    pub fn monomial(degree: usize, lead: f64) -> Result<Self> {
        let mut c = vec![0.0; degree + 1];
        c[degree] = lead;
        Self::new(c)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[self.degree()]
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(ZERO, |acc, &a| acc * z + a)
    }
}

/// Output coefficients of `phi(x)` by repeated exact convolution; bandwidth `d*M`.
pub fn poly_apply_coeffs(sig: &FourierSignal, act: &PolyActivation) -> FourierSignal {
    let d = act.degree();
    let mut out = FourierSignal::zeros(d * sig.bandwidth);
    out.set(0, Complex64::new(act.coeffs[0], 0.0));
    let mut power = sig.clone();
    for q in 1..=d {
        let a = act.coeffs[q];
        if a != 0.0 {
            for m in -(power.bandwidth as i64)..=power.bandwidth as i64 {
                let c = out.coeff(m) + a * power.coeff(m);
                out.set(m, c);
            }
        }
        if q < d {
            power = convolve(&power, sig);
        }
    }
    out
}

/// Time-domain path: sample `x` on `samples` uniform points, apply `phi`
/// pointwise, and recover coefficients by DFT. The result carries every
/// frequency the grid resolves, `|m| <= (samples - 1) / 2`.
pub fn poly_apply_time(
    sig: &FourierSignal,
    act: &PolyActivation,
    samples: usize,
) -> Result<FourierSignal> {
    let need = 2 * act.degree() * sig.bandwidth + 1;
    if samples < need {
        return Err(Error::domain(format!(
            "{samples} samples alias a degree-{} output of bandwidth {}; need at least {need}",
            act.degree(),
            act.degree() * sig.bandwidth
        )));
    }
    let step = std::f64::consts::TAU / samples as f64;
    let values: Vec<Complex64> = (0..samples)
        .map(|n| act.eval(sig.eval(n as f64 * step)))
        .collect();
    let band = (samples - 1) / 2;
    let mut out = FourierSignal::zeros(band);
    for m in -(band as i64)..=band as i64 {
        let mut acc = ZERO;
        for (n, v) in values.iter().enumerate() {
            // reduce the phase index first so large m*n stays exact
            let k = (m * n as i64).rem_euclid(samples as i64);
            acc += v * Complex64::from_polar(1.0, -(k as f64) * step);
        }
        out.set(m, acc / samples as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Report {
    pub degree: usize,
    pub input_bandwidth: usize,
    /// Highest frequency with a coefficient above 1e-12.
    pub output_bandwidth: usize,
    /// `a_d * x_M^d`.
    pub predicted: Complex64,
    /// Coefficient at `d*M` from the convolution path.
    pub measured: Complex64,
    /// Coefficient at `d*M` from the sampled path.
    pub measured_time: Complex64,
    /// Worst relative error of either path against the prediction.
    pub rel_diff: f64,
    /// Largest coefficient gap between the two paths relative to the largest coefficient.
    pub path_rel_diff: f64,
    /// Largest magnitude the sampled path finds beyond `d*M`.
    pub beyond_top: f64,
}

/// Checks the top-coefficient identity `phi(x)_{dM} = a_d x_M^d` on both evaluation paths.
pub fn check_theorem1(sig: &FourierSignal, act: &PolyActivation) -> Result<Theorem1Report> {
    let m = sig.bandwidth as i64;
    let top = sig.coeff(m);
    if top == ZERO {
        return Err(Error::Precondition(format!(
            "top coefficient x_{m} is zero, so the signal does not have bandwidth {m}"
        )));
    }
    let d = act.degree();
    let out = poly_apply_coeffs(sig, act);
    // a few extra samples so frequencies beyond dM are observable
    let time = poly_apply_time(sig, act, 2 * d * sig.bandwidth + 5)?;
    let dm = (d * sig.bandwidth) as i64;
    let predicted = act.leading() * top.powu(d as u32);
    let measured = out.coeff(dm);
    let measured_time = time.coeff(dm);
    let rel = |x: Complex64| (x - predicted).norm() / predicted.norm();
    let scale = out.max_abs().max(f64::MIN_POSITIVE);
    let beyond_top = (dm + 1..=time.bandwidth as i64)
        .map(|k| time.coeff(k).norm().max(time.coeff(-k).norm()))
        .fold(0.0, f64::max);
    Ok(Theorem1Report {
        degree: d,
        input_bandwidth: sig.bandwidth,
        output_bandwidth: out.effective_bandwidth(1e-12),
        predicted,
        measured,
        measured_time,
        rel_diff: rel(measured).max(rel(measured_time)),
        path_rel_diff: out.max_abs_diff(&time) / scale,
        beyond_top,
    })
}

/// Pure tone `A cos(k0 t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneInput {
    pub amplitude: f64,
    pub frequency: usize,
}

impl ToneInput {
    pub fn new(amplitude: f64, frequency: usize) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) || frequency == 0 {
            return Err(Error::domain(format!(
                "tone needs A > 0 and k0 >= 1, got A = {amplitude}, k0 = {frequency}"
            )));
        }
        Ok(Self {
            amplitude,
            frequency,
        })
    }
}

/// Complex gains tabulated on integer frequencies. A missing negative
/// frequency is taken as the conjugate of its positive partner.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterTable {
    gains: BTreeMap<i64, Complex64>,
}

impl FilterTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Unit gain on `[-max_k, max_k]`.
    pub fn unit(max_k: usize) -> Self {
        let mut f = Self::new();
        for k in 0..=max_k as i64 {
            f.insert(k, Complex64::new(1.0, 0.0));
        }
        f
    }

    pub fn insert(&mut self, k: i64, gain: Complex64) -> &mut Self {
        self.gains.insert(k, gain);
        self
    }

    pub fn gain(&self, k: i64) -> Option<Complex64> {
        self.gains
            .get(&k)
            .copied()
            .or_else(|| self.gains.get(&-k).map(|g| g.conj()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.gains.iter().map(|(&k, &g)| (k, g))
    }
}

/// Depth-`L` stack of filter-then-activate layers.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeConfig {
    pub activation: PolyActivation,
    /// One table per layer; the depth is `filters.len()`.
    pub filters: Vec<FilterTable>,
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct CascadeConfigJson {
    depth: usize,
    activation: ActivationJson,
    filters: Vec<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct ActivationJson {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coeffs: Option<Vec<f64>>,
}

impl CascadeConfig {
    pub fn new(activation: PolyActivation, filters: Vec<FilterTable>) -> Result<Self> {
        if filters.is_empty() {
            return Err(Error::Config("cascade depth must be at least 1".into()));
        }
        Ok(Self {
            activation,
            filters,
            seed: None,
        })
    }

    pub fn depth(&self) -> usize {
        self.filters.len()
    }

    /// Chain frequency `d^(l-1) k0` feeding layer `l` (1-based).
    pub fn chain_frequency(&self, layer: usize, k0: usize) -> i64 {
        (self.activation.degree() as i64).pow(layer as u32 - 1) * k0 as i64
    }

    /// True when every filter gain on the harmonic chain is tabulated and nonzero.
    pub fn is_non_degenerate(&self, input: &ToneInput) -> bool {
        (1..=self.depth()).all(|l| {
            self.filters[l - 1]
                .gain(self.chain_frequency(l, input.frequency))
                .is_some_and(|g| g != ZERO)
        })
    }

    /// Parses `{depth, activation: {kind, coeffs?}, filters: [[[k, re, im], ...], ...], seed?}`.
    /// `kind` is `identity` or `polynomial`.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: CascadeConfigJson =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let activation = match (raw.activation.kind.as_str(), raw.activation.coeffs) {
            ("identity", _) => PolyActivation::identity(),
            ("polynomial", Some(c)) => {
                PolyActivation::new(c).map_err(|e| Error::Config(e.to_string()))?
            }
            ("polynomial", None) => {
                return Err(Error::Config("polynomial activation needs coeffs".into()))
            }
            (other, _) => {
                return Err(Error::Config(format!(
                    "unsupported activation kind {other:?}"
                )))
            }
        };
        if raw.depth != raw.filters.len() {
            return Err(Error::Config(format!(
                "depth {} but {} filter tables",
                raw.depth,
                raw.filters.len()
            )));
        }
        let mut filters = Vec::with_capacity(raw.depth);
        for layer in raw.filters {
            let mut table = FilterTable::new();
            for [k, re, im] in layer {
                if k.fract() != 0.0 || !k.is_finite() {
                    return Err(Error::Config(format!("filter frequency {k} is not an integer")));
                }
                table.insert(k as i64, Complex64::new(re, im));
            }
            filters.push(table);
        }
        let mut cfg = Self::new(activation, filters)?;
        cfg.seed = raw.seed;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let identity = self.activation == PolyActivation::identity();
        let raw = CascadeConfigJson {
            depth: self.depth(),
            activation: ActivationJson {
                kind: if identity { "identity" } else { "polynomial" }.into(),
                coeffs: (!identity).then(|| self.activation.coeffs.clone()),
            },
            filters: self
                .filters
                .iter()
                .map(|f| f.entries().map(|(k, g)| [k as f64, g.re, g.im]).collect())
                .collect(),
            seed: self.seed,
        };
        serde_json::to_string_pretty(&raw).expect("config serializes")
    }
}

/// Frequencies that can carry energy after `act`, given an input support.
fn activation_support(support: &BTreeSet<i64>, act: &PolyActivation) -> BTreeSet<i64> {
    let mut out = BTreeSet::new();
    if act.coeffs[0] != 0.0 {
        out.insert(0);
    }
    let mut power = support.clone();
    for q in 1..=act.degree() {
        if act.coeffs[q] != 0.0 {
            out.extend(power.iter().copied());
        }
        if q < act.degree() {
            power = power
                .iter()
                .flat_map(|&a| support.iter().map(move |&b| a + b))
                .collect();
        }
    }
    out
}

/// Runs the cascade on a tone and returns `x_1 .. x_L`.
///
/// Every frequency that can carry energy into layer `l` must have a tabulated
/// gain in that layer's filter.
pub fn simulate_cascade(cfg: &CascadeConfig, input: &ToneInput) -> Result<Vec<FourierSignal>> {
    let k0 = input.frequency as i64;
    let mut x = FourierSignal::from_tone(input);
    let mut support: BTreeSet<i64> = [k0, -k0].into();
    let mut layers = Vec::with_capacity(cfg.depth());
    for (l, filter) in cfg.filters.iter().enumerate() {
        let mut y = FourierSignal::zeros(x.bandwidth);
        let mut passed = BTreeSet::new();
        for &m in &support {
            let g = filter.gain(m).ok_or_else(|| {
                Error::Config(format!(
                    "layer {} has no filter gain at reachable frequency {m}",
                    l + 1
                ))
            })?;
            y.set(m, x.coeff(m) * g);
            if g != ZERO {
                passed.insert(m);
            }
        }
        x = poly_apply_coeffs(&y, &cfg.activation);
        support = activation_support(&passed, &cfg.activation);
        layers.push(x.clone());
    }
    Ok(layers)
}

/// Closed-form power at the top harmonic `d^L k0` and its natural-log
/// decomposition into a constant plus one term per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TopPowerReport {
    pub frequency: i64,
    pub power: f64,
    /// `ln(power)`; negative infinity when degenerate.
    pub log_power: f64,
    /// `2 (d^L - 1)/(d - 1) ln|a_d| + 2 d^L ln(A/2)`.
    pub c0: f64,
    /// `2 d^(L-l+1) ln|H_l(d^(l-1) k0)|` for `l = 1..L`.
    pub layer_terms: Vec<f64>,
    /// Some chain gain is zero; the power is then reported as 0.
    pub degenerate: bool,
}

impl TopPowerReport {
    pub fn decomposition_sum(&self) -> f64 {
        self.c0 + self.layer_terms.iter().sum::<f64>()
    }
}

pub fn closed_form_top_power(cfg: &CascadeConfig, input: &ToneInput) -> Result<TopPowerReport> {
    let d = cfg.activation.degree() as i64;
    let depth = cfg.depth() as u32;
    let d_l = (d as f64).powi(depth as i32);
    let lead_exp = if d == 1 {
        depth as f64
    } else {
        (d_l - 1.0) / (d as f64 - 1.0)
    };
    let c0 = 2.0 * lead_exp * cfg.activation.leading().abs().ln()
        + 2.0 * d_l * (input.amplitude / 2.0).ln();
    let mut layer_terms = Vec::with_capacity(cfg.depth());
    let mut degenerate = false;
    for l in 1..=cfg.depth() {
        let k = cfg.chain_frequency(l, input.frequency);
        let g = cfg.filters[l - 1].gain(k).ok_or_else(|| {
            Error::Config(format!("layer {l} has no filter gain at chain frequency {k}"))
        })?;
        degenerate |= g == ZERO;
        let exponent = 2.0 * (d as f64).powi(depth as i32 - l as i32 + 1);
        layer_terms.push(exponent * g.norm().ln());
    }
    let frequency = d.pow(depth) * input.frequency as i64;
    if degenerate {
        return Ok(TopPowerReport {
            frequency,
            power: 0.0,
            log_power: f64::NEG_INFINITY,
            c0,
            layer_terms,
            degenerate,
        });
    }
    // product form, evaluated directly rather than through the log sum
    let mut power = cfg.activation.leading().abs().powf(2.0 * lead_exp)
        * (input.amplitude / 2.0).powf(2.0 * d_l);
    for l in 1..=cfg.depth() {
        let g = cfg.filters[l - 1]
            .gain(cfg.chain_frequency(l, input.frequency))
            .expect("checked above");
        power *= g.norm().powf(2.0 * (d as f64).powi(depth as i32 - l as i32 + 1));
    }
    Ok(TopPowerReport {
        frequency,
        power,
        log_power: power.ln(),
        c0,
        layer_terms,
        degenerate,
    })
}
