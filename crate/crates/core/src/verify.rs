//! Seeded randomized sweeps of the harmonic-generation and harmonic-chain
//! identities against the exact 1D laboratory.

use std::fmt::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harmonics::{
    check_theorem1, closed_form_top_power, simulate_cascade, CascadeConfig, FilterTable,
    FourierSignal, PolyActivation, ToneInput,
};

pub const THEOREM1_TOL: f64 = 1e-9;
pub const THEOREM2_TOL: f64 = 1e-6;
pub const DECOMPOSITION_TOL: f64 = 1e-9;
pub const DEGENERATE_POWER_TOL: f64 = 1e-12;
pub const MAX_BANDWIDTH: usize = 8;
pub const MAX_DEGREE_T1: usize = 4;
pub const MAX_DEGREE_T2: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepOptions {
    pub trials: usize,
    pub seed: u64,
    pub max_depth: usize,
    /// Test-only fault injection: negate the leading activation coefficient
    /// in the closed-form prediction.
    pub sabotage: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            max_depth: 3,
            sabotage: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Summary {
    pub cases: usize,
    /// Worst relative error of the top coefficient against `a_d x_M^d`.
    pub max_rel_err: f64,
    /// Worst disagreement between the convolution and sampled paths.
    pub max_path_rel_err: f64,
    /// Largest coefficient found beyond `d M`.
    pub max_beyond_top: f64,
    /// Cases whose output bandwidth differs from `d M`.
    pub bandwidth_mismatches: usize,
}

impl Theorem1Summary {
    pub fn passed(&self) -> bool {
        self.max_rel_err < THEOREM1_TOL
            && self.max_path_rel_err < THEOREM1_TOL
            && self.max_beyond_top < 1e-12
            && self.bandwidth_mismatches == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem2Summary {
    pub cases: usize,
    pub degenerate_cases: usize,
    /// Worst relative gap between simulated and closed-form top power.
    pub max_power_rel_err: f64,
    /// Worst relative gap between the simulated top coefficient and the
    /// layer recursion `c_l = a_d (H_l c_(l-1))^d`.
    pub max_coeff_rel_err: f64,
    /// Worst gap between the log decomposition and the log power.
    pub max_decomposition_err: f64,
    /// Largest simulated top power among degenerate chains.
    pub max_degenerate_power: f64,
}

impl Theorem2Summary {
    pub fn passed(&self) -> bool {
        self.max_power_rel_err < THEOREM2_TOL
            && self.max_coeff_rel_err < THEOREM2_TOL
            && self.max_decomposition_err < DECOMPOSITION_TOL
            && self.max_degenerate_power < DEGENERATE_POWER_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub options: SweepOptions,
    pub theorem1: Theorem1Summary,
    pub theorem2: Theorem2Summary,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.theorem1.passed() && self.theorem2.passed()
    }

    /// Stable plain-text rendering; identical for identical options.
    pub fn render(&self) -> String {
        let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let t1 = &self.theorem1;
        let t2 = &self.theorem2;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "seed {} trials {} max_depth {}{}",
            self.options.seed,
            self.options.trials,
            self.options.max_depth,
            if self.options.sabotage { " (sabotaged)" } else { "" }
        );
        let _ = writeln!(
            s,
            "harmonic generation: {} cases, max rel err {:.3e}, max path rel err {:.3e}, max beyond-top {:.3e}, bandwidth mismatches {} .. {}",
            t1.cases, t1.max_rel_err, t1.max_path_rel_err, t1.max_beyond_top, t1.bandwidth_mismatches,
            verdict(t1.passed())
        );
        let _ = writeln!(
            s,
            "harmonic chain: {} cases ({} degenerate), max power rel err {:.3e}, max coeff rel err {:.3e}, max log decomposition err {:.3e}, max degenerate power {:.3e} .. {}",
            t2.cases, t2.degenerate_cases, t2.max_power_rel_err, t2.max_coeff_rel_err,
            t2.max_decomposition_err, t2.max_degenerate_power, verdict(t2.passed())
        );
        let _ = writeln!(s, "overall: {}", verdict(self.passed()));
        s
    }
}

fn random_activation(rng: &mut ChaCha8Rng, d: usize) -> Result<PolyActivation> {
    let mut a: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.0..1.0)).collect();
    a[d] = rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    PolyActivation::new(a)
}

/// `trials` random real signals (bandwidth 1..=8) through random polynomials (degree 1..=4).
pub fn theorem1_sweep(trials: usize, seed: u64) -> Result<Theorem1Summary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Theorem1Summary {
        cases: 0,
        max_rel_err: 0.0,
        max_path_rel_err: 0.0,
        max_beyond_top: 0.0,
        bandwidth_mismatches: 0,
    };
    for _ in 0..trials {
        let m = rng.random_range(1..=MAX_BANDWIDTH);
        let d = rng.random_range(1..=MAX_DEGREE_T1);
        let x = FourierSignal::random_real(m, &mut rng);
        let r = check_theorem1(&x, &random_activation(&mut rng, d)?)?;
        s.cases += 1;
        s.max_rel_err = s.max_rel_err.max(r.rel_diff);
        s.max_path_rel_err = s.max_path_rel_err.max(r.path_rel_diff);
        s.max_beyond_top = s.max_beyond_top.max(r.beyond_top);
        if r.output_bandwidth != d * m {
            s.bandwidth_mismatches += 1;
        }
    }
    Ok(s)
}

/// Filters with random gains on every frequency the chain can reach.
fn random_cascade(rng: &mut ChaCha8Rng, depth: usize, d: usize, k0: usize) -> Result<CascadeConfig> {
    let mut filters = Vec::with_capacity(depth);
    let mut reach = k0;
    for _ in 0..depth {
        let mut f = FilterTable::new();
        f.insert(0, Complex64::new(rng.random_range(0.5..1.5), 0.0));
        for k in 1..=reach as i64 {
            f.insert(
                k,
                Complex64::from_polar(rng.random_range(0.5..1.5), rng.random_range(0.0..std::f64::consts::TAU)),
            );
        }
        filters.push(f);
        reach *= d;
    }
    CascadeConfig::new(random_activation(rng, d)?, filters)
}

/// Top-harmonic coefficient by the per-layer recursion.
fn recursive_top(cfg: &CascadeConfig, tone: &ToneInput, sabotage: bool) -> Complex64 {
    let d = cfg.activation.degree() as u32;
    let lead = if sabotage { -cfg.activation.leading() } else { cfg.activation.leading() };
    let mut c = Complex64::new(tone.amplitude / 2.0, 0.0);
    for l in 1..=cfg.depth() {
        let g = cfg.filters[l - 1]
            .gain(cfg.chain_frequency(l, tone.frequency))
            .unwrap_or_default();
        c = lead * (g * c).powu(d);
    }
    c
}

/// For every depth `1..=max_depth` and degree `1..=3`: `trials` random
/// non-degenerate cascades, each also rerun with one chain gain zeroed.
pub fn theorem2_sweep(opts: &SweepOptions) -> Result<Theorem2Summary> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5EED_0002);
    let mut s = Theorem2Summary {
        cases: 0,
        degenerate_cases: 0,
        max_power_rel_err: 0.0,
        max_coeff_rel_err: 0.0,
        max_decomposition_err: 0.0,
        max_degenerate_power: 0.0,
    };
    for depth in 1..=opts.max_depth {
        for d in 1..=MAX_DEGREE_T2 {
            for _ in 0..opts.trials {
                let k0 = rng.random_range(1..=2);
                let tone = ToneInput::new(rng.random_range(0.5..3.0), k0)?;
                let mut cfg = random_cascade(&mut rng, depth, d, k0)?;
                let cf = closed_form_top_power(&cfg, &tone)?;
                let top = simulate_cascade(&cfg, &tone)?
                    .last()
                    .expect("depth >= 1")
                    .coeff(cf.frequency);
                let predicted = recursive_top(&cfg, &tone, opts.sabotage);
                s.cases += 1;
                s.max_power_rel_err = s.max_power_rel_err.max((top.norm_sqr() - cf.power).abs() / cf.power);
                s.max_coeff_rel_err = s.max_coeff_rel_err.max((top - predicted).norm() / predicted.norm());
                s.max_decomposition_err =
                    s.max_decomposition_err.max((cf.decomposition_sum() - cf.log_power).abs());

                let l = rng.random_range(1..=depth);
                let k = cfg.chain_frequency(l, k0);
                cfg.filters[l - 1].insert(k, Complex64::new(0.0, 0.0));
                let degenerate = closed_form_top_power(&cfg, &tone)?;
                if !degenerate.degenerate {
                    return Err(Error::Numeric("zeroed chain gain not flagged as degenerate".into()));
                }
                let p = simulate_cascade(&cfg, &tone)?.last().expect("depth >= 1").power(cf.frequency);
                s.degenerate_cases += 1;
                s.max_degenerate_power = s.max_degenerate_power.max(p);
            }
        }
    }
    Ok(s)
}

pub fn run_verification(opts: &SweepOptions) -> Result<VerificationReport> {
    if opts.trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    if !(1..=6).contains(&opts.max_depth) {
        return Err(Error::Config(format!("max depth {} outside 1..=6", opts.max_depth)));
    }
    Ok(VerificationReport {
        options: *opts,
        theorem1: theorem1_sweep(opts.trials, opts.seed)?,
        theorem2: theorem2_sweep(opts)?,
    })
}
