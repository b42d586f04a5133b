//! Loss terms with analytic gradients.

use crate::error::{Error, Result};

/// Binary cross-entropy of `sigmoid(logit)` against `label`, in log-sum-exp form.
pub fn bce(logit: f64, label: u8) -> f64 {
    let y = label as f64;
    // log(1 + e^z) - y z, arranged so neither branch overflows
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

/// Derivative of [`bce`] with respect to the logit.
pub fn bce_grad(logit: f64, label: u8) -> f64 {
    sigmoid(logit) - label as f64
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean BCE over a batch, with the gradient per logit.
pub fn mean_bce(logits: &[f64], labels: &[u8]) -> (f64, Vec<f64>) {
    let n = logits.len() as f64;
    let loss = logits.iter().zip(labels).map(|(&z, &y)| bce(z, y)).sum::<f64>() / n;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| bce_grad(z, y) / n)
        .collect();
    (loss, grad)
}

/// Loss value and its gradient with respect to each input row.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_rows(rows: &[Vec<f64>], what: &str) -> Result<()> {
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numeric(format!("non-finite {what}")));
    }
    if rows.iter().any(|r| norm(r) == 0.0) {
        return Err(Error::Numeric(format!("zero-norm {what} vector")));
    }
    Ok(())
}

/// Class-balanced cosine alignment `1/2 sum_c mean_{i in c} (1 - cos(p_i, t_i))`.
///
/// The targets are constants: the returned gradient is with respect to `proj`
/// only. Returns `None` when the batch lacks one of the classes.
pub fn align_loss(proj: &[Vec<f64>], targets: &[Vec<f64>], labels: &[u8]) -> Result<Option<LossGrad>> {
    if proj.len() != targets.len() || proj.len() != labels.len() {
        return Err(Error::dim("align_loss inputs must have equal batch sizes"));
    }
    let counts = [0u8, 1].map(|c| labels.iter().filter(|&&y| y == c).count());
    if counts.contains(&0) {
        return Ok(None);
    }
    check_rows(proj, "projection")?;
    check_rows(targets, "target")?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(proj.len());
    for ((p, t), &y) in proj.iter().zip(targets).zip(labels) {
        let w = 0.5 / counts[y as usize] as f64;
        let (np, nt) = (norm(p), norm(t));
        let cos = dot(p, t) / (np * nt);
        loss += w * (1.0 - cos);
        grad.push(
            p.iter()
                .zip(t)
                .map(|(pk, tk)| -w * (tk / (np * nt) - cos * pk / (np * np)))
                .collect(),
        );
    }
    Ok(Some(LossGrad { loss, grad }))
}

/// Supervised contrastive loss on L2-normalized embeddings.
///
/// For each anchor with at least one same-class partner: minus the mean over
/// positives of `log softmax` of `z_i . z_j / temperature` taken over all
/// other samples; averaged over those anchors. Returns `None` when no anchor
/// has a positive.
pub fn supcon_loss(emb: &[Vec<f64>], labels: &[u8], temperature: f64) -> Result<Option<LossGrad>> {
    let n = emb.len();
    if labels.len() != n {
        return Err(Error::dim("supcon_loss inputs must have equal batch sizes"));
    }
    if !(temperature > 0.0) {
        return Err(Error::domain("temperature must be positive"));
    }
    check_rows(emb, "embedding")?;
    let norms: Vec<f64> = emb.iter().map(|e| norm(e)).collect();
    let z: Vec<Vec<f64>> = emb
        .iter()
        .zip(&norms)
        .map(|(e, &s)| e.iter().map(|v| v / s).collect())
        .collect();
    let sim = |i: usize, j: usize| dot(&z[i], &z[j]) / temperature;

    let anchors: Vec<usize> = (0..n)
        .filter(|&i| (0..n).any(|j| j != i && labels[j] == labels[i]))
        .collect();
    if anchors.is_empty() {
        return Ok(None);
    }
    let na = anchors.len() as f64;

    // g[i][j] = dL/ds_ij
    let mut g = vec![vec![0.0; n]; n];
    let mut loss = 0.0;
    for &i in &anchors {
        let s: Vec<f64> = (0..n).map(|j| if j == i { f64::NEG_INFINITY } else { sim(i, j) }).collect();
        let smax = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = s.iter().map(|v| (v - smax).exp()).sum();
        let log_denom = smax + denom.ln();
        let positives: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        let np = positives.len() as f64;
        loss += positives.iter().map(|&p| log_denom - s[p]).sum::<f64>() / np / na;
        for j in 0..n {
            if j == i {
                continue;
            }
            let q = (s[j] - log_denom).exp();
            let pos = if labels[j] == labels[i] { 1.0 / np } else { 0.0 };
            g[i][j] = (q - pos) / na;
        }
    }

    let dim = emb[0].len();
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        // dL/dz_i, then back through the normalization
        let mut dz = vec![0.0; dim];
        for j in 0..n {
            let c = (g[i][j] + g[j][i]) / temperature;
            if c != 0.0 {
                dz.iter_mut().zip(&z[j]).for_each(|(d, zj)| *d += c * zj);
            }
        }
        let proj = dot(&dz, &z[i]);
        grad.push(
            dz.iter()
                .zip(&z[i])
                .map(|(d, zi)| (d - proj * zi) / norms[i])
                .collect(),
        );
    }
    Ok(Some(LossGrad { loss, grad }))
}

/// Parameter-free layer normalization: zero mean, unit variance. The standard
/// deviation is floored at `eps` so constant inputs map to zero.
pub fn standardize_vector(u: &[f64], eps: f64) -> Vec<f64> {
    let n = u.len() as f64;
    let mean = u.iter().sum::<f64>() / n;
    let var = u.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let s = var.sqrt().max(eps);
    u.iter().map(|v| (v - mean) / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-4 * a.abs().max(b.abs()) + 1e-8
    }

    /// Central differences of `f` around `x`, one coordinate at a time.
    fn fd_rows(x: &[Vec<f64>], f: impl Fn(&[Vec<f64>]) -> f64) -> Vec<Vec<f64>> {
        let h = 1e-5;
        let mut out = vec![vec![0.0; x[0].len()]; x.len()];
        let mut y = x.to_vec();
        for i in 0..x.len() {
            for k in 0..x[0].len() {
                y[i][k] = x[i][k] + h;
                let up = f(&y);
                y[i][k] = x[i][k] - h;
                let down = f(&y);
                y[i][k] = x[i][k];
                out[i][k] = (up - down) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn bce_values() {
        assert!((bce(0.0, 1) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce(20.0, 1) < 1e-8);
        assert!((bce(-20.0, 1) - 20.0).abs() < 1e-8);
        assert!((bce(-800.0, 1) - 800.0).abs() < 1e-9);
        assert!(bce(800.0, 0).is_finite());
        assert!((bce(1.3, 0) - (1.0 + 1.3f64.exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_gradient_matches_fd() {
        for &z in &[-3.0, -0.2, 0.0, 0.7, 4.0] {
            for y in [0, 1] {
                let fd = (bce(z + 1e-5, y) - bce(z - 1e-5, y)) / 2e-5;
                assert!(close(bce_grad(z, y), fd));
            }
        }
    }

    #[test]
    fn align_extremes() {
        let p = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]];
        let labels = [0, 1, 1];
        let same = align_loss(&p, &p, &labels).unwrap().unwrap();
        assert!(same.loss.abs() < 1e-12);
        let ortho: Vec<Vec<f64>> = p.iter().map(|v| vec![-v[1], v[0]]).collect();
        assert!((align_loss(&p, &ortho, &labels).unwrap().unwrap().loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn align_skips_single_class_and_rejects_zero_vectors() {
        let p = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(align_loss(&p, &p, &[1, 1]).unwrap(), None);
        let z = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        assert!(matches!(align_loss(&z, &p, &[0, 1]), Err(Error::Numeric(_))));
    }

    #[test]
    fn align_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = rows(&mut rng, 8, 5);
        let t = rows(&mut rng, 8, 5);
        let labels = [0, 1, 0, 0, 1, 1, 1, 0];
        let out = align_loss(&p, &t, &labels).unwrap().unwrap();
        let fd = fd_rows(&p, |q| align_loss(q, &t, &labels).unwrap().unwrap().loss);
        for (a, b) in out.grad.iter().flatten().zip(fd.iter().flatten()) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(b.abs()) + 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn align_is_symmetric_in_class_names() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = rows(&mut rng, 6, 4);
        let t = rows(&mut rng, 6, 4);
        let labels = [0, 0, 1, 1, 1, 0];
        let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
        let a = align_loss(&p, &t, &labels).unwrap().unwrap().loss;
        let b = align_loss(&p, &t, &flipped).unwrap().unwrap().loss;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn supcon_prefers_informative_labels() {
        let emb = vec![
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ];
        let good = supcon_loss(&emb, &[0, 0, 1, 1], 0.1).unwrap().unwrap().loss;
        let shuffled = supcon_loss(&emb, &[0, 1, 0, 1], 0.1).unwrap().unwrap().loss;
        assert!(good < shuffled);
    }

    #[test]
    fn supcon_invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let emb = rows(&mut rng, 8, 6);
        let labels = [0, 1, 1, 0, 1, 0, 0, 1];
        let base = supcon_loss(&emb, &labels, 0.1).unwrap().unwrap().loss;
        let scaled: Vec<Vec<f64>> = emb.iter().map(|r| r.iter().map(|v| 5.0 * v).collect()).collect();
        assert!((supcon_loss(&scaled, &labels, 0.1).unwrap().unwrap().loss - base).abs() < 1e-12);
        let order = [3, 0, 7, 5, 1, 2, 6, 4];
        let e2: Vec<Vec<f64>> = order.iter().map(|&i| emb[i].clone()).collect();
        let l2: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
        assert!((supcon_loss(&e2, &l2, 0.1).unwrap().unwrap().loss - base).abs() < 1e-12);
    }

    #[test]
    fn supcon_skips_without_positives() {
        let emb = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(supcon_loss(&emb, &[0, 1], 0.1).unwrap(), None);
    }

    #[test]
    fn supcon_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let emb = rows(&mut rng, 8, 5);
        let labels = [0, 1, 1, 0, 1, 0, 0, 0];
        let out = supcon_loss(&emb, &labels, 0.1).unwrap().unwrap();
        let fd = fd_rows(&emb, |q| supcon_loss(q, &labels, 0.1).unwrap().unwrap().loss);
        for (a, b) in out.grad.iter().flatten().zip(fd.iter().flatten()) {
            assert!(close(*a, *b), "{a} vs {b}");
        }
    }

    #[test]
    fn standardization() {
        let t = standardize_vector(&[1.0, 2.0, 3.0, 10.0], 1e-6);
        let m = t.iter().sum::<f64>() / 4.0;
        let v = t.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        assert!(standardize_vector(&[2.0; 5], 1e-6).iter().all(|&x| x == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn standardized_moments(seed in any::<u64>(), scale in 1e-3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..16).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
            let t = standardize_vector(&u, 1e-6);
            let m = t.iter().sum::<f64>() / 16.0;
            let v = t.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 16.0;
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((v - 1.0).abs() < 1e-6);
        }

        #[test]
        fn align_is_bounded(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = rows(&mut rng, 6, 3);
            let t = rows(&mut rng, 6, 3);
            let l = align_loss(&p, &t, &[0, 1, 0, 1, 1, 0]).unwrap().unwrap().loss;
            prop_assert!((-1e-12..=2.0 + 1e-12).contains(&l));
        }
    }
}
