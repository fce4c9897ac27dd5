//! Training losses over sentence embeddings, with exact input gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{axpy, dot, norm, Matrix, Rng};

pub const DEFAULT_TEMPERATURE: f64 = 0.05;

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grad_a: Matrix,
    pub grad_b: Matrix,
}

fn unit_rows(m: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut unit = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let n = norm(m.row(i));
        if n == 0.0 || !n.is_finite() {
            return Err(Error::UndefinedSimilarity);
        }
        unit.row_mut(i).iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Ok((unit, norms))
}

/// In-batch InfoNCE over cosine similarities: row `i` of `anchors` should pick
/// row `i` of `positives` among all positives.
pub fn contrastive_loss(
    anchors: &Matrix,
    positives: &Matrix,
    temperature: f64,
) -> Result<LossOutput> {
    if anchors.shape() != positives.shape() {
        return Err(Error::Shape(format!(
            "anchors {:?} and positives {:?} differ",
            anchors.shape(),
            positives.shape()
        )));
    }
    if anchors.rows() == 0 {
        return Err(Error::Input(
            "contrastive loss needs at least one pair".into(),
        ));
    }
    if !(temperature > 0.0) {
        return Err(Error::Config(format!(
            "temperature {temperature} must be positive"
        )));
    }
    let b = anchors.rows();
    let (ua, na) = unit_rows(anchors)?;
    let (up, np) = unit_rows(positives)?;
    let cos = ua.matmul_t(&up)?;

    let mut loss = 0.0;
    // dL/dcos
    let mut g = Matrix::zeros(b, b);
    for i in 0..b {
        let s: Vec<f64> = cos.row(i).iter().map(|c| c / temperature).collect();
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = s.iter().map(|x| (x - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - s[i];
        let gr = g.row_mut(i);
        for j in 0..b {
            let p = (s[j] - lse).exp();
            gr[j] = (p - if i == j { 1.0 } else { 0.0 }) / (b as f64 * temperature);
        }
    }
    loss /= b as f64;

    let mut grad_a = Matrix::zeros(b, anchors.cols());
    let mut grad_b = Matrix::zeros(b, anchors.cols());
    for i in 0..b {
        for j in 0..b {
            let gij = g[(i, j)];
            if gij == 0.0 {
                continue;
            }
            let c = cos[(i, j)];
            let ga = grad_a.row_mut(i);
            axpy(gij / na[i], up.row(j), ga);
            axpy(-gij * c / na[i], ua.row(i), ga);
            let gb = grad_b.row_mut(j);
            axpy(gij / np[j], ua.row(i), gb);
            axpy(-gij * c / np[j], up.row(j), gb);
        }
    }
    Ok(LossOutput {
        loss,
        grad_a,
        grad_b,
    })
}

/// Softmax head over `[u; v; u − v]` for 3-way entailment labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliClassifier {
    /// `3 × 3d`.
    pub weight: Matrix,
    /// `1 × 3`.
    pub bias: Matrix,
}

pub const NLI_CLASSES: usize = 3;

impl NliClassifier {
    pub fn zeros(embedding_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(NLI_CLASSES, 3 * embedding_dim),
            bias: Matrix::zeros(1, NLI_CLASSES),
        }
    }

    pub fn init(embedding_dim: usize, rng: &mut Rng) -> Self {
        let mut c = Self::zeros(embedding_dim);
        c.weight
            .as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = rng.uniform(-0.05, 0.05));
        c
    }

    pub fn embedding_dim(&self) -> usize {
        self.weight.cols() / 3
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("weight".to_string(), &self.weight),
            ("bias".to_string(), &self.bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![
            ("weight".to_string(), &mut self.weight),
            ("bias".to_string(), &mut self.bias),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct NliLossOutput {
    pub loss: f64,
    pub grad_u: Matrix,
    pub grad_v: Matrix,
    pub grad_classifier: NliClassifier,
}

/// Mean cross-entropy of `softmax(W·[u; v; u − v] + b)`.
pub fn nli_loss(
    u: &Matrix,
    v: &Matrix,
    labels: &[usize],
    clf: &NliClassifier,
) -> Result<NliLossOutput> {
    if u.shape() != v.shape() {
        return Err(Error::Shape(format!(
            "premise {:?} and hypothesis {:?} embeddings differ",
            u.shape(),
            v.shape()
        )));
    }
    let (b, d) = u.shape();
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "{} labels for {b} pairs",
            labels.len()
        )));
    }
    if b == 0 {
        return Err(Error::Input("NLI loss needs at least one pair".into()));
    }
    if clf.weight.shape() != (NLI_CLASSES, 3 * d) {
        return Err(Error::Shape(format!(
            "classifier expects {}-dim embeddings, got {d}",
            clf.embedding_dim()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= NLI_CLASSES) {
        return Err(Error::Input(format!("NLI label {bad} is outside 0..3")));
    }

    let mut loss = 0.0;
    let mut grad_u = Matrix::zeros(b, d);
    let mut grad_v = Matrix::zeros(b, d);
    let mut grad_classifier = NliClassifier::zeros(d);
    let mut features = vec![0.0; 3 * d];
    for i in 0..b {
        let (ui, vi) = (u.row(i), v.row(i));
        features[..d].copy_from_slice(ui);
        features[d..2 * d].copy_from_slice(vi);
        for k in 0..d {
            features[2 * d + k] = ui[k] - vi[k];
        }
        let logits: Vec<f64> = (0..NLI_CLASSES)
            .map(|c| dot(clf.weight.row(c), &features) + clf.bias.as_slice()[c])
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        loss += lse - logits[labels[i]];

        let mut d_feat = vec![0.0; 3 * d];
        for c in 0..NLI_CLASSES {
            let p = (logits[c] - lse).exp();
            let g = (p - if c == labels[i] { 1.0 } else { 0.0 }) / b as f64;
            axpy(g, &features, grad_classifier.weight.row_mut(c));
            grad_classifier.bias.as_mut_slice()[c] += g;
            axpy(g, clf.weight.row(c), &mut d_feat);
        }
        let gu = grad_u.row_mut(i);
        for k in 0..d {
            gu[k] = d_feat[k] + d_feat[2 * d + k];
        }
        let gv = grad_v.row_mut(i);
        for k in 0..d {
            gv[k] = d_feat[d + k] - d_feat[2 * d + k];
        }
    }
    Ok(NliLossOutput {
        loss: loss / b as f64,
        grad_u,
        grad_v,
        grad_classifier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;
    use proptest::prelude::*;

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 1.0], &[1.0, -1.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::UndefinedSimilarity)
        ));
    }

    #[test]
    fn contrastive_degenerate_batch() {
        let a = Matrix::from_rows(&[[0.3, -1.0, 2.0]]).unwrap();
        let p = Matrix::from_rows(&[[5.0, 1.0, 0.0]]).unwrap();
        assert_eq!(contrastive_loss(&a, &p, 0.05).unwrap().loss, 0.0);
    }

    #[test]
    fn contrastive_uniform_similarities_give_ln_b() {
        // every anchor and positive is the same direction
        let a = Matrix::filled(5, 3, 1.0);
        let p = Matrix::filled(5, 3, 2.0);
        let out = contrastive_loss(&a, &p, 0.05).unwrap();
        assert!((out.loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn contrastive_hand_value() {
        // cosine matrix [[1,0],[0,1]], tau = 1: −ln(e/(e+1))
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let out = contrastive_loss(&a, &a, 1.0).unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((out.loss - expected).abs() < 1e-12);
        assert!((out.loss - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn contrastive_zero_row() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            contrastive_loss(&a, &a, 0.1),
            Err(Error::UndefinedSimilarity)
        ));
    }

    #[test]
    fn nli_hand_values() {
        let u = Matrix::from_rows(&[[0.5, -0.2]]).unwrap();
        let v = Matrix::from_rows(&[[0.1, 0.7]]).unwrap();
        let zero = NliClassifier::zeros(2);
        let out = nli_loss(&u, &v, &[1], &zero).unwrap();
        assert!((out.loss - 3f64.ln()).abs() < 1e-12);

        let mut saturated = NliClassifier::zeros(2);
        saturated.bias = Matrix::from_rows(&[[100.0, -100.0, -100.0]]).unwrap();
        let u4 = Matrix::filled(4, 2, 0.3);
        let out = nli_loss(&u4, &u4, &[0; 4], &saturated).unwrap();
        assert!(out.loss < 1e-40);

        // logits (1, 0, 0), label 0
        let mut clf = NliClassifier::zeros(1);
        clf.bias = Matrix::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        let one = Matrix::from_rows(&[[0.4]]).unwrap();
        let out = nli_loss(&one, &one, &[0], &clf).unwrap();
        let e = 1f64.exp();
        assert!((out.loss + (e / (e + 2.0)).ln()).abs() < 1e-12);
        assert!((out.loss - 0.5514).abs() < 1e-4);
    }

    #[test]
    fn nli_rejects_bad_labels() {
        let u = Matrix::filled(1, 2, 0.1);
        assert!(matches!(
            nli_loss(&u, &u, &[3], &NliClassifier::zeros(2)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn contrastive_gradient_matches_finite_differences() {
        let mut rng = Rng::new(5, 0);
        let a = random(4, 3, &mut rng);
        let p = random(4, 3, &mut rng);
        let tau = 0.3;
        let out = contrastive_loss(&a, &p, tau).unwrap();
        let h = 1e-6;
        for (which, base, grad) in [(0, &a, &out.grad_a), (1, &p, &out.grad_b)] {
            for k in 0..base.as_slice().len() {
                let mut plus = base.clone();
                plus.as_mut_slice()[k] += h;
                let mut minus = base.clone();
                minus.as_mut_slice()[k] -= h;
                let (lp, lm) = if which == 0 {
                    (
                        contrastive_loss(&plus, &p, tau).unwrap().loss,
                        contrastive_loss(&minus, &p, tau).unwrap().loss,
                    )
                } else {
                    (
                        contrastive_loss(&a, &plus, tau).unwrap().loss,
                        contrastive_loss(&a, &minus, tau).unwrap().loss,
                    )
                };
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    rel_err(fd, grad.as_slice()[k]) < 1e-5,
                    "input {which} entry {k}: {fd} vs {}",
                    grad.as_slice()[k]
                );
            }
        }
    }

    #[test]
    fn nli_gradient_matches_finite_differences() {
        let mut rng = Rng::new(9, 0);
        let u = random(3, 2, &mut rng);
        let v = random(3, 2, &mut rng);
        let mut clf = NliClassifier::init(2, &mut rng);
        clf.weight.scale(10.0);
        let labels = [0, 2, 1];
        let out = nli_loss(&u, &v, &labels, &clf).unwrap();
        let h = 1e-6;
        let loss =
            |u: &Matrix, v: &Matrix, c: &NliClassifier| nli_loss(u, v, &labels, c).unwrap().loss;
        for k in 0..6 {
            let (mut up, mut um) = (u.clone(), u.clone());
            up.as_mut_slice()[k] += h;
            um.as_mut_slice()[k] -= h;
            let fd = (loss(&up, &v, &clf) - loss(&um, &v, &clf)) / (2.0 * h);
            assert!(rel_err(fd, out.grad_u.as_slice()[k]) < 1e-5);
            let (mut vp, mut vm) = (v.clone(), v.clone());
            vp.as_mut_slice()[k] += h;
            vm.as_mut_slice()[k] -= h;
            let fd = (loss(&u, &vp, &clf) - loss(&u, &vm, &clf)) / (2.0 * h);
            assert!(rel_err(fd, out.grad_v.as_slice()[k]) < 1e-5);
        }
        for k in 0..clf.weight.as_slice().len() {
            let (mut cp, mut cm) = (clf.clone(), clf.clone());
            cp.weight.as_mut_slice()[k] += h;
            cm.weight.as_mut_slice()[k] -= h;
            let fd = (loss(&u, &v, &cp) - loss(&u, &v, &cm)) / (2.0 * h);
            assert!(rel_err(fd, out.grad_classifier.weight.as_slice()[k]) < 1e-5);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn contrastive_invariances(seed in any::<u64>(), b in 1usize..7, scale in 0.1f64..10.0) {
            let mut rng = Rng::new(seed, 0);
            let a = random(b, 4, &mut rng);
            let p = random(b, 4, &mut rng);
            let base = contrastive_loss(&a, &p, 0.1).unwrap().loss;
            prop_assert!(base >= 0.0);

            let scaled = contrastive_loss(&a.scaled(scale), &p.scaled(scale), 0.1).unwrap().loss;
            prop_assert!((scaled - base).abs() <= 1e-9 * base.max(1.0));

            let mut perm: Vec<usize> = (0..b).collect();
            rng.shuffle(&mut perm);
            let permuted = contrastive_loss(&a.select_rows(&perm), &p.select_rows(&perm), 0.1).unwrap().loss;
            prop_assert!((permuted - base).abs() <= 1e-9 * base.max(1.0));
        }
    }
}
