use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Adam with bias correction. Moment buffers are created on the first step and
/// bound positionally to the parameter list passed to [`Adam::step`].
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    moments: Vec<(Matrix, Matrix)>,
}

impl Adam {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: Vec<&Matrix>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| {
                    (
                        Matrix::zeros(p.rows(), p.cols()),
                        Matrix::zeros(p.rows(), p.cols()),
                    )
                })
                .collect();
        } else if self.moments.len() != params.len() {
            return Err(Error::Shape("parameter list changed between steps".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.into_iter().zip(grads).zip(&mut self.moments) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::Shape(format!(
                    "gradient {:?} does not match parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let (ps, gs) = (p.as_mut_slice(), g.as_slice());
            let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
            for k in 0..ps.len() {
                ms[k] = self.beta1 * ms[k] + (1.0 - self.beta1) * gs[k];
                vs[k] = self.beta2 * vs[k] + (1.0 - self.beta2) * gs[k] * gs[k];
                let mhat = ms[k] / c1;
                let vhat = vs[k] / c2;
                ps[k] -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_by_hand() {
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8);
        let mut p = Matrix::zeros(1, 1);
        let g = Matrix::filled(1, 1, 1.0);
        adam.step(vec![&mut p], vec![&g]).unwrap();
        // m̂ = g, v̂ = g²: update = −lr · g / (|g| + ε)
        let expected = -0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p[(0, 0)] - expected).abs() < 1e-15);
        assert!((p[(0, 0)] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut adam = Adam::new(0.05, 0.9, 0.999, 1e-8);
        let mut p = Matrix::from_rows(&[[3.0, -2.0]]).unwrap();
        for _ in 0..2000 {
            let g = p.scaled(2.0);
            adam.step(vec![&mut p], vec![&g]).unwrap();
        }
        assert!(p.max_abs() < 1e-2);
    }
}
