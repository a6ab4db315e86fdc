use super::{AutodiffError, Tensor};

/// Adam with bias correction.
///
/// Moments are created lazily on the first step so one state can be built
/// before the parameter list is known.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
}

impl AdamState {
    pub fn new(lr: f64, beta1: f64) -> Self {
        Self::with_betas(lr, beta1, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        assert!(lr >= 0.0, "learning rate must be non-negative");
        assert!((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2));
        assert!(eps > 0.0);
        Self {
            lr,
            beta1,
            beta2,
            eps,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// Applies one update to `params` in place.
    ///
    /// A non-finite gradient aborts the step before anything is modified.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f64>]) -> Result<(), AutodiffError> {
        if params.len() != grads.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "adam_step",
                lhs: vec![params.len()],
                rhs: vec![grads.len()],
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != g.len() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(AutodiffError::NonFiniteGradient { param: i });
            }
        }
        if self.first_moment.is_empty() {
            self.first_moment = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second_moment = self.first_moment.clone();
        } else if self.first_moment.len() != grads.len()
            || self.first_moment.iter().zip(grads).any(|(m, g)| m.len() != g.len())
        {
            return Err(AutodiffError::ShapeMismatch {
                op: "adam_step",
                lhs: self.first_moment.iter().map(Vec::len).collect(),
                rhs: grads.iter().map(Vec::len).collect(),
            });
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p.values_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = Tensor::matrix(1, 3, vec![0.5, -1.0, 2.0]);
        let before = p.clone();
        let mut adam = AdamState::new(1e-2, 0.4);
        for _ in 0..10 {
            adam.step(&mut [&mut p], &[vec![0.0; 3]]).unwrap();
        }
        assert_eq!(p.values(), before.values());
        assert_eq!(adam.step_count(), 10);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        for g in [3.0, -0.25] {
            let mut p = Tensor::scalar(1.0);
            let mut adam = AdamState::new(0.1, 0.9);
            adam.step(&mut [&mut p], &[vec![g]]).unwrap();
            let expected = 1.0 - 0.1 * f64::signum(g);
            assert!((p.item() - expected).abs() < 1e-7, "{} vs {}", p.item(), expected);
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let mut x = Tensor::scalar(0.0);
        let mut adam = AdamState::new(1e-2, 0.9);
        for _ in 0..5000 {
            let g = 2.0 * (x.item() - 2.0);
            adam.step(&mut [&mut x], &[vec![g]]).unwrap();
        }
        assert!((x.item() - 2.0).abs() < 1e-3, "x = {}", x.item());
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut p = Tensor::matrix(1, 2, vec![1.0, 1.0]);
        let mut adam = AdamState::new(0.1, 0.4);
        let err = adam.step(&mut [&mut p], &[vec![1.0, f64::NAN]]).unwrap_err();
        assert_eq!(err, AutodiffError::NonFiniteGradient { param: 0 });
        assert_eq!(p.values(), &[1.0, 1.0]);
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn misaligned_grads_rejected() {
        let mut p = Tensor::matrix(1, 2, vec![1.0, 1.0]);
        let mut adam = AdamState::new(0.1, 0.4);
        assert!(adam.step(&mut [&mut p], &[vec![1.0]]).is_err());
    }
}
