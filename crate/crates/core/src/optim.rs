use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Plain Adam without weight decay.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. `grads[i]` of `None` means a zero gradient.
    pub fn step(&mut self, params: &mut [&mut Matrix<T>], grads: &[Option<Matrix<T>>]) {
        assert_eq!(params.len(), grads.len(), "one gradient slot per parameter");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter set changed between steps");
        self.step += 1;
        let b1 = T::c(self.beta1);
        let b2 = T::c(self.beta2);
        let one = T::one();
        let c1 = T::c(1.0 - self.beta1.powi(self.step as i32));
        let c2 = T::c(1.0 - self.beta2.powi(self.step as i32));
        let lr = T::c(self.lr);
        let eps = T::c(self.eps);
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = &grads[i] else {
                // m, v still decay so that the moments match a zero gradient
                self.m[i].scale_assign(b1);
                self.v[i].scale_assign(b2);
                apply(p, &self.m[i], &self.v[i], lr, c1, c2, eps);
                continue;
            };
            assert_eq!(g.shape(), p.shape(), "gradient shape");
            for ((m, v), &gv) in self.m[i].data_mut().iter_mut().zip(self.v[i].data_mut()).zip(g.data()) {
                *m = b1 * *m + (one - b1) * gv;
                *v = b2 * *v + (one - b2) * gv * gv;
            }
            apply(p, &self.m[i], &self.v[i], lr, c1, c2, eps);
        }
    }
}

fn apply<T: Scalar>(p: &mut Matrix<T>, m: &Matrix<T>, v: &Matrix<T>, lr: T, c1: T, c2: T, eps: T) {
    for ((w, &mv), &vv) in p.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
        let mhat = mv / c1;
        let vhat = vv / c2;
        *w = *w - lr * mhat / (vhat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = Matrix::<f64>::row_vector(&[1.0, -2.0, 0.5]);
        let g = Matrix::row_vector(&[0.3, -4.0, 0.0]);
        let mut adam = Adam::new(0.1);
        adam.step(&mut [&mut p], &[Some(g)]);
        assert!((p[(0, 0)] - 0.9).abs() < 1e-6);
        assert!((p[(0, 1)] + 1.9).abs() < 1e-6);
        assert_eq!(p[(0, 2)], 0.5);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Matrix::<f64>::row_vector(&[3.0, -1.0]);
        let mut adam = Adam::new(0.05);
        for _ in 0..2000 {
            let g = p.map(|x| 2.0 * x);
            adam.step(&mut [&mut p], &[Some(g)]);
        }
        assert!(p.data().iter().all(|x| x.abs() < 1e-3), "{p:?}");
    }
}
