use super::{Scalar, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// A trainable tensor with its gradient and Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T = f32> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
    pub step_count: u64,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let zeros = Tensor::zeros(value.shape());
        Self {
            grad: zeros.clone(),
            adam_m: zeros.clone(),
            adam_v: zeros,
            value,
            step_count: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// One bias-corrected Adam update using the stored gradient.
    pub fn adam_step(&mut self, learning_rate: f64) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - libm::pow(ADAM_BETA1, t as f64);
        let bc2 = 1.0 - libm::pow(ADAM_BETA2, t as f64);
        let (b1, b2) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2));
        let (one_b1, one_b2) = (T::lit(1.0 - ADAM_BETA1), T::lit(1.0 - ADAM_BETA2));
        let (bc1, bc2) = (T::lit(bc1), T::lit(bc2));
        let lr = T::lit(learning_rate);
        let eps = T::lit(ADAM_EPSILON);
        let values = self.value.data_mut().iter_mut();
        let moments = self.adam_m.data_mut().iter_mut().zip(self.adam_v.data_mut());
        for ((p, (m, v)), &g) in values.zip(moments).zip(self.grad.data()) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_gradient_leaves_value() {
        let mut p = Param::new(Tensor::<f64>::from_vec(&[2], vec![0.5, -1.0]).unwrap());
        p.adam_step(1e-3);
        assert_eq!(p.value.data(), &[0.5, -1.0]);
        assert_eq!(p.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [1e-3, 0.5, -7.0] {
            let mut p = Param::new(Tensor::<f64>::zeros(&[1]));
            p.grad.data_mut()[0] = g;
            p.adam_step(1e-4);
            let expected = -1e-4 * g / (g.abs() + ADAM_EPSILON);
            assert!((p.value.data()[0] - expected).abs() < 1e-15);
        }
    }
}
