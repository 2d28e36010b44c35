use alloc::vec::Vec;

use rand::Rng;

use super::{Scalar, Tensor};
use crate::error::invalid;
use crate::Result;

/// He-uniform initialization: i.i.d. `U(−√(6/fan_in), √(6/fan_in))`, which
/// has variance `2/fan_in`. Draws are made in `f64` and then cast, so `f32`
/// and `f64` tensors from the same stream agree up to rounding.
pub fn he_init<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Result<Tensor<T>> {
    if fan_in == 0 {
        return Err(invalid!("fan_in must be >= 1"));
    }
    let bound = libm::sqrt(6.0 / fan_in as f64);
    let len: usize = shape.iter().product();
    let data: Vec<T> = (0..len)
        .map(|_| T::lit(rng.random_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data)
}
