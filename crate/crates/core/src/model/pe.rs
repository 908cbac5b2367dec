use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Interleaved sinusoidal table `[len, d]`: even columns `sin(pos / 10000^(2i/d))`,
/// odd columns the matching cosine.
pub fn sinusoidal_pe<T: Scalar>(len: usize, d: usize) -> Result<Tensor<T>> {
    if d == 0 || !d.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "positional table needs an even, positive width, got {d}"
        )));
    }
    let mut data = Vec::with_capacity(len * d);
    for pos in 0..len {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            data.push(T::from_f64(angle.sin()));
            data.push(T::from_f64(angle.cos()));
        }
    }
    Tensor::new(vec![len, d], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_row_alternates() {
        let pe = sinusoidal_pe::<f64>(4, 8).unwrap();
        assert_eq!(&pe.data()[..8], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn values_bounded() {
        let pe = sinusoidal_pe::<f32>(512, 64).unwrap();
        assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn sin_one() {
        let pe = sinusoidal_pe::<f64>(2, 4).unwrap();
        assert!((pe.get(&[1, 0]).unwrap() - 0.84147).abs() < 1e-5);
        assert_eq!(pe.get(&[1, 0]).unwrap(), 1f64.sin());
    }

    #[test]
    fn odd_width_rejected() {
        assert!(matches!(sinusoidal_pe::<f32>(4, 7), Err(Error::Config(_))));
    }
}
