use std::fmt;

use nalgebra::ComplexField;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Scalar field of the measurement vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Real => f.write_str("real"),
            Field::Complex => f.write_str("complex"),
        }
    }
}

/// Scalars the numerical code is generic over: `f64` and `Complex64`.
pub trait Scalar:
    ComplexField<RealField = f64> + Copy + Send + Sync + fmt::Debug + 'static
{
    const FIELD: Field;

    /// A uniformly random unit-modulus value: Rademacher for reals, a uniform
    /// phase for complex scalars.
    fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Builds a scalar from real and imaginary parts. `None` when the field is
    /// real and `im` is nonzero.
    fn from_parts(re: f64, im: f64) -> Option<Self>;

    fn parts(self) -> (f64, f64);

    /// `x / |x|`, and zero at zero.
    fn phase(self) -> Self {
        let r = self.modulus();
        if r == 0.0 {
            Self::zero()
        } else {
            self.unscale(r)
        }
    }
}

impl Scalar for f64 {
    const FIELD: Field = Field::Real;

    fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    fn from_parts(re: f64, im: f64) -> Option<Self> {
        (im == 0.0).then_some(re)
    }

    fn parts(self) -> (f64, f64) {
        (self, 0.0)
    }
}

impl Scalar for Complex64 {
    const FIELD: Field = Field::Complex;

    fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        Complex64::from_polar(1.0, theta)
    }

    fn from_parts(re: f64, im: f64) -> Option<Self> {
        Some(Complex64::new(re, im))
    }

    fn parts(self) -> (f64, f64) {
        (self.re, self.im)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn signs_have_unit_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            assert_eq!(f64::random_sign(&mut rng).abs(), 1.0);
            let z = Complex64::random_sign(&mut rng);
            assert!((z.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn phase_of_zero_is_zero() {
        assert_eq!(0.0f64.phase(), 0.0);
        assert_eq!((-3.0f64).phase(), -1.0);
        let z = Complex64::new(3.0, 4.0).phase();
        assert!((z - Complex64::new(0.6, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn real_rejects_imaginary_part() {
        assert_eq!(f64::from_parts(1.0, 0.0), Some(1.0));
        assert_eq!(f64::from_parts(1.0, 2.0), None);
    }
}
