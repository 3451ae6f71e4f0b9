//! Complex channel vectors and the correlation primitives shared by the map
//! builder, the schedulers and the receivers.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Uplink channel between one transmit position and one BS array.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelVector(DVector<Complex64>);

impl ChannelVector {
    pub fn new(entries: Vec<Complex64>) -> Self {
        Self(DVector::from_vec(entries))
    }

    pub fn from_real(entries: &[f64]) -> Self {
        Self::new(entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<Complex64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.norm_squared()
    }

    /// `selfᴴ · other`.
    pub fn inner(&self, other: &ChannelVector) -> Complex64 {
        self.0.dotc(&other.0)
    }

    pub fn scaled(&self, factor: f64) -> ChannelVector {
        ChannelVector(&self.0 * Complex64::new(factor, 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl From<DVector<Complex64>> for ChannelVector {
    fn from(v: DVector<Complex64>) -> Self {
        Self(v)
    }
}

/// Normalized inner-product magnitude `|aᴴb| / (‖a‖‖b‖)`, clamped to `[0, 1]`.
pub fn correlation(a: &ChannelVector, b: &ChannelVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((a.inner(b).norm() / (na * nb)).clamp(0.0, 1.0))
}
