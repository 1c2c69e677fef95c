//! Ordinary least squares on one regressor.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit<T> {
    pub slope: T,
    pub intercept: T,
    /// Coefficient of determination.
    pub r2: T,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("regressor has zero variance")]
    ZeroVariance,
    #[error("non-finite sample")]
    NonFinite,
}

/// Fits `y = slope·x + intercept` by least squares.
pub fn linear_fit<T: Scalar>(xs: &[T], ys: &[T], min_samples: usize) -> Result<LinearFit<T>, FitError> {
    let n = xs.len().min(ys.len());
    let needed = min_samples.max(2);
    if n < needed {
        return Err(FitError::TooFew { needed, got: n });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let nf = T::from_usize_lossy(n);
    let mx = xs.iter().copied().sum::<T>() / nf;
    let my = ys.iter().copied().sum::<T>() / nf;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if !(sxx > T::zero()) || sxx <= T::epsilon() * mx * mx * nf {
        return Err(FitError::ZeroVariance);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: T = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if syy > T::zero() {
        (T::one() - sse / syy).max(T::zero()).min(T::one())
    } else {
        T::one()
    };
    Ok(LinearFit { slope, intercept, r2 })
}
