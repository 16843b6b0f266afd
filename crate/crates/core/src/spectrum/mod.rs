//! Radial spectral densities, their moments and the derivatives of the
//! covariance kernel they induce.

mod density;
mod jet;
mod moments;

pub use density::{DensitySpec, Family, SpectralDensity};
pub use jet::{
    covariance_jet, derivative_from_g, multi_indices, psi_envelope, psi_profile, CovarianceJet,
    CovarianceKernel, MAX_ORDER,
};
pub use moments::{
    moment_ik, nondegeneracy_ratio, r_matrix, radial_cutoff, spectral_moments, squared_moment,
    Nondegeneracy, SpectralMoments,
};

use crate::error::Result;

/// A density together with its moments and covariance kernel.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    pub density: SpectralDensity,
    pub moments: SpectralMoments,
    pub kernel: CovarianceKernel,
}

impl SpectralModel {
    pub fn new(density: SpectralDensity) -> Result<Self> {
        let m = density.dim();
        let moments = spectral_moments(&density, m)?;
        let kernel = CovarianceKernel::new(&density, m)?;
        Ok(SpectralModel {
            density,
            moments,
            kernel,
        })
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }
}
