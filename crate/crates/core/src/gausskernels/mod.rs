//! Exact finite-N kernels of the Gaussian ensembles.

pub mod hermite;
pub mod integrals;
pub mod kernels;

pub use hermite::HermiteEvaluator;
pub use integrals::{gauss_hermite_weighted, hermite_integrals, HermiteIntegrals};
pub use kernels::{
    density_correction, ClusterKernel, DensityOfStates, GoeCluster, GoeComponents, KernelCovariance, Symmetry,
    BULK_DELTA,
};

use crate::error::Result;
use crate::testfn::TestFunction;

pub fn weighted_hermite(n: usize, x: f64, deriv_order: u8) -> Result<f64> {
    HermiteEvaluator::<f64>::new(n).weighted_hermite(n, x, deriv_order)
}

/// `N^{1/4} psi_k(sqrt(N) lambda)`, the functions the kernels are built from.
pub fn scaled_function(n: usize, k: usize, lambda: f64) -> Result<f64> {
    let s = (n as f64).sqrt();
    let psi = HermiteEvaluator::<f64>::new(k).psi_upto(k, s * lambda)?;
    Ok(s.sqrt() * psi[k])
}

pub fn cd_kernel(n: usize, x: f64, y: f64) -> Result<f64> {
    Ok(ClusterKernel::new(n, Symmetry::Gue)?.cd_kernel(x, y))
}

pub fn gue_cluster(n: usize, x: f64, y: f64) -> Result<f64> {
    Ok(ClusterKernel::new(n, Symmetry::Gue)?.gue_cluster(x, y))
}

pub fn goe_cluster(n: usize, x: f64, y: f64) -> Result<GoeCluster> {
    ClusterKernel::new(n, Symmetry::Goe)?.goe_cluster(x, y)
}

pub fn kernel_covariance<F, G>(n: usize, symmetry: Symmetry, f: &F, g: &G) -> Result<KernelCovariance>
where
    F: TestFunction<f64> + ?Sized,
    G: TestFunction<f64> + ?Sized,
{
    ClusterKernel::new(n, symmetry)?.kernel_covariance(f, g)
}

pub fn density_of_states(n: usize, symmetry: Symmetry, e: f64) -> Result<DensityOfStates> {
    ClusterKernel::new(n, symmetry)?.density_of_states(e)
}
