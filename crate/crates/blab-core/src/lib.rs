//! Bergman kernels of planar grid domains: geometry, fitted kernels, zero certificates and experiments.

pub mod basis;
pub mod geom;
pub mod kernel;
pub mod lab;
pub mod scalar;
pub mod zeros;

pub type Complex = num_complex::Complex64;
pub type Domain = geom::GridDomain<f64>;
pub type Model = kernel::KernelModel<f64>;
pub type ClosedForm = kernel::ClosedFormKernel<f64>;
pub type Basis = basis::PlanarBasis<f64>;
