//! Recovery of age-dependent division and death rates of proliferating cell
//! populations from intermitotic-time (IMT) histograms and growth curves,
//! and simulation of the age-structured population with quiescence.
//!
//! The numerical core is generic over the floating point type through
//! [`Scalar`]; the `*64` aliases below fix it to `f64`, which is what the
//! command-line tools and the published tolerances assume.

pub mod error;
pub mod fitter;
pub mod growth_fit;
pub mod histogram;
pub mod imt_models;
pub mod inversion;
pub mod quadrature;
mod scalar;
pub mod simulator;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use fitter::{fit_imt, fit_target, mass_check, FitOptions, FitResult, FitTarget, MassCheck};
pub use growth_fit::{fit_growth, GrowthFit, GrowthSeries};
pub use histogram::{Histogram, HistogramKind};
pub use imt_models::{erfc, erfc_primitive, DivisionRate, FamilyKind, ModelFamily, TabulatedRate};
pub use inversion::{best_erfc, erfc_distance, invert_imt, InvertedRate};
pub use quadrature::AgeGrid;
pub use simulator::{imt_experiment, quiescent_fraction, simulate, ImtExperiment, InitialProfile, SimConfig, SimOutput};
pub use spectral::{
    equilibrium, equilibrium_on, gre_functional, solve_lambda, weighted_gap, AgeProfile, EigenPair, SpectralOptions,
};

pub type Histogram64 = Histogram<f64>;
pub type GrowthSeries64 = GrowthSeries<f64>;
pub type GrowthFit64 = GrowthFit<f64>;
pub type ModelFamily64 = ModelFamily<f64>;
pub type DivisionRate64 = DivisionRate<f64>;
pub type FitResult64 = FitResult<f64>;
pub type EigenPair64 = EigenPair<f64>;
pub type SimConfig64 = SimConfig<f64>;
pub type SimOutput64 = SimOutput<f64>;

pub type Histogram32 = Histogram<f32>;
pub type ModelFamily32 = ModelFamily<f32>;
