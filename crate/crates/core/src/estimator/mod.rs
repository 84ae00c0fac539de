//! Cost estimation from termination signals.

mod dataset;
mod fit;
mod likelihood;
mod radius;

pub use dataset::{build_dataset, AggregatedRow, CoordinateMap, TerminationDataset, VisitVector};
pub use fit::{fit_mle, recommended_lambda, BiasMode, CostEstimate, FitOptions};
pub use likelihood::{bias_derivative, gradient, log_likelihood};
pub use radius::{confidence_radius, radius_from_parts, ConfidenceRadii, RadiusMode, RadiusParams};
