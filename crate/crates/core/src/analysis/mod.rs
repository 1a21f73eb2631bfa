//! Statistics over measured models: correlations, Pareto fronts, yearly
//! hulls, frontier trend fits, FLOPs-based estimates and setup comparisons.

pub mod compare;
pub mod estimate;
pub mod frontier;
pub mod hull;
pub mod pareto;
pub mod stats;

pub use compare::{
    cross_setup_correlation, input_size_scaling, metric_correlation, paired_improvement, scaling_group_key,
    GroupScaling, MetricCorrelation, PairedImprovement, PairedReport, ScalingEntry, ScalingReport, SetupCorrelation,
};
pub use estimate::{naive_estimate, underestimation_factors, Underestimation};
pub use frontier::{extrapolate_energy, fit_frontier, FrontierFit};
pub use hull::{convex_hull, tradeoff_hull, yearly_hulls, YearHull, YearPoint};
pub use pareto::{dominates, pareto_front, TradeoffPoint};
pub use stats::{average_ranks, geometric_summary, linear_fit, pearson, spearman, GeometricSummary};
