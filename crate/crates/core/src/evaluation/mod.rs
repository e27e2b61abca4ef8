//! Cell-level scoring of heatmaps against point and region annotations, ROC analysis,
//! classifier metrics and bias diagnostics.

mod annotations;
mod bias;
mod metrics;
mod roc;
mod scoring;

pub use annotations::{
    disc_pixels, is_simple, point_in_polygon, polygon_pixels, AnnotationSet, CellClass, PointAnnotation,
    RegionAnnotation, RegionClass,
};
pub use bias::{
    center_mass_profile, class_average_heatmap, region_relevance_comparison, region_rows_csv, CenterMass, RegionRow,
};
pub use metrics::{classifier_metrics, ClassifierMetrics};
pub use roc::{roc, RocCurve};
pub use scoring::{
    cell_and_region_labels, cell_labels, cell_scores, random_baseline_auc, region_score, BaselineAuc, CellScore, Scored,
};

/// Default acceptance radius in pixels at 200-pixel patch resolution.
pub const DEFAULT_RADIUS: f32 = 25.0;

#[cfg(test)]
mod tests;
