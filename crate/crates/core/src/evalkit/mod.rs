//! Evaluation: ranking and threshold metrics, operating points at fixed
//! specificity, confusion matrices, and patient-disjoint fold assignment.

mod folds;
mod metrics;
mod report;

pub use folds::{check_disjoint, make_patient_folds, FoldPlan, PatientSummary};
pub use metrics::{
    auprc, confusion_at, confusion_matrix_multiclass, multiclass_accuracy, multiclass_bac,
    rates_at_threshold, roc_auc, roc_curve, sen_at_spe, sum_matrices, Confusion, Rates, SenAtSpe,
};
pub use report::{binary_report, fmt3, fold_std, matrix_csv, mean_report, MetricsReport, Table};
