//! Informative-tile selection from attention maps, optionally guided by
//! clustering the instance features.

mod budget;
mod kmeans;
mod pca;
mod select;

pub use self::budget::{allocate_budget, cluster_attention, ClusterAttention};
pub use self::kmeans::{kmeans, ClusterAssignment, MAX_ITERATIONS, SHIFT_TOLERANCE};
pub use self::pca::{pca_fit_transform, PcaModel};
pub use self::select::{select_att_cluster, select_att_topk, select_by_blue_ratio, select_top_n_by_attention, SelectionResult};
