//! Approximate nearest-neighbor search for queries restricted to a subspace
//! of low doubling dimension, over data of arbitrary dimension.

pub mod ann_avd;
pub mod ann_const;
pub mod ann_eps;
pub mod bench;
pub mod datagen;
pub mod embedding;
pub mod error;
pub mod io;
pub mod metric;
pub mod net_tree;
pub mod online_avd;
pub mod oracle;
pub mod wspd;

pub use ann_avd::AvdIndex;
pub use ann_const::{AnnIndex, Answer, ConstAnnIndex};
pub use ann_eps::EpsAnnIndex;
pub use error::{Error, Result};
pub use metric::MetricInstance;
pub use online_avd::OnlineAvd;
