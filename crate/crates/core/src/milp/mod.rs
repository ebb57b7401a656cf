//! Mixed-integer formulations: the incremental model, the `z`-space envelope
//! model, the discretized composite relaxations, the logarithmic `lambda`
//! models, and an LP-format writer and reader.

pub mod dcr;
pub mod family;
pub mod incremental;
pub mod log;
pub mod lpfile;
pub mod model;

pub use dcr::{
    build_dcr, build_dcr_plus, candidate_pieces, g_map, AffineFn, DcrSpec, Evaluator, LocalBoundTable, Relaxation,
    WRow,
};
pub use family::{ChainFamily, LinExpr};
pub use incremental::{
    build_incremental, build_mip_z, check_zdelta_counterexample, check_zdelta_point, delta_pattern, ZDeltaReport,
};
pub use log::{build_log_formulation, build_sos2_log, build_w_hull, gray_code, LogMode};
pub use lpfile::{parse_lp, write_lp};
pub use model::{Constraint, MilpModel, Separator, VarKind, Variable, FULL_FAMILY_LIMIT};
