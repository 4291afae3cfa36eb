//! Real-arithmetic certificate checks and the forget-loss budget analysis.

mod budget;
mod kkt;

pub use budget::{completed_square, forget_budget, forget_gain_report, quadratic_f, ForgetBudget, DEFAULT_Q_DAMPING};
pub use kkt::{check_kkt, KktCertificate, DEFAULT_REAL_TOL};
