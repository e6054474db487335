//! ERM and the three generalization-enhanced training schemes: adversarial
//! (gradient reversal), minimax entropy, and prototypical self-learning.

pub mod bank;
pub mod config;
pub mod losses;
pub mod objective;
pub mod schedule;
pub mod sgd;
pub mod trainer;

pub use bank::{kmeans, MemoryBank, Prototypes};
pub use config::{Method, ScheduleKind, TrainerConfig};
pub use losses::{
    loss_adv, loss_cls, loss_entropy_target, loss_is, loss_mim, proto_distribution, proto_nce,
};
pub use objective::{batch_step, Batch, BatchPrototypes, Coefficients, StepLosses, StepOutput};
pub use schedule::{dann_schedule, linear_warmup, progress, Schedule};
pub use sgd::{GroupRates, Sgd};
pub use trainer::{trace_csv, train, TraceRow, TrainReport, TRACE_HEADER};
