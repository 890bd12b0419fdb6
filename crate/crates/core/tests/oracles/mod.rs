//! Oracle checks shared by the solver and estimator test suites and by the
//! acceptance run. Each check returns `Err` with a description instead of
//! panicking so that callers can either assert or tally.
#![allow(dead_code)]

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub mod identities;
pub mod solver;

pub type Check = Result<(), String>;
