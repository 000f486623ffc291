pub mod blowup;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod helmholtz;
pub mod lagrangian;
pub mod littlewood_paley;
pub mod picard;
pub mod quadrature;
pub mod trajectory;

pub use dynamics::{Controls, Model, Params, Profile, Run, RunStatus, State};
pub use error::{Error, Result};
pub use grid::{Field, Grid};
