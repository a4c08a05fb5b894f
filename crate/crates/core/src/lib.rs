//! Domain-of-attraction and absorption-time optimization for parametrized
//! vector fields, through the upwind finite-volume discretization of the
//! flow as a leaky Markov jump process on a uniform grid.

pub mod band;
pub mod error;
pub mod field;
pub mod generator;
pub mod grid;
pub mod io;
pub mod mjp;
pub mod optimize;
pub mod oracle;
pub mod sens;
pub mod solve;
pub mod sparse;

pub use error::{Error, Result};
pub use field::{ParamField, VectorField};
pub use generator::{Generator, GeneratorBundle, QuadratureRule};
pub use grid::{AxisBox, CellLabel, CellSet, Grid, Region, SelectRule};
pub use optimize::{OptConfig, OptOutcome, OptTrace};
pub use solve::{AbsorptionProblem, CellField, FieldTag};
