use thiserror::Error;

/// Errors surfaced by solvers, constructors and simulators.
#[derive(Error, Debug)]
pub enum Error {
    #[error("evaluation outside the state interval: x = {x}, interval = ({lo}, {hi})")]
    OutsideInterval { x: f64, lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("no sign change of {what} on [{lo}, {hi}]; single-crossing assumption not satisfied")]
    NoSignChange { what: String, lo: f64, hi: f64 },

    #[error("{what} changes sign more than once; crossings at {crossings:?}")]
    MultipleCrossings { what: String, crossings: Vec<f64> },

    #[error("no equilibrium root found in the search box a in ({a_lo}, {a_hi}), b in ({b_lo}, {b_hi}); best residual {best_residual:.3e}")]
    NoEquilibrium {
        a_lo: f64,
        a_hi: f64,
        b_lo: f64,
        b_hi: f64,
        best_residual: f64,
        /// Residual norm sampled on the multi-start grid, for post-mortems.
        landscape: Vec<(f64, f64, f64)>,
    },

    #[error("numerical-quality gate failed: {0}")]
    Quality(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tag an error with the pipeline stage it surfaced in.
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
