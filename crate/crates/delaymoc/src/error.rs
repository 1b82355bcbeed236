//! Error types for the model, integrator and analysis layers.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("missing config key: {0}")]
    MissingKey(String),
    #[error("unknown config key: {0}")]
    UnknownKey(String),
    #[error("non-finite value for key: {0}")]
    NonFiniteValue(&'static str),
    #[error("box volume must be positive, got {0}")]
    NegativeVolume(f64),
    #[error("delay time must be non-negative, got {0}")]
    NegativeDelay(f64),
    #[error("invalid parameter value: {0}")]
    InvalidValue(&'static str),
    #[error("malformed params JSON: {0}")]
    Malformed(String),
    #[error("cannot read {0}: {1}")]
    Io(String, String),
}

impl ParamsError {
    pub fn from_serde(e: &serde_json::Error) -> ParamsError {
        let msg = e.to_string();
        if let Some(rest) = msg.strip_prefix("missing field `") {
            if let Some(name) = rest.split('`').next() {
                return ParamsError::MissingKey(name.to_string());
            }
        }
        if let Some(rest) = msg.strip_prefix("unknown field `") {
            if let Some(name) = rest.split('`').next() {
                return ParamsError::UnknownKey(name.to_string());
            }
        }
        ParamsError::Malformed(msg)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("equilibrium Newton iteration failed to converge from all seeds")]
    NoConvergence,
}

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("integration horizon {horizon} yr is shorter than the delay {tau} yr")]
    HorizonTooShort { horizon: f64, tau: f64 },
    #[error("state became non-finite at t = {0} yr")]
    NonFiniteState(f64),
    #[error("delayed lookup at t = {t_query} outside the history window [{lo}, {hi}]")]
    QueryOutOfWindow { t_query: f64, lo: f64, hi: f64 },
    #[error("an event interrupted a smooth-regime run: {0}")]
    EventEncountered(String),
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("too few post-transient samples to classify ({0})")]
    TooFewSamples(usize),
    #[error("hopf point failed verification: |Re lambda| = {0}")]
    HopfNotVerified(f64),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("eigensolver failed on the collocation matrix")]
    EigensolveFailure,
    #[error("no stability change inside the bracket [{0}, {1}]")]
    NoCrossingInBracket(f64, f64),
    #[error("a real root crosses in the bracket (fold, not Hopf)")]
    RealRootCrossing,
    #[error("no equilibrium exists at a probed parameter value {0}")]
    NoEquilibrium(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Configuration-level failures; these map to exit code 2 in the CLI.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error("malformed scenario JSON: {0}")]
    Malformed(String),
    #[error("unknown operation: {0}")]
    UnknownOperation(String),
    #[error("unknown figure id: {0}")]
    UnknownFigure(String),
    #[error("invalid option: {0}")]
    BadOption(String),
    #[error(transparent)]
    Params(#[from] ParamsError),
}

#[derive(Debug, Error)]
pub enum ContinuationError {
    #[error("start point does not satisfy the Hopf system (residual {0:.3e})")]
    StartNotOnCurve(f64),
    #[error("corrector diverged and the step fell below the minimum")]
    CorrectorDivergence,
}
