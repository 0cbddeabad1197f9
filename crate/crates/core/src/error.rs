use thiserror::Error;

use crate::design::DesignError;
use crate::lmi::LmiError;
use crate::network::NetworkError;
use crate::simulate::SimulationError;
use crate::spectral::SpectralError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid gains file: {0}")]
    Gains(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
