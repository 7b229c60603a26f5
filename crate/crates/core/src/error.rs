use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The inputs are in range but make the quantity undefined (e.g. a zero
    /// denominator).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An experiment or schedule configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Not enough statistics to form an estimate.
    #[error("estimation error: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} = {value} is not a probability")))
    }
}
