use rtlab_core::CoreError;

/// Failure classes with their process exit codes: configuration problems
/// exit 3, failed certificates exit 4, everything the numerics give up on
/// exits 1. Usage errors never reach here; clap exits 2 on its own.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Certificate(String),
    Run(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Run(_) => 1,
            Failure::Config(_) => 3,
            Failure::Certificate(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Certificate(m) | Failure::Run(m) => m,
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            // everything a scenario edit fixes
            CoreError::InvalidDimension(..)
            | CoreError::InvalidParameter { .. }
            | CoreError::CflViolation { .. }
            | CoreError::NonsmoothResponse(..)
            | CoreError::ResourceExceeded { .. } => Failure::Config(e.to_string()),
            CoreError::CertificateFailed { .. } => Failure::Certificate(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_failure_class() {
        assert_eq!(Failure::Run("x".into()).exit_code(), 1);
        assert_eq!(Failure::Config("x".into()).exit_code(), 3);
        assert_eq!(Failure::Certificate("x".into()).exit_code(), 4);
    }

    #[test]
    fn core_errors_map_to_their_classes() {
        let config: Failure = CoreError::CflViolation {
            dt: 1.0,
            max_dt: 0.1,
        }
        .into();
        assert_eq!(config.exit_code(), 3);

        let cert: Failure = CoreError::CertificateFailed {
            what: "drift".into(),
            margin: 0.1,
        }
        .into();
        assert_eq!(cert.exit_code(), 4);

        let run: Failure = CoreError::NonConvergence {
            steps: 10,
            residual: 1.0,
            tol: 0.1,
        }
        .into();
        assert_eq!(run.exit_code(), 1);
    }
}
