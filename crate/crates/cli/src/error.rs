use tsad_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Error,
    },
}

impl RunError {
    pub(crate) fn at(stage: &'static str) -> impl FnOnce(Error) -> RunError {
        move |source| RunError::Stage { stage, source }
    }

    pub fn stage(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Stage { stage, .. } => stage,
        }
    }
}

/// Process status for a failed run: 2 configuration, 3 divergence, 4 I/O,
/// 1 anything else.
pub fn exit_code(err: &RunError) -> i32 {
    match err {
        RunError::Config(_) => 2,
        RunError::Stage { source, .. } if source.is_io() => 4,
        RunError::Stage {
            source: Error::Diverged { .. },
            ..
        } => 3,
        RunError::Stage {
            stage: "config", ..
        } => 2,
        RunError::Stage { .. } => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let io = RunError::at("write")(Error::Io(std::io::Error::other("disk full")));
        let div = RunError::at("train")(Error::Diverged {
            what: "nan".into(),
            partial: None,
        });
        let cfg = RunError::Config("two sources".into());
        let other = RunError::at("split")(Error::Split("short".into()));
        assert_eq!(
            [
                exit_code(&cfg),
                exit_code(&div),
                exit_code(&io),
                exit_code(&other)
            ],
            [2, 3, 4, 1]
        );
        assert_eq!(io.stage(), "write");
    }
}
