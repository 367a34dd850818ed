/// Exit codes shared by all subcommands.
pub const IO: u8 = 1;
pub const CONFIG: u8 = 2;
pub const RUN_FAILED: u8 = 3;
pub const EVALUATION_FAILED: u8 = 4;

#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Exit {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Exit {
            code,
            error: error.into(),
        }
    }
}

pub trait WithCode<T> {
    fn code(self, code: u8) -> Result<T, Exit>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Exit> {
        self.map_err(|e| Exit::new(code, e))
    }
}
