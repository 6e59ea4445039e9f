use std::io;
use std::process::ExitCode;

use detcomm::cli::{main_with, SEED_ENV};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let env_seed = std::env::var(SEED_ENV).ok();
    let code = main_with(
        &args,
        env_seed.as_deref(),
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    ExitCode::from(code as u8)
}
