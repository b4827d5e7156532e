//! Runs the built-in consistency checks with the default configuration.

use sse::cli::{cmd_selfcheck, RunConfig};

fn main() {
    for c in cmd_selfcheck(&RunConfig::default()) {
        println!("{:20} {} {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
}
