//! The batch workflow from code: run a configured scenario into a directory,
//! then re-verify the stored report against its data files.

use bohmian::cli::{self, RunConfig, RunOptions};

const CONFIG: &str = r#"
[scenario]
id = "stationary_real_state"
preset = "harmonic"

[sampling]
n = 2000
seed = 3
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = RunConfig::from_toml(CONFIG)?;
    let opts = RunOptions { output: Some(dir.path().join("run")), ..Default::default() };
    let outcome = cli::run_config(&cfg, &opts)?;
    print!("{}", cli::format_checks(&outcome.report.checks));
    let verified = cli::verify(&outcome.dir)?;
    println!("verified {} checks, {} artifacts", verified.checks.len(), verified.artifacts.len());
    Ok(())
}
