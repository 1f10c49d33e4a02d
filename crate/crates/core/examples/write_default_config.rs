//! Print the default experiment config as TOML.

fn main() -> formation_cp::Result<()> {
    print!("{}", formation_cp::harness::ExperimentConfig::default().to_toml()?);
    Ok(())
}
