//! Load settings from TOML and print the effective configuration.

use ciai::config::Config;

fn main() -> anyhow::Result<()> {
    let text = r#"
seed = 11

[split]
train_fraction = 0.8

[router]
gap_threshold = 0.3
min_confidence = 0.9
"#;
    let config = Config::parse(text, "inline.toml".as_ref())?;
    print!("{}", config.to_toml());
    Ok(())
}
