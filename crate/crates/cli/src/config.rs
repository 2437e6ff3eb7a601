use std::path::{Path, PathBuf};

use gammagate_core::gateway::GatewayConfig;

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub catalog: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub port: Option<u16>,
    pub base_url: Option<String>,
}

/// Parses a TOML config. Relative paths are taken relative to `base_dir`
/// (the directory holding the file). Returns whether `base_url` was set.
pub fn parse(text: &str, base_dir: &Path) -> Result<(GatewayConfig, bool), String> {
    let table: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
    let has_base_url = table.contains_key("base_url");
    let mut cfg: GatewayConfig = table.try_into().map_err(|e: toml::de::Error| e.to_string())?;
    for p in [&mut cfg.catalog_path, &mut cfg.store_path, &mut cfg.data_dir] {
        if p.is_relative() && !p.as_os_str().is_empty() {
            *p = base_dir.join(&*p);
        }
    }
    Ok((cfg, has_base_url))
}

/// Config file (explicit path, else `env_path`, else built-in defaults) with
/// flag overrides applied. Without an explicit base URL the service
/// advertises `http://localhost:{port}`.
pub fn load(explicit: Option<&Path>, env_path: Option<&Path>, flags: &Overrides) -> Result<GatewayConfig, String> {
    let (mut cfg, mut has_base_url) = match explicit.or(env_path) {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("config {}: {e}", path.display()))?;
            let dir = path.parent().unwrap_or(Path::new(""));
            parse(&text, dir).map_err(|e| format!("config {}: {e}", path.display()))?
        }
        None => (GatewayConfig::default(), false),
    };
    if let Some(p) = &flags.catalog {
        cfg.catalog_path = p.clone();
    }
    if let Some(p) = &flags.store {
        cfg.store_path = p.clone();
    }
    if let Some(p) = &flags.data_dir {
        cfg.data_dir = p.clone();
    }
    if let Some(p) = flags.port {
        cfg.port = p;
    }
    if let Some(u) = &flags.base_url {
        cfg.base_url = u.clone();
        has_base_url = true;
    }
    if !has_base_url {
        cfg.base_url = format!("http://localhost:{}", cfg.port);
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}
