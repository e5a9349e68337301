use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::{CliError, Command};

pub struct Writer<'a> {
    pub dir: &'a Path,
    pub command: Command,
    pub cfg: &'a RunConfig,
}

impl Writer<'_> {
    fn metadata(&self) -> String {
        format!(
            "# cavity-nbody {}\n# config_sha256 {}\n# command {} scheme {:?} engine {:?} seed {}\n",
            cavity_nbody::VERSION,
            self.cfg.hash(),
            self.command.name(),
            self.cfg.scheme(),
            self.cfg.engine(),
            self.cfg.seed(),
        )
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf, CliError> {
        let mut s = self.metadata();
        s.push_str(&header.join(","));
        s.push('\n');
        for r in rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        let path = self.dir.join(name);
        std::fs::write(&path, s)?;
        Ok(path)
    }

    pub fn json(&self, name: &str, value: &serde_json::Value) -> Result<PathBuf, CliError> {
        let wrapped = serde_json::json!({
            "version": cavity_nbody::VERSION,
            "config_sha256": self.cfg.hash(),
            "command": self.command.name(),
            "result": value,
        });
        let path = self.dir.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(&wrapped).expect("json serializes") + "\n")?;
        Ok(path)
    }
}

pub fn f(x: f64) -> String {
    format!("{x}")
}
