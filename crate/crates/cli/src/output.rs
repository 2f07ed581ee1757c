//! Output files are staged in memory and written together at the end, so a
//! failed run leaves nothing behind.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::CliError;

/// Provenance echoed into every file.
#[derive(Debug, Clone)]
pub struct Meta {
    pub command: String,
    pub seed: u64,
    pub config: Value,
}

impl Meta {
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        Meta {
            command: command.to_string(),
            seed,
            config,
        }
    }

    fn csv_header(&self) -> String {
        format!(
            "# hamcert {}\n# command: {}\n# seed: {}\n# config: {}\n",
            env!("CARGO_PKG_VERSION"),
            self.command,
            self.seed,
            self.config
        )
    }

    fn json(&self) -> Value {
        json!({
            "tool": "hamcert",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
        })
    }
}

#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, String)>,
}

impl OutputSet {
    pub fn csv(&mut self, name: &str, meta: &Meta, columns: &str, rows: impl IntoIterator<Item = String>) {
        let mut text = meta.csv_header();
        text.push_str(columns);
        text.push('\n');
        for r in rows {
            text.push_str(&r);
            text.push('\n');
        }
        self.files.push((name.to_string(), text));
    }

    /// `body` must be a JSON object; `meta` is inserted as its first key.
    pub fn json(&mut self, name: &str, meta: &Meta, body: Value) {
        let mut obj = serde_json::Map::new();
        obj.insert("meta".into(), meta.json());
        if let Value::Object(m) = body {
            obj.extend(m);
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(obj)).expect("serializable");
        text.push('\n');
        self.files.push((name.to_string(), text));
    }

    pub fn commit(self, dir: &Path) -> Result<(), CliError> {
        let io = |what: &str, p: &Path, e: std::io::Error| CliError::Io(format!("{what} {}: {e}", p.display()));
        fs::create_dir_all(dir).map_err(|e| io("cannot create", dir, e))?;
        let mut staged = Vec::new();
        for (name, text) in &self.files {
            let tmp = dir.join(format!(".{name}.tmp"));
            if let Err(e) = fs::write(&tmp, text) {
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                let _ = fs::remove_file(&tmp);
                return Err(io("cannot write", &tmp, e));
            }
            staged.push((tmp, dir.join(name)));
        }
        for (tmp, dst) in staged {
            fs::rename(&tmp, &dst).map_err(|e| io("cannot rename to", &dst, e))?;
        }
        Ok(())
    }
}

/// Format a float for CSV; infinities as `inf`.
pub fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}
