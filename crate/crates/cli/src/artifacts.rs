use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use ocplab::signals::ControlSignal;

/// An output directory. Data files are deterministic; the timestamp goes to
/// `metadata.txt` only.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path, command: &str, invocation: &[String]) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        let out = Self { root: root.to_path_buf() };
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        out.write(
            "metadata.txt",
            &format!(
                "command={command}\nversion={}\ntimestamp_unix={stamp}\nargs={}\n",
                env!("CARGO_PKG_VERSION"),
                invocation.join(" ")
            ),
        )?;
        Ok(out)
    }

    pub fn write(&self, name: &str, body: &str) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))
    }
}

/// `key=value` lines for `summary.txt`.
#[derive(Default)]
pub struct Summary {
    body: String,
}

impl Summary {
    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.body, "{key}={value}");
    }

    /// Appends pre-formatted `key=value` lines.
    pub fn lines(&mut self, block: &str) {
        for line in block.lines().filter(|l| !l.is_empty()) {
            self.body.push_str(line);
            self.body.push('\n');
        }
    }

    pub fn finish(self) -> String {
        self.body
    }
}

pub fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Step-plot data: each piece contributes its start and end point.
pub fn steps_csv(u: &ControlSignal, horizon: f64) -> String {
    let mut s = String::from("t");
    for k in 1..=u.control_dim() {
        let _ = write!(s, ",u{k}");
    }
    s.push('\n');
    let bps = u.breakpoints();
    for (i, v) in u.pieces().iter().enumerate() {
        let (a, b) = (bps[i], bps[i + 1].min(horizon));
        if a >= horizon {
            break;
        }
        for t in [a, b] {
            s.push_str(&t.to_string());
            for c in v {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
    }
    s
}
