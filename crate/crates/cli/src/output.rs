use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use serde::Serialize;

use crate::{EXIT_INPUT, EXIT_INTERNAL};

/// Bad input (exit 2) versus our own failure (exit 3).
#[derive(Debug)]
pub enum CmdError {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl CmdError {
    pub fn code(&self) -> u8 {
        match self {
            CmdError::Input(_) => EXIT_INPUT,
            CmdError::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            CmdError::Input(e) | CmdError::Internal(e) => e,
        }
    }

    pub fn input(msg: impl Display) -> Self {
        CmdError::Input(anyhow!("{msg}"))
    }
}

pub type CmdResult<T> = Result<T, CmdError>;

pub trait Classify<T> {
    fn input_err(self, ctx: impl Display) -> CmdResult<T>;
    fn internal_err(self, ctx: impl Display) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input_err(self, ctx: impl Display) -> CmdResult<T> {
        self.map_err(|e| CmdError::Input(e.into().context(ctx.to_string())))
    }

    fn internal_err(self, ctx: impl Display) -> CmdResult<T> {
        self.map_err(|e| CmdError::Internal(e.into().context(ctx.to_string())))
    }
}

pub fn report_error(e: &CmdError, json: bool) {
    if json {
        let body = serde_json::json!({
            "error": format!("{:#}", e.error()),
            "code": e.code(),
        });
        eprintln!("{body}");
    } else {
        eprintln!("error: {:#}", e.error());
    }
}

pub fn read_text(path: &Path) -> CmdResult<String> {
    fs::read_to_string(path).input_err(format!("cannot read {}", path.display()))
}

pub fn read_bytes(path: &Path) -> CmdResult<Vec<u8>> {
    fs::read(path).input_err(format!("cannot read {}", path.display()))
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

/// Optional output directory.
pub struct Out {
    dir: Option<PathBuf>,
}

impl Out {
    pub fn new(dir: Option<&Path>) -> CmdResult<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d).internal_err(format!("cannot create {}", d.display()))?;
        }
        Ok(Out {
            dir: dir.map(Path::to_path_buf),
        })
    }

    pub fn enabled(&self) -> bool {
        self.dir.is_some()
    }

    pub fn write(&self, rel: &str, contents: impl AsRef<[u8]>) -> CmdResult<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).internal_err(format!("cannot create {}", parent.display()))?;
        }
        fs::write(&path, contents).internal_err(format!("cannot write {}", path.display()))
    }

    /// Empties `rel` so stale files from an earlier run do not linger.
    pub fn fresh_dir(&self, rel: &str) -> CmdResult<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(rel);
        if path.exists() {
            fs::remove_dir_all(&path).internal_err(format!("cannot clear {}", path.display()))?;
        }
        fs::create_dir_all(&path).internal_err(format!("cannot create {}", path.display()))
    }
}
