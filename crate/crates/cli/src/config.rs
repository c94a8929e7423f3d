//! Flat key=value configuration files. Values here fill in whatever the
//! command line left unset; explicit flags always win.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use msdenoise_core::{Error, Result};

pub(crate) struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub(crate) fn empty() -> Self {
        Self {
            values: BTreeMap::new(),
        }
    }

    pub(crate) fn load(path: &Path) -> Result<Self> {
        let ini = Ini::load_from_file(path).map_err(|e| match e {
            ini::Error::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            ini::Error::Parse(p) => {
                Error::InvalidParameter(format!("config {}: {p}", path.display()))
            }
        })?;
        let mut values = BTreeMap::new();
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let full = match section {
                    None => key.to_string(),
                    Some(s) => format!("{s}.{key}"),
                };
                values.insert(full, value.to_string());
            }
        }
        Ok(Self { values })
    }

    pub(crate) fn load_opt(path: &Option<std::path::PathBuf>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::empty()),
        }
    }

    pub(crate) fn parse<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.trim().parse::<T>().map(Some).map_err(|e| {
                Error::InvalidParameter(format!("config key {key} = {raw:?}: {e}"))
            }),
        }
    }

    /// Comma-separated list value.
    pub(crate) fn parse_list<T>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(raw) = self.values.get(key) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for item in raw.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            out.push(item.parse::<T>().map_err(|e| {
                Error::InvalidParameter(format!("config key {key}: entry {item:?}: {e}"))
            })?);
        }
        Ok(Some(out))
    }

    pub(crate) fn list_str(&self, key: &str) -> Option<Vec<String>> {
        self.values.get(key).map(|raw| {
            raw.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }
}

/// Flag value if given, else the config value, else the default.
pub(crate) fn pick<T>(flag: Option<T>, cfg: &FileConfig, key: &str, default: T) -> Result<T>
where
    T: FromStr + Copy,
    T::Err: Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    Ok(cfg.parse(key)?.unwrap_or(default))
}
