//! Flat `key=value` config files and the defaults < file < flags
//! precedence. Every tunable is an `Option` on the clap side; the
//! resolvers here fold in the file value and the documented default.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// One parsed config file. Keys are the long flag names without the
/// leading dashes. Lines are UTF-8 `key=value`; blank lines and lines
/// starting with `#` are skipped. Every key must be consumed by the
/// subcommand, so typos and misplaced keys fail instead of defaulting.
pub struct FileConfig {
    path: String,
    entries: HashMap<String, (usize, String)>,
}

impl FileConfig {
    pub fn empty() -> Self {
        FileConfig { path: String::new(), entries: HashMap::new() }
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::empty());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::msg(format!("config {}: {e}", path.display())))?;
        let mut entries = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = idx + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::msg(format!(
                    "config {} line {lineno}: expected key=value, got {line:?}",
                    path.display()
                )));
            };
            let key = key.trim().to_string();
            if let Some((first, _)) =
                entries.insert(key.clone(), (lineno, value.trim().to_string()))
            {
                return Err(CliError::msg(format!(
                    "config {} line {lineno}: key {key:?} already set on line {first}",
                    path.display()
                )));
            }
        }
        Ok(FileConfig { path: path.display().to_string(), entries })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn parse_value<T>(&self, key: &str, line: usize, raw: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        raw.parse().map_err(|e| {
            CliError::msg(format!(
                "config {} line {line}: key {key:?}: cannot parse {raw:?}: {e}",
                self.path
            ))
        })
    }

    /// Error out on keys no resolver consumed.
    pub fn finish(self) -> Result<(), CliError> {
        let mut leftover: Vec<(usize, String)> =
            self.entries.into_iter().map(|(k, (line, _))| (line, k)).collect();
        leftover.sort();
        match leftover.first() {
            None => Ok(()),
            Some((line, key)) => Err(CliError::msg(format!(
                "config {} line {line}: key {key:?} is not recognized by this command invocation",
                self.path
            ))),
        }
    }
}

/// Flag beats file beats default.
pub fn resolve<T>(
    flag: Option<T>,
    file: &mut FileConfig,
    key: &str,
    default: T,
) -> Result<T, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    Ok(resolve_opt(flag, file, key)?.unwrap_or(default))
}

/// Like [`resolve`] but with no default: absent everywhere stays `None`.
pub fn resolve_opt<T>(
    flag: Option<T>,
    file: &mut FileConfig,
    key: &str,
) -> Result<Option<T>, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    let from_file = file.take(key);
    if let Some(v) = flag {
        return Ok(Some(v));
    }
    match from_file {
        Some((line, raw)) => Ok(Some(file.parse_value(key, line, &raw)?)),
        None => Ok(None),
    }
}

/// A value that must come from somewhere: flag, file, no default.
pub fn resolve_required<T>(
    flag: Option<T>,
    file: &mut FileConfig,
    key: &str,
) -> Result<T, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    resolve_opt(flag, file, key)?
        .ok_or_else(|| CliError::msg(format!("missing required --{key} (or config key {key:?})")))
}

/// A plain on-switch: the flag can only turn it on; the file key takes
/// true/false; otherwise `default`.
pub fn resolve_switch(
    flag: bool,
    file: &mut FileConfig,
    key: &str,
    default: bool,
) -> Result<bool, CliError> {
    resolve(if flag { Some(true) } else { None }, file, key, default)
}

/// A switch with both directions on the command line (--x / --no-x); clap
/// rejects passing both. The file key takes true/false.
pub fn resolve_on_off(
    on: bool,
    off: bool,
    file: &mut FileConfig,
    key: &str,
    default: bool,
) -> Result<bool, CliError> {
    let flag = match (on, off) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    };
    resolve(flag, file, key, default)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn file_with(text: &str) -> (tempfile::TempDir, FileConfig) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        drop(f);
        let cfg = FileConfig::load(Some(&path)).unwrap();
        (dir, cfg)
    }

    #[test]
    fn precedence_is_default_file_flag() {
        let (_d, mut cfg) = file_with("# comment\n\nepochs = 7\nseed=3\n");
        assert_eq!(resolve(Some(9usize), &mut cfg, "epochs", 10).unwrap(), 9);
        assert_eq!(resolve(None::<u64>, &mut cfg, "seed", 0).unwrap(), 3);
        assert_eq!(resolve(None::<usize>, &mut cfg, "batch-size", 256).unwrap(), 256);
        cfg.finish().unwrap();
    }

    #[test]
    fn unknown_and_duplicate_keys_fail() {
        let (_d, cfg) = file_with("epochs=1\n");
        let err = cfg.finish().unwrap_err();
        assert!(err.to_string().contains("epochs"), "{err}");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.conf");
        std::fs::write(&path, "seed=1\nseed=2\n").unwrap();
        assert!(FileConfig::load(Some(&path)).is_err());

        let path2 = dir.path().join("noeq.conf");
        std::fs::write(&path2, "seed\n").unwrap();
        assert!(FileConfig::load(Some(&path2)).is_err());
    }

    #[test]
    fn bad_values_name_the_line() {
        let (_d, mut cfg) = file_with("epochs=soon\n");
        let err = resolve(None::<usize>, &mut cfg, "epochs", 1).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("line 1") && text.contains("soon"), "{text}");
    }

    #[test]
    fn switches_and_required() {
        let (_d, mut cfg) = file_with("quiet=true\nwildcard=false\ncorpus=data.tsv\n");
        assert!(resolve_switch(false, &mut cfg, "quiet", false).unwrap());
        assert!(!resolve_on_off(false, false, &mut cfg, "wildcard", true).unwrap());
        // flag direction beats the file value
        let (_d2, mut cfg2) = file_with("wildcard=false\n");
        assert!(resolve_on_off(true, false, &mut cfg2, "wildcard", true).unwrap());
        cfg2.finish().unwrap();

        let got: String = resolve_required(None, &mut cfg, "corpus").unwrap();
        assert_eq!(got, "data.tsv");
        assert!(resolve_required::<String>(None, &mut cfg, "checkpoint").is_err());
        cfg.finish().unwrap();
    }
}
