//! Minimal flag parsing: `--flag value`, boolean `--flag`, and repeatable
//! `--set key=value` config overrides.

use std::collections::HashMap;

use inflect_core::{Error, Result};

#[derive(Debug, Default)]
pub struct Flags {
    values: HashMap<String, String>,
    bools: Vec<String>,
    pub sets: Vec<(String, String)>,
}

impl Flags {
    pub fn parse(
        args: &[String],
        value_flags: &[&str],
        bool_flags: &[&str],
        allow_set: bool,
    ) -> Result<Flags> {
        let mut out = Flags::default();
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let name = arg
                .strip_prefix("--")
                .ok_or_else(|| Error::usage(format!("unexpected argument {arg:?}")))?;
            if allow_set && name == "set" {
                let kv = it
                    .next()
                    .ok_or_else(|| Error::usage("--set needs key=value"))?;
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::usage(format!("--set {kv:?}: expected key=value")))?;
                out.sets.push((k.trim().to_string(), v.trim().to_string()));
            } else if bool_flags.contains(&name) {
                out.bools.push(name.to_string());
            } else if value_flags.contains(&name) {
                let value = it
                    .next()
                    .ok_or_else(|| Error::usage(format!("--{name} needs a value")))?;
                if out.values.insert(name.to_string(), value.clone()).is_some() {
                    return Err(Error::usage(format!("--{name} given twice")));
                }
            } else {
                let mut known: Vec<String> = value_flags
                    .iter()
                    .chain(bool_flags)
                    .map(|f| format!("--{f}"))
                    .collect();
                if allow_set {
                    known.push("--set".into());
                }
                return Err(Error::usage(format!(
                    "unknown flag --{name}; expected one of {}",
                    known.join(", ")
                )));
            }
        }
        Ok(out)
    }

    pub fn require(&self, name: &str) -> Result<&str> {
        self.values
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::usage(format!("missing required flag --{name}")))
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>> {
        match self.get(name) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::usage(format!("invalid value {v:?} for --{name}"))),
        }
    }

    pub fn has(&self, name: &str) -> bool {
        self.bools.iter().any(|b| b == name)
    }
}

/// `LANG=PATH`, or a bare path whose file stem becomes the language id.
pub fn lang_and_path(spec: &str) -> (String, String) {
    if let Some((lang, path)) = spec.split_once('=') {
        return (lang.to_string(), path.to_string());
    }
    let stem = std::path::Path::new(spec)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| spec.to_string());
    (stem, spec.to_string())
}
