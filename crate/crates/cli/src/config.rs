//! Flat `key=value` config files merged into the argument list, and the
//! provenance hash of the effective arguments.

use std::fs;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use crate::UsageError;

/// Parses `key=value` lines. Blank lines and lines starting with `#` are
/// skipped; keys may use `_` or `-`.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected key=value, got {line:?}", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(UsageError(format!("config line {}: empty key", i + 1)).into());
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn has_flag(args: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    let eq = format!("--{key}=");
    args.iter().any(|a| a == &long || a.starts_with(&eq))
}

/// Replaces `--config FILE` with the file's entries as `--key value`
/// pairs. Flags given on the command line win over the file.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    let mut rest = Vec::with_capacity(argv.len());
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let p = it.next().ok_or_else(|| UsageError("--config needs a file".into()))?;
            path = Some(p);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let mut extra = Vec::new();
    for (k, v) in parse_config(&text)? {
        if !has_flag(&rest, &k) && !has_flag(&extra, &k) {
            extra.push(format!("--{k}"));
            extra.push(v);
        }
    }
    rest.extend(extra);
    Ok(rest)
}

/// Sorted `key=value` pairs of the given flags, ignoring output paths.
pub fn canonical(pairs: &[(&str, String)]) -> String {
    let mut v: Vec<String> = pairs.iter().filter(|(k, _)| *k != "out").map(|(k, v)| format!("{k}={v}")).collect();
    v.sort();
    v.join("\n")
}

/// First 16 hex digits of the SHA-256 of [`canonical`].
pub fn config_hash(pairs: &[(&str, String)]) -> String {
    let digest = Sha256::digest(canonical(pairs).as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
