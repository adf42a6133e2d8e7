//! Flattened listing of every configuration key.

use arborloc::pipeline::RunConfig;
use toml::Value;

/// Module that owns a dotted key.
pub fn owner(key: &str) -> &'static str {
    const OWNERS: [(&str, &str); 8] = [
        ("reloc.segmenter.", "semantics"),
        ("reloc.keypoints.refine.", "semantics"),
        ("fixture.", "forest-sim"),
        ("reloc.", "reloc"),
        ("gicp.", "gicp-registration"),
        ("smoother.", "factor-graph"),
        ("pipeline.", "pipeline"),
        ("eval.", "eval"),
    ];
    OWNERS
        .iter()
        .find(|(prefix, _)| key.starts_with(prefix))
        .map_or("cli", |(_, m)| m)
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// `(key, default)` pairs of the default configuration.
pub fn default_keys() -> Vec<(String, String)> {
    let value = Value::try_from(RunConfig::default()).expect("default config serialises");
    let mut out = Vec::new();
    flatten("", &value, &mut out);
    out
}

pub fn help_text() -> String {
    let keys = default_keys();
    let width = keys.iter().map(|(k, v)| k.len() + v.len()).max().unwrap_or(0) + 3;
    let mut s = String::from(
        "Configuration keys (set in a TOML file passed with --config, or with --set key=value; flags win):\n",
    );
    for (k, v) in &keys {
        let entry = format!("{k} = {v}");
        s += &format!("  {entry:<width$}  [{}]\n", owner(k));
    }
    s
}

/// Applies a dotted `key=value` override; the value is parsed as TOML and
/// falls back to a plain string.
pub fn apply_override(root: &mut Value, spec: &str) -> anyhow::Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow::anyhow!("override `{spec}` is not of the form key=value"))?;
    let value = raw
        .trim()
        .parse::<Value>()
        .or_else(|_| format!("v = {}", raw.trim()).parse::<toml::Table>().map(|t| t["v"].clone()))
        .unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut node = root;
    for p in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| anyhow::anyhow!("`{key}`: `{p}` is not a table"))?;
        node = table.entry(p.to_string()).or_insert_with(|| Value::Table(Default::default()));
    }
    node.as_table_mut()
        .ok_or_else(|| anyhow::anyhow!("`{key}` does not name a table entry"))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_has_a_module() {
        let keys = default_keys();
        assert!(keys.len() > 50);
        assert!(keys.iter().all(|(k, _)| owner(k) != "cli"));
        assert!(keys.iter().any(|(k, v)| k == "pipeline.max_failures" && v == "5"));
    }

    #[test]
    fn overrides_parse_values() {
        let mut v = Value::Table(Default::default());
        apply_override(&mut v, "pipeline.max_failures=3").unwrap();
        apply_override(&mut v, "reloc.guidance=none").unwrap();
        apply_override(&mut v, "eval.rte_bins=[10.0, 20.0]").unwrap();
        assert_eq!(v["pipeline"]["max_failures"].as_integer(), Some(3));
        assert_eq!(v["reloc"]["guidance"].as_str(), Some("none"));
        assert_eq!(v["eval"]["rte_bins"].as_array().unwrap().len(), 2);
        assert!(apply_override(&mut v, "nokey").is_err());
    }
}
