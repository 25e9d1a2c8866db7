//! Small text formats accepted on the command line.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{bail, Context, Result};

use hypflow_core::flow::InitialRule;

/// `1,2,3` or `1 2 3`.
pub fn parse_id_list(text: &str) -> Result<Vec<u64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().with_context(|| format!("bad id `{t}`")))
        .collect()
}

/// `0,1,2;3,4`: sets separated by semicolons.
pub fn parse_sets(text: &str) -> Result<Vec<BTreeSet<u64>>> {
    text.split(';')
        .map(|part| {
            let ids = parse_id_list(part)?;
            if ids.is_empty() {
                bail!("empty vertex set in `{text}`");
            }
            Ok(ids.into_iter().collect())
        })
        .collect()
}

/// Per-vertex values, one `id,value` pair per line. Blank lines, `#`
/// comments and a non-numeric header line are skipped.
pub fn parse_vertex_values(text: &str) -> Result<BTreeMap<u64, f64>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (Some(id), Some(value), None) = (cols.next(), cols.next(), cols.next()) else {
            bail!("line {}: expected `id,value`", n + 1);
        };
        let Ok(id) = id.parse::<u64>() else {
            if n == 0 {
                continue;
            }
            bail!("line {}: bad vertex id `{id}`", n + 1);
        };
        let value: f64 = value.parse().with_context(|| format!("line {}: bad value `{value}`", n + 1))?;
        if out.insert(id, value).is_some() {
            bail!("line {}: vertex {id} listed twice", n + 1);
        }
    }
    Ok(out)
}

pub fn read_that(path: &Path) -> Result<BTreeMap<u64, f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_vertex_values(&text)
}

pub fn read_start(path: &Path) -> Result<InitialRule> {
    Ok(InitialRule::PerVertex(read_that(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_files() {
        let m = parse_vertex_values("id,value\n# note\n3,1.5\n\n7, 2\n").unwrap();
        assert_eq!(m, BTreeMap::from([(3, 1.5), (7, 2.0)]));
        assert!(parse_vertex_values("1,2\n1,3\n").is_err());
        assert!(parse_vertex_values("1,2\nx,3\n").is_err());
        assert!(parse_vertex_values("1,2,3\n").is_err());
    }

    #[test]
    fn sets_and_lists() {
        assert_eq!(parse_id_list("1, 2 3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_sets("0,1;2").unwrap().len(), 2);
        assert!(parse_sets("0;").is_err());
    }
}
