//! JSON file formats for networks.
//!
//! Native layout:
//!
//! ```json
//! {"variables": [2, 2], "top": 1e9,
//!  "unary": {"0": [0.0, 1.5]},
//!  "pairs": {"0_1": [[0.0, 1.0], [1.0, 0.0]]}}
//! ```
//!
//! Pair keys are `"<i>_<j>"` with `i < j`; rows are values of `i`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{Cost, CostFunctionNetwork, CostMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CfnFile {
    pub variables: Vec<usize>,
    pub top: Cost,
    #[serde(default)]
    pub unary: BTreeMap<String, Vec<Cost>>,
    #[serde(default)]
    pub pairs: BTreeMap<String, Vec<Vec<Cost>>>,
}

fn parse_pair_key(key: &str) -> Result<(usize, usize)> {
    let bad = || Error::Structure(format!("bad pair key {key:?}, expected \"<i>_<j>\""));
    let (a, b) = key.split_once('_').ok_or_else(bad)?;
    let i: usize = a.parse().map_err(|_| bad())?;
    let j: usize = b.parse().map_err(|_| bad())?;
    if i >= j {
        return Err(Error::Structure(format!("pair key {key:?} must have i < j")));
    }
    Ok((i, j))
}

impl From<&CostFunctionNetwork> for CfnFile {
    fn from(net: &CostFunctionNetwork) -> Self {
        Self {
            variables: net.domains.clone(),
            top: net.top,
            unary: net
                .unaries
                .iter()
                .map(|(i, u)| (i.to_string(), u.clone()))
                .collect(),
            pairs: net
                .pairs
                .iter()
                .map(|((i, j), m)| (format!("{i}_{j}"), m.to_rows()))
                .collect(),
        }
    }
}

impl TryFrom<CfnFile> for CostFunctionNetwork {
    type Error = Error;

    fn try_from(file: CfnFile) -> Result<Self> {
        if !(file.top > 0.0 && file.top.is_finite()) {
            return Err(Error::Structure(format!("top must be positive and finite, got {}", file.top)));
        }
        let mut net = CostFunctionNetwork::with_top(file.variables, file.top);
        for (key, costs) in &file.unary {
            let i: usize = key
                .parse()
                .map_err(|_| Error::Structure(format!("bad unary key {key:?}")))?;
            net.add_unary(i, costs)?;
        }
        for (key, rows) in &file.pairs {
            let (i, j) = parse_pair_key(key)?;
            net.set_pair(i, j, CostMatrix::from_rows(rows)?)?;
        }
        Ok(net)
    }
}

impl CostFunctionNetwork {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&CfnFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<CfnFile>(text)?.try_into()
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Export to the CFN JSON dialect read by toulbar2, for external cross-checks.
/// Same data: variables become `x<i>` with integer domain sizes, every
/// function carries its scope and a flat row-major cost table, and the upper
/// bound is `top`.
pub trait ToulbarExport {
    fn to_toulbar2_json(&self, name: &str) -> Value;
}

impl ToulbarExport for CostFunctionNetwork {
    fn to_toulbar2_json(&self, name: &str) -> Value {
        let mut variables = Map::new();
        for (i, &d) in self.domains.iter().enumerate() {
            variables.insert(format!("x{i}"), json!(d));
        }
        let mut functions = Map::new();
        for (&i, u) in &self.unaries {
            functions.insert(format!("u{i}"), json!({"scope": [format!("x{i}")], "costs": u}));
        }
        for (&(i, j), m) in &self.pairs {
            functions.insert(
                format!("f{i}_{j}"),
                json!({"scope": [format!("x{i}"), format!("x{j}")], "costs": m.as_slice()}),
            );
        }
        json!({
            "problem": {"name": name, "mustbe": format!("<{}", self.top)},
            "variables": variables,
            "functions": functions,
        })
    }
}
