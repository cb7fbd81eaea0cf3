//! Chain serialization: a line-delimited format with one JSON header line
//! (spec, hyperparameters, config, format version, acceptance) followed by
//! one JSON record per retained draw. Field order within a draw record:
//! iteration index, mixture parameters (betas row-major by category then
//! component, weight state, dispersions), hyperparameter draws μ and Σ,
//! then the two label-derived diagnostics (occupied-component count and
//! label-averaged β). Labels themselves are not serialized.

use crate::model::{Hyperparameters, ModelSpec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Chain, Draw, McmcConfig};

pub const CHAIN_FORMAT: &str = "devtox-chain";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainHeader {
    pub format: String,
    pub version: String,
    pub spec: ModelSpec,
    pub hyper: Hyperparameters,
    pub config: McmcConfig,
    pub acceptance: Option<f64>,
}

/// Write a chain to `path`. Identical chains produce byte-identical files
/// (wall time lives in the run manifest, not here).
pub fn write_chain(path: &Path, chain: &Chain) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let header = ChainHeader {
        format: CHAIN_FORMAT.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        spec: chain.spec,
        hyper: chain.hyper.clone(),
        config: chain.config,
        acceptance: chain.acceptance,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for draw in &chain.draws {
        serde_json::to_writer(&mut w, draw)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a chain written by [`write_chain`].
pub fn read_chain(path: &Path) -> Result<Chain> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Parse {
            row: 1,
            message: "empty chain file".into(),
        })??;
    let header: ChainHeader = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        row: 1,
        message: format!("bad chain header: {e}"),
    })?;
    if header.format != CHAIN_FORMAT {
        return Err(Error::Parse {
            row: 1,
            message: format!("not a chain file (format = {})", header.format),
        });
    }
    let mut draws = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let draw: Draw = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row: i + 2,
            message: format!("bad draw record: {e}"),
        })?;
        draws.push(draw);
    }
    Ok(Chain {
        spec: header.spec,
        hyper: header.hyper,
        config: header.config,
        draws,
        acceptance: header.acceptance,
        wall_secs: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DamRecord, Dataset, ModelSpec};

    #[test]
    fn chain_roundtrip() {
        let data = Dataset::new(vec![
            DamRecord::new(0.0, 8, 1, 1).unwrap(),
            DamRecord::new(1.0, 9, 2, 0).unwrap(),
            DamRecord::new(2.0, 7, 1, 2).unwrap(),
        ])
        .unwrap();
        let hyper = Hyperparameters::defaults(2.0);
        let config = McmcConfig {
            n_iter: 40,
            burn_in: 20,
            thin: 2,
            seed: 5,
            n_chains: 1,
        };
        let chain = super::super::fit(&ModelSpec::gen_bin(3), &data, &hyper, &config).unwrap();
        assert_eq!(chain.draws.len(), 10);
        let dir = std::env::temp_dir().join("devtox-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("chain.jsonl");
        write_chain(&path, &chain).unwrap();
        let loaded = read_chain(&path).unwrap();
        assert_eq!(loaded.draws, chain.draws);
        assert_eq!(loaded.spec, chain.spec);
        std::fs::remove_dir_all(&dir).ok();
    }
}
