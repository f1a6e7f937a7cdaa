//! CSV persistence for the six datasets.

use std::path::{Path, PathBuf};

use super::{derive_all, DeriveError, DeriveSummary, SixDatasets, TokenTransferRecord};
use crate::chain::format_trace_path;
use crate::ingest::RawBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetFile {
    pub name: &'static str,
    pub header: &'static [&'static str],
}

pub const DATASET_FILES: [DatasetFile; 6] = [
    DatasetFile {
        name: "dataset1_block_tx.csv",
        header: &[
            "block_number",
            "timestamp",
            "miner",
            "tx_hash",
            "tx_index",
            "from",
            "to",
            "value",
            "gas_price",
            "gas_used_by_tx",
            "status",
        ],
    },
    DatasetFile {
        name: "dataset2_internal_tx.csv",
        header: &["block_number", "tx_hash", "trace_path", "from", "to", "value", "kind"],
    },
    DatasetFile {
        name: "dataset3_contract_info.csv",
        header: &["contract_address", "creator", "creation_block", "creation_tx_hash", "creation_mode", "code"],
    },
    DatasetFile {
        name: "dataset4_contract_calls.csv",
        header: &["block_number", "tx_hash", "trace_path", "caller", "callee", "value", "kind", "selector", "status"],
    },
    DatasetFile {
        name: "dataset5_erc20.csv",
        header: &["block_number", "tx_hash", "log_index", "token_contract", "from", "to", "amount_or_token_id", "standard"],
    },
    DatasetFile {
        name: "dataset6_erc721.csv",
        header: &["block_number", "tx_hash", "log_index", "token_contract", "from", "to", "amount_or_token_id", "standard"],
    },
];

pub const DEFECTS_FILE: &str = "token_defects.csv";
const DEFECTS_HEADER: &[&str] = &["block_number", "tx_hash", "log_index", "token_contract", "standard", "reason"];

fn rows(ds: &SixDatasets, which: usize) -> Vec<Vec<String>> {
    let token_rows = |recs: &[TokenTransferRecord]| {
        recs.iter()
            .map(|r| {
                vec![
                    r.block_number.to_string(),
                    r.tx_hash.to_string(),
                    r.log_index.to_string(),
                    r.token_contract.to_string(),
                    r.from.to_string(),
                    r.to.to_string(),
                    r.amount_or_token_id.to_string(),
                    r.standard.to_string(),
                ]
            })
            .collect()
    };
    match which {
        0 => ds
            .block_transactions
            .iter()
            .map(|r| {
                vec![
                    r.block_number.to_string(),
                    r.timestamp.to_string(),
                    r.miner.to_string(),
                    r.tx_hash.to_string(),
                    r.tx_index.to_string(),
                    r.from.to_string(),
                    r.to.map(|a| a.to_string()).unwrap_or_default(),
                    r.value.to_string(),
                    r.gas_price.to_string(),
                    r.gas_used_by_tx.to_string(),
                    r.status.as_str().to_string(),
                ]
            })
            .collect(),
        1 => ds
            .internal_transfers
            .iter()
            .map(|r| {
                vec![
                    r.block_number.to_string(),
                    r.tx_hash.to_string(),
                    format_trace_path(&r.trace_path),
                    r.from.to_string(),
                    r.to.to_string(),
                    r.value.to_string(),
                    r.kind.as_str().to_string(),
                ]
            })
            .collect(),
        2 => ds
            .contracts
            .iter()
            .map(|r| {
                vec![
                    r.contract_address.to_string(),
                    r.creator.to_string(),
                    r.creation_block.to_string(),
                    r.creation_tx_hash.to_string(),
                    r.creation_mode.as_str().to_string(),
                    r.code.to_string(),
                ]
            })
            .collect(),
        3 => ds
            .contract_calls
            .iter()
            .map(|r| {
                vec![
                    r.block_number.to_string(),
                    r.tx_hash.to_string(),
                    format_trace_path(&r.trace_path),
                    r.caller.to_string(),
                    r.callee.to_string(),
                    r.value.to_string(),
                    r.kind.as_str().to_string(),
                    r.selector.map(|s| format!("0x{}", hex::encode(s))).unwrap_or_default(),
                    r.status.as_str().to_string(),
                ]
            })
            .collect(),
        4 => token_rows(&ds.erc20_transfers),
        5 => token_rows(&ds.erc721_transfers),
        _ => unreachable!("six datasets"),
    }
}

fn defect_rows(ds: &SixDatasets) -> Vec<Vec<String>> {
    ds.token_defects
        .iter()
        .map(|d| {
            vec![
                d.block_number.to_string(),
                d.tx_hash.to_string(),
                d.log_index.to_string(),
                d.token_contract.to_string(),
                d.standard.to_string(),
                d.reason.clone(),
            ]
        })
        .collect()
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), DeriveError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| DeriveError::Io { path: path.to_path_buf(), source: e })?;
    Ok(())
}

/// Writes the six dataset files plus the token defect list into `dir`.
/// Files are staged under temporary names and renamed only once all of
/// them were written; on failure nothing is left behind.
pub fn write_datasets(ds: &SixDatasets, dir: impl AsRef<Path>) -> Result<DeriveSummary, DeriveError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| DeriveError::Io { path: dir.to_path_buf(), source: e })?;

    let mut jobs: Vec<(PathBuf, &[&str], Vec<Vec<String>>)> = DATASET_FILES
        .iter()
        .enumerate()
        .map(|(i, f)| (dir.join(f.name), f.header, rows(ds, i)))
        .collect();
    jobs.push((dir.join(DEFECTS_FILE), DEFECTS_HEADER, defect_rows(ds)));

    let staged: Vec<(PathBuf, PathBuf)> =
        jobs.iter().map(|(p, _, _)| (p.with_extension("csv.partial"), p.clone())).collect();
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = std::fs::remove_file(tmp);
        }
    };

    for ((tmp, _), (_, header, rows)) in staged.iter().zip(&jobs) {
        if let Err(e) = write_csv(tmp, header, rows) {
            cleanup(&staged);
            return Err(e);
        }
    }
    for (tmp, fin) in &staged {
        if let Err(e) = std::fs::rename(tmp, fin) {
            cleanup(&staged);
            for (_, done) in &staged {
                let _ = std::fs::remove_file(done);
            }
            return Err(DeriveError::Io { path: fin.clone(), source: e });
        }
    }
    Ok(ds.summary())
}

pub fn derive_all_to_dir(bundles: &[RawBundle], workers: usize, dir: impl AsRef<Path>) -> Result<DeriveSummary, DeriveError> {
    let ds = derive_all(bundles, workers)?;
    write_datasets(&ds, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_corpus_writes_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let summary = derive_all_to_dir(&[], 2, dir.path()).unwrap();
        assert_eq!(summary.rows, [0; 6]);
        for f in DATASET_FILES {
            let text = std::fs::read_to_string(dir.path().join(f.name)).unwrap();
            assert_eq!(text, format!("{}\n", f.header.join(",")));
        }
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.path().to_string_lossy().ends_with(".partial"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
