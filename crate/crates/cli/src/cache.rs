//! On-disk cache of index tables keyed by a hash of `(λ, γ, p, d_max)`.

use std::fs;
use std::path::PathBuf;

use qaoi_core::whittle::{whittle_table, WhittleTable};
use qaoi_core::SubMdpParams;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CACHE_ENV: &str = "QAOI_CACHE_DIR";

#[derive(Debug, Clone)]
pub struct TableCache {
    dir: PathBuf,
}

impl TableCache {
    /// `$QAOI_CACHE_DIR`, else the user cache directory.
    pub fn from_env() -> Self {
        let dir = std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .or_else(|| std::env::var_os("XDG_CACHE_HOME").map(|d| PathBuf::from(d).join("qaoi")))
            .or_else(|| std::env::var_os("HOME").map(|d| PathBuf::from(d).join(".cache").join("qaoi")))
            .unwrap_or_else(|| std::env::temp_dir().join("qaoi-cache"));
        Self { dir }
    }

    pub fn key(params: &SubMdpParams) -> String {
        let mut h = Sha256::new();
        h.update(b"whittle-table-v1");
        for x in [params.lambda, params.gamma, params.p] {
            h.update(x.to_bits().to_le_bytes());
        }
        h.update((params.d_max as u64).to_le_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, params: &SubMdpParams) -> PathBuf {
        self.dir.join(format!("{}.json", Self::key(params)))
    }

    /// The cached table, or a freshly computed one that is then stored.
    /// Unreadable or foreign entries are recomputed; failing to store is
    /// reported but not fatal.
    pub fn table(&self, params: &SubMdpParams) -> Result<WhittleTable, CliError> {
        let path = self.path(params);
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(table) = serde_json::from_str::<WhittleTable>(&text) {
                if table.params == *params {
                    return Ok(table);
                }
            }
        }
        let table = whittle_table(params)?;
        if let Err(e) = self.store(&path, &table) {
            eprintln!("qaoi: warning: cannot cache table at {}: {e}", path.display());
        }
        Ok(table)
    }

    fn store(&self, path: &PathBuf, table: &WhittleTable) -> std::io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_vec(table)?)?;
        fs::rename(tmp, path)
    }
}
