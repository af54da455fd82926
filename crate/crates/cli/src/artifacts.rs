use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

/// Independent seed for the named consumer, derived from the run seed.
pub fn named_seed(master: u64, name: &str) -> u64 {
    // FNV-1a, then the splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub comparison: &'static str,
    pub threshold: Threshold,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Threshold {
    Bound(f64),
    Range([f64; 2]),
}

impl Check {
    pub fn at_most(name: &str, value: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            value,
            comparison: "<=",
            threshold: Threshold::Bound(max),
            pass: value <= max,
        }
    }

    pub fn at_least(name: &str, value: f64, min: f64) -> Self {
        Self {
            name: name.into(),
            value,
            comparison: ">=",
            threshold: Threshold::Bound(min),
            pass: value >= min,
        }
    }

    pub fn above(name: &str, value: f64, min: f64) -> Self {
        Self {
            name: name.into(),
            value,
            comparison: ">",
            threshold: Threshold::Bound(min),
            pass: value > min,
        }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            comparison: "in",
            threshold: Threshold::Range([lo, hi]),
            pass: (lo..=hi).contains(&value),
        }
    }
}

/// What a study hands back: checks, free-form results and CSV traces.
pub struct StudyOutput {
    pub checks: Vec<Check>,
    pub results: Value,
    pub traces: Vec<(String, Vec<u8>)>,
}

#[derive(Serialize)]
pub struct Summary<'a> {
    pub experiment: &'a str,
    pub seed: u64,
    pub pass: bool,
    pub checks: &'a [Check],
    pub results: &'a Value,
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Writes summary.json, the traces and metadata.json into `dir`. The summary
/// is a pure function of config and seed; timing goes to the metadata only.
pub fn write_all(dir: &Path, summary: &Summary, out: &StudyOutput, metadata: Value) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, bytes) in &out.traces {
        let p = dir.join(format!("trace_{name}.csv"));
        write_atomic(&p, bytes)?;
        written.push(p);
    }
    let p = dir.join("summary.json");
    let mut s = serde_json::to_vec_pretty(summary).map_err(std::io::Error::other)?;
    s.push(b'\n');
    write_atomic(&p, &s)?;
    written.push(p);
    let p = dir.join("metadata.json");
    let mut m = serde_json::to_vec_pretty(&metadata).map_err(std::io::Error::other)?;
    m.push(b'\n');
    write_atomic(&p, &m)?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_seeds_differ_by_name_and_master() {
        assert_eq!(named_seed(1, "a"), named_seed(1, "a"));
        assert_ne!(named_seed(1, "a"), named_seed(1, "b"));
        assert_ne!(named_seed(1, "a"), named_seed(2, "a"));
    }
}
