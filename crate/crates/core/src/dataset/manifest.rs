use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::io::{read_parsed, write_atomic};
use crate::rng;

pub const DEFAULT_TEST_FRACTION: f64 = 0.02;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Split {
    #[default]
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::data(format!("split must be train or test, got {other:?}"))),
        }
    }
}

/// One shape of a corpus. `path` is relative to the manifest's directory
/// unless absolute.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ManifestRecord {
    pub id: String,
    pub path: PathBuf,
    pub dataset_tag: String,
    pub split: Split,
}

impl ManifestRecord {
    pub fn resolve(&self, base: &Path) -> PathBuf {
        base.join(&self.path)
    }
}

fn check_field(name: &str, value: &str) -> Result<()> {
    if value.is_empty() {
        return Err(Error::param(format!("manifest {name} must not be empty")));
    }
    if value.contains(['\t', '\n', '\r']) {
        return Err(Error::param(format!("manifest {name} {value:?} contains a tab or line break")));
    }
    Ok(())
}

/// `id<TAB>path<TAB>dataset_tag<TAB>split`, one line per record.
pub fn manifest_text(records: &[ManifestRecord]) -> Result<String> {
    let mut seen = HashSet::new();
    let mut out = String::new();
    for r in records {
        let path = r
            .path
            .to_str()
            .ok_or_else(|| Error::param(format!("path of {} is not UTF-8", r.id)))?;
        check_field("id", &r.id)?;
        check_field("path", path)?;
        check_field("dataset tag", &r.dataset_tag)?;
        if !seen.insert(r.id.as_str()) {
            return Err(Error::param(format!("duplicate manifest id {}", r.id)));
        }
        out.push_str(&format!("{}\t{}\t{}\t{}\n", r.id, path, r.dataset_tag, r.split));
    }
    Ok(out)
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        let at = |msg: String| Error::data(format!("line {}: {msg}", n + 1));
        if fields.len() != 4 {
            return Err(at(format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        if let Some(i) = fields.iter().position(|f| f.is_empty()) {
            return Err(at(format!("field {} is empty", i + 1)));
        }
        if !seen.insert(fields[0]) {
            return Err(at(format!("duplicate id {}", fields[0])));
        }
        let split = fields[3].parse().map_err(|e: Error| at(e.to_string()))?;
        records.push(ManifestRecord {
            id: fields[0].to_string(),
            path: PathBuf::from(fields[1]),
            dataset_tag: fields[2].to_string(),
            split,
        });
    }
    Ok(records)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    write_atomic(path, manifest_text(records)?.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    read_parsed(path, |bytes| {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::data("manifest is not UTF-8"))?;
        parse_manifest(text)
    })
}

fn by_tag<'a>(records: impl IntoIterator<Item = (usize, &'a ManifestRecord)>) -> BTreeMap<&'a str, Vec<usize>> {
    let mut tags: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records {
        tags.entry(&r.dataset_tag).or_default().push(i);
    }
    tags
}

/// Assigns `⌊n·f⌋` randomly chosen shapes of every tag to the test split
/// and the rest to training. Record order is kept; a tag too small for a
/// single test shape stays entirely in training.
pub fn split_corpus(mut records: Vec<ManifestRecord>, test_fraction: f64, seed: u64) -> Result<Vec<ManifestRecord>> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::param(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let tags = by_tag(records.iter().enumerate());
    let mut test = vec![false; records.len()];
    for (tag, mut members) in tags {
        let k = (members.len() as f64 * test_fraction + 1e-9).floor() as usize;
        members.shuffle(&mut rng::stage_rng(seed, &format!("split/{tag}")));
        for &i in &members[..k] {
            test[i] = true;
        }
    }
    for (r, t) in records.iter_mut().zip(test) {
        r.split = if t { Split::Test } else { Split::Train };
    }
    Ok(records)
}

/// Exactly `cap` records per tag, tags in sorted order. Tags with at least
/// `cap` shapes are subsampled without replacement; smaller tags are
/// repeated in full, reshuffled on every pass, and the final pass is cut
/// short at `cap`.
pub fn balanced_sample(records: &[ManifestRecord], cap: usize, seed: u64) -> Result<Vec<ManifestRecord>> {
    if cap == 0 {
        return Err(Error::param("balanced sampling needs a cap of at least 1"));
    }
    if records.is_empty() {
        return Err(Error::param("balanced sampling needs at least one tagged record"));
    }
    let mut out = Vec::with_capacity(cap * records.len().min(cap));
    for (tag, members) in by_tag(records.iter().enumerate()) {
        let mut r = rng::stage_rng(seed, &format!("balance/{tag}"));
        if members.len() >= cap {
            out.extend(index::sample(&mut r, members.len(), cap).iter().map(|i| records[members[i]].clone()));
            continue;
        }
        let mut taken = 0;
        while taken < cap {
            let mut pass = members.clone();
            pass.shuffle(&mut r);
            for &i in pass.iter().take(cap - taken) {
                out.push(records[i].clone());
            }
            taken += pass.len().min(cap - taken);
        }
    }
    Ok(out)
}
