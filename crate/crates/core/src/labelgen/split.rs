use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Split;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn new(train: usize, val: usize, test: usize) -> Self {
        Self { train, val, test }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    /// Parses `"80,5,15"`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("split counts '{s}' are not integers")))?;
        match parts.as_slice() {
            [a, b, c] => Ok(Self::new(*a, *b, *c)),
            _ => Err(Error::Config(format!("split counts '{s}' need three values"))),
        }
    }
}

/// Image-to-split assignment, listed in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub seed: u64,
    pub counts: SplitCounts,
    pub assignments: Vec<(String, Split)>,
}

const MANIFEST_MAGIC: &str = "# pelvimark split manifest v1";

/// Seeded shuffle of the input order; the first `train` shuffled images go
/// to train, the next `val` to validation, the rest to test.
pub fn split_dataset(ids: &[String], counts: SplitCounts, seed: u64) -> Result<SplitManifest> {
    if counts.total() != ids.len() {
        return Err(Error::Config(format!(
            "split counts {}+{}+{} = {} do not match {} images",
            counts.train,
            counts.val,
            counts.test,
            counts.total(),
            ids.len()
        )));
    }
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::Config("duplicate image ids in split input".into()));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = vec![Split::Test; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        split[i] = if rank < counts.train {
            Split::Train
        } else if rank < counts.train + counts.val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(SplitManifest {
        seed,
        counts,
        assignments: ids.iter().cloned().zip(split).collect(),
    })
}

impl SplitManifest {
    pub fn get(&self, id: &str) -> Option<Split> {
        self.assignments.iter().find(|(i, _)| i == id).map(|(_, s)| *s)
    }

    pub fn lookup(&self) -> HashMap<&str, Split> {
        self.assignments.iter().map(|(i, s)| (i.as_str(), *s)).collect()
    }

    pub fn ids_in(&self, split: Split) -> Vec<&str> {
        self.assignments.iter().filter(|(_, s)| *s == split).map(|(i, _)| i.as_str()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{MANIFEST_MAGIC}\n# seed = {}\n# counts = train:{} val:{} test:{}\n",
            self.seed, self.counts.train, self.counts.val, self.counts.test
        );
        for (id, split) in &self.assignments {
            s.push_str(&format!("{id}\t{}\n", split.as_str()));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |why: String| Error::Validation(format!("split manifest: {why}"));
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_MAGIC) {
            return Err(bad("missing header".into()));
        }
        let seed = lines
            .next()
            .and_then(|l| l.strip_prefix("# seed = "))
            .and_then(|v| v.parse::<u64>().ok())
            .ok_or_else(|| bad("missing seed".into()))?;
        let counts_line = lines
            .next()
            .and_then(|l| l.strip_prefix("# counts = "))
            .ok_or_else(|| bad("missing counts".into()))?;
        let mut nums = counts_line.split_whitespace().map(|kv| kv.split(':').nth(1).and_then(|v| v.parse::<usize>().ok()));
        let (train, val, test) = match (nums.next().flatten(), nums.next().flatten(), nums.next().flatten()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(bad(format!("bad counts line '{counts_line}'"))),
        };
        let mut assignments = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (id, split) = line.split_once('\t').ok_or_else(|| bad(format!("bad line '{line}'")))?;
            let split = Split::parse(split).ok_or_else(|| bad(format!("unknown split '{split}'")))?;
            assignments.push((id.to_string(), split));
        }
        let manifest = SplitManifest { seed, counts: SplitCounts::new(train, val, test), assignments };
        let count = |s| manifest.assignments.iter().filter(|(_, x)| *x == s).count();
        if count(Split::Train) != train || count(Split::Val) != val || count(Split::Test) != test {
            return Err(bad("assignments disagree with the header counts".into()));
        }
        Ok(manifest)
    }
}
