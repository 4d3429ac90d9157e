//! Raw feedback ingestion: binarization, negative sampling, frequency
//! filtering and the train/validation/test split.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::SeedStream;

/// One line of an interactions file: a rating or a 0/1 label.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub user: String,
    pub item: String,
    pub value: f64,
}

/// A binary-labelled (user, item) record keyed by external ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub label: u8,
}

impl Interaction {
    pub fn new(user: impl Into<String>, item: impl Into<String>, label: u8) -> Self {
        Interaction {
            user: user.into(),
            item: item.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Triple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Interaction>,
    pub validation: Vec<Interaction>,
    pub test: Vec<Interaction>,
}

/// Ratings of 4 and 5 become positives, 1 to 3 negatives. Values outside
/// `[1, 5]` are rejected with a diagnostic.
pub fn binarize_ratings(ratings: &[RawRecord]) -> (Vec<Interaction>, Vec<Rejected>) {
    let mut out = Vec::with_capacity(ratings.len());
    let mut rejected = Vec::new();
    for (index, r) in ratings.iter().enumerate() {
        if !(1.0..=5.0).contains(&r.value) {
            rejected.push(Rejected {
                index,
                reason: format!("rating {} outside [1, 5] for ({}, {})", r.value, r.user, r.item),
            });
            continue;
        }
        let label = u8::from(r.value >= 4.0);
        out.push(Interaction::new(r.user.clone(), r.item.clone(), label));
    }
    (out, rejected)
}

/// Appends, for every user, as many label-0 pairs as that user has
/// positives, drawn uniformly without replacement from items the user never
/// interacted with. The item universe is every item present in `pairs`.
pub fn sample_unseen_negatives(pairs: &[Interaction], seed: u64) -> Vec<Interaction> {
    let mut items: Vec<&str> = pairs.iter().map(|p| p.item.as_str()).collect::<HashSet<_>>().into_iter().collect();
    items.sort_unstable();
    let item_pos: HashMap<&str, usize> = items.iter().enumerate().map(|(i, s)| (*s, i)).collect();

    let mut per_user: BTreeMap<&str, (usize, HashSet<usize>)> = BTreeMap::new();
    for p in pairs {
        let e = per_user.entry(p.user.as_str()).or_default();
        if p.label == 1 {
            e.0 += 1;
        }
        e.1.insert(item_pos[p.item.as_str()]);
    }

    let mut rng = SeedStream::new(seed).rng();
    let mut out = pairs.to_vec();
    for (user, (positives, seen)) in per_user {
        if positives == 0 {
            continue;
        }
        let unseen_count = items.len() - seen.len();
        let want = if positives > unseen_count {
            warn!("user {user} has {positives} positives but only {unseen_count} unseen items; sampling all");
            unseen_count
        } else {
            positives
        };
        let chosen: Vec<usize> = if want * 2 >= unseen_count {
            let mut unseen: Vec<usize> = (0..items.len()).filter(|i| !seen.contains(i)).collect();
            unseen.shuffle(&mut rng);
            unseen.truncate(want);
            unseen
        } else {
            let mut picked = Vec::with_capacity(want);
            let mut taken = HashSet::with_capacity(want);
            while picked.len() < want {
                let i = rng.gen_range(0..items.len());
                if !seen.contains(&i) && taken.insert(i) {
                    picked.push(i);
                }
            }
            picked
        };
        out.extend(chosen.into_iter().map(|i| Interaction::new(user, items[i], 0)));
    }
    out
}

/// Repeatedly drops users with fewer than `user_min` records and items with
/// fewer than `item_min` records until nothing changes.
pub fn filter_low_frequency(pairs: &[Interaction], user_min: usize, item_min: usize) -> Result<Vec<Interaction>> {
    let mut current: Vec<Interaction> = pairs.to_vec();
    loop {
        let mut users: HashMap<&str, usize> = HashMap::new();
        let mut items: HashMap<&str, usize> = HashMap::new();
        for p in &current {
            *users.entry(&p.user).or_default() += 1;
            *items.entry(&p.item).or_default() += 1;
        }
        let keep: Vec<bool> = current
            .iter()
            .map(|p| users[p.user.as_str()] >= user_min && items[p.item.as_str()] >= item_min)
            .collect();
        if keep.iter().all(|k| *k) {
            break;
        }
        let mut k = keep.into_iter();
        current.retain(|_| k.next().unwrap_or(false));
    }
    if current.is_empty() {
        return Err(Error::Empty("every record was removed by frequency filtering"));
    }
    Ok(current)
}

/// Global random partition by `ratios` (train, validation, test).
///
/// Train and validation sizes are rounded to the nearest integer; test takes
/// the remainder.
pub fn split_dataset(pairs: &[Interaction], ratios: (f64, f64, f64), seed: u64) -> Result<DatasetSplit> {
    let (a, b, c) = ratios;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios must be positive and sum to 1, got {ratios:?}")));
    }
    if pairs.len() < 5 {
        return Err(Error::invalid(format!("need at least 5 records to split, got {}", pairs.len())));
    }
    let n = pairs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut SeedStream::new(seed).rng());
    let n_train = (n as f64 * a).round() as usize;
    let n_val = ((n as f64 * b).round() as usize).min(n - n_train);
    let pick = |idx: &[usize]| idx.iter().map(|&i| pairs[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn for_each_field_line<F>(path: &Path, fields: usize, mut f: F) -> Result<()>
where
    F: FnMut(usize, &[&str]) -> Result<()>,
{
    let reader = open(path)?;
    for (no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() < fields {
            return Err(Error::Parse {
                file: path.display().to_string(),
                line: no + 1,
                message: format!("expected {fields} tab-separated fields, got {}", parts.len()),
            });
        }
        f(no + 1, &parts[..fields])?;
    }
    Ok(())
}

/// `user<TAB>item<TAB>rating_or_label` per line.
pub fn read_interactions(path: &Path) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for_each_field_line(path, 3, |line, f| {
        let value: f64 = f[2].trim().parse().map_err(|_| Error::Parse {
            file: path.display().to_string(),
            line,
            message: format!("bad value {:?}", f[2]),
        })?;
        out.push(RawRecord {
            user: f[0].to_string(),
            item: f[1].to_string(),
            value,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Interactions file whose third column is a 0/1 label.
pub fn read_pairs(path: &Path) -> Result<Vec<Interaction>> {
    read_interactions(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.value == 0.0 || r.value == 1.0 {
                Ok(Interaction::new(r.user, r.item, r.value as u8))
            } else {
                Err(Error::Parse {
                    file: path.display().to_string(),
                    line: i + 1,
                    message: format!("label must be 0 or 1, got {}", r.value),
                })
            }
        })
        .collect()
}

pub fn write_pairs(path: &Path, pairs: &[Interaction]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        writeln!(w, "{}\t{}\t{}", p.user, p.item, p.label).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `head<TAB>relation<TAB>tail` per line.
pub fn read_triples(path: &Path) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for_each_field_line(path, 3, |_, f| {
        out.push(Triple::new(f[0], f[1], f[2]));
        Ok(())
    })?;
    Ok(out)
}

/// `item_id<TAB>entity_id` per line.
pub fn read_linkage(path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for_each_field_line(path, 2, |_, f| {
        out.push((f[0].to_string(), f[1].to_string()));
        Ok(())
    })?;
    Ok(out)
}
