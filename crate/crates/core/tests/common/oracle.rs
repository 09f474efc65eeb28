//! Reference computations used as test oracles. Nothing here calls into the
//! library's statistics or ordering code.

#![allow(dead_code)]

use sha2::{Digest, Sha256};

/// Deck order straight from the written recipe.
pub fn order(study: &str, participant: &str, n: usize) -> Vec<usize> {
    let mut bytes = study.as_bytes().to_vec();
    bytes.push(0x1F);
    bytes.extend_from_slice(participant.as_bytes());
    let d = Sha256::digest(&bytes);
    let mut state = d.as_slice()[..8]
        .iter()
        .fold(0u64, |acc, b| (acc << 8) | *b as u64);
    let mut next = || {
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    };
    let mut v: Vec<usize> = (0..n).collect();
    let mut i = n;
    while i > 1 {
        i -= 1;
        let j = (next() % (i as u64 + 1)) as usize;
        v.swap(i, j);
    }
    v
}

fn categories(cols: &[&[String]]) -> Vec<String> {
    let mut c: Vec<String> = cols.iter().flat_map(|x| x.iter().cloned()).collect();
    c.sort();
    c.dedup();
    c
}

pub fn percent(a: &[String], b: &[String]) -> f64 {
    let mut same = 0usize;
    for i in 0..a.len() {
        if a[i] == b[i] {
            same += 1;
        }
    }
    same as f64 * 100.0 / a.len() as f64
}

/// Cohen's kappa from a full k×k contingency table. `None` when chance
/// agreement is exactly one.
pub fn cohen(a: &[String], b: &[String]) -> Option<f64> {
    let cats = categories(&[a, b]);
    let k = cats.len();
    let idx = |s: &String| cats.iter().position(|c| c == s).unwrap();
    let mut table = vec![vec![0u64; k]; k];
    for i in 0..a.len() {
        table[idx(&a[i])][idx(&b[i])] += 1;
    }
    let n: u64 = table.iter().flatten().sum();
    let diag: u64 = (0..k).map(|i| table[i][i]).sum();
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..k).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let chance_num: u64 = (0..k).map(|c| rows[c] * cols[c]).sum();
    if chance_num == n * n {
        return None;
    }
    let nf = n as f64;
    let po = diag as f64 / nf;
    let pe: f64 = (0..k).map(|c| (rows[c] as f64 / nf) * (cols[c] as f64 / nf)).sum();
    Some((po - pe) / (1.0 - pe))
}

/// Fleiss' kappa from the item × category count table. `rows[i][r]` is the
/// label rater `r` gave item `i`.
pub fn fleiss(rows: &[Vec<String>]) -> Option<f64> {
    let all: Vec<String> = rows.iter().flatten().cloned().collect();
    let cats = categories(&[&all]);
    let n = rows[0].len() as f64;
    let items = rows.len() as f64;
    let counts: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            cats.iter()
                .map(|c| r.iter().filter(|x| *x == c).count() as f64)
                .collect()
        })
        .collect();
    let p_i: Vec<f64> = counts
        .iter()
        .map(|c| (c.iter().map(|x| x * x).sum::<f64>() - n) / (n * (n - 1.0)))
        .collect();
    let p_bar = p_i.iter().sum::<f64>() / items;
    let p_j: Vec<f64> = (0..cats.len())
        .map(|j| counts.iter().map(|c| c[j]).sum::<f64>() / (items * n))
        .collect();
    if cats.len() == 1 {
        return None;
    }
    let pe: f64 = p_j.iter().map(|p| p * p).sum();
    Some((p_bar - pe) / (1.0 - pe))
}

/// Mean terminal duration in seconds.
pub fn mean_seconds(durations_ms: &[u64]) -> f64 {
    durations_ms.iter().sum::<u64>() as f64 / durations_ms.len() as f64 / 1000.0
}
