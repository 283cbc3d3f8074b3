//! Layer-by-layer score matrices and their CSV/JSON forms.
//!
//! Rows are source layers, columns are target layers. CSV files start with
//! `#`-prefixed metadata lines followed by a header row of target layer ids;
//! numbers use Rust's shortest round-trip `f64` formatting.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub source: usize,
    pub target: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGrid {
    pub index: String,
    /// `true` for similarity scores, `false` for distances.
    pub higher_is_similar: bool,
    pub source_layers: Vec<usize>,
    pub target_layers: Vec<usize>,
    pub values: Vec<Vec<f64>>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub failures: Vec<CellFailure>,
}

impl SimilarityGrid {
    pub fn new(
        index: impl Into<String>,
        higher_is_similar: bool,
        source_layers: Vec<usize>,
        target_layers: Vec<usize>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if values.len() != source_layers.len()
            || values.iter().any(|r| r.len() != target_layers.len())
        {
            return Err(Error::Shape(format!(
                "grid values do not match {} source x {} target layers",
                source_layers.len(),
                target_layers.len()
            )));
        }
        Ok(Self {
            index: index.into(),
            higher_is_similar,
            source_layers,
            target_layers,
            values,
            seeds: Vec::new(),
            config_hash: None,
            failures: Vec::new(),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.source_layers.len(), self.target_layers.len())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row][col]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.shape().0.min(self.shape().1))
            .map(|i| self.values[i][i])
            .collect()
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .flatten()
            .filter(|v| v.is_finite())
            .fold(None, |acc, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(out, "# index={}", self.index)?;
        writeln!(
            out,
            "# direction={}",
            if self.higher_is_similar {
                "similarity"
            } else {
                "distance"
            }
        )?;
        if let Some(h) = &self.config_hash {
            writeln!(out, "# config={h}")?;
        }
        if !self.seeds.is_empty() {
            let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
            writeln!(out, "# seeds={}", seeds.join(" "))?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["source\\target".to_string()];
        header.extend(self.target_layers.iter().map(usize::to_string));
        w.write_record(&header)?;
        for (src, row) in self.source_layers.iter().zip(&self.values) {
            let mut rec = vec![src.to_string()];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is ASCII"))
    }

    /// Parse a grid written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut text = String::new();
        let mut input = input;
        input.read_to_string(&mut text)?;
        let mut index = String::from("unknown");
        let mut higher = true;
        let mut config_hash = None;
        let mut seeds = Vec::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim();
            if let Some((k, v)) = body.split_once('=') {
                match k {
                    "index" => index = v.to_string(),
                    "direction" => higher = v != "distance",
                    "config" => config_hash = Some(v.to_string()),
                    "seeds" => {
                        seeds = v
                            .split_whitespace()
                            .map(|s| {
                                s.parse()
                                    .map_err(|_| Error::Format(format!("bad seed {s:?}")))
                            })
                            .collect::<Result<_>>()?
                    }
                    _ => {}
                }
            }
        }
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        let target_layers = header
            .iter()
            .skip(1)
            .map(|h| {
                h.parse()
                    .map_err(|_| Error::Format(format!("bad layer id {h:?}")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let mut source_layers = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut it = rec.iter();
            let src = it.next().ok_or_else(|| Error::Format("empty row".into()))?;
            source_layers.push(
                src.parse()
                    .map_err(|_| Error::Format(format!("bad layer id {src:?}")))?,
            );
            values.push(
                it.map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Format(format!("bad value {v:?}")))
                })
                .collect::<Result<Vec<_>>>()?,
            );
        }
        let mut g = Self::new(index, higher, source_layers, target_layers, values)?;
        g.config_hash = config_hash;
        g.seeds = seeds;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_metadata() {
        let mut g = SimilarityGrid::new(
            "opd",
            false,
            vec![1, 2],
            vec![1, 2],
            vec![vec![0.0, 0.125], vec![1.0 / 3.0, f64::NAN]],
        )
        .unwrap();
        g.seeds = vec![3, 9];
        g.config_hash = Some("abc".into());
        let text = g.to_csv_string().unwrap();
        let back = SimilarityGrid::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.index, "opd");
        assert!(!back.higher_is_similar);
        assert_eq!(back.seeds, vec![3, 9]);
        assert_eq!(back.values[1][0], 1.0 / 3.0);
        assert!(back.values[1][1].is_nan());
    }

    #[test]
    fn rejects_ragged_values() {
        assert!(SimilarityGrid::new("x", true, vec![1], vec![1, 2], vec![vec![0.0]]).is_err());
    }
}
