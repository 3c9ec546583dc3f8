use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sampler::Dataset;

use super::tabular::{read_csv, CsvSchema};

/// A reference dataset compiled into the binary.
#[derive(Clone, Copy, Debug)]
pub struct EmbeddedDataset {
    pub name: &'static str,
    pub citation: &'static str,
    pub contents: &'static str,
    /// SHA-256 of `contents`, hex encoded.
    pub sha256: &'static str,
}

pub const NEWCOMB: EmbeddedDataset = EmbeddedDataset {
    name: "newcomb",
    citation: "S. M. Stigler (1977), Do robust estimators deal with real data?, Annals of Statistics 5(6)",
    contents: include_str!("../../data/newcomb.csv"),
    sha256: "fcc2981df7a87a724eec94de5757c897e4288e8b2efc240b80eb1e85491eab89",
};

pub const BELGIAN_PHONES: EmbeddedDataset = EmbeddedDataset {
    name: "belgian_phones",
    citation: "P. J. Rousseeuw and A. M. Leroy (1987), Robust Regression and Outlier Detection, Wiley",
    contents: include_str!("../../data/phones.csv"),
    sha256: "15e542fa02fc809f3df84d14f04afa9ce34e38cf32cffe17bd951dea745522f1",
};

pub const EMBEDDED: [EmbeddedDataset; 2] = [NEWCOMB, BELGIAN_PHONES];

impl EmbeddedDataset {
    pub fn verify(&self) -> Result<()> {
        let digest = hex::encode(Sha256::digest(self.contents.as_bytes()));
        if digest != self.sha256 {
            return Err(Error::ChecksumMismatch {
                name: self.name.to_string(),
            });
        }
        Ok(())
    }

    pub fn by_name(name: &str) -> Option<EmbeddedDataset> {
        match name {
            "newcomb" => Some(NEWCOMB),
            "phones" | "belgian_phones" => Some(BELGIAN_PHONES),
            _ => None,
        }
    }

    /// Parses the embedded file after checking its checksum.
    pub fn load(&self, schema: &CsvSchema) -> Result<super::LoadedData> {
        self.verify()?;
        read_csv(self.contents.as_bytes(), schema)
    }
}

pub fn verify_embedded() -> Result<()> {
    EMBEDDED.iter().try_for_each(EmbeddedDataset::verify)
}

/// Newcomb's 66 passage times as a location dataset.
pub fn newcomb() -> Result<Dataset> {
    NEWCOMB.load(&CsvSchema::new("time", &[], true))?.single()
}

/// Annual Belgian call counts, 1950–1973 (years stored as 50–73).
#[derive(Clone, Debug, PartialEq)]
pub struct Phones {
    pub year: Vec<f64>,
    pub calls: Vec<f64>,
}

/// Year about which the phone regressions are centred.
pub const PHONES_YEAR_CENTRE: f64 = 61.5;

pub fn phones() -> Result<Phones> {
    let d = BELGIAN_PHONES.load(&CsvSchema::new("calls", &["year"], false))?.single()?;
    Ok(Phones {
        year: d.x.column(0).iter().copied().collect(),
        calls: d.y.iter().copied().collect(),
    })
}

impl Phones {
    /// `log(calls)` on `(1, year − 61.5)` for the cases in `rows`.
    pub fn regression(&self, rows: &[usize]) -> Result<Dataset> {
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.calls[i].ln()));
        let x = DMatrix::from_fn(rows.len(), 2, |r, c| {
            if c == 0 {
                1.0
            } else {
                self.year[rows[r]] - PHONES_YEAR_CENTRE
            }
        });
        Dataset::new(y, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksums_hold() {
        verify_embedded().unwrap();
    }

    #[test]
    fn tampered_contents_fail() {
        let bad = EmbeddedDataset {
            contents: "time\n1\n",
            ..NEWCOMB
        };
        assert!(matches!(bad.verify(), Err(Error::ChecksumMismatch { .. })));
    }

    #[test]
    fn newcomb_summary_values() {
        let d = newcomb().unwrap();
        assert_eq!(d.n(), 66);
        assert!((d.y.mean() - 26.212_121_212_121).abs() < 1e-9);
        assert_eq!(d.y.min(), -44.0);
        assert_eq!(d.y.max(), 40.0);
    }

    #[test]
    fn phones_shape() {
        let p = phones().unwrap();
        assert_eq!(p.year.len(), 24);
        assert_eq!((p.year[0], p.year[23]), (50.0, 73.0));
        assert_eq!(p.calls[19], 212.0);
        let d = p.regression(&[0, 1, 2]).unwrap();
        assert_eq!(d.x[(0, 1)], -11.5);
    }
}
