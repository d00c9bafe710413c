//! Test suites: the fitness cases a population is evaluated against.
//!
//! Numeric suites hold one f64 column per variable plus a target column.
//! Packed suites hold the same shape as bit columns, 64 cases per u64 word;
//! bit `c % 64` of word `c / 64` belongs to case `c`. Bits past `n_cases` in
//! the last word are dead and always masked to zero.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::LaneMode;

/// Case data in the representation the evaluator consumes.
#[derive(Debug, Clone)]
pub enum SuiteData {
    Numeric { vars: Vec<Vec<f64>>, targets: Vec<f64> },
    Packed { vars: Vec<Vec<u64>>, targets: Vec<u64>, tail_mask: u64 },
}

/// A fixed set of fitness cases.
#[derive(Debug, Clone)]
pub struct TestSuite {
    pub n_cases: usize,
    pub var_names: Vec<String>,
    pub data: SuiteData,
}

impl TestSuite {
    pub fn mode(&self) -> LaneMode {
        match self.data {
            SuiteData::Numeric { .. } => LaneMode::Numeric,
            SuiteData::Packed { .. } => LaneMode::Packed,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    /// Words per packed lane.
    pub fn words(&self) -> usize {
        (self.n_cases + 63) / 64
    }

    /// Sextic polynomial regression: `cases` points drawn uniformly from
    /// [-1, 1], target x^6 - 2x^4 + x^2.
    pub fn sextic(rng: &mut impl Rng, cases: usize) -> Result<Self> {
        if cases == 0 {
            return Err(Error::Config("suite needs at least one case".into()));
        }
        let xs: Vec<f64> = (0..cases).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let targets = xs
            .iter()
            .map(|&x| {
                let x2 = x * x;
                let x4 = x2 * x2;
                let x6 = x4 * x2;
                x6 - 2.0 * x4 + x2
            })
            .collect();
        Ok(TestSuite {
            n_cases: cases,
            var_names: vec!["x".into()],
            data: SuiteData::Numeric { vars: vec![xs], targets },
        })
    }

    /// Boolean 6-multiplexer: all 64 input combinations as one packed word.
    /// Case `c` sets A0 = bit 0 of c, A1 = bit 1, Dj = bit 2+j; the target is
    /// the data line selected by the address, D(A1 A0).
    pub fn mux6() -> Self {
        let pack = |f: &dyn Fn(u64) -> bool| -> u64 {
            let mut w = 0u64;
            for c in 0..64u64 {
                if f(c) {
                    w |= 1 << c;
                }
            }
            w
        };
        let mut vars = Vec::with_capacity(6);
        for bit in 0..6u64 {
            vars.push(vec![pack(&|c| (c >> bit) & 1 == 1)]);
        }
        let targets = vec![pack(&|c| (c >> (2 + (c & 3))) & 1 == 1)];
        TestSuite {
            n_cases: 64,
            var_names: vec!["A0".into(), "A1".into(), "D0".into(), "D1".into(), "D2".into(), "D3".into()],
            data: SuiteData::Packed { vars, targets, tail_mask: u64::MAX },
        }
    }

    /// Load a numeric suite from CSV: a header row names the variables, the
    /// last column is the target.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty suite file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 {
            return Err(Error::Parse("suite needs at least one variable and a target column".into()));
        }
        let n_vars = cols.len() - 1;
        let var_names: Vec<String> = cols[..n_vars].iter().map(|s| s.to_string()).collect();
        let mut vars: Vec<Vec<f64>> = vec![Vec::new(); n_vars];
        let mut targets = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    cols.len()
                )));
            }
            for (i, f) in fields.iter().enumerate() {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number {f:?} on row {}", lineno + 2)))?;
                if i < n_vars {
                    vars[i].push(v);
                } else {
                    targets.push(v);
                }
            }
        }
        if targets.is_empty() {
            return Err(Error::Parse("suite has no case rows".into()));
        }
        Ok(TestSuite {
            n_cases: targets.len(),
            var_names,
            data: SuiteData::Numeric { vars, targets },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sextic_cases_in_range_targets_match_factored_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = TestSuite::sextic(&mut rng, 48).unwrap();
        assert_eq!(s.n_cases, 48);
        let SuiteData::Numeric { vars, targets } = &s.data else { panic!() };
        for (&x, &t) in vars[0].iter().zip(targets) {
            assert!((-1.0..=1.0).contains(&x));
            // independent form: x^6 - 2x^4 + x^2 = (x^3 - x)^2
            let alt = (x * x * x - x) * (x * x * x - x);
            assert!((t - alt).abs() <= 1e-12, "x={x} t={t} alt={alt}");
        }
    }

    #[test]
    fn mux6_var_columns() {
        let s = TestSuite::mux6();
        let SuiteData::Packed { vars, tail_mask, .. } = &s.data else { panic!() };
        // A0 alternates per case
        assert_eq!(vars[0][0], 0xAAAA_AAAA_AAAA_AAAA);
        assert_eq!(*tail_mask, u64::MAX);
        assert_eq!(s.words(), 1);
    }

    #[test]
    fn csv_round() {
        let text = "x,y,target\n1.0,2.0,3.0\n-0.5,0.25,-0.25\n";
        let s = TestSuite::from_csv_str(text).unwrap();
        assert_eq!(s.n_cases, 2);
        assert_eq!(s.var_names, vec!["x", "y"]);
        let SuiteData::Numeric { vars, targets } = &s.data else { panic!() };
        assert_eq!(vars[1], vec![2.0, 0.25]);
        assert_eq!(targets, &vec![3.0, -0.25]);
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        assert!(TestSuite::from_csv_str("x,target\n1.0\n").is_err());
        assert!(TestSuite::from_csv_str("x\n1.0\n").is_err());
        assert!(TestSuite::from_csv_str("").is_err());
    }
}
