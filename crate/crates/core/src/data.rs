//! Main-study / validation datasets and their CSV representation.
//!
//! CSV layout: a mandatory header with a `y_star` column, an optional `y`
//! column (empty cell or `NA` for rows outside the validation sample), and one
//! column per covariate. Which covariates are discrete is declared by a JSON
//! sidecar (`{"discrete": ["z19", "z20"]}`); covariates are stored with the
//! continuous block first, each block in header order.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub y_star: u8,
    pub y: Option<u8>,
    pub z: Vec<f64>,
}

/// Column roles for CSV ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default)]
    pub discrete: Vec<String>,
}

impl Schema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<Row>,
    names: Vec<String>,
    p1: usize,
    p2: usize,
    validated: Vec<bool>,
    validation_index: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset; rows with a true response form the validation sample.
    pub fn new(rows: Vec<Row>, names: Vec<String>, p1: usize, p2: usize) -> Result<Self> {
        let p = p1 + p2;
        if p == 0 {
            return Err(Error::data("at least one covariate is required"));
        }
        if names.len() != p {
            return Err(Error::Dimension { expected: p, got: names.len() });
        }
        if rows.is_empty() {
            return Err(Error::data("dataset has no rows"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.z.len() != p {
                return Err(Error::data(format!("row {} has {} covariates, expected {p}", i + 1, r.z.len())));
            }
            if r.y_star > 1 || r.y.is_some_and(|y| y > 1) {
                return Err(Error::data(format!("non-binary response at row {}", i + 1)));
            }
            if r.z.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("non-finite covariate at row {}", i + 1)));
            }
        }
        let validated: Vec<bool> = rows.iter().map(|r| r.y.is_some()).collect();
        let validation_index: Vec<usize> = (0..rows.len()).filter(|&i| validated[i]).collect();
        if validation_index.is_empty() {
            return Err(Error::data("validation sample is empty (no row has a true response)"));
        }
        Ok(Dataset { rows, names, p1, p2, validated, validation_index })
    }

    /// Dataset with default covariate names `z1..zp`.
    pub fn from_rows(rows: Vec<Row>, p1: usize, p2: usize) -> Result<Self> {
        let names = (1..=p1 + p2).map(|j| format!("z{j}")).collect();
        Self::new(rows, names, p1, p2)
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &Row {
        &self.rows[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn p(&self) -> usize {
        self.p1 + self.p2
    }

    pub fn p1(&self) -> usize {
        self.p1
    }

    pub fn p2(&self) -> usize {
        self.p2
    }

    pub fn n_validation(&self) -> usize {
        self.validation_index.len()
    }

    /// Validation ratio `n_v / n`.
    pub fn delta(&self) -> f64 {
        self.n_validation() as f64 / self.n() as f64
    }

    pub fn validation_index(&self) -> &[usize] {
        &self.validation_index
    }

    pub fn is_validated(&self, i: usize) -> bool {
        self.validated[i]
    }

    pub fn fully_labeled(&self) -> bool {
        self.validation_index.len() == self.rows.len()
    }

    /// Fraction of rows with `y* != y`; requires every row to carry `y`.
    pub fn misclassification_rate(&self) -> Option<f64> {
        if !self.fully_labeled() {
            return None;
        }
        let flips = self.rows.iter().filter(|r| r.y != Some(r.y_star)).count();
        Some(flips as f64 / self.n() as f64)
    }

    /// Copy with every row's surrogate replaced by its true response.
    pub fn with_surrogate_equal_truth(&self) -> Result<Self> {
        if !self.fully_labeled() {
            return Err(Error::invalid("true responses are not available for every row"));
        }
        let rows = self.rows.iter().map(|r| Row { y_star: r.y.unwrap(), y: r.y, z: r.z.clone() }).collect();
        Dataset::new(rows, self.names.clone(), self.p1, self.p2)
    }

    /// Copy with continuous covariates centered and scaled to unit sample variance.
    pub fn zscored(&self) -> Self {
        let n = self.n() as f64;
        let mut out = self.clone();
        for j in 0..self.p1 {
            let mean = self.rows.iter().map(|r| r.z[j]).sum::<f64>() / n;
            let var = self.rows.iter().map(|r| (r.z[j] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for r in &mut out.rows {
                r.z[j] = (r.z[j] - mean) / sd;
            }
        }
        out
    }

    /// Copy with the validation sample redrawn as `ceil(delta * n)` rows chosen
    /// uniformly without replacement; `y` is erased outside it.
    ///
    /// Each row's draw key is a hash of the seed and the row's contents, so the
    /// chosen rows do not depend on row order.
    pub fn make_validation_split(&self, delta: f64, seed: u64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::invalid(format!("validation ratio must lie in (0, 1], got {delta}")));
        }
        if !self.fully_labeled() {
            return Err(Error::invalid("validation split needs the true response on every row"));
        }
        let n = self.n();
        let n_v = ((delta * n as f64).ceil() as usize).clamp(1, n);
        let mut keyed: Vec<(u64, usize)> = self.rows.iter().enumerate().map(|(i, r)| (row_key(seed, r), i)).collect();
        keyed.sort_unstable();
        let chosen: HashSet<usize> = keyed[..n_v].iter().map(|&(_, i)| i).collect();
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| Row { y_star: r.y_star, y: if chosen.contains(&i) { r.y } else { None }, z: r.z.clone() })
            .collect();
        Dataset::new(rows, self.names.clone(), self.p1, self.p2)
    }

    /// Reads a dataset; `schema` names the discrete covariate columns.
    pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_csv(file, schema)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let col = |name: &str| header.iter().position(|h| h == name);
        let ystar_col = col("y_star").ok_or_else(|| Error::data("missing required column 'y_star'"))?;
        let y_col = col("y");
        let cov_cols: Vec<(usize, String)> =
            header.iter().enumerate().filter(|(i, _)| *i != ystar_col && Some(*i) != y_col).map(|(i, h)| (i, h.to_string())).collect();
        if cov_cols.is_empty() {
            return Err(Error::data("no covariate columns"));
        }
        let known: HashSet<&str> = cov_cols.iter().map(|(_, h)| h.as_str()).collect();
        if let Some(bad) = schema.discrete.iter().find(|d| !known.contains(d.as_str())) {
            return Err(Error::data(format!("schema names unknown discrete column '{bad}'")));
        }
        let discrete: HashSet<&str> = schema.discrete.iter().map(String::as_str).collect();
        let ordered: Vec<(usize, String)> = cov_cols
            .iter()
            .filter(|(_, h)| !discrete.contains(h.as_str()))
            .chain(cov_cols.iter().filter(|(_, h)| discrete.contains(h.as_str())))
            .cloned()
            .collect();
        let p2 = discrete.len();
        let p1 = ordered.len() - p2;

        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let rownum = k + 1;
            let y_star = parse_binary(rec.get(ystar_col).unwrap_or(""), rownum)?
                .ok_or_else(|| Error::data(format!("missing y_star at row {rownum}")))?;
            let y = match y_col {
                Some(c) => parse_binary(rec.get(c).unwrap_or(""), rownum)?,
                None => None,
            };
            let mut z = Vec::with_capacity(ordered.len());
            for (c, name) in &ordered {
                let cell = rec.get(*c).unwrap_or("");
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                    return Err(Error::data(format!("missing covariate '{name}' at row {rownum}")));
                }
                let v: f64 = cell.parse().map_err(|_| Error::data(format!("non-numeric covariate '{name}' at row {rownum}")))?;
                z.push(v);
            }
            rows.push(Row { y_star, y, z });
        }
        if rows.is_empty() {
            return Err(Error::data("empty file"));
        }
        let names = ordered.into_iter().map(|(_, h)| h).collect();
        Dataset::new(rows, names, p1, p2)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y_star".to_string(), "y".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.y_star.to_string(), r.y.map(|v| v.to_string()).unwrap_or_default()];
            // `{}` on f64 prints the shortest string that parses back to the same bits.
            rec.extend(r.z.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Schema describing this dataset's discrete block.
    pub fn schema(&self) -> Schema {
        Schema { discrete: self.names[self.p1..].to_vec() }
    }
}

fn parse_binary(cell: &str, rownum: usize) -> Result<Option<u8>> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(0.0) => Ok(Some(0)),
        Ok(1.0) => Ok(Some(1)),
        _ => Err(Error::data(format!("non-binary response at row {rownum}"))),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn row_key(seed: u64, row: &Row) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ u64::from(row.y_star));
    h = splitmix64(h ^ row.y.map_or(2, u64::from));
    for v in &row.z {
        h = splitmix64(h ^ v.to_bits());
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_text(body: &str) -> String {
        format!("y_star,y,z1,z2\n{body}")
    }

    #[test]
    fn counts_validation_rows() {
        let text = csv_text("1,1,0.5,1\n0,,1.5,0\n1,0,-0.2,1\n0,NA,0.0,0\n");
        let ds = Dataset::read_csv(text.as_bytes(), &Schema { discrete: vec!["z2".into()] }).unwrap();
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.n_validation(), 2);
        assert_eq!(ds.delta(), 0.5);
        assert_eq!((ds.p1(), ds.p2()), (1, 1));
    }

    #[test]
    fn rejects_non_binary_response() {
        let text = csv_text("1,1,0.5,1\n0,2,1.5,0\n");
        let err = Dataset::read_csv(text.as_bytes(), &Schema::default()).unwrap_err();
        assert!(err.to_string().contains("non-binary response at row 2"), "{err}");
    }

    #[test]
    fn rejects_missing_covariate_with_row_number() {
        let text = csv_text("1,1,0.5,1\n0,1,,0\n");
        let err = Dataset::read_csv(text.as_bytes(), &Schema::default()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn rejects_missing_required_column_and_empty_file() {
        let err = Dataset::read_csv("y,z1\n1,0.3\n".as_bytes(), &Schema::default()).unwrap_err();
        assert!(err.to_string().contains("y_star"));
        let err = Dataset::read_csv("y_star,y,z1\n".as_bytes(), &Schema::default()).unwrap_err();
        assert!(err.to_string().contains("empty"));
    }

    #[test]
    fn discrete_columns_move_after_continuous() {
        let text = "y_star,y,d1,c1,c2\n1,1,1,0.1,0.2\n";
        let ds = Dataset::read_csv(text.as_bytes(), &Schema { discrete: vec!["d1".into()] }).unwrap();
        assert_eq!(ds.names(), &["c1", "c2", "d1"]);
        assert_eq!(ds.row(0).z, vec![0.1, 0.2, 1.0]);
    }

    fn labeled(n: usize) -> Dataset {
        let rows =
            (0..n).map(|i| Row { y_star: (i % 2) as u8, y: Some(((i / 3) % 2) as u8), z: vec![i as f64 * 0.37, (i % 5) as f64] }).collect();
        Dataset::from_rows(rows, 1, 1).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = labeled(1000);
        let s = ds.make_validation_split(0.1, 42).unwrap();
        assert_eq!(s.n_validation(), 100);
        let again = ds.make_validation_split(0.1, 42).unwrap();
        assert_eq!(s.validation_index(), again.validation_index());
        let other = ds.make_validation_split(0.1, 43).unwrap();
        assert_ne!(s.validation_index(), other.validation_index());
        let full = ds.make_validation_split(1.0, 1).unwrap();
        assert_eq!(full.n_validation(), 1000);
        assert_eq!(full, ds);
        assert!(ds.make_validation_split(0.0, 1).is_err());
        assert!(ds.make_validation_split(1.2, 1).is_err());
    }

    #[test]
    fn split_requires_full_labels() {
        let ds = labeled(10).make_validation_split(0.5, 1).unwrap();
        assert!(ds.make_validation_split(0.5, 1).is_err());
    }

    #[test]
    fn nhanes_like_fixture_loads() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
        let schema = Schema::from_json_file(format!("{dir}/nhanes_like.schema.json")).unwrap();
        let ds = Dataset::load_csv(format!("{dir}/nhanes_like.csv"), &schema).unwrap();
        assert_eq!((ds.p(), ds.p1(), ds.p2()), (20, 16, 4));
    }
}
