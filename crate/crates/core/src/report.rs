//! Machine-readable run reports and the palette-size sweep table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{QuantizerConfig, TracePoint};
use crate::seeding::SeedingStrategy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub rho: f64,
    pub r: f64,
    pub seed: u64,
    /// Resolved iteration budget.
    pub iters: usize,
    pub seeding: SeedingStrategy,
}

impl Hyperparameters {
    pub fn from_config(config: &QuantizerConfig, iters: usize) -> Self {
        Hyperparameters {
            rho: config.rho,
            r: config.r,
            seed: config.seed,
            iters,
            seeding: config.seeding,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizationReport {
    pub input_path: String,
    pub width: usize,
    pub height: usize,
    pub distinct_colors_before: usize,
    /// Palette size asked for on the command line.
    pub requested_colors: usize,
    /// Palette size actually used; lower than requested when the image has
    /// fewer distinct colors.
    #[serde(rename = "K")]
    pub k: usize,
    pub hyperparameters: Hyperparameters,
    pub palette_hex: Vec<String>,
    /// Probability-weighted transport objective of the stored palette.
    pub final_objective: f64,
    /// Unweighted per-pixel sum of the same cost.
    pub transport_value: f64,
    pub mse: f64,
    pub original_bytes: u64,
    pub compressed_bytes: u64,
    pub wall_time_ms: f64,
    pub trace: Vec<TracePoint>,
}

impl QuantizationReport {
    /// JSON with the timing field zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> QuantizationReport {
        QuantizationReport {
            wall_time_ms: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkCell {
    Mse(f64),
    Error(String),
}

impl BenchmarkCell {
    pub fn mse(&self) -> Option<f64> {
        match self {
            BenchmarkCell::Mse(v) => Some(*v),
            BenchmarkCell::Error(_) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            BenchmarkCell::Mse(v) => format!("{v:.6}"),
            BenchmarkCell::Error(e) => format!("error: {e}"),
        }
    }
}

/// An MSE increase between consecutive palette sizes in one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub image: String,
    pub from_colors: usize,
    pub to_colors: usize,
    /// `(mse_after - mse_before) / mse_before`.
    pub relative_increase: f64,
}

/// MSE by palette size (rows) and image (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub colors: Vec<usize>,
    pub images: Vec<String>,
    /// `cells[row][column]`.
    pub cells: Vec<Vec<BenchmarkCell>>,
    pub hyperparameters: TableHyperparameters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableHyperparameters {
    pub rho: f64,
    pub r: f64,
    pub seed: u64,
    /// `None` means the default budget per image.
    pub iters: Option<usize>,
    pub seeding: SeedingStrategy,
}

impl BenchmarkTable {
    pub fn new(
        colors: Vec<usize>,
        images: Vec<String>,
        cells: Vec<Vec<BenchmarkCell>>,
        hyperparameters: TableHyperparameters,
    ) -> Result<Self> {
        if cells.len() != colors.len() || cells.iter().any(|row| row.len() != images.len()) {
            return Err(Error::invalid(
                "benchmark cells do not match the table shape",
            ));
        }
        Ok(BenchmarkTable {
            colors,
            images,
            cells,
            hyperparameters,
        })
    }

    pub fn column(&self, image: usize) -> impl Iterator<Item = &BenchmarkCell> + '_ {
        self.cells.iter().map(move |row| &row[image])
    }

    /// Places where MSE grows as the palette grows. Error cells are skipped.
    pub fn inversions(&self) -> Vec<Inversion> {
        let mut out = Vec::new();
        for (c, image) in self.images.iter().enumerate() {
            let mut prev: Option<(usize, f64)> = None;
            for (row, cell) in self.cells.iter().enumerate() {
                let Some(v) = cell[c].mse() else { continue };
                if let Some((k0, v0)) = prev {
                    if v > v0 {
                        out.push(Inversion {
                            image: image.clone(),
                            from_colors: k0,
                            to_colors: self.colors[row],
                            relative_increase: if v0 > 0.0 {
                                (v - v0) / v0
                            } else {
                                f64::INFINITY
                            },
                        });
                    }
                }
                prev = Some((self.colors[row], v));
            }
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
        let mut header = vec!["colors".to_string()];
        header.extend(self.images.iter().cloned());
        wtr.write_record(&header).map_err(csv_err)?;
        for (k, row) in self.colors.iter().zip(&self.cells) {
            let mut record = vec![k.to_string()];
            record.extend(row.iter().map(BenchmarkCell::render));
            wtr.write_record(&record).map_err(csv_err)?;
        }
        let bytes = wtr
            .into_inner()
            .map_err(|e| Error::invalid(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let escape = |s: &str| s.replace('|', "\\|");
        let mut out = String::new();
        let _ = write!(out, "| K |");
        for image in &self.images {
            let _ = write!(out, " {} |", escape(image));
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in &self.images {
            out.push_str("---|");
        }
        out.push('\n');
        for (k, row) in self.colors.iter().zip(&self.cells) {
            let _ = write!(out, "| {k} |");
            for cell in row {
                let text = match cell {
                    BenchmarkCell::Mse(v) => format!("MSE = {v:.4}"),
                    BenchmarkCell::Error(e) => format!("error: {}", escape(e)),
                };
                let _ = write!(out, " {text} |");
            }
            out.push('\n');
        }
        out
    }
}
