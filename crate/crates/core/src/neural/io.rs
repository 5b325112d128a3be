//! Text persistence for [`LstmModel`]: a `memelens-lstm v1` header, one
//! `param` line per hyperparameter, the input width, then every tensor as a
//! `tensor <name> <rows> <cols>` line followed by one line of values per row,
//! and finally the per-epoch loss history.

use std::fmt::Write as _;
use std::path::Path;

use super::{LstmModel, LstmParams, LstmWeights, Matrix, TENSOR_NAMES};
use crate::error::{Error, Result};

pub(crate) const MAGIC: &str = "memelens-lstm";
const VERSION: &str = "v1";

impl LstmModel {
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        writeln!(out, "{MAGIC} {VERSION}").unwrap();
        writeln!(out, "param hidden_units {}", p.hidden_units).unwrap();
        writeln!(out, "param dense1_units {}", p.dense1_units).unwrap();
        writeln!(out, "param dense2_units {}", p.dense2_units).unwrap();
        writeln!(out, "param epochs {}", p.epochs).unwrap();
        writeln!(out, "param learning_rate {:e}", p.learning_rate).unwrap();
        writeln!(out, "param adam_beta1 {:e}", p.adam_beta1).unwrap();
        writeln!(out, "param adam_beta2 {:e}", p.adam_beta2).unwrap();
        writeln!(out, "param adam_eps {:e}", p.adam_eps).unwrap();
        writeln!(out, "param seed {}", p.seed).unwrap();
        writeln!(out, "param batch_size {}", p.batch_size).unwrap();
        writeln!(out, "param max_steps {}", p.max_steps).unwrap();
        writeln!(out, "input_dim {}", self.input_dim).unwrap();
        for (name, tensor) in TENSOR_NAMES.iter().zip(self.weights.tensors()) {
            writeln!(out, "tensor {name} {} {}", tensor.rows(), tensor.cols()).unwrap();
            for r in 0..tensor.rows() {
                let row: Vec<String> = tensor.row(r).iter().map(|v| format!("{v:e}")).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        }
        let history: Vec<String> = self.history.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "history {} {}", history.len(), history.join(" ")).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("unexpected end of file, expected {what}")))
        };
        let fail = |line_no: usize, msg: &str| Error::Format(format!("line {line_no}: {msg}"));

        let (_, header) = next("header")?;
        match header.split_once(' ') {
            Some((MAGIC, VERSION)) => {}
            Some((MAGIC, other)) => return Err(Error::Format(format!("unsupported lstm model version {other}"))),
            _ => return Err(Error::Format("not an lstm model file".into())),
        }

        let mut params = LstmParams::default();
        for _ in 0..11 {
            let (line_no, line) = next("param")?;
            let parts: Vec<&str> = line.split(' ').collect();
            let ["param", name, value] = parts.as_slice() else {
                return Err(fail(line_no, "expected param line"));
            };
            let bad = |_| fail(line_no, &format!("bad value for {name}"));
            match *name {
                "hidden_units" => params.hidden_units = value.parse().map_err(bad)?,
                "dense1_units" => params.dense1_units = value.parse().map_err(bad)?,
                "dense2_units" => params.dense2_units = value.parse().map_err(bad)?,
                "epochs" => params.epochs = value.parse().map_err(bad)?,
                "seed" => params.seed = value.parse().map_err(bad)?,
                "batch_size" => params.batch_size = value.parse().map_err(bad)?,
                "max_steps" => params.max_steps = value.parse().map_err(bad)?,
                _ => {
                    let v: f64 = value
                        .parse()
                        .map_err(|_| fail(line_no, &format!("bad value for {name}")))?;
                    match *name {
                        "learning_rate" => params.learning_rate = v,
                        "adam_beta1" => params.adam_beta1 = v,
                        "adam_beta2" => params.adam_beta2 = v,
                        "adam_eps" => params.adam_eps = v,
                        other => return Err(fail(line_no, &format!("unknown parameter {other}"))),
                    }
                }
            }
        }
        params.validate().map_err(|e| Error::Format(e.to_string()))?;

        let (line_no, line) = next("input_dim")?;
        let input_dim: usize = line
            .strip_prefix("input_dim ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| fail(line_no, "expected input_dim"))?;

        let mut weights = LstmWeights::zeros(input_dim, &params);
        for (name, tensor) in TENSOR_NAMES.iter().zip(weights.tensors_mut()) {
            let (line_no, line) = next("tensor")?;
            let expected = format!("tensor {name} {} {}", tensor.rows(), tensor.cols());
            if line != expected {
                return Err(fail(line_no, &format!("expected \"{expected}\"")));
            }
            let (rows, cols) = (tensor.rows(), tensor.cols());
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (line_no, line) = next("tensor row")?;
                let before = data.len();
                for raw in line.split(' ') {
                    data.push(raw.parse::<f64>().map_err(|_| fail(line_no, "malformed number"))?);
                }
                if data.len() - before != cols {
                    return Err(fail(line_no, &format!("expected {cols} values")));
                }
            }
            *tensor = Matrix::from_vec(rows, cols, data).expect("row count checked");
        }

        let (line_no, line) = next("history")?;
        let mut parts = line.split(' ');
        if parts.next() != Some("history") {
            return Err(fail(line_no, "expected history"));
        }
        let count: usize = parts
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| fail(line_no, "bad history count"))?;
        let history = parts
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<f64>().map_err(|_| fail(line_no, "malformed number")))
            .collect::<Result<Vec<_>>>()?;
        if history.len() != count {
            return Err(fail(line_no, "history count mismatch"));
        }

        Ok(LstmModel {
            params,
            input_dim,
            weights,
            history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}
