//! Text persistence for [`GbdtModel`].
//!
//! ```text
//! memelens-gbdt v1
//! param <name> <value>          (one line per GbdtParams field)
//! base_score <real>
//! features <n>                  followed by n names, one per line
//! training_loss <k> <reals...>
//! trees <t>
//! tree <node count>             followed by nodes in preorder:
//! S <feature> <threshold> <gain> <cover>
//! L <value> <cover>
//! ```
//!
//! Reals are written in shortest round-trip exponent form, so a reloaded
//! model predicts bit-for-bit what the saved one did.

use std::fmt::Write as _;
use std::path::Path;

use super::{gain_importances, GbdtModel, GbdtParams, Node, Tree};
use crate::error::{Error, Result};

pub(crate) const MAGIC: &str = "memelens-gbdt";
const VERSION: &str = "v1";

impl GbdtModel {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let p = &self.params;
        writeln!(out, "{MAGIC} {VERSION}").unwrap();
        writeln!(out, "param n_estimators {}", p.n_estimators).unwrap();
        writeln!(out, "param learning_rate {:e}", p.learning_rate).unwrap();
        writeln!(out, "param max_depth {}", p.max_depth).unwrap();
        writeln!(out, "param scale_pos_weight {:e}", p.scale_pos_weight).unwrap();
        writeln!(out, "param min_gain_prune {:e}", p.min_gain_prune).unwrap();
        writeln!(out, "param min_samples_leaf {}", p.min_samples_leaf).unwrap();
        writeln!(out, "param l2_regularization {:e}", p.l2_regularization).unwrap();
        writeln!(out, "base_score {:e}", self.base_score).unwrap();
        writeln!(out, "features {}", self.feature_names.len()).unwrap();
        for name in &self.feature_names {
            writeln!(out, "{name}").unwrap();
        }
        write!(out, "training_loss {}", self.training_loss.len()).unwrap();
        for loss in &self.training_loss {
            write!(out, " {loss:e}").unwrap();
        }
        out.push('\n');
        writeln!(out, "trees {}", self.trees.len()).unwrap();
        for tree in &self.trees {
            writeln!(out, "tree {}", tree.len()).unwrap();
            for node in tree.nodes() {
                match *node {
                    Node::Split {
                        feature,
                        threshold,
                        gain,
                        cover,
                        ..
                    } => writeln!(out, "S {feature} {threshold:e} {gain:e} {cover:e}").unwrap(),
                    Node::Leaf { value, cover } => writeln!(out, "L {value:e} {cover:e}").unwrap(),
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut reader = LineReader::new(text);
        let header = reader.next_line()?;
        match header.split_once(' ') {
            Some((MAGIC, VERSION)) => {}
            Some((MAGIC, other)) => return Err(Error::Format(format!("unsupported gbdt model version {other}"))),
            _ => return Err(Error::Format("not a gbdt model file".into())),
        }

        let mut params = GbdtParams::default();
        for _ in 0..7 {
            let [_, name, value] = reader.fields::<3>("param")?;
            match name {
                "n_estimators" => params.n_estimators = reader.parse(value)?,
                "learning_rate" => params.learning_rate = reader.parse(value)?,
                "max_depth" => params.max_depth = reader.parse(value)?,
                "scale_pos_weight" => params.scale_pos_weight = reader.parse(value)?,
                "min_gain_prune" => params.min_gain_prune = reader.parse(value)?,
                "min_samples_leaf" => params.min_samples_leaf = reader.parse(value)?,
                "l2_regularization" => params.l2_regularization = reader.parse(value)?,
                other => return Err(reader.error(format!("unknown parameter {other}"))),
            }
        }
        params.validate().map_err(|e| Error::Format(e.to_string()))?;

        let [_, base] = reader.fields::<2>("base_score")?;
        let base_score: f64 = reader.parse(base)?;

        let [_, n] = reader.fields::<2>("features")?;
        let n_features: usize = reader.parse(n)?;
        let mut feature_names = Vec::with_capacity(n_features);
        for _ in 0..n_features {
            feature_names.push(reader.next_line()?.to_string());
        }

        let line = reader.next_line()?;
        let mut parts = line.split(' ');
        if parts.next() != Some("training_loss") {
            return Err(reader.error("expected training_loss"));
        }
        let count: usize = reader.parse(parts.next().unwrap_or(""))?;
        let training_loss = parts.map(|v| reader.parse::<f64>(v)).collect::<Result<Vec<_>>>()?;
        if training_loss.len() != count {
            return Err(reader.error("training_loss count mismatch"));
        }

        let [_, t] = reader.fields::<2>("trees")?;
        let n_trees: usize = reader.parse(t)?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let [_, count] = reader.fields::<2>("tree")?;
            let count: usize = reader.parse(count)?;
            let mut flat = Vec::with_capacity(count);
            for _ in 0..count {
                let line = reader.next_line()?;
                let parts: Vec<&str> = line.split(' ').collect();
                flat.push(match parts.as_slice() {
                    ["S", feature, threshold, gain, cover] => Node::Split {
                        feature: reader.parse(feature)?,
                        threshold: reader.parse(threshold)?,
                        gain: reader.parse(gain)?,
                        cover: reader.parse(cover)?,
                        left: 0,
                        right: 0,
                    },
                    ["L", value, cover] => Node::Leaf {
                        value: reader.parse(value)?,
                        cover: reader.parse(cover)?,
                    },
                    _ => return Err(reader.error("malformed tree node")),
                });
            }
            trees.push(link_preorder(flat, n_features).map_err(|e| reader.error(e))?);
        }
        if reader.remaining() {
            return Err(reader.error("trailing content after last tree"));
        }

        let feature_importances = gain_importances(&trees, n_features);
        Ok(GbdtModel {
            base_score,
            trees,
            params,
            feature_names,
            feature_importances,
            training_loss,
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

/// Restores child links for nodes listed in preorder.
fn link_preorder(mut nodes: Vec<Node>, n_features: usize) -> std::result::Result<Tree, String> {
    fn link(nodes: &mut [Node], i: usize, n_features: usize) -> std::result::Result<usize, String> {
        if i >= nodes.len() {
            return Err("tree ends before its last subtree".into());
        }
        match nodes[i] {
            Node::Leaf { .. } => Ok(i + 1),
            Node::Split { feature, .. } => {
                if feature >= n_features {
                    return Err(format!("split feature {feature} outside {n_features} features"));
                }
                let left = i + 1;
                let right = link(nodes, left, n_features)?;
                let end = link(nodes, right, n_features)?;
                if let Node::Split { left: l, right: r, .. } = &mut nodes[i] {
                    *l = left;
                    *r = right;
                }
                Ok(end)
            }
        }
    }
    if nodes.is_empty() {
        return Err("empty tree".into());
    }
    let end = link(&mut nodes, 0, n_features)?;
    if end != nodes.len() {
        return Err("tree has unreachable nodes".into());
    }
    Ok(Tree::from_nodes(nodes))
}

struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        LineReader {
            lines: text.lines().enumerate(),
            line_no: 0,
        }
    }

    fn error(&self, message: impl std::fmt::Display) -> Error {
        Error::Format(format!("line {}: {message}", self.line_no))
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, line)) => {
                self.line_no = i + 1;
                Ok(line)
            }
            None => Err(Error::Format(format!(
                "unexpected end of file after line {}",
                self.line_no
            ))),
        }
    }

    fn fields<const N: usize>(&mut self, key: &str) -> Result<[&'a str; N]> {
        let line = self.next_line()?;
        let parts: Vec<&str> = line.split(' ').collect();
        match <[&str; N]>::try_from(parts) {
            Ok(fields) if fields[0] == key => Ok(fields),
            _ => Err(self.error(format!("expected \"{key}\" line"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, raw: &str) -> Result<T> {
        raw.parse().map_err(|_| self.error(format!("cannot parse \"{raw}\"")))
    }

    fn remaining(&mut self) -> bool {
        self.lines.any(|(_, l)| !l.trim().is_empty())
    }
}
