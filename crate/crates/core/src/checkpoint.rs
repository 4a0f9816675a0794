//! Versioned text checkpoint for model parameters and the embedding table.
//!
//! Layout (whitespace-separated, one object per section):
//!
//! ```text
//! embedreg-checkpoint 1
//! model cnn
//! dims <embed> <window> <hidden> <classes>
//! matrix w_conv <rows> <cols>
//! <rows·cols reals, one row per line>
//! vector b_conv <len>
//! <len reals on one line>
//! ...
//! matrix phi <V> <d>
//! matrix phi0 <V> <d>
//! ```
//!
//! Reals are printed with Rust's shortest round-trip formatting, so a
//! save/load cycle is lossless at 64-bit precision.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::math::{Matrix, Vector};
use crate::model::{Model, ModelDims, TreeRnnParams, WindowCnnParams};

const MAGIC: &str = "embedreg-checkpoint";
const VERSION: u32 = 1;

fn push_matrix(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "matrix {name} {} {}", m.rows, m.cols);
    for i in 0..m.rows {
        let row = m.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
}

fn push_vector(out: &mut String, name: &str, v: &[f64]) {
    let _ = writeln!(out, "vector {name} {}", v.len());
    for (j, x) in v.iter().enumerate() {
        if j > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x}");
    }
    out.push('\n');
}

pub fn checkpoint_to_string(model: &Model, emb: &EmbeddingTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let dims = model.dims();
    let kind = match model {
        Model::Cnn(_) => "cnn",
        Model::Rnn(_) => "rnn",
    };
    let _ = writeln!(out, "model {kind}");
    let _ = writeln!(
        out,
        "dims {} {} {} {}",
        dims.embed, dims.window, dims.hidden, dims.classes
    );
    for (name, m) in model.weight_names().iter().zip(model.weights()) {
        push_matrix(&mut out, name, m);
    }
    for (name, b) in model.bias_names().iter().zip(model.biases()) {
        push_vector(&mut out, name, b);
    }
    push_matrix(&mut out, "phi", &emb.phi);
    push_matrix(&mut out, "phi0", &emb.phi0);
    out
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model, emb: &EmbeddingTable) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_to_string(model, emb))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

struct Reader<'a> {
    lines: std::str::Lines<'a>,
}

impl<'a> Reader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.lines
            .next()
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))
    }

    fn header(&mut self, expect_kind: &str, expect_name: &str) -> Result<(usize, usize)> {
        let line = self.next()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() < 3 || parts[0] != expect_kind || parts[1] != expect_name {
            return Err(Error::Checkpoint(format!(
                "expected `{expect_kind} {expect_name} ...`, got {line:?}"
            )));
        }
        let a = parts[2]
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad size in {line:?}")))?;
        let b = if expect_kind == "matrix" {
            parts
                .get(3)
                .ok_or_else(|| Error::Checkpoint(format!("missing cols in {line:?}")))?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad size in {line:?}")))?
        } else {
            1
        };
        Ok((a, b))
    }

    fn reals(&mut self, n: usize) -> Result<Vector> {
        let line = self.next()?;
        let vals: Vector = line
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Checkpoint(format!("bad real {s:?}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(Error::Checkpoint(format!(
                "expected {n} reals per line, got {}",
                vals.len()
            )));
        }
        Ok(vals)
    }

    fn matrix(&mut self, name: &str) -> Result<Matrix> {
        let (rows, cols) = self.header("matrix", name)?;
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let row = self.reals(cols)?;
            m.row_mut(i).copy_from_slice(&row);
        }
        Ok(m)
    }

    fn vector(&mut self, name: &str) -> Result<Vector> {
        let (len, _) = self.header("vector", name)?;
        self.reals(len)
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, EmbeddingTable)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = Reader { lines: text.lines() };

    let magic = r.next()?;
    if magic != format!("{MAGIC} {VERSION}") {
        return Err(Error::Checkpoint(format!("bad magic line {magic:?}")));
    }
    let model_line = r.next()?;
    let kind = model_line
        .strip_prefix("model ")
        .ok_or_else(|| Error::Checkpoint(format!("expected model line, got {model_line:?}")))?;
    let dims_line = r.next()?;
    let dims_vals: Vec<usize> = dims_line
        .strip_prefix("dims ")
        .ok_or_else(|| Error::Checkpoint(format!("expected dims line, got {dims_line:?}")))?
        .split_whitespace()
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Checkpoint(format!("bad dims {dims_line:?}")))
        })
        .collect::<Result<_>>()?;
    if dims_vals.len() != 4 {
        return Err(Error::Checkpoint("dims line must have 4 entries".into()));
    }
    let dims = ModelDims {
        embed: dims_vals[0],
        window: dims_vals[1],
        hidden: dims_vals[2],
        classes: dims_vals[3],
    };

    let model = match kind {
        "cnn" => Model::Cnn(WindowCnnParams {
            w_conv: r.matrix("w_conv")?,
            w_hid: r.matrix("w_hid")?,
            w_out: r.matrix("w_out")?,
            b_conv: Vec::new(),
            b_hid: Vec::new(),
            b_out: Vec::new(),
            dims,
        }),
        "rnn" => Model::Rnn(TreeRnnParams {
            w_comp: r.matrix("w_comp")?,
            w_out: r.matrix("w_out")?,
            b_comp: Vec::new(),
            b_out: Vec::new(),
            dims,
        }),
        _ => return Err(Error::Checkpoint(format!("unknown model kind {kind:?}"))),
    };
    let mut model = model;
    match &mut model {
        Model::Cnn(p) => {
            p.b_conv = r.vector("b_conv")?;
            p.b_hid = r.vector("b_hid")?;
            p.b_out = r.vector("b_out")?;
        }
        Model::Rnn(p) => {
            p.b_comp = r.vector("b_comp")?;
            p.b_out = r.vector("b_out")?;
        }
    }
    let phi = r.matrix("phi")?;
    let phi0 = r.matrix("phi0")?;
    if phi.rows != phi0.rows || phi.cols != phi0.cols {
        return Err(Error::Checkpoint("phi/phi0 shape mismatch".into()));
    }
    Ok((model, EmbeddingTable { phi, phi0 }))
}
