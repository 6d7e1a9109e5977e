//! Plain-text model files: `key = value` lines followed by matrix blocks.
//! Every double is written as a hexadecimal float so that reading a model
//! back reproduces it bit for bit.
//!
//! ```text
//! mvproc-model = 1
//! family = tp
//! kernel = seard
//! inputs = x
//! outputs = y1, y2
//! kernel_params = 0x1p-1 ...
//! rowcov_params = ...
//! lognu_minus2 = 0x1.8p+0
//! nlml = ...
//! converged = true
//! X = 23 1
//! <23 rows>
//! Y = 23 2
//! <23 rows>
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hexfloat;
use crate::kernels::{KernelFamily, KernelSpec};
use crate::model::{Family, TrainedModel};
use crate::params::{HyperParams, RowCovParams};

const MAGIC: &str = "mvproc-model";
const VERSION: &str = "1";

fn join(v: &[f64]) -> String {
    v.iter().map(|x| hexfloat::format(*x)).collect::<Vec<_>>().join(" ")
}

fn write_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    out.push_str(&format!("{name} = {} {}\n", m.nrows(), m.ncols()));
    for row in m.row_iter() {
        let v: Vec<f64> = row.iter().copied().collect();
        out.push_str(&join(&v));
        out.push('\n');
    }
}

/// A model together with the column names it was trained on.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub model: TrainedModel,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
}

impl ModelFile {
    /// Wraps a model with generated names `x1.., y1..`.
    pub fn unnamed(model: TrainedModel) -> Self {
        let input_names = (1..=model.inputs().ncols()).map(|i| format!("x{i}")).collect();
        let output_names = (1..=model.outputs().ncols()).map(|i| format!("y{i}")).collect();
        Self {
            model,
            input_names,
            output_names,
        }
    }
}

fn check_name(n: &str) -> Result<()> {
    if n.contains(',') || n.contains('\n') || n.trim() != n || n.is_empty() {
        return Err(Error::Format(format!("column name '{n}' cannot be stored in a model file")));
    }
    Ok(())
}

pub fn to_string(file: &ModelFile) -> Result<String> {
    let model = &file.model;
    if file.input_names.len() != model.inputs().ncols() || file.output_names.len() != model.outputs().ncols() {
        return Err(Error::Dimension("column names do not match the model's data".into()));
    }
    for n in file.input_names.iter().chain(&file.output_names) {
        check_name(n)?;
    }
    let p = model.params();
    let mut out = format!("{MAGIC} = {VERSION}\n");
    out.push_str(&format!("family = {}\n", model.family()));
    out.push_str(&format!("kernel = {}\n", p.kernel.family));
    out.push_str(&format!("inputs = {}\n", file.input_names.join(", ")));
    out.push_str(&format!("outputs = {}\n", file.output_names.join(", ")));
    out.push_str(&format!("kernel_params = {}\n", join(&p.kernel.params())));
    out.push_str(&format!("rowcov_params = {}\n", join(&p.rowcov.params())));
    if let Some(v) = p.lognu_minus2 {
        out.push_str(&format!("lognu_minus2 = {}\n", hexfloat::format(v)));
    }
    out.push_str(&format!("nlml = {}\n", hexfloat::format(model.nlml())));
    out.push_str(&format!("converged = {}\n", model.converged()));
    write_matrix(&mut out, "X", model.inputs());
    write_matrix(&mut out, "Y", model.outputs());
    Ok(out)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace().map(hexfloat::parse).collect()
}

fn read_matrix<'a>(
    name: &str,
    header: &str,
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<DMatrix<f64>> {
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("bad shape for matrix {name}: '{header}'")))?;
    let [r, c] = dims[..] else {
        return Err(Error::Format(format!("matrix {name} needs 'rows cols'")));
    };
    let mut m = DMatrix::zeros(r, c);
    for i in 0..r {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| Error::Format(format!("matrix {name}: expected {r} rows, file ended after {i}")))?;
        let row = parse_list(line)?;
        if row.len() != c {
            return Err(Error::Format(format!(
                "line {}: matrix {name} row has {} values, expected {c}",
                lineno + 1,
                row.len()
            )));
        }
        for (j, v) in row.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

pub fn from_str(text: &str) -> Result<ModelFile> {
    let mut keys: HashMap<String, String> = HashMap::new();
    let mut mats: HashMap<String, DMatrix<f64>> = HashMap::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    while let Some((lineno, line)) = lines.next() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected 'key = value'", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k == "X" || k == "Y" {
            let m = read_matrix(k, v, &mut lines)?;
            mats.insert(k.to_string(), m);
        } else if keys.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Format(format!("line {}: duplicate key '{k}'", lineno + 1)));
        }
    }
    let get = |k: &str| {
        keys.get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("model file lacks '{k}'")))
    };
    if get(MAGIC)? != VERSION {
        return Err(Error::Format(format!("unsupported model format version '{}'", get(MAGIC)?)));
    }
    let known = [MAGIC, "family", "kernel", "inputs", "outputs", "kernel_params", "rowcov_params", "lognu_minus2", "nlml", "converged"];
    if let Some(k) = keys.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(Error::Format(format!("unknown key '{k}' in model file")));
    }
    let family: Family = get("family")?.parse()?;
    let kfam: KernelFamily = get("kernel")?.parse()?;
    let x = mats.remove("X").ok_or_else(|| Error::Format("model file lacks matrix X".into()))?;
    let y = mats.remove("Y").ok_or_else(|| Error::Format("model file lacks matrix Y".into()))?;

    let mut kernel = KernelSpec::unit(kfam, x.ncols());
    kernel.set_params(&parse_list(get("kernel_params")?)?)?;
    let mut rowcov = RowCovParams::identity(y.ncols());
    rowcov.set_params(&parse_list(get("rowcov_params")?)?)?;
    let lognu = keys.get("lognu_minus2").map(|s| hexfloat::parse(s)).transpose()?;
    let nlml = hexfloat::parse(get("nlml")?)?;
    let converged = match get("converged")? {
        "true" => true,
        "false" => false,
        other => return Err(Error::Format(format!("converged must be true/false, got '{other}'"))),
    };
    let names = |key: &str, count: usize| -> Result<Vec<String>> {
        let v: Vec<String> = get(key)?.split(',').map(|s| s.trim().to_string()).collect();
        if v.len() != count {
            return Err(Error::Format(format!("'{key}' lists {} names for {count} columns", v.len())));
        }
        Ok(v)
    };
    let input_names = names("inputs", x.ncols())?;
    let output_names = names("outputs", y.ncols())?;
    let model = TrainedModel::new(family, x, y, HyperParams::new(kernel, rowcov, lognu), nlml, converged)?;
    Ok(ModelFile {
        model,
        input_names,
        output_names,
    })
}

pub fn save(file: &ModelFile, path: &Path) -> Result<()> {
    fs::write(path, to_string(file)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelFile> {
    from_str(&fs::read_to_string(path)?)
}
