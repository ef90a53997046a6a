//! CNN layer shapes and their GEMM lowering.
//!
//! A convolution with `out_channels` filters of `in_channels x kh x kw`
//! producing an `out_h x out_w` map becomes
//! `A (out_channels x in_channels*kh*kw) * B (in_channels*kh*kw x out_h*out_w)`,
//! with sparse weights as A and the im2col-unrolled activations as B. A
//! fully-connected layer is the 1x1 case; its `out_h * out_w` is the batch.
//!
//! Activations are synthesised at random: engine latency depends only on the
//! shapes and on the weight sparsity structure, not on activation values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DemmError, Result};
use crate::functional::GemmDims;
use crate::matrix::DenseMatrix;
use crate::sparse::{
    prune_to_pattern, random_dense, random_poisson_blocks, random_sparse, PackedSparseMatrix,
    SparsityPattern,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Fc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// Informational; the output map size already reflects it.
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

impl LayerSpec {
    fn check(&self) -> std::result::Result<(), String> {
        let fields = [
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("kernel_h", self.kernel_h),
            ("kernel_w", self.kernel_w),
            ("out_h", self.out_h),
            ("out_w", self.out_w),
            ("stride", self.stride),
        ];
        if let Some((f, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(format!("field `{f}` must be positive"));
        }
        if self.kind == LayerKind::Fc && (self.kernel_h, self.kernel_w) != (1, 1) {
            return Err("fc layers must have a 1x1 kernel".into());
        }
        Ok(())
    }

    /// For FC layers, sets the batch (the GEMM's column count).
    pub fn with_fc_batch(mut self, batch: usize) -> Self {
        if self.kind == LayerKind::Fc {
            self.out_h = batch;
            self.out_w = 1;
        }
        self
    }
}

pub fn lower_layer(spec: &LayerSpec) -> GemmDims {
    GemmDims {
        r: spec.out_channels,
        kdim: spec.in_channels * spec.kernel_h * spec.kernel_w,
        cdim: spec.out_h * spec.out_w,
    }
}

/// On-disk layer list.
///
/// ```json
/// { "model": "resnet50", "source": "...", "layers": [ { "name": "conv1",
///   "kind": "conv", "in_channels": 3, "out_channels": 64, "kernel_h": 7,
///   "kernel_w": 7, "out_h": 112, "out_w": 112, "stride": 2 }, ... ] }
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub layers: Vec<LayerSpec>,
}

impl LayerFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let file: LayerFile = serde_json::from_str(text).map_err(|e| DemmError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: format!("column {}: {e}", e.column()),
        })?;
        if file.layers.is_empty() {
            return Err(DemmError::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "`layers` is empty".into(),
            });
        }
        for (i, layer) in file.layers.iter().enumerate() {
            if let Err(msg) = layer.check() {
                let needle = format!("\"{}\"", layer.name);
                let line = text
                    .lines()
                    .position(|l| l.contains(&needle))
                    .map_or(1, |p| p + 1);
                return Err(DemmError::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("layers[{i}] `{}`: {msg}", layer.name),
                });
            }
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layer files always serialise")
    }
}

pub fn load_layer_file(path: &Path) -> Result<Vec<LayerSpec>> {
    let text = std::fs::read_to_string(path).map_err(|source| DemmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(LayerFile::parse(&text, path)?.layers)
}

/// How sparse weights are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMode {
    /// Exactly `n` non-zeros per aligned block (worst case for the pattern).
    Pattern(SparsityPattern),
    /// Poisson non-zero counts per `block` columns with the given mean; rows
    /// may exceed the nominal pattern, as unstructured pruning would.
    Overflow { block: usize, mean: f64 },
}

impl WeightMode {
    pub fn pattern(&self) -> Option<SparsityPattern> {
        match *self {
            WeightMode::Pattern(p) => Some(p),
            WeightMode::Overflow { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GemmProblem {
    pub name: String,
    pub dims: GemmDims,
    /// Sparse weights, `r x kdim`.
    pub a: PackedSparseMatrix,
    /// Dense im2col activations, `kdim x cdim`.
    pub b: DenseMatrix<i16>,
}

pub fn synthesize_weights(dims: GemmDims, mode: WeightMode, seed: u64) -> Result<PackedSparseMatrix> {
    match mode {
        WeightMode::Pattern(p) => random_sparse(dims.r, dims.kdim, p, seed),
        WeightMode::Overflow { block, mean } => {
            random_poisson_blocks(dims.r, dims.kdim, block, mean, seed)
        }
    }
}

pub fn synthesize_activations(dims: GemmDims, seed: u64) -> DenseMatrix<i16> {
    random_dense(dims.kdim, dims.cdim, seed ^ 0xA5A5_5A5A_0F0F_F0F0)
}

/// Pattern-conforming weights and random activations for `spec`,
/// deterministic per seed.
pub fn synthesize_problem(spec: &LayerSpec, pattern: SparsityPattern, seed: u64) -> Result<GemmProblem> {
    synthesize_problem_with(spec, WeightMode::Pattern(pattern), seed)
}

pub fn synthesize_problem_with(spec: &LayerSpec, mode: WeightMode, seed: u64) -> Result<GemmProblem> {
    let dims = lower_layer(spec);
    Ok(GemmProblem {
        name: spec.name.clone(),
        dims,
        a: synthesize_weights(dims, mode, seed)?,
        b: synthesize_activations(dims, seed),
    })
}

/// Builds a problem from supplied dense weights, magnitude-pruned to `pattern`.
pub fn problem_from_dense_weights(
    name: &str,
    weights: &DenseMatrix<i16>,
    pattern: SparsityPattern,
    activations: DenseMatrix<i16>,
) -> Result<GemmProblem> {
    if weights.cols() != activations.rows() {
        return Err(DemmError::DimensionMismatch(format!(
            "weights are {}x{} but activations are {}x{}",
            weights.rows(),
            weights.cols(),
            activations.rows(),
            activations.cols()
        )));
    }
    let dims = GemmDims::new(weights.rows(), weights.cols(), activations.cols())?;
    Ok(GemmProblem {
        name: name.to_string(),
        dims,
        a: prune_to_pattern(weights, pattern),
        b: activations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::validate_pattern;

    fn conv(cin: usize, cout: usize, k: usize, hw: usize) -> LayerSpec {
        LayerSpec {
            name: "l".into(),
            kind: LayerKind::Conv,
            in_channels: cin,
            out_channels: cout,
            kernel_h: k,
            kernel_w: k,
            out_h: hw,
            out_w: hw,
            stride: 1,
        }
    }

    fn pat(n: usize, m: usize) -> SparsityPattern {
        SparsityPattern::new(n, m).unwrap()
    }

    #[test]
    fn lowering() {
        assert_eq!(lower_layer(&conv(64, 64, 1, 56)), GemmDims { r: 64, kdim: 64, cdim: 3136 });
        assert_eq!(lower_layer(&conv(64, 64, 3, 56)), GemmDims { r: 64, kdim: 576, cdim: 3136 });
        let fc = LayerSpec {
            kind: LayerKind::Fc,
            ..conv(2048, 1000, 1, 1)
        };
        assert_eq!(lower_layer(&fc), GemmDims { r: 1000, kdim: 2048, cdim: 1 });
        assert_eq!(lower_layer(&fc.with_fc_batch(4)).cdim, 4);
        assert_eq!(lower_layer(&conv(3, 8, 3, 5).with_fc_batch(4)).cdim, 25);
    }

    #[test]
    fn synthesized_problems() {
        let l = conv(16, 24, 3, 5);
        let p = synthesize_problem(&l, pat(8, 128), 3).unwrap();
        let d = lower_layer(&l);
        assert!(validate_pattern(&p.a, pat(8, 128)));
        assert_eq!(p.a.rows() * p.a.cols(), d.r * d.kdim);
        assert_eq!(p.b.rows() * p.b.cols(), d.kdim * d.cdim);
        assert_eq!(p, synthesize_problem(&l, pat(8, 128), 3).unwrap());
        let dense = synthesize_problem(&l, pat(1, 2), 3).unwrap();
        assert!(validate_pattern(&dense.a, pat(1, 2)));
        assert_eq!(dense.a.nnz(), d.r * d.kdim / 2);
    }

    #[test]
    fn overflow_mode_exceeds_pattern_sometimes() {
        let l = conv(128, 64, 3, 2);
        let p = synthesize_problem_with(&l, WeightMode::Overflow { block: 128, mean: 8.0 }, 1).unwrap();
        assert!(!validate_pattern(&p.a, pat(8, 128)));
    }

    #[test]
    fn pruned_weights() {
        let w = random_dense(6, 32, 1);
        let p = problem_from_dense_weights("w", &w, pat(2, 8), random_dense(32, 3, 2)).unwrap();
        assert!(validate_pattern(&p.a, pat(2, 8)));
        assert!(problem_from_dense_weights("w", &w, pat(2, 8), random_dense(31, 3, 2)).is_err());
    }

    #[test]
    fn layer_file_diagnostics() {
        let path = Path::new("layers.json");
        let bad_json = "{\n  \"model\": \"x\",\n  \"layers\": [ { \"name\": 3 } ]\n}";
        let e = LayerFile::parse(bad_json, path).unwrap_err().to_string();
        assert!(e.starts_with("layers.json:3:"), "{e}");
        let zero = r#"{"model":"x","layers":[
{"name":"a","kind":"conv","in_channels":1,"out_channels":1,"kernel_h":1,"kernel_w":1,"out_h":1,"out_w":1},
{"name":"b","kind":"conv","in_channels":1,"out_channels":0,"kernel_h":1,"kernel_w":1,"out_h":1,"out_w":1}]}"#;
        let e = LayerFile::parse(zero, path).unwrap_err().to_string();
        assert!(e.contains("layers.json:3") && e.contains("out_channels"), "{e}");
        let unknown = r#"{"model":"x","layers":[{"name":"a","kind":"conv","in_channels":1,"out_channels":1,"kernel_h":1,"kernel_w":1,"out_h":1,"out_w":1,"groups":2}]}"#;
        assert!(LayerFile::parse(unknown, path).is_err());
        assert!(LayerFile::parse(r#"{"model":"x","layers":[]}"#, path).is_err());
        assert!(matches!(
            load_layer_file(Path::new("/nonexistent/layers.json")),
            Err(DemmError::Io { .. })
        ));
    }

    #[test]
    fn shipped_files_load_and_roundtrip() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
        for (name, count) in [("resnet50.json", 54), ("convnext.json", 41), ("fixture_3layer.json", 3)] {
            let path = dir.join(name);
            let text = std::fs::read_to_string(&path).unwrap();
            let file = LayerFile::parse(&text, &path).unwrap();
            assert_eq!(file.layers.len(), count, "{name}");
            let again = LayerFile::parse(&file.to_json(), &path).unwrap();
            assert_eq!(again, file);
        }
        let resnet = load_layer_file(&dir.join("resnet50.json")).unwrap();
        assert_eq!(lower_layer(&resnet[0]), GemmDims { r: 64, kdim: 147, cdim: 12544 });
        let macs: u64 = resnet.iter().map(|l| lower_layer(l).dense_macs()).sum();
        // ResNet-50 at 224x224 is about 4.1 GMACs.
        assert!((4.0e9..4.2e9).contains(&(macs as f64)), "{macs}");
    }
}
