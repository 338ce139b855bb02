//! On-disk model format: pretty JSON with explicit matrix shapes.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{NormalizationStats, Task};
use crate::error::{Error, Result};
use crate::eval::Predict;
use crate::forest::ForestModel;
use crate::tree::{ObliqueTree, TreeParams};

pub const FORMAT_VERSION: u32 = 1;

/// Row-major matrix with its shape spelled out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_array(a: &Array2<f64>) -> Self {
        Self {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().copied().collect(),
        }
    }

    pub fn to_array(&self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone()).map_err(|_| {
            Error::ModelFile(format!(
                "matrix declares {}x{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            ))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub height: usize,
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub leaves: Matrix,
}

impl TreeRecord {
    pub fn from_tree(tree: &ObliqueTree) -> Self {
        Self {
            height: tree.height(),
            weights: Matrix::from_array(tree.weights()),
            biases: tree.biases().to_vec(),
            leaves: Matrix::from_array(tree.leaves()),
        }
    }

    pub fn to_tree(&self) -> Result<ObliqueTree> {
        ObliqueTree::from_parts(
            self.height,
            self.weights.to_array()?,
            Array1::from(self.biases.clone()),
            self.leaves.to_array()?,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Collapsed {
        tree: TreeRecord,
    },
    Layered {
        height: usize,
        layers: Vec<Matrix>,
        leaves: Matrix,
    },
    Forest {
        fraction: f64,
        member_seeds: Vec<u64>,
        members: Vec<TreeRecord>,
    },
}

/// In-memory model restored from a [`ModelFile`].
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Tree(ObliqueTree),
    Layered(TreeParams),
    Forest(ForestModel),
}

impl Model {
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Tree(t) => t.input_dim(),
            Model::Layered(p) => p.input_dim(),
            Model::Forest(f) => f.input_dim(),
        }
    }

    pub fn num_outputs(&self) -> usize {
        match self {
            Model::Tree(t) => t.num_outputs(),
            Model::Layered(p) => p.num_outputs(),
            Model::Forest(f) => f.task().num_outputs(),
        }
    }

    /// Single-tree view: the collapsed tree, or `None` for a forest.
    pub fn as_tree(&self) -> Option<ObliqueTree> {
        match self {
            Model::Tree(t) => Some(t.clone()),
            Model::Layered(p) => Some(p.collapse()),
            Model::Forest(_) => None,
        }
    }
}

impl Predict for Model {
    fn predict_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        match self {
            Model::Tree(t) => t.predict_row(x),
            Model::Layered(p) => p.predict_row(x),
            Model::Forest(f) => f.predict_row(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub task: Task,
    pub payload: Payload,
    pub normalization: Option<NormalizationStats>,
    /// Free-form snapshot of the settings that produced the model.
    pub config: serde_json::Value,
    pub seed: u64,
}

impl ModelFile {
    pub fn new(
        model: &Model,
        task: Task,
        normalization: Option<NormalizationStats>,
        config: serde_json::Value,
        seed: u64,
    ) -> Result<Self> {
        if model.num_outputs() != task.num_outputs() {
            return Err(Error::shape("model output width does not match the task"));
        }
        let payload = match model {
            Model::Tree(t) => Payload::Collapsed {
                tree: TreeRecord::from_tree(t),
            },
            Model::Layered(p) => Payload::Layered {
                height: p.height(),
                layers: p.layers().iter().map(Matrix::from_array).collect(),
                leaves: Matrix::from_array(p.leaves()),
            },
            Model::Forest(f) => Payload::Forest {
                fraction: f.fraction(),
                member_seeds: f.member_seeds().to_vec(),
                members: f.members().iter().map(TreeRecord::from_tree).collect(),
            },
        };
        Ok(Self {
            format_version: FORMAT_VERSION,
            task,
            payload,
            normalization,
            config,
            seed,
        })
    }

    pub fn model(&self) -> Result<Model> {
        match &self.payload {
            Payload::Collapsed { tree } => Ok(Model::Tree(tree.to_tree()?)),
            Payload::Layered {
                height,
                layers,
                leaves,
            } => {
                let layers = layers.iter().map(Matrix::to_array).collect::<Result<Vec<_>>>()?;
                Ok(Model::Layered(TreeParams::new(*height, layers, leaves.to_array()?)?))
            }
            Payload::Forest {
                fraction,
                member_seeds,
                members,
            } => {
                let members = members.iter().map(TreeRecord::to_tree).collect::<Result<Vec<_>>>()?;
                Ok(Model::Forest(ForestModel::new(
                    self.task,
                    members,
                    member_seeds.clone(),
                    *fraction,
                )?))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::ModelFile(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                header.format_version
            )));
        }
        let file: ModelFile = serde_json::from_str(text)?;
        file.model()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
