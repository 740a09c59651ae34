//! Instance files: TOML listing each node's matrices row-major with their
//! dimensions. Writing, reading and writing again gives identical text.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::l1_saddle::make_l1_saddle_weighted;
use super::matrix_game::make_matrix_game;
use super::Instance;
use crate::error::{check_dim, Error, Result};
use crate::geometry::Point;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_matrix(a: &DMatrix<f64>) -> Self {
        Self {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.transpose().iter().copied().collect(),
        }
    }

    pub fn from_vector(v: &Point) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.iter().copied().collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        check_dim(self.rows * self.cols, self.data.len())?;
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }

    pub fn to_vector(&self) -> Result<Point> {
        check_dim(1, self.cols)?;
        check_dim(self.rows, self.data.len())?;
        Ok(Point::from_row_slice(&self.data))
    }
}

/// One node's data: `a` for matrix games; `b`, `c`, `coupling` for ℓ1 saddles.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<MatrixRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<MatrixRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<MatrixRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<MatrixRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceFamily {
    MatrixGame,
    L1Saddle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub family: InstanceFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_weight: Option<f64>,
    pub nodes: Vec<NodeRecord>,
}

fn field<'a>(node: &'a Option<MatrixRecord>, name: &str, i: usize) -> Result<&'a MatrixRecord> {
    node.as_ref()
        .ok_or_else(|| Error::Parse(format!("nodes[{i}] is missing `{name}`")))
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance) -> Self {
        match inst {
            Instance::MatrixGame(g) => Self {
                family: InstanceFamily::MatrixGame,
                box_radius: None,
                y_weight: None,
                nodes: g
                    .matrices()
                    .iter()
                    .map(|a| NodeRecord {
                        a: Some(MatrixRecord::from_matrix(a)),
                        ..Default::default()
                    })
                    .collect(),
            },
            Instance::L1Saddle(s) => Self {
                family: InstanceFamily::L1Saddle,
                box_radius: Some(s.radius()),
                y_weight: Some(s.locals()[0].y_weight),
                nodes: s
                    .locals()
                    .iter()
                    .map(|l| NodeRecord {
                        b: Some(MatrixRecord::from_matrix(&l.b)),
                        c: Some(MatrixRecord::from_vector(&l.c)),
                        coupling: Some(MatrixRecord::from_matrix(&l.coupling)),
                        ..Default::default()
                    })
                    .collect(),
            },
        }
    }

    pub fn to_instance(&self) -> Result<Instance> {
        match self.family {
            InstanceFamily::MatrixGame => {
                let a_list = self
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(i, n)| field(&n.a, "a", i)?.to_matrix())
                    .collect::<Result<Vec<_>>>()?;
                Ok(Instance::MatrixGame(make_matrix_game(a_list)?))
            }
            InstanceFamily::L1Saddle => {
                let radius = self
                    .box_radius
                    .ok_or_else(|| Error::Parse("l1_saddle instance needs `box_radius`".into()))?;
                let (mut bs, mut cs, mut cps) = (Vec::new(), Vec::new(), Vec::new());
                for (i, n) in self.nodes.iter().enumerate() {
                    bs.push(field(&n.b, "b", i)?.to_matrix()?);
                    cs.push(field(&n.c, "c", i)?.to_vector()?);
                    cps.push(field(&n.coupling, "coupling", i)?.to_matrix()?);
                }
                Ok(Instance::L1Saddle(make_l1_saddle_weighted(
                    bs,
                    cs,
                    cps,
                    radius,
                    self.y_weight.unwrap_or(1.0),
                )?))
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

pub fn write_instance(inst: &Instance, path: &std::path::Path) -> Result<()> {
    let text = InstanceFile::from_instance(inst).to_toml()?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_instance(path: &std::path::Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    InstanceFile::from_toml(&text)?.to_instance()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{l1_saddle::random_l1_saddle, matrix_game::random_matrix_game};

    #[test]
    fn write_read_write_is_identical() {
        for inst in [
            Instance::MatrixGame(random_matrix_game(3, 2, 4, 1).unwrap()),
            Instance::L1Saddle(random_l1_saddle(2, 3, 2, 1.5, 2).unwrap()),
        ] {
            let first = InstanceFile::from_instance(&inst).to_toml().unwrap();
            let back = InstanceFile::from_toml(&first).unwrap().to_instance().unwrap();
            let second = InstanceFile::from_instance(&back).to_toml().unwrap();
            assert_eq!(first, second);
        }
    }

    #[test]
    fn malformed_files_are_parse_errors() {
        let text = "family = \"matrix_game\"\n[[nodes]]\n";
        let f = InstanceFile::from_toml(text).unwrap();
        assert!(matches!(f.to_instance(), Err(Error::Parse(_))));
        let bad = "family = \"matrix_game\"\n[[nodes]]\na = { rows = 2, cols = 2, data = [1.0] }\n";
        assert!(InstanceFile::from_toml(bad).unwrap().to_instance().is_err());
    }
}
