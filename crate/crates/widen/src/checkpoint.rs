//! Binary checkpoint format.
//!
//! Layout: magic `WIDN`, version u32, model dimensions, the deep-values
//! switch, the node/edge/label tables (needed to reuse a trained model on
//! compatible graphs inductively), then every named tensor as
//! `name_len u16 | name | rows u32 | cols u32 | row-major f64 LE`.
//! All integers little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, TypeTable};
use crate::model::{DeepValues, ModelDims, ModelParams, ParamKey};
use crate::numeric::Matrix;

const MAGIC: &[u8; 4] = b"WIDN";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub node_types: TypeTable,
    pub edge_types: TypeTable,
    pub labels: TypeTable,
    pub deep_values: DeepValues,
}

fn push_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_str(buf: &mut Vec<u8>, s: &str) {
    push_u16(buf, s.len() as u16);
    buf.extend_from_slice(s.as_bytes());
}

fn push_table(buf: &mut Vec<u8>, table: &TypeTable) {
    push_u32(buf, table.len() as u32);
    for name in table.names() {
        push_str(buf, name);
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checkpoint {
                path: self.path.to_string(),
                msg: format!("truncated at byte {}", self.pos),
            });
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Checkpoint {
            path: self.path.to_string(),
            msg: "non-UTF-8 name".into(),
        })
    }

    fn table(&mut self) -> Result<TypeTable> {
        let count = self.u32()? as usize;
        let mut table = TypeTable::default();
        for _ in 0..count {
            let name = self.string()?;
            table.intern(&name);
        }
        Ok(table)
    }
}

pub fn save(
    path: &Path,
    params: &ModelParams,
    g: &HeteroGraph,
    deep_values: DeepValues,
) -> Result<()> {
    let dims = params.dims();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    push_u32(&mut buf, VERSION);
    push_u32(&mut buf, dims.feature_dim as u32);
    push_u32(&mut buf, dims.embed_dim as u32);
    push_u32(&mut buf, dims.num_edge_types as u32);
    push_u32(&mut buf, dims.num_classes as u32);
    buf.push(match deep_values {
        DeepValues::Packs => 0,
        DeepValues::Refined => 1,
    });
    push_table(&mut buf, g.node_types());
    push_table(&mut buf, g.edge_types());
    push_table(&mut buf, g.labels());
    push_u32(&mut buf, ParamKey::ALL.len() as u32);
    for (key, tensor) in params.tensors() {
        push_str(&mut buf, key.name());
        push_u32(&mut buf, tensor.rows() as u32);
        push_u32(&mut buf, tensor.cols() as u32);
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, &buf).map_err(|e| Error::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let data = fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let path_str = path.display().to_string();
    let mut cur = Cursor {
        data: &data,
        pos: 0,
        path: &path_str,
    };
    if cur.take(4)? != MAGIC {
        return Err(Error::Checkpoint {
            path: path_str.clone(),
            msg: "bad magic bytes (not a WIDN checkpoint)".into(),
        });
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint {
            path: path_str.clone(),
            msg: format!("unsupported version {version}"),
        });
    }
    let dims = ModelDims {
        feature_dim: cur.u32()? as usize,
        embed_dim: cur.u32()? as usize,
        num_edge_types: cur.u32()? as usize,
        num_classes: cur.u32()? as usize,
    };
    let deep_values = match cur.take(1)?[0] {
        0 => DeepValues::Packs,
        1 => DeepValues::Refined,
        other => {
            return Err(Error::Checkpoint {
                path: path_str.clone(),
                msg: format!("unknown deep_values tag {other}"),
            })
        }
    };
    let node_types = cur.table()?;
    let edge_types = cur.table()?;
    let labels = cur.table()?;

    let count = cur.u32()? as usize;
    if count != ParamKey::ALL.len() {
        return Err(Error::Checkpoint {
            path: path_str.clone(),
            msg: format!("expected {} tensors, found {count}", ParamKey::ALL.len()),
        });
    }
    let mut tensors: Vec<Option<Matrix>> = vec![None; ParamKey::ALL.len()];
    for _ in 0..count {
        let name = cur.string()?;
        let key = ParamKey::from_name(&name).ok_or_else(|| Error::Checkpoint {
            path: path_str.clone(),
            msg: format!("unknown tensor '{name}'"),
        })?;
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let raw = cur.take(rows * cols * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors[key.index()] = Some(Matrix::from_vec(rows, cols, data)?);
    }
    let tensors: Vec<Matrix> = tensors
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            t.ok_or_else(|| Error::Checkpoint {
                path: path_str.clone(),
                msg: format!("missing tensor '{}'", ParamKey::ALL[i].name()),
            })
        })
        .collect::<Result<_>>()?;
    let params = ModelParams::from_tensors(dims, tensors)?;
    Ok(Checkpoint {
        params,
        node_types,
        edge_types,
        labels,
        deep_values,
    })
}

fn table_mismatch(what: &str, ours: &TypeTable, theirs: &TypeTable) -> Result<()> {
    if ours != theirs {
        let missing = ours
            .names()
            .iter()
            .find(|n| theirs.id(n).is_none())
            .cloned()
            .unwrap_or_else(|| "<table order differs>".to_string());
        return Err(Error::contract(format!(
            "{what} table mismatch between graph and checkpoint (first difference: '{missing}')"
        )));
    }
    Ok(())
}

/// A checkpoint may only embed graphs whose node/edge type tables and
/// feature width match the ones it was trained with.
pub fn check_compatible(cp: &Checkpoint, g: &HeteroGraph) -> Result<()> {
    if g.feature_dim() != cp.params.dims().feature_dim {
        return Err(Error::contract(format!(
            "graph feature dim {} does not match checkpoint {}",
            g.feature_dim(),
            cp.params.dims().feature_dim
        )));
    }
    table_mismatch("node type", g.node_types(), &cp.node_types)?;
    table_mismatch("edge type", g.edge_types(), &cp.edge_types)
}

/// Scoring additionally needs the class id <-> name mapping to agree.
pub fn check_labels_compatible(cp: &Checkpoint, g: &HeteroGraph) -> Result<()> {
    table_mismatch("label", g.labels(), &cp.labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    fn graph() -> HeteroGraph {
        let mut b = GraphBuilder::new();
        b.add_node("x", "A", Some("c0"), vec![1.0, 0.0]);
        b.add_node("y", "B", Some("c1"), vec![0.0, 1.0]);
        b.add_edge("x", "y", "r");
        b.build().unwrap()
    }

    #[test]
    fn save_load_roundtrip_is_exact() {
        let g = graph();
        let dims = ModelDims::for_graph(&g, 3);
        let params = ModelParams::init(dims, 42);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.widn");
        save(&path, &params, &g, DeepValues::Refined).unwrap();
        let cp = load(&path).unwrap();
        assert_eq!(cp.params, params);
        assert_eq!(cp.deep_values, DeepValues::Refined);
        assert_eq!(&cp.edge_types, g.edge_types());
        check_compatible(&cp, &g).unwrap();
    }

    #[test]
    fn corrupt_magic_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.widn");
        fs::write(&path, b"NOPE....").unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("broken.widn"), "{err}");
        assert!(err.contains("magic"), "{err}");
    }

    #[test]
    fn incompatible_graph_is_rejected() {
        let g = graph();
        let dims = ModelDims::for_graph(&g, 3);
        let params = ModelParams::init(dims, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.widn");
        save(&path, &params, &g, DeepValues::Packs).unwrap();
        let cp = load(&path).unwrap();

        let mut b = GraphBuilder::new();
        b.add_node("x", "A", Some("c0"), vec![1.0, 0.0]);
        b.add_node("y", "C", Some("c1"), vec![0.0, 1.0]);
        b.add_edge("x", "y", "r");
        let other = b.build().unwrap();
        let err = check_compatible(&cp, &other).unwrap_err().to_string();
        assert!(err.contains("node type"), "{err}");
        assert!(err.contains('C'), "{err}");
    }
}
