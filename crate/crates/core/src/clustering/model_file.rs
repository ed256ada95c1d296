//! `CLMD` model files.
//!
//! Layout: magic, version u16, k u32, M u32, P_match u16, P_centroid u16;
//! centroids (f64 LE, row-major); cells (f64 LE, row-major, k * M * P_match);
//! pad mask bitset (row-major, LSB first); then an extension block with the
//! record id of each cell (u32 LE, `u32::MAX` for dummies) and a
//! length-prefixed JSON metadata object (empty when absent).

use std::io::{Read, Write};

use super::{ClusterError, ClusterModel, ModelMetadata};
use crate::bytes::{put_f64, put_u16, put_u32, Reader};

pub const MODEL_MAGIC: &[u8; 4] = b"CLMD";
const VERSION: u16 = 1;
const DUMMY_ID: u32 = u32::MAX;

pub fn model_to_bytes(model: &ClusterModel) -> Vec<u8> {
    let k = model.k();
    let m = model.max_cluster_size;
    let pm = model.match_dim();
    let pc = model.centroid_dim();
    let mut out = Vec::with_capacity(20 + 8 * (k * pc + k * m * pm) + k * m / 8 + 4 * k * m);
    out.extend_from_slice(MODEL_MAGIC);
    put_u16(&mut out, VERSION);
    put_u32(&mut out, k as u32);
    put_u32(&mut out, m as u32);
    put_u16(&mut out, pm as u16);
    put_u16(&mut out, pc as u16);
    for c in &model.centroids {
        c.iter().for_each(|&x| put_f64(&mut out, x));
    }
    for row in &model.cells {
        for cell in row {
            cell.iter().for_each(|&x| put_f64(&mut out, x));
        }
    }
    let mut bits = vec![0u8; (k * m).div_ceil(8)];
    for (i, &d) in model.pad_mask.iter().flatten().enumerate() {
        if d {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&bits);
    for id in model.record_ids.iter().flatten() {
        put_u32(&mut out, id.unwrap_or(DUMMY_ID));
    }
    let meta = match &model.metadata {
        Some(m) => serde_json::to_vec(m).expect("metadata serializes"),
        None => Vec::new(),
    };
    put_u32(&mut out, meta.len() as u32);
    out.extend_from_slice(&meta);
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ClusterModel, ClusterError> {
    let fmt = |m: &str| ClusterError::Format(m.to_string());
    let short = |_| fmt("truncated");
    let mut r = Reader::new(bytes);
    if r.take(4).map_err(short)? != MODEL_MAGIC {
        return Err(fmt("bad magic"));
    }
    if r.u16().map_err(short)? != VERSION {
        return Err(fmt("unsupported version"));
    }
    let k = r.u32().map_err(short)? as usize;
    let m = r.u32().map_err(short)? as usize;
    let pm = r.u16().map_err(short)? as usize;
    let pc = r.u16().map_err(short)? as usize;
    let need = 8 * (k * pc + k * m * pm) + (k * m).div_ceil(8) + 4 * k * m;
    if r.remaining() < need {
        return Err(fmt("truncated body"));
    }
    let mut read_vec = |len: usize| -> Vec<f64> { (0..len).map(|_| r.f64().expect("length checked")).collect() };
    let centroids: Vec<Vec<f64>> = (0..k).map(|_| read_vec(pc)).collect();
    let cells: Vec<Vec<Vec<f64>>> = (0..k).map(|_| (0..m).map(|_| read_vec(pm)).collect()).collect();
    let bits = r.take((k * m).div_ceil(8)).map_err(short)?.to_vec();
    let pad_mask: Vec<Vec<bool>> = (0..k)
        .map(|row| {
            (0..m)
                .map(|c| {
                    let i = row * m + c;
                    bits[i / 8] & (1 << (i % 8)) != 0
                })
                .collect()
        })
        .collect();
    let record_ids: Vec<Vec<Option<u32>>> = (0..k)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let id = r.u32().expect("length checked");
                    (id != DUMMY_ID).then_some(id)
                })
                .collect()
        })
        .collect();
    let meta_len = r.u32().map_err(short)? as usize;
    let metadata = if meta_len == 0 {
        None
    } else {
        let raw = r.take(meta_len).map_err(short)?;
        Some(
            serde_json::from_slice::<ModelMetadata>(raw)
                .map_err(|e| ClusterError::Format(format!("metadata: {e}")))?,
        )
    };
    if r.remaining() != 0 {
        return Err(fmt("trailing bytes"));
    }

    let n = record_ids.iter().flatten().filter(|x| x.is_some()).count();
    let mut assignment = vec![None; n];
    for (row, ids) in record_ids.iter().enumerate() {
        for (col, id) in ids.iter().enumerate() {
            if pad_mask[row][col] != id.is_none() {
                return Err(fmt("record ids disagree with pad mask"));
            }
            if let Some(id) = id {
                let slot = assignment
                    .get_mut(*id as usize)
                    .ok_or_else(|| fmt("record id out of range"))?;
                if slot.replace((row, col)).is_some() {
                    return Err(fmt("duplicate record id"));
                }
            }
        }
    }
    Ok(ClusterModel {
        centroids,
        cells,
        pad_mask,
        record_ids,
        assignment: assignment.into_iter().map(|a| a.expect("ids are a permutation")).collect(),
        max_cluster_size: m,
        objective_history: Vec::new(),
        metadata,
    })
}

pub fn write_model<W: Write>(w: &mut W, model: &ClusterModel) -> Result<(), ClusterError> {
    w.write_all(&model_to_bytes(model))
        .map_err(|e| ClusterError::Io(e.to_string()))
}

pub fn read_model<R: Read>(r: &mut R) -> Result<ClusterModel, ClusterError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| ClusterError::Io(e.to_string()))?;
    model_from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{build_model, ClusterConfig};
    use crate::encoding::{DualEncoder, EncodingParams};

    #[test]
    fn roundtrip_preserves_model() {
        let names = ["ann lee", "anne lee", "bob ray", "rob ray", "cy twombly", "sy twombly", "dee dee"];
        let params = EncodingParams::default();
        let enc = DualEncoder::new(&params, 200, 50).unwrap();
        let sk: Vec<_> = names.iter().map(|n| enc.encode(n).unwrap()).collect();
        let model = build_model(&sk, &params, &ClusterConfig { k: 3, iterations: 20, seed: 1 }).unwrap();
        let bytes = model_to_bytes(&model);
        assert_eq!(&bytes[..4], b"CLMD");
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back.cells, model.cells);
        assert_eq!(back.centroids, model.centroids);
        assert_eq!(back.pad_mask, model.pad_mask);
        assert_eq!(back.record_ids, model.record_ids);
        assert_eq!(back.assignment, model.assignment);
        assert_eq!(back.metadata, model.metadata);
        assert!(model_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
