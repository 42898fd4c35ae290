//! Parameter file: magic `GJW1`, little-endian, `u32` tensor count, then per
//! tensor `u32` rank, `u32` dims, `f32` data.

use std::io::{Read, Write};

use crate::error::{NnError, Result};
use crate::float::Float;
use crate::graph::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"GJW1";

pub fn write_tensors<T: Float, W: Write>(out: &mut W, tensors: &[Tensor<T>]) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        out.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            out.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| NnError::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_tensors<R: Read>(input: &mut R) -> Result<Vec<Tensor<f32>>> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|e| NnError::Checkpoint(format!("missing magic: {e}")))?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let count = read_u32(input)? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let rank = read_u32(input)? as usize;
        if rank == 0 || rank > 8 {
            return Err(NnError::Checkpoint(format!("implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| read_u32(input).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut buf = vec![0u8; n * 4];
        input
            .read_exact(&mut buf)
            .map_err(|e| NnError::Checkpoint(format!("truncated tensor data: {e}")))?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(Tensor::new(shape, data)?);
    }
    Ok(out)
}

/// Overwrites `store` values with `tensors`, checking count and shapes.
pub fn load_into<T: Float>(store: &mut ParamStore<T>, tensors: &[Tensor<f32>]) -> Result<()> {
    if tensors.len() != store.len() {
        return Err(NnError::Checkpoint(format!(
            "checkpoint has {} tensors, model expects {}",
            tensors.len(),
            store.len()
        )));
    }
    for (dst, src) in store.tensors_mut().iter_mut().zip(tensors) {
        if dst.shape() != src.shape() {
            return Err(NnError::Checkpoint(format!(
                "shape {:?} in file, {:?} in model",
                src.shape(),
                dst.shape()
            )));
        }
        for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
            *d = T::from_f64(s as f64);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let t = Tensor::<f32>::new(vec![2], vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_tensors(&mut buf, &[t]).unwrap();
        let mut expect = b"GJW1".to_vec();
        expect.extend(1u32.to_le_bytes());
        expect.extend(1u32.to_le_bytes());
        expect.extend(2u32.to_le_bytes());
        expect.extend(1.0f32.to_le_bytes());
        expect.extend((-2.0f32).to_le_bytes());
        assert_eq!(buf, expect);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_tensors(&mut &b"GJW2\0\0\0\0"[..]).is_err());
        let t = Tensor::<f32>::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_tensors(&mut buf, &[t]).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(read_tensors(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn load_checks_shapes() {
        let mut store = ParamStore::<f64>::new();
        store.add("a", Tensor::zeros(vec![2, 2]));
        let wrong = Tensor::<f32>::zeros(vec![4]);
        assert!(load_into(&mut store, &[wrong]).is_err());
        let right = Tensor::<f32>::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        load_into(&mut store, &[right]).unwrap();
        assert_eq!(store.tensors()[0].data(), &[1.0, 2.0, 3.0, 4.0]);
    }
}
