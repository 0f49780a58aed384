//! On-disk tensor format used by checkpoints: a u32 rank, the shape as u64
//! extents, then the elements as 64-bit little-endian floats.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

pub fn write_tensor_data<E: Scalar, W: Write>(w: &mut W, tensor: &Tensor<E>) -> Result<()> {
    let shape = tensor.shape();
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &dim in shape {
        w.write_all(&(dim as u64).to_le_bytes())?;
    }
    for &v in tensor.data().iter() {
        w.write_all(&v.to_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor_data<R: Read>(r: &mut R) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut rank_buf = [0u8; 4];
    r.read_exact(&mut rank_buf)?;
    let rank = u32::from_le_bytes(rank_buf) as usize;
    if rank > 16 {
        return Err(Error::CheckpointFormat(format!(
            "implausible tensor rank {rank}"
        )));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut dim_buf = [0u8; 8];
        r.read_exact(&mut dim_buf)?;
        shape.push(u64::from_le_bytes(dim_buf) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    let mut val_buf = [0u8; 8];
    for _ in 0..numel {
        r.read_exact(&mut val_buf)?;
        data.push(f64::from_le_bytes(val_buf));
    }
    Ok((shape, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let t = Tensor::<f64>::constant(&[2, 3], vec![1.5, -2.25, 0.0, 1e-300, 3.7, -0.5])
            .unwrap();
        let mut buf = Vec::new();
        write_tensor_data(&mut buf, &t).unwrap();
        let (shape, data) = read_tensor_data(&mut buf.as_slice()).unwrap();
        assert_eq!(shape, vec![2, 3]);
        assert_eq!(data, t.to_vec());
    }

    #[test]
    fn f32_round_trips_through_f64() {
        let t = Tensor::<f32>::constant(&[3], vec![0.1f32, -7.25, 3.4e-20]).unwrap();
        let mut buf = Vec::new();
        write_tensor_data(&mut buf, &t).unwrap();
        let (_, data) = read_tensor_data(&mut buf.as_slice()).unwrap();
        let back: Vec<f32> = data.iter().map(|&v| v as f32).collect();
        assert_eq!(back, t.to_vec());
    }
}
