//! Versioned on-disk formats for observations and trajectories.
//!
//! Image blob (version 1): an 8-byte little-endian header
//! `(width: u16, height: u16, channels: u16, dtype: u16)` followed by
//! row-major sample bytes. The only dtype tag currently defined is
//! `1 = u8` (value = byte / 255).
//!
//! Trajectory dump (version 1): one JSON record per line with fields
//! `(step_count, pose, twist, action, ft_reading, goal_flag)`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::SimError;

pub const IMAGE_DTYPE_U8: u16 = 1;

pub fn write_image_blob(
    w: &mut impl Write,
    width: u16,
    height: u16,
    channels: u16,
    data: &[u8],
) -> std::io::Result<()> {
    assert_eq!(data.len(), width as usize * height as usize * channels as usize);
    w.write_all(&width.to_le_bytes())?;
    w.write_all(&height.to_le_bytes())?;
    w.write_all(&channels.to_le_bytes())?;
    w.write_all(&IMAGE_DTYPE_U8.to_le_bytes())?;
    w.write_all(data)
}

pub fn read_image_blob(r: &mut impl Read) -> Result<(u16, u16, u16, Vec<u8>), SimError> {
    let mut header = [0u8; 8];
    r.read_exact(&mut header).map_err(io_err)?;
    let width = u16::from_le_bytes([header[0], header[1]]);
    let height = u16::from_le_bytes([header[2], header[3]]);
    let channels = u16::from_le_bytes([header[4], header[5]]);
    let dtype = u16::from_le_bytes([header[6], header[7]]);
    if dtype != IMAGE_DTYPE_U8 {
        return Err(SimError::InvalidConfig(format!("unknown image dtype tag {dtype}")));
    }
    let mut data = vec![0u8; width as usize * height as usize * channels as usize];
    r.read_exact(&mut data).map_err(io_err)?;
    Ok((width, height, channels, data))
}

fn io_err(e: std::io::Error) -> SimError {
    SimError::InvalidConfig(format!("image blob i/o: {e}"))
}

/// One line of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step_count: u64,
    pub pose: [f64; 3],
    pub twist: [f64; 3],
    pub action: [f64; 3],
    pub ft_reading: [f64; 3],
    pub goal_flag: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_blob_round_trip() {
        let data: Vec<u8> = (0..4 * 3 * 3).map(|i| i as u8).collect();
        let mut buf = Vec::new();
        write_image_blob(&mut buf, 4, 3, 3, &data).unwrap();
        assert_eq!(buf.len(), 8 + data.len());
        let (w, h, c, d) = read_image_blob(&mut buf.as_slice()).unwrap();
        assert_eq!((w, h, c), (4, 3, 3));
        assert_eq!(d, data);
    }
}
