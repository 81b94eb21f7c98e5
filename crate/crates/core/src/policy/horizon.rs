use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Thermometer encoding of the remaining horizon: ones in `[0, h)`, zeros after.
pub fn encode_horizon(h: usize, t_max: usize) -> Result<Vec<f64>> {
    if h > t_max {
        return Err(Error::HorizonOutOfRange {
            horizon: h,
            max: t_max,
        });
    }
    let mut v = vec![0.0; t_max];
    v[..h].fill(1.0);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thermometer() {
        assert_eq!(encode_horizon(0, 4).unwrap(), vec![0.0; 4]);
        assert_eq!(encode_horizon(4, 4).unwrap(), vec![1.0; 4]);
        assert_eq!(encode_horizon(2, 4).unwrap(), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(
            encode_horizon(5, 4),
            Err(Error::HorizonOutOfRange { horizon: 5, max: 4 })
        );
    }
}
