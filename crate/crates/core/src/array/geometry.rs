use serde::{Deserialize, Serialize};

use super::{ArrayError, Result};

/// Microphone positions in meters, relative to the array center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    name: String,
    mic_positions: Vec<[f64; 3]>,
}

pub const UMA8_RADIUS_M: f64 = 0.045;

impl ArrayGeometry {
    pub fn new(name: impl Into<String>, mic_positions: Vec<[f64; 3]>) -> Result<Self> {
        if mic_positions.len() < 2 {
            return Err(ArrayError::InvalidGeometry(
                "an array needs at least two microphones".into(),
            ));
        }
        if mic_positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ArrayError::InvalidGeometry("non-finite mic position".into()));
        }
        Ok(Self {
            name: name.into(),
            mic_positions,
        })
    }

    /// Uniform circular array of `n` mics plus an optional center mic
    /// (index 0), first perimeter mic on the +x axis.
    pub fn circular(name: impl Into<String>, n: usize, radius_m: f64, center_mic: bool) -> Result<Self> {
        let mut positions = Vec::with_capacity(n + 1);
        if center_mic {
            positions.push([0.0; 3]);
        }
        for k in 0..n {
            let phi = (360.0 * k as f64 / n as f64).to_radians();
            positions.push([radius_m * phi.cos(), radius_m * phi.sin(), 0.0]);
        }
        Self::new(name, positions)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mic_positions(&self) -> &[[f64; 3]] {
        &self.mic_positions
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    /// Index of a mic sitting at the array origin, used as the phase
    /// reference and as the unprocessed "before" channel.
    pub fn reference_mic(&self) -> Option<usize> {
        self.mic_positions
            .iter()
            .position(|p| p.iter().all(|&v| v == 0.0))
    }

    /// Built-in presets by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "uma8" | "uma-8" => Some(uma8_geometry()),
            _ => None,
        }
    }
}

/// miniDSP UMA-8: one center mic and six on a 90 mm diameter circle, 60°
/// apart, all in the z = 0 plane.
pub fn uma8_geometry() -> ArrayGeometry {
    ArrayGeometry::circular("uma8", 6, UMA8_RADIUS_M, true).expect("preset geometry is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uma8_layout() {
        let g = uma8_geometry();
        assert_eq!(g.num_mics(), 7);
        assert_eq!(g.mic_positions()[0], [0.0, 0.0, 0.0]);
        assert_eq!(g.reference_mic(), Some(0));
        for p in &g.mic_positions()[1..] {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - 0.045).abs() < 1e-15);
            assert_eq!(p[2], 0.0);
        }
        for k in 1..7 {
            let a = g.mic_positions()[k];
            let b = g.mic_positions()[k % 6 + 1];
            let angle = (a[0] * b[0] + a[1] * b[1]) / (0.045 * 0.045);
            assert!((angle.clamp(-1.0, 1.0).acos().to_degrees() - 60.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_degenerate_arrays() {
        assert!(ArrayGeometry::new("one", vec![[0.0; 3]]).is_err());
        assert!(ArrayGeometry::new("nan", vec![[0.0; 3], [f64::NAN, 0.0, 0.0]]).is_err());
    }
}
