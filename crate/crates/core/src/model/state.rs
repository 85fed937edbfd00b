use serde::{Deserialize, Serialize};

/// The nine concentrations of the aggregate two-population closed loop.
///
/// Field order is the canonical state-vector layout and the column order of
/// exported trajectories.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateState {
    pub z1: f64,
    pub z2: f64,
    /// Control QS in controllers.
    pub qu_i: f64,
    /// Control QS in the medium.
    pub qu_e: f64,
    /// Control QS in targets.
    pub qu_t: f64,
    pub xc: f64,
    /// Feedback QS in targets.
    pub qx_t: f64,
    /// Feedback QS in the medium.
    pub qx_e: f64,
    /// Feedback QS in controllers.
    pub qx_i: f64,
}

pub const STATE_DIM: usize = 9;

pub const STATE_NAMES: [&str; STATE_DIM] =
    ["Z1", "Z2", "Qu_i", "Qu_e", "Qu_t", "Xc", "Qx_t", "Qx_e", "Qx_i"];

pub mod idx {
    pub const Z1: usize = 0;
    pub const Z2: usize = 1;
    pub const QU_I: usize = 2;
    pub const QU_E: usize = 3;
    pub const QU_T: usize = 4;
    pub const XC: usize = 5;
    pub const QX_T: usize = 6;
    pub const QX_E: usize = 7;
    pub const QX_I: usize = 8;
}

impl AggregateState {
    pub const ZERO: AggregateState = AggregateState {
        z1: 0.0,
        z2: 0.0,
        qu_i: 0.0,
        qu_e: 0.0,
        qu_t: 0.0,
        xc: 0.0,
        qx_t: 0.0,
        qx_e: 0.0,
        qx_i: 0.0,
    };

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.z1, self.z2, self.qu_i, self.qu_e, self.qu_t, self.xc, self.qx_t, self.qx_e,
            self.qx_i,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        AggregateState {
            z1: v[0],
            z2: v[1],
            qu_i: v[2],
            qu_e: v[3],
            qu_t: v[4],
            xc: v[5],
            qx_t: v[6],
            qx_e: v[7],
            qx_i: v[8],
        }
    }

    pub fn is_non_negative(&self) -> bool {
        self.to_array().iter().all(|&x| x >= 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl From<[f64; STATE_DIM]> for AggregateState {
    fn from(v: [f64; STATE_DIM]) -> Self {
        Self::from_slice(&v)
    }
}

/// Sender / receiver / medium concentrations of one QS channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QsChannelState {
    pub q_s: f64,
    pub q_r: f64,
    pub q_e: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn array_layout_matches_names() {
        let s = AggregateState::from([1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        assert_eq!(s.z1, 1.0);
        assert_eq!(s.qx_i, 9.0);
        assert_eq!(s.to_array()[idx::XC], 6.0);
        assert_eq!(STATE_NAMES[idx::QX_E], "Qx_e");
    }
}
