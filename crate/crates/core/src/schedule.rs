//! Sample-size driven architecture schedule: depth, head width and the
//! filter-size profile grow with n at rates tied to the smoothness p and the
//! hierarchy level l of the target model.

use crate::cnn::CnnConfig;

/// Constants of the schedule. The defaults are desk-scale choices; the
/// schedule only fixes how the architecture grows with n, not the constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConstants {
    pub c3: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: usize,
}

impl Default for ScheduleConstants {
    fn default() -> Self {
        ScheduleConstants {
            c3: 1.0,
            c5: 1.0,
            c6: 1.0,
            c7: 8,
        }
    }
}

/// Per-layer filter exponent: pi(s) counts how many level thresholds s has
/// passed, so filter sizes step from 2^1 up to 2^l across the layer stack.
pub fn filter_exponent(s: usize, level: usize, depth_unit: usize) -> usize {
    let mut v = 0usize;
    for i in 1..=level {
        // threshold for level i: i + sum_{r=l-i+1}^{l-1} 4^r * depth_unit
        let mut thresh = i;
        for r in (level - i + 1)..level {
            thresh += 4usize.pow(r as u32) * depth_unit;
        }
        if s >= thresh {
            v += 1;
        }
    }
    v
}

/// Number of convolutional layers: (4^l - 1)/3 * ceil(c5 * n^{2/(2p+4)}) + l.
pub fn conv_depth(n: usize, p: f64, level: usize, c5: f64) -> usize {
    let q = depth_unit(n, p, c5);
    (4usize.pow(level as u32) - 1) / 3 * q + level
}

/// The shared depth unit ceil(c5 * n^{2/(2p+4)}).
pub fn depth_unit(n: usize, p: f64, c5: f64) -> usize {
    (c5 * (n as f64).powf(2.0 / (2.0 * p + 4.0))).ceil() as usize
}

/// Head width: ceil(c6 * n^{1/4}).
pub fn head_width(n: usize, c6: f64) -> usize {
    (c6 * (n as f64).powf(0.25)).ceil().max(1.0) as usize
}

/// The full architecture for sample size n, smoothness p and model level l.
pub fn scaled_architecture(n: usize, p: f64, level: usize, consts: &ScheduleConstants) -> CnnConfig {
    assert!(n >= 1 && p >= 1.0 && level >= 1);
    let q = depth_unit(n, p, consts.c5);
    let l1 = conv_depth(n, p, level, consts.c5);
    let filter_sizes = (1..=l1)
        .map(|s| 1usize << filter_exponent(s, level, q))
        .collect();
    CnnConfig {
        channels: vec![consts.c7; l1],
        filter_sizes,
        head_width: head_width(n, consts.c6),
        beta: consts.c3 * (n as f64).ln(),
    }
}
