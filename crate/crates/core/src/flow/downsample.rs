//! Invertible 2× spatial downsampling.

use super::config::DownsampleKind;
use super::layers::Ctx;
use crate::error::Result;
use crate::grad::{Real, Var};

/// Mixing matrix applied to the 2×2 block entries `(0,0), (0,1), (1,0), (1,1)`.
pub fn mix<T: Real>(kind: DownsampleKind) -> [[T; 4]; 4] {
    let rows: [[f64; 4]; 4] = match kind {
        DownsampleKind::Irevnet => [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
        // average, horizontal, vertical and diagonal detail, orthonormal
        DownsampleKind::Haar => [
            [0.5, 0.5, 0.5, 0.5],
            [0.5, -0.5, 0.5, -0.5],
            [0.5, 0.5, -0.5, -0.5],
            [0.5, -0.5, -0.5, 0.5],
        ],
    };
    rows.map(|r| r.map(T::of))
}

/// `[N,C,H,W] -> [N,4C,H/2,W/2]`; both variants are orthogonal, so the log-determinant is 0.
pub fn downsample<T: Real>(ctx: &Ctx<T>, x: &Var<T>, kind: DownsampleKind) -> Result<Var<T>> {
    ctx.tape.space_to_depth(x, mix(kind))
}

pub fn upsample<T: Real>(ctx: &Ctx<T>, y: &Var<T>, kind: DownsampleKind) -> Result<Var<T>> {
    ctx.tape.depth_to_space(y, mix(kind))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixes_are_orthogonal() {
        for kind in [DownsampleKind::Haar, DownsampleKind::Irevnet] {
            let m = mix::<f64>(kind);
            for i in 0..4 {
                for j in 0..4 {
                    let d: f64 = (0..4).map(|k| m[i][k] * m[j][k]).sum();
                    assert_eq!(d, if i == j { 1.0 } else { 0.0 });
                }
            }
        }
    }
}
