use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Resizes `[(g²+1)×d]` position embeddings to a `g'×g'` patch grid by
/// bilinear interpolation with aligned corners. Row 0 (class token) is
/// copied through untouched.
pub fn resize_pos_embed(pos: &Tensor, new_grid: usize) -> Result<Tensor> {
    if pos.rank() != 2 || new_grid == 0 {
        return Err(Error::contract(format!(
            "resize_pos_embed needs a matrix and a positive grid, got {:?} -> {new_grid}",
            pos.shape()
        )));
    }
    let (rows, d) = (pos.shape()[0], pos.shape()[1]);
    let grid = ((rows - 1) as f64).sqrt().round() as usize;
    if grid == 0 || grid * grid + 1 != rows {
        return Err(Error::contract(format!(
            "{rows} rows is not a square patch grid plus a class token"
        )));
    }
    if grid == new_grid {
        return Ok(pos.clone());
    }

    let mut out = Vec::with_capacity((new_grid * new_grid + 1) * d);
    out.extend_from_slice(pos.row(0));
    let patch = |y: usize, x: usize| pos.row(1 + y * grid + x);
    // Maps an output index onto the source grid so that both end points line up.
    let src_coord = |i: usize| -> f64 {
        if new_grid == 1 {
            (grid - 1) as f64 / 2.0
        } else {
            i as f64 * (grid - 1) as f64 / (new_grid - 1) as f64
        }
    };
    for oy in 0..new_grid {
        let sy = src_coord(oy);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(grid - 1);
        let ty = sy - y0 as f64;
        for ox in 0..new_grid {
            let sx = src_coord(ox);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(grid - 1);
            let tx = sx - x0 as f64;
            let (a, b, c, e) = (patch(y0, x0), patch(y0, x1), patch(y1, x0), patch(y1, x1));
            for j in 0..d {
                let top = a[j] * (1.0 - tx) + b[j] * tx;
                let bottom = c[j] * (1.0 - tx) + e[j] * tx;
                out.push(top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    Tensor::new(&[new_grid * new_grid + 1, d], out)
}
