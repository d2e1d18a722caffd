use crate::tensor::{EngineError, Shape, TensorValue};

/// Rotation angles, in degrees.
pub const ANGLES: [u32; 9] = [30, 60, 90, 120, 150, 180, 210, 240, 270];

const HALF_SQRT3: f64 = 0.8660254037844386;

/// (cos, sin) of the non-right angles, written out to keep the sampling
/// grid independent of libm.
fn cos_sin(angle: u32) -> (f64, f64) {
    match angle {
        30 => (HALF_SQRT3, 0.5),
        60 => (0.5, HALF_SQRT3),
        120 => (-0.5, HALF_SQRT3),
        150 => (-HALF_SQRT3, 0.5),
        210 => (-HALF_SQRT3, -0.5),
        240 => (-0.5, -HALF_SQRT3),
        _ => unreachable!("right angles are exact permutations"),
    }
}

/// Source cell for output cell `(i, j)` of an `h` x `w` plane rotated
/// counterclockwise by `angle`, as `(row, col)`, or `None` when the
/// back-rotated point falls outside the input.
pub fn source_cell(angle: u32, h: usize, w: usize, i: usize, j: usize) -> Option<(usize, usize)> {
    match angle {
        90 => Some((j, w - 1 - i)),
        180 => Some((h - 1 - i, w - 1 - j)),
        270 => Some((h - 1 - j, i)),
        _ => {
            let (c, s) = cos_sin(angle);
            let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
            // x to the right, y upwards, origin at the centre
            let (x, y) = (j as f64 - cx, cy - i as f64);
            let (sx, sy) = (x * c + y * s, -x * s + y * c);
            let (col, row) = ((cx + sx).round(), (cy - sy).round());
            let inside = (0.0..w as f64).contains(&col) && (0.0..h as f64).contains(&row);
            inside.then_some((row as usize, col as usize))
        }
    }
}

/// Rotates each plane spanned by the last two dims of a rank-2 or rank-3
/// tensor. Right angles permute elements (and swap the plane's dims for 90
/// and 270); other angles resample by nearest neighbour with zero fill.
/// The result keeps the input's storage structure.
pub fn rotate(t: &TensorValue, angle: u32) -> Result<TensorValue, EngineError> {
    let dims = t.shape().dims();
    if !(2..=3).contains(&dims.len()) || !ANGLES.contains(&angle) {
        return Err(EngineError::Value(format!("cannot rotate shape {} by {angle} degrees", t.shape())));
    }
    let r = dims.len();
    let (h, w) = (dims[r - 2], dims[r - 1]);
    let slices = if r == 3 { dims[0] } else { 1 };
    let (oh, ow) = if angle == 90 || angle == 270 { (w, h) } else { (h, w) };
    let mut out_dims = dims.to_vec();
    out_dims[r - 2] = oh;
    out_dims[r - 1] = ow;
    let mut slots = Vec::with_capacity(slices * oh * ow);
    for s in 0..slices {
        for i in 0..oh {
            for j in 0..ow {
                slots.push(source_cell(angle, h, w, i, j).map(|(y, x)| s * h * w + y * w + x));
            }
        }
    }
    let values = t.dense_values().gather_or_zero(slots);
    let rotated = t.replace_dense(Shape::new(out_dims)?, values)?;
    Ok(rotated.convert_structure(t.structure_kind()).unwrap_or(rotated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DType;

    fn floats(t: &TensorValue) -> Vec<f64> {
        let d = t.dense_values();
        (0..d.len()).map(|i| d.get_f64(i)).collect()
    }

    fn m(dims: &[usize], xs: &[f64]) -> TensorValue {
        TensorValue::from_f64(DType::F32, dims, xs).unwrap()
    }

    #[test]
    fn quarter_turn_of_two_by_two() {
        let r = rotate(&m(&[2, 2], &[1.0, 2.0, 3.0, 4.0]), 90).unwrap();
        assert_eq!(floats(&r), [2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn quarter_turn_swaps_dims() {
        // [[1,2,3],[4,5,6]] counterclockwise -> [[3,6],[2,5],[1,4]]
        let r = rotate(&m(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), 90).unwrap();
        assert_eq!(r.shape().dims(), [3, 2]);
        assert_eq!(floats(&r), [3.0, 6.0, 2.0, 5.0, 1.0, 4.0]);
        let back = rotate(&r, 270).unwrap();
        assert_eq!(floats(&back), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn half_turn_and_slices() {
        let t = m(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
        let r = rotate(&t, 180).unwrap();
        assert_eq!(floats(&r), [2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn oblique_angles_keep_shape_and_centre() {
        let xs: Vec<f64> = (1..=9).map(f64::from).collect();
        let t = m(&[3, 3], &xs);
        for a in [30, 60, 120, 150, 210, 240] {
            let r = rotate(&t, a).unwrap();
            assert_eq!(r.shape().dims(), [3, 3]);
            assert_eq!(floats(&r)[4], 5.0, "centre fixed at {a}");
        }
        // top middle reads from the top right at 30 degrees
        assert_eq!(source_cell(30, 3, 3, 0, 1), Some((0, 2)));
    }

    #[test]
    fn zero_fill_outside() {
        // a 1x5 strip rotated by 60 degrees loses its ends
        let t = m(&[1, 5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let r = rotate(&t, 60).unwrap();
        assert_eq!(floats(&r), [0.0, 0.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn sparse_input_stays_sparse() {
        let t = m(&[2, 2], &[0.0, 5.0, 0.0, 0.0]).convert_structure(crate::tensor::StructureKind::Sparse).unwrap();
        let r = rotate(&t, 90).unwrap();
        assert_eq!(r.structure_kind(), crate::tensor::StructureKind::Sparse);
        assert_eq!(floats(&r), [5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_rank_and_angle() {
        assert!(rotate(&m(&[4], &[1.0; 4]), 90).is_err());
        assert!(rotate(&m(&[2, 2], &[1.0; 4]), 45).is_err());
    }
}
