use std::fmt::Write as _;
use std::path::Path;

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::error::{GraspError, Result};
use crate::field::GraspValueField;
use crate::se3::{Pose6, Vec3};

/// A coordinate of a slice, expressed in the center pose's TCP frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceAxis {
    Tx,
    Ty,
    Tz,
    Rx,
    Ry,
    Rz,
}

impl SliceAxis {
    pub fn name(self) -> &'static str {
        match self {
            SliceAxis::Tx => "tx",
            SliceAxis::Ty => "ty",
            SliceAxis::Tz => "tz",
            SliceAxis::Rx => "rx",
            SliceAxis::Ry => "ry",
            SliceAxis::Rz => "rz",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "tx" => SliceAxis::Tx,
            "ty" => SliceAxis::Ty,
            "tz" => SliceAxis::Tz,
            "rx" => SliceAxis::Rx,
            "ry" => SliceAxis::Ry,
            "rz" => SliceAxis::Rz,
            _ => return None,
        })
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMeta {
    /// `(x, y, z, w, qx, qy, qz)`
    pub center: [f64; 7],
    pub dims: [SliceAxis; 2],
    pub extent: f64,
    pub resolution: usize,
}

/// Field values on a `resolution x resolution` grid. Row `i` varies the first axis,
/// column `j` the second; both run from `-extent` to `+extent`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceGrid {
    pub meta: SliceMeta,
    pub values: Vec<Vec<f64>>,
}

impl SliceGrid {
    /// Offset of grid index `i` along either axis.
    pub fn offset(&self, i: usize) -> f64 {
        grid_offset(self.meta.extent, self.meta.resolution, i)
    }

    /// Position of the largest value, first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut v = f64::NEG_INFINITY;
        for (i, row) in self.values.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                if *x > v {
                    v = *x;
                    best = (i, j);
                }
            }
        }
        best
    }

    /// One row per line, space separated, shortest round-trip decimal form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for row in &self.values {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(s, "{}", line.join(" ")).expect("string write");
        }
        s
    }

    pub fn from_text(meta: SliceMeta, text: &str) -> Result<Self> {
        let values: Vec<Vec<f64>> = text
            .lines()
            .map(|l| {
                l.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| GraspError::InvalidConfig(format!("slice value {t:?}: {e}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        if values.len() != meta.resolution || values.iter().any(|r| r.len() != meta.resolution) {
            return Err(GraspError::DimensionMismatch {
                expected: meta.resolution,
                actual: values.len(),
            });
        }
        Ok(SliceGrid { meta, values })
    }

    /// Writes `<stem>.txt` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let txt = dir.join(format!("{stem}.txt"));
        std::fs::write(&txt, self.to_text()).map_err(|e| GraspError::io(&txt, e))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, serde_json::to_string_pretty(&self.meta)?).map_err(|e| GraspError::io(&json, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let json = dir.join(format!("{stem}.json"));
        let meta: SliceMeta =
            serde_json::from_str(&std::fs::read_to_string(&json).map_err(|e| GraspError::io(&json, e))?)?;
        let txt = dir.join(format!("{stem}.txt"));
        Self::from_text(meta, &std::fs::read_to_string(&txt).map_err(|e| GraspError::io(&txt, e))?)
    }
}

fn grid_offset(extent: f64, resolution: usize, i: usize) -> f64 {
    let n = (resolution - 1) as f64;
    extent * (2.0 * i as f64 - n) / n
}

/// The center pose moved by `offsets = (tx, ty, tz, rx, ry, rz)` in its own frame.
/// Rotations are axis-angle vectors about the TCP axes.
pub fn perturb_in_tcp_frame(center: &Pose6, offsets: &[f64; 6]) -> Pose6 {
    let t = Vec3::new(offsets[0], offsets[1], offsets[2]);
    let r = Vec3::new(offsets[3], offsets[4], offsets[5]);
    if offsets.iter().all(|o| *o == 0.0) {
        return *center;
    }
    Pose6::new(
        center.position + center.orientation * t,
        center.orientation * UnitQuaternion::from_scaled_axis(r),
    )
}

/// Samples `field` on a grid over two TCP-frame coordinates around `center`. With an odd
/// resolution the middle cell is the center pose itself.
pub fn slice_values<F: GraspValueField + ?Sized>(
    field: &F,
    center: &Pose6,
    dims: [SliceAxis; 2],
    extent: f64,
    resolution: usize,
) -> Result<SliceGrid> {
    if resolution < 2 {
        return Err(GraspError::InvalidConfig("slice resolution must be at least 2".into()));
    }
    if !(extent >= 0.0) {
        return Err(GraspError::InvalidConfig("slice extent must be non-negative".into()));
    }
    if dims[0] == dims[1] {
        return Err(GraspError::InvalidConfig("slice axes must differ".into()));
    }
    let mut values = Vec::with_capacity(resolution);
    for i in 0..resolution {
        let mut row = Vec::with_capacity(resolution);
        for j in 0..resolution {
            let mut off = [0.0; 6];
            off[dims[0].index()] = grid_offset(extent, resolution, i);
            off[dims[1].index()] = grid_offset(extent, resolution, j);
            row.push(field.value_at(&perturb_in_tcp_frame(center, &off))?);
        }
        values.push(row);
    }
    Ok(SliceGrid {
        meta: SliceMeta {
            center: center.to_params(),
            dims,
            extent,
            resolution,
        },
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ConstantField, OracleField, DEFAULT_TEMPERATURE};
    use crate::scene::{PrismObject, Scene, Shape};
    use crate::se3::{yaw, Workspace};
    use crate::seed::rng_from_seed;

    #[test]
    fn constant_field_gives_uniform_grid() {
        let g = slice_values(&ConstantField(0.25), &Pose6::identity(), [SliceAxis::Tx, SliceAxis::Rz], 0.1, 4).unwrap();
        assert!(g.values.iter().flatten().all(|v| *v == 0.25));
        assert_eq!(g.values.len(), 4);
    }

    #[test]
    fn center_cell_is_center_value() {
        let scene = Scene::new(
            vec![PrismObject::upright(Shape::Box { size: [0.03, 0.05, 0.04] }, 0.0, 0.0, 0.2, 0)],
            Workspace::default(),
            0,
        );
        let field = OracleField::new(&scene, DEFAULT_TEMPERATURE).unwrap();
        let c = Pose6::new(Vec3::new(0.01, 0.02, 0.05), yaw(0.3));
        let g = slice_values(&field, &c, [SliceAxis::Ty, SliceAxis::Rx], 0.05, 11).unwrap();
        assert_eq!(g.values[5][5], field.value_at(&c).unwrap());
        assert_eq!(g.offset(0), -0.05);
        assert_eq!(g.offset(10), 0.05);
    }

    #[test]
    fn translation_offsets_follow_the_tcp_frame() {
        let c = Pose6::new(Vec3::new(0.1, 0.0, 0.0), yaw(std::f64::consts::FRAC_PI_2));
        let p = perturb_in_tcp_frame(&c, &[0.02, 0.0, 0.0, 0.0, 0.0, 0.0]);
        // Local x maps to world y after a quarter turn.
        assert!((p.position - Vec3::new(0.1, 0.02, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let field = OracleField::new(
            &Scene::new(
                vec![PrismObject::upright(Shape::Box { size: [0.03, 0.05, 0.04] }, 0.0, 0.0, 0.0, 0)],
                Workspace::default(),
                0,
            ),
            DEFAULT_TEMPERATURE,
        )
        .unwrap();
        let c = field.oracle().demonstrate(&mut rng_from_seed(0)).unwrap();
        let g = slice_values(&field, &c, [SliceAxis::Tx, SliceAxis::Ty], 0.05, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        g.save(dir.path(), "slice").unwrap();
        assert_eq!(SliceGrid::load(dir.path(), "slice").unwrap(), g);
    }

    #[test]
    fn bad_arguments_are_rejected() {
        let f = ConstantField(1.0);
        let c = Pose6::identity();
        assert!(slice_values(&f, &c, [SliceAxis::Tx, SliceAxis::Ty], 0.1, 1).is_err());
        assert!(slice_values(&f, &c, [SliceAxis::Tx, SliceAxis::Tx], 0.1, 3).is_err());
        assert!(SliceAxis::from_name("qq").is_none());
        assert_eq!(SliceAxis::from_name("rz"), Some(SliceAxis::Rz));
    }
}
