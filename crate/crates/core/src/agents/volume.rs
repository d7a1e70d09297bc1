//! Raw CT volume stand-in and orthogonal slicing.
//!
//! Voxels are stored x-fastest (`index = x + nx * (y + ny * z)`). The axis
//! map says which grid axis runs along each anatomical direction; the
//! positive direction of each axis is right (sagittal), anterior (coronal)
//! and superior (axial).

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::iv::{Plane, SliceBounds};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VolumeError {
    #[error("dimensions must be positive, got {0:?}")]
    BadDims([usize; 3]),
    #[error("axis map must be a permutation of 0, 1, 2")]
    BadAxisMap,
    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("slice {index} out of bounds for {plane:?} (size {size})")]
    OutOfBounds { plane: Plane, index: i64, size: usize },
}

/// Grid axis (0 = x, 1 = y, 2 = z) carrying each anatomical direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisMap {
    pub sagittal: usize,
    pub coronal: usize,
    pub axial: usize,
}

impl Default for AxisMap {
    fn default() -> Self {
        Self { sagittal: 0, coronal: 1, axial: 2 }
    }
}

impl AxisMap {
    fn valid(&self) -> bool {
        let mut seen = [false; 3];
        for a in [self.sagittal, self.coronal, self.axial] {
            if a > 2 || seen[a] {
                return false;
            }
            seen[a] = true;
        }
        true
    }

    /// Grid axis indexed by a plane's slice index.
    pub fn axis(&self, plane: Plane) -> usize {
        match plane {
            Plane::Axial => self.axial,
            Plane::Coronal => self.coronal,
            Plane::Sagittal => self.sagittal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    I16,
    U16,
    F32,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::I16 | Dtype::U16 => 2,
            Dtype::F32 => 4,
        }
    }
}

/// JSON header stored next to the little-endian voxel blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    /// Voxel size in millimetres.
    pub spacing: [f64; 3],
    pub dtype: Dtype,
    #[serde(default)]
    pub axis_map: AxisMap,
}

/// A 2D slice, row-major, first row at the top of the displayed image.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl SliceImage {
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub axis_map: AxisMap,
    voxels: Vec<f32>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], axis_map: AxisMap, voxels: Vec<f32>) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::BadDims(dims));
        }
        if !axis_map.valid() {
            return Err(VolumeError::BadAxisMap);
        }
        let expected = dims.iter().product();
        if voxels.len() != expected {
            return Err(VolumeError::SizeMismatch { expected, actual: voxels.len() });
        }
        Ok(Self { dims, spacing, axis_map, voxels })
    }

    /// Builds a volume by evaluating `f(x, y, z)` on the grid.
    pub fn from_fn(dims: [usize; 3], spacing: [f64; 3], f: impl Fn(usize, usize, usize) -> f32) -> Result<Self, VolumeError> {
        let mut voxels = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    voxels.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, AxisMap::default(), voxels)
    }

    /// Decodes a little-endian blob described by `header`.
    pub fn from_bytes(header: &VolumeHeader, bytes: &[u8]) -> Result<Self, VolumeError> {
        let n: usize = header.dims.iter().product();
        let size = header.dtype.size();
        if bytes.len() != n * size {
            return Err(VolumeError::SizeMismatch { expected: n * size, actual: bytes.len() });
        }
        let voxels = bytes
            .chunks_exact(size)
            .map(|c| match header.dtype {
                Dtype::U8 => f32::from(c[0]),
                Dtype::I16 => f32::from(i16::from_le_bytes([c[0], c[1]])),
                Dtype::U16 => f32::from(u16::from_le_bytes([c[0], c[1]])),
                Dtype::F32 => f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
            })
            .collect();
        Self::new(header.dims, header.spacing, header.axis_map, voxels)
    }

    /// Encodes as `f32` little-endian, returning the matching header.
    pub fn to_bytes(&self) -> (VolumeHeader, Vec<u8>) {
        let header = VolumeHeader { dims: self.dims, spacing: self.spacing, dtype: Dtype::F32, axis_map: self.axis_map };
        (header, self.voxels.iter().flat_map(|v| v.to_le_bytes()).collect())
    }

    /// Synthetic chest-like phantom: a body ellipse with two lung cavities
    /// and a bright nodule. Deterministic, for demos and tests.
    pub fn phantom(dims: [usize; 3]) -> Result<Self, VolumeError> {
        let [nx, ny, nz] = dims.map(|d| d as f64);
        Self::from_fn(dims, [1.0, 1.0, 1.0], |x, y, z| {
            let u = (x as f64 + 0.5) / nx * 2.0 - 1.0;
            let v = (y as f64 + 0.5) / ny * 2.0 - 1.0;
            let w = (z as f64 + 0.5) / nz * 2.0 - 1.0;
            let sq = |t: f64| t * t;
            let inside = |cu: f64, cv: f64, ru: f64, rv: f64| sq((u - cu) / ru) + sq((v - cv) / rv) <= 1.0;
            let nodule = sq(u + 0.35) + sq(v - 0.05) + sq(w + 0.2) <= 0.01;
            if nodule {
                60.0
            } else if inside(-0.4, 0.0, 0.32, 0.6) || inside(0.4, 0.0, 0.32, 0.6) {
                -850.0
            } else if inside(0.0, 0.0, 0.9, 0.8) {
                40.0
            } else {
                -1000.0
            }
        })
    }

    pub fn plane_size(&self, plane: Plane) -> usize {
        self.dims[self.axis_map.axis(plane)]
    }

    pub fn bounds(&self) -> SliceBounds {
        SliceBounds {
            axial: self.plane_size(Plane::Axial),
            coronal: self.plane_size(Plane::Coronal),
            sagittal: self.plane_size(Plane::Sagittal),
        }
    }

    /// Voxel at anatomical indices.
    pub fn at(&self, sagittal: usize, coronal: usize, axial: usize) -> f32 {
        let mut g = [0usize; 3];
        g[self.axis_map.sagittal] = sagittal;
        g[self.axis_map.coronal] = coronal;
        g[self.axis_map.axial] = axial;
        self.voxels[g[0] + self.dims[0] * (g[1] + self.dims[1] * g[2])]
    }

    /// Orthogonal slice in display orientation.
    ///
    /// Axial is seen from below (anterior up, patient right on image left),
    /// coronal from the front (superior up, patient right on image left),
    /// sagittal from the left (superior up, anterior on image left).
    pub fn slice(&self, plane: Plane, index: i64) -> Result<SliceImage, VolumeError> {
        let size = self.plane_size(plane);
        if index < 0 || index as usize >= size {
            return Err(VolumeError::OutOfBounds { plane, index, size });
        }
        let k = index as usize;
        let (ns, nc, na) = (self.plane_size(Plane::Sagittal), self.plane_size(Plane::Coronal), self.plane_size(Plane::Axial));
        let (height, width) = match plane {
            Plane::Axial => (nc, ns),
            Plane::Coronal => (na, ns),
            Plane::Sagittal => (na, nc),
        };
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                let v = match plane {
                    Plane::Axial => self.at(ns - 1 - c, nc - 1 - r, k),
                    Plane::Coronal => self.at(ns - 1 - c, k, na - 1 - r),
                    Plane::Sagittal => self.at(k, nc - 1 - c, na - 1 - r),
                };
                pixels.push(v);
            }
        }
        Ok(SliceImage { width, height, pixels })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient() -> Volume {
        Volume::from_fn([4, 5, 6], [1.0; 3], |_, _, z| z as f32).unwrap()
    }

    #[test]
    fn axial_slice_of_z_gradient_is_constant() {
        let v = gradient();
        let img = v.slice(Plane::Axial, 3).unwrap();
        assert_eq!((img.width, img.height), (4, 5));
        assert!(img.pixels.iter().all(|p| *p == 3.0));
    }

    #[test]
    fn coronal_slice_ramps_along_z() {
        let v = gradient();
        let img = v.slice(Plane::Coronal, 2).unwrap();
        assert_eq!((img.width, img.height), (4, 6));
        for r in 0..img.height {
            for c in 0..img.width {
                // superior at the top
                assert_eq!(img.at(r, c), (img.height - 1 - r) as f32);
            }
        }
    }

    #[test]
    fn degenerate_volume() {
        let v = Volume::from_fn([1, 1, 1], [1.0; 3], |_, _, _| 7.0).unwrap();
        for p in [Plane::Axial, Plane::Coronal, Plane::Sagittal] {
            assert_eq!(v.slice(p, 0).unwrap().pixels, [7.0]);
        }
        assert!(matches!(v.slice(Plane::Axial, 1), Err(VolumeError::OutOfBounds { .. })));
    }

    #[test]
    fn orientation_puts_patient_right_on_image_left() {
        let v = Volume::from_fn([3, 2, 2], [1.0; 3], |x, _, _| x as f32).unwrap();
        let img = v.slice(Plane::Axial, 0).unwrap();
        assert_eq!(img.at(0, 0), 2.0);
        assert_eq!(img.at(0, 2), 0.0);
    }

    #[test]
    fn axis_map_permutation() {
        // grid z carries the sagittal direction
        let map = AxisMap { sagittal: 2, coronal: 1, axial: 0 };
        let voxels: Vec<f32> = (0..24).map(|i| (i / 12) as f32).collect(); // value = grid z
        let v = Volume::new([3, 4, 2], [1.0; 3], map, voxels).unwrap();
        assert_eq!(v.bounds(), SliceBounds { axial: 3, coronal: 4, sagittal: 2 });
        assert!(v.slice(Plane::Sagittal, 1).unwrap().pixels.iter().all(|p| *p == 1.0));
        assert_eq!(Volume::new([3, 4, 2], [1.0; 3], AxisMap { sagittal: 0, coronal: 0, axial: 1 }, alloc::vec![0.0; 24]), Err(VolumeError::BadAxisMap));
    }

    #[test]
    fn byte_round_trip_and_dtypes() {
        let v = Volume::phantom([8, 8, 4]).unwrap();
        let (h, bytes) = v.to_bytes();
        assert_eq!(Volume::from_bytes(&h, &bytes).unwrap(), v);

        let h16 = VolumeHeader { dims: [2, 1, 1], spacing: [1.0; 3], dtype: Dtype::I16, axis_map: AxisMap::default() };
        let v16 = Volume::from_bytes(&h16, &[0x18, 0xfc, 0x28, 0x00]).unwrap();
        assert_eq!((v16.at(0, 0, 0), v16.at(1, 0, 0)), (-1000.0, 40.0));
        assert!(matches!(Volume::from_bytes(&h16, &[0]), Err(VolumeError::SizeMismatch { .. })));
    }
}
