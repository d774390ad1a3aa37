use std::f64::consts::{PI, SQRT_2};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Closed axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl Bounds {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        for a in 0..3 {
            if !(min[a].is_finite() && max[a].is_finite() && max[a] > min[a]) {
                return Err(Error::InvalidField(format!(
                    "degenerate bounds on axis {a}: [{}, {}]",
                    min[a], max[a]
                )));
            }
        }
        Ok(Bounds { min, max })
    }

    pub fn cube(lo: f64, hi: f64) -> Self {
        Bounds {
            min: [lo; 3],
            max: [hi; 3],
        }
    }

    #[inline]
    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn extent(&self) -> Vec3 {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn diagonal(&self) -> f64 {
        super::norm(self.extent())
    }
}

/// A steady velocity field defined over a closed box.
pub trait VectorField: Send + Sync {
    fn bounds(&self) -> Bounds;

    /// Velocity at `pos`; positions outside [`VectorField::bounds`] are a domain error.
    fn velocity(&self, pos: Vec3) -> Result<Vec3>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnalyticKind {
    /// Arnold-Beltrami-Childress flow.
    Abc {
        a: f64,
        b: f64,
        c: f64,
    },
    /// Vertical vortex whose core meanders with height, with inflow near the
    /// floor and an updraft along the core.
    Tornado {
        swirl: f64,
        core_radius: f64,
        inflow: f64,
        updraft: f64,
    },
    Constant {
        velocity: Vec3,
    },
}

impl AnalyticKind {
    pub fn abc() -> Self {
        AnalyticKind::Abc {
            a: 3f64.sqrt(),
            b: SQRT_2,
            c: 1.0,
        }
    }

    pub fn tornado() -> Self {
        AnalyticKind::Tornado {
            swirl: 0.2,
            core_radius: 0.08,
            inflow: 0.3,
            updraft: 0.6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticField {
    pub kind: AnalyticKind,
    pub bounds: Bounds,
}

impl AnalyticField {
    pub fn new(kind: AnalyticKind, bounds: Bounds) -> Self {
        AnalyticField { kind, bounds }
    }

    /// ABC flow with the usual coefficients over one period, `[0, 2π]³`.
    pub fn abc() -> Self {
        Self::new(AnalyticKind::abc(), Bounds::cube(0.0, 2.0 * PI))
    }

    /// Tornado-like vortex over the unit cube.
    pub fn tornado() -> Self {
        Self::new(AnalyticKind::tornado(), Bounds::cube(0.0, 1.0))
    }

    pub fn constant(velocity: Vec3, bounds: Bounds) -> Self {
        Self::new(AnalyticKind::Constant { velocity }, bounds)
    }

    /// Closed-form velocity; does not check bounds.
    pub fn eval(&self, p: Vec3) -> Vec3 {
        let [x, y, z] = p;
        match self.kind {
            AnalyticKind::Abc { a, b, c } => [
                a * z.sin() + c * y.cos(),
                b * x.sin() + a * z.cos(),
                c * y.sin() + b * x.cos(),
            ],
            AnalyticKind::Tornado {
                swirl,
                core_radius,
                inflow,
                updraft,
            } => {
                let cx = 0.5 + 0.1 * (2.0 * PI * z).sin();
                let cy = 0.5 + 0.1 * (2.0 * PI * z).cos();
                let dx = x - cx;
                let dy = y - cy;
                let r2 = dx * dx + dy * dy;
                let rc2 = core_radius * core_radius;
                let tangential = swirl / (r2 + rc2);
                let radial = -inflow * (1.0 - z);
                [
                    -dy * tangential + dx * radial,
                    dx * tangential + dy * radial,
                    updraft * (-r2 / (4.0 * rc2)).exp() + 0.05,
                ]
            }
            AnalyticKind::Constant { velocity } => velocity,
        }
    }
}

impl VectorField for AnalyticField {
    fn bounds(&self) -> Bounds {
        self.bounds
    }

    fn velocity(&self, pos: Vec3) -> Result<Vec3> {
        if !self.bounds.contains(pos) {
            return Err(Error::OutOfDomain(pos));
        }
        Ok(self.eval(pos))
    }
}

/// Velocities sampled on a regular grid anchored at the origin, interpolated
/// trilinearly. Samples are stored x-fastest, then y, then z.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    dims: [usize; 3],
    spacing: Vec3,
    velocities: Vec<Vec3>,
}

#[derive(Serialize, Deserialize)]
struct GridHeader {
    dims: [usize; 3],
    spacing: Vec3,
    data: String,
}

impl GridField {
    pub fn new(dims: [usize; 3], spacing: Vec3, velocities: Vec<Vec3>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidField(format!(
                "every axis needs at least 2 samples, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidField(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        if velocities.len() != n {
            return Err(Error::InvalidField(format!(
                "{} velocity samples for dims {dims:?} (expected {n})",
                velocities.len()
            )));
        }
        if let Some(i) = velocities
            .iter()
            .position(|v| v.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::InvalidField(format!(
                "non-finite velocity at sample {i}"
            )));
        }
        Ok(GridField {
            dims,
            spacing,
            velocities,
        })
    }

    /// Samples `field` on a `dims` grid spanning its bounds. The field's
    /// lower corner must be the origin.
    pub fn sample<F: VectorField + ?Sized>(field: &F, dims: [usize; 3]) -> Result<Self> {
        let b = field.bounds();
        if b.min.iter().any(|&m| m != 0.0) {
            return Err(Error::InvalidField(
                "grid sampling requires a field anchored at the origin".into(),
            ));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidField(format!(
                "every axis needs at least 2 samples, got {dims:?}"
            )));
        }
        let spacing = [
            b.max[0] / (dims[0] - 1) as f64,
            b.max[1] / (dims[1] - 1) as f64,
            b.max[2] / (dims[2] - 1) as f64,
        ];
        let mut velocities = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    // clamp so rounding never leaves the closed domain
                    let p = [
                        (i as f64 * spacing[0]).min(b.max[0]),
                        (j as f64 * spacing[1]).min(b.max[1]),
                        (k as f64 * spacing[2]).min(b.max[2]),
                    ];
                    velocities.push(field.velocity(p)?);
                }
            }
        }
        GridField::new(dims, spacing, velocities)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    pub fn velocities(&self) -> &[Vec3] {
        &self.velocities
    }

    #[inline]
    fn at(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.velocities[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    /// Reads a JSON header and its raw little-endian f32 payload
    /// (component-interleaved, x-fastest).
    pub fn read(header_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(header_path).map_err(|e| Error::file(header_path, e))?;
        let header: GridHeader = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidField(format!("{}: {e}", header_path.display())))?;
        let data_path = resolve(header_path, &header.data);
        let bytes = fs::read(&data_path).map_err(|e| Error::file(&data_path, e))?;
        let n = header.dims.iter().product::<usize>();
        let expected = n * 3 * 4;
        if bytes.len() != expected {
            return Err(Error::DataSize {
                expected,
                actual: bytes.len(),
            });
        }
        let velocities = bytes
            .chunks_exact(12)
            .map(|c| {
                let f = |o: usize| f32::from_le_bytes([c[o], c[o + 1], c[o + 2], c[o + 3]]) as f64;
                [f(0), f(4), f(8)]
            })
            .collect();
        GridField::new(header.dims, header.spacing, velocities)
    }

    /// Writes `<stem>.json` and `<stem>.raw` next to each other.
    pub fn write(&self, header_path: &Path) -> Result<()> {
        let raw_path = header_path.with_extension("raw");
        let raw_name = raw_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut bytes = Vec::with_capacity(self.velocities.len() * 12);
        for v in &self.velocities {
            for c in v {
                bytes.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        fs::write(&raw_path, bytes).map_err(|e| Error::file(&raw_path, e))?;
        let header = GridHeader {
            dims: self.dims,
            spacing: self.spacing,
            data: raw_name,
        };
        fs::write(header_path, serde_json::to_string_pretty(&header)?)
            .map_err(|e| Error::file(header_path, e))?;
        Ok(())
    }
}

fn resolve(header: &Path, data: &str) -> PathBuf {
    let p = Path::new(data);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        header.parent().unwrap_or(Path::new(".")).join(p)
    }
}

impl VectorField for GridField {
    fn bounds(&self) -> Bounds {
        Bounds {
            min: [0.0; 3],
            max: [
                (self.dims[0] - 1) as f64 * self.spacing[0],
                (self.dims[1] - 1) as f64 * self.spacing[1],
                (self.dims[2] - 1) as f64 * self.spacing[2],
            ],
        }
    }

    fn velocity(&self, pos: Vec3) -> Result<Vec3> {
        if !self.bounds().contains(pos) {
            return Err(Error::OutOfDomain(pos));
        }
        let mut idx = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let g = pos[a] / self.spacing[a];
            let cell = (g.floor() as usize).min(self.dims[a] - 2);
            idx[a] = cell;
            frac[a] = g - cell as f64;
        }
        let [i, j, k] = idx;
        let [fx, fy, fz] = frac;
        let mut out = [0.0; 3];
        for (dk, wz) in [(0, 1.0 - fz), (1, fz)] {
            for (dj, wy) in [(0, 1.0 - fy), (1, fy)] {
                for (di, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let w = wx * wy * wz;
                    if w == 0.0 {
                        continue;
                    }
                    let v = self.at(i + di, j + dj, k + dk);
                    out[0] += w * v[0];
                    out[1] += w * v[1];
                    out[2] += w * v[2];
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_field_is_constant() {
        let f = AnalyticField::constant([1.0, 0.0, 0.0], Bounds::cube(0.0, 10.0));
        assert_eq!(f.velocity([3.3, 7.0, 0.1]).unwrap(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn abc_at_origin() {
        let v = AnalyticField::abc().velocity([0.0; 3]).unwrap();
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn out_of_bounds_is_a_domain_error() {
        let f = AnalyticField::abc();
        assert!(matches!(
            f.velocity([-0.1, 0.0, 0.0]),
            Err(Error::OutOfDomain(_))
        ));
        let g = GridField::new([2, 2, 2], [1.0; 3], vec![[0.0, 1.0, 0.0]; 8]).unwrap();
        assert!(g.velocity([1.0, 1.0, 1.0 + 1e-9]).is_err());
    }

    #[test]
    fn uniform_grid_interpolates_to_sample_value() {
        let g = GridField::new([3, 3, 3], [0.5; 3], vec![[0.0, 1.0, 0.0]; 27]).unwrap();
        let v = g.velocity([0.25, 0.25, 0.25]).unwrap();
        assert_abs_diff_eq!(v[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[0], 0.0);
    }

    #[test]
    fn grid_is_exact_at_samples_and_linear_between() {
        let abc = AnalyticField::abc();
        let g = GridField::sample(&abc, [9, 7, 5]).unwrap();
        let s = g.spacing();
        for &(i, j, k) in &[(0, 0, 0), (8, 6, 4), (3, 2, 1), (8, 0, 4)] {
            let p = [i as f64 * s[0], j as f64 * s[1], k as f64 * s[2]];
            let p = [p[0].min(2.0 * PI), p[1].min(2.0 * PI), p[2].min(2.0 * PI)];
            let v = g.velocity(p).unwrap();
            let w = abc.eval(p);
            for a in 0..3 {
                assert_abs_diff_eq!(v[a], w[a], epsilon = 1e-12);
            }
        }
        // linear field is reproduced exactly everywhere
        let n = 4 * 4 * 4;
        let mut vel = Vec::with_capacity(n);
        for k in 0..4 {
            for j in 0..4 {
                for i in 0..4 {
                    vel.push([i as f64 + 2.0 * j as f64, k as f64, 1.0]);
                }
            }
        }
        let lin = GridField::new([4, 4, 4], [1.0; 3], vel).unwrap();
        let v = lin.velocity([1.3, 2.2, 0.7]).unwrap();
        assert_abs_diff_eq!(v[0], 1.3 + 4.4, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn rejects_inconsistent_grids() {
        assert!(GridField::new([2, 2, 2], [1.0; 3], vec![[0.0; 3]; 7]).is_err());
        assert!(GridField::new([2, 2, 2], [1.0; 3], vec![[f64::NAN, 0.0, 0.0]; 8]).is_err());
        assert!(GridField::new([1, 2, 2], [1.0; 3], vec![[0.0; 3]; 4]).is_err());
    }

    #[test]
    fn grid_file_round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let header = dir.path().join("abc.json");
        let g = GridField::sample(&AnalyticField::abc(), [5, 5, 5]).unwrap();
        g.write(&header).unwrap();
        let back = GridField::read(&header).unwrap();
        assert_eq!(back.dims(), g.dims());
        for (a, b) in back.velocities().iter().zip(g.velocities()) {
            for c in 0..3 {
                assert_abs_diff_eq!(a[c], b[c], epsilon = 1e-6);
            }
        }
        let raw = dir.path().join("abc.raw");
        let bytes = fs::read(&raw).unwrap();
        fs::write(&raw, &bytes[..bytes.len() - 5]).unwrap();
        match GridField::read(&header) {
            Err(Error::DataSize { expected, actual }) => {
                assert_eq!(expected, 125 * 12);
                assert_eq!(actual, 125 * 12 - 5);
            }
            other => panic!("expected size error, got {other:?}"),
        }
    }
}
