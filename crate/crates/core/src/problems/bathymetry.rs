use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::scalar::Real;

/// Regular grid of elevations, bilinearly interpolated and clamped at the
/// edges. File layout: header `nx ny x0 y0 dx dy`, then `nx * ny` values
/// row by row starting at `y0` (row `j` holds the points `y0 + j dy`).
#[derive(Clone, Debug)]
pub struct RasterGrid<T> {
    pub nx: usize,
    pub ny: usize,
    pub origin: [T; 2],
    pub spacing: [T; 2],
    pub values: Vec<T>,
}

impl<T: Real> RasterGrid<T> {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let err = |line: usize, message: &str| Error::Parse { path: path.to_path_buf(), line, message: message.into() };
        let mut tokens = text.lines().enumerate().flat_map(|(i, l)| {
            l.split('#').next().unwrap_or("").split_whitespace().map(move |t| (i + 1, t)).collect::<Vec<_>>()
        });
        let mut header = [0.0f64; 6];
        for h in header.iter_mut() {
            let (line, tok) = tokens.next().ok_or_else(|| err(1, "incomplete raster header"))?;
            *h = tok.parse().map_err(|_| err(line, "invalid raster header value"))?;
        }
        let (nx, ny) = (header[0] as usize, header[1] as usize);
        if nx < 1 || ny < 1 || header[0].fract() != 0.0 || header[1].fract() != 0.0 || header[4] <= 0.0 || header[5] <= 0.0 {
            return Err(err(1, "malformed raster header `nx ny x0 y0 dx dy`"));
        }
        let mut values = Vec::with_capacity(nx * ny);
        for _ in 0..nx * ny {
            let (line, tok) = tokens.next().ok_or_else(|| err(0, "too few raster values"))?;
            values.push(tok.parse::<T>().map_err(|_| err(line, "invalid raster value"))?);
        }
        Ok(RasterGrid {
            nx,
            ny,
            origin: [T::lit(header[2]), T::lit(header[3])],
            spacing: [T::lit(header[4]), T::lit(header[5])],
            values,
        })
    }

    pub fn eval(&self, p: [T; 2]) -> T {
        let locate = |v: T, k: usize, n: usize| -> (usize, T) {
            let s = ((v - self.origin[k]) / self.spacing[k]).max(T::zero());
            if n == 1 {
                return (0, T::zero());
            }
            let i = s.floor().to_usize().unwrap_or(usize::MAX).min(n - 2);
            (i, (s - T::from_usize_lossy(i)).min(T::one()))
        };
        let (i, fx) = locate(p[0], 0, self.nx);
        let (j, fy) = locate(p[1], 1, self.ny);
        let at = |a: usize, b: usize| self.values[b.min(self.ny - 1) * self.nx + a.min(self.nx - 1)];
        let one = T::one();
        (one - fx) * (one - fy) * at(i, j)
            + fx * (one - fy) * at(i + 1, j)
            + (one - fx) * fy * at(i, j + 1)
            + fx * fy * at(i + 1, j + 1)
    }
}

/// Ground elevation providers.
#[derive(Clone, Debug)]
pub enum Bathymetry<T> {
    /// `a x + b y + c`.
    Plane { a: T, b: T, c: T },
    /// `base + curvature |x - center|^2`.
    Paraboloid { center: [T; 2], curvature: T, base: T },
    Raster(RasterGrid<T>),
}

impl<T: Real> Bathymetry<T> {
    pub fn eval(&self, p: [T; 2]) -> T {
        match self {
            Bathymetry::Plane { a, b, c } => *a * p[0] + *b * p[1] + *c,
            Bathymetry::Paraboloid { center, curvature, base } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                *base + *curvature * (dx * dx + dy * dy)
            }
            Bathymetry::Raster(r) => r.eval(p),
        }
    }

    pub fn at_nodes(&self, mesh: &TriMesh<T>) -> Vec<T> {
        mesh.nodes().iter().map(|&p| self.eval(p)).collect()
    }
}
