//! Field files: a JSON header with the grid, a list of named channels and a
//! flat value array in node-major order (x fastest, channels interleaved per
//! node), plus CSV export with columns `x, y, <channels...>`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField, VectorField3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldFile {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub components: usize,
    pub channels: Vec<String>,
    pub values: Vec<f64>,
}

impl FieldFile {
    pub fn new(grid: &Grid2D, channels: Vec<(String, &ScalarField)>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidInput("a field file needs at least one channel".into()));
        }
        for (_, f) in &channels {
            grid.ensure_same(f.grid())?;
        }
        let mut values = Vec::with_capacity(grid.len() * channels.len());
        for k in 0..grid.len() {
            values.extend(channels.iter().map(|(_, f)| f.values()[k]));
        }
        Ok(Self {
            nx: grid.nx,
            ny: grid.ny,
            x0: grid.x0,
            y0: grid.y0,
            dx: grid.dx,
            dy: grid.dy,
            components: channels.len(),
            channels: channels.into_iter().map(|(n, _)| n).collect(),
            values,
        })
    }

    pub fn scalar(name: &str, field: &ScalarField) -> Self {
        Self::new(field.grid(), vec![(name.to_string(), field)]).expect("single channel on its own grid")
    }

    /// Channels `name.x`, `name.y`, `name.z`.
    pub fn vector(name: &str, field: &VectorField3) -> Self {
        let comps: Vec<ScalarField> = (0..3).map(|c| field.component(c)).collect();
        Self::new(
            field.grid(),
            ["x", "y", "z"]
                .iter()
                .zip(&comps)
                .map(|(s, f)| (format!("{name}.{s}"), f))
                .collect(),
        )
        .expect("components share the grid")
    }

    /// Appends the channels of `other`, which must live on the same grid.
    pub fn merge(mut self, other: FieldFile) -> Result<Self> {
        self.grid()?.ensure_same(&other.grid()?)?;
        let n = self.nx * self.ny;
        let mut values = Vec::with_capacity(n * (self.components + other.components));
        for k in 0..n {
            values.extend_from_slice(&self.values[k * self.components..(k + 1) * self.components]);
            values.extend_from_slice(&other.values[k * other.components..(k + 1) * other.components]);
        }
        self.values = values;
        self.components += other.components;
        self.channels.extend(other.channels);
        Ok(self)
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.x0, self.y0, self.nx, self.ny, self.dx, self.dy)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        if self.components == 0 || self.channels.len() != self.components {
            return Err(Error::Format(format!(
                "{} channel names for {} components",
                self.channels.len(),
                self.components
            )));
        }
        if self.values.len() != grid.len() * self.components {
            return Err(Error::Format(format!(
                "expected {} values, found {}",
                grid.len() * self.components,
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite value".into()));
        }
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Result<ScalarField> {
        let c = self
            .channels
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Format(format!("missing channel `{name}`")))?;
        let grid = self.grid()?;
        ScalarField::new(
            grid,
            self.values.iter().skip(c).step_by(self.components).copied().collect(),
        )
    }

    pub fn vector_channel(&self, name: &str) -> Result<VectorField3> {
        VectorField3::from_components(
            &self.channel(&format!("{name}.x"))?,
            &self.channel(&format!("{name}.y"))?,
            &self.channel(&format!("{name}.z"))?,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(s)?;
        f.validate()?;
        Ok(f)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// One row per node, columns `x, y` followed by the channels.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let grid = self.grid()?;
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        let mut header = vec!["x".to_string(), "y".to_string()];
        header.extend(self.channels.iter().cloned());
        w.write_record(&header).map_err(csv_error)?;
        for k in 0..grid.len() {
            let (x, y) = grid.point(k);
            let mut row = vec![x.to_string(), y.to_string()];
            row.extend(
                self.values[k * self.components..(k + 1) * self.components]
                    .iter()
                    .map(|v| v.to_string()),
            );
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn grid() -> Grid2D {
        Grid2D::new(-0.3, 1.0 / 3.0, 5, 4, 0.1 + 1e-17, 1.0 / 7.0).unwrap()
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let g = grid();
        let a = ScalarField::from_fn(g, |x, y| (x * 1e3).sin() / 3.0 + y.exp() * 1e-300);
        let b = ScalarField::from_fn(g, |x, y| x.powi(7) - y / 11.0);
        let f = FieldFile::new(&g, vec![("a".into(), &a), ("b".into(), &b)]).unwrap();
        let back = FieldFile::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        for (p, q) in back.channel("a").unwrap().values().iter().zip(a.values()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
        assert_eq!(back.grid().unwrap(), g);
    }

    #[test]
    fn storage_is_node_major_with_interleaved_channels() {
        let g = grid();
        let a = ScalarField::from_fn(g, |x, _| x);
        let b = ScalarField::from_fn(g, |_, y| y);
        let f = FieldFile::new(&g, vec![("a".into(), &a), ("b".into(), &b)]).unwrap();
        assert_eq!(f.values[2], g.x(1));
        assert_eq!(f.values[2 * g.nx + 1], g.y(1));
    }

    #[test]
    fn vector_channels_round_trip() {
        let g = grid();
        let v = VectorField3::from_fn(g, |x, y| Vector3::new(x, y, x * y));
        let f = FieldFile::vector("f", &v).merge(FieldFile::scalar("theta", &v.component(2))).unwrap();
        assert_eq!(f.channels, ["f.x", "f.y", "f.z", "theta"]);
        assert_eq!(f.vector_channel("f").unwrap(), v);
        assert!(f.channel("N.x").is_err());
    }

    #[test]
    fn malformed_files_are_rejected() {
        let g = grid();
        let mut f = FieldFile::scalar("u", &ScalarField::constant(g, 1.0));
        f.values.pop();
        assert!(FieldFile::from_json(&f.to_json().unwrap()).is_err());
        assert!(FieldFile::from_json("{\"nx\": 2}").is_err());
        let bad = r#"{"nx":2,"ny":3,"x0":0,"y0":0,"dx":1,"dy":1,"components":1,"channels":["u"],"values":[0,0,0,0,0,0]}"#;
        assert!(FieldFile::from_json(bad).is_err());
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let g = grid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        FieldFile::scalar("u", &ScalarField::from_fn(g, |x, y| x + y)).write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,u");
        assert_eq!(lines.len(), g.len() + 1);
    }
}
