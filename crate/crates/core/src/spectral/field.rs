use rustfft::num_complex::Complex64;

use super::Grid;
use crate::error::{Error, Result};

/// Real samples of a scalar (1 component) or vector (3 components) field.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

/// Fourier coefficients of a scalar or vector field, normalized so that
/// `f(x) = Σ_m c(m) e^{i k·x}`.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    comps: Vec<Vec<Complex64>>,
}

fn check_shape<T>(grid: &Grid, comps: &[Vec<T>]) -> Result<()> {
    if comps.len() != 1 && comps.len() != 3 {
        return Err(Error::Shape(format!("{} components, expected 1 or 3", comps.len())));
    }
    for (c, v) in comps.iter().enumerate() {
        if v.len() != grid.len() {
            return Err(Error::Shape(format!(
                "component {c} has {} samples, grid needs {}",
                v.len(),
                grid.len()
            )));
        }
    }
    Ok(())
}

impl Field {
    pub fn new(grid: &Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        check_shape(grid, &comps)?;
        Ok(Field { grid: grid.clone(), comps })
    }

    pub fn scalar(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, vec![values])
    }

    pub fn zeros(grid: &Grid, ncomp: usize) -> Self {
        assert!(ncomp == 1 || ncomp == 3);
        Field {
            grid: grid.clone(),
            comps: vec![vec![0.0; grid.len()]; ncomp],
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Field {
            grid: grid.clone(),
            comps: vec![vec![value; grid.len()]],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let v = (0..grid.len()).map(|idx| f(grid.position(idx))).collect();
        Field { grid: grid.clone(), comps: vec![v] }
    }

    pub fn vector_from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut comps = vec![Vec::with_capacity(grid.len()); 3];
        for idx in 0..grid.len() {
            let v = f(grid.position(idx));
            for c in 0..3 {
                comps[c].push(v[c]);
            }
        }
        Field { grid: grid.clone(), comps }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.comps.len() == 1
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.comps
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .collect()
    }

    /// sup over points of the Euclidean magnitude.
    pub fn max_norm(&self) -> f64 {
        if self.is_scalar() {
            self.comps[0].iter().fold(0.0, |m, v| m.max(v.abs()))
        } else {
            self.magnitude().into_iter().fold(0.0, f64::max)
        }
    }

    pub fn min_value(&self) -> f64 {
        self.comps[0].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.comps[0].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Quadrature of |f|² over the box.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.cell_volume() * self.comps.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// Quadrature of component `c` over the box.
    pub fn integral(&self, c: usize) -> f64 {
        self.grid.cell_volume() * self.comps[c].iter().sum::<f64>()
    }

    pub fn all_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn scaled(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            comps: self.comps.iter().map(|c| c.iter().map(|&v| f(v)).collect()).collect(),
        }
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.same_shape(other)?;
        Ok(Field {
            grid: self.grid.clone(),
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn same_shape(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid || self.ncomp() != other.ncomp() {
            return Err(Error::Shape("fields live on different grids or differ in rank".into()));
        }
        Ok(())
    }

    /// Component-wise bit equality.
    pub fn bit_eq(&self, other: &Field) -> bool {
        self.grid == other.grid
            && self.comps.len() == other.comps.len()
            && self
                .comps
                .iter()
                .zip(&other.comps)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

impl SpectralField {
    pub fn new(grid: &Grid, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        check_shape(grid, &comps)?;
        Ok(SpectralField { grid: grid.clone(), comps })
    }

    pub fn zeros(grid: &Grid, ncomp: usize) -> Self {
        assert!(ncomp == 1 || ncomp == 3);
        SpectralField {
            grid: grid.clone(),
            comps: vec![vec![Complex64::new(0.0, 0.0); grid.len()]; ncomp],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.comps.len() == 1
    }

    pub fn coeffs(&self, c: usize) -> &[Complex64] {
        &self.comps[c]
    }

    pub fn coeffs_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.comps[c]
    }

    pub fn components(&self) -> &[Vec<Complex64>] {
        &self.comps
    }

    pub fn into_components(self) -> Vec<Vec<Complex64>> {
        self.comps
    }

    /// Coefficient of component `c` at mode triple `m`.
    pub fn at(&self, c: usize, m: [i64; 3]) -> Complex64 {
        self.comps[c][self.grid.mode_index(m)]
    }

    pub fn set(&mut self, c: usize, m: [i64; 3], value: Complex64) {
        let idx = self.grid.mode_index(m);
        self.comps[c][idx] = value;
    }

    /// Plancherel: L³ Σ |c|² equals the L² norm squared of the real field.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.volume() * self.comps.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// Same as [`SpectralField::l2_norm_sq`] with the zero mode left out.
    pub fn l2_norm_sq_mean_free(&self) -> f64 {
        self.l2_norm_sq() - self.grid.volume() * self.comps.iter().map(|c| c[0].norm_sqr()).sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flat_map(|c| c.iter().map(|z| z.norm())).fold(0.0, f64::max)
    }

    /// Multiply every coefficient by `f(flat index)`.
    pub fn map_modes(&self, f: impl Fn(usize) -> f64) -> SpectralField {
        SpectralField {
            grid: self.grid.clone(),
            comps: self
                .comps
                .iter()
                .map(|c| c.iter().enumerate().map(|(i, &z)| z * f(i)).collect())
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> SpectralField {
        self.map_modes(|_| s)
    }

    pub fn zip_with(
        &self,
        other: &SpectralField,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<SpectralField> {
        if self.grid != other.grid || self.ncomp() != other.ncomp() {
            return Err(Error::Shape("spectral fields differ in grid or rank".into()));
        }
        Ok(SpectralField {
            grid: self.grid.clone(),
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        })
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    /// Largest |c(−m) − conj c(m)| over all modes and components.
    pub fn symmetry_defect(&self) -> f64 {
        let g = &self.grid;
        let mut defect: f64 = 0.0;
        let mirror = g.mirror_table();
        for c in &self.comps {
            for idx in 0..g.len() {
                defect = defect.max((c[mirror[idx] as usize] - c[idx].conj()).norm());
            }
        }
        defect
    }
}
