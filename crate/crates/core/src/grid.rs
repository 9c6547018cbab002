//! Structured box meshes with zero-flux boundaries, cell fields, and the
//! cell-centered finite-volume operator `b·I - div(κ∇·)`.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Axis-aligned box split into `cells[0] × cells[1] × cells[2]` cells.
///
/// Unused axes (beyond `dim`) have one cell and do not contribute to
/// volumes or faces. Cells are numbered with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    cells: [usize; 3],
    lengths: [f64; 3],
    spacing: [f64; 3],
}

/// An interior face between cells `lo` and `hi = lo + stride(axis)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub lo: usize,
    pub hi: usize,
    pub axis: usize,
}

pub fn build_mesh(dim: usize, cells_per_axis: &[usize], lengths: &[f64]) -> Result<Mesh> {
    if !(1..=3).contains(&dim) {
        return Err(Error::Mesh(format!("dimension must be 1, 2 or 3, got {dim}")));
    }
    if cells_per_axis.len() != dim || lengths.len() != dim {
        return Err(Error::Mesh(format!(
            "expected {dim} cell counts and lengths, got {} and {}",
            cells_per_axis.len(),
            lengths.len()
        )));
    }
    let mut cells = [1usize; 3];
    let mut len = [1.0f64; 3];
    let mut spacing = [1.0f64; 3];
    for a in 0..dim {
        if cells_per_axis[a] == 0 {
            return Err(Error::Mesh(format!("axis {a} has zero cells")));
        }
        if !(lengths[a].is_finite() && lengths[a] > 0.0) {
            return Err(Error::Mesh(format!("axis {a} length must be positive, got {}", lengths[a])));
        }
        cells[a] = cells_per_axis[a];
        len[a] = lengths[a];
        spacing[a] = lengths[a] / cells_per_axis[a] as f64;
    }
    Ok(Mesh { dim, cells, lengths: len, spacing })
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cell counts for the active axes.
    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    /// Cell counts padded to three axes with ones.
    pub fn cells3(&self) -> [usize; 3] {
        self.cells
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn domain_volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    /// Area of a face normal to `axis`.
    pub fn face_area(&self, axis: usize) -> f64 {
        self.cell_volume() / self.spacing[axis]
    }

    /// Area over center distance for faces normal to `axis`.
    pub fn face_transmissibility(&self, axis: usize) -> f64 {
        self.face_area(axis) / self.spacing[axis]
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.cells[..axis].iter().product()
    }

    pub fn coords(&self, cell: usize) -> [usize; 3] {
        let x = cell % self.cells[0];
        let y = (cell / self.cells[0]) % self.cells[1];
        let z = cell / (self.cells[0] * self.cells[1]);
        [x, y, z]
    }

    pub fn index(&self, coords: [usize; 3]) -> usize {
        coords[0] + self.cells[0] * (coords[1] + self.cells[1] * coords[2])
    }

    /// Cell center; inactive axes read 0.
    pub fn center(&self, cell: usize) -> [f64; 3] {
        let c = self.coords(cell);
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = (c[a] as f64 + 0.5) * self.spacing[a];
        }
        p
    }

    pub fn faces(&self) -> impl Iterator<Item = Face> + '_ {
        (0..self.dim).flat_map(move |axis| {
            let stride = self.stride(axis);
            (0..self.cell_count()).filter_map(move |lo| {
                let c = self.coords(lo);
                (c[axis] + 1 < self.cells[axis]).then_some(Face { lo, hi: lo + stride, axis })
            })
        })
    }

    pub fn face_count(&self) -> usize {
        (0..self.dim)
            .map(|a| (self.cells[a] - 1) * self.cell_count() / self.cells[a])
            .sum()
    }

    /// Neighbors of `cell` as `(neighbor, axis)` pairs.
    pub fn neighbors(&self, cell: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let c = self.coords(cell);
        (0..self.dim).flat_map(move |axis| {
            let stride = self.stride(axis);
            let below = (c[axis] > 0).then(|| (cell - stride, axis));
            let above = (c[axis] + 1 < self.cells[axis]).then(|| (cell + stride, axis));
            below.into_iter().chain(above)
        })
    }
}

/// One scalar per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.cell_count() {
            return Err(Error::FieldSize { expected: mesh.cell_count(), got: values.len() });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("field value at cell {bad} is not finite")));
        }
        Ok(Field(values))
    }

    /// Wraps raw values without checks; callers guarantee the length.
    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        Field(values)
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Self {
        Field(vec![value; mesh.cell_count()])
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        Self::constant(mesh, 0.0)
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn([f64; 3]) -> f64) -> Self {
        Field((0..mesh.cell_count()).map(|c| f(mesh.center(c))).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Volume-weighted sum.
    pub fn integral(&self, mesh: &Mesh) -> f64 {
        self.0.iter().sum::<f64>() * mesh.cell_volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.len(), other.len());
        Field(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub(crate) fn check_len(&self, mesh: &Mesh) -> Result<()> {
        if self.len() != mesh.cell_count() {
            return Err(Error::FieldSize { expected: mesh.cell_count(), got: self.len() });
        }
        Ok(())
    }
}

/// How the face diffusivity is formed from the two adjacent cell values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaceAveraging {
    #[default]
    Harmonic,
    Arithmetic,
}

impl FaceAveraging {
    pub fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            FaceAveraging::Harmonic => 2.0 * a * b / (a + b),
            FaceAveraging::Arithmetic => 0.5 * (a + b),
        }
    }
}

/// Symmetric M-matrix in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
}

const PAR_ROWS: usize = 8192;

impl DiscreteOperator {
    pub fn rows(&self) -> usize {
        self.diag.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Entries of `row` as `(column, value)`, diagonal included.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.row(row).find(|&(c, _)| c == col).map_or(0.0, |(_, v)| v)
    }

    pub fn row_sum(&self, row: usize) -> f64 {
        self.row(row).map(|(_, v)| v).sum()
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows());
        let row_dot = |r: usize| self.row(r).map(|(c, v)| v * x[c]).sum::<f64>();
        if self.rows() >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(r, out)| *out = row_dot(r));
        } else {
            for (r, out) in y.iter_mut().enumerate() {
                *out = row_dot(r);
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.rows();
        let mut m = vec![vec![0.0; n]; n];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        m
    }
}

pub fn assemble_operator(mesh: &Mesh, kappa: &Field, b: &Field) -> Result<DiscreteOperator> {
    assemble_operator_with(mesh, kappa, b, FaceAveraging::Harmonic)
}

/// Assembles `b·vol` on the diagonal plus two-point fluxes
/// `κ_f · area/spacing` on interior faces. Boundary faces carry no flux.
pub fn assemble_operator_with(
    mesh: &Mesh,
    kappa: &Field,
    b: &Field,
    averaging: FaceAveraging,
) -> Result<DiscreteOperator> {
    kappa.check_len(mesh)?;
    b.check_len(mesh)?;
    if let Some(c) = kappa.values().iter().position(|&k| !(k.is_finite() && k > 0.0)) {
        return Err(Error::invalid(format!(
            "diffusivity must be positive, got {} at cell {c}",
            kappa.values()[c]
        )));
    }
    if let Some(c) = b.values().iter().position(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::invalid(format!(
            "reaction coefficient must be positive, got {} at cell {c}",
            b.values()[c]
        )));
    }
    Ok(assemble_unchecked(mesh, kappa.values(), b.values(), averaging))
}

pub(crate) fn assemble_unchecked(
    mesh: &Mesh,
    kappa: &[f64],
    b: &[f64],
    averaging: FaceAveraging,
) -> DiscreteOperator {
    let n = mesh.cell_count();
    let vol = mesh.cell_volume();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(n * (2 * mesh.dim() + 1));
    let mut values = Vec::with_capacity(n * (2 * mesh.dim() + 1));
    let mut diag = Vec::with_capacity(n);
    let trans: Vec<f64> = (0..3)
        .map(|a| if a < mesh.dim() { mesh.face_transmissibility(a) } else { 0.0 })
        .collect();

    row_ptr.push(0);
    for c in 0..n {
        let mut d = b[c] * vol;
        let mut entries: Vec<(usize, f64)> = mesh
            .neighbors(c)
            .map(|(nb, axis)| {
                let t = averaging.combine(kappa[c], kappa[nb]) * trans[axis];
                d += t;
                (nb, -t)
            })
            .collect();
        entries.push((c, d));
        entries.sort_by_key(|&(col, _)| col);
        for (col, v) in entries {
            col_idx.push(col);
            values.push(v);
        }
        diag.push(d);
        row_ptr.push(col_idx.len());
    }
    DiscreteOperator { row_ptr, col_idx, values, diag }
}

/// Stiffness part alone (`κ ≡ 1`, no reaction), applied matrix-free.
pub(crate) fn apply_laplacian(mesh: &Mesh, x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for f in mesh.faces() {
        let t = mesh.face_transmissibility(f.axis);
        let flux = t * (x[f.lo] - x[f.hi]);
        y[f.lo] += flux;
        y[f.hi] -= flux;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `L²(Ω)`
    H,
    /// `H¹(Ω)`
    V,
    /// Dual of `H¹(Ω)`, through the discrete Riesz map.
    VDual,
}

pub fn norm_h_squared(mesh: &Mesh, v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() * mesh.cell_volume()
}

pub fn gradient_squared(mesh: &Mesh, v: &[f64]) -> f64 {
    mesh.faces()
        .map(|f| {
            let d = v[f.hi] - v[f.lo];
            mesh.face_transmissibility(f.axis) * d * d
        })
        .sum()
}

pub fn norm_v_squared(mesh: &Mesh, v: &[f64]) -> f64 {
    norm_h_squared(mesh, v) + gradient_squared(mesh, v)
}

/// `(u, v)_H`
pub fn inner_h(mesh: &Mesh, u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * mesh.cell_volume()
}

pub fn compute_norm(mesh: &Mesh, field: &Field, which: NormKind) -> f64 {
    let v = field.values();
    match which {
        NormKind::H => norm_h_squared(mesh, v).sqrt(),
        NormKind::V => norm_v_squared(mesh, v).sqrt(),
        NormKind::VDual => dual_norm(mesh, v),
    }
}

/// Solves `(I - Δ_h) w = g` and returns `‖w‖_V = sqrt(⟨g, w⟩)`.
fn dual_norm(mesh: &Mesh, g: &[f64]) -> f64 {
    RieszMap::new(mesh).dual_norm(g)
}

/// The discrete Riesz map of `V`, assembled once for repeated dual norms.
#[derive(Debug, Clone)]
pub struct RieszMap {
    op: DiscreteOperator,
    vol: f64,
}

impl RieszMap {
    pub fn new(mesh: &Mesh) -> Self {
        let ones = vec![1.0; mesh.cell_count()];
        RieszMap {
            op: assemble_unchecked(mesh, &ones, &ones, FaceAveraging::Harmonic),
            vol: mesh.cell_volume(),
        }
    }

    /// Representer `w` of the functional `v ↦ (g, v)_H` in the `V` inner product.
    pub fn representer(&self, g: &[f64]) -> Vec<f64> {
        let n = self.op.rows();
        let rhs: Vec<f64> = g.iter().map(|x| x * self.vol).collect();
        if rhs.iter().all(|&x| x == 0.0) {
            return vec![0.0; n];
        }
        crate::elliptic::conjugate_gradient(&self.op, &rhs, 1e-13, 20 * n + 100).0
    }

    pub fn dual_norm(&self, g: &[f64]) -> f64 {
        let w = self.representer(g);
        let pairing: f64 = g.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() * self.vol;
        pairing.max(0.0).sqrt()
    }
}

pub const SNAPSHOT_HEADER_LEN: usize = 64;

/// Writes a field as a 64-byte text header followed by little-endian `f64`s.
pub fn write_field(mut out: impl Write, mesh: &Mesh, field: &Field) -> Result<()> {
    field.check_len(mesh)?;
    let [nx, ny, nz] = mesh.cells3();
    let mut header = format!("SEIRD-FIELD v1 dim={} nx={nx} ny={ny} nz={nz}\n", mesh.dim());
    if header.len() > SNAPSHOT_HEADER_LEN {
        return Err(Error::invalid("mesh too large for snapshot header"));
    }
    while header.len() < SNAPSHOT_HEADER_LEN {
        header.push(' ');
    }
    out.write_all(header.as_bytes())?;
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// A decoded snapshot: dimension, cells per axis (padded to three), values.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dim: usize,
    pub cells: [usize; 3],
    pub values: Vec<f64>,
}

pub fn read_field(mut input: impl Read) -> Result<Snapshot> {
    let mut header = [0u8; SNAPSHOT_HEADER_LEN];
    input.read_exact(&mut header)?;
    let text = std::str::from_utf8(&header)
        .map_err(|_| Error::invalid("snapshot header is not ASCII"))?;
    let mut tokens = text.split_whitespace();
    if tokens.next() != Some("SEIRD-FIELD") || tokens.next() != Some("v1") {
        return Err(Error::invalid("not a SEIRD-FIELD v1 snapshot"));
    }
    let mut dim = None;
    let mut cells = [1usize; 3];
    for tok in tokens {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("bad header token `{tok}`")))?;
        let val: usize = val
            .parse()
            .map_err(|_| Error::invalid(format!("bad header value `{tok}`")))?;
        match key {
            "dim" => dim = Some(val),
            "nx" => cells[0] = val,
            "ny" => cells[1] = val,
            "nz" => cells[2] = val,
            _ => return Err(Error::invalid(format!("unknown header key `{key}`"))),
        }
    }
    let dim = dim.ok_or_else(|| Error::invalid("snapshot header lacks dim"))?;
    let count: usize = cells.iter().product();
    let mut bytes = vec![0u8; count * 8];
    input.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Snapshot { dim, cells, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_mesh() {
        let m = build_mesh(1, &[4], &[1.0]).unwrap();
        assert_eq!(m.spacing(), &[0.25]);
        assert_eq!(m.cell_count(), 4);
        let faces: Vec<_> = m.faces().map(|f| (f.lo, f.hi)).collect();
        assert_eq!(faces, vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(m.neighbors(2).count(), 2);
        assert_eq!(m.neighbors(0).count(), 1);
    }

    #[test]
    fn face_counts() {
        let m = build_mesh(2, &[3, 2], &[1.0, 1.0]).unwrap();
        assert_eq!(m.cell_count(), 6);
        assert_eq!(m.faces().count(), 7);
        assert_eq!(m.face_count(), 7);
        let m = build_mesh(3, &[2, 2, 2], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.cell_count(), 8);
        assert_eq!(m.faces().count(), 12);
        let m = build_mesh(3, &[4, 3, 5], &[1.0, 1.0, 1.0]).unwrap();
        let interior = m.index([1, 1, 2]);
        assert_eq!(m.neighbors(interior).count(), 6);
    }

    #[test]
    fn mesh_errors() {
        assert!(build_mesh(1, &[0], &[1.0]).is_err());
        assert!(build_mesh(2, &[2, 2], &[1.0, 0.0]).is_err());
        assert!(build_mesh(4, &[1, 1, 1, 1], &[1.0; 4]).is_err());
        assert!(build_mesh(2, &[2], &[1.0]).is_err());
    }

    #[test]
    fn two_cell_stencil() {
        let h = 0.5;
        let m = build_mesh(1, &[2], &[2.0 * h]).unwrap();
        let (k, beta) = (3.0, 2.0);
        let op = assemble_operator(&m, &Field::constant(&m, k), &Field::constant(&m, beta)).unwrap();
        let (vol, area) = (m.cell_volume(), m.face_area(0));
        let d = beta * vol + k * area / h;
        assert_eq!(op.to_dense(), vec![vec![d, -k * area / h], vec![-k * area / h, d]]);
    }

    #[test]
    fn harmonic_face_value() {
        let m = build_mesh(1, &[2], &[2.0]).unwrap();
        let kappa = Field::new(&m, vec![1.0, 3.0]).unwrap();
        let op = assemble_operator(&m, &kappa, &Field::constant(&m, 1.0)).unwrap();
        assert!((-op.get(0, 1) - 2.0 * 1.0 * 3.0 / 4.0).abs() < 1e-15);
        let op = assemble_operator_with(&m, &kappa, &Field::constant(&m, 1.0), FaceAveraging::Arithmetic)
            .unwrap();
        assert!((-op.get(0, 1) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_coefficients() {
        let m = build_mesh(1, &[3], &[1.0]).unwrap();
        let ok = Field::constant(&m, 1.0);
        let bad = Field::new(&m, vec![1.0, 0.0, 1.0]).unwrap();
        assert!(assemble_operator(&m, &bad, &ok).is_err());
        assert!(assemble_operator(&m, &ok, &bad).is_err());
    }

    #[test]
    fn constants_are_annihilated_by_diffusion() {
        let m = build_mesh(2, &[5, 4], &[1.0, 0.7]).unwrap();
        let kappa = Field::from_fn(&m, |p| 1.0 + p[0] * p[1]);
        let op = assemble_operator(&m, &kappa, &Field::constant(&m, 2.5)).unwrap();
        let x = vec![3.0; m.cell_count()];
        let mut y = vec![0.0; m.cell_count()];
        op.apply(&x, &mut y);
        for v in y {
            assert!((v - 2.5 * 3.0 * m.cell_volume()).abs() < 1e-12);
        }
    }

    #[test]
    fn m_matrix_structure() {
        let m = build_mesh(2, &[6, 5], &[1.0, 1.0]).unwrap();
        let kappa = Field::from_fn(&m, |p| 0.1 + p[0]);
        let b = Field::from_fn(&m, |p| 1.0 + p[1]);
        let op = assemble_operator(&m, &kappa, &b).unwrap();
        for r in 0..op.rows() {
            assert!(op.diagonal()[r] > 0.0);
            for (c, v) in op.row(r) {
                if c != r {
                    assert!(v <= 0.0);
                    assert_eq!(v, op.get(c, r));
                }
            }
            assert!(op.row_sum(r) >= m.cell_volume() * b.min() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn constant_field_norms() {
        let m = build_mesh(2, &[4, 4], &[1.0, 1.0]).unwrap();
        let f = Field::constant(&m, -1.5);
        assert!((compute_norm(&m, &f, NormKind::H) - 1.5).abs() < 1e-14);
        assert!((compute_norm(&m, &f, NormKind::V) - 1.5).abs() < 1e-14);
        assert!((compute_norm(&m, &f, NormKind::VDual) - 1.5).abs() < 1e-10);
        let z = Field::zeros(&m);
        for k in [NormKind::H, NormKind::V, NormKind::VDual] {
            assert_eq!(compute_norm(&m, &z, k), 0.0);
        }
    }

    #[test]
    fn snapshot_roundtrip_and_header() {
        let m = build_mesh(2, &[3, 2], &[1.0, 1.0]).unwrap();
        let f = Field::from_fn(&m, |p| p[0] - 2.0 * p[1]);
        let mut buf = Vec::new();
        write_field(&mut buf, &m, &f).unwrap();
        assert_eq!(buf.len(), 64 + 6 * 8);
        assert!(buf.starts_with(b"SEIRD-FIELD v1 dim=2 nx=3 ny=2 nz=1\n "));
        assert_eq!(buf[63], b' ');
        assert_eq!(&buf[64..72], &f.values()[0].to_le_bytes());
        let snap = read_field(&buf[..]).unwrap();
        assert_eq!(snap.dim, 2);
        assert_eq!(snap.cells, [3, 2, 1]);
        assert_eq!(snap.values, f.values());
    }

    #[test]
    fn snapshot_rejects_garbage() {
        let buf = vec![b'x'; 80];
        assert!(read_field(&buf[..]).is_err());
    }
}
