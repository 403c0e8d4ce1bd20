use super::{DiskFemError, DiskMesh, DEGENERATE_AREA, SOLVE_TOL, ZERO_MEAN_TOL};
use crate::par;
use crate::sparse::{CsrMatrix, SymmetricFactor};

/// Assembled P1 operators on a mesh together with the factorizations needed
/// by the scheme. Immutable after construction.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub mesh: DiskMesh,
    pub mass_bulk: CsrMatrix,
    pub stiff_bulk: CsrMatrix,
    pub mass_bdry: CsrMatrix,
    pub stiff_bdry: CsrMatrix,
    /// Row sums of the mass matrices (lumped mass weights).
    pub lumped_bulk: Vec<f64>,
    pub lumped_bdry: Vec<f64>,
    /// Boundary-local index -> bulk vertex index.
    pub trace_map: Vec<usize>,
    pub area: f64,
    pub length: f64,
    shifted_bulk: CsrMatrix,
    shifted_bdry: CsrMatrix,
    shifted_bulk_fac: SymmetricFactor,
    shifted_bdry_fac: SymmetricFactor,
    mass_bulk_fac: SymmetricFactor,
    mass_bdry_fac: SymmetricFactor,
    pinned_bulk: CsrMatrix,
    pinned_bdry: CsrMatrix,
    pinned_bulk_fac: SymmetricFactor,
    pinned_bdry_fac: SymmetricFactor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub h1: f64,
}

/// Element-wise assembly of bulk and boundary mass/stiffness matrices.
pub fn assemble(mesh: &DiskMesh) -> Result<DiscreteOperators, DiskFemError> {
    let n = mesh.n_bulk();
    let mut m_trip = Vec::with_capacity(9 * mesh.triangles.len());
    let mut k_trip = Vec::with_capacity(9 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|v| mesh.vertices[v]);
        let area = mesh.triangle_area(t);
        if !(area > DEGENERATE_AREA) {
            return Err(DiskFemError::DegenerateElement { triangle: t, area });
        }
        // gradients of the barycentric coordinates
        let mut grad = [[0.0; 2]; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            grad[i] = [(p[j][1] - p[k][1]) / (2.0 * area), (p[k][0] - p[j][0]) / (2.0 * area)];
        }
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { area / 6.0 } else { area / 12.0 };
                let k = area * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
                m_trip.push((tri[i], tri[j], m));
                k_trip.push((tri[i], tri[j], k));
            }
        }
    }
    let mass_bulk = CsrMatrix::from_triplets(n, n, m_trip);
    let stiff_bulk = CsrMatrix::from_triplets(n, n, k_trip);

    let nb = mesh.n_bdry();
    let mut mb_trip = Vec::with_capacity(4 * nb);
    let mut kb_trip = Vec::with_capacity(4 * nb);
    for s in 0..nb {
        let (a, b) = (s, (s + 1) % nb);
        let p = mesh.vertices[mesh.boundary_loop[a]];
        let q = mesh.vertices[mesh.boundary_loop[b]];
        let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
        if !(len > DEGENERATE_AREA) {
            return Err(DiskFemError::InvalidMesh(format!("boundary segment {s} has zero length")));
        }
        for (i, j) in [(a, a), (b, b)] {
            mb_trip.push((i, j, len / 3.0));
            kb_trip.push((i, j, 1.0 / len));
        }
        for (i, j) in [(a, b), (b, a)] {
            mb_trip.push((i, j, len / 6.0));
            kb_trip.push((i, j, -1.0 / len));
        }
    }
    let mass_bdry = CsrMatrix::from_triplets(nb, nb, mb_trip);
    let stiff_bdry = CsrMatrix::from_triplets(nb, nb, kb_trip);

    let lumped_bulk = mass_bulk.row_sums();
    let lumped_bdry = mass_bdry.row_sums();
    let area = lumped_bulk.iter().sum();
    let length = lumped_bdry.iter().sum();

    let shifted_bulk = CsrMatrix::combine(&[(1.0, &mass_bulk), (1.0, &stiff_bulk)]);
    let shifted_bdry = CsrMatrix::combine(&[(1.0, &mass_bdry), (1.0, &stiff_bdry)]);
    let pinned_bulk = stiff_bulk.without_index(0);
    let pinned_bdry = stiff_bdry.without_index(0);

    Ok(DiscreteOperators {
        mesh: mesh.clone(),
        shifted_bulk_fac: SymmetricFactor::new(&shifted_bulk)?,
        shifted_bdry_fac: SymmetricFactor::new(&shifted_bdry)?,
        mass_bulk_fac: SymmetricFactor::new(&mass_bulk)?,
        mass_bdry_fac: SymmetricFactor::new(&mass_bdry)?,
        pinned_bulk_fac: SymmetricFactor::new(&pinned_bulk)?,
        pinned_bdry_fac: SymmetricFactor::new(&pinned_bdry)?,
        mass_bulk,
        stiff_bulk,
        mass_bdry,
        stiff_bdry,
        lumped_bulk,
        lumped_bdry,
        trace_map: mesh.boundary_loop.clone(),
        area,
        length,
        shifted_bulk,
        shifted_bdry,
        pinned_bulk,
        pinned_bdry,
    })
}

/// Selects bulk or boundary operators.
#[derive(Clone, Copy)]
enum Side {
    Bulk,
    Bdry,
}

impl DiscreteOperators {
    pub fn n_bulk(&self) -> usize {
        self.mass_bulk.nrows()
    }

    pub fn n_bdry(&self) -> usize {
        self.mass_bdry.nrows()
    }

    /// Boundary restriction of a bulk field.
    pub fn trace(&self, v: &[f64]) -> Vec<f64> {
        self.trace_map.iter().map(|&i| v[i]).collect()
    }

    /// `out += T^T vb`, scattering a boundary vector into bulk numbering.
    pub fn add_trace_transpose(&self, out: &mut [f64], vb: &[f64]) {
        for (k, &i) in self.trace_map.iter().enumerate() {
            out[i] += vb[k];
        }
    }

    fn check_len(&self, side: Side, v: &[f64]) -> Result<(), DiskFemError> {
        let expected = match side {
            Side::Bulk => self.n_bulk(),
            Side::Bdry => self.n_bdry(),
        };
        if v.len() == expected {
            Ok(())
        } else {
            Err(DiskFemError::Dimension { expected, got: v.len() })
        }
    }

    fn parts(&self, side: Side) -> (&CsrMatrix, &CsrMatrix, &[f64], f64) {
        match side {
            Side::Bulk => (&self.mass_bulk, &self.stiff_bulk, &self.lumped_bulk, self.area),
            Side::Bdry => (&self.mass_bdry, &self.stiff_bdry, &self.lumped_bdry, self.length),
        }
    }

    fn mean(&self, side: Side, v: &[f64]) -> f64 {
        let (_, _, w, measure) = self.parts(side);
        par::sum_range(v.len(), |i| w[i] * v[i]) / measure
    }

    /// `m_Ω(v) = (1^T M v) / (1^T M 1)`.
    pub fn mean_bulk(&self, v: &[f64]) -> f64 {
        self.mean(Side::Bulk, v)
    }

    pub fn mean_bdry(&self, v: &[f64]) -> f64 {
        self.mean(Side::Bdry, v)
    }

    fn shifted_solve(&self, side: Side, v: &[f64]) -> Result<Vec<f64>, DiskFemError> {
        self.check_len(side, v)?;
        let (m, _, _, _) = self.parts(side);
        let (a, fac) = match side {
            Side::Bulk => (&self.shifted_bulk, &self.shifted_bulk_fac),
            Side::Bdry => (&self.shifted_bdry, &self.shifted_bdry_fac),
        };
        Ok(fac.solve_checked(a, &m.mul_vec(v), SOLVE_TOL)?)
    }

    /// Discrete `(I - Δ_N)^{-1} v`: solves `(M + K) u = M v`.
    pub fn inv_neumann_shifted(&self, v: &[f64]) -> Result<Vec<f64>, DiskFemError> {
        self.shifted_solve(Side::Bulk, v)
    }

    /// Discrete `(I - Δ_Γ)^{-1} v` on the boundary curve.
    pub fn inv_shifted_bdry(&self, v: &[f64]) -> Result<Vec<f64>, DiskFemError> {
        self.shifted_solve(Side::Bdry, v)
    }

    /// Solves `M u = rhs`.
    pub fn mass_solve_bulk(&self, rhs: &[f64]) -> Result<Vec<f64>, DiskFemError> {
        self.check_len(Side::Bulk, rhs)?;
        Ok(self.mass_bulk_fac.solve_checked(&self.mass_bulk, rhs, SOLVE_TOL)?)
    }

    pub fn mass_solve_bdry(&self, rhs: &[f64]) -> Result<Vec<f64>, DiskFemError> {
        self.check_len(Side::Bdry, rhs)?;
        Ok(self.mass_bdry_fac.solve_checked(&self.mass_bdry, rhs, SOLVE_TOL)?)
    }

    fn green(&self, side: Side, v: &[f64]) -> Result<Vec<f64>, DiskFemError> {
        self.check_len(side, v)?;
        let mean = self.mean(side, v);
        if mean.abs() > ZERO_MEAN_TOL {
            return Err(DiskFemError::NotZeroMean { mean });
        }
        let (m, _, _, _) = self.parts(side);
        let (pinned, fac) = match side {
            Side::Bulk => (&self.pinned_bulk, &self.pinned_bulk_fac),
            Side::Bdry => (&self.pinned_bdry, &self.pinned_bdry_fac),
        };
        let centred: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let rhs = m.mul_vec(&centred);
        // gauge u[0] = 0; the dropped equation follows from 1^T K = 0
        let mut u = vec![0.0];
        if rhs[1..].iter().any(|&x| x != 0.0) {
            u.extend(fac.solve_checked(pinned, &rhs[1..], SOLVE_TOL)?);
        } else {
            u.extend(std::iter::repeat_n(0.0, rhs.len() - 1));
        }
        let mu = self.mean(side, &u);
        u.iter_mut().for_each(|x| *x -= mu);
        Ok(u)
    }

    /// Discrete `N_Ω`: the zero-mean `u` with `K u = M v`, for zero-mean `v`.
    pub fn green_bulk(&self, v: &[f64]) -> Result<Vec<f64>, DiskFemError> {
        self.green(Side::Bulk, v)
    }

    /// Discrete `N_Γ` on the boundary curve.
    pub fn green_bdry(&self, v: &[f64]) -> Result<Vec<f64>, DiskFemError> {
        self.green(Side::Bdry, v)
    }

    fn dual_norm(&self, side: Side, v: &[f64]) -> Result<f64, DiskFemError> {
        self.check_len(side, v)?;
        let mean = self.mean(side, v);
        let centred: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let u = self.green(side, &centred)?;
        let (_, k, _, _) = self.parts(side);
        Ok(k.quad(&u).max(0.0).sqrt())
    }

    /// `|v - m(v)|_{V_0*}`: energy norm of the Green potential of the zero-mean part.
    pub fn dual_norm_bulk(&self, v: &[f64]) -> Result<f64, DiskFemError> {
        self.dual_norm(Side::Bulk, v)
    }

    pub fn dual_norm_bdry(&self, v: &[f64]) -> Result<f64, DiskFemError> {
        self.dual_norm(Side::Bdry, v)
    }

    /// Full `V*` surrogate: dual norm of the zero-mean part plus `|Ω|^{1/2} |m(v)|`.
    pub fn vstar_norm_bulk(&self, v: &[f64]) -> Result<f64, DiskFemError> {
        Ok(self.dual_norm_bulk(v)? + self.area.sqrt() * self.mean_bulk(v).abs())
    }

    pub fn vstar_norm_bdry(&self, v: &[f64]) -> Result<f64, DiskFemError> {
        Ok(self.dual_norm_bdry(v)? + self.length.sqrt() * self.mean_bdry(v).abs())
    }

    fn norms(&self, side: Side, v: &[f64]) -> Norms {
        let (m, k, _, _) = self.parts(side);
        let l2sq = m.quad(v).max(0.0);
        let semisq = k.quad(v).max(0.0);
        Norms { l2: l2sq.sqrt(), h1_semi: semisq.sqrt(), h1: (l2sq + semisq).sqrt() }
    }

    pub fn norms_bulk(&self, v: &[f64]) -> Norms {
        self.norms(Side::Bulk, v)
    }

    pub fn norms_bdry(&self, v: &[f64]) -> Norms {
        self.norms(Side::Bdry, v)
    }
}
