use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use super::DiskFemError;

/// Triangulation of a planar domain whose boundary is a single closed polyline.
///
/// `boundary_loop[k]` is the bulk index of the k-th boundary vertex; boundary
/// fields are stored in this loop order.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_loop: Vec<usize>,
}

pub(crate) fn signed_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

/// Structured triangulation of the unit disk: a centre vertex, `n_rings`
/// concentric rings of `n_sectors` vertices each, fan triangles at the centre
/// and two triangles per ring cell. The outermost ring is the boundary loop,
/// traversed counter-clockwise.
pub fn gen_disk_mesh(n_rings: usize, n_sectors: usize) -> Result<DiskMesh, DiskFemError> {
    if n_rings < 1 || n_sectors < 3 {
        return Err(DiskFemError::InvalidMesh(format!(
            "need n_rings >= 1 and n_sectors >= 3, got ({n_rings}, {n_sectors})"
        )));
    }
    let idx = |ring: usize, j: usize| 1 + (ring - 1) * n_sectors + (j % n_sectors);
    let mut vertices = Vec::with_capacity(1 + n_rings * n_sectors);
    vertices.push([0.0, 0.0]);
    for ring in 1..=n_rings {
        let rad = ring as f64 / n_rings as f64;
        for j in 0..n_sectors {
            let th = 2.0 * PI * j as f64 / n_sectors as f64;
            vertices.push([rad * th.cos(), rad * th.sin()]);
        }
    }
    let mut triangles = Vec::with_capacity(n_sectors * (2 * n_rings - 1));
    for j in 0..n_sectors {
        triangles.push([0, idx(1, j), idx(1, j + 1)]);
    }
    for ring in 1..n_rings {
        for j in 0..n_sectors {
            let a = idx(ring, j);
            let b = idx(ring, j + 1);
            let c = idx(ring + 1, j + 1);
            let d = idx(ring + 1, j);
            triangles.push([a, d, c]);
            triangles.push([a, c, b]);
        }
    }
    let boundary_loop = (0..n_sectors).map(|j| idx(n_rings, j)).collect();
    Ok(DiskMesh { vertices, triangles, boundary_loop })
}

impl DiskMesh {
    pub fn n_bulk(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_bdry(&self) -> usize {
        self.boundary_loop.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Polygon area as the sum of signed triangle areas.
    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Length of the closed boundary polyline.
    pub fn boundary_length(&self) -> f64 {
        let n = self.boundary_loop.len();
        (0..n)
            .map(|k| {
                let p = self.vertices[self.boundary_loop[k]];
                let q = self.vertices[self.boundary_loop[(k + 1) % n]];
                ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
            })
            .sum()
    }

    /// Checks index bounds, orientation, and that `boundary_loop` traces every
    /// boundary edge exactly once as a single closed cycle.
    pub fn validate(&self) -> Result<(), DiskFemError> {
        let n = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(DiskFemError::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let area = self.triangle_area(t);
            if !(area > super::DEGENERATE_AREA) {
                return Err(DiskFemError::DegenerateElement { triangle: t, area });
            }
        }
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        if let Some((e, c)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return Err(DiskFemError::InvalidMesh(format!("edge {e:?} shared by {c} triangles")));
        }
        let mut boundary_edges: Vec<(usize, usize)> =
            edge_count.into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect();
        boundary_edges.sort_unstable();

        let m = self.boundary_loop.len();
        if m < 3 {
            return Err(DiskFemError::InvalidMesh("boundary loop needs at least 3 vertices".into()));
        }
        let mut seen = vec![false; n];
        for &v in &self.boundary_loop {
            if v >= n || seen[v] {
                return Err(DiskFemError::InvalidMesh(format!("boundary vertex {v} invalid or repeated")));
            }
            seen[v] = true;
        }
        let mut loop_edges: Vec<(usize, usize)> = (0..m)
            .map(|k| {
                let (a, b) = (self.boundary_loop[k], self.boundary_loop[(k + 1) % m]);
                (a.min(b), a.max(b))
            })
            .collect();
        loop_edges.sort_unstable();
        if loop_edges != boundary_edges {
            return Err(DiskFemError::InvalidMesh(format!(
                "boundary loop ({} edges) does not match the {} boundary edges of the triangulation",
                m,
                boundary_edges.len()
            )));
        }
        Ok(())
    }

    /// Text serialisation: `vertices N`, N lines `x y`, `triangles M`, M lines
    /// `i j k`, `boundary B`, then B indices (0-based) in loop order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.17e} {:.17e}", v[0], v[1]);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "boundary {}", self.boundary_loop.len());
        for b in &self.boundary_loop {
            let _ = writeln!(s, "{b}");
        }
        s
    }

    /// Parses the text format written by [`DiskMesh::to_text`]. Boundary
    /// indices may be split across lines. The result is validated.
    pub fn from_text(text: &str) -> Result<DiskMesh, DiskFemError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let parse_err = |line: usize, msg: String| DiskFemError::Parse { line, msg };

        let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "missing 'vertices' header".into()))?;
        let nv = parse_header(l, "vertices").ok_or_else(|| parse_err(ln, "expected 'vertices <count>'".into()))?;

        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "truncated vertex list".into()))?;
            let xs: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| parse_err(ln, format!("bad coordinate: {e}")))?;
            if xs.len() != 2 {
                return Err(parse_err(ln, "expected 2 coordinates".into()));
            }
            vertices.push([xs[0], xs[1]]);
        }

        let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "missing 'triangles' header".into()))?;
        let nt = parse_header(l, "triangles").ok_or_else(|| parse_err(ln, "expected 'triangles <count>'".into()))?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "truncated triangle list".into()))?;
            let ix: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| parse_err(ln, format!("bad index: {e}")))?;
            if ix.len() != 3 {
                return Err(parse_err(ln, "expected 3 vertex indices".into()));
            }
            triangles.push([ix[0], ix[1], ix[2]]);
        }

        let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "missing 'boundary' header".into()))?;
        let nb = parse_header(l, "boundary").ok_or_else(|| parse_err(ln, "expected 'boundary <count>'".into()))?;
        let mut boundary_loop = Vec::with_capacity(nb);
        for (ln, l) in lines.by_ref() {
            for t in l.split_whitespace() {
                boundary_loop.push(t.parse::<usize>().map_err(|e| parse_err(ln, format!("bad index: {e}")))?);
            }
            if boundary_loop.len() >= nb {
                break;
            }
        }
        if boundary_loop.len() != nb {
            return Err(parse_err(0, format!("expected {nb} boundary indices, found {}", boundary_loop.len())));
        }
        if let Some((ln, _)) = lines.next() {
            return Err(parse_err(ln, "trailing content after boundary list".into()));
        }
        let mesh = DiskMesh { vertices, triangles, boundary_loop };
        mesh.validate()?;
        Ok(mesh)
    }
}

fn parse_header(line: &str, name: &str) -> Option<usize> {
    let mut it = line.split_whitespace();
    (it.next() == Some(name)).then_some(())?;
    it.next()?.parse().ok()
}
