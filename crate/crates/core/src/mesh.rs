//! Background triangulations, agglomeration into polygonal cells, facet
//! topology and mesh-regularity diagnostics.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{incircle_radius, min_enclosing_circle, signed_area, triangle_contains, Point};

/// A conforming triangulation with counterclockwise triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<[usize; 2]>,
    edges: Vec<MeshEdge>,
    /// Per triangle, the index into `edges` of the edge opposite each vertex.
    triangle_edges: Vec<[usize; 3]>,
}

/// An edge of the background triangulation and the (one or two) triangles
/// that share it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeshEdge {
    pub vertices: [usize; 2],
    pub triangles: (usize, Option<usize>),
}

impl TriMesh {
    /// Validates the connectivity and derives the edge table. Clockwise
    /// triangles are reoriented; degenerate triangles and edges shared by more
    /// than two triangles are rejected.
    pub fn new(vertices: Vec<Point>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::Topology(format!("triangle {t} references a missing vertex")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area == 0.0 || !area.is_finite() {
                return Err(Error::Topology(format!("triangle {t} is degenerate")));
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut half: Vec<([usize; 2], usize, usize)> = Vec::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for local in 0..3 {
                let a = tri[(local + 1) % 3];
                let b = tri[(local + 2) % 3];
                half.push(([a.min(b), a.max(b)], t, local));
            }
        }
        half.sort_unstable();

        let mut edges = Vec::new();
        let mut triangle_edges = vec![[usize::MAX; 3]; triangles.len()];
        let mut i = 0;
        while i < half.len() {
            let mut j = i + 1;
            while j < half.len() && half[j].0 == half[i].0 {
                j += 1;
            }
            let e = edges.len();
            let tris = match j - i {
                1 => (half[i].1, None),
                2 => (half[i].1, Some(half[i + 1].1)),
                c => {
                    return Err(Error::Topology(format!(
                        "edge {:?} is shared by {c} triangles",
                        half[i].0
                    )))
                }
            };
            for h in &half[i..j] {
                triangle_edges[h.1][h.2] = e;
            }
            edges.push(MeshEdge {
                vertices: half[i].0,
                triangles: tris,
            });
            i = j;
        }

        // Boundary edges oriented counterclockwise as seen from their triangle.
        let boundary_edges = edges
            .iter()
            .filter(|e| e.triangles.1.is_none())
            .map(|e| {
                let tri = triangles[e.triangles.0];
                let pos = tri.iter().position(|&v| v == e.vertices[0]).unwrap();
                if tri[(pos + 1) % 3] == e.vertices[1] {
                    e.vertices
                } else {
                    [e.vertices[1], e.vertices[0]]
                }
            })
            .collect();

        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            edges,
            triangle_edges,
        })
    }

    pub fn edges(&self) -> &[MeshEdge] {
        &self.edges
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Triangles sharing an edge with `t`, in local edge order.
    pub fn neighbors(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.triangle_edges[t].iter().filter_map(move |&e| {
            let (a, b) = self.edges[e].triangles;
            match b {
                Some(b) if a == t => Some(b),
                Some(_) => Some(a),
                None => None,
            }
        })
    }

    /// Lowest-index triangle whose closure contains `p`.
    pub fn locate(&self, p: Point) -> Option<usize> {
        (0..self.triangles.len()).find(|&t| {
            let [a, b, c] = self.triangle_points(t);
            triangle_contains(a, b, c, p)
        })
    }
}

/// Structured triangulation of the unit square: a uniform `4n × 4n` grid of
/// squares, each split along its `(0,0)–(1,1)` diagonal.
pub fn generate_background(n: usize) -> Result<TriMesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("mesh parameter n must be positive".into()));
    }
    let m = 4 * n;
    let h = 1.0 / m as f64;
    let vid = |i: usize, j: usize| i + j * (m + 1);
    let vertices = (0..=m)
        .flat_map(|j| (0..=m).map(move |i| Point::new(i as f64 * h, j as f64 * h)))
        .collect();
    let mut triangles = Vec::with_capacity(2 * m * m);
    for j in 0..m {
        for i in 0..m {
            let (v00, v10, v11, v01) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    TriMesh::new(vertices, triangles)
}

/// How facet length scales `h_E` are chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HeMode {
    /// Harmonic mean `2 (1/h_T1 + 1/h_T2)^{-1}` on interior facets, `h_T` on
    /// boundary facets.
    Facet,
    /// The same value on every facet.
    Uniform(f64),
}

/// Facet-length-scale selector without the uniform value, as named in
/// configuration files and on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeModeKind {
    #[default]
    Facet,
    Uniform,
}

impl FromStr for HeModeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "facet" => Ok(Self::Facet),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::Config(format!("unknown he_mode `{other}` (facet|uniform)"))),
        }
    }
}

impl fmt::Display for HeModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Facet => "facet",
            Self::Uniform => "uniform",
        })
    }
}

/// One background edge of a facet with its unit normal, oriented from the
/// first cell to the second (outward on the boundary).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FacetEdge {
    pub endpoints: [Point; 2],
    pub normal: Point,
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FacetKind {
    Interior,
    Boundary,
}

/// Interface between two cells, or between a cell and ∂Ω: a chain of
/// background edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    /// `(T1, Some(T2))` with `T1 < T2` for interior facets, `(T, None)` on ∂Ω.
    pub cells: (usize, Option<usize>),
    pub edges: Vec<FacetEdge>,
    pub h_e: f64,
}

impl Facet {
    pub fn kind(&self) -> FacetKind {
        match self.cells.1 {
            Some(_) => FacetKind::Interior,
            None => FacetKind::Boundary,
        }
    }

    pub fn length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }
}

/// Polygonal mesh whose cells are sets of background triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMesh {
    pub tri: Arc<TriMesh>,
    pub cells: Vec<Vec<usize>>,
    pub cell_of_triangle: Vec<usize>,
    /// Per-cell reference point; the monomial basis is shifted to it.
    pub seeds: Vec<Point>,
    /// Cell diameters.
    pub h_t: Vec<f64>,
    /// Empty until [`build_topology`] runs.
    pub facets: Vec<Facet>,
    /// Present for meshes generated from the `n × n` seed lattice.
    pub nominal_n: Option<usize>,
}

impl PolyMesh {
    /// Builds a mesh from an explicit triangle-to-cell map. Seeds are the cell
    /// centroids.
    pub fn from_partition(tri: Arc<TriMesh>, cell_of_triangle: Vec<usize>) -> Result<Self> {
        if cell_of_triangle.len() != tri.triangles.len() {
            return Err(Error::Topology(format!(
                "{} cell labels for {} triangles",
                cell_of_triangle.len(),
                tri.triangles.len()
            )));
        }
        let ncells = cell_of_triangle.iter().max().map_or(0, |m| m + 1);
        let mut cells = vec![Vec::new(); ncells];
        for (t, &c) in cell_of_triangle.iter().enumerate() {
            cells[c].push(t);
        }
        if let Some(c) = cells.iter().position(|c| c.is_empty()) {
            return Err(Error::Topology(format!("cell {c} has no triangles")));
        }
        let seeds = cells
            .iter()
            .map(|ts| {
                let mut area = 0.0;
                let mut c = Point::default();
                for &t in ts {
                    let [a, b, d] = tri.triangle_points(t);
                    let w = signed_area(a, b, d);
                    area += w;
                    c = c + (w / 3.0) * (a + b + d);
                }
                (1.0 / area) * c
            })
            .collect();
        let mesh = Self::assemble(tri, cells, cell_of_triangle, seeds, None);
        mesh.check_connected()?;
        Ok(mesh)
    }

    fn assemble(
        tri: Arc<TriMesh>,
        cells: Vec<Vec<usize>>,
        cell_of_triangle: Vec<usize>,
        seeds: Vec<Point>,
        nominal_n: Option<usize>,
    ) -> Self {
        let h_t = cells.iter().map(|ts| cell_diameter(&tri, ts)).collect();
        Self {
            tri,
            cells,
            cell_of_triangle,
            seeds,
            h_t,
            facets: Vec::new(),
            nominal_n,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn has_topology(&self) -> bool {
        !self.facets.is_empty()
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        self.cells[c].iter().map(|&t| self.tri.triangle_area(t)).sum()
    }

    /// Distinct background vertices of a cell, ascending.
    pub fn cell_vertices(&self, c: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self.cells[c]
            .iter()
            .flat_map(|&t| self.tri.triangles[t])
            .collect();
        set.into_iter().collect()
    }

    /// Boundary of every cell as background edges with outward unit normals.
    pub fn cell_boundaries(&self) -> Vec<Vec<FacetEdge>> {
        let mut out = vec![Vec::new(); self.num_cells()];
        for f in &self.facets {
            out[f.cells.0].extend(f.edges.iter().copied());
            if let Some(c2) = f.cells.1 {
                out[c2].extend(f.edges.iter().map(|e| FacetEdge {
                    normal: -1.0 * e.normal,
                    ..*e
                }));
            }
        }
        out
    }

    /// `|∂T|` per cell.
    pub fn cell_perimeters(&self) -> Vec<f64> {
        self.cell_boundaries()
            .iter()
            .map(|es| es.iter().map(|e| e.length).sum())
            .collect()
    }

    fn check_connected(&self) -> Result<()> {
        for (c, ts) in self.cells.iter().enumerate() {
            let mut seen = BTreeSet::from([ts[0]]);
            let mut stack = vec![ts[0]];
            while let Some(t) = stack.pop() {
                for nb in self.tri.neighbors(t) {
                    if self.cell_of_triangle[nb] == c && seen.insert(nb) {
                        stack.push(nb);
                    }
                }
            }
            if seen.len() != ts.len() {
                return Err(Error::Topology(format!("cell {c} is not edge-connected")));
            }
        }
        Ok(())
    }

    /// Reads the JSON mesh format
    /// `{"vertices": [[x,y],…], "triangles": [[a,b,c],…], "cell_of_triangle": [m,…]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: MeshFile = serde_json::from_str(text)?;
        let tri = TriMesh::new(file.vertices, file.triangles)?;
        Self::from_partition(Arc::new(tri), file.cell_of_triangle)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = MeshFile {
            vertices: self.tri.vertices.clone(),
            triangles: self.tri.triangles.clone(),
            cell_of_triangle: self.cell_of_triangle.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    cell_of_triangle: Vec<usize>,
}

fn cell_diameter(tri: &TriMesh, ts: &[usize]) -> f64 {
    let verts: BTreeSet<usize> = ts.iter().flat_map(|&t| tri.triangles[t]).collect();
    let pts: Vec<Point> = verts.into_iter().map(|v| tri.vertices[v]).collect();
    let mut d = 0.0_f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d = d.max(pts[i].dist(pts[j]));
        }
    }
    d
}

/// Seed point of cell `i + j n` (0-based `i, j`) on the `n × n` lattice.
pub fn lattice_seed(n: usize, m: usize) -> Point {
    let (i, j) = (m % n, m / n);
    Point::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64)
}

/// Agglomerates the triangles of `tri` into `n²` cells grown from the seed
/// lattice.
///
/// Each cell starts from the lowest-index triangle containing its seed. Then,
/// round after round, every cell in ascending order absorbs all still
/// unattributed triangles adjacent to the triangles it gained in the previous
/// round.
pub fn agglomerate(tri: Arc<TriMesh>, n: usize) -> Result<PolyMesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("mesh parameter n must be positive".into()));
    }
    let ncells = n * n;
    let ntri = tri.triangles.len();
    const UNSET: usize = usize::MAX;
    let mut owner = vec![UNSET; ntri];
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); ncells];
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new(); ncells];
    let mut seeds = Vec::with_capacity(ncells);

    for m in 0..ncells {
        let seed = lattice_seed(n, m);
        let t = tri
            .locate(seed)
            .ok_or_else(|| Error::Topology(format!("seed of cell {m} at {seed:?} is outside the mesh")))?;
        if owner[t] != UNSET {
            return Err(Error::Topology(format!(
                "seeds of cells {} and {m} fall in the same triangle {t}",
                owner[t]
            )));
        }
        owner[t] = m;
        cells[m].push(t);
        frontier[m].push(t);
        seeds.push(seed);
    }

    let mut assigned = ncells;
    while assigned < ntri {
        let mut progressed = false;
        for m in 0..ncells {
            let mut gained: Vec<usize> = frontier[m]
                .iter()
                .flat_map(|&t| tri.neighbors(t))
                .filter(|&nb| owner[nb] == UNSET)
                .collect();
            gained.sort_unstable();
            gained.dedup();
            for &t in &gained {
                owner[t] = m;
            }
            assigned += gained.len();
            progressed |= !gained.is_empty();
            cells[m].extend_from_slice(&gained);
            frontier[m] = gained;
        }
        if !progressed {
            return Err(Error::Topology(format!(
                "{} triangles are unreachable from any seed",
                ntri - assigned
            )));
        }
    }
    for ts in &mut cells {
        ts.sort_unstable();
    }
    Ok(PolyMesh::assemble(tri, cells, owner, seeds, Some(n)))
}

/// Generated `n × n` agglomerated mesh of the unit square with topology.
pub fn generate(n: usize, mode: HeModeKind) -> Result<PolyMesh> {
    let tri = Arc::new(generate_background(n)?);
    let poly = agglomerate(tri, n)?;
    let he = match mode {
        HeModeKind::Facet => HeMode::Facet,
        HeModeKind::Uniform => HeMode::Uniform(1.0 / n as f64),
    };
    build_topology(poly, he)
}

/// Extracts facets between cells and on ∂Ω and sets their length scales.
pub fn build_topology(mut poly: PolyMesh, mode: HeMode) -> Result<PolyMesh> {
    if let HeMode::Uniform(h) = mode {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("uniform h_E must be positive, got {h}")));
        }
    }
    let tri = Arc::clone(&poly.tri);
    // (T1, T2 or MAX for boundary) -> facet edges; BTreeMap keeps the order fixed.
    let mut groups: std::collections::BTreeMap<(usize, usize), Vec<FacetEdge>> = Default::default();

    for e in tri.edges() {
        let [va, vb] = e.vertices;
        let (pa, pb) = (tri.vertices[va], tri.vertices[vb]);
        let length = pa.dist(pb);
        let (t_a, t_b) = e.triangles;
        let c_a = poly.cell_of_triangle[t_a];
        let (first_tri, key) = match t_b {
            None => (t_a, (c_a, usize::MAX)),
            Some(t_b) => {
                let c_b = poly.cell_of_triangle[t_b];
                if c_a == c_b {
                    continue;
                }
                if c_a < c_b {
                    (t_a, (c_a, c_b))
                } else {
                    (t_b, (c_b, c_a))
                }
            }
        };
        // Normal pointing away from the triangle on the T1 side.
        let d = pb - pa;
        let mut normal = (1.0 / length) * Point::new(d.y, -d.x);
        let apex = tri.triangles[first_tri]
            .into_iter()
            .find(|&v| v != va && v != vb)
            .unwrap();
        if normal.dot(tri.vertices[apex] - pa) > 0.0 {
            normal = -1.0 * normal;
        }
        groups.entry(key).or_default().push(FacetEdge {
            endpoints: [pa, pb],
            normal,
            length,
        });
    }

    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for ((c1, c2), edges) in groups {
        if edges.iter().map(|e| e.length).sum::<f64>() <= 0.0 {
            return Err(Error::Topology(format!("facet ({c1}, {c2}) has zero length")));
        }
        if c2 == usize::MAX {
            let h_e = match mode {
                HeMode::Facet => poly.h_t[c1],
                HeMode::Uniform(h) => h,
            };
            boundary.push(Facet {
                cells: (c1, None),
                edges,
                h_e,
            });
        } else {
            let h_e = match mode {
                HeMode::Facet => 2.0 / (1.0 / poly.h_t[c1] + 1.0 / poly.h_t[c2]),
                HeMode::Uniform(h) => h,
            };
            interior.push(Facet {
                cells: (c1, Some(c2)),
                edges,
                h_e,
            });
        }
    }
    interior.extend(boundary);
    poly.facets = interior;
    Ok(poly)
}

/// Per-cell regularity measures.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellQuality {
    pub cell: usize,
    pub area: f64,
    pub h_t: f64,
    /// Radius of the smallest enclosing circle.
    pub r_outer: f64,
    /// Largest incircle among the cell's triangles; a lower bound on the
    /// radius of the largest inscribed ball.
    pub r_inner: f64,
    pub perimeter: f64,
    /// Upper estimate of `R_T / r_T`.
    pub rho1: f64,
    /// Largest `h_T / h_T'` over cells `T'` whose enclosing balls meet that of `T`.
    pub rho2: f64,
    /// `|∂T| / h_T`.
    pub rho3: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QualityReport {
    pub num_cells: usize,
    pub rho1_max: f64,
    pub rho2_max: f64,
    pub rho3_max: f64,
    pub cells: Vec<CellQuality>,
}

/// Shape regularity (ρ1), local quasi-uniformity (ρ2) and boundary
/// wiggliness (ρ3) of a mesh with topology.
pub fn quality_report(poly: &PolyMesh) -> Result<QualityReport> {
    if !poly.has_topology() {
        return Err(Error::MissingTopology);
    }
    let perimeters = poly.cell_perimeters();
    let balls: Vec<(Point, f64)> = (0..poly.num_cells())
        .map(|c| {
            let pts: Vec<Point> = poly
                .cell_vertices(c)
                .into_iter()
                .map(|v| poly.tri.vertices[v])
                .collect();
            min_enclosing_circle(&pts)
        })
        .collect();

    let mut cells = Vec::with_capacity(poly.num_cells());
    for c in 0..poly.num_cells() {
        let area = poly.cell_area(c);
        let r_inner = poly.cells[c]
            .iter()
            .map(|&t| {
                let [a, b, d] = poly.tri.triangle_points(t);
                incircle_radius(a, b, d)
            })
            .fold(0.0_f64, f64::max);
        let h_t = poly.h_t[c];
        let degenerate = !(area > 0.0) || r_inner == 0.0 || h_t == 0.0;
        if degenerate {
            log::warn!("cell {c} is degenerate");
        }
        let rho1 = if degenerate { f64::INFINITY } else { balls[c].1 / r_inner };
        let rho3 = if degenerate { f64::INFINITY } else { perimeters[c] / h_t };

        let mut rho2 = 1.0_f64;
        for (o, ball) in balls.iter().enumerate() {
            if o == c {
                continue;
            }
            if balls[c].0.dist(ball.0) <= balls[c].1 + ball.1 {
                let ratio = h_t / poly.h_t[o];
                rho2 = rho2.max(if ratio.is_finite() { ratio } else { f64::INFINITY });
            }
        }
        cells.push(CellQuality {
            cell: c,
            area,
            h_t,
            r_outer: balls[c].1,
            r_inner,
            perimeter: perimeters[c],
            rho1,
            rho2,
            rho3,
            degenerate,
        });
    }
    let max = |f: fn(&CellQuality) -> f64| cells.iter().map(f).fold(0.0_f64, f64::max);
    Ok(QualityReport {
        num_cells: poly.num_cells(),
        rho1_max: max(|c| c.rho1),
        rho2_max: max(|c| c.rho2),
        rho3_max: max(|c| c.rho3),
        cells,
    })
}
