//! ASCII VTU output of a simulation state.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces the nodal values bit for bit and equal states give equal
//! bytes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::fespace::FESpace;
use crate::operators::leslie::nodal;
use crate::scheme::{Discretization, State};

const VTK_TRIANGLE: u8 = 5;
const VTK_TETRA: u8 = 10;
const VTK_QUADRATIC_TRIANGLE: u8 = 22;
const VTK_QUADRATIC_TETRA: u8 = 24;

/// Output layout of the quadratic velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VtuLayout {
    /// Linear cells on the mesh vertices; the velocity is sampled there.
    #[default]
    Vertices,
    /// Quadratic cells carrying every P2 node; vertex fields are extended
    /// linearly to the edge midpoints.
    Quadratic,
}

/// Point data of one output file.
struct PointField {
    name: &'static str,
    comps: usize,
    values: Vec<f64>,
}

/// Positions of the P2 edge nodes in VTK's quadratic cell ordering.
fn vtk_edge_order(dim: usize) -> &'static [usize] {
    match dim {
        2 => &[0, 2, 1],
        _ => &[0, 3, 1, 2, 4, 5],
    }
}

/// `(num_points, connectivity, cell type)` for the chosen layout.
fn topology(velocity: &FESpace, layout: VtuLayout) -> (usize, Vec<usize>, u8) {
    let mesh = velocity.mesh();
    let dim = mesh.dim();
    match layout {
        VtuLayout::Vertices => {
            let conn = mesh.cells().flatten().copied().collect();
            (mesh.num_vertices(), conn, if dim == 2 { VTK_TRIANGLE } else { VTK_TETRA })
        }
        VtuLayout::Quadratic => {
            let mut conn = Vec::with_capacity(mesh.num_cells() * velocity.local_nodes());
            for c in 0..mesh.num_cells() {
                let nodes = velocity.cell_nodes(c);
                conn.extend_from_slice(&nodes[..=dim]);
                conn.extend(vtk_edge_order(dim).iter().map(|&e| nodes[dim + 1 + e]));
            }
            (velocity.num_nodes(), conn, if dim == 2 { VTK_QUADRATIC_TRIANGLE } else { VTK_QUADRATIC_TETRA })
        }
    }
}

/// Point-major samples of a vertex field, extended to the edge midpoints
/// for the quadratic layout.
fn vertex_field(velocity: &FESpace, layout: VtuLayout, values: &[f64], comps: usize) -> Vec<f64> {
    let nv = velocity.mesh().num_vertices();
    let mut out = Vec::with_capacity(velocity.num_nodes() * comps);
    let mut buf = [0.0; 3];
    for z in 0..nv {
        nodal(values, nv, comps, z, &mut buf);
        out.extend_from_slice(&buf[..comps]);
    }
    if layout == VtuLayout::Quadratic {
        let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
        for &(i, j) in velocity.edges() {
            nodal(values, nv, comps, i, &mut a);
            nodal(values, nv, comps, j, &mut b);
            out.extend((0..comps).map(|c| 0.5 * (a[c] + b[c])));
        }
    }
    out
}

fn fields(disc: &Discretization, state: &State, layout: VtuLayout) -> Vec<PointField> {
    let dim = disc.dim();
    let vel = &disc.velocity;
    let npts = match layout {
        VtuLayout::Vertices => disc.mesh.num_vertices(),
        VtuLayout::Quadratic => vel.num_nodes(),
    };
    let mut v = Vec::with_capacity(npts * dim);
    let mut buf = [0.0; 3];
    for z in 0..npts {
        nodal(state.v.values(), vel.num_nodes(), dim, z, &mut buf);
        v.extend_from_slice(&buf[..dim]);
    }
    let d = state.d.values();
    let nv = disc.mesh.num_vertices();
    let defect: Vec<f64> = (0..nv)
        .map(|z| {
            nodal(d, nv, dim, z, &mut buf);
            buf[..dim].iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0
        })
        .collect();
    let lap = disc.laplacian.apply(d);
    vec![
        PointField { name: "v", comps: dim, values: v },
        PointField { name: "p", comps: 1, values: vertex_field(vel, layout, state.p.values(), 1) },
        PointField { name: "d", comps: dim, values: vertex_field(vel, layout, d, dim) },
        PointField { name: "unit_norm_defect", comps: 1, values: vertex_field(vel, layout, &defect, 1) },
        PointField { name: "laplacian_d", comps: dim, values: vertex_field(vel, layout, &lap, dim) },
    ]
}

fn push_floats(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for (i, x) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{x:?}").expect("string write");
    }
    out.push('\n');
}

/// Renders the VTU document of `state`.
pub fn render_vtu(disc: &Discretization, state: &State, layout: VtuLayout) -> String {
    let dim = disc.dim();
    let (npts, conn, cell_type) = topology(&disc.velocity, layout);
    let per_cell = conn.len() / disc.mesh.num_cells().max(1);
    let ncells = disc.mesh.num_cells();
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\"?>\n");
    s.push_str("<VTKFile type=\"UnstructuredGrid\" version=\"0.1\" byte_order=\"LittleEndian\">\n<UnstructuredGrid>\n");
    writeln!(s, "<Piece NumberOfPoints=\"{npts}\" NumberOfCells=\"{ncells}\">").unwrap();
    writeln!(s, "<FieldData>\n<DataArray type=\"Float64\" Name=\"TIME\" NumberOfTuples=\"1\" format=\"ascii\">").unwrap();
    push_floats(&mut s, [state.t]);
    s.push_str("</DataArray>\n</FieldData>\n");
    s.push_str("<Points>\n<DataArray type=\"Float64\" NumberOfComponents=\"3\" format=\"ascii\">\n");
    push_floats(
        &mut s,
        (0..npts).flat_map(|z| {
            let x = disc.velocity.node_coord(z);
            (0..3).map(move |c| if c < dim { x[c] } else { 0.0 })
        }),
    );
    s.push_str("</DataArray>\n</Points>\n<Cells>\n");
    s.push_str("<DataArray type=\"Int64\" Name=\"connectivity\" format=\"ascii\">\n");
    let ints = |v: &mut String, it: &mut dyn Iterator<Item = usize>| {
        let parts: Vec<String> = it.map(|i| i.to_string()).collect();
        v.push_str(&parts.join(" "));
        v.push('\n');
    };
    ints(&mut s, &mut conn.iter().copied());
    s.push_str("</DataArray>\n<DataArray type=\"Int64\" Name=\"offsets\" format=\"ascii\">\n");
    ints(&mut s, &mut (1..=ncells).map(|c| c * per_cell));
    s.push_str("</DataArray>\n<DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">\n");
    ints(&mut s, &mut std::iter::repeat_n(cell_type as usize, ncells));
    s.push_str("</DataArray>\n</Cells>\n<PointData>\n");
    for f in fields(disc, state, layout) {
        // vectors are padded to three components for standard readers
        let comps = if f.comps > 1 { 3 } else { 1 };
        writeln!(s, "<DataArray type=\"Float64\" Name=\"{}\" NumberOfComponents=\"{comps}\" format=\"ascii\">", f.name)
            .unwrap();
        push_floats(
            &mut s,
            f.values.chunks(f.comps).flat_map(|p| (0..comps).map(move |c| if c < p.len() { p[c] } else { 0.0 })),
        );
        s.push_str("</DataArray>\n");
    }
    s.push_str("</PointData>\n</Piece>\n</UnstructuredGrid>\n</VTKFile>\n");
    s
}

pub fn write_fields(disc: &Discretization, state: &State, layout: VtuLayout, path: &Path) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(render_vtu(disc, state, layout).as_bytes())?;
    f.flush()
}

/// ParaView collection listing `(time, file name)` pairs.
pub fn write_collection(entries: &[(f64, String)], path: &Path) -> std::io::Result<()> {
    let mut s = String::from("<?xml version=\"1.0\"?>\n<VTKFile type=\"Collection\" version=\"0.1\">\n<Collection>\n");
    for (t, file) in entries {
        writeln!(s, "<DataSet timestep=\"{t:?}\" part=\"0\" file=\"{file}\"/>").unwrap();
    }
    s.push_str("</Collection>\n</VTKFile>\n");
    std::fs::write(path, s)
}

/// Reads back the named point-data array of a file written by
/// [`write_fields`], as a flat list of tuples.
pub fn read_point_array(text: &str, name: &str) -> Option<Vec<f64>> {
    let tag = format!("Name=\"{name}\"");
    let pd = text.find("<PointData>")?;
    let start = pd + text[pd..].find(&tag)?;
    let body = start + text[start..].find('>')? + 1;
    let end = body + text[body..].find("</DataArray>")?;
    text[body..end].split_whitespace().map(|t| t.parse().ok()).collect()
}
