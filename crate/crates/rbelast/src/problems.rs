//! Built-in benchmark problems: meshes, per-region affine maps, materials,
//! boundary conditions and the affine decomposition, fully wired.

use crate::expr::{MonomialPoly, ParamExpr};
use crate::geomap::{
    collapse_terms, edge_length_multiplier, effective_tensor, mapping_continuity_check,
    solve_affine_map, AffineDecomposition, AffineGroup, AffineMap, FormKind, GeomapError,
    ParamBox, RawTerm,
};
use crate::material::{build_e_matrix_numeric, build_sa, MaterialError, MaterialMode, MaterialSpec};
use crate::mesh::{
    generate_structured_rect, validate_mesh, BcKind, BoundaryCondition, Mesh, MeshBuilder,
    MeshError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
    #[error("traction tag {0} has edges with inconsistent outward normals")]
    InconsistentNormals(u32),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geomap(#[from] GeomapError),
    #[error(transparent)]
    Material(#[from] MaterialError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemName {
    CenterCrack,
    CompositeCellPolygonal,
    MultiMaterial,
    WovenComposite,
    ClosedVessel,
}

impl ProblemName {
    pub fn parse(s: &str) -> Result<ProblemName, ProblemError> {
        match s {
            "center_crack" => Ok(ProblemName::CenterCrack),
            "composite_cell_polygonal" => Ok(ProblemName::CompositeCellPolygonal),
            "multi_material" => Ok(ProblemName::MultiMaterial),
            "woven_composite" => Ok(ProblemName::WovenComposite),
            "closed_vessel" => Ok(ProblemName::ClosedVessel),
            other => Err(ProblemError::UnknownProblem(other.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemName::CenterCrack => "center_crack",
            ProblemName::CompositeCellPolygonal => "composite_cell_polygonal",
            ProblemName::MultiMaterial => "multi_material",
            ProblemName::WovenComposite => "woven_composite",
            ProblemName::ClosedVessel => "closed_vessel",
        }
    }
}

/// Mesh density presets; `Custom` passes the per-problem subdivision knob
/// directly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    Coarse,
    Paper,
    Custom(u32),
}

/// A fully wired benchmark problem.
pub struct ProblemSpec {
    pub name: ProblemName,
    pub mesh: Mesh,
    /// Affine map of each region (1-based region id - 1).
    pub maps: Vec<AffineMap>,
    /// Material of each region.
    pub materials: Vec<MaterialSpec>,
    pub bcs: Vec<BoundaryCondition>,
    pub decomp: AffineDecomposition,
    pub output_desc: String,
    /// Poisson ratio shared by every region (SIF extraction needs it).
    pub nu: f64,
}

/// Overridable generator knobs (see the problem configuration format).
#[derive(Clone, Debug)]
pub struct ProblemOptions {
    pub resolution: Resolution,
    pub nu: f64,
    pub box_lo: Option<Vec<f64>>,
    pub box_hi: Option<Vec<f64>>,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions {
            resolution: Resolution::Coarse,
            nu: 0.3,
            box_lo: None,
            box_hi: None,
        }
    }
}

pub fn build_problem(name: ProblemName, opts: &ProblemOptions) -> Result<ProblemSpec, ProblemError> {
    match name {
        ProblemName::CenterCrack => center_crack(opts),
        ProblemName::CompositeCellPolygonal => composite_cell(opts),
        ProblemName::MultiMaterial => multi_material(opts),
        ProblemName::WovenComposite => woven_composite(opts),
        ProblemName::ClosedVessel => closed_vessel(opts),
    }
}

// ---------------------------------------------------------------------------
// decomposition pipeline shared by all generators

struct LoadSpec {
    tag: u32,
    normal_stress: f64,
}

struct OutputSpec {
    tag: u32,
    multipliers: [f64; 2],
}

#[allow(clippy::too_many_arguments)]
fn build_decomposition(
    mesh: &Mesh,
    maps: &[AffineMap],
    materials: &[MaterialSpec],
    loads: &[LoadSpec],
    outputs: &[OutputSpec],
    box_: &ParamBox,
    mu_ref: Vec<f64>,
    compliant: bool,
) -> Result<AffineDecomposition, ProblemError> {
    let axisym = materials.iter().any(|m| m.mode.is_axisymmetric());
    // volume terms
    let mut raw_a = Vec::new();
    for region in 1..=mesh.n_regions {
        let map = &maps[region as usize - 1];
        let sa = build_sa(&materials[region as usize - 1]);
        let s_eff = effective_tensor(&sa, map, axisym, box_)?;
        for a in 0..5u8 {
            for b in 0..5u8 {
                let poly = &s_eff[a as usize][b as usize];
                if poly.is_zero() {
                    continue;
                }
                let kind = match (a, b) {
                    (4, 4) => FormKind::DispDisp,
                    (4, _) => FormKind::DispGrad {
                        vi: b / 2,
                        vj: b % 2,
                    },
                    (_, 4) => FormKind::GradDisp {
                        wi: a / 2,
                        wj: a % 2,
                    },
                    _ => FormKind::GradGrad {
                        wi: a / 2,
                        wj: a % 2,
                        vi: b / 2,
                        vj: b % 2,
                    },
                };
                for (m, n, coeff) in poly.terms() {
                    raw_a.push(RawTerm {
                        theta: coeff.clone(),
                        kind,
                        region,
                        weight: (*m, *n),
                    });
                }
            }
        }
    }
    // boundary terms: group tagged edges by adjacent region, with constant
    // outward normal per (tag, region)
    let adjacency = mesh.boundary_adjacency()?;
    let mut edge_groups: std::collections::BTreeMap<(u32, u32), Vec<usize>> =
        std::collections::BTreeMap::new();
    for (ei, be) in mesh.boundary_edges.iter().enumerate() {
        let region = mesh.triangles[adjacency[ei]].region;
        edge_groups.entry((be.tag, region)).or_default().push(ei);
    }
    let group_normal = |tag: u32, region: u32| -> Result<[f64; 2], ProblemError> {
        let edges = &edge_groups[&(tag, region)];
        let mut normal: Option<[f64; 2]> = None;
        for &ei in edges {
            let n = mesh.outward_normal(ei, adjacency[ei]);
            match normal {
                None => normal = Some(n),
                Some(prev) => {
                    if (prev[0] - n[0]).abs() > 1e-10 || (prev[1] - n[1]).abs() > 1e-10 {
                        return Err(ProblemError::InconsistentNormals(tag));
                    }
                }
            }
        }
        Ok(normal.expect("edge group nonempty"))
    };

    let mut raw_f = Vec::new();
    for load in loads {
        for (&(tag, region), _) in edge_groups.range((load.tag, 0)..=(load.tag, u32::MAX)) {
            let map = &maps[region as usize - 1];
            let normal = group_normal(tag, region)?;
            let tangent = [-normal[1], normal[0]];
            let mult = edge_length_multiplier(map, tangent, box_)?;
            let s_f = trace_vector(
                [load.normal_stress * normal[0], load.normal_stress * normal[1]],
                axisym,
                TraceKind::Load,
                map,
            );
            push_trace_terms(&mut raw_f, &s_f, &mult, tag, region, false);
        }
    }
    let mut raw_l = Vec::new();
    for out in outputs {
        for (&(tag, region), _) in edge_groups.range((out.tag, 0)..=(out.tag, u32::MAX)) {
            let map = &maps[region as usize - 1];
            let mult = {
                let normal = group_normal(tag, region)?;
                let tangent = [-normal[1], normal[0]];
                edge_length_multiplier(map, tangent, box_)?
            };
            let s_l = trace_vector(out.multipliers, axisym, TraceKind::Output, map);
            push_trace_terms(&mut raw_l, &s_l, &mult, tag, region, true);
        }
    }

    let a = collapse_terms(raw_a, box_);
    let f = collapse_terms(raw_f, box_);
    let l = collapse_terms(raw_l, box_);
    Ok(AffineDecomposition {
        a,
        f,
        l,
        box_: box_.clone(),
        mu_ref,
        compliant,
        axisymmetric: axisym,
    })
}

enum TraceKind {
    Load,
    Output,
}

/// Component polynomials of a boundary trace vector in reference
/// coordinates. Cartesian: constants. Axisymmetric: the radial weights
/// (x1°)² / x1° (load) or x1° / 1 (output), pulled back through the map.
fn trace_vector(
    components: [f64; 2],
    axisym: bool,
    kind: TraceKind,
    map: &AffineMap,
) -> [MonomialPoly; 2] {
    let c = ParamExpr::constant;
    if !axisym {
        return [
            MonomialPoly::constant(c(components[0])),
            MonomialPoly::constant(c(components[1])),
        ];
    }
    let x1o = MonomialPoly::monomial(1, 0, ParamExpr::constant(1.0))
        .substitute_x1(&map.r[0][0], &map.g[0]);
    let pow = |p: u8| -> MonomialPoly {
        match p {
            0 => MonomialPoly::constant(ParamExpr::constant(1.0)),
            1 => x1o.clone(),
            _ => x1o.mul(&x1o),
        }
    };
    let (p1, p2) = match kind {
        TraceKind::Load => (2, 1),
        TraceKind::Output => (1, 0),
    };
    [
        pow(p1).scale(&c(components[0])),
        pow(p2).scale(&c(components[1])),
    ]
}

fn push_trace_terms(
    raw: &mut Vec<RawTerm>,
    s_vec: &[MonomialPoly; 2],
    mult: &ParamExpr,
    tag: u32,
    region: u32,
    output: bool,
) {
    for (comp, poly) in s_vec.iter().enumerate() {
        for (m, n, coeff) in poly.terms() {
            let kind = if output {
                FormKind::OutputTrace {
                    tag,
                    comp: comp as u8,
                }
            } else {
                FormKind::BoundaryTrace {
                    tag,
                    comp: comp as u8,
                }
            };
            raw.push(RawTerm {
                theta: coeff.clone() * mult.clone(),
                kind,
                region,
                weight: (*m, *n),
            });
        }
    }
}

fn const_pt(x: f64, y: f64) -> [ParamExpr; 2] {
    [ParamExpr::constant(x), ParamExpr::constant(y)]
}

// ---------------------------------------------------------------------------
// multi-material plate

/// 3x3 plate of orthotropic squares; the six Young's moduli are the
/// parameters, arranged in four distinct ordered (E1, E2) pairs.
fn multi_material(opts: &ProblemOptions) -> Result<ProblemSpec, ProblemError> {
    let n = match opts.resolution {
        Resolution::Coarse => 15,
        Resolution::Paper => 66,
        Resolution::Custom(k) => (k as usize).max(3) / 3 * 3,
    };
    let cells = n / 3;
    let region_of = move |ix: usize, iy: usize, upper: bool| -> u32 {
        let macro_id = 3 * (iy / cells) + ix / cells;
        (2 * macro_id + 1 + usize::from(upper)) as u32
    };
    let mesh = generate_structured_rect(n, n, &region_of, None)?;

    // moduli pair (E1, E2) per macro square, bottom row first
    let pair_of: [(usize, usize); 9] = [
        (0, 1),
        (2, 3),
        (0, 1),
        (4, 5),
        (1, 0),
        (4, 5),
        (0, 1),
        (2, 3),
        (0, 1),
    ];
    let box_ = ParamBox::new(
        opts.box_lo.clone().unwrap_or_else(|| vec![0.5; 6]),
        opts.box_hi.clone().unwrap_or_else(|| vec![2.0; 6]),
    );
    let mu_ref = box_.centroid();
    let mut maps = Vec::new();
    let mut materials = Vec::new();
    for macro_id in 0..9 {
        let (i, j) = pair_of[macro_id];
        let spec = MaterialSpec::orthotropic_plane_stress(
            ParamExpr::param(i),
            ParamExpr::param(j),
            opts.nu,
            None,
            ParamExpr::constant(0.0),
        );
        for _ in 0..2 {
            maps.push(AffineMap::identity());
            materials.push(spec.clone());
        }
    }
    let bcs = vec![
        BoundaryCondition {
            tag: 1,
            kind: BcKind::Dirichlet { fix: [true, true] },
        },
        BoundaryCondition {
            tag: 3,
            kind: BcKind::Traction { normal_stress: 1.0 },
        },
    ];
    let decomp = build_decomposition(
        &mesh,
        &maps,
        &materials,
        &[LoadSpec {
            tag: 3,
            normal_stress: 1.0,
        }],
        &[],
        &box_,
        mu_ref,
        true,
    )?;
    Ok(ProblemSpec {
        name: ProblemName::MultiMaterial,
        mesh,
        maps,
        materials,
        bcs,
        decomp,
        output_desc: "integral of the normal displacement over the loaded top edge".into(),
        nu: opts.nu,
    })
}

// ---------------------------------------------------------------------------
// center crack

/// Quarter model of a center-cracked plate under tension: crack length d and
/// plate height h as parameters, three triangular subdomains meeting at the
/// crack tip.
fn center_crack(opts: &ProblemOptions) -> Result<ProblemSpec, ProblemError> {
    let (n, grade) = match opts.resolution {
        Resolution::Coarse => (14, 0.88),
        Resolution::Paper => (46, 0.93),
        Resolution::Custom(k) => (k as usize, 0.93),
    };
    let tip = [0.5, 0.0];
    let a = [0.0, 0.0];
    let b = [1.0, 0.0];
    let cc = [1.0, 1.0];
    let d = [0.0, 1.0];
    let mut builder = MeshBuilder::new();
    builder.tri_patch([tip, a, d], n, Some(grade), 1);
    builder.tri_patch([tip, cc, d], n, Some(grade), 2);
    builder.tri_patch([tip, b, cc], n, Some(grade), 3);
    let tol = 1e-9;
    let mesh = builder.finish(&|_, _, mid| {
        if mid[1].abs() < tol {
            if mid[0] < 0.5 {
                1 // crack face (traction free)
            } else {
                2 // symmetry ligament
            }
        } else if (mid[0] - 1.0).abs() < tol {
            3
        } else if (mid[1] - 1.0).abs() < tol {
            4
        } else {
            5 // left symmetry edge
        }
    })?;

    let box_ = ParamBox::new(
        opts.box_lo.clone().unwrap_or_else(|| vec![0.3, 0.5]),
        opts.box_hi.clone().unwrap_or_else(|| vec![0.7, 2.0]),
    );
    let mu_ref = vec![0.5, 1.0];
    let p = ParamExpr::param;
    let tip_m = [p(0), ParamExpr::constant(0.0)];
    let a_m = const_pt(0.0, 0.0);
    let b_m = const_pt(1.0, 0.0);
    let c_m = [ParamExpr::constant(1.0), p(1)];
    let d_m = [ParamExpr::constant(0.0), p(1)];
    let maps = vec![
        solve_affine_map([tip, a, d], [tip_m.clone(), a_m, d_m.clone()], &box_)?,
        solve_affine_map([tip, cc, d], [tip_m.clone(), c_m.clone(), d_m], &box_)?,
        solve_affine_map([tip, b, cc], [tip_m, b_m, c_m], &box_)?,
    ];
    let spec = MaterialSpec::isotropic(
        MaterialMode::PlaneStrainIsotropic,
        ParamExpr::constant(1.0),
        opts.nu,
    );
    let materials = vec![spec.clone(), spec.clone(), spec];
    let bcs = vec![
        BoundaryCondition {
            tag: 2,
            kind: BcKind::Dirichlet { fix: [false, true] },
        },
        BoundaryCondition {
            tag: 5,
            kind: BcKind::Dirichlet { fix: [true, false] },
        },
        BoundaryCondition {
            tag: 4,
            kind: BcKind::Traction { normal_stress: 1.0 },
        },
    ];
    let decomp = build_decomposition(
        &mesh,
        &maps,
        &materials,
        &[LoadSpec {
            tag: 4,
            normal_stress: 1.0,
        }],
        &[],
        &box_,
        mu_ref,
        true,
    )?;
    Ok(ProblemSpec {
        name: ProblemName::CenterCrack,
        mesh,
        maps,
        materials,
        bcs,
        decomp,
        output_desc: "compliant energy output over the tension edge (VCE/SIF input)".into(),
        nu: opts.nu,
    })
}

// ---------------------------------------------------------------------------
// composite unit cell with polygonal inclusion

/// Square cell with a 16-gon "ellipse" inclusion whose semi-axes and
/// stiffness are the parameters.
fn composite_cell(opts: &ProblemOptions) -> Result<ProblemSpec, ProblemError> {
    let n = match opts.resolution {
        Resolution::Coarse => 4,
        Resolution::Paper => 11,
        Resolution::Custom(k) => (k as usize).max(2),
    };
    let half = 1.5;
    let sides = 16usize;
    let angle = |k: usize| 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
    let inner = |k: usize| -> [f64; 2] {
        let (s, c) = angle(k).sin_cos();
        [c, s]
    };
    let outer = |k: usize| -> [f64; 2] {
        let (s, c) = angle(k).sin_cos();
        let m = c.abs().max(s.abs());
        [half * c / m, half * s / m]
    };

    let mut builder = MeshBuilder::new();
    let mut region = 1u32;
    // inclusion fan
    for k in 0..sides {
        builder.tri_patch([[0.0, 0.0], inner(k), inner((k + 1) % sides)], n, None, region);
        region += 1;
    }
    // matrix annulus: two triangles per sector
    for k in 0..sides {
        let (vk, vk1) = (inner(k), inner((k + 1) % sides));
        let (ak, ak1) = (outer(k), outer((k + 1) % sides));
        builder.tri_patch([vk, ak, ak1], n, None, region);
        region += 1;
        builder.tri_patch([vk, ak1, vk1], n, None, region);
        region += 1;
    }
    let tol = 1e-9;
    let mesh = builder.finish(&|_, _, mid| {
        if (mid[1] + half).abs() < tol {
            1
        } else if (mid[0] - half).abs() < tol {
            2
        } else if (mid[1] - half).abs() < tol {
            3
        } else {
            4
        }
    })?;

    let box_ = ParamBox::new(
        opts.box_lo.clone().unwrap_or_else(|| vec![0.8, 0.8, 0.2]),
        opts.box_hi.clone().unwrap_or_else(|| vec![1.2, 1.2, 5.0]),
    );
    let mu_ref = vec![1.0, 1.0, 1.0];
    let inner_m = |k: usize| -> [ParamExpr; 2] {
        let (s, c) = angle(k).sin_cos();
        [
            ParamExpr::constant(c) * ParamExpr::param(0),
            ParamExpr::constant(s) * ParamExpr::param(1),
        ]
    };
    let mut maps = Vec::new();
    let mut materials = Vec::new();
    let fiber = MaterialSpec::isotropic(
        MaterialMode::PlaneStressIsotropic,
        ParamExpr::param(2),
        opts.nu,
    );
    let matrix = MaterialSpec::isotropic(
        MaterialMode::PlaneStressIsotropic,
        ParamExpr::constant(1.0),
        opts.nu,
    );
    for k in 0..sides {
        let k1 = (k + 1) % sides;
        maps.push(solve_affine_map(
            [[0.0, 0.0], inner(k), inner(k1)],
            [const_pt(0.0, 0.0), inner_m(k), inner_m(k1)],
            &box_,
        )?);
        materials.push(fiber.clone());
    }
    for k in 0..sides {
        let k1 = (k + 1) % sides;
        let (ak, ak1) = (outer(k), outer(k1));
        maps.push(solve_affine_map(
            [inner(k), ak, ak1],
            [inner_m(k), const_pt(ak[0], ak[1]), const_pt(ak1[0], ak1[1])],
            &box_,
        )?);
        materials.push(matrix.clone());
        maps.push(solve_affine_map(
            [inner(k), ak1, inner(k1)],
            [inner_m(k), const_pt(ak1[0], ak1[1]), inner_m(k1)],
            &box_,
        )?);
        materials.push(matrix.clone());
    }
    let bcs = vec![
        BoundaryCondition {
            tag: 1,
            kind: BcKind::Dirichlet { fix: [true, true] },
        },
        BoundaryCondition {
            tag: 3,
            kind: BcKind::Traction { normal_stress: 1.0 },
        },
    ];
    let decomp = build_decomposition(
        &mesh,
        &maps,
        &materials,
        &[LoadSpec {
            tag: 3,
            normal_stress: 1.0,
        }],
        &[],
        &box_,
        mu_ref,
        true,
    )?;
    Ok(ProblemSpec {
        name: ProblemName::CompositeCellPolygonal,
        mesh,
        maps,
        materials,
        bcs,
        decomp,
        output_desc: "integral of the normal displacement over the loaded top edge".into(),
        nu: opts.nu,
    })
}

// ---------------------------------------------------------------------------
// woven composite beam

/// Two-cell cantilever beam with square holes; orthotropic plies at +/-theta
/// with an isotropic clamped-root column. Parameters: hole half-size w, the
/// transverse modulus E2 and the ply angle theta.
fn woven_composite(opts: &ProblemOptions) -> Result<ProblemSpec, ProblemError> {
    let (m_cells, k_cells) = match opts.resolution {
        Resolution::Coarse => (4, 3),
        Resolution::Paper => (14, 10),
        Resolution::Custom(k) => ((k as usize).max(2), ((k as usize) * 2 / 3).max(2)),
    };
    let w_ref = 0.125f64;
    let margin = 0.5 - w_ref;

    // strip coordinate arrays (reference domain)
    let lin = |a: f64, b: f64, n: usize| -> Vec<f64> {
        (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
    };
    let mut builder = MeshBuilder::new();
    // region ids: cell c in {0,1}, block (i,j) in the 3x3 frame minus center
    let region_id = |cell: usize, i: usize, j: usize| -> u32 {
        let blocks = [(0, 0), (0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1), (2, 2)];
        let idx = blocks.iter().position(|&b| b == (i, j)).expect("hole block");
        (cell * 8 + idx + 1) as u32
    };
    for cell in 0..2usize {
        let x0 = cell as f64;
        let xs = [
            lin(x0, x0 + margin, m_cells),
            lin(x0 + margin, x0 + margin + 2.0 * w_ref, k_cells),
            lin(x0 + margin + 2.0 * w_ref, x0 + 1.0, m_cells),
        ];
        let ys = [
            lin(0.0, margin, m_cells),
            lin(margin, margin + 2.0 * w_ref, k_cells),
            lin(margin + 2.0 * w_ref, 1.0, m_cells),
        ];
        for i in 0..3 {
            for j in 0..3 {
                if i == 1 && j == 1 {
                    continue; // hole
                }
                builder.rect_patch(&xs[i], &ys[j], region_id(cell, i, j));
            }
        }
    }
    let tol = 1e-9;
    let hole2_right = 1.0 + margin + 2.0 * w_ref;
    let mesh = builder.finish(&|_, _, mid| {
        if mid[0].abs() < tol {
            1 // clamped root
        } else if (mid[0] - 2.0).abs() < tol {
            2 // sliding end
        } else if (mid[1] - 1.0).abs() < tol {
            3 // tension
        } else if mid[1].abs() < tol {
            4
        } else if mid[0] < 1.0 {
            5 // hole 1 wall
        } else if (mid[0] - hole2_right).abs() < tol && mid[1] > margin && mid[1] < 1.0 - margin {
            7 // hole 2 wall, output side
        } else {
            6 // hole 2 wall, remaining sides
        }
    })?;

    let box_ = ParamBox::new(
        opts.box_lo
            .clone()
            .unwrap_or_else(|| vec![1.0 / 12.0, 0.5, -std::f64::consts::FRAC_PI_4]),
        opts.box_hi
            .clone()
            .unwrap_or_else(|| vec![1.0 / 6.0, 2.0, std::f64::consts::FRAC_PI_4]),
    );
    let mu_ref = vec![w_ref, 1.0, 0.0];

    // parameter-dependent cut coordinates
    let c = ParamExpr::constant;
    let w = ParamExpr::param(0);
    let cuts_x = |cell: usize| -> [ParamExpr; 4] {
        let x0 = c(cell as f64);
        [
            x0.clone(),
            x0.clone() + c(0.5) - w.clone(),
            x0.clone() + c(0.5) + w.clone(),
            x0 + c(1.0),
        ]
    };
    let cuts_y: [ParamExpr; 4] = [c(0.0), c(0.5) - w.clone(), c(0.5) + w.clone(), c(1.0)];
    let ref_x = |cell: usize| -> [f64; 4] {
        let x0 = cell as f64;
        [x0, x0 + margin, x0 + margin + 2.0 * w_ref, x0 + 1.0]
    };
    let ref_y: [f64; 4] = [0.0, margin, margin + 2.0 * w_ref, 1.0];

    let iso = MaterialSpec::isotropic(
        MaterialMode::PlaneStressIsotropic,
        ParamExpr::constant(1.0),
        opts.nu,
    );
    let ply = |sign: f64| {
        MaterialSpec::orthotropic_plane_stress(
            ParamExpr::constant(1.0),
            ParamExpr::param(1),
            opts.nu,
            None,
            ParamExpr::constant(sign) * ParamExpr::param(2),
        )
    };
    let mut maps = vec![AffineMap::identity(); 16];
    let mut materials = vec![iso.clone(); 16];
    for cell in 0..2usize {
        let rx = ref_x(cell);
        let px = cuts_x(cell);
        for i in 0..3 {
            for j in 0..3 {
                if i == 1 && j == 1 {
                    continue;
                }
                let rid = region_id(cell, i, j) as usize - 1;
                let refv = [[rx[i], ref_y[j]], [rx[i + 1], ref_y[j]], [rx[i], ref_y[j + 1]]];
                let mapped = [
                    [px[i].clone(), cuts_y[j].clone()],
                    [px[i + 1].clone(), cuts_y[j].clone()],
                    [px[i].clone(), cuts_y[j + 1].clone()],
                ];
                maps[rid] = solve_affine_map(refv, mapped, &box_)?;
                materials[rid] = if cell == 0 && i == 0 {
                    iso.clone()
                } else if cell == 0 {
                    ply(1.0)
                } else {
                    ply(-1.0)
                };
            }
        }
    }
    let bcs = vec![
        BoundaryCondition {
            tag: 1,
            kind: BcKind::Dirichlet { fix: [true, true] },
        },
        BoundaryCondition {
            tag: 2,
            kind: BcKind::Dirichlet { fix: [true, false] },
        },
        BoundaryCondition {
            tag: 3,
            kind: BcKind::Traction { normal_stress: 1.0 },
        },
        BoundaryCondition {
            tag: 7,
            kind: BcKind::Output {
                multipliers: [1.0, 0.0],
            },
        },
    ];
    let decomp = build_decomposition(
        &mesh,
        &maps,
        &materials,
        &[LoadSpec {
            tag: 3,
            normal_stress: 1.0,
        }],
        &[OutputSpec {
            tag: 7,
            multipliers: [1.0, 0.0],
        }],
        &box_,
        mu_ref,
        false,
    )?;
    Ok(ProblemSpec {
        name: ProblemName::WovenComposite,
        mesh,
        maps,
        materials,
        bcs,
        decomp,
        output_desc: "integral of the horizontal displacement over the second hole wall".into(),
        nu: opts.nu,
    })
}

// ---------------------------------------------------------------------------
// closed vessel (axisymmetric)

/// Two-layer solid cylinder slice under axial tension; inner layer width and
/// stiffness are the parameters.
fn closed_vessel(opts: &ProblemOptions) -> Result<ProblemSpec, ProblemError> {
    let (nr, nz) = match opts.resolution {
        Resolution::Coarse => (10, 10),
        Resolution::Paper => (30, 42),
        Resolution::Custom(k) => ((k as usize).max(2), (k as usize).max(2)),
    };
    let lin = |a: f64, b: f64, n: usize| -> Vec<f64> {
        (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
    };
    let mut builder = MeshBuilder::new();
    let zs = lin(0.0, 1.0, nz);
    builder.rect_patch(&lin(0.0, 1.0, nr), &zs, 1);
    builder.rect_patch(&lin(1.0, 2.0, nr), &zs, 2);
    let tol = 1e-9;
    let mesh = builder.finish(&|_, _, mid| {
        if mid[1].abs() < tol {
            1
        } else if (mid[0] - 2.0).abs() < tol {
            2
        } else if (mid[1] - 1.0).abs() < tol {
            3
        } else {
            4 // axis
        }
    })?;

    let box_ = ParamBox::new(
        opts.box_lo.clone().unwrap_or_else(|| vec![0.1, 0.1]),
        opts.box_hi.clone().unwrap_or_else(|| vec![1.9, 10.0]),
    );
    let mu_ref = vec![1.0, 1.0];
    let p = ParamExpr::param;
    let c = ParamExpr::constant;
    let maps = vec![
        // core: radial scaling to [0, w]
        solve_affine_map(
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            [const_pt(0.0, 0.0), [p(0), c(0.0)], const_pt(0.0, 1.0)],
            &box_,
        )?,
        // shell: unit-width translation to [w, w+1]
        solve_affine_map(
            [[1.0, 0.0], [2.0, 0.0], [1.0, 1.0]],
            [
                [p(0), c(0.0)],
                [p(0) + c(1.0), c(0.0)],
                [p(0), c(1.0)],
            ],
            &box_,
        )?,
    ];
    let materials = vec![
        MaterialSpec::isotropic(MaterialMode::AxisymmetricIsotropic, p(1), opts.nu),
        MaterialSpec::isotropic(MaterialMode::AxisymmetricIsotropic, c(1.0), opts.nu),
    ];
    let bcs = vec![
        BoundaryCondition {
            tag: 1,
            kind: BcKind::Dirichlet { fix: [false, true] },
        },
        BoundaryCondition {
            tag: 4,
            kind: BcKind::Dirichlet { fix: [true, false] },
        },
        BoundaryCondition {
            tag: 3,
            kind: BcKind::Traction { normal_stress: 1.0 },
        },
        BoundaryCondition {
            tag: 2,
            kind: BcKind::Output {
                multipliers: [1.0, 0.0],
            },
        },
    ];
    let decomp = build_decomposition(
        &mesh,
        &maps,
        &materials,
        &[LoadSpec {
            tag: 3,
            normal_stress: 1.0,
        }],
        &[OutputSpec {
            tag: 2,
            multipliers: [1.0, 0.0],
        }],
        &box_,
        mu_ref,
        false,
    )?;
    Ok(ProblemSpec {
        name: ProblemName::ClosedVessel,
        mesh,
        maps,
        materials,
        bcs,
        decomp,
        output_desc: "integral of the radial displacement over the outer wall".into(),
        nu: opts.nu,
    })
}

// ---------------------------------------------------------------------------
// validation

/// Full problem validation report: mesh invariants, BC coverage, mapping
/// continuity, SPD sampling of K(mu) and raw material checks.
pub fn validate_problem(spec: &ProblemSpec, n_spd_samples: usize) -> Vec<String> {
    let mut report: Vec<String> = validate_mesh(&spec.mesh, &spec.bcs)
        .into_iter()
        .map(|v| v.0)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a11da7e);
    let samples: Vec<Vec<f64>> = (0..8).map(|_| spec.decomp.box_.sample(&mut rng)).collect();
    for v in mapping_continuity_check(&spec.maps, &spec.mesh, &samples) {
        report.push(format!(
            "mapping discontinuity on edge ({}, {}) between regions {} and {}: {:.3e} at mu = {:?}",
            v.edge[0], v.edge[1], v.regions.0, v.regions.1, v.mismatch, v.mu
        ));
    }
    for mu in samples.iter().take(4) {
        for (r, mat) in spec.materials.iter().enumerate() {
            if let Err(e) = build_e_matrix_numeric(mat, mu) {
                report.push(format!("region {} material invalid: {e}", r + 1));
            }
        }
    }
    // SPD sampling of the assembled stiffness
    match crate::truth::assemble_parameter_independent(&spec.mesh, &spec.decomp, &spec.bcs) {
        Ok(ops) => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5bd);
            for _ in 0..n_spd_samples {
                let mu = spec.decomp.box_.sample(&mut rng);
                let theta = match spec.decomp.theta_a(&mu) {
                    Ok(t) => t,
                    Err(e) => {
                        report.push(format!("theta evaluation failed: {e}"));
                        continue;
                    }
                };
                let kv = ops.combine_k(&theta);
                if crate::sparse::SkylineFactor::factor(&ops.pattern, &kv).is_err() {
                    report.push(format!("K(mu) not SPD at mu = {mu:?}"));
                }
            }
        }
        Err(e) => report.push(format!("assembly failed: {e}")),
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse(name: ProblemName) -> ProblemSpec {
        build_problem(name, &ProblemOptions::default()).unwrap()
    }

    #[test]
    fn multi_material_counts() {
        let spec = coarse(ProblemName::MultiMaterial);
        assert_eq!(spec.mesh.n_regions, 18);
        assert_eq!(spec.decomp.qa(), 12, "Qa");
        assert_eq!(spec.decomp.qf(), 1, "Qf");
        assert_eq!(spec.decomp.ql(), 0, "Ql");
        assert!(spec.decomp.compliant);
    }

    #[test]
    fn center_crack_counts() {
        let spec = coarse(ProblemName::CenterCrack);
        assert_eq!(spec.mesh.n_regions, 3);
        assert_eq!(spec.decomp.qa(), 10, "Qa");
        assert_eq!(spec.decomp.qf(), 1, "Qf");
        assert_eq!(spec.decomp.mu_ref, vec![0.5, 1.0]);
    }

    #[test]
    fn woven_counts() {
        let spec = coarse(ProblemName::WovenComposite);
        assert_eq!(spec.mesh.n_regions, 16);
        assert_eq!(spec.decomp.qa(), 19, "Qa");
        assert_eq!(spec.decomp.qf(), 2, "Qf");
        assert_eq!(spec.decomp.ql(), 1, "Ql");
        assert!(!spec.decomp.compliant);
    }

    #[test]
    fn vessel_and_cell_counts_recorded() {
        let vessel = coarse(ProblemName::ClosedVessel);
        assert!(vessel.decomp.axisymmetric);
        assert!(!vessel.decomp.compliant);
        assert!(vessel.decomp.qa() > 0 && vessel.decomp.ql() > 0);
        let cell = coarse(ProblemName::CompositeCellPolygonal);
        assert_eq!(cell.mesh.n_regions, 48);
        assert!(cell.decomp.qa() > 0);
        // observational only: the paper's counts rely on curvy triangles
        eprintln!(
            "recorded counts: vessel Qa={} Qf={} Ql={}; cell Qa={} Qf={}",
            vessel.decomp.qa(),
            vessel.decomp.qf(),
            vessel.decomp.ql(),
            cell.decomp.qa(),
            cell.decomp.qf()
        );
    }

    #[test]
    fn all_problems_validate_clean() {
        for name in [
            ProblemName::MultiMaterial,
            ProblemName::CenterCrack,
            ProblemName::WovenComposite,
            ProblemName::ClosedVessel,
            ProblemName::CompositeCellPolygonal,
        ] {
            let spec = coarse(name);
            let report = validate_problem(&spec, 5);
            assert!(
                report.is_empty(),
                "{}: {:?}",
                spec.name.as_str(),
                report
            );
        }
    }

    #[test]
    fn maps_are_identity_at_mu_ref() {
        for name in [
            ProblemName::CenterCrack,
            ProblemName::WovenComposite,
            ProblemName::ClosedVessel,
            ProblemName::CompositeCellPolygonal,
        ] {
            let spec = coarse(name);
            let mu = &spec.decomp.mu_ref;
            for (r, map) in spec.maps.iter().enumerate() {
                let rm = map.eval_r(mu);
                let g = map.eval_g(mu);
                for i in 0..2 {
                    for j in 0..2 {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!(
                            (rm[i][j] - expect).abs() < 1e-12,
                            "{} region {} R[{i}][{j}] = {}",
                            spec.name.as_str(),
                            r + 1,
                            rm[i][j]
                        );
                    }
                    assert!(g[i].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn unknown_problem_rejected() {
        assert!(matches!(
            ProblemName::parse("arc_cantilever"),
            Err(ProblemError::UnknownProblem(_))
        ));
    }
}
