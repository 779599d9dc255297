//! Batch driver for the `cusps` library: argument parsing, file formats
//! (JSON, CSV, OBJ) and dispatch.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cusps::classification::{
    are_conjugate, are_marked_conjugate, dim2_normal_form, dim2_teich, dim2_teich_inverse,
    lattice_invariants, recover_psi, theta_map, AnisotropyCoset, Dim2Family, Dim2Params,
    MarkedLattice,
};
use cusps::domain::{Domain, WeylVector};
use cusps::groups::{
    classify_element, radial_flow, semidirect_decompose, translation, ElementClass,
    Factorization, TranslationParams,
};
use cusps::metrics::{beta_form, hilbert_distance, shrink_profile, ShrinkProfile};
use cusps::volume::{
    busemann_density, cusp_volume, decay_series, default_tail_grid, finiteness_verdict,
    DecaySeries, Exec, Verdict, VolumeEstimate, VolumeOptions,
};
use cusps::CuspError;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Cusp(#[from] CuspError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Cusp(e) => e.kind(),
            CliError::Usage(_) => "Usage",
            CliError::Io(_) => "Io",
        }
    }

    /// `{"error": {"kind": ..., "message": ...}}`.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
            .to_string()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Obj,
}

#[derive(Debug, Parser)]
#[command(name = "cusps", version, about = "Generalized cusp geometry toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Weyl vector, comma separated; entries may be rationals `p/q`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub psi: Option<String>,
    /// Dimension; must match the length of `--psi` when both are given.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Grid resolution (sphere directions, mesh cells per axis).
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    /// Output path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Boundary and horosphere meshes.
    Domain {
        #[command(subcommand)]
        cmd: DomainCmd,
    },
    /// Pointwise horofunction data.
    Eval {
        #[arg(value_enum)]
        what: EvalWhat,
        /// Points, each comma separated; repeatable.
        #[arg(long = "point", required = true, allow_hyphen_values = true)]
        points: Vec<String>,
    },
    /// Hilbert distance between two interior points.
    Dist {
        #[arg(long, allow_hyphen_values = true)]
        p: String,
        #[arg(long, allow_hyphen_values = true)]
        q: String,
    },
    /// Group elements: construction, classification, decomposition.
    Group {
        #[command(subcommand)]
        cmd: GroupCmd,
    },
    /// Two-dimensional Teichmüller parameters.
    Teich {
        #[command(subcommand)]
        cmd: TeichCmd,
    },
    /// Lattice invariants, conjugacy, Θ and ψ recovery.
    Classify {
        #[command(subcommand)]
        cmd: ClassifyCmd,
    },
    /// Busemann density, cross sections and cusp volume.
    Volume {
        #[command(subcommand)]
        cmd: VolumeCmd,
    },
    /// Shrinking-distance profiles along the flow.
    Profile {
        #[command(subcommand)]
        cmd: ProfileCmd,
    },
}

#[derive(Debug, Subcommand)]
pub enum DomainCmd {
    /// OBJ surfaces for n = 3, CSV polylines for n = 2.
    Mesh {
        /// Horofunction levels; 0 is the boundary.
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        levels: String,
        /// Half-width of the chart parameter window.
        #[arg(long, default_value_t = 2.0)]
        extent: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalWhat {
    H,
    Grad,
    Beta,
}

#[derive(Debug, Subcommand)]
pub enum GroupCmd {
    /// `Φ_s · m*(chart)`.
    Element {
        /// Chart parameters `(X, Y)`.
        #[arg(long, allow_hyphen_values = true)]
        chart: String,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        s: f64,
    },
    /// Elliptic / parabolic / hyperbolic.
    Classify {
        /// Matrix rows separated by `;`.
        #[arg(long, allow_hyphen_values = true)]
        matrix: String,
    },
    /// `g = Φ_s · m*(X, Y) · o`.
    Decompose {
        #[arg(long, allow_hyphen_values = true)]
        matrix: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum TeichCmd {
    /// Forward map from `--y y1 y2`, or inverse and normal form from `--matrix`.
    Dim2 {
        #[arg(long, num_args = 2, allow_hyphen_values = true)]
        y: Option<Vec<f64>>,
        #[arg(long, allow_hyphen_values = true)]
        matrix: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct LatticeArg {
    /// Chart translation vectors separated by `;`.
    #[arg(long, allow_hyphen_values = true)]
    pub basis: Option<String>,
    /// JSON file holding a marked lattice.
    #[arg(long)]
    pub lattice: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ClassifyCmd {
    /// Gram matrix and anisotropy coset.
    Lattice {
        #[command(flatten)]
        lattice: LatticeArg,
    },
    /// Conjugacy of two lattices.
    Conjugate {
        #[command(flatten)]
        lattice: LatticeArg,
        #[arg(long, allow_hyphen_values = true)]
        other: String,
    },
    /// `Θ(class, coset)`.
    Theta {
        #[command(flatten)]
        lattice: LatticeArg,
        /// Orthogonal coset representative, rows separated by `;`.
        #[arg(long, allow_hyphen_values = true)]
        coset: Option<String>,
        /// Rotation angle for two-dimensional charts.
        #[arg(long, allow_hyphen_values = true)]
        angle: Option<f64>,
    },
    /// ψ up to scale from commuting generators.
    Recover {
        #[arg(long = "matrix", required = true, allow_hyphen_values = true)]
        matrices: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum VolumeCmd {
    /// Busemann density at an interior point (n = 2, 3).
    Density {
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
    /// Cross-section series over `--t`.
    Section {
        #[arg(long, allow_hyphen_values = true)]
        t: String,
        #[command(flatten)]
        lattice: LatticeArg,
    },
    /// Stratified estimate of the cusp volume down to Hilbert depth `--depth`.
    Cusp {
        #[command(flatten)]
        lattice: LatticeArg,
        #[arg(long)]
        depth: f64,
        #[arg(long)]
        sequential: bool,
    },
    /// Finite or infinite cusp volume for `--psi`.
    Verdict {
        /// Also fit the cross-section tail.
        #[arg(long)]
        numeric: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum ProfileCmd {
    /// Distance between flowed points against flow depth, with the log-slope fit.
    Shrink {
        #[arg(long, allow_hyphen_values = true)]
        p: String,
        #[arg(long, allow_hyphen_values = true)]
        q: String,
        #[arg(long, default_value = "1,10,100,1000,10000")]
        t: String,
    },
}

/// Locale-independent 17-significant-digit rendering.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_scalar(tok: &str) -> CliResult<(f64, bool)> {
    let tok = tok.trim();
    if let Some((a, b)) = tok.split_once('/') {
        let num: f64 = a.trim().parse().map_err(|_| usage(format!("bad number `{tok}`")))?;
        let den: f64 = b.trim().parse().map_err(|_| usage(format!("bad number `{tok}`")))?;
        if den == 0.0 {
            return Err(usage(format!("zero denominator in `{tok}`")));
        }
        return Ok((num / den, true));
    }
    let v: f64 = tok.parse().map_err(|_| usage(format!("bad number `{tok}`")))?;
    let exact = !tok.contains(['.', 'e', 'E']);
    Ok((v, exact))
}

pub fn parse_vec(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| parse_scalar(t).map(|v| v.0))
        .collect()
}

/// Rows separated by `;`, entries by `,`.
pub fn parse_matrix(s: &str) -> CliResult<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .filter(|r| !r.trim().is_empty())
        .map(parse_vec)
        .collect::<CliResult<_>>()?;
    let ncols = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() || rows.iter().any(|r| r.len() != ncols) {
        return Err(usage("matrix rows must be non-empty and of equal length"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Parsed ψ plus warnings about decimal near-ties snapped together.
pub fn parse_psi(s: &str) -> CliResult<(WeylVector, Vec<String>)> {
    let parsed: Vec<(f64, bool)> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(parse_scalar)
        .collect::<CliResult<_>>()?;
    let mut coeffs: Vec<f64> = parsed.iter().map(|p| p.0).collect();
    let mut warnings = Vec::new();
    for i in 1..coeffs.len() {
        let exact = parsed[i].1 && parsed[i - 1].1;
        let (a, b) = (coeffs[i - 1], coeffs[i]);
        if !exact && a != b && (a - b).abs() <= 1e-12 * a.abs().max(1.0) {
            warnings.push(format!(
                "psi entries {} and {} differ by {:e}; treated as equal",
                i - 1,
                i,
                (a - b).abs()
            ));
            coeffs[i] = a;
        }
    }
    Ok((WeylVector::new(coeffs)?, warnings))
}

/// Horosphere graphs over a square chart window as an OBJ document with one
/// group per level.
pub fn export_mesh(d: &Domain, levels: &[f64], resolution: usize, extent: f64) -> CliResult<String> {
    if d.n() != 3 {
        return Err(CuspError::UnsupportedDimension(d.n()).into());
    }
    let res = resolution.max(2);
    let coord = |i: usize| -extent + 2.0 * extent * i as f64 / res as f64;
    let (r, u) = (d.shape.r, d.shape.u);
    let mut out = String::new();
    let mut offset = 0usize;
    for (li, &level) in levels.iter().enumerate() {
        let _ = writeln!(out, "g level_{li}");
        for i in 0..res {
            for j in 0..res {
                let chart = [coord(i), coord(j)];
                let p = d.horosphere_point(&chart[..r], &chart[r..r + u], level)?;
                let _ = writeln!(out, "v {} {} {}", fmt_num(p[0]), fmt_num(p[1]), fmt_num(p[2]));
            }
        }
        for i in 0..res - 1 {
            for j in 0..res - 1 {
                let a = offset + i * res + j + 1;
                let b = a + 1;
                let c = a + res;
                let e = c + 1;
                let _ = writeln!(out, "f {a} {b} {e}");
                let _ = writeln!(out, "f {a} {e} {c}");
            }
        }
        offset += res * res;
    }
    Ok(out)
}

/// CSV polylines `level,x0,x1` of the horospheres for `n = 2`.
pub fn export_polylines(d: &Domain, levels: &[f64], resolution: usize, extent: f64) -> CliResult<String> {
    if d.n() != 2 {
        return Err(CuspError::UnsupportedDimension(d.n()).into());
    }
    let res = resolution.max(2);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["level", "x0", "x1"]).map_err(io)?;
    let r = d.shape.r;
    for &level in levels {
        for i in 0..=res {
            let c = [-extent + 2.0 * extent * i as f64 / res as f64];
            let p = d.horosphere_point(&c[..r], &c[r..], level)?;
            w.write_record([fmt_num(level), fmt_num(p[0]), fmt_num(p[1])])
                .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub point: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementReport {
    pub matrix: Vec<Vec<f64>>,
    pub factorization: Option<Factorization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: ElementClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeichReport {
    pub params: Dim2Params,
    pub matrix: Vec<Vec<f64>>,
    pub family: Option<Dim2Family>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantsReport {
    pub gram: Vec<Vec<f64>>,
    pub coset: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyReport {
    pub conjugate: bool,
    pub marked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverReport {
    pub psi: Vec<f64>,
    pub conjugator: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub point: Vec<f64>,
    pub density: f64,
}

/// Result of one invocation: the rendered artifact and any warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub body: String,
    pub warnings: Vec<String>,
}

struct Ctx {
    domain: Option<Domain>,
    warnings: Vec<String>,
    format: Option<Format>,
    seed: u64,
    resolution: Option<usize>,
}

impl Ctx {
    fn domain(&self) -> CliResult<&Domain> {
        self.domain.as_ref().ok_or_else(|| usage("--psi is required"))
    }

    fn format(&self, default: Format, allowed: &[Format]) -> CliResult<Format> {
        let f = self.format.unwrap_or(default);
        if !allowed.contains(&f) {
            return Err(usage(format!("format {f:?} is not available here")));
        }
        Ok(f)
    }

    fn point(&self, s: &str) -> CliResult<Vec<f64>> {
        let p = parse_vec(s)?;
        let n = self.domain()?.n();
        if p.len() != n {
            return Err(CuspError::DimensionMismatch {
                expected: n,
                got: p.len(),
            }
            .into());
        }
        Ok(p)
    }

    fn lattice(&self, arg: &LatticeArg) -> CliResult<MarkedLattice> {
        match (&arg.basis, &arg.lattice) {
            (Some(b), None) => self.lattice_from_basis(b),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(e.to_string()))?;
                let l: MarkedLattice =
                    serde_json::from_str(&text).map_err(|e| usage(format!("lattice JSON: {e}")))?;
                l.validate()?;
                Ok(l)
            }
            _ => Err(usage("give exactly one of --basis or --lattice")),
        }
    }

    fn lattice_from_basis(&self, s: &str) -> CliResult<MarkedLattice> {
        let d = self.domain()?;
        let gens = parse_matrix(s)?;
        Ok(MarkedLattice::from_chart_basis(&d.psi, &gens.transpose())?)
    }
}

fn json<T: Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Io(e.to_string()))
}

fn csv_rows(header: &[String], rows: &[Vec<f64>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r.iter().map(|v| fmt_num(*v))).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

/// Execute a parsed command and render its artifact.
pub fn run(cli: &Cli) -> CliResult<Output> {
    let g = &cli.global;
    let mut ctx = Ctx {
        domain: None,
        warnings: Vec::new(),
        format: g.format,
        seed: g.seed,
        resolution: g.resolution,
    };
    if let Some(p) = &g.psi {
        let (psi, warnings) = parse_psi(p)?;
        if let Some(n) = g.n {
            if n != psi.n() {
                return Err(CuspError::DimensionMismatch {
                    expected: n,
                    got: psi.n(),
                }
                .into());
            }
        }
        ctx.warnings = warnings;
        ctx.domain = Some(Domain::new(psi)?);
    } else if let Some(n) = g.n {
        ctx.domain = Some(Domain::new(WeylVector::zero(n))?);
    }
    let body = dispatch(&cli.command, &ctx)?;
    Ok(Output {
        body,
        warnings: ctx.warnings,
    })
}

fn dispatch(cmd: &Command, ctx: &Ctx) -> CliResult<String> {
    match cmd {
        Command::Domain {
            cmd: DomainCmd::Mesh { levels, extent },
        } => {
            let d = ctx.domain()?;
            let levels = parse_vec(levels)?;
            let res = ctx.resolution.unwrap_or(32);
            if d.n() == 3 {
                ctx.format(Format::Obj, &[Format::Obj])?;
                export_mesh(d, &levels, res, *extent)
            } else {
                ctx.format(Format::Csv, &[Format::Csv])?;
                export_polylines(d, &levels, res, *extent)
            }
        }
        Command::Eval { what, points } => {
            let d = ctx.domain()?;
            let rows = points
                .iter()
                .map(|s| {
                    let p = ctx.point(s)?;
                    let values = match what {
                        EvalWhat::H => vec![d.horofunction(&p, 0)?.value],
                        EvalWhat::Grad => d.horofunction(&p, 1)?.gradient.unwrap().as_slice().to_vec(),
                        EvalWhat::Beta => {
                            let b = beta_form(d, &p)?.beta_gram;
                            matrix_rows(&b).concat()
                        }
                    };
                    Ok(EvalRow { point: p, values })
                })
                .collect::<CliResult<Vec<_>>>()?;
            match ctx.format(Format::Csv, &[Format::Csv, Format::Json])? {
                Format::Json => json(&rows),
                _ => {
                    let n = d.n();
                    let mut header: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
                    let k = rows.first().map(|r| r.values.len()).unwrap_or(0);
                    header.extend((0..k).map(|i| format!("v{i}")));
                    let flat: Vec<Vec<f64>> =
                        rows.iter().map(|r| [r.point.clone(), r.values.clone()].concat()).collect();
                    csv_rows(&header, &flat)
                }
            }
        }
        Command::Dist { p, q } => {
            ctx.format(Format::Json, &[Format::Json])?;
            let d = ctx.domain()?;
            let (p, q) = (ctx.point(p)?, ctx.point(q)?);
            let distance = hilbert_distance(d, &p, &q)?;
            json(&DistanceReport { p, q, distance })
        }
        Command::Group { cmd } => {
            ctx.format(Format::Json, &[Format::Json])?;
            match cmd {
                GroupCmd::Element { chart, s } => {
                    let d = ctx.domain()?;
                    let params = TranslationParams::from_chart(d, &parse_vec(chart)?)?;
                    let m = translation(d, &params)?;
                    let g = radial_flow(d, *s).compose(&m);
                    let factorization = semidirect_decompose(d, &g.matrix).ok();
                    json(&ElementReport {
                        matrix: matrix_rows(&g.matrix),
                        factorization,
                    })
                }
                GroupCmd::Classify { matrix } => {
                    let class = classify_element(&parse_matrix(matrix)?)?;
                    json(&ClassReport { class })
                }
                GroupCmd::Decompose { matrix } => {
                    let d = ctx.domain()?;
                    let m = parse_matrix(matrix)?;
                    let f = semidirect_decompose(d, &m)?;
                    json(&ElementReport {
                        matrix: matrix_rows(&m),
                        factorization: Some(f),
                    })
                }
            }
        }
        Command::Teich {
            cmd: TeichCmd::Dim2 { y, matrix },
        } => {
            ctx.format(Format::Json, &[Format::Json])?;
            match (y, matrix) {
                (Some(y), None) => {
                    let params = Dim2Params::new(y[0], y[1])?;
                    let m = dim2_teich(&params)?;
                    json(&TeichReport {
                        params,
                        matrix: matrix_rows(&m),
                        family: None,
                    })
                }
                (None, Some(m)) => {
                    let m = parse_matrix(m)?;
                    let params = dim2_teich_inverse(&m)?;
                    let family = dim2_normal_form(&m).ok();
                    json(&TeichReport {
                        params,
                        matrix: matrix_rows(&m),
                        family,
                    })
                }
                _ => Err(usage("give exactly one of --y or --matrix")),
            }
        }
        Command::Classify { cmd } => {
            ctx.format(Format::Json, &[Format::Json])?;
            match cmd {
                ClassifyCmd::Lattice { lattice } => {
                    let inv = lattice_invariants(&ctx.lattice(lattice)?)?;
                    json(&InvariantsReport {
                        gram: matrix_rows(&inv.gram),
                        coset: matrix_rows(&inv.coset.representative),
                    })
                }
                ClassifyCmd::Conjugate { lattice, other } => {
                    let l1 = ctx.lattice(lattice)?;
                    let l2 = ctx.lattice_from_basis(other)?;
                    json(&ConjugacyReport {
                        conjugate: are_conjugate(&l1, &l2)?,
                        marked: are_marked_conjugate(&l1, &l2)?,
                    })
                }
                ClassifyCmd::Theta {
                    lattice,
                    coset,
                    angle,
                } => {
                    let l = ctx.lattice(lattice)?;
                    let rep = match (coset, angle) {
                        (Some(c), None) => parse_matrix(c)?,
                        (None, Some(a)) => DMatrix::from_row_slice(
                            2,
                            2,
                            &[a.cos(), -a.sin(), a.sin(), a.cos()],
                        ),
                        (None, None) => {
                            let k = l.chart_basis()?.nrows();
                            DMatrix::identity(k, k)
                        }
                        _ => return Err(usage("give at most one of --coset or --angle")),
                    };
                    json(&theta_map(&l, &AnisotropyCoset::new(rep)?)?)
                }
                ClassifyCmd::Recover { matrices } => {
                    let ms = matrices
                        .iter()
                        .map(|m| parse_matrix(m))
                        .collect::<CliResult<Vec<_>>>()?;
                    let r = recover_psi(&ms)?;
                    json(&RecoverReport {
                        psi: r.psi,
                        conjugator: matrix_rows(&r.conjugator),
                    })
                }
            }
        }
        Command::Volume { cmd } => {
            let d = ctx.domain()?;
            match cmd {
                VolumeCmd::Density { point } => {
                    ctx.format(Format::Json, &[Format::Json])?;
                    let p = ctx.point(point)?;
                    let density = busemann_density(d, &p, ctx.resolution)?;
                    json(&DensityReport { point: p, density })
                }
                VolumeCmd::Section { t, lattice } => {
                    let grid = parse_vec(t)?;
                    let k = d.n() - 1;
                    let patch = if lattice.basis.is_some() || lattice.lattice.is_some() {
                        ctx.lattice(lattice)?.chart_basis()?
                    } else {
                        DMatrix::identity(k, k)
                    };
                    let series: DecaySeries = decay_series(d, &patch, &grid, ctx.resolution)?;
                    match ctx.format(Format::Csv, &[Format::Csv, Format::Json])? {
                        Format::Json => json(&series),
                        _ => csv_rows(
                            &["t".into(), "cross_section".into(), "kappa".into()],
                            &series
                                .rows
                                .iter()
                                .map(|r| vec![r.t, r.cross_section, r.kappa])
                                .collect::<Vec<_>>(),
                        ),
                    }
                }
                VolumeCmd::Cusp {
                    lattice,
                    depth,
                    sequential,
                } => {
                    ctx.format(Format::Json, &[Format::Json])?;
                    let l = ctx.lattice(lattice)?;
                    let opts = VolumeOptions {
                        resolution: ctx.resolution,
                        seed: ctx.seed,
                        exec: if *sequential { Exec::Sequential } else { Exec::Parallel },
                        ..Default::default()
                    };
                    let v: VolumeEstimate = cusp_volume(&l, *depth, &opts)?;
                    json(&v)
                }
                VolumeCmd::Verdict { numeric } => {
                    ctx.format(Format::Json, &[Format::Json])?;
                    let grid = default_tail_grid();
                    let v: Verdict = finiteness_verdict(
                        d,
                        numeric.then_some((grid.as_slice(), ctx.resolution)),
                    )?;
                    json(&v)
                }
            }
        }
        Command::Profile {
            cmd: ProfileCmd::Shrink { p, q, t },
        } => {
            let d = ctx.domain()?;
            let prof: ShrinkProfile = shrink_profile(d, &ctx.point(p)?, &ctx.point(q)?, &parse_vec(t)?)?;
            match ctx.format(Format::Csv, &[Format::Csv, Format::Json])? {
                Format::Json => json(&prof),
                _ => csv_rows(
                    &["t".into(), "f".into(), "d".into()],
                    &prof.rows.iter().map(|r| vec![r.t, r.f, r.d]).collect::<Vec<_>>(),
                ),
            }
        }
    }
}
