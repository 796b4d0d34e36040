//! Single-file model archive: a text manifest followed by little-endian
//! fixed-width numeric records. Loading reproduces the in-memory model
//! bit-for-bit, so online queries against a loaded archive match the
//! freshly trained model exactly.

use crate::cert::{ResidualGram, ScmConstraint, ScmData};
use crate::expr::ParamExpr;
use crate::geomap::{AffineDecomposition, AffineGroup, FormKind, FormTerm, ParamBox};
use crate::model::{GreedyRecord, RbModel};
use crate::rb::{ReducedBasis, ReducedOperators};
use nalgebra::{DMatrix, DVector};
use std::io::{self, Read, Write};
use std::rc::Rc;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"RBEA";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a model archive (bad magic)")]
    BadMagic,
    #[error("archive version {0} not supported (expected {VERSION})")]
    VersionMismatch(u32),
    #[error("archive is corrupt: {0}")]
    Corrupt(String),
}

/// Serialized offline product: everything `RbModel` needs plus the original
/// configuration text and a fingerprint of it.
pub struct ModelArchive {
    pub config_text: String,
    pub fingerprint: u64,
    pub model: RbModel,
}

/// FNV-1a over the canonical configuration text.
pub fn fingerprint(text: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn save(model: &RbModel, config_text: &str, w: &mut impl Write) -> Result<(), ArchiveError> {
    let mut out = Enc { w };
    out.bytes(MAGIC)?;
    out.u32(VERSION)?;
    out.str(config_text)?;
    out.u64(fingerprint(config_text))?;
    enc_decomp(&mut out, &model.decomp)?;
    enc_basis(&mut out, &model.primal)?;
    out.u8(model.dual.is_some() as u8)?;
    if let Some(du) = &model.dual {
        enc_basis(&mut out, du)?;
    }
    enc_reduced(&mut out, &model.red)?;
    enc_gram(&mut out, &model.gram)?;
    out.u8(model.gram_dual.is_some() as u8)?;
    if let Some(g) = &model.gram_dual {
        enc_gram(&mut out, g)?;
    }
    enc_scm(&mut out, &model.scm)?;
    out.u64(model.history.len() as u64)?;
    for h in &model.history {
        out.u64(h.n as u64)?;
        out.f64s(&h.mu)?;
        out.f64(h.max_bound)?;
    }
    Ok(())
}

pub fn load(r: &mut impl Read) -> Result<ModelArchive, ArchiveError> {
    let mut inp = Dec { r };
    let mut magic = [0u8; 4];
    inp.bytes(&mut magic)?;
    if &magic != MAGIC {
        return Err(ArchiveError::BadMagic);
    }
    let version = inp.u32()?;
    if version != VERSION {
        return Err(ArchiveError::VersionMismatch(version));
    }
    let config_text = inp.str()?;
    let fingerprint = inp.u64()?;
    let decomp = dec_decomp(&mut inp)?;
    let primal = dec_basis(&mut inp)?;
    let dual = if inp.u8()? == 1 {
        Some(dec_basis(&mut inp)?)
    } else {
        None
    };
    let red = dec_reduced(&mut inp)?;
    let gram = dec_gram(&mut inp)?;
    let gram_dual = if inp.u8()? == 1 {
        Some(dec_gram(&mut inp)?)
    } else {
        None
    };
    let scm = dec_scm(&mut inp)?;
    let n_hist = inp.u64()? as usize;
    let mut history = Vec::with_capacity(n_hist);
    for _ in 0..n_hist {
        let n = inp.u64()? as usize;
        let mu = inp.f64s()?;
        let max_bound = inp.f64()?;
        history.push(GreedyRecord { n, mu, max_bound });
    }
    Ok(ModelArchive {
        config_text,
        fingerprint,
        model: RbModel {
            decomp,
            primal,
            dual,
            red,
            gram,
            gram_dual,
            scm,
            history,
        },
    })
}

// --- primitive encoders -----------------------------------------------------

struct Enc<'a, W: Write> {
    w: &'a mut W,
}

impl<W: Write> Enc<'_, W> {
    fn bytes(&mut self, b: &[u8]) -> io::Result<()> {
        self.w.write_all(b)
    }
    fn u8(&mut self, v: u8) -> io::Result<()> {
        self.w.write_all(&[v])
    }
    fn u32(&mut self, v: u32) -> io::Result<()> {
        self.w.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> io::Result<()> {
        self.w.write_all(&v.to_le_bytes())
    }
    fn i32(&mut self, v: i32) -> io::Result<()> {
        self.w.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> io::Result<()> {
        self.w.write_all(&v.to_le_bytes())
    }
    fn f64s(&mut self, v: &[f64]) -> io::Result<()> {
        self.u64(v.len() as u64)?;
        for x in v {
            self.f64(*x)?;
        }
        Ok(())
    }
    fn str(&mut self, s: &str) -> io::Result<()> {
        self.u64(s.len() as u64)?;
        self.bytes(s.as_bytes())
    }
}

struct Dec<'a, R: Read> {
    r: &'a mut R,
}

impl<R: Read> Dec<'_, R> {
    fn bytes(&mut self, b: &mut [u8]) -> io::Result<()> {
        self.r.read_exact(b)
    }
    fn u8(&mut self) -> io::Result<u8> {
        let mut b = [0u8; 1];
        self.r.read_exact(&mut b)?;
        Ok(b[0])
    }
    fn u32(&mut self) -> io::Result<u32> {
        let mut b = [0u8; 4];
        self.r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> io::Result<u64> {
        let mut b = [0u8; 8];
        self.r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn i32(&mut self) -> io::Result<i32> {
        let mut b = [0u8; 4];
        self.r.read_exact(&mut b)?;
        Ok(i32::from_le_bytes(b))
    }
    fn f64(&mut self) -> io::Result<f64> {
        let mut b = [0u8; 8];
        self.r.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn f64s(&mut self) -> io::Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.f64()?);
        }
        Ok(v)
    }
    fn str(&mut self) -> Result<String, ArchiveError> {
        let n = self.u64()? as usize;
        let mut b = vec![0u8; n];
        self.r.read_exact(&mut b)?;
        String::from_utf8(b).map_err(|_| ArchiveError::Corrupt("non-utf8 string".into()))
    }
}

// --- expression trees --------------------------------------------------------

fn enc_expr<W: Write>(out: &mut Enc<W>, e: &ParamExpr) -> io::Result<()> {
    match e {
        ParamExpr::Const(v) => {
            out.u8(0)?;
            out.f64(*v)
        }
        ParamExpr::Param(i) => {
            out.u8(1)?;
            out.u32(*i as u32)
        }
        ParamExpr::Add(a, b) => {
            out.u8(2)?;
            enc_expr(out, a)?;
            enc_expr(out, b)
        }
        ParamExpr::Sub(a, b) => {
            out.u8(3)?;
            enc_expr(out, a)?;
            enc_expr(out, b)
        }
        ParamExpr::Mul(a, b) => {
            out.u8(4)?;
            enc_expr(out, a)?;
            enc_expr(out, b)
        }
        ParamExpr::Div(a, b) => {
            out.u8(5)?;
            enc_expr(out, a)?;
            enc_expr(out, b)
        }
        ParamExpr::Pow(a, k) => {
            out.u8(6)?;
            enc_expr(out, a)?;
            out.i32(*k)
        }
        ParamExpr::Sin(a) => {
            out.u8(7)?;
            enc_expr(out, a)
        }
        ParamExpr::Cos(a) => {
            out.u8(8)?;
            enc_expr(out, a)
        }
    }
}

fn dec_expr<R: Read>(inp: &mut Dec<R>) -> Result<ParamExpr, ArchiveError> {
    Ok(match inp.u8()? {
        0 => ParamExpr::Const(inp.f64()?),
        1 => ParamExpr::Param(inp.u32()? as usize),
        2 => ParamExpr::Add(Rc::new(dec_expr(inp)?), Rc::new(dec_expr(inp)?)),
        3 => ParamExpr::Sub(Rc::new(dec_expr(inp)?), Rc::new(dec_expr(inp)?)),
        4 => ParamExpr::Mul(Rc::new(dec_expr(inp)?), Rc::new(dec_expr(inp)?)),
        5 => ParamExpr::Div(Rc::new(dec_expr(inp)?), Rc::new(dec_expr(inp)?)),
        6 => {
            let a = dec_expr(inp)?;
            let k = inp.i32()?;
            ParamExpr::Pow(Rc::new(a), k)
        }
        7 => ParamExpr::Sin(Rc::new(dec_expr(inp)?)),
        8 => ParamExpr::Cos(Rc::new(dec_expr(inp)?)),
        t => return Err(ArchiveError::Corrupt(format!("bad expr tag {t}"))),
    })
}

// --- decomposition -----------------------------------------------------------

fn enc_form_kind<W: Write>(out: &mut Enc<W>, k: &FormKind) -> io::Result<()> {
    match k {
        FormKind::GradGrad { wi, wj, vi, vj } => {
            out.u8(0)?;
            out.u8(*wi)?;
            out.u8(*wj)?;
            out.u8(*vi)?;
            out.u8(*vj)
        }
        FormKind::GradDisp { wi, wj } => {
            out.u8(1)?;
            out.u8(*wi)?;
            out.u8(*wj)
        }
        FormKind::DispGrad { vi, vj } => {
            out.u8(2)?;
            out.u8(*vi)?;
            out.u8(*vj)
        }
        FormKind::DispDisp => out.u8(3),
        FormKind::BoundaryTrace { tag, comp } => {
            out.u8(4)?;
            out.u32(*tag)?;
            out.u8(*comp)
        }
        FormKind::OutputTrace { tag, comp } => {
            out.u8(5)?;
            out.u32(*tag)?;
            out.u8(*comp)
        }
    }
}

fn dec_form_kind<R: Read>(inp: &mut Dec<R>) -> Result<FormKind, ArchiveError> {
    Ok(match inp.u8()? {
        0 => FormKind::GradGrad {
            wi: inp.u8()?,
            wj: inp.u8()?,
            vi: inp.u8()?,
            vj: inp.u8()?,
        },
        1 => FormKind::GradDisp {
            wi: inp.u8()?,
            wj: inp.u8()?,
        },
        2 => FormKind::DispGrad {
            vi: inp.u8()?,
            vj: inp.u8()?,
        },
        3 => FormKind::DispDisp,
        4 => FormKind::BoundaryTrace {
            tag: inp.u32()?,
            comp: inp.u8()?,
        },
        5 => FormKind::OutputTrace {
            tag: inp.u32()?,
            comp: inp.u8()?,
        },
        t => return Err(ArchiveError::Corrupt(format!("bad form kind {t}"))),
    })
}

fn enc_groups<W: Write>(out: &mut Enc<W>, groups: &[AffineGroup]) -> io::Result<()> {
    out.u64(groups.len() as u64)?;
    for g in groups {
        enc_expr(out, &g.theta)?;
        out.u64(g.forms.len() as u64)?;
        for f in &g.forms {
            enc_form_kind(out, &f.kind)?;
            out.u32(f.region)?;
            out.u8(f.weight.0)?;
            out.u8(f.weight.1)?;
            out.f64(f.scale)?;
        }
    }
    Ok(())
}

fn dec_groups<R: Read>(inp: &mut Dec<R>) -> Result<Vec<AffineGroup>, ArchiveError> {
    let n = inp.u64()? as usize;
    let mut groups = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = dec_expr(inp)?;
        let nf = inp.u64()? as usize;
        let mut forms = Vec::with_capacity(nf);
        for _ in 0..nf {
            let kind = dec_form_kind(inp)?;
            let region = inp.u32()?;
            let weight = (inp.u8()?, inp.u8()?);
            let scale = inp.f64()?;
            forms.push(FormTerm {
                kind,
                region,
                weight,
                scale,
            });
        }
        groups.push(AffineGroup { theta, forms });
    }
    Ok(groups)
}

fn enc_decomp<W: Write>(out: &mut Enc<W>, d: &AffineDecomposition) -> io::Result<()> {
    enc_groups(out, &d.a)?;
    enc_groups(out, &d.f)?;
    enc_groups(out, &d.l)?;
    out.f64s(&d.box_.lo)?;
    out.f64s(&d.box_.hi)?;
    out.f64s(&d.mu_ref)?;
    out.u8(d.compliant as u8)?;
    out.u8(d.axisymmetric as u8)
}

fn dec_decomp<R: Read>(inp: &mut Dec<R>) -> Result<AffineDecomposition, ArchiveError> {
    let a = dec_groups(inp)?;
    let f = dec_groups(inp)?;
    let l = dec_groups(inp)?;
    let lo = inp.f64s()?;
    let hi = inp.f64s()?;
    let mu_ref = inp.f64s()?;
    let compliant = inp.u8()? == 1;
    let axisymmetric = inp.u8()? == 1;
    Ok(AffineDecomposition {
        a,
        f,
        l,
        box_: ParamBox::new(lo, hi),
        mu_ref,
        compliant,
        axisymmetric,
    })
}

// --- bases, reduced blocks, gram, scm ----------------------------------------

fn enc_basis<W: Write>(out: &mut Enc<W>, b: &ReducedBasis) -> io::Result<()> {
    out.u64(b.z.len() as u64)?;
    for z in &b.z {
        out.f64s(z)?;
    }
    out.u64(b.snapshot_params.len() as u64)?;
    for mu in &b.snapshot_params {
        out.f64s(mu)?;
    }
    Ok(())
}

fn dec_basis<R: Read>(inp: &mut Dec<R>) -> Result<ReducedBasis, ArchiveError> {
    let n = inp.u64()? as usize;
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        z.push(inp.f64s()?);
    }
    let ns = inp.u64()? as usize;
    let mut snapshot_params = Vec::with_capacity(ns);
    for _ in 0..ns {
        snapshot_params.push(inp.f64s()?);
    }
    Ok(ReducedBasis { z, snapshot_params })
}

fn enc_matrix<W: Write>(out: &mut Enc<W>, m: &DMatrix<f64>) -> io::Result<()> {
    out.u64(m.nrows() as u64)?;
    out.u64(m.ncols() as u64)?;
    for v in m.iter() {
        out.f64(*v)?;
    }
    Ok(())
}

fn dec_matrix<R: Read>(inp: &mut Dec<R>) -> Result<DMatrix<f64>, ArchiveError> {
    let r = inp.u64()? as usize;
    let c = inp.u64()? as usize;
    let mut m = DMatrix::zeros(r, c);
    for v in m.iter_mut() {
        *v = inp.f64()?;
    }
    Ok(m)
}

fn enc_vectors<W: Write>(out: &mut Enc<W>, vs: &[DVector<f64>]) -> io::Result<()> {
    out.u64(vs.len() as u64)?;
    for v in vs {
        out.f64s(v.as_slice())?;
    }
    Ok(())
}

fn dec_vectors<R: Read>(inp: &mut Dec<R>) -> Result<Vec<DVector<f64>>, ArchiveError> {
    let n = inp.u64()? as usize;
    let mut vs = Vec::with_capacity(n);
    for _ in 0..n {
        vs.push(DVector::from_vec(inp.f64s()?));
    }
    Ok(vs)
}

fn enc_matrices<W: Write>(out: &mut Enc<W>, ms: &[DMatrix<f64>]) -> io::Result<()> {
    out.u64(ms.len() as u64)?;
    for m in ms {
        enc_matrix(out, m)?;
    }
    Ok(())
}

fn dec_matrices<R: Read>(inp: &mut Dec<R>) -> Result<Vec<DMatrix<f64>>, ArchiveError> {
    let n = inp.u64()? as usize;
    let mut ms = Vec::with_capacity(n);
    for _ in 0..n {
        ms.push(dec_matrix(inp)?);
    }
    Ok(ms)
}

fn enc_reduced<W: Write>(out: &mut Enc<W>, r: &ReducedOperators) -> io::Result<()> {
    out.u64(r.n_max as u64)?;
    out.u64(r.n_max_du as u64)?;
    enc_matrices(out, &r.kq_n)?;
    enc_vectors(out, &r.fq_n)?;
    enc_vectors(out, &r.lq_n)?;
    enc_matrices(out, &r.kq_du)?;
    enc_matrices(out, &r.kq_du_pr)?;
    enc_vectors(out, &r.fq_du)?;
    enc_vectors(out, &r.lq_du)
}

fn dec_reduced<R: Read>(inp: &mut Dec<R>) -> Result<ReducedOperators, ArchiveError> {
    Ok(ReducedOperators {
        n_max: inp.u64()? as usize,
        n_max_du: inp.u64()? as usize,
        kq_n: dec_matrices(inp)?,
        fq_n: dec_vectors(inp)?,
        lq_n: dec_vectors(inp)?,
        kq_du: dec_matrices(inp)?,
        kq_du_pr: dec_matrices(inp)?,
        fq_du: dec_vectors(inp)?,
        lq_du: dec_vectors(inp)?,
    })
}

fn enc_gram<W: Write>(out: &mut Enc<W>, g: &ResidualGram) -> io::Result<()> {
    out.u64(g.n as u64)?;
    enc_matrix(out, &g.cff)?;
    out.u64(g.cfa.len() as u64)?;
    for row in &g.cfa {
        enc_vectors(out, row)?;
    }
    out.u64(g.caa.len() as u64)?;
    for row in &g.caa {
        enc_matrices(out, row)?;
    }
    Ok(())
}

fn dec_gram<R: Read>(inp: &mut Dec<R>) -> Result<ResidualGram, ArchiveError> {
    let n = inp.u64()? as usize;
    let cff = dec_matrix(inp)?;
    let qa = inp.u64()? as usize;
    let mut cfa = Vec::with_capacity(qa);
    for _ in 0..qa {
        cfa.push(dec_vectors(inp)?);
    }
    let qa2 = inp.u64()? as usize;
    let mut caa = Vec::with_capacity(qa2);
    for _ in 0..qa2 {
        caa.push(dec_matrices(inp)?);
    }
    Ok(ResidualGram::from_parts(cff, cfa, caa, n))
}

fn enc_scm<W: Write>(out: &mut Enc<W>, s: &ScmData) -> io::Result<()> {
    out.u64(s.y_box.len() as u64)?;
    for (lo, hi) in &s.y_box {
        out.f64(*lo)?;
        out.f64(*hi)?;
    }
    out.u64(s.constraints.len() as u64)?;
    for c in &s.constraints {
        out.f64s(&c.mu)?;
        out.f64(c.alpha)?;
        out.f64s(&c.y_star)?;
        out.f64s(&c.theta)?;
    }
    out.u64(s.m_near as u64)?;
    out.f64s(&s.box_widths)
}

fn dec_scm<R: Read>(inp: &mut Dec<R>) -> Result<ScmData, ArchiveError> {
    let nb = inp.u64()? as usize;
    let mut y_box = Vec::with_capacity(nb);
    for _ in 0..nb {
        y_box.push((inp.f64()?, inp.f64()?));
    }
    let nc = inp.u64()? as usize;
    let mut constraints = Vec::with_capacity(nc);
    for _ in 0..nc {
        constraints.push(ScmConstraint {
            mu: inp.f64s()?,
            alpha: inp.f64()?,
            y_star: inp.f64s()?,
            theta: inp.f64s()?,
        });
    }
    let m_near = inp.u64()? as usize;
    let box_widths = inp.f64s()?;
    Ok(ScmData {
        y_box,
        constraints,
        m_near,
        box_widths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expr_roundtrip() {
        let e = (ParamExpr::param(0) + ParamExpr::constant(2.5)) * ParamExpr::param(1).cos()
            / ParamExpr::param(2).pow(3);
        let mut buf = Vec::new();
        enc_expr(&mut Enc { w: &mut buf }, &e).unwrap();
        let d = dec_expr(&mut Dec {
            r: &mut buf.as_slice(),
        })
        .unwrap();
        let mu = [1.3, 0.4, 1.7];
        assert_eq!(e.eval(&mu).to_bits(), d.eval(&mu).to_bits());
    }

    #[test]
    fn fingerprint_is_stable() {
        assert_eq!(fingerprint("abc"), fingerprint("abc"));
        assert_ne!(fingerprint("abc"), fingerprint("abd"));
    }
}
