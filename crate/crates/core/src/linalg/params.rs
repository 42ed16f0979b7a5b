//! The parameter registry: every weight matrix, bias, the embedding table and
//! the classifier, in one fixed, named order.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

pub const PARAM_FORMAT_VERSION: u32 = 1;
const PARAM_MAGIC: &[u8; 8] = b"SLSTMPRM";

macro_rules! params {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// Identifies one named tensor in a [`ParamSet`].
        ///
        /// Matrix names follow `W_<source><target>_<child side>`; biases are `b_<target>`.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Param {
            $($variant),+
        }

        impl Param {
            /// Every parameter, in storage and serialization order.
            pub const ALL: &'static [Param] = &[$(Param::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $(Param::$variant => $name),+
                }
            }
        }
    };
}

params! {
    WhiL => "W_hi_L",
    WhiR => "W_hi_R",
    WciL => "W_ci_L",
    WciR => "W_ci_R",
    Bi => "b_i",
    WhflL => "W_hf_l_L",
    WhflR => "W_hf_l_R",
    WcflL => "W_cf_l_L",
    WcflR => "W_cf_l_R",
    Bfl => "b_fl",
    WhfrL => "W_hf_r_L",
    WhfrR => "W_hf_r_R",
    WcfrL => "W_cf_r_L",
    WcfrR => "W_cf_r_R",
    Bfr => "b_fr",
    WhxL => "W_hx_L",
    WhxR => "W_hx_R",
    Bx => "b_x",
    WhoL => "W_ho_L",
    WhoR => "W_ho_R",
    Wco => "W_co",
    Bo => "b_o",
    Embedding => "embedding",
    Ws => "W_s",
    Bs => "b_s",
}

impl Param {
    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL.iter().copied().find(|p| p.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_bias(self) -> bool {
        matches!(
            self,
            Param::Bi | Param::Bfl | Param::Bfr | Param::Bx | Param::Bo | Param::Bs
        )
    }

    /// The parameter playing the same role for the opposite child, if the
    /// parameter is side-specific. The two forget gates also swap roles, so
    /// `W_hf_l_L` mirrors to `W_hf_r_R`.
    pub fn mirror(self) -> Param {
        use Param::*;
        match self {
            WhiL => WhiR,
            WhiR => WhiL,
            WciL => WciR,
            WciR => WciL,
            WhflL => WhfrR,
            WhflR => WhfrL,
            WcflL => WcfrR,
            WcflR => WcfrL,
            WhfrL => WhflR,
            WhfrR => WhflL,
            WcfrL => WcflR,
            WcfrR => WcflL,
            Bfl => Bfr,
            Bfr => Bfl,
            WhxL => WhxR,
            WhxR => WhxL,
            WhoL => WhoR,
            WhoR => WhoL,
            other => other,
        }
    }
}

/// Sizes that fully determine the shape of every parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub num_classes: usize,
}

impl ModelDims {
    pub fn new(hidden_dim: usize, vocab_size: usize, num_classes: usize) -> Self {
        ModelDims {
            hidden_dim,
            vocab_size,
            num_classes,
        }
    }

    /// Word vectors are the leaves' hidden states, so they share the hidden width.
    pub fn embed_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn shape_of(&self, p: Param) -> (usize, usize) {
        let d = self.hidden_dim;
        match p {
            Param::Embedding => (self.vocab_size, self.embed_dim()),
            Param::Ws => (self.num_classes, d),
            Param::Bs => (self.num_classes, 1),
            p if p.is_bias() => (d, 1),
            _ => (d, d),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.vocab_size == 0 || self.num_classes == 0 {
            return Err(Error::Config(format!(
                "model dimensions must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// All trainable tensors, stored in [`Param::ALL`] order. Biases are `d x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    dims: ModelDims,
    tensors: Vec<Matrix>,
}

impl ParamSet {
    pub fn zeros(dims: ModelDims) -> Self {
        let tensors = Param::ALL
            .iter()
            .map(|&p| {
                let (r, c) = dims.shape_of(p);
                Matrix::zeros(r, c)
            })
            .collect();
        ParamSet { dims, tensors }
    }

    /// Seeded initialization: weight matrices uniform in ±1/√fan_in, biases
    /// zero, embeddings uniform in ±0.1.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut params = ParamSet::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for &p in Param::ALL {
            if p.is_bias() {
                continue;
            }
            let m = &mut params.tensors[p.index()];
            let r = if p == Param::Embedding {
                0.1
            } else {
                1.0 / (m.cols() as f64).sqrt()
            };
            for w in m.as_mut_slice() {
                *w = rng.gen_range(-r..=r);
            }
        }
        Ok(params)
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn hidden_dim(&self) -> usize {
        self.dims.hidden_dim
    }

    pub fn num_classes(&self) -> usize {
        self.dims.num_classes
    }

    pub fn vocab_size(&self) -> usize {
        self.dims.vocab_size
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        let p = Param::from_name(name).ok_or_else(|| Error::UnknownParam(name.into()))?;
        Ok(&self[p])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Param, &Matrix)> {
        Param::ALL.iter().copied().zip(&self.tensors)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (Param, &mut Matrix)> {
        Param::ALL.iter().copied().zip(self.tensors.iter_mut())
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|m| m.as_slice().len()).sum()
    }

    /// ‖θ‖² over every entry, embeddings and classifier included.
    pub fn squared_norm(&self) -> f64 {
        self.tensors.iter().map(Matrix::sum_of_squares).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }

    /// Writes the versioned binary dump: header, then every entry as
    /// name, shape and little-endian `f64` values.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(PARAM_MAGIC)?;
        w.write_all(&PARAM_FORMAT_VERSION.to_le_bytes())?;
        for n in [
            self.dims.hidden_dim,
            self.dims.vocab_size,
            self.dims.num_classes,
        ] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (p, m) in self.iter() {
            let name = p.name().as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&(m.rows() as u64).to_le_bytes())?;
            w.write_all(&(m.cols() as u64).to_le_bytes())?;
            for v in m.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != PARAM_MAGIC {
            return Err(Error::Format("not a parameter dump (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != PARAM_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: PARAM_FORMAT_VERSION,
            });
        }
        let dims = ModelDims {
            hidden_dim: read_u64(r)? as usize,
            vocab_size: read_u64(r)? as usize,
            num_classes: read_u64(r)? as usize,
        };
        dims.validate()
            .map_err(|e| Error::Format(format!("bad header: {e}")))?;
        let count = read_u32(r)? as usize;
        if count != Param::ALL.len() {
            return Err(Error::Format(format!(
                "expected {} entries, found {count}",
                Param::ALL.len()
            )));
        }
        let mut tensors = Vec::with_capacity(count);
        for &p in Param::ALL {
            let len = read_u32(r)? as usize;
            if len > 256 {
                return Err(Error::Format(format!("entry name length {len} too long")));
            }
            let mut name = vec![0u8; len];
            read_exact(r, &mut name)?;
            if name != p.name().as_bytes() {
                return Err(Error::Format(format!(
                    "expected entry `{}`, found `{}`",
                    p.name(),
                    String::from_utf8_lossy(&name)
                )));
            }
            let shape = (read_u64(r)? as usize, read_u64(r)? as usize);
            if shape != dims.shape_of(p) {
                return Err(Error::shape(
                    format!("entry `{}`", p.name()),
                    format!("{:?}", dims.shape_of(p)),
                    format!("{shape:?}"),
                ));
            }
            let mut data = vec![0.0; shape.0 * shape.1];
            let mut buf = [0u8; 8];
            for v in &mut data {
                read_exact(r, &mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            tensors.push(Matrix::from_vec(shape.0, shape.1, data)?);
        }
        Ok(ParamSet { dims, tensors })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }
}

impl Index<Param> for ParamSet {
    type Output = Matrix;
    fn index(&self, p: Param) -> &Matrix {
        &self.tensors[p.index()]
    }
}

impl IndexMut<Param> for ParamSet {
    fn index_mut(&mut self, p: Param) -> &mut Matrix {
        &mut self.tensors[p.index()]
    }
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated file".into()),
        _ => Error::Io(e),
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Accumulated gradients, shaped exactly like a [`ParamSet`].
///
/// Embedding rows written through [`GradSet::embedding_row_mut`] are tracked so
/// that zeroing a sparsely-touched set does not sweep the whole table.
#[derive(Debug, Clone)]
pub struct GradSet {
    tensors: ParamSet,
    touched_rows: BTreeSet<usize>,
    embedding_dense: bool,
}

impl GradSet {
    pub fn zeros_like(params: &ParamSet) -> Self {
        GradSet {
            tensors: ParamSet::zeros(params.dims()),
            touched_rows: BTreeSet::new(),
            embedding_dense: false,
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.tensors.dims()
    }

    pub fn zero(&mut self) {
        for (p, m) in self.tensors.iter_mut() {
            if p != Param::Embedding {
                m.fill(0.0);
            }
        }
        let emb = &mut self.tensors[Param::Embedding];
        if self.embedding_dense {
            emb.fill(0.0);
        } else {
            for &r in &self.touched_rows {
                emb.row_mut(r).fill(0.0);
            }
        }
        self.touched_rows.clear();
        self.embedding_dense = false;
    }

    /// Mutable access to a whole tensor. Taking the embedding this way marks
    /// it as densely written.
    pub fn tensor_mut(&mut self, p: Param) -> &mut Matrix {
        if p == Param::Embedding {
            self.embedding_dense = true;
        }
        &mut self.tensors[p]
    }

    pub fn embedding_row_mut(&mut self, row: usize) -> &mut [f64] {
        self.touched_rows.insert(row);
        self.tensors[Param::Embedding].row_mut(row)
    }

    /// Embedding rows that received a sparse gradient since the last zeroing.
    pub fn touched_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.touched_rows.iter().copied()
    }

    /// `grads[name] += scale * delta`, where `delta` is the row-major content
    /// of a tensor with the same shape as the named one.
    pub fn axpy_accumulate(&mut self, name: &str, delta: &[f64], scale: f64) -> Result<()> {
        let p = Param::from_name(name).ok_or_else(|| Error::UnknownParam(name.into()))?;
        let m = self.tensor_mut(p);
        if m.as_slice().len() != delta.len() {
            return Err(Error::shape(
                format!("gradient `{name}`"),
                m.as_slice().len(),
                delta.len(),
            ));
        }
        for (g, d) in m.as_mut_slice().iter_mut().zip(delta) {
            *g += scale * d;
        }
        Ok(())
    }

    /// Adds `scale * other` into `self`, visiting only rows `other` touched
    /// when its embedding gradient is sparse.
    pub fn merge_scaled(&mut self, other: &GradSet, scale: f64) {
        for &p in Param::ALL {
            if p == Param::Embedding {
                continue;
            }
            self.tensors[p].axpy(scale, &other.tensors[p]);
        }
        if other.embedding_dense {
            self.tensor_mut(Param::Embedding)
                .axpy(scale, &other.tensors[Param::Embedding]);
        } else {
            for r in other.touched_rows() {
                let src = other.tensors[Param::Embedding].row(r);
                for (g, s) in self.embedding_row_mut(r).iter_mut().zip(src) {
                    *g += scale * s;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, m) in self.tensors.iter_mut() {
            m.as_mut_slice().iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.is_finite()
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors.squared_norm()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Param, &Matrix)> {
        self.tensors.iter()
    }
}

/// Compares gradient values only, not row bookkeeping.
impl PartialEq for GradSet {
    fn eq(&self, other: &Self) -> bool {
        self.tensors == other.tensors
    }
}

impl Index<Param> for GradSet {
    type Output = Matrix;
    fn index(&self, p: Param) -> &Matrix {
        &self.tensors[p]
    }
}
