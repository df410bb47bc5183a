//! Binary log of retained draws and the per-draw summary CSV.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "PSC1" | u32 version | u64 n, M, p, C, J, J2, K | u64 chain | u64 seed
//! | u32 len, config JSON | records...
//! record := u32 len | u64 iteration | u8 rho_accepted | f64 log_target
//!           | f64 rho, sigma_s2, kappa | α[p+1] | u32 z[n]
//!           | ξ[C·J] | V[C] | π[C] | δ[J2] | γ[p] | ζ[K] | f64 σ² | S[n·M]
//! ```
//!
//! `J` is the mediator basis dimension, `J2` the outcome basis dimension and
//! `K` the number of β coefficients.

use std::io::{self, Read, Write};

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::engine::{Draw, PosteriorDraws};
use crate::error::{PscError, Result};
use crate::io::write_comment_header;
use crate::mediator::{ClusterState, MediatorState};
use crate::model::{KernelParams, Problem};
use crate::outcome::OutcomeState;

pub const MAGIC: &[u8; 4] = b"PSC1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub c: usize,
    pub j: usize,
    pub j2: usize,
    pub k: usize,
}

impl Dims {
    pub fn of(problem: &Problem) -> Self {
        Self {
            n: problem.n(),
            m: problem.m(),
            p: problem.data.p(),
            c: problem.model.truncation,
            j: problem.basis_dim(),
            j2: problem.model.outcome_basis.dim(),
            k: problem.model.beta_form.size(),
        }
    }

    fn record_len(&self) -> usize {
        8 + 1 + 8 + 3 * 8 + 8 * (self.p + 1) + 4 * self.n + 8 * (self.c * self.j + 2 * self.c) + 8 * (self.j2 + self.p + self.k + 1) + 8 * self.n * self.m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub version: u32,
    pub dims: Dims,
    pub chain: u64,
    pub seed: u64,
    pub config_json: String,
}

pub struct DrawLogWriter<W: Write> {
    out: W,
    dims: Dims,
    buf: Vec<u8>,
}

impl<W: Write> DrawLogWriter<W> {
    pub fn new(mut out: W, dims: Dims, chain: u64, seed: u64, config_json: &str) -> Result<Self> {
        out.write_all(MAGIC)?;
        out.write_u32::<LE>(FORMAT_VERSION)?;
        for v in [dims.n, dims.m, dims.p, dims.c, dims.j, dims.j2, dims.k] {
            out.write_u64::<LE>(v as u64)?;
        }
        out.write_u64::<LE>(chain)?;
        out.write_u64::<LE>(seed)?;
        let cfg = config_json.as_bytes();
        out.write_u32::<LE>(u32::try_from(cfg.len()).map_err(|_| PscError::Format("config too large".into()))?)?;
        out.write_all(cfg)?;
        Ok(Self {
            out,
            dims,
            buf: Vec::with_capacity(dims.record_len()),
        })
    }

    pub fn write(&mut self, d: &Draw) -> Result<()> {
        let dims = self.dims;
        let med = &d.mediator;
        let cl = &med.clusters;
        let out = &d.outcome;
        let ok = med.alpha.len() == dims.p + 1
            && cl.z.len() == dims.n
            && cl.xi.len() == dims.c
            && cl.xi.iter().all(|x| x.len() == dims.j)
            && out.delta.len() == dims.j2
            && out.gamma.len() == dims.p
            && out.zeta.len() == dims.k
            && d.aug.shape() == (dims.n, dims.m);
        if !ok {
            return Err(PscError::Format("draw does not match the log dimensions".into()));
        }
        let b = &mut self.buf;
        b.clear();
        b.write_u64::<LE>(d.iteration as u64)?;
        b.write_u8(u8::from(d.rho_accepted))?;
        let f = |b: &mut Vec<u8>, v: f64| b.write_f64::<LE>(v);
        f(b, d.log_target)?;
        f(b, med.kernel.rho)?;
        f(b, med.kernel.sigma_s2)?;
        f(b, cl.kappa)?;
        for &v in &med.alpha {
            f(b, v)?;
        }
        for &z in &cl.z {
            b.write_u32::<LE>(z as u32)?;
        }
        for &v in cl.xi.iter().flatten().chain(&cl.v).chain(&cl.pi) {
            f(b, v)?;
        }
        for &v in out.delta.iter().chain(&out.gamma).chain(&out.zeta) {
            f(b, v)?;
        }
        f(b, out.sigma2)?;
        for i in 0..dims.n {
            for g in 0..dims.m {
                f(b, d.aug[(i, g)])?;
            }
        }
        self.out.write_u32::<LE>(b.len() as u32)?;
        self.out.write_all(b)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub struct DrawLogReader<R: Read> {
    input: R,
    header: Header,
}

fn format_err(msg: impl Into<String>) -> PscError {
    PscError::Format(msg.into())
}

fn eof_as_format(e: io::Error, what: &str) -> PscError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        format_err(format!("truncated {what}"))
    } else {
        PscError::Io(e)
    }
}

impl<R: Read> DrawLogReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(|e| eof_as_format(e, "header"))?;
        if &magic != MAGIC {
            return Err(format_err("bad magic, not a draw log"));
        }
        let version = input.read_u32::<LE>().map_err(|e| eof_as_format(e, "header"))?;
        if version != FORMAT_VERSION {
            return Err(format_err(format!("unsupported format version {version}")));
        }
        let mut v = [0usize; 7];
        for slot in &mut v {
            *slot = input.read_u64::<LE>().map_err(|e| eof_as_format(e, "header"))? as usize;
        }
        let dims = Dims {
            n: v[0],
            m: v[1],
            p: v[2],
            c: v[3],
            j: v[4],
            j2: v[5],
            k: v[6],
        };
        let chain = input.read_u64::<LE>().map_err(|e| eof_as_format(e, "header"))?;
        let seed = input.read_u64::<LE>().map_err(|e| eof_as_format(e, "header"))?;
        let len = input.read_u32::<LE>().map_err(|e| eof_as_format(e, "header"))? as usize;
        let mut cfg = vec![0u8; len];
        input.read_exact(&mut cfg).map_err(|e| eof_as_format(e, "header"))?;
        let config_json = String::from_utf8(cfg).map_err(|_| format_err("config is not UTF-8"))?;
        Ok(Self {
            input,
            header: Header {
                version,
                dims,
                chain,
                seed,
                config_json,
            },
        })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    /// Next record, or `None` at a clean end of file.
    pub fn next_draw(&mut self) -> Result<Option<Draw>> {
        let len = match self.input.read_u32::<LE>() {
            Ok(l) => l as usize,
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let dims = self.header.dims;
        if len != dims.record_len() {
            return Err(format_err(format!("record length {len}, expected {}", dims.record_len())));
        }
        let mut buf = vec![0u8; len];
        self.input.read_exact(&mut buf).map_err(|e| eof_as_format(e, "record"))?;
        let mut r = buf.as_slice();
        let iteration = r.read_u64::<LE>()? as usize;
        let rho_accepted = r.read_u8()? != 0;
        let vec = |r: &mut &[u8], k: usize| -> io::Result<Vec<f64>> { (0..k).map(|_| r.read_f64::<LE>()).collect() };
        let log_target = r.read_f64::<LE>()?;
        let rho = r.read_f64::<LE>()?;
        let sigma_s2 = r.read_f64::<LE>()?;
        let kappa = r.read_f64::<LE>()?;
        let alpha = vec(&mut r, dims.p + 1)?;
        let z = (0..dims.n)
            .map(|_| r.read_u32::<LE>().map(|v| v as usize))
            .collect::<io::Result<Vec<_>>>()?;
        if z.iter().any(|&c| c >= dims.c) {
            return Err(format_err("cluster label out of range"));
        }
        let flat = vec(&mut r, dims.c * dims.j)?;
        let xi = flat.chunks(dims.j.max(1)).map(|c| c.to_vec()).take(dims.c).collect();
        let v = vec(&mut r, dims.c)?;
        let pi = vec(&mut r, dims.c)?;
        let delta = vec(&mut r, dims.j2)?;
        let gamma = vec(&mut r, dims.p)?;
        let zeta = vec(&mut r, dims.k)?;
        let sigma2 = r.read_f64::<LE>()?;
        let s = vec(&mut r, dims.n * dims.m)?;
        Ok(Some(Draw {
            iteration,
            mediator: MediatorState {
                kernel: KernelParams { rho, sigma_s2 },
                alpha,
                clusters: ClusterState { z, xi, v, pi, kappa },
            },
            outcome: OutcomeState {
                delta,
                gamma,
                zeta,
                sigma2,
            },
            aug: DMatrix::from_row_slice(dims.n, dims.m, &s),
            rho_accepted,
            log_target,
        }))
    }

    pub fn read_all(&mut self) -> Result<Vec<Draw>> {
        let mut out = Vec::new();
        while let Some(d) = self.next_draw()? {
            out.push(d);
        }
        Ok(out)
    }
}

/// One row per retained draw with the scalar parameters.
pub fn write_summary_csv<W: Write>(mut w: W, chains: &[PosteriorDraws], config_json: &str) -> Result<()> {
    write_comment_header(&mut w, "summary", Some(config_json))?;
    let mut out = csv::Writer::from_writer(w);
    let Some(first) = chains.iter().find_map(|c| c.draws.first()) else {
        out.write_record(["chain", "iteration"])?;
        out.flush()?;
        return Ok(());
    };
    let mut header: Vec<String> = ["chain", "iteration", "rho", "rho_accepted", "sigma_s2", "sigma2", "kappa", "occupied_clusters", "log_target"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..first.mediator.alpha.len()).map(|k| format!("alpha{k}")));
    header.extend((0..first.outcome.delta.len()).map(|k| format!("delta{k}")));
    header.extend((0..first.outcome.gamma.len()).map(|k| format!("gamma{}", k + 1)));
    header.extend((0..first.outcome.zeta.len()).map(|k| format!("zeta{k}")));
    out.write_record(&header)?;
    for c in chains {
        for d in &c.draws {
            let mut row = vec![
                c.chain.to_string(),
                d.iteration.to_string(),
                d.mediator.kernel.rho.to_string(),
                u8::from(d.rho_accepted).to_string(),
                d.mediator.kernel.sigma_s2.to_string(),
                d.outcome.sigma2.to_string(),
                d.mediator.clusters.kappa.to_string(),
                d.mediator.clusters.occupied().to_string(),
                d.log_target.to_string(),
            ];
            row.extend(
                d.mediator
                    .alpha
                    .iter()
                    .chain(&d.outcome.delta)
                    .chain(&d.outcome.gamma)
                    .chain(&d.outcome.zeta)
                    .map(|v| v.to_string()),
            );
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}
