//! Snapshot persistence: a short textual header followed by the raw field
//! payload as little-endian f64, row-major with θ slowest, φ middle and ξ
//! fastest, fields in the order v_θ, v_φ, T, q. Round-trips are bitwise.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{LevelField, ScalarField, VectorField};
use crate::geometry::Params;
use crate::model::State;

pub const SNAPSHOT_MAGIC: &str = "moistpe snapshot v1";

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_xi: usize,
    pub t: f64,
    pub params: Params,
}

fn params_line(p: &Params) -> String {
    format!(
        "params = {} {} {} {} {} {} {} {} {} {} {} {} {}",
        p.re1, p.re2, p.rt1, p.rt2, p.rq1, p.rq2, p.r0, p.a, p.b, p.p_cap, p.p0, p.alpha_s, p.beta_s
    )
}

fn parse_params_line(s: &str) -> Option<Params> {
    let vals: Vec<f64> = s.split_whitespace().map(|x| x.parse().ok()).collect::<Option<_>>()?;
    if vals.len() != 13 {
        return None;
    }
    Some(Params {
        re1: vals[0],
        re2: vals[1],
        rt1: vals[2],
        rt2: vals[3],
        rq1: vals[4],
        rq2: vals[5],
        r0: vals[6],
        a: vals[7],
        b: vals[8],
        p_cap: vals[9],
        p0: vals[10],
        alpha_s: vals[11],
        beta_s: vals[12],
    })
}

pub fn write_snapshot(path: &Path, state: &State, params: &Params) -> Result<()> {
    let (nt, np, nx) = (state.v.n_theta(), state.v.n_phi(), state.v.n_xi());
    let count = 4 * nt * np * nx;
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{SNAPSHOT_MAGIC}")?;
    writeln!(w, "grid = {nt} {np} {nx}")?;
    writeln!(w, "t = {}", state.t)?;
    writeln!(w, "{}", params_line(params))?;
    writeln!(w, "fields = v_theta v_phi T q")?;
    writeln!(w, "payload = {count}")?;
    writeln!(w)?;
    for field in [
        &state.v.comp_theta,
        &state.v.comp_phi,
        &state.temperature,
        &state.moisture,
    ] {
        for v in &field.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, State)> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;

    // Header is the text up to the first blank line.
    let mut pos = 0usize;
    let mut lines = Vec::new();
    loop {
        let nl = raw[pos..]
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| bad("missing header terminator"))?;
        let line = std::str::from_utf8(&raw[pos..pos + nl]).map_err(|_| bad("header not UTF-8"))?;
        pos += nl + 1;
        if line.is_empty() {
            break;
        }
        lines.push(line.to_string());
    }
    if lines.first().map(String::as_str) != Some(SNAPSHOT_MAGIC) {
        return Err(bad("unrecognised snapshot magic"));
    }

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut t: Option<f64> = None;
    let mut params: Option<Params> = None;
    let mut count: Option<usize> = None;
    for line in &lines[1..] {
        let (key, value) = line.split_once('=').ok_or_else(|| bad("malformed header line"))?;
        match key.trim() {
            "grid" => {
                let d: Vec<usize> = value
                    .split_whitespace()
                    .map(|x| x.parse().map_err(|_| bad("bad grid dims")))
                    .collect::<Result<_>>()?;
                if d.len() != 3 {
                    return Err(bad("grid needs three dims"));
                }
                dims = Some((d[0], d[1], d[2]));
            }
            "t" => t = Some(value.trim().parse().map_err(|_| bad("bad time"))?),
            "params" => params = parse_params_line(value),
            "fields" => {
                if value.trim() != "v_theta v_phi T q" {
                    return Err(bad("unexpected field order"));
                }
            }
            "payload" => count = Some(value.trim().parse().map_err(|_| bad("bad payload length"))?),
            _ => return Err(bad("unknown header key")),
        }
    }
    let (nt, np, nx) = dims.ok_or_else(|| bad("missing grid dims"))?;
    let t = t.ok_or_else(|| bad("missing time"))?;
    let params = params.ok_or_else(|| bad("missing params"))?;
    let count = count.ok_or_else(|| bad("missing payload length"))?;
    if count != 4 * nt * np * nx {
        return Err(bad("payload length inconsistent with dims"));
    }
    if raw.len() - pos != count * 8 {
        return Err(bad("payload byte count mismatch"));
    }

    let mut fields = Vec::with_capacity(4);
    for f in 0..4 {
        let mut values = Vec::with_capacity(nt * np * nx);
        for c in 0..nt * np * nx {
            let off = pos + (f * nt * np * nx + c) * 8;
            let mut b = [0u8; 8];
            b.copy_from_slice(&raw[off..off + 8]);
            values.push(f64::from_le_bytes(b));
        }
        fields.push(ScalarField { n_theta: nt, n_phi: np, n_xi: nx, values });
    }
    let moisture = fields.pop().unwrap();
    let temperature = fields.pop().unwrap();
    let comp_phi = fields.pop().unwrap();
    let comp_theta = fields.pop().unwrap();

    let header = SnapshotHeader { n_theta: nt, n_phi: np, n_xi: nx, t, params };
    let state = State {
        v: VectorField { comp_theta, comp_phi },
        temperature,
        moisture,
        phi_s: LevelField::zeros(nt, np),
        t,
    };
    Ok((header, state))
}

fn bad(msg: &str) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string()))
}
