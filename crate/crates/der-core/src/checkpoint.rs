//! Versioned text checkpoints of every trainable tensor (online and
//! target copies), written with shortest-round-trip float formatting so a
//! save/load cycle is bit-exact.
//!
//! Layout:
//!
//! ```text
//! der-checkpoint v1
//! mixer monotonic
//! dims agents=2 actions=3 obs=1 state=1 agent_hidden=8 mixer_embed=4 hyper_hidden=4
//! tensors 32
//! tensor agent.w1 6 8
//! <one line per row, columns space-separated>
//! ...
//! tensor target.agent.w1 6 8
//! ...
//! ```
//!
//! Online tensors use their canonical names; target copies carry a
//! `target.` prefix. Every expected tensor must appear exactly once with
//! the shape implied by the recorded dimensions.

use crate::nets::{init_params, MixerKind, NetDims, NetError, ParamStore};
use crate::tensor::{Tensor, TensorError};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &str = "der-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

fn fail<T>(line: usize, msg: impl Into<String>) -> Result<T, CheckpointError> {
    Err(CheckpointError::Format { line, msg: msg.into() })
}

/// All (name, tensor) records of a store, online first, then targets.
fn records(store: &ParamStore) -> Vec<(String, &Tensor)> {
    let mut out: Vec<(String, &Tensor)> = Vec::new();
    for (name, t) in store.agent.tensors().into_iter().chain(store.mixer.tensors()) {
        out.push((name.to_string(), t));
    }
    for (name, t) in store
        .agent_target
        .tensors()
        .into_iter()
        .chain(store.mixer_target.tensors())
    {
        out.push((format!("target.{name}"), t));
    }
    out
}

pub fn write_checkpoint<W: Write>(w: &mut W, store: &ParamStore) -> Result<(), CheckpointError> {
    let d = &store.dims;
    writeln!(w, "{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}")?;
    let mixer = match store.mixer_kind() {
        MixerKind::Vdn => "vdn",
        MixerKind::Monotonic => "monotonic",
    };
    writeln!(w, "mixer {mixer}")?;
    writeln!(
        w,
        "dims agents={} actions={} obs={} state={} agent_hidden={} mixer_embed={} hyper_hidden={}",
        d.n_agents,
        d.n_actions,
        d.obs_width,
        d.state_width,
        d.agent_hidden,
        d.mixer_embed,
        d.hyper_hidden
    )?;
    let recs = records(store);
    writeln!(w, "tensors {}", recs.len())?;
    for (name, t) in recs {
        writeln!(w, "tensor {} {} {}", name, t.rows(), t.cols())?;
        for r in 0..t.rows() {
            let row: Vec<String> = (0..t.cols()).map(|c| t.get(r, c).to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(path: &Path, store: &ParamStore) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, store)?;
    w.flush()?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<(usize, String), CheckpointError> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(s)) => Ok((self.line, s)),
            Some(Err(e)) => Err(e.into()),
            None => fail(self.line, "unexpected end of file"),
        }
    }
}

fn parse_kv(line: usize, token: &str, key: &str) -> Result<usize, CheckpointError> {
    match token.strip_prefix(key).and_then(|r| r.strip_prefix('=')) {
        Some(v) => v
            .parse()
            .map_err(|_| CheckpointError::Format { line, msg: format!("bad value for {key}") }),
        None => fail(line, format!("expected {key}=<n>, got '{token}'")),
    }
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<ParamStore, CheckpointError> {
    let mut lines = Lines { inner: r.lines(), line: 0 };

    let (ln, header) = lines.next()?;
    let expected = format!("{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}");
    if header != expected {
        return fail(ln, format!("expected header '{expected}', got '{header}'"));
    }

    let (ln, mixer_line) = lines.next()?;
    let kind = match mixer_line.strip_prefix("mixer ") {
        Some("vdn") => MixerKind::Vdn,
        Some("monotonic") => MixerKind::Monotonic,
        Some(other) => return fail(ln, format!("unknown mixer '{other}'")),
        None => return fail(ln, "expected 'mixer <kind>'"),
    };

    let (ln, dims_line) = lines.next()?;
    let body = match dims_line.strip_prefix("dims ") {
        Some(b) => b,
        None => return fail(ln, "expected 'dims ...'"),
    };
    let toks: Vec<&str> = body.split_whitespace().collect();
    if toks.len() != 7 {
        return fail(ln, format!("expected 7 dimension entries, got {}", toks.len()));
    }
    let dims = NetDims {
        n_agents: parse_kv(ln, toks[0], "agents")?,
        n_actions: parse_kv(ln, toks[1], "actions")?,
        obs_width: parse_kv(ln, toks[2], "obs")?,
        state_width: parse_kv(ln, toks[3], "state")?,
        agent_hidden: parse_kv(ln, toks[4], "agent_hidden")?,
        mixer_embed: parse_kv(ln, toks[5], "mixer_embed")?,
        hyper_hidden: parse_kv(ln, toks[6], "hyper_hidden")?,
    };

    let (ln, count_line) = lines.next()?;
    let count: usize = match count_line.strip_prefix("tensors ") {
        Some(v) => v
            .parse()
            .map_err(|_| CheckpointError::Format { line: ln, msg: "bad tensor count".into() })?,
        None => return fail(ln, "expected 'tensors <n>'"),
    };

    let mut loaded: BTreeMap<String, Tensor> = BTreeMap::new();
    for _ in 0..count {
        let (ln, head) = lines.next()?;
        let toks: Vec<&str> = head.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "tensor" {
            return fail(ln, format!("expected 'tensor <name> <rows> <cols>', got '{head}'"));
        }
        let name = toks[1].to_string();
        let rows: usize = toks[2]
            .parse()
            .map_err(|_| CheckpointError::Format { line: ln, msg: "bad row count".into() })?;
        let cols: usize = toks[3]
            .parse()
            .map_err(|_| CheckpointError::Format { line: ln, msg: "bad column count".into() })?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, row) = lines.next()?;
            let vals: Vec<&str> = row.split_whitespace().collect();
            if vals.len() != cols {
                return fail(ln, format!("expected {cols} values, got {}", vals.len()));
            }
            for v in vals {
                let x: f64 = v.parse().map_err(|_| CheckpointError::Format {
                    line: ln,
                    msg: format!("bad float '{v}'"),
                })?;
                data.push(x);
            }
        }
        if loaded.insert(name.clone(), Tensor::new(rows, cols, data)?).is_some() {
            return fail(ln, format!("duplicate tensor '{name}'"));
        }
    }

    // Rebuild a store with the recorded dimensions, then overwrite every
    // tensor from the file, verifying names and shapes as we go.
    let mut store = init_params(0, &dims, kind)?;
    let mut fill = |prefix: &str,
                    slots: Vec<(&'static str, &mut Tensor)>|
     -> Result<(), CheckpointError> {
        for (name, slot) in slots {
            let full = format!("{prefix}{name}");
            let t = loaded.remove(&full).ok_or_else(|| CheckpointError::Format {
                line: 0,
                msg: format!("missing tensor '{full}'"),
            })?;
            if t.shape() != slot.shape() {
                return fail(
                    0,
                    format!(
                        "tensor '{}' has shape {}x{}, expected {}x{}",
                        full,
                        t.rows(),
                        t.cols(),
                        slot.rows(),
                        slot.cols()
                    ),
                );
            }
            *slot = t;
        }
        Ok(())
    };
    fill("", store.agent.tensors_mut())?;
    fill("", store.mixer.tensors_mut())?;
    fill("target.", store.agent_target.tensors_mut())?;
    fill("target.", store.mixer_target.tensors_mut())?;
    if let Some(name) = loaded.keys().next() {
        return fail(0, format!("unexpected tensor '{name}'"));
    }
    Ok(store)
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore, CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dims() -> NetDims {
        NetDims {
            n_agents: 2,
            n_actions: 3,
            obs_width: 4,
            state_width: 5,
            agent_hidden: 8,
            mixer_embed: 4,
            hyper_hidden: 4,
        }
    }

    fn scrambled_store(kind: MixerKind, seed: u64) -> ParamStore {
        let mut store = init_params(seed, &dims(), kind).unwrap();
        // Make online and target copies differ and include awkward values.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        for (_, t) in store.agent.tensors_mut().into_iter().chain(store.mixer.tensors_mut()) {
            for v in t.data_mut() {
                *v = (rng.gen::<f64>() - 0.5) * 1e3 * rng.gen::<f64>().powi(8);
            }
        }
        store.agent.b3.data_mut()[0] = -0.0;
        store.agent.b3.data_mut()[1] = 1e-308; // subnormal territory
        store
    }

    fn round_trip(store: &ParamStore) -> ParamStore {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, store).unwrap();
        read_checkpoint(std::io::Cursor::new(buf)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact_for_both_mixers() {
        for kind in [MixerKind::Vdn, MixerKind::Monotonic] {
            let store = scrambled_store(kind, 11);
            let back = round_trip(&store);
            assert_eq!(back.dims, store.dims);
            // PartialEq on f64 treats -0.0 == 0.0; compare bit patterns.
            let bits = |s: &ParamStore| -> Vec<u64> {
                records(s)
                    .iter()
                    .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()))
                    .collect()
            };
            assert_eq!(bits(&store), bits(&back));
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let store = scrambled_store(MixerKind::Monotonic, 3);
        save_checkpoint(&path, &store).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.agent, store.agent);
        assert_eq!(back.mixer_target, store.mixer_target);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let store = scrambled_store(MixerKind::Vdn, 5);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("v1", "v9");
        let err = read_checkpoint(std::io::Cursor::new(text.into_bytes())).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn truncated_file_reports_line() {
        let store = scrambled_store(MixerKind::Vdn, 6);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(7).collect::<Vec<_>>().join("\n");
        let err = read_checkpoint(std::io::Cursor::new(cut.into_bytes())).unwrap_err();
        assert!(err.to_string().contains("line 8"), "{err}");
    }

    #[test]
    fn missing_tensor_is_reported_by_name() {
        let store = scrambled_store(MixerKind::Vdn, 7);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store).unwrap();
        let text = String::from_utf8(buf)
            .unwrap()
            .replace("tensor agent.b3", "tensor agent.b9");
        let err = read_checkpoint(std::io::Cursor::new(text.into_bytes())).unwrap_err();
        assert!(err.to_string().contains("agent.b3"), "{err}");
    }

    #[test]
    fn bad_float_is_reported_with_line() {
        let store = scrambled_store(MixerKind::Vdn, 8);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store).unwrap();
        let mut lines: Vec<String> = String::from_utf8(buf)
            .unwrap()
            .lines()
            .map(str::to_string)
            .collect();
        lines[5] = "not a number at all".into();
        let joined = lines.join("\n");
        let err = read_checkpoint(std::io::Cursor::new(joined.into_bytes())).unwrap_err();
        assert!(err.to_string().contains("line 6"), "{err}");
    }
}
