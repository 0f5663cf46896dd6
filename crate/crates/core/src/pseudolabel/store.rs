//! PT store: one tab-separated line per record with fields utterance id,
//! generator model id, source tag, token ids and confidences (six decimals).
//! Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{PTRecord, PtSource};
use crate::error::{Error, Result};
use crate::sequence::TokenSequence;

pub fn write_pt_store<W: Write>(w: &mut W, records: &[PTRecord]) -> Result<()> {
    for r in records {
        let mut conf = String::new();
        for (i, c) in r.confidences.iter().enumerate() {
            if i > 0 {
                conf.push(' ');
            }
            let _ = write!(conf, "{c:.6}");
        }
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{conf}",
            r.utterance_id, r.generator_model_id, r.source, r.tokens
        )?;
    }
    Ok(())
}

pub fn read_pt_store<R: BufRead>(r: R) -> Result<Vec<PTRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::format("pt store", format!("line {}: {what}", n + 1));
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, model, source, tokens, conf] = fields.as_slice() else {
            return Err(bad("expected 5 tab-separated fields"));
        };
        let tokens = tokens
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| bad("bad token id")))
            .collect::<Result<Vec<_>>>()?;
        let conf = conf
            .split_whitespace()
            .map(|c| c.parse::<f64>().map_err(|_| bad("bad confidence")))
            .collect::<Result<Vec<_>>>()?;
        out.push(PTRecord::new(
            *id,
            TokenSequence::new(tokens),
            conf,
            PtSource::parse(source)?,
            *model,
        )?);
    }
    Ok(out)
}
