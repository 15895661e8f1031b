//! Text ingestion: the WISDM raw accelerometer dump and a generic
//! one-sample-per-row delimited format (`t,label,ch1..chd`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::{Annotation, SensorStream};
use crate::error::{Error, Result};

pub const WISDM_SAMPLE_RATE_HZ: f64 = 20.0;

#[derive(Debug)]
pub struct WisdmIngest {
    /// One stream per user, ordered by user id.
    pub streams: Vec<SensorStream>,
    pub skipped_rows: usize,
}

struct WisdmRow {
    activity: Arc<str>,
    timestamp: i64,
    xyz: [f64; 3],
}

fn parse_wisdm_row(record: &str) -> Option<(String, WisdmRow)> {
    let fields: Vec<&str> = record.split(',').map(str::trim).collect();
    if fields.len() != 6 || fields[0].is_empty() || fields[1].is_empty() {
        return None;
    }
    let timestamp = fields[2].parse().ok()?;
    let mut xyz = [0.0; 3];
    for (slot, f) in xyz.iter_mut().zip(&fields[3..]) {
        *slot = f.parse().ok().filter(|v: &f64| v.is_finite())?;
    }
    Some((
        fields[0].to_string(),
        WisdmRow {
            activity: Arc::from(fields[1]),
            timestamp,
            xyz,
        },
    ))
}

/// Reads `user,activity,timestamp,x,y,z;` records. Malformed records are
/// skipped and counted; rows are stably sorted by timestamp within each user.
pub fn read_wisdm_csv(path: &Path) -> Result<WisdmIngest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut users: BTreeMap<String, Vec<WisdmRow>> = BTreeMap::new();
    let mut skipped = 0;
    for record in text.split(['\n', ';']) {
        let record = record.trim();
        if record.is_empty() {
            continue;
        }
        match parse_wisdm_row(record) {
            Some((user, row)) => users.entry(user).or_default().push(row),
            None => skipped += 1,
        }
    }
    if users.is_empty() {
        return Err(Error::format("WISDM csv", path, "no valid rows"));
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed rows", path.display());
    }

    let mut ids: Vec<String> = users.keys().cloned().collect();
    // numeric user ids sort numerically
    ids.sort_by(|a, b| match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    });
    let streams = ids
        .into_iter()
        .map(|id| {
            let mut rows = users.remove(&id).expect("key present");
            rows.sort_by_key(|r| r.timestamp);
            let mut channels: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(rows.len())).collect();
            let mut annotations = Vec::with_capacity(rows.len());
            for r in rows {
                for (c, v) in channels.iter_mut().zip(r.xyz) {
                    c.push(v);
                }
                annotations.push(Some(r.activity));
            }
            SensorStream::new(
                id,
                vec!["x".into(), "y".into(), "z".into()],
                channels,
                Some(annotations),
                WISDM_SAMPLE_RATE_HZ,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WisdmIngest {
        streams,
        skipped_rows: skipped,
    })
}

fn is_null_label(label: &str, null_labels: &[String]) -> bool {
    label.is_empty() || null_labels.iter().any(|n| n == label)
}

/// Reads the generic delimited format. The header is `t,label,<channel names>`;
/// an empty label (or one listed in `null_labels`) marks a Null sample. The
/// sample rate is inferred from the time column.
pub fn read_generic_csv(path: &Path, null_labels: &[String]) -> Result<SensorStream> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format("delimited stream", path, "missing header"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "t" || cols[1] != "label" {
        return Err(Error::format(
            "delimited stream",
            path,
            format!("header must be `t,label,ch1..chd`, got `{header}`"),
        ));
    }
    let d = cols.len() - 2;
    let mut times = Vec::new();
    let mut channels = vec![Vec::new(); d];
    let mut annotations: Vec<Annotation> = Vec::new();
    let mut interned: BTreeMap<String, Arc<str>> = BTreeMap::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::format(
                "delimited stream",
                path,
                format!("line {}: expected {} fields, got {}", lineno + 1, cols.len(), fields.len()),
            ));
        }
        let parse = |s: &str| {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::format("delimited stream", path, format!("line {}: bad number `{s}`", lineno + 1))
            })
        };
        times.push(parse(fields[0])?);
        for (c, f) in channels.iter_mut().zip(&fields[2..]) {
            c.push(parse(f)?);
        }
        let label = fields[1];
        annotations.push(if is_null_label(label, null_labels) {
            None
        } else {
            Some(interned.entry(label.to_string()).or_insert_with(|| Arc::from(label)).clone())
        });
    }
    if times.is_empty() {
        return Err(Error::format("delimited stream", path, "no samples"));
    }
    let span = times[times.len() - 1] - times[0];
    let sample_rate = if times.len() > 1 && span > 0.0 {
        (times.len() - 1) as f64 / span
    } else {
        1.0
    };
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SensorStream::new(
        id,
        cols[2..].iter().map(|s| s.to_string()).collect(),
        channels,
        Some(annotations),
        sample_rate,
    )
}

/// Writes a stream in the generic delimited format; `t` is seconds from start.
pub fn write_generic_csv(stream: &SensorStream, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(stream.len() * 16 * (stream.n_channels() + 2));
    out.push_str("t,label");
    for name in &stream.channel_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..stream.len() {
        let t = i as f64 / stream.sample_rate_hz;
        let label = stream
            .annotations
            .as_ref()
            .and_then(|a| a[i].as_deref())
            .unwrap_or("");
        write!(out, "{t},{label}").expect("write to string");
        for c in &stream.channels {
            write!(out, ",{}", c[i]).expect("write to string");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
