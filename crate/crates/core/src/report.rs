//! JSON and CSV output of a [`ResultBundle`].
//!
//! Every float is written with 17 significant digits (`{:.16e}`), which is
//! enough to round-trip an `f64` exactly.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

use crate::config::Format;
use crate::error::Result;
use crate::runner::ResultBundle;

/// Pretty JSON formatter that prints floats in fixed-width scientific form.
struct Sci17<'a>(PrettyFormatter<'a>);

impl Formatter for Sci17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        write!(w, "{:.16e}", value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, Sci17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(fixed: &[&str], prefix: &str, k: usize, tail: &[&str]) -> String {
    let mut cols: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
    cols.extend((1..=k).map(|j| format!("{prefix}_{j}")));
    cols.extend(tail.iter().map(|s| s.to_string()));
    cols.join(",") + "\n"
}

fn dimension(bundle: &ResultBundle) -> usize {
    bundle
        .steps
        .first()
        .map(|s| s.spectrum.window.len())
        .or_else(|| bundle.invariants.as_ref().map(|i| i.lattice.k()))
        .unwrap_or(0)
}

/// `h, lambda_1..lambda_k, multiplicity, residual`
pub fn spectra_csv(bundle: &ResultBundle) -> String {
    let mut s = header(&["h"], "lambda", dimension(bundle), &["multiplicity", "residual"]);
    for step in &bundle.steps {
        for p in &step.spectrum.points {
            let _ = write!(s, "{}", num(step.h));
            for l in &p.lambda {
                let _ = write!(s, ",{}", num(*l));
            }
            let _ = writeln!(s, ",{},{}", p.multiplicity, num(p.residual));
        }
    }
    s
}

/// `h, deviation, n_1..n_k`
pub fn matches_csv(bundle: &ResultBundle) -> String {
    let mut s = header(&["h", "deviation"], "n", dimension(bundle), &[]);
    for step in &bundle.steps {
        for pair in step.matches.iter().flat_map(|m| &m.pairs) {
            let _ = write!(s, "{},{}", num(step.h), num(pair.deviation));
            for n in &pair.predicted.index {
                let _ = write!(s, ",{n}");
            }
            s.push('\n');
        }
    }
    s
}

/// `h, max_deviation`
pub fn scaling_csv(bundle: &ResultBundle) -> String {
    let mut s = String::from("h,max_deviation\n");
    if let Some(fit) = &bundle.scaling {
        for (h, d) in fit.h_list.iter().zip(&fit.max_deviations) {
            let _ = writeln!(s, "{},{}", num(*h), num(*d));
        }
    }
    s
}

/// `h, n_1..n_k, N, predicted`
pub fn multiplicity_csv(bundle: &ResultBundle) -> String {
    let mut s = header(&["h"], "n", dimension(bundle), &["N", "predicted"]);
    for m in bundle.steps.iter().filter_map(|s| s.multiplicity.as_ref()) {
        for c in &m.counts {
            let _ = write!(s, "{}", num(m.h));
            for n in &c.index {
                let _ = write!(s, ",{n}");
            }
            let _ = writeln!(s, ",{},{}", c.count, num(m.predicted));
        }
    }
    s
}

/// Writes the requested formats into `dir` and returns the files written.
pub fn write_bundle(bundle: &ResultBundle, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files: Vec<(&str, String)> = Vec::new();
    if formats.contains(&Format::Json) {
        files.push(("results.json", to_json(bundle)?));
    }
    if formats.contains(&Format::Csv) {
        files.push(("spectra.csv", spectra_csv(bundle)));
        files.push(("matches.csv", matches_csv(bundle)));
        files.push(("scaling.csv", scaling_csv(bundle)));
        files.push(("multiplicity.csv", multiplicity_csv(bundle)));
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
