//! Tab-separated input and output formats.
//!
//! Gene counts hold one row per individual and gene; variant files are
//! sparse and list carriers only, plus a `carrier = 0` row for sites nobody
//! carries so they are not lost. Group sizes and individual order come from
//! the counts file.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::counts::{GeneCounts, Obs};
use crate::error::{Error, Result};
use crate::ks_prior::{passes_maf_filter, Site, VariantBlock};
use crate::sim::{SimGene, Truth};

pub const COUNTS_HEADER: [&str; 5] = ["gene_id", "group", "individual_id", "x", "n"];
pub const VARIANTS_HEADER: [&str; 6] = ["gene_id", "site_id", "maf", "group", "individual_id", "carrier"];
pub const TRUTH_HEADER: [&str; 3] = ["gene_id", "is_associated", "causal_sites"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Control,
    Case,
}

impl Group {
    fn parse(s: &str) -> Option<Group> {
        match s {
            "control" => Some(Group::Control),
            "case" => Some(Group::Case),
            _ => None,
        }
    }
}

/// One gene from a counts file with the individual identifiers in row order.
#[derive(Debug, Clone, PartialEq)]
pub struct CountsRecord {
    pub counts: GeneCounts,
    pub control_ids: Vec<String>,
    pub case_ids: Vec<String>,
}

/// Site-level data for every gene of a counts file, in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantIngest {
    pub blocks: Vec<VariantBlock>,
    /// Sites removed by the MAF filter.
    pub dropped_sites: usize,
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    label: String,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(reader: R, label: &str) -> Lines<R> {
        Lines { inner: reader.lines(), label: label.to_string(), line: 0 }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { path: self.label.clone(), line: self.line, message: message.into() }
    }

    /// Next line split on tabs, or `None` at end of input.
    fn next_fields(&mut self) -> Result<Option<Vec<String>>> {
        loop {
            self.line += 1;
            match self.inner.next() {
                None => return Ok(None),
                Some(Err(e)) => return Err(self.err(format!("unreadable line: {e}"))),
                Some(Ok(text)) => {
                    let text = text.strip_suffix('\r').unwrap_or(&text);
                    if text.is_empty() {
                        continue;
                    }
                    return Ok(Some(text.split('\t').map(str::to_string).collect()));
                }
            }
        }
    }

    fn header(&mut self, expected: &[&str]) -> Result<()> {
        match self.next_fields()? {
            None => Err(self.err("missing header")),
            Some(h) if h == expected => Ok(()),
            Some(h) => Err(self.err(format!("header {:?} does not match {:?}", h.join("\t"), expected.join("\t")))),
        }
    }

    fn row(&mut self, width: usize) -> Result<Option<Vec<String>>> {
        match self.next_fields()? {
            Some(f) if f.len() != width => Err(self.err(format!("expected {width} fields, found {}", f.len()))),
            other => Ok(other),
        }
    }

    fn num<T: std::str::FromStr>(&self, field: &str, name: &str) -> Result<T> {
        field.parse().map_err(|_| self.err(format!("{name} {field:?} is not a valid number")))
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

#[derive(Default)]
struct CountsBuilder {
    control_ids: Vec<String>,
    case_ids: Vec<String>,
    controls: Vec<Obs>,
    cases: Vec<Obs>,
}

/// Reads a gene counts file.
pub fn read_counts(path: &Path) -> Result<Vec<CountsRecord>> {
    parse_counts(open(path)?, &path.display().to_string())
}

/// Parses gene counts from any reader; `label` names the source in errors.
pub fn parse_counts<R: BufRead>(reader: R, label: &str) -> Result<Vec<CountsRecord>> {
    let mut lines = Lines::new(reader, label);
    lines.header(&COUNTS_HEADER)?;
    let mut genes: IndexMap<String, CountsBuilder> = IndexMap::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    while let Some(f) = lines.row(COUNTS_HEADER.len())? {
        let group = Group::parse(&f[1]).ok_or_else(|| lines.err(format!("group {:?} is not control or case", f[1])))?;
        let x: u32 = lines.num(&f[3], "x")?;
        let n: u32 = lines.num(&f[4], "n")?;
        let (gene, id) = (&f[0], &f[2]);
        if gene.is_empty() || id.is_empty() {
            return Err(lines.err("empty gene or individual identifier"));
        }
        if x > n {
            return Err(Error::Validation(format!(
                "gene {gene} individual {id} (line {}): x={x} > n={n}",
                lines.line
            )));
        }
        if let Some(first) = seen.insert((gene.clone(), id.clone()), lines.line) {
            return Err(Error::Validation(format!(
                "gene {gene} individual {id} appears on lines {first} and {}",
                lines.line
            )));
        }
        let b = genes.entry(gene.clone()).or_default();
        match group {
            Group::Control => {
                b.control_ids.push(id.clone());
                b.controls.push(Obs { x, n });
            }
            Group::Case => {
                b.case_ids.push(id.clone());
                b.cases.push(Obs { x, n });
            }
        }
    }
    genes
        .into_iter()
        .map(|(gene_id, b)| {
            Ok(CountsRecord {
                counts: GeneCounts::new(gene_id, b.controls, b.cases)?,
                control_ids: b.control_ids,
                case_ids: b.case_ids,
            })
        })
        .collect()
}

struct Layout<'a> {
    controls: HashMap<&'a str, u32>,
    cases: HashMap<&'a str, u32>,
}

fn id_index(ids: &[String]) -> HashMap<&str, u32> {
    ids.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect()
}

struct SiteBuilder {
    maf: f64,
    controls: Vec<u32>,
    cases: Vec<u32>,
}

/// Reads a variant file against the individuals of `counts`.
pub fn read_variants(path: &Path, counts: &[CountsRecord], maf_floor: f64) -> Result<VariantIngest> {
    parse_variants(open(path)?, &path.display().to_string(), counts, maf_floor)
}

/// Parses a variant file; sites outside `(maf_floor, 0.01]` are dropped.
pub fn parse_variants<R: BufRead>(
    reader: R,
    label: &str,
    counts: &[CountsRecord],
    maf_floor: f64,
) -> Result<VariantIngest> {
    let layouts: HashMap<&str, Layout> = counts
        .iter()
        .map(|r| {
            let layout = Layout { controls: id_index(&r.control_ids), cases: id_index(&r.case_ids) };
            (r.counts.gene_id.as_str(), layout)
        })
        .collect();

    let mut lines = Lines::new(reader, label);
    lines.header(&VARIANTS_HEADER)?;
    let mut sites: HashMap<&str, IndexMap<String, SiteBuilder>> = HashMap::new();
    while let Some(f) = lines.row(VARIANTS_HEADER.len())? {
        let (gene, site_id, id) = (&f[0], &f[1], &f[4]);
        let maf: f64 = lines.num(&f[2], "maf")?;
        if !(0.0..=1.0).contains(&maf) {
            return Err(lines.err(format!("maf {maf} outside [0, 1]")));
        }
        let group = Group::parse(&f[3]).ok_or_else(|| lines.err(format!("group {:?} is not control or case", f[3])))?;
        let carrier = match f[5].as_str() {
            "0" => false,
            "1" => true,
            other => return Err(lines.err(format!("carrier {other:?} is not 0 or 1"))),
        };
        let Some((&gene_key, layout)) = layouts.get_key_value(gene.as_str()) else {
            return Err(Error::Validation(format!("line {}: gene {gene} is not in the counts file", lines.line)));
        };
        let ids = match group {
            Group::Control => &layout.controls,
            Group::Case => &layout.cases,
        };
        let Some(&idx) = ids.get(id.as_str()) else {
            return Err(Error::Validation(format!(
                "line {}: gene {gene} has no {} individual {id} in the counts file",
                lines.line, f[3]
            )));
        };
        let entry = sites
            .entry(gene_key)
            .or_default()
            .entry(site_id.clone())
            .or_insert(SiteBuilder { maf, controls: Vec::new(), cases: Vec::new() });
        if entry.maf != maf {
            return Err(Error::Validation(format!(
                "line {}: gene {gene} site {site_id} has maf {maf} but earlier rows say {}",
                lines.line, entry.maf
            )));
        }
        if carrier {
            match group {
                Group::Control => entry.controls.push(idx),
                Group::Case => entry.cases.push(idx),
            }
        }
    }

    let mut dropped = 0;
    let blocks = counts
        .iter()
        .map(|r| {
            let gene_id = &r.counts.gene_id;
            let mut kept = Vec::new();
            for (site_id, mut s) in sites.remove(gene_id.as_str()).unwrap_or_default() {
                if !passes_maf_filter(s.maf, maf_floor) {
                    log::info!("gene {gene_id} site {site_id}: maf {} outside ({maf_floor}, 0.01], dropped", s.maf);
                    dropped += 1;
                    continue;
                }
                for v in [&mut s.controls, &mut s.cases] {
                    v.sort_unstable();
                    v.dedup();
                }
                kept.push(Site { site_id, maf: s.maf, controls: s.controls, cases: s.cases });
            }
            VariantBlock {
                gene_id: gene_id.clone(),
                n_controls: r.control_ids.len(),
                n_cases: r.case_ids.len(),
                sites: kept,
            }
        })
        .collect();
    Ok(VariantIngest { blocks, dropped_sites: dropped })
}

/// Identifier of the `j`-th control or case in emitted files.
pub fn individual_id(case: bool, j: usize) -> String {
    if case {
        format!("case{j}")
    } else {
        format!("ctrl{j}")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes the counts of simulated genes.
pub fn write_counts(path: &Path, genes: &[SimGene]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", COUNTS_HEADER.join("\t"))?;
    for g in genes {
        let c = &g.counts;
        for (case, obs) in [(false, &c.controls), (true, &c.cases)] {
            let group = if case { "case" } else { "control" };
            for (j, o) in obs.iter().enumerate() {
                writeln!(w, "{}\t{group}\t{}\t{}\t{}", c.gene_id, individual_id(case, j), o.x, o.n)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes simulated site-level data in the sparse carrier format.
pub fn write_variants(path: &Path, genes: &[SimGene]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", VARIANTS_HEADER.join("\t"))?;
    for g in genes {
        let b = &g.block;
        for s in &b.sites {
            let prefix = format!("{}\t{}\t{}", b.gene_id, s.site_id, s.maf);
            if s.controls.is_empty() && s.cases.is_empty() {
                writeln!(w, "{prefix}\tcontrol\t{}\t0", individual_id(false, 0))?;
                continue;
            }
            for (case, carriers) in [(false, &s.controls), (true, &s.cases)] {
                let group = if case { "case" } else { "control" };
                for &j in carriers {
                    writeln!(w, "{prefix}\t{group}\t{}\t1", individual_id(case, j as usize))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the truth sidecar of a simulation.
pub fn write_truth(path: &Path, genes: &[SimGene]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", TRUTH_HEADER.join("\t"))?;
    for g in genes {
        let t = &g.truth;
        writeln!(w, "{}\t{}\t{}", t.gene_id, u8::from(t.is_associated), t.causal_sites.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a truth sidecar.
pub fn read_truth(path: &Path) -> Result<Vec<Truth>> {
    let mut lines = Lines::new(open(path)?, &path.display().to_string());
    lines.header(&TRUTH_HEADER)?;
    let mut out = Vec::new();
    loop {
        // a gene without causal sites leaves the last field empty
        let Some(mut f) = lines.next_fields()? else { break };
        if f.len() == 2 {
            f.push(String::new());
        }
        if f.len() != 3 {
            return Err(lines.err(format!("expected 3 fields, found {}", f.len())));
        }
        let is_associated = match f[1].as_str() {
            "0" => false,
            "1" => true,
            other => return Err(lines.err(format!("is_associated {other:?} is not 0 or 1"))),
        };
        let causal_sites = f[2].split(',').filter(|s| !s.is_empty()).map(str::to_string).collect();
        out.push(Truth { gene_id: f[0].clone(), is_associated, causal_sites });
    }
    Ok(out)
}
