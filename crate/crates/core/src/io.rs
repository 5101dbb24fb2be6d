//! CSV formats. Floats are written with 17 significant digits so that every
//! value reads back bit-identical; lines end with `\n`.

use csv::{ReaderBuilder, Terminator, WriterBuilder};

use crate::error::{Error, Result};
use crate::harness::CompareReport;
use crate::model::{DatasetCollection, Observation, SourceDataset};
use crate::omega::OmegaMatrix;
use crate::oracle::StudyCell;
use crate::solver::TracePoint;
use crate::weights::WeightVector;

/// `{:.16e}`, i.e. 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_records(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn owned(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Columns `source,id,label,stratum,emb_*,feat_*`; absent values are empty.
pub fn dataset_to_csv(data: &DatasetCollection) -> Result<String> {
    let width = |f: fn(&Observation) -> Option<usize>| data.rows().filter_map(|(_, o)| f(o)).max().unwrap_or(0);
    let emb = width(|o| o.embedding.as_ref().map(Vec::len));
    let feat = width(|o| o.features.as_ref().map(Vec::len));
    let mut header = owned(&["source", "id", "label", "stratum"]);
    header.extend((0..emb).map(|i| format!("emb_{i}")));
    header.extend((0..feat).map(|i| format!("feat_{i}")));
    let pad = |v: &Option<Vec<f64>>, w: usize| -> Vec<String> {
        match v {
            Some(v) => v.iter().map(|x| fmt_f64(*x)).chain(std::iter::repeat_n(String::new(), w - v.len())).collect(),
            None => vec![String::new(); w],
        }
    };
    write_records(
        &header,
        data.rows().map(|(k, o)| {
            let mut r = vec![k.to_string(), o.id.to_string(), opt(o.label), opt(o.stratum)];
            r.extend(pad(&o.embedding, emb));
            r.extend(pad(&o.features, feat));
            r
        }),
    )
}

fn parse<T: std::str::FromStr>(s: &str, line: usize, col: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("line {line}: column `{col}` has invalid value `{s}`")))
}

fn parse_opt<T: std::str::FromStr>(s: &str, line: usize, col: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse(s, line, col).map(Some)
    }
}

/// Inverse of [`dataset_to_csv`]. `num_classes` defaults to the largest label + 1.
pub fn dataset_from_csv(text: &str, num_classes: Option<usize>) -> Result<DatasetCollection> {
    let mut rdr = ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 4 || header[..4] != ["source", "id", "label", "stratum"] {
        return Err(Error::Parse("line 1: expected header source,id,label,stratum,...".into()));
    }
    let emb: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("emb_")).collect();
    let feat: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("feat_")).collect();
    let mut sources: Vec<Vec<Observation>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        let k: usize = parse(&rec[0], line, "source")?;
        let mut o = Observation::new(parse(&rec[1], line, "id")?);
        o.label = parse_opt(&rec[2], line, "label")?;
        o.stratum = parse_opt(&rec[3], line, "stratum")?;
        let vector = |cols: &[usize]| -> Result<Option<Vec<f64>>> {
            let vals: Vec<Option<f64>> = cols
                .iter()
                .map(|&c| parse_opt(&rec[c], line, &header[c]))
                .collect::<Result<_>>()?;
            if vals.iter().all(Option::is_none) {
                return Ok(None);
            }
            Ok(Some(vals.into_iter().map_while(|v| v).collect()))
        };
        o.embedding = vector(&emb)?;
        o.features = vector(&feat)?;
        if sources.len() <= k {
            sources.resize_with(k + 1, Vec::new);
        }
        sources[k].push(o);
    }
    let m = num_classes.unwrap_or_else(|| {
        sources
            .iter()
            .flatten()
            .filter_map(|o| o.label)
            .max()
            .map_or(0, |y| y + 1)
    });
    DatasetCollection::new(
        sources
            .into_iter()
            .enumerate()
            .map(|(k, obs)| SourceDataset::new(k, obs))
            .collect(),
        m,
    )
}

pub fn omega_to_csv(omega: &OmegaMatrix) -> Result<String> {
    let mut header = owned(&["source", "obs"]);
    header.extend((0..omega.ncols()).map(|l| format!("omega_{l}")));
    write_records(
        &header,
        (0..omega.nrows()).map(|r| {
            let mut rec = vec![omega.sources()[r].to_string(), omega.ids()[r].to_string()];
            rec.extend(omega.row(r).iter().map(|v| fmt_f64(*v)));
            rec
        }),
    )
}

pub fn weights_to_csv(omega: &OmegaMatrix, w: &WeightVector) -> Result<String> {
    if w.len() != omega.nrows() {
        return Err(Error::LengthMismatch {
            expected: omega.nrows(),
            actual: w.len(),
        });
    }
    write_records(
        &owned(&["source", "obs", "pi", "unnormalized"]),
        (0..w.len()).map(|r| {
            vec![
                omega.sources()[r].to_string(),
                omega.ids()[r].to_string(),
                fmt_f64(w.pi[r]),
                fmt_f64(w.unnormalized[r]),
            ]
        }),
    )
}

/// Reads the `pi` and `unnormalized` columns of a weights file.
pub fn weights_from_csv(text: &str) -> Result<WeightVector> {
    let mut rdr = ReaderBuilder::new().from_reader(text.as_bytes());
    let mut pi = Vec::new();
    let mut un = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?;
        if rec.len() != 4 {
            return Err(Error::Parse(format!("line {}: expected 4 columns", i + 2)));
        }
        pi.push(parse(&rec[2], i + 2, "pi")?);
        un.push(parse(&rec[3], i + 2, "unnormalized")?);
    }
    Ok(WeightVector { pi, unnormalized: un })
}

pub fn trace_to_csv(trace: &[TracePoint]) -> Result<String> {
    write_records(
        &owned(&["iter", "objective", "grad_norm"]),
        trace
            .iter()
            .map(|t| vec![t.iteration.to_string(), fmt_f64(t.objective), fmt_f64(t.grad_norm)]),
    )
}

/// Gini table in units of `10⁻²`, as the `_x100` column suffix says.
pub fn study_to_csv(cells: &[StudyCell]) -> Result<String> {
    write_records(
        &owned(&[
            "r1",
            "r2",
            "mean_gini_x100",
            "two_sigma_x100",
            "mean_abs_diff_x100",
            "true_gini_x100",
        ]),
        cells.iter().map(|c| {
            vec![
                fmt_f64(c.r1),
                fmt_f64(c.r2),
                fmt_f64(100.0 * c.mean_gini),
                fmt_f64(100.0 * c.two_sigma),
                fmt_f64(100.0 * c.mean_abs_diff),
                fmt_f64(100.0 * c.mean_true_gini),
            ]
        }),
    )
}

pub fn compare_reports_to_csv(reports: &[CompareReport]) -> Result<String> {
    write_records(
        &owned(&["seed", "gamma", "naive_acc", "debiased_acc", "gini", "l2_to_uniform"]),
        reports.iter().map(|r| {
            vec![
                r.seed.to_string(),
                fmt_f64(r.gamma),
                fmt_f64(r.naive.accuracy),
                fmt_f64(r.debiased.accuracy),
                fmt_f64(r.gini),
                fmt_f64(r.l2_to_uniform),
            ]
        }),
    )
}

/// `value,mass` rows of a distribution next to its reference.
pub fn distribution_to_csv(support: &[i64], mass: &[f64], reference: &[f64]) -> Result<String> {
    write_records(
        &owned(&["value", "mass", "reference"]),
        support.iter().zip(mass).map(|(v, m)| {
            let r = usize::try_from(*v).ok().and_then(|i| reference.get(i)).copied();
            vec![v.to_string(), fmt_f64(*m), r.map(fmt_f64).unwrap_or_default()]
        }),
    )
}
