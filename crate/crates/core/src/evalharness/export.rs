//! CSV output: comma-separated, one header row, `.` decimals, LF endings.
//! Floats use shortest round-trip formatting so identical runs give
//! byte-identical files.

use std::io::Write;
use std::path::Path;

use super::bench::BenchRow;
use super::bler::BlerPoint;
use super::landscape::LandscapeCurve;
use super::mi::MiSweepPoint;
use crate::error::{Error, Result};

fn nonempty<T>(rows: &[T], what: &'static str) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid(what, "nothing to export"));
    }
    Ok(())
}

pub(crate) fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// `ebn0_db,blocks,errors,bler,seed` in grid order.
pub fn write_bler_csv(points: &[BlerPoint], out: impl Write) -> Result<()> {
    nonempty(points, "bler")?;
    let mut w = writer(out);
    w.write_record(["ebn0_db", "blocks", "errors", "bler", "seed"])?;
    for p in points {
        w.write_record([
            p.ebn0_db.to_string(),
            p.blocks.to_string(),
            p.errors.to_string(),
            p.bler.to_string(),
            p.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `estimator,ebn0_db,mi_nats,mi_bits,capacity_bits,rate_bits,seed`,
/// sorted by estimator then Eb/N0.
pub fn write_mi_csv(points: &[MiSweepPoint], out: impl Write) -> Result<()> {
    nonempty(points, "mi")?;
    let mut sorted: Vec<&MiSweepPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.estimator
            .cmp(&b.estimator)
            .then(a.ebn0_db.total_cmp(&b.ebn0_db))
    });
    let mut w = writer(out);
    w.write_record([
        "estimator",
        "ebn0_db",
        "mi_nats",
        "mi_bits",
        "capacity_bits",
        "rate_bits",
        "seed",
    ])?;
    for p in sorted {
        w.write_record([
            p.estimator.clone(),
            p.ebn0_db.to_string(),
            p.mi_nats.to_string(),
            p.mi_bits.to_string(),
            p.capacity_bits.to_string(),
            p.rate_bits.to_string(),
            p.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `gamma,d,value`, curve by curve.
pub fn write_landscape_csv(curves: &[LandscapeCurve], out: impl Write) -> Result<()> {
    nonempty(curves, "landscape")?;
    let mut w = writer(out);
    w.write_record(["gamma", "d", "value"])?;
    for c in curves {
        for (d, v) in &c.points {
            w.write_record([c.gamma.to_string(), d.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `estimator,dim,rho,oracle_nats,estimate_nats,abs_error,seed`, sorted by
/// estimator, dimension and ρ.
pub fn write_bench_csv(rows: &[BenchRow], out: impl Write) -> Result<()> {
    nonempty(rows, "bench")?;
    let mut sorted: Vec<&BenchRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.estimator
            .cmp(&b.estimator)
            .then(a.dim.cmp(&b.dim))
            .then(a.rho.total_cmp(&b.rho))
    });
    let mut w = writer(out);
    w.write_record([
        "estimator",
        "dim",
        "rho",
        "oracle_nats",
        "estimate_nats",
        "abs_error",
        "seed",
    ])?;
    for r in sorted {
        w.write_record([
            r.estimator.clone(),
            r.dim.to_string(),
            r.rho.to_string(),
            r.oracle_nats.to_string(),
            r.estimate_nats.to_string(),
            r.abs_error.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_results<F>(path: impl AsRef<Path>, write: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
{
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write(&mut file)?;
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi_point(estimator: &str, ebn0_db: f64) -> MiSweepPoint {
        MiSweepPoint {
            estimator: estimator.into(),
            ebn0_db,
            mi_nats: 0.5,
            mi_bits: 0.5 / std::f64::consts::LN_2,
            capacity_bits: 1.0,
            rate_bits: 2.0,
            seed: 3,
            failure: None,
        }
    }

    #[test]
    fn one_bler_row() {
        let mut buf = Vec::new();
        let p = BlerPoint {
            ebn0_db: 7.0,
            blocks: 1000,
            errors: 3,
            bler: 0.003,
            seed: 42,
        };
        write_bler_csv(&[p], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "ebn0_db,blocks,errors,bler,seed\n7,1000,3,0.003,42\n"
        );
        assert!(write_bler_csv(&[], Vec::new()).is_err());
    }

    #[test]
    fn mi_rows_sorted() {
        let pts = [
            mi_point("mine", 10.0),
            mi_point("gamma-dime:1", 10.0),
            mi_point("mine", -2.0),
        ];
        let mut buf = Vec::new();
        write_mi_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let keys: Vec<&str> = text
            .lines()
            .skip(1)
            .map(|l| &l[..l.match_indices(',').nth(1).unwrap().0])
            .collect();
        assert_eq!(keys, ["gamma-dime:1,10", "mine,-2", "mine,10"]);
        assert!(!text.contains('\r'));
    }
}
