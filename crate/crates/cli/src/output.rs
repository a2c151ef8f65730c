//! Output formats: CSV tables, `.grid` snapshots and plain-text reports,
//! all written atomically.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use kfp_core::analysis::LevelError;
use kfp_core::mesh::Field;
use kfp_core::solvers::NormRecord;

use crate::CliError;

/// Formats a real with 17 significant digits, trailing zeros trimmed.
///
/// Plain decimal for magnitudes in `[1e-5, 1e17)`, exponent notation
/// otherwise; integers keep one decimal (`1.0`). Non-finite values print as
/// `nan`, `inf` or `-inf`.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0.0".into();
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let sign = if negative { "-" } else { "" };

    if !(-5..17).contains(&exp) {
        let (head, tail) = digits.split_at(1);
        let tail = if tail.is_empty() { "0" } else { tail };
        return format!("{sign}{head}.{tail}e{exp}");
    }
    let mut out = String::from(sign);
    if exp < 0 {
        out.push_str("0.");
        out.push_str(&"0".repeat((-exp - 1) as usize));
        out.push_str(digits);
    } else {
        let point = exp as usize + 1;
        if digits.len() > point {
            out.push_str(&digits[..point]);
            out.push('.');
            out.push_str(&digits[point..]);
        } else {
            out.push_str(digits);
            out.push_str(&"0".repeat(point - digits.len()));
            out.push_str(".0");
        }
    }
    out
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn norms_csv(records: &[NormRecord]) -> String {
    let mut s = String::from("time,l2,linf\n");
    for r in records {
        let _ = writeln!(s, "{},{},{}", format_real(r.time), format_real(r.l2), format_real(r.linf));
    }
    s
}

pub fn errors_csv(levels: &[LevelError]) -> String {
    let mut s = String::from("h,dt,time,l2_error,linf_error,order\n");
    for l in levels {
        let order = l.order.map(format_real).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            format_real(l.h),
            format_real(l.dt),
            format_real(l.time),
            format_real(l.l2_error),
            format_real(l.linf_error),
            order
        );
    }
    s
}

/// `.grid` snapshot: a header `# nv nz v_min v_max z_min z_max time`, then
/// `nz` rows of `nv` nodal values.
pub fn grid(field: &Field) -> String {
    let mesh = field.mesh();
    let d = mesh.domain();
    let np = mesh.n() + 1;
    let mut s = format!(
        "# {np} {np} {} {} {} {} {}\n",
        format_real(d.v_min),
        format_real(d.v_max),
        format_real(d.z_min),
        format_real(d.z_max),
        format_real(field.time)
    );
    for j in 0..np {
        let row: Vec<String> = (0..np).map(|i| format_real(field.values[mesh.node_index(i, j)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// Writes one `.grid` file per snapshot, named by snapshot index.
pub fn write_grids(dir: &Path, snapshots: &[Field]) -> Result<Vec<PathBuf>, CliError> {
    snapshots
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let path = dir.join(format!("field_{k:05}.grid"));
            write_atomic(&path, &grid(f))?;
            Ok(path)
        })
        .collect()
}
