//! Data CSV reader for `fit`: a header `y,x1,…,xp` followed by numeric rows.

use std::path::Path;

pub fn read_data(path: &Path, p: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>), String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    let expected: Vec<String> = std::iter::once("y".to_string()).chain((1..=p).map(|j| format!("x{j}"))).collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(format!("header must be {}, found {}", expected.join(","), header.iter().collect::<Vec<_>>().join(",")));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        // header is line 1
        let line = record.position().map_or(i + 2, |pos| pos.line() as usize);
        let values = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| format!("line {line}: '{f}' is not a number")))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(format!("line {line}: non-finite value {v}"));
        }
        ys.push(values[0]);
        xs.push(values[1..].to_vec());
    }
    if ys.is_empty() {
        return Err(format!("{}: no data rows", path.display()));
    }
    Ok((xs, ys))
}
