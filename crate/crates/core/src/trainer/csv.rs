use std::path::Path;

use ndarray::Array2;

use crate::artifact::{FeatureMatrix, LabelVector};
use crate::error::{CoresetError, Result};

/// Numeric CSV, last column an integer class label, optional header row.
/// The class count is `max label + 1`.
pub fn load_csv(path: &Path) -> Result<(FeatureMatrix, LabelVector)> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CoresetError::format(&file, e.to_string()))?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CoresetError::format(&file, e.to_string()))?;
        if record.len() < 2 {
            return Err(CoresetError::format(&file, format!("line {}: need features and a label", line + 1)));
        }
        let parsed: std::result::Result<Vec<f32>, _> =
            record.iter().take(record.len() - 1).map(str::parse::<f32>).collect();
        let label = record[record.len() - 1].parse::<usize>();
        let (row, label) = match (parsed, label) {
            (Ok(row), Ok(label)) => (row, label),
            _ if line == 0 => continue, // header
            _ => {
                return Err(CoresetError::format(
                    &file,
                    format!("line {}: non-numeric value or non-integer label", line + 1),
                ))
            }
        };
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(CoresetError::format(&file, format!("line {}: expected {} features", line + 1, w)))
            }
            _ => {}
        }
        features.extend(row);
        labels.push(label);
    }
    let d = width.ok_or_else(|| CoresetError::format(&file, "no data rows"))?;
    let n = labels.len();
    let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let features = FeatureMatrix::checked(
        Array2::from_shape_vec((n, d), features).expect("row width checked"),
        &file,
    )?;
    let labels = LabelVector::checked(labels, num_classes.max(2), &file)?;
    Ok((features, labels))
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    #[test]
    fn header_optional() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x,y,label\n1.0,2.0,0\n3.5,-1,2\n0,0,1").unwrap();
        let (x, y) = load_csv(f.path()).unwrap();
        assert_eq!((x.n(), x.d()), (3, 2));
        assert_eq!(y.as_slice(), &[0, 2, 1]);
        assert_eq!(y.num_classes(), 3);

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "1.0,2.0,0\n3.5,-1,1").unwrap();
        assert_eq!(load_csv(g.path()).unwrap().0.n(), 2);
    }

    #[test]
    fn bad_rows_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1.0,2.0,0\n3.5,abc,1").unwrap();
        assert!(load_csv(f.path()).unwrap_err().to_string().contains("line 2"));
        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "1.0,2.0,0\n3.5,1").unwrap();
        assert!(load_csv(g.path()).is_err());
    }
}
