//! Dataset ingestion (CSV tables, binary PGM image folders) and synthetic
//! generators used as desk-scale stand-ins for large classification corpora.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeds::standard_normal;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Tabular,
    Image,
}

/// Features plus integer class labels.
///
/// Tabular features are rank-2 `[n, d]`; image features are rank-4
/// `[n, h, w, channels]`. Labels index into `class_names`. Datasets are
/// immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    class_names: Vec<String>,
    feature_kind: FeatureKind,
}

impl Dataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_kind: FeatureKind,
    ) -> Result<Self> {
        let expected_rank = match feature_kind {
            FeatureKind::Tabular => 2,
            FeatureKind::Image => 4,
        };
        if features.rank() != expected_rank {
            return Err(Error::shape(format!(
                "{feature_kind:?} dataset requires rank-{expected_rank} features, got shape {:?}",
                features.shape()
            )));
        }
        let n = features.shape()[0];
        if labels.len() != n {
            return Err(Error::shape(format!(
                "{} feature rows but {} labels",
                n,
                labels.len()
            )));
        }
        if n == 0 {
            return Err(Error::validation("dataset must contain at least one sample"));
        }
        if class_names.is_empty() {
            return Err(Error::validation("dataset must name at least one class"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::validation(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if let Some(bad) = features.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite feature value {bad} after normalization"
            )));
        }
        Ok(Self {
            features,
            labels,
            class_names,
            feature_kind,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_kind(&self) -> FeatureKind {
        self.feature_kind
    }

    /// Per-sample feature shape (without the leading sample axis).
    pub fn sample_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    /// Copies the selected rows into a batch tensor plus their labels.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::validation("cannot gather an empty batch"));
        }
        let row = self.features.len() / self.n_samples();
        let mut data = Vec::with_capacity(indices.len() * row);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n_samples() {
                return Err(Error::validation(format!(
                    "sample index {i} out of range for {} samples",
                    self.n_samples()
                )));
            }
            data.extend_from_slice(&self.features.data()[i * row..(i + 1) * row]);
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        Ok((Tensor::new(shape, data)?, labels))
    }

    /// A new dataset holding only the selected rows (class names kept).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let (features, labels) = self.gather(indices)?;
        Self::new(features, labels, self.class_names.clone(), self.feature_kind)
    }
}

/// Loads a CSV table with a header row. All columns except `label_column`
/// must be numeric; each is min-max normalized to `[0, 1]` (constant columns
/// normalize to all zeros). Labels map to contiguous class ids in order of
/// first appearance.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?
        .clone();
    if headers.is_empty() {
        return Err(Error::parse(format!("{}: empty header row", path.display())));
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| {
            Error::parse(format!(
                "{}: label column {label_column:?} not found in header {:?}",
                path.display(),
                headers.iter().collect::<Vec<_>>()
            ))
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut raw: Vec<Vec<f32>> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
        let row_no = i + 1; // 1-based data row, not counting the header
        if record.len() != headers.len() {
            return Err(Error::parse(format!(
                "{} row {row_no}: expected {} fields, got {}",
                path.display(),
                headers.len(),
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for (col, value) in record.iter().enumerate() {
            if col == label_idx {
                let label = value.to_string();
                let id = match class_names.iter().position(|c| *c == label) {
                    Some(id) => id,
                    None => {
                        class_names.push(label);
                        class_names.len() - 1
                    }
                };
                labels.push(id);
            } else {
                let parsed: f32 = value.trim().parse().map_err(|_| {
                    Error::parse(format!(
                        "{} row {row_no}, column {:?}: cannot parse {value:?} as a number",
                        path.display(),
                        &headers[col]
                    ))
                })?;
                row.push(parsed);
            }
        }
        raw.push(row);
    }
    if raw.is_empty() {
        return Err(Error::parse(format!(
            "{}: no data rows after the header",
            path.display()
        )));
    }
    if feature_names.is_empty() {
        return Err(Error::parse(format!(
            "{}: no feature columns besides the label",
            path.display()
        )));
    }

    // Per-column min-max normalization; constant columns go to zero.
    let d = feature_names.len();
    let n = raw.len();
    let mut data = vec![0.0f32; n * d];
    for j in 0..d {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for row in &raw {
            lo = lo.min(row[j]);
            hi = hi.max(row[j]);
        }
        let range = hi - lo;
        for (i, row) in raw.iter().enumerate() {
            data[i * d + j] = if range > 0.0 { (row[j] - lo) / range } else { 0.0 };
        }
    }
    Dataset::new(
        Tensor::new(vec![n, d], data)?,
        labels,
        class_names,
        FeatureKind::Tabular,
    )
}

/// Writes a tabular dataset back out as CSV: feature columns `f0..f{d-1}`
/// followed by a `label` column holding class names. Feature values print in
/// shortest round-trip form, so a reload reproduces them exactly.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    if dataset.feature_kind() != FeatureKind::Tabular {
        return Err(Error::validation("write_csv supports tabular datasets only"));
    }
    let d = dataset.sample_shape()[0];
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    header.push("label".to_string());
    writer
        .write_record(&header)
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
    for i in 0..dataset.n_samples() {
        let mut record: Vec<String> = dataset.features().data()[i * d..(i + 1) * d]
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        record.push(dataset.class_names()[dataset.labels()[i]].clone());
        writer
            .write_record(&record)
            .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Loads a directory of class subdirectories, each holding binary (P5) PGM
/// images of identical dimensions. Class ids follow lexicographic directory
/// order; pixels scale to `[0, 1]` (maxval must be 255).
pub fn load_pgm_dir(root: &Path) -> Result<Dataset> {
    let mut class_dirs: Vec<std::path::PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::parse(format!("{}: {e}", root.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::validation(format!(
            "{}: no class subdirectories found",
            root.display()
        )));
    }

    let mut class_names = Vec::new();
    let mut labels = Vec::new();
    let mut data: Vec<f32> = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    for (class_id, dir) in class_dirs.iter().enumerate() {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut files: Vec<std::path::PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::parse(format!("{}: {e}", dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .map(|e| e.eq_ignore_ascii_case("pgm"))
                        .unwrap_or(false)
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::validation(format!(
                "{}: class directory contains no .pgm files",
                dir.display()
            )));
        }
        for file in &files {
            let (w, h, pixels) = read_pgm(file)?;
            match dims {
                None => dims = Some((w, h)),
                Some((ew, eh)) if (w, h) != (ew, eh) => {
                    return Err(Error::parse(format!(
                        "{}: image is {w}x{h} but earlier images were {ew}x{eh}",
                        file.display()
                    )));
                }
                _ => {}
            }
            data.extend(pixels.iter().map(|&p| p as f32 / 255.0));
            labels.push(class_id);
        }
        class_names.push(name);
    }
    let (w, h) = dims.expect("at least one image was loaded");
    let n = labels.len();
    Dataset::new(
        Tensor::new(vec![n, h, w, 1], data)?,
        labels,
        class_names,
        FeatureKind::Image,
    )
}

/// Parses one binary PGM file: "P5", whitespace-delimited width/height/maxval
/// header ('#' comment lines allowed), a single whitespace byte, then raw
/// 8-bit pixel rows. maxval must be exactly 255.
fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
    let fail = |msg: &str| Error::parse(format!("{}: {msg}", path.display()));

    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let magic = bytes
            .get(..2)
            .map(|m| String::from_utf8_lossy(m).into_owned())
            .unwrap_or_default();
        return Err(fail(&format!(
            "not a binary PGM (magic {magic:?}, expected \"P5\")"
        )));
    }
    let mut pos = 2;
    let next_token = |pos: &mut usize| -> Result<usize> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(fail("truncated or malformed header"));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fail("malformed header number"))
    };

    let width = next_token(&mut pos)?;
    let height = next_token(&mut pos)?;
    let maxval = next_token(&mut pos)?;
    if maxval != 255 {
        return Err(fail(&format!("maxval must be 255, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(fail("zero image dimension"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(fail("missing whitespace after header"));
    }
    pos += 1;
    let expected = width * height;
    let pixels = &bytes[pos..];
    if pixels.len() < expected {
        return Err(fail(&format!(
            "truncated pixel data: expected {expected} bytes, found {}",
            pixels.len()
        )));
    }
    Ok((width, height, pixels[..expected].to_vec()))
}

/// Gaussian blobs around deterministic class centers; a pure function of its
/// arguments. Center `c` sits at `separation * (1 + c/dim)` along axis
/// `c % dim`, so any two centers are at least `separation` apart.
pub fn make_blobs(
    n_per_class: usize,
    n_classes: usize,
    dim: usize,
    separation: f32,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 || n_classes == 0 || dim == 0 {
        return Err(Error::validation(
            "make_blobs requires positive n_per_class, n_classes and dim",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_per_class * n_classes;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for class in 0..n_classes {
        let axis = class % dim;
        let magnitude = separation * (1.0 + (class / dim) as f32);
        for _ in 0..n_per_class {
            for j in 0..dim {
                let center = if j == axis { magnitude } else { 0.0 };
                data.push(center + standard_normal(&mut rng));
            }
            labels.push(class);
        }
    }
    let class_names = (0..n_classes).map(|c| format!("class_{c}")).collect();
    Dataset::new(
        Tensor::new(vec![n, dim], data)?,
        labels,
        class_names,
        FeatureKind::Tabular,
    )
}

/// Two-class dataset with every feature value in `[-1.25, -1.0]`: summed
/// inputs into a first layer are strongly negative, so hostile (-10) bias
/// initialization leaves ReLU pre-activations negative from the first batch.
/// Class 0 occupies the lower half of the range, class 1 the upper half.
pub fn make_dying_relu_stress(n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::validation("stress dataset needs n >= 2"));
    }
    if dim == 0 {
        return Err(Error::validation("stress dataset needs dim >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        for _ in 0..dim {
            let u: f32 = rng.gen::<f32>();
            let value = if class == 0 {
                -1.25 + 0.125 * u
            } else {
                -1.125 + 0.125 * u
            };
            data.push(value);
        }
        labels.push(class);
    }
    Dataset::new(
        Tensor::new(vec![n, dim], data)?,
        labels,
        vec!["class_0".to_string(), "class_1".to_string()],
        FeatureKind::Tabular,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, contents: &[u8]) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(contents).unwrap();
        path
    }

    fn pgm_bytes(w: usize, h: usize, pixels: &[u8]) -> Vec<u8> {
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        out.extend_from_slice(pixels);
        out
    }

    #[test]
    fn csv_first_appearance_label_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "t.csv", b"x,y,label\n1.0,2.0,a\n3.0,4.0,b\n");
        let ds = load_csv(&path, "label").unwrap();
        assert_eq!(ds.class_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.labels(), &[0, 1]);
        assert_eq!(ds.features().shape(), &[2, 2]);
    }

    #[test]
    fn csv_constant_column_normalizes_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "t.csv", b"x,c,label\n1.0,7.0,a\n3.0,7.0,b\n");
        let ds = load_csv(&path, "label").unwrap();
        assert_eq!(ds.features().data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn csv_malformed_cell_cites_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "t.csv",
            b"x,label\n1.0,a\n2.0,b\n3.0,a\n4.0,b\n1.2.3,a\n",
        );
        let err = load_csv(&path, "label").unwrap_err().to_string();
        assert!(err.contains("row 5") && err.contains("1.2.3"), "{err}");
    }

    #[test]
    fn csv_missing_label_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "t.csv", b"x,y\n1.0,2.0\n");
        let err = load_csv(&path, "label").unwrap_err().to_string();
        assert!(err.contains("label"), "{err}");
    }

    #[test]
    fn csv_empty_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "t.csv", b"x,label\n");
        assert!(load_csv(&path, "label").is_err());
    }

    #[test]
    fn csv_round_trip_reproduces_ids_and_features() {
        let ds = make_blobs(5, 3, 4, 6.0, 11).unwrap();
        // Normalize through a save/load cycle first so the second cycle is exact.
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        write_csv(&ds, &p1).unwrap();
        let loaded = load_csv(&p1, "label").unwrap();
        let p2 = dir.path().join("b.csv");
        write_csv(&loaded, &p2).unwrap();
        let reloaded = load_csv(&p2, "label").unwrap();
        assert_eq!(loaded.labels(), reloaded.labels());
        assert_eq!(loaded.class_names(), reloaded.class_names());
        for (a, b) in loaded
            .features()
            .data()
            .iter()
            .zip(reloaded.features().data())
        {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn csv_columns_normalized_to_unit_interval() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "t.csv",
            b"x,y,label\n-5.0,100.0,a\n5.0,250.0,b\n0.0,175.0,a\n",
        );
        let ds = load_csv(&path, "label").unwrap();
        for v in ds.features().data() {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn pgm_dir_loads_shapes_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        for class in ["healthy", "sick"] {
            fs::create_dir(dir.path().join(class)).unwrap();
            for i in 0..3 {
                let pixels: Vec<u8> = (0..64).map(|p| (p * 4) as u8).collect();
                write_file(
                    &dir.path().join(class),
                    &format!("img{i}.pgm"),
                    &pgm_bytes(8, 8, &pixels),
                );
            }
        }
        let ds = load_pgm_dir(dir.path()).unwrap();
        assert_eq!(ds.features().shape(), &[6, 8, 8, 1]);
        assert_eq!(ds.class_names(), &["healthy".to_string(), "sick".to_string()]);
        assert_eq!(ds.labels(), &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn pgm_max_pixel_scales_to_one() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("c")).unwrap();
        write_file(&dir.path().join("c"), "x.pgm", &pgm_bytes(2, 1, &[255, 0]));
        let ds = load_pgm_dir(dir.path()).unwrap();
        assert_eq!(ds.features().data(), &[1.0, 0.0]);
    }

    #[test]
    fn pgm_ascii_p2_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("c")).unwrap();
        write_file(&dir.path().join("c"), "x.pgm", b"P2\n2 1\n255\n255 0\n");
        let err = load_pgm_dir(dir.path()).unwrap_err().to_string();
        assert!(err.contains("P5") && err.contains("x.pgm"), "{err}");
    }

    #[test]
    fn pgm_truncated_pixels_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("c")).unwrap();
        write_file(&dir.path().join("c"), "x.pgm", &pgm_bytes(4, 4, &[9; 3]));
        let err = load_pgm_dir(dir.path()).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
    }

    #[test]
    fn pgm_mixed_dimensions_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("c")).unwrap();
        write_file(&dir.path().join("c"), "a.pgm", &pgm_bytes(2, 2, &[1; 4]));
        write_file(&dir.path().join("c"), "b.pgm", &pgm_bytes(3, 2, &[1; 6]));
        let err = load_pgm_dir(dir.path()).unwrap_err().to_string();
        assert!(err.contains("b.pgm"), "{err}");
    }

    #[test]
    fn blobs_deterministic_per_seed() {
        let a = make_blobs(10, 2, 3, 5.0, 99).unwrap();
        let b = make_blobs(10, 2, 3, 5.0, 99).unwrap();
        assert_eq!(a, b);
        let c = make_blobs(10, 2, 3, 5.0, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stress_dataset_is_all_at_most_minus_one() {
        let ds = make_dying_relu_stress(64, 5, 3).unwrap();
        assert!(ds.features().data().iter().all(|&v| v <= -1.0));
        assert_eq!(ds, make_dying_relu_stress(64, 5, 3).unwrap());
        assert_eq!(ds.n_classes(), 2);
    }

    #[test]
    fn gather_and_subset() {
        let ds = make_blobs(3, 2, 2, 4.0, 1).unwrap();
        let sub = ds.subset(&[0, 4, 5]).unwrap();
        assert_eq!(sub.n_samples(), 3);
        assert_eq!(sub.labels(), &[0, 1, 1]);
        assert!(ds.subset(&[99]).is_err());
    }
}
