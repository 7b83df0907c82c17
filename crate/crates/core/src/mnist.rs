//! IDX reader/writer and the digit-filtered image bank.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// File names of the standard distribution, uncompressed.
pub const TRAIN_FILES: [&str; 2] = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte"];
pub const TEST_FILES: [&str; 2] = ["t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"];

/// Raw images and labels as stored in an IDX pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub height: usize,
    pub width: usize,
    /// `count * height * width` bytes, image-major.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl IdxImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.pixels_per_image();
        &self.pixels[i * d..(i + 1) * d]
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn check_header(path: &Path, bytes: &[u8], magic: u32, header_len: usize) -> Result<()> {
    if bytes.len() >= 4 {
        let found = read_u32(bytes, 0);
        if found != magic {
            return Err(Error::IdxMagic {
                path: path.to_path_buf(),
                expected: magic,
                found,
            });
        }
    }
    if bytes.len() < header_len {
        return Err(Error::IdxLength {
            path: path.to_path_buf(),
            detail: format!("file has {} bytes, header needs {header_len}", bytes.len()),
        });
    }
    Ok(())
}

/// Reads an uncompressed IDX image file and its label file.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<IdxImages> {
    let img = read_file(images_path)?;
    check_header(images_path, &img, IMAGE_MAGIC, 16)?;
    let count = read_u32(&img, 4) as usize;
    let height = read_u32(&img, 8) as usize;
    let width = read_u32(&img, 12) as usize;
    let expected = count
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .ok_or_else(|| Error::IdxLength {
            path: images_path.to_path_buf(),
            detail: "header dimensions overflow".into(),
        })?;
    if img.len() - 16 != expected {
        return Err(Error::IdxLength {
            path: images_path.to_path_buf(),
            detail: format!(
                "header declares {count} images of {height}x{width} ({expected} bytes), payload has {}",
                img.len() - 16
            ),
        });
    }

    let lab = read_file(labels_path)?;
    check_header(labels_path, &lab, LABEL_MAGIC, 8)?;
    let n_labels = read_u32(&lab, 4) as usize;
    if lab.len() - 8 != n_labels {
        return Err(Error::IdxLength {
            path: labels_path.to_path_buf(),
            detail: format!("header declares {n_labels} labels, payload has {}", lab.len() - 8),
        });
    }
    if n_labels != count {
        return Err(Error::IdxCountMismatch {
            images: count,
            labels: n_labels,
        });
    }
    Ok(IdxImages {
        height,
        width,
        pixels: img[16..].to_vec(),
        labels: lab[8..].to_vec(),
    })
}

/// Writes an IDX image/label pair.
pub fn write_idx(images: &IdxImages, images_path: &Path, labels_path: &Path) -> Result<()> {
    let mut img = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGE_MAGIC, images.len() as u32, images.height as u32, images.width as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(&images.pixels);
    std::fs::write(images_path, img).map_err(|e| Error::io(images_path, e))?;

    let mut lab = Vec::with_capacity(8 + images.len());
    for v in [LABEL_MAGIC, images.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(&images.labels);
    std::fs::write(labels_path, lab).map_err(|e| Error::io(labels_path, e))
}

/// Images of selected digits only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBank {
    images: IdxImages,
    /// Row of each bank image in the set it was first filtered from.
    source_rows: Vec<usize>,
    by_digit: BTreeMap<u8, Vec<usize>>,
}

impl ImageBank {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.images.pixels_per_image()
    }

    pub fn image(&self, row: usize) -> &[u8] {
        self.images.image(row)
    }

    pub fn labels(&self) -> &[u8] {
        &self.images.labels
    }

    /// Bank rows holding `digit`.
    pub fn rows_for(&self, digit: u8) -> &[usize] {
        self.by_digit.get(&digit).map_or(&[], Vec::as_slice)
    }

    /// Digit -> rows of the original IDX set.
    pub fn source_index_by_digit(&self) -> BTreeMap<u8, Vec<usize>> {
        self.by_digit
            .iter()
            .map(|(&d, rows)| (d, rows.iter().map(|&r| self.source_rows[r]).collect()))
            .collect()
    }

    pub fn as_idx(&self) -> &IdxImages {
        &self.images
    }

    /// Filters this bank again, keeping original source rows.
    pub fn refilter(&self, keep: &[u8]) -> Result<ImageBank> {
        let bank = filter_digits(&self.images, keep)?;
        let source_rows = bank.source_rows.iter().map(|&r| self.source_rows[r]).collect();
        Ok(ImageBank { source_rows, ..bank })
    }
}

/// Keeps only images whose label is in `keep`; every kept digit must appear.
pub fn filter_digits(images: &IdxImages, keep: &[u8]) -> Result<ImageBank> {
    let d = images.pixels_per_image();
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    let mut source_rows = Vec::new();
    let mut by_digit: BTreeMap<u8, Vec<usize>> = keep.iter().map(|&k| (k, Vec::new())).collect();
    for (i, &label) in images.labels.iter().enumerate() {
        if let Some(rows) = by_digit.get_mut(&label) {
            rows.push(labels.len());
            labels.push(label);
            source_rows.push(i);
            pixels.extend_from_slice(&images.pixels[i * d..(i + 1) * d]);
        }
    }
    if let Some((&digit, _)) = by_digit.iter().find(|(_, rows)| rows.is_empty()) {
        return Err(Error::DegenerateBank(digit));
    }
    Ok(ImageBank {
        images: IdxImages {
            height: images.height,
            width: images.width,
            pixels,
            labels,
        },
        source_rows,
        by_digit,
    })
}

/// Train and test banks for the given digits, read from `dir`.
#[derive(Debug, Clone)]
pub struct MnistBanks {
    pub train: ImageBank,
    pub test: ImageBank,
}

pub fn load_banks(dir: &Path, digits: &[u8]) -> Result<MnistBanks> {
    let paths = |names: [&str; 2]| -> Result<(PathBuf, PathBuf)> {
        let (a, b) = (dir.join(names[0]), dir.join(names[1]));
        if !a.is_file() || !b.is_file() {
            return Err(Error::MissingMnist {
                dir: dir.to_path_buf(),
                expected: TRAIN_FILES.iter().chain(&TEST_FILES).copied().collect::<Vec<_>>().join(", "),
            });
        }
        Ok((a, b))
    };
    let (ti, tl) = paths(TRAIN_FILES)?;
    let (ei, el) = paths(TEST_FILES)?;
    Ok(MnistBanks {
        train: filter_digits(&load_idx(&ti, &tl)?, digits)?,
        test: filter_digits(&load_idx(&ei, &el)?, digits)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(labels: Vec<u8>) -> IdxImages {
        let n = labels.len();
        IdxImages {
            height: 2,
            width: 2,
            pixels: (0..n * 4).map(|v| v as u8).collect(),
            labels,
        }
    }

    #[test]
    fn filter_keeps_requested_digits() {
        let raw = tiny(vec![1, 2, 3, 6, 2, 0]);
        let bank = filter_digits(&raw, &[2, 6]).unwrap();
        assert_eq!(bank.len(), 3);
        let idx = bank.source_index_by_digit();
        assert_eq!(idx[&2], vec![1, 4]);
        assert_eq!(idx[&6], vec![3]);
        assert_eq!(bank.image(0), raw.image(1));
        assert_eq!(bank.rows_for(2), &[0, 2]);
    }

    #[test]
    fn refilter_is_idempotent() {
        let bank = filter_digits(&tiny(vec![1, 2, 3, 6, 2, 0]), &[2, 6]).unwrap();
        assert_eq!(bank.refilter(&[2, 6]).unwrap(), bank);
    }

    #[test]
    fn missing_digit_is_degenerate() {
        let err = filter_digits(&tiny(vec![1, 2, 3]), &[2, 6]).unwrap_err();
        assert!(matches!(err, Error::DegenerateBank(6)));
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        let raw = tiny(vec![4, 2, 6]);
        write_idx(&raw, &ip, &lp).unwrap();
        assert_eq!(load_idx(&ip, &lp).unwrap(), raw);

        // swapped files: wrong magic
        assert!(matches!(load_idx(&lp, &ip), Err(Error::IdxMagic { .. })));

        // truncated payload
        let mut bytes = std::fs::read(&ip).unwrap();
        bytes.pop();
        std::fs::write(&ip, &bytes).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::IdxLength { .. })));

        // label count differs from image count
        write_idx(&raw, &ip, &lp).unwrap();
        write_idx(&tiny(vec![4, 2]), &dir.path().join("img2"), &lp).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::IdxCountMismatch { images: 3, labels: 2 })));
    }

    #[test]
    fn missing_directory_names_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_banks(dir.path(), &[2, 6]).unwrap_err();
        assert!(err.to_string().contains("train-images-idx3-ubyte"), "{err}");
    }
}
