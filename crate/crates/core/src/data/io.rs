//! PNG datasets on disk described by a comma-separated manifest.
//!
//! Each manifest line is `relative/path.png,class_name[,group_key]`; lines
//! starting with `#` are comments. A `# classes: a,b,...` comment fixes the
//! class order and makes any other class name an error; otherwise classes
//! are numbered in order of first appearance. Paths whose first component
//! is `test` belong to the test split, everything else to train.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{ImageBuffer, Rgb, RgbImage};
use rayon::prelude::*;

use super::{Dataset, LabeledImage, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.csv";
const CLASSES_PREFIX: &str = "classes:";

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Target side length; `None` keeps the native size, which must then be
    /// square and identical across images.
    pub res: Option<usize>,
}

struct Entry {
    path: String,
    class: usize,
    group: Option<String>,
    split: Split,
}

fn parse_manifest(text: &str) -> Result<(Vec<String>, Vec<Entry>)> {
    let mut classes: Vec<String> = Vec::new();
    let mut fixed = false;
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(list) = comment.trim().strip_prefix(CLASSES_PREFIX) {
                if fixed || !entries.is_empty() {
                    return Err(Error::Dataset(format!(
                        "manifest line {}: class list must precede all entries",
                        lineno + 1
                    )));
                }
                classes = list.split(',').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect();
                fixed = true;
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Dataset(format!(
                "manifest line {}: expected `path,class[,group]`, got `{line}`",
                lineno + 1
            )));
        }
        let class = match classes.iter().position(|c| c == fields[1]) {
            Some(i) => i,
            None if fixed => {
                return Err(Error::Dataset(format!(
                    "manifest line {}: unknown class `{}`",
                    lineno + 1,
                    fields[1]
                )))
            }
            None => {
                classes.push(fields[1].to_owned());
                classes.len() - 1
            }
        };
        let first = Path::new(fields[0]).components().next();
        let split = match first {
            Some(c) if c.as_os_str() == "test" => Split::Test,
            _ => Split::Train,
        };
        entries.push(Entry {
            path: fields[0].to_owned(),
            class,
            group: fields.get(2).filter(|g| !g.is_empty()).map(|g| g.to_string()),
            split,
        });
    }
    Ok((classes, entries))
}

fn decode(path: &Path, res: Option<usize>) -> Result<Tensor> {
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.to_owned(),
            message: e.to_string(),
        })?
        .to_rgb8();
    let img = match res {
        Some(r) if img.width() as usize != r || img.height() as usize != r => {
            image::imageops::resize(&img, r as u32, r as u32, FilterType::Triangle)
        }
        _ => img,
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|p| p as f32 / 127.5 - 1.0).collect();
    Tensor::new(vec![h, w, 3], data)
}

/// Reads a manifest and its images into a dataset.
pub fn ingest(root: &Path, manifest: &Path, opts: &IngestOptions) -> Result<Dataset> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let (classes, entries) = parse_manifest(&text)?;
    if entries.is_empty() {
        return Err(Error::Dataset(format!("{} lists no images", manifest.display())));
    }
    let pixels: Vec<Tensor> = entries
        .par_iter()
        .map(|e| decode(&root.join(&e.path), opts.res))
        .collect::<Result<_>>()?;
    let res = pixels[0].shape()[0];
    let mut ds = Dataset {
        classes,
        res,
        train: Vec::new(),
        test: Vec::new(),
    };
    for (e, px) in entries.into_iter().zip(pixels) {
        if px.shape() != [res, res, 3] {
            return Err(Error::Image {
                path: root.join(&e.path),
                message: format!("size {:?} differs from {res}×{res}; pass a resolution to resize", px.shape()),
            });
        }
        let im = LabeledImage {
            pixels: px,
            label: e.class,
            group: e.group,
        };
        match e.split {
            Split::Train => ds.train.push(im),
            Split::Test => ds.test.push(im),
        }
    }
    ds.validate()?;
    Ok(ds)
}

/// Converts an H×W×3 image in [-1,1] to 8-bit RGB.
pub fn to_rgb8(pixels: &Tensor) -> Result<RgbImage> {
    let s = pixels.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::Shape(format!("expected H×W×3 image, got {s:?}")));
    }
    let raw = pixels
        .data()
        .iter()
        .map(|&v| ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8)
        .collect();
    Ok(ImageBuffer::<Rgb<u8>, _>::from_raw(s[1] as u32, s[0] as u32, raw).expect("buffer sized from shape"))
}

pub fn write_png(pixels: &Tensor, path: &Path) -> Result<()> {
    to_rgb8(pixels)?.save(path).map_err(|e| Error::Image {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

pub fn read_png(path: &Path) -> Result<Tensor> {
    decode(path, None)
}

/// Writes every image as PNG under `root/{train,test}/{class}/` and a
/// manifest at `root/manifest.csv`. Returns the manifest path.
pub fn export(ds: &Dataset, root: &Path) -> Result<PathBuf> {
    let mut manifest = format!("# {CLASSES_PREFIX} {}\n", ds.classes.join(","));
    let mut jobs = Vec::new();
    for split in [Split::Train, Split::Test] {
        for class in &ds.classes {
            let dir = root.join(split.dir()).join(class);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        for (i, im) in ds.split(split).iter().enumerate() {
            let rel = format!("{}/{}/{i:05}.png", split.dir(), ds.classes[im.label]);
            manifest.push_str(&rel);
            manifest.push(',');
            manifest.push_str(&ds.classes[im.label]);
            if let Some(g) = &im.group {
                manifest.push(',');
                manifest.push_str(g);
            }
            manifest.push('\n');
            jobs.push((root.join(rel), &im.pixels));
        }
    }
    jobs.par_iter().try_for_each(|(path, px)| write_png(px, path))?;
    let path = root.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
