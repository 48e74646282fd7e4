//! Dataset layout on disk:
//!
//! ```text
//! <root>/manifest.txt        key = value: file names, intrinsics, rates
//! <root>/imu.csv             t,ax,ay,az,wx,wy,wz
//! <root>/images/frame_<index>_<t_ns>.pgm
//! <root>/ground_truth.csv    optional, same schema as estimator output
//! ```

pub mod config;
pub mod formats;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{CameraIntrinsics, ImageFrame};
use crate::state::ImuSample;

pub use config::{load_sim_config, sim_config_from_text, sim_config_to_text, RunConfig};
pub use formats::{
    read_states, read_stats, stats_path, time_from_ns, ns_from_time, write_states, StampedState, UpdateStats,
};

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub intrinsics: CameraIntrinsics,
    pub imu: Vec<ImuSample>,
    pub frames: Vec<ImageFrame>,
    pub ground_truth: Option<Vec<StampedState>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub imu: PathBuf,
    pub images: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub intrinsics: CameraIntrinsics,
    pub imu_rate: Option<f64>,
    pub cam_rate: Option<f64>,
}

fn mean_rate(times: impl ExactSizeIterator<Item = f64> + Clone) -> Option<f64> {
    let n = times.len();
    let first = times.clone().next()?;
    let last = times.last()?;
    (n > 1 && last > first).then(|| (n - 1) as f64 / (last - first))
}

impl DatasetManifest {
    pub fn parse(text: &str, root: &Path, source: &str) -> Result<Self> {
        let (mut imu, mut images, mut gt) = (None, None, None);
        let (mut fx, mut fy, mut cx, mut cy, mut w, mut h) = (None, None, None, None, None, None);
        let (mut imu_rate, mut cam_rate) = (None, None);
        for e in config::parse_key_values(text, source)? {
            let num = || {
                e.value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    source_name: source.to_string(),
                    line: e.line,
                    reason: format!("`{}` is not a number", e.value),
                })
            };
            let int = || {
                e.value.parse::<usize>().map_err(|_| Error::Parse {
                    source_name: source.to_string(),
                    line: e.line,
                    reason: format!("`{}` is not an integer", e.value),
                })
            };
            match e.key.as_str() {
                "imu" => imu = Some(root.join(&e.value)),
                "images" => images = Some(root.join(&e.value)),
                "ground_truth" => gt = Some(root.join(&e.value)),
                "fx" => fx = Some(num()?),
                "fy" => fy = Some(num()?),
                "cx" => cx = Some(num()?),
                "cy" => cy = Some(num()?),
                "width" => w = Some(int()?),
                "height" => h = Some(int()?),
                "imu_rate" => imu_rate = Some(num()?),
                "cam_rate" => cam_rate = Some(num()?),
                _ => return Err(Error::UnknownKey { key: e.key.clone(), line: e.line }),
            }
        }
        let need = |name: &str| Error::Parse {
            source_name: source.to_string(),
            line: 0,
            reason: format!("manifest lacks `{name}`"),
        };
        let intrinsics = CameraIntrinsics::new(
            fx.ok_or_else(|| need("fx"))?,
            fy.ok_or_else(|| need("fy"))?,
            cx.ok_or_else(|| need("cx"))?,
            cy.ok_or_else(|| need("cy"))?,
            w.ok_or_else(|| need("width"))?,
            h.ok_or_else(|| need("height"))?,
        )?;
        Ok(DatasetManifest {
            root: root.to_path_buf(),
            imu: imu.ok_or_else(|| need("imu"))?,
            images: images.ok_or_else(|| need("images"))?,
            ground_truth: gt,
            intrinsics,
            imu_rate,
            cam_rate,
        })
    }

    fn to_text(&self) -> String {
        let rel = |p: &Path| p.strip_prefix(&self.root).unwrap_or(p).display().to_string();
        let k = &self.intrinsics;
        let mut s = format!("imu = {}\nimages = {}\n", rel(&self.imu), rel(&self.images));
        if let Some(gt) = &self.ground_truth {
            s += &format!("ground_truth = {}\n", rel(gt));
        }
        s += &format!(
            "fx = {:?}\nfy = {:?}\ncx = {:?}\ncy = {:?}\nwidth = {}\nheight = {}\n",
            k.fx, k.fy, k.cx, k.cy, k.width, k.height
        );
        if let Some(r) = self.imu_rate {
            s += &format!("imu_rate = {r:?}\n");
        }
        if let Some(r) = self.cam_rate {
            s += &format!("cam_rate = {r:?}\n");
        }
        s
    }
}

/// Accepts either the dataset directory or its manifest file.
fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST)
    } else {
        path.to_path_buf()
    }
}

pub fn frame_file_name(index: usize, t: f64) -> String {
    format!("frame_{index:06}_{}.pgm", ns_from_time(t))
}

fn parse_frame_name(name: &str) -> Option<(usize, u64)> {
    let stem = name.strip_prefix("frame_")?.strip_suffix(".pgm")?;
    let (idx, ns) = stem.split_once('_')?;
    Some((idx.parse().ok()?, ns.parse().ok()?))
}

fn read_frames(dir: &Path, k: &CameraIntrinsics) -> Result<Vec<ImageFrame>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut entries = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((idx, ns)) = parse_frame_name(&name) {
            entries.push((idx, ns, entry.path()));
        }
    }
    entries.sort_by_key(|e| e.0);
    let mut frames: Vec<ImageFrame> = Vec::with_capacity(entries.len());
    for (row, (_, ns, path)) in entries.iter().enumerate() {
        let t = time_from_ns(*ns);
        if let Some(prev) = frames.last() {
            if !(t > prev.t) {
                return Err(Error::NonMonotonic { source_name: dir.display().to_string(), row });
            }
        }
        let frame = formats::decode_pgm(&std::fs::read(path)?, t, &path.display().to_string())?;
        if frame.width != k.width || frame.height != k.height {
            return Err(Error::DimensionMismatch(format!(
                "{} is {}x{}, intrinsics say {}x{}",
                path.display(),
                frame.width,
                frame.height,
                k.width,
                k.height
            )));
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mpath = manifest_path(path);
    if !mpath.is_file() {
        return Err(Error::MissingFile(mpath));
    }
    let root = mpath.parent().unwrap_or(Path::new("."));
    let manifest = DatasetManifest::parse(&std::fs::read_to_string(&mpath)?, root, &mpath.display().to_string())?;
    let imu = formats::read_imu(&manifest.imu)?;
    let frames = read_frames(&manifest.images, &manifest.intrinsics)?;
    let ground_truth = manifest.ground_truth.as_deref().map(read_states).transpose()?;
    Ok(Dataset { intrinsics: manifest.intrinsics, imu, frames, ground_truth })
}

/// Writes `ds` under `root`, creating directories as needed.
pub fn save_dataset(root: &Path, ds: &Dataset) -> Result<()> {
    let images = root.join("images");
    std::fs::create_dir_all(&images)?;
    let manifest = DatasetManifest {
        root: root.to_path_buf(),
        imu: root.join("imu.csv"),
        images: images.clone(),
        ground_truth: ds.ground_truth.as_ref().map(|_| root.join("ground_truth.csv")),
        intrinsics: ds.intrinsics,
        imu_rate: mean_rate(ds.imu.iter().map(|s| s.t)),
        cam_rate: mean_rate(ds.frames.iter().map(|f| f.t)),
    };
    std::fs::write(&manifest.imu, formats::encode_imu(&ds.imu))?;
    for (i, f) in ds.frames.iter().enumerate() {
        std::fs::write(images.join(frame_file_name(i, f.t)), formats::encode_pgm(f))?;
    }
    if let (Some(gt), Some(p)) = (&ds.ground_truth, &manifest.ground_truth) {
        write_states(p, gt)?;
    }
    std::fs::write(root.join(MANIFEST), manifest.to_text())?;
    Ok(())
}
