#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use focus360::bench::synthetic_frame;
use focus360::geom::RasterDims;
use focus360::locate::{HoldPolicy, ProviderConfig};
use focus360::media::{write_frame, FrameBuffer, VideoMeta};
use focus360::pipeline::RunConfig;
use focus360::EffectConfig;

/// Writes `n` textured frames plus a manifest under `dir/input`.
pub fn write_sequence(dir: &Path, dims: RasterDims, n: usize, fps: f64) -> (PathBuf, Vec<FrameBuffer>) {
    let input = dir.join("input");
    fs::create_dir_all(&input).unwrap();
    let meta = VideoMeta {
        width: dims.width,
        height: dims.height,
        fps,
        frame_count: n,
        frame_pattern: "frame_%06d.ppm".into(),
        base_dir: input.clone(),
    };
    let frames: Vec<FrameBuffer> = (0..n).map(|k| synthetic_frame(dims, 1000 + k as u64)).collect();
    for (k, f) in frames.iter().enumerate() {
        write_frame(f, &meta.frame_path(k)).unwrap();
    }
    let manifest = input.join("manifest.txt");
    fs::write(&manifest, meta.to_manifest_text()).unwrap();
    (manifest, frames)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

pub fn run_config(manifest: &Path, script: &Path, output: &Path, provider: ProviderConfig) -> RunConfig {
    RunConfig {
        manifest: manifest.to_path_buf(),
        script: script.to_path_buf(),
        output_dir: output.to_path_buf(),
        provider,
        effects: EffectConfig::default(),
        threads: 1,
        hold: HoldPolicy::default(),
        dump_field: false,
        sidecar_url: None,
        sidecar_timeout: Duration::from_secs(5),
    }
}

/// Relative path → contents for every file under `dir`.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}
