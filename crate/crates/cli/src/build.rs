//! `waverep build`: audio directory in, spectrogram dataset out.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use waverep::audio::{decode_wav, resample, to_mono};
use waverep::dataset::{
    enumerate_chunks, hop_for, sample_per_class, save_spectrogram, sidecar_path, write_manifest, DatasetInfo,
    ManifestRow,
};
use waverep::transform::{Provenance, TransformKind, TransformSpec, Transformer};
use waverep::Error;

pub const MANIFEST: &str = "manifest.csv";
pub const SPECTROGRAM_DIR: &str = "spectrograms";

#[derive(Debug, Clone)]
pub struct BuildArgs {
    pub transform: TransformKind,
    pub rate: u32,
    pub per_class: usize,
    pub seed: u64,
    pub rmt_seed: u64,
    pub overlap: f64,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub manifest: PathBuf,
    pub info: DatasetInfo,
    pub written: usize,
    pub skipped_files: Vec<PathBuf>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let hidden = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'));
        if !hidden {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn is_wav(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn load_track(path: &Path, rate: u32) -> waverep::Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::PathIo {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mono = to_mono(&decode_wav(&bytes)?);
    Ok(resample(&mono, rate)?.into_samples())
}

struct Track {
    class: usize,
    path: PathBuf,
    samples: Vec<f32>,
}

pub fn run(args: &BuildArgs) -> Result<BuildReport> {
    if args.rate != 8000 && args.rate != 2000 {
        log::warn!("sample rate {} Hz differs from the usual 8000 or 2000 Hz", args.rate);
    }
    let spec = TransformSpec::new(args.transform, args.rate).with_rmt_seed(args.rmt_seed);
    let transformer = Transformer::new(spec)?;

    let class_dirs: Vec<PathBuf> = sorted_entries(&args.input)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    if class_dirs.is_empty() {
        bail!("{} has no class subdirectories", args.input.display());
    }
    let class_names: Vec<String> = class_dirs
        .iter()
        .map(|d| d.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    let mut jobs = Vec::new();
    for (class, dir) in class_dirs.iter().enumerate() {
        let files: Vec<PathBuf> = sorted_entries(dir)?.into_iter().filter(|p| is_wav(p)).collect();
        if files.is_empty() {
            bail!("class directory {:?} contains no WAV files", class_names[class]);
        }
        jobs.extend(files.into_iter().map(|p| (class, p)));
    }

    let pool = crate::thread_pool()?;
    let loaded: Vec<(usize, PathBuf, waverep::Result<Vec<f32>>)> = pool.install(|| {
        jobs.par_iter()
            .map(|(class, path)| (*class, path.clone(), load_track(path, args.rate)))
            .collect()
    });

    let chunk_len = spec.chunk_len();
    let mut tracks = Vec::new();
    let mut skipped_files = Vec::new();
    let mut pools: Vec<Vec<(usize, usize)>> = vec![Vec::new(); class_names.len()];
    for (class, path, result) in loaded {
        let samples = match result {
            Ok(s) => s,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped_files.push(path);
                continue;
            }
        };
        match enumerate_chunks(samples.len(), chunk_len, args.overlap) {
            Ok(plan) => {
                let t = tracks.len();
                pools[class].extend(plan.offsets.iter().map(|&o| (t, o)));
                tracks.push(Track { class, path, samples });
            }
            Err(Error::EmptyPlan { .. }) => {
                log::warn!(
                    "skipping {}: shorter than one {chunk_len}-sample chunk at {} Hz",
                    path.display(),
                    args.rate
                );
                skipped_files.push(path);
            }
            Err(e) => return Err(e.into()),
        }
    }
    for (class, p) in pools.iter().enumerate() {
        log::info!("class {:?}: {} candidate chunks", class_names[class], p.len());
    }
    let drawn = sample_per_class(&pools, &class_names, args.per_class, args.seed)?;

    let spec_dir = args.output.join(SPECTROGRAM_DIR);
    fs::create_dir_all(&spec_dir).with_context(|| format!("creating {}", spec_dir.display()))?;
    for stale in sorted_entries(&spec_dir)? {
        if stale.extension().is_some_and(|e| e == "sgrm") {
            fs::remove_file(&stale)?;
        }
    }

    let rows: Vec<ManifestRow> = pool.install(|| {
        drawn
            .examples
            .par_iter()
            .enumerate()
            .map(|(i, ex)| -> Result<ManifestRow> {
                let (t, offset) = ex.item;
                let track = &tracks[t];
                debug_assert_eq!(track.class, ex.label);
                let mut s = transformer.apply(&track.samples[offset..offset + chunk_len])?;
                s.label = Some(ex.label as u32);
                let source = track.path.strip_prefix(&args.input).unwrap_or(&track.path).to_path_buf();
                s.provenance = Some(Provenance {
                    source: source.clone(),
                    chunk_offset: offset,
                });
                let rel = Path::new(SPECTROGRAM_DIR).join(format!("{i:06}.sgrm"));
                save_spectrogram(&s, &args.output.join(&rel))?;
                Ok(ManifestRow {
                    path: rel,
                    label: ex.label,
                    class_name: class_names[ex.label].clone(),
                    source_file: source,
                    chunk_offset: offset,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let manifest = args.output.join(MANIFEST);
    let file = fs::File::create(&manifest).with_context(|| format!("creating {}", manifest.display()))?;
    write_manifest(&rows, std::io::BufWriter::new(file))?;

    let info = DatasetInfo {
        spec,
        class_names: class_names.clone(),
        per_class: args.per_class,
        overlap: args.overlap,
        hop: hop_for(chunk_len, args.overlap),
        dataset_seed: args.seed,
        clamped_f_max: transformer.bank_plan().and_then(|p| p.clamped_f_max),
        with_replacement: drawn
            .with_replacement
            .iter()
            .map(|&c| class_names[c].clone())
            .collect(),
    };
    fs::write(sidecar_path(&manifest), info.to_text())?;
    log::info!("wrote {} spectrograms to {}", rows.len(), args.output.display());
    Ok(BuildReport {
        manifest,
        info,
        written: rows.len(),
        skipped_files,
    })
}
