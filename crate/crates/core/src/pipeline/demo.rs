//! End-to-end demo: synthesize subjects, personalize, track, build dynamic
//! textures, blend, export a bundle and write the error report.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::bundle::{export_bundle, BundleManifest, BundleTextures};
use super::io::{save_fit, save_scans, save_texture_pack};
use super::report::{column_means, error_heatmap, write_heatmap, write_report_csv, ReportRow};
use super::synth::{default_facs, procedural_template, synth_fixture, SyntheticSubjectSpec, TemplateSpec};
use crate::dyntex::{
    blendshape_influences, extract_compress_stretch, influence_map, normalize_influences, runtime_blend, InfluenceMap,
    NormalizeOptions, TextureChannel, TexturePack, TextureRole,
};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::personalize::{personalize_detailed, OptimConfig, SubjectScans};
use crate::raster::Raster;
use crate::rig::{apply_offsets, save_rig, BlendshapeRig, OffsetSet};
use crate::solver::{fit_sequence, per_vertex_error, solve_weights};

/// Removes the lock file when dropped.
#[derive(Debug)]
pub struct OutputLock(PathBuf);

impl OutputLock {
    pub const FILE: &'static str = ".facerig.lock";

    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(Self::FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutputLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub seed: u64,
    pub grid: usize,
    pub texture_resolution: usize,
    pub subjects: usize,
    pub warp_amplitude: f64,
    pub weight_noise: f64,
    pub temperature: f64,
    pub optim: OptimConfig,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions {
            seed: 1,
            grid: 16,
            texture_resolution: 128,
            subjects: 2,
            warp_amplitude: 0.04,
            weight_noise: 0.1,
            temperature: 1.0,
            optim: OptimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubjectSummary {
    pub name: String,
    pub template_error: f64,
    pub personalized_error: f64,
    pub swapped_error: Option<f64>,
    pub tuning_trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoSummary {
    pub seed: u64,
    pub shapes: usize,
    pub scans: usize,
    pub subjects: Vec<SubjectSummary>,
    pub clamped_texels: usize,
    #[serde(skip)]
    pub bundle: Option<BundleManifest>,
}

/// Smooth seeded albedo/specular/displacement for the neutral state.
pub fn neutral_textures(resolution: usize, seed: u64) -> Result<TexturePack> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e47_0e5);
    let phases: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let r = resolution as f64;
    let wave = |i: usize, j: usize, k: usize, f: f64| {
        let u = (i as f64 + 0.5) / r;
        let v = (j as f64 + 0.5) / r;
        (f * u * std::f64::consts::TAU + phases[k]).sin() * (f * v * std::f64::consts::TAU + phases[k + 1]).cos()
    };
    let base = [0.62, 0.43, 0.36];
    let albedo = Raster::from_fn(resolution, resolution, 3, |i, j, c| {
        (base[c] * (1.0 + 0.06 * wave(i, j, 0, 3.0))) as f32
    });
    let specular = Raster::from_fn(resolution, resolution, 1, |i, j, _| (0.3 + 0.05 * wave(i, j, 2, 5.0)) as f32);
    let displacement = Raster::from_fn(resolution, resolution, 1, |i, j, _| (0.002 * wave(i, j, 4, 23.0)) as f32);
    TexturePack::new(TextureRole::NeutralStatic, Some(albedo), Some(specular), Some(displacement))
}

/// Expression texture: darker, shinier, furrowed where skin compresses and
/// paler, flatter where it stretches. `scale` maps influence to `[0, 1]`.
pub fn expression_texture(neutral: &TexturePack, map: &InfluenceMap, scale: f32) -> Result<TexturePack> {
    let w = neutral.width();
    let c = |p: usize| (map.compress.data()[p] * scale).min(1.0);
    let s = |p: usize| (map.stretch.data()[p] * scale).min(1.0);
    let ch = |t| neutral.channel(t).expect("demo neutral has every channel");
    let albedo = ch(TextureChannel::Albedo);
    let spec = ch(TextureChannel::Specular);
    let disp = ch(TextureChannel::Displacement);
    let albedo = Raster::from_fn(w, neutral.height(), 3, |i, j, k| {
        let p = j * w + i;
        (albedo.get(i, j, k) * (1.0 - 0.3 * c(p)) * (1.0 + 0.12 * s(p))).min(1.0)
    });
    let specular = Raster::from_fn(w, neutral.height(), 1, |i, j, _| {
        let p = j * w + i;
        (spec.get(i, j, 0) + 0.25 * c(p) - 0.1 * s(p)).clamp(0.0, 1.0)
    });
    let displacement = Raster::from_fn(w, neutral.height(), 1, |i, j, _| {
        let p = j * w + i;
        let furrow = ((j as f32 + 0.5) / neutral.height() as f32 * 60.0).sin();
        disp.get(i, j, 0) + 0.004 * c(p) * furrow - 0.001 * s(p)
    });
    TexturePack::new(TextureRole::Expression, Some(albedo), Some(specular), Some(displacement))
}

fn subject_rig_with_offsets(template: &BlendshapeRig, offsets: &OffsetSet, neutral: &Mesh) -> Result<BlendshapeRig> {
    apply_offsets(template, offsets)?.with_neutral(neutral.clone())
}

fn fit_error(rig: &BlendshapeRig, scan: &Mesh) -> Result<f64> {
    Ok(solve_weights(rig, scan, None)?.residual)
}

/// Runs the whole pipeline into `out_dir`. Identical options produce
/// byte-identical output trees.
pub fn run_demo(out_dir: impl AsRef<Path>, opts: &DemoOptions) -> Result<DemoSummary> {
    let out = out_dir.as_ref();
    let _lock = OutputLock::acquire(out)?;
    let mkdir = |p: PathBuf| fs::create_dir_all(&p).map(|_| p.clone()).map_err(|e| Error::io(&p, e));

    let template = procedural_template(&TemplateSpec {
        grid: opts.grid,
        ..Default::default()
    })?;
    let facs = default_facs(&template)?;
    save_rig(&template, mkdir(out.join("template"))?.join("rig.json"))?;

    // subjects and their personalized rigs
    let mut subjects: Vec<(String, SubjectScans, BlendshapeRig, OffsetSet, Vec<f64>)> = Vec::new();
    for s in 0..opts.subjects {
        let spec = SyntheticSubjectSpec::random(
            opts.seed.wrapping_mul(1000).wrapping_add(s as u64),
            &template,
            4,
            opts.warp_amplitude,
            opts.weight_noise,
        );
        let subject = synth_fixture(&template, &facs, &spec)?;
        let name = format!("s{s}");
        let dir = mkdir(out.join("subjects").join(&name))?;
        save_scans(&subject.scans, &template, dir.join("scans.json"))?;
        let result = personalize_detailed(&template, &subject.scans, &opts.optim)?;
        save_rig(&result.rig, dir.join("rig.json"))?;
        subjects.push((name, subject.scans, result.rig, result.tuning.offsets, result.tuning.trace));
    }

    // reconstruction report: template, own personalized rig, a neighbour's offsets
    let heat_dir = mkdir(out.join("heatmaps"))?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (si, (name, scans, rig, _, trace)) in subjects.iter().enumerate() {
        let template_rig = template.with_neutral(scans.neutral.clone())?;
        let swapped = if subjects.len() > 1 {
            let other = &subjects[(si + 1) % subjects.len()];
            Some(subject_rig_with_offsets(&template, &other.3, &scans.neutral)?)
        } else {
            None
        };
        let first = rows.len();
        for (scan, e) in scans.expressions.iter().zip(scans.facs.expressions()) {
            let t_fit = solve_weights(&template_rig, scan, None)?;
            let p_fit = solve_weights(rig, scan, None)?;
            let t_err = per_vertex_error(&template_rig, &t_fit.weights, scan)?;
            let p_err = per_vertex_error(rig, &p_fit.weights, scan)?;
            let max = t_err.iter().chain(&p_err).fold(0.0f64, |m, v| m.max(*v));
            let stem = format!("{name}_{}", e.name);
            write_heatmap(&error_heatmap(scan, &t_err, opts.texture_resolution)?, max, &heat_dir, &format!("{stem}_template"))?;
            write_heatmap(&error_heatmap(scan, &p_err, opts.texture_resolution)?, max, &heat_dir, &format!("{stem}_personalized"))?;
            rows.push(ReportRow {
                subject: name.clone(),
                scan: e.name.clone(),
                template: t_fit.residual,
                personalized: p_fit.residual,
                swapped: swapped.as_ref().map(|r| fit_error(r, scan)).transpose()?,
            });
        }
        let (t, p, sw) = column_means(&rows[first..]);
        summaries.push(SubjectSummary {
            name: name.clone(),
            template_error: t,
            personalized_error: p,
            swapped_error: sw,
            tuning_trace: trace.clone(),
        });
    }
    write_report_csv(&rows, out.join("report.csv"))?;

    // dynamic textures for the first subject
    let (_, scans, rig, _, _) = &subjects[0];
    let res = opts.texture_resolution;
    let tex_dir = mkdir(out.join("textures"))?;
    let neutral_tex = neutral_textures(res, opts.seed)?;
    let maps: Vec<InfluenceMap> = scans
        .expressions
        .iter()
        .map(|e| influence_map(&scans.neutral, e, res))
        .collect::<Result<_>>()?;
    let peak = maps.iter().map(InfluenceMap::peak).fold(0.0f32, f32::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let expression_tex: Vec<TexturePack> = maps
        .iter()
        .map(|m| expression_texture(&neutral_tex, m, scale))
        .collect::<Result<_>>()?;
    let norm_opts = NormalizeOptions {
        temperature: opts.temperature,
        masked: false,
    };
    let normalized = normalize_influences(&maps, &norm_opts)?;
    let (compress_tex, stretch_tex) = extract_compress_stretch(&expression_tex, &normalized)?;
    save_texture_pack(&neutral_tex, tex_dir.join("neutral.json"))?;
    save_texture_pack(&compress_tex, tex_dir.join("compress.json"))?;
    save_texture_pack(&stretch_tex, tex_dir.join("stretch.json"))?;

    // track the scans with the personalized rig and blend a texture per frame
    let blend_dir = mkdir(out.join("blend"))?;
    let shape_influences = blendshape_influences(rig, res, &norm_opts)?;
    let fits = fit_sequence(rig, &scans.expressions);
    let mut clamped = 0;
    for (k, (fit, e)) in fits.iter().zip(scans.facs.expressions()).enumerate() {
        if let Some(err) = &fit.error {
            log::warn!("frame {k} ({}) failed: {err}", e.name);
            continue;
        }
        save_fit(fit, rig, blend_dir.join(format!("{k:02}_{}_fit.json", e.name)))?;
        if k % 5 == 0 {
            let blended = runtime_blend(&neutral_tex, &compress_tex, &stretch_tex, &shape_influences, &fit.weights)?;
            clamped += blended.clamped.total();
            save_texture_pack(&blended.texture, blend_dir.join(format!("{k:02}_{}.json", e.name)))?;
        }
    }

    let bundle = export_bundle(
        rig,
        Some(&BundleTextures {
            neutral: neutral_tex,
            compress: compress_tex,
            stretch: stretch_tex,
        }),
        Some(&shape_influences),
        mkdir(out.join("bundle"))?,
    )?;

    let summary = DemoSummary {
        seed: opts.seed,
        shapes: template.shape_count(),
        scans: facs.len(),
        subjects: summaries,
        clamped_texels: clamped,
        bundle: Some(bundle),
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    let p = out.join("summary.json");
    fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
    Ok(summary)
}
