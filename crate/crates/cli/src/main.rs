use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use facerig::dyntex::{
    blendshape_influences, extract_compress_stretch, influence_map, normalize_influences, runtime_blend,
    split_displacement, InfluenceMap, NormalizeOptions, NormalizedInfluenceSet,
};
use facerig::pipeline::bundle::{export_bundle, BundleTextures};
use facerig::pipeline::demo::{run_demo, DemoOptions, OutputLock};
use facerig::pipeline::io::{load_scans, load_texture_pack, load_weights, save_fit, save_scans, save_texture_pack};
use facerig::pipeline::report::{error_heatmap, write_heatmap, write_report_csv, ReportRow};
use facerig::pipeline::synth::{default_facs, procedural_template, synth_fixture, SyntheticSubjectSpec, TemplateSpec};
use facerig::raster::{save_png, write_rfr1, PngEncoding, Raster};
use facerig::rig::{load_rig, save_rig};
use facerig::solver::{per_vertex_error, solve_weights};
use facerig::{load_mesh, personalize::personalize_detailed, Error, OptimConfig, Result};

#[derive(Parser)]
#[command(name = "facerig", version, about = "Blendshape personalization and dynamic face textures")]
struct Cli {
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize subjects, personalize, track, blend and export a bundle.
    Demo {
        #[arg(long, default_value_t = 16)]
        grid: usize,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[arg(long, default_value_t = 2)]
        subjects: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
    },
    /// Write a procedural template rig and one synthetic subject.
    Synth {
        #[arg(long, default_value_t = 16)]
        grid: usize,
        #[arg(long, default_value_t = 4)]
        warps: usize,
        #[arg(long, default_value_t = 0.04)]
        amplitude: f64,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
    },
    /// Fit a subject-specific rig to a neutral and FACS scans.
    Personalize {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        neutral: Option<PathBuf>,
        #[arg(long)]
        scans: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        optim: OptimArgs,
    },
    /// Fit blendshape weights to one target mesh.
    Solve {
        #[arg(long)]
        rig: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compress/stretch influence maps, either of expression meshes against a
    /// neutral or, with --rig, normalized per blendshape.
    Influence {
        #[arg(long, conflicts_with_all = ["neutral", "expression"])]
        rig: Option<PathBuf>,
        #[arg(long, required_unless_present = "rig")]
        neutral: Option<PathBuf>,
        #[arg(long, required_unless_present = "rig")]
        expression: Vec<PathBuf>,
        #[command(flatten)]
        tex: TexArgs,
    },
    /// Extract compress and stretch textures from expression textures.
    Extract {
        #[arg(long)]
        neutral: PathBuf,
        /// Expression meshes, paired in order with --texture.
        #[arg(long, required = true)]
        expression: Vec<PathBuf>,
        #[arg(long, required = true)]
        texture: Vec<PathBuf>,
        #[command(flatten)]
        tex: TexArgs,
    },
    /// Blend a dynamic texture for a weight vector.
    Blend {
        #[arg(long)]
        rig: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        neutral_texture: PathBuf,
        #[arg(long)]
        compress: PathBuf,
        #[arg(long)]
        stretch: PathBuf,
        #[command(flatten)]
        tex: TexArgs,
    },
    /// Package a rig, textures and influence maps for the viewer.
    ExportBundle {
        #[arg(long)]
        rig: PathBuf,
        #[arg(long, requires_all = ["compress", "stretch"])]
        neutral_texture: Option<PathBuf>,
        #[arg(long)]
        compress: Option<PathBuf>,
        #[arg(long)]
        stretch: Option<PathBuf>,
        #[command(flatten)]
        tex: TexArgs,
    },
    /// Reconstruction error table and heatmaps for a set of scans.
    Report {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        rig: PathBuf,
        /// Another subject's personalized rig; its offsets are applied on
        /// this subject's neutral.
        #[arg(long)]
        swap_rig: Option<PathBuf>,
        #[arg(long)]
        scans: PathBuf,
        #[arg(long, default_value = "subject")]
        subject: String,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
    },
}

#[derive(Args)]
struct OptimArgs {
    #[arg(long, default_value_t = 1.0)]
    omega_reg: f64,
    #[arg(long, default_value_t = 0.1)]
    omega_reg_ft: f64,
    #[arg(long)]
    two_branch: bool,
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
}

#[derive(Args)]
struct TexArgs {
    #[arg(long, default_value_t = 1024)]
    resolution: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Gaussian sigma (pixels) for splitting output displacement into bands.
    #[arg(long)]
    sigma: Option<f64>,
}

impl TexArgs {
    fn normalize(&self) -> NormalizeOptions {
        NormalizeOptions {
            temperature: self.temperature,
            ..Default::default()
        }
    }
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn write_influence_set(set: &NormalizedInfluenceSet, names: &[String], dir: &Path) -> Result<()> {
    for (i, (c, s)) in set.compress.iter().zip(&set.stretch).enumerate() {
        let rgb = Raster::stack(&[c, s, &Raster::zeros(c.width(), c.height(), 1)])?;
        let stem = format!("{i:03}_{}", names[i]);
        write_rfr1(&rgb, dir.join(format!("{stem}.rfr1")))?;
        save_png(&rgb, dir.join(format!("{stem}.png")), PngEncoding::Linear, false, 1.0)?;
    }
    Ok(())
}

fn write_split(pack: &facerig::dyntex::TexturePack, sigma: Option<f64>, dir: &Path, stem: &str) -> Result<()> {
    let (Some(sigma), Some(d)) = (sigma, pack.channel(facerig::dyntex::TextureChannel::Displacement)) else {
        return Ok(());
    };
    let bands = split_displacement(d, sigma)?;
    write_rfr1(&bands.low_raster(), dir.join(format!("{stem}_displacement_low.rfr1")))?;
    write_rfr1(&bands.high_raster(), dir.join(format!("{stem}_displacement_high.rfr1")))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out_dir.as_path();
    if let Command::Demo {
        grid,
        resolution,
        subjects,
        temperature,
    } = cli.command
    {
        let summary = run_demo(
            out,
            &DemoOptions {
                seed: cli.seed,
                grid,
                texture_resolution: resolution,
                subjects,
                temperature,
                ..Default::default()
            },
        )?;
        for s in &summary.subjects {
            println!(
                "{}: template {:.6} personalized {:.6} swapped {}",
                s.name,
                s.template_error,
                s.personalized_error,
                s.swapped_error.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into())
            );
        }
        println!("wrote {}", out.display());
        return Ok(());
    }
    let _lock = OutputLock::acquire(out)?;
    match cli.command {
        Command::Demo { .. } => unreachable!(),
        Command::Synth {
            grid,
            warps,
            amplitude,
            noise,
        } => {
            let template = procedural_template(&TemplateSpec {
                grid,
                ..Default::default()
            })?;
            let facs = default_facs(&template)?;
            let spec = SyntheticSubjectSpec::random(cli.seed, &template, warps, amplitude, noise);
            let subject = synth_fixture(&template, &facs, &spec)?;
            for d in ["template", "subject", "truth"] {
                mkdir(&out.join(d))?;
            }
            save_rig(&template, out.join("template/rig.json"))?;
            save_scans(&subject.scans, &template, out.join("subject/scans.json"))?;
            save_rig(&subject.truth, out.join("truth/rig.json"))?;
            println!("{} scans, {} shapes", subject.scans.len(), template.shape_count());
        }
        Command::Personalize {
            template,
            neutral,
            scans,
            out: target,
            optim,
        } => {
            let template = load_rig(&template)?;
            let scans = load_scans(&scans, &template, neutral.as_deref())?;
            let cfg = OptimConfig {
                omega_reg: optim.omega_reg,
                omega_reg_ft: optim.omega_reg_ft,
                two_branch: optim.two_branch,
                alternation_rounds: optim.rounds,
                max_iters: optim.max_iters,
                ..Default::default()
            };
            let result = personalize_detailed(&template, &scans, &cfg)?;
            if !result.estimation.underconstrained.is_empty() {
                log::warn!("shapes without scan coverage: {:?}", result.estimation.underconstrained);
            }
            save_rig(&result.rig, &target)?;
            println!(
                "estimation {:.6e} -> {:.6e}; tuning trace {:?}",
                result.estimation.initial_objective, result.estimation.objective, result.tuning.trace
            );
        }
        Command::Solve {
            rig,
            target,
            init,
            out: dest,
        } => {
            let rig = load_rig(&rig)?;
            let target = load_mesh(&target)?;
            let init = init.map(load_weights).transpose()?;
            let fit = solve_weights(&rig, &target, init.as_ref())?;
            if !fit.converged {
                log::warn!("solver stopped after {} iterations without converging", fit.iterations);
            }
            save_fit(&fit, &rig, &dest)?;
            println!("residual {}", fit.residual);
        }
        Command::Influence {
            rig,
            neutral,
            expression,
            tex,
        } => {
            if let Some(rig) = rig {
                let rig = load_rig(&rig)?;
                let set = blendshape_influences(&rig, tex.resolution, &tex.normalize())?;
                write_influence_set(&set, rig.names(), out)?;
            } else {
                let neutral = load_mesh(neutral.as_ref().expect("clap enforces --neutral"))?;
                for path in &expression {
                    let map = influence_map(&neutral, &load_mesh(path)?, tex.resolution)?;
                    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
                    let rgb = map.to_rgb();
                    write_rfr1(&rgb, out.join(format!("{stem}_influence.rfr1")))?;
                    let peak = map.peak();
                    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
                    save_png(&rgb, out.join(format!("{stem}_influence.png")), PngEncoding::Linear, false, scale)?;
                }
            }
        }
        Command::Extract {
            neutral,
            expression,
            texture,
            tex,
        } => {
            if expression.len() != texture.len() {
                return Err(Error::Precondition(format!(
                    "{} expression meshes but {} textures",
                    expression.len(),
                    texture.len()
                )));
            }
            let neutral = load_mesh(&neutral)?;
            let textures = texture.iter().map(load_texture_pack).collect::<Result<Vec<_>>>()?;
            let res = textures.first().map(|t| t.width()).unwrap_or(tex.resolution);
            let maps = expression
                .iter()
                .map(|p| influence_map(&neutral, &load_mesh(p)?, res))
                .collect::<Result<Vec<InfluenceMap>>>()?;
            let normalized = normalize_influences(&maps, &tex.normalize())?;
            let (compress, stretch) = extract_compress_stretch(&textures, &normalized)?;
            save_texture_pack(&compress, out.join("compress.json"))?;
            save_texture_pack(&stretch, out.join("stretch.json"))?;
            write_split(&compress, tex.sigma, out, "compress")?;
            write_split(&stretch, tex.sigma, out, "stretch")?;
        }
        Command::Blend {
            rig,
            weights,
            neutral_texture,
            compress,
            stretch,
            tex,
        } => {
            let rig = load_rig(&rig)?;
            let weights = load_weights(&weights)?;
            let neutral = load_texture_pack(&neutral_texture)?;
            let influences = blendshape_influences(&rig, neutral.width(), &tex.normalize())?;
            let out_tex = runtime_blend(
                &neutral,
                &load_texture_pack(&compress)?,
                &load_texture_pack(&stretch)?,
                &influences,
                &weights,
            )?;
            if out_tex.clamped.total() > 0 {
                log::warn!("clamped texels: {:?}", out_tex.clamped.0);
            }
            save_texture_pack(&out_tex.texture, out.join("blend.json"))?;
            write_split(&out_tex.texture, tex.sigma, out, "blend")?;
        }
        Command::ExportBundle {
            rig,
            neutral_texture,
            compress,
            stretch,
            tex,
        } => {
            let rig = load_rig(&rig)?;
            let textures = match (neutral_texture, compress, stretch) {
                (Some(n), Some(c), Some(s)) => Some(BundleTextures {
                    neutral: load_texture_pack(&n)?,
                    compress: load_texture_pack(&c)?,
                    stretch: load_texture_pack(&s)?,
                }),
                _ => None,
            };
            let res = textures.as_ref().map(|t| t.neutral.width()).unwrap_or(tex.resolution);
            let influences = blendshape_influences(&rig, res, &tex.normalize())?;
            let manifest = export_bundle(&rig, textures.as_ref(), Some(&influences), out)?;
            println!("{} files", manifest.files.len());
        }
        Command::Report {
            template,
            rig,
            swap_rig,
            scans,
            subject,
            resolution,
        } => {
            let template = load_rig(&template)?;
            let rig = load_rig(&rig)?;
            let scans = load_scans(&scans, &template, None)?;
            let template_rig = template.with_neutral(scans.neutral.clone())?;
            let swapped = match swap_rig {
                Some(p) => {
                    let other = load_rig(&p)?;
                    let offsets = facerig::rig::offsets_between(&template, &other)?;
                    Some(facerig::apply_offsets(&template, &offsets)?.with_neutral(scans.neutral.clone())?)
                }
                None => None,
            };
            let heat = out.join("heatmaps");
            mkdir(&heat)?;
            let mut rows = Vec::new();
            for (scan, e) in scans.expressions.iter().zip(scans.facs.expressions()) {
                let t = solve_weights(&template_rig, scan, None)?;
                let p = solve_weights(&rig, scan, None)?;
                let te = per_vertex_error(&template_rig, &t.weights, scan)?;
                let pe = per_vertex_error(&rig, &p.weights, scan)?;
                let max = te.iter().chain(&pe).fold(0.0f64, |m, v| m.max(*v));
                let stem = format!("{subject}_{}", e.name);
                write_heatmap(&error_heatmap(scan, &te, resolution)?, max, &heat, &format!("{stem}_template"))?;
                write_heatmap(&error_heatmap(scan, &pe, resolution)?, max, &heat, &format!("{stem}_personalized"))?;
                rows.push(ReportRow {
                    subject: subject.clone(),
                    scan: e.name.clone(),
                    template: t.residual,
                    personalized: p.residual,
                    swapped: swapped.as_ref().map(|r| solve_weights(r, scan, None).map(|f| f.residual)).transpose()?,
                });
            }
            write_report_csv(&rows, out.join("report.csv"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
