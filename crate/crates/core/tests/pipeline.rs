mod common;

use std::fs;

use common::*;
use facerig::dyntex::{blendshape_influences, NormalizeOptions, TextureChannel, TexturePack, TextureRole};
use facerig::pipeline::bundle::bundle_files;
use facerig::pipeline::report::{column_means, error_heatmap, write_heatmap, CSV_HEADER};
use facerig::pipeline::{
    default_facs, export_bundle, import_bundle, load_scans, load_texture_pack, load_weights, procedural_template,
    report_csv, save_scans, save_texture_pack, save_weights, synth_fixture, BundleTextures, OutputLock, ReportRow,
    SyntheticSubjectSpec, TemplateSpec,
};
use facerig::raster::{load_png, PngEncoding, UvRasterizer};
use facerig::rig::{load_rig, save_rig, synthesize_expression, WeightVector};
use facerig::solver::solve_weights;
use facerig::{BlendshapeRig, Error, Raster};
use rand::Rng;

fn small_template() -> BlendshapeRig {
    procedural_template(&TemplateSpec {
        grid: 10,
        ..Default::default()
    })
    .unwrap()
}

/// Every file below `root`, relative and sorted.
fn walk(root: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

// ---- synthetic subjects ----

#[test]
fn zero_amplitude_subject_is_the_template() {
    let template = small_template();
    let facs = default_facs(&template).unwrap();
    let spec = SyntheticSubjectSpec::random(3, &template, 4, 0.0, 0.0);
    let subject = synth_fixture(&template, &facs, &spec).unwrap();
    assert_eq!(subject.truth.neutral().vertices(), template.neutral().vertices());
    assert_eq!(subject.truth.shapes(), template.shapes());
    for (scan, e) in subject.scans.expressions.iter().zip(facs.expressions()) {
        let expect = synthesize_expression(&template, &e.weights).unwrap();
        assert_eq!(scan.vertices(), expect.vertices());
    }
}

#[test]
fn truth_rig_reconstructs_its_own_scans() {
    let template = small_template();
    let facs = default_facs(&template).unwrap();
    let spec = SyntheticSubjectSpec::random(4, &template, 4, 0.04, 0.1);
    let subject = synth_fixture(&template, &facs, &spec).unwrap();
    for (scan, w) in subject.scans.expressions.iter().zip(&subject.weights) {
        let fit = solve_weights(&subject.truth, scan, None).unwrap();
        assert!(fit.residual < 1e-6, "{}", fit.residual);
        // the scan is exactly the truth rig at the recorded weights
        assert_eq!(scan.vertices(), naive_blend(&subject.truth, w.as_slice()).as_slice());
    }
}

#[test]
fn weight_noise_stays_in_bounds() {
    let template = small_template();
    let facs = default_facs(&template).unwrap();
    let noise = 0.2;
    let subject = synth_fixture(&template, &facs, &SyntheticSubjectSpec::random(5, &template, 2, 0.02, noise)).unwrap();
    for (w, e) in subject.weights.iter().zip(facs.expressions()) {
        let mut stray = 0;
        for (a, b) in w.as_slice().iter().zip(e.weights.as_slice()) {
            if *b == 1.0 {
                assert!(*a > 1.0 - noise && *a <= 1.0);
            } else if *a != 0.0 {
                stray += 1;
                assert!(*a < noise);
            }
        }
        assert!(stray <= 1);
    }
    let bad = SyntheticSubjectSpec::random(5, &template, 2, 0.02, 0.5);
    assert!(matches!(synth_fixture(&template, &facs, &bad), Err(Error::Precondition(_))));
}

#[test]
fn same_seed_gives_identical_files() {
    let template = small_template();
    let facs = default_facs(&template).unwrap();
    let write = |dir: &std::path::Path| {
        let subject = synth_fixture(&template, &facs, &SyntheticSubjectSpec::random(9, &template, 4, 0.04, 0.1)).unwrap();
        save_scans(&subject.scans, &template, dir.join("scans.json")).unwrap();
        save_rig(&subject.truth, dir.join("truth.json")).unwrap();
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write(a.path());
    write(b.path());
    let files = walk(a.path());
    assert!(files.len() > 2);
    for rel in files {
        assert_eq!(fs::read(a.path().join(&rel)).unwrap(), fs::read(b.path().join(&rel)).unwrap(), "{rel:?}");
    }
}

#[test]
fn folding_warp_is_rejected() {
    let template = small_template();
    let facs = default_facs(&template).unwrap();
    let centre = template.neutral().vertices()[45];
    let spec = SyntheticSubjectSpec {
        seed: 1,
        warp_centers: vec![centre],
        warp_radii: vec![0.2],
        warp_amplitudes: vec![[1.5, 1.5, 0.0]],
        weight_noise: 0.0,
    };
    let err = synth_fixture(&template, &facs, &spec).unwrap_err();
    assert!(matches!(err, Error::Amplitude { .. }), "{err}");
}

#[test]
fn scans_round_trip_through_disk() {
    let template = small_template();
    let facs = default_facs(&template).unwrap();
    let subject = synth_fixture(&template, &facs, &SyntheticSubjectSpec::random(6, &template, 3, 0.03, 0.0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scans.json");
    save_scans(&subject.scans, &template, &path).unwrap();
    let back = load_scans(&path, &template, None).unwrap();
    assert_eq!(back.len(), subject.scans.len());
    assert_eq!(back.neutral.vertices(), subject.scans.neutral.vertices());
    for (a, b) in back.expressions.iter().zip(&subject.scans.expressions) {
        assert_eq!(a.vertices(), b.vertices());
    }
    for (a, b) in back.facs.expressions().iter().zip(facs.expressions()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.weights, b.weights);
    }
}

#[test]
fn weights_and_textures_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let w = WeightVector::new(vec![0.0, 0.125, 1.0, 0.3]).unwrap();
    save_weights(&w, dir.path().join("w.json")).unwrap();
    assert_eq!(load_weights(dir.path().join("w.json")).unwrap(), w);

    let mut r = rng(7);
    let albedo = Raster::from_fn(6, 4, 3, |_, _, _| r.random_range(0.0f32..1.0));
    let disp = Raster::from_fn(6, 4, 1, |_, _, _| r.random_range(-0.1f32..0.1));
    let pack = TexturePack::new(TextureRole::Compress, Some(albedo), None, Some(disp)).unwrap();
    save_texture_pack(&pack, dir.path().join("t.json")).unwrap();
    let back = load_texture_pack(dir.path().join("t.json")).unwrap();
    assert_eq!(back.role, TextureRole::Compress);
    assert_eq!(back.channels(), pack.channels());
    for c in pack.channels() {
        assert_eq!(back.channel(c), pack.channel(c));
    }
}

// ---- bundle ----

fn bundle_inputs(res: usize) -> BundleTextures {
    let mut r = rng(8);
    let mut pack = |role| {
        let albedo = Raster::from_fn(res, res, 3, |_, _, _| r.random_range(0.0f32..1.0));
        let spec = Raster::from_fn(res, res, 1, |_, _, _| r.random_range(0.0f32..1.0));
        let disp = Raster::from_fn(res, res, 1, |_, _, _| r.random_range(-0.01f32..0.01));
        TexturePack::new(role, Some(albedo), Some(spec), Some(disp)).unwrap()
    };
    BundleTextures {
        neutral: pack(TextureRole::NeutralStatic),
        compress: pack(TextureRole::Compress),
        stretch: pack(TextureRole::Stretch),
    }
}

#[test]
fn bundle_round_trip_is_exact() {
    let rig = small_template();
    let textures = bundle_inputs(32);
    let infl = blendshape_influences(&rig, 32, &NormalizeOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = export_bundle(&rig, Some(&textures), Some(&infl), dir.path()).unwrap();
    for f in bundle_files(&manifest) {
        assert!(dir.path().join(&f).is_file(), "{f:?}");
    }
    let loaded = import_bundle(dir.path()).unwrap();
    assert_eq!(loaded.manifest, manifest);
    assert_eq!(loaded.rig.shapes(), rig.shapes());
    assert_eq!(loaded.rig.names(), rig.names());
    assert_eq!(loaded.rig.extreme_set(), rig.extreme_set());
    assert_eq!(loaded.rig.neutral().vertices(), rig.neutral().vertices());
    assert_eq!(loaded.rig.neutral().faces(), rig.neutral().faces());
    assert_eq!(loaded.rig.neutral().uvs(), rig.neutral().uvs());
    let t = loaded.textures.unwrap();
    for (a, b) in [(&t.neutral, &textures.neutral), (&t.compress, &textures.compress), (&t.stretch, &textures.stretch)] {
        for c in TextureChannel::ALL {
            assert_eq!(a.channel(c), b.channel(c));
        }
    }
    let li = loaded.influences.unwrap();
    assert_eq!(li.compress, infl.compress);
    assert_eq!(li.stretch, infl.stretch);
    assert_eq!(li.mask, infl.mask);
}

#[test]
fn geometry_only_bundle() {
    let rig = random_rig(6, 6, 3, 12);
    let dir = tempfile::tempdir().unwrap();
    export_bundle(&rig, None, None, dir.path()).unwrap();
    let loaded = import_bundle(dir.path()).unwrap();
    assert!(loaded.textures.is_none() && loaded.influences.is_none());
    assert_eq!(loaded.rig.shapes(), rig.shapes());
}

#[test]
fn tampered_bundle_fails_checksum() {
    let rig = random_rig(6, 6, 3, 13);
    let dir = tempfile::tempdir().unwrap();
    let manifest = export_bundle(&rig, None, None, dir.path()).unwrap();
    let geo = dir.path().join(&manifest.geometry);
    let mut bytes = fs::read(&geo).unwrap();
    bytes[40] ^= 1;
    fs::write(&geo, bytes).unwrap();
    let err = import_bundle(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Checksum { .. }), "{err}");
    assert_eq!(err.exit_code(), 4);
    fs::remove_file(&geo).unwrap();
    assert!(matches!(import_bundle(dir.path()), Err(Error::Io { .. })));
}

#[test]
fn bundle_rejects_mismatched_influences() {
    let rig = random_rig(6, 6, 3, 14);
    let other = random_rig(6, 6, 2, 14);
    let infl = blendshape_influences(&other, 16, &NormalizeOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(export_bundle(&rig, None, Some(&infl), dir.path()).is_err());
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none(), "nothing written on failure");
}

// ---- reports ----

#[test]
fn report_means_and_layout() {
    let rows: Vec<ReportRow> = (0..5)
        .map(|k| ReportRow {
            subject: "s".into(),
            scan: format!("e{k}"),
            template: k as f64,
            personalized: 0.5 * k as f64,
            swapped: Some(2.0 * k as f64),
        })
        .collect();
    let (t, p, s) = column_means(&rows);
    assert_eq!((t, p, s), (2.0, 1.0, Some(4.0)));
    let csv = report_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[3], "s,e2,2,1,4");
    let mut partial = rows.clone();
    partial[1].swapped = None;
    assert_eq!(column_means(&partial).2, None);
    assert!(report_csv(&partial).lines().nth(2).unwrap().ends_with(','));
}

#[test]
fn single_vertex_error_lights_its_footprint() {
    let rig = random_rig(6, 6, 1, 15);
    let mesh = rig.neutral();
    let mut err = vec![0.0; mesh.vertex_count()];
    err[14] = 1.0;
    let heat = error_heatmap(mesh, &err, 40).unwrap();
    let foot = UvRasterizer::new(mesh, 40, 40).unwrap().vertex_footprint(14);
    for (h, f) in heat.data().iter().zip(&foot) {
        assert!((*h as f64 - f).abs() < 1e-6);
        assert_eq!(*h > 0.0, *f > 0.0);
    }
    assert!(foot.iter().any(|f| *f > 0.5));
}

#[test]
fn zero_error_heatmap_is_black() {
    let rig = random_rig(5, 5, 1, 16);
    let heat = error_heatmap(rig.neutral(), &vec![0.0; 25], 16).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_heatmap(&heat, 0.0, dir.path(), "h").unwrap();
    let png = load_png(dir.path().join("h.png"), PngEncoding::Linear).unwrap();
    assert!(png.data().iter().all(|v| *v == 0.0));
    assert!(dir.path().join("h.rfr1").is_file());
}

// ---- output lock ----

#[test]
fn output_lock_is_exclusive_and_released() {
    let dir = tempfile::tempdir().unwrap();
    let lock = OutputLock::acquire(dir.path()).unwrap();
    assert!(dir.path().join(OutputLock::FILE).exists());
    let err = OutputLock::acquire(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Locked(_)), "{err}");
    assert_eq!(err.exit_code(), 4);
    drop(lock);
    assert!(!dir.path().join(OutputLock::FILE).exists());
    OutputLock::acquire(dir.path()).unwrap();
}

#[test]
fn rig_manifest_survives_template_round_trip() {
    let rig = small_template();
    let dir = tempfile::tempdir().unwrap();
    save_rig(&rig, dir.path().join("rig.json")).unwrap();
    let back = load_rig(dir.path().join("rig.json")).unwrap();
    assert_eq!(back.shapes(), rig.shapes());
    assert_eq!(back.extreme_set(), rig.extreme_set());
}
