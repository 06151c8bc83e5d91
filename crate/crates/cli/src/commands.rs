use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde_json::json;

use syncmatch::alignment::RansacConfig;
use syncmatch::correspondence::{match_gart, match_ratio_test, FeaturePointcloud};
use syncmatch::derive_seed;
use syncmatch::formats::{
    format_intrinsics, format_poses, load_feature_cloud, load_intrinsics, load_poses,
    save_depth_map, save_feature_cloud,
};
use syncmatch::metrics::{
    correspondence_error_values, pose_error_report, sync_benchmark, write_benchmark_csv,
    CorrespondenceErrorReport, MetricsError, NoiseLevel,
};
use syncmatch::pipeline::{register, PipelineConfig, SceneInput};
use syncmatch::synthetic::{
    generate_scene_with, observe_frame, render_frame_depth, CorruptionSpec, Repetition, SceneConfig,
};
use syncmatch::RigidTransform;

use crate::args::{BenchArgs, EvaluateArgs, GenerateArgs, Matcher, RegisterArgs};
use crate::error::CliError;
use crate::manifest::{RunManifest, MANIFEST_FILE};

pub const INTRINSICS_FILE: &str = "intrinsics.txt";
pub const GT_POSES_FILE: &str = "gt_poses.txt";
pub const POSES_FILE: &str = "poses.txt";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const POSE_ERRORS_FILE: &str = "pose_errors.csv";

fn frame_path(dir: &Path, frame: usize, ext: &str) -> PathBuf {
    dir.join(format!("frame_{frame:03}.{ext}"))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(&dir.display().to_string(), e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(&path.display().to_string(), e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports are plain data");
    write_file(path, &(text + "\n"))
}

/// Frames `frame_000.fpcl, frame_001.fpcl, ...` up to the first gap.
fn load_frames(scene: &Path) -> Result<(Vec<PathBuf>, Vec<FeaturePointcloud>), CliError> {
    if !scene.is_dir() {
        return Err(CliError::io(
            &scene.display().to_string(),
            "not a directory",
        ));
    }
    let paths: Vec<PathBuf> = (0..)
        .map(|f| frame_path(scene, f, "fpcl"))
        .take_while(|p| p.is_file())
        .collect();
    let clouds = paths
        .iter()
        .map(|p| load_feature_cloud(p).map_err(|e| CliError::io(&p.display().to_string(), e)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((paths, clouds))
}

fn load_ground_truth(scene: &Path) -> Result<Option<Vec<RigidTransform>>, CliError> {
    let path = scene.join(GT_POSES_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    load_poses(&path)
        .map(Some)
        .map_err(|e| CliError::io(&path.display().to_string(), e))
}

fn check_fraction(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--{name} must lie in [0, 1], got {v}"
        )))
    }
}

pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let mut cfg = SceneConfig::new(args.frames as usize, args.landmarks, args.motion, args.seed);
    cfg.descriptor_dim = args.descriptor_dim;
    if let Some(v) = args.pan_step {
        cfg.pan_step = v;
    }
    if let Some(v) = args.orbit_step_deg {
        cfg.orbit_step_deg = v;
    }
    if let Some(v) = args.corridor_step {
        cfg.corridor_step = v;
    }
    check_fraction("repeat-fraction", args.repeat_fraction)?;
    if args.repeat_fraction > 0.0 {
        let o = &args.repeat_offset;
        if o.len() != 3 {
            return Err(CliError::Usage(format!(
                "--repeat-offset takes x,y,z, got {} values",
                o.len()
            )));
        }
        cfg.repetition = Some(Repetition {
            fraction: args.repeat_fraction,
            offset: Vector3::new(o[0], o[1], o[2]),
        });
    }
    let c = &args.corruption;
    check_fraction("outlier-fraction", c.outlier_fraction)?;
    check_fraction("drop-fraction", c.drop_fraction)?;
    let corruption = CorruptionSpec {
        descriptor_sigma: c.descriptor_sigma,
        outlier_fraction: c.outlier_fraction,
        depth_sigma: c.depth_sigma,
        drop_fraction: c.drop_fraction,
        seed: derive_seed(args.seed, &[1]),
    };
    let mut manifest = RunManifest::new(
        "generate",
        json!({ "scene": cfg, "corruption": corruption }),
        args.seed,
    );
    let scene = manifest.time("generate", || generate_scene_with(&cfg))?;

    let dir = &args.output;
    create_dir(dir)?;
    let outputs = manifest.time("write", || -> Result<Vec<PathBuf>, CliError> {
        let mut outputs = Vec::new();
        for f in 0..scene.n_frames() {
            let cloud = observe_frame(&scene, f, &corruption)?;
            let path = frame_path(dir, f, "fpcl");
            save_feature_cloud(&path, &cloud)?;
            outputs.push(path);
            let path = frame_path(dir, f, "dpth");
            save_depth_map(&path, &render_frame_depth(&scene, f)?)?;
            outputs.push(path);
        }
        for (name, text) in [
            (INTRINSICS_FILE, format_intrinsics(&scene.intrinsics)),
            (GT_POSES_FILE, format_poses(&scene.trajectory)),
        ] {
            write_file(&dir.join(name), &text)?;
            outputs.push(dir.join(name));
        }
        Ok(outputs)
    })?;
    manifest.outputs = outputs;
    manifest.write(&dir.join(MANIFEST_FILE))
}

pub fn register_cmd(args: &RegisterArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig {
        mode: args.mode,
        window: args.window,
        gamma: args.gamma,
        lambda: args.lambda,
        k_keep: args.topk,
        ransac: RansacConfig {
            hypotheses: args.ransac_hypotheses,
            sample_size: args.ransac_sample_size,
            inlier_threshold: args.ransac_threshold,
            seed: args.seed,
        },
        seed: args.seed,
    };
    cfg.validate()?;
    let mut manifest = RunManifest::new("register", json!(cfg), args.seed);
    let (paths, frames) = manifest.time("load", || load_frames(&args.scene))?;
    if frames.len() < 2 {
        return Err(CliError::Usage(format!(
            "{} holds {} frame files, need at least 2",
            args.scene.display(),
            frames.len()
        )));
    }
    let gt = load_ground_truth(&args.scene)?;
    manifest.inputs = paths;
    let out = &args.output;
    create_dir(out)?;

    let input = SceneInput::new(frames);
    let result = manifest.time("register", || register(&input, &cfg));
    let reg = match result {
        Ok(reg) => reg,
        Err(e) => {
            let err = CliError::from(e);
            if let CliError::Numerical { detail, .. } = &err {
                write_json(&out.join(DIAGNOSTICS_FILE), detail)?;
                manifest.outputs.push(out.join(DIAGNOSTICS_FILE));
            }
            manifest.write(&out.join(MANIFEST_FILE))?;
            return Err(err);
        }
    };
    manifest
        .counters
        .insert("pair_evaluations".into(), reg.pair_evaluations as u64);

    let stage_errors = match &gt {
        Some(gt) if gt.len() == input.len() => json!({
            "stage1": pose_error_report(&reg.initial_poses.world_to_camera, gt)?,
            "stage2": pose_error_report(&reg.poses.world_to_camera, gt)?,
        }),
        Some(gt) => {
            return Err(MetricsError::InputMismatch(format!(
                "{} frames vs {} ground-truth poses",
                input.len(),
                gt.len()
            ))
            .into())
        }
        None => serde_json::Value::Null,
    };
    let diagnostics = json!({
        "frames": input.len(),
        "pair_evaluations": reg.pair_evaluations,
        "refined": reg.refined,
        "power_iterations": reg.poses.iterations,
        "pairs": reg.pair_diagnostics,
        "stage_errors": stage_errors,
    });
    manifest.time("write", || -> Result<(), CliError> {
        write_file(
            &out.join(POSES_FILE),
            &format_poses(&reg.poses.world_to_camera),
        )?;
        write_json(&out.join(DIAGNOSTICS_FILE), &diagnostics)
    })?;
    manifest.outputs.push(out.join(POSES_FILE));
    manifest.outputs.push(out.join(DIAGNOSTICS_FILE));
    manifest.write(&out.join(MANIFEST_FILE))
}

pub fn bench_sync(args: &BenchArgs) -> Result<(), CliError> {
    let mut grid = Vec::new();
    if args.zero_row {
        grid.push(NoiseLevel {
            rot_sigma_deg: 0.0,
            trans_sigma_m: 0.0,
        });
    }
    for &rot_sigma_deg in &args.rot_sigmas {
        for &trans_sigma_m in &args.trans_sigmas {
            grid.push(NoiseLevel {
                rot_sigma_deg,
                trans_sigma_m,
            });
        }
    }
    if args.frames.iter().any(|&n| n < 2) {
        return Err(CliError::Usage("--frames values must be at least 2".into()));
    }
    let mut manifest = RunManifest::new(
        "bench-sync",
        json!({ "grid": grid, "frames": args.frames, "trials": args.trials }),
        args.seed,
    );
    let mut rows = Vec::new();
    for &n in &args.frames {
        let stage = format!("n{n}");
        rows.extend(manifest.time(&stage, || {
            sync_benchmark(&grid, n, args.trials, derive_seed(args.seed, &[n as u64]))
        })?);
    }
    let file = fs::File::create(&args.output)
        .map_err(|e| CliError::io(&args.output.display().to_string(), e))?;
    write_benchmark_csv(&rows, file)?;
    manifest.outputs.push(args.output.clone());
    manifest.write(&args.output.with_extension("manifest.json"))
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::new(
        "evaluate",
        json!({ "matcher": format!("{:?}", args.matcher).to_lowercase(), "lambda": args.lambda, "topk": args.topk }),
        args.seed,
    );
    if args.topk == 0 {
        return Err(CliError::Usage("--topk must be positive".into()));
    }
    let (paths, frames) = manifest.time("load", || load_frames(&args.scene))?;
    let gt = load_ground_truth(&args.scene)?
        .ok_or_else(|| CliError::Io(format!("{} has no {GT_POSES_FILE}", args.scene.display())))?;
    let intrinsics_path = args.scene.join(INTRINSICS_FILE);
    let intrinsics = load_intrinsics(&intrinsics_path)
        .map_err(|e| CliError::io(&intrinsics_path.display().to_string(), e))?;
    let estimated =
        load_poses(&args.poses).map_err(|e| CliError::io(&args.poses.display().to_string(), e))?;
    manifest.inputs = paths;
    manifest.inputs.push(args.poses.clone());
    if estimated.len() != gt.len() || frames.len() != gt.len() {
        return Err(MetricsError::InputMismatch(format!(
            "{} estimated poses, {} ground-truth poses, {} frames",
            estimated.len(),
            gt.len(),
            frames.len()
        ))
        .into());
    }

    let pose_report = manifest.time("pose_errors", || pose_error_report(&estimated, &gt))?;
    let values = manifest.time(
        "correspondences",
        || -> Result<Vec<(f64, f64)>, CliError> {
            let mut values = Vec::new();
            for i in 0..frames.len() - 1 {
                let (src, dst) = (&frames[i], &frames[i + 1]);
                let corr = match args.matcher {
                    Matcher::Feature => match_ratio_test(src, dst, args.topk),
                    Matcher::Gart => match_gart(
                        src,
                        dst,
                        &estimated[i],
                        &estimated[i + 1],
                        args.lambda,
                        args.topk,
                    ),
                }
                .map_err(|e| CliError::Usage(format!("matching pair ({i}, {}): {e}", i + 1)))?;
                values.extend(correspondence_error_values(
                    &corr,
                    src,
                    dst,
                    &gt[i],
                    &gt[i + 1],
                    &intrinsics,
                ));
            }
            Ok(values)
        },
    )?;
    let corr_report = CorrespondenceErrorReport::from_values(&values);

    let out = &args.output;
    create_dir(out)?;
    write_json(
        &out.join(EVALUATION_FILE),
        &json!({ "pose": pose_report, "correspondences": corr_report }),
    )?;
    let mut csv = String::from("frame,rotation_error_deg,translation_error_m\n");
    for (k, (r, t)) in pose_report
        .rotation_error_deg
        .iter()
        .zip(&pose_report.translation_error_m)
        .enumerate()
    {
        csv.push_str(&format!("{},{r},{t}\n", k + 1));
    }
    write_file(&out.join(POSE_ERRORS_FILE), &csv)?;
    manifest.outputs.push(out.join(EVALUATION_FILE));
    manifest.outputs.push(out.join(POSE_ERRORS_FILE));
    manifest.write(&out.join(MANIFEST_FILE))
}
