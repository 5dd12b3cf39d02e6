use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use longdpm::chunker::slice_overlap;
use longdpm::fusion::{fuse_stream, Ablation};
use longdpm::io::{
    self, chunk_dir_name, read_chunk_stream, read_container, write_chunk, write_container, FusionRecord, GaugeRecord,
    GaugeSidecar,
};
use longdpm::metrics::{evaluate, Evaluation, MetricSet};
use longdpm::model::Chunk;
use longdpm::registration::select_anchors;
use longdpm::synthetic::{chunk_stream, generate, SceneSpec};
use longdpm::{Error, PipelineConfig, Result};

#[derive(Parser)]
#[command(name = "longdpm", version, about = "Fuse chunked 4D reconstructions into one long sequence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene: ground truth, chunk stream and gauge sidecar.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        /// Chunk length and overlap are taken from this config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fuse a directory of chunk containers.
    Fuse {
        #[arg(long)]
        chunks: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "full")]
        ablation: Ablation,
    },
    /// Score fused output against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value = "epe,ate,rpe,assoc")]
        metrics: String,
        #[arg(long, default_value_t = 1)]
        rpe_delta: usize,
    },
    /// Per-chunk frames and per-pair anchor counts.
    Inspect {
        #[arg(long)]
        chunks: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn run_generate(spec: &Path, out: &Path, seed: Option<u64>, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let mut spec = SceneSpec::load(spec)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let gt = generate(&spec)?;
    write_container(&gt.as_chunk(), Some(&gt.object_ids), &out.join("gt"))?;
    let chunks_dir = out.join("chunks");
    let mut gauges = Vec::new();
    for emission in chunk_stream(&gt, &cfg, &spec)? {
        let e = emission?;
        write_chunk(&e.chunk, &chunks_dir.join(chunk_dir_name(e.chunk.chunk_id())))?;
        gauges.push(GaugeRecord::new(e.chunk.chunk_id(), &e.gauge));
    }
    let n = gauges.len();
    write_text(&out.join("gauges.json"), &GaugeSidecar { gauges }.to_json())?;
    println!("generated {} frames in {n} chunks under {}", gt.num_frames(), out.display());
    Ok(())
}

fn run_fuse(chunks: &Path, config: &Path, out: &Path, ablation: Ablation) -> Result<()> {
    let cfg = PipelineConfig::load(config)?;
    let mut frames = Vec::new();
    let summary = fuse_stream(read_chunk_stream(chunks)?, &cfg, ablation, |f| {
        frames.push(f);
        Ok(())
    })?;
    let fused = Chunk::new(0, frames)?;
    write_chunk(&fused, out)?;
    write_text(&out.join("trajectories.txt"), &io::format_trajectories(&summary.trajectories))?;
    let name = match ablation {
        Ablation::Base => "base",
        Ablation::Overlap => "overlap",
        Ablation::Full => "full",
    };
    write_text(&out.join("report.json"), &FusionRecord::new(&summary, name).to_json())?;
    for p in &summary.pairs {
        println!(
            "pair {}-{}: {:?}, {} anchors, {} dynamic, {} matches",
            p.chunk_i, p.chunk_j, p.tier, p.static_anchors, p.dynamic_supports, p.matches
        );
    }
    println!("fused {} frames, {} trajectories", fused.len(), summary.trajectories.len());
    Ok(())
}

fn run_evaluate(pred: &Path, gt: &Path, metrics: &str, rpe_delta: usize) -> Result<()> {
    let which = MetricSet::parse(metrics)?;
    let pred_c = read_container(pred)?;
    let gt_c = read_container(gt)?;
    let record_path = pred.join("report.json");
    let matches = if which.assoc {
        let text = fs::read_to_string(&record_path)
            .map_err(|e| Error::MalformedContainer(format!("{}: {e}", record_path.display())))?;
        FusionRecord::parse(&text)?.matches
    } else {
        Vec::new()
    };
    if which.assoc && gt_c.object_ids.is_none() {
        return Err(Error::KeyMismatch("ground truth has no object_ids array".into()));
    }
    let ev = Evaluation {
        pred_frames: pred_c.chunk.frames(),
        matches: &matches,
        gt_frames: gt_c.chunk.frames(),
        object_ids: gt_c.object_ids.as_deref(),
        align_epe: true,
        rpe_delta,
    };
    let report = evaluate(&ev, which)?;
    println!("{}", report.to_json());
    print!("{}", report.table());
    Ok(())
}

fn run_inspect(chunks: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let mut prev: Option<Chunk> = None;
    for chunk in read_chunk_stream(chunks)? {
        let chunk = chunk?;
        println!(
            "chunk {}: frames {}..={} ({}), {}x{}",
            chunk.chunk_id(),
            chunk.start_frame(),
            chunk.end_frame(),
            chunk.len(),
            chunk.height(),
            chunk.width()
        );
        if let Some(p) = &prev {
            let view = slice_overlap(p, &chunk)?;
            let a = select_anchors(&view, &cfg)?;
            println!(
                "  overlap {}-{}: {} frames, {} static anchors, {} dynamic supports",
                p.chunk_id(),
                chunk.chunk_id(),
                view.len(),
                a.static_anchors.len(),
                a.dynamic_supports.len()
            );
        }
        prev = Some(chunk);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { spec, out, seed, config } => run_generate(spec, out, *seed, config.as_deref()),
        Command::Fuse { chunks, config, out, ablation } => run_fuse(chunks, config, out, *ablation),
        Command::Evaluate { pred, gt, metrics, rpe_delta } => run_evaluate(pred, gt, metrics, *rpe_delta),
        Command::Inspect { chunks, config } => run_inspect(chunks, config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(io::exit_code(&e) as u8)
        }
    }
}
