//! `factorlens` command-line entry point.
//!
//! Exit codes: 0 success, 2 usage/parameter error, 3 degenerate data,
//! 4 I/O or format error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use factorlens::embed::{self, export_scatter, PointLabels, ScatterOptions};
use factorlens::extract::{self, extract_set};
use factorlens::retrieve::{self, read_metadata_csv, IndexOptions};
use factorlens::stimuli::{self, ImageSize, RectangleRecipe, StimulusRecipe};
use factorlens::{analyze, Error, FeatureSet, Matrix, Result, VERSION};

#[derive(Parser, Debug)]
#[command(
    name = "factorlens",
    version,
    about = "Factor decomposition and PCA analysis of feature sets"
)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "FACTORLENS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic stimulus collection (PNGs + manifest.json).
    Stimuli {
        #[command(subcommand)]
        kind: StimulusKind,
    },
    /// Run an extractor over a stimulus collection and write a .fset file.
    Extract(ExtractArgs),
    /// Decompose a feature set into factor marginals and residual; write the variance report.
    Decompose(DecomposeArgs),
    /// PCA embedding of raw features or of one factor's marginal, as CSV and SVG.
    Embed(EmbedArgs),
    /// Dot-product nearest-neighbour retrieval over PCA-reduced features.
    Retrieve(RetrieveArgs),
    /// Print the header of a .fset file.
    Info { input: PathBuf },
}

#[derive(Args, Debug)]
struct SizeArgs {
    /// Image side in pixels.
    #[arg(long, default_value_t = stimuli::DEFAULT_IMAGE_SIDE)]
    size: u32,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum StimulusKind {
    /// Constant-color images on a steps³ RGB lattice.
    ColorGrid {
        #[arg(long, default_value_t = 11)]
        steps: usize,
        #[command(flatten)]
        io: SizeArgs,
    },
    /// Black rectangle of constant area on white, varying position and aspect ratio.
    Rectangles {
        /// Positions per axis (the grid has positions² levels).
        #[arg(long, default_value_t = 6)]
        positions: usize,
        #[arg(long, default_value_t = 12)]
        aspects: usize,
        /// Rectangle area as a fraction of the image area.
        #[arg(long, default_value_t = 0.26 * 0.26)]
        area: f64,
        #[arg(long, default_value_t = 0.25)]
        aspect_min: f64,
        #[arg(long, default_value_t = 4.0)]
        aspect_max: f64,
        #[command(flatten)]
        io: SizeArgs,
    },
    /// Central square (half the image side) over a background color.
    CenterSurround {
        #[arg(long, default_value_t = 5)]
        fg_steps: usize,
        #[arg(long, default_value_t = 5)]
        bg_steps: usize,
        #[command(flatten)]
        io: SizeArgs,
    },
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Collection manifest.json.
    #[arg(long)]
    manifest: PathBuf,
    /// Extractor id: randconv:<seed>, randconv-unpooled:<seed> or pixels:<side>.
    #[arg(long)]
    extractor: String,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    input: PathBuf,
    /// Report JSON path.
    #[arg(long, short)]
    out: PathBuf,
    /// Explained-variance fraction for intrinsic dimensions.
    #[arg(long, default_value_t = 0.95)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    input: PathBuf,
    /// Embed the centered features themselves.
    #[arg(long, conflicts_with = "factor", required_unless_present = "factor")]
    raw: bool,
    /// Embed the marginal of this factor (name or position).
    #[arg(long)]
    factor: Option<String>,
    /// 1-based component pair to plot.
    #[arg(long, default_value = "1,2", value_parser = parse_pair)]
    dims: (usize, usize),
    /// Components written to the CSV.
    #[arg(long, default_value_t = 10)]
    components: usize,
    /// Factor used for point colors (defaults to the embedded factor, or the first).
    #[arg(long)]
    color_by: Option<String>,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    svg: PathBuf,
}

#[derive(Args, Debug)]
struct RetrieveArgs {
    /// Feature set to index.
    #[arg(long)]
    index: PathBuf,
    /// Index metadata CSV: row,model_id,azimuth_deg,elevation_deg.
    #[arg(long)]
    meta: PathBuf,
    /// Query feature set.
    #[arg(long)]
    query: PathBuf,
    /// Query metadata CSV; enables orientation accuracy.
    #[arg(long)]
    query_meta: Option<PathBuf>,
    #[arg(short, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = retrieve::DEFAULT_TARGET_DIM)]
    target_dim: usize,
    /// L2-normalize reduced vectors (cosine similarity).
    #[arg(long)]
    normalize: bool,
    /// Orientation success threshold in degrees.
    #[arg(long, default_value_t = retrieve::DEFAULT_ORIENTATION_THRESHOLD)]
    threshold: f64,
    /// Results JSON path (stdout if omitted).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or("expected two comma-separated integers")?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Param(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_header(config: Value, body: Value) -> Value {
    let mut out = serde_json::Map::new();
    out.insert("tool_version".into(), json!(VERSION));
    out.insert("config".into(), config);
    if let Value::Object(m) = body {
        out.extend(m);
    }
    Value::Object(out)
}

fn cmd_stimuli(kind: StimulusKind) -> Result<()> {
    let (recipe, out) = match kind {
        StimulusKind::ColorGrid { steps, io } => (
            StimulusRecipe::ColorGrid {
                steps,
                image_size: ImageSize::square(io.size),
            },
            io.out,
        ),
        StimulusKind::Rectangles {
            positions,
            aspects,
            area,
            aspect_min,
            aspect_max,
            io,
        } => (
            StimulusRecipe::Rectangles(RectangleRecipe {
                positions_per_axis: positions,
                n_aspect: aspects,
                area_fraction: area,
                aspect_min,
                aspect_max,
                image_size: ImageSize::square(io.size),
            }),
            io.out,
        ),
        StimulusKind::CenterSurround {
            fg_steps,
            bg_steps,
            io,
        } => (
            StimulusRecipe::CenterSurround {
                fg_steps,
                bg_steps,
                image_size: ImageSize::square(io.size),
            },
            io.out,
        ),
    };
    let set = stimuli::generate(&recipe)?;
    let manifest = stimuli::write_collection(&set, &out)?;
    println!(
        "wrote {} images ({}) to {}",
        manifest.images.len(),
        set.grid
            .factors()
            .iter()
            .map(|f| format!("{}={}", f.name, f.len()))
            .collect::<Vec<_>>()
            .join(" x "),
        out.display()
    );
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> Result<()> {
    let extractor = extract::from_id(&args.extractor)?;
    if !args.manifest.is_file() {
        return Err(Error::Param(format!(
            "manifest {} not found",
            args.manifest.display()
        )));
    }
    let (manifest, images) = stimuli::read_collection(&args.manifest)?;
    let mut set = extract_set(&images, &manifest.grid, extractor.as_ref())?;
    if let Some(r) = &manifest.recipe {
        set.manifest.recipe =
            Some(serde_json::to_value(r).map_err(|e| Error::Param(e.to_string()))?);
    }
    set.manifest
        .extra
        .insert("tool_version".into(), json!(VERSION));
    set.save(&args.out)?;
    println!(
        "wrote {} x {} features ({}) to {}",
        set.n_rows(),
        set.dim(),
        set.layer(),
        args.out.display()
    );
    Ok(())
}

fn cmd_decompose(args: DecomposeArgs) -> Result<()> {
    let set = FeatureSet::load(&args.input)?;
    let (_, report) = analyze(&set, args.threshold)?;
    let config = json!({
        "command": "decompose",
        "input": args.input,
        "pca_threshold": args.threshold,
    });
    let body = serde_json::to_value(&report).map_err(|e| Error::Param(e.to_string()))?;
    write_json(&args.out, &with_header(config, body))?;
    for f in &report.factors {
        println!("{:<16} R = {:.6}", f.name, f.relative_variance);
    }
    println!(
        "{:<16} R = {:.6}",
        "residual", report.residual.relative_variance
    );
    Ok(())
}

fn cmd_embed(args: EmbedArgs) -> Result<()> {
    let set = FeatureSet::load(&args.input)?;
    let grid = set.grid();
    let (data, points) = match &args.factor {
        Some(name) => {
            let k = grid.resolve_factor(name)?;
            let cf = factorlens::center(&set);
            let m = factorlens::marginal(&cf, &grid.factors()[k].name)?;
            let sub = grid.sub_grid(k)?;
            (m, PointLabels::full(&sub))
        }
        None => (
            Matrix::from_f32(set.n_rows(), set.dim(), set.data())?,
            PointLabels::full(grid),
        ),
    };
    if data.rows() < 2 {
        return Err(Error::Param("need at least two points to embed".into()));
    }
    let n_comp = args
        .components
        .max(args.dims.0)
        .max(args.dims.1)
        .min(data.rows().min(data.cols()));
    let model = embed::fit_pca(&data, n_comp)?;
    let color_by = match &args.color_by {
        Some(c) => Some(points.grid.resolve_factor(c)?),
        None => Some(0),
    };
    let embedding = embed::project(&model, &data)?.with_points(points)?;
    let opts = ScatterOptions {
        dims: args.dims,
        color_by,
        title: Some(match &args.factor {
            Some(f) => format!("{} marginal, {}", f, set.layer()),
            None => format!("raw features, {}", set.layer()),
        }),
    };
    let csv = fs::File::create(&args.csv).map_err(|e| Error::io(&args.csv, e))?;
    let svg = fs::File::create(&args.svg).map_err(|e| Error::io(&args.svg, e))?;
    export_scatter(&embedding, &opts, csv, svg)?;
    println!(
        "embedded {} points in {} components (intrinsic dim at 95%: {})",
        embedding.coords.rows(),
        model.n_components(),
        model.intrinsic_dim(0.95)?
    );
    Ok(())
}

fn cmd_retrieve(args: RetrieveArgs) -> Result<()> {
    let index_set = FeatureSet::load(&args.index)?;
    let query_set = FeatureSet::load(&args.query)?;
    if query_set.dim() != index_set.dim() {
        return Err(Error::Shape(format!(
            "query features have dim {}, index has {}",
            query_set.dim(),
            index_set.dim()
        )));
    }
    let meta = read_metadata_csv(&args.meta, index_set.n_rows())?;
    let query_meta = args
        .query_meta
        .as_ref()
        .map(|p| read_metadata_csv(p, query_set.n_rows()))
        .transpose()?;
    let opts = IndexOptions {
        target_dim: args.target_dim,
        normalize: args.normalize,
        require_azimuth: query_meta.is_some(),
    };
    let index = retrieve::build_index(&index_set, meta, &opts)?;

    let mut queries = Vec::with_capacity(query_set.n_rows());
    let mut predicted = Vec::new();
    for r in 0..query_set.n_rows() {
        let q: Vec<f64> = query_set.row(r).iter().map(|&v| f64::from(v)).collect();
        let matches = index.query(&q, args.k)?;
        if let Some(az) = matches[0].meta.azimuth_deg {
            predicted.push(az);
        }
        queries.push(json!({ "query": r, "matches": matches }));
    }
    let mut body = json!({
        "index_rows": index.len(),
        "reduced_dim": index.reduced_dim(),
        "queries": queries,
    });
    if let Some(qm) = &query_meta {
        let truth = qm
            .iter()
            .enumerate()
            .map(|(r, m)| {
                m.azimuth_deg
                    .ok_or_else(|| Error::Meta(format!("query row {r} has no azimuth")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let acc = retrieve::eval_orientation(&predicted, &truth, args.threshold)?;
        body["orientation_accuracy"] = json!(acc);
        eprintln!("orientation accuracy (< {}°): {acc:.4}", args.threshold);
    }
    let config = json!({
        "command": "retrieve",
        "index": args.index,
        "meta": args.meta,
        "query": args.query,
        "query_meta": args.query_meta,
        "k": args.k,
        "target_dim": args.target_dim,
        "normalize": args.normalize,
        "threshold_deg": args.threshold,
    });
    let out = with_header(config, body);
    match &args.out {
        Some(p) => write_json(p, &out)?,
        None => {
            let text =
                serde_json::to_string_pretty(&out).map_err(|e| Error::Param(e.to_string()))?;
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn cmd_info(input: &Path) -> Result<()> {
    let set = FeatureSet::load(input)?;
    let info = json!({
        "layer": set.layer(),
        "rows": set.n_rows(),
        "dim": set.dim(),
        "factors": set.grid().factors().iter().map(|f| json!({"name": f.name, "levels": f.len()})).collect::<Vec<_>>(),
        "manifest": set.manifest,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&info).map_err(|e| Error::Param(e.to_string()))?
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Param("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Param(e.to_string()))?;
    }
    match cli.command {
        Command::Stimuli { kind } => cmd_stimuli(kind),
        Command::Extract(a) => cmd_extract(a),
        Command::Decompose(a) => cmd_decompose(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Retrieve(a) => cmd_retrieve(a),
        Command::Info { input } => cmd_info(&input),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
