use std::path::Path;

use hypgeo::checkpoint::Checkpoint;
use hypgeo::config::RunConfig;
use hypgeo::delta_mapper::{DeltaMapper, GapTransform};
use hypgeo::hierarchy::{self, SamplerConfig};
use hypgeo::hyp_nn::HypModel;
use hypgeo::manifold::PoincarePoint;
use hypgeo::synth_data::{self, HierRecord, TreeSpec};
use hypgeo::training::{self, SuiteOptions, STAGE3_HEADER};
use hypgeo::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::args::*;
use crate::output::{check_output, coord_header, num, with_coords, CsvOut};

pub fn gen_data(a: GenDataArgs) -> Result<u8> {
    check_output(&a.output.out, a.output.force)?;
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::usage(format!("{}: {e}", p.display())))?
        }
        None => TreeSpec::default(),
    };
    if let Some(b) = a.branching {
        spec.branching = b;
    }
    if let Some(d) = a.feat_dim {
        spec.feat_dim = d;
    }
    if let Some(s) = a.level_scales {
        spec.level_scales = s;
    }
    if let Some(n) = a.noise {
        spec.noise = n;
    }
    if let Some(n) = a.samples_per_leaf {
        spec.samples_per_leaf = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let data = synth_data::generate(&spec)?;
    synth_data::save_jsonl(&a.output.out, &data)?;
    eprintln!("wrote {} records to {}", data.len(), a.output.out.display());
    Ok(0)
}

pub fn split(a: SplitArgs) -> Result<u8> {
    check_output(&a.train_out, a.force)?;
    check_output(&a.val_out, a.force)?;
    let data = synth_data::load_jsonl(&a.data)?;
    let (train, val) = synth_data::split(&data, a.train_frac, a.seed)?;
    synth_data::save_jsonl(&a.train_out, &train)?;
    synth_data::save_jsonl(&a.val_out, &val)?;
    eprintln!("{} train / {} val records", train.len(), val.len());
    Ok(0)
}

fn load_split(data: &Path, val: Option<&Path>, cfg: &RunConfig) -> Result<(Vec<HierRecord>, Vec<HierRecord>)> {
    let records = synth_data::load_jsonl(data)?;
    match val {
        Some(v) => Ok((records, synth_data::load_jsonl(v)?)),
        None => synth_data::split(&records, cfg.train_frac, cfg.seed),
    }
}

fn check_feat_dim(model: &HypModel, data: &[HierRecord]) -> Result<()> {
    let want = model.config().feat_dim;
    match data.iter().find(|r| r.feat.len() != want) {
        Some(r) => Err(Error::data(format!(
            "dataset has {}-dimensional features, the checkpoint expects {want}",
            r.feat.len()
        ))),
        None => Ok(()),
    }
}

pub fn train(a: TrainArgs) -> Result<u8> {
    check_output(&a.output.out, a.output.force)?;
    if let Some(m) = &a.metrics {
        check_output(m, a.output.force)?;
    }
    let init = match (a.stage, &a.init) {
        (3, None) => return Err(Error::usage("stage 3 needs --init <stage-2 checkpoint>")),
        (3, Some(p)) => Some(Checkpoint::load(p)?),
        (_, Some(_)) => return Err(Error::usage("--init is only used by stage 3")),
        _ => None,
    };
    let mut cfg = match (&a.config, &init) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(ck)) => ck.config.clone(),
        (None, None) => RunConfig::default(),
    };
    cfg.rec_only |= a.rec_only;
    cfg.naive_euclidean_updates |= a.naive_euclidean_updates;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.steps {
        cfg.stage3_steps = s;
    }
    cfg.validate()?;
    eprintln!("# resolved config\n{}", cfg.to_toml());
    let (train, val) = load_split(&a.data, a.val.as_deref(), &cfg)?;

    let (ckpt, metrics_csv) = match init {
        None => {
            let out = training::train_stage2(&train, &val, &cfg, |r| {
                eprintln!(
                    "step {} lr {:.3e} loss_hyper {:.4} loss_rec {:.4} acc {:.4} spearman {:.4}",
                    r.step, r.lr, r.loss_hyper, r.loss_rec, r.acc, r.spearman_radius_depth
                )
            })?;
            let e = &out.eval;
            eprintln!(
                "held-out: acc {:.4} nll {:.4} rec_rel_err {:.4} spearman {:.4} clamp events {}",
                e.accuracy, e.nll, e.rec_rel_err, e.spearman_radius_depth, out.clamp_events
            );
            let mut csv = Vec::new();
            training::write_metrics(&mut csv, &out.metrics).map_err(|e| Error::data(e.to_string()))?;
            (Checkpoint::stage2(cfg, out.model, Some(out.optimizer)), csv)
        }
        Some(ck) => {
            check_feat_dim(&ck.model, &train)?;
            let out = training::train_stage3(&ck.model, &train, &val, &cfg, |r| {
                eprintln!(
                    "step {} lr {:.3e} loss_delta {:.4} val_cosine {:.4}",
                    r.step, r.lr, r.loss_delta, r.val_cosine
                )
            })?;
            let r = &out.report;
            eprintln!(
                "held-out: cosine {:.4} same-leaf retention {:.4} cross-modal success {:.4}",
                r.mean_cosine, r.same_leaf_retention, r.cross_modal_success
            );
            let mut csv = format!("{STAGE3_HEADER}\n");
            for row in &out.metrics {
                csv.push_str(&row.to_csv());
                csv.push('\n');
            }
            let ck = Checkpoint { config: cfg, ..ck }.with_mapper(out.mapper, Some(out.optimizer));
            (ck, csv.into_bytes())
        }
    };
    ckpt.save(&a.output.out)?;
    if let Some(m) = &a.metrics {
        std::fs::write(m, metrics_csv).map_err(|e| Error::io(m, e))?;
    }
    Ok(0)
}

pub fn embed(a: EmbedArgs) -> Result<u8> {
    check_output(&a.output.out, a.output.force)?;
    let ck = Checkpoint::load(&a.ckpt)?;
    let data = synth_data::load_jsonl(&a.data)?;
    check_feat_dim(&ck.model, &data)?;
    let model = &ck.model;
    let ball = model.ball();
    let depth = data.first().map(|r| r.depth()).unwrap_or(0);
    let mut out = CsvOut::create(
        &a.output.out,
        &coord_header(&["id", "leaf", "depth", "path", "radius"], ball.dim()),
    )?;
    if a.with_ancestors {
        for level in 0..depth {
            for anc in synth_data::ancestor_features(&data, level)? {
                let z = model.embed(&anc.feat)?;
                let path = data
                    .iter()
                    .find(|r| level == 0 || r.path[level - 1] == anc.node)
                    .map(|r| path_string(&r.path[..level]))
                    .unwrap_or_default();
                out.row(&with_coords(
                    vec![
                        format!("a{level}.{}", anc.node),
                        String::new(),
                        level.to_string(),
                        path,
                        num(ball.radius(&z)),
                    ],
                    z.coords(),
                ))?;
            }
        }
    }
    for (i, r) in data.iter().enumerate() {
        let z = model.embed(&r.feat)?;
        out.row(&with_coords(
            vec![
                i.to_string(),
                r.leaf.to_string(),
                r.depth().to_string(),
                path_string(&r.path),
                num(ball.radius(&z)),
            ],
            z.coords(),
        ))?;
    }
    out.finish()?;
    Ok(0)
}

fn path_string(path: &[usize]) -> String {
    path.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("/")
}

/// A record index into `data`, or a comma-separated feature vector.
fn resolve_feature(spec: &str, data: Option<&[HierRecord]>, feat_dim: usize) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if let Ok(i) = spec.parse::<usize>() {
        let data = data.ok_or_else(|| Error::usage(format!("reference {i} is a record index but no --data was given")))?;
        let r = data
            .get(i)
            .ok_or_else(|| Error::usage(format!("record {i} out of range ({} records)", data.len())))?;
        return Ok(r.feat.clone());
    }
    let v = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::usage(format!("bad reference {spec:?}: {e}")))?;
    if v.len() != feat_dim {
        return Err(Error::DimensionMismatch {
            expected: feat_dim,
            got: v.len(),
        });
    }
    Ok(v)
}

struct Loaded {
    ck: Checkpoint,
    data: Option<Vec<HierRecord>>,
}

impl Loaded {
    fn new(ckpt: &Path, data: Option<&Path>) -> Result<Self> {
        let ck = Checkpoint::load(ckpt)?;
        let data = data.map(synth_data::load_jsonl).transpose()?;
        if let Some(d) = &data {
            check_feat_dim(&ck.model, d)?;
        }
        Ok(Loaded { ck, data })
    }

    fn model(&self) -> &HypModel {
        &self.ck.model
    }

    fn feature(&self, spec: &str) -> Result<Vec<f64>> {
        resolve_feature(spec, self.data.as_deref(), self.model().config().feat_dim)
    }

    fn point(&self, spec: &str) -> Result<PoincarePoint> {
        self.model().embed(&self.feature(spec)?)
    }

    /// Writes `t, radius, label, coordinates` rows.
    fn trajectory(&self, path: &Path, rows: &[(f64, PoincarePoint)]) -> Result<()> {
        let ball = self.model().ball();
        let mut out = CsvOut::create(path, &coord_header(&["t", "radius", "label"], ball.dim()))?;
        for (t, z) in rows {
            out.row(&with_coords(
                vec![num(*t), num(ball.radius(z)), self.model().predict(z)?.to_string()],
                z.coords(),
            ))?;
        }
        out.finish()
    }
}

fn linspace(from: f64, to: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::usage("--steps must be at least 2"));
    }
    Ok((0..steps)
        .map(|k| from + (to - from) * k as f64 / (steps - 1) as f64)
        .collect())
}

pub fn sample(a: SampleArgs) -> Result<u8> {
    check_output(&a.output.out, a.output.force)?;
    let l = Loaded::new(&a.ckpt, a.data.as_deref())?;
    let cfg = &l.ck.config;
    let sc = SamplerConfig {
        r_parent: a.r_parent.unwrap_or(cfg.r_parent),
        r_child: a.r_child.unwrap_or(cfg.r_child),
        n: a.n.unwrap_or(cfg.n_samples),
        sigma: a.sigma.unwrap_or(cfg.sigma),
        seed: a.seed.unwrap_or(cfg.seed),
    };
    let model = l.model();
    let ball = model.ball();
    let z_ref = l.point(&a.reference)?;
    let parent = ball.set_radius(&z_ref, sc.r_parent)?;
    let children = hierarchy::sample_children(ball, &z_ref, &sc)?;
    let mut out = CsvOut::create(
        &a.output.out,
        &coord_header(&["i", "label", "dist_to_parent", "radius"], ball.dim()),
    )?;
    for (i, c) in children.iter().enumerate() {
        out.row(&with_coords(
            vec![
                i.to_string(),
                model.predict(c)?.to_string(),
                num(ball.distance(c, &parent)?),
                num(ball.radius(c)),
            ],
            c.coords(),
        ))?;
    }
    out.finish()?;
    Ok(0)
}

pub fn interpolate(a: InterpolateArgs) -> Result<u8> {
    check_output(&a.output.out, a.output.force)?;
    let l = Loaded::new(&a.ckpt, a.data.as_deref())?;
    let ball = l.model().ball();
    let zi = l.point(&a.from)?;
    let zj = l.point(&a.to)?;
    let r = a.radius.unwrap_or_else(|| ball.radius(&zi));
    let rows = hierarchy::interpolation_path(ball, &zi, &zj, r, a.steps)?;
    l.trajectory(&a.output.out, &rows)?;
    Ok(0)
}

pub fn fuse(a: FuseArgs) -> Result<u8> {
    check_output(&a.output.out, a.output.force)?;
    let l = Loaded::new(&a.ckpt, a.data.as_deref())?;
    let ball = l.model().ball();
    let za = l.point(&a.a)?;
    let zb = l.point(&a.b)?;
    let rows = linspace(0.0, 1.0, a.steps)?
        .into_iter()
        .map(|w| hierarchy::fuse(ball, &za, &zb, a.r_level, w).map(|z| (w, z)))
        .collect::<Result<Vec<_>>>()?;
    l.trajectory(&a.output.out, &rows)?;
    Ok(0)
}

pub fn edit(a: EditArgs) -> Result<u8> {
    check_output(&a.output.out, a.output.force)?;
    let l = Loaded::new(&a.ckpt, a.data.as_deref())?;
    let mapper: &DeltaMapper = l.ck.mapper()?;
    let model = l.model();
    let ball = model.ball();
    let cfg = &l.ck.config;
    let src = l.feature(&a.source)?;
    let dst = l.feature(&a.target)?;
    let delta_i: Vec<f64> = if a.text {
        let gap = GapTransform::new(
            src.len(),
            a.gap_eps.unwrap_or(cfg.gap_eps),
            a.gap_tau.unwrap_or(cfg.gap_tau),
            cfg.seed,
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed.unwrap_or(cfg.seed));
        gap.simulate_text_delta(&src, &dst, &mut rng)?
    } else {
        dst.iter().zip(&src).map(|(b, a)| b - a).collect()
    };
    let z = model.embed(&src)?;
    let delta = mapper.predict_delta(ball, &z, &src, &delta_i)?;
    let rows = linspace(0.0, a.strength, a.steps)?
        .into_iter()
        .map(|s| hierarchy::apply_edit_origin(ball, &z, &delta, s).map(|e| (s, e)))
        .collect::<Result<Vec<_>>>()?;
    l.trajectory(&a.output.out, &rows)?;
    Ok(0)
}

pub fn grad_check(a: GradCheckArgs) -> Result<u8> {
    let mut opts = SuiteOptions {
        seed: a.seed,
        ..SuiteOptions::default()
    };
    opts.check.tol = a.tol;
    opts.check.corrupt = a.corrupt_gradient;
    let (model, mapper) = match &a.ckpt {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let mapper = match &ck.mapper {
                Some(m) => m.clone(),
                None => {
                    let mc = ck.config.mapper_config(ck.model.config().feat_dim, ck.model.config().latent_dim);
                    DeltaMapper::init(mc, &mut ChaCha8Rng::seed_from_u64(a.seed))?
                }
            };
            opts.reinit = false;
            opts.draws = a.draws.unwrap_or(2);
            opts.check.max_coords = a.max_coords.unwrap_or(16);
            (ck.model, mapper)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            opts.draws = a.draws.unwrap_or(100);
            opts.check.max_coords = a.max_coords.unwrap_or(0);
            (
                HypModel::init(training::small_model_config(), &mut rng)?,
                DeltaMapper::init(training::small_mapper_config(), &mut rng)?,
            )
        }
    };
    let report = training::gradient_suite(&model, &mapper, &opts)?;
    println!("parameter,max_rel_err,max_abs_err,status");
    for p in &report.params {
        println!(
            "{},{:.3e},{:.3e},{}",
            p.name,
            p.max_rel_err,
            p.max_abs_err,
            if p.passed { "ok" } else { "FAIL" }
        );
    }
    println!(
        "# {} draws, tol {:e}, worst relative error {:.3e}: {}",
        opts.draws,
        a.tol,
        report.max_rel_err(),
        if report.passed() { "PASS" } else { "FAIL" }
    );
    Ok(if report.passed() { 0 } else { 3 })
}
