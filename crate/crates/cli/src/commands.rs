use std::fs;
use std::path::{Path, PathBuf};

use ctflow::eval::{evaluate, psnr, ssim, MomentAccumulator, PosteriorSampler, REPORT_HEADER};
use ctflow::flow::FlowModel;
use ctflow::image_io::write_pgm16;
use ctflow::tomo::{build_dataset, dataset::manifest_path, fbp_reconstruct, read_dataset, read_sinogram, Dataset};
use ctflow::train::{final_checkpoint_path, loss_log_path, train, Precision};
use ctflow::{Error, Geometry, Image, Real, Result};

use crate::config::RunConfig;
use crate::{Cli, Command, EvaluateArgs, FbpArgs, GenDataArgs, ReconstructArgs, TrainArgs};

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::GenData(a) => gen_data(&mut cfg, cli.seed, a),
        Command::Train(a) => train_cmd(&mut cfg, cli.seed, a),
        Command::Reconstruct(a) => reconstruct(&mut cfg, cli.seed, a),
        Command::Evaluate(a) => evaluate_cmd(&mut cfg, cli.seed, a),
        Command::Fbp(a) => fbp_cmd(&mut cfg, a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn gen_data(cfg: &mut RunConfig, seed: Option<u64>, a: GenDataArgs) -> Result<()> {
    if let Some(s) = seed {
        cfg.data.seed = s;
    }
    if let Some(c) = a.count {
        cfg.data.count = c;
    }
    if let Some(f) = a.family {
        cfg.data.family = f.parse()?;
    }
    if let Some(n) = a.photons_low {
        cfg.data.photons_low = n;
    }
    if let Some(n) = a.photons_high {
        cfg.data.photons_high = n;
    }
    if let Some(k) = a.angles {
        cfg.geometry.num_angles = k;
    }
    cfg.validate()?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let header = build_dataset(&cfg.dataset(), &a.out)?;
    cfg.echo(&sibling(&a.out, ".config.toml"))?;
    let g = header.geometry;
    println!(
        "wrote {} pairs to {} ({}x{} images, {} angles x {} detectors, N0 {} / {}); manifest {}",
        header.count,
        a.out.display(),
        g.image_size,
        g.image_size,
        g.num_angles,
        g.num_detectors,
        header.photons_high,
        header.photons_low,
        manifest_path(&a.out).display()
    );
    Ok(())
}

fn train_cmd(cfg: &mut RunConfig, seed: Option<u64>, a: TrainArgs) -> Result<()> {
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(v) = a.steps {
        cfg.train.steps = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.checkpoint_every {
        cfg.train.checkpoint_every = v;
    }
    cfg.validate()?;
    let data = read_dataset(&a.data)?;
    cfg.geometry = data.header.geometry;
    create_dir(&a.out)?;
    cfg.echo(&a.out.join("config.toml"))?;
    let log_every = a.log_every;
    let progress = |r: &ctflow::train::LossRecord| {
        if log_every > 0 && (r.step.is_multiple_of(log_every) || r.step == 1) {
            eprintln!("step {:>6}  nll {:>12.3}  |g| {:>10.3}  {:>8.1}s", r.step, r.nll, r.grad_norm, r.seconds);
        }
    };
    let last = match cfg.train.precision {
        Precision::F32 => train::<f32>(&data, cfg.arch.clone(), &cfg.train, &a.out, progress)?.records.last().copied(),
        Precision::F64 => train::<f64>(&data, cfg.arch.clone(), &cfg.train, &a.out, progress)?.records.last().copied(),
    };
    if let Some(r) = last {
        println!(
            "trained {} steps, final nll {:.3}; checkpoint {}, loss log {}",
            r.step,
            r.nll,
            final_checkpoint_path(&a.out).display(),
            loss_log_path(&a.out).display()
        );
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<(FlowModel<f32>, Option<Geometry>)> {
    let (m, block) = FlowModel::<f32>::load(path)?;
    Ok((m, block.geometry))
}

fn reconstruct(cfg: &mut RunConfig, seed: Option<u64>, a: ReconstructArgs) -> Result<()> {
    if let Some(s) = seed {
        cfg.eval.seed = s;
    }
    if a.n == 0 {
        return Err(Error::Config("--n must be >= 1".into()));
    }
    cfg.validate()?;
    let (model, geometry) = load_model(&a.ckpt)?;
    let (fbp, reference) = match (&a.sinogram, &a.data, a.pair_index) {
        (Some(path), _, _) => {
            let g = geometry.ok_or_else(|| Error::format(&a.ckpt, "checkpoint records no scan geometry"))?;
            (fbp_reconstruct(&read_sinogram(path)?, &g)?, None)
        }
        (None, Some(data), Some(i)) => {
            let mut d = read_dataset(data)?;
            if i >= d.pairs.len() {
                return Err(Error::Config(format!("--pair-index {i} out of range for {} pairs", d.pairs.len())));
            }
            let p = d.pairs.swap_remove(i);
            (p.fbp, Some(p.reference))
        }
        _ => return Err(Error::Config("give either --sinogram or --data with --pair-index".into())),
    };
    if fbp.size() != model.arch.image_size {
        return Err(Error::Dimension(format!(
            "measurement reconstructs to {}x{}, model expects {}",
            fbp.size(),
            fbp.size(),
            model.arch.image_size
        )));
    }
    let mut sampler = PosteriorSampler::new(&model, &fbp, cfg.eval.seed)?;
    let mut acc = MomentAccumulator::new(fbp.size());
    for s in sampler.draw(a.n)? {
        acc.push(&s);
    }
    let (mean, std) = (acc.mean(), acc.std());
    create_dir(&a.out)?;
    cfg.echo(&a.out.join("config.toml"))?;
    write_pgm16(&a.out.join("mean.pgm"), &mean, 0.0, cfg.eval.data_range)?;
    write_pgm16(&a.out.join("std.pgm"), &std, 0.0, cfg.eval.std_range)?;
    write_pgm16(&a.out.join("fbp.pgm"), &fbp, 0.0, cfg.eval.data_range)?;
    let mut summary = format!("n={}\nseed={}\nmean_std={:.6}\n", a.n, cfg.eval.seed, mean_of(&std));
    if let Some(r) = reference {
        let range = cfg.eval.data_range;
        summary.push_str(&format!(
            "psnr={:.4}\nssim={:.5}\nfbp_psnr={:.4}\nfbp_ssim={:.5}\n",
            psnr(&mean, &r, range)?,
            ssim(&mean, &r, range)?,
            psnr(&fbp, &r, range)?,
            ssim(&fbp, &r, range)?
        ));
    }
    write_text(&a.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn mean_of(img: &Image) -> f64 {
    img.data().iter().sum::<f64>() / img.data().len() as f64
}

fn parse_n_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().ok().filter(|&n| n > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Config(format!("--n-list {s:?}: expected comma-separated positive integers")))
}

fn evaluate_cmd(cfg: &mut RunConfig, seed: Option<u64>, a: EvaluateArgs) -> Result<()> {
    if let Some(s) = seed {
        cfg.eval.seed = s;
    }
    if let Some(l) = &a.n_list {
        cfg.eval.n_list = parse_n_list(l)?;
    }
    cfg.validate()?;
    let (model, _) = load_model(&a.ckpt)?;
    let mut data = read_dataset(&a.data)?;
    if let Some(l) = a.limit {
        data.pairs.truncate(l);
    }
    check_dataset(&model, &data, &a.data)?;
    let report = evaluate(&model, &data, &cfg.eval.n_list, cfg.eval.seed, cfg.eval.data_range, |i| {
        eprintln!("evaluated image {}/{}", i + 1, data.pairs.len());
    })?;
    create_dir(&a.out)?;
    cfg.echo(&a.out.join("config.toml"))?;
    write_text(&a.out.join("report.csv"), &report.to_csv())?;
    let table = report.table();
    write_text(&a.out.join("summary.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn check_dataset<T: Real>(model: &FlowModel<T>, data: &Dataset, path: &Path) -> Result<()> {
    let s = data.header.geometry.image_size;
    if s != model.arch.image_size {
        return Err(Error::format(path, format!("images are {s}x{s}, model expects {}", model.arch.image_size)));
    }
    Ok(())
}

fn fbp_cmd(cfg: &mut RunConfig, a: FbpArgs) -> Result<()> {
    cfg.validate()?;
    create_dir(&a.out)?;
    let range = cfg.eval.data_range;
    let mut csv = String::from(REPORT_HEADER);
    csv.push('\n');
    let mut count = 0;
    if let Some(path) = &a.sinogram {
        let img = fbp_reconstruct(&read_sinogram(path)?, &cfg.geometry)?;
        write_pgm16(&a.out.join("fbp_0.pgm"), &img, 0.0, range)?;
        count = 1;
    } else if let Some(path) = &a.data {
        let data = read_dataset(path)?;
        cfg.geometry = data.header.geometry;
        for (i, p) in data.pairs.iter().enumerate() {
            let img = fbp_reconstruct(&p.low_dose_sinogram, &data.header.geometry)?;
            write_pgm16(&a.out.join(format!("fbp_{i}.pgm")), &img, 0.0, range)?;
            csv.push_str(&format!(
                "{i},fbp,0,{:.6},{:.6}\n",
                psnr(&img, &p.reference, range)?,
                ssim(&img, &p.reference, range)?
            ));
        }
        count = data.pairs.len();
        write_text(&a.out.join("metrics.csv"), &csv)?;
    }
    cfg.echo(&a.out.join("config.toml"))?;
    println!("wrote {count} FBP image(s) to {}", a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_list_parsing() {
        assert_eq!(parse_n_list("1,10,100").unwrap(), vec![1, 10, 100]);
        assert_eq!(parse_n_list(" 5 ").unwrap(), vec![5]);
        for bad in ["", "1,,2", "0", "a"] {
            assert!(parse_n_list(bad).unwrap_err().is_config());
        }
    }
}
