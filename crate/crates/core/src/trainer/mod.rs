//! Bidirectional adversarial training: state, one optimisation step and
//! checkpoint (de)serialisation. The outer loop lives in [`run`].

pub mod run;

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tch::{Kind, Tensor};

use gnr_formats::{Checkpoint, RunConfig, TrainConfig};

use crate::data::{make_batch, sample_real_batch, stack_images, AugmentedBatch, DomainDataset, ImageTensor};
use crate::error::{Error, Result};
use crate::losses::{
    adv_d_loss, adv_g_loss, cycle_pass, cycle_terms, derangement, mode_seeking_tensor, r1_from_logits,
    style_consistency, total_loss, LossReport, LossWeights, PyramidDistance,
};
use crate::nets::{styles_to_tensor, Discriminator, Generator, NetConfig, StyleCode};
use crate::optim::Adam;

pub use run::{checkpoint_path, run_training, sample_grid, RunOptions, TrainOutcome, FINAL_CHECKPOINT, LOG_FILE};

pub const CHECKPOINT_KIND: &str = "gnr-train-state";
const RNG_STREAM_TRAIN: u64 = 1;
const RUNNING_DECAY: f64 = 0.99;

/// Exponential moving averages of every [`LossReport`] field.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningLoss {
    pub values: [f64; 8],
    pub count: u64,
}

impl RunningLoss {
    pub fn update(&mut self, report: &LossReport) {
        let v = report.values();
        for (acc, x) in self.values.iter_mut().zip(v) {
            *acc = if self.count == 0 {
                x
            } else {
                RUNNING_DECAY * *acc + (1.0 - RUNNING_DECAY) * x
            };
        }
        self.count += 1;
    }

    fn encode(&self) -> String {
        let mut parts = vec![self.count.to_string()];
        parts.extend(self.values.iter().map(|v| format!("{:016x}", v.to_bits())));
        parts.join(",")
    }

    fn decode(s: &str) -> Result<Self> {
        let bad = || Error::Checkpoint(format!("malformed running averages {s:?}"));
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 9 {
            return Err(bad());
        }
        let count = parts[0].parse().map_err(|_| bad())?;
        let mut values = [0.0; 8];
        for (v, p) in values.iter_mut().zip(&parts[1..]) {
            *v = f64::from_bits(u64::from_str_radix(p, 16).map_err(|_| bad())?);
        }
        Ok(Self { values, count })
    }
}

/// Inputs to one step: single-image augmented batches that feed the
/// generators, and fair samples of each real domain for the discriminators.
#[derive(Debug, Clone)]
pub struct StepBatches {
    pub x: AugmentedBatch,
    pub y: AugmentedBatch,
    pub real_x: Vec<ImageTensor>,
    pub real_y: Vec<ImageTensor>,
}

/// Everything needed to continue training bit-exactly.
#[derive(Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    pub iteration: u64,
    /// Domain X -> Y.
    pub gen_xy: Generator,
    /// Domain Y -> X.
    pub gen_yx: Generator,
    /// Judges domain X (real X vs outputs of `gen_yx`).
    pub disc_x: Discriminator,
    /// Judges domain Y (real Y vs outputs of `gen_xy`).
    pub disc_y: Discriminator,
    opt_gen_xy: Adam,
    opt_gen_yx: Adam,
    opt_disc_x: Adam,
    opt_disc_y: Adam,
    pub rng: ChaCha8Rng,
    pub running: RunningLoss,
}

fn sample_styles(rng: &mut ChaCha8Rng, n: usize) -> Vec<StyleCode> {
    (0..n).map(|_| StyleCode::sample(rng)).collect()
}

fn scalar(t: &Tensor) -> f64 {
    t.double_value(&[])
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let net = NetConfig::from_train(&config);
        let mut init = ChaCha8Rng::seed_from_u64(config.seed);
        let kind = Kind::Float;
        let gen_xy = Generator::new(&net, kind, &mut init)?;
        let gen_yx = Generator::new(&net, kind, &mut init)?;
        let branch = !config.no_stddev_branch;
        let disc_x = Discriminator::new(&net, branch, kind, &mut init)?;
        let disc_y = Discriminator::new(&net, branch, kind, &mut init)?;
        let adam = |store| Adam::new(store, config.learning_rate, config.adam_beta1, config.adam_beta2);
        let opt_gen_xy = adam(&gen_xy.params);
        let opt_gen_yx = adam(&gen_yx.params);
        let opt_disc_x = adam(&disc_x.params);
        let opt_disc_y = adam(&disc_y.params);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(RNG_STREAM_TRAIN);
        Ok(Self {
            config,
            iteration: 0,
            gen_xy,
            gen_yx,
            disc_x,
            disc_y,
            opt_gen_xy,
            opt_gen_yx,
            opt_disc_x,
            opt_disc_y,
            rng,
            running: RunningLoss::default(),
        })
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig::from_train(&self.config)
    }

    /// Draws the batches for the next iteration. Generator inputs cycle
    /// through a per-epoch shuffle of each dataset; augmentations and the
    /// real samples come from the state's generator.
    pub fn sample_batches(&mut self, data_x: &DomainDataset, data_y: &DomainDataset) -> Result<StepBatches> {
        let b = self.config.batch_size;
        let pick = |ds: &DomainDataset, salt: u64, it: u64| -> Result<usize> {
            if ds.is_empty() {
                return Err(Error::invalid(format!("{:?} training set is empty", ds.domain)));
            }
            let n = ds.len() as u64;
            let order = ds.epoch_order(self.config.seed ^ salt, it / n);
            Ok(order[(it % n) as usize])
        };
        let ix = pick(data_x, 0x5851, self.iteration)?;
        let iy = pick(data_y, 0xa3b1, self.iteration)?;
        let x = make_batch(data_x, ix, b, &mut self.rng)?;
        let y = make_batch(data_y, iy, b, &mut self.rng)?;
        let real_x = sample_real_batch(data_x, b, &mut self.rng)?;
        let real_y = sample_real_batch(data_y, b, &mut self.rng)?;
        Ok(StepBatches { x, y, real_x, real_y })
    }

    fn check_batches(&self, batches: &StepBatches) -> Result<()> {
        let b = self.config.batch_size;
        let sizes = [batches.x.len(), batches.y.len(), batches.real_x.len(), batches.real_y.len()];
        if sizes.iter().any(|&s| s != b) {
            return Err(Error::Shape(format!("batch sizes {sizes:?} do not match configured {b}")));
        }
        Ok(())
    }

    /// One discriminator update followed by one generator update, both
    /// directions. Returns the step's losses.
    pub fn train_step(&mut self, batches: &StepBatches) -> Result<LossReport> {
        self.check_batches(batches)?;
        let mut report = LossReport::default();
        self.discriminator_step(batches, &mut report)?;
        self.generator_step(batches, &mut report)?;
        self.iteration += 1;
        self.running.update(&report);
        Ok(report)
    }

    /// Updates both discriminators on detached translations; fills `adv_d`
    /// and `r1`. Generator parameters are not touched.
    pub fn discriminator_step(&mut self, batches: &StepBatches, report: &mut LossReport) -> Result<()> {
        self.check_batches(batches)?;
        let kind = self.gen_xy.kind();
        let b = self.config.batch_size;
        let x = batches.x.to_tensor(kind)?;
        let y = batches.y.to_tensor(kind)?;
        let real_x = stack_images(&batches.real_x, kind)?;
        let real_y = stack_images(&batches.real_y, kind)?;
        let z_xy = styles_to_tensor(&sample_styles(&mut self.rng, b), kind);
        let z_yx = styles_to_tensor(&sample_styles(&mut self.rng, b), kind);
        let (fake_y, fake_x) = tch::no_grad(|| -> Result<_> {
            Ok((
                self.gen_xy.translate_tensor(&x, &z_xy)?,
                self.gen_yx.translate_tensor(&y, &z_yx)?,
            ))
        })?;
        self.disc_x.params.set_requires_grad(true);
        self.disc_y.params.set_requires_grad(true);
        let gamma = self.config.r1_gamma;
        let mut terms = Vec::with_capacity(2);
        for (disc, real, fake) in [(&self.disc_y, &real_y, &fake_y), (&self.disc_x, &real_x, &fake_x)] {
            let real = real.detach().set_requires_grad(true);
            let real_out = disc.forward(&real)?;
            let fake_out = disc.forward(fake)?;
            let adv = adv_d_loss(&real_out, &fake_out)?;
            let r1 = r1_from_logits(&real_out.sample_logits, &real, gamma)?;
            terms.push((adv, r1));
        }
        report.adv_d = terms.iter().map(|(a, _)| scalar(a)).sum::<f64>() / 2.0;
        report.r1 = terms.iter().map(|(_, r)| scalar(r)).sum::<f64>() / 2.0;
        for (field, v) in [("adv_d", report.adv_d), ("r1", report.r1)] {
            if !v.is_finite() {
                return Err(self.diverged(field, report));
            }
        }
        let loss = terms
            .into_iter()
            .map(|(a, r)| a + r)
            .reduce(|a, b| a + b)
            .expect("two directions");
        loss.backward();
        self.opt_disc_x.step(&mut self.disc_x.params)?;
        self.opt_disc_y.step(&mut self.disc_y.params)?;
        Ok(())
    }

    /// Updates both generators against frozen discriminators; fills the
    /// generator-side fields and `total`.
    pub fn generator_step(&mut self, batches: &StepBatches, report: &mut LossReport) -> Result<()> {
        self.check_batches(batches)?;
        let kind = self.gen_xy.kind();
        let b = self.config.batch_size;
        let x = batches.x.to_tensor(kind)?;
        let y = batches.y.to_tensor(kind)?;
        self.disc_x.params.set_requires_grad(false);
        self.disc_y.params.set_requires_grad(false);
        let result = self.generator_update(&x, &y, b, report);
        self.disc_x.params.set_requires_grad(true);
        self.disc_y.params.set_requires_grad(true);
        result
    }

    fn generator_update(&mut self, x: &Tensor, y: &Tensor, b: usize, report: &mut LossReport) -> Result<()> {
        let kind = x.kind();
        let perceptual = PyramidDistance::default();
        let w = LossWeights::from_config(&self.config);
        let mut g_loss: Option<Tensor> = None;
        let mut sums = [0.0f64; 5];
        let directions = [
            (&self.gen_xy, &self.gen_yx, &self.disc_y, x),
            (&self.gen_yx, &self.gen_xy, &self.disc_x, y),
        ];
        for (fwd, back, disc, input) in directions {
            let z = sample_styles(&mut self.rng, b);
            let perm = derangement(b, &mut self.rng)?;
            let z_t = styles_to_tensor(&z, kind);
            let pass = cycle_pass(fwd, back, input, &z_t, &perm)?;
            let scon = style_consistency(&pass.styles)?;
            let (l2, perc) = cycle_terms(&pass.recon, input, &perceptual)?;
            let adv = adv_g_loss(&disc.forward(&pass.fake)?);
            let mut loss = &adv * w.adv + &scon * w.scon + (&l2 + &perc) * w.cyc;
            if self.config.mode_seeking_loss {
                let z2 = styles_to_tensor(&sample_styles(&mut self.rng, b), kind);
                let fake2 = fwd.decode_tensor(&pass.content, &z2)?;
                let ms = mode_seeking_tensor(&pass.fake, &fake2, &z_t, &z2)?;
                sums[4] += scalar(&ms);
                loss = loss + ms * self.config.lambda_ms;
            }
            sums[0] += scalar(&scon);
            sums[1] += scalar(&l2);
            sums[2] += scalar(&perc);
            sums[3] += scalar(&adv);
            g_loss = Some(match g_loss {
                Some(g) => g + loss,
                None => loss,
            });
        }
        report.scon = sums[0] / 2.0;
        report.cyc_l2 = sums[1] / 2.0;
        report.cyc_perceptual = sums[2] / 2.0;
        report.adv_g = sums[3] / 2.0;
        report.mode_seeking = sums[4] / 2.0;
        report.total = total_loss(report, &w);
        if let Some(field) = report.non_finite_field() {
            return Err(self.diverged(field, report));
        }
        g_loss.expect("two directions").backward();
        self.opt_gen_xy.step(&mut self.gen_xy.params)?;
        self.opt_gen_yx.step(&mut self.gen_yx.params)?;
        Ok(())
    }

    fn diverged(&self, field: &'static str, report: &LossReport) -> Error {
        Error::Diverged {
            iteration: self.iteration + 1,
            field,
            report: format!("{report:?}"),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = BTreeMap::new();
        meta.insert("kind".to_string(), CHECKPOINT_KIND.to_string());
        meta.insert("iteration".to_string(), self.iteration.to_string());
        let run = RunConfig {
            train: self.config.clone(),
            ..RunConfig::default()
        };
        meta.insert("config".to_string(), run.to_text());
        meta.insert(
            "rng".to_string(),
            format!(
                "{}:{}:{}",
                self.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect::<String>(),
                self.rng.get_stream(),
                self.rng.get_word_pos()
            ),
        );
        meta.insert("running".to_string(), self.running.encode());
        let mut arrays = Vec::new();
        for (name, store, opt) in [
            ("gen_xy", &self.gen_xy.params, &self.opt_gen_xy),
            ("gen_yx", &self.gen_yx.params, &self.opt_gen_yx),
            ("disc_x", &self.disc_x.params, &self.opt_disc_x),
            ("disc_y", &self.disc_y.params, &self.opt_disc_y),
        ] {
            meta.insert(format!("opt_steps.{name}"), opt.steps().to_string());
            arrays.extend(store.to_arrays(&format!("{name}.")));
            arrays.extend(opt.to_arrays(store, &format!("opt.{name}.")));
        }
        Checkpoint { meta, arrays }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = checkpoint_config(ck)?;
        let meta = |k: &str| ck.meta(k).ok_or_else(|| Error::Checkpoint(format!("missing meta key {k}")));
        let iteration = meta("iteration")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad iteration".into()))?;
        let mut state = Self::new(config)?;
        state.iteration = iteration;
        state.rng = decode_rng(meta("rng")?)?;
        state.running = RunningLoss::decode(meta("running")?)?;
        for name in ["gen_xy", "gen_yx", "disc_x", "disc_y"] {
            let steps = meta(&format!("opt_steps.{name}"))?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad optimizer step count for {name}")))?;
            let (store, opt) = match name {
                "gen_xy" => (&state.gen_xy.params, &mut state.opt_gen_xy),
                "gen_yx" => (&state.gen_yx.params, &mut state.opt_gen_yx),
                "disc_x" => (&state.disc_x.params, &mut state.opt_disc_x),
                _ => (&state.disc_y.params, &mut state.opt_disc_y),
            };
            store.load_arrays(&format!("{name}."), &ck.arrays)?;
            opt.load_arrays(store, &format!("opt.{name}."), &ck.arrays, steps)?;
        }
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.to_checkpoint())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&read_checkpoint(path)?)
    }
}

fn decode_rng(s: &str) -> Result<ChaCha8Rng> {
    let bad = || Error::Checkpoint(format!("malformed rng state {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 || parts[0].len() != 64 {
        return Err(bad());
    }
    let mut seed = [0u8; 32];
    for (i, byte) in seed.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&parts[0][2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(parts[1].parse().map_err(|_| bad())?);
    rng.set_word_pos(parts[2].parse().map_err(|_| bad())?);
    Ok(rng)
}

pub fn checkpoint_config(ck: &Checkpoint) -> Result<TrainConfig> {
    if ck.meta("kind") != Some(CHECKPOINT_KIND) {
        return Err(Error::Checkpoint("not a training checkpoint".into()));
    }
    let text = ck
        .meta("config")
        .ok_or_else(|| Error::Checkpoint("missing config".into()))?;
    let run = RunConfig::parse(text).map_err(|e| Error::Checkpoint(format!("embedded config: {e}")))?;
    Ok(run.train)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::decode(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, ck.encode()).map_err(|e| Error::io(path, e))
}

/// Both generators from a checkpoint, for inference.
#[derive(Debug)]
pub struct Translators {
    pub config: TrainConfig,
    pub iteration: u64,
    pub gen_xy: Generator,
    pub gen_yx: Generator,
}

impl Translators {
    pub fn load(path: &Path) -> Result<Self> {
        let ck = read_checkpoint(path)?;
        let config = checkpoint_config(&ck)?;
        config.validate()?;
        let iteration = ck.meta("iteration").and_then(|s| s.parse().ok()).unwrap_or(0);
        let net = NetConfig::from_train(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let gen_xy = Generator::new(&net, Kind::Float, &mut rng)?;
        let gen_yx = Generator::new(&net, Kind::Float, &mut rng)?;
        gen_xy.params.load_arrays("gen_xy.", &ck.arrays)?;
        gen_yx.params.load_arrays("gen_yx.", &ck.arrays)?;
        gen_xy.params.set_requires_grad(false);
        gen_yx.params.set_requires_grad(false);
        Ok(Self {
            config,
            iteration,
            gen_xy,
            gen_yx,
        })
    }

    pub fn generator(&self, direction: crate::data::Domain) -> &Generator {
        match direction {
            crate::data::Domain::X => &self.gen_xy,
            crate::data::Domain::Y => &self.gen_yx,
        }
    }
}

#[cfg(test)]
mod tests;
