//! Seeded training loop.
//!
//! Each step draws `batch_size` images from the corpus, turns each into a
//! synthetic pair, runs both views through the shared network and
//! accumulates the gradient of the weighted loss divided by the batch size.
//! One Adam update follows. Wall-clock timing is left to the caller so the
//! records stay reproducible.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::covariance::{pair_cov_loss, total_loss, CovBranches, LossWeights};
use crate::detection::{
    reliability_loss, repeatability_loss, warp_mask, warp_repeatability, ReliabilityConfig, RepeatabilityConfig,
};
use crate::error::{arg_err, Error, Result};
use crate::image::Image;
use crate::network::{BackboneConfig, Network};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::synth::{synth_pair, AugConfig, PairSample};
use crate::Graph;

/// Switches that remove parts of the objective or the architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Ablation {
    pub no_style: bool,
    pub no_structure: bool,
    pub no_dsc: bool,
}

impl Ablation {
    pub fn branches(&self) -> CovBranches {
        CovBranches { style: !self.no_style, structure: !self.no_structure }
    }
}

/// Training length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    Steps(usize),
    /// Passes over the corpus, `ceil(len / batch_size)` steps each.
    Epochs(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub aug: AugConfig,
    pub repeat: RepeatabilityConfig,
    pub reli: ReliabilityConfig,
    pub backbone: BackboneConfig,
    pub ablation: Ablation,
}

impl TrainConfig {
    /// 64x64 crops, 32-d descriptors, 200 steps at lr 2e-3.
    pub fn desk() -> Self {
        TrainConfig {
            seed: 0,
            schedule: Schedule::Steps(200),
            batch_size: 8,
            // 200 steps at the full-scale rate barely move the small net
            adam: AdamConfig { lr: 2e-3, ..AdamConfig::default() },
            weights: LossWeights::default(),
            aug: AugConfig::default(),
            repeat: RepeatabilityConfig::default(),
            reli: ReliabilityConfig::default(),
            backbone: BackboneConfig::desk(),
            ablation: Ablation::default(),
        }
    }

    /// 192x192 crops, 128-d descriptors, 25 epochs.
    pub fn full() -> Self {
        TrainConfig {
            schedule: Schedule::Epochs(25),
            adam: AdamConfig::default(),
            aug: AugConfig { crop: 192, ..AugConfig::default() },
            backbone: BackboneConfig::full(),
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(arg_err("train config", "batch_size must be >= 1"));
        }
        match self.schedule {
            Schedule::Steps(0) | Schedule::Epochs(0) => return Err(arg_err("train config", "empty schedule")),
            _ => {}
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.weight_decay >= 0.0 && a.eps > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(arg_err("train config", format!("invalid optimizer settings {a:?}")));
        }
        if self.aug.crop < crate::network::MIN_INPUT_SIZE {
            return Err(arg_err("train config", format!("crop {} below the network minimum", self.aug.crop)));
        }
        self.weights.validate()?;
        self.repeat.validate()?;
        self.reli.validate()?;
        self.network_config().validate()
    }

    /// The backbone with the ablation applied.
    pub fn network_config(&self) -> BackboneConfig {
        BackboneConfig { use_dsc_tail: self.backbone.use_dsc_tail && !self.ablation.no_dsc, ..self.backbone.clone() }
    }

    pub fn total_steps(&self, corpus_len: usize) -> usize {
        match self.schedule {
            Schedule::Steps(n) => n,
            Schedule::Epochs(e) => e * corpus_len.div_ceil(self.batch_size),
        }
    }
}

/// Batch means of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub reli: f64,
    pub repeat: f64,
    pub cov: f64,
    pub total: f64,
    /// Mean of the correlation difference over the style selection.
    pub style_mean: f64,
    /// Mean of the correlation difference over the structure selection.
    pub structure_mean: f64,
}

/// Loss values of one pair, with the parameter gradients of `total`.
#[derive(Clone, Debug)]
pub struct PairOutcome {
    pub record: StepRecord,
    pub grads: Vec<Vec<f64>>,
}

/// Forward and backward pass of the full objective on one pair.
/// `scale` multiplies the loss before differentiation.
pub fn pair_objective(
    net: &Network,
    pair: &PairSample,
    cfg: &TrainConfig,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PairOutcome> {
    let mut g = Graph::new();
    let params = net.bind(&mut g, true);
    let a = g.constant(pair.i1.to_tensor());
    let b = g.constant(pair.i2.to_tensor());
    let m1 = net.forward_on(&mut g, &params, a)?;
    let m2 = net.forward_on(&mut g, &params, b)?;

    let reli = reliability_loss(&mut g, m1.descriptors, m2.descriptors, m1.reliability, &pair.t, &cfg.reli, rng)?;
    let warped = warp_repeatability(&mut g, m2.repeatability, &pair.t)?;
    let mask = warp_mask(&pair.t, (pair.i2.height(), pair.i2.width()));
    let repeat = repeatability_loss(&mut g, m1.repeatability, warped, &mask, &cfg.repeat)?;
    let cov = pair_cov_loss(&mut g, m1.descriptors, m2.descriptors, cfg.ablation.branches())?;
    let total = total_loss(&mut g, reli.loss, repeat.loss, cov.loss, &cfg.weights)?;

    let record = StepRecord {
        step: 0,
        reli: g.value(reli.loss).item(),
        repeat: g.value(repeat.loss).item(),
        cov: g.value(cov.loss).item(),
        total: g.value(total).item(),
        style_mean: cov.masks.style_mean(&cov.sigma_c),
        structure_mean: cov.masks.structure_mean(&cov.sigma_c),
    };
    if !record.total.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let scaled = g.scale(total, scale);
    g.backward(scaled)?;
    let grads = params.iter().map(|&p| g.grad(p).expect("parameters are leaves").to_vec()).collect();
    Ok(PairOutcome { record, grads })
}

/// Network, optimizer state and sampling stream of a training run.
pub struct Trainer {
    cfg: TrainConfig,
    net: Network,
    opt: AdamState,
    step: u64,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl Trainer {
    /// Fresh network initialized from `cfg.seed`.
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let net = Network::new(cfg.network_config(), cfg.seed)?;
        let opt = AdamState::new(net.params().iter().map(|p| &p.value));
        // separate stream from the weight initialization
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_DA7A);
        Ok(Trainer { cfg, net, opt, step: 0, rng, order: Vec::new(), cursor: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.opt
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_network(&self.net, self.step, Some(self.opt.clone()))
    }

    fn next_image(&mut self, corpus_len: usize) -> usize {
        if self.cursor >= self.order.len() {
            self.order = (0..corpus_len).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    /// Draws a pair that supervises at least one anchor.
    fn next_pair(&mut self, corpus: &[Image]) -> Result<PairSample> {
        let mut last = Error::EmptySupervision;
        for _ in 0..self.cfg.aug.max_retries.max(1) {
            let idx = self.next_image(corpus.len());
            match synth_pair(&corpus[idx], &mut self.rng, &self.cfg.aug) {
                Ok(p) if p.t.valid_count() > 0 => return Ok(p),
                Ok(_) => {}
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    /// One optimizer step. Parameters and optimizer state are untouched when
    /// an error is returned.
    pub fn step(&mut self, corpus: &[Image]) -> Result<StepRecord> {
        if corpus.is_empty() {
            return Err(arg_err("train", "empty corpus"));
        }
        let bsz = self.cfg.batch_size;
        let mut sum: Vec<Vec<f64>> = self.net.params().iter().map(|p| vec![0.0; p.value.numel()]).collect();
        let mut rec = StepRecord { step: self.step + 1, reli: 0.0, repeat: 0.0, cov: 0.0, total: 0.0, style_mean: 0.0, structure_mean: 0.0 };
        for _ in 0..bsz {
            let pair = self.next_pair(corpus)?;
            let out = pair_objective(&self.net, &pair, &self.cfg, 1.0 / bsz as f64, &mut self.rng)?;
            for (s, g) in sum.iter_mut().zip(&out.grads) {
                s.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            let r = out.record;
            rec.reli += r.reli;
            rec.repeat += r.repeat;
            rec.cov += r.cov;
            rec.total += r.total;
            rec.style_mean += r.style_mean;
            rec.structure_mean += r.structure_mean;
        }
        let inv = 1.0 / bsz as f64;
        for v in [&mut rec.reli, &mut rec.repeat, &mut rec.cov, &mut rec.total, &mut rec.style_mean, &mut rec.structure_mean] {
            *v *= inv;
        }
        let grads: Vec<&[f64]> = sum.iter().map(Vec::as_slice).collect();
        let mut params: Vec<&mut crate::Tensor> = self.net.params_mut().iter_mut().map(|p| &mut p.value).collect();
        adam_step(&mut params, &grads, &mut self.opt, &self.cfg.adam)?;
        self.step += 1;
        Ok(rec)
    }
}
