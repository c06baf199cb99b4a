//! Planar two-arm world producing paired (image, proprioception) samples.
//!
//! Information layout:
//! - right arm: joint angles and velocities go into the proprioceptive vector
//!   and the arm is drawn in the right half of the frame;
//! - left arm: drawn in the left half only, never in proprioception;
//! - left-arm velocity: in neither modality (a single frame carries no motion).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{RngStream, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmConfig {
    /// Joints per arm.
    pub joints: usize,
    /// Link lengths in pixels, base to tip.
    pub links: Vec<f64>,
    /// Symmetric joint range `[-limit, limit]` in radians.
    pub joint_limit: f64,
    /// Base of the left arm, `(x, y)` in pixels; `y` grows downward.
    pub left_base: (f64, f64),
    pub right_base: (f64, f64),
    pub height: usize,
    pub width: usize,
    pub steps_per_target: usize,
    /// Integration step in seconds.
    pub dt: f64,
    /// Natural frequency of the joint tracking, rad/s.
    pub omega: f64,
    /// Half stroke width of a drawn link, pixels.
    pub half_width: f64,
    /// Distal right-arm links left out of the image.
    pub hidden_right_links: usize,
}

impl Default for ArmConfig {
    fn default() -> Self {
        ArmConfig {
            joints: 3,
            links: vec![5.0, 5.0, 4.0],
            joint_limit: std::f64::consts::FRAC_PI_2,
            left_base: (16.0, 16.0),
            right_base: (48.0, 16.0),
            height: 32,
            width: 64,
            steps_per_target: 10,
            dt: 0.2,
            omega: 3.0,
            half_width: 1.0,
            hidden_right_links: 0,
        }
    }
}

impl ArmConfig {
    pub fn reach(&self) -> f64 {
        self.links.iter().sum()
    }

    /// Checks that every reachable pose stays inside its own half-frame.
    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 || self.links.len() != self.joints {
            return Err(Error::Config(format!(
                "{} link lengths given for {} joints",
                self.links.len(),
                self.joints
            )));
        }
        if self.width % 2 != 0 {
            return Err(Error::Config(format!("image width {} must be even", self.width)));
        }
        if self.hidden_right_links > self.joints {
            return Err(Error::Config("cannot hide more links than the arm has".into()));
        }
        if self.steps_per_target == 0 || !(self.dt > 0.0) || !(self.omega > 0.0) {
            return Err(Error::Config("steps_per_target, dt and omega must be positive".into()));
        }
        let extent = self.reach() + self.half_width + 0.5;
        let half = self.width as f64 / 2.0;
        let fits = |(x, y): (f64, f64), lo: f64, hi: f64| {
            x - extent >= lo && x + extent <= hi && y - extent >= 0.0 && y + extent <= self.height as f64
        };
        if !fits(self.left_base, 0.0, half) || !fits(self.right_base, half, self.width as f64) {
            return Err(Error::Config("an arm can leave its half of the frame".into()));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Proprioception width: right-arm angles and velocities.
    pub fn d_p(&self) -> usize {
        2 * self.joints
    }

    /// Readout target width: angles, velocities and end effector of both arms.
    pub fn d_target(&self) -> usize {
        2 * (2 * self.joints + 2)
    }
}

/// End-effector position of a planar chain.
pub fn forward_kinematics(phi: &[f64], links: &[f64], base: (f64, f64)) -> (f64, f64) {
    *joint_positions(phi, links, base).last().expect("base is always present")
}

/// Base, every joint, and the tip.
pub fn joint_positions(phi: &[f64], links: &[f64], base: (f64, f64)) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(links.len() + 1);
    let (mut x, mut y, mut angle) = (base.0, base.1, 0.0);
    pts.push((x, y));
    for (&p, &l) in phi.iter().zip(links) {
        angle += p;
        x += l * angle.cos();
        y += l * angle.sin();
        pts.push((x, y));
    }
    pts
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmState {
    pub phi: Vec<f64>,
    pub phi_dot: Vec<f64>,
    pub target: Vec<f64>,
}

impl ArmState {
    pub fn at_rest(phi: Vec<f64>) -> Self {
        let n = phi.len();
        ArmState {
            target: phi.clone(),
            phi,
            phi_dot: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub left: ArmState,
    pub right: ArmState,
}

/// One `dt` of critically damped tracking, `φ'' = ω²(target - φ) - 2ω φ'`,
/// integrated exactly. Angles are clamped to the joint range.
pub fn step_toward_target(state: &ArmState, cfg: &ArmConfig) -> ArmState {
    let (w, t) = (cfg.omega, cfg.dt);
    let decay = (-w * t).exp();
    let mut next = state.clone();
    for j in 0..state.phi.len() {
        let e0 = state.phi[j] - state.target[j];
        let v0 = state.phi_dot[j];
        let a = v0 + w * e0;
        let mut phi = state.target[j] + (e0 + a * t) * decay;
        let mut vel = (v0 - w * a * t) * decay;
        if phi.abs() > cfg.joint_limit {
            phi = phi.clamp(-cfg.joint_limit, cfg.joint_limit);
            vel = 0.0;
        }
        next.phi[j] = phi;
        next.phi_dot[j] = vel;
    }
    next
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let s = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - s * dx).powi(2) + (p.1 - a.1 - s * dy).powi(2)).sqrt()
}

fn draw_chain(img: &mut [f32], cfg: &ArmConfig, pts: &[(f64, f64)]) {
    let reach = cfg.half_width + 0.5;
    for seg in pts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let x0 = ((a.0.min(b.0) - reach).floor().max(0.0)) as usize;
        let x1 = ((a.0.max(b.0) + reach).ceil().min(cfg.width as f64)) as usize;
        let y0 = ((a.1.min(b.1) - reach).floor().max(0.0)) as usize;
        let y1 = ((a.1.max(b.1) + reach).ceil().min(cfg.height as f64)) as usize;
        for py in y0..y1 {
            for px in x0..x1 {
                let d = segment_distance((px as f64 + 0.5, py as f64 + 0.5), a, b);
                let coverage = (reach - d).clamp(0.0, 1.0);
                let v = (2.0 * coverage - 1.0) as f32;
                let cell = &mut img[py * cfg.width + px];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }
}

/// Anti-aliased grayscale frame: background `-1`, arms up to `+1`.
pub fn render(state: &WorldState, cfg: &ArmConfig) -> Vec<f32> {
    let mut img = vec![-1.0f32; cfg.pixels()];
    let left = joint_positions(&state.left.phi, &cfg.links, cfg.left_base);
    draw_chain(&mut img, cfg, &left);
    let right = joint_positions(&state.right.phi, &cfg.links, cfg.right_base);
    let shown = right.len() - cfg.hidden_right_links;
    draw_chain(&mut img, cfg, &right[..shown]);
    img
}

/// Which readout stream a slice of the target vector holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    Position,
    Velocity,
    EndEffector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stream {
    pub side: Side,
    pub quantity: Quantity,
}

impl Stream {
    pub const ALL: [Stream; 6] = [
        Stream::new(Side::Left, Quantity::Position),
        Stream::new(Side::Left, Quantity::Velocity),
        Stream::new(Side::Left, Quantity::EndEffector),
        Stream::new(Side::Right, Quantity::Position),
        Stream::new(Side::Right, Quantity::Velocity),
        Stream::new(Side::Right, Quantity::EndEffector),
    ];

    pub const fn new(side: Side, quantity: Quantity) -> Self {
        Stream { side, quantity }
    }

    /// Column range inside `φ_l ⊕ φ'_l ⊕ ee_l ⊕ φ_r ⊕ φ'_r ⊕ ee_r`.
    pub fn range(&self, joints: usize) -> std::ops::Range<usize> {
        let arm = 2 * joints + 2;
        let base = match self.side {
            Side::Left => 0,
            Side::Right => arm,
        };
        let (off, len) = match self.quantity {
            Quantity::Position => (0, joints),
            Quantity::Velocity => (joints, joints),
            Quantity::EndEffector => (2 * joints, 2),
        };
        base + off..base + off + len
    }

    pub fn label(&self) -> &'static str {
        match (self.side, self.quantity) {
            (Side::Left, Quantity::Position) => "left_pos",
            (Side::Left, Quantity::Velocity) => "left_vel",
            (Side::Left, Quantity::EndEffector) => "left_ee",
            (Side::Right, Quantity::Position) => "right_pos",
            (Side::Right, Quantity::Velocity) => "right_vel",
            (Side::Right, Quantity::EndEffector) => "right_ee",
        }
    }
}

/// Per-column normalization constants.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZScore {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl ZScore {
    pub fn fit(t: &Tensor) -> Self {
        let (rows, cols) = (t.rows(), t.cols());
        let mut mean = vec![0.0f64; cols];
        let mut sq = vec![0.0f64; cols];
        for r in 0..rows {
            for (c, &v) in t.row(r).iter().enumerate() {
                mean[c] += v as f64;
                sq[c] += (v as f64) * (v as f64);
            }
        }
        let n = rows.max(1) as f64;
        let std = mean
            .iter()
            .zip(&sq)
            .map(|(&s, &q)| ((q / n - (s / n).powi(2)).max(0.0).sqrt().max(1e-8)) as f32)
            .collect();
        ZScore {
            mean: mean.iter().map(|&s| (s / n) as f32).collect(),
            std,
        }
    }

    pub fn apply(&self, t: &mut Tensor) {
        let cols = self.mean.len();
        for row in t.data_mut().chunks_mut(cols) {
            for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }
}

/// Ordered samples with a contiguous train/eval split (`[0, n_train)` trains).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: ArmConfig,
    /// `[N, H * W]` in `[-1, 1]`.
    pub images: Tensor,
    /// `[N, 2J]`, right-arm `φ ⊕ φ'`, z-scored.
    pub proprio: Tensor,
    /// `[N, 4J + 4]` readout targets, z-scored.
    pub targets: Tensor,
    /// Targets before z-scoring (radians, rad/s, pixels).
    pub raw_targets: Tensor,
    pub proprio_norm: ZScore,
    pub target_norm: ZScore,
    pub n_train: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn train_range(&self) -> std::ops::Range<usize> {
        0..self.n_train
    }

    pub fn eval_range(&self) -> std::ops::Range<usize> {
        self.n_train..self.len()
    }

    /// Target columns of one stream.
    pub fn stream(&self, s: Stream) -> Tensor {
        let r = s.range(self.config.joints);
        self.targets.slice_cols(r.start, r.len()).expect("stream inside target")
    }
}

/// Episodes simulated per independent random stream.
const EPISODES_PER_CHUNK: usize = 100;

/// Random targets, `steps_per_target` tracking steps each, one sample per step.
///
/// Episodes are grouped into chunks that start from a random pose at rest and
/// carry the arm state across targets; each chunk draws from its own stream.
pub fn generate_dataset(cfg: &ArmConfig, n: usize, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let steps = cfg.steps_per_target;
    if n == 0 || n % steps != 0 {
        return Err(Error::Config(format!(
            "dataset size {n} must be a positive multiple of {steps} steps per target"
        )));
    }
    let episodes = n / steps;
    let (j, px) = (cfg.joints, cfg.pixels());
    let mut images = Vec::with_capacity(n * px);
    let mut proprio = Vec::with_capacity(n * 2 * j);
    let mut targets = Vec::with_capacity(n * cfg.d_target());
    let lim = cfg.joint_limit;

    for chunk in 0..episodes.div_ceil(EPISODES_PER_CHUNK) {
        let mut rng = RngStream::new(seed, chunk as u64);
        let draw = |rng: &mut RngStream| (0..j).map(|_| rng.uniform(-lim, lim)).collect::<Vec<_>>();
        let mut world = WorldState {
            left: ArmState::at_rest(draw(&mut rng)),
            right: ArmState::at_rest(draw(&mut rng)),
        };
        let count = EPISODES_PER_CHUNK.min(episodes - chunk * EPISODES_PER_CHUNK);
        for _ in 0..count {
            world.left.target = draw(&mut rng);
            world.right.target = draw(&mut rng);
            for _ in 0..steps {
                world.left = step_toward_target(&world.left, cfg);
                world.right = step_toward_target(&world.right, cfg);
                images.extend(render(&world, cfg));
                proprio.extend(world.right.phi.iter().chain(&world.right.phi_dot).map(|&v| v as f32));
                for (arm, base) in [(&world.left, cfg.left_base), (&world.right, cfg.right_base)] {
                    let ee = forward_kinematics(&arm.phi, &cfg.links, base);
                    targets.extend(arm.phi.iter().chain(&arm.phi_dot).map(|&v| v as f32));
                    targets.extend([ee.0 as f32, ee.1 as f32]);
                }
            }
        }
    }

    let images = Tensor::new(&[n, px], images)?;
    let mut proprio = Tensor::new(&[n, 2 * j], proprio)?;
    let raw_targets = Tensor::new(&[n, cfg.d_target()], targets)?;
    let proprio_norm = ZScore::fit(&proprio);
    proprio_norm.apply(&mut proprio);
    let target_norm = ZScore::fit(&raw_targets);
    let mut targets = raw_targets.clone();
    target_norm.apply(&mut targets);
    let n_train = (episodes * 9 / 10).max(1).min(episodes.saturating_sub(1)) * steps;
    Ok(Dataset {
        config: cfg.clone(),
        images,
        proprio,
        targets,
        raw_targets,
        proprio_norm,
        target_norm,
        n_train,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn fully_extended_chain() {
        let p = forward_kinematics(&[0.0; 3], &[1.0; 3], (0.0, 0.0));
        assert!((p.0 - 3.0).abs() < 1e-12 && p.1.abs() < 1e-12);
    }

    #[test]
    fn rotated_chain() {
        let p = forward_kinematics(&[FRAC_PI_2, 0.0, 0.0], &[1.0; 3], (0.0, 0.0));
        assert!(p.0.abs() < 1e-12 && (p.1 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_is_kept() {
        let cfg = ArmConfig::default();
        let s = ArmState::at_rest(vec![0.3, -0.2, 0.1]);
        assert_eq!(step_toward_target(&s, &cfg), s);
    }

    #[test]
    fn tracking_from_rest_converges_monotonically() {
        let cfg = ArmConfig::default();
        let mut s = ArmState::at_rest(vec![-1.2, 0.0, 1.0]);
        s.target = vec![1.1, -0.9, -1.3];
        let mut prev: Vec<f64> = s.phi.iter().zip(&s.target).map(|(p, t)| (p - t).abs()).collect();
        for _ in 0..10 {
            s = step_toward_target(&s, &cfg);
            let now: Vec<f64> = s.phi.iter().zip(&s.target).map(|(p, t)| (p - t).abs()).collect();
            for (a, b) in now.iter().zip(&prev) {
                assert!(a < b);
            }
            prev = now;
        }
    }

    #[test]
    fn mirrored_target_mirrors_trajectory() {
        let cfg = ArmConfig::default();
        let mut a = ArmState::at_rest(vec![0.0; 3]);
        a.target = vec![0.7, -0.4, 1.2];
        let mut b = ArmState::at_rest(vec![0.0; 3]);
        b.target = a.target.iter().map(|t| -t).collect();
        for _ in 0..10 {
            a = step_toward_target(&a, &cfg);
            b = step_toward_target(&b, &cfg);
            for (x, y) in a.phi.iter().zip(&b.phi) {
                assert_eq!(*x, -*y);
            }
        }
    }

    #[test]
    fn arms_stay_in_their_halves_at_rest() {
        let cfg = ArmConfig::default();
        let w = WorldState {
            left: ArmState::at_rest(vec![0.0; 3]),
            right: ArmState::at_rest(vec![0.0; 3]),
        };
        let img = render(&w, &cfg);
        let mut left_lit = false;
        let mut right_lit = false;
        for (i, &v) in img.iter().enumerate() {
            if v > -1.0 {
                if i % cfg.width < cfg.width / 2 {
                    left_lit = true;
                } else {
                    right_lit = true;
                }
            }
        }
        assert!(left_lit && right_lit);
    }

    #[test]
    fn oversized_links_are_rejected() {
        let cfg = ArmConfig {
            links: vec![10.0, 10.0, 10.0],
            ..ArmConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn dataset_size_must_match_episodes() {
        assert!(generate_dataset(&ArmConfig::default(), 105, 1).is_err());
        let d = generate_dataset(&ArmConfig::default(), 100, 1).unwrap();
        assert_eq!(d.len(), 100);
        assert_eq!(d.n_train, 90);
        assert_eq!(d.targets.cols(), 16);
    }

    #[test]
    fn stream_ranges_tile_the_target() {
        let mut covered = vec![false; 16];
        for s in Stream::ALL {
            for c in s.range(3) {
                assert!(!covered[c]);
                covered[c] = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
    }
}
