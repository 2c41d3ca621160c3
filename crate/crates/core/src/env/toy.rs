//! Deterministic catching game used as a desk-scale stand-in for an emulator.
//!
//! An avatar slides along the bottom of the screen while objects fall from
//! the top. Pressing `CATCH` while an object overlaps the avatar's catch zone
//! scores one point. Nothing is ever caught without the `CATCH` action.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::preprocess::{RamState, RgbFrame, FRAME_HEIGHT, FRAME_WIDTH};
use crate::env::{Environment, StepOutcome};

pub const NOOP: usize = 0;
pub const LEFT: usize = 1;
pub const RIGHT: usize = 2;
pub const CATCH: usize = 3;
pub const TOY_ACTIONS: usize = 4;

const AVATAR_W: usize = 16;
const AVATAR_H: usize = 8;
const AVATAR_Y: usize = 186;
const AVATAR_MAX_X: usize = FRAME_WIDTH - AVATAR_W;
const MOVE: usize = 8;
const OBJ: usize = 8;
const CATCH_TOP: usize = 166;
const CATCH_BOTTOM: usize = 190;
const GROUND_Y: usize = 196;

const BACKGROUND: [u8; 3] = [20, 24, 60];
const GROUND: [u8; 3] = [110, 110, 110];
const AVATAR: [u8; 3] = [80, 220, 80];
const OBJECT: [u8; 3] = [235, 90, 40];
const SCORE_PIP: [u8; 3] = [240, 240, 120];

// RAM layout
const RAM_AVATAR_X: usize = 0;
const RAM_SCORE: usize = 1;
const RAM_STEP: usize = 3;
const RAM_COUNT: usize = 5;
const RAM_SPAWN: usize = 6;
const RAM_OBJECTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyConfig {
    pub horizon: usize,
    pub spawn_interval: usize,
    pub fall_speed: usize,
    pub max_objects: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig { horizon: 2500, spawn_interval: 14, fall_speed: 6, max_objects: 3 }
    }
}

impl ToyConfig {
    pub fn with_horizon(horizon: usize) -> Self {
        ToyConfig { horizon, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Object {
    x: usize,
    y: usize,
}

#[derive(Debug, Clone)]
pub struct ToyEnv {
    config: ToyConfig,
    rng: ChaCha8Rng,
    avatar_x: usize,
    objects: Vec<Object>,
    score: u32,
    t: usize,
    spawn_timer: usize,
}

fn in_zone(o: &Object, avatar_x: usize) -> bool {
    (CATCH_TOP..=CATCH_BOTTOM).contains(&o.y) && o.x < avatar_x + AVATAR_W && o.x + OBJ > avatar_x
}

impl ToyEnv {
    pub const ID: &'static str = "toy-catch";

    pub fn new(config: ToyConfig) -> Self {
        let mut env = ToyEnv {
            config,
            rng: ChaCha8Rng::seed_from_u64(0),
            avatar_x: 0,
            objects: Vec::new(),
            score: 0,
            t: 0,
            spawn_timer: 0,
        };
        env.reset_state(0);
        env
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    fn reset_state(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.avatar_x = AVATAR_MAX_X / 2 / MOVE * MOVE;
        self.objects.clear();
        self.score = 0;
        self.t = 0;
        self.spawn_timer = 0;
        self.spawn();
    }

    fn spawn(&mut self) {
        if self.spawn_timer > 0 {
            self.spawn_timer -= 1;
            return;
        }
        if self.objects.len() < self.config.max_objects {
            let x = self.rng.random_range(0..FRAME_WIDTH / OBJ) * OBJ;
            self.objects.push(Object { x, y: 0 });
        }
        let jitter = self.rng.random_range(0..=self.config.spawn_interval / 2);
        self.spawn_timer = self.config.spawn_interval + jitter;
    }

    fn done(&self) -> bool {
        self.t >= self.config.horizon
    }

    pub fn render(&self) -> RgbFrame {
        let mut frame = RgbFrame::filled(BACKGROUND);
        frame.fill_rect(GROUND_Y, 0, 4, FRAME_WIDTH, GROUND);
        for i in 0..(self.score as usize).min(40) {
            frame.fill_rect(4, 4 + i * 4, 3, 3, SCORE_PIP);
        }
        for o in &self.objects {
            frame.fill_rect(o.y, o.x, OBJ, OBJ, OBJECT);
        }
        frame.fill_rect(AVATAR_Y, self.avatar_x, AVATAR_H, AVATAR_W, AVATAR);
        frame
    }

    pub fn ram(&self) -> RamState {
        let mut ram = RamState::default();
        let r = &mut ram.0;
        r[RAM_AVATAR_X] = self.avatar_x as u8;
        r[RAM_SCORE..RAM_SCORE + 2].copy_from_slice(&(self.score as u16).to_le_bytes());
        r[RAM_STEP..RAM_STEP + 2].copy_from_slice(&(self.t as u16).to_le_bytes());
        r[RAM_COUNT] = self.objects.len() as u8;
        r[RAM_SPAWN] = self.spawn_timer as u8;
        for (i, o) in self.objects.iter().enumerate() {
            let base = RAM_OBJECTS + 4 * i;
            r[base] = 1;
            r[base + 1] = o.x as u8;
            r[base + 2] = o.y as u8;
        }
        ram
    }

    /// Near-optimal action computed from RAM: catch when possible, otherwise
    /// walk toward the lowest object that can still be caught.
    pub fn scripted_action(ram: &RamState) -> usize {
        let r = &ram.0;
        let avatar_x = r[RAM_AVATAR_X] as usize;
        let objects: Vec<Object> = (0..r[RAM_COUNT] as usize)
            .map(|i| Object { x: r[RAM_OBJECTS + 4 * i + 1] as usize, y: r[RAM_OBJECTS + 4 * i + 2] as usize })
            .collect();
        if objects.iter().any(|o| in_zone(o, avatar_x)) {
            return CATCH;
        }
        let Some(target) = objects.iter().filter(|o| o.y <= CATCH_BOTTOM).max_by_key(|o| o.y) else {
            return NOOP;
        };
        let (obj_c, av_c) = (target.x + OBJ / 2, avatar_x + AVATAR_W / 2);
        if obj_c + MOVE / 2 < av_c {
            LEFT
        } else if obj_c > av_c + MOVE / 2 {
            RIGHT
        } else {
            NOOP
        }
    }
}

impl Environment for ToyEnv {
    fn id(&self) -> &str {
        Self::ID
    }

    fn n_actions(&self) -> usize {
        TOY_ACTIONS
    }

    fn reset(&mut self, seed: u64) -> (RgbFrame, RamState) {
        self.reset_state(seed);
        (self.render(), self.ram())
    }

    fn step(&mut self, action: usize) -> StepOutcome {
        if self.done() {
            return StepOutcome { frame: self.render(), ram: self.ram(), reward: 0.0, done: true };
        }
        match action {
            LEFT => self.avatar_x = self.avatar_x.saturating_sub(MOVE),
            RIGHT => self.avatar_x = (self.avatar_x + MOVE).min(AVATAR_MAX_X),
            _ => {}
        }
        let mut reward = 0.0;
        if action == CATCH {
            let before = self.objects.len();
            let ax = self.avatar_x;
            self.objects.retain(|o| !in_zone(o, ax));
            reward = (before - self.objects.len()) as f32;
            self.score += reward as u32;
        }
        let speed = self.config.fall_speed;
        self.objects.retain_mut(|o| {
            o.y += speed;
            o.y + OBJ <= FRAME_HEIGHT
        });
        self.spawn();
        self.t += 1;
        StepOutcome { frame: self.render(), ram: self.ram(), reward, done: self.done() }
    }
}
