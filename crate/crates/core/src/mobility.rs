//! User motion inside the lattice's square and nearest-station attachment.
//!
//! Users live in `[0, edge_len - 1]^2`, move a fixed distance `speed` per step
//! along their heading, and pick a new heading only when the next step would
//! leave the square.

use std::f64::consts::TAU;

use rand::Rng;

use crate::error::{Error, Result};

/// What a user does when its next step would leave the square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryRule {
    /// Draw headings uniformly until the full step stays inside.
    #[default]
    Resample,
    /// Mirror the offending velocity component(s) off the wall.
    Reflect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub gateway: usize,
    heading: f64,
    dx: f64,
    dy: f64,
}

impl UserState {
    pub fn new(id: usize, x: f64, y: f64, heading: f64, speed: f64, edge_len: usize) -> Result<Self> {
        let gateway = nearest_station(x, y, edge_len)?;
        let mut u = Self { id, x, y, speed, gateway, heading: 0.0, dx: 0.0, dy: 0.0 };
        u.set_heading(heading);
        Ok(u)
    }

    /// Heading in radians, normalised to `[0, 2*pi)`.
    pub fn heading(&self) -> f64 {
        self.heading
    }

    pub fn set_heading(&mut self, heading: f64) {
        let h = heading.rem_euclid(TAU);
        self.heading = h;
        self.dx = self.speed * h.cos();
        self.dy = self.speed * h.sin();
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

fn inside(x: f64, y: f64, side: f64) -> bool {
    (0.0..=side).contains(&x) && (0.0..=side).contains(&y)
}

/// Rounds half-way cases down, so ties go to the smaller station index.
/// Expects `v >= 0`.
#[inline]
fn round_half_down(v: f64) -> usize {
    let whole = v as usize;
    if v - whole as f64 > 0.5 {
        whole + 1
    } else {
        whole
    }
}

/// Station nearest (Euclidean) to `(x, y)`.
pub fn nearest_station(x: f64, y: f64, edge_len: usize) -> Result<usize> {
    let side = edge_len.saturating_sub(1) as f64;
    if !inside(x, y, side) {
        return Err(Error::InvalidPosition { x, y, side });
    }
    Ok(round_half_down(x) * edge_len + round_half_down(y))
}

fn check_speed(speed: f64, edge_len: usize) -> Result<()> {
    let side = edge_len.saturating_sub(1) as f64;
    if !(speed.is_finite() && speed >= 0.0) {
        return Err(Error::InvalidParameter(format!("speed must be finite and non-negative, got {speed}")));
    }
    // Below half the side length every point keeps a set of admissible
    // headings of positive measure, so boundary resampling terminates.
    if speed >= side / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "speed {speed} must be below half the square side ({})",
            side / 2.0
        )));
    }
    Ok(())
}

/// Places `n` users uniformly in the square with uniform headings.
pub fn init_users<R: Rng + ?Sized>(n: usize, edge_len: usize, speed: f64, rng: &mut R) -> Result<Vec<UserState>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 users, got {n}")));
    }
    if edge_len < 2 {
        return Err(Error::InvalidParameter(format!("lattice edge length must be at least 2, got {edge_len}")));
    }
    check_speed(speed, edge_len)?;
    let side = (edge_len - 1) as f64;
    (0..n)
        .map(|id| {
            let x = rng.gen::<f64>() * side;
            let y = rng.gen::<f64>() * side;
            let heading = rng.gen::<f64>() * TAU;
            UserState::new(id, x, y, heading, speed, edge_len)
        })
        .collect()
}

/// Advances one user by a single step and refreshes its gateway.
pub fn move_user<R: Rng + ?Sized>(u: &mut UserState, edge_len: usize, rule: BoundaryRule, rng: &mut R) {
    if u.speed == 0.0 {
        return;
    }
    let side = (edge_len - 1) as f64;
    let (mut nx, mut ny) = (u.x + u.dx, u.y + u.dy);
    if !inside(nx, ny, side) {
        let mut placed = false;
        if rule == BoundaryRule::Reflect {
            let mut h = u.heading;
            if !(0.0..=side).contains(&nx) {
                h = std::f64::consts::PI - h;
            }
            if !(0.0..=side).contains(&ny) {
                h = -h;
            }
            u.set_heading(h);
            nx = u.x + u.dx;
            ny = u.y + u.dy;
            placed = inside(nx, ny, side);
        }
        while !placed {
            u.set_heading(rng.gen::<f64>() * TAU);
            nx = u.x + u.dx;
            ny = u.y + u.dy;
            placed = inside(nx, ny, side);
        }
    }
    u.x = nx;
    u.y = ny;
    u.gateway = round_half_down(nx) * edge_len + round_half_down(ny);
}

/// Writes one `t,user_id,x,y,gateway` row per user.
pub fn write_trace_rows<W: std::io::Write>(out: &mut W, t: u64, users: &[UserState]) -> std::io::Result<()> {
    for u in users {
        writeln!(out, "{t},{},{},{},{}", u.id, u.x, u.y, u.gateway)?;
    }
    Ok(())
}
