//! Agent-level SEIRD dynamics for a single location.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

/// Clinical and contact parameters of the pathogen at one location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpiParams {
    /// Per-contact, per-step infection rate.
    pub beta: f64,
    /// Days spent exposed before becoming infectious.
    pub theta: u32,
    /// Days spent infectious before recovering or dying.
    pub gamma: u32,
    /// Probability an infectious agent recovers rather than dies.
    pub rho: f64,
}

impl EpiParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.beta >= 0.0 && self.beta <= 1.0) {
            return Err(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if self.theta == 0 || self.gamma == 0 {
            return Err("theta and gamma must be positive whole days".into());
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        Ok(())
    }

    /// Probability that one susceptible agent is infected this step given
    /// `infectious` infectious agents at the location.
    pub fn infection_probability(&self, infectious: u32) -> f64 {
        if infectious == 0 || self.beta <= 0.0 {
            return 0.0;
        }
        1.0 - (1.0 - self.beta).powi(infectious as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compartment {
    S,
    E,
    I,
    R,
    D,
}

/// Epidemiological state of one consumer and the steps spent in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthState {
    pub state: Compartment,
    pub age: u32,
}

impl HealthState {
    pub const SUSCEPTIBLE: HealthState = HealthState { state: Compartment::S, age: 0 };
    pub const INFECTED: HealthState = HealthState { state: Compartment::I, age: 0 };

    pub fn is_alive(&self) -> bool {
        self.state != Compartment::D
    }

    fn enter(&mut self, state: Compartment) {
        self.state = state;
        self.age = 0;
    }
}

/// Compartment sizes at one location; `n0` is the initial population.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationEpiCounts {
    pub s: u32,
    pub e: u32,
    pub i: u32,
    pub r: u32,
    pub d: u32,
    pub n0: u32,
}

impl LocationEpiCounts {
    pub fn tally(population: &[HealthState]) -> Self {
        let mut c = LocationEpiCounts { n0: population.len() as u32, ..Default::default() };
        for h in population {
            match h.state {
                Compartment::S => c.s += 1,
                Compartment::E => c.e += 1,
                Compartment::I => c.i += 1,
                Compartment::R => c.r += 1,
                Compartment::D => c.d += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u32 {
        self.s + self.e + self.i + self.r + self.d
    }

    pub fn alive(&self) -> u32 {
        self.n0 - self.d
    }

    pub fn is_conserved(&self) -> bool {
        self.total() == self.n0
    }

    /// Every agent at the location is dead.
    pub fn is_extinct(&self) -> bool {
        self.n0 > 0 && self.d >= self.n0
    }
}

/// Share of the living population that is currently infectious, `I / (N - D)`.
///
/// An extinct location (or an empty one) reports 0.
pub fn demand_shift_fraction(counts: &LocationEpiCounts) -> f64 {
    let alive = counts.n0.saturating_sub(counts.d);
    if alive == 0 {
        return 0.0;
    }
    f64::from(counts.i) / f64::from(alive)
}

/// Advances one location by one step and returns the new counts.
///
/// All infections in a step are driven by the infectious count at the start of
/// the step. An agent entering E at step `t` becomes infectious at `t + theta`,
/// and one entering I at `t` leaves at `t + gamma`.
///
/// # Panics
/// If `counts` does not describe `population`; that is a caller bug.
pub fn step_epidemic(
    population: &mut [HealthState],
    counts: &LocationEpiCounts,
    params: &EpiParams,
    rng: &mut SimRng,
) -> LocationEpiCounts {
    assert_eq!(
        counts.n0 as usize,
        population.len(),
        "epidemic counts describe {} agents but the population has {}",
        counts.n0,
        population.len()
    );
    assert!(counts.is_conserved(), "epidemic counts are not conserved: {counts:?}");

    let mut next = *counts;
    if counts.e == 0 && counts.i == 0 {
        // Nothing can change until someone is exposed or infectious; only clocks advance.
        for h in population.iter_mut().filter(|h| h.state != Compartment::D) {
            h.age = h.age.saturating_add(1);
        }
        return next;
    }
    let p_inf = params.infection_probability(counts.i);

    for h in population.iter_mut() {
        match h.state {
            Compartment::D => {}
            Compartment::S => {
                if p_inf > 0.0 && rng.random::<f64>() < p_inf {
                    h.enter(Compartment::E);
                    next.s -= 1;
                    next.e += 1;
                } else {
                    h.age = h.age.saturating_add(1);
                }
            }
            Compartment::E => {
                h.age += 1;
                if h.age >= params.theta {
                    h.enter(Compartment::I);
                    next.e -= 1;
                    next.i += 1;
                }
            }
            Compartment::I => {
                h.age += 1;
                if h.age >= params.gamma {
                    next.i -= 1;
                    if rng.random::<f64>() < params.rho {
                        h.enter(Compartment::R);
                        next.r += 1;
                    } else {
                        h.enter(Compartment::D);
                        next.d += 1;
                    }
                }
            }
            Compartment::R => h.age = h.age.saturating_add(1),
        }
    }
    debug_assert_eq!(next, LocationEpiCounts::tally(population));
    next
}
