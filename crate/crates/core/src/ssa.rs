//! Exact stochastic simulation (direct method) with mass-action
//! propensities, and time-averaged means over many runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::ergodicity::ControllerSpec;
use crate::network::{NetworkError, RateParam, Reaction, ReactionNetwork};
use crate::par::{kahan_sum, map_indexed, Execution};

/// Populations above this abort the run.
pub const STATE_CAP: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("rate `{0}` is not fixed; simulation needs numeric rates")]
    NotFixed(String),
    #[error("initial state has {got} entries, the network has {expected} species")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid time horizon: {0}")]
    InvalidTime(String),
    #[error("population of `{species}` exceeded 2^31 at t = {time}")]
    Overflow { species: String, time: f64 },
    #[error("invalid controller: {0}")]
    InvalidController(String),
    #[error("at least one run is required")]
    NoRuns,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub species: Vec<String>,
    /// Jump times, starting with `0` for the initial state.
    pub times: Vec<f64>,
    pub states: Vec<Vec<u64>>,
    /// Reaction fired at each jump (one fewer entry than `times`).
    pub fired: Vec<usize>,
    pub t_end: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[u64] {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn num_jumps(&self) -> usize {
        self.fired.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time");
        for s in &self.species {
            out.push(',');
            out.push_str(s);
        }
        out.push('\n');
        for (t, x) in self.times.iter().zip(&self.states) {
            out.push_str(&t.to_string());
            for v in x {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

struct Compiled {
    species: Vec<String>,
    reactants: Vec<Vec<(usize, u32)>>,
    change: Vec<Vec<(usize, i64)>>,
    rates: Vec<f64>,
}

impl Compiled {
    fn new(network: &ReactionNetwork) -> Result<Self, SimulationError> {
        network.ensure_valid()?;
        let d = network.num_species();
        let mut rates = Vec::with_capacity(network.reactions.len());
        for r in &network.reactions {
            let p = network.param(&r.rate).expect("validated");
            rates.push(p.pinned_value().ok_or_else(|| SimulationError::NotFixed(p.name.clone()))?);
        }
        Ok(Self {
            species: network.species.clone(),
            reactants: network.reactions.iter().map(|r| r.reactants.clone()).collect(),
            change: network
                .reactions
                .iter()
                .map(|r| r.stoichiometry(d).into_iter().enumerate().filter(|&(_, z)| z != 0).collect())
                .collect(),
            rates,
        })
    }

    /// `ρ Π x!/(x − m)!`; zero whenever a reactant count is short.
    fn propensity(&self, k: usize, x: &[u64]) -> f64 {
        let mut a = self.rates[k];
        for &(s, m) in &self.reactants[k] {
            for j in 0..u64::from(m) {
                if x[s] < j + 1 {
                    return 0.0;
                }
                a *= (x[s] - j) as f64;
            }
        }
        a
    }

    /// Runs the direct method on `[0, t_end]`. `segment(t0, t1, x)` sees
    /// every holding interval; `jump(t, k, x)` every new state.
    fn run(
        &self,
        x0: &[u64],
        t_end: f64,
        rng: &mut ChaCha8Rng,
        mut segment: impl FnMut(f64, f64, &[u64]),
        mut jump: impl FnMut(f64, usize, &[u64]),
    ) -> Result<(), SimulationError> {
        let mut x = x0.to_vec();
        let mut t = 0.0;
        let mut props = vec![0.0; self.rates.len()];
        loop {
            for (k, a) in props.iter_mut().enumerate() {
                *a = self.propensity(k, &x);
            }
            let total = kahan_sum(props.iter().copied());
            if total <= 0.0 {
                segment(t, t_end, &x);
                return Ok(());
            }
            let u: f64 = rng.random();
            let dt = -(1.0 - u).ln() / total;
            if t + dt >= t_end {
                segment(t, t_end, &x);
                return Ok(());
            }
            segment(t, t + dt, &x);
            t += dt;
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (k, &a) in props.iter().enumerate() {
                if a > 0.0 {
                    chosen = Some(k);
                    acc += a;
                    if target < acc {
                        break;
                    }
                }
            }
            let k = chosen.expect("positive total propensity");
            for &(s, z) in &self.change[k] {
                let next = x[s] as i64 + z;
                debug_assert!(next >= 0, "propensity guards the lattice");
                x[s] = next as u64;
                if x[s] > STATE_CAP {
                    return Err(SimulationError::Overflow { species: self.species[s].clone(), time: t });
                }
            }
            jump(t, k, &x);
        }
    }
}

fn check_inputs(network: &ReactionNetwork, x0: &[u64], t_end: f64) -> Result<(), SimulationError> {
    if x0.len() != network.num_species() {
        return Err(SimulationError::DimensionMismatch { expected: network.num_species(), got: x0.len() });
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(SimulationError::InvalidTime(format!("t_end = {t_end} must be positive and finite")));
    }
    Ok(())
}

fn rng_for(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// One exact trajectory. Identical inputs give identical output.
pub fn simulate(network: &ReactionNetwork, x0: &[u64], t_end: f64, seed: u64) -> Result<Trajectory, SimulationError> {
    check_inputs(network, x0, t_end)?;
    let c = Compiled::new(network)?;
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut fired = Vec::new();
    c.run(x0, t_end, &mut rng_for(seed, 0), |_, _, _| {}, |t, k, x| {
        times.push(t);
        states.push(x.to_vec());
        fired.push(k);
    })?;
    Ok(Trajectory { species: c.species, times, states, fired, t_end })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryEstimate {
    pub species: Vec<String>,
    pub mean: Vec<f64>,
    /// Standard error across runs; `NaN` for a single run.
    pub std_error: Vec<f64>,
    pub runs: usize,
    pub window: (f64, f64),
}

/// Time-weighted mean of every species over `[burn_in · t_end, t_end]`,
/// averaged over `runs` independent runs.
pub fn stationary_mean(
    network: &ReactionNetwork,
    x0: &[u64],
    t_end: f64,
    burn_in: f64,
    runs: usize,
    seed: u64,
    execution: Execution,
) -> Result<StationaryEstimate, SimulationError> {
    check_inputs(network, x0, t_end)?;
    if !(0.0..1.0).contains(&burn_in) {
        return Err(SimulationError::InvalidTime(format!("burn-in fraction {burn_in} must lie in [0, 1)")));
    }
    if runs == 0 {
        return Err(SimulationError::NoRuns);
    }
    let c = Compiled::new(network)?;
    let d = network.num_species();
    let start = burn_in * t_end;
    let width = t_end - start;
    let per_run = map_indexed(execution, runs, |run| -> Result<Vec<f64>, SimulationError> {
        let mut parts: Vec<Vec<f64>> = vec![Vec::new(); d];
        c.run(x0, t_end, &mut rng_for(seed, run as u64), |t0, t1, x| {
            let lo = t0.max(start);
            if t1 > lo {
                for (i, p) in parts.iter_mut().enumerate() {
                    p.push(x[i] as f64 * (t1 - lo));
                }
            }
        }, |_, _, _| {})?;
        Ok(parts.into_iter().map(|p| kahan_sum(p) / width).collect())
    });
    let per_run = per_run.into_iter().collect::<Result<Vec<_>, _>>()?;
    let n = runs as f64;
    let mean: Vec<f64> = (0..d).map(|i| kahan_sum(per_run.iter().map(|r| r[i])) / n).collect();
    let std_error = (0..d)
        .map(|i| {
            if runs < 2 {
                return f64::NAN;
            }
            let var = kahan_sum(per_run.iter().map(|r| (r[i] - mean[i]).powi(2))) / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();
    Ok(StationaryEstimate { species: c.species, mean, std_error, runs, window: (start, t_end) })
}

/// Closed-loop network with the controller appended.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub network: ReactionNetwork,
    /// Indices of the two controller species.
    pub controller_species: (usize, usize),
    /// Renamings made to avoid collisions.
    pub notes: Vec<String>,
}

fn fresh(base: &str, taken: impl Fn(&str) -> bool, notes: &mut Vec<String>, what: &str) -> String {
    if !taken(base) {
        return base.to_string();
    }
    let name = (1..).map(|i| format!("{base}_{i}")).find(|n| !taken(n)).expect("unbounded suffixes");
    notes.push(format!("{what} `{base}` already exists; using `{name}`"));
    name
}

/// Appends `∅ → Z1 @ μ`, `X_ℓ → X_ℓ + Z2 @ θ`, `Z1 + Z2 → ∅ @ η` and
/// `Z1 → Z1 + X_act @ k`.
pub fn augment_antithetic(network: &ReactionNetwork, spec: &ControllerSpec) -> Result<ClosedLoop, SimulationError> {
    network.ensure_valid()?;
    spec.validate(network.num_species()).map_err(|e| SimulationError::InvalidController(e.to_string()))?;
    let mut notes = Vec::new();
    let mut out = network.clone();
    let z1 = fresh("Z1", |n| out.species_index(n).is_some(), &mut notes, "species");
    out.species.push(z1);
    let z2 = fresh("Z2", |n| out.species_index(n).is_some(), &mut notes, "species");
    out.species.push(z2);
    let (i1, i2) = (out.species.len() - 2, out.species.len() - 1);
    let mut names = Vec::new();
    for (base, value) in [("mu", spec.mu), ("theta", spec.theta), ("eta", spec.eta), ("k", spec.k)] {
        let name = fresh(base, |n| out.param(n).is_some(), &mut notes, "parameter");
        out.params.push(RateParam::fixed(name.clone(), value));
        names.push(name);
    }
    let (l, act) = (spec.controlled, spec.actuated);
    out.reactions.push(Reaction::new([], [(i1, 1)], names[0].clone()));
    out.reactions.push(Reaction::new([(l, 1)], [(l, 1), (i2, 1)], names[1].clone()));
    out.reactions.push(Reaction::new([(i1, 1), (i2, 1)], [], names[2].clone()));
    out.reactions.push(Reaction::new([(i1, 1)], [(i1, 1), (act, 1)], names[3].clone()));
    Ok(ClosedLoop { network: out, controller_species: (i1, i2), notes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_network;

    #[test]
    fn pure_death_takes_five_jumps() {
        let n = parse_network("species: X\nparam g = 1\nreaction: X -> 0 @ g\n").unwrap();
        let t = simulate(&n, &[5], 1e6, 1).unwrap();
        assert_eq!(t.num_jumps(), 5);
        assert_eq!(t.final_state(), &[0]);
    }

    #[test]
    fn annihilation_single_jump() {
        let n = parse_network("species: A, B\nparam e = 1\nreaction: A + B -> 0 @ e\n").unwrap();
        let t = simulate(&n, &[1, 1], 1e6, 2).unwrap();
        assert_eq!(t.num_jumps(), 1);
        assert_eq!(t.final_state(), &[0, 0]);
    }

    #[test]
    fn dimerization_propensity_uses_falling_factorial() {
        let n = parse_network("species: X\nparam k = 2\nreaction: 2 X -> 0 @ k\n").unwrap();
        let c = Compiled::new(&n).unwrap();
        assert_eq!(c.propensity(0, &[3]), 12.0);
        assert_eq!(c.propensity(0, &[1]), 0.0);
    }

    #[test]
    fn no_reactions_keeps_initial_state() {
        let n = parse_network("species: X\n").unwrap();
        let est = stationary_mean(&n, &[7], 10.0, 0.5, 3, 0, Execution::Sequential).unwrap();
        assert_eq!(est.mean, vec![7.0]);
    }

    #[test]
    fn augmenting_twice_renames() {
        let n = parse_network("species: X\nparam g = 1\nreaction: X -> 0 @ g\n").unwrap();
        let spec = ControllerSpec::new(0, 1.0, 1.0);
        let once = augment_antithetic(&n, &spec).unwrap();
        assert_eq!(once.network.num_species(), 3);
        assert_eq!(once.network.reactions.len(), 5);
        let twice = augment_antithetic(&once.network, &spec).unwrap();
        assert_eq!(twice.network.species[3..], ["Z1_1".to_string(), "Z2_1".to_string()]);
        assert_eq!(twice.notes.len(), 6);
    }

    #[test]
    fn wrong_dimension() {
        let n = parse_network("species: X\n").unwrap();
        assert!(matches!(simulate(&n, &[1, 2], 1.0, 0), Err(SimulationError::DimensionMismatch { .. })));
    }
}
