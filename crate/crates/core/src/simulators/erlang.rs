//! Erlang-R queue: `s` servers, FCFS, exponential treatment. A treated
//! patient returns with probability `p` after an exponential content delay,
//! otherwise leaves. Patients waiting or in treatment are *needy*; those in
//! the delay are *content*.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nhpp::{nhpp_arrival_times, RateFunction, MCE_AVERAGE_RATE, MCE_HORIZON};
use super::RandomSource;
use crate::error::{Error, Result};
use crate::pathset::SamplePathSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    #[default]
    Needy,
    TotalInSystem,
}

impl std::str::FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "needy" => Ok(Self::Needy),
            "total-in-system" => Ok(Self::TotalInSystem),
            other => Err(Error::Model(format!("unknown observable {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    #[default]
    Empty,
    Counts { needy: u32, content: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErlangRModel {
    pub servers: u32,
    /// Minutes.
    pub mean_service: f64,
    /// Minutes.
    pub mean_content_delay: f64,
    pub p_return: f64,
    pub arrival_rate: RateFunction,
    pub horizon_minutes: f64,
    pub sample_steps: usize,
    pub observable: Observable,
    pub initial_state: InitialState,
}

impl Default for ErlangRModel {
    fn default() -> Self {
        Self {
            servers: 4,
            mean_service: 5.4,
            mean_content_delay: 24.6,
            p_return: 0.662,
            arrival_rate: RateFunction::mce(),
            horizon_minutes: MCE_HORIZON,
            sample_steps: 30,
            observable: Observable::Needy,
            initial_state: InitialState::Empty,
        }
    }
}

impl ErlangRModel {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Model(m.to_string()));
        if self.servers == 0 {
            return fail("at least one server is required");
        }
        if !(0.0..1.0).contains(&self.p_return) {
            return fail("return probability must lie in [0,1)");
        }
        if !(self.mean_service > 0.0 && self.mean_content_delay > 0.0) {
            return fail("mean service and content delay must be positive");
        }
        if !(self.horizon_minutes > 0.0 && self.horizon_minutes.is_finite()) {
            return fail("horizon must be positive");
        }
        if self.sample_steps == 0 {
            return fail("at least one sample step is required");
        }
        self.arrival_rate.validate()
    }

    /// Per-hour treatment and return rates.
    pub fn hourly_rates(&self) -> (f64, f64) {
        (60.0 / self.mean_service, 60.0 / self.mean_content_delay)
    }

    /// Sampling epochs: the left endpoint of each of the `H` intervals.
    pub fn sample_times(&self) -> Vec<f64> {
        let h = self.sample_steps;
        (0..h)
            .map(|i| i as f64 * self.horizon_minutes / h as f64)
            .collect()
    }
}

/// The same model with a constant arrival rate equal to the drill average.
pub fn average_rate_model(model: &ErlangRModel) -> ErlangRModel {
    ErlangRModel {
        arrival_rate: RateFunction::constant(MCE_AVERAGE_RATE, model.horizon_minutes),
        ..model.clone()
    }
}

/// System state after an event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErlangState {
    pub time: f64,
    pub needy: u32,
    pub content: u32,
    pub busy: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Completion,
    Return,
}

struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

struct Sim<'m, R> {
    model: &'m ErlangRModel,
    rng: R,
    service: Exp<f64>,
    delay: Exp<f64>,
    events: BinaryHeap<Event>,
    seq: u64,
    state: ErlangState,
}

impl<R: Rng> Sim<'_, R> {
    fn schedule(&mut self, time: f64, kind: Kind) {
        self.seq += 1;
        self.events.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn join_needy(&mut self) {
        self.state.needy += 1;
        if self.state.busy < self.model.servers {
            self.state.busy += 1;
            let d = self.service.sample(&mut self.rng);
            self.schedule(self.state.time + d, Kind::Completion);
        }
    }

    fn complete(&mut self) {
        self.state.needy -= 1;
        self.state.busy -= 1;
        if self.rng.random::<f64>() < self.model.p_return {
            self.state.content += 1;
            let d = self.delay.sample(&mut self.rng);
            self.schedule(self.state.time + d, Kind::Return);
        }
        if self.state.needy > self.state.busy {
            self.state.busy += 1;
            let d = self.service.sample(&mut self.rng);
            self.schedule(self.state.time + d, Kind::Completion);
        }
    }

    fn observe(&self) -> f64 {
        match self.model.observable {
            Observable::Needy => self.state.needy as f64,
            Observable::TotalInSystem => (self.state.needy + self.state.content) as f64,
        }
    }
}

/// One path, calling `observer` with the state after every event.
pub fn simulate_erlang_path_with<R: Rng>(
    model: &ErlangRModel,
    mut rng: R,
    mut observer: impl FnMut(&ErlangState),
) -> Result<Vec<f64>> {
    model.validate()?;
    let rate = RateFunction {
        horizon: model.horizon_minutes,
        ..model.arrival_rate.clone()
    };
    let arrivals = nhpp_arrival_times(&rate, &mut rng);
    let mut sim = Sim {
        model,
        rng,
        service: Exp::new(1.0 / model.mean_service).expect("positive mean"),
        delay: Exp::new(1.0 / model.mean_content_delay).expect("positive mean"),
        events: BinaryHeap::new(),
        seq: 0,
        state: ErlangState {
            time: 0.0,
            needy: 0,
            content: 0,
            busy: 0,
        },
    };
    if let InitialState::Counts { needy, content } = model.initial_state {
        for _ in 0..needy {
            sim.join_needy();
        }
        for _ in 0..content {
            sim.state.content += 1;
            let d = sim.delay.sample(&mut sim.rng);
            sim.schedule(d, Kind::Return);
        }
        observer(&sim.state);
    }

    let mut samples = Vec::with_capacity(model.sample_steps);
    let mut next_arrival = 0usize;
    for tau in model.sample_times() {
        loop {
            let arrival = arrivals.get(next_arrival).copied().unwrap_or(f64::INFINITY);
            let internal = sim.events.peek().map_or(f64::INFINITY, |e| e.time);
            let t = arrival.min(internal);
            if t > tau {
                break;
            }
            sim.state.time = t;
            if arrival <= internal {
                next_arrival += 1;
                sim.join_needy();
            } else {
                let ev = sim.events.pop().expect("peeked");
                match ev.kind {
                    Kind::Completion => sim.complete(),
                    Kind::Return => {
                        sim.state.content -= 1;
                        sim.join_needy();
                    }
                }
            }
            observer(&sim.state);
        }
        samples.push(sim.observe());
    }
    Ok(samples)
}

/// `n` sampled paths; path `i` uses stream `src.stream + i`.
pub fn simulate_erlang_r(model: &ErlangRModel, n: usize, src: RandomSource) -> Result<SamplePathSet> {
    model.validate()?;
    if n == 0 {
        return Err(Error::Model("number of paths must be at least 1".into()));
    }
    let rows = (0..n as u64)
        .into_par_iter()
        .map(|i| simulate_erlang_path_with(model, src.offset(i).rng(), |_| {}))
        .collect::<Result<Vec<_>>>()?;
    SamplePathSet::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_arrivals_stays_empty() {
        let model = ErlangRModel {
            arrival_rate: RateFunction::constant(0.0, 120.0),
            ..ErlangRModel::default()
        };
        let set = simulate_erlang_r(&model, 5, RandomSource::new(2)).unwrap();
        assert!(set.paths().all(|p| p.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn default_model_shape() {
        let set = simulate_erlang_r(&ErlangRModel::default(), 300, RandomSource::new(1)).unwrap();
        assert_eq!((set.n(), set.horizon()), (300, 30));
        for p in set.paths() {
            assert_eq!(p[0], 0.0);
            assert!(p.iter().all(|&x| x >= 0.0 && x.fract() == 0.0));
        }
    }

    #[test]
    fn state_is_consistent_at_every_event() {
        let model = ErlangRModel {
            initial_state: InitialState::Counts { needy: 7, content: 3 },
            ..ErlangRModel::default()
        };
        for s in 0..20 {
            let mut events = 0;
            simulate_erlang_path_with(&model, RandomSource::with_stream(5, s).rng(), |st| {
                events += 1;
                assert_eq!(st.busy, st.needy.min(model.servers));
            })
            .unwrap();
            assert!(events > 10);
        }
    }

    #[test]
    fn sample_times_are_left_endpoints() {
        let t = ErlangRModel::default().sample_times();
        assert_eq!(t.len(), 30);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[1], 4.0);
        assert_eq!(t[29], 116.0);
    }

    #[test]
    fn average_rate_model_is_idempotent() {
        let m = average_rate_model(&ErlangRModel::default());
        assert_eq!(m.arrival_rate.eval(50.0).unwrap(), MCE_AVERAGE_RATE);
        assert_eq!(m.arrival_rate.eval(0.0).unwrap(), MCE_AVERAGE_RATE);
        assert_eq!(m.arrival_rate.eval(120.0).unwrap(), MCE_AVERAGE_RATE);
        assert_eq!(average_rate_model(&m), m);
    }
}
