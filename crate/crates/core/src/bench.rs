//! Benchmark harness.
//!
//! Every measured run instantiates the module afresh, installs the variant's
//! probes, and then times the start function plus the entry call with a
//! monotonic clock. Each variant is run `reps` times and summarized by its
//! median. Overheads are reported against the uninstrumented run of the
//! probe-capable engine (`T_u`): absolute `T_i - T_u` and relative
//! `T_i / T_u`.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::rc::Rc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::error::{ExecError, LinkError, MonitorError};
use crate::exec::{Imports, Instance};
use crate::instrument::{Instrumentation, Probe};
use crate::module::Module;
use crate::monitors::{self, Monitor, UnknownMonitor};
use crate::types::Value;

pub const DEFAULT_REPS: usize = 5;

/// What one benchmark row runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Variant {
    /// The dispatch loop compiled without probe support.
    Stripped,
    /// The probe-capable engine with no probes installed.
    Uninstrumented,
    /// A monitor from the registry, by name (`name` or `name:variant`).
    Monitor(String),
    /// The probe placement of a monitor, with every probe replaced by one
    /// that does nothing. Isolates probe dispatch cost from monitor code.
    EmptyProbes(String),
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Stripped => f.write_str("(stripped)"),
            Variant::Uninstrumented => f.write_str("(none)"),
            Variant::Monitor(m) => f.write_str(m),
            Variant::EmptyProbes(m) => write!(f, "{m} [empty]"),
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    UnknownMonitor(#[from] UnknownMonitor),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("{variant}: {error}")]
    Exec { variant: String, error: ExecError },
    #[error("at least one repetition is required")]
    NoRepetitions,
}

/// A deterministic program to benchmark.
pub struct Program<'a> {
    pub module: Rc<Module>,
    /// Builds the imports of each fresh instance.
    pub imports: &'a dyn Fn() -> Imports,
    pub entry: &'a str,
    pub args: &'a [Value],
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub variant: Variant,
    pub samples: Vec<Duration>,
    pub median: Duration,
}

impl Measurement {
    /// `T_i / T_u` against `baseline`.
    pub fn relative(&self, baseline: &Measurement) -> f64 {
        self.median.as_secs_f64() / baseline.median.as_secs_f64().max(1e-12)
    }

    /// `T_i - T_u` against `baseline`, in seconds; negative when faster.
    pub fn overhead(&self, baseline: &Measurement) -> f64 {
        self.median.as_secs_f64() - baseline.median.as_secs_f64()
    }
}

/// The run-to-run state of the program differed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonDeterministicFixture {
    pub variant: Variant,
}

impl fmt::Display for NonDeterministicFixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "warning: final program state differs between runs of {}; timings may not be comparable",
            self.variant
        )
    }
}

#[derive(Debug, Clone)]
pub struct BenchTable {
    /// `T_u`.
    pub baseline: Measurement,
    pub rows: Vec<Measurement>,
    pub warnings: Vec<NonDeterministicFixture>,
}

impl BenchTable {
    pub fn row(&self, variant: &Variant) -> Option<&Measurement> {
        self.rows.iter().find(|m| &m.variant == variant)
    }

    pub fn relative(&self, variant: &Variant) -> Option<f64> {
        self.row(variant).map(|m| m.relative(&self.baseline))
    }
}

impl fmt::Display for BenchTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ms = |d: Duration| format!("{:.3}", d.as_secs_f64() * 1e3);
        let rows: Vec<Vec<String>> = std::iter::once(&self.baseline)
            .chain(&self.rows)
            .map(|m| {
                vec![
                    m.variant.to_string(),
                    m.samples.len().to_string(),
                    ms(m.median),
                    format!("{:+.3}", m.overhead(&self.baseline) * 1e3),
                    format!("{:.3}", m.relative(&self.baseline)),
                ]
            })
            .collect();
        f.write_str(&monitors::table(
            &["variant", "runs", "median_ms", "overhead_ms", "relative"],
            &rows,
        ))?;
        for w in &self.warnings {
            writeln!(f, "{w}")?;
        }
        Ok(())
    }
}

/// Median of `samples`; the mean of the two middle values for even counts.
pub fn median(samples: &[Duration]) -> Duration {
    let mut s = samples.to_vec();
    s.sort();
    match s.len() {
        0 => Duration::ZERO,
        n if n % 2 == 1 => s[n / 2],
        n => (s[n / 2 - 1] + s[n / 2]) / 2,
    }
}

/// Measures `T_u` and every variant, `reps` times each. Repetitions are
/// interleaved round-robin across variants so that slow drift of the machine
/// affects all variants alike.
pub fn bench(program: &Program<'_>, variants: &[Variant], reps: usize) -> Result<BenchTable, BenchError> {
    if reps == 0 {
        return Err(BenchError::NoRepetitions);
    }
    let all: Vec<Variant> = std::iter::once(Variant::Uninstrumented)
        .chain(variants.iter().cloned())
        .collect();
    let mut samples = vec![Vec::with_capacity(reps); all.len()];
    let mut fingerprints = vec![Vec::with_capacity(reps); all.len()];
    for _ in 0..reps {
        for (i, v) in all.iter().enumerate() {
            let (elapsed, fp) = run_once(program, v)?;
            samples[i].push(elapsed);
            fingerprints[i].push(fp);
        }
    }
    let warnings = all
        .iter()
        .zip(&fingerprints)
        .filter(|(_, fps)| fps.windows(2).any(|w| w[0] != w[1]))
        .map(|(v, _)| NonDeterministicFixture { variant: v.clone() })
        .collect();
    let mut rows: Vec<Measurement> = all
        .into_iter()
        .zip(samples)
        .map(|(variant, samples)| Measurement {
            variant,
            median: median(&samples),
            samples,
        })
        .collect();
    let baseline = rows.remove(0);
    Ok(BenchTable {
        baseline,
        rows,
        warnings,
    })
}

fn run_once(program: &Program<'_>, variant: &Variant) -> Result<(Duration, u64), BenchError> {
    let mut instance = Instance::new_unstarted(program.module.clone(), &(program.imports)())?;
    // Kept alive for the duration of the run: monitor state is shared with
    // the probes.
    let mut _monitor: Option<Box<dyn Monitor>> = None;
    match variant {
        Variant::Stripped | Variant::Uninstrumented => {}
        Variant::Monitor(spec) => {
            let mut m = monitors::create(spec)?;
            m.on_load(instance.instrumentation_mut())?;
            _monitor = Some(m);
        }
        Variant::EmptyProbes(spec) => {
            let mut scratch = Instance::new_unstarted(program.module.clone(), &(program.imports)())?;
            let mut m = monitors::create(spec)?;
            m.on_load(scratch.instrumentation_mut())?;
            replicate_empty(scratch.instrumentation(), instance.instrumentation_mut())?;
        }
    }
    let t0 = Instant::now();
    let result = match variant {
        Variant::Stripped => instance
            .run_start()
            .and_then(|_| instance.invoke_stripped(program.entry, program.args)),
        _ => instance
            .run_start()
            .and_then(|_| instance.invoke(program.entry, program.args)),
    };
    let elapsed = t0.elapsed();
    let result = match result {
        Err(ExecError::Trap(t)) => Err(t),
        Err(error) => {
            return Err(BenchError::Exec {
                variant: variant.to_string(),
                error,
            })
        }
        Ok(v) => Ok(v),
    };
    let mut h = DefaultHasher::new();
    format!("{result:?}").hash(&mut h);
    instance.memory().hash(&mut h);
    format!("{:?}", instance.globals()).hash(&mut h);
    Ok((elapsed, h.finish()))
}

/// Installs, into `to`, an empty probe for every probe installed in `from`,
/// at the same locations and in the same numbers.
pub fn replicate_empty(from: &Instrumentation, to: &mut Instrumentation) -> Result<(), MonitorError> {
    for (loc, list) in from.local_probes() {
        for _ in 0..list.len() {
            to.insert_probe(loc, Probe::empty())?;
        }
    }
    for _ in 0..from.global_probes().len() {
        to.insert_global_probe(Probe::empty())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        let d = Duration::from_millis;
        assert_eq!(median(&[d(5), d(1), d(3)]), d(3));
        assert_eq!(median(&[d(4), d(1), d(2), d(3)]), Duration::from_micros(2500));
        assert_eq!(median(&[]), Duration::ZERO);
    }
}
