//! Test support shared by the wasmprobe crates: the fixture corpus and an
//! independent reference interpreter ([`oracle`]).

pub mod oracle;

pub use oracle::Val;

/// One program of the fixture corpus.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub wat: &'static str,
    /// Exported function to invoke.
    pub entry: &'static str,
    pub args: Vec<Val>,
}

impl Fixture {
    pub fn wasm(&self) -> Vec<u8> {
        wat::parse_str(self.wat).unwrap_or_else(|e| panic!("fixture {}: {e}", self.name))
    }

    /// Runs the fixture on the reference interpreter.
    pub fn oracle(&self) -> oracle::Trace {
        self.oracle_with(&oracle::Config::new())
    }

    pub fn oracle_with(&self, cfg: &oracle::Config) -> oracle::Trace {
        oracle::run(&self.wasm(), self.entry, &self.args, cfg)
            .unwrap_or_else(|e| panic!("fixture {}: {e}", self.name))
    }

    /// Whether the fixture imports the `env` host functions.
    pub fn needs_env(&self) -> bool {
        self.wat.contains("(import \"env\"")
    }
}

macro_rules! fixture {
    ($name:literal, $entry:literal, [$($arg:expr),*]) => {
        Fixture {
            name: $name,
            wat: include_str!(concat!("../fixtures/", $name, ".wat")),
            entry: $entry,
            args: vec![$($arg),*],
        }
    };
}

/// Iteration count of `hot_loop` giving 1.1 * 10^8 executed loop instructions.
pub const HOT_LOOP_ITERATIONS: i32 = 10_000_000;

/// The whole corpus, in a stable order. `hot_loop` runs a short 1000
/// iterations here; benchmarks pass [`HOT_LOOP_ITERATIONS`] instead.
pub fn fixtures() -> Vec<Fixture> {
    vec![
        fixture!("loop3", "main", []),
        fixture!("empty", "main", []),
        fixture!("arith_i32", "main", [Val::I32(-1_234_567), Val::I32(37)]),
        fixture!("arith_i64", "main", [Val::I64(-98_765_432_123), Val::I64(1_000_003)]),
        fixture!("float_f32", "main", [Val::F32(2.75f32.to_bits()), Val::F32((-0.5f32).to_bits())]),
        fixture!("float_f64", "main", [Val::F64(6.5f64.to_bits()), Val::F64((-3.25f64).to_bits())]),
        fixture!("conversions", "main", [Val::F64((-123.75f64).to_bits())]),
        fixture!("memory", "main", []),
        fixture!("globals", "main", [Val::I32(5)]),
        fixture!("branches", "main", []),
        fixture!("calls", "main", []),
        fixture!("call_indirect", "main", []),
        fixture!("nested_loops", "main", []),
        fixture!("factorial", "main", []),
        fixture!("loop_entry", "main", []),
        fixture!("host_print", "main", []),
        fixture!("hot_loop", "main", [Val::I32(1000)]),
        fixture!("trap_div", "main", []),
        fixture!("trap_oob", "main", []),
        fixture!("trap_unreachable", "main", []),
        fixture!("trap_stack", "main", []),
        fixture!("trap_indirect", "main", []),
    ]
}

pub fn fixture(name: &str) -> Fixture {
    fixtures()
        .into_iter()
        .find(|f| f.name == name)
        .unwrap_or_else(|| panic!("no fixture named {name}"))
}

/// Fixture names used by the benchmarks: the hot loop with its full
/// iteration count.
pub fn hot_loop(iterations: i32) -> Fixture {
    Fixture {
        args: vec![Val::I32(iterations)],
        ..fixture("hot_loop")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use oracle::{BranchTally, Outcome};

    #[test]
    fn corpus_is_large_enough_and_assembles() {
        let all = fixtures();
        assert!(all.len() >= 15);
        for f in &all {
            assert!(!f.wasm().is_empty());
        }
    }

    #[test]
    fn loop3_tallies() {
        let t = fixture("loop3").oracle();
        assert_eq!(t.outcome, Outcome::Returned(vec![]));
        assert_eq!(t.loop_headers.iter().copied().collect::<Vec<_>>(), vec![(0, 6)]);
        assert_eq!(t.count(0, 6), 3);
        assert_eq!(t.branches[&(0, 13)], BranchTally::Cond { taken: 2, not_taken: 1 });
        // 2 setup, `loop`, 3 × 5 body, the loop's `end`, the final `end`.
        assert_eq!(t.total, 2 + 1 + 15 + 1 + 1);
    }

    #[test]
    fn br_table_histogram() {
        let t = fixture("branches").oracle();
        let tables: Vec<_> = t
            .branches
            .values()
            .filter_map(|b| match b {
                BranchTally::Table(h) => Some(h.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(tables, vec![vec![1, 2, 0, 1]]);
    }

    #[test]
    fn nested_loop_headers() {
        let t = fixture("nested_loops").oracle();
        let counts: Vec<u64> = t.loop_headers.iter().map(|&(f, p)| t.count(f, p)).collect();
        assert_eq!(counts, vec![2, 6]);
    }

    #[test]
    fn call_edges() {
        let t = fixture("calls").oracle();
        assert!(t.calls.values().any(|&n| n == 3));
        let t = fixture("call_indirect").oracle();
        let targets: Vec<(u32, u64)> = t.calls.iter().map(|(&(_, _, c), &n)| (c, n)).collect();
        assert_eq!(targets, vec![(0, 3), (1, 2)]);
    }

    #[test]
    fn factorial_and_traps() {
        let t = fixture("factorial").oracle();
        assert_eq!(t.outcome, Outcome::Returned(vec![Val::I64(24)]));
        let entries = t.frame_events.iter().filter(|e| matches!(e, oracle::FrameEvent::Entry(0))).count();
        assert_eq!(entries, 4);
        for (name, kind) in [
            ("trap_div", "divide-by-zero"),
            ("trap_oob", "out-of-bounds"),
            ("trap_unreachable", "unreachable"),
            ("trap_stack", "stack-exhausted"),
            ("trap_indirect", "indirect-call-mismatch"),
        ] {
            match fixture(name).oracle().outcome {
                Outcome::Trapped(t) => assert_eq!(t.kind, kind, "{name}"),
                other => panic!("{name}: {other:?}"),
            }
        }
    }

    #[test]
    fn memory_log_and_output() {
        let t = fixture("trap_oob").oracle();
        assert_eq!(t.memory_log.len(), 2);
        assert_eq!(t.memory_log[0].addr, 16);
        assert_eq!(t.memory_log[0].value, Some(Val::I32(7)));
        assert_eq!(t.memory_log[1].addr, 65533);
        let t = fixture("host_print").oracle();
        assert_eq!(t.output, "0\n1\n4\n9\n16\n");
        assert_eq!(t.outcome, Outcome::Returned(vec![Val::I32(30)]));
    }

    #[test]
    fn forced_condition_exits_loop3_early() {
        let mut cfg = oracle::Config::new();
        cfg.force_top.insert((0, 13, 1), Val::I32(0));
        let t = fixture("loop3").oracle_with(&cfg);
        assert_eq!(t.count(0, 6), 1);
        assert_eq!(t.branches[&(0, 13)], BranchTally::Cond { taken: 0, not_taken: 1 });
    }
}
