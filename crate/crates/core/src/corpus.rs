//! Bundled benchmark models and their reference results.
//!
//! The `.gcl` sources live in the crate's `corpus/` directory and are embedded
//! here so that the `corpus` subcommand and the test suites work without any
//! filesystem layout assumptions.

pub const TICKET2: &str = include_str!("../corpus/ticket2.gcl");
pub const TICKET2_ERR: &str = include_str!("../corpus/ticket2_err.gcl");
pub const TICKET3: &str = include_str!("../corpus/ticket3.gcl");
pub const TICKET3_ERR: &str = include_str!("../corpus/ticket3_err.gcl");
pub const RAX: &str = include_str!("../corpus/rax.gcl");
pub const RAX_ERR: &str = include_str!("../corpus/rax_err.gcl");
pub const BAKERY: &str = include_str!("../corpus/bakery.gcl");
pub const BAKERY_ERR: &str = include_str!("../corpus/bakery_err.gcl");
pub const DRIVER: &str = include_str!("../corpus/driver.gcl");
pub const DRIVER_ERR: &str = include_str!("../corpus/driver_err.gcl");
pub const REJOIN: &str = include_str!("../corpus/rejoin.gcl");
pub const PUMP: &str = include_str!("../corpus/pump.gcl");
pub const ADDLOOP: &str = include_str!("../corpus/addloop.gcl");
pub const COUNTDOWN: &str = include_str!("../corpus/countdown.gcl");
pub const THRESHOLD: &str = include_str!("../corpus/threshold.gcl");

/// Expected verdict of a benchmark run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedVerdict {
    ErrorFound,
    Unreachable,
    Undecided,
}

/// Reference row for the benchmark table: name, source, expected verdict and
/// iteration count, and (for runs proving unreachability) the per-iteration
/// generated-concrete/stored-abstract state counts.
pub struct BenchRow {
    pub name: &'static str,
    pub source: &'static str,
    pub assumes: bool,
    pub expect: ExpectedVerdict,
    pub iterations: Option<usize>,
    pub concrete: &'static [u64],
    pub abstract_: &'static [u64],
}

/// The ten benchmark configurations of the reference table. The `rax` row
/// diverges (its refinement never stabilizes without extra invariants), and
/// `rax_assume` is the same program with the counters assumed non-negative.
pub const BENCH_ROWS: &[BenchRow] = &[
    BenchRow {
        name: "ticket2-err",
        source: TICKET2_ERR,
        assumes: false,
        expect: ExpectedVerdict::ErrorFound,
        iterations: Some(2),
        concrete: &[],
        abstract_: &[],
    },
    BenchRow {
        name: "ticket3-err",
        source: TICKET3_ERR,
        assumes: false,
        expect: ExpectedVerdict::ErrorFound,
        iterations: Some(1),
        concrete: &[],
        abstract_: &[],
    },
    BenchRow {
        name: "rax-err",
        source: RAX_ERR,
        assumes: false,
        expect: ExpectedVerdict::ErrorFound,
        iterations: Some(1),
        concrete: &[],
        abstract_: &[],
    },
    BenchRow {
        name: "bakery-err",
        source: BAKERY_ERR,
        assumes: false,
        expect: ExpectedVerdict::ErrorFound,
        iterations: Some(1),
        concrete: &[],
        abstract_: &[],
    },
    BenchRow {
        name: "driver-err",
        source: DRIVER_ERR,
        assumes: false,
        expect: ExpectedVerdict::ErrorFound,
        iterations: Some(1),
        concrete: &[],
        abstract_: &[],
    },
    BenchRow {
        name: "ticket2",
        source: TICKET2,
        assumes: false,
        expect: ExpectedVerdict::Unreachable,
        iterations: Some(4),
        concrete: &[15, 15, 15, 15],
        abstract_: &[9, 9, 9, 9],
    },
    BenchRow {
        name: "ticket3",
        source: TICKET3,
        assumes: false,
        expect: ExpectedVerdict::Unreachable,
        iterations: Some(5),
        concrete: &[52, 58, 58, 58, 58],
        abstract_: &[25, 31, 31, 31, 31],
    },
    BenchRow {
        name: "rax",
        source: RAX,
        assumes: false,
        expect: ExpectedVerdict::Undecided,
        iterations: None,
        concrete: &[],
        abstract_: &[],
    },
    BenchRow {
        name: "rax-assume",
        source: RAX,
        assumes: true,
        expect: ExpectedVerdict::Unreachable,
        iterations: Some(2),
        concrete: &[69, 101],
        abstract_: &[44, 65],
    },
    BenchRow {
        name: "bakery",
        source: BAKERY,
        assumes: false,
        expect: ExpectedVerdict::Unreachable,
        iterations: Some(3),
        concrete: &[278, 410, 537],
        abstract_: &[152, 221, 292],
    },
    BenchRow {
        name: "driver",
        source: DRIVER,
        assumes: false,
        expect: ExpectedVerdict::Unreachable,
        iterations: Some(1),
        concrete: &[10],
        abstract_: &[9],
    },
];
