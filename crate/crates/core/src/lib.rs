pub mod error;
pub mod numfmt;
pub mod poly;

pub use error::{MapError, ParseError, PolyError, SmaleError, TraceError};
pub use poly::{ComplexScalar, Polynomial, RootCluster, RootOptions};
pub mod rational;
pub use rational::{PhaseGradient, RationalMap, RationalMapSpec, WValue};
pub mod field;
pub use field::{BBox, GridField, Polyline, Region, Threshold};
pub mod tracer;
pub use tracer::{LocusPoint, LocusTrace, MonotoneReport, Origin, Seed, Terminus, TraceOptions};
pub mod smale;
pub use smale::{
    adjacent_domains, audit_theorems, build_w, critical_points, extremal_search, limit_at_critical_point,
    smale_quotient, AuditConfig, Counterexample, CounterexampleKind, CriticalPoint, Extremal, SmaleAuditReport,
    SmaleCase,
};
pub mod report;
pub mod svg;
pub use report::{run, sweep, Command, Format, Input, RunConfig, RunError, SweepConfig, SweepReport};
