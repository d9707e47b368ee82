pub mod arms;
pub mod connectivity;
pub mod content;
pub mod error;
pub mod faces;
pub mod geometry;
pub mod harness;
pub mod interface;
pub mod lattice;
pub mod metrics;
pub mod percolation;
pub mod util;

pub use arms::{arm_event, estimate_alpha, AnnulusSpec, ArmEstimate, ArmPattern};
pub use content::{box_count, beta_estimate, interface_measure, minkowski_estimate, pivotal_measure, AtomicMeasure, BoxCountResult, ContentProfile, Shape};
pub use connectivity::{four_point_event, pivotal_sites, quad_crossing, Definition, FourPoint, PivotalSet, QuadSpec};
pub use error::{Error, Result};
pub use faces::{event_g, induced_face, InducedFace};
pub use harness::{run_experiment, ExperimentConfig, Summary};
pub use geometry::{BoxSpec, Point, Polygon, Rect, Region};
pub use interface::{natural_parametrization, trace_interface, DiscreteCurve, ParametrizedCurve};
pub use lattice::{Cell, DualEdge, JordanDomainSpec, LatticeDomain, SiteCoord};
pub use metrics::{du_distance, rho_distance, Polyline};
pub use percolation::{BoundaryCondition, Color, Coloring, RngStream};
