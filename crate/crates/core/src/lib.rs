//! Anisotropic (Finsler) N-Laplacian exterior problems in convex cones.
//!
//! The crate is organized bottom-up:
//! - [`gauge`]: gauges `H`, duals `H₀`, flux maps and structural checks
//! - [`geometry`]: cones, obstacles, truncated regions and their meshes
//! - [`wulff`]: anisotropic perimeter, volume and isoperimetric deficit
//! - [`solver`]: the truncated mixed problem and its asymptotic constants
//! - [`identities`]: Pohozaev, flux balance, capacity constant and rigidity

pub mod gauge;
pub mod identities;
pub mod geometry;
pub mod quadrature;
pub mod solver;
pub mod wulff;

pub use gauge::{DualGauge, FluxMap, Gauge, GaugeError, GaugeKind};
pub use geometry::{build_region, mesh_region, BoundaryTag, ConvexCone, GeometryError, Mesh, ObstacleDomain, ObstacleShape, Region};
