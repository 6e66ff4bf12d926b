//! Critical elements: location, return-map stability, connections and case diagnosis.

mod diagnose;
mod element;
mod find;
mod graph;
mod poincare;

pub use diagnose::{
    birkhoff_constant, certify_neighborhood, check_trapping, conley_check, diagnose_case, trapping_direction,
    BirkhoffReport, Case, CaseNeighborhood, ConleyReport, Diagnosis, Neighborhood, NeighborhoodCertificate, Role,
    ScalarField,
};
pub use element::{polyline_distance, CriticalElement, ElementKind, Stability};
pub use find::{find_critical_elements, find_singularities, SearchGrid};
pub use graph::{check_no_cycles, connection_graph, ConnectionGraph, CycleReport, Edge, GraphConfig, UnknownLimit};
pub use poincare::{classify_closed_orbit, PoincareMap};

use crate::error::Result;
use crate::flow::Flow;
use crate::sectors::{classify_singularity, DiskNeighborhood};

/// Disk radius used to classify the singularity at index `k`: well inside `eps0 / 2` and
/// clear of every other element.
pub fn disk_radius(flow: &Flow, elements: &[CriticalElement], k: usize, eps0: f64) -> f64 {
    let p = elements[k].anchor();
    let nearest = elements
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, e)| e.distance_to(flow.surface(), p))
        .fold(f64::INFINITY, f64::min);
    (0.45 * eps0).min(0.45 * nearest).min(0.5)
}

/// Fills in the stability of every element: sector verdicts for singularities, return-map
/// verdicts for closed orbits.
pub fn classify_elements(flow: &Flow, elements: &[CriticalElement], eps0: f64) -> Result<Vec<CriticalElement>> {
    let mut out = Vec::with_capacity(elements.len());
    for (k, e) in elements.iter().enumerate() {
        let stability = match &e.kind {
            ElementKind::Singularity { point } => {
                let disk = DiskNeighborhood::new(*point, disk_radius(flow, elements, k, eps0));
                Stability::SectorType(classify_singularity(flow, &disk)?.verdict)
            }
            ElementKind::ClosedOrbit { .. } => classify_closed_orbit(flow, e)?.0,
        };
        out.push(e.clone().with_stability(stability));
    }
    Ok(out)
}
