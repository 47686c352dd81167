//! Fixtures shared by the benches in `benches/`.

use teleop_core::world::{build_route, RouteGeometry, RouteId};
use teleop_core::{CameraModel, Frame, Renderer, VehicleState};

/// Vehicle centred on `route` at arc length `s`, at cruise speed.
pub fn pose_on(route: &RouteGeometry, s: f64) -> VehicleState {
    let ([x, y], h) = route.pose_at(s);
    VehicleState::new(x, y, h, 30.0 / 3.6, s)
}

/// Default-rig frames along route A: a straight, the tight turn, and the
/// long straight after it.
pub fn sample_frames() -> Vec<Frame> {
    let route = build_route(RouteId::A);
    let renderer = Renderer::new(CameraModel::default());
    [10.0, 55.0, 120.0]
        .into_iter()
        .map(|s| renderer.render(&route, &pose_on(&route, s)))
        .collect()
}
