//! Deterministic quasi-static stability labeler and settling model for
//! stacked rigid objects.
//!
//! An interface between two stacked objects is stable when the combined
//! center of mass of everything above it projects strictly inside the
//! convex intersection of the two footprints (the support region). The
//! tower is stable when every interface is. Friction is assumed large
//! enough to prevent sliding, so mass enters only through COM weighting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Polygon, DISK_SEGMENTS};
use crate::scene::{round6, ObjectSpec, ObjectStability, Scene, Shape, StabilityReport};

pub const DEFAULT_THRESHOLD: f64 = 0.05;
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Horizontal footprint of an object (or the ground).
#[derive(Debug, Clone, PartialEq)]
pub enum Footprint {
    Rect { center: Point, half: Point },
    Disk { center: Point, radius: f64 },
    Ground,
}

impl Footprint {
    pub fn of_object(obj: &ObjectSpec) -> Footprint {
        let center = obj.center_xy();
        match obj.shape {
            Shape::Cube | Shape::Cuboid => Footprint::Rect {
                center,
                half: [obj.dimensions.half_x, obj.dimensions.half_y],
            },
            Shape::Cylinder => Footprint::Disk { center, radius: obj.dimensions.half_x },
        }
    }

    pub fn polygon(&self) -> Option<Polygon> {
        match self {
            Footprint::Rect { center, half } => Some(Polygon::rect(*center, *half)),
            Footprint::Disk { center, radius } => {
                Some(Polygon::disk(*center, *radius, DISK_SEGMENTS))
            }
            Footprint::Ground => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Rect,
    Disk,
    IntersectionPolygon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportRegion {
    pub kind: RegionKind,
    /// Empty polygon means the footprints do not overlap.
    pub polygon: Polygon,
    pub area: f64,
}

impl SupportRegion {
    pub fn is_empty(&self) -> bool {
        self.polygon.is_empty()
    }
}

/// Convex intersection of two footprints; the ground acts as an infinite
/// footprint. Disjoint footprints give an explicitly empty region.
pub fn support_region(lower: &Footprint, upper: &Footprint) -> SupportRegion {
    let kind = match (lower, upper) {
        (Footprint::Ground, Footprint::Rect { .. }) | (Footprint::Rect { .. }, Footprint::Ground) => RegionKind::Rect,
        (Footprint::Ground, Footprint::Disk { .. }) | (Footprint::Disk { .. }, Footprint::Ground) => RegionKind::Disk,
        (Footprint::Rect { .. }, Footprint::Rect { .. }) => RegionKind::Rect,
        _ => RegionKind::IntersectionPolygon,
    };
    let polygon = match (lower.polygon(), upper.polygon()) {
        (Some(a), Some(b)) => a.intersect(&b),
        (Some(p), None) | (None, Some(p)) => p,
        (None, None) => Polygon::empty(),
    };
    let area = polygon.area();
    SupportRegion { kind, polygon, area }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceCheck {
    /// 0 = ground contact; interface j sits below object j.
    pub interface_index: usize,
    pub region: SupportRegion,
    /// Mass-weighted COM (x, y) of objects j..n-1.
    pub com_above: Point,
    /// Signed distance of the COM to the region boundary; positive inside.
    /// Empty region carries -inf.
    pub margin: f64,
    pub stable: bool,
}

/// One check per interface j = 0..n-1.
pub fn check_interfaces(scene: &Scene) -> Vec<InterfaceCheck> {
    check_interfaces_eps(scene, DEFAULT_EPSILON)
}

pub fn check_interfaces_eps(scene: &Scene, eps: f64) -> Vec<InterfaceCheck> {
    let n = scene.objects.len();
    let mut checks = Vec::with_capacity(n);
    for j in 0..n {
        let lower = if j == 0 {
            Footprint::Ground
        } else {
            Footprint::of_object(&scene.objects[j - 1])
        };
        let upper = Footprint::of_object(&scene.objects[j]);
        let region = support_region(&lower, &upper);
        let com_above = com_of(&scene.objects[j..]);
        let margin = region.polygon.signed_margin(com_above);
        // COM on or outside the boundary (|margin| <= eps) counts as
        // unstable: marginal stacks collapse in practice.
        let stable = margin > eps;
        checks.push(InterfaceCheck { interface_index: j, region, com_above, margin, stable });
    }
    checks
}

/// Mass-weighted horizontal COM of a sub-stack.
pub fn com_of(objects: &[ObjectSpec]) -> Point {
    let mut mx = 0.0;
    let mut my = 0.0;
    let mut m = 0.0;
    for obj in objects {
        let [x, y] = obj.center_xy();
        mx += obj.mass * x;
        my += obj.mass * y;
        m += obj.mass;
    }
    [mx / m, my / m]
}

/// Label every object from the interface checks. Objects at or above the
/// lowest unstable interface are unstable; everything below stays stable.
/// Displacements are filled later by [`settle`]; here stable objects get
/// 0 and unstable ones the displacement settle will apply.
pub fn label_stability(scene: &Scene, threshold: f64) -> Result<StabilityReport> {
    if threshold <= 0.0 {
        return Err(Error::Config("stability threshold must be positive".into()));
    }
    let checks = check_interfaces(scene);
    let lowest_unstable = checks.iter().find(|c| !c.stable).map(|c| c.interface_index);
    let per_object = scene
        .objects
        .iter()
        .map(|obj| {
            let unstable = lowest_unstable.map_or(false, |j| obj.index >= j);
            let displacement = if unstable {
                settle_displacement(threshold, obj.dimensions.height)
            } else {
                0.0
            };
            ObjectStability { index: obj.index, stable: !unstable, displacement }
        })
        .collect::<Vec<_>>();
    Ok(StabilityReport {
        tower_stable: lowest_unstable.is_none(),
        per_object,
        threshold,
        lowest_unstable_interface: lowest_unstable,
    })
}

fn settle_displacement(threshold: f64, height: f64) -> f64 {
    let dh = threshold * 10.0;
    let dz = height / 2.0;
    round6((dh * dh + dz * dz).sqrt())
}

/// Derive final positions from a stability report. Stable objects keep
/// their initial position; each unstable object moves horizontally by
/// 10x threshold along the outward COM direction of the failing interface
/// and drops by half its height. This is a cascade proxy, not a
/// trajectory: its only contract is that relabeling from |final-initial|
/// against the threshold reproduces the report.
pub fn settle(scene: &Scene, report: &StabilityReport) -> Scene {
    let mut out = scene.clone();
    let Some(j) = report.lowest_unstable_interface else {
        for obj in &mut out.objects {
            obj.final_position = obj.initial_position;
        }
        out.metadata.stable = report.tower_stable;
        out.stability = report.clone();
        return out;
    };
    let checks = check_interfaces(scene);
    let dir = topple_direction(&checks[j], scene, j);
    let shift = report.threshold * 10.0;
    for obj in &mut out.objects {
        if obj.index < j {
            obj.final_position = obj.initial_position;
        } else {
            obj.final_position = [
                round6(obj.initial_position[0] + shift * dir[0]),
                round6(obj.initial_position[1] + shift * dir[1]),
                round6(obj.initial_position[2] - obj.dimensions.height / 2.0),
            ];
        }
    }
    out.metadata.stable = report.tower_stable;
    out.stability = report.clone();
    // Record measured displacements so that the report and the positions
    // agree field-for-field.
    for (entry, obj) in out.stability.per_object.iter_mut().zip(&out.objects) {
        entry.displacement = round6(obj.displacement());
    }
    out.scene_text = crate::scene::render_scene_text(&out);
    out
}

/// Unit vector pointing from the failing support region toward the COM,
/// i.e. the direction the sub-stack topples.
fn topple_direction(check: &InterfaceCheck, scene: &Scene, j: usize) -> Point {
    if !check.region.is_empty() {
        let anchor = if check.margin <= 0.0 {
            check.region.polygon.closest_boundary_point(check.com_above)
        } else {
            check.region.polygon.centroid()
        };
        if let Some(a) = anchor {
            if let Some(d) = normalize([check.com_above[0] - a[0], check.com_above[1] - a[1]]) {
                return d;
            }
        }
        // COM coincides with the anchor (dead-center marginal case).
        return [1.0, 0.0];
    }
    // Empty region: topple away from the supporting object below.
    if j > 0 {
        let below = scene.objects[j - 1].center_xy();
        let above = scene.objects[j].center_xy();
        if let Some(d) = normalize([above[0] - below[0], above[1] - below[1]]) {
            return d;
        }
    }
    [1.0, 0.0]
}

fn normalize(v: Point) -> Option<Point> {
    let len = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if len < 1e-12 {
        None
    } else {
        Some([v[0] / len, v[1] / len])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::fixtures;

    fn two_cube_scene(top_offset: [f64; 2], half: f64) -> Scene {
        let mut scene = fixtures::purple_cube_yellow_cylinder();
        for obj in &mut scene.objects {
            obj.shape = Shape::Cube;
            obj.dimensions = crate::scene::Dimensions::cube(half, 2.0 * half);
        }
        scene.objects[0].offset = [0.0, 0.0];
        scene.objects[0].initial_position = [0.0, 0.0, 0.0];
        scene.objects[1].offset = top_offset;
        scene.objects[1].initial_position = [top_offset[0], top_offset[1], 2.0 * half];
        scene
    }

    #[test]
    fn symmetric_two_cube_stack_is_stable_with_half_side_margins() {
        let scene = two_cube_scene([0.0, 0.0], 0.5);
        let checks = check_interfaces(&scene);
        assert_eq!(checks.len(), 2);
        for c in &checks {
            assert!(c.stable);
            assert!((c.margin - 0.5).abs() < 1e-9, "margin {}", c.margin);
        }
    }

    #[test]
    fn offset_two_cube_stack_fails_the_upper_interface() {
        // Unit cubes (half-side 0.5), top shifted 0.6: support region spans
        // x in [0.1, 0.5] while the top COM sits at x = 0.6.
        let scene = two_cube_scene([0.6, 0.0], 0.5);
        let checks = check_interfaces(&scene);
        assert!(checks[0].stable);
        assert!(!checks[1].stable);
        assert!((checks[1].margin + 0.1).abs() < 1e-9);
    }

    #[test]
    fn counterweighted_three_cube_stack_is_stable() {
        // Offsets (0,0), (0.4,0), (-0.4,0): the COM of the top pair sits at
        // x = 0.2, inside the A-B support region x in [-0.1, 0.5].
        let mut scene = two_cube_scene([0.4, 0.0], 0.5);
        let mut third = scene.objects[1].clone();
        third.index = 2;
        third.offset = [-0.4, 0.0];
        third.initial_position = [0.0, 0.0, 2.0];
        scene.objects.push(third);
        scene.metadata.num_objects = 3;
        scene.stability.per_object.push(ObjectStability { index: 2, stable: true, displacement: 0.0 });
        let checks = check_interfaces(&scene);
        assert!(checks.iter().all(|c| c.stable), "margins: {:?}", checks.iter().map(|c| c.margin).collect::<Vec<_>>());
    }

    #[test]
    fn empty_region_reports_neg_infinity_margin() {
        let scene = two_cube_scene([2.0, 0.0], 0.5);
        let checks = check_interfaces(&scene);
        assert!(!checks[1].stable);
        assert_eq!(checks[1].margin, f64::NEG_INFINITY);
    }

    #[test]
    fn labels_split_at_the_lowest_unstable_interface() {
        let scene = two_cube_scene([0.9, 0.0], 0.5);
        let report = label_stability(&scene, DEFAULT_THRESHOLD).unwrap();
        assert!(!report.tower_stable);
        assert_eq!(report.lowest_unstable_interface, Some(1));
        assert!(report.per_object[0].stable);
        assert!(!report.per_object[1].stable);
    }

    #[test]
    fn all_zero_offsets_label_fully_stable() {
        let scene = two_cube_scene([0.0, 0.0], 0.5);
        let report = label_stability(&scene, DEFAULT_THRESHOLD).unwrap();
        assert!(report.tower_stable);
        assert!(report.per_object.iter().all(|o| o.stable));
        assert_eq!(report.lowest_unstable_interface, None);
    }

    #[test]
    fn settle_is_identity_on_stable_scenes() {
        let scene = two_cube_scene([0.0, 0.0], 0.5);
        let report = label_stability(&scene, DEFAULT_THRESHOLD).unwrap();
        let settled = settle(&scene, &report);
        for obj in &settled.objects {
            assert_eq!(obj.initial_position, obj.final_position);
        }
        assert!(settled.metadata.stable);
    }

    #[test]
    fn settle_moves_unstable_top_cube_past_the_threshold() {
        let scene = two_cube_scene([0.9, 0.0], 0.5);
        let report = label_stability(&scene, DEFAULT_THRESHOLD).unwrap();
        let settled = settle(&scene, &report);
        assert_eq!(settled.objects[0].initial_position, settled.objects[0].final_position);
        let disp = settled.objects[1].displacement();
        assert!(disp > DEFAULT_THRESHOLD, "displacement {disp}");
    }

    #[test]
    fn relabeling_from_displacement_reproduces_labels() {
        for offset in [[0.0, 0.0], [0.3, 0.1], [0.9, 0.0], [2.0, 0.0]] {
            let scene = two_cube_scene(offset, 0.5);
            let report = label_stability(&scene, DEFAULT_THRESHOLD).unwrap();
            let settled = settle(&scene, &report);
            for (entry, obj) in settled.stability.per_object.iter().zip(&settled.objects) {
                assert_eq!(entry.stable, obj.displacement() <= DEFAULT_THRESHOLD);
            }
        }
    }

    #[test]
    fn boundary_com_counts_as_unstable() {
        // Top cube shifted exactly one half-side: its COM lands on the
        // support-region edge, margin 0 -> unstable by the tie-break rule.
        let scene = two_cube_scene([0.5, 0.0], 0.5);
        let checks = check_interfaces(&scene);
        assert!(checks[1].margin.abs() < 1e-9);
        assert!(!checks[1].stable);
    }
}
