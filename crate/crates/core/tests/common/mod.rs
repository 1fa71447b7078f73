//! Shared helpers for the integration suites: an independent brute-force
//! torque oracle for stack stability and a random event-log generator.
//! Not every suite uses every helper.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stackbench::context::{CollisionEvent, DynObject, EventLog, FrameState, ObjectState};
use stackbench::scene::Scene;
use stackbench::sim::{support_region, Footprint};

/// Lowest unstable interface by explicit torque balance, or None when the
/// whole stack holds.
///
/// Independent decision path from the analytic labeler: instead of testing
/// one mass-weighted COM point against the region boundary, this sums the
/// per-object gravity torque about every edge of the support region and
/// calls the interface unstable as soon as any edge's net torque tips the
/// sub-stack outward (or the region is empty).
pub fn torque_lowest_unstable(scene: &Scene, eps: f64) -> Option<usize> {
    let n = scene.objects.len();
    for j in 0..n {
        let lower = if j == 0 {
            Footprint::Ground
        } else {
            Footprint::of_object(&scene.objects[j - 1])
        };
        let upper = Footprint::of_object(&scene.objects[j]);
        let region = support_region(&lower, &upper);
        if region.is_empty() {
            return Some(j);
        }
        let vertices = &region.polygon.vertices;
        let total_mass: f64 = scene.objects[j..].iter().map(|o| o.mass).sum();
        for i in 0..vertices.len() {
            let a = vertices[i];
            let b = vertices[(i + 1) % vertices.len()];
            // Inward normal of edge a->b for a CCW polygon.
            let edge = [b[0] - a[0], b[1] - a[1]];
            let len = (edge[0] * edge[0] + edge[1] * edge[1]).sqrt();
            if len < 1e-12 {
                continue;
            }
            let normal = [-edge[1] / len, edge[0] / len];
            // Net righting torque per unit gravity about this edge: the
            // mass-weighted sum of inward lever arms of every object in
            // the sub-stack.
            let torque: f64 = scene.objects[j..]
                .iter()
                .map(|o| {
                    let [x, y] = o.center_xy();
                    o.mass * ((x - a[0]) * normal[0] + (y - a[1]) * normal[1])
                })
                .sum();
            if torque / total_mass <= eps {
                return Some(j);
            }
        }
    }
    None
}

/// Small random event log: 2-5 objects entering over time, frames with
/// in-range normalized states, and sorted collisions between present
/// objects.
pub fn random_event_log(seed: u64, index: usize) -> EventLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64 * 0x9e37_79b9));
    let shapes = ["sphere", "cube", "cylinder"];
    let colors = ["red", "blue", "gray", "cyan", "purple", "yellow"];
    let materials = ["rubber", "metal"];
    let n_objects = rng.gen_range(2..=5usize);
    let objects: Vec<DynObject> = (0..n_objects)
        .map(|i| DynObject {
            id: i as u32,
            shape: shapes[rng.gen_range(0..shapes.len())].to_string(),
            color: colors[rng.gen_range(0..colors.len())].to_string(),
            material: materials[rng.gen_range(0..materials.len())].to_string(),
        })
        .collect();

    let n_frames = rng.gen_range(3..=8usize);
    let entry_frames: Vec<usize> =
        (0..n_objects).map(|_| rng.gen_range(0..n_frames.min(3))).collect();
    let frames: Vec<FrameState> = (0..n_frames)
        .map(|fi| {
            let states = (0..n_objects)
                .filter(|&oi| entry_frames[oi] <= fi)
                .map(|oi| ObjectState {
                    object_id: oi as u32,
                    location: [rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)],
                    velocity: [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)],
                })
                .collect();
            FrameState { frame_index: fi, states }
        })
        .collect();

    let n_collisions = rng.gen_range(0..=3usize);
    let mut collisions: Vec<CollisionEvent> = (0..n_collisions)
        .map(|_| {
            let a = rng.gen_range(0..n_objects as u32);
            let mut b = rng.gen_range(0..n_objects as u32);
            while b == a {
                b = rng.gen_range(0..n_objects as u32);
            }
            CollisionEvent {
                frame_index: rng.gen_range(0..n_frames),
                participants: (a, b),
                location: [rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)],
            }
        })
        .collect();
    collisions.sort_by_key(|c| c.frame_index);

    let log = EventLog {
        log_id: format!("randlog_{seed:08x}_{index:05}"),
        objects,
        frames,
        collisions,
        enters: Vec::new(),
    };
    log.validate().expect("generated log must satisfy its invariants");
    log
}
