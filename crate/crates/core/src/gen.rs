//! Seeded random scene generation.
//!
//! Scenes draw object types without replacement from the 15-entry
//! (shape, color) catalog, so every referent inside a scene is
//! unambiguous. Offsets are sampled at 2 decimal places, positions and
//! derived quantities snapped to 6, which keeps file round trips exact.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::Result;
use crate::scene::{
    catalog, render_scene_text, round2, round6, Dimensions, ObjectSpec, Scene, Shape,
    SimMeta, StabilityReport,
};
use crate::sim::{label_stability, settle};
use crate::util::derive_seed;

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub seed: u64,
    pub max_objects: usize,
    pub threshold: f64,
    /// Bottom object offset range (relative to the ground origin).
    pub base_offset_range: f64,
    /// Upper object offset range (relative to the object below).
    pub offset_range: f64,
}

impl GenOptions {
    pub fn new(seed: u64) -> Self {
        GenOptions {
            seed,
            max_objects: crate::scene::DEFAULT_MAX_OBJECTS,
            threshold: crate::sim::DEFAULT_THRESHOLD,
            base_offset_range: 0.1,
            offset_range: 0.3,
        }
    }
}

fn dimensions_for(shape: Shape) -> Dimensions {
    match shape {
        Shape::Cube => Dimensions::cube(0.25, 0.5),
        Shape::Cuboid => Dimensions { half_x: 0.3, half_y: 0.2, height: 0.5 },
        Shape::Cylinder => Dimensions { half_x: 0.25, half_y: 0.25, height: 0.5 },
    }
}

fn mass_for(shape: Shape) -> f64 {
    match shape {
        Shape::Cube => 1.0,
        Shape::Cuboid => 1.2,
        Shape::Cylinder => 0.9,
    }
}

/// Generate the i-th scene of a run. Determinism contract: the output
/// depends only on (opts.seed, index).
pub fn generate_scene(opts: &GenOptions, index: usize) -> Result<Scene> {
    let scene_id = format!("scene_{:016x}_{index:05}", opts.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &scene_id));

    let n = rng.gen_range(crate::scene::MIN_OBJECTS..=opts.max_objects);
    let mut types = catalog();
    types.shuffle(&mut rng);
    types.truncate(n);

    let mut objects = Vec::with_capacity(n);
    let mut cum_height = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for (i, (shape, color)) in types.into_iter().enumerate() {
        let range = if i == 0 { opts.base_offset_range } else { opts.offset_range };
        let offset = [
            round2(rng.gen_range(-range..=range)),
            round2(rng.gen_range(-range..=range)),
        ];
        cx = round6(cx + offset[0]);
        cy = round6(cy + offset[1]);
        let dims = dimensions_for(shape);
        let position = [cx, cy, round6(cum_height)];
        objects.push(ObjectSpec {
            index: i,
            shape,
            color,
            material: None,
            dimensions: dims,
            mass: mass_for(shape),
            friction: 0.6,
            color_rgba: color.rgba(),
            color_hex: color.hex().to_string(),
            initial_position: position,
            final_position: position,
            offset,
        });
        cum_height += dims.height;
    }

    let mut scene = Scene {
        scene_id,
        objects,
        metadata: SimMeta {
            stable: true,
            num_objects: n,
            gravity: [0.0, 0.0, -9.81],
            camera: BTreeMap::from([
                ("location".to_string(), "0,-6,3".to_string()),
                ("look_at".to_string(), "0,0,1".to_string()),
            ]),
            seed: opts.seed,
        },
        stability: StabilityReport {
            tower_stable: true,
            per_object: Vec::new(),
            threshold: opts.threshold,
            lowest_unstable_interface: None,
        },
        scene_text: String::new(),
        image_path: None,
    };
    let report = label_stability(&scene, opts.threshold)?;
    scene = settle(&scene, &report);
    scene.scene_text = render_scene_text(&scene);
    scene.validate_with_max(opts.max_objects)?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let opts = GenOptions::new(11);
        let a = generate_scene(&opts, 3).unwrap();
        let b = generate_scene(&opts, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generated_scenes_validate_and_round_trip() {
        let opts = GenOptions::new(5);
        let dir = tempfile::tempdir().unwrap();
        for i in 0..50 {
            let scene = generate_scene(&opts, i).unwrap();
            let path = dir.path().join(format!("{}.json", scene.scene_id));
            crate::scene::save_scene(&scene, &path).unwrap();
            let loaded = crate::scene::load_scene(&path).unwrap();
            assert_eq!(scene, loaded);
        }
    }

    #[test]
    fn corpus_contains_both_stable_and_unstable_scenes() {
        let opts = GenOptions::new(23);
        let mut stable = 0;
        let mut unstable = 0;
        for i in 0..200 {
            let scene = generate_scene(&opts, i).unwrap();
            if scene.metadata.stable {
                stable += 1;
            } else {
                unstable += 1;
            }
        }
        assert!(stable > 20, "only {stable} stable scenes");
        assert!(unstable > 20, "only {unstable} unstable scenes");
    }

    #[test]
    fn referents_are_unambiguous() {
        let opts = GenOptions::new(9);
        for i in 0..100 {
            let scene = generate_scene(&opts, i).unwrap();
            let mut names: Vec<String> = scene.objects.iter().map(|o| o.name()).collect();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), scene.objects.len());
        }
    }
}
