//! Domain types and bit-exact JSON persistence for stacked-scene annotations.
//!
//! One JSON file per scene. Key order follows struct declaration order and
//! floats are serialized with 6 decimal places, so identical scenes produce
//! byte-identical files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_OBJECTS: usize = 4;
pub const MIN_OBJECTS: usize = 2;

/// Snap a value to 6 decimal places. All floats stored in a [`Scene`] go
/// through this, which makes the 6-decimal serialization lossless.
pub fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Snap to 2 decimal places (offsets, which also appear in scene text).
pub fn round2(v: f64) -> f64 {
    (v * 1e2).round() / 1e2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Cube,
    Cuboid,
    Cylinder,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Cube, Shape::Cuboid, Shape::Cylinder];

    pub fn as_str(&self) -> &'static str {
        match self {
            Shape::Cube => "cube",
            Shape::Cuboid => "cuboid",
            Shape::Cylinder => "cylinder",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Purple,
}

impl Color {
    pub const ALL: [Color; 5] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Purple,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Purple => "purple",
        }
    }

    pub fn rgba(&self) -> [f64; 4] {
        match self {
            Color::Red => [0.8, 0.1, 0.1, 1.0],
            Color::Green => [0.1, 0.6, 0.2, 1.0],
            Color::Blue => [0.1, 0.3, 0.8, 1.0],
            Color::Yellow => [0.9, 0.8, 0.1, 1.0],
            Color::Purple => [0.5, 0.2, 0.6, 1.0],
        }
    }

    pub fn hex(&self) -> &'static str {
        match self {
            Color::Red => "#CC1A1A",
            Color::Green => "#1A9933",
            Color::Blue => "#1A4DCC",
            Color::Yellow => "#E6CC1A",
            Color::Purple => "#803399",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Rubber,
    Metal,
}

/// The full (shape, color) catalog: 3 shapes x 5 colors = 15 object types.
pub fn catalog() -> Vec<(Shape, Color)> {
    let mut types = Vec::with_capacity(15);
    for shape in Shape::ALL {
        for color in Color::ALL {
            types.push((shape, color));
        }
    }
    types
}

/// "color shape" display name, e.g. "purple cube".
pub fn object_name(color: Color, shape: Shape) -> String {
    format!("{color} {shape}")
}

/// Footprint half-extents plus height. For cylinders both half-extents
/// equal the radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub half_x: f64,
    pub half_y: f64,
    pub height: f64,
}

impl Dimensions {
    pub fn cube(half_side: f64, height: f64) -> Self {
        Dimensions { half_x: half_side, half_y: half_side, height }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub index: usize,
    pub shape: Shape,
    pub color: Color,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<Material>,
    pub dimensions: Dimensions,
    pub mass: f64,
    pub friction: f64,
    pub color_rgba: [f64; 4],
    pub color_hex: String,
    pub initial_position: [f64; 3],
    pub final_position: [f64; 3],
    pub offset: [f64; 2],
}

impl ObjectSpec {
    pub fn name(&self) -> String {
        object_name(self.color, self.shape)
    }

    /// Horizontal center (x, y) from the initial position.
    pub fn center_xy(&self) -> [f64; 2] {
        [self.initial_position[0], self.initial_position[1]]
    }

    pub fn displacement(&self) -> f64 {
        let dx = self.final_position[0] - self.initial_position[0];
        let dy = self.final_position[1] - self.initial_position[1];
        let dz = self.final_position[2] - self.initial_position[2];
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMeta {
    pub stable: bool,
    pub num_objects: usize,
    pub gravity: [f64; 3],
    pub camera: BTreeMap<String, String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectStability {
    pub index: usize,
    pub stable: bool,
    pub displacement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub tower_stable: bool,
    pub per_object: Vec<ObjectStability>,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lowest_unstable_interface: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub objects: Vec<ObjectSpec>,
    pub metadata: SimMeta,
    pub stability: StabilityReport,
    pub scene_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.validate_with_max(DEFAULT_MAX_OBJECTS)
    }

    pub fn validate_with_max(&self, max_objects: usize) -> Result<()> {
        let n = self.objects.len();
        if n < MIN_OBJECTS || n > max_objects {
            return Err(Error::validation(
                "objects",
                format!("object count {n} outside [{MIN_OBJECTS}, {max_objects}]"),
            ));
        }
        if self.metadata.num_objects != n {
            return Err(Error::validation(
                "metadata.num_objects",
                format!("num_objects={} but {} objects listed", self.metadata.num_objects, n),
            ));
        }
        let mut cum_height = 0.0;
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.index != i {
                return Err(Error::validation(
                    "objects.index",
                    format!("object at position {i} has index {}", obj.index),
                ));
            }
            let d = &obj.dimensions;
            if d.half_x <= 0.0 || d.half_y <= 0.0 || d.height <= 0.0 {
                return Err(Error::validation("objects.dimensions", "dimensions must be strictly positive"));
            }
            if obj.shape == Shape::Cylinder && (d.half_x - d.half_y).abs() > 1e-9 {
                return Err(Error::validation("objects.dimensions", "cylinder footprint must be circular"));
            }
            if obj.mass <= 0.0 {
                return Err(Error::validation("objects.mass", "mass must be positive"));
            }
            if obj.friction < 0.0 {
                return Err(Error::validation("objects.friction", "friction must be non-negative"));
            }
            if (obj.initial_position[2] - cum_height).abs() > 1e-6 {
                return Err(Error::validation(
                    "objects.initial_position",
                    format!(
                        "object {i} rests at z={} but cumulative height below is {cum_height}",
                        obj.initial_position[2]
                    ),
                ));
            }
            cum_height += d.height;
        }
        let report = &self.stability;
        if report.per_object.len() != n {
            return Err(Error::validation("stability.per_object", "one entry per object required"));
        }
        for (i, s) in report.per_object.iter().enumerate() {
            if s.index != i {
                return Err(Error::validation("stability.per_object", "entries must be in stack order"));
            }
            if s.stable != (s.displacement <= report.threshold) {
                return Err(Error::validation(
                    "stability.per_object",
                    format!("object {i}: stable flag inconsistent with displacement vs threshold"),
                ));
            }
        }
        let all_stable = report.per_object.iter().all(|s| s.stable);
        if report.tower_stable != all_stable {
            return Err(Error::validation("stability.tower_stable", "must equal conjunction of per-object stability"));
        }
        if self.metadata.stable != report.tower_stable {
            return Err(Error::validation("metadata.stable", "must match stability.tower_stable"));
        }
        if self.scene_text != render_scene_text(self) {
            return Err(Error::validation("scene_text", "does not match canonical rendering"));
        }
        Ok(())
    }
}

/// Format an offset component at 2 decimal places with trailing zeros
/// trimmed, keeping at least one fractional digit: 0.0, 0.02, -0.03, 0.1.
pub fn fmt_offset(v: f64) -> String {
    let s = format!("{:.2}", v);
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

/// Canonical prose description of a scene.
pub fn render_scene_text(scene: &Scene) -> String {
    let names: Vec<String> = scene.objects.iter().map(|o| o.name()).collect();
    let offsets: Vec<String> = scene
        .objects
        .iter()
        .map(|o| format!("({}, {})", fmt_offset(o.offset[0]), fmt_offset(o.offset[1])))
        .collect();
    format!(
        "Scene description: Here are the parts stacked from bottom to top: {}. Offsets for each part, from bottom to top, are: {}.",
        names.join(", "),
        offsets.join(", ")
    )
}

mod canonical {
    use std::io;

    /// JSON formatter that prints every float with exactly 6 decimal
    /// places. Combined with struct-declaration key order this makes the
    /// output deterministic byte-for-byte.
    pub struct SixDecimalFormatter;

    impl serde_json::ser::Formatter for SixDecimalFormatter {
        fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
        where
            W: ?Sized + io::Write,
        {
            write!(writer, "{:.6}", value)
        }

        fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
        where
            W: ?Sized + io::Write,
        {
            write!(writer, "{:.6}", value)
        }
    }
}

/// Serialize any value with the canonical 6-decimal float format.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, canonical::SixDecimalFormatter);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    scene.validate()?;
    let bytes = to_canonical_json(scene)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let bytes = std::fs::read(path)?;
    let scene: Scene = serde_json::from_slice(&bytes).map_err(|e| Error::Input(format!(
        "{}: {e}",
        path.display()
    )))?;
    scene.validate()?;
    Ok(scene)
}

/// Reference fixtures shared by the unit and acceptance test suites.
pub mod fixtures {
    use super::*;

    /// Hand-built two-object example: purple cube under yellow cylinder,
    /// labeled unstable at the upper interface.
    pub fn purple_cube_yellow_cylinder() -> Scene {
        let cube = ObjectSpec {
            index: 0,
            shape: Shape::Cube,
            color: Color::Purple,
            material: None,
            dimensions: Dimensions::cube(0.25, 0.5),
            mass: 1.0,
            friction: 0.6,
            color_rgba: Color::Purple.rgba(),
            color_hex: Color::Purple.hex().to_string(),
            initial_position: [-0.03, -0.05, 0.0],
            final_position: [-0.03, -0.05, 0.0],
            offset: [-0.03, -0.05],
        };
        let cylinder = ObjectSpec {
            index: 1,
            shape: Shape::Cylinder,
            color: Color::Yellow,
            material: None,
            dimensions: Dimensions { half_x: 0.25, half_y: 0.25, height: 0.5 },
            mass: 1.0,
            friction: 0.6,
            color_rgba: Color::Yellow.rgba(),
            color_hex: Color::Yellow.hex().to_string(),
            initial_position: [-0.03, -0.03, 0.5],
            final_position: [0.47, -0.03, 0.25],
            offset: [0.0, 0.02],
        };
        let mut scene = Scene {
            scene_id: "fixture_0001".to_string(),
            objects: vec![cube, cylinder],
            metadata: SimMeta {
                stable: false,
                num_objects: 2,
                gravity: [0.0, 0.0, -9.81],
                camera: BTreeMap::from([(String::from("location"), String::from("0,-6,3"))]),
                seed: 1,
            },
            stability: StabilityReport {
                tower_stable: false,
                per_object: vec![
                    ObjectStability { index: 0, stable: true, displacement: 0.0 },
                    ObjectStability { index: 1, stable: false, displacement: 0.559017 },
                ],
                threshold: 0.05,
                lowest_unstable_interface: Some(1),
            },
            scene_text: String::new(),
            image_path: None,
        };
        scene.scene_text = render_scene_text(&scene);
        scene
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_matches_quoted_example() {
        let scene = fixtures::purple_cube_yellow_cylinder();
        assert_eq!(
            render_scene_text(&scene),
            "Scene description: Here are the parts stacked from bottom to top: purple cube, yellow cylinder. Offsets for each part, from bottom to top, are: (-0.03, -0.05), (0.0, 0.02)."
        );
    }

    #[test]
    fn render_zero_offsets_three_cubes() {
        let mut scene = fixtures::purple_cube_yellow_cylinder();
        for obj in &mut scene.objects {
            obj.shape = Shape::Cube;
            obj.color = Color::Red;
            obj.offset = [0.0, 0.0];
        }
        scene.objects.push(scene.objects[0].clone());
        let text = render_scene_text(&scene);
        assert_eq!(
            text,
            "Scene description: Here are the parts stacked from bottom to top: red cube, red cube, red cube. Offsets for each part, from bottom to top, are: (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)."
        );
    }

    #[test]
    fn save_load_round_trip_is_identity() {
        let scene = fixtures::purple_cube_yellow_cylinder();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        save_scene(&scene, &path).unwrap();
        let loaded = load_scene(&path).unwrap();
        assert_eq!(scene, loaded);
    }

    #[test]
    fn serialization_is_deterministic() {
        let scene = fixtures::purple_cube_yellow_cylinder();
        assert_eq!(to_canonical_json(&scene).unwrap(), to_canonical_json(&scene).unwrap());
    }

    #[test]
    fn empty_object_list_rejected() {
        let mut scene = fixtures::purple_cube_yellow_cylinder();
        scene.objects.clear();
        scene.stability.per_object.clear();
        scene.metadata.num_objects = 0;
        let err = scene.validate().unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn num_objects_mismatch_rejected() {
        let mut scene = fixtures::purple_cube_yellow_cylinder();
        scene.metadata.num_objects = 3;
        let err = scene.validate().unwrap_err();
        assert!(err.to_string().contains("num_objects"));
    }

    #[test]
    fn unknown_shape_in_file_is_a_catalog_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let scene = fixtures::purple_cube_yellow_cylinder();
        let mut value = serde_json::to_value(&scene).unwrap();
        value["objects"][0]["shape"] = serde_json::Value::String("sphere".to_string());
        std::fs::write(&path, serde_json::to_vec(&value).unwrap()).unwrap();
        let err = load_scene(&path).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn fmt_offset_trims_like_the_examples() {
        assert_eq!(fmt_offset(-0.03), "-0.03");
        assert_eq!(fmt_offset(0.0), "0.0");
        assert_eq!(fmt_offset(0.02), "0.02");
        assert_eq!(fmt_offset(0.1), "0.1");
        assert_eq!(fmt_offset(0.10), "0.1");
    }
}
