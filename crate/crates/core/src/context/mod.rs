//! Physical-context generation: Human-Narration text for static stacks and
//! dynamic event logs, and the Structured-Physics tagged format with its
//! strict parser (see [`sp`]).

pub mod sp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextStyle {
    #[serde(rename = "hn")]
    Hn,
    #[serde(rename = "sp")]
    Sp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextSource {
    Oracle,
    RemotePcb,
}

/// A generated physical description with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextDoc {
    pub style: ContextStyle,
    pub text: String,
    pub source: ContextSource,
    /// Scene or event-log id this doc describes.
    pub subject_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynObject {
    pub id: u32,
    pub shape: String,
    pub color: String,
    pub material: String,
}

impl DynObject {
    /// "color material shape", the HN descriptor order.
    pub fn hn_descriptor(&self) -> String {
        format!("{} {} {}", self.color, self.material, self.shape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub object_id: u32,
    /// Normalized to [0,1]^2.
    pub location: [f64; 2],
    /// Normalized to [-1,1]^2.
    pub velocity: [f64; 2],
}

/// Per-frame states; absent objects carry no state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    pub frame_index: usize,
    pub states: Vec<ObjectState>,
}

impl FrameState {
    pub fn state_of(&self, object_id: u32) -> Option<&ObjectState> {
        self.states.iter().find(|s| s.object_id == object_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub frame_index: usize,
    pub participants: (u32, u32),
    /// Normalized to [0,1]^2.
    pub location: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnterEvent {
    pub object_id: u32,
    pub frame_index: usize,
}

/// Dynamic-scene annotation: objects, per-frame states, collision and
/// enter events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub log_id: String,
    pub objects: Vec<DynObject>,
    pub frames: Vec<FrameState>,
    pub collisions: Vec<CollisionEvent>,
    #[serde(default)]
    pub enters: Vec<EnterEvent>,
}

impl EventLog {
    pub fn object(&self, id: u32) -> Option<&DynObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut last = None;
        for f in &self.frames {
            if let Some(prev) = last {
                if f.frame_index <= prev {
                    return Err(Error::Input(
                        "frame indices must be strictly increasing".to_string(),
                    ));
                }
            }
            last = Some(f.frame_index);
            for s in &f.states {
                if self.object(s.object_id).is_none() {
                    return Err(Error::Input(format!(
                        "frame {} references unknown object {}",
                        f.frame_index, s.object_id
                    )));
                }
                if !(0.0..=1.0).contains(&s.location[0]) || !(0.0..=1.0).contains(&s.location[1]) {
                    return Err(Error::Input(format!(
                        "object {} location outside [0,1]^2 at frame {}",
                        s.object_id, f.frame_index
                    )));
                }
                if !(-1.0..=1.0).contains(&s.velocity[0]) || !(-1.0..=1.0).contains(&s.velocity[1])
                {
                    return Err(Error::Input(format!(
                        "object {} velocity outside [-1,1]^2 at frame {}",
                        s.object_id, f.frame_index
                    )));
                }
            }
        }
        let mut last_collision = None;
        for c in &self.collisions {
            let (a, b) = c.participants;
            if a == b {
                return Err(Error::Input(format!(
                    "collision at frame {} lists object {} twice",
                    c.frame_index, a
                )));
            }
            if self.object(a).is_none() || self.object(b).is_none() {
                return Err(Error::Input(format!(
                    "collision at frame {} references unknown objects ({a}, {b})",
                    c.frame_index
                )));
            }
            if let Some(prev) = last_collision {
                if c.frame_index < prev {
                    return Err(Error::Input("collisions must be sorted by frame".to_string()));
                }
            }
            last_collision = Some(c.frame_index);
        }
        for e in &self.enters {
            if self.object(e.object_id).is_none() {
                return Err(Error::Input(format!(
                    "enter event references unknown object {}",
                    e.object_id
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<EventLog> {
        let log: EventLog = serde_json::from_slice(bytes)
            .map_err(|e| Error::Input(format!("event log parse error: {e}")))?;
        log.validate()?;
        Ok(log)
    }

    /// Enter frame of an object, if it entered after the start of the
    /// recording.
    fn enter_frame(&self, object_id: u32) -> Option<usize> {
        self.enters
            .iter()
            .find(|e| e.object_id == object_id)
            .map(|e| e.frame_index)
            .filter(|&f| f > 0)
    }

    /// First frame at which the object carries state.
    fn first_present_frame(&self, object_id: u32) -> Option<usize> {
        self.frames
            .iter()
            .find(|f| f.state_of(object_id).is_some())
            .map(|f| f.frame_index)
    }
}

/// Best-effort adapter from a dynamic-benchmark annotation JSON into an
/// [`EventLog`]. Recognizes `object_property`/`objects` for the object
/// table, `collision`/`collisions` for events, and `motion_trajectory`/
/// `frames` for per-frame states; the result is validated against the
/// EventLog invariants.
pub fn import_dynamic_annotation(log_id: &str, value: &serde_json::Value) -> Result<EventLog> {
    let objs = value
        .get("object_property")
        .or_else(|| value.get("objects"))
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Input("no object table found".to_string()))?;
    let mut objects = Vec::new();
    for (i, o) in objs.iter().enumerate() {
        let get = |k: &str| o.get(k).and_then(|v| v.as_str()).unwrap_or("unknown").to_string();
        objects.push(DynObject {
            id: o.get("object_id").or_else(|| o.get("id")).and_then(|v| v.as_u64()).unwrap_or(i as u64)
                as u32,
            shape: get("shape"),
            color: get("color"),
            material: get("material"),
        });
    }

    let mut frames = Vec::new();
    if let Some(arr) = value
        .get("motion_trajectory")
        .or_else(|| value.get("frames"))
        .and_then(|v| v.as_array())
    {
        for (fi, frame) in arr.iter().enumerate() {
            let frame_index =
                frame.get("frame_id").and_then(|v| v.as_u64()).unwrap_or(fi as u64) as usize;
            let mut states = Vec::new();
            if let Some(motions) = frame
                .get("motion")
                .or_else(|| frame.get("objects"))
                .or_else(|| frame.get("states"))
                .and_then(|v| v.as_array())
            {
                for (oi, m) in motions.iter().enumerate() {
                    let inside = m.get("inside_camera_view").and_then(|v| v.as_bool()).unwrap_or(true);
                    if !inside {
                        continue;
                    }
                    let vec2 = |k: &str| -> Option<[f64; 2]> {
                        let a = m.get(k)?.as_array()?;
                        Some([a.first()?.as_f64()?, a.get(1)?.as_f64()?])
                    };
                    let location = vec2("location").unwrap_or([0.5, 0.5]);
                    let velocity = vec2("velocity").unwrap_or([0.0, 0.0]);
                    states.push(ObjectState {
                        object_id: m
                            .get("object_id")
                            .or_else(|| m.get("id"))
                            .and_then(|v| v.as_u64())
                            .unwrap_or(oi as u64) as u32,
                        location: [location[0].clamp(0.0, 1.0), location[1].clamp(0.0, 1.0)],
                        velocity: [velocity[0].clamp(-1.0, 1.0), velocity[1].clamp(-1.0, 1.0)],
                    });
                }
            }
            frames.push(FrameState { frame_index, states });
        }
    }

    let mut collisions = Vec::new();
    if let Some(arr) = value
        .get("collision")
        .or_else(|| value.get("collisions"))
        .and_then(|v| v.as_array())
    {
        for c in arr {
            let pair = c
                .get("object_ids")
                .or_else(|| c.get("object"))
                .or_else(|| c.get("participants"))
                .and_then(|v| v.as_array())
                .ok_or_else(|| Error::Input("collision without participants".to_string()))?;
            if pair.len() != 2 {
                return Err(Error::Input("collision must list two participants".to_string()));
            }
            let loc = c
                .get("location")
                .and_then(|v| v.as_array())
                .and_then(|a| Some([a.first()?.as_f64()?, a.get(1)?.as_f64()?]))
                .unwrap_or([0.5, 0.5]);
            collisions.push(CollisionEvent {
                frame_index: c.get("frame_id").or_else(|| c.get("frame_index")).and_then(|v| v.as_u64()).unwrap_or(0)
                    as usize,
                participants: (
                    pair[0].as_u64().unwrap_or(0) as u32,
                    pair[1].as_u64().unwrap_or(0) as u32,
                ),
                location: [loc[0].clamp(0.0, 1.0), loc[1].clamp(0.0, 1.0)],
            });
        }
    }
    collisions.sort_by_key(|c| c.frame_index);

    let log = EventLog { log_id: log_id.to_string(), objects, frames, collisions, enters: Vec::new() };
    log.validate()?;
    Ok(log)
}

/// 1st, 2nd, 3rd, 4th, ... with 11th-13th handled.
pub fn ordinal(k: usize) -> String {
    let suffix = match (k % 10, k % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{k}{suffix}")
}

/// Net displacement threshold (fraction of scene width) separating
/// "moving" from "stationary" in HN role classification.
pub const HN_MOTION_THRESHOLD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    EntersAndMovesToward,
    MovesToward,
    EntersAndMoving,
    Moving,
    Stationary,
}

/// Collision-sequence narration for a dynamic scene.
pub fn build_hn_dynamic(log: &EventLog) -> Result<ContextDoc> {
    log.validate()?;
    let n = log.collisions.len();
    let mut text = String::from("Scene History:\n");
    if n == 1 {
        text.push_str("In this scene, there is 1 collision occurring in sequence.\n");
    } else {
        text.push_str(&format!(
            "In this scene, there are {n} collisions occurring in sequence.\n"
        ));
    }

    let mut prev_collision_frame: Option<usize> = None;
    for (k, collision) in log.collisions.iter().enumerate() {
        let k1 = k + 1;
        let ord = ordinal(k1);
        text.push_str(&format!(
            "Here are the relevant observations prior to the {ord} collision:\n"
        ));
        let (pa, pb) = collision.participants;
        for obj in &log.objects {
            let Some(role) =
                classify_role(log, obj.id, collision, prev_collision_frame, pa, pb)?
            else {
                continue; // not yet in the scene
            };
            let descriptor = obj.hn_descriptor();
            let line = match role {
                Role::EntersAndMovesToward => format!(
                    "Object {} (the {descriptor}) enters the scene and moves toward the {ord} collision site.",
                    obj.id
                ),
                Role::MovesToward => format!(
                    "Object {} (the {descriptor}) is moving toward the {ord} collision site.",
                    obj.id
                ),
                Role::EntersAndMoving => format!(
                    "Object {} (the {descriptor}) enters the scene and is moving in the rest of the scene but does not participate in the collision.",
                    obj.id
                ),
                Role::Moving => format!(
                    "Object {} (the {descriptor}) is moving in the rest of the scene but does not participate in the collision.",
                    obj.id
                ),
                Role::Stationary => format!(
                    "Object {} (the {descriptor}) remains stationary in the scene and does not participate in the collision.",
                    obj.id
                ),
            };
            text.push_str(&line);
            text.push('\n');
        }
        text.push_str(&format!("Finally, Object {pa} collides with Object {pb}.\n"));
        prev_collision_frame = Some(collision.frame_index);
    }

    Ok(ContextDoc {
        style: ContextStyle::Hn,
        text,
        source: ContextSource::Oracle,
        subject_id: log.log_id.clone(),
    })
}

/// Exactly one role per object present before the collision; `None` for
/// objects that have not entered yet.
fn classify_role(
    log: &EventLog,
    object_id: u32,
    collision: &CollisionEvent,
    prev_collision_frame: Option<usize>,
    pa: u32,
    pb: u32,
) -> Result<Option<Role>> {
    let first_present = log.first_present_frame(object_id);
    let participant = object_id == pa || object_id == pb;

    // Frames up to and including the collision frame.
    let history: Vec<&FrameState> = log
        .frames
        .iter()
        .filter(|f| f.frame_index <= collision.frame_index)
        .collect();
    let present: Vec<&ObjectState> =
        history.iter().filter_map(|f| f.state_of(object_id)).collect();
    if present.is_empty() {
        if participant {
            return Err(Error::Input(format!(
                "collision at frame {} involves object {object_id} with no frame data",
                collision.frame_index
            )));
        }
        return Ok(None);
    }

    // "Enters" when the object appeared since the previous collision (or
    // after the recording start, for the first collision).
    let entered_recently = match (log.enter_frame(object_id).or(first_present), prev_collision_frame)
    {
        (Some(enter), Some(prev)) => enter > prev,
        (Some(enter), None) => enter > 0,
        (None, _) => false,
    };

    if participant {
        return Ok(Some(if entered_recently {
            Role::EntersAndMovesToward
        } else {
            Role::MovesToward
        }));
    }

    // Non-participant: moving when its net displacement over the last
    // three recorded frames exceeds the motion threshold.
    let window: Vec<&ObjectState> =
        present.iter().rev().take(3).rev().copied().collect();
    let moving = if window.len() >= 2 {
        let first = window.first().unwrap();
        let last = window.last().unwrap();
        let dx = last.location[0] - first.location[0];
        let dy = last.location[1] - first.location[1];
        (dx * dx + dy * dy).sqrt() >= HN_MOTION_THRESHOLD
    } else {
        let speed = {
            let v = window[0].velocity;
            (v[0] * v[0] + v[1] * v[1]).sqrt()
        };
        speed >= HN_MOTION_THRESHOLD
    };

    Ok(Some(match (entered_recently, moving) {
        (true, true) => Role::EntersAndMoving,
        (false, true) => Role::Moving,
        // An object that just entered is by definition in motion; still
        // classify from the data so the roles stay exclusive.
        (true, false) => Role::EntersAndMoving,
        (false, false) => Role::Stationary,
    }))
}

/// Static-stack narration: the canonical scene text, a qualitative offset
/// phrase per object, and (optionally) stability sentences taken verbatim
/// from the report labels.
pub fn build_hn_static(scene: &Scene, include_stability: bool) -> ContextDoc {
    let mut text = String::new();
    text.push_str(&scene.scene_text);
    text.push('\n');
    for (i, obj) in scene.objects.iter().enumerate() {
        let support = if i == 0 {
            "the ground".to_string()
        } else {
            format!("the {}", scene.objects[i - 1].name())
        };
        text.push_str(&format!(
            "The {} is {} relative to {}.\n",
            obj.name(),
            offset_phrase(obj.offset),
            support
        ));
    }
    if include_stability {
        for (obj, entry) in scene.objects.iter().zip(&scene.stability.per_object) {
            if entry.stable {
                text.push_str(&format!("The {} will stay stationary.\n", obj.name()));
            } else {
                text.push_str(&format!("The {} will not stay stationary.\n", obj.name()));
            }
        }
        if scene.stability.tower_stable {
            text.push_str("This collection of objects will stay stationary.\n");
        } else {
            text.push_str("This collection of objects will not stay stationary.\n");
        }
    }
    ContextDoc {
        style: ContextStyle::Hn,
        text,
        source: ContextSource::Oracle,
        subject_id: scene.scene_id.clone(),
    }
}

fn offset_phrase(offset: [f64; 2]) -> String {
    let axis = |v: f64, name: &str| -> Option<String> {
        if v.abs() < 0.005 {
            None
        } else if v > 0.0 {
            Some(format!("positive {name}"))
        } else {
            Some(format!("negative {name}"))
        }
    };
    match (axis(offset[0], "x"), axis(offset[1], "y")) {
        (None, None) => "centered".to_string(),
        (Some(x), None) => format!("shifted slightly toward {x}"),
        (None, Some(y)) => format!("shifted slightly toward {y}"),
        (Some(x), Some(y)) => format!("shifted slightly toward {x} and {y}"),
    }
}

/// Reference fixtures shared by the unit and acceptance test suites.
pub mod fixtures {
    use super::*;

    /// Five objects, three collisions: mirrors the structure of the
    /// reference collision narration (participants, an entering
    /// spectator, and stationary spectators).
    pub fn three_collision_log() -> EventLog {
        let objects = vec![
            DynObject { id: 0, shape: "sphere".into(), color: "blue".into(), material: "rubber".into() },
            DynObject { id: 1, shape: "sphere".into(), color: "gray".into(), material: "rubber".into() },
            DynObject { id: 2, shape: "cube".into(), color: "cyan".into(), material: "metal".into() },
            DynObject { id: 3, shape: "sphere".into(), color: "purple".into(), material: "rubber".into() },
            DynObject { id: 4, shape: "sphere".into(), color: "blue".into(), material: "metal".into() },
        ];
        // Object 0 enters at frame 4; object 2 enters at frame 8. Objects
        // 3 and 4 never move.
        let mut frames = Vec::new();
        for fi in 0..32usize {
            let t = fi as f64;
            let mut states = Vec::new();
            if fi >= 4 {
                states.push(ObjectState {
                    object_id: 0,
                    location: [(0.1 + 0.02 * (t - 4.0)).min(1.0), 0.5],
                    velocity: [0.4, 0.0],
                });
            }
            states.push(ObjectState {
                object_id: 1,
                location: [(0.9 - 0.015 * t).max(0.0), 0.5],
                velocity: [-0.3, 0.0],
            });
            if fi >= 8 {
                states.push(ObjectState {
                    object_id: 2,
                    location: [0.2, (0.1 + 0.02 * (t - 8.0)).min(1.0)],
                    velocity: [0.0, 0.4],
                });
            }
            states.push(ObjectState { object_id: 3, location: [0.8, 0.8], velocity: [0.0, 0.0] });
            states.push(ObjectState { object_id: 4, location: [0.2, 0.9], velocity: [0.0, 0.0] });
            frames.push(FrameState { frame_index: fi, states });
        }
        let collisions = vec![
            CollisionEvent { frame_index: 12, participants: (0, 1), location: [0.5, 0.5] },
            CollisionEvent { frame_index: 20, participants: (2, 4), location: [0.2, 0.9] },
            CollisionEvent { frame_index: 28, participants: (1, 3), location: [0.8, 0.8] },
        ];
        let enters = vec![
            EnterEvent { object_id: 0, frame_index: 4 },
            EnterEvent { object_id: 2, frame_index: 8 },
        ];
        EventLog { log_id: "dynlog_0001".to_string(), objects, frames, collisions, enters }
    }
}
