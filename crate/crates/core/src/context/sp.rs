//! Structured-Physics tagged format: serialization of selected frames with
//! discretized, normalized locations and velocities, plus a strict
//! recursive-descent parser for the same grammar.
//!
//! Grammar (token stream, single-space separated):
//!
//! ```text
//! doc        := frame*
//! frame      := [FRAME] [OBJECTS] obj* [/OBJECTS] past [/FRAME]
//! obj        := [OBJ] SHAPE COLOR MATERIAL [LOC] INT INT [/LOC] [VEL] INT INT [/VEL] [/OBJ]
//! past       := [COLLISION_PAST] collision* [/COLLISION_PAST]
//! collision  := [COLLISION] desc desc [LOC] INT INT [/LOC] [/COLLISION]
//! desc       := [OBJ] SHAPE COLOR MATERIAL [/OBJ]
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ContextDoc, ContextSource, ContextStyle, EventLog};

pub const DEFAULT_BINS: u32 = 32;

/// Location bin: [0,1] -> {0..bins-1}.
pub fn discretize_location(v: f64, bins: u32) -> u32 {
    ((v * bins as f64) as u32).min(bins - 1)
}

/// Velocity bin: [-1,1] -> {0..bins-1}, with 0 mapping to bins/2.
pub fn discretize_velocity(v: f64, bins: u32) -> u32 {
    (((v + 1.0) / 2.0 * bins as f64) as u32).min(bins - 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpDescriptor {
    pub shape: String,
    pub color: String,
    pub material: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpObject {
    pub descriptor: SpDescriptor,
    pub loc: [u32; 2],
    pub vel: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpCollision {
    pub first: SpDescriptor,
    pub second: SpDescriptor,
    pub loc: [u32; 2],
}

/// One frame at bin resolution: the discretized object states plus every
/// collision with frame index at or before this frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpFrame {
    pub objects: Vec<SpObject>,
    pub past_collisions: Vec<SpCollision>,
}

/// Project selected frames of an event log to bin resolution. This is the
/// reference the parser round-trip is checked against.
pub fn discretize_frames(
    log: &EventLog,
    frame_indices: &[usize],
    bins: u32,
) -> Result<Vec<SpFrame>> {
    if bins < 2 {
        return Err(Error::Config("bins must be >= 2".to_string()));
    }
    let mut frames = Vec::with_capacity(frame_indices.len());
    for &fi in frame_indices {
        let frame = log
            .frames
            .iter()
            .find(|f| f.frame_index == fi)
            .ok_or_else(|| Error::Input(format!("frame index {fi} not in log")))?;
        let mut objects = Vec::new();
        for state in &frame.states {
            let obj = log
                .object(state.object_id)
                .ok_or_else(|| Error::Input(format!("unknown object {}", state.object_id)))?;
            objects.push(SpObject {
                descriptor: SpDescriptor {
                    shape: obj.shape.clone(),
                    color: obj.color.clone(),
                    material: obj.material.clone(),
                },
                loc: [
                    discretize_location(state.location[0], bins),
                    discretize_location(state.location[1], bins),
                ],
                vel: [
                    discretize_velocity(state.velocity[0], bins),
                    discretize_velocity(state.velocity[1], bins),
                ],
            });
        }
        let mut past_collisions = Vec::new();
        for c in log.collisions.iter().filter(|c| c.frame_index <= fi) {
            let desc = |id: u32| -> Result<SpDescriptor> {
                let o = log
                    .object(id)
                    .ok_or_else(|| Error::Input(format!("unknown collision participant {id}")))?;
                Ok(SpDescriptor {
                    shape: o.shape.clone(),
                    color: o.color.clone(),
                    material: o.material.clone(),
                })
            };
            past_collisions.push(SpCollision {
                first: desc(c.participants.0)?,
                second: desc(c.participants.1)?,
                loc: [
                    discretize_location(c.location[0], bins),
                    discretize_location(c.location[1], bins),
                ],
            });
        }
        frames.push(SpFrame { objects, past_collisions });
    }
    Ok(frames)
}

fn render_descriptor(out: &mut Vec<String>, d: &SpDescriptor) {
    out.push(d.shape.clone());
    out.push(d.color.clone());
    out.push(d.material.clone());
}

/// Serialize frames to SP text.
pub fn render_sp(frames: &[SpFrame]) -> String {
    let mut tokens: Vec<String> = Vec::new();
    for frame in frames {
        tokens.push("[FRAME]".into());
        tokens.push("[OBJECTS]".into());
        for obj in &frame.objects {
            tokens.push("[OBJ]".into());
            render_descriptor(&mut tokens, &obj.descriptor);
            tokens.push("[LOC]".into());
            tokens.push(obj.loc[0].to_string());
            tokens.push(obj.loc[1].to_string());
            tokens.push("[/LOC]".into());
            tokens.push("[VEL]".into());
            tokens.push(obj.vel[0].to_string());
            tokens.push(obj.vel[1].to_string());
            tokens.push("[/VEL]".into());
            tokens.push("[/OBJ]".into());
        }
        tokens.push("[/OBJECTS]".into());
        tokens.push("[COLLISION_PAST]".into());
        for c in &frame.past_collisions {
            tokens.push("[COLLISION]".into());
            tokens.push("[OBJ]".into());
            render_descriptor(&mut tokens, &c.first);
            tokens.push("[/OBJ]".into());
            tokens.push("[OBJ]".into());
            render_descriptor(&mut tokens, &c.second);
            tokens.push("[/OBJ]".into());
            tokens.push("[LOC]".into());
            tokens.push(c.loc[0].to_string());
            tokens.push(c.loc[1].to_string());
            tokens.push("[/LOC]".into());
            tokens.push("[/COLLISION]".into());
        }
        tokens.push("[/COLLISION_PAST]".into());
        tokens.push("[/FRAME]".into());
    }
    tokens.join(" ")
}

/// Build the SP context document for the selected frames.
pub fn build_sp(log: &EventLog, frame_indices: &[usize], bins: u32) -> Result<ContextDoc> {
    let frames = discretize_frames(log, frame_indices, bins)?;
    Ok(ContextDoc {
        style: ContextStyle::Sp,
        text: render_sp(&frames),
        source: ContextSource::Oracle,
        subject_id: log.log_id.clone(),
    })
}

/// Uniformly sample `count` frame indices from the log, order preserved.
pub fn sample_frame_indices(log: &EventLog, count: usize) -> Vec<usize> {
    let n = log.frames.len();
    if n == 0 || count == 0 {
        return Vec::new();
    }
    if count >= n {
        return log.frames.iter().map(|f| f.frame_index).collect();
    }
    (0..count)
        .map(|i| {
            // Midpoint of the i-th of `count` equal strata.
            let pos = (2 * i + 1) * n / (2 * count);
            log.frames[pos.min(n - 1)].frame_index
        })
        .collect()
}

const KNOWN_TAGS: &[&str] = &[
    "[FRAME]", "[/FRAME]", "[OBJECTS]", "[/OBJECTS]", "[OBJ]", "[/OBJ]", "[LOC]", "[/LOC]",
    "[VEL]", "[/VEL]", "[COLLISION_PAST]", "[/COLLISION_PAST]", "[COLLISION]", "[/COLLISION]",
];

struct Parser<'a> {
    tokens: Vec<&'a str>,
    pos: usize,
    bins: u32,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, bins: u32) -> Self {
        Parser { tokens: text.split_whitespace().collect(), pos: 0, bins }
    }

    fn err(&self, expected: &str) -> Error {
        Error::SpSyntax {
            token_index: self.pos,
            expected: expected.to_string(),
            found: self.tokens.get(self.pos).unwrap_or(&"<end of input>").to_string(),
        }
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).copied()
    }

    fn expect(&mut self, tag: &str) -> Result<()> {
        if self.peek() == Some(tag) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(tag))
        }
    }

    fn word(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(t) if !t.starts_with('[') => {
                self.pos += 1;
                Ok(t.to_string())
            }
            _ => Err(self.err(what)),
        }
    }

    fn bin(&mut self) -> Result<u32> {
        let token = match self.peek() {
            Some(t) if !t.starts_with('[') => t,
            _ => return Err(self.err("bin index")),
        };
        let value: u32 = token.parse().map_err(|_| self.err("integer bin index"))?;
        if value >= self.bins {
            return Err(Error::SpSyntax {
                token_index: self.pos,
                expected: format!("bin index in [0, {})", self.bins),
                found: token.to_string(),
            });
        }
        self.pos += 1;
        Ok(value)
    }

    fn bin_pair(&mut self, open: &str, close: &str) -> Result<[u32; 2]> {
        self.expect(open)?;
        let a = self.bin()?;
        let b = self.bin()?;
        self.expect(close)?;
        Ok([a, b])
    }

    fn descriptor(&mut self) -> Result<SpDescriptor> {
        Ok(SpDescriptor {
            shape: self.word("SHAPE")?,
            color: self.word("COLOR")?,
            material: self.word("MATERIAL")?,
        })
    }

    fn object(&mut self) -> Result<SpObject> {
        self.expect("[OBJ]")?;
        let descriptor = self.descriptor()?;
        let loc = self.bin_pair("[LOC]", "[/LOC]")?;
        let vel = self.bin_pair("[VEL]", "[/VEL]")?;
        self.expect("[/OBJ]")?;
        Ok(SpObject { descriptor, loc, vel })
    }

    fn collision(&mut self) -> Result<SpCollision> {
        self.expect("[COLLISION]")?;
        self.expect("[OBJ]")?;
        let first = self.descriptor()?;
        self.expect("[/OBJ]")?;
        self.expect("[OBJ]")?;
        let second = self.descriptor()?;
        self.expect("[/OBJ]")?;
        let loc = self.bin_pair("[LOC]", "[/LOC]")?;
        self.expect("[/COLLISION]")?;
        Ok(SpCollision { first, second, loc })
    }

    fn frame(&mut self) -> Result<SpFrame> {
        self.expect("[FRAME]")?;
        self.expect("[OBJECTS]")?;
        let mut objects = Vec::new();
        while self.peek() == Some("[OBJ]") {
            objects.push(self.object()?);
        }
        self.expect("[/OBJECTS]")?;
        self.expect("[COLLISION_PAST]")?;
        let mut past_collisions = Vec::new();
        while self.peek() == Some("[COLLISION]") {
            past_collisions.push(self.collision()?);
        }
        self.expect("[/COLLISION_PAST]")?;
        self.expect("[/FRAME]")?;
        Ok(SpFrame { objects, past_collisions })
    }

    fn document(&mut self) -> Result<Vec<SpFrame>> {
        let mut frames = Vec::new();
        while let Some(token) = self.peek() {
            if token.starts_with('[') && !KNOWN_TAGS.contains(&token) {
                return Err(self.err("a known tag"));
            }
            frames.push(self.frame()?);
        }
        Ok(frames)
    }
}

/// Strict parse of SP text back to frames. Rejects unknown tags,
/// unbalanced tags, non-integer bins, and bins outside [0, bins).
pub fn parse_sp(text: &str, bins: u32) -> Result<Vec<SpFrame>> {
    if bins < 2 {
        return Err(Error::Config("bins must be >= 2".to_string()));
    }
    Parser::new(text, bins).document()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::fixtures::three_collision_log;

    #[test]
    fn single_midpoint_object_matches_the_expected_tokens() {
        use crate::context::{DynObject, FrameState, ObjectState};
        let log = EventLog {
            log_id: "mid".to_string(),
            objects: vec![DynObject {
                id: 0,
                shape: "sphere".into(),
                color: "blue".into(),
                material: "rubber".into(),
            }],
            frames: vec![FrameState {
                frame_index: 0,
                states: vec![ObjectState {
                    object_id: 0,
                    location: [0.5, 0.5],
                    velocity: [0.0, 0.0],
                }],
            }],
            collisions: vec![],
            enters: vec![],
        };
        let doc = build_sp(&log, &[0], 32).unwrap();
        assert_eq!(
            doc.text,
            "[FRAME] [OBJECTS] [OBJ] sphere blue rubber [LOC] 16 16 [/LOC] [VEL] 16 16 [/VEL] [/OBJ] [/OBJECTS] [COLLISION_PAST] [/COLLISION_PAST] [/FRAME]"
        );
    }

    #[test]
    fn past_collisions_appear_once_reached() {
        let log = three_collision_log();
        let doc = build_sp(&log, &[8, 16], 32).unwrap();
        let frames = parse_sp(&doc.text, 32).unwrap();
        assert_eq!(frames[0].past_collisions.len(), 0);
        assert_eq!(frames[1].past_collisions.len(), 1);
        assert_eq!(frames[1].past_collisions[0].first.color, "blue");
    }

    #[test]
    fn eight_sampled_frames_produce_eight_blocks_in_order() {
        let log = three_collision_log();
        let indices = sample_frame_indices(&log, 8);
        assert_eq!(indices.len(), 8);
        assert!(indices.windows(2).all(|w| w[0] < w[1]));
        let doc = build_sp(&log, &indices, 32).unwrap();
        assert_eq!(doc.text.matches("[FRAME]").count(), 8);
        let frames = parse_sp(&doc.text, 32).unwrap();
        assert_eq!(frames, discretize_frames(&log, &indices, 32).unwrap());
    }

    #[test]
    fn frame_without_object_list_is_rejected_at_token_2() {
        let err = parse_sp("[FRAME] [/FRAME]", 32).unwrap_err();
        match err {
            Error::SpSyntax { token_index, expected, .. } => {
                assert_eq!(token_index, 1);
                assert_eq!(expected, "[OBJECTS]");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn one_component_velocity_is_an_arity_error() {
        let text = "[FRAME] [OBJECTS] [OBJ] sphere blue rubber [LOC] 16 16 [/LOC] [VEL] 16 [/VEL] [/OBJ] [/OBJECTS] [COLLISION_PAST] [/COLLISION_PAST] [/FRAME]";
        let err = parse_sp(text, 32).unwrap_err();
        assert!(matches!(err, Error::SpSyntax { .. }), "{err}");
    }

    #[test]
    fn out_of_range_bin_is_rejected() {
        let text = "[FRAME] [OBJECTS] [OBJ] sphere blue rubber [LOC] 40 16 [/LOC] [VEL] 16 16 [/VEL] [/OBJ] [/OBJECTS] [COLLISION_PAST] [/COLLISION_PAST] [/FRAME]";
        let err = parse_sp(text, 32).unwrap_err();
        assert!(err.to_string().contains("[0, 32)"), "{err}");
    }

    #[test]
    fn unknown_tag_is_rejected() {
        let err = parse_sp("[BOGUS] [FRAME]", 32).unwrap_err();
        assert!(matches!(err, Error::SpSyntax { token_index: 0, .. }), "{err}");
    }

    #[test]
    fn frame_index_out_of_range_is_an_input_error() {
        let log = three_collision_log();
        assert!(matches!(build_sp(&log, &[999], 32), Err(Error::Input(_))));
    }
}
