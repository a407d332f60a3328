use serde::{Deserialize, Serialize};

use super::SimError;
use crate::trace::{Action, Direction, Os, Service};

/// Which transfer a model sizes: the push-channel message itself or the
/// out-of-band attachment upload.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    #[default]
    Message,
    Attachment,
}

/// Fixed part of one (direction, action) class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionShape {
    pub direction: Direction,
    pub action: Action,
    pub base_overhead: u32,
    /// Content packets emitted per trace of this class.
    #[serde(default = "one")]
    pub packets: u32,
}

fn one() -> u32 {
    1
}

/// Deterministic map from an encoded plaintext length to a payload length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeModel {
    pub name: String,
    pub service: Service,
    pub os: Os,
    pub channel: Channel,
    pub shapes: Vec<ActionShape>,
    pub block_size: u32,
    pub compression_factor: f64,
    pub direction_delta: u32,
    pub max_payload: u32,
    /// Lengths of protocol packets that accompany every action.
    #[serde(default)]
    pub control_lengths: Vec<u32>,
}

impl SizeModel {
    pub fn shape(&self, direction: Direction, action: Action) -> Option<&ActionShape> {
        self.shapes
            .iter()
            .find(|s| s.direction == direction && s.action == action)
    }

    /// Actions this model can emit in `direction`.
    pub fn actions(&self, direction: Direction) -> Vec<Action> {
        let mut out: Vec<Action> = self
            .shapes
            .iter()
            .filter(|s| s.direction == direction)
            .map(|s| s.action)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |why: String| {
            Err(SimError::InvalidModel {
                model: self.name.clone(),
                reason: why,
            })
        };
        if self.block_size == 0 {
            return bad("block_size must be at least 1".into());
        }
        if !(self.compression_factor > 0.0 && self.compression_factor <= 1.0) {
            return bad("compression_factor must lie in (0, 1]".into());
        }
        for (i, s) in self.shapes.iter().enumerate() {
            if s.action == Action::Control {
                return bad("control packets come from control_lengths, not shapes".into());
            }
            if s.packets == 0 {
                return bad(format!("{} {} emits no packets", s.direction, s.action));
            }
            if self.shapes[..i]
                .iter()
                .any(|t| t.direction == s.direction && t.action == s.action)
            {
                return bad(format!("duplicate shape for {} {}", s.direction, s.action));
            }
            if s.direction == Direction::FromService && s.base_overhead <= self.direction_delta {
                return bad(format!("from-service {} overhead does not exceed the delta", s.action));
            }
        }
        // Content-bearing messages must lose exactly the delta in transit.
        for action in [Action::Text, Action::Image] {
            if let (Some(to), Some(from)) = (
                self.shape(Direction::ToService, action),
                self.shape(Direction::FromService, action),
            ) {
                if to.base_overhead != from.base_overhead {
                    return bad(format!("{action} overhead differs between directions"));
                }
            }
        }
        if self.control_lengths.contains(&0) {
            return bad("control lengths must be positive".into());
        }
        Ok(())
    }
}

/// Payload bytes of a message with `encoded` plaintext bytes:
/// `base + block * ceil(cf * encoded / block)`, less the direction delta for
/// service-to-client traffic.
pub fn payload_length(model: &SizeModel, direction: Direction, action: Action, encoded: u64) -> Result<u32, SimError> {
    let shape = model.shape(direction, action).ok_or(SimError::NoShape {
        model: model.name.clone(),
        direction,
        action,
    })?;
    let block = u64::from(model.block_size);
    let compressed = model.compression_factor * encoded as f64;
    // Guard against 0.54 * 100 = 54.000000000000007 style rounding pushing an
    // exact multiple into the next block.
    let blocks = ((compressed - 1e-9) / block as f64).ceil().max(0.0) as u64;
    let mut total = u64::from(shape.base_overhead) + block * blocks;
    if direction == Direction::FromService {
        total -= u64::from(model.direction_delta);
    }
    if total > u64::from(model.max_payload) {
        return Err(SimError::Overflow {
            model: model.name.clone(),
            payload: total,
            max: model.max_payload,
        });
    }
    Ok(total as u32)
}
