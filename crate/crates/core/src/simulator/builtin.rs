use super::size_model::{ActionShape, Channel, SizeModel};
use crate::trace::{Action, Direction, Os, Service};

/// Per-action base overheads as `(action, to-service, from-service)`.
///
/// Content actions (text, image) share one overhead in both directions so the
/// delta alone separates them. The numbers are synthetic stand-ins chosen for
/// structure: iOS and OSX text sit on different residues mod 16, no action
/// length of one OS appears in the other, and iOS read receipts going to the
/// service share the start-typing length.
type Row = (Action, u32, u32);

fn shapes(rows: &[Row], start_packets: u32) -> Vec<ActionShape> {
    let mut out = Vec::new();
    for &(action, to, from) in rows {
        for (direction, base) in [(Direction::ToService, to), (Direction::FromService, from)] {
            let packets = if action == Action::Start && direction == Direction::ToService {
                start_packets
            } else {
                1
            };
            out.push(ActionShape {
                direction,
                action,
                base_overhead: base,
                packets,
            });
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn message_model(
    name: &str,
    service: Service,
    os: Os,
    rows: &[Row],
    block_size: u32,
    compression_factor: f64,
    direction_delta: u32,
    control_lengths: Vec<u32>,
) -> SizeModel {
    SizeModel {
        name: name.into(),
        service,
        os,
        channel: Channel::Message,
        // iOS typing notifications go out twice, which is what tips the shared
        // to-service length toward start-typing.
        shapes: shapes(rows, if os == Os::Ios { 2 } else { 1 }),
        block_size,
        compression_factor,
        direction_delta,
        max_payload: 4096,
        control_lengths,
    }
}

/// The six shipped size models: iMessage on iOS and OSX, WhatsApp, Viber,
/// Telegram, and the iMessage attachment upload channel.
///
/// All byte values are synthetic. They reproduce the observable structure
/// (block sizes, direction deltas, iOS compressing harder than OSX) rather
/// than any captured absolute size.
pub fn builtin_models() -> Vec<SizeModel> {
    use Action::*;
    vec![
        message_model(
            "imessage-ios",
            Service::IMessage,
            Os::Ios,
            &[(Start, 148, 150), (Stop, 141, 141), (Text, 180, 180), (Image, 1391, 1391), (Read, 148, 157)],
            16,
            0.346,
            64,
            vec![53, 85],
        ),
        message_model(
            "imessage-osx",
            Service::IMessage,
            Os::Osx,
            &[(Start, 166, 166), (Stop, 170, 170), (Text, 236, 236), (Image, 1395, 1395), (Read, 175, 175)],
            16,
            0.54,
            112,
            vec![61, 101],
        ),
        message_model(
            "whatsapp",
            Service::WhatsApp,
            Os::Unknown,
            &[(Start, 90, 90), (Stop, 91, 91), (Text, 120, 120), (Image, 1500, 1500), (Read, 95, 95)],
            1,
            1.0,
            0,
            vec![60, 66],
        ),
        message_model(
            "viber",
            Service::Viber,
            Os::Unknown,
            &[(Start, 100, 100), (Stop, 104, 104), (Text, 140, 140), (Image, 1600, 1600), (Read, 108, 108)],
            1,
            1.0,
            0,
            vec![70, 78],
        ),
        message_model(
            "telegram",
            Service::Telegram,
            Os::Unknown,
            &[(Start, 160, 160), (Stop, 164, 164), (Text, 200, 200), (Image, 1500, 1500), (Read, 172, 172)],
            16,
            1.0,
            0,
            vec![56, 88],
        ),
        SizeModel {
            name: "imessage-attachment".into(),
            service: Service::IMessage,
            os: Os::Unknown,
            channel: Channel::Attachment,
            shapes: shapes(&[(Image, 389, 389)], 1),
            block_size: 16,
            compression_factor: 1.0,
            direction_delta: 0,
            max_payload: 1 << 20,
            control_lengths: vec![],
        },
    ]
}

/// The shipped model for a (service, os, channel) triple.
pub fn builtin_model(service: Service, os: Os, channel: Channel) -> Option<SizeModel> {
    builtin_models()
        .into_iter()
        .find(|m| m.service == service && m.os == os && m.channel == channel)
}
