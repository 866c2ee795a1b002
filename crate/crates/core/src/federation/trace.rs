use std::collections::HashSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    /// Round-0 copy of the server's full initial vector.
    Init,
    /// Server to client, start of a round.
    Broadcast,
    /// Client to server, end of local training.
    Upload,
}

/// One transmitted payload. `bytes` holds the little-endian `f64` encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub round: usize,
    pub kind: MessageKind,
    /// The non-server endpoint.
    pub client_id: usize,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageTrace {
    messages: Vec<Message>,
}

impl MessageTrace {
    pub fn record(&mut self, round: usize, kind: MessageKind, client_id: usize, payload: &[f64]) {
        self.messages.push(Message {
            round,
            kind,
            client_id,
            bytes: payload.iter().flat_map(|v| v.to_le_bytes()).collect(),
        });
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    /// Messages sent after initialization whose payload contains the 8-byte
    /// encoding of any value in `needles` at any byte offset.
    pub fn leaks<'a>(&'a self, needles: &[f64]) -> Vec<&'a Message> {
        let patterns: HashSet<[u8; 8]> = needles.iter().map(|v| v.to_le_bytes()).collect();
        self.messages
            .iter()
            .filter(|m| m.kind != MessageKind::Init)
            .filter(|m| {
                m.bytes
                    .windows(8)
                    .any(|w| patterns.contains(<&[u8; 8]>::try_from(w).unwrap()))
            })
            .collect()
    }
}
