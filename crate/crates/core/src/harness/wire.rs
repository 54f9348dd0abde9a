//! Frame-id discipline over recorded connection traces.

use std::collections::HashSet;

use crate::deployment::transport::{ConnTrace, Direction};
use crate::deployment::{Frame, FrameType};

/// On one connection end: every response or fault names an earlier request
/// that travelled the other way, and no id is answered twice.
pub fn check_id_discipline(events: &[(Direction, Frame)]) -> Result<(), String> {
    let mut requests = HashSet::new();
    let mut answered = HashSet::new();
    for (d, f) in events {
        let key = (*d == Direction::Sent, f.id.clone());
        if f.kind == FrameType::Request {
            if !requests.insert(key) {
                return Err(format!("request id {:?} reused", f.id));
            }
            continue;
        }
        let asked = (!key.0, key.1);
        if !requests.contains(&asked) {
            return Err(format!("answer id {:?} matches no request", f.id));
        }
        if !answered.insert(asked) {
            return Err(format!("id {:?} answered twice", f.id));
        }
    }
    Ok(())
}

/// Checks every trace; returns how many were checked.
pub fn check_traces(traces: &[std::sync::Arc<ConnTrace>]) -> Result<usize, String> {
    for t in traces {
        check_id_discipline(&t.snapshot()).map_err(|e| format!("channel {} ({}): {e}", t.channel, t.peer))?;
    }
    Ok(traces.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::State;

    #[test]
    fn out_of_order_is_fine_duplicates_are_not() {
        let req = |id: &str| (Direction::Sent, Frame::request(id, "op", State::new()));
        let resp = |id: &str| (Direction::Received, Frame::response(id, "op", State::new()));
        assert!(check_id_discipline(&[req("1"), req("2"), resp("2"), resp("1")]).is_ok());
        assert!(check_id_discipline(&[req("1"), resp("1"), resp("1")]).is_err());
        assert!(check_id_discipline(&[req("1"), resp("9")]).is_err());
    }
}
