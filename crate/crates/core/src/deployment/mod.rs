//! Interfaces, ports and the `frame/1` wire protocol.

pub mod client;
pub mod frame;
pub mod server;
pub mod transport;
pub mod types;

pub use client::{send_notification, send_solicit, solicit_with, Client, Connector};
pub use frame::{decode_frame, encode_frame, Frame, FrameType};
pub use server::{serve, FrameHandler, Listener, Responder};
pub use transport::{memnet_pair, LocalRegistry, MemEndpoint, Net};
pub use types::{
    FieldType, InputPort, Interface, Location, MessageType, OperationDecl, OperationKind, OutputPort,
    FRAME_PROTOCOL,
};
