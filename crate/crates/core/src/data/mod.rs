//! Dataset plumbing: protocol files, waveform I/O, the synthetic toy corpus
//! and attention-mask export.

pub mod masks;
mod protocol;
pub mod toy;
mod wav;

pub use masks::{export_masks, MaskExport, MaskMode};
pub use protocol::{
    parse_protocol, read_protocol, serialize_protocol, Key, Partition, ProtocolEntry,
};
pub use toy::{gen_toy_dataset, ChannelParams, ToyDataset, ToySpec};
pub use wav::{read_wav, write_wav};
