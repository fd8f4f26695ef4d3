//! Sequential lossy compression of voltage phasor series. Each frame is
//! predicted from the generator and load recursions, the prediction error
//! is taken to the GFT domain, bits are spread over its components by
//! reverse water-filling on running variance estimates, and the states are
//! advanced from the quantized reconstruction so encoder and decoder stay
//! in lockstep.

mod model;
mod quantizer;
mod rd;
mod stream;
mod waterfill;

pub use model::{derive_states, CodecModel};
pub use quantizer::{MidRise, MAX_BITS};
pub use rd::{eval_rd, scalar_quantization_mse, RdPoint};
pub use stream::{
    decode, decode_with_states, encode, loading_factor, mse, CodecState, CodedComponent, CodedStream, Encoded, FrameRecord,
    StreamHeader, CLIP_SIGMAS, FALLBACK_FRAME, FORGET, MAGIC, MIN_ACTIVE_RATE, VERSION,
};
pub use waterfill::{allocation_at, reverse_waterfill, Allocation};
