//! Software front-end: Butterworth bandpass, onset detection, correlation
//! delay estimation and stable-window selection.

mod correlate;
mod detect;
mod filter;
mod window;

use thiserror::Error;

pub use correlate::{estimate_delay, DelayEstimate};
pub use detect::{detect_ping, PingDetector, DEFAULT_K_THRESHOLD, DEFAULT_RMS_WINDOW};
pub use filter::{design_bandpass, design_lowpass, filter_signal, Biquad, BiquadCascade, DesignInfo, FilterKind};
pub use window::{
    select_stable_window, select_window_at, CandidateScore, PreparedRecording, TdoaSet, WindowParams, WindowReport,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("invalid filter design: {0}")]
    InvalidDesign(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no ping detected")]
    NoPing,
    #[error("degenerate signal: zero energy in correlation window")]
    DegenerateSignal,
    #[error("correlation window out of range")]
    WindowOutOfRange,
    #[error("window too long for the remaining recording")]
    WindowTooLong,
    #[error("unstable window: delay variance above limit")]
    UnstableWindow,
    #[error("no ping detected on coarse channel {0}")]
    CoarseNotDetected(usize),
    #[error("expected 8 channels, got {0}")]
    ChannelCount(usize),
}
