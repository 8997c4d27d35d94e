//! File formats: WAV audio, CSV records and sweep tables, key-value
//! reports, TOML configuration and session manifests.

pub mod config;
pub mod manifest;
pub mod records;
pub mod report;
pub mod wav;

pub use config::{apply_overrides, config_to_toml, load_config, parse_config};
pub use manifest::{SessionAudio, SessionManifest};
pub use records::{read_records, write_records, write_sweep, write_truth};
pub use report::{read_report, report_text, write_report, KeyValues};
pub use wav::{read_audio, read_audio_blocks, write_audio, Encoding, WavReader, WavSpec};
