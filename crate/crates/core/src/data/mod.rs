//! Series ingestion, the benchmark split protocol, sliding windows,
//! dataset standardization, synthetic corpora and anomaly injection.

mod anomaly;
mod scale;
mod series;
mod split;
mod synth;
mod window;

pub use anomaly::{inject_anomaly, AnomalyKind, AnomalySpec, Injected};
pub use scale::{standardize, Standardizer};
pub use series::{load_csv, write_csv, Series};
pub use split::{Split, SplitSpec};
pub use synth::{synth_series, SynthSpec};
pub use window::{anchors, make_windows, Dataset, Window};
