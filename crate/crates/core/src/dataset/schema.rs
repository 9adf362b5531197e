use serde::{Deserialize, Serialize};

/// Fields per NSL-KDD line: 41 features, the attack label and a difficulty score.
pub const FIELD_COUNT: usize = 43;

pub const FEATURE_NAMES: [&str; 41] = [
    "duration",
    "protocol_type",
    "service",
    "flag",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
];

/// Field positions of `protocol_type`, `service` and `flag`.
pub const CATEGORICAL_FIELDS: [usize; 3] = [1, 2, 3];

pub const NUMERIC_COUNT: usize = 38;

pub fn numeric_feature_names() -> impl Iterator<Item = &'static str> {
    FEATURE_NAMES.iter().enumerate().filter(|(i, _)| !CATEGORICAL_FIELDS.contains(i)).map(|(_, n)| *n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TrafficClass {
    Normal,
    DoS,
    Probe,
    R2L,
    U2R,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 5] =
        [TrafficClass::Normal, TrafficClass::DoS, TrafficClass::Probe, TrafficClass::R2L, TrafficClass::U2R];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TrafficClass::Normal => "Normal",
            TrafficClass::DoS => "DoS",
            TrafficClass::Probe => "Probe",
            TrafficClass::R2L => "R2L",
            TrafficClass::U2R => "U2R",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        TrafficClass::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s))
    }

    pub fn names() -> Vec<String> {
        TrafficClass::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

pub const BINARY_CLASS_NAMES: [&str; 2] = ["Normal", "Attack"];
