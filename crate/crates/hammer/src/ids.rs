//! The identifiers a worker archives or reads.

use fdb_core::{Key, Request, Schema};
use serde::{Deserialize, Serialize};

/// Schema used when the configuration names none.
pub const DEFAULT_SCHEMA: &str = "dataset: class, stream, expver, date, time\n\
                                  collocation: type, levtype, number, levelist\n\
                                  element: step, param";

pub fn default_schema() -> Schema {
    Schema::parse(DEFAULT_SCHEMA).expect("built-in schema")
}

/// The keyword values shared by every field of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetValues {
    pub class: String,
    pub stream: String,
    pub expver: String,
    pub date: String,
    pub time: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub levtype: String,
}

impl Default for DatasetValues {
    fn default() -> Self {
        DatasetValues {
            class: "od".into(),
            stream: "oper".into(),
            expver: "0001".into(),
            date: "20231201".into(),
            time: "1200".into(),
            kind: "ef".into(),
            levtype: "ml".into(),
        }
    }
}

impl DatasetValues {
    pub fn identifier(&self, member: u32, level: u32, step: u32, param: u32) -> Key {
        let pairs = [
            ("class", self.class.clone()),
            ("stream", self.stream.clone()),
            ("expver", self.expver.clone()),
            ("date", self.date.clone()),
            ("time", self.time.clone()),
            ("type", self.kind.clone()),
            ("levtype", self.levtype.clone()),
            ("number", member.to_string()),
            ("levelist", level.to_string()),
            ("step", step.to_string()),
            ("param", param_value(param)),
        ];
        Key::new(pairs).expect("distinct keywords")
    }
}

/// Parameter codes start at 129, GRIB-style.
pub fn param_value(p: u32) -> String {
    (129 + p).to_string()
}

/// Fields of one step, across every member listed.
pub fn step_request(step: u32) -> Request {
    Request::all().with("step", [step.to_string()]).expect("one keyword")
}
