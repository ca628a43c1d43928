//! Edit-script JSON documents.
//!
//! ```json
//! {
//!   "base": {"seed": 7, "segmentation": "room.png"},
//!   "edits": [
//!     {"op": "remove", "object": "bed_031"},
//!     {"op": "insert", "object": "bed_007", "position": [120, 160]},
//!     {"op": "global_style", "style_seed": 3, "layers": [9, 14]}
//!   ]
//! }
//! ```

use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Remove,
    Insert,
    Shift,
    Rotate,
    RestyleObject,
    GlobalStyle,
    ClearRoom,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Remove => "remove",
            OpKind::Insert => "insert",
            OpKind::Shift => "shift",
            OpKind::Rotate => "rotate",
            OpKind::RestyleObject => "restyle_object",
            OpKind::GlobalStyle => "global_style",
            OpKind::ClearRoom => "clear_room",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Explicit per-layer codes, used instead of `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codes: Option<Vec<Vec<f64>>>,
    /// Path to an indexed segmentation PNG (palette in the sidecar `.json`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<String>,
}

impl BaseSpec {
    pub fn seed(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..Self::default()
        }
    }
}

/// One edit. Which fields are required or allowed depends on `op`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditOp {
    pub op: OpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
    /// Target bbox center for `insert`, offset for `shift` and `restyle_object`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[i64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<Vec<f64>>,
    /// Inclusive layer range: style range, or pose layers for `rotate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<[usize; 2]>,
    /// `[left, right]` pose-cluster centers for `rotate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<[usize; 2]>,
}

impl EditOp {
    pub fn new(op: OpKind) -> Self {
        Self {
            op,
            object: None,
            layer: None,
            position: None,
            priority: None,
            s: None,
            steps: None,
            style_seed: None,
            code: None,
            layers: None,
            centers: None,
        }
    }

    pub fn remove(object: &str) -> Self {
        Self::new(OpKind::Remove).object(object)
    }

    pub fn insert(object: &str) -> Self {
        Self::new(OpKind::Insert).object(object)
    }

    pub fn clear_room() -> Self {
        Self::new(OpKind::ClearRoom)
    }

    pub fn object(mut self, id: &str) -> Self {
        self.object = Some(id.to_string());
        self
    }

    pub fn at_layer(mut self, layer: usize) -> Self {
        self.layer = Some(layer);
        self
    }

    pub fn position(mut self, x: i64, y: i64) -> Self {
        self.position = Some([x, y]);
        self
    }

    pub fn priority(mut self, p: u32) -> Self {
        self.priority = Some(p);
        self
    }

    pub fn style_seed(mut self, seed: u64) -> Self {
        self.style_seed = Some(seed);
        self
    }

    pub fn layer_range(mut self, lo: usize, hi: usize) -> Self {
        self.layers = Some([lo, hi]);
        self
    }

    pub fn rotation(mut self, left: usize, right: usize, s: usize, steps: usize) -> Self {
        self.centers = Some([left, right]);
        self.s = Some(s);
        self.steps = Some(steps);
        self
    }

    /// Rejects missing or disallowed fields; `index` locates the op for error pointers.
    pub(crate) fn check_fields(&self, index: usize) -> Result<()> {
        use OpKind::*;
        let at = |field: &str| format!("/edits/{index}/{field}");
        let present = [
            ("object", self.object.is_some()),
            ("layer", self.layer.is_some()),
            ("position", self.position.is_some()),
            ("priority", self.priority.is_some()),
            ("s", self.s.is_some()),
            ("S", self.steps.is_some()),
            ("style_seed", self.style_seed.is_some()),
            ("code", self.code.is_some()),
            ("layers", self.layers.is_some()),
            ("centers", self.centers.is_some()),
        ];
        let (required, allowed): (&[&str], &[&str]) = match self.op {
            Remove => (&["object"], &["layer", "priority"]),
            Insert => (&["object"], &["layer", "position", "priority"]),
            Shift => (&["object", "position"], &["layer", "priority"]),
            Rotate => (
                &["object", "s", "S", "centers"],
                &["layer", "layers", "priority"],
            ),
            RestyleObject => (
                &["object"],
                &["style_seed", "code", "layers", "position", "priority"],
            ),
            GlobalStyle => (&[], &["style_seed", "code", "layers"]),
            ClearRoom => (&[], &["layer"]),
        };
        for (name, is_set) in present {
            if required.contains(&name) && !is_set {
                return Err(Error::parse(
                    at(name),
                    format!("`{}` requires `{name}`", self.op.name()),
                ));
            }
            if is_set && !required.contains(&name) && !allowed.contains(&name) {
                return Err(Error::parse(
                    at(name),
                    format!("`{name}` is not allowed for `{}`", self.op.name()),
                ));
            }
        }
        if matches!(self.op, RestyleObject | GlobalStyle) {
            match (self.style_seed.is_some(), self.code.is_some()) {
                (true, true) => {
                    return Err(Error::parse(
                        at("code"),
                        "give either `style_seed` or `code`, not both",
                    ))
                }
                (false, false) => {
                    return Err(Error::parse(
                        at("style_seed"),
                        "`style_seed` or `code` is required",
                    ))
                }
                _ => {}
            }
        }
        if let Some([lo, hi]) = self.layers {
            if lo > hi {
                return Err(Error::parse(
                    at("layers"),
                    format!("empty range [{lo}, {hi}]"),
                ));
            }
        }
        if let (Some(s), Some(steps)) = (self.s, self.steps) {
            if steps == 0 {
                return Err(Error::parse(at("S"), "`S` must be at least 1"));
            }
            if s > steps {
                return Err(Error::parse(
                    at("s"),
                    format!("step {s} exceeds S = {steps}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditScript {
    pub base: BaseSpec,
    #[serde(default)]
    pub edits: Vec<EditOp>,
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => {
                out.push('/');
                out.push_str(&key.replace('~', "~0").replace('/', "~1"));
            }
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

impl EditScript {
    pub fn new(base: BaseSpec) -> Self {
        Self {
            base,
            edits: Vec::new(),
        }
    }

    /// Parses and schema-checks a script (no model or bank needed).
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| Error::parse("", format!("script is not UTF-8: {e}")))?;
        let de = &mut serde_json::Deserializer::from_str(text);
        let script: EditScript = serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = pointer_of(e.path());
            Error::parse(pointer, e.into_inner().to_string())
        })?;
        script.check()?;
        Ok(script)
    }

    pub fn check(&self) -> Result<()> {
        match (self.base.seed.is_some(), self.base.codes.is_some()) {
            (true, true) => {
                return Err(Error::parse("/base/codes", "give either `seed` or `codes`"))
            }
            (false, false) => return Err(Error::parse("/base", "`seed` or `codes` is required")),
            _ => {}
        }
        for (i, op) in self.edits.iter().enumerate() {
            op.check_fields(i)?;
        }
        Ok(())
    }

    /// Canonical serialization: fixed key order, shortest round-trip floats.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_err(text: &str) -> (String, String) {
        match EditScript::from_json(text.as_bytes()).unwrap_err() {
            Error::Parse { pointer, message } => (pointer, message),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_program() {
        let s = EditScript::from_json(br#"{"base":{"seed":7},"edits":[]}"#).unwrap();
        assert_eq!(s.base.seed, Some(7));
        assert!(s.edits.is_empty());
    }

    #[test]
    fn unknown_op_pointer() {
        let (ptr, _) = parse_err(r#"{"base":{"seed":7},"edits":[{"op":"teleport"}]}"#);
        assert_eq!(ptr, "/edits/0/op");
    }

    #[test]
    fn unknown_field_rejected() {
        let (ptr, msg) =
            parse_err(r#"{"base":{"seed":7},"edits":[{"op":"remove","object":"a","color":1}]}"#);
        assert!(ptr.starts_with("/edits/0"), "{ptr}");
        assert!(msg.contains("color"), "{msg}");
    }

    #[test]
    fn kind_specific_fields() {
        let (ptr, _) = parse_err(r#"{"base":{"seed":1},"edits":[{"op":"insert"}]}"#);
        assert_eq!(ptr, "/edits/0/object");
        let (ptr, _) =
            parse_err(r#"{"base":{"seed":1},"edits":[{"op":"clear_room","object":"x"}]}"#);
        assert_eq!(ptr, "/edits/0/object");
        let (ptr, _) = parse_err(
            r#"{"base":{"seed":1},"edits":[{"op":"rotate","object":"b","s":4,"S":3,"centers":[0,1]}]}"#,
        );
        assert_eq!(ptr, "/edits/0/s");
        let (ptr, _) = parse_err(r#"{"base":{"seed":1},"edits":[{"op":"global_style"}]}"#);
        assert_eq!(ptr, "/edits/0/style_seed");
    }

    #[test]
    fn base_needs_seed_or_codes() {
        let (ptr, _) = parse_err(r#"{"base":{},"edits":[]}"#);
        assert_eq!(ptr, "/base");
        let (ptr, _) = parse_err(r#"{"edits":[]}"#);
        assert_eq!(ptr, "");
    }

    #[test]
    fn not_utf8() {
        let err = EditScript::from_json(&[0xff, 0xfe]).unwrap_err();
        assert!(err.is_parse_error());
    }

    #[test]
    fn canonical_text_is_stable() {
        let text = r#"{"edits":[{"S":4,"centers":[0,1],"s":2,"object":"b","op":"rotate"}],"base":{"seed":3}}"#;
        let a = EditScript::from_json(text.as_bytes()).unwrap();
        let once = a.to_json();
        let b = EditScript::from_json(once.as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(once, b.to_json());
    }
}
