//! Unified multimodal instruction: text plus typed visual references, the
//! structural task inference table, and the JSON Lines manifest format.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::codec::{encode, LatentGrid, LatentRole, Video, VideoMask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    T2V,
    I2V,
    FLF2V,
    InContextGen,
    InContextEdit,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::T2V,
        TaskKind::I2V,
        TaskKind::FLF2V,
        TaskKind::InContextGen,
        TaskKind::InContextEdit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::T2V => "T2V",
            TaskKind::I2V => "I2V",
            TaskKind::FLF2V => "FLF2V",
            TaskKind::InContextGen => "InContextGen",
            TaskKind::InContextEdit => "InContextEdit",
        }
    }

    pub fn parse(s: &str) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|t| t.name() == s)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefKind {
    Image,
    Video,
    FirstFrame,
    LastFrame,
}

impl RefKind {
    pub fn name(self) -> &'static str {
        match self {
            RefKind::Image => "image",
            RefKind::Video => "video",
            RefKind::FirstFrame => "first_frame",
            RefKind::LastFrame => "last_frame",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefPayload {
    Path(PathBuf),
    Inline(Arc<Video>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualRef {
    kind: RefKind,
    pub payload: RefPayload,
}

impl VisualRef {
    pub fn new(kind: RefKind, payload: RefPayload) -> Self {
        Self { kind, payload }
    }

    pub fn path(kind: RefKind, path: impl Into<PathBuf>) -> Self {
        Self::new(kind, RefPayload::Path(path.into()))
    }

    pub fn inline(kind: RefKind, video: Video) -> Self {
        Self::new(kind, RefPayload::Inline(Arc::new(video)))
    }

    pub fn kind(&self) -> RefKind {
        self.kind
    }

    /// Resolves the payload, reading it relative to `base` when it is a path.
    pub fn resolve(&self, base: &Path) -> Result<Video> {
        match &self.payload {
            RefPayload::Inline(v) => Ok((**v).clone()),
            RefPayload::Path(p) => Video::load(&base.join(p)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub text: String,
    pub refs: Vec<VisualRef>,
}

impl Instruction {
    pub fn new(text: impl Into<String>, refs: Vec<VisualRef>) -> Self {
        Self {
            text: text.into(),
            refs,
        }
    }

    pub fn text_only(text: impl Into<String>) -> Self {
        Self::new(text, Vec::new())
    }

    fn count(&self, kind: RefKind) -> usize {
        self.refs.iter().filter(|r| r.kind == kind).count()
    }
}

/// Every violated instruction invariant; empty when the instruction is valid.
pub fn validate(instr: &Instruction) -> Vec<String> {
    let mut violations = Vec::new();
    if instr.text.trim().is_empty() {
        violations.push("text empty".to_string());
    }
    let first = instr.count(RefKind::FirstFrame);
    let last = instr.count(RefKind::LastFrame);
    if first > 1 {
        violations.push(format!("{first} first_frame refs, at most one allowed"));
    }
    if last > 1 {
        violations.push(format!("{last} last_frame refs, at most one allowed"));
    }
    if last > 0 && first == 0 {
        violations.push("last_frame without first_frame".to_string());
    }
    violations
}

fn describe(instr: &Instruction) -> String {
    if instr.refs.is_empty() {
        return "no refs".into();
    }
    let mut kinds: Vec<&str> = instr.refs.iter().map(|r| r.kind.name()).collect();
    kinds.sort_unstable();
    kinds.join("+")
}

/// Structural task inference from the multiset of reference kinds.
///
/// | refs                      | task            |
/// |---------------------------|-----------------|
/// | none                      | `T2V`           |
/// | first_frame               | `I2V`           |
/// | first_frame + last_frame  | `FLF2V`         |
/// | video                     | `InContextEdit` |
/// | image + video             | `InContextGen`  |
pub fn infer_task(instr: &Instruction) -> Result<TaskKind> {
    let violations = validate(instr);
    if !violations.is_empty() {
        return Err(Error::Instruction(violations.join("; ")));
    }
    let counts = (
        instr.count(RefKind::Image),
        instr.count(RefKind::Video),
        instr.count(RefKind::FirstFrame),
        instr.count(RefKind::LastFrame),
    );
    match counts {
        (0, 0, 0, 0) => Ok(TaskKind::T2V),
        (0, 0, 1, 0) => Ok(TaskKind::I2V),
        (0, 0, 1, 1) => Ok(TaskKind::FLF2V),
        (0, 1, 0, 0) => Ok(TaskKind::InContextEdit),
        (1, 1, 0, 0) => Ok(TaskKind::InContextGen),
        _ => Err(Error::UnsupportedCombination(describe(instr))),
    }
}

/// Applies an explicit task override on top of [`infer_task`]. The only
/// accepted override is `InContextEdit` for an image + video instruction
/// (reference-image guided editing); any other override must agree with the
/// inferred task.
pub fn resolve_task(instr: &Instruction, task: Option<TaskKind>) -> Result<TaskKind> {
    let inferred = infer_task(instr)?;
    match task {
        None => Ok(inferred),
        Some(t) if t == inferred => Ok(t),
        Some(TaskKind::InContextEdit) if inferred == TaskKind::InContextGen => {
            Ok(TaskKind::InContextEdit)
        }
        Some(t) => Err(Error::Instruction(format!(
            "task override {t} incompatible with {} ({inferred})",
            describe(instr)
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRef {
    pub kind: RefKind,
    pub path: String,
}

/// One manifest line. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub text: String,
    pub refs: Vec<ManifestRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
}

impl ManifestRecord {
    pub fn from_instruction(instr: &Instruction) -> Result<Self> {
        let violations = validate(instr);
        if !violations.is_empty() {
            return Err(Error::Instruction(violations.join("; ")));
        }
        let refs = instr
            .refs
            .iter()
            .map(|r| match &r.payload {
                RefPayload::Path(p) => Ok(ManifestRef {
                    kind: r.kind,
                    path: p.to_string_lossy().into_owned(),
                }),
                RefPayload::Inline(_) => Err(Error::Instruction(
                    "inline payloads cannot be written to a manifest".into(),
                )),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            text: instr.text.clone(),
            refs,
            task: None,
            target_path: None,
            mask_path: None,
        })
    }

    pub fn instruction(&self) -> Instruction {
        Instruction::new(
            self.text.clone(),
            self.refs
                .iter()
                .map(|r| VisualRef::path(r.kind, &r.path))
                .collect(),
        )
    }

    pub fn task(&self) -> Result<TaskKind> {
        resolve_task(&self.instruction(), self.task)
    }

    pub fn to_line(&self) -> Result<String> {
        let violations = validate(&self.instruction());
        if !violations.is_empty() {
            return Err(Error::Instruction(violations.join("; ")));
        }
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_line(line: &str, line_no: usize) -> Result<Self> {
        let rec: ManifestRecord = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: line_no,
            message: e.to_string(),
        })?;
        let violations = validate(&rec.instruction());
        if !violations.is_empty() {
            return Err(Error::Manifest {
                line: line_no,
                message: violations.join("; "),
            });
        }
        Ok(rec)
    }

    pub fn load_target(&self, base: &Path) -> Result<Option<Video>> {
        self.target_path
            .as_ref()
            .map(|p| Video::load(&base.join(p)))
            .transpose()
    }

    pub fn load_mask(&self, base: &Path) -> Result<Option<VideoMask>> {
        self.mask_path
            .as_ref()
            .map(|p| VideoMask::load(&base.join(p)))
            .transpose()
    }
}

/// Latent role a reference of `kind` plays as a visual condition.
pub fn condition_role(kind: RefKind) -> LatentRole {
    match kind {
        RefKind::Image => LatentRole::ReferenceImage,
        RefKind::Video => LatentRole::ConditionVideo,
        RefKind::FirstFrame => LatentRole::FirstFrame,
        RefKind::LastFrame => LatentRole::LastFrame,
    }
}

/// Encodes every reference of `instr`, in order.
pub fn encode_refs(instr: &Instruction, base: &Path) -> Result<Vec<LatentGrid>> {
    instr
        .refs
        .iter()
        .map(|r| encode(&r.resolve(base)?, condition_role(r.kind)))
        .collect()
}

/// Paired training example.
#[derive(Debug, Clone)]
pub struct TaskSample {
    pub instruction: Instruction,
    pub task: TaskKind,
    /// Raw (unexpanded) condition latents, one per reference, in order.
    pub conditions: Vec<LatentGrid>,
    pub target: LatentGrid,
    pub edit_mask: Option<VideoMask>,
}

impl TaskSample {
    pub fn new(
        instruction: Instruction,
        task: Option<TaskKind>,
        conditions: Vec<LatentGrid>,
        target: LatentGrid,
        edit_mask: Option<VideoMask>,
    ) -> Result<Self> {
        let task = resolve_task(&instruction, task)?;
        if target.role() != LatentRole::Target {
            return Err(Error::Instruction(format!(
                "target grid has role {}",
                target.role().name()
            )));
        }
        if conditions.len() != instruction.refs.len() {
            return Err(Error::Instruction(format!(
                "{} condition grids for {} refs",
                conditions.len(),
                instruction.refs.len()
            )));
        }
        if let Some(m) = &edit_mask {
            let (f, h, w) = target.shape();
            let p = crate::codec::PATCH;
            if (m.frames, m.height, m.width) != (f, h * p, w * p) {
                return Err(Error::Shape(format!(
                    "edit mask {}x{}x{} does not match decoded target {f}x{}x{}",
                    m.frames,
                    m.height,
                    m.width,
                    h * p,
                    w * p
                )));
            }
        }
        Ok(Self {
            instruction,
            task,
            conditions,
            target,
            edit_mask,
        })
    }

    /// Loads the record's tensors relative to `base`.
    pub fn load(rec: &ManifestRecord, base: &Path) -> Result<Self> {
        let instruction = rec.instruction();
        let conditions = encode_refs(&instruction, base)?;
        let target = rec.load_target(base)?.ok_or_else(|| {
            Error::Instruction(format!("record \"{}\" has no target_path", rec.text))
        })?;
        let target = encode(&target, LatentRole::Target)?;
        TaskSample::new(instruction, rec.task, conditions, target, rec.load_mask(base)?)
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| ManifestRecord::from_line(l, i + 1))
        .collect()
}

pub fn write_manifest(records: &[ManifestRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line()?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: path.to_path_buf(),
        },
        _ => Error::Io(e),
    })?;
    parse_manifest(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instr(kinds: &[RefKind]) -> Instruction {
        Instruction::new(
            "a red disk",
            kinds
                .iter()
                .enumerate()
                .map(|(i, &k)| VisualRef::path(k, format!("r{i}.tomn")))
                .collect(),
        )
    }

    #[test]
    fn table() {
        use RefKind::*;
        assert_eq!(infer_task(&instr(&[])).unwrap(), TaskKind::T2V);
        assert_eq!(infer_task(&instr(&[FirstFrame])).unwrap(), TaskKind::I2V);
        assert_eq!(
            infer_task(&instr(&[LastFrame, FirstFrame])).unwrap(),
            TaskKind::FLF2V
        );
        assert_eq!(infer_task(&instr(&[Video])).unwrap(), TaskKind::InContextEdit);
        assert_eq!(
            infer_task(&instr(&[Video, Image])).unwrap(),
            TaskKind::InContextGen
        );
    }

    #[test]
    fn outside_table_is_named() {
        let err = infer_task(&instr(&[RefKind::Image])).unwrap_err();
        assert!(err.to_string().contains("image"), "{err}");
        let err = infer_task(&instr(&[RefKind::Video, RefKind::Video])).unwrap_err();
        assert!(err.to_string().contains("video+video"), "{err}");
    }

    #[test]
    fn validation() {
        assert_eq!(validate(&Instruction::text_only("")), vec!["text empty"]);
        let v = validate(&instr(&[RefKind::LastFrame]));
        assert!(v.iter().any(|m| m.contains("last_frame without first_frame")));
        assert!(validate(&instr(&[RefKind::FirstFrame])).is_empty());
        assert!(validate(&instr(&[RefKind::FirstFrame, RefKind::FirstFrame]))
            .iter()
            .any(|m| m.contains("first_frame")));
    }

    #[test]
    fn override_only_for_image_guided_editing() {
        use RefKind::*;
        let i = instr(&[Image, Video]);
        assert_eq!(
            resolve_task(&i, Some(TaskKind::InContextEdit)).unwrap(),
            TaskKind::InContextEdit
        );
        assert!(resolve_task(&i, Some(TaskKind::T2V)).is_err());
        assert_eq!(
            resolve_task(&instr(&[]), Some(TaskKind::T2V)).unwrap(),
            TaskKind::T2V
        );
    }

    #[test]
    fn minimal_t2v_line() {
        let rec = ManifestRecord::from_instruction(&Instruction::text_only("a cat")).unwrap();
        assert_eq!(rec.to_line().unwrap(), r#"{"text":"a cat","refs":[]}"#);
    }

    #[test]
    fn line_round_trip_and_errors() {
        let line = r#"{"text":"swap","refs":[{"kind":"image","path":"a.tomn"},{"kind":"video","path":"b.tomn"}],"task":"InContextEdit","target_path":"t.tomn","mask_path":"m.tomn"}"#;
        let rec = ManifestRecord::from_line(line, 1).unwrap();
        assert_eq!(rec.to_line().unwrap(), line);
        assert_eq!(rec.task().unwrap(), TaskKind::InContextEdit);

        let err = parse_manifest("{\"text\":\"a\",\"refs\":[]}\n{oops").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_manifest(r#"{"text":"","refs":[]}"#).unwrap_err();
        assert!(err.to_string().contains("text empty"), "{err}");
    }

    #[test]
    fn missing_target_names_path() {
        let rec = ManifestRecord {
            target_path: Some("gone/target.tomn".into()),
            ..ManifestRecord::from_instruction(&Instruction::text_only("x")).unwrap()
        };
        let err = rec.load_target(Path::new("/tmp/nowhere")).unwrap_err();
        assert!(err.to_string().contains("gone/target.tomn"), "{err}");
    }

    #[test]
    fn inference_ignores_payloads() {
        let a = instr(&[RefKind::Video]);
        let mut b = a.clone();
        b.refs[0] = VisualRef::inline(RefKind::Video, Video::zeros(1, 4, 4));
        assert_eq!(infer_task(&a).unwrap(), infer_task(&b).unwrap());
    }
}
