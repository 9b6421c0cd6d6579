//! Experiment configuration: a small INI dialect with fixed sections and
//! keys, applied over built-in defaults.
//!
//! The canonical rendering ([`echo`]) lists every key with its resolved
//! value; parsing an echo reproduces the config exactly, and the echo of
//! that config is byte-identical. Unknown sections or keys are errors named
//! by their `section.key` path, never silently ignored.

use snn_core::cma::{AttKind, CmaConfig};
use snn_core::events::synth::{LabelMode, SynthConfig};
use snn_core::neurons::{NeuronKind, NeuronParams, SpikeMode};
use snn_core::train::{ArchConfig, FusionMode, TrainConfig};

/// Where the dataset comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    /// Generated in-process from `[data]` and the experiment seed.
    Synth,
    /// Loaded from the directory in `data.root` (as written by `snn synth`).
    Dir,
}

/// Fully resolved experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct AppConfig {
    pub source: Source,
    pub root: String,
    pub synth: SynthConfig,
    pub train_per_combo: usize,
    pub test_per_combo: usize,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub checkpoint: String,
    pub out_dir: String,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            source: Source::Synth,
            root: String::new(),
            synth: SynthConfig::default(),
            train_per_combo: 25,
            test_per_combo: 10,
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            checkpoint: String::new(),
            out_dir: "out".into(),
        }
    }
}

fn neuron_name(kind: NeuronKind) -> &'static str {
    match kind {
        NeuronKind::Lif => "lif",
        NeuronKind::If => "if",
        NeuronKind::Plif => "plif",
        NeuronKind::Liaf => "liaf",
    }
}

fn neuron_from(v: &str) -> Option<NeuronKind> {
    Some(match v {
        "lif" => NeuronKind::Lif,
        "if" => NeuronKind::If,
        "plif" => NeuronKind::Plif,
        "liaf" => NeuronKind::Liaf,
        _ => return None,
    })
}

fn labels_name(mode: LabelMode) -> &'static str {
    match mode {
        LabelMode::Motion => "motion",
        LabelMode::Texture => "texture",
        LabelMode::MotionTexture => "motion-texture",
    }
}

fn labels_from(v: &str) -> Option<LabelMode> {
    Some(match v {
        "motion" => LabelMode::Motion,
        "texture" => LabelMode::Texture,
        "motion-texture" => LabelMode::MotionTexture,
        _ => return None,
    })
}

fn att_from(v: &str) -> Option<AttKind> {
    Some(match v {
        "temporal" => AttKind::Temporal,
        "spatial" => AttKind::Spatial,
        _ => return None,
    })
}

fn list_to_string(v: &[usize]) -> String {
    v.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
}

fn list_from(v: &str) -> Result<Vec<usize>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|part| part.trim().parse::<usize>().map_err(|_| format!("unreadable integer {part:?}")))
        .collect()
}

fn num<T: std::str::FromStr>(v: &str, what: &str) -> Result<T, String> {
    v.trim().parse::<T>().map_err(|_| format!("unreadable {what} {v:?}"))
}

fn flag(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, found {v:?}")),
    }
}

const FUSION_NAMES: &str = "none-event, none-frame, EF, MF, LF-or, LF-avg, CMA";

/// Applies one `section.key = value` assignment. The error, if any, starts
/// with the key path.
pub fn apply(cfg: &mut AppConfig, path: &str, value: &str) -> Result<(), String> {
    apply_value(cfg, path, value).map_err(|msg| format!("{path}: {msg}"))
}

fn apply_value(cfg: &mut AppConfig, path: &str, value: &str) -> Result<(), String> {
    let value = value.trim();
    let fail = Err;
    match path {
        "data.source" => match value {
            "synth" => cfg.source = Source::Synth,
            "dir" => cfg.source = Source::Dir,
            _ => return fail(format!("expected synth or dir, found {value:?}")),
        },
        "data.root" => cfg.root = value.to_string(),
        "data.width" => cfg.synth.width = num(value, "integer")?,
        "data.height" => cfg.synth.height = num(value, "integer")?,
        "data.textures" => cfg.synth.n_textures = num(value, "integer")?,
        "data.duration_us" => cfg.synth.duration_us = num(value, "integer")?,
        "data.frame_interval_us" => cfg.synth.frame_interval_us = num(value, "integer")?,
        "data.micro_step_us" => cfg.synth.micro_step_us = num(value, "integer")?,
        "data.contrast" => cfg.synth.contrast_threshold = num(value, "number")?,
        "data.blob_radius" => cfg.synth.blob_radius = num(value, "number")?,
        "data.speed" => cfg.synth.speed = num(value, "integer")?,
        "data.labels" => match labels_from(value) {
            Some(m) => cfg.synth.label_mode = m,
            None => return fail(format!("expected motion, texture, or motion-texture, found {value:?}")),
        },
        "data.train_per_combo" => cfg.train_per_combo = num(value, "integer")?,
        "data.test_per_combo" => cfg.test_per_combo = num(value, "integer")?,

        "model.conv_channels" => cfg.arch.conv_channels = list_from(value)?,
        "model.fc_hidden" => cfg.arch.fc_hidden = list_from(value)?,
        "model.neuron" => match neuron_from(value) {
            Some(k) => cfg.train.neuron.kind = k,
            None => return fail(format!("expected lif, if, plif, or liaf, found {value:?}")),
        },
        "model.tau" => cfg.train.neuron.tau = num(value, "number")?,
        "model.v_th" => cfg.train.neuron.v_th = num(value, "number")?,
        "model.v_reset" => cfg.train.neuron.v_reset = num(value, "number")?,
        "model.alpha" => cfg.train.neuron.alpha = num(value, "number")?,
        "model.spike" => match value {
            "hard" => cfg.arch.mode = SpikeMode::Hard,
            "soft" => cfg.arch.mode = SpikeMode::Soft,
            _ => return fail(format!("expected hard or soft, found {value:?}")),
        },
        "model.dropout" => cfg.arch.dropout = num(value, "number")?,
        "model.voting" => cfg.arch.voting = num(value, "integer")?,

        "train.epochs" => cfg.train.epochs = num(value, "integer")?,
        "train.lr" => cfg.train.lr = num(value, "number")?,
        "train.batch_size" => cfg.train.batch_size = num(value, "integer")?,
        "train.seed" => cfg.train.seed = num(value, "integer")?,
        "train.dt_us" => cfg.train.dt_us = num(value, "integer")?,
        "train.t_steps" => cfg.train.t_steps = num(value, "integer")?,
        "train.t_lat_us" => cfg.train.t_lat_us = num(value, "integer")?,

        "fusion.mode" => match FusionMode::from_name(value) {
            Some(m) => cfg.train.fusion = m,
            None => return fail(format!("unknown fusion mode {value:?}, valid: {FUSION_NAMES}")),
        },
        "fusion.placement" => cfg.arch.placement = num(value, "integer")?,
        "fusion.event_att" => match att_from(value) {
            Some(k) => cfg.arch.cma.event_att = k,
            None => return fail(format!("expected temporal or spatial, found {value:?}")),
        },
        "fusion.frame_att" => match att_from(value) {
            Some(k) => cfg.arch.cma.frame_att = k,
            None => return fail(format!("expected temporal or spatial, found {value:?}")),
        },
        "fusion.reduce" => cfg.arch.cma.reduce = num(value, "integer")?,
        "fusion.literal_order" => cfg.arch.cma.literal_order = flag(value)?,

        "perturbation.checkpoint" => cfg.checkpoint = value.to_string(),

        "output.dir" => cfg.out_dir = value.to_string(),

        _ => return Err("unknown key".into()),
    }
    Ok(())
}

const SECTIONS: [&str; 6] = ["data", "model", "train", "fusion", "perturbation", "output"];

/// Parses INI text into the config, applying assignments over the defaults.
/// All errors are collected, one per offending line or key.
pub fn parse(text: &str) -> Result<AppConfig, Vec<String>> {
    let mut cfg = AppConfig::default();
    let mut errors = Vec::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            if SECTIONS.contains(&name) {
                section = Some(name.to_string());
            } else {
                errors.push(format!("line {line_no}: unknown section [{name}]"));
                section = None;
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {line_no}: expected `key = value`, found {line:?}"));
            continue;
        };
        let Some(section) = section.as_deref() else {
            errors.push(format!("line {line_no}: key outside any section"));
            continue;
        };
        let path = format!("{section}.{}", key.trim());
        if let Err(e) = apply(&mut cfg, &path, value) {
            errors.push(format!("line {line_no}: {e}"));
        }
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

/// Applies one `--set section.key=value` override.
pub fn apply_set(cfg: &mut AppConfig, assignment: &str) -> Result<(), String> {
    let Some((path, value)) = assignment.split_once('=') else {
        return Err(format!("--set {assignment:?}: expected section.key=value"));
    };
    apply(cfg, path.trim(), value)
}

/// Cross-field validation on top of the per-key parses. Returns every
/// failure, each named by the config keys involved.
pub fn validate(cfg: &AppConfig) -> Vec<String> {
    let mut errors = Vec::new();
    if let Err(e) = cfg.synth.validate() {
        errors.push(format!("data: {e}"));
    }
    if let Err(e) = cfg.train.validate() {
        errors.push(format!("train: {e}"));
    }
    if let Err(e) = cfg.arch.validate() {
        errors.push(format!("model/fusion: {e}"));
    }
    if cfg.source == Source::Dir && cfg.root.is_empty() {
        errors.push("data.root: required when data.source = dir".into());
    }
    let leaky = matches!(cfg.train.neuron.kind, NeuronKind::Lif | NeuronKind::Liaf);
    if leaky && !(cfg.train.neuron.tau > 1.0) {
        errors.push(format!("model.tau: {} must exceed 1 for leaky neurons", cfg.train.neuron.tau));
    }
    errors
}

/// Canonical rendering of a config: every key, fixed order, resolved
/// values. Parsing the echo yields the same config; echoing that config
/// yields the same bytes.
pub fn echo(cfg: &AppConfig) -> String {
    let NeuronParams { kind, tau, v_th, v_reset, alpha } = cfg.train.neuron;
    let CmaConfig { event_att, frame_att, reduce, literal_order } = cfg.arch.cma;
    let mut s = String::new();
    let mut w = |line: String| {
        s.push_str(&line);
        s.push('\n');
    };
    w("[data]".into());
    w(format!("source = {}", match cfg.source { Source::Synth => "synth", Source::Dir => "dir" }));
    w(format!("root = {}", cfg.root));
    w(format!("width = {}", cfg.synth.width));
    w(format!("height = {}", cfg.synth.height));
    w(format!("textures = {}", cfg.synth.n_textures));
    w(format!("duration_us = {}", cfg.synth.duration_us));
    w(format!("frame_interval_us = {}", cfg.synth.frame_interval_us));
    w(format!("micro_step_us = {}", cfg.synth.micro_step_us));
    w(format!("contrast = {}", cfg.synth.contrast_threshold));
    w(format!("blob_radius = {}", cfg.synth.blob_radius));
    w(format!("speed = {}", cfg.synth.speed));
    w(format!("labels = {}", labels_name(cfg.synth.label_mode)));
    w(format!("train_per_combo = {}", cfg.train_per_combo));
    w(format!("test_per_combo = {}", cfg.test_per_combo));
    w(String::new());
    w("[model]".into());
    w(format!("conv_channels = {}", list_to_string(&cfg.arch.conv_channels)));
    w(format!("fc_hidden = {}", list_to_string(&cfg.arch.fc_hidden)));
    w(format!("neuron = {}", neuron_name(kind)));
    w(format!("tau = {tau}"));
    w(format!("v_th = {v_th}"));
    w(format!("v_reset = {v_reset}"));
    w(format!("alpha = {alpha}"));
    w(format!("spike = {}", match cfg.arch.mode { SpikeMode::Hard => "hard", SpikeMode::Soft => "soft" }));
    w(format!("dropout = {}", cfg.arch.dropout));
    w(format!("voting = {}", cfg.arch.voting));
    w(String::new());
    w("[train]".into());
    w(format!("epochs = {}", cfg.train.epochs));
    w(format!("lr = {}", cfg.train.lr));
    w(format!("batch_size = {}", cfg.train.batch_size));
    w(format!("seed = {}", cfg.train.seed));
    w(format!("dt_us = {}", cfg.train.dt_us));
    w(format!("t_steps = {}", cfg.train.t_steps));
    w(format!("t_lat_us = {}", cfg.train.t_lat_us));
    w(String::new());
    w("[fusion]".into());
    w(format!("mode = {}", cfg.train.fusion.name()));
    w(format!("placement = {}", cfg.arch.placement));
    w(format!("event_att = {}", event_att.name()));
    w(format!("frame_att = {}", frame_att.name()));
    w(format!("reduce = {reduce}"));
    w(format!("literal_order = {literal_order}"));
    w(String::new());
    w("[perturbation]".into());
    w(format!("checkpoint = {}", cfg.checkpoint));
    w(String::new());
    w("[output]".into());
    w(format!("dir = {}", cfg.out_dir));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_of_default_parses_back_to_default() {
        let d = AppConfig::default();
        let text = echo(&d);
        let parsed = parse(&text).unwrap();
        assert_eq!(parsed, d);
        assert_eq!(echo(&parsed), text);
    }

    #[test]
    fn echo_roundtrip_is_stable_for_modified_configs() {
        let mut cfg = AppConfig::default();
        for set in [
            "train.lr=0.001",
            "fusion.mode=CMA",
            "model.conv_channels=4,8,16",
            "model.fc_hidden=",
            "data.labels=motion",
            "model.neuron=plif",
            "fusion.literal_order=true",
            "perturbation.checkpoint=runs/model.snck",
        ] {
            apply_set(&mut cfg, set).unwrap();
        }
        let text = echo(&cfg);
        let parsed = parse(&text).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(echo(&parsed), text);
        assert_eq!(parsed.arch.fc_hidden, Vec::<usize>::new());
        assert_eq!(parsed.train.lr, 0.001);
    }

    #[test]
    fn unknown_keys_and_sections_are_named_errors() {
        let errs = parse("[data]\nwdith = 3\n[trian]\nepochs = 2\n").unwrap_err();
        assert!(errs.iter().any(|e| e.contains("data.wdith") && e.contains("unknown key")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("unknown section [trian]")), "{errs:?}");
        // A later valid section keeps parsing, so every error is reported.
        let errs = parse("[model]\nneuron = bogus\n[train]\nepochs = x\n").unwrap_err();
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn invalid_fusion_name_lists_the_valid_set() {
        let mut cfg = AppConfig::default();
        let err = apply_set(&mut cfg, "fusion.mode=bogus").unwrap_err();
        for name in ["none-event", "none-frame", "EF", "MF", "LF-or", "LF-avg", "CMA"] {
            assert!(err.contains(name), "{err}");
        }
    }

    #[test]
    fn validate_collects_multiple_failures() {
        let mut cfg = AppConfig::default();
        apply_set(&mut cfg, "data.textures=9").unwrap();
        apply_set(&mut cfg, "train.epochs=0").unwrap();
        apply_set(&mut cfg, "fusion.placement=7").unwrap();
        let errs = validate(&cfg);
        assert_eq!(errs.len(), 3, "{errs:?}");
        assert!(errs[0].starts_with("data:"));
        assert!(errs[1].starts_with("train:"));
        assert!(errs[2].starts_with("model/fusion:"));
    }
}
