//! Run configuration: defaults, config-file parsing and validation.
//!
//! Every knob of a simulation run lives in [`ScenarioConfig`]. Values
//! resolve in three layers: built-in defaults, then a flat
//! `key = value` config file, then command-line flags. The file keys
//! are exactly the long flag names.

use std::fmt;
use std::path::PathBuf;

use crate::geometry::{Position, DEFAULT_MAX_CARDINALITY, DEFAULT_SAMPLE_SPACING};
use crate::imaging::ImageSpec;
use crate::routing::RoutingProtocol;

/// Link-layer timing and queueing knobs.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct MacConfig {
    /// Clear-channel assessment duration in seconds.
    pub cca_duration: f64,
    /// One backoff slot in seconds.
    pub backoff_slot: f64,
    /// Backoff exponent cap; the first busy CCA uses exponent 3.
    pub max_backoff_exponent: u32,
    /// Transmission attempts allowed beyond the first for unicast.
    pub max_retries: u32,
    /// Frames the interface queue holds before tail-dropping.
    pub queue_capacity: usize,
}

impl Default for MacConfig {
    fn default() -> Self {
        MacConfig {
            cca_duration: 128e-6,
            backoff_slot: 320e-6,
            max_backoff_exponent: 5,
            max_retries: 5,
            queue_capacity: 64,
        }
    }
}

/// Complete description of one experiment.
#[derive(Clone, PartialEq, Debug)]
pub struct ScenarioConfig {
    /// 1: first-listed cover set + greedy/perimeter routing;
    /// 2: quality-selected cover set + greedy/perimeter routing;
    /// 3: quality-selected cover set + two-hop multi-path routing.
    pub scenario: u8,
    pub node_count: u32,
    pub area_width: f64,
    pub area_height: f64,
    pub comm_range: f64,
    /// Camera angle of view in radians.
    pub angle_of_view: f64,
    /// Camera depth of view in meters.
    pub depth_of_view: f64,
    /// Width of the bearing interval camera facings are drawn from, in
    /// radians. The full circle by default; smaller values model
    /// deployments where cameras point roughly the same way (a fence
    /// line, a road, a perimeter), drawn uniformly around one random
    /// base bearing per run.
    pub facing_spread: f64,
    /// Radio throughput in bits per second.
    pub bitrate: f64,
    /// Per-frame protocol overhead in bytes.
    pub frame_overhead: u32,
    pub image: ImageSpec,
    /// Images captured per detection event at a sentry; also feeds the
    /// number of parallel paths requested by the multi-path router.
    pub capture_rate: f64,
    pub alpha: f64,
    pub beta: f64,
    pub path_factor: f64,
    /// Members below this residual energy are not activated.
    pub energy_floor: f64,
    /// Residual energy every node starts with.
    pub initial_energy: f64,
    pub seed: u64,
    /// Seeds seed, seed+1, … seed+runs−1 are swept.
    pub runs: u32,
    /// Fraction of cover-set-capable nodes acting as sentries.
    pub sentry_fraction: f64,
    /// Detection events are staggered in [event_start, event_start+event_window).
    pub event_start: f64,
    pub event_window: f64,
    pub images_per_burst: u32,
    pub mac: MacConfig,
    /// Seconds the sink waits for an image after its first fragment.
    pub display_timer: f64,
    pub beacon_period: f64,
    pub max_cover_cardinality: usize,
    /// Grid pitch for field-of-view coverage checks, meters.
    pub sample_spacing: f64,
    /// Seconds a selecting node waits for cover-set info replies.
    pub info_timeout: f64,
    /// Best-case single-image latency the ratio is reported against.
    pub latency_reference: f64,
    /// Real bytes to push through the network instead of synthetic
    /// fragments.
    pub image_file: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: 1,
            node_count: 400,
            area_width: 2000.0,
            area_height: 2000.0,
            comm_range: 150.0,
            angle_of_view: std::f64::consts::FRAC_PI_3,
            depth_of_view: 125.0,
            facing_spread: std::f64::consts::TAU,
            bitrate: 250_000.0,
            frame_overhead: 12,
            image: ImageSpec::default(),
            capture_rate: 1.0,
            alpha: 0.5,
            beta: 0.5,
            path_factor: 1.0,
            energy_floor: 0.0,
            initial_energy: 100.0,
            seed: 1,
            runs: 1,
            sentry_fraction: 0.10,
            event_start: 10.0,
            event_window: 60.0,
            images_per_burst: 1,
            mac: MacConfig::default(),
            display_timer: 10.0,
            beacon_period: 5.0,
            max_cover_cardinality: DEFAULT_MAX_CARDINALITY,
            sample_spacing: DEFAULT_SAMPLE_SPACING,
            info_timeout: 2.0,
            latency_reference: 0.94,
            image_file: None,
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    /// A config-file line failed to parse.
    Parse { line: usize, key: String, why: String },
    UnknownKey { line: usize, key: String },
    /// The assembled configuration is inconsistent.
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { line, key, why } => {
                write!(f, "config line {line}, key {key:?}: {why}")
            }
            ConfigError::UnknownKey { line, key } => {
                write!(f, "config line {line}: unknown key {key:?}")
            }
            ConfigError::Invalid(why) => write!(f, "invalid configuration: {why}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ScenarioConfig {
    /// Routing protocol the scenario number prescribes.
    pub fn routing_protocol(&self) -> RoutingProtocol {
        if self.scenario == 3 {
            RoutingProtocol::Tgpsr
        } else {
            RoutingProtocol::Gpsr
        }
    }

    /// Sink resting position: the center of the deployment area.
    pub fn sink_position(&self) -> Position {
        Position::new(self.area_width / 2.0, self.area_height / 2.0)
    }

    /// Applies `key = value` lines on top of the current values.
    /// Blank lines and `#` comments are skipped; keys are the long
    /// command-line flag names.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Parse {
                    line,
                    key: content.to_string(),
                    why: "expected key = value".into(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let parse_err = |why: String| ConfigError::Parse {
                line,
                key: key.to_string(),
                why,
            };
            macro_rules! num {
                ($ty:ty) => {
                    value
                        .parse::<$ty>()
                        .map_err(|e| parse_err(format!("{e} (value {value:?})")))?
                };
            }
            match key {
                "scenario" => {
                    let s: u8 = num!(u8);
                    if !(1..=3).contains(&s) {
                        return Err(parse_err(format!("scenario {s} is not 1, 2 or 3")));
                    }
                    self.scenario = s;
                }
                "nodes" => self.node_count = num!(u32),
                "area" => {
                    let (w, h) = parse_area(value).map_err(parse_err)?;
                    self.area_width = w;
                    self.area_height = h;
                }
                "range" => self.comm_range = num!(f64),
                "seed" => self.seed = num!(u64),
                "runs" => self.runs = num!(u32),
                "alpha" => self.alpha = num!(f64),
                "beta" => self.beta = num!(f64),
                "path-factor" => self.path_factor = num!(f64),
                "capture-rate" => self.capture_rate = num!(f64),
                "images-per-burst" => self.images_per_burst = num!(u32),
                "sentry-fraction" => self.sentry_fraction = num!(f64),
                "facing-spread" => self.facing_spread = num!(f64),
                "energy-floor" => self.energy_floor = num!(f64),
                "image-file" => self.image_file = Some(PathBuf::from(value)),
                other => {
                    return Err(ConfigError::UnknownKey { line, key: other.to_string() })
                }
            }
        }
        Ok(())
    }

    /// Checks cross-field consistency after all layers are applied.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |why: String| Err(ConfigError::Invalid(why));
        if !(1..=3).contains(&self.scenario) {
            return fail(format!("scenario {} is not 1, 2 or 3", self.scenario));
        }
        if self.node_count == 0 {
            return fail("node count must be positive".into());
        }
        for (name, v) in [
            ("area width", self.area_width),
            ("area height", self.area_height),
            ("communication range", self.comm_range),
            ("depth of view", self.depth_of_view),
            ("bitrate", self.bitrate),
            ("display timer", self.display_timer),
            ("beacon period", self.beacon_period),
            ("latency reference", self.latency_reference),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.angle_of_view > 0.0 && self.angle_of_view < std::f64::consts::PI) {
            return fail(format!(
                "angle of view must be in (0, pi) radians, got {}",
                self.angle_of_view
            ));
        }
        if !(self.facing_spread.is_finite()
            && (0.0..=std::f64::consts::TAU).contains(&self.facing_spread))
        {
            return fail(format!(
                "facing spread must be in [0, 2*pi] radians, got {}",
                self.facing_spread
            ));
        }
        let weight_sum = self.alpha + self.beta;
        if !(self.alpha >= 0.0
            && self.beta >= 0.0
            && (weight_sum - 1.0).abs() <= 1e-9)
        {
            return fail(format!(
                "weights must be non-negative and sum to 1, got {} + {}",
                self.alpha, self.beta
            ));
        }
        if !(self.capture_rate.is_finite() && self.capture_rate > 0.0) {
            return fail(format!("capture rate must be positive, got {}", self.capture_rate));
        }
        if !(self.path_factor.is_finite() && self.path_factor > 0.0) {
            return fail(format!("path factor must be positive, got {}", self.path_factor));
        }
        if !(0.0..=1.0).contains(&self.sentry_fraction) {
            return fail(format!(
                "sentry fraction must be in [0, 1], got {}",
                self.sentry_fraction
            ));
        }
        if self.images_per_burst == 0 {
            return fail("images per burst must be positive".into());
        }
        if self.event_start < 0.0 || self.event_window < 0.0 {
            return fail("event schedule times must be non-negative".into());
        }
        if self.image.payload_size == 0 {
            return fail("fragment payload size must be positive".into());
        }
        Ok(())
    }
}

/// Parses a `WIDTHxHEIGHT` area string into meters.
pub fn parse_area(value: &str) -> Result<(f64, f64), String> {
    let Some((w, h)) = value.split_once('x') else {
        return Err(format!("expected WIDTHxHEIGHT, got {value:?}"));
    };
    let w: f64 = w.trim().parse().map_err(|e| format!("bad width: {e}"))?;
    let h: f64 = h.trim().parse().map_err(|e| format!("bad height: {e}"))?;
    if !(w.is_finite() && w > 0.0 && h.is_finite() && h > 0.0) {
        return Err(format!("area dimensions must be positive, got {w}x{h}"));
    }
    Ok((w, h))
}

impl fmt::Display for ScenarioConfig {
    /// Resolved configuration in config-file syntax, one key per line,
    /// with the non-file-settable knobs as comments.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario = {}", self.scenario)?;
        writeln!(f, "nodes = {}", self.node_count)?;
        writeln!(f, "area = {}x{}", self.area_width, self.area_height)?;
        writeln!(f, "range = {}", self.comm_range)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "runs = {}", self.runs)?;
        writeln!(f, "alpha = {}", self.alpha)?;
        writeln!(f, "beta = {}", self.beta)?;
        writeln!(f, "path-factor = {}", self.path_factor)?;
        writeln!(f, "capture-rate = {}", self.capture_rate)?;
        writeln!(f, "images-per-burst = {}", self.images_per_burst)?;
        writeln!(f, "sentry-fraction = {}", self.sentry_fraction)?;
        writeln!(f, "facing-spread = {}", self.facing_spread)?;
        writeln!(f, "energy-floor = {}", self.energy_floor)?;
        if let Some(path) = &self.image_file {
            writeln!(f, "image-file = {}", path.display())?;
        }
        writeln!(f, "# angle of view: {} rad", self.angle_of_view)?;
        writeln!(f, "# depth of view: {} m", self.depth_of_view)?;
        writeln!(f, "# bitrate: {} bit/s", self.bitrate)?;
        writeln!(f, "# fragment payload: {} B", self.image.payload_size)?;
        writeln!(
            f,
            "# fragments per image: {}",
            self.image.packet_count.map_or_else(
                || "derived".to_string(),
                |c| c.to_string()
            )
        )?;
        writeln!(f, "# display timer: {} s", self.display_timer)?;
        writeln!(f, "# beacon period: {} s", self.beacon_period)?;
        writeln!(f, "# routing: {:?}", self.routing_protocol())?;
        write!(f, "# sink: static at {}", self.sink_position())
    }
}
