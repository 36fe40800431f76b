//! Run configuration: TOML with `radar`, `scene`, `mat`, `pipeline` and
//! `sweep` sections. Every field has a default so partial files are valid.

use std::path::Path;

use gesedd_core::aic::{MatrixOptions, MeasurementKind};
use gesedd_core::delay_est::{MusicConfig, Rooting};
use gesedd_core::doppler_est::{ClassOrders, EspritSolver, OrderCriterion};
use gesedd_core::model::{AtomMode, ClutterParams, PowerRatio, RadarParams};
use gesedd_core::pipeline::{ClutterFilter, Method, PipelineConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const DEFAULT_SEED: u64 = 20240607;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// N = 512, M = 128, L = 64.
    #[default]
    Desk,
    /// N = 256, M = 64, L = 32; the scale used by the acceptance suite.
    Compact,
    /// N = 10000, M = 2000, L = 100.
    Paper,
}

impl Profile {
    pub fn radar(self) -> RadarParams {
        match self {
            Profile::Desk => RadarParams::desk(),
            Profile::Compact => RadarParams::compact(),
            Profile::Paper => RadarParams::paper(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every trial seed is derived from it.
    pub seed: u64,
    pub radar: RadarSection,
    pub scene: SceneSection,
    pub mat: MatSection,
    pub pipeline: PipelineSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Desk)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarSection {
    pub bandwidth_hz: f64,
    pub pri_s: f64,
    pub pulse_width_s: f64,
    pub pulses: usize,
    pub measurements: usize,
}

impl Default for RadarSection {
    fn default() -> Self {
        Self::from_params(&RadarParams::desk())
    }
}

impl RadarSection {
    pub fn from_params(p: &RadarParams) -> Self {
        Self {
            bandwidth_hz: p.bandwidth(),
            pri_s: p.pri(),
            pulse_width_s: p.pulse_width(),
            pulses: p.pulses(),
            measurements: p.measurements(),
        }
    }

    pub fn params(&self) -> Result<RadarParams> {
        Ok(RadarParams::new(
            self.bandwidth_hz,
            self.pri_s,
            self.pulse_width_s,
            self.pulses,
            self.measurements,
        )?)
    }
}

/// An explicitly placed target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub tau_s: f64,
    pub nu_hz: f64,
    #[serde(default = "one")]
    pub alpha_re: f64,
    #[serde(default)]
    pub alpha_im: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    /// Distinct delays per random scene.
    pub k_tau: usize,
    /// Inclusive range of Doppler components per delay class.
    pub dopplers_per_class: [usize; 2],
    /// Minimum separation between distinct delays, in units of `tau0`.
    pub min_delay_sep_cells: f64,
    /// Minimum circular separation between any two Dopplers, in units of `nu0`.
    pub min_doppler_sep_cells: f64,
    /// Delay draw interval in seconds; defaults to `[0, T - Tp)`.
    pub delay_range_s: Option<[f64; 2]>,
    /// Reflectivity magnitudes are uniform on this interval, phases uniform.
    pub amplitude_range: [f64; 2],
    /// SNR for `run-once`.
    pub snr_db: PowerRatio,
    /// Signal-to-clutter ratio for `run-once`; `inf` disables clutter.
    pub scr_db: PowerRatio,
    pub atom_mode: AtomMode,
    /// Explicit targets for `run-once`; random scenes are drawn when empty.
    pub targets: Vec<TargetSpec>,
    pub clutter: ClutterSection,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            k_tau: 10,
            dopplers_per_class: [1, 1],
            min_delay_sep_cells: 2.0,
            min_doppler_sep_cells: 2.0,
            delay_range_s: None,
            amplitude_range: [0.1, 1.0],
            snr_db: PowerRatio::Db(20.0),
            scr_db: PowerRatio::Infinite,
            atom_mode: AtomMode::ModelMatched,
            targets: vec![],
            clutter: ClutterSection::default(),
        }
    }
}

impl SceneSection {
    pub fn delay_range(&self, p: &RadarParams) -> Result<(f64, f64)> {
        let (lo, hi) = match self.delay_range_s {
            Some([lo, hi]) => (lo, hi),
            None => (0.0, p.max_delay()),
        };
        if !(lo >= 0.0 && hi > lo && hi <= p.max_delay()) {
            return Err(HarnessError::Config(format!(
                "delay range [{lo}, {hi}) not inside [0, {})",
                p.max_delay()
            )));
        }
        Ok((lo, hi))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClutterSection {
    pub n_scatterers: usize,
    /// Clutter Doppler spread around zero, in units of `nu0`.
    pub doppler_width_cells: f64,
    /// Scatterer delay interval in seconds; defaults to the target delay range.
    pub delay_span_s: Option<[f64; 2]>,
}

impl Default for ClutterSection {
    fn default() -> Self {
        Self {
            n_scatterers: 1000,
            doppler_width_cells: 1.0,
            delay_span_s: None,
        }
    }
}

impl ClutterSection {
    pub fn params(
        &self,
        scene: &SceneSection,
        p: &RadarParams,
        scr: PowerRatio,
        seed: u64,
    ) -> Result<ClutterParams> {
        let delay_span = match self.delay_span_s {
            Some([lo, hi]) => (lo, hi),
            None => scene.delay_range(p)?,
        };
        Ok(ClutterParams {
            n_scatterers: self.n_scatterers,
            scr,
            doppler_bin_width: self.doppler_width_cells * p.nu0(),
            delay_span,
            seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatSection {
    pub kind: MeasurementKind,
    /// Fixed matrix seed; when absent every trial draws a fresh matrix.
    pub seed: Option<u64>,
    pub fourier_orthonormal: bool,
}

impl Default for MatSection {
    fn default() -> Self {
        Self {
            kind: MeasurementKind::Gaussian,
            seed: None,
            fourier_orthonormal: false,
        }
    }
}

impl MatSection {
    pub fn options(&self) -> MatrixOptions {
        MatrixOptions {
            fourier_orthonormal: self.fourier_orthonormal,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhitenChoice {
    /// Whiten unless the matrix kind has white compressed noise.
    #[default]
    Auto,
    On,
    Off,
}

/// Source of the per-class Doppler counts handed to ESPRIT.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrdersChoice {
    /// The scene's true counts.
    #[default]
    Truth,
    Mdl,
    Aic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub method: Method,
    pub grid_refinement: usize,
    pub whiten: WhitenChoice,
    /// Delay clustering tolerance in units of `tau0`.
    pub cluster_tol_cells: f64,
    pub rooting: Rooting,
    pub polish: bool,
    pub esprit: EspritSolver,
    pub class_orders: OrdersChoice,
    /// Apply the slow-time clutter filter outside `sweep-clutter`.
    pub clutter_filter: bool,
    /// Filter cutoff in units of `nu0`.
    pub clutter_cutoff_cells: f64,
    pub filter_invert: bool,
    /// Fill `mean_runtime_s`; off by default so CSVs are reproducible byte for byte.
    pub record_runtime: bool,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            method: Method::Gesedd1,
            grid_refinement: 5,
            whiten: WhitenChoice::Auto,
            cluster_tol_cells: 0.1,
            rooting: Rooting::default(),
            polish: true,
            esprit: EspritSolver::default(),
            class_orders: OrdersChoice::Truth,
            clutter_filter: false,
            clutter_cutoff_cells: 3.0,
            filter_invert: false,
            record_runtime: false,
        }
    }
}

impl PipelineSection {
    pub fn cutoff_hz(&self, p: &RadarParams) -> f64 {
        self.clutter_cutoff_cells * p.nu0()
    }

    /// Pipeline configuration for a scene with the given per-class orders
    /// (ascending delay) and `k` detections.
    pub fn build(
        &self,
        p: &RadarParams,
        class_orders: &[usize],
        k: usize,
        filter: bool,
    ) -> PipelineConfig {
        let mut music = MusicConfig::new(class_orders.len(), p);
        music.grid_refinement = self.grid_refinement;
        music.whiten = match self.whiten {
            WhitenChoice::Auto => None,
            WhitenChoice::On => Some(true),
            WhitenChoice::Off => Some(false),
        };
        music.cluster_tol = self.cluster_tol_cells * p.tau0();
        music.rooting = self.rooting;
        music.polish = self.polish;
        let mut cfg = PipelineConfig::new(self.method, music);
        cfg.class_orders = match self.class_orders {
            OrdersChoice::Truth => ClassOrders::Fixed(class_orders.to_vec()),
            OrdersChoice::Mdl => ClassOrders::Auto(OrderCriterion::Mdl),
            OrdersChoice::Aic => ClassOrders::Auto(OrderCriterion::Aic),
        };
        cfg.esprit = self.esprit;
        cfg.detection_k = k;
        cfg.clutter_filter = filter.then(|| ClutterFilter {
            cutoff: self.cutoff_hz(p),
            invert: self.filter_invert,
        });
        cfg
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionAxis {
    /// Delay spacing, equal Dopplers.
    #[default]
    Ntd,
    /// Doppler spacing, equal delays.
    Ndd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Monte-Carlo trials per point for the estimation sweeps.
    pub trials: usize,
    pub snr_db: Vec<PowerRatio>,
    pub resolution_axis: ResolutionAxis,
    pub resolution_values: Vec<f64>,
    pub resolution_snr_db: PowerRatio,
    pub scr_db: Vec<PowerRatio>,
    pub clutter_snr_db: PowerRatio,
    pub theorem1_m: Vec<usize>,
    pub theorem1_n: Vec<usize>,
    pub theorem1_k_tau: Vec<usize>,
    pub theorem1_trials: usize,
    pub theorem2_trials: usize,
    pub com_m: Vec<usize>,
    pub com_epsilon: f64,
    pub com_trials: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            trials: 200,
            snr_db: [-5.0, 0.0, 10.0, 20.0, 30.0].map(PowerRatio::Db).to_vec(),
            resolution_axis: ResolutionAxis::Ntd,
            resolution_values: vec![0.25, 0.5, 1.0, 2.0, 4.0, 10.0],
            resolution_snr_db: PowerRatio::Db(30.0),
            scr_db: [-10.0, -5.0, 0.0, 5.0, 10.0]
                .map(PowerRatio::Db)
                .into_iter()
                .chain([PowerRatio::Infinite])
                .collect(),
            clutter_snr_db: PowerRatio::Db(10.0),
            theorem1_m: vec![8, 16, 32, 64],
            theorem1_n: vec![256],
            theorem1_k_tau: vec![4],
            theorem1_trials: 1000,
            theorem2_trials: 100,
            com_m: vec![16, 32, 64, 128],
            com_epsilon: 0.5,
            com_trials: 10_000,
        }
    }
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        Self {
            seed: DEFAULT_SEED,
            radar: RadarSection::from_params(&profile.radar()),
            scene: SceneSection::default(),
            mat: MatSection::default(),
            pipeline: PipelineSection::default(),
            sweep: SweepSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; `profile` supplies the radar defaults for fields the
    /// file leaves out.
    pub fn load(path: &Path, profile: Profile) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut value: toml::Table =
            toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let base = toml::Table::try_from(Self::for_profile(profile))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        merge(&mut value, base);
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn params(&self) -> Result<RadarParams> {
        self.radar.params()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.params()?;
        let s = &self.scene;
        let [dmin, dmax] = s.dopplers_per_class;
        if s.k_tau == 0 || dmin == 0 || dmax < dmin {
            return Err(HarnessError::Config(
                "scene needs k_tau >= 1 and 1 <= dopplers_per_class[0] <= dopplers_per_class[1]"
                    .into(),
            ));
        }
        let [amin, amax] = s.amplitude_range;
        if !(amin > 0.0 && amax >= amin) {
            return Err(HarnessError::Config(
                "amplitude range must be positive and ordered".into(),
            ));
        }
        if s.min_delay_sep_cells < 0.0 || s.min_doppler_sep_cells < 0.0 {
            return Err(HarnessError::Config(
                "separations must be non-negative".into(),
            ));
        }
        s.delay_range(&p)?;
        if self.pipeline.grid_refinement == 0 {
            return Err(HarnessError::Config(
                "grid_refinement must be at least 1".into(),
            ));
        }
        let w = &self.sweep;
        if w.trials == 0 || w.theorem1_trials == 0 || w.theorem2_trials == 0 || w.com_trials == 0 {
            return Err(HarnessError::Config(
                "trial counts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Fills keys missing from `into` with values from `base`, recursing into tables.
fn merge(into: &mut toml::Table, base: toml::Table) {
    for (k, v) in base {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            (Some(_), _) => {}
            (None, v) => {
                into.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::for_profile(Profile::Compact);
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_tracks_seed() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn partial_file_inherits_profile_radar() {
        let dir = std::env::temp_dir().join(format!("gesedd-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("partial.toml");
        std::fs::write(
            &path,
            "seed = 7\n[sweep]\ntrials = 3\nsnr_db = [10, \"inf\"]\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&path, Profile::Compact).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sweep.trials, 3);
        assert_eq!(
            cfg.sweep.snr_db,
            vec![PowerRatio::Db(10.0), PowerRatio::Infinite]
        );
        assert_eq!(
            cfg.radar,
            RadarSection::from_params(&RadarParams::compact())
        );
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[scene]\nbogus = 1\n").is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(RunConfig::from_toml("[sweep]\ntrials = 0\n").is_err());
    }

    #[test]
    fn pipeline_build_carries_orders_and_filter() {
        let p = RadarParams::compact();
        let sec = PipelineSection::default();
        let cfg = sec.build(&p, &[1, 2], 3, true);
        assert_eq!(cfg.music.k_tau, 2);
        assert_eq!(cfg.detection_k, 3);
        assert_eq!(cfg.class_orders, ClassOrders::Fixed(vec![1, 2]));
        assert_eq!(cfg.clutter_filter.unwrap().cutoff, 3.0 * p.nu0());
    }
}
