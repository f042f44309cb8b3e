//! In-silico versions of the bench characterization protocols.

use serde::{Deserialize, Serialize};

use crate::capsule::{apply_acoustic_pressure, bubble_removal_threshold, release_rate, CapsuleState};
use crate::error::SimError;
use crate::headless::{run_headless, RunOptions};
use crate::hifu::{focal_pressure, HifuState, Medium};
use crate::scalar::Vec2;
use crate::scenario::ScenarioConfig;
use crate::trace::{Command, CommandTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    PressureSweep,
    ThresholdGrid,
    EmptyingCurve,
}

impl std::str::FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pressure_sweep" => Ok(Kind::PressureSweep),
            "threshold_grid" => Ok(Kind::ThresholdGrid),
            "emptying_curve" => Ok(Kind::EmptyingCurve),
            other => Err(format!("unknown characterization `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub voltage_v: f64,
    pub water_pa: f64,
    pub gel_pa: f64,
}

/// Focal pressure from 10 V to 100 V in 2 V steps, water and through gel.
pub fn pressure_sweep(config: &ScenarioConfig) -> Vec<SweepRow> {
    (0..46)
        .map(|i| {
            let v = 10.0 + 2.0 * i as f64;
            let at = |medium| {
                let s = HifuState { focus_position: Vec2::zero(), drive_voltage: v, enabled: true, medium };
                focal_pressure(&s, &config.hifu)
            };
            SweepRow { voltage_v: v, water_pa: at(Medium::WaterOnly), gel_pa: at(Medium::ThroughGel) }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub hole_um: f64,
    pub wall_um: f64,
    pub bubble_formed: bool,
    /// Model threshold, Pa (empty when no bubble forms).
    pub threshold_pa: Option<f64>,
    /// First ramp level that dislodged the bubble, Pa.
    pub ramp_pa: Option<f64>,
}

pub const RAMP_START: f64 = 5.0e5;
pub const RAMP_STEP: f64 = 2.0e5;

/// Ramps pressure from 500 kPa in 200 kPa steps until the bubble goes.
pub fn ramp_removal_pressure(threshold: f64, dt: f64, config: &ScenarioConfig) -> Option<f64> {
    let mut state = CapsuleState::loaded(&config.capsule, Vec2::zero(), true);
    (0..100).map(|k| RAMP_START + RAMP_STEP * k as f64).find(|&p| {
        apply_acoustic_pressure(&mut state, p, dt, &config.release, threshold, 1.0);
        !state.bubble_intact
    })
}

/// Threshold over hole diameters 300–900 µm (plus 1000 µm, which holds no
/// bubble) and wall thicknesses 300–500 µm.
pub fn threshold_grid(config: &ScenarioConfig) -> Vec<ThresholdRow> {
    let mut rows = Vec::new();
    for d_um in [300.0, 400.0, 500.0, 600.0, 700.0, 800.0, 900.0, 1000.0] {
        for h_um in [300.0, 400.0, 500.0] {
            let geometry = crate::capsule::CapsuleGeometry { hole_diameter: d_um * 1e-6, wall_thickness: h_um * 1e-6, ..config.capsule };
            let row = match bubble_removal_threshold(&geometry, &config.threshold) {
                Ok(p) => ThresholdRow {
                    hole_um: d_um,
                    wall_um: h_um,
                    bubble_formed: true,
                    threshold_pa: Some(p),
                    ramp_pa: ramp_removal_pressure(p, config.timestep, config),
                },
                Err(_) => ThresholdRow { hole_um: d_um, wall_um: h_um, bubble_formed: false, threshold_pa: None, ramp_pa: None },
            };
            rows.push(row);
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmptyingRow {
    pub pressure_pa: f64,
    pub duration_s: f64,
    pub rate_m3_per_s: f64,
}

pub const EMPTYING_PRESSURES: [f64; 3] = [1.4e6, 1.9e6, 2.4e6];

/// Bench setup: capsule held on the focus in water, transducer switched on
/// at `pressure` from t = 0, run until the cargo is gone.
pub fn emptying_scenario(config: &ScenarioConfig, pressure: f64) -> (ScenarioConfig, CommandTrace) {
    let mut cfg = config.clone();
    cfg.initial.fixed = true;
    cfg.initial.bubble_intact = true;
    cfg.transducer.focus = None;
    cfg.transducer.medium = Medium::WaterOnly;
    cfg.end.on_goal = false;
    cfg.end.on_drug_empty = true;
    let nominal = crate::capsule::cargo_volume(&cfg.capsule) / release_rate(pressure, &cfg.release);
    cfg.end.time_limit = cfg.end.time_limit.max(2.0 * nominal + 10.0);
    let voltage = cfg.hifu.voltage_for(pressure, Medium::WaterOnly);
    let mut trace = CommandTrace::default();
    trace.push(0.0, Command::SetHifu { drive_voltage: voltage, enabled: true, medium: Some(Medium::WaterOnly) });
    (cfg, trace)
}

pub fn emptying_duration(config: &ScenarioConfig, pressure: f64) -> Result<f64, SimError> {
    let (cfg, trace) = emptying_scenario(config, pressure);
    let run = run_headless(&cfg, &trace, RunOptions::default())?;
    run.metrics()?
        .emptying_duration
        .ok_or_else(|| SimError::IncompleteRun { reason: format!("capsule did not empty at {pressure} Pa") })
}

pub fn emptying_curve(config: &ScenarioConfig) -> Result<Vec<EmptyingRow>, SimError> {
    EMPTYING_PRESSURES
        .iter()
        .map(|&p| {
            Ok(EmptyingRow { pressure_pa: p, duration_s: emptying_duration(config, p)?, rate_m3_per_s: release_rate(p, &config.release) })
        })
        .collect()
}

fn to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

/// Runs one characterization and renders it as CSV.
pub fn characterize(kind: Kind, config: &ScenarioConfig) -> Result<String, SimError> {
    Ok(match kind {
        Kind::PressureSweep => to_csv(&pressure_sweep(config)),
        Kind::ThresholdGrid => to_csv(&threshold_grid(config)),
        Kind::EmptyingCurve => to_csv(&emptying_curve(config)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_has_46_rows_and_gel_is_lower() {
        let rows = pressure_sweep(&ScenarioConfig::default());
        assert_eq!(rows.len(), 46);
        assert_eq!(rows[0].voltage_v, 10.0);
        assert_eq!(rows[45].voltage_v, 100.0);
        assert!(rows.iter().all(|r| r.gel_pa <= r.water_pa));
        let csv = characterize(Kind::PressureSweep, &ScenarioConfig::default()).unwrap();
        assert!(csv.starts_with("voltage_v,water_pa,gel_pa\n10.0,240000.0,216000.0\n"));
    }

    #[test]
    fn default_capsule_ramps_off_one_step_above_threshold() {
        let cfg = ScenarioConfig::default();
        let grid = threshold_grid(&cfg);
        let default = grid.iter().find(|r| r.hole_um == 500.0 && r.wall_um == 500.0).unwrap();
        assert!((default.threshold_pa.unwrap() - 1.25e6).abs() < 1e-3);
        assert!((default.ramp_pa.unwrap() - 1.3e6).abs() < 1e-3);
        assert!(grid.iter().filter(|r| r.hole_um == 1000.0).all(|r| !r.bubble_formed));
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("emptying_curve".parse::<Kind>().unwrap(), Kind::EmptyingCurve);
        assert!("nope".parse::<Kind>().is_err());
    }
}
