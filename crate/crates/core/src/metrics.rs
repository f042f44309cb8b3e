//! Experiment metrics computed from a telemetry log.

use serde::{Deserialize, Serialize};

use crate::environment::RegionRole;
use crate::error::SimError;
use crate::scenario::ScenarioConfig;
use crate::telemetry::{EndReason, SimEvent, TelemetryRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDelivery {
    pub region: String,
    /// m³ of drug inside the region at the end of the run.
    pub volume: f64,
    pub entered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub end_reason: EndReason,
    /// s
    pub duration: f64,
    /// Time at which the goal region was first entered, s.
    pub navigation_time: Option<f64>,
    /// Integrated distance travelled by the capsule centre, m.
    pub path_length: f64,
    pub centerline_progress: Option<f64>,
    pub centerline_length: Option<f64>,
    /// Path length over navigation time, or over the whole run without a goal, m/s.
    pub mean_speed: f64,
    pub bubble_removed_at: Option<f64>,
    /// From bubble removal until the cargo counted as empty, s.
    pub emptying_duration: Option<f64>,
    pub cumulative_released: f64,
    pub total_dye: f64,
    pub targets: Vec<TargetDelivery>,
    pub targets_delivered: usize,
    /// Sum of drug over all target regions, m³.
    pub delivered_in_targets: f64,
    /// (t, cumulative released) once per sequence cycle.
    pub release_timeline: Vec<(f64, f64)>,
}

/// Reduces a complete telemetry log. Fails with `IncompleteRun` when the
/// scenario has a goal that was never reached.
pub fn compute_metrics(telemetry: &[TelemetryRecord], config: &ScenarioConfig) -> Result<MetricsReport, SimError> {
    let env = config.validate()?;
    let end = telemetry
        .iter()
        .rev()
        .find_map(|r| if let TelemetryRecord::End(e) = r { Some(*e) } else { None })
        .ok_or_else(|| SimError::IncompleteRun { reason: "telemetry has no end record".into() })?;
    let last_step = telemetry
        .iter()
        .rev()
        .find_map(|r| if let TelemetryRecord::Step(s) = r { Some(*s) } else { None })
        .ok_or_else(|| SimError::IncompleteRun { reason: "telemetry has no state records".into() })?;
    let last_delivery = telemetry
        .iter()
        .rev()
        .find_map(|r| if let TelemetryRecord::Delivery(d) = r { Some(d) } else { None });

    let mut navigation_time = None;
    let mut bubble_removed_at = None;
    let mut emptied_at = None;
    let mut entered = std::collections::BTreeSet::new();
    for r in telemetry {
        if let TelemetryRecord::Event(e) = r {
            match &e.event {
                SimEvent::GoalReached { .. } => {
                    navigation_time.get_or_insert(e.t);
                }
                SimEvent::BubbleRemoved { .. } => {
                    bubble_removed_at.get_or_insert(e.t);
                }
                SimEvent::DrugEmptied { .. } => {
                    emptied_at.get_or_insert(e.t);
                }
                SimEvent::TargetEntered { region } => {
                    entered.insert(region.clone());
                }
                SimEvent::Reset => {
                    navigation_time = None;
                    bubble_removed_at = None;
                    emptied_at = None;
                }
            }
        }
    }

    let has_goal = env.regions_with_role(RegionRole::Goal).next().is_some();
    if has_goal && navigation_time.is_none() {
        return Err(SimError::IncompleteRun { reason: format!("goal not reached within {:.3} s", end.t) });
    }

    let targets: Vec<TargetDelivery> = env
        .regions_with_role(RegionRole::Target)
        .map(|r| TargetDelivery {
            region: r.name.clone(),
            volume: last_delivery
                .and_then(|d| d.regions.iter().find(|v| v.region == r.name))
                .map_or(0.0, |v| v.volume),
            entered: entered.contains(&r.name),
        })
        .collect();
    let span = navigation_time.unwrap_or(end.t);
    Ok(MetricsReport {
        scenario: config.name.clone(),
        end_reason: end.reason,
        duration: end.t,
        navigation_time,
        path_length: last_step.path_length,
        centerline_progress: last_step.progress,
        centerline_length: env.centerline_length(),
        mean_speed: if span > 0.0 { last_step.path_length / span } else { 0.0 },
        bubble_removed_at,
        emptying_duration: bubble_removed_at.zip(emptied_at).map(|(a, b)| b - a),
        cumulative_released: last_step.cumulative_released,
        total_dye: last_delivery.map_or(0.0, |d| d.total_dye),
        targets_delivered: targets.iter().filter(|t| t.volume > 0.0).count(),
        delivered_in_targets: targets.iter().map(|t| t.volume).sum(),
        targets,
        release_timeline: telemetry
            .iter()
            .filter_map(|r| if let TelemetryRecord::Delivery(d) = r { Some((d.t, d.cumulative_released)) } else { None })
            .collect(),
    })
}
