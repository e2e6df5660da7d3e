//! Per-node energy accounting from component power draws.
//!
//! Each component (gas sensor, humidity sensor, temperature sensor, radio,
//! MCU) is charged `power(state) * time` for the time it spends in each
//! state. Draws quoted as currents are converted with the logic supply
//! voltage. Whatever part of the horizon a component is not active or
//! listening is charged at its sleep draw.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimDuration;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    GasSensor,
    HumiditySensor,
    TempSensor,
    Radio,
    Mcu,
}

impl Component {
    pub const ALL: [Component; 5] =
        [Component::GasSensor, Component::HumiditySensor, Component::TempSensor, Component::Radio, Component::Mcu];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::GasSensor => "gas_sensor",
            Component::HumiditySensor => "humidity_sensor",
            Component::TempSensor => "temp_sensor",
            Component::Radio => "radio",
            Component::Mcu => "mcu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentState {
    Active,
    /// Radio idle-listening in a wake window.
    Listen,
    Sleep,
}

impl ComponentState {
    pub const ALL: [ComponentState; 3] = [ComponentState::Active, ComponentState::Listen, ComponentState::Sleep];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadioPreset {
    XbeeSeries2,
    XbeePro,
    /// No published draw; the scenario must set `radio_active_ma`.
    LilypadXbee,
}

impl RadioPreset {
    pub fn active_ma(self) -> Option<f64> {
        match self {
            RadioPreset::XbeeSeries2 => Some(40.0),
            RadioPreset::XbeePro => Some(62.0),
            RadioPreset::LilypadXbee => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("negative or non-finite duration {0} s")]
    BadDuration(f64),
    #[error("radio draw is unset (the LilyPad XBee preset publishes none); set radio_active_ma")]
    RadioDrawUnset,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Hardware power figures. Units follow the datasheet convention of each
/// part: mW for the heated sensors, mA/µA for the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub gas_sensor_active_mw: f64,
    pub humidity_sensor_active_mw: f64,
    pub temp_sensor_active_ua: f64,
    pub radio_active_ma: Option<f64>,
    /// Idle-listen draw; falls back to `radio_active_ma`.
    pub radio_listen_ma: Option<f64>,
    pub mcu_active_ua: f64,
    pub logic_supply_v: f64,
    pub gas_sensor_sleep_mw: f64,
    pub humidity_sensor_sleep_mw: f64,
    pub temp_sensor_sleep_ua: f64,
    pub radio_sleep_ua: f64,
    pub mcu_sleep_ua: f64,
}

impl Default for PowerProfile {
    fn default() -> Self {
        PowerProfile::with_radio(RadioPreset::XbeeSeries2)
    }
}

impl PowerProfile {
    pub fn with_radio(preset: RadioPreset) -> Self {
        PowerProfile {
            gas_sensor_active_mw: 900.0,
            humidity_sensor_active_mw: 200.0,
            temp_sensor_active_ua: 80.0,
            radio_active_ma: preset.active_ma(),
            radio_listen_ma: None,
            mcu_active_ua: 300.0,
            logic_supply_v: 3.3,
            gas_sensor_sleep_mw: 0.0,
            humidity_sensor_sleep_mw: 0.0,
            temp_sensor_sleep_ua: 0.0,
            radio_sleep_ua: 1.0,
            mcu_sleep_ua: 0.5,
        }
    }

    /// Draw in watts. Listen only differs from Active for the radio.
    pub fn power_w(&self, component: Component, state: ComponentState) -> Result<f64, EnergyError> {
        let v = self.logic_supply_v;
        let active = |c: Component| -> Result<f64, EnergyError> {
            Ok(match c {
                Component::GasSensor => self.gas_sensor_active_mw * 1e-3,
                Component::HumiditySensor => self.humidity_sensor_active_mw * 1e-3,
                Component::TempSensor => v * self.temp_sensor_active_ua * 1e-6,
                Component::Radio => v * self.radio_active_ma.ok_or(EnergyError::RadioDrawUnset)? * 1e-3,
                Component::Mcu => v * self.mcu_active_ua * 1e-6,
            })
        };
        match state {
            ComponentState::Active => active(component),
            ComponentState::Listen => match (component, self.radio_listen_ma) {
                (Component::Radio, Some(ma)) => Ok(v * ma * 1e-3),
                _ => active(component),
            },
            ComponentState::Sleep => Ok(match component {
                Component::GasSensor => self.gas_sensor_sleep_mw * 1e-3,
                Component::HumiditySensor => self.humidity_sensor_sleep_mw * 1e-3,
                Component::TempSensor => v * self.temp_sensor_sleep_ua * 1e-6,
                Component::Radio => v * self.radio_sleep_ua * 1e-6,
                Component::Mcu => v * self.mcu_sleep_ua * 1e-6,
            }),
        }
    }

    /// Human-readable problems; empty when the profile is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.radio_active_ma.is_none() {
            out.push(EnergyError::RadioDrawUnset.to_string());
        }
        let figures = [
            ("gas_sensor_active_mw", Some(self.gas_sensor_active_mw)),
            ("humidity_sensor_active_mw", Some(self.humidity_sensor_active_mw)),
            ("temp_sensor_active_ua", Some(self.temp_sensor_active_ua)),
            ("radio_active_ma", self.radio_active_ma),
            ("radio_listen_ma", self.radio_listen_ma),
            ("mcu_active_ua", Some(self.mcu_active_ua)),
            ("logic_supply_v", Some(self.logic_supply_v)),
            ("gas_sensor_sleep_mw", Some(self.gas_sensor_sleep_mw)),
            ("humidity_sensor_sleep_mw", Some(self.humidity_sensor_sleep_mw)),
            ("temp_sensor_sleep_ua", Some(self.temp_sensor_sleep_ua)),
            ("radio_sleep_ua", Some(self.radio_sleep_ua)),
            ("mcu_sleep_ua", Some(self.mcu_sleep_ua)),
        ];
        for (name, value) in figures {
            if let Some(x) = value {
                if !(x.is_finite() && x >= 0.0) {
                    out.push(format!("{name} must be a non-negative number, got {x}"));
                }
            }
        }
        if out.is_empty() {
            for c in Component::ALL {
                let sleep = self.power_w(c, ComponentState::Sleep).unwrap_or(0.0);
                let active = self.power_w(c, ComponentState::Active).unwrap_or(f64::INFINITY);
                if sleep > active {
                    out.push(format!("{} sleep draw exceeds its active draw", c.name()));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub node: NodeId,
    energy_j: [f64; 5],
    time_ms: [[u64; 3]; 5],
}

impl EnergyLedger {
    pub fn new(node: &str) -> Self {
        EnergyLedger { node: node.to_string(), energy_j: [0.0; 5], time_ms: [[0; 3]; 5] }
    }

    pub fn energy_j(&self, component: Component) -> f64 {
        self.energy_j[component.index()]
    }

    pub fn time(&self, component: Component, state: ComponentState) -> SimDuration {
        SimDuration(self.time_ms[component.index()][state.index()])
    }

    /// Sum over components in [`Component::ALL`] order.
    pub fn total_j(&self) -> f64 {
        self.energy_j.iter().sum()
    }

    /// Time the component was drawing more than its sleep power.
    pub fn busy_time(&self, component: Component) -> SimDuration {
        self.time(component, ComponentState::Active) + self.time(component, ComponentState::Listen)
    }

    /// Charges the remainder of `horizon` not spent busy at the sleep draw.
    pub fn fill_sleep(&mut self, horizon: SimDuration, profile: &PowerProfile) -> Result<(), EnergyError> {
        for c in Component::ALL {
            let slept = self.time(c, ComponentState::Sleep);
            let rest = horizon.as_millis().saturating_sub(self.busy_time(c).as_millis() + slept.as_millis());
            accrue(self, c, ComponentState::Sleep, SimDuration(rest), profile)?;
        }
        Ok(())
    }
}

/// Adds `power(component, state) * duration` to the ledger.
pub fn accrue(
    ledger: &mut EnergyLedger,
    component: Component,
    state: ComponentState,
    duration: SimDuration,
    profile: &PowerProfile,
) -> Result<(), EnergyError> {
    if duration.as_millis() == 0 {
        return Ok(());
    }
    let watts = profile.power_w(component, state)?;
    ledger.energy_j[component.index()] += watts * duration.as_secs_f64();
    ledger.time_ms[component.index()][state.index()] += duration.as_millis();
    Ok(())
}

/// [`accrue`] for a duration given in seconds; rejects negative spans.
pub fn accrue_secs(
    ledger: &mut EnergyLedger,
    component: Component,
    state: ComponentState,
    duration_s: f64,
    profile: &PowerProfile,
) -> Result<(), EnergyError> {
    if !(duration_s.is_finite() && duration_s >= 0.0) {
        return Err(EnergyError::BadDuration(duration_s));
    }
    accrue(ledger, component, state, SimDuration::from_secs_f64(duration_s), profile)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub node: NodeId,
    pub total_j: f64,
    pub per_component_j: Vec<(Component, f64)>,
}

pub fn node_energy_over(ledgers: &[EnergyLedger], node: &str) -> Result<EnergyBreakdown, EnergyError> {
    let ledger = ledgers
        .iter()
        .find(|l| l.node == node)
        .ok_or_else(|| EnergyError::UnknownNode(node.to_string()))?;
    Ok(EnergyBreakdown {
        node: ledger.node.clone(),
        total_j: ledger.total_j(),
        per_component_j: Component::ALL.iter().map(|&c| (c, ledger.energy_j(c))).collect(),
    })
}
