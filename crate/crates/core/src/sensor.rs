//! What the node's sensors report for a given ground truth.
//!
//! The gas channel follows a metal-oxide power law: the normalized
//! resistance ratio `Rs/R0 = (ppm / r0)^exponent` falls as concentration
//! rises. The node inverts the ratio back to a concentration estimate and
//! maps it to an air-quality index through a piecewise-linear table.

use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::EnvReading;
use crate::rng::gaussian;
use crate::time::SimDuration;

/// Concentrations are floored here before the power law so a noisy
/// reading never leaves the sensor's domain.
const MIN_MEASURABLE_PPM: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("gas concentration must be positive, got {0} ppm")]
    GasDomain(f64),
    #[error("sensors powered for {powered_ms} ms, warm-up needs {required_ms} ms")]
    WarmupViolation { powered_ms: u64, required_ms: u64 },
    #[error("sensors read while the node is asleep")]
    NodeAsleep,
    #[error("invalid AQI mapping: {0}")]
    BadMapping(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSensorModel {
    /// Concentration at which the normalized ratio is 1.
    pub r0_baseline_ppm: f64,
    pub exponent: f64,
    /// Seconds the sensors must be powered before a valid reading.
    #[serde(default = "default_warmup_s")]
    pub warmup_s: f64,
    #[serde(default)]
    pub measurement_sigma: f64,
}

fn default_warmup_s() -> f64 {
    30.0
}

impl GasSensorModel {
    pub fn warmup(&self) -> SimDuration {
        SimDuration::from_secs_f64(self.warmup_s)
    }
}

impl Default for GasSensorModel {
    fn default() -> Self {
        GasSensorModel {
            r0_baseline_ppm: 100.0,
            exponent: -0.42,
            warmup_s: default_warmup_s(),
            measurement_sigma: 0.0,
        }
    }
}

/// Piecewise-linear concentration to index table, clamped at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct AqiMapping {
    breakpoints: Vec<(f64, f64)>,
}

impl AqiMapping {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self, SensorError> {
        if breakpoints.is_empty() {
            return Err(SensorError::BadMapping("no breakpoints".into()));
        }
        if breakpoints.iter().any(|(c, i)| !c.is_finite() || !i.is_finite()) {
            return Err(SensorError::BadMapping("non-finite breakpoint".into()));
        }
        for w in breakpoints.windows(2) {
            if !(w[0].0 < w[1].0 && w[0].1 < w[1].1) {
                return Err(SensorError::BadMapping(format!(
                    "breakpoints must increase strictly in both coordinates: {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(AqiMapping { breakpoints })
    }

    /// Five breakpoints from `baseline` (index 50) to `5 * baseline` (index 300).
    pub fn default_for_baseline(baseline_ppm: f64) -> Self {
        let b = baseline_ppm;
        AqiMapping::new(vec![(b, 50.0), (2.0 * b, 100.0), (3.0 * b, 150.0), (4.0 * b, 200.0), (5.0 * b, 300.0)])
            .expect("positive baseline gives a valid table")
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }
}

impl TryFrom<Vec<(f64, f64)>> for AqiMapping {
    type Error = SensorError;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        AqiMapping::new(v)
    }
}

impl From<AqiMapping> for Vec<(f64, f64)> {
    fn from(m: AqiMapping) -> Self {
        m.breakpoints
    }
}

/// Sensor parameters shared by every node in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorModels {
    #[serde(default)]
    pub gas: GasSensorModel,
    /// Defaults to [`AqiMapping::default_for_baseline`] at the gas model's `r0`.
    #[serde(default)]
    pub aqi: Option<AqiMapping>,
    #[serde(default)]
    pub temp_sigma: f64,
    #[serde(default)]
    pub humidity_sigma: f64,
}

impl Default for SensorModels {
    fn default() -> Self {
        SensorModels { gas: GasSensorModel::default(), aqi: None, temp_sigma: 0.0, humidity_sigma: 0.0 }
    }
}

impl SensorModels {
    pub fn mapping(&self) -> AqiMapping {
        self.aqi
            .clone()
            .unwrap_or_else(|| AqiMapping::default_for_baseline(self.gas.r0_baseline_ppm))
    }
}

/// Sensor supply state at the moment of a read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorPower {
    pub node_awake: bool,
    pub powered_for: SimDuration,
}

/// Values one sampling step produces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub temp: f64,
    pub humidity: f64,
    /// Concentration recovered from the resistance ratio.
    pub gas_ppm: f64,
    pub aqi: f64,
}

pub fn gas_ratio(model: &GasSensorModel, gas_ppm: f64) -> Result<f64, SensorError> {
    if gas_ppm.is_nan() || gas_ppm <= 0.0 {
        return Err(SensorError::GasDomain(gas_ppm));
    }
    Ok(libm::pow(gas_ppm / model.r0_baseline_ppm, model.exponent))
}

/// Inverse of [`gas_ratio`].
pub fn gas_from_ratio(model: &GasSensorModel, ratio: f64) -> f64 {
    model.r0_baseline_ppm * libm::pow(ratio, 1.0 / model.exponent)
}

pub fn aqi_from_gas(mapping: &AqiMapping, gas_ppm: f64) -> f64 {
    let bp = &mapping.breakpoints;
    let (first, last) = (bp[0], bp[bp.len() - 1]);
    if gas_ppm <= first.0 {
        return first.1;
    }
    if gas_ppm >= last.0 {
        return last.1;
    }
    // First breakpoint strictly above the input; its predecessor is at or below.
    let hi = bp.partition_point(|&(c, _)| c <= gas_ppm);
    let (c1, i1) = bp[hi - 1];
    let (c2, i2) = bp[hi];
    if gas_ppm == c1 {
        return i1;
    }
    i1 + (i2 - i1) * (gas_ppm - c1) / (c2 - c1)
}

/// Reads all three sensors.
///
/// Consumes exactly three normal draws (temperature, humidity, gas).
pub fn read_sensors<R: RngCore + ?Sized>(
    power: SensorPower,
    env: &EnvReading,
    models: &SensorModels,
    mapping: &AqiMapping,
    rng: &mut R,
) -> Result<SensorReading, SensorError> {
    if !power.node_awake {
        return Err(SensorError::NodeAsleep);
    }
    let required = models.gas.warmup();
    if power.powered_for < required {
        return Err(SensorError::WarmupViolation {
            powered_ms: power.powered_for.as_millis(),
            required_ms: required.as_millis(),
        });
    }
    let temp = env.temp + gaussian(rng, models.temp_sigma);
    let humidity = (env.humidity + gaussian(rng, models.humidity_sigma)).clamp(0.0, 100.0);
    let exposed = (env.gas + gaussian(rng, models.gas.measurement_sigma)).max(MIN_MEASURABLE_PPM);
    let ratio = gas_ratio(&models.gas, exposed)?;
    let gas_ppm = gas_from_ratio(&models.gas, ratio);
    Ok(SensorReading { temp, humidity, gas_ppm, aqi: aqi_from_gas(mapping, gas_ppm) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_stream;
    use crate::time::SimTime;
    use proptest::prelude::*;

    fn model(exponent: f64) -> GasSensorModel {
        GasSensorModel { r0_baseline_ppm: 100.0, exponent, warmup_s: 30.0, measurement_sigma: 0.0 }
    }

    fn table() -> AqiMapping {
        AqiMapping::default_for_baseline(100.0)
    }

    /// Linear scan over every segment; independent of the binary search above.
    fn interp_oracle(bp: &[(f64, f64)], x: f64) -> f64 {
        if x <= bp[0].0 {
            return bp[0].1;
        }
        for seg in bp.windows(2) {
            let ((c1, i1), (c2, i2)) = (seg[0], seg[1]);
            if x >= c1 && x <= c2 {
                let w = (x - c1) / (c2 - c1);
                return (1.0 - w) * i1 + w * i2;
            }
        }
        bp[bp.len() - 1].1
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(gas_ratio(&model(-0.42), 100.0).unwrap(), 1.0);
        assert_eq!(gas_ratio(&model(-1.0), 200.0).unwrap(), 0.5);
        // 4^-0.5 = 1/sqrt(4) = 0.5
        assert_eq!(gas_ratio(&model(-0.5), 400.0).unwrap(), 0.5);
    }

    #[test]
    fn ratio_rejects_non_positive_gas() {
        assert_eq!(gas_ratio(&model(-1.0), 0.0), Err(SensorError::GasDomain(0.0)));
        assert!(gas_ratio(&model(-1.0), -3.0).is_err());
        assert!(gas_ratio(&model(-1.0), f64::NAN).is_err());
    }

    #[test]
    fn aqi_examples() {
        let m = table();
        assert_eq!(aqi_from_gas(&m, 300.0), 150.0);
        assert_eq!(aqi_from_gas(&m, 150.0), 75.0);
        assert_eq!(aqi_from_gas(&m, 450.0), 250.0);
        assert_eq!(aqi_from_gas(&m, 20.0), 50.0);
        assert_eq!(aqi_from_gas(&m, 9_000.0), 300.0);
    }

    #[test]
    fn mapping_rejects_bad_tables() {
        assert!(AqiMapping::new(vec![]).is_err());
        assert!(AqiMapping::new(vec![(1.0, 10.0), (1.0, 20.0)]).is_err());
        assert!(AqiMapping::new(vec![(1.0, 10.0), (2.0, 10.0)]).is_err());
        assert!(AqiMapping::new(vec![(5.0, 1.0)]).is_ok());
    }

    #[test]
    fn single_breakpoint_is_constant() {
        let m = AqiMapping::new(vec![(5.0, 42.0)]).unwrap();
        assert_eq!(aqi_from_gas(&m, 1.0), 42.0);
        assert_eq!(aqi_from_gas(&m, 5.0), 42.0);
        assert_eq!(aqi_from_gas(&m, 50.0), 42.0);
    }

    fn env(temp: f64, humidity: f64, gas: f64) -> EnvReading {
        EnvReading { t: SimTime::ZERO, temp, humidity, gas }
    }

    fn awake(secs: u64) -> SensorPower {
        SensorPower { node_awake: true, powered_for: SimDuration::from_secs(secs) }
    }

    #[test]
    fn zero_noise_read_is_identity() {
        let models = SensorModels { gas: model(-0.42), ..Default::default() };
        let m = models.mapping();
        let mut rng = seed_stream(1, "sensor", "n");
        let r = read_sensors(awake(30), &env(21.7, 44.0, 100.0), &models, &m, &mut rng).unwrap();
        assert_eq!(r.temp, 21.7);
        assert_eq!(r.humidity, 44.0);
        assert_eq!(r.gas_ppm, 100.0);
        assert_eq!(r.aqi, aqi_from_gas(&m, 100.0));
    }

    #[test]
    fn warmup_is_enforced() {
        let models = SensorModels { gas: model(-0.42), ..Default::default() };
        let m = models.mapping();
        let mut rng = seed_stream(1, "sensor", "n");
        let err = read_sensors(awake(10), &env(20.0, 40.0, 100.0), &models, &m, &mut rng).unwrap_err();
        assert_eq!(err, SensorError::WarmupViolation { powered_ms: 10_000, required_ms: 30_000 });
        let asleep = SensorPower { node_awake: false, powered_for: SimDuration::from_secs(60) };
        assert_eq!(
            read_sensors(asleep, &env(20.0, 40.0, 100.0), &models, &m, &mut rng),
            Err(SensorError::NodeAsleep)
        );
    }

    #[test]
    fn mapping_serde_validates() {
        let ok: AqiMapping = serde_json::from_str("[[1.0, 2.0], [3.0, 4.0]]").unwrap();
        assert_eq!(ok.breakpoints().len(), 2);
        assert!(serde_json::from_str::<AqiMapping>("[[3.0, 2.0], [1.0, 4.0]]").is_err());
    }

    proptest! {
        #[test]
        fn ratio_strictly_decreasing(a in 0.01f64..1e4, b in 0.01f64..1e4, e in -3.0f64..-0.05) {
            prop_assume!(a < b * (1.0 - 1e-9));
            let m = model(e);
            prop_assert!(gas_ratio(&m, a).unwrap() > gas_ratio(&m, b).unwrap());
        }

        #[test]
        fn aqi_monotone(a in 0.0f64..1e3, b in 0.0f64..1e3) {
            let m = table();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(aqi_from_gas(&m, lo) <= aqi_from_gas(&m, hi));
        }
    }

    #[test]
    fn aqi_matches_scan_oracle_on_random_inputs() {
        let m = AqiMapping::new(vec![(40.0, 10.0), (90.0, 55.0), (130.0, 61.0), (400.0, 190.0), (410.0, 400.0)])
            .unwrap();
        let mut rng = seed_stream(11, "test", "aqi-oracle");
        for _ in 0..1_000 {
            let x = crate::rng::unit_f64(&mut rng) * 500.0;
            let got = aqi_from_gas(&m, x);
            let want = interp_oracle(m.breakpoints(), x);
            assert!(((got - want) / want).abs() <= 1e-9, "x={x} got={got} want={want}");
        }
    }
}
