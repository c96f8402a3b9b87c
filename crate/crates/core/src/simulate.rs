//! Synthetic booking files drawn from a known regression model.
//!
//! Covariates follow marginals resembling the public hotel-reservation data
//! (right-skewed lead times, prices around 100, mostly two adults, rare
//! parking and repeat guests). Outcomes are drawn from the chosen family
//! under caller-supplied coefficients. Each group of `trials` bookings
//! shares its covariates; the logistic family draws every booking with
//! p = μ, the beta-binomial family draws one p ~ Beta(μφ, (1−μ)φ) per group.

use std::collections::BTreeMap;

use ndarray::Array1;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{default_features, Column, ColumnKind, Dataset, RawBookingRecord, INTERCEPT};
use crate::mathkernels::sigmoid;
use crate::model::Family;

pub const FORMAT_HEADER_TRUTH: &str = "# bayes-cancel truth v1";

const ROOM_TYPES: [(&str, f64); 6] = [
    ("Room_Type 1", 0.775),
    ("Room_Type 2", 0.019),
    ("Room_Type 4", 0.167),
    ("Room_Type 5", 0.007),
    ("Room_Type 6", 0.027),
    ("Room_Type 7", 0.005),
];
const MEALS: [(&str, f64); 3] = [
    ("Meal Plan 1", 0.77),
    ("Meal Plan 2", 0.09),
    ("Not Selected", 0.14),
];
const SEGMENTS: [(&str, f64); 5] = [
    ("Online", 0.64),
    ("Offline", 0.29),
    ("Corporate", 0.055),
    ("Complementary", 0.011),
    ("Aviation", 0.004),
];

/// Everything needed to regenerate a synthetic file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    /// Number of booking rows.
    pub n: usize,
    /// `logistic` or `beta-binomial`.
    pub family: String,
    /// Bookings per shared-probability group (beta-binomial only).
    pub trials: u32,
    /// Beta precision for the beta-binomial family.
    pub phi: Option<f64>,
    pub seed: u64,
    /// Status written for outcome 1; the other label is used for 0.
    pub positive_label: String,
    /// Predictors the coefficients refer to, by column name.
    pub features: Vec<String>,
    /// True coefficients by design-column label; absent labels are zero.
    pub coefficients: BTreeMap<String, f64>,
}

/// Coefficients resembling a published fit with `Not_Canceled` as the
/// positive class. The previous-non-cancellation effect is shrunk from an
/// implausibly large point estimate to a moderate value.
pub fn table_coefficients() -> BTreeMap<String, f64> {
    [
        (INTERCEPT, 4.16),
        ("number.of.adults", -0.20),
        ("number.of.children", -0.33),
        ("number.of.weekend.nights", -0.23),
        ("number.of.week.nights", -0.07),
        ("car.parking.space", 0.92),
        ("lead.time", -0.01),
        ("P.C", 1.36),
        ("P.not.C", 0.5),
        ("average.price", -0.02),
        ("special.requests", 1.06),
        ("room.typeRoom_Type2", 0.39),
        ("room.typeRoom_Type4", -0.04),
        ("room.typeRoom_Type5", 0.35),
        ("room.typeRoom_Type6", 0.75),
        ("room.typeRoom_Type7", 2.45),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            n: 5000,
            family: "logistic".into(),
            trials: 1,
            phi: None,
            seed: 0,
            positive_label: "Not_Canceled".into(),
            features: default_features().into_iter().map(Column::name).collect(),
            coefficients: table_coefficients(),
        }
    }
}

/// Design labels a feature can contribute; the sorted-first level is the
/// reference, as in a discovered encoding plan.
fn feature_labels(column: Column) -> Vec<String> {
    let table: &[(&str, f64)] = match column {
        Column::RoomType => &ROOM_TYPES,
        Column::MealType => &MEALS,
        Column::MarketSegment => &SEGMENTS,
        _ => return vec![column.name()],
    };
    let mut levels: Vec<&str> = table.iter().map(|(l, _)| *l).collect();
    levels.sort_unstable();
    levels[1..]
        .iter()
        .map(|l| format!("{}{}", column.name(), l.replace(' ', "")))
        .collect()
}

impl SimulationSpec {
    pub fn family(&self) -> Result<Family> {
        Family::parse(&self.family)
            .ok_or_else(|| Error::Config(format!("unknown family {:?}", self.family)))
    }

    fn feature_columns(&self) -> Result<Vec<Column>> {
        self.features
            .iter()
            .map(|f| match Column::parse(f) {
                Some(c)
                    if matches!(
                        c.kind(),
                        ColumnKind::Count | ColumnKind::Decimal | ColumnKind::Label
                    ) =>
                {
                    Ok(c)
                }
                _ => Err(Error::UnknownFeature(f.clone())),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let family = self.family()?;
        if self.trials == 0 {
            return Err(Error::Config("simulate.trials must be at least 1".into()));
        }
        match (family, self.phi) {
            (Family::BetaBinomialLogit, Some(phi)) if phi > 0.0 && phi.is_finite() => {}
            (Family::BetaBinomialLogit, _) => {
                return Err(Error::Config(
                    "simulate.phi must be a positive number for beta-binomial data".into(),
                ))
            }
            _ => {}
        }
        if self.positive_label != "Canceled" && self.positive_label != "Not_Canceled" {
            return Err(Error::Config(format!(
                "simulate.positive_label must be Canceled or Not_Canceled, got {:?}",
                self.positive_label
            )));
        }
        let mut known = vec![INTERCEPT.to_string()];
        for c in self.feature_columns()? {
            known.extend(feature_labels(c));
        }
        for (name, value) in &self.coefficients {
            if !known.contains(name) {
                return Err(Error::Config(format!(
                    "coefficient {name:?} does not match a design column of the chosen features"
                )));
            }
            if !value.is_finite() {
                return Err(Error::Config(format!("coefficient {name:?} is not finite")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        Ok(format!("{FORMAT_HEADER_TRUTH}\n{body}"))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SimulationSpec =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn pick<'a, R: Rng>(table: &[(&'a str, f64)], rng: &mut R) -> &'a str {
    let dist = WeightedIndex::new(table.iter().map(|(_, w)| *w)).expect("positive weights");
    table[dist.sample(rng)].0
}

fn draw_covariates<R: Rng>(id: usize, rng: &mut R) -> RawBookingRecord {
    let adults = pick(
        &[
            ("0", 0.004),
            ("1", 0.21),
            ("2", 0.72),
            ("3", 0.064),
            ("4", 0.002),
        ],
        rng,
    );
    let children = pick(
        &[("0", 0.926), ("1", 0.045), ("2", 0.028), ("3", 0.001)],
        rng,
    );
    let repeated = rng.random::<f64>() < 0.026;
    let p_not_c = if repeated {
        Poisson::new(3.0_f64).unwrap().sample(rng) as u32
    } else {
        0
    };
    let p_c = if repeated && rng.random::<f64>() < 0.3 {
        1
    } else {
        0
    };
    let lead_time = Exp::new(1.0_f64 / 85.0)
        .unwrap()
        .sample(rng)
        .min(443.0)
        .floor() as u32;
    let price = Normal::new(103.0_f64, 35.0)
        .unwrap()
        .sample(rng)
        .clamp(0.0, 540.0);
    let year = 2017 + u32::from(rng.random::<f64>() < 0.8);
    let month = rng.random_range(1..=12);
    let day = rng.random_range(1..=28);
    RawBookingRecord {
        booking_id: format!("SIM{id:05}"),
        number_of_adults: adults.parse().unwrap(),
        number_of_children: children.parse().unwrap(),
        number_of_weekend_nights: Poisson::new(0.8_f64).unwrap().sample(rng).min(7.0) as u32,
        number_of_week_nights: Poisson::new(2.2_f64).unwrap().sample(rng).min(17.0) as u32,
        type_of_meal: pick(&MEALS, rng).to_string(),
        car_parking_space: u32::from(rng.random::<f64>() < 0.03),
        room_type: pick(&ROOM_TYPES, rng).to_string(),
        lead_time,
        market_segment_type: pick(&SEGMENTS, rng).to_string(),
        repeated: u32::from(repeated),
        p_c,
        p_not_c,
        average_price: (price * 100.0).round() / 100.0,
        special_requests: pick(
            &[("0", 0.545), ("1", 0.314), ("2", 0.12), ("3", 0.021)],
            rng,
        )
        .parse()
        .unwrap(),
        date_of_reservation: format!("{month}/{day}/{year}"),
        booking_status: None,
    }
}

/// Linear predictor of one record under `coefficients` (labels as produced
/// by the encoding plan).
fn linear_predictor(
    record: &RawBookingRecord,
    features: &[Column],
    coefficients: &BTreeMap<String, f64>,
) -> f64 {
    let coef = |name: &str| coefficients.get(name).copied().unwrap_or(0.0);
    let mut eta = coef(INTERCEPT);
    for &c in features {
        match c.kind() {
            ColumnKind::Label => {
                let level = record.label(c).unwrap_or_default().replace(' ', "");
                eta += coef(&format!("{}{}", c.name(), level));
            }
            _ => eta += coef(&c.name()) * record.numeric(c).unwrap_or(0.0),
        }
    }
    eta
}

/// A generated file plus the per-row success probabilities behind it.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: Dataset,
    /// μ of every row.
    pub mu: Array1<f64>,
}

/// Generates `spec.n` bookings. Beta-binomial groups are cut short at the
/// end if `n` is not a multiple of `trials`.
pub fn simulate(spec: &SimulationSpec) -> Result<Simulated> {
    spec.validate()?;
    let family = spec.family()?;
    let features = spec.feature_columns()?;
    let negative = if spec.positive_label == "Canceled" {
        "Not_Canceled"
    } else {
        "Canceled"
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.n);
    let mut mu = Vec::with_capacity(spec.n);
    while records.len() < spec.n {
        let template = draw_covariates(records.len() + 1, &mut rng);
        let m = sigmoid(linear_predictor(&template, &features, &spec.coefficients));
        let p = match family {
            Family::BernoulliLogit => m,
            Family::BetaBinomialLogit => {
                let phi = spec.phi.expect("validated");
                let (a, b) = ((m * phi).max(1e-300), ((1.0 - m) * phi).max(1e-300));
                Beta::new(a, b)
                    .map_err(|e| Error::Config(format!("beta parameters ({a}, {b}): {e}")))?
                    .sample(&mut rng)
            }
        };
        let group = (spec.trials as usize).min(spec.n - records.len());
        for _ in 0..group {
            let mut record = template.clone();
            record.booking_id = format!("SIM{:05}", records.len() + 1);
            let success = rng.random::<f64>() < p;
            record.booking_status = Some(if success {
                spec.positive_label.clone()
            } else {
                negative.to_string()
            });
            records.push(record);
            mu.push(m);
        }
    }
    Ok(Simulated {
        data: Dataset::new(records, "simulated"),
        mu: Array1::from(mu),
    })
}
