//! Hotel-booking CSV ingestion, categorical encoding and design matrices.
//!
//! Column headers are matched after normalization: surrounding whitespace is
//! trimmed, spaces and hyphens become dots, and the comparison ignores case,
//! so `lead time`, `lead.time` and `Lead Time` all name the same column.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INTERCEPT: &str = "Intercept";
pub const FORMAT_HEADER_DESIGN: &str = "# bayes-cancel design-matrix v1";

/// The seventeen columns of the booking file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Column {
    BookingId,
    Adults,
    Children,
    WeekendNights,
    WeekNights,
    MealType,
    CarParking,
    RoomType,
    LeadTime,
    MarketSegment,
    Repeated,
    PreviousCancellations,
    PreviousNotCanceled,
    AveragePrice,
    SpecialRequests,
    ReservationDate,
    BookingStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Id,
    Count,
    Decimal,
    Label,
    Date,
    Response,
}

impl Column {
    pub const ALL: [Column; 17] = [
        Column::BookingId,
        Column::Adults,
        Column::Children,
        Column::WeekendNights,
        Column::WeekNights,
        Column::MealType,
        Column::CarParking,
        Column::RoomType,
        Column::LeadTime,
        Column::MarketSegment,
        Column::Repeated,
        Column::PreviousCancellations,
        Column::PreviousNotCanceled,
        Column::AveragePrice,
        Column::SpecialRequests,
        Column::ReservationDate,
        Column::BookingStatus,
    ];

    /// Header as it appears in the source file.
    pub fn header(self) -> &'static str {
        match self {
            Column::BookingId => "Booking_ID",
            Column::Adults => "number of adults",
            Column::Children => "number of children",
            Column::WeekendNights => "number of weekend nights",
            Column::WeekNights => "number of week nights",
            Column::MealType => "type of meal",
            Column::CarParking => "car parking space",
            Column::RoomType => "room type",
            Column::LeadTime => "lead time",
            Column::MarketSegment => "market segment type",
            Column::Repeated => "repeated",
            Column::PreviousCancellations => "P-C",
            Column::PreviousNotCanceled => "P-not-C",
            Column::AveragePrice => "average price",
            Column::SpecialRequests => "special requests",
            Column::ReservationDate => "date of reservation",
            Column::BookingStatus => "booking status",
        }
    }

    /// Dotted name used in design-matrix labels and configuration.
    pub fn name(self) -> String {
        normalize_header(self.header())
    }

    pub fn kind(self) -> ColumnKind {
        match self {
            Column::BookingId => ColumnKind::Id,
            Column::AveragePrice => ColumnKind::Decimal,
            Column::MealType | Column::RoomType | Column::MarketSegment => ColumnKind::Label,
            Column::ReservationDate => ColumnKind::Date,
            Column::BookingStatus => ColumnKind::Response,
            _ => ColumnKind::Count,
        }
    }

    /// Resolve a user-supplied column name (any accepted spelling).
    pub fn parse(name: &str) -> Option<Column> {
        let key = normalize_header(name).to_ascii_lowercase();
        Column::ALL
            .into_iter()
            .find(|c| c.name().to_ascii_lowercase() == key)
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Trim, then map spaces and hyphens to dots.
pub fn normalize_header(raw: &str) -> String {
    raw.trim()
        .chars()
        .map(|c| if c == ' ' || c == '-' { '.' } else { c })
        .collect()
}

/// The predictors shown in the published coefficient tables, in table order.
pub fn default_features() -> Vec<Column> {
    vec![
        Column::Adults,
        Column::Children,
        Column::WeekendNights,
        Column::WeekNights,
        Column::CarParking,
        Column::LeadTime,
        Column::PreviousCancellations,
        Column::PreviousNotCanceled,
        Column::AveragePrice,
        Column::SpecialRequests,
        Column::RoomType,
    ]
}

/// Expected file columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub columns: Vec<Column>,
}

impl Schema {
    /// All seventeen columns (training data).
    pub fn bookings() -> Self {
        Schema {
            columns: Column::ALL.to_vec(),
        }
    }

    /// New bookings to score: the training schema minus `booking status`.
    pub fn new_bookings() -> Self {
        Schema {
            columns: Column::ALL
                .into_iter()
                .filter(|c| *c != Column::BookingStatus)
                .collect(),
        }
    }

    fn contains(&self, column: Column) -> bool {
        self.columns.contains(&column)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawBookingRecord {
    pub booking_id: String,
    pub number_of_adults: u32,
    pub number_of_children: u32,
    pub number_of_weekend_nights: u32,
    pub number_of_week_nights: u32,
    pub type_of_meal: String,
    pub car_parking_space: u32,
    pub room_type: String,
    pub lead_time: u32,
    pub market_segment_type: String,
    pub repeated: u32,
    pub p_c: u32,
    pub p_not_c: u32,
    pub average_price: f64,
    pub special_requests: u32,
    pub date_of_reservation: String,
    /// `None` only for new bookings read without the response column.
    pub booking_status: Option<String>,
}

impl RawBookingRecord {
    pub fn numeric(&self, column: Column) -> Option<f64> {
        let v = match column {
            Column::Adults => self.number_of_adults,
            Column::Children => self.number_of_children,
            Column::WeekendNights => self.number_of_weekend_nights,
            Column::WeekNights => self.number_of_week_nights,
            Column::CarParking => self.car_parking_space,
            Column::LeadTime => self.lead_time,
            Column::Repeated => self.repeated,
            Column::PreviousCancellations => self.p_c,
            Column::PreviousNotCanceled => self.p_not_c,
            Column::SpecialRequests => self.special_requests,
            Column::AveragePrice => return Some(self.average_price),
            _ => return None,
        };
        Some(v as f64)
    }

    pub fn label(&self, column: Column) -> Option<&str> {
        match column {
            Column::BookingId => Some(&self.booking_id),
            Column::MealType => Some(&self.type_of_meal),
            Column::RoomType => Some(&self.room_type),
            Column::MarketSegment => Some(&self.market_segment_type),
            Column::ReservationDate => Some(&self.date_of_reservation),
            Column::BookingStatus => self.booking_status.as_deref(),
            _ => None,
        }
    }

    /// Cell text as written to a CSV file.
    fn cell(&self, column: Column) -> String {
        match column.kind() {
            ColumnKind::Count => format!("{}", self.numeric(column).unwrap() as u32),
            ColumnKind::Decimal => format!("{}", self.average_price),
            _ => self.label(column).unwrap_or_default().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<RawBookingRecord>,
    pub source_path: String,
}

impl Dataset {
    pub fn new(records: Vec<RawBookingRecord>, source_path: impl Into<String>) -> Self {
        Dataset {
            records,
            source_path: source_path.into(),
        }
    }

    pub fn row_count(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes the records with the original headers; the response column is
    /// written only if every record carries one.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let with_status = self.records.iter().all(|r| r.booking_status.is_some());
        let columns: Vec<Column> = Column::ALL
            .into_iter()
            .filter(|c| with_status || *c != Column::BookingStatus)
            .collect();
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(columns.iter().map(|c| c.header()))?;
        for record in &self.records {
            writer.write_record(columns.iter().map(|c| record.cell(*c)))?;
        }
        writer
            .flush()
            .map_err(|e| Error::io(&self.source_path, e))?;
        Ok(())
    }
}

/// Reads a booking CSV. Columns are located by header name, not position.
pub fn parse_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dataset = parse_reader(file, schema)?;
    dataset.source_path = path.display().to_string();
    Ok(dataset)
}

/// [`parse_csv`] over any reader.
pub fn parse_reader<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut positions: HashMap<Column, usize> = HashMap::new();
    for (idx, raw) in headers.iter().enumerate() {
        if let Some(column) = Column::parse(raw) {
            positions.entry(column).or_insert(idx);
        }
    }
    for &column in &schema.columns {
        if !positions.contains_key(&column) {
            return Err(Error::MissingColumn {
                column: column.header().to_string(),
            });
        }
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        let text = |column: Column| -> Result<String> {
            let cell = row.get(positions[&column]).unwrap_or("").trim();
            if cell.is_empty() {
                return Err(Error::MissingValue {
                    row: row_no,
                    column: column.header().to_string(),
                });
            }
            Ok(cell.to_string())
        };
        let count = |column: Column| -> Result<u32> {
            let cell = text(column)?;
            cell.parse::<u32>().map_err(|e| Error::Parse {
                row: row_no,
                column: column.header().to_string(),
                value: cell.clone(),
                reason: e.to_string(),
            })
        };
        let price = {
            let cell = text(Column::AveragePrice)?;
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => v,
                Ok(_) => {
                    return Err(Error::Parse {
                        row: row_no,
                        column: Column::AveragePrice.header().to_string(),
                        value: cell,
                        reason: "must be a finite value >= 0".into(),
                    })
                }
                Err(e) => {
                    return Err(Error::Parse {
                        row: row_no,
                        column: Column::AveragePrice.header().to_string(),
                        value: cell,
                        reason: e.to_string(),
                    })
                }
            }
        };
        let booking_status = if schema.contains(Column::BookingStatus) {
            let status = text(Column::BookingStatus)?;
            if status != "Canceled" && status != "Not_Canceled" {
                return Err(Error::Parse {
                    row: row_no,
                    column: Column::BookingStatus.header().to_string(),
                    value: status,
                    reason: "expected Canceled or Not_Canceled".into(),
                });
            }
            Some(status)
        } else {
            None
        };
        records.push(RawBookingRecord {
            booking_id: text(Column::BookingId)?,
            number_of_adults: count(Column::Adults)?,
            number_of_children: count(Column::Children)?,
            number_of_weekend_nights: count(Column::WeekendNights)?,
            number_of_week_nights: count(Column::WeekNights)?,
            type_of_meal: text(Column::MealType)?,
            car_parking_space: count(Column::CarParking)?,
            room_type: text(Column::RoomType)?,
            lead_time: count(Column::LeadTime)?,
            market_segment_type: text(Column::MarketSegment)?,
            repeated: count(Column::Repeated)?,
            p_c: count(Column::PreviousCancellations)?,
            p_not_c: count(Column::PreviousNotCanceled)?,
            average_price: price,
            special_requests: count(Column::SpecialRequests)?,
            date_of_reservation: text(Column::ReservationDate)?,
            booking_status,
        });
    }
    Ok(Dataset::new(records, ""))
}

/// Draws `n` distinct rows uniformly without replacement. The chosen rows keep
/// their file order.
pub fn subsample(data: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || n > data.row_count() {
        return Err(Error::Size {
            requested: n,
            available: data.row_count(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, data.row_count(), n).into_vec();
    picked.sort_unstable();
    Ok(Dataset::new(
        picked
            .into_iter()
            .map(|i| data.records[i].clone())
            .collect(),
        data.source_path.clone(),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalEncoding {
    pub column: String,
    /// Sorted lexicographically; includes the reference level.
    pub levels: Vec<String>,
    pub reference: String,
}

impl CategoricalEncoding {
    fn non_reference(&self) -> impl Iterator<Item = &String> {
        self.levels.iter().filter(move |l| **l != self.reference)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingPlan {
    pub numeric_columns: Vec<String>,
    pub categorical_columns: Vec<CategoricalEncoding>,
    pub response_column: String,
    pub positive_label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecodedValue {
    Numeric(f64),
    Label(String),
}

impl EncodingPlan {
    /// Builds a plan from the data: levels are the sorted observed labels and
    /// the reference is the first of them.
    pub fn discover(data: &Dataset, features: &[Column], positive_label: &str) -> Result<Self> {
        let mut numeric_columns = Vec::new();
        let mut categorical_columns = Vec::new();
        for &feature in features {
            match feature.kind() {
                ColumnKind::Count | ColumnKind::Decimal => numeric_columns.push(feature.name()),
                ColumnKind::Label => {
                    let levels: BTreeSet<&str> = data
                        .records
                        .iter()
                        .filter_map(|r| r.label(feature))
                        .collect();
                    let levels: Vec<String> = levels.into_iter().map(String::from).collect();
                    let reference = levels.first().cloned().unwrap_or_default();
                    categorical_columns.push(CategoricalEncoding {
                        column: feature.name(),
                        levels,
                        reference,
                    });
                }
                _ => return Err(Error::UnknownFeature(feature.name())),
            }
        }
        let observed = observed_labels(data);
        if !observed.iter().any(|l| l == positive_label) {
            return Err(Error::Label {
                label: positive_label.to_string(),
                observed,
            });
        }
        let plan = EncodingPlan {
            numeric_columns,
            categorical_columns,
            response_column: Column::BookingStatus.name(),
            positive_label: positive_label.to_string(),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        for name in &self.numeric_columns {
            match Column::parse(name).map(Column::kind) {
                Some(ColumnKind::Count | ColumnKind::Decimal) => {}
                _ => return Err(Error::UnknownFeature(name.clone())),
            }
        }
        for cat in &self.categorical_columns {
            if Column::parse(&cat.column).map(Column::kind) != Some(ColumnKind::Label) {
                return Err(Error::UnknownFeature(cat.column.clone()));
            }
            if !cat.levels.is_empty() && !cat.levels.contains(&cat.reference) {
                return Err(Error::Config(format!(
                    "reference level {:?} of {} is not in its level list",
                    cat.reference, cat.column
                )));
            }
            if cat.levels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!(
                    "levels of {} must be sorted and unique",
                    cat.column
                )));
            }
        }
        let names = self.column_names();
        let distinct: BTreeSet<&String> = names.iter().collect();
        if distinct.len() != names.len() {
            return Err(Error::Config(format!(
                "design column labels collide: {names:?}"
            )));
        }
        Ok(())
    }

    /// Design-matrix column labels, intercept first. Indicator labels join
    /// the column name and the level with whitespace removed, e.g.
    /// `room.typeRoom_Type2` for level `Room_Type 2`.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(self.numeric_columns.iter().cloned());
        for cat in &self.categorical_columns {
            names.extend(cat.non_reference().map(|level| {
                let compact: String = level.chars().filter(|c| !c.is_whitespace()).collect();
                format!("{}{}", cat.column, compact)
            }));
        }
        names
    }

    /// Encodes predictors only (no response); used for both training and new
    /// bookings. Every categorical value must be a plan level.
    pub fn encode_predictors(&self, data: &Dataset) -> Result<Array2<f64>> {
        let numeric: Vec<Column> = self
            .numeric_columns
            .iter()
            .map(|n| Column::parse(n).ok_or_else(|| Error::UnknownFeature(n.clone())))
            .collect::<Result<_>>()?;
        let categorical: Vec<(Column, &CategoricalEncoding)> = self
            .categorical_columns
            .iter()
            .map(|c| {
                Column::parse(&c.column)
                    .map(|col| (col, c))
                    .ok_or_else(|| Error::UnknownFeature(c.column.clone()))
            })
            .collect::<Result<_>>()?;
        let width = self.column_names().len();
        let mut x = Array2::zeros((data.row_count(), width));
        for (i, record) in data.records.iter().enumerate() {
            let mut row = x.row_mut(i);
            row[0] = 1.0;
            let mut j = 1;
            for &col in &numeric {
                row[j] = record.numeric(col).expect("numeric column");
                j += 1;
            }
            for &(col, enc) in &categorical {
                let value = record.label(col).unwrap_or_default();
                if !enc.levels.iter().any(|l| l == value) {
                    return Err(Error::UnseenLevel {
                        column: enc.column.clone(),
                        level: value.to_string(),
                    });
                }
                for level in enc.non_reference() {
                    if level == value {
                        row[j] = 1.0;
                    }
                    j += 1;
                }
            }
        }
        Ok(x)
    }

    /// Recovers the original feature values from one encoded row.
    pub fn decode_row(&self, row: &[f64]) -> Result<Vec<(String, DecodedValue)>> {
        let width = self.column_names().len();
        if row.len() != width {
            return Err(Error::Shape(format!(
                "row has {} entries, plan expects {width}",
                row.len()
            )));
        }
        let mut out = Vec::new();
        let mut j = 1;
        for name in &self.numeric_columns {
            out.push((name.clone(), DecodedValue::Numeric(row[j])));
            j += 1;
        }
        for cat in &self.categorical_columns {
            let mut label = cat.reference.clone();
            for level in cat.non_reference() {
                if row[j] == 1.0 {
                    label = level.clone();
                }
                j += 1;
            }
            out.push((cat.column.clone(), DecodedValue::Label(label)));
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: EncodingPlan = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }
}

fn observed_labels(data: &Dataset) -> Vec<String> {
    let set: BTreeSet<&str> = data
        .records
        .iter()
        .filter_map(|r| r.booking_status.as_deref())
        .collect();
    set.into_iter().map(String::from).collect()
}

/// Regression inputs: predictors, successes and trial counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: Array2<f64>,
    pub column_names: Vec<String>,
    pub y: Vec<u32>,
    pub trials: Vec<u32>,
    /// Source row identifiers, carried for observation-set fingerprints.
    pub row_ids: Vec<String>,
}

impl DesignMatrix {
    pub fn new(
        x: Array2<f64>,
        column_names: Vec<String>,
        y: Vec<u32>,
        trials: Vec<u32>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = x.dim();
        if p == 0 || column_names.len() != p {
            return Err(Error::Shape(format!(
                "{p} columns but {} names",
                column_names.len()
            )));
        }
        if y.len() != n || trials.len() != n || row_ids.len() != n {
            return Err(Error::Shape(format!(
                "{n} rows but {} responses, {} trial counts, {} ids",
                y.len(),
                trials.len(),
                row_ids.len()
            )));
        }
        if column_names[0] != INTERCEPT || x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::Shape(
                "first column must be an all-ones Intercept".into(),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(
                "design matrix contains non-finite values".into(),
            ));
        }
        if let Some(i) = (0..n).find(|&i| y[i] > trials[i] || trials[i] == 0) {
            return Err(Error::Data(format!(
                "row {i}: successes {} with {} trials",
                y[i], trials[i]
            )));
        }
        Ok(DesignMatrix {
            x,
            column_names,
            y,
            trials,
            row_ids,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn all_single_trials(&self) -> bool {
        self.trials.iter().all(|&t| t == 1)
    }

    /// Non-intercept columns that take a single value.
    pub fn constant_columns(&self) -> Vec<String> {
        if self.n_rows() == 0 {
            return Vec::new();
        }
        (1..self.n_cols())
            .filter(|&j| {
                let col = self.x.column(j);
                col.iter().all(|&v| v == col[0])
            })
            .map(|j| self.column_names[j].clone())
            .collect()
    }

    /// Rows `idx` in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        DesignMatrix {
            x: self.x.select(ndarray::Axis(0), idx),
            column_names: self.column_names.clone(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            trials: idx.iter().map(|&i| self.trials[i]).collect(),
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    /// CSV with row id, response, trials and every predictor column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{FORMAT_HEADER_DESIGN}").map_err(|e| Error::io("design matrix", e))?;
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["row_id".to_string(), "y".into(), "trials".into()];
        header.extend(self.column_names.iter().cloned());
        writer.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![
                self.row_ids[i].clone(),
                self.y[i].to_string(),
                self.trials[i].to_string(),
            ];
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            writer.write_record(&rec)?;
        }
        writer.flush().map_err(|e| Error::io("design matrix", e))?;
        Ok(())
    }
}

/// Encodes `data` under `plan`; `y = 1` exactly when the booking status equals
/// the plan's positive label, and every row is a single trial.
pub fn build_design_matrix(data: &Dataset, plan: &EncodingPlan) -> Result<DesignMatrix> {
    plan.validate()?;
    let x = plan.encode_predictors(data)?;
    let mut y = Vec::with_capacity(data.row_count());
    for (i, record) in data.records.iter().enumerate() {
        let status = record
            .booking_status
            .as_deref()
            .ok_or(Error::MissingValue {
                row: i + 1,
                column: Column::BookingStatus.header().to_string(),
            })?;
        y.push(u32::from(status == plan.positive_label));
    }
    let observed = observed_labels(data);
    if !observed.is_empty() && !observed.contains(&plan.positive_label) {
        return Err(Error::Label {
            label: plan.positive_label.clone(),
            observed,
        });
    }
    let dm = DesignMatrix::new(
        x,
        plan.column_names(),
        y,
        vec![1; data.row_count()],
        data.records.iter().map(|r| r.booking_id.clone()).collect(),
    )?;
    let constant = dm.constant_columns();
    if !constant.is_empty() {
        log::warn!(
            "constant design columns (coefficients identified by the prior only): {constant:?}"
        );
    }
    Ok(dm)
}

/// Merges rows with identical predictor vectors, summing successes and
/// trials. Groups keep first-occurrence order.
pub fn aggregate_trials(dm: &DesignMatrix) -> DesignMatrix {
    aggregate_trials_with_groups(dm).0
}

/// As [`aggregate_trials`], also returning the group index of each input row.
pub fn aggregate_trials_with_groups(dm: &DesignMatrix) -> (DesignMatrix, Vec<usize>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut first_row = Vec::new();
    let mut y: Vec<u32> = Vec::new();
    let mut trials: Vec<u32> = Vec::new();
    let mut groups = Vec::with_capacity(dm.n_rows());
    for i in 0..dm.n_rows() {
        let key: Vec<u64> = dm.x.row(i).iter().map(|v| v.to_bits()).collect();
        let g = *index.entry(key).or_insert_with(|| {
            first_row.push(i);
            y.push(0);
            trials.push(0);
            first_row.len() - 1
        });
        y[g] += dm.y[i];
        trials[g] += dm.trials[i];
        groups.push(g);
    }
    let merged = DesignMatrix {
        x: dm.x.select(ndarray::Axis(0), &first_row),
        column_names: dm.column_names.clone(),
        y,
        trials,
        row_ids: first_row.iter().map(|&i| dm.row_ids[i].clone()).collect(),
    };
    (merged, groups)
}
