//! Snapshot JSON, functional-report CSV and summary JSON.
//!
//! Every float is written with 17 significant digits so that reading a file
//! back gives the same bits.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;
use znd_core::functionals::EventTag;
use znd_core::{Family, Front, FrontSolution, FunctionalReport, GasState};

use crate::Error;

/// `f64` written as `{:.16e}`; non-finite values become `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let raw = RawValue::from_string(fmt17(self.0)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else {
            s.serialize_none()
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Num(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN)))
    }
}

fn state_nums(s: &GasState) -> [Num; 4] {
    s.to_array().map(Num)
}

fn nums_state(a: &[Num; 4]) -> GasState {
    GasState::from_array(a.map(|n| n.0))
}

pub fn family_label(f: Family) -> &'static str {
    match f {
        Family::One => "1",
        Family::Two => "2",
        Family::Three => "3",
        Family::Y => "Y",
        Family::Np => "NP",
    }
}

fn family_from_label<E: serde::de::Error>(s: &str) -> Result<Family, E> {
    match s {
        "1" => Ok(Family::One),
        "2" => Ok(Family::Two),
        "3" => Ok(Family::Three),
        "Y" => Ok(Family::Y),
        "NP" => Ok(Family::Np),
        other => Err(E::custom(format!("unknown family {other:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backgrounds {
    pub left: [Num; 4],
    pub right: [Num; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontRecord {
    pub id: u64,
    #[serde(serialize_with = "ser_family", deserialize_with = "de_family")]
    pub family: Family,
    pub position: Num,
    pub speed: Num,
    pub left: [Num; 4],
    pub right: [Num; 4],
    /// Signed curve parameter; its absolute value is the strength.
    pub strength: Num,
    pub generation: u32,
}

fn ser_family<S: Serializer>(f: &Family, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(family_label(*f))
}

fn de_family<'de, D: Deserializer<'de>>(d: D) -> Result<Family, D::Error> {
    let s = String::deserialize(d)?;
    family_from_label(&s)
}

/// `{time, backgrounds, fronts}` in this field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub time: Num,
    pub backgrounds: Backgrounds,
    pub fronts: Vec<FrontRecord>,
}

impl Snapshot {
    pub fn of(sol: &FrontSolution) -> Self {
        Self {
            time: Num(sol.time),
            backgrounds: Backgrounds {
                left: state_nums(&sol.left_background),
                right: state_nums(&sol.right_background),
            },
            fronts: sol
                .fronts
                .iter()
                .map(|f| FrontRecord {
                    id: f.id,
                    family: f.family,
                    position: Num(f.position),
                    speed: Num(f.speed),
                    left: state_nums(&f.left),
                    right: state_nums(&f.right),
                    strength: Num(f.q),
                    generation: f.generation,
                })
                .collect(),
        }
    }

    /// Rebuilds the front list; defects and the crossing registry are not stored.
    pub fn to_solution(&self) -> Result<FrontSolution, Error> {
        let mut sol = FrontSolution::constant(nums_state(&self.backgrounds.left));
        sol.time = self.time.0;
        sol.right_background = nums_state(&self.backgrounds.right);
        sol.fronts = self
            .fronts
            .iter()
            .map(|r| Front {
                id: r.id,
                family: r.family,
                position: r.position.0,
                speed: r.speed.0,
                left: nums_state(&r.left),
                right: nums_state(&r.right),
                q: r.strength.0,
                generation: r.generation,
                defect: 0.0,
            })
            .collect();
        sol.next_id = sol.fronts.iter().map(|f| f.id + 1).max().unwrap_or(0);
        sol.check_invariants()?;
        Ok(sol)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Json { path: path.into(), source: e })
    }

    pub fn read(path: &Path) -> Result<Self, Error> {
        let text = read_text(path)?;
        Self::from_json(&text, &path.display().to_string())
    }
}

pub const REPORT_COLUMNS: [&str; 12] =
    ["time", "event", "V_U", "Q_U", "F_U", "V_V", "Q_V", "F_V", "Phi", "L1", "Yinf_U", "Yinf_V"];

/// One CSV row; `event` is the label of the event tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub event: String,
    pub values: [f64; 11],
}

impl ReportRow {
    pub fn of(r: &FunctionalReport) -> Self {
        Self {
            event: event_label(&r.event),
            values: [r.time, r.v_u, r.q_u, r.f_u, r.v_v, r.q_v, r.f_v, r.phi, r.l1, r.y_inf_u, r.y_inf_v],
        }
    }
}

fn event_label(e: &EventTag) -> String {
    match e {
        EventTag::Reaction { k, before } => format!("reaction{}{k}", if *before { "-@" } else { "+@" }),
        _ => e.label().to_string(),
    }
}

pub fn write_reports<W: Write>(w: W, reports: &[FunctionalReport]) -> Result<(), Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REPORT_COLUMNS)?;
    for r in reports {
        let row = ReportRow::of(r);
        let mut rec = vec![fmt17(row.values[0]), row.event];
        rec.extend(row.values[1..].iter().map(|v| fmt17(*v)));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::Io { path: "<csv>".into(), source: e })?;
    Ok(())
}

pub fn read_reports<R: std::io::Read>(r: R) -> Result<Vec<ReportRow>, Error> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header != REPORT_COLUMNS {
        return Err(Error::Validation(format!("unexpected report columns {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, Error> {
            rec[i]
                .parse()
                .map_err(|_| Error::Validation(format!("bad number {:?} in column {}", &rec[i], REPORT_COLUMNS[i])))
        };
        let mut values = [0.0; 11];
        values[0] = num(0)?;
        for (k, v) in values.iter_mut().enumerate().skip(1) {
            *v = num(k + 1)?;
        }
        rows.push(ReportRow { event: rec[1].to_string(), values });
    }
    Ok(rows)
}

/// A plain numeric table with a header row.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<(), Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.write_record(r.iter().map(|v| fmt17(*v)))?;
    }
    out.flush().map_err(|e| Error::Io { path: "<csv>".into(), source: e })?;
    Ok(())
}

pub fn read_table<R: std::io::Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>), Error> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Validation(format!("bad number {s:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// `{check, pass, fitted_constants, slopes, residuals}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub check: String,
    pub pass: bool,
    pub fitted_constants: BTreeMap<String, Num>,
    pub slopes: BTreeMap<String, Num>,
    pub residuals: BTreeMap<String, Num>,
}

impl Summary {
    pub fn new(check: &str) -> Self {
        Self {
            check: check.into(),
            pass: true,
            fitted_constants: BTreeMap::new(),
            slopes: BTreeMap::new(),
            residuals: BTreeMap::new(),
        }
    }

    pub fn constant(&mut self, name: &str, v: f64) -> &mut Self {
        self.fitted_constants.insert(name.into(), Num(v));
        self
    }

    pub fn slope(&mut self, name: &str, v: f64) -> &mut Self {
        self.slopes.insert(name.into(), Num(v));
        self
    }

    pub fn residual(&mut self, name: &str, v: f64) -> &mut Self {
        self.residuals.insert(name.into(), Num(v));
        self
    }

    /// Folds a condition into `pass`.
    pub fn require(&mut self, ok: bool) -> &mut Self {
        self.pass &= ok;
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serialization");
        s.push('\n');
        s
    }
}

pub fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

pub fn write_with<F>(path: &Path, f: F) -> Result<(), Error>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), Error>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}
