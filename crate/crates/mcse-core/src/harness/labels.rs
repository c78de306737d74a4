//! Chest X-ray observation label vectors and pair selection.
//!
//! Each report carries 14 fixed, alphabetically ordered label slots. A slot
//! holds 1 (definitely present), 0 (definitely absent), -1 (ambiguous), or
//! nothing. Reports with identical full vectors form same-label groups;
//! a report with exactly one or two present labels anchors opposite pairs
//! against any report whose present-label set is disjoint from its own (the
//! partner side is unrestricted, it may even have three or more).

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

/// The 14 label slots, in their fixed order.
pub const CHEXPERT_LABELS: [&str; 14] = [
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Enlarged Cardiomediastinum",
    "Fracture",
    "Lung Lesion",
    "Lung Opacity",
    "No Finding",
    "Pleural Effusion",
    "Pleural Other",
    "Pneumonia",
    "Pneumothorax",
    "Support Devices",
];

/// One label slot's value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelValue {
    Present,
    Absent,
    Ambiguous,
    #[default]
    Blank,
}

impl LabelValue {
    /// Parse a CSV cell. Accepts integer and float spellings of 1, 0 and -1;
    /// an empty cell is blank.
    fn parse(cell: &str) -> Option<LabelValue> {
        match cell.trim() {
            "" => Some(LabelValue::Blank),
            "1" | "1.0" => Some(LabelValue::Present),
            "0" | "0.0" => Some(LabelValue::Absent),
            "-1" | "-1.0" => Some(LabelValue::Ambiguous),
            _ => None,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            LabelValue::Present => "1",
            LabelValue::Absent => "0",
            LabelValue::Ambiguous => "-1",
            LabelValue::Blank => "",
        }
    }
}

/// A report id plus its 14 label slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub id: String,
    pub values: [LabelValue; 14],
}

impl LabelVector {
    /// Slot indexes marked present.
    #[must_use]
    pub fn present_indexes(&self) -> BTreeSet<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == LabelValue::Present)
            .map(|(i, _)| i)
            .collect()
    }

    /// Names of the labels marked present, in slot order.
    #[must_use]
    pub fn present_labels(&self) -> Vec<&'static str> {
        self.present_indexes()
            .into_iter()
            .map(|i| CHEXPERT_LABELS[i])
            .collect()
    }

    /// Canonical grouping key: the 14 slot symbols joined by commas, so two
    /// vectors share a key exactly when every slot agrees.
    #[must_use]
    pub fn key(&self) -> String {
        self.values
            .iter()
            .map(|v| v.symbol())
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("row {row}, column {column:?}: invalid value {value:?} (expected 1, 0, -1 or empty)")]
    InvalidCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: empty report id")]
    EmptyId { row: usize },
}

/// Parsed label records plus any warnings raised while reading.
#[derive(Debug, Clone, Default)]
pub struct LabelTable {
    pub records: Vec<LabelVector>,
    pub warnings: Vec<String>,
}

/// Read label vectors from CSV. The header must name an `id` column and all
/// 14 labels; extra columns are ignored with a warning, and a repeated report
/// id keeps the last row with a warning. Rows count from the header as row 1.
pub fn read_labels_csv<R: Read>(reader: R) -> Result<LabelTable, LabelError> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let headers = csv_reader.headers()?.clone();

    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_index = find("id").ok_or_else(|| LabelError::MissingColumn("id".to_string()))?;
    let mut label_indexes = [0usize; 14];
    for (slot, label) in CHEXPERT_LABELS.iter().enumerate() {
        label_indexes[slot] =
            find(label).ok_or_else(|| LabelError::MissingColumn((*label).to_string()))?;
    }

    let mut warnings = Vec::new();
    for (position, header) in headers.iter().enumerate() {
        if position != id_index && !label_indexes.contains(&position) {
            warnings.push(format!("ignoring column {:?}", header.trim()));
        }
    }

    let mut records: Vec<LabelVector> = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (index, row) in csv_reader.records().enumerate() {
        let row = row?;
        let row_number = index + 2;
        let id = row.get(id_index).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(LabelError::EmptyId { row: row_number });
        }

        let mut values = [LabelValue::Blank; 14];
        for (slot, &column) in label_indexes.iter().enumerate() {
            let cell = row.get(column).unwrap_or("");
            values[slot] = LabelValue::parse(cell).ok_or_else(|| LabelError::InvalidCell {
                row: row_number,
                column: CHEXPERT_LABELS[slot].to_string(),
                value: cell.to_string(),
            })?;
        }

        let record = LabelVector { id: id.clone(), values };
        match seen.get(&id) {
            Some(&slot) => {
                warnings.push(format!("row {row_number}: duplicate id {id:?} replaces the earlier row"));
                records[slot] = record;
            }
            None => {
                seen.insert(id, records.len());
                records.push(record);
            }
        }
    }

    Ok(LabelTable { records, warnings })
}

/// A set of reports sharing one full label vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SameGroup {
    pub key: String,
    pub ids: Vec<String>,
}

/// Output of pair selection: same-vector groups and opposite-label pairs,
/// both deterministically ordered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSelection {
    pub same_groups: Vec<SameGroup>,
    pub opposite_pairs: Vec<(String, String)>,
}

/// Group records by identical label vectors (groups of at least two, sorted
/// by vector key) and enumerate opposite pairs: an anchor with exactly one or
/// two present labels paired with every other record whose present set is
/// disjoint. Pairs are unordered, deduplicated, and sorted by id. The result
/// does not depend on record order.
#[must_use]
pub fn select_pairs(records: &[LabelVector]) -> PairSelection {
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for record in records {
        groups.entry(record.key()).or_default().push(record.id.clone());
    }
    let same_groups = groups
        .into_iter()
        .filter(|(_, ids)| ids.len() >= 2)
        .map(|(key, mut ids)| {
            ids.sort();
            SameGroup { key, ids }
        })
        .collect();

    let present: Vec<(usize, BTreeSet<usize>)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.present_indexes()))
        .collect();
    let mut pairs: BTreeSet<(String, String)> = BTreeSet::new();
    for (a, a_present) in &present {
        if !(1..=2).contains(&a_present.len()) {
            continue;
        }
        for (b, b_present) in &present {
            if a == b || records[*a].id == records[*b].id {
                continue;
            }
            if a_present.is_disjoint(b_present) {
                let mut ids = [records[*a].id.clone(), records[*b].id.clone()];
                ids.sort();
                let [x, y] = ids;
                pairs.insert((x, y));
            }
        }
    }

    PairSelection {
        same_groups,
        opposite_pairs: pairs.into_iter().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The five-subject sample: 01 and 02 share Pneumonia, 05 shares
    /// Pleural Effusion with 01, everything else is disjoint.
    const SAMPLE: &str = "\
id,Atelectasis,Cardiomegaly,Consolidation,Edema,Enlarged Cardiomediastinum,Fracture,Lung Lesion,Lung Opacity,No Finding,Pleural Effusion,Pleural Other,Pneumonia,Pneumothorax,Support Devices
s01,,,,,,,,0,,1,,1,-1,
s02,,,,,,,1,,,,,1,,
s03,,,,,,,,,1,,,0,,
s04,,1,0,,,,,-1,,,,,0,1
s05,1,,,,,,,,,1,,,,
";

    #[test]
    fn sample_rows_parse_slot_by_slot() {
        let table = read_labels_csv(SAMPLE.as_bytes()).unwrap();
        assert_eq!(table.records.len(), 5);
        assert!(table.warnings.is_empty());

        let s01 = &table.records[0];
        assert_eq!(s01.id, "s01");
        assert_eq!(s01.values[7], LabelValue::Absent);
        assert_eq!(s01.values[9], LabelValue::Present);
        assert_eq!(s01.values[11], LabelValue::Present);
        assert_eq!(s01.values[12], LabelValue::Ambiguous);
        assert_eq!(
            s01.values.iter().filter(|v| **v == LabelValue::Blank).count(),
            10
        );
        assert_eq!(
            table.records[4].present_labels(),
            vec!["Atelectasis", "Pleural Effusion"]
        );
    }

    #[test]
    fn float_spellings_parse_and_junk_does_not() {
        assert_eq!(LabelValue::parse("1.0"), Some(LabelValue::Present));
        assert_eq!(LabelValue::parse("-1.0"), Some(LabelValue::Ambiguous));
        assert_eq!(LabelValue::parse(" 0.0 "), Some(LabelValue::Absent));
        assert_eq!(LabelValue::parse("2"), None);
        assert_eq!(LabelValue::parse("present"), None);
    }

    #[test]
    fn invalid_cell_reports_row_and_column() {
        let text = SAMPLE.replace("s04,,1,0", "s04,,2,0");
        let err = read_labels_csv(text.as_bytes()).unwrap_err();
        match err {
            LabelError::InvalidCell { row, column, value } => {
                assert_eq!(row, 5);
                assert_eq!(column, "Cardiomegaly");
                assert_eq!(value, "2");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_label_column_is_an_error() {
        let text = SAMPLE.replace("Pleural Other", "Pleural Oddity");
        let err = read_labels_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, LabelError::MissingColumn(c) if c == "Pleural Other"));
    }

    #[test]
    fn unknown_columns_warn_and_are_ignored() {
        let text: String = SAMPLE
            .lines()
            .enumerate()
            .map(|(i, line)| {
                let extra = if i == 0 { ",notes" } else { ",free text" };
                format!("{line}{extra}\n")
            })
            .collect();
        let table = read_labels_csv(text.as_bytes()).unwrap();
        assert_eq!(table.warnings, vec!["ignoring column \"notes\"".to_string()]);
        assert_eq!(table.records[0].present_indexes().len(), 2);
    }

    #[test]
    fn duplicate_ids_keep_the_last_row_with_a_warning() {
        let text = format!("{SAMPLE}s01,1,,,,,,,,,,,,,\n");
        let table = read_labels_csv(text.as_bytes()).unwrap();
        assert_eq!(table.records.len(), 5);
        assert_eq!(table.records[0].present_labels(), vec!["Atelectasis"]);
        assert!(table.warnings[0].contains("duplicate id"));
    }

    #[test]
    fn sample_yields_eight_opposite_pairs_and_no_groups() {
        let table = read_labels_csv(SAMPLE.as_bytes()).unwrap();
        let selection = select_pairs(&table.records);
        assert!(selection.same_groups.is_empty());
        let pairs: Vec<(&str, &str)> = selection
            .opposite_pairs
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        assert_eq!(pairs.len(), 8);
        assert!(pairs.contains(&("s02", "s05")));
        assert!(!pairs.contains(&("s01", "s02")), "shared Pneumonia");
        assert!(!pairs.contains(&("s01", "s05")), "shared Pleural Effusion");
    }

    #[test]
    fn identical_vectors_form_one_group() {
        let mut table = read_labels_csv(SAMPLE.as_bytes()).unwrap();
        let mut clone = table.records[1].clone();
        clone.id = "s06".to_string();
        table.records.push(clone);
        let selection = select_pairs(&table.records);
        assert_eq!(selection.same_groups.len(), 1);
        assert_eq!(selection.same_groups[0].ids, vec!["s02", "s06"]);
    }

    #[test]
    fn three_present_labels_cannot_anchor_but_can_partner() {
        // x has three present labels; y has one, disjoint from x. Only y can
        // anchor, and the pair still appears once.
        let mut values_x = [LabelValue::Blank; 14];
        values_x[0] = LabelValue::Present;
        values_x[1] = LabelValue::Present;
        values_x[2] = LabelValue::Present;
        let mut values_y = [LabelValue::Blank; 14];
        values_y[3] = LabelValue::Present;
        let records = vec![
            LabelVector { id: "x".to_string(), values: values_x },
            LabelVector { id: "y".to_string(), values: values_y },
        ];
        let selection = select_pairs(&records);
        assert_eq!(
            selection.opposite_pairs,
            vec![("x".to_string(), "y".to_string())]
        );

        // Two three-present records, disjoint: neither anchors, no pair.
        let mut values_z = [LabelValue::Blank; 14];
        values_z[4] = LabelValue::Present;
        values_z[5] = LabelValue::Present;
        values_z[6] = LabelValue::Present;
        let records = vec![
            LabelVector { id: "x".to_string(), values: values_x },
            LabelVector { id: "z".to_string(), values: values_z },
        ];
        assert!(select_pairs(&records).opposite_pairs.is_empty());
    }

    #[test]
    fn selection_ignores_record_order() {
        let table = read_labels_csv(SAMPLE.as_bytes()).unwrap();
        let mut reversed = table.records.clone();
        reversed.reverse();
        assert_eq!(select_pairs(&table.records), select_pairs(&reversed));
    }
}
