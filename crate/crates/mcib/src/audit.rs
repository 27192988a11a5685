//! Shortcut-audit statistics: Pearson chi-square independence test, phi
//! coefficient, and the emotion-consistency contingency construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::regularized_gamma_q;

/// Observed counts; rows are categories (characters, consistency buckets),
/// columns are outcome classes (sarcastic / non-sarcastic).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.is_empty() || counts[0].is_empty() {
            return Err(Error::data("contingency table must be non-empty"));
        }
        let cols = counts[0].len();
        if counts.iter().any(|r| r.len() != cols) {
            return Err(Error::data("contingency table rows have unequal lengths"));
        }
        let table = ContingencyTable { counts };
        if table.total() == 0 {
            return Err(Error::data("contingency table has zero grand total"));
        }
        if table.row_totals().contains(&0) {
            return Err(Error::data("contingency table has an all-zero row"));
        }
        if table.col_totals().contains(&0) {
            return Err(Error::data("contingency table has an all-zero column"));
        }
        Ok(table)
    }

    /// Builds without marginal checks; used for raw count assembly before
    /// statistics are run.
    pub fn from_counts_unchecked(counts: Vec<Vec<u64>>) -> Self {
        ContingencyTable { counts }
    }

    pub fn rows(&self) -> usize {
        self.counts.len()
    }

    pub fn cols(&self) -> usize {
        self.counts[0].len()
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.counts[r][c]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.cols())
            .map(|c| self.counts.iter().map(|r| r[c]).sum())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of independence, uncorrected.
pub fn chi_square_test(table: &ContingencyTable) -> Result<ChiSquareResult> {
    chi_square_test_with(table, false)
}

/// Pearson chi-square with an optional Yates continuity correction
/// (meaningful for 2x2 tables only; off in all reported statistics).
pub fn chi_square_test_with(table: &ContingencyTable, yates: bool) -> Result<ChiSquareResult> {
    if table.rows() < 2 || table.cols() < 2 {
        return Err(Error::usage(format!(
            "chi-square needs at least a 2x2 table, got {}x{}",
            table.rows(),
            table.cols()
        )));
    }
    let row_totals = table.row_totals();
    let col_totals = table.col_totals();
    let total = table.total() as f64;
    let mut statistic = 0.0;
    for r in 0..table.rows() {
        for c in 0..table.cols() {
            let expected = row_totals[r] as f64 * col_totals[c] as f64 / total;
            if expected == 0.0 {
                return Err(Error::data(format!(
                    "expected count is zero at cell ({r}, {c})"
                )));
            }
            let mut diff = (table.get(r, c) as f64 - expected).abs();
            if yates {
                diff = (diff - 0.5).max(0.0);
            }
            statistic += diff * diff / expected;
        }
    }
    let dof = (table.rows() - 1) * (table.cols() - 1);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: chi_square_p_value(statistic, dof),
    })
}

/// Upper-tail p-value of the chi-square distribution via the regularized
/// incomplete gamma function.
pub fn chi_square_p_value(statistic: f64, dof: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    regularized_gamma_q(dof as f64 / 2.0, statistic / 2.0)
}

/// phi = (ad - bc) / sqrt((a+b)(c+d)(a+c)(b+d)) for a 2x2 table.
pub fn phi_coefficient(table: &ContingencyTable) -> Result<f64> {
    if table.rows() != 2 || table.cols() != 2 {
        return Err(Error::usage(format!(
            "phi coefficient needs a 2x2 table, got {}x{}",
            table.rows(),
            table.cols()
        )));
    }
    let (a, b, c, d) = (
        table.get(0, 0) as f64,
        table.get(0, 1) as f64,
        table.get(1, 0) as f64,
        table.get(1, 1) as f64,
    );
    let denom = (a + b) * (c + d) * (a + c) * (b + d);
    if denom == 0.0 {
        return Err(Error::data(
            "phi coefficient undefined: a marginal total is zero",
        ));
    }
    Ok((a * d - b * c) / denom.sqrt())
}

/// One annotated utterance from an emotion-annotation file.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyRecord {
    pub implicit: String,
    pub explicit: String,
    pub sarcastic: bool,
}

/// Cross-tabulates emotion consistency against sarcasm. Rows: emotions
/// differ / emotions same; columns: sarcastic / non-sarcastic.
pub fn consistency_table(records: &[ConsistencyRecord]) -> Result<ContingencyTable> {
    if records.is_empty() {
        return Err(Error::usage("consistency_table needs at least one record"));
    }
    let mut counts = vec![vec![0u64; 2]; 2];
    for (i, rec) in records.iter().enumerate() {
        if rec.implicit.trim().is_empty() || rec.explicit.trim().is_empty() {
            return Err(Error::data(format!(
                "record {i}: empty emotion label ('{}' / '{}')",
                rec.implicit, rec.explicit
            )));
        }
        let row = if rec.implicit != rec.explicit { 0 } else { 1 };
        let col = if rec.sarcastic { 0 } else { 1 };
        counts[row][col] += 1;
    }
    Ok(ContingencyTable::from_counts_unchecked(counts))
}

/// One parsed line of an annotation file:
/// `utterance_id<TAB>speaker<TAB>sarcasm{0,1}[<TAB>implicit<TAB>explicit]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationRecord {
    pub utterance_id: String,
    pub speaker: String,
    pub sarcastic: bool,
    pub implicit: Option<String>,
    pub explicit: Option<String>,
}

pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 && fields.len() != 5 {
            return Err(Error::data(format!(
                "line {}: expected 3 or 5 tab-separated fields, got {}",
                line_no + 1,
                fields.len()
            )));
        }
        let sarcastic = match fields[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::data(format!(
                    "line {}: unknown sarcasm label '{other}' (expected 0 or 1)",
                    line_no + 1
                )))
            }
        };
        let (implicit, explicit) = if fields.len() == 5 {
            let imp = fields[3].trim();
            let exp = fields[4].trim();
            if imp.is_empty() || exp.is_empty() {
                return Err(Error::data(format!(
                    "line {}: empty emotion label",
                    line_no + 1
                )));
            }
            (Some(imp.to_string()), Some(exp.to_string()))
        } else {
            (None, None)
        };
        out.push(AnnotationRecord {
            utterance_id: fields[0].trim().to_string(),
            speaker: fields[1].trim().to_string(),
            sarcastic,
            implicit,
            explicit,
        });
    }
    if out.is_empty() {
        return Err(Error::data("annotation file holds no records"));
    }
    Ok(out)
}

/// Speaker-by-sarcasm contingency table from annotation records.
/// Returns the table plus the speaker row order.
pub fn character_table(records: &[AnnotationRecord]) -> Result<(ContingencyTable, Vec<String>)> {
    if records.is_empty() {
        return Err(Error::usage("character_table needs at least one record"));
    }
    let mut speakers: Vec<String> = records.iter().map(|r| r.speaker.clone()).collect();
    speakers.sort();
    speakers.dedup();
    let mut counts = vec![vec![0u64; 2]; speakers.len()];
    for rec in records {
        let row = speakers.binary_search(&rec.speaker).expect("present");
        let col = if rec.sarcastic { 0 } else { 1 };
        counts[row][col] += 1;
    }
    Ok((ContingencyTable::from_counts_unchecked(counts), speakers))
}

/// Full audit output: the character association test and, when emotion
/// labels are present, the consistency test with its phi coefficient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditReport {
    pub character: Option<CharacterAudit>,
    pub consistency: Option<ConsistencyAudit>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CharacterAudit {
    pub speakers: Vec<String>,
    pub table: ContingencyTable,
    pub chi_square: ChiSquareResult,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsistencyAudit {
    pub table: ContingencyTable,
    pub chi_square: ChiSquareResult,
    pub phi: f64,
}

pub fn audit_annotations(records: &[AnnotationRecord]) -> Result<AuditReport> {
    let character = {
        let (table, speakers) = character_table(records)?;
        // Validate marginals before testing.
        let table = ContingencyTable::new(table.counts().to_vec())?;
        Some(CharacterAudit {
            chi_square: chi_square_test(&table)?,
            speakers,
            table,
        })
    };
    let consistency_records: Vec<ConsistencyRecord> = records
        .iter()
        .filter_map(|r| match (&r.implicit, &r.explicit) {
            (Some(i), Some(e)) => Some(ConsistencyRecord {
                implicit: i.clone(),
                explicit: e.clone(),
                sarcastic: r.sarcastic,
            }),
            _ => None,
        })
        .collect();
    let consistency = if consistency_records.is_empty() {
        None
    } else {
        let table = consistency_table(&consistency_records)?;
        let table = ContingencyTable::new(table.counts().to_vec())?;
        Some(ConsistencyAudit {
            chi_square: chi_square_test(&table)?,
            phi: phi_coefficient(&table)?,
            table,
        })
    };
    Ok(AuditReport {
        character,
        consistency,
    })
}

impl AuditReport {
    /// Flat CSV rendering: `section,metric,value` per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,metric,value\n");
        if let Some(c) = &self.character {
            out.push_str(&format!("character,statistic,{}\n", c.chi_square.statistic));
            out.push_str(&format!("character,dof,{}\n", c.chi_square.dof));
            out.push_str(&format!("character,p_value,{}\n", c.chi_square.p_value));
            out.push_str(&format!("character,speakers,{}\n", c.speakers.len()));
        }
        if let Some(e) = &self.consistency {
            out.push_str(&format!("consistency,statistic,{}\n", e.chi_square.statistic));
            out.push_str(&format!("consistency,dof,{}\n", e.chi_square.dof));
            out.push_str(&format!("consistency,p_value,{}\n", e.chi_square.p_value));
            out.push_str(&format!("consistency,phi,{}\n", e.phi));
        }
        out
    }
}
