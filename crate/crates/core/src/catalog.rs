//! Registry of the genuine five-qubit entanglement families.
//!
//! Sixteen representatives are transcribed from the published list (written
//! as `|i(lm)(nh)>` kets). The remaining sixteen slots are the full-size
//! `2 x 4 x 4` standard forms, enumerated from their Segre symbols.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classify::{classify, FamilyLabel};
use crate::error::{Result, SloccError};
use crate::linalg::{CMat, ONE};
use crate::pencil::{EigenCluster, Eigenvalue, KroneckerStructure};
use crate::tensor::{random_state, StateTensor};

pub const SYSTEM: &str = "22222";
pub const DIMS: [usize; 5] = [2, 2, 2, 2, 2];
/// Rank threshold used to build and check the catalog.
pub const CATALOG_TOL: f64 = 1e-9;
const SHIPPED: &str = include_str!("../assets/catalog.json");

/// Subsystems in listing order with their slot counts.
pub const SOURCE_SYSTEMS: [(&str, usize); 6] =
    [("2x2x2", 2), ("2x2x3", 2), ("2x2x4", 1), ("2x3x3", 6), ("2x3x4", 5), ("2x4x4", 16)];

const LISTED: [(&str, &[&str]); 16] = [
    ("2x2x2", &["1(11)(11)", "2(22)(22)"]),
    ("2x2x2", &["1(11)(11)", "1(22)(22)", "2(11)(22)"]),
    ("2x2x3", &["1(11)(11)", "1(12)(12)", "2(12)(21)"]),
    ("2x2x3", &["1(11)(11)", "1(12)(12)", "2(11)(12)", "2(12)(21)"]),
    ("2x2x4", &["1(11)(11)", "1(12)(12)", "2(11)(21)", "2(12)(22)"]),
    ("2x3x3", &["1(11)(11)", "1(12)(12)", "2(21)(21)"]),
    ("2x3x3", &["1(11)(11)", "1(12)(12)", "1(21)(21)", "2(11)(12)"]),
    ("2x3x3", &["1(11)(11)", "1(12)(12)", "2(12)(12)", "2(21)(21)"]),
    ("2x3x3", &["1(11)(11)", "1(12)(12)", "2(11)(12)", "2(21)(21)"]),
    ("2x3x3", &["1(11)(11)", "1(12)(12)", "2(12)(21)", "2(21)(11)"]),
    ("2x3x3", &["1(11)(11)", "1(12)(12)", "1(21)(21)", "2(11)(12)", "2(12)(21)"]),
    ("2x3x4", &["1(11)(11)", "1(12)(12)", "1(21)(21)", "2(21)(22)"]),
    ("2x3x4", &["1(11)(11)", "1(12)(12)", "1(21)(21)", "2(11)(12)", "2(21)(22)"]),
    ("2x3x4", &["1(11)(11)", "1(12)(12)", "1(21)(21)", "2(11)(11)", "2(21)(22)"]),
    ("2x3x4", &["1(11)(11)", "1(12)(12)", "1(21)(21)", "2(12)(21)", "2(21)(22)"]),
    ("2x3x4", &["1(11)(11)", "1(12)(12)", "1(21)(21)", "2(11)(12)", "2(12)(21)", "2(21)(22)"]),
];

/// Segre symbol of a full-size `4 x 4` pencil: minimal column indices,
/// minimal row indices, and Jordan block sizes per distinct eigenvalue.
struct Segre {
    cols: &'static [usize],
    rows: &'static [usize],
    eigen: &'static [&'static [usize]],
}

/// Every `4 x 4` Kronecker structure without zero rows or columns
/// (`L_0`, `L_0^T`) other than a pencil proportional to one invertible matrix.
const ENUMERATED: [Segre; 16] = [
    Segre { cols: &[], rows: &[], eigen: &[&[4]] },
    Segre { cols: &[], rows: &[], eigen: &[&[3, 1]] },
    Segre { cols: &[], rows: &[], eigen: &[&[2, 2]] },
    Segre { cols: &[], rows: &[], eigen: &[&[2, 1, 1]] },
    Segre { cols: &[], rows: &[], eigen: &[&[3], &[1]] },
    Segre { cols: &[], rows: &[], eigen: &[&[2, 1], &[1]] },
    Segre { cols: &[], rows: &[], eigen: &[&[1, 1, 1], &[1]] },
    Segre { cols: &[], rows: &[], eigen: &[&[2], &[2]] },
    Segre { cols: &[], rows: &[], eigen: &[&[2], &[1, 1]] },
    Segre { cols: &[], rows: &[], eigen: &[&[1, 1], &[1, 1]] },
    Segre { cols: &[], rows: &[], eigen: &[&[2], &[1], &[1]] },
    Segre { cols: &[], rows: &[], eigen: &[&[1, 1], &[1], &[1]] },
    Segre { cols: &[], rows: &[], eigen: &[&[1], &[1], &[1], &[1]] },
    Segre { cols: &[1], rows: &[1], eigen: &[&[1]] },
    Segre { cols: &[1], rows: &[2], eigen: &[] },
    Segre { cols: &[2], rows: &[1], eigen: &[] },
];

/// Eigenvalues used to build an enumerated pencil before gauge fixing.
/// The fourth is the arbitrary sample of the continuous parameter.
const SAMPLE_EIGENVALUES: [Complex64; 4] =
    [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0), Complex64::new(3.0, 0.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Transcribed from the published family list.
    Listed,
    /// Generated from a Segre symbol.
    Enumerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KetTerm {
    pub re: f64,
    pub im: f64,
    /// One-based party indices `(i, l, m, n, h)`.
    pub idx: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    /// Canonical value of the sample representative, `[re, im]`.
    pub sample: [f64; 2],
    pub arbitrary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: usize,
    pub source_system: String,
    pub origin: Origin,
    /// Position in the source list, e.g. `2x3x3 family 4 of 6`.
    pub reference: String,
    pub ket_terms: Vec<KetTerm>,
    pub structure_key: String,
    pub label: String,
    pub effective_shape: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<Parameter>,
    pub notes: String,
}

impl CatalogEntry {
    pub fn representative(&self) -> Result<StateTensor> {
        let kets: Vec<_> = self.ket_terms.iter().map(|k| (Complex64::new(k.re, k.im), k.idx.clone())).collect();
        StateTensor::from_kets(DIMS.to_vec(), &kets)
    }

    /// Grouped-notation text of the representative.
    pub fn ket_string(&self) -> String {
        self.ket_terms
            .iter()
            .map(|k| {
                let i = &k.idx;
                let ket = format!("|{}({}{})({}{})>", i[0], i[1], i[2], i[3], i[4]);
                if k.re == 1.0 && k.im == 0.0 {
                    ket
                } else if k.im == 0.0 {
                    format!("{}{ket}", k.re)
                } else {
                    format!("({}{:+}i){ket}", k.re, k.im)
                }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub system: String,
    pub entries: Vec<CatalogEntry>,
}

impl Catalog {
    /// The asset shipped with the crate.
    pub fn shipped() -> Self {
        serde_json::from_str(SHIPPED).expect("shipped catalog parses")
    }

    pub fn for_system(system: &str) -> Result<Self> {
        if system == SYSTEM {
            Ok(Self::shipped())
        } else {
            Err(SloccError::UnknownSystem(system.to_string()))
        }
    }

    pub fn entry(&self, id: usize) -> Result<&CatalogEntry> {
        self.entries.iter().find(|e| e.id == id).ok_or(SloccError::UnknownEntry(id))
    }

    pub fn representative(&self, id: usize) -> Result<StateTensor> {
        self.entry(id)?.representative()
    }

    /// Slot of a label: structure keys must agree, and parameters too unless
    /// the slot is parameterized.
    pub fn slot_for(&self, label: &FamilyLabel) -> Option<&CatalogEntry> {
        if label.dims != DIMS {
            return None;
        }
        self.entries.iter().find(|e| {
            e.structure_key == label.structure_key && (e.parameter.is_some() || e.label == label.key())
        })
    }

    pub fn counts_by_source(&self) -> Vec<(String, usize)> {
        SOURCE_SYSTEMS
            .iter()
            .map(|(s, _)| (s.to_string(), self.entries.iter().filter(|e| e.source_system == *s).count()))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }
}

fn parse_ket(text: &str) -> Vec<usize> {
    text.chars().filter_map(|c| c.to_digit(10)).map(|d| d as usize).collect()
}

fn state_of_pair(g1: &CMat, g2: &CMat) -> Result<StateTensor> {
    let mut kets = Vec::new();
    for (i, g) in [g1, g2].into_iter().enumerate() {
        for a in 0..4 {
            for b in 0..4 {
                if g[(a, b)] != Complex64::new(0.0, 0.0) {
                    kets.push((g[(a, b)], vec![i + 1, a / 2 + 1, a % 2 + 1, b / 2 + 1, b % 2 + 1]));
                }
            }
        }
    }
    StateTensor::from_kets(DIMS.to_vec(), &kets)
}

fn terms_of(state: &StateTensor) -> Vec<KetTerm> {
    state
        .to_document()
        .entries
        .unwrap_or_default()
        .into_iter()
        .map(|e| KetTerm { re: e.re, im: e.im, idx: e.idx })
        .collect()
}

fn segre_text(s: &Segre) -> String {
    let mut parts: Vec<String> = s.cols.iter().map(|e| format!("L{e}")).collect();
    parts.extend(s.rows.iter().map(|e| format!("L{e}^T")));
    parts.extend(s.eigen.iter().map(|b| format!("J{b:?}")));
    parts.join(" + ")
}

/// Regenerate the catalog from the listed kets and the Segre symbols.
pub fn build_catalog() -> Result<Catalog> {
    let mut entries = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let total = |sys: &str| SOURCE_SYSTEMS.iter().find(|(s, _)| *s == sys).map(|(_, n)| *n).unwrap_or(0);
    for (sys, kets) in LISTED {
        let terms: Vec<_> = kets.iter().map(|k| (ONE, parse_ket(k))).collect();
        let state = StateTensor::from_kets(DIMS.to_vec(), &terms)?;
        let c = classify(&state, CATALOG_TOL)?;
        let pos = seen.entry(sys).or_insert(0);
        *pos += 1;
        entries.push(CatalogEntry {
            id: entries.len() + 1,
            source_system: sys.to_string(),
            origin: Origin::Listed,
            reference: format!("{sys} family {} of {}", pos, total(sys)),
            ket_terms: terms_of(&state),
            structure_key: c.label.structure_key.clone(),
            label: c.label.key(),
            effective_shape: c.standard_form.effective_shape,
            parameter: None,
            notes: String::new(),
        });
    }
    for (k, segre) in ENUMERATED.iter().enumerate() {
        let clusters = segre
            .eigen
            .iter()
            .zip(SAMPLE_EIGENVALUES)
            .map(|(b, z)| EigenCluster { value: Eigenvalue::Finite(z), blocks: b.to_vec() })
            .collect();
        let structure =
            KroneckerStructure { minimal_col: segre.cols.to_vec(), minimal_row: segre.rows.to_vec(), clusters };
        let (g1, g2) = structure.canonical_pair();
        let raw = classify(&state_of_pair(&g1, &g2)?, CATALOG_TOL)?;
        // The representative is the gauge-fixed canonical pair itself.
        let (c1, c2) = &raw.standard_form.canonical;
        let state = state_of_pair(c1, c2)?;
        let c = classify(&state, CATALOG_TOL)?;
        let parameter = c.label.params.first().map(|p| Parameter {
            name: "cross_ratio".into(),
            sample: *p,
            arbitrary: true,
        });
        let notes = if parameter.is_some() {
            "continuous family: every value of the fourth eigenvalue gives a distinct family; the sample is arbitrary"
                .to_string()
        } else {
            String::new()
        };
        entries.push(CatalogEntry {
            id: entries.len() + 1,
            source_system: "2x4x4".into(),
            origin: Origin::Enumerated,
            reference: format!("2x4x4 family {} of 16: {}", k + 1, segre_text(segre)),
            ket_terms: terms_of(&state),
            structure_key: c.label.structure_key.clone(),
            label: c.label.key(),
            effective_shape: c.standard_form.effective_shape,
            parameter,
            notes,
        });
    }
    Ok(Catalog { system: SYSTEM.into(), entries })
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Census {
    pub samples: usize,
    /// Samples per catalog id.
    pub by_slot: BTreeMap<usize, usize>,
    /// Labels that match no slot.
    pub unmatched: Vec<String>,
}

/// Classify seeded random states and tally their catalog slots.
pub fn family_census(catalog: &Catalog, seed: u64, samples: usize) -> Result<Census> {
    let mut census = Census { samples, ..Census::default() };
    for s in 0..samples as u64 {
        let state = random_state(&DIMS, seed.wrapping_mul(1_000_003).wrapping_add(s))?;
        let c = classify(&state, CATALOG_TOL)?;
        match catalog.slot_for(&c.label) {
            Some(e) => *census.by_slot.entry(e.id).or_insert(0) += 1,
            None => census.unmatched.push(c.label.key()),
        }
    }
    Ok(census)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kets_parse_in_grouped_order() {
        assert_eq!(parse_ket("2(12)(21)"), vec![2, 1, 2, 2, 1]);
    }

    #[test]
    fn unknown_system_and_id() {
        assert!(Catalog::for_system("999").is_err());
        assert!(Catalog::shipped().entry(33).is_err());
    }

    #[test]
    fn ket_strings() {
        let cat = Catalog::shipped();
        assert_eq!(cat.entry(1).unwrap().ket_string(), "|1(11)(11)> + |2(22)(22)>");
    }
}
