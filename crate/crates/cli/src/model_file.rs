//! JSON files describing fitted models.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sindy_delay::library::enumerate_terms;
use sindy_delay::models::bio::{term_labels, BioModel};
use sindy_delay::{CrossPolicy, DelayModel, LibrarySpec, SmootherSpec, TermId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub config_hash: String,
    pub input_hashes: BTreeMap<String, String>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryBlock {
    pub d: usize,
    #[serde(rename = "M")]
    pub max_degree: u32,
    pub cross_policy: CrossPolicy,
    pub delayed: bool,
}

/// How the model was scored, enough to repeat the computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scoring {
    pub t_start: f64,
    pub h: f64,
    pub divergence_bound: f64,
    pub smoother: SmootherSpec,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub library: LibraryBlock,
    pub names: Vec<String>,
    /// Exponent vectors written `[current|delayed]`.
    pub terms: Vec<TermId>,
    /// One coefficient list per component, in term order.
    pub coeffs: Vec<Vec<f64>>,
    pub delays: Vec<f64>,
    pub scoring: Option<Scoring>,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn from_model(
        model: &DelayModel,
        names: Vec<String>,
        scoring: Option<Scoring>,
        provenance: Provenance,
    ) -> Self {
        let spec = model.spec();
        let coeffs = model.coeffs();
        ModelFile {
            library: LibraryBlock {
                d: spec.dim,
                max_degree: spec.max_degree,
                cross_policy: spec.cross_policy,
                delayed: spec.delayed,
            },
            names,
            terms: model.terms().to_vec(),
            coeffs: (0..coeffs.ncols())
                .map(|k| coeffs.column(k).iter().copied().collect())
                .collect(),
            delays: model.delays().to_vec(),
            scoring,
            provenance,
        }
    }

    /// Parses and checks a model file; errors name the offending field.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ModelFile = serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow!("{}: {}", e.path(), e.inner()))?;
        file.model()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn model(&self) -> anyhow::Result<DelayModel> {
        let b = &self.library;
        let spec = LibrarySpec::new(b.d, b.max_degree, b.delayed, b.cross_policy)
            .map_err(|e| anyhow!("library: {e}"))?;
        let terms = enumerate_terms(&spec);
        if self.terms.len() != terms.len() {
            bail!(
                "terms: expected {} entries, found {}",
                terms.len(),
                self.terms.len()
            );
        }
        for (i, (given, want)) in self.terms.iter().zip(&terms).enumerate() {
            if given != want {
                bail!("terms[{i}]: expected {want}, found {given}");
            }
        }
        if self.coeffs.len() != b.d {
            bail!(
                "coeffs: expected {} components, found {}",
                b.d,
                self.coeffs.len()
            );
        }
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.len() != terms.len() {
                bail!(
                    "coeffs[{k}]: expected {} entries, found {}",
                    terms.len(),
                    c.len()
                );
            }
        }
        if self.delays.len() != b.d {
            bail!(
                "delays: expected {} entries, found {}",
                b.d,
                self.delays.len()
            );
        }
        if self.names.len() != b.d {
            bail!(
                "names: expected {} entries, found {}",
                b.d,
                self.names.len()
            );
        }
        let matrix = DMatrix::from_fn(terms.len(), b.d, |j, k| self.coeffs[k][j]);
        DelayModel::new(spec, matrix, self.delays.clone())
            .map_err(|e| anyhow!("coeffs/delays: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BioModelFile {
    pub zinc_mm: f64,
    pub tau_wt: f64,
    pub tau_dca: f64,
    pub terms: Vec<String>,
    pub f_coeffs: Vec<f64>,
    pub g_coeffs: Vec<f64>,
    pub error: f64,
    pub provenance: Provenance,
}

impl BioModelFile {
    pub fn new(model: &BioModel, zinc_mm: f64, error: f64, provenance: Provenance) -> Self {
        BioModelFile {
            zinc_mm,
            tau_wt: model.tau_wt,
            tau_dca: model.tau_dca,
            terms: term_labels(),
            f_coeffs: model.f_coeffs.clone(),
            g_coeffs: model.g_coeffs.clone(),
            error,
            provenance,
        }
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: BioModelFile = serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow!("{}: {}", e.path(), e.inner()))?;
        if file.terms != term_labels() {
            bail!("terms: expected {:?}", term_labels());
        }
        file.model()?;
        Ok(file)
    }

    pub fn model(&self) -> anyhow::Result<BioModel> {
        BioModel::new(
            self.f_coeffs.clone(),
            self.g_coeffs.clone(),
            self.tau_wt,
            self.tau_dca,
        )
        .map_err(|e| anyhow!("{e}"))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }
}
