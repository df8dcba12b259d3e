//! Oracle-labeled synthetic benchmark with a planted paratope/epitope rule.
//!
//! Each antigen carries one epitope motif drawn from a small library. Each
//! antibody family carries the image of one library motif under a fixed
//! residue bijection, placed inside the heavy chain. Family members are
//! point-mutated copies of the family seed; the paratope mutates at a higher
//! rate than the framework, so some members lose binding. A pair binds iff
//! the antibody's paratope matches the mapped epitope with at most one
//! mismatch.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    binarize, Antibody, Antigen, AminoAcidSequence, AssayRecord, Dataset, Epitope, HeavyIsotype, Host, LightIsotype,
    Origin, Subtype, Task, YearCategory, ELISA_RANGE, HAI_RANGE,
};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Residues reserved for epitope motifs.
pub const EPITOPE_ALPHABET: &[u8] = b"WCMH";
/// Residues reserved for paratope motifs.
pub const PARATOPE_ALPHABET: &[u8] = b"YFNQ";
/// Residues used for everything else.
pub const BACKGROUND_ALPHABET: &[u8] = b"ADEGIKLPRSTV";

/// Mismatches tolerated between a paratope and a mapped epitope.
pub const MAX_MISMATCHES: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_families: usize,
    pub antibodies_per_family: usize,
    pub n_antigens: usize,
    /// Antigens assayed per antibody (capped at `n_antigens`).
    pub pairs_per_antibody: usize,
    pub motif_len: usize,
    /// Per-residue substitution rate of family members relative to the seed.
    pub mutation_rate: f64,
    /// Paratope residues mutate at `paratope_mutation_scale × mutation_rate`.
    pub paratope_mutation_scale: f64,
    pub label_noise: f64,
    /// Target fraction of positive binding pairs.
    pub positivity_target: f64,
    /// Fraction of families whose binders also neutralize (HAI positives).
    pub neutralizing_fraction: f64,
    pub heavy_len: usize,
    pub light_len: usize,
    pub antigen_len: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_families: 8,
            antibodies_per_family: 6,
            n_antigens: 40,
            pairs_per_antibody: 25,
            motif_len: 6,
            mutation_rate: 0.05,
            paratope_mutation_scale: 3.0,
            label_noise: 0.05,
            positivity_target: 0.35,
            neutralizing_fraction: 0.35,
            heavy_len: 20,
            light_len: 16,
            antigen_len: 24,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// Default family structure with sequence lengths of real variable
    /// regions and full-length HA.
    pub fn realistic() -> Self {
        Self {
            heavy_len: 108,
            light_len: 122,
            antigen_len: 559,
            ..Self::default()
        }
    }

    /// Reads a TOML or JSON config (by extension); missing fields take defaults.
    pub fn from_path(path: &Path) -> Result<Self> {
        crate::config_file::read_config(path)
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("n_families", self.n_families),
            ("antibodies_per_family", self.antibodies_per_family),
            ("n_antigens", self.n_antigens),
            ("pairs_per_antibody", self.pairs_per_antibody),
            ("motif_len", self.motif_len),
            ("light_len", self.light_len),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("mutation_rate", self.mutation_rate),
            ("label_noise", self.label_noise),
            ("positivity_target", self.positivity_target),
            ("neutralizing_fraction", self.neutralizing_fraction),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} not in [0, 1)")));
            }
        }
        if self.paratope_mutation_scale < 0.0 {
            return Err(Error::Config("paratope_mutation_scale must be non-negative".into()));
        }
        if self.heavy_len < self.motif_len || self.antigen_len < self.motif_len {
            return Err(Error::Config(format!(
                "heavy_len and antigen_len must be at least motif_len {}",
                self.motif_len
            )));
        }
        if self.positivity_target <= 0.0 {
            return Err(Error::Config("positivity_target must be positive".into()));
        }
        Ok(())
    }

    /// Largest library for which a balanced antigen mix still reaches the
    /// positivity target, given the expected share of antibodies whose
    /// paratope drifted beyond the mismatch tolerance.
    fn n_motifs(&self) -> usize {
        let p = self.paratope_rate();
        let n = self.motif_len as i32;
        let keep: f64 = (0..=MAX_MISMATCHES as i32)
            .map(|k| binomial(n, k) * p.powi(k) * (1.0 - p).powi(n - k))
            .sum();
        let clean = ((self.positivity_target - self.label_noise) / (1.0 - 2.0 * self.label_noise)).max(1e-3);
        ((keep / clean).floor() as usize).max(2)
    }

    fn paratope_rate(&self) -> f64 {
        (self.mutation_rate * self.paratope_mutation_scale).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedAntibody {
    pub family: usize,
    /// Start of the paratope inside the heavy chain.
    pub offset: usize,
    pub paratope: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedAntigen {
    pub motif: usize,
    /// Start of the epitope inside the antigen.
    pub offset: usize,
    pub epitope: String,
}

/// Everything needed to recompute oracle labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRule {
    /// Epitope residue → paratope residue, as two aligned strings.
    pub bijection_from: String,
    pub bijection_to: String,
    /// Epitope motif library.
    pub motifs: Vec<String>,
    pub family_motif: Vec<usize>,
    pub family_neutralizes: Vec<bool>,
    pub antibodies: BTreeMap<String, PlantedAntibody>,
    pub antigens: BTreeMap<String, PlantedAntigen>,
}

impl SyntheticRule {
    pub fn map_residue(&self, r: u8) -> Option<u8> {
        self.bijection_from.bytes().position(|x| x == r).map(|i| self.bijection_to.as_bytes()[i])
    }

    /// Paratope that binds `epitope` exactly.
    pub fn map_motif(&self, epitope: &[u8]) -> Vec<u8> {
        epitope.iter().map(|&r| self.map_residue(r).unwrap_or(r)).collect()
    }

    /// Mismatch count between the antibody paratope and the mapped epitope.
    pub fn mismatches(&self, antibody_id: &str, antigen_id: &str) -> Result<usize> {
        let ab = self
            .antibodies
            .get(antibody_id)
            .ok_or_else(|| Error::Lookup(format!("antibody '{antibody_id}' was not produced by this generator")))?;
        let ag = self
            .antigens
            .get(antigen_id)
            .ok_or_else(|| Error::Lookup(format!("antigen '{antigen_id}' was not produced by this generator")))?;
        Ok(hamming(ab.paratope.as_bytes(), &self.map_motif(ag.epitope.as_bytes())))
    }

    /// Clean label of a pair for `task`.
    pub fn oracle(&self, antibody_id: &str, antigen_id: &str, task: Task) -> Result<bool> {
        let binds = self.mismatches(antibody_id, antigen_id)? <= MAX_MISMATCHES;
        Ok(match task {
            Task::Binding => binds,
            Task::Hai => binds && self.family_neutralizes[self.antibodies[antibody_id].family],
        })
    }
}

fn binomial(n: i32, k: i32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len())
}

/// Oracle label of an antibody–antigen pair; also checks that the entities'
/// sequences carry the planted motifs recorded in `rule`.
pub fn oracle_label(ab: &Antibody, ag: &Antigen, task: Task, rule: &SyntheticRule) -> Result<bool> {
    let pa = rule
        .antibodies
        .get(&ab.id)
        .ok_or_else(|| Error::Lookup(format!("antibody '{}' was not produced by this generator", ab.id)))?;
    let pg = rule
        .antigens
        .get(&ag.id)
        .ok_or_else(|| Error::Lookup(format!("antigen '{}' was not produced by this generator", ag.id)))?;
    let hc = ab.heavy_var.as_bytes();
    let seq = ag.sequence.as_bytes();
    if hc.get(pa.offset..pa.offset + pa.paratope.len()) != Some(pa.paratope.as_bytes())
        || seq.get(pg.offset..pg.offset + pg.epitope.len()) != Some(pg.epitope.as_bytes())
    {
        return Err(Error::Lookup(format!(
            "sequences of '{}' / '{}' do not match the generator's record",
            ab.id, ag.id
        )));
    }
    rule.oracle(&ab.id, &ag.id, task)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLabel {
    pub task: Task,
    pub antibody_id: String,
    pub antigen_id: String,
    pub oracle: bool,
    pub emitted: bool,
}

/// Rule plus clean and emitted labels, for test harness use only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SyntheticConfig,
    pub rule: SyntheticRule,
    pub labels: Vec<OracleLabel>,
}

impl GroundTruth {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBench {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

fn random_seq(rng: &mut SplitMix64, alphabet: &[u8], len: usize) -> Vec<u8> {
    (0..len).map(|_| alphabet[rng.below(alphabet.len())]).collect()
}

fn substitute(rng: &mut SplitMix64, alphabet: &[u8], r: u8) -> u8 {
    loop {
        let c = alphabet[rng.below(alphabet.len())];
        if c != r {
            return c;
        }
    }
}

/// Library of `n` motifs whose pairwise Hamming distance is at least 3 when
/// the alphabet allows it.
fn motif_library(rng: &mut SplitMix64, n: usize, len: usize) -> Vec<Vec<u8>> {
    let min_dist = 3.min(len);
    let mut out: Vec<Vec<u8>> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        let m = random_seq(rng, EPITOPE_ALPHABET, len);
        attempts += 1;
        let dist_ok = out.iter().all(|o| hamming(o, &m) >= min_dist);
        let distinct = out.iter().all(|o| *o != m);
        if (dist_ok || attempts > 10_000) && distinct {
            out.push(m);
        }
    }
    out
}

fn pick<T: Copy>(rng: &mut SplitMix64, weighted: &[(T, f64)]) -> T {
    let total: f64 = weighted.iter().map(|w| w.1).sum();
    let mut u = rng.next_f64() * total;
    for &(v, w) in weighted {
        if u < w {
            return v;
        }
        u -= w;
    }
    weighted[weighted.len() - 1].0
}

fn raw_value(rng: &mut SplitMix64, task: Task, positive: bool) -> f64 {
    let u = rng.next_f64();
    match (task, positive) {
        // (1, 20]
        (Task::Binding, true) => ELISA_RANGE.1 - (ELISA_RANGE.1 - 1.0) * u,
        // [0.5, 1]
        (Task::Binding, false) => ELISA_RANGE.0 + (1.0 - ELISA_RANGE.0) * u,
        // [0.005, 10)
        (Task::Hai, true) => HAI_RANGE.0 + (10.0 - HAI_RANGE.0) * u,
        // [10, 20]
        (Task::Hai, false) => HAI_RANGE.1 - 10.0 * u,
    }
}

/// Builds the synthetic dataset; a deterministic function of `config`.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticBench> {
    config.validate()?;
    let seed = config.seed;
    let n_motifs = config.n_motifs();
    let mlen = config.motif_len;

    let mut rule_rng = SplitMix64::derive(seed, 1);
    let mut to: Vec<u8> = PARATOPE_ALPHABET.to_vec();
    rule_rng.shuffle(&mut to);
    let motifs = motif_library(&mut rule_rng, n_motifs, mlen);
    let mut family_motif: Vec<usize> = (0..config.n_families).map(|f| f % n_motifs).collect();
    rule_rng.shuffle(&mut family_motif);
    let n_neutral = ((config.neutralizing_fraction * config.n_families as f64).round() as usize).clamp(1, config.n_families);
    let mut family_neutralizes: Vec<bool> = (0..config.n_families).map(|f| f < n_neutral).collect();
    rule_rng.shuffle(&mut family_neutralizes);

    let mut rule = SyntheticRule {
        bijection_from: String::from_utf8(EPITOPE_ALPHABET.to_vec()).expect("ascii"),
        bijection_to: String::from_utf8(to).expect("ascii"),
        motifs: motifs.iter().map(|m| String::from_utf8(m.clone()).expect("ascii")).collect(),
        family_motif: family_motif.clone(),
        family_neutralizes,
        antibodies: BTreeMap::new(),
        antigens: BTreeMap::new(),
    };

    // Antibody families.
    let mut ab_rng = SplitMix64::derive(seed, 2);
    let paratope_rate = config.paratope_rate();
    let mut antibodies = Vec::with_capacity(config.n_families * config.antibodies_per_family);
    for f in 0..config.n_families {
        let offset = ab_rng.below(config.heavy_len - mlen + 1);
        let seed_paratope = rule.map_motif(&motifs[family_motif[f]]);
        let mut seed_hc = random_seq(&mut ab_rng, BACKGROUND_ALPHABET, config.heavy_len);
        seed_hc[offset..offset + mlen].copy_from_slice(&seed_paratope);
        let seed_lc = random_seq(&mut ab_rng, BACKGROUND_ALPHABET, config.light_len);
        let host = pick(&mut ab_rng, &[(Host::Human, 0.7), (Host::Mouse, 0.3)]);
        let lc_isotype = pick(&mut ab_rng, &[(LightIsotype::Kappa, 0.6), (LightIsotype::Lambda, 0.4)]);
        let hc_isotype = pick(&mut ab_rng, &[(HeavyIsotype::IgG, 0.85), (HeavyIsotype::IgA, 0.15)]);
        let epitope = pick(&mut ab_rng, &[(Epitope::Conformational, 0.4), (Epitope::OtherUnknown, 0.6)]);
        for m in 0..config.antibodies_per_family {
            let mut hc = seed_hc.clone();
            for (i, r) in hc.iter_mut().enumerate() {
                if (offset..offset + mlen).contains(&i) {
                    if ab_rng.bernoulli(paratope_rate) {
                        *r = substitute(&mut ab_rng, PARATOPE_ALPHABET, *r);
                    }
                } else if ab_rng.bernoulli(config.mutation_rate) {
                    *r = substitute(&mut ab_rng, BACKGROUND_ALPHABET, *r);
                }
            }
            let mut lc = seed_lc.clone();
            for r in lc.iter_mut() {
                if ab_rng.bernoulli(config.mutation_rate) {
                    *r = substitute(&mut ab_rng, BACKGROUND_ALPHABET, *r);
                }
            }
            let id = format!("mab_f{f:02}_{m:02}");
            rule.antibodies.insert(
                id.clone(),
                PlantedAntibody {
                    family: f,
                    offset,
                    paratope: String::from_utf8(hc[offset..offset + mlen].to_vec()).expect("ascii"),
                },
            );
            antibodies.push(Antibody {
                id,
                heavy_var: seq(hc)?,
                light_var: seq(lc)?,
                host,
                lc_isotype,
                hc_isotype,
                epitope,
            });
        }
    }

    // Assayed pairs, chosen independently of the motifs.
    let mut pair_rng = SplitMix64::derive(seed, 3);
    let per_ab = config.pairs_per_antibody.min(config.n_antigens);
    let mut pair_index: Vec<(usize, usize)> = Vec::with_capacity(antibodies.len() * per_ab);
    for a in 0..antibodies.len() {
        let mut ags: Vec<usize> = (0..config.n_antigens).collect();
        pair_rng.shuffle(&mut ags);
        let mut chosen = ags[..per_ab].to_vec();
        chosen.sort_unstable();
        pair_index.extend(chosen.into_iter().map(|g| (a, g)));
    }

    // Antigen motif mix: balanced to start, then single-antigen changes that
    // move the expected observed positivity toward the target.
    let mut mix_rng = SplitMix64::derive(seed, 4);
    let ab_ids: Vec<String> = antibodies.iter().map(|a| a.id.clone()).collect();
    let binds: Vec<Vec<bool>> = ab_ids
        .iter()
        .map(|id| {
            let p = rule.antibodies[id].paratope.as_bytes();
            motifs.iter().map(|m| hamming(p, &rule.map_motif(m)) <= MAX_MISMATCHES).collect()
        })
        .collect();
    let expected_positivity = |mix: &[usize]| {
        let pos = pair_index.iter().filter(|&&(a, g)| binds[a][mix[g]]).count() as f64 / pair_index.len() as f64;
        (1.0 - 2.0 * config.label_noise) * pos + config.label_noise
    };
    let mut best: Vec<usize> = (0..config.n_antigens).map(|g| g % n_motifs).collect();
    mix_rng.shuffle(&mut best);
    let mut best_gap = (expected_positivity(&best) - config.positivity_target).abs();
    let mut order: Vec<usize> = (0..config.n_antigens).collect();
    while best_gap > 0.005 {
        mix_rng.shuffle(&mut order);
        let mut step: Option<(usize, usize, f64)> = None;
        for &g in &order {
            for m in 0..n_motifs {
                if m == best[g] {
                    continue;
                }
                let mut mix = best.clone();
                mix[g] = m;
                let gap = (expected_positivity(&mix) - config.positivity_target).abs();
                if gap < step.map_or(best_gap, |s| s.2) {
                    step = Some((g, m, gap));
                }
            }
        }
        match step {
            Some((g, m, gap)) => {
                best[g] = m;
                best_gap = gap;
            }
            None => break,
        }
    }

    let mut ag_rng = SplitMix64::derive(seed, 5);
    let mut antigens = Vec::with_capacity(config.n_antigens);
    for (g, &motif) in best.iter().enumerate() {
        let offset = ag_rng.below(config.antigen_len - mlen + 1);
        let mut s = random_seq(&mut ag_rng, BACKGROUND_ALPHABET, config.antigen_len);
        s[offset..offset + mlen].copy_from_slice(&motifs[motif]);
        let subtype = pick(
            &mut ag_rng,
            &[
                (Subtype::H1, 0.4),
                (Subtype::H3, 0.35),
                (Subtype::H5, 0.1),
                (Subtype::H2, 0.05),
                (Subtype::H7, 0.05),
                (Subtype::Other, 0.05),
            ],
        );
        let year_category = pick(
            &mut ag_rng,
            &[
                (YearCategory::Pre1950, 0.15),
                (YearCategory::Y2000To2010, 0.35),
                (YearCategory::Post2010, 0.35),
                (YearCategory::OtherUnknown, 0.15),
            ],
        );
        let origin = pick(&mut ag_rng, &[(Origin::Public, 0.8), (Origin::Cobra, 0.2)]);
        let id = format!("ha_{g:03}");
        rule.antigens.insert(
            id.clone(),
            PlantedAntigen {
                motif,
                offset,
                epitope: String::from_utf8(motifs[motif].clone()).expect("ascii"),
            },
        );
        antigens.push(Antigen {
            id,
            sequence: seq(s)?,
            subtype,
            year_category,
            origin,
        });
    }

    let mut label_rng = SplitMix64::derive(seed, 6);
    let mut records = Vec::with_capacity(pair_index.len() * 2);
    let mut labels = Vec::with_capacity(pair_index.len() * 2);
    for task in [Task::Binding, Task::Hai] {
        for &(a, g) in &pair_index {
            let (ab_id, ag_id) = (&ab_ids[a], &antigens[g].id);
            let oracle = rule.oracle(ab_id, ag_id, task)?;
            let emitted = oracle ^ label_rng.bernoulli(config.label_noise);
            let value = raw_value(&mut label_rng, task, emitted);
            debug_assert_eq!(binarize(task, value).ok(), Some(emitted));
            records.push(AssayRecord {
                antibody_id: ab_id.clone(),
                antigen_id: ag_id.clone(),
                assay: task,
                raw_value: value,
            });
            labels.push(OracleLabel {
                task,
                antibody_id: ab_id.clone(),
                antigen_id: ag_id.clone(),
                oracle,
                emitted,
            });
        }
    }

    let dataset = Dataset::new(antibodies, antigens, records)?;
    Ok(SyntheticBench {
        dataset,
        truth: GroundTruth {
            config: config.clone(),
            rule,
            labels,
        },
    })
}

fn seq(bytes: Vec<u8>) -> Result<AminoAcidSequence> {
    AminoAcidSequence::new(String::from_utf8(bytes).expect("ascii")).map_err(|e| Error::Integrity(e.to_string()))
}

/// Heavy chain, light chain and antigen of one bound complex.
pub type Complex = (Vec<u8>, Vec<u8>, Vec<u8>);

/// Fresh bound complexes that follow `rule` but share no backbone with the
/// generated dataset: random frameworks, an exact paratope for a random
/// library motif, and an antigen carrying that motif. Lengths follow `config`.
pub fn pretraining_corpus(rule: &SyntheticRule, config: &SyntheticConfig, n: usize, seed: u64) -> Vec<Complex> {
    let mut rng = SplitMix64::derive(seed, 0xC0_4905);
    let mlen = config.motif_len;
    (0..n)
        .map(|_| {
            let motif = rule.motifs[rng.below(rule.motifs.len())].as_bytes().to_vec();
            let mut hc = random_seq(&mut rng, BACKGROUND_ALPHABET, config.heavy_len);
            let off = rng.below(config.heavy_len - mlen + 1);
            hc[off..off + mlen].copy_from_slice(&rule.map_motif(&motif));
            let lc = random_seq(&mut rng, BACKGROUND_ALPHABET, config.light_len);
            let mut ag = random_seq(&mut rng, BACKGROUND_ALPHABET, config.antigen_len);
            let off = rng.below(config.antigen_len - mlen + 1);
            ag[off..off + mlen].copy_from_slice(&motif);
            (hc, lc, ag)
        })
        .collect()
}
