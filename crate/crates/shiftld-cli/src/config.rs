//! INI-style run configuration: `[section]` headers, `key = value` lines,
//! `#` comments. Unknown sections and keys are hard errors (no silent typos),
//! syntax errors carry line numbers, and every numeric invariant is checked
//! before a subcommand runs.

use std::collections::BTreeMap;
use thiserror::Error;

use shiftld::measures::MeasureSpec;
use shiftld::renewal::{GammaKind, GammaSpec, RenewalPair};
use shiftld::symbolic::{Alphabet, Involution, InvolutionKind, Symbol};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value` or `[section]`")]
    Syntax(usize),
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { section: String, line: usize },
    #[error("line {line}: unknown key `{key}` in section [{section}]")]
    UnknownKey {
        section: String,
        key: String,
        line: usize,
    },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { key: String, line: usize },
    #[error("section [{0}] is required for this subcommand")]
    MissingSection(String),
    #[error("key `{key}` in [{section}] is required")]
    MissingKey { section: String, key: String },
    #[error("key `{key}`: cannot parse `{value}` as {ty}")]
    BadValue {
        key: String,
        value: String,
        ty: &'static str,
    },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("measure construction failed: {0}")]
    Measure(String),
}

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "measure",
        &[
            "kind",
            "labels",
            "size",
            "p",
            "transition",
            "stationary",
            "mats",
            "v",
            "w",
            "lambda",
            "preset",
            "side",
            "gamma",
            "gamma_head",
            "epsilon",
            "tol",
        ],
    ),
    (
        "hat_measure",
        &[
            "kind",
            "labels",
            "size",
            "p",
            "transition",
            "stationary",
            "mats",
            "v",
            "w",
            "lambda",
            "preset",
            "side",
            "gamma",
            "gamma_head",
            "epsilon",
            "tol",
        ],
    ),
    (
        "q_measure",
        &[
            "kind",
            "labels",
            "size",
            "p",
            "transition",
            "stationary",
            "mats",
            "v",
            "w",
            "lambda",
            "preset",
            "side",
            "gamma",
            "gamma_head",
            "epsilon",
            "tol",
        ],
    ),
    ("involution", &["kind", "map"]),
    ("observable", &["r", "values"]),
    (
        "hmc",
        &[
            "preset",
            "gamma",
            "gamma_head",
            "epsilon",
            "gamma_hat",
            "gamma_hat_head",
            "epsilon_hat",
        ],
    ),
    (
        "sweep",
        &[
            "alpha_min",
            "alpha_max",
            "alpha_step",
            "t",
            "t_max",
            "tau",
            "v_max",
            "n",
            "seed",
            "samples",
            "s_min",
            "s_max",
            "s_step",
            "threads",
            "tol",
            "window",
        ],
    ),
    ("probe", &["a", "b", "t_list"]),
    ("output", &["path"]),
];

/// Parsed key → (value, line).
pub type Section = BTreeMap<String, (String, usize)>;

#[derive(Debug, Default, Clone)]
pub struct RunConfig {
    sections: BTreeMap<String, Section>,
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            let known = SECTIONS.iter().any(|(s, _)| *s == name);
            if !known {
                return Err(ConfigError::UnknownSection {
                    section: name,
                    line: line_no,
                });
            }
            cfg.sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax(line_no))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let section = current.clone().ok_or(ConfigError::Syntax(line_no))?;
        let allowed = SECTIONS
            .iter()
            .find(|(s, _)| *s == section)
            .map(|(_, k)| *k)
            .unwrap();
        if !allowed.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                section,
                key,
                line: line_no,
            });
        }
        let entry = cfg.sections.get_mut(&section).unwrap();
        if entry.contains_key(&key) {
            return Err(ConfigError::DuplicateKey { key, line: line_no });
        }
        entry.insert(key, (value, line_no));
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Section, ConfigError> {
        self.section(name)
            .ok_or_else(|| ConfigError::MissingSection(name.into()))
    }

    pub fn get_str(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|(v, _)| v.as_str())
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        parse_opt(self.get_str(section, key), key, "a float", |s| {
            s.parse::<f64>().ok()
        })
    }

    pub fn get_usize(&self, section: &str, key: &str) -> Result<Option<usize>, ConfigError> {
        parse_opt(self.get_str(section, key), key, "an integer", |s| {
            s.parse::<usize>().ok()
        })
    }

    pub fn get_u64(&self, section: &str, key: &str) -> Result<Option<u64>, ConfigError> {
        parse_opt(self.get_str(section, key), key, "an integer", |s| {
            s.parse::<u64>().ok()
        })
    }

    /// Build the measure described by a section.
    pub fn build_measure(&self, name: &str) -> Result<MeasureSpec, ConfigError> {
        let section = self.require(name)?;
        let kind = section
            .get("kind")
            .map(|(v, _)| v.as_str())
            .ok_or_else(|| ConfigError::MissingKey {
                section: name.into(),
                key: "kind".into(),
            })?;
        let alphabet = self.build_alphabet(name)?;
        let merr = |e: &dyn std::fmt::Display| ConfigError::Measure(e.to_string());
        match kind {
            "uniform" => Ok(MeasureSpec::uniform(alphabet)),
            "bernoulli" => {
                let p = number_list(self.get_str(name, "p").ok_or_else(|| {
                    ConfigError::MissingKey {
                        section: name.into(),
                        key: "p".into(),
                    }
                })?)?;
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(ConfigError::Invariant(format!(
                        "probabilities sum to {sum}, expected 1"
                    )));
                }
                MeasureSpec::bernoulli(alphabet, p).map_err(|e| merr(&e))
            }
            "markov" => {
                let rows = matrix(self.get_str(name, "transition").ok_or_else(|| {
                    ConfigError::MissingKey {
                        section: name.into(),
                        key: "transition".into(),
                    }
                })?)?;
                let pi = match self.get_str(name, "stationary") {
                    Some(s) => Some(number_list(s)?),
                    None => None,
                };
                MeasureSpec::markov(alphabet, rows, pi).map_err(|e| merr(&e))
            }
            "matrix-product" => {
                let mats_text =
                    self.get_str(name, "mats")
                        .ok_or_else(|| ConfigError::MissingKey {
                            section: name.into(),
                            key: "mats".into(),
                        })?;
                // one matrix per symbol, separated by `|`; rows by `;`
                let mats: Result<Vec<Vec<Vec<f64>>>, ConfigError> =
                    mats_text.split('|').map(matrix).collect();
                let mats = mats?;
                match (self.get_str(name, "v"), self.get_str(name, "w")) {
                    (Some(v), Some(w)) => {
                        let lambda = self.get_f64(name, "lambda")?;
                        MeasureSpec::matrix_product(
                            alphabet,
                            mats,
                            number_list(v)?,
                            number_list(w)?,
                            lambda,
                        )
                        .map_err(|e| merr(&e))
                    }
                    _ => MeasureSpec::matrix_product_auto(alphabet, mats).map_err(|e| merr(&e)),
                }
            }
            "hidden-renewal" => {
                let gamma = self.build_gamma(name)?;
                let tol = self.get_f64(name, "tol")?.unwrap_or(1e-14);
                MeasureSpec::hidden_renewal(gamma, tol).map_err(|e| merr(&e))
            }
            other => Err(ConfigError::BadValue {
                key: "kind".into(),
                value: other.into(),
                ty: "one of uniform|bernoulli|markov|matrix-product|hidden-renewal",
            }),
        }
    }

    fn build_alphabet(&self, name: &str) -> Result<Alphabet, ConfigError> {
        if let Some(labels) = self.get_str(name, "labels") {
            let labels: Vec<String> = labels.split(',').map(|s| s.trim().to_string()).collect();
            return Alphabet::new(labels).map_err(|e| ConfigError::Measure(e.to_string()));
        }
        let size = self.get_usize(name, "size")?.unwrap_or(2);
        Alphabet::of_size(size).map_err(|e| ConfigError::Measure(e.to_string()))
    }

    /// Gamma sequence for a hidden-renewal section: either a preset side or a
    /// custom generator description.
    fn build_gamma(&self, name: &str) -> Result<GammaSpec, ConfigError> {
        if let Some(preset) = self.get_usize(name, "preset")? {
            let pair = RenewalPair::preset(preset as u8)
                .map_err(|e| ConfigError::Measure(e.to_string()))?;
            let side = self.get_str(name, "side").unwrap_or("gamma");
            return match side {
                "gamma" => Ok(pair.gamma),
                "gamma-hat" | "gamma_hat" => Ok(pair.gamma_hat),
                other => Err(ConfigError::BadValue {
                    key: "side".into(),
                    value: other.into(),
                    ty: "gamma or gamma-hat",
                }),
            };
        }
        let desc = self
            .get_str(name, "gamma")
            .ok_or_else(|| ConfigError::MissingKey {
                section: name.into(),
                key: "gamma".into(),
            })?;
        let head = match self.get_str(name, "gamma_head") {
            Some(h) => Some(number_list(h)?),
            None => None,
        };
        let epsilon = self
            .get_f64(name, "epsilon")?
            .ok_or_else(|| ConfigError::MissingKey {
                section: name.into(),
                key: "epsilon".into(),
            })?;
        gamma_from_desc(desc, head, epsilon)
    }

    pub fn build_involution(&self, alphabet: &Alphabet) -> Result<Involution, ConfigError> {
        let section = self.require("involution")?;
        let kind = match section.get("kind").map(|(v, _)| v.as_str()) {
            Some("reversal") | None => InvolutionKind::Reversal,
            Some("letterwise") => InvolutionKind::Letterwise,
            Some(other) => {
                return Err(ConfigError::BadValue {
                    key: "kind".into(),
                    value: other.into(),
                    ty: "reversal or letterwise",
                })
            }
        };
        let map: Vec<Symbol> = match section.get("map").map(|(v, _)| v.as_str()) {
            None | Some("identity") => (0..alphabet.size() as Symbol).collect(),
            Some(perm) => {
                // the image labels in alphabet order, e.g. `b, a`
                let labels: Vec<&str> = perm.split(',').map(str::trim).collect();
                if labels.len() != alphabet.size() {
                    return Err(ConfigError::Invariant(format!(
                        "letter map lists {} labels for an alphabet of size {}",
                        labels.len(),
                        alphabet.size()
                    )));
                }
                let mut out = Vec::with_capacity(labels.len());
                for l in labels {
                    let idx = alphabet
                        .labels()
                        .iter()
                        .position(|x| x == l)
                        .ok_or_else(|| ConfigError::BadValue {
                            key: "map".into(),
                            value: l.into(),
                            ty: "a label of the alphabet",
                        })?;
                    out.push(idx as Symbol);
                }
                out
            }
        };
        Involution::new(kind, map).map_err(|e| ConfigError::Measure(e.to_string()))
    }

    pub fn build_observable(
        &self,
        alphabet_size: usize,
    ) -> Result<shiftld::ldp::ObservableSpec, ConfigError> {
        let section = self.require("observable")?;
        let r = match section.get("r") {
            Some((v, _)) => v.parse::<usize>().map_err(|_| ConfigError::BadValue {
                key: "r".into(),
                value: v.clone(),
                ty: "an integer",
            })?,
            None => 1,
        };
        let values = number_list(section.get("values").map(|(v, _)| v.as_str()).ok_or_else(
            || ConfigError::MissingKey {
                section: "observable".into(),
                key: "values".into(),
            },
        )?)?;
        shiftld::ldp::ObservableSpec::scalar(alphabet_size, r, values)
            .map_err(|e| ConfigError::Measure(e.to_string()))
    }

    /// The renewal pair for the `hmc` subcommand.
    pub fn build_renewal_pair(&self, example: Option<u8>) -> Result<RenewalPair, ConfigError> {
        if let Some(k) = example {
            return RenewalPair::preset(k).map_err(|e| ConfigError::Measure(e.to_string()));
        }
        let section = self.require("hmc")?;
        if let Some((preset, _)) = section.get("preset") {
            let k: u8 = preset.parse().map_err(|_| ConfigError::BadValue {
                key: "preset".into(),
                value: preset.clone(),
                ty: "1..=6",
            })?;
            return RenewalPair::preset(k).map_err(|e| ConfigError::Measure(e.to_string()));
        }
        let gamma = {
            let desc = section
                .get("gamma")
                .map(|(v, _)| v.as_str())
                .ok_or_else(|| ConfigError::MissingKey {
                    section: "hmc".into(),
                    key: "gamma".into(),
                })?;
            let head = match section.get("gamma_head") {
                Some((h, _)) => Some(number_list(h)?),
                None => None,
            };
            let eps = section
                .get("epsilon")
                .and_then(|(v, _)| v.parse::<f64>().ok())
                .ok_or_else(|| ConfigError::MissingKey {
                    section: "hmc".into(),
                    key: "epsilon".into(),
                })?;
            gamma_from_desc(desc, head, eps)?
        };
        let gamma_hat = {
            let desc = section
                .get("gamma_hat")
                .map(|(v, _)| v.as_str())
                .ok_or_else(|| ConfigError::MissingKey {
                    section: "hmc".into(),
                    key: "gamma_hat".into(),
                })?;
            let head = match section.get("gamma_hat_head") {
                Some((h, _)) => Some(number_list(h)?),
                None => None,
            };
            let eps = section
                .get("epsilon_hat")
                .and_then(|(v, _)| v.parse::<f64>().ok())
                .ok_or_else(|| ConfigError::MissingKey {
                    section: "hmc".into(),
                    key: "epsilon_hat".into(),
                })?;
            gamma_from_desc(desc, head, eps)?
        };
        Ok(RenewalPair::new(gamma, gamma_hat))
    }
}

/// `linear A` | `quadratic LIN QUAD` | `quadroot QUAD POW32` |
/// `linlog OFFSET LIN LOGC SCALE` | `exp RATE`, optionally wrapped in a
/// tabular head.
fn gamma_from_desc(
    desc: &str,
    head: Option<Vec<f64>>,
    epsilon: f64,
) -> Result<GammaSpec, ConfigError> {
    let parts: Vec<&str> = desc.split_whitespace().collect();
    let nums: Result<Vec<f64>, ConfigError> = parts[1..]
        .iter()
        .map(|s| {
            s.parse::<f64>().map_err(|_| ConfigError::BadValue {
                key: "gamma".into(),
                value: (*s).into(),
                ty: "a float",
            })
        })
        .collect();
    let nums = nums?;
    let need = |n: usize| -> Result<(), ConfigError> {
        if nums.len() != n {
            return Err(ConfigError::BadValue {
                key: "gamma".into(),
                value: desc.into(),
                ty: "generator with the right arity",
            });
        }
        Ok(())
    };
    let kind = match parts.first().copied() {
        Some("linear") => {
            need(1)?;
            GammaKind::Linear { a: nums[0] }
        }
        Some("quadratic") => {
            need(2)?;
            GammaKind::Quadratic {
                lin: nums[0],
                quad: nums[1],
            }
        }
        Some("quadroot") => {
            need(2)?;
            GammaKind::QuadRoot {
                quad: nums[0],
                pow32: nums[1],
            }
        }
        Some("linlog") => {
            need(4)?;
            GammaKind::LinLog {
                offset: nums[0],
                lin: nums[1],
                log_coef: nums[2],
                scale: nums[3],
            }
        }
        Some("exp") => {
            need(1)?;
            GammaKind::Exp { rate: nums[0] }
        }
        _ => {
            return Err(ConfigError::BadValue {
                key: "gamma".into(),
                value: desc.into(),
                ty: "linear|quadratic|quadroot|linlog|exp",
            })
        }
    };
    let kind = match head {
        Some(h) if !h.is_empty() => GammaKind::Tabular {
            head: h,
            tail: Box::new(kind),
        },
        _ => kind,
    };
    GammaSpec::new(kind, epsilon).map_err(|e| ConfigError::Measure(e.to_string()))
}

fn parse_opt<T>(
    raw: Option<&str>,
    key: &str,
    ty: &'static str,
    f: impl Fn(&str) -> Option<T>,
) -> Result<Option<T>, ConfigError> {
    match raw {
        None => Ok(None),
        Some(s) => f(s).map(Some).ok_or_else(|| ConfigError::BadValue {
            key: key.into(),
            value: s.into(),
            ty,
        }),
    }
}

/// Numbers separated by commas and/or whitespace.
pub fn number_list(text: &str) -> Result<Vec<f64>, ConfigError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>().map_err(|_| ConfigError::BadValue {
                key: "list".into(),
                value: s.into(),
                ty: "a float",
            })
        })
        .collect()
}

/// Rows separated by `;`, entries by commas/whitespace.
pub fn matrix(text: &str) -> Result<Vec<Vec<f64>>, ConfigError> {
    text.split(';').map(number_list).collect()
}
