//! Run configuration: a flat key-value text file plus command-line
//! overrides. Field expressions are validated before any numeric work so a
//! typo fails with a position instead of a NaN halfway through a solve.

use std::path::PathBuf;
use std::sync::Arc;

use serde::Serialize;
use tonelli_core::error::Error;
use tonelli_core::expr::parse_expr;
use tonelli_core::fields::{ExprOneForm, ExprPotential};
use tonelli_core::lagrangian::MagneticTonelliData;
use tonelli_core::preset::{preset, PRESET_NAMES};
use tonelli_core::surface::SurfaceModel;

/// Fully resolved run configuration; embedded verbatim in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub surface: Option<String>,
    pub theta_x: Option<String>,
    pub theta_y: Option<String>,
    pub potential: Option<String>,
    pub energy: Option<f64>,
    pub energy_grid: Option<Vec<f64>>,
    pub seeds: usize,
    pub samples: usize,
    pub grid: usize,
    pub runs: usize,
    pub m_max: usize,
    pub randers_r: Option<f64>,
    pub probe_a: f64,
    pub probe_radii: Vec<f64>,
    pub point: Option<[f64; 2]>,
    pub out: PathBuf,
    pub rng_seed: u64,
    pub json_only: bool,
    pub curves: Vec<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: None,
            surface: None,
            theta_x: None,
            theta_y: None,
            potential: None,
            energy: None,
            energy_grid: None,
            seeds: 16,
            samples: 256,
            grid: 256,
            runs: 10,
            m_max: 3,
            randers_r: None,
            probe_a: 1.0,
            probe_radii: vec![0.04, 0.02, 0.01],
            point: None,
            out: PathBuf::from("out"),
            rng_seed: 0,
            json_only: false,
            curves: Vec::new(),
        }
    }
}

fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        pos: line,
        msg: msg.into(),
    }
}

/// Parse `a:b:n` into n energies from a to b inclusive.
pub fn parse_energy_grid(text: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(config_err(0, format!("energy grid '{text}' is not a:b:n")));
    }
    let a: f64 = parts[0]
        .parse()
        .map_err(|_| config_err(0, format!("bad grid start '{}'", parts[0])))?;
    let b: f64 = parts[1]
        .parse()
        .map_err(|_| config_err(0, format!("bad grid end '{}'", parts[1])))?;
    let n: usize = parts[2]
        .parse()
        .map_err(|_| config_err(0, format!("bad grid count '{}'", parts[2])))?;
    if n == 0 {
        return Err(config_err(0, "energy grid needs at least one point"));
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect())
}

impl RunConfig {
    /// Merge a key-value config file into this configuration; parse errors
    /// carry the 1-based line number.
    pub fn apply_file(&mut self, text: &str) -> Result<(), Error> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped
                .split_once('=')
                .ok_or_else(|| config_err(line, format!("expected 'key = value', got '{raw}'")))?;
            let key = key.trim();
            let value = value.trim();
            let parse_f64 = |v: &str| -> Result<f64, Error> {
                v.parse()
                    .map_err(|_| config_err(line, format!("bad number '{v}' for key '{key}'")))
            };
            let parse_usize = |v: &str| -> Result<usize, Error> {
                v.parse()
                    .map_err(|_| config_err(line, format!("bad integer '{v}' for key '{key}'")))
            };
            match key {
                "preset" => self.preset = Some(value.to_string()),
                "surface" => self.surface = Some(value.to_string()),
                "theta_x" | "theta_phi" => self.theta_x = Some(value.to_string()),
                "theta_y" | "theta_z" => self.theta_y = Some(value.to_string()),
                "potential" => self.potential = Some(value.to_string()),
                "energy" => self.energy = Some(parse_f64(value)?),
                "energy_grid" => {
                    self.energy_grid =
                        Some(parse_energy_grid(value).map_err(|e| match e {
                            Error::Parse { msg, .. } => config_err(line, msg),
                            other => other,
                        })?)
                }
                "seeds" => self.seeds = parse_usize(value)?,
                "samples" => self.samples = parse_usize(value)?,
                "grid" => self.grid = parse_usize(value)?,
                "runs" => self.runs = parse_usize(value)?,
                "m_max" => self.m_max = parse_usize(value)?,
                "randers_r" => self.randers_r = Some(parse_f64(value)?),
                "probe_a" => self.probe_a = parse_f64(value)?,
                "probe_radii" => {
                    self.probe_radii = value
                        .split(',')
                        .map(|v| parse_f64(v.trim()))
                        .collect::<Result<Vec<f64>, Error>>()?;
                }
                "point" => {
                    let parts: Vec<&str> = value.split(',').collect();
                    if parts.len() != 2 {
                        return Err(config_err(line, format!("point '{value}' is not x,y")));
                    }
                    self.point = Some([parse_f64(parts[0].trim())?, parse_f64(parts[1].trim())?]);
                }
                "rng_seed" => {
                    self.rng_seed = value.parse().map_err(|_| {
                        config_err(line, format!("bad seed '{value}'"))
                    })?
                }
                "out" => self.out = PathBuf::from(value),
                "json_only" => {
                    self.json_only = value.parse().map_err(|_| {
                        config_err(line, format!("bad bool '{value}' for json_only"))
                    })?
                }
                other => {
                    return Err(config_err(line, format!("unknown config key '{other}'")));
                }
            }
        }
        Ok(())
    }

    /// Build the problem data: a named preset, or inline expression fields.
    /// All expressions are parsed (and therefore validated) here.
    pub fn build_data(&self) -> Result<MagneticTonelliData<f64>, Error> {
        if let Some(name) = &self.preset {
            return preset(name);
        }
        let surface = match self.surface.as_deref() {
            Some("flat-torus") => SurfaceModel::flat_torus(),
            Some("round-sphere") => SurfaceModel::round_sphere(),
            Some(other) => {
                return Err(Error::Invalid(format!(
                    "unknown surface '{other}' (flat-torus | round-sphere)"
                )))
            }
            None => {
                return Err(Error::Invalid(format!(
                    "no preset and no inline surface; presets: {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        let parse_field = |key: &str, src: &str| {
            parse_expr(src).map_err(|e| match e {
                Error::Parse { pos, msg } => Error::Parse {
                    pos,
                    msg: format!("in '{key}' at column {pos}: {msg}"),
                },
                other => other,
            })
        };
        let comp0 = parse_field("theta_x", self.theta_x.as_deref().unwrap_or("0"))?;
        let comp1 = parse_field("theta_y", self.theta_y.as_deref().unwrap_or("0"))?;
        let pot_src = self.potential.as_deref().unwrap_or("0");
        let pot = parse_field("potential", pot_src)?;
        let known_zero = pot_src.trim() == "0";
        Ok(MagneticTonelliData::new(
            surface,
            Arc::new(ExprOneForm { comp0, comp1 }),
            Arc::new(ExprPotential {
                expr: pot,
                known_zero,
            }),
        ))
    }
}
