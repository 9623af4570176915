//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown and repeated
//! keys are errors. Lists are comma-separated. Keys left unset take the
//! defaults below, some of which depend on the experiment.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `experiment` | from the command line | must match it when given |
//! | `beta` | 1.5 (sweep: 4.5) | truncation height β |
//! | `alpha_bar` | 1.25 (sweep: 3.9) | upper edge ᾱ of the deformation strip |
//! | `t_min`, `t_max`, `t_count` | 0.02, 0.3, 20 | log-spaced t grid |
//! | `k_max` | 6 | Fourier modes `0..=k_max` |
//! | `k` | 1 | target mode of the degenerating branch |
//! | `ell`, `branches` | 1, 1 | model mode and branch count |
//! | `mesh_t_min` | `t_min` | layer width `t^{2/3}` of the graded mesh |
//! | `mesh_e_max`, `mesh_n_layer`, `mesh_growth`, `mesh_h_max`, `mesh_ppw` | 15, 16, 1.1, 0.05, 24 | graded mesh |
//! | `y_max` | 3.0 (sweep: `beta` + 1.5) | cusp truncation height |
//! | `rho`, `eta`, `delta` | 0.5, 0.5, 0.5 | diagnostic constants |
//! | `n_max` | 30 | zero-mode eigenvalues scanned for crossings |
//! | `functions` | 10 | random test functions for verify-forms |
//! | `poincare_t` | 0.01, 0.1, 1 | t values of the Poincaré check |
//! | `c_min`, `c_max`, `c_count` | 0.0, 0.2, 3 | sweep grid in c |
//! | `w_min`, `w_max`, `w_count` | 0.45, 0.55, 3 | sweep grid in w |
//! | `eigen_count` | 4 | eigenpairs per sweep point |
//! | `seed` | 0 | RNG seed |
//! | `out` | `runs` | parent of the run directory |

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    ModelAsymptotics,
    Degenerate,
    Crossings,
    Sweep,
    VerifyForms,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::ModelAsymptotics,
        Experiment::Degenerate,
        Experiment::Crossings,
        Experiment::Sweep,
        Experiment::VerifyForms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ModelAsymptotics => "model-asymptotics",
            Experiment::Degenerate => "degenerate",
            Experiment::Crossings => "crossings",
            Experiment::Sweep => "sweep",
            Experiment::VerifyForms => "verify-forms",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

/// One field-level complaint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid configuration: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ConfigInvalid(pub Vec<FieldError>);

#[derive(Debug, Clone, PartialEq)]
pub struct MeshConfig {
    pub t_min: f64,
    pub e_max: f64,
    pub n_layer: f64,
    pub growth: f64,
    pub h_max: f64,
    pub ppw: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub c: (f64, f64, usize),
    pub w: (f64, f64, usize),
    pub eigen_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub beta: f64,
    pub alpha_bar: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub t_count: usize,
    pub k_max: usize,
    pub k: usize,
    pub ell: usize,
    pub branches: usize,
    pub mesh: MeshConfig,
    pub rho: f64,
    pub eta: f64,
    pub delta: f64,
    pub n_max: usize,
    pub functions: usize,
    pub poincare_t: Vec<f64>,
    pub sweep: SweepConfig,
    pub seed: u64,
    pub out: PathBuf,
}

const KEYS: &[&str] = &[
    "experiment",
    "beta",
    "alpha_bar",
    "t_min",
    "t_max",
    "t_count",
    "k_max",
    "k",
    "ell",
    "branches",
    "mesh_t_min",
    "mesh_e_max",
    "mesh_n_layer",
    "mesh_growth",
    "mesh_h_max",
    "mesh_ppw",
    "y_max",
    "rho",
    "eta",
    "delta",
    "n_max",
    "functions",
    "poincare_t",
    "c_min",
    "c_max",
    "c_count",
    "w_min",
    "w_max",
    "w_count",
    "eigen_count",
    "seed",
    "out",
];

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    errors: Vec<FieldError>,
}

impl Reader<'_> {
    fn get<T: FromStr>(&mut self, key: &str, default: T) -> T {
        match self.map.get(key) {
            None => default,
            Some(v) => match v.parse() {
                Ok(x) => x,
                Err(_) => {
                    self.fail(key, format!("cannot parse '{v}'"));
                    default
                }
            },
        }
    }

    fn list(&mut self, key: &str, default: Vec<f64>) -> Vec<f64> {
        match self.map.get(key) {
            None => default,
            Some(v) => {
                let parsed: Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse()).collect();
                parsed.unwrap_or_else(|_| {
                    self.fail(key, format!("cannot parse list '{v}'"));
                    default
                })
            }
        }
    }

    fn fail(&mut self, field: &str, message: String) {
        self.errors.push(FieldError {
            field: field.into(),
            message,
        });
    }
}

/// Splits the text into key/value pairs.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigInvalid> {
    let (map, errors) = split_pairs(text);
    if errors.is_empty() {
        Ok(map)
    } else {
        Err(ConfigInvalid(errors))
    }
}

/// Valid pairs plus the errors of the rejected lines.
fn split_pairs(text: &str) -> (BTreeMap<String, String>, Vec<FieldError>) {
    let mut map = BTreeMap::new();
    let mut errors = vec![];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errors.push(FieldError {
                field: format!("line {}", i + 1),
                message: format!("expected key = value, got '{line}'"),
            });
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !KEYS.contains(&k.as_str()) {
            errors.push(FieldError {
                field: k,
                message: "unknown key".into(),
            });
        } else if map.insert(k.clone(), v).is_some() {
            errors.push(FieldError {
                field: k,
                message: "repeated key".into(),
            });
        }
    }
    (map, errors)
}

impl RunConfig {
    /// Parses and validates a configuration for `experiment`.
    pub fn parse(experiment: Experiment, text: &str) -> Result<RunConfig, ConfigInvalid> {
        let (map, errors) = split_pairs(text);
        let mut r = Reader { map: &map, errors };
        if let Some(e) = map.get("experiment") {
            if e != experiment.name() {
                r.fail("experiment", format!("config names '{e}' but '{experiment}' was requested"));
            }
        }
        let sweep = experiment == Experiment::Sweep;
        let beta = r.get("beta", if sweep { 4.5 } else { 1.5 });
        let alpha_bar = r.get("alpha_bar", if sweep { 3.9 } else { 1.25 });
        let t_min = r.get("t_min", 0.02);
        let mesh = MeshConfig {
            t_min: r.get("mesh_t_min", if sweep { 1.0 } else { t_min }),
            e_max: r.get("mesh_e_max", 15.0),
            n_layer: r.get("mesh_n_layer", 16.0),
            growth: r.get("mesh_growth", 1.1),
            h_max: r.get("mesh_h_max", 0.05),
            ppw: r.get("mesh_ppw", 24.0),
            y_max: r.get("y_max", if sweep { beta + 1.5 } else { 3.0 }),
        };
        let cfg = RunConfig {
            experiment,
            beta,
            alpha_bar,
            t_min,
            t_max: r.get("t_max", 0.3),
            t_count: r.get("t_count", 20),
            k_max: r.get("k_max", 6),
            k: r.get("k", 1),
            ell: r.get("ell", 1),
            branches: r.get("branches", 1),
            mesh,
            rho: r.get("rho", 0.5),
            eta: r.get("eta", 0.5),
            delta: r.get("delta", 0.5),
            n_max: r.get("n_max", 30),
            functions: r.get("functions", 10),
            poincare_t: r.list("poincare_t", vec![0.01, 0.1, 1.0]),
            sweep: SweepConfig {
                c: (r.get("c_min", 0.0), r.get("c_max", 0.2), r.get("c_count", 3)),
                w: (r.get("w_min", 0.45), r.get("w_max", 0.55), r.get("w_count", 3)),
                eigen_count: r.get("eigen_count", 4),
            },
            seed: r.get("seed", 0),
            out: PathBuf::from(map.get("out").cloned().unwrap_or_else(|| "runs".into())),
        };
        let mut errors = r.errors;
        cfg.validate(&mut errors);
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigInvalid(errors))
        }
    }

    fn validate(&self, errors: &mut Vec<FieldError>) {
        let mut fail = |field: &str, message: String| {
            errors.push(FieldError {
                field: field.into(),
                message,
            })
        };
        if !(self.beta > 1.0) {
            fail("beta", format!("beta = {} must exceed 1", self.beta));
        }
        let targets_k = matches!(self.experiment, Experiment::Crossings | Experiment::Degenerate);
        if targets_k {
            if self.k == 0 {
                fail("k", "target mode k must be at least 1".into());
            } else if self.k > 1 {
                let bound = self.k as f64 / (self.k as f64 - 1.0);
                if self.beta >= bound {
                    fail(
                        "beta",
                        format!("beta = {} violates beta < k/(k-1) = {bound} for k = {}", self.beta, self.k),
                    );
                }
            }
            if self.k > self.k_max {
                fail("k", format!("k = {} exceeds k_max = {}", self.k, self.k_max));
            }
        }
        if !(self.t_min > 0.0 && self.t_min < self.t_max) {
            fail("t_min", format!("need 0 < t_min < t_max, got {} and {}", self.t_min, self.t_max));
        }
        if self.t_count < 2 {
            fail("t_count", "need at least 2 samples".into());
        }
        if self.experiment == Experiment::Sweep {
            let bound = 2.0 + 3f64.sqrt();
            if !(self.alpha_bar > bound) {
                fail("alpha_bar", format!("sweep needs alpha_bar > 2 + sqrt(3) = {bound}"));
            }
            if !(self.beta > self.alpha_bar) {
                fail("beta", format!("sweep needs beta > alpha_bar = {}", self.alpha_bar));
            }
            if self.sweep.eigen_count == 0 {
                fail("eigen_count", "must be positive".into());
            }
        } else {
            if !(self.alpha_bar > 1.0 && self.alpha_bar < self.beta) {
                fail(
                    "alpha_bar",
                    format!("need 1 < alpha_bar < beta, got alpha_bar = {}", self.alpha_bar),
                );
            }
            if self.t_max >= 1.0 && self.experiment == Experiment::Degenerate {
                fail("t_max", "the degenerating fields need t < 1".into());
            }
        }
        if !(self.mesh.y_max > self.beta) {
            fail("y_max", format!("y_max = {} must exceed beta", self.mesh.y_max));
        }
        if !(self.mesh.t_min > 0.0 && self.mesh.e_max > 0.0 && self.mesh.n_layer > 0.0) {
            fail("mesh_t_min", "mesh parameters must be positive".into());
        }
        if !(self.mesh.growth >= 1.0) {
            fail("mesh_growth", "growth factor must be at least 1".into());
        }
        if self.experiment == Experiment::ModelAsymptotics && self.branches == 0 {
            fail("branches", "must be positive".into());
        }
        if self.poincare_t.iter().any(|&t| !(t > 0.0)) {
            fail("poincare_t", "values must be positive".into());
        }
        if self.experiment == Experiment::VerifyForms && self.functions == 0 {
            fail("functions", "must be positive".into());
        }
    }

    /// Canonical `key = value` echo, one line per key, sorted.
    pub fn echo(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        let f = |x: f64| format!("{x}");
        m.insert("experiment", self.experiment.name().to_string());
        m.insert("beta", f(self.beta));
        m.insert("alpha_bar", f(self.alpha_bar));
        m.insert("t_min", f(self.t_min));
        m.insert("t_max", f(self.t_max));
        m.insert("t_count", self.t_count.to_string());
        m.insert("k_max", self.k_max.to_string());
        m.insert("k", self.k.to_string());
        m.insert("ell", self.ell.to_string());
        m.insert("branches", self.branches.to_string());
        m.insert("mesh_t_min", f(self.mesh.t_min));
        m.insert("mesh_e_max", f(self.mesh.e_max));
        m.insert("mesh_n_layer", f(self.mesh.n_layer));
        m.insert("mesh_growth", f(self.mesh.growth));
        m.insert("mesh_h_max", f(self.mesh.h_max));
        m.insert("mesh_ppw", f(self.mesh.ppw));
        m.insert("y_max", f(self.mesh.y_max));
        m.insert("rho", f(self.rho));
        m.insert("eta", f(self.eta));
        m.insert("delta", f(self.delta));
        m.insert("n_max", self.n_max.to_string());
        m.insert("functions", self.functions.to_string());
        m.insert(
            "poincare_t",
            self.poincare_t.iter().map(|&x| f(x)).collect::<Vec<_>>().join(","),
        );
        m.insert("c_min", f(self.sweep.c.0));
        m.insert("c_max", f(self.sweep.c.1));
        m.insert("c_count", self.sweep.c.2.to_string());
        m.insert("w_min", f(self.sweep.w.0));
        m.insert("w_max", f(self.sweep.w.1));
        m.insert("w_count", self.sweep.w.2.to_string());
        m.insert("eigen_count", self.sweep.eigen_count.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("out", self.out.display().to_string());
        m
    }

    /// Log-spaced t grid from `t_max` down to `t_min`.
    pub fn t_grid(&self) -> Vec<f64> {
        log_grid(self.t_max, self.t_min, self.t_count)
    }
}

/// `count` log-spaced values from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..count)
        .map(|i| {
            if i == 0 {
                a
            } else if i == count - 1 {
                b
            } else {
                (la + (lb - la) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Evenly spaced values from `a` to `b` inclusive.
pub fn lin_grid(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![a];
    }
    (0..count).map(|i| a + (b - a) * i as f64 / (count - 1) as f64).collect()
}
