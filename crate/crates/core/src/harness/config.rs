//! Experiment config files: one `key = value` per line, `#` comments, list
//! values comma-separated. Unknown keys are rejected.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use super::{DiscreteSource, ExperimentConfig, ExperimentKind, Sampling, Scenario};
use crate::error::{Error, Result};
use crate::sinkhorn::SolverConfig;

const KEYS: &[&str] = &[
    "kind",
    "scenario",
    "p_file",
    "q_file",
    "atoms",
    "dims",
    "eps",
    "n",
    "replicates",
    "alpha",
    "seed",
    "tol",
    "max_iter",
    "holder_order",
    "grid_points",
    "sampling",
];

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path.parent())
}

/// Parses config text; relative measure-file paths resolve against `base`.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<ExperimentConfig> {
    let mut seen = HashSet::new();
    let mut kind = None;
    let mut scenario_name: Option<(usize, String)> = None;
    let (mut p_file, mut q_file): (Option<PathBuf>, Option<PathBuf>) = (None, None);
    let mut atoms = 10usize;
    let mut dims = vec![2usize];
    let mut eps_list = vec![1.0f64];
    let mut n_list: Option<Vec<usize>> = None;
    let mut replicates = 100usize;
    let mut alpha = 0.05f64;
    let mut seed = 0u64;
    let mut solver = SolverConfig::default();
    let mut holder_order = None;
    let mut grid_points = None;
    let mut sampling = Sampling::Multinomial;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| Error::InvalidConfig { line: line_no, reason };
        let (key, value) =
            line.split_once('=').ok_or_else(|| bad(format!("expected `key = value`, found {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(bad(format!("unknown key {key:?}")));
        }
        if !seen.insert(key.to_string()) {
            return Err(bad(format!("duplicate key {key:?}")));
        }
        let resolve = |v: &str| match base {
            Some(dir) if Path::new(v).is_relative() => dir.join(v),
            _ => PathBuf::from(v),
        };
        match key {
            "kind" => {
                kind = Some(match value {
                    "coverage" => ExperimentKind::Coverage,
                    "bias_rate" => ExperimentKind::BiasRate,
                    "potential_rate" => ExperimentKind::PotentialRate,
                    "divergence_rate" => ExperimentKind::DivergenceRate,
                    other => return Err(bad(format!("unknown kind {other:?}"))),
                })
            }
            "scenario" => scenario_name = Some((line_no, value.to_string())),
            "p_file" => p_file = Some(resolve(value)),
            "q_file" => q_file = Some(resolve(value)),
            "atoms" => atoms = scalar(value, line_no)?,
            "dims" => dims = list(value, line_no)?,
            "eps" => eps_list = list(value, line_no)?,
            "n" => n_list = Some(list(value, line_no)?),
            "replicates" => replicates = scalar(value, line_no)?,
            "alpha" => alpha = scalar(value, line_no)?,
            "seed" => seed = scalar(value, line_no)?,
            "tol" => solver.tol = scalar(value, line_no)?,
            "max_iter" => solver.max_iter = scalar(value, line_no)?,
            "holder_order" => holder_order = Some(scalar(value, line_no)?),
            "grid_points" => grid_points = Some(scalar(value, line_no)?),
            "sampling" => {
                sampling = match value {
                    "multinomial" => Sampling::Multinomial,
                    "enumerate" => Sampling::Enumerate,
                    other => return Err(bad(format!("unknown sampling {other:?}"))),
                }
            }
            _ => unreachable!(),
        }
    }

    let kind = kind.ok_or(Error::InvalidConfig { line: 0, reason: "missing `kind`".into() })?;
    let n_list = n_list.ok_or(Error::InvalidConfig { line: 0, reason: "missing `n`".into() })?;
    let default_name = if kind == ExperimentKind::Coverage { "gaussian" } else { "discrete" };
    let (scenario_line, name) = scenario_name.unwrap_or((0, default_name.to_string()));
    let scenario = match name.as_str() {
        "gaussian" => Scenario::GaussianPair,
        "discrete" => Scenario::DiscretePair(match (p_file, q_file) {
            (Some(p), Some(q)) => DiscreteSource::Files { p, q },
            (None, None) => DiscreteSource::Generated { atoms },
            _ => {
                return Err(Error::InvalidConfig {
                    line: scenario_line,
                    reason: "p_file and q_file must be given together".into(),
                })
            }
        }),
        other => {
            return Err(Error::InvalidConfig { line: scenario_line, reason: format!("unknown scenario {other:?}") })
        }
    };

    let cfg = ExperimentConfig {
        kind,
        scenario,
        dims,
        eps_list,
        n_list,
        replicates,
        alpha,
        seed,
        solver,
        holder_order,
        grid_points,
        sampling,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn scalar<T: std::str::FromStr>(value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidConfig { line, reason: format!("cannot parse {value:?}") })
}

fn list<T: std::str::FromStr>(value: &str, line: usize) -> Result<Vec<T>> {
    value.split(',').map(|v| scalar(v.trim(), line)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_table_cell() {
        let cfg = parse_config(
            "# one coverage cell\nkind = coverage\ndims = 2\neps = 2\nn = 100\nreplicates = 300\nseed = 7\n",
            None,
        )
        .unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Coverage);
        assert_eq!(cfg.scenario, Scenario::GaussianPair);
        assert_eq!((cfg.dims.clone(), cfg.eps_list.clone(), cfg.n_list.clone()), (vec![2], vec![2.0], vec![100]));
        assert_eq!((cfg.replicates, cfg.seed, cfg.alpha), (300, 7, 0.05));
    }

    #[test]
    fn rate_defaults_to_generated_discrete() {
        let cfg = parse_config("kind = bias_rate\nn = 50, 100, 200\n", None).unwrap();
        assert_eq!(cfg.scenario, Scenario::DiscretePair(DiscreteSource::Generated { atoms: 10 }));
    }

    #[test]
    fn resolves_relative_files() {
        let cfg = parse_config(
            "kind = bias_rate\nn = 5\nscenario = discrete\np_file = a.csv\nq_file = /abs/b.csv\n",
            Some(Path::new("/cfg")),
        )
        .unwrap();
        assert_eq!(
            cfg.scenario,
            Scenario::DiscretePair(DiscreteSource::Files { p: "/cfg/a.csv".into(), q: "/abs/b.csv".into() })
        );
    }

    #[test]
    fn rejections() {
        let err = |t: &str| parse_config(t, None).unwrap_err();
        assert!(matches!(err("kind = coverage\nn = 10\ncolour = blue\n"), Error::InvalidConfig { line: 3, .. }));
        assert!(matches!(err("kind = coverage\nn = 10\nn = 20\n"), Error::InvalidConfig { line: 3, .. }));
        assert!(matches!(err("kind = coverage\n"), Error::InvalidConfig { .. }));
        assert!(matches!(err("kind = coverage\nn = ten\n"), Error::InvalidConfig { line: 2, .. }));
        assert!(matches!(err("kind = bias_rate\nn = 100, 50\n"), Error::InvalidConfig { .. }));
        assert!(matches!(err("kind = coverage\nn = 10\nreplicates = 0\n"), Error::InvalidConfig { .. }));
        assert!(matches!(
            err("kind = coverage\nn = 10\np_file = x.csv\nscenario = discrete\n"),
            Error::InvalidConfig { .. }
        ));
        assert!(matches!(err("just words\n"), Error::InvalidConfig { line: 1, .. }));
    }
}
