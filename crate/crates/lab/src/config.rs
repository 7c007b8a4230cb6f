//! Experiment configuration: a single TOML (or JSON) file describing the
//! domain family, killing rates, sample counts, seeds, stopping radius and
//! simulation parameters. Every output embeds the hash of the parsed config.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use msle_core::lattice::{build_rect_domain, BoundaryEdge, EdgeLocator, GridDomain};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum DomainSpec {
    /// Unit-square family: at mesh size `d` the interior block is
    /// `(round(1/d) - 1)` cells square, so the polygonal side is near one and
    /// center marks sit exactly on the symmetry line for the stock sizes.
    SquareFamily {
        #[serde(default = "default_bottom_center")]
        a: String,
        #[serde(default = "default_top_center")]
        b: String,
    },
    /// One explicit rectangle in lattice units.
    Rect {
        cols: usize,
        rows: usize,
        mesh: f64,
        a: String,
        b: String,
        origin: [i32; 2],
    },
    /// Domain file: JSON `{mesh, interior, a, b, origin}` with `a`, `b` as
    /// `[outer, inner]` vertex pairs.
    File { path: String },
}

fn default_bottom_center() -> String {
    "bottom-center".into()
}
fn default_top_center() -> String {
    "top-center".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub mesh_sizes: Vec<f64>,
    pub masses: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub stop_radius: f64,
    pub t_grid: Vec<f64>,
    /// compute per-curve log-densities in `sample` runs
    #[serde(default)]
    pub densities: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub mesh_n: usize,
    pub cadence: usize,
    pub horizon: f64,
    pub samples: usize,
    pub drift_tol: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            dt: 1e-3,
            mesh_n: 96,
            cadence: 1,
            horizon: 1.0,
            samples: 500,
            drift_tol: 1e-8,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = if path.extension().map(|e| e == "json").unwrap_or(false) {
            serde_json::from_str(&text).context("parsing JSON config")?
        } else {
            toml::from_str(&text).context("parsing TOML config")?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment.mesh_sizes.is_empty() {
            bail!("experiment.mesh_sizes must not be empty");
        }
        for &d in &self.experiment.mesh_sizes {
            for &m in &self.experiment.masses {
                if m * d > 0.5 {
                    bail!("mass {m} at mesh {d} violates m * mesh <= 1/2");
                }
            }
        }
        if !(self.sim.dt > 0.0) || self.sim.cadence == 0 {
            bail!("sim.dt must be positive and sim.cadence at least 1");
        }
        Ok(())
    }

    /// Short hash of the canonical JSON form, embedded into every output.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The domain at one mesh size of the family.
    pub fn domain_at(&self, mesh: f64) -> Result<GridDomain> {
        match &self.domain {
            DomainSpec::SquareFamily { a, b } => {
                let n = (1.0 / mesh).round() as usize;
                if n < 4 {
                    bail!("mesh {mesh} too coarse for the square family");
                }
                let side = n - 1;
                let c = ((side + 1) / 2) as i32;
                Ok(build_rect_domain(
                    side,
                    side,
                    mesh,
                    parse_locator(a)?,
                    parse_locator(b)?,
                    (c, c),
                )?)
            }
            DomainSpec::Rect {
                cols,
                rows,
                mesh: d,
                a,
                b,
                origin,
            } => {
                if (d - mesh).abs() > 1e-12 {
                    bail!("rect domain has fixed mesh {d}, requested {mesh}");
                }
                Ok(build_rect_domain(
                    *cols,
                    *rows,
                    *d,
                    parse_locator(a)?,
                    parse_locator(b)?,
                    (origin[0], origin[1]),
                )?)
            }
            DomainSpec::File { path } => {
                let dom = read_domain_file(Path::new(path))?;
                if (dom.mesh() - mesh).abs() > 1e-12 {
                    bail!("domain file has mesh {}, requested {mesh}", dom.mesh());
                }
                Ok(dom)
            }
        }
    }

    pub fn domains(&self) -> Result<Vec<GridDomain>> {
        self.experiment
            .mesh_sizes
            .iter()
            .map(|&d| self.domain_at(d))
            .collect()
    }
}

pub fn parse_locator(s: &str) -> Result<EdgeLocator> {
    let loc = match s {
        "bottom-center" => EdgeLocator::BottomCenter,
        "top-center" => EdgeLocator::TopCenter,
        "left-center" => EdgeLocator::LeftCenter,
        "right-center" => EdgeLocator::RightCenter,
        other => {
            let (side, idx) = other
                .split_once(':')
                .with_context(|| format!("bad edge locator '{other}'"))?;
            let k: i32 = idx.parse().context("edge locator index")?;
            match side {
                "bottom" => EdgeLocator::Bottom(k),
                "top" => EdgeLocator::Top(k),
                "left" => EdgeLocator::Left(k),
                "right" => EdgeLocator::Right(k),
                _ => bail!("bad edge locator side '{side}'"),
            }
        }
    };
    Ok(loc)
}

/// Fraction of the bottom/top width where the source mark of a locator sits;
/// used to place marks on simulation rectangles of other resolutions.
pub fn locator_fraction(s: &str, cols: usize) -> Result<f64> {
    let loc = parse_locator(s)?;
    let frac = |i: i32| i as f64 / (cols as f64 + 1.0);
    Ok(match loc {
        EdgeLocator::BottomCenter | EdgeLocator::TopCenter => 0.5,
        EdgeLocator::Bottom(i) | EdgeLocator::Top(i) => frac(i),
        _ => bail!("only bottom/top marks are supported here"),
    })
}

/// JSON domain file: `{mesh, interior: [[i,j],..], a: [[i,j],[i,j]],
/// b: [[i,j],[i,j]], origin: [i,j]}` with boundary edges as `[outer, inner]`.
#[derive(Debug, Deserialize, Serialize)]
struct DomainFile {
    mesh: f64,
    interior: Vec<[i32; 2]>,
    a: [[i32; 2]; 2],
    b: [[i32; 2]; 2],
    origin: [i32; 2],
}

pub fn read_domain_file(path: &Path) -> Result<GridDomain> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading domain file {}", path.display()))?;
    let df: DomainFile = serde_json::from_str(&text).context("parsing domain JSON")?;
    let cells: Vec<(i32, i32)> = df.interior.iter().map(|v| (v[0], v[1])).collect();
    let edge = |e: [[i32; 2]; 2]| BoundaryEdge {
        outer: (e[0][0], e[0][1]),
        inner: (e[1][0], e[1][1]),
    };
    Ok(GridDomain::from_cells(
        df.mesh,
        &cells,
        edge(df.a),
        edge(df.b),
        (df.origin[0], df.origin[1]),
    )?)
}

pub fn write_domain_file(path: &Path, dom: &GridDomain) -> Result<()> {
    let df = DomainFile {
        mesh: dom.mesh(),
        interior: dom.interior().iter().map(|&(i, j)| [i, j]).collect(),
        a: [
            [dom.a_edge().outer.0, dom.a_edge().outer.1],
            [dom.a_edge().inner.0, dom.a_edge().inner.1],
        ],
        b: [
            [dom.b_edge().outer.0, dom.b_edge().outer.1],
            [dom.b_edge().inner.0, dom.b_edge().inner.1],
        ],
        origin: [dom.origin().0, dom.origin().1],
    };
    std::fs::write(path, serde_json::to_string_pretty(&df)?)?;
    Ok(())
}

/// Stock configuration used when no file is given.
pub fn default_config() -> ExperimentConfig {
    ExperimentConfig {
        domain: DomainSpec::SquareFamily {
            a: default_bottom_center(),
            b: default_top_center(),
        },
        experiment: ExperimentSection {
            mesh_sizes: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            masses: vec![0.0, 1.43],
            samples: 2000,
            seed: 7,
            stop_radius: 0.08,
            t_grid: vec![0.25, 0.5, 1.0],
            densities: false,
        },
        sim: SimSection::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrip_and_hash_stability() {
        let cfg = default_config();
        cfg.validate().unwrap();
        let h1 = cfg.hash();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.hash(), h1);
    }

    #[test]
    fn family_domains_are_symmetric() {
        let cfg = default_config();
        let doms = cfg.domains().unwrap();
        assert_eq!(doms.len(), 3);
        assert_eq!(doms[0].len(), 15 * 15);
        assert_eq!(doms[2].len(), 63 * 63);
        // center column marks
        let d = &doms[2];
        assert_eq!(d.a_edge().inner, (32, 1));
        assert_eq!(d.b_edge().inner, (32, 63));
    }

    #[test]
    fn locator_parsing() {
        assert!(parse_locator("bottom-center").is_ok());
        assert!(parse_locator("top:12").is_ok());
        assert!(parse_locator("sideways:1").is_err());
    }
}
