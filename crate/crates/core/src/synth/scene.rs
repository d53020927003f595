//! Scene files: pipes plus scan stations, stored as JSON.

use serde::{Deserialize, Serialize};

use super::scan::ScanStation;
use super::PipeSpec;
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};

/// Generator-side classification, used to split aggregate metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipeKind {
    #[default]
    Straight,
    Bend,
    Complex,
}

impl PipeKind {
    pub fn is_bend(self) -> bool {
        self == PipeKind::Bend
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePipe {
    pub id: String,
    pub spec: PipeSpec,
    pub kind: PipeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub pipes: Vec<ScenePipe>,
    pub stations: Vec<ScanStation>,
    /// Standard deviation of isotropic Gaussian jitter added to scan points.
    pub jitter_sigma: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipeDto {
    id: String,
    control_points: Vec<[f64; 3]>,
    tangents: Vec<[f64; 3]>,
    radius: f64,
    #[serde(default)]
    kind: PipeKind,
}

fn default_yaw() -> f64 {
    10.0
}
fn default_resolution() -> [usize; 2] {
    [256, 192]
}
fn default_vfov() -> f64 {
    super::scan::DEFAULT_VFOV_DEG
}
fn default_range() -> f64 {
    super::scan::DEFAULT_MAX_RANGE
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StationDto {
    position: [f64; 3],
    #[serde(default = "default_yaw")]
    yaw_step_deg: f64,
    #[serde(default = "default_resolution")]
    resolution: [usize; 2],
    #[serde(default = "default_vfov")]
    vfov_deg: f64,
    #[serde(default = "default_range")]
    max_range: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDto {
    pipes: Vec<PipeDto>,
    stations: Vec<StationDto>,
    #[serde(default)]
    jitter_sigma: f64,
}

fn p3(v: [f64; 3]) -> Point3 {
    Point3::new(v[0], v[1], v[2])
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Self> {
        let dto: SceneDto = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        let mut pipes = Vec::with_capacity(dto.pipes.len());
        for (i, p) in dto.pipes.into_iter().enumerate() {
            let spec = PipeSpec::new(
                p.control_points.into_iter().map(p3).collect(),
                p.tangents.into_iter().map(|t| Vec3::new(t[0], t[1], t[2])).collect(),
                p.radius,
            )
            .map_err(|e| Error::InvalidInput(format!("pipes[{i}] ({}): {e}", p.id)))?;
            pipes.push(ScenePipe {
                id: p.id,
                spec,
                kind: p.kind,
            });
        }
        let mut seen = std::collections::HashSet::new();
        for p in &pipes {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate pipe id {:?}", p.id)));
            }
        }
        let mut stations = Vec::with_capacity(dto.stations.len());
        for (i, s) in dto.stations.into_iter().enumerate() {
            let st = ScanStation::new(p3(s.position), s.yaw_step_deg, s.resolution, s.vfov_deg)
                .and_then(|st| st.with_max_range(s.max_range))
                .map_err(|e| Error::InvalidInput(format!("stations[{i}]: {e}")))?;
            stations.push(st);
        }
        if !(dto.jitter_sigma >= 0.0) {
            return Err(Error::InvalidInput("jitter_sigma must be >= 0".into()));
        }
        Ok(Self {
            pipes,
            stations,
            jitter_sigma: dto.jitter_sigma,
        })
    }

    pub fn to_json(&self) -> String {
        let dto = SceneDto {
            pipes: self
                .pipes
                .iter()
                .map(|p| PipeDto {
                    id: p.id.clone(),
                    control_points: p.spec.control_points().iter().map(|c| [c.x, c.y, c.z]).collect(),
                    tangents: p.spec.tangents().iter().map(|t| [t.x, t.y, t.z]).collect(),
                    radius: p.spec.outer_radius(),
                    kind: p.kind,
                })
                .collect(),
            stations: self
                .stations
                .iter()
                .map(|s| StationDto {
                    position: [s.position.x, s.position.y, s.position.z],
                    yaw_step_deg: s.yaw_step_deg,
                    resolution: s.resolution,
                    vfov_deg: s.vfov_deg,
                    max_range: s.max_range,
                })
                .collect(),
            jitter_sigma: self.jitter_sigma,
        };
        serde_json::to_string_pretty(&dto).expect("scene serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_scene_and_round_trips() {
        let text = r#"{
            "pipes": [
                {"id": "a", "control_points": [[0,0,0],[1,0,0]], "tangents": [[1,0,0],[1,0,0]], "radius": 0.1},
                {"id": "b", "control_points": [[0,1,0],[1,1,0]], "tangents": [[1,0,0],[1,0,0]], "radius": 0.05, "kind": "bend"}
            ],
            "stations": [{"position": [0.5, -2, 0]}]
        }"#;
        let scene = Scene::from_json(text).unwrap();
        assert_eq!(scene.pipes.len(), 2);
        assert_eq!(scene.pipes[1].kind, PipeKind::Bend);
        assert_eq!(scene.stations[0].resolution, [256, 192]);
        let again = Scene::from_json(&scene.to_json()).unwrap();
        assert_eq!(again, scene);
    }

    #[test]
    fn malformed_scene_reports_location() {
        let err = Scene::from_json("{\n \"pipes\": [\n  {\"id\": 3}\n ]}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

        let bad_radius = r#"{"pipes": [{"id": "x", "control_points": [[0,0,0],[1,0,0]],
            "tangents": [[1,0,0],[1,0,0]], "radius": -1}], "stations": []}"#;
        let err = Scene::from_json(bad_radius).unwrap_err().to_string();
        assert!(err.contains("pipes[0]") && err.contains("radius"), "{err}");
    }
}
