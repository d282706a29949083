//! Calibration-network container: stations, object primitives,
//! observations, and the structured-text interchange format.

use geometry_core::{
    fit_rigid_transform, spherical_to_cartesian, CardanRotation, Plane, Point3,
    SphericalObservation, UnitQuaternion, Vec3,
};
use nalgebra::Matrix3xX;

use crate::aps::{ApSelection, ApSet, ScannerArchitecture};
use crate::stochastic::{LevellingPseudoObs, TlsStochasticModel};
use crate::{Result, TlsError};

/// One scanner setup: six exterior-orientation unknowns plus optional
/// direct observations of the orientation angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationSetup {
    /// Station position in the object frame (m); initial value before
    /// adjustment, estimate afterwards.
    pub position: Vec3,
    /// Orientation angles (object→scanner); initial value/estimate.
    pub rotation: CardanRotation,
    /// Levelling / heading pseudo-observations for this station.
    pub levelling: LevellingPseudoObs,
}

/// Which object primitive an observation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimitiveId {
    /// Index into [`CalibrationNetwork::targets`].
    Target(usize),
    /// Index into [`CalibrationNetwork::planes`].
    Plane(usize),
}

/// One raw scanner observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlsObservation {
    /// Index into [`CalibrationNetwork::stations`].
    pub station: usize,
    /// Observed primitive.
    pub primitive: PrimitiveId,
    /// Raw polar measurement.
    pub obs: SphericalObservation,
    /// Incidence angle β (rad) used for range weighting. For plane
    /// observations this is a starting value; the adjustment refreshes it
    /// from the current plane estimate each iteration.
    pub beta: f64,
}

/// Complete input to one self-calibration adjustment.
#[derive(Debug, Clone)]
pub struct CalibrationNetwork {
    /// Scanner architecture (selects the collimation-term form).
    pub architecture: ScannerArchitecture,
    /// Scanner setups; observation `station` indexes into this.
    pub stations: Vec<StationSetup>,
    /// Signalized target coordinates (point-based mode).
    pub targets: Vec<Point3>,
    /// Planar features (plane-based mode).
    pub planes: Vec<Plane>,
    /// All raw observations.
    pub observations: Vec<TlsObservation>,
    /// A-priori precisions.
    pub stochastic: TlsStochasticModel,
    /// Which APs to estimate.
    pub selection: ApSelection,
    /// Starting AP values (normally zero) and the fixed cyclic unit length.
    pub initial_aps: ApSet,
}

impl CalibrationNetwork {
    /// Structural checks common to both modes.
    fn validate_common(&self) -> Result<()> {
        for (i, st) in self.stations.iter().enumerate() {
            st.levelling.validate().map_err(|e| TlsError::InvalidNetwork {
                reason: format!("station {i}: {e}"),
            })?;
        }
        for (i, o) in self.observations.iter().enumerate() {
            if o.station >= self.stations.len() {
                return Err(TlsError::InvalidNetwork {
                    reason: format!("observation {i} references station {}", o.station),
                });
            }
            let in_range = match o.primitive {
                PrimitiveId::Target(t) => t < self.targets.len(),
                PrimitiveId::Plane(p) => p < self.planes.len(),
            };
            if !in_range {
                return Err(TlsError::InvalidNetwork {
                    reason: format!("observation {i} references a missing primitive"),
                });
            }
            if !(0.0..self.stochastic.beta_max).contains(&o.beta) {
                return Err(TlsError::InvalidNetwork {
                    reason: format!(
                        "observation {i} incidence {:.1}° outside [0, β_max)",
                        o.beta.to_degrees()
                    ),
                });
            }
        }
        if self.initial_aps.range.u <= 0.0 {
            return Err(TlsError::InvalidNetwork {
                reason: "cyclic unit length must be positive".into(),
            });
        }
        Ok(())
    }

    /// Point-based prerequisites: ≥2 stations, target observations only,
    /// no repeated (station, target) pair.
    pub fn validate_point_based(&self) -> Result<()> {
        self.validate_common()?;
        if self.stations.len() < 2 {
            return Err(TlsError::InvalidNetwork {
                reason: "point-based calibration needs at least two stations".into(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for (i, o) in self.observations.iter().enumerate() {
            match o.primitive {
                PrimitiveId::Target(t) => {
                    if !seen.insert((o.station, t)) {
                        return Err(TlsError::InvalidNetwork {
                            reason: format!(
                                "station {} observes target {} more than once (observation {i})",
                                o.station, t
                            ),
                        });
                    }
                }
                PrimitiveId::Plane(_) => {
                    return Err(TlsError::InvalidNetwork {
                        reason: format!("observation {i} is a plane hit in point-based mode"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Plane-based prerequisites: ≥3 planes whose normals span all three
    /// directions, plane observations only.
    pub fn validate_plane_based(&self) -> Result<()> {
        self.validate_common()?;
        if self.planes.len() < 3 {
            return Err(TlsError::InvalidNetwork {
                reason: "plane-based calibration needs at least three planes".into(),
            });
        }
        let mut normals = Matrix3xX::<f64>::zeros(self.planes.len());
        for (j, p) in self.planes.iter().enumerate() {
            normals.set_column(j, &p.normal);
        }
        let svd = normals.svd(false, false);
        let smin = svd.singular_values.min();
        let smax = svd.singular_values.max();
        if smin < 1e-6 * smax {
            return Err(TlsError::InvalidNetwork {
                reason: "plane normals do not span three directions".into(),
            });
        }
        for (i, o) in self.observations.iter().enumerate() {
            if matches!(o.primitive, PrimitiveId::Target(_)) {
                return Err(TlsError::InvalidNetwork {
                    reason: format!("observation {i} is a target hit in plane-based mode"),
                });
            }
        }
        Ok(())
    }

    /// Closed-form initial orientation of one station from ≥3 of its target
    /// observations (ranges/angles mapped to local Cartesian, registered
    /// onto the current target coordinates).
    pub fn initialize_station(&self, station: usize) -> Result<StationSetup> {
        let mut pairs = Vec::new();
        for o in &self.observations {
            if o.station != station {
                continue;
            }
            if let PrimitiveId::Target(t) = o.primitive {
                pairs.push((self.targets[t], spherical_to_cartesian(&o.obs)));
            }
        }
        let fit = fit_rigid_transform(&pairs).map_err(|e| TlsError::InvalidNetwork {
            reason: format!("station {station} initialization: {e}"),
        })?;
        Ok(StationSetup {
            position: fit.origin,
            rotation: fit.rotation.to_cardan(),
            levelling: self.stations[station].levelling,
        })
    }

    /// Serializes the network to the structured text format (sections:
    /// options, stations, targets, planes, observations; SI units).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# scanner self-calibration network\n[options]\n");
        s.push_str(&format!(
            "architecture = {}\n",
            match self.architecture {
                ScannerArchitecture::Panoramic => "panoramic",
                ScannerArchitecture::Hybrid => "hybrid",
            }
        ));
        s.push_str(&format!("sigma_rho0 = {:e}\n", self.stochastic.sigma_rho0));
        s.push_str(&format!("sigma_theta = {:e}\n", self.stochastic.sigma_theta));
        s.push_str(&format!("sigma_alpha = {:e}\n", self.stochastic.sigma_alpha));
        s.push_str(&format!("beta_max = {:e}\n", self.stochastic.beta_max));
        s.push_str(&format!("u_cyclic = {:e}\n", self.initial_aps.range.u));
        s.push_str(&format!("ap_select = {}\n", self.selection.names().join(" ")));
        s.push_str("\n[stations]\n");
        for st in &self.stations {
            s.push_str(&format!(
                "{:e} {:e} {:e} {:e} {:e} {:e}",
                st.position.x,
                st.position.y,
                st.position.z,
                st.rotation.omega,
                st.rotation.phi,
                st.rotation.kappa
            ));
            for (tag, comp) in [
                ("omega", st.levelling.omega),
                ("phi", st.levelling.phi),
                ("kappa", st.levelling.kappa),
            ] {
                if let Some((val, sig)) = comp {
                    s.push_str(&format!(" {tag} {val:e} {sig:e}"));
                }
            }
            s.push('\n');
        }
        s.push_str("\n[targets]\n");
        for t in &self.targets {
            s.push_str(&format!("{:e} {:e} {:e}\n", t.x, t.y, t.z));
        }
        s.push_str("\n[planes]\n");
        for p in &self.planes {
            s.push_str(&format!(
                "{:e} {:e} {:e} {:e}\n",
                p.normal.x, p.normal.y, p.normal.z, p.d
            ));
        }
        s.push_str("\n[observations]\n");
        for o in &self.observations {
            let (kind, prim) = match o.primitive {
                PrimitiveId::Target(t) => ('t', t),
                PrimitiveId::Plane(p) => ('p', p),
            };
            s.push_str(&format!(
                "{kind} {} {prim} {:e} {:e} {:e} {:e}\n",
                o.station, o.obs.rho, o.obs.theta, o.obs.alpha, o.beta
            ));
        }
        s
    }

    /// Parses the structured text format written by [`Self::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut net = CalibrationNetwork {
            architecture: ScannerArchitecture::Panoramic,
            stations: Vec::new(),
            targets: Vec::new(),
            planes: Vec::new(),
            observations: Vec::new(),
            stochastic: TlsStochasticModel::default(),
            selection: ApSelection::none(),
            initial_aps: ApSet::default(),
        };
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let err = |reason: String| TlsError::Parse {
                line: lineno + 1,
                reason,
            };
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].to_string();
                continue;
            }
            match section.as_str() {
                "options" => {
                    let (key, value) = line
                        .split_once('=')
                        .ok_or_else(|| err("expected key = value".into()))?;
                    let (key, value) = (key.trim(), value.trim());
                    let parse = |v: &str| {
                        v.parse::<f64>()
                            .map_err(|_| err(format!("bad number {v:?}")))
                    };
                    match key {
                        "architecture" => {
                            net.architecture = match value {
                                "panoramic" => ScannerArchitecture::Panoramic,
                                "hybrid" => ScannerArchitecture::Hybrid,
                                other => {
                                    return Err(err(format!("unknown architecture {other:?}")))
                                }
                            }
                        }
                        "sigma_rho0" => net.stochastic.sigma_rho0 = parse(value)?,
                        "sigma_theta" => net.stochastic.sigma_theta = parse(value)?,
                        "sigma_alpha" => net.stochastic.sigma_alpha = parse(value)?,
                        "beta_max" => net.stochastic.beta_max = parse(value)?,
                        "u_cyclic" => net.initial_aps.range.u = parse(value)?,
                        "ap_select" => {
                            net.selection = ApSelection::from_names(value.split_whitespace())
                                .map_err(|e| err(e.to_string()))?
                        }
                        other => return Err(err(format!("unknown option {other:?}"))),
                    }
                }
                "stations" => {
                    let fields: Vec<&str> = line.split_whitespace().collect();
                    if fields.len() < 6 {
                        return Err(err("station needs x y z omega phi kappa".into()));
                    }
                    let nums: Vec<f64> = fields[..6]
                        .iter()
                        .map(|v| v.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err("bad station number".into()))?;
                    let mut levelling = LevellingPseudoObs::default();
                    let mut rest = fields[6..].iter();
                    while let Some(tag) = rest.next() {
                        let val: f64 = rest
                            .next()
                            .and_then(|v| v.parse().ok())
                            .ok_or_else(|| err(format!("missing value after {tag}")))?;
                        let sig: f64 = rest
                            .next()
                            .and_then(|v| v.parse().ok())
                            .ok_or_else(|| err(format!("missing sigma after {tag}")))?;
                        match *tag {
                            "omega" => levelling.omega = Some((val, sig)),
                            "phi" => levelling.phi = Some((val, sig)),
                            "kappa" => levelling.kappa = Some((val, sig)),
                            other => return Err(err(format!("unknown levelling tag {other:?}"))),
                        }
                    }
                    net.stations.push(StationSetup {
                        position: Vec3::new(nums[0], nums[1], nums[2]),
                        rotation: CardanRotation::new(nums[3], nums[4], nums[5]),
                        levelling,
                    });
                }
                "targets" => {
                    let nums: Vec<f64> = line
                        .split_whitespace()
                        .map(|v| v.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err("bad target number".into()))?;
                    if nums.len() != 3 {
                        return Err(err("target needs x y z".into()));
                    }
                    net.targets.push(Point3::new(nums[0], nums[1], nums[2]));
                }
                "planes" => {
                    let nums: Vec<f64> = line
                        .split_whitespace()
                        .map(|v| v.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err("bad plane number".into()))?;
                    if nums.len() != 4 {
                        return Err(err("plane needs nx ny nz d".into()));
                    }
                    let plane = Plane::new(Vec3::new(nums[0], nums[1], nums[2]), nums[3])
                        .map_err(|e| err(e.to_string()))?;
                    net.planes.push(plane);
                }
                "observations" => {
                    let fields: Vec<&str> = line.split_whitespace().collect();
                    if fields.len() < 6 {
                        return Err(err(
                            "observation needs kind station primitive rho theta alpha [beta]"
                                .into(),
                        ));
                    }
                    let station: usize = fields[1]
                        .parse()
                        .map_err(|_| err("bad station index".into()))?;
                    let prim: usize = fields[2]
                        .parse()
                        .map_err(|_| err("bad primitive index".into()))?;
                    let primitive = match fields[0] {
                        "t" => PrimitiveId::Target(prim),
                        "p" => PrimitiveId::Plane(prim),
                        other => return Err(err(format!("unknown observation kind {other:?}"))),
                    };
                    let nums: Vec<f64> = fields[3..]
                        .iter()
                        .map(|v| v.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err("bad observation number".into()))?;
                    let obs = SphericalObservation::new(nums[0], nums[1], nums[2])
                        .map_err(|e| err(e.to_string()))?;
                    net.observations.push(TlsObservation {
                        station,
                        primitive,
                        obs,
                        beta: nums.get(3).copied().unwrap_or(0.0),
                    });
                }
                other => {
                    return Err(err(format!("content outside a known section ({other:?})")))
                }
            }
        }
        Ok(net)
    }
}

/// Attitude of a station as a world→local quaternion (adjustments carry
/// Cardan angles; filters want quaternions).
pub fn station_rotation(st: &StationSetup) -> UnitQuaternion {
    st.rotation.to_quaternion()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_network() -> CalibrationNetwork {
        CalibrationNetwork {
            architecture: ScannerArchitecture::Hybrid,
            stations: vec![
                StationSetup {
                    position: Vec3::new(1.0, 2.0, 1.5),
                    rotation: CardanRotation::new(0.0, 0.0, 0.3),
                    levelling: LevellingPseudoObs::level(1e-5, 3e-4),
                },
                StationSetup {
                    position: Vec3::new(4.0, 2.0, 1.5),
                    rotation: CardanRotation::new(0.0, 0.0, -0.8),
                    levelling: LevellingPseudoObs::default(),
                },
            ],
            targets: vec![Point3::new(0.0, 5.0, 2.0), Point3::new(3.0, 6.0, 0.5)],
            planes: vec![],
            observations: vec![TlsObservation {
                station: 0,
                primitive: PrimitiveId::Target(1),
                obs: SphericalObservation::new(4.2, 1.1, -0.2).unwrap(),
                beta: 0.3,
            }],
            stochastic: TlsStochasticModel::default(),
            selection: ApSelection::from_names(["A0", "B6", "C0"]).unwrap(),
            initial_aps: ApSet::default(),
        }
    }

    #[test]
    fn text_round_trip_preserves_everything() {
        let net = tiny_network();
        let text = net.to_text();
        let back = CalibrationNetwork::from_text(&text).unwrap();
        assert_eq!(back.stations.len(), 2);
        assert_relative_eq!(back.stations[0].position.x, 1.0);
        assert_eq!(back.stations[0].levelling.kappa, Some((0.0, 3e-4)));
        assert_eq!(back.stations[1].levelling, LevellingPseudoObs::default());
        assert_eq!(back.targets.len(), 2);
        assert_eq!(back.observations.len(), 1);
        assert_relative_eq!(back.observations[0].obs.rho, 4.2);
        assert_relative_eq!(back.observations[0].beta, 0.3);
        assert_eq!(back.selection.names(), ["A0", "B6", "C0"]);
        assert_eq!(back.architecture, ScannerArchitecture::Hybrid);
    }

    #[test]
    fn validation_catches_bad_references() {
        let mut net = tiny_network();
        net.observations[0].station = 7;
        assert!(net.validate_point_based().is_err());

        let mut net = tiny_network();
        net.observations[0].primitive = PrimitiveId::Target(9);
        assert!(net.validate_point_based().is_err());

        let mut net = tiny_network();
        net.observations.push(net.observations[0]);
        assert!(net.validate_point_based().is_err(), "duplicate pair");
    }

    #[test]
    fn plane_mode_needs_spanning_normals() {
        let mut net = tiny_network();
        net.observations.clear();
        net.planes = vec![
            Plane::new(Vec3::new(1.0, 0.0, 0.0), 1.0).unwrap(),
            Plane::new(Vec3::new(0.0, 1.0, 0.0), 1.0).unwrap(),
            Plane::new(Vec3::new(1.0, 1.0, 0.0), 2.0).unwrap(),
        ];
        assert!(net.validate_plane_based().is_err());
        net.planes[2] = Plane::new(Vec3::new(0.0, 0.0, 1.0), 3.0).unwrap();
        assert!(net.validate_plane_based().is_ok());
    }

    #[test]
    fn station_initialization_from_observations() {
        // Build exact observations of 4 targets from a known station.
        let truth = StationSetup {
            position: Vec3::new(2.0, 1.0, 1.6),
            rotation: CardanRotation::new(0.01, -0.02, 0.9),
            levelling: LevellingPseudoObs::default(),
        };
        let targets = vec![
            Point3::new(0.0, 5.0, 0.5),
            Point3::new(6.0, 4.0, 2.5),
            Point3::new(3.0, -2.0, 1.0),
            Point3::new(-1.0, 1.0, 3.0),
        ];
        let m = truth.rotation.matrix();
        let mut net = tiny_network();
        net.targets = targets.clone();
        net.stations[0] = StationSetup {
            position: Vec3::zeros(),
            rotation: CardanRotation::identity(),
            levelling: LevellingPseudoObs::default(),
        };
        net.observations = targets
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let local = m * (t.coords - truth.position);
                TlsObservation {
                    station: 0,
                    primitive: PrimitiveId::Target(j),
                    obs: geometry_core::cartesian_to_spherical(&Point3::from(local)).unwrap(),
                    beta: 0.0,
                }
            })
            .collect();
        let init = net.initialize_station(0).unwrap();
        assert_relative_eq!(init.position, truth.position, epsilon = 1e-10);
        assert_relative_eq!(init.rotation.kappa, truth.rotation.kappa, epsilon = 1e-10);
    }
}
