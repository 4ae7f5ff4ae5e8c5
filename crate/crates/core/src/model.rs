//! Domain types shared by every stage of the pipeline.
//!
//! Frames are integer indices at `TimeBase::hz`. Scene files carry absolute
//! frame indices; trajectories handed to the forecaster are re-indexed so
//! that the inference frame is 0 and the past is negative.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn yaw_normalize(angle: f64) -> Result<f64> {
    if !angle.is_finite() {
        return Err(Error::NonFinite("yaw"));
    }
    Ok(wrap_angle(angle))
}

/// Infallible variant for values already known to be finite.
pub(crate) fn wrap_angle(angle: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut a = angle % two_pi;
    if a <= -PI {
        a += two_pi;
    } else if a > PI {
        a -= two_pi;
    }
    a
}

/// Oriented 3D box: center, extent and heading about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

impl Box3D {
    pub fn new(
        center: [f64; 3],
        dims: [f64; 3],
        yaw: f64,
    ) -> Result<Self> {
        let b = Box3D {
            cx: center[0],
            cy: center[1],
            cz: center[2],
            length: dims[0],
            width: dims[1],
            height: dims[2],
            yaw: yaw_normalize(yaw)?,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.cx,
            self.cy,
            self.cz,
            self.length,
            self.width,
            self.height,
            self.yaw,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("box component"));
        }
        if self.length <= 0.0 || self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "non-positive dimensions {}x{}x{}",
                self.length, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn center_xy(&self) -> [f64; 2] {
        [self.cx, self.cy]
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    /// Ground-plane footprint corners, counter-clockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[x, y]| [self.cx + c * x - s * y, self.cy + s * x + c * y])
    }
}

/// Planar distance between box centers. `z` is ignored.
pub fn center_distance_2d(a: &Box3D, b: &Box3D) -> f64 {
    point_distance(a.center_xy(), b.center_xy())
}

pub(crate) fn point_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

macro_rules! agent_classes {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// The 26 annotated object categories.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "SCREAMING_SNAKE_CASE")]
        pub enum AgentClass {
            $($variant),+
        }

        impl AgentClass {
            pub const ALL: [AgentClass; 26] = [$(AgentClass::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(AgentClass::$variant => $name),+
                }
            }
        }

        impl FromStr for AgentClass {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(AgentClass::$variant),)+
                    other => Err(Error::InvalidConfig(format!("unknown agent class `{other}`"))),
                }
            }
        }
    };
}

agent_classes! {
    RegularVehicle => "REGULAR_VEHICLE",
    Pedestrian => "PEDESTRIAN",
    Bicyclist => "BICYCLIST",
    Motorcyclist => "MOTORCYCLIST",
    WheeledRider => "WHEELED_RIDER",
    Bollard => "BOLLARD",
    ConstructionCone => "CONSTRUCTION_CONE",
    Sign => "SIGN",
    ConstructionBarrel => "CONSTRUCTION_BARREL",
    StopSign => "STOP_SIGN",
    MobilePedestrianCrossingSign => "MOBILE_PEDESTRIAN_CROSSING_SIGN",
    LargeVehicle => "LARGE_VEHICLE",
    Bus => "BUS",
    BoxTruck => "BOX_TRUCK",
    Truck => "TRUCK",
    VehicularTrailer => "VEHICULAR_TRAILER",
    TruckCab => "TRUCK_CAB",
    SchoolBus => "SCHOOL_BUS",
    ArticulatedBus => "ARTICULATED_BUS",
    MessageBoardTrailer => "MESSAGE_BOARD_TRAILER",
    Bicycle => "BICYCLE",
    Motorcycle => "MOTORCYCLE",
    WheeledDevice => "WHEELED_DEVICE",
    Wheelchair => "WHEELCHAIR",
    Stroller => "STROLLER",
    Dog => "DOG",
}

impl AgentClass {
    /// Categories that never move; forecasts for them collapse to a single
    /// stationary mode.
    pub fn is_always_static(self) -> bool {
        matches!(
            self,
            AgentClass::Bollard
                | AgentClass::ConstructionCone
                | AgentClass::ConstructionBarrel
                | AgentClass::Sign
                | AgentClass::MobilePedestrianCrossingSign
                | AgentClass::MessageBoardTrailer
        )
    }

    /// Typical (length, width, height) in meters.
    pub fn typical_dims(self) -> [f64; 3] {
        use AgentClass::*;
        match self {
            RegularVehicle => [4.6, 1.9, 1.6],
            Pedestrian => [0.7, 0.7, 1.7],
            Bicyclist => [1.8, 0.7, 1.7],
            Motorcyclist => [2.1, 0.8, 1.6],
            WheeledRider => [1.2, 0.6, 1.7],
            Bollard => [0.3, 0.3, 1.0],
            ConstructionCone => [0.4, 0.4, 0.7],
            Sign => [0.5, 0.3, 2.0],
            ConstructionBarrel => [0.6, 0.6, 1.0],
            StopSign => [0.6, 0.3, 2.2],
            MobilePedestrianCrossingSign => [0.6, 0.4, 1.0],
            LargeVehicle => [7.0, 2.5, 3.0],
            Bus => [12.0, 2.6, 3.2],
            BoxTruck => [7.0, 2.4, 3.0],
            Truck => [7.5, 2.5, 3.2],
            VehicularTrailer => [6.0, 2.4, 2.5],
            TruckCab => [5.0, 2.5, 3.2],
            SchoolBus => [11.0, 2.5, 3.2],
            ArticulatedBus => [18.0, 2.6, 3.2],
            MessageBoardTrailer => [2.5, 1.8, 2.5],
            Bicycle => [1.7, 0.6, 1.2],
            Motorcycle => [2.1, 0.8, 1.3],
            WheeledDevice => [1.0, 0.5, 1.2],
            Wheelchair => [1.1, 0.7, 1.3],
            Stroller => [1.0, 0.6, 1.1],
            Dog => [0.9, 0.4, 0.6],
        }
    }

    /// Upper bound on plausible speed in m/s. Zero means the class is never
    /// simulated as moving.
    pub fn max_speed(self) -> f64 {
        use AgentClass::*;
        match self {
            RegularVehicle => 15.0,
            Pedestrian => 2.0,
            Bicyclist | Bicycle => 7.0,
            Motorcyclist | Motorcycle => 12.0,
            WheeledRider | WheeledDevice => 4.0,
            LargeVehicle | Bus | BoxTruck | Truck | VehicularTrailer | TruckCab
            | SchoolBus | ArticulatedBus => 12.0,
            Wheelchair | Stroller => 1.5,
            Dog => 2.5,
            StopSign => 0.0,
            _ => 0.0,
        }
    }
}

impl fmt::Display for AgentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A scored, classed box observed at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: Box3D,
    pub agent_class: AgentClass,
    pub score: f64,
    pub frame: i64,
    pub source_model: Option<u32>,
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidBox(format!(
                "score {} outside [0, 1]",
                self.score
            )));
        }
        Ok(())
    }
}

/// Sampling rate and window lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeBase {
    pub hz: f64,
    pub past_window_s: f64,
    pub horizon_steps: usize,
}

impl Default for TimeBase {
    fn default() -> Self {
        TimeBase {
            hz: 10.0,
            past_window_s: 2.0,
            horizon_steps: 30,
        }
    }
}

impl TimeBase {
    pub fn validate(&self) -> Result<()> {
        if !(self.hz > 0.0) || !self.hz.is_finite() {
            return Err(Error::InvalidConfig("hz must be positive".into()));
        }
        let frames = self.past_window_s * self.hz;
        if !(frames >= 0.0) || (frames - frames.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "past_window_s * hz must be a non-negative integer".into(),
            ));
        }
        if self.horizon_steps == 0 {
            return Err(Error::InvalidConfig("horizon_steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of past frames preceding the current one.
    pub fn past_frames(&self) -> usize {
        (self.past_window_s * self.hz).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PastSample {
    pub frame: i64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub observed: bool,
}

/// Past of one agent, re-indexed so the last sample sits at frame 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PastTrajectory {
    pub agent_id: u64,
    pub agent_class: AgentClass,
    pub samples: Vec<PastSample>,
}

impl PastTrajectory {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::InvalidConfig("empty past trajectory".into()));
        }
        if self.samples.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return Err(Error::InvalidConfig(
                "past frames must be strictly increasing".into(),
            ));
        }
        if self.samples.last().map(|s| s.frame) != Some(0) {
            return Err(Error::InvalidConfig(
                "past trajectory must end at frame 0".into(),
            ));
        }
        Ok(())
    }

    /// Position at the current frame (the last sample).
    pub fn current_position(&self) -> [f64; 2] {
        let s = self.samples.last().expect("non-empty past");
        [s.x, s.y]
    }

    pub fn position_at(&self, frame: i64) -> Option<[f64; 2]> {
        self.samples
            .binary_search_by_key(&frame, |s| s.frame)
            .ok()
            .map(|i| [self.samples[i].x, self.samples[i].y])
    }
}

/// Future waypoints at frames 1..=horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FutureTrajectory(pub Vec<[f64; 2]>);

impl FutureTrajectory {
    pub fn stationary(at: [f64; 2], horizon: usize) -> Self {
        FutureTrajectory(vec![at; horizon])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn waypoints(&self) -> &[[f64; 2]] {
        &self.0
    }

    pub fn endpoint(&self) -> Option<[f64; 2]> {
        self.0.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMode {
    pub trajectory: FutureTrajectory,
    pub score: f64,
}

/// K alternative futures for one agent. Scores are not normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSet {
    pub modes: Vec<ForecastMode>,
}

impl ForecastSet {
    pub fn k(&self) -> usize {
        self.modes.len()
    }
}

/// Ground-truth agent over its whole lifespan; one sample per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtAgent {
    pub id: u64,
    pub agent_class: AgentClass,
    pub samples: Vec<(i64, Box3D)>,
}

impl GtAgent {
    pub fn first_frame(&self) -> Option<i64> {
        self.samples.first().map(|s| s.0)
    }

    pub fn last_frame(&self) -> Option<i64> {
        self.samples.last().map(|s| s.0)
    }

    pub fn box_at(&self, frame: i64) -> Option<&Box3D> {
        let first = self.first_frame()?;
        let idx = usize::try_from(frame - first).ok()?;
        self.samples
            .get(idx)
            .filter(|(f, _)| *f == frame)
            .map(|(_, b)| b)
    }

    /// Positions at `frame + 1 ..= frame + horizon`, or `None` when the agent
    /// does not live that long.
    pub fn future_from(&self, frame: i64, horizon: usize) -> Option<FutureTrajectory> {
        (1..=horizon as i64)
            .map(|k| self.box_at(frame + k).map(Box3D::center_xy))
            .collect::<Option<Vec<_>>>()
            .map(FutureTrajectory)
    }
}
