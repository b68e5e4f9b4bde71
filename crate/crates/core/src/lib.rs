//! Control stack and deterministic simulator for a differential-drive
//! standing-support mobility robot.

pub mod bridge;
pub mod drive;
pub mod kinematics;
pub mod navigation;
pub mod protocol;
pub mod scenario;
pub mod supervisor;
pub mod system;
pub mod world;
