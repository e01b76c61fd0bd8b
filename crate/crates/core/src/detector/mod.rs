//! Detector layout, ToT calibration and the pixel response model shared by
//! the simulator and the processing pipeline.

mod calibration;
mod layout;
mod response;

pub use calibration::{PixelCalibration, ToTCalibration, FWHM_PER_SIGMA};
pub use layout::{apply_hot_mask, Arm, DetectorLayout, CHIP_SIZE, LOGICAL_SIZE, PHYSICAL_SLOTS};
pub use response::{sharing_weights, synthesize_hits, Deposit, ResponseModel, TimingModel};
mod spec;
pub use spec::DetectorSpec;
