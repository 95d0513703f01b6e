//! Physically grounded near-field CSI synthesis under irregular packet
//! arrivals.

mod domination;
mod physics;
mod population;
mod radio;
mod scene;
mod synth;
mod traffic;
mod trajectory;

pub use domination::{conjugate_phase_variance, domination_table, row_scene, DominationRow};
pub use physics::{
    channel_variation_power, domination_ratio, subject_reflection, variation_terms, PowerMode,
};
pub use population::{
    environments, generate_population, sample_scene, subject_profiles, Environment,
    PopulationConfig, SubjectProfile, SEAT_SPACING_M, UE_OFFSET_M,
};
pub use radio::{RadioConfig, SPEED_OF_LIGHT};
pub use scene::{array_cosine, distance, DomainShift, Point, Scene, StaticPath, SubjectSpec, UserEquipment};
pub use synth::{subject_term, synthesize_csi, synthesize_link, CsiSample};
pub use traffic::{sample_packet_times, TrafficParams};
pub use trajectory::{ActivityClass, ActivityTrajectory, N_CLASSES};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}
