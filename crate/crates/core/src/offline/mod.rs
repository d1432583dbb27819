//! Offline stage: archetype library, port and bubble training, projections.

pub mod archetype;
pub mod io;
pub mod library;
pub mod pod;
pub mod training;

pub use archetype::{
    bridge_library_spec, build_archetype, ArchetypeComponent, ArchetypeSpec, GeometryKind, LibrarySpec, LoadBox,
    MaterialBox, ReferencePortSpec,
};
pub use io::{load_library, save_library};
pub use library::{
    lifting_variants, precompute_projections, train_library, ArchetypeTraining, ColumnLayout, ComponentProjections,
    LiftingVariant, TrainedLibrary, TrainingMeta, VariantData,
};
pub use pod::{pod, InnerProduct, PodResult, PodTarget};
pub use training::{
    build_inhomogeneity_bubbles, build_lifting_bubbles, mirror_trace, reference_liftings, train_port_space,
    BubbleKind, BubbleSpace, PortSpace, TrainingConfig, TrainingContext,
};
