use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Caller supplied arguments that violate an operation's precondition.
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    /// A non-finite value appeared in a forward or backward pass.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Operation is not valid in the current task/bank state.
    #[error("invalid state: {0}")]
    State(String),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Violated data-model invariant. Each variant names the invariant.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("duplicate voxel coordinate {coord:?} at index {index}")]
    DuplicateVoxel { coord: [i32; 3], index: usize },
    #[error("instance {instance} mask length {len} does not match voxel count {expected}")]
    MaskLength {
        instance: usize,
        len: usize,
        expected: usize,
    },
    #[error("instance {instance} has an empty mask")]
    EmptyMask { instance: usize },
    #[error("voxel {voxel} belongs to instances {first} and {second}")]
    OverlappingInstances {
        voxel: usize,
        first: usize,
        second: usize,
    },
    #[error("instance {instance} mask index {index} out of range for {n} voxels")]
    MaskIndexOutOfRange {
        instance: usize,
        index: usize,
        n: usize,
    },
    #[error("color channel out of [0,1] at voxel {voxel}")]
    ColorRange { voxel: usize },
    #[error("instance {instance} label {label} is not in the catalog")]
    UnknownClass { instance: usize, label: u32 },
    #[error("catalog ids must be contiguous from 1; found {found} at position {position}")]
    CatalogIds { position: usize, found: u32 },
    #[error("catalog class name {0:?} appears twice")]
    CatalogDuplicateName(String),
    #[error("split: {0}")]
    Split(String),
}

pub(crate) fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}
