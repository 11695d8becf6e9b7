use crate::geometry::Vec3;

/// Errors produced by grid fitting, tokenization, codecs and sampling.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The structure would need a deeper tree than allowed.
    #[error("structure extent {extent:.3} does not fit within {max_levels} levels (leaf {c_leaf:.3})")]
    TooLarge {
        extent: f64,
        c_leaf: f64,
        max_levels: u32,
    },

    #[error("point ({}, {}, {}) lies outside the root cell", .point.x, .point.y, .point.z)]
    OutOfBounds { point: Vec3 },

    /// Two sites fell into the same leaf cell. Reported indices refer to the
    /// frame's site order.
    #[error("sites {first} and {second} collide in leaf cell ({}, {}, {})", .cell[0], .cell[1], .cell[2])]
    LeafCollision {
        cell: [u32; 3],
        first: usize,
        second: usize,
    },

    /// Subtree code 0 would describe a parent without occupied children.
    #[error("subtree code 0 is not a valid occupancy mask")]
    InvalidCode,

    #[error("sequence already contains mask tokens")]
    AlreadyExpanded,

    #[error("malformed sequence at token {index}: {reason}")]
    MalformedSequence { index: usize, reason: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn malformed(index: usize, reason: impl Into<String>) -> Self {
        Error::MalformedSequence {
            index,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
