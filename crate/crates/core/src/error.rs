use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HoroError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("resource cap exceeded: {what} would exceed {cap}")]
    ResourceCap { what: &'static str, cap: u64 },

    #[error("enumeration budget exceeded: {what} would exceed {budget}")]
    Budget { what: &'static str, budget: u64 },

    #[error("factor windows have no level satisfying the opposite-level constraint")]
    EmptyOverlap,

    #[error("unknown vertex: {0}")]
    UnknownVertex(String),

    #[error("subset selection is empty")]
    EmptySelection,

    #[error("zero volume: paired level {level} has no vertices")]
    ZeroVolume { level: i64 },

    #[error("invalid tetraeder apexes: {0}")]
    InvalidApex(String),

    #[error("factor parts are not vertex-disjoint")]
    NotDisjoint,

    #[error("invalid bridge edge: {0}")]
    InvalidBridge(String),

    #[error("invalid address: {0}")]
    InvalidAddress(String),

    #[error("level count overflow at level {level}")]
    Overflow { level: i64 },
}

pub type Result<T> = std::result::Result<T, HoroError>;
