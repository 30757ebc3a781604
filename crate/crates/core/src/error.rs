use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate lattice (|det| = {0:.3e})")]
    DegenerateLattice(f64),

    #[error("coincident atoms {0} and {1}")]
    CoincidentAtoms(usize, usize),

    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("mismatched systems: {0}")]
    Mismatch(String),

    #[error("unknown element symbol '{0}'")]
    UnknownSymbol(String),

    #[error("element outside embedding table (Z = {0})")]
    ElementOutsideTable(u32),

    #[error("no covalent radius tabulated for Z = {0}")]
    MissingRadius(u32),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("bulk periodicity unsupported")]
    BulkPeriodicity,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("schedule: {0}")]
    Schedule(String),

    #[error("no recorded evaluation context")]
    NoContext,

    #[error("diverged: non-finite loss")]
    Diverged,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("oracle blow-up: non-finite energy")]
    OracleBlowUp,

    #[error("no adsorbate")]
    NoAdsorbate,

    #[error("site enumeration: {0}")]
    Sites(String),

    #[error("single-class dataset")]
    SingleClass,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
