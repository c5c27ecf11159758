use thiserror::Error;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    // Cube file parsing and writing.
    #[error("cube file truncated at line {line}: expected {expected}")]
    CubeTruncated { line: usize, expected: &'static str },
    #[error("cube file line {line}: cannot parse `{token}` as {expected}")]
    CubeToken {
        line: usize,
        token: String,
        expected: &'static str,
    },
    #[error("cube file line {line}: expected {expected} fields, found {found}")]
    CubeFieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("cube data section holds {found} values but the header implies {expected}")]
    CubeValueCount { expected: usize, found: usize },
    #[error("cube DSET line lists {count} orbital ids; exactly one field per cube is supported")]
    CubeMultiField { count: usize },
    #[error("cube file requires at least one atom record")]
    CubeNoAtoms,
    #[error("grid has {values} values but axis counts imply {expected}")]
    GridSize { values: usize, expected: usize },
    #[error("grid axis counts must all be at least 1")]
    GridCounts,
    #[error("grid axis vectors are degenerate (voxel volume is zero)")]
    GridDegenerate,

    // Molecule and subgroup configuration.
    #[error("subgroup config: {0}")]
    SubgroupConfig(String),
    #[error("atom {atom} appears in subgroups `{first}` and `{second}`")]
    SubgroupOverlap {
        atom: usize,
        first: String,
        second: String,
    },
    #[error("atom {atom} is not covered by any subgroup and no catch-all group is defined")]
    AtomUncovered { atom: usize },
    #[error("no van der Waals radius for element Z={element} and no override given")]
    UnknownRadius { element: u32 },
    #[error("atom index {atom} out of range (molecule has {count} atoms)")]
    AtomIndex { atom: usize, count: usize },

    // Charge integration.
    #[error("grid mismatch between {left} and {right}")]
    GridMismatch {
        left: &'static str,
        right: &'static str,
    },
    #[error("cannot normalize charges: {field} integrates to zero")]
    ZeroTotal { field: &'static str },

    // Transfer reconstruction.
    #[error("donor deficits ({deficit}) and acceptor surpluses ({surplus}) do not balance")]
    TransferUnbalanced { deficit: f64, surplus: f64 },
    #[error("transfer preference vector has {found} entries, expected {expected}")]
    PreferenceLength { expected: usize, found: usize },
    #[error("constraint system needs at least one donor and one acceptor")]
    EmptyBipartition,
    #[error(
        "quadratic solver exceeded {iterations} active-set changes \
         (row residual {row_residual:.3e}, column residual {col_residual:.3e})"
    )]
    SolverStalled {
        iterations: usize,
        row_residual: f64,
        col_residual: f64,
    },
    #[error("transfer matrix violates {constraint} by {violation:.3e}")]
    TransferInfeasible {
        constraint: &'static str,
        violation: f64,
    },

    // Diagram layout.
    #[error("transfer matrix entry ({row},{col}) is negative: {value}")]
    NegativeTransfer { row: usize, col: usize, value: f64 },
    #[error("diagram needs at least one subgroup with positive charge")]
    EmptyDiagram,

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
