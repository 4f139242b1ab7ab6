use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("kappa = {0} is outside (1,∞)\\ℕ")]
    ExcludedKappa(f64),
    #[error("degenerate metric: g^00 vanishes near r = {0}")]
    DegenerateMetric(f64),
    #[error("coefficient {name} violates its declared order {order}: ratio grew by {growth:.3} on doubling R")]
    OrderViolation { name: String, order: f64, growth: f64 },
    #[error("Im σ = {0} < 0 is not supported")]
    LowerHalfPlane(f64),
    #[error("divergent kernel integral: {0}")]
    DivergentIntegral(String),
    #[error("suspected resonance at σ = {re}+{im}i (pivot {pivot:e})")]
    ResonanceSuspected { re: f64, im: f64, pivot: f64 },
    #[error("grid too coarse: {ppw:.1} points per wavelength, need at least 10")]
    Resolution { ppw: f64 },
    #[error("Neumann expansion exhausted: N = {n} exceeds ⌊κ⌋+1 = {max}")]
    ExpansionExhausted { n: usize, max: usize },
    #[error("degenerate fit: condition number {0:e}")]
    FitDegenerate(f64),
    #[error("finite-difference step too large: {0}")]
    StepSize(String),
    #[error("integrand does not decay at the {0} end of the contour")]
    ContourInvalid(&'static str),
    #[error("contour passes through a pole at Im ξ = {0}")]
    PoleOnContour(f64),
    #[error("weight γ = {0} is excluded (γ + 3/2 is an integer)")]
    ExcludedWeight(f64),
    #[error("fixed-point iteration does not contract (ratio {0:.3}); perturbation amplitude too large")]
    AmplitudeTooLarge(f64),
    #[error("CFL violation: dt/dr = {0:.3}")]
    Cfl(f64),
    #[error("instability: energy grew by a factor {0:.2}")]
    Instability(f64),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("regularity: {0}")]
    Regularity(String),
    #[error("trace below noise floor ({0:e}); rerun at higher precision")]
    Underflow(f64),
    #[error("domain too small: tail carries {0:.1}% of the norm")]
    DomainTooSmall(f64),
    #[error("aliasing: slope moved by {0:.3} under grid doubling")]
    Aliasing(f64),
    #[error("rule {rule} inapplicable: {reason}")]
    RuleInapplicable { rule: String, reason: String },
    #[error("excluded parameter: {0}")]
    ExcludedParameter(String),
    #[error("rule file line {line}: {msg}")]
    RuleSyntax { line: usize, msg: String },
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
