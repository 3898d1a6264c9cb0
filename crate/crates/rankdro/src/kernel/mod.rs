//! In-repo solving kernel: a dense simplex LP solver and the cutting-plane
//! machinery built on it (convex minimization, concave maximization over
//! divergence balls, global piecewise-linear tail maximization, and a
//! min-max master).

pub mod ball;
pub mod cutmin;
pub mod kelley;
pub mod lp;
pub mod tail;

pub use ball::{concave_max_over_ball, linear_ball_bound, simplex_project, BallMax};
pub use cutmin::{CutMinProblem, CutMinReport, Term, W_BIG};
pub use kelley::{kelley_min_max, KelleyReport, Polyhedron};
pub use lp::{Lp, LpSolution, LpStatus};
pub use tail::{tail_sum_global_max, TailMax};
