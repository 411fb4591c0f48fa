#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>

namespace kserver {

// Separation oracle: return std::nullopt when x is feasible with slack gamma
// (x is then within distance gamma of the set); otherwise a cut normal a with
// ||a||_inf = 1 such that every point y of the set satisfies a.y <= a.x.
using SetOracle =
    std::function<std::optional<Eigen::VectorXd>(const Eigen::VectorXd&, double)>;

struct OracleConvexSet {
  int dimension = 0;
  double radius = 1.0;     // enclosing ball radius about `center`
  Eigen::VectorXd center;  // empty means the origin
  SetOracle oracle;
};

struct OracleConvexFunction {
  // Zeroth/first order oracles evaluate within the given tolerance.
  std::function<double(const Eigen::VectorXd&, double)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> gradient;
  double lipschitz = 1.0;
  double strong_convexity = 1.0;
  // Interval known to contain the minimum value over the feasible set.
  double value_lo = 0.0;
  double value_hi = 1.0;
};

struct EllipsoidResult {
  enum class Kind { NearPoint, SmallVolume };
  Kind kind;
  Eigen::VectorXd point;   // NearPoint: accepted by the oracle at gamma = epsilon
  Eigen::VectorXd center;  // final ellipsoid center
  Eigen::MatrixXd shape;   // final ellipsoid shape matrix
  long iterations = 0;
};

// Central-cut ellipsoid method: returns either a point the oracle accepts at
// gamma = epsilon, or a certificate that the set is negligible -- its volume
// is at most epsilon^(2d), or it is thinner in some direction than the
// arithmetic noise floor of the iteration (so it contains no ball wider than
// that noise).  Throws IterationBudgetExceeded if neither occurs within
// 10*d*(d+1)*ln(R/epsilon) + 100 iterations (signals an inconsistent oracle).
EllipsoidResult central_cut_ellipsoid(const OracleConvexSet& K, double epsilon);

// Level-set dichotomy for strongly convex minimization over an
// oracle-represented set: returns a point within epsilon of the minimizer.
// Binary-searches a threshold A on the function value, testing level sets
// {f <= A} intersected with K via the ellipsoid method.
Eigen::VectorXd minimize_convex(const OracleConvexFunction& f,
                                const OracleConvexSet& K, double epsilon);

}  // namespace kserver
