#include "kserver/solver.hpp"

#include <cmath>
#include <numbers>

#include "kserver/error.hpp"

namespace kserver {

namespace {

using LVec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

// Restore positive definiteness by flooring the spectrum; recomputes logdet.
void floor_spectrum(LMat& Q, long double& logdet) {
  Eigen::SelfAdjointEigenSolver<LMat> es((Q + Q.transpose()) * 0.5L);
  LVec ev = es.eigenvalues();
  long double floor_val = 1e-280L;
  const long double top = ev.maxCoeff();
  if (top > 0) floor_val = std::max(floor_val, top * 1e-36L);
  logdet = 0;
  for (int i = 0; i < ev.size(); ++i) {
    if (!(ev[i] >= floor_val)) ev[i] = floor_val;
    logdet += std::log(ev[i]);
  }
  Q = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

EllipsoidResult central_cut_ellipsoid(const OracleConvexSet& K, double epsilon) {
  const int d = K.dimension;
  if (d <= 0) throw Error("BadDimension", "dimension must be positive");
  if (!(epsilon > 0) || !(K.radius > 0))
    throw Error("BadTolerance", "epsilon and radius must be positive");
  if (K.center.size() != 0 && K.center.size() != d)
    throw Error("BadDimension", "center/dimension mismatch");
  if (!K.oracle) throw Error("BadOracle", "missing separation oracle");

  const long double R = static_cast<long double>(K.radius);
  LVec c = K.center.size() ? K.center.cast<long double>().eval() : LVec::Zero(d);
  LMat Q = LMat::Identity(d, d) * (R * R);
  long double logdet = 2.0L * d * std::log(R);

  const long double dl = static_cast<long double>(d);
  const long double ln_unit_ball_vol =
      0.5L * dl * std::log(std::numbers::pi_v<long double>) -
      std::lgamma(0.5L * dl + 1.0L);
  const long double log_target =
      2.0L * dl * std::log(static_cast<long double>(epsilon));
  // det multiplier per update: shrink factor of the central cut followed by
  // the (1 + 1/(4d^2)) blow-up that absorbs floating-point error.
  long double logdet_step;
  if (d == 1) {
    logdet_step = std::log(0.25L) + std::log(1.25L);
  } else {
    logdet_step = dl * std::log(dl * dl / (dl * dl - 1.0L)) +
                  std::log((dl - 1.0L) / (dl + 1.0L)) +
                  dl * std::log(1.0L + 1.0L / (4.0L * dl * dl));
  }

  const double cap_f =
      10.0 * d * (d + 1) * std::log(std::max(K.radius / epsilon, 2.72)) + 100.0;
  const long cap = static_cast<long>(cap_f);

  Eigen::VectorXd center_d(d);
  auto snapshot = [&](EllipsoidResult::Kind kind, long it) {
    EllipsoidResult r;
    r.kind = kind;
    r.point = center_d;
    r.center = center_d;
    r.shape = Q.cast<double>();
    r.iterations = it;
    return r;
  };

  for (long it = 0; it <= cap; ++it) {
    for (int i = 0; i < d; ++i) center_d[i] = static_cast<double>(c[i]);
    if (auto cut = K.oracle(center_d, epsilon); !cut) {
      return snapshot(EllipsoidResult::Kind::NearPoint, it);
    } else {
      if (cut->size() != d)
        throw Error("BadOracle", "cut dimension mismatch");
      if (0.5L * logdet + ln_unit_ball_vol <= log_target)
        return snapshot(EllipsoidResult::Kind::SmallVolume, it);

      LVec a = cut->cast<long double>();
      if (!a.allFinite()) throw Error("BadOracle", "cut is not finite");
      long double den2 = a.dot(Q * a);
      if (!(den2 > 0) || !std::isfinite(static_cast<double>(den2))) {
        floor_spectrum(Q, logdet);
        den2 = a.dot(Q * a);
        // The ellipsoid contains the set throughout, so a width that stays
        // below the arithmetic noise of the fat directions certifies the set
        // holds no ball wider than that noise: report it as negligibly small
        // rather than grind the collapsed direction further.
        if (!(den2 > 0))
          return snapshot(EllipsoidResult::Kind::SmallVolume, it);
      }
      const LVec b = (Q * a) / std::sqrt(den2);
      if (d == 1) {
        c -= b * 0.5L;
        Q *= 0.25L * 1.25L;
      } else {
        c -= b / (dl + 1.0L);
        Q = (dl * dl / (dl * dl - 1.0L)) *
            (Q - (2.0L / (dl + 1.0L)) * (b * b.transpose()));
        Q *= 1.0L + 1.0L / (4.0L * dl * dl);
        Q = ((Q + Q.transpose()) * 0.5L).eval();
      }
      logdet += logdet_step;
    }
  }
  throw Error("IterationBudgetExceeded",
              "no feasible point or volume certificate within the iteration cap");
}

Eigen::VectorXd minimize_convex(const OracleConvexFunction& f,
                                const OracleConvexSet& K, double epsilon) {
  if (!(epsilon > 0)) throw Error("BadTolerance", "epsilon must be positive");
  if (!f.value || !f.gradient) throw Error("BadOracle", "missing function oracle");
  if (!(f.strong_convexity > 0))
    throw Error("BadOracle", "strong convexity modulus must be positive");
  if (f.value_hi < f.value_lo)
    throw Error("Infeasible", "empty value interval");

  const double eps_prime = f.strong_convexity * epsilon * epsilon / 8.0;
  const double ell_eps = epsilon / 2.0;

  // Level-set probe: separate against K first, otherwise cut with the
  // gradient whenever the value sits at or above the threshold.
  auto probe = [&](double threshold) -> std::optional<Eigen::VectorXd> {
    OracleConvexSet level = K;
    level.oracle = [&, threshold](const Eigen::VectorXd& x,
                                  double gamma) -> std::optional<Eigen::VectorXd> {
      if (auto cut = K.oracle(x, gamma)) return cut;
      const double val_tol = std::min(gamma, eps_prime) / 4.0;
      if (f.value(x, val_tol) >= threshold) {
        Eigen::VectorXd g = f.gradient(x, val_tol);
        const double norm = g.lpNorm<Eigen::Infinity>();
        if (!(norm > 0)) return std::nullopt;  // flat point: minimizes f
        g /= norm;
        return g;
      }
      return std::nullopt;
    };
    auto result = central_cut_ellipsoid(level, ell_eps);
    if (result.kind == EllipsoidResult::Kind::NearPoint) return result.point;
    return std::nullopt;
  };

  double lo = f.value_lo;
  double hi = f.value_hi;
  // Witness always corresponds to the current upper endpoint.
  std::optional<Eigen::VectorXd> witness;
  while (hi - lo >= eps_prime / 2.0) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // interval exhausted in double precision
    if (auto x = probe(mid)) {
      witness = std::move(*x);
      hi = mid;
    } else {
      lo = mid;
    }
  }
  if (witness) return *witness;
  if (auto x = probe(hi)) return *x;
  throw Error("Infeasible", "no nonempty level set at the value upper bound");
}

}  // namespace kserver
