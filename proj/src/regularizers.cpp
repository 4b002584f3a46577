#include "villani/regularizers.hpp"

#include <cmath>

namespace villani {
namespace {

void check_point(const ParamPoint& T, const RegularizerSpec& spec) {
  require(T.size() == spec.D(), "regularizer: point size does not match factor dims");
}

double block_power(double norm, double e) { return norm == 0.0 ? 0.0 : std::pow(norm, e); }

}  // namespace

void RegularizerSpec::validate() const {
  require(lambda >= 0.0 && std::isfinite(lambda), "regularizer: lambda must be >= 0");
  require(dims.first >= 0 && dims.second >= 0, "regularizer: negative block size");
  if (kind == RegKind::Power)
    require(epsilon > 0.0 && std::isfinite(epsilon), "regularizer: power needs epsilon > 0");
}

RegKind parse_reg_kind(const std::string& name) {
  if (name == "none") return RegKind::None;
  if (name == "log") return RegKind::LogAmplified;
  if (name == "power") return RegKind::Power;
  throw UsageError("unknown regularizer '" + name + "' (expected none, log or power)");
}

std::string reg_kind_name(RegKind kind) {
  switch (kind) {
    case RegKind::None: return "none";
    case RegKind::LogAmplified: return "log";
    case RegKind::Power: return "power";
  }
  return "none";
}

double reg_value(const ParamPoint& T, const RegularizerSpec& spec) {
  check_point(T, spec);
  if (spec.kind == RegKind::None || spec.lambda == 0.0) return 0.0;
  if (spec.kind == RegKind::LogAmplified) {
    const double q = T.squaredNorm();
    return 0.5 * spec.lambda * q * std::log1p(q);
  }
  const double n1 = T.head(spec.dims.first).norm();
  const double n2 = T.tail(spec.dims.second).norm();
  const double e = 2.0 + spec.epsilon;
  return 0.5 * spec.lambda * (block_power(n1, e) + block_power(n2, e));
}

ParamPoint reg_grad(const ParamPoint& T, const RegularizerSpec& spec) {
  check_point(T, spec);
  ParamPoint g = ParamPoint::Zero(T.size());
  if (spec.kind == RegKind::None || spec.lambda == 0.0) return g;
  if (spec.kind == RegKind::LogAmplified) {
    const double q = T.squaredNorm();
    g = spec.lambda * (std::log1p(q) + q / (1.0 + q)) * T;
    return g;
  }
  const double c = 0.5 * spec.lambda * (2.0 + spec.epsilon);
  const Index n1 = spec.dims.first;
  const Index n2 = spec.dims.second;
  g.head(n1) = c * block_power(T.head(n1).norm(), spec.epsilon) * T.head(n1);
  g.tail(n2) = c * block_power(T.tail(n2).norm(), spec.epsilon) * T.tail(n2);
  return g;
}

double reg_laplacian(const ParamPoint& T, const RegularizerSpec& spec) {
  check_point(T, spec);
  if (spec.kind == RegKind::None || spec.lambda == 0.0) return 0.0;
  const double lam = spec.lambda;
  if (spec.kind == RegKind::LogAmplified) {
    const double q = T.squaredNorm();
    const double D = static_cast<double>(spec.D());
    const double frac = q / (1.0 + q);
    return D * lam * (std::log1p(q) + frac) + 2.0 * lam * frac + 2.0 * lam * frac / (1.0 + q);
  }
  const double e = spec.epsilon;
  const double c = 0.5 * lam * (2.0 + e);
  const Index n1 = spec.dims.first;
  const Index n2 = spec.dims.second;
  return c * ((e + static_cast<double>(n1)) * block_power(T.head(n1).norm(), e) +
              (e + static_cast<double>(n2)) * block_power(T.tail(n2).norm(), e));
}

double power_laplacian_bound(const ParamPoint& T, const RegularizerSpec& spec) {
  check_point(T, spec);
  const double e = spec.epsilon;
  return 0.5 * spec.lambda * (2.0 + e) * (2.0 * e + static_cast<double>(spec.D())) *
         block_power(T.norm(), e);
}

}  // namespace villani
