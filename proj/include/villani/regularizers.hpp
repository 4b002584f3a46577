#pragma once

// Factor regularizers on a parameter point split into two blocks.

#include "villani/types.hpp"

#include <string>

namespace villani {

enum class RegKind { None, LogAmplified, Power };

struct RegularizerSpec {
  RegKind kind = RegKind::None;
  double lambda = 0.0;
  double epsilon = 0.0;  // Power only
  FactorDims dims;

  Index D() const { return dims.total(); }
  void validate() const;
};

RegKind parse_reg_kind(const std::string& name);  // none | log | power
std::string reg_kind_name(RegKind kind);

double reg_value(const ParamPoint& T, const RegularizerSpec& spec);
ParamPoint reg_grad(const ParamPoint& T, const RegularizerSpec& spec);
double reg_laplacian(const ParamPoint& T, const RegularizerSpec& spec);

/// (lambda/2)(2+eps)(2 eps + D)||T||^eps, an upper bound on the Power Laplacian.
double power_laplacian_bound(const ParamPoint& T, const RegularizerSpec& spec);

}  // namespace villani
