#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lbridge/rng.hpp"
#include "lbridge/tape.hpp"
#include "lbridge/tensor.hpp"

namespace lbridge {

// One registered differentiable computation, checkable against central finite
// differences. The flat point packs every differentiable input (operands or
// parameters) of the computation; build_f32 records the float graph on a tape
// and returns a scalar root, eval_f64 evaluates the same composition in double
// for the difference quotients.
struct GradCheckCase {
    std::string name;
    std::function<Tensor(Rng&)> sample_point;
    std::function<VarId(Tape&, const Tensor& flat, std::vector<VarId>& leaves)> build_f32;
    std::function<double(const DTensor& flat)> eval_f64;
};

// Max over coordinates of |analytic - finite_difference| / max(1, |fd|).
double grad_check(const GradCheckCase& check, const Tensor& point, double eps);

const std::vector<GradCheckCase>& standard_grad_checks();

// Lookup by op name; unknown names raise "no gradient registered".
const GradCheckCase& grad_check_case(const std::string& name);
double run_grad_check(const std::string& name, const Tensor& point, double eps);

}  // namespace lbridge
