#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aoa/tensor.hpp"

namespace aoa {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
};

struct GradcheckResult {
  std::string name;
  std::size_t checked = 0;  // number of input elements compared
  double max_rel_error = 0.0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, 1e-3)
double gradcheck_relative_error(double analytic, double numeric);

// Compares the tape gradient of the scalar f() with central differences for
// every element of `inputs`, which must be leaves requiring gradient.
GradcheckResult check_gradient(const std::string& name, const std::function<Tensor()>& f,
                               const std::vector<Tensor>& inputs, const GradcheckOptions& options = {});

// Every differentiable op plus end-to-end XE losses for each model variant,
// at D=8, E=8, k=3, H=2, N=2, |vocab|=12, T=4.
std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& options = {});

}  // namespace aoa
