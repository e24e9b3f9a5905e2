#pragma once

#include <functional>
#include <utility>
#include <vector>

namespace gendetect::perturb {

struct CalibrationSpec {
  double lower = 0, upper = 0;  // severity bounds
  bool log_scale = false;        // bisect in log(severity)
  bool decreasing = false;       // rate falls as severity grows (shot noise factor)
  double target = 0.5;
  double tolerance = 0.03;
  std::size_t max_iterations = 25;
};

struct CalibrationResult {
  double severity = 0;
  double rate = 0;
  std::size_t iterations = 0;  // rate evaluations inside the bisection
  bool clean_at_target = false;  // clean error already reached the target; severity 0
  std::vector<std::pair<double, double>> trace;  // (severity, rate) of every evaluation
};

// `rate(severity)` returns a misclassification rate; `clean_rate` is the rate
// without perturbation. Throws if the target is not bracketed by the bounds or
// bisection does not reach the tolerance within max_iterations.
CalibrationResult calibrate_severity(const std::function<double(double)>& rate, double clean_rate,
                                     const CalibrationSpec& spec);

}  // namespace gendetect::perturb
