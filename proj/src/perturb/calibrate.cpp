#include "perturb/calibrate.hpp"

#include <cmath>
#include <sstream>

#include "common/error.hpp"
#include "common/log.hpp"

namespace gendetect::perturb {

CalibrationResult calibrate_severity(const std::function<double(double)>& rate, double clean_rate,
                                     const CalibrationSpec& spec) {
  require(spec.lower > 0 && spec.upper > spec.lower, ErrorCode::invalid_argument,
          "calibration bounds must satisfy 0 < lower < upper");
  CalibrationResult res;
  if (clean_rate >= spec.target) {
    log::warn("clean error rate " + std::to_string(clean_rate) +
              " already reaches the calibration target; using severity 0");
    res.clean_at_target = true;
    res.rate = clean_rate;
    return res;
  }
  auto eval = [&](double s) {
    const double r = rate(s);
    res.trace.emplace_back(s, r);
    return r;
  };
  auto within = [&](double r) { return std::abs(r - spec.target) <= spec.tolerance; };
  // weak end has the smaller rate
  double weak = spec.decreasing ? spec.upper : spec.lower;
  double strong = spec.decreasing ? spec.lower : spec.upper;
  const double r_weak = eval(weak);
  if (within(r_weak)) {
    res.severity = weak;
    res.rate = r_weak;
    return res;
  }
  const double r_strong = eval(strong);
  if (within(r_strong)) {
    res.severity = strong;
    res.rate = r_strong;
    return res;
  }
  if (!(r_weak < spec.target && r_strong > spec.target)) {
    std::ostringstream os;
    os << "calibration target " << spec.target << " unreachable: rate " << r_weak
       << " at severity " << weak << ", rate " << r_strong << " at severity " << strong;
    fail(ErrorCode::numeric, os.str());
  }
  for (res.iterations = 1; res.iterations <= spec.max_iterations; ++res.iterations) {
    const double mid = spec.log_scale ? std::sqrt(weak * strong) : 0.5 * (weak + strong);
    const double r = eval(mid);
    if (within(r)) {
      res.severity = mid;
      res.rate = r;
      return res;
    }
    (r < spec.target ? weak : strong) = mid;
  }
  std::ostringstream os;
  os << "calibration did not reach " << spec.target << " +- " << spec.tolerance << " within "
     << spec.max_iterations << " iterations (bracket " << weak << " .. " << strong << ")";
  fail(ErrorCode::numeric, os.str());
}

}  // namespace gendetect::perturb
