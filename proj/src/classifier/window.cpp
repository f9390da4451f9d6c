#include "pressfit/classifier/window.hpp"

#include <algorithm>
#include <cmath>

namespace pressfit::classifier {

int samples_for(double seconds) {
  return std::max(1, static_cast<int>(std::lround(seconds * kSampleRate)));
}

WrenchWindow make_window(const std::vector<TimedWrench> &log, std::size_t first, std::size_t n) {
  if (first + n > log.size()) throw Error("DurationTooLong", "window extends past the wrench log");
  WrenchWindow w(6, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const Wrench &s = log[first + i].wrench;
    w.col(static_cast<Eigen::Index>(i)) << s.force, s.torque;
  }
  return w;
}

WrenchWindow latest_window(const std::vector<TimedWrench> &log, std::size_t n) {
  const std::size_t k = std::min(n, log.size());
  return make_window(log, log.size() - k, k);
}

WrenchWindow mirror_window(const WrenchWindow &w) {
  WrenchWindow m = w;
  m.row(1) *= -1.0;
  m.row(3) *= -1.0;
  m.row(5) *= -1.0;
  return m;
}

} // namespace pressfit::classifier
